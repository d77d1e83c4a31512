import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from featbounds.bounds import compute_bounds, max_curve, median_curve, min_curve, region_areas
from featbounds.errors import ValidationError
from featbounds.repeatability import RepeatabilityMatrix

EXAMPLE = np.array([[0.9, 0.5], [0.7, 0.3], [0.8, 0.4]])


def trapz(y, x):
    return sum((x[i + 1] - x[i]) * (y[i + 1] + y[i]) / 2 for i in range(len(x) - 1))


def test_example_curves():
    assert max_curve(EXAMPLE).tolist() == [0.9, 0.5]
    assert min_curve(EXAMPLE).tolist() == [0.7, 0.3]
    assert median_curve(EXAMPLE).tolist() == [0.8, 0.4]


def test_even_median_averages_middle_pair():
    assert median_curve(np.array([[0.2], [0.8], [0.4], [0.6]])).tolist() == [0.5]


def test_single_scene_and_constant():
    row = np.array([[0.3, 0.1, 0.0]])
    for f in (max_curve, min_curve, median_curve):
        assert f(row).tolist() == row[0].tolist()
        assert f(np.full((4, 3), 0.6)).tolist() == [0.6] * 3


def test_empty_matrix_rejected():
    with pytest.raises(ValidationError):
        max_curve(np.zeros((0, 3)))


def test_area_examples():
    assert region_areas([0, 1, 2], [0.5] * 3, [0.5] * 3) == (0.0, 0.5)
    assert region_areas([0, 10], [1, 1], [1.0, 0.0]) == (0.5, 0.5)
    op, _ = region_areas([0, 3, 4], [0.2, 0.7, 0.1], [0.2, 0.7, 0.1])
    assert op == 0.0


def test_areas_use_normalized_amount_axis():
    # uneven spacing: the first interval covers 3/4 of the axis
    _, g = region_areas([0, 3, 4], [1, 1, 1], [1.0, 0.0, 0.0])
    assert g == pytest.approx(0.375, abs=1e-15)


def test_compute_bounds_and_csv():
    m = RepeatabilityMatrix("d", "blur", (0, 0.5), ("a", "b", "c"), EXAMPLE)
    b = compute_bounds(m)
    assert b.operating_area == pytest.approx(0.2) and b.guarantee_area == pytest.approx(0.5)
    lines = b.to_csv().splitlines()
    assert lines[0] == "amount,max,median,min"
    assert lines[1] == "0,0.9,0.8,0.7"
    one = compute_bounds(RepeatabilityMatrix("d", "blur", (0,), ("a",), [[1.0]]))
    assert np.isnan(one.operating_area)


matrices = st.integers(1, 12).flatmap(
    lambda n: st.integers(2, 8).flatmap(
        lambda m: arrays(np.float64, (n, m), elements=st.floats(0, 1, allow_nan=False))
    )
)


@settings(max_examples=200, deadline=None)
@given(matrices, st.randoms(use_true_random=False))
def test_order_and_permutation(scores, rnd):
    hi, med, lo = max_curve(scores), median_curve(scores), min_curve(scores)
    assert np.all(lo <= med) and np.all(med <= hi)
    perm = list(range(scores.shape[0]))
    rnd.shuffle(perm)
    shuffled = scores[perm]
    for f in (max_curve, median_curve, min_curve):
        assert np.array_equal(f(shuffled), f(scores))


@settings(max_examples=200, deadline=None)
@given(matrices)
def test_region_nesting(scores):
    amounts = np.arange(scores.shape[1], dtype=float)
    hi, lo = max_curve(scores), min_curve(scores)
    op, g = region_areas(amounts, hi, lo)
    x = amounts / amounts[-1]
    assert 0 <= g <= 1 and 0 <= op <= 1
    assert op + g <= 1 + 1e-12
    assert op + g == pytest.approx(trapz(hi, x), abs=1e-12)
    assert g == pytest.approx(trapz(lo, x), abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.integers(2, 8), elements=st.floats(0, 1)), st.integers(1, 10))
def test_identical_rows_have_zero_operating_area(row, n):
    scores = np.tile(row, (n, 1))
    op, _ = region_areas(np.arange(row.size), max_curve(scores), min_curve(scores))
    assert op == 0.0
