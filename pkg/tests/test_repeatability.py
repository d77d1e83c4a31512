
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from featbounds.detectors import Keypoint, KeypointSet, detect_harris
from featbounds.errors import EmptyReferenceError, MismatchError, ValidationError
from featbounds.geometry import Homography
from featbounds.imaging import Image, TransformSpec, synthesize_sequence
from featbounds.repeatability import RepeatabilityMatrix, build_matrix, match_keypoints, repeatability

from oracles import max_matching, mutual_unique_nn, naive_greedy

DIMS = (64, 64)
I = Homography.identity()


def kset(points, name="d"):
    return KeypointSet(tuple(Keypoint(float(x), float(y), 1.0) for x, y in points), name)


# -- examples ----------------------------------------------------------------


def test_identical_sets_score_one():
    pts = [(3, 4), (10, 10), (50.5, 20.25)]
    res = match_keypoints(kset(pts), kset(pts), I, DIMS, 4.0)
    assert res.score == 1.0 and res.n_rep == res.n_ref == 3
    assert all(d == 0 for _, _, d in res.pairs)


def test_four_vs_two():
    ref = kset([(10, 10), (20, 20), (30, 30), (40, 40)])
    tgt = kset([(10.5, 10), (20, 21)])
    res = match_keypoints(ref, tgt, I, DIMS, 4.0)
    assert (res.n_ref, res.n_rep, res.score) == (4, 2, 0.5)
    assert max_matching(ref.xy().tolist(), tgt.xy().tolist(), 4.0) == 2


def test_empty_target_scores_zero():
    assert repeatability(kset([(1, 1)]), kset([]), I, DIMS, 4.0) == 0.0


def test_far_apart_scores_zero():
    assert repeatability(kset([(1, 1), (2, 2)]), kset([(60, 60)]), I, DIMS, 4.0) == 0.0


def test_empty_reference_raises():
    with pytest.raises(EmptyReferenceError):
        match_keypoints(kset([]), kset([(1, 1)]), I, DIMS, 4.0)


def test_only_common_region_counts():
    shift = Homography(np.array([[1, 0, -32], [0, 1, 0], [0, 0, 1]], float))
    ref = kset([(10, 10), (40, 10), (50, 30)])  # first one projects to x = -22
    tgt = kset([(8, 10), (18, 30)])
    res = match_keypoints(ref, tgt, shift, DIMS, 4.0)
    assert res.n_ref == 2 and res.n_rep == 2


def test_epsilon_must_be_positive():
    with pytest.raises(ValidationError):
        repeatability(kset([(1, 1)]), kset([(1, 1)]), I, DIMS, 0.0)


def test_tie_break_by_reference_then_target():
    ref = kset([(10, 10), (12, 10)])
    tgt = kset([(11, 10)])
    res = match_keypoints(ref, tgt, I, DIMS, 4.0)
    assert res.pairs == ((0, 0, 1.0),)


def test_scale_gate():
    ref = KeypointSet((Keypoint(10, 10, 2.0),), "d")
    near_small = KeypointSet((Keypoint(10, 10, 1.0),), "d")
    near_ok = KeypointSet((Keypoint(10, 10, 2.9),), "d")
    assert repeatability(ref, near_small, I, DIMS, 4.0, scale_gate=False) == 1.0
    assert repeatability(ref, near_small, I, DIMS, 4.0, scale_gate=True) == 0.0
    assert repeatability(ref, near_ok, I, DIMS, 4.0, scale_gate=True) == 1.0


def test_scale_gate_uses_homography_zoom():
    zoom = Homography(np.diag([2.0, 2.0, 1.0]))
    ref = KeypointSet((Keypoint(10, 10, 2.0),), "d")
    tgt = KeypointSet((Keypoint(20, 20, 4.0),), "d")
    assert repeatability(ref, tgt, zoom, DIMS, 1.0, scale_gate=True) == 1.0


# -- properties --------------------------------------------------------------

point = st.tuples(st.integers(0, 80).map(lambda v: v / 4), st.integers(0, 80).map(lambda v: v / 4))
point_sets = st.lists(point, min_size=1, max_size=10)


@settings(max_examples=200, deadline=None)
@given(point_sets, st.lists(point, max_size=10), st.sampled_from([0.5, 1.0, 2.0, 4.0]))
def test_greedy_against_oracles(ref, tgt, eps):
    res = match_keypoints(kset(ref), kset(tgt), I, DIMS, eps)
    assert res.n_rep == naive_greedy(ref, tgt, eps)
    best = max_matching(ref, tgt, eps)
    assert res.n_rep <= best
    if mutual_unique_nn(ref, tgt):
        assert res.n_rep == best
    assert len({i for i, _, _ in res.pairs}) == len({j for _, j, _ in res.pairs}) == res.n_rep
    assert 0.0 <= res.score <= 1.0


@settings(max_examples=100, deadline=None)
@given(point_sets, st.lists(point, max_size=10), st.floats(0.1, 5), st.floats(0.1, 5))
def test_monotone_in_epsilon(ref, tgt, e1, e2):
    e1, e2 = sorted((e1, e2))
    assert repeatability(kset(ref), kset(tgt), I, DIMS, e1) <= repeatability(kset(ref), kset(tgt), I, DIMS, e2)


def test_symmetric_perfect_pairing():
    ref = [(10, 10), (30, 12), (50, 40)]
    tgt = [(11, 10), (30, 13.5), (49, 41)]
    fwd = repeatability(kset(ref), kset(tgt), I, DIMS, 4.0)
    back = repeatability(kset(tgt), kset(ref), I, DIMS, 4.0)
    assert fwd == back == 1.0


# -- matrix ------------------------------------------------------------------


def _scenes(n):
    rng = np.random.default_rng(9)
    from featbounds.imaging import textured_scene

    return [textured_scene(rng, 64, 64) for _ in range(n)]


def test_build_matrix_shape_and_identity_column():
    spec = TransformSpec.default("blur")
    seqs = [synthesize_sequence(img, spec, f"s{i}") for i, img in enumerate(_scenes(5))]
    kps = {(s.scene_id, k): detect_harris(v.image) for s in seqs for k, v in enumerate(s.variants)}
    m = build_matrix(seqs[::-1], kps, 4.0, "harris")
    assert m.shape == (5, 10)
    assert m.scene_ids == tuple(f"s{i}" for i in range(5))
    assert np.all(m.scores[:, 0] == 1.0)
    assert np.all((m.scores >= 0) & (m.scores <= 1))


def test_build_matrix_excludes_empty_reference():
    spec = TransformSpec("brightness", (0, 50))
    blank = Image(np.zeros((32, 32), np.uint8))
    seqs = [synthesize_sequence(img, spec, f"s{i}") for i, img in enumerate(_scenes(2))]
    seqs.append(synthesize_sequence(blank, spec, "blank"))
    kps = {(s.scene_id, k): detect_harris(v.image) for s in seqs for k, v in enumerate(s.variants)}
    m = build_matrix(seqs, kps, 4.0)
    assert m.excluded == ("blank",)
    assert m.scene_ids == ("s0", "s1")


def test_build_matrix_errors():
    a = synthesize_sequence(_scenes(1)[0], TransformSpec("blur", (0, 1)), "a")
    b = synthesize_sequence(_scenes(1)[0], TransformSpec("blur", (0, 2)), "b")
    kps = {(s.scene_id, k): detect_harris(v.image) for s in (a, b) for k, v in enumerate(s.variants)}
    with pytest.raises(MismatchError):
        build_matrix([a, b], kps)
    with pytest.raises(ValidationError, match="missing"):
        build_matrix([a], {("a", 0): kps[("a", 0)]})


def test_matrix_csv_round_trip(tmp_path):
    m = RepeatabilityMatrix("d", "jpeg", (0, 10, 85), ("a", "b"), np.array([[1, 0.5, 1 / 3], [1, 0.25, 0]]), ("c",))
    assert m.to_csv().splitlines()[0] == "scene_id,0,10,85"
    m.save(tmp_path / "m.csv", tmp_path / "x.json")
    back = RepeatabilityMatrix.load(tmp_path / "m.csv", tmp_path / "x.json", "d", "jpeg")
    assert np.array_equal(back.scores, m.scores) and back.excluded == ("c",) and back.amounts == m.amounts


def test_matrix_rejects_out_of_range():
    with pytest.raises(ValidationError):
        RepeatabilityMatrix("d", "blur", (0,), ("a",), np.array([[1.5]]))
