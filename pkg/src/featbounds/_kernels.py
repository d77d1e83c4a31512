"""Inner loops with two interchangeable backends.

Every kernel exists twice: a numba ``@njit`` version and a pure-numpy
version. The public names at the bottom of this module dispatch to one of
them. numba is used when it imports cleanly and ``FEATBOUNDS_DISABLE_NUMBA``
is unset, empty, or ``0``. Both backends accumulate in the same order, so
their outputs agree bit for bit; ``tests/test_kernels.py`` holds them to it.
"""

from __future__ import annotations

import os

import numpy as np

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    numba = None
    HAVE_NUMBA = False

ENV_FLAG = "FEATBOUNDS_DISABLE_NUMBA"


def _disabled_by_env() -> bool:
    return os.environ.get(ENV_FLAG, "").strip().lower() not in ("", "0", "false", "no")


USE_NUMBA = HAVE_NUMBA and not _disabled_by_env()


def backend_name() -> str:
    return "numba" if USE_NUMBA else "numpy"


# ---------------------------------------------------------------------------
# numpy backend
# ---------------------------------------------------------------------------


def convolve_rows_numpy(src: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    h, w = src.shape
    r = kernel.shape[0] // 2
    padded = np.pad(src, ((0, 0), (r, r)), mode="edge")
    acc = np.zeros((h, w), dtype=np.float64)
    for t in range(kernel.shape[0]):
        acc += kernel[t] * padded[:, t : t + w]
    return acc


def _shifted(arr: np.ndarray, dy: int, dx: int, fill: float) -> np.ndarray:
    """out[y, x] = arr[y + dy, x + dx], ``fill`` outside the array."""
    h, w = arr.shape
    out = np.full((h, w), fill, dtype=arr.dtype)
    ys, ye = max(0, -dy), min(h, h - dy)
    xs, xe = max(0, -dx), min(w, w - dx)
    if ys < ye and xs < xe:
        out[ys:ye, xs:xe] = arr[ys + dy : ye + dy, xs + dx : xe + dx]
    return out


def nms_mask_numpy(resp: np.ndarray, radius: int, threshold: float) -> np.ndarray:
    keep = resp > threshold
    for dy in range(-radius, radius + 1):
        for dx in range(-radius, radius + 1):
            if dy == 0 and dx == 0:
                continue
            nb = _shifted(resp, dy, dx, -np.inf)
            if dy < 0 or (dy == 0 and dx < 0):
                keep &= nb < resp
            else:
                keep &= nb <= resp
    return keep


def scale_space_extrema_numpy(dog: np.ndarray, threshold: float) -> np.ndarray:
    n, h, w = dog.shape
    mask = np.zeros(dog.shape, dtype=np.bool_)
    if n < 3 or h < 3 or w < 3:
        return mask
    core = dog[1:-1, 1:-1, 1:-1]
    is_max = np.abs(core) >= threshold
    is_min = is_max.copy()
    for dz in (-1, 0, 1):
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                if dz == 0 and dy == 0 and dx == 0:
                    continue
                nb = dog[1 + dz : n - 1 + dz, 1 + dy : h - 1 + dy, 1 + dx : w - 1 + dx]
                is_max &= core > nb
                is_min &= core < nb
    mask[1:-1, 1:-1, 1:-1] = is_max | is_min
    return mask


def greedy_match_numpy(ref_xy, tgt_xy, eps, ref_ok, ref_scale, tgt_scale, gate):
    dx = ref_xy[:, 0][:, None] - tgt_xy[:, 0][None, :]
    dy = ref_xy[:, 1][:, None] - tgt_xy[:, 1][None, :]
    dist = np.sqrt(dx * dx + dy * dy)
    ok = (dist <= eps) & ref_ok[:, None]
    if gate > 0.0:
        ratio = tgt_scale[None, :] / ref_scale[:, None]
        ok &= (ratio >= 1.0 / gate) & (ratio <= gate)
    ii, jj = np.nonzero(ok)
    dd = dist[ii, jj]
    order = np.argsort(dd, kind="stable")
    used_r = np.zeros(ref_xy.shape[0], dtype=np.bool_)
    used_t = np.zeros(tgt_xy.shape[0], dtype=np.bool_)
    out_i, out_j, out_d = [], [], []
    for c in order:
        i, j = ii[c], jj[c]
        if used_r[i] or used_t[j]:
            continue
        used_r[i] = True
        used_t[j] = True
        out_i.append(i)
        out_j.append(j)
        out_d.append(dd[c])
    return (
        np.asarray(out_i, dtype=np.int64),
        np.asarray(out_j, dtype=np.int64),
        np.asarray(out_d, dtype=np.float64),
    )


# ---------------------------------------------------------------------------
# numba backend
# ---------------------------------------------------------------------------

if HAVE_NUMBA:
    _jit = numba.njit(cache=True, nogil=True)

    @_jit
    def convolve_rows_numba(src, kernel):
        h, w = src.shape
        r = kernel.shape[0] // 2
        n = kernel.shape[0]
        out = np.empty((h, w), dtype=np.float64)
        for y in range(h):
            row = src[y]
            for x in range(w):
                acc = 0.0
                if x >= r and x + r < w:
                    base = x - r
                    for t in range(n):
                        acc += kernel[t] * row[base + t]
                else:
                    for t in range(n):
                        xx = x + t - r
                        if xx < 0:
                            xx = 0
                        elif xx > w - 1:
                            xx = w - 1
                        acc += kernel[t] * row[xx]
                out[y, x] = acc
        return out

    @_jit
    def nms_mask_numba(resp, radius, threshold):
        h, w = resp.shape
        keep = np.zeros((h, w), dtype=np.bool_)
        for y in range(h):
            for x in range(w):
                v = resp[y, x]
                if not v > threshold:
                    continue
                ok = True
                for dy in range(-radius, radius + 1):
                    yy = y + dy
                    if yy < 0 or yy >= h:
                        continue
                    for dx in range(-radius, radius + 1):
                        xx = x + dx
                        if xx < 0 or xx >= w or (dy == 0 and dx == 0):
                            continue
                        u = resp[yy, xx]
                        if dy < 0 or (dy == 0 and dx < 0):
                            if u >= v:
                                ok = False
                                break
                        elif u > v:
                            ok = False
                            break
                    if not ok:
                        break
                keep[y, x] = ok
        return keep

    @_jit
    def scale_space_extrema_numba(dog, threshold):
        n, h, w = dog.shape
        mask = np.zeros((n, h, w), dtype=np.bool_)
        for z in range(1, n - 1):
            for y in range(1, h - 1):
                for x in range(1, w - 1):
                    v = dog[z, y, x]
                    if not abs(v) >= threshold:
                        continue
                    is_max = True
                    is_min = True
                    for dz in range(-1, 2):
                        for dy in range(-1, 2):
                            for dx in range(-1, 2):
                                if dz == 0 and dy == 0 and dx == 0:
                                    continue
                                u = dog[z + dz, y + dy, x + dx]
                                if not v > u:
                                    is_max = False
                                if not v < u:
                                    is_min = False
                    mask[z, y, x] = is_max or is_min
        return mask

    @_jit
    def greedy_match_numba(ref_xy, tgt_xy, eps, ref_ok, ref_scale, tgt_scale, gate):
        n = ref_xy.shape[0]
        m = tgt_xy.shape[0]
        cap = 16
        ci = np.empty(cap, dtype=np.int64)
        cj = np.empty(cap, dtype=np.int64)
        cd = np.empty(cap, dtype=np.float64)
        k = 0
        for i in range(n):
            if not ref_ok[i]:
                continue
            for j in range(m):
                dx = ref_xy[i, 0] - tgt_xy[j, 0]
                dy = ref_xy[i, 1] - tgt_xy[j, 1]
                d = np.sqrt(dx * dx + dy * dy)
                if not d <= eps:
                    continue
                if gate > 0.0:
                    ratio = tgt_scale[j] / ref_scale[i]
                    if ratio < 1.0 / gate or ratio > gate:
                        continue
                if k == cap:
                    cap *= 2
                    ci2 = np.empty(cap, dtype=np.int64)
                    cj2 = np.empty(cap, dtype=np.int64)
                    cd2 = np.empty(cap, dtype=np.float64)
                    ci2[:k] = ci[:k]
                    cj2[:k] = cj[:k]
                    cd2[:k] = cd[:k]
                    ci, cj, cd = ci2, cj2, cd2
                ci[k] = i
                cj[k] = j
                cd[k] = d
                k += 1
        order = np.argsort(cd[:k], kind="mergesort")
        used_r = np.zeros(n, dtype=np.bool_)
        used_t = np.zeros(m, dtype=np.bool_)
        oi = np.empty(min(n, m), dtype=np.int64)
        oj = np.empty(min(n, m), dtype=np.int64)
        od = np.empty(min(n, m), dtype=np.float64)
        p = 0
        for c in order:
            i = ci[c]
            j = cj[c]
            if used_r[i] or used_t[j]:
                continue
            used_r[i] = True
            used_t[j] = True
            oi[p] = i
            oj[p] = j
            od[p] = cd[c]
            p += 1
        return oi[:p], oj[:p], od[:p]

else:  # pragma: no cover
    convolve_rows_numba = nms_mask_numba = None
    scale_space_extrema_numba = greedy_match_numba = None


NUMPY_KERNELS = {
    "convolve_rows": convolve_rows_numpy,
    "nms_mask": nms_mask_numpy,
    "scale_space_extrema": scale_space_extrema_numpy,
    "greedy_match": greedy_match_numpy,
}
NUMBA_KERNELS = {
    "convolve_rows": convolve_rows_numba,
    "nms_mask": nms_mask_numba,
    "scale_space_extrema": scale_space_extrema_numba,
    "greedy_match": greedy_match_numba,
}


def kernels(backend: str | None = None) -> dict:
    """Kernel table for ``backend`` ("numba", "numpy", or the active default)."""
    backend = backend or backend_name()
    if backend == "numba":
        if not HAVE_NUMBA:
            raise RuntimeError("numba backend requested but numba is not importable")
        return NUMBA_KERNELS
    if backend == "numpy":
        return NUMPY_KERNELS
    raise ValueError(f"unknown backend {backend!r}")


# Active dispatch; resolved once at import.
_ACTIVE = kernels()


def convolve_rows(src: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """1-D correlation along axis 1 with replicated borders (float64 in/out)."""
    return _ACTIVE["convolve_rows"](
        np.ascontiguousarray(src, dtype=np.float64), np.ascontiguousarray(kernel, dtype=np.float64)
    )


def separable_filter(src: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Rows first, then columns, both with the same symmetric 1-D kernel."""
    tmp = convolve_rows(src, kernel)
    return convolve_rows(tmp.T, kernel).T.copy()


def nms_mask(resp: np.ndarray, radius: int, threshold: float) -> np.ndarray:
    """Square-window maxima above ``threshold``; on plateaus the first pixel in raster order wins."""
    return _ACTIVE["nms_mask"](np.ascontiguousarray(resp, dtype=np.float64), int(radius), float(threshold))


def scale_space_extrema(dog: np.ndarray, threshold: float) -> np.ndarray:
    """Strict 26-neighbour extrema of a (levels, h, w) stack with ``|value| >= threshold``."""
    return _ACTIVE["scale_space_extrema"](np.ascontiguousarray(dog, dtype=np.float64), float(threshold))


def greedy_match(ref_xy, tgt_xy, eps, ref_ok, ref_scale=None, tgt_scale=None, gate=0.0):
    """One-to-one matching by ascending distance; ties by reference then target index."""
    ref_xy = np.ascontiguousarray(ref_xy, dtype=np.float64).reshape(-1, 2)
    tgt_xy = np.ascontiguousarray(tgt_xy, dtype=np.float64).reshape(-1, 2)
    if ref_scale is None:
        ref_scale = np.ones(ref_xy.shape[0])
    if tgt_scale is None:
        tgt_scale = np.ones(tgt_xy.shape[0])
    return _ACTIVE["greedy_match"](
        ref_xy,
        tgt_xy,
        float(eps),
        np.ascontiguousarray(ref_ok, dtype=np.bool_),
        np.ascontiguousarray(ref_scale, dtype=np.float64),
        np.ascontiguousarray(tgt_scale, dtype=np.float64),
        float(gate),
    )
