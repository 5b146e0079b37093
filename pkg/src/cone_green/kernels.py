"""Hot numeric kernels: layered DP convolution, walk stepping, ladder DP.

Every kernel exists twice: a numba ``@njit`` version and a vectorised
pure-numpy twin. The active path is chosen once at import time; setting
``CONE_GREEN_PURE_NUMPY=1`` forces the numpy path (used by the benchmark
and as a fallback when numba is unavailable). Both paths consume the same
pre-drawn uniforms and perform floating-point operations in the same
order, so results are bitwise identical.
"""

import math
import os

import numpy as np

TWO_PI = 2.0 * math.pi

# cone codes shared with cones.py
HALFSPACE = 0
ORTHANT = 1
WEDGE = 2


def _numba_requested() -> bool:
    flag = os.environ.get("CONE_GREEN_PURE_NUMPY", "").strip().lower()
    if flag in {"1", "true", "yes", "on"}:
        return False
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


USE_NUMBA = _numba_requested()

if USE_NUMBA:
    from numba import njit
else:
    def njit(*args, **kwargs):
        def wrap(f):
            return f
        return wrap


# ---------------------------------------------------------------------------
# membership tests (semantics fixed here for every consumer)
# ---------------------------------------------------------------------------

def inside_points(kind: int, beta: float, pts: np.ndarray) -> np.ndarray:
    """Vectorised strict-interior test for integer points, shape (..., d)."""
    if kind == HALFSPACE:
        return pts[..., -1] >= 1
    if kind == ORTHANT:
        return (pts >= 1).all(axis=-1)
    t = np.arctan2(pts[..., 1], pts[..., 0])
    t = np.where(t < 0.0, t + TWO_PI, t)
    origin = (pts[..., 0] == 0) & (pts[..., 1] == 0)
    return (t > 0.0) & (t < beta) & ~origin


@njit(cache=True, nogil=True)
def _inside(kind, beta, pos):
    d = pos.shape[0]
    if kind == HALFSPACE:
        return pos[d - 1] >= 1
    if kind == ORTHANT:
        for j in range(d):
            if pos[j] < 1:
                return False
        return True
    if pos[0] == 0 and pos[1] == 0:
        return False
    t = math.atan2(pos[1], pos[0])
    if t < 0.0:
        t += TWO_PI
    return 0.0 < t < beta


@njit(cache=True, nogil=True)
def _pick(cdf, u):
    # bisect_right on the atom cdf; cdf[-1] is exactly 1.0
    lo = 0
    hi = cdf.shape[0]
    while lo < hi:
        mid = (lo + hi) // 2
        if u < cdf[mid]:
            hi = mid
        else:
            lo = mid + 1
    if lo >= cdf.shape[0]:
        lo = cdf.shape[0] - 1
    return lo


def pick_atoms(cdf: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Numpy twin of ``_pick`` for whole arrays of uniforms."""
    idx = np.searchsorted(cdf, u, side="right")
    return np.minimum(idx, len(cdf) - 1)


# ---------------------------------------------------------------------------
# layered DP convolution: nxt(y) = mask(y) * sum_a probs[a] * prev(y - step_a)
# ---------------------------------------------------------------------------

@njit(cache=True, nogil=True)
def _dp_layer_1d(prev, nxt, fmask, steps, probs, a0, b0):
    n0 = prev.shape[0]
    k = probs.shape[0]
    for i in range(a0, b0):
        nxt[i] = 0.0
    for a in range(k):
        s = steps[a, 0]
        p = probs[a]
        i0 = max(a0, s)
        i1 = min(b0, n0 + s)
        for i in range(i0, i1):
            nxt[i] += p * prev[i - s]
    for i in range(a0, b0):
        nxt[i] *= fmask[i]


@njit(cache=True, nogil=True)
def _dp_layer_2d(prev, nxt, fmask, steps, probs, a0, b0, a1, b1):
    n0, n1 = prev.shape
    k = probs.shape[0]
    for i in range(a0, b0):
        for j in range(a1, b1):
            nxt[i, j] = 0.0
    for a in range(k):
        s0 = steps[a, 0]
        s1 = steps[a, 1]
        p = probs[a]
        i0 = max(a0, s0)
        i1 = min(b0, n0 + s0)
        j0 = max(a1, s1)
        j1 = min(b1, n1 + s1)
        for i in range(i0, i1):
            for j in range(j0, j1):
                nxt[i, j] += p * prev[i - s0, j - s1]
    for i in range(a0, b0):
        for j in range(a1, b1):
            nxt[i, j] *= fmask[i, j]


def _dp_layer_numpy(prev, nxt, fmask, steps, probs, lo, hi):
    d = prev.ndim
    box = tuple(slice(int(l), int(h)) for l, h in zip(lo, hi))
    nxt[box] = 0.0
    for a in range(len(probs)):
        rd = []
        wr = []
        empty = False
        for ax in range(d):
            s = int(steps[a, ax])
            c0 = max(int(lo[ax]) - s, 0)
            c1 = min(int(hi[ax]) - s, prev.shape[ax])
            if c0 >= c1:
                empty = True
                break
            rd.append(slice(c0, c1))
            wr.append(slice(c0 + s, c1 + s))
        if not empty:
            nxt[tuple(wr)] += probs[a] * prev[tuple(rd)]
    nxt[box] *= fmask[box]


def dp_layer(prev, nxt, fmask, steps, probs, lo, hi):
    """One killed-convolution layer over the active box [lo, hi).

    fmask is the 1.0/0.0 interior indicator; multiplying it in after the
    shifted accumulation keeps the per-cell operation order identical
    between the numba and numpy paths.
    """
    if USE_NUMBA and prev.ndim == 1:
        _dp_layer_1d(prev, nxt, fmask, steps, probs, int(lo[0]), int(hi[0]))
    elif USE_NUMBA and prev.ndim == 2:
        _dp_layer_2d(prev, nxt, fmask, steps, probs,
                     int(lo[0]), int(hi[0]), int(lo[1]), int(hi[1]))
    else:
        _dp_layer_numpy(prev, nxt, fmask, steps, probs, lo, hi)


# ---------------------------------------------------------------------------
# walk advancement (survival / harmonic estimation)
# ---------------------------------------------------------------------------

@njit(cache=True, nogil=True)
def _advance_block_numba(u, pos, alive, steps, cdf, kind, beta):
    nr, nb = u.shape
    d = pos.shape[1]
    for r in range(nr):
        if not alive[r]:
            continue
        for t in range(nb):
            a = _pick(cdf, u[r, t])
            for j in range(d):
                pos[r, j] += steps[a, j]
            if not _inside(kind, beta, pos[r]):
                alive[r] = False
                break


def _advance_block_numpy(u, pos, alive, steps, cdf, kind, beta):
    idx = pick_atoms(cdf, u)
    path = pos[:, None, :] + np.cumsum(steps[idx], axis=1)
    ok = np.logical_and.accumulate(inside_points(kind, beta, path), axis=1)
    pos[:] = path[:, -1, :]
    alive[:] = ok[:, -1]


def advance_block(u, pos, alive, steps, cdf, kind, beta):
    """Advance each (compacted, alive) replica by u.shape[1] steps in place."""
    if USE_NUMBA:
        _advance_block_numba(u, pos, alive, steps, cdf, kind, beta)
    else:
        _advance_block_numpy(u, pos, alive, steps, cdf, kind, beta)


# ---------------------------------------------------------------------------
# occupation counting, optionally under an exponential tilt
#
# Per step the log likelihood-ratio gains  logphi - h_coef * increment[axis];
# a visit to the target contributes exp(logw). With h_coef = logphi = 0 the
# weight is exactly 1.0 and the kernel counts plain visits.
# ---------------------------------------------------------------------------

@njit(cache=True, nogil=True)
def _green_block_numba(u, pos, logw, acc, alive, steps, cdf, kind, beta,
                       target, h_coef, axis, logphi, t0, min_time):
    nr, nb = u.shape
    d = pos.shape[1]
    weighted = h_coef != 0.0 or logphi != 0.0
    for r in range(nr):
        if not alive[r]:
            continue
        lw = logw[r]
        ac = acc[r]
        for t in range(nb):
            a = _pick(cdf, u[r, t])
            for j in range(d):
                pos[r, j] += steps[a, j]
            if not _inside(kind, beta, pos[r]):
                alive[r] = False
                break
            if weighted:
                lw += logphi - h_coef * steps[a, axis]
            if t0 + t + 1 >= min_time:
                hit = True
                for j in range(d):
                    if pos[r, j] != target[j]:
                        hit = False
                        break
                if hit:
                    ac += math.exp(lw)
        logw[r] = lw
        acc[r] = ac


def _green_block_numpy(u, pos, logw, acc, alive, steps, cdf, kind, beta,
                       target, h_coef, axis, logphi, t0, min_time):
    idx = pick_atoms(cdf, u)
    inc = steps[idx]
    path = pos[:, None, :] + np.cumsum(inc, axis=1)
    ok = np.logical_and.accumulate(inside_points(kind, beta, path), axis=1)
    hits = ok & (path == target).all(axis=2)
    gate = max(0, min(min_time - t0 - 1, hits.shape[1]))
    if gate:
        hits[:, :gate] = False
    rows, cols = np.nonzero(hits)
    if h_coef != 0.0 or logphi != 0.0:
        lw = logw[:, None] + np.cumsum(logphi - h_coef * inc[:, :, axis], axis=1)
        if rows.size:
            acc += np.bincount(rows, weights=np.exp(lw[rows, cols]),
                               minlength=len(acc))
        logw[:] = lw[:, -1]
    elif rows.size:
        acc += np.bincount(rows, minlength=len(acc)).astype(np.float64)
    pos[:] = path[:, -1, :]
    alive[:] = ok[:, -1]


def green_block(u, pos, logw, acc, alive, steps, cdf, kind, beta,
                target, h_coef, axis, logphi, t0=0, min_time=0):
    """Advance one block, accumulating (weighted) visits to the target at
    global times >= min_time; t0 is the global time at block start."""
    if USE_NUMBA:
        _green_block_numba(u, pos, logw, acc, alive, steps, cdf, kind, beta,
                           target, h_coef, axis, logphi, t0, min_time)
    else:
        _green_block_numpy(u, pos, logw, acc, alive, steps, cdf, kind, beta,
                           target, h_coef, axis, logphi, t0, min_time)


# ---------------------------------------------------------------------------
# first strict ascending ladder height via killed DP on (-inf, 0]
#
# buf holds the mass of walks that never entered (0, inf); level l <= 0 is
# stored at index l + L where L = len(buf) - 1. Mass stepping to l > 0 is
# harvested into pmf[l - 1].
# ---------------------------------------------------------------------------

@njit(cache=True, nogil=True)
def _ladder_layers_numba(vals, probs, horizon, buf, nxt, pmf):
    L = buf.shape[0] - 1
    k = vals.shape[0]
    maxdown = 0
    for a in range(k):
        if -vals[a] > maxdown:
            maxdown = -vals[a]
    lo = L  # lowest occupied index
    for _ in range(horizon):
        new_lo = lo - maxdown
        if new_lo < 0:
            new_lo = 0
        for i in range(new_lo, L + 1):
            nxt[i] = 0.0
        for a in range(k):
            v = vals[a]
            p = probs[a]
            for i in range(lo, L + 1):
                m = buf[i]
                if m == 0.0:
                    continue
                j = i + v
                if j > L:
                    pmf[j - L - 1] += p * m
                elif j >= 0:
                    nxt[j] += p * m
        lo = new_lo
        for i in range(lo, L + 1):
            buf[i] = nxt[i]


def _ladder_layers_numpy(vals, probs, horizon, buf, nxt, pmf):
    L = len(buf) - 1
    maxdown = int(max(-vals.min(), 0))
    lo = L
    for _ in range(horizon):
        new_lo = max(lo - maxdown, 0)
        nxt[new_lo:L + 1] = 0.0
        for a in range(len(probs)):
            v = int(vals[a])
            p = probs[a]
            src0, src1 = lo, L + 1
            dst0, dst1 = src0 + v, src1 + v
            if dst1 > L + 1:
                # mass exiting to levels 1..v
                exc0 = max(src0, L + 1 - v)
                pmf[exc0 + v - L - 1:v] += p * buf[exc0:src1]
                dst1 = L + 1
                src1 = L + 1 - v
            if dst0 < 0:
                src0 += -dst0
                dst0 = 0
            if src0 < src1:
                nxt[dst0:dst1] += p * buf[src0:src1]
        lo = new_lo
        buf[lo:L + 1] = nxt[lo:L + 1]


def ladder_layers(vals, probs, horizon, buf, nxt, pmf):
    if USE_NUMBA:
        _ladder_layers_numba(vals, probs, horizon, buf, nxt, pmf)
    else:
        _ladder_layers_numpy(vals, probs, horizon, buf, nxt, pmf)
