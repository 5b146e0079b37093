"""Exact layered dynamic programming for killed transition probabilities.

The killed kernel p_n(y) = P(x + S(n) = y, tau_x > n) is built by forward
convolution over a dense window, zeroing mass outside the cone after every
step. Layers live on a window [x + n*min_step, x + n*max_step] intersected
with the cone; only the two rotating layers are kept unless snapshots are
requested. All arithmetic is float64; truncated Green values are partial
sums of layers (the n = 0 term is included).
"""

import os
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .quadrature import profile_integral

DEFAULT_MEMCAP = 4 << 30
MEMCAP_ENV = "CONE_GREEN_MEMCAP_BYTES"


class MemoryCapError(MemoryError):
    def __init__(self, required: int, cap: int):
        super().__init__(
            f"DP window needs {required} bytes but the memory cap is {cap} "
            f"(raise {MEMCAP_ENV} or shrink the horizon)")
        self.required = required
        self.cap = cap


def _memcap(memcap):
    if memcap is not None:
        return int(memcap)
    env = os.environ.get(MEMCAP_ENV, "").strip()
    return int(env) if env else DEFAULT_MEMCAP


@dataclass
class GreenEstimate:
    value: float
    stat_error: float
    horizon: int
    tail_estimate: float
    method: str


@dataclass
class KilledKernel:
    x: np.ndarray
    horizon: int
    lo: np.ndarray                  # window lower corner
    shape: tuple
    survival: np.ndarray            # P(tau_x > n), n = 0..horizon
    layers: dict = field(default_factory=dict)   # snapshot n -> dense layer

    @property
    def killed_mass(self) -> np.ndarray:
        return 1.0 - self.survival

    def prob(self, n: int, y) -> float:
        """p_n(y); exact 0 for points outside the window."""
        if n not in self.layers:
            raise KeyError(f"layer {n} was not kept (snapshots={sorted(self.layers)})")
        idx = np.asarray(y, dtype=np.int64) - self.lo
        if np.any(idx < 0) or np.any(idx >= np.asarray(self.shape)):
            return 0.0
        return float(self.layers[n][tuple(idx)])


def _window(dist, cone, x, horizon):
    lo_step, hi_step = dist.step_bounds()
    x = np.asarray(x, dtype=np.int64)
    lo = x + horizon * lo_step
    hi = x + horizon * hi_step
    if cone is not None:
        lo, hi = cone.tighten_box(lo, hi)
    shape = tuple(int(h - l + 1) for l, h in zip(lo, hi))
    return x, lo, shape


def _run(dist, cone, x, horizon, *, snapshots=(), targets=None,
         target_horizons=None, trace=None, memcap=None):
    """Shared DP driver. Returns survival, snapshot layers, per-target
    partial Green sums, and an optional per-layer trace at one point."""
    x, lo, shape = _window(dist, cone, x, horizon)
    if cone is not None and not cone.contains(x):
        raise ValueError(f"start {x.tolist()} is not strictly inside the cone")

    cells = int(np.prod(shape))
    needed = cells * (8 * 2 + 1) + 8 * cells * len(set(snapshots))
    cap = _memcap(memcap)
    if needed > cap:
        raise MemoryCapError(needed, cap)

    if cone is None:
        fmask = np.ones(shape)
    else:
        fmask = cone.grid_mask(lo, shape).astype(np.float64)
    prev = np.zeros(shape)
    nxt = np.zeros(shape)
    xi = tuple(int(t) for t in (x - lo))
    prev[xi] = 1.0

    steps = dist.atoms
    probs = dist.probs
    lo_step, hi_step = dist.step_bounds()
    grow_lo = np.minimum(lo_step, 0)
    grow_hi = np.maximum(hi_step, 0)
    alo = np.array(xi, dtype=np.int64)
    ahi = alo + 1

    survival = np.empty(horizon + 1)
    survival[0] = 1.0
    snapshots = set(int(s) for s in snapshots)
    layers = {}
    if 0 in snapshots:
        layers[0] = prev.copy()

    tidx = []
    tvals = None
    thoriz = None
    if targets is not None:
        thoriz = ([horizon] * len(targets) if target_horizons is None
                  else [int(h) for h in target_horizons])
        tvals = np.zeros(len(targets))
        for i, y in enumerate(targets):
            idx = np.asarray(y, dtype=np.int64) - lo
            if np.all(idx >= 0) and np.all(idx < np.asarray(shape)):
                tidx.append(tuple(int(t) for t in idx))
            else:
                tidx.append(None)  # outside the window: identically 0
            if tidx[i] is not None and thoriz[i] >= 0:
                tvals[i] += prev[tidx[i]]

    tr = None
    tr_idx = None
    if trace is not None:
        idx = np.asarray(trace, dtype=np.int64) - lo
        if np.all(idx >= 0) and np.all(idx < np.asarray(shape)):
            tr_idx = tuple(int(t) for t in idx)
        tr = np.zeros(horizon + 1)
        if tr_idx is not None:
            tr[0] = prev[tr_idx]

    box = tuple(slice(int(a), int(b)) for a, b in zip(alo, ahi))
    for n in range(1, horizon + 1):
        alo = np.maximum(alo + grow_lo, 0)
        ahi = np.minimum(ahi + grow_hi, np.asarray(shape, dtype=np.int64))
        kernels.dp_layer(prev, nxt, fmask, steps, probs, alo, ahi)
        box = tuple(slice(int(a), int(b)) for a, b in zip(alo, ahi))
        survival[n] = float(nxt[box].sum())
        if n in snapshots:
            layers[n] = nxt.copy()
        if tvals is not None:
            for i, ix in enumerate(tidx):
                if ix is not None and n <= thoriz[i]:
                    tvals[i] += nxt[ix]
        if tr is not None and tr_idx is not None:
            tr[n] = nxt[tr_idx]
        prev, nxt = nxt, prev

    return {
        "x": x, "lo": lo, "shape": shape, "survival": survival,
        "layers": layers, "target_values": tvals, "trace": tr,
    }


# ---------------------------------------------------------------------------
# public operations
# ---------------------------------------------------------------------------

def killed_kernel(dist, cone, x, horizon, *, snapshots=None,
                  memcap=None) -> KilledKernel:
    """Exact killed layers; snapshots default to the final layer only."""
    snaps = {horizon} if snapshots is None else set(snapshots)
    out = _run(dist, cone, x, horizon, snapshots=snaps, memcap=memcap)
    return KilledKernel(x=out["x"], horizon=horizon, lo=out["lo"],
                        shape=out["shape"], survival=out["survival"],
                        layers=out["layers"])


def survival(dist, cone, x, horizon, *, memcap=None) -> np.ndarray:
    """P(tau_x > n) for n = 0..horizon."""
    return _run(dist, cone, x, horizon, memcap=memcap)["survival"]


def green_truncated(dist, cone, x, y, horizon, *, memcap=None,
                    trace=False):
    """Partial Green sum at a single endpoint, with an LLT tail surrogate."""
    out = _run(dist, cone, x, horizon, targets=[y],
               trace=(y if trace else None), memcap=memcap)
    value = float(out["target_values"][0])
    est = GreenEstimate(value=value, stat_error=0.0, horizon=horizon,
                        tail_estimate=_tail_surrogate(cone, x, y, horizon),
                        method="dp")
    if trace:
        return est, out["trace"], out["survival"]
    return est


def green_many(dist, cone, x, targets, horizons, *, memcap=None):
    """One DP pass collecting partial Green sums at several endpoints,
    each with its own truncation horizon."""
    horizons = [int(h) for h in horizons]
    out = _run(dist, cone, x, max(horizons), targets=list(targets),
               target_horizons=horizons, memcap=memcap)
    return [GreenEstimate(value=float(v), stat_error=0.0, horizon=h,
                          tail_estimate=_tail_surrogate(cone, x, y, h),
                          method="dp")
            for v, h, y in zip(out["target_values"], horizons, targets)]


def green_free_truncated(dist, x, y, horizon, *, memcap=None) -> GreenEstimate:
    """Unkilled truncated Green function G^(t): same convolution, no cone."""
    out = _run(dist, None, x, horizon, targets=[y], memcap=memcap)
    return GreenEstimate(value=float(out["target_values"][0]), stat_error=0.0,
                         horizon=horizon, tail_estimate=0.0, method="dp-free")


def expected_tau_truncated(dist, cone, x, T, *, memcap=None) -> float:
    """E[tau_x; tau_x < T] = sum_{n<T} n * P(tau_x = n)."""
    if T < 1:
        return 0.0
    surv = survival(dist, cone, x, T - 1, memcap=memcap)
    n = np.arange(1, T)
    return float((n * (surv[:-1] - surv[1:])).sum())


def llt_tail(p: float, d: int, v_x: float, u_y: float, modulus: float,
             horizon: int, constant: float = 1.0) -> float:
    """Tail surrogate for the Green sum beyond the horizon:

        constant * V(x) u(y) |y|^(-2p-d+2) * int_{N/|y|^2}^inf z^(-p-d/2) e^(-1/2z) dz.

    The prefactor constant is a fitted stand-in for the unidentified
    kappa*H0 product; the default 1.0 gives an order-of-magnitude bound.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    eps = horizon / modulus ** 2
    return (constant * v_x * u_y * modulus ** (-2.0 * p - d + 2.0)
            * profile_integral(p, d, eps))


def _tail_surrogate(cone, x, y, horizon) -> float:
    u_y = cone.u(np.asarray(y, dtype=np.float64))
    if u_y <= 0.0:
        return 0.0
    u_x = cone.u(np.asarray(x, dtype=np.float64))
    v_x = u_x if u_x > 0 else 1.0
    modulus = float(np.linalg.norm(np.asarray(y, dtype=np.float64)))
    if modulus == 0.0:
        return 0.0
    return llt_tail(cone.p, cone.d, v_x, u_y, modulus, horizon)
