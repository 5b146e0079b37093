"""One-dimensional fluctuation theory: ladder heights and renewal functions.

The positive harmonic function of a centred 1D walk killed on (-inf, 0]
is the renewal function of the ladder heights of the *reflected* walk -S
(equivalently, of the descending ladder heights of S), normalised here by
U(0) = 1 so that V(1) = 1 and the skip-free case gives V(x) = x. The
harmonic function V' of the reversed walk -S is, symmetrically, the
renewal function of the ascending ladder heights of S itself.

Ladder laws are computed by killed DP on the non-positive half-line with
an explicit residual; walks with no upward jump larger than +1 are
short-circuited to the exact law H = 1 (they cannot overshoot).
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .steps import _as_pmf

RESIDUAL_WARN = 1e-6


@dataclass
class LadderLaw:
    """First strict ascending ladder height law, possibly truncated."""
    values: np.ndarray        # heights 1..maxup
    pmf: np.ndarray           # P(H = k), partial if residual > 0
    residual: float           # probability mass not yet laddered at `horizon`
    horizon: int
    method: str               # "exact-skipfree" | "dp"
    warning: str | None = None

    def renewal(self, k: int) -> float:
        return renewal_function(self, k)


def ladder_height_pmf(pmf_1d, horizon: int = 10_000) -> LadderLaw:
    """Distribution of S at its first entry into (0, inf), S started at 0.

    The DP tracks the mass of paths confined to (-inf, 0]; whatever steps
    above zero at time n is harvested as a ladder event. The remaining
    mass after `horizon` steps is reported as the residual.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    values, weights = _as_pmf(pmf_1d)
    m = float(weights @ values)
    if abs(m) > 1e-10:
        raise ValueError(f"ladder construction needs a centred pmf (mean {m!r})")
    maxup = int(values.max())
    if maxup < 1:
        raise ValueError("pmf has no upward steps")

    if maxup == 1:
        # skip-free upward: entry into (0, inf) can only land on 1, and the
        # centred walk enters almost surely, so H = 1 exactly.
        return LadderLaw(values=np.array([1]), pmf=np.array([1.0]),
                         residual=0.0, horizon=horizon, method="exact-skipfree")

    maxdown = int(-values.min())
    L = horizon * maxdown
    buf = np.zeros(L + 1)
    nxt = np.zeros(L + 1)
    pmf = np.zeros(maxup)
    buf[L] = 1.0
    kernels.ladder_layers(values, weights, horizon, buf, nxt, pmf)
    residual = float(max(1.0 - pmf.sum(), 0.0))
    warning = None
    if residual >= RESIDUAL_WARN:
        warning = (f"ladder residual {residual:.3e} at horizon {horizon} "
                   f"exceeds {RESIDUAL_WARN:g}; renewal values are lower bounds")
    return LadderLaw(values=np.arange(1, maxup + 1), pmf=pmf,
                     residual=residual, horizon=horizon, method="dp",
                     warning=warning)


def renewal_function(ladder: LadderLaw, k: int) -> float:
    """U(k) = sum_j P(H_1 + ... + H_j <= k), with U(0) = 1."""
    if k < 0:
        raise ValueError("renewal function argument must be >= 0")
    return float(_renewal_table(ladder, k)[k])


def _renewal_table(ladder: LadderLaw, kmax: int) -> np.ndarray:
    # U = 1 + F * U; H >= 1 makes the recursion well-founded
    f = np.zeros(kmax + 1)
    for v, p in zip(ladder.values, ladder.pmf):
        if v <= kmax:
            f[v] = p
    U = np.empty(kmax + 1)
    for k in range(kmax + 1):
        acc = 1.0
        if k >= 1:
            acc += float(f[1:k + 1] @ U[k - 1::-1])
        U[k] = acc
    return U


def harmonic_v(pmf_1d, k: int, horizon: int = 10_000) -> float:
    """V(k): positive harmonic function of the walk killed on (-inf, 0],
    V(1) = 1. Built from the ladder heights of the reflected walk."""
    if k < 1:
        return 0.0
    values, weights = _as_pmf(pmf_1d)
    flipped = list(zip((-values).tolist(), weights.tolist()))
    return renewal_function(ladder_height_pmf(flipped, horizon), k - 1)


def reversed_harmonic(pmf_1d, k: int, horizon: int = 10_000) -> float:
    """V'(k): harmonic function of the reversed walk -S killed on (-inf, 0].
    This is the renewal function of the ascending ladder heights of S."""
    if k < 1:
        return 0.0
    return renewal_function(ladder_height_pmf(pmf_1d, horizon), k - 1)


def harmonic_table(pmf_1d, kmax: int, horizon: int = 10_000,
                   reversed_walk: bool = False) -> np.ndarray:
    """V (or V') on 1..kmax in one pass; index i holds V(i+1)."""
    values, weights = _as_pmf(pmf_1d)
    if not reversed_walk:
        values = -values
    lad = ladder_height_pmf(list(zip(values.tolist(), weights.tolist())),
                            horizon)
    return _renewal_table(lad, kmax - 1)
