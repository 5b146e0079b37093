"""Lattice step distributions: constructors, moments, sampling, assumptions.

A step law is a finite list of integer atoms with probabilities. The walk
normalisation the asymptotic theory wants (zero mean, uncorrelated unit
variances) is checked by the validator, not forced by the constructors;
the simple walk (covariance I/d) is deliberately kept as a test surface.

The reachable-point structure is tracked exactly: the difference lattice
of the support, the coset drift of the first atom and its order. Periodic
walks (e.g. the product Rademacher law) are handled by restricting
queries to reachable points, never by smoothing.
"""

from dataclasses import dataclass, field

import numpy as np

from . import kernels


class InvalidDistribution(ValueError):
    pass


# ---------------------------------------------------------------------------
# integer lattice utilities (python ints: Williamson atoms reach 2**60)
# ---------------------------------------------------------------------------

def _column_basis(vectors):
    """Triangular basis of the integer lattice generated by the given rows.

    Returns a list of (pivot_row, column) pairs with column[i] == 0 for
    i < pivot_row, pivot entry positive.
    """
    d = len(vectors[0]) if len(vectors) else 0
    cols = [[int(t) for t in v] for v in vectors]
    cols = [c for c in cols if any(c)]
    basis = []
    for i in range(d):
        while True:
            nz = [c for c in cols if c[i] != 0]
            if len(nz) <= 1:
                break
            nz.sort(key=lambda c: abs(c[i]))
            piv = nz[0]
            for c in nz[1:]:
                q = c[i] // piv[i]
                for t in range(i, d):
                    c[t] -= q * piv[t]
            cols = [c for c in cols if any(c)]
        piv = next((c for c in cols if c[i] != 0), None)
        if piv is not None:
            cols.remove(piv)
            if piv[i] < 0:
                piv = [-t for t in piv]
            basis.append((i, piv))
    return basis


def _in_lattice(basis, vec):
    v = [int(t) for t in vec]
    for i, col in basis:
        if v[i] % col[i] != 0:
            return False
        q = v[i] // col[i]
        for t in range(i, len(v)):
            v[t] -= q * col[t]
    return not any(v)


@dataclass(frozen=True)
class PeriodInfo:
    """Sublattice/parity classification of the reachable points."""
    full_rank: bool
    diff_index: int | None     # index of the difference lattice in Z^d
    shift_order: int | None    # order of the drift coset; 1 means aperiodic

    def describe(self) -> str:
        if self.diff_index == 1:
            return "aperiodic on Z^d"
        return (f"difference lattice of index {self.diff_index}, "
                f"drift coset order {self.shift_order}")


# ---------------------------------------------------------------------------
# the distribution object
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StepDistribution:
    d: int
    atoms: np.ndarray          # (k, d) int64
    probs: np.ndarray          # (k,) float64, sum 1 within 1e-12
    mean: np.ndarray
    cov: np.ndarray
    period: PeriodInfo
    kind: str = "custom"
    tail_exponent: float | None = None   # Williamson family: moment threshold
    _cdf: np.ndarray = field(repr=False, default=None)
    _diff_basis: tuple = field(repr=False, default=())
    _group_basis: tuple = field(repr=False, default=())

    @property
    def max_step(self) -> int:
        return int(np.abs(self.atoms).max())

    def step_bounds(self):
        """Per-axis (min, max) increments, used to bound DP windows."""
        return self.atoms.min(axis=0), self.atoms.max(axis=0)

    def is_reachable(self, delta) -> bool:
        """Whether x + delta is hit with positive probability at some time."""
        delta = np.asarray(delta, dtype=np.int64)
        if self.period.shift_order is None:
            return _in_lattice(self._group_basis, delta)
        shift = self.atoms[0]
        for n in range(self.period.shift_order):
            if _in_lattice(self._diff_basis, delta - n * shift):
                return True
        return False


def _finalize(atoms, probs, kind, tail_exponent=None) -> StepDistribution:
    atoms = np.atleast_2d(np.asarray(atoms, dtype=np.int64))
    probs = np.asarray(probs, dtype=np.float64)
    if atoms.shape[0] != probs.shape[0]:
        raise InvalidDistribution("atoms and probabilities disagree in length")
    if np.any(probs <= 0):
        raise InvalidDistribution("atom probabilities must be strictly positive")
    total = probs.sum()
    if abs(total - 1.0) > 1e-12:
        raise InvalidDistribution(f"probabilities sum to {total!r}, not 1")
    # merge duplicate atoms so the support is a set
    atoms, inv = np.unique(atoms, axis=0, return_inverse=True)
    merged = np.zeros(len(atoms))
    np.add.at(merged, inv, probs)
    probs = merged

    d = atoms.shape[1]
    mean = probs @ atoms
    centered = atoms - mean
    cov = (centered * probs[:, None]).T @ centered

    group = _column_basis(atoms)
    diffs = atoms[1:] - atoms[0]
    diff_basis = _column_basis(diffs) if len(diffs) else []
    full_rank = len(group) == d
    if not full_rank:
        raise InvalidDistribution("support does not span a full-rank sublattice")

    if len(diff_basis) == d:
        index = 1
        for i, col in diff_basis:
            index *= col[i]
        shift = atoms[0]
        order = None
        for n in range(1, index + 1):
            if _in_lattice(diff_basis, n * shift):
                order = n
                break
        period = PeriodInfo(True, index, order)
    else:
        period = PeriodInfo(True, None, None)

    cdf = np.cumsum(probs)
    cdf[-1] = 1.0
    return StepDistribution(d=d, atoms=atoms, probs=probs, mean=mean, cov=cov,
                            period=period, kind=kind,
                            tail_exponent=tail_exponent, _cdf=cdf,
                            _diff_basis=tuple(diff_basis),
                            _group_basis=tuple(group))


# ---------------------------------------------------------------------------
# constructors
# ---------------------------------------------------------------------------

def make_simple_walk(d: int) -> StepDistribution:
    """Nearest-neighbour walk: atoms ±e_k, probability 1/(2d) each.

    Covariance is I/d; scaling-exponent checks are invariant under that
    diagonal rescaling, which is why this baseline is kept.
    """
    if d < 1:
        raise InvalidDistribution("dimension must be >= 1")
    eye = np.eye(d, dtype=np.int64)
    atoms = np.concatenate([eye, -eye])
    probs = np.full(2 * d, 1.0 / (2 * d))
    return _finalize(atoms, probs, "simple")


def make_product_walk(pmf_1d, d: int) -> StepDistribution:
    """Product of d iid copies of a centred unit-variance 1D pmf."""
    values, weights = _as_pmf(pmf_1d)
    m = float(weights @ values)
    v = float(weights @ (values - m) ** 2)
    if abs(m) > 1e-10:
        raise InvalidDistribution(f"1D pmf must have mean 0 (got {m!r})")
    if abs(v - 1.0) > 1e-10:
        raise InvalidDistribution(f"1D pmf must have variance 1 (got {v!r})")
    k = len(values)
    grids = np.meshgrid(*([values] * d), indexing="ij")
    atoms = np.stack([g.ravel() for g in grids], axis=1)
    pgrids = np.meshgrid(*([weights] * d), indexing="ij")
    probs = np.ones(k ** d)
    for g in pgrids:
        probs = probs * g.ravel()
    return _finalize(atoms, probs, "product")


def make_williamson(d: int, beta: float, n_max: int) -> StepDistribution:
    """Heavy-tail family: atoms ±2^n e_k with q_n proportional to
    log(n+1) / 2^(n*beta), truncated at n_max and renormalised.

    The idealised (n_max -> infinity) law has E|X|^a finite exactly for
    a < beta; the truncation keeps the arithmetic exact while the moment
    divergence is demonstrated across growing n_max.
    """
    if d < 3:
        raise InvalidDistribution("Williamson family needs d >= 3")
    if beta <= 0:
        raise InvalidDistribution("tail exponent must be positive")
    if not 2 <= n_max <= 60:
        raise InvalidDistribution("n_max must be in [2, 60] (2^n must fit int64)")
    n = np.arange(1, n_max + 1)
    w = np.log(n + 1.0) * np.exp2(-beta * n)
    q = w / w.sum()
    eye = np.eye(d, dtype=np.int64)
    atoms = []
    probs = []
    for i, nn in enumerate(n):
        r = np.int64(1) << np.int64(nn)
        for k in range(d):
            atoms.append(r * eye[k])
            atoms.append(-r * eye[k])
            probs.extend([q[i] / (2 * d)] * 2)
    return _finalize(np.array(atoms), np.array(probs), "williamson",
                     tail_exponent=float(beta))


def make_custom(atoms, probs) -> StepDistribution:
    return _finalize(atoms, probs, "custom")


def _as_pmf(pmf):
    """Accept {value: prob} or [(value, prob), ...]; values are integers."""
    if isinstance(pmf, dict):
        items = sorted(pmf.items())
    else:
        items = sorted((int(v), float(p)) for v, p in pmf)
    values = np.array([v for v, _ in items], dtype=np.int64)
    weights = np.array([p for _, p in items], dtype=np.float64)
    if np.any(weights <= 0) or abs(weights.sum() - 1.0) > 1e-12:
        raise InvalidDistribution("1D pmf must be strictly positive and sum to 1")
    return values, weights


def rademacher_pmf():
    return {-1: 0.5, 1: 0.5}


def lazy_unit_pmf():
    """A lazy centred pmf with variance exactly 1 (contains the zero step,
    so product walks built from it are aperiodic)."""
    return {-2: 1.0 / 16, -1: 0.25, 0: 3.0 / 8, 1: 0.25, 2: 1.0 / 16}


def reversed_dist(dist: StepDistribution) -> StepDistribution:
    """The law of -X (time reversal)."""
    return _finalize(-dist.atoms, dist.probs, dist.kind, dist.tail_exponent)


# ---------------------------------------------------------------------------
# moments and assumption validation
# ---------------------------------------------------------------------------

def moment(dist: StepDistribution, alpha: float) -> float:
    """E|X|^alpha as an exact sum over atoms."""
    if alpha < 0:
        raise ValueError("moment exponent must be >= 0")
    norms = np.sqrt((dist.atoms.astype(np.float64) ** 2).sum(axis=1))
    return float(dist.probs @ norms ** alpha)


def moment_log_corrected(dist: StepDistribution, alpha: float,
                         eps: float = 0.1) -> float:
    """E[|X|^alpha / log^(1+eps)|X|] over atoms with |X| > 1."""
    norms = np.sqrt((dist.atoms.astype(np.float64) ** 2).sum(axis=1))
    big = norms > 1.0
    vals = norms[big] ** alpha / np.log(norms[big]) ** (1.0 + eps)
    return float(dist.probs[big] @ vals)


@dataclass(frozen=True)
class AssumptionReport:
    mean_ok: bool
    covariance_identity_ok: bool
    measured_mean: np.ndarray
    measured_cov: np.ndarray
    moment_values: dict
    r1_threshold: float
    r1_ok: bool
    lattice_full_rank: bool
    period: PeriodInfo
    notes: tuple = ()


def r1_exponent(p: float, d: int) -> float:
    """Moment threshold p + d - 2 + (2 - p)^+ for the interior asymptotics."""
    return p + d - 2 + max(2.0 - p, 0.0)


def validate_assumptions(dist: StepDistribution, cone=None) -> AssumptionReport:
    """Check the normalisation/moment/lattice assumptions against a cone.

    With cone=None the full-space threshold d-2 is used instead of the
    cone formula (the Williamson example lives in full space).
    """
    tol = 1e-10
    mean_ok = bool(np.abs(dist.mean).max() <= tol)
    cov_ok = bool(np.abs(dist.cov - np.eye(dist.d)).max() <= tol)
    if cone is None:
        r1 = float(dist.d - 2)
    else:
        r1 = r1_exponent(cone.p, dist.d)
    alphas = sorted({1.0, 2.0, r1, r1 + 1.0})
    values = {a: moment(dist, a) for a in alphas}
    if dist.tail_exponent is None:
        r1_ok = True
    else:
        r1_ok = r1 < dist.tail_exponent
    notes = []
    if cone is not None and cone.kind == "orthant" and cone.d >= 3:
        notes.append("orthant is convex but not C2; boundary statements "
                     "are heuristic for d >= 3")
    if not cov_ok:
        notes.append("covariance differs from identity; exponent checks "
                     "remain valid under diagonal rescaling")
    return AssumptionReport(
        mean_ok=mean_ok, covariance_identity_ok=cov_ok,
        measured_mean=dist.mean.copy(), measured_cov=dist.cov.copy(),
        moment_values=values, r1_threshold=r1, r1_ok=r1_ok,
        lattice_full_rank=dist.period.full_rank, period=dist.period,
        notes=tuple(notes))


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------

def replica_rng(seed: int, replica: int) -> np.random.Generator:
    """Counter-based stream for one replica: Philox keyed by (seed, replica)."""
    key = np.array([np.uint64(seed & 0xFFFFFFFFFFFFFFFF), np.uint64(replica)],
                   dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def sample_step(dist: StepDistribution, rng: np.random.Generator) -> np.ndarray:
    """One step; deterministic function of the generator state."""
    idx = kernels.pick_atoms(dist._cdf, rng.random())
    return dist.atoms[int(idx)].copy()


def sample_steps(dist: StepDistribution, n: int,
                 rng: np.random.Generator) -> np.ndarray:
    idx = kernels.pick_atoms(dist._cdf, rng.random(n))
    return dist.atoms[idx]


def snap_to_reachable(dist: StepDistribution, cone, x, point,
                      radius: int = 4):
    """Nearest lattice point to `point` that is inside the cone and reachable
    from x; None if none within the search radius."""
    x = np.asarray(x, dtype=np.int64)
    base = np.rint(np.asarray(point, dtype=np.float64)).astype(np.int64)
    d = dist.d
    offs = np.stack(np.meshgrid(*([np.arange(-radius, radius + 1)] * d),
                                indexing="ij"), axis=-1).reshape(-1, d)
    cand = base + offs
    dist2 = ((cand - np.asarray(point)) ** 2).sum(axis=1)
    for i in np.argsort(dist2, kind="stable"):
        y = cand[i]
        if cone.contains(y) and dist.is_reachable(y - x):
            return y.astype(np.int64)
    return None
