"""Replicated simulation estimators, plain and exponentially tilted.

Replicas are independent walks; replica r draws from a counter-based
Philox stream keyed by (seed, r), so estimates are reproducible and
independent of how replicas are partitioned across chunks or threads.
Paths advance in blocks so that uniforms are only generated for replicas
still alive.

The tilted estimator reweights the step law by e^{h z}/phi(h) along one
lattice axis after truncating steps with |z| > gamma*y1, mirroring the
change of measure used for the large-deviation part of the Green sum.
Every visit to the target contributes the exact likelihood ratio
exp(-h * (axis displacement)) * phi(h)^steps, so the estimator is
unbiased for the no-large-jump part of the Green function; the removed
large-jump part is reported as a separate bound.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .steps import StepDistribution, make_custom, replica_rng

CHUNK = 256
BLOCK = 512


@dataclass(frozen=True)
class McEstimate:
    mean: float
    stderr: float
    replicas: int
    horizon: int
    seed: int
    method: str
    remainder_bound: float | None = None


@dataclass(frozen=True)
class VEstimate:
    value: float
    stderr: float
    plateau: bool
    rows: tuple      # (n, estimate, stderr) per schedule point
    replicas: int
    seed: int


def _finish(samples: np.ndarray, horizon: int, seed: int, method: str,
            remainder: float | None = None) -> McEstimate:
    n = len(samples)
    if n < 2:
        raise ValueError("need at least 2 replicas")
    return McEstimate(mean=float(samples.mean()),
                      stderr=float(samples.std(ddof=1) / math.sqrt(n)),
                      replicas=n, horizon=horizon, seed=seed, method=method,
                      remainder_bound=remainder)


def _chunks(replicas: int):
    return [(base, min(CHUNK, replicas - base))
            for base in range(0, replicas, CHUNK)]


def _map_chunks(worker, replicas: int, threads: int) -> np.ndarray:
    jobs = _chunks(replicas)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(worker, jobs))
    else:
        parts = [worker(j) for j in jobs]
    return np.concatenate(parts)


def _draw(gens, idx, nsteps):
    u = np.empty((len(idx), nsteps))
    for row, i in enumerate(idx):
        u[row] = gens[i].random(nsteps)
    return u


# ---------------------------------------------------------------------------
# survival and occupation estimators
# ---------------------------------------------------------------------------

def mc_survival(dist, cone, x, n, replicas, seed, *, threads=1) -> McEstimate:
    """Fraction of replicas alive at time n, with binomial stderr."""
    if not cone.contains(x):
        raise ValueError("start must be strictly inside the cone")
    if n == 0:
        return McEstimate(1.0, 0.0, replicas, 0, seed, "plain")
    kind, beta = cone.kernel_code()
    x0 = np.asarray(x, dtype=np.int64)
    steps, cdf = dist.atoms, dist._cdf

    def worker(job):
        base, count = job
        gens = [replica_rng(seed, base + i) for i in range(count)]
        pos = np.tile(x0, (count, 1))
        alive = np.ones(count, dtype=bool)
        done = 0
        while done < n:
            b = min(BLOCK, n - done)
            idx = np.flatnonzero(alive)
            if idx.size == 0:
                break
            u = _draw(gens, idx, b)
            cpos = pos[idx]
            calive = np.ones(idx.size, dtype=bool)
            kernels.advance_block(u, cpos, calive, steps, cdf, kind, beta)
            pos[idx] = cpos
            alive[idx] = calive
            done += b
        return alive.astype(np.float64)

    return _finish(_map_chunks(worker, replicas, threads), n, seed, "plain")


def _green_samples(x0, target, horizon, replicas, seed, steps, cdf, kind,
                   beta, h_coef, axis, logphi, threads,
                   min_time=0) -> np.ndarray:
    def worker(job):
        base, count = job
        gens = [replica_rng(seed, base + i) for i in range(count)]
        pos = np.tile(x0, (count, 1))
        logw = np.zeros(count)
        acc = np.zeros(count)
        alive = np.ones(count, dtype=bool)
        done = 0
        while done < horizon:
            b = min(BLOCK, horizon - done)
            idx = np.flatnonzero(alive)
            if idx.size == 0:
                break
            u = _draw(gens, idx, b)
            cpos = pos[idx]
            clogw = logw[idx]
            cacc = acc[idx]
            calive = np.ones(idx.size, dtype=bool)
            kernels.green_block(u, cpos, clogw, cacc, calive, steps, cdf,
                                kind, beta, target, h_coef, axis, logphi,
                                done, min_time)
            pos[idx] = cpos
            logw[idx] = clogw
            acc[idx] = cacc
            alive[idx] = calive
            done += b
        if not np.isfinite(acc).all():
            raise FloatingPointError("tilted path weight overflowed")
        return acc

    return _map_chunks(worker, replicas, threads)


def mc_green(dist, cone, x, y, horizon, replicas, seed, *,
             threads=1) -> McEstimate:
    """Mean number of visits to y before killing and before the horizon;
    the n = 0 term is added deterministically when x == y."""
    if not cone.contains(x):
        raise ValueError("start must be strictly inside the cone")
    x0 = np.asarray(x, dtype=np.int64)
    y0 = np.asarray(y, dtype=np.int64)
    if not cone.contains(y0):
        return McEstimate(0.0, 0.0, replicas, horizon, seed, "plain")
    kind, beta = cone.kernel_code()
    samples = _green_samples(x0, y0, horizon, replicas, seed, dist.atoms,
                             dist._cdf, kind, beta, 0.0, 0, 0.0, threads)
    if np.array_equal(x0, y0):
        samples = samples + 1.0
    return _finish(samples, horizon, seed, "plain")


# ---------------------------------------------------------------------------
# exponential tilting
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TiltSpec:
    axis: int
    sign: int
    y1: float
    gamma: float
    n: int
    level: float            # truncation gamma * y1
    h: float
    phi: float              # E[e^{h sign X_axis}; |X_axis| <= level]
    trunc_prob: float
    trunc_second: float     # E[X_axis^2; |X_axis| <= level]
    tilted_mean: float
    tilted_var: float
    atoms: np.ndarray = field(repr=False, default=None)
    probs: np.ndarray = field(repr=False, default=None)


class DegenerateTilt(ValueError):
    pass


def tilt_parameters(dist: StepDistribution, y1: float, gamma: float, n: int,
                    *, axis: int = 0, sign: int = 1) -> TiltSpec:
    """Tilt level h = log(1 + gamma*y1^2 / (n * E[X1^2; |X1|<=gamma*y1])) / (gamma*y1)
    and the truncated mgf phi(h), both by exact summation over atoms."""
    if y1 <= 0:
        raise ValueError("y1 must be positive")
    if not 0.0 < gamma < 1.0:
        raise ValueError("gamma must lie in (0, 1)")
    if n < 1:
        raise ValueError("n must be >= 1")
    level = gamma * y1
    coords = sign * dist.atoms[:, axis].astype(np.float64)
    keep = np.abs(coords) <= level
    if not keep.any():
        raise DegenerateTilt("all mass truncated away")
    p = dist.probs[keep]
    z = coords[keep]
    t2 = float(p @ z ** 2)
    if t2 <= 0.0:
        raise DegenerateTilt("truncated law has no variance along the tilt axis")
    h = math.log1p(gamma * y1 ** 2 / (n * t2)) / level
    w = p * np.exp(h * z)
    phi = float(w.sum())
    tp = w / phi
    t_mean = float(tp @ z)
    return TiltSpec(axis=axis, sign=sign, y1=y1, gamma=gamma, n=n,
                    level=level, h=h, phi=phi,
                    trunc_prob=float(p.sum()), trunc_second=t2,
                    tilted_mean=t_mean,
                    tilted_var=float(tp @ z ** 2) - t_mean ** 2,
                    atoms=dist.atoms[keep].copy(), probs=tp)


def tilt_partition_bound(spec: TiltSpec, n: int) -> float:
    """e^{-h y1} phi(h)^n, the exact prefactor of the tilted identity."""
    return math.exp(-spec.h * spec.y1 + n * math.log(spec.phi))


def fuk_nagaev_bound(dist: StepDistribution, y1: float, gamma: float, n: int,
                     h: float, *, axis: int = 0, sign: int = 1) -> float:
    """exp{-h y1 + h n E[X1; |X1|<=g y1] + (e^{h g y1}-1-h g y1)/(g y1)^2 * n E[X1^2; |X1|<=g y1]}."""
    level = gamma * y1
    coords = sign * dist.atoms[:, axis].astype(np.float64)
    keep = np.abs(coords) <= level
    p = dist.probs[keep]
    z = coords[keep]
    m1 = float(p @ z)
    m2 = float(p @ z ** 2)
    expo = (-h * y1 + h * n * m1
            + (math.expm1(h * level) - h * level) / level ** 2 * n * m2)
    return math.exp(expo)


def mc_green_tilted(dist, cone, x, y, horizon, gamma, replicas, seed, *,
                    n_tilt=None, axis=None, window=None,
                    threads=1) -> McEstimate:
    """Importance-sampled Green estimate for a distant target.

    The tilt axis is the dominant coordinate of y - x (sign included), a
    hyperoctahedral frame choice that always maps the lattice to itself.
    The tilted measure is applied on the large-deviation window
    n <= window (default gamma * y1^2, the domain the tilted bound is
    designed for); past the window the visit weights e^{-h y1} phi^n blow
    up, so the diffusive remainder n in (window, horizon] is estimated by
    independent replicas under the original measure (the h = 0 instance
    of the same identity) and the two parts are summed.

    The estimate is unbiased for the Green sum restricted to paths whose
    axis increments all stay within gamma*y1; the discarded large-jump
    part is bounded by remainder_bound (zero when the truncation is void).
    """
    if not cone.contains(x):
        raise ValueError("start must be strictly inside the cone")
    x0 = np.asarray(x, dtype=np.int64)
    y0 = np.asarray(y, dtype=np.int64)
    if not cone.contains(y0):
        return McEstimate(0.0, 0.0, replicas, horizon, seed, "tilted",
                          remainder_bound=0.0)
    delta = (y0 - x0).astype(np.float64)
    if not delta.any():
        raise ValueError("target equals start; use mc_green")
    if axis is None:
        axis = int(np.argmax(np.abs(delta)))
    sign = 1 if delta[axis] >= 0 else -1
    y1 = abs(float(delta[axis]))
    if window is None:
        window = int(round(gamma * y1 * y1))
    window = min(int(window), int(horizon))
    if n_tilt is None:
        # mode of the visit-time profile n^-(p+d/2) e^{-|y|^2/2n}, capped by
        # the window for runs confined to the large-deviation regime
        scale = float(delta @ delta) / (2.0 * (cone.p + cone.d / 2.0))
        n_tilt = max(1, min(int(round(scale)), window // 2 or 1))
    spec = tilt_parameters(dist, y1, gamma, int(n_tilt), axis=axis, sign=sign)

    cdf = np.cumsum(spec.probs)
    cdf[-1] = 1.0
    kind, beta = cone.kernel_code()
    samples = _green_samples(x0, y0, window, replicas, seed, spec.atoms,
                             cdf, kind, beta, spec.h * sign, axis,
                             math.log(spec.phi), threads)
    if np.array_equal(x0, y0):
        samples = samples + 1.0
    mean = float(samples.mean())
    var = float(samples.var(ddof=1)) / len(samples)
    if window < horizon:
        late = _green_samples(x0, y0, horizon, replicas, seed + 0x5D1E5,
                              dist.atoms, dist._cdf, kind, beta, 0.0, 0, 0.0,
                              threads, min_time=window + 1)
        mean += float(late.mean())
        var += float(late.var(ddof=1)) / len(late)
    q = 1.0 - spec.trunc_prob
    remainder = q * window * (window + 1) / 2.0
    return McEstimate(mean=mean, stderr=math.sqrt(var), replicas=replicas,
                      horizon=horizon, seed=seed, method="tilted",
                      remainder_bound=remainder)


# ---------------------------------------------------------------------------
# harmonic-function estimation
# ---------------------------------------------------------------------------

def estimate_v(dist, cone, x, schedule, replicas, seed, *,
               threads=1, plateau_tol=0.05) -> VEstimate:
    """Monte Carlo values of E[u(x + S(n)); tau_x > n] along a schedule.

    The sequence converges to the harmonic function V(x) up to a constant;
    the plateau flag records whether the last two schedule points agree
    within plateau_tol relatively.
    """
    if not cone.contains(x):
        raise ValueError("start must be strictly inside the cone")
    schedule = sorted(int(n) for n in schedule)
    if not schedule:
        raise ValueError("schedule must be non-empty")
    kind, beta = cone.kernel_code()
    x0 = np.asarray(x, dtype=np.int64)
    steps, cdf = dist.atoms, dist._cdf

    def worker(job):
        base, count = job
        gens = [replica_rng(seed, base + i) for i in range(count)]
        pos = np.tile(x0, (count, 1))
        alive = np.ones(count, dtype=bool)
        out = np.zeros((count, len(schedule)))
        done = 0
        for col, stop in enumerate(schedule):
            while done < stop:
                b = min(BLOCK, stop - done)
                idx = np.flatnonzero(alive)
                if idx.size == 0:
                    break
                u = _draw(gens, idx, b)
                cpos = pos[idx]
                calive = np.ones(idx.size, dtype=bool)
                kernels.advance_block(u, cpos, calive, steps, cdf, kind, beta)
                pos[idx] = cpos
                alive[idx] = calive
                done += b
            done = stop
            vals = cone.u_values(pos.astype(np.float64))
            out[:, col] = np.where(alive, vals, 0.0)
        return out

    jobs = _chunks(replicas)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(worker, jobs))
    else:
        parts = [worker(j) for j in jobs]
    table = np.concatenate(parts, axis=0)
    means = table.mean(axis=0)
    errs = table.std(axis=0, ddof=1) / math.sqrt(len(table))
    rows = tuple((n, float(m), float(e))
                 for n, m, e in zip(schedule, means, errs))
    if len(schedule) >= 2 and means[-1] != 0.0:
        plateau = abs(means[-1] - means[-2]) < plateau_tol * abs(means[-1])
    else:
        plateau = len(schedule) == 1
    return VEstimate(value=float(means[-1]), stderr=float(errs[-1]),
                     plateau=bool(plateau), rows=rows, replicas=len(table),
                     seed=seed)
