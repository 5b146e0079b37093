"""Verification harness: scaled-ratio scans, exponent fits, LLT shape checks.

The limit laws under test all have the form G ~ c * (known factors) with
an unidentified constant c, so every check is either a plateau test
(consecutive scaled rows along a ray agree within a tolerance) or a
log-log exponent fit. Scaling a harmonic function by a constant therefore
never changes a verdict.

Row targets snap to the nearest reachable lattice point inside the cone;
per-row truncation horizons grow like horizon_factor * |y|^2 so that the
missing tail is (asymptotically) the same fraction of the limit in every
row and cancels from consecutive ratios.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import dp, mc
from .ladder import harmonic_v, reversed_harmonic
from .quadrature import profile_integral, profile_integral_closed_form  # noqa: F401  (re-export)
from .steps import snap_to_reachable

DEFAULT_HORIZON_FACTOR = 4.0


@dataclass
class ScanRow:
    modulus: float          # |y| of the snapped target
    y: tuple
    green: float
    stat_error: float
    scale: float            # multiplies green to give the scaled ratio
    ratio: float
    ratio_error: float
    horizon: int
    skipped: bool = False
    note: str = ""


@dataclass
class RatioScan:
    theorem: str
    direction: tuple
    method: str
    rows: list = field(default_factory=list)
    reference: float | None = None   # e.g. V(x)/V(x') for the Martin scan

    def usable(self):
        return [r for r in self.rows if not r.skipped and r.ratio > 0]

    def plateau_ok(self, tol: float) -> bool:
        """All consecutive scaled rows within tol of each other, relatively."""
        rows = self.usable()
        if len(rows) < 2:
            return False
        for a, b in zip(rows, rows[1:]):
            if abs(b.ratio / a.ratio - 1.0) > tol:
                return False
        return True

    def max_consecutive_drift(self) -> float:
        rows = self.usable()
        drifts = [abs(b.ratio / a.ratio - 1.0) for a, b in zip(rows, rows[1:])]
        return max(drifts) if drifts else math.inf


@dataclass
class ExponentFit:
    slope: float
    stderr: float
    target: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return abs(self.slope - self.target) <= self.tolerance


def fit_loglog(moduli, values, target, tolerance) -> ExponentFit:
    """Least-squares slope of log(values) against log(moduli)."""
    x = np.log(np.asarray(moduli, dtype=np.float64))
    z = np.log(np.asarray(values, dtype=np.float64))
    if len(x) < 3:
        raise ValueError("need at least 3 rows for an exponent fit")
    A = np.stack([x, np.ones_like(x)], axis=1)
    coef, res, _, _ = np.linalg.lstsq(A, z, rcond=None)
    dof = len(x) - 2
    if dof > 0 and res.size:
        sigma2 = float(res[0]) / dof
        cov = sigma2 * np.linalg.inv(A.T @ A)
        err = math.sqrt(max(cov[0, 0], 0.0))
    else:
        err = 0.0
    return ExponentFit(slope=float(coef[0]), stderr=err, target=target,
                       tolerance=tolerance)


# ---------------------------------------------------------------------------
# Green evaluation shared by the scans
# ---------------------------------------------------------------------------

def _green_rows(dist, cone, x, targets, horizons, method, seed, replicas,
                gamma, threads, memcap=None):
    """(value, stderr) per target via exact DP or (tilted) Monte Carlo."""
    if method == "dp":
        ests = dp.green_many(dist, cone, x, targets, horizons, memcap=memcap)
        return [(e.value, 0.0) for e in ests]
    out = []
    for i, (y, h) in enumerate(zip(targets, horizons)):
        if method == "mc":
            e = mc.mc_green(dist, cone, x, y, int(h), replicas, seed + i,
                            threads=threads)
        elif method == "tilted":
            e = mc.mc_green_tilted(dist, cone, x, y, int(h), gamma, replicas,
                                   seed + i, threads=threads)
        else:
            raise ValueError(f"unknown method {method!r}")
        out.append((e.mean, e.stderr))
    return out


def _default_vx(dist, cone, x, seed, replicas, threads):
    """V(x) up to the constant the scans do not care about: the exact
    renewal value for half-spaces, u(x) otherwise (scans are ratio-based)."""
    if cone.kind == "halfspace":
        pmf = _marginal_pmf(dist, cone.d - 1)
        return harmonic_v(pmf, int(np.asarray(x)[-1]))
    return float(cone.u(np.asarray(x, dtype=np.float64)))


def _marginal_pmf(dist, axis):
    vals = {}
    for atom, p in zip(dist.atoms, dist.probs):
        v = int(atom[axis])
        vals[v] = vals.get(v, 0.0) + float(p)
    return vals


def _snap_targets(dist, cone, x, points):
    snapped = []
    for pt in points:
        y = snap_to_reachable(dist, cone, x, pt)
        snapped.append(y)
    return snapped


# ---------------------------------------------------------------------------
# scans
# ---------------------------------------------------------------------------

def interior_ratio_scan(dist, cone, x, direction, moduli, method="dp", *,
                        seed=0, replicas=100_000, gamma=0.5, threads=1,
                        horizon_factor=DEFAULT_HORIZON_FACTOR, v_x=None,
                        memcap=None) -> RatioScan:
    """Scaled ratios G(x,y) |y|^(2p+d-2) / (V(x) u(y)) along an interior ray."""
    direction = np.asarray(direction, dtype=np.float64)
    direction = direction / np.linalg.norm(direction)
    x = np.asarray(x, dtype=np.int64)
    if v_x is None:
        v_x = _default_vx(dist, cone, x, seed, replicas, threads)
    scan = RatioScan(theorem="interior", direction=tuple(direction),
                     method=method)
    targets, horizons, keep = [], [], []
    for m in moduli:
        y = snap_to_reachable(dist, cone, x, m * direction)
        if y is None:
            scan.rows.append(ScanRow(m, (), 0.0, 0.0, 0.0, 0.0, 0.0, 0,
                                     skipped=True, note="unreachable"))
            keep.append(None)
            continue
        targets.append(y)
        horizons.append(max(1, int(math.ceil(horizon_factor
                                             * float(y @ y)))))
        keep.append(len(targets) - 1)
    vals = _green_rows(dist, cone, x, targets, horizons, method, seed,
                       replicas, gamma, threads, memcap)
    expo = 2.0 * cone.p + cone.d - 2.0
    for m, k in zip(moduli, keep):
        if k is None:
            continue
        y = targets[k]
        g, err = vals[k]
        mod = float(np.linalg.norm(y))
        u_y = cone.u(y.astype(np.float64))
        scale = mod ** expo / (v_x * u_y)
        scan.rows.append(ScanRow(mod, tuple(int(t) for t in y), g, err,
                                 scale, g * scale, err * scale, horizons[k]))
    return scan


def martin_ratio_scan(dist, cone, x, x2, direction, moduli, method="dp", *,
                      seed=0, replicas=100_000, gamma=0.5, threads=1,
                      horizon_factor=DEFAULT_HORIZON_FACTOR, v_x=None,
                      v_x2=None, memcap=None) -> RatioScan:
    """Martin kernel rows G(x,y)/G(x',y) with reference V(x)/V(x')."""
    direction = np.asarray(direction, dtype=np.float64)
    direction = direction / np.linalg.norm(direction)
    x = np.asarray(x, dtype=np.int64)
    x2 = np.asarray(x2, dtype=np.int64)
    if v_x is None:
        v_x = _default_vx(dist, cone, x, seed, replicas, threads)
    if v_x2 is None:
        v_x2 = _default_vx(dist, cone, x2, seed, replicas, threads)
    scan = RatioScan(theorem="martin", direction=tuple(direction),
                     method=method, reference=v_x / v_x2)
    targets, horizons = [], []
    for m in moduli:
        y = snap_to_reachable(dist, cone, x, m * direction)
        if y is None or not dist.is_reachable(y - x2):
            scan.rows.append(ScanRow(m, (), 0.0, 0.0, 0.0, 0.0, 0.0, 0,
                                     skipped=True, note="unreachable"))
            targets.append(None)
            continue
        targets.append(y)
        horizons.append(max(1, int(math.ceil(horizon_factor * float(y @ y)))))
    live = [y for y in targets if y is not None]
    hor = list(horizons)
    a = _green_rows(dist, cone, x, live, hor, method, seed, replicas, gamma,
                    threads, memcap)
    b = _green_rows(dist, cone, x2, live, hor, method, seed + 7919, replicas,
                    gamma, threads, memcap)
    k = 0
    for m, y in zip(moduli, targets):
        if y is None:
            continue
        g1, e1 = a[k]
        g2, e2 = b[k]
        if g2 <= 0.0:
            scan.rows.append(ScanRow(m, tuple(int(t) for t in y), g1, e1,
                                     0.0, 0.0, 0.0, hor[k], skipped=True,
                                     note="zero denominator"))
        else:
            r = g1 / g2
            rel = math.sqrt((e1 / g1) ** 2 + (e2 / g2) ** 2) if g1 > 0 else 0.0
            scan.rows.append(ScanRow(float(np.linalg.norm(y)),
                                     tuple(int(t) for t in y), g1, e1,
                                     1.0 / g2, r, r * rel, hor[k]))
        k += 1
    return scan


def halfspace_ratio_scan(dist, d, x, moduli, dist_to_wall, method="dp", *,
                         seed=0, replicas=100_000, gamma=0.5, threads=1,
                         horizon_factor=DEFAULT_HORIZON_FACTOR,
                         memcap=None) -> RatioScan:
    """Rows G(x,y) |y|^d / (V(x_d) V'(y_d)) for boundary-parallel targets
    y = (m, 0, ..., 0, dist_to_wall)."""
    from .cones import make_halfspace
    cone = make_halfspace(d)
    x = np.asarray(x, dtype=np.int64)
    pmf = _marginal_pmf(dist, d - 1)
    v_x = harmonic_v(pmf, int(x[-1]))
    scan = RatioScan(theorem="halfspace", direction=(1.0,) + (0.0,) * (d - 1),
                     method=method)
    targets, horizons = [], []
    for m in moduli:
        pt = np.zeros(d)
        pt[0] = m
        pt[-1] = dist_to_wall
        y = snap_to_reachable(dist, cone, x, pt)
        targets.append(y)
        if y is not None:
            horizons.append(max(1, int(math.ceil(horizon_factor
                                                 * float(y @ y)))))
    live = [y for y in targets if y is not None]
    vals = _green_rows(dist, cone, x, live, horizons, method, seed, replicas,
                       gamma, threads, memcap)
    k = 0
    for m, y in zip(moduli, targets):
        if y is None:
            scan.rows.append(ScanRow(m, (), 0.0, 0.0, 0.0, 0.0, 0.0, 0,
                                     skipped=True, note="unreachable"))
            continue
        g, err = vals[k]
        mod = float(np.linalg.norm(y))
        v_y = reversed_harmonic(pmf, int(y[-1]))
        scale = mod ** d / (v_x * v_y)
        scan.rows.append(ScanRow(mod, tuple(int(t) for t in y), g, err,
                                 scale, g * scale, err * scale, horizons[k]))
        k += 1
    return scan


def boundary_exponent_fit(dist, cone, x, moduli, dist_to_wall, method="dp", *,
                          seed=0, replicas=100_000, gamma=0.5, threads=1,
                          horizon_factor=DEFAULT_HORIZON_FACTOR,
                          tolerance=0.4, memcap=None):
    """log-log slope of raw G along a boundary-hugging path (the profile
    factor v_sigma(dist) is constant along it); target -(p+d-1)."""
    if len(set(int(m) for m in moduli)) < 3:
        raise ValueError("need at least 3 distinct moduli along the path")
    x = np.asarray(x, dtype=np.int64)
    rows = _boundary_rows(dist, cone, x, moduli, dist_to_wall, method, seed,
                          replicas, gamma, threads, horizon_factor, memcap)
    mods = [m for m, g, e in rows if g > 0]
    vals = [g for m, g, e in rows if g > 0]
    if len(vals) < 3:
        raise ValueError("fewer than 3 usable rows")
    target = -(cone.p + cone.d - 1.0)
    return fit_loglog(mods, vals, target, tolerance), rows


def _boundary_rows(dist, cone, x, moduli, dist_to_wall, method, seed,
                   replicas, gamma, threads, horizon_factor, memcap):
    # path hugging the wall {x2 = 0}: y = (m, dist_to_wall), snapped
    targets, horizons = [], []
    for m in moduli:
        pt = np.zeros(cone.d)
        pt[0] = m
        pt[1] = dist_to_wall
        y = snap_to_reachable(dist, cone, x, pt)
        if y is None:
            continue
        targets.append(y)
        horizons.append(max(1, int(math.ceil(horizon_factor * float(y @ y)))))
    vals = _green_rows(dist, cone, x, targets, horizons, method, seed,
                       replicas, gamma, threads, memcap)
    return [(float(np.linalg.norm(y)), g, e)
            for y, (g, e) in zip(targets, vals)]


def interior_exponent_fit(scan: RatioScan, cone, tolerance=0.3) -> ExponentFit:
    """Slope of log(G/u) vs log|y| from an interior scan; target -(2p+d-2).

    Along a fixed ray u grows like |y|^p, so the raw Green slope would be
    -(p+d-2); dividing u out isolates the full decay exponent.
    """
    rows = scan.usable()
    mods = [r.modulus for r in rows]
    # ratio = G * |y|^e / (V u)  =>  G/u = ratio * V / |y|^e ; V constant
    expo = 2.0 * cone.p + cone.d - 2.0
    vals = [r.ratio * r.modulus ** (-expo) for r in rows]
    return fit_loglog(mods, vals, -expo, tolerance)


def vsigma_linearity(dist, cone, x, modulus, dists, method="dp", *,
                     seed=0, replicas=100_000, gamma=0.5, threads=1,
                     horizon_factor=DEFAULT_HORIZON_FACTOR, v_x=None,
                     memcap=None):
    """Boundary profile w(t) = G(x, y(t)) M^(p+d-1) / V(x) at fixed modulus
    M and wall distances t; returns rows and a linear-fit diagnostic."""
    x = np.asarray(x, dtype=np.int64)
    if v_x is None:
        v_x = _default_vx(dist, cone, x, seed, replicas, threads)
    targets, used_t, horizons = [], [], []
    for t in dists:
        if t >= modulus:
            raise ValueError("wall distances must stay below the modulus")
        first = math.sqrt(max(modulus ** 2 - float(t) ** 2, 1.0))
        pt = np.zeros(cone.d)
        pt[0] = first
        pt[1] = t
        y = snap_to_reachable(dist, cone, x, pt)
        if y is None:
            continue
        targets.append(y)
        used_t.append(float(t))
        horizons.append(max(1, int(math.ceil(horizon_factor
                                             * float(modulus) ** 2))))
    vals = _green_rows(dist, cone, x, targets, horizons, method, seed,
                       replicas, gamma, threads, memcap)
    scale = float(modulus) ** (cone.p + cone.d - 1.0) / v_x
    rows = [(t, tuple(int(c) for c in y), g * scale, e * scale)
            for t, y, (g, e) in zip(used_t, targets, vals)]
    w = np.array([r[2] for r in rows])
    t = np.array([r[0] for r in rows])
    A = np.stack([t, np.ones_like(t)], axis=1)
    coef, res, _, _ = np.linalg.lstsq(A, w, rcond=None)
    ss_tot = float(((w - w.mean()) ** 2).sum())
    ss_res = float(res[0]) if res.size else 0.0
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return {
        "rows": rows,
        "slope": float(coef[0]),
        "intercept": float(coef[1]),
        "r2": r2,
        "increasing": bool(np.all(np.diff(w) > 0)),
    }


# ---------------------------------------------------------------------------
# local limit profile
# ---------------------------------------------------------------------------

def llt_shape_check(dist, cone, x, n, *, mass_floor=0.1, memcap=None):
    """Fit the single constant in

        p_n(y) ~ C * u(y/sqrt(n)) * exp(-|y|^2 / (2 sigma^2 n))

    over reachable in-cone points where the model profile is at least
    mass_floor of its maximum, and report the worst relative residual.
    The Gaussian uses the walk's measured per-coordinate variances, which
    accommodates the simple walk's covariance I/d.
    """
    x = np.asarray(x, dtype=np.int64)
    kern = dp.killed_kernel(dist, cone, x, n, snapshots=[n], memcap=memcap)
    layer = kern.layers[n]
    lo = kern.lo
    shape = layer.shape
    grids = np.meshgrid(*[np.arange(s) + l for s, l in zip(shape, lo)],
                        indexing="ij")
    pts = np.stack(grids, axis=-1).astype(np.float64)
    diag = np.clip(np.diag(dist.cov), 1e-300, None)
    quad = (pts ** 2 / diag).sum(axis=-1)
    model = cone.u_values(pts / math.sqrt(n)) * np.exp(-quad / (2.0 * n))
    region = model >= mass_floor * model.max()
    # restrict to points actually charged by the lattice/parity structure
    region &= layer > 0.0
    if not region.any():
        raise ValueError("empty high-mass region")
    pvals = layer[region]
    mvals = model[region]
    c_fit = float((pvals * mvals).sum() / (mvals * mvals).sum())
    resid = np.abs(pvals - c_fit * mvals) / (c_fit * mvals)
    # peak location: argmax of the layer must sit where the model is
    # within 5% of its own maximum
    peak_idx = np.unravel_index(np.argmax(layer), shape)
    peak_ok = bool(model[peak_idx] >= 0.95 * model.max())
    return {
        "constant": c_fit,
        "max_rel_residual": float(resid.max()),
        "mean_rel_residual": float(resid.mean()),
        "points": int(region.sum()),
        "peak_in_model_top": peak_ok,
        "survival": float(kern.survival[-1]),
    }
