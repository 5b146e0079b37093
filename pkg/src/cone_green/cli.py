"""Command-line front end: experiment runner and CSV/report emitter.

Subcommands: green-exact, green-mc, green-tilted, estimate-v, ladder,
integral, verify-interior, verify-boundary, verify-halfspace,
verify-martin, verify-llt, validate.

Exit codes: 0 success / verification PASS, 2 verification FAIL,
1 operational error (bad config, memory cap, ...). CSV artifacts are
written atomically (temp file + rename); a timestamp comment is included
unless --deterministic is given, so deterministic reruns are
byte-identical.
"""

import argparse
import math
import os
import sys
import tempfile
import time

import numpy as np

from . import asymptotics as asym
from . import dp, mc
from .config import ConfigError, ExperimentConfig, parse_config
from .ladder import ladder_height_pmf, renewal_function
from .quadrature import profile_integral
from .steps import validate_assumptions

_BASELINE = {
    "verify-interior": {"dist.kind": "product-rademacher",
                        "cone.kind": "halfspace", "cone.d": "2",
                        "start": "0 1", "direction": "0 1",
                        "moduli": "10 20 40", "method": "tilted"},
    "verify-boundary": {"dist.kind": "product-rademacher",
                        "cone.kind": "wedge", "cone.beta": repr(math.pi / 2),
                        "start": "1 1", "moduli": "8 12 16 24",
                        "dist_to_wall": "2", "method": "dp"},
    "verify-halfspace": {"dist.kind": "product-rademacher",
                         "cone.kind": "halfspace", "cone.d": "2",
                         "start": "0 1", "moduli": "10 20 40",
                         "dist_to_wall": "3", "method": "auto"},
    "verify-martin": {"dist.kind": "product-rademacher",
                      "cone.kind": "halfspace", "cone.d": "2",
                      "start": "0 1", "start2": "0 3", "direction": "0 1",
                      "moduli": "40", "method": "tilted"},
    "verify-llt": {"dist.kind": "product-rademacher",
                   "cone.kind": "halfspace", "cone.d": "2",
                   "start": "0 1", "n": "400", "method": "dp"},
}


def _write_csv(path, meta, header, rows, deterministic):
    """Atomic CSV write; meta becomes '# key=value' comment lines."""
    d = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as f:
            if not deterministic:
                f.write(f"# generated={time.strftime('%Y-%m-%dT%H:%M:%S')}\n")
            for k, v in meta.items():
                f.write(f"# {k}={v}\n")
            f.write(",".join(header) + "\n")
            for row in rows:
                f.write(",".join(_fmt(v) for v in row) + "\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(v):
    if isinstance(v, float):
        return format(v, ".12g")
    return str(v)


def _mc_csv(path, est, cfg):
    _write_csv(path, {"units": "expected-visits"},
               ["estimate", "stderr", "replicas", "horizon", "seed",
                "method"],
               [(est.mean, est.stderr, est.replicas, est.horizon, est.seed,
                 est.method)], cfg.deterministic)


def _scan_csv(path, scan, cfg, extra_meta=None):
    meta = {"theorem": scan.theorem, "method": scan.method,
            "units": "dimensionless-scaled-ratio"}
    meta.update(extra_meta or {})
    rows = [(r.modulus, " ".join(str(t) for t in r.y), r.green, r.stat_error,
             r.ratio, r.ratio_error, r.horizon, int(r.skipped), r.note)
            for r in scan.rows]
    _write_csv(path, meta,
               ["modulus", "target", "green", "green_stderr", "scaled_ratio",
                "ratio_stderr", "horizon", "skipped", "note"],
               rows, cfg.deterministic)


# ---------------------------------------------------------------------------
# subcommand handlers: return (exit_code, summary line)
# ---------------------------------------------------------------------------

def _cmd_integral(cfg, args):
    val = profile_integral(args.p, args.d, args.eps)
    print(f"{val:.10f}")
    return 0


def _cmd_green_exact(cfg, args):
    dist, cone = cfg.make_dist(), cfg.make_cone()
    if cfg.target is None:
        raise ValueError("green-exact needs a target point")
    horizon = cfg.horizon or 1000
    est, trace, surv = dp.green_truncated(dist, cone, cfg.start, cfg.target,
                                          horizon, memcap=cfg.memcap,
                                          trace=True)
    partial = np.cumsum(trace)
    rows = [(n, surv[n], trace[n], partial[n]) for n in range(horizon + 1)]
    out = cfg.out or "green-exact.csv"
    _write_csv(out, {"method": "dp", "units": "probability"},
               ["n", "survival", "p_n_at_y", "partial_green"], rows,
               cfg.deterministic)
    print(f"green-exact value={est.value:.12g} horizon={horizon} "
          f"tail_estimate={est.tail_estimate:.3g} -> {out}")
    return 0


def _cmd_green_mc(cfg, args):
    dist, cone = cfg.make_dist(), cfg.make_cone()
    if cfg.target is None:
        raise ValueError("green-mc needs a target point")
    horizon = cfg.horizon or 1000
    est = mc.mc_green(dist, cone, cfg.start, cfg.target, horizon,
                      cfg.replicas, cfg.seed, threads=cfg.threads)
    out = cfg.out or "green-mc.csv"
    _mc_csv(out, est, cfg)
    print(f"green-mc estimate={est.mean:.12g} stderr={est.stderr:.3g} -> {out}")
    return 0


def _cmd_green_tilted(cfg, args):
    dist, cone = cfg.make_dist(), cfg.make_cone()
    if cfg.target is None:
        raise ValueError("green-tilted needs a target point")
    horizon = cfg.horizon or 1000
    est = mc.mc_green_tilted(dist, cone, cfg.start, cfg.target, horizon,
                             cfg.gamma, cfg.replicas, cfg.seed,
                             threads=cfg.threads)
    out = cfg.out or "green-tilted.csv"
    _mc_csv(out, est, cfg)
    print(f"green-tilted estimate={est.mean:.12g} stderr={est.stderr:.3g} "
          f"large-jump-remainder<={est.remainder_bound:.3g} -> {out}")
    return 0


def _cmd_estimate_v(cfg, args):
    dist, cone = cfg.make_dist(), cfg.make_cone()
    schedule = cfg.schedule or [64, 256, 1024]
    est = mc.estimate_v(dist, cone, cfg.start, schedule, cfg.replicas,
                        cfg.seed, threads=cfg.threads)
    out = cfg.out or "estimate-v.csv"
    _write_csv(out, {"method": "mc", "units": "harmonic-function-value"},
               ["n", "estimate", "stderr"],
               [(n, m, e) for n, m, e in est.rows], cfg.deterministic)
    print(f"estimate-v value={est.value:.12g} stderr={est.stderr:.3g} "
          f"plateau={est.plateau} -> {out}")
    return 0


def _cmd_ladder(cfg, args):
    dist = cfg.make_dist()
    if dist.d != 1:
        raise ValueError("ladder needs a one-dimensional step law")
    pmf = {int(a[0]): float(p) for a, p in zip(dist.atoms, dist.probs)}
    horizon = cfg.horizon or 10_000
    lad = ladder_height_pmf(pmf, horizon)
    kmax = cfg.n or 32
    rows = []
    for k in range(kmax + 1):
        pk = 0.0
        if 1 <= k <= len(lad.pmf):
            pk = float(lad.pmf[k - 1])
        rows.append((k, pk, renewal_function(lad, k)))
    out = cfg.out or "ladder.csv"
    _write_csv(out, {"method": lad.method, "residual": f"{lad.residual:.6g}",
                     "units": "probability / renewal-count"},
               ["k", "ladder_pmf", "renewal_U"], rows, cfg.deterministic)
    msg = f"ladder residual={lad.residual:.3g} method={lad.method} -> {out}"
    if lad.warning:
        msg += f" (warning: {lad.warning})"
    print(msg)
    return 0


def _cmd_validate(cfg, args):
    dist, cone = cfg.make_dist(), cfg.make_cone()
    rep = validate_assumptions(dist, cone)
    rows = [("mean_ok", rep.mean_ok),
            ("covariance_identity_ok", rep.covariance_identity_ok),
            ("r1_threshold", rep.r1_threshold),
            ("r1_ok", rep.r1_ok),
            ("lattice_full_rank", rep.lattice_full_rank),
            ("period", rep.period.describe())]
    rows += [(f"moment_{a:g}", v) for a, v in rep.moment_values.items()]
    rows += [("note", n) for n in rep.notes]
    for k, v in rows:
        print(f"{k} = {v}")
    if cfg.out:
        _write_csv(cfg.out, {"method": "validate", "units": "mixed"},
                   ["field", "value"], rows, cfg.deterministic)
    return 0


def _auto_method(cfg, moduli):
    if cfg.method != "auto":
        return cfg.method
    biggest = max(moduli)
    return "dp" if cfg.horizon_factor * biggest ** 2 <= 2500 else "tilted"


def _cmd_verify_interior(cfg, args):
    dist, cone = cfg.make_dist(), cfg.make_cone()
    method = _auto_method(cfg, cfg.moduli)
    scan = asym.interior_ratio_scan(
        dist, cone, cfg.start, cfg.direction, cfg.moduli, method,
        seed=cfg.seed or 0, replicas=cfg.replicas, gamma=cfg.gamma,
        threads=cfg.threads, horizon_factor=cfg.horizon_factor,
        memcap=cfg.memcap)
    fit = asym.interior_exponent_fit(scan, cone, tolerance=cfg.tol_slope)
    out = cfg.out or "verify-interior.csv"
    _scan_csv(out, scan, cfg, {"slope": f"{fit.slope:.6g}",
                               "slope_target": f"{fit.target:.6g}"})
    ok = scan.plateau_ok(cfg.tol_plateau) and fit.passed
    print(f"{'PASS' if ok else 'FAIL'} verify-interior "
          f"plateau_drift={scan.max_consecutive_drift():.4f} "
          f"(tol {cfg.tol_plateau}) slope={fit.slope:.3f} "
          f"target={fit.target:.3f} (tol {cfg.tol_slope}) -> {out}")
    return 0 if ok else 2


def _cmd_verify_boundary(cfg, args):
    dist, cone = cfg.make_dist(), cfg.make_cone()
    method = _auto_method(cfg, cfg.moduli)
    fit, rows = asym.boundary_exponent_fit(
        dist, cone, cfg.start, cfg.moduli, cfg.dist_to_wall or 2, method,
        seed=cfg.seed or 0, replicas=cfg.replicas, gamma=cfg.gamma,
        threads=cfg.threads, horizon_factor=cfg.horizon_factor,
        tolerance=cfg.tol_boundary_slope, memcap=cfg.memcap)
    out = cfg.out or "verify-boundary.csv"
    _write_csv(out, {"method": method, "slope": f"{fit.slope:.6g}",
                     "slope_target": f"{fit.target:.6g}",
                     "units": "expected-visits"},
               ["modulus", "green", "green_stderr"], rows, cfg.deterministic)
    ok = fit.passed
    print(f"{'PASS' if ok else 'FAIL'} verify-boundary slope={fit.slope:.3f} "
          f"target={fit.target:.3f} (tol {cfg.tol_boundary_slope}) -> {out}")
    return 0 if ok else 2


def _cmd_verify_halfspace(cfg, args):
    dist = cfg.make_dist()
    method = _auto_method(cfg, cfg.moduli)
    if method == "dp" and max(cfg.moduli) > 25:
        method = "tilted"
    scan = asym.halfspace_ratio_scan(
        dist, cfg.cone_d, cfg.start, cfg.moduli, cfg.dist_to_wall or 3,
        method, seed=cfg.seed or 0, replicas=cfg.replicas, gamma=cfg.gamma,
        threads=cfg.threads, horizon_factor=cfg.horizon_factor,
        memcap=cfg.memcap)
    out = cfg.out or "verify-halfspace.csv"
    _scan_csv(out, scan, cfg)
    ok = scan.plateau_ok(cfg.tol_plateau)
    print(f"{'PASS' if ok else 'FAIL'} verify-halfspace "
          f"plateau_drift={scan.max_consecutive_drift():.4f} "
          f"(tol {cfg.tol_plateau}) -> {out}")
    return 0 if ok else 2


def _cmd_verify_martin(cfg, args):
    dist, cone = cfg.make_dist(), cfg.make_cone()
    method = _auto_method(cfg, cfg.moduli)
    scan = asym.martin_ratio_scan(
        dist, cone, cfg.start, cfg.start2 or [0, 3], cfg.direction,
        cfg.moduli, method, seed=cfg.seed or 0, replicas=cfg.replicas,
        gamma=cfg.gamma, threads=cfg.threads,
        horizon_factor=cfg.horizon_factor, memcap=cfg.memcap)
    rows = scan.usable()
    out = cfg.out or "verify-martin.csv"
    _scan_csv(out, scan, cfg, {"reference": f"{scan.reference:.6g}"})
    if not rows:
        print(f"FAIL verify-martin: no usable rows -> {out}")
        return 2
    last = rows[-1]
    dev = abs(last.ratio / scan.reference - 1.0)
    ok = dev <= cfg.tol_plateau
    print(f"{'PASS' if ok else 'FAIL'} verify-martin ratio={last.ratio:.4f} "
          f"target={scan.reference:.4f} rel_dev={dev:.4f} "
          f"(tol {cfg.tol_plateau}) -> {out}")
    return 0 if ok else 2


def _cmd_verify_llt(cfg, args):
    dist, cone = cfg.make_dist(), cfg.make_cone()
    n = cfg.n or 400
    out_d = asym.llt_shape_check(dist, cone, cfg.start, n, memcap=cfg.memcap)
    out = cfg.out or "verify-llt.csv"
    _write_csv(out, {"method": "dp", "units": "probability"},
               ["n", "fitted_constant", "max_rel_residual",
                "mean_rel_residual", "points", "peak_in_model_top"],
               [(n, out_d["constant"], out_d["max_rel_residual"],
                 out_d["mean_rel_residual"], out_d["points"],
                 int(out_d["peak_in_model_top"]))], cfg.deterministic)
    ok = out_d["max_rel_residual"] < 0.10 and out_d["peak_in_model_top"]
    print(f"{'PASS' if ok else 'FAIL'} verify-llt n={n} "
          f"max_rel_residual={out_d['max_rel_residual']:.4f} (tol 0.10) "
          f"-> {out}")
    return 0 if ok else 2


_HANDLERS = {
    "integral": _cmd_integral,
    "green-exact": _cmd_green_exact,
    "green-mc": _cmd_green_mc,
    "green-tilted": _cmd_green_tilted,
    "estimate-v": _cmd_estimate_v,
    "ladder": _cmd_ladder,
    "validate": _cmd_validate,
    "verify-interior": _cmd_verify_interior,
    "verify-boundary": _cmd_verify_boundary,
    "verify-halfspace": _cmd_verify_halfspace,
    "verify-martin": _cmd_verify_martin,
    "verify-llt": _cmd_verify_llt,
}


def _build_parser():
    ap = argparse.ArgumentParser(
        prog="cone-green",
        description="Green functions of lattice walks killed outside a cone")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in _HANDLERS:
        p = sub.add_parser(name)
        if name == "integral":
            p.add_argument("--p", type=float, required=True)
            p.add_argument("--d", type=int, required=True)
            p.add_argument("--eps", type=float, default=0.0)
            continue
        p.add_argument("--config", type=str, default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--threads", type=int, default=None)
        p.add_argument("--deterministic", action="store_true")
        p.add_argument("--out", type=str, default=None)
        p.add_argument("--set", action="append", default=[],
                       metavar="KEY=VALUE",
                       help="override any config key, e.g. --set moduli='8 16'")
    return ap


def run(command: str, cfg: ExperimentConfig, args=None) -> int:
    """Run one subcommand against a parsed config; returns the exit code."""
    return _HANDLERS[command](cfg, args)


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "integral":
        try:
            return _cmd_integral(None, args)
        except ValueError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
    overrides = dict(_BASELINE.get(args.command, {}))
    text = ""
    if args.config:
        try:
            with open(args.config) as f:
                text = f.read()
        except OSError as exc:
            print(f"error: cannot read config: {exc}", file=sys.stderr)
            return 1
    for item in args.set:
        if "=" not in item:
            print(f"error: --set expects KEY=VALUE, got {item!r}",
                  file=sys.stderr)
            return 1
        k, v = item.split("=", 1)
        overrides[k.strip()] = v.strip()
    if args.seed is not None:
        overrides["seed"] = str(args.seed)
    if args.threads is not None:
        overrides["threads"] = str(args.threads)
    if args.deterministic:
        overrides["deterministic"] = "1"
    if args.out is not None:
        overrides["out"] = args.out
    try:
        cfg = parse_config(text, overrides)
    except ConfigError as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return 1
    try:
        return run(args.command, cfg, args)
    except (ValueError, KeyError, MemoryError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
