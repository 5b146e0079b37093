"""Flat key-value experiment configuration.

Config files are plain text: one `key = value` pair per line, dotted keys
(cone.kind, dist.d, ...), '#' comments. CLI flags override file keys.
Parsing validates everything it can and reports *all* problems at once;
unknown keys are errors, not warnings.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .cones import make_halfspace, make_orthant, make_wedge
from .steps import (lazy_unit_pmf, make_custom, make_product_walk,
                    make_simple_walk, make_williamson, rademacher_pmf)

KNOWN_KEYS = {
    "dist.kind", "dist.d", "dist.beta", "dist.nmax", "dist.atoms",
    "cone.kind", "cone.d", "cone.beta",
    "start", "start2", "target", "direction", "moduli", "dist_to_wall",
    "modulus", "wall_distances",
    "method", "horizon", "horizon_factor", "replicas", "seed", "gamma",
    "schedule", "n",
    "tolerance.plateau", "tolerance.slope", "tolerance.boundary_slope",
    "memcap", "threads", "out", "deterministic",
}

METHODS = {"dp", "mc", "tilted", "auto"}
RANDOM_METHODS = {"mc", "tilted", "auto"}


class ConfigError(ValueError):
    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass
class ExperimentConfig:
    dist_kind: str = "simple"
    dist_d: int | None = None
    dist_beta: float | None = None
    dist_nmax: int | None = None
    dist_atoms: list | None = None
    cone_kind: str = "halfspace"
    cone_d: int = 2
    cone_beta: float | None = None
    start: list = field(default_factory=lambda: [0, 1])
    start2: list | None = None
    target: list | None = None
    direction: list | None = None
    moduli: list | None = None
    dist_to_wall: float | None = None
    modulus: float | None = None
    wall_distances: list | None = None
    method: str = "dp"
    horizon: int | None = None
    horizon_factor: float = 4.0
    replicas: int = 100_000
    seed: int | None = None
    gamma: float = 0.5
    schedule: list | None = None
    n: int | None = None
    tol_plateau: float = 0.15
    tol_slope: float = 0.3
    tol_boundary_slope: float = 0.4
    memcap: int | None = None
    threads: int = 1
    out: str | None = None
    deterministic: bool = False

    def make_cone(self):
        if self.cone_kind == "halfspace":
            return make_halfspace(self.cone_d)
        if self.cone_kind == "orthant":
            return make_orthant(self.cone_d)
        return make_wedge(self.cone_beta)

    def make_dist(self):
        d = self.dist_d if self.dist_d is not None else self.cone_d
        kind = self.dist_kind
        if kind == "simple":
            return make_simple_walk(d)
        if kind == "product-rademacher":
            return make_product_walk(rademacher_pmf(), d)
        if kind == "product-lazy":
            return make_product_walk(lazy_unit_pmf(), d)
        if kind == "williamson":
            return make_williamson(d, self.dist_beta, self.dist_nmax or 20)
        atoms = [row[:-1] for row in self.dist_atoms]
        probs = [row[-1] for row in self.dist_atoms]
        return make_custom(atoms, probs)


def _parse_vector(text):
    return [int(t) for t in text.replace(",", " ").split()]


def _parse_floats(text):
    return [float(t) for t in text.replace(",", " ").split()]


def _parse_atom_rows(text):
    rows = []
    for piece in text.split(";"):
        piece = piece.strip()
        if not piece:
            continue
        vals = piece.split()
        rows.append([int(v) for v in vals[:-1]] + [float(vals[-1])])
    return rows


def parse_config(text: str, overrides: dict | None = None) -> ExperimentConfig:
    """Parse config text plus CLI overrides; raises ConfigError carrying
    every detected problem."""
    pairs = {}
    errors = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            errors.append(f"line {lineno}: expected key = value, got {raw!r}")
            continue
        key, value = (t.strip() for t in line.split("=", 1))
        if key not in KNOWN_KEYS:
            errors.append(f"line {lineno}: unknown key {key!r}")
            continue
        pairs[key] = value
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in KNOWN_KEYS:
            errors.append(f"override: unknown key {key!r}")
        else:
            pairs[key] = value

    cfg = ExperimentConfig()
    parsers = {
        "dist.kind": ("dist_kind", str),
        "dist.d": ("dist_d", int),
        "dist.beta": ("dist_beta", float),
        "dist.nmax": ("dist_nmax", int),
        "dist.atoms": ("dist_atoms", _parse_atom_rows),
        "cone.kind": ("cone_kind", str),
        "cone.d": ("cone_d", int),
        "cone.beta": ("cone_beta", float),
        "start": ("start", _parse_vector),
        "start2": ("start2", _parse_vector),
        "target": ("target", _parse_vector),
        "direction": ("direction", _parse_floats),
        "moduli": ("moduli", _parse_floats),
        "dist_to_wall": ("dist_to_wall", float),
        "modulus": ("modulus", float),
        "wall_distances": ("wall_distances", _parse_floats),
        "method": ("method", str),
        "horizon": ("horizon", int),
        "horizon_factor": ("horizon_factor", float),
        "replicas": ("replicas", int),
        "seed": ("seed", int),
        "gamma": ("gamma", float),
        "schedule": ("schedule", _parse_vector),
        "n": ("n", int),
        "tolerance.plateau": ("tol_plateau", float),
        "tolerance.slope": ("tol_slope", float),
        "tolerance.boundary_slope": ("tol_boundary_slope", float),
        "memcap": ("memcap", int),
        "threads": ("threads", int),
        "out": ("out", str),
        "deterministic": ("deterministic",
                          lambda s: str(s).strip().lower() in
                          {"1", "true", "yes", "on"}),
    }
    for key, value in pairs.items():
        attr, fn = parsers[key]
        try:
            setattr(cfg, attr, fn(value))
        except (ValueError, IndexError) as exc:
            errors.append(f"key {key!r}: cannot parse {value!r} ({exc})")

    _validate(cfg, errors)
    if errors:
        raise ConfigError(errors)
    return cfg


def _validate(cfg, errors):
    if cfg.cone_kind not in {"halfspace", "wedge", "orthant"}:
        errors.append(f"cone.kind {cfg.cone_kind!r} not in halfspace|wedge|orthant")
    if cfg.cone_kind == "wedge":
        cfg.cone_d = 2
        if cfg.cone_beta is None:
            errors.append("cone.kind = wedge needs cone.beta (radians)")
        elif not 0.0 < cfg.cone_beta < 2.0 * math.pi:
            errors.append("cone.beta must lie in (0, 2*pi)")
    if cfg.dist_kind not in {"simple", "product-rademacher", "product-lazy",
                             "williamson", "custom-atoms"}:
        errors.append(f"dist.kind {cfg.dist_kind!r} unknown")
    if cfg.dist_kind == "williamson" and cfg.dist_beta is None:
        errors.append("dist.kind = williamson needs dist.beta")
    if cfg.dist_kind == "custom-atoms":
        if not cfg.dist_atoms:
            errors.append("dist.kind = custom-atoms needs dist.atoms rows")
    if cfg.method not in METHODS:
        errors.append(f"method {cfg.method!r} not in {sorted(METHODS)}")
    if cfg.method in RANDOM_METHODS and cfg.seed is None:
        errors.append(f"method {cfg.method!r} uses randomness: a seed is required")
    if not 0.0 < cfg.gamma < 1.0:
        errors.append("gamma must lie in (0, 1)")
    for name in ("tol_plateau", "tol_slope", "tol_boundary_slope"):
        if getattr(cfg, name) <= 0:
            errors.append(f"{name.replace('_', '.')} must be positive")
    if cfg.replicas < 2:
        errors.append("replicas must be >= 2")
    if cfg.threads < 1:
        errors.append("threads must be >= 1")

    d = cfg.dist_d if cfg.dist_d is not None else cfg.cone_d
    if cfg.dist_d is not None and cfg.dist_d != cfg.cone_d:
        errors.append(f"dimension mismatch: dist.d = {cfg.dist_d}, "
                      f"cone.d = {cfg.cone_d}")
    for name, vec in (("start", cfg.start), ("start2", cfg.start2),
                      ("target", cfg.target), ("direction", cfg.direction)):
        if vec is not None and len(vec) != d:
            errors.append(f"dimension mismatch: {name} has {len(vec)} "
                          f"coordinates, dimension is {d}")
    if cfg.dist_atoms:
        for row in cfg.dist_atoms:
            if len(row) - 1 != d:
                errors.append(f"dimension mismatch: atom row {row} is not "
                              f"{d}-dimensional")
                break
