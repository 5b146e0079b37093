"""Analytic cones: membership, boundary distance, exponent p, harmonic u.

Supported cones are the half-space {x_d > 0}, the planar wedge of opening
angle beta and the positive orthant. For each, the principal Dirichlet
eigenvalue lambda_1 of the spherical cap is known in closed form and

    p = sqrt(lambda_1 + (d/2 - 1)^2) - (d/2 - 1),
    u(x) = |x|^p m_1(x/|x|),

with m_1 normalised to sup-norm 1 on the cap (every downstream check is a
ratio, so the normalisation convention is free). Lattice points exactly on
the boundary count as outside, matching the strict inequality x_d > 0.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import kernels


@dataclass(frozen=True)
class Cone:
    kind: str              # "halfspace" | "wedge" | "orthant"
    d: int
    beta: float = 0.0      # wedge opening angle, radians

    # -- spectral data ------------------------------------------------------

    @property
    def lambda1(self) -> float:
        if self.kind == "halfspace":
            return float(self.d - 1)
        if self.kind == "wedge":
            return (math.pi / self.beta) ** 2
        # orthant: u = prod x_i is harmonic of degree d
        return float(self.d * (2 * self.d - 2))

    @property
    def p(self) -> float:
        shift = self.d / 2.0 - 1.0
        return math.sqrt(self.lambda1 + shift * shift) - shift

    # -- geometry -----------------------------------------------------------

    def kernel_code(self):
        """(kind code, beta) consumed by the numeric kernels. The quarter
        wedge and the half-plane wedge map to integer-exact tests."""
        if self.kind == "halfspace":
            return kernels.HALFSPACE, 0.0
        if self.kind == "orthant":
            return kernels.ORTHANT, 0.0
        if self.beta == math.pi / 2:
            return kernels.ORTHANT, 0.0
        if self.beta == math.pi:
            return kernels.HALFSPACE, 0.0
        return kernels.WEDGE, self.beta

    def contains(self, x) -> bool:
        x = np.asarray(x)
        if self.kind == "halfspace":
            return bool(x[-1] > 0)
        if self.kind == "orthant":
            return bool((x > 0).all())
        if not np.any(x[:2]):
            return False
        t = math.atan2(float(x[1]), float(x[0]))
        if t < 0.0:
            t += 2.0 * math.pi
        return 0.0 < t < self.beta

    def contains_points(self, pts: np.ndarray) -> np.ndarray:
        code, beta = self.kernel_code()
        return kernels.inside_points(code, beta, np.asarray(pts))

    def dist_boundary(self, x) -> float:
        x = np.asarray(x, dtype=np.float64)
        if self.kind == "halfspace":
            return float(abs(x[-1]))
        if self.kind == "orthant":
            if (x > 0).all():
                return float(x.min())
            # nearest point of the closed boundary: project onto each face
            best = math.inf
            for i in range(self.d):
                proj = np.maximum(x, 0.0)
                proj[i] = 0.0
                best = min(best, float(np.linalg.norm(x - proj)))
            return best
        # wedge boundary = the two wall rays
        return min(self._ray_dist(x, 0.0), self._ray_dist(x, self.beta))

    def _ray_dist(self, x, angle) -> float:
        w = np.array([math.cos(angle), math.sin(angle)])
        t = max(0.0, float(x @ w))
        return float(np.linalg.norm(x - t * w))

    # -- harmonic function --------------------------------------------------

    def u(self, x) -> float:
        return float(self.u_values(np.asarray(x, dtype=np.float64)))

    def u_values(self, pts: np.ndarray) -> np.ndarray:
        """u over an array of real points, shape (..., d); 0 off the cone."""
        pts = np.asarray(pts, dtype=np.float64)
        if self.kind == "halfspace" or (self.kind == "wedge"
                                        and self.beta == math.pi):
            return np.maximum(pts[..., -1], 0.0)
        if self.kind == "orthant" or (self.kind == "wedge"
                                      and self.beta == math.pi / 2):
            d = 2 if self.kind == "wedge" else self.d
            inside = (pts > 0).all(axis=-1)
            val = d ** (d / 2.0) * pts.prod(axis=-1)
            return np.where(inside, val, 0.0)
        t = np.arctan2(pts[..., 1], pts[..., 0])
        t = np.where(t < 0.0, t + 2.0 * np.pi, t)
        r = np.sqrt((pts ** 2).sum(axis=-1))
        inside = (t > 0.0) & (t < self.beta) & (r > 0)
        val = r ** self.p * np.sin(self.p * np.clip(t, 0.0, self.beta))
        return np.where(inside, val, 0.0)

    # -- DP window helpers ----------------------------------------------------

    def tighten_box(self, lo: np.ndarray, hi: np.ndarray):
        """Shrink an integer window [lo, hi] to drop rows that cannot meet
        the cone (cheap per-axis bounds only)."""
        lo = lo.copy()
        if self.kind == "halfspace":
            lo[-1] = max(lo[-1], 1)
        elif self.kind == "orthant":
            lo = np.maximum(lo, 1)
        elif self.kind == "wedge":
            if self.beta <= math.pi:
                lo[1] = max(lo[1], 1)
            if self.beta <= math.pi / 2:
                lo[0] = max(lo[0], 1)
        return lo, hi

    def grid_mask(self, lo: np.ndarray, shape) -> np.ndarray:
        """Strict-interior mask over the integer box starting at lo."""
        code, beta = self.kernel_code()
        if code == kernels.HALFSPACE:
            mask = np.zeros(shape, dtype=bool)
            start = max(0, 1 - int(lo[-1]))
            mask[..., start:] = True
            return mask
        if code == kernels.ORTHANT:
            mask = np.zeros(shape, dtype=bool)
            sl = tuple(slice(max(0, 1 - int(l)), None) for l in lo)
            mask[sl] = True
            return mask
        x0 = (np.arange(shape[0]) + lo[0]).astype(np.int64)
        x1 = (np.arange(shape[1]) + lo[1]).astype(np.int64)
        t = np.arctan2(x1[None, :], x0[:, None])
        t = np.where(t < 0.0, t + 2.0 * np.pi, t)
        origin = (x0[:, None] == 0) & (x1[None, :] == 0)
        return (t > 0.0) & (t < beta) & ~origin


def make_halfspace(d: int) -> Cone:
    if d < 1:
        raise ValueError("dimension must be >= 1")
    return Cone("halfspace", d)


def make_wedge(beta: float) -> Cone:
    if not 0.0 < beta < 2.0 * math.pi:
        raise ValueError("wedge opening angle must lie in (0, 2*pi)")
    return Cone("wedge", 2, float(beta))


def make_orthant(d: int) -> Cone:
    if d < 1:
        raise ValueError("dimension must be >= 1")
    return Cone("orthant", d)
