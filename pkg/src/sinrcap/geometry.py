"""Node placement on the unit torus and the distance-attenuation model."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

HALF_DIAGONAL = math.sqrt(2.0) / 2.0


class ValueOutOfRange(ValueError):
    """An attenuation level no distance can produce."""


@dataclass(frozen=True)
class TorusPoint:
    x: float
    y: float

    def __post_init__(self):
        object.__setattr__(self, "x", float(self.x) % 1.0)
        object.__setattr__(self, "y", float(self.y) % 1.0)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y])


@dataclass(frozen=True)
class PathLossModel:
    """Power-law attenuation ``c * d**-alpha`` held constant below ``d_near``.

    The clamp keeps the mean attenuation over the torus finite.
    """

    c: float
    alpha: float
    d_near: float = 1e-3

    def __post_init__(self):
        if not (self.c > 0 and self.alpha > 0 and self.d_near > 0):
            raise ValueError(f"path loss parameters must be positive: {self}")

    @property
    def ceiling(self) -> float:
        """Largest attainable attenuation value, reached for d <= d_near."""
        return self.c * self.d_near ** (-self.alpha)

    @classmethod
    def unit_gain(cls, c: float, alpha: float) -> "PathLossModel":
        """Clamp at the reference distance where the attenuation equals 1."""
        return cls(c, alpha, c ** (1.0 / alpha))


def _as_xy(p) -> np.ndarray:
    if isinstance(p, TorusPoint):
        return p.as_array()
    return np.asarray(p, dtype=float)


def torus_distance(a, b):
    """Wrap-around Euclidean distance; broadcasts over trailing (..., 2) arrays."""
    delta = np.abs(_as_xy(a) - _as_xy(b)) % 1.0
    delta = np.minimum(delta, 1.0 - delta)
    out = np.sqrt(np.sum(delta * delta, axis=-1))
    return float(out) if out.ndim == 0 else out


def cross_distances(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """Matrix of torus distances, shape (len(src), len(dst))."""
    dx = np.abs(src[:, None, 0] - dst[None, :, 0])
    dx = np.minimum(dx, 1.0 - dx)
    dy = np.abs(src[:, None, 1] - dst[None, :, 1])
    dy = np.minimum(dy, 1.0 - dy)
    return np.sqrt(dx * dx + dy * dy)


def path_loss(m: PathLossModel, d):
    d = np.maximum(np.asarray(d, dtype=float), m.d_near)
    out = m.c * d ** (-m.alpha)
    return float(out) if out.ndim == 0 else out


def path_loss_inverse(m: PathLossModel, v: float) -> float:
    """Distance >= d_near at which the attenuation equals ``v``."""
    if not v > 0:
        raise ValueOutOfRange(f"attenuation level must be positive, got {v}")
    if v > m.ceiling * (1 + 1e-15):
        raise ValueOutOfRange(
            f"attenuation {v:g} exceeds the ceiling {m.ceiling:g} reached at d_near={m.d_near:g}"
        )
    return max((m.c / v) ** (1.0 / m.alpha), m.d_near)


def sample_points(n: int, rng_seed) -> np.ndarray:
    """``n`` i.i.d. uniform torus points as an (n, 2) array.

    ``rng_seed`` may be an int, a SeedSequence or a Generator.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    return rng.random((n, 2))


def offset_density(r):
    """Density of the torus distance between two independent uniform points."""
    r = np.asarray(r, dtype=float)
    out = np.where(r <= 0.5, 2 * np.pi * r, 0.0)
    outer = (r > 0.5) & (r <= HALF_DIAGONAL)
    with np.errstate(invalid="ignore"):
        cut = 2 * np.pi * r - 8 * r * np.arccos(np.clip(0.5 / np.where(outer, r, 1.0), -1, 1))
    out = np.where(outer, cut, out)
    return float(out) if out.ndim == 0 else out


def disk_area(r: float) -> float:
    """Probability that the torus distance is at most ``r``."""
    if r <= 0:
        return 0.0
    if r <= 0.5:
        return math.pi * r * r
    if r >= HALF_DIAGONAL:
        return 1.0
    return math.pi / 4 + integrate.quad(offset_density, 0.5, r, epsabs=0, epsrel=1e-12)[0]


def expected_path_loss(m: PathLossModel, rtol: float = 1e-10) -> float:
    """Mean attenuation between two independent uniform torus points, by quadrature."""
    near = m.ceiling * disk_area(m.d_near)
    if m.d_near >= HALF_DIAGONAL:
        return near
    f = lambda r: m.c * r ** (-m.alpha) * offset_density(r)
    far = 0.0
    for lo, hi in ((m.d_near, 0.5), (max(m.d_near, 0.5), HALF_DIAGONAL)):
        if lo < hi:
            far += integrate.quad(f, lo, hi, epsabs=0, epsrel=rtol, limit=200)[0]
    return near + far
