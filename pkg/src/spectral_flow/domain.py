"""Bounded regions of R^d and the lattice points they contain.

Every shape is described by exact defining inequalities that are evaluated
in floating point without any membership tolerance.  Sites are always
returned in lexicographic order so that matrices assembled from them are
reproducible bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import ClassVar

import numpy as np

from .errors import DomainError

__all__ = [
    "Annulus",
    "Ball",
    "Box",
    "CubeCell",
    "LatticeDomain",
    "RegionSplit",
    "boundary_links",
    "cut_links",
    "domain_from_dict",
    "enumerate_sites",
    "scale",
    "unit_ball_volume",
]

_UNIT_BALL = {1: 2.0, 2: math.pi, 3: 4.0 * math.pi / 3.0, 4: math.pi**2 / 2.0}


def unit_ball_volume(d: int) -> float:
    """Volume of the unit ball in R^d."""
    if d in _UNIT_BALL:
        return _UNIT_BALL[d]
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1)


def _radii(points: np.ndarray) -> np.ndarray:
    points = np.asarray(points, dtype=float)
    return np.sqrt(np.einsum("ij,ij->i", points, points))


class LatticeDomain:
    """Common interface of all region shapes.

    Subclasses are frozen dataclasses holding a ``dimension`` field and the
    defining lengths of the shape.
    """

    shape: ClassVar[str] = ""
    dimension: int

    def contains(self, points: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def scaled(self, beta: float) -> "LatticeDomain":
        raise NotImplementedError

    def volume(self) -> float:
        raise NotImplementedError

    def params(self) -> dict:
        raise NotImplementedError

    def to_dict(self) -> dict:
        return {"shape": self.shape, "params": self.params(), "dimension": self.dimension}

    @property
    def bounded(self) -> bool:
        lo, hi = self.bounding_box()
        return bool(np.all(np.isfinite(lo)) and np.all(np.isfinite(hi)))


def _check_dimension(d):
    if int(d) != d or d < 1:
        raise DomainError(f"dimension must be a positive integer, got {d!r}")


@dataclass(frozen=True)
class Ball(LatticeDomain):
    """Open ball ``|x| < radius``."""

    radius: float
    dimension: int = 1
    shape: ClassVar[str] = "ball"

    def __post_init__(self):
        _check_dimension(self.dimension)
        if not self.radius >= 0:
            raise DomainError(f"ball radius must be nonnegative, got {self.radius!r}")

    def contains(self, points):
        return _radii(points) < self.radius

    def bounding_box(self):
        r = np.full(self.dimension, float(self.radius))
        return -r, r

    def scaled(self, beta):
        return Ball(self.radius * beta, self.dimension)

    def volume(self):
        return unit_ball_volume(self.dimension) * self.radius**self.dimension

    def params(self):
        return {"radius": self.radius}


@dataclass(frozen=True)
class Annulus(LatticeDomain):
    """Spherical shell between two radii.

    Both bounding spheres belong to the shell by default; each side can be
    made open independently (``r_inner < |x|`` and ``|x| < r_outer``).
    """

    r_inner: float
    r_outer: float
    dimension: int = 1
    closed_inner: bool = True
    closed_outer: bool = True
    shape: ClassVar[str] = "annulus"

    def __post_init__(self):
        _check_dimension(self.dimension)
        if not (0 <= self.r_inner <= self.r_outer):
            raise DomainError(
                f"annulus needs 0 <= r_inner <= r_outer, got {self.r_inner!r}, {self.r_outer!r}"
            )

    def contains(self, points):
        r = _radii(points)
        inner = r >= self.r_inner if self.closed_inner else r > self.r_inner
        outer = r <= self.r_outer if self.closed_outer else r < self.r_outer
        return inner & outer

    def bounding_box(self):
        r = np.full(self.dimension, float(self.r_outer))
        return -r, r

    def scaled(self, beta):
        return Annulus(
            self.r_inner * beta,
            self.r_outer * beta,
            self.dimension,
            self.closed_inner,
            self.closed_outer,
        )

    def volume(self):
        d = self.dimension
        return unit_ball_volume(d) * (self.r_outer**d - self.r_inner**d)

    def params(self):
        return {
            "r_inner": self.r_inner,
            "r_outer": self.r_outer,
            "closed_inner": self.closed_inner,
            "closed_outer": self.closed_outer,
        }


@dataclass(frozen=True)
class Box(LatticeDomain):
    """Closed box ``|x_a| <= half_widths[a]`` for every axis."""

    half_widths: tuple[float, ...]
    shape: ClassVar[str] = "box"

    def __post_init__(self):
        object.__setattr__(self, "half_widths", tuple(float(h) for h in self.half_widths))
        if not self.half_widths or any(not h >= 0 for h in self.half_widths):
            raise DomainError(f"box half widths must be nonnegative, got {self.half_widths!r}")

    @property
    def dimension(self):
        return len(self.half_widths)

    def contains(self, points):
        points = np.asarray(points, dtype=float)
        return np.all(np.abs(points) <= np.asarray(self.half_widths), axis=1)

    def bounding_box(self):
        h = np.asarray(self.half_widths)
        return -h, h

    def scaled(self, beta):
        return Box(tuple(h * beta for h in self.half_widths))

    def volume(self):
        return float(np.prod([2.0 * h for h in self.half_widths]))

    def params(self):
        return {"half_widths": list(self.half_widths)}


@dataclass(frozen=True)
class CubeCell(LatticeDomain):
    """Half-open cube ``side * ([0, 1)^d + corner)`` with integer ``corner``."""

    corner: tuple[int, ...]
    side: float
    shape: ClassVar[str] = "cube_cell"

    def __post_init__(self):
        object.__setattr__(self, "corner", tuple(int(c) for c in self.corner))
        if not self.corner:
            raise DomainError("cube cell needs a nonempty corner vector")
        if not self.side > 0:
            raise DomainError(f"cube side must be positive, got {self.side!r}")

    @property
    def dimension(self):
        return len(self.corner)

    def contains(self, points):
        points = np.asarray(points, dtype=float)
        lo, hi = self.bounding_box()
        return np.all((points >= lo) & (points < hi), axis=1)

    def bounding_box(self):
        c = np.asarray(self.corner, dtype=float)
        return c * self.side, (c + 1.0) * self.side

    def scaled(self, beta):
        return CubeCell(self.corner, self.side * beta)

    def volume(self):
        return float(self.side) ** self.dimension

    def params(self):
        return {"corner": list(self.corner), "side": self.side}


_SHAPES = {cls.shape: cls for cls in (Ball, Annulus, Box, CubeCell)}


def domain_from_dict(data: dict) -> LatticeDomain:
    """Inverse of :meth:`LatticeDomain.to_dict`."""
    try:
        shape = data["shape"]
        params = dict(data.get("params", {}))
        dimension = int(data["dimension"])
    except (KeyError, TypeError, ValueError) as exc:
        raise DomainError(f"domain object needs 'shape', 'params' and 'dimension': {exc}") from exc
    if shape not in _SHAPES:
        raise DomainError(f"unknown domain shape {shape!r}; expected one of {sorted(_SHAPES)}")
    try:
        if shape in ("ball", "annulus"):
            dom = _SHAPES[shape](dimension=dimension, **params)
        else:
            dom = _SHAPES[shape](**params)
    except TypeError as exc:
        raise DomainError(f"bad parameters for {shape}: {exc}") from exc
    if dom.dimension != dimension:
        raise DomainError(f"{shape} parameters describe dimension {dom.dimension}, not {dimension}")
    return dom


def enumerate_sites(domain: LatticeDomain) -> np.ndarray:
    """Lattice points of ``domain`` as an ``(n, d)`` integer array in lexicographic order."""
    if not domain.bounded:
        raise DomainError("unbounded domain")
    lo, hi = domain.bounding_box()
    lo = np.floor(lo).astype(np.int64)
    hi = np.ceil(hi).astype(np.int64)
    axes = [np.arange(a, b + 1, dtype=np.int64) for a, b in zip(lo, hi)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, domain.dimension)
    return grid[domain.contains(grid)]


def scale(domain: LatticeDomain, beta: float) -> LatticeDomain:
    """The domain ``beta * Omega``; every defining length is multiplied by ``beta``."""
    if not beta > 0:
        raise DomainError(f"scaling factor must be positive, got {beta!r}")
    return domain.scaled(beta)


def _unit_vectors(d):
    return np.eye(d, dtype=np.int64)


def boundary_links(domain: LatticeDomain) -> int:
    """Number of nearest-neighbour pairs with exactly one endpoint in ``domain``."""
    sites = enumerate_sites(domain)
    if len(sites) == 0:
        return 0
    total = 0
    for e in _unit_vectors(domain.dimension):
        for step in (e, -e):
            total += int(np.count_nonzero(~domain.contains(sites + step)))
    return total


@dataclass(frozen=True)
class RegionSplit:
    """Three-region decomposition of R^d at radii ``eps * alpha**(1/p)``.

    Region 1 is the open inner ball, region 2 the closed shell between the
    two spheres and region 3 the open exterior, so every point belongs to
    exactly one of them.
    """

    eps1: float
    eps2: float
    alpha: float
    p: float

    def __post_init__(self):
        if not (0 < self.eps1 < self.eps2):
            raise DomainError(f"need 0 < eps1 < eps2, got {self.eps1!r}, {self.eps2!r}")
        if not self.alpha > 0 or not self.p > 0:
            raise DomainError("alpha and p must be positive")

    @property
    def r1(self) -> float:
        return self.eps1 * self.alpha ** (1.0 / self.p)

    @property
    def r2(self) -> float:
        return self.eps2 * self.alpha ** (1.0 / self.p)

    def in_region(self, k: int, points: np.ndarray) -> np.ndarray:
        r = _radii(points)
        if k == 1:
            return r < self.r1
        if k == 2:
            return (self.r1 <= r) & (r <= self.r2)
        if k == 3:
            return r > self.r2
        raise ValueError(f"region index must be 1, 2 or 3, got {k!r}")

    def region_of(self, points: np.ndarray) -> np.ndarray:
        r = _radii(points)
        out = np.full(r.shape, 2, dtype=np.int8)
        out[r < self.r1] = 1
        out[r > self.r2] = 3
        return out

    def domain(self, k: int, dimension: int, outer_radius: float = math.inf) -> LatticeDomain:
        """Region ``k`` as a domain; region 3 is truncated to ``|x| < outer_radius``."""
        if k == 1:
            return Ball(self.r1, dimension)
        if k == 2:
            return Annulus(self.r1, self.r2, dimension)
        if k == 3:
            outer = max(outer_radius, self.r2)
            return Annulus(self.r2, outer, dimension, closed_inner=False, closed_outer=False)
        raise ValueError(f"region index must be 1, 2 or 3, got {k!r}")


def cut_links(split: RegionSplit, truncation: LatticeDomain) -> int:
    """Links inside ``truncation`` whose endpoints lie in different regions.

    Each link is counted once even if it crosses both splitting spheres.
    """
    sites = enumerate_sites(truncation)
    if len(sites) == 0:
        return 0
    labels = split.region_of(sites)
    total = 0
    for e in _unit_vectors(truncation.dimension):
        nb = sites + e
        inside = truncation.contains(nb)
        total += int(np.count_nonzero(inside & (split.region_of(nb) != labels)))
    return total
