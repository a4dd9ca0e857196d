"""Periodic background potential and impurity law.

The impurity is ``V(n) = Psi(n/|n|) |n|^{-p}`` away from the origin and a
finite cap at the origin.  ``Psi`` lives on the unit sphere and is either
constant, a quadratic form ``c + theta^T M theta``, or a piecewise-linear
interpolation of samples (d = 1: the two directions -1, +1; d = 2: equally
spaced angles starting at angle 0).
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ModelError

__all__ = [
    "ConstantPsi",
    "ModelSpec",
    "QuadraticPsi",
    "TabulatedPsi",
    "evaluate_V",
    "psi_from_dict",
]


def _unit_directions(points):
    points = np.atleast_2d(np.asarray(points, dtype=float))
    r = np.sqrt(np.einsum("ij,ij->i", points, points))
    with np.errstate(invalid="ignore", divide="ignore"):
        theta = points / r[:, None]
    return theta, r


@dataclass(frozen=True)
class ConstantPsi:
    value: float

    kind = "constant"

    def __post_init__(self):
        if not self.value >= 0:
            raise ModelError(f"Psi must be nonnegative, got constant {self.value!r}")

    def __call__(self, theta):
        theta = np.atleast_2d(theta)
        return np.full(len(theta), float(self.value))

    def sup(self):
        return float(self.value)

    def to_dict(self):
        return {"kind": self.kind, "value": self.value}


@dataclass(frozen=True)
class QuadraticPsi:
    """``Psi(theta) = offset + theta^T M theta`` with symmetric ``M``."""

    offset: float
    matrix: tuple[tuple[float, ...], ...]

    kind = "quadratic"

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ModelError("quadratic Psi needs a square matrix")
        m = 0.5 * (m + m.T)
        object.__setattr__(self, "matrix", tuple(tuple(float(x) for x in row) for row in m))
        if self.offset + np.linalg.eigvalsh(m)[0] < 0:
            raise ModelError("quadratic Psi takes negative values on the sphere")

    @property
    def dimension(self):
        return len(self.matrix)

    def __call__(self, theta):
        theta = np.atleast_2d(np.asarray(theta, dtype=float))
        m = np.asarray(self.matrix)
        return self.offset + np.einsum("ij,jk,ik->i", theta, m, theta)

    def sup(self):
        return float(self.offset + np.linalg.eigvalsh(np.asarray(self.matrix))[-1])

    def to_dict(self):
        return {"kind": self.kind, "offset": self.offset, "matrix": [list(r) for r in self.matrix]}


@dataclass(frozen=True)
class TabulatedPsi:
    """Direction samples with piecewise-linear interpolation (d = 1 or 2)."""

    values: tuple[float, ...]
    dimension: int

    kind = "tabulated"

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if self.dimension == 1 and len(self.values) != 2:
            raise ModelError("tabulated Psi in d=1 needs exactly two values (theta=-1, theta=+1)")
        if self.dimension == 2 and len(self.values) < 3:
            raise ModelError("tabulated Psi in d=2 needs at least three angle samples")
        if self.dimension not in (1, 2):
            raise ModelError("tabulated Psi is only available for d = 1, 2")
        if min(self.values) < 0:
            raise ModelError("Psi must be nonnegative")

    def __call__(self, theta):
        theta = np.atleast_2d(np.asarray(theta, dtype=float))
        v = np.asarray(self.values)
        if self.dimension == 1:
            return np.where(theta[:, 0] < 0, v[0], v[1])
        m = len(v)
        phi = np.mod(np.arctan2(theta[:, 1], theta[:, 0]), 2 * np.pi)
        t = phi * (m / (2 * np.pi))
        j = np.minimum(np.floor(t).astype(int), m - 1)
        w = t - j
        return (1 - w) * v[j] + w * v[(j + 1) % m]

    def sup(self):
        return max(self.values)

    def to_dict(self):
        return {"kind": self.kind, "values": list(self.values)}


def psi_from_dict(data: dict, dimension: int):
    kind = data.get("kind")
    try:
        if kind == "constant":
            return ConstantPsi(float(data["value"]))
        if kind == "quadratic":
            return QuadraticPsi(float(data.get("offset", 0.0)), tuple(map(tuple, data["matrix"])))
        if kind == "tabulated":
            return TabulatedPsi(tuple(data["values"]), dimension)
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ModelError):
            raise
        raise ModelError(f"bad psi description {data!r}: {exc}") from exc
    raise ModelError(f"unknown psi kind {kind!r}; expected constant, quadratic or tabulated")


@dataclass(frozen=True)
class ModelSpec:
    """Periodic background ``f`` on Z^d plus the impurity law.

    ``cell_values`` holds ``f`` on one period cell in C order, so that
    ``f(n) = cell_values[ravel(n mod period)]``.  ``v_factor`` is an optional
    multiplicative perturbation of the exact law, ``V -> V * v_factor(n)``;
    it is not serialized.
    """

    dimension: int
    period: tuple[int, ...]
    cell_values: tuple[float, ...]
    psi: object = ConstantPsi(1.0)
    p: float = 2.0
    near_field_cap: float = 0.0
    v_factor: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "period", tuple(int(q) for q in self.period))
        object.__setattr__(self, "cell_values", tuple(float(v) for v in self.cell_values))
        if self.dimension < 1 or len(self.period) != self.dimension:
            raise ModelError(f"period {self.period} does not match dimension {self.dimension}")
        if any(q < 1 for q in self.period):
            raise ModelError("period entries must be positive")
        if len(self.cell_values) != math.prod(self.period):
            raise ModelError(
                f"cell_values has {len(self.cell_values)} entries, period needs {math.prod(self.period)}"
            )
        if not self.p > 0:
            raise ModelError(f"decay exponent p must be positive, got {self.p!r}")
        if not self.near_field_cap >= 0:
            raise ModelError("near_field_cap must be nonnegative")
        if getattr(self.psi, "dimension", self.dimension) != self.dimension:
            raise ModelError("Psi dimension does not match the model")

    @classmethod
    def free(cls, dimension=1, **kw):
        return cls(dimension, (1,) * dimension, (0.0,), **kw)

    @property
    def cell_size(self) -> int:
        return len(self.cell_values)

    @property
    def f_sup(self) -> float:
        return max(abs(v) for v in self.cell_values)

    @property
    def psi_sup(self) -> float:
        return float(self.psi.sup())

    def spectrum_bounds(self) -> tuple[float, float]:
        """Interval that contains the spectrum of the periodic operator."""
        return -self.f_sup, 4.0 * self.dimension + self.f_sup

    def f(self, sites) -> np.ndarray:
        sites = np.atleast_2d(np.asarray(sites, dtype=np.int64))
        if sites.shape[1] != self.dimension:
            raise ModelError(f"sites have dimension {sites.shape[1]}, model has {self.dimension}")
        idx = np.ravel_multi_index(np.mod(sites, self.period).T, self.period)
        return np.asarray(self.cell_values)[idx]

    def V(self, sites) -> np.ndarray:
        sites = np.atleast_2d(np.asarray(sites))
        if sites.shape[1] != self.dimension:
            raise ModelError(f"sites have dimension {sites.shape[1]}, model has {self.dimension}")
        theta, r = _unit_directions(sites)
        origin = r == 0
        out = np.empty(len(r))
        if np.any(~origin):
            out[~origin] = self.psi(theta[~origin]) * r[~origin] ** (-self.p)
        out[origin] = self.near_field_cap
        if self.v_factor is not None:
            out = out * np.asarray(self.v_factor(sites), dtype=float)
        return out

    def V_sup_on(self, sites) -> float:
        v = self.V(sites)
        return float(v.max()) if len(v) else 0.0

    def to_dict(self) -> dict:
        return {
            "d": self.dimension,
            "period": list(self.period),
            "cell_values": list(self.cell_values),
            "impurity": {
                "psi": self.psi.to_dict(),
                "p": self.p,
                "near_field_cap": self.near_field_cap,
            },
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ModelSpec":
        try:
            d = int(data["d"])
            imp = data.get("impurity", {})
            psi = psi_from_dict(imp.get("psi", {"kind": "constant", "value": 1.0}), d)
            return cls(
                d,
                tuple(data["period"]),
                tuple(data["cell_values"]),
                psi,
                float(imp.get("p", 2.0)),
                float(imp.get("near_field_cap", 0.0)),
            )
        except ModelError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise ModelError(f"bad model description: {exc}") from exc

    def model_hash(self) -> str:
        payload = self.to_dict()
        if self.v_factor is not None:
            payload["v_factor"] = getattr(self.v_factor, "__qualname__", "custom")
        text = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def evaluate_V(model: ModelSpec, n) -> float:
    """Impurity potential at a single lattice site."""
    return float(model.V(np.asarray(n).reshape(1, -1))[0])
