"""Integrated density of states tables and the finite-volume estimate.

Two independent routes produce ``rho``:

* Bloch quadrature (:func:`spectral_flow.bloch.ids_bloch`);
* the finite-volume ratio ``N(A_{beta Omega}, lam) / (beta^d vol Omega)``
  for an increasing sequence of ``beta``.

Tables are written as CSV with header ``lambda,rho,provenance,model_hash``
and cached under ``$SPECTRAL_FLOW_CACHE`` keyed by a content hash.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bloch import band_edges, ids_bloch
from .domain import LatticeDomain, scale
from .eigencount import SpectrumCounter
from .model import ModelSpec
from .operators import assemble

__all__ = [
    "CACHE_ENV",
    "DosTable",
    "FiniteVolumeEstimate",
    "bloch_dos_table",
    "cached_dos_table",
    "default_lambda_grid",
    "finite_volume_dos_table",
    "ids_finite_volume",
]

CACHE_ENV = "SPECTRAL_FLOW_CACHE"
CSV_HEADER = ("lambda", "rho", "provenance", "model_hash")


@dataclass(frozen=True, eq=False)
class DosTable:
    """``rho`` sampled on a sorted ``lambda`` grid; linear interpolation in between."""

    lambda_grid: np.ndarray
    rho_values: np.ndarray
    provenance: str
    model_hash: str

    def __post_init__(self):
        lam = np.asarray(self.lambda_grid, dtype=float)
        rho = np.asarray(self.rho_values, dtype=float)
        if lam.ndim != 1 or lam.shape != rho.shape or len(lam) < 2:
            raise ValueError("DosTable needs matching 1-d grids with at least two points")
        if np.any(np.diff(lam) <= 0):
            raise ValueError("lambda grid must be strictly increasing")
        object.__setattr__(self, "lambda_grid", lam)
        object.__setattr__(self, "rho_values", rho)

    def __call__(self, lam):
        return np.interp(lam, self.lambda_grid, self.rho_values)

    def covers(self, lo: float, hi: float) -> bool:
        return bool(self.lambda_grid[0] <= lo and self.lambda_grid[-1] >= hi)

    def is_monotone(self) -> bool:
        return bool(np.all(np.diff(self.rho_values) >= 0))

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for lam, rho in zip(self.lambda_grid, self.rho_values):
            w.writerow((repr(float(lam)), repr(float(rho)), self.provenance, self.model_hash))
        return buf.getvalue()

    def write_csv(self, path) -> Path:
        return atomic_write_text(Path(path), self.to_csv_text())

    @classmethod
    def from_csv(cls, path) -> "DosTable":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows or tuple(rows[0]) != CSV_HEADER:
            raise ValueError(f"{path}: expected header {','.join(CSV_HEADER)}")
        body = rows[1:]
        lam = [float(r[0]) for r in body]
        rho = [float(r[1]) for r in body]
        return cls(np.array(lam), np.array(rho), body[0][2], body[0][3])


def atomic_write_text(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def default_lambda_grid(model: ModelSpec, n_points: int = 1201, margin: float = 1.0) -> np.ndarray:
    lo, hi = model.spectrum_bounds()
    return np.linspace(lo - margin, hi + margin, n_points)


def bloch_dos_table(
    model: ModelSpec, lambda_grid=None, n_points: int = 1201, n_k: int | None = None
) -> DosTable:
    """Bloch-route table; band edges are inserted into the grid so flat gaps are resolved."""
    if lambda_grid is None:
        lambda_grid = np.union1d(default_lambda_grid(model, n_points), band_edges(model, n_k))
    grid = np.unique(np.asarray(lambda_grid, dtype=float))
    rho = np.array([ids_bloch(model, float(x), n_k) for x in grid])
    return DosTable(grid, rho, "bloch", model.model_hash())


@dataclass(frozen=True)
class FiniteVolumeEstimate:
    lam: float
    betas: tuple
    ratios: tuple
    value: float
    error: float
    collisions: tuple = field(default=())


def _fv_counts(model, domain, lams):
    """Strict counts below each threshold plus a per-threshold collision flag."""
    op = assemble(domain, model)
    counter = SpectrumCounter(op)
    tau = counter.tau
    lams = np.asarray(lams, dtype=float)
    lo = counter.raw(lams - tau)
    hi = counter.raw(lams + tau)
    return lo, hi != lo


def ids_finite_volume(
    model: ModelSpec, lam: float, beta_sequence, base_domain: LatticeDomain
) -> FiniteVolumeEstimate:
    """Ratios ``N(A_{beta Omega}, lam) / (beta^d vol Omega)``; the last one is the estimate.

    A threshold that hits an eigenvalue of a finite matrix is counted with the
    strict convention (the coinciding eigenvalue is excluded) and recorded
    in ``collisions``.
    """
    betas = tuple(float(b) for b in beta_sequence)
    if len(betas) < 2:
        raise ValueError("beta sequence needs at least two entries")
    if any(b2 <= b1 for b1, b2 in zip(betas, betas[1:])):
        raise ValueError("beta sequence must be increasing")
    vol = base_domain.volume()
    if not vol > 0:
        raise ValueError("base domain must have positive volume")
    d = base_domain.dimension
    ratios, collisions = [], []
    for beta in betas:
        counts, hit = _fv_counts(model, scale(base_domain, beta), [lam])
        ratios.append(float(counts[0]) / (beta**d * vol))
        if hit[0]:
            collisions.append(beta)
    return FiniteVolumeEstimate(
        float(lam), betas, tuple(ratios), ratios[-1], abs(ratios[-1] - ratios[-2]), tuple(collisions)
    )


def finite_volume_dos_table(
    model: ModelSpec, lambda_grid, beta: float, base_domain: LatticeDomain
) -> DosTable:
    """Finite-volume table at a single ``beta`` (one assembly, all thresholds at once)."""
    grid = np.unique(np.asarray(lambda_grid, dtype=float))
    counts, _ = _fv_counts(model, scale(base_domain, beta), grid)
    rho = counts / (beta**base_domain.dimension * base_domain.volume())
    return DosTable(grid, rho, f"finite_volume({beta:g})", model.model_hash())


def _cache_key(model: ModelSpec, request: dict) -> str:
    text = json.dumps({"model": model.model_hash(), **request}, sort_keys=True)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def cache_dir(explicit=None) -> Path | None:
    if explicit is not None:
        return Path(explicit)
    env = os.environ.get(CACHE_ENV)
    return Path(env) if env else None


def cached_dos_table(model: ModelSpec, n_points: int = 1201, n_k: int | None = None, directory=None):
    """Bloch table from the cache when present, otherwise computed and stored.

    Returns ``(table, hit)``.  Without a cache directory nothing is stored.
    """
    root = cache_dir(directory)
    key = _cache_key(model, {"route": "bloch", "n_points": n_points, "n_k": n_k})
    path = root / f"dos_{key}.csv" if root is not None else None
    if path is not None and path.exists():
        table = DosTable.from_csv(path)
        if table.model_hash == model.model_hash():
            return table, True
    table = bloch_dos_table(model, n_points=n_points, n_k=n_k)
    if path is not None:
        table.write_csv(path)
    return table, False
