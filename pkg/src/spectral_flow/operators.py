"""Finite-volume Hamiltonians ``A_Omega`` and ``A_Omega - alpha V``.

Couplings to sites outside the domain are dropped (Dirichlet restriction),
so the operator on ``l^2(Omega ∩ Z^d)`` has off-diagonal entries -1 between
nearest neighbours and diagonal ``2d + f(n) - alpha V(n)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .domain import LatticeDomain, enumerate_sites
from .errors import ModelError
from .model import ModelSpec

__all__ = ["SparseSymmetricOperator", "assemble", "assemble_perturbed", "nearest_neighbour_edges"]


@dataclass(frozen=True, eq=False)
class SparseSymmetricOperator:
    """Symmetric lattice operator with unit negative hopping.

    ``rows[k] < cols[k]`` enumerate the stored upper triangle; every stored
    coupling has value -1 and the lower triangle is its mirror image.
    """

    sites: np.ndarray
    diagonal: np.ndarray
    rows: np.ndarray
    cols: np.ndarray
    dimension: int

    @property
    def size(self) -> int:
        return len(self.diagonal)

    @cached_property
    def site_index(self) -> dict:
        return {tuple(int(c) for c in s): i for i, s in enumerate(self.sites)}

    def with_diagonal(self, diagonal) -> "SparseSymmetricOperator":
        diagonal = np.asarray(diagonal, dtype=float)
        if diagonal.shape != self.diagonal.shape:
            raise ValueError("diagonal has the wrong length")
        return SparseSymmetricOperator(self.sites, diagonal, self.rows, self.cols, self.dimension)

    def to_sparse(self, shift: float = 0.0) -> sp.csc_matrix:
        """``T - shift * I`` as a CSC matrix."""
        n = self.size
        data = np.concatenate([self.diagonal - shift, -np.ones(2 * len(self.rows))])
        i = np.concatenate([np.arange(n), self.rows, self.cols])
        j = np.concatenate([np.arange(n), self.cols, self.rows])
        return sp.csc_matrix((data, (i, j)), shape=(n, n))

    def to_dense(self) -> np.ndarray:
        m = np.diag(self.diagonal.astype(float))
        m[self.rows, self.cols] = -1.0
        m[self.cols, self.rows] = -1.0
        return m

    @cached_property
    def tridiagonal(self):
        """``(diag, offdiag)`` when every coupling joins consecutive rows, else ``None``."""
        if np.any(self.cols - self.rows != 1):
            return None
        off = np.zeros(max(self.size - 1, 0))
        off[self.rows] = -1.0
        return self.diagonal.astype(float), off

    def norm_bound(self) -> float:
        """Maximal absolute row sum (bounds the spectral radius)."""
        if self.size == 0:
            return 0.0
        degree = np.bincount(np.concatenate([self.rows, self.cols]), minlength=self.size)
        return float(np.max(np.abs(self.diagonal) + degree))

    def gershgorin_bounds(self) -> tuple[float, float]:
        if self.size == 0:
            return 0.0, 0.0
        degree = np.bincount(np.concatenate([self.rows, self.cols]), minlength=self.size)
        return float(np.min(self.diagonal - degree)), float(np.max(self.diagonal + degree))


def nearest_neighbour_edges(sites: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Index pairs ``i < j`` of lexicographically sorted sites at distance one."""
    sites = np.asarray(sites, dtype=np.int64)
    n, d = sites.shape
    if n == 0:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty
    lo = sites.min(axis=0)
    span = sites.max(axis=0) - lo + 2
    keys = np.ravel_multi_index((sites - lo).T, span)
    rows, cols = [], []
    for a in range(d):
        shifted = sites - lo
        shifted[:, a] += 1
        nb = np.ravel_multi_index(shifted.T, span)
        pos = np.searchsorted(keys, nb)
        pos_c = np.minimum(pos, n - 1)
        hit = keys[pos_c] == nb
        rows.append(np.nonzero(hit)[0])
        cols.append(pos_c[hit])
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    order = np.lexsort((cols, rows))
    return rows[order], cols[order]


def assemble(domain: LatticeDomain, model: ModelSpec) -> SparseSymmetricOperator:
    """The unperturbed Hamiltonian restricted to the lattice points of ``domain``."""
    if domain.dimension != model.dimension:
        raise ModelError(
            f"dimension mismatch: domain has d={domain.dimension}, model has d={model.dimension}"
        )
    sites = enumerate_sites(domain)
    rows, cols = nearest_neighbour_edges(sites)
    diag = 2.0 * model.dimension + (model.f(sites) if len(sites) else np.zeros(0))
    return SparseSymmetricOperator(sites, diag, rows, cols, model.dimension)


def assemble_perturbed(
    domain: LatticeDomain, model: ModelSpec, alpha: float, base: SparseSymmetricOperator | None = None
) -> SparseSymmetricOperator:
    """``A_Omega - alpha V``; pass ``base`` to reuse an already assembled ``A_Omega``."""
    if not alpha >= 0:
        raise ValueError(f"coupling alpha must be nonnegative, got {alpha!r}")
    if base is None:
        base = assemble(domain, model)
    if base.size == 0:
        return base
    return base.with_diagonal(base.diagonal - alpha * model.V(base.sites))
