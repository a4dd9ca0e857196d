"""Exact eigenvalue counting through matrix inertia.

By Sylvester's law of inertia, the number of negative pivots in a
congruence factorization ``T - lam I = L D L^T`` equals the number of
eigenvalues of ``T`` strictly below ``lam``.  Three factorizations are
available:

* ``"sturm"``: the Sturm sequence of a tridiagonal matrix (d = 1 chains);
* ``"sparse"``: SuperLU with symmetric (diagonal) pivoting and a
  fill-reducing symmetric ordering, read off from the signs of ``diag(U)``;
* ``"ldl"``: dense Bunch-Kaufman ``LDL^T`` with 1x1 and 2x2 pivot blocks.

``"eig"`` counts a dense eigensolve and is the default below
:data:`DENSE_CUTOFF` rows.

Counts are strict (eigenvalues ``< lam``).  A threshold closer than
``HITS_TOL * ||T||`` to an eigenvalue is reported as
:class:`ThresholdHitsSpectrum` rather than resolved either way.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import FactorizationError, ThresholdHitsSpectrum
from .operators import SparseSymmetricOperator

__all__ = [
    "DENSE_CUTOFF",
    "HITS_TOL",
    "InertiaResult",
    "SpectrumCounter",
    "count_below",
    "eigenvalues_in_window",
    "inertia",
    "ldl_inertia",
    "n_plus",
    "sturm_count",
]

#: relative tolerance for "threshold hits spectrum" and pivot sanity checks
HITS_TOL = 1e-9
DENSE_CUTOFF = 512
MAX_WINDOW_EIGENVALUES = 10**6
_GROWTH_LIMIT = 1e12


@dataclass(frozen=True)
class InertiaResult:
    negatives: int
    zeros: int
    positives: int

    @property
    def size(self):
        return self.negatives + self.zeros + self.positives


def sturm_count(diag, off, lams) -> np.ndarray:
    """Number of eigenvalues strictly below each entry of ``lams``.

    ``diag`` and ``off`` are the diagonal and first off-diagonal of a
    symmetric tridiagonal matrix.  A vanishing pivot is replaced by
    ``+pivmin``, which amounts to evaluating at ``lam - 0`` and keeps the
    count strict when ``lam`` is itself an eigenvalue.
    """
    diag = np.asarray(diag, dtype=float)
    e2 = np.asarray(off, dtype=float) ** 2
    lams = np.atleast_1d(np.asarray(lams, dtype=float))
    n = len(diag)
    if n == 0:
        return np.zeros(len(lams), dtype=np.int64)
    pivmin = np.finfo(float).tiny * max(1.0, float(e2.max()) if len(e2) else 1.0)

    if len(lams) <= 4:
        d = diag.tolist()
        ee = e2.tolist()
        out = []
        for lam in lams.tolist():
            q = d[0] - lam
            if abs(q) < pivmin:
                q = pivmin
            c = 1 if q < 0 else 0
            for i in range(1, n):
                q = d[i] - lam - ee[i - 1] / q
                if abs(q) < pivmin:
                    q = pivmin
                if q < 0:
                    c += 1
            out.append(c)
        return np.asarray(out, dtype=np.int64)

    q = diag[0] - lams
    q = np.where(np.abs(q) < pivmin, pivmin, q)
    count = (q < 0).astype(np.int64)
    for i in range(1, n):
        q = diag[i] - lams - e2[i - 1] / q
        q = np.where(np.abs(q) < pivmin, pivmin, q)
        count += q < 0
    return count


def ldl_inertia(m: np.ndarray) -> InertiaResult:
    """Inertia of a dense symmetric matrix from its Bunch-Kaufman factorization."""
    m = np.asarray(m, dtype=float)
    n = len(m)
    if n == 0:
        return InertiaResult(0, 0, 0)
    _, d, _ = sla.ldl(m, lower=True, hermitian=True)
    neg = zero = pos = 0
    i = 0
    while i < n:
        if i + 1 < n and d[i + 1, i] != 0.0:
            ev = np.linalg.eigvalsh(d[i : i + 2, i : i + 2])
            i += 2
        else:
            ev = (d[i, i],)
            i += 1
        for v in ev:
            if v < 0:
                neg += 1
            elif v > 0:
                pos += 1
            else:
                zero += 1
    return InertiaResult(neg, zero, pos)


def _sparse_negatives(a: sp.spmatrix, lam: float, norm: float) -> int:
    n = a.shape[0]
    m = (a - lam * sp.identity(n, format="csc")).tocsc()
    try:
        lu = splu(
            m,
            permc_spec="MMD_AT_PLUS_A",
            diag_pivot_thresh=0.0,
            options={"SymmetricMode": True},
        )
    except RuntimeError as exc:
        raise FactorizationError(
            f"sparse LDL^T broke down at lam={lam!r} ({exc}); perturb lam or use method='ldl'"
        ) from exc
    if not np.array_equal(lu.perm_r, lu.perm_c):
        raise FactorizationError(
            "factorization used a non-symmetric pivot; inertia unavailable, use method='ldl'"
        )
    piv = lu.U.diagonal()
    if np.max(np.abs(piv)) > _GROWTH_LIMIT * max(norm, 1.0):
        raise FactorizationError(
            f"pivot growth too large at lam={lam!r}; refine lam or use method='ldl'"
        )
    return int(np.count_nonzero(piv < 0))


class SpectrumCounter:
    """Reusable counting engine for one symmetric matrix.

    Accepts a :class:`SparseSymmetricOperator`, a scipy sparse matrix or a
    dense array.  ``raw`` returns unguarded strict counts; :meth:`inertia`
    and :meth:`count_below` apply the hits-spectrum guard.
    """

    def __init__(self, matrix, method: str | None = None, tol: float = HITS_TOL):
        self.tol = tol
        tri = None
        if isinstance(matrix, SparseSymmetricOperator):
            self.size = matrix.size
            self.norm = matrix.norm_bound()
            tri = matrix.tridiagonal
            to_sparse, to_dense = matrix.to_sparse, matrix.to_dense
        elif sp.issparse(matrix):
            csc = matrix.tocsc()
            self.size = csc.shape[0]
            self.norm = float(abs(csc).sum(axis=1).max()) if self.size else 0.0
            to_sparse, to_dense = (lambda: csc), csc.toarray
        else:
            dense = np.asarray(matrix, dtype=float)
            if dense.ndim != 2 or dense.shape[0] != dense.shape[1]:
                raise ValueError("expected a square matrix")
            self.size = dense.shape[0]
            self.norm = float(np.abs(dense).sum(axis=1).max()) if self.size else 0.0
            to_sparse, to_dense = (lambda: sp.csc_matrix(dense)), (lambda: dense)

        if method is None:
            if tri is not None:
                method = "sturm"
            elif self.size < DENSE_CUTOFF:
                method = "eig"
            else:
                method = "sparse"
        if method not in ("sturm", "sparse", "ldl", "eig"):
            raise ValueError(f"unknown counting method {method!r}")
        if method == "sturm" and tri is None:
            raise ValueError("Sturm counting needs a tridiagonal SparseSymmetricOperator")
        self.method = method
        self._tri = tri
        self._sparse = to_sparse() if method == "sparse" else None
        self._dense = to_dense() if method in ("eig", "ldl") else None
        self._eigs = None
        self._to_sparse = to_sparse

    @property
    def tau(self) -> float:
        return self.tol * max(self.norm, 1.0)

    def raw(self, lams) -> np.ndarray:
        """Strict counts ``#{eig < lam}`` for each threshold, without any guard."""
        lams = np.atleast_1d(np.asarray(lams, dtype=float))
        if self.size == 0:
            return np.zeros(len(lams), dtype=np.int64)
        if self.method == "sturm":
            return sturm_count(self._tri[0], self._tri[1], lams)
        if self.method == "eig":
            if self._eigs is None:
                self._eigs = np.linalg.eigvalsh(self._dense)
            return np.searchsorted(self._eigs, lams, side="left").astype(np.int64)
        if self.method == "ldl":
            eye = np.eye(self.size)
            return np.asarray([ldl_inertia(self._dense - x * eye).negatives for x in lams], dtype=np.int64)
        return np.asarray([_sparse_negatives(self._sparse, x, self.norm) for x in lams], dtype=np.int64)

    def inertia(self, lam: float) -> InertiaResult:
        """Inertia of ``T - lam I`` with eigenvalues within ``tau`` of ``lam`` counted as zeros."""
        lo, hi = self.raw([lam - self.tau, lam + self.tau])
        return InertiaResult(int(lo), int(hi - lo), int(self.size - hi))

    def count_below(self, lam: float) -> int:
        res = self.inertia(lam)
        if res.zeros:
            raise ThresholdHitsSpectrum(lam, res.zeros)
        return res.negatives


def inertia(T, lam: float, method: str | None = None, tol: float = HITS_TOL) -> InertiaResult:
    return SpectrumCounter(T, method, tol).inertia(lam)


def count_below(T, lam: float, method: str | None = None, tol: float = HITS_TOL) -> int:
    """Number of eigenvalues of ``T`` strictly smaller than ``lam``.

    Raises :class:`ThresholdHitsSpectrum` when ``lam`` is within
    ``tol * ||T||`` of an eigenvalue.
    """
    return SpectrumCounter(T, method, tol).count_below(lam)


def _inverse_iteration(counter, mu, lo, hi, steps=3):
    a = counter._sparse if counter._sparse is not None else counter._to_sparse()
    n = a.shape[0]
    try:
        lu = splu((a - mu * sp.identity(n, format="csc")).tocsc())
    except RuntimeError:
        return mu
    x = np.cos(np.arange(1, n + 1) * 0.7071) + 0.5
    for _ in range(steps):
        y = lu.solve(x)
        nrm = np.linalg.norm(y)
        if not np.isfinite(nrm) or nrm == 0:
            return mu
        x = y / nrm
    rq = float(x @ (a @ x))
    return rq if lo <= rq <= hi else mu


def eigenvalues_in_window(T, a: float, b: float, tol: float = 1e-10, method: str | None = None) -> np.ndarray:
    """Sorted eigenvalues of ``T`` inside the open window ``(a, b)``.

    Each eigenvalue is isolated by bisection on strict counts and then
    polished by a few steps of inverse iteration (the Rayleigh quotient is
    kept only if it stays inside the bisection bracket).
    """
    if not a < b:
        raise ValueError("window needs a < b")
    counter = T if isinstance(T, SpectrumCounter) else SpectrumCounter(T, method)
    # eigenvalues equal to a are not in the open window
    na, nb = (int(c) for c in counter.raw([np.nextafter(a, np.inf), b]))
    m = nb - na
    if m <= 0:
        return np.zeros(0)
    if m > MAX_WINDOW_EIGENVALUES:
        raise ValueError("window too wide")
    target = np.arange(na, nb)
    lo = np.full(m, float(a))
    hi = np.full(m, float(b))
    width_goal = 1e-2 * tol
    while np.max(hi - lo) > width_goal:
        mid = 0.5 * (lo + hi)
        if np.all((mid == lo) | (mid == hi)):
            break
        c = counter.raw(mid)
        above = c > target
        hi = np.where(above, mid, hi)
        lo = np.where(above, lo, mid)
    approx = 0.5 * (lo + hi)
    refined = np.array(
        [_inverse_iteration(counter, mu, l - tol, h + tol) for mu, l, h in zip(approx, lo, hi)]
    )
    return np.sort(refined)


def n_plus(X, s: float, tol: float = HITS_TOL) -> int:
    """Number of eigenvalues of the symmetric matrix ``X`` strictly greater than ``s > 0``."""
    if not s > 0:
        raise ValueError(f"n_plus needs s > 0, got {s!r}")
    X = np.asarray(X, dtype=float)
    n = len(X)
    if n == 0:
        return 0
    norm = float(np.abs(X).sum(axis=1).max())
    tau = tol * max(norm, 1.0)
    eye = np.eye(n)
    above_lo = ldl_inertia(X - (s - tau) * eye).positives
    above_hi = ldl_inertia(X - (s + tau) * eye).positives
    if above_lo != above_hi:
        raise ThresholdHitsSpectrum(s, above_lo - above_hi)
    return above_hi
