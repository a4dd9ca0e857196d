"""Floquet-Bloch reduction of the periodic operator.

For quasimomentum ``k`` (one component per axis, in ``[0, 2 pi)``) the
periodic operator acts on Bloch waves ``u(n + q_a e_a) = exp(i k_a) u(n)``
and reduces to a Hermitian matrix on one period cell.  Sweeping ``k`` over
the reduced zone yields the bands; their union is the spectrum.

The integrated density of states is the fraction of the zone, summed over
bands and divided by the cell size, on which a band lies below ``lam``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq, minimize, minimize_scalar

from .model import ModelSpec

__all__ = [
    "BandStructure",
    "band_energies",
    "band_structure",
    "bloch_matrix",
    "default_k_points",
    "find_gap",
    "ids_bloch",
]

GAP_TOL = 1e-8
_REFINE = 4


def default_k_points(d: int) -> int:
    return {1: 256, 2: 64}.get(d, 16)


def _cell_sites(model: ModelSpec) -> np.ndarray:
    return np.array(list(np.ndindex(*model.period)), dtype=np.int64).reshape(-1, model.dimension)


def bloch_matrices(model: ModelSpec, ks) -> np.ndarray:
    """Stack of Bloch matrices, shape ``(K, Q, Q)``, for quasimomenta ``ks`` of shape ``(K, d)``."""
    ks = np.atleast_2d(np.asarray(ks, dtype=float))
    d = model.dimension
    if ks.shape[1] != d:
        raise ValueError(f"quasimomentum must have {d} components")
    cells = _cell_sites(model)
    q = np.asarray(model.period)
    nq = len(cells)
    h = np.zeros((len(ks), nq, nq), dtype=complex)
    idx = np.arange(nq)
    h[:, idx, idx] = 2.0 * d + np.asarray(model.cell_values)
    for a in range(d):
        nb = cells.copy()
        nb[:, a] += 1
        wrapped = nb[:, a] == q[a]
        nb[:, a] %= q[a]
        t = np.ravel_multi_index(nb.T, model.period)
        phase = np.where(wrapped[None, :], np.exp(1j * ks[:, a])[:, None], 1.0)
        for s in range(nq):
            h[:, s, t[s]] -= phase[:, s]
            h[:, t[s], s] -= np.conj(phase[:, s])
    return h


def bloch_matrix(model: ModelSpec, k) -> np.ndarray:
    """Hermitian Bloch matrix of size ``prod(period)`` at quasimomentum ``k``."""
    k = np.atleast_1d(np.asarray(k, dtype=float))
    return bloch_matrices(model, k.reshape(1, -1))[0]


def band_energies(model: ModelSpec, ks) -> np.ndarray:
    """Sorted band energies, shape ``(K, Q)``."""
    return np.linalg.eigvalsh(bloch_matrices(model, ks))


def _band(model, j):
    def energy(k):
        return float(np.linalg.eigvalsh(bloch_matrix(model, k))[j])

    return energy


def _grid(d, n):
    axis = 2.0 * np.pi * np.arange(n) / n
    return np.stack(np.meshgrid(*([axis] * d), indexing="ij"), axis=-1).reshape(-1, d)


@lru_cache(maxsize=32)
def _grid_bands(model: ModelSpec, n: int) -> np.ndarray:
    """Band energies on the uniform ``n^d`` grid, shape ``(n,)*d + (Q,)``."""
    d = model.dimension
    e = band_energies(model, _grid(d, n))
    e.setflags(write=False)
    return e.reshape((n,) * d + (model.cell_size,))


def _polish(model, j, k0, sign, h):
    """Locally optimize band ``j`` (``sign=+1``: minimum, ``-1``: maximum) near ``k0``."""
    f = _band(model, j)
    g = lambda k: sign * f(k)  # noqa: E731
    if model.dimension == 1:
        res = minimize_scalar(
            lambda x: g([x]), bounds=(k0[0] - h, k0[0] + h), method="bounded", options={"xatol": 1e-12}
        )
        k_best, v_best = np.array([res.x]), res.fun
    else:
        res = minimize(g, k0, method="Nelder-Mead", options={"xatol": 1e-10, "fatol": 1e-14})
        k_best, v_best = res.x, res.fun
    if v_best < g(k0):
        return sign * v_best, np.mod(k_best, 2 * np.pi)
    return sign * g(k0), np.asarray(k0, dtype=float)


@dataclass(frozen=True)
class BandStructure:
    k_samples: np.ndarray
    bands: np.ndarray
    band_ranges: np.ndarray
    extremum_k: np.ndarray
    gaps: tuple

    @property
    def gap_list(self):
        return list(self.gaps)


@lru_cache(maxsize=32)
def band_structure(model: ModelSpec, n_k: int | None = None) -> BandStructure:
    """Bands on a uniform grid, with band extrema polished by local optimization.

    ``gaps`` lists the bounded intervals between the union of band ranges,
    i.e. open intervals with no band value inside.
    """
    d = model.dimension
    n = n_k or default_k_points(d)
    ks = _grid(d, n)
    e = band_energies(model, ks)
    nq = model.cell_size
    h = 2.0 * np.pi / n
    ranges = np.empty((nq, 2))
    ext_k = np.empty((nq, 2, d))
    for j in range(nq):
        i_min, i_max = int(np.argmin(e[:, j])), int(np.argmax(e[:, j]))
        ranges[j, 0], ext_k[j, 0] = _polish(model, j, ks[i_min], +1, h)
        ranges[j, 1], ext_k[j, 1] = _polish(model, j, ks[i_max], -1, h)
    gaps = []
    order = np.argsort(ranges[:, 0])
    reach = ranges[order[0], 1]
    for j in order[1:]:
        lo, hi = ranges[j]
        if lo - reach > GAP_TOL:
            gaps.append((float(reach), float(lo)))
        reach = max(reach, hi)
    return BandStructure(ks, e, ranges, ext_k, tuple(gaps))


def find_gap(model: ModelSpec, n_k: int | None = None):
    """Widest bounded spectral gap ``(lam_minus, lam_plus)``, or ``None``."""
    gaps = band_structure(model, n_k).gaps
    if not gaps:
        return None
    return max(gaps, key=lambda g: g[1] - g[0])


def _measure_below_1d(model, j, lam, knots, values):
    """Length of ``{k : E_j(k) < lam}`` on the periodic knot grid (knots include 2 pi)."""
    below = values < lam
    total = float(np.sum(np.diff(knots)[below[:-1] & below[1:]]))
    f = _band(model, j)
    for i in np.nonzero(below[:-1] != below[1:])[0]:
        a, b = knots[i], knots[i + 1]
        fa, fb = values[i] - lam, values[i + 1] - lam
        if fa < 0:
            root = b if fb == 0 else brentq(lambda x: f([x]) - lam, a, b, xtol=1e-14, rtol=1e-15)
            total += root - a
        else:
            root = a if fa == 0 else brentq(lambda x: f([x]) - lam, a, b, xtol=1e-14, rtol=1e-15)
            total += b - root
    return total


@lru_cache(maxsize=32)
def _knots_1d(model: ModelSpec, n: int):
    bs = band_structure(model, n)
    base = 2.0 * np.pi * np.arange(n + 1) / n
    out = []
    for j in range(model.cell_size):
        knots = np.unique(np.concatenate([base, bs.extremum_k[j, :, 0]]))
        vals = band_energies(model, knots[:, None])[:, j]
        out.append((knots, vals))
    return out


def _ids_1d(model, lam, n):
    total = 0.0
    for j, (knots, vals) in enumerate(_knots_1d(model, n)):
        total += _measure_below_1d(model, j, lam, knots, vals)
    return total / (2.0 * np.pi * model.cell_size)


def _ids_nd(model, lam, n):
    """Corner classification of grid cells plus one midpoint-refinement pass on mixed cells."""
    d = model.dimension
    e = _grid_bands(model, n)
    below = e < lam
    corners = list(itertools.product((0, 1), repeat=d))
    all_below = np.ones(below.shape, dtype=bool)
    any_below = np.zeros(below.shape, dtype=bool)
    for c in corners:
        shifted = below
        for a, s in enumerate(c):
            if s:
                shifted = np.roll(shifted, -1, axis=a)
        all_below &= shifted
        any_below |= shifted
    full = float(np.count_nonzero(all_below))
    mixed = np.argwhere(any_below & ~all_below)
    if len(mixed):
        h = 2.0 * np.pi / n
        offs = (np.arange(_REFINE) + 0.5) / _REFINE
        sub = np.stack(np.meshgrid(*([offs] * d), indexing="ij"), axis=-1).reshape(-1, d)
        cells = mixed[:, :d].astype(float)
        pts = (cells[:, None, :] + sub[None, :, :]) * h
        vals = band_energies(model, pts.reshape(-1, d)).reshape(len(mixed), len(sub), -1)
        bands = mixed[:, d]
        picked = vals[np.arange(len(mixed)), :, bands]
        # samples lying on the level set itself (commensurate grids) get weight 1/2
        tie = np.abs(picked - lam) <= 1e-12 * max(1.0, abs(lam))
        weight = np.where(tie, 0.5, (picked < lam).astype(float))
        full += float(np.sum(np.mean(weight, axis=1)))
    return full / (n**d * model.cell_size)


def ids_bloch(model: ModelSpec, lam: float, n_k: int | None = None) -> float:
    """Integrated density of states at ``lam`` by Brillouin-zone quadrature."""
    lo, hi = model.spectrum_bounds()
    if lam < lo:
        return 0.0
    if lam > hi:
        return 1.0
    n = n_k or default_k_points(model.dimension)
    value = _ids_1d(model, lam, n) if model.dimension == 1 else _ids_nd(model, lam, n)
    return float(min(max(value, 0.0), 1.0))


def ids_bloch_many(model: ModelSpec, lams, n_k: int | None = None) -> np.ndarray:
    return np.array([ids_bloch(model, float(x), n_k) for x in np.atleast_1d(lams)])


def band_edges(model: ModelSpec, n_k: int | None = None) -> np.ndarray:
    """All band minima and maxima, sorted."""
    return np.sort(band_structure(model, n_k).band_ranges.ravel())


def brillouin_volume(d: int) -> float:
    return (2.0 * math.pi) ** d
