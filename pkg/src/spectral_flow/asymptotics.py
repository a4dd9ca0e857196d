"""Large-coupling eigenvalue counting: flow counts, region splitting and the
asymptotic integral

    I(lam) = int_{R^d} ( rho(lam + Psi(theta) |x|^{-p}) - rho(lam) ) dx,

against which ``N(lam, alpha) / alpha^{d/p}`` is compared.
"""

from __future__ import annotations

import csv
import io
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .bloch import find_gap
from .domain import Annulus, Ball, LatticeDomain, RegionSplit, cut_links, unit_ball_volume
from .dos import DosTable
from .eigencount import SpectrumCounter
from .errors import DomainError, NotInGap, ThresholdHitsSpectrum
from .model import ModelSpec
from .operators import assemble, assemble_perturbed

__all__ = [
    "ExperimentReport",
    "FlowRecord",
    "SandwichResult",
    "SplitCounts",
    "TheoreticalIntegral",
    "admissible_eps2",
    "convergence_study",
    "eps2_bound",
    "flow_count",
    "region_split_counts",
    "riemann_sandwich",
    "theoretical_integral",
]

THREADS_ENV = "SPECTRAL_FLOW_THREADS"
LAMBDA_SHIFT = 1e-7


def _require_gap(model, lam, gap):
    if gap is None:
        gap = find_gap(model)
    if gap is None or not (gap[0] < lam < gap[1]):
        raise NotInGap(f"lambda={lam!r} is not inside a spectral gap (gap={gap!r})")
    return gap


def eps2_bound(model: ModelSpec, lam: float, gap) -> float:
    """Outer splitting constant beyond which the exterior region carries no eigenvalue flow."""
    lo, hi = gap
    s = model.psi_sup
    return (s / abs(hi - lam) + s / abs(lo - lam)) ** (1.0 / model.p)


def admissible_eps2(model: ModelSpec, lam: float, gap, factor: float = 1.25) -> float:
    return factor * eps2_bound(model, lam, gap)


# ---------------------------------------------------------------------------
# theoretical integral


@dataclass(frozen=True)
class TheoreticalIntegral:
    lam: float
    value: float
    quadrature_error: float
    direction_samples: int
    radial_tolerance: float


def direction_rule(d: int, m: int | None = None):
    """Quadrature nodes and weights on the unit sphere ``S^{d-1}``.

    d = 1 uses the two points -1, +1 with unit weight, d = 2 the periodic
    trapezoid rule in the angle, d = 3 Gauss-Legendre in ``cos(polar)``
    times the trapezoid rule in the azimuth.
    """
    if d == 1:
        return np.array([[-1.0], [1.0]]), np.array([1.0, 1.0])
    if d == 2:
        m = m or 64
        phi = 2.0 * np.pi * np.arange(m) / m
        return np.stack([np.cos(phi), np.sin(phi)], axis=1), np.full(m, 2.0 * np.pi / m)
    if d == 3:
        m = m or 32
        z, wz = np.polynomial.legendre.leggauss(max(m // 2, 2))
        phi = 2.0 * np.pi * np.arange(m) / m
        zz, pp = np.meshgrid(z, phi, indexing="ij")
        s = np.sqrt(1.0 - zz**2)
        nodes = np.stack([s * np.cos(pp), s * np.sin(pp), zz], axis=-1).reshape(-1, 3)
        weights = (wz[:, None] * np.full(m, 2.0 * np.pi / m)[None, :]).ravel()
        return nodes, weights
    raise NotImplementedError(f"no direction rule for d={d}")


def _power_integral(lo, hi, e):
    """``int_lo^hi r^{e-1} dr`` for arrays ``lo < hi`` (``e = 0`` gives a logarithm)."""
    if e == 0:
        return np.log(hi / lo)
    return (hi**e - lo**e) / e


def _ray_integrals(cs, lam, lam_plus, nodes, values, rho0, d, p, r_range):
    """Exact radial integrals of the interpolated integrand along each ray.

    Along a ray with ``Psi = c`` the argument ``mu = lam + c r^{-p}`` decreases
    in ``r``; breakpoints sit at the radii where ``mu`` crosses a table node,
    and between breakpoints the interpolant is linear in ``mu`` so the
    integral has closed form.
    """
    r_lo, r_hi = r_range
    mu = np.concatenate([[lam_plus], nodes[nodes > lam_plus]])
    rho = np.concatenate([[np.interp(lam_plus, nodes, values)], values[nodes > lam_plus]])
    slope = np.diff(rho) / np.diff(mu)
    offset = rho[:-1] - rho0 + slope * (lam - mu[:-1])
    out = np.zeros(len(cs))
    for i, c in enumerate(cs):
        if c <= 0:
            continue
        radii = (c / (mu - lam)) ** (1.0 / p)
        hi = np.minimum(radii[:-1], r_hi)
        lo = np.maximum(radii[1:], r_lo)
        ok = lo < hi
        total = 0.0
        if np.any(ok):
            lo_, hi_ = lo[ok], hi[ok]
            total += np.sum(offset[ok] * _power_integral(lo_, hi_, d))
            total += np.sum(slope[ok] * c * _power_integral(lo_, hi_, d - p))
        top_hi = min(radii[-1], r_hi)
        if top_hi > r_lo:
            total += (rho[-1] - rho0) * (top_hi**d - r_lo**d) / d
        out[i] = total
    return out


def _integral_value(table_nodes, table_values, model, lam, gap, thetas, weights, r_range):
    cs = model.psi(thetas)
    rho0 = float(np.interp(lam, table_nodes, table_values))
    rays = _ray_integrals(cs, lam, gap[1], table_nodes, table_values, rho0, model.dimension, model.p, r_range)
    return float(np.dot(weights, rays))


def theoretical_integral(
    dos: DosTable,
    model: ModelSpec,
    lam: float,
    gap=None,
    direction_samples: int | None = None,
    radial_range=(0.0, math.inf),
) -> TheoreticalIntegral:
    """Spherical-radial quadrature of the asymptotic integral.

    ``radial_range`` restricts the integral to ``r_lo < |x| < r_hi``.  The
    error estimate adds the change under halving the table resolution and,
    for d >= 2, under halving the number of directions.
    """
    gap = _require_gap(model, lam, gap)
    d = model.dimension
    top = model.spectrum_bounds()[1]
    if not dos.covers(lam, top):
        raise ValueError(
            f"DOS table covers [{dos.lambda_grid[0]}, {dos.lambda_grid[-1]}], needs [{lam}, {top}]"
        )
    nodes, values = dos.lambda_grid, dos.rho_values
    thetas, weights = direction_rule(d, direction_samples)
    value = _integral_value(nodes, values, model, lam, gap, thetas, weights, radial_range)

    # drop near-duplicate nodes (band edges next to grid points) before taking every
    # other node, so that the spacing really doubles next to the gap edge
    scale_ = max(1.0, float(np.abs(nodes).max()))
    distinct = np.concatenate([[0], np.nonzero(np.diff(nodes) > 1e-9 * scale_)[0] + 1])
    keep = np.unique(np.concatenate([distinct[::2], [len(nodes) - 1]]))
    coarse = _integral_value(nodes[keep], values[keep], model, lam, gap, thetas, weights, radial_range)
    radial_err = abs(value - coarse)
    dir_err = 0.0
    if d >= 2:
        m = len(weights) if d == 2 else (direction_samples or 32)
        th2, w2 = direction_rule(d, max(m // 2, 4))
        dir_err = abs(value - _integral_value(nodes, values, model, lam, gap, th2, w2, radial_range))
    return TheoreticalIntegral(float(lam), value, radial_err + dir_err, len(weights), radial_err)


# ---------------------------------------------------------------------------
# flow counts


def flow_count(
    model: ModelSpec,
    lam: float,
    alpha: float,
    domain_radius: float | None = None,
    domain: LatticeDomain | None = None,
) -> int:
    """Number of eigenvalues of ``A_Omega - t V`` that cross ``lam`` for ``t`` in ``(0, alpha]``.

    Computed as ``N(A_Omega - alpha V, lam) - N(A_Omega, lam)`` on the ball
    of radius ``domain_radius`` (or on ``domain``).
    """
    if domain is None:
        if domain_radius is None:
            raise ValueError("give either domain_radius or domain")
        domain = Ball(domain_radius, model.dimension)
    base = assemble(domain, model)
    if alpha == 0:
        return 0
    pert = assemble_perturbed(domain, model, alpha, base=base)
    return SpectrumCounter(pert).count_below(lam) - SpectrumCounter(base).count_below(lam)


@dataclass(frozen=True)
class SplitCounts:
    N: int
    N1: int
    N2: int
    N3_check: int
    links_r: int
    sites: int


def region_split_counts(
    model: ModelSpec,
    lam: float,
    alpha: float,
    split: RegionSplit,
    radius_rule: float = 1.5,
    gap=None,
) -> SplitCounts:
    """Flow counts on the whole truncated ball and on each region separately.

    The truncation is the open ball of radius ``radius_rule * eps2 *
    alpha^{1/p}``; region 3 is its part outside the outer splitting sphere.
    """
    gap = _require_gap(model, lam, gap)
    bound = eps2_bound(model, lam, gap)
    if not split.eps2 > bound:
        raise DomainError(f"inadmissible eps2={split.eps2!r}; need eps2 > {bound!r}")
    if radius_rule < 1:
        raise ValueError("radius_rule must be >= 1")
    d = model.dimension
    whole = Ball(radius_rule * split.r2, d)
    counts = [
        flow_count(model, lam, alpha, domain=dom)
        for dom in (whole, split.domain(1, d), split.domain(2, d), split.domain(3, d, whole.radius))
    ]
    n_sites = assemble(whole, model).size
    return SplitCounts(*counts, cut_links(split, whole), n_sites)


# ---------------------------------------------------------------------------
# Riemann sandwich


@dataclass(frozen=True)
class SandwichResult:
    lower_sum: float
    upper_sum: float
    n2_scaled: float
    cell_size: float
    n_cells: int


def _cell_geometry(eps1, eps2, delta, d, subsamples):
    """Cells ``delta * ([0,1)^d + i)`` meeting the open shell ``eps1 < |x| < eps2``.

    Returns corners, per-cell volume of the intersection, and the nearest
    and farthest radii of the intersection.
    """
    i_lo = int(math.floor(-eps2 / delta))
    i_hi = int(math.ceil(eps2 / delta))
    axis = np.arange(i_lo, i_hi, dtype=float)
    idx = np.stack(np.meshgrid(*([axis] * d), indexing="ij"), axis=-1).reshape(-1, d)
    lo = idx * delta
    hi = lo + delta
    nearest = np.clip(0.0, lo, hi)
    far = np.maximum(np.abs(lo), np.abs(hi))
    dmin = np.sqrt((nearest**2).sum(axis=1))
    dmax = np.sqrt((far**2).sum(axis=1))
    r_min = np.maximum(dmin, eps1)
    r_max = np.minimum(dmax, eps2)
    keep = r_min < r_max
    lo, hi, nearest, r_min, r_max = lo[keep], hi[keep], nearest[keep], r_min[keep], r_max[keep]
    dmin, dmax = dmin[keep], dmax[keep]

    vol = np.full(len(lo), delta**d)
    if d == 1:
        a, b = lo[:, 0], hi[:, 0]
        pos = np.clip(np.minimum(b, eps2) - np.maximum(a, eps1), 0, None)
        neg = np.clip(np.minimum(b, -eps1) - np.maximum(a, -eps2), 0, None)
        vol = pos + neg
    else:
        partial = (dmin < eps1) | (dmax > eps2)
        offs = (np.arange(subsamples) + 0.5) / subsamples
        sub = np.stack(np.meshgrid(*([offs] * d), indexing="ij"), axis=-1).reshape(-1, d)
        for k in np.nonzero(partial)[0]:
            pts = lo[k] + delta * sub
            r = np.sqrt((pts**2).sum(axis=1))
            vol[k] = delta**d * np.mean((r > eps1) & (r < eps2))
    return lo, hi, nearest, vol, r_min, r_max


def _psi_range_on_cells(model, lo, hi, nearest):
    d = model.dimension
    cands = []
    for corner in np.ndindex(*(2,) * d):
        sel = np.asarray(corner, dtype=bool)
        cands.append(np.where(sel, hi, lo))
    cands.append(nearest)
    cands.append(0.5 * (lo + hi))
    stack = np.stack(cands, axis=1)
    r = np.sqrt((stack**2).sum(axis=2))
    unit = np.zeros(d)
    unit[0] = 1.0
    safe = np.where(r[..., None] > 0, stack, unit)
    theta = safe / np.sqrt((safe**2).sum(axis=2))[..., None]
    vals = model.psi(theta.reshape(-1, d)).reshape(r.shape)
    vals = np.where(r > 0, vals, np.nan)
    return np.nanmin(vals, axis=1), np.nanmax(vals, axis=1)


def riemann_sandwich(
    model: ModelSpec,
    lam: float,
    alpha: float,
    cell_size: float,
    eps1: float,
    eps2: float,
    dos: DosTable,
    n2: int | None = None,
    subsamples: int = 32,
) -> SandwichResult:
    """Lower and upper Riemann sums bracketing ``N_2 / alpha^{d/p}``.

    Both sums are of ``rho(lam + V) - rho(lam)`` over the cells, with ``V``
    replaced by its smallest (lower sum) or largest (upper sum) value on
    each cell.  ``n2`` is computed on the closed shell when not supplied.
    """
    if not cell_size > 0:
        raise ValueError(f"cell_size must be positive, got {cell_size!r}")
    d, p = model.dimension, model.p
    lo, hi, nearest, vol, r_min, r_max = _cell_geometry(eps1, eps2, cell_size, d, subsamples)
    psi_min, psi_max = _psi_range_on_cells(model, lo, hi, nearest)
    v_max = psi_max * r_min ** (-p)
    v_min = psi_min * r_max ** (-p)
    rho0 = float(dos(lam))
    lower = float(np.sum((dos(lam + v_min) - rho0) * vol))
    upper = float(np.sum((dos(lam + v_max) - rho0) * vol))
    if n2 is None:
        scale_ = alpha ** (1.0 / p)
        n2 = flow_count(model, lam, alpha, domain=Annulus(eps1 * scale_, eps2 * scale_, d))
    return SandwichResult(lower, upper, n2 / alpha ** (d / p), float(cell_size), int(len(vol)))


# ---------------------------------------------------------------------------
# convergence study


@dataclass(frozen=True)
class FlowRecord:
    alpha: float
    N: int
    N1: int
    N2: int
    N3_check: int
    links_r: int
    sites: int
    ratio: float | None
    n1_bound: float
    n1_envelope: float
    lambda_shift: float | None
    runtime: float = field(default=0.0, compare=False)


@dataclass
class ExperimentReport:
    model: dict
    lam: float
    gap: tuple
    eps1: float
    eps2: float
    radius_rule: float
    integral: TheoreticalIntegral
    records: list
    verdict: dict

    CSV_COLUMNS = ("alpha", "N", "N1", "N2", "ratio", "links_r", "lambda_shift")

    @property
    def ratios(self):
        return [r.ratio for r in self.records]

    def to_dict(self, include_runtimes: bool = False) -> dict:
        recs = []
        for r in self.records:
            row = asdict(r)
            if not include_runtimes:
                row.pop("runtime")
            recs.append(row)
        return {
            "model": self.model,
            "lambda": self.lam,
            "gap": list(self.gap),
            "eps1": self.eps1,
            "eps2": self.eps2,
            "radius_rule": self.radius_rule,
            "integral": asdict(self.integral),
            "records": recs,
            "verdict": self.verdict,
        }

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.CSV_COLUMNS)
        for r in self.records:
            w.writerow(
                (
                    repr(r.alpha),
                    r.N,
                    r.N1,
                    r.N2,
                    "" if r.ratio is None else repr(r.ratio),
                    r.links_r,
                    "" if r.lambda_shift is None else repr(r.lambda_shift),
                )
            )
        return buf.getvalue()

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentReport":
        recs = [FlowRecord(**{**r, "runtime": r.get("runtime", 0.0)}) for r in data["records"]]
        return cls(
            data["model"],
            data["lambda"],
            tuple(data["gap"]),
            data["eps1"],
            data["eps2"],
            data["radius_rule"],
            TheoreticalIntegral(**data["integral"]),
            recs,
            data["verdict"],
        )


def _split_with_shift(model, lam, alpha, split, radius_rule, gap):
    """Apply the collision policy: on a threshold hit, shift lambda once by ``1e-7 * gap width``."""
    try:
        return region_split_counts(model, lam, alpha, split, radius_rule, gap), None
    except ThresholdHitsSpectrum:
        shift = LAMBDA_SHIFT * (gap[1] - gap[0])
        return region_split_counts(model, lam + shift, alpha, split, radius_rule, gap), shift


def _worker_count(n_tasks, workers):
    if workers is None:
        env = os.environ.get(THREADS_ENV)
        workers = int(env) if env else 1
    return max(1, min(int(workers), n_tasks))


def trend_verdict(ratios) -> dict:
    if not ratios or any(r is None for r in ratios):
        return {"trend_toward_1": None, "final_deviation": None}
    dev = [abs(r - 1.0) for r in ratios]
    trend = all(b <= a for a, b in zip(dev, dev[1:]))
    return {"trend_toward_1": bool(trend), "final_deviation": dev[-1]}


def convergence_study(
    model: ModelSpec,
    lam: float,
    alpha_grid,
    eps1: float,
    eps2: float,
    dos: DosTable,
    radius_rule: float = 1.5,
    gap=None,
    integral: TheoreticalIntegral | None = None,
    workers: int | None = None,
) -> ExperimentReport:
    """Ratios ``R(alpha) = N(lam, alpha) / (alpha^{d/p} I(lam))`` over an increasing alpha grid."""
    gap = _require_gap(model, lam, gap)
    alphas = [float(a) for a in alpha_grid]
    if any(b <= a for a, b in zip(alphas, alphas[1:])):
        raise ValueError("alpha grid must be increasing")
    if integral is None:
        integral = theoretical_integral(dos, model, lam, gap)
    d, p = model.dimension, model.p
    omega = unit_ball_volume(d)

    def run(alpha):
        t0 = time.perf_counter()
        split = RegionSplit(eps1, eps2, alpha, p)
        counts, shift = _split_with_shift(model, lam, alpha, split, radius_rule, gap)
        scale_ = alpha ** (d / p)
        ratio = counts.N / (scale_ * integral.value) if integral.value > 0 else None
        return FlowRecord(
            alpha,
            counts.N,
            counts.N1,
            counts.N2,
            counts.N3_check,
            counts.links_r,
            counts.sites,
            ratio,
            2.0 * omega * (eps1 * alpha ** (1.0 / p) + math.sqrt(d)) ** d,
            2.0 * omega * eps1**d * scale_,
            shift,
            time.perf_counter() - t0,
        )

    n_workers = _worker_count(len(alphas), workers)
    if n_workers > 1:
        with ThreadPoolExecutor(n_workers) as pool:
            records = list(pool.map(run, alphas))
    else:
        records = [run(a) for a in alphas]
    verdict = trend_verdict([r.ratio for r in records])
    verdict["integral_zero"] = integral.value == 0
    verdict["n3_all_zero"] = all(r.N3_check == 0 for r in records)
    verdict["splitting_ok"] = all(abs(r.N - r.N1 - r.N2) <= 2 * r.links_r for r in records)
    verdict["n1_bound_ok"] = all(r.N1 <= r.n1_bound for r in records)
    return ExperimentReport(
        model.to_dict(), float(lam), tuple(gap), eps1, eps2, radius_rule, integral, records, verdict
    )
