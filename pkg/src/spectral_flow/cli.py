"""Command-line front end: ``spectral-flow <subcommand> CONFIG [flags]``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__
from .asymptotics import (
    LAMBDA_SHIFT,
    ExperimentReport,
    _worker_count,
    admissible_eps2,
    convergence_study,
    flow_count,
)
from .birman_schwinger import records_to_csv, verify_bs_principle
from .bloch import band_structure, find_gap, ids_bloch_many
from .config import ExperimentConfig, apply_overrides, load_config
from .domain import Ball
from .dos import cached_dos_table, default_lambda_grid, finite_volume_dos_table
from .errors import ConfigError, DomainError, ModelError, NotInGap, NumericalError, ThresholdHitsSpectrum
from .report import ratio_plot_svg, write_json, write_text

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3

COLUMN_PROVENANCE = """\
column provenance:
  bands.csv           k_1..k_d: uniform Brillouin-zone grid; band_j: sorted
                      eigenvalues of the Bloch matrix (bloch.band_energies)
  gaps.json           gaps / widest: bloch.band_structure, bloch.find_gap
  dos_bloch.csv       lambda, rho: bloch.ids_bloch on the default grid plus
                      band edges (dos.bloch_dos_table)
  dos_finite_volume.csv
                      rho: dos.finite_volume_dos_table at the largest beta
  dos_agreement.csv   rho_bloch: bloch.ids_bloch; rho_finite_volume: as above;
                      abs_diff, agree: |difference| <= tolerance column
  flow.csv            N: asymptotics.flow_count on a fixed ball;
                      lambda_shift: collision shift, empty when none occurred
  bs.csv              n_plus: eigencount.n_plus of the Birman-Schwinger matrix;
                      flow_count: finite-volume flow count; equal, flagged:
                      birman_schwinger.verify_bs_principle
  asymptotics.csv     alpha, N, N1, N2, links_r, lambda_shift, ratio:
                      asymptotics.convergence_study (ratio = N / (alpha^(d/p) I))
  report.json         full ExperimentReport, including the integral I and
                      the verdict block; runtimes go to timings.json only
"""


def _emit(msg: str):
    print(msg, flush=True)


def _resolve(cfg: ExperimentConfig, need_eps2: bool = True):
    """Resolve ``auto-midgap`` and ``eps2="auto"``; returns ``(lam, gap, eps2)``."""
    gap = find_gap(cfg.model, cfg.dos.get("k_points"))
    if cfg.lam == "auto-midgap":
        if gap is None:
            raise ConfigError("lambda: \"auto-midgap\" requested but the model has no spectral gap")
        lam = 0.5 * (gap[0] + gap[1])
    else:
        lam = float(cfg.lam)
    eps2 = cfg.split["eps2"]
    if not need_eps2:
        return lam, gap, None
    if eps2 == "auto":
        if gap is None or not gap[0] < lam < gap[1]:
            raise ConfigError("split.eps2: \"auto\" needs lambda inside a spectral gap")
        eps2 = admissible_eps2(cfg.model, lam, gap)
    return lam, gap, float(eps2)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _fmt(x) -> str:
    return "" if x is None else repr(float(x))


def cmd_bands(cfg: ExperimentConfig) -> int:
    bs = band_structure(cfg.model, cfg.dos.get("k_points"))
    d, q = cfg.model.dimension, cfg.model.cell_size
    header = [f"k_{a + 1}" for a in range(d)] + [f"band_{j}" for j in range(q)]
    rows = [[_fmt(x) for x in k] + [_fmt(e) for e in es] for k, es in zip(bs.k_samples, bs.bands)]
    out = cfg.output_dir
    if "csv" in cfg.formats:
        write_text(out / "bands.csv", _csv_text(header, rows))
    widest = find_gap(cfg.model, cfg.dos.get("k_points"))
    report = {
        "model_hash": cfg.model.model_hash(),
        "band_ranges": [[float(lo), float(hi)] for lo, hi in bs.band_ranges],
        "gaps": [list(g) for g in bs.gaps],
        "widest": None if widest is None else list(widest),
    }
    write_json(out / "gaps.json", report)
    if widest is None:
        _emit("no gap")
    else:
        _emit(f"gap: ({widest[0]!r}, {widest[1]!r})")
    return EXIT_OK


def cmd_dos(cfg: ExperimentConfig) -> int:
    route = cfg.dos["route"]
    out = cfg.output_dir
    model = cfg.model
    if route in ("bloch", "both"):
        table, hit = cached_dos_table(model, cfg.dos["points"], cfg.dos.get("k_points"))
        table.write_csv(out / "dos_bloch.csv")
        _emit(f"bloch table: {len(table.lambda_grid)} points ({'cached' if hit else 'computed'})")
    if route in ("finite_volume", "both"):
        grid = default_lambda_grid(model, cfg.dos["fv_points"])
        beta = float(cfg.dos["betas"][-1])
        fv = finite_volume_dos_table(model, grid, beta, cfg.base_domain())
        fv.write_csv(out / "dos_finite_volume.csv")
        _emit(f"finite-volume table: {len(fv.lambda_grid)} points at beta={beta:g}")
    if route == "both":
        rho_b = ids_bloch_many(model, fv.lambda_grid, cfg.dos.get("k_points"))
        diff = np.abs(rho_b - fv.rho_values)
        # boundary layer of a box of side beta scales like 1/beta
        tol = max(0.02, 2.0 / beta)
        rows = [
            (_fmt(lam), _fmt(b), _fmt(f), _fmt(e), str(bool(e <= tol)).lower(), _fmt(tol))
            for lam, b, f, e in zip(fv.lambda_grid, rho_b, fv.rho_values, diff)
        ]
        header = ("lambda", "rho_bloch", "rho_finite_volume", "abs_diff", "agree", "tolerance")
        write_text(out / "dos_agreement.csv", _csv_text(header, rows))
        _emit(f"max |bloch - finite volume| = {diff.max():.3g} (tolerance {tol:g})")
    return EXIT_OK


def _flow_radius(cfg, lam, gap, eps2):
    r = cfg.flow.get("domain_radius")
    if r is not None:
        return float(r)
    a_max = max(cfg.alphas())
    return cfg.split["radius_rule"] * eps2 * max(a_max, 1.0) ** (1.0 / cfg.model.p)


def cmd_flow(cfg: ExperimentConfig) -> int:
    lam, gap, eps2 = _resolve(cfg, need_eps2=cfg.flow.get("domain_radius") is None)
    domain = Ball(_flow_radius(cfg, lam, gap, eps2), cfg.model.dimension)
    alphas = [a for a in cfg.alphas() if a > 0]

    def one(alpha):
        try:
            return flow_count(cfg.model, lam, alpha, domain=domain), None
        except ThresholdHitsSpectrum:
            if gap is None:
                raise
            shift = LAMBDA_SHIFT * (gap[1] - gap[0])
            return flow_count(cfg.model, lam + shift, alpha, domain=domain), shift

    n_workers = _worker_count(len(alphas), None)
    if n_workers > 1:
        with ThreadPoolExecutor(n_workers) as pool:
            results = list(pool.map(one, alphas))
    else:
        results = [one(a) for a in alphas]
    rows = [(_fmt(0.0), 0, "")] + [(_fmt(a), n, _fmt(s)) for a, (n, s) in zip(alphas, results)]
    write_text(cfg.output_dir / "flow.csv", _csv_text(("alpha", "N", "lambda_shift"), rows))
    _emit(f"flow counts at lambda={lam!r} on a ball of radius {domain.radius:g}: " + ", ".join(str(n) for n, _ in results))
    return EXIT_OK


def cmd_bs_verify(cfg: ExperimentConfig) -> int:
    lam, _, _ = _resolve(cfg, need_eps2=False)
    records = verify_bs_principle(cfg.model, cfg.bs_domain(), lam, [0.0] + [a for a in cfg.alphas() if a > 0], cfg.bs.get("v_cutoff"))
    write_text(cfg.output_dir / "bs.csv", records_to_csv(records))
    used = [r for r in records if not r.flagged]
    ok = all(r.equal for r in used)
    _emit(f"Birman-Schwinger identity: {'holds' if ok else 'FAILS'} on {len(used)} rows, {len(records) - len(used)} flagged")
    return EXIT_OK if ok else EXIT_NUMERICAL


def run_asymptotics(cfg: ExperimentConfig) -> ExperimentReport:
    lam, gap, eps2 = _resolve(cfg)
    if gap is None:
        raise ConfigError("asymptotics: the model has no spectral gap")
    table, _ = cached_dos_table(cfg.model, cfg.dos["points"], cfg.dos.get("k_points"))
    return convergence_study(
        cfg.model, lam, cfg.alphas(), float(cfg.split["eps1"]), eps2, table, cfg.split["radius_rule"], gap
    )


def _write_report(cfg: ExperimentConfig, report: ExperimentReport):
    out = cfg.output_dir
    if "csv" in cfg.formats:
        write_text(out / "asymptotics.csv", report.to_csv_text())
    if "json" in cfg.formats:
        write_json(out / "report.json", report.to_dict())
    if "svg" in cfg.formats:
        write_text(out / "ratio.svg", ratio_plot_svg([r.alpha for r in report.records], report.ratios))


def _summary(report: ExperimentReport) -> str:
    lines = [f"lambda={report.lam!r} gap={tuple(report.gap)!r} I={report.integral.value:.6g}"]
    lines.append(f"{'alpha':>12} {'N':>8} {'N1':>6} {'N2':>8} {'links':>5} {'R':>10}")
    for r in report.records:
        ratio = "n/a" if r.ratio is None else f"{r.ratio:.6f}"
        lines.append(f"{r.alpha:12.6g} {r.N:8d} {r.N1:6d} {r.N2:8d} {r.links_r:5d} {ratio:>10}")
    lines.append("verdict: " + json.dumps(report.verdict, sort_keys=True))
    return "\n".join(lines)


def cmd_asymptotics(cfg: ExperimentConfig) -> int:
    t0 = time.perf_counter()
    report = run_asymptotics(cfg)
    _write_report(cfg, report)
    timings = {
        "total_seconds": time.perf_counter() - t0,
        "per_alpha": {repr(r.alpha): r.runtime for r in report.records},
    }
    write_json(cfg.output_dir / "timings.json", timings)
    _emit(_summary(report))
    return EXIT_OK


def cmd_report(cfg: ExperimentConfig) -> int:
    path = cfg.output_dir / "report.json"
    try:
        data = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"{path}: no report found; run the asymptotics subcommand first") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    report = ExperimentReport.from_dict(data)
    if "svg" in cfg.formats:
        write_text(cfg.output_dir / "ratio.svg", ratio_plot_svg([r.alpha for r in report.records], report.ratios))
    _emit(_summary(report))
    return EXIT_OK


COMMANDS = {
    "bands": (cmd_bands, "band structure CSV and gap report"),
    "dos": (cmd_dos, "integrated density of states table(s)"),
    "flow": (cmd_flow, "eigenvalue flow counts N(lambda, alpha) on a fixed ball"),
    "bs-verify": (cmd_bs_verify, "check the Birman-Schwinger counting identity"),
    "asymptotics": (cmd_asymptotics, "convergence study of R(alpha), report and SVG plot"),
    "report": (cmd_report, "summarize an existing report.json and redraw its plot"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spectral-flow",
        description="Eigenvalue counting for strongly coupled impurities in gaps of periodic lattice operators.",
        epilog=COLUMN_PROVENANCE
        + "\nenvironment: SPECTRAL_FLOW_CACHE (DOS cache directory), SPECTRAL_FLOW_THREADS (worker cap)"
        + "\nexit codes: 0 success, 2 configuration error, 3 numerical error",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_) in COMMANDS.items():
        p = sub.add_parser(
            name, help=help_, description=help_, epilog=COLUMN_PROVENANCE, formatter_class=argparse.RawDescriptionHelpFormatter
        )
        p.add_argument("config", help="experiment JSON file")
        p.add_argument("-o", "--output-dir", help="output directory (overrides output.directory)")
        p.add_argument("--lambda", dest="lam", help='spectral parameter or "auto-midgap"')
        p.add_argument("--alphas", type=float, nargs="+", help="explicit coupling values (overrides alpha_grid)")
        p.add_argument("--eps1", type=float)
        p.add_argument("--eps2", help='outer splitting constant or "auto"')
        p.add_argument("--dos-route", choices=("bloch", "finite_volume", "both"))
        p.add_argument("--formats", nargs="+", choices=("csv", "json", "svg"))
        p.add_argument("--seed", type=int)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handler = COMMANDS[args.command][0]
    try:
        cfg = load_config(args.config)
        lam = args.lam
        if lam is not None and lam != "auto-midgap":
            try:
                lam = float(lam)
            except ValueError:
                raise ConfigError(f"--lambda: expected a number or \"auto-midgap\", got {lam!r}") from None
        eps2 = args.eps2
        if eps2 is not None and eps2 != "auto":
            try:
                eps2 = float(eps2)
            except ValueError:
                raise ConfigError(f"--eps2: expected a number or \"auto\", got {eps2!r}") from None
        cfg = apply_overrides(
            cfg,
            lam=lam,
            output_dir=args.output_dir,
            seed=args.seed,
            alphas=args.alphas,
            eps1=args.eps1,
            eps2=eps2,
            dos_route=args.dos_route,
            formats=args.formats,
        )
        return handler(cfg)
    except (ConfigError, ModelError, DomainError, NotInGap) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
