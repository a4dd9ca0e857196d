"""File emission: JSON reports and self-contained SVG plots."""

from __future__ import annotations

import io
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .dos import atomic_write_text  # noqa: E402

__all__ = ["dumps_json", "ratio_plot_svg", "write_json", "write_text"]


def dumps_json(payload) -> str:
    return json.dumps(payload, indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_json(path, payload) -> Path:
    return atomic_write_text(Path(path), dumps_json(payload))


def write_text(path, text: str) -> Path:
    return atomic_write_text(Path(path), text)


def ratio_plot_svg(alphas, ratios, title="") -> str:
    """SVG of ``R(alpha)`` against ``alpha`` on a logarithmic axis (glyphs embedded as paths)."""
    with matplotlib.rc_context({"svg.hashsalt": "spectral-flow", "svg.fonttype": "path"}):
        fig, ax = plt.subplots(figsize=(5.0, 3.5))
        pts = [(a, r) for a, r in zip(alphas, ratios) if r is not None and a > 0]
        if pts:
            xs, ys = zip(*pts)
            ax.plot(xs, ys, "o-", color="tab:blue", label="N / (alpha^{d/p} I)")
        ax.axhline(1.0, color="0.4", lw=0.8, ls="--")
        ax.set_xscale("log")
        ax.set_xlabel("alpha")
        ax.set_ylabel("R(alpha)")
        if title:
            ax.set_title(title)
        ax.legend(loc="best", fontsize=8)
        fig.tight_layout()
        buf = io.StringIO()
        fig.savefig(buf, format="svg", metadata={"Date": None})
        plt.close(fig)
    return buf.getvalue()
