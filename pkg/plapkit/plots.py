# plapkit/plots.py
"""SVG line plots. Fixed hash salt and no date metadata keep reruns byte-identical."""
import logging
from pathlib import Path
from typing import Union

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .config import settings  # noqa: E402
from .harness import ComparisonReport  # noqa: E402
from .model import ParabolicityVerdict  # noqa: E402

logger = logging.getLogger(__name__)


def _save(fig, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with matplotlib.rc_context({"svg.hashsalt": settings.SVG_HASHSALT, "svg.fonttype": "path"}):
        fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    logger.debug("wrote %s", path)
    return path


def plot_oscillation(report: ComparisonReport, path: Union[str, Path]) -> Path:
    Ns = [row.N for row in report.rows]
    # log axis needs positive values
    osc = [max(row.osc, 1e-300) for row in report.rows]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.semilogy(Ns, osc, marker="o", label="osc(u - v)")
    ax.axhline(report.osc_tol, color="grey", linestyle="--", linewidth=0.8, label="tolerance")
    ax.set_xlabel("N")
    ax.set_ylabel("oscillation")
    ax.set_title(f"{report.mode} on {report.family}, p = {report.p:g}: {report.conclusion}")
    ax.legend()
    fig.tight_layout()
    return _save(fig, path)


def plot_partial_integrals(verdict: ParabolicityVerdict, path: Union[str, Path]) -> Path:
    radii = [r for r, _ in verdict.integral_values]
    values = [v for _, v in verdict.integral_values]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.loglog(radii, values, marker="o")
    ax.set_xlabel("R")
    ax.set_ylabel("partial integral")
    ax.set_title(
        f"m = {verdict.m}, p = {verdict.p:g}: {verdict.verdict} (slope {verdict.tail_exponent_estimate:.3f})"
    )
    fig.tight_layout()
    return _save(fig, path)
