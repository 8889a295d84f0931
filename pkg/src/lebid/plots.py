"""Figure rendering for the report paths.

Renders to files only (Agg backend): a per-estimator fit boxplot for a
completed case study and impulse-response overlays for single runs. All
functions return the paths they wrote so callers can report them.
"""

from __future__ import annotations

from pathlib import Path
from typing import Dict, List, Optional, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .errors import ValidationError

__all__ = ["ESTIMATOR_LABELS", "impulse_figure", "fit_boxplot", "render_report"]

ESTIMATOR_LABELS = {
    "leb": "leb (band data)",
    "rie": "rie (band midpoints)",
    "or": "or (pre-quantization output)",
}


def _label(name: str) -> str:
    return ESTIMATOR_LABELS.get(name, name)


def impulse_figure(
    t_grid,
    g_hat: Dict[str, np.ndarray],
    path,
    g_true: Optional[np.ndarray] = None,
    title: str = "impulse response",
) -> str:
    """Overlay estimated impulse responses (and optionally the truth)."""
    t = np.asarray(t_grid, dtype=float)
    if not g_hat:
        raise ValidationError("g_hat must contain at least one estimate")
    fig, ax = plt.subplots(figsize=(7.0, 4.2))
    if g_true is not None:
        ax.plot(t, np.asarray(g_true, dtype=float), "k--", lw=1.4, label="true")
    for name, vals in g_hat.items():
        ax.plot(t, np.asarray(vals, dtype=float), lw=1.2, label=_label(name))
    ax.set_xlabel("time [s]")
    ax.set_ylabel("g(t)")
    ax.set_title(title)
    ax.legend(loc="best", fontsize=9)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return str(path)


def fit_boxplot(fits: Dict[str, Sequence[float]], path, title: str = "output fit") -> str:
    """One box per estimator, drawn in the given key order."""
    names = [n for n in fits if len(fits[n]) > 0]
    if not names:
        raise ValidationError("fit_boxplot needs at least one estimator with data")
    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    ax.boxplot(
        [np.asarray(fits[n], dtype=float) for n in names],
        tick_labels=[_label(n) for n in names],
        showmeans=True,
    )
    ax.set_ylabel("fit [%]")
    ax.set_title(title)
    ax.grid(True, axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return str(path)


def render_report(study, out_dir) -> List[str]:
    """Write the case-study figures under out_dir/figures.

    Produces a fit boxplot over all completed runs and an impulse overlay
    for the first run; with no completed runs nothing is rendered.
    """
    out = Path(out_dir) / "figures"
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as err:
        raise ValidationError(f"cannot create figure directory {str(out)!r}: {err}") from err
    written: List[str] = []
    if not study.runs:
        return written

    estimators = list(study.runs[0].fits)
    fits = {name: [r.fits[name] for r in study.runs if name in r.fits] for name in estimators}
    written.append(
        fit_boxplot(fits, out / "fit_boxplot.png", title=f"output fit over {len(study.runs)} runs")
    )
    if study.traces:
        tr = study.traces[0]
        written.append(
            impulse_figure(
                tr.t_grid,
                tr.g_hat,
                out / f"impulse_run_{tr.run_id}.png",
                g_true=tr.g_true,
                title=f"impulse response, run {tr.run_id}",
            )
        )
    return written
