"""Static SVG charts of observed and fitted log-mortality schedules."""

from __future__ import annotations

from pathlib import Path
from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from smallmort.core import FitResult, ObservedRates, StandardSchedule, log_rates  # noqa: E402

MODEL_STYLES = {
    "dyn-poisson": {"color": "tab:red", "linestyle": "-"},
    "topals": {"color": "tab:purple", "linestyle": "--"},
    "gaussian-dlm": {"color": "tab:blue", "linestyle": "-."},
}
_FALLBACK = [
    {"color": "tab:orange", "linestyle": ":"},
    {"color": "tab:brown", "linestyle": (0, (5, 1, 1, 1))},
    {"color": "tab:gray", "linestyle": (0, (3, 3))},
]


def emit_chart(
    observed: Optional[ObservedRates],
    fits: Sequence[FitResult],
    standard: Optional[StandardSchedule],
    path,
    title: str = "",
    truth: Optional[np.ndarray] = None,
) -> Path:
    """Write a self-contained SVG.

    Open circles mark observed log-rates; tick marks along the age axis mark
    ages with no computable rate (zero deaths or no exposure). Each SVG group
    carries an id (``observed``, ``no-death-ticks``, ``standard``, ``truth``,
    ``fit-<model>``) so the output can be inspected programmatically.
    """
    series = [len(f.log_rates) for f in fits]
    if observed is not None:
        series.append(len(observed))
    if standard is not None:
        series.append(len(standard))
    if truth is not None:
        series.append(len(truth))
    if len(set(series)) > 1:
        raise ValueError("all series must share the age grid")

    with plt.rc_context({"svg.hashsalt": "smallmort", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(6.4, 4.2))
        if observed is not None:
            ages = np.arange(len(observed))
            lr = log_rates(observed)
            ok = ~np.isnan(lr)
            if ok.any():
                ax.plot(
                    ages[ok], lr[ok], "o", mfc="none", mec="black", ms=4,
                    label="observed", gid="observed",
                )
            if (~ok).any():
                ax.plot(
                    ages[~ok], np.zeros((~ok).sum()), "|", color="black", ms=8,
                    transform=ax.get_xaxis_transform(), clip_on=False,
                    label="no deaths / no exposure", gid="no-death-ticks",
                )
        if standard is not None:
            ax.plot(
                np.arange(len(standard)), standard.log_rates, color="tab:green", lw=1.2,
                label=f"standard ({standard.label})", gid="standard",
            )
        if truth is not None:
            ax.plot(np.arange(len(truth)), truth, color="black", lw=1.2, label="truth", gid="truth")
        extra = iter(_FALLBACK)
        for fit in fits:
            style = MODEL_STYLES.get(fit.model) or next(extra, {"color": "k", "linestyle": "-"})
            ax.plot(
                fit.ages, fit.log_rates, lw=1.6, label=fit.model, gid=f"fit-{fit.model}", **style
            )
            if fit.has_intervals:
                ax.fill_between(fit.ages, fit.lower, fit.upper, color=style["color"], alpha=0.15, lw=0)
        ax.set_xlabel("age")
        ax.set_ylabel("log mortality rate")
        if title:
            ax.set_title(title)
        ax.legend(loc="upper left", fontsize="small", frameon=False)
        fig.tight_layout()
        path = Path(path)
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
    return path
