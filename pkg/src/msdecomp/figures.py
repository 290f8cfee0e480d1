"""Matplotlib figure rendering for the command-line report paths.

Every function writes a PNG next to the delimited output of the command that
called it.  The Agg backend is forced so figures render identically in
headless runs.
"""

from __future__ import annotations

from typing import Dict, List, Optional, Sequence, Tuple

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

_COLORS = {"multiscale": "tab:blue", "single-step": "tab:red"}
_STYLES = {"multiscale": "--", "single-step": "-"}


def save_error_curves(path: str, curves: Dict[str, Sequence[float]],
                      ylabel: str = "relative reconstruction error",
                      title: str = "") -> None:
    """Semilog error-versus-step curves, one line per labelled run."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for label, values in sorted(curves.items()):
        steps = range(1, len(values) + 1)
        ax.semilogy(steps, values, _STYLES.get(label, "-"),
                    color=_COLORS.get(label), label=label)
    ax.set_xlabel("step")
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def save_claim_profiles(path: str, profiles: Dict[int, List[float]],
                        bounds: Dict[int, float]) -> None:
    """Coefficient magnitude against column index for a few chain lengths,
    with the certified bound of each drawn as a horizontal line."""
    fig, ax = plt.subplots(figsize=(6.5, 4.0))
    for n1, values in sorted(profiles.items()):
        js = range(1, len(values) + 1)
        line, = ax.semilogy(js, [v if v > 0 else float("nan") for v in values],
                            marker=".", linestyle="-", markersize=3,
                            label=f"n1 = {n1}")
        ax.axhline(bounds[n1], color=line.get_color(), alpha=0.35, linewidth=0.8)
    ax.set_xlabel("column index j")
    ax.set_ylabel("coefficient A(j, n1)")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def save_oracle_discrepancies(path: str, steps: Sequence[int],
                              discrepancies: Sequence[float],
                              tol: Optional[float] = None) -> None:
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.semilogy(list(steps), list(discrepancies), "o-", color="tab:green",
                label="closed form vs proximal gradient")
    if tol is not None:
        ax.axhline(tol, color="k", linestyle=":", label=f"tolerance {tol:g}")
    ax.set_xlabel("step n")
    ax.set_ylabel("l2 discrepancy")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def save_parseval_split(path: str, lhs: float,
                        terms: Sequence[Tuple[float, float]],
                        tail: float) -> None:
    """Cumulative energy split against the total, step by step."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    cum = []
    acc = 0.0
    for fwd, reg in terms:
        acc += fwd + reg
        cum.append(acc)
    steps = range(1, len(cum) + 1)
    ax.plot(steps, cum, "s-", color="tab:purple", label="accumulated terms")
    ax.plot(steps, [c + tail for c in cum], "^-", color="tab:orange",
            label="terms + final residual energy")
    ax.axhline(lhs, color="k", linestyle="--", label="data energy")
    ax.set_xlabel("steps included")
    ax.set_ylabel("energy")
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
