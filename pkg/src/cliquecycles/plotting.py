"""PNG renderings of the CSV data written by the CLI.

matplotlib is optional (``pip install artifact[plots]``) and only imported
when a figure is requested.
"""
from __future__ import annotations

from pathlib import Path


def _pyplot():
    try:
        import matplotlib
    except ImportError as exc:  # pragma: no cover - depends on environment
        raise RuntimeError("figures need matplotlib: pip install 'artifact[plots]'") from exc
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    plt.rcParams.update({
        "font.size": 10,
        "axes.labelsize": 10,
        "legend.fontsize": 8,
        "figure.figsize": (6.0, 3.8),
        "savefig.dpi": 150,
    })
    return plt


def plot_exponent_curves(tau, curves: dict, path) -> Path:
    """Round exponent against log_n t, one line per algorithm."""
    plt = _pyplot()
    fig, ax = plt.subplots()
    for name, ys in curves.items():
        ax.plot(tau, ys, label=name)
    ax.set_xlabel(r"$\log_n t$")
    ax.set_ylabel("round exponent")
    ax.set_ylim(bottom=0)
    ax.legend(frameon=False)
    fig.tight_layout()
    out = Path(path)
    fig.savefig(out)
    plt.close(fig)
    return out


def plot_step_and_line(y, step, line_values, path) -> Path:
    plt = _pyplot()
    fig, ax = plt.subplots()
    ax.step(y, step, where="pre", label="step bound")
    ax.plot(y, line_values, label="fitted line")
    ax.set_xlabel("y")
    ax.set_ylabel(r"$\rho(1-y)$ bound")
    ax.legend(frameon=False)
    fig.tight_layout()
    out = Path(path)
    fig.savefig(out)
    plt.close(fig)
    return out


def plot_bench(rows: list[dict], path) -> Path:
    """Median measured rounds (solid) and predicted rounds (dashed) against t."""
    plt = _pyplot()
    fig, ax = plt.subplots()
    algos = sorted({r["algorithm"] for r in rows})
    for algo in algos:
        pts = sorted((float(r["t"]), float(r["median_rounds"]), float(r["predicted_rounds"]))
                     for r in rows if r["algorithm"] == algo)
        if not pts:
            continue
        ts, med, pred = zip(*pts)
        (line,) = ax.plot(ts, med, marker="o", label=f"{algo} measured")
        ax.plot(ts, pred, ls="--", color=line.get_color(), label=f"{algo} predicted")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("planted cycles t")
    ax.set_ylabel("rounds")
    ax.legend(frameon=False, ncol=2)
    fig.tight_layout()
    out = Path(path)
    fig.savefig(out)
    plt.close(fig)
    return out
