"""Reward-versus-steps figures from a results directory.

Two renderings of the same aggregated curves: a gnuplot script with one
data file per panel (blocks separated by two blank lines, one block per
variant), and PNG images drawn with matplotlib. Bandit results get one
panel per scheme; robot results one panel per (RL algorithm, scheme).
"""

from __future__ import annotations

import os
from typing import Iterable

from .harness import aggregate, read_csv


def panels(summary: Iterable[dict]) -> dict[str, dict[str, list[tuple[int, float, float]]]]:
    """``{panel: {variant: [(step, mean, std), ...]}}`` in sorted order."""
    out: dict[str, dict[str, list]] = {}
    for r in summary:
        if r["env"] == "robot":
            panel = f"robot_{r['algorithm']}_{r['scheme']}"
            variant = r["learner"]
        else:
            panel = f"{r['env']}_{r['scheme']}"
            variant = f"{r['algorithm']}+{r['learner']}"
        out.setdefault(panel, {}).setdefault(variant, []).append(
            (int(r["step"]), float(r["mean"]), float(r["std"])))
    return {p: {v: sorted(c) for v, c in sorted(vs.items())} for p, vs in sorted(out.items())}


def gnuplot_script(curves: dict[str, dict[str, list]]) -> str:
    lines = [
        "# reward vs learning steps, one page per panel",
        "set terminal pngcairo size 800,600",
        "set xlabel 'steps'",
        "set ylabel 'average discounted reward'",
        "set key outside right",
        "set grid",
    ]
    for panel, variants in curves.items():
        lines.append(f"set output '{panel}.gp.png'")
        lines.append(f"set title '{panel}'")
        parts = [f"'{panel}.dat' index {i} using 1:2:3 with yerrorlines title '{v}'"
                 for i, v in enumerate(variants)]
        lines.append("plot " + ", \\\n     ".join(parts))
    return "\n".join(lines) + "\n"


def data_file(variants: dict[str, list]) -> str:
    blocks = []
    for v, pts in variants.items():
        body = "\n".join(f"{s} {m:.6f} {sd:.6f}" for s, m, sd in pts)
        blocks.append(f"# {v}\n# step mean std\n{body}\n")
    return "\n\n".join(blocks)


def render_png(panel: str, variants: dict[str, list], path: str) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(7, 4.5))
    for v, pts in variants.items():
        xs = [p[0] for p in pts]
        ax.errorbar(xs, [p[1] for p in pts], yerr=[p[2] for p in pts], label=v, capsize=2, marker=".")
    ax.set_title(panel)
    ax.set_xlabel("steps")
    ax.set_ylabel("average discounted reward")
    ax.grid(alpha=0.3)
    ax.legend(fontsize="small")
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)


def emit_plots(results_dir: str, out_dir: str | None = None, png: bool = True) -> list[str]:
    """Write ``plots.gp``, one ``.dat`` per panel and optionally PNGs; returns written paths."""
    out_dir = out_dir or os.path.join(results_dir, "plots")
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(results_dir, "results.csv")
    rows = read_csv(path) if os.path.exists(path) else []
    curves = panels(aggregate(rows))
    written = []
    script = os.path.join(out_dir, "plots.gp")
    with open(script, "w", encoding="utf-8") as fh:
        fh.write(gnuplot_script(curves))
    written.append(script)
    for panel, variants in curves.items():
        dat = os.path.join(out_dir, f"{panel}.dat")
        with open(dat, "w", encoding="utf-8") as fh:
            fh.write(data_file(variants))
        written.append(dat)
        if png:
            img = os.path.join(out_dir, f"{panel}.png")
            render_png(panel, variants, img)
            written.append(img)
    return written
