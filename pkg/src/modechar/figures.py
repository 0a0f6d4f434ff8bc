"""Figure rendering for campaign outputs (PNG files next to the CSV)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

__all__ = ["render"]


def _fig():
    return plt.subplots(figsize=(6.4, 4.2), dpi=130)


def _numeric(rows, field):
    return [r[field] for r in rows if r[field] != ""]


def _plot_simulate(rows, ax):
    pairs = sorted({(r["j"], r["k"]) for r in rows})
    for j, k in pairs:
        sel = [r for r in rows if (r["j"], r["k"]) == (j, k)]
        ax.plot(
            [1e3 * r["t_s"] for r in sel],
            [r["population"] for r in sel],
            marker="o",
            ms=3,
            label=f"ion {j}, mode {k}",
        )
    ax.set_xlabel("probe duration (ms)")
    ax.set_ylabel("bright population")
    ax.set_ylim(-0.02, 1.02)
    ax.legend(fontsize=7)


def _plot_accuracy(rows, ax):
    models = sorted({r["model"] for r in rows})
    for m in models:
        sel = [r for r in rows if r["model"] == m and r["mean_rel_error"] != ""]
        ax.loglog(
            [r["omega0_khz"] for r in sel],
            [r["mean_rel_error"] for r in sel],
            marker="s",
            label=m,
        )
    ax.set_xlabel("drive amplitude (kHz)")
    ax.set_ylabel("mean relative coupling error")
    ax.legend(fontsize=8)


def _plot_sign(rows, ax):
    for sign, color in ((1, "tab:blue"), (-1, "tab:red")):
        for src, style in (("fullsim", "o"), ("m4", "-")):
            sel = [
                r for r in rows if r["eta11_sign"] == sign and r["source"] == src
            ]
            xs = [1e3 * r["t_s"] for r in sel]
            ys = [r["population"] for r in sel]
            if style == "o":
                ax.plot(xs, ys, "o", ms=4, color=color, label=f"full sim, sign {sign:+d}")
            else:
                ax.plot(xs, ys, "-", color=color, label=f"windowed model, sign {sign:+d}")
    ax.set_xlabel("probe duration (ms)")
    ax.set_ylabel("bright population of ion 1")
    ax.legend(fontsize=7)


def _plot_fig6a(rows, ax):
    for kind, style in (("basic", "k--s"), ("improved", "r-o")):
        sel = [r for r in rows if r["kind"] == kind]
        ax.loglog(
            [r["total_shots"] for r in sel],
            [r["mean_rel_uncertainty"] for r in sel],
            style,
            label=kind,
        )
    ax.set_xlabel("total shots per scan")
    ax.set_ylabel("mean relative coupling uncertainty")
    ax.legend()


def _plot_fig6c(rows, ax):
    basic = [r for r in rows if r["t_basic_s"] != ""]
    ax.loglog(
        [r["delta_omega_hz"] for r in basic],
        [r["t_basic_s"] for r in basic],
        "k--s",
        label="basic",
    )
    ax.loglog(
        [r["delta_omega_hz"] for r in rows],
        [r["t_improved_s"] for r in rows],
        "r-o",
        label="improved",
    )
    ax.set_xlabel("allowed mode-frequency uncertainty (Hz)")
    ax.set_ylabel("experiment time (s)")
    ax.legend()


def _plot_table1(rows, ax):
    kinds = [r["kind"] for r in rows]
    totals = [r["total_time_s"] for r in rows]
    ax.bar(kinds, totals, color=["0.3", "tab:red"])
    ax.set_yscale("log")
    ax.set_ylabel("experiment time (s)")
    for x, t in zip(kinds, totals):
        ax.text(x, t, f"{t:.3g} s", ha="center", va="bottom")


def _plot_spacing(rows, ax):
    ax.loglog(
        [r["mean_spacing_khz"] for r in rows],
        [r["mean_rel_error"] for r in rows],
        "b-o",
    )
    ax.set_xlabel("mean mode spacing (kHz)")
    ax.set_ylabel("mean relative coupling error")


def _plot_converge(rows, ax):
    variants = [r["variant"] for r in rows]
    ax.bar(variants, [max(r["max_pop_delta"], 1e-18) for r in rows])
    ax.set_yscale("log")
    ax.set_ylabel("max population delta vs reference")
    ax.tick_params(axis="x", labelrotation=20)


_PLOTTERS = {
    "simulate": _plot_simulate,
    "accuracy": _plot_accuracy,
    "sign": _plot_sign,
    "fig6a": _plot_fig6a,
    "fig6c": _plot_fig6c,
    "table1": _plot_table1,
    "spacing": _plot_spacing,
    "converge": _plot_converge,
}


def render(kind: str, rows: list, path) -> bool:
    """Render the figure for a campaign's rows to path; False if no plotter."""
    plotter = _PLOTTERS.get(kind)
    if plotter is None or not rows:
        return False
    fig, ax = _fig()
    plotter(rows, ax)
    ax.set_title(kind)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return True
