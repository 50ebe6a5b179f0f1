"""Figures rendered from result tables, saved as PNG next to the CSV output."""
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.figsize": (6.0, 4.0),
    "figure.dpi": 100,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 9,
    "legend.fontsize": 8,
    "savefig.bbox": "tight",
}


def _save(fig, out_dir, name) -> Path:
    path = Path(out_dir) / f"{name}.png"
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
    return path


def plot_spectrum(result, out_dir):
    table = result.tables[0]
    n_steps = result.summary["N"]
    paths = []
    with plt.rc_context(STYLE):
        if n_steps == 1:
            fig, ax = plt.subplots()
            cmap = plt.get_cmap("viridis")
            cells = sorted({r["cell"] for r in table.rows})
            for i in cells:
                rows = [r for r in table.rows if r["cell"] == i]
                k = np.array([r["k1"] for r in rows])
                w = np.array([r["omega1"] for r in rows])
                re = np.array([r["re_scaled"] for r in rows])
                im = np.array([r["im_scaled"] for r in rows])
                color = cmap(i / max(len(cells) - 1, 1))
                label = f"alpha_d/pi={rows[0]['alpha_d'] / np.pi:.2f}"
                even, odd = k % 2 == 0, k % 2 == 1
                ax.plot(w[even], re[even], "-", color=color, lw=0.8, label=label)
                ax.plot(w[odd], re[odd], "--", color=color, lw=0.8)
                ax.plot(w[even], im[even], "-.", color=color, lw=0.6)
            ax.set_xlabel("omega")
            ax.set_ylabel("n c_omega")
            ax.legend()
            paths.append(_save(fig, out_dir, "spectrum"))
        else:
            for i in sorted({r["cell"] for r in table.rows}):
                rows = [r for r in table.rows if r["cell"] == i]
                k1 = np.array([r["k1"] for r in rows])
                side = int(round(np.sqrt(len(rows))))
                w = np.array([r["omega1"] for r in rows]).reshape(side, side)
                re = np.array([r["re_c"] for r in rows]).reshape(side, side)
                fig, ax = plt.subplots()
                lim = np.abs(re).max() or 1.0
                mesh = ax.pcolormesh(w[:, 0], w[:, 0], re.T, cmap="RdBu_r", vmin=-lim, vmax=lim, shading="nearest")
                fig.colorbar(mesh, ax=ax, label="Re c")
                ax.set_xlabel("omega_1")
                ax.set_ylabel("omega_2")
                ax.set_title(f"cell {i}, {k1.size} coefficients")
                paths.append(_save(fig, out_dir, f"spectrum_cell{i}"))
    return paths


def _plot_bench(result, out_dir, name, ylabel="test RMSE"):
    agg = result.tables[1]
    std = result.summary.get("landscape_std")
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for curve in sorted({r["curve"] for r in agg.rows}):
            rows = sorted((r for r in agg.rows if r["curve"] == curve), key=lambda r: r["n_train"])
            x = [r["n_train"] for r in rows]
            ax.plot(x, [r["median"] for r in rows], "o-", ms=3, label=curve)
            ax.fill_between(x, [r["q25"] for r in rows], [r["q75"] for r in rows], alpha=0.2)
        if std:
            ax.axhline(std, ls=":", color="k", lw=1, label="landscape std")
        ax.set_xscale("log")
        ax.set_yscale("log")
        ax.set_xlabel("N_train")
        ax.set_ylabel(ylabel)
        ax.legend()
        return [_save(fig, out_dir, name)]


def plot_surrogate_bench(result, out_dir):
    return _plot_bench(result, out_dir, "surrogate_bench")


def plot_kernel_bandwidth(result, out_dir):
    return _plot_bench(result, out_dir, "kernel_bandwidth")


def plot_taylor_order(result, out_dir):
    table = result.tables[0]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for eps in sorted({r["epsilon"] for r in table.rows}, reverse=True):
            rows = [r for r in table.rows if r["epsilon"] == eps]
            ax.step([r["u_max_L"] for r in rows], [r["p_star"] for r in rows], where="post", label=f"eps={eps:g}")
        x = np.logspace(0, 2, 20)
        ax.plot(x, np.e * x, "k:", lw=1, label="e u_max L")
        ax.set_xscale("log")
        ax.set_yscale("log")
        ax.set_xlabel("u_max L")
        ax.set_ylabel("minimum Taylor order")
        ax.legend()
        return [_save(fig, out_dir, "taylor_order")]


def plot_bounds_audit(result, out_dir):
    rows = [r for r in result.tables[0].rows if r["empirical_value"] is not None and r["analytic_value"]]
    with plt.rc_context(dict(STYLE, **{"figure.figsize": (6.0, 0.22 * len(rows) + 1.0)})):
        fig, ax = plt.subplots()
        ratio = [r["empirical_value"] / r["analytic_value"] for r in rows]
        colors = ["tab:green" if r["satisfied"] else "tab:red" for r in rows]
        ax.barh(range(len(rows)), ratio, color=colors)
        ax.axvline(1.0, color="k", lw=0.8)
        ax.set_yticks(range(len(rows)))
        ax.set_yticklabels([r["name"] for r in rows])
        ax.set_xlabel("empirical / analytic")
        return [_save(fig, out_dir, "bounds_audit")]


def plot_optimize(result, out_dir):
    trace, pruned = result.tables
    paths = []
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.plot([r["eval"] for r in trace.rows], [r["incumbent"] for r in trace.rows], label="incumbent")
        if "grid_best_value" in result.summary:
            ax.axhline(result.summary["grid_best_value"], ls=":", color="k", label="grid optimum")
        ax.set_xlabel("evaluation")
        ax.set_ylabel("objective")
        ax.legend()
        paths.append(_save(fig, out_dir, "optimize_incumbent"))
        if "u2" in trace.column_names():
            fig, ax = plt.subplots()
            vals = [r["value"] for r in trace.rows]
            sc = ax.scatter([r["u1"] for r in trace.rows], [r["u2"] for r in trace.rows], c=vals, s=4, cmap="viridis")
            for r in pruned.rows:
                ax.add_patch(plt.Rectangle((r["c1"] - r["h1"], r["c2"] - r["h2"]), 2 * r["h1"], 2 * r["h2"],
                                           fill=False, lw=0.3, color="tab:red"))
            fig.colorbar(sc, ax=ax, label="objective")
            ax.set_xlabel("u1")
            ax.set_ylabel("u2")
            ax.set_aspect("equal")
            paths.append(_save(fig, out_dir, "optimize_points"))
    return paths


PLOTTERS = {
    "spectrum": plot_spectrum,
    "surrogate-bench": plot_surrogate_bench,
    "taylor-order": plot_taylor_order,
    "bounds-audit": plot_bounds_audit,
    "optimize": plot_optimize,
    "kernel-bandwidth": plot_kernel_bandwidth,
}
