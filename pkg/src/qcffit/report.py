"""Figure rendering for the report path.

Every figure is written as PNG next to the delimited outputs it illustrates,
with metadata stripped so reruns are byte-identical.  All entry points accept
plain data and return the written path; nothing here touches global state
beyond the Agg canvas.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_SAVE_KW = dict(format="png", metadata={"Software": None})

MODEL_COLORS = {"cdnn": "tab:blue", "bqdnn": "tab:purple", "fqdnn": "tab:orange"}


def _new_axes(dpi, figsize=(6.0, 4.0)):
    fig, ax = plt.subplots(figsize=figsize, dpi=dpi)
    return fig, ax


def save_fit_curve_figure(path, bin, curves, truth_f=None, dpi=110):
    """Cross section versus phi for one bin.

    curves: mapping model_class -> (phi_grid, mean_curve, band) with band a
    (lo, hi) pair or None.
    """
    fig, ax = _new_axes(dpi)
    ax.errorbar(bin.phi(), bin.f_values(), yerr=bin.sigma(), fmt="o", ms=3.5,
                color="crimson", lw=1, capsize=2, label="data", zorder=3)
    if truth_f is not None:
        ax.plot(bin.phi(), truth_f, color="black", lw=1.2, ls="--", label="truth")
    for model, (grid, mean, band) in sorted(curves.items()):
        color = MODEL_COLORS.get(model, "gray")
        ax.plot(grid, mean, color=color, lw=1.4, label=model)
        if band is not None:
            ax.fill_between(grid, band[0], band[1], color=color, alpha=0.25, lw=0)
    ax.set_xlabel(r"$\phi$ [deg]")
    ax.set_ylabel(r"$d^4\sigma$ [nb/GeV$^4$]")
    ax.set_title(f"set {bin.set_id}: $Q^2$={bin.Q2:.3g}, $x_B$={bin.xB:.3g}, t={bin.t:.3g}")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
    return path


def save_qualifier_figure(path, scores, outperformance, calibration=None, dpi=110):
    """Measured outperformance against the selection score."""
    fig, ax = _new_axes(dpi)
    scores = np.asarray(scores, float)
    outperformance = np.asarray(outperformance, float)
    ax.scatter(scores, outperformance, s=14, alpha=0.7, color="tab:green")
    ax.axhline(0.0, color="gray", lw=0.8)
    ax.axvline(0.0, color="gray", lw=0.8)
    if calibration is not None:
        slope, intercept, r2 = calibration
        grid = np.linspace(scores.min(), scores.max(), 50)
        ax.plot(grid, slope * grid + intercept, color="black", lw=1.2,
                label=f"fit: {slope:.3g} x + {intercept:.3g} (R$^2$={r2:.2f})")
        ax.legend(fontsize=8)
    ax.set_xlabel("selection score")
    ax.set_ylabel("measured outperformance")
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
    return path


def save_error_summary_figure(path, reports, dpi=110):
    """Mean error metrics per CFF, grouped by model class.

    reports: list of dict rows from ErrorReport.rows().
    """
    targets = ("ReH", "ReE", "ReHt", "dvcs_const")
    models = sorted({r["model_class"] for r in reports})
    kinds = [k for k in ("accuracy", "precision", "algorithmic", "methodological")
             if any(r[k] is not None for r in reports)]
    if not kinds:
        kinds = ["precision"]
    fig, axes = plt.subplots(1, len(kinds), figsize=(3.2 * len(kinds), 3.4), dpi=dpi,
                             squeeze=False)
    for ax, kind in zip(axes[0], kinds):
        width = 0.8 / max(len(models), 1)
        xpos = np.arange(len(targets))
        has_positive = False
        for i, model in enumerate(models):
            vals = []
            for target in targets:
                entries = [r[kind] for r in reports
                           if r["model_class"] == model and r["target"] == target
                           and r[kind] is not None]
                vals.append(np.mean(entries) if entries else np.nan)
            vals = np.array(vals, dtype=float)
            has_positive |= bool(np.any(vals > 0))
            ax.bar(xpos + i * width, vals, width,
                   color=MODEL_COLORS.get(model, "gray"), label=model)
        ax.set_xticks(xpos + 0.4 - width / 2)
        ax.set_xticklabels(["ReH", "ReE", "ReHt", "DVCS"], fontsize=7)
        ax.set_title(kind, fontsize=9)
        if has_positive:
            ax.set_yscale("log")
    axes[0][0].legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
    return path


def save_surface_figure(path, grid_rows, target_index, target_name, dpi=110):
    """Scatter-colored surface of one CFF over (xB, -t), one panel per Q2."""
    q2_values = sorted({row["Q2"] for row in grid_rows})
    fig, axes = plt.subplots(1, len(q2_values),
                             figsize=(3.4 * len(q2_values), 3.2), dpi=dpi,
                             squeeze=False)
    for ax, q2 in zip(axes[0], q2_values):
        rows = [r for r in grid_rows if r["Q2"] == q2]
        xb = np.array([r["xB"] for r in rows])
        mt = np.array([-r["t"] for r in rows])
        val = np.array([r["mean"][target_index] for r in rows])
        sc = ax.scatter(xb, mt, c=val, s=60, marker="s", cmap="viridis")
        fig.colorbar(sc, ax=ax, shrink=0.85)
        ax.set_xlabel(r"$x_B$")
        ax.set_ylabel(r"$-t$ [GeV$^2$]")
        ax.set_title(f"{target_name}, $Q^2$={q2:.3g}", fontsize=9)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
    return path


def save_overlay_figure(path, slices, target_name, dpi=110):
    """Global-fit band against reference points along -t at fixed xB.

    slices: list of dicts with keys xB, t (array), mean, sigma, ref (or None).
    """
    fig, axes = plt.subplots(1, len(slices), figsize=(3.4 * len(slices), 3.2),
                             dpi=dpi, squeeze=False)
    for ax, entry in zip(axes[0], slices):
        mt = -np.asarray(entry["t"])
        mean = np.asarray(entry["mean"])
        sig = np.asarray(entry["sigma"])
        order = np.argsort(mt)
        ax.plot(mt[order], mean[order], color="tab:blue", lw=1.3, label="global fit")
        ax.fill_between(mt[order], (mean - sig)[order], (mean + sig)[order],
                        color="tab:blue", alpha=0.25, lw=0)
        if entry.get("ref") is not None:
            ref_t, ref_v = entry["ref"]
            ax.plot(-np.asarray(ref_t), ref_v, color="red", lw=1.1, label="reference")
        ax.set_xlabel(r"$-t$ [GeV$^2$]")
        ax.set_ylabel(target_name)
        ax.set_title(f"$x_B$={entry['xB']:.3g}", fontsize=9)
        ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
    return path
