"""SVG renderings of the CSV outputs. The CSV files stay the source of truth."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# fixed hash salt and no date stamp keep the SVG bytes reproducible
_RC = {
    "svg.hashsalt": "slabwave",
    "svg.fonttype": "none",
    "figure.figsize": (5.0, 3.6),
    "font.size": 9,
    "axes.linewidth": 0.6,
}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def plot_trace(trace, angles, x3, path, title="|u| on the lateral surface"):
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        im = ax.pcolormesh(x3, angles, np.abs(trace), shading="nearest", cmap="viridis")
        fig.colorbar(im, ax=ax, label="|u|")
        ax.set_xlabel(r"$x_3$")
        ax.set_ylabel(r"$\theta$")
        ax.set_title(title)
        return _save(fig, path)


def plot_scan(scan, path):
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        data = np.ma.masked_array(scan.sigma_min, scan.masked)
        im = ax.pcolormesh(scan.re, scan.im, np.log10(data), shading="nearest", cmap="magma")
        fig.colorbar(im, ax=ax, label=r"$\log_{10}\sigma_{\min}$")
        cand = scan.candidates()
        if cand:
            ax.plot([c.real for c in cand], [c.imag for c in cand], "c+", ms=5, label="flagged")
            ax.legend(loc="lower right", frameon=False)
        ax.set_xlabel(r"Re $\lambda$")
        ax.set_ylabel(r"Im $\lambda$")
        return _save(fig, path)


def plot_weyl(mus, fit, path):
    j = np.arange(1, len(mus) + 1)
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        ax.loglog(j, mus, ".", ms=3, label=r"$\mu_j$")
        if fit is not None:
            ax.loglog(j, np.exp(fit.intercept) * j**fit.slope, "-", lw=0.8, label=f"slope {fit.slope:.3f}")
        ax.set_xlabel("j")
        ax.set_ylabel(r"$\mu_j$")
        ax.legend(frameon=False)
        return _save(fig, path)


def plot_sweep(table, path):
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        noises = sorted({r.noise for r in table.rows})
        for k, noise in enumerate(noises):
            rows = [r for r in table.rows if r.noise == noise and r.status == "ok"]
            if not rows:
                continue
            n1 = [r.N1 for r in rows]
            c = f"C{k}"
            ax.loglog(n1, [r.rel_error for r in rows], "o-", color=c, ms=3, label=f"error, noise {noise:g}")
            ax.loglog(n1, [r.rhs_bound for r in rows], "--", color=c, lw=0.8, label="fitted bound")
        ax.set_xlabel(r"$N_1$")
        ax.set_ylabel("relative L2 error")
        ax.legend(frameon=False, fontsize=7)
        return _save(fig, path)


def plot_coefficients(kappas, coeffs, path, reference=None):
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        ax.semilogy(kappas, np.abs(coeffs) + 1e-300, "o", ms=3, label="recovered")
        if reference is not None:
            ax.semilogy(kappas, np.abs(reference) + 1e-300, "x", ms=3, label="projection")
        ax.set_xlabel(r"$\kappa_j$")
        ax.set_ylabel(r"$|f_j|$")
        ax.legend(frameon=False)
        return _save(fig, path)
