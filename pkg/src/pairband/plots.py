"""Static PNG figures for run directories (matplotlib, Agg backend)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

DPI = 120


def _save(fig, path):
    # fixed metadata keeps repeated runs byte-identical
    fig.savefig(path, dpi=DPI, metadata={"Software": None})
    plt.close(fig)


def plot_band(band, path):
    fig, ax = plt.subplots(figsize=(5, 4))
    order = np.argsort(band.k)
    k = band.k[order] / np.pi
    ax.fill_between(k, band.scat_min[order], band.scat_max[order], color="0.85", label="scattering band")
    for b, color in (("lower", "tab:blue"), ("upper", "tab:red")):
        ax.plot(k, band.energy[b][order], color=color, lw=1.6, label=f"{b} bound band")
    ax.set_xlabel(r"$K/\pi$")
    ax.set_ylabel(r"$E/\kappa$")
    ax.set_title(f"U={band.params.u:g}, V={band.params.v:g}")
    ax.legend(fontsize=7, loc="best")
    fig.tight_layout()
    _save(fig, path)


def plot_profiles(times, profiles, path, title=""):
    fig, ax = plt.subplots(figsize=(5, 4))
    n = profiles.shape[1]
    ax.imshow(
        profiles.T,
        origin="lower",
        aspect="auto",
        extent=(times[0], times[-1], 0.5, n + 0.5),
        cmap="viridis",
        interpolation="nearest",
    )
    ax.set_xlabel(r"$t\kappa$")
    ax.set_ylabel("site j")
    ax.set_title(title)
    fig.tight_layout()
    _save(fig, path)


def plot_trajectory(traj, path, semiclassical=None, title=""):
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(5, 5), sharex=True)
    ax1.plot(traj.times, traj["x_c"], color="k", lw=1.2, label="simulation")
    if semiclassical is not None and len(semiclassical.times):
        ax1.plot(semiclassical.times, semiclassical.x_c, "--", color="tab:orange", lw=1.2, label="semiclassical")
        ax1.legend(fontsize=7)
    ax1.set_ylabel(r"$x_c$")
    ax1.set_title(title)
    ax2.plot(traj.times, traj["r_mean"], color="tab:blue", lw=1.2)
    ax2.set_ylabel(r"$\bar r$")
    ax2.set_xlabel(r"$t\kappa$")
    fig.tight_layout()
    _save(fig, path)


def plot_filter(results, path, title=""):
    """COM and fidelity of the +k0 and -k0 packets of a filter run."""
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(5, 5), sharex=True)
    for label, res in results.items():
        ax1.plot(res["traj"].times, res["traj"]["x_c"], lw=1.2, label=label)
        ax2.plot(res["traj"].times, res["traj"]["overlap"], lw=1.2, label=label)
    ax1.set_ylabel(r"$x_c$")
    ax1.legend(fontsize=7)
    ax1.set_title(title)
    ax2.set_ylabel(r"$f(t)$")
    ax2.set_xlabel(r"$t\kappa$")
    ax2.set_ylim(0, 1.02)
    fig.tight_layout()
    _save(fig, path)


def plot_phase_map(pm, path):
    fig, ax = plt.subplots(figsize=(5, 4.5))
    du = pm.u[1] - pm.u[0]
    dv = pm.v[1] - pm.v[0]
    extent = (pm.u[0] - du / 2, pm.u[-1] + du / 2, pm.v[0] - dv / 2, pm.v[-1] + dv / 2)
    ax.imshow(pm.complete.astype(float), origin="lower", extent=extent, cmap="Greys", vmin=-0.5, vmax=1.5, aspect="auto")
    # boundary curves |U + 2V| J = |U V| drawn on a fine grid
    from .model import hopping_amplitude

    jk = abs(float(hopping_amplitude(pm.k, pm.kappa)))
    uu, vv = np.meshgrid(np.linspace(extent[0], extent[1], 600), np.linspace(extent[2], extent[3], 600))
    ax.contour(uu, vv, np.abs(uu + 2 * vv) * jk - np.abs(uu * vv), levels=[0], colors="tab:red", linewidths=1)
    ax.set_xlabel(r"$U/\kappa$")
    ax.set_ylabel(r"$V/\kappa$")
    ax.set_title("complete (dark) / incomplete (light)")
    fig.tight_layout()
    _save(fig, path)
