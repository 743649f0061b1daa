"""SVG figures for run reports: sheet heatmaps, I(r) and deviation curves.

Figures are rendered with the Agg backend and a fixed SVG hash salt and no
date stamp, so identical data gives byte-identical files.
"""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "svg.hashsalt": "aqlab",
    "svg.fonttype": "none",
    "font.size": 8,
    "axes.labelsize": 9,
    "axes.linewidth": 0.6,
    "lines.linewidth": 1.0,
    "figure.dpi": 100,
}
SVG_META = {"Date": None, "Creator": "aqlab"}
matplotlib.rcParams.update(STYLE)
MAX_RINGS = 80
MAX_COLS = 96


def _save(fig, path):
    fig.savefig(path, format="svg", metadata=SVG_META)
    plt.close(fig)
    return Path(path)


def _thin(n, cap):
    if n <= cap:
        return np.arange(n)
    idx = np.unique(np.linspace(0, n - 1, cap).round().astype(int))
    return idx


def _rings_linear(radii, cap):
    """Ring indices roughly evenly spaced in r (the mesh is uniform in log r)."""
    want = np.linspace(radii[0], radii[-1], cap)
    return np.unique(np.abs(radii[None, :] - want[:, None]).argmin(axis=1))


def block_slices(result):
    """(label, upper slice, lower slice, sheets per copy) for each block."""
    dec = result.decomposition
    if dec is None:
        q = result.f.q
        return [("map", slice(0, q), slice(0, result.f.lower.shape[2]), q)]
    out = []
    u = lo = 0
    q0 = dec.g0.q
    out.append((f"half block, Q0={q0}", slice(u, u + q0), slice(lo, lo + q0 - 1), q0))
    u += q0
    lo += q0 - 1
    for j, b in enumerate(dec.blocks, 1):
        out.append((f"block {j}, q={b.q}, k={b.k}", slice(u, u + b.q), slice(lo, lo + b.q), b.q))
        u += b.q * b.k
        lo += b.q * b.k
    return out


def sheet_heatmaps(result, out_dir: Path, component: int = 0):
    """One SVG per block; each panel shows one sheet (upper half above the
    axis, lower half below) coloured by the chosen component."""
    f = result.f
    me = f.mesh
    rows = _rings_linear(me.radii, MAX_RINGS)
    cols = _thin(me.m + 1, MAX_COLS)
    Xu, Yu = me.upper_xy[rows][:, cols, 0], me.upper_xy[rows][:, cols, 1]
    Xl, Yl = me.lower_xy[rows][:, cols, 0], me.lower_xy[rows][:, cols, 1]
    paths = []
    for j, (label, su, sl, nsheet) in enumerate(block_slices(result)):
        U = f.upper[rows][:, cols][:, :, su, component]
        L = f.lower[rows][:, cols][:, :, sl, component]
        vmax = max(float(np.abs(U).max(initial=0.0)), float(np.abs(L).max(initial=0.0)), 1e-300)
        fig, axes = plt.subplots(1, nsheet, figsize=(2.2 * nsheet + 0.6, 2.4), squeeze=False)
        for s in range(nsheet):
            ax = axes[0, s]
            pc = ax.pcolormesh(Xu, Yu, U[:, :, s], cmap="RdBu_r", vmin=-vmax, vmax=vmax, shading="gouraud", rasterized=True)
            if s < L.shape[2]:
                ax.pcolormesh(Xl, Yl, L[:, :, s], cmap="RdBu_r", vmin=-vmax, vmax=vmax, shading="gouraud", rasterized=True)
            ax.axhline(0.0, color="k", lw=0.5)
            ax.set_aspect("equal")
            ax.set_xlim(-1, 1)
            ax.set_ylim(-1, 1)
            ax.set_title(f"sheet {s + 1}", fontsize=8)
            ax.set_xticks([-1, 0, 1])
            ax.set_yticks([-1, 0, 1])
        fig.colorbar(pc, ax=list(axes[0]), shrink=0.8)
        fig.suptitle(label, fontsize=9)
        paths.append(_save(fig, Path(out_dir) / f"sheets_block{j}.svg"))
    return paths


def frequency_curve(profile, path: Path, alpha=None):
    fig, ax = plt.subplots(figsize=(4.0, 2.8))
    v = profile.valid
    ax.semilogx(profile.radii[v], profile.I[v], color="#08589e", label="I(r)")
    if (~v).any():
        ax.semilogx(profile.radii[~v], profile.I[~v], color="#7bccc4", ls=":", label="inner layer")
    if alpha is not None:
        ax.axhline(float(alpha), color="0.4", lw=0.6, ls="--", label=f"alpha = {float(alpha):.4g}")
    ax.set_xlabel("r")
    ax.set_ylabel("frequency I(r)")
    ax.legend(frameon=False)
    fig.tight_layout()
    return _save(fig, path)


def deviation_curve(tangent_result, path: Path):
    fig, ax = plt.subplots(figsize=(4.0, 2.8))
    rho, dev = tangent_result.rho, tangent_result.deviation
    pos = dev > 0
    ax.loglog(rho[pos], dev[pos], color="#2b8cbe", label="deviation")
    if tangent_result.slope is not None:
        lo, hi = tangent_result.fit_window
        sel = pos & (rho >= lo) & (rho <= hi)
        c = np.polyfit(np.log(rho[sel]), np.log(dev[sel]), 1)
        ax.loglog(rho[sel], np.exp(np.polyval(c, np.log(rho[sel]))), color="k", lw=0.6, ls="--",
                  label=f"slope {tangent_result.slope:.3f}")
    ax.set_xlabel("rho")
    ax.set_ylabel("squared L2 distance to tangent")
    ax.legend(frameon=False)
    fig.tight_layout()
    return _save(fig, path)


def axis_trace(x, h, path: Path, sigma=None):
    fig, ax = plt.subplots(figsize=(4.0, 2.6))
    ax.plot(x, h, color="#08589e")
    ax.axhline(0.0, color="0.5", lw=0.5)
    if sigma is not None and np.isfinite(sigma):
        ax.axvline(sigma, color="k", lw=0.6, ls="--", label=f"zero at {sigma:.2e}")
        ax.legend(frameon=False)
    ax.set_xlabel("x1 on the interface")
    ax.set_ylabel("lower sheet")
    fig.tight_layout()
    return _save(fig, path)
