"""Figure rendering for trajectory logs and sweep tables.

Rendering is headless (Agg backend, forced before pyplot import) and every
function writes PNG files next to the delimited output, returning the list
of paths it created.
"""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

__all__ = ["render_trajectory", "render_sweep", "render_gamma2",
           "render_frontier"]

_DPI = 130


def _box_bounds(poly, dim: int):
    """Per-component (lo, hi) implied by the polytope rows that are scaled
    unit vectors; +-inf where no such row exists."""
    lo = np.full(dim, -np.inf)
    hi = np.full(dim, np.inf)
    for a, b in zip(poly.C, poly.d):
        idx = np.nonzero(a)[0]
        if idx.size != 1:
            continue
        j = idx[0]
        if a[j] > 0:
            hi[j] = min(hi[j], b / a[j])
        else:
            lo[j] = max(lo[j], b / a[j])
    return lo, hi


def _times(log) -> np.ndarray:
    return np.array([rec.t for rec in log.records], dtype=float)


def render_trajectory(log, outdir, stem: str, problem=None) -> list:
    """Render one closed-loop run to {stem}_states.png, {stem}_inputs.png
    and {stem}_errors.png under outdir."""
    os.makedirs(outdir, exist_ok=True)
    if not log.records:
        return []
    t = _times(log)
    states = log.states()
    inputs = log.inputs()
    n, m = states.shape[1], inputs.shape[1]
    title = f"ell={log.ell}, x0=({', '.join(f'{v:g}' for v in log.x0)})"
    paths = []

    # States: time series, plus the phase portrait when the state is planar.
    ncols = 2 if n == 2 else 1
    fig, axes = plt.subplots(1, ncols, figsize=(5.0 * ncols, 3.6))
    axes = np.atleast_1d(axes)
    for i in range(n):
        axes[0].plot(t, states[:, i], lw=1.2, label=f"x{i + 1}")
    if problem is not None:
        lo, hi = _box_bounds(problem.X, n)
        for v in np.concatenate([lo[np.isfinite(lo)], hi[np.isfinite(hi)]]):
            axes[0].axhline(v, color="0.6", lw=0.8, ls="--")
    axes[0].set_xlabel("t")
    axes[0].set_ylabel("state")
    axes[0].legend(loc="best", fontsize=8)
    axes[0].grid(alpha=0.3)
    if n == 2:
        axes[1].plot(states[:, 0], states[:, 1], "-o", ms=2.5, lw=1.0)
        axes[1].plot(states[0, 0], states[0, 1], "ks", ms=5, label="x0")
        if problem is not None:
            lo, hi = _box_bounds(problem.X, 2)
            if np.all(np.isfinite(lo)) and np.all(np.isfinite(hi)):
                axes[1].plot([lo[0], hi[0], hi[0], lo[0], lo[0]],
                             [lo[1], lo[1], hi[1], hi[1], lo[1]],
                             color="0.6", lw=0.8, ls="--")
        axes[1].set_xlabel("x1")
        axes[1].set_ylabel("x2")
        axes[1].legend(loc="best", fontsize=8)
        axes[1].grid(alpha=0.3)
    fig.suptitle(title, fontsize=10)
    fig.tight_layout()
    path = os.path.join(outdir, f"{stem}_states.png")
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    paths.append(path)

    # Inputs as step functions against the input-box limits.
    fig, ax = plt.subplots(figsize=(5.0, 3.6))
    for j in range(m):
        ax.step(t, inputs[:, j], where="post", lw=1.2, label=f"u{j + 1}")
    if problem is not None:
        lo, hi = _box_bounds(problem.U, m)
        for v in np.concatenate([lo[np.isfinite(lo)], hi[np.isfinite(hi)]]):
            ax.axhline(v, color="0.6", lw=0.8, ls="--")
    ax.set_xlabel("t")
    ax.set_ylabel("input")
    ax.legend(loc="best", fontsize=8)
    ax.grid(alpha=0.3)
    fig.suptitle(title, fontsize=10)
    fig.tight_layout()
    path = os.path.join(outdir, f"{stem}_inputs.png")
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    paths.append(path)

    # Error and Lyapunov traces with their certificate envelopes.
    fig, ax = plt.subplots(figsize=(5.6, 3.6))
    e = np.array([rec.e_fnorm for rec in log.records])
    psi = np.array([rec.psi for rec in log.records])
    eb = np.array([rec.e_bound for rec in log.records])
    pb = np.array([rec.psi_bound for rec in log.records])
    ax.semilogy(t, np.maximum(e, 1e-300), lw=1.2, label="||e||_F")
    ax.semilogy(t, np.maximum(psi, 1e-300), lw=1.2, label="psi")
    ax.semilogy(t, np.maximum(eb, 1e-300), lw=0.9, ls="--", label="e bound")
    ax.semilogy(t, np.maximum(pb, 1e-300), lw=0.9, ls="--", label="psi bound")
    ax.set_xlabel("t")
    ax.legend(loc="best", fontsize=8)
    ax.grid(alpha=0.3, which="both")
    fig.suptitle(title, fontsize=10)
    fig.tight_layout()
    path = os.path.join(outdir, f"{stem}_errors.png")
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    paths.append(path)
    return paths


def render_gamma2(constants, outdir, stem: str) -> list:
    """Warm-start gain gamma2(ell) on a log axis, with ell* marked."""
    os.makedirs(outdir, exist_ok=True)
    top = max(int(1.5 * constants.ell_star), constants.ell_star + 10)
    ells = np.arange(1, top + 1)
    vals = np.array([constants.gamma2(int(l)) for l in ells])
    fig, ax = plt.subplots(figsize=(5.6, 3.6))
    ax.semilogy(ells, vals, lw=1.2, label="gamma2(ell)")
    ax.axvline(constants.ell_star, color="0.4", lw=0.9, ls="--",
               label=f"ell* = {constants.ell_star}")
    ax.set_xlabel("ell")
    ax.set_ylabel("gamma2")
    ax.legend(loc="best", fontsize=8)
    ax.grid(alpha=0.3, which="both")
    fig.tight_layout()
    path = os.path.join(outdir, f"{stem}.png")
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return [path]


def render_frontier(rows, outdir, stem: str) -> list:
    """Certified-rate frontier: tau_lmi against alpha.  `rows` holds
    (alpha, tau_lmi or None) pairs; uncertifiable alphas are skipped."""
    os.makedirs(outdir, exist_ok=True)
    pts = [(a, t) for a, t in rows if t is not None]
    fig, ax = plt.subplots(figsize=(5.6, 3.6))
    if pts:
        ax.plot([a for a, _ in pts], [t for _, t in pts], "-o", ms=3.5, lw=1.1)
    ax.set_xlabel("alpha")
    ax.set_ylabel("tau_lmi")
    ax.set_xlim(0.0, 2.0)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    path = os.path.join(outdir, f"{stem}.png")
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return [path]


def render_sweep(table, outdir, stem: str) -> list:
    """Render sup_t ||Bbar e_t|| against the iteration budget, one curve per
    initial state; converged-solve cells show as dotted floors."""
    os.makedirs(outdir, exist_ok=True)
    by_x0: dict = {}
    for cell in table.cells:
        by_x0.setdefault(tuple(np.asarray(cell.x0, dtype=float)), []).append(cell)
    if not by_x0:
        return []
    fig, ax = plt.subplots(figsize=(5.6, 3.8))
    floor_labeled = False
    for key, cells in sorted(by_x0.items()):
        label = f"x0=({', '.join(f'{v:g}' for v in key)})"
        numeric = sorted((c for c in cells if not isinstance(c.ell, str)),
                         key=lambda c: c.ell)
        if numeric:
            ells = [c.ell for c in numeric]
            vals = [max(c.sup_Be, 1e-300) for c in numeric]
            ax.semilogy(ells, vals, "-o", ms=3.5, lw=1.1, label=label)
        for c in cells:
            if isinstance(c.ell, str):
                ax.axhline(max(c.sup_Be, 1e-300), color="0.5", lw=0.8, ls=":",
                           label=None if floor_labeled else "converged solve")
                floor_labeled = True
    ax.set_xlabel("ell (iterations per step)")
    ax.set_ylabel("sup_t ||Bbar e_t||")
    ax.legend(loc="best", fontsize=8)
    ax.grid(alpha=0.3, which="both")
    fig.tight_layout()
    path = os.path.join(outdir, f"{stem}_sweep.png")
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return [path]
