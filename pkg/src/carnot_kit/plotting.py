"""Figures for CLI reports (matplotlib, non-interactive)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .multiexp import prefix_products  # noqa: E402

STYLE = {
    "figure.figsize": (5.0, 3.6),
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "savefig.dpi": 150,
}


def _save(fig, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_slope(report, path, title: str = "first-order residual") -> Path:
    """Log-log residual against the dilation parameter with a slope-2 guide."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        lam = np.asarray(report.lambdas)
        r = np.asarray(report.r_upper, dtype=float)
        keep = r > 0
        ax.loglog(lam[keep], r[keep], "o-", label="chain upper bound")
        if any(e is not None and e > 0 for e in report.r_est):
            est = np.array([e if e is not None else np.nan for e in report.r_est], dtype=float)
            ok = est > 0
            ax.loglog(lam[ok], est[ok], "s--", label="optimizer estimate")
        if keep.any():
            ref = r[keep][0] * (lam[keep] / lam[keep][0]) ** 2
            ax.loglog(lam[keep], ref, ":", color="gray", label="slope 2")
        ax.set_xlabel("lambda")
        ax.set_ylabel("residual")
        if report.slope is not None:
            title = f"{title} (slope {report.slope:.3f})"
        ax.set_title(title)
        ax.legend()
        return _save(fig, path)


def plot_path(g, controls, path, title: str = "horizontal path") -> Path:
    """First-layer projection of the piecewise-constant path, plus the top coordinate."""
    controls = np.asarray(controls, dtype=float)
    N = controls.shape[0]
    pts = prefix_products(g, controls / N)
    with plt.rc_context(STYLE):
        fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(8.0, 3.6))
        ax1.plot(pts[:, 0], pts[:, 1], ".-")
        ax1.set_xlabel("x1")
        ax1.set_ylabel("x2")
        ax1.set_aspect("equal", adjustable="datalim")
        ax1.set_title(title)
        s = np.linspace(0, 1, N + 1)
        ax2.plot(s, pts[:, -1])
        ax2.set_xlabel("s")
        ax2.set_ylabel(f"x{g.n}")
        return _save(fig, path)


def plot_cone(report, path) -> Path:
    """Certified violations: ``F`` (negative) against ``s`` with the ball radius."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        if report.violations:
            s = np.array([float(v.s) for v in report.violations])
            F = np.array([-float(v.F) for v in report.violations])
            d = np.array([v.distance for v in report.violations])
            r = np.array([v.radius for v in report.violations])
            ax.loglog(s, F, "v", label="-F at violation")
            ax.loglog(s, r, "_", markersize=12, label="ball radius eps s")
            ax.loglog(s, d, "x", label="path length")
            ax.legend()
        else:
            ax.text(0.5, 0.5, "no violations", ha="center", va="center", transform=ax.transAxes)
        ax.set_xlabel("s")
        ax.set_title(f"{report.name}, eps = {float(report.eps):g}")
        return _save(fig, path)


def plot_scan(report, S, path) -> Path:
    """Membership along the first witness line (or an empty panel)."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        if report.witnesses:
            from .convexity import line_points

            w = report.witnesses[0]
            s = np.linspace(float(w.s[0]), float(w.s[-1]), 200)
            pts = line_points(S.group, np.array(w.base, dtype=float), np.array(w.V, dtype=float), s)
            ax.plot(s, S.evaluate(pts, mode="float"))
            ax.axhline(0, color="gray")
            ax.set_ylabel("F")
        else:
            ax.text(0.5, 0.5, f"no violation in {report.lines} lines", ha="center", va="center", transform=ax.transAxes)
        ax.set_xlabel("s")
        ax.set_title(report.name)
        return _save(fig, path)


def plot_openness(report, path) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.semilogx(report.radii, report.coverage, "o-")
        ax.set_xlabel("radius")
        ax.set_ylabel("fraction of targets reached")
        ax.set_ylim(-0.05, 1.05)
        return _save(fig, path)
