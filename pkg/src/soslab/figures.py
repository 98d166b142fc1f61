"""Matplotlib rendering of scaling-report figures.

Figures are written as SVG next to the delimited output.  Rendering is
deterministic: the Agg backend, a fixed hash salt, and no date metadata, so
identical reports produce byte-identical files.
"""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .analysis import ScalingReport, gaussian_profile


def _style():
    plt.rcParams.update({
        "figure.figsize": (6.0, 4.0),
        "font.size": 9,
        "axes.grid": True,
        "grid.alpha": 0.3,
        "svg.hashsalt": "soslab",
    })


def save_figure(fig, path: str) -> None:
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def lambda_scaling_figure(report: ScalingReport):
    _style()
    fig, ax = plt.subplots()
    ns = [r.N for r in report.eigen]
    vals = [r.lam_pow_sqrt_n for r in report.eigen]
    ax.semilogx(ns, vals, "o-", label=r"$\lambda_N^{\sqrt{N}}$")
    limit = report.targets["lambda_power_limit"]
    ax.axhline(limit, color="k", ls="--", lw=1,
               label=rf"limit $e^{{-\sigma/\sqrt{{2}}}}$ = {limit:.5f}")
    rich = report.richardson["extrapolated"]
    ax.plot([ns[-1]], [rich], "s", color="C3", label=f"Richardson = {rich:.5f}")
    ax.set_xlabel("N")
    ax.set_ylabel(r"$\lambda_N^{\sqrt{N}}$")
    ax.set_title(f"Principal eigenvalue scaling, {report.dist_label}")
    ax.legend()
    fig.tight_layout()
    return fig


def eigenfunction_figure(report: ScalingReport):
    _style()
    fig, ax = plt.subplots()
    for rec in report.eigen:
        ax.plot(rec.profile_r, rec.profile_h, lw=1, alpha=0.8, label=f"N={rec.N}")
    r = np.linspace(-4, 4, 401)
    v = report.targets["stationary_variance"]
    ax.plot(r, gaussian_profile(v, r), "k--", lw=1.5,
            label=rf"Gaussian limit, var $\sigma/(2\sqrt{{2}})$")
    ax.set_xlabel("r")
    ax.set_ylabel(r"$\tilde h_N(r)$")
    ax.set_title(f"Rescaled eigenfunction, {report.dist_label}")
    ax.legend(fontsize=7)
    fig.tight_layout()
    return fig


def covariance_figure(report: ScalingReport):
    _style()
    fig, ax = plt.subplots()
    if report.path_stats:
        rec = report.path_stats[-1]
        ax.errorbar(rec.t_grid, rec.cov, yerr=3.0 * rec.cov_se, fmt="o", ms=3,
                    capsize=2, label=rf"measured, N={rec.N} ($\pm 3$ s.e.)")
    t = np.linspace(0, 1, 201)
    v = report.targets["stationary_variance"]
    rate = report.targets["ou_rate"]
    ax.plot(t, v * np.exp(-rate * t), "k--", lw=1.2,
            label=rf"OU reference $v\,e^{{-\theta t}}$, $\theta=\sqrt{{2}}\sigma$")
    sigma = report.targets["sigma"]
    ax.plot(t, sigma / 2 * np.exp(-sigma * t), ":", color="C3", lw=1.2,
            label=r"alt.\ $(\sigma/2)e^{-\sigma t}$ (excluded)")
    ax.set_xlabel("t")
    ax.set_ylabel(r"$\mathrm{Cov}(\tilde S(0), \tilde S(t))$")
    ax.set_title(f"Stationary covariance vs OU reference, {report.dist_label}")
    ax.legend(fontsize=8)
    fig.tight_layout()
    return fig


def tightness_figure(report: ScalingReport):
    _style()
    fig, ax = plt.subplots()
    for rec in report.path_stats:
        mask = rec.m4 > 0
        ax.loglog(rec.m4_t[mask], rec.m4_over_t32[mask], "o-", ms=3, label=f"N={rec.N}")
    sigma2 = report.targets["sigma2"]
    t = np.array(report.path_stats[-1].m4_t) if report.path_stats else np.array([0.01, 0.5])
    ax.loglog(t, 3.0 * sigma2**2 * np.sqrt(t), "k--", lw=1,
              label=r"free walk $3\sigma^4\sqrt{t}$")
    ax.set_xlabel("t")
    ax.set_ylabel(r"$M_4(t)/t^{3/2}$")
    ax.set_title(f"Tightness statistic, {report.dist_label}")
    ax.legend(fontsize=7)
    fig.tight_layout()
    return fig


def render_report_figures(report: ScalingReport, out_dir: str) -> list:
    """Render all report figures into out_dir; returns the file paths."""
    import os

    jobs = [
        ("lambda_scaling.svg", lambda_scaling_figure),
        ("eigenfunction_profile.svg", eigenfunction_figure),
    ]
    if report.path_stats:
        jobs += [
            ("covariance.svg", covariance_figure),
            ("tightness.svg", tightness_figure),
        ]
    paths = []
    for name, fn in jobs:
        path = os.path.join(out_dir, name)
        save_figure(fn(report), path)
        paths.append(path)
    return paths
