"""N-sweeps and path-ensemble studies of the interface scaling laws.

A ScalingReport gathers, per system size N: the principal eigenvalue and
lam^sqrt(N), the spectral gap ratio, L2 distances of the rescaled
eigenfunction to its Gaussian limit, the Dirichlet form, the stationary
height variance, and a fitted Gaussian envelope; plus Monte Carlo path
statistics (variance/covariance curves, excess kurtosis, fourth-moment
tightness statistic) with batch-means standard errors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import oracle, sampler, transfer
from .increments import IncrementDistribution
from .util import fmt_float, fsum

# Quadrupling sweep: sqrt(N) doubles each step, so consecutive pairs give a
# clean two-point Richardson step in N^{-1/2}.
DEFAULT_SWEEP = (1000, 4000, 16000, 64000, 256000)
DEFAULT_T_GRID = tuple(round(0.1 * k, 1) for k in range(11))
DYADIC_T = tuple(2.0**-k for k in range(6, 0, -1))
N_BATCHES = 100


def gaussian_profile(variance: float, r: np.ndarray) -> np.ndarray:
    """g(r) = (2 pi v)^{-1/4} exp(-r^2/(4v)); g^2 is the N(0, v) density."""
    return (2.0 * math.pi * variance) ** -0.25 * np.exp(-np.square(r) / (4.0 * variance))


def model_targets(dist: IncrementDistribution) -> dict:
    """Limit constants of the implemented kernel (see oracle.ou_reference)."""
    sigma = dist.sigma
    variance, _ = oracle.ou_reference(sigma, 0.0)
    return {
        "sigma2": dist.variance,
        "sigma": sigma,
        "lambda_power_limit": oracle.lambda_power_limit(sigma),
        "stationary_variance": variance,
        "ou_rate": oracle.ou_drift(sigma),
    }


@dataclass
class EigenRecord:
    N: int
    s_max: int
    lam: float
    log_lam: float
    lam_pow_sqrt_n: float
    residual: float
    iterations: int
    gap_ratio: float | None
    dirichlet: float
    dirichlet_sqrt_n: float
    split_identity_gap: float
    var_s_over_sqrt_n: float
    measure_variance: float
    l2_dist_validated: float
    l2_dist_sigma_half: float
    kolmogorov_validated: float
    kolmogorov_sigma_half: float
    envelope_c: float
    envelope_big_c: float
    variational_quotient: float
    profile_r: np.ndarray = field(repr=False)
    profile_h: np.ndarray = field(repr=False)


@dataclass
class PathStatsRecord:
    N: int
    n_paths: int
    seed: int
    t_grid: np.ndarray
    var: np.ndarray
    var_se: np.ndarray
    cov: np.ndarray
    cov_se: np.ndarray
    kurtosis_mid: float
    kurtosis_mid_se: float
    m4_t: np.ndarray
    m4: np.ndarray
    m4_se: np.ndarray
    m4_over_t32: np.ndarray
    sup_m4_over_t32: float


@dataclass
class ScalingReport:
    dist_spec: dict
    dist_label: str
    seed: int
    sweep: tuple
    targets: dict
    eigen: list
    richardson: dict
    path_stats: list
    ou_validation: dict | None = None

    def record(self, N: int) -> EigenRecord:
        for rec in self.eigen:
            if rec.N == N:
                return rec
        raise KeyError(N)


# ---------------------------------------------------------------------------
# Eigen-side studies
# ---------------------------------------------------------------------------


def solve_sweep(n_list, dist, tol=transfer.DEFAULT_TOL):
    """Eigen solutions {N: (kernel, pair)} with the auto-managed window."""
    return {int(n): transfer.solve_eigenpair(int(n), dist, tol=tol) for n in n_list}


def l2_distance_to_profile(kernel, pair, variance: float) -> float:
    """Exact L2(R) distance between the step function htilde and g_variance.

    Cell integrals of (a - g)^2 use the closed-form Gaussian antiderivatives,
    so the only approximation is the truncation window itself.
    """
    from math import erf

    n4 = kernel.N**0.25
    a = kernel.N**0.125 * pair.h
    lo = kernel.states / n4
    hi = (kernel.states + 1) / n4
    c = (2.0 * math.pi * variance) ** -0.25
    s4 = math.sqrt(4.0 * variance)
    s2 = math.sqrt(2.0 * variance)
    erf_v = np.vectorize(erf)
    int_g = c * s4 * math.sqrt(math.pi) / 2.0 * (erf_v(hi / s4) - erf_v(lo / s4))
    int_g2 = c * c * s2 * math.sqrt(math.pi) / 2.0 * (erf_v(hi / s2) - erf_v(lo / s2))
    # tail of g^2 outside the covered cells
    tail = 1.0 - c * c * s2 * math.sqrt(math.pi) / 2.0 * (erf_v(hi[-1] / s2) - erf_v(lo[0] / s2))
    return math.sqrt(max(fsum(a * a / n4 - 2.0 * a * int_g + int_g2) + tail, 0.0))


def kolmogorov_to_gaussian(kernel, pair, variance: float) -> float:
    """sup |F_step - Phi| between the htilde^2 measure and N(0, variance).

    Evaluated at all lattice cell boundaries and midpoints (the step CDF is
    linear inside each cell, so this brackets the supremum tightly).
    """
    n4 = kernel.N**0.25
    cum = np.concatenate([[0.0], np.cumsum(pair.h**2)])
    bounds = np.concatenate([kernel.states, [kernel.s_max + 1]]) / n4
    mids = 0.5 * (bounds[:-1] + bounds[1:])
    f_mid = 0.5 * (cum[:-1] + cum[1:])
    from scipy.stats import norm

    scale = math.sqrt(variance)
    d_bounds = np.abs(cum - norm.cdf(bounds, scale=scale)).max()
    d_mids = np.abs(f_mid - norm.cdf(mids, scale=scale)).max()
    return float(max(d_bounds, d_mids))


def measure_variance(kernel, pair) -> float:
    """Variance of the probability measure htilde^2(r) dr (exact cell moments)."""
    s = kernel.states.astype(float)
    h2 = pair.h**2
    sqrt_n = math.sqrt(kernel.N)
    mean = fsum(h2 * (s + 0.5)) / kernel.N**0.25
    second = fsum(h2 * (s * s + s + 1.0 / 3.0)) / sqrt_n
    return second - mean * mean


def envelope_fit(kernel, pair, r_span: float = 4.0, r_step: float = 0.05) -> tuple[float, float]:
    """Fit (C, c) such that htilde(r) <= C exp(-c r^2) on the standard grid.

    c comes from least squares of -log htilde against r^2 over the grid
    |r| <= r_span; C is then raised until the envelope dominates every grid
    point, so the bound holds there by construction and only c is informative.
    """
    span = min(r_span, kernel.s_max / kernel.N**0.25)
    r = np.arange(-span, span + r_step / 2, r_step)
    a = transfer.rescaled_eigenfunction(kernel, pair, r)
    x = np.square(r)
    coeffs = np.polynomial.polynomial.polyfit(x, -np.log(a), 1)
    c = float(coeffs[1])
    big_c = float(np.max(a * np.exp(c * x)))
    return big_c, c


def eigen_record(
    N, kernel, pair, dist, targets, compute_gap=True, profile_span=4.0, profile_step=0.05
) -> EigenRecord:
    sqrt_n = math.sqrt(N)
    gap = None
    if compute_gap:
        gap = transfer.second_eigenvalue(kernel, pair) / pair.lam
    dirichlet, rhs = transfer.dirichlet_split_identity(kernel, pair)
    var_s = fsum(np.square(kernel.states.astype(float)) * pair.h**2)
    big_c, env_c = envelope_fit(kernel, pair)
    span = min(profile_span, kernel.s_max / N**0.25)
    grid = np.arange(-span, span + profile_step / 2, profile_step)
    return EigenRecord(
        N=N,
        s_max=kernel.s_max,
        lam=pair.lam,
        log_lam=pair.log_lam,
        lam_pow_sqrt_n=math.exp(sqrt_n * pair.log_lam),
        residual=pair.residual,
        iterations=pair.iterations,
        gap_ratio=gap,
        dirichlet=dirichlet,
        dirichlet_sqrt_n=dirichlet * sqrt_n,
        split_identity_gap=abs(dirichlet - rhs),
        var_s_over_sqrt_n=var_s / sqrt_n,
        measure_variance=measure_variance(kernel, pair),
        l2_dist_validated=l2_distance_to_profile(kernel, pair, targets["stationary_variance"]),
        l2_dist_sigma_half=l2_distance_to_profile(kernel, pair, dist.sigma / 2.0),
        kolmogorov_validated=kolmogorov_to_gaussian(kernel, pair, targets["stationary_variance"]),
        kolmogorov_sigma_half=kolmogorov_to_gaussian(kernel, pair, dist.sigma / 2.0),
        envelope_c=env_c,
        envelope_big_c=big_c,
        variational_quotient=transfer.variational_lower_bound(N, dist),
        profile_r=grid,
        profile_h=transfer.rescaled_eigenfunction(kernel, pair, grid),
    )


def richardson(n_list, values) -> dict:
    """Two-point Richardson extrapolation in h = N^{-1/2} along the sweep."""
    n_arr = np.asarray(n_list, dtype=float)
    v = np.asarray(values, dtype=float)
    h = n_arr**-0.5
    extraps = [
        float((v[i + 1] * h[i] - v[i] * h[i + 1]) / (h[i] - h[i + 1]))
        for i in range(len(v) - 1)
    ]
    return {
        "values": [float(x) for x in v],
        "pairwise": extraps,
        "extrapolated": extraps[-1] if extraps else float(v[-1]),
    }


# ---------------------------------------------------------------------------
# Path-ensemble studies
# ---------------------------------------------------------------------------


def _batch_stat(per_path: np.ndarray, n_batches: int = N_BATCHES) -> tuple[float, float]:
    """Mean and batch-means standard error of a per-path statistic."""
    usable = (len(per_path) // n_batches) * n_batches
    batches = per_path[:usable].reshape(n_batches, -1).mean(axis=1)
    return float(batches.mean()), float(batches.std(ddof=1) / math.sqrt(n_batches))


def path_statistics(
    N: int,
    table: sampler.TransitionTable,
    n_paths: int,
    seed: int,
    t_grid=DEFAULT_T_GRID,
    m4_t=DYADIC_T,
) -> PathStatsRecord:
    """Ensemble statistics of the rescaled trajectory at one system size.

    Covariances pool every available start block at each lag (stationarity
    justifies pooling); standard errors come from 100 path batches, so merges
    are associative and order-independent.
    """
    b = sampler.block_length(N)
    heights = sampler.sample_segments(table, n_paths, b, seed)
    z = sampler.block_values(heights, N)
    t_grid = np.asarray(t_grid, dtype=float)
    var = np.empty(len(t_grid))
    var_se = np.empty(len(t_grid))
    cov = np.empty(len(t_grid))
    cov_se = np.empty(len(t_grid))
    for j, t in enumerate(t_grid):
        x = min(int(math.floor(t * b)), b)
        col = z[:, x]
        v, v_se = _batch_stat((col - col.mean()) ** 2)
        var[j], var_se[j] = v, v_se
        lag = x
        a_block, c_block = z[:, : b + 1 - lag], z[:, lag:]
        prod = (a_block * c_block).mean(axis=1)
        mean_a = a_block.mean()
        mean_c = c_block.mean()
        c_est, c_se = _batch_stat(prod)
        cov[j], cov_se[j] = c_est - mean_a * mean_c, c_se
    mid = z[:, b // 2]
    m2, _ = _batch_stat((mid - mid.mean()) ** 2)
    m4_mid, m4_mid_se = _batch_stat((mid - mid.mean()) ** 4)
    kurt = m4_mid / m2**2 - 3.0
    kurt_se = m4_mid_se / m2**2
    m4_t = np.asarray(m4_t, dtype=float)
    m4 = np.empty(len(m4_t))
    m4_se = np.empty(len(m4_t))
    for j, t in enumerate(m4_t):
        x = min(int(math.floor(t * b)), b)
        disp = (z[:, x] - z[:, 0]) ** 4
        m4[j], m4_se[j] = _batch_stat(disp)
    ratio = m4 / m4_t**1.5
    return PathStatsRecord(
        N=N,
        n_paths=n_paths,
        seed=seed,
        t_grid=t_grid,
        var=var,
        var_se=var_se,
        cov=cov,
        cov_se=cov_se,
        kurtosis_mid=kurt,
        kurtosis_mid_se=kurt_se,
        m4_t=m4_t,
        m4=m4,
        m4_se=m4_se,
        m4_over_t32=ratio,
        sup_m4_over_t32=float(ratio.max()),
    )


def free_walk_fourth_moment(dist: IncrementDistribution, steps: int) -> float:
    """E[(sum of `steps` free increments)^4] via the exact convolution table."""
    offsets, probs = dist.n_step_table(steps)
    return fsum(probs * offsets.astype(float) ** 4)


def tightness_summary(path_stats: list) -> dict:
    sups = {rec.N: rec.sup_m4_over_t32 for rec in path_stats}
    values = list(sups.values())
    return {
        "sup_by_n": sups,
        "max_over_min": max(values) / min(values) if min(values) > 0 else math.inf,
    }


# ---------------------------------------------------------------------------
# Full study
# ---------------------------------------------------------------------------


def run_scaling_study(
    dist: IncrementDistribution,
    n_list=DEFAULT_SWEEP,
    n_paths: int = 10_000,
    seed: int = 101,
    t_grid=DEFAULT_T_GRID,
    tol: float = transfer.DEFAULT_TOL,
    compute_gap: bool = True,
    with_paths: bool = True,
    validate_ou: bool = True,
    progress=None,
) -> ScalingReport:
    """Solve the sweep, collect eigen records, path statistics, and targets."""
    targets = model_targets(dist)
    n_list = tuple(int(n) for n in n_list)
    records = []
    path_stats = []
    for n in n_list:
        kernel, pair = transfer.solve_eigenpair(n, dist, tol=tol)
        rec = eigen_record(n, kernel, pair, dist, targets, compute_gap=compute_gap)
        records.append(rec)
        if progress:
            progress(f"N={n}: lambda={rec.lam:.12f} lambda^sqrtN={rec.lam_pow_sqrt_n:.6f}")
        if with_paths:
            table = sampler.TransitionTable(kernel, pair)
            path_stats.append(path_statistics(n, table, n_paths, seed, t_grid=t_grid))
            if progress:
                progress(
                    f"N={n}: paths={n_paths} var(S(0))={path_stats[-1].var[0]:.4f} "
                    f"sup M4/t^1.5={path_stats[-1].sup_m4_over_t32:.3f}"
                )
    rich = richardson(n_list, [r.lam_pow_sqrt_n for r in records])
    ou_val = validate_ou_if(dist, seed) if validate_ou else None
    return ScalingReport(
        dist_spec=dist.spec(),
        dist_label=dist.label,
        seed=seed,
        sweep=n_list,
        targets=targets,
        eigen=records,
        richardson=rich,
        path_stats=path_stats,
        ou_validation=ou_val,
    )


def validate_ou_if(dist: IncrementDistribution, seed: int) -> dict:
    return oracle.validate_ou_reference(dist.sigma, seed=seed)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

EIGEN_CSV_COLUMNS = (
    "N", "S_max", "lambda", "log_lambda", "lambda_pow_sqrtN", "gap_ratio",
    "residual", "iterations", "dirichlet", "dirichlet_sqrtN", "split_identity_gap",
    "var_s_over_sqrtN", "measure_variance", "l2_dist_validated", "l2_dist_sigma_half",
    "kolmogorov_validated", "kolmogorov_sigma_half", "envelope_c", "envelope_C",
    "variational_quotient",
)


def eigen_csv(report: ScalingReport) -> str:
    lines = [",".join(EIGEN_CSV_COLUMNS)]
    for r in report.eigen:
        row = [
            str(r.N), str(r.s_max), fmt_float(r.lam), fmt_float(r.log_lam),
            fmt_float(r.lam_pow_sqrt_n),
            fmt_float(r.gap_ratio) if r.gap_ratio is not None else "",
            fmt_float(r.residual), str(r.iterations), fmt_float(r.dirichlet),
            fmt_float(r.dirichlet_sqrt_n), fmt_float(r.split_identity_gap),
            fmt_float(r.var_s_over_sqrt_n), fmt_float(r.measure_variance),
            fmt_float(r.l2_dist_validated), fmt_float(r.l2_dist_sigma_half),
            fmt_float(r.kolmogorov_validated), fmt_float(r.kolmogorov_sigma_half),
            fmt_float(r.envelope_c), fmt_float(r.envelope_big_c),
            fmt_float(r.variational_quotient),
        ]
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


PATH_CSV_COLUMNS = ("N", "t", "var", "var_se", "cov", "cov_se", "m4", "m4_se", "m4_over_t32")


def path_stats_csv(report: ScalingReport) -> str:
    lines = [",".join(PATH_CSV_COLUMNS)]
    for rec in report.path_stats:
        for j, t in enumerate(rec.t_grid):
            lines.append(",".join([
                str(rec.N), fmt_float(t), fmt_float(rec.var[j]), fmt_float(rec.var_se[j]),
                fmt_float(rec.cov[j]), fmt_float(rec.cov_se[j]), "", "", "",
            ]))
        for j, t in enumerate(rec.m4_t):
            lines.append(",".join([
                str(rec.N), fmt_float(t), "", "", "", "",
                fmt_float(rec.m4[j]), fmt_float(rec.m4_se[j]), fmt_float(rec.m4_over_t32[j]),
            ]))
    return "\n".join(lines) + "\n"


def report_payload(report: ScalingReport) -> dict:
    """JSON-ready dict with full provenance per record."""
    return {
        "dist": report.dist_spec,
        "dist_label": report.dist_label,
        "seed": report.seed,
        "sweep": list(report.sweep),
        "targets": report.targets,
        "richardson_lambda_pow_sqrtN": report.richardson,
        "ou_validation": report.ou_validation,
        "eigen_records": [
            {
                "N": r.N, "S_max": r.s_max, "lambda": r.lam, "log_lambda": r.log_lam,
                "lambda_pow_sqrtN": r.lam_pow_sqrt_n, "gap_ratio": r.gap_ratio,
                "residual": r.residual, "iterations": r.iterations,
                "dirichlet": r.dirichlet, "dirichlet_sqrtN": r.dirichlet_sqrt_n,
                "split_identity_gap": r.split_identity_gap,
                "var_s_over_sqrtN": r.var_s_over_sqrt_n,
                "measure_variance": r.measure_variance,
                "l2_dist_validated": r.l2_dist_validated,
                "l2_dist_sigma_half": r.l2_dist_sigma_half,
                "kolmogorov_validated": r.kolmogorov_validated,
                "kolmogorov_sigma_half": r.kolmogorov_sigma_half,
                "envelope": {"C": r.envelope_big_c, "c": r.envelope_c},
                "variational_quotient": r.variational_quotient,
                "seed": report.seed,
                "dist": report.dist_spec,
            }
            for r in report.eigen
        ],
        "path_stats": [
            {
                "N": rec.N, "n_paths": rec.n_paths, "seed": rec.seed,
                "t_grid": rec.t_grid, "var": rec.var, "var_se": rec.var_se,
                "cov": rec.cov, "cov_se": rec.cov_se,
                "kurtosis_mid": rec.kurtosis_mid, "kurtosis_mid_se": rec.kurtosis_mid_se,
                "m4_t": rec.m4_t, "m4": rec.m4, "m4_se": rec.m4_se,
                "m4_over_t32": rec.m4_over_t32, "sup_m4_over_t32": rec.sup_m4_over_t32,
            }
            for rec in report.path_stats
        ],
        "tightness": tightness_summary(report.path_stats) if report.path_stats else None,
    }
