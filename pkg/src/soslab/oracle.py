"""Independent ground truth: exact path enumeration, a second eigen-solver,
and the continuum reference process.

Nothing here shares numerical machinery with the modules it validates: the
eigen oracle uses repeated matrix squaring instead of power iteration, the
enumeration multiplies kernel entries path by path in log space, and the
continuum reference is checked by direct Monte Carlo of a conditioned
Brownian motion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .increments import IncrementDistribution
from .transfer import Eigenpair, TruncatedKernel
from .util import DOMAIN_OU, NonConvergenceError, ResourceCapError, fdot, l2_norm, stream

PATH_COUNT_CAP = 100_000_000


@dataclass
class TinyInstance:
    """An exhaustively enumerable system: N <= 8, S_max <= 6."""

    N: int
    s_max: int
    dist: IncrementDistribution

    def __post_init__(self):
        if self.N > 8 or self.s_max > 6:
            raise ValueError("tiny instances require N <= 8 and S_max <= 6")
        if self.path_count > PATH_COUNT_CAP:
            raise ResourceCapError(
                f"{self.path_count} paths exceed enumeration cap {PATH_COUNT_CAP}"
            )

    @property
    def d(self) -> int:
        return 2 * self.s_max + 1

    @property
    def path_count(self) -> int:
        return self.d ** (self.N + 1)


@dataclass
class GibbsEnumeration:
    """Exact normalized path measure of a tiny instance.

    probs is indexed by the base-d encoding of (s_0..s_N), s_0 the slowest
    digit; marginals[x] is the law of s_x.
    """

    inst: TinyInstance
    probs: np.ndarray
    log_z: float
    z: float
    marginals: np.ndarray

    def path_probability(self, heights: np.ndarray) -> float:
        return float(self.probs[encode_paths(np.asarray(heights)[None, :], self.inst.s_max)[0]])


def encode_paths(heights: np.ndarray, s_max: int) -> np.ndarray:
    """Base-d indices of height paths (s_0 most significant digit)."""
    d = 2 * s_max + 1
    digits = np.asarray(heights) + s_max
    if np.any((digits < 0) | (digits >= d)):
        raise ValueError("heights outside window")
    idx = np.zeros(digits.shape[0], dtype=np.int64)
    for x in range(digits.shape[1]):
        idx = idx * d + digits[:, x]
    return idx


def enumerate_gibbs(inst: TinyInstance, kernel: TruncatedKernel, pair: Eigenpair) -> GibbsEnumeration:
    """Exact Gibbs measure h(s_0) prod T(s_{x-1}, s_x) h(s_N) over all paths.

    Weights are accumulated in log space (breadth-first over path prefixes) so
    deep instances cannot underflow; the returned measure is normalized by the
    exact partition sum.
    """
    if kernel.N != inst.N or kernel.s_max != inst.s_max:
        raise ValueError("kernel/pair window does not match the instance")
    d = inst.d
    with np.errstate(divide="ignore"):
        log_t = np.log(kernel.dense(max_dim=d))
        log_h = np.log(pair.h)
    acc = log_h[None, :].copy()  # rows: prefixes, cols: current s_x
    for _ in range(inst.N):
        acc = (acc[:, :, None] + log_t[None, :, :]).reshape(-1, d)
    log_w = (acc + log_h[None, :]).reshape(-1)
    m = log_w.max()
    with np.errstate(over="ignore"):
        rel = np.exp(log_w - m)
    total = rel.sum()
    log_z = m + math.log(total)
    probs = rel / total
    marginals = np.empty((inst.N + 1, d))
    shaped = probs.reshape((d,) * (inst.N + 1))
    for x in range(inst.N + 1):
        axes = tuple(a for a in range(inst.N + 1) if a != x)
        marginals[x] = shaped.sum(axis=axes)
    return GibbsEnumeration(inst=inst, probs=probs, log_z=log_z, z=math.exp(log_z), marginals=marginals)


def dense_eigen_oracle(kernel, tol: float = 1e-13, max_squarings: int = 100) -> Eigenpair:
    """Principal eigenpair by repeated squaring of the dense matrix.

    M <- M^2 / max(M^2) applied to the uniform vector squares the effective
    power-iteration count each round; the Rayleigh quotient against the
    original matrix is monitored until it stabilizes at tol.  Deliberately
    shares no code with transfer.principal_eigenpair.  Accepts a
    TruncatedKernel or any symmetric nonnegative matrix.
    """
    a = kernel.dense(max_dim=200) if hasattr(kernel, "dense") else np.asarray(kernel, dtype=float)
    d = a.shape[0]
    if d > 200:
        raise ResourceCapError("dense eigen oracle restricted to d <= 200")
    m = a / a.max()
    v = np.ones(d) / math.sqrt(d)
    lam = float(v @ (a @ v))
    lam_prev = math.inf
    for squarings in range(1, max_squarings + 1):
        m = m @ m
        peak = m.max()
        if peak <= 0:
            raise NonConvergenceError("squared matrix lost positivity")
        m /= peak
        v = m @ np.ones(d)
        v /= np.linalg.norm(v)
        lam = float(v @ (a @ v))
        if abs(lam - lam_prev) <= tol * max(1.0, abs(lam)):
            break
        lam_prev = lam
    else:
        raise NonConvergenceError(f"eigen oracle: Rayleigh quotient not stable at {tol:.1e}")
    if v[d // 2] < 0:
        v = -v
    v = v / l2_norm(v)
    w = a @ v
    lam = fdot(v, w)
    return Eigenpair(
        lam=lam, log_lam=math.log(lam), h=v, residual=l2_norm(w - lam * v), iterations=squarings
    )


# ---------------------------------------------------------------------------
# Continuum reference process
# ---------------------------------------------------------------------------
#
# The kernel's continuum limit is the Feynman-Kac semigroup of a Brownian
# motion with variance sigma^2 under the quadratic potential V(r) = r^2 (one
# unit of rescaled time spans sqrt(N) lattice columns, over which each column
# contributes s^2/N to the action).  Its ground state is
#     u(r) = exp(-r^2 / (sqrt(2) sigma)),   energy  E0 = sigma / sqrt(2),
# and the ground-state (h-transform) process is the stationary OU process
#     dX = -sqrt(2) sigma X dt + sigma dB,
# with stationary variance sigma/(2 sqrt(2)) and covariance decaying at rate
# sqrt(2) sigma.  validate_ou_reference checks all of this against a direct
# weighted simulation of the conditioned Brownian motion, so the constants
# are never taken on faith.


def ou_drift(sigma: float) -> float:
    """Mean-reversion rate of the limiting OU process."""
    return math.sqrt(2.0) * sigma


def ou_reference(sigma: float, t: float) -> tuple[float, float]:
    """(stationary variance, stationary covariance at lag t) of the limit process."""
    if t < 0:
        raise ValueError("t must be >= 0")
    variance = sigma / (2.0 * math.sqrt(2.0))
    return variance, variance * math.exp(-ou_drift(sigma) * t)


def lambda_power_limit(sigma: float) -> float:
    """lim lam_N^{sqrt N} = exp(-E0) with E0 the ground-state energy above."""
    return math.exp(-sigma / math.sqrt(2.0))


def validate_ou_reference(
    sigma: float,
    seed: int = 0,
    n_paths: int = 300_000,
    n_steps: int = 400,
    rel_tol: float = 0.04,
    t_checks: tuple = (0.25, 0.5, 1.0),
) -> dict:
    """Independent Monte Carlo check of ou_reference.

    Simulates Brownian paths (variance sigma^2) on [0, 1], reweights by
    u(B_0) exp(-trapz B^2 dt) u(B_1) / q(B_0), and compares the weighted
    variance and lag covariances against ou_reference.  Returns a report dict
    with per-check relative errors; 'passed' is True only if every check is
    within rel_tol.
    """
    rng = stream(seed, DOMAIN_OU, 0)
    dt = 1.0 / n_steps
    beta = math.sqrt(2.0) / sigma  # ground state u = exp(-beta r^2 / 2)
    q_std = math.sqrt(sigma)
    b = rng.normal(0.0, q_std, size=n_paths)
    log_w = -0.5 * beta * b**2 + 0.5 * (b / q_std) ** 2
    action = 0.5 * b**2 * dt
    snapshots = {0.0: b.copy()}
    wanted = {round(tc * n_steps) for tc in t_checks}
    for k in range(1, n_steps + 1):
        b = b + rng.normal(0.0, sigma * math.sqrt(dt), size=n_paths)
        action += (0.5 if k == n_steps else 1.0) * b**2 * dt
        if k in wanted:
            snapshots[k / n_steps] = b.copy()
    log_w += -action - 0.5 * beta * b**2
    w = np.exp(log_w - log_w.max())
    w_sum = w.sum()
    ess = float(w_sum**2 / np.sum(w**2))

    def weighted_cov(x, y):
        mx, my = np.sum(w * x) / w_sum, np.sum(w * y) / w_sum
        return float(np.sum(w * (x - mx) * (y - my)) / w_sum)

    ref_var, _ = ou_reference(sigma, 0.0)
    checks = []
    var_hat = weighted_cov(snapshots[0.0], snapshots[0.0])
    checks.append({"quantity": "variance", "t": 0.0, "measured": var_hat, "reference": ref_var,
                   "rel_error": abs(var_hat - ref_var) / ref_var})
    for tc in t_checks:
        _, ref_cov = ou_reference(sigma, tc)
        cov_hat = weighted_cov(snapshots[0.0], snapshots[tc])
        checks.append({"quantity": "covariance", "t": tc, "measured": cov_hat,
                       "reference": ref_cov, "rel_error": abs(cov_hat - ref_cov) / ref_cov})
    return {
        "passed": bool(all(c["rel_error"] <= rel_tol for c in checks)),
        "rel_tol": rel_tol,
        "effective_sample_size": ess,
        "n_paths": n_paths,
        "n_steps": n_steps,
        "seed": seed,
        "checks": checks,
    }


# ---------------------------------------------------------------------------
# Monte Carlo total-variation diagnostics
# ---------------------------------------------------------------------------


def tv_distance(probs: np.ndarray, counts: np.ndarray, n_samples: int) -> float:
    """Total-variation distance between an empirical law and the exact one."""
    return float(0.5 * np.abs(counts / n_samples - probs).sum())


def expected_tv_floor(probs: np.ndarray, n_samples: int, chunk: int = 4_000_000) -> float:
    """E[TV] for a perfect sampler: 0.5/M * sum_p E|X_p - M p|, X_p ~ Bin(M, p).

    Uses De Moivre's mean-absolute-deviation identity
    E|X - Mp| = 2 (k+1) (1-p) P(X = k+1) with k = floor(Mp), exact for the
    binomial marginals of the empirical counts.
    """
    total = 0.0
    for lo in range(0, len(probs), chunk):
        p = probs[lo : lo + chunk]
        k = np.floor(n_samples * p)
        total += float(np.sum(2.0 * (k + 1.0) * (1.0 - p) * stats.binom.pmf(k + 1.0, n_samples, p)))
    return 0.5 * total / n_samples
