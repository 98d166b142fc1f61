"""Symmetric aperiodic integer increment laws with exponential moments.

Every distribution here satisfies pi(eta) = pi(-eta), pi(0) > 0 (which makes
the induced walk aperiodic) and sum_eta exp(a*eta)*pi(eta) < inf for |a| <= a0.
The law is materialized on a symmetric window [-R, R] chosen so the mass
outside is below TAIL_MASS; all derived quantities are computed from that
window except the double-geometric moment generating function, which has a
closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .util import ResourceCapError, fsum, stream, DOMAIN_INCREMENTS

# Mass allowed outside the materialized support window; below the accumulation
# error of double precision sums.
TAIL_MASS = 1e-15

# Entries cap for n-step convolution tables (window overflow guard).
N_STEP_ENTRY_CAP = 20_000_000


@dataclass(eq=False)
class IncrementDistribution:
    """A symmetric pmf on the integers, frozen after construction.

    Attributes:
        kind: 'double_geometric' | 'lazy_simple_walk' | 'custom'
        params: constructor parameters, JSON-serializable
        support: eta values -R..R (R = support_radius)
        probs: pi(eta) on the support window
        variance: sigma^2 = sum eta^2 pi(eta)
        a0: largest a for which the untruncated mgf series converges
            (kappa for the double geometric, inf for finite support)
    """

    kind: str
    params: dict
    support: np.ndarray
    probs: np.ndarray
    variance: float
    a0: float
    _cdf: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if not np.allclose(self.probs, self.probs[::-1], rtol=0, atol=1e-15):
            raise ValueError("increment law must be symmetric")
        total = fsum(self.probs)
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"increment law mass {total} deviates from 1 by more than 1e-12")
        if self.pmf(0) <= 0.0:
            raise ValueError("pi(0) > 0 is required (aperiodicity)")
        cdf = np.cumsum(self.probs)
        cdf[-1] = 1.0  # absorb the <= 1e-15 tail into the extreme state
        self._cdf = cdf
        self.support.setflags(write=False)
        self.probs.setflags(write=False)

    @property
    def support_radius(self) -> int:
        return int(self.support[-1])

    @property
    def sigma(self) -> float:
        return math.sqrt(self.variance)

    @property
    def label(self) -> str:
        items = ",".join(f"{k}={v}" for k, v in self.params.items())
        return f"{self.kind}({items})" if items else self.kind

    def pmf(self, eta) -> float | np.ndarray:
        """pi(eta); zero outside the materialized window."""
        eta_arr = np.asarray(eta)
        r = self.support_radius
        idx = np.clip(eta_arr + r, 0, 2 * r)
        vals = np.where(np.abs(eta_arr) <= r, self.probs[idx], 0.0)
        return float(vals) if np.isscalar(eta) or eta_arr.ndim == 0 else vals

    def log_mgf(self, a: float) -> float:
        """Lambda(a) = log E[exp(a*eta)]; rejects |a| > a0."""
        if abs(a) > self.a0:
            raise ValueError(f"|a|={abs(a)} exceeds a0={self.a0}; the mgf series diverges")
        if self.kind == "double_geometric":
            kappa = self.params["kappa"]
            x = math.exp(-kappa)
            ep, em = x * math.exp(a), x * math.exp(-a)
            if ep >= 1.0 or em >= 1.0:
                return math.inf  # boundary |a| == kappa
            v = (1.0 + x) / (1.0 - x)
            return math.log((1.0 + ep / (1.0 - ep) + em / (1.0 - em)) / v)
        return math.log(fsum(np.exp(a * self.support.astype(float)) * self.probs))

    def sample(self, rng: np.random.Generator, size=None):
        """i.i.d. draws by inverse CDF on the cached window."""
        u = rng.random(size)
        idx = np.searchsorted(self._cdf, u, side="right")
        out = self.support[idx]
        return int(out) if size is None else out

    def sampling_stream(self, seed: int, index: int = 0) -> np.random.Generator:
        return stream(seed, DOMAIN_INCREMENTS, index)

    def n_step_table(self, n: int, entry_cap: int = N_STEP_ENTRY_CAP):
        """Exact n-fold convolution pi_n on its full window.

        Returns (offsets, probs) with offsets = -nR..nR. Computed by binary
        exponentiation of the one-step table (fewer, larger convolutions keep
        the float64 error at machine level even for n ~ 1e3).
        """
        if n < 1:
            raise ValueError("n must be >= 1")
        final_entries = 2 * n * self.support_radius + 1
        if final_entries > entry_cap:
            raise ResourceCapError(
                f"n-step window needs {final_entries} entries > cap {entry_cap}"
            )
        result = None
        power = np.array(self.probs, dtype=float)
        k = n
        while k:
            if k & 1:
                result = power.copy() if result is None else np.convolve(result, power)
            k >>= 1
            if k:
                power = np.convolve(power, power)
        # convolution sums mirrored entries in opposite order; restore exact symmetry
        result = 0.5 * (result + result[::-1])
        radius = (len(result) - 1) // 2
        return np.arange(-radius, radius + 1), result

    def n_step_pmf(self, n: int, s: int, entry_cap: int = N_STEP_ENTRY_CAP) -> float:
        """pi_n(s) = P(sum of n increments equals s)."""
        offsets, probs = self.n_step_table(n, entry_cap=entry_cap)
        radius = int(offsets[-1])
        if abs(s) > radius:
            return 0.0
        return float(probs[s + radius])

    def spec(self) -> dict:
        """JSON-serializable description, accepted by from_spec."""
        return {"kind": self.kind, **self.params}


def double_geometric(kappa: float = 1.0) -> IncrementDistribution:
    """pi(eta) = exp(-kappa*|eta|)/V with V = (1+x)/(1-x), x = exp(-kappa)."""
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    x = math.exp(-kappa)
    v = (1.0 + x) / (1.0 - x)
    # Two-sided tail beyond R is 2 x^{R+1} / ((1-x) V); push it below TAIL_MASS.
    radius = 1
    while 2.0 * x ** (radius + 1) / ((1.0 - x) * v) >= TAIL_MASS:
        radius += 1
    support = np.arange(-radius, radius + 1)
    probs = np.exp(-kappa * np.abs(support)) / v
    return IncrementDistribution(
        kind="double_geometric",
        params={"kappa": float(kappa)},
        support=support,
        probs=probs,
        variance=_window_variance(support, probs),
        a0=float(kappa),
    )


def lazy_simple_walk(p0: float = 0.5) -> IncrementDistribution:
    """pi(0) = p0, pi(+-1) = (1-p0)/2."""
    if not 0.0 < p0 < 1.0:
        raise ValueError("p0 must lie strictly between 0 and 1")
    support = np.arange(-1, 2)
    probs = np.array([(1 - p0) / 2, p0, (1 - p0) / 2])
    return IncrementDistribution(
        kind="lazy_simple_walk",
        params={"p0": float(p0)},
        support=support,
        probs=probs,
        variance=_window_variance(support, probs),
        a0=math.inf,
    )


def custom(table: dict) -> IncrementDistribution:
    """Finite symmetric pmf given as {eta: probability}."""
    if not table:
        raise ValueError("empty pmf table")
    radius = max(abs(int(k)) for k in table)
    support = np.arange(-radius, radius + 1)
    probs = np.array([float(table.get(int(s), table.get(str(s), 0.0))) for s in support])
    if np.any(probs < 0):
        raise ValueError("negative probability in pmf table")
    return IncrementDistribution(
        kind="custom",
        params={"table": {str(int(s)): float(p) for s, p in zip(support, probs) if p > 0}},
        support=support,
        probs=probs,
        variance=_window_variance(support, probs),
        a0=math.inf,
    )


def from_spec(spec: dict) -> IncrementDistribution:
    """Build a distribution from its JSON spec, e.g. {"kind":"double_geometric","kappa":1.0}."""
    spec = dict(spec)
    kind = spec.pop("kind", None)
    if kind == "double_geometric":
        return double_geometric(**spec)
    if kind == "lazy_simple_walk":
        return lazy_simple_walk(**spec)
    if kind == "custom":
        return custom(spec["table"])
    raise ValueError(f"unknown increment distribution kind: {kind!r}")


def _window_variance(support, probs) -> float:
    return fsum(np.square(support.astype(float)) * probs)
