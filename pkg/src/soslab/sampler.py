"""Doob h-transform of the transfer kernel and stationary path sampling.

The transformed chain p(s, s') = h(s') T(s, s') / (lam h(s)) is reversible
with respect to h^2.  Rows are precomputed once per (N, dist) as banded
probability/CDF tables so that each chain step is a vectorized searchsorted;
paths then sample in O(band) per step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .transfer import Eigenpair, TruncatedKernel
from .util import DOMAIN_BATCH, DOMAIN_PATH, SoslabError, stream

# Paths are drawn in fixed-size batches; batch k uses counter-based stream
# (seed, DOMAIN_BATCH, k), so results are independent of how a run is chunked.
BATCH_SIZE = 4096

# Pre-normalization row-sum defects beyond this indicate a bad truncation.
DEFECT_ABORT = 1e-6


@dataclass
class InterfacePath:
    """Integer heights s_0..s_n of one sampled interface."""

    N: int
    heights: np.ndarray
    seed: int
    stream_id: int


@dataclass
class RescaledTrajectory:
    """Piecewise-linear S(t) = N^{-1/4} s_{[t B]}, t in [0, 1], B = floor(sqrt(N))."""

    N: int
    block: int
    t_grid: np.ndarray
    values: np.ndarray


class TransitionTable:
    """Precomputed transition rows of the h-transform chain."""

    def __init__(self, kernel: TruncatedKernel, pair: Eigenpair, defect_abort: float = DEFECT_ABORT):
        self.kernel = kernel
        self.pair = pair
        self.s_max = kernel.s_max
        d = kernel.d
        radius = kernel.band_radius
        self.offsets = kernel.band_offsets
        h, w, lam = pair.h, kernel.site_weights, pair.lam
        # rows[i, j] = p(state i, state i + offsets[j]); zero outside the window
        padded_h = np.zeros(d + 2 * radius)
        padded_h[radius : radius + d] = h
        padded_w = np.zeros(d + 2 * radius)
        padded_w[radius : radius + d] = w
        h_nb = np.lib.stride_tricks.sliding_window_view(padded_h, 2 * radius + 1)
        w_nb = np.lib.stride_tricks.sliding_window_view(padded_w, 2 * radius + 1)
        rows = h_nb * (w[:, None] * w_nb * kernel.band_probs[None, :]) / (lam * h[:, None])
        sums = rows.sum(axis=1)
        self.max_defect = float(np.abs(sums - 1.0).max())
        if self.max_defect > defect_abort:
            raise SoslabError(
                f"pre-normalization row sums deviate from 1 by {self.max_defect:.3e} "
                f"(> {defect_abort:.1e}): truncation window too small"
            )
        self.row_probs = rows / sums[:, None]
        self.row_cdfs = np.cumsum(self.row_probs, axis=1)
        self.row_cdfs[:, -1] = 1.0
        cdf0 = np.cumsum(h * h)
        cdf0[-1] = 1.0
        self._initial_cdf = cdf0

    @property
    def d(self) -> int:
        return self.kernel.d

    def transition_row(self, s: int) -> np.ndarray:
        """p(s, .) as a dense probability vector over the window states."""
        if abs(s) > self.s_max:
            raise ValueError("state outside window")
        i = s + self.s_max
        row = np.zeros(self.d)
        cols = i + self.offsets
        mask = (cols >= 0) & (cols < self.d)
        row[cols[mask]] = self.row_probs[i, mask]
        return row

    def sample_initial(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Window-state indices drawn from the reversible measure h^2."""
        return np.searchsorted(self._initial_cdf, rng.random(size), side="right")

    def _step(self, idx: np.ndarray, u: np.ndarray) -> np.ndarray:
        cdf = self.row_cdfs[idx]
        k = (cdf < u[:, None]).sum(axis=1)
        return idx + (k - self.kernel.band_radius)


def transition_row(kernel: TruncatedKernel, pair: Eigenpair, s: int) -> np.ndarray:
    """One-off dense transition row p(s, .); builds the full table internally."""
    return TransitionTable(kernel, pair).transition_row(s)


def sample_stationary_path(
    table: TransitionTable, seed: int, stream_id: int = 0, n_steps: int | None = None
) -> InterfacePath:
    """One stationary path: s_0 ~ h^2, then n_steps h-transform moves.

    Path `stream_id` consumes its own counter-based stream, so ensembles built
    path-by-path are reproducible and embarrassingly parallel.
    """
    if n_steps is None:
        n_steps = table.kernel.N
    rng = stream(seed, DOMAIN_PATH, stream_id)
    u = rng.random(n_steps + 1)
    idx = np.empty(n_steps + 1, dtype=np.int64)
    idx[0] = np.searchsorted(table._initial_cdf, u[0], side="right")
    current = idx[:1]
    for x in range(1, n_steps + 1):
        current = table._step(current, u[x : x + 1])
        idx[x] = current[0]
    return InterfacePath(
        N=table.kernel.N, heights=idx - table.s_max, seed=seed, stream_id=stream_id
    )


def sample_segments(
    table: TransitionTable, n_paths: int, n_steps: int, seed: int
) -> np.ndarray:
    """(n_paths, n_steps+1) stationary height segments, batched over streams.

    Batch b covers paths [b*BATCH_SIZE, (b+1)*BATCH_SIZE) and uses the stream
    (seed, DOMAIN_BATCH, b); adding more paths never changes earlier ones.
    """
    out = np.empty((n_paths, n_steps + 1), dtype=np.int64)
    for b in range(0, n_paths, BATCH_SIZE):
        size = min(BATCH_SIZE, n_paths - b)
        rng = stream(seed, DOMAIN_BATCH, b // BATCH_SIZE)
        # row-major fill: path i consumes row i of u regardless of batch fill,
        # so shortening a batch never changes the surviving paths
        u = rng.random((size, n_steps + 1))
        idx = np.searchsorted(table._initial_cdf, u[:, 0], side="right")
        out[b : b + size, 0] = idx
        for x in range(1, n_steps + 1):
            idx = table._step(idx, u[:, x])
            out[b : b + size, x] = idx
    out -= table.s_max
    return out


def path_log_weight(table: TransitionTable, heights: np.ndarray) -> tuple[float, float]:
    """Two independent log-weights of a path, equal up to numerical defects.

    kernel form:  log[ h(s_0) * prod T(s_{x-1}, s_x) * h(s_n) ]
    chain form:   log[ lam^n * h^2(s_0) * prod p(s_{x-1}, s_x) ]
    """
    kernel, pair = table.kernel, table.pair
    s = np.asarray(heights, dtype=np.int64)
    if np.any(np.abs(s) > table.s_max):
        raise ValueError("path leaves the window")
    i = s + table.s_max
    h, w = pair.h, kernel.site_weights
    steps = np.asarray(kernel.dist.pmf(np.diff(s)), dtype=float)
    if np.any(steps == 0.0):
        return -math.inf, -math.inf
    log_t = np.log(w[i[:-1]]) + np.log(w[i[1:]]) + np.log(steps)
    kernel_form = math.log(h[i[0]]) + math.fsum(log_t.tolist()) + math.log(h[i[-1]])
    tau = np.diff(i)
    p = table.row_probs[i[:-1], tau + kernel.band_radius]
    chain_form = (
        len(tau) * pair.log_lam
        + 2.0 * math.log(h[i[0]])
        + math.fsum(np.log(p).tolist())
    )
    return kernel_form, chain_form


def block_length(N: int) -> int:
    """B = floor(sqrt(N)); one rescaled time unit spans B lattice steps."""
    return int(math.isqrt(N))


def rescale_heights(heights: np.ndarray, N: int, t_grid: np.ndarray) -> RescaledTrajectory:
    """Linear interpolation of N^{-1/4} s_k between block points t_k = k/B."""
    b = block_length(N)
    heights = np.asarray(heights)
    if heights.shape[-1] < b + 1:
        raise ValueError(f"need at least B+1 = {b + 1} heights, got {heights.shape[-1]}")
    t_grid = np.asarray(t_grid, dtype=float)
    if np.any(t_grid < 0.0) or np.any(t_grid > 1.0):
        raise ValueError("t_grid must lie in [0, 1]")
    knots = np.arange(b + 1) / b
    scaled = heights[..., : b + 1] / N**0.25
    values = np.interp(t_grid, knots, scaled) if scaled.ndim == 1 else np.vstack(
        [np.interp(t_grid, knots, row) for row in scaled]
    )
    return RescaledTrajectory(N=N, block=b, t_grid=t_grid, values=values)


def rescale_path(path: InterfacePath, t_grid: np.ndarray) -> RescaledTrajectory:
    return rescale_heights(path.heights, path.N, t_grid)


def block_values(heights: np.ndarray, N: int) -> np.ndarray:
    """S at the block points k/B, i.e. N^{-1/4} s_k for k = 0..B."""
    b = block_length(N)
    return np.asarray(heights)[..., : b + 1] / N**0.25
