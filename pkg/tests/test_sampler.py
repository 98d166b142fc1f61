import math

import numpy as np
import pytest
from scipy import stats

from soslab import oracle, sampler, transfer
from soslab.sampler import (
    TransitionTable,
    block_length,
    path_log_weight,
    rescale_heights,
    sample_segments,
    sample_stationary_path,
)
from soslab.util import SoslabError


@pytest.fixture(scope="module")
def table_n100(dg1):
    kernel, pair = transfer.solve_eigenpair(100, dg1)
    return TransitionTable(kernel, pair)


# ---------------------------------------------------------------------------
# transition rows
# ---------------------------------------------------------------------------


def test_single_state_chain(lazy):
    kernel, pair = transfer.solve_eigenpair(1, lazy, s_max=0)
    row = TransitionTable(kernel, pair).transition_row(0)
    assert row.tolist() == [1.0]


def test_rows_sum_to_one(table_n100):
    sums = table_n100.row_probs.sum(axis=1)
    assert np.abs(sums - 1.0).max() < 1e-14


def test_detailed_balance_unnormalized_exact(table_n100, rng):
    """h(s) h(s') T(s,s') / lam is symmetric in (s, s') by construction."""
    kernel, pair = table_n100.kernel, table_n100.pair
    for _ in range(100):
        s, sp = rng.integers(-kernel.s_max, kernel.s_max + 1, size=2)
        fwd = pair.h[s + kernel.s_max] ** 2 * (
            pair.h[sp + kernel.s_max] * kernel.entry(s, sp) / (pair.lam * pair.h[s + kernel.s_max])
        )
        bwd = pair.h[sp + kernel.s_max] ** 2 * (
            pair.h[s + kernel.s_max] * kernel.entry(sp, s) / (pair.lam * pair.h[sp + kernel.s_max])
        )
        assert fwd == pytest.approx(bwd, rel=1e-13)


def test_detailed_balance_renormalized(table_n100, rng):
    kernel, pair = table_n100.kernel, table_n100.pair
    h2 = pair.h**2
    for _ in range(100):
        s = int(rng.integers(-kernel.s_max, kernel.s_max + 1))
        tau = int(rng.integers(-kernel.band_radius, kernel.band_radius + 1))
        sp = s + tau
        if abs(sp) > kernel.s_max:
            continue
        fwd = h2[s + kernel.s_max] * table_n100.transition_row(s)[sp + kernel.s_max]
        bwd = h2[sp + kernel.s_max] * table_n100.transition_row(sp)[s + kernel.s_max]
        assert abs(fwd - bwd) < 1e-12


def test_pre_normalization_defect_small(dg1_n10000):
    kernel, pair = dg1_n10000
    table = TransitionTable(kernel, pair)
    assert table.max_defect < 1e-8


def test_defect_abort_on_unconverged_pair(dg1):
    kernel = transfer.build_kernel(10_000, dg1)
    sloppy = transfer.principal_eigenpair(kernel, tol=3e-4)
    with pytest.raises(SoslabError):
        TransitionTable(kernel, sloppy)


# ---------------------------------------------------------------------------
# path sampling
# ---------------------------------------------------------------------------


def test_initial_state_law_matches_h_squared(table_n100):
    m = 1_000_000
    heights = sample_segments(table_n100, m, 0, seed=11)[:, 0]
    h2 = table_n100.pair.h ** 2
    states = table_n100.kernel.states
    for s, p in zip(states, h2):
        if m * p < 20:
            continue
        se = math.sqrt(p * (1 - p) / m)
        assert abs(np.mean(heights == s) - p) < 4.0 * se, f"s={s}"


def test_fixed_column_marginal_stationary(dg1):
    """The law of s_x matches h^2 at every column (chi-square at x=0, N/2, N)."""
    kernel, pair = transfer.solve_eigenpair(16, dg1)
    table = TransitionTable(kernel, pair)
    m = 200_000
    heights = sample_segments(table, m, 16, seed=12)
    h2 = pair.h**2
    for x in (0, 8, 16):
        col = heights[:, x] + kernel.s_max
        counts = np.bincount(col, minlength=kernel.d).astype(float)
        keep = m * h2 >= 10
        obs = np.append(counts[keep], counts[~keep].sum())
        exp = np.append(m * h2[keep], m * h2[~keep].sum())
        stat = ((obs - exp) ** 2 / exp).sum()
        pvalue = stats.chi2.sf(stat, df=len(obs) - 1)
        assert pvalue > 1e-3, f"x={x}, p={pvalue}"


def test_two_step_statistics_reversible(table_n100):
    """Empirical (s_x, s_{x+1}) pair counts are symmetric under reversal."""
    m = 200_000
    heights = sample_segments(table_n100, m, 4, seed=13)
    smax = table_n100.s_max
    d = table_n100.d
    pairs = (heights[:, :-1] + smax) * d + (heights[:, 1:] + smax)
    counts = np.bincount(pairs.ravel(), minlength=d * d).reshape(d, d)
    asym = counts - counts.T
    tot = counts + counts.T
    mask = tot >= 50
    z = np.abs(asym[mask]) / np.sqrt(tot[mask])
    assert z.max() < 4.5


def test_paths_stay_in_window_with_bounded_steps(table_n100):
    heights = sample_segments(table_n100, 500, 60, seed=14)
    assert np.abs(heights).max() <= table_n100.s_max
    assert np.abs(np.diff(heights, axis=1)).max() <= table_n100.kernel.band_radius


def test_single_path_reproducible(table_n100):
    a = sample_stationary_path(table_n100, seed=7, stream_id=3, n_steps=50)
    b = sample_stationary_path(table_n100, seed=7, stream_id=3, n_steps=50)
    c = sample_stationary_path(table_n100, seed=7, stream_id=4, n_steps=50)
    assert np.array_equal(a.heights, b.heights)
    assert not np.array_equal(a.heights, c.heights)
    assert a.N == 100 and a.seed == 7 and a.stream_id == 3


def test_segments_chunk_invariant(table_n100):
    full = sample_segments(table_n100, 6000, 10, seed=15)
    again = sample_segments(table_n100, 5000, 10, seed=15)
    assert np.array_equal(full[:5000], again)


def test_tiny_instance_empirical_law_matches_enumeration(dg1):
    inst = oracle.TinyInstance(N=4, s_max=4, dist=dg1)
    kernel, pair = transfer.solve_eigenpair(inst.N, dg1, s_max=inst.s_max)
    enum = oracle.enumerate_gibbs(inst, kernel, pair)
    table = TransitionTable(kernel, pair)
    m = 2_000_000
    heights = sample_segments(table, m, inst.N, seed=16)
    counts = np.bincount(oracle.encode_paths(heights, inst.s_max), minlength=inst.path_count)
    tv = oracle.tv_distance(enum.probs, counts, m)
    floor = oracle.expected_tv_floor(enum.probs, m)
    assert tv < 3.0 * floor
    print(f"tiny-instance TV={tv:.5f}, noise floor={floor:.5f}")


# ---------------------------------------------------------------------------
# path log weights
# ---------------------------------------------------------------------------


def test_flat_path_log_weight_hand_value(dg1):
    """Flat path s=0, N=2: product of T entries is pi(0)^2 = V^{-2}."""
    kernel, pair = transfer.solve_eigenpair(2, dg1, s_max=3)
    table = TransitionTable(kernel, pair)
    got, _ = path_log_weight(table, np.zeros(3, dtype=int))
    x = math.exp(-1.0)
    hand = 2.0 * math.log(pair.h[3]) + 2.0 * math.log((1 - x) / (1 + x))
    assert got == pytest.approx(hand, abs=1e-13)


def test_log_weight_identity_on_sampled_paths(table_n100):
    n_steps = table_n100.kernel.N
    heights = sample_segments(table_n100, 1000, n_steps, seed=17)
    for row in heights[:1000]:
        kernel_form, chain_form = path_log_weight(table_n100, row)
        assert abs(kernel_form - chain_form) < 1e-8 * n_steps


def test_log_weight_outside_window_rejected(table_n100):
    bad = np.array([0, table_n100.s_max + 1])
    with pytest.raises(ValueError):
        path_log_weight(table_n100, bad)


# ---------------------------------------------------------------------------
# rescaled trajectory
# ---------------------------------------------------------------------------


def test_rescale_endpoints_perfect_square():
    n = 625  # B = 25, N^{1/4} = 5
    heights = np.arange(26)
    traj = rescale_heights(heights, n, np.array([0.0, 1.0]))
    assert traj.values[0] == 0.0
    assert traj.values[1] == 25 / 5.0
    assert traj.block == 25


def test_rescale_block_points_exact():
    n = 625
    heights = np.arange(26) ** 2
    ts = np.arange(26) / 25.0
    traj = rescale_heights(heights, n, ts)
    assert np.array_equal(traj.values, heights[:26] / 5.0)


def test_rescale_midpoint_is_mean():
    n = 625
    heights = np.arange(26) ** 2
    mid = rescale_heights(heights, n, np.array([(3 + 0.5) / 25]))
    expected = 0.5 * (heights[3] + heights[4]) / 5.0
    assert mid.values[0] == pytest.approx(expected, rel=1e-14)


def test_rescale_requires_full_block(dg1):
    with pytest.raises(ValueError):
        rescale_heights(np.arange(10), 625, np.array([0.5]))
    with pytest.raises(ValueError):
        rescale_heights(np.arange(26), 625, np.array([1.5]))


def test_block_length_non_square():
    assert block_length(256_000) == 505
    assert block_length(10_000) == 100


def test_rescale_path_roundtrip(table_n100):
    path = sample_stationary_path(table_n100, seed=8, stream_id=0)
    t = np.array([0.0, 0.25, 0.5, 1.0])
    traj = sampler.rescale_path(path, t)
    assert traj.values[0] == path.heights[0] / 100**0.25
    b = block_length(100)
    assert traj.values[-1] == path.heights[b] / 100**0.25
