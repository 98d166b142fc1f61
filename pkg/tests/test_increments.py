import math

import numpy as np
import pytest

from soslab import custom, double_geometric, from_spec, lazy_simple_walk
from soslab.util import ResourceCapError, stream, DOMAIN_INCREMENTS


def geometric_norm_oracle(kappa=1.0, terms=60):
    """V = 1 + 2 sum_{k>=1} e^{-kappa k}, summed directly."""
    return 1.0 + 2.0 * math.fsum(math.exp(-kappa * k) for k in range(1, terms + 1))


def second_moment_series_oracle(x, terms=200):
    """sum_{k>=1} k^2 x^k, summed directly; closed form x(1+x)/(1-x)^3."""
    return math.fsum(k * k * x**k for k in range(1, terms + 1))


def test_double_geometric_pmf_at_zero(dg1):
    v = geometric_norm_oracle()
    assert v == pytest.approx(2.163953, abs=5e-7)
    assert dg1.pmf(0) == pytest.approx(1.0 / v, rel=1e-12)


def test_double_geometric_pmf_general_eta(dg1):
    v = geometric_norm_oracle()
    for eta in (1, 2, 7, 20):
        assert dg1.pmf(eta) == pytest.approx(math.exp(-abs(eta)) / v, rel=1e-12)


@pytest.mark.parametrize("make", [
    lambda: double_geometric(1.0),
    lambda: double_geometric(0.5),
    lambda: lazy_simple_walk(0.3),
    lambda: custom({-2: 0.1, -1: 0.2, 0: 0.4, 1: 0.2, 2: 0.1}),
])
def test_pmf_symmetry(make):
    d = make()
    etas = np.arange(-d.support_radius, d.support_radius + 1)
    assert np.array_equal(d.pmf(etas), d.pmf(-etas))


def test_lazy_walk_pmf():
    d = lazy_simple_walk(0.5)
    assert d.pmf(1) == 0.25
    assert d.pmf(0) == 0.5
    assert d.pmf(2) == 0.0


@pytest.mark.parametrize("make", [
    lambda: double_geometric(1.0),
    lambda: double_geometric(2.0),
    lambda: lazy_simple_walk(0.5),
])
def test_total_mass(make):
    d = make()
    assert abs(math.fsum(d.probs.tolist()) - 1.0) < 1e-12


def test_aperiodicity_enforced():
    with pytest.raises(ValueError):
        custom({-1: 0.5, 1: 0.5})  # pi(0) = 0


def test_asymmetric_table_rejected():
    with pytest.raises(ValueError):
        custom({-1: 0.25, 0: 0.5, 1: 0.25 + 1e-9})


# ---------------------------------------------------------------------------
# variance
# ---------------------------------------------------------------------------


def test_variance_double_geometric_series_oracle(dg1):
    x = math.exp(-1.0)
    series = second_moment_series_oracle(x)
    assert series == pytest.approx(x * (1 + x) / (1 - x) ** 3, rel=1e-13)
    v = geometric_norm_oracle()
    sigma2 = 2.0 * series / v
    assert dg1.variance == pytest.approx(sigma2, rel=1e-10)
    assert dg1.variance == pytest.approx(1.8413, abs=1e-4)


def test_variance_lazy_walk(lazy):
    assert lazy.variance == pytest.approx(0.5, rel=1e-14)


def test_variance_custom_uniform():
    d = custom({-1: 1 / 3, 0: 1 / 3, 1: 1 / 3})
    assert d.variance == pytest.approx(2 / 3, rel=1e-14)


# ---------------------------------------------------------------------------
# log mgf
# ---------------------------------------------------------------------------


def test_log_mgf_at_zero(dg1, lazy):
    assert abs(dg1.log_mgf(0.0)) < 1e-12
    assert abs(lazy.log_mgf(0.0)) < 1e-12


def test_log_mgf_symmetric(dg1):
    for a in (0.1, 0.5, 0.9):
        assert dg1.log_mgf(a) == pytest.approx(dg1.log_mgf(-a), rel=1e-13)


def test_log_mgf_lazy_closed_form(lazy):
    for a in (0.0, 0.3, 1.5, 4.0):
        assert lazy.log_mgf(a) == pytest.approx(math.log(0.5 + math.cosh(a) / 2), rel=1e-13)


def test_log_mgf_small_a_taylor(dg1):
    a = 1e-3
    assert abs(dg1.log_mgf(a) - dg1.variance * a * a / 2.0) < 1e-10


def test_log_mgf_rejects_beyond_a0(dg1):
    assert dg1.a0 == 1.0
    with pytest.raises(ValueError):
        dg1.log_mgf(1.0 + 1e-9)
    # at the boundary the series diverges; the closed form reports +inf
    assert dg1.log_mgf(dg1.a0) == math.inf


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------


def test_sample_matches_pmf_double_geometric(dg1):
    draws = dg1.sample(stream(404, DOMAIN_INCREMENTS, 0), 10_000_000)
    n = len(draws)
    for eta in range(-10, 11):
        p = dg1.pmf(eta)
        se = math.sqrt(p * (1 - p) / n)
        assert abs(np.mean(draws == eta) - p) < 4.0 * se, f"eta={eta}"


def test_sample_matches_pmf_lazy(lazy):
    draws = lazy.sample(stream(405, DOMAIN_INCREMENTS, 0), 1_000_000)
    for eta in (-1, 0, 1):
        p = lazy.pmf(eta)
        se = math.sqrt(p * (1 - p) / 1e6)
        assert abs(np.mean(draws == eta) - p) < 4.0 * se


def test_sample_scalar(dg1):
    x = dg1.sample(stream(1, DOMAIN_INCREMENTS, 0))
    assert isinstance(x, int)


# ---------------------------------------------------------------------------
# n-step convolution
# ---------------------------------------------------------------------------


def test_n_step_one_equals_pmf(dg1):
    for s in (-3, 0, 5):
        assert dg1.n_step_pmf(1, s) == pytest.approx(dg1.pmf(s), rel=1e-14)


def test_two_step_lazy_at_zero(lazy):
    # (1/2)^2 + 2 (1/4)^2 = 3/8 by enumerating the two-step pairs
    assert lazy.n_step_pmf(2, 0) == pytest.approx(3 / 8, rel=1e-14)


def test_n_step_mass_conserved(dg1):
    _, probs = dg1.n_step_table(50)
    assert abs(math.fsum(probs.tolist()) - 1.0) < 1e-12


def test_n_step_symmetry(dg1):
    off, probs = dg1.n_step_table(17)
    assert np.allclose(probs, probs[::-1], rtol=0, atol=1e-18)


@pytest.mark.parametrize("n", [50, 1000])
def test_variance_additivity(dg1, n):
    off, probs = dg1.n_step_table(n)
    v = math.fsum((probs * off.astype(float) ** 2).tolist())
    assert abs(v - n * dg1.variance) < 1e-8 * n * dg1.variance


def test_local_clt_rate(dg1):
    """sup_s |pi_n(s) - gaussian(s)| <= c / n^{3/2} with a single fitted c.

    The fitted constants shrink with n (0.145 at n=8 down to 0.131 at n=256);
    0.2 covers the whole range with margin.
    """
    consts = []
    for n in (8, 16, 32, 64, 256):
        off, probs = dg1.n_step_table(n)
        gauss = np.exp(-off.astype(float) ** 2 / (2 * dg1.variance * n)) / math.sqrt(
            2 * math.pi * dg1.variance * n
        )
        consts.append(np.abs(probs - gauss).max() * n**1.5)
    assert max(consts) < 0.2
    assert consts[-1] <= consts[0]


def test_fourth_moment_tail_bound(dg1):
    """sup_s pi_n(s) n^{1/2} (|s|/sqrt n)^4 stays bounded (measured ~2.1)."""
    sups = []
    for n in (16, 64, 256):
        off, probs = dg1.n_step_table(n)
        sups.append((probs * n**0.5 * (np.abs(off) / math.sqrt(n)) ** 4).max())
    assert max(sups) < 3.0
    print("fourth-moment constants by n:", [round(s, 4) for s in sups])


def test_n_step_window_cap(dg1):
    with pytest.raises(ResourceCapError):
        dg1.n_step_table(100, entry_cap=1000)


# ---------------------------------------------------------------------------
# JSON spec round trip
# ---------------------------------------------------------------------------


def test_from_spec_round_trip(dg1, lazy):
    for d in (dg1, lazy, custom({-1: 0.25, 0: 0.5, 1: 0.25})):
        d2 = from_spec(d.spec())
        assert d2.kind == d.kind
        assert np.array_equal(d2.probs, d.probs)


def test_from_spec_unknown_kind():
    with pytest.raises(ValueError):
        from_spec({"kind": "cauchy"})
