import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from permlab.measures import D11, lebesgue
from permlab.models import mu_ell, xi
from permlab.patterns import t_sigma_perm
from permlab.sampling import (
    ChainConfig,
    GibbsParams,
    SamplingError,
    chi_square_uniform_pvalue,
    empirical_pmf,
    estimate_Fn,
    exact_gibbs_pmf,
    gibbs_mcmc,
    sample_mu_random_perm,
    sample_mu_random_perms,
    sample_points,
    tv_pmf,
)


# ------------------------------------------------------------------ points and mu-random permutations


def test_sample_points_d11_mass_binomial():
    pts = sample_points(lebesgue(), 1000, seed=4)
    frac = ((pts[:, 0] <= 0.5) & (pts[:, 1] <= 0.5)).mean()
    assert abs(frac - 0.25) <= 3 * math.sqrt(0.25 * 0.75 / 1000)


def test_sample_points_on_xi_support():
    pts = sample_points(xi(), 500, seed=1)
    s = pts.sum(axis=1)
    assert np.all((np.abs(s - 0.5) < 1e-12) | (np.abs(s - 1.5) < 1e-12))


def test_sample_points_reproducible_and_tie_free():
    a = sample_points(mu_ell(0.3), 200, seed=9)
    b = sample_points(mu_ell(0.3), 200, seed=9)
    assert np.array_equal(a, b)
    assert len(np.unique(a[:, 0])) == 200 and len(np.unique(a[:, 1])) == 200


def test_mu_random_perm_uniform_on_s3():
    samples = sample_mu_random_perms(lebesgue(), 3, 60_000, seed=2)
    assert chi_square_uniform_pvalue(samples, 3) > 1e-3


def test_mu_random_perm_xi_pair():
    samples = sample_mu_random_perms(xi(), 2, 100_000, seed=3)
    p = (samples[:, 0] == 2).mean()
    assert abs(p - 0.5) <= 3 * math.sqrt(0.25 / 100_000)


def test_single_point_perm():
    assert sample_mu_random_perm(xi(), 1, seed=0) == (1,)


# ------------------------------------------------------------------ exact pmf


def test_exact_pmf_uniform_at_zero():
    table = exact_gibbs_pmf((2, 1), 0.0, 4)
    assert np.allclose(table.probs, 1 / 24, atol=1e-15)
    assert table.free_energy == pytest.approx(0.0, abs=1e-14)


@given(st.floats(-5, 5))
def test_exact_pmf_two_points(theta):
    table = exact_gibbs_pmf((2, 1), theta, 2)
    assert table.prob((2, 1)) == pytest.approx(math.exp(theta) / (1 + math.exp(theta)), rel=1e-12)
    assert table.probs.sum() == pytest.approx(1.0, abs=1e-12)


def test_reverse_identity_probability_monotone():
    probs = [exact_gibbs_pmf((2, 1), th, 4).prob((4, 3, 2, 1)) for th in (-1.0, 0.0, 1.0)]
    assert probs[0] <= probs[1] <= probs[2]


def test_exact_pmf_size_limit():
    with pytest.raises(SamplingError):
        exact_gibbs_pmf((2, 1), 1.0, 9)


# ------------------------------------------------------------------ MCMC


def _insert(rest, a, b):
    """Permutation from ``rest`` (n-1 points) plus a point at x-rank ``a`` and y-rank ``b``."""
    xs = list(range(len(rest)))
    ys = [v for v in rest]
    out = []
    for pos in range(len(rest) + 1):
        if pos == a:
            out.append(b + 1)
        else:
            idx = pos if pos < a else pos - 1
            v = ys[xs[idx]]
            out.append(v + 1 if v >= b + 1 else v)
    return tuple(out)


def _point_resample_kernel(sigma, theta, n):
    """Exact transition matrix of the point-resample chain marginalised to S_n (uniform base)."""
    states = list(itertools.permutations(range(1, n + 1)))
    index = {s: i for i, s in enumerate(states)}
    P = np.zeros((len(states), len(states)))
    for s in states:
        t0 = t_sigma_perm(sigma, s)
        for i in range(n):
            # drop the i-th point and renumber the remaining values
            removed = s[i]
            rest = [v - (v > removed) for k, v in enumerate(s) if k != i]
            for a in range(n):
                for b in range(n):
                    new = _insert(rest, a, b)
                    acc = min(1.0, math.exp(n * theta * (t_sigma_perm(sigma, new) - t0)))
                    P[index[s], index[new]] += acc / n**3
        P[index[s], index[s]] += 1.0 - P[index[s]].sum()
    return states, P


@pytest.mark.parametrize("theta", [-1.0, 0.7, 2.0])
def test_point_resample_leaves_exact_pmf_stationary(theta):
    states, P = _point_resample_kernel((2, 1), theta, 3)
    table = exact_gibbs_pmf((2, 1), theta, 3).as_dict()
    pi = np.array([table[s] for s in states])
    assert np.max(np.abs(pi @ P - pi)) <= 1e-10


def test_theta_zero_accepts_everything_and_matches_iid():
    p = GibbsParams((2, 1), lebesgue(), 0.0, 4)
    run = gibbs_mcmc(p, ChainConfig(steps=4 * 60, burn_in=4 * 10, thin=4, seed=1, chains=2000))
    assert run.acceptance_rate == 1.0
    iid = sample_mu_random_perms(lebesgue(), 4, len(run), seed=2)
    a, b = empirical_pmf(run.samples, 4), empirical_pmf(iid, 4)
    keys = sorted(set(a) | set(b))
    from scipy.stats import chi2_contingency

    table = np.array([[a.get(k, 0) * len(run) for k in keys], [b.get(k, 0) * len(iid) for k in keys]])
    assert chi2_contingency(table).pvalue > 1e-3


@pytest.mark.parametrize("proposal", ["point-resample", "adjacent-transposition"])
def test_mcmc_close_to_enumeration(proposal):
    theta, n = 1.0, 5
    p = GibbsParams((2, 1), lebesgue(), theta, n)
    run = gibbs_mcmc(p, ChainConfig(steps=n * 120, seed=3, chains=1000, proposal=proposal))
    tv = tv_pmf(empirical_pmf(run.samples, n), exact_gibbs_pmf((2, 1), theta, n).as_dict())
    assert tv <= 0.05


def test_positive_theta_favours_inversions():
    p = GibbsParams((2, 1), lebesgue(), 1.5, 20)
    run = gibbs_mcmc(p, ChainConfig(steps=20 * 200, seed=5, chains=64))
    assert run.t_values.mean() > 0.5


def test_mcmc_general_pattern_runs():
    p = GibbsParams((1, 3, 2), mu_ell(0.5), 1.0, 6)
    run = gibbs_mcmc(p, ChainConfig(steps=600, seed=7, chains=4))
    assert run.samples.shape[1] == 6
    assert np.allclose(run.t_values, [t_sigma_perm((1, 3, 2), s) for s in run.samples])


def test_mcmc_reproducible():
    p = GibbsParams((2, 1), xi(), 1.0, 8)
    c = ChainConfig(steps=2000, seed=11, chains=3)
    a, b = gibbs_mcmc(p, c), gibbs_mcmc(p, c)
    assert np.array_equal(a.samples, b.samples)


def test_mcmc_validation():
    with pytest.raises(SamplingError):
        gibbs_mcmc(GibbsParams((2, 1), xi(), 1.0, 5), ChainConfig(steps=1000, proposal="adjacent-transposition"))
    with pytest.raises(ValueError):
        ChainConfig(steps=10, burn_in=20).resolved(3)
    with pytest.raises(ValueError):
        ChainConfig(steps=10, thin=0).resolved(3)
    with pytest.raises(ValueError):
        GibbsParams((1, 3, 2), xi(), 1.0, 2)


def test_chain_defaults():
    c = ChainConfig(steps=10_000).resolved(7)
    assert c.burn_in == 700 and c.thin == 7


# ------------------------------------------------------------------ free energy estimates


def test_estimate_fn_zero_theta():
    est = estimate_Fn(GibbsParams((2, 1), lebesgue(), 0.0, 10), 100, seed=1)
    assert est.value == 0.0


@settings(max_examples=15, deadline=None)
@given(st.floats(-3, 3), st.integers(2, 12))
def test_estimate_fn_bounded_by_theta(theta, n):
    est = estimate_Fn(GibbsParams((2, 1), mu_ell(0.4), theta, n), 300, seed=2)
    assert abs(est.value) <= abs(theta) + 1e-12


def test_estimate_fn_matches_enumeration_small_n():
    theta, n = 1.0, 6
    exact = exact_gibbs_pmf((2, 1), theta, n).free_energy / n
    est = estimate_Fn(GibbsParams((2, 1), lebesgue(), theta, n), 200_000, seed=4)
    assert est.within(exact, 4)
