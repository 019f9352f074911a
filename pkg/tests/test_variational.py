import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from permlab.measures import GridPermuton, PermutonError, kl_divergence, lebesgue, mix
from permlab.models import curie_weiss_root, mu_ell, xi, xi_conditional_optimizers, xi_free_energy
from permlab.patterns import PatternError, t21_exact
from permlab.variational import (
    DensityField,
    SolveConfig,
    SolverError,
    block_masses,
    conditional_optimizer,
    el_operator,
    estimate_tilt,
    free_energy,
    free_energy_derivative_check,
    make_skeleton,
    multi_start_optimize,
    solve_el,
    solve_on,
    theta_c,
    theta_hat,
    theta_hat_full,
)


def xi_start(p=0.75):
    sk = make_skeleton(xi())
    return DensityField.from_function(sk, lambda x, y: np.where(x < 0.5, 2 * p, 2 * (1 - p)))


# ------------------------------------------------------------------ basics


def test_theta_c_values():
    assert theta_c(2) == pytest.approx(16 / math.expm1(16), rel=1e-14)
    assert theta_c(2) < 2e-6
    with pytest.raises(ValueError):
        theta_c(1)


def test_config_validation():
    with pytest.raises(ValueError):
        SolveConfig(damping=0.0)
    with pytest.raises(ValueError):
        SolveConfig(tol=-1)
    with pytest.raises(ValueError):
        SolveConfig(mix="cubic")
    with pytest.raises(ValueError):
        SolveConfig(accel="anderson")


def test_density_field_normalises_and_rejects_negative():
    sk = make_skeleton(lebesgue(), 4)
    f = DensityField(sk, np.full(16, 3.0))
    assert f.integral() == pytest.approx(1.0)
    assert f.kl() == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(ValueError):
        DensityField(sk, -np.ones(16))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from([4, 8]))
def test_field_kl_matches_measure_kl(seed, m):
    sk = make_skeleton(mu_ell(0.4), m)
    f = DensityField.random(sk, seed)
    assert f.kl() == pytest.approx(kl_divergence(f.measure(), mu_ell(0.4)), abs=1e-10)


def test_skeleton_rejects_mixed_base():
    with pytest.raises(PermutonError):
        make_skeleton(mix([lebesgue(), xi()], [0.5, 0.5]))


def test_el_operator_needs_size_two_pattern():
    sk = make_skeleton(lebesgue(), 4)
    with pytest.raises(PatternError):
        el_operator((1, 3, 2), None, 1.0, DensityField.uniform(sk))


# ------------------------------------------------------------------ operator properties


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.floats(-3, 3))
def test_el_operator_output_is_a_density(seed, theta):
    sk = make_skeleton(mu_ell(0.3), 6)
    g = DensityField.random(sk, seed)
    out = el_operator((2, 1), mu_ell(0.3), theta, g)
    assert out.integral() == pytest.approx(1.0, abs=1e-12)
    assert np.all(out.values > 0)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.1, 3))
def test_patterns_12_and_21_are_opposite_tilts(seed, theta):
    sk = make_skeleton(lebesgue(), 5)
    g = DensityField.random(sk, seed)
    a = el_operator((1, 2), None, theta, g)
    b = el_operator((2, 1), None, -theta, g)
    assert np.allclose(a.values, b.values, rtol=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_el_operator_commutes_with_reflection(seed):
    sk = make_skeleton(lebesgue(), 6)
    g = DensityField.random(sk, seed)
    lhs = el_operator((2, 1), None, 1.3, g.reflect())
    rhs = el_operator((2, 1), None, 1.3, g).reflect()
    assert np.allclose(lhs.values, rhs.values, rtol=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000), st.integers(10_001, 20_000))
def test_contraction_below_certified_threshold(s1, s2):
    sk = make_skeleton(lebesgue(), 8)
    u, v = DensityField.random(sk, s1), DensityField.random(sk, s2)
    th = theta_c(2)
    ratio = el_operator((2, 1), None, th, u).l1(el_operator((2, 1), None, th, v)) / u.l1(v)
    assert ratio <= th / theta_c(2)


def test_zero_tilt_gives_base():
    g, rep = solve_el((2, 1), mu_ell(0.5), 0.0)
    assert rep.converged and np.allclose(g.values, 1.0)
    assert rep.free_energy == 0.0 and rep.t_sigma == pytest.approx(t21_exact(mu_ell(0.5)))


# ------------------------------------------------------------------ solver against closed forms


@pytest.mark.parametrize("theta", [0.5, 1.5, 2.0, 3.0])
def test_xi_solution_matches_curie_weiss(theta):
    g, rep = solve_el((2, 1), xi(), theta, SolveConfig(init=xi_start()))
    m = curie_weiss_root(theta)
    b = block_masses(g)
    assert rep.converged
    assert b["d11"] == pytest.approx((1 + m) / 2, abs=1e-8)
    assert rep.free_energy == pytest.approx(xi_free_energy(theta), abs=1e-8)


def test_xi_optimiser_has_constant_density_on_each_segment():
    g, _ = solve_el((2, 1), xi(), 2.0, SolveConfig(init=xi_start()))
    half = len(g.values) // 2
    assert np.ptp(g.values[:half]) < 1e-9 and np.ptp(g.values[half:]) < 1e-9


@pytest.mark.parametrize("mix_rule", ["linear", "geometric"])
def test_mixing_rules_agree(mix_rule):
    cfg = SolveConfig(m=16, damping=0.5, mix=mix_rule)
    g, rep = solve_el((2, 1), lebesgue(), 2.0, cfg)
    ref, _ = solve_el((2, 1), lebesgue(), 2.0, SolveConfig(m=16))
    assert rep.converged and g.l1(ref) < 1e-8


def test_fixed_point_residual_is_small():
    g, rep = solve_el((2, 1), mu_ell(0.6), 1.5, SolveConfig(m=16))
    assert rep.converged
    assert el_operator((2, 1), None, 1.5, g).l1(g) <= 1e-9


def test_estimate_tilt_recovers_theta():
    g, _ = solve_el((2, 1), lebesgue(), 2.5, SolveConfig(m=16))
    assert estimate_tilt((2, 1), g) == pytest.approx(2.5, rel=1e-6)


def test_free_energy_convex_in_theta():
    thetas = np.linspace(-2, 2, 9)
    F = np.array([free_energy((2, 1), lebesgue(), t, SolveConfig(m=16)) for t in thetas])
    assert np.all(np.diff(F, 2) >= -1e-9)
    assert np.all(F >= thetas * 0.5 - 1e-12)  # nu = base is admissible


@pytest.mark.parametrize("theta", [-1.0, 0.5])
def test_derivative_check_lebesgue(theta):
    assert free_energy_derivative_check((2, 1), lebesgue(), theta, cfg=SolveConfig(m=16)).gap <= 1e-6


# ------------------------------------------------------------------ conditioning


@pytest.mark.parametrize("delta", [0.55, 0.7, 0.9])
def test_conditional_xi_matches_closed_form(delta):
    res = conditional_optimizer((2, 1), xi(), delta, SolveConfig(init=xi_start()))
    want = xi_conditional_optimizers(delta)
    assert block_masses(res.field)["d11"] == pytest.approx(want.weights[0], abs=1e-7)
    assert res.G == pytest.approx(want.G, abs=1e-7)


def test_theta_hat_monotone_and_consistent():
    cfg = SolveConfig(m=16)
    ths = [theta_hat((2, 1), lebesgue(), d, 1e-9, cfg) for d in (0.3, 0.45, 0.5, 0.6, 0.7)]
    assert ths[2] == 0.0
    assert all(a < b for a, b in zip(ths, ths[1:]))
    res = theta_hat_full((2, 1), lebesgue(), 0.7, replace(cfg, delta_tol=1e-9))
    assert res.report.t_sigma == pytest.approx(0.7, abs=1e-9)


def test_theta_hat_unreachable_raises():
    with pytest.raises(SolverError):
        theta_hat((2, 1), lebesgue(), 0.999, cfg=SolveConfig(m=8, theta_max=16))
    with pytest.raises(ValueError):
        theta_hat_full((2, 1), lebesgue(), 1.5)


# ------------------------------------------------------------------ multi-start


def test_multi_start_tilted_xi_finds_two_mirror_optima():
    start = xi_start()
    clusters = multi_start_optimize((2, 1), xi(), [start, start.reflect()], SolveConfig(), theta=2.0)
    optimal = [c for c in clusters if c.optimal]
    assert len(optimal) == 2
    assert optimal[0].objective == pytest.approx(optimal[1].objective, abs=1e-10)
    assert optimal[0].field.l1(optimal[1].field.reflect()) < 1e-8


def test_multi_start_merges_duplicates():
    sk = make_skeleton(lebesgue(), 8)
    inits = [DensityField.random(sk, s) for s in range(4)]
    clusters = multi_start_optimize((2, 1), lebesgue(), inits, SolveConfig(m=8), theta=1.0)
    assert len(clusters) == 1 and clusters[0].members == 4


def test_multi_start_argument_checks():
    with pytest.raises(ValueError):
        multi_start_optimize((2, 1), lebesgue(), ["uniform"], theta=1.0, delta=0.6)
    with pytest.raises(ValueError):
        multi_start_optimize((2, 1), lebesgue(), [], theta=1.0)


def test_solve_on_reports_nonconvergence():
    sk = make_skeleton(lebesgue(), 8)
    _, rep = solve_on((2, 1), sk, 3.0, SolveConfig(max_iter=2, accel="none"))
    assert not rep.converged and rep.iterations == 2
