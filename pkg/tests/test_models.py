import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from permlab.measures import GridPermuton, PermutonError, has_uniform_marginals, kl_divergence, lebesgue
from permlab.models import (
    cc_test_21,
    compress_to_d11,
    curie_weiss_root,
    dmat_check,
    grid_t21_ceiling,
    inversion_degrees,
    mallows_density,
    mallows_el_residual,
    mallows_grid,
    mallows_seeds,
    mallows_tilt_for,
    mu_ell,
    phase_bounds,
    phase_scan,
    rect_permuton,
    reflect_identity_check,
    sstar_check,
    sstar_constant,
    sstar_inflate,
    substitution_square,
    support_diagnostics_21,
    xi,
    xi_conditional_optimizers,
    xi_free_energy,
    xi_gibbs_optimizers,
    xi_mixture,
)
from permlab.patterns import t21_exact
from permlab.variational import make_skeleton


# ------------------------------------------------------------------ Curie-Weiss


@pytest.mark.parametrize("theta", [1.2, 2.0, 5.0])
def test_curie_weiss_root_is_fixed_point(theta):
    x = curie_weiss_root(theta)
    assert x > 0 and x == pytest.approx(math.tanh(theta * x), abs=1e-12)


def test_curie_weiss_subcritical_is_zero():
    assert curie_weiss_root(1.0) == 0.0 and curie_weiss_root(-3.0) == 0.0
    assert xi_gibbs_optimizers(0.5)[0] is not None and len(xi_gibbs_optimizers(0.5)) == 1
    assert len(xi_gibbs_optimizers(2.0)) == 2


@settings(max_examples=30)
@given(st.floats(0.0, 8.0))
def test_xi_free_energy_is_family_maximum(theta):
    best = xi_free_energy(theta)
    for p in np.linspace(0.01, 0.99, 41):
        val = theta * (p * p + (1 - p) ** 2) - kl_divergence(xi_mixture(p), xi())
        assert val <= best + 1e-12


@settings(max_examples=30)
@given(st.floats(0.51, 0.99))
def test_xi_conditional_weights_hit_delta(delta):
    res = xi_conditional_optimizers(delta)
    p, q = res.weights
    assert t21_exact(res.optimizers[0]) == pytest.approx(delta, abs=1e-12)
    assert res.G == pytest.approx(kl_divergence(res.optimizers[0], xi()), abs=1e-12)
    assert p + q == pytest.approx(1.0)


# ------------------------------------------------------------------ Mallows density


def test_mallows_density_integrates_to_one():
    val, _ = integrate.dblquad(lambda y, x: mallows_density(1.5, x, y), 0, 1, 0, 1, epsabs=1e-11)
    assert val == pytest.approx(1.0, abs=1e-8)


def test_mallows_density_marginal_is_uniform():
    for x in (0.1, 0.5, 0.83):
        val, _ = integrate.quad(lambda y: mallows_density(-2.0, x, y), 0, 1, epsabs=1e-12)
        assert val == pytest.approx(1.0, abs=1e-9)


def test_mallows_density_zero_and_symmetry():
    assert mallows_density(0.0, 0.3, 0.9) == 1.0
    x, y = np.meshgrid(np.linspace(0.05, 0.95, 7), np.linspace(0.05, 0.95, 7))
    assert np.allclose(mallows_density(2.0, x, y), mallows_density(2.0, y, x))
    assert np.allclose(mallows_density(2.0, x, y), mallows_density(-2.0, x, 1 - y))


def _literal_mallows(theta, x, y):
    num = (theta / 2) * math.sinh(theta / 2)
    den = (math.exp(-theta / 4) * math.cosh(theta * (x - y) / 2) - math.exp(theta / 4) * math.cosh(theta * (x + y - 1) / 2)) ** 2
    return num / den


@pytest.mark.parametrize("theta", [-3.0, -0.5, 0.7, 4.0])
def test_mallows_stable_form_matches_literal(theta):
    for x, y in [(0.1, 0.2), (0.5, 0.5), (0.9, 0.05), (0.33, 0.71)]:
        assert mallows_density(theta, x, y) == pytest.approx(_literal_mallows(theta, x, y), rel=1e-12)


def test_mallows_density_finite_at_large_tilt():
    with np.errstate(over="raise", invalid="raise", divide="raise"):
        vals = mallows_density(800.0, np.array([0.2, 0.5, 0.9]), np.array([0.8, 0.5, 0.9]))
    assert np.all(np.isfinite(vals))


@pytest.mark.parametrize("theta", [-2.0, 1.0])
def test_mallows_mixed_log_derivative(theta):
    assert mallows_el_residual(theta, m=32) <= 1e-4


def test_mallows_tilt_for_hits_target():
    a = mallows_tilt_for(0.8, 16)
    assert t21_exact(mallows_grid(a, 16)) == pytest.approx(0.8, abs=1e-10)
    assert mallows_tilt_for(0.2, 16) < 0


def test_mallows_seeds_shapes():
    sk = make_skeleton(mu_ell(0.5), 8)
    seeds = mallows_seeds(sk, 0.8)
    assert len(seeds) == 3
    assert seeds[1].l1(seeds[2].reflect()) < 1e-14


# ------------------------------------------------------------------ block family and S* constructions


def test_mu_ell_marginals_and_bounds():
    assert has_uniform_marginals(mu_ell(0.7))
    with pytest.raises(PermutonError):
        mu_ell(1.5)


@pytest.mark.parametrize("z", [0.0, 0.2, 0.5, 0.9, 1.0])
def test_rect_permuton_is_a_permuton(z):
    assert has_uniform_marginals(rect_permuton(z))


def test_sstar_examples():
    assert sstar_check((2, 1, 4, 3)) and sstar_check((1, 2)) and not sstar_check((1, 3, 2))
    assert list(inversion_degrees((2, 1, 4, 3))) == [1, 1, 1, 1]
    sq = substitution_square((2, 1))
    assert sq == (4, 3, 2, 1)
    assert sstar_check(substitution_square((2, 1, 4, 3)))
    with pytest.raises(PermutonError):
        sstar_inflate((1, 3, 2), 0.5)


@pytest.mark.parametrize("z", [0.25, 0.6])
def test_sstar_inflate_is_cc(z):
    mu = sstar_inflate((2, 1, 4, 3), z)
    rep = cc_test_21(mu)
    assert has_uniform_marginals(mu)
    assert rep.is_cc and rep.constant == pytest.approx(sstar_constant((2, 1, 4, 3), z), abs=1e-12)


def test_cc_detects_nonconstant():
    rep = cc_test_21(mu_ell(0.3))
    assert rep.verdict == "CNC" and len(rep.witnesses) == 2
    assert rep.witnesses[0][2] > rep.witnesses[1][2]


def test_support_diagnostics():
    d = support_diagnostics_21(rect_permuton(0.3))
    assert d.b == pytest.approx(0.3) and d.triangle_mass == 0.0 and not d.interior
    assert support_diagnostics_21(lebesgue()).interior


# ------------------------------------------------------------------ reflection identity and separation


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.0, 0.95))
def test_reflect_identity(seed, ell):
    rng = np.random.default_rng(seed)
    nu = GridPermuton(rng.random((4, 4)) + 0.05, normalize=True)
    r = reflect_identity_check(nu, ell)
    assert r.gap <= 1e-10
    assert compress_to_d11(nu).masses.sum() == pytest.approx(1.0)


def test_dmat_check_on_separated_and_symmetric():
    heavy = np.zeros((4, 4))
    heavy[0, 1], heavy[1, 0], heavy[2, 3], heavy[3, 2] = 0.45, 0.45, 0.05, 0.05
    rep = dmat_check(GridPermuton(heavy, normalize=True))
    assert rep.separated and rep.band_ok and not rep.reflected
    mirror = dmat_check(GridPermuton(heavy[::-1, ::-1].copy(), normalize=True))
    assert mirror.reflected and mirror.separated
    assert not dmat_check(xi()).separated


def test_phase_bounds():
    off, light = phase_bounds(0.5, 0.9)
    assert off == pytest.approx(math.log(4) / math.log(3))
    assert light == pytest.approx(math.sqrt(0.05))
    assert grid_t21_ceiling(32) == pytest.approx(1 - 1 / 64)


def test_phase_scan_small_row():
    rows = phase_scan([0.0], [0.6], m=16)
    r = rows[0]
    assert r.attainable and r.clusters == 1 and not r.separated
    assert len(r.csv_row()) == 8 and r.to_dict()["m"] == 16


def test_phase_scan_unattainable_row_without_refinement():
    r = phase_scan([0.0], [0.99], m=8, refine=False)[0]
    assert not r.attainable and r.clusters == 0
