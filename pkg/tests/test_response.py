import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, special

from rfhartree.distributions import MomentumDistribution, RadialProfile, compute_hf_profile
from rfhartree.potentials import Potential
from rfhartree.quadrature import QuadConfig
from rfhartree.response import (
    CoverageError,
    ResponseSymbol,
    a_theta,
    bounded_remainder_3d,
    build_symbol,
    check_CS,
    check_SC,
    check_cor_3d,
    log_term_3d,
    m_f,
    m_f_lindhard,
    _fermi3_kernel,
    m_f_quadrature,
    resonance_taus,
    symbol_gap,
)

FERMI3 = MomentumDistribution.fermi_zero(1.0, 3)
BOLTZ3 = MomentumDistribution.boltzmann(1.0, 0.0, 3)


# --- symbol values -------------------------------------------------------------

def test_zero_distribution_symbol_vanishes():
    v, e = m_f_quadrature(MomentumDistribution.zero(3), 3, [0.0, 1.0, 3.0], 0.7)
    assert np.all(v == 0) and np.all(e == 0)
    assert np.all(m_f_lindhard(MomentumDistribution.zero(3), 1.0, 0.7) == 0)


def test_k_zero_rejected():
    with pytest.raises(ValueError):
        m_f_quadrature(FERMI3, 3, 1.0, 0.0)
    with pytest.raises(ValueError):
        m_f_lindhard(FERMI3, 1.0, 0.0)


def undamped_quad(dist, tau, k):
    """-2∫ e^{-iτt} sin(k²t) H_f(2kt) dt with a strong Gaussian h (no damping needed)."""
    T = dist.T
    h = lambda r: (T / 2) ** 1.5 * np.exp(-T * r**2 / 4)
    f = lambda t: -2 * np.sin(k * k * t) * h(2 * k * t)
    re = integrate.quad(lambda t: f(t) * np.cos(tau * t), 0, np.inf, limit=400)[0]
    im = integrate.quad(lambda t: -f(t) * np.sin(tau * t), 0, np.inf, limit=400)[0]
    return re + 1j * im


@pytest.mark.parametrize("tau, k", [(0.0, 0.5), (1.3, 0.5), (3.0, 1.2), (0.4, 2.0)])
def test_boltzmann_closed_form_matches_direct_integral(tau, k):
    assert complex(m_f_lindhard(BOLTZ3, tau, k)) == pytest.approx(undamped_quad(BOLTZ3, tau, k), abs=1e-10)


def test_fermi_closed_form_matches_damped_quadrature():
    taus = np.array([0.0, 0.4, 2.0, 3.5])
    k = 0.6
    q, err = m_f_quadrature(FERMI3, 3, taus, k)
    exact = m_f_lindhard(FERMI3, taus, k)
    ok = err <= QuadConfig().symbol_tol
    assert ok.sum() >= 3
    assert np.max(np.abs(q[ok] - exact[ok])) < 1e-6
    # error estimates are honest
    assert np.all(np.abs(q[ok] - exact[ok]) <= err[ok] + 1e-9)


def test_boltzmann_quadrature_route():
    taus = np.array([0.0, 1.0, 2.5])
    q, err = m_f_quadrature(BOLTZ3, 3, taus, 0.8)
    assert np.max(np.abs(q - m_f_lindhard(BOLTZ3, taus, 0.8))) < 1e-7


def test_conjugate_symmetry_quadrature():
    k = 0.9
    taus = np.array([0.3, 1.1, 4.2])
    a, ea = m_f_quadrature(FERMI3, 3, taus, k)
    b, eb = m_f_quadrature(FERMI3, 3, -taus, k)
    assert np.max(np.abs(b - np.conj(a))) <= 1e-12 + ea.max() + eb.max()


@settings(max_examples=60, deadline=None)
@given(st.floats(0, 6), st.floats(0.05, 2))
def test_conjugate_symmetry_closed_forms(tau, k):
    for dist in (FERMI3, BOLTZ3):
        a = complex(m_f_lindhard(dist, tau, k))
        b = complex(m_f_lindhard(dist, -tau, k))
        assert b == pytest.approx(a.conjugate(), abs=1e-12)


@pytest.mark.parametrize("u", [1.5, 3.9, 4.1, 12.0, 56.0, -56.0, 1e3, 1e6])
def test_fermi_kernel_off_resonance_has_no_cancellation(u):
    # away from |u| ≤ 1 the integrand is smooth, so direct quadrature is an exact oracle
    want, _ = integrate.quad(lambda v: (1 - v * v) / (u - v), -1, 1, epsabs=0, epsrel=1e-13)
    assert _fermi3_kernel(u).real == pytest.approx(want, rel=1e-12)


def test_damping_ladder_consistency():
    # tighter ladders agree with the default extrapolation within the reported error
    k, taus = 0.7, np.array([0.2, 3.0])
    a, ea = m_f_quadrature(FERMI3, 3, taus, k)
    b, eb = m_f_quadrature(FERMI3, 3, taus, k, QuadConfig(etas=(5e-3, 2.5e-3, 1.25e-3)))
    assert np.all(np.abs(a - b) <= ea + eb + 1e-12)


def test_method_dispatch():
    v1, e1 = m_f(FERMI3, [0.5, 1.0], 0.4)
    assert np.all(e1 == 0)
    with pytest.raises(ValueError):
        m_f(FERMI3, 0.5, 0.4, method="nope")
    with pytest.raises(ValueError):
        m_f_lindhard(MomentumDistribution.fermi_zero(1.0, 2), 0.5, 0.4)


def test_symbol_bounded_along_resonance_ray():
    k = 0.5
    eps = np.geomspace(1e-6, 0.5, 60)
    taus = k * (2 - eps)
    m = m_f_lindhard(FERMI3, taus, k)
    assert np.all(np.isfinite(m))
    assert np.max(np.abs(m - log_term_3d(taus, k))) < 2.0
    assert np.max(np.abs(bounded_remainder_3d(taus, k, m))) < 2.0


def test_symbol_grows_like_log_at_small_k():
    # on the ray τ = 2k the symbol grows like -log k / (2 sqrt(2π))
    ks = np.array([1e-2, 1e-4, 1e-6])
    m = m_f_lindhard(FERMI3, 2 * ks, ks).real
    slope = np.diff(m) / np.diff(np.log(ks))
    assert np.allclose(slope, -1 / (2 * math.sqrt(2 * math.pi)), rtol=1e-2)
    assert np.all(np.abs(bounded_remainder_3d(2 * ks, ks, m)) < 1.0)


def test_real_part_bounded_above():
    T, K = np.meshgrid(np.linspace(0, 4, 161), np.geomspace(0.05, 2, 40), indexing="ij")
    re = m_f_lindhard(FERMI3, T, K).real
    assert np.isfinite(re).all() and re.max() < 1.0


# --- log term -------------------------------------------------------------------

def test_log_term_zero_at_origin_frequency():
    assert log_term_3d(0.0, 1.0) == 0.0


def test_log_term_on_ray():
    assert log_term_3d(0.2, 0.1) == pytest.approx(-0.459298, abs=5e-6)
    assert log_term_3d(0.2, 0.1) == pytest.approx(math.log(0.1) / (2 * math.sqrt(2 * math.pi)), rel=1e-14)


def test_log_term_large_k():
    assert log_term_3d(4.0, 2.0) == 0.0


def test_log_term_rejects_nonpositive_k():
    with pytest.raises(ValueError):
        log_term_3d(1.0, 0.0)


def test_resonance_nodes_cluster():
    t = resonance_taus(0.5, 4.0, 20, 1e-3, 8)
    assert np.all(np.diff(t) > 0) and t[0] == 0 and t[-1] == 4
    assert np.min(np.abs(t[t != 1.0] - 1.0)) == pytest.approx(5e-4)


# --- tables -----------------------------------------------------------------------

@pytest.fixture(scope="module")
def small_symbol():
    return build_symbol(FERMI3, np.linspace(0, 6, 61), np.geomspace(0.05, 3, 30))


def test_table_interpolation_exact_on_nodes(small_symbol):
    s = small_symbol
    assert s(s.tau_grid[7], s.k_grid[4]) == pytest.approx(s.values[7, 4])
    assert s(-s.tau_grid[7], s.k_grid[4]) == pytest.approx(np.conj(s.values[7, 4]))


def test_table_coverage_error(small_symbol):
    with pytest.raises(CoverageError):
        small_symbol(10.0, 1.0)
    with pytest.raises(CoverageError):
        small_symbol(1.0, 0.01)


def test_table_csv_roundtrip(tmp_path, small_symbol):
    p = small_symbol.to_csv(tmp_path / "symbol.csv")
    header = p.read_text().splitlines()[0]
    assert header == "tau,k,re,im,err,flagged"
    back = ResponseSymbol.from_csv(p)
    assert np.array_equal(back.values, small_symbol.values)
    assert np.array_equal(back.k_grid, small_symbol.k_grid)
    assert back.meta["dim"] == 3
    assert json.loads(p.with_suffix(".json").read_text())["method"] == "lindhard"


def test_quadrature_table_workers_agree():
    dist = MomentumDistribution.fermi_dirac(0.5, 1.0, 3)
    taus, ks = np.linspace(0, 3, 7), np.array([0.5, 1.5])
    a = build_symbol(dist, taus, ks, method="quadrature", workers=1)
    b = build_symbol(dist, taus, ks, method="quadrature", workers=2)
    assert np.array_equal(a.values, b.values)
    assert np.array_equal(a.err, b.err)


def test_flag_semantics():
    s = ResponseSymbol([0.0, 1.0], [1.0], np.zeros((2, 1)), np.array([[0.0], [1.0]]), {"symbol_tol": 1e-5})
    assert s.flagged.tolist() == [[False], [True]]
    with pytest.raises(ValueError):
        symbol_gap(s, Potential.zero())


# --- criteria -----------------------------------------------------------------------

@pytest.fixture(scope="module")
def fermi4_profile():
    return compute_hf_profile(MomentumDistribution.fermi_zero(1.0, 4), 200.0, 4000)


def test_sc_zero_potential(fermi3_profile):
    rep = check_SC(fermi3_profile, 3, Potential.zero())
    assert rep.value == 0 and rep.satisfied


def test_sc_fermi3_divergent(fermi3_profile):
    rep = check_SC(fermi3_profile, 3, Potential.point_mass(0.01))
    assert math.isinf(rep.value) and not rep.satisfied and rep.details["divergent"]
    assert json.loads(rep.to_json())["value"] == "inf"


def test_sc_fermi4_finite_threshold(fermi4_profile):
    w = Potential.point_mass_coupling(1.0, 4)
    rep = check_SC(fermi4_profile, 4, w)
    assert math.isfinite(rep.value) and rep.value > 0
    below = Potential.point_mass_coupling(0.9 / rep.value, 4)
    above = Potential.point_mass_coupling(1.1 / rep.value, 4)
    assert check_SC(fermi4_profile, 4, below).satisfied
    assert not check_SC(fermi4_profile, 4, above).satisfied


def test_sc_fermi4_integral_oracle(fermi4_profile):
    # |h| for the 4-d ball is (2π)^{-2}·(2π)² r^{-2} J_2(r) = r^{-2}|J_2(r)|
    integral = check_SC(fermi4_profile, 4, Potential.point_mass_coupling(1.0, 4)).details["integral"]
    zeros = special.jn_zeros(2, 70)
    edges = np.concatenate([[0.0], zeros[zeros < 200], [200.0]])
    head = sum(integrate.quad(lambda r: abs(special.jv(2, r)) / r, a, b)[0] for a, b in zip(edges[:-1], edges[1:]))
    tail = (2 / math.pi) * math.sqrt(2 / math.pi) * 200 ** -0.5 / 0.5
    assert integral == pytest.approx(head + tail, rel=1e-3)


def test_cs_zero_and_point_mass(fermi3_profile):
    assert check_CS(fermi3_profile, Potential.zero()).value == 0
    rep = check_CS(fermi3_profile, Potential.point_mass(0.2))
    assert math.isinf(rep.value) and not rep.satisfied


def test_cs_fermi3_ramp(fermi3_profile):
    c = 0.01
    w = Potential.from_function(lambda k: c * np.minimum(k, 1.0) / (2 * math.pi) ** 1.5)
    rep = check_CS(fermi3_profile, w)
    integral = rep.details["integral"]
    assert math.isfinite(integral) and rep.value == pytest.approx(c * integral, rel=1e-9)
    assert rep.satisfied


def test_criteria_scale_linearly(fermi4_profile, fermi3_profile):
    w = Potential.point_mass_coupling(0.1, 4)
    ramp = Potential.from_function(lambda k: 0.05 * np.minimum(k, 1.0))
    base_sc = check_SC(fermi4_profile, 4, w)
    base_cs = check_CS(fermi3_profile, ramp)
    for lam in (0.9, 0.5, 0.1):
        sc = check_SC(fermi4_profile, 4, Potential.point_mass(lam * w.weight))
        cs = check_CS(fermi3_profile, Potential.from_function(lambda k: lam * 0.05 * np.minimum(k, 1.0)))
        assert sc.value == pytest.approx(lam * base_sc.value, rel=1e-12)
        assert cs.value == pytest.approx(lam * base_cs.value, rel=1e-9)
        assert sc.satisfied >= base_sc.satisfied and cs.satisfied >= base_cs.satisfied


def test_sc_bounds_response_multiplier():
    # the SC value dominates sup |coupling · m_f|; Boltzmann has a closed-form symbol
    prof = compute_hf_profile(BOLTZ3, 12.0, 600)
    w = Potential.point_mass_coupling(0.3, 3)
    rep = check_SC(prof, 3, w)
    T, K = np.meshgrid(np.linspace(-8, 8, 161), np.geomspace(0.01, 5, 60), indexing="ij")
    assert np.max(np.abs(0.3 * m_f_lindhard(BOLTZ3, T, K))) <= rep.value * (1 + 1e-6)


def test_cor3d_zero_potential():
    assert check_cor_3d(Potential.zero(), 0.1, 0.1).satisfied


def test_cor3d_weak_focusing():
    w = Potential.point_mass_coupling(-0.05, 3)
    assert check_cor_3d(w, 0.1, 0.1).satisfied


def test_cor3d_violated_away_from_unit_frequency():
    rep = check_cor_3d(Potential.point_mass_coupling(0.1, 3), 0.1, 0.1)
    assert not rep.satisfied
    # at |ξ| = e the bound is δ₀/√2
    assert 0.1 - 0.1 / math.sqrt(2) <= rep.value + 1e-12


def test_cor3d_rejects_nonpositive_constants():
    with pytest.raises(ValueError):
        check_cor_3d(Potential.zero(), 0.0, 0.1)


def test_gap_zero_potential(small_symbol):
    rep = symbol_gap(small_symbol, Potential.zero())
    assert rep.value == 1.0 and rep.satisfied


def test_gap_weak_focusing(small_symbol):
    c = 0.2
    rep = symbol_gap(small_symbol, Potential.point_mass_coupling(-c, 3))
    assert rep.value >= 1 - c * np.max(np.abs(small_symbol.values)) - 1e-12
    assert rep.details["inverse_bound"] == pytest.approx(1 / rep.value)


def test_gap_closes_for_strong_repulsion(small_symbol):
    # the static row is real, so c·max Re m_f = 1 there closes the gap exactly
    static = small_symbol.values[0]
    assert np.all(static.imag == 0)
    rep = symbol_gap(small_symbol, Potential.point_mass_coupling(1.0 / np.max(static.real), 3))
    assert rep.value < 1e-12 and not rep.satisfied
    assert rep.details["worst_tau"] == 0.0


# --- A_θ ----------------------------------------------------------------------------

def test_a_theta_zero():
    prof = RadialProfile(np.linspace(0, 5, 11), np.zeros(11), 0.0, 0.0)
    assert a_theta(prof, 0.25) == 0.0


def test_a_theta_gaussian_oracle():
    prof = RadialProfile.from_function(lambda r: np.exp(-r**2), 9.0, 900, noise_floor=1e-300)
    want = (math.pi / 2) ** 0.25 * math.gamma(5 / 8)
    assert a_theta(prof, 0.25) == pytest.approx(want, rel=1e-6)


@pytest.mark.parametrize("theta", [0.1, 0.5, 0.9])
def test_a_theta_gaussian_other_orders(theta):
    prof = RadialProfile.from_function(lambda r: np.exp(-r**2), 9.0, 900, noise_floor=1e-300)
    want = (math.pi / 2) ** 0.25 * math.gamma((1 + theta) / 2)
    assert a_theta(prof, theta) == pytest.approx(want, rel=1e-6)


def test_a_theta_fermi3_finite(fermi3_profile):
    v = a_theta(fermi3_profile, 0.25)
    assert math.isfinite(v) and v > 0


def test_a_theta_divergent_tail():
    prof = RadialProfile.from_function(lambda r: 1 / (1 + r) ** 1.5, 100.0, 1000)
    assert math.isinf(a_theta(prof, 0.25))


def test_a_theta_monotone_under_domination():
    g = RadialProfile.from_function(lambda r: np.exp(-r**2) * (0.5 + 0.4 * np.cos(3 * r)), 9.0, 900,
                                   noise_floor=1e-300)
    big = RadialProfile.from_function(lambda r: np.exp(-r**2), 9.0, 900, noise_floor=1e-300)
    assert a_theta(g, 0.25) <= a_theta(big, 0.25)


def test_a_theta_rejects_bad_theta(fermi3_profile):
    with pytest.raises(ValueError):
        a_theta(fermi3_profile, 1.0)
