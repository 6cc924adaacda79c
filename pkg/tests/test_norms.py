import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from rfhartree.fields import SpectralGrid
from rfhartree.norms import (
    NonzeroMeanWarning,
    NormSpec,
    ensemble_norm,
    frac_deriv,
    l2_physical,
    mixed_norm,
    parse_norm_spec,
    spatial_norm,
    time_norm,
)

G2 = SpectralGrid(2, 2 * math.pi, 16)


def smooth_field(g, rng):
    X = g.coords()
    u = np.exp(np.cos(X[0])) * np.sin(2 * X[-1] + 0.3)
    return u + 0.1 * rng.standard_normal() * np.cos(X[0] - X[-1])


# --- grammar ---------------------------------------------------------------------

@pytest.mark.parametrize("text, spec", [
    ("L2", NormSpec("L", 0.0, 2.0)),
    ("Linf", NormSpec("L", 0.0, math.inf)),
    ("L2t:Hs(0.5)", NormSpec("H", 0.5, 2.0, 2.0)),
    ("Linft:dHs(-0.5)", NormSpec("dH", -0.5, 2.0, math.inf)),
    ("Hs(1,4)", NormSpec("H", 1.0, 4.0)),
    ("L2t:Hs(-0.0)", NormSpec("H", -0.0, 2.0, 2.0)),
    (" L3t : L1 ", NormSpec("L", 0.0, 1.0, 3.0)),
])
def test_parse(text, spec):
    assert parse_norm_spec(text) == spec


@pytest.mark.parametrize("text", ["", "H2", "L0.5", "L2t:", "Lt:L2", "L2t:L2:L2", "Hs()", "dHs(1,0.5)", "Hs(nan)"])
def test_parse_rejects(text):
    with pytest.raises(ValueError):
        parse_norm_spec(text)


@settings(max_examples=50, deadline=None)
@given(st.sampled_from(["L", "H", "dH"]), st.floats(-3, 3, allow_nan=False).map(lambda x: round(x, 3)),
       st.sampled_from([1.0, 2.0, 3.5, math.inf]), st.sampled_from([None, 1.0, 2.0, math.inf]))
def test_str_roundtrip(space, sigma, q, p):
    spec = NormSpec(space, 0.0 if space == "L" else sigma, q, p)
    assert parse_norm_spec(str(spec)) == spec


# --- derivatives -------------------------------------------------------------------

def test_sigma_zero_identity(rng):
    u = rng.standard_normal(G2.shape) + 1j * rng.standard_normal(G2.shape)
    assert np.array_equal(frac_deriv(u, 0.0, False, G2), u)
    assert np.allclose(frac_deriv(u - u.mean(), 0.0, True, G2), u - u.mean(), atol=1e-13)


def test_plane_wave_eigenfunction():
    xi = np.array([3.0, -4.0])
    u = G2.plane_wave(xi)
    assert np.allclose(frac_deriv(u, 1.0, True, G2), 5.0 * u, atol=1e-12)
    assert np.allclose(frac_deriv(u, 0.5, False, G2), 26 ** 0.25 * u, atol=1e-12)


def test_second_order_matches_finite_differences():
    errs = []
    for N in (32, 64, 128):
        g = SpectralGrid(2, 2 * math.pi, N)
        X, Y = g.coords()
        u = np.exp(np.sin(X)) * np.cos(2 * Y)
        h = g.dx
        lap = sum((np.roll(u, -1, a) - 2 * u + np.roll(u, 1, a)) / h**2 for a in (0, 1))
        spec = frac_deriv(u, 2.0, True, g).real
        errs.append(np.max(np.abs(spec + lap)))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(np.abs(orders - 2) < 0.1)


def test_negative_homogeneous_warns_on_mean():
    u = np.ones(G2.shape)
    with pytest.warns(NonzeroMeanWarning):
        frac_deriv(u, -0.5, True, G2)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        frac_deriv(G2.plane_wave([1.0, 0.0]), -0.5, True, G2)


def test_negative_homogeneous_inverts_positive():
    u = G2.plane_wave([2.0, 1.0]) + 0.5 * G2.plane_wave([0.0, -3.0])
    back = frac_deriv(frac_deriv(u, 0.7, True, G2), -0.7, True, G2)
    assert np.allclose(back, u, atol=1e-12)


# --- norms --------------------------------------------------------------------

def test_parseval(rng):
    for d in (1, 2, 3):
        g = SpectralGrid(d, 3.7, 8)
        u = rng.standard_normal(g.shape) + 1j * rng.standard_normal(g.shape)
        assert spatial_norm(u, parse_norm_spec("L2"), g) == pytest.approx(l2_physical(u, g), rel=1e-12)


def test_lebesgue_grid_quadrature(rng):
    g = SpectralGrid(1, 2 * math.pi, 64)
    u = np.cos(g.x1d())
    # ∫|cos|⁴ = 3π/4 over a period
    assert float(spatial_norm(u, parse_norm_spec("L4"), g)) == pytest.approx((3 * math.pi / 4) ** 0.25, rel=1e-12)
    assert float(spatial_norm(u, parse_norm_spec("Linf"), g)) == 1.0


def test_sobolev_q2_agrees_with_physical_route(rng):
    u = smooth_field(G2, rng)
    a = spatial_norm(u, parse_norm_spec("Hs(0.75)"), G2)
    b = l2_physical(frac_deriv(u, 0.75, False, G2), G2)
    assert a == pytest.approx(b, rel=1e-12)


def test_zero_path():
    times = np.linspace(0, 1, 5)
    assert mixed_norm(np.zeros((5,) + G2.shape), times, "L2t:Hs(0.5)", G2) == 0.0


def test_gaussian_time_oracle():
    g = SpectralGrid(1, 2 * math.pi, 16)
    times = np.linspace(-6, 6, 2401)
    u = np.exp(-times**2)[:, None] * np.cos(3 * g.x1d())[None, :]
    # ∫ e^{-2t²} dt · ∫ cos² dx = sqrt(π/2) · π
    want = math.sqrt(math.sqrt(math.pi / 2) * math.pi)
    assert mixed_norm(u, times, "L2t:L2", g) == pytest.approx(want, rel=1e-10)
    assert mixed_norm(u, times, "Linft:L2", g) == pytest.approx(math.sqrt(math.pi), rel=1e-12)


def test_mixed_norm_requires_uniform_times():
    with pytest.raises(ValueError):
        mixed_norm(np.zeros((3,) + G2.shape), [0.0, 0.1, 0.5], "L2t:L2", G2)
    with pytest.raises(ValueError):
        mixed_norm(np.zeros((3,) + G2.shape), [0.0, 0.1], "L2t:L2", G2)


def test_time_norm_single_sample():
    assert time_norm(np.array([2.5]), [0.0], 2.0) == 2.5


def test_ensemble_norm_matches_monte_carlo(rng):
    g = SpectralGrid(1, 2 * math.pi, 32)
    z = 0.2 * (rng.standard_normal((6,) + g.shape) + 1j * rng.standard_normal((6,) + g.shape))
    exact = ensemble_norm(z, "Hs(0.25)", g)
    n = 10_000
    gk = (rng.standard_normal((n, 6)) + 1j * rng.standard_normal((n, 6))) / math.sqrt(2)
    samples = spatial_norm(gk @ z, parse_norm_spec("Hs(0.25)"), g) ** 2
    se = samples.std(ddof=1) / math.sqrt(n)
    assert abs(samples.mean() - exact**2) <= 3 * se


@settings(max_examples=40, deadline=None)
@given(hnp.arrays(float, (8, 8), elements=st.floats(-10, 10)), st.floats(-1, 0), st.floats(0, 2))
def test_sobolev_monotone_in_order(u, s1, s2):
    g = SpectralGrid(2, 2 * math.pi, 8)
    a = float(spatial_norm(u, NormSpec("H", s1), g))
    b = float(spatial_norm(u, NormSpec("H", s2), g))
    assert a <= b * (1 + 1e-12) + 1e-300


@settings(max_examples=40, deadline=None)
@given(hnp.arrays(float, (2, 8, 8), elements=st.floats(-10, 10)),
       st.sampled_from(["L1", "L2", "L3", "Linf", "Hs(0.5)", "Hs(-1)", "dHs(1)", "Hs(0.25,4)"]))
def test_triangle_inequality(uv, text):
    g = SpectralGrid(2, 2 * math.pi, 8)
    spec = parse_norm_spec(text)
    u, v = uv
    lhs = float(spatial_norm(u + v, spec, g))
    rhs = float(spatial_norm(u, spec, g)) + float(spatial_norm(v, spec, g))
    assert lhs <= rhs * (1 + 1e-12) + 1e-12
