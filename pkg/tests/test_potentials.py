import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rfhartree.potentials import Potential


def test_point_mass_is_constant():
    w = Potential.point_mass(0.3)
    assert np.all(w.w_hat([0, 1, 100]) == 0.3)
    assert w.w_hat_zero == 0.3 and w.sup_abs() == 0.3


def test_coupling_normalisation():
    w = Potential.point_mass_coupling(-0.05, 3)
    assert w.coupling(1.7, 3) == pytest.approx(-0.05, rel=1e-15)
    assert w.weight == pytest.approx(-0.05 / (2 * math.pi) ** 1.5)


def test_gaussian_and_yukawa():
    g = Potential.gaussian(2.0, 0.5)
    assert g.w_hat(2.0) == pytest.approx(2 * math.exp(-0.5))
    y = Potential.yukawa3d(1.0, 2.0)
    assert y.w_hat(0.0) == 0.25 and y.sup_abs() == 0.25


def test_sup_ratio_infinite_when_mass_nonzero():
    assert math.isinf(Potential.point_mass(0.1).sup_ratio())
    assert Potential.zero().sup_ratio() == 0.0


def test_sup_ratio_of_linear_ramp():
    w = Potential.from_function(lambda k: 0.2 * np.minimum(k, 1.0))
    assert w.sup_ratio() == pytest.approx(0.2, rel=1e-12)


def test_custom_table_interpolates_and_extrapolates_flat():
    w = Potential.custom_fourier([0, 1, 2], [1.0, 0.5, 0.25])
    assert w.w_hat(1.0) == pytest.approx(0.5)
    assert w.w_hat(50.0) == pytest.approx(0.25)


@pytest.mark.parametrize("kw", [dict(kind="gaussian", width=0), dict(kind="yukawa3d"), dict(kind="nope"),
                                dict(kind="custom_fourier", table_k=(1, 2), table_w=(0, 0))])
def test_invalid_potentials(kw):
    with pytest.raises(ValueError):
        Potential(**kw)


@given(st.floats(-5, 5), st.floats(0, 50))
def test_even_in_frequency(a, k):
    w = Potential.gaussian(a, 0.7)
    assert w.w_hat(k) == w.w_hat(-k)
