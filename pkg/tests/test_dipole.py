import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given
from hypothesis import strategies as st

from fibercavity.dipole import (
    DipoleConfig,
    DipoleRates,
    _pec_closed_form,
    enhancement_curve,
    multilayer_enhancement,
    pec_angular_spectrum,
    pec_enhancement,
    perfect_conductor_stack,
)
from fibercavity.io import bundled, load_stack
from fibercavity.layers import Layer, LayerStack

LAMBDA = 1310e-9


def sympy_closed_form():
    x = sp.symbols("x", positive=True)
    perp = 1 + 3 * (sp.sin(x) / x**3 - sp.cos(x) / x**2)
    par = 1 - sp.Rational(3, 2) * (sp.sin(x) / x + sp.cos(x) / x**2 - sp.sin(x) / x**3)
    return x, par, perp


def test_near_contact_series_matches_symbolic_expansion():
    x, par, perp = sympy_closed_form()
    par_series = sp.lambdify(x, sp.series(par, x, 0, 14).removeO(), "math")
    perp_series = sp.lambdify(x, sp.series(perp, x, 0, 14).removeO(), "math")
    for value in (1e-4, 0.1, 0.3, 0.4999):
        p, q = _pec_closed_form(np.array([value]))
        assert p[0] == pytest.approx(par_series(value), abs=1e-15)
        assert q[0] == pytest.approx(perp_series(value), abs=1e-15)


def test_closed_form_matches_symbolic_expression_far_from_contact():
    x, par, perp = sympy_closed_form()
    f_par, f_perp = sp.lambdify(x, par, "mpmath"), sp.lambdify(x, perp, "mpmath")
    xs = np.array([0.5, 0.7, 2.0, 10.0, 60.0])
    p, q = _pec_closed_form(xs)
    for i, value in enumerate(xs):
        assert p[i] == pytest.approx(float(f_par(value)), rel=1e-13, abs=1e-14)
        assert q[i] == pytest.approx(float(f_perp(value)), rel=1e-13, abs=1e-14)


def test_series_branch_is_continuous():
    p, q = _pec_closed_form(np.array([0.5 - 1e-12, 0.5]))
    assert abs(p[0] - p[1]) < 1e-11 and abs(q[0] - q[1]) < 1e-11


def test_pec_contact_and_far_field_limits():
    assert pec_enhancement(DipoleConfig(0.0, LAMBDA, 3.41, "perpendicular")) == pytest.approx(2.0)
    assert pec_enhancement(DipoleConfig(0.0, LAMBDA, 3.41, "parallel")) == pytest.approx(0.0, abs=1e-15)
    far = DipoleConfig(1e-3, LAMBDA, 3.41, "isotropic")
    assert pec_enhancement(far) == pytest.approx(1.0, abs=1e-3)


@given(st.floats(0.0, 40.0))
def test_pec_angular_spectrum_matches_closed_form(x):
    par, perp = pec_angular_spectrum([x])
    p, q = _pec_closed_form(np.array([x]))
    assert par[0] == pytest.approx(p[0], abs=1e-6)
    assert perp[0] == pytest.approx(q[0], abs=1e-6)


def test_pec_like_stack_reproduces_closed_form():
    # finite mirror index: agreement to a few 1e-3, set by n_host / n_mirror
    stack = perfect_conductor_stack(3.41, LAMBDA)
    d = np.linspace(20e-9, 800e-9, 9)
    rates = enhancement_curve(d, LAMBDA, stack, check_cutoff=False)
    x = 4 * math.pi * 3.41 * d / LAMBDA
    p, q = _pec_closed_form(x)
    assert np.allclose(rates.parallel, p, atol=5e-3)
    assert np.allclose(rates.perpendicular, q, atol=5e-3)


def test_index_matched_mirror_leaves_rate_unchanged():
    stack = LayerStack(3.41, (Layer("same", 200e-9, 3.41),), 3.41)
    rates = enhancement_curve(np.linspace(0.0, 500e-9, 6), LAMBDA, stack)
    assert np.allclose(rates.parallel, 1.0, atol=1e-12)
    assert np.allclose(rates.perpendicular, 1.0, atol=1e-12)


def test_bundled_mirror_enhancement_is_modest():
    stack = load_stack(bundled("stacks", "dbr_10_layers.yaml"))
    rates = enhancement_curve(np.linspace(0.0, 1000e-9, 41), LAMBDA, stack)
    assert rates.isotropic.max() <= 1.1
    assert rates.isotropic.min() > 0.8
    # oscillation decays towards the bulk value far from the mirror
    assert abs(rates.isotropic[-1] - 1) < abs(rates.isotropic[:10] - 1).max()


def test_multilayer_single_point_matches_curve():
    stack = load_stack(bundled("stacks", "dbr_10_layers.yaml"))
    cfg = DipoleConfig(192.0821e-9, LAMBDA, 3.41, "isotropic")
    curve = enhancement_curve([cfg.distance], LAMBDA, stack)
    assert multilayer_enhancement(cfg, stack) == pytest.approx(curve.isotropic[0], rel=1e-12)


def test_isotropic_average():
    rates = DipoleRates(np.array([0.0]), np.array([0.4]), np.array([1.6]))
    assert rates.isotropic[0] == pytest.approx(0.8)
    assert rates.select("parallel")[0] == 0.4
    with pytest.raises(ValueError):
        rates.select("diagonal")


def test_configuration_validation():
    with pytest.raises(ValueError):
        DipoleConfig(-1e-9, LAMBDA, 3.41)
    with pytest.raises(ValueError):
        DipoleConfig(1e-9, LAMBDA, 3.41, "sideways")
    stack = load_stack(bundled("stacks", "dbr_10_layers.yaml"))
    with pytest.raises(ValueError, match="incident medium"):
        multilayer_enhancement(DipoleConfig(1e-9, LAMBDA, 1.0), stack)
    with pytest.raises(ValueError):
        enhancement_curve([-1e-9], LAMBDA, stack)


def test_short_evanescent_cutoff_warns():
    stack = perfect_conductor_stack(3.41, LAMBDA)
    with pytest.warns(RuntimeWarning, match="cutoff"):
        enhancement_curve([5e-9], LAMBDA, stack, u_max=1.05)
