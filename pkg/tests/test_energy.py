import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fractal_energy import CallableEnergy, make_dirichlet, make_p_edge, make_perturbed
from fractal_energy.energy import boundary_pairs
from fractal_energy.errors import BadExponent, NegativeCoefficient, RatioDivergence, ReducibleForm

finite = st.floats(-10, 10, allow_nan=False)
vectors = arrays(np.float64, 3, elements=finite)


def test_pairs_order():
    assert boundary_pairs(4) == [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]


def test_dirichlet_value_and_matrix():
    form = make_dirichlet([1.0, 2.0, 3.0], 3)
    u = np.array([1.0, -2.0, 0.5])
    expected = 1 * 9 + 2 * 0.25 + 3 * 6.25
    assert form(u) == pytest.approx(expected)
    assert u @ form.matrix @ u == pytest.approx(expected)
    assert form.degree == 2


def test_coefficient_inputs_agree():
    a = make_dirichlet({"P1-P2": 1, "P2-P3": 2, (0, 2): 3}, 3)
    b = make_dirichlet([1, 3, 2], 3)
    assert a.terms == b.terms
    assert make_dirichlet(2.5, 3).terms[0].coeffs == (2.5,) * 3


def test_batch_evaluation(rng):
    form = make_p_edge(None, 3, 4)
    u = rng.normal(size=(5, 2, 4))
    out = form(u)
    assert out.shape == (5, 2)
    assert out[3, 1] == pytest.approx(form(u[3, 1]))


@given(vectors)
@settings(max_examples=50, deadline=None)
def test_gradient_matches_finite_differences(u):
    form = make_p_edge([1.0, 0.5, 2.0], 3.5, 3) + make_dirichlet([0.3, 1.0, 0.2], 3)
    h = 1e-6
    numeric = [(form(u + h * e) - form(u - h * e)) / (2 * h) for e in np.eye(3)]
    assert np.allclose(form.gradient(u), numeric, rtol=1e-5, atol=1e-4)


@given(vectors, finite)
@settings(max_examples=50, deadline=None)
def test_shift_and_sign_invariance(u, c):
    form = make_p_edge(None, 4, 3)
    assert form(-u + c) == pytest.approx(form(u), rel=1e-9, abs=1e-9)


def test_errors():
    with pytest.raises(NegativeCoefficient):
        make_dirichlet([1, -1, 1], 3)
    with pytest.raises(ReducibleForm):
        make_dirichlet([1, 0, 0], 3)
    with pytest.raises(BadExponent):
        make_p_edge(None, 1.0, 3)
    with pytest.raises(ValueError):
        make_dirichlet([1, 1], 3)


def test_perturbed_metadata(gasket_form, perturbed):
    meta = perturbed.a2
    assert meta.p == 2 and meta.rho == pytest.approx(0.6)
    assert meta.reference.a2 is None
    assert perturbed.degree is None
    u = np.array([1e-3, 0, 0])
    assert perturbed(u) / gasket_form(u) == pytest.approx(1.0, abs=1e-5)


def test_perturbation_of_lower_order_is_rejected(gasket_form):
    # a |.|^1.5 bump dominates the quadratic near constants
    bump = make_p_edge(None, 1.5, 3)
    with pytest.raises(RatioDivergence):
        make_perturbed(gasket_form, bump)


def test_callable_energy():
    e = CallableEnergy(lambda u: float(np.ptp(u) ** 2), 3)
    assert e([0, 1, 3]) == 9.0
    assert e(np.zeros((2, 3))).shape == (2,)
    assert not e.has_gradient
