import numpy as np
import pytest

from fractal_energy import (
    AuditBudget,
    CallableEnergy,
    audit_a2,
    audit_axioms,
    audit_Q5,
    directional_derivative,
    make_dirichlet,
    make_p_edge,
)


@pytest.mark.parametrize("p", [2, 3, 4])
def test_edge_forms_pass(p):
    report = audit_axioms(make_p_edge([1.0, 0.5, 2.0], p, 3))
    assert report.passed, report.lines()
    assert audit_Q5(make_p_edge(None, p, 3)).passed


def test_negative_conductance_breaks_clamping():
    # still convex and zero only at constants, but not Markov
    bad = make_dirichlet([1, 1, -0.45], 3, check=False)
    report = audit_axioms(bad)
    assert report.failures() == ["Q4"]
    w = report.checks["Q4"].witness
    clamped = np.clip(w["u"], w["b"], w["a"])
    assert bad(clamped) > bad(w["u"])


def test_degenerate_form_breaks_zero_set():
    report = audit_axioms(make_dirichlet([1, 0, 0], 3, check=False))
    assert "Q3" in report.failures()
    w = report.checks["Q3"].witness
    assert np.ptp(w["u"]) > 0 and w["E"] == 0


def test_offset_energy_breaks_zero_at_constants():
    report = audit_axioms(CallableEnergy(lambda u: float(np.ptp(u) ** 2 + 1), 3))
    assert "Q3" in report.failures()


def test_nonconvex_energy_breaks_convexity():
    report = audit_axioms(CallableEnergy(lambda u: float(np.sqrt(np.ptp(u))), 3))
    assert "Q1" in report.failures()


def test_coercivity_constant_of_unit_gasket_form():
    # on the slice u(P1)=0, Osc(u)=1 the unit form is smallest at (0, 1/2, 1)
    c = audit_axioms(make_dirichlet(None, 3), AuditBudget(samples=50)).coercivity_constant
    assert c == pytest.approx(1.5, abs=1e-8)


def test_directional_derivative_examples():
    d, _ = directional_derivative(make_dirichlet(None, 3), [1, 0, 0], [0, 1, 1])
    assert d == pytest.approx(-4, abs=1e-6)
    d, _ = directional_derivative(make_p_edge(None, 4, 3), [1, 0, 0], [0, 1, 0])
    assert d <= 0


def test_q5_detects_increase_at_the_minimum():
    # at u = (0, 0, 1) raising u(P2) alone increases this energy to first order
    bad = make_dirichlet([1, 1, -0.45], 3, check=False)
    report = audit_Q5(bad)
    assert not report.passed
    assert report.witness["derivative"] > 0


def test_reports_are_reproducible():
    e = make_p_edge(None, 3, 3)
    assert audit_axioms(e, seed=7).lines() == audit_axioms(e, seed=7).lines()


def test_a2_audit(gasket, perturbed):
    result = audit_a2(perturbed, gasket)
    assert result.passed
    devs = [d for _, d in result.ratio_deviation]
    assert devs[-1] < 1e-6
    with pytest.raises(ValueError):
        audit_a2(make_p_edge(None, 4, 3), gasket)
