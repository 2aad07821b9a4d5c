import math

import numpy as np
import pytest

from condbound import closedform as cf
from condbound import sos
from condbound.errors import InvalidInput, UnsupportedEvent
from condbound.model import (FullSpace, HalfLine, Interval, MomentSpec, PiecewisePolynomial,
                             Status, Symmetric, SymmetricUnimodal, Unstructured, dual_slack,
                             mean_variance_spec)

PP = PiecewisePolynomial


def problem(moments, t, g=None, structure=None, support=(-math.inf, math.inf)):
    event = FullSpace() if t is None else HalfLine(t)
    return sos.DualBoundProblem(MomentSpec.power(moments), event, g or PP.identity(),
                                structure or Unstructured(), support)


@pytest.mark.parametrize("t", [-1.0, 0.0, 1.0, 2.0])
def test_uniform_two_moments_match_mean_variance(t):
    res = sos.dual_bound(problem(sos.uniform_moments(0.0, 5.0, 2), t))
    ref = cf.bound_mean_variance(2.5, math.sqrt(25 / 12), t).value
    assert res.status is Status.TIGHT
    assert res.value == pytest.approx(ref, abs=1e-5)


@pytest.mark.parametrize("c", [0.5, 1.0, 2.5])
def test_cantelli(c):
    res = sos.dual_bound(problem([1.0, 0.0, 1.0], None, PP.step(c)))
    assert res.value == pytest.approx(1.0 / (1.0 + c * c), abs=1e-6)


def test_constant_objective():
    res = sos.dual_bound(problem(sos.normal_moments(0.0, 1.0, 4), 0.3, PP.constant(1.0)))
    assert res.value == pytest.approx(1.0, abs=1e-7)


def test_unstructured_diverges_at_mean():
    res = sos.dual_bound(problem([1.0, 0.0, 1.0], 0.0))
    assert res.status is Status.DIVERGENT
    assert math.isinf(res.value)


@pytest.mark.parametrize("structure,fn", [(Symmetric(0.0), cf.bound_symmetric),
                                          (SymmetricUnimodal(0.0), cf.bound_symmetric_unimodal)])
@pytest.mark.parametrize("t", [-2.0, -1.0, -0.5, 0.0])
def test_structured_matches_closed_form(structure, fn, t):
    res = sos.dual_bound(problem([1.0, 0.0, 1.0], t, structure=structure))
    assert res.value == pytest.approx(fn(0.0, 1.0, t).value, abs=1e-6)


@pytest.mark.parametrize("structure", [Symmetric(0.0), SymmetricUnimodal(0.0)])
def test_structured_diverges_above_mean(structure):
    res = sos.dual_bound(problem([1.0, 0.0, 1.0], 0.25, structure=structure))
    assert res.status is Status.DIVERGENT


def test_higher_moments_finite_above_mean():
    res = sos.dual_bound(problem(sos.normal_moments(0.0, 1.0, 4), 0.5))
    assert res.status is Status.TIGHT
    assert res.value == pytest.approx(2.69425, abs=1e-4)


def test_fourth_moment_diverges_from_one():
    res = sos.dual_bound(problem(sos.normal_moments(0.0, 1.0, 4), 1.0))
    assert res.status is Status.DIVERGENT


def test_certificate_is_feasible():
    prob = problem(sos.normal_moments(0.5, 2.0, 6), -0.5)
    res = sos.dual_bound(prob)
    row, slack = dual_slack(res.dual_certificate, prob.funcs(), prob.values(), prob.objective,
                            prob.event, Unstructured(), np.linspace(-40, 40, 40001))
    assert row <= 1e-7
    assert slack.min() >= -1e-6
    assert res.dual_certificate[-1] == pytest.approx(res.value, rel=1e-7)


def test_support_endpoint_step():
    prob = problem(sos.uniform_moments(0.0, 5.0, 2), 0.5, PP.step(5.0), support=(0.0, 5.0))
    res = sos.dual_bound(prob)
    # an atom at the right end is allowed; frozen from the grid LP
    assert res.value == pytest.approx(0.2605995, abs=1e-6)


def test_from_spec_roundtrip():
    spec = mean_variance_spec(1.0, 2.0)
    prob = sos.DualBoundProblem.from_spec(spec, HalfLine(0.0), PP.identity())
    assert prob.order == 2
    assert prob.values() == pytest.approx((1.0, 1.0, 5.0))


def test_interval_event():
    res = sos.dual_bound(problem([1.0, 0.0, 1.0], None).with_event(Interval(-1.0, 1.0)))
    assert res.finite
    assert res.value <= 1.0 + 1e-7


def test_power_basis_required():
    with pytest.raises(InvalidInput):
        sos.DualBoundProblem(MomentSpec((PP.constant(1.0), PP.abs_dev(0.0)), (1.0, 1.0)),
                             HalfLine(0.0), PP.identity())


def test_multivariate_event_rejected():
    with pytest.raises(UnsupportedEvent):
        problem([1.0, 0.0, 1.0], None).with_event(FullSpace(2))


def test_sweep_single_point_equals_direct_call():
    prob = problem(sos.normal_moments(0.0, 1.0, 4), -1.0)
    rows = sos.sweep(prob, [-1.0])
    assert rows[0].result.value == pytest.approx(sos.dual_bound(prob).value, abs=1e-12)


def test_sweep_requires_sorted_grid():
    with pytest.raises(InvalidInput):
        sos.sweep(problem([1.0, 0.0, 1.0], -1.0), [0.0, -1.0])


def test_moment_helpers():
    assert sos.uniform_moments(0.0, 5.0, 2) == pytest.approx((1.0, 2.5, 25 / 3))
    assert sos.normal_moments(1.0, 2.0, 4) == pytest.approx((1.0, 1.0, 5.0, 13.0, 73.0))


def test_conditional_phi_sign_change():
    phi = sos.conditional_phi(problem([1.0, 0.0, 1.0], -1.0))
    assert phi(0.9) > 0 >= phi(1.1)
