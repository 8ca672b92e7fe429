import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gwldp.kullback import (
    Diverging,
    DualSettings,
    Reason,
    dual_objective,
    dual_value,
    kullback_action,
    mcmillan_exponent,
    offspring_entropy,
    product_measure,
    relative_entropy,
)
from gwldp.model import OffspringMeasure, plain_marginal, validate_model
from gwldp.spectral import analyze


def pi_of(model):
    return np.array(analyze(model).eigenvector)


def test_product_measure(binary, critical_model):
    assert product_measure([1.0], binary) == OffspringMeasure({("a", ()): 0.5, ("a", ("a", "a")): 0.5})
    pi = pi_of(critical_model)
    mu = product_measure(pi, critical_model)
    np.testing.assert_allclose(plain_marginal(mu, critical_model.alphabet), pi, atol=1e-15)
    assert math.isclose(mu.total(), 1.0, abs_tol=1e-15)


def test_product_measure_alternating():
    m = validate_model(
        {"alphabet": ["a", "b"], "root_law": [0.5, 0.5],
         "kernel": {"a": [{"children": ["b"], "p": 1}], "b": [{"children": ["a"], "p": 1}]}}
    )
    pi = pi_of(m)
    assert product_measure(pi, m) == OffspringMeasure({("a", ("b",)): 0.5, ("b", ("a",)): 0.5})


def test_relative_entropy_examples(binary):
    mu = product_measure([1.0], binary)
    assert relative_entropy(mu, mu) == 0.0
    assert math.isclose(relative_entropy(OffspringMeasure({("a", ()): 1.0}), mu), math.log(2))
    assert relative_entropy(OffspringMeasure({("a", ("a",)): 1.0}), mu) == math.inf


def test_kullback_zero_at_reference(critical_model):
    pi = pi_of(critical_model)
    res = kullback_action(pi, critical_model, product_measure(pi, critical_model))
    assert res.reason is Reason.ABS_CONTINUOUS
    assert abs(res.value) <= 1e-10


def test_kullback_gates(binary):
    res = kullback_action([1.0], binary, OffspringMeasure({("a", ("a", "a")): 1.0}))
    assert res.reason is Reason.NOT_SHIFT_INVARIANT and res.value == math.inf and not res.finite
    res = kullback_action([1.0], binary, OffspringMeasure({("a", ()): 0.6, ("a", ("a", "a")): 0.4}))
    assert res.reason is Reason.NOT_SHIFT_INVARIANT
    assert math.isclose(res.defect, 0.2)
    # shift invariant and marginal 1, but (a,(a)) is not in the support
    res = kullback_action([1.0], binary, OffspringMeasure({("a", ("a",)): 1.0}))
    assert res.reason is Reason.NOT_ABSOLUTELY_CONTINUOUS
    assert res.to_json()["value"] == "inf"


def test_marginal_mismatch():
    m = validate_model(
        {"alphabet": ["a", "b"], "root_law": [0.5, 0.5], "kernel": {
            "a": [{"children": [], "p": 0.5}, {"children": ["a", "a"], "p": 0.25}, {"children": ["a", "b"], "p": 0.25}],
            "b": [{"children": [], "p": 0.5}, {"children": ["b", "b"], "p": 0.25}, {"children": ["a", "b"], "p": 0.25}]}}
    )
    pi = pi_of(m)
    np.testing.assert_allclose(pi, [0.5, 0.5], atol=1e-12)
    rho = OffspringMeasure({
        ("a", ()): 0.35, ("a", ("a", "a")): 0.35, ("b", ()): 0.15, ("b", ("b", "b")): 0.15,
    })
    res = kullback_action(pi, m, rho)
    assert res.reason is Reason.MARGINAL_MISMATCH
    assert math.isclose(res.marginal_gap, 0.4)


def test_dual_examples(binary):
    mu = product_measure([1.0], binary)
    sol = dual_value([1.0], binary, mu)
    assert abs(sol.value) <= 1e-12
    assert all(abs(v) <= 1e-9 for v in sol.argmax.values())

    rho = OffspringMeasure({("a", ()): 0.6, ("a", ("a", "a")): 0.4})
    sol = dual_value([1.0], binary, rho)
    closed = 0.6 * math.log(1.2) + 0.4 * math.log(0.8)
    assert abs(sol.value - closed) <= 1e-10
    assert sol.gradient_norm <= DualSettings().tol
    # gauge: rho-mean of the argmax is zero
    assert abs(rho.pair(sol.argmax)) <= 1e-12

    stray = OffspringMeasure({("a", ()): 0.5, ("a", ("a",)): 0.5})
    with pytest.raises(Diverging) as info:
        dual_value([1.0], binary, stray)
    assert ("a", ("a",)) in info.value.witness


def test_dual_zero_mass_atoms(binary):
    rho = OffspringMeasure({("a", ()): 1.0})
    sol = dual_value([1.0], binary, rho)
    assert abs(sol.value - math.log(2)) <= 1e-9


def _simplex(k):
    return st.lists(st.floats(0.01, 1.0), min_size=k, max_size=k).map(lambda w: np.array(w) / sum(w))


def _measure_on(mu, w):
    return OffspringMeasure(dict(zip(list(mu), w)))


@settings(max_examples=60, deadline=None)
@given(_simplex(5))
def test_duality_mixed(mixed, w):
    pi = pi_of(mixed)
    mu = product_measure(pi, mixed)
    rho = _measure_on(mu, w)
    assert abs(dual_value(pi, mixed, rho).value - relative_entropy(rho, mu)) <= 1e-6


@settings(max_examples=40, deadline=None)
@given(_simplex(2), st.lists(st.floats(-4, 4), min_size=2, max_size=2))
def test_dual_lower_bound_certificate(binary, w, g):
    mu = product_measure([1.0], binary)
    rho = _measure_on(mu, w)
    best = dual_value([1.0], binary, rho).value
    assert dual_objective(dict(zip(list(mu), g)), [1.0], binary, rho) <= best + 1e-10


def feasible_mixed(s, theta):
    # shift invariant with marginal (1/2, 1/2) for the mixed model
    return OffspringMeasure({
        ("a", ()): 0.5 - s, ("a", ("a", "b")): s * theta, ("a", ("b", "a")): s * (1 - theta),
        ("b", ()): s, ("b", ("a", "b")): 0.5 - s,
    })


@given(st.floats(0.01, 0.49), st.floats(0, 1), st.floats(0.01, 0.49), st.floats(0, 1))
def test_kullback_convex_on_feasible_set(mixed, s1, t1, s2, t2):
    pi = pi_of(mixed)
    r1, r2 = feasible_mixed(s1, t1), feasible_mixed(s2, t2)
    J = lambda r: kullback_action(pi, mixed, r)
    j1, j2, jm = J(r1), J(r2), J(0.5 * r1 + 0.5 * r2)
    assert j1.finite and j2.finite and jm.finite
    assert jm.value <= 0.5 * (j1.value + j2.value) + 1e-10


def test_offspring_entropy_examples():
    H = offspring_entropy({"a": {(): 0.5, ("a",): 0.5}, "b": {(): 1.0}})
    np.testing.assert_allclose(H, [math.log(2), 0.0])
    H = offspring_entropy({"a": {(): 2 / 3, ("a",): 1 / 3}})
    assert math.isclose(H[0], 2 / 3 * math.log(1.5) + math.log(3) / 3)
    assert math.isclose(H[0], 0.636514, abs_tol=1e-6)


@given(st.lists(st.floats(0.001, 1.0), min_size=1, max_size=8))
def test_entropy_bounds(w):
    p = np.array(w) / sum(w)
    H = offspring_entropy({"a": {(i,): x for i, x in enumerate(p)}})[0]
    assert -1e-12 <= H <= math.log(len(p)) + 1e-12


def test_mcmillan_exponent_examples():
    assert mcmillan_exponent([math.log(2)], [1.0]) == math.log(2)
    assert mcmillan_exponent([0.0, 0.0], [0.5, 0.5]) == 0.0
    assert math.isclose(mcmillan_exponent([math.log(2), 0.0], [1 / 3, 2 / 3]), 0.231049, abs_tol=1e-6)
