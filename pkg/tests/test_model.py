import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from gwldp.model import (
    EmptySupport,
    ModelError,
    NonStochasticKernel,
    OffspringMeasure,
    TypedTree,
    UnknownType,
    atom_key,
    empirical_offspring_measure,
    load_model,
    measure_from_json,
    measure_to_json,
    multiplicity,
    offspring_intensity,
    parse_atom_key,
    plain_marginal,
    shift_invariance_defect,
    validate_model,
)


def raw_model(**over):
    raw = {
        "alphabet": ["a"],
        "root_law": {"a": 1.0},
        "kernel": {"a": [{"children": [], "p": 0.5}, {"children": ["a", "a"], "p": 0.5}]},
    }
    raw.update(over)
    return raw


nested_trees = st.recursive(
    st.sampled_from("ab").map(lambda t: [t, []]),
    lambda kids: st.tuples(st.sampled_from("ab"), st.lists(kids, min_size=1, max_size=3)).map(list),
    max_leaves=25,
)


def test_multiplicity():
    assert multiplicity("a", ("a", "b", "a")) == 2
    assert multiplicity("b", ()) == 0


def test_decimal_strings_and_doubles_agree():
    raw = raw_model(kernel={"a": [{"children": [], "p": "0.5"}, {"children": ["a", "a"], "p": 0.5}]})
    assert validate_model(raw) == validate_model(raw_model())


def test_near_stochastic_row_renormalized():
    m = validate_model(raw_model(kernel={"a": [{"children": [], "p": 0.5 + 4e-10}, {"children": ["a"], "p": 0.5}]}))
    assert math.isclose(sum(p for _, p in m.kernel["a"]), 1.0, abs_tol=1e-15)


def test_rejections():
    with pytest.raises(NonStochasticKernel):
        validate_model(raw_model(kernel={"a": [{"children": [], "p": 0.6}, {"children": ["a"], "p": 0.5}]}))
    with pytest.raises(UnknownType):
        validate_model(raw_model(kernel={"a": [{"children": ["z"], "p": 1.0}]}))
    with pytest.raises(UnknownType):
        validate_model(raw_model(root_law={"z": 1.0}))
    with pytest.raises(EmptySupport):
        validate_model(raw_model(kernel={"a": []}))
    with pytest.raises(ModelError):
        validate_model(raw_model(kernel={"a": [{"children": [], "p": 0.5}, {"children": [], "p": 0.5}]}))
    with pytest.raises(ModelError):
        validate_model(raw_model(kernel={"a": [{"p": 1.0}]}))
    with pytest.raises(ModelError):
        validate_model(raw_model(kernel={"a": [{"children": [], "p": -1.0}, {"children": ["a"], "p": 2.0}]}))


def test_zero_probability_configs_dropped():
    m = validate_model(raw_model(kernel={"a": [{"children": [], "p": 1.0}, {"children": ["a"], "p": 0}]}))
    assert m.support() == [("a", ())]


def test_load_model_roundtrip(tmp_path, two_type):
    path = tmp_path / "m.json"
    path.write_text(json.dumps(two_type.to_dict()))
    assert load_model(path) == two_type


def test_tree_validation():
    TypedTree((("a", ("b",)), ("b", ())))
    with pytest.raises(ValueError):
        TypedTree((("a", ("b",)), ("a", ())))
    with pytest.raises(ValueError):
        TypedTree((("a", ("a",)),))


def test_bfs_and_preorder_agree():
    # a -> (b, a); b -> (a); the two a's are leaves
    bfs = TypedTree.from_bfs(["a", "b", "a", "a"], [("b", "a"), ("a",), (), ()])
    assert bfs.to_nested() == ["a", [["b", [["a", []]]], ["a", []]]]


@given(nested_trees)
def test_nested_roundtrip(nested):
    assert TypedTree.from_nested(nested).to_nested() == nested


@given(nested_trees)
def test_empirical_measure_of_a_tree(nested):
    y = TypedTree.from_nested(nested)
    m = empirical_offspring_measure(y)
    n = len(y)
    assert math.isclose(m.total(), 1.0, abs_tol=1e-12)
    # every vertex but the root is somebody's child, so the defect is 1/n
    assert math.isclose(shift_invariance_defect(m, ("a", "b")), 1 / n, abs_tol=1e-12)
    root = np.array([y.root_type == "a", y.root_type == "b"], dtype=float)
    np.testing.assert_allclose(plain_marginal(m, "ab") - offspring_intensity(m, "ab"), root / n, atol=1e-12)


def test_log_probability(binary):
    y = TypedTree.from_nested(["a", [["a", []], ["a", []]]])
    assert math.isclose(y.log_probability(binary), 3 * math.log(0.5))
    off = TypedTree.from_nested(["a", [["a", []]]])
    assert off.log_probability(binary) == -math.inf
    assert not off.is_consistent(binary)


def test_measure_arithmetic():
    r = OffspringMeasure({("a", ()): 0.25, ("a", ("a",)): 0.75})
    s = OffspringMeasure({("a", ()): 0.75, ("b", ()): 0.25})
    assert math.isclose(r.l1_distance(s), 0.5 + 0.75 + 0.25)
    assert (0.5 * r + 0.5 * s).is_probability()
    assert r.pair({("a", ()): 4.0}) == 1.0
    assert r.conditional("a") == {(): 0.25, ("a",): 0.75}
    with pytest.raises(ValueError):
        OffspringMeasure({("a", ()): -0.1})
    with pytest.raises(ValueError):
        OffspringMeasure({("a", ()): math.nan})


@given(st.lists(st.sampled_from("abc"), max_size=4), st.sampled_from("abc"))
def test_atom_key_roundtrip(c, a):
    assert parse_atom_key(atom_key(a, tuple(c))) == (a, tuple(c))


def test_measure_json_roundtrip():
    rho = OffspringMeasure({("a", ()): 0.5, ("a", ("a", "b")): 0.5})
    assert measure_from_json(json.loads(json.dumps(measure_to_json(rho)))) == rho
    with pytest.raises(ValueError):
        parse_atom_key("a,b")
