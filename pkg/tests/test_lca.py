import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import hflca
from hflca import (
    ModelValidationError,
    SingularTechnologyMatrixError,
    matrices_from_arrays,
    validate_model,
)


@pytest.fixture(scope="module")
def fuel():
    model = hflca.load_model(hflca.bundled_path("oil-to-motion.model.json"))
    return model, hflca.assemble_lca(model)


def test_assembled_structure(fuel):
    model, m = fuel
    assert m.a.shape == (5, 5) and m.b.shape == (3, 5)
    assert m.column_ids == (
        "refine_oil", "generate_electricity", "drive_ev", "drive_icv",
        "produce_gasoline",
    )
    assert m.product_pairs[0] == ("refined_oil", "refinery")
    assert m.aspect_pairs == (
        ("co2", "atmosphere"), ("nox", "atmosphere"), ("crude_oil", "earth"),
    )
    assert m.unrepresented_pairs == ()
    # production positive, consumption negative, one product per column
    assert m.a[0, 0] == 1.0 and m.a[0, 1] == -61.9
    assert m.b[2, 0] == -3.45 and m.b[0, 3] == 0.248
    assert np.array_equal(m.stacked(), np.vstack([m.a, m.b]))
    assert m.stacked_labels == m.product_labels + m.aspect_labels


def test_demand_vector_key_forms(fuel):
    _, m = fuel
    by_process = hflca.demand_vector(m, {"drive_ev": 500.0})
    by_pair = hflca.demand_vector(m, {"distance@ev": 500.0})
    by_label = hflca.demand_vector(m, {"Distance at Electric Vehicle": 500.0})
    assert np.array_equal(by_process, by_pair)
    assert np.array_equal(by_process, by_label)
    by_operand = hflca.demand_vector(m, {"gasoline": 2.0})
    assert by_operand[4] == 2.0
    with pytest.raises(ModelValidationError, match="matches several products"):
        hflca.demand_vector(m, {"distance": 1.0})
    with pytest.raises(ModelValidationError, match="matches no process or product"):
        hflca.demand_vector(m, {"plutonium": 1.0})


def test_solve_residual_contract(fuel):
    _, m = fuel
    solution = hflca.solve(m, {"drive_ev": 500.0})
    assert solution.residual <= 1e-9 * max(1.0, float(np.max(np.abs(solution.y))))
    assert solution.reliable
    assert 1.0 <= solution.condition_estimate < 1e12
    assert solution.activity()["generate_electricity"] == pytest.approx(1908.0)
    assert solution.inventory()["Crude Oil at Earth"] < 0


def test_solve_scaling_and_compute_aspects_compose(fuel):
    _, m = fuel
    y = hflca.demand_vector(m, {"drive_icv": 500.0})
    x = hflca.solve_scaling(m.a, y)
    e = hflca.compute_aspects(m.b, x)
    solution = hflca.solve(m, y)
    assert np.array_equal(x, solution.x)
    assert np.array_equal(e, solution.e)


def test_singular_matrix_raises_with_pivot():
    m = matrices_from_arrays(np.array([[1.0, 1.0], [1.0, 1.0]]))
    with pytest.raises(SingularTechnologyMatrixError) as info:
        hflca.solve(m, np.array([1.0, 0.0]))
    assert info.value.pivot_index == 1
    assert info.value.condition_estimate == np.inf


def test_ill_conditioned_flags_unreliable(caplog):
    a = np.array([[1.0, 1.0], [1.0, 1.0 + 1e-14]])
    m = matrices_from_arrays(a)
    with caplog.at_level(logging.WARNING, logger="hflca.lca"):
        solution = hflca.solve(m, np.array([1.0, 1.0]))
    assert not solution.reliable
    assert solution.condition_estimate > 1e12
    assert "condition estimate" in caplog.text


def test_column_without_positive_entry_rejected():
    with pytest.raises(ModelValidationError, match="no positive"):
        matrices_from_arrays(np.array([[1.0, -1.0], [0.0, -2.0]]))


def test_matrices_from_arrays_shape_checks():
    with pytest.raises(ModelValidationError, match="square"):
        matrices_from_arrays(np.ones((2, 3)))
    with pytest.raises(ModelValidationError, match="columns"):
        matrices_from_arrays(np.eye(2), np.ones((1, 3)))
    with pytest.raises(ModelValidationError, match="label counts"):
        matrices_from_arrays(np.eye(2), product_labels=["only one"])


def test_compute_aspects_shape_check():
    with pytest.raises(ModelValidationError, match="cannot multiply"):
        hflca.compute_aspects(np.ones((2, 3)), np.ones(2))


def two_output_raw():
    return {
        "operands": [
            {"id": "good", "unit": "u"}, {"id": "extra", "unit": "u"},
        ],
        "resources": [{"id": "h", "kind": "transformation"}],
        "processes": [{
            "id": "p",
            "outputs": [
                {"operand": "good", "quantity": 2.0},
                {"operand": "extra", "quantity": 3.0},
            ],
            "primary_output": "good",
        }],
        "allocations": [{"process": "p", "resource": "h"}],
    }


def test_product_assignment_overrides_primary():
    model = validate_model(two_output_raw())
    m = hflca.assemble_lca(model, product_assignment={"p": "extra"})
    assert m.product_pairs == (("extra", "h"),)
    assert m.a[0, 0] == 3.0
    with pytest.raises(ModelValidationError, match="not an output"):
        hflca.assemble_lca(model, product_assignment={"p": "ghost"})


def test_unclassified_flows_drop_with_warning(caplog):
    model = validate_model(two_output_raw())
    with caplog.at_level(logging.WARNING, logger="hflca.lca"):
        m = hflca.assemble_lca(model)
    assert m.unrepresented_pairs == (("extra", "h"),)
    assert "untracked pair" in caplog.text
    assert m.a.shape == (1, 1) and m.b.shape == (0, 1)


def test_aspect_fallback_uses_independent_buffers(caplog):
    raw = two_output_raw()
    raw["resources"].append({"id": "air", "kind": "independent-buffer"})
    raw["buffer_overrides"] = [
        {"process": "p", "operand": "extra", "buffer": "air"},
    ]
    with caplog.at_level(logging.WARNING, logger="hflca.lca"):
        m = hflca.assemble_lca(validate_model(raw))
    assert m.aspect_pairs == (("extra", "air"),)
    assert "no aspects declared" in caplog.text


def test_declared_aspect_must_occur():
    raw = two_output_raw()
    raw["aspects"] = ["extra"]
    model = validate_model(raw)
    hflca.assemble_lca(model)  # extra occurs at the host buffer
    raw["processes"][0]["outputs"] = [raw["processes"][0]["outputs"][0]]
    with pytest.raises(ModelValidationError, match="does not occur"):
        hflca.assemble_lca(validate_model(raw))


def test_product_collision_names_both_processes():
    raw = two_output_raw()
    raw["processes"].append({
        "id": "q",
        "outputs": [{"operand": "good", "quantity": 1.0}],
        "primary_output": "good",
    })
    raw["allocations"].append({"process": "q", "resource": "h"})
    with pytest.raises(ModelValidationError, match="'p' and 'q' both produce"):
        hflca.assemble_lca(validate_model(raw))


def test_classical_plan_requires_bijection():
    raw = two_output_raw()
    raw["resources"].append({"id": "h2", "kind": "transformation"})
    raw["allocations"].append({"process": "p", "resource": "h2"})
    with pytest.raises(ModelValidationError, match="exactly one capability"):
        hflca.assemble_lca(validate_model(raw))


@given(st.integers(2, 6), st.integers(0, 10**6))
@settings(max_examples=40, deadline=None)
def test_triangular_solve_meets_residual_contract(n, seed):
    rng = np.random.default_rng(seed)
    a = np.eye(n)
    a[np.tril_indices(n, -1)] = -rng.random(n * (n - 1) // 2) * 3.0
    y = rng.random(n) * 10.0
    x = hflca.solve_scaling(a, y)
    assert np.max(np.abs(a @ x - y)) <= 1e-9 * max(1.0, float(np.max(np.abs(y))))
