import json

import numpy as np
import pytest

import hflca
from hflca import ModelValidationError, validate_model
from hflca.equivalence import (
    decompose_conversion_transportation,
    transportation_dominance,
    verify_equivalence,
)
from hflca.report import (
    emit_report,
    export_net_dot,
    incidence_to_json,
    matrix_to_csv,
    matrix_to_triplets,
    render,
    trajectory_to_csv,
)

from test_esn import mover_model


@pytest.fixture(scope="module")
def solution():
    model = hflca.load_model(hflca.bundled_path("oil-to-motion.model.json"))
    matrices = hflca.assemble_lca(model)
    return hflca.solve(matrices, {"drive_ev": 500.0})


@pytest.fixture(scope="module")
def trajectory():
    net = hflca.net_from_model(mover_model())
    state = hflca.initial_state(net, marking={"x@store": 10.0})
    schedule = hflca.explicit_schedule(
        np.array([[2.0], [0.0]]), np.array([[0.0], [2.0]])
    )
    return hflca.simulate(net, state, schedule)


def test_rendering_is_deterministic(solution, trajectory):
    for result in (solution, trajectory):
        for fmt in ("json", "csv", "table"):
            assert render(result, fmt) == render(result, fmt)


def test_emit_to_stdout_and_file(tmp_path, capsys, solution):
    text = emit_report(solution, "csv", "-")
    assert capsys.readouterr().out == text
    emit_report(solution, "csv", None)
    assert capsys.readouterr().out == text
    path = tmp_path / "result.csv"
    emit_report(solution, "csv", str(path))
    assert capsys.readouterr().out == ""
    assert path.read_text() == text


def test_lca_table_layout(solution):
    lines = render(solution, "table").splitlines()
    assert lines[0].split() == ["process", "product", "demand", "activity"]
    assert set(lines[1]) <= {"-", " "}
    by_process = {line.split()[0]: line for line in lines[2:7]}
    assert by_process["drive_ev"].split()[-2:] == ["500", "500"]
    assert by_process["refine_oil"].split()[-2:] == ["0", "118105"]
    # a tiny negative activity rounds to plain 0, not -0
    assert by_process["drive_icv"].split()[-1] == "0"
    assert lines[-1].startswith("residual")


def test_lca_json_round_trips(solution):
    payload = json.loads(render(solution, "json"))
    again = json.loads(render(solution, "json"))
    assert payload == again
    assert payload["processes"][0] == "refine_oil"
    assert len(payload["presentation"]) == 3


def test_trajectory_csv_rows(trajectory):
    lines = trajectory_to_csv(trajectory).splitlines()
    assert lines[0] == "k,kind,label,value"
    n_active = len(trajectory.net.active_places)
    per_state = n_active + trajectory.net.n_transitions
    assert len(lines) - 1 == 3 * per_state
    assert lines[1].startswith("1,place,")


def test_trajectory_table_notes_overrides(trajectory):
    plain = render(trajectory, "table")
    assert "weight overrides" not in plain
    net = trajectory.net
    state = hflca.initial_state(net, marking={"x@store": 10.0})
    schedule = hflca.instantaneous_schedule(np.array([[1.0]]))
    override = hflca.WeightOverride("p", "y", "h", weight=0.5)
    traced = hflca.simulate(net, state, schedule, overrides=[override])
    assert "weight overrides were applied" in render(traced, "table")


def test_equivalence_formats():
    model = hflca.load_model(hflca.bundled_path("oil-to-motion.model.json"))
    report = verify_equivalence(model, {"drive_icv": 500.0})
    payload = json.loads(render(report, "json"))
    assert payload["kind"] == "equivalence-report"
    assert [a["held"] for a in payload["assumptions"]] == [True, True, True]
    csv_lines = render(report, "csv").splitlines()
    assert csv_lines[0] == "row,block,delta_qb,target,abs_error"
    assert len(csv_lines) - 1 == 8


def test_decomposition_render_needs_verdicts():
    model = hflca.load_model(hflca.bundled_path("propane-heating.model.json"))
    structure = hflca.build_incidence(model)
    report = decompose_conversion_transportation(
        structure, {"deliver_rural": 1.0, "heat_rural": 1.0}
    )
    with pytest.raises(ModelValidationError, match="dominance verdicts"):
        render(report, "table")
    verdicts = transportation_dominance(report)
    table = render(report, "table", verdicts=verdicts)
    assert table.startswith("dominance threshold: 0.05")
    assert "must include transportation" in table


def test_render_rejects_unknown_inputs(solution):
    with pytest.raises(ModelValidationError, match="unknown format"):
        render(solution, "xml")
    with pytest.raises(ModelValidationError, match="no renderer"):
        render(object(), "table")


def test_matrix_triplets_order_and_labels():
    matrix = np.array([[0.0, 2.0], [3.0, 0.0]])
    payload = matrix_to_triplets(matrix, ["r0", "r1"], ["c0", "c1"])
    assert payload["rows"] == 2 and payload["cols"] == 2
    assert payload["triplets"] == [[0, 1, 2.0], [1, 0, 3.0]]
    assert payload["row_labels"] == ["r0", "r1"]


def test_matrix_csv_quotes_awkward_labels():
    matrix = np.array([[1.5]])
    text = matrix_to_csv(matrix, ['say "hi", friend'], ["col"])
    assert text.splitlines()[1] == '"say ""hi"", friend",col,1.5'


def test_incidence_json(trajectory):
    reduced = trajectory.net.structure.reduced()
    payload = incidence_to_json(reduced)
    assert payload["kind"] == "incidence"
    assert payload["retained_flat_rows"] == [int(i) for i in reduced.rows]
    assert len(payload["net"]["triplets"]) == reduced.net.nnz


def test_dot_escapes_quotes():
    raw = {
        "operands": [{"id": "x", "name": 'the "stuff"', "unit": "u"}],
        "resources": [{"id": "h", "kind": "transformation"}],
        "processes": [{
            "id": "p",
            "outputs": [{"operand": "x", "quantity": 1.0}],
            "primary_output": "x",
        }],
        "allocations": [{"process": "p", "resource": "h"}],
    }
    net = hflca.net_from_model(validate_model(raw))
    dot = export_net_dot(net)
    assert r'the \"stuff\" at h' in dot
    assert dot.startswith("digraph esn {")
