"""Result serialization: JSON, CSV, and aligned text tables.

Output is deterministic: orderings follow declared index order and no
run-dependent data (timestamps, paths) is embedded, so serializing the
same result twice is byte-identical.
"""

from __future__ import annotations

import io
import json
import sys
from typing import Any, Sequence

import numpy as np
import scipy.sparse as sp

from .equivalence import DecompositionReport, DominanceVerdicts, EquivalenceReport
from .errors import ModelValidationError
from .esn import EngineeringSystemNet, Trajectory
from .incidence import IncidenceStructure, ReducedIncidence
from .lca import LcaSolution

FORMATS = ("json", "csv", "table")


def _floats(values: Any) -> list[float]:
    return [float(v) for v in np.asarray(values).ravel()]


def _table(rows: Sequence[Sequence[str]], header: Sequence[str]) -> str:
    widths = [len(h) for h in header]
    for row in rows:
        for i, cell in enumerate(row):
            widths[i] = max(widths[i], len(cell))
    lines = [
        "  ".join(h.ljust(widths[i]) for i, h in enumerate(header)).rstrip(),
        "  ".join("-" * widths[i] for i in range(len(header))),
    ]
    for row in rows:
        lines.append(
            "  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip()
        )
    return "\n".join(lines) + "\n"


def _num(value: float) -> str:
    return f"{value + 0.0:.6g}"


def _csv_cell(value: str) -> str:
    if any(c in value for c in ",\"\n"):
        return '"' + value.replace('"', '""') + '"'
    return value


def _csv(rows: Sequence[Sequence[str]], header: Sequence[str]) -> str:
    out = io.StringIO()
    out.write(",".join(_csv_cell(h) for h in header) + "\n")
    for row in rows:
        out.write(",".join(_csv_cell(c) for c in row) + "\n")
    return out.getvalue()


def _direction(value: float) -> str:
    return "consumed" if value < 0 else "emitted"


def lca_result_to_json(result: LcaSolution) -> dict[str, Any]:
    m = result.matrices
    return {
        "kind": "lca-result",
        "schema_version": 1,
        "processes": list(m.column_ids),
        "process_labels": list(m.column_labels),
        "product_labels": list(m.product_labels),
        "aspect_labels": list(m.aspect_labels),
        "y": _floats(result.y),
        "x": _floats(result.x),
        "e": _floats(result.e),
        "presentation": [
            {
                "label": label,
                "magnitude": abs(float(v)),
                "direction": _direction(float(v)),
            }
            for label, v in zip(m.aspect_labels, result.e)
        ],
        "residual": float(result.residual),
        "condition_estimate": float(result.condition_estimate),
        "reliable": bool(result.reliable),
    }


def _lca_rows(result: LcaSolution) -> list[list[str]]:
    m = result.matrices
    rows = []
    for pid, label, y, x in zip(m.column_ids, m.product_labels, result.y, result.x):
        rows.append(["activity", pid, label, _num(float(x)), ""])
    for label, v in zip(m.aspect_labels, result.e):
        rows.append(
            ["inventory", "", label, _num(float(v)), _direction(float(v))]
        )
    return rows


def lca_result_to_csv(result: LcaSolution) -> str:
    return _csv(_lca_rows(result), ["section", "process", "label", "value", "note"])


def lca_result_to_table(result: LcaSolution) -> str:
    m = result.matrices
    activity = _table(
        [
            [pid, label, _num(float(y)), _num(float(x))]
            for pid, label, y, x in zip(
                m.column_ids, m.product_labels, result.y, result.x
            )
        ],
        ["process", "product", "demand", "activity"],
    )
    inventory = _table(
        [
            [label, _num(float(v)), _num(abs(float(v))), _direction(float(v))]
            for label, v in zip(m.aspect_labels, result.e)
        ],
        ["aspect", "value", "magnitude", "direction"],
    )
    status = (
        f"residual {result.residual:.3e}  "
        f"condition {result.condition_estimate:.3e}  "
        f"{'ok' if result.reliable else 'UNRELIABLE'}\n"
    )
    return activity + "\n" + inventory + status


def trajectory_to_json(trajectory: Trajectory) -> dict[str, Any]:
    net = trajectory.net
    active = net.active_places
    labels = [net.place_labels[i] for i in active]
    return {
        "kind": "trajectory",
        "schema_version": 1,
        "dt": float(trajectory.states[0].dt),
        "k": [s.k for s in trajectory.states],
        "mode": trajectory.schedule.mode,
        "places": labels,
        "transitions": list(net.transition_labels),
        "qb": [_floats(s.qb[active]) for s in trajectory.states],
        "qe": [_floats(s.qe) for s in trajectory.states],
        "delta_qb": _floats(trajectory.delta_qb[active]),
        "in_flight_at_end": (
            _floats(trajectory.schedule.in_flight_at_end)
            if trajectory.schedule.in_flight_at_end is not None else None
        ),
        "weight_overrides_applied": bool(trajectory.overrides),
    }


def _trajectory_rows(trajectory: Trajectory) -> list[list[str]]:
    net = trajectory.net
    active = net.active_places
    rows = []
    for state in trajectory.states:
        for i in active:
            rows.append(
                [str(state.k), "place", net.place_labels[i],
                 _num(float(state.qb[i]))]
            )
        for j, label in enumerate(net.transition_labels):
            rows.append(
                [str(state.k), "transition", label, _num(float(state.qe[j]))]
            )
    return rows


def trajectory_to_csv(trajectory: Trajectory) -> str:
    return _csv(_trajectory_rows(trajectory), ["k", "kind", "label", "value"])


def trajectory_to_table(trajectory: Trajectory) -> str:
    net = trajectory.net
    active = net.active_places
    header = ["k"] + [net.place_labels[i] for i in active] + [
        f"[{label}]" for label in net.transition_labels
    ]
    rows = []
    for state in trajectory.states:
        rows.append(
            [str(state.k)]
            + [_num(float(state.qb[i])) for i in active]
            + [_num(float(v)) for v in state.qe]
        )
    note = ""
    if trajectory.overrides:
        note = "time-varying weight overrides were applied\n"
    return _table(rows, header) + note


def equivalence_to_json(report: EquivalenceReport) -> dict[str, Any]:
    return {
        "kind": "equivalence-report",
        "schema_version": 1,
        "verdict": report.verdict,
        "assumptions": [
            {"name": a.name, "held": a.held, "detail": a.detail}
            for a in report.assumptions
        ],
        "row_partition": [
            {"label": label, "block": block, "position": position}
            for label, block, position in report.row_partition
        ],
        "max_abs_discrepancy": float(report.max_abs_discrepancy),
        "tolerance": float(report.tolerance),
        "matrix_agreement": float(report.matrix_agreement),
        "y": None if report.y is None else _floats(report.y),
        "x": None if report.x is None else _floats(report.x),
        "e": None if report.e is None else _floats(report.e),
        "delta_qb": None if report.delta_qb is None else _floats(report.delta_qb),
        "target": None if report.target is None else _floats(report.target),
    }


def _equivalence_rows(report: EquivalenceReport) -> list[list[str]]:
    if report.delta_qb is None:
        return []
    rows = []
    for (label, block, _), delta, target in zip(
        report.row_partition, report.delta_qb, report.target
    ):
        rows.append(
            [label, block, _num(float(delta)), _num(float(target)),
             _num(abs(float(delta - target)))]
        )
    return rows


def equivalence_to_csv(report: EquivalenceReport) -> str:
    return _csv(
        _equivalence_rows(report),
        ["row", "block", "delta_qb", "target", "abs_error"],
    )


def equivalence_to_table(report: EquivalenceReport) -> str:
    lines = [f"verdict: {report.verdict}"]
    for a in report.assumptions:
        mark = "held" if a.held else "FAILED"
        lines.append(f"  {a.name}: {mark} ({a.detail})")
    if np.isfinite(report.max_abs_discrepancy):
        lines.append(
            f"max |dQ_B - [Y;E]| = {report.max_abs_discrepancy:.3e} "
            f"(tolerance {report.tolerance:.3e})"
        )
        lines.append(f"matrix agreement: {report.matrix_agreement:.3e}")
    body = "\n".join(lines) + "\n"
    rows = _equivalence_rows(report)
    if rows:
        body += _table(rows, ["row", "block", "delta_qb", "target", "abs_error"])
    return body


def decomposition_to_json(report: DecompositionReport,
                          verdicts: DominanceVerdicts) -> dict[str, Any]:
    return {
        "kind": "decomposition-report",
        "schema_version": 1,
        "threshold": float(verdicts.threshold),
        "epsilon": float(report.epsilon),
        "conversion_columns": [int(i) for i in report.conv_columns],
        "transportation_columns": [int(i) for i in report.trans_columns],
        "u_conversion": _floats(report.u_conv),
        "u_transportation": _floats(report.u_trans),
        "rows": [
            {
                "label": report.row_labels[i],
                "conversion": float(report.conv_contribution[i]),
                "transportation": float(report.trans_contribution[i]),
                "total": float(report.total[i]),
                "ratio": float(report.ratios[i]),
                "verdict": verdicts.verdicts[i],
            }
            for i in range(report.n_rows)
        ],
    }


def _decomposition_rows(report: DecompositionReport,
                        verdicts: DominanceVerdicts) -> list[list[str]]:
    return [
        [
            report.row_labels[i],
            _num(float(report.conv_contribution[i])),
            _num(float(report.trans_contribution[i])),
            _num(float(report.total[i])),
            _num(float(report.ratios[i])),
            verdicts.verdicts[i],
        ]
        for i in range(report.n_rows)
    ]


_DECOMP_HEADER = ["row", "conversion", "transportation", "total", "ratio",
                  "verdict"]


def decomposition_to_csv(report: DecompositionReport,
                         verdicts: DominanceVerdicts) -> str:
    return _csv(_decomposition_rows(report, verdicts), _DECOMP_HEADER)


def decomposition_to_table(report: DecompositionReport,
                           verdicts: DominanceVerdicts) -> str:
    head = f"dominance threshold: {verdicts.threshold}\n"
    return head + _table(_decomposition_rows(report, verdicts), _DECOMP_HEADER)


def matrix_to_triplets(matrix: "sp.spmatrix | np.ndarray",
                       row_labels: Sequence[str],
                       col_labels: Sequence[str]) -> dict[str, Any]:
    """Sparse triplet form {rows, cols, triplets, row_labels, col_labels}."""
    coo = sp.coo_matrix(matrix)
    order = np.lexsort((coo.col, coo.row))
    return {
        "rows": int(coo.shape[0]),
        "cols": int(coo.shape[1]),
        "triplets": [
            [int(coo.row[i]), int(coo.col[i]), float(coo.data[i])]
            for i in order
        ],
        "row_labels": list(row_labels),
        "col_labels": list(col_labels),
    }


def matrix_to_csv(matrix: "sp.spmatrix | np.ndarray",
                  row_labels: Sequence[str],
                  col_labels: Sequence[str]) -> str:
    """One CSV line per stored entry: row label, column label, value."""
    coo = sp.coo_matrix(matrix)
    order = np.lexsort((coo.col, coo.row))
    rows = [
        [row_labels[coo.row[i]], col_labels[coo.col[i]], repr(float(coo.data[i]))]
        for i in order
    ]
    return _csv(rows, ["row", "column", "value"])


def incidence_to_json(reduced: ReducedIncidence) -> dict[str, Any]:
    return {
        "kind": "incidence",
        "schema_version": 1,
        "net": matrix_to_triplets(
            reduced.net, reduced.row_labels, reduced.capabilities.labels
        ),
        "minus": matrix_to_triplets(
            reduced.minus, reduced.row_labels, reduced.capabilities.labels
        ),
        "plus": matrix_to_triplets(
            reduced.plus, reduced.row_labels, reduced.capabilities.labels
        ),
        "retained_flat_rows": [int(i) for i in reduced.rows],
    }


def _dot_id(text: str) -> str:
    return '"' + text.replace('"', r'\"') + '"'


def export_net_dot(net: EngineeringSystemNet) -> str:
    """DOT description of the net: active places, transitions, weighted arcs."""
    lines = ["digraph esn {", "  rankdir=LR;"]
    for i in net.active_places:
        lines.append(
            f"  {_dot_id('p' + str(int(i)))} "
            f"[shape=ellipse, label={_dot_id(net.place_labels[int(i)])}];"
        )
    for j, label in enumerate(net.transition_labels):
        lines.append(
            f"  {_dot_id('t' + str(j))} "
            f"[shape=box, label={_dot_id(label)}];"
        )
    minus = sp.coo_matrix(net.minus)
    plus = sp.coo_matrix(net.plus)
    for row, col, val in sorted(
        zip(minus.row.tolist(), minus.col.tolist(), minus.data.tolist())
    ):
        lines.append(
            f"  {_dot_id('p' + str(row))} -> {_dot_id('t' + str(col))} "
            f"[label={_dot_id(_num(val))}];"
        )
    for row, col, val in sorted(
        zip(plus.row.tolist(), plus.col.tolist(), plus.data.tolist())
    ):
        lines.append(
            f"  {_dot_id('t' + str(col))} -> {_dot_id('p' + str(row))} "
            f"[label={_dot_id(_num(val))}];"
        )
    lines.append("}")
    return "\n".join(lines) + "\n"


def render(result: Any, fmt: str,
           verdicts: DominanceVerdicts | None = None) -> str:
    """Serialize a result object in the requested format."""
    if fmt not in FORMATS:
        raise ModelValidationError(
            f"unknown format '{fmt}' (choose from {', '.join(FORMATS)})"
        )
    if isinstance(result, LcaSolution):
        if fmt == "json":
            return json.dumps(lca_result_to_json(result), indent=2) + "\n"
        if fmt == "csv":
            return lca_result_to_csv(result)
        return lca_result_to_table(result)
    if isinstance(result, Trajectory):
        if fmt == "json":
            return json.dumps(trajectory_to_json(result), indent=2) + "\n"
        if fmt == "csv":
            return trajectory_to_csv(result)
        return trajectory_to_table(result)
    if isinstance(result, EquivalenceReport):
        if fmt == "json":
            return json.dumps(equivalence_to_json(result), indent=2) + "\n"
        if fmt == "csv":
            return equivalence_to_csv(result)
        return equivalence_to_table(result)
    if isinstance(result, DecompositionReport):
        if verdicts is None:
            raise ModelValidationError(
                "decomposition rendering needs dominance verdicts"
            )
        if fmt == "json":
            return json.dumps(decomposition_to_json(result, verdicts),
                              indent=2) + "\n"
        if fmt == "csv":
            return decomposition_to_csv(result, verdicts)
        return decomposition_to_table(result, verdicts)
    raise ModelValidationError(
        f"no renderer for result type {type(result).__name__}"
    )


def emit_report(result: Any, fmt: str, destination: "str | None" = None, *,
                verdicts: DominanceVerdicts | None = None) -> str:
    """Render a result and write it to a path ('-' or None for stdout)."""
    text = render(result, fmt, verdicts=verdicts)
    if destination is None or destination == "-":
        sys.stdout.write(text)
    else:
        with open(destination, "w") as handle:
            handle.write(text)
    return text
