"""Incidence tensors relating operands, buffers, and capabilities.

Each capability pulls operands from buffers and injects operands into
buffers.  Collect those events into third-order tensors indexed by
(operand i, buffer y, capability j) and matricize them row-major over
(operand, buffer) pairs, so the flat row index of pair (i, y) is
``i * n_buffers + y``.  The binary tensors record occurrence; the
weighted matrices carry the flow magnitudes.

Most (operand, buffer) rows of a real system never appear in any
capability, so the reduced form drops all-zero rows while remembering
which flat indices survive.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .errors import ModelValidationError
from .model import CapabilitySet, SystemModel, enumerate_capabilities


def _canonical(matrix: sp.csr_matrix) -> sp.csr_matrix:
    matrix.sum_duplicates()
    matrix.sort_indices()
    return matrix


def _collect(model: SystemModel, capabilities: CapabilitySet,
             side: str) -> sp.csr_matrix:
    rows: list[int] = []
    cols: list[int] = []
    vals: list[float] = []
    nb = len(model.buffers)
    for cap in capabilities:
        flows = cap.pulls if side == "pull" else cap.injects
        for flow in flows:
            i = model.operand_index[flow.operand]
            y = model.buffer_index[flow.buffer]
            rows.append(i * nb + y)
            cols.append(cap.index)
            vals.append(flow.weight)
    shape = (len(model.operands) * nb, len(capabilities))
    matrix = sp.csr_matrix(
        (np.asarray(vals, dtype=float), (rows, cols)), shape=shape
    )
    return _canonical(matrix)


@dataclass(frozen=True)
class IncidenceStructure:
    """Full weighted incidence matrices of a model's capability set.

    ``minus`` holds pull weights, ``plus`` holds inject weights; both have
    one row per (operand, buffer) pair and one column per capability.
    """

    model: SystemModel
    capabilities: CapabilitySet
    minus: sp.csr_matrix
    plus: sp.csr_matrix

    @property
    def n_operands(self) -> int:
        return len(self.model.operands)

    @property
    def n_buffers(self) -> int:
        return len(self.model.buffers)

    @property
    def n_capabilities(self) -> int:
        return len(self.capabilities)

    def flat_index(self, operand_id: str, buffer_id: str) -> int:
        return (self.model.operand_index[operand_id] * self.n_buffers
                + self.model.buffer_index[buffer_id])

    def pair_of(self, flat: int) -> tuple[str, str]:
        i, y = divmod(flat, self.n_buffers)
        return self.model.operands[i].id, self.model.buffers[y].id

    @cached_property
    def net(self) -> sp.csr_matrix:
        return _canonical((self.plus - self.minus).tocsr())

    @cached_property
    def row_labels(self) -> tuple[str, ...]:
        labels = []
        for operand in self.model.operands:
            for buffer in self.model.buffers:
                labels.append(f"{operand.name} at {buffer.name}")
        return tuple(labels)

    def binary_tensor(self, side: str) -> np.ndarray:
        """Binary occurrence tensor, shape (operands, buffers, capabilities)."""
        if side not in ("pull", "inject"):
            raise ValueError("side must be 'pull' or 'inject'")
        matrix = self.minus if side == "pull" else self.plus
        flat = (matrix != 0).toarray()
        return flat.reshape(self.n_operands, self.n_buffers,
                            self.n_capabilities).astype(np.uint8)

    @cached_property
    def active_rows(self) -> np.ndarray:
        """Flat indices of rows touched by at least one capability, ascending."""
        touched = np.union1d(
            np.unique(self.minus.tocoo().row), np.unique(self.plus.tocoo().row)
        )
        return touched.astype(np.int64)

    def reduced(self) -> "ReducedIncidence":
        rows = self.active_rows
        return ReducedIncidence(
            structure=self,
            rows=rows,
            minus=_canonical(self.minus[rows, :].tocsr()),
            plus=_canonical(self.plus[rows, :].tocsr()),
        )


@dataclass(frozen=True)
class ReducedIncidence:
    """Incidence matrices with all-zero (operand, buffer) rows dropped."""

    structure: IncidenceStructure
    rows: np.ndarray
    minus: sp.csr_matrix
    plus: sp.csr_matrix

    @property
    def n_rows(self) -> int:
        return len(self.rows)

    @property
    def capabilities(self) -> CapabilitySet:
        return self.structure.capabilities

    @cached_property
    def net(self) -> sp.csr_matrix:
        return _canonical((self.plus - self.minus).tocsr())

    @cached_property
    def row_labels(self) -> tuple[str, ...]:
        full = self.structure.row_labels
        return tuple(full[i] for i in self.rows)

    @cached_property
    def row_pairs(self) -> tuple[tuple[str, str], ...]:
        return tuple(self.structure.pair_of(int(i)) for i in self.rows)

    def row_of(self, operand_id: str, buffer_id: str) -> int:
        flat = self.structure.flat_index(operand_id, buffer_id)
        where = np.searchsorted(self.rows, flat)
        if where >= len(self.rows) or self.rows[where] != flat:
            raise KeyError(
                f"pair ('{operand_id}', '{buffer_id}') has no active incidence row"
            )
        return int(where)


def _check_no_duplicate_pairs(capabilities: CapabilitySet) -> None:
    for cap in capabilities:
        for side, flows in (("pull", cap.pulls), ("inject", cap.injects)):
            seen: set[tuple[str, str]] = set()
            for flow in flows:
                pair = (flow.operand, flow.buffer)
                if pair in seen:
                    raise ModelValidationError(
                        f"capability '{cap.label}' lists operand "
                        f"'{flow.operand}' at buffer '{flow.buffer}' twice in "
                        f"its {side}s; the arc weight would be ambiguous"
                    )
                seen.add(pair)


def build_incidence(model: SystemModel,
                    capabilities: CapabilitySet | None = None, *,
                    allow_kind_mismatch: bool = False) -> IncidenceStructure:
    """Assemble the weighted pull/inject incidence matrices of a model."""
    if capabilities is None:
        capabilities = enumerate_capabilities(
            model, allow_kind_mismatch=allow_kind_mismatch
        )
    _check_no_duplicate_pairs(capabilities)
    return IncidenceStructure(
        model=model,
        capabilities=capabilities,
        minus=_collect(model, capabilities, "pull"),
        plus=_collect(model, capabilities, "inject"),
    )


def eliminate_zero_rows(structure: IncidenceStructure) -> ReducedIncidence:
    """Drop all-zero (operand, buffer) rows; the original is unchanged."""
    return structure.reduced()


def kind_partition(capabilities: CapabilitySet) -> tuple[np.ndarray, np.ndarray]:
    """Column indices of conversion and transportation capabilities."""
    conv = [c.index for c in capabilities if c.process_kind.value == "transformation"]
    trans = [c.index for c in capabilities if c.process_kind.value == "transportation"]
    return np.asarray(conv, dtype=np.int64), np.asarray(trans, dtype=np.int64)
