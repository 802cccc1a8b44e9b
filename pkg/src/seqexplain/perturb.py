"""Coalition-to-input perturbations along the feature, event, and cell axes.

A coalition bit of 1 keeps the original value; a bit of 0 substitutes the
background. Feature coalitions toggle whole rows, event coalitions whole
columns, and cell coalitions arbitrary disjoint groups of matrix cells.
Inputs are never mutated; every call returns a fresh matrix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError
from .seqdata import BackgroundMatrix, SequenceMatrix

AXIS_FEATURES = "features"
AXIS_EVENTS = "events"
AXIS_CELLS = "cells"
AXES = (AXIS_FEATURES, AXIS_EVENTS, AXIS_CELLS)


@dataclass(eq=False)
class CoalitionVector:
    """Binary membership vector over the players of one axis."""

    bits: np.ndarray
    axis: str

    def __post_init__(self) -> None:
        bits = np.asarray(self.bits)
        if bits.ndim != 1 or bits.shape[0] < 1:
            raise DimensionError(f"coalition bits must be a non-empty vector, got shape {bits.shape}")
        if not np.isin(bits, (0, 1)).all():
            raise DimensionError("coalition bits must be 0 or 1")
        if self.axis not in AXES:
            raise DimensionError(f"unknown axis {self.axis!r}")
        self.bits = bits.astype(np.uint8)

    @property
    def m(self) -> int:
        return self.bits.shape[0]

    @property
    def size(self) -> int:
        """Number of members, |z|."""
        return int(self.bits.sum())


@dataclass(eq=False)
class CoalitionMatrix:
    """Binary membership matrix over individual cells, shaped like the input."""

    bits: np.ndarray

    def __post_init__(self) -> None:
        bits = np.asarray(self.bits)
        if bits.ndim != 2:
            raise DimensionError(f"coalition matrix must be 2-D, got shape {bits.shape}")
        if not np.isin(bits, (0, 1)).all():
            raise DimensionError("coalition matrix entries must be 0 or 1")
        self.bits = bits.astype(np.uint8)


def _vector_bits(z: CoalitionVector | np.ndarray, axis: str) -> np.ndarray:
    if isinstance(z, CoalitionVector):
        if z.axis != axis:
            raise DimensionError(f"coalition is tagged {z.axis!r}, expected {axis!r}")
        return z.bits
    return CoalitionVector(np.asarray(z), axis).bits


def perturb_features(
    X: SequenceMatrix, z: CoalitionVector | np.ndarray, B: BackgroundMatrix
) -> SequenceMatrix:
    """Keep rows with bit 1, replace rows with bit 0 by their background row."""
    bits = _vector_bits(z, AXIS_FEATURES)
    if bits.shape[0] != X.d:
        raise DimensionError(f"feature coalition has {bits.shape[0]} bits for d={X.d}")
    if B.d != X.d:
        raise DimensionError(f"background has d={B.d}, sequence has d={X.d}")
    out = np.where(bits[:, None].astype(bool), X.values, B.materialize(X.l))
    return SequenceMatrix(out, entity_id=X.entity_id)


def perturb_events(
    X: SequenceMatrix, z: CoalitionVector | np.ndarray, B: BackgroundMatrix
) -> SequenceMatrix:
    """Keep columns with bit 1, replace columns with bit 0 by the background column."""
    bits = _vector_bits(z, AXIS_EVENTS)
    if bits.shape[0] != X.l:
        raise DimensionError(f"event coalition has {bits.shape[0]} bits for l={X.l}")
    if B.d != X.d:
        raise DimensionError(f"background has d={B.d}, sequence has d={X.d}")
    out = np.where(bits[None, :].astype(bool), X.values, B.materialize(X.l))
    return SequenceMatrix(out, entity_id=X.entity_id)


def perturb_cells(
    X: SequenceMatrix, Z: CoalitionMatrix | np.ndarray, B: BackgroundMatrix
) -> SequenceMatrix:
    """Elementwise select: original where the cell bit is 1, background where 0."""
    bits = Z.bits if isinstance(Z, CoalitionMatrix) else CoalitionMatrix(np.asarray(Z)).bits
    if bits.shape != X.values.shape:
        raise DimensionError(f"coalition matrix shape {bits.shape} != sequence shape {X.values.shape}")
    if B.d != X.d:
        raise DimensionError(f"background has d={B.d}, sequence has d={X.d}")
    out = np.where(bits.astype(bool), X.values, B.materialize(X.l))
    return SequenceMatrix(out, entity_id=X.entity_id)
