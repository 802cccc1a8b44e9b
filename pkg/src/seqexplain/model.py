"""Black-box scoring contract and the built-in GRU reference model.

A scorer maps a batch of sequences to one real score per sequence, is
deterministic, and scores each sequence independently of the rest of the
batch. The built-in GRU exists so the explainer can be tested and demoed
without any external model process.
"""

from __future__ import annotations

import abc
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.special import expit

from .errors import DataError, DimensionError
from .seqdata import SequenceMatrix
from .wire import ProtocolConfig, WireModel, connect_protocol_model

CONCURRENCY_SERIAL = "serial"
CONCURRENCY_CONCURRENT = "concurrent"


def validate_batch(batch: Sequence[SequenceMatrix]) -> None:
    """Reject empty batches and mixed feature dimensions (lengths may vary)."""
    if len(batch) == 0:
        raise DimensionError("cannot score an empty batch")
    d = batch[0].d
    for seq in batch:
        if seq.d != d:
            raise DimensionError(f"mixed feature dimension in batch: {seq.d} != {d}")


class SequenceScorer(abc.ABC):
    """Deterministic batch scorer for sequences."""

    declared_concurrency: str = CONCURRENCY_SERIAL

    @abc.abstractmethod
    def score_batch(self, batch: Sequence[SequenceMatrix]) -> list[float]:
        """Score each sequence; results align positionally with the batch."""


# The wire client satisfies the contract without importing this module.
SequenceScorer.register(WireModel)


class CallableScorer(SequenceScorer):
    """Adapts a per-sequence function to the scorer contract."""

    def __init__(
        self,
        fn: Callable[[SequenceMatrix], float],
        concurrency: str = CONCURRENCY_CONCURRENT,
    ) -> None:
        self._fn = fn
        self.declared_concurrency = concurrency

    def score_batch(self, batch: Sequence[SequenceMatrix]) -> list[float]:
        validate_batch(batch)
        return [float(self._fn(seq)) for seq in batch]


@dataclass(eq=False)
class GruWeights:
    """Parameters of a single-layer GRU with a sigmoid scalar readout.

    Gate matrices act on the input (``w_*``, shaped hidden x input) and on the
    previous hidden state (``u_*``, hidden x hidden); biases are vectors of
    length hidden. The readout is a dot product plus bias through a sigmoid.
    """

    input_dim: int
    hidden_dim: int
    w_update: np.ndarray
    u_update: np.ndarray
    b_update: np.ndarray
    w_reset: np.ndarray
    u_reset: np.ndarray
    b_reset: np.ndarray
    w_candidate: np.ndarray
    u_candidate: np.ndarray
    b_candidate: np.ndarray
    w_readout: np.ndarray
    b_readout: float

    def __post_init__(self) -> None:
        d, h = self.input_dim, self.hidden_dim
        if d < 1 or h < 1:
            raise DataError(f"GRU dims must be positive, got input={d} hidden={h}")
        for name in (
            "w_update", "u_update", "b_update",
            "w_reset", "u_reset", "b_reset",
            "w_candidate", "u_candidate", "b_candidate",
            "w_readout",
        ):
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        self.b_readout = float(self.b_readout)
        expected = {
            "w_update": (h, d), "u_update": (h, h), "b_update": (h,),
            "w_reset": (h, d), "u_reset": (h, h), "b_reset": (h,),
            "w_candidate": (h, d), "u_candidate": (h, h), "b_candidate": (h,),
            "w_readout": (h,),
        }
        for name, shape in expected.items():
            arr = getattr(self, name)
            if arr.shape != shape:
                raise DataError(f"GRU weight {name} has shape {arr.shape}, expected {shape}")
            if not np.isfinite(arr).all():
                raise DataError(f"GRU weight {name} contains non-finite values")
        if not np.isfinite(self.b_readout):
            raise DataError("GRU readout bias is not finite")

    @classmethod
    def random(cls, input_dim: int, hidden_dim: int, seed: int, scale: float = 1.0) -> "GruWeights":
        """Seeded Gaussian initialization, variance scaled by fan-in."""
        rng = np.random.default_rng(seed)
        d, h = input_dim, hidden_dim

        def gate() -> tuple[np.ndarray, np.ndarray, np.ndarray]:
            w = rng.normal(0.0, scale / np.sqrt(d), (h, d))
            u = rng.normal(0.0, scale / np.sqrt(h), (h, h))
            b = rng.normal(0.0, 0.1 * scale, h)
            return w, u, b

        wz, uz, bz = gate()
        wr, ur, br = gate()
        wc, uc, bc = gate()
        w_out = rng.normal(0.0, scale / np.sqrt(h), h)
        return cls(d, h, wz, uz, bz, wr, ur, br, wc, uc, bc, w_out, 0.0)

    def save(self, path: str | Path) -> None:
        payload = {
            "input_dim": self.input_dim,
            "hidden_dim": self.hidden_dim,
            "w_update": self.w_update.tolist(),
            "u_update": self.u_update.tolist(),
            "b_update": self.b_update.tolist(),
            "w_reset": self.w_reset.tolist(),
            "u_reset": self.u_reset.tolist(),
            "b_reset": self.b_reset.tolist(),
            "w_candidate": self.w_candidate.tolist(),
            "u_candidate": self.u_candidate.tolist(),
            "b_candidate": self.b_candidate.tolist(),
            "w_readout": self.w_readout.tolist(),
            "b_readout": self.b_readout,
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh)
            fh.write("\n")

    @classmethod
    def load(cls, path: str | Path) -> "GruWeights":
        path = Path(path)
        if not path.exists():
            raise DataError(f"GRU weights file not found: {path}")
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        try:
            return cls(**raw)
        except TypeError as exc:
            raise DataError(f"malformed GRU weights file {path}: {exc}") from None


def gru_forward(weights: GruWeights, X: SequenceMatrix) -> float:
    """Run the recurrence over columns oldest to newest; sigmoid readout of the final state.

    Hidden state starts at zero. Per step: update gate z, reset gate r,
    candidate state through tanh, then h = (1 - z) * h_prev + z * candidate.
    """
    if X.d != weights.input_dim:
        raise DimensionError(f"sequence has d={X.d}, GRU expects {weights.input_dim}")
    h = np.zeros(weights.hidden_dim)
    for t in range(X.l):
        x = X.values[:, t]
        z = expit(weights.w_update @ x + weights.u_update @ h + weights.b_update)
        r = expit(weights.w_reset @ x + weights.u_reset @ h + weights.b_reset)
        cand = np.tanh(weights.w_candidate @ x + weights.u_candidate @ (r * h) + weights.b_candidate)
        h = (1.0 - z) * h + z * cand
    return float(expit(weights.w_readout @ h + weights.b_readout))


class GruModel(SequenceScorer):
    """Scorer wrapping the built-in GRU; pure and safe to call concurrently."""

    declared_concurrency = CONCURRENCY_CONCURRENT

    def __init__(self, weights: GruWeights) -> None:
        self.weights = weights

    def score_batch(self, batch: Sequence[SequenceMatrix]) -> list[float]:
        validate_batch(batch)
        return [gru_forward(self.weights, seq) for seq in batch]


def load_scorer(spec: str, config: ProtocolConfig | None = None) -> SequenceScorer:
    """Build a scorer from a descriptor.

    ``gru:<weights.json>`` loads the built-in GRU; ``proc:<command>`` spawns an
    adapter process speaking the wire protocol on stdio; ``tcp:<host:port>``
    connects to one over TCP.
    """
    if spec.startswith("gru:"):
        return GruModel(GruWeights.load(spec[len("gru:"):]))
    if spec.startswith(("proc:", "tcp:")):
        return connect_protocol_model(spec, config)
    raise DataError(f"unknown model descriptor {spec!r} (expected gru:, proc:, or tcp: prefix)")
