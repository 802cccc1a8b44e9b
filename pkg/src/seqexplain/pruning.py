"""Temporal coalition pruning: group old events whose aggregate importance is negligible.

Each candidate split treats the sequence as a two-player game, prefix versus
suffix, whose exact Shapley values need only the four event coalitions
{00, 01, 10, 11}. Scanning splits from the end of the sequence, the first
split whose prefix importance falls below the tolerance is the pruning point:
everything before it can be explained as a single grouped player, shrinking
the downstream coalition space exponentially.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError
from .perturb import perturb_events
from .seqdata import BackgroundMatrix, SequenceMatrix


@dataclass(frozen=True)
class PruneConfig:
    """Tolerance below which a prefix's aggregate importance is negligible."""

    eta: float = 0.025

    def __post_init__(self) -> None:
        if self.eta < 0:
            raise DimensionError(f"eta must be non-negative, got {self.eta}")


@dataclass(frozen=True)
class PruneOutcome:
    """Chosen split: events 1..prune_index are grouped; 0 means no pruning.

    ``prefix_importance`` is the prefix Shapley value at the returned split
    (the last scanned split when nothing qualified, 0.0 for single-event
    sequences).
    """

    prune_index: int
    prefix_importance: float
    evaluations_used: int


@dataclass(frozen=True)
class SplitImportance:
    """Two-player Shapley values at one split: prefix w1, suffix w2."""

    i: int
    w1: float
    w2: float


def _split_inputs(X: SequenceMatrix, B: BackgroundMatrix, i: int) -> tuple[SequenceMatrix, SequenceMatrix]:
    prefix_only = np.zeros(X.l, dtype=np.uint8)
    prefix_only[:i] = 1
    return perturb_events(X, prefix_only, B), perturb_events(X, 1 - prefix_only, B)


def _two_player_values(f00: float, f01: float, f10: float, f11: float) -> tuple[float, float]:
    # Exact two-player Shapley: average the marginal contribution over both
    # arrival orders.
    w1 = 0.5 * ((f10 - f00) + (f11 - f01))
    w2 = 0.5 * ((f01 - f00) + (f11 - f10))
    return w1, w2


def two_split_shapley(
    scorer, X: SequenceMatrix, i: int, B: BackgroundMatrix
) -> tuple[float, float]:
    """Exact Shapley values of (events 1..i, events i+1..l) from four evaluations."""
    if not 1 <= i <= X.l - 1:
        raise DimensionError(f"split index must be in [1, {X.l - 1}], got {i}")
    prefix_input, suffix_input = _split_inputs(X, B, i)
    background = perturb_events(X, np.zeros(X.l, dtype=np.uint8), B)
    f00, f01, f10, f11 = scorer.score_batch([background, suffix_input, prefix_input, X])
    return _two_player_values(f00, f01, f10, f11)


def prune_index(
    scorer, X: SequenceMatrix, B: BackgroundMatrix, config: PruneConfig
) -> PruneOutcome:
    """Largest split whose prefix importance is under the tolerance, scanning from the end.

    f(X) and f(background) are evaluated once and reused, so the scan costs
    two evaluations per split plus two upfront. Returns index 0 when no split
    qualifies.
    """
    if X.l == 1:
        return PruneOutcome(0, 0.0, 0)
    background = perturb_events(X, np.zeros(X.l, dtype=np.uint8), B)
    f00, f11 = scorer.score_batch([background, X])
    evaluations = 2
    w1 = 0.0
    for i in range(X.l - 1, 0, -1):
        prefix_input, suffix_input = _split_inputs(X, B, i)
        f10, f01 = scorer.score_batch([prefix_input, suffix_input])
        evaluations += 2
        w1, _ = _two_player_values(f00, f01, f10, f11)
        if abs(w1) < config.eta:
            return PruneOutcome(i, w1, evaluations)
    return PruneOutcome(0, w1, evaluations)


def prune_scan(scorer, X: SequenceMatrix, B: BackgroundMatrix) -> list[SplitImportance]:
    """Prefix/suffix importances at every split, for diagnostics and plots.

    Issues exactly 2(l-1) + 2 model evaluations regardless of any tolerance;
    the series is ordered by ascending split index.
    """
    if X.l < 2:
        raise DimensionError(f"a scan needs at least two events, got l={X.l}")
    background = perturb_events(X, np.zeros(X.l, dtype=np.uint8), B)
    f00, f11 = scorer.score_batch([background, X])
    series = []
    # Chunked so long sequences do not materialize 2(l-1) matrices at once.
    chunk = 256
    for start in range(1, X.l, chunk):
        splits = range(start, min(start + chunk, X.l))
        batch: list[SequenceMatrix] = []
        for i in splits:
            prefix_input, suffix_input = _split_inputs(X, B, i)
            batch.extend((prefix_input, suffix_input))
        scores = scorer.score_batch(batch)
        for idx, i in enumerate(splits):
            f10, f01 = scores[2 * idx], scores[2 * idx + 1]
            w1, w2 = _two_player_values(f00, f01, f10, f11)
            series.append(SplitImportance(i, w1, w2))
    return series
