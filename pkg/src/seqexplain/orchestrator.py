"""End-to-end explanation pipelines: events, features, cell groups, and aggregation.

Event explanations fold the pruned prefix into a single player. Feature
explanations always use the full sequence. Cell explanations partition the
d x l grid into disjoint groups driven by which events and features crossed
the relevance threshold, then attribute the score over those groups.
"""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DataError, DimensionError, SeqExplainError
from .kernel import (
    AXIS_EVENTS,
    AXIS_FEATURES,
    ExplanationResult,
    SamplerConfig,
    event_label,
    explain_game,
    shapley_explain,
)
from .perturb import AXIS_CELLS, perturb_cells, perturb_events
from .pruning import PruneConfig, PruneOutcome, prune_index
from .seqdata import BackgroundMatrix, SequenceMatrix

PRUNED_LABEL = "pruned_prefix"


@dataclass(frozen=True)
class CellConfig:
    """Absolute-attribution threshold selecting relevant events and features."""

    theta: float = 0.1

    def __post_init__(self) -> None:
        if self.theta < 0:
            raise DimensionError(f"theta must be non-negative, got {self.theta}")


def explain_events(
    scorer,
    X: SequenceMatrix,
    B: BackgroundMatrix,
    prune: PruneOutcome,
    config: SamplerConfig,
) -> ExplanationResult:
    """Event-axis attributions with the pruned prefix folded into one player.

    Players are the grouped prefix (when the prune index is positive)
    followed by each remaining event, oldest first; the most recent event is
    labeled t=0. The prefix player's coalition bit toggles every pruned
    column at once.
    """
    i = prune.prune_index
    if i == 0:
        return shapley_explain(scorer, X, B, AXIS_EVENTS, config)
    if not 0 < i < X.l:
        raise DimensionError(f"prune index {i} out of range for l={X.l}")
    labels = (PRUNED_LABEL, *(event_label(j, X.l) for j in range(i, X.l)))
    m = (X.l - i) + 1

    def build(bits: np.ndarray) -> SequenceMatrix:
        z = np.empty(X.l, dtype=np.uint8)
        z[:i] = bits[0]
        z[i:] = bits[1:]
        return perturb_events(X, z, B)

    return explain_game(scorer, m, build, config, axis=AXIS_EVENTS, player_labels=labels)


def explain_features(
    scorer,
    X: SequenceMatrix,
    B: BackgroundMatrix,
    config: SamplerConfig,
) -> ExplanationResult:
    """Feature-axis attributions over the full sequence; pruning never applies."""
    return shapley_explain(scorer, X, B, AXIS_FEATURES, config)


@dataclass(frozen=True)
class CellGroup:
    """A labeled set of (feature, event) cells acting as one player."""

    label: str
    kind: str  # pruned | cell | event_rest | feature_rest | rest
    cells: tuple[tuple[int, int], ...]


@dataclass(eq=False)
class CellPartition:
    """Disjoint cell groups covering the whole d x l grid."""

    groups: tuple[CellGroup, ...]
    relevant_features: tuple[int, ...]
    relevant_events: tuple[int, ...]
    d: int
    l: int
    prune_index: int

    @property
    def k(self) -> int:
        return len(self.groups)

    def validate(self) -> None:
        """Every cell in exactly one group."""
        coverage = np.zeros((self.d, self.l), dtype=np.int64)
        for group in self.groups:
            for f, e in group.cells:
                coverage[f, e] += 1
        if not (coverage == 1).all():
            bad = np.argwhere(coverage != 1)[:5].tolist()
            raise SeqExplainError(f"cell partition is not a partition; first bad cells: {bad}")

    def coalition_matrix(self, bits: np.ndarray) -> np.ndarray:
        """Expand per-group bits to a d x l cell coalition matrix."""
        if bits.shape[0] != self.k:
            raise DimensionError(f"{bits.shape[0]} bits for {self.k} groups")
        Z = np.zeros((self.d, self.l), dtype=np.uint8)
        for group, bit in zip(self.groups, bits):
            if bit:
                for f, e in group.cells:
                    Z[f, e] = 1
        return Z


def build_cell_partition(
    event_attrs: ExplanationResult,
    feature_attrs: ExplanationResult,
    prune: PruneOutcome,
    dims: tuple[int, int],
    config: CellConfig,
) -> CellPartition:
    """Partition the grid from relevance: pruned block, intersections, rests.

    Events and features whose absolute attribution exceeds theta are
    relevant (the grouped prefix never is). Groups, in order: the pruned
    block, one single-cell group per relevant (feature, event) pair, the
    remaining cells of each relevant event, the remaining unpruned cells of
    each relevant feature, and one group for everything left. Empty groups
    are dropped.
    """
    d, l = dims
    if event_attrs.axis != AXIS_EVENTS or feature_attrs.axis != AXIS_FEATURES:
        raise DimensionError("cell partition needs one event-axis and one feature-axis result")
    if feature_attrs.m != d:
        raise DimensionError(f"feature attributions have m={feature_attrs.m}, expected d={d}")

    i = prune.prune_index
    has_prefix = event_attrs.player_labels[:1] == (PRUNED_LABEL,)
    expected_players = (l - i) + 1 if i > 0 else l
    if event_attrs.m != expected_players or (i > 0) != has_prefix:
        raise DimensionError("event attributions do not match the prune outcome")

    feature_relevant = [
        f for f in range(d) if abs(feature_attrs.attributions[f]) > config.theta
    ]
    # With a prefix player, event player p >= 1 sits at column i + (p - 1);
    # the prefix itself (p = 0) is never a relevant event.
    first_event_player = 1 if i > 0 else 0
    event_relevant = [
        i + (p - first_event_player)
        for p in range(first_event_player, event_attrs.m)
        if abs(event_attrs.attributions[p]) > config.theta
    ]

    feature_set = set(feature_relevant)
    event_set = set(event_relevant)
    feature_names = feature_attrs.player_labels

    groups: list[CellGroup] = []
    if i > 0:
        pruned_cells = tuple((f, e) for f in range(d) for e in range(i))
        groups.append(CellGroup("pruned", "pruned", pruned_cells))
    for f in feature_relevant:
        for e in event_relevant:
            label = f"{feature_names[f]}|{event_label(e, l)}"
            groups.append(CellGroup(label, "cell", ((f, e),)))
    for e in event_relevant:
        cells = tuple((f, e) for f in range(d) if f not in feature_set)
        if cells:
            groups.append(CellGroup(f"others|{event_label(e, l)}", "event_rest", cells))
    for f in feature_relevant:
        cells = tuple((f, e) for e in range(i, l) if e not in event_set)
        if cells:
            groups.append(CellGroup(f"{feature_names[f]}|others", "feature_rest", cells))
    rest = tuple(
        (f, e)
        for f in range(d)
        for e in range(i, l)
        if f not in feature_set and e not in event_set
    )
    if rest:
        groups.append(CellGroup("others", "rest", rest))

    partition = CellPartition(
        tuple(groups),
        tuple(feature_relevant),
        tuple(event_relevant),
        d,
        l,
        i,
    )
    partition.validate()
    return partition


def explain_cells(
    scorer,
    X: SequenceMatrix,
    B: BackgroundMatrix,
    partition: CellPartition,
    config: SamplerConfig,
) -> ExplanationResult:
    """Attribute the score over the partition's cell groups."""
    if (partition.d, partition.l) != (X.d, X.l):
        raise DimensionError(
            f"partition is for a {partition.d}x{partition.l} grid, sequence is {X.d}x{X.l}"
        )
    labels = tuple(g.label for g in partition.groups)

    def build(bits: np.ndarray) -> SequenceMatrix:
        return perturb_cells(X, partition.coalition_matrix(bits), B)

    return explain_game(
        scorer, partition.k, build, config, axis=AXIS_CELLS, player_labels=labels
    )


@dataclass(eq=False)
class SequenceExplanation:
    """Everything computed for one sequence, ready for serialization."""

    entity_id: str
    score: float
    base_score: float
    prune: PruneOutcome | None = None
    events: ExplanationResult | None = None
    features: ExplanationResult | None = None
    cells: ExplanationResult | None = None
    partition: CellPartition | None = None

    def n_evaluations(self) -> int:
        total = self.prune.evaluations_used if self.prune else 0
        for result in (self.events, self.features, self.cells):
            if result is not None:
                total += result.n_evaluations
        return total


MODE_EVENT = "event"
MODE_FEATURE = "feature"
MODE_CELL = "cell"
MODE_ALL = "all"
MODES = (MODE_EVENT, MODE_FEATURE, MODE_CELL, MODE_ALL)


def explain_sequence(
    scorer,
    X: SequenceMatrix,
    B: BackgroundMatrix,
    mode: str,
    sampler: SamplerConfig,
    prune_config: PruneConfig,
    cell_config: CellConfig,
) -> SequenceExplanation:
    """Run the pipelines a mode needs: cell explanations consume event and
    feature results, so those are computed on the way."""
    if mode not in MODES:
        raise DataError(f"unknown mode {mode!r}, expected one of {MODES}")
    need_events = mode in (MODE_EVENT, MODE_CELL, MODE_ALL)
    need_features = mode in (MODE_FEATURE, MODE_CELL, MODE_ALL)
    need_cells = mode in (MODE_CELL, MODE_ALL)

    prune = events = features = cells = partition = None
    if need_events:
        prune = prune_index(scorer, X, B, prune_config)
        events = explain_events(scorer, X, B, prune, sampler)
    if need_features:
        features = explain_features(scorer, X, B, sampler)
    if need_cells:
        assert events is not None and features is not None and prune is not None
        partition = build_cell_partition(events, features, prune, (X.d, X.l), cell_config)
        cells = explain_cells(scorer, X, B, partition, sampler)

    anchor = events if events is not None else features
    assert anchor is not None
    return SequenceExplanation(
        entity_id=X.entity_id,
        score=anchor.full_score,
        base_score=anchor.base_score,
        prune=prune,
        events=events,
        features=features,
        cells=cells,
        partition=partition,
    )


def _event_entries(result: ExplanationResult) -> list[dict]:
    entries: list[dict] = []
    for label, value in zip(result.player_labels, result.attributions):
        if label == PRUNED_LABEL:
            entries.append({"t": "pruned", "value": float(value)})
        else:
            entries.append({"t": int(label.removeprefix("t=")), "value": float(value)})
    return entries


def explanation_to_dict(explanation: SequenceExplanation, mode: str) -> dict:
    """Per-sequence output document; keys appear only for computed axes."""
    doc: dict = {
        "entity": explanation.entity_id,
        "score": explanation.score,
        "base_score": explanation.base_score,
    }
    emit_events = mode in (MODE_EVENT, MODE_ALL)
    emit_features = mode in (MODE_FEATURE, MODE_ALL)
    emit_cells = mode in (MODE_CELL, MODE_ALL)
    if explanation.prune is not None and mode != MODE_FEATURE:
        doc["prune_index"] = explanation.prune.prune_index
    exact: dict = {}
    if emit_events and explanation.events is not None:
        doc["events"] = _event_entries(explanation.events)
        exact["events"] = explanation.events.exact
    if emit_features and explanation.features is not None:
        doc["features"] = [
            {"name": name, "value": float(value)}
            for name, value in zip(
                explanation.features.player_labels, explanation.features.attributions
            )
        ]
        exact["features"] = explanation.features.exact
    if emit_cells and explanation.cells is not None and explanation.partition is not None:
        doc["cells"] = [
            {
                "group": group.label,
                "members": [[f, e] for f, e in group.cells],
                "value": float(value),
            }
            for group, value in zip(
                explanation.partition.groups, explanation.cells.attributions
            )
        ]
        exact["cells"] = explanation.cells.exact
    doc["exact"] = exact
    return doc


@dataclass(eq=False)
class GlobalReport:
    """Corpus-level pruning statistics and per-event-index attribution pools."""

    n_sequences: int
    n_samples: int
    mean_pruned_length: float
    median_pruned_length: float
    max_pruned_length: int
    pct_below_log2_samples: float
    event_value_distributions: dict[str, list[float]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "n_sequences": self.n_sequences,
            "n_samples": self.n_samples,
            "mean_pruned_length": self.mean_pruned_length,
            "median_pruned_length": self.median_pruned_length,
            "max_pruned_length": self.max_pruned_length,
            "pct_below_log2_samples": self.pct_below_log2_samples,
            "event_value_distributions": self.event_value_distributions,
        }


def _distribution_key_order(key: str) -> tuple[int, int]:
    if key == "pruned":
        return (1, 0)
    return (0, -int(key))


def global_aggregate(results: Iterable[Mapping], n_samples: int) -> GlobalReport:
    """Aggregate per-sequence event explanations into corpus statistics.

    The pruned length of a sequence counts the grouped prefix as one event,
    which is simply the number of entries in its events list. The percentile
    statistic is the share of sequences whose pruned length is under
    log2(n_samples), i.e. those whose event explanation is exact at that
    budget.
    """
    lengths: list[int] = []
    distributions: dict[str, list[float]] = {}
    for doc in results:
        events = doc.get("events")
        if events is None:
            raise DataError(
                f"sequence {doc.get('entity')!r} has no event explanation to aggregate"
            )
        lengths.append(len(events))
        for entry in events:
            key = "pruned" if entry["t"] == "pruned" else str(entry["t"])
            distributions.setdefault(key, []).append(float(entry["value"]))
    if not lengths:
        raise DataError("nothing to aggregate")
    threshold = math.log2(n_samples)
    below = sum(1 for length in lengths if length < threshold)
    ordered = dict(
        sorted(distributions.items(), key=lambda kv: _distribution_key_order(kv[0]))
    )
    return GlobalReport(
        n_sequences=len(lengths),
        n_samples=n_samples,
        mean_pruned_length=float(np.mean(lengths)),
        median_pruned_length=float(statistics.median(lengths)),
        max_pruned_length=int(max(lengths)),
        pct_below_log2_samples=100.0 * below / len(lengths),
        event_value_distributions=ordered,
    )


_RSD_MEAN_FLOOR = 1e-12


def rsd(repeated_runs: Sequence[Sequence[float]]) -> float:
    """Mean relative standard deviation of attributions across repeated runs.

    Per player: sample standard deviation divided by the magnitude of the
    mean, skipping players whose mean is numerically zero. Raises when every
    player is skipped.
    """
    arr = np.asarray(repeated_runs, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 2:
        raise DataError(f"need at least two aligned runs, got shape {arr.shape}")
    means = arr.mean(axis=0)
    stds = arr.std(axis=0, ddof=1)
    keep = np.abs(means) > _RSD_MEAN_FLOOR
    if not keep.any():
        raise DataError("RSD is undefined: every player's mean attribution is ~0")
    return float((stds[keep] / np.abs(means[keep])).mean())
