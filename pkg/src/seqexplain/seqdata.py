"""Tabular event ingestion, per-entity sequence assembly, and background construction.

A sequence is a d x l real matrix: one row per feature, one column per event,
the rightmost column being the most recent event. The background matrix holds
one uninformative value per feature, broadcast across all events; replacing a
row or column of a sequence with its background counterpart is how a feature
or event is "switched off" during perturbation.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .errors import DataError, ParseError, SchemaError

KIND_NUMERIC = "numeric"
KIND_CATEGORICAL = "categorical"

# Accepted on input, normalized to KIND_CATEGORICAL.
_KIND_ALIASES = {"categorical-encoded": KIND_CATEGORICAL}


def _mean_aggregator(values: np.ndarray) -> float:
    return float(values.mean())


def _mode_aggregator(values: np.ndarray) -> float:
    # np.unique sorts ascending, so argmax resolves count ties toward the
    # smallest encoded value.
    uniq, counts = np.unique(values, return_counts=True)
    return float(uniq[int(np.argmax(counts))])


DEFAULT_AGGREGATORS: dict[str, Callable[[np.ndarray], float]] = {
    KIND_NUMERIC: _mean_aggregator,
    KIND_CATEGORICAL: _mode_aggregator,
}


@dataclass(frozen=True)
class EventSchema:
    """Declares the column layout of an event table.

    ``feature_names`` fixes both the feature order and the feature dimension d.
    ``entity_key`` and ``order_key`` name the grouping and ordering columns.
    """

    feature_names: tuple[str, ...]
    feature_kinds: tuple[str, ...]
    entity_key: str
    order_key: str

    def __post_init__(self) -> None:
        names = tuple(self.feature_names)
        kinds = tuple(_KIND_ALIASES.get(k, k) for k in self.feature_kinds)
        object.__setattr__(self, "feature_names", names)
        object.__setattr__(self, "feature_kinds", kinds)
        if not names:
            raise SchemaError("schema declares no features")
        if any(not n for n in names):
            raise SchemaError("feature names must be non-empty")
        if len(set(names)) != len(names):
            raise SchemaError("feature names must be unique")
        if len(kinds) != len(names):
            raise SchemaError(
                f"{len(kinds)} feature kinds declared for {len(names)} features"
            )
        unknown = sorted(set(kinds) - set(DEFAULT_AGGREGATORS))
        if unknown:
            raise SchemaError(f"feature kinds without a background aggregator: {unknown}")
        if not self.entity_key or not self.order_key:
            raise SchemaError("entity_key and order_key must be non-empty")

    @property
    def d(self) -> int:
        return len(self.feature_names)

    @classmethod
    def from_dict(cls, raw: Mapping) -> "EventSchema":
        try:
            features = raw["features"]
            entity_key = raw["entity_key"]
            order_key = raw["order_key"]
        except KeyError as exc:
            raise SchemaError(f"schema file is missing key {exc.args[0]!r}") from None
        names = tuple(str(f["name"]) for f in features)
        kinds = tuple(str(f.get("kind", KIND_NUMERIC)) for f in features)
        return cls(names, kinds, str(entity_key), str(order_key))

    @classmethod
    def from_json(cls, path: str | Path) -> "EventSchema":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return {
            "entity_key": self.entity_key,
            "order_key": self.order_key,
            "features": [
                {"name": n, "kind": k}
                for n, k in zip(self.feature_names, self.feature_kinds)
            ],
        }


@dataclass(eq=False)
class SequenceMatrix:
    """One entity's ordered event history as a d x l matrix (features x events)."""

    values: np.ndarray
    entity_id: str = ""

    def __post_init__(self) -> None:
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim != 2:
            raise DataError(f"sequence values must be 2-D, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise DataError(f"sequence needs at least one feature and one event, got {arr.shape}")
        if not np.isfinite(arr).all():
            raise DataError(f"sequence for entity {self.entity_id!r} contains non-finite values")
        self.values = arr

    @property
    def d(self) -> int:
        return self.values.shape[0]

    @property
    def l(self) -> int:
        return self.values.shape[1]


@dataclass(eq=False)
class BackgroundMatrix:
    """Per-feature background values, broadcast across events on demand."""

    per_feature_values: np.ndarray
    feature_names: tuple[str, ...] = ()
    feature_kinds: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        vec = np.asarray(self.per_feature_values, dtype=np.float64)
        if vec.ndim != 1 or vec.shape[0] < 1:
            raise DataError(f"background values must be a non-empty vector, got shape {vec.shape}")
        if not np.isfinite(vec).all():
            raise DataError("background values must be finite")
        self.per_feature_values = vec
        if not self.feature_names:
            self.feature_names = tuple(f"f{i}" for i in range(vec.shape[0]))
        if not self.feature_kinds:
            self.feature_kinds = tuple(KIND_NUMERIC for _ in self.feature_names)
        if len(self.feature_names) != vec.shape[0]:
            raise DataError("background feature names do not match value count")

    @property
    def d(self) -> int:
        return self.per_feature_values.shape[0]

    def materialize(self, l: int) -> np.ndarray:
        """The d x l matrix with the background vector repeated in every column."""
        if l < 1:
            raise DataError(f"cannot materialize background over {l} events")
        return np.tile(self.per_feature_values[:, None], (1, l))

    def save(self, path: str | Path) -> None:
        payload = {
            "feature_names": list(self.feature_names),
            "values": [float(v) for v in self.per_feature_values],
            "kinds": list(self.feature_kinds),
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2)
            fh.write("\n")

    @classmethod
    def load(cls, path: str | Path) -> "BackgroundMatrix":
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        try:
            values = raw["values"]
            names = tuple(raw["feature_names"])
            kinds = tuple(raw.get("kinds", ()))
        except KeyError as exc:
            raise DataError(f"background file is missing key {exc.args[0]!r}") from None
        return cls(np.asarray(values, dtype=np.float64), names, kinds)


def _parse_feature_cell(raw: object, row_idx: int, column: str) -> float:
    try:
        value = float(raw)  # type: ignore[arg-type]
    except (TypeError, ValueError):
        raise ParseError(
            f"row {row_idx}, column {column!r}: cannot parse {raw!r} as a number"
        ) from None
    if not math.isfinite(value):
        raise ParseError(f"row {row_idx}, column {column!r}: value {raw!r} is not finite")
    return value


def _order_sort_key(order_values: list[object]) -> list:
    """Numeric ordering when every key parses as a finite number, lexicographic otherwise."""
    try:
        keys = [float(v) for v in order_values]  # type: ignore[arg-type]
    except (TypeError, ValueError):
        return [str(v) for v in order_values]
    if all(math.isfinite(k) for k in keys):
        return keys
    return [str(v) for v in order_values]


@dataclass
class _RawEvent:
    entity: str
    order: object
    features: list[float]


def _assemble(rows: list[_RawEvent]) -> list[SequenceMatrix]:
    by_entity: dict[str, list[_RawEvent]] = {}
    for row in rows:
        by_entity.setdefault(row.entity, []).append(row)
    sequences = []
    for entity, events in by_entity.items():
        keys = _order_sort_key([e.order for e in events])
        ordered = [events[i] for i in sorted(range(len(events)), key=lambda i: keys[i])]
        matrix = np.array([e.features for e in ordered], dtype=np.float64).T
        sequences.append(SequenceMatrix(matrix, entity_id=entity))
    return sequences


def _load_csv(path: Path, schema: EventSchema) -> list[_RawEvent]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            return []
        positions = {name: i for i, name in enumerate(header)}
        required = [schema.entity_key, schema.order_key, *schema.feature_names]
        for name in required:
            if name not in positions:
                raise SchemaError(f"input is missing column {name!r}")
        rows = []
        for row_idx, record in enumerate(reader):
            if not record:
                continue
            if len(record) < len(header):
                raise ParseError(f"row {row_idx}: expected {len(header)} cells, got {len(record)}")
            features = [
                _parse_feature_cell(record[positions[name]], row_idx, name)
                for name in schema.feature_names
            ]
            rows.append(
                _RawEvent(
                    entity=record[positions[schema.entity_key]],
                    order=record[positions[schema.order_key]],
                    features=features,
                )
            )
    return rows


def _load_json(path: Path, schema: EventSchema) -> list[_RawEvent]:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    if not text.strip():
        return []
    raw = json.loads(text)
    if not isinstance(raw, list):
        raise SchemaError("JSON input must be an array of event objects")
    rows = []
    for row_idx, item in enumerate(raw):
        if not isinstance(item, dict):
            raise SchemaError(f"row {row_idx}: expected an object, got {type(item).__name__}")
        for key in ("entity", "order", "features"):
            if key not in item:
                raise SchemaError(f"row {row_idx}: missing key {key!r}")
        features_raw = item["features"]
        if len(features_raw) != schema.d:
            raise SchemaError(
                f"row {row_idx}: expected {schema.d} features, got {len(features_raw)}"
            )
        features = [
            _parse_feature_cell(v, row_idx, schema.feature_names[i])
            for i, v in enumerate(features_raw)
        ]
        rows.append(_RawEvent(entity=str(item["entity"]), order=item["order"], features=features))
    return rows


def load_dataset(path: str | Path, schema: EventSchema) -> list[SequenceMatrix]:
    """Load an event table and assemble one sequence per entity.

    CSV files need a header row containing the schema's entity, order, and
    feature columns; extra columns are ignored. JSON files hold an array of
    ``{"entity": ..., "order": ..., "features": [...]}`` objects with features
    in schema order. Events are sorted by the order column, input order
    breaking ties; an empty file yields an empty list.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"input file not found: {path}")
    if path.suffix.lower() == ".json":
        rows = _load_json(path, schema)
    else:
        rows = _load_csv(path, schema)
    return _assemble(rows)


def save_dataset(sequences: Iterable[SequenceMatrix], path: str | Path) -> None:
    """Write sequences to the JSON interchange format (loadable by load_dataset).

    Order keys are rewritten to 0..l-1 per entity; feature values round-trip
    exactly through the decimal representation JSON uses for doubles.
    """
    records = []
    for seq in sequences:
        for j in range(seq.l):
            records.append(
                {
                    "entity": seq.entity_id,
                    "order": j,
                    "features": [float(v) for v in seq.values[:, j]],
                }
            )
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(records, fh)
        fh.write("\n")


def build_background(
    data: Sequence[SequenceMatrix],
    schema: EventSchema,
    aggregators: Mapping[str, Callable[[np.ndarray], float]] | None = None,
) -> BackgroundMatrix:
    """Aggregate every event of every sequence into one background value per feature.

    Numeric features take the arithmetic mean; categorical-encoded features
    take the mode, ties resolved toward the smallest encoded value. Pass
    ``aggregators`` to override the rule for a kind.
    """
    data = list(data)
    if not data:
        raise DataError("cannot build a background from zero sequences")
    d = data[0].d
    for seq in data:
        if seq.d != d:
            raise DataError(
                f"mixed feature dimension: entity {seq.entity_id!r} has d={seq.d}, expected {d}"
            )
    if d != schema.d:
        raise SchemaError(f"data has d={d} features but schema declares {schema.d}")
    rules = dict(DEFAULT_AGGREGATORS)
    if aggregators:
        rules.update(aggregators)
    missing = sorted(set(schema.feature_kinds) - set(rules))
    if missing:
        raise SchemaError(f"no aggregator for feature kinds: {missing}")

    values = np.empty(d, dtype=np.float64)
    for i, kind in enumerate(schema.feature_kinds):
        pooled = np.concatenate([seq.values[i, :] for seq in data])
        values[i] = rules[kind](pooled)
    return BackgroundMatrix(values, schema.feature_names, schema.feature_kinds)
