"""Deterministic demo assets: a small event CSV, its schema, and GRU weights.

Run ``python -m seqexplain.demo DIR`` to write the files, then point the CLI
at them (see the README for the full walkthrough).
"""

from __future__ import annotations

import csv
import json
import sys
from pathlib import Path

import numpy as np

from .model import GruWeights
from .seqdata import EventSchema

DEMO_SEED = 7

DEMO_SCHEMA = EventSchema(
    feature_names=("amount", "balance_z", "channel", "hour_frac"),
    feature_kinds=("numeric", "numeric", "categorical", "numeric"),
    entity_key="account",
    order_key="timestamp",
)


def write_demo_files(directory: str | Path) -> dict[str, Path]:
    """Write events.csv, schema.json, and weights.json; returns their paths."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(DEMO_SEED)

    schema_path = directory / "schema.json"
    with open(schema_path, "w", encoding="utf-8") as fh:
        json.dump(DEMO_SCHEMA.to_dict(), fh, indent=2)
        fh.write("\n")

    events_path = directory / "events.csv"
    with open(events_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["account", "timestamp", *DEMO_SCHEMA.feature_names])
        # log-scale amounts and z-scored balances keep the demo GRU out of
        # gate saturation
        for account, length in (("acc-001", 8), ("acc-002", 6), ("acc-003", 10)):
            for t in range(length):
                amount = round(float(rng.gamma(2.0, 0.5)), 3)
                balance_z = round(float(rng.normal(0.0, 1.0)), 3)
                channel = int(rng.integers(0, 3))
                hour_frac = round(int(rng.integers(0, 24)) / 24.0, 4)
                writer.writerow([account, t, amount, balance_z, channel, hour_frac])

    weights_path = directory / "weights.json"
    GruWeights.random(
        input_dim=DEMO_SCHEMA.d, hidden_dim=6, seed=DEMO_SEED, scale=2.5
    ).save(weights_path)

    return {"schema": schema_path, "events": events_path, "weights": weights_path}


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    directory = argv[0] if argv else "demo"
    paths = write_demo_files(directory)
    for name, path in paths.items():
        print(f"{name}: {path}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
