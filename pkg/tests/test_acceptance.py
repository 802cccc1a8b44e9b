"""Acceptance suite: one test per criterion, each printing a pass/fail line.

Run with ``pytest -s tests/test_acceptance.py`` to see the per-criterion
lines as they complete.
"""

import json
import math
import time
from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np
import pytest

from helpers import (
    CountingScorer,
    exact_shapley_by_permutations,
    last_k_scorer,
    random_sequence,
)
from seqexplain import (
    BackgroundMatrix,
    CallableScorer,
    CellConfig,
    GruModel,
    GruWeights,
    PruneConfig,
    PruneOutcome,
    SamplerConfig,
    SequenceMatrix,
    build_cell_partition,
    explain_cells,
    explain_events,
    prune_index,
    prune_scan,
    rsd,
    shapley_explain,
)
from seqexplain.cli import main as cli_main
from seqexplain.orchestrator import PRUNED_LABEL
from tests_acceptance_corpus import write_corpus


@contextmanager
def criterion(number: int, description: str):
    started = time.monotonic()
    try:
        yield
    except BaseException:
        print(f"[FAIL] criterion {number}: {description}")
        raise
    print(f"[PASS] criterion {number}: {description} ({time.monotonic() - started:.1f}s)")


@dataclass
class OracleRun:
    axis: str
    attributions: np.ndarray
    oracle: np.ndarray
    conservation_gap: float


@pytest.fixture(scope="module")
def oracle_runs():
    """50 seeded GRUs (d <= 6, l <= 6), explained exactly on both axes."""
    from helpers import event_game, feature_game

    started = time.monotonic()
    runs: list[OracleRun] = []
    rng = np.random.default_rng(2024)
    for case in range(50):
        d = int(rng.integers(2, 7))
        l = int(rng.integers(2, 7))
        model = GruModel(GruWeights.random(d, 5, seed=3000 + case, scale=1.5))
        X = random_sequence(d, l, seed=4000 + case)
        B = BackgroundMatrix(np.random.default_rng(5000 + case).normal(0, 0.5, d))
        for axis, m, game in (
            ("features", d, feature_game(model, X, B)),
            ("events", l, event_game(model, X, B)),
        ):
            result = shapley_explain(model, X, B, axis, SamplerConfig(seed=case))
            assert result.exact
            runs.append(
                OracleRun(
                    axis,
                    result.attributions,
                    exact_shapley_by_permutations(game, m),
                    result.conservation_gap(),
                )
            )
    return runs, time.monotonic() - started


def test_criterion_1_exact_shapley_oracle_equivalence(oracle_runs):
    runs, elapsed = oracle_runs
    with criterion(1, "exact-mode attributions match the permutation oracle (1e-6)"):
        assert len(runs) == 100  # 50 models x 2 axes
        for run in runs:
            np.testing.assert_allclose(run.attributions, run.oracle, atol=1e-6)
        assert elapsed < 60.0, f"oracle sweep took {elapsed:.1f}s, budget is 60s"


def test_criterion_2_local_accuracy(oracle_runs):
    runs, _ = oracle_runs
    with criterion(2, "local accuracy holds in exact and sampled modes (1e-8)"):
        for run in runs:
            assert abs(run.conservation_gap) < 1e-8
        B = BackgroundMatrix(np.zeros(3))
        for case in range(50):
            model = GruModel(GruWeights.random(3, 4, seed=6000 + case, scale=1.3))
            X = random_sequence(3, 20, seed=7000 + case)
            result = shapley_explain(
                model, X, B, "events", SamplerConfig(n_samples=1000, seed=case)
            )
            assert not result.exact
            assert result.m == 20
            assert abs(result.conservation_gap()) < 1e-8
            f_x = model.score_batch([X])[0]
            assert result.full_score == pytest.approx(f_x, abs=1e-12)


def test_criterion_3_missingness_and_symmetry():
    with criterion(3, "missingness and symmetry on constructed cases (1e-8)"):
        # feature row pinned to its background value
        B = BackgroundMatrix(np.array([0.4, 0.0, -0.2]))
        values = np.random.default_rng(1).normal(0, 1, (3, 5))
        values[0, :] = 0.4
        X = SequenceMatrix(values, "x")
        model = GruModel(GruWeights.random(3, 4, seed=8))
        features = shapley_explain(model, X, B, "features", SamplerConfig(seed=0))
        assert abs(features.attributions[0]) < 1e-8

        # event column pinned to the background column
        values = np.random.default_rng(2).normal(0, 1, (3, 5))
        values[:, 2] = B.per_feature_values
        X = SequenceMatrix(values, "x")
        events = shapley_explain(model, X, B, "events", SamplerConfig(seed=0))
        assert abs(events.attributions[2]) < 1e-8

        # duplicated symmetric feature players
        scorer = CallableScorer(
            lambda s: float(np.tanh(s.values[0].sum() + s.values[1].sum() - 0.3 * s.values[2].sum()))
        )
        X = SequenceMatrix(np.array([[0.6, -0.2], [0.6, -0.2], [0.9, 0.1]]), "x")
        B0 = BackgroundMatrix(np.zeros(3))
        result = shapley_explain(scorer, X, B0, "features", SamplerConfig(seed=0))
        assert result.attributions[0] == pytest.approx(result.attributions[1], abs=1e-8)

        # duplicated symmetric event players under a column-symmetric model
        col_scorer = CallableScorer(lambda s: float(np.tanh(s.values.sum())))
        values = np.random.default_rng(3).normal(0, 1, (3, 5))
        values[:, 1] = values[:, 3]
        X = SequenceMatrix(values, "x")
        result = shapley_explain(col_scorer, X, B0, "events", SamplerConfig(seed=0))
        assert result.attributions[1] == pytest.approx(result.attributions[3], abs=1e-8)


def test_criterion_4_pruning_correctness():
    with criterion(4, "pruning for last-k scorers: index bound, players, conservation, call count"):
        l = 50
        B = BackgroundMatrix(np.zeros(3))
        for k in (1, 2, 3):
            scorer = last_k_scorer(k)
            X = random_sequence(3, l, seed=40 + k)
            outcome = prune_index(scorer, X, B, PruneConfig(0.025))
            assert outcome.prune_index >= l - k - 1

            events = explain_events(scorer, X, B, outcome, SamplerConfig(seed=k))
            assert events.m == (l - outcome.prune_index) + 1

            f_x = scorer.score_batch([X])[0]
            f_b = scorer.score_batch([SequenceMatrix(B.materialize(l), "b")])[0]
            counter = CountingScorer(scorer)
            series = prune_scan(counter, X, B)
            assert counter.evaluations == 2 * (l - 1) + 2
            for split in series:
                assert split.w1 + split.w2 == pytest.approx(f_x - f_b, abs=1e-8)


def test_criterion_5_variance_trend():
    with criterion(5, "pruning lowers RSD; non-increasing across the eta ladder"):
        started = time.monotonic()
        d, l, repeats, n_samples = 4, 100, 10, 500
        weights = GruWeights.random(d, 6, seed=5, scale=1.5)
        weights.b_update = weights.b_update - 3.0  # slow update gate: long memory
        model = GruModel(weights)
        X = SequenceMatrix(np.random.default_rng(6).normal(0, 1, (d, l)), "x")
        B = BackgroundMatrix(np.zeros(d))

        ladder = (0.0, 0.01, 0.025, 0.05)
        mean_rsd = {}
        for eta in ladder:
            outcome = prune_index(model, X, B, PruneConfig(eta))
            runs = [
                explain_events(
                    model, X, B, outcome, SamplerConfig(n_samples=n_samples, seed=1000 + r)
                ).attributions
                for r in range(repeats)
            ]
            mean_rsd[eta] = rsd(runs)
        print(f"  rsd by eta: { {k: round(v, 4) for k, v in mean_rsd.items()} }")

        assert mean_rsd[0.025] < mean_rsd[0.0]
        inversions = 0
        for low, high in zip(ladder, ladder[1:]):
            if mean_rsd[high] > mean_rsd[low]:
                inversions += 1
                assert mean_rsd[high] <= mean_rsd[low] * 1.05, (
                    f"inversion beyond 5%: rsd({high})={mean_rsd[high]} vs rsd({low})={mean_rsd[low]}"
                )
        assert inversions <= 1
        elapsed = time.monotonic() - started
        assert elapsed < 600.0, f"variance study took {elapsed:.1f}s, budget is 600s"


def test_criterion_6_cell_partition():
    with criterion(6, "cell partitions: disjoint cover, group-count formula, local accuracy"):
        from seqexplain import ExplanationResult

        rng = np.random.default_rng(66)
        for case in range(100):
            d = int(rng.integers(2, 6))
            l = int(rng.integers(2, 7))
            i = int(rng.integers(0, l))
            theta = float(rng.uniform(0.0, 1.0))
            n_event_players = (l - i) + 1 if i > 0 else l
            if i > 0:
                event_labels = (PRUNED_LABEL, *(f"t={j - (l - 1)}" for j in range(i, l)))
            else:
                event_labels = tuple(f"t={j - (l - 1)}" for j in range(l))
            event_attrs = ExplanationResult(
                "events", event_labels, rng.normal(0, 0.8, n_event_players), 0.0, 0.0, True, 0
            )
            feature_attrs = ExplanationResult(
                "features",
                tuple(f"f{j}" for j in range(d)),
                rng.normal(0, 0.8, d),
                0.0, 0.0, True, 0,
            )
            partition = build_cell_partition(
                event_attrs, feature_attrs, PruneOutcome(i, 0.0, 0), (d, l), CellConfig(theta)
            )
            partition.validate()

            n_f = len(partition.relevant_features)
            n_e = len(partition.relevant_events)
            unpruned_non_relevant = (l - i) - n_e
            expected = n_f * n_e
            expected += n_e if n_f < d else 0
            expected += n_f if unpruned_non_relevant > 0 else 0
            expected += 1 if i > 0 else 0
            expected += 1 if (n_f < d and unpruned_non_relevant > 0) else 0
            assert partition.k == expected

            model = GruModel(GruWeights.random(d, 4, seed=9000 + case, scale=1.2))
            X = random_sequence(d, l, seed=9500 + case)
            B = BackgroundMatrix(np.zeros(d))
            cells = explain_cells(model, X, B, partition, SamplerConfig(n_samples=256, seed=case))
            f_x = model.score_batch([X])[0]
            f_b = model.score_batch([SequenceMatrix(B.materialize(l), "b")])[0]
            assert cells.base_score == pytest.approx(f_b, abs=1e-12)
            assert float(cells.attributions.sum()) == pytest.approx(f_x - f_b, abs=1e-8)


def test_criterion_7_global_report(tmp_path):
    with criterion(7, "report global matches an independent recomputation exactly"):
        corpus = write_corpus(tmp_path, n_entities=200, seed=77)
        out = tmp_path / "explained.json"
        code = cli_main([
            "explain", "--mode", "event",
            "--input", str(corpus["events"]),
            "--schema", str(corpus["schema"]),
            "--background", str(corpus["background"]),
            "--model", f"gru:{corpus['weights']}",
            "--nsamples", "256", "--eta", "0.025", "--seed", "11",
            "--out", str(out),
        ])
        assert code == 0
        explanations_dir = tmp_path / "explanations"
        explanations_dir.mkdir()
        (explanations_dir / "run.json").write_bytes(out.read_bytes())

        report_path = tmp_path / "report.json"
        code = cli_main([
            "report", "global",
            "--explanations", str(explanations_dir),
            "--nsamples", "32000",
            "--out", str(report_path),
        ])
        assert code == 0
        report = json.loads(report_path.read_text())
        docs = json.loads(out.read_text())
        assert len(docs) == 200

        lengths = [len(doc["events"]) for doc in docs]
        assert report["n_sequences"] == 200
        assert report["mean_pruned_length"] == sum(lengths) / len(lengths)
        ordered = sorted(lengths)
        median = (
            ordered[len(ordered) // 2]
            if len(ordered) % 2
            else (ordered[len(ordered) // 2 - 1] + ordered[len(ordered) // 2]) / 2
        )
        assert report["median_pruned_length"] == median
        assert report["max_pruned_length"] == max(lengths)
        below = sum(1 for n in lengths if n < math.log2(32000))
        assert report["pct_below_log2_samples"] == 100.0 * below / len(lengths)

        pools: dict[str, list[float]] = {}
        for doc in docs:
            for entry in doc["events"]:
                key = "pruned" if entry["t"] == "pruned" else str(entry["t"])
                pools.setdefault(key, []).append(entry["value"])
        assert report["event_value_distributions"] == pools


def test_criterion_8_determinism(tmp_path):
    with criterion(8, "identical seeds give byte-identical explanation JSON"):
        corpus = write_corpus(tmp_path, n_entities=6, seed=88)
        outputs = []
        for name in ("a.json", "b.json"):
            out = tmp_path / name
            code = cli_main([
                "explain", "--mode", "all",
                "--input", str(corpus["events"]),
                "--schema", str(corpus["schema"]),
                "--background", str(corpus["background"]),
                "--model", f"gru:{corpus['weights']}",
                "--nsamples", "512", "--seed", "21",
                "--out", str(out),
            ])
            assert code == 0
            outputs.append(out.read_bytes())
        assert outputs[0] == outputs[1]
