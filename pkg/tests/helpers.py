"""Shared test fixtures: independent Shapley oracles and purpose-built scorers.

The oracles never touch the kernel regression; they enumerate the cooperative
game directly so the solver has something independent to be checked against.
"""

from __future__ import annotations

from itertools import permutations
from math import factorial
from typing import Callable, Sequence

import numpy as np

from seqexplain import (
    BackgroundMatrix,
    CallableScorer,
    SequenceMatrix,
    SequenceScorer,
    perturb_events,
    perturb_features,
)

ValueFunction = Callable[[tuple[int, ...]], float]


def exact_shapley_by_permutations(v: ValueFunction, m: int) -> np.ndarray:
    """Average marginal contribution over all m! player orderings."""
    values: dict[tuple[int, ...], float] = {}

    def cached(bits: tuple[int, ...]) -> float:
        if bits not in values:
            values[bits] = v(bits)
        return values[bits]

    totals = np.zeros(m)
    for order in permutations(range(m)):
        bits = [0] * m
        before = cached(tuple(bits))
        for player in order:
            bits[player] = 1
            after = cached(tuple(bits))
            totals[player] += after - before
            before = after
    return totals / factorial(m)


def exact_shapley_by_subsets(v: ValueFunction, m: int) -> np.ndarray:
    """Subset-weighted form: sum over coalitions of |S|!(m-|S|-1)!/m! marginals."""
    values = [v(tuple((code >> i) & 1 for i in range(m))) for code in range(2**m)]
    phi = np.zeros(m)
    m_fact = factorial(m)
    for player in range(m):
        for code in range(2**m):
            if (code >> player) & 1:
                continue
            s = bin(code).count("1")
            weight = factorial(s) * factorial(m - s - 1) / m_fact
            phi[player] += weight * (values[code | (1 << player)] - values[code])
    return phi


def feature_game(scorer: SequenceScorer, X: SequenceMatrix, B: BackgroundMatrix) -> ValueFunction:
    def v(bits: tuple[int, ...]) -> float:
        return scorer.score_batch([perturb_features(X, np.array(bits), B)])[0]

    return v


def event_game(scorer: SequenceScorer, X: SequenceMatrix, B: BackgroundMatrix) -> ValueFunction:
    def v(bits: tuple[int, ...]) -> float:
        return scorer.score_batch([perturb_events(X, np.array(bits), B)])[0]

    return v


class CountingScorer(SequenceScorer):
    """Counts how many sequences the wrapped scorer has evaluated."""

    def __init__(self, inner: SequenceScorer) -> None:
        self.inner = inner
        self.declared_concurrency = inner.declared_concurrency
        self.evaluations = 0

    def score_batch(self, batch: Sequence[SequenceMatrix]) -> list[float]:
        self.evaluations += len(batch)
        return self.inner.score_batch(batch)


def additive_scorer() -> CallableScorer:
    """Score = sum of every cell; Shapley values equal per-player cell sums over background 0."""
    return CallableScorer(lambda seq: float(seq.values.sum()))


def last_column_mean_scorer() -> CallableScorer:
    return CallableScorer(lambda seq: float(seq.values[:, -1].mean()))


def last_k_scorer(k: int) -> CallableScorer:
    """Depends only on the last k event columns."""
    return CallableScorer(lambda seq: float(np.tanh(seq.values[:, -k:].sum() / 4.0)))


def constant_scorer(c: float = 0.37) -> CallableScorer:
    return CallableScorer(lambda seq: c)


def random_sequence(d: int, l: int, seed: int, entity: str = "seq") -> SequenceMatrix:
    rng = np.random.default_rng(seed)
    return SequenceMatrix(rng.normal(0.0, 1.0, (d, l)), entity_id=entity)
