"""Shapley kernel weighting, coalition drawing, and the weighted least-squares solve.

Attributions come from fitting a linear surrogate g(z) = w0 + sum_i w_i z_i to
model scores of perturbed inputs, weighting each coalition by the Shapley
kernel. The empty and full coalitions carry infinite kernel weight, so they
are enforced as hard equality constraints instead: w0 is fixed to the all-off
score and one weight is eliminated so the attributions sum exactly to the
score difference. When the full coalition space fits in the sample budget it
is enumerated and the result is exact; otherwise coalitions are sampled in
proportion to their kernel weight.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

from .errors import DimensionError, SolverError
from .perturb import AXIS_EVENTS, AXIS_FEATURES, perturb_events, perturb_features
from .seqdata import BackgroundMatrix, SequenceMatrix

_SCORE_CHUNK = 2048


@dataclass(frozen=True)
class SamplerConfig:
    """Coalition sampling budget and seed."""

    n_samples: int = 32000
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_samples < 2:
            raise DimensionError(f"n_samples must be at least 2, got {self.n_samples}")


@dataclass(eq=False)
class CoalitionSample:
    """One drawn coalition: bits, regression weight, and the model score once evaluated.

    In exact mode the weight is the Shapley kernel value; in sampled mode the
    kernel is already embodied in the sampling distribution, so the weight is
    the draw multiplicity. The two extreme coalitions carry weight 0 and are
    consumed by the equality constraints, never by the regression.
    """

    bits: np.ndarray
    weight: float
    value: float | None = None

    @property
    def size(self) -> int:
        return int(self.bits.sum())


@dataclass(eq=False)
class ExplanationResult:
    """Per-player attributions for one sequence along one axis."""

    axis: str
    player_labels: tuple[str, ...]
    attributions: np.ndarray
    base_score: float
    full_score: float
    exact: bool
    n_evaluations: int

    def __post_init__(self) -> None:
        self.attributions = np.asarray(self.attributions, dtype=np.float64)
        if len(self.player_labels) != self.attributions.shape[0]:
            raise DimensionError(
                f"{len(self.player_labels)} labels for {self.attributions.shape[0]} attributions"
            )

    @property
    def m(self) -> int:
        return self.attributions.shape[0]

    def conservation_gap(self) -> float:
        """full_score - (base_score + sum of attributions); ~0 by construction."""
        return self.full_score - (self.base_score + float(self.attributions.sum()))


def kernel_weight(m: int, s: int) -> float:
    """Shapley kernel (m - 1) / (C(m, s) * s * (m - s)) for 1 <= s <= m - 1."""
    if m < 2:
        raise DimensionError(f"kernel weight needs m >= 2, got {m}")
    if s <= 0 or s >= m:
        raise DimensionError(
            f"kernel weight is infinite at |z|={s} for m={m}; extremes are handled by constraints"
        )
    return (m - 1) / (comb(m, s) * s * (m - s))


def _enumerate_all(m: int) -> list[CoalitionSample]:
    samples = []
    for code in range(2**m):
        bits = np.fromiter(((code >> i) & 1 for i in range(m)), dtype=np.uint8, count=m)
        s = int(bits.sum())
        weight = kernel_weight(m, s) if 0 < s < m else 0.0
        samples.append(CoalitionSample(bits, weight))
    return samples


def draw_coalitions(m: int, config: SamplerConfig) -> list[CoalitionSample]:
    """Enumerate all 2^m coalitions when they fit in the budget, else sample.

    Sampled mode always includes the all-zeros and all-ones coalitions, then
    spends ``n_samples`` draws on interior coalitions: sizes are drawn with
    probability proportional to the total kernel mass at that size, members
    uniformly within the size, and each draw is paired with its complement.
    Repeat draws merge into the existing sample's weight. Deterministic for a
    fixed seed.
    """
    if m < 1:
        raise DimensionError(f"need at least one player, got m={m}")
    if 2**m <= config.n_samples:
        return _enumerate_all(m)

    rng = np.random.default_rng(config.seed)
    sizes = np.arange(1, m)
    size_mass = (m - 1) / (sizes * (m - sizes))
    size_prob = size_mass / size_mass.sum()

    samples: list[CoalitionSample] = [
        CoalitionSample(np.zeros(m, dtype=np.uint8), 0.0),
        CoalitionSample(np.ones(m, dtype=np.uint8), 0.0),
    ]
    index: dict[bytes, CoalitionSample] = {}

    def add(bits: np.ndarray) -> None:
        key = bits.tobytes()
        known = index.get(key)
        if known is None:
            sample = CoalitionSample(bits, 1.0)
            index[key] = sample
            samples.append(sample)
        else:
            known.weight += 1.0

    budget = config.n_samples
    while budget > 0:
        s = int(rng.choice(sizes, p=size_prob))
        members = rng.choice(m, size=s, replace=False)
        bits = np.zeros(m, dtype=np.uint8)
        bits[members] = 1
        add(bits)
        budget -= 1
        if budget > 0:
            add(1 - bits)
            budget -= 1
    return samples


def solve_attributions(
    samples: Sequence[CoalitionSample],
    f_full: float,
    f_base: float,
    *,
    m: int | None = None,
    axis: str = AXIS_FEATURES,
    player_labels: Sequence[str] | None = None,
    exact: bool = False,
    n_evaluations: int = 0,
) -> ExplanationResult:
    """Weighted least squares over interior coalitions, constrained at the extremes.

    The constraints g(0) = f_base and g(1) = f_full are imposed by fixing
    w0 = f_base and eliminating the last weight via
    w_m = f_full - f_base - sum(w_i), so the attributions conserve the score
    difference exactly. Normal equations are solved by Cholesky factorization
    with a documented ridge fallback of 1e-10 on the diagonal; a genuinely
    rank-deficient design raises instead of silently regularizing.
    """
    samples = list(samples)
    if m is None:
        if not samples:
            raise SolverError("no samples and no player count given")
        m = samples[0].bits.shape[0]

    if m == 1:
        attrs = np.array([f_full - f_base])
        labels = tuple(player_labels) if player_labels else ("player_0",)
        return ExplanationResult(
            axis, labels, attrs, f_base, f_full, exact, n_evaluations
        )

    if not samples:
        raise SolverError("cannot solve without interior coalition samples")
    for sample in samples:
        if sample.value is None:
            raise SolverError("every coalition sample must carry a model evaluation")
        if not 0 < sample.size < m:
            raise DimensionError(
                "extreme coalitions must not enter the regression; they are handled by constraints"
            )

    Z = np.array([s.bits for s in samples], dtype=np.float64)
    w = np.array([s.weight for s in samples], dtype=np.float64)
    y = np.array([s.value for s in samples], dtype=np.float64)
    delta = f_full - f_base

    # Eliminate the last player: g(z) = f_base + E @ w_head + z_m * delta.
    E = Z[:, :-1] - Z[:, -1:]
    target = y - f_base - Z[:, -1] * delta
    A = E.T @ (w[:, None] * E)
    rhs = E.T @ (w * target)

    try:
        w_head = scipy.linalg.cho_solve(scipy.linalg.cho_factor(A), rhs)
    except scipy.linalg.LinAlgError:
        if np.linalg.matrix_rank(np.sqrt(w)[:, None] * E) < m - 1:
            raise SolverError(
                "coalition design is rank-deficient; draw more samples"
            ) from None
        ridged = A + 1e-10 * np.eye(m - 1)
        try:
            w_head = scipy.linalg.cho_solve(scipy.linalg.cho_factor(ridged), rhs)
        except scipy.linalg.LinAlgError:
            raise SolverError(
                "normal equations are numerically singular; draw more samples"
            ) from None

    attrs = np.empty(m)
    attrs[:-1] = w_head
    attrs[-1] = delta - w_head.sum()
    labels = tuple(player_labels) if player_labels else tuple(f"player_{i}" for i in range(m))
    return ExplanationResult(axis, labels, attrs, f_base, f_full, exact, n_evaluations)


def explain_game(
    scorer,
    m: int,
    build_input: Callable[[np.ndarray], SequenceMatrix],
    config: SamplerConfig,
    *,
    axis: str,
    player_labels: Sequence[str],
) -> ExplanationResult:
    """Shapley attribution of an arbitrary m-player game over sequence inputs.

    ``build_input`` maps a coalition bit vector to the model input to score;
    it defines what a "player" means (a feature row, an event column, a cell
    group, a grouped prefix, ...).
    """
    draws = draw_coalitions(m, config)
    exact = 2**m <= config.n_samples
    scores: list[float] = []
    # inputs are built chunkwise so a 32K-coalition run never holds every
    # perturbed matrix at once
    for start in range(0, len(draws), _SCORE_CHUNK):
        chunk = draws[start:start + _SCORE_CHUNK]
        scores.extend(scorer.score_batch([build_input(s.bits) for s in chunk]))
    f_base = f_full = None
    for sample, score in zip(draws, scores):
        sample.value = score
        if sample.size == 0:
            f_base = score
        elif sample.size == m:
            f_full = score
    assert f_base is not None and f_full is not None
    interior = [s for s in draws if 0 < s.size < m]
    return solve_attributions(
        interior,
        f_full,
        f_base,
        m=m,
        axis=axis,
        player_labels=player_labels,
        exact=exact,
        n_evaluations=len(draws),
    )


def event_label(column: int, l: int) -> str:
    """Label for an event column: the most recent column is t=0, earlier ones negative."""
    return f"t={column - (l - 1)}"


def shapley_explain(
    scorer,
    X: SequenceMatrix,
    B: BackgroundMatrix,
    axis: str,
    config: SamplerConfig,
) -> ExplanationResult:
    """Attribute the score of X to its features or to its events.

    Composes coalition drawing, axis perturbation, batched scoring, and the
    constrained solve. Deterministic given the seed and a deterministic
    scorer.
    """
    if axis == AXIS_FEATURES:
        if B.d != X.d:
            raise DimensionError(f"background d={B.d} does not match sequence d={X.d}")
        labels = tuple(B.feature_names)
        return explain_game(
            scorer,
            X.d,
            lambda bits: perturb_features(X, bits, B),
            config,
            axis=axis,
            player_labels=labels,
        )
    if axis == AXIS_EVENTS:
        labels = tuple(event_label(j, X.l) for j in range(X.l))
        return explain_game(
            scorer,
            X.l,
            lambda bits: perturb_events(X, bits, B),
            config,
            axis=axis,
            player_labels=labels,
        )
    raise DimensionError(
        f"axis must be {AXIS_FEATURES!r} or {AXIS_EVENTS!r} here; "
        "cell explanations go through the cell pipeline"
    )
