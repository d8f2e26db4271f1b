"""Fitting the score weights by regularised least squares on labelled assignments."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .model import Assignment, FeatureConfig, FeatureVector, TemplateGraph, WeightVector, featurize, with_reference


class RankDeficientWarning(UserWarning):
    """The unregularised normal equations are singular; the minimum-norm solution was used."""


class UnmatchedLabelsWarning(UserWarning):
    """A training scene was skipped because its labelled faces could not all be found among the segments."""


@dataclass(frozen=True)
class RidgeConfig:
    """``lam`` is the ridge penalty; with ``standardize`` it acts on z-scored features plus a free intercept."""

    lam: float = 1e-3
    standardize: bool = True

    def __post_init__(self):
        if not (math.isfinite(self.lam) and self.lam >= 0):
            raise ValueError("RidgeConfig.lam must be >= 0")


@dataclass(frozen=True)
class TrainingExample:
    features: FeatureVector
    target: float

    def __post_init__(self):
        if not 0.0 <= self.target <= 1.0:
            raise ValueError("target must be a correctness ratio in [0, 1]")


@dataclass(frozen=True)
class Standardization:
    """Feature z-scoring used during fitting, kept with the weights for the record."""

    mean: tuple
    scale: tuple
    intercept: float
    lam: float


@dataclass(frozen=True)
class FittedWeights:
    weights: WeightVector
    standardization: Optional[Standardization]
    rank: int


def ridge_solve(X: np.ndarray, y: np.ndarray, lam: float) -> tuple[np.ndarray, int]:
    """Solve ``(X^T X + lam I) w = X^T y`` through an SVD-based least-squares problem.

    Returns ``(w, rank)``; for ``lam == 0`` a rank-deficient ``X`` gives the
    minimum-norm solution.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    p = X.shape[1]
    if lam > 0:
        A = np.vstack([X, math.sqrt(lam) * np.eye(p)])
        b = np.concatenate([y, np.zeros(p)])
        w, _, rank, _ = np.linalg.lstsq(A, b, rcond=None)
        return w, int(rank)
    w, _, rank, _ = np.linalg.lstsq(X, y, rcond=None)
    return w, int(rank)


def fit(examples: Sequence[TrainingExample], cfg: RidgeConfig = RidgeConfig()) -> FittedWeights:
    """Like :func:`fit_weights` but also returns the standardisation and numerical rank."""
    if not examples:
        raise ValueError("need at least one training example")
    X = np.array([ex.features.values for ex in examples])
    y = np.array([ex.target for ex in examples])
    if not np.all(np.isfinite(X)):
        raise ValueError("feature matrix must be finite")

    if cfg.standardize:
        mean = X.mean(axis=0)
        scale = X.std(axis=0)
        scale[scale <= 1e-12 * np.maximum(1.0, np.abs(mean))] = 1.0
        Xs = (X - mean) / scale
        y_mean = y.mean()
        w_std, rank = ridge_solve(Xs, y - y_mean, cfg.lam)
        w = w_std / scale
        std = Standardization(tuple(mean), tuple(scale), float(y_mean - w @ mean), cfg.lam)
        full_rank = np.linalg.matrix_rank(Xs)
    else:
        w, rank = ridge_solve(X, y, cfg.lam)
        std = None
        full_rank = np.linalg.matrix_rank(X)
    if cfg.lam == 0 and full_rank < X.shape[1]:
        warnings.warn(
            f"feature matrix has rank {full_rank} < {X.shape[1]}; using the minimum-norm solution",
            RankDeficientWarning,
            stacklevel=2,
        )
    return FittedWeights(WeightVector.from_array(w), std, int(full_rank))


def fit_weights(examples: Sequence[TrainingExample], cfg: RidgeConfig = RidgeConfig()) -> WeightVector:
    """Regress correctness targets on feature sums with a ridge penalty.

    Raises:
        ValueError: no examples, or non-finite features.
    """
    return fit(examples, cfg).weights


# ---------------------------------------------------------------------------
# Training sets


@dataclass(frozen=True)
class PerturbationSampler:
    """Random corruptions of a ground-truth assignment: swaps, drops and substitutions."""

    count: int = 20
    max_ops: int = 3
    seed: int = 0

    def sample(self, truth: Assignment, n_segments: int, rng: np.random.Generator) -> list[Assignment]:
        out = []
        for _ in range(self.count):
            nodes = list(truth.nodes)
            for _ in range(int(rng.integers(1, self.max_ops + 1))):
                op = rng.integers(3)
                if op == 0:
                    i, j = rng.choice(9, size=2, replace=False)
                    nodes[i], nodes[j] = nodes[j], nodes[i]
                elif op == 1:
                    filled = [i for i, s in enumerate(nodes) if s is not None]
                    if filled:
                        nodes[filled[int(rng.integers(len(filled)))]] = None
                else:
                    unused = sorted(set(range(n_segments)) - {s for s in nodes if s is not None})
                    if unused:
                        nodes[int(rng.integers(9))] = unused[int(rng.integers(len(unused)))]
            out.append(Assignment(tuple(nodes)))
        return out


def make_training_set(
    scenes: Sequence,
    graph: TemplateGraph,
    cfg: FeatureConfig,
    sampler: PerturbationSampler = PerturbationSampler(),
) -> list[TrainingExample]:
    """Featurise labelled assignments and scored perturbations of them.

    Args:
        scenes: ``(segments, labels)`` pairs, optionally with a third item
            giving the reference point (cluster centroid) for that scene.

    Each scene contributes its ground-truth assignment (target 1) and
    ``sampler.count`` perturbations whose target is the fraction of labelled
    faces they still place correctly. Scenes whose labelled faces cannot all
    be matched to segments are skipped with an :class:`UnmatchedLabelsWarning`.
    """
    from .evaluation import correctness_ratio, truth_assignment

    rng = np.random.default_rng(sampler.seed)
    examples = []
    for idx, scene in enumerate(scenes):
        segments, labels = scene[0], scene[1]
        reference = scene[2] if len(scene) > 2 else None
        truth = truth_assignment(segments, labels)
        if truth is None:
            warnings.warn(f"scene {idx}: labelled faces not all matched; skipped", UnmatchedLabelsWarning, stacklevel=2)
            continue
        scene_cfg = with_reference(cfg, segments, reference)
        for assign in [truth] + sampler.sample(truth, len(segments), rng):
            fv = featurize(assign, segments, graph, scene_cfg)
            examples.append(TrainingExample(fv, correctness_ratio(assign, labels, segments)))
    return examples
