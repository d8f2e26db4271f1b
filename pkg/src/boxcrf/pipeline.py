"""End-to-end box inference: cloud -> cluster -> segments -> best template assignment."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .inference import InferenceConfig, SearchStats, infer, infer_two_stage, orient_counterclockwise
from .learning import RidgeConfig
from .model import (
    Assignment,
    FeatureConfig,
    FeatureVector,
    WeightVector,
    box_template,
    featurize,
    with_reference,
)
from .pointcloud import PointCloud, euclidean_cluster_indices, remove_ground
from .segmentation import SegmentationConfig


class PipelineError(RuntimeError):
    """The pipeline could not produce a model for a cloud."""


@dataclass(frozen=True)
class ClusterConfig:
    tol: float = 0.02
    min_size: int = 200
    remove_ground: bool = False
    ground_tol: float = 0.01

    def __post_init__(self):
        if self.tol <= 0 or self.min_size < 1 or self.ground_tol <= 0:
            raise ValueError("ClusterConfig values must be positive")


@dataclass(frozen=True)
class PlannerConfig:
    steps: int = 8

    def __post_init__(self):
        if self.steps < 2:
            raise ValueError("PlannerConfig.steps must be at least 2")


@dataclass(frozen=True)
class PipelineConfig:
    """Every tunable of the pipeline, grouped by module. All fields have defaults."""

    cluster: ClusterConfig = ClusterConfig()
    segmentation: SegmentationConfig = SegmentationConfig()
    features: FeatureConfig = FeatureConfig()
    inference: InferenceConfig = InferenceConfig()
    ridge: RidgeConfig = RidgeConfig()
    planner: PlannerConfig = PlannerConfig()
    two_stage: bool = True

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        """Build a config from a (possibly partial) nested mapping; unknown keys are errors."""
        return _build(cls, data or {}, "config")


def _build(cls, data, path):
    if not isinstance(data, dict):
        raise ValueError(f"{path} must be a mapping")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(fields)
    if unknown:
        raise ValueError(f"unknown key(s) in {path}: {', '.join(sorted(unknown))}")
    kwargs = {}
    defaults = cls()
    for name, value in data.items():
        current = getattr(defaults, name)
        if dataclasses.is_dataclass(current):
            kwargs[name] = _build(type(current), value, f"{path}.{name}")
        elif isinstance(current, tuple) and value is not None:
            kwargs[name] = tuple(value)
        else:
            kwargs[name] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ValueError(f"{path}: {exc}") from None


@dataclass
class ModelResult:
    """Output of :func:`infer_box`."""

    assignment: Assignment
    score: float
    segments: list
    features: FeatureVector
    feature_config: FeatureConfig
    cluster_size: int
    stats: SearchStats = field(default_factory=SearchStats)


def main_cluster(cloud: PointCloud, cfg: ClusterConfig = ClusterConfig()) -> PointCloud:
    """Largest Euclidean cluster of ``cloud`` (after optional ground removal).

    Raises:
        PipelineError: no cluster of at least ``cfg.min_size`` points exists.
    """
    if len(cloud) == 0:
        raise PipelineError("no cluster found: the cloud is empty")
    if cfg.remove_ground:
        _, cloud = remove_ground(cloud, cfg.ground_tol)
    clusters = euclidean_cluster_indices(cloud.points, cfg.tol, cfg.min_size)
    if not clusters:
        raise PipelineError(f"no cluster found with at least {cfg.min_size} points")
    return cloud.subset(clusters[0])


def match_segments(
    segments: list,
    weights: WeightVector,
    config: PipelineConfig = PipelineConfig(),
    reference: Optional[np.ndarray] = None,
    stats: Optional[SearchStats] = None,
) -> tuple[Assignment, float, FeatureConfig]:
    """Best template assignment for already extracted segments, oriented counterclockwise."""
    cfg = with_reference(config.features, segments, reference)
    stats = stats if stats is not None else SearchStats()
    if config.two_stage:
        assignment, value = infer_two_stage(segments, box_template(True), weights, cfg, config.inference, stats)
    else:
        assignment, value = infer(segments, box_template(False), weights, cfg, config.inference, stats)
    return orient_counterclockwise(assignment, segments, cfg.up), value, cfg


def infer_box(cloud: PointCloud, weights: WeightVector, config: PipelineConfig = PipelineConfig()) -> ModelResult:
    """Run the whole pipeline on one scene.

    Raises:
        PipelineError: no usable cluster, or no segments could be extracted.
    """
    from .segmentation import extract_segments

    cluster = main_cluster(cloud, config.cluster)
    segments = extract_segments(cluster, config.segmentation)
    if not segments:
        raise PipelineError("no valid assignment: no planar segments were extracted")
    stats = SearchStats()
    assignment, value, cfg = match_segments(segments, weights, config, cluster.centroid(), stats)
    graph = box_template(config.two_stage)
    return ModelResult(assignment, value, segments, featurize(assignment, segments, graph, cfg), cfg, len(cluster), stats)
