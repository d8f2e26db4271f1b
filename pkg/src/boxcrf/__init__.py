"""Box model inference from point clouds.

A cluster is cut into rectangle-bounded planar segments, and each of the nine
planes of an open box template (four sides, a base and four flaps) is matched
to a segment or left empty by maximising a weighted sum of unary and pairwise
geometric features.
"""

from .evaluation import EvalReport, UndefinedMetricError, flap_accuracy, full_model_accuracy, run_benchmark
from .inference import (
    InferenceConfig,
    SearchStats,
    brute_force_infer,
    count_side_tuples,
    infer,
    infer_two_stage,
)
from .learning import RidgeConfig, TrainingExample, fit, fit_weights, make_training_set
from .model import (
    Assignment,
    FeatureConfig,
    FeatureVector,
    TemplateGraph,
    WeightVector,
    box_template,
    featurize,
    score,
)
from .pipeline import ModelResult, PipelineConfig, PipelineError, infer_box
from .planner import ClosingPlan, NoHingeError, closing_order, flap_arc, make_plan
from .pointcloud import ROLES, BoxSpec, GroundTruthLabels, PointCloud, load_cloud, save_cloud, synth_box
from .segmentation import PlaneModel, Segment, SegmentationConfig, extract_segments, ransac_plane

__all__ = [
    "Assignment",
    "BoxSpec",
    "ClosingPlan",
    "EvalReport",
    "FeatureConfig",
    "FeatureVector",
    "GroundTruthLabels",
    "InferenceConfig",
    "ModelResult",
    "NoHingeError",
    "PipelineConfig",
    "PipelineError",
    "PlaneModel",
    "PointCloud",
    "ROLES",
    "RidgeConfig",
    "SearchStats",
    "Segment",
    "SegmentationConfig",
    "TemplateGraph",
    "TrainingExample",
    "UndefinedMetricError",
    "WeightVector",
    "box_template",
    "brute_force_infer",
    "closing_order",
    "count_side_tuples",
    "extract_segments",
    "featurize",
    "fit",
    "fit_weights",
    "flap_accuracy",
    "flap_arc",
    "full_model_accuracy",
    "infer",
    "infer_box",
    "infer_two_stage",
    "load_cloud",
    "make_plan",
    "make_training_set",
    "ransac_plane",
    "run_benchmark",
    "save_cloud",
    "score",
    "synth_box",
]
