import numpy as np
import pytest

from boxcrf.datasets import synthetic_dataset
from boxcrf.evaluation import flap_accuracy, full_model_accuracy
from boxcrf.pipeline import PipelineConfig, PipelineError, infer_box, main_cluster
from boxcrf.pointcloud import PointCloud

from .helpers import LEARNED_WEIGHTS


def test_clean_scene_end_to_end():
    (scene,) = synthetic_dataset(1, seed=21)
    res = infer_box(scene.cloud, LEARNED_WEIGHTS)
    assert full_model_accuracy(res.assignment, scene.labels, res.segments) == 100.0
    assert res.score == pytest.approx(float(res.features.values @ LEARNED_WEIGHTS.as_array()), abs=1e-9)
    assert res.cluster_size == len(scene.cloud)


def test_occluded_flap_left_empty():
    (scene,) = synthetic_dataset(1, seed=22, occluded_flaps=1, noise_sigma=0.003)
    res = infer_box(scene.cloud, LEARNED_WEIGHTS)
    assert flap_accuracy(res.assignment, scene.labels, res.segments) == 100.0
    assert sum(res.assignment[f] is None for f in (5, 6, 7, 8)) == 1


def test_single_stage_config():
    (scene,) = synthetic_dataset(1, seed=23)
    res = infer_box(scene.cloud, LEARNED_WEIGHTS, PipelineConfig(two_stage=False))
    assert full_model_accuracy(res.assignment, scene.labels, res.segments) == 100.0


def test_clutter_is_separated_from_the_box():
    (scene,) = synthetic_dataset(1, seed=24, clutter=0.1)
    far = scene.cloud.points + np.array([5.0, 0, 0])
    cloud = PointCloud(np.vstack([scene.cloud.points, far[:500]]))
    box_points = int(np.sum(scene.labels.point_roles >= 0))
    # the far copy is dropped; a few clutter points touching the box may stay
    assert box_points <= len(main_cluster(cloud)) < box_points + 0.05 * len(scene.cloud)


def test_errors():
    with pytest.raises(PipelineError):
        infer_box(PointCloud(np.zeros((0, 3))), LEARNED_WEIGHTS)
    sparse = np.random.default_rng(0).uniform(-5, 5, (30, 3))
    with pytest.raises(PipelineError):
        infer_box(PointCloud(sparse), LEARNED_WEIGHTS)


def test_config_from_dict():
    cfg = PipelineConfig.from_dict({"segmentation": {"inlier_tol": 0.02}, "two_stage": False})
    assert cfg.segmentation.inlier_tol == 0.02 and not cfg.two_stage
    assert PipelineConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ValueError, match="bogus"):
        PipelineConfig.from_dict({"bogus": 1})
    with pytest.raises(ValueError):
        PipelineConfig.from_dict({"segmentation": {"inlier_tol": -1}})
