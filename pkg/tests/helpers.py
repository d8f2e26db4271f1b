"""Scene and segment generators shared by the tests."""

from __future__ import annotations

import math

import numpy as np

from boxcrf.model import FeatureConfig, WeightVector
from boxcrf.pointcloud import ROLES, BoxSpec, box_face_labels
from boxcrf.segmentation import segment_from_corners


def rectangle(centre, normal, half_a, half_b, spin=0.0):
    normal = np.asarray(normal, float) / np.linalg.norm(normal)
    helper = np.array([1.0, 0, 0]) if abs(normal[0]) < 0.9 else np.array([0, 1.0, 0])
    e1 = np.cross(normal, helper)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(normal, e1)
    e1, e2 = math.cos(spin) * e1 + math.sin(spin) * e2, -math.sin(spin) * e1 + math.cos(spin) * e2
    c = np.asarray(centre, float)
    return np.array([c - half_a * e1 - half_b * e2, c + half_a * e1 - half_b * e2,
                     c + half_a * e1 + half_b * e2, c - half_a * e1 + half_b * e2])


def random_segment(rng):
    n = rng.normal(size=3)
    return segment_from_corners(rectangle(rng.normal(size=3) * 0.3, n, *rng.uniform(0.05, 0.3, 2)))


def random_segments(rng, n):
    return [random_segment(rng) for _ in range(n)]


def rotate_z(corners, angle):
    c, s = math.cos(angle), math.sin(angle)
    return corners @ np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]]).T


def jittered_box_segments(rng, keep, sigma_angle=0.15, sigma_shift=0.03):
    """Faces of a random box, ``keep`` of them, each rotated and shifted slightly, in random order."""
    spec = BoxSpec(
        width=rng.uniform(0.25, 0.6), depth=rng.uniform(0.25, 0.6), height=rng.uniform(0.2, 0.5),
        flap_angles=tuple(rng.uniform(0.3, 1.2, 4)), yaw=rng.uniform(-math.pi, math.pi),
    )
    labels = box_face_labels(spec)
    roles = rng.choice(len(ROLES), size=keep, replace=False)
    segs = []
    for r in roles:
        corners = labels.faces[ROLES[r]].corners
        centre = corners.mean(axis=0)
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        angle = rng.normal() * sigma_angle
        k = axis
        p = corners - centre
        p = p * math.cos(angle) + np.cross(k, p) * math.sin(angle) + np.outer(p @ k, k) * (1 - math.cos(angle))
        segs.append(segment_from_corners(p + centre + rng.normal(size=3) * sigma_shift))
    return segs


def feature_config(segments=None):
    return FeatureConfig(L_ref=(0.0, 0.0, 0.0))


def plane_with_outliers(rng, n=500, outlier_frac=0.2):
    k = int(n * outlier_frac)
    inl = np.column_stack([rng.uniform(-1, 1, (n - k, 2)), np.zeros(n - k)])
    # uniform in the unit ball
    d = rng.normal(size=(k, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    out = d * rng.uniform(0, 1, (k, 1)) ** (1 / 3)
    return inl, np.vstack([inl, out])


# ridge fit on 48 synthetic scenes (noise 0.003 and 0.005 m, some clutter), rounded; frozen for tests
LEARNED_WEIGHTS = WeightVector.from_array([-0.0009, 0.0048, 0.0715, 0.0249, 0.0203, 0.1615, 0.0057, 0.0098])
