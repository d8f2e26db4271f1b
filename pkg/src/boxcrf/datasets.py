"""Synthetic labelled scenes, plus reading and writing them as scene directories."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .pointcloud import (
    FLAP_ROLES,
    ROLES,
    BoxSpec,
    FaceLabel,
    GroundTruthLabels,
    PointCloud,
    add_clutter,
    load_cloud,
    save_cloud,
    synth_box,
)
from .segmentation import segment_from_corners

CATEGORIES = {
    # name: (width range, depth range, height range)
    "flat": ((0.40, 0.60), (0.30, 0.45), (0.20, 0.28)),
    "cube": ((0.30, 0.45), (0.30, 0.45), (0.30, 0.45)),
    "tall": ((0.25, 0.35), (0.25, 0.35), (0.40, 0.55)),
    "long": ((0.50, 0.65), (0.25, 0.32), (0.25, 0.35)),
}


@dataclass
class Scene:
    name: str
    cloud: PointCloud
    labels: GroundTruthLabels
    category: str = "box"
    spec: Optional[BoxSpec] = None


def random_box_spec(
    rng: np.random.Generator,
    category: str = "cube",
    *,
    noise_sigma: float = 0.0,
    occluded_flaps: int = 0,
    density: float = 10000.0,
    flap_range: tuple[float, float] = (0.3, 1.2),
) -> BoxSpec:
    """Draw a box of ``category`` with random pose and flap openings."""
    if category not in CATEGORIES:
        raise ValueError(f"unknown category {category!r}; choose from {sorted(CATEGORIES)}")
    (w0, w1), (d0, d1), (h0, h1) = CATEGORIES[category]
    occluded = rng.choice(4, size=occluded_flaps, replace=False) if occluded_flaps else []
    return BoxSpec(
        width=float(rng.uniform(w0, w1)),
        depth=float(rng.uniform(d0, d1)),
        height=float(rng.uniform(h0, h1)),
        flap_angles=tuple(float(a) for a in rng.uniform(*flap_range, size=4)),
        yaw=float(rng.uniform(-math.pi, math.pi)),
        translation=(float(rng.uniform(-1, 1)), float(rng.uniform(-1, 1)), 0.0),
        sampling_density=density,
        noise_sigma=noise_sigma,
        occluded_faces=frozenset(FLAP_ROLES[int(k)] for k in occluded),
    )


def synthetic_dataset(
    count: int,
    seed: int,
    *,
    noise_sigma: float = 0.0,
    occluded_flaps: int = 0,
    clutter: float = 0.0,
    density: float = 10000.0,
    categories: Optional[list[str]] = None,
) -> list[Scene]:
    """``count`` labelled scenes cycling through ``categories``; fully determined by ``seed``."""
    categories = categories or list(CATEGORIES)
    rng = np.random.default_rng(seed)
    scenes = []
    for i in range(count):
        category = categories[i % len(categories)]
        spec = random_box_spec(rng, category, noise_sigma=noise_sigma, occluded_flaps=occluded_flaps, density=density)
        cloud, labels = synth_box(spec, int(rng.integers(2**31)))
        if clutter > 0:
            cloud, labels = add_clutter(cloud, labels, clutter, rng)
        scenes.append(Scene(f"scene{i:03d}", cloud, labels, category, spec))
    return scenes


def segments_from_labels(labels: GroundTruthLabels) -> list:
    """Noise-free segments for every present face, in role order."""
    return [segment_from_corners(labels.faces[r].corners) for r in labels.present()]


# ---------------------------------------------------------------------------
# Scene directories: <name>.pcd next to <name>.labels.json


def labels_to_dict(labels: GroundTruthLabels) -> dict:
    faces = {}
    for role in ROLES:
        f = labels.faces[role]
        faces[role] = None if f is None else {
            "normal": [float(x) for x in f.normal],
            "offset": float(f.offset),
            "corners": [[float(x) for x in c] for c in f.corners],
        }
    out = {"faces": faces}
    if labels.point_roles is not None:
        out["point_roles"] = [int(r) for r in labels.point_roles]
    return out


def labels_from_dict(data: dict) -> GroundTruthLabels:
    try:
        faces = {}
        for role in ROLES:
            f = data["faces"][role]
            faces[role] = None if f is None else FaceLabel(
                np.asarray(f["normal"], dtype=float), float(f["offset"]), np.asarray(f["corners"], dtype=float)
            )
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed labels document: {exc}") from None
    roles = data.get("point_roles")
    return GroundTruthLabels(faces, None if roles is None else np.asarray(roles, dtype=int))


def save_scene(scene: Scene, directory) -> tuple[Path, Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    cloud_path = directory / f"{scene.name}.pcd"
    label_path = directory / f"{scene.name}.labels.json"
    save_cloud(scene.cloud, cloud_path)
    doc = labels_to_dict(scene.labels)
    doc["category"] = scene.category
    label_path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
    return cloud_path, label_path


def load_scene(cloud_path) -> Scene:
    cloud_path = Path(cloud_path)
    label_path = cloud_path.with_name(cloud_path.stem + ".labels.json")
    doc = json.loads(label_path.read_text())
    return Scene(cloud_path.stem, load_cloud(cloud_path), labels_from_dict(doc), doc.get("category", "box"))


def load_scene_dir(directory) -> list[Scene]:
    """Every ``*.pcd`` in ``directory`` that has a labels file, sorted by name."""
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"not a directory: {directory}")
    return [
        load_scene(p)
        for p in sorted(directory.glob("*.pcd"))
        if p.with_name(p.stem + ".labels.json").exists()
    ]
