"""Point cloud containers, file loading, synthetic box scenes, ground removal and clustering."""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

# Template roles in node-id order: sides 0-3, base 4, flaps 5-8.
ROLES: tuple[str, ...] = ("side0", "side1", "side2", "side3", "base", "flap0", "flap1", "flap2", "flap3")
SIDE_ROLES = ROLES[:4]
FLAP_ROLES = ROLES[5:]


class CloudParseError(ValueError):
    """A point cloud file could not be parsed. ``line`` is 1-based (0 if unknown)."""

    def __init__(self, message: str, line: int = 0):
        super().__init__(f"line {line}: {message}" if line else message)
        self.line = line


class GroundNotFoundWarning(UserWarning):
    """No near-horizontal plane large enough to be the ground was found."""


@dataclass
class PointCloud:
    """An unordered set of 3D points stored as an ``(N, 3)`` float array."""

    points: np.ndarray
    frame_note: str = ""

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.size == 0:
            pts = pts.reshape(0, 3)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValueError(f"points must have shape (N, 3), got {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("points must be finite")
        self.points = pts

    def __len__(self) -> int:
        return self.points.shape[0]

    def subset(self, index) -> "PointCloud":
        return PointCloud(self.points[index], self.frame_note)

    def centroid(self) -> np.ndarray:
        if len(self) == 0:
            raise ValueError("empty cloud has no centroid")
        return self.points.mean(axis=0)


# ---------------------------------------------------------------------------
# File formats


def load_cloud(path, format: Optional[str] = None) -> PointCloud:
    """Read a cloud from an ASCII PCD file or an ``x,y,z`` CSV file.

    Args:
        path: file to read.
        format: ``"pcd-ascii"`` or ``"csv"``. Inferred from the suffix when omitted.

    Raises:
        CloudParseError: on a malformed header, a non-numeric value, a
            non-finite coordinate or an unsupported format.
    """
    path = Path(path)
    if format is None:
        format = {".pcd": "pcd-ascii", ".csv": "csv"}.get(path.suffix.lower())
        if format is None:
            raise CloudParseError(f"cannot infer cloud format from suffix {path.suffix!r}")
    text = path.read_text()
    if format == "csv":
        points = _parse_csv(text)
    elif format == "pcd-ascii":
        points = _parse_pcd(text)
    else:
        raise CloudParseError(f"unsupported cloud format {format!r}")
    return PointCloud(points, frame_note=str(path))


def _parse_float_row(values: Sequence[str], lineno: int) -> list[float]:
    try:
        row = [float(v) for v in values]
    except ValueError:
        raise CloudParseError(f"non-numeric value in {' '.join(values)!r}", lineno) from None
    if not all(math.isfinite(v) for v in row):
        raise CloudParseError("non-finite coordinate", lineno)
    return row


def _parse_csv(text: str) -> np.ndarray:
    rows = []
    for lineno, values in enumerate(csv.reader(text.splitlines()), start=1):
        if not values or all(not v.strip() for v in values):
            continue
        if len(values) != 3:
            raise CloudParseError(f"expected 3 columns, got {len(values)}", lineno)
        rows.append(_parse_float_row([v.strip() for v in values], lineno))
    return np.array(rows, dtype=float).reshape(-1, 3)


_PCD_KEYS = ("VERSION", "FIELDS", "SIZE", "TYPE", "COUNT", "WIDTH", "HEIGHT", "VIEWPOINT", "POINTS", "DATA")


def _parse_pcd(text: str) -> np.ndarray:
    header: dict[str, list[str]] = {}
    lines = text.splitlines()
    data_start = None
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, *values = line.split()
        key = key.upper()
        if key not in _PCD_KEYS:
            raise CloudParseError(f"unknown header key {key!r}", lineno)
        header[key] = values
        if key == "DATA":
            if values != ["ascii"]:
                raise CloudParseError(f"unsupported DATA encoding {' '.join(values)!r} (only ascii)", lineno)
            data_start = lineno
            break
    if data_start is None:
        raise CloudParseError("missing DATA line")

    fields = header.get("FIELDS")
    if not fields or not {"x", "y", "z"} <= set(fields):
        raise CloudParseError("FIELDS must include x y z")
    if any(c != "1" for c in header.get("COUNT", ["1"] * len(fields))):
        raise CloudParseError("only COUNT 1 fields are supported")
    cols = [fields.index(c) for c in ("x", "y", "z")]

    def header_int(key):
        try:
            return int(header[key][0])
        except (KeyError, IndexError):
            return None
        except ValueError:
            raise CloudParseError(f"{key} is not an integer") from None

    n_points = header_int("POINTS")
    if n_points is None:
        width, height = header_int("WIDTH"), header_int("HEIGHT") or 1
        if width is None:
            raise CloudParseError("header needs POINTS or WIDTH")
        n_points = width * height

    rows = []
    for lineno in range(data_start + 1, len(lines) + 1):
        line = lines[lineno - 1].strip()
        if not line:
            continue
        values = line.split()
        if len(values) != len(fields):
            raise CloudParseError(f"expected {len(fields)} values, got {len(values)}", lineno)
        rows.append(_parse_float_row([values[c] for c in cols], lineno))
    if len(rows) != n_points:
        raise CloudParseError(f"header declares {n_points} points but {len(rows)} were read")
    return np.array(rows, dtype=float).reshape(-1, 3)


def save_cloud(cloud: PointCloud, path, format: Optional[str] = None) -> None:
    """Write ``cloud`` as ASCII PCD or CSV (format inferred from suffix when omitted)."""
    path = Path(path)
    if format is None:
        format = "csv" if path.suffix.lower() == ".csv" else "pcd-ascii"
    body = "\n".join(" ".join(repr(float(v)) for v in p) for p in cloud.points)
    if format == "csv":
        path.write_text(body.replace(" ", ",") + ("\n" if len(cloud) else ""))
        return
    n = len(cloud)
    header = (
        "# .PCD v0.7 - Point Cloud Data file format\n"
        "VERSION 0.7\nFIELDS x y z\nSIZE 4 4 4\nTYPE F F F\nCOUNT 1 1 1\n"
        f"WIDTH {n}\nHEIGHT 1\nVIEWPOINT 0 0 0 1 0 0 0\nPOINTS {n}\nDATA ascii\n"
    )
    path.write_text(header + body + ("\n" if n else ""))


# ---------------------------------------------------------------------------
# Synthetic boxes


@dataclass(frozen=True)
class BoxSpec:
    """Geometry and sampling parameters for one synthetic box.

    ``flap_angles[k]`` is the opening of the flap hinged on side ``k``: 0 keeps
    it coplanar with the side (pointing straight up), pi/2 folds it outward to
    horizontal. Flaps on sides 0 and 2 reach ``depth / 2``, flaps on sides 1
    and 3 reach ``width / 2``, as on a regular slotted carton.
    """

    width: float = 1.0
    depth: float = 1.0
    height: float = 1.0
    flap_angles: tuple[float, float, float, float] = (math.pi / 2,) * 4
    yaw: float = 0.0
    translation: tuple[float, float, float] = (0.0, 0.0, 0.0)
    sampling_density: float = 1000.0
    noise_sigma: float = 0.0
    occluded_faces: frozenset = frozenset()

    def __post_init__(self):
        for name in ("width", "depth", "height", "sampling_density"):
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
                raise ValueError(f"BoxSpec.{name} must be a positive number, got {value!r}")
        if not (math.isfinite(self.noise_sigma) and self.noise_sigma >= 0):
            raise ValueError(f"BoxSpec.noise_sigma must be >= 0, got {self.noise_sigma!r}")
        if len(self.flap_angles) != 4 or not all(math.isfinite(a) for a in self.flap_angles):
            raise ValueError("BoxSpec.flap_angles must be 4 finite angles")
        if len(self.translation) != 3 or not all(math.isfinite(t) for t in self.translation):
            raise ValueError("BoxSpec.translation must be 3 finite numbers")
        if not math.isfinite(self.yaw):
            raise ValueError("BoxSpec.yaw must be finite")
        object.__setattr__(self, "flap_angles", tuple(float(a) for a in self.flap_angles))
        object.__setattr__(self, "translation", tuple(float(t) for t in self.translation))
        occluded = frozenset(self.occluded_faces)
        unknown = occluded - set(ROLES)
        if unknown:
            raise ValueError(f"BoxSpec.occluded_faces has unknown roles {sorted(unknown)}")
        object.__setattr__(self, "occluded_faces", occluded)


@dataclass
class FaceLabel:
    """Exact plane and rectangle of one generated face (outward normal, CCW corners)."""

    normal: np.ndarray
    offset: float
    corners: np.ndarray

    @property
    def centroid(self) -> np.ndarray:
        return self.corners.mean(axis=0)

    @property
    def area(self) -> float:
        c = self.corners
        return float(np.linalg.norm(c[1] - c[0]) * np.linalg.norm(c[3] - c[0]))


@dataclass
class GroundTruthLabels:
    """Per-role face labels (``None`` marks an absent face).

    ``point_roles`` optionally gives, for every point of the matching cloud,
    the index into :data:`ROLES` of the face it was sampled from (-1 for
    clutter).
    """

    faces: dict
    point_roles: Optional[np.ndarray] = None

    def __post_init__(self):
        if set(self.faces) != set(ROLES):
            raise ValueError(f"labels must cover exactly the roles {ROLES}")

    def present(self, roles: Iterable[str] = ROLES) -> list[str]:
        return [r for r in roles if self.faces[r] is not None]


def _box_faces(spec: BoxSpec) -> dict[str, tuple[np.ndarray, np.ndarray, np.ndarray]]:
    """Faces as ``(origin, edge_u, edge_v)`` in the box frame; outward normal is ``u x v``."""
    w, d, h = spec.width, spec.depth, spec.height
    foot = np.array([[-w / 2, -d / 2, 0.0], [w / 2, -d / 2, 0.0], [w / 2, d / 2, 0.0], [-w / 2, d / 2, 0.0]])
    outward = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [-1.0, 0.0, 0.0]])
    up = np.array([0.0, 0.0, h])
    faces = {"base": (foot[0], foot[3] - foot[0], foot[1] - foot[0])}
    for k in range(4):
        edge = foot[(k + 1) % 4] - foot[k]
        faces[f"side{k}"] = (foot[k], edge, up)
        reach = d / 2 if k % 2 == 0 else w / 2
        a = spec.flap_angles[k]
        direction = math.cos(a) * np.array([0.0, 0.0, 1.0]) + math.sin(a) * outward[k]
        faces[f"flap{k}"] = (foot[k] + up, edge, reach * direction)
    return faces


def _pose(spec: BoxSpec) -> tuple[np.ndarray, np.ndarray]:
    c, s = math.cos(spec.yaw), math.sin(spec.yaw)
    rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    return rot, np.array(spec.translation)


def box_face_labels(spec: BoxSpec) -> GroundTruthLabels:
    """Exact face labels of ``spec`` (occluded faces marked absent), without sampling."""
    rot, trans = _pose(spec)
    faces = {}
    for role, (origin, u, v) in _box_faces(spec).items():
        if role in spec.occluded_faces:
            faces[role] = None
            continue
        corners = np.array([origin, origin + u, origin + u + v, origin + v]) @ rot.T + trans
        normal = np.cross(u, v)
        normal = rot @ (normal / np.linalg.norm(normal))
        faces[role] = FaceLabel(normal=normal, offset=float(-normal @ corners[0]), corners=corners)
    return GroundTruthLabels(faces)


def synth_box(spec: BoxSpec, seed: int) -> tuple[PointCloud, GroundTruthLabels]:
    """Sample a synthetic box scan.

    Each visible face is sampled uniformly at ``spec.sampling_density`` points
    per square metre, then every point gets isotropic Gaussian noise of
    standard deviation ``spec.noise_sigma``. Labels hold the noise-free faces.
    """
    rng = np.random.default_rng(seed)
    labels = box_face_labels(spec)
    rot, trans = _pose(spec)
    chunks, roles = [], []
    faces = _box_faces(spec)
    for role_index, role in enumerate(ROLES):
        if labels.faces[role] is None:
            continue
        origin, u, v = faces[role]
        area = np.linalg.norm(u) * np.linalg.norm(v)
        n = int(round(area * spec.sampling_density))
        st = rng.random((n, 2))
        pts = origin + st[:, :1] * u + st[:, 1:] * v
        chunks.append(pts @ rot.T + trans)
        roles.append(np.full(n, role_index))
    points = np.concatenate(chunks) if chunks else np.zeros((0, 3))
    if spec.noise_sigma > 0:
        points = points + rng.normal(0.0, spec.noise_sigma, points.shape)
    labels.point_roles = np.concatenate(roles) if roles else np.zeros(0, dtype=int)
    return PointCloud(points, frame_note=f"synth_box seed={seed}"), labels


def add_clutter(
    cloud: PointCloud, labels: GroundTruthLabels, fraction: float, rng: np.random.Generator, margin: float = 0.3
) -> tuple[PointCloud, GroundTruthLabels]:
    """Append ``fraction * len(cloud)`` uniform points in the cloud's bounding box grown by ``margin``."""
    n = int(round(fraction * len(cloud)))
    lo = cloud.points.min(axis=0) - margin
    hi = cloud.points.max(axis=0) + margin
    extra = lo + rng.random((n, 3)) * (hi - lo)
    roles = labels.point_roles if labels.point_roles is not None else np.full(len(cloud), -1)
    new_labels = GroundTruthLabels(dict(labels.faces), np.concatenate([roles, np.full(n, -1)]))
    return PointCloud(np.vstack([cloud.points, extra]), cloud.frame_note), new_labels


# ---------------------------------------------------------------------------
# Ground removal and clustering


def remove_ground(
    cloud: PointCloud,
    inlier_tol: float = 0.01,
    *,
    up=(0.0, 0.0, 1.0),
    max_tilt: float = math.radians(15.0),
    min_fraction: float = 0.10,
    iterations: int = 500,
    seed: int = 0,
) -> tuple[PointCloud, PointCloud]:
    """Split off the ground: the largest RANSAC plane whose normal is within ``max_tilt`` of ``up``.

    Returns ``(ground, rest)``. When no such plane holds at least
    ``min_fraction`` of the points, returns ``(empty, cloud)`` and emits a
    :class:`GroundNotFoundWarning`.
    """
    from .segmentation import DegenerateInputError, ransac_plane

    if len(cloud) == 0:
        raise ValueError("remove_ground needs a non-empty cloud")
    empty = PointCloud(np.zeros((0, 3)), cloud.frame_note)
    try:
        _, inliers, _ = ransac_plane(
            cloud, inlier_tol, iterations, seed, axis=np.asarray(up, dtype=float), max_axis_angle=max_tilt
        )
    except DegenerateInputError:
        inliers = np.zeros(0, dtype=int)
    if len(inliers) < min_fraction * len(cloud):
        warnings.warn("no dominant near-horizontal plane; nothing removed", GroundNotFoundWarning, stacklevel=2)
        return empty, cloud
    mask = np.zeros(len(cloud), dtype=bool)
    mask[inliers] = True
    return cloud.subset(mask), cloud.subset(~mask)


def cluster_labels(points: np.ndarray, tol: float) -> np.ndarray:
    """Connected-component label per point for the graph joining points within ``tol``."""
    n = points.shape[0]
    if n == 0:
        return np.zeros(0, dtype=int)
    pairs = cKDTree(points).query_pairs(tol, output_type="ndarray")
    graph = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    _, labels = connected_components(graph, directed=False)
    return labels


def euclidean_cluster_indices(points: np.ndarray, tol: float, min_size: int = 1) -> list[np.ndarray]:
    """Index arrays of the single-linkage clusters of ``points``, largest first."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    labels = cluster_labels(points, tol)
    if labels.size == 0:
        return []
    counts = np.bincount(labels)
    # Stable order: size descending, then by the smallest member index.
    first = np.full(counts.size, labels.size)
    np.minimum.at(first, labels, np.arange(labels.size))
    order = np.lexsort((first, -counts))
    return [np.flatnonzero(labels == c) for c in order if counts[c] >= min_size]


def euclidean_cluster(cloud: PointCloud, tol: float = 0.02, min_size: int = 200) -> list[PointCloud]:
    """Exact single-linkage clusters (points within ``tol`` are linked), largest first.

    Clusters with fewer than ``min_size`` points are dropped.
    """
    return [cloud.subset(idx) for idx in euclidean_cluster_indices(cloud.points, tol, min_size)]
