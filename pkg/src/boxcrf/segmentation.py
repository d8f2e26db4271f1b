"""Planar segment extraction: RANSAC planes, connectivity filtering, convex hulls and minimum rectangles."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree

from ._geometry import DegenerateGeometryError, axis_angle, plane_basis
from .pointcloud import PointCloud, euclidean_cluster_indices


class DegenerateInputError(DegenerateGeometryError):
    """Points are too few or collinear to define a plane or polygon."""


@dataclass(frozen=True)
class PlaneModel:
    """Plane ``normal . p + offset = 0`` with a unit normal facing the sensor origin."""

    normal: np.ndarray
    offset: float

    def distance(self, points: np.ndarray) -> np.ndarray:
        """Signed point-to-plane distances."""
        return np.asarray(points, dtype=float) @ self.normal + self.offset


@dataclass(frozen=True)
class Segment:
    """A planar patch bounded by its minimum-area rectangle.

    ``corners`` run counterclockwise about ``plane.normal`` (right-hand rule)
    and ``centroid`` is the rectangle centre.
    """

    plane: PlaneModel
    centroid: np.ndarray
    corners: np.ndarray
    area: float
    inlier_count: int
    fit_error: float
    indices: Optional[np.ndarray] = field(default=None, repr=False, compare=False)

    @property
    def normal(self) -> np.ndarray:
        return self.plane.normal

    @property
    def edge_lengths(self) -> np.ndarray:
        return np.linalg.norm(np.roll(self.corners, -1, axis=0) - self.corners, axis=1)


@dataclass(frozen=True)
class SegmentationConfig:
    inlier_tol: float = 0.01
    iterations: int = 500
    min_inliers: int = 100
    error_limit: float = 0.01
    max_segments: int = 12
    cluster_tol: float = 0.02
    sample_radius: float = 0.05
    normal_tol: float = 0.5
    normal_neighbors: int = 16
    seed: int = 0

    def __post_init__(self):
        for name in ("inlier_tol", "iterations", "min_inliers", "error_limit", "max_segments", "cluster_tol", "sample_radius", "normal_tol", "normal_neighbors"):
            if not getattr(self, name) > 0:
                raise ValueError(f"SegmentationConfig.{name} must be positive")


def canonical_normal(normal: np.ndarray, point: np.ndarray) -> np.ndarray:
    """Flip ``normal`` so that it faces the origin from ``point`` (``normal . point < 0``).

    Planes through the origin fall back to making the largest component positive.
    """
    normal = np.asarray(normal, dtype=float)
    s = float(normal @ point)
    if abs(s) <= 1e-12 * max(1.0, float(np.linalg.norm(point))):
        return normal if normal[int(np.argmax(np.abs(normal)))] > 0 else -normal
    return -normal if s > 0 else normal


def fit_plane_lsq(points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Total-least-squares plane: ``(unit normal, centroid)``."""
    centroid = points.mean(axis=0)
    centered = points - centroid
    _, vecs = np.linalg.eigh(centered.T @ centered)
    return vecs[:, 0], centroid


def _plane_from(normal: np.ndarray, centroid: np.ndarray) -> PlaneModel:
    normal = canonical_normal(normal / np.linalg.norm(normal), centroid)
    return PlaneModel(normal, float(-normal @ centroid))


def _rms(d: np.ndarray) -> float:
    return float(np.sqrt(np.mean(d * d))) if d.size else 0.0


def ransac_plane(
    cloud: PointCloud,
    inlier_tol: float = 0.01,
    iterations: int = 500,
    seed: int = 0,
    *,
    axis: Optional[np.ndarray] = None,
    max_axis_angle: Optional[float] = None,
    sample_radius: Optional[float] = None,
) -> tuple[PlaneModel, np.ndarray, float]:
    """Fit a plane by RANSAC over random point triples, then refine it.

    The hypothesis with the most points within ``inlier_tol`` wins (earliest on
    ties). It is refined by total least squares on its inliers, re-thresholded
    and refitted until the inlier set stops changing, so the returned plane is
    the least-squares plane of exactly the returned inliers.

    Args:
        axis, max_axis_angle: when given, only hypotheses whose normal lies
            within ``max_axis_angle`` of the line ``axis`` are considered.
        sample_radius: when given, the second and third point of each triple
            are drawn from the neighbours of the first within this radius
            (falling back to the whole cloud for isolated points). Local
            triples usually lie on a single face of a multi-face object.

    Returns:
        ``(plane, inlier_indices, fit_error)`` where ``fit_error`` is the RMS
        inlier point-to-plane distance.

    Raises:
        DegenerateInputError: fewer than 3 points, or every sampled triple is
            collinear (or fails the axis constraint).
    """
    pts = cloud.points
    n = len(pts)
    if n < 3:
        raise DegenerateInputError("need at least 3 points to fit a plane")
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, n, size=(iterations, 3))
    if sample_radius is not None:
        idx[:, 1:] = _local_partners(pts, idx[:, 0], idx[:, 1:], sample_radius, rng)
    a, b, c = pts[idx[:, 0]], pts[idx[:, 1]], pts[idx[:, 2]]
    normals = np.cross(b - a, c - a)
    lengths = np.linalg.norm(normals, axis=1)
    scale = max(float(np.ptp(pts, axis=0).max()), 1e-300)
    valid = lengths > 1e-12 * scale * scale
    normals[valid] /= lengths[valid, None]
    if axis is not None and max_axis_angle is not None:
        up = np.asarray(axis, dtype=float) / np.linalg.norm(axis)
        cosines = np.abs(normals @ up)
        valid &= cosines >= np.cos(max_axis_angle)
    candidates = np.flatnonzero(valid)
    if candidates.size == 0:
        raise DegenerateInputError("all sampled point triples are degenerate")

    offsets = -np.einsum("ij,ij->i", normals[candidates], a[candidates])
    counts = np.empty(candidates.size, dtype=int)
    chunk = max(1, 2_000_000 // max(n, 1))
    for start in range(0, candidates.size, chunk):
        sl = slice(start, start + chunk)
        d = np.abs(pts @ normals[candidates[sl]].T + offsets[sl])
        counts[sl] = (d <= inlier_tol).sum(axis=0)
    best = int(np.argmax(counts))
    normal, point = normals[candidates[best]], a[candidates[best]]
    inliers = np.flatnonzero(np.abs((pts - point) @ normal) <= inlier_tol)

    for _ in range(10):
        if inliers.size < 3:
            break
        ref_normal, ref_centroid = fit_plane_lsq(pts[inliers])
        if axis is not None and max_axis_angle is not None and axis_angle(ref_normal, axis) > max_axis_angle:
            break
        new = np.flatnonzero(np.abs((pts - ref_centroid) @ ref_normal) <= inlier_tol)
        if new.size < 3:
            break
        normal, point = ref_normal, ref_centroid
        if np.array_equal(new, inliers):
            break
        inliers = new
    else:
        normal, point = fit_plane_lsq(pts[inliers])

    plane = _plane_from(normal, point)
    return plane, inliers, _rms(plane.distance(pts[inliers]))


def _local_partners(pts, first, fallback, radius, rng, k=16):
    k = min(k, len(pts))
    dist, nbrs = cKDTree(pts).query(pts[first], k=k)
    ok = dist <= radius
    counts = ok.sum(axis=1)
    # neighbours come sorted by distance, so the first `counts` columns are in range
    pick = (rng.random((len(first), 2)) * counts[:, None]).astype(int)
    chosen = np.take_along_axis(nbrs, pick, axis=1)
    return np.where((counts >= 3)[:, None], chosen, fallback)


def convex_hull_2d(points) -> np.ndarray:
    """Counterclockwise convex hull (monotone chain); collinear boundary points are dropped.

    Raises:
        DegenerateInputError: fewer than 3 distinct points or all collinear.
    """
    pts = np.unique(np.asarray(points, dtype=float).reshape(-1, 2), axis=0)  # sorted by x, then y
    if len(pts) < 3:
        raise DegenerateInputError("convex hull needs 3 non-collinear points")
    rows = pts.tolist()

    def half(seq):
        chain = []
        for p in seq:
            while len(chain) >= 2:
                (ox, oy), (ax, ay) = chain[-2], chain[-1]
                if (ax - ox) * (p[1] - oy) - (ay - oy) * (p[0] - ox) > 0:
                    break
                chain.pop()
            chain.append(p)
        return chain

    lower = half(rows)
    upper = half(reversed(rows))
    hull = lower[:-1] + upper[:-1]
    if len(hull) < 3:
        raise DegenerateInputError("all points are collinear")
    return np.array(hull)


def min_bounding_rect(hull) -> tuple[np.ndarray, float]:
    """Minimum-area rectangle enclosing a convex polygon.

    Some optimal rectangle has a side collinear with a hull edge, so every
    edge direction is tried. Returns ``(corners, area)`` with the 4 corners
    counterclockwise.
    """
    hull = np.asarray(hull, dtype=float)
    edges = np.roll(hull, -1, axis=0) - hull
    lengths = np.linalg.norm(edges, axis=1)
    keep = lengths > 0
    dirs = edges[keep] / lengths[keep, None]
    perps = np.column_stack([-dirs[:, 1], dirs[:, 0]])
    u = hull @ dirs.T  # (vertices, edges)
    v = hull @ perps.T
    umin, umax = u.min(axis=0), u.max(axis=0)
    vmin, vmax = v.min(axis=0), v.max(axis=0)
    areas = (umax - umin) * (vmax - vmin)
    k = int(np.argmin(areas))
    d, p = dirs[k], perps[k]
    corners = np.array(
        [
            umin[k] * d + vmin[k] * p,
            umax[k] * d + vmin[k] * p,
            umax[k] * d + vmax[k] * p,
            umin[k] * d + vmax[k] * p,
        ]
    )
    return corners, float(areas[k])


def segment_from_points(
    points: np.ndarray, plane: Optional[PlaneModel] = None, indices: Optional[np.ndarray] = None
) -> Segment:
    """Bound the points of one planar patch by the minimum rectangle of their projection."""
    points = np.asarray(points, dtype=float)
    if plane is None:
        plane = _plane_from(*fit_plane_lsq(points))
    e1, e2 = plane_basis(plane.normal)
    origin = -plane.offset * plane.normal
    rel = points - origin
    uv = np.column_stack([rel @ e1, rel @ e2])
    corners2, area = min_bounding_rect(convex_hull_2d(uv))
    corners = origin + corners2[:, :1] * e1 + corners2[:, 1:] * e2
    return Segment(
        plane=plane,
        centroid=corners.mean(axis=0),
        corners=corners,
        area=area,
        inlier_count=len(points),
        fit_error=_rms(plane.distance(points)),
        indices=indices,
    )


def segment_from_corners(corners, inlier_count: int = 0, fit_error: float = 0.0) -> Segment:
    """Build a Segment directly from 4 rectangle corners given in boundary order."""
    corners = np.asarray(corners, dtype=float).reshape(4, 3)
    plane = _plane_from(*fit_plane_lsq(corners))
    turn = np.cross(corners[1] - corners[0], corners[2] - corners[1]) @ plane.normal
    if turn < 0:
        corners = corners[::-1].copy()
    area = float(np.linalg.norm(corners[1] - corners[0]) * np.linalg.norm(corners[3] - corners[0]))
    return Segment(plane, corners.mean(axis=0), corners, area, inlier_count, fit_error)


def estimate_normals(points: np.ndarray, k: int = 16) -> np.ndarray:
    """Unsigned unit normals from the scatter of each point's ``k`` nearest neighbours."""
    points = np.asarray(points, dtype=float)
    k = min(k, len(points))
    if k < 3:
        return np.zeros_like(points)
    _, nbrs = cKDTree(points).query(points, k=k)
    local = points[nbrs] - points[nbrs].mean(axis=1, keepdims=True)
    _, vecs = np.linalg.eigh(np.einsum("nki,nkj->nij", local, local))
    return vecs[:, :, 0]


def extract_segments(cluster: PointCloud, config: SegmentationConfig = SegmentationConfig()) -> list[Segment]:
    """Peel planar segments off a cluster, largest plane first.

    Each round fits a RANSAC plane to the remaining points, keeps only the
    largest connected piece of its inliers, refits the plane to that piece and
    accepts it if it has at least ``min_inliers`` points and an RMS error no
    larger than ``error_limit``. Inliers whose local surface normal is more
    than ``normal_tol`` radians off the plane are dropped before the
    connectivity step; they belong to edges of other faces that happen to lie
    in the plane. Accepted points are removed. The first round
    that yields no acceptable plane ends the extraction.
    """
    pts = cluster.points
    remaining = np.arange(len(pts))
    segments: list[Segment] = []
    point_normals = estimate_normals(pts, config.normal_neighbors)
    round_ = 0
    while len(segments) < config.max_segments and remaining.size >= max(3, config.min_inliers):
        try:
            _, inliers, _ = ransac_plane(
                PointCloud(pts[remaining]),
                config.inlier_tol,
                config.iterations,
                config.seed + round_,
                sample_radius=config.sample_radius,
            )
        except DegenerateInputError:
            break
        round_ += 1
        fitted = _plane_from(*fit_plane_lsq(pts[remaining[inliers]])) if inliers.size >= 3 else None
        if fitted is not None:
            cosines = np.abs(point_normals[remaining[inliers]] @ fitted.normal)
            inliers = inliers[cosines >= np.cos(config.normal_tol)]
        pieces = euclidean_cluster_indices(pts[remaining[inliers]], config.cluster_tol)
        if not pieces:
            break
        patch = remaining[inliers[pieces[0]]]
        if patch.size < config.min_inliers:
            break
        patch_points = pts[patch]
        plane = _plane_from(*fit_plane_lsq(patch_points))
        if _rms(plane.distance(patch_points)) > config.error_limit:
            break
        try:
            segments.append(segment_from_points(patch_points, plane, indices=patch))
        except DegenerateInputError:
            break
        remaining = np.setdiff1d(remaining, patch, assume_unique=True)
    return segments
