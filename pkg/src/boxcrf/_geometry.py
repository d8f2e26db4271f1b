"""Small vector-geometry helpers shared by the segmentation, model and planner code."""

from __future__ import annotations

import numpy as np


class DegenerateGeometryError(ValueError):
    """Raised when input geometry is too degenerate to define the requested quantity."""


def unit(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v)
    if n == 0.0 or not np.isfinite(n):
        raise DegenerateGeometryError("cannot normalise a zero-length vector")
    return v / n


def angle_between(a: np.ndarray, b: np.ndarray) -> float:
    """Angle in [0, pi] between two (not necessarily unit) vectors."""
    a = unit(a)
    b = unit(b)
    return float(np.arccos(np.clip(a @ b, -1.0, 1.0)))


def axis_angle(a: np.ndarray, b: np.ndarray) -> float:
    """Angle in [0, pi/2] between the undirected lines spanned by ``a`` and ``b``."""
    theta = angle_between(a, b)
    return min(theta, np.pi - theta)


def plane_basis(normal: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(e1, e2)`` spanning the plane so that ``(e1, e2, normal)`` is right-handed.

    The basis depends only on ``normal``, so repeated calls are reproducible.
    """
    n = unit(normal)
    helper = np.zeros(3)
    helper[int(np.argmin(np.abs(n)))] = 1.0
    e1 = unit(np.cross(helper, n))
    e2 = np.cross(n, e1)
    return e1, e2


def rotate_about_axis(points: np.ndarray, origin: np.ndarray, axis: np.ndarray, angle: float) -> np.ndarray:
    """Rotate ``points`` (N, 3) by ``angle`` about the line through ``origin`` along ``axis``."""
    k = unit(axis)
    p = np.asarray(points, dtype=float) - origin
    c, s = np.cos(angle), np.sin(angle)
    rotated = p * c + np.cross(k, p) * s + np.outer(p @ k, k) * (1.0 - c)
    return rotated + origin


def segment_distances(p0: np.ndarray, p1: np.ndarray, q0: np.ndarray, q1: np.ndarray) -> np.ndarray:
    """Closest distance between 3D line segments ``[p0, p1]`` and ``[q0, q1]``.

    All inputs broadcast against each other with a trailing axis of length 3.
    Follows the clamped closed-form solution (Ericson, *Real-Time Collision
    Detection*, 5.1.9), vectorised.
    """
    p0, p1, q0, q1 = np.broadcast_arrays(*(np.asarray(x, dtype=float) for x in (p0, p1, q0, q1)))
    d1 = p1 - p0
    d2 = q1 - q0
    r = p0 - q0
    a = np.einsum("...i,...i", d1, d1)
    e = np.einsum("...i,...i", d2, d2)
    f = np.einsum("...i,...i", d2, r)
    c = np.einsum("...i,...i", d1, r)
    b = np.einsum("...i,...i", d1, d2)
    eps = 1e-15

    with np.errstate(divide="ignore", invalid="ignore"):
        denom = a * e - b * b
        s = np.where(denom > eps * np.maximum(a * e, eps), np.clip((b * f - c * e) / denom, 0.0, 1.0), 0.0)
        s = np.where(a <= eps, 0.0, s)
        s = np.where((e <= eps) & (a > eps), np.clip(-c / np.where(a > eps, a, 1.0), 0.0, 1.0), s)
        t = np.where(e <= eps, 0.0, (b * s + f) / np.where(e <= eps, 1.0, e))

        # t outside [0, 1]: clamp it and recompute s for the clamped t.
        t_lo = t < 0.0
        t_hi = t > 1.0
        s = np.where(t_lo & (a > eps), np.clip(-c / np.where(a > eps, a, 1.0), 0.0, 1.0), s)
        s = np.where(t_hi & (a > eps), np.clip((b - c) / np.where(a > eps, a, 1.0), 0.0, 1.0), s)
        t = np.clip(t, 0.0, 1.0)

    closest_p = p0 + d1 * s[..., None]
    closest_q = q0 + d2 * t[..., None]
    return np.linalg.norm(closest_p - closest_q, axis=-1)


def rectangle_gap(corners_a: np.ndarray, corners_b: np.ndarray) -> float:
    """Minimum distance between the boundary edges of two (4, 3) corner polygons."""
    a0 = np.asarray(corners_a, dtype=float)
    b0 = np.asarray(corners_b, dtype=float)
    a1 = np.roll(a0, -1, axis=0)
    b1 = np.roll(b0, -1, axis=0)
    d = segment_distances(a0[:, None], a1[:, None], b0[None, :], b1[None, :])
    return float(d.min())


def closest_edge_pair(corners_a: np.ndarray, corners_b: np.ndarray) -> tuple[int, int, float]:
    """Indices ``(i, j)`` of the edge of ``a`` and edge of ``b`` that are closest, and their distance.

    Edge ``i`` runs from corner ``i`` to corner ``(i + 1) % 4``. Among edge pairs
    whose distance ties (e.g. two rectangles meeting at a shared edge, where the
    perpendicular edges also touch), the pair that is most nearly parallel wins.
    """
    a0 = np.asarray(corners_a, dtype=float)
    b0 = np.asarray(corners_b, dtype=float)
    a1 = np.roll(a0, -1, axis=0)
    b1 = np.roll(b0, -1, axis=0)
    d = segment_distances(a0[:, None], a1[:, None], b0[None, :], b1[None, :])
    da = a1 - a0
    db = b1 - b0
    da = da / np.linalg.norm(da, axis=1, keepdims=True)
    db = db / np.linalg.norm(db, axis=1, keepdims=True)
    parallel = np.abs(da @ db.T)
    scale = max(np.ptp(a0, axis=0).max(), np.ptp(b0, axis=0).max(), 1e-12)
    # Distances within a small fraction of the shape size count as ties.
    rounded = np.round(d / (1e-6 * scale))
    order = np.lexsort((-parallel.ravel(), rounded.ravel()))
    flat = int(order[0])
    i, j = divmod(flat, 4)
    return i, j, float(d[i, j])
