"""Flap-closing plans: which flap to fold first and the path of each fold."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ._geometry import rotate_about_axis, segment_distances, unit
from .model import SIDES, Assignment, flap_of
from .pointcloud import ROLES
from .segmentation import Segment

HINGE_TOL = 0.05


class NoHingeError(ValueError):
    """The flap and side rectangles do not share an edge within tolerance."""


@dataclass(frozen=True)
class FlapArc:
    """Rotation of one flap about its hinge, from the observed pose to the closed pose."""

    role: str
    hinge_point: np.ndarray
    hinge_direction: np.ndarray
    angle: float
    waypoints: np.ndarray  # (steps, 4, 3) rectangle corners

    @property
    def steps(self) -> int:
        return len(self.waypoints)


@dataclass
class ClosingPlan:
    flaps: list = field(default_factory=list)
    skipped: dict = field(default_factory=dict)  # role -> reason

    @property
    def order(self) -> list[str]:
        return [f.role for f in self.flaps]

    def __len__(self) -> int:
        return len(self.flaps)


def closing_order(assign: Assignment, segments: Sequence[Segment]) -> list[str]:
    """Assigned flap roles by ascending rectangle area; equal areas keep role order."""
    flaps = [(segments[assign[flap_of(k)]].area, k) for k in SIDES if assign[flap_of(k)] is not None]
    return [f"flap{k}" for _, k in sorted(flaps)]


def hinge_edge(flap_corners: np.ndarray, side_corners: np.ndarray) -> tuple[int, float]:
    """Flap edge whose two endpoints lie closest to the side's boundary, and that endpoint distance.

    Judging both endpoints (rather than the closest point of each edge)
    singles out the shared edge even when the flap is coplanar with the side
    and its other edges also touch the side's outline.
    """
    f = np.asarray(flap_corners, dtype=float)
    s0 = np.asarray(side_corners, dtype=float)
    s1 = np.roll(s0, -1, axis=0)
    # distance of every flap corner to the side outline
    to_outline = segment_distances(f[:, None], f[:, None], s0[None], s1[None]).min(axis=1)
    cost = np.maximum(to_outline, np.roll(to_outline, -1))
    i = int(np.argmin(cost))
    return i, float(cost[i])


def flap_arc(
    flap: Segment,
    side: Segment,
    steps: int = 8,
    interior: Optional[np.ndarray] = None,
    tol: float = HINGE_TOL,
    role: str = "flap",
) -> FlapArc:
    """Fold ``flap`` about the edge it shares with ``side`` until it lies in the box-top plane.

    The hinge is the flap edge lying along the side's outline (see
    :func:`hinge_edge`). The closed pose
    is perpendicular to the side, on the same side of it as ``interior``
    (usually the box centre). Without ``interior`` the inward direction is
    taken opposite to the way the flap leans, or against the side normal if
    the flap stands straight up. Waypoints are spaced evenly in angle; the
    first is the flap as observed.

    Raises:
        ValueError: ``steps < 2``.
        NoHingeError: no flap edge lies within ``tol`` of the side's outline.
    """
    if steps < 2:
        raise ValueError("steps must be at least 2")
    i, gap = hinge_edge(flap.corners, side.corners)
    if gap > tol:
        raise NoHingeError(f"{role}: no edge within {tol} m of the side (closest {gap:.3f} m)")
    c = flap.corners
    p0, p1 = c[i], c[(i + 1) % 4]
    axis = unit(p1 - p0)

    def perpendicular(v):
        v = v - (v @ axis) * axis
        return unit(v)

    # e2: up along the side, away from its centre; e1: across the top, inward.
    e2 = perpendicular(p0 - side.centroid)
    e1 = perpendicular(np.cross(axis, e2))
    d = perpendicular(flap.centroid - p0)
    if interior is not None:
        inward = np.asarray(interior, dtype=float) - side.centroid
    elif abs(d @ e1) > 1e-6:
        inward = -d
    else:
        inward = -side.normal
    if inward @ e1 < 0:
        e1 = -e1
    theta = math.atan2(d @ e2, d @ e1)
    # rotating by +phi about `spin` takes e1 toward e2
    spin = np.cross(e1, e2)
    waypoints = np.array(
        [rotate_about_axis(c, p0, spin, -theta * t) for t in np.linspace(0.0, 1.0, steps)]
    )
    waypoints[0] = c
    return FlapArc(role, p0.copy(), axis, float(theta), waypoints)


def make_plan(
    assign: Assignment, segments: Sequence[Segment], steps: int = 8, tol: float = HINGE_TOL
) -> ClosingPlan:
    """Closing plan for every assigned flap, in :func:`closing_order`.

    Flaps whose side is empty or not adjacent are listed in ``skipped``.
    """
    plan = ClosingPlan()
    sides = [segments[assign[k]].centroid for k in SIDES if assign[k] is not None]
    interior = np.mean(sides, axis=0) if sides else None
    for role in closing_order(assign, segments):
        k = int(role[-1])
        if assign[k] is None:
            plan.skipped[role] = f"{ROLES[k]} is empty"
            continue
        try:
            plan.flaps.append(
                flap_arc(segments[assign[flap_of(k)]], segments[assign[k]], steps, interior, tol, role)
            )
        except NoHingeError as exc:
            plan.skipped[role] = str(exc)
    return plan
