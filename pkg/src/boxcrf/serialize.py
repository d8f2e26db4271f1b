"""JSON documents for segments, models, weights, configs and closing plans."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Optional

import numpy as np

from .learning import FittedWeights, Standardization
from .model import FEATURE_NAMES, Assignment, FeatureVector, WeightVector
from .planner import ClosingPlan
from .pointcloud import ROLES
from .segmentation import PlaneModel, Segment

FORMAT_VERSION = 1


class DocumentError(ValueError):
    """A document is missing fields or has the wrong kind."""


def _floats(a) -> list:
    return np.asarray(a, dtype=float).tolist()


def _expect(doc: Any, kind: str) -> dict:
    if not isinstance(doc, dict) or doc.get("kind") != kind:
        found = doc.get("kind") if isinstance(doc, dict) else type(doc).__name__
        raise DocumentError(f"expected a {kind!r} document, found {found!r}")
    return doc


def dumps(doc: dict) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def write(doc: dict, path) -> None:
    Path(path).write_text(dumps(doc))


def read(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise DocumentError(f"{path}: not valid JSON ({exc})") from None


# -- segments ----------------------------------------------------------------


def segment_to_dict(seg: Segment) -> dict:
    return {
        "normal": _floats(seg.normal),
        "offset": float(seg.plane.offset),
        "centroid": _floats(seg.centroid),
        "corners": _floats(seg.corners),
        "area": float(seg.area),
        "inlier_count": int(seg.inlier_count),
        "fit_error": float(seg.fit_error),
    }


def segment_from_dict(d: dict) -> Segment:
    try:
        plane = PlaneModel(np.asarray(d["normal"], dtype=float), float(d["offset"]))
        return Segment(
            plane,
            np.asarray(d["centroid"], dtype=float),
            np.asarray(d["corners"], dtype=float).reshape(4, 3),
            float(d["area"]),
            int(d["inlier_count"]),
            float(d["fit_error"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DocumentError(f"malformed segment: {exc}") from None


# -- assignments and models --------------------------------------------------


def assignment_to_dict(assign: Assignment) -> dict:
    return {role: assign[i] for i, role in enumerate(ROLES)}


def assignment_from_dict(d: dict) -> Assignment:
    if set(d) != set(ROLES):
        raise DocumentError(f"assignment must map exactly the roles {', '.join(ROLES)}")
    nodes = []
    for role in ROLES:
        v = d[role]
        if v is not None and (isinstance(v, bool) or not isinstance(v, int) or v < 0):
            raise DocumentError(f"assignment[{role}] must be a segment index or null")
        nodes.append(v)
    return Assignment(tuple(nodes))


def model_to_dict(assign: Assignment, score: float, segments, features: Optional[FeatureVector] = None, **extra) -> dict:
    doc = {
        "kind": "box_model",
        "version": FORMAT_VERSION,
        "assignment": assignment_to_dict(assign),
        "score": float(score),
        "segments": [segment_to_dict(s) for s in segments],
    }
    if features is not None:
        doc["features"] = {k: float(v) for k, v in zip(FEATURE_NAMES, features.values)}
    doc.update(extra)
    return doc


def model_from_dict(doc: dict) -> tuple[Assignment, float, list]:
    """``(assignment, score, segments)`` of a model document."""
    _expect(doc, "box_model")
    try:
        assign = assignment_from_dict(doc["assignment"])
        segments = [segment_from_dict(s) for s in doc["segments"]]
        score = float(doc["score"])
    except KeyError as exc:
        raise DocumentError(f"model document lacks {exc}") from None
    bad = [s for s in assign if s is not None and s >= len(segments)]
    if bad:
        raise DocumentError(f"assignment refers to missing segment(s) {bad}")
    return assign, score, segments


# -- weights -------------------------------------------------------------------


def weights_to_dict(weights, standardization: Optional[Standardization] = None) -> dict:
    if isinstance(weights, FittedWeights):
        weights, standardization = weights.weights, weights.standardization
    doc = {
        "kind": "weights",
        "version": FORMAT_VERSION,
        "weights": {k: float(v) for k, v in zip(FEATURE_NAMES, weights.as_array())},
    }
    if standardization is not None:
        doc["standardization"] = {
            "mean": dict(zip(FEATURE_NAMES, map(float, standardization.mean))),
            "scale": dict(zip(FEATURE_NAMES, map(float, standardization.scale))),
            "intercept": standardization.intercept,
            "lam": standardization.lam,
        }
    return doc


def weights_from_dict(doc: dict) -> WeightVector:
    _expect(doc, "weights")
    w = doc.get("weights")
    if not isinstance(w, dict) or set(w) != set(FEATURE_NAMES):
        raise DocumentError(f"weights must give exactly {', '.join(FEATURE_NAMES)}")
    return WeightVector.from_array(np.array([float(w[k]) for k in FEATURE_NAMES]))


# -- plans -----------------------------------------------------------------------


def plan_to_dict(plan: ClosingPlan) -> dict:
    return {
        "kind": "closing_plan",
        "version": FORMAT_VERSION,
        "order": plan.order,
        "flaps": [
            {
                "role": f.role,
                "hinge": {"point": _floats(f.hinge_point), "direction": _floats(f.hinge_direction)},
                "angle": f.angle,
                "waypoints": _floats(f.waypoints),
            }
            for f in plan.flaps
        ],
        "skipped": dict(plan.skipped),
    }
