"""Accuracy metrics for inferred box models and a benchmark harness."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ._geometry import axis_angle
from .model import Assignment
from .pointcloud import FLAP_ROLES, ROLES, FaceLabel, GroundTruthLabels

NORMAL_TOL = math.radians(10.0)
CENTROID_TOL = 0.05


class UndefinedMetricError(ValueError):
    """The labels contain none of the planes the metric is normalised by."""


def matches_face(segment, face: FaceLabel, normal_tol: float = NORMAL_TOL, centroid_tol: float = CENTROID_TOL) -> bool:
    """A segment identifies a labelled face when normals and centroids agree within tolerance."""
    return (
        axis_angle(segment.normal, face.normal) <= normal_tol
        and float(np.linalg.norm(segment.centroid - face.centroid)) <= centroid_tol
    )


def plane_counts(assign: Assignment, gt: GroundTruthLabels, segments: Sequence, roles: Sequence[str]) -> tuple[int, int, int]:
    """``(correct, wrong, present)`` over ``roles`` for one fixed orientation of ``assign``.

    A node counts as wrong when it holds a segment that does not match the
    labelled face of its role, including when that face is absent.
    """
    correct = wrong = 0
    for role in roles:
        s = assign[ROLES.index(role)]
        if s is None:
            continue
        face = gt.faces[role]
        if face is not None and matches_face(segments[s], face):
            correct += 1
        else:
            wrong += 1
    present = sum(gt.faces[r] is not None for r in roles)
    return correct, wrong, present


def best_rotation_counts(assign: Assignment, gt: GroundTruthLabels, segments: Sequence, roles: Sequence[str]):
    """:func:`plane_counts` at the rotation of ``assign`` maximising correct minus wrong."""
    best = None
    for r in range(4):
        c, w, p = plane_counts(assign.rotated(r), gt, segments, roles)
        if best is None or c - w > best[0] - best[1]:
            best = (c, w, p)
    return best


def _accuracy(assign, gt, segments, roles, what) -> float:
    c, w, p = best_rotation_counts(assign, gt, segments, roles)
    if p == 0:
        raise UndefinedMetricError(f"no {what} present in the labels")
    return 100.0 * (c - w) / p


def flap_accuracy(pred: Assignment, gt: GroundTruthLabels, segments: Sequence) -> float:
    """Correct flaps minus wrong flaps over flaps present, in percent, at the best rotation."""
    return _accuracy(pred, gt, segments, FLAP_ROLES, "flaps")


def full_model_accuracy(pred: Assignment, gt: GroundTruthLabels, segments: Sequence) -> float:
    """Correct planes minus wrong planes over planes present, in percent, at the best rotation."""
    return _accuracy(pred, gt, segments, ROLES, "planes")


def correctness_ratio(assign: Assignment, gt: GroundTruthLabels, segments: Sequence) -> float:
    """Fraction of labelled faces placed correctly (best rotation); the regression target."""
    best = max(plane_counts(assign.rotated(r), gt, segments, ROLES)[0] for r in range(4))
    present = len(gt.present())
    return best / present if present else 0.0


def truth_assignment(segments: Sequence, gt: GroundTruthLabels) -> Optional[Assignment]:
    """Map each present labelled face to its closest matching segment, or ``None`` if one has no match."""
    candidates = []
    for node, role in enumerate(ROLES):
        face = gt.faces[role]
        if face is None:
            continue
        for s, seg in enumerate(segments):
            if matches_face(seg, face):
                candidates.append((float(np.linalg.norm(seg.centroid - face.centroid)), node, s))
    nodes = [None] * len(ROLES)
    used = set()
    for _, node, s in sorted(candidates):
        if nodes[node] is None and s not in used:
            nodes[node] = s
            used.add(s)
    if any(nodes[i] is None for i, r in enumerate(ROLES) if gt.faces[r] is not None):
        return None
    return Assignment(tuple(nodes))


# ---------------------------------------------------------------------------
# Benchmark


@dataclass
class SceneResult:
    name: str
    category: str
    flap_accuracy: Optional[float] = None
    full_model_accuracy: Optional[float] = None
    flap_percent_correct: Optional[float] = None
    flap_counts: tuple = (0, 0, 0)
    plane_counts: tuple = (0, 0, 0)
    seconds: float = 0.0
    error: Optional[str] = None


@dataclass
class EvalReport:
    """Per-scene results and unweighted per-category / overall means."""

    scenes: list = field(default_factory=list)

    def _rows(self, scenes):
        ok = [s for s in scenes if s.error is None]
        out = {"scenes": len(scenes), "failed": len(scenes) - len(ok)}
        for name in ("flap_accuracy", "full_model_accuracy", "flap_percent_correct"):
            vals = [getattr(s, name) for s in scenes if getattr(s, name) is not None]
            out[name] = float(np.mean(vals)) if vals else None
        return out

    def categories(self) -> list[str]:
        seen = []
        for s in self.scenes:
            if s.category not in seen:
                seen.append(s.category)
        return seen

    def by_category(self) -> dict:
        return {c: self._rows([s for s in self.scenes if s.category == c]) for c in self.categories()}

    def overall(self) -> dict:
        return self._rows(self.scenes)

    @property
    def flap_accuracy(self) -> Optional[float]:
        return self.overall()["flap_accuracy"]

    @property
    def full_model_accuracy(self) -> Optional[float]:
        return self.overall()["full_model_accuracy"]

    def to_dict(self) -> dict:
        return {
            "overall": self.overall(),
            "categories": self.by_category(),
            "scenes": [vars(s) | {"flap_counts": list(s.flap_counts), "plane_counts": list(s.plane_counts)} for s in self.scenes],
        }

    def to_table(self) -> str:
        def fmt(v):
            return "   n/a" if v is None else f"{v:6.2f}"

        lines = [f"{'Box type':<16}{'Flap acc. (%)':>16}{'Full model acc. (%)':>22}{'Flaps correct (%)':>20}"]
        lines.append("-" * len(lines[0]))
        for cat, row in self.by_category().items():
            lines.append(
                f"{cat:<16}{fmt(row['flap_accuracy']):>16}{fmt(row['full_model_accuracy']):>22}"
                f"{fmt(row['flap_percent_correct']):>20}"
            )
        lines.append("-" * len(lines[0]))
        row = self.overall()
        lines.append(
            f"{'Full dataset':<16}{fmt(row['flap_accuracy']):>16}{fmt(row['full_model_accuracy']):>22}"
            f"{fmt(row['flap_percent_correct']):>20}"
        )
        return "\n".join(lines)


def evaluate_prediction(name: str, category: str, pred: Assignment, gt: GroundTruthLabels, segments) -> SceneResult:
    res = SceneResult(name, category)
    res.flap_counts = best_rotation_counts(pred, gt, segments, FLAP_ROLES)
    res.plane_counts = best_rotation_counts(pred, gt, segments, ROLES)
    c, w, p = res.flap_counts
    if p:
        res.flap_accuracy = 100.0 * (c - w) / p
        res.flap_percent_correct = 100.0 * c / p
    c, w, p = res.plane_counts
    if p:
        res.full_model_accuracy = 100.0 * (c - w) / p
    return res


def run_benchmark(dataset: Sequence, weights, config=None) -> EvalReport:
    """Run the full pipeline on every scene and score it against its labels.

    ``dataset`` holds :class:`~boxcrf.datasets.Scene` objects. A scene whose
    pipeline run fails is recorded with its error and scored as an empty
    model, so it counts as 0% rather than dropping out of the means.
    """
    import time

    from .pipeline import PipelineConfig, PipelineError, infer_box

    if not dataset:
        raise ValueError("run_benchmark needs a non-empty dataset")
    config = config or PipelineConfig()
    report = EvalReport()
    for scene in dataset:
        start = time.perf_counter()
        try:
            result = infer_box(scene.cloud, weights, config)
        except PipelineError as exc:
            # scored as if nothing was identified
            res = evaluate_prediction(scene.name, scene.category, Assignment.empty(), scene.labels, [])
            res.error = str(exc)
        else:
            res = evaluate_prediction(scene.name, scene.category, result.assignment, scene.labels, result.segments)
        res.seconds = time.perf_counter() - start
        report.scenes.append(res)
    return report
