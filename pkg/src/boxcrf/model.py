"""The box template graph, its unary features and pairwise relations, and the linear score."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional, Sequence

import numpy as np

from ._geometry import DegenerateGeometryError, angle_between, axis_angle, rectangle_gap
from .pointcloud import ROLES
from .segmentation import Segment

SIDES = (0, 1, 2, 3)
BASE = 4
FLAPS = (5, 6, 7, 8)
N_NODES = 9

PHI_NAMES = ("phi1", "phi2", "phi3")
GAMMA_NAMES = ("gamma1", "gamma2", "gamma3", "gamma4", "gamma5")
FEATURE_NAMES = PHI_NAMES + GAMMA_NAMES


def flap_of(side: int) -> int:
    return FLAPS[side]


def side_of(flap: int) -> int:
    return flap - FLAPS[0]


# ---------------------------------------------------------------------------
# Template graph


@dataclass(frozen=True)
class Node:
    id: int
    role: str  # "side", "base" or "flap"

    @property
    def name(self) -> str:
        return ROLES[self.id]


@dataclass(frozen=True)
class Edge:
    """Relation-tagged edge. For ``gamma2`` the first node is the one expected to sit higher."""

    i: int
    j: int
    relations: frozenset

    @property
    def pair(self) -> tuple[int, int]:
        return (self.i, self.j)


@dataclass(frozen=True)
class TemplateGraph:
    nodes: tuple
    edges: tuple
    extended: bool = False

    def neighbors(self, node: int) -> set[int]:
        """The adjacency set of ``node``."""
        out = set()
        for e in self.edges:
            if e.i == node:
                out.add(e.j)
            elif e.j == node:
                out.add(e.i)
        return out

    def degree(self, node: int) -> int:
        return sum(node in e.pair for e in self.edges)

    def base_graph(self) -> "TemplateGraph":
        """The same template without the opposite-side (rectangularity) edges."""
        return box_template(extended=False)


def box_template(extended: bool = False) -> TemplateGraph:
    """The 9-node box template.

    Sides 0-3 form a 4-cycle, the base (4) touches every side and flap ``5 + k``
    hangs off side ``k``. Side-side and side-base edges carry the perpendicularity
    and connectivity relations, side-base and flap-side edges the "higher than"
    relation. ``extended`` adds the two opposite-side edges (0-2, 1-3) that
    carry the rectangularity and parallelism relations.
    """
    nodes = tuple(Node(i, "side") for i in SIDES) + (Node(BASE, "base"),) + tuple(Node(f, "flap") for f in FLAPS)
    edges = [Edge(k, (k + 1) % 4, frozenset({"gamma1", "gamma3"})) for k in SIDES]
    edges += [Edge(k, BASE, frozenset({"gamma1", "gamma2", "gamma3"})) for k in SIDES]
    edges += [Edge(flap_of(k), k, frozenset({"gamma2", "gamma3"})) for k in SIDES]
    if extended:
        edges += [Edge(0, 2, frozenset({"gamma4", "gamma5"})), Edge(1, 3, frozenset({"gamma4", "gamma5"}))]
    return TemplateGraph(nodes, tuple(edges), extended)


# ---------------------------------------------------------------------------
# Configuration, assignments and weights


@dataclass(frozen=True)
class FeatureConfig:
    """Tolerances and references for the feature functions.

    Orientation tolerances are radians, distance tolerances metres. ``L_ref``
    of ``None`` means "not set yet"; :func:`with_reference` fills it in.
    """

    tau_phi1: float = 0.26
    tau_phi2: float = 1.0
    tau_gamma1: float = 0.26
    tau_gamma2: float = 0.26
    tau_gamma3: float = 0.05
    tau_gamma4: float = 0.26
    tau_gamma5: float = 0.26
    u_up: tuple = (0.0, 0.0, 1.0)
    L_ref: Optional[tuple] = None
    alpha: float = math.pi / 2
    existence_reward: float = 1.0

    def __post_init__(self):
        for name in ("tau_phi1", "tau_phi2", "tau_gamma1", "tau_gamma2", "tau_gamma3", "tau_gamma4", "tau_gamma5"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"FeatureConfig.{name} must be positive, got {value!r}")
        up = np.asarray(self.u_up, dtype=float)
        if up.shape != (3,) or abs(np.linalg.norm(up) - 1.0) > 1e-9:
            raise ValueError("FeatureConfig.u_up must be a unit 3-vector")
        object.__setattr__(self, "u_up", tuple(float(x) for x in up))
        if self.L_ref is not None:
            object.__setattr__(self, "L_ref", tuple(float(x) for x in np.asarray(self.L_ref).reshape(3)))

    @property
    def up(self) -> np.ndarray:
        return np.array(self.u_up)

    @property
    def reference(self) -> np.ndarray:
        if self.L_ref is None:
            raise ValueError("FeatureConfig.L_ref is not set; use with_reference()")
        return np.array(self.L_ref)


def with_reference(cfg: FeatureConfig, segments: Sequence[Segment], point=None) -> FeatureConfig:
    """Return ``cfg`` with ``L_ref`` set.

    ``point`` (usually the centroid of the cluster being matched) wins; failing
    that an existing ``L_ref`` is kept; failing that the area-weighted mean of
    the segment centroids stands in for the cluster centroid.
    """
    if point is not None:
        return replace(cfg, L_ref=tuple(np.asarray(point, dtype=float)))
    if cfg.L_ref is not None:
        return cfg
    if not segments:
        return replace(cfg, L_ref=(0.0, 0.0, 0.0))
    areas = np.array([s.area for s in segments])
    centroids = np.array([s.centroid for s in segments])
    weights = areas if areas.sum() > 0 else np.ones(len(segments))
    return replace(cfg, L_ref=tuple(weights @ centroids / weights.sum()))


@dataclass(frozen=True)
class Assignment:
    """Template node -> segment index, ``None`` for an empty node."""

    nodes: tuple

    def __post_init__(self):
        nodes = tuple(None if s is None else int(s) for s in self.nodes)
        if len(nodes) != N_NODES:
            raise ValueError(f"an assignment has {N_NODES} entries, got {len(nodes)}")
        used = [s for s in nodes if s is not None]
        if any(s < 0 for s in used):
            raise ValueError("segment indices must be non-negative")
        if len(used) != len(set(used)):
            raise ValueError("a segment may be assigned to at most one node")
        object.__setattr__(self, "nodes", nodes)

    @classmethod
    def empty(cls) -> "Assignment":
        return cls((None,) * N_NODES)

    def __getitem__(self, node: int):
        return self.nodes[node]

    def __iter__(self):
        return iter(self.nodes)

    def assigned(self) -> list[int]:
        return [i for i, s in enumerate(self.nodes) if s is not None]

    def key(self) -> tuple:
        """Sort key: lexicographic on node order with empty nodes after any index."""
        return tuple(math.inf if s is None else s for s in self.nodes)

    def rotated(self, steps: int) -> "Assignment":
        """Shift sides and their flaps ``steps`` places around the cycle; the base stays."""
        out = [None] * N_NODES
        out[BASE] = self.nodes[BASE]
        for k in SIDES:
            k2 = (k + steps) % 4
            out[k2] = self.nodes[k]
            out[flap_of(k2)] = self.nodes[flap_of(k)]
        return Assignment(tuple(out))

    def mirrored(self) -> "Assignment":
        """Reverse the side cycle, keeping side 0 (and hence side 2) in place."""
        out = [None] * N_NODES
        out[BASE] = self.nodes[BASE]
        for k in SIDES:
            k2 = (-k) % 4
            out[k2] = self.nodes[k]
            out[flap_of(k2)] = self.nodes[flap_of(k)]
        return Assignment(tuple(out))

    def to_list(self) -> list:
        return list(self.nodes)


@dataclass(frozen=True)
class WeightVector:
    """Weights of the three unary features and the five relations."""

    w_phi: tuple = (1.0, 1.0, 1.0)
    w_gamma: tuple = (1.0, 1.0, 1.0, 1.0, 1.0)

    def __post_init__(self):
        w_phi = tuple(float(x) for x in self.w_phi)
        w_gamma = tuple(float(x) for x in self.w_gamma)
        if len(w_phi) != 3 or len(w_gamma) != 5:
            raise ValueError("WeightVector needs 3 unary and 5 relation weights")
        if not all(math.isfinite(x) for x in w_phi + w_gamma):
            raise ValueError("weights must be finite")
        object.__setattr__(self, "w_phi", w_phi)
        object.__setattr__(self, "w_gamma", w_gamma)

    def as_array(self) -> np.ndarray:
        return np.array(self.w_phi + self.w_gamma)

    @classmethod
    def from_array(cls, values) -> "WeightVector":
        values = np.asarray(values, dtype=float).reshape(8)
        return cls(tuple(values[:3]), tuple(values[3:]))

    def __getitem__(self, name: str) -> float:
        return float(self.as_array()[FEATURE_NAMES.index(name)])


@dataclass(frozen=True)
class FeatureVector:
    """Per-feature sums over an assignment, in :data:`FEATURE_NAMES` order."""

    values: np.ndarray = field(default_factory=lambda: np.zeros(8))

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float).reshape(8))

    def __getitem__(self, name: str) -> float:
        return float(self.values[FEATURE_NAMES.index(name)])

    def as_dict(self) -> dict:
        return {name: float(v) for name, v in zip(FEATURE_NAMES, self.values)}


# ---------------------------------------------------------------------------
# Unary features


def phi1_abs_orientation(seg: Segment, cfg: FeatureConfig) -> float:
    """Tolerance minus the angle between the segment's normal line and ``u_up``."""
    return cfg.tau_phi1 - axis_angle(seg.normal, cfg.up)


def phi2_abs_location(seg: Segment, cfg: FeatureConfig) -> float:
    """Tolerance minus the distance from the segment centroid to ``L_ref``."""
    return cfg.tau_phi2 - float(np.linalg.norm(seg.centroid - cfg.reference))


def phi3_existence(node_assignment: Optional[int], cfg: FeatureConfig) -> float:
    return 0.0 if node_assignment is None else cfg.existence_reward


# ---------------------------------------------------------------------------
# Relations


def gamma1_rel_orientation(si: Segment, sj: Segment, cfg: FeatureConfig) -> float:
    """Tolerance minus the deviation of the normals' line angle from ``alpha``."""
    return cfg.tau_gamma1 - abs(cfg.alpha - axis_angle(si.normal, sj.normal))


def gamma2_rel_location(si: Segment, sj: Segment, cfg: FeatureConfig) -> float:
    """Tolerance minus the angle between ``centroid_i - centroid_j`` and ``u_up``.

    Raises:
        DegenerateGeometryError: the centroids coincide.
    """
    return cfg.tau_gamma2 - angle_between(si.centroid - sj.centroid, cfg.up)


def gamma3_connectivity(si: Segment, sj: Segment, cfg: FeatureConfig) -> float:
    """Tolerance minus the smallest distance between the two rectangles' edges."""
    return cfg.tau_gamma3 - rectangle_gap(si.corners, sj.corners)


def top_edge(seg: Segment, up: np.ndarray) -> np.ndarray:
    """The two corners of the rectangle edge that sits highest along ``up``."""
    c = seg.corners
    heights = c @ up
    k = int(np.argmax(heights + np.roll(heights, -1)))
    return np.array([c[k], c[(k + 1) % 4]])


def opposite_skew(si: Segment, sj: Segment, up: np.ndarray) -> float:
    """Mean angle between associated top-corner offsets of two opposite sides and their normals.

    Every top corner of one side is paired with the nearest top corner of the
    other (both directions, 4 pairs). On a rectangular box each offset runs
    along the two sides' normals and the angle vanishes.

    Raises:
        DegenerateGeometryError: a pair of associated corners coincides.
    """
    ti, tj = top_edge(si, up), top_edge(sj, up)
    pairs = []
    for a, b in ((ti, tj), (tj, ti)):
        for p in a:
            q = b[int(np.argmin(np.linalg.norm(b - p, axis=1)))]
            pairs.append(p - q)
    angles = []
    for v in pairs:
        if np.linalg.norm(v) <= 1e-12:
            raise DegenerateGeometryError("associated corners coincide")
        angles.append(0.5 * (axis_angle(v, si.normal) + axis_angle(v, sj.normal)))
    return float(np.mean(angles))


def gamma4_rectangularity(sides: Sequence[Segment], cfg: FeatureConfig) -> float:
    """Tolerance minus the mean skew of the two opposite side pairs (0, 2) and (1, 3)."""
    if len(sides) != 4:
        raise ValueError("gamma4 needs the four sides in cycle order")
    up = cfg.up
    return cfg.tau_gamma4 - 0.5 * (opposite_skew(sides[0], sides[2], up) + opposite_skew(sides[1], sides[3], up))


def gamma5_opposite_parallel(si: Segment, sj: Segment, cfg: FeatureConfig) -> float:
    """Tolerance minus the angle between the two normals' lines."""
    return cfg.tau_gamma5 - axis_angle(si.normal, sj.normal)


def safe_gamma2(si: Segment, sj: Segment, cfg: FeatureConfig) -> float:
    """:func:`gamma2_rel_location`, scoring coincident centroids as a horizontal offset."""
    try:
        return gamma2_rel_location(si, sj, cfg)
    except DegenerateGeometryError:
        return cfg.tau_gamma2 - math.pi / 2


def safe_opposite_skew(si: Segment, sj: Segment, up: np.ndarray) -> float:
    try:
        return opposite_skew(si, sj, up)
    except DegenerateGeometryError:
        return math.pi / 2


_RELATION_FUNCS = {
    "gamma1": gamma1_rel_orientation,
    "gamma2": safe_gamma2,
    "gamma3": gamma3_connectivity,
    "gamma5": gamma5_opposite_parallel,
}


def edge_terms(si: Segment, sj: Segment, relations: Iterable[str], cfg: FeatureConfig) -> np.ndarray:
    """Values of the pairwise relations on one edge, as a length-5 vector in gamma order."""
    out = np.zeros(5)
    for rel in relations:
        if rel in _RELATION_FUNCS:
            out[GAMMA_NAMES.index(rel)] = _RELATION_FUNCS[rel](si, sj, cfg)
    return out


def unary_terms(seg: Segment, cfg: FeatureConfig) -> np.ndarray:
    return np.array([phi1_abs_orientation(seg, cfg), phi2_abs_location(seg, cfg), cfg.existence_reward])


def featurize(
    assign: Assignment, segments: Sequence[Segment], graph: TemplateGraph, cfg: FeatureConfig
) -> FeatureVector:
    """Sum every feature and relation over an assignment.

    Empty nodes contribute nothing, edges with an empty endpoint contribute
    nothing, and rectangularity only counts once all four sides are assigned.
    """
    values = np.zeros(8)
    for node in assign.assigned():
        values[:3] += unary_terms(segments[assign[node]], cfg)
    for edge in graph.edges:
        a, b = assign[edge.i], assign[edge.j]
        if a is None or b is None:
            continue
        values[3:] += edge_terms(segments[a], segments[b], edge.relations, cfg)
    if any("gamma4" in e.relations for e in graph.edges) and all(assign[k] is not None for k in SIDES):
        sides = [segments[assign[k]] for k in SIDES]
        values[3 + GAMMA_NAMES.index("gamma4")] += cfg.tau_gamma4 - 0.5 * (
            safe_opposite_skew(sides[0], sides[2], cfg.up) + safe_opposite_skew(sides[1], sides[3], cfg.up)
        )
    return FeatureVector(values)


def score(fv: FeatureVector, w: WeightVector) -> float:
    """The linear score: weights dotted with the feature sums."""
    return float(w.as_array() @ fv.values)
