"""Maximising the box score over segment-to-node assignments.

All searches share :class:`ScoreTables`, which caches every weighted unary and
pairwise term so that scoring an assignment is a handful of table lookups.
Index ``n`` (one past the last segment) stands for an empty node in every
table and scores zero.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from functools import lru_cache
from itertools import permutations, combinations
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .model import (
    BASE,
    FLAPS,
    GAMMA_NAMES,
    SIDES,
    Assignment,
    FeatureConfig,
    TemplateGraph,
    WeightVector,
    box_template,
    edge_terms,
    flap_of,
    safe_opposite_skew,
    unary_terms,
)
from .segmentation import Segment

MAX_BRUTE_FORCE = 8
TIE_TOL = 1e-9


@dataclass(frozen=True)
class InferenceConfig:
    """Search options.

    ``allow_empty`` lets side nodes stay empty (at most ``max_empty_sides`` of
    them); the base and flaps may always be empty. ``beam_limit`` caps how many
    side tuples are visited, in priority order, which makes the search inexact.
    """

    c_fraction: float = 0.25
    beam_limit: Optional[int] = None
    allow_empty: bool = True
    max_empty_sides: int = 2
    prune: bool = True
    batch_size: int = 512

    def __post_init__(self):
        if not 0.0 < self.c_fraction <= 1.0:
            raise ValueError("c_fraction must lie in (0, 1]")
        if self.beam_limit is not None and self.beam_limit < 1:
            raise ValueError("beam_limit must be positive")
        if not 0 <= self.max_empty_sides <= 4:
            raise ValueError("max_empty_sides must lie in [0, 4]")

    @property
    def empty_sides_allowed(self) -> int:
        return self.max_empty_sides if self.allow_empty else 0


@dataclass
class SearchStats:
    """Work counters filled in by the searches."""

    tuples_enumerated: int = 0
    tuples_completed: int = 0
    tuples_pruned: int = 0
    completion_evaluations: int = 0
    conflict_resolutions: int = 0
    assignments_enumerated: int = 0

    @property
    def work_per_tuple(self) -> float:
        return self.completion_evaluations / self.tuples_completed if self.tuples_completed else 0.0


class ScoreTables:
    """Weighted score terms of every segment and segment pair for the box template."""

    def __init__(self, segments: Sequence[Segment], graph: TemplateGraph, weights: WeightVector, cfg: FeatureConfig):
        _check_box_graph(graph)
        n = len(segments)
        self.n = n
        self.extended = graph.extended
        w = weights.as_array()
        w_phi, w_gamma = w[:3], w[3:]
        self.w_gamma4 = w_gamma[GAMMA_NAMES.index("gamma4")]
        self.tau_gamma4 = cfg.tau_gamma4

        self.unary = np.zeros(n + 1)
        for i, s in enumerate(segments):
            self.unary[i] = w_phi @ unary_terms(s, cfg)

        rel = {_edge_class(e): e.relations for e in graph.edges}
        self.side_side = np.zeros((n + 1, n + 1))
        self.side_base = np.zeros((n + 1, n + 1))
        self.flap_side = np.zeros((n + 1, n + 1))
        self.opposite = np.zeros((n + 1, n + 1))
        self.skew = np.zeros((n + 1, n + 1))
        up = cfg.up
        masks = {k: np.isin(GAMMA_NAMES, list(v)).astype(float) for k, v in rel.items()}
        every = tuple(GAMMA_NAMES)
        for a in range(n):
            for b in range(n):
                if a == b:
                    continue
                sa, sb = segments[a], segments[b]
                weighted = w_gamma * edge_terms(sa, sb, every, cfg)
                self.side_side[a, b] = weighted @ masks["side_side"]
                self.side_base[a, b] = weighted @ masks["side_base"]
                self.flap_side[a, b] = weighted @ masks["flap_side"]
                if self.extended:
                    self.opposite[a, b] = weighted @ masks["opposite"]
                    self.skew[a, b] = safe_opposite_skew(sa, sb, up)

    # -- scoring -----------------------------------------------------------

    def side_scores(self, tuples: np.ndarray) -> np.ndarray:
        """Score of the terms that involve side nodes only, for ``(B, 4)`` side tuples."""
        t = tuples
        total = self.unary[t].sum(axis=1)
        for k in SIDES:
            total += self.side_side[t[:, k], t[:, (k + 1) % 4]]
        if self.extended:
            total += self.opposite[t[:, 0], t[:, 2]] + self.opposite[t[:, 1], t[:, 3]]
            full = np.all(t < self.n, axis=1)
            rect = self.tau_gamma4 - 0.5 * (self.skew[t[:, 0], t[:, 2]] + self.skew[t[:, 1], t[:, 3]])
            total += np.where(full, self.w_gamma4 * rect, 0.0)
        return total

    def completion_profits(self, tuples: np.ndarray) -> np.ndarray:
        """``(B, 5, n + 1)`` gains for putting each segment (last column: empty) on base, flap0..flap3.

        Segments already used as sides get ``-inf``.
        """
        n = self.n
        b = len(tuples)
        prof = np.empty((b, 5, n + 1))
        seg_unary = self.unary[None, :n]
        prof[:, 0, :n] = seg_unary + sum(self.side_base[tuples[:, k], :n] for k in SIDES)
        for k in SIDES:
            prof[:, 1 + k, :n] = seg_unary + self.flap_side[:n, tuples[:, k]].T
        prof[:, :, n] = 0.0
        used = np.zeros((b, n + 1), dtype=bool)
        used[np.arange(b)[:, None], tuples] = True
        used[:, n] = False
        prof[np.broadcast_to(used[:, None, :], prof.shape)] = -np.inf
        return prof

    def score_rows(self, rows: np.ndarray) -> np.ndarray:
        """Total score of full assignments given as ``(M, 9)`` rows of segment indices (``n`` = empty)."""
        total = self.side_scores(rows[:, :4])
        total += self.unary[rows[:, BASE]]
        for k in SIDES:
            total += self.side_base[rows[:, k], rows[:, BASE]]
            total += self.unary[rows[:, flap_of(k)]] + self.flap_side[rows[:, flap_of(k)], rows[:, k]]
        return total

    def score(self, assign: Assignment) -> float:
        return float(self.score_rows(assignment_to_row(assign, self.n)[None])[0])


def _edge_class(edge) -> str:
    i, j = edge.pair
    if i in SIDES and j in SIDES:
        return "opposite" if (i - j) % 2 == 0 else "side_side"
    if BASE in (i, j):
        return "side_base"
    return "flap_side"


def _check_box_graph(graph: TemplateGraph) -> None:
    expected = box_template(graph.extended)
    if {e.pair for e in graph.edges} != {e.pair for e in expected.edges}:
        raise ValueError("inference is specialised to the box template graph")
    classes = {}
    for e in graph.edges:
        classes.setdefault(_edge_class(e), set()).add(e.relations)
    if any(len(v) != 1 for v in classes.values()):
        raise ValueError("edges of one kind must carry the same relations")


def assignment_to_row(assign: Assignment, n: int) -> np.ndarray:
    return np.array([n if s is None else s for s in assign.nodes], dtype=np.int64)


def row_to_assignment(row, n: int) -> Assignment:
    return Assignment(tuple(None if int(s) == n else int(s) for s in row))


def _lex_best(rows: np.ndarray, scores: np.ndarray) -> int:
    """Index of the highest score; near-ties go to the lexicographically smallest row."""
    best = scores.max()
    tied = np.flatnonzero(scores >= best - TIE_TOL * max(1.0, abs(best)))
    if tied.size == 1:
        return int(tied[0])
    sub = rows[tied]
    order = np.lexsort(sub.T[::-1])
    return int(tied[order[0]])


def _rank(rows: np.ndarray, scores: np.ndarray) -> np.ndarray:
    """Order by descending score, treating near-equal scores as ties broken by the smaller row."""
    order = np.argsort(-scores, kind="stable")
    out = []
    i = 0
    while i < len(order):
        head = scores[order[i]]
        j = i + 1
        while j < len(order) and scores[order[j]] >= head - TIE_TOL * max(1.0, abs(head)):
            j += 1
        run = order[i:j]
        out.extend(run[np.lexsort(rows[run].T[::-1])] if len(run) > 1 else run)
        i = j
    return np.array(out, dtype=np.intp)


def _better(score_a: float, key_a, score_b: float, key_b) -> bool:
    """Whether candidate a beats candidate b (score first, then smaller key)."""
    tol = TIE_TOL * max(1.0, abs(score_a), abs(score_b))
    if score_a > score_b + tol:
        return True
    if score_a < score_b - tol:
        return False
    return tuple(key_a) < tuple(key_b)


# ---------------------------------------------------------------------------
# Exhaustive oracle


def count_assignments(n: int, nodes: int = 9) -> int:
    """Number of injective maps of ``nodes`` template nodes into ``n`` segments or empty."""
    return sum(math.comb(nodes, k) * math.perm(n, k) for k in range(min(n, nodes) + 1))


@lru_cache(maxsize=4)
def _all_rows(n: int) -> np.ndarray:
    """Every injective assignment row over ``n`` segments (value ``n`` = empty)."""
    rows = np.zeros((1, 0), dtype=np.int8)
    for _ in range(9):
        m = rows.shape[0]
        choice = np.tile(np.arange(n + 1, dtype=np.int8), m)
        rows = np.repeat(rows, n + 1, axis=0)
        clash = (rows == choice[:, None]).any(axis=1) & (choice < n)
        rows = np.column_stack([rows, choice])[~clash]
    rows.setflags(write=False)
    return rows


@lru_cache(maxsize=8)
def _feasible_columns(n: int, empty_sides_allowed: int) -> tuple:
    rows = _all_rows(n)
    empty_sides = (rows[:, :4] == n).sum(axis=1)
    all_empty = (rows == n).all(axis=1)
    keep = (empty_sides <= empty_sides_allowed) | all_empty
    return tuple(np.ascontiguousarray(rows[keep, i], dtype=np.intp) for i in range(9))


def brute_force_infer(
    segments: Sequence[Segment],
    graph: TemplateGraph,
    weights: WeightVector,
    cfg: FeatureConfig,
    inference_cfg: InferenceConfig = InferenceConfig(),
    stats: Optional[SearchStats] = None,
) -> tuple[Assignment, float]:
    """Score every injective assignment and return the best (smallest assignment on ties).

    Scores are summed edge by edge straight from ``graph``, independently of
    the factorised search. Only meant as an oracle: limited to ``n <= 8``.
    """
    n = len(segments)
    if n > MAX_BRUTE_FORCE:
        raise ValueError(f"brute force is limited to {MAX_BRUTE_FORCE} segments, got {n}")
    if stats is not None:
        stats.assignments_enumerated += count_assignments(n)
    cols = _feasible_columns(n, inference_cfg.empty_sides_allowed)
    w = weights.as_array()
    unary = np.zeros(n + 1)
    for i, s in enumerate(segments):
        unary[i] = w[:3] @ unary_terms(s, cfg)
    total = np.zeros(len(cols[0]))
    for node in range(9):
        total += unary[cols[node]]
    pair_cache = {}
    for edge in graph.edges:
        if edge.relations not in pair_cache:
            table = np.zeros((n + 1, n + 1))
            for a in range(n):
                for b in range(n):
                    if a != b:
                        table[a, b] = w[3:] @ edge_terms(segments[a], segments[b], edge.relations, cfg)
            pair_cache[edge.relations] = table.ravel()
        total += pair_cache[edge.relations][cols[edge.i] * (n + 1) + cols[edge.j]]
    if any("gamma4" in e.relations for e in graph.edges):
        skew = np.zeros((n + 1, n + 1))
        for a in range(n):
            for b in range(n):
                if a != b:
                    skew[a, b] = safe_opposite_skew(segments[a], segments[b], cfg.up)
        full = (cols[0] < n) & (cols[1] < n) & (cols[2] < n) & (cols[3] < n)
        rect = cfg.tau_gamma4 - 0.5 * (skew[cols[0], cols[2]] + skew[cols[1], cols[3]])
        total += np.where(full, w[3 + GAMMA_NAMES.index("gamma4")] * rect, 0.0)

    best = total.max()
    tied = np.flatnonzero(total >= best - TIE_TOL * max(1.0, abs(best)))
    rows = np.column_stack([c[tied] for c in cols])
    pick = tied[np.lexsort(rows.T[::-1])[0]]
    row = [int(c[pick]) for c in cols]
    return row_to_assignment(row, n), float(total[pick])


# ---------------------------------------------------------------------------
# Factored search


def side_tuples(n: int, max_empty: int) -> np.ndarray:
    """All ordered side 4-tuples of distinct segments with up to ``max_empty`` empty slots (index ``n``)."""
    blocks = []
    for e in range(0, min(max_empty, 4) + 1):
        k = 4 - e
        if k > n:
            continue
        perms = np.array(list(permutations(range(n), k)), dtype=np.int64).reshape(-1, k) if k else np.zeros((1, 0), np.int64)
        for empty_pos in combinations(range(4), e):
            block = np.full((len(perms), 4), n, dtype=np.int64)
            filled = [p for p in range(4) if p not in empty_pos]
            block[:, filled] = perms
            blocks.append(block)
    if not blocks:
        return np.zeros((0, 4), dtype=np.int64)
    return np.concatenate(blocks)


def count_side_tuples(n: int, max_empty: int) -> int:
    return sum(math.comb(4, e) * math.perm(n, 4 - e) for e in range(min(max_empty, 4) + 1) if 4 - e <= n)


def complete(tables: ScoreTables, tuples: np.ndarray, stats: Optional[SearchStats] = None):
    """Best base and flap choices for each side tuple.

    Given the sides, the base and each flap only interact through the rule
    that no segment is used twice, so each node first takes its own best
    segment; tuples where two nodes grab the same segment are re-solved as a
    small assignment problem.

    Returns ``(rows, scores)``: full ``(B, 9)`` assignment rows and their totals.
    """
    n = tables.n
    prof = tables.completion_profits(tuples)
    choice = prof.argmax(axis=2)  # ties go to the lower index, empty (n) last
    gain = np.take_along_axis(prof, choice[..., None], axis=2)[..., 0]
    if stats is not None:
        stats.tuples_completed += len(tuples)
        stats.completion_evaluations += int(np.isfinite(prof).sum())

    chosen = np.where(choice < n, choice, -1 - np.arange(5)[None, :])
    srt = np.sort(chosen, axis=1)
    clash = np.flatnonzero((srt[:, 1:] == srt[:, :-1]).any(axis=1))
    if len(clash):
        # each node's five best segments, best first, ties to the smaller index; -1 marks a forbidden slot
        sub = prof[clash, :, :n]
        top = np.argsort(-sub, axis=2, kind="stable")[:, :, :5]
        top = np.where(np.isfinite(np.take_along_axis(sub, top, axis=2)), top, -1)
    for k, r in enumerate(clash):
        picked = _lex_completion(prof[r], n, top[k])
        choice[r] = picked
        gain[r] = prof[r][np.arange(5), picked]
        if stats is not None:
            stats.conflict_resolutions += 1

    rows = np.empty((len(tuples), 9), dtype=np.int64)
    rows[:, :4] = tuples
    rows[:, BASE] = choice[:, 0]
    rows[:, list(FLAPS)] = choice[:, 1:]
    scores = tables.side_scores(tuples) + gain.sum(axis=1)
    return rows, scores


def _lex_completion(p: np.ndarray, n: int, top: np.ndarray) -> np.ndarray:
    """Lexicographically smallest optimal choice for the base and flaps when they compete for segments.

    Only each node's five best segments can appear in such a choice: four
    other nodes can block at most four of them, and a lower-ranked pick could
    always be swapped for a free better (or equal and smaller) one. The
    optimum comes from one assignment solve; a depth-first walk in
    lexicographic order then returns the first choice that reaches it.
    """
    ranked = [[int(c) for c in row if c >= 0] for row in top]
    cols = sorted({c for r in ranked for c in r})
    mat = np.concatenate([p[:, cols], np.repeat(p[:, n][:, None], 5, axis=1)], axis=1)
    ri, ci = linear_sum_assignment(mat, maximize=True)
    target = float(mat[ri, ci].sum())
    floor = target - TIE_TOL * max(1.0, abs(target))

    opts = [sorted(r) + [n] for r in ranked]
    vals = [[float(p[i, s]) for s in opts[i]] for i in range(5)]
    suffix = [0.0] * 6
    for i in range(4, -1, -1):
        suffix[i] = suffix[i + 1] + max(vals[i])

    def walk(i, used, acc):
        if i == 5:
            return [] if acc >= floor else None
        for s, v in zip(opts[i], vals[i]):
            if s in used or acc + v + suffix[i + 1] < floor:
                continue
            tail = walk(i + 1, used | {s} if s != n else used, acc + v)
            if tail is not None:
                return [s] + tail
        return None

    return np.array(walk(0, frozenset(), 0.0))


def _completion_bound(tables: ScoreTables, tuples: np.ndarray) -> np.ndarray:
    """Admissible upper bound on the best completion of each tuple (ignores distinctness)."""
    n = tables.n
    u = tables.unary[:n]
    if n == 0:
        return np.zeros(len(tuples))
    base_best = (u[None, :] + sum(tables.side_base[tuples[:, k], :n] for k in SIDES)).max(axis=1)
    flap_best = np.maximum((u[:, None] + tables.flap_side[:n, :]).max(axis=0), 0.0)  # per side segment
    return np.maximum(base_best, 0.0) + flap_best[tuples].sum(axis=1)


def infer(
    segments: Sequence[Segment],
    graph: TemplateGraph,
    weights: WeightVector,
    cfg: FeatureConfig,
    inference_cfg: InferenceConfig = InferenceConfig(),
    stats: Optional[SearchStats] = None,
) -> tuple[Assignment, float]:
    """Exact maximiser via the side-conditioned factorisation.

    Side tuples come off a priority queue keyed on their summed unary score;
    each one is completed in time linear in the number of segments. Tuples
    whose optimistic bound cannot beat the incumbent are skipped when
    ``inference_cfg.prune`` is set. The returned score matches
    :func:`brute_force_infer`.
    """
    stats = stats if stats is not None else SearchStats()
    n = len(segments)
    tables = ScoreTables(segments, graph, weights, cfg)
    best_row = np.full(9, n, dtype=np.int64)
    best_score = 0.0
    tuples = side_tuples(n, inference_cfg.empty_sides_allowed)
    stats.tuples_enumerated += len(tuples)
    if len(tuples) == 0:
        return row_to_assignment(best_row, n), best_score

    priority = tables.unary[tuples].sum(axis=1)
    heap = [(-p, i) for i, p in enumerate(priority.tolist())]
    heapq.heapify(heap)
    budget = inference_cfg.beam_limit if inference_cfg.beam_limit is not None else len(heap)
    side_score = tables.side_scores(tuples)

    while heap and budget > 0:
        take = min(inference_cfg.batch_size, budget, len(heap))
        idx = np.array([heapq.heappop(heap)[1] for _ in range(take)])
        budget -= take
        batch = tuples[idx]
        if inference_cfg.prune:
            bound = side_score[idx] + _completion_bound(tables, batch)
            keep = bound >= best_score - TIE_TOL * max(1.0, abs(best_score))
            stats.tuples_pruned += int((~keep).sum())
            batch = batch[keep]
            if len(batch) == 0:
                continue
        rows, scores = complete(tables, batch, stats)
        i = _lex_best(rows, scores)
        if _better(scores[i], rows[i], best_score, best_row):
            best_row, best_score = rows[i], float(scores[i])
    return row_to_assignment(best_row, n), best_score


# ---------------------------------------------------------------------------
# Two-stage search


@dataclass
class CandidateList:
    """Completed candidates, best first. Rows use index ``n`` for empty nodes."""

    rows: np.ndarray
    scores: np.ndarray
    n: int

    def __len__(self) -> int:
        return len(self.scores)

    def __getitem__(self, i: int) -> tuple[Assignment, float]:
        return row_to_assignment(self.rows[i], self.n), float(self.scores[i])


def candidate_list(
    segments: Sequence[Segment],
    graph: TemplateGraph,
    weights: WeightVector,
    cfg: FeatureConfig,
    inference_cfg: InferenceConfig = InferenceConfig(),
    stats: Optional[SearchStats] = None,
) -> CandidateList:
    """Best completion of every side tuple under ``graph``, sorted by score (then assignment)."""
    n = len(segments)
    tables = ScoreTables(segments, graph, weights, cfg)
    tuples = side_tuples(n, inference_cfg.empty_sides_allowed)
    if stats is not None:
        stats.tuples_enumerated += len(tuples)
    rows, scores = complete(tables, tuples, stats) if len(tuples) else (np.zeros((0, 9), np.int64), np.zeros(0))
    rows = np.vstack([rows, np.full((1, 9), n, dtype=np.int64)])
    scores = np.append(scores, 0.0)
    order = _rank(rows, scores)
    if inference_cfg.beam_limit is not None:
        order = order[: inference_cfg.beam_limit]
    return CandidateList(rows[order], scores[order], n)


def infer_two_stage(
    segments: Sequence[Segment],
    graph: TemplateGraph,
    weights: WeightVector,
    cfg: FeatureConfig,
    inference_cfg: InferenceConfig = InferenceConfig(),
    stats: Optional[SearchStats] = None,
) -> tuple[Assignment, float]:
    """Search the sparse template, then rerank its top ``ceil(c * |L|)`` candidates with all relations.

    The first stage drops the rectangularity and opposite-side edges so the
    side-conditioned factorisation applies, keeping the best completion of
    every side tuple. The second stage rescores the leading fraction of that
    list under ``graph`` and returns the winner.
    """
    if not graph.extended:
        raise ValueError("infer_two_stage expects the extended template")
    sparse = box_template(extended=False)
    candidates = candidate_list(segments, sparse, weights, cfg, inference_cfg, stats)
    top = max(1, math.ceil(inference_cfg.c_fraction * len(candidates)))
    rows = candidates.rows[:top]
    full = ScoreTables(segments, graph, weights, cfg)
    scores = full.score_rows(rows)
    best = _lex_best(rows, scores)
    return row_to_assignment(rows[best], len(segments)), float(scores[best])


# ---------------------------------------------------------------------------
# Symmetry handling


def canonical_rotation(assign: Assignment) -> Assignment:
    """Smallest of the four cyclic rotations of ``assign`` (base fixed)."""
    return min((assign.rotated(r) for r in range(4)), key=Assignment.key)


def handedness(assign: Assignment, segments: Sequence[Segment], up=(0.0, 0.0, 1.0)) -> float:
    """Positive when the side cycle runs counterclockwise about ``up``, negative when clockwise.

    Adjacent assigned sides are judged around the corner where they meet.
    Without an adjacent pair the sides' (or, for empty sides, the flaps')
    centroids are compared around the centre of the assigned sides.
    """
    up = np.asarray(up, dtype=float)
    total = 0.0
    pairs = 0
    for k in SIDES:
        a, b = assign[k], assign[(k + 1) % 4]
        if a is None or b is None:
            continue
        ca, cb = segments[a].corners, segments[b].corners
        dist = np.linalg.norm(ca[:, None] - cb[None, :], axis=2)
        i, j = np.unravel_index(np.argmin(dist), dist.shape)
        corner = 0.5 * (ca[i] + cb[j])
        va, vb = segments[a].centroid - corner, segments[b].centroid - corner
        total -= np.cross(va, vb) @ up / max(np.linalg.norm(va) * np.linalg.norm(vb), 1e-300)
        pairs += 1
    if pairs:
        return float(total)

    sides = [assign[k] for k in SIDES if assign[k] is not None]
    if not sides:
        return 0.0
    centre = np.mean([segments[s].centroid for s in sides], axis=0)
    position = {}
    for k in SIDES:
        s = assign[k] if assign[k] is not None else assign[flap_of(k)]
        if s is not None:
            position[k] = segments[s].centroid - centre
    for k in SIDES:
        if k in position and (k + 1) % 4 in position:
            va, vb = position[k], position[(k + 1) % 4]
            total += np.cross(va, vb) @ up / max(np.linalg.norm(va) * np.linalg.norm(vb), 1e-300)
    return float(total)


def orient_counterclockwise(assign: Assignment, segments: Sequence[Segment], up=(0.0, 0.0, 1.0)) -> Assignment:
    """Pick, between ``assign`` and its mirror image, the one whose sides wind counterclockwise.

    Every feature is unchanged by reversing the side cycle, so both have the
    same score; this fixes the labelling convention.
    """
    return assign.mirrored() if handedness(assign, segments, up) < 0 else assign
