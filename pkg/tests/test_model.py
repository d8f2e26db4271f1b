import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from boxcrf._geometry import DegenerateGeometryError
from boxcrf.model import (
    BASE,
    FEATURE_NAMES,
    FLAPS,
    SIDES,
    Assignment,
    FeatureConfig,
    FeatureVector,
    WeightVector,
    box_template,
    featurize,
    gamma1_rel_orientation,
    gamma2_rel_location,
    gamma3_connectivity,
    gamma4_rectangularity,
    gamma5_opposite_parallel,
    phi1_abs_orientation,
    phi2_abs_location,
    phi3_existence,
    score,
    with_reference,
)
from boxcrf.pointcloud import ROLES, BoxSpec, box_face_labels
from boxcrf.segmentation import segment_from_corners

from .helpers import random_segments, rectangle, rotate_z


def seg_with(normal=(0, 0, 1), centre=(0, 0, 0), half=(0.1, 0.1)):
    return segment_from_corners(rectangle(centre, normal, *half))


def box_segments(spec):
    labels = box_face_labels(spec)
    return [segment_from_corners(labels.faces[r].corners) for r in ROLES]


IDENTITY = Assignment(tuple(range(9)))


class TestTemplate:
    def test_base_edges(self):
        g = box_template()
        assert len(g.edges) == 12
        pairs = {frozenset(e.pair) for e in g.edges}
        assert {frozenset((k, (k + 1) % 4)) for k in SIDES} <= pairs
        assert {frozenset((k, BASE)) for k in SIDES} <= pairs
        assert {frozenset((k, FLAPS[k])) for k in SIDES} <= pairs

    def test_extended_edges(self):
        g = box_template(extended=True)
        assert len(g.edges) == 14
        assert {frozenset(e.pair) for e in g.edges if "gamma4" in e.relations} == {frozenset((0, 2)), frozenset((1, 3))}
        assert g.base_graph() == box_template()

    def test_flap_degree_one(self):
        g = box_template()
        for f in FLAPS:
            assert g.degree(f) == 1
        assert g.neighbors(BASE) == set(SIDES)
        assert g.neighbors(0) == {1, 3, BASE, FLAPS[0]}


class TestUnary:
    def test_phi1(self):
        cfg = FeatureConfig(tau_phi1=0.3)
        assert phi1_abs_orientation(seg_with((0, 0, 1)), cfg) == pytest.approx(0.3)
        assert phi1_abs_orientation(seg_with((1, 0, 0)), cfg) == pytest.approx(0.3 - math.pi / 2)
        assert phi1_abs_orientation(seg_with((0, 0, -1), (0, 0, -1)), cfg) == pytest.approx(0.3)

    def test_phi2(self):
        cfg = FeatureConfig(tau_phi2=0.5, L_ref=(1.0, 2.0, 3.0))
        assert phi2_abs_location(seg_with(centre=(1, 2, 3)), cfg) == pytest.approx(0.5)
        assert phi2_abs_location(seg_with(centre=(1, 2, 4)), cfg) == pytest.approx(-0.5)

    def test_phi2_translation_invariant(self):
        shift = np.array([0.4, -2.0, 7.0])
        cfg = FeatureConfig(L_ref=(0.1, 0.2, 0.3))
        moved = FeatureConfig(L_ref=tuple(np.array(cfg.L_ref) + shift))
        a = phi2_abs_location(seg_with(centre=(1, 1, 1)), cfg)
        b = phi2_abs_location(seg_with(centre=np.array([1, 1, 1]) + shift), moved)
        assert b == pytest.approx(a, abs=1e-12)

    def test_phi3(self):
        cfg = FeatureConfig(existence_reward=1.0)
        assert phi3_existence(3, cfg) == 1.0
        assert phi3_existence(None, cfg) == 0.0
        nodes = (0, 1, 2, 3, 4, 5, 6, None, None)
        assert sum(phi3_existence(s, cfg) for s in nodes) == 7.0

    def test_unset_reference(self):
        with pytest.raises(ValueError):
            phi2_abs_location(seg_with(), FeatureConfig())


class TestRelations:
    def test_gamma1(self):
        cfg = FeatureConfig(tau_gamma1=0.2)
        a, b = seg_with((0, 0, 1)), seg_with((1, 0, 0))
        assert gamma1_rel_orientation(a, b, cfg) == pytest.approx(0.2)
        assert gamma1_rel_orientation(a, seg_with((0, 0, 1), (0, 0, 1)), cfg) == pytest.approx(0.2 - math.pi / 2)
        c = seg_with((1, 2, 3))
        assert gamma1_rel_orientation(a, c, cfg) == gamma1_rel_orientation(c, a, cfg)

    def test_gamma2(self):
        cfg = FeatureConfig(tau_gamma2=0.5)
        lo, hi = seg_with(centre=(0, 0, 0)), seg_with(centre=(0, 0, 1))
        assert gamma2_rel_location(hi, lo, cfg) == pytest.approx(0.5)
        assert gamma2_rel_location(lo, hi, cfg) == pytest.approx(0.5 - math.pi)
        side = seg_with(centre=(1, 0, 0))
        assert gamma2_rel_location(side, lo, cfg) == pytest.approx(0.5 - math.pi / 2)
        with pytest.raises(DegenerateGeometryError):
            gamma2_rel_location(lo, seg_with((1, 0, 0), (0, 0, 0)), cfg)

    def test_gamma3(self):
        cfg = FeatureConfig(tau_gamma3=0.05)
        a = segment_from_corners([[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]])
        b = segment_from_corners([[1, 0, 0], [2, 0, 0], [2, 1, 0], [1, 1, 0]])
        far = segment_from_corners([[2, 0, 0], [3, 0, 0], [3, 1, 0], [2, 1, 0]])
        assert gamma3_connectivity(a, b, cfg) == pytest.approx(0.05)
        assert gamma3_connectivity(a, far, cfg) == pytest.approx(-0.95)
        assert gamma3_connectivity(far, a, cfg) == gamma3_connectivity(a, far, cfg)

    def test_gamma5(self):
        cfg = FeatureConfig(tau_gamma5=0.2)
        a = seg_with((1, 0, 0))
        assert gamma5_opposite_parallel(a, seg_with((1, 0, 0), (1, 0, 0)), cfg) == pytest.approx(0.2)
        assert gamma5_opposite_parallel(a, seg_with((0, 1, 0)), cfg) == pytest.approx(0.2 - math.pi / 2)
        assert gamma5_opposite_parallel(a, seg_with((-1, 0, 0), (1, 0, 0)), cfg) == pytest.approx(0.2)


class TestGamma4:
    def test_perfect_box(self):
        cfg = FeatureConfig()
        segs = box_segments(BoxSpec(0.5, 0.3, 0.4, yaw=0.7))
        assert gamma4_rectangularity(segs[:4], cfg) == pytest.approx(cfg.tau_gamma4, abs=1e-9)

    def test_sheared_twenty_degrees(self):
        # parallelogram footprint: the far side slides along x by d * tan(20 deg)
        w, d, h = 0.4, 0.3, 0.25
        s = d * math.tan(math.radians(20))
        p0, p1, p2, p3 = map(np.array, ([0, 0], [w, 0], [w + s, d], [s, d]))

        def wall(a, b):
            return segment_from_corners([[*a, 0], [*b, 0], [*b, h], [*a, h]])

        sides = [wall(p0, p1), wall(p1, p2), wall(p2, p3), wall(p3, p0)]
        cfg = FeatureConfig()
        value = gamma4_rectangularity(sides, cfg)
        assert value < cfg.tau_gamma4 - 0.17
        assert value == pytest.approx(cfg.tau_gamma4 - math.radians(20), abs=1e-9)

    @settings(max_examples=25, deadline=None)
    @given(st.floats(-math.pi, math.pi), st.floats(0.05, 0.6))
    def test_rotation_about_up_invariant(self, yaw, skew):
        segs = box_segments(BoxSpec(0.5, 0.3, 0.4))[:4]
        corners = [s.corners.copy() for s in segs]
        corners[2] = corners[2] + np.array([skew * 0.1, 0, 0])  # break rectangularity a little
        base = [segment_from_corners(c) for c in corners]
        turned = [segment_from_corners(rotate_z(c, yaw)) for c in corners]
        cfg = FeatureConfig()
        assert gamma4_rectangularity(turned, cfg) == pytest.approx(gamma4_rectangularity(base, cfg), abs=1e-9)

    def test_needs_four(self):
        with pytest.raises(ValueError):
            gamma4_rectangularity([seg_with()] * 3, FeatureConfig())


class TestFeaturize:
    def test_all_empty(self):
        fv = featurize(Assignment.empty(), [], box_template(True), FeatureConfig(L_ref=(0, 0, 0)))
        np.testing.assert_array_equal(fv.values, np.zeros(8))

    def test_single_node(self):
        segs = random_segments(np.random.default_rng(0), 3)
        a = Assignment((None, None, None, None, 1, None, None, None, None))
        fv = featurize(a, segs, box_template(True), with_reference(FeatureConfig(), segs))
        assert np.all(fv.values[3:] == 0)
        assert fv["phi3"] == 1.0

    def test_perfect_box_relations(self):
        spec = BoxSpec(0.5, 0.4, 0.3, flap_angles=(0.5, 0.9, 1.2, 0.7), yaw=0.3)
        segs = box_segments(spec)
        cfg = with_reference(FeatureConfig(), segs)
        fv = featurize(IDENTITY, segs, box_template(True), cfg)
        # 8 perpendicular side-side/side-base edges, 12 touching edges, 2 opposite pairs
        assert fv["gamma1"] == pytest.approx(8 * cfg.tau_gamma1, abs=1e-9)
        assert fv["gamma3"] == pytest.approx(12 * cfg.tau_gamma3, abs=1e-9)
        assert fv["gamma4"] == pytest.approx(cfg.tau_gamma4, abs=1e-9)
        assert fv["gamma5"] == pytest.approx(2 * cfg.tau_gamma5, abs=1e-9)
        # centroid offsets are not vertical, so gamma2 sits below tau by a computable amount
        c = [s.centroid for s in segs]
        up = np.array([0, 0, 1.0])

        def ang(v):
            return math.acos(float(v @ up) / float(np.linalg.norm(v)))

        expected = sum(cfg.tau_gamma2 - ang(c[k] - c[BASE]) for k in SIDES)
        expected += sum(cfg.tau_gamma2 - ang(c[FLAPS[k]] - c[k]) for k in SIDES)
        assert fv["gamma2"] == pytest.approx(expected, abs=1e-9)
        assert fv["phi3"] == 9.0

    def test_side_orientation_max_on_vertical(self):
        segs = box_segments(BoxSpec())
        cfg = FeatureConfig()
        assert phi1_abs_orientation(segs[BASE], cfg) == pytest.approx(cfg.tau_phi1)

    def test_gamma4_needs_all_sides(self):
        segs = box_segments(BoxSpec())
        cfg = with_reference(FeatureConfig(), segs)
        a = Assignment((0, 1, 2, None, 4, None, None, None, None))
        assert featurize(a, segs, box_template(True), cfg)["gamma4"] == 0.0

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10_000))
    def test_permutation_invariance(self, seed):
        rng = np.random.default_rng(seed)
        segs = random_segments(rng, 9)
        cfg = FeatureConfig(L_ref=(0.0, 0.0, 0.0))
        nodes = list(rng.permutation(9)[:7]) + [None, None]
        rng.shuffle(nodes)
        a = Assignment(tuple(nodes))
        perm = rng.permutation(9)  # old index -> new index
        shuffled = [None] * 9
        for old, new in enumerate(perm):
            shuffled[new] = segs[old]
        b = Assignment(tuple(None if s is None else int(perm[s]) for s in a))
        g = box_template(True)
        np.testing.assert_allclose(featurize(b, shuffled, g, cfg).values, featurize(a, segs, g, cfg).values, atol=1e-12)

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 10_000), st.floats(-math.pi, math.pi))
    def test_rigid_motion_invariance(self, seed, yaw):
        # rotate about the vertical and translate, carrying L_ref along
        rng = np.random.default_rng(seed)
        segs = random_segments(rng, 9)
        shift = rng.normal(size=3)
        moved = [segment_from_corners(rotate_z(s.corners, yaw) + shift) for s in segs]
        cfg = FeatureConfig(L_ref=(0.1, 0.2, 0.3))
        cfg2 = FeatureConfig(L_ref=tuple(rotate_z(np.array([cfg.L_ref]), yaw)[0] + shift))
        g = box_template(True)
        np.testing.assert_allclose(featurize(IDENTITY, moved, g, cfg2).values, featurize(IDENTITY, segs, g, cfg).values, atol=1e-9)


class TestScore:
    fv = FeatureVector(np.arange(1.0, 9.0))

    def test_zero_weights(self):
        assert score(self.fv, WeightVector((0, 0, 0), (0, 0, 0, 0, 0))) == 0.0

    @settings(max_examples=50)
    @given(
        st.lists(st.floats(-10, 10), min_size=8, max_size=8),
        st.lists(st.floats(-10, 10), min_size=8, max_size=8),
        st.floats(-5, 5),
    )
    def test_linearity(self, w1, w2, k):
        a, b = WeightVector.from_array(w1), WeightVector.from_array(w2)
        s = WeightVector.from_array(np.add(w1, w2))
        assert score(self.fv, s) == pytest.approx(score(self.fv, a) + score(self.fv, b), abs=1e-12 * 400)
        assert score(self.fv, WeightVector.from_array(np.multiply(k, w1))) == pytest.approx(
            k * score(self.fv, a), abs=1e-12 * 400
        )

    def test_doubling(self):
        w = WeightVector()
        assert score(self.fv, WeightVector.from_array(2 * w.as_array())) == 2 * score(self.fv, w)


class TestValueTypes:
    def test_assignment_rejects_duplicates(self):
        with pytest.raises(ValueError):
            Assignment((0, 0, None, None, None, None, None, None, None))
        with pytest.raises(ValueError):
            Assignment((0,) * 3)

    def test_rotation_group(self):
        a = Assignment((0, 1, 2, 3, 4, 5, 6, 7, 8))
        assert a.rotated(1).nodes == (3, 0, 1, 2, 4, 8, 5, 6, 7)
        assert a.rotated(4) == a
        assert a.mirrored().mirrored() == a

    def test_weights_validation(self):
        with pytest.raises(ValueError):
            WeightVector((1.0, 2.0))
        with pytest.raises(ValueError):
            WeightVector((1.0, math.nan, 0.0))
        assert WeightVector()["gamma3"] == 1.0
        assert len(FEATURE_NAMES) == 8

    @pytest.mark.parametrize("name", ["tau_phi1", "tau_gamma3"])
    def test_config_validation(self, name):
        with pytest.raises(ValueError, match=name):
            FeatureConfig(**{name: 0.0})
        with pytest.raises(ValueError):
            FeatureConfig(u_up=(0, 0, 2))

    def test_with_reference(self):
        segs = [seg_with(centre=(0, 0, 0)), seg_with(centre=(2, 0, 0), half=(0.2, 0.1))]
        cfg = with_reference(FeatureConfig(), segs)
        assert cfg.L_ref == pytest.approx((4 / 3, 0, 0))
        assert with_reference(FeatureConfig(), segs, point=(1, 1, 1)).L_ref == (1, 1, 1)
        assert with_reference(FeatureConfig(), []).L_ref == (0, 0, 0)
