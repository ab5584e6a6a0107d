import json
import math

import numpy as np
import pytest

from activeseg.contours import polygon_vertex_count, simplify_closed, trace_boundary
from activeseg.data_model import (
    GroundTruthMask,
    PartialLabelMask,
    RegionRef,
    RegionState,
    build_grid,
    region_slices,
)
from activeseg.oracle_cost import (
    ActionKind,
    AnnotationAction,
    BudgetLedger,
    CostModel,
    InvalidStateError,
    annotate_full,
    annotate_point,
    infected_components,
    ledger_total,
    scenario_cost,
)

# ---------------------------------------------------------------------------
# Independent brute-force simplifier: a literal recursive RDP with its own
# point-to-segment distance, sharing only the extreme-anchor convention.


def _seg_dist(p, a, b):
    (pr, pc), (ar, ac), (br, bc) = p, a, b
    dr, dc = br - ar, bc - ac
    L2 = dr * dr + dc * dc
    if L2 == 0:
        return math.hypot(pr - ar, pc - ac)
    t = ((pr - ar) * dr + (pc - ac) * dc) / L2
    t = min(1.0, max(0.0, t))
    return math.hypot(pr - (ar + t * dr), pc - (ac + t * dc))


def _naive_rdp(points, eps):
    if len(points) <= 2:
        return list(points)
    dmax, imax = -1.0, 0
    for i in range(1, len(points) - 1):
        d = _seg_dist(points[i], points[0], points[-1])
        if d > dmax:
            dmax, imax = d, i
    if dmax > eps:
        left = _naive_rdp(points[: imax + 1], eps)
        right = _naive_rdp(points[imax:], eps)
        return left[:-1] + right
    return [points[0], points[-1]]


def naive_simplified_count(mask, eps=1.0):
    verts = [tuple(v) for v in trace_boundary(mask)]
    n = len(verts)
    if n <= 3:
        return max(3, n)
    idx = range(n)
    north = min(idx, key=lambda i: (verts[i][0], verts[i][1]))
    east = min(idx, key=lambda i: (-verts[i][1], verts[i][0]))
    south = min(idx, key=lambda i: (-verts[i][0], -verts[i][1]))
    west = min(idx, key=lambda i: (verts[i][1], -verts[i][0]))
    anchors = sorted(set([north, east, south, west]))
    kept = []
    for a in range(len(anchors)):
        i, j = anchors[a], anchors[(a + 1) % len(anchors)]
        arc = verts[i : j + 1] if j > i else verts[i:] + verts[: j + 1]
        kept.extend(_naive_rdp(arc, eps)[:-1])
    return max(3, len(kept))


def _random_blob(rng, size=24):
    mask = np.zeros((size, size), dtype=np.uint8)
    r0, c0 = rng.integers(4, size - 4, size=2)
    mask[r0, c0] = 1
    for _ in range(rng.integers(20, 120)):
        rs, cs = np.nonzero(mask)
        i = rng.integers(len(rs))
        dr, dc = rng.integers(-1, 2, size=2)
        r, c = int(rs[i] + dr), int(cs[i] + dc)
        if 1 <= r < size - 1 and 1 <= c < size - 1:
            mask[r, c] = 1
    comps = infected_components(mask)
    return comps[0].astype(np.uint8)


class TestTraceBoundary:
    def test_single_pixel_unit_square(self):
        mask = np.zeros((3, 3), dtype=np.uint8)
        mask[1, 1] = 1
        verts = {tuple(v) for v in trace_boundary(mask)}
        assert verts == {(1.0, 1.0), (1.0, 2.0), (2.0, 2.0), (2.0, 1.0)}

    def test_rectangle_traces_to_corners_only(self):
        mask = np.zeros((12, 20), dtype=np.uint8)
        mask[3:9, 5:15] = 1
        verts = {tuple(v) for v in trace_boundary(mask)}
        assert verts == {(3.0, 5.0), (3.0, 15.0), (9.0, 15.0), (9.0, 5.0)}

    def test_holes_are_ignored(self):
        mask = np.ones((6, 6), dtype=np.uint8)
        mask[2:4, 2:4] = 0
        verts = {tuple(v) for v in trace_boundary(mask)}
        assert verts == {(0.0, 0.0), (0.0, 6.0), (6.0, 6.0), (6.0, 0.0)}

    def test_empty_mask_rejected(self):
        with pytest.raises(ValueError):
            trace_boundary(np.zeros((4, 4), dtype=np.uint8))

    def test_diagonal_pair_stays_one_boundary(self):
        mask = np.zeros((4, 4), dtype=np.uint8)
        mask[1, 1] = 1
        mask[2, 2] = 1
        verts = trace_boundary(mask)  # single closed walk around both pixels
        assert len(verts) >= 6


class TestPolygonVertexCount:
    @pytest.mark.parametrize("offset", [(0, 0), (3, 7), (10, 2)])
    @pytest.mark.parametrize("size", [(10, 6), (1, 1), (2, 9), (30, 30)])
    def test_rectangles_are_four_at_any_size_and_offset(self, offset, size):
        h = offset[0] + size[0] + 2
        w = offset[1] + size[1] + 2
        mask = np.zeros((h, w), dtype=np.uint8)
        mask[offset[0] : offset[0] + size[0], offset[1] : offset[1] + size[1]] = 1
        assert polygon_vertex_count(mask) == 4

    def test_single_pixel_is_four(self):
        assert polygon_vertex_count(np.array([[1]], dtype=np.uint8)) == 4

    def test_disk_radius_8_matches_frozen_oracle_value(self):
        yy, xx = np.mgrid[0:21, 0:21]
        disk = (((yy - 10) ** 2 + (xx - 10) ** 2) <= 64).astype(np.uint8)
        golden = naive_simplified_count(disk)
        assert golden == GOLDEN_DISK_R8_VERTICES
        assert polygon_vertex_count(disk) == golden

    def test_matches_brute_force_oracle_on_random_blobs(self):
        rng = np.random.default_rng(2024)
        for _ in range(25):
            blob = _random_blob(rng)
            assert polygon_vertex_count(blob) == naive_simplified_count(blob)

    def test_translation_invariance(self):
        rng = np.random.default_rng(7)
        blob = _random_blob(rng, size=16)
        base = polygon_vertex_count(np.pad(blob, ((0, 20), (0, 20))))
        shifted = polygon_vertex_count(np.pad(blob, ((9, 11), (13, 7))))
        assert base == shifted

    def test_rectangle_rotation_invariance(self):
        mask = np.zeros((20, 20), dtype=np.uint8)
        mask[4:9, 3:17] = 1
        for k in range(4):
            assert polygon_vertex_count(np.rot90(mask, k)) == 4

    def test_floor_at_three(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            blob = _random_blob(rng, size=10)
            assert polygon_vertex_count(blob) >= 3

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            polygon_vertex_count(np.zeros((3, 3), dtype=np.uint8))


# frozen from naive_simplified_count on the radius-8 digital disk
GOLDEN_DISK_R8_VERTICES = 8


class TestAnnotatePoint:
    def _setup(self, gt_array, k=4):
        gt_array = np.asarray(gt_array, dtype=np.uint8)
        h, w = gt_array.shape
        grid = build_grid(h, w, k)
        gt = GroundTruthMask("img", gt_array)
        labels = PartialLabelMask.empty("img", (h, w))
        return grid, gt, labels

    def test_background_region_tagged_fully(self):
        grid, gt, labels = self._setup(np.zeros((8, 8)))
        new, actions, state = annotate_point(labels, RegionRef("img", 0), grid, gt, seed=1)
        rs, cs = region_slices(grid, 0)
        assert np.all(new.labels[rs, cs] == 0)
        assert new.n_labeled == 16
        assert state is RegionState.BACKGROUND_TAGGED
        assert [a.kind for a in actions] == [ActionKind.BACKGROUND_TAG]
        assert actions[0].cost_ms == 3000

    def test_single_component_single_click(self):
        gt_arr = np.zeros((8, 8))
        gt_arr[0:2, 0:2] = 1
        grid, gt, labels = self._setup(gt_arr)
        new, actions, state = annotate_point(labels, RegionRef("img", 0), grid, gt, seed=2)
        assert state is RegionState.POINT_LABELED
        assert len(actions) == 1
        assert actions[0].cost_ms == 3000
        assert np.count_nonzero(new.labels == 1) == 1
        r, c = np.argwhere(new.labels == 1)[0]
        assert gt.classes[r, c] == 1

    def test_two_components_two_clicks(self):
        gt_arr = np.zeros((8, 8))
        gt_arr[0, 0] = 1
        gt_arr[3, 3] = 1  # same region (4x4), separated by background
        grid, gt, labels = self._setup(gt_arr)
        new, actions, _ = annotate_point(labels, RegionRef("img", 0), grid, gt, seed=3)
        assert len(actions) == 2
        assert sum(a.cost_ms for a in actions) == 6000
        assert np.count_nonzero(new.labels == 1) == 2

    def test_oracle_truthfulness_property(self):
        rng = np.random.default_rng(11)
        for trial in range(20):
            gt_arr = (rng.random((12, 12)) > 0.8).astype(np.uint8)
            grid, gt, labels = self._setup(gt_arr, k=9)
            for index in range(grid.k):
                labels, _, _ = annotate_point(labels, RegionRef("img", index), grid, gt, seed=trial * 10 + index)
            assert not np.any((labels.labels == 1) & (gt.classes == 0))
            assert not np.any((labels.labels == 0) & (gt.classes == 1))

    def test_every_component_gets_a_point(self):
        gt_arr = np.zeros((8, 8))
        gt_arr[0:2, 0:2] = 1
        gt_arr[6:8, 6:8] = 1
        gt_arr[0:2, 6:8] = 1
        grid, gt, labels = self._setup(gt_arr)
        for index in range(grid.k):
            labels, _, _ = annotate_point(labels, RegionRef("img", index), grid, gt, seed=index)
        comps = infected_components(gt.classes)
        for comp in comps:
            assert np.any((labels.labels == 1) & comp)

    def test_deterministic_under_seed(self):
        gt_arr = np.zeros((8, 8))
        gt_arr[1:4, 1:4] = 1
        grid, gt, labels = self._setup(gt_arr)
        a, _, _ = annotate_point(labels, RegionRef("img", 0), grid, gt, seed=5)
        b, _, _ = annotate_point(labels, RegionRef("img", 0), grid, gt, seed=5)
        assert np.array_equal(a.labels, b.labels)

    def test_already_labeled_rejected(self):
        grid, gt, labels = self._setup(np.zeros((8, 8)))
        ref = RegionRef("img", 0, RegionState.POINT_LABELED)
        with pytest.raises(InvalidStateError):
            annotate_point(labels, ref, grid, gt, seed=0)


class TestAnnotateFull:
    def test_background_region_costs_one_tag(self):
        gt = GroundTruthMask("img", np.zeros((8, 8), dtype=np.uint8))
        grid = build_grid(8, 8, 4)
        labels = PartialLabelMask.empty("img", (8, 8))
        new, actions, state = annotate_full(labels, RegionRef("img", 0), grid, gt)
        assert state is RegionState.PIXEL_LABELED
        assert actions[0].cost_ms == 3000
        rs, cs = region_slices(grid, 0)
        assert np.all(new.labels[rs, cs] == 0)

    def test_rectangular_component_costs_four_vertices(self):
        gt_arr = np.zeros((8, 8), dtype=np.uint8)
        gt_arr[1:3, 1:3] = 1
        gt = GroundTruthMask("img", gt_arr)
        grid = build_grid(8, 8, 4)
        labels = PartialLabelMask.empty("img", (8, 8))
        _, actions, _ = annotate_full(labels, RegionRef("img", 0), grid, gt)
        assert actions[0].cost_ms == 12000  # 4 vertices x 3 s

    def test_pixels_copied_exactly(self):
        rng = np.random.default_rng(4)
        gt_arr = (rng.random((8, 8)) > 0.7).astype(np.uint8)
        gt = GroundTruthMask("img", gt_arr)
        grid = build_grid(8, 8, 4)
        labels = PartialLabelMask.empty("img", (8, 8))
        for index in range(4):
            labels, _, _ = annotate_full(labels, RegionRef("img", index), grid, gt)
        assert np.array_equal(labels.labels, gt_arr.astype(np.int8))

    def test_whole_slice_expert_rate(self):
        gt = GroundTruthMask("img", np.ones((8, 8), dtype=np.uint8))
        grid = build_grid(8, 8, 4)
        labels = PartialLabelMask.empty("img", (8, 8))
        _, actions, _ = annotate_full(
            labels, None, grid, gt, cost_model=CostModel.EXPERT_SLICE
        )
        assert actions[0].kind is ActionKind.FULL_SLICE_PIXEL_LABEL
        assert actions[0].cost_ms == 96000


class TestLedger:
    def _action(self, cost_ms=3000, cycle=0):
        return AnnotationAction(
            kind=ActionKind.POINT_LABEL,
            image_id="img",
            region_index=0,
            points=((1, 2),),
            cost_ms=cost_ms,
            cycle=cycle,
        )

    def test_total_is_exact_sum(self):
        ledger = BudgetLedger()
        for i in range(1, 101):
            ledger.append(self._action(cost_ms=3000, cycle=i))
        assert ledger.total_ms == 300000
        assert ledger_total(ledger) == 300.0

    def test_jsonl_replay_is_bit_exact(self, tmp_path):
        ledger = BudgetLedger()
        ledger.append(self._action())
        ledger.append(
            AnnotationAction(
                kind=ActionKind.REGION_PIXEL_LABEL,
                image_id="other",
                region_index=3,
                points=None,
                cost_ms=12000,
                cycle=2,
            )
        )
        path = tmp_path / "ledger.jsonl"
        ledger.save(path)
        replayed = BudgetLedger.load(path)
        assert replayed.total_ms == ledger.total_ms
        assert replayed.actions == ledger.actions
        assert replayed.to_jsonl() == ledger.to_jsonl()

    def test_nonpositive_cost_rejected(self):
        with pytest.raises(ValueError):
            self._action(cost_ms=0)

    def test_action_counting(self):
        ledger = BudgetLedger()
        ledger.append(self._action())
        assert ledger.count(ActionKind.POINT_LABEL) == 1
        assert ledger.count(ActionKind.BACKGROUND_TAG) == 0


class TestScenarioCost:
    def test_paper_scenario_2460(self):
        assert scenario_cost(5, 64, 100, 5, 3) == 2460

    def test_seed_phase_only_960(self):
        assert scenario_cost(5, 64, 0, 5, 3) == 960

    def test_empty_scenario(self):
        assert scenario_cost(0, 64, 0, 5, 3) == 0

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            scenario_cost(-1, 64, 0, 5, 3)
