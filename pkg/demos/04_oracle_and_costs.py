"""The simulated annotator and the cost model: point clicks vs background
tags, per-pixel labeling charged by approximating-polygon vertices, and the
append-only budget ledger - including the paper-shaped 2460 s scenario.

Run:  python demos/04_oracle_and_costs.py
"""

import numpy as np

from activeseg import (
    BudgetLedger,
    GroundTruthMask,
    PartialLabelMask,
    RegionRef,
    build_grid,
    polygon_vertex_count,
    scenario_cost,
)
from activeseg.oracle_cost import annotate_full, annotate_point

# --- 1. Point-level oracle on one image --------------------------------------
gt_arr = np.zeros((16, 16), dtype=np.uint8)
gt_arr[2:6, 2:7] = 1          # one blob in region 0
gt_arr[10, 10] = 1            # single-pixel blob in region 3
gt = GroundTruthMask("demo", gt_arr)
grid = build_grid(16, 16, 4)

labels = PartialLabelMask.empty("demo", (16, 16))
ledger = BudgetLedger()
for index in range(grid.k):
    labels, actions, state = annotate_point(labels, RegionRef("demo", index), grid, gt, seed=index)
    ledger.extend(actions)
    print(f"region {index}: {state.value:18s} {len(actions)} action(s), {sum(a.cost_ms for a in actions) / 1000:.0f} s")
print(f"point-level total for the slice: {ledger.total_seconds:.0f} s")

# --- 2. Per-pixel oracle: cost scales with outline complexity ----------------
labels2 = PartialLabelMask.empty("demo", (16, 16))
_, actions, _ = annotate_full(labels2, RegionRef("demo", 0), grid, gt)
print(f"\nper-pixel labeling of region 0 costs {actions[0].cost_ms / 1000:.0f} s "
      f"(rectangle -> {polygon_vertex_count(gt_arr[0:8, 0:8])} vertices x 3 s)")

disk = np.zeros((20, 20), dtype=np.uint8)
yy, xx = np.mgrid[0:20, 0:20]
disk[((yy - 10) ** 2 + (xx - 10) ** 2) <= 64] = 1
print(f"a radius-8 disk needs {polygon_vertex_count(disk)} vertices -> {3 * polygon_vertex_count(disk)} s")

# --- 3. The paper-shaped budget arithmetic ------------------------------------
total = scenario_cost(initial_images=5, regions_per_image=64, cycles=100, regions_per_cycle=5)
seed_only = scenario_cost(initial_images=5, regions_per_image=64, cycles=0, regions_per_cycle=5)
print(f"\nscenario: 5 seed images x 64 regions + 100 cycles x 5 points")
print(f"  seed phase: {seed_only} s, full run: {total} s")

# --- 4. Ledger round trip ------------------------------------------------------
text = ledger.to_jsonl()
replayed = BudgetLedger.from_jsonl(text)
print(f"\nledger JSONL replay: {len(replayed)} actions, total {replayed.total_seconds:.0f} s "
      f"(bit-exact: {replayed.to_jsonl() == text})")
