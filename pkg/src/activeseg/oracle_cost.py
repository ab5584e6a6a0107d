"""Simulated annotator, the per-second annotation cost model, and the ledger.

Costs are stored as integer milliseconds so ledger totals are exact; the
public accessors report seconds. The simulated oracle reads the private
ground truth: point annotation clicks one random pixel per 8-connected
infected component of a region (or tags the whole region as background),
per-pixel annotation copies the truth and charges by approximating-polygon
vertices.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np
from scipy import ndimage

from .contours import polygon_vertex_count
from .data_model import (
    GroundTruthMask,
    PartialLabelMask,
    RegionGrid,
    RegionRef,
    RegionState,
    region_slices,
)

SECONDS_PER_POINT = 3  # one click or one background tag
POINT_MS = 3000
BACKGROUND_TAG_MS = 3000
VERTEX_MS = 3000  # per polygon vertex under the per-pixel scheme
EXPERT_SLICE_MS = 96000  # flat expert rate for a full slice

_CONN8 = np.ones((3, 3), dtype=int)


class CostModel(Enum):
    POLYGON = "polygon"  # per-pixel labels charged by polygon vertices
    EXPERT_SLICE = "expert_slice"  # whole slices at the flat expert rate


class ActionKind(Enum):
    POINT_LABEL = "point_label"
    BACKGROUND_TAG = "background_tag"
    REGION_PIXEL_LABEL = "region_pixel_label"
    FULL_SLICE_PIXEL_LABEL = "full_slice_pixel_label"


class InvalidStateError(RuntimeError):
    """An annotation was attempted on an already-labeled target."""


@dataclass(frozen=True)
class AnnotationAction:
    kind: ActionKind
    image_id: str
    region_index: int | None
    points: tuple[tuple[int, int], ...] | None
    cost_ms: int
    cycle: int
    timestamp: float | None = None  # None in simulation, wall clock in live sessions

    def __post_init__(self):
        if self.cost_ms <= 0:
            raise ValueError("actions must have positive cost")

    @property
    def cost_seconds(self) -> float:
        return self.cost_ms / 1000.0

    def to_json(self) -> dict:
        return {
            "kind": self.kind.value,
            "image_id": self.image_id,
            "region_index": self.region_index,
            "points": None if self.points is None else [list(p) for p in self.points],
            "cost_ms": self.cost_ms,
            "cycle": self.cycle,
            "timestamp": self.timestamp,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "AnnotationAction":
        return cls(
            kind=ActionKind(doc["kind"]),
            image_id=doc["image_id"],
            region_index=doc["region_index"],
            points=None
            if doc["points"] is None
            else tuple((int(r), int(c)) for r, c in doc["points"]),
            cost_ms=int(doc["cost_ms"]),
            cycle=int(doc["cycle"]),
            timestamp=doc.get("timestamp"),
        )


class BudgetLedger:
    """Append-only action record; the total never drifts from the sum."""

    def __init__(self):
        self._actions: list[AnnotationAction] = []
        self._total_ms = 0

    def append(self, action: AnnotationAction) -> None:
        self._actions.append(action)
        self._total_ms += action.cost_ms

    def extend(self, actions) -> None:
        for a in actions:
            self.append(a)

    @property
    def actions(self) -> tuple[AnnotationAction, ...]:
        return tuple(self._actions)

    @property
    def total_ms(self) -> int:
        return self._total_ms

    @property
    def total_seconds(self) -> float:
        return self._total_ms / 1000.0

    def __len__(self) -> int:
        return len(self._actions)

    def count(self, *kinds: ActionKind) -> int:
        return sum(1 for a in self._actions if a.kind in kinds)

    def to_jsonl(self) -> str:
        return "".join(json.dumps(a.to_json()) + "\n" for a in self._actions)

    def save(self, path) -> None:
        Path(path).write_text(self.to_jsonl(), encoding="utf-8")

    @classmethod
    def from_jsonl(cls, text: str) -> "BudgetLedger":
        ledger = cls()
        for line in text.splitlines():
            if line.strip():
                ledger.append(AnnotationAction.from_json(json.loads(line)))
        return ledger

    @classmethod
    def load(cls, path) -> "BudgetLedger":
        return cls.from_jsonl(Path(path).read_text(encoding="utf-8"))


def ledger_total(ledger: BudgetLedger) -> float:
    """Total annotation effort in seconds (exact)."""
    return ledger.total_seconds


def scenario_cost(
    initial_images: int,
    regions_per_image: int,
    cycles: int,
    regions_per_cycle: int,
    seconds_per_point: int = SECONDS_PER_POINT,
) -> int:
    """Closed-form cost of a point-level run: seed phase + per-cycle clicks."""
    if min(initial_images, regions_per_image, cycles, regions_per_cycle) < 0:
        raise ValueError("scenario parameters must be non-negative")
    return (
        initial_images * seconds_per_point * regions_per_image
        + cycles * regions_per_cycle * seconds_per_point
    )


def _require_unlabeled(region: RegionRef) -> None:
    if region.state.is_labeled:
        raise InvalidStateError(
            f"region {region.region_index} of {region.image_id} is already {region.state.value}"
        )


def infected_components(mask: np.ndarray) -> list[np.ndarray]:
    """8-connected components of a binary mask, as boolean arrays."""
    labeled, n = ndimage.label(mask, structure=_CONN8)
    return [labeled == i for i in range(1, n + 1)]


def annotate_point(
    labels: PartialLabelMask,
    region: RegionRef,
    grid: RegionGrid,
    gt: GroundTruthMask,
    seed: int,
    cycle: int = 0,
) -> tuple[PartialLabelMask, list[AnnotationAction], RegionState]:
    """Point-level oracle for one region.

    No infection inside the region: every region pixel becomes background (one
    3 s tag). Otherwise one uniformly random pixel per 8-connected infected
    component is clicked (3 s each) and all other region pixels stay
    unlabeled.
    """
    _require_unlabeled(region)
    rs, cs = region_slices(grid, region.region_index)
    sub_gt = gt.classes[rs, cs]
    comps = infected_components(sub_gt)
    if not comps:
        out = np.array(labels.labels)
        out[rs, cs] = 0
        action = AnnotationAction(
            kind=ActionKind.BACKGROUND_TAG,
            image_id=region.image_id,
            region_index=region.region_index,
            points=None,
            cost_ms=BACKGROUND_TAG_MS,
            cycle=cycle,
        )
        return PartialLabelMask(labels.image_id, out), [action], RegionState.BACKGROUND_TAGGED
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x77]))
    out = np.array(labels.labels)
    actions = []
    for comp in comps:
        pix = np.argwhere(comp)
        r, c = pix[int(rng.integers(len(pix)))]
        point = (int(r) + rs.start, int(c) + cs.start)
        out[point] = 1
        actions.append(
            AnnotationAction(
                kind=ActionKind.POINT_LABEL,
                image_id=region.image_id,
                region_index=region.region_index,
                points=(point,),
                cost_ms=POINT_MS,
                cycle=cycle,
            )
        )
    return PartialLabelMask(labels.image_id, out), actions, RegionState.POINT_LABELED


def annotate_full(
    labels: PartialLabelMask,
    region: RegionRef | None,
    grid: RegionGrid,
    gt: GroundTruthMask,
    cycle: int = 0,
    cost_model: CostModel = CostModel.POLYGON,
    rdp_epsilon: float = 1.0,
) -> tuple[PartialLabelMask, list[AnnotationAction], RegionState]:
    """Per-pixel oracle: copy the ground truth over the target.

    ``region=None`` labels the whole slice. Under the polygon cost model the
    charge is 3 s per vertex of each infected component's simplified outline
    (3 s flat for a background-only target); under the expert model a whole
    slice costs a flat 96 s.
    """
    if region is not None:
        _require_unlabeled(region)
        rs, cs = region_slices(grid, region.region_index)
        image_id = region.image_id
        region_index = region.region_index
    else:
        rs, cs = slice(0, gt.shape[0]), slice(0, gt.shape[1])
        image_id = labels.image_id
        region_index = None
    sub_gt = gt.classes[rs, cs]
    out = np.array(labels.labels)
    out[rs, cs] = sub_gt
    if region is None and cost_model is CostModel.EXPERT_SLICE:
        cost_ms = EXPERT_SLICE_MS
        kind = ActionKind.FULL_SLICE_PIXEL_LABEL
    else:
        comps = infected_components(sub_gt)
        if comps:
            cost_ms = VERTEX_MS * sum(polygon_vertex_count(c, rdp_epsilon) for c in comps)
        else:
            cost_ms = BACKGROUND_TAG_MS  # tagging an empty target costs the same as a tag
        kind = (
            ActionKind.REGION_PIXEL_LABEL if region is not None else ActionKind.FULL_SLICE_PIXEL_LABEL
        )
    action = AnnotationAction(
        kind=kind,
        image_id=image_id,
        region_index=region_index,
        points=None,
        cost_ms=cost_ms,
        cycle=cycle,
    )
    return PartialLabelMask(labels.image_id, out), [action], RegionState.PIXEL_LABELED
