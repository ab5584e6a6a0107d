"""Region scoring, image ranking, and per-cycle selection heuristics."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .data_model import RegionGrid, RegionRef, RegionState, region_slices
from .uncertainty import EntropyMap


class Heuristic(Enum):
    RANDOM = "random"
    ENTROPY = "entropy"


class Aggregation(Enum):
    MEAN = "mean"
    MAX = "max"


@dataclass(frozen=True)
class RegionScore:
    region: RegionRef
    score: float
    aggregation: Aggregation


@dataclass(frozen=True)
class SelectionRequest:
    heuristic: Heuristic = Heuristic.ENTROPY
    images_per_cycle: int = 5
    regions_per_image: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.images_per_cycle < 1 or self.regions_per_image < 1:
            raise ValueError("selection counts must be >= 1")


def score_regions(
    entropy: EntropyMap,
    grid: RegionGrid,
    states: list[RegionState],
    aggregation: Aggregation = Aggregation.MAX,
) -> list[RegionScore]:
    """One score per *unlabeled* region: max or mean pixel entropy inside it."""
    values = entropy.values
    if values.shape != (grid.image_height, grid.image_width):
        raise ValueError(
            f"entropy map shape {values.shape} does not match grid image "
            f"{(grid.image_height, grid.image_width)}"
        )
    if len(states) != grid.k:
        raise ValueError(f"expected {grid.k} region states, got {len(states)}")
    out = []
    for index, state in enumerate(states):
        if state is not RegionState.UNLABELED:
            continue
        rs, cs = region_slices(grid, index)
        patch = values[rs, cs]
        score = float(patch.max() if aggregation is Aggregation.MAX else patch.mean())
        out.append(
            RegionScore(
                region=RegionRef(entropy.image_id, index, RegionState.UNLABELED),
                score=score,
                aggregation=aggregation,
            )
        )
    return out


def rank_images(scores_by_image: dict[str, list[RegionScore]]) -> list[str]:
    """Images sorted by descending best region score; ties by ascending id."""
    ranked = [
        (max(s.score for s in scores), image_id)
        for image_id, scores in scores_by_image.items()
        if scores
    ]
    ranked.sort(key=lambda t: (-t[0], t[1]))
    return [image_id for _, image_id in ranked]


def select(
    request: SelectionRequest,
    region_states: dict[str, list[RegionState]],
    grids: dict[str, RegionGrid],
    entropy_maps: dict[str, EntropyMap] | None = None,
    aggregation: Aggregation = Aggregation.MAX,
) -> list[RegionRef]:
    """Pick the regions to annotate this cycle.

    Entropy: rank images by best unlabeled-region score, take the top
    ``images_per_cycle`` images and the best region(s) of each. Random:
    a seeded uniform sample without replacement over every unlabeled region.
    Returns fewer refs when candidates run out; never a labeled region and
    never a duplicate.
    """
    candidates: list[tuple[str, int]] = []
    for image_id in sorted(region_states):
        for index, state in enumerate(region_states[image_id]):
            if state is RegionState.UNLABELED:
                candidates.append((image_id, index))
    if not candidates:
        return []

    want = request.images_per_cycle * request.regions_per_image
    if request.heuristic is Heuristic.RANDOM:
        rng = np.random.default_rng(np.random.SeedSequence([request.seed, 0x66]))
        take = min(want, len(candidates))
        picks = rng.choice(len(candidates), size=take, replace=False)
        return [
            RegionRef(candidates[i][0], candidates[i][1], RegionState.UNLABELED)
            for i in sorted(picks, key=lambda i: (candidates[i][0], candidates[i][1]))
        ]

    if entropy_maps is None:
        raise ValueError("entropy heuristic requires entropy maps for all candidate images")
    scores_by_image: dict[str, list[RegionScore]] = {}
    for image_id, states in region_states.items():
        if all(s is not RegionState.UNLABELED for s in states):
            continue
        if image_id not in entropy_maps:
            raise ValueError(f"missing entropy map for image {image_id}")
        scores = score_regions(entropy_maps[image_id], grids[image_id], states, aggregation)
        if scores:
            scores_by_image[image_id] = scores
    selected: list[RegionRef] = []
    for image_id in rank_images(scores_by_image)[: request.images_per_cycle]:
        scores = sorted(
            scores_by_image[image_id],
            key=lambda s: (-s.score, s.region.region_index),
        )
        for s in scores[: request.regions_per_image]:
            selected.append(s.region)
    return selected
