"""Active-learning run driver, replay, and the three experiment presets.

A run is a sequential state machine: seed phase, then T cycles of
train -> uncertainty -> select -> annotate -> record. Every random choice is
derived from the run seed, the cycle, and stable image/region identifiers,
so identical configs produce byte-identical curves and a persisted selection
log can be replayed into the identical ledger and label state without
touching the predictor.
"""

from __future__ import annotations

import json
import zlib
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import predictor as P
from .acquisition import Aggregation, Heuristic, SelectionRequest, score_regions, select
from .data_model import (
    DatasetSplit,
    GroundTruthMask,
    ImageSlice,
    PartialLabelMask,
    RegionGrid,
    RegionRef,
    RegionState,
    SplitMode,
    build_grid,
    make_split,
)
from .evaluation import CurvePoint, auc_trapezoid, confusion, curve_to_csv, dice, specificity
from .ingestion import SyntheticConfig, generate_synthetic, load_manifest, scans_of
from .oracle_cost import (
    BudgetLedger,
    CostModel,
    annotate_full,
    annotate_point,
    scenario_cost,
)
from .uncertainty import EntropyMap, entropy_map, mc_samples, mean_estimator

SCHEME_POINT = "point"
SCHEME_PER_PIXEL = "per_pixel"


class ConfigurationError(ValueError):
    """The run configuration is unusable; raised before any work starts."""


def _stable_id(s: str) -> int:
    return zlib.crc32(s.encode("utf-8"))


def _derive_seed(*parts: int) -> int:
    return int(np.random.SeedSequence(list(parts)).generate_state(1)[0])


@dataclass(frozen=True)
class RunConfig:
    """Everything one run needs; serializes to/from plain JSON."""

    out_dir: str = "runs/run"
    manifest: str | None = None
    synthetic: SyntheticConfig | None = field(default_factory=SyntheticConfig)
    split_mode: SplitMode = SplitMode.MIXED
    split_fractions: tuple[float, float, float] = (0.45, 0.05, 0.50)
    split_counts: tuple[int, int, int] | None = None
    k: int = 64  # regions per image
    heuristic: Heuristic = Heuristic.ENTROPY
    aggregation: Aggregation = Aggregation.MAX
    scheme: str = SCHEME_POINT
    images_per_cycle: int = 5
    regions_per_image: int = 1
    cycles: int = 100
    seed: int = 0
    seed_images: int | None = None  # defaults to images_per_cycle
    seed_budget_seconds: int | None = None  # overrides seed_images when set
    train: P.TrainConfig = field(default_factory=P.TrainConfig)
    mc_sample_count: int = 8
    cost_model: CostModel = CostModel.POLYGON
    channels: tuple[int, int, int] = P.DEFAULT_CHANNELS
    dtype: str = "float64"

    def __post_init__(self):
        if self.k < 1 or self.images_per_cycle < 1 or self.regions_per_image < 1:
            raise ConfigurationError("counts must be >= 1")
        if self.cycles < 0:
            raise ConfigurationError("cycle count must be >= 0")
        if self.scheme not in (SCHEME_POINT, SCHEME_PER_PIXEL):
            raise ConfigurationError(f"unknown supervision scheme {self.scheme!r}")
        if self.manifest is None and self.synthetic is None:
            raise ConfigurationError("config needs a dataset: manifest path or synthetic block")

    def to_json(self) -> dict:
        doc = {
            "out_dir": self.out_dir,
            "manifest": self.manifest,
            "synthetic": None if self.synthetic is None else vars(self.synthetic).copy(),
            "split_mode": self.split_mode.value,
            "split_fractions": list(self.split_fractions),
            "split_counts": None if self.split_counts is None else list(self.split_counts),
            "k": self.k,
            "heuristic": self.heuristic.value,
            "aggregation": self.aggregation.value,
            "scheme": self.scheme,
            "images_per_cycle": self.images_per_cycle,
            "regions_per_image": self.regions_per_image,
            "cycles": self.cycles,
            "seed": self.seed,
            "seed_images": self.seed_images,
            "seed_budget_seconds": self.seed_budget_seconds,
            "train": {
                "learning_rate": self.train.learning_rate,
                "max_epochs": self.train.max_epochs,
                "dropout": self.train.dropout,
                "seed": self.train.seed,
                "patience": self.train.patience,
            },
            "mc_sample_count": self.mc_sample_count,
            "cost_model": self.cost_model.value,
            "channels": list(self.channels),
            "dtype": self.dtype,
        }
        if doc["synthetic"] is not None:
            doc["synthetic"]["size"] = list(doc["synthetic"]["size"])
            doc["synthetic"]["radius_range"] = list(doc["synthetic"]["radius_range"])
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "RunConfig":
        synth = None
        if doc.get("synthetic") is not None:
            s = dict(doc["synthetic"])
            s["size"] = tuple(s["size"])
            s["radius_range"] = tuple(s["radius_range"])
            synth = SyntheticConfig(**s)
        train = P.TrainConfig(**doc.get("train", {}))
        return cls(
            out_dir=doc.get("out_dir", "runs/run"),
            manifest=doc.get("manifest"),
            synthetic=synth,
            split_mode=SplitMode(doc.get("split_mode", "mixed")),
            split_fractions=tuple(doc.get("split_fractions", (0.45, 0.05, 0.50))),
            split_counts=tuple(doc["split_counts"]) if doc.get("split_counts") else None,
            k=doc.get("k", 64),
            heuristic=Heuristic(doc.get("heuristic", "entropy")),
            aggregation=Aggregation(doc.get("aggregation", "max")),
            scheme=doc.get("scheme", SCHEME_POINT),
            images_per_cycle=doc.get("images_per_cycle", 5),
            regions_per_image=doc.get("regions_per_image", 1),
            cycles=doc.get("cycles", 100),
            seed=doc.get("seed", 0),
            seed_images=doc.get("seed_images"),
            seed_budget_seconds=doc.get("seed_budget_seconds"),
            train=train,
            mc_sample_count=doc.get("mc_sample_count", 8),
            cost_model=CostModel(doc.get("cost_model", "polygon")),
            channels=tuple(doc.get("channels", P.DEFAULT_CHANNELS)),
            dtype=doc.get("dtype", "float64"),
        )


def desk_preset(seed: int = 0, out_dir: str = "runs/desk", **overrides) -> RunConfig:
    """Desk-scale named config: 200 synthetic 64x64 slices, K=16, T=20, I=8.

    Sized so a full run finishes in minutes on a laptop CPU: a narrower net
    in float32 and convergence-based early stopping, everything else per the
    standard defaults.
    """
    base = dict(
        out_dir=out_dir,
        manifest=None,
        synthetic=SyntheticConfig(
            n_images=200,
            size=(64, 64),
            infection_density=1.8,
            background_fraction=0.3,
            radius_range=(2.5, 8.0),
            contrast=0.30,
            contrast_jitter=0.6,
            noise=0.12,
            texture=0.10,
            seed=1234,
        ),
        k=16,
        heuristic=Heuristic.ENTROPY,
        aggregation=Aggregation.MAX,
        scheme=SCHEME_POINT,
        images_per_cycle=5,
        cycles=20,
        seed=seed,
        train=P.TrainConfig(learning_rate=1e-3, max_epochs=40, dropout=0.5, seed=seed, patience=8),
        mc_sample_count=8,
        channels=(8, 16, 16),
        dtype="float32",
    )
    base.update(overrides)
    return RunConfig(**base)


@dataclass
class LoadedDataset:
    images: dict[str, ImageSlice]
    truths: dict[str, GroundTruthMask]
    split: DatasetSplit
    grid: RegionGrid


def load_dataset(config: RunConfig) -> LoadedDataset:
    if config.manifest is not None:
        _, pairs = load_manifest(config.manifest)
        missing = [img.id for img, gt in pairs if gt is None]
        if missing:
            raise ConfigurationError(f"images without ground truth cannot drive a run: {missing[:3]}")
    else:
        pairs = generate_synthetic(config.synthetic)
    if not pairs:
        raise ConfigurationError("dataset is empty")
    split = make_split(
        scans_of(pairs),
        config.split_mode,
        fractions=config.split_fractions,
        counts=config.split_counts,
    )
    sample = pairs[0][0]
    grid = build_grid(sample.height, sample.width, config.k)
    return LoadedDataset(
        images={img.id: img for img, _ in pairs},
        truths={gt.image_id: gt for _, gt in pairs},
        split=split,
        grid=grid,
    )


@dataclass
class RunState:
    """Mutable per-run state; pools derive from region states."""

    region_states: dict[str, list[RegionState]]
    labels: dict[str, PartialLabelMask]
    ledger: BudgetLedger
    curve: list[CurvePoint] = field(default_factory=list)
    selections: list[dict] = field(default_factory=list)

    def pools(self) -> tuple[list[str], list[str], list[str]]:
        """(fully labeled, partially labeled, unlabeled) image ids."""
        full, partial, unlabeled = [], [], []
        for image_id in sorted(self.region_states):
            states = self.region_states[image_id]
            n = sum(1 for s in states if s.is_labeled)
            if n == 0:
                unlabeled.append(image_id)
            elif n == len(states):
                full.append(image_id)
            else:
                partial.append(image_id)
        return full, partial, unlabeled

    def labeled_region_count(self) -> int:
        return sum(
            1 for states in self.region_states.values() for s in states if s.is_labeled
        )


@dataclass
class RunResult:
    out_dir: Path
    config: RunConfig
    curve: list[CurvePoint]
    ledger: BudgetLedger
    params: P.PredictorParams
    state: RunState


def _oracle_seed(run_seed: int, cycle: int, image_id: str, region_index: int) -> int:
    return _derive_seed(run_seed, 0x99, cycle, region_index, _stable_id(image_id))


def _annotate(state: RunState, config: RunConfig, dataset: LoadedDataset, ref: RegionRef, cycle: int):
    image_id = ref.image_id
    current = RegionRef(image_id, ref.region_index, state.region_states[image_id][ref.region_index])
    gt = dataset.truths[image_id]
    if config.scheme == SCHEME_POINT:
        new_mask, actions, new_state = annotate_point(
            state.labels[image_id],
            current,
            dataset.grid,
            gt,
            seed=_oracle_seed(config.seed, cycle, image_id, ref.region_index),
            cycle=cycle,
        )
    else:
        new_mask, actions, new_state = annotate_full(
            state.labels[image_id], current, dataset.grid, gt, cycle=cycle,
            cost_model=config.cost_model,
        )
    state.labels[image_id] = new_mask
    state.region_states[image_id][ref.region_index] = new_state
    state.ledger.extend(actions)


def _training_pairs(state: RunState, config: RunConfig, dataset: LoadedDataset):
    """Images with any labels; complete per-pixel masks upgrade to full supervision."""
    out = []
    for image_id in sorted(state.region_states):
        states = state.region_states[image_id]
        if not any(s.is_labeled for s in states):
            continue
        mask = state.labels[image_id]
        if config.scheme == SCHEME_PER_PIXEL and not np.any(mask.labels == -1):
            target = GroundTruthMask(image_id, mask.labels.astype(np.uint8))
        else:
            target = mask
        out.append((dataset.images[image_id], target))
    return out


def _eval_pairs(dataset: LoadedDataset, ids) -> list[tuple[ImageSlice, GroundTruthMask]]:
    return [(dataset.images[i], dataset.truths[i]) for i in ids]


def _test_metrics(params, pairs) -> tuple[float, float]:
    preds = [P.predict_binary(params, img) for img, _ in pairs]
    gts = [gt.classes for _, gt in pairs]
    counts = confusion(preds, gts)
    return dice(counts), specificity(counts)


def _append_curve(state, config, cycle, test_dice, test_spec, val_dice):
    state.curve.append(
        CurvePoint(
            cycle=cycle,
            cost_seconds=state.ledger.total_seconds,
            regions_labeled=state.labeled_region_count(),
            dice=test_dice,
            specificity=test_spec,
            heuristic=config.heuristic.value,
            aggregation=config.aggregation.value,
            seed=config.seed,
            val_dice=val_dice,
        )
    )


def _log_selection(state, config, cycle, image_id, region_index, score):
    state.selections.append(
        {
            "cycle": cycle,
            "heuristic": config.heuristic.value,
            "image_id": image_id,
            "region_index": region_index,
            "score": score,
            "aggregation": config.aggregation.value,
            "seed": config.seed,
        }
    )


def seed_image_count(config: RunConfig, grid: RegionGrid) -> int:
    if config.seed_budget_seconds is not None:
        n = config.seed_budget_seconds // (grid.k * 3)
        if n < 1:
            raise ConfigurationError(
                f"seed budget {config.seed_budget_seconds}s cannot pay for one image "
                f"({grid.k} regions x 3s)"
            )
        return int(n)
    return config.seed_images if config.seed_images is not None else config.images_per_cycle


def run(config: RunConfig) -> RunResult:
    """Execute a full active-learning run and persist its artifacts.

    Writes curve.csv, selections.jsonl, ledger.jsonl, checkpoint.npz, and
    config.json under ``config.out_dir``. Deterministic under a fixed config.
    """
    dataset = load_dataset(config)
    train_ids = list(dataset.split.train)
    if not train_ids:
        raise ConfigurationError("train split is empty")
    dtype = np.dtype(config.dtype)
    params = P.init_params(config.seed, channels=config.channels, dtype=dtype)
    state = RunState(
        region_states={i: [RegionState.UNLABELED] * dataset.grid.k for i in train_ids},
        labels={
            i: PartialLabelMask.empty(i, dataset.images[i].shape) for i in train_ids
        },
        ledger=BudgetLedger(),
    )
    val_pairs = _eval_pairs(dataset, dataset.split.val)
    test_pairs = _eval_pairs(dataset, dataset.split.test)

    # Seed phase: a uniform, seeded image sample with every region labeled.
    n_seed = min(seed_image_count(config, dataset.grid), len(train_ids))
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0xAA]))
    seed_ids = [train_ids[i] for i in sorted(rng.choice(len(train_ids), n_seed, replace=False))]
    for image_id in seed_ids:
        for index in range(dataset.grid.k):
            _annotate(state, config, dataset, RegionRef(image_id, index), cycle=0)
            _log_selection(state, config, 0, image_id, index, None)
    test_dice, test_spec = _test_metrics(params, test_pairs)
    _append_curve(state, config, 0, test_dice, test_spec, None)

    for cycle in range(1, config.cycles + 1):
        labeled = _training_pairs(state, config, dataset)
        cycle_train = replace(config.train, seed=_derive_seed(config.seed, 0xBB, cycle))
        params, val_dice = P.train_cycle(params, labeled, val_pairs, cycle_train)

        entropy_maps: dict[str, EntropyMap] | None = None
        if config.heuristic is Heuristic.ENTROPY:
            entropy_maps = {}
            for image_id in sorted(state.region_states):
                if all(s.is_labeled for s in state.region_states[image_id]):
                    continue
                samples = mc_samples(
                    params,
                    dataset.images[image_id],
                    n_samples=config.mc_sample_count,
                    dropout_p=config.train.dropout,
                    seed=_derive_seed(config.seed, 0xCC, cycle, _stable_id(image_id)),
                )
                entropy_maps[image_id] = entropy_map(mean_estimator(samples), image_id)
        request = SelectionRequest(
            heuristic=config.heuristic,
            images_per_cycle=config.images_per_cycle,
            regions_per_image=config.regions_per_image,
            seed=_derive_seed(config.seed, 0xDD, cycle),
        )
        grids = {i: dataset.grid for i in state.region_states}
        refs = select(request, state.region_states, grids, entropy_maps, config.aggregation)
        for ref in refs:
            score = None
            if entropy_maps is not None:
                scores = score_regions(
                    entropy_maps[ref.image_id],
                    dataset.grid,
                    state.region_states[ref.image_id],
                    config.aggregation,
                )
                score = next(
                    s.score for s in scores if s.region.region_index == ref.region_index
                )
            _annotate(state, config, dataset, ref, cycle)
            _log_selection(state, config, cycle, ref.image_id, ref.region_index, score)

        test_dice, test_spec = _test_metrics(params, test_pairs)
        _append_curve(state, config, cycle, test_dice, test_spec, val_dice)
        if not refs:
            break  # pool exhausted

    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "curve.csv").write_text(curve_to_csv(state.curve), encoding="utf-8")
    (out_dir / "selections.jsonl").write_text(
        "".join(json.dumps(s) + "\n" for s in state.selections), encoding="utf-8"
    )
    state.ledger.save(out_dir / "ledger.jsonl")
    (out_dir / "config.json").write_text(
        json.dumps(config.to_json(), indent=2), encoding="utf-8"
    )
    P.save_checkpoint(out_dir / "checkpoint.npz", params, seed=config.seed)
    return RunResult(out_dir, config, state.curve, state.ledger, params, state)


def replay(log_path: str | Path, config: RunConfig | None = None) -> RunState:
    """Rebuild ledger and label state from a persisted selection log.

    Bypasses the predictor and heuristics entirely: the logged (cycle, image,
    region) triplets are re-annotated by the oracle with the same derived
    seeds, which reproduces the original ledger and labels exactly.
    """
    log_path = Path(log_path)
    if log_path.is_dir():
        run_dir = log_path
        log_path = run_dir / "selections.jsonl"
    else:
        run_dir = log_path.parent
    if config is None:
        config = RunConfig.from_json(
            json.loads((run_dir / "config.json").read_text(encoding="utf-8"))
        )
    dataset = load_dataset(config)
    train_ids = list(dataset.split.train)
    state = RunState(
        region_states={i: [RegionState.UNLABELED] * dataset.grid.k for i in train_ids},
        labels={i: PartialLabelMask.empty(i, dataset.images[i].shape) for i in train_ids},
        ledger=BudgetLedger(),
    )
    for line in log_path.read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        entry = json.loads(line)
        ref = RegionRef(entry["image_id"], int(entry["region_index"]))
        _annotate(state, config, dataset, ref, int(entry["cycle"]))
    return state


# ---------------------------------------------------------------------------
# Experiment presets


@dataclass
class ExperimentResult:
    runs: dict[str, RunResult]
    summary_path: Path


def _run_variant(base: RunConfig, out_root: Path, name: str, **overrides) -> RunResult:
    cfg = replace(base, out_dir=str(out_root / name), **overrides)
    return run(cfg)


def _dice_curve(result: RunResult) -> tuple[list[float], list[float]]:
    xs = [p.regions_labeled for p in result.curve]
    ys = [p.dice for p in result.curve]
    return xs, ys


def experiment_heuristics(base: RunConfig, seeds: list[int], out_root: str | Path) -> ExperimentResult:
    """Paired Entropy-vs-Random runs per seed plus an AUC comparison CSV."""
    if not seeds:
        raise ConfigurationError("need at least one seed")
    out_root = Path(out_root)
    runs = {}
    rows = []
    for seed in seeds:
        per_seed = {}
        for heuristic in (Heuristic.ENTROPY, Heuristic.RANDOM):
            name = f"{heuristic.value}-seed{seed}"
            result = _run_variant(
                base,
                out_root,
                name,
                heuristic=heuristic,
                seed=seed,
                train=replace(base.train, seed=seed),
            )
            runs[name] = result
            per_seed[heuristic] = result
        xs_e, ys_e = _dice_curve(per_seed[Heuristic.ENTROPY])
        xs_r, ys_r = _dice_curve(per_seed[Heuristic.RANDOM])
        rows.append(
            {
                "seed": seed,
                "auc_entropy": auc_trapezoid(xs_e, ys_e),
                "auc_random": auc_trapezoid(xs_r, ys_r),
                "auc_delta": auc_trapezoid(xs_e, ys_e) - auc_trapezoid(xs_r, ys_r),
                "final_dice_entropy": ys_e[-1],
                "final_dice_random": ys_r[-1],
            }
        )
    summary = out_root / "heuristics_summary.csv"
    _write_summary(summary, rows)
    return ExperimentResult(runs, summary)


def experiment_region_size(
    base: RunConfig,
    k_values: list[int],
    seed_budget_seconds: int,
    seeds: list[int] | None = None,
    out_root: str | Path = "runs/region_size",
) -> ExperimentResult:
    """One run per region count under a fixed seed-phase budget in seconds."""
    out_root = Path(out_root)
    seeds = seeds or [base.seed]
    runs = {}
    rows = []
    for seed in seeds:
        for k in k_values:
            name = f"k{k}-seed{seed}"
            result = _run_variant(
                base,
                out_root,
                name,
                k=k,
                seed=seed,
                train=replace(base.train, seed=seed),
                seed_budget_seconds=seed_budget_seconds,
                seed_images=None,
            )
            runs[name] = result
            xs, ys = _dice_curve(result)
            rows.append(
                {
                    "k": k,
                    "seed": seed,
                    "seed_images": seed_budget_seconds // (k * 3),
                    "final_dice": ys[-1],
                    "auc": auc_trapezoid(xs, ys),
                }
            )
    summary = out_root / "region_size_summary.csv"
    _write_summary(summary, rows)
    return ExperimentResult(runs, summary)


def experiment_supervision(
    base: RunConfig, seeds: list[int], out_root: str | Path = "runs/supervision"
) -> ExperimentResult:
    """Point-level vs per-pixel runs sharing seeds; comparison keyed on cost."""
    out_root = Path(out_root)
    runs = {}
    rows = []
    for seed in seeds:
        for scheme in (SCHEME_POINT, SCHEME_PER_PIXEL):
            name = f"{scheme}-seed{seed}"
            result = _run_variant(
                base,
                out_root,
                name,
                scheme=scheme,
                seed=seed,
                train=replace(base.train, seed=seed),
            )
            runs[name] = result
            for p in result.curve:
                rows.append(
                    {
                        "scheme": scheme,
                        "seed": seed,
                        "cycle": p.cycle,
                        "cost_seconds": p.cost_seconds,
                        "dice": p.dice,
                    }
                )
    rows.sort(key=lambda r: (r["seed"], r["cost_seconds"], r["scheme"], r["cycle"]))
    summary = out_root / "supervision_comparison.csv"
    _write_summary(summary, rows)
    return ExperimentResult(runs, summary)


def _write_summary(path: Path, rows: list[dict]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    if not rows:
        path.write_text("", encoding="utf-8")
        return
    cols = list(rows[0].keys())
    lines = [",".join(cols)]
    for row in rows:
        lines.append(",".join(_csv_cell(row[c]) for c in cols))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _csv_cell(v) -> str:
    if isinstance(v, float):
        return format(v, ".10g")
    return str(v)
