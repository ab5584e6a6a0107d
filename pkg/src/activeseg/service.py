"""HTTP annotation service: a human annotator plays the oracle.

Each session owns a directory under the service data dir. Every label
submission is appended to ``labels.jsonl`` and flushed before the request is
acknowledged, so restarting the service and reloading the directory
reproduces budget, label state, and queue exactly. Training runs as a
background thread per session (at most one), recomputing entropy maps and
the next region queue when it finishes.
"""

from __future__ import annotations

import base64
import io
import json
import threading
import time
import uuid
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException, Query
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import PlainTextResponse
from PIL import Image

from . import predictor as P
from .acquisition import SelectionRequest, select, score_regions, Heuristic
from .data_model import PartialLabelMask, RegionRef, RegionState, region_bounds, region_slices
from .evaluation import CurvePoint, confusion, curve_to_csv, dice, specificity
from .oracle_cost import (
    POINT_MS,
    BACKGROUND_TAG_MS,
    ActionKind,
    AnnotationAction,
    BudgetLedger,
)
from .orchestrator import ConfigurationError, LoadedDataset, RunConfig, load_dataset, _derive_seed, _stable_id
from .uncertainty import EntropyMap, entropy_map, entropy_png_bytes, mc_samples, mean_estimator


def _png_b64(u8: np.ndarray) -> str:
    buf = io.BytesIO()
    Image.fromarray(u8, mode="L").save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def _to_u8(pixels: np.ndarray, normalization=(0.485, 0.229)) -> np.ndarray:
    mean, std = normalization
    return np.clip(np.rint((pixels * std + mean) * 255.0), 0, 255).astype(np.uint8)


@dataclass
class QueueEntry:
    image_id: str
    region_index: int
    score: float | None

    def to_json(self):
        return {"image_id": self.image_id, "region_index": self.region_index, "score": self.score}

    @classmethod
    def from_json(cls, doc):
        return cls(doc["image_id"], int(doc["region_index"]), doc.get("score"))


class Session:
    """One annotation session: dataset, label state, queue, training job."""

    def __init__(self, session_id: str, directory: Path, config: RunConfig):
        self.id = session_id
        self.dir = directory
        self.config = config
        self.dataset: LoadedDataset = load_dataset(config)
        self.lock = threading.Lock()
        self.job_state = "idle"
        self.job_reason: str | None = None
        self.cycle = 0
        self.trained_regions = 0  # labeled-region count at the last completed cycle
        self.curve: list[CurvePoint] = []
        self.queue: list[QueueEntry] = []
        self.entropy_maps: dict[str, EntropyMap] = {}
        self.ledger = BudgetLedger()
        train_ids = list(self.dataset.split.train)
        self.region_states = {i: [RegionState.UNLABELED] * self.dataset.grid.k for i in train_ids}
        self.labels = {
            i: PartialLabelMask.empty(i, self.dataset.images[i].shape) for i in train_ids
        }
        self.params = P.init_params(
            config.seed, channels=config.channels, dtype=np.dtype(config.dtype)
        )
        self.val_dice: float | None = None

    # -- persistence ---------------------------------------------------------

    def persist_created(self):
        self.dir.mkdir(parents=True, exist_ok=True)
        (self.dir / "session.json").write_text(
            json.dumps({"id": self.id, "config": self.config.to_json()}, indent=2),
            encoding="utf-8",
        )
        self._persist_queue()
        (self.dir / "labels.jsonl").touch()

    def _persist_queue(self):
        (self.dir / "queue.json").write_text(
            json.dumps({"cycle": self.cycle, "entries": [e.to_json() for e in self.queue]}),
            encoding="utf-8",
        )

    def _persist_cycle(self):
        (self.dir / "curve.csv").write_text(curve_to_csv(self.curve), encoding="utf-8")
        P.save_checkpoint(self.dir / "checkpoint.npz", self.params, seed=self.config.seed)
        self._persist_queue()
        (self.dir / "state.json").write_text(
            json.dumps(
                {
                    "cycle": self.cycle,
                    "trained_regions": self.trained_regions,
                    "val_dice": self.val_dice,
                    "job_state": "idle" if self.job_state == "training" else self.job_state,
                    "job_reason": self.job_reason,
                }
            ),
            encoding="utf-8",
        )

    def _append_label_log(self, entry: dict):
        with open(self.dir / "labels.jsonl", "a", encoding="utf-8") as fh:
            fh.write(json.dumps(entry) + "\n")
            fh.flush()

    @classmethod
    def load(cls, directory: Path) -> "Session":
        doc = json.loads((directory / "session.json").read_text(encoding="utf-8"))
        session = cls(doc["id"], directory, RunConfig.from_json(doc["config"]))
        # replay the durable label log
        log = directory / "labels.jsonl"
        if log.exists():
            for line in log.read_text(encoding="utf-8").splitlines():
                if line.strip():
                    session._apply_label_entry(json.loads(line), persist=False)
        state_path = directory / "state.json"
        if state_path.exists():
            st = json.loads(state_path.read_text(encoding="utf-8"))
            session.cycle = st["cycle"]
            session.trained_regions = st["trained_regions"]
            session.val_dice = st["val_dice"]
            session.job_state = st["job_state"] if st["job_state"] == "failed" else "idle"
            session.job_reason = st.get("job_reason")
        ckpt = directory / "checkpoint.npz"
        if ckpt.exists():
            session.params, _, _ = P.load_checkpoint(ckpt)
        curve_path = directory / "curve.csv"
        if curve_path.exists():
            from .evaluation import curve_from_csv

            session.curve = curve_from_csv(curve_path.read_text(encoding="utf-8"))
        qdoc = json.loads((directory / "queue.json").read_text(encoding="utf-8"))
        session.queue = [QueueEntry.from_json(e) for e in qdoc["entries"]]
        return session

    # -- seed phase -----------------------------------------------------------

    def build_seed_queue(self):
        train_ids = list(self.dataset.split.train)
        n_seed = min(
            self.config.seed_images or self.config.images_per_cycle, len(train_ids)
        )
        rng = np.random.default_rng(np.random.SeedSequence([self.config.seed, 0xAA]))
        picked = [train_ids[i] for i in sorted(rng.choice(len(train_ids), n_seed, replace=False))]
        self.queue = [
            QueueEntry(image_id, index, None)
            for image_id in picked
            for index in range(self.dataset.grid.k)
        ]

    # -- labeling -------------------------------------------------------------

    def _find_pending(self, image_id: str, region_index: int) -> QueueEntry | None:
        for e in self.queue:
            if e.image_id == image_id and e.region_index == region_index:
                return e
        return None

    def _apply_label_entry(self, entry: dict, persist: bool = True):
        image_id = entry["image_id"]
        region_index = int(entry["region_index"])
        rs, cs = region_slices(self.dataset.grid, region_index)
        mask = self.labels[image_id]
        out = np.array(mask.labels)
        if entry.get("background"):
            out[rs, cs] = 0
            new_state = RegionState.BACKGROUND_TAGGED
            action = AnnotationAction(
                kind=ActionKind.BACKGROUND_TAG,
                image_id=image_id,
                region_index=region_index,
                points=None,
                cost_ms=BACKGROUND_TAG_MS,
                cycle=self.cycle,
                timestamp=entry.get("timestamp"),
            )
        else:
            points = tuple((int(r), int(c)) for r, c in entry["points"])
            for r, c in points:
                out[r, c] = 1
            new_state = RegionState.POINT_LABELED
            action = AnnotationAction(
                kind=ActionKind.POINT_LABEL,
                image_id=image_id,
                region_index=region_index,
                points=points,
                cost_ms=POINT_MS * len(points),
                cycle=self.cycle,
                timestamp=entry.get("timestamp"),
            )
        self.labels[image_id] = PartialLabelMask(image_id, out)
        self.region_states[image_id][region_index] = new_state
        self.ledger.append(action)
        self.queue = [
            e for e in self.queue if not (e.image_id == image_id and e.region_index == region_index)
        ]
        if persist:
            self._append_label_log(entry)
            self._persist_queue()

    def submit_label(self, image_id: str, region_index: int, points, background: bool):
        if self.job_state == "training":
            raise HTTPException(409, "training in progress; labels are paused")
        if image_id not in self.region_states:
            raise HTTPException(404, f"unknown image {image_id}")
        if not 0 <= region_index < self.dataset.grid.k:
            raise HTTPException(404, f"unknown region {region_index}")
        if self.region_states[image_id][region_index].is_labeled:
            raise HTTPException(409, f"region {region_index} of {image_id} already labeled")
        if self._find_pending(image_id, region_index) is None:
            raise HTTPException(409, f"region {region_index} of {image_id} is not queued")
        if not background:
            if not points:
                raise HTTPException(422, "need points or background: true")
            row0, col0, h, w = region_bounds(self.dataset.grid, region_index)
            for r, c in points:
                if not (row0 <= r < row0 + h and col0 <= c < col0 + w):
                    raise HTTPException(422, f"point ({r}, {c}) outside region rectangle")
        entry = {
            "image_id": image_id,
            "region_index": region_index,
            "background": bool(background),
            "points": None if background else [[int(r), int(c)] for r, c in points],
            "timestamp": time.time(),
        }
        self._apply_label_entry(entry)
        return {
            "image_id": image_id,
            "region_index": region_index,
            "state": self.region_states[image_id][region_index].value,
            "budget_seconds": self.ledger.total_seconds,
        }

    # -- training -------------------------------------------------------------

    def newly_labeled(self) -> int:
        n = sum(1 for states in self.region_states.values() for s in states if s.is_labeled)
        return n - self.trained_regions

    def run_training_cycle(self):
        """One train -> uncertainty -> queue rebuild step (background thread)."""
        try:
            cfg = self.config
            labeled = []
            for image_id in sorted(self.region_states):
                if any(s.is_labeled for s in self.region_states[image_id]):
                    labeled.append((self.dataset.images[image_id], self.labels[image_id]))
            val_pairs = [
                (self.dataset.images[i], self.dataset.truths[i])
                for i in self.dataset.split.val
                if self.dataset.truths.get(i) is not None
            ]
            next_cycle = self.cycle + 1
            cycle_train = replace(cfg.train, seed=_derive_seed(cfg.seed, 0xBB, next_cycle))
            params, val_dice = P.train_cycle(self.params, labeled, val_pairs, cycle_train)

            emaps: dict[str, EntropyMap] = {}
            if cfg.heuristic is Heuristic.ENTROPY:
                for image_id in sorted(self.region_states):
                    if all(s.is_labeled for s in self.region_states[image_id]):
                        continue
                    samples = mc_samples(
                        params,
                        self.dataset.images[image_id],
                        n_samples=cfg.mc_sample_count,
                        dropout_p=cfg.train.dropout,
                        seed=_derive_seed(cfg.seed, 0xCC, next_cycle, _stable_id(image_id)),
                    )
                    emaps[image_id] = entropy_map(mean_estimator(samples), image_id)
            request = SelectionRequest(
                heuristic=cfg.heuristic,
                images_per_cycle=cfg.images_per_cycle,
                regions_per_image=cfg.regions_per_image,
                seed=_derive_seed(cfg.seed, 0xDD, next_cycle),
            )
            grids = {i: self.dataset.grid for i in self.region_states}
            refs = select(request, self.region_states, grids, emaps or None, cfg.aggregation)
            new_queue = []
            for ref in refs:
                score = None
                if emaps:
                    scores = score_regions(
                        emaps[ref.image_id],
                        self.dataset.grid,
                        self.region_states[ref.image_id],
                        cfg.aggregation,
                    )
                    score = next(
                        s.score for s in scores if s.region.region_index == ref.region_index
                    )
                new_queue.append(QueueEntry(ref.image_id, ref.region_index, score))

            test_pairs = [
                (self.dataset.images[i], self.dataset.truths[i])
                for i in self.dataset.split.test
                if self.dataset.truths.get(i) is not None
            ]
            if test_pairs:
                preds = [P.predict_binary(params, img) for img, _ in test_pairs]
                counts = confusion(preds, [gt.classes for _, gt in test_pairs])
                test_dice, test_spec = dice(counts), specificity(counts)
            else:
                test_dice = test_spec = float("nan")

            with self.lock:
                self.params = params
                self.val_dice = val_dice
                self.cycle = next_cycle
                self.trained_regions = sum(
                    1 for states in self.region_states.values() for s in states if s.is_labeled
                )
                self.entropy_maps = emaps
                self.queue = new_queue
                self.curve.append(
                    CurvePoint(
                        cycle=self.cycle,
                        cost_seconds=self.ledger.total_seconds,
                        regions_labeled=self.trained_regions,
                        dice=test_dice,
                        specificity=test_spec,
                        heuristic=cfg.heuristic.value,
                        aggregation=cfg.aggregation.value,
                        seed=cfg.seed,
                        val_dice=val_dice,
                    )
                )
                self._persist_cycle()
                self.job_state = "idle"
                self.job_reason = None
        except Exception as exc:
            with self.lock:
                self.job_state = "failed"
                self.job_reason = f"{type(exc).__name__}: {exc}"
                try:
                    self._persist_cycle()
                except Exception:
                    pass

    # -- views ----------------------------------------------------------------

    def queue_view(self, k: int) -> dict:
        entries = []
        for e in self.queue[:k]:
            img = self.dataset.images[e.image_id]
            row0, col0, h, w = region_bounds(self.dataset.grid, e.region_index)
            u8 = _to_u8(img.pixels)
            crop = u8[row0 : row0 + h, col0 : col0 + w]
            payload = {
                "image_id": e.image_id,
                "region_index": e.region_index,
                "score": e.score,
                "rect": {"row0": row0, "col0": col0, "height": h, "width": w},
                "crop_png": _png_b64(crop),
                "slice_png": _png_b64(u8),
                "entropy_png": None,
            }
            em = self.entropy_maps.get(e.image_id)
            if em is not None:
                payload["entropy_png"] = base64.b64encode(
                    entropy_png_bytes(em, self.params.n_classes)
                ).decode("ascii")
            entries.append(payload)
        exhausted = all(
            s.is_labeled for states in self.region_states.values() for s in states
        )
        return {"entries": entries, "exhausted": exhausted}

    def status_view(self) -> dict:
        return {
            "id": self.id,
            "cycle": self.cycle,
            "budget_seconds": self.ledger.total_seconds,
            "labeled_regions": sum(
                1 for states in self.region_states.values() for s in states if s.is_labeled
            ),
            "val_dice": self.val_dice,
            "queue_length": len(self.queue),
            "job": {"state": self.job_state, "reason": self.job_reason},
        }


class SessionManager:
    def __init__(self, data_dir: str | Path):
        self.root = Path(data_dir)
        self.root.mkdir(parents=True, exist_ok=True)
        self.sessions: dict[str, Session] = {}
        self._load_existing()

    def _load_existing(self):
        for directory in sorted(self.root.glob("sessions/*")):
            if (directory / "session.json").exists():
                try:
                    session = Session.load(directory)
                    self.sessions[session.id] = session
                except Exception:
                    continue  # a broken directory must not block the service

    def create(self, manifest: str, config_doc: dict) -> Session:
        if not Path(manifest).exists():
            raise HTTPException(404, f"dataset manifest not found: {manifest}")
        doc = dict(config_doc or {})
        doc["manifest"] = manifest
        doc["synthetic"] = None
        try:
            config = RunConfig.from_json(doc)
            session_id = uuid.uuid4().hex[:12]
            session = Session(session_id, self.root / "sessions" / session_id, config)
        except (ConfigurationError, ValueError) as exc:
            raise HTTPException(400, f"invalid config: {exc}")
        session.build_seed_queue()
        session.persist_created()
        self.sessions[session.id] = session
        return session

    def get(self, session_id: str) -> Session:
        session = self.sessions.get(session_id)
        if session is None:
            raise HTTPException(404, f"unknown session {session_id}")
        return session


def create_app(data_dir: str | Path, cors_origins: list[str] | None = None) -> FastAPI:
    app = FastAPI(title="activeseg annotation service")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=cors_origins or ["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    manager = SessionManager(data_dir)
    app.state.manager = manager

    @app.post("/sessions", status_code=201)
    def create_session(body: dict):
        manifest = body.get("manifest")
        if not manifest:
            raise HTTPException(400, "body needs a 'manifest' path")
        session = manager.create(manifest, body.get("config", {}))
        return {"id": session.id}

    @app.get("/sessions/{session_id}/queue")
    def get_queue(session_id: str, k: int = Query(default=5, ge=1)):
        session = manager.get(session_id)
        with session.lock:
            return session.queue_view(k)

    @app.post("/sessions/{session_id}/labels")
    def post_labels(session_id: str, body: dict):
        session = manager.get(session_id)
        with session.lock:
            return session.submit_label(
                image_id=body.get("image_id", ""),
                region_index=int(body.get("region_index", -1)),
                points=body.get("points"),
                background=bool(body.get("background", False)),
            )

    @app.post("/sessions/{session_id}/train", status_code=202)
    def post_train(session_id: str):
        session = manager.get(session_id)
        with session.lock:
            if session.job_state == "training":
                raise HTTPException(409, "training already running")
            if session.newly_labeled() < 1:
                raise HTTPException(409, "nothing new to train on")
            session.job_state = "training"
            session.job_reason = None
        thread = threading.Thread(target=session.run_training_cycle, daemon=True)
        thread.start()
        return {"status": "training"}

    @app.get("/sessions/{session_id}/status")
    def get_status(session_id: str):
        session = manager.get(session_id)
        with session.lock:
            return session.status_view()

    @app.get("/sessions/{session_id}/curve", response_class=PlainTextResponse)
    def get_curve(session_id: str):
        session = manager.get(session_id)
        with session.lock:
            return curve_to_csv(session.curve)

    return app
