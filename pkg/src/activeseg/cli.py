"""Command-line entry points: run, experiment, replay, serve, synth.

Configs are UTF-8 JSON files mirroring RunConfig field names. Exit code 0 on
success; failures print a one-line reason to stderr and exit nonzero.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path


def _load_config(path: str):
    from .orchestrator import RunConfig

    return RunConfig.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def _parse_seeds(text: str) -> list[int]:
    return [int(s) for s in text.split(",") if s.strip() != ""]


def cmd_run(args) -> int:
    from .orchestrator import run

    result = run(_load_config(args.config))
    print(result.out_dir)
    return 0


def cmd_experiment(args) -> int:
    from .orchestrator import (
        experiment_heuristics,
        experiment_region_size,
        experiment_supervision,
    )

    base = _load_config(args.config)
    seeds = _parse_seeds(args.seeds) if args.seeds else [base.seed]
    out_root = args.out or "runs/experiments"
    if args.kind == "heuristics":
        result = experiment_heuristics(base, seeds, out_root)
    elif args.kind == "region-size":
        k_values = [int(k) for k in args.k_values.split(",")]
        result = experiment_region_size(
            base, k_values, args.seed_budget, seeds=seeds, out_root=out_root
        )
    else:
        result = experiment_supervision(base, seeds, out_root)
    print(result.summary_path)
    return 0


def cmd_replay(args) -> int:
    from .orchestrator import replay

    state = replay(args.log)
    print(f"replayed {len(state.ledger)} actions, total {state.ledger.total_seconds:g} s")
    return 0


def cmd_synth(args) -> int:
    from .ingestion import PreprocessingSpec, SyntheticConfig, generate_synthetic, save_dataset

    cfg = SyntheticConfig(
        n_images=args.n_images,
        size=(args.size, args.size),
        background_fraction=args.background_fraction,
        seed=args.seed,
    )
    pairs = generate_synthetic(cfg)
    path = save_dataset(
        pairs,
        args.out,
        name=args.name,
        preprocessing=PreprocessingSpec(target_size=(args.size, args.size)),
    )
    print(path)
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(args.data_dir)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="activeseg")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute one active-learning run")
    p_run.add_argument("--config", required=True)
    p_run.set_defaults(func=cmd_run)

    p_exp = sub.add_parser("experiment", help="run an experiment preset")
    p_exp.add_argument("kind", choices=["heuristics", "region-size", "supervision"])
    p_exp.add_argument("--config", required=True)
    p_exp.add_argument("--seeds", default="", help="comma-separated run seeds")
    p_exp.add_argument("--out", default=None)
    p_exp.add_argument("--k-values", default="16,64", dest="k_values")
    p_exp.add_argument("--seed-budget", type=int, default=960, dest="seed_budget")
    p_exp.set_defaults(func=cmd_experiment)

    p_rep = sub.add_parser("replay", help="rebuild ledger/labels from a selection log")
    p_rep.add_argument("--log", required=True, help="run directory or selections.jsonl path")
    p_rep.set_defaults(func=cmd_replay)

    p_synth = sub.add_parser("synth", help="write a synthetic dataset to disk")
    p_synth.add_argument("--out", required=True)
    p_synth.add_argument("--n-images", type=int, default=60, dest="n_images")
    p_synth.add_argument("--size", type=int, default=64)
    p_synth.add_argument("--background-fraction", type=float, default=0.3, dest="background_fraction")
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.add_argument("--name", default="synthetic")
    p_synth.set_defaults(func=cmd_synth)

    p_srv = sub.add_parser("serve", help="start the annotation service")
    p_srv.add_argument("--host", default="127.0.0.1")
    p_srv.add_argument("--port", type=int, default=8008)
    p_srv.add_argument("--data-dir", required=True, dest="data_dir")
    p_srv.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # one-line reason, nonzero exit
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
