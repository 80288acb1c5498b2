"""Command-line entry point: train, eval, extract, reuse, run, render.

Every command writes a run manifest (command, resolved config, seed, artifact
paths, timestamps) into its run directory, so a run is reproducible from the
manifest alone.  Exit codes: 0 success, 2 usage or config problems, 3
numerical failure, 4 artifact/vocabulary mismatch.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .envs import RENDER_LEGEND, TASKS, EnvConfig, reset
from .errors import (
    ConfigError,
    GaloisError,
    NumericsError,
    ParseError,
    ReuseError,
    SelectorError,
    VocabularyError,
)
from .grounding import HOLES
from .programs import ExtractedProgram, edit_program, parse, print_program
from .reference_programs import PROGRAM_TEXT
from .sketch import extract, run_sketch, sketch_from_params, sketch_from_program
from .grounding import build_libraries
from .training import (
    ReusePlan,
    TrainConfig,
    evaluate,
    load_checkpoint,
    save_checkpoint,
    train,
    warm_start,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERIC = 3
EXIT_ARTIFACT = 4

TRAIN_DEFAULT_EPISODES = {
    "doorkey": 5000,
    "boxkey": 10000,
    "unlockpickup": 10000,
    "multiroom": 10000,
}


def run_root() -> Path:
    return Path(os.environ.get("GALOIS_RUN_DIR", "runs"))


def _new_run_dir(command: str, task: str, seed) -> Path:
    stamp = time.strftime("%Y%m%d-%H%M%S")
    path = run_root() / f"{command}-{task}-s{seed}-{stamp}-{os.getpid()}"
    path.mkdir(parents=True, exist_ok=True)
    return path


class Manifest:
    def __init__(self, run_dir: Path, command: str, config: dict, seed):
        self.path = run_dir / "manifest.json"
        self.data = {
            "command": command,
            "config": config,
            "tool_version": __version__,
            "seed": seed,
            "started": time.strftime("%Y-%m-%dT%H:%M:%S"),
            "finished": None,
            "artifacts": {},
        }
        self._write()

    def _write(self):
        tmp = self.path.with_suffix(".tmp")
        tmp.write_text(json.dumps(self.data, indent=1, default=str))
        tmp.replace(self.path)

    def artifact(self, name: str, path) -> None:
        self.data["artifacts"][name] = str(path)
        self._write()

    def finish(self) -> None:
        self.data["finished"] = time.strftime("%Y-%m-%dT%H:%M:%S")
        self._write()


def _parse_config_file(path: str) -> dict:
    """`key = value` lines with dotted keys; '#' comments."""
    out: dict[str, str] = {}
    for i, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{i}: expected 'key = value'")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def _coerce(value: str):
    low = value.lower()
    if low in ("true", "false"):
        return low == "true"
    if low in ("none", "null"):
        return None
    try:
        return int(value)
    except ValueError:
        pass
    try:
        return float(value)
    except ValueError:
        return value


def _train_config(args, seed: int) -> TrainConfig:
    overrides: dict = {}
    if args.config:
        overrides.update(_parse_config_file(args.config))
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"--set needs key=value, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value.strip()

    episodes = args.episodes or TRAIN_DEFAULT_EPISODES.get(args.task, 5000)
    cfg = dict(task=args.task, size=args.size, seed=seed, max_episodes=episodes)
    known = set(TrainConfig.__dataclass_fields__)
    for key, value in overrides.items():
        name = key.split(".")[-1] if key.startswith("trainer.") else key
        if name not in known:
            raise ConfigError(f"unknown config key {key!r}")
        cfg[name] = _coerce(value) if isinstance(value, str) else value
    return TrainConfig(**cfg)


def _parse_seeds(spec: str) -> list[int]:
    if ".." in spec:
        lo, hi = spec.split("..", 1)
        return list(range(int(lo), int(hi) + 1))
    return [int(s) for s in spec.split(",") if s.strip()]


def _write_metrics_csv(run_dir: Path, history: list[dict]) -> Path:
    path = run_dir / "metrics.csv"
    if history:
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(history[0].keys()))
            writer.writeheader()
            writer.writerows(history)
    return path


def cmd_train(args) -> int:
    seeds = _parse_seeds(args.seeds) if args.seeds else [args.seed]
    for seed in seeds:
        config = _train_config(args, seed)
        run_dir = _new_run_dir("train", args.task, seed)
        manifest = Manifest(run_dir, "train", asdict(config), seed)
        metrics_path = run_dir / "metrics.jsonl"
        ckpt_path = run_dir / "checkpoint.json"
        warm = None
        if args.from_checkpoint:
            warm, _ = load_checkpoint(args.from_checkpoint, expected_task=args.task)
        result = train(config, params=warm, metrics_path=metrics_path,
                       checkpoint_path=ckpt_path, progress=args.verbose)
        if result.numerics_skips > 10:
            print(f"too many numerics failures ({result.numerics_skips})",
                  file=sys.stderr)
            return EXIT_NUMERIC
        save_checkpoint(ckpt_path, result.best_params, config.task, seed,
                        result.episodes_run)
        manifest.artifact("checkpoint", ckpt_path)
        manifest.artifact("metrics", metrics_path)
        manifest.artifact("metrics_csv", _write_metrics_csv(run_dir, result.history))
        manifest.finish()
        final = result.history[-1] if result.history else {}
        print(f"train task={config.task} seed={seed} episodes={result.episodes_run} "
              f"best_return={result.best_return:.3f} "
              f"final_return={final.get('mean_return', float('nan')):.3f} "
              f"dir={run_dir}")
    return EXIT_OK


def _load_artifact(path: str, task: str):
    """Checkpoint (.json) or program (.lhp) -> executable sketch factory."""
    text_path = Path(path)
    if not text_path.exists() and path in PROGRAM_TEXT:
        program = parse(PROGRAM_TEXT[path])
        return sketch_from_program(program, task), {"builtin": path}
    if path.endswith(".lhp") or text_path.suffix == ".lhp":
        program = parse(text_path.read_text())
        if program.task != task.replace("-semmod", "") and program.task != task:
            raise VocabularyError(
                f"program is for task {program.task!r}, not {task!r}"
            )
        return sketch_from_program(program, task), {"program": str(path)}
    params, meta = load_checkpoint(path)
    root = task.replace("-semmod", "")
    if meta["env_name"] != root:
        raise VocabularyError(
            f"checkpoint is for task {meta['env_name']!r}, not {task!r}"
        )
    return (
        sketch_from_params(root, params, build_libraries(root)),
        {"checkpoint": str(path)},
    )


def cmd_eval(args) -> int:
    sizes = _parse_seeds(args.sizes) if args.sizes else []
    if not sizes:
        raise ConfigError("empty sizes list")
    task = args.task
    if args.variant == "sem-mod":
        task = task.replace("-semmod", "") + "-semmod"
    run_dir = _new_run_dir("eval", task, args.seed)
    manifest = Manifest(run_dir, "eval", vars(args).copy(), args.seed)
    rows = []
    for size in sizes:
        sketch, src = _load_artifact(args.artifact, task)
        stats = evaluate(
            sketch,
            EnvConfig(task=task, size=size, seed=args.seed),
            episodes=args.episodes,
        )
        row = {"task": task, "size": size, **{k: round(v, 4) for k, v in stats.items()}}
        rows.append(row)
        print(f"{task:20s} {size:>3d}x  return={stats['mean_return']:.3f} "
              f"±{stats['std']:.3f}  success={stats['success_rate']:.2f} "
              f"len={stats['mean_length']:.1f}")
    table_path = run_dir / "eval.csv"
    with open(table_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)
    manifest.artifact("table", table_path)
    manifest.finish()
    return EXIT_OK


def cmd_extract(args) -> int:
    if not 0.0 < args.threshold <= 1.0:
        raise ConfigError(f"threshold must be in (0, 1], got {args.threshold}")
    params, meta = load_checkpoint(args.checkpoint)
    task = meta["env_name"]
    program = extract(
        params,
        build_libraries(task),
        threshold=args.threshold,
        task=task,
        source=str(args.checkpoint),
    )
    program.provenance["created"] = time.strftime("%Y-%m-%dT%H:%M:%S")
    text = print_program(program)
    out = Path(args.out) if args.out else Path(args.checkpoint).with_suffix(".lhp")
    out.write_text(text)
    print(f"extracted {sum(len(v) for v in program.clauses.values())} clauses "
          f"-> {out}")
    return EXIT_OK


def cmd_reuse(args) -> int:
    source_params, meta = load_checkpoint(args.source)
    holes = tuple(HOLES) if args.holes == "all" else tuple(
        h.strip() for h in args.holes.split(",")
    )
    plan = ReusePlan(
        source_task=meta["env_name"],
        source_params=source_params,
        target_task=args.to,
        holes=holes,
        removals=tuple(args.remove or ()),
    )
    rng = np.random.default_rng(args.seed)
    warm = warm_start(plan, rng)
    args_task, args_size = args.to, args.size
    runs = [("warm", warm)]
    if args.with_baseline:
        runs.append(("scratch", None))
    for label, params in runs:
        config = _train_config(
            argparse.Namespace(task=args_task, size=args_size, seed=args.seed,
                               episodes=args.episodes, config=None, set=args.set),
            args.seed,
        )
        run_dir = _new_run_dir(f"reuse-{label}", args_task, args.seed)
        manifest = Manifest(run_dir, f"reuse-{label}", asdict(config), args.seed)
        metrics_path = run_dir / "metrics.jsonl"
        ckpt_path = run_dir / "checkpoint.json"
        result = train(config, params=params, metrics_path=metrics_path,
                       checkpoint_path=ckpt_path, progress=args.verbose)
        save_checkpoint(ckpt_path, result.best_params, config.task, args.seed,
                        result.episodes_run)
        manifest.artifact("checkpoint", ckpt_path)
        manifest.artifact("metrics", metrics_path)
        manifest.artifact("metrics_csv", _write_metrics_csv(run_dir, result.history))
        manifest.finish()
        reached = result.episodes_to(0.90)
        print(f"reuse {label}: episodes={result.episodes_run} "
              f"best={result.best_return:.3f} episodes_to_0.90={reached} dir={run_dir}")
    return EXIT_OK


def cmd_run(args) -> int:
    sketch, src = _load_artifact(args.program, args.task)
    cfg = EnvConfig(task=args.task, size=args.size, seed=args.seed)
    run_dir = _new_run_dir("run", args.task, args.seed)
    manifest = Manifest(run_dir, "run", vars(args).copy(), args.seed)
    if args.render:
        state = reset(cfg)
        print(state.render())
        print(RENDER_LEGEND)
    trace = run_sketch(sketch, cfg)
    log_path = run_dir / "trajectory.jsonl"
    with open(log_path, "w") as fh:
        state = reset(cfg)
        from . import envs as envs_mod

        for t, (action, reward) in enumerate(zip(trace.actions, trace.rewards)):
            fh.write(json.dumps({
                "t": t,
                "state_hash": state.state_hash(),
                "action": action.value,
                "reward": reward,
            }) + "\n")
            if args.render:
                print(f"t={t} action={action.value} reward={reward:+.2f}")
                state, _, _ = envs_mod.step(state, action)
                print(state.render())
            else:
                state, _, _ = envs_mod.step(state, action)
    manifest.artifact("trajectory", log_path)
    manifest.finish()
    status = "timeout" if trace.timeout else ("done" if trace.success else "incomplete")
    print(f"run task={args.task} size={args.size} seed={args.seed} "
          f"steps={trace.length} return={trace.eval_return:.3f} "
          f"shaped={trace.shaped_return:.3f} status={status}")
    return EXIT_OK


def cmd_render(args) -> int:
    state = reset(EnvConfig(task=args.task, size=args.size, seed=args.seed))
    print(state.render())
    print(RENDER_LEGEND)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="galois",
        description="Train, run, and inspect white-box sketch policies on "
                    "built-in gridworld tasks.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--verbose", action="store_true")

    p = sub.add_parser("train", help="train clause weights on a task")
    p.add_argument("--task", required=True, choices=sorted(TASKS))
    p.add_argument("--size", type=int, default=8)
    p.add_argument("--episodes", type=int, default=None)
    p.add_argument("--seeds", help="range like 1..5 or list 1,2,3")
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.add_argument("--from-checkpoint", help="warm-start weights")
    add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint or program over sizes")
    p.add_argument("--artifact", required=True,
                   help="checkpoint .json, program .lhp, or builtin task name")
    p.add_argument("--task", required=True, choices=sorted(TASKS))
    p.add_argument("--sizes", required=True, help="e.g. 8,10,12 or 8..20")
    p.add_argument("--episodes", type=int, default=100)
    p.add_argument("--variant", choices=["base", "sem-mod"], default="base")
    add_common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("extract", help="extract a clause program from a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--threshold", type=float, default=0.3)
    p.add_argument("--out")
    add_common(p)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("reuse", help="warm-start training from another task")
    p.add_argument("--source", required=True, help="source checkpoint")
    p.add_argument("--to", required=True, dest="to", choices=sorted(TASKS))
    p.add_argument("--holes", default="all", help="all or csv of where,how,what")
    p.add_argument("--remove", action="append", help="clause selector to drop")
    p.add_argument("--size", type=int, default=8)
    p.add_argument("--episodes", type=int, default=None)
    p.add_argument("--with-baseline", action="store_true")
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    add_common(p)
    p.set_defaults(func=cmd_reuse)

    p = sub.add_parser("run", help="execute a program file on one episode")
    p.add_argument("--program", required=True,
                   help=".lhp file or builtin task name")
    p.add_argument("--task", required=True, choices=sorted(TASKS))
    p.add_argument("--size", type=int, default=8)
    p.add_argument("--render", action="store_true")
    add_common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("render", help="print a seeded layout")
    p.add_argument("--task", required=True, choices=sorted(TASKS))
    p.add_argument("--size", type=int, default=8)
    add_common(p)
    p.set_defaults(func=cmd_render)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except (ConfigError, ParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericsError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (VocabularyError, ReuseError, SelectorError) as exc:
        print(f"artifact mismatch: {exc}", file=sys.stderr)
        return EXIT_ARTIFACT
    except GaloisError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
