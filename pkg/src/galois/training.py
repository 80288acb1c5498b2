"""Monte-Carlo policy-gradient training, evaluation, checkpoints, and
per-hole weight reuse.

Each decision in a collected episode contributes Q_t * grad(log pi) plus an
entropy bonus whose coefficient starts at 5 and is divided by 10 every 50
episodes.  Gradients are accumulated through the episode tapes in one reverse
pass per episode and applied with Adam in the ascent direction.
"""
from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .autodiff import Tape
from .engine import ParamStore, policy_update
from .envs import EnvConfig
from .errors import ConfigError, NumericsError, ReuseError, SelectorError, VocabularyError
from .grounding import HOLES, build_libraries, build_vocabularies, vocabulary_hash
from .programs import ExtractedProgram, render_clause
from .sketch import SketchProgram, Trace, run_sketch, sketch_from_params

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
EVAL_SEED_STRIDE = 10_000_000


def entropy_coefficient(episode: int, start: float = 5.0, factor: float = 10.0,
                        every: int = 50) -> float:
    """start / factor^(episode div every); the published schedule."""
    return start * factor ** (-(episode // every))


@dataclass
class TrainConfig:
    task: str
    size: int
    seed: int = 0
    alpha: float = 0.001
    batch_size: int = 256
    batch_unit: str = "decisions"  # or "episodes"
    discount: float = 0.99
    entropy_start: float = 5.0
    entropy_factor: float = 10.0
    entropy_every: int = 50
    tau_max: int = 4
    max_episodes: int = 5000
    eval_every: int = 50
    eval_episodes: int = 20
    baseline: str = "none"  # or "mean": subtract the batch mean return
    stop_at_return: float | None = None
    max_steps: int | None = None

    def __post_init__(self):
        if self.alpha <= 0:
            raise ConfigError("alpha must be > 0")
        if not 0.0 < self.discount <= 1.0:
            raise ConfigError("discount must be in (0, 1]")
        if self.entropy_start < 0:
            raise ConfigError("entropy coefficient must be >= 0")
        if self.batch_unit not in ("decisions", "episodes"):
            raise ConfigError(f"bad batch_unit {self.batch_unit!r}")
        if self.baseline not in ("none", "mean"):
            raise ConfigError(f"bad baseline {self.baseline!r}")

    def env_config(self) -> EnvConfig:
        return EnvConfig(task=self.task, size=self.size, seed=self.seed,
                         max_steps=self.max_steps)


@dataclass
class EpisodeBatch:
    traces: list[Trace]
    discount: float

    @property
    def n_decisions(self) -> int:
        return sum(len(t.decisions) for t in self.traces)

    def episode_returns(self) -> list[float]:
        return [t.discounted_returns(self.discount)[0] if t.rewards else 0.0
                for t in self.traces]


def collect(
    params: ParamStore,
    sketch: SketchProgram | None,
    env_config: EnvConfig,
    batch_size: int,
    mode: str = "sample",
    *,
    discount: float = 0.99,
    batch_unit: str = "decisions",
    tau_max: int = 4,
    rng: np.random.Generator | None = None,
    episode_offset: int = 0,
) -> EpisodeBatch:
    """Complete episodes until the batch quota (decisions or episodes) is
    met.  Every episode runs on its own tape and a fresh derived env seed, so
    a (seed, params) pair fully determines the batch."""
    if sketch is None:
        sketch = sketch_from_params(env_config.task, params)
    traces = []
    episode = 0
    while True:
        cfg = EnvConfig(
            task=env_config.task,
            size=env_config.size,
            seed=env_config.seed * 100_000 + episode_offset + episode,
            max_steps=env_config.max_steps,
        )
        tape = Tape() if mode == "sample" else None
        traces.append(
            run_sketch(sketch, cfg, mode=mode, rng=rng, tape=tape, tau_max=tau_max)
        )
        episode += 1
        if batch_unit == "episodes":
            if episode >= batch_size:
                break
        else:
            if sum(len(t.decisions) for t in traces) >= batch_size:
                break
    return EpisodeBatch(traces=traces, discount=discount)


def train_step(
    params: ParamStore,
    batch: EpisodeBatch,
    config: TrainConfig,
    gamma_eps: float,
) -> dict:
    """One REINFORCE update from a collected batch.

    Per decision the log-probability slot is seeded with that decision's
    discounted return-to-go (minus the batch-mean episode return when the
    mean baseline is enabled) and the entropy slot with gamma_eps; a single
    reverse pass per episode then yields the exact summed gradient.
    """
    if not batch.traces:
        raise ConfigError("empty batch")
    params.zero_grad()
    grads = params.grad
    baseline = 0.0
    if config.baseline == "mean":
        baseline = float(np.mean(batch.episode_returns()))
    entropies = []
    n_episodes = 0
    for trace in batch.traces:
        n_episodes += 1
        if trace.tape is None:
            raise ConfigError("trace collected without a tape")
        returns = trace.discounted_returns(config.discount)
        seeds: dict[int, float] = {}
        for decision in trace.decisions:
            if decision.fallback or decision.logp_slot is None:
                continue
            q = returns[decision.t] if decision.t < len(returns) else 0.0
            seeds[decision.logp_slot] = q - baseline
            if gamma_eps > 0.0:
                seeds[decision.entropy_slot] = gamma_eps
            entropies.append(decision.entropy)
        if not seeds:
            continue
        adj = trace.tape.backward(seeds)
        for key, g in trace.tape.aggregate(adj).items():
            grads[key] += g
    for key in grads:
        grads[key] /= max(1, n_episodes)

    grad_norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    policy_update(params, grads, alpha=config.alpha)
    return {
        "mean_shaped_return": float(np.mean([t.shaped_return for t in batch.traces])),
        "mean_eval_return": float(np.mean([t.eval_return for t in batch.traces])),
        "entropy": float(np.mean(entropies)) if entropies else 0.0,
        "grad_norm": grad_norm,
        "gamma_eps": gamma_eps,
        "episodes": len(batch.traces),
        "decisions": batch.n_decisions,
    }


def evaluate(
    sketch: SketchProgram,
    env_config: EnvConfig,
    episodes: int = 100,
    mode: str = "argmax",
    seed_base: int | None = None,
    tau_max: int = 4,
) -> dict:
    """Deterministic evaluation over fresh seeds (seed base + index)."""
    if seed_base is None:
        seed_base = EVAL_SEED_STRIDE + env_config.seed * 10_000
    rng = np.random.default_rng(seed_base)
    returns, lengths, successes, shaped = [], [], [], []
    for i in range(episodes):
        cfg = EnvConfig(
            task=env_config.task,
            size=env_config.size,
            seed=seed_base + i,
            max_steps=env_config.max_steps,
        )
        trace = run_sketch(sketch, cfg, mode=mode, rng=rng, tau_max=tau_max)
        returns.append(trace.eval_return)
        lengths.append(trace.length)
        successes.append(1.0 if trace.success else 0.0)
        shaped.append(trace.shaped_return)
    return {
        "mean_return": float(np.mean(returns)),
        "std": float(np.std(returns)),
        "success_rate": float(np.mean(successes)),
        "mean_length": float(np.mean(lengths)),
        "mean_shaped_return": float(np.mean(shaped)),
        "episodes": episodes,
    }


@dataclass
class TrainResult:
    params: ParamStore
    history: list[dict]
    best_return: float
    best_params: ParamStore
    episodes_run: int
    numerics_skips: int

    def episodes_to(self, target: float) -> int | None:
        for row in self.history:
            if row["mean_return"] >= target:
                return row["episode"]
        return None


def train(
    config: TrainConfig,
    params: ParamStore | None = None,
    metrics_path: Path | None = None,
    checkpoint_path: Path | None = None,
    progress: bool = False,
) -> TrainResult:
    """Full training loop: collect, update, periodically evaluate/checkpoint.

    A warm-started ParamStore may be passed in; otherwise weights initialize
    fresh from the run seed.
    """
    rng = np.random.default_rng(config.seed)
    libraries = build_libraries(config.task)
    if params is None:
        params = ParamStore.initialize(libraries, rng)
    sketch = sketch_from_params(config.task, params, libraries)
    env_cfg = config.env_config()

    history: list[dict] = []
    best_return = -math.inf
    best_params = params.copy()
    episodes_done = 0
    skips = 0
    started = time.time()
    last_metrics = {"entropy": 0.0, "grad_norm": 0.0}
    metrics_file = open(metrics_path, "a") if metrics_path else None

    def run_eval():
        nonlocal best_return, best_params
        stats = evaluate(sketch, env_cfg, episodes=config.eval_episodes,
                         tau_max=config.tau_max)
        row = {
            "episode": episodes_done,
            "mean_return": stats["mean_return"],
            "std": stats["std"],
            "success_rate": stats["success_rate"],
            "mean_length": stats["mean_length"],
            "entropy": last_metrics["entropy"],
            "grad_norm": last_metrics["grad_norm"],
            "gamma_eps": entropy_coefficient(
                episodes_done, config.entropy_start, config.entropy_factor,
                config.entropy_every),
            "wallclock": time.time() - started,
        }
        history.append(row)
        if metrics_file:
            metrics_file.write(json.dumps(row) + "\n")
            metrics_file.flush()
        if progress:
            log.info("episode %d: eval return %.3f", episodes_done, row["mean_return"])
        if stats["mean_return"] > best_return:
            best_return = stats["mean_return"]
            best_params = params.copy()
            if checkpoint_path is not None:
                save_checkpoint(checkpoint_path, params, config.task, config.seed,
                                episodes_done)
        return row

    try:
        next_eval = config.eval_every
        while episodes_done < config.max_episodes:
            gamma_eps = entropy_coefficient(
                episodes_done, config.entropy_start, config.entropy_factor,
                config.entropy_every)
            batch = collect(
                params,
                sketch,
                env_cfg,
                config.batch_size,
                mode="sample",
                discount=config.discount,
                batch_unit=config.batch_unit,
                tau_max=config.tau_max,
                rng=rng,
                episode_offset=episodes_done,
            )
            try:
                last_metrics = train_step(params, batch, config, gamma_eps)
            except NumericsError as exc:
                skips += 1
                log.warning("skipped update after numerics failure: %s", exc)
            episodes_done += len(batch.traces)
            if episodes_done >= next_eval:
                row = run_eval()
                next_eval = episodes_done + config.eval_every
                if (config.stop_at_return is not None
                        and row["mean_return"] >= config.stop_at_return):
                    break
        if not history or history[-1]["episode"] != episodes_done:
            run_eval()
    finally:
        if metrics_file:
            metrics_file.close()
    return TrainResult(
        params=params,
        history=history,
        best_return=best_return,
        best_params=best_params,
        episodes_run=episodes_done,
        numerics_skips=skips,
    )


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------


def save_checkpoint(path, params: ParamStore, task: str, seed: int,
                    episode: int) -> None:
    """JSON checkpoint; float repr round-trips every weight exactly."""
    payload = {
        "format_version": FORMAT_VERSION,
        "env_name": task,
        "seed": seed,
        "clause_library_hash": vocabulary_hash(task),
        "episode": episode,
        "holes": {
            hole: {
                head: [float(x) for x in params.theta[(hole, head)]]
                for (h2, head) in sorted(params.theta)
                if h2 == hole
            }
            for hole in HOLES
        },
        "optimizer": {
            "step_count": params.step_count,
            "m": {f"{h}|{head}": [float(x) for x in v]
                  for (h, head), v in sorted(params.adam_m.items())},
            "v": {f"{h}|{head}": [float(x) for x in v]
                  for (h, head), v in sorted(params.adam_v.items())},
        },
    }
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(payload, indent=1))
    tmp.replace(path)


def load_checkpoint(path, expected_task: str | None = None
                    ) -> tuple[ParamStore, dict]:
    """Load a checkpoint; refuses a vocabulary mismatch."""
    payload = json.loads(Path(path).read_text())
    if payload.get("format_version") != FORMAT_VERSION:
        raise VocabularyError(f"unsupported checkpoint version in {path}")
    task = payload["env_name"]
    if expected_task is not None and task != expected_task:
        raise VocabularyError(
            f"checkpoint is for task {task!r}, expected {expected_task!r}"
        )
    if payload["clause_library_hash"] != vocabulary_hash(task):
        raise VocabularyError(
            "checkpoint clause-library hash does not match this build's "
            f"vocabulary for {task!r}"
        )
    params = ParamStore()
    for hole, heads in payload["holes"].items():
        for head, weights in heads.items():
            params.theta[(hole, head)] = np.array(weights, dtype=np.float64)
    params.reset_optimizer()
    opt = payload.get("optimizer", {})
    params.step_count = int(opt.get("step_count", 0))
    for label, vals in opt.get("m", {}).items():
        hole, head = label.split("|", 1)
        params.adam_m[(hole, head)] = np.array(vals, dtype=np.float64)
    for label, vals in opt.get("v", {}).items():
        hole, head = label.split("|", 1)
        params.adam_v[(hole, head)] = np.array(vals, dtype=np.float64)
    return params, payload


# ---------------------------------------------------------------------------
# Knowledge reuse
# ---------------------------------------------------------------------------


@dataclass
class ReusePlan:
    source_task: str
    source_params: ParamStore
    target_task: str
    holes: tuple[str, ...] = tuple(HOLES)
    removals: tuple[str, ...] = ()

    def __post_init__(self):
        bad = [h for h in self.holes if h not in HOLES]
        if bad:
            raise ConfigError(f"unknown holes in reuse plan: {bad}")


def warm_start(plan: ReusePlan, rng: np.random.Generator) -> ParamStore:
    """Initialize target weights from a source checkpoint, per hole.

    Clauses are matched by canonical identity, never by index.  Removal
    selectors drop source clauses before matching (a head whose clauses are
    all removed is skipped entirely).  A transferred head that still has
    clauses but does not exist in the target vocabulary is an error.
    """
    source_libs = build_libraries(plan.source_task)
    target_libs = build_libraries(plan.target_task)
    target = ParamStore.initialize(target_libs, rng)

    matched_any = {sel: False for sel in plan.removals}
    for hole in plan.holes:
        source_lib = source_libs[hole]
        target_lib = target_libs[hole]
        target_heads = {str(h): h for layer in target_lib.layers for h in layer}
        target_keys = {}
        for layer in target_lib.layers:
            for head, cands in layer.items():
                target_keys[str(head)] = {c.key(): i for i, c in enumerate(cands)}

        for layer in source_lib.layers:
            for head, cands in layer.items():
                head_name = str(head)
                theta_key = (hole, head_name)
                if theta_key not in plan.source_params.theta:
                    raise ReuseError(f"source checkpoint lacks weights for {theta_key}")
                weights = plan.source_params.theta[theta_key]
                kept: list[tuple] = []
                for i, clause in enumerate(cands):
                    text = render_clause(clause, None)
                    if any(sel == clause.head.name or sel in text
                           for sel in plan.removals):
                        for sel in plan.removals:
                            if sel == clause.head.name or sel in text:
                                matched_any[sel] = True
                        continue
                    kept.append((clause, float(weights[i])))
                if not kept:
                    continue  # fully removed: nothing to transfer
                if head_name not in target_heads:
                    listing = ", ".join(render_clause(c, None) for c, _ in kept[:4])
                    raise ReuseError(
                        f"head {head_name} ({hole}) not in target task "
                        f"{plan.target_task!r}; unmatched clauses: {listing} ..."
                    )
                unmatched = [c for c, _ in kept if c.key() not in target_keys[head_name]]
                if unmatched:
                    listing = ", ".join(render_clause(c, None) for c in unmatched[:4])
                    raise ReuseError(
                        f"head {head_name} ({hole}): clauses missing from target "
                        f"library: {listing}"
                    )
                tgt_theta = target.theta[(hole, head_name)]
                for clause, w in kept:
                    tgt_theta[target_keys[head_name][clause.key()]] = w
    for sel in plan.removals:
        if not matched_any[sel]:
            raise SelectorError(f"removal selector {sel!r} matched no source clause")
    target.reset_optimizer()
    return target
