"""The three-hole program sketch: AST, interpreter, and clause extraction.

The sketch loops until the task completes: pick a subgoal (WHERE), walk
toward it one waypoint at a time (HOW) until arrival or a per-subgoal budget
runs out, then interact with the object there (WHAT).  Each hole is bound
either to learned clause weights (soft deduction, optionally taped for
gradients) or to a literal clause set (boolean chaining), and the two
bindings produce identical traces when the weights are one-hot.

Every decision records its input valuation and the chosen head, so a trace
can be audited after the fact by replaying the deduction.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import envs
from .autodiff import Tape
from .engine import ParamStore, compile_library, deduce, prepare_weights
from .envs import EnvAction, EnvConfig, GridState
from .errors import BindingError, ProgramShapeError, ResolutionError
from .grounding import (
    ACTION_OF_HEAD,
    HOLES,
    HOW,
    MOVE_OF_HEAD,
    SUBGOAL_OF_HEAD,
    WHAT,
    WHERE,
    Decision,
    HoleVocabulary,
    build_libraries,
    build_vocabularies,
    decode,
    encode_how,
    encode_what,
    encode_where,
    head_positions,
    resolve_subgoal,
)
from .logic import (
    EXTENSIONAL,
    Clause,
    ClauseLibrary,
    ValuationVector,
    boolean_forward_chain,
)
from .programs import ExtractedProgram

DEFAULT_TAU_MAX = 4
EXTRACT_THRESHOLD = 0.3


# -- Fig-style AST over expressions and commands ----------------------------


@dataclass(frozen=True)
class Const:
    value: object


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Call:
    func: str
    args: tuple = ()


@dataclass(frozen=True)
class Hole:
    name: str  # the ?? element; names one of the three holes


@dataclass(frozen=True)
class Assign:
    target: str
    expr: object


@dataclass(frozen=True)
class Seq:
    first: object
    second: object


@dataclass(frozen=True)
class While:
    cond: object
    body: object


@dataclass(frozen=True)
class ClauseNode:
    clause: Clause


def standard_sketch_ast():
    """The fixed control skeleton: an outer task loop, a subgoal assignment,
    an inner navigation loop, and the interaction call."""
    return While(
        Call("not_done", (Var("s"),)),
        Seq(
            Assign("l", Call("??", (Hole(WHERE), Var("s")))),
            Seq(
                While(
                    Call("not_arrived", (Var("l"),)),
                    Assign("d", Call("??", (Hole(HOW), Var("l")))),
                ),
                Assign("o", Call("??", (Hole(WHAT), Var("s")))),
            ),
        ),
    )


def validate_sketch_ast(ast) -> None:
    """Accept exactly the three-hole skeleton; anything else is parseable but
    not executable, and must say so clearly."""
    if ast != standard_sketch_ast():
        raise ProgramShapeError(
            "only the three-hole subgoal/navigate/interact sketch is "
            "executable; general imperative programs are not supported"
        )


# -- Hole bindings -----------------------------------------------------------


@dataclass(frozen=True)
class Learned:
    """Hole driven by clause weights (requires a parameter store)."""

    hole: str


@dataclass(frozen=True)
class LiteralClauses:
    """Hole driven by an explicit clause set, executed by boolean chaining."""

    clauses: tuple[Clause, ...]


@dataclass
class SketchProgram:
    task: str
    bindings: dict
    params: ParamStore | None = None
    vocabs: dict = field(default_factory=dict)
    libraries: dict | None = None
    ast: object = None

    def __post_init__(self):
        if set(self.bindings) != set(HOLES):
            raise BindingError(f"need bindings for {HOLES}, got {sorted(self.bindings)}")
        if not self.vocabs:
            self.vocabs = build_vocabularies(self.task)
        if self.ast is None:
            self.ast = standard_sketch_ast()
        validate_sketch_ast(self.ast)
        for hole, binding in self.bindings.items():
            if isinstance(binding, Learned):
                if self.params is None:
                    raise BindingError(f"hole {hole} is learned but no params given")
                if self.libraries is None:
                    self.libraries = build_libraries(self.task)


def sketch_from_params(
    task: str, params: ParamStore, libraries: dict | None = None
) -> SketchProgram:
    return SketchProgram(
        task=task,
        bindings={h: Learned(h) for h in HOLES},
        params=params,
        libraries=libraries or build_libraries(task),
    )


def sketch_from_program(program: ExtractedProgram, task: str | None = None) -> SketchProgram:
    run_task = task or program.task
    return SketchProgram(
        task=run_task,
        bindings={h: LiteralClauses(program.hole_clauses(h)) for h in HOLES},
    )


# -- Trace records -----------------------------------------------------------


@dataclass
class DecisionRecord:
    hole: str
    t: int  # index of the next env action
    head_name: str | None
    input_valuation: np.ndarray
    head_names: list[str]
    probs: np.ndarray
    log_prob: float | None
    entropy: float | None
    logp_slot: int | None
    entropy_slot: int | None
    fallback: bool


@dataclass
class Trace:
    task: str
    actions: list[EnvAction]
    rewards: list[float]
    decisions: list[DecisionRecord]
    final_state: GridState
    success: bool
    timeout: bool
    flags: set[str]
    tape: Tape | None = None

    @property
    def shaped_return(self) -> float:
        return float(sum(self.rewards))

    @property
    def eval_return(self) -> float:
        return envs.normalized_return(self.final_state)

    @property
    def length(self) -> int:
        return len(self.actions)

    def discounted_returns(self, discount: float) -> list[float]:
        """Return-to-go at each env step, discounted."""
        out = [0.0] * (len(self.rewards) + 1)
        for i in range(len(self.rewards) - 1, -1, -1):
            out[i] = self.rewards[i] + discount * out[i + 1]
        return out[:-1]


class _HoleRunner:
    """Evaluates one hole's binding on an encoded valuation."""

    def __init__(self, sketch: SketchProgram, hole: str, tau_max: int, tape: Tape | None):
        self.hole = hole
        self.binding = sketch.bindings[hole]
        self.vocab: HoleVocabulary = sketch.vocabs[hole]
        self.head_names = [h.name for h in self.vocab.heads]
        self.tau_max = tau_max
        self.tape = tape
        self.params = sketch.params
        self.library: ClauseLibrary | None = (
            sketch.libraries[hole] if sketch.libraries else None
        )
        self.compiled = None
        if isinstance(self.binding, Learned):
            self.compiled = compile_library(self.library, self.vocab.base)
            sketch.params.check_shapes(hole, self.compiled)
        self.weight_ctx = None  # lazily shared softmax slots per episode tape
        self._head_pos = None
        self._head_vec_idx = None

    def decide(self, valuation: ValuationVector, mode: str, rng) -> Decision:
        if isinstance(self.binding, Learned):
            if self.tape is not None and self.weight_ctx is None:
                self.weight_ctx = prepare_weights(
                    self.tape, self.params, self.hole, self.compiled
                )
            result = deduce(
                valuation,
                self.compiled,
                self.params,
                self.hole,
                tau_max=self.tau_max,
                tape=self.tape,
                weights=self.weight_ctx,
                record_steps=False,
            )
            if self._head_pos is None:
                self._head_pos = head_positions(self.vocab, self.head_names)
                if result.tape is not None:
                    self._head_vec_idx = np.asarray(
                        [result.head_index[str(self.vocab.base.atoms[p])]
                         for p in self._head_pos],
                        dtype=np.intp,
                    )
            values = result.final.values[self._head_pos]
            return decode(
                self.hole, self.head_names, values, mode, rng,
                tape=self.tape, heads_slot=result.heads_slot,
                head_indices=self._head_vec_idx,
            )
        if isinstance(self.binding, LiteralClauses):
            facts = {
                a
                for a in valuation.base.atoms
                if a.predicate.kind == EXTENSIONAL and valuation.value(a) > 0.5
            }
            steps = max(1, len(self.vocab.heads))
            derived = boolean_forward_chain(self.binding.clauses, facts, steps)
            values = np.array(
                [1.0 if h in derived else 0.0 for h in self.vocab.heads]
            )
            return decode(self.hole, self.head_names, values, mode, rng)
        raise BindingError(f"hole {self.hole} has no usable binding")


def run_sketch(
    sketch: SketchProgram,
    config: EnvConfig,
    mode: str = "argmax",
    rng: np.random.Generator | None = None,
    tape: Tape | None = None,
    tau_max: int = DEFAULT_TAU_MAX,
    initial_state: GridState | None = None,
) -> Trace:
    """Execute the sketch on one episode.

    argmax mode is deterministic given the env seed; sample mode needs an
    rng.  With a tape, every learned decision records log-probability and
    entropy slots for the policy gradient.
    """
    if mode == "sample" and rng is None:
        raise BindingError("sample mode needs an rng")
    state = initial_state if initial_state is not None else envs.reset(config)
    runners = {h: _HoleRunner(sketch, h, tau_max, tape) for h in HOLES}
    vocabs = sketch.vocabs
    cache: dict = {}

    actions: list[EnvAction] = []
    rewards: list[float] = []
    decisions: list[DecisionRecord] = []
    flags: set[str] = set()

    def record(decision: Decision, valuation: ValuationVector) -> None:
        decisions.append(
            DecisionRecord(
                hole=decision.hole,
                t=len(actions),
                head_name=decision.head_name,
                input_valuation=valuation.values.copy(),
                head_names=runners[decision.hole].head_names,
                probs=decision.probs,
                log_prob=decision.log_prob,
                entropy=decision.entropy,
                logp_slot=decision.logp_slot,
                entropy_slot=decision.entropy_slot,
                fallback=decision.fallback,
            )
        )

    def take(action: EnvAction):
        nonlocal state
        state, reward, _ = envs.step(state, action)
        actions.append(action)
        rewards.append(reward)

    subgoal_budget = 2 * config.size

    while not state.done:
        e_where = encode_where(state, vocabs[WHERE])
        where_dec = runners[WHERE].decide(e_where, mode, rng)
        if not where_dec.fallback:
            record(where_dec, e_where)
        if where_dec.fallback:
            flags.add("where_fallback")
            take(EnvAction.NOOP)
            continue
        try:
            binding = resolve_subgoal(state, where_dec.head_name, cache)
        except ResolutionError:
            flags.add("where_retry")
            take(EnvAction.NOOP)
            continue

        budget = subgoal_budget
        lost = False
        while not binding.arrived and budget > 0 and not state.done:
            e_how = encode_how(binding, vocabs[HOW])
            how_dec = runners[HOW].decide(e_how, mode, rng)
            if how_dec.fallback:
                flags.add("how_fallback")
                take(EnvAction.NOOP)
                budget -= 1
                continue
            record(how_dec, e_how)
            take(MOVE_OF_HEAD[how_dec.head_name])
            budget -= 1
            if state.done:
                break
            try:
                binding = resolve_subgoal(state, where_dec.head_name, cache)
            except ResolutionError:
                flags.add("subgoal_lost")
                lost = True
                break
        if state.done:
            break
        if lost or not binding.arrived:
            continue  # back to WHERE
        if binding.object_class == "goal":
            continue  # walkable target: nothing to interact with

        e_what = encode_what(state, vocabs[WHAT], binding)
        what_dec = runners[WHAT].decide(e_what, mode, rng)
        if what_dec.fallback:
            flags.add("what_fallback")
            take(EnvAction.NOOP)
            continue
        record(what_dec, e_what)
        take(ACTION_OF_HEAD[what_dec.head_name])

    if state.timeout:
        flags.add("timeout")
    return Trace(
        task=sketch.task,
        actions=actions,
        rewards=rewards,
        decisions=decisions,
        final_state=state,
        success=state.done and not state.timeout,
        timeout=state.timeout,
        flags=flags,
        tape=tape,
    )


# -- Extraction --------------------------------------------------------------


def extract(
    params: ParamStore,
    libraries: dict[str, ClauseLibrary],
    threshold: float = EXTRACT_THRESHOLD,
    task: str | None = None,
    source: str = "checkpoint",
) -> ExtractedProgram:
    """Read the dominant clauses out of trained weights.

    Per head, every clause whose softmax weight reaches the threshold is
    emitted, and the argmax clause is always emitted.  Deterministic.
    """
    if not 0.0 < threshold <= 1.0:
        raise ValueError(f"threshold must be in (0, 1], got {threshold}")
    clauses: dict[str, list[Clause]] = {h: [] for h in HOLES}
    for hole in HOLES:
        library = libraries[hole]
        for layer in library.layers:
            for head in sorted(layer.keys()):
                cands = layer[head]
                theta = params.theta[(hole, str(head))]
                z = np.exp(theta - np.max(theta))
                w = z / np.sum(z)
                keep = {int(np.argmax(w))}
                keep |= {i for i in range(len(cands)) if w[i] >= threshold}
                clauses[hole].extend(cands[i] for i in sorted(keep))
    return ExtractedProgram(
        task=task or "",
        clauses={h: tuple(c) for h, c in clauses.items()},
        provenance={"source": source, "threshold": repr(threshold)},
    )
