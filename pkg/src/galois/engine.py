"""Soft forward chaining with learnable per-clause weights, plus Adam.

A head's candidate clauses are mixed by softmax(theta); one deduction step
multiplies each clause's body value (product of literal values, negated
literals contributing 1 - v) by its weight, sums per head, and merges the
result into the previous valuation with the probabilistic sum.  Repeating for
tau steps amplifies whatever the weights support while keeping every entry in
[0, 1] and non-decreasing.

Two code paths compute the same math: a plain numpy path for fast evaluation
and a taped path for gradients.  Tests pin them to 1e-12 agreement.
"""
from __future__ import annotations

import weakref
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tape
from .errors import DomainError, NumericsError, ShapeError
from .logic import (
    EXTENSIONAL,
    Clause,
    ClauseLibrary,
    GroundAtom,
    HerbrandBase,
    ValuationVector,
)

DEFAULT_TAU_MAX = 4
INIT_SCALE = 0.1
ONE_HOT_GAP = 1e4  # softmax of [0, -1e4, ...] underflows to exactly one-hot


def prob_sum(x: float, y: float) -> float:
    """Fuzzy OR: x + y - x*y.  Commutative, result >= max(x, y)."""
    if not (0.0 <= x <= 1.0) or not (0.0 <= y <= 1.0):
        raise DomainError(f"prob_sum inputs must lie in [0, 1], got {x}, {y}")
    return x + y - x * y


@dataclass
class HeadTable:
    """Per-head slice of the flattened candidate arrays."""

    head: GroundAtom
    head_pos: int
    layer: int
    clauses: tuple[Clause, ...]


class CompiledLibrary:
    """Flattened gather plan for a clause library over a fixed base.

    Candidate bodies across every head are laid out in one array; literal
    index convention over the widened valuation [e, 1-e, 1.0]: atom i
    positive -> i, atom i negated -> n + i, absent second literal -> 2n.
    """

    def __init__(self, library: ClauseLibrary, base: HerbrandBase):
        self.library = library
        self.base = base
        n = len(base)
        self.n_atoms = n
        self.one_index = 2 * n
        self.tables: list[HeadTable] = []
        lit1: list[int] = []
        lit2: list[int] = []
        seg: list[int] = []
        for k, layer in enumerate(library.layers):
            for head in sorted(layer.keys()):
                cands = layer[head]
                table_idx = len(self.tables)
                self.tables.append(HeadTable(head, base.position(head), k, cands))
                for clause in cands:
                    body = clause.body
                    lit1.append(self._lit_index(body[0]))
                    lit2.append(
                        self._lit_index(body[1]) if len(body) > 1 else self.one_index
                    )
                    seg.append(table_idx)
        self.lit1_all = np.asarray(lit1, dtype=np.intp)
        self.lit2_all = np.asarray(lit2, dtype=np.intp)
        self.seg_ids = np.asarray(seg, dtype=np.intp)
        self.n_heads = len(self.tables)
        self.head_positions = np.asarray([t.head_pos for t in self.tables], dtype=np.intp)
        self.ext_positions = np.asarray(
            [i for i, a in enumerate(base.atoms) if a.predicate.kind == EXTENSIONAL],
            dtype=np.intp,
        )
        self.head_index = {str(t.head): i for i, t in enumerate(self.tables)}
        self.theta_keys = [str(t.head) for t in self.tables]

    def _lit_index(self, lit) -> int:
        pos = self.base.position(lit.atom)
        return pos + self.n_atoms if lit.negated else pos

    def softmax_all(self, params: "ParamStore", hole: str) -> np.ndarray:
        parts = []
        for table in self.tables:
            th = params.theta[(hole, str(table.head))]
            z = np.exp(th - np.max(th))
            parts.append(z / np.sum(z))
        return np.concatenate(parts)


_compiled_cache: "weakref.WeakKeyDictionary[ClauseLibrary, CompiledLibrary]" = (
    weakref.WeakKeyDictionary()
)


def compile_library(library: ClauseLibrary, base: HerbrandBase) -> CompiledLibrary:
    cached = _compiled_cache.get(library)
    if cached is None or cached.base is not base:
        cached = CompiledLibrary(library, base)
        _compiled_cache[library] = cached
    return cached


class ParamStore:
    """Clause-weight vectors per (hole, head) with Adam state.

    Weight-vector length always equals the candidate count for that head;
    gradients are zeroed after every applied update.
    """

    def __init__(self):
        self.theta: dict[tuple[str, str], np.ndarray] = {}
        self.grad: dict[tuple[str, str], np.ndarray] = {}
        self.adam_m: dict[tuple[str, str], np.ndarray] = {}
        self.adam_v: dict[tuple[str, str], np.ndarray] = {}
        self.step_count = 0

    @staticmethod
    def initialize(
        libraries: dict[str, ClauseLibrary], rng: np.random.Generator
    ) -> "ParamStore":
        """Fresh store with i.i.d. uniform weights on [-INIT_SCALE, INIT_SCALE].

        Near-zero weights give a near-uniform softmax, i.e. unbiased
        exploration over each head's candidate list.
        """
        store = ParamStore()
        for hole in sorted(libraries.keys()):
            library = libraries[hole]
            for layer in library.layers:
                for head in sorted(layer.keys()):
                    k = len(layer[head])
                    store.theta[(hole, str(head))] = rng.uniform(-INIT_SCALE, INIT_SCALE, k)
        store.reset_optimizer()
        return store

    def reset_optimizer(self) -> None:
        self.grad = {k: np.zeros_like(v) for k, v in self.theta.items()}
        self.adam_m = {k: np.zeros_like(v) for k, v in self.theta.items()}
        self.adam_v = {k: np.zeros_like(v) for k, v in self.theta.items()}
        self.step_count = 0

    def zero_grad(self) -> None:
        for g in self.grad.values():
            g[:] = 0.0

    def weights(self, hole: str, head: GroundAtom | str) -> np.ndarray:
        return self.theta[(hole, str(head))]

    def set_one_hot(self, hole: str, head: GroundAtom | str, index: int) -> None:
        """Drive softmax to an exact one-hot on the given candidate."""
        th = self.theta[(hole, str(head))]
        th[:] = -ONE_HOT_GAP
        th[index] = 0.0

    def copy(self) -> "ParamStore":
        out = ParamStore()
        out.theta = {k: v.copy() for k, v in self.theta.items()}
        out.grad = {k: v.copy() for k, v in self.grad.items()}
        out.adam_m = {k: v.copy() for k, v in self.adam_m.items()}
        out.adam_v = {k: v.copy() for k, v in self.adam_v.items()}
        out.step_count = self.step_count
        return out

    def check_shapes(self, hole: str, compiled: CompiledLibrary) -> None:
        for table in compiled.tables:
            key = (hole, str(table.head))
            if key not in self.theta:
                raise ShapeError(f"no weights for {key}")
            if self.theta[key].shape != (len(table.clauses),):
                raise ShapeError(
                    f"weights for {key}: {self.theta[key].shape} != ({len(table.clauses)},)"
                )


@dataclass
class WeightContext:
    """Per-episode tape slots for one hole's weights: theta leaves plus the
    concatenated softmax vector.  Reusing it across every decision on a tape
    differentiates each softmax once per episode instead of per decision."""

    hole: str
    theta_slots: dict
    w_all_slot: int


def prepare_weights(
    tape: Tape, params: ParamStore, hole: str, compiled: CompiledLibrary
) -> WeightContext:
    theta_slots = {}
    softmax_slots = []
    for table in compiled.tables:
        key = (hole, str(table.head))
        sl = tape.leaf(params.theta[key], label=key)
        theta_slots[key] = sl
        softmax_slots.append(tape.softmax(sl))
    w_all = softmax_slots[0] if len(softmax_slots) == 1 else tape.concat(softmax_slots)
    return WeightContext(hole=hole, theta_slots=theta_slots, w_all_slot=w_all)


@dataclass
class DeductionResult:
    final: ValuationVector
    steps: list[ValuationVector]
    tape: Tape | None = None
    # taped runs only: the slot of the final per-head value vector (ordered
    # like the compiled tables), each head's index in it, the theta leaves,
    # and the assembled final valuation slot
    heads_slot: int | None = None
    head_index: dict[str, int] = field(default_factory=dict)
    theta_slots: dict = field(default_factory=dict)
    final_slot: int | None = None

    def head_values(self) -> dict[str, float]:
        return {
            str(a): self.final.value(a) for a in self.final.base.intensional_atoms()
        }


def soft_step(
    e_prev: ValuationVector,
    library: ClauseLibrary,
    params: ParamStore,
    hole: str,
) -> ValuationVector:
    """One deduction step, plain numpy path.  Extensional entries unchanged."""
    compiled = compile_library(library, e_prev.base)
    params.check_shapes(hole, compiled)
    vals = e_prev.values
    if np.any(vals < 0.0) or np.any(vals > 1.0):
        raise DomainError("valuation entries outside [0, 1]")
    out = vals.copy()
    _plain_step(out, compiled, compiled.softmax_all(params, hole))
    return ValuationVector(e_prev.base, out)


def _plain_step(vals: np.ndarray, compiled: CompiledLibrary, w_all: np.ndarray) -> None:
    widened = np.concatenate([vals, 1.0 - vals, [1.0]])
    body = widened[compiled.lit1_all] * widened[compiled.lit2_all]
    s = np.bincount(compiled.seg_ids, weights=w_all * body, minlength=compiled.n_heads)
    prev = vals[compiled.head_positions]
    vals[compiled.head_positions] = prev + s - prev * s


def deduce(
    e0: ValuationVector,
    library: ClauseLibrary,
    params: ParamStore,
    hole: str,
    tau_max: int = DEFAULT_TAU_MAX,
    tape: Tape | None = None,
    weights: WeightContext | None = None,
    record_steps: bool = True,
) -> DeductionResult:
    """Apply tau_max soft deduction steps, optionally recording on a tape.

    `weights` carries pre-recorded softmax slots from prepare_weights on the
    same tape, letting several decisions share them.  record_steps=False
    keeps only the initial and final valuations (rollout hot path).
    """
    if tau_max < 1:
        raise DomainError(f"tau_max must be >= 1, got {tau_max}")
    if isinstance(library, CompiledLibrary):
        compiled = library
    else:
        compiled = compile_library(library, e0.base)
        params.check_shapes(hole, compiled)
    if tape is None:
        vals = e0.values
        if np.any(vals < 0.0) or np.any(vals > 1.0):
            raise DomainError("valuation entries outside [0, 1]")
        w_all = compiled.softmax_all(params, hole)
        cur = vals.copy()
        steps = [ValuationVector(e0.base, cur.copy())]
        for _ in range(tau_max):
            _plain_step(cur, compiled, w_all)
            if record_steps:
                steps.append(ValuationVector(e0.base, cur.copy()))
        if not record_steps:
            steps.append(ValuationVector(e0.base, cur))
        return DeductionResult(final=steps[-1], steps=steps)
    return _deduce_taped(e0, compiled, params, hole, tau_max, tape, weights,
                         record_steps)


def _deduce_taped(
    e0: ValuationVector,
    compiled: CompiledLibrary,
    params: ParamStore,
    hole: str,
    tau_max: int,
    tape: Tape,
    weights: WeightContext | None,
    record_steps: bool = True,
) -> DeductionResult:
    n = compiled.n_atoms
    if weights is None:
        weights = prepare_weights(tape, params, hole, compiled)

    ext_slot = tape.leaf(e0.values[compiled.ext_positions])
    ext_bar_slot = tape.one_minus(ext_slot)
    one_slot = tape.leaf(1.0)
    heads_slot = tape.leaf(e0.values[compiled.head_positions])

    ext_pos = compiled.ext_positions
    head_pos = compiled.head_positions

    def e_vec_slot(hslot):
        return tape.assemble([ext_slot, hslot], [ext_pos, head_pos], n)

    step_vectors = []
    if record_steps:
        step_vectors.append(
            ValuationVector(e0.base, tape.value(e_vec_slot(heads_slot)).copy())
        )

    for _ in range(tau_max):
        heads_bar = tape.one_minus(heads_slot)
        widened = tape.assemble(
            [ext_slot, heads_slot, ext_bar_slot, heads_bar, one_slot],
            [ext_pos, head_pos, ext_pos + n, head_pos + n, 2 * n],
            2 * n + 1,
        )
        g1 = tape.gather(widened, compiled.lit1_all)
        g2 = tape.gather(widened, compiled.lit2_all)
        body = tape.mul(g1, g2)
        weighted = tape.mul(weights.w_all_slot, body)
        s_vec = tape.segment_sum(weighted, compiled.seg_ids, compiled.n_heads)
        heads_slot = tape.prob_sum(heads_slot, s_vec)
        if record_steps:
            step_vectors.append(
                ValuationVector(e0.base, tape.value(e_vec_slot(heads_slot)).copy())
            )
    e_slot = e_vec_slot(heads_slot)
    if not record_steps:
        step_vectors = [ValuationVector(e0.base, e0.values),
                        ValuationVector(e0.base, tape.value(e_slot))]

    return DeductionResult(
        final=step_vectors[-1],
        steps=step_vectors,
        tape=tape,
        heads_slot=heads_slot,
        head_index=dict(compiled.head_index),
        theta_slots=dict(weights.theta_slots),
        final_slot=e_slot,
    )


def policy_update(
    params: ParamStore,
    gradients: dict[tuple[str, str], np.ndarray],
    alpha: float = 0.001,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> ParamStore:
    """One Adam step in the ascent direction of `gradients`.

    Raises NumericsError on non-finite gradients without touching any state,
    so a caller can skip the update and keep training.
    """
    for key, g in gradients.items():
        if key not in params.theta:
            raise ShapeError(f"gradient for unknown parameter {key}")
        if g.shape != params.theta[key].shape:
            raise ShapeError(f"gradient shape mismatch for {key}")
        if not np.all(np.isfinite(g)):
            raise NumericsError(f"non-finite gradient for {key}")
    params.step_count += 1
    t = params.step_count
    for key, g in gradients.items():
        m = params.adam_m[key]
        v = params.adam_v[key]
        m[:] = beta1 * m + (1.0 - beta1) * g
        v[:] = beta2 * v + (1.0 - beta2) * g * g
        m_hat = m / (1.0 - beta1 ** t)
        v_hat = v / (1.0 - beta2 ** t)
        params.theta[key] += alpha * m_hat / (np.sqrt(v_hat) + eps)
    return params
