"""State encoding and decision decoding around the three sketch holes.

Each hole owns a vocabulary: a Herbrand base of ground atoms, the nullary
head atoms it may deduce, and the subset of atoms candidate clause bodies are
allowed to mention.  Type atoms such as is_agent(agent) are statically true
for the classes a task declares; they are kept in the base so hand-written
programs and pretty-printing work, but excluded from candidate bodies because
they carry no information.

Coordinate convention for the navigation hole: x is the column axis (east
positive), y is the row axis (south positive); pos/neg/zero applied to x or y
describe the offset to the next waypoint, which points along a shortest path
rather than straight at the subgoal so walls never invalidate the learned
sign-to-direction mapping.
"""
from __future__ import annotations

import hashlib
import warnings
from dataclasses import dataclass

import numpy as np

from .autodiff import Tape
from .engine import DeductionResult
from .envs import EnvAction, GridState, bfs_distances, drop_target
from .errors import ConfigError, ResolutionError
from .logic import (
    EXTENSIONAL,
    INTENSIONAL,
    ClauseLibrary,
    GroundAtom,
    HerbrandBase,
    Predicate,
    ValuationVector,
    build_base,
    enumerate_clauses,
)

WHERE, HOW, WHAT = "where", "how", "what"
HOLES = (WHERE, HOW, WHAT)

# WHERE heads name a subgoal class (and a color for the multiroom doors).
SUBGOAL_OF_HEAD = {
    "gt_key": ("key", None),
    "gt_door": ("door", None),
    "gt_box": ("box", None),
    "gt_goal": ("goal", None),
    "drop_key": ("spot", None),
    "gt_red": ("door", "red"),
    "gt_yellow": ("door", "yellow"),
    "gt_blue": ("door", "blue"),
}

ACTION_OF_HEAD = {
    "pick": EnvAction.PICK,
    "toggle": EnvAction.TOGGLE,
    "drop": EnvAction.DROP,
    "noop": EnvAction.NOOP,
}

MOVE_OF_HEAD = {
    "go_east": EnvAction.MOVE_EAST,
    "go_west": EnvAction.MOVE_WEST,
    "go_south": EnvAction.MOVE_SOUTH,
    "go_north": EnvAction.MOVE_NORTH,
}

# Type predicates that pin a display variable to a unique constant.
_TYPE_PRED_CONSTANT = {
    "is_agent": "agent",
    "is_env": "env",
    "is_key": "key",
    "is_box": "box",
    "is_goal": "goal",
    "is_red": "red",
    "is_yellow": "yellow",
    "is_blue": "blue",
}


@dataclass(frozen=True, eq=False)
class HoleVocabulary:
    task: str
    hole: str
    base: HerbrandBase
    heads: tuple[GroundAtom, ...]
    body_pool: tuple[GroundAtom, ...]
    determining: dict  # predicate name -> constant for display variables

    def head_names(self) -> list[str]:
        return [h.name for h in self.heads]

    def manifest_text(self) -> str:
        lines = [f"task {self.task}", f"hole {self.hole}"]
        preds = sorted({a.predicate for a in self.base.atoms})
        consts = sorted({t for a in self.base.atoms for t in a.terms})
        lines.append("predicates " + " ".join(f"{p.name}/{p.arity}:{p.kind[0]}" for p in preds))
        lines.append("constants " + " ".join(consts))
        lines.append("heads " + " ".join(str(h) for h in self.heads))
        lines.append("body_pool " + " ".join(str(a) for a in self.body_pool))
        return "\n".join(lines) + "\n"


def _mk_vocab(task, hole, ext_preds, int_heads, constants, pool_atoms, determining):
    preds = [Predicate(p, 1, EXTENSIONAL) for p in ext_preds]
    preds += [Predicate(h, 0, INTENSIONAL) for h in int_heads]
    base = build_base(preds, constants)
    heads = tuple(sorted(base.intensional_atoms()))
    pool = tuple(sorted(
        GroundAtom(Predicate(p, 1, EXTENSIONAL), (c,)) for p, c in pool_atoms
    ))
    for a in pool:
        if a not in base:
            raise ConfigError(f"pool atom {a} missing from base")
    return HoleVocabulary(
        task=task,
        hole=hole,
        base=base,
        heads=heads,
        body_pool=pool,
        determining=dict(determining),
    )


def build_vocabularies(task: str) -> dict[str, HoleVocabulary]:
    """The three hole vocabularies for a task (sem-mod variants share their
    base task's vocabularies, so programs and checkpoints carry over)."""
    root = task.replace("-semmod", "")
    how = _mk_vocab(
        root,
        HOW,
        ext_preds=["pos", "neg", "zero"],
        int_heads=["go_east", "go_north", "go_south", "go_west"],
        constants=["x", "y"],
        pool_atoms=[(p, c) for p in ("pos", "neg", "zero") for c in ("x", "y")],
        determining={},
    )
    if root in ("doorkey", "boxkey", "unlockpickup"):
        where_heads = {
            "doorkey": ["gt_key", "gt_door", "gt_goal"],
            "boxkey": ["gt_key", "gt_door", "gt_goal", "gt_box"],
            "unlockpickup": ["gt_key", "gt_door", "gt_box", "drop_key"],
        }[root]
        determining = {
            "is_agent": "agent",
            "is_env": "env",
            "is_door": "door",
            "is_key": "key",
            "is_box": "box",
            "is_goal": "goal",
        }
        where = _mk_vocab(
            root,
            WHERE,
            ext_preds=["has_key", "is_agent", "is_env", "is_door", "is_open"],
            int_heads=where_heads,
            constants=["agent", "door", "env"],
            pool_atoms=[("has_key", "agent"), ("has_key", "env"), ("is_open", "door")],
            determining=determining,
        )
        what_constants = {
            "doorkey": ["agent", "door", "env", "key"],
            "boxkey": ["agent", "box", "door", "env", "key"],
            "unlockpickup": ["agent", "box", "door", "env", "key", "spot"],
        }[root]
        what_preds = ["has_key", "is_agent", "is_env", "is_door", "is_open", "is_key", "at"]
        if root in ("boxkey", "unlockpickup"):
            what_preds.append("is_box")
        # Interaction bodies mention the arrival context (at atoms), the
        # agent's hands, and the door state.  has_key(env) stays out: it
        # merely correlates with arrival phases during training, and clauses
        # leaning on it invert their meaning when objects are relocated
        # (key-outside-box, missing-key variants).
        what_pool = [("has_key", "agent"), ("is_open", "door"),
                     ("at", "key"), ("at", "door")]
        if root in ("boxkey", "unlockpickup"):
            what_pool.append(("at", "box"))
        if root == "unlockpickup":
            what_pool.append(("at", "spot"))
        what = _mk_vocab(
            root,
            WHAT,
            ext_preds=what_preds,
            int_heads=["pick", "toggle", "drop", "noop"],
            constants=what_constants,
            pool_atoms=what_pool,
            determining=determining,
        )
    elif root == "multiroom":
        determining = {
            "is_red": "red",
            "is_yellow": "yellow",
            "is_blue": "blue",
            "is_goal": "goal",
        }
        where = _mk_vocab(
            root,
            WHERE,
            ext_preds=["is_door", "is_open", "is_red", "is_yellow", "is_blue",
                       "is_goal", "reachable"],
            int_heads=["gt_red", "gt_yellow", "gt_blue", "gt_goal"],
            constants=["blue", "goal", "red", "yellow"],
            pool_atoms=[("reachable", c) for c in ("blue", "goal", "red", "yellow")]
            + [("is_open", c) for c in ("blue", "red", "yellow")],
            determining=determining,
        )
        what = _mk_vocab(
            root,
            WHAT,
            ext_preds=["at", "is_door", "is_open", "is_red", "is_yellow",
                       "is_blue", "is_goal"],
            int_heads=["pick", "toggle", "drop", "noop"],
            constants=["blue", "door", "goal", "red", "yellow"],
            pool_atoms=[("at", "door")],
            determining=determining,
        )
    else:
        raise ConfigError(f"unknown task {task!r}")
    return {WHERE: where, HOW: how, WHAT: what}


def build_libraries(
    task: str, depth: int = 1, l_max: int = 2
) -> dict[str, ClauseLibrary]:
    vocabs = build_vocabularies(task)
    out = {}
    for hole, vocab in vocabs.items():
        # The navigation atoms partition each axis (exactly one of pos, neg,
        # zero holds), so negated literals are redundant there and would only
        # create aliased clauses that fire in several direction contexts.
        out[hole] = enumerate_clauses(
            vocab.base,
            list(vocab.heads),
            depth=depth,
            l_max=l_max,
            body_atoms=list(vocab.body_pool),
            negation=(hole != HOW),
        )
    return out


def vocabulary_hash(task: str) -> str:
    """Hash of the vocabularies plus the canonical clause libraries; stored in
    checkpoints so weights refuse to load against a different layout."""
    vocabs = build_vocabularies(task)
    libs = build_libraries(task)
    parts = []
    for hole in HOLES:
        parts.append(vocabs[hole].manifest_text())
        for clause in libs[hole].all_clauses():
            parts.append(str(clause))
    return hashlib.sha256("\n".join(parts).encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# Encoders
# ---------------------------------------------------------------------------


def _door_by_color(state: GridState, color: str):
    for d in state.doors:
        if d.color == color:
            return d
    return None


def _reachable_cell(state: GridState, cell) -> bool:
    if cell is None:
        return False
    return state.agent in bfs_distances(state, cell)


def _atom_truth(state: GridState, pred: str, const: str, binding=None) -> bool:
    """Truth of one extensional atom against the grid state.

    Type atoms are static per class; has_key(env) means a key is visible on
    the grid; at(c) is scoped to the currently resolved subgoal.
    """
    if pred == "has_key":
        if const == "agent":
            return state.carrying == "key"
        if const == "env":
            return len(state.keys) > 0
        return False
    if pred == "is_open":
        if const == "door":
            return all(d.open for d in state.doors) and len(state.doors) > 0
        door = _door_by_color(state, const)
        return door is not None and door.open
    if pred == "reachable":
        if const == "goal":
            return _reachable_cell(state, state.goal)
        door = _door_by_color(state, const)
        return door is not None and _reachable_cell(state, door.pos)
    if pred == "at":
        if binding is None or not binding.arrived:
            return False
        return const == binding.object_class or const == binding.color
    if pred == "is_agent":
        return const == "agent"
    if pred == "is_env":
        return const == "env"
    if pred == "is_key":
        return const == "key"
    if pred == "is_box":
        return const == "box"
    if pred == "is_goal":
        return const == "goal"
    if pred == "is_door":
        return const in ("door", "red", "yellow", "blue")
    if pred == "is_red":
        return const == "red"
    if pred == "is_yellow":
        return const == "yellow"
    if pred == "is_blue":
        return const == "blue"
    raise ConfigError(f"no truth rule for predicate {pred!r}")


def _encode(state: GridState, vocab: HoleVocabulary, binding=None) -> ValuationVector:
    vec = np.zeros(len(vocab.base))
    for i, atom in enumerate(vocab.base.atoms):
        if atom.predicate.kind != EXTENSIONAL:
            continue
        if _atom_truth(state, atom.predicate.name, atom.terms[0], binding):
            vec[i] = 1.0
    return ValuationVector(vocab.base, vec)


def encode_where(state: GridState, vocab: HoleVocabulary) -> ValuationVector:
    """Extensional facts for the subgoal hole; intensional entries zero."""
    return _encode(state, vocab)


def encode_what(
    state: GridState, vocab: HoleVocabulary, binding: "SubgoalBinding"
) -> ValuationVector:
    """Like encode_where plus the subgoal-scoped at() arrival atoms."""
    return _encode(state, vocab, binding)


@dataclass
class SubgoalBinding:
    head_name: str
    object_class: str
    color: str | None
    target_cell: tuple[int, int]
    delta: tuple[int, int]  # (d_row, d_col) to the next waypoint
    arrived: bool
    distance: int


def encode_how(binding: SubgoalBinding, vocab: HoleVocabulary) -> ValuationVector:
    """Sign predicates of the waypoint offset; exactly one x-atom and one
    y-atom are true."""
    d_row, d_col = binding.delta
    facts = set()
    base = vocab.base

    def put(pred, const):
        facts.add((pred, const))

    put("pos" if d_col > 0 else ("neg" if d_col < 0 else "zero"), "x")
    put("pos" if d_row > 0 else ("neg" if d_row < 0 else "zero"), "y")
    vec = np.zeros(len(base))
    for i, atom in enumerate(base.atoms):
        if atom.predicate.kind != EXTENSIONAL:
            continue
        if (atom.predicate.name, atom.terms[0]) in facts:
            vec[i] = 1.0
    return ValuationVector(base, vec)


def _nearest(state: GridState, cells: list) -> tuple[int, int]:
    ar, ac = state.agent
    return min(cells, key=lambda p: (abs(p[0] - ar) + abs(p[1] - ac), p[0], p[1]))


def resolve_subgoal(
    state: GridState,
    head_name: str,
    cache: dict | None = None,
) -> SubgoalBinding:
    """Resolve a subgoal head to a target cell and the next waypoint offset.

    Raises ResolutionError when no matching object exists or the target is
    unreachable.  A shared cache dict (keyed by grid_version and target)
    avoids recomputing BFS fields while the grid is unchanged.
    """
    if head_name not in SUBGOAL_OF_HEAD:
        raise ResolutionError(f"unknown subgoal head {head_name!r}")
    object_class, color = SUBGOAL_OF_HEAD[head_name]

    if object_class == "key":
        if not state.keys:
            raise ResolutionError("no visible key")
        target = _nearest(state, [k.pos for k in state.keys])
        walk_onto = False
    elif object_class == "door":
        doors = [d for d in state.doors if color is None or d.color == color]
        if not doors:
            raise ResolutionError(f"no {color or ''} door")
        target = _nearest(state, [d.pos for d in doors])
        walk_onto = False
    elif object_class == "box":
        if not state.boxes:
            raise ResolutionError("no box")
        target = _nearest(state, [b.pos for b in state.boxes])
        walk_onto = False
    elif object_class == "goal":
        if state.goal is None:
            raise ResolutionError("no goal")
        target = state.goal
        walk_onto = True
    elif object_class == "spot":
        spot = drop_target(state)
        if spot is None:
            raise ResolutionError("no free cell to drop onto")
        return SubgoalBinding(head_name, "spot", None, spot, (0, 0), True, 0)
    else:  # pragma: no cover
        raise ResolutionError(object_class)

    if cache is not None:
        key = (state.grid_version, target)
        dist = cache.get(key)
        if dist is None:
            dist = bfs_distances(state, target)
            cache[key] = dist
    else:
        dist = bfs_distances(state, target)

    agent_dist = dist.get(state.agent)
    if agent_dist is None:
        raise ResolutionError(f"{head_name}: target {target} unreachable")
    arrive_at = 0 if walk_onto else 1
    if agent_dist <= arrive_at:
        return SubgoalBinding(head_name, object_class, color, target, (0, 0), True, agent_dist)

    best = None
    ar, ac = state.agent
    for dr, dc in ((-1, 0), (0, 1), (1, 0), (0, -1)):
        nb = (ar + dr, ac + dc)
        if nb in dist and state.passable(nb):
            cand = (dist[nb], nb[0], nb[1], (dr, dc))
            if best is None or cand < best:
                best = cand
    if best is None:  # pragma: no cover - unreachable if agent_dist found
        raise ResolutionError(f"{head_name}: no waypoint")
    return SubgoalBinding(
        head_name, object_class, color, target, best[3], False, agent_dist
    )


# ---------------------------------------------------------------------------
# Decoding deduced head values into decisions
# ---------------------------------------------------------------------------


@dataclass
class Decision:
    hole: str
    head_name: str | None
    index: int | None
    probs: np.ndarray
    log_prob: float | None
    entropy: float | None
    logp_slot: int | None = None
    entropy_slot: int | None = None
    fallback: bool = False


def decode(
    hole: str,
    head_names: list[str],
    values: np.ndarray,
    mode: str,
    rng: np.random.Generator | None = None,
    tape: Tape | None = None,
    heads_slot: int | None = None,
    head_indices: np.ndarray | None = None,
) -> Decision:
    """Normalize head values into a categorical and pick one.

    sample mode draws from the distribution (requires rng); argmax mode takes
    the maximum with lexicographic tie-break, which numpy's argmax gives for
    name-sorted heads.  With a tape, the log-probability of the pick and the
    entropy of the distribution are recorded for the policy gradient.
    """
    values = np.asarray(values, dtype=float)
    total = float(np.sum(values))
    if total <= 1e-12:
        warnings.warn(f"{hole}: all head values zero, falling back", stacklevel=2)
        return Decision(hole, None, None, np.zeros(len(head_names)), None, None,
                        fallback=True)
    probs = values / total
    if mode == "argmax":
        index = int(np.argmax(probs))
    elif mode == "sample":
        if rng is None:
            raise ConfigError("sample mode needs an rng")
        index = int(rng.choice(len(probs), p=probs))
    else:
        raise ConfigError(f"unknown decode mode {mode!r}")

    logp_slot = ent_slot = None
    if tape is not None and heads_slot is not None:
        vec = heads_slot
        if head_indices is not None:
            vec = tape.gather(heads_slot, head_indices)
        total_slot = tape.total(vec)
        pi = tape.div(vec, total_slot)
        logp_slot = tape.log(tape.gather(pi, [index]))
        ent_slot = tape.entropy(pi)
    log_prob = float(np.log(probs[index]))
    entropy = float(-np.dot(probs, np.log(np.maximum(probs, 1e-300))))
    return Decision(
        hole=hole,
        head_name=head_names[index],
        index=index,
        probs=probs,
        log_prob=log_prob,
        entropy=entropy,
        logp_slot=logp_slot,
        entropy_slot=ent_slot,
    )


def head_positions(vocab: HoleVocabulary, head_names: list[str]) -> np.ndarray:
    """Base positions of the named heads, for direct valuation indexing."""
    by_name = {a.name: i for i, a in enumerate(vocab.base.atoms)}
    return np.asarray([by_name[n] for n in head_names], dtype=np.intp)


def decision_values(
    result: DeductionResult, head_names: list[str]
) -> tuple[np.ndarray, np.ndarray | None]:
    """Final head values and, for taped runs, their indices into the deduced
    head-vector slot (identity order when the library has a single layer)."""
    values = []
    indices: list[int] = []
    atoms = {a.name: a for a in result.final.base.intensional_atoms()}
    for name in head_names:
        atom = atoms[name]
        values.append(result.final.value(atom))
        if result.tape is not None:
            indices.append(result.head_index[str(atom)])
    if result.tape is None:
        return np.asarray(values), None
    return np.asarray(values), np.asarray(indices, dtype=np.intp)
