"""Symbolic foundation: predicates, ground atoms, clauses, Herbrand bases.

Everything here is propositional: clauses are stored fully grounded, and the
variables seen in pretty-printed programs are display sugar added later.  All
types are immutable after construction and safe to share across threads.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError, VocabularyError

EXTENSIONAL = "extensional"
INTENSIONAL = "intensional"

# Bodies longer than this are rejected at clause construction.  Hand-written
# programs use up to four literals; enumerated candidates use at most two per
# layer and reach four through composition.
MAX_BODY_LEN = 4


@dataclass(frozen=True, order=True)
class Predicate:
    name: str
    arity: int
    kind: str = EXTENSIONAL

    def __post_init__(self):
        if self.arity not in (0, 1):
            raise VocabularyError(f"predicate {self.name}: arity must be 0 or 1")
        if self.kind not in (EXTENSIONAL, INTENSIONAL):
            raise VocabularyError(f"predicate {self.name}: bad kind {self.kind!r}")


@dataclass(frozen=True, order=True)
class GroundAtom:
    predicate: Predicate
    terms: tuple[str, ...] = ()

    def __post_init__(self):
        if len(self.terms) != self.predicate.arity:
            raise VocabularyError(
                f"atom {self.predicate.name}: got {len(self.terms)} terms, "
                f"arity is {self.predicate.arity}"
            )

    @property
    def name(self) -> str:
        return self.predicate.name

    def __str__(self) -> str:
        if not self.terms:
            return self.predicate.name
        return f"{self.predicate.name}({', '.join(self.terms)})"


@dataclass(frozen=True, order=True)
class Literal:
    atom: GroundAtom
    negated: bool = False

    def __post_init__(self):
        if self.negated and self.atom.predicate.kind != EXTENSIONAL:
            raise VocabularyError(
                f"negation on intensional atom {self.atom}: negation is stratified "
                "and only extensional atoms may be negated"
            )

    def __str__(self) -> str:
        return ("!" if self.negated else "") + str(self.atom)


@dataclass(frozen=True)
class Clause:
    head: GroundAtom
    body: tuple[Literal, ...]

    def __post_init__(self):
        if self.head.predicate.kind != INTENSIONAL:
            raise VocabularyError(f"clause head {self.head} must be intensional")
        if not 1 <= len(self.body) <= MAX_BODY_LEN:
            raise VocabularyError(
                f"clause {self.head}: body size {len(self.body)} outside [1, {MAX_BODY_LEN}]"
            )
        if len(set(self.body)) != len(self.body):
            raise VocabularyError(f"clause {self.head}: duplicate body literals")
        for lit in self.body:
            if lit.atom == self.head:
                raise VocabularyError(f"clause {self.head}: head appears in body")

    def key(self) -> tuple:
        """Canonical identity: head plus the sorted body literal set.

        Used for cross-task weight matching, so it must not depend on library
        indices or on the order literals were written in.
        """
        return (str(self.head), tuple(sorted((str(l.atom), l.negated) for l in self.body)))

    def __str__(self) -> str:
        return f"{self.head} :- {', '.join(str(l) for l in self.body)}."


class HerbrandBase:
    """Fixed, ordered universe of ground atoms with a position index."""

    def __init__(self, atoms: list[GroundAtom]):
        self.atoms: tuple[GroundAtom, ...] = tuple(atoms)
        self.index: dict[GroundAtom, int] = {a: i for i, a in enumerate(self.atoms)}
        if len(self.index) != len(self.atoms):
            raise VocabularyError("duplicate atoms in Herbrand base")

    def __len__(self) -> int:
        return len(self.atoms)

    def __contains__(self, atom: GroundAtom) -> bool:
        return atom in self.index

    def position(self, atom: GroundAtom) -> int:
        return self.index[atom]

    def extensional_atoms(self) -> list[GroundAtom]:
        return [a for a in self.atoms if a.predicate.kind == EXTENSIONAL]

    def intensional_atoms(self) -> list[GroundAtom]:
        return [a for a in self.atoms if a.predicate.kind == INTENSIONAL]


@dataclass(frozen=True)
class ValuationVector:
    """Soft truth assignment over a Herbrand base, one entry per atom in [0, 1]."""

    base: HerbrandBase
    values: np.ndarray

    def __post_init__(self):
        # bounds are enforced where valuations are produced (encoders and
        # deduction steps); validating per construction is too hot a path
        if self.values.shape != (len(self.base),):
            raise ShapeError(
                f"expected shape ({len(self.base)},), got {self.values.shape}"
            )

    def value(self, atom: GroundAtom) -> float:
        return float(self.values[self.base.position(atom)])

    @staticmethod
    def from_facts(base: HerbrandBase, facts: set[GroundAtom]) -> "ValuationVector":
        vec = np.zeros(len(base))
        for a in facts:
            vec[base.position(a)] = 1.0
        return ValuationVector(base, vec)


@dataclass(frozen=True, eq=False)
class ClauseLibrary:
    """Layered candidate clauses, one ordered list per intensional head.

    Layer 0 bodies reference only extensional atoms; layer k bodies may also
    reference heads grounded by layers < k.  Ordering is deterministic given
    the vocabulary, so weight indices stay stable across runs and checkpoints.
    """

    layers: tuple[dict[GroundAtom, tuple[Clause, ...]], ...]

    def heads(self) -> list[GroundAtom]:
        out = []
        for layer in self.layers:
            out.extend(layer.keys())
        return out

    def candidates(self, head: GroundAtom) -> tuple[Clause, ...]:
        for layer in self.layers:
            if head in layer:
                return layer[head]
        raise KeyError(head)

    def layer_of(self, head: GroundAtom) -> int:
        for k, layer in enumerate(self.layers):
            if head in layer:
                return k
        raise KeyError(head)

    def all_clauses(self) -> list[Clause]:
        out = []
        for layer in self.layers:
            for cands in layer.values():
                out.extend(cands)
        return out

    def validate_stratification(self) -> None:
        """Check the layering invariant by scanning every layer."""
        groundable: set[GroundAtom] = set()
        for k, layer in enumerate(self.layers):
            for head, cands in layer.items():
                for clause in cands:
                    for lit in clause.body:
                        if lit.atom.predicate.kind == EXTENSIONAL:
                            continue
                        if lit.atom not in groundable:
                            raise VocabularyError(
                                f"layer {k} clause {clause} references {lit.atom}, "
                                "not groundable by earlier layers"
                            )
            groundable |= set(layer.keys())


def build_base(vocabulary: list[Predicate], constants: list[str]) -> HerbrandBase:
    """Instantiate every predicate with every constant tuple of its arity.

    The result is sorted by (predicate name, term tuple), so two calls with
    the same inputs produce identical orderings.
    """
    if not vocabulary:
        raise VocabularyError("empty vocabulary")
    names = [p.name for p in vocabulary]
    if len(set(names)) != len(names):
        dupes = sorted({n for n in names if names.count(n) > 1})
        raise VocabularyError(f"duplicate predicate names: {dupes}")
    if any(p.arity > 0 for p in vocabulary) and not constants:
        raise VocabularyError("unary predicates present but constant pool is empty")
    atoms = []
    for pred in vocabulary:
        if pred.arity == 0:
            atoms.append(GroundAtom(pred, ()))
        else:
            for c in constants:
                atoms.append(GroundAtom(pred, (c,)))
    atoms.sort(key=lambda a: (a.predicate.name, a.terms))
    return HerbrandBase(atoms)


def _literal_pool(atoms: list[GroundAtom], negation: bool = True) -> list[Literal]:
    pool = []
    for a in atoms:
        pool.append(Literal(a, False))
        if negation:
            pool.append(Literal(a, True))
    return pool


def _conjunctions(pool: list[Literal], max_len: int) -> list[tuple[Literal, ...]]:
    """All bodies of 1..max_len literals over the pool, no repeated atoms.

    A body using the same atom twice is either redundant (p, p) or
    unsatisfiable (p, !p), so those pairs are skipped.
    """
    bodies = [(lit,) for lit in pool]
    if max_len >= 2:
        for i, l1 in enumerate(pool):
            for l2 in pool[i + 1:]:
                if l1.atom == l2.atom:
                    continue
                bodies.append((l1, l2))
    return bodies


def enumerate_clauses(
    base: HerbrandBase,
    heads: list[GroundAtom],
    depth: int = 1,
    l_max: int = 2,
    body_atoms: list[GroundAtom] | None = None,
    negation: bool = True,
) -> ClauseLibrary:
    """Build the layered candidate-clause library for the given heads.

    Layer 0 holds conjunctions of at most two (optionally negated) extensional
    literals.  With depth >= 2, intermediate conjunction heads are introduced
    per layer-0 pair, and the final layer conjoins up to two of those with the
    plain atoms, which reaches four-literal bodies at depth 2.

    body_atoms restricts the atoms candidate bodies may draw on (it defaults
    to every extensional atom of the base).  Statically-true or impossible
    atoms are normally excluded by the caller so candidate mass is not wasted
    on padding literals.  negation=False drops negated literals entirely,
    which callers use when the atom pool is an exhaustive partition (each
    negation is then expressible as a disjunction of the other atoms).
    """
    if depth < 1 or l_max < 1:
        raise ConfigError(f"depth and l_max must be >= 1, got {depth}, {l_max}")
    for h in heads:
        if h.predicate.kind != INTENSIONAL:
            raise VocabularyError(f"head {h} is not intensional")
        if h not in base:
            raise VocabularyError(f"head {h} not in base")
    if body_atoms is None:
        body_atoms = base.extensional_atoms()
    else:
        for a in body_atoms:
            if a not in base:
                raise VocabularyError(f"body atom {a} not in base")
            if a.predicate.kind != EXTENSIONAL:
                raise VocabularyError(f"body atom {a} must be extensional")
    if not body_atoms:
        raise ConfigError("no extensional atoms available for clause bodies")

    body_atoms = sorted(body_atoms)
    cap = min(2, l_max)
    layer0_bodies = _conjunctions(_literal_pool(body_atoms, negation), cap)
    order = {a: i for i, a in enumerate(body_atoms)}

    def body_sort_key(body):
        return tuple((order[l.atom], l.negated) for l in body)

    layer0_bodies.sort(key=lambda b: (len(b), body_sort_key(b)))

    if depth == 1:
        layer = {
            h: tuple(Clause(h, b) for b in layer0_bodies) for h in sorted(heads)
        }
        lib = ClauseLibrary((layer,))
        lib.validate_stratification()
        return lib

    # Depth >= 2: one auxiliary conjunction head per two-literal layer-0 body.
    # Each auxiliary head has a single defining clause, so its weight vector is
    # trivial and deduction through it is deterministic.
    pair_bodies = [b for b in layer0_bodies if len(b) == 2]
    aux_layer: dict[GroundAtom, tuple[Clause, ...]] = {}
    aux_atoms: list[GroundAtom] = []
    for i, body in enumerate(pair_bodies):
        pred = Predicate(f"conj_{i}", 0, INTENSIONAL)
        aux = GroundAtom(pred, ())
        aux_layer[aux] = (Clause(aux, body),)
        aux_atoms.append(aux)

    # Final layer: conjunctions of <= 2 over {aux heads} union {plain atoms}.
    # Aux heads are intensional, so they appear only as positive literals.
    final_pool = [Literal(a, False) for a in aux_atoms]
    final_pool.extend(_literal_pool(body_atoms, negation))
    final_bodies = [(lit,) for lit in final_pool]
    for i, l1 in enumerate(final_pool):
        for l2 in final_pool[i + 1:]:
            if l1.atom == l2.atom:
                continue
            final_bodies.append((l1, l2))
    final_layer = {
        h: tuple(Clause(h, b) for b in final_bodies) for h in sorted(heads)
    }
    lib = ClauseLibrary((aux_layer, final_layer))
    lib.validate_stratification()
    return lib


def boolean_forward_chain(
    clauses: set[Clause] | list[Clause],
    facts: set[GroundAtom],
    steps: int,
) -> set[GroundAtom]:
    """Iterate immediate consequence `steps` times over boolean facts.

    Total and monotone in facts; negated literals are evaluated against the
    extensional facts only (stratified), so derived atoms never flip a
    negation.  Returns the derived set including the input facts.
    """
    known = set(facts)
    for _ in range(max(0, steps)):
        added = False
        for clause in clauses:
            if clause.head in known:
                continue
            ok = True
            for lit in clause.body:
                holds = lit.atom in known
                if lit.negated:
                    holds = not holds
                if not holds:
                    ok = False
                    break
            if ok:
                known.add(clause.head)
                added = True
        if not added:
            break
    return known
