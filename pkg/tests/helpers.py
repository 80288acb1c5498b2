"""Shared generators for randomized tests: small vocabularies, libraries,
deduction instances, and an independent derivability oracle."""
from __future__ import annotations

import numpy as np

from galois.engine import ParamStore
from galois.logic import (
    EXTENSIONAL,
    INTENSIONAL,
    Clause,
    ClauseLibrary,
    GroundAtom,
    HerbrandBase,
    Literal,
    Predicate,
    ValuationVector,
    build_base,
    enumerate_clauses,
)


def nullary(name: str, kind: str = EXTENSIONAL) -> GroundAtom:
    return GroundAtom(Predicate(name, 0, kind), ())


def random_instance(rng: np.random.Generator, max_ext=8, max_heads=3, max_cands=10):
    """Random base + library + params for deduction tests.

    Returns (base, library, params, hole, e0_values).
    """
    n_ext = int(rng.integers(2, max_ext + 1))
    n_heads = int(rng.integers(1, max_heads + 1))
    ext = [nullary(f"p{i}") for i in range(n_ext)]
    heads = [nullary(f"h{i}", INTENSIONAL) for i in range(n_heads)]
    base = HerbrandBase(sorted(ext + heads))

    layer: dict[GroundAtom, tuple[Clause, ...]] = {}
    distinct_bodies = 2 * n_ext + 2 * n_ext * (n_ext - 1)
    for h in heads:
        k = min(int(rng.integers(1, max_cands + 1)), distinct_bodies)
        cands = []
        seen = set()
        while len(cands) < k:
            size = int(rng.integers(1, 3))
            picks = rng.choice(n_ext, size=size, replace=False)
            body = tuple(
                Literal(ext[int(i)], bool(rng.integers(0, 2))) for i in sorted(picks)
            )
            clause = Clause(h, body)
            if clause.key() in seen:
                continue
            seen.add(clause.key())
            cands.append(clause)
        layer[h] = tuple(cands)
    library = ClauseLibrary((layer,))

    params = ParamStore()
    for h in sorted(layer.keys()):
        params.theta[("test", str(h))] = rng.normal(0.0, 1.0, len(layer[h]))
    params.reset_optimizer()

    e0 = np.zeros(len(base))
    for a in ext:
        e0[base.position(a)] = rng.random()
    return base, library, params, "test", e0


def random_boolean_program(rng: np.random.Generator, n_atoms=10, n_clauses=8):
    """Random propositional program over nullary atoms, for chaining tests."""
    n_ext = max(2, n_atoms // 2)
    n_int = n_atoms - n_ext
    ext = [nullary(f"e{i}") for i in range(n_ext)]
    intat = [nullary(f"i{i}", INTENSIONAL) for i in range(n_int)]
    clauses = []
    for _ in range(n_clauses):
        head = intat[int(rng.integers(0, n_int))]
        size = int(rng.integers(1, 4))
        pool = ext + intat
        body = []
        seen = set()
        for _ in range(size):
            a = pool[int(rng.integers(0, len(pool)))]
            if a == head or a in seen:
                continue
            seen.add(a)
            neg = bool(rng.integers(0, 2)) if a.predicate.kind == EXTENSIONAL else False
            body.append(Literal(a, neg))
        if not body:
            body = [Literal(ext[0], False)]
        clauses.append(Clause(head, tuple(body)))
    facts = {a for a in ext if rng.random() < 0.5}
    return clauses, facts, ext, intat


def derivable_oracle(clauses, facts, atom, _visiting=None) -> bool:
    """Independent proof-search oracle for the least fixpoint.

    Recursive with cycle cutting; negation is evaluated against the
    extensional facts only, matching stratified semantics.
    """
    if atom.predicate.kind == EXTENSIONAL:
        return atom in facts
    visiting = _visiting or frozenset()
    if atom in visiting:
        return False
    visiting = visiting | {atom}
    for clause in clauses:
        if clause.head != atom:
            continue
        ok = True
        for lit in clause.body:
            if lit.negated:
                holds = lit.atom not in facts
            else:
                holds = derivable_oracle(clauses, facts, lit.atom, visiting)
            if not holds:
                ok = False
                break
        if ok:
            return True
    return False
