import numpy as np
import pytest

from galois.errors import ConfigError, VocabularyError
from galois.logic import (
    EXTENSIONAL,
    INTENSIONAL,
    Clause,
    GroundAtom,
    Literal,
    Predicate,
    boolean_forward_chain,
    build_base,
    enumerate_clauses,
)

from helpers import derivable_oracle, nullary, random_boolean_program


def test_build_base_nullary_pair():
    base = build_base([Predicate("a", 0), Predicate("b", 0)], [])
    assert len(base) == 2
    assert sorted(base.index.values()) == [0, 1]


def test_build_base_unary_three_constants():
    base = build_base([Predicate("p", 1)], ["c1", "c2", "c3"])
    assert len(base) == 3


def test_build_base_doorkey_where_vocabulary():
    # Size checked against a test-local exhaustive instantiation count.
    preds = [
        Predicate("has_key", 1),
        Predicate("is_agent", 1),
        Predicate("is_env", 1),
        Predicate("is_open", 1),
        Predicate("is_door", 1),
    ]
    constants = ["agent", "env", "door"]
    expected = sum(len(constants) ** p.arity for p in preds)
    base = build_base(preds, constants)
    assert len(base) == expected == 15


def test_build_base_deterministic_ordering():
    preds = [Predicate("q", 1), Predicate("p", 1), Predicate("z", 0)]
    a = build_base(preds, ["u", "t"])
    b = build_base(list(preds), ["u", "t"])
    assert a.atoms == b.atoms
    # sorted by predicate name then terms
    assert [str(x) for x in a.atoms] == ["p(t)", "p(u)", "q(t)", "q(u)", "z"]


def test_build_base_duplicate_predicate():
    with pytest.raises(VocabularyError):
        build_base([Predicate("p", 0), Predicate("p", 1)], ["c"])


def test_clause_validation():
    p = nullary("p")
    h = nullary("h", INTENSIONAL)
    with pytest.raises(VocabularyError):
        Clause(p, (Literal(h),))  # extensional head
    with pytest.raises(VocabularyError):
        Clause(h, ())  # empty body
    with pytest.raises(VocabularyError):
        Literal(h, negated=True)  # negated intensional
    with pytest.raises(VocabularyError):
        Clause(h, (Literal(p), Literal(p)))  # duplicate literal


def test_enumerate_clauses_full_list_two_atoms():
    p, q = nullary("p"), nullary("q")
    h = nullary("h", INTENSIONAL)
    base = build_base([a.predicate for a in (p, q, h)], [])
    lib = enumerate_clauses(base, [h], depth=1, l_max=2)
    got = [str(c) for c in lib.candidates(h)]
    assert got == [
        "h :- p.",
        "h :- !p.",
        "h :- q.",
        "h :- !q.",
        "h :- p, q.",
        "h :- p, !q.",
        "h :- !p, q.",
        "h :- !p, !q.",
    ]
    # determinism
    lib2 = enumerate_clauses(base, [h], depth=1, l_max=2)
    assert [str(c) for c in lib2.candidates(h)] == got


def test_enumerate_clauses_no_extensional_atoms():
    h = nullary("h", INTENSIONAL)
    base = build_base([h.predicate], [])
    with pytest.raises(ConfigError):
        enumerate_clauses(base, [h], depth=1, l_max=2)


def test_enumerate_clauses_bad_config():
    p = nullary("p")
    h = nullary("h", INTENSIONAL)
    base = build_base([p.predicate, h.predicate], [])
    with pytest.raises(ConfigError):
        enumerate_clauses(base, [h], depth=0, l_max=2)
    with pytest.raises(ConfigError):
        enumerate_clauses(base, [h], depth=1, l_max=0)


def test_enumerate_depth2_reaches_four_literal_conjunction():
    # The four-literal body (!a, b, c, d) must be derivable as the
    # conjunction of two layer-0 pairs through auxiliary heads.
    a, b, c, d = (nullary(x) for x in "abcd")
    h = nullary("h", INTENSIONAL)
    base = build_base([x.predicate for x in (a, b, c, d, h)], [])
    lib = enumerate_clauses(base, [h], depth=2, l_max=2)
    lib.validate_stratification()
    clauses = lib.all_clauses()
    facts = {b, c, d}  # a false, so !a holds
    derived = boolean_forward_chain(clauses, facts, steps=2)
    assert h in derived

    # and with a true the same target is not derivable through the pair
    # (!a, b) + (c, d) route alone; h still derives via other candidates,
    # so check the specific aux pair exists instead.
    aux_bodies = {
        tuple(sorted(str(l) for l in cl.body))
        for layer in lib.layers[:1]
        for cands in layer.values()
        for cl in cands
    }
    assert ("!a", "b") in aux_bodies
    assert ("c", "d") in aux_bodies


def test_boolean_chain_single_rule():
    p = nullary("p")
    h = nullary("h", INTENSIONAL)
    clause = Clause(h, (Literal(p),))
    assert boolean_forward_chain([clause], {p}, 1) == {p, h}
    assert boolean_forward_chain([clause], set(), 5) == set()


def test_boolean_chain_matches_derivability_oracle():
    rng = np.random.default_rng(7)
    for _ in range(40):
        clauses, facts, ext, intat = random_boolean_program(rng)
        derived = boolean_forward_chain(clauses, facts, steps=len(intat) + 1)
        for atom in ext + intat:
            assert (atom in derived) == derivable_oracle(clauses, facts, atom), (
                f"mismatch on {atom}"
            )


def test_boolean_chain_monotone_in_facts():
    rng = np.random.default_rng(11)
    for _ in range(30):
        clauses, facts, ext, intat = random_boolean_program(rng)
        smaller = {a for a in facts if rng.random() < 0.6}
        r_small = boolean_forward_chain(clauses, smaller, steps=len(intat) + 1)
        r_big = boolean_forward_chain(clauses, facts, steps=len(intat) + 1)
        # monotone only for negation-free programs; filter those
        if any(l.negated for c in clauses for l in c.body):
            continue
        assert r_small <= r_big


def test_boolean_chain_fixpoint_within_intensional_count():
    rng = np.random.default_rng(13)
    for _ in range(30):
        clauses, facts, ext, intat = random_boolean_program(rng)
        k = len(intat)
        assert boolean_forward_chain(clauses, facts, k) == boolean_forward_chain(
            clauses, facts, k + 7
        )


def test_positive_chain_monotonicity_always():
    # A negation-free random family, where monotonicity must hold exactly.
    rng = np.random.default_rng(17)
    for _ in range(40):
        clauses, facts, ext, intat = random_boolean_program(rng)
        clauses = [
            Clause(c.head, tuple(Literal(l.atom, False) for l in c.body))
            for c in clauses
        ]
        extra = {a for a in ext if rng.random() < 0.5}
        r1 = boolean_forward_chain(clauses, facts, len(intat) + 1)
        r2 = boolean_forward_chain(clauses, facts | extra, len(intat) + 1)
        assert r1 <= r2


def test_library_stratification_rejects_forward_reference():
    p = nullary("p")
    h1 = nullary("h1", INTENSIONAL)
    h2 = nullary("h2", INTENSIONAL)
    from galois.logic import ClauseLibrary

    bad = ClauseLibrary(
        (
            {h1: (Clause(h1, (Literal(h2),)),)},  # refs h2 before grounded
            {h2: (Clause(h2, (Literal(p),)),)},
        )
    )
    with pytest.raises(VocabularyError):
        bad.validate_stratification()
