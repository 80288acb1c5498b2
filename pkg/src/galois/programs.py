"""Clause-program text format: parsing, canonical printing, and edits.

One clause per line, `head :- lit1, !lit2.`; `!` (or the typographic
negation sign) marks negation and `#` starts a comment.  Header comments of
the form `# key: value` carry provenance; `# task:` names the vocabulary the
program is validated against.

Literal terms may be written as constants (`has_key(agent)`) or as display
variables (`has_key(X)`).  A variable is resolved through a type literal in
the same clause (`is_agent(X)` pins X to agent), mirroring how the programs
are usually written out by hand; printing re-sugars constants the same way,
so parse(print(p)) is the identity and print(parse(t)) is the canonical form.
"""
from __future__ import annotations

import re
import warnings
from dataclasses import dataclass, field

from .errors import ParseError, SelectorError, VocabularyError
from .grounding import HOLES, HoleVocabulary, build_vocabularies
from .logic import Clause, GroundAtom, Literal

_IDENT = re.compile(r"[a-z][a-z0-9_]*")
_VAR = re.compile(r"[A-Z][A-Za-z0-9_]*")
_VAR_LETTERS = "XYZUVW"


@dataclass
class ExtractedProgram:
    task: str
    clauses: dict[str, tuple[Clause, ...]]  # hole -> canonical clause order
    provenance: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        # conjunctions are order-insensitive: store bodies and clause lists
        # in one canonical order
        self.clauses = {
            hole: tuple(
                sorted(
                    (canonical_clause(c) for c in self.clauses.get(hole, ())),
                    key=_clause_sort_key,
                )
            )
            for hole in HOLES
        }

    def __eq__(self, other):
        return (
            isinstance(other, ExtractedProgram)
            and self.task == other.task
            and self.clauses == other.clauses
            and self.provenance == other.provenance
        )

    def all_clauses(self) -> list[Clause]:
        return [c for hole in HOLES for c in self.clauses[hole]]

    def hole_clauses(self, hole: str) -> tuple[Clause, ...]:
        return self.clauses[hole]


def canonical_clause(clause: Clause) -> Clause:
    body = tuple(sorted(clause.body, key=lambda l: (str(l.atom), l.negated)))
    return clause if body == clause.body else Clause(clause.head, body)


def _clause_sort_key(clause: Clause):
    return (clause.head.name, tuple(sorted((str(l.atom), l.negated) for l in clause.body)))


def _head_to_hole(vocabs: dict[str, HoleVocabulary]) -> dict[str, str]:
    return {h.name: hole for hole, v in vocabs.items() for h in v.heads}


class _LineParser:
    def __init__(self, text: str, line_no: int):
        self.text = text
        self.line = line_no
        self.pos = 0

    def error(self, message: str) -> ParseError:
        return ParseError(message, self.line, self.pos + 1)

    def skip_ws(self):
        while self.pos < len(self.text) and self.text[self.pos] in " \t":
            self.pos += 1

    def eof(self) -> bool:
        self.skip_ws()
        return self.pos >= len(self.text)

    def expect(self, token: str):
        self.skip_ws()
        if not self.text.startswith(token, self.pos):
            raise self.error(f"expected {token!r}")
        self.pos += len(token)

    def peek(self, token: str) -> bool:
        self.skip_ws()
        return self.text.startswith(token, self.pos)

    def ident(self) -> str:
        self.skip_ws()
        m = _IDENT.match(self.text, self.pos)
        if not m:
            raise self.error("expected identifier")
        self.pos = m.end()
        return m.group(0)

    def term(self) -> tuple[str, bool]:
        """Returns (name, is_variable)."""
        self.skip_ws()
        m = _VAR.match(self.text, self.pos)
        if m:
            self.pos = m.end()
            return m.group(0), True
        m = _IDENT.match(self.text, self.pos)
        if m:
            self.pos = m.end()
            return m.group(0), False
        raise self.error("expected constant or variable")


def _parse_literal(lp: _LineParser):
    negated = False
    if lp.peek("!"):
        lp.expect("!")
        negated = True
    elif lp.peek("¬"):
        lp.expect("¬")
        negated = True
    name = lp.ident()
    term = None
    if lp.peek("("):
        lp.expect("(")
        if not lp.peek(")"):
            term = lp.term()
        lp.expect(")")
    return name, term, negated


def _resolve_clause(
    head_name: str,
    body_raw: list,
    vocab: HoleVocabulary,
    line_no: int,
) -> Clause:
    """Ground display variables via the vocabulary's determining predicates."""
    bindings: dict[str, str] = {}
    for pred, term, _neg in body_raw:
        if term is not None and term[1]:
            var = term[0]
            det = vocab.determining.get(pred)
            if det is not None:
                prev = bindings.get(var)
                if prev is not None and prev != det:
                    raise ParseError(
                        f"variable {var} pinned to both {prev} and {det}", line_no, 1
                    )
                bindings[var] = det

    head_atom = _find_atom(vocab, head_name, None, line_no)
    body = []
    for pred, term, neg in body_raw:
        const = None
        if term is not None:
            name, is_var = term
            if is_var:
                const = bindings.get(name)
                if const is None:
                    raise VocabularyError(
                        f"line {line_no}: variable {name} in {pred} has no "
                        "type literal pinning it to a constant"
                    )
            else:
                const = name
        atom = _find_atom(vocab, pred, const, line_no)
        body.append(Literal(atom, neg))
    try:
        return Clause(head_atom, tuple(body))
    except VocabularyError as exc:
        raise VocabularyError(f"line {line_no}: {exc}") from exc


def _find_atom(vocab: HoleVocabulary, pred: str, const: str | None, line_no: int) -> GroundAtom:
    for atom in vocab.base.atoms:
        if atom.name != pred:
            continue
        if const is None and atom.terms == ():
            return atom
        if const is not None and atom.terms == (const,):
            return atom
    where = f"({const})" if const is not None else ""
    raise VocabularyError(
        f"line {line_no}: unknown atom {pred}{where} in hole '{vocab.hole}' "
        f"vocabulary of task '{vocab.task}'"
    )


def parse(text: str, task: str | None = None) -> ExtractedProgram:
    """Parse a clause program, validating every atom against the task's
    vocabularies.  The task comes from the `# task:` header unless given."""
    provenance: dict[str, str] = {}
    clause_lines: list[tuple[int, str]] = []
    for i, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            m = re.match(r"#\s*([a-z_]+)\s*:\s*(.*)$", line)
            if m:
                provenance[m.group(1)] = m.group(2).strip()
            continue
        clause_lines.append((i, raw))

    task = task or provenance.pop("task", None)
    provenance.pop("task", None)
    if task is None:
        raise VocabularyError("no task given and no '# task:' header present")
    vocabs = build_vocabularies(task)
    hole_of = _head_to_hole(vocabs)

    clauses: dict[str, list[Clause]] = {hole: [] for hole in HOLES}
    for line_no, raw in clause_lines:
        lp = _LineParser(raw, line_no)
        head = lp.ident()
        if lp.peek("("):
            lp.expect("(")
            lp.expect(")")
        lp.expect(":-")
        body_raw = []
        if lp.peek("."):
            raise lp.error("empty clause body")
        while True:
            body_raw.append(_parse_literal(lp))
            if lp.peek(","):
                lp.expect(",")
                continue
            break
        lp.expect(".")
        if not lp.eof():
            raise lp.error("trailing characters after clause")
        if head not in hole_of:
            raise VocabularyError(
                f"line {line_no}: unknown head predicate {head!r} for task {task!r}"
            )
        hole = hole_of[head]
        clauses[hole].append(_resolve_clause(head, body_raw, vocabs[hole], line_no))

    return ExtractedProgram(task=task, clauses={h: tuple(c) for h, c in clauses.items()},
                            provenance=provenance)


def _render_literal(lit: Literal, var_of: dict[str, str]) -> str:
    neg = "!" if lit.negated else ""
    if not lit.atom.terms:
        return f"{neg}{lit.atom.name}"
    const = lit.atom.terms[0]
    shown = var_of.get(const, const)
    return f"{neg}{lit.atom.name}({shown})"


def render_clause(clause: Clause, vocab: HoleVocabulary | None = None) -> str:
    """Canonical text: sorted body, constants sugared to display variables
    wherever the clause itself carries a pinning type literal."""
    body = sorted(clause.body, key=lambda l: (str(l.atom), l.negated))
    var_of: dict[str, str] = {}
    if vocab is not None:
        pinned = []
        for lit in body:
            if lit.atom.terms:
                det = vocab.determining.get(lit.atom.name)
                if det is not None and det == lit.atom.terms[0]:
                    if det not in pinned:
                        pinned.append(det)
        for i, const in enumerate(pinned):
            if i < len(_VAR_LETTERS):
                var_of[const] = _VAR_LETTERS[i]
    lits = ", ".join(_render_literal(l, var_of) for l in body)
    return f"{clause.head.name} :- {lits}."


def print_program(program: ExtractedProgram) -> str:
    """Canonical program text with a provenance header block."""
    vocabs = build_vocabularies(program.task)
    lines = ["# galois program", f"# task: {program.task}"]
    for key in sorted(program.provenance):
        lines.append(f"# {key}: {program.provenance[key]}")
    for hole in HOLES:
        hole_clauses = program.clauses[hole]
        if hole_clauses:
            lines.append("")
            lines.append(f"# {hole}")
            for clause in hole_clauses:
                lines.append(render_clause(clause, vocabs[hole]))
    return "\n".join(lines) + "\n"


def edit_program(program: ExtractedProgram, remove: str) -> ExtractedProgram:
    """Copy of the program minus every clause the selector matches.

    A selector matches a clause when it equals the head name or occurs in the
    clause's constant-form text.  Removing a head's last clause is legal (the
    head just becomes underivable) but warned about.
    """
    matched = 0
    new_clauses: dict[str, tuple[Clause, ...]] = {}
    emptied: list[str] = []
    for hole in HOLES:
        kept = []
        for clause in program.clauses[hole]:
            text = render_clause(clause, None)
            if remove == clause.head.name or remove in text:
                matched += 1
                continue
            kept.append(clause)
        removed_heads = {c.head.name for c in program.clauses[hole]} - {
            c.head.name for c in kept
        }
        emptied.extend(sorted(removed_heads))
        new_clauses[hole] = tuple(kept)
    if matched == 0:
        raise SelectorError(f"selector {remove!r} matched no clause")
    for head in emptied:
        warnings.warn(f"head {head} has no clauses left and is underivable",
                      stacklevel=2)
    return ExtractedProgram(
        task=program.task, clauses=new_clauses, provenance=dict(program.provenance)
    )
