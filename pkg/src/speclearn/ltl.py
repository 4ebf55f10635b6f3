"""Linear temporal logic over finite traces.

Formulas are immutable trees built from boolean connectives and the
temporal operators next / until / eventually / globally.  Semantics are
finite-trace: ``globally`` quantifies over the remaining steps, ``next``
is false at the final step.  Besides evaluation, the module provides
syntactic progression (rewriting a formula against one truth assignment
so that the rest of the trace carries the remaining obligation),
canonicalization, and the clause-set view used for template formulas.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Sequence

__all__ = [
    "PropositionSet",
    "Trace",
    "Formula",
    "TrueFormula",
    "FalseFormula",
    "Atom",
    "Not",
    "And",
    "Or",
    "Next",
    "Until",
    "Eventually",
    "Globally",
    "TRUE",
    "FALSE",
    "ParseError",
    "parse",
    "format_formula",
    "evaluate",
    "satisfies",
    "progress",
    "canon",
    "holds_on_empty",
    "is_safe",
    "TemplateFormula",
    "similarity",
]

_NAME_RE = re.compile(r"[A-Za-z][A-Za-z0-9_]*\Z")
_RESERVED = {"true", "false"}


@dataclass(frozen=True)
class PropositionSet:
    """Fixed, ordered vocabulary of proposition names.

    Truth assignments are boolean vectors indexed against this ordering,
    so the ordering must not change for the lifetime of a session.
    """

    names: tuple[str, ...]

    def __post_init__(self):
        names = tuple(self.names)
        object.__setattr__(self, "names", names)
        if not names:
            raise ValueError("proposition set must not be empty")
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate proposition names: {names}")
        for name in names:
            if not _NAME_RE.match(name) or name in _RESERVED:
                raise ValueError(f"invalid proposition name: {name!r}")

    @property
    def n_prop(self) -> int:
        return len(self.names)

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(f"unknown proposition: {name!r}") from None

    def assignment(self, true_names: Iterable[str] = ()) -> tuple[bool, ...]:
        """Build a truth assignment with the given propositions true."""
        true_set = set(true_names)
        unknown = true_set - set(self.names)
        if unknown:
            raise KeyError(f"unknown propositions: {sorted(unknown)}")
        return tuple(name in true_set for name in self.names)


@dataclass(frozen=True)
class Trace:
    """Finite, non-empty sequence of truth assignments."""

    props: PropositionSet
    steps: tuple[tuple[bool, ...], ...]

    def __post_init__(self):
        steps = tuple(tuple(bool(v) for v in step) for step in self.steps)
        object.__setattr__(self, "steps", steps)
        if not steps:
            raise ValueError("trace must have at least one step")
        for step in steps:
            if len(step) != self.props.n_prop:
                raise ValueError(
                    f"assignment arity {len(step)} != {self.props.n_prop} propositions"
                )

    def __len__(self) -> int:
        return len(self.steps)


class Formula:
    """Base class for formula nodes; subclasses are frozen dataclasses."""

    __slots__ = ()


@dataclass(frozen=True)
class TrueFormula(Formula):
    def __repr__(self):
        return "TRUE"


@dataclass(frozen=True)
class FalseFormula(Formula):
    def __repr__(self):
        return "FALSE"


@dataclass(frozen=True)
class Atom(Formula):
    index: int


@dataclass(frozen=True)
class Not(Formula):
    operand: Formula


@dataclass(frozen=True)
class And(Formula):
    operands: tuple[Formula, ...]


@dataclass(frozen=True)
class Or(Formula):
    operands: tuple[Formula, ...]


@dataclass(frozen=True)
class Next(Formula):
    operand: Formula


@dataclass(frozen=True)
class Until(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Eventually(Formula):
    operand: Formula


@dataclass(frozen=True)
class Globally(Formula):
    operand: Formula


TRUE = TrueFormula()
FALSE = FalseFormula()

_RANK = {
    TrueFormula: 0,
    FalseFormula: 1,
    Atom: 2,
    Not: 3,
    And: 4,
    Or: 5,
    Next: 6,
    Eventually: 7,
    Globally: 8,
    Until: 9,
}


def structural_key(f: Formula):
    """Total order on formulas; used to sort operands deterministically."""
    kind = type(f)
    rank = _RANK[kind]
    if kind is Atom:
        return (rank, f.index)
    if kind in (TrueFormula, FalseFormula):
        return (rank,)
    if kind in (Not, Next, Eventually, Globally):
        return (rank, structural_key(f.operand))
    if kind is Until:
        return (rank, structural_key(f.left), structural_key(f.right))
    return (rank,) + tuple(structural_key(g) for g in f.operands)


# -- parsing / printing ------------------------------------------------------

class ParseError(ValueError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at position {position})")
        self.position = position


_UNARY = {"not": Not, "X": Next, "F": Eventually, "G": Globally}


def _tokenize(text: str) -> list[tuple[str, int]]:
    tokens = []
    i = 0
    while i < len(text):
        ch = text[i]
        if ch.isspace():
            i += 1
        elif ch in "()":
            tokens.append((ch, i))
            i += 1
        else:
            j = i
            while j < len(text) and not text[j].isspace() and text[j] not in "()":
                j += 1
            tokens.append((text[i:j], i))
            i = j
    return tokens


def parse(text: str, props: PropositionSet) -> Formula:
    """Parse the prefix grammar: true | false | name | (op args...).

    Operators: not, and, or, X, U, F, G.  Proposition names must belong
    to ``props``.  Raises :class:`ParseError` with the character position
    of the offending token.
    """
    tokens = _tokenize(text)
    pos = 0

    def peek():
        return tokens[pos] if pos < len(tokens) else (None, len(text))

    def take():
        nonlocal pos
        tok = peek()
        pos += 1
        return tok

    def formula() -> Formula:
        tok, at = take()
        if tok is None:
            raise ParseError("unexpected end of input", at)
        if tok == ")":
            raise ParseError("unexpected ')'", at)
        if tok != "(":
            if tok == "true":
                return TRUE
            if tok == "false":
                return FALSE
            if not _NAME_RE.match(tok):
                raise ParseError(f"bad token {tok!r}", at)
            try:
                return Atom(props.index(tok))
            except KeyError:
                raise ParseError(f"unknown proposition {tok!r}", at) from None
        op, op_at = take()
        if op is None:
            raise ParseError("unexpected end of input after '('", op_at)
        if op in _UNARY:
            node = _UNARY[op](formula())
        elif op == "U":
            node = Until(formula(), formula())
        elif op in ("and", "or"):
            args = []
            while peek()[0] not in (")", None):
                args.append(formula())
            if not args:
                raise ParseError(f"'{op}' needs at least one argument", op_at)
            node = (And if op == "and" else Or)(tuple(args))
        else:
            raise ParseError(f"unknown operator {op!r}", op_at)
        close, close_at = take()
        if close != ")":
            raise ParseError("expected ')'", close_at)
        return node

    result = formula()
    tok, at = peek()
    if tok is not None:
        raise ParseError(f"trailing input {tok!r}", at)
    return result


def format_formula(f: Formula, props: PropositionSet) -> str:
    """Render a formula back into the prefix grammar."""
    kind = type(f)
    if kind is TrueFormula:
        return "true"
    if kind is FalseFormula:
        return "false"
    if kind is Atom:
        return props.names[f.index]
    if kind is Not:
        return f"(not {format_formula(f.operand, props)})"
    if kind is Next:
        return f"(X {format_formula(f.operand, props)})"
    if kind is Eventually:
        return f"(F {format_formula(f.operand, props)})"
    if kind is Globally:
        return f"(G {format_formula(f.operand, props)})"
    if kind is Until:
        return f"(U {format_formula(f.left, props)} {format_formula(f.right, props)})"
    name = "and" if kind is And else "or"
    parts = " ".join(format_formula(g, props) for g in f.operands)
    return f"({name} {parts})"


# -- semantics ---------------------------------------------------------------

def evaluate(f: Formula, trace: Trace, t: int = 0) -> bool:
    """Truth of ``f`` at step ``t`` of a finite trace."""
    n = len(trace.steps)
    if not 0 <= t < n:
        raise IndexError(f"time index {t} out of range for trace of length {n}")
    kind = type(f)
    if kind is TrueFormula:
        return True
    if kind is FalseFormula:
        return False
    if kind is Atom:
        return trace.steps[t][f.index]
    if kind is Not:
        return not evaluate(f.operand, trace, t)
    if kind is And:
        return all(evaluate(g, trace, t) for g in f.operands)
    if kind is Or:
        return any(evaluate(g, trace, t) for g in f.operands)
    if kind is Next:
        return t + 1 < n and evaluate(f.operand, trace, t + 1)
    if kind is Eventually:
        return any(evaluate(f.operand, trace, u) for u in range(t, n))
    if kind is Globally:
        return all(evaluate(f.operand, trace, u) for u in range(t, n))
    # until: right must hold somewhere, left at every step strictly before it
    for u in range(t, n):
        if evaluate(f.right, trace, u):
            return True
        if not evaluate(f.left, trace, u):
            return False
    return False


def satisfies(trace: Trace, f: Formula) -> bool:
    return evaluate(f, trace, 0)


def holds_on_empty(f: Formula) -> bool:
    """Truth of a progression residual once the trace is exhausted.

    Universal operators hold vacuously, existential ones (and bare
    atoms, which demand a step) fail.
    """
    kind = type(f)
    if kind is TrueFormula:
        return True
    if kind is FalseFormula:
        return False
    if kind is Atom:
        return False
    if kind is Not:
        return not holds_on_empty(f.operand)
    if kind is And:
        return all(holds_on_empty(g) for g in f.operands)
    if kind is Or:
        return any(holds_on_empty(g) for g in f.operands)
    if kind in (Next, Eventually, Until):
        return False
    return holds_on_empty(f.operand) if False else True  # Globally


# -- canonical form ----------------------------------------------------------

def canon(f: Formula) -> Formula:
    """Canonicalize: flatten and/or, fold constants, sort, deduplicate.

    Idempotent, and preserves finite-trace truth on every trace.
    """
    kind = type(f)
    if kind in (TrueFormula, FalseFormula, Atom):
        return f
    if kind is Not:
        c = canon(f.operand)
        if c is TRUE or type(c) is TrueFormula:
            return FALSE
        if type(c) is FalseFormula:
            return TRUE
        if type(c) is Not:
            return c.operand
        return Not(c)
    if kind in (And, Or):
        absorber, identity = (FALSE, TRUE) if kind is And else (TRUE, FALSE)
        flat: list[Formula] = []
        for g in f.operands:
            cg = canon(g)
            if type(cg) is kind:
                flat.extend(cg.operands)
            else:
                flat.append(cg)
        kept = []
        seen = set()
        for g in flat:
            if type(g) is type(absorber):
                return absorber
            if type(g) is type(identity):
                continue
            if g not in seen:
                seen.add(g)
                kept.append(g)
        if not kept:
            return identity
        if len(kept) == 1:
            return kept[0]
        kept.sort(key=structural_key)
        return kind(tuple(kept))
    if kind is Next:
        return Next(canon(f.operand))
    if kind in (Eventually, Globally):
        c = canon(f.operand)
        if type(c) in (TrueFormula, FalseFormula):
            return c
        return kind(c)
    # Until
    left, right = canon(f.left), canon(f.right)
    if type(right) in (TrueFormula, FalseFormula):
        return right
    if type(left) is FalseFormula:
        return right
    return Until(left, right)


# -- progression -------------------------------------------------------------

def _prog(f: Formula, a: Sequence[bool]) -> Formula:
    kind = type(f)
    if kind in (TrueFormula, FalseFormula):
        return f
    if kind is Atom:
        return TRUE if a[f.index] else FALSE
    if kind is Not:
        return Not(_prog(f.operand, a))
    if kind is And:
        return And(tuple(_prog(g, a) for g in f.operands))
    if kind is Or:
        return Or(tuple(_prog(g, a) for g in f.operands))
    if kind is Next:
        return f.operand
    if kind is Eventually:
        return Or((_prog(f.operand, a), f))
    if kind is Globally:
        return And((_prog(f.operand, a), f))
    # until: discharged now, or kept alive by the left operand
    return Or((_prog(f.right, a), And((_prog(f.left, a), f))))


def progress(f: Formula, a: Sequence[bool]) -> Formula:
    """One progression step: the canonical obligation left for the tail.

    For any non-empty tail trace ``[rest]``, the trace ``a . [rest]``
    satisfies ``f`` iff ``[rest]`` satisfies ``progress(f, a)``.
    """
    return canon(_prog(f, a))


def progress_trace(f: Formula, trace: Trace) -> Formula:
    """Progress through every step of the trace in order."""
    g = canon(f)
    for step in trace.steps:
        g = progress(g, step)
    return g


# -- safety classification ---------------------------------------------------

def is_safe(f: Formula) -> bool:
    """Syntactic check: no eventually/until/next operators remain in NNF.

    Safe residuals (globally-clauses over boolean combinations) count as
    satisfied when an episode ends.
    """
    return _safe(f, True)


def _safe(f: Formula, positive: bool) -> bool:
    kind = type(f)
    if kind in (TrueFormula, FalseFormula, Atom):
        return True
    if kind is Not:
        return _safe(f.operand, not positive)
    if kind in (And, Or):
        return all(_safe(g, positive) for g in f.operands)
    if kind is Next:
        return False
    if kind is Eventually:
        return False if positive else _safe(f.operand, positive)
    if kind is Globally:
        return _safe(f.operand, positive) if positive else False
    # until is a liveness operator positively; negated it becomes a release
    if positive:
        return False
    return _safe(f.left, positive) and _safe(f.right, positive)


# -- template formulas -------------------------------------------------------

@dataclass(frozen=True)
class TemplateFormula:
    """Conjunction of clauses split into global / eventual / order groups.

    The induced formula is the conjunction of all clauses; an empty
    template induces ``true``.  Clauses are stored canonicalized so that
    clause-set comparisons are purely structural.
    """

    global_clauses: frozenset[Formula] = field(default_factory=frozenset)
    eventual_clauses: frozenset[Formula] = field(default_factory=frozenset)
    order_clauses: frozenset[Formula] = field(default_factory=frozenset)

    def __post_init__(self):
        for name in ("global_clauses", "eventual_clauses", "order_clauses"):
            object.__setattr__(
                self, name, frozenset(canon(c) for c in getattr(self, name))
            )

    def clauses(self) -> frozenset[Formula]:
        return self.global_clauses | self.eventual_clauses | self.order_clauses

    @property
    def n_conj(self) -> int:
        return len(self.clauses())

    def to_formula(self) -> Formula:
        return canon(And(tuple(self.clauses())))

    def text(self, props: PropositionSet) -> str:
        return format_formula(self.to_formula(), props)


def template_from_formula(f: Formula) -> TemplateFormula:
    """Split a canonical conjunction back into template clause groups."""
    f = canon(f)
    if type(f) is TrueFormula:
        parts: tuple[Formula, ...] = ()
    elif type(f) is And:
        parts = f.operands
    else:
        parts = (f,)
    glob, event, order = set(), set(), set()
    for clause in parts:
        kind = type(clause)
        if kind is Globally:
            glob.add(clause)
        elif kind is Eventually:
            event.add(clause)
        elif kind is Until:
            order.add(clause)
        else:
            raise ValueError(
                f"clause {clause!r} does not fit the global/eventual/order template"
            )
    return TemplateFormula(frozenset(glob), frozenset(event), frozenset(order))


def similarity(f1: TemplateFormula, f2: TemplateFormula) -> float:
    """Intersection-over-union of the two clause sets; 1.0 when both empty."""
    c1, c2 = f1.clauses(), f2.clauses()
    if not c1 and not c2:
        return 1.0
    return len(c1 & c2) / len(c1 | c2)
