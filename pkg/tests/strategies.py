"""Hypothesis strategies shared across the test suite."""

import hypothesis.strategies as st

from speclearn.ltl import (
    And,
    Atom,
    Eventually,
    FALSE,
    Globally,
    Next,
    Not,
    Or,
    PropositionSet,
    TRUE,
    TemplateFormula,
    Trace,
    Until,
)

PROPS3 = PropositionSet(("a", "b", "c"))


def formulas(n_prop: int = 3, max_leaves: int = 8, with_next: bool = True):
    leaves = st.one_of(
        st.just(TRUE),
        st.just(FALSE),
        st.builds(Atom, st.integers(min_value=0, max_value=n_prop - 1)),
    )
    unary = [Not, Eventually, Globally] + ([Next] if with_next else [])

    def extend(children):
        ops = [
            st.builds(u, children) for u in unary
        ] + [
            st.builds(Until, children, children),
            st.builds(lambda xs: And(tuple(xs)), st.lists(children, min_size=2, max_size=3)),
            st.builds(lambda xs: Or(tuple(xs)), st.lists(children, min_size=2, max_size=3)),
        ]
        return st.one_of(*ops)

    return st.recursive(leaves, extend, max_leaves=max_leaves)


def assignments(n_prop: int = 3):
    return st.tuples(*[st.booleans()] * n_prop)


def traces(props: PropositionSet = PROPS3, min_len: int = 1, max_len: int = 4):
    return st.builds(
        lambda steps: Trace(props, tuple(steps)),
        st.lists(assignments(props.n_prop), min_size=min_len, max_size=max_len),
    )


def template_formulas(props: PropositionSet = PROPS3):
    n = props.n_prop
    glob = st.sets(
        st.builds(lambda i: Globally(Not(Atom(i))), st.integers(0, n - 1)), max_size=n
    )
    event = st.sets(
        st.builds(lambda i: Eventually(Atom(i)), st.integers(0, n - 1)), max_size=n
    )
    pairs = st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)).filter(
        lambda ij: ij[0] != ij[1]
    )
    order = st.sets(
        st.builds(lambda ij: Until(Not(Atom(ij[0])), Atom(ij[1])), pairs), max_size=4
    )
    return st.builds(
        lambda g, e, o: TemplateFormula(frozenset(g), frozenset(e), frozenset(o)),
        glob,
        event,
        order,
    )
