import pytest

from speclearn.ltl import (
    Atom,
    Eventually,
    Globally,
    Not,
    PropositionSet,
    TemplateFormula,
    Trace,
    Until,
)


@pytest.fixture(scope="session")
def dinner_props():
    return PropositionSet(("Fork", "Bowl", "Plate"))


@pytest.fixture(scope="session")
def phi_strict(dinner_props):
    """Never fork, eventually bowl, and no bowl until the plate is down."""
    fork = Atom(dinner_props.index("Fork"))
    bowl = Atom(dinner_props.index("Bowl"))
    plate = Atom(dinner_props.index("Plate"))
    return TemplateFormula(
        global_clauses=frozenset({Globally(Not(fork))}),
        eventual_clauses=frozenset({Eventually(bowl)}),
        order_clauses=frozenset({Until(Not(bowl), plate)}),
    )


@pytest.fixture(scope="session")
def phi_loose(dinner_props):
    """Never fork, eventually bowl; no ordering constraint."""
    fork = Atom(dinner_props.index("Fork"))
    bowl = Atom(dinner_props.index("Bowl"))
    return TemplateFormula(
        global_clauses=frozenset({Globally(Not(fork))}),
        eventual_clauses=frozenset({Eventually(bowl)}),
    )


def trace_of(props, *step_names):
    """Build a trace from per-step lists of true proposition names."""
    return Trace(props, tuple(props.assignment(names) for names in step_names))


@pytest.fixture(scope="session")
def make_trace():
    return trace_of
