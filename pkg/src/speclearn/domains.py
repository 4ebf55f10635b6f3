"""Task environments: dinner-table object placement and a synthetic
waypoint/threat navigation domain.

Both are deterministic, monotone MDPs over boolean proposition vectors:
an action places/visits one target, placed targets stay placed, and the
labeling function is the identity on the state vector.  The synthetic
domain pairs with a ground-truth sampler that draws satisfiable template
formulas (never-trigger threats, must-visit waypoints, acyclic visit
orders) for benchmark runs.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from .inference import ClauseUniverse, full_universe, waypoint_threat_universe
from .ltl import (
    Atom,
    Eventually,
    Globally,
    Not,
    PropositionSet,
    TemplateFormula,
    Until,
    canon,
    parse,
)
from .planner import EnvironmentMDP

__all__ = [
    "DINNER3_OBJECTS",
    "DINNER5_OBJECTS",
    "GroundTruthSpec",
    "dinner_domain",
    "synthetic_domain",
    "build_env",
    "universe_for",
    "build_named_domain",
    "sample_ground_truth",
    "dinner5_task1",
    "dinner5_task2",
]

DINNER3_OBJECTS = ("Fork", "Bowl", "Plate")
DINNER5_OBJECTS = ("DinnerPlate", "SmallPlate", "Bowl", "Fork", "Knife")


@dataclass(frozen=True)
class GroundTruthSpec:
    """A satisfiable template formula serving as the teacher's intent."""

    formula: TemplateFormula

    def text(self, props: PropositionSet) -> str:
        return self.formula.text(props)


def _monotone_env(name: str, props: PropositionSet, action_prefix: str) -> EnvironmentMDP:
    n = props.n_prop
    full = (1 << n) - 1

    def transition(x, a):
        return ((1.0, x | (1 << a)),)

    def label(x):
        return tuple(bool(x >> i & 1) for i in range(n))

    return EnvironmentMDP(
        name=name,
        props=props,
        states=tuple(range(1 << n)),
        initial=0,
        actions=tuple(f"{action_prefix}-{p}" for p in props.names),
        horizon=n + 2,
        transition=transition,
        label=label,
        complete=lambda x: x == full,
    )


def dinner_domain(objects=DINNER3_OBJECTS) -> EnvironmentMDP:
    """Placement vector over the given objects; placing is irreversible."""
    return _monotone_env("dinner", PropositionSet(tuple(objects)), "place")


def synthetic_domain(n_waypoints: int = 5, n_threats: int = 5) -> EnvironmentMDP:
    if not 1 <= n_waypoints <= 5 or not 0 <= n_threats <= 5:
        raise ValueError("supported sizes: 1-5 waypoints, 0-5 threats")
    names = tuple(f"w{i + 1}" for i in range(n_waypoints)) + tuple(
        f"t{i + 1}" for i in range(n_threats)
    )
    return _monotone_env("synthetic", PropositionSet(names), "visit")


def build_env(spec: dict) -> EnvironmentMDP:
    """Environment from a JSON-style domain spec dict."""
    kind = spec.get("kind")
    if kind == "dinner":
        return dinner_domain(tuple(spec["objects"]))
    if kind == "synthetic":
        return synthetic_domain(
            int(spec.get("waypoints", 5)), int(spec.get("threats", 5))
        )
    raise ValueError(f"unknown domain kind {kind!r}")


def universe_for(spec: dict) -> ClauseUniverse:
    """Clause universe matching a domain spec."""
    env = build_env(spec)
    if spec.get("kind") == "synthetic":
        waypoints = [n for n in env.props.names if n.startswith("w")]
        threats = [n for n in env.props.names if n.startswith("t")]
        return waypoint_threat_universe(env.props, waypoints, threats)
    return full_universe(env.props)


def restricted_universe(props: PropositionSet, clause_texts) -> ClauseUniverse:
    """Universe from explicit clause strings, grouped by operator shape."""
    groups = {Globally: [], Eventually: [], Until: []}
    for text in clause_texts:
        clause = canon(parse(text, props))
        if type(clause) not in groups:
            raise ValueError(f"clause {text!r} is not a G/F/U template clause")
        groups[type(clause)].append(clause)
    return ClauseUniverse(
        props,
        tuple(groups[Globally]),
        tuple(groups[Eventually]),
        tuple(groups[Until]),
    )


_NAMED = {
    "dinner3": {"kind": "dinner", "objects": list(DINNER3_OBJECTS)},
    "dinner5": {"kind": "dinner", "objects": list(DINNER5_OBJECTS)},
    "synthetic": {"kind": "synthetic", "waypoints": 5, "threats": 5},
}


def named_domain_spec(name: str) -> dict:
    try:
        return dict(_NAMED[name])
    except KeyError:
        raise ValueError(
            f"unknown domain {name!r}; expected one of {sorted(_NAMED)}"
        ) from None


def build_named_domain(name: str) -> tuple[EnvironmentMDP, ClauseUniverse]:
    spec = named_domain_spec(name)
    return build_env(spec), universe_for(spec)


def sample_ground_truth(universe: ClauseUniverse, rng: random.Random) -> GroundTruthSpec:
    """Draw a satisfiable ground truth from the clause universe.

    A uniform-size subset of waypoints must be visited; each threat is
    independently forbidden (never for a chosen waypoint); order clauses
    follow a random linear order over the chosen waypoints, so the
    precedence relation is acyclic by construction.
    """
    waypoints = sorted(c.operand.index for c in universe.eventual_clauses)
    threats = sorted(c.operand.operand.index for c in universe.global_clauses)
    if not waypoints:
        raise ValueError("universe has no eventual clauses to sample waypoints from")

    k = rng.randint(1, len(waypoints))
    chosen = rng.sample(waypoints, k)  # doubles as the visit order
    chosen_set = set(chosen)

    eventual = frozenset(Eventually(Atom(i)) for i in chosen)
    glob = frozenset(
        Globally(Not(Atom(i)))
        for i in threats
        if i not in chosen_set and rng.random() < 0.5
    )
    order = set()
    available = {
        (c.right.index, c.left.operand.index) for c in universe.order_clauses
    }
    for pos, first in enumerate(chosen):
        for later in chosen[pos + 1 :]:
            if (first, later) in available and rng.random() < 0.3:
                order.add(Until(Not(Atom(later)), Atom(first)))
    return GroundTruthSpec(TemplateFormula(glob, eventual, frozenset(order)))


def _template(props: PropositionSet, glob=(), eventual=(), order=()) -> TemplateFormula:
    return TemplateFormula(
        frozenset(Globally(Not(Atom(props.index(p)))) for p in glob),
        frozenset(Eventually(Atom(props.index(p))) for p in eventual),
        frozenset(
            Until(Not(Atom(props.index(later))), Atom(props.index(first)))
            for first, later in order
        ),
    )


def dinner5_task1() -> GroundTruthSpec:
    """Place all five objects; dinner plate, small plate, bowl in order."""
    props = PropositionSet(DINNER5_OBJECTS)
    return GroundTruthSpec(
        _template(
            props,
            eventual=DINNER5_OBJECTS,
            order=(
                ("DinnerPlate", "SmallPlate"),
                ("DinnerPlate", "Bowl"),
                ("SmallPlate", "Bowl"),
            ),
        )
    )


def dinner5_task2() -> GroundTruthSpec:
    """Dinner plate then bowl; the small plate is prohibited; fork and
    knife are optional."""
    props = PropositionSet(DINNER5_OBJECTS)
    return GroundTruthSpec(
        _template(
            props,
            glob=("SmallPlate",),
            eventual=("DinnerPlate", "Bowl"),
            order=(("DinnerPlate", "Bowl"),),
        )
    )
