"""Simulated teacher: generates satisfying demonstrations and labels
arbitrary executions against a ground-truth formula, perfectly.

Demonstrations are optimal rollouts (undiscounted values make every
satisfying execution exactly optimal, so tie-breaking can vary them
freely).  Like a teacher who shows different valid ways of doing the
task, each demonstration after the first is chosen from a pool of
candidate rollouts to repeat as few incidental pairwise orderings of the
earlier demonstrations as possible; orderings the task truly mandates
appear in every candidate and survive regardless."""

from __future__ import annotations

from dataclasses import dataclass

from .belief import point_mass
from .domains import GroundTruthSpec
from .inference import LabeledTrace
from .ltl import Trace, evaluate
from .machine import compile_belief
from .planner import EnvironmentMDP, ProductMDP, rollout, value_iteration
from .seeds import derive_seed

_POOL = 16


class DemonstrationError(RuntimeError):
    """The ground truth cannot be satisfied in the environment."""


def _order_signature(trace: Trace) -> frozenset[tuple[int, int]]:
    """Pairs (p, q) with p's first occurrence at or before q's.

    Missing propositions count as occurring at infinity, matching the
    until-clause reading "q does not happen until p has".
    """
    n = trace.props.n_prop
    first = [len(trace.steps)] * n
    for t, step in enumerate(reversed(trace.steps)):
        for i, v in enumerate(step):
            if v:
                first[i] = len(trace.steps) - 1 - t
    return frozenset(
        (p, q)
        for p in range(n)
        for q in range(n)
        if p != q and first[p] < len(trace.steps) and first[p] <= first[q]
    )


@dataclass
class SimTeacher:
    ground_truth: GroundTruthSpec
    env: EnvironmentMDP
    rng_seed: int = 0

    def __post_init__(self):
        machine = compile_belief(point_mass(self.env.props, self.ground_truth.formula))
        self._product = ProductMDP(self.env, machine, "min_regret")
        self._plan = value_iteration(self._product, gamma=1.0)
        if self._plan.initial_value <= 0.0:
            raise DemonstrationError(
                "ground truth formula is unsatisfiable in this environment"
            )

    def _candidate(self, index: int, pool_slot: int) -> Trace:
        seed = derive_seed(self.rng_seed, "demo", index, pool_slot)
        return rollout(self._product, self._plan, rng_seed=seed, tie_break="progress")

    def _nth_demo(self, index: int, shared_orderings) -> tuple[Trace, frozenset]:
        if index == 0:
            trace = self._candidate(0, 0)
            return trace, _order_signature(trace)
        pool = [self._candidate(index, j) for j in range(_POOL)]
        trace = min(pool, key=lambda tr: len(shared_orderings & _order_signature(tr)))
        return trace, shared_orderings & _order_signature(trace)

    def demonstrate(self, k: int, start_index: int = 0) -> list[LabeledTrace]:
        """k satisfying executions, labeled acceptable.

        Regenerating with a larger k (or continuing from start_index)
        extends the same deterministic sequence.
        """
        demos = []
        shared = None
        for i in range(start_index + k):
            trace, shared = self._nth_demo(i, shared)
            if i >= start_index:
                if not self.assess(trace):
                    raise DemonstrationError(
                        "optimal rollout violated the ground truth"
                    )
                demos.append(LabeledTrace(trace, 1))
        return demos

    def assess(self, trace: Trace) -> int:
        """Perfect boolean acceptability judgment."""
        return int(evaluate(self.ground_truth.formula.to_formula(), trace, 0))
