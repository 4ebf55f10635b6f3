"""Compilation of a belief over template formulas into a reward machine.

The machine is a deterministic automaton whose states are tuples of
progressed formulas, one component per belief support entry, explored
breadth-first over every truth assignment.  A state is *terminal* when
every component has resolved to true, false, or a safety-only residual;
terminal states carry the probability-weighted minimum-regret reward
(+1 per satisfied component, -1 per violated one).  Query selection
picks the terminal with reward magnitude closest to zero - the state
whose acceptability the belief is least certain about - and reshapes
rewards so a planner can steer an execution into it.

Two equivalent compilation back ends exist: a bitmask fast path for the
global/eventual/order clause shapes (each clause's progression depends
only on the current assignment, so a component reduces to its set of
live clauses), and a generic path that progresses formula trees
directly.  The fast path is used automatically whenever every clause
fits; both are cross-checked in the test suite.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .belief import Belief
from .ltl import (
    And,
    Atom,
    Eventually,
    FALSE,
    Formula,
    FalseFormula,
    Globally,
    Not,
    TRUE,
    TemplateFormula,
    Trace,
    TrueFormula,
    Until,
    canon,
    format_formula,
    is_safe,
    progress,
    structural_key,
)

__all__ = [
    "MachineState",
    "RewardMachine",
    "QueryTarget",
    "MachineSizeError",
    "compile_belief",
    "select_query",
]

# component classification codes
_TOP, _BOT, _SAFE, _LIVE = 0, 1, 2, 3


class MachineSizeError(RuntimeError):
    """Raised when breadth-first exploration exceeds the state cap."""


@dataclass(frozen=True)
class MachineState:
    """Ordered tuple of progressed formulas, one per belief support entry."""

    progressions: tuple[Formula, ...]

    def __repr__(self):
        return f"MachineState({self.progressions!r})"


def _assignment_mask(assignment: Sequence[bool]) -> int:
    mask = 0
    for i, v in enumerate(assignment):
        if v:
            mask |= 1 << i
    return mask


class RewardMachine:
    """Deterministic automaton over progression tuples with reward maps.

    Attributes of note:

    - ``states``: interned :class:`MachineState` list in BFS order
    - ``next_state_index``: (n_states, 2**n_prop) transition table
    - ``terminal`` / ``resolved``: boolean arrays; resolved states (all
      components true/false) are absorbing, safe residuals stay live so
      a later assignment can still violate them
    - ``reward_min_regret``: terminal reward, zero elsewhere
    - ``reward_episode_end``: reward if an episode were cut off in the
      state (safety residuals count satisfied, open liveness does not)
    """

    def __init__(
        self,
        belief: Belief,
        states: list[MachineState],
        next_state_index: np.ndarray,
        component_class: np.ndarray,
        depth: np.ndarray,
    ):
        self.belief = belief
        self.props = belief.props
        self.n_prop = belief.props.n_prop
        self.states = states
        self.next_state_index = next_state_index
        self.component_class = component_class
        self.depth = depth
        self._index = {s.progressions: i for i, s in enumerate(states)}

        probs = np.asarray(belief.probs)
        cls = component_class
        self.terminal = np.all(cls != _LIVE, axis=1)
        self.resolved = np.all((cls == _TOP) | (cls == _BOT), axis=1)
        component_reward = np.where((cls == _TOP) | (cls == _SAFE), 1.0, -1.0)
        end_reward = component_reward @ probs
        self.reward_episode_end = end_reward
        self.reward_min_regret = np.where(self.terminal, end_reward, 0.0)

    # -- basic accessors ----------------------------------------------------

    @property
    def initial(self) -> MachineState:
        return self.states[0]

    @property
    def n_states(self) -> int:
        return len(self.states)

    def index_of(self, state: MachineState) -> int:
        try:
            return self._index[state.progressions]
        except KeyError:
            raise KeyError(f"unknown machine state {state!r}") from None

    def terminal_states(self) -> list[MachineState]:
        return [s for i, s in enumerate(self.states) if self.terminal[i]]

    # -- dynamics -----------------------------------------------------------

    def step_index(self, state_index: int, assignment_mask: int) -> int:
        return int(self.next_state_index[state_index, assignment_mask])

    def step(self, state: MachineState, assignment: Sequence[bool]) -> MachineState:
        i = self.index_of(state)
        return self.states[self.step_index(i, _assignment_mask(assignment))]

    def final_state_index(self, trace: Trace) -> int:
        if trace.props != self.props:
            raise ValueError("trace uses a different proposition set")
        i = 0
        for step in trace.steps:
            i = self.step_index(i, _assignment_mask(step))
        return i

    def state_for_trace(self, trace: Trace) -> MachineState:
        return self.states[self.final_state_index(trace)]

    def trace_reward(self, trace: Trace) -> float:
        """Episode-end reward of the state the trace drives the machine to."""
        return float(self.reward_episode_end[self.final_state_index(trace)])

    # -- export ---------------------------------------------------------------

    def to_json_dict(self) -> dict:
        bits = self.n_prop
        edges = []
        for i in range(self.n_states):
            for a in range(1 << bits):
                edges.append(
                    {
                        "from": i,
                        "assignment": format(a, f"0{bits}b")[::-1],
                        "to": int(self.next_state_index[i, a]),
                    }
                )
        return {
            "props": list(self.props.names),
            "probs": list(self.belief.probs),
            "support": [f.text(self.props) for f in self.belief.support],
            "states": [
                {
                    "index": i,
                    "formulas": [format_formula(f, self.props) for f in s.progressions],
                    "terminal": bool(self.terminal[i]),
                    "resolved": bool(self.resolved[i]),
                    "reward": float(self.reward_min_regret[i]),
                    "reward_episode_end": float(self.reward_episode_end[i]),
                }
                for i, s in enumerate(self.states)
            ],
            "edges": edges,
        }

    def to_dot(self) -> str:
        """Graphviz description; parallel edges are merged per target."""
        lines = ["digraph reward_machine {", "  rankdir=LR;"]
        for i, s in enumerate(self.states):
            label = "\\n".join(format_formula(f, self.props) for f in s.progressions)
            shape = "doublecircle" if self.terminal[i] else "circle"
            lines.append(
                f'  s{i} [shape={shape} label="s{i}\\n{label}\\n'
                f'R={self.reward_min_regret[i]:+.2f}"];'
            )
        bits = self.n_prop
        for i in range(self.n_states):
            targets: dict[int, list[str]] = {}
            for a in range(1 << bits):
                j = int(self.next_state_index[i, a])
                targets.setdefault(j, []).append(format(a, f"0{bits}b")[::-1])
            for j, labels in sorted(targets.items()):
                text = ",".join(labels) if len(labels) <= 4 else f"{len(labels)} assignments"
                lines.append(f'  s{i} -> s{j} [label="{text}"];')
        lines.append("}")
        return "\n".join(lines)

    def save_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(), fh)


# -- compilation: bitmask fast path -------------------------------------------

class _ClauseTable:
    """Union of all support clauses with per-assignment bit dynamics.

    Under one truth assignment a clause either stays live, discharges to
    true, or fails to false:

    - ``G (not p)``  fails iff p holds
    - ``F p``        discharges iff p holds
    - ``(not q) U p``   discharges iff p holds, else fails iff q holds
    """

    def __init__(self, clauses: list[Formula], n_prop: int):
        self.clauses = clauses
        n_assign = 1 << n_prop
        dies = np.zeros(n_assign, dtype=np.int64)
        disc = np.zeros(n_assign, dtype=np.int64)
        safe = 0
        for bit, clause in enumerate(clauses):
            kind = type(clause)
            for a in range(n_assign):
                if kind is Globally:
                    p = clause.operand.operand.index
                    if a >> p & 1:
                        dies[a] |= 1 << bit
                elif kind is Eventually:
                    p = clause.operand.index
                    if a >> p & 1:
                        disc[a] |= 1 << bit
                else:  # (not q) U p
                    p = clause.right.index
                    q = clause.left.operand.index
                    if a >> p & 1:
                        disc[a] |= 1 << bit
                    elif a >> q & 1:
                        dies[a] |= 1 << bit
            if kind is Globally:
                safe |= 1 << bit
        self.dies = dies
        self.disc = disc
        self.safe_bits = safe


def _clause_pattern_ok(clause: Formula) -> bool:
    kind = type(clause)
    if kind is Globally:
        op = clause.operand
        return type(op) is Not and type(op.operand) is Atom
    if kind is Eventually:
        return type(clause.operand) is Atom
    if kind is Until:
        return (
            type(clause.left) is Not
            and type(clause.left.operand) is Atom
            and type(clause.right) is Atom
        )
    return False


def _compile_masked(belief: Belief, state_cap: int) -> RewardMachine:
    n_prop = belief.props.n_prop
    n_assign = 1 << n_prop
    union: list[Formula] = []
    seen: dict[Formula, int] = {}
    initial_masks = []
    for f in belief.support:
        mask = 0
        for clause in sorted(f.clauses(), key=structural_key):
            if clause not in seen:
                seen[clause] = len(union)
                union.append(clause)
            mask |= 1 << seen[clause]
        initial_masks.append(mask)
    table = _ClauseTable(union, n_prop)
    dies, disc = table.dies, table.disc
    k = len(belief.support)

    index: dict[bytes, int] = {}
    rows: list[np.ndarray] = []  # per-state component masks (-1 encodes false)
    depth: list[int] = []
    trans: list[np.ndarray] = []

    def intern(row: np.ndarray, d: int) -> int:
        key = row.tobytes()
        found = index.get(key)
        if found is None:
            found = len(rows)
            if found >= state_cap:
                raise MachineSizeError(
                    f"reward machine exceeds {state_cap} states; "
                    "truncate the belief support or raise the cap"
                )
            index[key] = found
            rows.append(row.copy())
            depth.append(d)
        return found

    start = np.asarray(initial_masks, dtype=np.int64)
    intern(start, 0)
    frontier = [0]
    while frontier:
        block = np.stack([rows[i] for i in frontier])  # (f, k)
        bot = block == -1
        succ_rows = np.empty((len(frontier), n_assign, k), dtype=np.int64)
        for a in range(n_assign):
            dead = bot | ((block & dies[a]) != 0)
            succ_rows[:, a, :] = np.where(dead, -1, block & ~disc[a])
        flat = succ_rows.reshape(-1, k)
        unique, first_pos, inverse = np.unique(
            flat, axis=0, return_index=True, return_inverse=True
        )
        next_depth = depth[frontier[0]] + 1
        unique_ids = np.empty(len(unique), dtype=np.int32)
        # intern in first-discovery order so state numbering matches the
        # generic back end exactly
        for u in np.argsort(first_pos, kind="stable"):
            unique_ids[u] = intern(unique[u], next_depth)
        flat_ids = unique_ids[inverse.reshape(len(frontier), n_assign)]
        for pos, i in enumerate(frontier):
            trans.append(flat_ids[pos])
        explored = len(trans)
        frontier = list(range(explored, len(rows)))

    comp_class = np.empty((len(rows), k), dtype=np.int8)
    safe_bits = table.safe_bits
    for i, row in enumerate(rows):
        for c in range(k):
            m = int(row[c])
            if m == -1:
                comp_class[i, c] = _BOT
            elif m == 0:
                comp_class[i, c] = _TOP
            elif m & ~safe_bits == 0:
                comp_class[i, c] = _SAFE
            else:
                comp_class[i, c] = _LIVE

    states = []
    for row in rows:
        comps = []
        for c in range(k):
            m = int(row[c])
            if m == -1:
                comps.append(FALSE)
            else:
                live = [union[b] for b in range(len(union)) if m >> b & 1]
                comps.append(canon(And(tuple(live))) if live else TRUE)
        states.append(MachineState(tuple(comps)))

    return RewardMachine(
        belief,
        states,
        np.stack(trans).astype(np.int32),
        comp_class,
        np.asarray(depth, dtype=np.int32),
    )


# -- compilation: generic progression path ------------------------------------

def _classify(f: Formula) -> int:
    if type(f) is TrueFormula:
        return _TOP
    if type(f) is FalseFormula:
        return _BOT
    if is_safe(f):
        return _SAFE
    return _LIVE


def _compile_generic(belief: Belief, state_cap: int) -> RewardMachine:
    n_prop = belief.props.n_prop
    n_assign = 1 << n_prop
    assignments = [
        tuple(bool(a >> i & 1) for i in range(n_prop)) for a in range(n_assign)
    ]
    cache: dict[tuple[Formula, int], Formula] = {}

    def step_formula(f: Formula, a: int) -> Formula:
        key = (f, a)
        hit = cache.get(key)
        if hit is None:
            hit = cache[key] = progress(f, assignments[a])
        return hit

    start = tuple(canon(f.to_formula()) for f in belief.support)
    index: dict[tuple[Formula, ...], int] = {start: 0}
    tuples = [start]
    depth = [0]
    trans: list[list[int]] = []
    frontier = [0]
    while frontier:
        next_frontier = []
        for i in frontier:
            comps = tuples[i]
            resolved = all(type(f) in (TrueFormula, FalseFormula) for f in comps)
            row = []
            for a in range(n_assign):
                succ = comps if resolved else tuple(step_formula(f, a) for f in comps)
                j = index.get(succ)
                if j is None:
                    j = len(tuples)
                    if j >= state_cap:
                        raise MachineSizeError(
                            f"reward machine exceeds {state_cap} states; "
                            "truncate the belief support or raise the cap"
                        )
                    index[succ] = j
                    tuples.append(succ)
                    depth.append(depth[i] + 1)
                    next_frontier.append(j)
                row.append(j)
            trans.append(row)
        frontier = next_frontier

    comp_class = np.array(
        [[_classify(f) for f in comps] for comps in tuples], dtype=np.int8
    )
    states = [MachineState(comps) for comps in tuples]
    return RewardMachine(
        belief,
        states,
        np.asarray(trans, dtype=np.int32),
        comp_class,
        np.asarray(depth, dtype=np.int32),
    )


def compile_belief(
    belief: Belief, state_cap: int = 100_000, force_generic: bool = False
) -> RewardMachine:
    """Compile a belief into its reward machine.

    Uses the bitmask back end when every clause matches the
    global/eventual/order shapes (and there are at most 62 distinct
    clauses), the generic progression back end otherwise.
    """
    all_clauses = set()
    for f in belief.support:
        all_clauses |= f.clauses()
    fits = (
        not force_generic
        and len(all_clauses) <= 62
        and all(_clause_pattern_ok(c) for c in all_clauses)
    )
    if fits:
        return _compile_masked(belief, state_cap)
    return _compile_generic(belief, state_cap)


# -- query selection -----------------------------------------------------------

@dataclass(frozen=True)
class QueryTarget:
    """Most-uncertain terminal plus the reshaped reward steering into it."""

    selected: MachineState
    selected_index: int
    path_indices: frozenset[int]
    shaped: np.ndarray  # per-state reward in {-1, 0, +1}

    def path_states(self, machine: RewardMachine) -> frozenset[MachineState]:
        return frozenset(machine.states[i] for i in self.path_indices)

    def shaped_reward(self, machine: RewardMachine, state: MachineState) -> float:
        return float(self.shaped[machine.index_of(state)])


def _backward_reachable(machine: RewardMachine, target: int) -> np.ndarray:
    reach = np.zeros(machine.n_states, dtype=bool)
    reach[target] = True
    while True:
        preds = reach[machine.next_state_index].any(axis=1) | reach
        if (preds == reach).all():
            return reach
        reach = preds


def select_query(
    machine: RewardMachine, candidates: Iterable[MachineState] | None = None
) -> QueryTarget:
    """Pick the terminal whose reward magnitude is closest to zero.

    ``candidates`` optionally restricts the argmin (e.g. to machine
    states actually reachable under an environment's dynamics).  Ties
    break toward the shortest path from the initial state, then the
    smallest interned index.
    """
    allowed = np.asarray(machine.terminal).copy()
    if candidates is not None:
        keep = np.zeros(machine.n_states, dtype=bool)
        for s in candidates:
            keep[machine.index_of(s)] = True
        allowed &= keep
    indices = np.flatnonzero(allowed)
    if len(indices) == 0:
        raise ValueError("no eligible terminal state to query")
    best = min(
        indices,
        key=lambda i: (
            abs(machine.reward_min_regret[i]),
            machine.depth[i],
            i,
        ),
    )
    on_path = _backward_reachable(machine, int(best))
    shaped = np.where(on_path, 0.0, -1.0)
    shaped[best] = 1.0
    return QueryTarget(
        selected=machine.states[best],
        selected_index=int(best),
        path_indices=frozenset(int(i) for i in np.flatnonzero(on_path)),
        shaped=shaped,
    )
