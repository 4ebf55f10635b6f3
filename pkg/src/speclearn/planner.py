"""Planning over the product of an environment MDP and a reward machine.

The product state is (environment state, machine state, step count); the
machine advances on the label of each environment state the agent
reaches, and reward is granted only when an episode ends (machine fully
resolved, environment complete, or horizon reached).  Tabular Q-learning
computes policies; exact finite-horizon value iteration doubles as the
planning back end for deterministic environments and as the oracle the
Q-learner is tested against.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from .ltl import PropositionSet, Trace
from .machine import QueryTarget, RewardMachine

__all__ = [
    "EnvironmentMDP",
    "ProductMDP",
    "PlannerConfig",
    "QTable",
    "ValueIterationResult",
    "product_step",
    "q_learn",
    "value_iteration",
    "plan",
    "policy_value",
    "reachable_machine_states",
    "rollout",
]


@dataclass(frozen=True)
class EnvironmentMDP:
    """Environment dynamics without a reward function.

    ``transition(x, a)`` returns ((probability, next_state), ...);
    ``label(x)`` maps a state to its truth assignment; ``complete(x)``
    marks states where the task episode has nothing left to change.
    """

    name: str
    props: PropositionSet
    states: tuple
    initial: object
    actions: tuple[str, ...]
    horizon: int
    transition: Callable[[object, int], tuple[tuple[float, object], ...]]
    label: Callable[[object], tuple[bool, ...]]
    complete: Callable[[object], bool]

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.initial not in self.states:
            raise ValueError("initial state missing from state list")


class ProductMDP:
    """Environment x reward-machine composition with terminal-only reward."""

    def __init__(
        self,
        env: EnvironmentMDP,
        machine: RewardMachine,
        reward_mode: str = "min_regret",
        query: QueryTarget | None = None,
    ):
        if env.props != machine.props:
            raise ValueError("environment and machine disagree on propositions")
        if reward_mode not in ("min_regret", "shaped"):
            raise ValueError(f"unknown reward mode {reward_mode!r}")
        if reward_mode == "shaped" and query is None:
            raise ValueError("shaped mode needs a QueryTarget")
        self.env = env
        self.machine = machine
        self.reward_mode = reward_mode
        self.query = query

        self.x_index = {x: i for i, x in enumerate(env.states)}
        self.n_x = len(env.states)
        self.n_actions = len(env.actions)
        self.label_mask = np.array(
            [_mask(env.label(x)) for x in env.states], dtype=np.int64
        )
        self.complete = np.array([bool(env.complete(x)) for x in env.states])
        dists = [
            [
                tuple((float(p), self.x_index[x2]) for p, x2 in env.transition(x, a))
                for a in range(self.n_actions)
            ]
            for x in env.states
        ]
        for row in dists:
            for dist in row:
                total = sum(p for p, _ in dist)
                if abs(total - 1.0) > 1e-9:
                    raise ValueError(f"transition distribution sums to {total}")
        self.dists = dists
        self.deterministic = all(
            len(dist) == 1 for row in dists for dist in row
        )
        if self.deterministic:
            self.next_x = np.array(
                [[row[a][0][1] for a in range(self.n_actions)] for row in dists],
                dtype=np.int32,
            )
        if reward_mode == "shaped":
            self.end_reward = np.asarray(query.shaped, dtype=float)
        else:
            self.end_reward = np.asarray(machine.reward_episode_end, dtype=float)

    def initial_state(self) -> tuple[int, int, int]:
        return (self.x_index[self.env.initial], 0, 0)

    def is_done(self, state: tuple[int, int, int]) -> bool:
        x, s, t = state
        return (
            bool(self.machine.resolved[s])
            or bool(self.complete[x])
            or t >= self.env.horizon
        )

    def terminal_reward(self, state: tuple[int, int, int]) -> float:
        return float(self.end_reward[state[1]])

    def step(
        self, state: tuple[int, int, int], action: int, rng: random.Random
    ) -> tuple[tuple[int, int, int], float, bool]:
        x, s, t = state
        if not 0 <= action < self.n_actions:
            raise ValueError(f"invalid action index {action}")
        dist = self.dists[x][action]
        if len(dist) == 1:
            x2 = dist[0][1]
        else:
            draw = rng.random()
            acc = 0.0
            x2 = dist[-1][1]
            for p, cand in dist:
                acc += p
                if draw < acc:
                    x2 = cand
                    break
        s2 = self.machine.step_index(s, int(self.label_mask[x2]))
        nxt = (x2, s2, t + 1)
        done = self.is_done(nxt)
        reward = self.terminal_reward(nxt) if done else 0.0
        return nxt, reward, done


def _mask(assignment: Sequence[bool]) -> int:
    m = 0
    for i, v in enumerate(assignment):
        if v:
            m |= 1 << i
    return m


def product_step(p: ProductMDP, state, action: int, rng: random.Random):
    return p.step(state, action, rng)


@dataclass(frozen=True)
class PlannerConfig:
    alpha: float = 0.1
    gamma: float = 0.95
    epsilon_greedy: float = 0.15
    epsilon_final: float = 0.01
    episodes: int = 20_000
    method: str = "vi"  # "vi" (exact, deterministic envs) or "q"

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must be in (0, 1]")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must be in (0, 1]")
        if self.episodes < 1:
            raise ValueError("episodes must be >= 1")
        if self.method not in ("vi", "q"):
            raise ValueError(f"unknown planner method {self.method!r}")

    def with_method(self, method: str) -> "PlannerConfig":
        return replace(self, method=method)


class QTable:
    """Tabular action values keyed by (env index, machine index, step)."""

    def __init__(self, n_actions: int):
        self.n_actions = n_actions
        self.table: dict[tuple[int, int, int], np.ndarray] = {}

    def row(self, state) -> np.ndarray:
        got = self.table.get(state)
        if got is None:
            got = self.table[state] = np.zeros(self.n_actions)
        return got

    def action_values(self, state) -> np.ndarray:
        got = self.table.get(state)
        return got if got is not None else np.zeros(self.n_actions)

    def action(self, state) -> int:
        return int(np.argmax(self.action_values(state)))

    def to_json_dict(self) -> dict:
        return {
            "n_actions": self.n_actions,
            "entries": [
                {"state": list(state), "q": [float(v) for v in row]}
                for state, row in sorted(self.table.items())
            ],
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "QTable":
        qt = cls(int(doc["n_actions"]))
        for entry in doc["entries"]:
            qt.table[tuple(entry["state"])] = np.asarray(entry["q"], dtype=float)
        return qt

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(), fh)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_json_dict(json.load(fh))


def q_learn(p: ProductMDP, cfg: PlannerConfig, rng_seed: int) -> QTable:
    """One-step tabular Q-learning with linearly decaying epsilon-greedy."""
    rng = random.Random(rng_seed)
    q = QTable(p.n_actions)
    span = max(p.n_actions, 1)
    for episode in range(cfg.episodes):
        frac = episode / max(cfg.episodes - 1, 1)
        eps = cfg.epsilon_greedy + (cfg.epsilon_final - cfg.epsilon_greedy) * frac
        state = p.initial_state()
        done = p.is_done(state)
        while not done:
            row = q.row(state)
            if rng.random() < eps:
                action = rng.randrange(span)
            else:
                action = int(np.argmax(row))
            nxt, reward, done = p.step(state, action, rng)
            target = reward if done else cfg.gamma * float(np.max(q.row(nxt)))
            row[action] += cfg.alpha * (target - row[action])
            state = nxt
    return q


class ValueIterationResult:
    """Exact finite-horizon values with a greedy policy."""

    def __init__(self, p: ProductMDP, gamma: float, values, policies):
        self.product = p
        self.gamma = gamma
        self._values = values  # list over t of (n_x, n_s) arrays
        self._policies = policies
        self.n_actions = p.n_actions

    def value(self, state) -> float:
        x, s, t = state
        if self.product.is_done(state):
            return float(self.product.end_reward[s])
        return float(self._values[t][x, s])

    def action_values(self, state) -> np.ndarray:
        x, s, t = state
        p = self.product
        out = np.empty(p.n_actions)
        for a in range(p.n_actions):
            total = 0.0
            for prob, x2 in p.dists[x][a]:
                s2 = p.machine.step_index(s, int(p.label_mask[x2]))
                nxt = (x2, s2, t + 1)
                if p.is_done(nxt):
                    total += prob * float(p.end_reward[s2])
                else:
                    total += prob * self.gamma * float(self._values[t + 1][x2, s2])
            out[a] = total
        return out

    def action(self, state) -> int:
        x, s, t = state
        return int(self._policies[t][x, s])

    @property
    def initial_value(self) -> float:
        return self.value(self.product.initial_state())


def value_iteration(p: ProductMDP, gamma: float = 0.95) -> ValueIterationResult:
    """Backward induction over (env, machine, step); exact for any finite
    product, vectorized when the environment is deterministic."""
    horizon = p.env.horizon
    n_x, n_s = p.n_x, p.machine.n_states
    machine_T = p.machine.next_state_index
    resolved = np.asarray(p.machine.resolved)
    end_reward = p.end_reward
    values = [None] * horizon
    policies = [None] * horizon

    if p.deterministic:
        v_next = None
        for t in range(horizon - 1, -1, -1):
            q = np.empty((n_x, n_s, p.n_actions))
            for a in range(p.n_actions):
                x2 = p.next_x[:, a]  # (n_x,)
                s2 = machine_T[:, p.label_mask[x2]].T  # (n_x, n_s)
                done = resolved[s2] | p.complete[x2][:, None] | (t + 1 >= horizon)
                landing = end_reward[s2]
                if v_next is not None:
                    landing = np.where(done, landing, gamma * v_next[x2[:, None], s2])
                q[:, :, a] = landing
            values[t] = q.max(axis=2)
            policies[t] = q.argmax(axis=2).astype(np.int8)
            v_next = values[t]
        return ValueIterationResult(p, gamma, values, policies)

    # stochastic environments: dense backward induction with loops
    for t in range(horizon - 1, -1, -1):
        v = np.empty((n_x, n_s))
        pol = np.zeros((n_x, n_s), dtype=np.int8)
        for x in range(n_x):
            for s in range(n_s):
                best, best_a = None, 0
                for a in range(p.n_actions):
                    total = 0.0
                    for prob, x2 in p.dists[x][a]:
                        s2 = int(machine_T[s, p.label_mask[x2]])
                        if resolved[s2] or p.complete[x2] or t + 1 >= horizon:
                            total += prob * float(end_reward[s2])
                        else:
                            total += prob * gamma * float(values[t + 1][x2, s2])
                    if best is None or total > best:
                        best, best_a = total, a
                v[x, s] = best
                pol[x, s] = best_a
        values[t] = v
        policies[t] = pol
    return ValueIterationResult(p, gamma, values, policies)


def plan(p: ProductMDP, cfg: PlannerConfig, rng_seed: int = 0):
    """Compute a policy per the configured method."""
    if cfg.method == "q":
        return q_learn(p, cfg, rng_seed)
    return value_iteration(p, cfg.gamma)


def reachable_machine_states(p: ProductMDP) -> list:
    """Machine states reachable under the environment's dynamics.

    Query selection ranges over machine terminals; terminals the
    environment can never produce would make inexecutable queries, so
    the experiment loop restricts the argmin to this set.
    """
    x0, s0, _ = p.initial_state()
    seen = {(x0, s0)}
    frontier = [(x0, s0)]
    for _ in range(p.env.horizon):
        nxt = []
        for x, s in frontier:
            if p.machine.resolved[s] or p.complete[x]:
                continue
            for a in range(p.n_actions):
                for _, x2 in p.dists[x][a]:
                    s2 = p.machine.step_index(s, int(p.label_mask[x2]))
                    if (x2, s2) not in seen:
                        seen.add((x2, s2))
                        nxt.append((x2, s2))
        if not nxt:
            break
        frontier = nxt
    indices = sorted({s for _, s in seen})
    return [p.machine.states[i] for i in indices]


def policy_value(p: ProductMDP, policy, gamma: float) -> float:
    """Exact expected return of a policy (memoized expectation)."""
    memo: dict[tuple[int, int, int], float] = {}

    def go(state) -> float:
        if p.is_done(state):
            return float(p.end_reward[state[1]])
        got = memo.get(state)
        if got is not None:
            return got
        x, s, t = state
        a = policy.action(state)
        total = 0.0
        for prob, x2 in p.dists[x][a]:
            s2 = p.machine.step_index(s, int(p.label_mask[x2]))
            nxt = (x2, s2, t + 1)
            if p.is_done(nxt):
                total += prob * float(p.end_reward[s2])
            else:
                total += prob * gamma * go(nxt)
        memo[state] = total
        return total

    return go(p.initial_state())


def rollout(
    p: ProductMDP,
    policy,
    rng_seed: int = 0,
    tie_break: str = "first",
    trim: bool = True,
) -> Trace:
    """Greedy episode; returns the proposition trace of visited states.

    Among actions whose values are within 1e-9 of the best,
    ``tie_break="random"`` picks uniformly, and ``tie_break="progress"``
    prefers actions that advance the machine state (then ones that leave
    the environment unchanged), random within the preferred group - this
    yields purposeful but still varied optimal executions.  Trailing
    steps that no longer change the assignment are trimmed.
    """
    rng = random.Random(rng_seed)
    state = p.initial_state()
    steps: list[tuple[bool, ...]] = []
    done = p.is_done(state)
    while not done:
        if tie_break == "first":
            action = policy.action(state)
        else:
            vals = policy.action_values(state)
            best = float(np.max(vals))
            choices = [a for a in range(p.n_actions) if vals[a] >= best - 1e-9]
            if tie_break == "progress" and p.deterministic:
                choices = _prefer_progress(p, state, choices)
            action = rng.choice(choices)
        state, _, done = p.step(state, action, rng)
        steps.append(p.env.label(p.env.states[state[0]]))
    if not steps:
        steps = [p.env.label(p.env.states[state[0]])]
    if trim:
        while len(steps) > 1 and steps[-1] == steps[-2]:
            steps.pop()
    return Trace(p.env.props, tuple(steps))


def _prefer_progress(p: ProductMDP, state, choices):
    x, s, _ = state
    advancing, idle = [], []
    for a in choices:
        x2 = p.dists[x][a][0][1]
        s2 = p.machine.step_index(s, int(p.label_mask[x2]))
        if s2 != s:
            advancing.append(a)
        elif x2 == x:
            idle.append(a)
    return advancing or idle or choices
