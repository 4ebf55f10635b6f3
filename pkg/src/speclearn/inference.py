"""Bayesian inference of template formulas from labeled traces.

The hypothesis space is the powerset of a finite clause universe
(global / eventual / order clauses).  The likelihood of a labeled trace
follows the classical equally-likely-outcomes argument: a formula with
``n`` conjunctive clauses splits outcome space into ``2**n`` cells, so a
satisfying acceptable trace has likelihood proportional to ``2**n``
(restrictive hypotheses gain, the size principle) while label/formula
disagreements are floored at a small ``epsilon``.  The posterior over
clause subsets is approximated with Metropolis-Hastings and collapsed
into a :class:`~speclearn.belief.Belief`.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, replace
from typing import Sequence

from .belief import Belief
from .ltl import (
    Atom,
    Eventually,
    Formula,
    Globally,
    Not,
    PropositionSet,
    TemplateFormula,
    Trace,
    Until,
    canon,
    evaluate,
)

_LOG2 = math.log(2.0)


@dataclass(frozen=True)
class LabeledTrace:
    trace: Trace
    label: int

    def __post_init__(self):
        if self.label not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {self.label}")


@dataclass(frozen=True)
class Dataset:
    items: tuple[LabeledTrace, ...]

    def __post_init__(self):
        object.__setattr__(self, "items", tuple(self.items))
        props = {item.trace.props for item in self.items}
        if len(props) > 1:
            raise ValueError("all traces in a dataset must share one proposition set")

    def __len__(self):
        return len(self.items)

    @property
    def props(self) -> PropositionSet:
        if not self.items:
            raise ValueError("empty dataset has no proposition set")
        return self.items[0].trace.props

    def extended(self, item: LabeledTrace) -> "Dataset":
        return Dataset(self.items + (item,))

    def to_json_dict(self) -> dict:
        return {
            "props": list(self.props.names),
            "items": [
                {
                    "steps": [[int(v) for v in step] for step in item.trace.steps],
                    "label": item.label,
                }
                for item in self.items
            ],
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "Dataset":
        props = PropositionSet(tuple(doc["props"]))
        items = tuple(
            LabeledTrace(
                Trace(props, tuple(tuple(bool(v) for v in step) for step in it["steps"])),
                int(it["label"]),
            )
            for it in doc["items"]
        )
        return cls(items)

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(), fh)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_json_dict(json.load(fh))


@dataclass(frozen=True)
class ClauseUniverse:
    """Finite vocabulary of clauses the prior may draw from.

    Clauses are indexed in a fixed order (globals, then eventuals, then
    orders); a hypothesis is a bitmask over that ordering.
    """

    props: PropositionSet
    global_clauses: tuple[Formula, ...]
    eventual_clauses: tuple[Formula, ...]
    order_clauses: tuple[Formula, ...]

    def __post_init__(self):
        for name in ("global_clauses", "eventual_clauses", "order_clauses"):
            object.__setattr__(
                self, name, tuple(canon(c) for c in getattr(self, name))
            )
        if len(set(self.clauses)) != len(self.clauses):
            raise ValueError("duplicate clauses in universe")

    @property
    def clauses(self) -> tuple[Formula, ...]:
        return self.global_clauses + self.eventual_clauses + self.order_clauses

    @property
    def size(self) -> int:
        return len(self.clauses)

    def template_from_mask(self, mask: int) -> TemplateFormula:
        n_g = len(self.global_clauses)
        n_e = len(self.eventual_clauses)
        glob, event, order = set(), set(), set()
        for i, clause in enumerate(self.clauses):
            if mask >> i & 1:
                (glob if i < n_g else event if i < n_g + n_e else order).add(clause)
        return TemplateFormula(frozenset(glob), frozenset(event), frozenset(order))

    def mask_from_template(self, f: TemplateFormula) -> int:
        index = {clause: i for i, clause in enumerate(self.clauses)}
        mask = 0
        for clause in f.clauses():
            if clause not in index:
                raise KeyError(f"clause outside universe: {clause!r}")
            mask |= 1 << index[clause]
        return mask


def full_universe(props: PropositionSet) -> ClauseUniverse:
    """Every G(not p), F p, and (not q) U p clause over the propositions."""
    atoms = [Atom(i) for i in range(props.n_prop)]
    orders = tuple(
        Until(Not(q), p) for p in atoms for q in atoms if p is not q
    )
    return ClauseUniverse(
        props,
        tuple(Globally(Not(a)) for a in atoms),
        tuple(Eventually(a) for a in atoms),
        orders,
    )


def waypoint_threat_universe(
    props: PropositionSet, waypoints: Sequence[str], threats: Sequence[str]
) -> ClauseUniverse:
    """Globals over threats, eventuals and pairwise orders over waypoints."""
    w_atoms = [Atom(props.index(n)) for n in waypoints]
    t_atoms = [Atom(props.index(n)) for n in threats]
    orders = tuple(
        Until(Not(later), first)
        for first in w_atoms
        for later in w_atoms
        if first is not later
    )
    return ClauseUniverse(
        props,
        tuple(Globally(Not(a)) for a in t_atoms),
        tuple(Eventually(a) for a in w_atoms),
        orders,
    )


@dataclass(frozen=True)
class InferenceConfig:
    epsilon: float = 0.01
    mcmc_samples: int = 20_000
    burn_in: int = 2_000
    inclusion_prior: float = 0.3
    support_k: int = 32
    chains: int = 1
    rng_seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError("epsilon must be in (0, 1)")
        if not 0.0 < self.inclusion_prior < 1.0:
            raise ValueError("inclusion_prior must be in (0, 1)")
        if not self.mcmc_samples > self.burn_in >= 0:
            raise ValueError("need mcmc_samples > burn_in >= 0")
        if self.support_k < 1:
            raise ValueError("support_k must be >= 1")
        if self.chains < 1:
            raise ValueError("chains must be >= 1")

    def with_seed(self, seed: int) -> "InferenceConfig":
        return replace(self, rng_seed=seed)


# -- likelihood --------------------------------------------------------------

def _log_likelihood_case(satisfied: bool, label: int, n_conj: int, epsilon: float) -> float:
    """Unnormalized log-likelihood of one labeled trace given a formula.

    Pairwise differences across formulas reproduce the classical odds
    ratios: 2**n1 / 2**n2 for an acceptable trace satisfying both, and
    [2**n1 (2**n2 - 1)] / [2**n2 (2**n1 - 1)] for an unacceptable trace
    violating both.  Disagreement between the label and the formula's
    verdict is floored at epsilon.
    """
    if label == 1:
        return n_conj * _LOG2 if satisfied else math.log(epsilon)
    if satisfied:
        return math.log(epsilon)
    return n_conj * _LOG2 - math.log(max(2.0 ** n_conj - 1.0, epsilon))


def log_likelihood(item: LabeledTrace, f: TemplateFormula, cfg: InferenceConfig) -> float:
    satisfied = evaluate(f.to_formula(), item.trace, 0)
    return _log_likelihood_case(satisfied, item.label, f.n_conj, cfg.epsilon)


def log_likelihood_dataset(data: Dataset, f: TemplateFormula, cfg: InferenceConfig) -> float:
    """Independent items: the dataset log-likelihood is the sum."""
    return sum(log_likelihood(item, f, cfg) for item in data.items)


def log_prior(f: TemplateFormula, universe: ClauseUniverse, cfg: InferenceConfig) -> float:
    """Independent clause-inclusion prior; -inf outside the universe."""
    try:
        mask = universe.mask_from_template(f)
    except KeyError:
        return float("-inf")
    n_in = mask.bit_count()
    p = cfg.inclusion_prior
    return n_in * math.log(p) + (universe.size - n_in) * math.log(1.0 - p)


# -- posterior ---------------------------------------------------------------

class _MaskedData:
    """Per-clause violation bitmasks; makes hypothesis scoring O(items)."""

    def __init__(self, universe: ClauseUniverse, data: Dataset):
        self.items = []
        for item in data.items:
            viol = 0
            for i, clause in enumerate(universe.clauses):
                if not evaluate(clause, item.trace, 0):
                    viol |= 1 << i
            self.items.append((viol, item.label))

    def log_likelihood(self, mask: int, epsilon: float) -> float:
        total = 0.0
        n = mask.bit_count()
        for viol, label in self.items:
            total += _log_likelihood_case(mask & viol == 0, label, n, epsilon)
        return total


def infer_posterior(
    prior: ClauseUniverse | Belief, data: Dataset, cfg: InferenceConfig
) -> Belief:
    """Posterior belief given labeled traces.

    With a :class:`ClauseUniverse` prior, runs Metropolis-Hastings over
    clause subsets (symmetric toggle/swap proposals) and collapses visit
    frequencies into a belief of at most ``cfg.support_k`` formulas.
    With a :class:`Belief` prior, reweights its finite support exactly.
    """
    if not data.items:
        raise ValueError("dataset must be non-empty")
    if isinstance(prior, Belief):
        return _reweight_belief(prior, data, cfg)
    return _mh_posterior(prior, data, cfg)


def _reweight_belief(prior: Belief, data: Dataset, cfg: InferenceConfig) -> Belief:
    logs = [
        math.log(p) + log_likelihood_dataset(data, f, cfg) if p > 0 else float("-inf")
        for f, p in zip(prior.support, prior.probs)
    ]
    peak = max(logs)
    weights = [math.exp(x - peak) for x in logs]
    belief = Belief.from_weights(
        prior.props, list(zip(prior.support, weights))
    )
    return belief.truncated(cfg.support_k)


def _mh_posterior(universe: ClauseUniverse, data: Dataset, cfg: InferenceConfig) -> Belief:
    if data.props != universe.props:
        raise ValueError("dataset and universe use different proposition sets")
    masked = _MaskedData(universe, data)
    counts: dict[int, int] = {}
    for chain in range(cfg.chains):
        seed = cfg.rng_seed if cfg.chains == 1 else (cfg.rng_seed, "chain", chain)
        _mh_chain(universe, masked, cfg, seed, counts)
    top = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[: cfg.support_k]
    return Belief.from_weights(
        universe.props,
        [(universe.template_from_mask(mask), float(c)) for mask, c in top],
    )


def _mh_chain(universe, masked, cfg, seed, counts: dict[int, int]) -> None:
    """One Metropolis-Hastings chain; visit counts accumulate into counts."""
    rng = random.Random(seed)
    size = universe.size
    log_p = math.log(cfg.inclusion_prior)
    log_q = math.log(1.0 - cfg.inclusion_prior)

    def log_post(mask: int) -> float:
        n_in = mask.bit_count()
        return (
            n_in * log_p
            + (size - n_in) * log_q
            + masked.log_likelihood(mask, cfg.epsilon)
        )

    # start at the prior mode (empty template for inclusion < 0.5); a
    # random prior draw is mostly data-inconsistent and its climb toward
    # the consistent modes pollutes early post-burn-in visit counts
    current = 0 if cfg.inclusion_prior <= 0.5 else (1 << size) - 1
    current_score = log_post(current)

    def propose(mask: int) -> int:
        if rng.random() < 0.5:
            return mask ^ (1 << rng.randrange(size))
        present = [i for i in range(size) if mask >> i & 1]
        absent = [i for i in range(size) if not mask >> i & 1]
        if not present or not absent:
            # a swap is impossible; proposing to stay keeps the kernel
            # symmetric (a toggle fallback here would not be)
            return mask
        return mask ^ (1 << rng.choice(present)) ^ (1 << rng.choice(absent))

    for step in range(cfg.mcmc_samples):
        candidate = propose(current)
        candidate_score = log_post(candidate)
        if math.log(rng.random()) < candidate_score - current_score:
            current, current_score = candidate, candidate_score
        if step >= cfg.burn_in:
            counts[current] = counts.get(current, 0) + 1
