"""Discrete beliefs over candidate template formulas.

A belief is a probability mass function over a finite support of
:class:`~speclearn.ltl.TemplateFormula`.  Summaries defined here feed
both the experiment metrics (entropy, similarity to ground truth) and
the query-selection machinery (acceptability of a trace).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

from .ltl import (
    PropositionSet,
    TemplateFormula,
    Trace,
    evaluate,
    parse,
    similarity,
    template_from_formula,
)

_PROB_TOL = 1e-9


@dataclass(frozen=True)
class Belief:
    """Probability mass function over distinct template formulas.

    Support entries equal after canonicalization are merged on
    construction, accumulating their probabilities.
    """

    props: PropositionSet
    support: tuple[TemplateFormula, ...]
    probs: tuple[float, ...]

    def __post_init__(self):
        if len(self.support) != len(self.probs):
            raise ValueError("support and probs must have the same length")
        if not self.support:
            raise ValueError("belief support must not be empty")
        merged: dict[frozenset, int] = {}
        support: list[TemplateFormula] = []
        probs: list[float] = []
        for f, p in zip(self.support, self.probs):
            if p < -_PROB_TOL:
                raise ValueError(f"negative probability {p}")
            key = f.clauses()
            if key in merged:
                probs[merged[key]] += p
            else:
                merged[key] = len(support)
                support.append(f)
                probs.append(max(p, 0.0))
        total = sum(probs)
        if abs(total - 1.0) > _PROB_TOL:
            raise ValueError(f"probabilities sum to {total}, expected 1")
        object.__setattr__(self, "support", tuple(support))
        object.__setattr__(self, "probs", tuple(probs))

    @classmethod
    def from_weights(
        cls,
        props: PropositionSet,
        weighted: Iterable[tuple[TemplateFormula, float]],
    ) -> "Belief":
        """Normalize non-negative weights into a belief."""
        pairs = list(weighted)
        total = sum(w for _, w in pairs)
        if total <= 0:
            raise ValueError("weights must have positive total mass")
        return cls(props, tuple(f for f, _ in pairs), tuple(w / total for _, w in pairs))

    def truncated(self, k: int) -> "Belief":
        """Keep the k most probable formulas and renormalize."""
        if k < 1:
            raise ValueError("k must be >= 1")
        if len(self.support) <= k:
            return self
        order = sorted(
            range(len(self.support)), key=lambda i: (-self.probs[i], i)
        )[:k]
        order.sort()
        kept = [(self.support[i], self.probs[i]) for i in order]
        return Belief.from_weights(self.props, kept)

    def map_formula(self) -> TemplateFormula:
        best = max(range(len(self.support)), key=lambda i: (self.probs[i], -i))
        return self.support[best]

    def to_json_dict(self) -> dict:
        return {
            "props": list(self.props.names),
            "support": [
                {"formula": f.text(self.props), "prob": p}
                for f, p in zip(self.support, self.probs)
            ],
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "Belief":
        props = PropositionSet(tuple(doc["props"]))
        support = []
        probs = []
        for entry in doc["support"]:
            support.append(template_from_formula(parse(entry["formula"], props)))
            probs.append(float(entry["prob"]))
        return cls(props, tuple(support), tuple(probs))


def point_mass(props: PropositionSet, f: TemplateFormula) -> Belief:
    return Belief(props, (f,), (1.0,))


def entropy(b: Belief) -> float:
    """Shannon entropy of the belief, in bits."""
    return -sum(p * math.log2(p) for p in b.probs if p > 0.0)


def belief_similarity(b: Belief, ground_truth: TemplateFormula) -> float:
    """Expected clause-set intersection-over-union against a ground truth."""
    return sum(p * similarity(f, ground_truth) for f, p in zip(b.support, b.probs))


def acceptability(b: Belief, trace: Trace) -> float:
    """Probability that the trace would be labeled acceptable under the belief."""
    return sum(
        p for f, p in zip(b.support, b.probs) if evaluate(f.to_formula(), trace, 0)
    )
