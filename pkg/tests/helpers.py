"""Shared non-oracle test utilities."""

import itertools
import random

from speclearn.belief import Belief
from speclearn.inference import full_universe
from speclearn.ltl import PropositionSet, Trace


def random_belief(props: PropositionSet, rng: random.Random, k: int = 3) -> Belief:
    """Belief over k distinct random template formulas from the full universe."""
    universe = full_universe(props)
    masks = set()
    while len(masks) < k:
        masks.add(rng.getrandbits(universe.size))
    weights = [rng.random() + 0.05 for _ in range(len(masks))]
    return Belief.from_weights(
        props,
        [
            (universe.template_from_mask(m), w)
            for m, w in zip(sorted(masks), weights)
        ],
    )


def all_traces(props: PropositionSet, max_len: int):
    """Every trace of length 1..max_len over the proposition set."""
    cells = list(itertools.product((False, True), repeat=props.n_prop))
    for n in range(1, max_len + 1):
        for steps in itertools.product(cells, repeat=n):
            yield Trace(props, steps)
