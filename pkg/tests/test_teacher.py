import random

import pytest

from speclearn.domains import (
    build_named_domain,
    dinner_domain,
    sample_ground_truth,
)
from speclearn.ltl import evaluate
from speclearn.teacher import DemonstrationError, SimTeacher

from .conftest import trace_of


@pytest.fixture(scope="module")
def strict_teacher(phi_strict):
    from speclearn.domains import GroundTruthSpec

    return SimTeacher(GroundTruthSpec(phi_strict), dinner_domain(), rng_seed=11)


class TestDemonstrate:
    def test_demos_satisfy_ground_truth(self, strict_teacher):
        for demo in strict_teacher.demonstrate(5):
            assert demo.label == 1
            assert evaluate(
                strict_teacher.ground_truth.formula.to_formula(), demo.trace, 0
            )

    def test_demos_respect_order_and_threat(self, strict_teacher, dinner_props):
        fork = dinner_props.index("Fork")
        bowl = dinner_props.index("Bowl")
        plate = dinner_props.index("Plate")
        for demo in strict_teacher.demonstrate(5):
            assert all(not step[fork] for step in demo.trace.steps)
            first_bowl = next(i for i, s in enumerate(demo.trace.steps) if s[bowl])
            first_plate = next(i for i, s in enumerate(demo.trace.steps) if s[plate])
            assert first_plate < first_bowl

    def test_reproducible_pair(self, phi_strict):
        from speclearn.domains import GroundTruthSpec

        t1 = SimTeacher(GroundTruthSpec(phi_strict), dinner_domain(), rng_seed=4)
        t2 = SimTeacher(GroundTruthSpec(phi_strict), dinner_domain(), rng_seed=4)
        assert t1.demonstrate(2) == t2.demonstrate(2)

    def test_start_index_extends_batch(self, strict_teacher):
        first_two = strict_teacher.demonstrate(2)
        extended = strict_teacher.demonstrate(4)
        assert extended[:2] == first_two
        assert strict_teacher.demonstrate(2, start_index=2) == extended[2:]

    def test_sampled_ground_truths_all_demonstrable(self):
        """Planning-based satisfiability check over many sampled formulas."""
        env, universe = build_named_domain("synthetic")
        for seed in range(25):
            gt = sample_ground_truth(universe, random.Random(seed))
            teacher = SimTeacher(gt, env, rng_seed=seed)
            (demo,) = teacher.demonstrate(1)
            assert teacher.assess(demo.trace) == 1

    def test_unsatisfiable_ground_truth_rejected(self, dinner_props):
        from speclearn.domains import GroundTruthSpec
        from speclearn.ltl import Atom, Eventually, Globally, Not, TemplateFormula

        impossible = TemplateFormula(
            global_clauses=frozenset({Globally(Not(Atom(1)))}),
            eventual_clauses=frozenset({Eventually(Atom(1))}),
        )
        with pytest.raises(DemonstrationError):
            SimTeacher(GroundTruthSpec(impossible), dinner_domain(), rng_seed=0)


class TestAssess:
    def test_strict_rejects_bowl_only(self, strict_teacher, dinner_props):
        assert strict_teacher.assess(trace_of(dinner_props, ["Bowl"])) == 0

    def test_loose_accepts_bowl_only(self, phi_loose, dinner_props):
        from speclearn.domains import GroundTruthSpec

        teacher = SimTeacher(GroundTruthSpec(phi_loose), dinner_domain(), rng_seed=0)
        assert teacher.assess(trace_of(dinner_props, ["Bowl"])) == 1

    def test_pure_function_of_inputs(self, strict_teacher, dinner_props):
        tr = trace_of(dinner_props, ["Plate"], ["Plate", "Bowl"])
        assert strict_teacher.assess(tr) == strict_teacher.assess(tr) == 1
