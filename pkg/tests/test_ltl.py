import itertools

import pytest
from hypothesis import given, settings

from speclearn.ltl import (
    And,
    Atom,
    Eventually,
    FALSE,
    Globally,
    Next,
    Not,
    Or,
    ParseError,
    PropositionSet,
    TRUE,
    TemplateFormula,
    Trace,
    Until,
    canon,
    evaluate,
    format_formula,
    holds_on_empty,
    is_safe,
    parse,
    progress,
    progress_trace,
    similarity,
    template_from_formula,
)

from .conftest import trace_of
from .strategies import PROPS3, assignments, formulas, template_formulas, traces


class TestParse:
    def test_worked_example_conjunction(self, dinner_props):
        f = parse("(and (G (not Fork)) (F Bowl))", dinner_props)
        fork, bowl = Atom(0), Atom(1)
        assert f == And((Globally(Not(fork)), Eventually(bowl)))

    def test_worked_example_until(self, dinner_props):
        f = parse("(U (not Bowl) Plate)", dinner_props)
        assert f == Until(Not(Atom(1)), Atom(2))

    def test_literals(self, dinner_props):
        assert parse("true", dinner_props) == TRUE
        assert parse("false", dinner_props) == FALSE

    def test_unknown_proposition(self, dinner_props):
        with pytest.raises(ParseError, match="unknown proposition 'Cup'"):
            parse("(F Cup)", dinner_props)

    def test_syntax_error_reports_position(self, dinner_props):
        with pytest.raises(ParseError) as err:
            parse("(and Fork", dinner_props)
        assert err.value.position == 9

    def test_trailing_input_rejected(self, dinner_props):
        with pytest.raises(ParseError, match="trailing"):
            parse("true false", dinner_props)

    @given(formulas())
    def test_print_parse_round_trip(self, f):
        text = format_formula(f, PROPS3)
        assert parse(text, PROPS3) == f

    @given(formulas())
    def test_print_is_identity_on_canonical_strings(self, f):
        text = format_formula(canon(f), PROPS3)
        assert format_formula(parse(text, PROPS3), PROPS3) == text


class TestEvaluate:
    def test_eventually(self, dinner_props):
        tr = trace_of(dinner_props, [], ["Bowl"])
        assert evaluate(Eventually(Atom(1)), tr, 0) is True

    def test_globally_violated_first_step(self, dinner_props):
        tr = trace_of(dinner_props, ["Fork"])
        assert evaluate(Globally(Not(Atom(0))), tr, 0) is False

    def test_until_discharged_second_step(self, dinner_props):
        tr = trace_of(dinner_props, [], ["Plate"])
        assert evaluate(Until(Not(Atom(1)), Atom(2)), tr, 0) is True

    def test_index_out_of_range(self, dinner_props):
        tr = trace_of(dinner_props, [])
        with pytest.raises(IndexError):
            evaluate(TRUE, tr, 1)

    def test_next_false_at_final_step(self, dinner_props):
        tr = trace_of(dinner_props, ["Bowl"])
        assert evaluate(Next(TRUE), tr, 0) is False


class TestProgress:
    def test_eventually_discharged(self, dinner_props):
        a = dinner_props.assignment(["Bowl"])
        assert progress(Eventually(Atom(1)), a) == TRUE

    def test_globally_carries_forward(self, dinner_props):
        a = dinner_props.assignment([])
        g = Globally(Not(Atom(0)))
        assert progress(g, a) == g

    def test_until_fails_when_both_disjuncts_fail(self, dinner_props):
        a = dinner_props.assignment(["Bowl"])
        assert progress(Until(Not(Atom(1)), Atom(2)), a) == FALSE

    def test_atom(self, dinner_props):
        assert progress(Atom(1), dinner_props.assignment(["Bowl"])) == TRUE
        assert progress(Atom(1), dinner_props.assignment([])) == FALSE

    @given(assignments())
    def test_constants_fixed(self, a):
        assert progress(TRUE, a) == TRUE
        assert progress(FALSE, a) == FALSE

    @given(formulas(), traces(min_len=2, max_len=4))
    @settings(max_examples=300)
    def test_progression_identity_on_nonempty_tails(self, f, tr):
        """a . rest satisfies f  iff  rest satisfies progress(f, a)."""
        tail = Trace(tr.props, tr.steps[1:])
        assert evaluate(f, tr, 0) == evaluate(progress(f, tr.steps[0]), tail, 0)

    @given(template_formulas(), traces(max_len=4))
    @settings(max_examples=300)
    def test_progression_through_whole_trace_matches_semantics(self, tf, tr):
        residual = progress_trace(tf.to_formula(), tr)
        assert holds_on_empty(residual) == evaluate(tf.to_formula(), tr, 0)

    def test_keystone_exhaustive_small(self, phi_strict, phi_loose, dinner_props):
        """Iterated progression agrees with brute-force evaluation on every
        trace of length <= 3 over the three dinner propositions."""
        formulas_under_test = [phi_strict.to_formula(), phi_loose.to_formula()]
        cells = list(itertools.product((False, True), repeat=3))
        for f in formulas_under_test:
            for n in (1, 2, 3):
                for steps in itertools.product(cells, repeat=n):
                    tr = Trace(dinner_props, steps)
                    assert holds_on_empty(progress_trace(f, tr)) == evaluate(f, tr, 0)


class TestCanon:
    @given(formulas())
    def test_idempotent(self, f):
        assert canon(canon(f)) == canon(f)

    @given(formulas(), traces(max_len=4))
    @settings(max_examples=300)
    def test_preserves_evaluation(self, f, tr):
        assert evaluate(canon(f), tr, 0) == evaluate(f, tr, 0)

    def test_flatten_sort_dedupe(self):
        f = And((And((Atom(2), Atom(0))), Atom(0), TRUE))
        assert canon(f) == And((Atom(0), Atom(2)))

    def test_boolean_folds(self):
        assert canon(Not(Not(Atom(0)))) == Atom(0)
        assert canon(Not(TRUE)) == FALSE
        assert canon(Or((FALSE, Atom(1)))) == Atom(1)
        assert canon(And((TRUE, Atom(1)))) == Atom(1)


class TestSafety:
    def test_globally_clause_is_safe(self):
        assert is_safe(Globally(Not(Atom(0)))) is True

    def test_eventually_is_not(self):
        assert is_safe(Eventually(Atom(1))) is False

    def test_constants(self):
        assert is_safe(TRUE) is True

    def test_negated_eventually_is_safe(self):
        assert is_safe(Not(Eventually(Atom(0)))) is True

    def test_conjunction_mixed(self):
        f = And((Globally(Not(Atom(0))), Eventually(Atom(1))))
        assert is_safe(f) is False


class TestTemplate:
    def test_clause_counts(self, phi_strict, phi_loose):
        assert len(phi_strict.clauses()) == 3
        assert len(phi_loose.clauses()) == 2
        assert TemplateFormula().clauses() == frozenset()

    def test_empty_template_induces_true(self):
        assert TemplateFormula().to_formula() == TRUE

    def test_round_trip_through_formula(self, phi_strict):
        again = template_from_formula(phi_strict.to_formula())
        assert again.clauses() == phi_strict.clauses()

    def test_similarity_worked_example(self, phi_strict, phi_loose):
        assert similarity(phi_strict, phi_loose) == pytest.approx(2 / 3)

    def test_similarity_identical(self, phi_strict):
        assert similarity(phi_strict, phi_strict) == 1.0

    def test_similarity_disjoint(self):
        t1 = TemplateFormula(eventual_clauses=frozenset({Eventually(Atom(0))}))
        t2 = TemplateFormula(eventual_clauses=frozenset({Eventually(Atom(1))}))
        assert similarity(t1, t2) == 0.0

    def test_similarity_both_empty(self):
        assert similarity(TemplateFormula(), TemplateFormula()) == 1.0

    @given(template_formulas(), template_formulas())
    def test_similarity_symmetric_bounded(self, t1, t2):
        s = similarity(t1, t2)
        assert 0.0 <= s <= 1.0
        assert s == similarity(t2, t1)
        assert similarity(t1, t1) == 1.0
