import json
import random
from collections import Counter
from statistics import mean

import pytest

from speclearn.belief import Belief
from speclearn.domains import GroundTruthSpec, dinner_domain
from speclearn.experiments import (
    ProtocolConfig,
    RunRecord,
    bootstrap_ci,
    random_query,
    run_active,
    run_batch,
    run_protocol,
    run_random,
    sweep,
)
from speclearn.inference import Dataset, InferenceConfig, LabeledTrace, infer_posterior
from speclearn.machine import compile_belief, select_query
from speclearn.planner import PlannerConfig, ProductMDP, plan, rollout

FAST_INFERENCE = InferenceConfig(mcmc_samples=4_000, burn_in=400)

DINNER3_CLAUSES = ("(G (not Fork))", "(F Bowl)", "(U (not Bowl) Plate)")


def fast_cfg(protocol, n_query, domain="dinner3", **kw):
    return ProtocolConfig(
        protocol=protocol,
        n_query=n_query,
        domain=domain,
        inference=FAST_INFERENCE,
        **kw,
    )


class TestWorkedExampleLoop:
    """One active round starting from the two-formula dinner belief."""

    @pytest.fixture
    def setup(self, dinner_props, phi_strict, phi_loose):
        belief = Belief(dinner_props, (phi_strict, phi_loose), (0.3, 0.7))
        env = dinner_domain()
        machine = compile_belief(belief)
        target = select_query(machine)
        product = ProductMDP(env, machine, "shaped", target)
        policy = plan(product, PlannerConfig(), 0)
        query = rollout(product, policy, rng_seed=0)
        return belief, query

    def test_query_is_bowl_only(self, setup, dinner_props):
        _, query = setup
        assert query.steps == (dinner_props.assignment(["Bowl"]),)

    def test_acceptable_label_shifts_mass_to_loose_formula(
        self, setup, phi_loose, dinner_props
    ):
        belief, query = setup
        posterior = infer_posterior(
            belief, Dataset((LabeledTrace(query, 1),)), InferenceConfig()
        )
        mass = {f.clauses(): p for f, p in zip(posterior.support, posterior.probs)}
        assert mass[phi_loose.clauses()] > 0.99

    def test_unacceptable_label_shifts_mass_to_strict_formula(
        self, setup, phi_strict, dinner_props
    ):
        belief, query = setup
        posterior = infer_posterior(
            belief, Dataset((LabeledTrace(query, 0),)), InferenceConfig()
        )
        mass = {f.clauses(): p for f, p in zip(posterior.support, posterior.probs)}
        assert mass[phi_strict.clauses()] > 0.9


class TestRunProtocols:
    def test_active_records_shape(self, phi_strict):
        cfg = fast_cfg("active", 2, clauses=DINNER3_CLAUSES)
        rec = run_active(cfg, run_id=0, master_seed=5, ground_truth=GroundTruthSpec(phi_strict))
        assert len(rec.entropy_by_round) == 3
        assert len(rec.similarity_by_round) == 3
        assert rec.executions_by_round == [2, 3, 4]
        assert rec.protocol == "active"

    def test_budget_parity_across_protocols(self, phi_strict):
        gt = GroundTruthSpec(phi_strict)
        for runner in (run_active, run_random, run_batch):
            cfg = fast_cfg(
                {run_active: "active", run_random: "random", run_batch: "batch"}[runner],
                3,
                clauses=DINNER3_CLAUSES,
            )
            rec = runner(cfg, run_id=1, master_seed=5, ground_truth=gt)
            assert rec.executions_by_round[-1] == 2 + 3

    def test_zero_queries_degenerates_to_batch(self, phi_strict):
        gt = GroundTruthSpec(phi_strict)
        a = run_active(fast_cfg("active", 0, clauses=DINNER3_CLAUSES), 0, 9, gt)
        b = run_batch(fast_cfg("batch", 0, clauses=DINNER3_CLAUSES), 0, 9, gt)
        assert a.entropy_by_round == b.entropy_by_round
        assert a.similarity_by_round == b.similarity_by_round
        assert a.final_belief == b.final_belief

    def test_fixed_seed_reproducible(self, phi_strict):
        gt = GroundTruthSpec(phi_strict)
        cfg = fast_cfg("active", 2, clauses=DINNER3_CLAUSES)
        r1 = run_active(cfg, 3, 11, gt)
        r2 = run_active(cfg, 3, 11, gt)
        d1, d2 = r1.to_json_dict(), r2.to_json_dict()
        d1.pop("wall_time_s"), d2.pop("wall_time_s")
        assert d1 == d2

    def test_protocols_share_ground_truth_and_demo_metrics(self):
        recs = {
            pr: run_protocol(fast_cfg(pr, 1, domain="dinner3"), 2, 13)
            for pr in ("active", "random", "batch")
        }
        texts = {rec.ground_truth for rec in recs.values()}
        assert len(texts) == 1
        round0 = {rec.entropy_by_round[0] for rec in recs.values()}
        assert len(round0) == 1

    def test_run_record_json_round_trip(self, phi_strict):
        cfg = fast_cfg("random", 1, clauses=DINNER3_CLAUSES)
        rec = run_random(cfg, 0, 17, GroundTruthSpec(phi_strict))
        again = RunRecord.from_json_dict(json.loads(json.dumps(rec.to_json_dict())))
        assert again == rec


class TestRandomQueries:
    def test_first_actions_roughly_uniform(self):
        env = dinner_domain()
        counts = Counter()
        for seed in range(300):
            tr = random_query(env, random.Random(seed))
            placed = [i for i, v in enumerate(tr.steps[0]) if v]
            counts[placed[0]] += 1
        assert set(counts) == {0, 1, 2}
        assert all(70 <= c <= 130 for c in counts.values())

    def test_labels_come_from_ground_truth(self, phi_loose):
        gt = GroundTruthSpec(phi_loose)
        cfg = fast_cfg("random", 3, clauses=DINNER3_CLAUSES)
        rec = run_random(cfg, 0, 23, gt)
        assert rec.executions_by_round == [2, 3, 4, 5]


class TestSweep:
    @pytest.fixture
    def results(self, tmp_path):
        rows = sweep(
            protocols=("active", "random", "batch"),
            n_query_values=(1,),
            runs=2,
            domain="dinner3",
            master_seed=31,
            out_dir=tmp_path,
            inference=FAST_INFERENCE,
            jobs=1,
        )
        return rows, tmp_path

    def test_outputs_exist(self, results):
        rows, out = results
        assert (out / "raw.jsonl").exists()
        assert (out / "summary.csv").exists()
        assert (out / "plot.json").exists()
        raw = (out / "raw.jsonl").read_text().strip().splitlines()
        assert len(raw) == 3 * 2

    def test_summary_columns(self, results):
        rows, _ = results
        assert {r["protocol"] for r in rows} == {"active", "random", "batch"}
        for row in rows:
            assert set(row) == {
                "cell",
                "protocol",
                "n_query",
                "total_executions",
                "n_runs",
                "mean_entropy",
                "entropy_ci_lo",
                "entropy_ci_hi",
                "median_similarity",
                "similarity_ci_lo",
                "similarity_ci_hi",
            }
            assert row["entropy_ci_lo"] <= row["mean_entropy"] <= row["entropy_ci_hi"]

    def test_deterministic_modulo_wall_time(self, results, tmp_path):
        _, first_dir = results
        second_dir = tmp_path / "again"
        sweep(
            protocols=("active", "random", "batch"),
            n_query_values=(1,),
            runs=2,
            domain="dinner3",
            master_seed=31,
            out_dir=second_dir,
            inference=FAST_INFERENCE,
            jobs=2,
        )

        def stripped(path):
            out = []
            for line in (path / "raw.jsonl").read_text().splitlines():
                doc = json.loads(line)
                doc.pop("wall_time_s")
                out.append(doc)
            return out

        assert stripped(first_dir) == stripped(second_dir)

    def test_plot_data_shape(self, results):
        _, out = results
        doc = json.loads((out / "plot.json").read_text())
        assert doc["failures"] == 0
        for cell in doc["cells"]:
            assert len(cell["final_entropy"]) == 2
            assert cell["total_executions"] == cell["n_query"] + 2


class TestBootstrap:
    def test_constant_column_zero_width(self):
        lo, hi = bootstrap_ci([0.5, 0.5, 0.5], mean, 200, random.Random(0))
        assert lo == hi == 0.5

    def test_interval_brackets_statistic(self):
        rng = random.Random(1)
        values = [rng.random() for _ in range(50)]
        lo, hi = bootstrap_ci(values, mean, 500, random.Random(2))
        assert lo <= mean(values) <= hi
        assert hi - lo < 0.25
