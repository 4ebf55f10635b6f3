"""Benchmark harness for the three training protocols.

Per run: a ground truth is sampled, the simulated teacher provides two
demonstrations, and then the protocol spends ``n_query`` additional task
executions - learner-planned uncertainty queries (*active*), uniformly
random executions labeled by the teacher (*random*), or further
satisfying demonstrations (*batch*).  Every protocol therefore consumes
exactly ``n_demos_initial + n_query`` labeled executions.  Belief
entropy and similarity to the ground truth are recorded after the
initial demonstrations and after every subsequent execution.

Runs are reproducible: every stochastic component draws its seed from
the master seed plus a structural key, and protocols sharing a
(domain, n_query, run) cell share the ground truth, teacher, and
initial demonstrations.
"""

from __future__ import annotations

import csv
import json
import random
import sys
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from statistics import mean, median

from .belief import belief_similarity, entropy
from .domains import (
    GroundTruthSpec,
    build_named_domain,
    restricted_universe,
    sample_ground_truth,
)
from .inference import Dataset, InferenceConfig, LabeledTrace, infer_posterior
from .machine import compile_belief, select_query
from .planner import (
    PlannerConfig,
    ProductMDP,
    plan,
    reachable_machine_states,
    rollout,
)
from .ltl import Trace
from .seeds import derive_seed
from .teacher import SimTeacher

__all__ = [
    "ProtocolConfig",
    "RunRecord",
    "run_active",
    "run_random",
    "run_batch",
    "run_protocol",
    "random_query",
    "sweep",
]

PROTOCOLS = ("active", "random", "batch")


@dataclass(frozen=True)
class ProtocolConfig:
    protocol: str
    n_query: int
    domain: str = "synthetic"
    n_demos_initial: int = 2
    inference: InferenceConfig = field(default_factory=InferenceConfig)
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    state_cap: int = 100_000
    # optional clause-universe restriction (formula strings); None = the
    # domain's full universe
    clauses: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.protocol not in PROTOCOLS:
            raise ValueError(f"unknown protocol {self.protocol!r}")
        if self.n_query < 0:
            raise ValueError("n_query must be >= 0")
        if self.n_demos_initial < 1:
            raise ValueError("need at least one initial demonstration")


@dataclass
class RunRecord:
    run_id: int
    protocol: str
    domain: str
    n_query: int
    master_seed: int
    ground_truth: str
    entropy_by_round: list[float]
    similarity_by_round: list[float]
    executions_by_round: list[int]
    final_belief: dict
    wall_time_s: float

    def to_json_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "protocol": self.protocol,
            "domain": self.domain,
            "n_query": self.n_query,
            "total_executions": self.executions_by_round[-1],
            "master_seed": self.master_seed,
            "ground_truth": self.ground_truth,
            "entropy_by_round": self.entropy_by_round,
            "similarity_by_round": self.similarity_by_round,
            "executions_by_round": self.executions_by_round,
            "final_belief": self.final_belief,
            "wall_time_s": self.wall_time_s,
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "RunRecord":
        return cls(
            run_id=doc["run_id"],
            protocol=doc["protocol"],
            domain=doc["domain"],
            n_query=doc["n_query"],
            master_seed=doc["master_seed"],
            ground_truth=doc["ground_truth"],
            entropy_by_round=list(doc["entropy_by_round"]),
            similarity_by_round=list(doc["similarity_by_round"]),
            executions_by_round=list(doc["executions_by_round"]),
            final_belief=doc["final_belief"],
            wall_time_s=doc["wall_time_s"],
        )


def _trial_seed(cfg: ProtocolConfig, run_id: int, master_seed: int, *key) -> int:
    """Seed shared by all protocols of one (domain, n_query, run) trial."""
    return derive_seed(master_seed, cfg.domain, cfg.n_query, run_id, *key)


def _context(cfg, run_id, master_seed, ground_truth):
    env, universe = build_named_domain(cfg.domain)
    if cfg.clauses is not None:
        universe = restricted_universe(env.props, cfg.clauses)
    if ground_truth is None:
        rng = random.Random(_trial_seed(cfg, run_id, master_seed, "gt"))
        ground_truth = sample_ground_truth(universe, rng)
    teacher = SimTeacher(
        ground_truth, env, rng_seed=_trial_seed(cfg, run_id, master_seed, "teacher")
    )
    return env, universe, ground_truth, teacher


def _infer(universe, data, cfg, run_id, master_seed, round_index):
    # protocol-independent seed: protocols differ only through their data,
    # so a zero-query active run reproduces the batch posterior exactly
    seed = _trial_seed(cfg, run_id, master_seed, "infer", round_index)
    return infer_posterior(universe, data, cfg.inference.with_seed(seed))


class _Recorder:
    def __init__(self, ground_truth):
        self.ground_truth = ground_truth
        self.entropies: list[float] = []
        self.similarities: list[float] = []
        self.executions: list[int] = []

    def note(self, belief, n_executions: int):
        self.entropies.append(entropy(belief))
        self.similarities.append(belief_similarity(belief, self.ground_truth.formula))
        self.executions.append(n_executions)


def _finish(cfg, run_id, master_seed, gt, env, rec, belief, started) -> RunRecord:
    assert rec.executions[-1] == cfg.n_demos_initial + cfg.n_query
    return RunRecord(
        run_id=run_id,
        protocol=cfg.protocol,
        domain=cfg.domain,
        n_query=cfg.n_query,
        master_seed=master_seed,
        ground_truth=gt.text(env.props),
        entropy_by_round=rec.entropies,
        similarity_by_round=rec.similarities,
        executions_by_round=rec.executions,
        final_belief=belief.to_json_dict(),
        wall_time_s=time.perf_counter() - started,
    )


def run_active(
    cfg: ProtocolConfig,
    run_id: int = 0,
    master_seed: int = 0,
    ground_truth: GroundTruthSpec | None = None,
) -> RunRecord:
    """Demonstrations, then learner-selected uncertainty-sampling queries."""
    started = time.perf_counter()
    env, universe, gt, teacher = _context(cfg, run_id, master_seed, ground_truth)
    seed_base = _trial_seed(cfg, run_id, master_seed, "active")
    data = Dataset(tuple(teacher.demonstrate(cfg.n_demos_initial)))
    belief = _infer(universe, data, cfg, run_id, master_seed, 0)
    rec = _Recorder(gt)
    rec.note(belief, len(data))
    for qi in range(1, cfg.n_query + 1):
        machine = compile_belief(belief, cfg.state_cap)
        scout = ProductMDP(env, machine, "min_regret")
        target = select_query(machine, candidates=reachable_machine_states(scout))
        product = ProductMDP(env, machine, "shaped", target)
        policy = plan(product, cfg.planner, derive_seed(seed_base, "plan", qi))
        # any optimal path reaches the selected terminal; randomizing the
        # tie-break varies incidental orderings between queries
        query = rollout(
            product,
            policy,
            rng_seed=derive_seed(seed_base, "roll", qi),
            tie_break="random",
        )
        data = data.extended(LabeledTrace(query, teacher.assess(query)))
        belief = _infer(universe, data, cfg, run_id, master_seed, qi)
        rec.note(belief, len(data))
    return _finish(cfg, run_id, master_seed, gt, env, rec, belief, started)


def random_query(env, rng: random.Random) -> Trace:
    """Execution from uniformly random actions, run to completion or horizon."""
    x = env.initial
    steps = []
    for _ in range(env.horizon):
        action = rng.randrange(len(env.actions))
        dist = env.transition(x, action)
        if len(dist) == 1:
            x = dist[0][1]
        else:
            draw = rng.random()
            acc = 0.0
            x = dist[-1][1]
            for p, cand in dist:
                acc += p
                if draw < acc:
                    x = cand
                    break
        steps.append(env.label(x))
        if env.complete(x):
            break
    while len(steps) > 1 and steps[-1] == steps[-2]:
        steps.pop()
    return Trace(env.props, tuple(steps))


def run_random(
    cfg: ProtocolConfig,
    run_id: int = 0,
    master_seed: int = 0,
    ground_truth: GroundTruthSpec | None = None,
) -> RunRecord:
    """As active, but queries come from uniformly sampled actions."""
    started = time.perf_counter()
    env, universe, gt, teacher = _context(cfg, run_id, master_seed, ground_truth)
    seed_base = _trial_seed(cfg, run_id, master_seed, "random")
    data = Dataset(tuple(teacher.demonstrate(cfg.n_demos_initial)))
    belief = _infer(universe, data, cfg, run_id, master_seed, 0)
    rec = _Recorder(gt)
    rec.note(belief, len(data))
    for qi in range(1, cfg.n_query + 1):
        rng = random.Random(derive_seed(seed_base, "query", qi))
        query = random_query(env, rng)
        data = data.extended(LabeledTrace(query, teacher.assess(query)))
        belief = _infer(universe, data, cfg, run_id, master_seed, qi)
        rec.note(belief, len(data))
    return _finish(cfg, run_id, master_seed, gt, env, rec, belief, started)


def run_batch(
    cfg: ProtocolConfig,
    run_id: int = 0,
    master_seed: int = 0,
    ground_truth: GroundTruthSpec | None = None,
) -> RunRecord:
    """Demonstrations only; extra executions are further satisfying demos."""
    started = time.perf_counter()
    env, universe, gt, teacher = _context(cfg, run_id, master_seed, ground_truth)
    data = Dataset(tuple(teacher.demonstrate(cfg.n_demos_initial)))
    belief = _infer(universe, data, cfg, run_id, master_seed, 0)
    rec = _Recorder(gt)
    rec.note(belief, len(data))
    for qi in range(1, cfg.n_query + 1):
        (extra,) = teacher.demonstrate(1, start_index=cfg.n_demos_initial + qi - 1)
        data = data.extended(extra)
        belief = _infer(universe, data, cfg, run_id, master_seed, qi)
        rec.note(belief, len(data))
    return _finish(cfg, run_id, master_seed, gt, env, rec, belief, started)


_RUNNERS = {"active": run_active, "random": run_random, "batch": run_batch}


def run_protocol(cfg: ProtocolConfig, run_id: int = 0, master_seed: int = 0,
                 ground_truth: GroundTruthSpec | None = None) -> RunRecord:
    return _RUNNERS[cfg.protocol](cfg, run_id, master_seed, ground_truth)


# -- sweep -------------------------------------------------------------------

def _run_cell(args):
    cfg, run_id, master_seed = args
    try:
        return (cfg.protocol, cfg.n_query, run_id), run_protocol(cfg, run_id, master_seed), None
    except Exception:
        return (cfg.protocol, cfg.n_query, run_id), None, traceback.format_exc()


def bootstrap_ci(values, stat, n_resamples: int, rng: random.Random):
    """Percentile bootstrap 95% interval for a statistic."""
    stats = sorted(
        stat([rng.choice(values) for _ in values]) for _ in range(n_resamples)
    )
    lo = stats[int(0.025 * (n_resamples - 1))]
    hi = stats[int(0.975 * (n_resamples - 1))]
    return lo, hi


def sweep(
    protocols=PROTOCOLS,
    n_query_values=(1, 2, 3, 4, 5, 6),
    runs: int = 30,
    domain: str = "synthetic",
    master_seed: int = 7,
    out_dir: str | Path = "results",
    inference: InferenceConfig | None = None,
    planner: PlannerConfig | None = None,
    state_cap: int = 100_000,
    jobs: int = 1,
    n_resamples: int = 1_000,
    log=sys.stderr,
):
    """Run the protocol grid and emit raw records, a summary table, and
    plot-ready aggregates.  Returns the summary rows."""
    inference = inference or InferenceConfig()
    planner = planner or PlannerConfig()
    tasks = [
        (
            ProtocolConfig(
                protocol=pr,
                n_query=nq,
                domain=domain,
                inference=inference,
                planner=planner,
                state_cap=state_cap,
            ),
            run_id,
            master_seed,
        )
        for nq in n_query_values
        for run_id in range(runs)
        for pr in protocols
    ]

    results: dict[tuple, RunRecord] = {}
    failures: list[tuple[tuple, str]] = []
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_run_cell, tasks, chunksize=1))
    else:
        outcomes = [_run_cell(t) for t in tasks]
    for key, record, error in outcomes:
        if error is None:
            results[key] = record
        else:
            failures.append((key, error))
            print(f"run failed (excluded): {key}\n{error}", file=log)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ordered = sorted(results, key=lambda k: (k[1], k[2], protocols.index(k[0])))
    with open(out / "raw.jsonl", "w") as fh:
        for key in ordered:
            fh.write(json.dumps(results[key].to_json_dict()) + "\n")

    rows = []
    for pr in protocols:
        for nq in n_query_values:
            finals = [
                results[(pr, nq, r)] for r in range(runs) if (pr, nq, r) in results
            ]
            if not finals:
                continue
            entropies = [rec.entropy_by_round[-1] for rec in finals]
            sims = [rec.similarity_by_round[-1] for rec in finals]
            ent_rng = random.Random(derive_seed(master_seed, "boot", pr, nq, "H"))
            sim_rng = random.Random(derive_seed(master_seed, "boot", pr, nq, "L"))
            ent_lo, ent_hi = bootstrap_ci(entropies, mean, n_resamples, ent_rng)
            sim_lo, sim_hi = bootstrap_ci(sims, median, n_resamples, sim_rng)
            rows.append(
                {
                    "cell": f"{pr}/q{nq}",
                    "protocol": pr,
                    "n_query": nq,
                    "total_executions": 2 + nq,
                    "n_runs": len(finals),
                    "mean_entropy": mean(entropies),
                    "entropy_ci_lo": ent_lo,
                    "entropy_ci_hi": ent_hi,
                    "median_similarity": median(sims),
                    "similarity_ci_lo": sim_lo,
                    "similarity_ci_hi": sim_hi,
                }
            )

    with open(out / "summary.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)

    plot_cells = []
    for pr in protocols:
        for nq in n_query_values:
            finals = [
                results[(pr, nq, r)] for r in range(runs) if (pr, nq, r) in results
            ]
            if not finals:
                continue
            plot_cells.append(
                {
                    "protocol": pr,
                    "n_query": nq,
                    "total_executions": 2 + nq,
                    "final_entropy": [rec.entropy_by_round[-1] for rec in finals],
                    "final_similarity": [rec.similarity_by_round[-1] for rec in finals],
                }
            )
    with open(out / "plot.json", "w") as fh:
        json.dump(
            {
                "domain": domain,
                "master_seed": master_seed,
                "runs": runs,
                "failures": len(failures),
                "cells": plot_cells,
            },
            fh,
            indent=2,
        )
    return rows
