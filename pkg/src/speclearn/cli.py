"""Command-line entry points: benchmark sweeps, single protocol runs,
and the interactive session service."""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .experiments import PROTOCOLS, ProtocolConfig, run_protocol, sweep
from .inference import InferenceConfig
from .planner import PlannerConfig


def _parse_n_query(text: str) -> tuple[int, ...]:
    """Accepts "1..6", "1,3,6", or "4"."""
    if ".." in text:
        lo, hi = text.split("..", 1)
        return tuple(range(int(lo), int(hi) + 1))
    return tuple(int(part) for part in text.split(","))


def _load_config_file(path: str) -> dict:
    data = Path(path).read_bytes()
    if path.endswith(".toml"):
        try:
            import tomllib
        except ImportError:  # tomllib is stdlib from 3.11
            raise SystemExit("TOML config files need Python >= 3.11; use JSON")
        return tomllib.loads(data.decode())
    return json.loads(data)


def _merge_config(cls, file_section: dict, args: argparse.Namespace, mapping: dict):
    """File values first, then explicit CLI flags on top."""
    values = dict(file_section)
    for flag, field in mapping.items():
        got = getattr(args, flag)
        if got is not None:
            values[field] = got
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(values) - known
    if unknown:
        raise SystemExit(f"unknown {cls.__name__} options: {sorted(unknown)}")
    return cls(**values)


def _add_shared_flags(parser: argparse.ArgumentParser):
    parser.add_argument("--config", help="JSON or TOML file with inference/planner sections")
    inf = parser.add_argument_group("inference")
    inf.add_argument("--epsilon", type=float, help="likelihood floor for label disagreements")
    inf.add_argument("--samples", type=int, help="MCMC samples per chain")
    inf.add_argument("--burn-in", type=int, dest="burn_in")
    inf.add_argument("--inclusion-prior", type=float, dest="inclusion_prior")
    inf.add_argument("--support-k", type=int, dest="support_k")
    inf.add_argument("--chains", type=int)
    pl = parser.add_argument_group("planner")
    pl.add_argument("--alpha", type=float, help="Q-learning step size")
    pl.add_argument("--gamma", type=float)
    pl.add_argument("--episodes", type=int)
    pl.add_argument("--epsilon-greedy", type=float, dest="epsilon_greedy")
    pl.add_argument("--method", choices=["vi", "q"], help="planning backend")
    parser.add_argument("--state-cap", type=int, dest="state_cap", default=100_000)


_INFERENCE_FLAGS = {
    "epsilon": "epsilon",
    "samples": "mcmc_samples",
    "burn_in": "burn_in",
    "inclusion_prior": "inclusion_prior",
    "support_k": "support_k",
    "chains": "chains",
}
_PLANNER_FLAGS = {
    "alpha": "alpha",
    "gamma": "gamma",
    "episodes": "episodes",
    "epsilon_greedy": "epsilon_greedy",
    "method": "method",
}


def _configs(args) -> tuple[InferenceConfig, PlannerConfig]:
    file_cfg = _load_config_file(args.config) if args.config else {}
    inference = _merge_config(
        InferenceConfig, file_cfg.get("inference", {}), args, _INFERENCE_FLAGS
    )
    planner = _merge_config(
        PlannerConfig, file_cfg.get("planner", {}), args, _PLANNER_FLAGS
    )
    return inference, planner


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="experiment",
        description="Interactive specification-learning experiments and service",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sweep = sub.add_parser("sweep", help="run the protocol benchmark grid")
    p_sweep.add_argument("--protocols", default="active,random,batch")
    p_sweep.add_argument("--n-query", default="1..6", dest="n_query")
    p_sweep.add_argument("--runs", type=int, default=30)
    p_sweep.add_argument("--domain", default="synthetic")
    p_sweep.add_argument("--seed", type=int, default=7)
    p_sweep.add_argument("--out", default="results")
    p_sweep.add_argument("--jobs", type=int, default=1)
    _add_shared_flags(p_sweep)

    p_run = sub.add_parser("run", help="one protocol run, record on stdout")
    p_run.add_argument("--protocol", choices=PROTOCOLS, required=True)
    p_run.add_argument("--n-query", type=int, default=3, dest="n_query")
    p_run.add_argument("--domain", default="synthetic")
    p_run.add_argument("--run-id", type=int, default=0, dest="run_id")
    p_run.add_argument("--seed", type=int, default=7)
    _add_shared_flags(p_run)

    p_serve = sub.add_parser("serve", help="serve the interactive session API")
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8000)
    p_serve.add_argument("--data-dir", default=None, dest="data_dir")
    p_serve.add_argument("--ui", default=None, help="directory with built frontend assets")

    args = parser.parse_args(argv)

    if args.command == "sweep":
        inference, planner = _configs(args)
        protocols = tuple(args.protocols.split(","))
        unknown = set(protocols) - set(PROTOCOLS)
        if unknown:
            raise SystemExit(f"unknown protocols: {sorted(unknown)}")
        rows = sweep(
            protocols=protocols,
            n_query_values=_parse_n_query(args.n_query),
            runs=args.runs,
            domain=args.domain,
            master_seed=args.seed,
            out_dir=args.out,
            inference=inference,
            planner=planner,
            state_cap=args.state_cap,
            jobs=args.jobs,
        )
        for row in rows:
            print(
                f"{row['cell']}: mean entropy {row['mean_entropy']:.3f} "
                f"[{row['entropy_ci_lo']:.3f}, {row['entropy_ci_hi']:.3f}], "
                f"median similarity {row['median_similarity']:.3f} "
                f"[{row['similarity_ci_lo']:.3f}, {row['similarity_ci_hi']:.3f}]"
            )
        return 0

    if args.command == "run":
        inference, planner = _configs(args)
        cfg = ProtocolConfig(
            protocol=args.protocol,
            n_query=args.n_query,
            domain=args.domain,
            inference=inference,
            planner=planner,
            state_cap=args.state_cap,
        )
        record = run_protocol(cfg, run_id=args.run_id, master_seed=args.seed)
        json.dump(record.to_json_dict(), sys.stdout, indent=2)
        print()
        return 0

    # serve
    import uvicorn

    from .service import create_app

    app = create_app(data_dir=args.data_dir, ui_dir=args.ui)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


if __name__ == "__main__":
    sys.exit(main())
