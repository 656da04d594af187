"""``beepmis`` command line: generate, run, sweep, verify, smallcheck.

Settings come from built-in defaults, then the ``--config`` TOML file, then
command-line flags (later wins). Exit codes: 0 success, 1 verification
failure, 2 configuration or input error.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import BeepMISError
from .experiments import (
    ExperimentConfig,
    build_tasks,
    default_jobs,
    execute,
    family_spec,
    load_config,
    merge,
    run_sweep,
    runs_csv,
    summarize,
    summary_csv,
    verify_file,
)
from .graph import generate, write_edge_list
from .verifier import exhaustive_smallgraph_check

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _csv_list(text, conv=str):
    return [conv(x) for x in text.split(",") if x.strip()] if text else None


def _parse_fault(text):
    parts = text.split(":")
    if len(parts) < 2:
        raise argparse.ArgumentTypeError("fault must look like ROUND:FRACTION[:MODE[:LEVEL]]")
    fault = {"round": int(parts[0]), "fraction": float(parts[1])}
    if len(parts) > 2:
        fault["mode"] = parts[2]
    if len(parts) > 3:
        fault["level"] = int(parts[3])
    return fault


def _parse_config_spec(text):
    parts = text.split(":")
    spec = {"variant": parts[0]}
    if len(parts) > 1:
        spec["policy"] = parts[1]
    if len(parts) > 2:
        spec["c1"] = int(parts[2])
    return spec


def _add_graph_flags(p):
    p.add_argument("--family", help="PATH, CYCLE, CLIQUE, STAR, GNP, RANDOM_TREE, GRID, STAR_OF_CLIQUES")
    p.add_argument("--n", type=int)
    p.add_argument("--p", type=float, help="GNP edge probability")
    p.add_argument("--avg-degree", type=float, help="GNP: p = avg_degree / n (default 8)")
    p.add_argument("--k", type=int, help="STAR_OF_CLIQUES clique size")
    p.add_argument("--graph-seed", type=int)


def _graph_overrides(args):
    return {"family": args.family, "n": args.n, "p": args.p, "avg_degree": args.avg_degree,
            "k": args.k, "seed": args.graph_seed}


def _base(args):
    return load_config(args.config) if getattr(args, "config", None) else {}


def cmd_generate(args):
    cfg = merge(_base(args).get("graph", {}), _graph_overrides(args))
    if "family" not in cfg or "n" not in cfg:
        raise BeepMISError("CONFIG_INVALID", "generate needs --family and --n")
    g = generate(family_spec(cfg["family"], cfg["n"], cfg.get("seed", 0), cfg.get("p"),
                             cfg.get("avg_degree"), cfg.get("k", 8)))
    if args.out:
        try:
            write_edge_list(g, args.out)
        except OSError as exc:
            raise BeepMISError("IO", str(exc)) from None
    else:
        sys.stdout.write(g.to_edge_list())
    return EXIT_OK


def cmd_run(args):
    over = {
        "graph": merge(_graph_overrides(args), {"file": args.graph_file}),
        "protocol": {"variant": args.variant, "policy": args.policy, "c1": args.c1},
        "run": {"init": args.init, "seed": args.seed, "max_rounds": args.max_rounds},
        "trace": {"path": args.trace, "levels": args.trace_levels, "events": args.trace_events,
                  "diagnostics": args.trace_diagnostics},
        "output": {"result": args.out},
    }
    cfg = merge(_base(args), over)
    if args.fault:
        cfg["faults"] = args.fault
    if args.graph_file:
        cfg["graph"] = {"file": args.graph_file}
    exp = ExperimentConfig.from_dict(cfg)
    try:
        res = execute(exp)
    except OSError as exc:
        raise BeepMISError("IO", str(exc)) from None
    summary = {k: v for k, v in res.to_dict().items() if k not in ("final_levels", "lmax", "diagnostics")}
    summary["mis_size"] = len(summary.pop("mis"))
    print(json.dumps(summary))
    return EXIT_OK if res.stabilized and res.verified else EXIT_FAIL


def cmd_sweep(args):
    cfg = _base(args)
    sweep = merge(cfg.get("sweep", {}), {
        "families": _csv_list(args.families),
        "sizes": _csv_list(args.sizes, int),
        "seeds": args.seeds,
        "base_seed": args.base_seed,
        "configs": [_parse_config_spec(c) for c in args.configs.split(",")] if args.configs else None,
        "init": args.init,
        "max_rounds": args.max_rounds,
        "faults": args.fault,
    })
    graph_defaults = merge(cfg.get("graph", {}), {"p": args.p, "avg_degree": args.avg_degree, "k": args.k})
    out = merge(cfg.get("output", {}), {"runs_csv": args.out_runs, "summary_csv": args.out_summary})
    jobs = args.jobs or int(sweep.get("jobs", 0)) or default_jobs()
    tasks = build_tasks(sweep, graph_defaults)
    rows = run_sweep(tasks, jobs)
    text = runs_csv(rows)
    summary = summary_csv(summarize(rows))
    try:
        if out.get("runs_csv"):
            Path(out["runs_csv"]).write_text(text)
        else:
            sys.stdout.write(text)
        if out.get("summary_csv"):
            Path(out["summary_csv"]).write_text(summary)
        else:
            sys.stderr.write(summary)
    except OSError as exc:
        raise BeepMISError("IO", str(exc)) from None
    failed = [r for r in rows if r["stabilized"] != "true"]
    return EXIT_OK if not failed else EXIT_FAIL


def cmd_verify(args):
    verdict = verify_file(args.file, audit=args.audit, samples=args.samples,
                          closure_rounds=args.closure_rounds)
    for line in verdict.lines:
        print(line)
    print("PASS" if verdict.ok else "FAIL")
    return EXIT_OK if verdict.ok else EXIT_FAIL


def cmd_smallcheck(args):
    report = exhaustive_smallgraph_check(args.variant, args.lmax_cap, args.n_cap, seeds=args.seeds,
                                         round_bound=args.round_bound, lmax_mode=args.lmax_mode)
    text = json.dumps(report, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        print(text)
    return EXIT_OK if report["passed"] else EXIT_FAIL


def build_parser():
    parser = argparse.ArgumentParser(prog="beepmis", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a generated graph as an edge list")
    p.add_argument("--config")
    _add_graph_flags(p)
    p.add_argument("-o", "--out")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("run", help="single run until stabilization")
    p.add_argument("--config")
    _add_graph_flags(p)
    p.add_argument("--graph-file")
    p.add_argument("--variant")
    p.add_argument("--policy")
    p.add_argument("--c1", type=int)
    p.add_argument("--init")
    p.add_argument("--seed", type=int)
    p.add_argument("--max-rounds", type=int)
    p.add_argument("--fault", action="append", type=_parse_fault, help="ROUND:FRACTION[:MODE[:LEVEL]]")
    p.add_argument("--trace", help="JSON-lines trace output path")
    p.add_argument("--trace-levels", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--trace-events", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--trace-diagnostics", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("-o", "--out", help="result JSON output path")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="Monte-Carlo sweep over families x sizes x configs x seeds")
    p.add_argument("--config")
    p.add_argument("--families")
    p.add_argument("--sizes")
    p.add_argument("--seeds", type=int)
    p.add_argument("--base-seed", type=int)
    p.add_argument("--configs", help="comma list of VARIANT:POLICY:C1")
    p.add_argument("--init")
    p.add_argument("--max-rounds", type=int)
    p.add_argument("--fault", action="append", type=_parse_fault)
    p.add_argument("--p", type=float)
    p.add_argument("--avg-degree", type=float)
    p.add_argument("--k", type=int)
    p.add_argument("--jobs", type=int, help="parallel workers (default $BEEPMIS_JOBS or 1)")
    p.add_argument("--out-runs")
    p.add_argument("--out-summary")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("verify", help="re-check a result JSON or a trace file")
    p.add_argument("file")
    p.add_argument("--audit", choices=["auto", "on", "off"], default="auto")
    p.add_argument("--samples", type=int, default=200)
    p.add_argument("--closure-rounds", type=int, default=0)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("smallcheck", help="exhaustive small-graph oracle check")
    p.add_argument("--variant", default="V1")
    p.add_argument("--lmax-cap", type=int, default=3)
    p.add_argument("--n-cap", type=int, default=4)
    p.add_argument("--seeds", type=int, default=100)
    p.add_argument("--round-bound", type=int)
    p.add_argument("--lmax-mode", choices=["uniform", "all"], default="uniform")
    p.add_argument("-o", "--out")
    p.set_defaults(func=cmd_smallcheck)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except BeepMISError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
