"""Command-line front end: embedding, support selection, simulation,
algorithm comparison, and bound checking as subcommands.

Exit code 0 means the requested computation completed (a failed bound
condition is still a completed computation); diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from collections import defaultdict

import numpy as np

from . import sim_harness
from .active_sensing import bound_report, enumerate_walks
from .errors import ConfigError, SearchBudgetError
from .fusion import SupportSet, global_summary, local_summary, write_support
from .gp_core import greedy_select
from .road_kernel import (
    KernelHyperparams,
    choose_embedding_dim,
    geodesic_distances,
    load_network,
    make_kernel,
    mds_embed,
    save_embedding,
)
from .sim_harness import (
    init_world,
    load_experiment_config,
    run_experiment,
    write_metrics,
    write_timings,
)


def _positive_int(text: str) -> int:
    value = int(text)
    if value <= 0:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _embedding_for(net, dim_arg: str):
    geo = geodesic_distances(net)
    if dim_arg == "auto":
        dim = choose_embedding_dim(geo)
    else:
        dim = int(dim_arg)
    return mds_embed(geo, dim)


def cmd_embed(args) -> int:
    net = load_network(args.network)
    embedding = _embedding_for(net, args.dim)
    save_embedding(embedding, args.out)
    print(f"segments={embedding.n} dim={embedding.dim} stress={embedding.stress:.6g}")
    return 0


def cmd_select_support(args) -> int:
    net = load_network(args.network)
    embedding = _embedding_for(net, args.dim)
    scales = args.length_scales or [1.0]
    if len(scales) == 1:
        scales = scales * embedding.dim
    hyper = KernelHyperparams(args.signal_variance, tuple(scales), args.noise_variance)
    kernel = make_kernel(embedding, hyper)
    if args.size > net.n_segments:
        raise ConfigError(f"cannot select {args.size} of {net.n_segments} segments")
    chosen = greedy_select(kernel, range(net.n_segments), args.size)
    write_support([net.ids[i] for i in chosen], args.out)
    print(f"selected={len(chosen)} of {net.n_segments}")
    return 0


def cmd_simulate(args) -> int:
    config = load_experiment_config(args.config)
    algorithms = None
    if args.algorithm:
        algorithms = sim_harness.ALGORITHMS if "all" in args.algorithm else tuple(args.algorithm)
    if args.workers is not None:
        config = dataclasses.replace(config, workers=args.workers)
    rows = run_experiment(config, algorithms)
    write_metrics(rows, args.out)
    if args.timings:
        write_timings(rows, args.timings)
    print(f"rows={len(rows)} out={args.out}")
    return 0


def cmd_compare(args) -> int:
    config = load_experiment_config(args.config)
    rows = run_experiment(config, sim_harness.ALGORITHMS)
    final: dict[str, list] = defaultdict(list)
    payload: dict[str, int] = defaultdict(int)
    by_cell: dict[tuple, sim_harness.MetricsRow] = {}
    for r in rows:
        payload[r.algorithm] += r.payload_scalars
        by_cell[(r.algorithm, r.n_sensors, r.walk_length, r.seed)] = r
    for (alg, *_), row in by_cell.items():
        final[alg].append(row.rmse)
    lines = ["algorithm,mean_final_rmse,total_payload_scalars"]
    for alg in sim_harness.ALGORITHMS:
        if final[alg]:
            lines.append(f"{alg},{np.mean(final[alg]):.12g},{payload[alg]}")
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    print(text, end="")
    return 0


def cmd_bound_check(args) -> int:
    with open(args.config, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    config = sim_harness.parse_experiment_config(doc)
    if len(config.n_sensors) != 1 or len(config.walk_length) != 1 or len(config.seeds) != 1:
        raise ConfigError("bound-check expects scalar K, L, and seed")
    cell = config.cell(config.n_sensors[0], config.walk_length[0], config.seeds[0])
    world = init_world(cell)
    observed = sim_harness.observed_union(world)
    walk_sets = {
        s.sensor_id: enumerate_walks(world.network, s.position, cell.walk_length)
        for s in world.sensors
    }
    summaries = [
        local_summary(world.kernel, world.support, s.obs, s.sensor_id)
        for s in world.sensors
    ]
    gsum = global_summary(world.kernel, world.support, summaries)
    report = bound_report(
        world.kernel, gsum, walk_sets, observed,
        epsilon=cell.epsilon, walk_length=cell.walk_length,
        budget=cell.walk_search_budget,
    )
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=1)
        fh.write("\n")
    status = "satisfied" if report.condition_satisfied else "condition-failed"
    print(f"condition_value={report.condition_value:.6g} ({status}) "
          f"gap={report.achieved_gap:.6g}"
          + (f" bound={report.epsilon_bar:.6g}" if report.condition_satisfied else ""))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="roadfuse",
        description="Decentralized GP data fusion and active sensing on road networks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("embed", help="embed a road network into Euclidean space")
    p.add_argument("--network", required=True, help="road network JSON file")
    p.add_argument("--dim", default="auto",
                   help="embedding dimension, or 'auto' for 95%% eigenvalue mass (default: auto)")
    p.add_argument("--out", required=True, help="output coordinate matrix file")
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("select-support", help="greedy offline support-set selection")
    p.add_argument("--network", required=True, help="road network JSON file")
    p.add_argument("--size", type=_positive_int, required=True, help="support set size")
    p.add_argument("--dim", default="auto", help="embedding dimension (default: auto)")
    p.add_argument("--signal-variance", type=float, default=1.0,
                   help="kernel signal variance (default: 1.0)")
    p.add_argument("--length-scales", type=float, nargs="+", default=None,
                   help="per-dimension length-scales; one value broadcasts (default: 1.0)")
    p.add_argument("--noise-variance", type=float, default=0.0,
                   help="observation noise variance (default: 0.0)")
    p.add_argument("--out", required=True, help="output file, one segment id per line")
    p.set_defaults(func=cmd_select_support)

    p = sub.add_parser("simulate", help="run the round-based simulation grid")
    p.add_argument("--config", required=True, help="experiment config JSON file")
    p.add_argument("--out", required=True, help="output metrics CSV")
    p.add_argument("--timings", default=None,
                   help="optional CSV for per-round wall times (non-deterministic)")
    p.add_argument("--algorithm", action="append", default=None,
                   choices=list(sim_harness.ALGORITHMS) + ["all"],
                   help="override the config's algorithm list; repeatable, 'all' runs every one")
    p.add_argument("--workers", type=_positive_int, default=None,
                   help="threads for per-sensor phases (default: config value)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("compare", help="run all algorithms and print an aggregate table")
    p.add_argument("--config", required=True, help="experiment config JSON file")
    p.add_argument("--out", default=None, help="optional output CSV for the aggregate table")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("bound-check", help="check the entropy-gap guarantee on one instance")
    p.add_argument("--config", required=True, help="instance config JSON file")
    p.add_argument("--out", required=True, help="output JSON report")
    p.set_defaults(func=cmd_bound_check)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SearchBudgetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except Exception as exc:  # surfaced as diagnostics, not tracebacks
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
