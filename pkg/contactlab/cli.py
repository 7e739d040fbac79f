"""Command-line entry point: ``python -m contactlab <subcommand> ...``.

Exit codes: 0 on success, 1 on usage or configuration errors, 2 on runtime
failures. Errors go to stderr as one JSON object.
"""
import argparse
import dataclasses
import json
import logging
import math
import os
import sys

from . import bounds
from .distributions import Geometric, parse_distribution
from .errors import ConfigError, ContactLabError, UsageError
from .experiments import REGISTRY, ExperimentConfig, render, run_experiment, write_outputs
from .export import canonical_json, render_csv, render_json, write_text
from .graphs import (degree_bounds, generate_config_model, generate_path, generate_star, generate_star_chain,
                     max_eigenvalue, read_edge_list, sample_gw_tree, write_edge_list)
from .settings import get_settings, set_settings
from .simulate import (Extinction, FirstOf, StarState, TimeHorizon, VertexInfected, simulate, simulate_replicas,
                       simulate_star, simulate_star_replicas)
from .starchain import (FixedP, SmallLambda, drift_profile, hitting_prob_exact, hitting_prob_mc, make_params,
                        minimal_k_for_supermartingale)
from .streams import entropy_seed, stream_rng

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s - %(levelname)s - %(message)s"
GRAPHS = ("star", "star_chain", "path", "config", "gw")
# argparse plumbing, not part of what a run computes
META_SKIP = frozenset({"command", "handler", "out", "format", "threads", "log_level"})


class ArgumentParser(argparse.ArgumentParser):
    """argparse that raises UsageError instead of exiting."""

    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _require(args, name, minimum=None):
    value = getattr(args, name)
    flag = "--" + name.replace("_", "-")
    if value is None:
        raise UsageError(f"{flag} is required for --graph {args.graph}")
    if minimum is not None and value < minimum:
        raise UsageError(f"{flag} must be >= {minimum}, got {value}")
    return value


def _invocation(args):
    """Resolved flags of this run, written into its output as the config metadata."""
    meta = {"command": args.command}
    for key, value in sorted(vars(args).items()):
        if key in META_SKIP or value is None or value is False:
            continue
        meta["lambda" if key == "lam" else key.removeprefix("bound_")] = value
    return meta


def _seed(args):
    if args.seed is None:
        args.seed = entropy_seed()
        logger.info(f"No --seed given; using {args.seed}")
    return args.seed


def build_graph(args):
    """Graph from ``--input`` or from the generator flags."""
    if args.input:
        return read_edge_list(args.input)
    if args.graph is None:
        raise UsageError("either --graph or --input is required")
    if args.graph == "star":
        return generate_star(_require(args, "k", 1))
    if args.graph == "star_chain":
        return generate_star_chain(_require(args, "k", 1), _require(args, "r", 1))
    if args.graph == "path":
        return generate_path(_require(args, "r", 1))
    rng = stream_rng(_seed(args))
    if args.graph == "config":
        n = _require(args, "n", 2)
        return generate_config_model(n, parse_distribution(_require(args, "dist")), rng)
    offspring = parse_distribution(args.dist) if args.dist else Geometric(_require(args, "p"))
    return sample_gw_tree(offspring, _require(args, "budget", 1), rng, args.max_generation).graph


def _add_graph_flags(parser):
    parser.add_argument("--graph", choices=GRAPHS)
    parser.add_argument("--input", help="edge-list file to read instead of generating")
    parser.add_argument("--k", type=int)
    parser.add_argument("--r", type=int)
    parser.add_argument("--n", type=int)
    parser.add_argument("--dist", help="degree/offspring law, e.g. geom:p=0.5, plaw:a=2.5")
    parser.add_argument("--p", type=float, help="Geometric(p) offspring for --graph gw")
    parser.add_argument("--budget", type=int, default=10_000)
    parser.add_argument("--max-generation", type=int)
    parser.add_argument("--seed", type=int)


def cmd_gen(args):
    graph = build_graph(args)
    write_edge_list(graph, args.out, header=canonical_json(_invocation(args)))
    logger.info(f"Generated {args.graph} with {graph.n_vertices} vertices and {graph.n_edges} edges")


def cmd_eig(args):
    graph = build_graph(args)
    low, high = degree_bounds(graph) if graph.n_edges else (0.0, 0.0)
    record = {"Lambda": max_eigenvalue(graph, tol=args.tol), "sqrt_max_degree": low, "max_degree": high}
    _emit([record], args)


def _initial(args, n_vertices):
    if args.init == "all":
        return list(range(n_vertices))
    try:
        return [int(v) for v in args.init.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"--init must be 'all' or a comma list of vertices, got '{args.init}'")


def cmd_simulate(args):
    horizon = args.horizon if args.horizon is not None else math.inf
    conditions = [Extinction(), TimeHorizon(horizon)]
    if args.target is not None:
        conditions.insert(0, VertexInfected(args.target))
    stop = FirstOf(*conditions)
    seed = _seed(args)

    if args.star:
        k = _require(args, "k", 1)
        init = StarState(args.i, args.j)
        if args.sample_dt:
            outcome = simulate_star(k, args.lam, init, stop, seed=seed, sample_dt=args.sample_dt)
            write_text(outcome.trajectory.to_csv(header=canonical_json(_invocation(args))), args.out)
            return
        outcomes = simulate_star_replicas(k, args.lam, init, stop, seed, args.replicas)
    else:
        graph = build_graph(args)
        init = _initial(args, graph.n_vertices)
        if args.sample_dt:
            outcome = simulate(graph, args.lam, init, stop, seed=seed, sample_dt=args.sample_dt)
            write_text(outcome.trajectory.to_csv(header=canonical_json(_invocation(args))), args.out)
            return
        outcomes = simulate_replicas(graph, args.lam, init, stop, seed, args.replicas)
    _emit([outcome.to_dict() for outcome in outcomes], args)


def cmd_chain(args):
    mode = SmallLambda(args.epsilon) if args.mode == "small" else FixedP()
    if args.min_k:
        _emit([{"lambda": args.lam, "mode": args.mode, "min_k": minimal_k_for_supermartingale(args.lam, mode)}], args)
        return
    if args.k is None:
        raise UsageError("--k is required unless --min-k is given")
    params = make_params(args.lam, args.k, mode)
    if args.a is None:
        _emit(drift_profile(params), args)
        return
    b = 0 if args.b is None else args.b
    L_int = args.L if args.L is not None else params.L_floor
    record = {"lambda": args.lam, "k": args.k, "a": args.a, "b": b, "L": L_int,
              "exact": hitting_prob_exact(params, args.a, b, L_int)}
    if args.reps:
        estimate = hitting_prob_mc(params, args.a, b, L_int, args.reps, stream_rng(_seed(args)))
        record.update(mc=estimate.estimate, mc_halfwidth=estimate.halfwidth, seed=args.seed)
    _emit([record], args)


BOUND_FLAGS = {
    "a": int, "b": int, "L": float, "lambda": float, "k": float, "epsilon": float, "k_exponent": float,
    "n": float, "r": int, "m": int, "r_over_k": float, "p": float, "tol": float, "nu": float, "t": float,
    "x": int, "M": int, "p_up": float,
}


def cmd_bounds(args):
    inputs = {key: getattr(args, "bound_" + key) for key in BOUND_FLAGS}
    report = bounds.bound_report(args.lemma, **inputs)
    meta = _invocation(args)
    if list(report.values) == ["value"]:
        write_text(f"# config: {canonical_json(meta)}\n{report.values['value']!r}\n", args.out)
    else:
        write_text(render_json(dict(report.to_dict(), config=meta)), args.out)


def _emit(records, args):
    meta = _invocation(args)
    if args.format == "json":
        write_text(render_json({"config": meta, "rows": records}), args.out)
    else:
        write_text(render_csv(records, header=canonical_json(meta)), args.out)


def load_config(path):
    """Read and validate a flat JSON experiment configuration."""
    if not os.path.exists(path):
        raise ConfigError(f"Config file {path} does not exist")
    try:
        with open(path, "r", encoding="utf-8") as f:
            payload = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"Failed to parse {path}: {e}") from e
    config = ExperimentConfig.from_dict(payload)
    logger.info(f"Loaded {config.experiment} config from {path}: {canonical_json(config.to_dict())}")
    return config


def _run(config, args):
    threads = args.threads or config.threads
    if threads:
        set_settings(dataclasses.replace(get_settings(), threads=threads))
    result = run_experiment(config)
    if args.out == "-" or (args.out is None and config.out == "-"):
        write_text(render(result, args.format or result.config.format), "-")
    else:
        write_outputs(result, args.out or config.out, args.format)


def cmd_curve(args):
    config = ExperimentConfig.from_dict({
        "experiment": "curve", "p_min": args.p_min, "p_max": args.p_max, "p_step": args.step,
        "epsilon": args.epsilon, "seed": 0,
    })
    _run(config, args)


def cmd_exponents(args):
    config = ExperimentConfig.from_dict({
        "experiment": "exponents", "alpha_min": args.alpha_min, "alpha_max": args.alpha_max,
        "alpha_step": args.step, "seed": 0,
    })
    _run(config, args)


# flag attribute -> JSON key
OVERRIDES = {
    "experiment": "experiment", "seed": "seed", "replicas": "replicas", "time_replicas": "time_replicas",
    "horizon": "horizon", "lam": "lambda", "k": "k", "r": "r", "n": "n", "m": "m", "p": "p",
    "epsilon": "epsilon", "dist": "dist", "graph": "graph", "schedule": "schedule",
}


def cmd_experiment(args):
    overrides = {key: getattr(args, attribute) for attribute, key in OVERRIDES.items()}
    if args.config:
        config = load_config(args.config).merged(overrides)
    elif args.experiment:
        config = ExperimentConfig.from_dict({key: value for key, value in overrides.items() if value is not None})
    else:
        raise UsageError("experiment needs --config or --experiment")
    _run(config, args)


def build_parser():
    common = ArgumentParser(add_help=False)
    common.add_argument("--out", default=None, help="output path, '-' for stdout")
    common.add_argument("--format", choices=("csv", "json"), default=None)
    common.add_argument("--threads", type=int, default=None)
    common.add_argument("--log-level", default=None)

    parser = ArgumentParser(prog="contactlab", description="Contact process simulation and bound evaluation")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", parents=[common], help="write a generated graph as an edge list")
    _add_graph_flags(gen)
    gen.set_defaults(handler=cmd_gen)

    eig = sub.add_parser("eig", parents=[common], help="largest adjacency eigenvalue")
    _add_graph_flags(eig)
    eig.add_argument("--tol", type=float, default=1e-10)
    eig.set_defaults(handler=cmd_eig)

    sim = sub.add_parser("simulate", parents=[common], help="run the contact process")
    _add_graph_flags(sim)
    sim.add_argument("--lambda", dest="lam", type=float, required=True)
    sim.add_argument("--init", default="0", help="'all' or comma-separated vertices")
    sim.add_argument("--horizon", type=float)
    sim.add_argument("--target", type=int)
    sim.add_argument("--replicas", type=int, default=1)
    sim.add_argument("--sample-dt", type=float, default=0.0, help="write one trajectory sampled every dt")
    sim.add_argument("--star", action="store_true", help="use the two-coordinate star chain")
    sim.add_argument("--i", type=int, default=0, help="infected leaves at start (with --star)")
    sim.add_argument("--j", type=int, default=1, help="center infected at start (with --star)")
    sim.set_defaults(handler=cmd_simulate)

    chain = sub.add_parser("chain", parents=[common], help="reduced star chain: drift, hitting probabilities")
    chain.add_argument("--lambda", dest="lam", type=float, required=True)
    chain.add_argument("--k", type=int)
    chain.add_argument("--mode", choices=("fixed", "small"), default="fixed")
    chain.add_argument("--epsilon", type=float, default=0.2)
    chain.add_argument("--a", type=int)
    chain.add_argument("--b", type=int)
    chain.add_argument("--L", type=int)
    chain.add_argument("--reps", type=int, default=0)
    chain.add_argument("--seed", type=int)
    chain.add_argument("--min-k", action="store_true", help="smallest k whose drift check passes")
    chain.set_defaults(handler=cmd_chain)

    bnd = sub.add_parser("bounds", parents=[common], help="evaluate a closed-form bound")
    bnd.add_argument("--lemma", required=True, choices=sorted(bounds.LEMMAS))
    for key, kind in BOUND_FLAGS.items():
        bnd.add_argument("--" + key.replace("_", "-"), dest="bound_" + key, type=kind)
    bnd.set_defaults(handler=cmd_bounds)

    curve = sub.add_parser("curve", parents=[common], help="lambda_2 / lambda_1 upper curves")
    curve.add_argument("--p-min", type=float, default=0.01)
    curve.add_argument("--p-max", type=float, default=0.99)
    curve.add_argument("--step", type=float, default=0.01)
    curve.add_argument("--epsilon", type=float, default=0.0)
    curve.set_defaults(handler=cmd_curve)

    exponents = sub.add_parser("exponents", parents=[common], help="critical exponent curves")
    exponents.add_argument("--alpha-min", type=float, default=2.05)
    exponents.add_argument("--alpha-max", type=float, default=4.5)
    exponents.add_argument("--step", type=float, default=0.05)
    exponents.set_defaults(handler=cmd_exponents)

    exp = sub.add_parser("experiment", parents=[common], help="run a named experiment")
    exp.add_argument("--config", help="flat JSON configuration file")
    exp.add_argument("--experiment", choices=sorted(REGISTRY))
    exp.add_argument("--seed", type=int)
    exp.add_argument("--replicas", type=int)
    exp.add_argument("--time-replicas", type=int)
    exp.add_argument("--horizon", type=float)
    exp.add_argument("--lambda", dest="lam", type=float)
    for name in ("k", "r", "n", "m"):
        exp.add_argument("--" + name, type=int)
    exp.add_argument("--p", type=float)
    exp.add_argument("--epsilon", type=float)
    exp.add_argument("--dist")
    exp.add_argument("--graph")
    exp.add_argument("--schedule")
    exp.set_defaults(handler=cmd_experiment)
    return parser


def _report(error):
    sys.stderr.write(json.dumps({"error": type(error).__name__, "message": str(error)}) + "\n")


def main(argv=None):
    """Parse ``argv`` and dispatch; returns the exit code."""
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=(args.log_level or get_settings().log_level).upper(), format=LOG_FORMAT)
        if args.out is None and args.command in ("gen", "eig", "simulate", "chain", "bounds"):
            args.out = "-"
        args.handler(args)
        return 0
    except (UsageError, ConfigError) as e:
        _report(e)
        return 1
    except (ContactLabError, OSError) as e:
        logger.error(f"{type(e).__name__}: {e}")
        _report(e)
        return 2
