"""Named, reproducible experiments that confront the bounds with simulation.

Every experiment takes a resolved ExperimentConfig and returns flat records.
Replica r of grid point g draws from the stream (seed, g, ..., r), so reruns
with the same config and seed produce identical rows whatever the thread
count.
"""
import dataclasses
import itertools
import logging
import math
import os
from dataclasses import dataclass, field
from datetime import datetime
from typing import List, NamedTuple, Optional

import numpy as np
import pytz
from scipy import linalg

from . import bounds, kernels
from .distributions import Deterministic, Geometric, PowerLawTail, StretchedExpTail, parse_distribution
from .errors import BracketError, ConfigError, InvalidParameterError
from .export import canonical_json, render_csv, render_json, summary_path, write_index, write_text
from .graphs import (chain_end, count_stars, generate_config_model, generate_path, generate_star,
                     generate_star_chain, max_eigenvalue, sample_gw_tree)
from .settings import get_settings
from .simulate import (Extinction, FirstOf, LeafCountAtLeast, LeafCountAtMost, StarState, TimeHorizon,
                       VertexInfected, exact_star_mean_extinction, simulate, simulate_replicas,
                       simulate_star_replicas)
from .stats import ProportionEstimate, mean_estimate
from .streams import ReplicaPool, chunk_sizes, draw_master_seed, entropy_seed, map_replicas, stream_rng, stream_seed

logger = logging.getLogger(__name__)

FLOOR_SLACK = 1e-9
LAMBDA_C_BRACKET = (1e-3, 4.0)
CRITERION_NOTE = "median extinction time >= T(n) = criterion_factor * n; desk-scale stand-in for survival for exp(O(n^eps))"
WALK_UP_MIN = math.e / (math.e + 1.0)

# JSON key -> (attribute, kind)
CONFIG_KEYS = {
    "experiment": ("experiment", "str"),
    "seed": ("seed", "int"),
    "replicas": ("replicas", "int"),
    "time_replicas": ("time_replicas", "int"),
    "horizon": ("horizon", "float"),
    "lambda": ("lam", "float"),
    "lambdas": ("lambdas", "float_list"),
    "k": ("k", "int"),
    "ks": ("ks", "int_list"),
    "epsilon": ("epsilon", "float"),
    "eta": ("eta", "float"),
    "r": ("r", "int"),
    "rs": ("rs", "int_list"),
    "m": ("m", "int"),
    "p": ("p", "float"),
    "n": ("n", "int"),
    "ns": ("ns", "int_list"),
    "dist": ("dist", "str"),
    "dists": ("dists", "str_list"),
    "schedule": ("schedule", "str"),
    "budget": ("budget", "int"),
    "max_generation": ("max_generation", "int"),
    "walk_sizes": ("walk_sizes", "int_list"),
    "p_up": ("p_up", "float"),
    "graph": ("graph", "str"),
    "lambda_factors": ("lambda_factors", "float_list"),
    "k_exponent": ("k_exponent", "float"),
    "criterion_factor": ("criterion_factor", "float"),
    "probe_replicas": ("probe_replicas", "int"),
    "probe_iterations": ("probe_iterations", "int"),
    "p_min": ("p_min", "float"),
    "p_max": ("p_max", "float"),
    "p_step": ("p_step", "float"),
    "alpha_min": ("alpha_min", "float"),
    "alpha_max": ("alpha_max", "float"),
    "alpha_step": ("alpha_step", "float"),
    "window": ("window", "float"),
    "sample_dt": ("sample_dt", "float"),
    "threads": ("threads", "int"),
    "format": ("format", "str"),
    "out": ("out", "str"),
}
ATTRIBUTE_KEYS = {attribute: key for key, (attribute, _) in CONFIG_KEYS.items()}


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    seed: Optional[int] = None
    replicas: Optional[int] = None
    time_replicas: Optional[int] = None
    horizon: Optional[float] = None
    lam: Optional[float] = None
    lambdas: Optional[List[float]] = None
    k: Optional[int] = None
    ks: Optional[List[int]] = None
    epsilon: Optional[float] = None
    eta: Optional[float] = None
    r: Optional[int] = None
    rs: Optional[List[int]] = None
    m: Optional[int] = None
    p: Optional[float] = None
    n: Optional[int] = None
    ns: Optional[List[int]] = None
    dist: Optional[str] = None
    dists: Optional[List[str]] = None
    schedule: Optional[str] = None
    budget: Optional[int] = None
    max_generation: Optional[int] = None
    walk_sizes: Optional[List[int]] = None
    p_up: Optional[float] = None
    graph: Optional[str] = None
    lambda_factors: Optional[List[float]] = None
    k_exponent: Optional[float] = None
    criterion_factor: Optional[float] = None
    probe_replicas: Optional[int] = None
    probe_iterations: Optional[int] = None
    p_min: Optional[float] = None
    p_max: Optional[float] = None
    p_step: Optional[float] = None
    alpha_min: Optional[float] = None
    alpha_max: Optional[float] = None
    alpha_step: Optional[float] = None
    window: Optional[float] = None
    sample_dt: Optional[float] = None
    threads: Optional[int] = None
    format: Optional[str] = None
    out: Optional[str] = None

    @classmethod
    def from_dict(cls, payload):
        """Build from the flat JSON form, checking key names and value types."""
        if not isinstance(payload, dict):
            raise ConfigError("Experiment configuration must be a flat JSON object")
        values = {}
        for key, value in payload.items():
            if key not in CONFIG_KEYS:
                raise ConfigError(f"Unknown configuration key '{key}'", key=key)
            attribute, kind = CONFIG_KEYS[key]
            values[attribute] = None if value is None else _coerce(key, kind, value)
        if values.get("experiment") is None:
            raise ConfigError("Missing required key 'experiment'", key="experiment")
        config = cls(**values)
        config.validate()
        return config

    def to_dict(self):
        """Flat JSON form; unset fields are omitted."""
        return {
            ATTRIBUTE_KEYS[f.name]: getattr(self, f.name)
            for f in dataclasses.fields(self)
            if getattr(self, f.name) is not None
        }

    def to_json(self):
        return canonical_json(self.to_dict())

    def merged(self, overrides):
        """Copy with the non-None entries of ``overrides`` (JSON keys) applied."""
        payload = self.to_dict()
        for scalar, grid in SCALAR_TO_LIST.items():
            # a scalar flag replaces the grid it would otherwise be ignored behind
            if overrides.get(ATTRIBUTE_KEYS[scalar]) is not None:
                payload.pop(ATTRIBUTE_KEYS[grid], None)
        payload.update({key: value for key, value in overrides.items() if value is not None})
        return ExperimentConfig.from_dict(payload)

    def validate(self):
        if self.experiment not in REGISTRY:
            raise ConfigError(f"Unknown experiment '{self.experiment}'; choose from {', '.join(REGISTRY)}", key="experiment")
        for name in ("replicas", "time_replicas", "probe_replicas", "budget", "probe_iterations"):
            value = getattr(self, name)
            if value is not None and value < 1:
                raise ConfigError(f"'{ATTRIBUTE_KEYS[name]}' must be >= 1, got {value}", key=ATTRIBUTE_KEYS[name])
        if self.horizon is not None and not self.horizon > 0:
            raise ConfigError(f"'horizon' must be > 0, got {self.horizon}", key="horizon")
        rates = ([self.lam] if self.lam is not None else []) + list(self.lambdas or [])
        if any(not (rate >= 0 and math.isfinite(rate)) for rate in rates):
            raise ConfigError("'lambda' values must be finite and >= 0", key="lambda")
        if self.seed is not None and self.seed < 0:
            raise ConfigError(f"'seed' must be >= 0, got {self.seed}", key="seed")
        if self.format is not None and self.format not in ("csv", "json"):
            raise ConfigError(f"'format' must be csv or json, got {self.format}", key="format")
        if self.schedule is not None:
            try:
                bounds.parse_schedule(self.schedule).check()
            except InvalidParameterError as e:
                raise ConfigError(str(e), key="schedule") from e
        for text in ([self.dist] if self.dist is not None else []) + list(self.dists or []):
            try:
                parse_distribution(text)
            except InvalidParameterError as e:
                raise ConfigError(str(e), key="dist") from e


def _coerce(key, kind, value):
    def scalar(base, item):
        if base == "int":
            if isinstance(item, bool) or not isinstance(item, int):
                raise ConfigError(f"'{key}' must be an integer, got {item!r}", key=key)
            return item
        if base == "float":
            if isinstance(item, bool) or not isinstance(item, (int, float)):
                raise ConfigError(f"'{key}' must be a number, got {item!r}", key=key)
            return float(item)
        if not isinstance(item, str):
            raise ConfigError(f"'{key}' must be a string, got {item!r}", key=key)
        return item

    if kind.endswith("_list"):
        if not isinstance(value, list):
            raise ConfigError(f"'{key}' must be a list", key=key)
        return [scalar(kind[:-5], item) for item in value]
    return scalar(kind, value)


EXPERIMENT_DEFAULTS = {
    "star-persistence": {"lambdas": [1.0], "ks": [20, 40, 60], "horizon": 1000.0},
    "ignite": {"lambdas": [1.0], "ks": [10_000]},
    "transfer": {"graph": "path", "lambdas": [1.0], "rs": [1, 3], "ks": [50], "m": 10},
    "gw-local": {"p": 0.5, "lambdas": [0.2, 3.0], "budget": 10_000, "horizon": 50.0, "window": 0.0, "sample_dt": 1.0},
    "config-persistence": {"schedule": "powerlaw:a=2.5,eta=0.2", "ns": [500, 1000, 2000],
                           "lambda_factors": [1.0, 2.0], "horizon": 1000.0, "replicas": 100},
    "lambda-c": {"graph": "config", "dists": ["plaw:a=2.5"], "ns": [500], "ks": [400], "probe_replicas": 21,
                 "probe_iterations": 20, "criterion_factor": 1.0},
    "star-walk": {"walk_sizes": [10, 20], "p_up": 0.75},
    "curve": {"p_min": 0.01, "p_max": 0.99, "p_step": 0.01, "epsilon": 0.0},
    "exponents": {"alpha_min": 2.05, "alpha_max": 4.5, "alpha_step": 0.05},
}
GLOBAL_DEFAULTS = {"epsilon": 0.1, "eta": 0.2, "k_exponent": bounds.IGNITE_EXPONENT, "format": "csv"}
SCALAR_TO_LIST = {"lam": "lambdas", "k": "ks", "r": "rs", "n": "ns", "dist": "dists"}


def resolve(config):
    """Fill experiment and global defaults, promote scalars to grids, draw a seed if absent."""
    settings = get_settings()
    values = {}
    for scalar, grid in SCALAR_TO_LIST.items():
        if getattr(config, grid) is None and getattr(config, scalar) is not None:
            values[grid] = [getattr(config, scalar)]
    defaults = dict(GLOBAL_DEFAULTS)
    defaults.update(replicas=settings.probability_replicas, time_replicas=settings.time_replicas)
    defaults.update(EXPERIMENT_DEFAULTS[config.experiment])
    for name, value in defaults.items():
        if getattr(config, name) is None and name not in values:
            values[name] = value
    if config.seed is None:
        values["seed"] = entropy_seed()
        logger.info(f"No seed configured; drew {values['seed']} from entropy")
    return dataclasses.replace(config, **values)


@dataclass
class ResultRow:
    metric: str
    params: dict
    estimate: float
    ci_halfwidth: float
    bound: Optional[float] = None
    bound_side: Optional[str] = None
    bound_vacuous: Optional[bool] = None
    censored_fraction: Optional[float] = None
    extras: dict = field(default_factory=dict)

    def violates_bound(self):
        """Outside the bound by more than the interval half-width times 3."""
        if self.bound is None or self.bound_vacuous or math.isnan(self.estimate):
            return False
        slack = 3.0 * self.ci_halfwidth
        if self.bound_side == "lower":
            return self.estimate < self.bound - slack
        return self.estimate > self.bound + slack

    def to_record(self):
        record = {"metric": self.metric}
        record.update(self.params)
        record.update(
            estimate=self.estimate,
            ci_halfwidth=self.ci_halfwidth,
            bound=self.bound,
            bound_side=self.bound_side,
            bound_vacuous=self.bound_vacuous,
            censored_fraction=self.censored_fraction,
        )
        record.update(self.extras)
        return record


def _floor(x):
    return int(math.floor(x + FLOOR_SLACK))


def _ceil(x):
    return int(math.ceil(x - FLOOR_SLACK))


def _probability_row(metric, params, successes, total, **kwargs):
    estimate = ProportionEstimate.from_counts(successes, total)
    return ResultRow(metric, params, estimate.estimate, estimate.halfwidth, **kwargs)


def _time_row(metric, params, samples, **kwargs):
    mean, halfwidth = mean_estimate(samples)
    return ResultRow(metric, params, mean, halfwidth, **kwargs)


def _fraction(outcomes, reason):
    return sum(outcome.stop_reason == reason for outcome in outcomes) / len(outcomes)


def exp_star_persistence(config):
    """Persistence of a star from (floor(L), 1) against the star life bound, and mean extinction times."""
    rows = []
    eps = config.epsilon
    cap = get_settings().oracle_cap
    for g, (lam, k) in enumerate(itertools.product(config.lambdas, config.ks)):
        params = {"lambda": lam, "k": k, "epsilon": eps}
        L = bounds.fixed_p_level(k, lam)
        L_int, b = _floor(L), _floor(eps * L)
        if lam > 0:
            S, fail = bounds.life_bound(k, lam, eps)
        else:
            S, fail = math.inf, None
        T = min(S, config.horizon)
        outcomes = simulate_star_replicas(
            k, lam, StarState(L_int, 1), FirstOf(LeafCountAtMost(b), TimeHorizon(T)),
            config.seed, config.replicas, keys=(g, 0),
        )
        failures = sum(o.stop_reason == "leaf_at_most" for o in outcomes)
        rows.append(_probability_row(
            "failure_before_S", params, failures, len(outcomes),
            bound=fail, bound_side="upper" if fail is not None else None,
            bound_vacuous=None if fail is None else fail >= 1.0,
            censored_fraction=_fraction(outcomes, "horizon") if T < S else 0.0,
            extras={"L": L, "b": b, "S": S, "horizon": T},
        ))

        outcomes = simulate_star_replicas(
            k, lam, StarState(k, 1), FirstOf(Extinction(), TimeHorizon(config.horizon)),
            config.seed, config.time_replicas, keys=(g, 1),
        )
        times = [o.stop_time for o in outcomes]
        exact = exact_star_mean_extinction(k, lam, StarState(k, 1)) if k <= cap else None
        rows.append(_time_row(
            "mean_extinction_time", params, times,
            censored_fraction=_fraction(outcomes, "horizon"),
            extras={
                "exact": exact,
                "persistence_scale": bounds.persistence_scale(k, lam),
                "survival_ub": bounds.survival_ub(k + 1, lam, eps),
            },
        ))
        logger.info(f"star-persistence lambda={lam} k={k}: failures {failures}/{len(outcomes)}")
    return rows


def exp_ignite(config):
    """Ignition of a star from (0, 1): reaching K, reaching L from K, and the time to reach L."""
    rows = []
    for g, (lam, k) in enumerate(itertools.product(config.lambdas, config.ks)):
        report = bounds.ignite_bounds(k, lam, config.k_exponent)
        K_int = min(_ceil(report.values["K"]), k)
        L_int = _floor(report.values["L"])
        params = {"lambda": lam, "k": k, "K": K_int, "L": L_int}
        reach_k = FirstOf(LeafCountAtLeast(K_int), Extinction())
        reach_l = FirstOf(LeafCountAtLeast(L_int), Extinction())

        outcomes = simulate_star_replicas(k, lam, StarState(0, 1), reach_k, config.seed, config.replicas, keys=(g, 0))
        rows.append(_probability_row(
            "reach_k_failure", params, sum(o.stop_reason == "extinction" for o in outcomes), len(outcomes),
            bound=report.values["reach_k_failure"], bound_side="upper",
            bound_vacuous=report.parts_vacuous["reach_k_failure"], censored_fraction=0.0,
        ))

        outcomes = simulate_star_replicas(k, lam, StarState(K_int, 1), reach_l, config.seed, config.replicas, keys=(g, 1))
        rows.append(_probability_row(
            "reach_l_failure", params, sum(o.stop_reason == "extinction" for o in outcomes), len(outcomes),
            bound=report.values["reach_l_failure"], bound_side="upper",
            bound_vacuous=report.parts_vacuous["reach_l_failure"], censored_fraction=0.0,
            extras={"supermartingale_bound": report.values["reach_l_failure_supermartingale"]},
        ))

        outcomes = simulate_star_replicas(
            k, lam, StarState(0, 1), reach_l, config.seed, config.time_replicas, keys=(g, 2)
        )
        times = [o.stop_time for o in outcomes if o.stop_reason == "leaf_at_least"]
        rows.append(_time_row(
            "time_to_l", params, times,
            bound=report.values["time_to_l"], bound_side="upper",
            bound_vacuous=report.parts_vacuous["time_to_l"], censored_fraction=0.0,
            extras={"successes": len(times), "drift_bound": report.values["time_to_l_drift"]},
        ))
        logger.info(f"ignite lambda={lam} k={k}: K={K_int} L={L_int} vacuous={report.vacuous}")
    return rows


def exp_transfer(config):
    """Relay of an infection down a chain of length r."""
    rows = []
    if config.graph not in ("path", "star_chain"):
        raise InvalidParameterError(f"transfer runs on graph 'path' or 'star_chain', got '{config.graph}'")
    if config.graph == "path":
        for g, (lam, r) in enumerate(itertools.product(config.lambdas, config.rs)):
            graph = generate_path(r)
            params = {"graph": "path", "lambda": lam, "r": r}
            by_time = FirstOf(VertexInfected(r), TimeHorizon(2.0 * r))
            outcomes = simulate_replicas(graph, lam, [0], by_time, config.seed, config.replicas, keys=(g, 0))
            rows.append(_probability_row(
                "infected_by_2r", params, sum(o.stop_reason == "vertex_infected" for o in outcomes), len(outcomes),
                bound=bounds.transfer_time_bound(r, lam), bound_side="lower", bound_vacuous=False,
                censored_fraction=_fraction(outcomes, "horizon"),
            ))
            ever = FirstOf(VertexInfected(r), Extinction())
            outcomes = simulate_replicas(graph, lam, [0], ever, config.seed, config.replicas, keys=(g, 1))
            rows.append(_probability_row(
                "ever_infected", params, sum(o.stop_reason == "vertex_infected" for o in outcomes), len(outcomes),
                bound=bounds.transfer_bound(r, lam), bound_side="lower", bound_vacuous=False, censored_fraction=0.0,
            ))
        return rows

    for g, (lam, k, r) in enumerate(itertools.product(config.lambdas, config.ks, config.rs)):
        graph = generate_star_chain(k, r)
        L_int = _floor(bounds.fixed_p_level(k, lam))
        horizon = config.m * (2.0 * r + 1.0)
        params = {"graph": "star_chain", "lambda": lam, "k": k, "r": r, "m": config.m}
        stop = FirstOf(VertexInfected(chain_end(k, r)), TimeHorizon(horizon))
        outcomes = simulate_replicas(graph, lam, range(L_int + 1), stop, config.seed, config.replicas, keys=(g, 0))
        missed = sum(o.stop_reason != "vertex_infected" for o in outcomes)
        bound = bounds.infect_bound(r, config.m, lam, config.epsilon) if lam > 0 else 1.0
        rows.append(_probability_row(
            "not_infected_by_m_attempts", params, missed, len(outcomes),
            bound=bound, bound_side="upper", bound_vacuous=bound >= 1.0,
            censored_fraction=_fraction(outcomes, "horizon"),
            extras={"L": L_int, "horizon": horizon},
        ))
    return rows


def exp_gw_local_survival(config):
    """Root occupancy near the horizon on truncated Galton-Watson trees (descriptive)."""
    rows = []
    offspring = parse_distribution(config.dists[0]) if config.dists else Geometric(config.p)
    horizon = config.horizon
    dt = horizon / max(1, math.ceil(horizon / config.sample_dt - FLOOR_SLACK))
    for g, lam in enumerate(config.lambdas):

        def run_one(r, lam=lam, g=g):
            tree = sample_gw_tree(offspring, config.budget, stream_rng(config.seed, g, r, 0), config.max_generation)
            outcome = simulate(
                tree.graph, lam, [0], TimeHorizon(horizon), seed=stream_seed(config.seed, g, r, 1), replica=r,
                sample_dt=dt, watch=0, flagged=tree.boundary,
            )
            trajectory = outcome.trajectory
            chosen = trajectory.watched[trajectory.times >= horizon - config.window - FLOOR_SLACK]
            if chosen.size == 0:
                chosen = trajectory.watched[-1:]
            return float(chosen.mean()), outcome.touched_flagged, tree.budget_exhausted

        results = map_replicas(config.replicas, run_one)
        occupancy = [result[0] for result in results]
        extras = {
            "offspring": offspring.spec(),
            "boundary_contact_fraction": float(np.mean([result[1] for result in results])),
            "budget_exhausted_fraction": float(np.mean([result[2] for result in results])),
            "descriptive": True,
        }
        if isinstance(offspring, Geometric):
            extras["lambda2_upper"] = bounds.lambda2_upper(offspring.p).value
        if isinstance(offspring, Deterministic) and offspring.d == 0:
            extras["closed_form"] = math.exp(-horizon)
        rows.append(_time_row(
            "root_occupancy", {"lambda": lam, "horizon": horizon, "window": config.window, "budget": config.budget},
            occupancy, extras=extras,
        ))
        logger.info(f"gw-local lambda={lam}: occupancy {rows[-1].estimate:.4f}")
    return rows


def _schedule_distribution(family):
    if isinstance(family, (bounds.PowerLawSchedule, bounds.WangPowerLaw)):
        return PowerLawTail(family.a)
    return StretchedExpTail(family.b)


def exp_config_persistence(config):
    """Extinction times on configuration-model graphs at scheduled rates, and the star count."""
    rows = []
    family = bounds.parse_schedule(config.schedule)
    dist = parse_distribution(config.dists[0]) if config.dists else _schedule_distribution(family)
    for g, (n, factor) in enumerate(itertools.product(config.ns, config.lambda_factors)):
        scheduled = bounds.schedule_lambda(n, family)
        lam = factor * scheduled
        try:
            threshold = bounds.star_threshold(n, family)
        except InvalidParameterError:
            threshold = None

        def run_one(r, g=g, lam=lam, threshold=threshold):
            graph = generate_config_model(n, dist, stream_rng(config.seed, g, r, 0))
            outcome = simulate(
                graph, lam, range(n), FirstOf(Extinction(), TimeHorizon(config.horizon)),
                seed=stream_seed(config.seed, g, r, 1), replica=r,
            )
            stars = count_stars(graph, threshold) if threshold is not None else -1
            return outcome.stop_time, outcome.censored, stars

        results = map_replicas(config.replicas, run_one)
        times = np.array([result[0] for result in results])
        params = {"schedule": config.schedule, "dist": dist.spec(), "n": n, "lambda_factor": factor, "lambda": lam}
        q25, median, q75 = np.quantile(times, [0.25, 0.5, 0.75])
        rows.append(_time_row(
            "extinction_time", params, times,
            censored_fraction=float(np.mean([result[1] for result in results])),
            extras={"median": float(median), "q25": float(q25), "q75": float(q75), "lambda_schedule": scheduled},
        ))
        if threshold is not None:
            needed = n**family.eta
            stars = np.array([result[2] for result in results])
            rows.append(_probability_row(
                "star_count_at_least_n_eta", params, int(np.count_nonzero(stars >= needed)), len(stars),
                extras={
                    "star_threshold": threshold,
                    "stars_needed": needed,
                    "mean_star_count": float(stars.mean()),
                    "expected_star_count": float(n * dist.tail(_ceil(threshold))),
                },
            ))
        logger.info(f"config-persistence n={n} lambda={lam:.5g}: median time {median:.4g}")
    return rows


class LambdaCCriterion(NamedTuple):
    """Survival is accepted at rate lambda when the median extinction time reaches time_factor * n."""

    time_factor: float = 1.0
    replicas: int = 21
    iterations: int = 20


class WangComparison(NamedTuple):
    lambda_c_est: float
    inv_Lambda: float

    @property
    def ratio(self):
        return self.lambda_c_est / self.inv_Lambda


def estimate_lambda_c(n, dist, criterion, rng, graph=None):
    """Bisect (geometrically) over [1e-3, 4] for the smallest rate meeting ``criterion``."""
    criterion = criterion or LambdaCCriterion()
    graph = graph if graph is not None else generate_config_model(n, dist, rng)
    master = draw_master_seed(rng)
    T = criterion.time_factor * n
    everyone = range(graph.n_vertices)
    probes = itertools.count()

    def survives(lam):
        outcomes = simulate_replicas(
            graph, lam, everyone, FirstOf(Extinction(), TimeHorizon(T)), master, criterion.replicas,
            keys=(next(probes),),
        )
        return float(np.median([o.stop_time for o in outcomes])) >= T

    lo, hi = LAMBDA_C_BRACKET
    if not survives(hi):
        raise BracketError(f"Criterion not met even at lambda={hi} (n={n})")
    if survives(lo):
        return lo
    for _ in range(criterion.iterations):
        mid = math.sqrt(lo * hi)
        if survives(mid):
            hi = mid
        else:
            lo = mid
    return math.sqrt(lo * hi)


def wang_comparison(n, dist, rng, criterion=None, graph=None):
    """Estimated critical rate next to 1/Lambda of the same graph."""
    graph = graph if graph is not None else generate_config_model(n, dist, rng)
    inverse = 1.0 / max_eigenvalue(graph)
    return WangComparison(estimate_lambda_c(n, dist, criterion, rng, graph=graph), inverse)


def exp_lambda_c(config):
    rows = []
    criterion = LambdaCCriterion(config.criterion_factor, config.probe_replicas, config.probe_iterations)
    if config.graph == "star":
        cases = [("star", k + 1, None, generate_star(k)) for k in config.ks]
    elif config.graph == "config":
        cases = [(text, n, parse_distribution(text), None) for text, n in itertools.product(config.dists, config.ns)]
    else:
        raise InvalidParameterError(f"lambda-c runs on graph 'star' or 'config', got '{config.graph}'")
    for g, (label, n, dist, graph) in enumerate(cases):
        rng = stream_rng(config.seed, g)
        graph = graph if graph is not None else generate_config_model(n, dist, rng)
        params = {"graph": label, "n": n}
        extras = {"criterion": CRITERION_NOTE}
        try:
            comparison = wang_comparison(n, dist, rng, criterion, graph=graph)
            estimate, inverse = comparison.lambda_c_est, comparison.inv_Lambda
        except BracketError as e:
            logger.warning(f"lambda-c {label} n={n}: {e}")
            estimate, inverse = math.nan, 1.0 / max_eigenvalue(graph)
            extras["note"] = "non-bracketing"
        extras.update(inv_Lambda=inverse, ratio=estimate / inverse)
        # geometric bisection resolution
        width = math.log(LAMBDA_C_BRACKET[1] / LAMBDA_C_BRACKET[0]) / 2**criterion.iterations
        rows.append(ResultRow("lambda_c", params, estimate, estimate * math.expm1(width / 2.0), extras=extras))
        logger.info(f"lambda-c {label} n={n}: estimate {estimate:.5g}, 1/Lambda {inverse:.5g}")
    return rows


def star_walk_exact(x, M, p_up):
    """P_x(hit 0 before M) for the +1/-1 walk, by a linear solve over 1..M-1."""
    if not 0 <= x <= M:
        raise InvalidParameterError(f"start must lie in 0..{M}, got {x}")
    if x == 0:
        return 1.0
    if x == M:
        return 0.0
    size = M - 1
    A = np.eye(size)
    A[np.arange(size - 1), np.arange(1, size)] = -p_up
    A[np.arange(1, size), np.arange(size - 1)] = -(1.0 - p_up)
    rhs = np.zeros(size)
    rhs[0] = 1.0 - p_up
    return float(linalg.solve(A, rhs)[x - 1])


def exp_star_walk_bound(config):
    """Lit-star count walk: P_0.9M(T_0 < T_M) against e^(-0.9 M)."""
    if not config.p_up > WALK_UP_MIN:
        raise InvalidParameterError(f"p_up must exceed e/(e+1) = {WALK_UP_MIN:.6f}, got {config.p_up}")
    rows = []
    for g, M in enumerate(config.walk_sizes):
        x = _ceil(0.9 * M)
        tasks = [(x, M, config.p_up, size, stream_seed(config.seed, g, c)) for c, size in enumerate(chunk_sizes(config.replicas))]
        hits = sum(ReplicaPool().map(kernels.walk_hits_zero, tasks))
        bound = bounds.star_walk_bound(M)
        rows.append(_probability_row(
            "hit_zero_before_M", {"M": M, "start": x, "p_up": config.p_up}, hits, config.replicas,
            bound=bound, bound_side="upper", bound_vacuous=bound >= 1.0,
            extras={"exact_solve": star_walk_exact(x, M, config.p_up),
                    "closed_form": bounds.walk_ruin_probability(x, M, config.p_up)},
        ))
    return rows


def float_grid(lo, hi, step):
    if not step > 0 or hi < lo:
        raise InvalidParameterError(f"Bad grid {lo}..{hi} step {step}")
    count = int(round((hi - lo) / step))
    return [round(lo + i * step, 10) for i in range(count + 1)]


def exp_curve(config):
    """lambda_2 and lambda_1 upper bounds for Geometric(p) offspring over a p-grid."""
    records = []
    for p in float_grid(config.p_min, config.p_max, config.p_step):
        upper = bounds.lambda2_upper(p, config.epsilon)
        records.append({
            "p": p, "lambda2_upper": upper.value, "lambda1_upper": bounds.lambda1_upper(p), "capped": upper.capped,
        })
    return records


def exp_exponents(config):
    return bounds.critical_exponent_curves(float_grid(config.alpha_min, config.alpha_max, config.alpha_step))


REGISTRY = {
    "star-persistence": exp_star_persistence,
    "ignite": exp_ignite,
    "transfer": exp_transfer,
    "gw-local": exp_gw_local_survival,
    "config-persistence": exp_config_persistence,
    "lambda-c": exp_lambda_c,
    "star-walk": exp_star_walk_bound,
    "curve": exp_curve,
    "exponents": exp_exponents,
}


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    rows: list

    @property
    def records(self):
        return [row.to_record() if isinstance(row, ResultRow) else row for row in self.rows]

    def summary(self):
        result_rows = [row for row in self.rows if isinstance(row, ResultRow)]
        censored = [row.censored_fraction for row in result_rows if row.censored_fraction is not None]
        return {
            "experiment": self.config.experiment,
            "seed": self.config.seed,
            "config": self.config.to_dict(),
            "rows": len(self.rows),
            "bound_violations": sum(row.violates_bound() for row in result_rows),
            "vacuous_rows": sum(bool(row.bound_vacuous) for row in result_rows),
            "max_censored_fraction": max(censored) if censored else None,
        }


def run_experiment(config):
    """Resolve defaults and run the registered experiment."""
    config = resolve(config)
    logger.info(f"Running {config.experiment} with seed {config.seed}")
    rows = REGISTRY[config.experiment](config)
    result = ExperimentResult(config, rows)
    summary = result.summary()
    if summary["bound_violations"]:
        logger.warning(f"{config.experiment}: {summary['bound_violations']} rows exceed their bound by more than 3 half-widths")
    if summary["max_censored_fraction"] and summary["max_censored_fraction"] > 0.05:
        logger.warning(f"{config.experiment}: censoring reaches {summary['max_censored_fraction']:.1%}")
    stamp = datetime.now(pytz.timezone(get_settings().timezone)).strftime("%Y-%m-%d %H:%M:%S %Z")
    logger.info(f"Finished {config.experiment} at {stamp}: {len(rows)} rows")
    return result


def render(result, fmt="csv"):
    if fmt == "json":
        return render_json({"config": result.config.to_dict(), "rows": result.records, "summary": result.summary()})
    return render_csv(result.records, header=result.config.to_json())


def write_outputs(result, out=None, fmt=None):
    """Write rows to ``out`` (``-`` for stdout) and, for files, the JSON summary and the folder index."""
    fmt = fmt or result.config.format or "csv"
    if out is None:
        folder = get_settings().output_dir
        out = os.path.join(folder, f"{result.config.experiment}.{fmt}")
    write_text(render(result, fmt), out)
    if out == "-":
        return out
    if fmt == "csv":
        write_text(render_json(result.summary()), summary_path(out))
    write_index(os.path.dirname(out) or ".")
    return out
