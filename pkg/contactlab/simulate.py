"""Contact process simulation: exact Gillespie runs on graphs and stars, and the star oracle."""
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import linalg

from . import kernels
from .errors import AuditError, InvalidParameterError, OracleCapError
from .settings import get_settings
from .streams import map_replicas, stream_seed

logger = logging.getLogger(__name__)

DEFAULT_MAX_SAMPLES = 100_000

REASONS = {
    kernels.EXTINCTION: "extinction",
    kernels.HORIZON: "horizon",
    kernels.VERTEX_INFECTED: "vertex_infected",
    kernels.COUNT_AT_LEAST: "count_at_least",
    kernels.COUNT_AT_MOST: "count_at_most",
    kernels.LEAF_AT_LEAST: "leaf_at_least",
    kernels.LEAF_AT_MOST: "leaf_at_most",
}


class StopCondition:
    """Base of the stop-condition variants."""

    def parts(self):
        return (self,)


@dataclass(frozen=True)
class Extinction(StopCondition):
    pass


@dataclass(frozen=True)
class TimeHorizon(StopCondition):
    T: float

    def __post_init__(self):
        if not self.T >= 0:
            raise InvalidParameterError(f"Time horizon must be >= 0, got {self.T}")


@dataclass(frozen=True)
class VertexInfected(StopCondition):
    v: int


@dataclass(frozen=True)
class InfectedCountAtLeast(StopCondition):
    m: int


@dataclass(frozen=True)
class InfectedCountAtMost(StopCondition):
    m: int


@dataclass(frozen=True)
class LeafCountAtLeast(StopCondition):
    """Star runs only: infected leaves >= m."""

    m: int


@dataclass(frozen=True)
class LeafCountAtMost(StopCondition):
    """Star runs only: infected leaves <= m."""

    m: int


@dataclass(frozen=True)
class FirstOf(StopCondition):
    conditions: tuple

    def __init__(self, *conditions):
        flat = []
        for condition in conditions:
            if isinstance(condition, (list, tuple)):
                flat.extend(condition)
            else:
                flat.append(condition)
        object.__setattr__(self, "conditions", tuple(flat))

    def parts(self):
        return tuple(part for condition in self.conditions for part in condition.parts())


@dataclass
class StopPlan:
    """Flattened stop condition in the form the kernels take."""

    horizon: float = math.inf
    target: int = kernels.NO_LIMIT
    count_hi: int = kernels.NO_LIMIT
    count_lo: int = kernels.NO_LIMIT
    leaf_hi: int = kernels.NO_LIMIT
    leaf_lo: int = kernels.NO_LIMIT
    tracked: bool = False


def _tighter(current, value, pick):
    return value if current == kernels.NO_LIMIT else pick(current, value)


def compile_stop(stop, n_vertices, star=False):
    """Reduce ``stop`` to one limit per kind, validating ranges."""
    plan = StopPlan()
    for part in stop.parts():
        if isinstance(part, TimeHorizon):
            plan.horizon = min(plan.horizon, float(part.T))
            continue
        plan.tracked = True
        if isinstance(part, Extinction):
            continue
        if isinstance(part, VertexInfected):
            if not 0 <= part.v < n_vertices:
                raise InvalidParameterError(f"Target vertex {part.v} outside 0..{n_vertices - 1}")
            if star and part.v != 0:
                raise InvalidParameterError("The reduced star chain can only target the center (vertex 0)")
            if plan.target not in (kernels.NO_LIMIT, part.v):
                raise InvalidParameterError("At most one target vertex per run")
            plan.target = int(part.v)
        elif isinstance(part, (InfectedCountAtLeast, InfectedCountAtMost, LeafCountAtLeast, LeafCountAtMost)):
            if part.m < 0:
                raise InvalidParameterError(f"{type(part).__name__} needs m >= 0, got {part.m}")
            if not star and isinstance(part, (LeafCountAtLeast, LeafCountAtMost)):
                raise InvalidParameterError(f"{type(part).__name__} applies to star runs only")
            if isinstance(part, InfectedCountAtLeast):
                plan.count_hi = _tighter(plan.count_hi, int(part.m), min)
            elif isinstance(part, InfectedCountAtMost):
                plan.count_lo = _tighter(plan.count_lo, int(part.m), max)
            elif isinstance(part, LeafCountAtLeast):
                plan.leaf_hi = _tighter(plan.leaf_hi, int(part.m), min)
            else:
                plan.leaf_lo = _tighter(plan.leaf_lo, int(part.m), max)
        else:
            raise InvalidParameterError(f"Unknown stop condition {part!r}")
    return plan


@dataclass(frozen=True)
class StarState:
    """(infected leaves, center infected) on a k-star."""

    i: int
    j: int

    def validate(self, k):
        if not 0 <= self.i <= k or self.j not in (0, 1):
            raise InvalidParameterError(f"Invalid star state ({self.i},{self.j}) for k={k}")
        return self

    @property
    def absorbing(self):
        return self.i == 0 and self.j == 0


@dataclass
class Trajectory:
    """Infected count on a regular time grid."""

    times: np.ndarray
    counts: np.ndarray
    watched: np.ndarray
    truncated: bool = False

    def to_csv(self, header=None):
        rows = [] if header is None else [f"# config: {header}"]
        rows += ["time,infected_count"] + [f"{t:.10g},{c}" for t, c in zip(self.times.tolist(), self.counts.tolist())]
        return "\n".join(rows) + "\n"


@dataclass
class SimOutcome:
    stop_reason: str
    stop_time: float
    n_events: int
    final_infected: int
    censored: bool
    seed: int
    replica: int = 0
    touched_flagged: bool = False
    final_state: Optional[StarState] = None
    trajectory: Optional[Trajectory] = field(default=None, repr=False)

    @property
    def final_infected_count(self):
        return self.final_infected

    def to_dict(self):
        return {
            "stop_reason": self.stop_reason,
            "stop_time": self.stop_time,
            "n_events": self.n_events,
            "final_infected": self.final_infected,
            "censored": self.censored,
            "seed": self.seed,
            "replica": self.replica,
        }

    def to_json(self):
        return json.dumps(self.to_dict())


def _check_rate(lambda_):
    if not (lambda_ >= 0 and math.isfinite(lambda_)):
        raise InvalidParameterError(f"lambda must be finite and >= 0, got {lambda_}")


def _resolve_seed(rng, seed):
    if seed is not None:
        return int(seed)
    if rng is None:
        raise InvalidParameterError("Either rng or seed is required")
    return int(rng.integers(0, 2**32, dtype=np.int64))


def _trajectory(times, counts, watched, horizon):
    """Wrap sampled arrays; an unbounded run that filled the default capacity is marked truncated."""
    truncated = not math.isfinite(horizon) and times.size >= DEFAULT_MAX_SAMPLES
    if truncated:
        logger.warning(
            f"Trajectory kept only the first {DEFAULT_MAX_SAMPLES} samples (up to t={times[-1]:g}); "
            f"set a finite horizon to sample the whole run"
        )
    return Trajectory(times, counts, watched, truncated)


def _sample_capacity(horizon, sample_dt):
    if sample_dt <= 0:
        return 0
    if math.isfinite(horizon):
        return int(horizon / sample_dt) + 1
    return DEFAULT_MAX_SAMPLES


def simulate(g, lambda_, init, stop, rng=None, *, seed=None, replica=0, sample_dt=0.0,
             watch=None, flagged=None):
    """One exact run of the contact process on ``g`` started from the vertex set ``init``.

    Extinction always ends a run. ``flagged`` is a boolean mask; the outcome
    reports whether any flagged vertex was ever infected. ``watch`` records
    one vertex's state on the sampling grid.
    """
    _check_rate(lambda_)
    initial = np.unique(np.asarray(list(init), dtype=np.int64))
    if initial.size and (initial[0] < 0 or initial[-1] >= g.n_vertices):
        raise InvalidParameterError(f"Initial vertices must lie in 0..{g.n_vertices - 1}")
    plan = compile_stop(stop, g.n_vertices)
    seed = _resolve_seed(rng, seed)
    mask = np.zeros(0, dtype=np.bool_) if flagged is None else np.asarray(flagged, dtype=np.bool_)
    if mask.size not in (0, g.n_vertices):
        raise InvalidParameterError("flagged mask must have one entry per vertex")
    watch_vertex = -1 if watch is None else int(watch)

    settings = get_settings()
    (reason, t, events, final, touched, audit_failures,
     times, counts, watched) = kernels.run_graph(
        g.indptr, g.indices, float(lambda_), initial, plan.horizon, plan.target, plan.count_hi,
        plan.count_lo, mask, watch_vertex, float(sample_dt), _sample_capacity(plan.horizon, sample_dt),
        settings.audit_interval, seed,
    )
    if audit_failures:
        logger.error(f"Rate audit failed {audit_failures} times (seed={seed}, lambda={lambda_})")
        raise AuditError(f"Incremental rates drifted from recomputed rates in {audit_failures} audits")

    trajectory = _trajectory(times, counts, watched, plan.horizon) if sample_dt > 0 else None
    return SimOutcome(
        stop_reason=REASONS[reason],
        stop_time=float(t),
        n_events=int(events),
        final_infected=int(final),
        censored=bool(reason == kernels.HORIZON and plan.tracked),
        seed=seed,
        replica=replica,
        touched_flagged=bool(touched),
        trajectory=trajectory,
    )


def simulate_star(k, lambda_, init, stop, rng=None, *, seed=None, replica=0, sample_dt=0.0):
    """Run the 2(k+1)-state chain equivalent to the contact process on ``generate_star(k)``."""
    if k < 1:
        raise InvalidParameterError(f"Star needs k >= 1, got {k}")
    _check_rate(lambda_)
    init.validate(k)
    plan = compile_stop(stop, k + 1, star=True)
    seed = _resolve_seed(rng, seed)
    (reason, t, events, i, j, times, counts, watched) = kernels.run_star(
        int(k), float(lambda_), int(init.i), int(init.j), plan.horizon, plan.target == 0, plan.count_hi,
        plan.count_lo, plan.leaf_hi, plan.leaf_lo, float(sample_dt), _sample_capacity(plan.horizon, sample_dt), seed,
    )
    trajectory = _trajectory(times, counts, watched, plan.horizon) if sample_dt > 0 else None
    return SimOutcome(
        stop_reason=REASONS[reason],
        stop_time=float(t),
        n_events=int(events),
        final_infected=int(i + j),
        censored=bool(reason == kernels.HORIZON and plan.tracked),
        seed=seed,
        replica=replica,
        final_state=StarState(int(i), int(j)),
        trajectory=trajectory,
    )


def first_infection_time_of(g, lambda_, init, target_vertex, horizon, rng=None, **kwargs):
    """Run until ``target_vertex`` is infected, extinction, or ``horizon``."""
    if target_vertex in set(int(v) for v in init):
        raise InvalidParameterError(f"Target vertex {target_vertex} is already infected")
    return simulate(g, lambda_, init, FirstOf(VertexInfected(target_vertex), TimeHorizon(horizon)), rng, **kwargs)


def simulate_replicas(g, lambda_, init, stop, master_seed, replicas, keys=(0,), **kwargs):
    """Independent runs; replica r uses the stream (master_seed, *keys, r)."""
    if replicas < 1:
        raise InvalidParameterError(f"replicas must be >= 1, got {replicas}")
    init = list(init)
    return map_replicas(
        replicas,
        lambda r: simulate(g, lambda_, init, stop, seed=stream_seed(master_seed, *keys, r), replica=r, **kwargs),
    )


def simulate_star_replicas(k, lambda_, init, stop, master_seed, replicas, keys=(0,), **kwargs):
    if replicas < 1:
        raise InvalidParameterError(f"replicas must be >= 1, got {replicas}")
    return map_replicas(
        replicas,
        lambda r: simulate_star(k, lambda_, init, stop, seed=stream_seed(master_seed, *keys, r), replica=r, **kwargs),
    )


def star_generator(k, lambda_):
    """Dense generator of the star chain; state (i, j) has index 2i + j."""
    size = 2 * (k + 1)
    Q = np.zeros((size, size))
    for i in range(k + 1):
        s = 2 * i + 1
        if i < k:
            Q[s, 2 * (i + 1) + 1] = lambda_ * (k - i)
        if i > 0:
            Q[s, 2 * (i - 1) + 1] = i
        Q[s, 2 * i] = 1.0
        s = 2 * i
        if i > 0:
            Q[s, 2 * i + 1] = lambda_ * i
            Q[s, 2 * (i - 1)] = i
    np.fill_diagonal(Q, -Q.sum(axis=1))
    return Q


def star_mean_extinction_times(k, lambda_, cap=None):
    """Mean absorption time from every state, as a (k+1, 2) array indexed [i, j]."""
    cap = get_settings().oracle_cap if cap is None else cap
    if k < 1:
        raise InvalidParameterError(f"Star needs k >= 1, got {k}")
    if k > cap:
        raise OracleCapError(f"k={k} exceeds the exact oracle cap of {cap}")
    _check_rate(lambda_)
    Q = star_generator(k, lambda_)
    transient = Q[1:, 1:]
    times = linalg.solve(-transient, np.ones(transient.shape[0]))
    return np.concatenate([[0.0], times]).reshape(k + 1, 2)


def exact_star_mean_extinction(k, lambda_, init, cap=None):
    """E[T_(0,0)] from ``init`` by solving the first-passage linear system."""
    init.validate(k)
    return float(star_mean_extinction_times(k, lambda_, cap)[init.i, init.j])
