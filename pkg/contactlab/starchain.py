"""The reduced star chain Y_n.

Y_n counts infected leaves at the times the center is infected. From height
y it moves down one with probability pk/D, up one (capped at floor(L)) with
probability lambda(1-p)k/D, and with probability 1/D loses N infections,
N shifted geometric with success probability lambda/(1+lambda), truncated
at 0.
"""
import logging
import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy import linalg

from . import kernels
from .errors import InvalidParameterError, OracleCapError
from .stats import ProportionEstimate
from .streams import ReplicaPool, chunk_sizes, draw_master_seed, stream_seed

logger = logging.getLogger(__name__)

STATE_CAP = 10_000
FLOOR_SLACK = 1e-9
# rounding slack when the drift at theta* is exactly zero
DRIFT_TOL = 1e-12


@dataclass(frozen=True)
class FixedP:
    """p = lambda/(1+2 lambda)."""

    def p(self, lam):
        return lam / (1.0 + 2.0 * lam)

    def check(self, lam):
        pass


@dataclass(frozen=True)
class SmallLambda:
    """p = (1-epsilon) lambda/(1+lambda), for lambda/(1+2 lambda) < epsilon."""

    epsilon: float

    def p(self, lam):
        return (1.0 - self.epsilon) * lam / (1.0 + lam)

    def check(self, lam):
        if not 0.0 < self.epsilon < 1.0:
            raise InvalidParameterError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        if not lam / (1.0 + 2.0 * lam) < self.epsilon:
            raise InvalidParameterError(
                f"Small-rate supermartingale requires lambda/(1+2 lambda) < epsilon; "
                f"got lambda/(1+2 lambda) = {lam / (1.0 + 2.0 * lam):.6g} >= epsilon = {self.epsilon}"
            )


ChainMode = Union[FixedP, SmallLambda]


@dataclass(frozen=True)
class ChainParams:
    lam: float
    k: int
    mode: ChainMode
    p: float
    L: float
    D: float
    theta_star: float

    @property
    def L_floor(self):
        return int(math.floor(self.L + FLOOR_SLACK))

    @property
    def p_down(self):
        return self.p * self.k / self.D

    @property
    def p_up(self):
        return self.lam * (1.0 - self.p) * self.k / self.D

    @property
    def p_loss(self):
        return 1.0 / self.D

    @property
    def log_q(self):
        """log of 1/(1+lambda), the ratio of the lost-infection law."""
        return -math.log1p(self.lam)


@dataclass(frozen=True)
class YState:
    y: int


def make_params(lam, k, mode=None):
    if not lam > 0:
        raise InvalidParameterError(f"lambda must be > 0, got {lam}")
    if k < 1:
        raise InvalidParameterError(f"k must be >= 1, got {k}")
    mode = FixedP() if mode is None else mode
    mode.check(lam)
    p = mode.p(lam)
    if isinstance(mode, FixedP):
        L = lam * k / (1.0 + 2.0 * lam)
    else:
        L = (1.0 - mode.epsilon) * lam * k / (1.0 + lam)
    D = p * k + lam * (1.0 - p) * k + 1.0
    return ChainParams(lam=float(lam), k=int(k), mode=mode, p=p, L=L, D=D, theta_star=-math.log1p(lam / 2.0))


def sample_N(lam, rng, size=None):
    """Lost infections: P(N = j) = (1/(1+lambda))^j lambda/(1+lambda), j >= 0."""
    if not lam > 0:
        raise InvalidParameterError(f"lambda must be > 0, got {lam}")
    draws = rng.geometric(lam / (1.0 + lam), size) - 1
    return int(draws) if size is None else draws


def step_Y(state, params, rng):
    u = rng.random()
    if u < params.p_down:
        return YState(max(state.y - 1, 0))
    if u < params.p_down + params.p_up:
        return YState(min(state.y + 1, params.L_floor))
    return YState(max(state.y - sample_N(params.lam, rng), 0))


def leaf_drift_coefficient(x, params):
    """(x-1) lambda(1-p) + (1/x-1) p, the per-leaf part of the drift of x^Y.

    Factors as (lambda(1-p)x - p)(x-1)/x, with roots 1 and p/(lambda(1-p)).
    """
    return (x - 1.0) * params.lam * (1.0 - params.p) + (1.0 / x - 1.0) * params.p


def loss_bracket(theta, lam):
    """E[exp(-theta N)] - 1 summed in closed form."""
    em = math.exp(-theta)
    if not em < 1.0 + lam:
        raise InvalidParameterError(f"exp(-theta) = {em:.6g} must be < 1 + lambda = {1.0 + lam:.6g}")
    return (em - 1.0) / (1.0 + lam - em)


def exact_drift(theta, y, params):
    """E[exp(theta Y_1) - exp(theta y) | Y_0 = y] for 0 < y < L, untruncated jumps."""
    if not 0 < y < params.L:
        raise InvalidParameterError(f"y must lie in (0, L) = (0, {params.L:.6g}), got {y}")
    bracket = loss_bracket(theta, params.lam)
    x = math.exp(theta)
    return math.exp(theta * y) * (params.k * leaf_drift_coefficient(x, params) + bracket) / params.D


def smaller_root(params):
    return params.p / (params.lam * (1.0 - params.p))


def supermartingale_margin(params):
    """delta with drift at theta* equal to exp(theta* y)(-delta k + bracket)/D."""
    return -leaf_drift_coefficient(math.exp(params.theta_star), params)


def minimal_k_for_supermartingale(lam, mode=None, k_max=10**9):
    """Smallest k for which the drift at theta* is <= 0 on (0, L), with L > 1."""
    params = make_params(lam, 1, mode)
    delta = supermartingale_margin(params)
    if delta <= 0:
        raise InvalidParameterError(f"No supermartingale at lambda={lam}: per-leaf drift is {-delta:.6g}")
    bracket = loss_bracket(params.theta_star, lam)
    k = max(1, math.ceil(bracket / delta - 1e-12))
    while k <= k_max:
        params = make_params(lam, k, mode)
        if params.L > 1 and exact_drift(params.theta_star, 1, params) <= DRIFT_TOL:
            return k
        k += 1
    raise InvalidParameterError(f"No k <= {k_max} gives a supermartingale at lambda={lam}")


def continuous_drift(params):
    """lambda(1-p)k - pk - 1/lambda, the drift of Y in continuous time."""
    return params.lam * (1.0 - params.p) * params.k - params.p * params.k - 1.0 / params.lam


def ignition_time_bound(params):
    """L / drift, the bound on the expected time to reach L; inf without positive drift."""
    mu = continuous_drift(params)
    return params.L / mu if mu > 0 else math.inf


def drift_profile(params, theta=None, ys=None):
    """Rows ``lambda,k,y,theta,drift`` over integer heights in (0, L)."""
    theta = params.theta_star if theta is None else theta
    if ys is None:
        ys = [y for y in range(1, params.L_floor + 1) if y < params.L]
    return [
        {"lambda": params.lam, "k": params.k, "y": int(y), "theta": theta, "drift": exact_drift(theta, y, params)}
        for y in ys
    ]


def _check_thresholds(params, b, L_int):
    if L_int < 1 or L_int > params.L_floor:
        raise InvalidParameterError(f"L_int must lie in 1..floor(L) = {params.L_floor}, got {L_int}")
    if not 0 <= b < L_int:
        raise InvalidParameterError(f"b must satisfy 0 <= b < L_int, got b={b}, L_int={L_int}")


def hitting_prob_exact(params, a, b, L_int):
    """P_a(Y reaches <= b before >= L_int), by a dense solve over b < y < L_int."""
    _check_thresholds(params, b, L_int)
    if a <= b:
        return 1.0
    if a >= L_int:
        return 0.0
    n = L_int - b - 1
    if n > STATE_CAP:
        raise OracleCapError(f"{n} transient states exceed the dense-solve cap of {STATE_CAP}")
    ys = np.arange(b + 1, L_int)
    q = 1.0 / (1.0 + params.lam)
    loss = params.p_loss * (params.lam / (1.0 + params.lam)) * q ** np.arange(n)
    P = linalg.toeplitz(loss, np.zeros(n))
    P[np.arange(1, n), np.arange(n - 1)] += params.p_down
    P[np.arange(n - 1), np.arange(1, n)] += params.p_up
    # one step below b+1, or a loss of at least y - b
    absorbed = params.p_loss * q ** (ys - b).astype(np.float64)
    absorbed[0] += params.p_down
    h = linalg.solve(np.eye(n) - P, absorbed)
    return float(h[a - b - 1])


def _chunked_hits(kernel, reps, rng, *args):
    if reps < 1:
        raise InvalidParameterError(f"reps must be >= 1, got {reps}")
    master = draw_master_seed(rng)
    sizes = chunk_sizes(reps)
    tasks = [(*args, size, stream_seed(master, c)) for c, size in enumerate(sizes)]
    return sum(ReplicaPool().map(kernel, tasks))


def hitting_prob_mc(params, a, b, L_int, reps, rng):
    """Monte Carlo estimate of ``hitting_prob_exact`` with a Wilson interval."""
    _check_thresholds(params, b, L_int)
    if not b < a < L_int:
        raise InvalidParameterError(f"Start must be interior: need b < a < L_int, got a={a}, b={b}, L_int={L_int}")
    hits = _chunked_hits(
        kernels.y_hits_low, reps, rng, params.L_floor, params.p_down, params.p_up, params.log_q, int(a), int(b), int(L_int)
    )
    logger.debug(f"Hitting estimate lambda={params.lam} k={params.k} a={a} b={b}: {hits}/{reps}")
    return ProportionEstimate.from_counts(hits, reps)


def return_prob_mc(params, b, reps, rng):
    """P_floor(L)(Y reaches <= b before returning to floor(L)) with a Wilson interval."""
    if not 0 <= b < params.L_floor:
        raise InvalidParameterError(f"b must satisfy 0 <= b < floor(L) = {params.L_floor}, got {b}")
    hits = _chunked_hits(
        kernels.y_dips_before_return, reps, rng, params.L_floor, params.p_down, params.p_up, params.log_q, int(b)
    )
    return ProportionEstimate.from_counts(hits, reps)
