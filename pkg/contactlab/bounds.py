"""Closed-form survival, hitting and threshold bounds, and the lambda_2 curve solver.

Probability-valued bounds are returned raw; ``BoundReport.clamped`` is the
only place they are cut to [0, 1].
"""
import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple

from scipy import stats

from .errors import InvalidParameterError

logger = logging.getLogger(__name__)

LIGGETT_CAP = 2.0
BRACKET_LOW = 1e-6
EXPAND_LIMIT = 1e6
IGNITE_EXPONENT = 1.0 / 3.0


@dataclass
class BoundReport:
    name: str
    inputs: dict
    values: dict
    probabilities: tuple = ()
    times: tuple = ()
    lower_bounds: tuple = ()
    parts_vacuous: dict = field(default_factory=dict)

    def __post_init__(self):
        for key in self.probabilities:
            value = self.values[key]
            # a lower bound on a probability is empty once it is <= 0
            self.parts_vacuous[key] = value <= 0 if key in self.lower_bounds else value >= 1
        for key in self.times:
            self.parts_vacuous[key] = not (self.values[key] > 0 and math.isfinite(self.values[key]))

    @property
    def vacuous(self):
        return any(self.parts_vacuous.values())

    def clamped(self):
        return {
            key: min(1.0, max(0.0, value)) if key in self.probabilities else value
            for key, value in self.values.items()
        }

    def to_dict(self):
        return {"name": self.name, "inputs": self.inputs, "values": self.values, "vacuous": self.vacuous}


def _positive(name, value):
    if not value > 0:
        raise InvalidParameterError(f"{name} must be > 0, got {value}")


def _exp(x):
    return math.exp(x) if x < 709.0 else math.inf


def _check_epsilon(epsilon, upper=0.5):
    if not 0.0 < epsilon < upper:
        raise InvalidParameterError(f"epsilon must lie in (0, {upper:g}), got {epsilon}")


def fixed_p_level(k, lam):
    """L = pk with p = lambda/(1+2 lambda)."""
    return lam * k / (1.0 + 2.0 * lam)


def exit_bound(a, b, lam):
    """(1+lambda/2)^(b-a), bound on reaching <= b before L from a > b."""
    _positive("lambda", lam)
    if not b < a:
        raise InvalidParameterError(f"exit bound needs b < a, got a={a}, b={b}")
    return (1.0 + lam / 2.0) ** (b - a)


def return_bound(b, L, lam):
    """(2+lambda)(1+lambda/2)^(b-L), bound on dipping to <= b before returning to L."""
    _positive("lambda", lam)
    if not 0 <= b < L:
        raise InvalidParameterError(f"return bound needs 0 <= b < L, got b={b}, L={L}")
    return (2.0 + lam) * (1.0 + lam / 2.0) ** (b - L)


def life_bound(k, lam, epsilon):
    """(S, failure probability): from (L, 1) the infected count stays above epsilon L up to S."""
    _positive("lambda", lam)
    if k < 1:
        raise InvalidParameterError(f"k must be >= 1, got {k}")
    _check_epsilon(epsilon)
    L = fixed_p_level(k, lam)
    log_base = math.log1p(lam / 2.0)
    S = _exp(L * (1.0 - 2.0 * epsilon) * log_base - math.log((2.0 + lam) * 2.0 * k))
    fail = (3.0 + lam) * math.exp(-L * epsilon * log_base)
    return S, fail


def ignite_bounds(k, lam, k_exponent=IGNITE_EXPONENT):
    """Ignition of a star from (0, 1), with K = lambda k^k_exponent.

    ``reach_k_failure`` bounds P(extinct before K leaves), ``reach_l_failure``
    P(extinct before L leaves from K) and ``time_to_l`` the conditional mean
    time to reach L. They read 2 lambda k^(2e-1), k^(-e) and 2/lambda for
    e = ``k_exponent``, so 2 lambda k^(-1/3), k^(-1/3) and 2/lambda at the default.
    """
    _positive("lambda", lam)
    if k < 1:
        raise InvalidParameterError(f"k must be >= 1, got {k}")
    K = lam * k**k_exponent
    L = fixed_p_level(k, lam)
    drift = lam * (1.0 - lam / (1.0 + 2.0 * lam)) * k - L - 1.0 / lam
    values = {
        "K": K,
        "L": L,
        "reach_k_failure": 2.0 * K * K / (lam * k),
        "reach_l_failure": k ** (-k_exponent),
        "reach_l_failure_supermartingale": (1.0 + lam / 2.0) ** (-K),
        "time_to_l": 2.0 / lam,
        "time_to_l_drift": L / drift if drift > 0 else math.inf,
    }
    return BoundReport(
        name="ignite",
        inputs={"k": k, "lambda": lam, "k_exponent": k_exponent},
        values=values,
        probabilities=("reach_k_failure", "reach_l_failure"),
        times=("time_to_l",),
    )


def good_bound(k, lam):
    """1 - (2+2 lambda) k^(-1/3), lower bound on the star staying lit after ignition."""
    _positive("lambda", lam)
    if k < 1:
        raise InvalidParameterError(f"k must be >= 1, got {k}")
    return BoundReport(
        name="good",
        inputs={"k": k, "lambda": lam},
        values={"good": 1.0 - (2.0 + 2.0 * lam) * k ** (-1.0 / 3.0)},
        probabilities=("good",),
        lower_bounds=("good",),
    )


def survival_ub(n, lam, epsilon):
    """(log n) exp((1+epsilon) lambda^2 n), upper bound on the star's mean survival time."""
    if n < 2:
        raise InvalidParameterError(f"n must be >= 2, got {n}")
    if epsilon < 0:
        raise InvalidParameterError(f"epsilon must be >= 0, got {epsilon}")
    return math.log(n) * _exp((1.0 + epsilon) * lam * lam * n)


def persistence_scale(k, lam):
    """exp(lambda^2 k / (2(1+2 lambda))), the growth scale of star survival times."""
    return _exp(lam * lam * k / (2.0 * (1.0 + 2.0 * lam)))


def _relay_rate(lam, epsilon):
    if not 0.0 <= epsilon < 1.0:
        raise InvalidParameterError(f"epsilon must lie in [0, 1), got {epsilon}")
    if lam < 0:
        raise InvalidParameterError(f"lambda must be >= 0, got {lam}")
    return (1.0 - epsilon) * lam / (lam + 1.0)


def transfer_bound(r, lam, epsilon=0.0):
    """lambda_hat^r with lambda_hat = (1-epsilon) lambda/(lambda+1)."""
    if r < 1:
        raise InvalidParameterError(f"r must be >= 1, got {r}")
    return _relay_rate(lam, epsilon) ** r


def transfer_time_bound(r, lam):
    """(lambda/(lambda+1))^r P(Gamma(r, 1+lambda) <= 2r): the relay completes by time 2r."""
    if r < 1:
        raise InvalidParameterError(f"r must be >= 1, got {r}")
    return transfer_bound(r, lam) * float(stats.gamma.cdf(2.0 * r, a=r, scale=1.0 / (1.0 + lam)))


def relay_success_probability(r, lam, horizon):
    """First-attempt relay along r edges finishing by ``horizon``."""
    if r < 1:
        raise InvalidParameterError(f"r must be >= 1, got {r}")
    return transfer_bound(r, lam) * float(stats.gamma.cdf(horizon, a=r, scale=1.0 / (1.0 + lam)))


def infect_bound(r, m, lam, epsilon):
    """(1 - lambda_hat^r)^m: a lit star fails m relay attempts down a chain of length r."""
    if m < 0:
        raise InvalidParameterError(f"m must be >= 0, got {m}")
    if m == 0:
        return 1.0
    success = transfer_bound(r, lam, epsilon)
    if success >= 1.0:
        return 0.0
    return math.exp(m * math.log1p(-success))


def gamma_factor(lam, r_over_k, epsilon=0.0):
    """lambda_hat^(r/k) (1+lambda/2)^((1-2 epsilon) lambda/(1+2 lambda)); above 1 the star chain grows."""
    _positive("lambda", lam)
    _positive("r/k", r_over_k)
    if not 0.0 <= epsilon < 0.5:
        raise InvalidParameterError(f"epsilon must lie in [0, 1/2), got {epsilon}")
    lam_hat = (1.0 - epsilon) * lam / (lam + 1.0)
    return lam_hat**r_over_k * (1.0 + lam / 2.0) ** ((1.0 - 2.0 * epsilon) * lam / (1.0 + 2.0 * lam))


def geometric_r_over_k(p):
    """r/k = log(1-p)/log p for Geometric(p) offspring."""
    if not 0.0 < p < 1.0:
        raise InvalidParameterError(f"p must lie in (0, 1), got {p}")
    return math.log1p(-p) / math.log(p)


class SuffResult(NamedTuple):
    value: float
    holds: bool


def suff_condition(lam, p, epsilon=0.0):
    value = gamma_factor(lam, geometric_r_over_k(p), epsilon)
    return SuffResult(value, value > 1.0)


class Lambda2Upper(NamedTuple):
    value: float
    uncapped: float
    capped: bool


def _bisect(condition, lo, hi, tol):
    # condition(lo) is False and condition(hi) is True
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if condition(mid):
            hi = mid
        else:
            lo = mid
    return hi


def lambda2_upper(p, epsilon=0.0, tol=1e-10):
    """Upper bound on lambda_2 for Geometric(p) offspring, capped at 2.

    ``uncapped`` is the smallest rate (to ``tol``) at which the sufficient
    condition holds; ``capped`` is set when it fails at 2.
    """
    if not tol > 0:
        raise InvalidParameterError(f"tol must be > 0, got {tol}")
    r_over_k = geometric_r_over_k(p)

    def holds(lam):
        return gamma_factor(lam, r_over_k, epsilon) > 1.0

    if holds(BRACKET_LOW):
        return Lambda2Upper(BRACKET_LOW, BRACKET_LOW, False)
    if holds(LIGGETT_CAP):
        uncapped = _bisect(holds, BRACKET_LOW, LIGGETT_CAP, tol)
        return Lambda2Upper(uncapped, uncapped, False)

    lo, hi = LIGGETT_CAP, 2.0 * LIGGETT_CAP
    while not holds(hi):
        lo, hi = hi, 2.0 * hi
        if hi > EXPAND_LIMIT:
            logger.warning(f"Sufficient condition fails up to lambda={EXPAND_LIMIT:g} at p={p}")
            return Lambda2Upper(LIGGETT_CAP, math.inf, True)
    return Lambda2Upper(LIGGETT_CAP, _bisect(holds, lo, hi, tol), True)


def lambda1_upper(p):
    """p/(1-p), bound on lambda_1 for Geometric(p) offspring."""
    if not 0.0 < p < 1.0:
        raise InvalidParameterError(f"p must lie in (0, 1), got {p}")
    return p / (1.0 - p)


def subexponential_r_over_k(mu, delta):
    """-log(1-delta)/log(mu), the chain-to-star ratio available when p_k >= (1-delta)^k."""
    if not mu > 1.0:
        raise InvalidParameterError(f"offspring mean must exceed 1, got {mu}")
    if not 0.0 < delta < 1.0:
        raise InvalidParameterError(f"delta must lie in (0, 1), got {delta}")
    return -math.log1p(-delta) / math.log(mu)


def subexponential_delta(lam, mu, epsilon=0.0):
    """Largest delta for which the sufficient condition holds at rate ``lam``.

    Positive for every lam > 0, so subexponential offspring laws have lambda_2 = 0.
    """
    _positive("lambda", lam)
    if not mu > 1.0:
        raise InvalidParameterError(f"offspring mean must exceed 1, got {mu}")
    growth = (1.0 - 2.0 * epsilon) * lam / (1.0 + 2.0 * lam) * math.log1p(lam / 2.0)
    decay = -math.log((1.0 - epsilon) * lam / (lam + 1.0))
    return -math.expm1(-growth / decay * math.log(mu))


def _check_small_rate_epsilon(lam, epsilon, upper):
    floor = lam / (1.0 + 2.0 * lam)
    if not floor < epsilon < upper:
        raise InvalidParameterError(
            f"Small-rate star bounds need lambda/(1+2 lambda) = {floor:.6g} < epsilon < {upper:g}, got epsilon={epsilon}"
        )


def life2_bound(k, lam, epsilon):
    """(T, failure probability) for a star in the small-rate regime."""
    _positive("lambda", lam)
    _check_small_rate_epsilon(lam, epsilon, 0.25)
    scale = lam * lam * k / 4.0
    return _exp((1.0 - 4.0 * epsilon) * scale), 4.0 * math.exp(-(1.0 - 3.0 * epsilon) * scale)


def ignite2_bounds(k, lam, epsilon=0.1):
    """Small-rate ignition: K = lambda k / sqrt(log k)."""
    _positive("lambda", lam)
    if k < 3:
        raise InvalidParameterError(f"k must be >= 3 so that log k > 1, got {k}")
    _check_small_rate_epsilon(lam, epsilon, 1.0)
    root_log = math.sqrt(math.log(k))
    return BoundReport(
        name="ignite2",
        inputs={"k": k, "lambda": lam, "epsilon": epsilon},
        values={
            "K": lam * k / root_log,
            "reach_k_failure": 5.0 / root_log,
            "reach_l_failure": math.exp(-lam * lam * k / (2.0 * root_log)),
            "time_to_l": 2.0 / epsilon,
        },
        probabilities=("reach_k_failure", "reach_l_failure"),
        times=("time_to_l",),
    )


def leaf_infection_probability(t, lam):
    """Probability a leaf is infected at time t when the center stays infected from time 0."""
    return lam / (lam + 1.0) * -math.expm1(-(lam + 1.0) * t)


class PushBounds(NamedTuple):
    kappa: float
    log_kappa: float
    xfer_prob: float


def push_bounds(n, nu, lam):
    """kappa = n^(3 nu log(2/lambda)) and the transfer bound 1 - exp(-n^(nu log(2/lambda)))."""
    if n < 2:
        raise InvalidParameterError(f"n must be >= 2, got {n}")
    _positive("nu", nu)
    _positive("lambda", lam)
    if not lam < 2.0:
        raise InvalidParameterError(f"push bounds need lambda < 2 so that log(2/lambda) > 0, got {lam}")
    exponent = nu * math.log(2.0 / lam)
    log_kappa = 3.0 * exponent * math.log(n)
    return PushBounds(_exp(log_kappa), log_kappa, -math.expm1(-_exp(exponent * math.log(n))))


@dataclass(frozen=True)
class PowerLawSchedule:
    a: float
    eta: float

    def check(self):
        if not self.a > 2:
            raise InvalidParameterError(f"power-law schedule needs a > 2, got {self.a}")
        if not 0.0 < self.eta < 0.5:
            raise InvalidParameterError(f"power-law schedule needs eta in (0, 1/2), got {self.eta}")


@dataclass(frozen=True)
class StretchedSchedule:
    b: float
    eta: float

    def check(self):
        if not self.b > 1:
            raise InvalidParameterError(f"stretched schedule needs b > 1, got {self.b}")
        if not 0.0 < self.eta < 1.0:
            raise InvalidParameterError(f"stretched schedule needs eta in (0, 1), got {self.eta}")


@dataclass(frozen=True)
class WangPowerLaw:
    a: float

    def check(self):
        _positive("a", self.a)


@dataclass(frozen=True)
class WangStretched:
    b: float

    def check(self):
        _positive("b", self.b)


SCHEDULES = {
    "powerlaw": (PowerLawSchedule, ("a", "eta")),
    "stretched": (StretchedSchedule, ("b", "eta")),
    "wang_powerlaw": (WangPowerLaw, ("a",)),
    "wang_stretched": (WangStretched, ("b",)),
}


def parse_schedule(text):
    """``powerlaw:a=2.5,eta=0.2``, ``stretched:b=2,eta=0.5``, ``wang_powerlaw:a=2.5``, ``wang_stretched:b=2``."""
    name, _, params = text.strip().partition(":")
    if name not in SCHEDULES:
        raise InvalidParameterError(f"Unknown schedule family '{name}'")
    cls, keys = SCHEDULES[name]
    values = {}
    for item in filter(None, params.split(",")):
        key, _, value = item.partition("=")
        try:
            values[key.strip()] = float(value)
        except ValueError as e:
            raise InvalidParameterError(f"Bad value for '{key.strip()}' in schedule '{text}'") from e
    if set(values) != set(keys):
        raise InvalidParameterError(f"Schedule '{text}' needs exactly {', '.join(keys)}")
    return cls(**values)


def schedule_lambda(n, family):
    """Scheduled infection rate lambda(n) for a graph family."""
    if n < 2:
        raise InvalidParameterError(f"n must be >= 2, got {n}")
    family.check()
    log_n = math.log(n)
    if isinstance(family, PowerLawSchedule):
        return n ** (-(1.0 - 2.0 * family.eta) / (2.0 * family.a))
    if isinstance(family, StretchedSchedule):
        return log_n ** ((1.0 - family.eta) * (1.0 - family.b) / 2.0)
    if isinstance(family, WangPowerLaw):
        return n ** (-1.0 / (2.0 * family.a))
    if isinstance(family, WangStretched):
        return log_n ** (-family.b / 2.0)
    raise InvalidParameterError(f"Unknown schedule family {family!r}")


def star_threshold(n, family):
    """Degree k(n) above which a vertex counts as a star."""
    if n < 2:
        raise InvalidParameterError(f"n must be >= 2, got {n}")
    family.check()
    if isinstance(family, PowerLawSchedule):
        return n ** ((1.0 - family.eta) / family.a)
    if isinstance(family, StretchedSchedule):
        return family.eta**family.b * math.log(n) ** family.b
    raise InvalidParameterError(f"{type(family).__name__} defines no star threshold")


def critical_exponent_curves(alpha_grid):
    """Rows ``alpha, beta_meanfield, beta_rigorous`` for tail exponents in (2, 4.5]."""
    rows = []
    for alpha in alpha_grid:
        if not 2.0 < alpha <= 4.5:
            raise InvalidParameterError(f"alpha must lie in (2, 4.5], got {alpha}")
        if alpha < 3.0:
            meanfield = 1.0 / (3.0 - alpha)
        elif alpha == 3.0:
            meanfield = math.inf
        elif alpha <= 4.0:
            meanfield = 1.0 / (alpha - 3.0)
        else:
            meanfield = 1.0
        rigorous = 1.0 / (3.0 - alpha) if alpha <= 2.5 else 2.0 * alpha - 3.0
        rows.append({"alpha": float(alpha), "beta_meanfield": meanfield, "beta_rigorous": rigorous})
    return rows


def walk_ruin_probability(x, M, p_up):
    """P_x(hit 0 before M) for the +1/-1 walk, ((r^x - r^M)/(1 - r^M)), r = (1-p)/p."""
    if not 0 <= x <= M:
        raise InvalidParameterError(f"start must lie in 0..{M}, got {x}")
    if not 0.0 < p_up < 1.0:
        raise InvalidParameterError(f"p_up must lie in (0, 1), got {p_up}")
    if p_up == 0.5:
        return 1.0 - x / M
    ratio = (1.0 - p_up) / p_up
    return (ratio**x - ratio**M) / (1.0 - ratio**M)


def star_walk_bound(M):
    """e^(-0.9 M)."""
    return math.exp(-0.9 * M)


LEMMAS = {
    "exit": (exit_bound, ("a", "b", "lambda")),
    "return": (return_bound, ("b", "L", "lambda")),
    "life": (life_bound, ("k", "lambda", "epsilon")),
    "ignite": (ignite_bounds, ("k", "lambda", "k_exponent")),
    "good": (good_bound, ("k", "lambda")),
    "survival": (survival_ub, ("n", "lambda", "epsilon")),
    "transfer": (transfer_bound, ("r", "lambda", "epsilon")),
    "transfer-time": (transfer_time_bound, ("r", "lambda")),
    "infect": (infect_bound, ("r", "m", "lambda", "epsilon")),
    "gamma": (gamma_factor, ("lambda", "r_over_k", "epsilon")),
    "suff": (suff_condition, ("lambda", "p", "epsilon")),
    "lambda2": (lambda2_upper, ("p", "epsilon", "tol")),
    "lambda1": (lambda1_upper, ("p",)),
    "life2": (life2_bound, ("k", "lambda", "epsilon")),
    "ignite2": (ignite2_bounds, ("k", "lambda", "epsilon")),
    "push": (push_bounds, ("n", "nu", "lambda")),
    "leaf-infection": (leaf_infection_probability, ("t", "lambda")),
    "walk-ruin": (walk_ruin_probability, ("x", "M", "p_up")),
}


def bound_report(name, **inputs):
    """Evaluate lemma ``name`` on keyword inputs and wrap the result in a BoundReport.

    Inputs that are None fall back to the function defaults.
    """
    if name not in LEMMAS:
        raise InvalidParameterError(f"Unknown bound '{name}'; choose from {', '.join(sorted(LEMMAS))}")
    fn, keys = LEMMAS[name]
    args = []
    for position, key in enumerate(keys):
        value = inputs.get(key)
        if value is None:
            if position < fn.__code__.co_argcount - len(fn.__defaults__ or ()):
                raise InvalidParameterError(f"Bound '{name}' needs --{key.replace('_', '-')}")
            break
        args.append(value)
    result = fn(*args)
    if isinstance(result, BoundReport):
        return result
    used = dict(zip(keys, args))
    if isinstance(result, tuple) and hasattr(result, "_asdict"):
        values = {key: (float(v) if not isinstance(v, bool) else v) for key, v in result._asdict().items()}
    elif isinstance(result, tuple):
        values = dict(zip(("horizon", "failure"), (float(v) for v in result)))
    else:
        values = {"value": float(result)}
    probabilities = tuple(key for key in ("value", "failure") if key in values and name in PROBABILITY_BOUNDS)
    return BoundReport(name=name, inputs=used, values=values, probabilities=probabilities)


PROBABILITY_BOUNDS = {"exit", "return", "life", "transfer", "transfer-time", "infect", "life2", "walk-ruin"}
