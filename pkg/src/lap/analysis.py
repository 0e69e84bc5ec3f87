"""Expectation engines, performance ratios, bound checks, and paradox probes.

Exact arithmetic is the default everywhere: expectations over enumerable
priors are computed as Fraction sums, and the two headline inequalities are
checked without rounding.  Monte Carlo estimators exist for the instances
whose exact enumeration is out of reach; they are seeded and replayable.
"""

import math
import random
from bisect import bisect_right
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Dict, Optional, Tuple

from .core import (
    AgentParams,
    FiniteDistribution,
    InvalidInput,
    Number,
    ProductPrior,
    Sequence,
    ValueVector,
    higher_quality,
    number_to_json,
    offline_optimal_biased,
    offline_optimal_prophet_utility,
    prior_to_json,
    representation,
)
from .policies import (
    Policy,
    compile_policy,
    guarantee_alphas,
    optimal_biased_policy,
    optimal_rational_policy,
    resolve_budget,
    run_rule,
    threshold_from_alpha,
    value_max_distribution,
)

# Normal-approximation confidence multiplier for all Monte Carlo intervals.
CI_Z = 1.96

ROW_FIELDS = ("lambda", "k", "bias", "n", "e_upr", "e_ugr", "e_ugb",
              "prophet_ratio", "online_ratio", "regime", "instance_id",
              "seed")


class _NonPositiveDenominator:
    """Singleton marker for ratios whose denominator is not positive."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "NonPositiveDenominator"


NonPositiveDenominator = _NonPositiveDenominator()


@dataclass(frozen=True)
class EstimateWithCI:
    """Monte Carlo mean with a CI_Z-sigma half width; fully replayable."""

    mean: float
    half_width: float
    trials: int
    seed: Optional[int]


@dataclass(frozen=True)
class RatioReport:
    """The three benchmark expectations and their competitive ratios.

    e_prophet_rational is the expected best achievable value E[V*],
    e_gambler_rational_opt the optimal online expected value, and
    e_gambler_biased_opt the optimal online expected utility under
    comparison bias.  Ratios divide the first two by the third and fall
    back to NonPositiveDenominator when that is not positive.
    """

    e_prophet_rational: Number
    e_gambler_rational_opt: Number
    e_gambler_biased_opt: Number
    prophet_ratio: Any
    online_ratio: Any
    bias: Number
    regime: str


@dataclass(frozen=True)
class CheckResult:
    """Outcome of one inequality check, with enough detail to audit it."""

    name: str
    passed: bool
    lhs: Number
    rhs: Number
    detail: Dict[str, Any] = field(default_factory=dict)
    counterexample: Optional[Dict[str, Any]] = None


@dataclass(frozen=True)
class QualityParadoxReport:
    """Offline optima of a lower- and a higher-quality sequence side by
    side, plus the two comparisons that make the quality paradox."""

    prophet_low: Number
    prophet_high: Number
    gambler_low: Number
    gambler_high: Number
    prophet_worse_on_higher: bool
    gambler_better_on_higher: bool


# ---------------------------------------------------------------------------
# expectation engines
# ---------------------------------------------------------------------------


def exact_expectation(prior: ProductPrior, policy: Policy,
                      params: AgentParams, allow_no_selection: bool = True,
                      budget: Optional[int] = None) -> Number:
    """Exact expected utility of a policy: mixing arms times realizations.

    Enumerates the full product support, so the prior's support size counts
    against the state budget.
    """
    limit = resolve_budget(budget)
    compiled = compile_policy(policy, prior, params, allow_no_selection,
                              budget)
    total = Fraction(0)
    for weight, rule in compiled.arms:
        acc = Fraction(0)
        for sigma, p in prior.realizations(limit):
            acc += p * run_rule(rule, sigma, params).utility
        total += weight * acc
    return total


def _float_cums(dist: FiniteDistribution) -> Tuple[float, ...]:
    acc = 0.0
    cums = []
    for _, p in dist.atoms:
        acc += float(p)
        cums.append(acc)
    return tuple(cums)


def _pick(cums, rng: random.Random) -> int:
    i = bisect_right(cums, rng.random())
    return i if i < len(cums) else len(cums) - 1


def _sequence_sampler(prior: ProductPrior):
    """One uniform draw per step against precomputed cumulative weights."""
    tables = [(tuple(v for v, _ in d.atoms), _float_cums(d))
              for d in prior.steps]

    def draw(rng: random.Random) -> Sequence:
        return Sequence(tuple(vecs[_pick(cums, rng)]
                              for vecs, cums in tables))

    return draw


def _finish_estimate(total: float, total_sq: float, trials: int,
                     seed: Optional[int]) -> EstimateWithCI:
    mean = total / trials
    if trials > 1:
        var = max(total_sq / trials - mean * mean, 0.0)
        var *= trials / (trials - 1)
    else:
        var = 0.0
    return EstimateWithCI(mean, CI_Z * math.sqrt(var / trials), trials, seed)


def monte_carlo(prior: ProductPrior, policy: Policy, params: AgentParams,
                trials: int, seed: Optional[int],
                allow_no_selection: bool = True,
                budget: Optional[int] = None) -> EstimateWithCI:
    """Sampled expected utility with a CI_Z-sigma normal half width.

    One rng seeded with `seed` drives everything: each trial first draws
    the policy's mixing arm, then the candidate sequence, so a rerun with
    the same arguments is bit identical.  The policy's own seed is not
    consulted here.
    """
    if trials <= 0:
        raise InvalidInput("trials must be positive")
    compiled = compile_policy(policy, prior, params, allow_no_selection,
                              budget)
    draw = _sequence_sampler(prior)
    rng = random.Random(seed)
    total = 0.0
    total_sq = 0.0
    for _ in range(trials):
        rule = compiled.draw_rule(rng)
        u = float(run_rule(rule, draw(rng), params).utility)
        total += u
        total_sq += u * u
    return _finish_estimate(total, total_sq, trials, seed)


# ---------------------------------------------------------------------------
# benchmark ratios
# ---------------------------------------------------------------------------


def _expectation_of(dist: Dict[Number, Number]) -> Number:
    return sum((v * p for v, p in dist.items()), Fraction(0))


def _e_sum_dim_maxima(prior: ProductPrior) -> Number:
    """E[sum_j S_j*]: per-dimension max convolution, summed by linearity."""
    total = Fraction(0)
    for j in range(prior.k):
        dist: Dict[Number, Number] = {Fraction(0): Fraction(1)}
        for step in prior.steps:
            nxt: Dict[Number, Number] = {}
            for cur, p in dist.items():
                for v, q in step.atoms:
                    key = max(cur, v.entries[j])
                    nxt[key] = nxt.get(key, Fraction(0)) + p * q
            dist = nxt
        total += _expectation_of(dist)
    return total


def _ratio_or_sentinel(num: Number, den: Number):
    if den <= 0:
        return NonPositiveDenominator
    return num / den


def ratio_report(prior: ProductPrior, params: AgentParams,
                 budget: Optional[int] = None) -> RatioReport:
    """Compare the rational prophet, the rational gambler, and the biased
    gambler on one prior, all at their respective optima."""
    if prior.k != params.k:
        raise InvalidInput("prior and params dimensions differ")
    e_upr = _expectation_of(value_max_distribution(prior))
    e_ugr = optimal_rational_policy(prior, budget).expected_utility
    e_ugb = optimal_biased_policy(prior, params, True,
                                  budget).expected_utility
    return RatioReport(
        e_prophet_rational=e_upr,
        e_gambler_rational_opt=e_ugr,
        e_gambler_biased_opt=e_ugb,
        prophet_ratio=_ratio_or_sentinel(e_upr, e_ugb),
        online_ratio=_ratio_or_sentinel(e_ugr, e_ugb),
        bias=params.bias,
        regime=params.regime,
    )


def _cell(x):
    if x is NonPositiveDenominator:
        return "NonPositiveDenominator"
    return number_to_json(x)


def ratio_row(report: RatioReport, params: AgentParams, n: int,
              instance_id: str, seed: Optional[int] = None
              ) -> Dict[str, Any]:
    """Flatten a report into the one row shape shared by CSV and JSON."""
    return {
        "lambda": _cell(params.lam),
        "k": params.k,
        "bias": _cell(report.bias),
        "n": n,
        "e_upr": _cell(report.e_prophet_rational),
        "e_ugr": _cell(report.e_gambler_rational_opt),
        "e_ugb": _cell(report.e_gambler_biased_opt),
        "prophet_ratio": _cell(report.prophet_ratio),
        "online_ratio": _cell(report.online_ratio),
        "regime": report.regime,
        "instance_id": instance_id,
        "seed": seed,
    }


def gamma_of(prior: ProductPrior) -> Number:
    """E[sum_j S_j*] / E[V*], the dimension-spread factor in [1, k]."""
    e_v = _expectation_of(value_max_distribution(prior))
    if e_v <= 0:
        raise InvalidInput("gamma needs a positive expected best value")
    return _e_sum_dim_maxima(prior) / e_v


# ---------------------------------------------------------------------------
# inequality verifiers
# ---------------------------------------------------------------------------


def _require_subcritical(prior: ProductPrior, params: AgentParams) -> None:
    if prior.k != params.k:
        raise InvalidInput("prior and params dimensions differ")
    if params.bias >= 1:
        raise InvalidInput(
            f"bound needs subcritical bias, got {params.bias}")


def verify_prophet_bound(prior: ProductPrior, params: AgentParams,
                         budget: Optional[int] = None) -> CheckResult:
    """Check the guarantee against the rational prophet on one prior.

    Both threshold policies built from the guarantee alphas, and the
    optimal biased policy, must reach
    (1 - bias) * max(E[sum_j S_j*] / (1+lam+k), E[V*] / (2+lam)).
    """
    _require_subcritical(prior, params)
    lam, k = params.lam, params.k
    e_v = _expectation_of(value_max_distribution(prior))
    e_sum = _e_sum_dim_maxima(prior)
    alphas = sorted(guarantee_alphas(params))
    exps = [exact_expectation(prior, Policy.from_alpha(a), params,
                              budget=budget) for a in alphas]
    best = max(exps)
    opt = optimal_biased_policy(prior, params, True,
                                budget).expected_utility
    route_dims = (1 - params.bias) * e_sum / (1 + lam + k)
    route_value = (1 - params.bias) * e_v / (2 + lam)
    rhs = max(route_dims, route_value)
    passed = best >= rhs and opt >= rhs
    detail = {
        "gamma": _ratio_or_sentinel(e_sum, e_v),
        "e_best_value": e_v,
        "e_sum_dim_maxima": e_sum,
        "alpha_low": alphas[0],
        "alpha_high": alphas[1],
        "threshold_expectation_low": exps[0],
        "threshold_expectation_high": exps[1],
        "best_threshold_expectation": best,
        "rhs_dims_route": route_dims,
        "rhs_value_route": route_value,
    }
    counterexample = None
    if not passed:
        counterexample = {
            "prior": prior_to_json(prior),
            "lambda": number_to_json(lam),
            "k": k,
            "best_threshold_expectation": number_to_json(best),
            "optimal_biased_expectation": number_to_json(opt),
            "rhs": number_to_json(rhs),
        }
    return CheckResult("prophet-bound", passed, opt, rhs, detail,
                       counterexample)


def verify_online_bound(prior: ProductPrior, params: AgentParams,
                        budget: Optional[int] = None) -> CheckResult:
    """Check (1 - bias) * E[U_gr*] <= (1 + lam) * E[U_gb*], the
    cross-multiplied cap on how much bias can cost an optimal gambler."""
    _require_subcritical(prior, params)
    e_gr = optimal_rational_policy(prior, budget).expected_utility
    e_gb = optimal_biased_policy(prior, params, True,
                                 budget).expected_utility
    lhs = (1 - params.bias) * e_gr
    rhs = (1 + params.lam) * e_gb
    passed = lhs <= rhs
    detail = {"e_gambler_rational_opt": e_gr, "e_gambler_biased_opt": e_gb}
    counterexample = None
    if not passed:
        counterexample = {
            "prior": prior_to_json(prior),
            "lambda": number_to_json(params.lam),
            "k": params.k,
            "lhs": number_to_json(lhs),
            "rhs": number_to_json(rhs),
        }
    return CheckResult("online-bound", passed, lhs, rhs, detail,
                       counterexample)


# ---------------------------------------------------------------------------
# paradox probes
# ---------------------------------------------------------------------------


def _extends(base: Sequence, extended: Sequence) -> bool:
    if base.k != extended.k or base.n > extended.n:
        return False
    return (extended.candidates[:base.n] == base.candidates
            or extended.candidates[-base.n:] == base.candidates)


def detect_paradox_of_choice(base: Sequence, extended: Sequence,
                             params: AgentParams,
                             agent: str = "prophet") -> bool:
    """True when widening the slate strictly hurts the given offline agent.

    `extended` must contain `base` as a prefix or a suffix.  The prophet
    agent compares best-pick utilities; the gambler agent compares offline
    optima with the no-selection exit available.
    """
    if agent not in ("prophet", "gambler"):
        raise InvalidInput(f"unknown agent {agent!r}")
    if base.k != params.k:
        raise InvalidInput("sequence and params dimensions differ")
    if not _extends(base, extended):
        raise InvalidInput(
            "second sequence must extend the first at one end")
    if agent == "prophet":
        u_base = offline_optimal_prophet_utility(base, params)
        u_ext = offline_optimal_prophet_utility(extended, params)
    else:
        u_base = offline_optimal_biased(base, params, True).utility
        u_ext = offline_optimal_biased(extended, params, True).utility
    return u_ext < u_base


def detect_quality_paradox(low: Sequence, high: Sequence,
                           params: AgentParams) -> QualityParadoxReport:
    """Compare offline optima across a quality-ordered pair of sequences.

    `high` must be strictly higher quality than `low` (its worst candidate
    beats the other's best).  The paradox is a prophet that does worse on
    the better slate while the gambler does better.
    """
    if low.k != params.k or high.k != params.k:
        raise InvalidInput("sequence and params dimensions differ")
    if not higher_quality(high, low):
        raise InvalidInput(
            "second sequence must be strictly higher quality")
    p_low = offline_optimal_prophet_utility(low, params)
    p_high = offline_optimal_prophet_utility(high, params)
    g_low = offline_optimal_biased(low, params, True).utility
    g_high = offline_optimal_biased(high, params, True).utility
    return QualityParadoxReport(
        prophet_low=p_low,
        prophet_high=p_high,
        gambler_low=g_low,
        gambler_high=g_high,
        prophet_worse_on_higher=p_high < p_low,
        gambler_better_on_higher=g_high > g_low,
    )


# ---------------------------------------------------------------------------
# reduction diagnostics
# ---------------------------------------------------------------------------


def _code_tables(prior: ProductPrior, target: Sequence):
    """Per step: cumulative weights plus each atom's role relative to the
    target representation (its index there, -1 for zero, -2 for foreign)."""
    index_of = {c.entries: i for i, c in enumerate(target.candidates)}
    tables = []
    for dist in prior.steps:
        codes = tuple(-1 if v.is_zero else index_of.get(v.entries, -2)
                      for v, _ in dist.atoms)
        tables.append((codes, _float_cums(dist)))
    return tables


def representation_match_rate(prior: ProductPrior, sigma: Sequence,
                              trials: int, seed: Optional[int]
                              ) -> EstimateWithCI:
    """Sampled probability that a draw from the prior represents sigma:
    every distinct candidate appears and first occurrences keep order."""
    if trials <= 0:
        raise InvalidInput("trials must be positive")
    target = representation(sigma)
    tables = _code_tables(prior, target)
    m = target.n
    rng = random.Random(seed)
    hits = 0
    for _ in range(trials):
        expect = 0
        dead = False
        for codes, cums in tables:
            code = codes[_pick(cums, rng)]
            if dead or code == -1 or 0 <= code < expect:
                continue
            if code == expect:
                expect += 1
            else:
                dead = True  # foreign candidate or one seen out of order
        if not dead and expect == m:
            hits += 1
    # 0/1 outcomes: the sum and the sum of squares are both the hit count
    return _finish_estimate(float(hits), float(hits), trials, seed)


def adjacent_inversion_rate(prior: ProductPrior, sigma: Sequence,
                            index: int, trials: int,
                            seed: Optional[int]) -> EstimateWithCI:
    """Sampled probability that distinct candidate index+1 first appears
    before candidate index, conditioned on either appearing at all.

    The trials field of the estimate reports the conditioning count.
    """
    if trials <= 0:
        raise InvalidInput("trials must be positive")
    target = representation(sigma)
    if not 1 <= index < target.n:
        raise InvalidInput(f"no adjacent pair starts at index {index}")
    tables = _code_tables(prior, target)
    lo, hi = index - 1, index
    rng = random.Random(seed)
    qualifying = 0
    inversions = 0
    for _ in range(trials):
        pos_lo = pos_hi = None
        for t, (codes, cums) in enumerate(tables):
            code = codes[_pick(cums, rng)]
            if pos_lo is None and code == lo:
                pos_lo = t
            elif pos_hi is None and code == hi:
                pos_hi = t
        if pos_lo is None and pos_hi is None:
            continue
        qualifying += 1
        if pos_lo is None or (pos_hi is not None and pos_hi < pos_lo):
            inversions += 1
    if qualifying == 0:
        raise InvalidInput("no sampled sequence contained either candidate")
    return _finish_estimate(float(inversions), float(inversions),
                            qualifying, seed)
