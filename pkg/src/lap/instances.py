"""Instance families with known closed-form behavior.

The alternating families place one nonzero coordinate per candidate and cycle
it through the dimensions, so a loss-averse observer keeps paying for every
dimension already seen.  The partial-sums family is calibrated so each
row-opening pick nets exactly 1, which pins the online optimum while the best
value grows; the mixed prior bolts a rare huge last candidate on top of it.
The remaining generators are small fixed scenes used by the behavioral
checks, and det_to_iid turns any succinct sequence into an i.i.d. prior whose
realized representation reproduces that sequence with high probability.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from decimal import Decimal, ROUND_CEILING, localcontext
from fractions import Fraction
from typing import Optional, Tuple, Union

from .core import (
    AgentParams,
    FiniteDistribution,
    InvalidInput,
    Number,
    ProductPrior,
    ResourceLimit,
    Sequence,
    ValueVector,
    _coerce,
    is_succinct,
    max_value,
    offline_optimal_biased,
)
from .policies import resolve_budget


def _single_axis(value: Number, dim: int, k: int) -> ValueVector:
    entries = [Fraction(0)] * k
    entries[dim - 1] = value
    return ValueVector(tuple(entries))


def _check_counts(n: int, k: int) -> None:
    if not isinstance(n, int) or n < 1:
        raise InvalidInput("candidate count must be a positive integer")
    if not isinstance(k, int) or k < 1:
        raise InvalidInput("dimension must be a positive integer")


def gen_alternating_geometric(n: int, k: int, beta: Number) -> Sequence:
    """Row r carries value beta^(r-1), cycling one nonzero dimension."""
    _check_counts(n, k)
    beta = _coerce(beta, "beta")
    if beta <= 0:
        raise InvalidInput("beta must be positive")
    rows = []
    for t in range(1, n + 1):
        row = (t - 1) // k
        dim = (t - 1) % k + 1
        rows.append(_single_axis(beta ** row, dim, k))
    return Sequence(tuple(rows))


def gen_alternating_linear(n: int, k: int) -> Sequence:
    """Row r carries value r, cycling one nonzero dimension."""
    _check_counts(n, k)
    rows = []
    for t in range(1, n + 1):
        row = (t - 1) // k + 1
        dim = (t - 1) % k + 1
        rows.append(_single_axis(Fraction(row), dim, k))
    return Sequence(tuple(rows))


def gen_partial_sums(w: int, k: int, beta: Number) -> Sequence:
    """Row i carries 1 + beta + ... + beta^i, cycling one nonzero dimension.

    With beta matching the agent's amplified bias lam*(k-1), each pick that
    opens a row nets utility exactly 1.
    """
    _check_counts(w, k)
    beta = _coerce(beta, "beta")
    if beta <= 0:
        raise InvalidInput("beta must be positive")
    rows = []
    total = Fraction(0)
    for i in range(w):
        total = total + beta ** i
        for dim in range(1, k + 1):
            rows.append(_single_axis(total, dim, k))
    return Sequence(tuple(rows))


def gen_worstcase_mixed(w: int, k: int, lam: Number,
                        epsilon: Number) -> ProductPrior:
    """Partial-sums table followed by one two-atom candidate: a huge value
    with probability epsilon, nothing otherwise."""
    _check_counts(w, k)
    lam = _coerce(lam, "lambda")
    epsilon = _coerce(epsilon, "epsilon")
    if lam < 0:
        raise InvalidInput("lambda must be non-negative")
    if not 0 < epsilon < 1:
        raise InvalidInput("epsilon must lie strictly between 0 and 1")
    beta = lam * (k - 1)
    if beta >= 1:
        raise InvalidInput("needs subcritical bias lam*(k-1) < 1")
    # beta = 0 (k = 1 or lam = 0) collapses every partial sum to 1
    rows = [Fraction(1)]
    for i in range(1, w):
        rows.append(rows[-1] + beta ** i)
    psum = rows[-1]
    big = (1 - epsilon) * (1 + lam) * psum / epsilon
    steps = [FiniteDistribution(((_single_axis(rows[i], dim, k), Fraction(1)),))
             for i in range(w) for dim in range(1, k + 1)]
    steps.append(FiniteDistribution((
        (_single_axis(big, 1, k), epsilon),
        (ValueVector.zero(k), 1 - epsilon))))
    return ProductPrior(tuple(steps))


def gen_identical_value(k: int, q: Number) -> Sequence:
    """Candidate i is worth q on dimension i alone; all picks tie in value."""
    _check_counts(k, k)
    q = _coerce(q, "q")
    if q <= 0:
        raise InvalidInput("q must be positive")
    return Sequence(tuple(_single_axis(q, i, k) for i in range(1, k + 1)))


def gen_salient_feature(k: int, a: Number, q: Number) -> Sequence:
    """Candidate i is worth a everywhere plus a bonus q on dimension i."""
    _check_counts(k, k)
    a = _coerce(a, "a")
    q = _coerce(q, "q")
    if a <= 0:
        raise InvalidInput("a must be positive")
    if q <= 1:
        raise InvalidInput("q must exceed 1")
    rows = []
    for i in range(1, k + 1):
        entries = [a] * k
        entries[i - 1] = a + q
        rows.append(ValueVector(tuple(entries)))
    return Sequence(tuple(rows))


def gen_quality_pair(k: int, q: Number) -> Tuple[Sequence, Sequence]:
    """An identical-value scene and its k-times-richer counterpart."""
    if not isinstance(k, int) or k < 2:
        raise InvalidInput("quality pair needs k > 1")
    q = _coerce(q, "q")
    if q <= 1:
        raise InvalidInput("q must exceed 1")
    return gen_identical_value(k, q), gen_identical_value(k, q * k)


def gen_dominance_pair(k: int, n: int, lam: Number,
                       epsilon: Number) -> Tuple[Sequence, Sequence]:
    """A flat sequence and a point-wise dominating one that is worth less.

    The first repeats a single unit axis and ends on 1+epsilon; the second
    cycles the axes (losses pile up on every dimension) and ends on 1+beta.
    Needs n > k so the cycle closes before the final candidate.
    """
    _check_counts(n, k)
    lam = _coerce(lam, "lambda")
    epsilon = _coerce(epsilon, "epsilon")
    beta = lam * (k - 1)
    if beta <= 0:
        raise InvalidInput("needs lam > 0 and k >= 2 so that lam*(k-1) > 0")
    if not 0 < epsilon < beta:
        raise InvalidInput("epsilon must lie strictly between 0 and lam*(k-1)")
    if n < k + 1:
        raise InvalidInput("needs n >= k+1 so every dimension appears")
    base = tuple(_single_axis(Fraction(1), 1, k) for _ in range(n - 1)) + \
        (_single_axis(1 + epsilon, 1, k),)
    dom = tuple(_single_axis(Fraction(1), (t - 1) % k + 1, k)
                for t in range(1, n)) + (_single_axis(1 + beta, 1, k),)
    return Sequence(base), Sequence(dom)


_RANDOM_VALUE_GRID = tuple(Fraction(i, 2) for i in range(7))


def gen_random_prior(rng, k: int = 2, n_max: int = 4, atoms_max: int = 3,
                     values: Optional[Tuple[Number, ...]] = None
                     ) -> ProductPrior:
    """Small random prior on a coarse rational grid.

    Every draw comes from the caller's rng, so seeded counterexample hunts
    replay exactly.  Supports stay tiny on purpose: these priors feed exact
    enumeration, not sampling.
    """
    _check_counts(n_max, k)
    if atoms_max < 1:
        raise InvalidInput("atoms_max must be a positive integer")
    grid = tuple(_coerce(v, "grid value") for v in values) \
        if values is not None else _RANDOM_VALUE_GRID
    steps = []
    for _ in range(rng.randint(1, n_max)):
        natoms = rng.randint(1, atoms_max)
        support = set()
        while len(support) < natoms:
            support.add(tuple(rng.choice(grid) for _ in range(k)))
        weights = [rng.randint(1, 4) for _ in range(natoms)]
        total = sum(weights)
        steps.append(FiniteDistribution(tuple(
            (ValueVector(vec), Fraction(wt, total))
            for vec, wt in zip(sorted(support), weights))))
    return ProductPrior(tuple(steps))


# ---------------------------------------------------------------------------
# deterministic-to-iid reduction
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ReductionMeta:
    """Parameters of one reduction run.  nominal_n is the candidate count the
    asymptotic argument calls for; it is documentation, simulation always
    goes through an explicit override."""

    m: int
    x: Number
    alpha_exp: float
    nominal_n: int
    epsilon: Number
    log_base: str

    def __post_init__(self):
        if not isinstance(self.m, int) or self.m < 2:
            raise InvalidInput("reduction needs a source length m >= 2")
        if not 0 < self.x < 1:
            raise InvalidInput("decay parameter x must lie in (0, 1)")
        if not isinstance(self.nominal_n, int) or self.nominal_n < 1:
            raise InvalidInput("nominal_n must be a positive integer")
        if not 0 < self.epsilon < 1:
            raise InvalidInput("epsilon must lie strictly between 0 and 1")
        if self.log_base not in ("e", "2"):
            raise InvalidInput("log_base must be 'e' or '2'")


def reduction_probabilities(m: int, x: Number) -> Tuple[Fraction, ...]:
    """Atom probabilities x^(i-1)(1-x)/(1-x^m); exact and summing to 1."""
    if not isinstance(m, int) or m < 2:
        raise InvalidInput("need m >= 2 atoms")
    x = Fraction(x)
    if not 0 < x < 1:
        raise InvalidInput("x must lie in (0, 1)")
    scale = (1 - x) / (1 - x ** m)
    return tuple(x ** (i - 1) * scale for i in range(1, m + 1))


def _nominal_count(m: int, alpha: float, log_of_m: float) -> int:
    try:
        raw = m ** (alpha * (m - 1)) * log_of_m ** alpha
        if raw < 1:
            return 1
        return math.ceil(raw)
    except OverflowError:
        # reconstruct ceil(10^d) digit-wise; low digits are approximate but
        # the magnitude is what matters for a count this large
        d = alpha * (m - 1) * math.log10(m) + alpha * math.log10(log_of_m)
        with localcontext() as ctx:
            ctx.prec = 50
            dec = Decimal(d)
            whole = int(dec)
            mantissa = Decimal(10) ** (dec - whole)
            scaled = mantissa.scaleb(whole)
            return int(scaled.to_integral_value(rounding=ROUND_CEILING))


def det_to_iid(sigma: Sequence, params: AgentParams, epsilon: Number,
               n_override: Optional[int] = None,
               x_override: Optional[Number] = None,
               log_base: Union[str, int] = "e",
               budget: Optional[int] = None
               ) -> Tuple[ProductPrior, ReductionMeta]:
    """Build an i.i.d. prior over sigma's candidates whose realized
    representation equals sigma with high probability.

    The decay exponent alpha comes from the gap between sigma's best value
    and its best biased utility; x_override skips that and fixes the decay
    directly (alpha is then back-derived).  Without n_override the prior uses
    the nominal candidate count, provided it fits the state budget.
    """
    if sigma.k != params.k:
        raise InvalidInput("sequence and params dimensions differ")
    if not is_succinct(sigma):
        raise InvalidInput("reduction needs a succinct sequence")
    m = sigma.n
    if m < 2:
        raise InvalidInput("reduction needs at least two candidates")
    epsilon = _coerce(epsilon, "epsilon")
    if not 0 < epsilon < 1:
        raise InvalidInput("epsilon must lie strictly between 0 and 1")
    if log_base in ("e",):
        base_label, log_of_m = "e", math.log(m)
    elif log_base in (2, "2"):
        base_label, log_of_m = "2", math.log2(m)
    else:
        raise InvalidInput("log_base must be 'e' or 2")

    if x_override is not None:
        x = Fraction(x_override)
        if not 0 < x < 1:
            raise InvalidInput("x_override must lie in (0, 1)")
        alpha = -math.log(x, m)
    else:
        best_value = max_value(sigma)
        best_biased = offline_optimal_biased(
            sigma, params, allow_no_selection=True).utility
        if best_biased <= 0:
            raise InvalidInput("reduction needs positive biased utility")
        alpha = math.log(best_value / (epsilon * best_biased), m) + 2
        x = Fraction(m ** -alpha)

    nominal = _nominal_count(m, alpha, log_of_m)
    meta = ReductionMeta(m=m, x=x, alpha_exp=alpha, nominal_n=nominal,
                         epsilon=epsilon, log_base=base_label)

    if n_override is not None:
        if not isinstance(n_override, int) or n_override < 1:
            raise InvalidInput("n_override must be a positive integer")
        n = n_override
    else:
        cap = resolve_budget(budget)
        if nominal > cap:
            err = ResourceLimit(
                f"nominal candidate count {nominal} exceeds budget {cap}; "
                "pass n_override to simulate at a feasible size")
            err.nominal_n = nominal
            raise err
        n = nominal

    probs = reduction_probabilities(m, x)
    dist = FiniteDistribution(tuple(zip(sigma.candidates, probs)))
    return ProductPrior((dist,) * n), meta


def rows_for_slack(lam: Number, k: int, epsilon: Number) -> int:
    """Smallest row count w with (lam*(k-1))^w <= epsilon."""
    lam = _coerce(lam, "lambda")
    epsilon = _coerce(epsilon, "epsilon")
    if not isinstance(k, int) or k < 1:
        raise InvalidInput("dimension must be a positive integer")
    beta = lam * (k - 1)
    if not 0 < beta < 1:
        raise InvalidInput("needs 0 < lam*(k-1) < 1")
    if not 0 < epsilon < 1:
        raise InvalidInput("epsilon must lie strictly between 0 and 1")
    w = max(1, math.ceil(math.log(epsilon) / math.log(beta)))
    while beta ** w > epsilon:
        w += 1
    while w > 1 and beta ** (w - 1) <= epsilon:
        w -= 1
    return w


def iid_gap_bound_variants(params: AgentParams, n: int,
                           log_base: Union[str, int] = "e") -> dict:
    """Both readings of the supercritical i.i.d. growth exponent.

    The source derivation scales the dimension-dependent coefficient by
    log^(1/2) n and then subtracts 1, but its named shorthand folds the -1
    into the coefficient before scaling.  The two disagree whenever
    log n != 1, so both are reported side by side.
    """
    if not isinstance(n, int) or n < 2:
        raise InvalidInput("need n >= 2 candidates")
    beta = float(params.bias)
    if beta <= 1:
        raise InvalidInput("growth exponent needs supercritical bias > 1")
    if log_base in ("e",):
        lg = math.log
    elif log_base in (2, "2"):
        lg = math.log2
    else:
        raise InvalidInput("log_base must be 'e' or 2")
    k = params.k
    coeff = 1 / math.sqrt(2 * k) * min(1 / math.sqrt(lg(beta)),
                                       1 / (2 * math.sqrt(k)))
    root_log_n = math.sqrt(lg(n))
    outside = coeff * root_log_n - 1
    inside = (coeff - 1) * root_log_n
    return {
        "exponent_minus_one_outside": outside,
        "exponent_minus_one_inside": inside,
        "ratio_lower_bound_outside": beta ** outside,
        "ratio_lower_bound_inside": beta ** inside,
    }
