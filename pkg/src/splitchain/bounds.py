"""Chernoff-bound calculator for committee composition guarantees.

Given population sizes, corruption bounds and the per-citizen committee
probability, computes high-probability bounds on committee size, on good
citizens (honest members that reach at least one honest politician through
the m-fan-out), on bad citizens, and on ``gap = n_g - 2 n_b``.  A
configuration is usable only when gap >= 1, which yields the >2/3 good
supermajority consensus requires.

Tail probabilities follow exp(-KL(shifted, base) * trials).  Each tail term
is budgeted at 2**-(kappa + UNION_MARGIN_BITS) so that the union over all
terms stays below 2**-kappa; deviation terms for committee composition are
evaluated at the mean committee size.  Slack epsilons are found by
root-finding the smallest value meeting the budget, which maximizes the
resulting guarantees.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from scipy.optimize import brentq

from .errors import DomainError, InfeasibleConfig

UNION_MARGIN_BITS = 3


def kl_bernoulli(x: float, y: float) -> float:
    """KL divergence between Bernoulli(x) and Bernoulli(y), nats.

    0*ln(0) is taken as 0; y must lie strictly inside (0, 1).
    """
    if not 0 < y < 1:
        raise DomainError(f"reference probability must be in (0,1), got {y}")
    if not 0 <= x <= 1:
        raise DomainError(f"probability must be in [0,1], got {x}")
    total = 0.0
    if x > 0:
        total += x * math.log(x / y)
    if x < 1:
        total += (1 - x) * math.log((1 - x) / (1 - y))
    return total


@dataclass(frozen=True)
class PopulationParams:
    citizens: int
    alpha: float = 0.75
    gamma: float = 0.8
    fanout: int = 25
    mean_committee: float = 2000.0
    kappa: int = 30
    politicians: int = 200

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise DomainError("alpha must be in (0,1]")
        if not 0 <= self.gamma < 1:
            raise DomainError("gamma must be in [0,1)")
        if self.fanout < 1:
            raise DomainError("fanout must be >= 1")
        if not 0 < self.p < 1:
            raise DomainError("committee probability must be in (0,1)")

    @property
    def p(self) -> float:
        return self.mean_committee / self.citizens


@dataclass
class CommitteeBounds:
    n_star: int
    n_tilde: int
    n_g_star: int
    n_b_tilde: int
    gap_min: float
    epsilons: dict[str, float] = field(default_factory=dict)
    failure_probs: dict[str, float] = field(default_factory=dict)

    @property
    def max_failure(self) -> float:
        return max(self.failure_probs.values())


def committee_size_bounds(params: PopulationParams, eps_c: float
                          ) -> tuple[int, int, float, float]:
    """Size bounds n* = M(p - eps_c), n~ = M(p + eps_c) and their tails."""
    p, M = params.p, params.citizens
    if not 0 < eps_c < min(p, 1 - p):
        if eps_c == 0:
            return (round(M * p), round(M * p), 1.0, 1.0)
        raise DomainError(f"eps_c must be in (0, min(p, 1-p)), got {eps_c}")
    n_star = round(M * (p - eps_c))
    n_tilde = round(M * (p + eps_c))
    p_low = math.exp(-kl_bernoulli(p - eps_c, p) * M)
    p_high = math.exp(-kl_bernoulli(p + eps_c, p) * M)
    return n_star, n_tilde, p_low, p_high


def _term_budget_ln(kappa: int) -> float:
    return (kappa + UNION_MARGIN_BITS) * math.log(2.0)


def _min_epsilon(base: float, trials: float, budget_ln: float, upper: bool) -> float:
    """Smallest shift e with KL(base +/- e, base) * trials >= budget_ln."""
    lo_lim = 1e-12
    hi_lim = (1 - base - 1e-12) if upper else (base - 1e-12)
    if hi_lim <= lo_lim:
        raise InfeasibleConfig("no room for deviation slack")

    def f(e: float) -> float:
        x = base + e if upper else base - e
        return kl_bernoulli(x, base) * trials - budget_ln

    if f(hi_lim) < 0:
        raise InfeasibleConfig("tail budget unreachable at this scale")
    return float(brentq(f, lo_lim, hi_lim, xtol=1e-14, rtol=1e-13))


def solve_slacks(params: PopulationParams) -> dict[str, float]:
    """Minimal slack epsilons meeting the per-term tail budget.

    Minimal slacks maximize every guarantee (n_g*, gap) simultaneously,
    since all bound expressions are monotone in each epsilon.
    """
    budget = _term_budget_ln(params.kappa)
    n_mean = params.mean_committee
    eps_c = _min_epsilon(params.p, params.citizens, budget, upper=True)
    eps_c = max(eps_c, _min_epsilon(params.p, params.citizens, budget, upper=False))
    eps_g = _min_epsilon(params.alpha, n_mean, budget, upper=False)
    gm = params.gamma ** params.fanout
    n_w = (params.alpha - eps_g) * n_mean
    if gm > 0:
        eps_f = _min_epsilon(gm, n_w, budget, upper=True)
    else:
        eps_f = 0.0
    eps_m = _min_epsilon(1 - params.alpha, n_mean, budget, upper=True)
    return {"eps_c": eps_c, "eps_g": eps_g, "eps_f": eps_f, "eps_m": eps_m}


def good_bad_bounds(params: PopulationParams, slacks: dict[str, float],
                    eps_c: float | None = None) -> CommitteeBounds:
    """Bounds on good/bad citizens and the gap for given slacks.

    Raises InfeasibleConfig when gap_min < 1: such a configuration cannot
    guarantee the supermajority consensus needs.
    """
    for name in ("eps_f", "eps_g", "eps_m"):
        if slacks.get(name, -1.0) < 0:
            raise DomainError(f"slack {name} must be >= 0")
    if eps_c is None:
        eps_c = slacks["eps_c"]
    eps_f, eps_g, eps_m = slacks["eps_f"], slacks["eps_g"], slacks["eps_m"]
    alpha, gamma, m = params.alpha, params.gamma, params.fanout
    gm = gamma ** m

    n_star, n_tilde, p_low, p_high = committee_size_bounds(params, eps_c)

    good_frac = (1 - gm - eps_f) * (alpha - eps_g)
    bad_frac = (1 - alpha + eps_m) + (alpha + eps_g) * (gm + eps_f)
    n_g_star = math.floor(good_frac * n_star)
    n_b_tilde = math.ceil(bad_frac * n_tilde)
    bracket = good_frac - 2 * bad_frac
    gap_min = bracket * n_star

    n_mean = params.mean_committee
    n_w = (alpha - eps_g) * n_mean
    failure = {
        "size_low": p_low,
        "size_high": p_high,
        "honest_frac": math.exp(-kl_bernoulli(alpha - eps_g, alpha) * n_mean),
        "fanout": math.exp(-kl_bernoulli(gm + eps_f, gm) * n_w) if gm > 0 else 0.0,
        "malicious_frac": math.exp(-kl_bernoulli(1 - alpha + eps_m, 1 - alpha) * n_mean),
    }

    bounds = CommitteeBounds(
        n_star=n_star, n_tilde=n_tilde, n_g_star=n_g_star,
        n_b_tilde=n_b_tilde, gap_min=gap_min,
        epsilons={"eps_c": eps_c, **{k: slacks[k] for k in ("eps_f", "eps_g", "eps_m")}},
        failure_probs=failure,
    )
    if gap_min < 1:
        raise InfeasibleConfig(
            f"gap_min = {gap_min:.3f} < 1 at mean committee {params.mean_committee}"
        )
    return bounds


def committee_bounds(params: PopulationParams, eps_c: float | None = None
                     ) -> CommitteeBounds:
    """Full pipeline: optimal slacks, then composition bounds."""
    slacks = solve_slacks(params)
    return good_bad_bounds(params, slacks, eps_c=eps_c)


def committee_bounds_exact(params: PopulationParams) -> CommitteeBounds:
    """Composition bounds from exact tail quantiles.

    The Chernoff forms are asymptotic and go vacuous for desk-scale
    committees (a few hundred members); this variant computes the same
    guarantees from exact binomial tails under the identical per-term
    budget, with the all-corrupt-sample probability taken hypergeometric
    for the finite politician population.  At reference scale both methods
    agree (the exact tails are slightly tighter).
    """
    from scipy.stats import binom, hypergeom

    budget = 2.0 ** -(params.kappa + UNION_MARGIN_BITS)
    M, p = params.citizens, params.p
    n_star = int(binom.ppf(budget, M, p))
    n_tilde = int(binom.isf(budget, M, p))
    p_low = float(binom.cdf(n_star - 1, M, p))
    p_high = float(binom.sf(n_tilde, M, p))

    corrupt_pols = round(params.gamma * params.politicians)
    m = min(params.fanout, params.politicians)
    all_corrupt = float(hypergeom.pmf(m, params.politicians, corrupt_pols, m))
    q_bad = (1 - params.alpha) + params.alpha * all_corrupt

    n_g_star = int(binom.ppf(budget, n_star, 1 - q_bad))
    n_b_tilde = int(binom.isf(budget, n_tilde, q_bad))
    p_good = float(binom.cdf(n_g_star - 1, n_star, 1 - q_bad))
    p_bad = float(binom.sf(n_b_tilde, n_tilde, q_bad))

    # gap = n_g - 2 n_b = n - 3 n_b; take the worst guarantee over the
    # probable size range.
    gap_min = math.inf
    p_gap = 0.0
    for n in sorted({n_star, (n_star + n_tilde) // 2, n_tilde}):
        bad_hi = int(binom.isf(budget, n, q_bad))
        gap_min = min(gap_min, n - 3 * bad_hi)
        p_gap = max(p_gap, float(binom.sf((n - 1) // 3, n, q_bad)))

    bounds = CommitteeBounds(
        n_star=n_star, n_tilde=n_tilde, n_g_star=n_g_star,
        n_b_tilde=n_b_tilde, gap_min=float(gap_min),
        epsilons={},
        failure_probs={"size_low": p_low, "size_high": p_high,
                       "good_low": p_good, "bad_high": p_bad,
                       "gap": p_gap})
    if gap_min < 1 or p_gap > budget:
        raise InfeasibleConfig(
            f"gap_min = {gap_min} (tail {p_gap:.2e}) at mean committee "
            f"{params.mean_committee}: cannot guarantee consensus")
    return bounds


def min_mean_committee(alpha: float, gamma: float, fanout: int,
                       citizens: int = 10 ** 6, kappa: int = 30,
                       lo: int = 50, hi: int = 400_000) -> int:
    """Smallest mean committee size with a feasible gap >= 1.

    Binary search; feasibility is monotone in the mean because every slack
    shrinks and every guarantee grows with committee size.
    """

    def feasible(mean: int) -> bool:
        try:
            params = PopulationParams(
                citizens=citizens, alpha=alpha, gamma=gamma,
                fanout=fanout, mean_committee=float(mean), kappa=kappa)
            committee_bounds(params)
            return True
        except (InfeasibleConfig, DomainError):
            return False

    if not feasible(hi):
        raise InfeasibleConfig(
            f"no feasible committee size up to {hi} for alpha={alpha}, gamma={gamma}")
    if feasible(lo):
        return lo
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if feasible(mid):
            hi = mid
        else:
            lo = mid
    return hi
