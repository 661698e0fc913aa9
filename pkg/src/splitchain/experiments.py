"""Monte-Carlo experiments checking analytic bounds empirically.

Each experiment draws seeded trials of the relevant sampling process and
compares the estimate against the analytic value, passing when the bound
is respected within three binomial standard deviations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np


@dataclass
class ExperimentResult:
    name: str
    trials: int
    estimate: float
    sigma: float
    ci99: float
    analytic: float
    passed: bool
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"{self.name}: estimate={self.estimate:.6g} "
                f"ci99=+/-{self.ci99:.2g} analytic={self.analytic:.6g} "
                f"trials={self.trials} {status}{' ' + self.detail if self.detail else ''}")


def _sigma(p: float, trials: int) -> float:
    return math.sqrt(max(p * (1 - p), 1e-12) / trials)


def safe_sample(trials: int = 10 ** 6, seed: int = 1) -> ExperimentResult:
    """P(no honest politician among 25 picks of 200 at 80% corruption).

    Picks are independent uniform slots (the analytic (0.8)^25 presumes
    per-slot independence), so each slot is corrupt with probability
    exactly 160/200.
    """
    rng = np.random.default_rng(seed)
    m, gamma = 25, 160 / 200
    all_corrupt = rng.binomial(m, gamma, size=trials) == m
    est = float(np.mean(all_corrupt))
    analytic = gamma ** m
    sigma = _sigma(analytic, trials)
    return ExperimentResult(
        name="safe_sample", trials=trials, estimate=est, sigma=sigma,
        ci99=2.576 * sigma, analytic=analytic,
        passed=abs(est - analytic) <= 3 * sigma)


def honest_proposer_coverage(trials: int = 10 ** 4, seed: int = 1
                             ) -> ExperimentResult:
    """Fraction of rounds where some threshold-witnessed pool misses every
    honest politician after the first re-upload.

    Each of rho = 45 pools is held by delta = 350 committee members who
    each re-upload 5 random pools to 1 random politician, so a member
    covers a given pool with probability (5/45) * (1 - 0.8) = 1/45.
    """
    rng = np.random.default_rng(seed)
    rho, delta, gamma, uploads = 45, 350, 0.8, 5
    p_cover = (uploads / rho) * (1 - gamma)
    covered = rng.binomial(delta, p_cover, size=(trials, rho))
    failures = np.any(covered == 0, axis=1)
    est = float(np.mean(failures))
    analytic = rho * ((rho - uploads) / rho + uploads * gamma / rho) ** delta
    sigma = _sigma(max(analytic, est), trials)
    return ExperimentResult(
        name="honest_proposer_coverage", trials=trials, estimate=est,
        sigma=sigma, ci99=2.576 * sigma, analytic=analytic,
        passed=est <= 0.017 + 3 * sigma,
        detail=f"(bound 0.017, exact formula {analytic:.5f})")


def read_spotcheck(trials: int = 10 ** 4, seed: int = 1) -> ExperimentResult:
    """Undetected-corruption rate of the read spot-check at scaled
    parameters (k = 2000, mu = 0.05, tau = 100).

    The source corrupts tau values; the citizen draws mu*k independent
    uniform keys and misses iff none is corrupted, so the miss rate is
    (1 - tau/k)^(mu*k), bounded by exp(-mu*tau).
    """
    rng = np.random.default_rng(seed)
    k, mu, tau = 2000, 0.05, 100
    k_spot = round(mu * k)
    hits = rng.binomial(k_spot, tau / k, size=trials)
    est = float(np.mean(hits == 0))
    analytic = math.exp(-mu * tau)
    sigma = _sigma(analytic, trials)
    return ExperimentResult(
        name="read_spotcheck", trials=trials, estimate=est, sigma=sigma,
        ci99=2.576 * sigma, analytic=analytic,
        passed=abs(est - analytic) <= 3 * sigma,
        detail=f"(exact miss law {(1 - tau / k) ** k_spot:.5f})")


def write_spotcheck(trials: int = 10 ** 4, seed: int = 1) -> ExperimentResult:
    """Undetected-corruption rate of the frontier spot-check at scaled
    parameters (a = 8, c = 20, tau = 32): corrupt tau of 2^a nodes, draw c
    independent checks; the miss law is (1 - tau/2^a)^c exactly."""
    rng = np.random.default_rng(seed)
    a, c, tau = 8, 20, 32
    hits = rng.binomial(c, tau / (1 << a), size=trials)
    est = float(np.mean(hits == 0))
    analytic = (1 - tau / (1 << a)) ** c
    sigma = _sigma(analytic, trials)
    return ExperimentResult(
        name="write_spotcheck", trials=trials, estimate=est, sigma=sigma,
        ci99=2.576 * sigma, analytic=analytic,
        passed=abs(est - analytic) <= 3 * sigma)


EXPERIMENTS: dict[str, Callable[[int, int], ExperimentResult]] = {
    "safe_sample": safe_sample,
    "honest_proposer_coverage": honest_proposer_coverage,
    "read_spotcheck": read_spotcheck,
    "write_spotcheck": write_spotcheck,
}


def run_experiment(name: str, trials: int | None = None,
                   seed: int = 1) -> ExperimentResult:
    if name not in EXPERIMENTS:
        raise KeyError(f"unknown experiment {name!r}; have {sorted(EXPERIMENTS)}")
    fn = EXPERIMENTS[name]
    if trials is None:
        return fn(seed=seed)
    return fn(trials, seed)
