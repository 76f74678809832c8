"""Exact oracles on small instances, plus the converse verification harness.

The strategy may depend arbitrarily on the drawn world tuple, and for each
tuple its contribution to the excess probability (or the expected
distortion) is linear in the strategy row, so a deterministic per-tuple
argmin over obtainable datasets is exactly optimal over all randomized
strategies.  That observation makes these oracles exact rather than
approximate: everything below is a finite enumeration.

Ties among optimal datasets are broken by lexicographic dataset order so
reports are reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bounds import epsilon_converse, rate_converse_explicit
from .dispersion import rate_dispersion, tilted_information
from .probability import StochasticKernel
from .rd import d_max as rd_d_max, d_min as rd_d_min, rate_distortion
from .scenario import (
    DEFAULT_ENUMERATION_CAP,
    AlgorithmKernel,
    CapabilityError,
    EnumerationCapError,
    LearningProblem,
    dataset_universe,
    world_tuples,
)


@dataclass(frozen=True)
class OracleReport:
    k: int
    d: float
    epsilon: float
    n_max: int
    n_star: int | None  # None: not found at any n <= n_max
    excess_at_n_star: float | None
    excess_below: float | None  # at n_star - 1 when that size exists
    method: str = "exhaustive"


def _mean_distortion_by_tuple(problem: LearningProblem, wt: np.ndarray) -> np.ndarray:
    """(W^k, H) matrix of k-fold average distortion."""
    if wt.shape[1] == 0:
        raise ValueError("k must be >= 1")
    out = problem.distortion[wt[:, 0]].copy()
    for i in range(1, wt.shape[1]):
        out += problem.distortion[wt[:, i]]
    return out / wt.shape[1]


def _obtainable_by_tuple(problem, universe, wt: np.ndarray) -> np.ndarray:
    """(W^k, T_n) union-rule obtainability."""
    obs = problem.observable_mask()
    union = obs[wt].any(axis=1)  # (W^k, S)
    if universe.n == 0:
        return np.ones((wt.shape[0], 1), dtype=bool)
    return union[:, universe.tuples].all(axis=2)


def _tuple_weights(problem: LearningProblem, wt: np.ndarray) -> np.ndarray:
    return problem.p_w.probs[wt].prod(axis=1)


def _check_cap(problem: LearningProblem, k: int, n: int, cap: int) -> None:
    size = problem.num_w**k * problem.num_samples ** max(n, 1)
    if size > cap:
        raise EnumerationCapError(
            f"|W|^k * |T_n| = {size} exceeds cap {cap}; use monte_carlo_excess "
            "with a fixed strategy instead"
        )


def optimal_excess_probability(
    problem: LearningProblem,
    algorithm: AlgorithmKernel,
    k: int,
    n: int,
    d: float,
    cap: int = DEFAULT_ENUMERATION_CAP,
) -> float:
    """Minimum excess-distortion probability over all strategies at size n."""
    _check_cap(problem, k, n, cap)
    wt = world_tuples(problem, k)
    universe = dataset_universe(problem, n, cap=cap)
    a_rows = algorithm.rows_for(n)
    exceed = (_mean_distortion_by_tuple(problem, wt) > d).astype(float)  # (W^k, H)
    per_t = exceed @ a_rows.T  # (W^k, T)
    per_t = np.where(_obtainable_by_tuple(problem, universe, wt), per_t, np.inf)
    best = per_t.min(axis=1)
    return float(_tuple_weights(problem, wt) @ best)


def optimal_strategy(
    problem: LearningProblem,
    algorithm: AlgorithmKernel,
    k: int,
    n: int,
    d: float,
    cap: int = DEFAULT_ENUMERATION_CAP,
) -> StochasticKernel:
    """The deterministic per-tuple argmin strategy behind the oracle value."""
    _check_cap(problem, k, n, cap)
    wt = world_tuples(problem, k)
    universe = dataset_universe(problem, n, cap=cap)
    a_rows = algorithm.rows_for(n)
    exceed = (_mean_distortion_by_tuple(problem, wt) > d).astype(float)
    per_t = exceed @ a_rows.T
    obtain = _obtainable_by_tuple(problem, universe, wt)
    per_t = np.where(obtain, per_t, np.inf)
    choice = per_t.argmin(axis=1)  # argmin takes the first optimum: lexicographic
    rows = np.zeros((wt.shape[0], len(universe)))
    rows[np.arange(wt.shape[0]), choice] = 1.0
    from_labels = tuple(tuple(problem.w_labels[i] for i in row) for row in wt)
    return StochasticKernel(from_labels, universe.labels, rows, support_mask=obtain)


def min_expected_distortion(
    problem: LearningProblem,
    algorithm: AlgorithmKernel,
    k: int,
    n: int,
    cap: int = DEFAULT_ENUMERATION_CAP,
) -> float:
    """Minimum expected k-fold average distortion over all strategies."""
    _check_cap(problem, k, n, cap)
    wt = world_tuples(problem, k)
    universe = dataset_universe(problem, n, cap=cap)
    a_rows = algorithm.rows_for(n)
    per_t = _mean_distortion_by_tuple(problem, wt) @ a_rows.T
    per_t = np.where(_obtainable_by_tuple(problem, universe, wt), per_t, np.inf)
    return float(_tuple_weights(problem, wt) @ per_t.min(axis=1))


def min_sample_size(
    problem: LearningProblem,
    algorithm: AlgorithmKernel,
    k: int,
    d: float,
    epsilon: float,
    n_max: int,
    cap: int = DEFAULT_ENUMERATION_CAP,
) -> OracleReport:
    """Smallest n <= n_max whose optimal excess probability is <= epsilon.

    "Not found" is a valid outcome (n_star = None).  The minimality witness
    (excess at the returned size and at the size below) is kept in the
    report.
    """
    prev = None
    for n in range(1, n_max + 1):
        if n not in algorithm:
            raise CapabilityError(f"algorithm undefined at n={n} during the scan")
        excess = optimal_excess_probability(problem, algorithm, k, n, d, cap=cap)
        if excess <= epsilon:
            return OracleReport(
                k=k, d=d, epsilon=epsilon, n_max=n_max,
                n_star=n, excess_at_n_star=excess, excess_below=prev,
            )
        prev = excess
    return OracleReport(
        k=k, d=d, epsilon=epsilon, n_max=n_max,
        n_star=None, excess_at_n_star=None, excess_below=prev,
    )


@dataclass(frozen=True)
class MonteCarloEstimate:
    estimate: float
    ci_low: float
    ci_high: float
    trials: int
    seed: int


def monte_carlo_excess(
    problem: LearningProblem,
    algorithm: AlgorithmKernel,
    strategy: StochasticKernel,
    k: int,
    d: float,
    trials: int,
    seed: int,
) -> MonteCarloEstimate:
    """Seeded frequency estimate of a fixed strategy's excess probability.

    Sampling is grouped (worlds, then datasets, then hypotheses) in fixed
    index order, so a given seed always produces the identical estimate.
    The interval is the plain normal approximation at 95%.
    """
    if trials < 100:
        raise ValueError("monte_carlo_excess: need at least 100 trials")
    rng = np.random.default_rng(np.uint64(seed))
    wt = world_tuples(problem, k)
    n = len(strategy.to_labels[0]) if strategy.to_labels else 0
    a_rows = algorithm.rows_for(n)
    mean_d = _mean_distortion_by_tuple(problem, wt)  # (W^k, H)
    weights = _tuple_weights(problem, wt)

    wt_counts = rng.multinomial(trials, weights / weights.sum())
    hits = 0
    for wi in range(wt.shape[0]):
        m = int(wt_counts[wi])
        if m == 0:
            continue
        t_counts = rng.multinomial(m, strategy.rows[wi])
        for ti in np.flatnonzero(t_counts):
            c = int(t_counts[ti])
            h_counts = rng.multinomial(c, a_rows[ti])
            hits += int(h_counts[mean_d[wi] > d].sum())
    est = hits / trials
    half = 1.96 * math.sqrt(max(est * (1.0 - est), 0.0) / trials)
    return MonteCarloEstimate(
        estimate=est, ci_low=max(est - half, 0.0), ci_high=min(est + half, 1.0),
        trials=trials, seed=seed,
    )


# ---------------------------------------------------------------------------
# Verification harness
# ---------------------------------------------------------------------------

MARGIN_TOL_BITS = 1e-9

CSV_COLUMNS = (
    "k", "d", "epsilon", "n_star", "bound_bits", "oracle_bits",
    "margin_bits", "status",
)


@dataclass(frozen=True)
class VerifyPoint:
    k: int
    d: float
    epsilon: float
    status: str  # pass | fail | vacuous | not_found | infeasible
    n_ref: int | None = None
    n_star: int | None = None
    bound_bits: float | None = None
    oracle_bits: float | None = None
    margin_bits: float | None = None
    eps_k: float | None = None
    t1_n: int | None = None
    t1_measured: float | None = None
    t1_bound_raw: float | None = None
    t1_ok: bool | None = None
    reason: str | None = None

    def csv_row(self) -> dict:
        return {
            "k": self.k, "d": self.d, "epsilon": self.epsilon,
            "n_star": self.n_star, "bound_bits": self.bound_bits,
            "oracle_bits": self.oracle_bits, "margin_bits": self.margin_bits,
            "status": self.status,
        }


@dataclass(frozen=True)
class VerificationReport:
    points: tuple[VerifyPoint, ...]
    violations: int
    passes: int
    vacuous: int
    skipped: int

    def to_dict(self) -> dict:
        return {
            "violations": self.violations,
            "passes": self.passes,
            "vacuous": self.vacuous,
            "skipped": self.skipped,
            "points": [vars(p) for p in self.points],
        }


def _reference_size(
    problem, algorithm, d: float, n_max: int, cap: int
) -> int | None:
    """Smallest n at which the curve is solvable strictly above its floor."""
    for n in range(1, n_max + 1):
        if n not in algorithm:
            continue
        try:
            if rd_d_min(problem, algorithm, n, cap=cap) < d - 1e-12:
                return n
        except EnumerationCapError:
            return None
    return None


def verify_converse(
    problem: LearningProblem,
    algorithm: AlgorithmKernel,
    grid,
    n_max: int,
    cap: int = DEFAULT_ENUMERATION_CAP,
    n_rd: int | None = None,
    theorem1_check: bool = True,
) -> VerificationReport:
    """Compare the explicit finite-k rate bound against the exact oracle.

    For every grid point (k, d, epsilon): solve the curve at d (at the
    smallest usable dataset size, or ``n_rd`` when forced), evaluate the
    explicit bound, scan the oracle for the true minimum size, and record
    the margin ``b n*/k - bound``.  Any margin below -1e-9 bits is a hard
    failure.

    Cross-check of the excess-probability converse: when the oracle found
    n*, the optimal strategy one size below must measure an excess
    probability at least as large as the converse's raw value there.

    Vacuous bounds and infeasible points are recorded as such, never as
    passes.
    """
    points: list[VerifyPoint] = []
    for k, d, eps in grid:
        k = int(k)
        base = {"k": k, "d": float(d), "epsilon": float(eps)}
        n_ref = n_rd if n_rd is not None else _reference_size(
            problem, algorithm, d, n_max, cap
        )
        if n_ref is None:
            points.append(VerifyPoint(
                status="infeasible", reason="no dataset size puts d above the floor",
                **base,
            ))
            continue
        dmax = rd_d_max(problem, algorithm, n_ref, cap=cap)
        if math.isfinite(dmax) and d >= dmax - 1e-12:
            points.append(VerifyPoint(
                status="infeasible", n_ref=n_ref,
                reason=f"d >= rate-zero distortion {dmax} at n={n_ref}", **base,
            ))
            continue
        try:
            sol = rate_distortion(problem, algorithm, n_ref, d, cap=cap)
            table = tilted_information(problem, algorithm, sol)
            disp = rate_dispersion(table)
            bound = rate_converse_explicit(sol, disp, k, eps)
        except (ValueError, EnumerationCapError) as exc:
            points.append(VerifyPoint(
                status="infeasible", n_ref=n_ref, reason=str(exc), **base,
            ))
            continue

        oracle = min_sample_size(problem, algorithm, k, d, eps, n_max, cap=cap)

        t1_fields: dict = {}
        if theorem1_check and oracle.n_star is not None:
            n0 = oracle.n_star - 1
            if n0 >= 1 or (n0 == 0 and 0 in algorithm):
                measured = (
                    oracle.excess_below
                    if n0 >= 1
                    else optimal_excess_probability(problem, algorithm, k, 0, d, cap=cap)
                )
                eps_b = epsilon_converse(problem, table, k, n0, cap=cap)
                raw = eps_b.components["raw"]
                t1_fields = {
                    "t1_n": n0,
                    "t1_measured": measured,
                    "t1_bound_raw": raw,
                    "t1_ok": measured >= raw - 1e-12,
                }

        if bound.vacuous:
            points.append(VerifyPoint(
                status="vacuous", n_ref=n_ref, n_star=oracle.n_star,
                eps_k=bound.components.get("eps_k"), **base, **t1_fields,
            ))
            continue
        if oracle.n_star is None:
            points.append(VerifyPoint(
                status="not_found", n_ref=n_ref, bound_bits=bound.value,
                reason=f"no n <= {n_max} meets the excess target", **base,
                **t1_fields,
            ))
            continue
        oracle_bits = problem.b * oracle.n_star / k
        margin = oracle_bits - bound.value
        ok = margin >= -MARGIN_TOL_BITS and t1_fields.get("t1_ok", True)
        points.append(VerifyPoint(
            status="pass" if ok else "fail",
            n_ref=n_ref, n_star=oracle.n_star, bound_bits=bound.value,
            oracle_bits=oracle_bits, margin_bits=margin,
            eps_k=bound.components.get("eps_k"), **base, **t1_fields,
        ))

    violations = sum(1 for p in points if p.status == "fail")
    passes = sum(1 for p in points if p.status == "pass")
    vac = sum(1 for p in points if p.status == "vacuous")
    skipped = len(points) - violations - passes - vac
    return VerificationReport(
        points=tuple(points), violations=violations, passes=passes,
        vacuous=vac, skipped=skipped,
    )
