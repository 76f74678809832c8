"""Tilted information, rate-dispersion and diagnostics around a solved point.

The tilted information of a support cell (w, h) at distortion level d is

    j(w, h) = iota(w; h) + lambda* . (d(w, h) - d)      [bits],

where iota is the information density of the optimal induced joint and
lambda* the curve's negative slope in bits per distortion unit.  Its
expectation equals the rate at d; its variance V is the rate-dispersion,
whose within-world / between-world split

    V = V_in + V_bet,
    V_in  = E_W[ Var_{H|W}(j) ]          (overfitting side)
    V_bet = Var_W( E_{H|W}[j] )          (inductive-bias-mismatch side)

is refined here into eight sub-terms via the kernel factorization
P(T|W) . P(H|T): variance over datasets of the per-dataset mean, mean over
datasets of the per-dataset variance (for both the density and the
distortion), and the signed density-distortion covariances.  Covariance
sub-terms are reported signed, never asserted negative.

Also in this module: k-fold additivity of the tilted information, the
Berry-Esseen constant 6 A3 / V^{3/2}, remove-one uniform stability, its
Efron-Stein variance check under repeated single-world sampling, and the
rate <= I(W;H) <= I(T;H) chain under that sampling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .information import LN2, information_density, mutual_information
from .probability import JointDistribution, StochasticKernel, joint, marginal
from .rd import RDSolution, rate_at_distortion_floor, rate_distortion, d_min as rd_d_min, d_max as rd_d_max
from .scenario import (
    DEFAULT_ENUMERATION_CAP,
    AlgorithmKernel,
    LearningProblem,
    expected_distortion_by_dataset,
    iid_kernel,
)

SUBTERM_NAMES = (
    "v_in_iota_S",
    "v_in_iota_A",
    "v_in_d_S",
    "v_in_d_A",
    "v_in_cov",
    "v_bet_iota",
    "v_bet_d",
    "v_bet_cov",
)


@dataclass(frozen=True)
class TiltedTable:
    """Per-cell tilted information (bits) over the induced joint's support."""

    d: float
    lambda_star: float  # bits per distortion unit
    values: np.ndarray  # (W, H); -inf on zero-mass cells
    joint: JointDistribution

    def atoms(self) -> tuple[np.ndarray, np.ndarray]:
        """Support values and their probabilities, as flat arrays."""
        m = self.joint.mass
        pos = m > 0.0
        return self.values[pos], m[pos]

    def expectation_bits(self) -> float:
        vals, probs = self.atoms()
        return float(probs @ vals)

    def central_moment(self, order: int, absolute: bool = False) -> float:
        vals, probs = self.atoms()
        dev = vals - float(probs @ vals)
        if absolute:
            dev = np.abs(dev)
        return float(probs @ dev**order)


@dataclass(frozen=True)
class DispersionReport:
    """Rate-dispersion and (optionally) its full sub-term decomposition."""

    d: float
    lambda_star: float
    V: float  # bits^2
    A3: float  # bits^3
    V_in: float | None = None
    V_bet: float | None = None
    subterms: dict[str, float] | None = None

    def to_dict(self) -> dict:
        out = {
            "d": self.d,
            "lambda_star": self.lambda_star,
            "V": self.V,
            "A3": self.A3,
        }
        if self.V_in is not None:
            out["V_in"] = self.V_in
            out["V_bet"] = self.V_bet
            out.update(self.subterms)
        return out


def tilted_information(
    problem: LearningProblem, algorithm: AlgorithmKernel, sol: RDSolution
) -> TiltedTable:
    """Tilted-information table at a solved point.

    Refuses flagged solutions: without the expected-distortion equality at
    the optimum (and a positive multiplier) the quantity is not defined.
    """
    if sol.flagged:
        raise ValueError(
            f"tilted information undefined for a flagged solution: {sol.meta.flags}"
        )
    if not sol.lambda_star > 0.0:
        raise ValueError("tilted information needs a positive multiplier")
    dens = information_density(sol.induced_joint)
    values = dens.values / LN2 + sol.lambda_star * (problem.distortion - sol.d)
    table = TiltedTable(
        d=sol.d, lambda_star=sol.lambda_star, values=values, joint=sol.induced_joint
    )
    gap = abs(table.expectation_bits() - sol.rate_bits)
    if gap > 1e-8:
        raise ValueError(
            f"tilted expectation misses the rate by {gap} bits; "
            "the solution does not attain the distortion equality"
        )
    return table


def rate_dispersion(table: TiltedTable) -> DispersionReport:
    """Variance and third absolute central moment of the tilted information."""
    return DispersionReport(
        d=table.d,
        lambda_star=table.lambda_star,
        V=table.central_moment(2),
        A3=table.central_moment(3, absolute=True),
    )


def tilted_information_k(table: TiltedTable, w_tuple, h_tuple) -> float:
    """k-fold tilted information: the exact sum of the single-letter cells."""
    if len(w_tuple) != len(h_tuple):
        raise ValueError("w_tuple and h_tuple must have equal length")
    w_labels, h_labels = table.joint.axes
    total = 0.0
    for w, h in zip(w_tuple, h_tuple):
        total += float(table.values[w_labels.index(w), h_labels.index(h)])
    return total


def _weighted_var(weights: np.ndarray, values: np.ndarray) -> float:
    mean = float(weights @ values)
    return float(weights @ (values - mean) ** 2)


def decompose_dispersion(
    problem: LearningProblem,
    algorithm: AlgorithmKernel,
    sol: RDSolution,
    table: TiltedTable,
) -> DispersionReport:
    """Full sub-term decomposition of the rate-dispersion.

    Every term is an exact summation against the factorized optimum
    (P(T|W) from the solver, the learner's kernel on top).  Zero-mass
    worlds contribute nothing and are skipped.
    """
    p = sol.kernel.rows  # (W, T)
    n = len(sol.kernel.to_labels[0]) if sol.kernel.to_labels else 0
    a_rows = algorithm.rows_for(n)  # (T, H)
    pw = problem.p_w.probs
    lam = sol.lambda_star
    dist = problem.distortion
    phw = sol.induced_joint.mass / np.where(pw[:, None] > 0.0, pw[:, None], 1.0)

    agg = dict.fromkeys(SUBTERM_NAMES[:5], 0.0)
    v_in_total = 0.0
    mean_iota_w = np.zeros(problem.num_w)
    mean_d_w = np.zeros(problem.num_w)
    active = pw > 0.0
    for w in np.flatnonzero(active):
        iota = table.values[w] - lam * (dist[w] - sol.d)  # back to density, bits
        iota = np.where(np.isfinite(iota), iota, 0.0)  # zero-mass cells, weight 0
        dw = dist[w]
        pt = p[w]
        m_iota_t = a_rows @ iota
        m_d_t = a_rows @ dw
        v_iota_t = a_rows @ iota**2 - m_iota_t**2
        v_d_t = a_rows @ dw**2 - m_d_t**2
        ph = phw[w]
        cov = float(ph @ (iota * dw) - (ph @ iota) * (ph @ dw))
        terms = {
            "v_in_iota_S": _weighted_var(pt, m_iota_t),
            "v_in_iota_A": float(pt @ v_iota_t),
            "v_in_d_S": _weighted_var(pt, m_d_t),
            "v_in_d_A": float(pt @ v_d_t),
            "v_in_cov": cov,
        }
        for key, val in terms.items():
            agg[key] += pw[w] * val
        jw = np.where(np.isfinite(table.values[w]), table.values[w], 0.0)
        v_in_total += pw[w] * _weighted_var(ph, jw)
        mean_iota_w[w] = float(ph @ iota)
        mean_d_w[w] = float(ph @ dw)

    mean_j_w = mean_iota_w + lam * (mean_d_w - sol.d)
    v_bet = _weighted_var(pw, mean_j_w)
    mu_iota = float(pw @ mean_iota_w)
    mu_d = float(pw @ mean_d_w)
    agg["v_bet_iota"] = _weighted_var(pw, mean_iota_w)
    agg["v_bet_d"] = _weighted_var(pw, mean_d_w)
    agg["v_bet_cov"] = float(pw @ ((mean_iota_w - mu_iota) * (mean_d_w - mu_d)))

    base = rate_dispersion(table)
    return DispersionReport(
        d=table.d,
        lambda_star=lam,
        V=base.V,
        A3=base.A3,
        V_in=v_in_total,
        V_bet=v_bet,
        subterms=agg,
    )


def berry_esseen_B(report: DispersionReport) -> float:
    """Berry-Esseen constant ``6 A3 / V^{3/2}`` (dimensionless).

    Undefined at V = 0; callers must branch to the degenerate converse path
    there.
    """
    if report.V <= 0.0:
        raise ValueError("Berry-Esseen constant undefined at V = 0")
    return 6.0 * report.A3 / report.V**1.5


# ---------------------------------------------------------------------------
# Stability diagnostics
# ---------------------------------------------------------------------------

def uniform_stability_beta(
    problem: LearningProblem,
    algorithm: AlgorithmKernel,
    n: int,
    cap: int = DEFAULT_ENUMERATION_CAP,
) -> float:
    """Remove-one uniform stability of the learner at size n.

    Exact maximum over drop positions, datasets and worlds of the change in
    expected distortion when one sample is removed.  Needs the learner
    defined at sizes n and n-1.
    """
    if n < 1:
        raise ValueError("uniform_stability_beta: n must be >= 1")
    universe, ed_n = expected_distortion_by_dataset(problem, algorithm, n, cap=cap)
    _, ed_m = expected_distortion_by_dataset(problem, algorithm, n - 1, cap=cap)
    s = problem.num_samples
    worst = 0.0
    for i in range(n):
        keep = [j for j in range(n) if j != i]
        sub = universe.tuples[:, keep]
        if sub.shape[1] == 0:
            drop_idx = np.zeros(len(universe), dtype=np.int64)
        else:
            drop_idx = (sub * (s ** np.arange(n - 2, -1, -1))).sum(axis=1)
        worst = max(worst, float(np.abs(ed_n - ed_m[:, drop_idx]).max()))
    return worst


def randomness_stability_rho(
    problem: LearningProblem, algorithm: AlgorithmKernel, n: int,
    cap: int = DEFAULT_ENUMERATION_CAP,
) -> float:
    """Worst distortion swing between two seed values, same dataset.

    Only defined when the learner carries a deterministic-map-plus-seed
    representation.
    """
    sf = algorithm.seed_form
    if sf is None or n not in sf.maps:
        raise ValueError("randomness_stability_rho needs a seed-form learner")
    h_index = {h: j for j, h in enumerate(problem.h_labels)}
    table = sf.maps[n]
    worst = 0.0
    for per_seed in table:
        cols = [h_index[h] for h in per_seed]
        vals = problem.distortion[:, cols]  # (W, seeds)
        worst = max(worst, float((vals.max(axis=1) - vals.min(axis=1)).max()))
    return worst


@dataclass(frozen=True)
class StabilityReport:
    n: int
    beta: float
    w_labels: tuple[str, ...]
    var_of_mean: tuple[float, ...]  # Var_T E_{H|T}[d(w, H)] under repeated sampling
    efron_stein_bound: float  # 2 n beta^2
    holds: bool
    mean_of_var: tuple[float, ...]  # E_T Var_{H|T}(d(w, H)); reported, not asserted
    rho: float | None = None
    rho_bound_half_n: float | None = None  # (n/2) rho^2
    rho_bound_half_b: float | None = None  # (B/2) rho^2, B = seed components


def stability_diagnostics(
    problem: LearningProblem,
    algorithm: AlgorithmKernel,
    n: int,
    observation: StochasticKernel | None = None,
    cap: int = DEFAULT_ENUMERATION_CAP,
) -> StabilityReport:
    """Per-world variance of the learner's expected distortion under n
    repeated draws from that world, checked against 2 n beta_n^2.

    The companion quantity E_T[Var_{H|T}(d)] is reported alongside without
    any assertion, together with both candidate seed-stability bounds when a
    seed representation is available (their index conventions differ in the
    literature, so neither is asserted).
    """
    obs = observation if observation is not None else problem.observation
    if obs is None:
        raise ValueError("stability_diagnostics: no observation model available")
    beta = uniform_stability_beta(problem, algorithm, n, cap=cap)
    universe, ed = expected_distortion_by_dataset(problem, algorithm, n, cap=cap)
    a_rows = algorithm.rows_for(n)
    iid = iid_kernel(problem, n, observation=obs, cap=cap)
    d2 = problem.distortion**2 @ a_rows.T  # (W, T): E_{H|t}[d(w,H)^2]
    var_h = d2 - ed**2
    var_of_mean = []
    mean_of_var = []
    for w in range(problem.num_w):
        weights = iid.rows[w]
        var_of_mean.append(_weighted_var(weights, ed[w]))
        mean_of_var.append(float(weights @ var_h[w]))
    bound = 2.0 * n * beta**2
    holds = all(v <= bound + 1e-12 for v in var_of_mean)
    rho = rho_n = rho_b = None
    if algorithm.seed_form is not None and n in algorithm.seed_form.maps:
        rho = randomness_stability_rho(problem, algorithm, n, cap=cap)
        rho_n = 0.5 * n * rho**2
        rho_b = 0.5 * 1 * rho**2  # single seed draw: B = 1 components
    return StabilityReport(
        n=n,
        beta=beta,
        w_labels=problem.w_labels,
        var_of_mean=tuple(var_of_mean),
        efron_stein_bound=bound,
        holds=holds,
        mean_of_var=tuple(mean_of_var),
        rho=rho,
        rho_bound_half_n=rho_n,
        rho_bound_half_b=rho_b,
    )


# ---------------------------------------------------------------------------
# Mutual-information chain diagnostics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MIChainReport:
    feasible: bool
    n: int | None = None
    rate_bits: float | None = None
    mi_wh_bits: float | None = None
    mi_th_bits: float | None = None
    iid_expected_distortion: float | None = None
    holds: bool | None = None
    reason: str | None = None


def mi_chain_diagnostics(
    problem: LearningProblem,
    algorithm: AlgorithmKernel,
    d: float,
    observation: StochasticKernel | None = None,
    n_cap: int = 8,
    cap: int = DEFAULT_ENUMERATION_CAP,
    slack: float = 1e-9,
) -> MIChainReport:
    """rate(d) <= I(W; H) <= I(T; H) under repeated single-world sampling.

    Searches the smallest dataset size n (up to ``n_cap``) at which drawing
    n samples from the current world meets the expected-distortion target;
    all three quantities are then computed at that same n, which is what
    makes the first inequality a fair comparison.
    """
    obs = observation if observation is not None else problem.observation
    if obs is None:
        raise ValueError("mi_chain_diagnostics: no observation model available")
    found = None
    for n in range(1, n_cap + 1):
        if n not in algorithm:
            continue
        kern = iid_kernel(problem, n, observation=obs, cap=cap)
        _, ed = expected_distortion_by_dataset(problem, algorithm, n, cap=cap)
        expected = float(problem.p_w.probs @ (kern.rows * ed).sum(axis=1))
        if expected <= d + 1e-12:
            found = (n, kern, expected)
            break
    if found is None:
        return MIChainReport(
            feasible=False,
            reason=f"repeated sampling misses E[d] <= {d} for every n <= {n_cap}",
        )
    n, kern, expected = found

    dmin = rd_d_min(problem, algorithm, n, cap=cap)
    dmax = rd_d_max(problem, algorithm, n, cap=cap)
    if math.isfinite(dmax) and d >= dmax - 1e-12:
        rate = 0.0
    elif d <= dmin + 1e-12:
        rate = rate_at_distortion_floor(problem, algorithm, n, cap=cap).rate_bits
    else:
        rate = rate_distortion(problem, algorithm, n, d, cap=cap).rate_bits

    a_kernel = algorithm.kernel_for(n)
    from .probability import compose  # local import keeps module top tidy

    mi_wh = mutual_information(joint(problem.p_w, compose(kern, a_kernel)))
    joint_wt = joint(problem.p_w, kern)
    p_t = marginal(joint_wt, 1)
    mi_th = mutual_information(joint(p_t, a_kernel))
    holds = rate <= mi_wh + slack and mi_wh <= mi_th + slack
    return MIChainReport(
        feasible=True,
        n=n,
        rate_bits=rate,
        mi_wh_bits=mi_wh,
        mi_th_bits=mi_th,
        iid_expected_distortion=expected,
        holds=holds,
    )
