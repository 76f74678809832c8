"""Sampling rate-distortion solver for a fixed randomized learner.

Solves, over sampling kernels P(T|W) on the size-n dataset universe that
respect per-world obtainability,

    R(d) = min I(W; H)   subject to   E[d(W, H)] <= d,

where H is produced by pushing the dataset through the fixed learner.  The
learner is frozen, so the classic closed-form alternating update is not
available (the objective is convex in P(T|W) but not coordinate-separable);
instead each Lagrangian subproblem

    min_P  I(W; H) + lam * E[d(W, H)]

is solved by entropic mirror descent on the rows of P(T|W) with the exact
analytic gradient, Armijo backtracking and a Frank-Wolfe-gap certificate,
and the multiplier lam is bracketed and driven (Illinois regula falsi, then
a final two-kernel blend) until the achieved expected distortion equals d.
The blend step is exactly optimal whenever the curve is locally affine,
which is precisely the situation where no single multiplier attains d.

A tiny entropy regularizer (1e-9) makes the subproblem minimizer unique, so
ties among optimal kernels are broken deterministically toward maximum
entropy; its contribution is accounted for in the reported duality gap.

Internal arithmetic is in nats; rates and multipliers are converted to bits
(and bits per distortion unit) at the API boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .information import LN2, mutual_information
from .probability import JointDistribution, StochasticKernel, joint
from .scenario import (
    DEFAULT_ENUMERATION_CAP,
    AlgorithmKernel,
    LearningProblem,
    expected_distortion_by_dataset,
)

ENTROPY_REG = 1e-9
GM_TOL = 1e-10
FW_TOL = 1e-12  # nats
MAX_INNER_ITERATIONS = 60_000
LAMBDA_CAP = 1e8  # nats per distortion unit


class DomainError(ValueError):
    """Requested point lies outside the solvable distortion range."""


class SolverError(RuntimeError):
    """Mirror descent failed to certify a solution within its budget."""

    def __init__(self, message: str, meta=None) -> None:
        super().__init__(message)
        self.meta = meta


@dataclass(frozen=True)
class SolverMeta:
    iterations: int
    inner_solves: int
    grad_mapping_norm: float
    duality_gap_bits: float
    lambda_bracket_bits: tuple[float, float]
    entropy_reg: float
    flags: tuple[str, ...]


@dataclass(frozen=True)
class RDSolution:
    """One point of the fixed-learner rate-distortion curve."""

    d: float
    rate_bits: float
    lambda_star: float  # bits per distortion unit
    kernel: StochasticKernel  # optimal P(T|W)
    induced_joint: JointDistribution  # P_W x P(H|W)
    achieved_distortion: float
    meta: SolverMeta

    @property
    def flagged(self) -> bool:
        return bool(self.meta.flags)


@dataclass(frozen=True)
class RDCurve:
    solutions: tuple[RDSolution, ...]
    d_min: float
    d_max: float

    def check(self, mono_tol: float = 1e-7, convex_tol: float = 1e-7) -> None:
        """Raise unless rates are non-increasing and convex along the grid."""
        pts = sorted(self.solutions, key=lambda s: s.d)
        for a, b in zip(pts, pts[1:]):
            if b.rate_bits > a.rate_bits + mono_tol:
                raise AssertionError(
                    f"rate not non-increasing: R({a.d})={a.rate_bits} < "
                    f"R({b.d})={b.rate_bits}"
                )
        for a, b, c in zip(pts, pts[1:], pts[2:]):
            t = (b.d - a.d) / (c.d - a.d)
            chord = (1.0 - t) * a.rate_bits + t * c.rate_bits
            if b.rate_bits > chord + convex_tol:
                raise AssertionError(
                    f"rate not convex at d={b.d}: {b.rate_bits} above chord {chord}"
                )


@dataclass(frozen=True)
class LambdaStar:
    """Dual multiplier with its finite-difference cross-check."""

    value: float  # bits per distortion unit, from the active dual multiplier
    finite_difference: float
    relative_error: float
    agreement_ok: bool  # within 2% relative


class _Workspace:
    """Arrays the solver needs for one (problem, algorithm, n) triple."""

    def __init__(self, problem: LearningProblem, algorithm: AlgorithmKernel,
                 n: int, cap: int) -> None:
        self.problem = problem
        self.n = n
        self.universe, self.ed = expected_distortion_by_dataset(
            problem, algorithm, n, cap=cap
        )
        self.a_rows = algorithm.rows_for(n)
        self.pw = problem.p_w.probs
        self.allow = np.stack(
            [self.universe.obtainable_mask(i) for i in range(problem.num_w)]
        )
        if not np.all(self.allow.any(axis=1)):
            raise DomainError("a world has no obtainable dataset")

    def uniform_start(self) -> np.ndarray:
        p = self.allow.astype(float)
        return p / p.sum(axis=1, keepdims=True)

    def d_min(self) -> float:
        best = np.where(self.allow, self.ed, np.inf).min(axis=1)
        return float(self.pw @ best)

    def d_max(self) -> float:
        common = self.allow.all(axis=0)
        if not common.any():
            return float("inf")
        pooled = self.pw @ self.ed
        return float(pooled[common].min())

    def d_max_argmin(self) -> int:
        common = self.allow.all(axis=0)
        pooled = np.where(common, self.pw @ self.ed, np.inf)
        return int(np.argmin(pooled))


def _xlogx(p: np.ndarray) -> np.ndarray:
    out = np.zeros_like(p)
    pos = p > 0.0
    out[pos] = p[pos] * np.log(p[pos])
    return out


class _Inner:
    """Entropic mirror descent on the rows of P(T|W) for one multiplier."""

    def __init__(self, ws: _Workspace, reg: float = ENTROPY_REG) -> None:
        self.ws = ws
        self.reg = reg
        self.total_iterations = 0

    def objective_parts(self, p: np.ndarray) -> tuple[float, float, float]:
        ws = self.ws
        phw = p @ ws.a_rows
        ph = ws.pw @ phw
        lr = np.zeros_like(phw)
        pos = phw > 0.0
        lr[pos] = np.log(phw[pos]) - np.log(np.broadcast_to(ph, phw.shape)[pos])
        mi_nats = float(ws.pw @ (phw * lr).sum(axis=1))
        ed = float(ws.pw @ (p * ws.ed).sum(axis=1))
        regterm = self.reg * float(ws.pw @ _xlogx(p).sum(axis=1))
        return mi_nats, ed, regterm

    def _gradient(self, p: np.ndarray, lam: float) -> tuple[np.ndarray, float, float, float]:
        ws = self.ws
        phw = p @ ws.a_rows
        ph = ws.pw @ phw
        lr = np.zeros_like(phw)
        pos = phw > 0.0
        lr[pos] = np.log(phw[pos]) - np.log(np.broadcast_to(ph, phw.shape)[pos])
        mi_nats = float(ws.pw @ (phw * lr).sum(axis=1))
        ed = float(ws.pw @ (p * ws.ed).sum(axis=1))
        logp = np.zeros_like(p)
        posp = p > 0.0
        logp[posp] = np.log(p[posp])
        g = lr @ ws.a_rows.T + lam * ws.ed + self.reg * (1.0 + logp)
        regterm = self.reg * float(ws.pw @ (p * logp).sum(axis=1))
        return g, mi_nats + lam * ed + regterm, mi_nats, ed

    @staticmethod
    def _step(p: np.ndarray, g: np.ndarray, eta: float, allow: np.ndarray) -> np.ndarray:
        z = np.where(allow, g, np.inf)
        z = z - z.min(axis=1, keepdims=True)
        q = np.where(allow, p * np.exp(-eta * np.where(allow, z, 0.0)), 0.0)
        q = np.maximum(q, np.where(allow, 1e-300, 0.0))
        return q / q.sum(axis=1, keepdims=True)

    def _fw_gap(self, p: np.ndarray, g: np.ndarray) -> float:
        ws = self.ws
        gval = (g * p).sum(axis=1) - np.where(ws.allow, g, np.inf).min(axis=1)
        return float(ws.pw @ np.maximum(gval, 0.0))

    def minimize(self, lam: float, p0: np.ndarray,
                 max_iter: int = MAX_INNER_ITERATIONS) -> dict:
        """Armijo-backtracked mirror descent until gradient-mapping/gap
        tolerance, step-size exhaustion, or objective stall at rounding."""
        ws = self.ws
        p = p0.copy()
        eta = 1.0 / (1.0 + lam)
        g, f, mi, ed = self._gradient(p, lam)
        best_f = f
        stall = 0
        gm = math.inf
        fw = math.inf
        it = 0
        for it in range(1, max_iter + 1):
            fw = self._fw_gap(p, g)
            ref = self._step(p, g, 1.0, ws.allow)
            gm = float(np.linalg.norm(p - ref))
            if gm < GM_TOL or fw < FW_TOL:
                break
            accepted = False
            for _ in range(60):
                cand = self._step(p, g, eta, ws.allow)
                g_c, f_c, mi_c, ed_c = self._gradient(cand, lam)
                slope = float((ws.pw[:, None] * g * (cand - p)).sum())
                if f_c <= f + 1e-4 * slope:
                    p, g, f, mi, ed = cand, g_c, f_c, mi_c, ed_c
                    eta = min(eta * 1.25, 1e6)
                    accepted = True
                    break
                eta *= 0.5
            if not accepted:
                break  # no step improves: stationary to rounding
            if f < best_f - 1e-15 * max(1.0, abs(best_f)):
                best_f = f
                stall = 0
            else:
                stall += 1
                if stall >= 50:
                    break  # objective flat at float noise
        self.total_iterations += it
        return {
            "p": p, "mi_nats": mi, "ed": ed, "fw_nats": fw, "gm": gm,
            "lam": lam, "iterations": it,
        }


def _certify(inner: _Inner, res: dict, d: float, lam: float) -> float:
    """Duality-gap estimate in bits for the constrained problem at level d."""
    ws = inner.ws
    max_t = max(int(ws.allow.sum(axis=1).max()), 2)
    gap_nats = res["fw_nats"] + inner.reg * math.log(max_t) + lam * abs(res["ed"] - d)
    return gap_nats / LN2


def _finalize(ws: _Workspace, p: np.ndarray, lam_nats: float, d: float,
              meta: SolverMeta) -> RDSolution:
    problem = ws.problem
    kernel = StochasticKernel(
        problem.w_labels, ws.universe.labels, p, support_mask=ws.allow
    )
    phw = p @ ws.a_rows
    induced = joint(
        problem.p_w,
        StochasticKernel.from_rows(problem.w_labels, problem.h_labels, phw),
    )
    rate_bits = mutual_information(induced)
    achieved = float(ws.pw @ (p * ws.ed).sum(axis=1))
    return RDSolution(
        d=d,
        rate_bits=rate_bits,
        lambda_star=lam_nats / LN2,
        kernel=kernel,
        induced_joint=induced,
        achieved_distortion=achieved,
        meta=meta,
    )


def d_min(problem: LearningProblem, algorithm: AlgorithmKernel, n: int,
          cap: int = DEFAULT_ENUMERATION_CAP) -> float:
    """Least expected distortion any obtainability-respecting kernel reaches."""
    return _Workspace(problem, algorithm, n, cap).d_min()


def d_max(problem: LearningProblem, algorithm: AlgorithmKernel, n: int,
          cap: int = DEFAULT_ENUMERATION_CAP) -> float:
    """Least expected distortion at rate zero.

    Linear program over world-independent kernels supported on the common
    obtainable set; the objective is linear on the simplex, so the optimum
    sits at a vertex and the vertex minimum is the exact LP value.  Returns
    ``inf`` when no dataset is obtainable from every world (rate can then
    never reach zero); the infinite value is the flag.
    """
    return _Workspace(problem, algorithm, n, cap).d_max()


def _zero_rate_solution(ws: _Workspace, d: float, inner_solves: int) -> RDSolution:
    t_star = ws.d_max_argmin()
    p = np.zeros_like(ws.allow, dtype=float)
    p[:, t_star] = 1.0
    meta = SolverMeta(
        iterations=0, inner_solves=inner_solves, grad_mapping_norm=0.0,
        duality_gap_bits=0.0, lambda_bracket_bits=(0.0, 0.0),
        entropy_reg=0.0, flags=("rate_zero",),
    )
    return _finalize(ws, p, 0.0, d, meta)


def rate_distortion(
    problem: LearningProblem,
    algorithm: AlgorithmKernel,
    n: int,
    d: float,
    cap: int = DEFAULT_ENUMERATION_CAP,
    warm: RDSolution | None = None,
) -> RDSolution:
    """Solve for one target expected distortion level d.

    Requires d_min < d (below is infeasible).  For d >= d_max the
    constraint is slack at the optimum: the rate is zero, the returned
    multiplier is zero and the solution carries a ``rate_zero`` flag
    (the equality form of the constraint is unattainable there).
    """
    ws = _Workspace(problem, algorithm, n, cap)
    dmin = ws.d_min()
    dmax = ws.d_max()
    if d < dmin - 1e-12:
        raise DomainError(f"d={d} below d_min={dmin} for n={n}")
    if math.isfinite(dmax) and d >= dmax - 1e-12:
        return _zero_rate_solution(ws, d, inner_solves=0)

    inner = _Inner(ws)
    p0 = warm.kernel.rows if warm is not None else ws.uniform_start()
    if p0.shape != ws.allow.shape:
        p0 = ws.uniform_start()

    solves = 0

    def eval_lambda(lam: float, start: np.ndarray) -> dict:
        nonlocal solves
        solves += 1
        return inner.minimize(lam, start)

    res0 = eval_lambda(0.0, p0)
    if res0["ed"] <= d:
        # Constraint slack at the unconstrained optimum: multiplier zero.
        meta = SolverMeta(
            iterations=inner.total_iterations, inner_solves=solves,
            grad_mapping_norm=res0["gm"],
            duality_gap_bits=_certify(inner, res0, d, 0.0),
            lambda_bracket_bits=(0.0, 0.0), entropy_reg=inner.reg,
            flags=("slack_constraint",),
        )
        return _finalize(ws, res0["p"], 0.0, d, meta)

    lo = res0  # ed > d
    lam_hi = 1.0
    hi = eval_lambda(lam_hi, lo["p"])
    while hi["ed"] > d:
        if lam_hi >= LAMBDA_CAP:
            raise SolverError(
                f"could not bracket multiplier: E[d]={hi['ed']} > d={d} at "
                f"lam={lam_hi}"
            )
        lo = hi
        lam_hi *= 8.0
        hi = eval_lambda(lam_hi, hi["p"])

    # Illinois regula falsi on g(lam) = Ed(lam) - d over the bracket.  The
    # secant weights carry the Illinois halving; convergence tests always use
    # the true residuals.  The loop only needs to tighten the bracket far
    # enough for the final blend; achieved-distortion accuracy beyond the
    # inner solves' numeric floor comes from the blend, not from here.
    dtol = 1e-12 * max(1.0, float(ws.ed.max(initial=0.0)))
    w_lo = lo["ed"] - d
    w_hi = hi["ed"] - d
    side = 0
    for _ in range(60):
        if lo["ed"] - d <= dtol or d - hi["ed"] <= dtol:
            break
        if hi["lam"] - lo["lam"] <= 1e-8 * max(1.0, hi["lam"]):
            break
        denom = w_lo - w_hi
        if denom > 0.0:
            lam_new = lo["lam"] + w_lo * (hi["lam"] - lo["lam"]) / denom
        else:
            lam_new = 0.5 * (lo["lam"] + hi["lam"])
        span = hi["lam"] - lo["lam"]
        lam_new = min(max(lam_new, lo["lam"] + 1e-3 * span), hi["lam"] - 1e-3 * span)
        start = lo["p"] if (lam_new - lo["lam"]) < (hi["lam"] - lam_new) else hi["p"]
        mid = eval_lambda(lam_new, start)
        if mid["ed"] - d > 0.0:
            lo = mid
            w_lo = mid["ed"] - d
            if side == -1:
                w_hi *= 0.5
            side = -1
        else:
            hi = mid
            w_hi = mid["ed"] - d
            if side == 1:
                w_lo *= 0.5
            side = 1

    # Land exactly on E[d] = d.  If an endpoint already attains it within
    # tolerance, keep that endpoint (its multiplier certifies it); otherwise
    # blend the bracketing kernels, which is optimal whenever the bracket has
    # collapsed onto one multiplier (affine stretch of the curve).
    if lo["ed"] - d <= dtol:
        p_final, lam_final = lo["p"], lo["lam"]
    elif d - hi["ed"] <= dtol:
        p_final, lam_final = hi["p"], hi["lam"]
    else:
        alpha = (d - hi["ed"]) / (lo["ed"] - hi["ed"])
        alpha = min(max(alpha, 0.0), 1.0)
        p_final = alpha * lo["p"] + (1.0 - alpha) * hi["p"]
        lam_final = 0.5 * (lo["lam"] + hi["lam"])

    g_fin, _, _, ed_fin = inner._gradient(p_final, lam_final)
    fw_fin = inner._fw_gap(p_final, g_fin)
    res_fin = {"p": p_final, "ed": ed_fin, "fw_nats": fw_fin}
    gap_bits = _certify(inner, res_fin, d, lam_final)
    if gap_bits > 1e-7:
        raise SolverError(
            f"duality gap {gap_bits} bits exceeds certificate budget at d={d}",
            meta={"fw_nats": fw_fin, "ed": ed_fin, "lam": lam_final},
        )

    flags: tuple[str, ...] = ()
    if abs(ed_fin - d) > 1e-6:
        flags = ("equality_not_attained",)

    meta = SolverMeta(
        iterations=inner.total_iterations,
        inner_solves=solves,
        grad_mapping_norm=min(lo["gm"], hi["gm"]),
        duality_gap_bits=gap_bits,
        lambda_bracket_bits=(lo["lam"] / LN2, hi["lam"] / LN2),
        entropy_reg=inner.reg,
        flags=flags,
    )
    return _finalize(ws, p_final, lam_final, d, meta)


def rate_at_distortion_floor(
    problem: LearningProblem, algorithm: AlgorithmKernel, n: int,
    cap: int = DEFAULT_ENUMERATION_CAP,
) -> RDSolution:
    """Minimum rate at d = d_min: support restricted to per-world argmins.

    Used by diagnostics that must evaluate the curve at its left endpoint;
    the multiplier is undefined there, so the solution is flagged and
    reports NaN for it.
    """
    ws = _Workspace(problem, algorithm, n, cap)
    best = np.where(ws.allow, ws.ed, np.inf).min(axis=1, keepdims=True)
    ws.allow = ws.allow & (ws.ed <= best + 1e-12)
    inner = _Inner(ws)
    res = inner.minimize(0.0, ws.uniform_start())
    meta = SolverMeta(
        iterations=inner.total_iterations, inner_solves=1,
        grad_mapping_norm=res["gm"],
        duality_gap_bits=_certify(inner, res, res["ed"], 0.0),
        lambda_bracket_bits=(math.nan, math.nan), entropy_reg=inner.reg,
        flags=("distortion_floor",),
    )
    sol = _finalize(ws, res["p"], 0.0, ws.d_min(), meta)
    return RDSolution(
        d=sol.d, rate_bits=sol.rate_bits, lambda_star=math.nan,
        kernel=sol.kernel, induced_joint=sol.induced_joint,
        achieved_distortion=sol.achieved_distortion, meta=meta,
    )


def lambda_star(
    problem: LearningProblem,
    algorithm: AlgorithmKernel,
    n: int,
    d: float,
    cap: int = DEFAULT_ENUMERATION_CAP,
) -> LambdaStar:
    """Negative slope of the curve in bits per distortion unit.

    Primary value is the active dual multiplier; it is cross-validated
    against a central finite difference of the rate, and the result is
    flagged (``agreement_ok=False``) when the two disagree by more than 2%.
    """
    sol = rate_distortion(problem, algorithm, n, d, cap=cap)
    dmin_v = d_min(problem, algorithm, n, cap=cap)
    dmax_v = d_max(problem, algorithm, n, cap=cap)
    span = dmax_v - dmin_v if math.isfinite(dmax_v) else 1.0
    h = max(1e-4, 1e-3 * span)
    h = min(h, 0.5 * (d - dmin_v))
    if math.isfinite(dmax_v):
        h = min(h, 0.5 * (dmax_v - d))
    lo = rate_distortion(problem, algorithm, n, d - h, cap=cap, warm=sol)
    hi = rate_distortion(problem, algorithm, n, d + h, cap=cap, warm=sol)
    fd = (lo.rate_bits - hi.rate_bits) / (2.0 * h)
    denom = max(abs(sol.lambda_star), 1e-30)
    rel = abs(fd - sol.lambda_star) / denom
    return LambdaStar(
        value=sol.lambda_star,
        finite_difference=fd,
        relative_error=rel,
        agreement_ok=rel <= 0.02,
    )


def distortion_rate(
    problem: LearningProblem,
    algorithm: AlgorithmKernel,
    n: int,
    rate_bits: float,
    tol_bits: float = 1e-6,
    cap: int = DEFAULT_ENUMERATION_CAP,
) -> float:
    """Invert the curve: least d whose rate does not exceed ``rate_bits``.

    Monotone bisection on d until the solved rate matches within
    ``tol_bits``.
    """
    floor = rate_at_distortion_floor(problem, algorithm, n, cap=cap)
    if not 0.0 < rate_bits < floor.rate_bits:
        raise DomainError(
            f"rate {rate_bits} outside (0, {floor.rate_bits}) for n={n}"
        )
    dmin_v = d_min(problem, algorithm, n, cap=cap)
    dmax_v = d_max(problem, algorithm, n, cap=cap)
    if not math.isfinite(dmax_v):
        dmax_v = dmin_v + 1.0
        while rate_distortion(problem, algorithm, n, dmax_v, cap=cap).rate_bits > rate_bits:
            dmax_v = dmin_v + 2.0 * (dmax_v - dmin_v)
    lo, hi = dmin_v, dmax_v
    warm = None
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        sol = rate_distortion(problem, algorithm, n, mid, cap=cap, warm=warm)
        warm = sol
        if abs(sol.rate_bits - rate_bits) <= tol_bits:
            return mid
        if sol.rate_bits > rate_bits:
            lo = mid
        else:
            hi = mid
    raise SolverError(f"distortion_rate did not converge for R={rate_bits}")


def rd_curve(
    problem: LearningProblem,
    algorithm: AlgorithmKernel,
    n: int,
    d_values,
    cap: int = DEFAULT_ENUMERATION_CAP,
) -> RDCurve:
    sols = []
    warm = None
    for d in sorted(d_values):
        warm = rate_distortion(problem, algorithm, n, d, cap=cap, warm=warm)
        sols.append(warm)
    return RDCurve(
        solutions=tuple(sols),
        d_min=d_min(problem, algorithm, n, cap=cap),
        d_max=d_max(problem, algorithm, n, cap=cap),
    )
