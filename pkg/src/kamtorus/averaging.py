"""One quasi-periodic averaging step.

Along a rational frequency omega = (1, p/q) the homological equation
[V, X_omega] = P - [P]_omega is diagonal on Fourier modes with divisors
2*pi*i*(k.omega) bounded below by 2*pi/q: no small divisors.  The time-1
flow of V then pulls Y = X_alpha + S + P back to X_alpha + S + [P] + P_plus
with P_plus quadratically small, assembled here as a Lie series regrouped
so that no O(1) cancellation occurs:

    P_plus = ([P]_omega - [P])
           + sum_{m>=1} (1/m!) ad_V^m ( A + B/(m+1) ),

with A = X_varpi + S + P, B = [P]_omega - P and ad_V F = [F, V].  This is
algebraically identical to pulling back Y and subtracting the identified
terms, but the subtraction is performed termwise before any magnitudes
grow, so the result stays accurate when norm(P) is near the floating
floor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import field as fld
from .diophantine import FrequencyVector, RationalApprox, dirichlet_approx
from .errors import (ContractionError, DomainError, ParameterError,
                     StepConditionError, StepSizeError)
from .embedding import Layer, NearIdentityEmbedding
from .field import FourierVectorField
from .ledger import ErrorLedger

_MAX_SERIES_TERMS = 300


@dataclass(frozen=True)
class HomologicalSolution:
    V: FourierVectorField
    omega: RationalApprox
    residual: float        # relative coefficientwise identity defect


@dataclass(frozen=True)
class StepBudget:
    q_eps: float
    tail_term: float       # measured norm of [P]_omega - [P] at target width
    bracket_term: float    # measured norm of the Lie series at target width
    conditions_ok: tuple
    report: dict


@dataclass(frozen=True)
class StepResult:
    Phi1: NearIdentityEmbedding
    P_plus: FourierVectorField
    P_avg: np.ndarray
    budget: StepBudget
    V: FourierVectorField
    approx: RationalApprox


def _rewidth(x: FourierVectorField, width: float) -> FourierVectorField:
    return FourierVectorField(n=x.n, width_s=width, coeffs=x.coeffs,
                              k_max=x.k_max)


def _resonant(k, q: int, p) -> bool:
    dot = q * int(k[0])
    for ki, pi in zip(k[1:], p):
        dot += int(ki) * int(pi)
    return dot == 0


def _divisor(k, q: int, p) -> int:
    """q * (k . omega) as an exact integer."""
    dot = q * int(k[0])
    for ki, pi in zip(k[1:], p):
        dot += int(ki) * int(pi)
    return dot


def omega_average(P: FourierVectorField,
                  approx: RationalApprox) -> FourierVectorField:
    """Projection onto the modes with k . omega = 0 (exact integer test)."""
    q, p = approx.q, approx.p
    kept = {k: c for k, c in P.coeffs.items() if _resonant(k, q, p)}
    k_max = max((max(abs(v) for v in k) for k in kept), default=0)
    return FourierVectorField(n=P.n, width_s=P.width_s, coeffs=kept,
                              k_max=k_max)


def space_average(P: FourierVectorField) -> np.ndarray:
    return P.constant_part()


def solve_homological(P: FourierVectorField,
                      approx: RationalApprox) -> HomologicalSolution:
    """V with [V, X_omega] = P - [P]_omega, V zero on resonant modes.

    V_k = P_k * q / (2*pi*i * q*(k.omega)); the integer q*(k.omega) is
    nonzero on every retained mode, and |k.omega| >= 1/q gives
    norm(V) <= q * norm(P - [P]_omega).
    """
    q, p = approx.q, approx.p
    coeffs = {}
    for k, c in P.coeffs.items():
        d = _divisor(k, q, p)
        if d != 0:
            coeffs[k] = c * (q / (2j * np.pi * d))
    k_max = max((max(abs(v) for v in k) for k in coeffs), default=0)
    V = FourierVectorField(n=P.n, width_s=P.width_s, coeffs=coeffs,
                           k_max=k_max)
    rhs = fld.sub(P, omega_average(P, approx))
    x_omega = fld.constant_field(approx.omega, P.width_s)
    s = P.width_s
    rhs_norm = fld.norm(rhs, s)
    if rhs_norm == 0.0:
        residual = 0.0
    else:
        residual = fld.norm(fld.sub(fld.lie_bracket(V, x_omega), rhs),
                            s) / rhs_norm
        v_norm = fld.norm(V, s)
        if v_norm > q * rhs_norm * (1 + 1e-12):
            raise ContractionError(
                "divisor bound violated: "
                f"norm(V)={v_norm:.6g} > q*norm(P-[P]_w)={q * rhs_norm:.6g}",
                measured_ratio=v_norm / (q * rhs_norm))
    return HomologicalSolution(V=V, omega=approx, residual=residual)


def lie_pullback(Y: FourierVectorField, V: FourierVectorField, s: float,
                 sigma: float, tol: float,
                 ledger: ErrorLedger | None = None) -> FourierVectorField:
    """Exact-coefficient evaluation of (V^1)^* Y = sum_m ad_V^m Y / m!.

    Truncated when the majorized remainder at width s - sigma is below
    tol; the remainder bound is charged to the ledger.  Requires the
    majorant ratio bracket_norm_const(n)*e*norm(V,s)/sigma < 1.
    """
    if not 0 < sigma < s:
        raise ParameterError(f"need 0 < sigma < s, got sigma={sigma}, s={s}")
    if s > min(Y.width_s, V.width_s):
        raise ParameterError(
            f"s={s} exceeds the width of the inputs "
            f"({min(Y.width_s, V.width_s)})")
    n = Y.n
    v_norm = fld.norm(V, s) if V.coeffs else 0.0
    rho = fld.bracket_norm_const(n) * math.e * v_norm / sigma
    if rho >= 1.0:
        raise StepSizeError(
            f"Lie series majorant ratio {rho:.3g} >= 1 "
            f"(norm(V)={v_norm:.3g}, sigma={sigma:.3g}); "
            "increase Q or decrease the perturbation")
    acc = Y
    term = Y
    w = s - sigma
    for m in range(1, _MAX_SERIES_TERMS + 1):
        term = fld.scale(fld.lie_bracket(term, V), 1.0 / m)
        if not term.coeffs:
            break
        acc = fld.add(acc, term)
        t = fld.norm(term, w)
        rem = t * rho / (1.0 - rho)
        if rem <= tol:
            if ledger is not None:
                ledger.charge("lie_pullback.remainder", rem)
            break
    else:
        raise StepSizeError(
            f"Lie series did not reach tol={tol:.3g} within "
            f"{_MAX_SERIES_TERMS} terms (ratio {rho:.3g})")
    return _rewidth(acc, w)


def step_conditions(consts, Q: float, sigma: float, eps: float) -> tuple:
    """Sufficient smallness conditions for one step, with this package's
    explicit constants.  Returns (ok, report); report maps condition name
    to its left-hand side (each must be <= 1).

    1. Q^n * eps <= 1                  (perturbation below threshold)
    2. C_mid / (Q * sigma) <= 1        (Lie series / bracket budget)
       with C_mid = 4 * b * bracket_norm_const(n) * (d + 2) / pi.
    3. 2 * b * exp(-2*pi*gamma_star*Q^{1/a}*sigma) <= 1
                                       (resonant modes beyond the cutoff)
    """
    n = consts.n
    c_mid = 4.0 * consts.b * fld.bracket_norm_const(n) * (consts.d + 2) / np.pi
    lhs1 = Q ** n * eps
    lhs2 = c_mid / (Q * sigma)
    with np.errstate(under="ignore"):
        lhs3 = 2.0 * consts.b * math.exp(
            -fld.TWO_PI * consts.gamma_star * Q ** (1.0 / consts.a) * sigma)
    report = {"threshold": lhs1, "middle": lhs2, "tail": lhs3,
              "C_mid": c_mid}
    ok = (lhs1 <= 1.0, lhs2 <= 1.0, lhs3 <= 1.0)
    return all(ok), {"ok": ok, **report}


def averaging_step(alpha: FrequencyVector, S: FourierVectorField,
                   P: FourierVectorField, Q: float, sigma: float, consts, *,
                   ledger: ErrorLedger | None = None, enforce: bool = True,
                   eps_ref: float | None = None,
                   prune_rel: float = 1e-16) -> StepResult:
    """One step: P of size eps becomes P_plus of size <= eps/b.

    Pulls Y = X_alpha + S + P back by the time-1 flow of the homological
    solution V, so that Phi1^* Y = X_alpha + S + [P] + P_plus.  S must be
    a constant field with |S| <= d*eps.  With enforce=True the smallness
    conditions and the contraction bound are hard errors; enforce=False
    computes the same quantities and only records them (used by outer
    fixed-point passes whose early iterates are off-budget).
    """
    s = P.width_s
    if not 0 < sigma < s:
        raise ParameterError(f"need 0 < sigma < s, got sigma={sigma}, s={s}")
    if not S.is_constant:
        raise ParameterError("S must be a constant field")
    eps = fld.norm(P, s) if P.coeffs else 0.0
    eps_ref = eps if eps_ref is None else max(eps_ref, eps)
    w = s - sigma
    ok, report = step_conditions(consts, Q, sigma, eps)
    if enforce and not ok:
        failed = tuple(name for name, good in
                       zip(("threshold", "middle", "tail"), report["ok"])
                       if not good)
        raise StepConditionError(
            "step conditions failed: " +
            ", ".join(f"{f}={report[f]:.6g}" for f in failed), failed=failed)
    approx = dirichlet_approx(alpha, Q)
    p_avg = space_average(P)

    if not P.coeffs or P.is_constant:
        phi1 = NearIdentityEmbedding(n=P.n, layers=())
        budget = StepBudget(q_eps=approx.q * eps, tail_term=0.0,
                            bracket_term=0.0, conditions_ok=report["ok"],
                            report=report)
        return StepResult(Phi1=phi1, P_plus=fld.zero_field(P.n, w),
                          P_avg=p_avg, budget=budget,
                          V=fld.zero_field(P.n, s), approx=approx)

    if enforce and S.coeffs:
        s_norm = fld.norm(S, s)
        ulp_floor = 8.0 * np.finfo(float).eps * max(
            1.0, float(np.abs(alpha.alpha).max()))
        if s_norm > consts.d * eps * (1 + 1e-9) + ulp_floor:
            raise DomainError(
                f"|S| = {s_norm:.6g} exceeds d*eps = {consts.d * eps:.6g}")

    p_omega = omega_average(P, approx)
    sol = solve_homological(P, approx)
    V = sol.V
    v_norm = fld.norm(V, s) if V.coeffs else 0.0

    head = fld.sub(p_omega, fld.constant_field(p_avg, s))
    A = fld.add(fld.constant_field(approx.varpi, s), fld.add(S, P))
    B = fld.sub(p_omega, P)

    floor = prune_rel * eps_ref
    acc = head
    bracket_norm = 0.0
    term_a, term_b = A, B
    tol_abs = 1e-18 * eps_ref
    rho = fld.bracket_norm_const(P.n) * math.e * v_norm / sigma \
        if v_norm else 0.0
    for m in range(1, _MAX_SERIES_TERMS + 1):
        term_a = fld.scale(fld.lie_bracket(term_a, V), 1.0 / m)
        term_b = fld.scale(fld.lie_bracket(term_b, V), 1.0 / m)
        contrib = fld.add(term_a, fld.scale(term_b, 1.0 / (m + 1)))
        if not contrib.coeffs and not term_a.coeffs and not term_b.coeffs:
            break
        acc = fld.add(acc, contrib)
        t = fld.norm(contrib, w) if contrib.coeffs else 0.0
        bracket_norm += t
        term_a, lost_a = fld.prune(term_a, w, floor)
        term_b, lost_b = fld.prune(term_b, w, floor)
        if ledger is not None and (lost_a or lost_b):
            ledger.charge("averaging_step.series_prune",
                          2.0 * (lost_a + lost_b))
        if t <= tol_abs and m >= 2:
            if ledger is not None and rho < 1:
                ledger.charge("averaging_step.series_tail",
                              t * rho / (1.0 - rho))
            break
    else:
        raise StepSizeError(
            f"averaging series did not settle within {_MAX_SERIES_TERMS} "
            f"terms (ratio estimate {rho:.3g})")

    p_plus, lost = fld.prune(_rewidth(acc, w), w, floor)
    if ledger is not None and lost:
        ledger.charge("averaging_step.result_prune", lost)
    pp_norm = fld.norm(p_plus, w) if p_plus.coeffs else 0.0

    if enforce:
        if pp_norm > eps / consts.b:
            raise ContractionError(
                f"norm(P_plus) = {pp_norm:.6g} exceeds eps/b = "
                f"{eps / consts.b:.6g}", measured_ratio=pp_norm / eps)
        if v_norm > Q ** (P.n - 1) * eps * (1 + 1e-9):
            raise ContractionError(
                f"norm(V) = {v_norm:.6g} exceeds Q^(n-1)*eps = "
                f"{Q ** (P.n - 1) * eps:.6g}",
                measured_ratio=v_norm / (Q ** (P.n - 1) * eps))

    phi1 = NearIdentityEmbedding(
        n=P.n, layers=(Layer(V=V, source_width=w, target_width=s),))
    budget = StepBudget(q_eps=approx.q * eps,
                        tail_term=fld.norm(head, w) if head.coeffs else 0.0,
                        bracket_term=bracket_norm,
                        conditions_ok=report["ok"], report=report)
    return StepResult(Phi1=phi1, P_plus=p_plus, P_avg=p_avg, budget=budget,
                      V=V, approx=approx)


def counter_term_step(alpha: FrequencyVector, P: FourierVectorField,
                      x: np.ndarray, Q: float, sigma: float, consts, *,
                      ledger: ErrorLedger | None = None,
                      enforce: bool = True,
                      eps_ref: float | None = None):
    """Parametrized step: for |x - alpha| <= c*eps returns the shifted
    frequency phi1(x) = x - [P] and the step with S = X_{phi1(x) - alpha},
    so that Phi1^* (X_{phi1(x)} + P) = X_x + P_plus."""
    x = np.asarray(x, dtype=float)
    s = P.width_s
    eps = fld.norm(P, s) if P.coeffs else 0.0
    dist = float(np.abs(x - alpha.alpha).max())
    # x is stored near alpha ~ O(1); the domain radius c*eps can sit far
    # below one ulp of x, so allow the representation floor on top of it
    ulp_floor = 8.0 * np.finfo(float).eps * max(1.0,
                                                float(np.abs(x).max()))
    if enforce and eps > 0 and dist > consts.c * eps * (1 + 1e-9) + ulp_floor:
        raise DomainError(
            f"|x - alpha| = {dist:.6g} outside the domain c*eps = "
            f"{consts.c * eps:.6g}")
    p_avg = space_average(P)
    phi1_x = x - p_avg
    S = fld.constant_field(phi1_x - alpha.alpha, s)
    result = averaging_step(alpha, S, P, Q, sigma, consts, ledger=ledger,
                            enforce=enforce, eps_ref=eps_ref)
    return phi1_x, result
