"""The full iteration: constants, geometric schedules, feasibility, and
the outer loop producing the conjugacy Phi and counter-term beta.

The counter-term is found as a fixed point: a forward pass of averaging
steps starting from frequency alpha + beta measures the endpoint defect
(how far the final frequency drifts from alpha), and beta is corrected by
that defect.  Early passes run with assertions relaxed, since their
iterates are off the certified budget; the final pass re-runs the whole
chain with every bound enforced.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field as dc_field

import numpy as np

from . import averaging as avg
from . import field as fld
from .diophantine import FrequencyVector
from .embedding import NearIdentityEmbedding, fit_displacement
from .errors import (ContractionError, InfeasibleError, ParameterError,
                     ThresholdError)
from .field import FourierVectorField
from .ledger import ErrorLedger

_Q_CAP_EXP = 64           # select_Q searches Q0 = 2^j, j <= this
_BETA_PASS_LIMIT = 12


@dataclass(frozen=True)
class KamConstants:
    n: int
    tau: float
    a: float
    b: float
    c: float
    d: float
    gamma_star: float


def constants(n: int, tau: float, gamma: float,
              gamma_bar: float) -> KamConstants:
    """a = 1+(n-1)tau, b = 4^{na}, c = 1/(b-1), d = c+1 = b/(b-1), and the
    resonance constant gamma_star."""
    if n < 2:
        raise ParameterError(f"n must be >= 2, got {n}")
    if tau < 0:
        raise ParameterError(f"tau must be >= 0, got {tau}")
    if not 0 < gamma <= 1:
        raise ParameterError(f"gamma must be in (0, 1], got {gamma}")
    if not gamma_bar > 0:
        raise ParameterError(f"gamma_bar must be > 0, got {gamma_bar}")
    a = 1.0 + (n - 1) * tau
    b = 4.0 ** (n * a)
    binv = 1.0 / b
    c = binv / (1.0 - binv)
    d = c + 1.0
    gs = (gamma * gamma_bar ** ((n - 1) / a) / n) ** (1.0 / (n + (n - 1) * tau))
    return KamConstants(n=n, tau=tau, a=a, b=b, c=c, d=d, gamma_star=gs)


@dataclass(frozen=True)
class Schedule:
    consts: KamConstants
    s: float
    Q0: float
    eps0: float

    def eps(self, m: int) -> float:
        return self.consts.b ** (-m) * self.eps0

    def Q(self, m: int) -> float:
        return 4.0 ** (self.consts.a * m) * self.Q0

    def sigma(self, m: int) -> float:
        return 2.0 ** (-m - 2) * self.s

    def width(self, m: int) -> float:
        # s_0 = s, s_{m+1} = s_m - sigma_m; closed form stays above s/2
        return self.s / 2.0 + self.s * 2.0 ** (-m - 1)


def check_conditions(consts: KamConstants, schedule: Schedule, m: int,
                     eps: float):
    """Evaluate the three step conditions at step m for a run starting at
    size eps (so the step sees eps_m = b^{-m} * eps)."""
    eps_m = consts.b ** (-m) * eps
    return avg.step_conditions(consts, schedule.Q(m), schedule.sigma(m),
                               eps_m)


def select_Q(consts: KamConstants, s: float,
             gamma_star: float | None = None):
    """Smallest Q0 on the geometric grid 2^j making the middle and tail
    conditions hold at m = 0 (they then improve monotonically in m), plus
    the threshold eps_star = Q0^{-n} below which the first condition holds.
    """
    if gamma_star is not None and gamma_star != consts.gamma_star:
        consts = KamConstants(n=consts.n, tau=consts.tau, a=consts.a,
                              b=consts.b, c=consts.c, d=consts.d,
                              gamma_star=gamma_star)
    sigma0 = s / 4.0
    last = None
    for j in range(_Q_CAP_EXP + 1):
        q0 = float(2 ** j)
        ok, report = avg.step_conditions(consts, q0, sigma0, 0.0)
        last = report
        if report["middle"] <= 1.0 and report["tail"] <= 1.0:
            # both ratios improve with m: Q_m*sigma_m grows like (4^a/2)^m
            # and Q_m^{1/a}*sigma_m like 2^m
            return q0, q0 ** (-consts.n)
    binding = "middle" if last["middle"] > last["tail"] else "tail"
    raise InfeasibleError(
        f"no Q0 <= 2^{_Q_CAP_EXP} satisfies the step conditions; "
        f"binding condition: {binding} (lhs={last[binding]:.6g})")


@dataclass
class RunOptions:
    tol: float | None = None        # default 1e-14 * norm(P, s)
    max_steps: int = 64
    force: bool = False
    prune_rel: float = 1e-16


@dataclass
class RunResult:
    Phi: NearIdentityEmbedding
    beta: np.ndarray
    trace: list
    consts: KamConstants
    schedule: Schedule
    eps: float
    eps_star: float
    final_norm: float
    passes: int
    ledger: ErrorLedger
    alpha: FrequencyVector
    P: FourierVectorField


def _forward_pass(alpha: FrequencyVector, P: FourierVectorField, beta,
                  sched: Schedule, consts: KamConstants, tol: float,
                  max_steps: int, enforce: bool, ledger: ErrorLedger,
                  eps: float):
    """One pass of averaging steps starting at frequency alpha + beta.

    Returns (phi, trace, defect, final_norm) where defect is how far the
    endpoint frequency misses alpha; beta is a fixed point when the
    defect vanishes.
    """
    n = alpha.n
    phi = NearIdentityEmbedding(n=n, layers=())
    trace = []
    u = alpha.alpha + beta
    Pm = P
    m = 0
    while m < max_steps:
        width_m = sched.width(m)
        norm_m = fld.norm(Pm, width_m) if Pm.coeffs else 0.0
        if norm_m <= tol:
            break
        if enforce and norm_m > sched.eps(m) * (1 + 1e-9):
            raise ContractionError(
                f"step {m}: norm(P_m) = {norm_m:.6g} exceeds the envelope "
                f"b^-m*eps = {sched.eps(m):.6g}",
                measured_ratio=norm_m / sched.eps(m))
        x_m = u + avg.space_average(Pm)
        _, res = avg.counter_term_step(
            alpha, Pm, x_m, sched.Q(m), sched.sigma(m), consts,
            ledger=ledger, enforce=enforce, eps_ref=sched.eps(m))
        if res.Phi1.layers:
            phi = phi.extended(res.Phi1.layers[0])
        v_norm = fld.norm(res.V, res.V.width_s) if res.V.coeffs else 0.0
        trace.append({
            "m": m,
            "q": res.approx.q,
            "p": [int(v) for v in res.approx.p],
            "Q_m": sched.Q(m),
            "sigma_m": sched.sigma(m),
            "norm_P": norm_m,
            "norm_V": v_norm,
            "norm_phi1_defect": v_norm,
            "P_avg": [float(v) for v in res.P_avg],
            "q_eps": res.budget.q_eps,
            "tail_term": res.budget.tail_term,
            "bracket_term": res.budget.bracket_term,
            "conditions_ok": list(res.budget.conditions_ok),
            "conditions": {k: (list(v) if isinstance(v, tuple) else v)
                           for k, v in res.budget.report.items()},
        })
        u = x_m
        Pm = res.P_plus
        m += 1
    final_norm = fld.norm(Pm, sched.width(m)) if Pm.coeffs else 0.0
    tail_avg = avg.space_average(Pm) if Pm.coeffs else np.zeros(n)
    defect = (u + tail_avg) - alpha.alpha
    return phi, trace, defect, final_norm


def run(alpha: FrequencyVector, P: FourierVectorField, s: float,
        opts: RunOptions | None = None) -> RunResult:
    """Find beta and Phi with Phi^*(X_alpha + P + X_beta) = X_alpha.

    Iterates forward passes of averaging steps, correcting beta by the
    measured endpoint defect until it is negligible, then re-runs with
    all certified bounds enforced.
    """
    opts = opts or RunOptions()
    if not 0 < s <= P.width_s:
        raise ParameterError(
            f"requested width s={s} exceeds the field width {P.width_s}")
    P = FourierVectorField(n=P.n, width_s=s, coeffs=P.coeffs, k_max=P.k_max)
    consts = constants(alpha.n, alpha.tau, alpha.gamma, alpha.gamma_bar)
    Q0, eps_star = select_Q(consts, s)
    eps = fld.norm(P, s) if P.coeffs else 0.0
    if eps > eps_star:
        msg = (f"norm(P, s) = {eps:.6g} exceeds the certified threshold "
               f"eps_star = {eps_star:.6g} (Q0 = {Q0:g})")
        if not opts.force:
            raise ThresholdError(msg)
        warnings.warn(msg + "; proceeding without certification",
                      stacklevel=2)
    sched = Schedule(consts=consts, s=s, Q0=Q0, eps0=eps)
    tol = opts.tol if opts.tol is not None else 1e-14 * eps
    ledger = ErrorLedger()

    if eps == 0.0:
        return RunResult(Phi=NearIdentityEmbedding(n=alpha.n, layers=()),
                         beta=np.zeros(alpha.n), trace=[], consts=consts,
                         schedule=sched, eps=0.0, eps_star=eps_star,
                         final_norm=0.0, passes=0, ledger=ledger,
                         alpha=alpha, P=P)

    beta = np.zeros(alpha.n)
    # the endpoint frequency lives near alpha ~ O(1), so the defect cannot
    # resolve below a few ulps of alpha regardless of eps
    defect_tol = max(tol, 1e-15 * eps,
                     8.0 * np.finfo(float).eps * float(np.abs(alpha.alpha).max()))
    passes = 0
    for _ in range(_BETA_PASS_LIMIT):
        passes += 1
        _, _, defect, _ = _forward_pass(
            alpha, P, beta, sched, consts, tol, opts.max_steps,
            enforce=False, ledger=ErrorLedger(), eps=eps)
        beta = beta - defect
        if np.abs(defect).max() <= defect_tol:
            break
    else:
        raise ContractionError(
            "counter-term fixed point did not settle within "
            f"{_BETA_PASS_LIMIT} passes (last defect "
            f"{np.abs(defect).max():.3g})",
            measured_ratio=float(np.abs(defect).max() / eps))

    enforce = not opts.force
    phi, trace, defect, final_norm = _forward_pass(
        alpha, P, beta, sched, consts, tol, opts.max_steps,
        enforce=enforce, ledger=ledger, eps=eps)
    beta = beta - defect     # absorb the sub-tolerance remainder exactly
    passes += 1

    disp = phi.displacement_bound()
    disp_bound = (1.0 - consts.b ** (-1.0 / consts.n)) ** -1 \
        * Q0 ** (consts.n - 1) * eps
    if enforce and disp > disp_bound * (1 + 1e-9):
        raise ContractionError(
            f"total displacement {disp:.6g} exceeds "
            f"(1-b^(-1/n))^-1 Q^(n-1) eps = {disp_bound:.6g}",
            measured_ratio=disp / disp_bound)
    if enforce and np.abs(beta).max() > consts.d * eps * (1 + 1e-9):
        raise ContractionError(
            f"|beta| = {np.abs(beta).max():.6g} exceeds d*eps = "
            f"{consts.d * eps:.6g}",
            measured_ratio=float(np.abs(beta).max() / (consts.d * eps)))
    ledger.charge("run.stopping_truncation",
                  final_norm * consts.b / (consts.b - 1.0))
    return RunResult(Phi=phi, beta=beta, trace=trace, consts=consts,
                     schedule=sched, eps=eps, eps_star=eps_star,
                     final_norm=final_norm, passes=passes, ledger=ledger,
                     alpha=alpha, P=P)


def materialize(phi: NearIdentityEmbedding, k_max: int,
                width: float | None = None,
                tol: float = 1e-10) -> FourierVectorField:
    """Fourier displacement of the composed map, fitted on a (4*k_max)^n
    grid with a grid-doubling aliasing check."""
    if not phi.layers:
        return fld.zero_field(phi.n, width or 1.0)
    if width is None:
        width = min(layer.source_width for layer in phi.layers)
    return fit_displacement(phi, phi.n, k_max, width, tol=tol)
