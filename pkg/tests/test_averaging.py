import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kamtorus import averaging as avg
from kamtorus import field as fld
from kamtorus import scheduler as sch
from kamtorus.diophantine import RationalApprox, dirichlet_approx
from kamtorus.errors import (ContractionError, DomainError, ParameterError,
                             StepConditionError, StepSizeError)
from kamtorus.generate import random_field
from kamtorus.oracles import quadrature_time_average


def _half_omega() -> RationalApprox:
    # omega = (1, 1/2)
    return RationalApprox(q=2, p=np.array([1]), Q=4.0,
                          varpi=np.array([0.0, 0.0]))


def _rand(seed, n=2, eps=1.0, modes=5, k_max=3, s=1.0):
    return random_field(n, s, eps, modes, seed, k_max=k_max)


# ---------------------------------------------------------------------------
# omega_average / space_average
# ---------------------------------------------------------------------------

def test_omega_average_kills_nonresonant_modes():
    # omega=(1,1/2): modes (0, +-1) have k.q_omega = +-1 != 0
    P = fld.make_field(2, 1.0, {(0, 1): [1.0, 2.0], (0, 0): [3.0, 0.0]})
    out = avg.omega_average(P, _half_omega())
    assert set(out.coeffs) == {(0, 0)}
    np.testing.assert_allclose(out.constant_part(), [3.0, 0.0])


def test_omega_average_keeps_resonant_mode():
    # mode (-1, 2): 2*(-1) + 2*1 = 0, kept verbatim
    P = fld.make_field(2, 1.0, {(-1, 2): [1.0 + 1.0j, 0.0]})
    out = avg.omega_average(P, _half_omega())
    assert set(out.coeffs) == {(-1, 2), (1, -2)}
    np.testing.assert_array_equal(out.coeffs[(-1, 2)], P.coeffs[(-1, 2)])


@settings(deadline=None, max_examples=30)
@given(seed=st.integers(0, 10 ** 6), Q=st.sampled_from([5.0, 20.0]))
def test_omega_average_is_projection(seed, Q, golden_freq):
    P = _rand(seed)
    ap = dirichlet_approx(golden_freq, Q)
    once = avg.omega_average(P, ap)
    twice = avg.omega_average(once, ap)
    assert fld.norm(fld.sub(once, twice), 1.0) == 0.0
    # composed with space average equals space average
    np.testing.assert_array_equal(avg.space_average(once),
                                  avg.space_average(P))


def test_omega_average_matches_quadrature(golden_freq):
    P = _rand(3, modes=6)
    ap = dirichlet_approx(golden_freq, 20)
    proj = avg.omega_average(P, ap)
    sampler = quadrature_time_average(P, ap.q, ap.omega, 256)
    pts = np.random.default_rng(0).uniform(0, 1, size=(20, 2))
    assert np.abs(sampler(pts) - fld.eval_many(proj, pts)).max() <= 1e-8


def test_space_average():
    c = fld.constant_field([1.0, -2.5], 1.0)
    np.testing.assert_allclose(avg.space_average(c), [1.0, -2.5])
    zero_mean = fld.make_field(2, 1.0, {(1, 0): [1.0, 1.0j]})
    np.testing.assert_allclose(avg.space_average(zero_mean), [0.0, 0.0])


# ---------------------------------------------------------------------------
# solve_homological
# ---------------------------------------------------------------------------

def test_homological_single_mode():
    # k=(0,1), omega=(1,1/2): divisor 2*pi*i*(1/2) = pi*i
    P = fld.make_field(2, 1.0, {(0, 1): [1.0, 2.0]})
    sol = avg.solve_homological(P, _half_omega())
    np.testing.assert_allclose(sol.V.coeffs[(0, 1)],
                               np.array([1.0, 2.0]) / (np.pi * 1j))


def test_homological_fully_resonant():
    P = fld.make_field(2, 1.0, {(-1, 2): [1.0, 0.5], (0, 0): [1.0, 1.0]})
    sol = avg.solve_homological(P, _half_omega())
    assert sol.V.coeffs == {}
    assert sol.residual == 0.0


@settings(deadline=None, max_examples=30)
@given(seed=st.integers(0, 10 ** 6), Q=st.sampled_from([5.0, 20.0]))
def test_homological_identity_and_norm_bound(seed, Q, golden_freq):
    P = _rand(seed, modes=6)
    ap = dirichlet_approx(golden_freq, Q)
    sol = avg.solve_homological(P, ap)
    assert sol.residual <= 1e-12
    rhs_norm = fld.norm(fld.sub(P, avg.omega_average(P, ap)), 1.0)
    assert fld.norm(sol.V, 1.0) <= ap.q * rhs_norm * (1 + 1e-12)
    # V vanishes on resonant modes
    for k in sol.V.coeffs:
        assert avg._divisor(k, ap.q, ap.p) != 0


# ---------------------------------------------------------------------------
# lie_pullback
# ---------------------------------------------------------------------------

def test_pullback_zero_V_is_identity():
    Y = _rand(4)
    out = avg.lie_pullback(Y, fld.zero_field(2, 1.0), 1.0, 0.25, 1e-14)
    assert fld.norm(fld.sub(out, fld.make_field(2, 0.75, Y.coeffs)),
                    0.75) == 0.0


def test_pullback_constants_commute():
    Y = fld.constant_field([1.0, 2.0], 1.0)
    V = fld.constant_field([0.003, 0.004], 1.0)
    out = avg.lie_pullback(Y, V, 1.0, 0.25, 1e-14)
    np.testing.assert_allclose(out.constant_part(), [1.0, 2.0])


def test_pullback_size_precondition():
    Y = _rand(5)
    V = _rand(6, eps=10.0)
    with pytest.raises(StepSizeError):
        avg.lie_pullback(Y, V, 1.0, 0.01, 1e-14)


def test_pullback_two_norm_bound():
    # |(V^1)^* Y| <= 2 |Y| whenever norm(V) <= sigma/(4n)
    sigma = 0.25
    for seed in range(20):
        Y = _rand(seed)
        V = _rand(seed + 100, eps=sigma / 8.0 * 0.9)
        out = avg.lie_pullback(Y, V, 1.0, sigma, 1e-15)
        assert fld.norm(out, 1.0 - sigma) <= 2.0 * fld.norm(Y, 1.0)


# ---------------------------------------------------------------------------
# averaging_step
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def golden_consts(golden_freq):
    return sch.constants(2, 0.0, golden_freq.gamma, golden_freq.gamma_bar)


def test_step_zero_perturbation(golden_freq, golden_consts):
    S = fld.zero_field(2, 1.0)
    P = fld.zero_field(2, 1.0)
    res = avg.averaging_step(golden_freq, S, P, 512.0, 0.25, golden_consts)
    assert res.P_plus.coeffs == {}
    assert res.Phi1.layers == ()
    np.testing.assert_array_equal(res.P_avg, [0.0, 0.0])


def test_step_constant_perturbation(golden_freq, golden_consts):
    S = fld.zero_field(2, 1.0)
    P = fld.constant_field([1e-7, -2e-7], 1.0)
    res = avg.averaging_step(golden_freq, S, P, 512.0, 0.25, golden_consts)
    assert res.P_plus.coeffs == {}
    assert res.Phi1.layers == ()
    np.testing.assert_allclose(res.P_avg, [1e-7, -2e-7])


def test_step_contraction(golden_freq, golden_consts):
    P = _rand(1, eps=1e-6)
    S = fld.zero_field(2, 1.0)
    res = avg.averaging_step(golden_freq, S, P, 512.0, 0.25, golden_consts)
    eps = fld.norm(P, 1.0)
    assert fld.norm(res.P_plus, 0.75) <= eps / 16.0
    assert fld.norm(res.V, 1.0) <= 512.0 * eps
    assert all(res.budget.conditions_ok)


def test_step_conditions_failure(golden_freq, golden_consts):
    P = _rand(1, eps=1e-2)   # far above threshold at Q=512
    S = fld.zero_field(2, 1.0)
    with pytest.raises(StepConditionError) as exc:
        avg.averaging_step(golden_freq, S, P, 512.0, 0.25, golden_consts)
    assert "threshold" in exc.value.failed


def test_step_equivalence_with_direct_pullback(golden_freq, golden_consts):
    """The regrouped series for P_plus agrees with pulling back the full
    field and subtracting the identified terms."""
    s, sigma, Q = 1.0, 0.25, 512.0
    for seed in (2, 5, 9):
        P = _rand(seed, eps=1e-6)
        S = fld.constant_field([1e-8, -2e-8], s)
        res = avg.averaging_step(golden_freq, S, P, Q, sigma, golden_consts,
                                 enforce=False)
        Y = fld.add(fld.constant_field(golden_freq.alpha, s), fld.add(S, P))
        pulled = avg.lie_pullback(Y, res.V, s, sigma, 1e-22)
        direct = fld.sub(pulled, fld.add(
            fld.constant_field(golden_freq.alpha, s - sigma),
            fld.add(fld.make_field(2, s - sigma, S.coeffs),
                    fld.constant_field(res.P_avg, s - sigma))))
        assert fld.norm(fld.sub(direct, res.P_plus), s - sigma) <= 1e-9


def test_step_rejects_oversized_S(golden_freq, golden_consts):
    P = _rand(1, eps=1e-6)
    S = fld.constant_field([1e-3, 0.0], 1.0)
    with pytest.raises(DomainError):
        avg.averaging_step(golden_freq, S, P, 512.0, 0.25, golden_consts)


def test_step_budget_chain(golden_freq, golden_consts):
    P = _rand(8, eps=1e-6)
    S = fld.zero_field(2, 1.0)
    res = avg.averaging_step(golden_freq, S, P, 512.0, 0.25, golden_consts)
    eps = fld.norm(P, 1.0)
    b = golden_consts.b
    # recorded terms reproduce the coarse chain: each half below eps/(2b)
    assert res.budget.tail_term <= eps / (2 * b)
    assert res.budget.bracket_term <= eps / (2 * b)
    assert res.budget.q_eps == pytest.approx(res.approx.q * eps)


# ---------------------------------------------------------------------------
# counter_term_step
# ---------------------------------------------------------------------------

def test_counter_term_translation(golden_freq, golden_consts):
    P = fld.constant_field([1e-7, 0.0], 1.0)
    x = golden_freq.alpha
    phi1_x, res = avg.counter_term_step(golden_freq, P, x, 512.0, 0.25,
                                        golden_consts)
    np.testing.assert_allclose(phi1_x, x - np.array([1e-7, 0.0]))
    assert res.P_plus.coeffs == {}


def test_counter_term_zero_average(golden_freq, golden_consts):
    P = fld.make_field(2, 1.0, {(1, 0): [1e-11, 1e-11j]})
    x = golden_freq.alpha
    phi1_x, _ = avg.counter_term_step(golden_freq, P, x, 512.0, 0.25,
                                      golden_consts)
    np.testing.assert_array_equal(phi1_x, x)


def test_counter_term_domain_error(golden_freq, golden_consts):
    P = _rand(1, eps=1e-6)
    x = golden_freq.alpha + 1e-3
    with pytest.raises(DomainError):
        avg.counter_term_step(golden_freq, P, x, 512.0, 0.25, golden_consts)


def test_counter_term_shift_stays_in_budget(golden_freq, golden_consts):
    P = _rand(12, eps=1e-6)
    eps = fld.norm(P, 1.0)
    x = golden_freq.alpha + golden_consts.c * eps * 0.5
    phi1_x, _ = avg.counter_term_step(golden_freq, P, x, 512.0, 0.25,
                                      golden_consts)
    assert np.abs(phi1_x - golden_freq.alpha).max() <= \
        golden_consts.d * eps * (1 + 1e-9)
