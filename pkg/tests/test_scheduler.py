import numpy as np
import pytest

from kamtorus import field as fld
from kamtorus import scheduler as sch
from kamtorus.errors import InfeasibleError, ThresholdError
from kamtorus.generate import random_field


# ---------------------------------------------------------------------------
# constants
# ---------------------------------------------------------------------------

def test_constants_n2_tau0():
    c = sch.constants(2, 0.0, 1.0, 1.0)
    assert c.a == 1.0
    assert c.b == 16.0
    assert c.c == pytest.approx(1.0 / 15.0)
    assert c.d == pytest.approx(16.0 / 15.0)
    assert c.gamma_star == pytest.approx((1.0 / 2.0) ** (1.0 / 2.0))


def test_constants_n3_tau0():
    c = sch.constants(3, 0.0, 1.0, 1.0)
    assert c.a == 1.0
    assert c.b == 64.0
    assert c.c == pytest.approx(1.0 / 63.0)
    assert c.d == pytest.approx(64.0 / 63.0)


def test_constants_identity_c_plus_one_is_d():
    for n, tau in [(2, 0.0), (2, 0.5), (3, 0.1), (4, 1.0)]:
        c = sch.constants(n, tau, 0.3, 0.4)
        assert c.c + 1.0 == pytest.approx(c.d, rel=1e-15)
        assert c.b == 4.0 ** (n * c.a)


def test_constants_validation():
    with pytest.raises(Exception):
        sch.constants(1, 0.0, 1.0, 1.0)
    with pytest.raises(Exception):
        sch.constants(2, -0.5, 1.0, 1.0)
    with pytest.raises(Exception):
        sch.constants(2, 0.0, 0.0, 1.0)


# ---------------------------------------------------------------------------
# schedules
# ---------------------------------------------------------------------------

def test_schedule_identities(golden_freq):
    c = sch.constants(2, 0.0, golden_freq.gamma, golden_freq.gamma_bar)
    sched = sch.Schedule(c, s=1.0, Q0=512.0, eps0=1e-6)
    for m in range(0, 65, 8):
        # Q_m^n * eps_m is m-independent
        assert sched.Q(m) ** 2 * sched.eps(m) == pytest.approx(
            512.0 ** 2 * 1e-6, rel=1e-12)
        # Q_m^(1/a) * sigma_m doubles each step
        assert sched.Q(m) ** (1.0 / c.a) * sched.sigma(m) == pytest.approx(
            2.0 ** m * 512.0 * 0.25, rel=1e-12)
        assert sched.width(m) == pytest.approx(0.5 + 2.0 ** (-m - 1),
                                               rel=1e-12)
        # widths are consistent: width(m) - sigma(m) == width(m+1)
        assert sched.width(m) - sched.sigma(m) == pytest.approx(
            sched.width(m + 1), rel=1e-12)


def test_schedule_eps_step_identity():
    c = sch.constants(2, 0.0, 0.3, 0.4)
    sched = sch.Schedule(c, s=1.0, Q0=256.0, eps0=1e-5)
    for m in range(20):
        # d * eps_{m+1} == c * eps_m exactly (both are eps_m / (b - 1))
        assert c.d * sched.eps(m + 1) == pytest.approx(c.c * sched.eps(m),
                                                       rel=2e-16)


# ---------------------------------------------------------------------------
# select_Q
# ---------------------------------------------------------------------------

def test_select_q_golden(golden_freq):
    c = sch.constants(2, 0.0, golden_freq.gamma, golden_freq.gamma_bar)
    Q0, eps_star = sch.select_Q(c, 1.0)
    assert Q0 == 512.0
    assert eps_star == pytest.approx(512.0 ** -2)
    ok, _ = sch.check_conditions(c, sch.Schedule(c, 1.0, Q0, eps_star), 0,
                                 eps_star)
    assert ok


def test_select_q_monotone_in_width(golden_freq):
    c = sch.constants(2, 0.0, golden_freq.gamma, golden_freq.gamma_bar)
    Q_narrow, _ = sch.select_Q(c, 0.5)
    Q_wide, _ = sch.select_Q(c, 1.0)
    assert Q_wide <= Q_narrow


def test_select_q_monotone_in_gamma_star(golden_freq):
    weak = sch.constants(2, 0.0, golden_freq.gamma * 0.1,
                         golden_freq.gamma_bar * 0.1)
    strong = sch.constants(2, 0.0, golden_freq.gamma, golden_freq.gamma_bar)
    Q_weak, _ = sch.select_Q(weak, 1.0)
    Q_strong, _ = sch.select_Q(strong, 1.0)
    assert Q_strong <= Q_weak


def test_select_q_infeasible():
    c = sch.constants(2, 0.0, 1e-300, 1e-300)
    with pytest.raises(InfeasibleError):
        sch.select_Q(c, 1e-3)


def test_check_conditions_scaling(golden_freq):
    c = sch.constants(2, 0.0, golden_freq.gamma, golden_freq.gamma_bar)
    sched = sch.Schedule(c, 1.0, 512.0, eps0=512.0 ** -2)
    for m in range(6):
        ok, rep = sch.check_conditions(c, sched, m, sched.eps(m))
        assert ok, rep
    # an eps above the threshold at m=0 fails the first condition
    ok, rep = sch.check_conditions(c, sched, 0, 10 * 512.0 ** -2)
    assert not ok and not rep["ok"][0]


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------

def test_run_zero_perturbation(golden_freq):
    P = fld.zero_field(2, 1.0)
    res = sch.run(golden_freq, P, 1.0)
    assert res.Phi.layers == ()
    np.testing.assert_array_equal(res.beta, [0.0, 0.0])
    assert res.final_norm == 0.0
    assert res.trace == []


def test_run_constant_perturbation(golden_freq):
    P = fld.constant_field([1e-7, -3e-8], 1.0)
    res = sch.run(golden_freq, P, 1.0)
    np.testing.assert_allclose(res.beta, [-1e-7, 3e-8], atol=1e-20)
    assert res.Phi.layers == ()
    assert res.final_norm == 0.0


def test_run_small_field(golden_freq):
    P = random_field(2, 1.0, 1e-6, 5, 1)
    res = sch.run(golden_freq, P, 1.0)
    eps = res.eps
    # envelope on every recorded step
    for m, entry in enumerate(res.trace):
        assert entry["norm_P"] <= res.schedule.eps(m) * (1 + 1e-9)
    assert np.abs(res.beta).max() <= res.consts.d * eps
    assert res.Phi.displacement_bound() <= \
        res.schedule.Q0 * eps / (1 - res.consts.b ** (-0.5)) * (1 + 1e-9)
    assert res.final_norm <= 1e-20
    # ledger records the truncation charge
    assert res.ledger.total >= res.final_norm


def test_run_threshold_error(golden_freq):
    P = random_field(2, 1.0, 1e-2, 5, 1)
    with pytest.raises(ThresholdError):
        sch.run(golden_freq, P, 1.0)


def test_run_force_overrides_threshold(golden_freq):
    # uncertified but numerically fine: force proceeds with a warning
    P = random_field(2, 1.0, 1e-2, 5, 1)
    with pytest.warns(UserWarning):
        res = sch.run(golden_freq, P, 1.0, sch.RunOptions(force=True))
    assert res.final_norm <= 1e-14


def test_run_max_steps(golden_freq):
    P = random_field(2, 1.0, 1e-6, 5, 3)
    res = sch.run(golden_freq, P, 1.0, sch.RunOptions(tol=0.0, max_steps=3))
    assert len(res.trace) == 3


# ---------------------------------------------------------------------------
# materialize
# ---------------------------------------------------------------------------

def test_materialize_identity():
    phi = sch.NearIdentityEmbedding(2, ())
    disp = sch.materialize(phi, k_max=4, width=0.5)
    assert fld.norm(disp, 0.5) <= 1e-14


def test_materialize_run_output(golden_freq):
    P = random_field(2, 1.0, 1e-6, 5, 2)
    res = sch.run(golden_freq, P, 1.0)
    disp = sch.materialize(res.Phi, k_max=16, width=0.4)
    pts = np.random.default_rng(0).uniform(0, 1, size=(30, 2))
    np.testing.assert_allclose(pts + fld.eval_many(disp, pts), res.Phi(pts),
                               atol=1e-10)
