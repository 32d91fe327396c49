from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ecocacc.controllers import Q1, ControllerMode, PdGains, QFilterConfig
from ecocacc.plant import SpacingPolicy, VehicleParams
from ecocacc.presets import DEFAULT_GAINS, reference_case
from ecocacc.stability import (
    FrequencyGrid,
    ResonanceError,
    StabilityCase,
    closed_loop_poles,
    exceedance_bands,
    grid_inf_norm,
    is_closed_loop_stable,
    pade_delay,
    search_gains,
    spacing_policy_response,
    ss_acc,
    ss_cacc,
    ss_eco_cacc,
    ss_response,
)

MODES = list(ControllerMode)
CASES = (1, 2, 3)


def test_spacing_policy_examples():
    assert spacing_policy_response(SpacingPolicy(t_gap=0.6), 0.0) == 1 + 0j
    assert abs(spacing_policy_response(SpacingPolicy(t_gap=0.6), 1.0)) == pytest.approx(math.sqrt(1.36))
    assert abs(spacing_policy_response(SpacingPolicy(t_gap=0.6), 1.0)) == pytest.approx(1.1662, abs=1e-4)
    assert abs(spacing_policy_response(SpacingPolicy(t_gap=1.0), 1.0)) == pytest.approx(math.sqrt(2))


@pytest.mark.parametrize("case", CASES)
@pytest.mark.parametrize("mode", MODES)
def test_low_and_high_frequency_limits(case, mode):
    c = reference_case(case)
    assert abs(ss_response(mode, c, 1e-4)) == pytest.approx(1.0, abs=1e-3)
    assert abs(ss_response(mode, c, 1e3)) <= 1e-2


def test_cacc_against_hand_simplification():
    # beta = kappa = 0 and tau = t_gap make C_ff = 1, so
    # SS = (C_fb + s^2) / (s^2 (tau s + 1) + C_fb (1 + t_gap s))
    kp, kd, tau = 0.7, 0.4, 0.6
    s = 1j
    c = kp + kd * s
    expected = (c + s * s) / (s * s * (tau * s + 1) + c * (1 + tau * s))
    got = ss_cacc(1.0, PdGains(K_p=kp, K_d=kd), VehicleParams(tau=tau, kappa=0), SpacingPolicy(t_gap=tau), 0.0)
    assert got == pytest.approx(expected, rel=1e-12)


def test_acc_against_hand_evaluation():
    # SS_ACC = C_fb / (s^2 (tau s + 1) + C_fb H) with kappa = 0, at omega = 2
    s = 2j
    c = 0.3 + 0.8 * s
    expected = c / (s * s * (0.5 * s + 1) + c * (1 + 0.6 * s))
    got = ss_acc(2.0, PdGains(K_p=0.3, K_d=0.8), VehicleParams(tau=0.5), SpacingPolicy(t_gap=0.6))
    assert got == pytest.approx(expected, rel=1e-12)


def test_case2_acc_norm_golden():
    rep = grid_inf_norm(ControllerMode.ACC, reference_case(2))
    assert rep.inf_norm == pytest.approx(1.0621712409787272, rel=1e-9)
    assert rep.argmax_omega == pytest.approx(0.1656, rel=1e-3)


@pytest.mark.parametrize("case", CASES)
def test_cacc_not_worse_than_acc(case):
    c = reference_case(case)
    assert grid_inf_norm("cacc", c).inf_norm <= grid_inf_norm("acc", c).inf_norm


def test_eco_with_vanishing_filter_matches_cacc():
    c = reference_case(1, q=QFilterConfig(f_c=1e-6))
    w = FrequencyGrid.log().points
    np.testing.assert_allclose(ss_response("eco_cacc", c, w), ss_response("cacc", c, w), atol=1e-4, rtol=0)


def test_eco_case1_single_narrow_band():
    rep = grid_inf_norm("eco_cacc", reference_case(1, q=Q1))
    bands = exceedance_bands(rep.omegas, rep.magnitudes, 1.0)
    assert len(bands) == 1
    assert 1.0 < rep.inf_norm <= 1.2
    lo, hi = bands[0]
    assert lo <= rep.argmax_omega <= hi


def test_mock_constant_transfer_function():
    rep = grid_inf_norm(lambda w: np.ones_like(w, dtype=complex), label="one")
    assert rep.inf_norm == 1.0 and rep.is_string_stable and rep.label == "one"
    assert rep.exceedance_bands == []
    rep = grid_inf_norm(lambda w: 1.5 + 0 * w)
    assert not rep.is_string_stable


@pytest.mark.parametrize("mode", MODES)
def test_grid_refinement_adequate(mode):
    c = reference_case(1)
    grid = FrequencyGrid.log()
    coarse = grid_inf_norm(mode, c, grid).inf_norm
    fine = grid_inf_norm(mode, c, grid.refined(2)).inf_norm
    assert abs(fine - coarse) / coarse < 5e-3


def test_report_consistency(tmp_path):
    rep = grid_inf_norm("cacc", reference_case(3))
    assert rep.inf_norm == rep.magnitudes.max()
    assert rep.is_string_stable == (rep.inf_norm <= 1 + rep.tol)
    assert rep.closed_loop_stable
    rep.to_csv(tmp_path / "r.csv")
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == "omega_rad_s,magnitude" and len(lines) == rep.omegas.size + 1
    assert set(rep.summary()) >= {"label", "inf_norm", "argmax_omega", "is_string_stable"}


def test_grid_validation():
    with pytest.raises(ValueError):
        FrequencyGrid(np.array([1.0, 0.5]))
    with pytest.raises(ValueError):
        FrequencyGrid(np.array([0.0, 1.0]))
    g = FrequencyGrid.log()
    assert g.points[0] <= 1e-2 and g.points[-1] >= 1e2 and g.points.size >= 2000


@settings(max_examples=40)
@given(beta=st.floats(0, 2), w=st.floats(1e-3, 1e3))
def test_delay_factor_unit_magnitude(beta, w):
    assert abs(np.exp(-1j * w * beta)) == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=20, deadline=None)
@given(
    kp=st.floats(0.1, 2),
    kd=st.floats(0.0, 1),
    tau=st.floats(0.1, 1),
    t_gap=st.floats(0.3, 2),
    beta=st.floats(0, 0.5),
)
def test_eco_limit_pointwise(kp, kd, tau, t_gap, beta):
    gains, veh, pol = PdGains(K_p=kp, K_d=kd), VehicleParams(tau=tau), SpacingPolicy(t_gap=t_gap)
    w = np.logspace(-2, 2, 300)
    try:
        eco = ss_eco_cacc(w, gains, veh, pol, beta, QFilterConfig(f_c=1e-6))
        cacc = ss_cacc(w, gains, veh, pol, beta)
    except ResonanceError:
        return
    np.testing.assert_allclose(eco, cacc, atol=1e-4, rtol=0)


def test_resonance_fails_loudly():
    gains, veh, pol = PdGains(K_p=1.0, K_d=0.0), VehicleParams(tau=1e-9, kappa=0.0), SpacingPolicy(t_gap=1e-9)
    # with no damping and negligible lag the loop reduces to s^2 + K_p, zero at omega = 1
    with pytest.raises(ResonanceError):
        ss_acc(np.array([0.5, 1.0, 2.0]), gains, veh, pol)


def test_pade_and_poles():
    num, den = pade_delay(0.1)
    w = 3.0
    approx = np.polyval(num, 1j * w) / np.polyval(den, 1j * w)
    assert approx == pytest.approx(np.exp(-0.1j * w), abs=1e-8)
    for case in CASES:
        c = reference_case(case)
        assert is_closed_loop_stable(c.gains, c.vehicle, c.policy)
    poles = closed_loop_poles(PdGains(K_p=0.1, K_d=0.0), VehicleParams(kappa=0.0), SpacingPolicy(t_gap=0.6))
    assert poles.size == 3


def test_gain_search_result_is_pinned_default():
    c = reference_case(1)
    res = search_gains(c.vehicle, c.policy, c.beta)
    assert res.gains == DEFAULT_GAINS
    assert res.constraint_met is False
    assert res.inf_norm == pytest.approx(1.0517, abs=1e-3)
    assert res.evaluated > 0


def test_gain_search_prefers_feasible():
    # case 3 has a string-stable pair in the box (the default itself)
    c = reference_case(3)
    res = search_gains(c.vehicle, c.policy, c.beta, kp_values=[0.1, 0.5], kd_values=[0.5, 1.0])
    assert res.constraint_met
    assert res.inf_norm <= 1 + 1e-3


def test_case_requires_q_for_eco():
    with pytest.raises(ValueError):
        ss_response("eco_cacc", StabilityCase(), 1.0)
