import numpy as np
import pytest

from phasorgrid.assembly import _pf_network, line_flow, solve_power_flow, tie_flow
from phasorgrid.powerflow import PQ, PV, SLACK, PowerFlowError, newton_raphson


def two_bus(z=0.01 + 0.1j, b_half=0.02):
    y = 1 / z
    return np.array([[y + 1j * b_half, -y], [-y, y + 1j * b_half]])


def gauss_two_bus(Y, V1, S2, iters=2000):
    # independent fixed point: V2 = (conj(S2/V2) - Y21 V1) / Y22
    V2 = complex(V1)
    for _ in range(iters):
        V2 = (np.conj(S2 / V2) - Y[1, 0] * V1) / Y[1, 1]
    return V2


def test_two_bus_pq_against_fixed_point():
    Y = two_bus()
    S2 = -(2.0 + 0.6j)
    V, err, _ = newton_raphson(Y, [SLACK, PQ], np.array([0, S2.real]), np.array([0, S2.imag]),
                               np.array([1.02, 1.0]), np.array([0.1, 0.0]))
    assert err < 1e-10
    V2 = gauss_two_bus(Y, V[0], S2)
    assert abs(V[1] - V2) < 1e-9
    assert abs(V[0] - 1.02 * np.exp(0.1j)) < 1e-15


def test_two_bus_pv_holds_magnitude():
    Y = two_bus()
    V, err, _ = newton_raphson(Y, [SLACK, PV], np.array([0, 1.5]), np.zeros(2),
                               np.array([1.0, 1.05]))
    S = V * np.conj(Y @ V)
    assert abs(abs(V[1]) - 1.05) < 1e-12
    assert abs(S[1].real - 1.5) < 1e-10


def test_needs_a_slack_bus():
    with pytest.raises(PowerFlowError, match="slack"):
        newton_raphson(two_bus(), [PV, PQ], np.zeros(2), np.zeros(2), np.ones(2))


def test_infeasible_load_does_not_converge():
    with pytest.raises((PowerFlowError, np.linalg.LinAlgError)):
        newton_raphson(two_bus(), [SLACK, PQ], np.array([0, -80.0]), np.array([0, -40.0]),
                       np.ones(2), max_iter=20)


@pytest.mark.parametrize("case", ["case1", "case2"])
def test_case_power_flow_balances(case, case_cfg, power_flows):
    pf = power_flows[case]
    net = _pf_network(case_cfg[case])
    assert pf.mismatch < 1e-10
    S = pf.V * np.conj(net.Y @ pf.V)
    assert np.abs(S - pf.S).max() < 1e-9


def test_tie_flow_met_by_load_trim(case_cfg, power_flows):
    pf = power_flows["case1"]
    assert tie_flow(case_cfg["case1"], pf) == pytest.approx(4.0, abs=1e-8)
    trimmed = pf.adjusted["load7.P"]
    assert 9.0 < trimmed < 10.0


def test_line_flow_sign(case_cfg, power_flows):
    pf = power_flows["case1"]
    net = _pf_network(case_cfg["case1"])
    fwd = line_flow(net, pf.V, "7-8a")
    rev = line_flow(net, pf.V, "7-8a", from_bus="8")
    # the difference is the series loss plus charging, small next to the flow
    assert fwd.real > 0 > rev.real
    assert abs(fwd.real + rev.real) < 0.05 * abs(fwd.real)


def test_unreachable_tie_flow_is_reported(case_cfg):
    data = case_cfg["case1"].model_copy(deep=True)
    data.power_flow.tie_flow.target = 40.0
    with pytest.raises(Exception):
        solve_power_flow(data)
