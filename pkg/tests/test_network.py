import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from phasorgrid.analysis import jacobian_fd
from phasorgrid.network import (
    Branch, Load, NetworkStateSPC, SPCNetwork, Topology, TopologyError, build_admittance,
    build_incidence, complex_to_real_matrix, qpc_solve, spc_network_derivatives,
)

WS = 120 * np.pi


def ladder(n=4, loads=True):
    br = tuple(Branch(k, k + 1, 0.002 * (k + 1), 0.02 + 0.01 * k, 0.03, f"b{k}")
               for k in range(n - 1))
    br += (Branch(0, n - 1, 0.01, 0.1, 0.05, "ring"),)
    ld = (Load(1, R=2.0, L=10.0, C=0.1, name="L1"), Load(n - 1, R=5.0, name="L2")) if loads else ()
    return Topology(n, br, devices=(0, 2), loads=ld)


@st.composite
def random_networks(draw):
    n = draw(st.integers(2, 7))
    rnd = st.floats(0.001, 0.05)
    br = []
    for k in range(1, n):
        j = draw(st.integers(0, k - 1))
        br.append(Branch(j, k, draw(rnd), 10 * draw(rnd), draw(st.floats(0.01, 0.2))))
    for _ in range(draw(st.integers(0, 3))):
        a, b = draw(st.integers(0, n - 1)), draw(st.integers(0, n - 1))
        if a != b:
            br.append(Branch(a, b, draw(rnd), 10 * draw(rnd), draw(st.floats(0.01, 0.2))))
    loads = []
    for k in draw(st.lists(st.integers(0, n - 1), max_size=3)):
        loads.append(Load(k, R=draw(st.floats(0.5, 20)), L=draw(st.floats(1, 50))))
    devices = tuple(draw(st.lists(st.integers(0, n - 1), min_size=1, max_size=3)))
    return Topology(n, tuple(br), devices, tuple(loads))


def test_single_branch_eigenvalues():
    R, L = 0.01, 0.1
    t = Topology(2, (Branch(0, 1, R, L, 0.02),))
    net = SPCNetwork(t, WS)
    # node voltages held at zero: the branch current evolves on its own
    blk = net.jacobian()[:2, :2]
    lam = np.sort_complex(np.linalg.eigvals(blk))
    expect = np.sort_complex(np.array([-WS * R / L - 1j * WS, -WS * R / L + 1j * WS]))
    assert np.allclose(lam, expect, rtol=1e-9, atol=0)


def test_incidence_properties():
    t = ladder()
    inc = build_incidence(t)
    br = inc.CCI[:, t.m:]
    assert np.allclose(br.sum(axis=0), 0.0)
    assert np.array_equal(inc.CCU, -br.T)
    assert np.array_equal(inc.CCI[:, :t.m].sum(axis=0), np.ones(t.m))
    assert inc.CCI.shape == (4, 2 + 4) and inc.CCU.shape == (4, 4)


def test_state_layout_and_labels():
    net = SPCNetwork(ladder(), WS)
    # 4 branches + 4 nodes + 1 inductive load
    assert net.n_complex == 9 and net.n_states == 18
    lab = net.state_labels()
    assert lab[0] == "lineb0.iD" and lab[1] == "lineb0.iQ"
    assert "bus3.vQ" in lab and lab[-1] == "loadL1.iLQ"


def test_admittance_rows_sum_to_shunts():
    t = ladder(loads=False)
    Y = build_admittance(t)
    assert np.allclose(Y, Y.T)
    assert np.allclose(Y.sum(axis=1).real, 0.0, atol=1e-12)
    assert np.allclose(Y.sum(axis=1).imag, t.node_capacitance())


def test_spc_equilibrium_matches_admittance_solve(rng):
    t = ladder()
    inj = rng.standard_normal(t.m) + 1j * rng.standard_normal(t.m)
    v = qpc_solve(build_admittance(t), build_incidence(t).CCI[:, :t.m] @ inj)
    net = SPCNetwork(t, WS)
    dz = net.derivatives(net.equilibrium(v), inj)
    assert np.abs(dz).max() < 1e-6 * WS * 1e-3


@given(random_networks(), st.integers(0, 2 ** 31))
@settings(max_examples=40, deadline=None)
def test_spc_equilibrium_random_networks(t, seed):
    r = np.random.default_rng(seed)
    inj = r.standard_normal(t.m) + 1j * r.standard_normal(t.m)
    v = qpc_solve(build_admittance(t), build_incidence(t).CCI[:, :t.m] @ inj)
    net = SPCNetwork(t, WS)
    dz = net.derivatives(net.equilibrium(v), inj)
    # derivatives carry a factor omega_s / (L or C); compare against that scale
    scale = WS * (1 + np.abs(v).max()) / min(net.C_N.min(), net.L_l.min())
    assert np.abs(dz).max() < 1e-12 * scale


@given(random_networks())
@settings(max_examples=25, deadline=None)
def test_analytic_jacobian_matches_finite_differences(t):
    net = SPCNetwork(t, WS)
    inj = np.ones(t.m, dtype=complex)

    def f(x):
        z = x[0::2] + 1j * x[1::2]
        dz = net.derivatives(z, inj)
        return np.column_stack([dz.real, dz.imag]).ravel()

    x0 = np.random.default_rng(0).standard_normal(net.n_states)
    J = net.jacobian()
    Jfd = jacobian_fd(f, x0)
    assert np.abs(J - Jfd).max() < 1e-6 * np.abs(J).max()


def test_network_is_passive():
    lam = np.linalg.eigvals(SPCNetwork(ladder(), WS).jacobian())
    assert lam.real.max() < 0


def test_state_container_round_trip(rng):
    t = ladder()
    x = rng.standard_normal(SPCNetwork(t, WS).n_states)
    s = NetworkStateSPC.from_real(x, t)
    assert np.array_equal(s.to_real(), x)
    d = spc_network_derivatives(s, np.zeros(t.m), t, WS)
    assert d.v_N.shape == (t.n,)


def test_complex_to_real_matrix(rng):
    M = rng.standard_normal((3, 2)) + 1j * rng.standard_normal((3, 2))
    z = rng.standard_normal(2) + 1j * rng.standard_normal(2)
    w = M @ z
    x = np.column_stack([z.real, z.imag]).ravel()
    assert np.allclose(complex_to_real_matrix(M) @ x, np.column_stack([w.real, w.imag]).ravel())


@pytest.mark.parametrize("kwargs, msg", [
    (dict(n=3, branches=(Branch(0, 1, 0.01, 0.1),)), "disconnected"),
    (dict(n=2, branches=(Branch(0, 2, 0.01, 0.1),)), "references node"),
    (dict(n=2, branches=(Branch(0, 1, -0.01, 0.1),)), "R >= 0"),
    (dict(n=2, branches=(Branch(0, 1, 0.01, 0.0),)), "L > 0"),
    (dict(n=2, branches=(Branch(0, 1, 0.01, 0.1),), devices=(5,)), "invalid node"),
    (dict(n=2, branches=(Branch(0, 1, 0.01, 0.1),), loads=(Load(0, R=0.0),)), "R > 0"),
    (dict(n=0, branches=()), "at least one node"),
])
def test_topology_errors(kwargs, msg):
    with pytest.raises(TopologyError, match=msg):
        Topology(**kwargs)


def test_spc_needs_node_capacitance():
    t = Topology(2, (Branch(0, 1, 0.01, 0.1, 0.0),))
    with pytest.raises(TopologyError, match="shunt capacitance"):
        SPCNetwork(t, WS)


def test_singular_admittance_is_reported():
    t = Topology(2, (Branch(0, 1, 0.0, 0.1, 0.0),))
    with pytest.raises(np.linalg.LinAlgError):
        qpc_solve(build_admittance(t), np.zeros(2, dtype=complex))


def test_shunt_node_under_dc_injection():
    # one node with only its charging capacitance: dv/dt = ws/C (i - jC v)
    c = 0.05
    t = Topology(1, (), devices=(0,), loads=(Load(0, C=c),))
    net = SPCNetwork(t, WS)
    i = 0.3 - 0.1j
    v_ss = i / (1j * c)
    assert abs(net.derivatives(np.array([v_ss]), np.array([i]))[0]) < 1e-9
    from phasorgrid.simulate import SimConfig, integrate_field

    def f(x, u):
        dz = net.derivatives(np.array([x[0] + 1j * x[1]]), np.array([i]))
        return np.array([dz[0].real, dz[0].imag])

    T = 1 / 60
    res = integrate_field(f, np.zeros(2), SimConfig(t_end=T, dt=T / 2000))
    v = res.y[:, 0] + 1j * res.y[:, 1]
    # lossless node: the voltage circles the phasor solution at the synchronous rate
    exact = v_ss * (1 - np.exp(-1j * WS * res.t))
    assert np.abs(v - exact).max() < 1e-8 * abs(v_ss)
    assert abs(np.mean(v[:-1]) - v_ss) < 1e-8 * abs(v_ss)


def test_admittance_solve_residual(rng):
    t = ladder()
    Y = build_admittance(t)
    i = rng.standard_normal(t.n) + 1j * rng.standard_normal(t.n)
    assert np.abs(Y @ qpc_solve(Y, i) - i).max() < 1e-10


def test_power_balance_at_equilibrium(rng):
    t = ladder()
    net = SPCNetwork(t, WS)
    inj = rng.standard_normal(t.m) + 1j * rng.standard_normal(t.m)
    i_N = build_incidence(t).CCI[:, :t.m] @ inj
    v = qpc_solve(build_admittance(t), i_N)
    i_l, v_N, i_L = net.split(net.equilibrium(v))
    p_in = np.sum((v * np.conj(i_N)).real)
    losses = np.sum(net.R_l * np.abs(i_l) ** 2)
    loads = np.sum(net.G_N * np.abs(v_N) ** 2)
    assert abs(p_in - losses - loads) < 1e-6


def test_branch_law_at_steady_state(rng):
    t = ladder()
    net = SPCNetwork(t, WS)
    v = rng.standard_normal(t.n) + 1j * rng.standard_normal(t.n)
    i_l = net.split(net.equilibrium(v))[0]
    Z = np.array([b.R + 1j * b.L for b in t.branches])
    assert np.allclose(build_incidence(t).CCU @ v, Z * i_l, atol=1e-14)
