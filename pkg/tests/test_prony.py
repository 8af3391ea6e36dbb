import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from phasorgrid.prony import PronyRankError, prony, singular_values, suggest_order

DT = 1e-3


def damped(t, f, sigma, amp=1.0, phase=0.0):
    return amp * np.exp(sigma * t) * np.cos(2 * np.pi * f * t + phase)


def test_single_mode_exact():
    t = np.arange(500) * DT
    fit = prony(damped(t, 43.0, -2.0, 1.5, 0.3), DT, order=2)
    m = fit.dominant()
    assert m.f_hz == pytest.approx(43.0, rel=1e-9)
    assert m.sigma == pytest.approx(-2.0, rel=1e-7)
    assert m.amplitude == pytest.approx(1.5, rel=1e-8)
    assert m.phase_rad == pytest.approx(0.3, abs=1e-8)
    assert fit.residual < 1e-10
    assert m.zeta_pct == pytest.approx(100 * 2 / np.hypot(2, 2 * np.pi * 43), rel=1e-7)


def test_growing_mode():
    t = np.arange(400) * DT
    m = prony(damped(t, 41.0, 1.2), DT, order=2).dominant()
    assert m.sigma == pytest.approx(1.2, rel=1e-6) and m.zeta_pct < 0


def test_constant_is_a_zero_mode():
    fit = prony(np.full(50, 0.7), DT, order=1)
    (m,) = fit.modes
    assert abs(m.eigenvalue) < 1e-9 and m.amplitude == pytest.approx(0.7)
    with pytest.raises(ValueError):
        fit.dominant()


def test_remove_mean():
    t = np.arange(400) * DT
    y = 3.0 + damped(t, 20.0, 0.0)
    # a pure cosine sampled over whole periods has zero mean
    fit = prony(y[:400], DT, order=2, remove_mean=True)
    assert fit.dominant().f_hz == pytest.approx(20.0, rel=1e-9)


def test_order_selection_counts_modes():
    t = np.arange(600) * DT
    y = damped(t, 5.0, -1.0) + 0.5 * damped(t, 23.0, -3.0, phase=1.0) + 0.2 * damped(t, 61.0, -0.5)
    assert suggest_order(y) == 6
    fit = prony(y, DT)
    # the 5 Hz pole sits close to z = 1 at this step, which limits the conditioning
    assert fit.order == 6 and fit.residual < 1e-6
    got = sorted(m.f_hz for m in fit.modes if m.eigenvalue.imag > 0)
    assert np.allclose(got, [5.0, 23.0, 61.0], rtol=1e-7)
    s = singular_values(y)
    assert s[6] < 1e-8 * s[0]


def test_dominant_in_band():
    t = np.arange(600) * DT
    y = 2 * damped(t, 5.0, -1.0) + damped(t, 41.0, -0.5)
    fit = prony(y, DT, order=4)
    assert fit.dominant().f_hz == pytest.approx(5.0)
    assert fit.dominant((40, 46)).f_hz == pytest.approx(41.0)


def test_rank_deficiency_is_reported():
    t = np.arange(600) * DT
    y = damped(t, 5.0, -1.0) + damped(t, 23.0, -3.0) + damped(t, 61.0, -0.5)
    with pytest.raises(PronyRankError, match="rank"):
        prony(y, DT, order=12)
    with pytest.raises(PronyRankError, match="samples"):
        prony(y[:10], DT, order=4)


def test_argument_checks():
    with pytest.raises(ValueError):
        prony(np.ones(10), 0.0, 1)
    with pytest.raises(ValueError):
        prony(np.ones(10), DT, 0)


modes = st.tuples(st.floats(2.0, 120.0), st.floats(-6.0, 1.0), st.floats(0.3, 2.0),
                  st.floats(-np.pi, np.pi))


@given(st.lists(modes, min_size=1, max_size=5))
@settings(max_examples=200, deadline=None)
def test_recovers_up_to_five_modes(ms):
    # Sampling at 400 Hz keeps the poles apart on the unit circle. Several slow
    # modes sampled far above their band crowd near z = 1 and make the
    # linear prediction ill-posed in double precision.
    fs = sorted(m[0] for m in ms)
    assume(all(b - a > 5.0 for a, b in zip(fs, fs[1:])))
    dt = 2.5e-3
    t = np.arange(400) * dt
    y = sum(damped(t, *m) for m in ms)
    fit = prony(y, dt, order=2 * len(ms))
    lam = np.array([m.eigenvalue for m in fit.modes])
    for f, sigma, amp, _ in ms:
        true = sigma + 2j * np.pi * f
        assert np.min(np.abs(lam - true)) / abs(true) < 1e-3
