import numpy as np
import pytest

from sbthermo.bath import BathSpec, correlation_quadrature
from sbthermo.oracle import (decoherence_function, dephasing_coherence, dephasing_solution,
                             tcl2_kernel, tcl2_propagate, trace_norm_distance)

SPEC = BathSpec(0.3, 1.0, 25.0)

# Gamma(t) for alpha=0.3, beta*omega_c=25; frozen from the quadrature at
# tighter tolerances (epsabs 1e-16), unchanged to the last digit
GAMMA_FIXTURES = {
    0.5: 0.12505710133981104,
    1.0: 0.31764977983385434,
    2.0: 0.6757363822603433,
    5.0: 1.3206321080779422,
    10.0: 1.8709767781031883,
}


@pytest.mark.parametrize("t,value", sorted(GAMMA_FIXTURES.items()))
def test_decoherence_function_fixtures(t, value):
    assert decoherence_function(t, SPEC) == pytest.approx(value, rel=1e-10)


def test_decoherence_function_limits():
    assert decoherence_function(0.0, SPEC) == 0.0
    assert decoherence_function(3.0, BathSpec(0.0, 1.0, 25.0)) == 0.0
    with pytest.raises(ValueError):
        decoherence_function(-1.0, SPEC)


def test_decoherence_short_time_growth():
    # the Debye noise spectrum has no finite second moment, so there is no t^2 law
    ts = np.array([0.01, 0.02, 0.04])
    g = np.array([decoherence_function(t, SPEC) for t in ts])
    assert np.all(g > 0) and np.all(np.diff(g) > 0)


def test_decoherence_second_derivative_is_noise_kernel():
    # d^2 Gamma / dt^2 = 4 Re C(t)
    h = 2.5e-3
    for t in (1.0, 3.0):
        g = [decoherence_function(t + k * h, SPEC) for k in (-1, 0, 1)]
        d2 = (g[0] - 2 * g[1] + g[2]) / h**2
        assert d2 == pytest.approx(4 * correlation_quadrature(t, SPEC).real, rel=1e-4)


def test_dephasing_coherence_phase_and_decay():
    sol = dephasing_solution([0.0, 2.0], SPEC, 0.5)
    c = sol.coherence(0.5)
    assert c[0] == 0.5
    assert abs(c[1]) == pytest.approx(0.5 * np.exp(-GAMMA_FIXTURES[2.0]), rel=1e-10)
    assert np.angle(c[1]) == pytest.approx(2.0, abs=1e-12)  # phase 2 eps t
    assert dephasing_coherence(2.0, SPEC, 0.5) == pytest.approx(c[1], rel=1e-12)


def test_tcl2_kernel_matches_direct_integral():
    from scipy.integrate import quad
    # Re C has an integrable log singularity at s = 0, so compare increments
    nu = 0.4
    re = quad(lambda s: (correlation_quadrature(s, SPEC) * np.exp(-1j * nu * s)).real,
              1.0, 3.0, limit=200)[0]
    im = quad(lambda s: (correlation_quadrature(s, SPEC) * np.exp(-1j * nu * s)).imag,
              1.0, 3.0, limit=200)[0]
    errs = []
    for w_max in (400.0, 1600.0):
        f1, f3 = tcl2_kernel([1.0, 3.0], SPEC, nu, w_max=w_max)
        errs.append(abs(f3 - f1 - (re + 1j * im)))
    # the frequency cutoff leaves an error of order alpha / w_max^2
    assert errs[0] < 1e-6
    assert errs[1] < errs[0] / 8


def test_tcl2_kernel_at_zero():
    assert tcl2_kernel([0.0], SPEC, 0.3)[0] == 0


def test_tcl2_decoupled_is_unitary():
    rho0 = np.diag([1.0, 0.0]).astype(complex)
    res = tcl2_propagate(0.0, 0.2, BathSpec(0.0, 1.0, 25.0), rho0, 10.0, dt=0.05, stride=10)
    sz = (res.rho[:, 0, 0] - res.rho[:, 1, 1]).real
    assert np.abs(sz - np.cos(0.4 * res.times)).max() < 1e-7


def test_tcl2_weak_dephasing_matches_exact():
    spec = BathSpec(0.01, 1.0, 25.0)
    rho0 = np.full((2, 2), 0.5, dtype=complex)
    res = tcl2_propagate(0.5, 0.0, spec, rho0, 5.0, dt=0.05, stride=20)
    exact = dephasing_solution(res.times, spec, 0.5).coherence(0.5)
    # pure dephasing is exact at second order in the coupling
    assert np.abs(res.rho[:, 0, 1] - exact).max() < 1e-6


def test_trace_norm_distance():
    a = np.diag([1.0, 0.0])
    b = np.diag([0.0, 1.0])
    assert trace_norm_distance(a, b) == pytest.approx(2.0)
    assert trace_norm_distance(a, a) == 0


def test_decoherence_function_nondecreasing():
    ts = np.linspace(0.0, 30.0, 61)
    g = np.array([decoherence_function(t, SPEC) for t in ts])
    assert np.all(np.diff(g) >= 0)
