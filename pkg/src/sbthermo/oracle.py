"""Reference solutions used only for validation.

Nothing here touches the hierarchy code: the pure-dephasing solution is a
closed form evaluated by quadrature, and the second-order time-convolutionless
(TCL2) equation is built from the spectral density directly.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .bath import BathSpec
from .errors import QuadratureError

_SX = np.array([[0, 1], [1, 0]], dtype=complex)
_SZ = np.array([[1, 0], [0, -1]], dtype=complex)


def _debye_coth(w, spec: BathSpec):
    # J(w) coth(beta w/2) = pi alpha wc^2/(w^2 + wc^2) * (x coth x)/beta, x = beta w/2
    w = np.asarray(w, dtype=float)
    wc = spec.omega_c
    x = 0.5 * spec.beta * w
    small = x < 1e-8
    safe = np.where(small, 1.0, x)
    ratio = np.where(small, 1.0, safe / np.tanh(safe))  # x coth x
    return np.pi * spec.alpha * wc**2 / (w**2 + wc**2) * ratio / spec.beta


def decoherence_function(t: float, spec: BathSpec, epsabs: float = 1e-14) -> float:
    """Gamma(t) = (4/pi) int_0^inf J(w) coth(beta w/2) (1 - cos wt) / w^2 dw."""
    if t < 0:
        raise ValueError("t must be >= 0")
    if t == 0 or spec.alpha == 0:
        return 0.0
    wc = spec.omega_c
    # beyond w_max coth = 1 to double precision and the tail has a closed form
    w_max = max(50.0 * wc, 40.0 / spec.beta, 20.0 / t)

    def body(w):
        # (1 - cos wt)/w^2 written through sinc to stay smooth at w = 0
        return _debye_coth(w, spec) * 0.5 * t * t * np.sinc(w * t / (2 * np.pi)) ** 2

    edges = np.linspace(0.0, w_max, int(np.ceil(w_max * t / (4 * np.pi))) + 2)
    total, err = 0.0, 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        val, e = integrate.quad(body, a, b, epsabs=epsabs, epsrel=1e-13, limit=200)
        total += val
        err += e
    cos_tail, e = integrate.quad(lambda w: 1.0 / (w * (w * w + wc * wc)), w_max, np.inf,
                                 weight="cos", wvar=t, epsabs=epsabs)
    err += e
    # J coth -> (pi/2) alpha w wc^2 / (w^2 + wc^2) on the tail
    tail = 0.5 * np.pi * spec.alpha * wc**2 * (0.5 * np.log1p(wc**2 / w_max**2) / wc**2 - cos_tail)
    gamma = 4.0 / np.pi * (total + tail)
    if err > 1e-9 * max(abs(gamma), 1e-12):
        raise QuadratureError(f"decoherence function at t={t} did not converge", err)
    return gamma


@dataclass
class DephasingSolution:
    times: np.ndarray
    gamma: np.ndarray
    epsilon: float

    def coherence(self, rho01_0: complex = 0.5) -> np.ndarray:
        return rho01_0 * np.exp(2j * self.epsilon * self.times - self.gamma)


def dephasing_solution(times, spec: BathSpec, epsilon: float) -> DephasingSolution:
    times = np.asarray(times, dtype=float)
    gamma = np.array([decoherence_function(t, spec) for t in times])
    return DephasingSolution(times, gamma, epsilon)


def dephasing_coherence(t: float, spec: BathSpec, epsilon: float, rho01_0: complex = 0.5) -> complex:
    """rho_01(t) for H = -eps sigma_z coupled through sigma_z (independent boson model)."""
    return rho01_0 * np.exp(2j * epsilon * t - decoherence_function(t, spec))


def _gl_nodes(w_max: float, width: float, order: int = 16):
    x, w = np.polynomial.legendre.leggauss(order)
    n_panels = int(np.ceil(w_max / width))
    edges = np.linspace(0.0, w_max, n_panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * x).ravel()
    weights = (half[:, None] * w).ravel()
    return nodes, weights


def _g(x, t):
    # int_0^t exp(i x s) ds
    return t * np.exp(0.5j * x * t) * np.sinc(x * t / (2 * np.pi))


def tcl2_kernel(times, spec: BathSpec, nu: float, w_max: float = 400.0,
                panel: float = 0.25, chunk: int = 64) -> np.ndarray:
    """F(t) = int_0^t C(s) exp(-i nu s) ds on a grid of times.

    The symmetric (noise) part is integrated over frequency with composite
    Gauss-Legendre panels up to ``w_max``; the antisymmetric part uses
    Im C(s) = -(pi alpha wc^2/4) exp(-wc s), exact for the Debye density.
    """
    times = np.asarray(times, dtype=float)
    nodes, weights = _gl_nodes(w_max, panel)
    kern = weights * _debye_coth(nodes, spec) / np.pi
    out = np.empty(len(times), dtype=complex)
    for a in range(0, len(times), chunk):
        t = times[a:a + chunk, None]
        acos = 0.5 * (_g(nodes - nu, t) + _g(-nodes - nu, t))
        out[a:a + chunk] = acos @ kern
    wc = spec.omega_c
    amp = np.pi * spec.alpha * wc**2 / 4
    z = wc + 1j * nu
    out += -1j * amp * -np.expm1(-z * times) / z
    return out


@dataclass
class TCL2Result:
    times: np.ndarray
    rho: np.ndarray


def tcl2_propagate(epsilon: float, delta: float, spec: BathSpec, rho0, t_final: float,
                   dt: float = 0.05, stride: int = 1) -> TCL2Result:
    """Second-order TCL master equation with coupling operator sigma_z.

    drho/dt = -i[H, rho] - [sz, Lam(t) rho - rho Lam(t)^dag],
    Lam(t) = int_0^t C(s) sz(-s) ds, sz(-s) = exp(-iHs) sz exp(iHs).
    Integrated by classical RK4; Lam is tabulated on the half-step grid.
    """
    h = -epsilon * _SZ + delta * _SX
    energies, vecs = np.linalg.eigh(h)
    sz_eig = vecs.conj().T @ _SZ @ vecs
    n_steps = int(round(t_final / dt))
    half_grid = 0.5 * dt * np.arange(2 * n_steps + 1)
    lam = np.zeros((len(half_grid), 2, 2), dtype=complex)
    if spec.alpha > 0:
        for k in range(2):
            for l in range(2):
                if sz_eig[k, l] == 0:
                    continue
                f = tcl2_kernel(half_grid, spec, energies[k] - energies[l])
                proj = sz_eig[k, l] * np.outer(vecs[:, k], vecs[:, l].conj())
                lam += f[:, None, None] * proj

    def rhs(i, rho):
        lm = lam[i]
        d = lm @ rho - rho @ lm.conj().T
        return -1j * (h @ rho - rho @ h) - (_SZ @ d - d @ _SZ)

    rho = np.array(rho0, dtype=complex)
    out = [rho.copy()]
    for n in range(n_steps):
        i = 2 * n
        k1 = rhs(i, rho)
        k2 = rhs(i + 1, rho + 0.5 * dt * k1)
        k3 = rhs(i + 1, rho + 0.5 * dt * k2)
        k4 = rhs(i + 2, rho + dt * k3)
        rho = rho + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if (n + 1) % stride == 0:
            out.append(rho.copy())
    times = dt * stride * np.arange(len(out))
    return TCL2Result(times, np.array(out))


def trace_norm_distance(a, b) -> np.ndarray:
    """||a - b||_1 (sum of singular values) for stacks of Hermitian matrices."""
    d = np.asarray(a) - np.asarray(b)
    return np.abs(np.linalg.eigvalsh(0.5 * (d + np.swapaxes(d, -1, -2).conj()))).sum(axis=-1)
