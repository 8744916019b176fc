"""Internal energy, work, heat, entropy production and their weak-coupling versions.

All inputs are aligned series on one uniform time grid: states ``rho`` and
exact derivatives ``rho_dot`` of shape (n, 2, 2), and the effective
Hamiltonian ``k_s`` with its exact derivative ``k_s_dot``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_simpson

from .errors import GridMismatch, PositivityError, RealityError

EIGEN_FLOOR = 1e-14
POSITIVITY_TOL = 1e-6
REALITY_TOL = 1e-10

THERMO_COLUMNS = ("time", "U_S", "W_S", "Q_S", "dS", "Sigma_S", "sigma_S",
                  "W_w", "Q_w", "sigma_w")
THERMO_UNITS = ("1/omega_c", "omega_c", "omega_c", "omega_c", "1", "1", "omega_c",
                "omega_c", "omega_c", "omega_c")


def _check_grid(times, *series):
    times = np.asarray(times, dtype=float)
    for s in series:
        if len(s) != len(times):
            raise GridMismatch(f"series of length {len(s)} on a grid of {len(times)} points")
    if len(times) > 2:
        steps = np.diff(times)
        if np.ptp(steps) > 1e-9 * max(abs(steps[0]), 1e-300):
            raise GridMismatch("time grid is not uniform")
    return times


def _real(values, what: str) -> np.ndarray:
    values = np.asarray(values)
    if np.iscomplexobj(values):
        imag = np.abs(values.imag).max(initial=0.0)
        if imag > REALITY_TOL * max(1.0, np.abs(values).max(initial=0.0)):
            raise RealityError(f"{what} has an imaginary part of {imag:.3g}")
        values = values.real
    return np.ascontiguousarray(values, dtype=float)


def expectation(op, rho) -> np.ndarray:
    """Tr{op rho} along the series (op may be a single matrix or a series)."""
    return np.einsum("...ij,...ji->...", op, rho)


def integrate(times, rate) -> np.ndarray:
    """Cumulative integral from the first grid time (composite Simpson)."""
    if len(times) < 2:
        return np.zeros(len(times))
    return cumulative_simpson(rate, x=times, initial=0.0)


def internal_energy(k_s, rho, times=None) -> np.ndarray:
    if times is not None:
        _check_grid(times, k_s, rho)
    elif len(k_s) != len(rho):
        raise GridMismatch("K_S and rho series have different lengths")
    return _real(expectation(k_s, rho), "U_S")


def work(times, k_s_dot, rho) -> np.ndarray:
    """W_S(t) = int_0^t Tr{dK_S/dt rho}."""
    times = _check_grid(times, k_s_dot, rho)
    return integrate(times, _real(expectation(k_s_dot, rho), "work rate"))


def heat(times, k_s, rho_dot) -> np.ndarray:
    """Q_S(t) = int_0^t Tr{K_S drho/dt}."""
    times = _check_grid(times, k_s, rho_dot)
    return integrate(times, _real(expectation(k_s, rho_dot), "heat rate"))


def _spectral(rho):
    rho = np.asarray(rho)
    herm = 0.5 * (rho + np.swapaxes(rho, -1, -2).conj())
    p, v = np.linalg.eigh(herm)
    if p.min(initial=0.0) < -POSITIVITY_TOL:
        raise PositivityError(f"state has eigenvalue {p.min():.3g}")
    return np.clip(p, EIGEN_FLOOR, 1.0), v


def von_neumann_entropy(rho) -> np.ndarray:
    p, _ = _spectral(rho)
    terms = -p * np.log(p)
    terms[p <= EIGEN_FLOOR] = 0.0
    return terms.sum(axis=-1)


def entropy_rate(rho, rho_dot) -> np.ndarray:
    """dS/dt = -Tr{drho/dt ln rho} (uses Tr drho/dt = 0)."""
    p, v = _spectral(rho)
    log_rho = (v * np.log(p)[..., None, :]) @ np.swapaxes(v, -1, -2).conj()
    return -_real(expectation(rho_dot, log_rho), "entropy rate")


def weak_coupling_observables(times, h_s, rho, rho_dot, beta: float):
    """(W_w, Q_w, sigma_w) with the bare, time-independent H_S."""
    times = _check_grid(times, rho, rho_dot)
    q_rate = _real(expectation(h_s, rho_dot), "weak-coupling heat rate")
    w_w = np.zeros(len(times))
    q_w = integrate(times, q_rate)
    sigma_w = entropy_rate(rho, rho_dot) - beta * q_rate
    return w_w, q_w, sigma_w


def entropy_and_production(times, rho, rho_dot, q_s, k_s, beta: float):
    """(dS, Sigma_S, sigma_S): entropy change, entropy production and its rate."""
    times = _check_grid(times, rho, rho_dot, q_s, k_s)
    s = von_neumann_entropy(rho)
    ds = s - s[0]
    sigma_total = ds - beta * np.asarray(q_s)
    rate = entropy_rate(rho, rho_dot) - beta * _real(expectation(k_s, rho_dot), "heat rate")
    return ds, sigma_total, rate


@dataclass
class ThermoSeries:
    times: np.ndarray
    U_S: np.ndarray
    W_S: np.ndarray
    Q_S: np.ndarray
    dS: np.ndarray
    Sigma_S: np.ndarray
    sigma_S: np.ndarray
    W_w: np.ndarray
    Q_w: np.ndarray
    sigma_w: np.ndarray
    beta: float

    def first_law_residual(self) -> np.ndarray:
        return np.abs(self.U_S - self.U_S[0] - self.W_S - self.Q_S)

    def table(self) -> tuple[list[str], np.ndarray]:
        data = [self.times] + [getattr(self, c) for c in THERMO_COLUMNS[1:]]
        return list(THERMO_COLUMNS), np.column_stack(data)


def thermo_series(times, rho, rho_dot, k_s, k_s_dot, h_s, beta: float) -> ThermoSeries:
    times = _check_grid(times, rho, rho_dot, k_s, k_s_dot)
    u = internal_energy(k_s, rho)
    w = work(times, k_s_dot, rho)
    q = heat(times, k_s, rho_dot)
    ds, sigma_total, rate = entropy_and_production(times, rho, rho_dot, q, k_s, beta)
    w_w, q_w, sigma_w = weak_coupling_observables(times, h_s, rho, rho_dot, beta)
    return ThermoSeries(times, u, w, q, ds, sigma_total, rate, w_w, q_w, sigma_w, beta)
