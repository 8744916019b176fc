"""Oracle and invariant checks behind ``sbthermo validate``.

Each suite returns a list of :class:`Check` records with the measured value
next to its budget, so failures are reported as numbers, not just flags.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .errors import SBThermoError
from .oracle import dephasing_solution, tcl2_propagate, trace_norm_distance
from .runner import (INVARIANT_BUDGETS, PRESETS, RunConfig, compute, preset_config,
                     propagate_config)
from .tomography import effective_hamiltonian_linear, generator, pauli_to_units


@dataclass
class Check:
    suite: str
    name: str
    measured: float
    budget: float
    passed: bool
    seconds: float = 0.0
    note: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        text = f"[{status}] {self.suite}/{self.name}: measured {self.measured:.3e}, budget {self.budget:.1e}"
        if self.note:
            text += f" ({self.note})"
        return text


def _check(suite, name, measured, budget, seconds=0.0, note=""):
    measured = float(measured)
    return Check(suite, name, measured, budget, bool(measured <= budget), seconds, note)


def _failed(suite, name, exc, seconds=0.0):
    return Check(suite, name, float("inf"), 0.0, False, seconds,
                 f"{type(exc).__name__} in stage {getattr(exc, 'stage', '?')}: {exc}")


CLOSED_CONFIG = RunConfig(epsilon=0.0, delta=0.2, alpha=0.0, beta=25.0, tail_terms=0,
                          n_pade=1, max_tier=1, dt=0.01, t_final=50.0, grid_stride=10)


def closed_system_suite(config: RunConfig = CLOSED_CONFIG) -> list[Check]:
    """alpha = 0: Rabi oscillation, K_S = H_S, no work and no heat."""
    start = time.perf_counter()
    try:
        res = compute(config)
    except SBThermoError as exc:
        return [_failed("closed", "pipeline", exc, time.perf_counter() - start)]
    sec = time.perf_counter() - start
    t = res.thermo.times
    sz = (res.rho[:, 0, 0] - res.rho[:, 1, 1]).real
    h = config.system.hamiltonian
    return [
        _check("closed", "sigma_z_vs_cos", np.abs(sz - np.cos(2 * config.delta * t)).max(), 1e-8, sec),
        _check("closed", "ks_vs_hs", np.abs(res.analysis.k_s - h).max(), 1e-8),
        _check("closed", "work", np.abs(res.thermo.W_S).max(), 1e-10),
        _check("closed", "heat", np.abs(res.thermo.Q_S).max(), 1e-10),
    ]


DEPHASING_CONFIG = RunConfig(epsilon=0.5, delta=0.0, alpha=0.3, beta=25.0, n_pade=200,
                             tail_cutoff=2.0, tail_terms=4, max_tier=7, dt=0.005,
                             t_final=10.0, grid_stride=10, initial_state="plus")


def dephasing_suite(config: RunConfig = DEPHASING_CONFIG) -> list[Check]:
    """Delta = 0: |rho_01| against exp(-Gamma(t)) and K_S against -eps sigma_z.

    The coherence is checked straight from the propagated map, so a faulty
    hierarchy is reported as an oracle mismatch even when later stages fail.
    """
    start = time.perf_counter()
    suite = f"dephasing[{config.coupling_convention}]"
    try:
        maps, _ = propagate_config(config)
    except SBThermoError as exc:
        return [_failed(suite, "pipeline", exc, time.perf_counter() - start)]
    sec = time.perf_counter() - start
    t = maps.times
    rho = maps.evolve(config.rho0)[0]
    exact = dephasing_solution(t, config.bath, config.epsilon)
    rel = np.abs(np.abs(rho[:, 0, 1]) / np.abs(exact.coherence(0.5)) - 1)
    checks = [
        _check(suite, "coherence_relative", rel.max(), 1e-4, sec),
        _check(suite, "populations", np.abs(rho[:, 0, 0] - 0.5).max(), 1e-10),
    ]
    try:
        gens = generator(maps, config.cond_max, truncate=True)
        k_s = effective_hamiltonian_linear(pauli_to_units(gens.gen))
        h = config.system.hamiltonian
        checks.append(_check(suite, "ks_vs_minus_eps_sz",
                             np.abs(k_s - h).max() / abs(config.epsilon), 1e-6))
    except SBThermoError as exc:
        checks.append(_failed(suite, "ks_vs_minus_eps_sz", exc))
    return checks


TCL2_CONFIG = RunConfig(epsilon=0.0, delta=0.2, alpha=0.01, beta=25.0, tail_terms=3,
                        max_tier=3, dt=0.02, t_final=50.0, grid_stride=5)


def tcl2_suite(config: RunConfig = TCL2_CONFIG, tcl2_dt: float = 0.05) -> list[Check]:
    """Weak coupling: HEOM against the second-order TCL master equation."""
    start = time.perf_counter()
    try:
        res = compute(config)
    except SBThermoError as exc:
        return [_failed("tcl2", "pipeline", exc, time.perf_counter() - start)]
    out_dt = config.dt * config.grid_stride
    stride = int(round(out_dt / tcl2_dt))
    ref = tcl2_propagate(config.epsilon, config.delta, config.bath, config.rho0,
                         config.t_final, tcl2_dt, stride)
    n = min(len(ref.times), len(res.rho))
    dist = trace_norm_distance(res.rho[:n], ref.rho[:n])
    return [_check("tcl2", "trace_norm_distance", dist.max(), 5e-3, time.perf_counter() - start)]


def invariant_suite(configs: dict[str, RunConfig] | None = None) -> list[Check]:
    """Trace, Hermiticity, positivity, pseudo-Kraus, splitting and first law."""
    if configs is None:
        configs = {"biased-nonadiabatic": preset_config("biased-nonadiabatic", t_final=20.0)}
    checks = []
    for name, cfg in configs.items():
        start = time.perf_counter()
        try:
            res = compute(cfg)
        except SBThermoError as exc:
            checks.append(_failed(f"invariants[{name}]", "pipeline", exc, time.perf_counter() - start))
            continue
        sec = time.perf_counter() - start
        inv = res.invariants()
        for key, budget in INVARIANT_BUDGETS.items():
            if key == "min_eigenvalue":
                checks.append(Check(f"invariants[{name}]", key, inv[key], budget,
                                    inv[key] >= budget, sec))
            else:
                checks.append(_check(f"invariants[{name}]", key, inv[key], budget, sec))
            sec = 0.0
    return checks


SUITES = ("closed", "dephasing", "tcl2", "invariants")


def validate(suites=SUITES, convention: str = "standard", full: bool = False) -> list[Check]:
    """Run the selected suites; ``full`` checks invariants on all presets at full length."""
    checks = []
    for suite in suites:
        if suite == "closed":
            checks += closed_system_suite(CLOSED_CONFIG.replace(coupling_convention=convention))
        elif suite == "dephasing":
            checks += dephasing_suite(DEPHASING_CONFIG.replace(coupling_convention=convention))
        elif suite == "tcl2":
            checks += tcl2_suite(TCL2_CONFIG.replace(coupling_convention=convention))
        elif suite == "invariants":
            names = PRESETS if full else ["biased-nonadiabatic"]
            extra = {} if full else {"t_final": 20.0}
            checks += invariant_suite({n: preset_config(n, coupling_convention=convention, **extra)
                                       for n in names})
        else:
            raise ValueError(f"unknown suite {suite!r}; choose from {SUITES}")
    return checks
