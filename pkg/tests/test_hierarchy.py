import numpy as np
import pytest

from sbthermo.bath import BathSpec, pade_decomposition
from sbthermo.errors import HierarchyTooLarge, PropagationDiverged
from sbthermo.hierarchy import (HierarchyOperator, HierarchyState, SystemSpec, bath_expansion,
                                build_hierarchy, convergence_scan, heom_rhs, hierarchy_size,
                                load_checkpoint, propagate, save_checkpoint)

BATH = BathSpec(0.3, 1.0, 25.0)
SYSTEM = SystemSpec(0.0, 0.2)
GROUND = np.diag([1.0, 0.0]).astype(complex)


def small_operator(tier=2, tails=1, system=SYSTEM, **kw):
    table = build_hierarchy(bath_expansion(BATH, 20, 1.0, tails), tier)
    return HierarchyOperator(system, table, **kw)


def test_hierarchy_counts():
    decomp = pade_decomposition(BATH, 1)  # two exponentials
    assert build_hierarchy(decomp, 1).size == 3
    assert build_hierarchy(pade_decomposition(BATH, 3), 3).size == 35
    assert hierarchy_size(4, 3) == 35
    assert build_hierarchy(decomp, 0).size == 1


def test_hierarchy_links_are_consistent():
    table = build_hierarchy(pade_decomposition(BATH, 2), 3)
    occ = table.occupations
    for m in range(table.size):
        for l in range(table.n_terms):
            up = table.up[l, m]
            if up < table.size:
                assert np.array_equal(occ[up] - occ[m], np.eye(table.n_terms, dtype=int)[l])
            else:
                assert table.tiers[m] == 3
    assert table.offset([0, 0, 0]) == 0


def test_hierarchy_budget():
    with pytest.raises(HierarchyTooLarge):
        build_hierarchy(pade_decomposition(BATH, 20), 6, max_ados=1000)


def test_rhs_preserves_trace_and_hermiticity():
    op = small_operator()
    rng = np.random.default_rng(1)
    a = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    rho = a @ a.conj().T
    rho /= np.trace(rho)
    state = HierarchyState.from_flat(op.initial_vector(rho))
    deriv = heom_rhs(state, SYSTEM, op.table)
    assert abs(np.trace(deriv.rho)) < 1e-14
    assert np.abs(deriv.rho - deriv.rho.conj().T).max() < 1e-14


def test_tier_zero_hierarchy_is_closed_evolution():
    op = HierarchyOperator(SYSTEM, build_hierarchy(bath_expansion(BATH, 20, 1.0, 1), 0))
    traj = propagate(op, op.initial_vector(GROUND), 0.01, 10.0, stride=10)
    sz = traj.sigma_z()
    assert np.abs(sz - np.cos(0.4 * traj.times)).max() < 1e-8


def test_decoupled_rabi_oscillation():
    op = HierarchyOperator(SYSTEM, build_hierarchy(pade_decomposition(BathSpec(0.0, 1.0, 25.0), 1), 3))
    traj = propagate(op, op.initial_vector(GROUND), 0.01, 50.0, stride=10)
    assert np.abs(traj.sigma_z() - np.cos(0.4 * traj.times)).max() < 1e-8
    assert np.array_equal(traj.final.ados[1:], np.zeros_like(traj.final.ados[1:]))


def test_rk4_order():
    op = small_operator()
    x0 = op.initial_vector(GROUND)
    ref = propagate(op, x0, 0.0025, 5.0, stride=2000).rho[-1]
    errs = [np.abs(propagate(op, x0, dt, 5.0, stride=int(round(5.0 / dt))).rho[-1] - ref).max()
            for dt in (0.04, 0.02)]
    # fourth order: halving dt reduces the error by about 16
    assert 12 < errs[0] / errs[1] < 20


def test_exact_derivatives_match_finite_differences():
    op = small_operator()
    traj = propagate(op, op.initial_vector(GROUND), 0.005, 2.0, stride=1)
    fd = (traj.rho[2:] - traj.rho[:-2]) / 0.01
    assert np.abs(fd - traj.rho_dot[1:-1]).max() < 1e-4
    fd2 = (traj.rho_dot[2:] - traj.rho_dot[:-2]) / 0.01
    assert np.abs(fd2 - traj.rho_ddot[1:-1]).max() < 1e-4


def test_adaptive_matches_rk4():
    op = small_operator()
    x0 = op.initial_vector(GROUND)
    a = propagate(op, x0, 0.01, 5.0, stride=50)
    b = propagate(op, x0, 0.01, 5.0, stride=50, integrator="adaptive")
    assert np.abs(a.rho - b.rho).max() < 1e-8


def test_stability_guard():
    op = small_operator(tier=3, tails=3)
    dt_max = 2.5 / op.spectral_bound
    with pytest.raises(PropagationDiverged):
        propagate(op, op.initial_vector(GROUND), 2 * dt_max, 10 * dt_max)
    assert op.stable_substeps(dt_max * 0.99) == 1
    assert op.stable_substeps(dt_max * 3.5) == 4


def test_workers_are_bit_identical():
    serial = small_operator(tier=3, tails=2, workers=1)
    threaded = small_operator(tier=3, tails=2, workers=3)
    x0 = serial.initial_vector(GROUND)
    a = propagate(serial, x0, 0.01, 2.0, stride=20)
    b = propagate(threaded, x0, 0.01, 2.0, stride=20)
    assert np.array_equal(a.rho, b.rho)


def test_workers_from_environment(monkeypatch):
    monkeypatch.setenv("SBTHERMO_WORKERS", "2")
    assert small_operator().workers == 2


def test_checkpoint_round_trip(tmp_path):
    op = small_operator()
    traj = propagate(op, op.initial_vector(GROUND), 0.01, 1.0, stride=100)
    path = tmp_path / "state.chk"
    save_checkpoint(path, traj.final, SYSTEM, op.table)
    state, header = load_checkpoint(path)
    assert np.array_equal(state.ados, traj.final.ados)
    assert state.time == pytest.approx(1.0)
    assert header["max_tier"] == 2
    # resuming from the checkpoint continues the same trajectory
    resumed = propagate(op, state.flat(), 0.01, 2.0, stride=100, t0=1.0)
    full = propagate(op, op.initial_vector(GROUND), 0.01, 2.0, stride=100)
    assert np.abs(resumed.rho[-1] - full.rho[-1]).max() < 1e-13


def test_checkpoint_rejects_foreign_file(tmp_path):
    path = tmp_path / "junk.chk"
    path.write_bytes(b"not a checkpoint")
    with pytest.raises(ValueError):
        load_checkpoint(path)


def test_scan_decoupled_converges_at_first_point():
    res = convergence_scan(SYSTEM, BathSpec(0.0, 1.0, 25.0), [0, 1, 2], [1, 2], [0.04, 0.02],
                           t_final=5.0, out_dt=0.2, tol=1e-6, n_pade=2)
    assert res.max_tier == 0
    assert res.dt == 0.04
    assert set(res.uncertified) == set()
