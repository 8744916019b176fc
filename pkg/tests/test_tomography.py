import numpy as np
import pytest
from scipy.linalg import expm

from sbthermo.bath import BathSpec, pade_decomposition
from sbthermo.errors import ConsistencyError, SingularMapError
from sbthermo.hierarchy import (SIGMA_X, SIGMA_Z, HierarchyOperator, SystemSpec, bath_expansion,
                                build_hierarchy, propagate)
from sbthermo.tomography import (MapSeries, apply_superop, choi_of_generator,
                                 effective_hamiltonian, effective_hamiltonian_linear, generator,
                                 gibbs_fixed_point_residual, gibbs_state, hamiltonian_superop,
                                 lindblad_superop, minimal_dissipator, pauli_to_units,
                                 propagate_basis, pseudo_kraus, snapshot, units_to_pauli)

SIGMA_MINUS = np.array([[0, 0], [1, 0]], dtype=complex)


def random_hamiltonian(rng):
    a = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    return 0.5 * (a + a.conj().T)


def test_choi_fixture_for_sigma_z_commutator():
    choi = choi_of_generator(hamiltonian_superop(SIGMA_Z))
    assert np.allclose(np.sort(np.linalg.eigvalsh(choi)), [-2, 0, 0, 2], atol=1e-12)
    pairs = pseudo_kraus(choi)
    assert len(pairs) == 2
    expected = {2: np.diag([1, 1j]) / np.sqrt(2), -2: np.diag([1, -1j]) / np.sqrt(2)}
    for theta, e in pairs:
        ref = expected[round(theta)]
        phase = np.vdot(ref, e)
        assert abs(abs(phase) - 1) < 1e-12
        assert np.allclose(e, phase * ref, atol=1e-12)


def test_hamiltonian_recovered_from_pure_unitary_generator():
    rng = np.random.default_rng(7)
    h = random_hamiltonian(rng)
    h -= 0.5 * np.trace(h) * np.eye(2)
    pairs = pseudo_kraus(choi_of_generator(hamiltonian_superop(h)))
    assert np.allclose(effective_hamiltonian(pairs), h, atol=1e-12)


def test_lindblad_round_trip():
    h = 0.7 * SIGMA_Z + 0.2 * SIGMA_X
    gen = (hamiltonian_superop(h) + lindblad_superop(0.3, SIGMA_MINUS)
           + lindblad_superop(0.1, SIGMA_Z))
    pairs = pseudo_kraus(choi_of_generator(gen))
    k_s = effective_hamiltonian(pairs)
    # sigma_- and sigma_z are traceless, so K_S is exactly H (traceless part)
    assert np.allclose(k_s, h, atol=1e-12)
    lindblad, residual = minimal_dissipator(pairs, k_s, gen)
    assert residual < 1e-12
    assert all(abs(np.trace(op)) < 1e-12 for _, op in lindblad)


def test_non_minimal_jump_operators_shift_the_hamiltonian():
    # D[A + c] = D[A] - i[(i/2)(conj(c) A - c A^dag), .] for traceless A, so the
    # minimal Hamiltonian picks up the shift even though no H was put in
    c = 0.4 + 0.3j
    jump = SIGMA_MINUS + c * np.eye(2)
    gen = lindblad_superop(1.0, jump)
    k_s = effective_hamiltonian(pseudo_kraus(choi_of_generator(gen)))
    ad = SIGMA_MINUS.conj().T
    expected = 0.5j * (np.conj(c) * SIGMA_MINUS - c * ad)
    assert np.allclose(k_s, expected, atol=1e-12)


def test_kraus_gauge_invariance():
    rng = np.random.default_rng(3)
    gen = (hamiltonian_superop(random_hamiltonian(rng)) + lindblad_superop(0.2, SIGMA_MINUS)
           + lindblad_superop(0.2, SIGMA_MINUS.T))
    choi = choi_of_generator(gen)
    k_ref = effective_hamiltonian(pseudo_kraus(choi))
    # degenerate rates: any unitary rotation inside the eigenspace gives the same K_S
    theta, vecs = np.linalg.eigh(choi)
    rotated = []
    for th, v in zip(theta, vecs.T):
        if abs(th) > 1e-12:
            rotated.append((th, v.reshape(2, 2) * np.exp(1j * rng.uniform(0, 2 * np.pi))))
    assert np.allclose(effective_hamiltonian(rotated), k_ref, atol=1e-12)
    assert np.allclose(effective_hamiltonian_linear(gen), k_ref, atol=1e-12)


def test_pseudo_kraus_ordering_is_deterministic():
    gen = hamiltonian_superop(SIGMA_X) + lindblad_superop(0.5, SIGMA_MINUS)
    a = pseudo_kraus(choi_of_generator(gen))
    b = pseudo_kraus(choi_of_generator(gen.copy()))
    assert [p[0] for p in a] == [p[0] for p in b]
    assert all(np.array_equal(x[1], y[1]) for x, y in zip(a, b))
    mags = [abs(p[0]) for p in a]
    assert mags == sorted(mags, reverse=True)


def test_choi_rejects_non_hermiticity_preserving():
    bad = np.zeros((4, 4), dtype=complex)
    bad[0, 1] = 1.0
    with pytest.raises(ConsistencyError):
        choi_of_generator(bad)


def test_pauli_unit_round_trip():
    rng = np.random.default_rng(0)
    m = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    assert np.allclose(units_to_pauli(pauli_to_units(m)), m)


def test_generator_of_exact_semigroup():
    gen_units = hamiltonian_superop(0.3 * SIGMA_X) + lindblad_superop(0.2, SIGMA_MINUS)
    gen = units_to_pauli(gen_units)
    times = np.linspace(0, 3, 31)
    phi = np.array([expm(gen * t) for t in times])
    series = MapSeries(times, phi, gen @ phi, gen @ gen @ phi)
    out = generator(series)
    assert np.allclose(out.gen, gen, atol=1e-12)
    assert np.allclose(out.gen_dot, 0, atol=1e-12)
    snap = snapshot(1.0, out.gen[10])
    assert np.allclose(snap.k_s, 0.3 * SIGMA_X, atol=1e-12)


def test_generator_singular_map():
    times = np.array([0.0, 1.0])
    phi = np.array([np.eye(4), np.diag([1, 0, 1, 1])]).astype(complex)
    series = MapSeries(times, phi, np.zeros_like(phi), np.zeros_like(phi))
    with pytest.raises(SingularMapError):
        generator(series, truncate=False)
    out = generator(series)
    assert out.truncated_at == 1.0
    assert len(out) == 1


@pytest.fixture(scope="module")
def heom_maps():
    spec = BathSpec(0.3, 1.0, 25.0)
    op = HierarchyOperator(SystemSpec(0.5, 0.2), build_hierarchy(bath_expansion(spec, 50, 1.0, 2), 3))
    return propagate_basis(op, 0.02, 4.0, stride=5)


def test_map_starts_at_identity_and_preserves_trace(heom_maps):
    assert np.allclose(heom_maps.phi[0], np.eye(4), atol=1e-14)
    # the identity row of the Pauli-basis map stays (1, 0, 0, 0)
    assert np.allclose(heom_maps.phi[:, 0, :], [1, 0, 0, 0], atol=1e-12)


def test_generator_at_time_zero_is_hamiltonian(heom_maps):
    gens = generator(heom_maps)
    h = SystemSpec(0.5, 0.2).hamiltonian
    assert np.allclose(pauli_to_units(gens.gen[0]), hamiltonian_superop(h), atol=1e-12)
    assert np.allclose(effective_hamiltonian_linear(pauli_to_units(gens.gen[0])), h, atol=1e-12)


def test_map_reproduces_direct_evolution(heom_maps):
    spec = BathSpec(0.3, 1.0, 25.0)
    op = HierarchyOperator(SystemSpec(0.5, 0.2), build_hierarchy(bath_expansion(spec, 50, 1.0, 2), 3))
    rho0 = np.array([[0.7, 0.2 - 0.1j], [0.2 + 0.1j, 0.3]])
    direct = propagate(op, op.initial_vector(rho0), 0.02, 4.0, stride=5)
    rho, rho_dot, _ = heom_maps.evolve(rho0)
    assert np.allclose(rho, direct.rho[:, 0], atol=1e-12)
    assert np.allclose(rho_dot, direct.rho_dot[:, 0], atol=1e-12)


def test_decoupled_generator_is_constant():
    spec = BathSpec(0.0, 1.0, 25.0)
    h = SystemSpec(0.3, 0.2).hamiltonian
    op = HierarchyOperator(SystemSpec(0.3, 0.2), build_hierarchy(pade_decomposition(spec, 1), 2))
    gens = generator(propagate_basis(op, 0.01, 5.0, stride=50))
    k = effective_hamiltonian_linear(pauli_to_units(gens.gen))
    assert np.abs(k - h).max() < 1e-10
    assert np.abs(gens.gen_dot).max() < 1e-10


def test_degenerate_eigenspace_rotation_reconstructs_generator():
    # two equal rates: mixing their eigenvectors by any unitary leaves L_t and K_S unchanged
    h = 0.4 * SIGMA_Z
    sigma_y = np.array([[0, -1j], [1j, 0]])
    gen = (hamiltonian_superop(h) + lindblad_superop(0.3, SIGMA_X)
           + lindblad_superop(0.3, sigma_y))
    choi = choi_of_generator(gen)
    theta, vecs = np.linalg.eigh(choi)
    pos = np.nonzero(np.isclose(theta, 0.6))[0]
    assert len(pos) == 2
    u = np.array([[np.cos(0.7), -np.sin(0.7) * np.exp(0.3j)],
                  [np.sin(0.7) * np.exp(-0.3j), np.cos(0.7)]])
    mixed = vecs.copy()
    mixed[:, pos] = vecs[:, pos] @ u
    pairs = [(th, v.reshape(2, 2)) for th, v in zip(theta, mixed.T) if abs(th) > 1e-12]
    k_s = effective_hamiltonian(pairs)
    assert np.allclose(k_s, h, atol=1e-12)
    _, residual = minimal_dissipator(pairs, k_s, gen)
    assert residual < 1e-12


def test_zero_generator():
    choi = choi_of_generator(np.zeros((4, 4), dtype=complex))
    assert np.array_equal(choi, np.zeros((4, 4)))
    assert pseudo_kraus(choi) == []


def test_purely_hamiltonian_generator_has_no_dissipator():
    h = 0.3 * SIGMA_Z - 0.2 * SIGMA_X
    gen = hamiltonian_superop(h)
    pairs = pseudo_kraus(choi_of_generator(gen))
    lindblad, residual = minimal_dissipator(pairs, effective_hamiltonian(pairs), gen)
    dissipator = sum((lindblad_superop(th, op) for th, op in lindblad), np.zeros((4, 4), complex))
    assert np.abs(dissipator).max() < 1e-12
    assert residual < 1e-12


def test_gibbs_state_limits():
    h = 0.3 * SIGMA_Z + 0.2 * SIGMA_X
    gen = hamiltonian_superop(h)
    # commuting Gibbs state is a fixed point of the unitary generator
    assert gibbs_fixed_point_residual(h, 25.0, gen) < 1e-14
    assert np.allclose(gibbs_state(h, 0.0), np.eye(2) / 2)
    damped = gen + lindblad_superop(0.5, SIGMA_MINUS)
    expected = np.linalg.norm(apply_superop(damped, np.eye(2) / 2))
    assert gibbs_fixed_point_residual(h, 0.0, damped) == pytest.approx(expected)
    assert expected > 0


def test_decoupled_map_is_rotation():
    spec = BathSpec(0.0, 1.0, 25.0)
    op = HierarchyOperator(SystemSpec(0.3, 0.2), build_hierarchy(pade_decomposition(spec, 1), 1))
    maps = propagate_basis(op, 0.01, 3.0, stride=30)
    block = maps.phi[:, 1:, 1:]
    assert np.abs(block.imag).max() < 1e-14
    for r in block.real:
        assert np.allclose(r @ r.T, np.eye(3), atol=1e-10)
        assert np.linalg.det(r) == pytest.approx(1.0, abs=1e-10)
