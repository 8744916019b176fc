"""Dynamical-map tomography, exact time-local generator and minimal-dissipation split.

Superoperators are carried in two bases:

* the orthonormal Pauli basis {I, sx, sy, sz}/sqrt(2), where a Hermiticity-
  and trace-preserving map is a real matrix whose first row is (1, 0, 0, 0)
  (zero for a generator);
* matrix units with row-major vectorisation, vec(X)[2a + b] = X[a, b], used
  for the Choi matrix.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConsistencyError, SingularMapError
from .hierarchy import (IDENTITY, SIGMA_X, SIGMA_Y, SIGMA_Z, HierarchyOperator,
                        HierarchyTable, SystemSpec, propagate)

PAULI_BASIS = np.array([IDENTITY, SIGMA_X, SIGMA_Y, SIGMA_Z]) / np.sqrt(2)
# columns are vec(P_j); unitary because the basis is orthonormal
_U = PAULI_BASIS.reshape(4, 4).T

# |0><0|, |1><1|, |+><+|, |+i><+i|
PROBE_STATES = np.array([
    [[1, 0], [0, 0]],
    [[0, 0], [0, 1]],
    [[0.5, 0.5], [0.5, 0.5]],
    [[0.5, -0.5j], [0.5j, 0.5]],
], dtype=complex)
# Pauli basis elements as combinations of the probe states (rows: I, sx, sy, sz)
_PROBE_TO_PAULI = np.array([
    [1, 1, 0, 0],
    [-1, -1, 2, 0],
    [-1, -1, 0, 2],
    [1, -1, 0, 0],
], dtype=complex) / np.sqrt(2)

DEFAULT_COND_MAX = 1e8


def pauli_to_units(m: np.ndarray) -> np.ndarray:
    """Pauli-basis superoperator(s) -> matrix-unit superoperator(s)."""
    return _U @ m @ _U.conj().T


def units_to_pauli(s: np.ndarray) -> np.ndarray:
    return _U.conj().T @ s @ _U


def superop_of(func) -> np.ndarray:
    """Matrix-unit superoperator of a linear map given as a Python callable."""
    s = np.empty((4, 4), dtype=complex)
    for col in range(4):
        e = np.zeros(4, dtype=complex)
        e[col] = 1
        s[:, col] = np.asarray(func(e.reshape(2, 2))).reshape(4)
    return s


def apply_superop(s: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """Apply matrix-unit superoperator(s) (..., 4, 4) to matrices (..., 2, 2)."""
    vec = rho.reshape(*rho.shape[:-2], 4)
    return np.einsum("...ij,...j->...i", s, vec).reshape(rho.shape)


def hamiltonian_superop(h: np.ndarray) -> np.ndarray:
    return superop_of(lambda x: -1j * (h @ x - x @ h))


def lindblad_superop(rate: float, op: np.ndarray) -> np.ndarray:
    ad = op.conj().T
    return superop_of(lambda x: rate * (op @ x @ ad - 0.5 * (ad @ op @ x + x @ ad @ op)))


@dataclass
class MapSeries:
    """Dynamical map Phi_t in the Pauli basis with exact first/second derivatives."""

    times: np.ndarray
    phi: np.ndarray
    phi_dot: np.ndarray
    phi_ddot: np.ndarray

    def __len__(self):
        return len(self.times)

    def evolve(self, rho0: np.ndarray):
        """rho(t), d rho/dt and d^2 rho/dt^2 for an initial state, from the map."""
        out = []
        for m in (self.phi, self.phi_dot, self.phi_ddot):
            out.append(apply_superop(pauli_to_units(m), np.broadcast_to(rho0, (len(self), 2, 2))))
        return tuple(out)


def _to_pauli_columns(x: np.ndarray) -> np.ndarray:
    """(n, 4 probes, 2, 2) tier-0 outputs -> (n, 4, 4) Pauli-basis map matrices."""
    images = np.einsum("jp,npab->njab", _PROBE_TO_PAULI, x)
    return np.einsum("iab,njab->nij", PAULI_BASIS.conj(), images)


def propagate_basis(op: HierarchyOperator, dt: float, t_final: float, stride: int = 1,
                    integrator: str = "rk4", **kwargs) -> MapSeries:
    """Propagate the four probe states together and assemble Phi_t column-wise.

    The probes are physical states; non-Hermitian Pauli elements never enter
    the hierarchy, they are recombined afterwards by linearity.
    """
    traj = propagate(op, op.initial_vector(PROBE_STATES), dt, t_final, stride,
                     integrator=integrator, **kwargs)
    return MapSeries(traj.times, _to_pauli_columns(traj.rho),
                     _to_pauli_columns(traj.rho_dot), _to_pauli_columns(traj.rho_ddot))


@dataclass
class GeneratorSeries:
    """L_t = dPhi/dt Phi^-1 and its time derivative, in the Pauli basis."""

    times: np.ndarray
    gen: np.ndarray
    gen_dot: np.ndarray
    cond: np.ndarray
    truncated_at: float | None = None

    def __len__(self):
        return len(self.times)


def generator(series: MapSeries, cond_max: float = DEFAULT_COND_MAX,
              truncate: bool = True) -> GeneratorSeries:
    """Exact time-local generator from the map and its exact derivatives.

    Raises :class:`SingularMapError` at the first time where the condition
    number of Phi_t exceeds ``cond_max``, or, with ``truncate``, cuts the series
    there and records the time in ``truncated_at``.
    """
    cond = np.linalg.cond(series.phi)
    bad = np.nonzero(~(cond <= cond_max))[0]
    stop = len(series)
    truncated_at = None
    if len(bad):
        i = int(bad[0])
        msg = f"dynamical map ill-conditioned (cond={cond[i]:.3g}) at t={series.times[i]:.6g}"
        if not truncate or i == 0:
            raise SingularMapError(msg, time=series.times[i], index=i)
        stop, truncated_at = i, float(series.times[i])
    phi = series.phi[:stop]
    inv = np.linalg.inv(phi)
    gen = series.phi_dot[:stop] @ inv
    gen_dot = (series.phi_ddot[:stop] - gen @ series.phi_dot[:stop]) @ inv
    return GeneratorSeries(series.times[:stop], gen, gen_dot, cond[:stop], truncated_at)


def choi_of_generator(superop: np.ndarray, tol: float = 1e-8) -> np.ndarray:
    """Choi matrix C[(a,i),(b,j)] = L(|i><j|)[a, b] of a matrix-unit superoperator."""
    s = np.asarray(superop)
    choi = s.reshape(*s.shape[:-2], 2, 2, 2, 2)
    choi = np.swapaxes(choi, -3, -2).reshape(s.shape)
    herm = np.abs(choi - np.swapaxes(choi, -1, -2).conj()).max(initial=0.0)
    scale = max(1.0, np.abs(choi).max(initial=0.0))
    if herm > tol * scale:
        raise ConsistencyError(f"generator is not Hermiticity preserving (residual {herm:.3g})")
    return choi


def _gauge(v: np.ndarray) -> np.ndarray:
    # make the largest-modulus entry real positive (first one on ties)
    k = int(np.argmax(np.round(np.abs(v), 12)))
    return v * np.exp(-1j * np.angle(v[k]))


def pseudo_kraus(choi: np.ndarray, atol: float = 1e-14) -> list[tuple[float, np.ndarray]]:
    """Pseudo-Kraus pairs (theta_k, E_k) from the Hermitian Choi matrix.

    E_k are unit-Frobenius-norm, sorted by descending |theta_k| with ties
    broken lexicographically on the entries of E_k; zero eigenvalues dropped.
    """
    c = 0.5 * (choi + choi.conj().T)
    theta, vecs = np.linalg.eigh(c)
    scale = max(np.abs(theta).max(initial=0.0), 1.0)
    pairs = []
    for th, v in zip(theta, vecs.T):
        if abs(th) <= atol * scale:
            continue
        v = _gauge(v)
        pairs.append((float(th), v.reshape(2, 2)))

    def key(p):
        flat = p[1].ravel()
        return (-round(abs(p[0]), 12), *np.round(flat.real, 12), *np.round(flat.imag, 12))

    pairs.sort(key=key)
    return pairs


def kraus_constraint_residual(pairs) -> float:
    total = sum((th * e.conj().T @ e for th, e in pairs), np.zeros((2, 2), complex))
    return float(np.linalg.norm(total))


def effective_hamiltonian(pairs) -> np.ndarray:
    """K_S = -(i/4) sum_k theta_k (Tr{E_k} E_k^dag - Tr{E_k^dag} E_k)."""
    k = np.zeros((2, 2), dtype=complex)
    for th, e in pairs:
        k += th * (np.trace(e) * e.conj().T - np.trace(e.conj().T) * e)
    return -0.25j * k


def effective_hamiltonian_linear(superop: np.ndarray) -> np.ndarray:
    """K_S directly from the matrix-unit superoperator(s).

    K_S is linear in the generator: with X[b, j] = sum_i C[(i,i),(j,b)] the
    pseudo-Kraus sum equals X, so K_S = -(i/4)(X - X^dag). Used for dK_S/dt.
    """
    s = np.asarray(superop)
    c = s.reshape(*s.shape[:-2], 2, 2, 2, 2)
    c = np.swapaxes(c, -3, -2).reshape(s.shape)
    # C[3i, 2j+b] summed over i -> (j, b), then transpose to (b, j)
    x = (c[..., 0, :] + c[..., 3, :]).reshape(*s.shape[:-2], 2, 2)
    x = np.swapaxes(x, -1, -2)
    return -0.25j * (x - np.swapaxes(x, -1, -2).conj())


def minimal_dissipator(pairs, k_s: np.ndarray, superop: np.ndarray | None = None,
                       tol: float = 1e-8):
    """Traceless Lindblad operators L_k = E_k - Tr(E_k)/2 and the split residual.

    Returns ``(lindblad, residual)``; ``residual`` is the Frobenius norm of
    L_t - (-i[K_S, .] + D_t) when ``superop`` is given (else None), and a
    :class:`ConsistencyError` is raised if it exceeds ``tol``.
    """
    lindblad = [(th, e - 0.5 * np.trace(e) * IDENTITY) for th, e in pairs]
    residual = None
    if superop is not None:
        recon = hamiltonian_superop(k_s)
        for th, op in lindblad:
            recon = recon + lindblad_superop(th, op)
        residual = float(np.linalg.norm(recon - superop))
        scale = max(1.0, np.linalg.norm(superop))
        if residual > tol * scale:
            raise ConsistencyError(f"minimal-dissipation split residual {residual:.3g}")
    return lindblad, residual


def gibbs_state(k_s: np.ndarray, beta: float) -> np.ndarray:
    w, v = np.linalg.eigh(0.5 * (k_s + k_s.conj().T))
    p = np.exp(-beta * (w - w.min()))
    p /= p.sum()
    return (v * p) @ v.conj().T


def gibbs_fixed_point_residual(k_s: np.ndarray, beta: float, superop: np.ndarray) -> float:
    """||L_t[exp(-beta K_S)/Z]||_F, zero when the Gibbs state of K_S is stationary."""
    return float(np.linalg.norm(apply_superop(superop, gibbs_state(k_s, beta))))


@dataclass
class GeneratorSnapshot:
    time: float
    gen: np.ndarray
    choi: np.ndarray
    kraus: list
    k_s: np.ndarray
    lindblad: list
    split_residual: float
    constraint_residual: float


def snapshot(time: float, gen_pauli: np.ndarray, tol: float = 1e-8) -> GeneratorSnapshot:
    s = pauli_to_units(gen_pauli)
    choi = choi_of_generator(s, tol)
    pairs = pseudo_kraus(choi)
    k_s = effective_hamiltonian(pairs)
    lindblad, residual = minimal_dissipator(pairs, k_s, s, tol=np.inf)
    return GeneratorSnapshot(time, gen_pauli, choi, pairs, k_s, lindblad, residual,
                             kraus_constraint_residual(pairs))


@dataclass
class GeneratorAnalysis:
    """Per-time outputs of the minimal-dissipation analysis."""

    times: np.ndarray
    k_s: np.ndarray
    k_s_dot: np.ndarray
    thetas: np.ndarray
    split_residual: np.ndarray
    constraint_residual: np.ndarray
    gibbs_residual: np.ndarray
    trace_row: np.ndarray
    choi_hermiticity: np.ndarray
    truncated_at: float | None = None
    extra: dict = field(default_factory=dict)

    def table(self) -> tuple[list[str], np.ndarray]:
        cols = ["time"]
        data = [self.times]
        for a in range(2):
            for b in range(2):
                cols += [f"K{a}{b}_re", f"K{a}{b}_im"]
                data += [self.k_s[:, a, b].real, self.k_s[:, a, b].imag]
        for j in range(4):
            cols.append(f"theta{j + 1}")
            data.append(self.thetas[:, j])
        cols += ["split_residual", "gibbs_residual"]
        data += [self.split_residual, self.gibbs_residual]
        return cols, np.column_stack(data)


def analyze_generator(gens: GeneratorSeries, beta: float) -> GeneratorAnalysis:
    n = len(gens)
    k_s = np.empty((n, 2, 2), complex)
    thetas = np.zeros((n, 4))
    split = np.empty(n)
    constraint = np.empty(n)
    gibbs = np.empty(n)
    herm = np.empty(n)
    units = pauli_to_units(gens.gen)
    for i in range(n):
        snap = snapshot(gens.times[i], gens.gen[i], tol=np.inf)
        k_s[i] = snap.k_s
        th = [p[0] for p in snap.kraus]
        thetas[i, :len(th)] = th
        split[i] = snap.split_residual
        constraint[i] = snap.constraint_residual
        gibbs[i] = gibbs_fixed_point_residual(snap.k_s, beta, units[i])
        herm[i] = np.abs(snap.choi - snap.choi.conj().T).max()
    k_s_dot = effective_hamiltonian_linear(pauli_to_units(gens.gen_dot))
    return GeneratorAnalysis(gens.times, k_s, k_s_dot, thetas, split, constraint, gibbs,
                             np.abs(gens.gen[:, 0, :]).max(axis=1), herm, gens.truncated_at)
