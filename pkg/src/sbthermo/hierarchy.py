"""Hierarchical equations of motion for a qubit linearly coupled to a Debye bath.

The system couples to the bath through sigma_z. Auxiliary density operators
(ADOs) are indexed by occupation vectors over the terms of a
:class:`~sbthermo.bath.BathDecomposition` and truncated at a maximal tier.

Internally every ADO is a row-major vectorised 2x2 matrix and the whole
hierarchy is one sparse linear operator, so the right-hand side is a single
sparse mat-vec. Several initial states can be propagated at once as columns.
"""
from __future__ import annotations

import json
import os
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from math import comb
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from scipy.integrate import solve_ivp

from .bath import BathDecomposition, BathSpec, compress_tail, pade_decomposition
from .errors import HierarchyTooLarge, NotConverged, PropagationDiverged

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
IDENTITY = np.eye(2, dtype=complex)

DEFAULT_MAX_ADOS = 1_000_000
CONVENTIONS = ("standard", "paper-literal")
INTEGRATORS = ("rk4", "adaptive")
# classical RK4 is stable for |lambda dt| up to ~2.78 on the negative real axis
RK4_STABILITY = 2.5


@dataclass(frozen=True)
class SystemSpec:
    """Two-level system H_S = -epsilon sigma_z + delta sigma_x."""

    epsilon: float
    delta: float

    @property
    def hamiltonian(self) -> np.ndarray:
        return -self.epsilon * SIGMA_Z + self.delta * SIGMA_X


@dataclass
class HierarchyTable:
    """Retained ADO indices and their tier-coupling links.

    ``up[l, m]`` is the offset of ``occupations[m] + e_l`` and ``down[l, m]``
    the offset of ``occupations[m] - e_l``; missing neighbours point at the
    sentinel offset ``size``.
    """

    decomposition: BathDecomposition
    max_tier: int
    occupations: np.ndarray
    up: np.ndarray
    down: np.ndarray

    @property
    def size(self) -> int:
        return len(self.occupations)

    @property
    def n_terms(self) -> int:
        return len(self.decomposition)

    @property
    def tiers(self) -> np.ndarray:
        return self.occupations.sum(axis=1)

    def offset(self, occupation: Sequence[int]) -> int:
        """Flat offset of an occupation vector (KeyError if not retained)."""
        return self._lookup[tuple(int(n) for n in occupation)]

    def __post_init__(self):
        self._lookup = {tuple(row): i for i, row in enumerate(self.occupations.tolist())}


def hierarchy_size(n_terms: int, max_tier: int) -> int:
    return comb(max_tier + n_terms, n_terms)


def _enumerate(k: int, max_tier: int, max_ados: int) -> list:
    """Occupation multisets ordered by tier, then lexicographically by term."""
    out = []

    def extend(prefix, start, remaining):
        if remaining == 0:
            out.append(tuple(prefix))
            return
        for l in range(start, k):
            prefix.append(l)
            extend(prefix, l, remaining - 1)
            prefix.pop()

    for tier in range(max_tier + 1):
        extend([], 0, tier)
    return out


def build_hierarchy(decomp: BathDecomposition, max_tier: int,
                    max_ados: int = DEFAULT_MAX_ADOS) -> HierarchyTable:
    """Enumerate all occupation vectors with tier <= ``max_tier`` and link neighbours."""
    if max_tier < 0:
        raise ValueError("max_tier must be >= 0")
    k = len(decomp)
    if hierarchy_size(k, max_tier) > max_ados:
        raise HierarchyTooLarge(
            f"{hierarchy_size(k, max_tier)} ADOs for {k} terms at depth {max_tier} "
            f"exceeds budget {max_ados}")
    combos = _enumerate(k, max_tier, max_ados)
    size = len(combos)
    occ = np.zeros((size, k), dtype=np.int64)
    for row, combo in enumerate(combos):
        for l in combo:
            occ[row, l] += 1
    lookup = {tuple(r): i for i, r in enumerate(occ.tolist())}
    up = np.full((k, size), size, dtype=np.int64)
    down = np.full((k, size), size, dtype=np.int64)
    for m, r in enumerate(occ.tolist()):
        for l in range(k):
            r[l] += 1
            up[l, m] = lookup.get(tuple(r), size)
            r[l] -= 2
            if r[l] >= 0:
                down[l, m] = lookup[tuple(r)]
            r[l] += 1
    return HierarchyTable(decomp, max_tier, occ, up, down)


def _commutator_superop(h: np.ndarray) -> np.ndarray:
    # row-major vec: vec(A X B) = (A kron B^T) vec(X)
    return np.kron(h, IDENTITY) - np.kron(IDENTITY, h.T)


def _diag_superop(left: complex, right: complex, q: np.ndarray) -> np.ndarray:
    # left * Q X + right * X Q for diagonal Q
    d = np.diag(q)
    return np.diag((left * d[:, None] + right * d[None, :]).ravel())


def build_operator(system: SystemSpec, table: HierarchyTable,
                   convention: str = "standard") -> sp.csr_matrix:
    """Sparse generator A of the truncated hierarchy, d vec(ADOs)/dt = A vec(ADOs)."""
    if convention not in CONVENTIONS:
        raise ValueError(f"unknown coupling convention {convention!r}")
    m_size, k = table.size, table.n_terms
    etas = table.decomposition.etas
    gammas = table.decomposition.gammas
    occ = table.occupations
    scale = np.where(np.abs(etas) > 0, np.abs(etas), 1.0)

    lsys = sp.csr_matrix(-1j * _commutator_superop(system.hamiltonian))
    damping = occ @ gammas
    blocks = [sp.kron(sp.identity(m_size, format="csr"), lsys, format="csr"),
              sp.kron(sp.diags(-damping), sp.identity(4), format="csr")]

    if convention == "standard":
        up_op = -1j * _diag_superop(1, -1, SIGMA_Z)
    else:
        up_op = -_diag_superop(1, 1, SIGMA_Z)

    rows, cols, vals = [], [], []
    base = np.arange(4)
    for l in range(k):
        if etas[l] == 0:
            continue
        if convention == "standard":
            down_op = -1j * _diag_superop(etas[l], -np.conj(etas[l]), SIGMA_Z)
        else:
            down_op = -_diag_superop(etas[l], -np.conj(etas[l]), SIGMA_Z)
        up_d, down_d = np.diag(up_op), np.diag(down_op)

        has_up = table.up[l] < m_size
        src = np.nonzero(has_up)[0]
        coef = np.sqrt((occ[src, l] + 1) * scale[l])
        for target, c_vals in ((table.up[l, src], up_d), ):
            rows.append((4 * src[:, None] + base).ravel())
            cols.append((4 * target[:, None] + base).ravel())
            vals.append((coef[:, None] * c_vals[None, :]).ravel())

        has_down = table.down[l] < m_size
        src = np.nonzero(has_down)[0]
        coef = np.sqrt(occ[src, l] / scale[l])
        target = table.down[l, src]
        rows.append((4 * src[:, None] + base).ravel())
        cols.append((4 * target[:, None] + base).ravel())
        vals.append((coef[:, None] * down_d[None, :]).ravel())

    if rows:
        coupling = sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(4 * m_size, 4 * m_size))
        blocks.append(coupling)
    op = blocks[0]
    for b in blocks[1:]:
        op = op + b
    op = sp.csr_matrix(op)
    op.sum_duplicates()
    op.eliminate_zeros()
    op.sort_indices()
    return op


def _worker_count(workers: int | None) -> int:
    if workers is not None:
        return max(1, int(workers))
    return max(1, int(os.environ.get("SBTHERMO_WORKERS", "1")))


class HierarchyOperator:
    """The HEOM right-hand side for a fixed system, bath expansion and depth.

    ``workers > 1`` evaluates contiguous row blocks of the sparse product in
    threads. Each output row is produced by exactly one worker with the same
    summation order, so results are bit-identical to serial evaluation.
    """

    def __init__(self, system: SystemSpec, table: HierarchyTable,
                 convention: str = "standard", workers: int | None = None):
        self.system = system
        self.table = table
        self.convention = convention
        self.matrix = build_operator(system, table, convention)
        self.workers = _worker_count(workers)
        self._bound = None
        self._chunks = None
        if self.workers > 1:
            edges = np.linspace(0, self.matrix.shape[0], self.workers + 1).astype(int)
            self._chunks = [(a, b, self.matrix[a:b]) for a, b in zip(edges[:-1], edges[1:])]
            self._pool = ThreadPoolExecutor(self.workers)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def spectral_bound(self) -> float:
        """Gershgorin bound on the spectral radius (max absolute row sum)."""
        if self._bound is None:
            rows = np.asarray(abs(self.matrix).sum(axis=1)).ravel()
            self._bound = float(rows.max(initial=0.0))
        return self._bound

    def stable_substeps(self, dt: float) -> int:
        """Smallest n with RK4 steps of dt/n inside the stability bound."""
        return max(1, int(np.ceil(dt * self.spectral_bound / RK4_STABILITY)))

    def apply(self, x: np.ndarray) -> np.ndarray:
        """A @ x for x of shape (dim,) or (dim, batch)."""
        if self._chunks is None:
            return self.matrix @ x
        out = np.empty_like(x, dtype=complex)

        def work(chunk):
            a, b, block = chunk
            out[a:b] = block @ x

        list(self._pool.map(work, self._chunks))
        return out

    __call__ = apply

    def initial_vector(self, rho0: np.ndarray) -> np.ndarray:
        """Flat hierarchy vector(s) with ``rho0`` in tier 0 and zero ADOs.

        ``rho0`` may be a single 2x2 matrix or a stack of shape (batch, 2, 2).
        """
        rho0 = np.asarray(rho0, dtype=complex)
        single = rho0.ndim == 2
        stack = rho0[None] if single else rho0
        x = np.zeros((self.dim, len(stack)), dtype=complex)
        x[:4] = stack.reshape(len(stack), 4).T
        return x[:, 0] if single else x


@dataclass
class HierarchyState:
    """All ADOs at one time; ``ados[0]`` is the reduced density matrix."""

    ados: np.ndarray  # (n_ados, 2, 2) or (n_ados, batch, 2, 2)
    time: float = 0.0

    @property
    def rho(self) -> np.ndarray:
        return self.ados[0]

    def flat(self) -> np.ndarray:
        a = self.ados
        if a.ndim == 3:
            return a.reshape(-1)
        return np.moveaxis(a, 1, -1).reshape(-1, a.shape[1])

    @classmethod
    def from_flat(cls, x: np.ndarray, time: float = 0.0) -> "HierarchyState":
        if x.ndim == 1:
            return cls(x.reshape(-1, 2, 2), time)
        return cls(np.moveaxis(x.reshape(-1, 2, 2, x.shape[1]), -1, 1), time)


def heom_rhs(state: HierarchyState, system: SystemSpec, table: HierarchyTable,
             convention: str = "standard") -> HierarchyState:
    """Time derivative of every ADO (convenience wrapper; builds the operator)."""
    op = HierarchyOperator(system, table, convention, workers=1)
    return HierarchyState.from_flat(op.apply(state.flat()), state.time)


@dataclass
class Trajectory:
    """Reduced-state output of a propagation on a uniform grid.

    ``rho``, ``rho_dot`` and ``rho_ddot`` have shape (n_times, batch, 2, 2);
    derivatives are exact hierarchy derivatives, not finite differences.
    """

    times: np.ndarray
    rho: np.ndarray
    rho_dot: np.ndarray
    rho_ddot: np.ndarray
    final: HierarchyState

    def sigma_z(self, column: int = 0) -> np.ndarray:
        return (self.rho[:, column, 0, 0] - self.rho[:, column, 1, 1]).real


def _rk4_step(op: HierarchyOperator, x: np.ndarray, dt: float) -> np.ndarray:
    k1 = op.apply(x)
    k2 = op.apply(x + 0.5 * dt * k1)
    k3 = op.apply(x + 0.5 * dt * k2)
    k4 = op.apply(x + dt * k3)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _tier0(x: np.ndarray) -> np.ndarray:
    # (4, batch) -> (batch, 2, 2)
    return x[:4].T.reshape(-1, 2, 2)


def propagate(op: HierarchyOperator, x0: np.ndarray, dt: float, t_final: float,
              stride: int = 1, integrator: str = "rk4", t0: float = 0.0,
              rtol: float = 1e-10, atol: float = 1e-12,
              blowup: float = 1e8) -> Trajectory:
    """Propagate hierarchy vector(s) ``x0`` from ``t0`` to ``t_final``.

    Output is recorded every ``stride`` steps of size ``dt`` (for the adaptive
    integrator ``dt * stride`` is just the output spacing).
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if integrator not in INTEGRATORS:
        raise ValueError(f"unknown integrator {integrator!r}")
    x = np.array(x0, dtype=complex)
    if x.ndim == 1:
        x = x[:, None]
    n_steps = int(round((t_final - t0) / dt))
    if n_steps < 0 or not np.isclose(t0 + n_steps * dt, t_final, rtol=0, atol=1e-9 * max(1, dt)):
        raise ValueError("t_final - t0 must be a nonnegative multiple of dt")
    if integrator == "rk4" and op.stable_substeps(dt) > 1:
        raise PropagationDiverged(
            f"dt={dt:g} is outside the RK4 stability region (spectral bound "
            f"{op.spectral_bound:.4g}); use dt <= {RK4_STABILITY / op.spectral_bound:.3g}")
    n_out = n_steps // stride + 1
    times = t0 + dt * stride * np.arange(n_out)
    batch = x.shape[1]
    rho = np.empty((n_out, batch, 2, 2), dtype=complex)
    rho_dot = np.empty_like(rho)
    rho_ddot = np.empty_like(rho)
    norm0 = max(np.abs(x).max(), 1.0)

    def record(i, y):
        d1 = op.apply(y)
        rho[i] = _tier0(y)
        rho_dot[i] = _tier0(d1)
        rho_ddot[i] = _tier0(op.apply(d1))

    def check(y, t):
        peak = np.abs(y).max()
        if not np.isfinite(peak) or peak > blowup * norm0:
            raise PropagationDiverged(f"hierarchy norm exploded at t={t:.6g} (max |ADO| {peak:.3g})")

    record(0, x)
    if integrator == "rk4":
        for i in range(1, n_out):
            for _ in range(stride):
                x = _rk4_step(op, x, dt)
            check(x, times[i])
            record(i, x)
    else:
        shape = x.shape
        sol = solve_ivp(lambda t, y: op.apply(y.reshape(shape)).ravel(),
                        (t0, times[-1]), x.ravel(), method="DOP853", t_eval=times,
                        rtol=rtol, atol=atol)
        if not sol.success:
            raise NotConverged(f"adaptive integration failed: {sol.message}")
        for i in range(1, n_out):
            y = sol.y[:, i].reshape(shape)
            check(y, times[i])
            record(i, y)
        x = sol.y[:, -1].reshape(shape)
    return Trajectory(times, rho, rho_dot, rho_ddot, HierarchyState.from_flat(x, times[-1]))


def bath_expansion(spec: BathSpec, n_pade: int = 200, tail_cutoff: float = 1.0,
                  tail_terms: int = 3) -> BathDecomposition:
    """Pade expansion with poles faster than ``tail_cutoff`` compressed to ``tail_terms``."""
    decomp = pade_decomposition(spec, n_pade)
    if tail_terms <= 0 or spec.alpha == 0:
        return decomp
    return compress_tail(decomp, tail_cutoff * spec.omega_c, tail_terms)


@dataclass
class ScanResult:
    max_tier: int
    tail_terms: int
    dt: float
    n_pade: int
    tail_cutoff: float
    tolerance: float
    history: list
    uncertified: list

    def as_dict(self) -> dict:
        return {"max_tier": self.max_tier, "tail_terms": self.tail_terms, "dt": self.dt,
                "n_pade": self.n_pade, "tail_cutoff": self.tail_cutoff,
                "tolerance": self.tolerance, "history": self.history,
                "uncertified": self.uncertified}


SCAN_AXES = ("max_tier", "tail_terms", "dt")


def convergence_scan(system: SystemSpec, spec: BathSpec, tiers: Sequence[int],
                     tail_terms: Sequence[int], dts: Sequence[float], t_final: float,
                     out_dt: float, rho0: np.ndarray | None = None, tol: float = 1e-3,
                     n_pade: int = 200, tail_cutoff: float = 1.0,
                     convention: str = "standard", max_ados: int = DEFAULT_MAX_ADOS,
                     ) -> ScanResult:
    """Greedy successive-refinement scan over (max_tier, tail_terms, dt).

    From the coarsest setting every axis is refined by one step: the next
    value of ``tiers`` or ``tail_terms``, or half the time step. The setting
    is accepted when each refinement moves <sigma_z>(t) by less than ``tol``
    in sup norm; otherwise the axis with the largest change is refined and
    the check repeats. The time step starts at ``max(dts)`` (sub-divided if
    RK4 would be unstable) and is not refined below ``min(dts)``. Axes
    already at their last value are kept and listed as uncertified.
    """
    tiers, tail_terms = sorted(tiers), sorted(tail_terms)
    if not (tiers and tail_terms and len(dts)):
        raise ValueError("empty convergence grid")
    dt_min = min(dts)
    rho0 = np.diag([1.0, 0.0]).astype(complex) if rho0 is None else rho0
    cache: dict = {}

    def operator(tier, tails):
        decomp = bath_expansion(spec, n_pade, tail_cutoff, tails)
        table = build_hierarchy(decomp, tier, max_ados=max_ados)
        return HierarchyOperator(system, table, convention)

    def trace(tier, tails, dt):
        key = (tier, tails, dt)
        if key not in cache:
            stride = int(round(out_dt / dt))
            if stride < 1 or not np.isclose(stride * dt, out_dt):
                raise ValueError(f"dt={dt} does not divide out_dt={out_dt}")
            op = operator(tier, tails)
            cache[key] = propagate(op, op.initial_vector(rho0), dt, t_final, stride).sigma_z()
        return cache[key]

    it, il = 0, 0
    dt = max(dts)
    history = []
    while True:
        try:
            dt = dt / operator(tiers[it], tail_terms[il]).stable_substeps(dt)
        except HierarchyTooLarge as exc:
            raise NotConverged(f"scan exceeded the ADO budget: {exc}") from None
        base = trace(tiers[it], tail_terms[il], dt)
        candidates = {}
        if it + 1 < len(tiers):
            candidates["max_tier"] = (tiers[it + 1], tail_terms[il], dt)
        if il + 1 < len(tail_terms):
            candidates["tail_terms"] = (tiers[it], tail_terms[il + 1], dt)
        if dt / 2 >= dt_min * (1 - 1e-12):
            candidates["dt"] = (tiers[it], tail_terms[il], dt / 2)
        diffs = {}
        for axis, setting in candidates.items():
            try:
                if axis != "dt":
                    sub = operator(*setting[:2]).stable_substeps(dt)
                    setting = (*setting[:2], dt / sub)
                diffs[axis] = float(np.max(np.abs(trace(*setting) - base)))
            except HierarchyTooLarge:
                diffs[axis] = float("inf")
        history.append({"max_tier": tiers[it], "tail_terms": tail_terms[il], "dt": dt,
                        "diffs": diffs})
        failing = {a: d for a, d in diffs.items() if not d < tol}
        if not failing:
            uncertified = [a for a in SCAN_AXES if a not in diffs]
            return ScanResult(tiers[it], tail_terms[il], dt, n_pade, tail_cutoff, tol,
                              history, uncertified)
        d, axis = max((d, a) for a, d in failing.items())
        if not np.isfinite(d):
            raise NotConverged(f"no converged setting in grid; last tried "
                               f"L={tiers[it]}, tail_terms={tail_terms[il]}, dt={dt:g}")
        if axis == "max_tier":
            it += 1
        elif axis == "tail_terms":
            il += 1
        else:
            dt /= 2


_MAGIC = b"SBHEOM\x00"
CHECKPOINT_VERSION = 1


def save_checkpoint(path, state: HierarchyState, system: SystemSpec,
                    table: HierarchyTable, convention: str = "standard") -> None:
    """Versioned binary checkpoint: magic, version, JSON header, raw ADO array."""
    ados = np.ascontiguousarray(state.ados, dtype="<c16")
    header = {
        "format_version": CHECKPOINT_VERSION,
        "system": {"epsilon": system.epsilon, "delta": system.delta},
        "decomposition": table.decomposition.as_dict(),
        "bath": None if table.decomposition.spec is None else {
            "alpha": table.decomposition.spec.alpha,
            "omega_c": table.decomposition.spec.omega_c,
            "beta": table.decomposition.spec.beta},
        "max_tier": table.max_tier,
        "convention": convention,
        "time": float(state.time),
        "shape": list(ados.shape),
        "dtype": "<c16",
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<HI", CHECKPOINT_VERSION, len(blob)))
        fh.write(blob)
        fh.write(ados.tobytes())


def load_checkpoint(path) -> tuple[HierarchyState, dict]:
    with open(path, "rb") as fh:
        if fh.read(len(_MAGIC)) != _MAGIC:
            raise ValueError(f"{path} is not a hierarchy checkpoint")
        version, n = struct.unpack("<HI", fh.read(6))
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        header = json.loads(fh.read(n).decode())
        data = np.frombuffer(fh.read(), dtype=header["dtype"])
    ados = data.reshape(header["shape"]).astype(complex)
    return HierarchyState(ados, header["time"]), header
