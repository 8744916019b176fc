"""Configuration, scenario presets and the hierarchy -> tomography -> thermo pipeline.

Config files are INI documents (``configparser``) with the sections
``[run]``, ``[system]``, ``[bath]``, ``[heom]``, ``[initial_state]`` and
``[output]``. Unknown sections or keys are rejected. All energies and times
are in units of omega_c (omega_c = 1 internally).
"""
from __future__ import annotations

import configparser
import dataclasses
import hashlib
import json
import platform
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .bath import BathSpec
from .errors import ConfigError, SBThermoError
from .hierarchy import (CONVENTIONS, DEFAULT_MAX_ADOS, INTEGRATORS, HierarchyOperator,
                        SystemSpec, bath_expansion, build_hierarchy, convergence_scan)
from .thermo import THERMO_COLUMNS, THERMO_UNITS, ThermoSeries, thermo_series
from .tomography import (DEFAULT_COND_MAX, GeneratorAnalysis, MapSeries, analyze_generator,
                         generator, propagate_basis)

NAMED_STATES = {
    "ground": np.array([[1, 0], [0, 0]], dtype=complex),
    "excited": np.array([[0, 0], [0, 1]], dtype=complex),
    "plus": np.array([[0.5, 0.5], [0.5, 0.5]], dtype=complex),
}

TRAJECTORY_COLUMNS = ("time", "rho00", "rho11", "rho01_re", "rho01_im", "sx", "sy", "sz")
TRAJECTORY_UNITS = ("1/omega_c",) + ("1",) * 7
KS_COLUMNS = ("time", "K00_re", "K00_im", "K01_re", "K01_im", "K10_re", "K10_im",
              "K11_re", "K11_im", "theta1", "theta2", "theta3", "theta4",
              "split_residual", "gibbs_residual")
KS_UNITS = ("1/omega_c",) + ("omega_c",) * 14
TABLE_SCHEMAS = {
    "trajectory.dat": (TRAJECTORY_COLUMNS, TRAJECTORY_UNITS),
    "ks.dat": (KS_COLUMNS, KS_UNITS),
    "thermo.dat": (THERMO_COLUMNS, THERMO_UNITS),
}
FAILED_MARKER = "FAILED"


@dataclass
class RunConfig:
    epsilon: float = 0.0
    delta: float = 0.2
    alpha: float = 0.3
    beta: float = 25.0
    n_pade: int = 200
    tail_cutoff: float = 1.0
    tail_terms: int = 3
    max_tier: int = 6
    dt: float = 0.02
    t_final: float = 50.0
    integrator: str = "rk4"
    coupling_convention: str = "standard"
    max_ados: int = DEFAULT_MAX_ADOS
    cond_max: float = DEFAULT_COND_MAX
    initial_state: str = "ground"
    custom_state: tuple | None = None
    directory: str = "run"
    grid_stride: int = 1
    preset: str | None = None
    scan: dict | None = field(default=None, compare=False)

    def __post_init__(self):
        checks = [
            (0 <= self.alpha <= 2, "bath.alpha must lie in [0, 2]"),
            (0 < self.beta <= 100, "bath.beta_omega_c must lie in (0, 100]"),
            (self.n_pade >= 1, "bath.n_pade must be >= 1"),
            (self.tail_cutoff > 0, "bath.tail_cutoff must be > 0"),
            (self.tail_terms >= 0, "bath.tail_terms must be >= 0"),
            (self.max_tier >= 0, "heom.L_max must be >= 0"),
            (self.dt > 0, "heom.dt_omega_c must be > 0"),
            (self.t_final > 0, "heom.t_final_omega_c must be > 0"),
            (self.integrator in INTEGRATORS, f"heom.integrator must be one of {INTEGRATORS}"),
            (self.coupling_convention in CONVENTIONS,
             f"heom.coupling_convention must be one of {CONVENTIONS}"),
            (self.cond_max > 1, "heom.cond_max must be > 1"),
            (self.grid_stride >= 1, "output.grid_stride must be >= 1"),
            (self.initial_state in (*NAMED_STATES, "custom"),
             "initial_state.named must be ground, excited, plus or custom"),
        ]
        for ok, message in checks:
            if not ok:
                raise ConfigError(message)
        steps = self.t_final / (self.dt * self.grid_stride)
        if abs(steps - round(steps)) > 1e-9 * steps:
            raise ConfigError("t_final_omega_c must be a multiple of dt_omega_c * grid_stride")
        if self.initial_state == "custom":
            rho = custom_matrix(self.custom_state)
            if abs(np.trace(rho) - 1) > 1e-12 or np.linalg.eigvalsh(rho).min() < -1e-12:
                raise ConfigError("custom initial state must be a unit-trace positive matrix")

    @property
    def system(self) -> SystemSpec:
        return SystemSpec(self.epsilon, self.delta)

    @property
    def bath(self) -> BathSpec:
        return BathSpec(self.alpha, 1.0, self.beta)

    @property
    def rho0(self) -> np.ndarray:
        if self.initial_state == "custom":
            return custom_matrix(self.custom_state)
        return NAMED_STATES[self.initial_state].copy()

    def physics(self) -> dict:
        """Everything that determines the numbers (no output location)."""
        d = dataclasses.asdict(self)
        for key in ("directory", "scan", "preset"):
            d.pop(key)
        if d["custom_state"] is not None:
            d["custom_state"] = list(d["custom_state"])
        return d

    def config_hash(self) -> str:
        blob = json.dumps(self.physics(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)


def custom_matrix(entries) -> np.ndarray:
    if entries is None or len(entries) != 4:
        raise ConfigError("custom initial state needs rho00, rho11, rho01_re, rho01_im")
    r00, r11, re, im = entries
    return np.array([[r00, re + 1j * im], [re - 1j * im, r11]], dtype=complex)


# Scenario presets. Physical parameters are the three regimes' literal values;
# numerical settings come from the convergence scan (tolerance 1e-4 on <sigma_z>),
# with dt halved for the two non-adiabatic cases so the first law closes to 1e-6.
PRESETS = {
    "unbiased-nonadiabatic": dict(epsilon=0.0, delta=0.2, alpha=0.3, beta=25.0,
                                  tail_terms=3, max_tier=6, dt=0.02, t_final=50.0),
    # the biased case relaxes slowest; t_final covers the approach to sigma_S -> 0
    "biased-nonadiabatic": dict(epsilon=2.5 * 0.2, delta=0.2, alpha=0.3, beta=25.0,
                                tail_terms=3, max_tier=6, dt=0.02, t_final=100.0),
    "biased-adiabatic": dict(epsilon=0.1 * 5.0, delta=5.0, alpha=1.0, beta=25.0,
                             tail_terms=9, max_tier=5, dt=0.005, t_final=40.0),
}


def preset_config(name: str, **overrides) -> RunConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return RunConfig(preset=name, **{**PRESETS[name], "directory": name, **overrides})


# section -> {key: (field, type)}
_SCHEMA = {
    "run": {"preset": ("preset", str)},
    "system": {"epsilon_over_omega_c": ("epsilon", float),
               "delta_over_omega_c": ("delta", float)},
    "bath": {"alpha": ("alpha", float), "beta_omega_c": ("beta", float),
             "n_pade": ("n_pade", int), "tail_cutoff_omega_c": ("tail_cutoff", float),
             "tail_terms": ("tail_terms", int)},
    "heom": {"L_max": ("max_tier", int), "dt_omega_c": ("dt", float),
             "t_final_omega_c": ("t_final", float), "integrator": ("integrator", str),
             "coupling_convention": ("coupling_convention", str),
             "max_ados": ("max_ados", int), "cond_max": ("cond_max", float)},
    "initial_state": {"named": ("initial_state", str), "rho00": (None, float),
                      "rho11": (None, float), "rho01_re": (None, float),
                      "rho01_im": (None, float)},
    "output": {"directory": ("directory", str), "grid_stride": ("grid_stride", int)},
    "scan": {"tiers": (None, "ints"), "tail_terms": (None, "ints"), "dts": (None, "floats"),
             "tolerance": (None, float), "t_final_omega_c": (None, float),
             "out_dt_omega_c": (None, float)},
}


def _convert(raw: str, kind, where: str):
    try:
        if kind == "ints":
            return [int(v) for v in raw.replace(",", " ").split()]
        if kind == "floats":
            return [float(v) for v in raw.replace(",", " ").split()]
        return kind(raw.strip())
    except ValueError:
        raise ConfigError(f"{where}: cannot parse {raw!r}") from None


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str  # keys are case sensitive (L_max)
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    values: dict = {}
    state: dict = {}
    scan: dict = {}
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"{source}: unknown section [{section}]")
        for key, raw in parser.items(section):
            if key not in _SCHEMA[section]:
                raise ConfigError(f"{source}: unknown key {key!r} in [{section}]")
            name, kind = _SCHEMA[section][key]
            value = _convert(raw, kind, f"{source} [{section}] {key}")
            if section == "scan":
                scan[key] = value
            elif name is None:
                state[key] = value
            else:
                values[name] = value
    if state:
        values["custom_state"] = tuple(state.get(k, 0.0) for k in
                                       ("rho00", "rho11", "rho01_re", "rho01_im"))
        values.setdefault("initial_state", "custom")
    if scan:
        values["scan"] = scan
    preset = values.pop("preset", None)
    if preset is not None:
        return preset_config(preset, **values)
    return RunConfig(**values)


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, str(path))


def format_table(columns, units, data, cfg_hash: str) -> str:
    head = [f"# sbthermo {__version__} config_sha256={cfg_hash}",
            "# " + " ".join(f"{c}[{u}]" for c, u in zip(columns, units))]
    body = [" ".join(repr(float(v)) for v in row) for row in np.asarray(data)]
    return "\n".join(head + body) + "\n"


def read_table(path) -> tuple[list[str], np.ndarray]:
    """Column names (without units) and data of a table written by this module."""
    lines = Path(path).read_text().splitlines()
    header = [line for line in lines if line.startswith("#")]
    names = [tok.split("[", 1)[0] for tok in header[-1][1:].split()]
    data = np.loadtxt(path, comments="#", ndmin=2)
    return names, data


@dataclass
class RunResult:
    config: RunConfig
    maps: MapSeries
    analysis: GeneratorAnalysis
    rho: np.ndarray
    rho_dot: np.ndarray
    thermo: ThermoSeries
    n_ados: int
    n_terms: int
    elapsed: float
    truncated_at: float | None

    def invariants(self) -> dict:
        rho = self.rho
        k = self.analysis.k_s
        herm = np.abs(rho - np.swapaxes(rho, -1, -2).conj()).max()
        k_herm = np.abs(k - np.swapaxes(k, -1, -2).conj()).max()
        u_scale = max(np.abs(self.thermo.U_S).max(), 1e-300)
        return {
            "trace": float(np.abs(np.trace(rho, axis1=1, axis2=2) - 1).max()),
            "hermiticity": float(herm),
            "min_eigenvalue": float(np.linalg.eigvalsh(0.5 * (rho + np.swapaxes(rho, -1, -2).conj())).min()),
            "map_trace_row": float(self.analysis.trace_row.max()),
            "kraus_constraint": float(self.analysis.constraint_residual.max()),
            "split_residual": float(self.analysis.split_residual.max()),
            "ks_hermiticity": float(k_herm),
            "ks_trace": float(np.abs(np.trace(k, axis1=1, axis2=2)).max()),
            "first_law_relative": float(self.thermo.first_law_residual().max() / u_scale),
        }

    def tables(self) -> dict:
        t = self.thermo.times
        r = self.rho
        traj = np.column_stack([t, r[:, 0, 0].real, r[:, 1, 1].real, r[:, 0, 1].real,
                                r[:, 0, 1].imag, 2 * r[:, 0, 1].real, -2 * r[:, 0, 1].imag,
                                (r[:, 0, 0] - r[:, 1, 1]).real])
        _, ks = self.analysis.table()
        _, th = self.thermo.table()
        return {"trajectory.dat": traj, "ks.dat": ks, "thermo.dat": th}


INVARIANT_BUDGETS = {
    "trace": 1e-8,
    "hermiticity": 1e-10,
    "min_eigenvalue": -1e-6,
    "map_trace_row": 1e-8,
    "kraus_constraint": 1e-8,
    "split_residual": 1e-8,
    "ks_hermiticity": 1e-10,
    "ks_trace": 1e-10,
    "first_law_relative": 1e-6,
}


def invariant_failures(inv: dict) -> list[str]:
    bad = []
    for key, budget in INVARIANT_BUDGETS.items():
        ok = inv[key] >= budget if key == "min_eigenvalue" else inv[key] <= budget
        if not ok:
            bad.append(f"{key}: {inv[key]:.3g} (budget {budget:g})")
    return bad


def propagate_config(config: RunConfig, workers: int | None = None):
    """Hierarchy stage only: the dynamical map series and the ADO table."""
    decomp = bath_expansion(config.bath, config.n_pade, config.tail_cutoff, config.tail_terms)
    table = build_hierarchy(decomp, config.max_tier, max_ados=config.max_ados)
    op = HierarchyOperator(config.system, table, config.coupling_convention, workers=workers)
    maps = propagate_basis(op, config.dt, config.t_final, config.grid_stride, config.integrator)
    return maps, table


def compute(config: RunConfig, workers: int | None = None) -> RunResult:
    """Run the pipeline in memory; errors carry the stage that raised them."""
    start = time.perf_counter()
    maps, table = propagate_config(config, workers)
    gens = generator(maps, config.cond_max, truncate=True)
    analysis = analyze_generator(gens, config.beta)
    n = len(gens)
    rho, rho_dot, _ = maps.evolve(config.rho0)
    rho, rho_dot = rho[:n], rho_dot[:n]
    thermo = thermo_series(gens.times, rho, rho_dot, analysis.k_s, analysis.k_s_dot,
                           config.system.hamiltonian, config.beta)
    return RunResult(config, maps, analysis, rho, rho_dot, thermo, table.size, table.n_terms,
                     time.perf_counter() - start, gens.truncated_at)


def provenance(config: RunConfig, **extra) -> dict:
    decomp = bath_expansion(config.bath, config.n_pade, config.tail_cutoff, config.tail_terms)
    return {
        "software": {"sbthermo": __version__, "numpy": np.__version__,
                     "scipy": scipy.__version__, "python": platform.python_version()},
        "config_sha256": config.config_hash(),
        "config": config.physics(),
        "preset": config.preset,
        "initial_state_assumption": "rho(0) = |0><0| (sigma_z = +1) unless configured",
        "decomposition": decomp.as_dict(),
        **extra,
    }


def _write(path: Path, text: str):
    path.write_text(text)


def run_scenario(config: RunConfig, directory=None, workers: int | None = None) -> RunResult:
    """Run the pipeline and write tables, convergence and provenance records.

    On failure a ``FAILED`` marker naming the stage is written next to any
    outputs already produced, and the error is re-raised.
    """
    out = Path(directory or config.directory)
    out.mkdir(parents=True, exist_ok=True)
    marker = out / FAILED_MARKER
    if marker.exists():
        marker.unlink()
    cfg_hash = config.config_hash()
    scan_report = None
    try:
        _write(out / "provenance.json", json.dumps(provenance(config, status="running"),
                                                   indent=2, sort_keys=True))
        if config.scan:
            scan_report = scan_for(config)
            config = config.replace(max_tier=scan_report.max_tier,
                                    tail_terms=scan_report.tail_terms, dt=scan_report.dt)
            cfg_hash = config.config_hash()
        result = compute(config, workers)
    except SBThermoError as exc:
        _write(marker, f"stage={exc.stage}\n{type(exc).__name__}: {exc}\n")
        raise
    except Exception as exc:
        _write(marker, f"stage=unknown\n{type(exc).__name__}: {exc}\n")
        raise
    for name, data in result.tables().items():
        cols, units = TABLE_SCHEMAS[name]
        _write(out / name, format_table(cols, units, data, cfg_hash))
    inv = result.invariants()
    convergence = {
        "source": "scan" if scan_report else ("preset" if config.preset else "config"),
        "settings": {"max_tier": config.max_tier, "tail_terms": config.tail_terms,
                     "dt": config.dt, "n_pade": config.n_pade,
                     "tail_cutoff": config.tail_cutoff},
        "scan": scan_report.as_dict() if scan_report else None,
        "n_ados": result.n_ados,
        "n_terms": result.n_terms,
        "map_truncated_at": result.truncated_at,
        "invariants": inv,
    }
    _write(out / "convergence.json", json.dumps(convergence, indent=2, sort_keys=True))
    _write(out / "provenance.json", json.dumps(
        provenance(config, status="complete", convergence=convergence["settings"]),
        indent=2, sort_keys=True))
    failures = invariant_failures(inv)
    if failures:
        _write(marker, "stage=invariants\n" + "\n".join(failures) + "\n")
    return result


def scan_for(config: RunConfig):
    s = config.scan or {}
    return convergence_scan(
        config.system, config.bath,
        tiers=s.get("tiers", [3, 4, 5, 6, 7]),
        tail_terms=s.get("tail_terms", [1, 2, 3, 4, 5, 6]),
        dts=s.get("dts", [0.04, 0.02, 0.01]),
        t_final=s.get("t_final_omega_c", min(config.t_final, 30.0)),
        out_dt=s.get("out_dt_omega_c", 0.2),
        rho0=config.rho0, tol=s.get("tolerance", 1e-4),
        n_pade=config.n_pade, tail_cutoff=config.tail_cutoff,
        convention=config.coupling_convention, max_ados=config.max_ados)
