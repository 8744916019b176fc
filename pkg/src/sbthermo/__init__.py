"""Spin-boson quantum thermodynamics from the hierarchical equations of motion."""

__version__ = "0.1.0"

from .bath import (BathDecomposition, BathSpec, compress_tail, correlation_quadrature,  # noqa: E402
                   matsubara_decomposition, pade_decomposition, spectral_density)
from .hierarchy import (HierarchyOperator, HierarchyState, SystemSpec, bath_expansion,  # noqa: E402
                        build_hierarchy, convergence_scan, heom_rhs, propagate)
from .thermo import ThermoSeries, thermo_series  # noqa: E402
from .tomography import (GeneratorSnapshot, analyze_generator, choi_of_generator,  # noqa: E402
                         effective_hamiltonian, generator, gibbs_fixed_point_residual,
                         minimal_dissipator, propagate_basis, pseudo_kraus)

__all__ = [
    "BathDecomposition", "BathSpec", "compress_tail", "correlation_quadrature",
    "matsubara_decomposition", "pade_decomposition", "spectral_density",
    "HierarchyOperator", "HierarchyState", "SystemSpec", "bath_expansion",
    "build_hierarchy", "convergence_scan", "heom_rhs", "propagate",
    "ThermoSeries", "thermo_series",
    "GeneratorSnapshot", "analyze_generator", "choi_of_generator", "effective_hamiltonian",
    "generator", "gibbs_fixed_point_residual", "minimal_dissipator", "propagate_basis",
    "pseudo_kraus",
]
