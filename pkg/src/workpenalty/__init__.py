"""Finite-time thermodynamics of driven open systems.

Integrates classical (Pauli) and quantum (Lindblad) dynamics under a
time-dependent drive, keeps a work/heat ledger, and checks that the work
penalty W - dF splits into T * (change of relative entropy to the Gibbs
state + entropy production).
"""
from importlib import resources

from .dynamics import (
    ClassicalProtocol,
    QuantumProtocol,
    Schedule,
    TrajectoryLedger,
    classical_counterpart,
    classical_rate_matrix,
    first_law_residual,
    integrate_classical,
    integrate_quantum,
    lindblad_rhs,
    sample_schedule,
)
from .identity import (
    DecompositionReport,
    OptimizationResult,
    SweepResult,
    decompose,
    diagonal_reduction_check,
    entropy_production,
    nelder_mead,
    optimize_protocol,
    simulate,
    tau_sweep,
)
from .spectral import (
    DensityMatrix,
    HermitianOperator,
    SpectralDecomposition,
    apply_matrix_function,
    density_from,
    diagonal_operator,
    eigh,
    hermitize,
    trace_product,
)
from .thermo import (
    ClassicalDistribution,
    Temperature,
    energy,
    equilibrium_free_energy,
    free_energy_split_residual,
    gibbs_distribution,
    gibbs_state,
    kl_divergence,
    noneq_free_energy,
    partition_function,
    relative_entropy,
    shannon_entropy,
    von_neumann_entropy,
)

__version__ = "0.1.0"


def bundled_config_path(name: str) -> str:
    """Filesystem path of a bundled scenario, e.g. ``bundled_config_path("reset_ramp")``."""
    return str(resources.files(__package__) / "configs" / f"{name}.json")


BUNDLED_CONFIGS = ("equilibrium_static", "qubit_ramp", "reset_ramp", "reset_ramp_classical", "sudden_quench")

__all__ = [
    "ClassicalProtocol",
    "QuantumProtocol",
    "Schedule",
    "TrajectoryLedger",
    "classical_counterpart",
    "classical_rate_matrix",
    "first_law_residual",
    "integrate_classical",
    "integrate_quantum",
    "lindblad_rhs",
    "sample_schedule",
    "DecompositionReport",
    "OptimizationResult",
    "SweepResult",
    "decompose",
    "diagonal_reduction_check",
    "entropy_production",
    "nelder_mead",
    "optimize_protocol",
    "simulate",
    "tau_sweep",
    "DensityMatrix",
    "HermitianOperator",
    "SpectralDecomposition",
    "apply_matrix_function",
    "density_from",
    "diagonal_operator",
    "eigh",
    "hermitize",
    "trace_product",
    "ClassicalDistribution",
    "Temperature",
    "energy",
    "equilibrium_free_energy",
    "free_energy_split_residual",
    "gibbs_distribution",
    "gibbs_state",
    "kl_divergence",
    "noneq_free_energy",
    "partition_function",
    "relative_entropy",
    "shannon_entropy",
    "von_neumann_entropy",
    "bundled_config_path",
    "BUNDLED_CONFIGS",
    "__version__",
]
