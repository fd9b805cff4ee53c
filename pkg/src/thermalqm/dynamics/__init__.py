"""Deterministic dynamics: mixed quantum-classical, Koopman and reduced variational."""
from .dirac import dirac_spin_hamiltonian, dirac_spin_model
from .hybrid import (BlowUpError, HybridModel, HybridState, classical_model, ehrenfest_rhs, energy,
                     hybrid_step, hybrid_step_pure, hybrid_trajectory, spin_boson_model)
from .koopman import (BoundaryLeakError, gaussian_density, harmonic, harmonic_convergence, harmonic_grad,
                      koopman_build, koopman_evolve)
from .variational import (SingularGramError, coherent_family, dirac_frenkel_reduce, full_coordinate_family,
                          oscillator_hamiltonian, oscillator_position)

__all__ = [
    "dirac_spin_hamiltonian", "dirac_spin_model",
    "BlowUpError", "HybridModel", "HybridState", "classical_model", "ehrenfest_rhs", "energy", "hybrid_step",
    "hybrid_step_pure", "hybrid_trajectory", "spin_boson_model",
    "BoundaryLeakError", "gaussian_density", "harmonic", "harmonic_convergence", "harmonic_grad",
    "koopman_build", "koopman_evolve",
    "SingularGramError", "coherent_family", "dirac_frenkel_reduce", "full_coordinate_family",
    "oscillator_hamiltonian", "oscillator_position",
]
