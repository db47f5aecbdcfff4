"""High-order partitioned Runge-Kutta integrators for nonholonomic
mechanical systems on vector spaces and matrix Lie groups."""

from . import _backend
from .mechanics import ExtendedState, HolonomicSystem, VecNHSystem, make_state
from .nlsolve import SolverConfig, SolveReport, newton_solve
from .prk_lie import (LieHolonomicSystem, LieNHSystem, LieState, make_lie_state,
                      step_lie_holonomic, step_nh_lie, step_vprkmk)
from .prk_vec import step_holonomic, step_nh_hamiltonian, step_nh_lagrangian, step_vprk
from .tableau import (ButcherTableau, OrderCertificate, PartitionedTableau, certify,
                      lobatto_nodes, lobatto_pair, symplectic_conjugate,
                      stability_at_infinity, tableau_from_collocation)

__version__ = "0.1.0"


def backend_info():
    """Which stepper backend is active and whether the compiled core loaded."""
    return {
        "compiled_core": _backend.core_available(),
        "default_backend": _backend.backend_name("auto"),
    }
