"""Vector-space problem definitions: Lagrangians, velocity constraints,
Legendre transforms, the compatibility matrix and consistent multipliers."""

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import CompatibilityError, InconsistentStateError, RegularityError
from .nlsolve import SolverConfig, fd_jacobian, lu_solve, newton_solve

CONSTRAINT_TOL = 1e-10
LEGENDRE_TOL = 1e-10


@dataclass(frozen=True)
class VecNHSystem:
    """A nonholonomic problem on R^n with m velocity constraints.

    Callables take (q, v) and return arrays; d22l is the velocity Hessian
    and may be omitted, in which case it is finite-differenced from d2l.
    core_kernel names a compiled fast-path kernel when one exists.
    """

    name: str
    n: int
    m: int
    lagrangian: Callable
    d1l: Callable
    d2l: Callable
    phi: Callable
    d1phi: Callable
    d2phi: Callable
    d22l: Optional[Callable] = None
    core_kernel: Optional[tuple] = None


@dataclass(frozen=True)
class HolonomicSystem:
    """A Lagrangian with m position-only constraints phi_q(q) = 0."""

    name: str
    n: int
    m: int
    lagrangian: Callable
    d1l: Callable
    d2l: Callable
    phi_q: Callable
    dphi_q: Callable
    d22l: Optional[Callable] = None


@dataclass(frozen=True)
class ExtendedState:
    """One point of the discrete flow: (q, p, v, lambda) at time t."""

    t: float
    q: np.ndarray
    p: np.ndarray
    v: np.ndarray
    lam: np.ndarray

    def legendre_residual(self, sys):
        return float(np.max(np.abs(sys.d2l(self.q, self.v) - self.p)))


def make_state(sys, q, v, lam=None, t=0.0):
    """Build a flow state from (q, v), deriving p and defaulting lambda."""
    q = np.asarray(q, dtype=float)
    v = np.asarray(v, dtype=float)
    p = np.asarray(sys.d2l(q, v), dtype=float)
    if lam is None:
        lam = np.zeros(getattr(sys, "m", 0))
    return ExtendedState(t=t, q=q, p=p, v=v, lam=np.asarray(lam, dtype=float))


def legendre(sys, q, v):
    """Momentum conjugate to v."""
    return np.asarray(sys.d2l(q, v), dtype=float)


def velocity_hessian(sys, q, v):
    """g_L = second velocity derivative, analytic or finite-differenced."""
    if sys.d22l is not None:
        return np.asarray(sys.d22l(q, v), dtype=float)
    return fd_jacobian(lambda vv: sys.d2l(q, vv), np.asarray(v, dtype=float))


def legendre_inverse(sys, q, p, v0=None, cfg=None):
    """Velocity with momentum p at configuration q, by Newton on d2l."""
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    if v0 is None:
        v0 = p
    if cfg is None:
        cfg = SolverConfig(tol=LEGENDRE_TOL)
    jac = None
    if sys.d22l is not None:
        jac = lambda vv: np.asarray(sys.d22l(q, vv), dtype=float)  # noqa: E731
    try:
        v, report = newton_solve(lambda vv: np.asarray(sys.d2l(q, vv), dtype=float) - p,
                                 v0, cfg, jac=jac)
    except Exception as exc:
        raise RegularityError(f"inverse Legendre transform failed: {exc}") from exc
    if not report.converged:
        raise RegularityError(
            f"inverse Legendre transform did not converge (residual {report.residual_norm:.3e})")
    return v


def energy(sys, q, v):
    """v . d2l - L."""
    q = np.asarray(q, dtype=float)
    v = np.asarray(v, dtype=float)
    return float(v @ sys.d2l(q, v) - sys.lagrangian(q, v))


def compatibility_matrix(sys, q, v):
    """C = (D2 phi) g_L^{-1} (D2 phi)^T; must be invertible for unique multipliers."""
    d2p = np.atleast_2d(np.asarray(sys.d2phi(q, v), dtype=float))
    g = velocity_hessian(sys, q, v)
    try:
        sol = lu_solve(g, d2p.T)
    except Exception as exc:
        raise RegularityError(f"velocity Hessian singular: {exc}") from exc
    return d2p @ sol


def free_acceleration(sys, q, v):
    """Acceleration of the unconstrained dynamics at (q, v)."""
    q = np.asarray(q, dtype=float)
    v = np.asarray(v, dtype=float)
    g = velocity_hessian(sys, q, v)
    # mixed second derivative of L in q, from central differences of d2l
    step = 1e-6
    dq_d2l = np.empty((sys.n, sys.n))
    for i in range(sys.n):
        qp = q.copy()
        qm = q.copy()
        qp[i] += step
        qm[i] -= step
        dq_d2l[:, i] = (np.asarray(sys.d2l(qp, v)) - np.asarray(sys.d2l(qm, v))) / (2 * step)
    rhs = np.asarray(sys.d1l(q, v), dtype=float) - dq_d2l @ v
    return lu_solve(g, rhs)


def consistent_multiplier(sys, q, v, constraint_tol=CONSTRAINT_TOL):
    """Continuous-time multiplier at a constraint-satisfying state.

    Solves the m x m linear system whose matrix is the compatibility matrix;
    the right-hand side is minus the constraint derivative along the free
    dynamics.  This is how trajectories are given their initial multiplier.
    """
    q = np.asarray(q, dtype=float)
    v = np.asarray(v, dtype=float)
    residual = np.max(np.abs(np.atleast_1d(sys.phi(q, v))))
    if residual > constraint_tol:
        raise InconsistentStateError(
            f"state violates the constraint (residual {residual:.3e})")
    cmat = compatibility_matrix(sys, q, v)
    acc = free_acceleration(sys, q, v)
    d1p = np.atleast_2d(np.asarray(sys.d1phi(q, v), dtype=float))
    d2p = np.atleast_2d(np.asarray(sys.d2phi(q, v), dtype=float))
    xi_phi = d1p @ v + d2p @ acc
    try:
        return lu_solve(cmat, -xi_phi)
    except Exception as exc:
        raise CompatibilityError(f"compatibility matrix singular: {exc}") from exc
