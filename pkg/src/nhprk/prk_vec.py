"""Vector-space steppers: the unconstrained partitioned scheme, its
holonomically constrained variant and the nonholonomic integrator in
Lagrangian and Hamiltonian form.

Each stepper is a pure function (system, tableau pair, state, h) -> state'.
The Newton unknowns are the stage velocities plus the stage multipliers;
stage positions, forces and momenta are eliminated functionally.  The first
stage multiplier is pinned to the incoming multiplier: with a zero first
tableau row the first stage constraint only involves the (consistent)
initial data and carries no information about the unknowns.
"""

from dataclasses import dataclass

import numpy as np

from . import _backend
from .errors import HypothesisError, InconsistentStateError, StepFailureError
from .mechanics import ExtendedState, legendre_inverse
from .nlsolve import SolverConfig, newton_solve

INITIAL_CONSTRAINT_TOL = 1e-8


@dataclass(frozen=True)
class StepStats:
    iterations: int
    residual_norm: float
    constraint_residual: float


def _require_converged(report, what):
    if not report.converged:
        raise StepFailureError(
            f"{what}: Newton did not converge "
            f"(residual {report.residual_norm:.3e} after {report.iterations} iterations)",
            report=report)


def _require_pair_structure(tab):
    if not tab.lobatto:
        raise HypothesisError(
            "constrained steppers need a pair satisfying the structural hypotheses")


def step_vprk(sys, tab, state, h, cfg=None):
    """Unconstrained variational partitioned step."""
    if cfg is None:
        cfg = SolverConfig()
    a, ahat, b = tab.primal.a, tab.dual.a, tab.primal.b
    s, n = tab.s, sys.n
    q, p = state.q, state.p

    def residual(x):
        vv = x.reshape(s, n)
        qs = q + h * (a @ vv)
        w = np.empty((s, n))
        d2 = np.empty((s, n))
        for i in range(s):
            w[i] = sys.d1l(qs[i], vv[i])
            d2[i] = sys.d2l(qs[i], vv[i])
        return (d2 - p - h * (ahat @ w)).ravel()

    x0 = np.tile(state.v, s)
    x, report = newton_solve(residual, x0, cfg)
    _require_converged(report, "vprk step")
    vv = x.reshape(s, n)
    qs = q + h * (a @ vv)
    w = np.array([sys.d1l(qs[i], vv[i]) for i in range(s)])
    q1 = q + h * (b @ vv)
    p1 = p + h * (b @ w)
    v1 = legendre_inverse(sys, q1, p1, v0=vv[-1])
    state1 = ExtendedState(t=state.t + h, q=q1, p=p1, v=v1, lam=state.lam)
    return state1, StepStats(report.iterations, report.residual_norm, 0.0)


def step_holonomic(sys, tab, state, h, cfg=None):
    """Position-constrained partitioned step.

    Imposes phi_q = 0 at the interior and final stages and closes the system
    with the velocity-tangency condition at the step endpoint; the first
    stage constraint is the (already satisfied) constraint at the incoming
    point and is replaced by that closure equation.
    """
    if cfg is None:
        cfg = SolverConfig()
    _require_pair_structure(tab)
    a, ahat, b = tab.primal.a, tab.dual.a, tab.primal.b
    s, n, m = tab.s, sys.n, sys.m
    q, p = state.q, state.p
    phi0 = np.max(np.abs(np.atleast_1d(sys.phi_q(q))))
    if phi0 > INITIAL_CONSTRAINT_TOL:
        raise InconsistentStateError(f"initial point off the constraint ({phi0:.3e})")
    sn = s * n

    def residual(x):
        vv = x[:sn].reshape(s, n)
        lam = x[sn:].reshape(s, m)
        qs = q + h * (a @ vv)
        w = np.empty((s, n))
        d2 = np.empty((s, n))
        for i in range(s):
            dphi = np.atleast_2d(sys.dphi_q(qs[i]))
            w[i] = sys.d1l(qs[i], vv[i]) + dphi.T @ lam[i]
            d2[i] = sys.d2l(qs[i], vv[i])
        r1 = (d2 - p - h * (ahat @ w)).ravel()
        q1 = q + h * (b @ vv)
        p1 = p + h * (b @ w)
        v1 = legendre_inverse(sys, q1, p1, v0=vv[-1])
        tangency = np.atleast_2d(sys.dphi_q(q1)) @ v1
        interior = np.concatenate([np.atleast_1d(sys.phi_q(qs[i])) for i in range(1, s)])
        return np.concatenate([r1, tangency, interior])

    x0 = np.concatenate([np.tile(state.v, s), np.tile(state.lam, s)])
    x, report = newton_solve(residual, x0, cfg)
    _require_converged(report, "holonomic step")
    vv = x[:sn].reshape(s, n)
    lam = x[sn:].reshape(s, m)
    qs = q + h * (a @ vv)
    w = np.array([sys.d1l(qs[i], vv[i]) + np.atleast_2d(sys.dphi_q(qs[i])).T @ lam[i]
                  for i in range(s)])
    q1 = q + h * (b @ vv)
    p1 = p + h * (b @ w)
    v1 = legendre_inverse(sys, q1, p1, v0=vv[-1])
    constr = max(np.max(np.abs(np.atleast_1d(sys.phi_q(qs[i])))) for i in range(s))
    state1 = ExtendedState(t=state.t + h, q=q1, p=p1, v=v1, lam=lam[-1])
    return state1, StepStats(report.iterations, report.residual_norm, float(constr))


def _nh_lagrangian_solve(sys, tab, state, h, cfg):
    """Shared Newton solve for the Lagrangian-form nonholonomic step."""
    a, ahat, b = tab.primal.a, tab.dual.a, tab.primal.b
    s, n, m = tab.s, sys.n, sys.m
    q, p, lam_k = state.q, state.p, state.lam
    sn = s * n

    def stage_data(x):
        vv = x[:sn].reshape(s, n)
        lam = x[sn:].reshape(s, m)
        qs = q + h * (a @ vv)
        w = np.empty((s, n))
        d2 = np.empty((s, n))
        for i in range(s):
            d2phi = np.atleast_2d(sys.d2phi(qs[i], vv[i]))
            w[i] = sys.d1l(qs[i], vv[i]) + d2phi.T @ lam[i]
            d2[i] = sys.d2l(qs[i], vv[i])
        pst = p + h * (a @ w)
        return vv, lam, qs, w, d2, pst

    def stage_velocities(qs, pst, vv):
        return [legendre_inverse(sys, qs[i], pst[i], v0=vv[i]) for i in range(tab.s)]

    def residual(x):
        vv, lam, qs, w, d2, pst = stage_data(x)
        r1 = (d2 - p - h * (ahat @ w)).ravel()
        vst = stage_velocities(qs, pst, vv)
        r2 = lam[0] - lam_k
        r3 = np.concatenate([np.atleast_1d(sys.phi(qs[i], vst[i])) for i in range(1, s)]) \
            if s > 1 else np.empty(0)
        return np.concatenate([r1, r2, r3])

    x0 = np.concatenate([np.tile(state.v, s), np.tile(lam_k, s)])
    x, report = newton_solve(residual, x0, cfg)
    _require_converged(report, "nonholonomic step")
    vv, lam, qs, w, d2, pst = stage_data(x)
    vst = stage_velocities(qs, pst, vv)
    constr = max(np.max(np.abs(np.atleast_1d(sys.phi(qs[i], vst[i]))))
                 for i in range(s)) if m else 0.0
    q1 = q + h * (b @ vv)
    p1 = p + h * (b @ w)
    v1 = legendre_inverse(sys, q1, p1, v0=vst[-1])
    state1 = ExtendedState(t=state.t + h, q=q1, p=p1, v=v1, lam=lam[-1].copy())
    return state1, StepStats(report.iterations, report.residual_norm, float(constr))


def step_nh_lagrangian(sys, tab, state, h, cfg=None, backend="auto"):
    """Nonholonomic partitioned step, Lagrangian form.

    The constraint is imposed at the corrected stage momenta: positions take
    the primal stage values while the momenta are re-summed with the primal
    coefficients, which lands them on the constraint manifold at the stage
    order rather than two orders lower.
    """
    if cfg is None:
        cfg = SolverConfig()
    _require_pair_structure(tab)
    if sys.m:
        phi0 = np.max(np.abs(np.atleast_1d(sys.phi(state.q, state.v))))
        if phi0 > INITIAL_CONSTRAINT_TOL:
            raise InconsistentStateError(f"initial state off the constraint ({phi0:.3e})")
    impl = _backend.nh_lagrangian_impl(sys, backend)
    if impl is not None:
        return impl.step(sys, tab, state, h, cfg)
    return _nh_lagrangian_solve(sys, tab, state, h, cfg)


def step_nh_hamiltonian(sys, tab, state, h, cfg=None):
    """Nonholonomic partitioned step, Hamiltonian form (sign-flipped forces).

    Runs on Hamiltonian data derived through the inverse Legendre transform,
    so systems only need their Lagrangian-side callables.  The momentum-side
    constraint is the velocity constraint evaluated at the recovered
    velocity, and the constraint force direction reduces to the velocity
    gradient of phi whenever the velocity Hessian is symmetric.
    """
    if cfg is None:
        cfg = SolverConfig()
    _require_pair_structure(tab)
    a, ahat, b = tab.primal.a, tab.dual.a, tab.primal.b
    s, n, m = tab.s, sys.n, sys.m
    q, p, lam_k = state.q, state.p, state.lam
    phi0 = np.max(np.abs(np.atleast_1d(sys.phi(state.q, state.v))))
    if phi0 > INITIAL_CONSTRAINT_TOL:
        raise InconsistentStateError(f"initial state off the constraint ({phi0:.3e})")
    sn = s * n

    def hamiltonian_w(qi, pi, lam_i, v_guess):
        vi = legendre_inverse(sys, qi, pi, v0=v_guess)
        d2phi = np.atleast_2d(sys.d2phi(qi, vi))
        return -np.asarray(sys.d1l(qi, vi), dtype=float) - d2phi.T @ lam_i, vi

    def stage_data(x):
        vv = x[:sn].reshape(s, n)
        pp = x[sn:2 * sn].reshape(s, n)
        lam = x[2 * sn:].reshape(s, m)
        qs = q + h * (a @ vv)
        w = np.empty((s, n))
        vh = np.empty((s, n))
        for i in range(s):
            w[i], vh[i] = hamiltonian_w(qs[i], pp[i], lam[i], vv[i])
        pst = p - h * (a @ w)
        return vv, pp, lam, qs, w, vh, pst

    def residual(x):
        vv, pp, lam, qs, w, vh, pst = stage_data(x)
        r0 = (vv - vh).ravel()
        r1 = (pp - p + h * (ahat @ w)).ravel()
        r2 = lam[0] - lam_k
        blocks = []
        for i in range(1, s):
            vi = legendre_inverse(sys, qs[i], pst[i], v0=vh[i])
            blocks.append(np.atleast_1d(sys.phi(qs[i], vi)))
        r3 = np.concatenate(blocks) if blocks else np.empty(0)
        return np.concatenate([r0, r1, r2, r3])

    x0 = np.concatenate([np.tile(state.v, s), np.tile(p, s), np.tile(lam_k, s)])
    x, report = newton_solve(residual, x0, cfg)
    _require_converged(report, "nonholonomic step (Hamiltonian form)")
    vv, pp, lam, qs, w, vh, pst = stage_data(x)
    vst = [legendre_inverse(sys, qs[i], pst[i], v0=vh[i]) for i in range(s)]
    constr = max(np.max(np.abs(np.atleast_1d(sys.phi(qs[i], vst[i])))) for i in range(s))
    q1 = q + h * (b @ vv)
    p1 = p - h * (b @ w)
    v1 = legendre_inverse(sys, q1, p1, v0=vst[-1])
    state1 = ExtendedState(t=state.t + h, q=q1, p=p1, v=v1, lam=lam[-1].copy())
    return state1, StepStats(report.iterations, report.residual_norm, float(constr))
