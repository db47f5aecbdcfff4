"""Group-manifold steppers: the unconstrained partitioned scheme built on a
retraction, its holonomic variant and the nonholonomic integrator in
Lagrangian and Hamiltonian form.

The update never leaves the group: new points are products of the old point
with retracted algebra increments, so rotation blocks stay orthogonal
without re-projection.  On a flat (abelian, identity-retraction) group every
stepper reduces to its vector-space counterpart.
"""

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import HypothesisError, InconsistentStateError, StepFailureError
from .nlsolve import SolverConfig, lu_solve, newton_solve

INITIAL_CONSTRAINT_TOL = 1e-8


@dataclass(frozen=True)
class LieNHSystem:
    """A trivialized problem on a matrix group with m velocity constraints.

    d1l_triv is the group-slot derivative already pulled back to the algebra
    dual; metric, when given, is the constant velocity Hessian of ell.
    """

    name: str
    group: object
    m: int
    ell: Callable
    d1l_triv: Callable
    d2l: Callable
    phi: Callable
    d2phi: Callable
    metric: Optional[np.ndarray] = None


@dataclass(frozen=True)
class LieHolonomicSystem:
    """A trivialized Lagrangian with m position constraints phi_g(g) = 0;
    dphi_triv(g) is the left-trivialized constraint derivative (m x k)."""

    name: str
    group: object
    m: int
    ell: Callable
    d1l_triv: Callable
    d2l: Callable
    phi_g: Callable
    dphi_triv: Callable
    metric: Optional[np.ndarray] = None


@dataclass(frozen=True)
class LieState:
    """One point of the trivialized flow: group element, body velocity, its
    momentum and the current multiplier."""

    t: float
    g: np.ndarray
    eta: np.ndarray
    mu: np.ndarray
    lam: np.ndarray


@dataclass(frozen=True)
class LieStepStats:
    iterations: int
    residual_norm: float
    constraint_residual: float


def make_lie_state(sys, g, eta, lam=None, t=0.0):
    eta = np.asarray(eta, dtype=float)
    mu = np.asarray(sys.d2l(g, eta), dtype=float)
    if lam is None:
        lam = np.zeros(getattr(sys, "m", 0))
    return LieState(t=t, g=np.asarray(g, dtype=float), eta=eta, mu=mu,
                    lam=np.asarray(lam, dtype=float))


def lie_energy(sys, g, eta):
    eta = np.asarray(eta, dtype=float)
    return float(eta @ sys.d2l(g, eta) - sys.ell(g, eta))


_METRIC_INV = {}


def ell_inverse(sys, g, mu, eta0=None, cfg=None):
    """Body velocity with momentum mu at g (trivialized inverse Legendre)."""
    mu = np.asarray(mu, dtype=float)
    if sys.metric is not None:
        # cache entries hold the keyed array itself: ids stay valid while
        # referenced, and the identity check rules out id reuse
        key = id(sys.metric)
        entry = _METRIC_INV.get(key)
        if entry is None or entry[0] is not sys.metric:
            entry = (sys.metric, np.linalg.inv(sys.metric))
            _METRIC_INV[key] = entry
        return entry[1] @ mu
    if eta0 is None:
        eta0 = mu
    if cfg is None:
        cfg = SolverConfig(tol=1e-10)
    eta, report = newton_solve(lambda e: np.asarray(sys.d2l(g, e), dtype=float) - mu,
                               eta0, cfg)
    if not report.converged:
        raise StepFailureError("trivialized inverse Legendre transform failed",
                               report=report)
    return eta


def lie_consistent_multiplier(sys, g, eta, constraint_tol=1e-10):
    """Continuous-time multiplier at a constraint-satisfying group state.

    Differentiates the velocity constraint along the trivialized equations
    of motion and solves the resulting square multiplier system.  The group
    slot of the constraint is differentiated by central differences along
    the exponential chart; the velocity metric is taken at the point (exact
    for the catalog's systems, whose metrics do not vary along the group).
    """
    eta = np.asarray(eta, dtype=float)
    group = sys.group
    k = group.k
    residual = np.max(np.abs(np.atleast_1d(sys.phi(g, eta)))) if sys.m else 0.0
    if residual > constraint_tol:
        raise InconsistentStateError(
            f"state violates the constraint (residual {residual:.3e})")
    if sys.m == 0:
        return np.zeros(0)
    mu = np.asarray(sys.d2l(g, eta), dtype=float)
    if sys.metric is not None:
        metric = np.asarray(sys.metric, dtype=float)
    else:
        from .nlsolve import fd_jacobian
        metric = fd_jacobian(lambda e: np.asarray(sys.d2l(g, e), dtype=float), eta)
    d2p = np.atleast_2d(np.asarray(sys.d2phi(g, eta), dtype=float))
    unforced = group.ad(eta).T @ mu + np.asarray(sys.d1l_triv(g, eta), dtype=float)
    step = 1e-6
    d1p = np.empty((sys.m, k))
    for j in range(k):
        d = np.zeros(k)
        d[j] = step
        plus = np.atleast_1d(sys.phi(group.compose(g, group.exp(d)), eta))
        minus = np.atleast_1d(sys.phi(group.compose(g, group.exp(-d)), eta))
        d1p[:, j] = (plus - minus) / (2.0 * step)
    ginv_d2p = lu_solve(metric, d2p.T)
    cmat = d2p @ ginv_d2p
    rhs = -(d1p @ eta + d2p @ lu_solve(metric, unforced))
    return lu_solve(cmat, rhs)


def _require_pair_structure(tab):
    if not tab.lobatto:
        raise HypothesisError(
            "constrained steppers need a pair satisfying the structural hypotheses")


class _StageGeometry:
    """Retraction data shared by every residual evaluation at fixed H."""

    def __init__(self, sys, retr, tab, g, h, hmat):
        group = sys.group
        a, b = tab.primal.a, tab.primal.b
        s = tab.s
        self.xi = h * (a @ hmat)           # (s, k) stage increments
        self.xi_n = h * (b @ hmat)         # step increment
        geo = retr.step_geometry(self.xi, self.xi_n, hmat)
        self.tau_i = geo["taus"]
        self.t_i = geo["t"]
        self.tinv_neg_t = geo["tinv_neg"].transpose(0, 2, 1)
        self.dd_i = geo["dd"]
        self.adstar_i = geo["adstar"]
        self.g_i = np.matmul(g, self.tau_i)
        self.v_i = np.einsum("sij,sj->si", self.t_i, hmat)
        self.tau_n = geo["tau_n"]
        self.adstar_n = geo["adstar_n"]
        self.tinv_n_t = geo["tinv_n"].T
        self.tinv_neg_n_t = geo["tinv_neg_n"].T


def _momentum_blocks(sys, retr, tab, geo, hmat, nvec, h, mu):
    """Left/right sides of the stage momentum equations and the stage/step
    momenta, given the (possibly forced) force covectors nvec (s, k)."""
    a, b = tab.primal.a, tab.primal.b
    s = tab.s
    tn = np.einsum("sij,sj->si", geo.tinv_neg_t, nvec)   # (s, k)
    base = mu + h * (b @ tn)
    # coefficient matrix: row i holds b_j a_ji / b_i
    coef = (a.T * b[None, :]) / b[:, None]
    d2 = np.stack([np.asarray(sys.d2l(geo.g_i[j], geo.v_i[j]), dtype=float)
                   for j in range(s)])
    pi = np.einsum("sji,sj->si", geo.t_i, d2)            # t_i^T d2l
    dd = np.einsum("sji,sj->si", geo.dd_i, pi)
    lhs = (pi + h * (coef @ dd)) @ geo.tinv_n_t.T
    rhs = (base - h * (coef @ nvec) @ geo.tinv_neg_n_t.T) @ geo.adstar_n.T
    mu_stage = np.einsum("sij,sj->si", geo.adstar_i, mu + h * (a @ tn))
    mu_next = geo.adstar_n @ base
    return lhs, rhs, mu_stage, mu_next


def step_vprkmk(sys, tab, state, h, cfg=None, retraction=None):
    """Unconstrained partitioned step on the group."""
    if cfg is None:
        cfg = SolverConfig()
    retr = retraction if retraction is not None else _default_retraction(sys)
    s, k = tab.s, sys.group.k
    g, mu = state.g, state.mu

    def residual(x):
        hmat = x.reshape(s, k)
        geo = _StageGeometry(sys, retr, tab, g, h, hmat)
        nvec = np.array([geo.t_i[i].T @ np.asarray(
            sys.d1l_triv(geo.g_i[i], geo.v_i[i]), dtype=float) for i in range(s)])
        lhs, rhs, _, _ = _momentum_blocks(sys, retr, tab, geo, hmat, nvec, h, mu)
        return (lhs - rhs).ravel()

    x0 = np.tile(state.eta, s)
    x, report = newton_solve(residual, x0, cfg)
    if not report.converged:
        raise StepFailureError("vprkmk step: Newton did not converge", report=report)
    hmat = x.reshape(s, k)
    geo = _StageGeometry(sys, retr, tab, g, h, hmat)
    nvec = np.array([geo.t_i[i].T @ np.asarray(
        sys.d1l_triv(geo.g_i[i], geo.v_i[i]), dtype=float) for i in range(s)])
    _, _, _, mu1 = _momentum_blocks(sys, retr, tab, geo, hmat, nvec, h, mu)
    g1 = sys.group.compose(g, geo.tau_n)
    eta1 = ell_inverse(sys, g1, mu1, eta0=state.eta)
    state1 = LieState(t=state.t + h, g=g1, eta=eta1, mu=mu1, lam=state.lam)
    return state1, LieStepStats(report.iterations, report.residual_norm, 0.0)


def step_nh_lie(sys, tab, state, h, cfg=None, retraction=None, form="lagrangian"):
    """Nonholonomic partitioned step on the group.

    The constraint is imposed at the stage group points with the corrected
    stage momenta (primal-coefficient sums transported by the coadjoint
    action); velocities are recovered from those momenta through the
    trivialized inverse Legendre transform, so only the velocity constraint
    is ever evaluated.
    """
    if form == "hamiltonian":
        return _step_nh_lie_hamiltonian(sys, tab, state, h, cfg, retraction)
    if cfg is None:
        cfg = SolverConfig()
    _require_pair_structure(tab)
    retr = retraction if retraction is not None else _default_retraction(sys)
    s, k, m = tab.s, sys.group.k, sys.m
    g, mu, lam_k = state.g, state.mu, state.lam
    if m:
        phi0 = np.max(np.abs(np.atleast_1d(sys.phi(g, state.eta))))
        if phi0 > INITIAL_CONSTRAINT_TOL:
            raise InconsistentStateError(f"initial state off the constraint ({phi0:.3e})")
    sk = s * k

    def assemble(x):
        hmat = x[:sk].reshape(s, k)
        lam = x[sk:].reshape(s, m)
        geo = _StageGeometry(sys, retr, tab, g, h, hmat)
        nvec = np.empty((s, k))
        for i in range(s):
            force = np.atleast_2d(sys.d2phi(geo.g_i[i], geo.v_i[i])).T @ lam[i]
            nvec[i] = geo.t_i[i].T @ (
                np.asarray(sys.d1l_triv(geo.g_i[i], geo.v_i[i]), dtype=float) + force)
        lhs, rhs, mu_stage, mu_next = _momentum_blocks(
            sys, retr, tab, geo, hmat, nvec, h, mu)
        return hmat, lam, geo, lhs, rhs, mu_stage, mu_next

    def stage_constraints(geo, mu_stage, hmat):
        out = np.empty((s, m))
        for i in range(s):
            eta_i = ell_inverse(sys, geo.g_i[i], mu_stage[i], eta0=hmat[i])
            out[i] = np.atleast_1d(sys.phi(geo.g_i[i], eta_i))
        return out

    def residual(x):
        hmat, lam, geo, lhs, rhs, mu_stage, _ = assemble(x)
        r1 = (lhs - rhs).ravel()
        r2 = lam[0] - lam_k
        cons = stage_constraints(geo, mu_stage, hmat)
        return np.concatenate([r1, r2, cons[1:].ravel()])

    x0 = np.concatenate([np.tile(state.eta, s), np.tile(lam_k, s)])
    x, report = newton_solve(residual, x0, cfg)
    if not report.converged:
        raise StepFailureError("nonholonomic group step: Newton did not converge",
                               report=report)
    hmat, lam, geo, lhs, rhs, mu_stage, mu_next = assemble(x)
    cons = stage_constraints(geo, mu_stage, hmat)
    g1 = sys.group.compose(g, geo.tau_n)
    eta1 = ell_inverse(sys, g1, mu_next, eta0=hmat[-1])
    state1 = LieState(t=state.t + h, g=g1, eta=eta1, mu=mu_next, lam=lam[-1].copy())
    constr = float(np.max(np.abs(cons))) if m else 0.0
    return state1, LieStepStats(report.iterations, report.residual_norm, constr)


def _step_nh_lie_hamiltonian(sys, tab, state, h, cfg=None, retraction=None):
    """Hamiltonian form: reduced-Hamiltonian data derived from ell via the
    inverse Legendre transform, force sums entering with flipped sign."""
    if cfg is None:
        cfg = SolverConfig()
    _require_pair_structure(tab)
    retr = retraction if retraction is not None else _default_retraction(sys)
    s, k, m = tab.s, sys.group.k, sys.m
    g, mu, lam_k = state.g, state.mu, state.lam
    phi0 = np.max(np.abs(np.atleast_1d(sys.phi(g, state.eta))))
    if phi0 > INITIAL_CONSTRAINT_TOL:
        raise InconsistentStateError(f"initial state off the constraint ({phi0:.3e})")
    sk = s * k

    def assemble(x):
        hmat = x[:sk].reshape(s, k)
        pimat = x[sk:2 * sk].reshape(s, k)
        lam = x[2 * sk:].reshape(s, m)
        geo = _StageGeometry(sys, retr, tab, g, h, hmat)
        nvec = np.empty((s, k))
        eta_h = np.empty((s, k))
        for i in range(s):
            m_i = np.linalg.solve(geo.t_i[i].T, pimat[i])   # physical stage momentum
            eta_i = ell_inverse(sys, geo.g_i[i], m_i, eta0=hmat[i])
            eta_h[i] = eta_i
            force = np.atleast_2d(sys.d2phi(geo.g_i[i], eta_i)).T @ lam[i]
            nvec[i] = geo.t_i[i].T @ (
                -np.asarray(sys.d1l_triv(geo.g_i[i], eta_i), dtype=float) - force)
        return hmat, pimat, lam, geo, nvec, eta_h

    def residual(x):
        hmat, pimat, lam, geo, nvec, eta_h = assemble(x)
        a, b = tab.primal.a, tab.primal.b
        coef = (a.T * b[None, :]) / b[:, None]
        tn = np.einsum("sij,sj->si", geo.tinv_neg_t, nvec)
        base = mu - h * (b @ tn)
        dd = np.einsum("sji,sj->si", geo.dd_i, pimat)
        r0 = np.empty((s, k))
        r1 = np.empty((s, k))
        for i in range(s):
            # stage body velocity must be the Hamiltonian velocity
            r0[i] = geo.t_i[i] @ hmat[i] - eta_h[i]
            lhs = geo.tinv_n_t @ (pimat[i] + h * (coef[i] @ dd))
            rhs = geo.adstar_n @ (base + h * (geo.tinv_neg_n_t @ (coef[i] @ nvec)))
            r1[i] = lhs - rhs
        r2 = lam[0] - lam_k
        cons = []
        for i in range(1, s):
            mu_i = geo.adstar_i[i] @ (mu - h * (a[i] @ tn))
            eta_i = ell_inverse(sys, geo.g_i[i], mu_i, eta0=hmat[i])
            cons.append(np.atleast_1d(sys.phi(geo.g_i[i], eta_i)))
        r3 = np.concatenate(cons) if cons else np.empty(0)
        return np.concatenate([r0.ravel(), r1.ravel(), r2, r3])

    x0 = np.concatenate([np.tile(state.eta, s), np.tile(state.mu, s), np.tile(lam_k, s)])
    x, report = newton_solve(residual, x0, cfg)
    if not report.converged:
        raise StepFailureError(
            "nonholonomic group step (Hamiltonian form): Newton did not converge",
            report=report)
    hmat, pimat, lam, geo, nvec, eta_h = assemble(x)
    tn = np.einsum("sij,sj->si", geo.tinv_neg_t, nvec)
    mu1 = geo.adstar_n @ (mu - h * (tab.primal.b @ tn))
    cons = np.empty((s, m))
    for i in range(s):
        mu_i = geo.adstar_i[i] @ (mu - h * (tab.primal.a[i] @ tn))
        eta_i = ell_inverse(sys, geo.g_i[i], mu_i, eta0=hmat[i])
        cons[i] = np.atleast_1d(sys.phi(geo.g_i[i], eta_i))
    g1 = sys.group.compose(g, geo.tau_n)
    eta1 = ell_inverse(sys, g1, mu1, eta0=hmat[-1])
    state1 = LieState(t=state.t + h, g=g1, eta=eta1, mu=mu1, lam=lam[-1].copy())
    return state1, LieStepStats(report.iterations, report.residual_norm,
                                float(np.max(np.abs(cons))))


def step_lie_holonomic(sys, tab, state, h, cfg=None, retraction=None):
    """Position-constrained partitioned step on the group.

    Constraints hold at the interior and final stage points; the system is
    closed by the endpoint tangency condition, which replaces the (already
    satisfied) first-stage constraint.
    """
    if cfg is None:
        cfg = SolverConfig()
    _require_pair_structure(tab)
    retr = retraction if retraction is not None else _default_retraction(sys)
    s, k, m = tab.s, sys.group.k, sys.m
    g, mu = state.g, state.mu
    if m:
        phi0 = np.max(np.abs(np.atleast_1d(sys.phi_g(g))))
        if phi0 > INITIAL_CONSTRAINT_TOL:
            raise InconsistentStateError(f"initial point off the constraint ({phi0:.3e})")
    sk = s * k

    def assemble(x):
        hmat = x[:sk].reshape(s, k)
        lam = x[sk:].reshape(s, m)
        geo = _StageGeometry(sys, retr, tab, g, h, hmat)
        nvec = np.empty((s, k))
        for i in range(s):
            force = np.atleast_2d(sys.dphi_triv(geo.g_i[i])).T @ lam[i]
            nvec[i] = geo.t_i[i].T @ (
                np.asarray(sys.d1l_triv(geo.g_i[i], geo.v_i[i]), dtype=float) + force)
        lhs, rhs, mu_stage, mu_next = _momentum_blocks(
            sys, retr, tab, geo, hmat, nvec, h, mu)
        return hmat, lam, geo, lhs, rhs, mu_next

    def residual(x):
        hmat, lam, geo, lhs, rhs, mu_next = assemble(x)
        r1 = (lhs - rhs).ravel()
        g1 = sys.group.compose(g, geo.tau_n)
        eta1 = ell_inverse(sys, g1, mu_next, eta0=hmat[-1])
        tangency = np.atleast_2d(sys.dphi_triv(g1)) @ eta1
        interior = np.concatenate(
            [np.atleast_1d(sys.phi_g(geo.g_i[i])) for i in range(1, s)]) \
            if s > 1 else np.empty(0)
        return np.concatenate([r1, tangency, interior])

    x0 = np.concatenate([np.tile(state.eta, s), np.tile(state.lam, s)])
    x, report = newton_solve(residual, x0, cfg)
    if not report.converged:
        raise StepFailureError("holonomic group step: Newton did not converge",
                               report=report)
    hmat, lam, geo, lhs, rhs, mu_next = assemble(x)
    g1 = sys.group.compose(g, geo.tau_n)
    eta1 = ell_inverse(sys, g1, mu_next, eta0=hmat[-1])
    constr = max(np.max(np.abs(np.atleast_1d(sys.phi_g(geo.g_i[i]))))
                 for i in range(s)) if m else 0.0
    state1 = LieState(t=state.t + h, g=g1, eta=eta1, mu=mu_next, lam=lam[-1].copy())
    return state1, LieStepStats(report.iterations, report.residual_norm, float(constr))


def _default_retraction(sys):
    from .liegroup import Retraction
    return Retraction(sys.group, "cay")
