"""Independent oracles used by the test suite.

These deliberately avoid the package's own stepper code paths: root solves
go through scipy.optimize.fsolve and the update formulas are written from
their textbook definitions.
"""

import warnings

import numpy as np
from scipy.optimize import fsolve as _fsolve


def fsolve(*args, **kwargs):
    # xtol below fsolve's certification threshold still yields accurate
    # roots; the agreement assertions validate them
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return _fsolve(*args, **kwargs)


def rattle_step(grad_v, cons, cons_grad, q, p, h):
    """One step of the classic two-multiplier scheme for L = |v|^2/2 - V(q)
    with position constraints cons(q) = 0.

    Half kick with a position multiplier chosen so the drifted point sits on
    the constraint, then a second half kick with a velocity multiplier
    projecting the momentum onto the tangent space.
    """
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    m = np.atleast_1d(cons(q)).shape[0]

    def position_residual(lam_r):
        p_half = p + 0.5 * h * (-grad_v(q) + cons_grad(q).T @ lam_r)
        return np.atleast_1d(cons(q + h * p_half))

    lam_r = fsolve(position_residual, np.zeros(m), full_output=False, xtol=1e-13)
    p_half = p + 0.5 * h * (-grad_v(q) + cons_grad(q).T @ lam_r)
    q1 = q + h * p_half
    g1 = cons_grad(q1)

    def velocity_residual(lam_v):
        p1 = p_half + 0.5 * h * (-grad_v(q1) + g1.T @ lam_v)
        return g1 @ p1

    lam_v = fsolve(velocity_residual, np.zeros(m), full_output=False, xtol=1e-13)
    p1 = p_half + 0.5 * h * (-grad_v(q1) + g1.T @ lam_v)
    return q1, p1


def trapezoidal_variational_step(grad_v, q, p, h):
    """Variational step of the trapezoidal action discretization of
    L = |v|^2/2 - V(q): the two discrete momentum equations
    p_k = -D1 L_d, p_{k+1} = D2 L_d solved for (q_{k+1}, p_{k+1})."""
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)

    def residual(q1):
        v = (q1 - q) / h
        return (v + 0.5 * h * grad_v(q)) - p

    q1 = fsolve(residual, q + h * p, full_output=False, xtol=1e-13)
    v = (q1 - q) / h
    p1 = v - 0.5 * h * grad_v(q1)
    return q1, p1
