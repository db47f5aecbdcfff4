"""Dense Newton iteration for the implicit stage systems.

Full Newton steps, no damping: the steppers call this from warm starts
where plain Newton is reliable, and a non-convergence report is preferred
over a silently damped answer.
"""

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import DivergenceError, SingularJacobianError, SingularMatrixError

SQRT_EPS = float(np.sqrt(np.finfo(float).eps))
PIVOT_TOL = 1e-14


@dataclass(frozen=True)
class SolverConfig:
    tol: float = 1e-12
    max_iters: int = 50
    fd_step: float = SQRT_EPS

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError(f"tol must be positive, got {self.tol}")
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")


@dataclass(frozen=True)
class SolveReport:
    iterations: int
    residual_norm: float
    converged: bool


def lu_solve(a, rhs):
    """Solve a @ x = rhs by partial-pivoting LU.

    Raises SingularMatrixError when a pivot falls below PIVOT_TOL relative
    to the magnitude of the matrix.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"matrix must be square, got shape {a.shape}")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")  # tiny pivots are re-checked below
        lu, piv = scipy.linalg.lu_factor(a, check_finite=False)
    scale = max(1.0, float(np.max(np.abs(a))))
    if np.min(np.abs(np.diag(lu))) < PIVOT_TOL * scale:
        raise SingularMatrixError("matrix numerically singular in LU factorization")
    return scipy.linalg.lu_solve((lu, piv), rhs, check_finite=False)


def fd_jacobian(func, x, f0=None, rel_step=SQRT_EPS):
    """Forward-difference Jacobian with per-column step rel_step * max(1, |x_i|)."""
    x = np.asarray(x, dtype=float)
    if f0 is None:
        f0 = np.asarray(func(x), dtype=float)
    d = x.shape[0]
    jac = np.empty((f0.shape[0], d))
    for i in range(d):
        step = rel_step * max(1.0, abs(x[i]))
        xp = x.copy()
        xp[i] += step
        jac[:, i] = (np.asarray(func(xp), dtype=float) - f0) / step
    return jac


def newton_solve(func, x0, cfg=None, jac=None):
    """Drive func(x) to zero in the infinity norm starting from x0.

    Returns (x, SolveReport).  The Jacobian is forward-differenced unless an
    analytic jac(x) callback is supplied.  Affine residuals converge in one
    iteration; a singular Jacobian or a non-finite residual raises.
    """
    if cfg is None:
        cfg = SolverConfig()
    x = np.array(x0, dtype=float)
    fx = np.asarray(func(x), dtype=float)
    if not np.all(np.isfinite(fx)):
        raise DivergenceError("residual not finite at the initial guess")
    norm = float(np.max(np.abs(fx))) if fx.size else 0.0
    for it in range(1, cfg.max_iters + 1):
        if norm <= cfg.tol:
            return x, SolveReport(iterations=it - 1, residual_norm=norm, converged=True)
        j = jac(x) if jac is not None else fd_jacobian(func, x, fx, cfg.fd_step)
        try:
            dx = lu_solve(j, -fx)
        except SingularMatrixError as exc:
            raise SingularJacobianError(str(exc), iteration=it) from exc
        x = x + dx
        fx = np.asarray(func(x), dtype=float)
        if not np.all(np.isfinite(fx)):
            raise DivergenceError(f"residual not finite at iteration {it}")
        norm = float(np.max(np.abs(fx))) if fx.size else 0.0
    converged = norm <= cfg.tol
    return x, SolveReport(iterations=cfg.max_iters, residual_norm=norm, converged=converged)
