"""Backend selection: compiled stage-system kernels vs the numpy fallback.

The compiled extension covers the hot path (the Lagrangian-form
nonholonomic stepper for the unit-mass, velocity-linear-constraint systems
shipped in the catalog).  Everything else always runs on the Python
implementations.  Selection honours, in order: an explicit per-call
backend argument, the NHPRK_BACKEND environment variable, availability.
"""

import os

_core = None
_core_probed = False


def core_module():
    """The compiled extension module, or None when it is not importable."""
    global _core, _core_probed
    if not _core_probed:
        _core_probed = True
        try:
            from . import _core as mod
            _core = mod
        except ImportError:
            _core = None
    return _core


def core_available():
    return core_module() is not None


def backend_name(requested="auto"):
    """Resolve a backend request against the environment and availability."""
    if requested in (None, "auto"):
        requested = os.environ.get("NHPRK_BACKEND", "auto")
    if requested == "auto":
        return "fast" if core_available() else "python"
    if requested not in ("fast", "python"):
        raise ValueError(f"unknown backend {requested!r}")
    if requested == "fast" and not core_available():
        raise RuntimeError("fast backend requested but the compiled core is unavailable")
    return requested


class _FastStep:
    """Adapter giving the compiled kernel the Python stepper's signature."""

    def __init__(self, kernel):
        self.kernel = kernel

    def step(self, sys, tab, state, h, cfg):
        from .mechanics import ExtendedState
        from .prk_vec import StepStats
        from .errors import StepFailureError
        core = core_module()
        out = core.nh_lag_step(self.kernel, tab.primal.a, tab.dual.a, tab.primal.b,
                               h, state.q, state.p, state.lam,
                               cfg.tol, cfg.max_iters, cfg.fd_step)
        q1, p1, lam1, iters, resid, constr, converged = out
        if not converged:
            raise StepFailureError(
                f"nonholonomic step: Newton did not converge (residual {resid:.3e})")
        state1 = ExtendedState(t=state.t + h, q=q1, p=p1, v=p1.copy(), lam=lam1)
        return state1, StepStats(int(iters), float(resid), float(constr))


def kernel_for(sys):
    """Compiled kernel instance for a catalog system, or None."""
    core = core_module()
    if core is None or sys.core_kernel is None:
        return None
    kind, args = sys.core_kernel
    factory = getattr(core, "make_kernel", None)
    if factory is None:
        return None
    return factory(kind, args)


def nh_lagrangian_impl(sys, requested):
    """Fast-path implementation for step_nh_lagrangian, or None for Python."""
    name = backend_name(requested)
    if name != "fast":
        return None
    kernel = kernel_for(sys)
    if kernel is None:
        if requested == "fast":
            raise RuntimeError(f"system {sys.name!r} has no compiled kernel")
        return None
    return _FastStep(kernel)
