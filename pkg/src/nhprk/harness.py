"""Run drivers: single simulations, convergence studies against a refined
reference, energy-ensemble experiments, and the line-oriented config format
that feeds them.  All CSV output is deterministic: fixed column order,
17-significant-digit scientific notation, LF endings, no timestamps."""

import math
import os
from dataclasses import dataclass, field, replace

import numpy as np

from . import _backend, systems
from .errors import ConfigError, StepFailureError
from .mechanics import consistent_multiplier, make_state
from .nlsolve import SolverConfig
from .prk_lie import (lie_consistent_multiplier, make_lie_state, step_nh_lie,
                      step_vprkmk)
from .prk_vec import step_nh_hamiltonian, step_nh_lagrangian, step_vprk
from .liegroup import Retraction
from .tableau import lobatto_pair

DEFAULT_H_GRID = (0.2, 0.1, 0.05, 0.025, 0.0125)

VECTOR_INTEGRATORS = ("vprk", "nh-lagrangian", "nh-hamiltonian")
LIE_INTEGRATORS = ("vprkmk", "nh-lie")


@dataclass
class RunConfig:
    system: str
    integrator: str = "nh-lagrangian"
    stages: int = 2
    h: float = 0.1
    steps: int = 100
    retraction: str = "cay"
    backend: str = "auto"
    out: str = ""
    solver_tol: float = 1e-12
    solver_max_iters: int = 50
    params: dict = field(default_factory=dict)
    preset: str = ""
    initial_q: tuple = ()
    initial_v: tuple = ()
    initial_lam: tuple = ()
    initial_pose: tuple = ()
    initial_vel: tuple = ()
    converge_h_list: tuple = DEFAULT_H_GRID
    converge_h_ref: float = 1e-4
    converge_ref_tol: float = 1e-14
    converge_final_time: float = 2.0
    ensemble_j: int = 20

    def validate(self):
        if self.h <= 0:
            raise ConfigError(f"h must be positive, got {self.h}")
        if self.steps < 1:
            raise ConfigError(f"steps must be >= 1, got {self.steps}")
        if self.stages < 2:
            raise ConfigError(f"stages must be >= 2, got {self.stages}")
        if self.integrator not in VECTOR_INTEGRATORS + LIE_INTEGRATORS:
            raise ConfigError(f"unknown integrator {self.integrator!r}")
        if self.retraction not in ("cay", "exp"):
            raise ConfigError(f"unknown retraction {self.retraction!r}")
        return self


# config keys and their value parsers; param.* is validated per system
_SCHEMA = {
    "system": "str",
    "integrator": "str",
    "stages": "int",
    "h": "float",
    "steps": "int",
    "retraction": "str",
    "backend": "str",
    "out": "str",
    "solver.tol": "float",
    "solver.max_iters": "int",
    "initial.q": "vector",
    "initial.v": "vector",
    "initial.lambda": "vector",
    "initial.pose": "vector",
    "initial.vel": "vector",
    "initial.preset": "str",
    "converge.h_list": "vector",
    "converge.h_ref": "float",
    "converge.ref_tol": "float",
    "converge.final_time": "float",
    "ensemble.j": "int",
}

_KEY_TO_ATTR = {
    "solver.tol": "solver_tol",
    "solver.max_iters": "solver_max_iters",
    "initial.q": "initial_q",
    "initial.v": "initial_v",
    "initial.lambda": "initial_lam",
    "initial.pose": "initial_pose",
    "initial.vel": "initial_vel",
    "initial.preset": "preset",
    "converge.h_list": "converge_h_list",
    "converge.h_ref": "converge_h_ref",
    "converge.ref_tol": "converge_ref_tol",
    "converge.final_time": "converge_final_time",
    "ensemble.j": "ensemble_j",
}


def _parse_value(kind, raw, key, lineno):
    raw = raw.strip()
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "vector":
            return tuple(float(part) for part in raw.split(","))
        return raw
    except ValueError as exc:
        raise ConfigError(f"line {lineno}: bad {kind} value for {key!r}: {raw!r}") from exc


def parse_config_text(text, overrides=()):
    """Parse `key = value` lines (dotted sections, # comments, comma lists).

    Unknown keys are hard errors carrying the line number; overrides are
    (key, value) strings applied after the file in order.
    """
    assignments = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line.rstrip()!r}")
        key, raw = stripped.split("=", 1)
        assignments.append((lineno, key.strip(), raw))
    for j, (key, raw) in enumerate(overrides):
        assignments.append((f"override {j + 1}", key.strip(), raw))

    values = {}
    for lineno, key, raw in assignments:
        if key in _SCHEMA:
            values[key] = _parse_value(_SCHEMA[key], raw, key, lineno)
        elif key.startswith("param."):
            values.setdefault("_params", {})[key[len("param."):]] = _parse_value(
                "float", raw, key, lineno)
        else:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
    if "system" not in values:
        raise ConfigError("missing required key 'system'")

    cfg = RunConfig(system=values.pop("system"))
    cfg.params = values.pop("_params", {})
    for key, value in values.items():
        setattr(cfg, _KEY_TO_ATTR.get(key, key), value)
    return cfg.validate()


def parse_config(path, overrides=()):
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config_text(fh.read(), overrides)


def _fmt(x):
    return f"{float(x):.16e}"


def write_csv(path, columns, rows):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(x) for x in row) + "\n")


@dataclass
class TrajectoryRecord:
    columns: list
    rows: np.ndarray

    def write_csv(self, path):
        write_csv(path, self.columns, self.rows)

    def column(self, name):
        return self.rows[:, self.columns.index(name)]


def _build_entry(cfg):
    preset = cfg.preset or None
    return systems.build(cfg.system, cfg.params, preset=preset)


def _solver_config(cfg):
    return SolverConfig(tol=cfg.solver_tol, max_iters=cfg.solver_max_iters)


def _initial_vector_state(cfg, entry):
    q0, v0 = entry.initial
    if cfg.initial_q:
        q0 = np.asarray(cfg.initial_q, dtype=float)
    if cfg.initial_v:
        v0 = np.asarray(cfg.initial_v, dtype=float)
    if q0.shape != (entry.system.n,) or v0.shape != (entry.system.n,):
        raise ConfigError(f"initial state must have dimension {entry.system.n}")
    if cfg.integrator == "vprk" or entry.system.m == 0:
        lam0 = np.zeros(entry.system.m)
    elif cfg.initial_lam:
        lam0 = np.asarray(cfg.initial_lam, dtype=float)
    else:
        lam0 = consistent_multiplier(entry.system, q0, v0)
    return make_state(entry.system, q0, v0, lam0)


def _initial_lie_state(cfg, entry):
    g0, eta0 = entry.initial
    if cfg.initial_pose:
        g0 = entry.pose_from_coords(list(cfg.initial_pose))
    if cfg.initial_vel:
        eta0 = np.asarray(cfg.initial_vel, dtype=float)
    if cfg.initial_lam:
        lam0 = np.asarray(cfg.initial_lam, dtype=float)
    elif cfg.integrator == "nh-lie" and entry.system.m:
        lam0 = lie_consistent_multiplier(entry.system, g0, eta0)
    else:
        lam0 = np.zeros(entry.system.m)
    return make_lie_state(entry.system, g0, eta0, lam0)


def _check_kind(cfg, entry):
    if entry.kind == "vector" and cfg.integrator not in VECTOR_INTEGRATORS:
        raise ConfigError(
            f"integrator {cfg.integrator!r} does not apply to vector system "
            f"{entry.name!r}")
    if entry.kind == "lie" and cfg.integrator not in LIE_INTEGRATORS:
        raise ConfigError(
            f"integrator {cfg.integrator!r} does not apply to group system "
            f"{entry.name!r}")


def _vector_stepper(cfg, entry):
    scfg = _solver_config(cfg)
    pair = lobatto_pair(cfg.stages)
    if cfg.integrator == "vprk":
        return pair, lambda sys, st, h: step_vprk(sys, pair, st, h, scfg)
    if cfg.integrator == "nh-hamiltonian":
        return pair, lambda sys, st, h: step_nh_hamiltonian(sys, pair, st, h, scfg)
    backend = cfg.backend
    return pair, lambda sys, st, h: step_nh_lagrangian(sys, pair, st, h, scfg,
                                                       backend=backend)


def _lie_stepper(cfg, entry):
    scfg = _solver_config(cfg)
    pair = lobatto_pair(cfg.stages)
    retr = Retraction(entry.system.group, cfg.retraction)
    if cfg.integrator == "vprkmk":
        return pair, lambda sys, st, h: step_vprkmk(sys, pair, st, h, scfg, retr)
    return pair, lambda sys, st, h: step_nh_lie(sys, pair, st, h, scfg, retr)


def _run_vector_fast(cfg, entry, state0, nsteps):
    """Whole-trajectory compiled driver; returns None when unavailable."""
    if cfg.integrator != "nh-lagrangian":
        return None
    if _backend.backend_name(cfg.backend) != "fast":
        return None
    kernel = _backend.kernel_for(entry.system)
    if kernel is None:
        if cfg.backend == "fast":
            raise ConfigError(f"system {entry.name!r} has no compiled kernel")
        return None
    core = _backend.core_module()
    pair = lobatto_pair(cfg.stages)
    q, p, lam, iters, resid, constr, fail = core.nh_lag_run(
        kernel, pair.primal.a, pair.dual.a, pair.primal.b, cfg.h,
        state0.q, state0.p, state0.lam, nsteps,
        cfg.solver_tol, cfg.solver_max_iters)
    return q, p, p.copy(), lam, iters, resid, constr, fail


def simulate(cfg):
    """Advance one trajectory and emit a CSV row per step (incl. step zero).

    A failing step writes all completed rows before raising, so partial
    output survives; the exception carries the failing step index.
    """
    cfg.validate()
    entry = _build_entry(cfg)
    _check_kind(cfg, entry)
    if entry.kind == "vector":
        record, fail = _simulate_vector(cfg, entry)
    else:
        record, fail = _simulate_lie(cfg, entry)
    if cfg.out:
        record.write_csv(cfg.out)
    if fail is not None:
        raise StepFailureError(f"step {fail} failed; wrote {record.rows.shape[0]} rows",
                               step_index=fail)
    return record


def _diag_columns(entry):
    return list(entry.diagnostics.keys())


def _simulate_vector(cfg, entry):
    sys = entry.system
    state0 = _initial_vector_state(cfg, entry)
    nsteps = cfg.steps
    fast = _run_vector_fast(cfg, entry, state0, nsteps)
    labels = entry.state_labels
    columns = (["t"] + labels + [f"v_{l}" for l in labels] + [f"p_{l}" for l in labels]
               + [f"lambda_{a + 1}" for a in range(sys.m)]
               + ["constraint_residual", "newton_iterations"] + _diag_columns(entry))
    diags = list(entry.diagnostics.values())
    fail = None
    if fast is not None:
        q, p, v, lam, iters, resid, constr, failed = fast
        count = nsteps + 1 if failed < 0 else failed + 1
        fail = None if failed < 0 else failed
        rows = np.zeros((count, len(columns)))
        rows[:, 0] = cfg.h * np.arange(count)
        ncol = sys.n
        rows[:, 1:1 + ncol] = q[:count]
        rows[:, 1 + ncol:1 + 2 * ncol] = v[:count]
        rows[:, 1 + 2 * ncol:1 + 3 * ncol] = p[:count]
        rows[:, 1 + 3 * ncol:1 + 3 * ncol + sys.m] = lam[:count]
        base = 1 + 3 * ncol + sys.m
        rows[1:, base] = constr[:count - 1]
        rows[1:, base + 1] = iters[:count - 1]
        for j, fn in enumerate(diags):
            rows[:, base + 2 + j] = [fn(q[i], v[i]) for i in range(count)]
        return TrajectoryRecord(columns, rows), fail

    pair, stepper = _vector_stepper(cfg, entry)
    state = state0
    out_rows = []

    def row_of(st, constr, iters):
        return ([st.t] + list(st.q) + list(st.v) + list(st.p) + list(st.lam)
                + [constr, iters] + [fn(st.q, st.v) for fn in diags])

    out_rows.append(row_of(state, 0.0, 0))
    for k in range(nsteps):
        try:
            state, stats = stepper(sys, state, cfg.h)
        except StepFailureError:
            fail = k
            break
        out_rows.append(row_of(state, stats.constraint_residual, stats.iterations))
    return TrajectoryRecord(columns, np.asarray(out_rows, dtype=float)), fail


def _simulate_lie(cfg, entry):
    sys = entry.system
    state0 = _initial_lie_state(cfg, entry)
    pair, stepper = _lie_stepper(cfg, entry)
    vel_labels = [f"w{j + 1}" for j in range(sys.group.k)]
    columns = (["t"] + entry.state_labels + vel_labels
               + [f"lambda_{a + 1}" for a in range(sys.m)]
               + ["constraint_residual", "newton_iterations"] + _diag_columns(entry))
    diags = list(entry.diagnostics.values())
    fail = None

    def row_of(st, constr, iters):
        return ([st.t] + entry.pose_coords(st.g) + list(st.eta) + list(st.lam)
                + [constr, iters] + [fn(st.g, st.eta) for fn in diags])

    state = state0
    out_rows = [row_of(state, 0.0, 0)]
    for k in range(cfg.steps):
        try:
            state, stats = stepper(sys, state, cfg.h)
        except StepFailureError:
            fail = k
            break
        out_rows.append(row_of(state, stats.constraint_residual, stats.iterations))
    return TrajectoryRecord(columns, np.asarray(out_rows, dtype=float)), fail


@dataclass
class ConvergenceReport:
    h_values: np.ndarray
    err_q: np.ndarray
    err_p: np.ndarray
    err_lam: np.ndarray
    slope_q: float
    slope_p: float
    slope_lam: float
    pred_q: int
    pred_p: int
    pred_lam: int

    def write_csv(self, path):
        columns = ["h", "err_q", "err_p", "err_lambda", "slope_q", "slope_p",
                   "slope_lambda", "pred_q", "pred_p", "pred_lambda"]
        rows = [[h, eq, ep, el, self.slope_q, self.slope_p, self.slope_lam,
                 self.pred_q, self.pred_p, self.pred_lam]
                for h, eq, ep, el in zip(self.h_values, self.err_q, self.err_p,
                                         self.err_lam)]
        write_csv(path, columns, rows)


def predicted_orders(cert):
    """Global-error exponents implied by a certificate: positions/momenta
    saturate at min(p, q+r+1) and min(p, 2q, q+r); the multiplier order
    drops by one when the infinite-step amplification sits at +1."""
    pred_q = min(cert.p, cert.q + cert.r + 1)
    pred_p = min(cert.p, 2 * cert.q, cert.q + cert.r)
    if abs(cert.r_inf - 1.0) < 1e-9:
        pred_lam = cert.q - 1
    elif cert.r_inf >= -1.0 - 1e-9:
        pred_lam = cert.q
    else:
        pred_lam = 0
    return pred_q, pred_p, pred_lam


def _fit_slope(hs, errs, floor=1e-12):
    hs = np.asarray(hs, dtype=float)
    errs = np.asarray(errs, dtype=float)
    mask = errs > floor
    if mask.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(hs[mask]), np.log(errs[mask]), 1)[0])


def _final_state(cfg, entry, h, nsteps, tol=None, continuous_lam=False):
    if tol is not None:
        cfg = replace(cfg, solver_tol=tol,
                      solver_max_iters=max(cfg.solver_max_iters, 100))
    if entry.kind == "vector":
        state0 = _initial_vector_state(cfg, entry)
        run_cfg = replace(cfg, h=h, steps=nsteps)
        fast = _run_vector_fast(run_cfg, entry, state0, nsteps)
        if fast is not None:
            q, p, v, lam, iters, resid, constr, failed = fast
            if failed >= 0:
                raise StepFailureError(f"step {failed} failed at h={h}", step_index=failed)
            qf, pf, lamf, vf = q[-1], p[-1], lam[-1], v[-1]
        else:
            pair, stepper = _vector_stepper(run_cfg, entry)
            state = state0
            for _ in range(nsteps):
                state, _ = stepper(entry.system, state, h)
            qf, pf, lamf, vf = state.q, state.p, state.lam, state.v
        if continuous_lam and entry.system.m:
            # the discrete multiplier converges to the continuous one, whose
            # evaluation at the reference state is free of the tol/h noise
            # that limits the multiplier of an implicitly solved run
            lamf = consistent_multiplier(entry.system, qf, vf)
        return qf, pf, lamf
    state = _initial_lie_state(cfg, entry)
    pair, stepper = _lie_stepper(replace(cfg, h=h), entry)
    for _ in range(nsteps):
        state, _ = stepper(entry.system, state, h)
    return state.g.ravel(), state.mu, state.lam


def _steps_for(h, final_time):
    n = round(final_time / h)
    if n < 1 or abs(n * h - final_time) > 1e-9 * max(1.0, final_time):
        raise ConfigError(f"final time {final_time} is not an integer multiple of h={h}")
    return n


def converge(cfg):
    """Global-error study against a self-refined reference run.

    Errors are measured component-wise at the shared final time; slopes are
    least-squares fits of log error against log h above the 1e-12 noise
    floor.
    """
    cfg.validate()
    entry = _build_entry(cfg)
    _check_kind(cfg, entry)
    final_time = cfg.converge_final_time
    h_list = sorted(cfg.converge_h_list, reverse=True)
    # the multiplier is read off constraint rows whose sensitivity scales
    # with h, so the reference solve runs at a tighter tolerance and takes
    # its multiplier from the continuous formula at the reference state
    ref = _final_state(cfg, entry, cfg.converge_h_ref,
                       _steps_for(cfg.converge_h_ref, final_time),
                       tol=min(cfg.converge_ref_tol, cfg.solver_tol),
                       continuous_lam=True)
    errs = np.empty((len(h_list), 3))
    for i, h in enumerate(h_list):
        got = _final_state(cfg, entry, h, _steps_for(h, final_time))
        errs[i] = [np.max(np.abs(a - b)) if np.size(a) else 0.0
                   for a, b in zip(got, ref)]
    pair = lobatto_pair(cfg.stages)
    pred = predicted_orders(pair.cert)
    report = ConvergenceReport(
        h_values=np.asarray(h_list), err_q=errs[:, 0], err_p=errs[:, 1],
        err_lam=errs[:, 2],
        slope_q=_fit_slope(h_list, errs[:, 0]),
        slope_p=_fit_slope(h_list, errs[:, 1]),
        slope_lam=_fit_slope(h_list, errs[:, 2]),
        pred_q=pred[0], pred_p=pred[1], pred_lam=pred[2])
    if cfg.out:
        report.write_csv(cfg.out)
    return report


@dataclass
class EnsembleResult:
    columns: list
    rows: np.ndarray
    n_failed: int

    def write_csv(self, path):
        write_csv(path, self.columns, self.rows)


def ensemble(cfg):
    """Energy spread of the chaotic-system ensemble members j = 0..J.

    The spread at step k averages the squared deviation of each member's
    energy from its own initial energy, which makes the k = 0 value exactly
    zero; a normalized column divides by h^(2(2s-2)).  Members whose run
    fails are dropped and counted.
    """
    cfg.validate()
    if cfg.system != "chaotic":
        raise ConfigError("ensemble runs apply to the chaotic system only")
    if cfg.ensemble_j < 1:
        raise ConfigError(f"ensemble.j must be >= 1, got {cfg.ensemble_j}")
    entry = _build_entry(cfg)
    sys = entry.system
    energies = []
    n_failed = 0
    from .mechanics import energy as vec_energy
    for j in range(cfg.ensemble_j + 1):
        q0, v0 = entry.member_initial(j, cfg.ensemble_j)
        member_cfg = replace(cfg, initial_q=tuple(q0), initial_v=tuple(v0), out="")
        try:
            record, fail = _simulate_vector(member_cfg, entry)
            if fail is not None:
                n_failed += 1
                continue
        except StepFailureError:
            n_failed += 1
            continue
        ncol = sys.n
        qs = record.rows[:, 1:1 + ncol]
        vs = record.rows[:, 1 + ncol:1 + 2 * ncol]
        energies.append([vec_energy(sys, qs[i], vs[i]) for i in range(qs.shape[0])])
    if not energies:
        raise StepFailureError("every ensemble member failed")
    earr = np.asarray(energies)
    dev = earr - earr[:, :1]
    mu = np.mean(dev ** 2, axis=0)
    norm = cfg.h ** (2 * (2 * cfg.stages - 2))
    ks = np.arange(earr.shape[1])
    rows = np.column_stack([ks, ks * cfg.h, mu, mu / norm,
                            np.full(earr.shape[1], n_failed)])
    result = EnsembleResult(["k", "t", "mu_energy", "mu_energy_normalized", "n_failed"],
                            rows, n_failed)
    if cfg.out:
        result.write_csv(cfg.out)
    return result
