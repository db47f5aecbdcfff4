import numpy as np
import pytest

from nhprk import _backend, systems
from nhprk.mechanics import consistent_multiplier, make_state
from nhprk.prk_vec import step_nh_lagrangian

pytestmark = pytest.mark.skipif(not _backend.core_available(),
                                reason="compiled core not built")


def _initial(entry):
    q0, v0 = entry.initial
    lam0 = consistent_multiplier(entry.system, q0, v0)
    return make_state(entry.system, q0, v0, lam0)


@pytest.mark.parametrize("factory", [systems.nonholonomic_particle, systems.cvt,
                                     systems.chaotic])
def test_fast_step_matches_python(factory, pairs):
    entry = factory()
    sys = entry.system
    state = _initial(entry)
    for s in (2, 3, 4):
        fast, fstats = step_nh_lagrangian(sys, pairs[s], state, 0.05, backend="fast")
        slow, sstats = step_nh_lagrangian(sys, pairs[s], state, 0.05, backend="python")
        assert np.max(np.abs(fast.q - slow.q)) <= 1e-11
        assert np.max(np.abs(fast.p - slow.p)) <= 1e-11
        assert np.max(np.abs(fast.lam - slow.lam)) <= 1e-9
        assert fstats.constraint_residual <= 1e-10
        assert sstats.constraint_residual <= 1e-10


def test_fast_trajectory_matches_python(pairs):
    entry = systems.nonholonomic_particle()
    sys = entry.system
    fast = _initial(entry)
    slow = _initial(entry)
    for _ in range(100):
        fast, _ = step_nh_lagrangian(sys, pairs[3], fast, 0.02, backend="fast")
        slow, _ = step_nh_lagrangian(sys, pairs[3], slow, 0.02, backend="python")
    assert np.max(np.abs(fast.q - slow.q)) <= 1e-9
    assert np.max(np.abs(fast.p - slow.p)) <= 1e-9


def test_run_driver_matches_stepper(pairs):
    entry = systems.cvt()
    sys = entry.system
    state0 = _initial(entry)
    core = _backend.core_module()
    kernel = _backend.kernel_for(sys)
    pair = pairs[2]
    q, p, lam, iters, resid, constr, fail = core.nh_lag_run(
        kernel, pair.primal.a, pair.dual.a, pair.primal.b, 0.05,
        state0.q, state0.p, state0.lam, 50, 1e-12, 50)
    assert fail == -1
    state = state0
    for _ in range(50):
        state, _ = step_nh_lagrangian(sys, pair, state, 0.05, backend="fast")
    np.testing.assert_allclose(q[-1], state.q, atol=1e-12)
    np.testing.assert_allclose(p[-1], state.p, atol=1e-12)
    assert np.max(constr) <= 1e-10
    assert np.max(iters) <= 10


def test_kernel_energy_matches_system(rng):
    core = _backend.core_module()
    for factory, kname in ((systems.nonholonomic_particle, "particle"),
                           (systems.cvt, "cvt"), (systems.chaotic, "chaotic")):
        entry = factory()
        sys = entry.system
        kernel = _backend.kernel_for(sys)
        assert kernel is not None
        assert kernel.n == sys.n
        assert kernel.m == sys.m


def test_backend_name_resolution(monkeypatch):
    assert _backend.backend_name("python") == "python"
    assert _backend.backend_name("fast") == "fast"
    assert _backend.backend_name("auto") in ("fast", "python")
    monkeypatch.setenv("NHPRK_BACKEND", "python")
    assert _backend.backend_name("auto") == "python"
    with pytest.raises(ValueError):
        _backend.backend_name("turbo")


def test_fast_backend_requires_kernel(pairs):
    # a system without a compiled kernel must reject an explicit fast request
    from nhprk.mechanics import VecNHSystem
    sys = VecNHSystem(
        name="nokernel", n=1, m=0,
        lagrangian=lambda q, v: 0.5 * v[0] ** 2,
        d1l=lambda q, v: np.zeros(1),
        d2l=lambda q, v: np.asarray(v, dtype=float).copy(),
        phi=lambda q, v: np.empty(0),
        d1phi=lambda q, v: np.empty((0, 1)),
        d2phi=lambda q, v: np.empty((0, 1)),
        d22l=lambda q, v: np.eye(1),
    )
    state = make_state(sys, np.zeros(1), np.ones(1))
    with pytest.raises(RuntimeError):
        step_nh_lagrangian(sys, lobatto_pair_2(), state, 0.1, backend="fast")


def lobatto_pair_2():
    from nhprk.tableau import lobatto_pair
    return lobatto_pair(2)
