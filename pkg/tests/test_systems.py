import math

import numpy as np
import pytest

from nhprk import systems
from nhprk.errors import ConfigError
from nhprk.liegroup import SE2
from nhprk.mechanics import compatibility_matrix, energy


def _all_vector_entries():
    return [systems.nonholonomic_particle(), systems.cvt(), systems.chaotic(3),
            systems.chaotic(4)]


def test_default_states_satisfy_constraints():
    for entry in _all_vector_entries():
        q0, v0 = entry.initial
        assert np.max(np.abs(entry.system.phi(q0, v0))) <= 1e-12
    for entry in (systems.unicycle(), systems.ball_on_turntable()):
        g0, eta0 = entry.initial
        assert np.max(np.abs(entry.system.phi(g0, eta0))) <= 1e-12


def _central_gradient(fn, x, step=1e-6):
    out = np.empty((np.atleast_1d(fn(x)).shape[0], x.shape[0]))
    for i in range(x.shape[0]):
        xp, xm = x.copy(), x.copy()
        xp[i] += step
        xm[i] -= step
        out[:, i] = (np.atleast_1d(fn(xp)) - np.atleast_1d(fn(xm))) / (2 * step)
    return out


def test_vector_derivatives_match_finite_differences(rng):
    # central differences at 100 random states per shipped system
    for entry in _all_vector_entries():
        sys = entry.system
        for _ in range(100):
            q = rng.normal(size=sys.n)
            v = rng.normal(size=sys.n)
            d1_num = _central_gradient(lambda qq: np.array([sys.lagrangian(qq, v)]), q)
            d2_num = _central_gradient(lambda vv: np.array([sys.lagrangian(q, vv)]), v)
            scale = max(1.0, np.max(np.abs(d1_num)), np.max(np.abs(d2_num)))
            assert np.max(np.abs(d1_num[0] - sys.d1l(q, v))) <= 1e-6 * scale
            assert np.max(np.abs(d2_num[0] - sys.d2l(q, v))) <= 1e-6 * scale
            p1_num = _central_gradient(lambda qq: sys.phi(qq, v), q)
            p2_num = _central_gradient(lambda vv: sys.phi(q, vv), v)
            assert np.max(np.abs(p1_num - sys.d1phi(q, v))) <= 1e-6 * scale
            assert np.max(np.abs(p2_num - sys.d2phi(q, v))) <= 1e-6 * scale


def test_compatibility_positive_definite_at_defaults():
    for entry in _all_vector_entries():
        q0, v0 = entry.initial
        cmat = compatibility_matrix(entry.system, q0, v0)
        assert np.all(np.linalg.eigvalsh(cmat) > 0)


def test_cvt_energy_split_low_regime():
    entry = systems.cvt(epsilon=0.5, preset="low")
    q0, v0 = entry.initial
    assert entry.diagnostics["E_d"](q0, v0) == pytest.approx(4.0 / 5.0, abs=1e-13)
    assert entry.diagnostics["E_p"](q0, v0) == pytest.approx(1.0, abs=1e-14)
    assert entry.diagnostics["E_T"](q0, v0) == pytest.approx(9.0 / 5.0, abs=1e-13)
    assert energy(entry.system, q0, v0) == pytest.approx(9.0 / 5.0, abs=1e-13)


def test_cvt_energy_split_high_regime():
    entry = systems.cvt(epsilon=0.5, preset="high")
    q0, v0 = entry.initial
    assert entry.diagnostics["E_d"](q0, v0) == pytest.approx(3.0, abs=1e-13)
    assert entry.diagnostics["E_T"](q0, v0) == pytest.approx(4.0, abs=1e-13)


def test_chaotic_energy_level():
    entry = systems.chaotic(3)
    q0, v0 = entry.initial
    assert energy(entry.system, q0, v0) == pytest.approx(3.06, abs=1e-13)


def test_chaotic_ensemble_single_energy_level():
    entry = systems.chaotic(3)
    for big_j in (5, 20):
        for j in range(big_j + 1):
            q0, v0 = entry.member_initial(j, big_j)
            assert energy(entry.system, q0, v0) == pytest.approx(3.06, abs=1e-12)
            assert np.max(np.abs(entry.system.phi(q0, v0))) <= 1e-14


def test_chaotic_rejects_tiny_m():
    with pytest.raises(ConfigError):
        systems.chaotic(1)


def test_unicycle_momentum_with_overridden_inertias():
    entry = systems.unicycle(m=2.0, I_z=3.0)
    g0, _ = entry.initial
    mu = entry.system.d2l(g0, np.array([1.0, 1.0, 1.0]))
    np.testing.assert_allclose(mu, [2.0, 2.0, 3.0], atol=0)


def test_unicycle_trivialization_identity(rng):
    # the spatial constraint v_y cos(theta) - v_x sin(theta) equals the body
    # transverse velocity
    for _ in range(20):
        x, y, theta = rng.normal(size=3)
        vx, vy, omega = rng.normal(size=3)
        g = SE2.from_coords(x, y, theta)
        rot = g[:2, :2]
        body = rot.T @ np.array([vx, vy])
        spatial = vy * math.cos(theta) - vx * math.sin(theta)
        assert spatial == pytest.approx(body[1], abs=1e-12)
    g = SE2.from_coords(0.0, 0.0, math.pi / 2)
    body = g[:2, :2].T @ np.array([0.3, 0.8])
    np.testing.assert_allclose(body, [0.8, -0.3], atol=1e-14)


def test_unicycle_group_potential_gradient(rng):
    # trivialized configuration derivative of ell checked by a finite
    # difference along group directions
    entry = systems.unicycle()
    sys = entry.system
    from nhprk.liegroup import Retraction
    retr = Retraction(sys.group, "exp")
    for _ in range(10):
        g = SE2.from_coords(*rng.normal(size=3))
        eta = rng.normal(size=3)
        ana = sys.d1l_triv(g, eta)
        step = 1e-6
        num = np.empty(3)
        for j in range(3):
            d = np.zeros(3)
            d[j] = step
            num[j] = (sys.ell(g @ retr.tau(d), eta) - sys.ell(g @ retr.tau(-d), eta)) / (2 * step)
        np.testing.assert_allclose(ana, num, atol=1e-6)


def test_ball_moving_energy_zero_at_rest():
    entry = systems.ball_on_turntable()
    g = systems.SO3R2.from_coords(np.eye(3), [0.0, 0.0])
    eta = np.zeros(5)
    assert entry.diagnostics["E_moving"](g, eta) == 0.0


def test_ball_integrals_at_initial_state():
    entry = systems.ball_on_turntable()
    g0, eta0 = entry.initial
    d = entry.diagnostics
    assert d["I_spin"](g0, eta0) == pytest.approx(eta0[2], abs=0)
    x, y = g0[3, 5], g0[4, 5]
    a = entry.params["a"]
    assert d["I_x"](g0, eta0) == pytest.approx(eta0[0] - x / (1 + a), abs=1e-14)
    assert d["I_y"](g0, eta0) == pytest.approx(eta0[1] - y / (1 + a), abs=1e-14)


def test_ball_half_cross_term_switch():
    plain = systems.ball_on_turntable()
    half = systems.ball_on_turntable(half_cross_term=1.0)
    g = systems.SO3R2.from_coords(np.eye(3), [0.5, -0.2])
    eta = np.array([0.1, 0.2, 0.3, 0.4, 0.5])
    e_plain = plain.diagnostics["E_moving"](g, eta)
    e_half = half.diagnostics["E_moving"](g, eta)
    assert e_half - e_plain == pytest.approx(0.5 * (0.5 ** 2 + 0.2 ** 2), abs=1e-14)


def test_build_rejects_unknown_system_and_params():
    with pytest.raises(ConfigError):
        systems.build("rocket")
    with pytest.raises(ConfigError):
        systems.build("particle", {"mass": 2.0})


def test_build_applies_param_overrides():
    entry = systems.build("ball", {"a": 0.5, "b": 0.5, "c": 0.5, "Omega": 2.0})
    assert entry.params["a"] == 0.5
    assert entry.params["Omega"] == 2.0
    entry = systems.build("cvt", {"epsilon": 0.0}, preset="high")
    assert entry.params["epsilon"] == 0.0
