import numpy as np
import pytest

from oracles import rattle_step

from nhprk import systems
from nhprk.errors import InconsistentStateError
from nhprk.liegroup import FlatRn, Retraction, SO3
from nhprk.mechanics import consistent_multiplier, make_state
from nhprk.prk_lie import (LieHolonomicSystem, LieNHSystem, ell_inverse,
                           lie_energy, make_lie_state, step_lie_holonomic,
                           step_nh_lie, step_vprkmk)
from nhprk.prk_vec import step_nh_lagrangian, step_vprk


def _free_body(inertia=(1.0, 2.0, 3.0)):
    grp = SO3()
    metric = np.diag(inertia)
    return LieNHSystem(
        name="freebody", group=grp, m=0,
        ell=lambda g, e: 0.5 * float(e @ (metric @ e)),
        d1l_triv=lambda g, e: np.zeros(3),
        d2l=lambda g, e: metric @ np.asarray(e, dtype=float),
        phi=lambda g, e: np.empty(0),
        d2phi=lambda g, e: np.empty((0, 3)),
        metric=metric,
    )


def _so3_pendulum(gamma=1.0):
    # unit-inertia body with the alignment potential gamma * e3 . R e3; the
    # body's third axis then traces the spherical pendulum
    grp = SO3()
    e3 = np.array([0.0, 0.0, 1.0])
    metric = np.eye(3)

    def d1l_triv(g, eta):
        return -gamma * np.cross(e3, g.T @ e3)

    return LieNHSystem(
        name="so3pend", group=grp, m=0,
        ell=lambda g, e: 0.5 * float(e @ e) - gamma * float(e3 @ (g @ e3)),
        d1l_triv=d1l_triv,
        d2l=lambda g, e: np.asarray(e, dtype=float).copy(),
        phi=lambda g, e: np.empty(0),
        d2phi=lambda g, e: np.empty((0, 3)),
        metric=metric,
    )


def _flat_particle_system():
    # the nonholonomic particle written on the abelian translation group
    entry = systems.nonholonomic_particle()
    vec = entry.system
    grp = FlatRn(3)

    def q_of(g):
        return FlatRn.coords(g)

    return LieNHSystem(
        name="flat-particle", group=grp, m=1,
        ell=lambda g, e: vec.lagrangian(q_of(g), e),
        d1l_triv=lambda g, e: vec.d1l(q_of(g), e),
        d2l=lambda g, e: np.asarray(e, dtype=float).copy(),
        phi=lambda g, e: vec.phi(q_of(g), e),
        d2phi=lambda g, e: vec.d2phi(q_of(g), e),
        metric=np.eye(3),
    ), entry


def test_free_body_momentum_norm_conserved(pairs):
    sys = _free_body()
    state = make_lie_state(sys, np.eye(3), np.array([0.3, -0.2, 0.5]))
    mu0 = np.linalg.norm(state.mu)
    for _ in range(200):
        state, _ = step_vprkmk(sys, pairs[3], state, 0.1)
    assert abs(np.linalg.norm(state.mu) - mu0) <= 1e-12
    assert np.max(np.abs(state.g.T @ state.g - np.eye(3))) <= 1e-12


def test_free_body_energy_oscillates_without_drift(pairs):
    # the scheme is variational, not energy-conserving: the energy stays in
    # an O(h^(2s-2)) band around its initial value
    sys = _free_body()
    state = make_lie_state(sys, np.eye(3), np.array([0.3, -0.2, 0.5]))
    e0 = lie_energy(sys, state.g, state.eta)
    devs = []
    for _ in range(100):
        state, _ = step_vprkmk(sys, pairs[3], state, 0.1)
        devs.append(abs(lie_energy(sys, state.g, state.eta) - e0))
    assert max(devs) <= 1e-6


def test_vprkmk_flat_group_reduces_to_vector_step(pairs):
    # a configuration-independent Lagrangian on the abelian group: compare
    # with the vector-space stepper on the identical problem
    import nhprk.mechanics as mech
    grp = FlatRn(2)
    sys = LieNHSystem(
        name="flat-osc", group=grp, m=0,
        ell=lambda g, e: 0.5 * float(e @ e) - 0.5 * float(
            FlatRn.coords(g) @ FlatRn.coords(g)),
        d1l_triv=lambda g, e: -FlatRn.coords(g),
        d2l=lambda g, e: np.asarray(e, dtype=float).copy(),
        phi=lambda g, e: np.empty(0),
        d2phi=lambda g, e: np.empty((0, 2)),
        metric=np.eye(2),
    )
    vec = mech.VecNHSystem(
        name="osc2", n=2, m=0,
        lagrangian=lambda q, v: 0.5 * float(v @ v) - 0.5 * float(q @ q),
        d1l=lambda q, v: -np.asarray(q, dtype=float),
        d2l=lambda q, v: np.asarray(v, dtype=float).copy(),
        phi=lambda q, v: np.empty(0),
        d1phi=lambda q, v: np.empty((0, 2)),
        d2phi=lambda q, v: np.empty((0, 2)),
        d22l=lambda q, v: np.eye(2),
    )
    q0 = np.array([1.0, -0.4])
    v0 = np.array([0.3, 0.2])
    for kind in ("cay", "exp"):
        lie_state = make_lie_state(sys, FlatRn.point(q0), v0)
        vec_state = make_state(vec, q0, v0)
        retr = Retraction(grp, kind)
        for _ in range(10):
            lie_state, _ = step_vprkmk(sys, pairs[3], lie_state, 0.1, retraction=retr)
            vec_state, _ = step_vprk(vec, pairs[3], vec_state, 0.1)
            np.testing.assert_allclose(FlatRn.coords(lie_state.g), vec_state.q,
                                       atol=1e-13)
            np.testing.assert_allclose(lie_state.mu, vec_state.p, atol=1e-13)


def test_nh_lie_flat_group_reduces_to_vector_step(pairs):
    sys, entry = _flat_particle_system()
    vec = entry.system
    q0, v0 = entry.initial
    lam0 = consistent_multiplier(vec, q0, v0)
    lie_state = make_lie_state(sys, FlatRn.point(q0), v0, lam0)
    vec_state = make_state(vec, q0, v0, lam0)
    for s in (2, 3):
        ls, vs = lie_state, vec_state
        for _ in range(10):
            ls, _ = step_nh_lie(sys, pairs[s], ls, 0.05)
            vs, _ = step_nh_lagrangian(vec, pairs[s], vs, 0.05, backend="python")
            np.testing.assert_allclose(FlatRn.coords(ls.g), vs.q, atol=1e-13)
            np.testing.assert_allclose(ls.mu, vs.p, atol=1e-13)
            np.testing.assert_allclose(ls.lam, vs.lam, atol=1e-12)


def test_vprkmk_self_convergence_order(pairs):
    # alignment potential on the rotation group: orders 2s-2 on (g, mu)
    sys = _so3_pendulum()
    eta0 = np.array([0.4, 0.1, 0.0])
    final = 1.0

    def run(h, s):
        state = make_lie_state(sys, np.eye(3), eta0)
        for _ in range(round(final / h)):
            state, _ = step_vprkmk(sys, pairs[s], state, h)
        return state

    for s, expected in ((2, 2.0), (3, 4.0)):
        ref = run(1.0 / 512.0, s)
        errs = []
        hs = [0.1, 0.05, 0.025]
        for h in hs:
            got = run(h, s)
            errs.append(max(np.max(np.abs(got.g - ref.g)),
                            np.max(np.abs(got.mu - ref.mu))))
        slope = np.polyfit(np.log(hs), np.log(errs), 1)[0]
        assert abs(slope - expected) <= 0.35


def test_so3_pendulum_tracks_rattle_sphere(pairs):
    # the body axis e3 under the alignment potential follows the spherical
    # pendulum; compare with the classic constrained vector scheme
    gamma = 1.0
    sys = _so3_pendulum(gamma)
    e3 = np.array([0.0, 0.0, 1.0])
    omega0 = np.array([0.25, -0.15, 0.0])   # no spin about the tracked axis

    grad_v = lambda q: gamma * np.array([0.0, 0.0, 1.0])          # noqa: E731
    cons = lambda q: np.array([q @ q - 1.0])                      # noqa: E731
    cons_grad = lambda q: 2.0 * np.asarray(q, dtype=float)[None, :]  # noqa: E731

    final = 1.0
    gaps = []
    hs = [0.1, 0.05, 0.025]
    for h in hs:
        state = make_lie_state(sys, np.eye(3), omega0)
        q = e3.copy()
        p = np.cross(omega0, e3)
        for _ in range(round(final / h)):
            state, _ = step_vprkmk(sys, pairs[2], state, h)
            q, p = rattle_step(grad_v, cons, cons_grad, q, p, h)
        gaps.append(np.max(np.abs(state.g @ e3 - q)))
    slope = np.polyfit(np.log(hs), np.log(gaps), 1)[0]
    # both discretize the same flow at order two, so the gap closes at
    # least that fast (here the leading error terms even coincide)
    assert slope >= 2.0 - 0.35


def test_unicycle_stage_constraints_and_multiplier(pairs):
    entry = systems.unicycle()
    sys = entry.system
    state = make_lie_state(sys, *entry.initial)
    for s in (2, 3):
        st = state
        for _ in range(10):
            st, stats = step_nh_lie(sys, pairs[s], st, 0.05)
            assert stats.constraint_residual <= 1e-10
            assert np.max(np.abs(sys.phi(st.g, st.eta))) <= 1e-11


def test_unicycle_convergence_orders(pairs):
    from nhprk.harness import RunConfig, converge
    for s, expected in ((2, (2, 2, 2)), (3, (4, 4, 2))):
        cfg = RunConfig(system="unicycle", integrator="nh-lie", stages=s,
                        converge_h_list=(0.1, 0.05, 0.025),
                        converge_h_ref=1e-3, converge_final_time=1.0)
        rep = converge(cfg)
        assert abs(rep.slope_q - expected[0]) <= 0.35
        assert abs(rep.slope_p - expected[1]) <= 0.35
        assert abs(rep.slope_lam - expected[2]) <= 0.5


def test_nh_lie_hamiltonian_form_matches_lagrangian(pairs):
    entry = systems.unicycle()
    sys = entry.system
    state = make_lie_state(sys, *entry.initial)
    for s in (2, 3):
        st = state
        for _ in range(8):
            lag, _ = step_nh_lie(sys, pairs[s], st, 0.05, form="lagrangian")
            ham, stats = step_nh_lie(sys, pairs[s], st, 0.05, form="hamiltonian")
            assert np.max(np.abs(lag.g - ham.g)) <= 1e-10
            assert np.max(np.abs(lag.mu - ham.mu)) <= 1e-10
            assert np.max(np.abs(lag.lam - ham.lam)) <= 1e-8
            assert stats.constraint_residual <= 1e-10
            st = lag


def test_nh_lie_rejects_inconsistent_start(pairs):
    entry = systems.unicycle()
    sys = entry.system
    g0, _ = entry.initial
    bad = make_lie_state(sys, g0, np.array([0.4, 0.3, 0.1]))
    with pytest.raises(InconsistentStateError):
        step_nh_lie(sys, pairs[2], bad, 0.05)


def test_ball_first_integrals_short_run(pairs):
    entry = systems.ball_on_turntable()
    sys = entry.system
    state = make_lie_state(sys, *entry.initial)
    d = entry.diagnostics
    start = [d[k](state.g, state.eta) for k in ("I_spin", "I_x", "I_y")]
    for _ in range(100):
        state, stats = step_nh_lie(sys, pairs[3], state, 0.05)
        assert stats.constraint_residual <= 1e-10
    end = [d[k](state.g, state.eta) for k in ("I_spin", "I_x", "I_y")]
    for a, b in zip(start, end):
        assert abs(a - b) <= 1e-12


def _holonomic_alignment_system(gamma=1.0, cos_angle=0.8):
    grp = SO3()
    e3 = np.array([0.0, 0.0, 1.0])

    def dphi_triv(g):
        return np.cross(e3, g.T @ e3)[None, :]

    return LieHolonomicSystem(
        name="alignment", group=grp, m=1,
        ell=lambda g, e: 0.5 * float(e @ e) - gamma * float(e3 @ (g @ e3)),
        d1l_triv=lambda g, e: -gamma * np.cross(e3, g.T @ e3),
        d2l=lambda g, e: np.asarray(e, dtype=float).copy(),
        phi_g=lambda g: np.array([float(e3 @ (g @ e3)) - cos_angle]),
        dphi_triv=dphi_triv,
        metric=np.eye(3),
    )


def test_lie_holonomic_alignment_constraint(pairs):
    cos_angle = 0.8
    sys = _holonomic_alignment_system(cos_angle=cos_angle)
    theta = np.arccos(cos_angle)
    g0 = SO3().exp(np.array([theta, 0.0, 0.0]))
    gamma0 = g0.T @ np.array([0.0, 0.0, 1.0])
    eta0 = 0.5 * gamma0   # spin about the tilted axis is constraint-tangent
    state = make_lie_state(sys, g0, eta0, np.zeros(1))
    for _ in range(25):
        state, stats = step_lie_holonomic(sys, pairs[2], state, 0.05)
        assert stats.constraint_residual <= 1e-10
        assert abs(float(sys.phi_g(state.g)[0])) <= 1e-11
    # gravity pulls against the cone, so the multiplier must act
    assert np.max(np.abs(state.lam)) > 1e-4


def test_lie_holonomic_empty_constraint_reduces_to_vprkmk(pairs):
    free = _so3_pendulum()
    sys = LieHolonomicSystem(
        name="none", group=free.group, m=0,
        ell=free.ell, d1l_triv=free.d1l_triv, d2l=free.d2l,
        phi_g=lambda g: np.empty(0),
        dphi_triv=lambda g: np.empty((0, 3)),
        metric=free.metric,
    )
    eta0 = np.array([0.2, -0.3, 0.1])
    a = make_lie_state(sys, np.eye(3), eta0, np.zeros(0))
    b = make_lie_state(free, np.eye(3), eta0)
    for _ in range(5):
        a, _ = step_lie_holonomic(sys, pairs[3], a, 0.1)
        b, _ = step_vprkmk(free, pairs[3], b, 0.1)
        np.testing.assert_allclose(a.g, b.g, atol=1e-13)
        np.testing.assert_allclose(a.mu, b.mu, atol=1e-13)


def test_lie_holonomic_flat_group_matches_rattle(pairs):
    # the pendulum on the abelian translation group runs through the full
    # holonomic group machinery and must match the classic scheme
    grp = FlatRn(2)
    sys = LieHolonomicSystem(
        name="flat-pend", group=grp, m=1,
        ell=lambda g, e: 0.5 * float(e @ e) - FlatRn.coords(g)[1],
        d1l_triv=lambda g, e: np.array([0.0, -1.0]),
        d2l=lambda g, e: np.asarray(e, dtype=float).copy(),
        phi_g=lambda g: np.array([FlatRn.coords(g) @ FlatRn.coords(g) - 1.0]),
        dphi_triv=lambda g: 2.0 * FlatRn.coords(g)[None, :],
        metric=np.eye(2),
    )
    grad_v = lambda q: np.array([0.0, 1.0])                      # noqa: E731
    cons = lambda q: np.array([q @ q - 1.0])                     # noqa: E731
    cons_grad = lambda q: 2.0 * np.asarray(q, dtype=float)[None, :]  # noqa: E731
    q = np.array([1.0, 0.0])
    p = np.array([0.0, 0.3])
    state = make_lie_state(sys, FlatRn.point(q), p, np.zeros(1))
    for _ in range(15):
        q, p = rattle_step(grad_v, cons, cons_grad, q, p, 0.05)
        state, _ = step_lie_holonomic(sys, pairs[2], state, 0.05)
        np.testing.assert_allclose(FlatRn.coords(state.g), q, atol=1e-10)
        np.testing.assert_allclose(state.mu, p, atol=1e-10)


def test_ell_inverse_generic_newton_path():
    grp = SO3()
    metric = np.diag([1.0, 2.0, 3.0])
    sys = LieNHSystem(
        name="noncached", group=grp, m=0,
        ell=lambda g, e: 0.5 * float(e @ (metric @ e)),
        d1l_triv=lambda g, e: np.zeros(3),
        d2l=lambda g, e: metric @ np.asarray(e, dtype=float),
        phi=lambda g, e: np.empty(0),
        d2phi=lambda g, e: np.empty((0, 3)),
        metric=None,
    )
    mu = np.array([1.0, 2.0, 3.0])
    np.testing.assert_allclose(ell_inverse(sys, np.eye(3), mu), [1.0, 1.0, 1.0],
                               atol=1e-9)
