"""The bundled example systems with their exact definitions, default
initial data and diagnostic functionals.

Every default initial state satisfies its constraint to machine precision.
Parameter choices the literature leaves open (masses, initial states,
inertia scale) are documented defaults, all overridable per run.
"""

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ConfigError
from .liegroup import SE2, SO3R2
from .prk_lie import LieNHSystem
from .mechanics import VecNHSystem


@dataclass(frozen=True)
class SystemEntry:
    """One catalog entry: the problem, its defaults and its diagnostics.

    Diagnostics are functionals of (q, v) or (g, eta) depending on kind.
    """

    name: str
    kind: str                          # "vector" | "lie"
    system: object
    params: dict
    initial: tuple                     # (q0, v0) or (g0, eta0)
    state_labels: list
    diagnostics: dict = field(default_factory=dict)
    presets: dict = field(default_factory=dict)
    member_initial: Optional[Callable] = None
    pose_coords: Optional[Callable] = None        # lie only: group -> label values
    pose_from_coords: Optional[Callable] = None   # lie only: coordinate vector -> group


def nonholonomic_particle():
    """Point mass in a quadratic planar potential with the classic
    velocity constraint v_z = y v_x.

    Default initial state (0,1,0), (1,0,1): constraint-consistent since
    v_z = y * v_x = 1; the reference gives none.
    """

    def lagrangian(q, v):
        return 0.5 * float(v @ v) - 0.5 * (q[0] ** 2 + q[1] ** 2)

    def d1l(q, v):
        return np.array([-q[0], -q[1], 0.0])

    def d2l(q, v):
        return np.asarray(v, dtype=float).copy()

    def phi(q, v):
        return np.array([v[2] - q[1] * v[0]])

    def d1phi(q, v):
        return np.array([[0.0, -v[0], 0.0]])

    def d2phi(q, v):
        return np.array([[-q[1], 0.0, 1.0]])

    sys = VecNHSystem(
        name="particle", n=3, m=1,
        lagrangian=lagrangian, d1l=d1l, d2l=d2l,
        phi=phi, d1phi=d1phi, d2phi=d2phi,
        d22l=lambda q, v: np.eye(3),
        core_kernel=("particle", ()),
    )
    q0 = np.array([0.0, 1.0, 0.0])
    v0 = np.array([1.0, 0.0, 1.0])
    from .mechanics import energy
    return SystemEntry(
        name="particle", kind="vector", system=sys, params={},
        initial=(q0, v0),
        state_labels=["x", "y", "z"],
        diagnostics={"energy": lambda q, v: energy(sys, q, v)},
    )


def cvt(epsilon=0.5, preset="low"):
    """Pendulum-driven transmission: an oscillator pair coupled to a
    pendulum through the velocity constraint v_z = -sin(y) v_x.

    Diagnostics split the total energy into the pendulum (driver) part and
    the oscillator (passenger) part.
    """

    eps = float(epsilon)

    def potential(q):
        return 0.5 * (q[0] ** 2 + q[2] ** 2 - 2.0 * math.cos(q[1])
                      + eps * math.sin(2.0 * q[1]))

    def lagrangian(q, v):
        return 0.5 * float(v @ v) - potential(q)

    def d1l(q, v):
        return np.array([
            -q[0],
            -(math.sin(q[1]) + eps * math.cos(2.0 * q[1])),
            -q[2],
        ])

    def d2l(q, v):
        return np.asarray(v, dtype=float).copy()

    def phi(q, v):
        return np.array([v[2] + math.sin(q[1]) * v[0]])

    def d1phi(q, v):
        return np.array([[0.0, math.cos(q[1]) * v[0], 0.0]])

    def d2phi(q, v):
        return np.array([[math.sin(q[1]), 0.0, 1.0]])

    sys = VecNHSystem(
        name="cvt", n=3, m=1,
        lagrangian=lagrangian, d1l=d1l, d2l=d2l,
        phi=phi, d1phi=d1phi, d2phi=d2phi,
        d22l=lambda q, v: np.eye(3),
        core_kernel=("cvt", (eps,)),
    )

    def e_driver(q, v):
        return 0.5 * v[1] ** 2 - math.cos(q[1]) + 0.5 * eps * math.sin(2.0 * q[1])

    def e_passenger(q, v):
        return 0.5 * (v[0] ** 2 + v[2] ** 2) + 0.5 * (q[0] ** 2 + q[2] ** 2)

    presets = {
        "low": (np.array([1.0, 0.0, 1.0]), np.array([0.0, 3.0 * math.sqrt(10.0) / 5.0, 0.0])),
        "high": (np.array([1.0, 0.0, 1.0]), np.array([0.0, math.sqrt(8.0), 0.0])),
    }
    if preset not in presets:
        raise ConfigError(f"unknown cvt preset {preset!r}; use one of {sorted(presets)}")
    return SystemEntry(
        name="cvt", kind="vector", system=sys,
        params={"epsilon": eps},
        initial=presets[preset],
        presets=presets,
        state_labels=["x", "y", "z"],
        diagnostics={
            "E_d": e_driver,
            "E_p": e_passenger,
            "E_T": lambda q, v: e_driver(q, v) + e_passenger(q, v),
        },
    )


def chaotic(m=3):
    """Coupled-oscillator system on R^(2m+1) whose energy performs a random
    walk under non-energy-preserving discretizations.

    Ensemble members j = 0..J share the energy level through
    alpha^2 + beta^2 = 1.
    """

    mm = int(m)
    if mm < 2:
        raise ConfigError(f"chaotic system needs m >= 2, got {mm}")
    n = 2 * mm + 1

    def potential(q):
        out = 0.5 * float(q @ q)
        out += 0.5 * q[mm + 1] ** 2 * q[mm + 2] ** 2
        for i in range(1, mm + 1):
            out += 0.5 * q[i] ** 2 * q[mm + i] ** 2
        return out

    def grad_potential(q):
        g = np.asarray(q, dtype=float).copy()
        g[mm + 1] += q[mm + 1] * q[mm + 2] ** 2
        g[mm + 2] += q[mm + 2] * q[mm + 1] ** 2
        for i in range(1, mm + 1):
            g[i] += q[i] * q[mm + i] ** 2
            g[mm + i] += q[mm + i] * q[i] ** 2
        return g

    def lagrangian(q, v):
        return 0.5 * float(v @ v) - potential(q)

    def d1l(q, v):
        return -grad_potential(q)

    def d2l(q, v):
        return np.asarray(v, dtype=float).copy()

    def phi(q, v):
        return np.array([v[0] + float(q[mm + 1:] @ v[mm + 1:])])

    def d1phi(q, v):
        row = np.zeros(n)
        row[mm + 1:] = v[mm + 1:]
        return row[None, :]

    def d2phi(q, v):
        row = np.zeros(n)
        row[0] = 1.0
        row[mm + 1:] = q[mm + 1:]
        return row[None, :]

    sys = VecNHSystem(
        name="chaotic", n=n, m=1,
        lagrangian=lagrangian, d1l=d1l, d2l=d2l,
        phi=phi, d1phi=d1phi, d2phi=d2phi,
        d22l=lambda q, v: np.eye(n),
        core_kernel=("chaotic", (mm,)),
    )

    def member_initial(j, big_j):
        # alpha^2 + beta^2 = 1 puts every member on one energy level; the
        # inner block (0.6, 0.4, 0.2) generalizes as an even spacing
        alpha = math.cos(j * math.pi / (2.0 * big_j))
        beta = math.sin(j * math.pi / (2.0 * big_j))
        q0 = np.ones(n)
        q0[0] = alpha
        q0[1:mm + 1] = np.linspace(0.6, 0.2, mm)
        v0 = np.zeros(n)
        v0[1] = beta
        return q0, v0

    from .mechanics import energy
    return SystemEntry(
        name="chaotic", kind="vector", system=sys,
        params={"m": float(mm)},
        initial=member_initial(0, 20),
        state_labels=[f"q{i + 1}" for i in range(n)],
        diagnostics={"energy": lambda q, v: energy(sys, q, v)},
        member_initial=member_initial,
    )


def unicycle(m=1.0, I_z=1.0):
    """Vertical rolling disc bound to the origin by a spring, written on the
    planar motion group with body velocities (v1, v2, omega); the rolling
    constraint kills the transverse body velocity v2.

    Mass and spin inertia default to 1 (the reference leaves them open).
    """

    group = SE2()
    mass = float(m)
    iz = float(I_z)
    metric = np.diag([mass, mass, iz])

    def ell(g, eta):
        x, y = g[0, 2], g[1, 2]
        return 0.5 * float(eta @ (metric @ eta)) - 0.5 * (x * x + y * y)

    def d1l_triv(g, eta):
        rot = g[:2, :2]
        grad_xy = rot.T @ np.array([g[0, 2], g[1, 2]])
        return np.array([-grad_xy[0], -grad_xy[1], 0.0])

    def d2l(g, eta):
        return metric @ np.asarray(eta, dtype=float)

    def phi(g, eta):
        return np.array([eta[1]])

    def d2phi(g, eta):
        return np.array([[0.0, 1.0, 0.0]])

    sys = LieNHSystem(
        name="unicycle", group=group, m=1,
        ell=ell, d1l_triv=d1l_triv, d2l=d2l,
        phi=phi, d2phi=d2phi, metric=metric,
    )
    g0 = SE2.from_coords(1.0, 0.5, math.pi / 6.0)
    eta0 = np.array([0.4, 0.0, 0.3])

    def pose_coords(g):
        return list(SE2.coords(g))

    def pose_from_coords(vals):
        if len(vals) != 3:
            raise ConfigError("unicycle pose needs (x, y, theta)")
        return SE2.from_coords(vals[0], vals[1], vals[2])

    from .prk_lie import lie_energy
    return SystemEntry(
        name="unicycle", kind="lie", system=sys,
        params={"m": mass, "I_z": iz},
        initial=(g0, eta0),
        state_labels=["x", "y", "theta"],
        diagnostics={"energy": lambda g, eta: lie_energy(sys, g, eta)},
        pose_coords=pose_coords,
        pose_from_coords=pose_from_coords,
    )


def ball_on_turntable(r=1.0, Omega=1.0, a=0.4, b=0.4, c=0.4, half_cross_term=0.0):
    """Ball rolling without slipping on a uniformly rotating table, written
    on the product of the rotation group with the contact plane; algebra
    coordinates (w_xi, w_eta, w_zeta, u_x, u_y).

    Defaults model a homogeneous solid ball (a = b = c = 2/5) of unit radius
    on a unit-rate table.  half_cross_term toggles a 1/2 factor on the
    quadratic table term of the moving-energy diagnostic (kept available
    because the printed form lacks it; the printed form is what holds).
    """

    group = SO3R2()
    rr, om = float(r), float(Omega)
    aa, bb, cc = float(a), float(b), float(c)
    metric = np.diag([aa * rr * rr, bb * rr * rr, cc * rr * rr, 1.0, 1.0])
    half = float(half_cross_term)

    def ell(g, eta):
        return 0.5 * float(eta @ (metric @ eta))

    def d1l_triv(g, eta):
        return np.zeros(5)

    def d2l(g, eta):
        return metric @ np.asarray(eta, dtype=float)

    def phi(g, eta):
        x, y = g[3, 5], g[4, 5]
        return np.array([
            eta[3] + om * y - rr * eta[1],
            eta[4] - om * x + rr * eta[0],
        ])

    def d2phi(g, eta):
        return np.array([
            [0.0, -rr, 0.0, 1.0, 0.0],
            [rr, 0.0, 0.0, 0.0, 1.0],
        ])

    sys = LieNHSystem(
        name="ball", group=group, m=2,
        ell=ell, d1l_triv=d1l_triv, d2l=d2l,
        phi=phi, d2phi=d2phi, metric=metric,
    )

    x0, y0 = 0.4, 0.2
    w0 = np.array([0.3, 0.5, 0.7])
    u0 = np.array([rr * w0[1] - om * y0, -rr * w0[0] + om * x0])
    g0 = SO3R2.from_coords(np.eye(3), [x0, y0])
    eta0 = np.concatenate([w0, u0])

    def spin(g, eta):
        return eta[2]

    def integral_x(g, eta):
        return rr * eta[0] - om / (1.0 + aa) * g[3, 5]

    def integral_y(g, eta):
        return rr * eta[1] - om / (1.0 + aa) * g[4, 5]

    def moving_energy(g, eta):
        x, y = g[3, 5], g[4, 5]
        quad = 1.0 if half == 0.0 else 0.5
        return (0.5 * (eta[3] ** 2 + eta[4] ** 2)
                + 0.5 * aa * rr * rr * (eta[0] ** 2 + eta[1] ** 2 + eta[2] ** 2)
                + rr * om * (x * eta[0] + y * eta[1])
                - quad * om * om * (x * x + y * y))

    def pose_coords(g):
        rot, xy = SO3R2.coords(g)
        return [xy[0], xy[1]] + [float(v) for v in rot.ravel()]

    def pose_from_coords(vals):
        if len(vals) == 2:
            return SO3R2.from_coords(np.eye(3), vals)
        if len(vals) == 11:
            return SO3R2.from_coords(np.array(vals[2:]).reshape(3, 3), vals[:2])
        raise ConfigError("ball pose needs (x, y) or (x, y, 9 rotation entries)")

    from .prk_lie import lie_energy
    return SystemEntry(
        name="ball", kind="lie", system=sys,
        params={"r": rr, "Omega": om, "a": aa, "b": bb, "c": cc,
                "half_cross_term": half},
        initial=(g0, eta0),
        state_labels=["x", "y", "r11", "r12", "r13", "r21", "r22", "r23",
                      "r31", "r32", "r33"],
        diagnostics={
            "energy": lambda g, eta: lie_energy(sys, g, eta),
            "I_spin": spin,
            "I_x": integral_x,
            "I_y": integral_y,
            "E_moving": moving_energy,
        },
        pose_coords=pose_coords,
        pose_from_coords=pose_from_coords,
    )


_FACTORIES = {
    "particle": nonholonomic_particle,
    "cvt": cvt,
    "chaotic": chaotic,
    "unicycle": unicycle,
    "ball": ball_on_turntable,
}

_PARAM_NAMES = {
    "particle": set(),
    "cvt": {"epsilon"},
    "chaotic": {"m"},
    "unicycle": {"m", "I_z"},
    "ball": {"r", "Omega", "a", "b", "c", "half_cross_term"},
}


def catalog():
    return dict(_FACTORIES)


def build(name, params=None, preset=None):
    """Instantiate a catalog system with parameter overrides."""
    if name not in _FACTORIES:
        raise ConfigError(f"unknown system {name!r}; use one of {sorted(_FACTORIES)}")
    params = dict(params or {})
    unknown = set(params) - _PARAM_NAMES[name]
    if unknown:
        raise ConfigError(f"unknown parameter(s) {sorted(unknown)} for system {name!r}")
    if name == "chaotic" and "m" in params:
        params["m"] = int(params["m"])
    if name == "cvt" and preset is not None:
        params["preset"] = preset
    entry = _FACTORIES[name](**params)
    if preset is not None and name != "cvt":
        raise ConfigError(f"system {name!r} has no initial-state presets")
    return entry
