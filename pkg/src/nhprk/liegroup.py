"""Matrix Lie group machinery: descriptors for the rotation/planar-motion
groups and their product with a flat factor, plus retractions (exponential
and Cayley) with left-trivialized tangents, their inverses and the
second-order tangent needed by the group steppers.

Algebra elements cross the API as coordinate vectors; matrices stay
internal.  The product group embeds block-diagonally, so one generic code
path serves every group here and automatically acts componentwise on
products.  Basis-sandwich constructions (tangent matrices, adjoints) are
batched over the hat basis: every group here has a vee that reads single
matrix entries, recorded as index arrays.
"""

import numpy as np

from .errors import RetractionDomainError

RETRACTION_DOMAIN = 1.0  # inverse retractions are only local diffeomorphisms


class MatrixGroup:
    """Descriptor interface: hat/vee plus composition and adjoint actions."""

    name = "group"
    mat_dim = 0
    k = 0
    _vee_rows = None   # vee(mat) = mat[_vee_rows, _vee_cols]
    _vee_cols = None
    _hat_basis = None  # (k, d, d) stack of hat(e_j)

    def hat(self, vec):
        raise NotImplementedError

    def vee(self, mat):
        return mat[self._vee_rows, self._vee_cols]

    def hat_basis(self):
        if self._hat_basis is None:
            k = self.k
            basis = np.zeros((k, self.mat_dim, self.mat_dim))
            for j in range(k):
                e = np.zeros(k)
                e[j] = 1.0
                basis[j] = self.hat(e)
            type(self)._hat_basis = basis
        return self._hat_basis

    def vee_batch(self, mats):
        """vee of a (k, d, d) stack, returned as the k x k coordinate matrix
        whose j-th column is vee(mats[j])."""
        return mats[:, self._vee_rows, self._vee_cols].T

    def identity(self):
        return np.eye(self.mat_dim)

    def compose(self, g1, g2):
        return g1 @ g2

    def inverse(self, g):
        return np.linalg.inv(g)

    def inverse_batch(self, gs):
        return np.stack([self.inverse(gs[i]) for i in range(gs.shape[0])])

    def ad(self, vec):
        """Matrix of the algebra bracket ad_xi acting on coordinates."""
        xi = self.hat(vec)
        basis = self.hat_basis()
        return self.vee_batch(xi @ basis - basis @ xi)

    def Ad(self, g):
        """Matrix of the group adjoint action on coordinates."""
        ginv = self.inverse(g)
        return self.vee_batch(g @ self.hat_basis() @ ginv)

    def coadjoint(self, g, mu):
        """Pairing-dual action: <coadjoint(g, mu), eta> = <mu, Ad(g) eta>."""
        return self.Ad(g).T @ np.asarray(mu, dtype=float)

    def exp(self, vec):
        raise NotImplementedError

    def log(self, g):
        raise NotImplementedError


def _unit(k, j):
    e = np.zeros(k)
    e[j] = 1.0
    return e


class SO3(MatrixGroup):
    name = "so3"
    mat_dim = 3
    k = 3
    _vee_rows = np.array([2, 0, 1])
    _vee_cols = np.array([1, 2, 0])

    def hat(self, vec):
        x, y, z = vec
        return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])

    def inverse(self, g):
        return g.T

    def inverse_batch(self, gs):
        return gs.transpose(0, 2, 1)

    def exp(self, vec):
        """Rodrigues' rotation formula."""
        vec = np.asarray(vec, dtype=float)
        theta = np.linalg.norm(vec)
        xi = self.hat(vec)
        if theta < 1e-12:
            return np.eye(3) + xi + 0.5 * (xi @ xi)
        return (np.eye(3) + np.sin(theta) / theta * xi
                + (1.0 - np.cos(theta)) / theta ** 2 * (xi @ xi))

    def log(self, g):
        cos_t = 0.5 * (np.trace(g) - 1.0)
        theta = np.arccos(np.clip(cos_t, -1.0, 1.0))
        skew = 0.5 * (g - g.T)
        if theta < 1e-8:
            return self.vee(skew)
        return self.vee(theta / np.sin(theta) * skew)


class SE2(MatrixGroup):
    """Planar motions as 3x3 homogeneous matrices; coordinates (v1, v2, omega)."""

    name = "se2"
    mat_dim = 3
    k = 3
    _vee_rows = np.array([0, 1, 1])
    _vee_cols = np.array([2, 2, 0])

    def hat(self, vec):
        v1, v2, w = vec
        return np.array([[0.0, -w, v1], [w, 0.0, v2], [0.0, 0.0, 0.0]])

    def inverse(self, g):
        out = np.eye(3)
        rot = g[:2, :2]
        out[:2, :2] = rot.T
        out[:2, 2] = -rot.T @ g[:2, 2]
        return out

    def exp(self, vec):
        """Planar rotation with the exact translation integral."""
        v1, v2, w = vec
        g = np.eye(3)
        cw, sw = np.cos(w), np.sin(w)
        g[0, 0], g[0, 1], g[1, 0], g[1, 1] = cw, -sw, sw, cw
        if abs(w) < 1e-8:
            sa = 1.0 - w * w / 6.0
            sb = w / 2.0 - w ** 3 / 24.0
        else:
            sa = sw / w
            sb = (1.0 - cw) / w
        g[0, 2] = sa * v1 - sb * v2
        g[1, 2] = sb * v1 + sa * v2
        return g

    def log(self, g):
        w = np.arctan2(g[1, 0], g[0, 0])
        if abs(w) < 1e-8:
            sa = 1.0 - w * w / 6.0
            sb = w / 2.0 - w ** 3 / 24.0
        else:
            sa = np.sin(w) / w
            sb = (1.0 - np.cos(w)) / w
        vmat = np.array([[sa, -sb], [sb, sa]])
        t = np.linalg.solve(vmat, g[:2, 2])
        return np.array([t[0], t[1], w])

    @staticmethod
    def coords(g):
        """(x, y, theta) of a group element."""
        return float(g[0, 2]), float(g[1, 2]), float(np.arctan2(g[1, 0], g[0, 0]))

    @staticmethod
    def from_coords(x, y, theta):
        c, s = np.cos(theta), np.sin(theta)
        return np.array([[c, -s, x], [s, c, y], [0.0, 0.0, 1.0]])


class SO3R2(MatrixGroup):
    """Product of the rotation group with a flat plane, embedded 6x6
    block-diagonally; coordinates (omega_1, omega_2, omega_3, u_x, u_y)."""

    name = "so3xr2"
    mat_dim = 6
    k = 5
    _so3 = SO3()
    _vee_rows = np.array([2, 0, 1, 3, 4])
    _vee_cols = np.array([1, 2, 0, 5, 5])

    def hat(self, vec):
        out = np.zeros((6, 6))
        out[:3, :3] = self._so3.hat(vec[:3])
        out[3, 5] = vec[3]
        out[4, 5] = vec[4]
        return out

    def inverse(self, g):
        out = np.eye(6)
        out[:3, :3] = g[:3, :3].T
        out[3:5, 5] = -g[3:5, 5]
        return out

    def inverse_batch(self, gs):
        out = np.tile(np.eye(6), (gs.shape[0], 1, 1))
        out[:, :3, :3] = gs[:, :3, :3].transpose(0, 2, 1)
        out[:, 3:5, 5] = -gs[:, 3:5, 5]
        return out

    def exp(self, vec):
        out = np.eye(6)
        out[:3, :3] = self._so3.exp(vec[:3])
        out[3, 5] = vec[3]
        out[4, 5] = vec[4]
        return out

    def log(self, g):
        return np.concatenate([self._so3.log(g[:3, :3]), g[3:5, 5]])

    @staticmethod
    def coords(g):
        """(rotation block, (x, y)) of a group element."""
        return g[:3, :3], g[3:5, 5].copy()

    @staticmethod
    def from_coords(rot, xy):
        out = np.eye(6)
        out[:3, :3] = rot
        out[3:5, 5] = np.asarray(xy, dtype=float)
        return out


class FlatRn(MatrixGroup):
    """The abelian translation group of R^n, embedded (n+1) x (n+1).

    Every retraction collapses to plain translation here, which reduces the
    group steppers to their vector-space counterparts.
    """

    def __init__(self, n):
        self.n = n
        self.name = f"r{n}"
        self.mat_dim = n + 1
        self.k = n
        self._vee_rows = np.arange(n)
        self._vee_cols = np.full(n, n)
        self._hat_basis = None

    def hat_basis(self):
        # instance-level cache: the dimension is an instance property here
        if self._hat_basis is None:
            basis = np.zeros((self.k, self.mat_dim, self.mat_dim))
            for j in range(self.k):
                basis[j, j, self.n] = 1.0
            self._hat_basis = basis
        return self._hat_basis

    def hat(self, vec):
        out = np.zeros((self.mat_dim, self.mat_dim))
        out[:self.n, self.n] = vec
        return out

    def inverse(self, g):
        out = np.eye(self.mat_dim)
        out[:self.n, self.n] = -g[:self.n, self.n]
        return out

    def inverse_batch(self, gs):
        out = np.tile(np.eye(self.mat_dim), (gs.shape[0], 1, 1))
        out[:, :self.n, self.n] = -gs[:, :self.n, self.n]
        return out

    def exp(self, vec):
        out = np.eye(self.mat_dim)
        out[:self.n, self.n] = vec
        return out

    def log(self, g):
        return g[:self.n, self.n].copy()

    @staticmethod
    def point(vec):
        vec = np.asarray(vec, dtype=float)
        out = np.eye(vec.shape[0] + 1)
        out[:-1, -1] = vec
        return out

    @staticmethod
    def coords(g):
        return g[:-1, -1].copy()


class Retraction:
    """Local chart tau: algebra -> group with its trivialized tangents.

    dtau/dtau_inv return k x k matrices acting on algebra coordinates;
    ddtau_matrix(xi, eta) is the matrix in the direction argument of the
    second trivialized tangent.  Increments are rejected beyond the
    domain bound since the inverse is only a local diffeomorphism.
    """

    def __init__(self, group, kind="cay"):
        if kind not in ("cay", "exp"):
            raise ValueError(f"unknown retraction kind {kind!r}")
        self.group = group
        self.kind = kind

    def _guard(self, vec):
        norm = float(np.max(np.abs(vec))) if len(vec) else 0.0
        if norm > RETRACTION_DOMAIN:
            raise RetractionDomainError(
                f"algebra increment {norm:.3e} outside the retraction domain; "
                "reduce the step size")

    def tau(self, vec):
        self._guard(vec)
        if self.kind == "exp":
            return self.group.exp(vec)
        xi = self.group.hat(vec)
        eye = np.eye(self.group.mat_dim)
        return np.linalg.solve(eye - 0.5 * xi, eye + 0.5 * xi)

    def tau_inv(self, g):
        if self.kind == "exp":
            out = self.group.log(g)
        else:
            eye = np.eye(self.group.mat_dim)
            out = self.group.vee(2.0 * np.linalg.solve((g + eye).T, (g - eye).T).T)
        self._guard(out)
        return out

    def dtau(self, vec):
        self._guard(vec)
        if self.kind == "exp":
            return _dexp_series(self.group.ad(vec))
        g = self.group
        xi = g.hat(vec)
        eye = np.eye(g.mat_dim)
        plus_inv = np.linalg.inv(eye + 0.5 * xi)
        minus_inv = np.linalg.inv(eye - 0.5 * xi)
        return g.vee_batch(plus_inv @ g.hat_basis() @ minus_inv)

    def dtau_inv(self, vec):
        self._guard(vec)
        if self.kind == "exp":
            return np.linalg.inv(_dexp_series(self.group.ad(vec)))
        g = self.group
        xi = g.hat(vec)
        eye = np.eye(g.mat_dim)
        return g.vee_batch((eye + 0.5 * xi) @ g.hat_basis() @ (eye - 0.5 * xi))

    def ddtau(self, vec, eta, delta):
        return self.ddtau_matrix(vec, eta) @ np.asarray(delta, dtype=float)

    def ddtau_matrix(self, vec, eta):
        """Matrix D with dd tau_xi(eta, delta) = D delta."""
        self._guard(vec)
        g = self.group
        if self.kind == "exp":
            return _ddexp_matrix(g, vec, eta)
        xi = g.hat(vec)
        eye = np.eye(g.mat_dim)
        dmat = g.hat(self.dtau(vec) @ np.asarray(eta, dtype=float))
        left = (eye + 0.5 * xi) @ dmat
        right = dmat @ (eye - 0.5 * xi)
        basis = g.hat_basis()
        return g.vee_batch(0.5 * (left @ basis - basis @ right))

    def step_geometry(self, xis, xi_n, etas):
        """All retraction data one stepper residual needs, in one batched
        pass over the stage increments plus the step increment.

        Returns a dict with the stage tensors (taus, t, tinv_neg, dd,
        adstar) and the step-increment data (tau_n, tinv_n, tinv_neg_n,
        adstar_n).  dd matrices are taken at the paired stage velocity
        arguments etas.  The exponential retraction falls back to the
        per-increment formulas.
        """
        xis = np.asarray(xis, dtype=float)
        etas = np.asarray(etas, dtype=float)
        s = xis.shape[0]
        g = self.group
        if self.kind == "exp":
            self._guard(xi_n)
            for i in range(s):
                self._guard(xis[i])
            taus = np.stack([g.exp(xis[i]) for i in range(s)])
            tau_n = g.exp(xi_n)
            return {
                "taus": taus,
                "t": np.stack([self.dtau(xis[i]) for i in range(s)]),
                "tinv_neg": np.stack([self.dtau_inv(-xis[i]) for i in range(s)]),
                "dd": np.stack([self.ddtau_matrix(xis[i], etas[i]) for i in range(s)]),
                "adstar": ad_star_batch(g, taus),
                "tau_n": tau_n,
                "tinv_n": self.dtau_inv(xi_n),
                "tinv_neg_n": self.dtau_inv(-xi_n),
                "adstar_n": g.Ad(tau_n).T,
            }
        stack = np.concatenate([xis, xi_n[None, :]], axis=0)
        norm = float(np.max(np.abs(stack))) if stack.size else 0.0
        if norm > RETRACTION_DOMAIN:
            raise RetractionDomainError(
                f"algebra increment {norm:.3e} outside the retraction domain; "
                "reduce the step size")
        basis = g.hat_basis()
        eye = np.eye(g.mat_dim)
        xi_hat = np.tensordot(stack, basis, axes=(1, 0))        # (s+1, d, d)
        pmat = eye + 0.5 * xi_hat
        mmat = eye - 0.5 * xi_hat
        taus = np.linalg.solve(mmat, pmat)
        pinv = np.linalg.inv(pmat)
        minv = np.linalg.inv(mmat)
        t_all = _vee_stack(g, np.matmul(np.matmul(pinv[:, None], basis[None]),
                                        minv[:, None]))
        tinv_neg_all = _vee_stack(g, np.matmul(np.matmul(mmat[:, None], basis[None]),
                                               pmat[:, None]))
        vel = np.einsum("sij,sj->si", t_all[:s], etas)
        dmat = np.tensordot(vel, basis, axes=(1, 0))            # hat of stage velocity
        left = np.matmul(pmat[:s], dmat)
        right = np.matmul(dmat, mmat[:s])
        dd = _vee_stack(g, 0.5 * (np.matmul(left[:, None], basis[None])
                                  - np.matmul(basis[None], right[:, None])))
        adstar_all = ad_star_batch(g, taus)
        # tinv at +xi_n swaps the sandwich factors of the -xi_n formula
        tinv_n = g.vee_batch(pmat[s] @ basis @ mmat[s])
        return {
            "taus": taus[:s],
            "t": t_all[:s],
            "tinv_neg": tinv_neg_all[:s],
            "dd": dd,
            "adstar": adstar_all[:s],
            "tau_n": taus[s],
            "tinv_n": tinv_n,
            "tinv_neg_n": tinv_neg_all[s],
            "adstar_n": adstar_all[s],
        }


def _vee_stack(group, mats):
    """vee over a (s, k, d, d) stack -> (s, k, k) coordinate matrices whose
    j-th column comes from mats[:, j]."""
    extracted = mats[..., group._vee_rows, group._vee_cols]   # (s, k_col, k_row)
    return extracted.transpose(0, 2, 1)


def ad_star_batch(group, gs):
    """Coadjoint matrices (transposed adjoints) of a (s, d, d) stack."""
    ginv = group.inverse_batch(gs)
    basis = group.hat_basis()
    admats = _vee_stack(group, np.matmul(np.matmul(gs[:, None], basis[None]),
                                         ginv[:, None]))
    return admats.transpose(0, 2, 1)


def _dexp_series(admat, max_terms=30, tol=1e-17):
    """Left-trivialized tangent of the exponential from its bracket series."""
    k = admat.shape[0]
    out = np.eye(k)
    term = np.eye(k)
    for j in range(1, max_terms):
        term = term @ (-admat) / (j + 1.0)
        out = out + term
        if np.max(np.abs(term)) < tol:
            break
    return out


def _ddexp_matrix(group, vec, eta, max_terms=30, tol=1e-16):
    """Direction-argument matrix of the second tangent, by differentiating
    the truncated series and pulling back through the tangent itself."""
    k = group.k
    admat = group.ad(vec)
    eta = np.asarray(eta, dtype=float)
    dmat = np.zeros((k, k))
    powers = [np.eye(k)]
    for m in range(1, max_terms):
        powers.append(powers[-1] @ (-admat))
        if np.max(np.abs(powers[-1])) < tol:
            break
    for j in range(k):
        dadj = group.ad(_unit(k, j))
        acc = np.zeros(k)
        fact = 1.0
        for m in range(1, len(powers)):
            fact *= (m + 1.0)
            part = np.zeros(k)
            for r in range(m):
                part = part + powers[r] @ (-dadj) @ (powers[m - 1 - r] @ eta)
            acc = acc + part / fact
        dmat[:, j] = acc
    return np.linalg.solve(_dexp_series(admat), dmat)


GROUPS = {"so3": SO3(), "se2": SE2(), "so3xr2": SO3R2()}
