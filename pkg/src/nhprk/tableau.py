"""Butcher tableaux: Lobatto node generation, collocation coefficients,
symplectic conjugates, simplifying-assumption certificates and the
structural hypotheses needed by the constrained steppers.

Everything here is plain 64-bit floating point; the certification
tolerances absorb rounding for the stage counts this package targets.
"""

from dataclasses import dataclass

import numpy as np

from .errors import TableauError

STRUCT_TOL = 1e-12   # consistency / order-1 / symplecticity / hypothesis residuals
CERT_TOL = 1e-10     # simplifying-assumption certification
NODE_TOL = 1e-14     # Newton refinement target for quadrature nodes


class ButcherTableau:
    """One set of Runge-Kutta coefficients (a, b, c).

    Row-sum consistency and the order-1 condition are enforced at
    construction.  Consistency can be waived for tableaux that arise as
    symplectic conjugates: the 2-stage discontinuous-collocation partner
    violates the row-sum identity while still being a valid scheme.
    """

    def __init__(self, a, b, c, require_consistency=True):
        a = np.array(a, dtype=float)
        b = np.array(b, dtype=float)
        c = np.array(c, dtype=float)
        s = b.shape[0]
        if s < 2:
            raise TableauError(f"stage count must be >= 2, got {s}")
        if a.shape != (s, s) or c.shape != (s,):
            raise TableauError("inconsistent coefficient shapes")
        if c[0] < -STRUCT_TOL or c[-1] > 1 + STRUCT_TOL or np.any(np.diff(c) <= 0):
            raise TableauError("nodes must be strictly increasing inside [0, 1]")
        if abs(b.sum() - 1.0) > STRUCT_TOL:
            raise TableauError(f"order-1 condition violated: sum(b) = {b.sum()!r}")
        if require_consistency:
            resid = np.max(np.abs(a.sum(axis=1) - c))
            if resid > STRUCT_TOL:
                raise TableauError(f"row-sum consistency violated (residual {resid:.3e})")
        for arr in (a, b, c):
            arr.setflags(write=False)
        self.a = a
        self.b = b
        self.c = c

    @property
    def s(self):
        return self.b.shape[0]

    def consistency_residual(self):
        return float(np.max(np.abs(self.a.sum(axis=1) - self.c)))

    def order1_residual(self):
        return float(abs(self.b.sum() - 1.0))

    def __repr__(self):
        return f"ButcherTableau(s={self.s}, c={self.c.tolist()})"


def lobatto_nodes(s):
    """Nodes 0 = c_1 < ... < c_s = 1 of the Lobatto quadrature rule.

    The interior nodes are the zeros of the derivative of the degree-(s-1)
    Legendre polynomial, located via the symmetric tridiagonal eigenproblem
    of the associated weight and Newton-refined to 1e-14.
    """
    if not isinstance(s, (int, np.integer)):
        raise TableauError(f"stage count must be an integer, got {s!r}")
    if s < 2:
        raise TableauError(f"stage count must be >= 2, got {s}")
    if s == 2:
        return np.array([0.0, 1.0])
    deg = s - 1
    n_int = s - 2
    # Jacobi-matrix recurrence coefficients of the (1-t)(1+t) weight on [-1, 1]
    ks = np.arange(1, n_int, dtype=float)
    off = np.sqrt(ks * (ks + 2.0) / ((2.0 * ks + 1.0) * (2.0 * ks + 3.0)))
    jac = np.diag(off, 1) + np.diag(off, -1) if n_int > 1 else np.zeros((1, 1))
    t = np.sort(np.linalg.eigvalsh(jac))
    for _ in range(100):
        p, dp = _legendre_pair(deg, t)
        ddp = (2.0 * t * dp - deg * (deg + 1.0) * p) / (1.0 - t * t)
        delta = dp / ddp
        t = t - delta
        if np.max(np.abs(delta)) < 0.5 * NODE_TOL:
            break
    else:
        raise TableauError("node refinement did not converge")
    nodes = np.empty(s)
    nodes[0] = 0.0
    nodes[-1] = 1.0
    nodes[1:-1] = 0.5 * (t + 1.0)
    return nodes


def _legendre_pair(n, t):
    """Legendre P_n and P_n' evaluated by the three-term recurrence."""
    p0 = np.ones_like(t)
    p1 = t.copy()
    d0 = np.zeros_like(t)
    d1 = np.ones_like(t)
    for k in range(1, n):
        p2 = ((2 * k + 1) * t * p1 - k * p0) / (k + 1)
        d2 = d0 + (2 * k + 1) * p1
        p0, p1 = p1, p2
        d0, d1 = d1, d2
    return p1, d1


def tableau_from_collocation(c):
    """Continuous-collocation coefficients on distinct nodes c.

    a_ij and b_i are integrals of the Lagrange basis, computed by exact
    polynomial integration in monomial form.
    """
    c = np.array(c, dtype=float)
    s = c.shape[0]
    if s < 2:
        raise TableauError(f"need at least 2 nodes, got {s}")
    if np.any(c < -STRUCT_TOL) or np.any(c > 1 + STRUCT_TOL):
        raise TableauError("nodes must lie in [0, 1]")
    diffs = np.abs(c[:, None] - c[None, :]) + np.eye(s)
    if np.min(diffs) < 1e-12:
        raise TableauError("degenerate Lagrange basis: duplicate nodes")
    a = np.empty((s, s))
    b = np.empty(s)
    for j in range(s):
        others = np.delete(c, j)
        coeffs = np.poly(others) / np.prod(c[j] - others)
        antider = np.polyint(coeffs)
        a[:, j] = np.polyval(antider, c)
        b[j] = np.polyval(antider, 1.0)
    return ButcherTableau(a, b, c)


def symplectic_conjugate(t):
    """Partner coefficients forced by the partitioned symplecticity identity.

    Returns (ahat, bhat) with bhat = b and ahat_ij = b_j (1 - a_ji / b_i);
    the conjugate of a conjugate is the original tableau.
    """
    if np.any(np.abs(t.b) < 1e-14):
        raise TableauError("conjugate undefined: some weight b_i vanishes")
    ahat = t.b[None, :] * (1.0 - t.a.T / t.b[:, None])
    return ButcherTableau(ahat, t.b.copy(), t.c.copy(), require_consistency=False)


def symplecticity_residual(primal, dual):
    """max_ij |b_i ahat_ij + bhat_j a_ji - b_i bhat_j|."""
    b = primal.b
    bh = dual.b
    r = b[:, None] * dual.a + bh[None, :] * primal.a.T - b[:, None] * bh[None, :]
    return float(np.max(np.abs(r)))


# structural hypotheses used by the constrained steppers: the primal tableau
# must have a zero first row (h1), an invertible trailing block (h2) and a
# last row equal to the weights (h3, "stiffly accurate"); the dual must have
# a zero last column (h1p) and a first column pinned to its first weight (h2p).

def h1_residual(t):
    return float(np.max(np.abs(t.a[0, :])))


def h2_ok(t, tol=STRUCT_TOL):
    sub = t.a[1:, 1:]
    sv = np.linalg.svd(sub, compute_uv=False)
    return bool(sv[-1] > tol * max(1.0, sv[0]))


def h3_residual(t):
    return float(np.max(np.abs(t.a[-1, :] - t.b)))


def h1p_residual(t):
    return float(np.max(np.abs(t.a[:, -1])))


def h2p_residual(t):
    return float(np.max(np.abs(t.a[:, 0] - t.b[0])))


@dataclass(frozen=True)
class OrderCertificate:
    """Largest simplifying-assumption indices holding to CERT_TOL.

    p/q/r certify the quadrature, stage-order and adjoint conditions of the
    primal tableau, the hatted triple the dual.  The mixed indices follow the
    two-tableau compositions; they start at k = 2, so a reported value of 1
    means the first testable condition already fails.  r_inf records the
    amplification of the linear test problem at infinite step size.
    """

    p: int
    q: int
    r: int
    p_hat: int
    q_hat: int
    r_hat: int
    cc: int
    dd: int
    cc_hat: int
    dd_hat: int
    r_inf: float


def _index_b(b, c, kmax, tol):
    p = 0
    for k in range(1, kmax + 1):
        if abs(b @ c ** (k - 1) - 1.0 / k) <= tol:
            p = k
        else:
            break
    return p


def _index_c(a, c, kmax, tol):
    q = 0
    for k in range(1, kmax + 1):
        if np.max(np.abs(a @ c ** (k - 1) - c ** k / k)) <= tol:
            q = k
        else:
            break
    return q


def _index_d(a, b, c, kmax, tol):
    r = 0
    for k in range(1, kmax + 1):
        lhs = (b * c ** (k - 1)) @ a
        rhs = b * (1.0 - c ** k) / k
        if np.max(np.abs(lhs - rhs)) <= tol:
            r = k
        else:
            break
    return r


def _index_mixed_c(a1, a2, c, kmax, tol):
    out = 1
    for k in range(2, kmax + 1):
        lhs = a1 @ (a2 @ c ** (k - 2))
        rhs = c ** k / (k * (k - 1))
        if np.max(np.abs(lhs - rhs)) <= tol:
            out = k
        else:
            break
    return out


def _index_mixed_d(b, a1, a2, c, kmax, tol):
    out = 1
    for k in range(2, kmax + 1):
        lhs = ((b * c ** (k - 2)) @ a1) @ a2
        rhs = b * ((k - 1) - (k * c - c ** k)) / (k * (k - 1))
        if np.max(np.abs(lhs - rhs)) <= tol:
            out = k
        else:
            break
    return out


def stability_at_infinity(t):
    """Limit of the linear-test amplification factor as the step blows up.

    The amplification is a rational function of z; its numerator and
    denominator determinants are interpolated exactly on a small grid and the
    limit read off the polynomial degrees.  Raises when the numerator degree
    exceeds the denominator degree (the limit does not exist).
    """
    s = t.s
    eye = np.eye(s)
    ones = np.ones(s)
    zs = np.arange(s + 1, dtype=float) - s / 2.0
    num = np.array([np.linalg.det(eye - z * t.a + z * np.outer(ones, t.b)) for z in zs])
    den = np.array([np.linalg.det(eye - z * t.a) for z in zs])
    pnum = np.polyfit(zs, num, s)
    pden = np.polyfit(zs, den, s)

    def _degree_and_lead(coeffs):
        scale = max(1.0, float(np.max(np.abs(coeffs))))
        for i, cf in enumerate(coeffs):
            if abs(cf) > 1e-9 * scale:
                return len(coeffs) - 1 - i, cf
        return -1, 0.0

    dn, ln = _degree_and_lead(pnum)
    dd, ld = _degree_and_lead(pden)
    if dn > dd:
        raise TableauError("stability limit undefined: amplification grows at infinity")
    if dn < dd:
        return 0.0
    return float(ln / ld)


class PartitionedTableau:
    """A symplectically conjugate coefficient pair plus its certificate.

    ``lobatto=True`` additionally enforces the structural hypotheses: the
    pair then supports the constrained steppers (position constraints can be
    imposed at interior stages and the end stage reproduces the step point).
    """

    def __init__(self, primal, dual, cert=None, lobatto=False, kmax=None):
        if primal.s != dual.s:
            raise TableauError("stage counts differ between the pair")
        if np.max(np.abs(primal.b - dual.b)) > STRUCT_TOL:
            raise TableauError("weights of the pair must coincide")
        resid = symplecticity_residual(primal, dual)
        if resid > STRUCT_TOL:
            raise TableauError(f"symplecticity residual too large: {resid:.3e}")
        if lobatto:
            checks = {
                "H1": h1_residual(primal),
                "H3": h3_residual(primal),
                "H1'": h1p_residual(dual),
                "H2'": h2p_residual(dual),
            }
            for name, value in checks.items():
                if value > STRUCT_TOL:
                    raise TableauError(f"hypothesis {name} violated (residual {value:.3e})")
            if not h2_ok(primal):
                raise TableauError("hypothesis H2 violated: trailing block singular")
        self.primal = primal
        self.dual = dual
        self.lobatto = bool(lobatto)
        if cert is None:
            cert = certify(self, kmax if kmax is not None else 2 * primal.s)
        self.cert = cert

    @property
    def s(self):
        return self.primal.s

    def __repr__(self):
        return f"PartitionedTableau(s={self.s}, lobatto={self.lobatto})"


def certify(pair, kmax):
    """Measure the largest simplifying-assumption indices of a pair.

    All indices are capped at kmax and tested to CERT_TOL; the mixed
    conditions combine the two coefficient sets in both orders.
    """
    if kmax < 1:
        raise TableauError(f"kmax must be >= 1, got {kmax}")
    a, b, c = pair.primal.a, pair.primal.b, pair.primal.c
    ah, bh = pair.dual.a, pair.dual.b
    return OrderCertificate(
        p=_index_b(b, c, kmax, CERT_TOL),
        q=_index_c(a, c, kmax, CERT_TOL),
        r=_index_d(a, b, c, kmax, CERT_TOL),
        p_hat=_index_b(bh, c, kmax, CERT_TOL),
        q_hat=_index_c(ah, c, kmax, CERT_TOL),
        r_hat=_index_d(ah, bh, c, kmax, CERT_TOL),
        cc=_index_mixed_c(a, ah, c, kmax, CERT_TOL),
        dd=_index_mixed_d(b, a, ah, c, kmax, CERT_TOL),
        cc_hat=_index_mixed_c(ah, a, c, kmax, CERT_TOL),
        dd_hat=_index_mixed_d(bh, ah, a, c, kmax, CERT_TOL),
        r_inf=stability_at_infinity(pair.primal),
    )


def lobatto_pair(s):
    """The continuous/discontinuous collocation pair on the Lobatto nodes."""
    primal = tableau_from_collocation(lobatto_nodes(s))
    dual = symplectic_conjugate(primal)
    return PartitionedTableau(primal, dual, lobatto=True)
