# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled stage-system kernels for the hot path.

Covers the Lagrangian-form nonholonomic stepper for the catalog's
vector-space systems, which all share one shape: unit mass matrix and
constraints linear in the velocity.  The Newton loop, forward-difference
Jacobian and the dense LU all run without leaving C.  Results match the
numpy implementation to solver tolerance; the equivalence is tested.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport cos, fabs, isfinite, sin, sqrt
from libc.stdlib cimport free, malloc

cnp.import_array()

cdef double SQRT_EPS = sqrt(2.220446049250313e-16)
cdef double PIVOT_TOL = 1e-14


cdef class VecKernel:
    """Unit-mass Lagrangian with potential V(q) and constraints W(q) v = 0."""

    cdef public int n
    cdef public int m

    cdef void grad_v(self, double* q, double* out) noexcept nogil:
        pass

    cdef void wrows(self, double* q, double* out) noexcept nogil:
        # out is m*n row-major
        pass

    cdef double potential(self, double* q) noexcept nogil:
        return 0.0


cdef class ParticleKernel(VecKernel):
    def __cinit__(self):
        self.n = 3
        self.m = 1

    cdef void grad_v(self, double* q, double* out) noexcept nogil:
        out[0] = q[0]
        out[1] = q[1]
        out[2] = 0.0

    cdef void wrows(self, double* q, double* out) noexcept nogil:
        out[0] = -q[1]
        out[1] = 0.0
        out[2] = 1.0

    cdef double potential(self, double* q) noexcept nogil:
        return 0.5 * (q[0] * q[0] + q[1] * q[1])


cdef class CvtKernel(VecKernel):
    cdef double eps

    def __cinit__(self, double eps):
        self.n = 3
        self.m = 1
        self.eps = eps

    cdef void grad_v(self, double* q, double* out) noexcept nogil:
        out[0] = q[0]
        out[1] = sin(q[1]) + self.eps * cos(2.0 * q[1])
        out[2] = q[2]

    cdef void wrows(self, double* q, double* out) noexcept nogil:
        out[0] = sin(q[1])
        out[1] = 0.0
        out[2] = 1.0

    cdef double potential(self, double* q) noexcept nogil:
        return 0.5 * (q[0] * q[0] + q[2] * q[2] - 2.0 * cos(q[1])
                      + self.eps * sin(2.0 * q[1]))


cdef class ChaoticKernel(VecKernel):
    cdef int mm

    def __cinit__(self, int mm):
        self.mm = mm
        self.n = 2 * mm + 1
        self.m = 1

    cdef void grad_v(self, double* q, double* out) noexcept nogil:
        cdef int i
        cdef int mm = self.mm
        for i in range(self.n):
            out[i] = q[i]
        out[mm + 1] += q[mm + 1] * q[mm + 2] * q[mm + 2]
        out[mm + 2] += q[mm + 2] * q[mm + 1] * q[mm + 1]
        for i in range(1, mm + 1):
            out[i] += q[i] * q[mm + i] * q[mm + i]
            out[mm + i] += q[mm + i] * q[i] * q[i]

    cdef void wrows(self, double* q, double* out) noexcept nogil:
        cdef int i
        out[0] = 1.0
        for i in range(1, self.mm + 1):
            out[i] = 0.0
        for i in range(self.mm + 1, self.n):
            out[i] = q[i]

    cdef double potential(self, double* q) noexcept nogil:
        cdef int i
        cdef int mm = self.mm
        cdef double out = 0.0
        for i in range(self.n):
            out += 0.5 * q[i] * q[i]
        out += 0.5 * q[mm + 1] * q[mm + 1] * q[mm + 2] * q[mm + 2]
        for i in range(1, mm + 1):
            out += 0.5 * q[i] * q[i] * q[mm + i] * q[mm + i]
        return out


def make_kernel(kind, args):
    if kind == "particle":
        return ParticleKernel()
    if kind == "cvt":
        return CvtKernel(args[0])
    if kind == "chaotic":
        return ChaoticKernel(args[0])
    raise ValueError(f"unknown kernel kind {kind!r}")


cdef struct Work:
    # scratch for one step solve; all slabs live in one malloc block
    double* q_stage      # s*n
    double* w_stage      # s*n
    double* wr           # s*m*n constraint rows at the stages
    double* p_stage      # s*n
    double* gv           # n
    double* res0         # d
    double* res1         # d
    double* jac          # d*d
    double* dx           # d
    double* xtry         # d
    int* piv             # d


cdef int _residual(VecKernel ker, int s, double[:, :] amat, double[:, :] ahat,
                   double h, double* qk, double* pk, double* lamk,
                   double* x, Work* wk, double* out) noexcept nogil:
    """out gets [momentum block, multiplier pin, stage constraints 2..s]."""
    cdef int n = ker.n
    cdef int m = ker.m
    cdef int i, j, col, arow
    cdef double acc
    cdef double* vst = x             # s*n stage velocities
    cdef double* lam = x + s * n     # s*m stage multipliers
    # stage positions
    for i in range(s):
        for col in range(n):
            acc = 0.0
            for j in range(s):
                acc += amat[i, j] * vst[j * n + col]
            wk.q_stage[i * n + col] = qk[col] + h * acc
    # stage forces with the constraint contribution
    for i in range(s):
        ker.grad_v(wk.q_stage + i * n, wk.gv)
        ker.wrows(wk.q_stage + i * n, wk.wr + i * m * n)
        for col in range(n):
            acc = -wk.gv[col]
            for arow in range(m):
                acc += lam[i * m + arow] * wk.wr[i * m * n + arow * n + col]
            wk.w_stage[i * n + col] = acc
    # momentum block: stage velocity equals the dual-coefficient momentum sum
    for i in range(s):
        for col in range(n):
            acc = 0.0
            for j in range(s):
                acc += ahat[i, j] * wk.w_stage[j * n + col]
            out[i * n + col] = vst[i * n + col] - pk[col] - h * acc
    # corrected stage momenta (unit mass: also the stage velocities)
    for i in range(s):
        for col in range(n):
            acc = 0.0
            for j in range(s):
                acc += amat[i, j] * wk.w_stage[j * n + col]
            wk.p_stage[i * n + col] = pk[col] + h * acc
    # first-stage multiplier is pinned to the incoming one
    for arow in range(m):
        out[s * n + arow] = lam[arow] - lamk[arow]
    # constraints at the remaining stages
    for i in range(1, s):
        for arow in range(m):
            acc = 0.0
            for col in range(n):
                acc += wk.wr[i * m * n + arow * n + col] * wk.p_stage[i * n + col]
            out[s * n + i * m + arow] = acc
    return 0


cdef int _lu_inplace(double* a, int* piv, int d, double scale) noexcept nogil:
    """Partial-pivoting LU; returns -1 when a pivot falls under tolerance."""
    cdef int i, j, k, imax
    cdef double maxval, tmp, inv
    for k in range(d):
        imax = k
        maxval = fabs(a[k * d + k])
        for i in range(k + 1, d):
            if fabs(a[i * d + k]) > maxval:
                maxval = fabs(a[i * d + k])
                imax = i
        if maxval < PIVOT_TOL * scale:
            return -1
        piv[k] = imax
        if imax != k:
            for j in range(d):
                tmp = a[k * d + j]
                a[k * d + j] = a[imax * d + j]
                a[imax * d + j] = tmp
        inv = 1.0 / a[k * d + k]
        for i in range(k + 1, d):
            a[i * d + k] *= inv
            tmp = a[i * d + k]
            for j in range(k + 1, d):
                a[i * d + j] -= tmp * a[k * d + j]
    return 0


cdef void _lu_backsolve(double* a, int* piv, double* b, int d) noexcept nogil:
    cdef int i, j
    cdef double acc, tmp
    for i in range(d):
        if piv[i] != i:
            tmp = b[i]
            b[i] = b[piv[i]]
            b[piv[i]] = tmp
    for i in range(d):
        acc = b[i]
        for j in range(i):
            acc -= a[i * d + j] * b[j]
        b[i] = acc
    for i in range(d - 1, -1, -1):
        acc = b[i]
        for j in range(i + 1, d):
            acc -= a[i * d + j] * b[j]
        b[i] = acc / a[i * d + i]


cdef int _newton(VecKernel ker, int s, double[:, :] amat, double[:, :] ahat,
                 double h, double* qk, double* pk, double* lamk,
                 double* x, Work* wk, double tol, int max_iters, double fd_step,
                 int* iters_out, double* resid_out) noexcept nogil:
    """0 converged, 1 not converged, 2 singular Jacobian, 3 non-finite."""
    cdef int n = ker.n
    cdef int m = ker.m
    cdef int d = s * (n + m)
    cdef int it, i, j
    cdef double norm, step, scale, xi
    _residual(ker, s, amat, ahat, h, qk, pk, lamk, x, wk, wk.res0)
    norm = 0.0
    for i in range(d):
        if not isfinite(wk.res0[i]):
            return 3
        if fabs(wk.res0[i]) > norm:
            norm = fabs(wk.res0[i])
    for it in range(max_iters + 1):
        if norm <= tol:
            iters_out[0] = it
            resid_out[0] = norm
            return 0
        if it == max_iters:
            break
        # forward-difference Jacobian, column by column
        for j in range(d):
            xi = x[j]
            step = fd_step * (1.0 if fabs(xi) < 1.0 else fabs(xi))
            for i in range(d):
                wk.xtry[i] = x[i]
            wk.xtry[j] = xi + step
            _residual(ker, s, amat, ahat, h, qk, pk, lamk, wk.xtry, wk, wk.res1)
            for i in range(d):
                wk.jac[i * d + j] = (wk.res1[i] - wk.res0[i]) / step
        scale = 1.0
        for i in range(d * d):
            if fabs(wk.jac[i]) > scale:
                scale = fabs(wk.jac[i])
        if _lu_inplace(wk.jac, wk.piv, d, scale) != 0:
            iters_out[0] = it + 1
            return 2
        for i in range(d):
            wk.dx[i] = -wk.res0[i]
        _lu_backsolve(wk.jac, wk.piv, wk.dx, d)
        for i in range(d):
            x[i] += wk.dx[i]
        _residual(ker, s, amat, ahat, h, qk, pk, lamk, x, wk, wk.res0)
        norm = 0.0
        for i in range(d):
            if not isfinite(wk.res0[i]):
                return 3
            if fabs(wk.res0[i]) > norm:
                norm = fabs(wk.res0[i])
    iters_out[0] = max_iters
    resid_out[0] = norm
    return 1


cdef Work* _alloc_work(int s, int n, int m):
    cdef int d = s * (n + m)
    cdef Work* wk = <Work*> malloc(sizeof(Work))
    if wk == NULL:
        return NULL
    wk.q_stage = <double*> malloc(sizeof(double) * (4 * s * n + s * m * n + n
                                                    + 2 * d + d * d + 2 * d))
    if wk.q_stage == NULL:
        free(wk)
        return NULL
    wk.w_stage = wk.q_stage + s * n
    wk.p_stage = wk.w_stage + s * n
    wk.wr = wk.p_stage + s * n
    wk.gv = wk.wr + s * m * n
    wk.res0 = wk.gv + n
    wk.res1 = wk.res0 + d
    wk.jac = wk.res1 + d
    wk.dx = wk.jac + d * d
    wk.xtry = wk.dx + d
    wk.piv = <int*> malloc(sizeof(int) * d)
    if wk.piv == NULL:
        free(wk.q_stage)
        free(wk)
        return NULL
    return wk


cdef void _free_work(Work* wk) noexcept:
    if wk != NULL:
        free(wk.q_stage)
        free(wk.piv)
        free(wk)


cdef double _constraint_max(VecKernel ker, int s, double* x, Work* wk) noexcept nogil:
    """Max |W(q_i) p_i| over all stages, from the last residual pass."""
    cdef int n = ker.n
    cdef int m = ker.m
    cdef int i, arow, col
    cdef double acc, best
    best = 0.0
    for i in range(s):
        for arow in range(m):
            acc = 0.0
            for col in range(n):
                acc += wk.wr[i * m * n + arow * n + col] * wk.p_stage[i * n + col]
            if fabs(acc) > best:
                best = fabs(acc)
    return best


def nh_lag_step(VecKernel ker, cnp.ndarray amat, cnp.ndarray ahat, cnp.ndarray bvec,
                double h, cnp.ndarray q, cnp.ndarray p, cnp.ndarray lam,
                double tol, int max_iters, double fd_step=SQRT_EPS):
    """One Lagrangian-form nonholonomic step; returns
    (q1, p1, lam1, iterations, residual, stage_constraint_max, converged)."""
    cdef double[:, :] a_mv = np.array(amat, dtype=np.float64, order='C')
    cdef double[:, :] ah_mv = np.array(ahat, dtype=np.float64, order='C')
    cdef double[:] b_mv = np.array(bvec, dtype=np.float64, order='C')
    cdef double[:] q_mv = np.array(q, dtype=np.float64, order='C')
    cdef double[:] p_mv = np.array(p, dtype=np.float64, order='C')
    cdef double[:] l_mv = np.array(lam, dtype=np.float64, order='C')
    cdef int s = a_mv.shape[0]
    cdef int n = ker.n
    cdef int m = ker.m
    cdef int d = s * (n + m)
    cdef cnp.ndarray x_arr = np.empty(d, dtype=np.float64)
    cdef double[:] x = x_arr
    cdef int i, col
    for i in range(s):
        for col in range(n):
            x[i * n + col] = p_mv[col]
        for col in range(m):
            x[s * n + i * m + col] = l_mv[col]
    cdef Work* wk = _alloc_work(s, n, m)
    if wk == NULL:
        raise MemoryError()
    cdef int iters = 0
    cdef double resid = 0.0
    cdef int status
    cdef double acc
    try:
        status = _newton(ker, s, a_mv, ah_mv, h, &q_mv[0], &p_mv[0], &l_mv[0],
                         &x[0], wk, tol, max_iters, fd_step, &iters, &resid)
        if status >= 2:
            raise RuntimeError("stage solve failed: "
                               + ("singular Jacobian" if status == 2 else "non-finite residual"))
        q1 = np.empty(n)
        p1 = np.empty(n)
        lam1 = np.empty(m)
        for col in range(n):
            acc = 0.0
            for i in range(s):
                acc += b_mv[i] * x[i * n + col]
            q1[col] = q_mv[col] + h * acc
        for col in range(n):
            acc = 0.0
            for i in range(s):
                acc += b_mv[i] * wk.w_stage[i * n + col]
            p1[col] = p_mv[col] + h * acc
        for col in range(m):
            lam1[col] = x[s * n + (s - 1) * m + col]
        constr = _constraint_max(ker, s, &x[0], wk)
        return q1, p1, lam1, iters, resid, constr, status == 0
    finally:
        _free_work(wk)


def nh_lag_run(VecKernel ker, cnp.ndarray amat, cnp.ndarray ahat, cnp.ndarray bvec,
               double h, cnp.ndarray q0, cnp.ndarray p0, cnp.ndarray lam0,
               int nsteps, double tol, int max_iters, double fd_step=SQRT_EPS):
    """Advance nsteps; returns (q_traj, p_traj, lam_traj, iters, resid, constr,
    fail_index) with fail_index = -1 on success.  Rows 0..k are valid when the
    run fails at step k."""
    cdef double[:, :] a_mv = np.array(amat, dtype=np.float64, order='C')
    cdef double[:, :] ah_mv = np.array(ahat, dtype=np.float64, order='C')
    cdef double[:] b_mv = np.array(bvec, dtype=np.float64, order='C')
    cdef int s = a_mv.shape[0]
    cdef int n = ker.n
    cdef int m = ker.m
    cdef int d = s * (n + m)
    q_traj = np.empty((nsteps + 1, n))
    p_traj = np.empty((nsteps + 1, n))
    lam_traj = np.empty((nsteps + 1, m))
    iters_arr = np.zeros(nsteps, dtype=np.int64)
    resid_arr = np.zeros(nsteps)
    constr_arr = np.zeros(nsteps)
    cdef double[:, :] q_mv = q_traj
    cdef double[:, :] p_mv = p_traj
    cdef double[:, :] l_mv = lam_traj
    cdef long long[:] it_mv = iters_arr
    cdef double[:] re_mv = resid_arr
    cdef double[:] co_mv = constr_arr
    q_traj[0] = np.asarray(q0, dtype=np.float64)
    p_traj[0] = np.asarray(p0, dtype=np.float64)
    lam_traj[0] = np.asarray(lam0, dtype=np.float64)
    cdef Work* wk = _alloc_work(s, n, m)
    if wk == NULL:
        raise MemoryError()
    cdef cnp.ndarray x_arr = np.empty(d, dtype=np.float64)
    cdef double[:] x = x_arr
    cdef int k, i, col, status, iters
    cdef double resid, acc
    cdef int fail = -1
    try:
        for k in range(nsteps):
            for i in range(s):
                for col in range(n):
                    x[i * n + col] = p_mv[k, col]
                for col in range(m):
                    x[s * n + i * m + col] = l_mv[k, col]
            status = _newton(ker, s, a_mv, ah_mv, h, &q_mv[k, 0], &p_mv[k, 0],
                             &l_mv[k, 0], &x[0], wk, tol, max_iters, fd_step,
                             &iters, &resid)
            if status != 0:
                fail = k
                break
            it_mv[k] = iters
            re_mv[k] = resid
            co_mv[k] = _constraint_max(ker, s, &x[0], wk)
            for col in range(n):
                acc = 0.0
                for i in range(s):
                    acc += b_mv[i] * x[i * n + col]
                q_mv[k + 1, col] = q_mv[k, col] + h * acc
                acc = 0.0
                for i in range(s):
                    acc += b_mv[i] * wk.w_stage[i * n + col]
                p_mv[k + 1, col] = p_mv[k, col] + h * acc
            for col in range(m):
                l_mv[k + 1, col] = x[s * n + (s - 1) * m + col]
    finally:
        _free_work(wk)
    return q_traj, p_traj, lam_traj, iters_arr, resid_arr, constr_arr, fail
