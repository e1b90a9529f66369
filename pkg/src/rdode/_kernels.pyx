# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops: Neumann 5-point Laplacian and the fused FitzHugh Euler stepper.

Arithmetic is written in the same order as :mod:`rdode._kernels_py` so the two
backends agree to round-off.
"""
import numpy as np

from libc.math cimport fabs, isfinite


cdef inline double _lap(const double[:, ::1] v, Py_ssize_t i, Py_ssize_t j,
                        Py_ssize_t nx, Py_ssize_t ny,
                        double ihx2, double ihy2) noexcept nogil:
    cdef double c = v[i, j]
    cdef double left = v[i - 1, j] if i > 0 else c
    cdef double right = v[i + 1, j] if i < nx - 1 else c
    cdef double down = v[i, j - 1] if j > 0 else c
    cdef double up = v[i, j + 1] if j < ny - 1 else c
    return ((right - 2.0 * c) + left) * ihx2 + ((up - 2.0 * c) + down) * ihy2


def laplacian(const double[:, ::1] v, double hx, double hy, double[:, ::1] out):
    cdef Py_ssize_t nx = v.shape[0], ny = v.shape[1], i, j
    cdef double ihx2 = 1.0 / (hx * hx), ihy2 = 1.0 / (hy * hy)
    with nogil:
        for i in range(nx):
            for j in range(ny):
                out[i, j] = _lap(v, i, j, nx, ny, ihx2, ihy2)
    return np.asarray(out)


cdef inline void _fhn_row(const double* up_row, const double* um, const double* vm, const double* vp_row,
                          double* un_row, double* vn_row,
                          const double* v_up, const double* v_dn, Py_ssize_t ny,
                          double beta, double sigma, double delta, double rho, double gamma, double dt,
                          double ihx2, double ihy2) noexcept nogil:
    # one grid row: um/vm current values, v_up/v_dn the x-neighbour rows (mirrored at the edge)
    cdef Py_ssize_t j
    cdef double uc, vc, fu, gv, lap, left, right, down, upv
    for j in range(ny):
        uc = um[j]
        vc = vm[j]
        left = v_dn[j]
        right = v_up[j]
        down = vm[j - 1] if j > 0 else vc
        upv = vm[j + 1] if j < ny - 1 else vc
        lap = ((right - 2.0 * vc) + left) * ihx2 + ((upv - 2.0 * vc) + down) * ihy2
        fu = uc * (1.0 - uc) * (uc - beta) - vc
        gv = (sigma * uc - delta * vc) - rho
        un_row[j] = uc + dt * fu
        vn_row[j] = vc + dt * (gamma * lap + gv)


def fitzhugh_advance(double[:, ::1] u, double[:, ::1] v,
                     double beta, double sigma, double delta, double rho,
                     double gamma, double dt, double hx, double hy,
                     Py_ssize_t nsteps,
                     const double[:, ::1] u_ref, const double[:, ::1] v_ref,
                     double[::1] du_out, double[::1] dv_out,
                     double blowup):
    """Advance ``nsteps`` explicit Euler steps in place.

    After step k the sup-norm deviations from the reference are written to
    ``du_out[k]``, ``dv_out[k]`` (when those arrays are non-empty).  Returns
    ``(steps_done, bad_i, bad_j)``; ``bad_i = -1`` unless a blow-up stopped the run.
    """
    cdef Py_ssize_t nx = u.shape[0], ny = u.shape[1], i, j, k, n = nx * ny
    cdef double ihx2 = 1.0 / (hx * hx), ihy2 = 1.0 / (hy * hy)
    cdef double du, dv, e, a, c
    cdef bint track = du_out.shape[0] > 0
    cdef Py_ssize_t bad = -1, done = nsteps
    cdef double[::1] ubuf = np.empty(n)
    cdef double[::1] vbuf = np.empty(n)
    cdef double* uc = &u[0, 0]
    cdef double* vc = &v[0, 0]
    cdef double* un = &ubuf[0]
    cdef double* vn = &vbuf[0]
    cdef double* tmp
    cdef const double* ur = &u_ref[0, 0]
    cdef const double* vr = &v_ref[0, 0]
    with nogil:
        for k in range(nsteps):
            for i in range(nx):
                _fhn_row(NULL, uc + i * ny, vc + i * ny, NULL, un + i * ny, vn + i * ny,
                         vc + (i + 1) * ny if i < nx - 1 else vc + i * ny,
                         vc + (i - 1) * ny if i > 0 else vc + i * ny,
                         ny, beta, sigma, delta, rho, gamma, dt, ihx2, ihy2)
            for j in range(n):
                a = un[j]
                c = vn[j]
                if not (isfinite(a) and isfinite(c)) or fabs(a) > blowup or fabs(c) > blowup:
                    bad = j
                    break
            if bad >= 0:
                done = k
                break
            tmp = uc; uc = un; un = tmp
            tmp = vc; vc = vn; vn = tmp
            if track:
                du = 0.0
                dv = 0.0
                for j in range(n):
                    e = fabs(uc[j] - ur[j])
                    if e > du:
                        du = e
                    e = fabs(vc[j] - vr[j])
                    if e > dv:
                        dv = e
                du_out[k] = du
                dv_out[k] = dv
        if uc != &u[0, 0]:
            for j in range(n):
                un[j] = uc[j]
                vn[j] = vc[j]
    if bad >= 0:
        return done, bad // ny, bad % ny
    return nsteps, -1, -1
