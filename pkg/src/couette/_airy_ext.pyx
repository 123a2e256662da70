# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled point kernel for the scaled Airy pair; mirrors airy_scaled_numpy."""
import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, ceil, M_PI, sqrt

cdef extern from "complex.h" nogil:
    double complex csqrt(double complex)
    double complex cexp(double complex)
    double complex cpow(double complex, double complex)
    double cabs(double complex)
    double carg(double complex)

cdef double AI0 = 0.355028053887817239260
cdef double AIP0 = -0.258819403792806798405
cdef double R_SERIES = 3.0
cdef double R_ASYMP = 8.0
cdef int TAYLOR_TERMS = 34
cdef int SERIES_TERMS = 70
cdef double MARCH_STEP = 0.5

cnp.import_array()


cdef inline double complex zeta(double complex z) nogil:
    return (2.0 / 3.0) * z * csqrt(z)


cdef void taylor(double complex p, double complex *u, double complex *up,
                 double complex h, int nterms) noexcept nogil:
    cdef double complex cm1 = 0, cm = u[0], cp1 = up[0], cn, hp = h
    cdef double complex val = u[0] + up[0] * h, der = up[0]
    cdef int m
    for m in range(nterms):
        cn = (p * cm + cm1) / ((m + 2) * (m + 1))
        der = der + (m + 2) * cn * hp
        hp = hp * h
        val = val + cn * hp
        cm1 = cm
        cm = cp1
        cp1 = cn
    u[0] = val
    up[0] = der


cdef void sector(double complex z, double complex *eai, double complex *eaip) noexcept nogil:
    cdef double complex zt = zeta(z), inv = 1.0 / zt, su = 1, sv = 1, term = 1, q
    cdef double uk = 1.0, vk, mag, best = 1e300
    cdef int k
    for k in range(1, 80):
        uk = uk * (6 * k - 5) * (6 * k - 3) * (6 * k - 1) / ((2 * k - 1) * 216.0 * k)
        vk = -uk * (6 * k + 1) / (6 * k - 1)
        term = term * (-inv)
        mag = cabs(uk * term)
        if not (mag < best and mag > 1e-17):
            break
        best = mag
        su = su + uk * term
        sv = sv + vk * term
    q = cpow(z, 0.25)
    cdef double c = 0.5 / sqrt(M_PI)
    eai[0] = c * su / q
    eaip[0] = -c * q * sv


cdef void asymptotic(double complex z, double complex *eai, double complex *eaip) noexcept nogil:
    cdef double complex w = cexp(2j * M_PI / 3), zt, a1, d1, a2, d2, e1, e2
    if fabs(carg(z)) <= 2 * M_PI / 3:
        sector(z, eai, eaip)
        return
    zt = zeta(z)
    sector(w * z, &a1, &d1)
    sector(w * w * z, &a2, &d2)
    e1 = cexp(zt - zeta(w * z))
    e2 = cexp(zt - zeta(w * w * z))
    eai[0] = -w * a1 * e1 - w * w * a2 * e2
    eaip[0] = -w * w * d1 * e1 - w * w * w * w * d2 * e2


cdef void point(double complex z, double complex *eai, double complex *eaip) noexcept nogil:
    cdef double r = cabs(z), r0
    cdef double complex u, up, zs, h, p, s, a, d
    cdef int nsteps, j
    if r <= R_SERIES:
        u = AI0
        up = AIP0
        taylor(0, &u, &up, z, SERIES_TERMS)
        s = cexp(zeta(z))
        eai[0] = u * s
        eaip[0] = up * s
        return
    if r >= R_ASYMP:
        asymptotic(z, eai, eaip)
        return
    if fabs(carg(z)) < M_PI / 3:
        zs = z / r * R_ASYMP
        asymptotic(zs, &a, &d)
        s = cexp(-zeta(zs))
        u = a * s
        up = d * s
    else:
        zs = z / r * R_SERIES
        u = AI0
        up = AIP0
        taylor(0, &u, &up, zs, SERIES_TERMS)
    nsteps = <int>ceil(cabs(z - zs) / MARCH_STEP)
    if nsteps < 1:
        nsteps = 1
    h = (z - zs) / nsteps
    p = zs
    for j in range(nsteps):
        taylor(p, &u, &up, h, TAYLOR_TERMS)
        p = p + h
    s = cexp(zeta(z))
    eai[0] = u * s
    eaip[0] = up * s


def airy_scaled(z):
    """Scaled Airy pair ``(Ai(z) e^zeta, Ai'(z) e^zeta)`` for an array of points."""
    arr = np.ascontiguousarray(z, dtype=np.complex128)
    shape = arr.shape
    flat = arr.ravel()
    out_a = np.empty_like(flat)
    out_d = np.empty_like(flat)
    cdef double complex[::1] zv = flat
    cdef double complex[::1] av = out_a
    cdef double complex[::1] dv = out_d
    cdef Py_ssize_t i, n = flat.shape[0]
    with nogil:
        for i in range(n):
            point(zv[i], &av[i], &dv[i])
    return out_a.reshape(shape), out_d.reshape(shape)


def a0_integral(z, double[::1] nodes, double[::1] weights, double tol, int max_panels):
    """Ray integral ``int_0^inf eAi(xi(s)) exp(zeta0 - zeta(xi(s))) ds`` per point.

    Returns ``(total, zeta0, panels)``; ``panels == -1`` flags non-convergence.
    """
    arr = np.ascontiguousarray(z, dtype=np.complex128).ravel()
    out = np.empty_like(arr)
    z0 = np.empty_like(arr)
    used = np.empty(arr.shape[0], dtype=np.int64)
    cdef double complex[::1] zv = arr
    cdef double complex[::1] ov = out
    cdef double complex[::1] z0v = z0
    cdef long long[::1] uv = used
    cdef double complex rot = cexp(1j * M_PI / 6), xi, e, ea, ed, total, zz0
    cdef double h, s0, tail
    cdef Py_ssize_t i, n = arr.shape[0]
    cdef int j, q, nq = nodes.shape[0]
    with nogil:
        for i in range(n):
            zz0 = zeta(rot * zv[i])
            h = 2.0 / (1.0 + sqrt(cabs(zv[i])))
            total = 0
            s0 = 0
            uv[i] = -1
            for j in range(max_panels):
                for q in range(nq):
                    xi = rot * (zv[i] + s0 + h * nodes[q])
                    point(xi, &ea, &ed)
                    e = zz0 - zeta(xi)
                    if e.real > 700.0:
                        e = 700.0 + 1j * e.imag
                    ea = ea * cexp(e)
                    total = total + h * weights[q] * ea
                s0 = s0 + h
                tail = cabs(ea) * (1.0 + 1.0 / h)
                if tail < tol * cabs(total):
                    uv[i] = j + 1
                    break
            ov[i] = total
            z0v[i] = zz0
    return out, z0, used
