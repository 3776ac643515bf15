# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled event loop for the branching particle simulation.

Randomness is drawn exclusively through the numpy bit generator's
``next_double`` slot, in the exact order used by the pure-Python fallback
(`occufluct.branching._evolve_python`), so the two lanes produce
bit-identical occupation records from the same Generator state.  Any change
to the draw order here must be mirrored there.
"""

from cpython.pycapsule cimport PyCapsule_GetPointer
from libc.math cimport M_PI, cos, exp, log1p, pow, sin
from libc.stdint cimport int64_t, uint32_t, uint64_t
from libc.stdlib cimport free, malloc, realloc


cdef extern from "numpy/random/bitgen.h":
    ctypedef struct bitgen_t:
        void *state
        uint64_t (*next_uint64)(void *st) noexcept nogil
        uint32_t (*next_uint32)(void *st) noexcept nogil
        double (*next_double)(void *st) noexcept nogil
        uint64_t (*next_raw)(void *st) noexcept nogil


cdef inline double _phi_at(double x, const double *amp, const double *cen,
                           const double *i2w, Py_ssize_t nc) noexcept nogil:
    cdef double s = 0.0
    cdef double d
    cdef Py_ssize_t j
    for j in range(nc):
        d = x - cen[j]
        s += amp[j] * exp(-(d * d * i2w[j]))
    return s


cdef inline double _sigma_at(double x, int kind, double level,
                             double p1, double p2) noexcept nogil:
    cdef double d
    if kind == 0:
        return 0.0
    if kind == 1:
        if x >= p1 and x <= p2:
            return level
        return 0.0
    d = x - p1
    return level * exp(-(d * d * p2))


def evolve_core(object bit_generator,
                double[::1] x0, double[::1] clock0,
                double alpha, double gamma, double delta, Py_ssize_t n_steps,
                int sigma_kind, double sigma_level, double sigma_p1, double sigma_p2,
                double[::1] phi_amp, double[::1] phi_center, double[::1] phi_i2w2,
                double[::1] v, int64_t[::1] counts, int64_t cap):
    """Advance every particle lineage to the horizon, filling v and counts.

    Returns 0 on success, 1 when an alive-at-grid-time count exceeds cap.
    """
    cdef bitgen_t *bg = <bitgen_t *> PyCapsule_GetPointer(
        bit_generator.capsule, "BitGenerator")
    cdef Py_ssize_t n0 = x0.shape[0]
    cdef Py_ssize_t capacity = n0 + 1024
    cdef Py_ssize_t nc = phi_amp.shape[0]
    cdef double *qx = <double *> malloc(capacity * sizeof(double))
    cdef double *qt = <double *> malloc(capacity * sizeof(double))
    cdef double *qb = <double *> malloc(capacity * sizeof(double))
    cdef double *tmp
    cdef Py_ssize_t head = 0, size = n0, i, k
    cdef double ia = 1.0 / alpha
    cdef double oma = 1.0 - alpha
    cdef double ce = oma * ia
    cdef double x, t, b, s_next, t_ev, dt, u1, u2, u, w, sx
    cdef int status = 0
    cdef bint alive

    if qx == NULL or qt == NULL or qb == NULL:
        free(qx); free(qt); free(qb)
        raise MemoryError()

    with nogil:
        for i in range(n0):
            qx[i] = x0[i]
            qt[i] = 0.0
            qb[i] = clock0[i]

        while head < size:
            x = qx[head]
            t = qt[head]
            b = qb[head]
            head += 1
            k = <Py_ssize_t> (t / delta) + 1
            while k * delta <= t:
                k += 1
            alive = True
            while alive and k <= n_steps:
                s_next = k * delta
                if b < s_next:
                    t_ev = b
                else:
                    t_ev = s_next
                dt = t_ev - t
                if dt > 0.0:
                    u1 = bg.next_double(bg.state)
                    u2 = bg.next_double(bg.state)
                    u = M_PI * (u1 - 0.5)
                    w = -log1p(-u2)
                    x = x + pow(dt, ia) * (sin(alpha * u) / pow(cos(u), ia)
                                           * pow(cos(oma * u) / w, ce))
                t = t_ev
                if t_ev == s_next:
                    v[k] += _phi_at(x, &phi_amp[0], &phi_center[0], &phi_i2w2[0], nc)
                    counts[k] += 1
                    if counts[k] > cap:
                        status = 1
                        break
                    k += 1
                if t_ev == b:
                    sx = _sigma_at(x, sigma_kind, sigma_level, sigma_p1, sigma_p2)
                    u = bg.next_double(bg.state)
                    if u < sx:
                        alive = False
                    else:
                        if u < 2.0 * sx:
                            if size == capacity:
                                capacity *= 2
                                tmp = <double *> realloc(qx, capacity * sizeof(double))
                                if tmp == NULL:
                                    status = 2
                                    break
                                qx = tmp
                                tmp = <double *> realloc(qt, capacity * sizeof(double))
                                if tmp == NULL:
                                    status = 2
                                    break
                                qt = tmp
                                tmp = <double *> realloc(qb, capacity * sizeof(double))
                                if tmp == NULL:
                                    status = 2
                                    break
                                qb = tmp
                            qx[size] = x
                            qt[size] = t
                            qb[size] = t - log1p(-bg.next_double(bg.state)) / gamma
                            size += 1
                        b = t - log1p(-bg.next_double(bg.state)) / gamma
            if status != 0:
                break

    free(qx)
    free(qt)
    free(qb)
    if status == 2:
        raise MemoryError()
    return status
