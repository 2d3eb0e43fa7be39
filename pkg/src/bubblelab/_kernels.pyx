# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled axisymmetric Riesz sum (the Green-convolution far field)."""
import numpy as np
cimport numpy as cnp
from cython.parallel cimport prange
from libc.math cimport fabs, log, pow, sqrt, tgamma, M_PI
from scipy.special import digamma

cnp.import_array()


cdef inline double _f21(double a, double b, double z, double pref,
                        double psa, double psb) nogil:
    """2F1(a, b; a+b; z): Gauss series for z < 1/2, logarithmic expansion about z = 1 above.

    pref = Gamma(a+b)/(Gamma(a)Gamma(b)); psa, psb = digamma(a), digamma(b).
    """
    cdef double term = 1.0, acc = 1.0, w, lw, c, ps1, pa, pb
    cdef int n = 0
    if z < 0.5:
        while term > 1e-17 * acc and n < 200:
            term *= (a + n) * (b + n) / ((a + b + n) * (n + 1.0)) * z
            acc += term
            n += 1
        return acc
    w = 1.0 - z
    lw = log(w)
    c = 1.0
    ps1 = -0.57721566490153286061
    pa, pb = psa, psb
    acc = c * (2.0 * ps1 - pa - pb - lw)
    while n < 200:
        c *= (a + n) * (b + n) / ((n + 1.0) * (n + 1.0)) * w
        ps1 += 1.0 / (n + 1.0)
        pa += 1.0 / (a + n)
        pb += 1.0 / (b + n)
        n += 1
        term = c * (2.0 * ps1 - pa - pb - lw)
        acc += term
        if fabs(term) < 1e-17 * fabs(acc):
            break
    return pref * acc


def riesz_sum(double[::1] ty1, double[::1] tr, double[::1] py1, double[::1] pr,
              double[::1] pw, int N):
    cdef Py_ssize_t nt = ty1.shape[0], npnt = py1.shape[0], i, s
    cdef double area = 2.0 * pow(M_PI, (N - 1) / 2.0) / tgamma((N - 1) / 2.0)
    cdef double a = (N - 2) / 4.0, b = N / 4.0, c = (N - 1) / 2.0, ex = -(N - 2) / 2.0
    cdef double pref = tgamma(a + b) / (tgamma(a) * tgamma(b))
    cdef double psa = digamma(a), psb = digamma(b)
    cdef double D, k2, acc, dy
    out_arr = np.empty(nt)
    cdef double[::1] out = out_arr
    for i in prange(nt, nogil=True, schedule="dynamic"):
        acc = 0.0
        for s in range(npnt):
            if pw[s] == 0.0:
                continue
            dy = ty1[i] - py1[s]
            D = dy * dy + tr[i] * tr[i] + pr[s] * pr[s]
            k2 = 2.0 * tr[i] * pr[s] / D
            k2 = k2 * k2
            if k2 > 1.0 - 1e-15:
                k2 = 1.0 - 1e-15
            acc = acc + pw[s] * pow(D, ex) * _f21(a, b, k2, pref, psa, psb)
        out[i] = area * acc
    return out_arr
