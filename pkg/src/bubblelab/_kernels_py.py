"""Pure numpy versions of the hot grid kernels (fallback for the compiled core)."""
import numpy as np
from scipy.special import digamma, hyp2f1

from math import gamma, pi


def weight_sum(y1, r, centers, mus, e1, e2):
    """sum_j mu_j^e1 (1 + mu_j |y - x_j|)^(-e2) for centers on the axis."""
    out = np.zeros(y1.shape[0])
    r2 = r * r
    for c, mu in zip(centers, mus):
        d = np.sqrt((y1 - c) ** 2 + r2)
        out += mu ** e1 * (1.0 + mu * d) ** (-e2)
    return out


def riesz_kernel(ty1, tr, sy1, sr, N):
    """Average of |y - z|^(2-N) over the transverse sphere of z, times its area."""
    area = 2.0 * pi ** ((N - 1) / 2.0) / gamma((N - 1) / 2.0)
    D = (ty1 - sy1) ** 2 + tr * tr + sr * sr
    k2 = (2.0 * tr * sr / D) ** 2
    k2 = np.minimum(k2, 1.0 - 1e-15)
    a, b = (N - 2) / 4.0, N / 4.0
    F = hyp2f1(a, b, a + b, k2)
    # scipy overflows next to z = 1; use the leading logarithmic term there
    w = 1.0 - k2
    near = w < 1e-12
    if np.any(near):
        pref = gamma(a + b) / (gamma(a) * gamma(b))
        F = np.where(near, pref * (-2 * np.euler_gamma - digamma(a) - digamma(b)
                                   - np.log(np.where(near, w, 1.0))), F)
    return area * D ** (-(N - 2) / 2.0) * F


def riesz_sum(ty1, tr, py1, pr, pw, N, chunk=4096):
    """sum_p pw_p K(t, p) for every target t."""
    keep = pw != 0
    py1, pr, pw = py1[keep], pr[keep], pw[keep]
    out = np.empty(ty1.shape[0])
    for i in range(ty1.shape[0]):
        acc = 0.0
        for s in range(0, py1.shape[0], chunk):
            sl = slice(s, s + chunk)
            acc += np.dot(pw[sl], riesz_kernel(ty1[i], tr[i], py1[sl], pr[sl], N))
        out[i] = acc
    return out
