"""Quadrature for radial and axisymmetric integrands, universal bubble integrals,
the constants of the reduced system, the Newtonian (Riesz) potential and
numeric checks of the elementary interaction inequalities.

Radial integrals use composite Gauss-Legendre panels that are geometric towards
the origin on [0, 1] and, beyond r = 1, are taken in the variable s = 1/r with
panels geometric towards s = 0.  For algebraically decaying integrands
r^(N-1) f(r) dr = s^(-N-1) f(1/s) ds is smooth in s, so no truncation radius is
needed.  Every result carries the difference between n and 2n nodes per panel
as its error estimate.
"""
import json
from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numpy as np
from scipy.interpolate import RectBivariateSpline
from scipy.special import zeta

from . import kernels
from .profile_core import (DimensionParams, Field, bubble_mu_derivative, bubble_radial,
                           bubble_radial_slope, sphere_area)


@dataclass(frozen=True)
class QuadratureSpec:
    n_nodes: int = 24
    levels: int = 80       # geometric panels towards 0 (and towards infinity)
    refine: int = 2
    tol: float = 1e-10

    def __post_init__(self):
        if self.n_nodes < 16:
            raise ValueError("need at least 16 nodes per panel")
        if self.refine < 2:
            raise ValueError("refinement factor must be >= 2")


@dataclass(frozen=True)
class QuadResult:
    value: float
    error: float
    converged: bool

    def __float__(self):
        return float(self.value)


@lru_cache(maxsize=None)
def gauss_legendre(n):
    x, w = np.polynomial.legendre.leggauss(n)
    return x, w


def composite_nodes(breaks, n):
    """Gauss-Legendre nodes and weights on consecutive panels [b_k, b_k+1]."""
    b = np.asarray(breaks, float)
    x, w = gauss_legendre(n)
    a, c = b[:-1, None], b[1:, None]
    nodes = 0.5 * (c - a) * x + 0.5 * (c + a)
    weights = 0.5 * (c - a) * w
    return nodes.ravel(), weights.ravel()


def _merge_breaks(base, extra, lo, hi):
    pts = np.concatenate([np.asarray(base, float),
                          [e for e in extra if lo < e < hi]])
    return np.unique(np.clip(pts, lo, hi))


def radial_nodes(n, levels=40, r_max=None, breaks=(), scale=1.0):
    """Nodes/weights for int_0^r_max g(r) dr (r_max=None means infinity)."""
    inner = scale * np.r_[0.0, 2.0 ** -np.arange(levels, -1, -1.0)]
    if r_max is not None and r_max <= scale:
        b = _merge_breaks(np.r_[inner[inner < r_max], r_max], breaks, 0.0, r_max)
        return composite_nodes(b, n)
    b = _merge_breaks(inner, breaks, 0.0, scale)
    r0, w0 = composite_nodes(b, n)
    if r_max is not None:
        outer = scale * 2.0 ** np.arange(0.0, np.ceil(np.log2(r_max / scale)) + 1)
        ob = _merge_breaks(np.r_[outer, r_max], breaks, scale, r_max)
        r1, w1 = composite_nodes(ob, n)
        return np.r_[r0, r1], np.r_[w0, w1]
    # s = scale / r in (0, 1]
    sb = np.r_[0.0, 2.0 ** -np.arange(levels, -1, -1.0)]
    sb = _merge_breaks(sb, [scale / e for e in breaks if e > scale], 0.0, 1.0)
    s, ws = composite_nodes(sb, n)
    r1 = scale / s
    w1 = ws * scale / s ** 2
    return np.r_[r0, r1], np.r_[w0, w1]


def _two_level(evaluate, spec):
    coarse = evaluate(spec.n_nodes)
    fine = evaluate(spec.refine * spec.n_nodes)
    if isinstance(fine, dict):
        return {k: _result(fine[k], coarse[k], spec) for k in fine}
    return _result(fine, coarse, spec)


def _result(fine, coarse, spec):
    err = abs(fine - coarse)
    return QuadResult(float(fine), float(err), bool(err <= spec.tol * max(abs(fine), 1e-300)))


def radial_integral(f, dims, spec=None, r_max=None, breaks=(), scale=1.0):
    """omega_{N-1} int_0^inf r^(N-1) f(r) dr with a two-level error estimate."""
    spec = spec or QuadratureSpec()
    N = dims.N
    om = sphere_area(N - 1)

    def ev(n):
        r, w = radial_nodes(n, spec.levels, r_max, breaks, scale)
        with np.errstate(over="ignore", under="ignore"):
            return om * np.sum(w * r ** (N - 1) * f(r))
    return _two_level(ev, spec)


def polar_quad(func, dims, center=0.0, spec=None, rho_max=None, rho_breaks=(),
               rho_focus=(), focus_width=1.0, theta_levels=12, scale=1.0, focus_levels=30):
    """int over R^N (or the ball rho < rho_max) of an axisymmetric func(y1, r).

    Polar coordinates about (center, 0): y1 = center + rho cos t, r = rho sin t,
    dV = omega_{N-2} rho^(N-1) sin^(N-2) t drho dt.  rho_focus lists radii where
    the integrand has a sharp feature on the axis; panels are graded around them
    in rho and towards the poles in t.  func may return a dict of arrays, in
    which case a dict of results is returned.
    """
    spec = spec or QuadratureSpec()
    N = dims.N
    om = sphere_area(N - 2)
    extra = list(rho_breaks)
    for d in rho_focus:
        k = np.arange(0, focus_levels)
        extra += list(d + focus_width * 2.0 ** -k) + list(d - focus_width * 2.0 ** -k) + [d]
    extra = [e for e in extra if e > 0]
    tb = np.pi * np.r_[0.0, 0.5 * 2.0 ** -np.arange(theta_levels, -1, -1.0)]
    tb = np.unique(np.r_[tb, np.pi - tb])

    def ev(n):
        rho, wr = radial_nodes(n, spec.levels, rho_max, extra, scale)
        t, wt = composite_nodes(tb, n)
        R, T = np.meshgrid(rho, t, indexing="ij")
        vals = func(center + R * np.cos(T), R * np.sin(T))
        jac = R ** (N - 1) * np.sin(T) ** (N - 2)
        W = np.outer(wr, wt) * jac
        with np.errstate(invalid="ignore"):
            if isinstance(vals, dict):
                return {k: om * np.sum(np.where(jac > 0, v * W, 0.0)) for k, v in vals.items()}
            return om * np.sum(np.where(jac > 0, vals * W, 0.0))
    return _two_level(ev, spec)


# ---------------------------------------------------------------------------
# universal constants of the unit bubble

def _U(r, N):
    return bubble_radial(r * r, 1.0, N)


@dataclass(frozen=True)
class UniversalConstants:
    N: int
    beta: float
    ball_radius: float
    A: float
    I_2star: float
    I_grad: float
    I_pow: float
    J_2: float
    J_beta: float
    J_beta_prime: float
    J_beta_dil: float
    errors: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)


def compute_universal(dims, potential, spec=None, ball_radius=1.0):
    """Integrals of the unit bubble U_{0,1}.

    J_beta is taken over the ball B_R (R = ball_radius): over R^N it diverges
    for every beta >= N - 4.  J_beta_prime = int d_1(|y|^(beta-2) y_1) U^2 needs
    beta < N - 2, J_beta_dil = int |y|^beta U^p psi_0 needs beta < N.
    """
    spec = spec or QuadratureSpec()
    N = dims.N
    beta = potential.beta
    p = dims.p
    if not (0 < beta < N - 2):
        raise ValueError("beta-moments diverge for beta = %g outside (0, N-2)" % beta)
    U = lambda r: _U(r, N)
    res = {
        "I_2star": radial_integral(lambda r: U(r) ** dims.two_star, dims, spec),
        "I_grad": radial_integral(lambda r: bubble_radial_slope(r * r, 1.0, N) ** 2 * r * r,
                                  dims, spec),
        "I_pow": radial_integral(lambda r: U(r) ** p, dims, spec),
        "J_2": radial_integral(lambda r: U(r) ** 2, dims, spec),
        "J_beta": radial_integral(lambda r: r ** beta * U(r) ** 2, dims, spec,
                                  r_max=ball_radius),
        "J_beta_prime": radial_integral(
            lambda r: (N + beta - 2.0) / N * r ** (beta - 2) * U(r) ** 2, dims, spec),
        "J_beta_dil": radial_integral(
            lambda r: r ** beta * U(r) ** p * bubble_mu_derivative(r * r, 1.0, N), dims, spec),
    }
    return UniversalConstants(
        N=N, beta=beta, ball_radius=ball_radius, A=dims.A,
        errors={k: v.error for k, v in res.items()},
        **{k: v.value for k, v in res.items()})


def flux_value(dims):
    """(N-2) omega_{N-1} A_N: flux of -grad U through a large sphere."""
    return (dims.N - 2) * dims.sphere_area * dims.A


# ---------------------------------------------------------------------------
# derived constants

@dataclass(frozen=True)
class Constant:
    value: float
    error: float
    formula: str


@dataclass(frozen=True)
class DerivedConstants:
    B1: Constant
    B2: Constant
    C4: Constant
    Bbar: Constant
    B: Constant
    Bprime: Constant
    Bprime_ball: Constant
    C1: Constant
    C2: Constant
    cbar_translation: Constant
    cbar_dilation: Constant
    amplitude_exponent: Constant
    warnings: tuple = ()

    def to_json(self, **kw):
        doc = {k: asdict(v) for k, v in self.__dict__.items() if isinstance(v, Constant)}
        doc["warnings"] = list(self.warnings)
        return json.dumps(doc, indent=2, sort_keys=True, **kw)


def derive_constants(univ, dims, potential, spec=None):
    """Coefficients of the reduced system, each defined by the integral it multiplies.

    With U_mu the bubble of height mu and Q = a|y|^beta near a lattice point:
      int_{B_{R/mu}} Q U_mu^2            = a mu^-(beta+2) J_beta(R)
      d/dmu of (1/2) int Q U_mu^2        ~ -B1 mu^-(beta+3)
      pair energy -int U_i^p U_j         ~ -A I_pow mu^-(N-2) d^-(N-2)
      its mu-derivative, times mu        ~  C4 mu^-(N-2) d^-(N-2)
      center derivative of (1/2)int Q U^2 ~  C1 mu^-beta s
      center derivative of pair energy   ~ -C2 mu^-(N-2) d^-(N-1) sgn
    """
    spec = spec or QuadratureSpec()
    N, beta, a = dims.N, potential.beta, potential.a
    A = dims.A
    e = univ.errors
    warn = []
    if a < 0:
        warn.append("a < 0: Q has a local maximum at lattice points; constants use |a|, "
                    "the balance equations have no positive solution with this sign")
    aa = abs(a)
    k = (N - 2) / 2.0
    B1 = Constant((beta + 2) / 2.0 * aa * univ.J_beta, (beta + 2) / 2.0 * aa * e["J_beta"],
                  "B1 = (beta+2)/2 |a| J_beta(R),  J_beta(R) = int_{B_R} |y|^beta U^2")
    B2 = Constant(k * A * univ.I_pow, k * A * e["I_pow"], "B2 = (N-2)/2 A_N I_pow")
    C4 = Constant(B2.value, B2.error, "C4 = B2 = (N-2)/2 A_N I_pow")
    bb = C4.value / B1.value
    bb_err = bb * (C4.error / C4.value + B1.error / B1.value)
    Bbar = Constant(bb, bb_err, "Bbar = C4 / B1 (balance r_j = sum Bbar mu^-(N-2) d^-(N-2) - mu^-(beta+2))")
    B = Constant(bb, bb_err, "B = B' / B1 with B' the whole-space dilation interaction constant")
    Bprime = Constant(B2.value, B2.error, "B' = (N-2)/2 A_N I_pow")
    # ball-truncated version of B' on B_R, R = univ.ball_radius
    R = univ.ball_radius
    p = dims.p
    inner = radial_integral(lambda r: _U(r, N) ** p, dims, spec, r_max=R)
    surf = dims.sphere_area * R ** N * _U(np.array([R]), N)[0] ** p
    Bprime_ball = Constant(A * (k * inner.value - surf), A * k * inner.error,
                           "B'(R) = A_N ((N-2)/2 int_{B_R} U^p - R int_{dB_R} U^p)")
    C1 = Constant(0.5 * aa * beta * univ.J_beta_prime, 0.5 * aa * beta * e["J_beta_prime"],
                  "C1 = (1/2) |a| beta J'_beta,  J'_beta = (N+beta-2)/N int |y|^(beta-2) U^2")
    C2 = Constant((N - 2) * A * univ.I_pow, (N - 2) * A * e["I_pow"], "C2 = (N-2) A_N I_pow")
    ct = radial_integral(lambda r: _U(r, N) ** (p - 1) * bubble_radial_slope(r * r, 1.0, N) ** 2
                         * r * r / N, dims, spec)
    cd = radial_integral(lambda r: _U(r, N) ** (p - 1) * bubble_mu_derivative(r * r, 1.0, N) ** 2,
                         dims, spec)
    cbar_t = Constant(ct.value, ct.error,
                      "cbar_trans = int U^(p-1) psi_1^2 (unit bubble; scales as mu^2)")
    cbar_d = Constant(cd.value, cd.error,
                      "cbar_dil = int U^(p-1) psi_0^2 (unit bubble; scales as mu^-2)")
    ex = Constant((2 * beta + 6 - N) / (N - 2), 0.0,
                  "exponent e in a_j^e = Bbar sum a_i |i-j|^(2-N) from mu_j^-(N-2)/2 = a_j L^-(N-2)^2/(2(beta-N+4))")
    return DerivedConstants(B1, B2, C4, Bbar, B, Bprime, Bprime_ball, C1, C2, cbar_t, cbar_d, ex,
                            tuple(warn))


# ---------------------------------------------------------------------------
# two-bubble interaction

@dataclass(frozen=True)
class InteractionResult:
    value: float
    error: float
    asymptotic: float
    ratio: object  # None when the near field overlaps


def interaction_integral(b_i, b_j, dims, spec=None):
    """int U_i^p U_j for two bubbles on the y1-axis, with the far-field prediction."""
    spec = spec or QuadratureSpec()
    N, p = dims.N, dims.p
    xi, xj = b_i.x1, b_j.x1
    if xi == xj:
        raise ValueError("centers must be distinct")
    d = abs(xj - xi)

    def f(y1, r):
        r2 = r * r
        return (bubble_radial((y1 - xi) ** 2 + r2, b_i.mu, N) ** p
                * bubble_radial((y1 - xj) ** 2 + r2, b_j.mu, N))
    res = polar_quad(f, dims, center=xi, spec=spec, rho_focus=[d],
                     focus_width=min(d / 2, 4.0 / b_j.mu), scale=1.0 / b_i.mu)
    mu2 = np.sqrt(b_i.mu * b_j.mu)
    asym = dims.A * compute_I_pow(dims) / (mu2 ** (N - 2) * d ** (N - 2))
    near = min(b_i.mu, b_j.mu) * d < 10
    return InteractionResult(res.value, res.error, asym, None if near else res.value / asym)


@lru_cache(maxsize=None)
def _I_pow_cached(N):
    dims = DimensionParams(N)
    return radial_integral(lambda r: _U(r, N) ** dims.p, dims).value


def compute_I_pow(dims):
    return _I_pow_cached(dims.N)


# ---------------------------------------------------------------------------
# Newtonian potential of an axisymmetric field

def _interpolant(f):
    g = f.grid
    if g.period is not None:
        raise ValueError("green_convolve needs a non-periodic grid")
    r = np.r_[-g.r[:0:-1], g.r]
    v = np.concatenate([f.values[:, :0:-1], f.values], axis=1)
    return RectBivariateSpline(g.y1, r, v, kx=3, ky=3)


def _duffy_cell(P, y1a, y1b, ra, rb, n, upanels):
    """Quadrature points on a rectangle split into triangles with apex P."""
    corners = [(y1a, ra), (y1b, ra), (y1b, rb), (y1a, rb)]
    x, w = gauss_legendre(n)
    xv, wv = 0.5 * (x + 1), 0.5 * w
    ub, uw = composite_nodes(upanels, n)
    pts_y, pts_r, wts = [], [], []
    for k in range(4):
        Q1 = np.array(corners[k])
        Q2 = np.array(corners[(k + 1) % 4])
        area2 = abs((Q1[0] - P[0]) * (Q2[1] - P[1]) - (Q2[0] - P[0]) * (Q1[1] - P[1]))
        if area2 < 1e-300:
            continue
        U_, V_ = np.meshgrid(ub, xv, indexing="ij")
        W_ = np.outer(uw, wv) * U_ * area2
        E = Q1[None, None, :] + V_[..., None] * (Q2 - Q1)[None, None, :]
        X = P[None, None, :] + U_[..., None] * (E - P[None, None, :])
        pts_y.append(X[..., 0].ravel())
        pts_r.append(X[..., 1].ravel())
        wts.append(W_.ravel())
    return np.concatenate(pts_y), np.concatenate(pts_r), np.concatenate(wts)


def green_convolve(f, dims, ty1, tr, gauss=3, near_levels=3):
    """(-Delta)^{-1} f = C_N int |y - z|^(2-N) f(z) dz at target points (y1, r).

    f is interpolated by bicubic splines (even in r).  Cells away from the target
    use a gauss x gauss product rule; the 3x3 block of cells around the target is
    split into triangles with apex at the target and integrated in Duffy
    coordinates with near_levels geometric refinements towards the apex.
    """
    g = f.grid
    N = dims.N
    ty1 = np.atleast_1d(np.asarray(ty1, float))
    tr = np.atleast_1d(np.asarray(tr, float))
    y1n, rn = g.y1, g.r
    if (np.any(ty1 < y1n[0]) or np.any(ty1 > y1n[-1]) or np.any(tr < 0)
            or np.any(tr > rn[-1])):
        raise ValueError("target point outside grid coverage")
    spl = _interpolant(f)
    x, w = gauss_legendre(gauss)
    ya, yb = y1n[:-1], y1n[1:]
    ra, rb = rn[:-1], rn[1:]
    gy = (0.5 * (yb - ya)[:, None] * x + 0.5 * (yb + ya)[:, None])        # (ncy, g)
    gwy = 0.5 * (yb - ya)[:, None] * w
    gr = (0.5 * (rb - ra)[:, None] * x + 0.5 * (rb + ra)[:, None])
    gwr = 0.5 * (rb - ra)[:, None] * w
    ncy, ncr = len(ya), len(ra)
    PY = np.broadcast_to(gy[:, None, :, None], (ncy, ncr, gauss, gauss))
    PR = np.broadcast_to(gr[None, :, None, :], (ncy, ncr, gauss, gauss))
    PW = gwy[:, None, :, None] * gwr[None, :, None, :]
    fv = spl.ev(PY.ravel(), PR.ravel()).reshape(PY.shape)
    PWf = PW * fv * PR ** (N - 2)
    upanels = np.r_[0.0, 2.0 ** -np.arange(near_levels, -1, -1.0)]
    out = np.empty(len(ty1))
    for t in range(len(ty1)):
        iy = int(np.clip(np.searchsorted(y1n, ty1[t]) - 1, 0, ncy - 1))
        ir = int(np.clip(np.searchsorted(rn, tr[t]) - 1, 0, ncr - 1))
        ilo, ihi = max(iy - 1, 0), min(iy + 2, ncy)
        klo, khi = max(ir - 1, 0), min(ir + 2, ncr)
        wmask = PWf.copy()
        wmask[ilo:ihi, klo:khi] = 0.0
        far = kernels.riesz_sum(ty1[t:t + 1], tr[t:t + 1], np.ascontiguousarray(PY.ravel()),
                                np.ascontiguousarray(PR.ravel()), wmask.ravel(), N)[0]
        near = 0.0
        for i in range(ilo, ihi):
            for k in range(klo, khi):
                P = np.array([min(max(ty1[t], ya[i]), yb[i]), min(max(tr[t], ra[k]), rb[k])])
                qy, qr, qw = _duffy_cell(P, ya[i], yb[i], ra[k], rb[k], 2 * gauss + 2, upanels)
                vals = spl.ev(qy, qr) * qr ** (N - 2) * qw
                keep = (qy - ty1[t]) ** 2 + (qr - tr[t]) ** 2 > 0
                near += np.sum(vals[keep] * kernels.riesz_kernel(ty1[t], tr[t], qy[keep],
                                                                  qr[keep], N))
        out[t] = dims.green_const * (far + near)
    return out


def green_convolve_field(f, dims, grid=None):
    """green_convolve evaluated at the nodes of a grid (default: the source grid)."""
    grid = grid or f.grid
    Y, R = grid.mesh()
    vals = green_convolve(f, dims, Y.ravel(), R.ravel())
    return Field(grid, vals.reshape(grid.shape))


# ---------------------------------------------------------------------------
# interaction inequalities

def lemma_a1_ratio(y, xi, xj, alpha, beta, sigma):
    """LHS / (bracket without C) of the two-bubble product bound; bound is 2^sigma."""
    a = np.linalg.norm(y - xi, axis=-1)
    b = np.linalg.norm(y - xj, axis=-1)
    d = np.linalg.norm(xi - xj, axis=-1)
    lhs = (1 + a) ** -alpha * (1 + b) ** -beta
    s = alpha + beta - sigma
    rhs = (1 + d) ** -sigma * ((1 + b) ** -s + (1 + a) ** -s)
    return lhs / rhs


def lemma_a1_constant(sigma):
    return 2.0 ** sigma


def riesz_radial(y_abs, sigma, N, spec=None):
    """int_{R^N} |y-z|^(2-N) (1+|z|)^-(2+sigma) dz, exact by Newton's theorem:
    omega_{N-1} int rho^(N-1) (1+rho)^-(2+sigma) max(|y|, rho)^(2-N) drho."""
    spec = spec or QuadratureSpec()
    dims = DimensionParams(N)
    g = lambda r: (1 + r) ** -(2.0 + sigma) * np.maximum(y_abs, r) ** (2.0 - N)
    # a break below the finest geometric panel adds nothing and overflows y^(2-N)
    return radial_integral(g, dims, spec, breaks=(y_abs,) if y_abs > 1e-30 else ())


def lemma_a2_ratio(y_abs, sigma, N, spec=None):
    return (1 + y_abs) ** sigma * riesz_radial(y_abs, sigma, N, spec).value


def lemma_a2_constant(sigma, N):
    """Explicit bound omega_{N-1} (2^sigma/(N-2-sigma) + 1/sigma).

    The inner part |y|^(2-N) int_0^|y| is at most |y|^-sigma/(N-2-sigma) (and at
    most 1/N for |y| < 1); the outer part int_|y|^inf rho (1+rho)^-(2+sigma) is at
    most (1+|y|)^-sigma / sigma.
    """
    om = sphere_area(N - 1)
    return om * (2.0 ** sigma / (N - 2 - sigma) + 1.0 / sigma)


def lemma_a3_ratio(y, centers, i, mu, gamma_, theta):
    """sum_j (1+mu|y-x_j|)^-gamma divided by (1+mu|y-x_i|)^-theta."""
    s = sum((1 + mu * np.linalg.norm(y - c, axis=-1)) ** -gamma_ for c in centers)
    return s * (1 + mu * np.linalg.norm(y - centers[i], axis=-1)) ** theta


def lemma_a3_constant(gamma_, L):
    """Bound for theta = gamma, mu >= 1, y in B_1(x_i), spacing L > 3."""
    return 1.0 + 2.0 * zeta(gamma_) * (2.0 / (L - 1.0)) ** gamma_
