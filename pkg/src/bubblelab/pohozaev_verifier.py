"""Local Pohozaev identities on balls B_delta(x_j) around the bubble centers.

For an axisymmetric u the sphere |y - x_j| = delta is parametrized by the
polar angle t from the axis, nu = (cos t, sin t) in the (y1, r) plane, and
dS = omega_{N-2} delta^(N-1) sin^(N-2) t dt.  Values and gradients of u off the
grid come from the exact bubble U_j plus a tensor cubic interpolant of the
remainder u - U_j, so the large bubble part never goes through the fit.
"""
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import RectBivariateSpline

from .profile_core import (Field, bubble_radial, bubble_radial_slope, eval_gradQ_axisym,
                           eval_Q_axisym, sphere_area)
from .profile_core import DimensionParams
from .quadrature_constants import composite_nodes, polar_quad, QuadratureSpec, radial_integral


def pohozaev_theta(N, beta, tau):
    """theta = max{(beta+4-N)/(beta+1-2 tau), 1}."""
    den = beta + 1 - 2 * tau
    if den <= 0:
        raise ValueError("beta + 1 - 2 tau must be positive")
    return max((beta + 4 - N) / den, 1.0)


def theta_regime(N, beta, tau):
    """'theta>1' when (beta+4-N)/(beta+1-2tau) > 1, i.e. tau > (N-3)/2; else 'theta=1'."""
    return "theta>1" if (beta + 4 - N) / (beta + 1 - 2 * tau) > 1 else "theta=1"


@dataclass(frozen=True)
class PohozaevConfig:
    theta: float
    delta: float
    order: int = 32
    j: int = 0
    i: int = 1

    @classmethod
    def build(cls, N, beta, tau, mu, j=0, i=1, order=32, theta=None):
        th = pohozaev_theta(N, beta, tau) if theta is None else theta
        return cls(th, mu ** -th, order, j, i)


# ---------------------------------------------------------------------------
# sampling u off the grid

class CubicSampler:
    """Bicubic spline of a grid field, mirrored so that it is even in r."""

    def __init__(self, field_):
        g = field_.grid
        r = np.r_[-g.r[:0:-1], g.r]
        v = np.concatenate([field_.values[:, :0:-1], field_.values], axis=1)
        self.spline = RectBivariateSpline(np.asarray(g.y1), r, v, kx=3, ky=3, s=0)

    def __call__(self, y1, r):
        y1 = np.asarray(y1, float)
        r = np.asarray(r, float)
        sp = self.spline
        return (sp(y1, r, grid=False), sp(y1, r, dx=1, grid=False),
                sp(y1, r, dy=1, grid=False))


class BallSampler:
    """u = U_j + v near x_j, with U_j exact and v = u - U_j interpolated."""

    def __init__(self, u, ansatz, j):
        self.ansatz = ansatz
        self.j = j
        b = ansatz.bubbles[j]
        self.x1, self.mu, self.N = b.x1, b.mu, ansatz.dims.N
        if isinstance(u, Field):
            Y, R = u.grid.mesh()
            rho2 = (Y - self.x1) ** 2 + R * R
            self.rem = CubicSampler(Field(u.grid, u.values - bubble_radial(rho2, self.mu, self.N)))
        else:
            self.rem = u  # callable (y1, r) -> (v, v_y1, v_r)

    def bubble(self, y1, r):
        dy = y1 - self.x1
        rho2 = dy * dy + r * r
        U = bubble_radial(rho2, self.mu, self.N)
        g = bubble_radial_slope(rho2, self.mu, self.N)
        return U, g * dy, g * r

    def remainder(self, y1, r):
        return self.rem(y1, r)


# ---------------------------------------------------------------------------
# quadrature on spheres and balls

def sphere_nodes(N, radius, order, panels=4):
    t, w = composite_nodes(np.linspace(0.0, np.pi, panels + 1), order)
    return t, sphere_area(N - 2) * radius ** (N - 1) * w * np.sin(t) ** (N - 2)


def sphere_integral(f, center, radius, dims, order=32, min_radius=0.0):
    """int over the sphere |y - (center, 0)| = radius of an axisymmetric f(y1, r, nu1, nur).

    Returns (value, error) with the error from orders n and 2n.
    """
    if radius <= min_radius:
        raise ValueError("radius below grid resolution")
    vals = []
    for n in (order, 2 * order):
        t, w = sphere_nodes(dims.N, radius, n)
        c, s = np.cos(t), np.sin(t)
        vals.append(np.sum(w * f(center + radius * c, radius * s, c, s)))
    return vals[1], abs(vals[1] - vals[0])


def ball_nodes(N, center, radius, order, focus=()):
    br = [0.0] + [radius * 2.0 ** -k for k in range(12, 0, -1)] + [radius]
    br += [f for f in focus if 0 < f < radius]
    rho, wr = composite_nodes(np.unique(br), order)
    t, wt = composite_nodes(np.linspace(0.0, np.pi, 5), order)
    R, T = np.meshgrid(rho, t, indexing="ij")
    W = sphere_area(N - 2) * np.outer(wr, wt) * R ** (N - 1) * np.sin(T) ** (N - 2)
    return center + R * np.cos(T), R * np.sin(T), R, W


# ---------------------------------------------------------------------------
# reports

@dataclass
class PohozaevReport:
    identity: str
    terms: dict
    rhs: float
    residual: float
    interaction: float = None
    potential: float = None
    predicted: dict = field(default_factory=dict)
    quadrature_error: float = 0.0
    self_cancellation: float = 0.0  # bubble-only part of the interaction, zero up to round-off

    def ratio(self):
        return self.interaction / self.potential

    def to_json(self):
        return json.dumps({k: v for k, v in self.__dict__.items()}, indent=2, sort_keys=True,
                          default=float)


def _check_ball(ansatz, j, delta):
    xj = ansatz.bubbles[j].x1
    for k, b in enumerate(ansatz.bubbles):
        if k == j:
            continue
        d = abs(b.x1 - xj)
        if ansatz.period is not None:
            d = min(d, ansatz.period - d)
        if d - ansatz.cutoff.outer_radius < delta:
            raise ValueError("ball B_delta(x_%d) overlaps the cutoff annulus of bubble %d" % (j, k))


def _surface_data(S, y1, r, c, s):
    U, Uy, Ur = S.bubble(y1, r)
    v, vy, vr = S.remainder(y1, r)
    return U, Uy, Ur, v, vy, vr, Uy * c + Ur * s, vy * c + vr * s


def dilation_identity(u, j, cfg, ansatz, univ=None, derived=None):
    """Terms of the dilation identity on B_delta(x_j).

    T1 = -int_dB d_nu u <y-x, grad u>, T2 = 1/2 int_dB |grad u|^2 <y-x, nu>,
    T3 = (2-N)/2 int_dB d_nu u u,      T4 = 1/2 int_dB Q u^2 <nu, y-x>,
    T5 = -1/2 int_B u^2 <grad Q, y-x>,  T6 = -int_B Q u^2,
    rhs = 1/2* int_dB u^(2*) <nu, y-x>; residual = sum T - rhs.
    Interaction = T1+T2+T3-rhs (gradient and power boundary terms), potential =
    -(T4+T5+T6); the identity says they agree.
    """
    _check_ball(ansatz, j, cfg.delta)
    S = BallSampler(u, ansatz, j)
    N, d, pot = ansatz.dims.N, cfg.delta, ansatz.potential
    ts = 2.0 * N / (N - 2)
    x = S.x1

    def surf(n):
        t, w = sphere_nodes(N, d, n)
        c, s = np.cos(t), np.sin(t)
        y1, r = x + d * c, d * s
        U, Uy, Ur, v, vy, vr, dU, dv = _surface_data(S, y1, r, c, s)
        Q = eval_Q_axisym(pot, y1, r)
        gU2 = Uy ** 2 + Ur ** 2
        out = {}
        # bubble part + remainder part, kept separate to avoid cancellation
        out["T1"] = (-d * np.sum(w * dU ** 2), -d * np.sum(w * dv * (2 * dU + dv)))
        out["T2"] = (0.5 * d * np.sum(w * gU2),
                     0.5 * d * np.sum(w * (vy * (2 * Uy + vy) + vr * (2 * Ur + vr))))
        out["T3"] = ((2 - N) / 2.0 * np.sum(w * U * dU),
                     (2 - N) / 2.0 * np.sum(w * (v * dU + U * dv + v * dv)))
        out["T4"] = (0.5 * d * np.sum(w * Q * U * U), 0.5 * d * np.sum(w * Q * v * (2 * U + v)))
        with np.errstate(invalid="ignore"):
            du = U ** ts * np.expm1(ts * np.log1p(v / U))
        out["rhs"] = (d / ts * np.sum(w * U ** ts), d / ts * np.sum(w * du))
        return out

    def vol(n):
        focus = [abs(x - pot.period_L * np.round(x / pot.period_L))]
        y1, r, R, W = ball_nodes(N, x, d, n, focus)
        U, Uy, Ur = S.bubble(y1.ravel(), r.ravel())
        v, _, _ = S.remainder(y1.ravel(), r.ravel())
        Q = eval_Q_axisym(pot, y1.ravel(), r.ravel())
        Qy, Qr = eval_gradQ_axisym(pot, y1.ravel(), r.ravel())
        Wf = W.ravel()
        dot = Qy * (y1.ravel() - x) + Qr * r.ravel()
        return {"T5": (-0.5 * np.sum(Wf * U * U * dot), -0.5 * np.sum(Wf * v * (2 * U + v) * dot)),
                "T6": (-np.sum(Wf * Q * U * U), -np.sum(Wf * Q * v * (2 * U + v)))}

    parts = {**surf(cfg.order), **vol(cfg.order)}
    fine = {**surf(2 * cfg.order), **vol(cfg.order * 3 // 2)}
    terms = {k: float(a + b) for k, (a, b) in parts.items()}
    err = max(abs(sum(parts[k]) - sum(fine[k])) for k in parts)
    rhs = terms.pop("rhs")
    residual = sum(terms.values()) - rhs
    # the bubble parts of T1+T2+T3-rhs cancel exactly (U_j solves the unperturbed
    # equation); dropping them keeps the interaction free of that cancellation
    self_part = float(sum(parts[k][0] for k in ("T1", "T2", "T3")) - parts["rhs"][0])
    inter = float(sum(parts[k][1] for k in ("T1", "T2", "T3")) - parts["rhs"][1])
    potl = -(terms["T4"] + terms["T5"] + terms["T6"])
    pred = {"potential_bubble": -float(sum(parts[k][0] for k in ("T4", "T5", "T6")))}
    if univ is not None:
        mu = S.mu
        R = mu * d
        beta = pot.beta
        Jb = radial_integral(lambda rr: rr ** beta * bubble_radial(rr * rr, 1.0, N) ** 2,
                             DimensionParams(N), r_max=R).value
        pred["potential"] = (beta + 2) / 2.0 * pot.a * mu ** -(beta + 2) * Jb
        pred["potential_order"] = -(beta + 2)
        if derived is not None:
            ssum = sum(abs(b.x1 - x) ** -(N - 2) for k, b in enumerate(ansatz.bubbles) if k != j)
            pred["interaction_whole_space"] = derived.Bprime.value * mu ** -(N - 2) * ssum
            pred["interaction_ball"] = derived.Bprime_ball.value * mu ** -(N - 2) * ssum
    return PohozaevReport("dilation", terms, rhs, residual, inter, potl, pred, err, self_part)


def translation_identity(u, j, i, cfg, ansatz, univ=None, shift=None):
    """Terms of the translation identity in direction i on B_delta(x_j).

    S1 = -int_dB d_nu u d_i u, S2 = 1/2 int_dB |grad u|^2 nu_i,
    S3 = 1/2 int_dB Q u^2 nu_i, S4 = -1/2 int_B d_i Q u^2,
    rhs = 1/2* int_dB u^(2*) nu_i; residual = S1+S2+S3+S4 - rhs.
    Directions i >= 2 vanish identically for axisymmetric u.
    """
    _check_ball(ansatz, j, cfg.delta)
    N = ansatz.dims.N
    if not 1 <= i <= N:
        raise ValueError("direction index must be in 1..N")
    if i >= 2:
        z = {"S1": 0.0, "S2": 0.0, "S3": 0.0, "S4": 0.0}
        return PohozaevReport("translation", z, 0.0, 0.0)
    S = BallSampler(u, ansatz, j)
    d, pot = cfg.delta, ansatz.potential
    ts = 2.0 * N / (N - 2)
    x = S.x1

    def surf(n):
        t, w = sphere_nodes(N, d, n)
        c, s = np.cos(t), np.sin(t)
        y1, r = x + d * c, d * s
        U, Uy, Ur, v, vy, vr, dU, dv = _surface_data(S, y1, r, c, s)
        Q = eval_Q_axisym(pot, y1, r)
        wc = w * c
        with np.errstate(invalid="ignore"):
            du = U ** ts * np.expm1(ts * np.log1p(v / U))
        return {
            "S1": (-np.sum(w * dU * Uy), -np.sum(w * (dU * vy + dv * Uy + dv * vy))),
            "S2": (0.5 * np.sum(wc * (Uy ** 2 + Ur ** 2)),
                   0.5 * np.sum(wc * (vy * (2 * Uy + vy) + vr * (2 * Ur + vr)))),
            "S3": (0.5 * np.sum(wc * Q * U * U), 0.5 * np.sum(wc * Q * v * (2 * U + v))),
            "rhs": (np.sum(wc * U ** ts) / ts, np.sum(wc * du) / ts),
        }

    def vol(n):
        focus = [abs(x - pot.period_L * np.round(x / pot.period_L))]
        y1, r, R, W = ball_nodes(N, x, d, n, focus)
        U, _, _ = S.bubble(y1.ravel(), r.ravel())
        v, _, _ = S.remainder(y1.ravel(), r.ravel())
        Qy, _ = eval_gradQ_axisym(pot, y1.ravel(), r.ravel())
        Wf = W.ravel()
        return {"S4": (-0.5 * np.sum(Wf * Qy * U * U), -0.5 * np.sum(Wf * Qy * v * (2 * U + v)))}

    parts = {**surf(cfg.order), **vol(cfg.order)}
    fine = {**surf(2 * cfg.order), **vol(cfg.order * 3 // 2)}
    terms = {k: float(a + b) for k, (a, b) in parts.items()}
    err = max(abs(sum(parts[k]) - sum(fine[k])) for k in parts)
    rhs = terms.pop("rhs")
    residual = sum(terms.values()) - rhs
    self_part = float(parts["S1"][0] + parts["S2"][0] - parts["rhs"][0])
    inter = float(parts["S1"][1] + parts["S2"][1] - parts["rhs"][1])
    potl = -(terms["S3"] + terms["S4"])
    mu, beta, a = S.mu, pot.beta, pot.a
    s = x - pot.period_L * np.round(x / pot.period_L) if shift is None else shift
    R = mu * d
    # exact volume term of the unit bubble at offset x0 = mu s from the lattice point
    x0 = mu * s
    mom = polar_quad(lambda y1, r: (np.hypot(y1 + x0, r) ** (beta - 2) * (y1 + x0)
                                    * bubble_radial(y1 * y1 + r * r, 1.0, N) ** 2),
                     ansatz.dims, rho_max=R, rho_focus=[abs(x0)] if 0 < abs(x0) < R else (),
                     spec=QuadratureSpec(n_nodes=16)).value
    pred = {"S4": -0.5 * a * beta * mu ** -(beta + 1) * mom,
            "boundary_Q_order": -(beta + 2)}
    if univ is not None:
        Jp = radial_integral(lambda rr: (N + beta - 2.0) / N * rr ** (beta - 2)
                             * bubble_radial(rr * rr, 1.0, N) ** 2, DimensionParams(N),
                             r_max=R).value
        pred["S4_linear"] = -0.5 * a * beta * s * mu ** -beta * Jp
    return PohozaevReport("translation", terms, rhs, residual, inter, potl, pred, err, self_part)


@dataclass
class FReport:
    F1: float
    F2: dict
    d: float
    predicted_exponents: dict
    budget_exponent: float


def boundary_term_estimates(u, j, cfg, ansatz, shifts, tau, i=1):
    """F1 (|y-x_jL|^beta weighted boundary integral of the non-local part of u)
    and the four F2 pieces bounding the remainder of the potential expansion."""
    _check_ball(ansatz, j, cfg.delta)
    S = BallSampler(u, ansatz, j)
    N, d, pot = ansatz.dims.N, cfg.delta, ansatz.potential
    beta, th, mu = pot.beta, cfg.theta, S.mu
    dd = float(np.max(np.abs(shifts))) if len(shifts) else 0.0
    t, w = sphere_nodes(N, d, 2 * cfg.order)
    c, s = np.cos(t), np.sin(t)
    y1, r = S.x1 + d * c, d * s
    v, _, _ = S.remainder(y1, r)
    nu = c if i == 1 else np.zeros_like(c)
    F1 = float(abs(pot.a) * d ** beta * np.sum(w * v * v * nu))
    env = np.zeros_like(y1)
    for b in ansatz.bubbles:
        rho = np.sqrt((y1 - b.x1) ** 2 + r * r)
        env += b.mu ** ((N - 2) / 2.0) * (1 + b.mu * rho) ** -(N - 2.0)
    base = float(np.sum(w * env * env))
    F2 = {"F2_1": dd ** beta * base, "F2_2": d ** (beta - 1) * dd * base,
          "F2_3": d * dd ** (beta - 1) * base, "F2_4": d ** (beta + 1) * base}
    pe = {
        "F1": -min(N - 2 + 2 * (beta + 4 - N) + (beta + N - 1) * th, N - 2 + (beta + 1 - 2 * tau) * th),
        "F2_1": -th, "F2_2": -beta * th, "F2_3": -(3 * th - 1),
        "F2_4": -(N - 2 + (beta + 4 - N) * th),
    }
    return FReport(F1, F2, dd, pe, -(beta + 2))
