"""Bubble profiles, cutoff ansatz, kernel functions, potential and weighted norms.

Every object lives in R^N with N >= 5.  Lattice centers sit on the y1-axis,
so most evaluations are done in axisymmetric coordinates (y1, r) where
r = |(y2, ..., yN)|.  Point evaluation in full R^N is also supported.
"""
from dataclasses import dataclass, field
from math import gamma, pi

import numpy as np

from . import kernels


def sphere_area(n):
    """Surface measure of the unit n-sphere in R^(n+1)."""
    return 2.0 * pi ** ((n + 1) / 2.0) / gamma((n + 1) / 2.0)


def bubble_amplitude(N):
    return (N * (N - 2.0)) ** ((N - 2.0) / 4.0)


@dataclass(frozen=True)
class DimensionParams:
    N: int

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 5:
            raise ValueError("dimension must be an integer >= 5, got %r" % (self.N,))

    @property
    def two_star(self):
        return 2.0 * self.N / (self.N - 2.0)

    @property
    def p(self):
        """Nonlinearity exponent 2* - 1."""
        return (self.N + 2.0) / (self.N - 2.0)

    @property
    def sphere_area(self):
        """omega_{N-1}, area of the unit sphere in R^N."""
        return sphere_area(self.N - 1)

    @property
    def green_const(self):
        """C_N with (-Delta)^{-1} f = C_N int |y-z|^(2-N) f(z) dz.

        Equals 1/(N(N-2)|B_1|) = 1/((N-2) omega_{N-1}).
        """
        return 1.0 / ((self.N - 2.0) * self.sphere_area)

    @property
    def A(self):
        return bubble_amplitude(self.N)


@dataclass(frozen=True)
class PotentialSpec:
    """Q(y) = a d^beta + remainder_scale d^(beta+1), d = distance to the nearest
    lattice point (k L, 0, ..., 0), clipped to [0, clip_ceiling]."""

    a: float = 1.0
    beta: float = 3.5
    period_L: float = 8.0
    remainder_scale: float = 0.0
    clip_ceiling: float = None
    clip: bool = True

    def __post_init__(self):
        if self.period_L <= 0:
            raise ValueError("period_L must be positive")
        if self.a < 0 and not self.clip:
            raise ValueError("a < 0 without clipping gives Q < 0 near the lattice")

    @property
    def ceiling(self):
        if self.clip_ceiling is not None:
            return float(self.clip_ceiling)
        return abs(self.a) * (self.period_L / 2.0) ** self.beta

    def admissible(self, N):
        return N - 4 < self.beta < N - 2


@dataclass(frozen=True)
class Bubble:
    center: tuple
    mu: float

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError("bubble height must be positive")

    @property
    def x1(self):
        return float(self.center[0])


@dataclass(frozen=True)
class CutoffSpec:
    """Radial C-infinity step: 1 on |z| <= inner, 0 on |z| >= outer."""

    inner_radius: float = 1.0
    outer_radius: float = 2.0

    def __post_init__(self):
        if not 0 < self.inner_radius < self.outer_radius:
            raise ValueError("need 0 < inner_radius < outer_radius")


@dataclass(frozen=True)
class WeightedNormParams:
    tau: float

    @classmethod
    def default(cls, N, beta):
        vartheta = min((N - 4) / 2.0, beta / 2.0) / 4.0
        return cls(tau=1.0 + vartheta)

    @property
    def vartheta(self):
        return self.tau - 1.0

    def validate(self, N):
        if not 1.0 < self.tau < (N - 2) / 2.0:
            raise ValueError("tau must lie in (1, (N-2)/2)")


@dataclass
class Ansatz:
    dims: DimensionParams
    bubbles: list
    potential: PotentialSpec
    cutoff: CutoffSpec = field(default_factory=CutoffSpec)
    period: float = None  # wrapped lattice: y1 is periodic with this period

    def __post_init__(self):
        xs = np.array([b.x1 for b in self.bubbles])
        for b in self.bubbles:
            if np.any(np.asarray(b.center, float)[1:] != 0.0):
                raise ValueError("lattice ansatz needs centers on the y1-axis")
        if len(np.unique(xs)) != len(xs):
            raise ValueError("bubble centers must be distinct")

    @classmethod
    def lattice(cls, dims, m, L, mu, potential, shifts=None, cutoff=None, wrapped=False):
        shifts = np.zeros(m + 1) if shifts is None else np.asarray(shifts, float)
        if np.any(np.abs(shifts) >= L / 4.0):
            raise ValueError("shifts must satisfy |s_j| < L/4")
        bubbles = []
        for j in range(m + 1):
            c = np.zeros(dims.N)
            c[0] = j * L + shifts[j]
            bubbles.append(Bubble(tuple(c), float(mu)))
        return cls(dims, bubbles, potential, cutoff or CutoffSpec(),
                   period=(m + 1) * L if wrapped else None)

    @property
    def m(self):
        return len(self.bubbles) - 1

    @property
    def centers(self):
        return np.array([b.x1 for b in self.bubbles])

    @property
    def mus(self):
        return np.array([b.mu for b in self.bubbles])

    def with_params(self, mu=None, centers=None):
        mus = self.mus if mu is None else np.broadcast_to(np.asarray(mu, float), self.mus.shape)
        cs = self.centers if centers is None else np.asarray(centers, float)
        bubbles = []
        for c, mm in zip(cs, mus):
            v = np.zeros(self.dims.N)
            v[0] = c
            bubbles.append(Bubble(tuple(v), float(mm)))
        return Ansatz(self.dims, bubbles, self.potential, self.cutoff, self.period)


# ---------------------------------------------------------------------------
# bubble and kernel functions

def bubble_radial(rho2, mu, N):
    """U as a function of the squared distance to its center."""
    return bubble_amplitude(N) * (mu / (1.0 + mu * mu * rho2)) ** ((N - 2) / 2.0)


def bubble_mu_derivative(rho2, mu, N):
    t = mu * mu * rho2
    return (bubble_amplitude(N) * (N - 2) / 2.0 * mu ** ((N - 4) / 2.0)
            * (1.0 - t) / (1.0 + t) ** (N / 2.0))


def bubble_radial_slope(rho2, mu, N):
    """g with grad U = g * (y - x)."""
    return -bubble_amplitude(N) * (N - 2) * mu ** ((N + 2) / 2.0) / (1.0 + mu * mu * rho2) ** (N / 2.0)


def _as_points(y, N):
    y = np.asarray(y, float)
    if y.shape[-1] != N:
        raise ValueError("points must have last dimension N=%d" % N)
    return y


def eval_bubble(b, dims, y):
    y = _as_points(y, dims.N)
    d = y - np.asarray(b.center, float)
    return bubble_radial(np.sum(d * d, axis=-1), b.mu, dims.N)


def eval_bubble_laplacian(b, dims, y):
    """Closed-form Laplacian, equal to -U^(2*-1)."""
    return -eval_bubble(b, dims, y) ** dims.p


def eval_kernel(b, dims, l, y):
    """psi_0 = dU/dmu, psi_j = dU/dy_j."""
    if int(l) != l or not 0 <= l <= dims.N:
        raise ValueError("kernel index must be in 0..N")
    y = _as_points(y, dims.N)
    d = y - np.asarray(b.center, float)
    rho2 = np.sum(d * d, axis=-1)
    if l == 0:
        return bubble_mu_derivative(rho2, b.mu, dims.N)
    return bubble_radial_slope(rho2, b.mu, dims.N) * d[..., l - 1]


def kernel_axisym(l, dy1, r, mu, N):
    """psi_0 or psi_1 in (y1 - x1, r) coordinates."""
    rho2 = dy1 * dy1 + r * r
    if l == 0:
        return bubble_mu_derivative(rho2, mu, N)
    if l == 1:
        return bubble_radial_slope(rho2, mu, N) * dy1
    raise ValueError("only psi_0 and psi_1 are axisymmetric")


@dataclass
class KernelBasis:
    bubble: Bubble
    dims: DimensionParams

    def eval(self, l, y):
        return eval_kernel(self.bubble, self.dims, l, y)

    def eval_axisym(self, l, y1, r):
        return kernel_axisym(l, np.asarray(y1) - self.bubble.x1, np.asarray(r), self.bubble.mu, self.dims.N)


# ---------------------------------------------------------------------------
# cutoff

def _g(x):
    out = np.zeros_like(x)
    pos = x > 0
    out[pos] = np.exp(-1.0 / x[pos])
    return out


def _g1(x):
    out = np.zeros_like(x)
    pos = x > 0
    xp = x[pos]
    out[pos] = np.exp(-1.0 / xp) / xp ** 2
    return out


def _g2(x):
    out = np.zeros_like(x)
    pos = x > 0
    xp = x[pos]
    out[pos] = np.exp(-1.0 / xp) * (1.0 / xp ** 4 - 2.0 / xp ** 3)
    return out


def cutoff_profile(c, t):
    """Radial profile xi(t) with first and second derivatives in t."""
    t = np.asarray(t, float)
    w = c.outer_radius - c.inner_radius
    s = np.clip((t - c.inner_radius) / w, 0.0, 1.0)
    a, b = _g(1.0 - s), _g(s)
    a1, b1 = -_g1(1.0 - s), _g1(s)
    a2, b2 = _g2(1.0 - s), _g2(s)
    den = a + b
    xi = a / den
    d1 = (a1 * b - a * b1) / den ** 2
    d2 = ((a2 * b - a * b2) * den - 2.0 * (a1 * b - a * b1) * (a1 + b1)) / den ** 3
    return xi, d1 / w, d2 / w ** 2


def eval_cutoff(c, z, order=0, N=None):
    """xi(z), grad xi(z) or Laplacian of xi at points z in R^N."""
    if order not in (0, 1, 2):
        raise ValueError("order must be 0, 1 or 2")
    z = np.asarray(z, float)
    n = z.shape[-1] if N is None else N
    t = np.sqrt(np.sum(z * z, axis=-1))
    xi, d1, d2 = cutoff_profile(c, t)
    if order == 0:
        return xi
    safe = np.where(t > 0, t, 1.0)
    if order == 1:
        return (d1 / safe)[..., None] * z
    return d2 + (n - 1) * d1 / safe


# ---------------------------------------------------------------------------
# axisymmetric evaluation of the ansatz

def axial_offset(y1, x1, period):
    d = np.asarray(y1, float) - x1
    if period is not None:
        d = d - period * np.round(d / period)
    return d


def bubble_terms(ansatz, j, y1, r):
    """Pieces of bubble j at nodes: U, grad U (axial, radial), xi, xi', Delta xi."""
    b = ansatz.bubbles[j]
    N = ansatz.dims.N
    dy = axial_offset(y1, b.x1, ansatz.period)
    r = np.asarray(r, float)
    rho2 = dy * dy + r * r
    U = bubble_radial(rho2, b.mu, N)
    g = bubble_radial_slope(rho2, b.mu, N)
    t = np.sqrt(rho2)
    xi, d1, d2 = cutoff_profile(ansatz.cutoff, t)
    safe = np.where(t > 0, t, 1.0)
    lap_xi = d2 + (N - 1) * d1 / safe
    # grad xi . grad U = xi'(t)/t * g * t^2
    grad_dot = d1 * g * t
    return dict(dy=dy, rho2=rho2, t=t, U=U, g=g, xi=xi, dxi=d1, lap_xi=lap_xi, grad_dot=grad_dot)


def eval_W_axisym(ansatz, y1, r):
    y1, r = np.broadcast_arrays(np.asarray(y1, float), np.asarray(r, float))
    out = np.zeros(y1.shape)
    for j in range(len(ansatz.bubbles)):
        bt = bubble_terms(ansatz, j, y1, r)
        out += bt["xi"] * bt["U"]
    return out


def eval_W(ansatz, y):
    """W(y) = sum_j xi(y - x_j) U_{x_j, mu}(y) at points y in R^N."""
    y = _as_points(y, ansatz.dims.N)
    r = np.sqrt(np.sum(y[..., 1:] ** 2, axis=-1))
    return eval_W_axisym(ansatz, y[..., 0], r)


def eval_Zij_axisym(ansatz, i, j, y1, r):
    """Z_{i,j} for the axisymmetric modes j = 1 (axial) and j = N+1 (dilation).

    Z_{i,j} = xi * dW_i/dx_{i,j} = -xi d/dy_j (xi U) for j <= N,
    Z_{i,N+1} = dW_i/dmu = xi dU/dmu.
    """
    N = ansatz.dims.N
    bt = bubble_terms(ansatz, i, y1, r)
    if j == N + 1:
        return bt["xi"] * bubble_mu_derivative(bt["rho2"], ansatz.bubbles[i].mu, N)
    if j == 1:
        safe = np.where(bt["t"] > 0, bt["t"], 1.0)
        dxi_axial = bt["dxi"] * bt["dy"] / safe
        return -bt["xi"] * (dxi_axial * bt["U"] + bt["xi"] * bt["g"] * bt["dy"])
    raise ValueError("axisymmetric Z only for j = 1 or j = N+1")


def eval_Zij(ansatz, i, j, y):
    N = ansatz.dims.N
    if not 0 <= i <= ansatz.m:
        raise ValueError("bubble index out of range")
    if not 1 <= j <= N + 1:
        raise ValueError("Z index must be in 1..N+1")
    y = _as_points(y, N)
    b = ansatz.bubbles[i]
    d = y - np.asarray(b.center, float)
    if ansatz.period is not None:
        d[..., 0] = axial_offset(y[..., 0], b.x1, ansatz.period)
    rho2 = np.sum(d * d, axis=-1)
    xi = eval_cutoff(ansatz.cutoff, d)
    if j == N + 1:
        return xi * bubble_mu_derivative(rho2, b.mu, N)
    grad_xi = eval_cutoff(ansatz.cutoff, d, order=1)[..., j - 1]
    U = bubble_radial(rho2, b.mu, N)
    dU = bubble_radial_slope(rho2, b.mu, N) * d[..., j - 1]
    return -xi * (grad_xi * U + xi * dU)


# ---------------------------------------------------------------------------
# potential

def lattice_distance2(p, y1, r):
    L = p.period_L
    dy = np.asarray(y1, float) - L * np.round(np.asarray(y1, float) / L)
    return dy * dy + np.asarray(r, float) ** 2, dy


def eval_Q_axisym(p, y1, r):
    d2, _ = lattice_distance2(p, y1, r)
    d = np.sqrt(d2)
    q = p.a * d ** p.beta + p.remainder_scale * d ** (p.beta + 1)
    if p.clip:
        q = np.clip(q, 0.0, p.ceiling)
    return q


def eval_Q(p, y):
    y = np.asarray(y, float)
    r = np.sqrt(np.sum(y[..., 1:] ** 2, axis=-1))
    return eval_Q_axisym(p, y[..., 0], r)


def eval_gradQ_axisym(p, y1, r):
    """(dQ/dy1, dQ/dr); zero where clipping is active."""
    d2, dy = lattice_distance2(p, y1, r)
    d = np.sqrt(d2)
    safe = np.where(d > 0, d, 1.0)
    q = p.a * d ** p.beta + p.remainder_scale * d ** (p.beta + 1)
    dq = (p.a * p.beta * safe ** (p.beta - 1) + p.remainder_scale * (p.beta + 1) * safe ** p.beta)
    dq = np.where(d > 0, dq, 0.0)
    if p.clip:
        dq = np.where((q > 0) & (q < p.ceiling), dq, 0.0)
    return dq * dy / safe, dq * np.asarray(r, float) / safe


# ---------------------------------------------------------------------------
# fields and weighted norms

@dataclass(frozen=True)
class Grid:
    """Tensor grid in (y1, r); r[0] = 0 is the symmetry axis."""

    y1: np.ndarray
    r: np.ndarray
    period: float = None

    def __post_init__(self):
        if len(self.y1) < 2 or len(self.r) < 2:
            raise ValueError("grid needs at least two nodes per direction")
        if self.r[0] != 0.0:
            raise ValueError("first radial node must sit on the axis")

    @property
    def shape(self):
        return (len(self.y1), len(self.r))

    def mesh(self):
        return np.meshgrid(self.y1, self.r, indexing="ij")

    @property
    def bounds(self):
        return (float(self.y1[0]), float(self.y1[-1]), 0.0, float(self.r[-1]))


@dataclass(frozen=True)
class Field:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, float)
        if v.shape != self.grid.shape:
            raise ValueError("values shape %s does not match grid %s" % (v.shape, self.grid.shape))
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, grid, f):
        Y, R = grid.mesh()
        return cls(grid, f(Y, R))


def _weight(ansatz, y1, r, tau, kind):
    N = ansatz.dims.N
    if kind == "star":
        e1, e2 = (N - 2) / 2.0, (N - 2) / 2.0 + tau
    else:
        e1, e2 = (N + 2) / 2.0, (N + 2) / 2.0 + tau
    images = (-2, -1, 0, 1, 2) if ansatz.period is not None else (0,)
    cs = np.concatenate([ansatz.centers + k * (ansatz.period or 0.0) for k in images])
    mus = np.tile(ansatz.mus, len(images))
    y1 = np.ascontiguousarray(np.asarray(y1, float).ravel())
    r = np.ascontiguousarray(np.asarray(r, float).ravel())
    return kernels.weight_sum(y1, r, cs, mus, e1, e2)


def star_weight(ansatz, y1, r, tau):
    shape = np.broadcast(np.asarray(y1), np.asarray(r)).shape
    y1, r = np.broadcast_arrays(np.asarray(y1, float), np.asarray(r, float))
    return _weight(ansatz, y1, r, tau, "star").reshape(shape)


def dstar_weight(ansatz, y1, r, tau):
    shape = np.broadcast(np.asarray(y1), np.asarray(r)).shape
    y1, r = np.broadcast_arrays(np.asarray(y1, float), np.asarray(r, float))
    return _weight(ansatz, y1, r, tau, "dstar").reshape(shape)


def _norm(f, ansatz, params, kind):
    if f.values.size == 0:
        raise ValueError("empty grid")
    Y, R = f.grid.mesh()
    w = _weight(ansatz, Y, R, params.tau, kind).reshape(Y.shape)
    return float(np.max(np.abs(f.values) / w))


def norm_star(f, ansatz, params):
    return _norm(f, ansatz, params, "star")


def norm_dstar(f, ansatz, params):
    return _norm(f, ansatz, params, "dstar")


def laplacian_fd(func, y, h=1e-3):
    """Fourth-order central-difference Laplacian of func at a point in R^N."""
    y = np.asarray(y, float)
    n = y.size
    f0 = func(y)
    total = 0.0
    for k in range(n):
        e = np.zeros(n)
        e[k] = h
        total += (-func(y + 2 * e) + 16 * func(y + e) - 30 * f0
                  + 16 * func(y - e) - func(y - 2 * e)) / (12 * h * h)
    return total
