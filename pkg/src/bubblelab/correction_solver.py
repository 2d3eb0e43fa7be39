"""Discrete correction problem on an axisymmetric (y1, r) grid.

The lattice lies on the y1-axis, so every object is invariant under rotations
about it and the Laplacian in R^N becomes

    f_rr + (N-2)/r f_r + f_{y1 y1},   with  (N-1) f_rr  on the axis.

Grids are graded: nodes are equidistributed for the density
1/h_far + n_core * mu / sqrt(1 + mu^2 (y - x_j)^2), which places n_core nodes
per core radius 1/mu and grows geometrically away from each center.
"""
import json
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.optimize import brentq

from .profile_core import (Ansatz, Bubble, Field, Grid, PotentialSpec, WeightedNormParams,
                           axial_offset,
                           bubble_terms, eval_Q_axisym, eval_W_axisym, eval_Zij_axisym,
                           norm_dstar, norm_star, sphere_area)


# ---------------------------------------------------------------------------
# grids

def _density_primitive(y, centers, mu, n_core, h_far):
    s = y / h_far
    for c in centers:
        s = s + n_core * np.arcsinh(mu * (y - c))
    return s


def _invert(S, targets, lo, hi):
    return np.array([brentq(lambda y: S(y) - t, lo, hi, xtol=1e-14) for t in targets])


def _graded_segment(a, b, S, count):
    s = np.linspace(S(a), S(b), count + 1)
    nodes = np.empty(count + 1)
    nodes[0], nodes[-1] = a, b
    nodes[1:-1] = _invert(S, s[1:-1], a, b)
    return nodes


@dataclass(frozen=True)
class AxiGrid(Grid):
    """Grid plus boundary descriptor; Dirichlet on the truncation boundary."""

    n_core: float = 8.0
    boundary: str = "dirichlet"

    @property
    def interior_mask(self):
        mask = np.ones(self.shape, bool)
        mask[:, -1] = False
        if self.period is None:
            mask[0, :] = False
            mask[-1, :] = False
        return mask


def make_axigrid(centers, mu, pad=4.0, r_max=None, n_core=8.0, h_far=0.25, period=None):
    """Graded grid around bubble centers on the axis.

    For a wrapped lattice (period given) the node pattern of one cell is tiled,
    so the grid is exactly invariant under a shift by one lattice spacing.
    """
    centers = np.sort(np.asarray(centers, float))
    r_max = pad if r_max is None else r_max
    Sr = lambda y: _density_primitive(y, [0.0], mu, n_core, h_far)
    nr = max(int(np.ceil(Sr(r_max) - Sr(0.0))), 4)
    r = _graded_segment(0.0, r_max, Sr, nr)
    if period is not None:
        L = period / len(centers)
        if not np.allclose(np.diff(centers), L):
            raise ValueError("wrapped grids need equally spaced centers")
        c0 = centers[0]
        S = lambda y: _density_primitive(y, [c0 - L, c0, c0 + L], mu, n_core, h_far)
        half = int(np.ceil(S(c0 + L / 2) - S(c0)))
        right = _graded_segment(c0, c0 + L / 2, S, half)
        cell = np.concatenate([2 * c0 - right[:0:-1], right[:-1]])
        y1 = np.concatenate([cell + k * L for k in range(len(centers))])
        return AxiGrid(y1, r, period=float(period), n_core=n_core)
    S = lambda y: _density_primitive(y, centers, mu, n_core, h_far)
    breaks = [centers[0] - pad]
    for k, c in enumerate(centers):
        breaks.append(c)
        if k + 1 < len(centers):
            breaks.append(0.5 * (c + centers[k + 1]))
    breaks.append(centers[-1] + pad)
    parts = []
    for a, b in zip(breaks[:-1], breaks[1:]):
        count = max(int(np.ceil(S(b) - S(a))), 2)
        parts.append(_graded_segment(a, b, S, count)[:-1])
    y1 = np.concatenate(parts + [np.array([breaks[-1]])])
    return AxiGrid(y1, r, period=None, n_core=n_core)


def refine_grid(grid, factor=2):
    """Insert factor-1 nodes per interval using the local parametrization."""
    def _ref(x):
        s = np.arange(len(x))
        t = np.linspace(0, len(x) - 1, factor * (len(x) - 1) + 1)
        from scipy.interpolate import CubicSpline
        return CubicSpline(s, x)(t)
    y1 = grid.y1
    if grid.period is not None:
        ext = np.concatenate([y1, [y1[0] + grid.period]])
        y1 = _ref(ext)[:-1]
    else:
        y1 = _ref(y1)
    r = _ref(grid.r)
    r[0] = 0.0
    return AxiGrid(y1, r, period=grid.period, n_core=grid.n_core * factor)


# ---------------------------------------------------------------------------
# discrete operators

def _second_diff_1d(x, periodic_len=None):
    """Rows of the 3-point nonuniform second derivative and first derivative."""
    n = len(x)
    if periodic_len is None:
        hm = np.r_[np.nan, np.diff(x)]
        hp = np.r_[np.diff(x), np.nan]
    else:
        xe = np.r_[x[-1] - periodic_len, x, x[0] + periodic_len]
        d = np.diff(xe)
        hm, hp = d[:-1], d[1:]
    c_m = 2.0 / (hm * (hm + hp))
    c_p = 2.0 / (hp * (hm + hp))
    c_0 = -2.0 / (hm * hp)
    f_m = -hp / (hm * (hm + hp))
    f_p = hm / (hp * (hm + hp))
    f_0 = (hp - hm) / (hm * hp)
    return (c_m, c_0, c_p), (f_m, f_0, f_p)


def laplacian_matrix(grid, N):
    """Sparse discrete Laplacian (rows for every node; boundary rows included)."""
    nx, nr = grid.shape
    idx = np.arange(nx * nr).reshape(nx, nr)
    rows, cols, vals = [], [], []
    (am, a0, ap), _ = _second_diff_1d(grid.y1, grid.period)
    I = np.arange(nx)
    for k in range(nr):
        lo = I - 1
        hi = I + 1
        if grid.period is not None:
            lo, hi = lo % nx, hi % nx
            ok = np.ones(nx, bool)
        else:
            ok = (I > 0) & (I < nx - 1)
        ii = I[ok]
        rows += [idx[ii, k]] * 3
        cols += [idx[lo[ok], k], idx[ii, k], idx[hi[ok], k]]
        vals += [am[ok], a0[ok], ap[ok]]
    (bm, b0, bp), (fm, f0, fp) = _second_diff_1d(grid.r)
    r = grid.r
    for k in range(1, nr - 1):
        w = (N - 2) / r[k]
        rows += [idx[:, k]] * 3
        cols += [idx[:, k - 1], idx[:, k], idx[:, k + 1]]
        vals += [np.full(nx, bm[k] + w * fm[k]), np.full(nx, b0[k] + w * f0[k]),
                 np.full(nx, bp[k] + w * fp[k])]
    h1 = r[1]
    rows += [idx[:, 0]] * 2
    cols += [idx[:, 0], idx[:, 1]]
    vals += [np.full(nx, -2.0 * (N - 1) / h1 ** 2), np.full(nx, 2.0 * (N - 1) / h1 ** 2)]
    A = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(nx * nr, nx * nr))
    return A


def trapezoid_weights(x, periodic_len=None):
    if periodic_len is not None:
        xe = np.r_[x, x[0] + periodic_len]
        d = np.diff(xe)
        return 0.5 * (d + np.roll(d, 1))
    w = np.zeros(len(x))
    d = np.diff(x)
    w[:-1] += 0.5 * d
    w[1:] += 0.5 * d
    return w


def volume_weights(grid, N):
    """Quadrature weights for integrals over R^N of axisymmetric functions."""
    wy = trapezoid_weights(grid.y1, grid.period)
    wr = trapezoid_weights(grid.r) * grid.r ** (N - 2)
    return sphere_area(N - 2) * np.outer(wy, wr)


# ---------------------------------------------------------------------------
# nodewise fields

def assemble_lL(ansatz, grid):
    """l_L = (W^p - sum xi U_j^p) - Q W + sum U_j Lap(xi) + 2 grad xi . grad U_j."""
    Y, R = grid.mesh()
    p = ansatz.dims.p
    W = np.zeros(Y.shape)
    out = np.zeros(Y.shape)
    for j in range(len(ansatz.bubbles)):
        bt = bubble_terms(ansatz, j, Y, R)
        W += bt["xi"] * bt["U"]
        out += -bt["xi"] * bt["U"] ** p + bt["U"] * bt["lap_xi"] + 2.0 * bt["grad_dot"]
    out += W ** p - eval_Q_axisym(ansatz.potential, Y, R) * W
    return Field(grid, out)


class PositivityCounter:
    """Counts nodes where W + phi is genuinely negative.

    Values above -floor * max(W) are round-off in the far field and are not counted.
    """

    def __init__(self, floor=1e-12):
        self.events = 0
        self.floor = floor


def eval_NL(ansatz, phi, W=None, counter=None):
    """N_L(phi) = (W+phi)_+^p - W^p - p W^(p-1) phi."""
    grid = phi.grid
    if W is None:
        Y, R = grid.mesh()
        W = eval_W_axisym(ansatz, Y, R)
    p = ansatz.dims.p
    u = W + phi.values
    neg = u < 0
    if counter is not None:
        thresh = -counter.floor * float(np.max(W))
        counter.events += int(np.count_nonzero(u < thresh))
    up = np.where(neg, 0.0, u)
    return Field(grid, up ** p - W ** p - p * W ** (p - 1) * phi.values)


# ---------------------------------------------------------------------------
# linearized saddle system

@dataclass
class LinearizedSystem:
    ansatz: object
    grid: AxiGrid
    operator: sp.csr_matrix
    constraint_cols: np.ndarray  # (n_nodes, n_constraints): W^(p-1) Z_ij
    constraint_rows: np.ndarray  # quadrature-weighted rows
    labels: list
    W: np.ndarray
    tail: np.ndarray
    _lu: object = field(default=None, repr=False)

    @property
    def n_nodes(self):
        return self.grid.shape[0] * self.grid.shape[1]

    def factorize(self):
        if self._lu is None:
            n = self.n_nodes
            k = self.constraint_cols.shape[1]
            # column/row scaling keeps the multiplier block O(1)
            self._cscale = 1.0 / np.max(np.abs(self.constraint_cols), axis=0)
            self._rscale = 1.0 / np.max(np.abs(self.constraint_rows), axis=1)
            B = sp.csr_matrix(-self.constraint_cols * self._cscale)
            G = sp.csr_matrix(self.constraint_rows * self._rscale[:, None])
            K = sp.bmat([[self.operator, B], [G, None]], format="csc")
            try:
                self._lu = spla.splu(K, permc_spec="COLAMD")
            except RuntimeError as exc:
                raise np.linalg.LinAlgError("singular saddle matrix (%d constraints): %s" % (k, exc))
            self._n = n
        return self._lu

    def solve(self, h, boundary=None):
        """Boundary rows take the Dirichlet data (the analytic tail by default)."""
        lu = self.factorize()
        rhs = np.zeros(self._n + self.constraint_cols.shape[1])
        g = self.tail if boundary is None else boundary
        hv = np.where(self.grid.interior_mask, h.values, g).ravel()
        rhs[:self._n] = hv
        sol = lu.solve(rhs)
        phi = Field(self.grid, sol[:self._n].reshape(self.grid.shape))
        c = sol[self._n:] * self._cscale
        return phi, c

    def constraint_residual(self, phi):
        v = self.constraint_rows @ phi.values.ravel()
        scale = np.abs(self.constraint_rows) @ np.abs(phi.values.ravel()) + 1e-300
        return np.abs(v) / scale


def analytic_tail(ansatz, y1, r):
    """A_N sum_j mu^(-(N-2)/2) |y - x_j|^(2-N), the far field of the bubbles."""
    N = ansatz.dims.N
    out = np.zeros(np.broadcast(y1, r).shape)
    for b in ansatz.bubbles:
        d2 = axial_offset(y1, b.x1, ansatz.period) ** 2 + r * r
        out += ansatz.dims.A * b.mu ** (-(N - 2) / 2.0) * np.where(d2 > 0, d2, np.inf) ** ((2 - N) / 2.0)
    return out


def build_linearized(ansatz, grid, use_tail=True):
    N = ansatz.dims.N
    p = ansatz.dims.p
    Y, R = grid.mesh()
    W = eval_W_axisym(ansatz, Y, R)
    Q = eval_Q_axisym(ansatz.potential, Y, R)
    lap = laplacian_matrix(grid, N)
    diag = (Q - p * W ** (p - 1)).ravel()
    A = (-lap + sp.diags(diag)).tolil()
    mask = grid.interior_mask.ravel()
    bnd = np.flatnonzero(~mask)
    A = A.tocsr()
    A = sp.csr_matrix(A.multiply(mask[:, None])) + sp.csr_matrix(
        (np.ones(len(bnd)), (bnd, bnd)), shape=A.shape)
    wts = volume_weights(grid, N).ravel()
    cols, labels = [], []
    Wp = (W ** (p - 1)).ravel()
    for i in range(len(ansatz.bubbles)):
        for j in (1, N + 1):
            Z = eval_Zij_axisym(ansatz, i, j, Y, R).ravel()
            cols.append(Wp * Z * mask)
            labels.append((i, j))
    Bc = np.array(cols).T
    Grow = np.array([wts * Wp * eval_Zij_axisym(ansatz, i, j, Y, R).ravel() for (i, j) in labels])
    tail = analytic_tail(ansatz, Y, R) if use_tail else np.zeros(Y.shape)
    return LinearizedSystem(ansatz, grid, A.tocsr(), Bc, Grow, labels, W, tail)


def solve_linearized(sys, h):
    """phi and multipliers c_ij with A phi = h + sum c_ij W^(p-1) Z_ij, phi in H_m."""
    return sys.solve(h)


# ---------------------------------------------------------------------------
# contraction

ROUNDOFF_FLOOR = 1e-8


class ContractionError(RuntimeError):
    pass


@dataclass
class CorrectionResult:
    phi: Field
    c: np.ndarray
    labels: list
    trace: list
    ratios: list
    lL_dstar: float
    phi_star: float
    NL_dstar: float
    positivity_events: int
    converged: bool
    system: object = field(default=None, repr=False)
    floor_limited: bool = False

    @property
    def max_ratio_after_first(self):
        return max(self.ratios[1:], default=0.0)

    @property
    def max_ratio_above_floor(self):
        """Largest step ratio after the first, over steps above the round-off floor."""
        keep = [q for q, st in zip(self.ratios[1:], self.trace[1:])
                if st > ROUNDOFF_FLOOR * self.phi_star]
        return max(keep, default=0.0)


def contract(ansatz, grid, tol=1e-8, max_iter=30, params=None, phi0=None, damping=1.0,
             system=None, use_tail=True):
    """Fixed point phi = L(N_L(phi)) + L(l_L) with trace of star-norm steps."""
    params = params or WeightedNormParams.default(ansatz.dims.N, ansatz.potential.beta)
    sys_ = system or build_linearized(ansatz, grid, use_tail=use_tail)
    lL = assemble_lL(ansatz, grid)
    counter = PositivityCounter()
    phi = phi0 if phi0 is not None else Field(grid, np.zeros(grid.shape))
    trace, ratios = [], []
    bad = noisy_run = 0
    c = None
    converged = floor_limited = False
    for it in range(max_iter):
        nl = eval_NL(ansatz, phi, W=sys_.W, counter=counter)
        new, c = sys_.solve(Field(grid, lL.values + nl.values))
        if damping != 1.0:
            new = Field(grid, (1 - damping) * phi.values + damping * new.values)
        step = norm_star(Field(grid, new.values - phi.values), ansatz, params)
        scale = max(norm_star(new, ansatz, params), 1e-300)
        trace.append(step)
        if len(trace) > 1:
            ratio = step / trace[-2] if trace[-2] > 0 else 0.0
            ratios.append(ratio)
            # steps at the round-off floor carry no contraction information
            noisy = step <= ROUNDOFF_FLOOR * scale
            bad = bad + 1 if (ratio >= 1.0 and not noisy) else 0
            noisy_run = noisy_run + 1 if noisy else 0
            if bad >= 3:
                raise ContractionError("contraction ratio >= 1 over 3 steps: %s" % trace)
        phi = new
        if step <= tol * scale or step == 0.0:
            converged = True
            break
        if noisy_run >= 3:
            # stagnated at the round-off floor above the requested tolerance
            converged = floor_limited = True
            break
    ratios = [0.0] + ratios  # first step has no predecessor
    nl = eval_NL(ansatz, phi, W=sys_.W)
    return CorrectionResult(
        phi=phi, c=c, labels=sys_.labels, trace=trace, ratios=ratios,
        lL_dstar=norm_dstar(lL, ansatz, params), phi_star=norm_star(phi, ansatz, params),
        NL_dstar=norm_dstar(nl, ansatz, params), positivity_events=counter.events,
        converged=converged, system=sys_, floor_limited=floor_limited)


def multipliers_by_mode(res, N):
    trans = np.array([c for c, (i, j) in zip(res.c, res.labels) if j == 1])
    dil = np.array([c for c, (i, j) in zip(res.c, res.labels) if j == N + 1])
    return trans, dil


# ---------------------------------------------------------------------------
# field i/o

_MAGIC = b"BLFIELD1"


def write_field(path, f, N, sidecar=None):
    """Binary field: magic, header (N, nx, nr, bounds, period), node arrays, values.

    All numbers little-endian; values row-major with y1 as the slow index.
    """
    g = f.grid
    header = np.array([N, g.shape[0], g.shape[1]], dtype="<i8")
    bounds = np.array(list(g.bounds) + [g.period if g.period is not None else -1.0], dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(header.tobytes())
        fh.write(bounds.tobytes())
        fh.write(np.asarray(g.y1, "<f8").tobytes())
        fh.write(np.asarray(g.r, "<f8").tobytes())
        fh.write(np.ascontiguousarray(f.values, "<f8").tobytes())
    if sidecar is not None:
        with open(str(path) + ".json", "w") as fh:
            json.dump(sidecar, fh, indent=2, sort_keys=True)


def read_field(path):
    with open(path, "rb") as fh:
        if fh.read(8) != _MAGIC:
            raise ValueError("not a field file")
        N, nx, nr = np.frombuffer(fh.read(24), "<i8")
        bounds = np.frombuffer(fh.read(40), "<f8")
        y1 = np.frombuffer(fh.read(8 * nx), "<f8").copy()
        r = np.frombuffer(fh.read(8 * nr), "<f8").copy()
        vals = np.frombuffer(fh.read(8 * nx * nr), "<f8").reshape(nx, nr).copy()
    period = None if bounds[4] < 0 else float(bounds[4])
    return Field(Grid(y1, r, period), vals), int(N)


def ansatz_sidecar(ansatz):
    p = ansatz.potential
    return {
        "N": ansatz.dims.N,
        "centers": [float(c) for c in ansatz.centers],
        "mu": [float(m) for m in ansatz.mus],
        "period": ansatz.period,
        "potential": {"a": p.a, "beta": p.beta, "L": p.period_L,
                      "remainder_scale": p.remainder_scale, "ceiling": p.ceiling},
        "cutoff": [ansatz.cutoff.inner_radius, ansatz.cutoff.outer_radius],
    }


# ---------------------------------------------------------------------------
# outer loop: drive the multipliers to zero

def multiplier_scales(system, params):
    """||W^(p-1) Z_ij||_** for each constraint column."""
    if getattr(system, "_mscale", None) is None:
        grid = system.grid
        system._mscale = np.array([
            norm_dstar(Field(grid, system.constraint_cols[:, k].reshape(grid.shape)),
                       system.ansatz, params)
            for k in range(system.constraint_cols.shape[1])])
    return system._mscale


def scaled_multipliers(res, params):
    """c_ij ||W^(p-1) Z_ij||_** / ||l_L||_**, the relative size of each multiplier force."""
    return res.c * multiplier_scales(res.system, params) / res.lL_dstar


@dataclass
class FullSolution:
    u: Field
    phi: Field
    ansatz: object
    grid: AxiGrid
    c: np.ndarray
    c_scaled: np.ndarray
    correction: CorrectionResult
    history: list
    converged: bool
    adjust: str

    @property
    def min_u(self):
        return float(np.min(self.u.values))


class OuterLoopError(RuntimeError):
    pass


def _rebuild(base, glob, shifts, adjust):
    pot = base.potential
    mu = base.mus[0]
    if adjust == "a":
        pot = PotentialSpec(a=glob, beta=pot.beta, period_L=pot.period_L,
                            remainder_scale=pot.remainder_scale, clip_ceiling=pot.clip_ceiling,
                            clip=pot.clip)
    else:
        mu = float(np.exp(glob))
    centers = [b.center for b in base.bubbles]
    new_centers = [(c[0] + s,) + tuple(c[1:]) for c, s in zip(centers, shifts)]
    bubbles = [Bubble(c, mu) for c in new_centers]
    return Ansatz(base.dims, bubbles, pot, base.cutoff, base.period)


def solve_full(ansatz, grid, tol=1e-6, adjust="a", adjust_shifts=True, max_outer=10,
               shifts0=None, params=None, inner_tol=1e-10, glob_step=None, shift_step=None):
    """Gauss-Newton on (global parameter, axial shifts) until every scaled
    multiplier is below tol.

    adjust = "a": the potential amplitude is the global unknown (mu fixed);
    adjust = "mu": log mu is the global unknown (a fixed).  The grid is kept
    fixed so that the discrete problem varies smoothly with the unknowns.
    """
    if adjust not in ("a", "mu"):
        raise ValueError("adjust must be 'a' or 'mu'")
    params = params or WeightedNormParams.default(ansatz.dims.N, ansatz.potential.beta)
    nb = len(ansatz.bubbles)
    base = ansatz
    g0 = ansatz.potential.a if adjust == "a" else float(np.log(ansatz.mus[0]))
    s0 = np.zeros(nb) if shifts0 is None else np.asarray(shifts0, float)
    v = np.r_[g0, s0 if adjust_shifts else []]
    mu = ansatz.mus[0]
    gstep = glob_step or (1e-4 if adjust == "a" else 1e-3)
    sstep = shift_step or 1e-3 / mu
    steps = np.r_[gstep, np.full(nb if adjust_shifts else 0, sstep)]
    history = []

    def evaluate(v):
        sh = v[1:] if adjust_shifts else s0
        an = _rebuild(base, v[0], sh, adjust)
        res = contract(an, grid, tol=inner_tol, params=params)
        return an, res, scaled_multipliers(res, params)

    an, res, F = evaluate(v)
    history.append((v.copy(), float(np.max(np.abs(F)))))
    converged = np.max(np.abs(F)) < tol
    it = 0
    while not converged and it < max_outer:
        it += 1
        J = np.empty((len(F), len(v)))
        for k in range(len(v)):
            dv = np.zeros_like(v)
            dv[k] = steps[k]
            J[:, k] = (evaluate(v + dv)[2] - F) / steps[k]
        cs = np.max(np.abs(J), axis=0)
        cs[cs == 0] = 1.0
        dv = np.linalg.lstsq(J / cs, -F, rcond=1e-10)[0] / cs
        v = v + dv
        an, res, F = evaluate(v)
        history.append((v.copy(), float(np.max(np.abs(F)))))
        converged = np.max(np.abs(F)) < tol
    if not res.converged:
        raise OuterLoopError("inner contraction failed at the final outer state")
    Y, R = grid.mesh()
    W = eval_W_axisym(an, Y, R)
    u = Field(grid, W + res.phi.values)
    return FullSolution(u, res.phi, an, grid, res.c, F, res, history, bool(converged), adjust)
