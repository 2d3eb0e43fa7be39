"""Solution-pair diagnostics, energy checks and the command-line driver."""
import argparse
import configparser
import csv
import json
import os
import sys
import warnings
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .profile_core import (Ansatz, Bubble, CutoffSpec, DimensionParams, Field, KernelBasis,
                           PotentialSpec, WeightedNormParams, bubble_mu_derivative,
                           bubble_radial, bubble_terms, eval_Q_axisym,
                           norm_star, star_weight)
from .pohozaev_verifier import CubicSampler
from .quadrature_constants import QuadratureSpec, polar_quad

IDENTICAL_FLOOR = 1e-13


# ---------------------------------------------------------------------------
# difference quotients and kernel projection

@dataclass
class DifferenceQuotient:
    eta: Field
    diff_star: float
    status: str  # "OK" or "IDENTICAL"

    def rescaled(self, ansatz, j):
        """eta~_j(z1, zr) = mu^(-(N-2)/2) eta(x_j + z/mu) as a callable."""
        b = ansatz.bubbles[j]
        mu, N = b.mu, ansatz.dims.N
        samp = CubicSampler(self.eta)

        def f(z1, zr):
            return mu ** (-(N - 2) / 2.0) * samp(b.x1 + np.asarray(z1) / mu, np.asarray(zr) / mu)[0]
        return f


def difference_quotient(u1, u2, ansatz, params=None, floor=IDENTICAL_FLOOR):
    """eta = (u1 - u2)/||u1 - u2||_*, or IDENTICAL when the difference is at round-off."""
    if u1.grid.shape != u2.grid.shape or not np.array_equal(u1.grid.y1, u2.grid.y1):
        raise ValueError("solutions must share a grid")
    params = params or WeightedNormParams.default(ansatz.dims.N, ansatz.potential.beta)
    diff = Field(u1.grid, u1.values - u2.values)
    d = norm_star(diff, ansatz, params)
    scale = max(norm_star(u1, ansatz, params), 1e-300)
    if d <= floor * scale:
        return DifferenceQuotient(Field(u1.grid, np.zeros(u1.grid.shape)), d, "IDENTICAL")
    return DifferenceQuotient(Field(u1.grid, diff.values / d), d, "OK")


@dataclass
class KernelProjection:
    b: np.ndarray  # b_0 .. b_N
    residual: float
    radius: float


def kernel_projection(eta_t, basis=None, R=10.0, N=None, spec=None, gram_floor=1e-12):
    """Coefficients of eta~ on psi_0..psi_N in the U^(p-1)-weighted product over B_R.

    eta_t is a callable of (z1, zr) in the frame of the basis bubble (default: the
    unit bubble at the origin).  Transverse coefficients vanish on the
    axisymmetric subspace and are returned as zeros.
    """
    if basis is None:
        basis = KernelBasis(Bubble((0.0,) * N, 1.0), DimensionParams(N))
    dims = basis.dims
    N, p = dims.N, dims.p
    mu, x1 = basis.bubble.mu, basis.bubble.x1
    spec = spec or QuadratureSpec(n_nodes=16)

    def parts(y1, r):
        w = bubble_radial((y1 - x1) ** 2 + r * r, mu, N) ** (p - 1)
        e = eta_t(y1, r)
        p0 = basis.eval_axisym(0, y1, r)
        p1 = basis.eval_axisym(1, y1, r)
        return {"e0": w * e * p0, "e1": w * e * p1, "g0": w * p0 * p0, "g1": w * p1 * p1,
                "ee": w * e * e}
    v = {k: q.value for k, q in polar_quad(parts, dims, center=x1, spec=spec,
                                            rho_max=R / mu, scale=1.0 / mu).items()}
    if min(v["g0"], v["g1"]) <= gram_floor * max(v["g0"], v["g1"]):
        raise ValueError("degenerate Gram matrix (grid under-resolution)")
    b = np.zeros(N + 1)
    b[0] = v["e0"] / v["g0"]
    b[1] = v["e1"] / v["g1"]
    # psi_0 and psi_1 are orthogonal by parity in z1
    res2 = v["ee"] - b[0] ** 2 * v["g0"] - b[1] ** 2 * v["g1"]
    res = np.sqrt(max(res2, 0.0) / v["ee"]) if v["ee"] > 0 else 0.0
    return KernelProjection(b, float(res), R)


# ---------------------------------------------------------------------------
# periodicity

def periodicity_check(u, L, window, ansatz, params=None):
    """sup over window of |u(y - L e1) - u(y)| / star weight."""
    params = params or WeightedNormParams.default(ansatz.dims.N, ansatz.potential.beta)
    g = u.grid
    y1 = np.asarray(g.y1)
    lo, hi = window
    sel = np.nonzero((y1 >= lo) & (y1 <= hi))[0]
    if sel.size == 0:
        raise ValueError("window contains no nodes")
    tgt = y1[sel] - L
    if g.period is not None:
        tgt = y1[0] + np.mod(tgt - y1[0], g.period)
    elif tgt.min() < y1[0] or hi > y1[-1]:
        raise ValueError("window shifted by L leaves the grid")
    idx = np.searchsorted(y1, tgt)
    idx = np.clip(idx, 0, len(y1) - 1)
    tol = 1e-9 * max(1.0, abs(y1).max())
    if np.all(np.abs(y1[idx] - tgt) <= tol):
        shifted = u.values[idx, :]
    else:
        samp = CubicSampler(u)
        Y, R = np.meshgrid(tgt, g.r, indexing="ij")
        shifted = samp(Y, R)[0]
    Y, R = np.meshgrid(y1[sel], g.r, indexing="ij")
    w = star_weight(ansatz, Y, R, params.tau)
    return float(np.max(np.abs(shifted - u.values[sel, :]) / w))


# ---------------------------------------------------------------------------
# Green tail

@dataclass
class GreenTailModel:
    centers: np.ndarray
    monopole: np.ndarray
    dipole: np.ndarray  # axial dipole; transverse dipoles vanish by symmetry
    residual: float
    remainder_scale: float = None

    def __call__(self, y1, r, N):
        out = np.zeros(np.broadcast(np.asarray(y1), np.asarray(r)).shape)
        for c, a0, a1 in zip(self.centers, self.monopole, self.dipole):
            g0, g1 = _green_pair(c, y1, r, N)
            out = out + a0 * g0 + a1 * g1
        return out


def _green_pair(x0, y1, r, N):
    """G(x0, y) and its derivative in x0_1."""
    d2 = (np.asarray(y1) - x0) ** 2 + np.asarray(r) ** 2
    c = DimensionParams(N).green_const
    return c * d2 ** (-(N - 2) / 2.0), c * (N - 2) * d2 ** (-N / 2.0) * (np.asarray(y1) - x0)


def green_tail_fit(eta, centers, annuli, N, cond_max=1e12, remainder_scale=None):
    """Least-squares monopole + dipole Green model of eta on annuli around the centers.

    eta is a Field (its nodes inside the annuli are used) or a callable, sampled
    on a polar set in each annulus.  annuli = (inner, outer) radii.
    """
    centers = np.atleast_1d(np.asarray(centers, float))
    a_in, a_out = annuli
    if isinstance(eta, Field):
        Y, R = eta.grid.mesh()
        mask = np.zeros(Y.shape, bool)
        for c in centers:
            d = np.hypot(Y - c, R)
            mask |= (d >= a_in) & (d <= a_out)
        y1, r, vals = Y[mask], R[mask], eta.values[mask]
    else:
        rho = np.linspace(a_in, a_out, 9)
        t = np.linspace(0.0, np.pi, 25)
        P, T = np.meshgrid(rho, t, indexing="ij")
        y1 = np.concatenate([c + (P * np.cos(T)).ravel() for c in centers])
        r = np.concatenate([(P * np.sin(T)).ravel() for _ in centers])
        vals = eta(y1, r)
    if y1.size < 2 * len(centers):
        raise ValueError("too few samples in the annuli")
    cols = []
    for c in centers:
        cols.extend(_green_pair(c, y1, r, N))
    A = np.column_stack(cols)
    scale = np.max(np.abs(A), axis=0)
    As = A / scale
    if np.linalg.cond(As) > cond_max:
        raise ValueError("ill-conditioned Green tail fit")
    coef = np.linalg.lstsq(As, vals, rcond=None)[0] / scale
    fit = A @ coef
    ref = max(np.max(np.abs(vals)), 1e-300)
    res = float(np.max(np.abs(vals - fit)) / ref)
    return GreenTailModel(centers, coef[0::2], coef[1::2], res, remainder_scale)


# ---------------------------------------------------------------------------
# energy

def _ansatz_pieces(ansatz, y1, r, use_cutoff=True):
    """W, grad W (axial, radial) and the per-bubble pieces of the ansatz."""
    W = np.zeros(np.shape(y1))
    Wy = np.zeros_like(W)
    Wr = np.zeros_like(W)
    terms = []
    for j in range(len(ansatz.bubbles)):
        bt = bubble_terms(ansatz, j, y1, r)
        if not use_cutoff:
            bt["xi"] = np.ones_like(bt["U"])
            bt["dxi"] = np.zeros_like(bt["U"])
            bt["lap_xi"] = np.zeros_like(bt["U"])
            bt["grad_dot"] = np.zeros_like(bt["U"])
        safe = np.where(bt["t"] > 0, bt["t"], 1.0)
        radial = bt["dxi"] * bt["U"] / safe + bt["xi"] * bt["g"]  # grad(xi U) = radial * (y - x)
        bt["radial"] = radial
        W = W + bt["xi"] * bt["U"]
        Wy = Wy + radial * bt["dy"]
        Wr = Wr + radial * np.asarray(r)
        terms.append(bt)
    return W, Wy, Wr, terms


def _partition_quad(ansatz, integrand, spec):
    """sum_j int chi_j f with chi_j = h_j / sum_k h_k, h_k = (1 + mu_k^2 |y - x_k|^2)^-N."""
    N = ansatz.dims.N
    xs = [b.x1 for b in ansatz.bubbles]
    total = None
    for j, b in enumerate(ansatz.bubbles):
        def f(y1, r, j=j):
            q = [1.0 + bb.mu ** 2 * ((y1 - bb.x1) ** 2 + r * r) for bb in ansatz.bubbles]
            chi = 1.0 / sum((q[j] / qk) ** N for qk in q)
            out = integrand(y1, r)
            return {k: chi * v for k, v in out.items()}
        focus = sorted({abs(x - b.x1) for k, x in enumerate(xs) if k != j})
        res = polar_quad(f, ansatz.dims, center=b.x1, spec=spec,
                         rho_breaks=[ansatz.cutoff.inner_radius, ansatz.cutoff.outer_radius],
                         rho_focus=focus, focus_width=2.0, focus_levels=14, scale=1.0 / b.mu)
        vals = {k: (v.value, v.error) for k, v in res.items()}
        if total is None:
            total = vals
        else:
            total = {k: (total[k][0] + vals[k][0], total[k][1] + vals[k][1]) for k in total}
    return total


@dataclass
class EnergyResult:
    value: float
    error: float
    parts: dict = field(default_factory=dict)


def energy(obj, ansatz=None, spec=None, use_cutoff=True):
    """I(u) = 1/2 int |grad u|^2 + Q u^2 - 1/2* int |u|^(2*).

    obj is an Ansatz (integrated by quadrature, exact derivatives) or a Field
    on a grid (trapezoid volume weights, finite-difference gradient; the
    ansatz then supplies the potential).
    """
    if isinstance(obj, Ansatz):
        ansatz = obj
        ts = ansatz.dims.two_star
        spec = spec or QuadratureSpec(n_nodes=16)

        def integrand(y1, r):
            W, Wy, Wr, _ = _ansatz_pieces(ansatz, y1, r, use_cutoff)
            Q = eval_Q_axisym(ansatz.potential, y1, r)
            return {"grad": 0.5 * (Wy ** 2 + Wr ** 2), "pot": 0.5 * Q * W * W,
                    "power": -np.abs(W) ** ts / ts}
        parts = _partition_quad(ansatz, integrand, spec)
        if not all(np.isfinite(v[0]) for v in parts.values()):
            raise FloatingPointError("divergent energy quadrature")
        return EnergyResult(sum(v[0] for v in parts.values()), sum(v[1] for v in parts.values()),
                            {k: v[0] for k, v in parts.items()})
    from .correction_solver import volume_weights
    if ansatz is None:
        raise ValueError("a Field needs the ansatz for the potential")
    g = obj.grid
    N = ansatz.dims.N
    ts = ansatz.dims.two_star
    u = obj.values
    uy = np.gradient(u, g.y1, axis=0)
    ur = np.gradient(u, g.r, axis=1)
    Y, R = g.mesh()
    Q = eval_Q_axisym(ansatz.potential, Y, R)
    w = volume_weights(g, N)
    parts = {"grad": float(np.sum(w * 0.5 * (uy ** 2 + ur ** 2))),
             "pot": float(np.sum(w * 0.5 * Q * u * u)),
             "power": float(-np.sum(w * np.abs(u) ** ts) / ts)}
    return EnergyResult(sum(parts.values()), float("nan"), parts)


def _residual_density(ansatz, y1, r, use_cutoff=True):
    """-Delta W + Q W - W^p pointwise, assembled from exact pieces."""
    p = ansatz.dims.p
    W, _, _, terms = _ansatz_pieces(ansatz, y1, r, use_cutoff)
    E = -np.abs(W) ** p + eval_Q_axisym(ansatz.potential, y1, r) * W
    for bt in terms:
        # -Delta(xi U) = xi U^p - 2 grad xi . grad U - U Delta xi
        E = E + bt["xi"] * bt["U"] ** p - 2 * bt["grad_dot"] - bt["lap_xi"] * bt["U"]
    return E, terms


def energy_mu_derivative(ansatz, spec=None, use_cutoff=True):
    """dI/dmu for a common height: int (-Delta W + Q W - W^p) dW/dmu."""
    spec = spec or QuadratureSpec(n_nodes=16)
    N = ansatz.dims.N

    def integrand(y1, r):
        E, terms = _residual_density(ansatz, y1, r, use_cutoff)
        dW = sum(bt["xi"] * bubble_mu_derivative(bt["rho2"], b.mu, N)
                 for bt, b in zip(terms, ansatz.bubbles))
        return {"d": E * dW}
    v = _partition_quad(ansatz, integrand, spec)["d"]
    return EnergyResult(v[0], v[1])


def energy_location_derivative(ansatz, i, j=0, spec=None, use_cutoff=True):
    """dI/dx_{j,i}: int (-Delta W + Q W - W^p) dW/dx_{j,i}; zero for i >= 2 by axisymmetry."""
    N = ansatz.dims.N
    if not 1 <= i <= N:
        raise ValueError("direction index must be in 1..N")
    if i >= 2:
        return EnergyResult(0.0, 0.0)
    spec = spec or QuadratureSpec(n_nodes=16)

    def integrand(y1, r):
        E, terms = _residual_density(ansatz, y1, r, use_cutoff)
        bt = terms[j]
        return {"d": -E * bt["radial"] * bt["dy"]}
    v = _partition_quad(ansatz, integrand, spec)["d"]
    return EnergyResult(v[0], v[1])


def energy_mu_asymptotic(ansatz, derived):
    """Two-term prediction sum_j (-B1 mu^-(beta+3) + sum_i B2 mu^-(N-1) d^-(N-2)), N-2 factor per bubble."""
    N, beta = ansatz.dims.N, ansatz.potential.beta
    mu = ansatz.mus[0]
    x = ansatz.centers
    tot = 0.0
    for j in range(len(x)):
        s = sum(abs(x[i] - x[j]) ** -(N - 2) for i in range(len(x)) if i != j)
        tot += -derived.B1.value * mu ** -(beta + 3) + derived.B2.value * mu ** -(N - 1) * s
    return tot


# ---------------------------------------------------------------------------
# run configuration

@dataclass
class RunConfig:
    N: int = 7
    beta: float = 4.0
    a: float = 1e-3
    L: float = 5.0
    m: int = 1
    mu: float = 16.0
    wrapped: bool = False
    n_core: float = 16.0
    h_far: float = 0.125
    pad: float = 4.0
    tol: float = 1e-10
    tau: float = None
    theta: float = None
    q0: float = 1.0
    L_values: tuple = (8.0, 16.0, 32.0, 64.0)
    mu_values: tuple = (16.0, 32.0, 64.0)
    seed: int = 0
    out: str = "out"
    field_path: str = None

    def validate(self):
        from .reduced_system import feasibility_check
        v = feasibility_check(DimensionParams(self.N), self.beta)
        if v.status != "ACCEPT":
            raise ValueError("infeasible configuration: %s" % v.reason)
        if self.N <= 6:
            warnings.warn("uniqueness and periodicity results are stated for N > 6")
        return self

    @classmethod
    def from_file(cls, path):
        """Key = value lines under a [run] section; lists are comma separated."""
        cp = configparser.ConfigParser()
        with open(path) as fh:
            cp.read_file(fh)
        if not cp.has_section("run"):
            raise ValueError("config needs a [run] section")
        return cls().updated({k: v for k, v in cp.items("run")})

    def updated(self, values):
        kw = asdict(self)
        types = {f.name: f.type for f in fields(self)}
        for k, v in values.items():
            if v is None:
                continue
            if k not in types:
                raise ValueError("unknown config key %r" % k)
            kw[k] = _coerce(v, kw[k], types[k])
        return RunConfig(**kw)

    def params(self):
        if self.tau is None:
            return WeightedNormParams.default(self.N, self.beta)
        return WeightedNormParams(self.tau)

    def potential(self):
        return PotentialSpec(a=self.a, beta=self.beta, period_L=self.L)


def _coerce(v, current, typ):
    if not isinstance(v, str) or typ is str:
        return v
    if v.strip().lower() == "none":
        return None
    if typ is tuple:
        return tuple(float(s) for s in v.split(",") if s.strip())
    if typ is bool:
        return v.strip().lower() in ("1", "true", "yes", "on")
    if typ is int:
        return int(v)
    return float(v)


# ---------------------------------------------------------------------------
# pipeline stages

class StageError(RuntimeError):
    def __init__(self, stage, code, msg):
        super().__init__("%s: %s" % (stage, msg))
        self.stage, self.code = stage, code


EXIT_CODES = {"ok": 0, "config": 2, "solver": 3, "io": 4, "check": 5}


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(type(o))


def _dump(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)


def _build(cfg, mu=None):
    from .correction_solver import make_axigrid
    dims = DimensionParams(cfg.N)
    an = Ansatz.lattice(dims, cfg.m, cfg.L, mu or cfg.mu, cfg.potential(), wrapped=cfg.wrapped)
    grid = make_axigrid(an.centers, an.mus[0], pad=cfg.pad, n_core=cfg.n_core, h_far=cfg.h_far,
                        period=an.period)
    return an, grid


def _solve(cfg, mu=None, a0=None, shifts0=None):
    from .correction_solver import ContractionError, OuterLoopError, solve_full
    an, grid = _build(cfg, mu)
    if a0 is not None:
        an = Ansatz(an.dims, an.bubbles, PotentialSpec(a=a0, beta=cfg.beta, period_L=cfg.L),
                    an.cutoff, an.period)
    try:
        return solve_full(an, grid, tol=cfg.tol, params=cfg.params(), shifts0=shifts0,
                          adjust_shifts=not cfg.wrapped)
    except (ContractionError, OuterLoopError) as exc:
        raise StageError("construct", "solver", str(exc))


def stage_construct(cfg):
    from .correction_solver import ansatz_sidecar, write_field
    sol = _solve(cfg)
    path = os.path.join(cfg.out, "solution.field")
    side = ansatz_sidecar(sol.ansatz)
    side.update(converged=sol.converged, c_scaled=sol.c_scaled, min_u=sol.min_u,
                ratios=sol.correction.ratios, history=[float(h[1]) for h in sol.history])
    write_field(path, sol.u, cfg.N, sidecar=json.loads(json.dumps(side, default=_json_default)))
    return {"field": path, "converged": sol.converged, "a": sol.ansatz.potential.a,
            "centers": sol.ansatz.centers, "max_scaled_multiplier": float(np.max(np.abs(sol.c_scaled)))}


def stage_correct(cfg):
    from .correction_solver import contract, multipliers_by_mode, scaled_multipliers
    an, grid = _build(cfg)
    res = contract(an, grid, tol=cfg.tol, params=cfg.params())
    out = {"converged": res.converged, "trace": res.trace, "ratios": res.ratios,
           "max_ratio_after_first": res.max_ratio_after_first,
           "max_ratio_above_floor": res.max_ratio_above_floor, "lL_dstar": res.lL_dstar,
           "phi_star": res.phi_star, "c": res.c, "c_scaled": scaled_multipliers(res, cfg.params()),
           "positivity_events": res.positivity_events}
    _dump(os.path.join(cfg.out, "correct.json"), out)
    return out


def stage_reduce(cfg):
    from .quadrature_constants import compute_universal, derive_constants
    from .reduced_system import BalanceConstants, predicted_slope, scaling_fit
    dims = DimensionParams(cfg.N)
    pot = PotentialSpec(a=1.0, beta=cfg.beta, period_L=cfg.L)
    univ = compute_universal(dims, pot)
    der = derive_constants(univ, dims, pot)
    consts = BalanceConstants.from_derived(der, pot)
    res, info = scaling_fit(dims, consts, list(cfg.L_values), m=cfg.m)
    rows = [{"N": cfg.N, "beta": cfg.beta, "L": L, "m": cfg.m, "mu": mu,
             "slope": res.slope, "residual_max": float(r), "verdict": "ACCEPT"}
            for L, mu, r in zip(info["L"], info["mu"], res.height)]
    from .reduced_system import write_sweep_csv
    write_sweep_csv(os.path.join(cfg.out, "reduce.csv"), rows)
    out = {"slope": res.slope, "halfwidth": res.slope_halfwidth,
           "predicted": predicted_slope(cfg.N, cfg.beta), "constants": json.loads(der.to_json())}
    _dump(os.path.join(cfg.out, "reduce.json"), out)
    return out


def stage_pohozaev(cfg):
    from .correction_solver import read_field
    from .pohozaev_verifier import (PohozaevConfig, boundary_term_estimates, dilation_identity,
                                    translation_identity)
    path = cfg.field_path or os.path.join(cfg.out, "solution.field")
    try:
        u, N = read_field(path)
        with open(path + ".json") as fh:
            side = json.load(fh)
    except OSError as exc:
        raise StageError("pohozaev", "io", str(exc))
    pot = PotentialSpec(a=side["potential"]["a"], beta=side["potential"]["beta"],
                        period_L=side["potential"]["L"])
    bubbles = [Bubble((c,) + (0.0,) * (N - 1), m) for c, m in zip(side["centers"], side["mu"])]
    an = Ansatz(DimensionParams(N), bubbles, pot, CutoffSpec(*side["cutoff"]), side["period"])
    mu = an.mus[0]
    cfg_p = PohozaevConfig.build(N, pot.beta, cfg.params().tau, mu, theta=cfg.theta)
    shifts = an.centers - pot.period_L * np.round(an.centers / pot.period_L)
    reports = []
    for j in range(len(bubbles)):
        d = dilation_identity(u, j, cfg_p, an)
        t = translation_identity(u, j, 1, cfg_p, an)
        f = boundary_term_estimates(u, j, cfg_p, an, shifts, cfg.params().tau)
        reports.append({"j": j, "dilation": json.loads(d.to_json()),
                        "translation": json.loads(t.to_json()),
                        "ratio": d.ratio(), "F": asdict(f)})
    out = {"theta": cfg_p.theta, "delta": cfg_p.delta, "balls": reports}
    _dump(os.path.join(cfg.out, "pohozaev.json"), out)
    return out


def stage_diagnose(cfg):
    """Two solver trajectories from different starts, then difference and kernel projection.

    Outer trajectories differ in the starting amplitude and shifts; a second,
    inner pair reruns the contraction at the first solution's parameters from a
    random start with damping 0.7.
    """
    from .correction_solver import contract
    rng = np.random.default_rng(cfg.seed)
    nb = cfg.m + 1
    params = cfg.params()
    s1 = _solve(cfg)
    a0 = cfg.a * (1.0 + 0.5 * rng.uniform(-1, 1))
    sh0 = None if cfg.wrapped else rng.uniform(-1, 1, nb) * 0.5 / cfg.mu
    s2 = _solve(cfg, a0=a0, shifts0=sh0)
    dq = difference_quotient(s1.u, s2.u, s1.ansatz, params)
    scale = norm_star(s1.u, s1.ansatz, params)
    proj = []
    if dq.status == "OK":
        for j in range(nb):
            kp = kernel_projection(dq.rescaled(s1.ansatz, j), N=cfg.N)
            proj.append({"j": j, "b": kp.b, "residual": kp.residual})
    g = s1.grid
    phi0 = Field(g, 1e-3 * scale * rng.standard_normal(g.shape) * g.interior_mask)
    inner = contract(s1.ansatz, g, tol=cfg.tol, params=params, phi0=phi0, damping=0.7)
    inner_diff = norm_star(Field(g, inner.phi.values - s1.phi.values), s1.ansatz, params)
    out = {"status": dq.status, "diff_star": dq.diff_star, "diff_star_rel": dq.diff_star / scale,
           "projections": proj,
           "max_b": max((float(np.max(np.abs(p["b"]))) for p in proj), default=0.0),
           "a": [s1.ansatz.potential.a, s2.ansatz.potential.a],
           "centers": [s1.ansatz.centers, s2.ansatz.centers],
           "inner_diff_star_rel": inner_diff / scale, "tol": cfg.tol}
    if cfg.wrapped:
        out["periodicity_defect"] = periodicity_check(
            s1.u, cfg.L, (s1.u.grid.y1[0], s1.u.grid.y1[-1]), s1.ansatz, params) / scale
    _dump(os.path.join(cfg.out, "diagnose.json"), out)
    return out


def stage_nonexist(cfg):
    from .quadrature_constants import compute_universal
    from .reduced_system import LatticeState, nonexistence_probe
    dims = DimensionParams(cfg.N)
    pot = PotentialSpec(a=cfg.a, beta=cfg.beta, period_L=cfg.L)
    univ = compute_universal(dims, PotentialSpec(a=1.0, beta=cfg.beta, period_L=cfg.L))
    st = LatticeState(cfg.m, cfg.L, cfg.mu, cfg.N)
    rep = nonexistence_probe(cfg.q0, st, univ, dims, pot)
    out = {"verdict": rep.verdict, "leading": rep.leading, "predicted": rep.leading_asymptotic,
           "ratio": rep.ratio, "competitors": rep.competitors}
    _dump(os.path.join(cfg.out, "nonexist.json"), out)
    return out


def stage_sweep(cfg):
    """Norm rates over the mu sweep: ||l_L||_** and converged ||phi||_*."""
    from .correction_solver import contract
    rows = []
    for mu in cfg.mu_values:
        an, grid = _build(cfg, mu)
        res = contract(an, grid, tol=cfg.tol, params=cfg.params())
        rows.append({"mu": mu, "lL_dstar": res.lL_dstar, "phi_star": res.phi_star,
                     "max_ratio_after_first": res.max_ratio_after_first,
                     "max_ratio_above_floor": res.max_ratio_above_floor})
    lm = np.log([r["mu"] for r in rows])
    out = {"rows": rows,
           "slope_lL": float(np.polyfit(lm, np.log([r["lL_dstar"] for r in rows]), 1)[0]),
           "slope_phi": float(np.polyfit(lm, np.log([r["phi_star"] for r in rows]), 1)[0]),
           "predicted": -((cfg.N - 2) / 2.0 - cfg.params().tau)}
    with open(os.path.join(cfg.out, "sweep.csv"), "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)
    _dump(os.path.join(cfg.out, "sweep.json"), out)
    return out


STAGES = {"construct": stage_construct, "correct": stage_correct, "reduce": stage_reduce,
          "pohozaev": stage_pohozaev, "diagnose": stage_diagnose, "nonexist": stage_nonexist,
          "sweep": stage_sweep}


def run(cfg, stage):
    os.makedirs(cfg.out, exist_ok=True)
    np.random.seed(cfg.seed)
    return STAGES[stage](cfg)


def build_parser():
    ap = argparse.ArgumentParser(prog="bubblelab", description="Multi-bubble lattice solver and checks")
    ap.add_argument("command", choices=sorted(STAGES))
    ap.add_argument("--config")
    ap.add_argument("--out")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--mu", type=float)
    ap.add_argument("--L", type=float)
    ap.add_argument("--m", type=int)
    ap.add_argument("--N", type=int)
    ap.add_argument("--beta", type=float)
    ap.add_argument("--a", type=float)
    ap.add_argument("--tol", type=float)
    ap.add_argument("--q0", type=float)
    ap.add_argument("--theta", type=float)
    ap.add_argument("--wrapped", action="store_true", default=None)
    ap.add_argument("--field", dest="field_path")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = RunConfig.from_file(args.config) if args.config else RunConfig()
        over = {k: v for k, v in vars(args).items() if k not in ("command", "config")}
        cfg = cfg.updated(over).validate()
    except (ValueError, OSError) as exc:
        print("config error: %s" % exc, file=sys.stderr)
        return EXIT_CODES["config"]
    try:
        out = run(cfg, args.command)
    except StageError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_CODES[exc.code]
    print(json.dumps(out, indent=2, sort_keys=True, default=_json_default))
    return EXIT_CODES["ok"]


if __name__ == "__main__":
    sys.exit(main())
