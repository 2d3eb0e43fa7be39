"""Finite-dimensional reduced problem on a 1D lattice of bubbles.

Unknowns: a common height mu, per-bubble amplitudes a_j and axial center
shifts s_j.  Interactions are summed either over the finite chain j = 0..m or
over all periodic images of a wrapped lattice with period (m+1)L.
"""
import csv
from dataclasses import dataclass, field

import numpy as np
from scipy import stats
from scipy.optimize import brentq

from .profile_core import DimensionParams, bubble_radial, cutoff_profile, CutoffSpec
from .quadrature_constants import polar_quad, QuadratureSpec

N_IMAGES = 400


@dataclass
class LatticeState:
    m: int
    L: float
    mu: float
    N: int
    amplitudes: np.ndarray = None
    shifts: np.ndarray = None   # (m+1, N)
    mode: str = "chain"

    def __post_init__(self):
        if self.amplitudes is None:
            self.amplitudes = np.ones(self.m + 1)
        if self.shifts is None:
            self.shifts = np.zeros((self.m + 1, self.N))
        self.shifts = np.asarray(self.shifts, float).reshape(self.m + 1, self.N)
        if self.mode not in ("chain", "wrapped"):
            raise ValueError("mode must be 'chain' or 'wrapped'")

    @property
    def positions(self):
        """Axial center coordinates x_jL = jL + s_j,1."""
        return np.arange(self.m + 1) * self.L + self.shifts[:, 0]

    @property
    def period(self):
        return (self.m + 1) * self.L if self.mode == "wrapped" else None


@dataclass
class BalanceResidual:
    height: np.ndarray
    shift: np.ndarray = None
    slope: float = None
    slope_halfwidth: float = None
    intercept: float = None


def _pair_sums(x, power, period=None, signed=False):
    """S_j = sum_{i != j} |x_i - x_j|^-power (times sgn(x_i - x_j) if signed),
    over periodic images when a period is given."""
    n = len(x)
    D = x[None, :] - x[:, None]          # D[j, i] = x_i - x_j
    out = np.zeros(n)
    ks = [0] if period is None else range(-N_IMAGES, N_IMAGES + 1)
    for k in ks:
        Dk = D + (k * period if period is not None else 0.0)
        A = np.abs(Dk)
        with np.errstate(divide="ignore"):
            term = np.where(A > 0, A ** -power, 0.0)
        if signed:
            term = term * np.sign(Dk)
        out += term.sum(axis=1)
    return out


def _check_distinct(x, period=None):
    y = np.sort(np.mod(x, period) if period is not None else np.asarray(x))
    if np.any(np.diff(y) == 0):
        raise ValueError("coincident centers")


def height_balance_residual(state, consts, dims):
    """r_j = sum_{i != j} Bbar mu^-(N-2) |x_i - x_j|^-(N-2) - mu^-(beta+2)."""
    x = state.positions
    _check_distinct(x, state.period)
    N = dims.N
    beta = consts.beta
    S = _pair_sums(x, N - 2, state.period)
    return consts.Bbar * state.mu ** -(N - 2) * S - state.mu ** -(beta + 2)


@dataclass(frozen=True)
class BalanceConstants:
    """The two numbers the balance needs: Bbar = C4/B1 and beta."""
    Bbar: float
    beta: float

    @classmethod
    def from_derived(cls, derived, potential):
        return cls(derived.Bbar.value, potential.beta)


def two_bubble_mu(consts, dims, L):
    """Closed form of the m=1 balance: mu = (Bbar / L^(N-2))^(1/(N-4-beta))."""
    N = dims.N
    return (consts.Bbar / L ** (N - 2)) ** (1.0 / (N - 4 - consts.beta))


def solve_common_mu(m, L, consts, dims, mode="chain", which="mean"):
    """Single height mu balancing the mean (or the given bubble's) residual."""
    N, beta = dims.N, consts.beta
    st = LatticeState(m, L, 1.0, N, mode=mode)
    S = _pair_sums(st.positions, N - 2, st.period)
    s = S.mean() if which == "mean" else S[int(which)]
    # f(t) = log(Bbar S mu^-(N-2)) - log(mu^-(beta+2)), t = log mu, linear in t
    f = lambda t: np.log(consts.Bbar * s) + (beta + 4 - N) * t
    if beta + 4 - N <= 0:
        raise ValueError("no balance for beta <= N - 4")
    lo, hi = -200.0, 200.0
    t = brentq(f, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    return float(np.exp(t))


# ---------------------------------------------------------------------------
# amplitudes

@dataclass
class AmplitudeResult:
    a: np.ndarray
    c0: float
    c1: float
    iterations: int
    converged: bool
    residual: float
    newton: bool = False


def _interaction_matrix(m, N, mode):
    idx = np.arange(m + 1, dtype=float)
    if mode == "wrapped":
        P = m + 1
        M = np.zeros((m + 1, m + 1))
        for k in range(-N_IMAGES, N_IMAGES + 1):
            D = np.abs(idx[None, :] - idx[:, None] + k * P)
            with np.errstate(divide="ignore"):
                M += np.where(D > 0, D ** -(N - 2.0), 0.0)
        return M
    D = np.abs(idx[None, :] - idx[:, None])
    with np.errstate(divide="ignore"):
        return np.where(D > 0, D ** -(N - 2.0), 0.0)


def solve_lattice_amplitudes(m, dims, Bbar, beta, tol=1e-12, exponent=None, damping=0.5,
                             max_iter=2000, newton_after=200, start=None, mode="chain"):
    """Positive solution of a_j^e = Bbar sum_{i != j} a_i |i-j|^-(N-2) (e = beta by default).

    Damped fixed point a <- (1-w) a + w (Bbar M a)^(1/e); Newton on
    F(a) = a^e - Bbar M a once newton_after iterations have passed.
    """
    if Bbar <= 0:
        raise ValueError("Bbar must be positive")
    e = beta if exponent is None else exponent
    if e <= 1:
        raise ValueError("exponent must exceed 1")
    M = _interaction_matrix(m, dims.N, mode)
    a = np.ones(m + 1) if start is None else np.array(start, float)
    if np.any(a <= 0):
        raise ValueError("start must be positive")
    T = lambda v: (Bbar * (M @ v)) ** (1.0 / e)
    newton = False
    for it in range(1, max_iter + 1):
        if it <= newton_after or m == 0:
            new = (1 - damping) * a + damping * T(a)
        else:
            newton = True
            F = a ** e - Bbar * (M @ a)
            J = np.diag(e * a ** (e - 1)) - Bbar * M
            new = a - np.linalg.solve(J, F)
        if np.any(new <= 0) or not np.all(np.isfinite(new)):
            raise ArithmeticError("non-positive iterate at step %d" % it)
        step = np.max(np.abs(new - a)) / np.max(np.abs(new))
        a = new
        if step < tol:
            res = np.max(np.abs(a ** e - Bbar * (M @ a))) / np.max(a ** e)
            return AmplitudeResult(a, float(a.min()), float(a.max()), it, True, float(res), newton)
    raise RuntimeError("amplitude iteration did not converge in %d steps" % max_iter)


# ---------------------------------------------------------------------------
# shifts

@dataclass
class ShiftResult:
    shifts: np.ndarray      # (m+1, N)
    residuals: np.ndarray   # location-derivative residual per bubble
    K: float                # max |s_j| mu^2
    iterations: int


def location_residual(state, C1, C2, dims, beta):
    """dI/dx_j,1 ~ C1 mu^-beta s_j - C2 mu^(2-N) sum sgn(x_i - x_j)|x_i - x_j|^(1-N)."""
    N = dims.N
    F = _pair_sums(state.positions, N - 1, state.period, signed=True)
    return C1 * state.mu ** -beta * state.shifts[:, 0] - C2 * state.mu ** (2 - N) * F


def solve_shifts(state, derived, dims, beta, tol=1e-14, max_iter=100):
    """First-order center shifts from the location-derivative balance."""
    C1, C2 = derived.C1.value, derived.C2.value
    if C1 == 0:
        raise np.linalg.LinAlgError("singular location Jacobian (C1 = 0)")
    N = dims.N
    st = LatticeState(state.m, state.L, state.mu, N, state.amplitudes,
                      np.zeros((state.m + 1, N)), state.mode)
    for it in range(1, max_iter + 1):
        F = _pair_sums(st.positions, N - 1, st.period, signed=True)
        s = (C2 / C1) * st.mu ** (beta + 2 - N) * F
        change = np.max(np.abs(s - st.shifts[:, 0]))
        st.shifts[:, 0] = s
        if change <= tol * max(np.max(np.abs(s)), 1e-300) or change == 0:
            break
    res = location_residual(st, C1, C2, dims, beta)
    K = float(np.max(np.abs(st.shifts[:, 0])) * st.mu ** 2)
    return ShiftResult(st.shifts.copy(), res, K, it)


# ---------------------------------------------------------------------------
# scaling law and feasibility

def predicted_slope(N, beta):
    return (N - 2.0) / (beta - N + 4.0)


def scaling_fit(dims, consts, L_values, m=1, mode="chain"):
    """Least-squares slope of log mu against log L with the balance solved per L."""
    L_values = np.asarray(L_values, float)
    if len(L_values) < 4:
        raise ValueError("need at least 4 values of L")
    mus = np.array([solve_common_mu(m, L, consts, dims, mode) for L in L_values])
    fit = stats.linregress(np.log(L_values), np.log(mus))
    tq = stats.t.ppf(0.975, len(L_values) - 2)
    pre_pred = consts.Bbar ** (-1.0 / (consts.beta + 4 - dims.N))
    resid = []
    for L, mu in zip(L_values, mus):
        st = LatticeState(m, L, mu, dims.N, mode=mode)
        r = height_balance_residual(st, consts, dims)
        resid.append(np.max(np.abs(r.mean())) * mu ** (consts.beta + 2))
    return BalanceResidual(height=np.array(resid), slope=float(fit.slope),
                           slope_halfwidth=float(tq * fit.stderr), intercept=float(fit.intercept)), {
        "L": L_values, "mu": mus, "prefactor": float(np.exp(fit.intercept)),
        "prefactor_pred_m1": float(pre_pred)}


@dataclass(frozen=True)
class Verdict:
    status: str
    reason: str


def feasibility_check(dims, beta):
    N = dims.N
    if beta <= N - 4:
        return Verdict("REJECT", "beta <= N-4: the balance forces mu^-(beta+2) = O(mu^-(beta+3)) "
                                 "(interaction mu^-(N-2) is subleading), which is impossible")
    if beta >= N - 2:
        return Verdict("REJECT", "beta >= N-2 violates the potential assumption beta in (N-4, N-2)")
    return Verdict("ACCEPT", "beta in (N-4, N-2)")


# ---------------------------------------------------------------------------
# nonexistence probe

@dataclass
class NonexistenceReport:
    q0: float
    mu: float
    leading: float
    leading_asymptotic: float
    competitors: dict
    margin: float
    ratio: float
    verdict: str


def nonexistence_probe(q0, state, univ, dims, potential, margin=4.0, i=None, phi=None,
                       cutoff=None, spec=None):
    """Terms of the identity obtained by testing the equation against U_i.

    The potential is q0 + Q(y) with Q the lattice model (Q = 0 on the lattice).
    Leading term: sum_j q0 int U_j U_i ~ q0 J_2 / mu^2.  Competitors (each an
    integral against U_i): potential variation, potential at the shifted
    centers, potential outside the cutoffs, linear operator on phi, nonlinear
    remainder, and the two cutoff-derivative terms.  phi (callable of (y1, r))
    defaults to 0.
    """
    from .profile_core import eval_Q_axisym
    spec = spec or QuadratureSpec(n_nodes=16)
    cutoff = cutoff or CutoffSpec()
    N, p, mu = dims.N, dims.p, state.mu
    x = state.positions
    i = state.m // 2 if i is None else i
    xi = x[i]
    Qlat = lambda y1, r: eval_Q_axisym(potential, y1, r)
    Qx = np.array([float(eval_Q_axisym(potential, np.array([xj]), np.array([0.0]))[0])
                   for xj in x])

    def parts(y1, r):
        r2 = r * r
        U = [bubble_radial((y1 - xj) ** 2 + r2, mu, N) for xj in x]
        Ui = U[i]
        Q = Qlat(y1, r)
        W = np.zeros_like(y1)
        xis, lap, grad = [], [], []
        for j, xj in enumerate(x):
            rho = np.sqrt((y1 - xj) ** 2 + r2)
            c0, c1, c2 = cutoff_profile(cutoff, rho)
            with np.errstate(divide="ignore", invalid="ignore"):
                lapxi = np.where(rho > 0, c2 + (N - 1) / np.where(rho > 0, rho, 1) * c1, 0.0)
            dU = -(N - 2) * mu * mu * rho * U[j] / (1 + mu * mu * rho * rho)  # radial derivative
            xis.append(c0)
            lap.append(lapxi)
            grad.append(c1 * dU)
            W = W + c0 * U[j]
        ph = np.zeros_like(y1) if phi is None else phi(y1, r)
        out = {
            "leading": q0 * sum(U) * Ui,
            "potential_variation": -sum((Q - Qx[j]) * U[j] for j in range(len(x))) * Ui,
            "shifted_center_potential": -sum(Qx[j] * U[j] for j in range(len(x))) * Ui,
            "outside_cutoff_potential": sum((q0 + Q) * (1 - xis[j]) * U[j]
                                            for j in range(len(x))) * Ui,
            "linear_phi": -ph * (Ui ** p + (q0 + Q) * Ui - p * W ** (p - 1) * Ui),
            "nonlinear_remainder": (np.maximum(W + ph, 0) ** p - p * W ** (p - 1) * ph
                                    - sum(xis[j] * U[j] ** p for j in range(len(x)))) * Ui,
            "cutoff_laplacian": sum(lap[j] * U[j] for j in range(len(x))) * Ui,
            "cutoff_gradient": 2 * sum(grad) * Ui,
        }
        return out

    focus = sorted({abs(xj - xi) for xj in x if xj != xi})
    res = polar_quad(parts, dims, center=xi, spec=spec, rho_breaks=[1.0, 2.0], rho_focus=focus,
                     focus_width=2.0, focus_levels=14, scale=1.0 / mu)
    vals = {k: v.value for k, v in res.items()}
    lead = vals.pop("leading")
    comp_sum = sum(abs(v) for v in vals.values())
    ratio = abs(lead) / comp_sum if comp_sum > 0 else np.inf
    if q0 == 0:
        verdict = "NO_OBSTRUCTION"
    else:
        verdict = "CONTRADICTION" if ratio >= margin else "INCONCLUSIVE"
    return NonexistenceReport(q0, mu, lead, q0 * univ.J_2 / mu ** 2, vals, margin, ratio, verdict)


# ---------------------------------------------------------------------------
# csv

SWEEP_COLUMNS = ("N", "beta", "L", "m", "mu", "slope", "residual_max", "verdict")


def write_sweep_csv(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS)
        w.writeheader()
        for row in rows:
            w.writerow({k: row.get(k) for k in SWEEP_COLUMNS})
