"""Evolution of centred quadrics: reduced coordinates, conserved quantity,
turning points, quadrature for the monodromy angles, and periodicity search.

The diagonal evolution is the system

    dw_j/dt = +conj(prod_{k != j} w_k)   (j <= a)
    dw_j/dt = -conj(prod_{k != j} w_k)   (j > a)

on nonzero complex w_1..w_m.  Writing w_j = e^{i theta_j} sqrt(alpha_j +- u)
reduces it to (u, theta_1..theta_m) with the conserved quantity

    A = Q(u)^(1/2) sin(theta),    Q(u) = prod(alpha_j + u) * prod(alpha_j - u),

theta = sum theta_j.  For 0 < A < A_max = sqrt(prod alpha_j) the motion of
(u, theta) is periodic with period T between the turning points gamma < 0 <
delta (the roots of Q = A^2), and each theta_j advances by a monodromy angle
beta_j per period.  All beta_j rational multiples of pi closes the swept
submanifold up; the search below looks for such parameter values.

Angle bookkeeping uses the continuous lift of arg w_j; near A = 0 some w_j
pass through zero and the lift jumps, so work in w coordinates there.
"""

from dataclasses import dataclass
from functools import lru_cache
from math import gcd

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .errors import NumericalError, ValidationError

_CASE_TOL = 1e-10


# ---------------------------------------------------------------------------
# parameters and states
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CentredParams:
    """Scale data (a, alpha_1..alpha_m, A) plus the quadric level c.

    The first a letters carry |w_j|^2 = alpha_j + u, the rest alpha_j - u.
    For a < m and A > 0 the alphas are expected in the normalized gauge
    sum_{j<=a} 1/alpha_j = sum_{j>a} 1/alpha_j (see ``normalize_lambda``).
    """

    m: int
    a: int
    alphas: tuple
    A: float
    c: float = 1.0

    def __post_init__(self):
        if self.m < 2:
            raise ValidationError("need m >= 2")
        if not (1 <= self.a <= self.m):
            raise ValidationError(f"need 1 <= a <= m, got a={self.a}")
        al = tuple(float(x) for x in self.alphas)
        if len(al) != self.m:
            raise ValidationError(f"expected {self.m} alphas, got {len(al)}")
        if not all(np.isfinite(al)) or not np.isfinite(self.A):
            raise ValidationError("non-finite parameter")
        if self.a == self.m and self.c <= 0:
            raise ValidationError("a = m requires level constant c > 0")
        if self.A < 0:
            raise ValidationError("A must be >= 0 (flip a sign of t instead)")
        object.__setattr__(self, "alphas", al)

    # -- derived quantities -------------------------------------------------

    @property
    def alpha_array(self) -> np.ndarray:
        return np.asarray(self.alphas)

    @property
    def signs(self) -> np.ndarray:
        """+1 for j <= a, -1 for j > a."""
        s = np.ones(self.m)
        s[self.a:] = -1.0
        return s

    @property
    def A_max(self) -> float:
        return float(np.sqrt(np.prod(self.alpha_array)))

    def Q(self, u):
        """Q(u) = prod_{j<=a}(alpha_j + u) prod_{j>a}(alpha_j - u)."""
        u = np.asarray(u, dtype=float)
        al = self.alpha_array
        out = np.prod(al[:self.a] + u[..., None], axis=-1)
        out *= np.prod(al[self.a:] - u[..., None], axis=-1)
        return out if out.shape else float(out)

    def Q_coefficients(self) -> np.ndarray:
        """Monomial coefficients of Q(u), highest power first."""
        al = self.alpha_array
        roots = np.concatenate([-al[:self.a], al[self.a:]])
        lead = (-1.0) ** (self.m - self.a)
        return lead * np.poly(roots)

    def u_interval(self) -> tuple:
        """Open interval confining u for a < m with A > 0."""
        if self.a == self.m:
            raise ValidationError("u is unbounded above when a = m")
        al = self.alpha_array
        return (-float(np.min(al[:self.a])), float(np.min(al[self.a:])))

    def normalization_residual(self) -> float:
        al = self.alpha_array
        return float(np.sum(1.0 / al[:self.a]) - np.sum(1.0 / al[self.a:]))

    def require_case_d(self):
        if self.a == self.m:
            raise ValidationError("case (d) requires a < m")
        if np.any(self.alpha_array <= 0):
            raise ValidationError("case (d) requires all alpha_j > 0")
        if abs(self.normalization_residual()) > 1e-9 * np.max(1.0 / self.alpha_array):
            raise ValidationError(
                "alphas are not in the normalized gauge; run normalize_lambda")
        if not (0.0 < self.A < self.A_max):
            raise ValidationError(
                f"case (d) requires 0 < A < {self.A_max:.6g}, got A={self.A}")


@dataclass(frozen=True)
class WVector:
    """State of the diagonal evolution: nonzero w_1..w_m at time t."""

    w: tuple
    t: float = 0.0

    def __post_init__(self):
        w = tuple(complex(z) for z in self.w)
        if any(z == 0 for z in w):
            raise ValidationError("all w_j must be nonzero")
        if not all(np.isfinite(z.real) and np.isfinite(z.imag) for z in w):
            raise ValidationError("non-finite w")
        object.__setattr__(self, "w", w)

    @property
    def m(self) -> int:
        return len(self.w)

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.w, dtype=complex)


@dataclass(frozen=True)
class ReducedState:
    """(u, theta_1..theta_m) at time t."""

    u: float
    thetas: tuple
    t: float = 0.0

    @property
    def theta(self) -> float:
        return float(np.sum(self.thetas))


@dataclass(frozen=True)
class BetaResult:
    """Monodromy angles with the period and turning points they belong to."""

    betas: tuple
    period_T: float
    gamma: float
    delta: float
    quadrature_error: float

    def to_dict(self) -> dict:
        return {
            "betas": list(self.betas),
            "betas_over_pi": [b / np.pi for b in self.betas],
            "sum_betas": float(np.sum(self.betas)),
            "period_T": self.period_T,
            "gamma": self.gamma,
            "delta": self.delta,
            "quadrature_error": self.quadrature_error,
        }


@dataclass(frozen=True)
class PeriodicSolution:
    """A parameter point where every beta_j is a rational multiple of pi.

    beta_j = pi * a_j / b with hcf(a_1..a_m, b) = 1 and sum a_j = 0; the
    evolution then repeats after time b*T (up to sign flips of the quadric
    coordinates with odd a_j).
    """

    params: CentredParams
    int_angles: tuple
    denom: int
    topology: str = ""
    residual: float = 0.0

    def __post_init__(self):
        if sum(self.int_angles) != 0:
            raise ValidationError("integer angles must sum to zero")
        g = self.denom
        for aj in self.int_angles:
            g = gcd(g, abs(aj))
        if g != 1:
            raise ValidationError("integer data not in lowest terms")

    def to_dict(self) -> dict:
        return {
            "m": self.params.m,
            "a": self.params.a,
            "alphas": list(self.params.alphas),
            "A": self.params.A,
            "c": self.params.c,
            "int_angles": [int(x) for x in self.int_angles],
            "denom": int(self.denom),
            "parities": [int(abs(x) % 2) for x in self.int_angles],
            "topology": self.topology,
            "residual": self.residual,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PeriodicSolution":
        params = CentredParams(d["m"], d["a"], tuple(d["alphas"]), d["A"], d["c"])
        return cls(params, tuple(int(x) for x in d["int_angles"]),
                   int(d["denom"]), d.get("topology", ""), d.get("residual", 0.0))


# ---------------------------------------------------------------------------
# right-hand sides and integration
# ---------------------------------------------------------------------------

def _leave_one_out(w: np.ndarray) -> np.ndarray:
    """prod_{k != j} w_k without division (stable when some |w_j| is tiny)."""
    m = w.size
    pre = np.empty(m + 1, dtype=complex)
    suf = np.empty(m + 1, dtype=complex)
    pre[0] = 1.0
    suf[m] = 1.0
    for j in range(m):
        pre[j + 1] = pre[j] * w[j]
    for j in range(m - 1, -1, -1):
        suf[j] = w[j] * suf[j + 1]
    return pre[:m] * suf[1:]


def rhs_w(w, a: int) -> np.ndarray:
    """dw_j/dt = +-conj(prod_{k != j} w_k), + for j <= a."""
    if isinstance(w, WVector):
        w = w.array
    w = np.asarray(w, dtype=complex)
    signs = np.ones(w.size)
    signs[a:] = -1.0
    return signs * np.conj(_leave_one_out(w))


class WSolutionPath:
    """Dense solution of the w system with continuous angle bookkeeping."""

    def __init__(self, a, sol, t_span, escaped=False, escape_time=None):
        self.a = a
        self._sol = sol
        self.t_span = t_span
        self.escaped = escaped
        self.escape_time = escape_time

    def w(self, t):
        """w values at scalar or array t; shape (..., m) complex."""
        t = np.asarray(t, dtype=float)
        y = self._sol(t)
        half = y.shape[0] // 2
        vals = y[:half] + 1j * y[half:]
        return np.moveaxis(vals, 0, -1)

    def angles(self, t_grid) -> np.ndarray:
        """Continuously lifted arg w_j over an (ordered, dense) t grid."""
        W = self.w(np.asarray(t_grid))
        return np.unwrap(np.angle(W), axis=0)


def integrate_w(w0, a: int, t_end: float, rtol: float = 1e-11,
                atol: float = 1e-13, events=None) -> WSolutionPath:
    """Integrate the w system from t=0 to t_end with dense output."""
    w0 = np.asarray(w0, dtype=complex)
    m = w0.size

    def rhs(t, y):
        w = y[:m] + 1j * y[m:]
        dw = rhs_w(w, a)
        return np.concatenate([dw.real, dw.imag])

    y0 = np.concatenate([w0.real, w0.imag])
    sol = solve_ivp(rhs, (0.0, t_end), y0, method="DOP853", rtol=rtol,
                    atol=atol, dense_output=True, events=events)
    if not sol.success and sol.status != 1:
        raise NumericalError(f"w integration failed: {sol.message}")
    return WSolutionPath(a, sol.sol, (0.0, sol.t[-1]))


# ---------------------------------------------------------------------------
# the (u, theta) reduction
# ---------------------------------------------------------------------------

def normalize_lambda(w0_sq, a: int) -> tuple:
    """Shift |w_j(0)|^2 by the unique lambda making all alpha_j > 0 and
    sum_{j<=a} 1/alpha_j = sum_{j>a} 1/alpha_j.

    Returns (alphas, lambda).  The root is bracketed by monotonicity of
    f(lam) = sum_{j<=a} 1/(s_j - lam) - sum_{j>a} 1/(s_j + lam).
    """
    s = np.asarray(w0_sq, dtype=float)
    m = s.size
    if not (1 <= a <= m - 1):
        raise ValidationError("normalization needs 1 <= a <= m-1")
    if np.any(s <= 0):
        raise ValidationError("moduli squared must be positive")

    def f(lam):
        return np.sum(1.0 / (s[:a] - lam)) - np.sum(1.0 / (s[a:] + lam))

    lo = -np.min(s[a:])
    hi = np.min(s[:a])
    span = hi - lo
    eps = 1e-14 * max(1.0, abs(lo), abs(hi))
    while f(lo + eps) > 0:
        eps *= 0.5
        if eps < 1e-300:
            raise NumericalError("normalization bracketing failed")
    lam = brentq(f, lo + eps, hi - eps, xtol=1e-15 * max(1.0, span), rtol=8.9e-16)
    # two Newton steps to push the residual to rounding level
    for _ in range(2):
        fp = np.sum(1.0 / (s[:a] - lam) ** 2) + np.sum(1.0 / (s[a:] + lam) ** 2)
        lam -= f(lam) / fp
    alphas = np.concatenate([s[:a] - lam, s[a:] + lam])
    return tuple(float(x) for x in alphas), float(lam)


def reduce_state(w, params: CentredParams, consistency_tol: float = 1e-8):
    """Recover (u, theta_j) and the conserved A from a w value.

    The m values of u implied by the moduli must agree to consistency_tol.
    """
    if isinstance(w, WVector):
        t, w = w.t, w.array
    else:
        t, w = 0.0, np.asarray(w, dtype=complex)
    al = params.alpha_array
    u_each = params.signs * (np.abs(w) ** 2 - al)
    scale = max(1.0, float(np.max(np.abs(al))))
    if np.max(u_each) - np.min(u_each) > consistency_tol * scale:
        raise ValidationError("moduli inconsistent with the given alphas")
    u = float(np.mean(u_each))
    thetas = tuple(float(x) for x in np.angle(w))
    state = ReducedState(u, thetas, t)
    A = float(np.sqrt(max(params.Q(u), 0.0)) * np.sin(state.theta))
    return state, A


def rhs_reduced(state: ReducedState, params: CentredParams):
    """du/dt and dtheta_j/dt of the reduced system."""
    al = params.alpha_array
    u = state.u
    radicands = np.where(params.signs > 0, al + u, al - u)
    if np.any(radicands <= 0):
        raise ValidationError("state outside the domain alpha_j +- u > 0")
    Q = float(np.prod(radicands))
    sqrtQ = np.sqrt(Q)
    theta = state.theta
    du = 2.0 * sqrtQ * np.cos(theta)
    dthetas = -params.signs * sqrtQ * np.sin(theta) / radicands
    return float(du), dthetas


def w_initial(params: CentredParams, u0: float = 0.0) -> np.ndarray:
    """A w(0) realizing the given (alphas, A) with u(0) = u0.

    theta(0) = arcsin(A / sqrt(Q(u0))) in [0, pi/2], split evenly.
    """
    al = params.alpha_array
    radicands = np.where(params.signs > 0, al + u0, al - u0)
    if np.any(radicands <= 0):
        raise ValidationError("u0 outside the admissible interval")
    Q0 = float(np.prod(radicands))
    s = params.A / np.sqrt(Q0)
    if s > 1.0 + 1e-12:
        raise ValidationError("A exceeds sqrt(Q(u0)); no such initial state")
    theta0 = float(np.arcsin(min(s, 1.0)))
    thetas = np.full(params.m, theta0 / params.m)
    return np.sqrt(radicands) * np.exp(1j * thetas)


# ---------------------------------------------------------------------------
# turning points and singular quadrature
# ---------------------------------------------------------------------------

def turning_points(params: CentredParams, xtol: float = 1e-13) -> tuple:
    """The two roots gamma < 0 < delta of Q(u) = A^2 bracketing zero."""
    params.require_case_d()
    lo, hi = params.u_interval()
    A2 = params.A ** 2

    def f(u):
        return params.Q(u) - A2

    if f(0.0) <= 0:
        raise ValidationError("A is not below the maximum of Q on the interval")
    gamma = brentq(f, lo, 0.0, xtol=xtol, rtol=8.9e-16)
    delta = brentq(f, 0.0, hi, xtol=xtol, rtol=8.9e-16)
    return float(gamma), float(delta)


@lru_cache(maxsize=None)
def _gl_rule(npts: int) -> tuple:
    x, w = np.polynomial.legendre.leggauss(npts)
    return x, w


def adaptive_gauss(f, a: float, b: float, tol: float = 1e-12,
                   max_depth: int = 52) -> tuple:
    """Adaptive Gauss-Legendre quadrature with node doubling.

    Each panel is estimated with 16- and 32-point rules; panels whose
    disagreement exceeds their share of the tolerance are bisected.
    Returns (value, error_estimate); raises NumericalError only if the
    accumulated estimate is grossly over budget.
    """
    x16, w16 = _gl_rule(16)
    x32, w32 = _gl_rule(32)
    total_width = b - a
    if total_width == 0:
        return 0.0, 0.0

    eps = np.finfo(float).eps
    value = 0.0
    err = 0.0
    stack = [(a, b, 0)]
    panels = 0
    while stack:
        panels += 1
        if panels > 200_000:
            raise NumericalError("quadrature panel budget exhausted")
        lo, hi, depth = stack.pop()
        mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
        i16 = half * np.dot(w16, f(mid + half * x16))
        i32 = half * np.dot(w32, f(mid + half * x32))
        panel_err = abs(i32 - i16)
        budget = tol * (hi - lo) / total_width
        # a panel already converged to rounding level cannot improve by
        # splitting, however small its width share of the budget is
        floor = 64.0 * eps * abs(i32)
        if panel_err <= max(budget, floor) or depth >= max_depth:
            value += i32
            err += panel_err
        else:
            stack.append((lo, mid, depth + 1))
            stack.append((mid, hi, depth + 1))
    if err > 1e6 * tol + 1e-6:
        raise NumericalError(
            f"quadrature did not converge: error estimate {err:.3e}")
    return float(value), float(err)


def _synthetic_division(coeffs: np.ndarray, root: float) -> np.ndarray:
    """Divide a monomial polynomial (highest first) by (u - root)."""
    out = np.empty(coeffs.size - 1)
    acc = coeffs[0]
    for i in range(coeffs.size - 1):
        out[i] = acc
        acc = coeffs[i + 1] + root * acc
    return out


class _ArcGeometry:
    """Cancellation-free evaluators on the arc u = gamma + (delta-gamma) sin^2 psi.

    Q(u) - A^2 = (u - gamma)(delta - u) R(u) with R > 0 on [gamma, delta];
    R is kept in root-product form and every denominator alpha_j +- u as an
    exact endpoint offset plus a nonnegative increment, so that integrand
    noise stays at rounding level even when a turning point sits within
    1e-7 of a root of Q.
    """

    def __init__(self, params: CentredParams, gamma: float, delta: float):
        self.gamma, self.delta = gamma, delta
        self.width = delta - gamma
        coeffs = params.Q_coefficients().copy()
        coeffs[-1] -= params.A ** 2
        w1 = _synthetic_division(coeffs, gamma)
        w2 = _synthetic_division(w1, delta)
        # R = -(leading coeff) * prod (u - r_i) over the remaining roots
        self.lead = -w2[0]
        self.root_base = (gamma - np.roots(w2)) if w2.size > 1 else np.array([])
        al = params.alpha_array
        a = params.a
        self.off_gamma = al[:a] + gamma   # alpha_j + u, j <= a
        self.off_delta = al[a:] - delta   # alpha_j - u, j > a
        if self.R_psi(np.array([np.pi / 4]))[0] <= 0:
            raise NumericalError("deflated quadrature factor is not positive")

    def R_psi(self, psi) -> np.ndarray:
        s2 = self.width * np.sin(psi) ** 2
        if self.root_base.size == 0:
            return np.full(np.shape(s2), float(np.real(self.lead)))
        vals = self.lead * np.prod(self.root_base[:, None] + s2[None, :], axis=0)
        return np.real(vals)

    def denom_psi(self, j: int, a: int, psi) -> np.ndarray:
        """alpha_j + u for j <= a, alpha_j - u for j > a, as nonnegative sums."""
        if j < a:
            return self.off_gamma[j] + self.width * np.sin(psi) ** 2
        return self.off_delta[j - a] + self.width * np.cos(psi) ** 2

    def psi_of_u(self, u: float) -> float:
        frac = (u - self.gamma) / self.width
        if frac < -1e-12 or frac > 1.0 + 1e-12:
            raise ValidationError("u outside the turning interval")
        return float(np.arcsin(np.sqrt(min(max(frac, 0.0), 1.0))))


def betas(params: CentredParams, tol: float = 3e-12) -> BetaResult:
    """Monodromy angles beta_j and the period T by singular quadrature.

    The substitution u = gamma + (delta - gamma) sin^2(psi) removes both
    inverse-square-root endpoint singularities, leaving the analytic
    integrand 2 / ((alpha_j +- u) sqrt(R)) on [0, pi/2].
    """
    params.require_case_d()
    gamma, delta = turning_points(params)
    arc = _ArcGeometry(params, gamma, delta)
    A = params.A

    beta_vals = np.empty(params.m)
    err_total = 0.0
    for j in range(params.m):
        sign = 1.0 if j < params.a else -1.0

        def integrand(psi):
            return 2.0 / (arc.denom_psi(j, params.a, psi)
                          * np.sqrt(arc.R_psi(psi)))

        val, err = adaptive_gauss(integrand, 0.0, np.pi / 2, tol=tol)
        beta_vals[j] = -sign * A * val
        err_total += A * err

    def t_integrand(psi):
        return 2.0 / np.sqrt(arc.R_psi(psi))

    # the substitution covers [gamma, delta] once, which is half a period in
    # u but integrates dv / sqrt(Q - A^2) = the full period T
    T_val, errT = adaptive_gauss(t_integrand, 0.0, np.pi / 2, tol=tol)
    err_total += errT
    return BetaResult(tuple(float(b) for b in beta_vals), float(T_val),
                      gamma, delta, float(err_total))


@dataclass(frozen=True)
class QuadratureArc:
    """theta_j(u) - theta_j(u0) and t(u) - t(u0) along the rising branch."""

    dthetas: tuple
    dt: float
    error: float


def quadrature_solution(params: CentredParams, u0: float, u: float,
                        tol: float = 1e-12) -> QuadratureArc:
    """Angle and time increments between u0 and u on the branch where
    theta stays in (-pi/2, pi/2) (u strictly increasing in t)."""
    params.require_case_d()
    gamma, delta = turning_points(params)
    arc = _ArcGeometry(params, gamma, delta)
    psi0 = arc.psi_of_u(u0)
    psi1 = arc.psi_of_u(u)
    A = params.A

    dthetas = np.empty(params.m)
    err_total = 0.0
    for j in range(params.m):
        sign = 1.0 if j < params.a else -1.0

        def integrand(psi):
            return 1.0 / (arc.denom_psi(j, params.a, psi)
                          * np.sqrt(arc.R_psi(psi)))

        val, err = adaptive_gauss(integrand, psi0, psi1, tol=tol)
        dthetas[j] = -sign * A * val
        err_total += A * err

    def t_integrand(psi):
        return 1.0 / np.sqrt(arc.R_psi(psi))

    dt, errT = adaptive_gauss(t_integrand, psi0, psi1, tol=tol)
    return QuadratureArc(tuple(float(x) for x in dthetas), float(dt),
                         float(err_total + errT))


# ---------------------------------------------------------------------------
# limits of the monodromy angles
# ---------------------------------------------------------------------------

def quadrature_case_b(params: CentredParams, u0: float, u: float,
                      tol: float = 1e-12) -> QuadratureArc:
    """Angle and time increments when a = m (all letters carry +u).

    Q is then increasing on the admissible half line, so there is a single
    turning point gamma and u runs on [gamma, infinity); the substitution
    u = gamma + q^2 removes the endpoint singularity.
    """
    if params.a != params.m:
        raise ValidationError("this branch is for a = m")
    if params.A <= 0:
        raise ValidationError("need A > 0")
    al = params.alpha_array
    A2 = params.A ** 2
    lo = -float(np.min(al))

    def f(v):
        return params.Q(v) - A2

    hi = lo + 1.0
    while f(hi) < 0:
        hi = lo + 2 * (hi - lo)
    gamma = brentq(f, lo, hi, xtol=1e-14, rtol=8.9e-16)
    if u0 < gamma - 1e-12 or u < gamma - 1e-12:
        raise ValidationError("u outside the admissible half line")

    coeffs = params.Q_coefficients().copy()
    coeffs[-1] -= A2
    w1 = _synthetic_division(coeffs, gamma)
    lead = w1[0]
    root_base = (gamma - np.roots(w1)) if w1.size > 1 else np.array([])
    off = al + gamma

    def W_of_q(q):
        q2 = q ** 2
        if root_base.size == 0:
            return np.full(np.shape(q2), float(np.real(lead)))
        return np.real(lead * np.prod(root_base[:, None] + q2[None, :],
                                      axis=0))

    q0 = float(np.sqrt(max(u0 - gamma, 0.0)))
    q1 = float(np.sqrt(max(u - gamma, 0.0)))
    dthetas = np.empty(params.m)
    err_total = 0.0
    for j in range(params.m):
        def integrand(q):
            return 1.0 / ((off[j] + q ** 2) * np.sqrt(W_of_q(q)))

        val, err = adaptive_gauss(integrand, q0, q1, tol=tol)
        dthetas[j] = -params.A * val
        err_total += params.A * err

    dt, errT = adaptive_gauss(lambda q: 1.0 / np.sqrt(W_of_q(q)), q0, q1,
                              tol=tol)
    return QuadratureArc(tuple(float(x) for x in dthetas), float(dt),
                         float(err_total + errT))


@dataclass(frozen=True)
class BetaLimits:
    """Limit vectors of beta as A -> 0 and A -> A_max, with multiplicities.

    k (resp. l) is the multiplicity of the smallest alpha in the first
    (resp. second) group: the turning points run into the nearest roots
    -min_{j<=a} alpha_j and +min_{j>a} alpha_j, so those positions absorb
    the whole limit angle -pi/k (resp. +pi/l).
    """

    k: int
    l: int
    small_A: tuple
    large_A: tuple


def beta_limits(alphas, a: int, tie_tol: float = 1e-12) -> BetaLimits:
    al = np.asarray(alphas, dtype=float)
    m = al.size
    if not (1 <= a <= m - 1):
        raise ValidationError("limits need 1 <= a <= m-1")
    if np.any(al <= 0):
        raise ValidationError("alphas must be positive")
    res = np.sum(1.0 / al[:a]) - np.sum(1.0 / al[a:])
    if abs(res) > 1e-9 * np.max(1.0 / al):
        raise ValidationError("alphas must be normalized first")

    lo1 = np.min(al[:a])
    lo2 = np.min(al[a:])
    first = np.where(al[:a] <= lo1 * (1 + tie_tol))[0]
    second = a + np.where(al[a:] <= lo2 * (1 + tie_tol))[0]
    k, l = first.size, second.size

    small = np.zeros(m)
    small[first] = -np.pi / k
    small[second] = np.pi / l

    scale = 2.0 * np.pi / np.sqrt(2.0 * np.sum(al ** -2))
    signs = np.ones(m)
    signs[a:] = -1.0
    large = -signs * scale / al
    return BetaLimits(int(k), int(l), tuple(map(float, small)),
                      tuple(map(float, large)))


# ---------------------------------------------------------------------------
# case classification and topology labels
# ---------------------------------------------------------------------------

def classify_case(params: CentredParams, tol: float = _CASE_TOL) -> str:
    """One of 'a' (A=0), 'b' (a=m), 'c' (A at its maximum), 'd' (generic)."""
    if abs(params.A) <= tol:
        return "a"
    if params.a == params.m:
        return "b"
    if np.any(params.alpha_array <= 0):
        raise ValidationError("cases (c)/(d) need positive alphas")
    if abs(params.A - params.A_max) <= tol * (1.0 + params.A_max):
        return "c"
    return "d"


def classify_topology(sol: PeriodicSolution, c: float) -> str:
    """Diffeomorphism label of the closed submanifold for the level c.

    For m = 3, a = 1 the parity of the first integer angle decides between
    the two-piece and the quotient pictures; for general m only the
    possible free Z2 quotient is reported.
    """
    m, a = sol.params.m, sol.params.a
    if m == 3 and a == 1:
        a1_even = sol.int_angles[0] % 2 == 0
        if a1_even:
            if c > 0:
                return "two S^1×R^2 pieces, N_− = −N_+"
            if c < 0:
                return "T^2×R, N = −N"
            return "two T²-cones, N_− = −N_+"
        if c > 0:
            return "S^1×R^2"
        if c < 0:
            return "Klein-bottle line bundle, one end T²×(0,∞)"
        return "T²-cone, N = −N"
    if c > 0:
        return f"S^{a - 1}×R^{m - a}×S^1 (possibly /Z₂)"
    if c < 0:
        return f"R^{a}×S^{m - a - 1}×S^1 (possibly /Z₂)"
    return f"cone on S^{a - 1}×S^{m - a - 1}×S^1 (possibly /Z₂)"


# ---------------------------------------------------------------------------
# measuring period and monodromy from the ODE (the independent route)
# ---------------------------------------------------------------------------

def betas_ode(params: CentredParams, rtol: float = 1e-11, atol: float = 1e-13,
              n_lift: int = 4096) -> BetaResult:
    """Period and monodromy angles measured from direct w integration.

    The period is located from successive minima of u (ascending zeros of
    du/dt, an event on Re(prod w_j)); the angles come from the continuous
    lift of arg w_j over one period.  Serves as the independent oracle for
    the quadrature route.
    """
    params.require_case_d()
    w0 = w_initial(params)
    m = params.m

    def rhs(t, y):
        w = y[:m] + 1j * y[m:]
        dw = rhs_w(w, params.a)
        return np.concatenate([dw.real, dw.imag])

    def du_event(t, y):
        w = y[:m] + 1j * y[m:]
        return float(np.real(np.prod(w)))

    du_event.direction = 1.0
    y0 = np.concatenate([w0.real, w0.imag])

    # T grows like log(1/A) near the endpoints, so retry with longer horizons
    t_guess = _period_scale(params)
    times = np.array([])
    sol = None
    for horizon in (8 * t_guess, 64 * t_guess, 512 * t_guess):
        sol = solve_ivp(rhs, (0.0, horizon), y0, method="DOP853", rtol=rtol,
                        atol=atol, dense_output=True, events=du_event)
        times = sol.t_events[0]
        if times.size >= 3:
            break
    if times.size < 3:
        raise NumericalError("failed to bracket one period of u")

    t1, t2 = float(times[1]), float(times[2])
    T = t2 - t1
    path = WSolutionPath(params.a, sol.sol, (0.0, sol.t[-1]))
    th = path.angles(np.linspace(t1, t2, n_lift))
    beta_vals = th[-1] - th[0]
    u_min = _u_of_w(path.w(t1), params)
    u_max = _u_of_w(path.w(t1 + 0.5 * T), params)
    return BetaResult(tuple(float(b) for b in beta_vals), float(T),
                      float(u_min), float(u_max), float("nan"))


def _period_scale(params: CentredParams) -> float:
    # harmonic estimate near A = A_max; adequate as an integration horizon
    al = params.alpha_array
    return float(2 * np.pi / np.sqrt(2 * np.prod(al) * np.sum(al ** -2)) + 1.0)


def _u_of_w(w, params: CentredParams) -> float:
    return float(np.mean(params.signs * (np.abs(w) ** 2 - params.alpha_array)))


# ---------------------------------------------------------------------------
# periodicity search
# ---------------------------------------------------------------------------

def symmetric_alphas(m: int, a: int) -> tuple:
    """The normalized family (1,..,1, y,..,y) with y = (m-a)/a."""
    if not (1 <= a <= m - 1):
        raise ValidationError("need 1 <= a <= m-1")
    y = (m - a) / a
    return tuple([1.0] * a + [y] * (m - a))


def _rational_candidate(beta_vals: np.ndarray, b_max: int):
    """Best (a_vec, b, residual) with all beta_j ~ pi a_j / b, b <= b_max."""
    best = None
    r = np.asarray(beta_vals) / np.pi
    for b in range(1, b_max + 1):
        a_vec = np.round(b * r).astype(int)
        if a_vec.sum() != 0:
            continue
        residual = float(np.max(np.abs(beta_vals - np.pi * a_vec / b)))
        if best is None or residual < best[2]:
            best = (tuple(int(x) for x in a_vec), b, residual)
    return best


def _reduce_hcf(a_vec: tuple, b: int) -> tuple:
    g = b
    for x in a_vec:
        g = gcd(g, abs(x))
    return tuple(x // g for x in a_vec), b // g


def periodic_search(alphas, a: int, b_max: int, tol: float = 1e-8,
                    n_grid: int = 96, A_fractions: tuple = (0.02, 0.98),
                    c: float = 0.0, quad_tol: float = 1e-12) -> list:
    """Scan A for parameter points where all beta_j / pi are rational with
    common denominator <= b_max.

    ``alphas`` is one normalized alpha tuple or an iterable of them (the
    caller-supplied scan over the family parameters).  Per tuple, the scan
    evaluates beta on an A grid, brackets integer crossings of
    b * beta_1 / pi for each candidate denominator, solves for A by root
    finding, and keeps solutions whose full angle vector matches its
    rational target within tol.  An empty result is not an error.
    """
    first = next(iter(alphas))
    if np.iterable(first):
        out = []
        for al_tuple in alphas:
            out.extend(periodic_search(al_tuple, a, b_max, tol=tol,
                                       n_grid=n_grid, A_fractions=A_fractions,
                                       c=c, quad_tol=quad_tol))
        return out
    al = np.asarray(alphas, dtype=float)
    m = al.size
    probe = CentredParams(m, a, tuple(al), 0.5 * float(np.sqrt(np.prod(al))), c=c)
    probe.require_case_d()
    A_max = probe.A_max

    def beta_at(A):
        p = CentredParams(m, a, tuple(al), A, c=c)
        return np.asarray(betas(p, tol=quad_tol).betas)

    A_grid = np.linspace(A_fractions[0] * A_max, A_fractions[1] * A_max, n_grid)
    beta_grid = np.array([beta_at(A) for A in A_grid])

    found = {}

    def consider(A_star, beta_star):
        cand = _rational_candidate(beta_star, b_max)
        if cand is None:
            return
        a_vec, b, residual = cand
        if residual > tol:
            return
        a_vec, b = _reduce_hcf(a_vec, b)
        key = (a_vec, b)
        if key in found and found[key].residual <= residual:
            return
        params = CentredParams(m, a, tuple(al), float(A_star), c=c)
        sol = PeriodicSolution(params, a_vec, b, residual=residual)
        found[key] = PeriodicSolution(params, a_vec, b,
                                      topology=classify_topology(sol, c),
                                      residual=residual)

    # direct hits on the grid (covers families with constant rational beta)
    for A_val, bvec in zip(A_grid, beta_grid):
        consider(A_val, bvec)

    # bracketing integer crossings of b*beta_1/pi between grid points
    for b in range(1, b_max + 1):
        r0 = b * beta_grid[:, 0] / np.pi
        for i in range(n_grid - 1):
            lo_n = int(np.ceil(min(r0[i], r0[i + 1])))
            hi_n = int(np.floor(max(r0[i], r0[i + 1])))
            for n_target in range(lo_n, hi_n + 1):
                target = np.pi * n_target / b

                def g(A):
                    return beta_at(A)[0] - target

                g_lo = beta_grid[i, 0] - target
                g_hi = beta_grid[i + 1, 0] - target
                if g_lo == 0.0 or g_hi == 0.0 or g_lo * g_hi > 0:
                    continue
                A_star = brentq(g, A_grid[i], A_grid[i + 1], xtol=1e-14)
                consider(A_star, beta_at(A_star))

    return sorted(found.values(), key=lambda s: (s.denom, s.int_angles))


def verify_periodic(sol: PeriodicSolution, rtol: float = 1e-11,
                    atol: float = 1e-13, n_check: int = 257) -> dict:
    """Re-verify a periodic solution against the w ODE.

    Integrates over b*T plus one extra period and checks the sign relation
    w_j(t + b T) = (-1)^{a_j} w_j(t) on a grid of t in [0, T].
    """
    params = sol.params
    quad = betas(params)
    T, b = quad.period_T, sol.denom
    w0 = w_initial(params)
    path = integrate_w(w0, params.a, b * T + T, rtol=rtol, atol=atol)
    t_grid = np.linspace(0.0, T, n_check)
    w_base = path.w(t_grid)
    w_shift = path.w(t_grid + b * T)
    signs = np.asarray([(-1.0) ** aj for aj in sol.int_angles])
    err = float(np.max(np.abs(w_shift - signs * w_base)))
    return {"max_defect": err, "period_T": T, "denom": b,
            "betas": list(quad.betas)}
