"""Meshes of the constructed families and numerical verification that they
are special Lagrangian: the symplectic form and the imaginary part of the
holomorphic volume form must both vanish on tangent frames.

Verification prefers analytic tangent frames: the time direction is taken
from the evolution right-hand side and the quadric directions from chart
Jacobians, so residuals measure the construction itself rather than
integration error.  Frames are normalized to unit vectors and the volume
residual divided by the frame's Gram volume, making every report scale
free.  Finite-difference tangents are available for convergence checks.
"""

import json
from dataclasses import dataclass, field, replace

import numpy as np

from . import affine as affine_mod
from . import centred, threefold
from .errors import ValidationError
from .multilinear import complex_to_real

_DEGENERATE_GRAM = 1e-14
NORMALIZATION_NOTE = ("unit tangent vectors; omega over all pairs, "
                      "|Im Omega| per unit Gram volume, orientation chosen "
                      "to make Re Omega nonnegative")


# ---------------------------------------------------------------------------
# charts on the quadric level sets
# ---------------------------------------------------------------------------

def sphere_embed(phis: np.ndarray) -> tuple:
    """Unit-sphere point and Jacobian for hyperspherical angles.

    d angles parametrize S^d; interior sampling keeps sin(phi_j) away from
    zero so the Jacobian rows stay independent.
    """
    phis = np.asarray(phis, dtype=float)
    d = phis.size
    p = np.empty(d + 1)
    sin_prod = 1.0
    for i in range(d):
        p[i] = np.cos(phis[i]) * sin_prod
        sin_prod *= np.sin(phis[i])
    p[d] = sin_prod
    jac = np.zeros((d, d + 1))
    for j in range(d):
        for i in range(d + 1):
            if i < j:
                continue
            if i == j:
                pref = np.prod(np.sin(phis[:i]))
                jac[j, i] = -np.sin(phis[i]) * pref
            elif i < d:
                jac[j, i] = p[i] * np.cos(phis[j]) / np.sin(phis[j])
            else:
                jac[j, i] = p[d] * np.cos(phis[j]) / np.sin(phis[j])
    return p, jac


class QuadricChart:
    """Coordinates on {sum x_j^2 - sum y_j^2 = c} in R^a x R^{m-a}.

    Layout of the m-1 continuous coordinates (branch signs, where the
    sphere factor is S^0, ride along as trailing +-1 entries):

      c > 0:  (a-1 angles on the x sphere, m-a radial y's)
      c < 0:  (a radial x's, m-a-1 angles on the y sphere)
      c = 0:  (rho, a-1 x angles, m-a-1 y angles), the cone radius rho > 0
    """

    def __init__(self, m: int, a: int, c: float, radius: float = 2.0):
        if not (1 <= a <= m):
            raise ValidationError("need 1 <= a <= m")
        if a == m and c <= 0:
            raise ValidationError("a = m needs c > 0")
        self.m, self.a, self.c, self.radius = m, a, float(c), radius
        ax, ay = a, m - a
        if self.c > 0:
            self.n_branch = 1 if ax == 1 else 0
        elif self.c < 0:
            self.n_branch = 1 if ay == 1 else 0
        else:
            self.n_branch = (1 if ax == 1 else 0) + (1 if ay == 1 else 0)
        self.n_cont = m - 1

    def sample_coords(self, count: int, seed: int = 0) -> np.ndarray:
        """(count, n_cont + n_branch) coordinate rows, branches trailing."""
        rng = np.random.default_rng(seed)
        m, a, c = self.m, self.a, self.c
        cols = []

        def angles(d):
            if d <= 0:
                return None
            block = np.empty((count, d))
            for j in range(d - 1):
                block[:, j] = rng.uniform(0.35, np.pi - 0.35, size=count)
            block[:, d - 1] = rng.uniform(0.0, 2 * np.pi, size=count)
            return block

        if c > 0:
            ang = angles(a - 1)
            if ang is not None:
                cols.append(ang)
            cols.append(rng.uniform(-self.radius, self.radius,
                                    size=(count, m - a)))
        elif c < 0:
            cols.append(rng.uniform(-self.radius, self.radius,
                                    size=(count, a)))
            ang = angles(m - a - 1)
            if ang is not None:
                cols.append(ang)
        else:
            cols.append(rng.uniform(0.4, self.radius, size=(count, 1)))
            for d in (a - 1, m - a - 1):
                ang = angles(d)
                if ang is not None:
                    cols.append(ang)
        for _ in range(self.n_branch):
            cols.append(rng.choice([-1.0, 1.0], size=(count, 1)))
        return np.column_stack(cols)

    def _split(self, q):
        q = np.asarray(q, dtype=float)
        cont, branch = q[:self.n_cont], q[self.n_cont:]
        return cont, branch

    def point(self, q) -> np.ndarray:
        x, _ = self.point_and_jacobian(q)
        return x

    def point_and_jacobian(self, q) -> tuple:
        """Quadric point and the (m-1) x m Jacobian of the chart."""
        cont, branch = self._split(q)
        m, a, c = self.m, self.a, self.c
        ay = m - a
        x = np.empty(m)
        jac = np.zeros((self.n_cont, m))
        bi = 0

        def unit_block(d, sign_needed):
            nonlocal bi
            if d >= 1:
                return None, None  # handled by caller with angles
            sgn = branch[bi] if sign_needed else 1.0
            bi += 1 if sign_needed else 0
            return np.array([sgn]), np.zeros((0, 1))

        if c > 0:
            na = a - 1
            ang, ys = cont[:na], cont[na:]
            if na > 0:
                sig, dsig = sphere_embed(ang)
            else:
                sig, dsig = unit_block(0, True)
            r = np.sqrt(c + ys @ ys)
            x[:a] = r * sig
            x[a:] = ys
            # d/d(angle): r * dsig; d/d(y_k): (y_k / r) sig (+ e_k below)
            jac[:na, :a] = r * dsig
            for k in range(ay):
                jac[na + k, :a] = (ys[k] / r) * sig
                jac[na + k, a + k] = 1.0
        elif c < 0:
            xs, ang = cont[:a], cont[a:]
            nb = ay - 1
            if nb > 0:
                tau, dtau = sphere_embed(ang)
            else:
                tau, dtau = unit_block(0, True)
            r = np.sqrt(xs @ xs - c)
            x[:a] = xs
            x[a:] = r * tau
            for k in range(a):
                jac[k, k] = 1.0
                jac[k, a:] = (xs[k] / r) * tau
            jac[a:, a:] = r * dtau
        else:
            rho = cont[0]
            na, nb = a - 1, ay - 1
            ang_x = cont[1:1 + na]
            ang_y = cont[1 + na:]
            if na > 0:
                sig, dsig = sphere_embed(ang_x)
            else:
                sig, dsig = unit_block(0, True)
            if nb > 0:
                tau, dtau = sphere_embed(ang_y)
            else:
                tau, dtau = unit_block(0, True)
            x[:a] = rho * sig
            x[a:] = rho * tau
            jac[0, :a] = sig
            jac[0, a:] = tau
            if na > 0:
                jac[1:1 + na, :a] = rho * dsig
            if nb > 0:
                jac[1 + na:, a:] = rho * dtau
        return x, jac


# ---------------------------------------------------------------------------
# parametrized families with analytic frames
# ---------------------------------------------------------------------------

class CaseCWPath:
    """Closed-form diagonal evolution at the maximal conserved value:
    constant moduli sqrt(alpha_j) and linear phase drift -+ A t / alpha_j."""

    def __init__(self, params: centred.CentredParams):
        al = params.alpha_array
        self.moduli = np.sqrt(al)
        theta0 = np.pi / 2 / params.m
        self.theta0 = np.full(params.m, theta0)
        self.rates = -params.signs * params.A / al

    def w(self, t):
        t = np.asarray(t, dtype=float)
        phase = self.theta0 + np.multiply.outer(t, self.rates)
        return self.moduli * np.exp(1j * phase)


class _FamilyBase:
    """Common sampling plumbing: subclasses define n_continuous,
    sample_params, point_param and frame_param (analytic)."""

    def fd_frame(self, pv, probe: float = 1e-5) -> np.ndarray:
        rows = []
        pv = np.asarray(pv, dtype=float)
        for i in range(self.n_continuous):
            up, dn = pv.copy(), pv.copy()
            up[i] += probe
            dn[i] -= probe
            rows.append((self.point_param(up) - self.point_param(dn))
                        / (2 * probe))
        return np.asarray(rows)


class CentredFamily(_FamilyBase):
    """The centred-quadric submanifold as a map of (t, quadric chart).

    Frames are analytic: the t row uses the evolution right-hand side at
    w(t), the chart rows the chart Jacobian, so the special Lagrangian
    residuals probe the construction pointwise.
    """

    def __init__(self, params: centred.CentredParams, c: float = None,
                 t_span: float = None, w_source=None, radius: float = 2.0):
        self.params = params
        self.c = params.c if c is None else c
        self.m, self.a = params.m, params.a
        case = centred.classify_case(params)
        if w_source is not None:
            self.w_source = w_source
        elif case == "c":
            self.w_source = CaseCWPath(params)
        else:
            if t_span is None:
                if case == "d":
                    t_span = 2.0 * centred.betas(params).period_T
                else:
                    t_span = 2.0
            self.w_source = centred.integrate_w(
                centred.w_initial(params), params.a, float(t_span))
        if t_span is None:
            t_span = 2.0 * centred.betas(params).period_T if case == "d" else 2.0
        self.t_span = float(t_span)
        self.chart = QuadricChart(self.m, self.a, self.c, radius)
        self.n_continuous = self.m

    def sample_params(self, count: int, seed: int = 0) -> np.ndarray:
        rng = np.random.default_rng(seed)
        ts = rng.uniform(0.0, self.t_span, size=(count, 1))
        qs = self.chart.sample_coords(count, seed + 1)
        return np.column_stack([ts, qs])

    def point_param(self, pv) -> np.ndarray:
        w = self.w_source.w(float(pv[0]))
        x = self.chart.point(pv[1:])
        return w * x

    def frame_param(self, pv) -> np.ndarray:
        w = self.w_source.w(float(pv[0]))
        dw = centred.rhs_w(w, self.a)
        x, jac = self.chart.point_and_jacobian(pv[1:])
        rows = np.empty((self.m, self.m), dtype=complex)
        rows[0] = dw * x
        rows[1:] = jac * w[None, :]
        return rows


class AffineFamily(_FamilyBase):
    """The translated (paraboloid) submanifold as a map of (t, x_1..x_{m-1})."""

    def __init__(self, params: affine_mod.AffineParams, t_span: float = 4.0,
                 radius: float = 2.0, w0=None, beta0=None):
        self.params = params
        self.m, self.a = params.m, params.a
        if w0 is None:
            w0, beta0 = affine_mod.affine_initial(params)
        elif beta0 is None:
            beta0 = 0.0
        self.path = affine_mod.integrate_affine(w0, beta0, params.a,
                                                float(t_span))
        self.t_span = min(float(t_span), self.path.t_span[1])
        self.radius = radius
        self.n_continuous = self.m

    def _x_last(self, xs) -> float:
        signs = np.ones(self.m - 1)
        signs[self.a:] = -1.0
        return -0.5 * float(signs @ (np.asarray(xs) ** 2))

    def sample_params(self, count: int, seed: int = 0) -> np.ndarray:
        rng = np.random.default_rng(seed)
        ts = rng.uniform(0.0, self.t_span, size=(count, 1))
        xs = rng.uniform(-self.radius, self.radius, size=(count, self.m - 1))
        return np.column_stack([ts, xs])

    def point_param(self, pv) -> np.ndarray:
        t, xs = float(pv[0]), np.asarray(pv[1:], dtype=float)
        w = self.path.w(t)
        out = np.empty(self.m, dtype=complex)
        out[:-1] = w * xs
        out[-1] = self._x_last(xs) + self.path.beta(t)
        return out

    def frame_param(self, pv) -> np.ndarray:
        t, xs = float(pv[0]), np.asarray(pv[1:], dtype=float)
        w = self.path.w(t)
        dw, dbeta = affine_mod.rhs_affine((w, None), self.a)
        signs = np.ones(self.m - 1)
        signs[self.a:] = -1.0
        rows = np.zeros((self.m, self.m), dtype=complex)
        rows[0, :-1] = dw * xs
        rows[0, -1] = dbeta
        for i in range(self.m - 1):
            rows[1 + i, i] = w[i]
            rows[1 + i, -1] = -signs[i] * xs[i]
        return rows


class ConeOverLinkFamily(_FamilyBase):
    """The three-dimensional cone r * Phi(s, t) over the link surface."""

    def __init__(self, alphas, A: float, r_range=(0.5, 2.0), t_span=None):
        al = np.asarray(alphas, dtype=float)
        self.params = centred.CentredParams(3, 1, tuple(al), float(A), c=0.0)
        self.section = threefold.cross_section(al)
        if t_span is None:
            t_span = centred.betas(self.params).period_T
        self.t_span = float(t_span)
        self.path = centred.integrate_w(centred.w_initial(self.params), 1,
                                        self.t_span)
        self.r_range = r_range
        self.m = 3
        self.n_continuous = 3

    def sample_params(self, count: int, seed: int = 0) -> np.ndarray:
        rng = np.random.default_rng(seed)
        return np.column_stack([
            rng.uniform(0.0, self.t_span, size=count),
            rng.uniform(0.0, self.section.period, size=count),
            rng.uniform(*self.r_range, size=count)])

    def point_param(self, pv) -> np.ndarray:
        t, s, r = map(float, pv)
        return r * self.section.x(s) * self.path.w(t)

    def frame_param(self, pv) -> np.ndarray:
        t, s, r = map(float, pv)
        w = self.path.w(t)
        dw = threefold.rhs_w3(w)
        x = self.section.x(s)
        dx = self.section.dx_ds(s)
        return np.asarray([x * w, r * dx * w, r * x * dw])


class Affine3ClosedFamily(_FamilyBase):
    """The explicit m = 3 translated solutions as a map of (t, x_1, x_2)."""

    def __init__(self, form: threefold.Affine3ClosedForm, radius: float = 2.0,
                 t_span: float = 3.0):
        self.form = form
        self.radius = radius
        self.t_span = t_span
        self.m = 3
        self.n_continuous = 3

    def sample_params(self, count: int, seed: int = 0) -> np.ndarray:
        rng = np.random.default_rng(seed)
        return np.column_stack([
            rng.uniform(0.0, self.t_span, size=count),
            rng.uniform(-self.radius, self.radius, size=(count, 2))])

    def point_param(self, pv) -> np.ndarray:
        t, x1, x2 = map(float, pv)
        return np.asarray(self.form.point(x1, x2, t), dtype=complex)

    def frame_param(self, pv) -> np.ndarray:
        t, x1, x2 = map(float, pv)
        w = self.form.w(t)
        dw = self.form.dw(t)
        dbeta = self.form.dbeta(t)
        sx1 = -x1
        sx2 = -x2 if self.form.variant == "a2" else x2
        return np.asarray([
            [dw[0] * x1, dw[1] * x2, dbeta],
            [w[0], 0.0, sx1],
            [0.0, w[1], sx2]], dtype=complex)


class RotatedPlaneFamily(_FamilyBase):
    """The plane diag(e^{i theta_1}, ..., e^{i theta_m}) R^m; special
    Lagrangian exactly when the phases sum to a multiple of pi."""

    def __init__(self, thetas, radius: float = 2.0):
        self.thetas = np.asarray(thetas, dtype=float)
        self.m = self.thetas.size
        self.radius = radius
        self.n_continuous = self.m

    def sample_params(self, count: int, seed: int = 0) -> np.ndarray:
        rng = np.random.default_rng(seed)
        return rng.uniform(-self.radius, self.radius, size=(count, self.m))

    def point_param(self, pv) -> np.ndarray:
        return np.exp(1j * self.thetas) * np.asarray(pv, dtype=float)

    def frame_param(self, pv) -> np.ndarray:
        return np.diag(np.exp(1j * self.thetas))


# ---------------------------------------------------------------------------
# special Lagrangian residuals
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SLReport:
    """Scale-free residual summary of the two defining conditions."""

    max_omega_residual: float
    mean_omega_residual: float
    max_imOmega_residual: float
    mean_imOmega_residual: float
    normalization: str
    sample_count: int
    skipped: int = 0

    def max_residual(self) -> float:
        return max(self.max_omega_residual, self.max_imOmega_residual)

    def to_dict(self) -> dict:
        return {
            "max_omega_residual": self.max_omega_residual,
            "mean_omega_residual": self.mean_omega_residual,
            "max_imOmega_residual": self.max_imOmega_residual,
            "mean_imOmega_residual": self.mean_imOmega_residual,
            "normalization": self.normalization,
            "sample_count": self.sample_count,
            "skipped": self.skipped,
        }


def _frame_residuals(frame_c: np.ndarray) -> tuple:
    """(omega residual, Im Omega residual, degenerate flag) of one complex
    m x m frame (rows = tangent vectors in complex coordinates)."""
    norms = np.linalg.norm(
        np.concatenate([frame_c.real, frame_c.imag], axis=1), axis=1)
    if np.any(norms < 1e-300):
        return 0.0, 0.0, True
    unit = frame_c / norms[:, None]
    # real Gram matrix of unit vectors: Re <v_i, v_j>
    gram = np.real(unit @ np.conj(unit.T))
    det = np.linalg.det(gram)
    if det < _DEGENERATE_GRAM:
        return 0.0, 0.0, True
    vol = np.sqrt(det)
    # omega(v_i, v_j) = Im <v_i, v_j> in complex coordinates
    omega_vals = np.imag(unit @ np.conj(unit.T))
    omega_res = float(np.max(np.abs(omega_vals)))
    Om = np.linalg.det(unit.T)
    im_res = float(abs(np.imag(Om)) / vol)
    return omega_res, im_res, False


def sl_residuals(target, n_samples: int = 1000, seed: int = 0,
                 tangents: str = "analytic", probe: float = 1e-5) -> SLReport:
    """Evaluate the special Lagrangian conditions on random samples.

    ``target`` is a parametrized family (analytic frames preferred) or a
    Mesh produced by the builders in this module (which re-evaluates the
    attached family at the stored vertex parameters).  Degenerate frames
    (Gram volume below 1e-14) are skipped and counted.
    """
    if isinstance(target, Mesh):
        return mesh_residual_report(target)
    pvs = target.sample_params(n_samples, seed)
    om, im = [], []
    skipped = 0
    for pv in pvs:
        if tangents == "analytic":
            frame = target.frame_param(pv)
        elif tangents == "fd":
            frame = target.fd_frame(pv, probe)
        else:
            raise ValidationError("tangents must be 'analytic' or 'fd'")
        o, i, bad = _frame_residuals(np.asarray(frame, dtype=complex))
        if bad:
            skipped += 1
            continue
        om.append(o)
        im.append(i)
    if not om:
        raise ValidationError("all sampled frames were degenerate")
    return SLReport(float(np.max(om)), float(np.mean(om)),
                    float(np.max(im)), float(np.mean(im)),
                    NORMALIZATION_NOTE, len(om), skipped)


# ---------------------------------------------------------------------------
# meshes
# ---------------------------------------------------------------------------

@dataclass
class Mesh:
    """Sampled vertices of a swept submanifold with quad faces for viewing.

    params holds the generating parameters per vertex (named by
    param_names, sheet id last); the attached family, when present, lets
    residuals be recomputed analytically at every vertex.
    """

    m: int
    vertices: np.ndarray = field(repr=False)
    faces: np.ndarray = field(repr=False)
    params: np.ndarray = field(repr=False)
    param_names: tuple
    res_omega: np.ndarray = None
    res_imomega: np.ndarray = None
    recipe: dict = field(default_factory=dict)
    family: object = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        V = np.asarray(self.vertices, dtype=float)
        if V.ndim != 2 or V.shape[1] != 2 * self.m:
            raise ValidationError("vertices must be (N, 2m)")
        if not np.all(np.isfinite(V)):
            raise ValidationError("non-finite vertex")
        F = np.asarray(self.faces, dtype=int)
        if F.size and (F.min() < 0 or F.max() >= len(V)):
            raise ValidationError("face index out of range")
        self.vertices = V
        self.faces = F.reshape(-1, 4) if F.size else np.zeros((0, 4), int)
        self.params = np.asarray(self.params, dtype=float)


def _grid_faces(nt: int, nq: int, wrap_q: bool, offset: int) -> list:
    faces = []
    qmax = nq if wrap_q else nq - 1
    for i in range(nt - 1):
        for j in range(qmax):
            j2 = (j + 1) % nq
            faces.append([offset + i * nq + j, offset + (i + 1) * nq + j,
                          offset + (i + 1) * nq + j2, offset + i * nq + j2])
    return faces


def _profile_circle(m, a, c, radius, n_sheets):
    """Closed profiles on the quadric: per sheet an (x of phi) function.

    An x-block circle needs c + |y_fix|^2 > 0, a y-block circle needs
    |x_fix|^2 - c > 0; the feasible one is chosen, falling back to open
    hyperbola branches for signature (1, 1).  For the c = 0 cone the sheet
    radii come in doubling pairs to support the ray-scaling checks.
    """
    sheets = []

    def x_circle(yfix):
        rsq = c + yfix @ yfix
        if rsq <= 0:
            return None
        r = np.sqrt(rsq)

        def prof(phi):
            x = np.zeros(phi.shape + (m,))
            x[..., 0] = r * np.cos(phi)
            x[..., 1] = r * np.sin(phi)
            x[..., a:] = yfix
            return x
        return prof, {"y_fixed": yfix.tolist()}, True

    def y_circle(xfix):
        rsq = xfix @ xfix - c
        if rsq <= 0:
            return None
        r = np.sqrt(rsq)

        def prof(phi):
            x = np.zeros(phi.shape + (m,))
            x[..., :a] = xfix
            x[..., a] = r * np.cos(phi)
            x[..., a + 1] = r * np.sin(phi)
            return x
        return prof, {"x_fixed": xfix.tolist()}, True

    if a >= 2 and c > 0:
        count = 1 if m == a else n_sheets
        for k in range(count):
            yfix = np.zeros(m - a)
            if m > a:
                yfix[0] = 0.7 * k
            sheet = x_circle(yfix)
            if sheet:
                sheets.append(sheet)
    elif m - a >= 2 and c != 0.0:
        for k in range(n_sheets):
            xfix = np.zeros(a)
            xfix[0] = np.sqrt(max(c, 0.0)) + 0.8 + 0.6 * k
            sheet = y_circle(xfix)
            if sheet:
                sheets.append(sheet)
    elif a >= 2 and c < 0:
        for k in range(n_sheets):
            yfix = np.zeros(m - a)
            yfix[0] = np.sqrt(-c) + 0.8 + 0.6 * k
            sheet = x_circle(yfix)
            if sheet:
                sheets.append(sheet)
    elif c == 0.0 and max(a, m - a) >= 2:
        # cone: radial doubling pairs 1, 2 along the rays
        for rho in (1.0, 2.0)[:max(n_sheets, 1)]:
            if a >= 2:
                yfix = np.full(m - a, rho / np.sqrt(max(m - a, 1)))
                sheet = x_circle(yfix)
            else:
                xfix = np.full(a, rho)
                sheet = y_circle(xfix)
            if sheet:
                sheets.append(sheet)
    else:
        # signature (1,1): open hyperbola branches over the profile parameter
        for sgn in (1.0, -1.0):
            def make(sg):
                def prof(q):
                    x = np.zeros(q.shape + (m,))
                    x[..., 0] = sg * np.sqrt(c + q ** 2) if c >= 0 else q
                    x[..., 1] = q if c >= 0 else sg * np.sqrt(q ** 2 - c)
                    return x
                return prof
            sheets.append((make(sgn), {"branch": sgn}, False))
    if not sheets:
        raise ValidationError("no admissible mesh sheet for these parameters")
    return sheets


def mesh_centred(params: centred.CentredParams, c: float, t_span,
                 resolution=(33, 64), radius: float = 2.0, w0=None,
                 n_sheets: int = 2) -> Mesh:
    """Mesh of the centred family over a (t, profile angle) grid.

    t_span is (0, t_end); sheets fix the remaining quadric coordinates.
    For c = 0 the sheet radii come in doubling pairs so ray-scaling of the
    cone can be checked vertexwise.
    """
    t0, t1 = float(t_span[0]), float(t_span[1])
    if t0 != 0.0:
        raise ValidationError("t_span must start at 0")
    nt, nq = resolution
    case = centred.classify_case(params)
    if w0 is not None:
        w_source = centred.integrate_w(np.asarray(w0, complex), params.a, t1)
    elif case == "c":
        w_source = CaseCWPath(params)
    else:
        w_source = centred.integrate_w(centred.w_initial(params), params.a, t1)
    t_grid = np.linspace(t0, t1, nt)
    W = w_source.w(t_grid)

    sheets = _profile_circle(params.m, params.a, c, radius, n_sheets)
    verts, prms, faces = [], [], []
    offset = 0
    for sheet_id, (prof, meta, wrap) in enumerate(sheets):
        if wrap:
            qs = np.linspace(0.0, 2 * np.pi, nq, endpoint=False)
        else:
            qs = np.linspace(-radius, radius, nq)
        X = prof(qs)  # (nq, m)
        faces += _grid_faces(nt, nq, wrap, offset)
        offset += nt * nq
        for i in range(nt):
            Z = W[i][None, :] * X
            verts.append(complex_to_real(Z))
            blk = np.column_stack([np.full(nq, t_grid[i]), qs,
                                   np.full(nq, float(sheet_id))])
            prms.append(blk)
    start = np.asarray(w_source.w(0.0), complex)
    mesh = Mesh(params.m, np.concatenate(verts), np.asarray(faces, int),
                np.concatenate(prms), ("t", "q", "sheet"),
                recipe={"kind": "centred", "m": params.m, "a": params.a,
                        "alphas": list(params.alphas), "A": params.A,
                        "c": c, "t_end": t1, "resolution": [nt, nq],
                        "radius": radius, "n_sheets": len(sheets),
                        "w0_re": start.real.tolist(),
                        "w0_im": start.imag.tolist()})
    mesh.family = CentredFamily(params, c=c, t_span=t1, w_source=w_source,
                                radius=radius)
    mesh._sheets = [meta for _, meta, _ in sheets]
    mesh._frame_fn = _centred_mesh_frame(params, w_source, sheets)
    return mesh


def _centred_mesh_frame(params, w_source, sheets):
    """Analytic frame at a mesh vertex parameter row (t, q, sheet).

    The transverse quadric directions complete the (t, profile) pair to a
    full frame: moving a fixed coordinate requires a radial compensation of
    the circle so the point stays on the level set.
    """
    h = 1e-6

    def frame(prow):
        t, q, sheet = float(prow[0]), float(prow[1]), int(prow[2])
        prof, meta, _ = sheets[sheet]
        w = w_source.w(t)
        dw = centred.rhs_w(w, params.a)
        x = prof(np.asarray(q))
        dx = (prof(np.asarray(q + h)) - prof(np.asarray(q - h))) / (2 * h)
        rows = [dw * x, w * dx]
        m, a = params.m, params.a
        extra = []
        if "y_fixed" in meta:      # circle in the x block, y coords fixed
            xy = x[:a]
            r2 = xy @ xy
            for k in range(m - a):
                ee = np.zeros(m)
                ee[:a] = (x[a + k] / r2) * xy
                ee[a + k] = 1.0
                extra.append(w * ee)
            for k in range(2, a):
                ee = np.zeros(m)
                ee[k] = 1.0  # x-sphere direction vanishing on the circle
                extra.append(w * ee)
        elif "x_fixed" in meta:    # circle in the y block, x coords fixed
            yv = x[a:]
            r2 = yv @ yv
            for k in range(a):
                ee = np.zeros(m)
                ee[k] = 1.0
                ee[a:] = (x[k] / r2) * yv
                extra.append(w * ee)
            for k in range(2, m - a):
                ee = np.zeros(m)
                ee[a + k] = 1.0
                extra.append(w * ee)
        return np.asarray(rows + extra, dtype=complex)

    return frame


def mesh_affine(params: affine_mod.AffineParams, t_span, resolution=(33, 64),
                radius: float = 1.5, profile_radii=(0.75, 1.5), w0=None,
                beta0=None) -> Mesh:
    """Mesh of the translated family over a (t, profile angle) grid; the
    first two free coordinates run around circles of the given radii, the
    rest stay at a fixed offset."""
    t0, t1 = float(t_span[0]), float(t_span[1])
    if t0 != 0.0:
        raise ValidationError("t_span must start at 0")
    nt, nq = resolution
    if w0 is None:
        w0, beta0 = affine_mod.affine_initial(params)
    elif beta0 is None:
        beta0 = 0.0
    path = affine_mod.integrate_affine(w0, beta0, params.a, t1)
    if path.escaped and path.t_span[1] < t1:
        t1 = path.t_span[1] * 0.98
    t_grid = np.linspace(t0, t1, nt)
    m, a = params.m, params.a
    signs = np.ones(m - 1)
    signs[a:] = -1.0

    verts, prms, faces = [], [], []
    count = 0
    for sheet_id, r in enumerate(profile_radii):
        qs = np.linspace(0.0, 2 * np.pi, nq, endpoint=False)
        X = np.zeros((nq, m - 1))
        X[:, 0] = r * np.cos(qs)
        X[:, min(1, m - 2)] = r * np.sin(qs) if m >= 3 else X[:, 0]
        if m > 3:
            X[:, 2:] = 0.3
        xm = -0.5 * (X ** 2) @ signs
        faces += _grid_faces(nt, nq, True, count)
        for t in t_grid:
            w = path.w(t)
            b = path.beta(t)
            Z = np.empty((nq, m), dtype=complex)
            Z[:, :-1] = X * w[None, :]
            Z[:, -1] = xm + b
            verts.append(complex_to_real(Z))
            prms.append(np.column_stack([np.full(nq, t), qs,
                                         np.full(nq, float(sheet_id))]))
            count += nq
    start = np.asarray(path.w(0.0), complex)
    b_start = complex(path.beta(0.0))
    mesh = Mesh(m, np.concatenate(verts), np.asarray(faces, int),
                np.concatenate(prms), ("t", "q", "sheet"),
                recipe={"kind": "affine", "m": m, "a": a,
                        "alphas": list(params.alphas), "A": params.A,
                        "t_end": t1, "profile_radii": list(profile_radii),
                        "resolution": [nt, nq],
                        "w0_re": start.real.tolist(),
                        "w0_im": start.imag.tolist(),
                        "beta0": [b_start.real, b_start.imag]})
    fam = AffineFamily.__new__(AffineFamily)
    fam.params = params
    fam.m, fam.a = m, a
    fam.path = path
    fam.t_span = t1
    fam.radius = radius
    fam.n_continuous = m
    mesh.family = fam

    def frame_fn(prow):
        t, q, sheet = float(prow[0]), float(prow[1]), int(prow[2])
        r = profile_radii[sheet]
        xs = np.full(m - 1, 0.3)
        xs[0] = r * np.cos(q)
        xs[min(1, m - 2)] = r * np.sin(q)
        return fam.frame_param(np.concatenate([[t], xs]))

    mesh._frame_fn = frame_fn
    mesh._profile_radii = profile_radii
    return mesh


def mesh_link(alphas, A: float, resolution=(64, 64), t_span=None) -> Mesh:
    """Mesh of the cone link (the unit-sphere cross-section surface)."""
    ns, nt = resolution
    grid = threefold.conformal_map(alphas, A, ns=ns, nt=nt, t_grid=(
        None if t_span is None else np.linspace(0.0, t_span, nt)))
    ns_eff, nt_eff = grid.phi.shape[:2]
    verts = complex_to_real(grid.phi.reshape(-1, 3))
    faces = []
    for i in range(ns_eff - 1):
        for j in range(nt_eff - 1):
            faces.append([i * nt_eff + j, (i + 1) * nt_eff + j,
                          (i + 1) * nt_eff + j + 1, i * nt_eff + j + 1])
    prms = np.column_stack([
        np.repeat(grid.s_grid, nt_eff), np.tile(grid.t_grid, ns_eff),
        np.zeros(ns_eff * nt_eff)])
    mesh = Mesh(3, verts, np.asarray(faces, int), prms, ("s", "t", "sheet"),
                recipe={"kind": "link", "alphas": list(alphas), "A": A})
    fam = ConeOverLinkFamily(tuple(alphas), A,
                             t_span=float(grid.t_grid[-1]) or None)
    mesh.family = fam

    def frame_fn(prow):
        return fam.frame_param((float(prow[1]), float(prow[0]), 1.0))

    mesh._frame_fn = frame_fn
    return mesh


def mesh_residual_report(mesh: Mesh) -> SLReport:
    """Residual report for a mesh via its attached analytic frames."""
    mesh2 = attach_residuals(mesh)
    skipped = int(np.sum(~np.isfinite(mesh2.res_omega)))
    return SLReport(float(np.nanmax(mesh2.res_omega)),
                    float(np.nanmean(mesh2.res_omega)),
                    float(np.nanmax(mesh2.res_imomega)),
                    float(np.nanmean(mesh2.res_imomega)),
                    NORMALIZATION_NOTE, len(mesh2.vertices) - skipped,
                    skipped)


def attach_residuals(mesh: Mesh, jobs: int = 1) -> Mesh:
    """Per-vertex residuals from the attached frame evaluator or family.

    Evaluation parallelizes over vertex chunks when jobs > 1; assembly is
    by vertex index, so the result is identical for any worker count.
    """
    frame_fn = getattr(mesh, "_frame_fn", None)
    if frame_fn is None and mesh.family is not None:
        fam = mesh.family

        def frame_fn(prow):
            return fam.frame_param(prow[:fam.n_continuous])

    if frame_fn is None:
        raise ValidationError(
            "mesh carries no parametrization; rebuild it from its recipe")
    n = len(mesh.vertices)
    ro = np.empty(n)
    ri = np.empty(n)

    def run_chunk(idx):
        out = []
        for i in idx:
            o, im, bad = _frame_residuals(frame_fn(mesh.params[i]))
            out.append((np.nan, np.nan) if bad else (o, im))
        return out

    chunks = np.array_split(np.arange(n), max(1, jobs))
    if jobs > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(run_chunk, chunks))
    else:
        results = [run_chunk(c) for c in chunks]
    for idx, res in zip(chunks, results):
        for i, (o, im) in zip(idx, res):
            ro[i], ri[i] = o, im
    out = replace(mesh, res_omega=ro, res_imomega=ri)
    out.family = mesh.family
    if hasattr(mesh, "_frame_fn"):
        out._frame_fn = mesh._frame_fn
    return out


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------

def _fmt(x: float) -> str:
    return f"{x:.17g}"


def _project_vertices(mesh: Mesh, projection):
    V = mesh.vertices
    if V.shape[1] == 3:
        return V
    if projection is None:
        if mesh.m > 3:
            raise ValidationError(
                "m > 3 meshes need an explicit projection (triple or 'pca')")
        projection = "pca"
    if projection == "pca":
        C = V - V.mean(axis=0)
        _, _, vt = np.linalg.svd(C, full_matrices=False)
        return C @ vt[:3].T
    idx = tuple(projection)
    if len(idx) != 3:
        raise ValidationError("projection must be 'pca' or three indices")
    return V[:, list(idx)]


def export(mesh: Mesh, fmt: str, path, projection=None) -> None:
    """Write a mesh as obj/ply/csv/json (ascii, 17 significant digits, LF).

    obj and ply are 3-D formats: higher-dimensional meshes must pick a
    coordinate triple or PCA projection.  json round-trips exactly.
    """
    if fmt == "json":
        doc = {
            "schema": "slmesh-1",
            "m": mesh.m,
            "param_names": list(mesh.param_names),
            "vertices": [[float(v) for v in row] for row in mesh.vertices],
            "faces": [[int(i) for i in f] for f in mesh.faces],
            "params": [[float(v) for v in row] for row in mesh.params],
            "recipe": mesh.recipe,
        }
        for key in ("res_omega", "res_imomega"):
            arr = getattr(mesh, key)
            doc[key] = None if arr is None else [float(v) for v in arr]
        with open(path, "w", newline="\n") as fh:
            json.dump(doc, fh, indent=1, sort_keys=True)
            fh.write("\n")
        return

    if fmt == "csv":
        extra = [n for n in mesh.param_names if n != "t"]
        m = mesh.m
        cols = (["t"] + [f"param{i + 1}" for i in range(len(extra))]
                + [c for j in range(1, m + 1) for c in (f"x{j}", f"y{j}")]
                + ["res_omega", "res_imomega"])
        lines = [",".join(cols)]
        ro = mesh.res_omega if mesh.res_omega is not None else np.full(
            len(mesh.vertices), np.nan)
        ri = mesh.res_imomega if mesh.res_imomega is not None else np.full(
            len(mesh.vertices), np.nan)
        t_idx = mesh.param_names.index("t") if "t" in mesh.param_names else 0
        for i, v in enumerate(mesh.vertices):
            prow = mesh.params[i]
            rest = [prow[j] for j in range(len(prow)) if j != t_idx]
            vals = [prow[t_idx], *rest, *v, ro[i], ri[i]]
            lines.append(",".join(_fmt(float(x)) for x in vals))
        with open(path, "w", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")
        return

    if fmt == "obj":
        P = _project_vertices(mesh, projection)
        lines = [f"v {_fmt(p[0])} {_fmt(p[1])} {_fmt(p[2])}" for p in P]
        lines += [f"f {f[0] + 1} {f[1] + 1} {f[2] + 1} {f[3] + 1}"
                  for f in mesh.faces]
        with open(path, "w", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")
        return

    if fmt == "ply":
        P = _project_vertices(mesh, projection)
        header = [
            "ply", "format ascii 1.0",
            f"element vertex {len(P)}",
            "property double x", "property double y", "property double z",
            f"element face {len(mesh.faces)}",
            "property list uchar int vertex_indices", "end_header"]
        lines = header + [" ".join(_fmt(c) for c in p) for p in P]
        lines += ["4 " + " ".join(str(int(i)) for i in f)
                  for f in mesh.faces]
        with open(path, "w", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")
        return

    raise ValidationError(f"unknown mesh format {fmt!r}")


def import_json(path) -> Mesh:
    """Read a mesh written by export(..., 'json')."""
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("schema") != "slmesh-1":
        raise ValidationError("not an slmesh-1 document")
    mesh = Mesh(int(doc["m"]), np.asarray(doc["vertices"], float),
                np.asarray(doc["faces"], int), np.asarray(doc["params"], float),
                tuple(doc["param_names"]), recipe=doc.get("recipe", {}))
    for key in ("res_omega", "res_imomega"):
        if doc.get(key) is not None:
            setattr(mesh, key, np.asarray(doc[key], float))
    return mesh


def rebuild_family(mesh: Mesh):
    """Reconstruct the generating family of an imported mesh from its recipe
    (including the stored initial state) so residuals can be verified
    analytically at the stored vertex parameters."""
    r = mesh.recipe
    kind = r.get("kind")
    if kind == "centred":
        params = centred.CentredParams(r["m"], r["a"], tuple(r["alphas"]),
                                       r["A"], c=r["c"])
        w0 = (np.asarray(r["w0_re"]) + 1j * np.asarray(r["w0_im"])
              if "w0_re" in r else None)
        rebuilt = mesh_centred(params, r["c"], (0.0, r["t_end"]),
                               resolution=(2, 4), w0=w0,
                               radius=r.get("radius", 2.0),
                               n_sheets=r.get("n_sheets", 2))
        mesh.family = rebuilt.family
        mesh._frame_fn = rebuilt._frame_fn
        return mesh.family
    if kind == "affine":
        params = affine_mod.AffineParams(r["m"], r["a"], tuple(r["alphas"]),
                                         r["A"])
        w0 = (np.asarray(r["w0_re"]) + 1j * np.asarray(r["w0_im"])
              if "w0_re" in r else None)
        beta0 = complex(*r["beta0"]) if "beta0" in r else None
        rebuilt = mesh_affine(params, (0.0, r["t_end"]),
                              resolution=(2, 4),
                              profile_radii=tuple(r["profile_radii"]),
                              w0=w0, beta0=beta0)
        mesh.family = rebuilt.family
        mesh._frame_fn = rebuilt._frame_fn
        return mesh.family
    if kind == "link":
        mesh.family = ConeOverLinkFamily(tuple(r["alphas"]), r["A"])

        def frame_fn(prow):
            s, t = float(prow[0]), float(prow[1])
            return mesh.family.frame_param((t, s, 1.0))

        mesh._frame_fn = frame_fn
        return mesh.family
    raise ValidationError("mesh recipe does not name a rebuildable family")
