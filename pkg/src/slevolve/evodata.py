"""Construction and validation of linear/affine evolution data (P, chi).

A set of evolution data is an (m-1)-submanifold P of R^n together with a
linear (or affine) map chi: R^n -> Lambda^{m-1} R^n whose value at every
nonsingular p in P is a nonzero element of Lambda^{m-1} T_p P.  Quadric
level sets {x: x'Sx + b'x = c} in R^m supply the main family, with

    chi(x) = dQ(x) . (e_1 ^ ... ^ e_m)
           = sum_j (-1)^(j-1) dQ/dx_j  e_1 ^ ... e_j-hat ... ^ e_m.

Every set of evolution data carries a symmetry Lie algebra spanned by the
contractions L(alpha) = chi . alpha over (m-2)-forms alpha; the algebra
closes under commutators onto span(Im L) and acts locally transitively on P.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm, null_space

from .errors import ConstructionError, ValidationError
from .multilinear import Multivector, k_subsets

_SINGULAR_TOL = 1e-8
_RANK_TOL = 1e-10


@dataclass(frozen=True)
class QuadricSpec:
    """Quadratic polynomial Q(x) = x'Sx + b'x + c0 over R^n."""

    n: int
    S: np.ndarray = field(repr=False)
    b: np.ndarray = field(repr=False)
    c0: float = 0.0

    def __post_init__(self):
        S = np.asarray(self.S, dtype=float)
        b = np.asarray(self.b, dtype=float)
        if S.shape != (self.n, self.n):
            raise ValidationError("S must be n x n")
        if not np.allclose(S, S.T, atol=1e-12 * max(1.0, np.abs(S).max())):
            raise ValidationError("S must be symmetric")
        if b.shape != (self.n,):
            raise ValidationError("b must be an n-vector")
        if np.all(S == 0) and np.all(b == 0):
            raise ValidationError("S and b cannot both vanish")
        S = 0.5 * (S + S.T)
        S.flags.writeable = False
        b.flags.writeable = False
        object.__setattr__(self, "S", S)
        object.__setattr__(self, "b", b)

    def value(self, x: np.ndarray):
        x = np.asarray(x, dtype=float)
        return np.einsum("...i,ij,...j->...", x, self.S, x) + x @ self.b + self.c0

    def gradient(self, x: np.ndarray):
        x = np.asarray(x, dtype=float)
        return 2.0 * x @ self.S + self.b


class EvolutionData:
    """A pair (P, chi) with samplers and normal data for validation.

    chi(x) = chi_const + sum_q x_q * chi_linear[q]; the sampler produces
    points of P (seeded, reproducible) and ``normals`` returns the covectors
    cutting out T_p P, from which orthonormal tangent bases are built.
    """

    def __init__(self, n, m, kind, chi_linear, chi_const, sampler, normals,
                 label="", recipe=None):
        if not (2 <= m <= n):
            raise ValidationError("need 2 <= m <= n")
        if kind not in ("linear", "affine"):
            raise ValidationError("kind must be 'linear' or 'affine'")
        if len(chi_linear) != n:
            raise ValidationError("chi_linear needs one column per coordinate")
        self.n = n
        self.m = m
        self.kind = kind
        self.chi_linear = list(chi_linear)
        self.chi_const = chi_const
        self.sampler = sampler
        self.normals = normals
        self.label = label
        self.recipe = dict(recipe or {})
        self._chi_matrix = None

    def chi_at(self, x) -> Multivector:
        x = np.asarray(x, dtype=float)
        out = self.chi_const
        for q in range(self.n):
            if x[q] != 0.0:
                out = out + x[q] * self.chi_linear[q]
        return out

    def chi_matrix(self) -> np.ndarray:
        """Coefficients of chi as an array: (number of (m-1)-subsets, n)."""
        if self._chi_matrix is None:
            self._chi_matrix = np.column_stack(
                [mv.coeffs for mv in self.chi_linear])
        return self._chi_matrix

    def sample(self, count: int, seed: int = 0) -> np.ndarray:
        return self.sampler(count, seed)

    def tangent_basis(self, p) -> np.ndarray:
        """Orthonormal basis of T_p P as rows, from the normal covectors."""
        N = np.atleast_2d(self.normals(p))
        basis = null_space(N)
        if basis.shape[1] != self.m - 1:
            raise ValidationError(
                f"tangent space at sample has dimension {basis.shape[1]}, "
                f"expected {self.m - 1}")
        return basis.T

    def tangency_residual(self, p) -> float:
        """Size of the component of chi(p) transverse to T_p P: the interior
        product with each defining normal must vanish for a multivector of
        Lambda^{m-1} T_p P."""
        chi = self.chi_at(p)
        nchi = chi.norm()
        if nchi == 0.0:
            return np.inf
        worst = 0.0
        for nu in np.atleast_2d(self.normals(p)):
            scale = np.linalg.norm(nu)
            resid = chi.interior(Multivector.from_vector(nu)).norm()
            worst = max(worst, resid / (scale * nchi))
        return worst

    def validate(self, n_samples: int = 200, seed: int = 0) -> dict:
        """Numerical check of the defining conditions on sampled points."""
        pts = self.sample(n_samples, seed)
        tang = [self.tangency_residual(p) for p in pts]
        chinorm = [self.chi_at(p).norm() for p in pts]
        span_pts = self.sample(2 * self.n, seed + 1)
        if self.kind == "affine":
            span_pts = np.column_stack([span_pts, np.ones(len(span_pts))])
        rank = np.linalg.matrix_rank(span_pts, tol=_RANK_TOL * max(
            1.0, np.abs(span_pts).max()) * max(span_pts.shape))
        full = self.n + (1 if self.kind == "affine" else 0)
        return {
            "max_tangency_residual": float(np.max(tang)),
            "min_chi_norm": float(np.min(chinorm)),
            "spans_ambient": bool(rank == full),
            "span_rank": int(rank),
            "samples": len(pts),
        }

    def to_json_dict(self) -> dict:
        d = {
            "schema": "sl-evodata-1",
            "n": self.n,
            "m": self.m,
            "kind": self.kind,
            "label": self.label,
            "chi_linear": [mv.coeffs.tolist() for mv in self.chi_linear],
            "chi_const": self.chi_const.coeffs.tolist(),
        }
        d.update(self.recipe)
        return d


# ---------------------------------------------------------------------------
# quadric evolution data
# ---------------------------------------------------------------------------

def _quadric_sampler(spec: QuadricSpec, c: float):
    """Sample the level set Q = c by intersecting random lines with it,
    rejecting points where |dQ| is below the nonsingularity threshold."""
    n = spec.n
    scale = max(1.0, float(np.abs(spec.S).max()), float(np.abs(spec.b).max()))

    def sampler(count: int, seed: int = 0) -> np.ndarray:
        rng = np.random.default_rng(seed)
        pts = []
        attempts = 0
        while len(pts) < count and attempts < 250 * count + 500:
            attempts += 1
            p0 = rng.normal(size=n) * rng.uniform(0.3, 3.0)
            d = rng.normal(size=n)
            a2 = d @ spec.S @ d
            a1 = 2.0 * p0 @ spec.S @ d + spec.b @ d
            a0 = spec.value(p0) - c
            roots = np.roots([a2, a1, a0]) if abs(a2) > 1e-14 else (
                [-a0 / a1] if abs(a1) > 1e-14 else [])
            for s in roots:
                if abs(np.imag(s)) > 1e-12:
                    continue
                p = p0 + float(np.real(s)) * d
                if np.linalg.norm(spec.gradient(p)) >= _SINGULAR_TOL * scale:
                    pts.append(p)
                if len(pts) >= count:
                    break
        if len(pts) < count:
            raise ConstructionError(
                "could not sample the quadric level set (empty or degenerate)")
        return np.asarray(pts)

    return sampler


def quadric_data(spec: QuadricSpec, c: float) -> EvolutionData:
    """Evolution data of a nondegenerate quadric level set in R^n, n = m.

    chi(x) = dQ(x) . (e_1 ^ ... ^ e_n); linear kind exactly when Q is
    homogeneous (b = 0).
    """
    n = spec.n
    top = Multivector.basis(n, range(n))
    chi_linear = [top.interior(Multivector.from_vector(2.0 * spec.S[:, q]))
                  for q in range(n)]
    chi_const = top.interior(Multivector.from_vector(spec.b))
    kind = "linear" if np.all(spec.b == 0.0) else "affine"
    c_eff = c - spec.c0
    sampler = _quadric_sampler(spec, c)

    def normals(p):
        return spec.gradient(p)[None, :]

    data = EvolutionData(
        n, n, kind, chi_linear, chi_const, sampler, normals,
        label=f"quadric(n={n}, c={c})",
        recipe={"recipe": "quadric", "S": spec.S.tolist(),
                "b": spec.b.tolist(), "c": float(c_eff)})
    # construction fails loudly on an empty or degenerate level set
    sampler(8, seed=0)
    return data


def example_quadric(m: int, a: int, c: float = 1.0) -> EvolutionData:
    """The signature-(a, m-a) centred quadric sum x_j^2 - sum x_j^2 = c
    (c = 0 gives the cone with its singular vertex excluded by sampling)."""
    if not (1 <= a <= m):
        raise ValidationError("need 1 <= a <= m")
    S = np.diag([1.0] * a + [-1.0] * (m - a))
    return quadric_data(QuadricSpec(m, S, np.zeros(m)), c)


def example_paraboloid(m: int, a: int) -> EvolutionData:
    """The non-centred quadric sum_{j<=a} x_j^2 - sum_{a<j<m} x_j^2 + 2 x_m = 0."""
    if not (1 <= a <= m - 1):
        raise ValidationError("need 1 <= a <= m-1")
    diag = [1.0] * a + [-1.0] * (m - 1 - a) + [0.0]
    S = np.diag(diag)
    b = np.zeros(m)
    b[m - 1] = 2.0
    return quadric_data(QuadricSpec(m, S, b), 0.0)


# ---------------------------------------------------------------------------
# the two trivial constructions
# ---------------------------------------------------------------------------

def extend_product(data: EvolutionData, k: int) -> EvolutionData:
    """Replace P by P x R^k and wedge chi with the new coordinate directions,
    raising m by k."""
    if k < 0:
        raise ValidationError("k must be >= 0")
    if k == 0:
        return data
    n, m = data.n, data.m
    n2, m2 = n + k, m + k
    extra = Multivector.basis(n2, range(n, n2))
    chi_linear = [data.chi_linear[q].embed(n2).wedge(extra) for q in range(n)]
    chi_linear += [Multivector.zero(n2, m2 - 1) for _ in range(k)]
    chi_const = data.chi_const.embed(n2).wedge(extra)

    def sampler(count, seed=0):
        rng = np.random.default_rng(seed + 7919)
        base = data.sample(count, seed)
        tail = rng.normal(scale=1.5, size=(count, k))
        return np.column_stack([base, tail])

    def normals(p):
        base = np.atleast_2d(data.normals(np.asarray(p)[:n]))
        return np.column_stack([base, np.zeros((base.shape[0], k))])

    return EvolutionData(
        n2, m2, data.kind, chi_linear, chi_const, sampler, normals,
        label=f"{data.label} x R^{k}",
        recipe={"recipe": "product", "base": data.to_json_dict(), "k": k})


def curve_data(M: np.ndarray, v: np.ndarray, m: int) -> EvolutionData:
    """Integral-curve data in R^m: P is (integral curve of the planar field
    M x + v) x R^{m-2}, and chi wedges the field with the extra directions."""
    M = np.asarray(M, dtype=float)
    v = np.asarray(v, dtype=float)
    if M.shape != (2, 2) or v.shape != (2,):
        raise ValidationError("M must be 2x2 and v a 2-vector")
    if np.all(M == 0) and np.all(v == 0):
        raise ConstructionError("zero vector field")
    if m < 2:
        raise ValidationError("need m >= 2")
    n = m
    rest = tuple(range(2, m))
    W1 = Multivector.basis(n, (0,) + rest)
    W2 = Multivector.basis(n, (1,) + rest)
    chi_linear = [M[0, 0] * W1 + M[1, 0] * W2, M[0, 1] * W1 + M[1, 1] * W2]
    chi_linear += [Multivector.zero(n, m - 1) for _ in range(m - 2)]
    chi_const = v[0] * W1 + v[1] * W2
    kind = "linear" if np.all(v == 0.0) else "affine"

    # base point with a nonzero field value
    p0 = None
    for cand in ((1.0, 0.0), (0.0, 1.0), (1.0, 1.0), (0.3, -1.2)):
        if np.linalg.norm(M @ cand + v) > 1e-10:
            p0 = np.asarray(cand)
            break
    if p0 is None:
        raise ConstructionError("vector field vanishes at all probe points")

    # exact affine flow via the augmented matrix exponential
    aug = np.zeros((3, 3))
    aug[:2, :2] = M
    aug[:2, 2] = v
    radius = max(np.abs(np.linalg.eigvals(M)).max(), 0.2)
    t_max = min(3.0, 4.0 / radius)

    def sampler(count, seed=0):
        rng = np.random.default_rng(seed + 104729)
        ts = rng.uniform(-t_max, t_max, size=count)
        pts = np.empty((count, m))
        for i, t in enumerate(ts):
            flow = expm(t * aug) @ np.array([p0[0], p0[1], 1.0])
            pts[i, :2] = flow[:2]
        pts[:, 2:] = rng.normal(scale=1.5, size=(count, m - 2))
        return pts

    def normals(p):
        V = M @ np.asarray(p)[:2] + v
        nu = np.zeros(m)
        nu[0], nu[1] = -V[1], V[0]
        return nu[None, :]

    return EvolutionData(
        n, m, kind, chi_linear, chi_const, sampler, normals,
        label=f"curve x R^{m - 2}",
        recipe={"recipe": "curve", "M": M.tolist(), "v": v.tolist()})


def evolution_data_from_dict(doc: dict) -> EvolutionData:
    """Rebuild evolution data from its versioned JSON document.

    Quadric and curve recipes reconstruct their samplers; other documents
    are rejected (a sampler cannot be recovered from coefficients alone).
    """
    if doc.get("schema") != "sl-evodata-1":
        raise ValidationError("not an sl-evodata-1 document")
    recipe = doc.get("recipe")
    if recipe == "quadric":
        S = np.asarray(doc["S"], dtype=float)
        b = np.asarray(doc["b"], dtype=float)
        return quadric_data(QuadricSpec(S.shape[0], S, b), float(doc["c"]))
    if recipe == "curve":
        return curve_data(np.asarray(doc["M"], float),
                          np.asarray(doc["v"], float), int(doc["m"]))
    if recipe == "product":
        return extend_product(evolution_data_from_dict(doc["base"]),
                              int(doc["k"]))
    raise ValidationError(f"cannot rebuild evolution data from {recipe!r}")


# ---------------------------------------------------------------------------
# symmetry Lie algebra
# ---------------------------------------------------------------------------

@dataclass
class SymmetryAlgebra:
    """Lie algebra generated by the contractions L(alpha) = chi . alpha.

    ``basis`` is an orthonormal (Frobenius) basis of the algebra; the image
    generators are the raw L(alpha) over the standard basis of
    Lambda^{m-2}(R^n)*.  ker_dim records dim ker L for the case-split
    diagnostics; grew_in_closure is False when span(Im L) was already closed
    (surjectivity of L onto the algebra).
    """

    n: int
    basis: list
    image_generators: list
    ker_dim: int
    grew_in_closure: bool

    @property
    def dim(self) -> int:
        return len(self.basis)

    def bracket_residual(self) -> float:
        """Max component of any commutator of basis elements outside the span."""
        if not self.basis:
            return 0.0
        flat = np.array([B.ravel() for B in self.basis])
        proj = flat.T @ flat  # orthonormal rows: projector onto the span
        worst = 0.0
        for X in self.basis:
            for Y in self.basis:
                br = (X @ Y - Y @ X).ravel()
                out = br - proj @ br
                scale = np.linalg.norm(X) * np.linalg.norm(Y)
                worst = max(worst, np.linalg.norm(out) / max(scale, 1e-30))
        return worst


def _orthonormal_rows(mats, tol=_RANK_TOL):
    flat = np.array([np.asarray(M, dtype=float).ravel() for M in mats])
    u, s, vt = np.linalg.svd(flat, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros((0, flat.shape[1])), 0
    rank = int(np.sum(s > tol * s[0]))
    return vt[:rank], rank


def symmetry_algebra(data: EvolutionData, tol: float = _RANK_TOL) -> SymmetryAlgebra:
    """Generate the symmetry algebra of a set of evolution data.

    Affine data is first linearized over R^{n+1} (P embedded at height 1).
    Iterates commutators until the span stabilizes and reports whether any
    iteration enlarged it (it should not: the image of L is already an ideal).
    """
    if data.kind == "affine":
        n2 = data.n + 1
        cols = [mv.embed(n2) for mv in data.chi_linear]
        cols.append(data.chi_const.embed(n2))
        n = n2
    else:
        cols = list(data.chi_linear)
        n = data.n
    m = data.m

    generators = []
    for J in k_subsets(n, m - 2):
        alpha = Multivector.basis(n, J)
        L = np.column_stack([col.interior(alpha).coeffs for col in cols])
        generators.append(L)

    basis_flat, rank0 = _orthonormal_rows(generators, tol)
    ker_dim = len(generators) - rank0

    grew = False
    current = basis_flat
    for _ in range(n * n + 1):
        mats = [row.reshape(n, n) for row in current]
        brackets = [X @ Y - Y @ X for i, X in enumerate(mats)
                    for Y in mats[i + 1:]]
        stacked = list(current) + [b.ravel() for b in brackets]
        new_flat, new_rank = _orthonormal_rows(stacked, tol)
        if new_rank == current.shape[0]:
            break
        grew = True
        current = new_flat
        if new_rank > n * n:
            raise RuntimeError("Lie closure exceeded gl(n) dimension")
    basis = [row.reshape(n, n) for row in current]
    return SymmetryAlgebra(n, basis, generators, ker_dim, grew)


def lie_derivative_residual(data: EvolutionData, vfield: np.ndarray,
                            step: float = 1e-5, n_probe: int = 12,
                            seed: int = 0) -> float:
    """Finite-difference size of L_v chi for a linear field v (matrix V).

    The pullback of chi under the time-s flow of V is
    Lambda^{m-1}(e^{-sV}) chi(e^{sV} x); the derivative at s=0 is estimated
    by central differences and normalized by |chi(x)|.
    """
    V = np.asarray(vfield, dtype=float)
    rng = np.random.default_rng(seed)
    n = data.n
    fwd = expm(step * V)
    bwd = expm(-step * V)
    worst = 0.0
    for _ in range(n_probe):
        x = rng.normal(size=n)
        chi_plus = data.chi_at(fwd @ x).pushforward(bwd)
        chi_minus = data.chi_at(bwd @ x).pushforward(fwd)
        diff = (chi_plus - chi_minus) * (0.5 / step)
        scale = max(data.chi_at(x).norm(), 1e-30)
        worst = max(worst, diff.norm() / scale)
    return worst


# ---------------------------------------------------------------------------
# classification for n = m
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SquareClassification:
    """Outcome of the n = m classification via the 1-form beta = vol . chi."""

    label: str  # 'quadric' | 'curve_times_plane' | 'indeterminate'
    S: np.ndarray = None
    b: np.ndarray = None
    c: float = None
    dbeta_singular_values: tuple = ()


def classify_square(data: EvolutionData, tol: float = 1e-9,
                    n_samples: int = 40, seed: int = 0) -> SquareClassification:
    """Classify n = m evolution data by the constant 2-form d(beta).

    beta(x)(w) = vol(chi(x) ^ w) is linear/affine; d(beta) = 0 recovers a
    quadric with beta = dQ, and d(beta) of rank 2 with beta valued in its
    row plane is the integral-curve-times-plane construction.  Rank
    ambiguity at the tolerance is reported, not guessed.
    """
    n, m = data.n, data.m
    if n != m:
        raise ValidationError("classification applies to n = m data")

    def beta_of(mv: Multivector) -> np.ndarray:
        out = np.empty(n)
        for i in range(n):
            wedge = mv.wedge(Multivector.basis(n, (i,)))
            out[i] = wedge.coeffs[0]
        return out

    B = np.column_stack([beta_of(mv) for mv in data.chi_linear])
    beta0 = beta_of(data.chi_const)
    D = B - B.T
    scale = max(np.abs(B).max(), np.abs(beta0).max(), 1e-300)
    svals = np.linalg.svd(D, compute_uv=False)

    if svals[0] <= tol * scale:
        # beta = dQ with Q = x'Sx + b'x; S from the symmetric part
        S = 0.25 * (B + B.T)
        b = beta0
        pts = data.sample(n_samples, seed)
        cvals = np.einsum("pi,ij,pj->p", pts, S, pts) + pts @ b
        c = float(np.mean(cvals))
        return SquareClassification("quadric", S=S, b=b, c=c,
                                    dbeta_singular_values=tuple(svals))

    third = svals[2] if svals.size >= 3 else 0.0
    if third <= tol * svals[0]:
        # d(beta) = gamma ^ delta; beta must lie in the row plane on P
        u, s, vt = np.linalg.svd(D)
        plane = vt[:2]
        pts = data.sample(n_samples, seed)
        worst = 0.0
        for p in pts:
            bp = B @ p + beta0
            out = bp - plane.T @ (plane @ bp)
            worst = max(worst, np.linalg.norm(out) /
                        max(np.linalg.norm(bp), 1e-30))
        if worst <= 1e-6:
            return SquareClassification("curve_times_plane",
                                        dbeta_singular_values=tuple(svals))
        return SquareClassification("indeterminate",
                                    dbeta_singular_values=tuple(svals))

    return SquareClassification("indeterminate",
                                dbeta_singular_values=tuple(svals))
