"""The general finite-dimensional evolution engine for linear/affine maps.

A map phi: R^n -> C^m evolves by pushing chi(x) forward through the linear
part, contracting with Re Omega over its trailing slots, and raising the
index with the flat metric:

    dphi/dt (x) = 1/2 * [Re Omega( . , phi_* chi(x))]^sharp.

Writing Omega(v, u_1, .., u_{m-1}) = det[v | U] column-wise over complex
coordinates, the derivative's complex coordinates are conjugated cofactors;
the slot order and the 1/2 are pinned by requiring exact agreement with the
diagonal closed forms (the acceptance suite checks this to 1e-12).  The
right-hand side is homogeneous of degree m-1 in phi and depends only on the
linear part; affine data feeds its constant chi term into the translation
derivative.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .errors import NumericalError, ValidationError
from .evodata import EvolutionData
from .multilinear import complex_to_real, eval_omega, k_subsets

BLOWUP_GUARD = 1e8


@dataclass(frozen=True)
class EvolMap:
    """Linear-plus-translation map R^n -> C^m: x -> A x + t0."""

    n: int
    m: int
    A: np.ndarray = field(repr=False)
    t0: np.ndarray = field(repr=False)

    def __post_init__(self):
        A = np.asarray(self.A, dtype=complex)
        t0 = np.asarray(self.t0, dtype=complex)
        if A.shape != (self.m, self.n):
            raise ValidationError(f"A must be {self.m} x {self.n}")
        if t0.shape != (self.m,):
            raise ValidationError(f"t0 must have length {self.m}")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(t0))):
            raise ValidationError("non-finite map entries")
        A.flags.writeable = False
        t0.flags.writeable = False
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "t0", t0)

    @classmethod
    def linear(cls, A) -> "EvolMap":
        A = np.asarray(A, dtype=complex)
        return cls(A.shape[1], A.shape[0], A, np.zeros(A.shape[0], complex))

    @classmethod
    def diagonal(cls, w) -> "EvolMap":
        w = np.asarray(w, dtype=complex)
        return cls.linear(np.diag(w))

    def __call__(self, x) -> np.ndarray:
        return self.A @ np.asarray(x, dtype=float) + self.t0

    def push_real(self, v) -> np.ndarray:
        """Push a real tangent vector to an interleaved vector of R^{2m}."""
        return complex_to_real(self.A @ np.asarray(v, dtype=float))

    def norm(self) -> float:
        return float(np.sqrt(np.linalg.norm(self.A) ** 2
                             + np.linalg.norm(self.t0) ** 2))


def _active_subsets(data: EvolutionData):
    """(m-1)-subsets of coordinates carrying any nonzero chi coefficient,
    with the corresponding rows of the chi coefficient matrices."""
    cache = getattr(data, "_evolver_cache", None)
    if cache is not None:
        return cache
    subs = k_subsets(data.n, data.m - 1)
    lin = data.chi_matrix()
    const = data.chi_const.coeffs
    active = [i for i in range(len(subs))
              if np.any(lin[i] != 0.0) or const[i] != 0.0]
    cache = ([subs[i] for i in active], lin[active], const[active])
    data._evolver_cache = cache
    return cache


def _cofactor_vector(U: np.ndarray) -> np.ndarray:
    """c_j = (-1)^j det(U with row j removed) for a complex m x (m-1) U,
    so that det[v | U] = sum_j v_j c_j."""
    m = U.shape[0]
    if m == 2:
        return np.array([U[1, 0], -U[0, 0]])
    out = np.empty(m, dtype=complex)
    rows = np.arange(m)
    for j in range(m):
        out[j] = ((-1.0) ** j) * np.linalg.det(U[rows != j])
    return out


def rhs_general(phi: EvolMap, data: EvolutionData) -> EvolMap:
    """Right-hand side of the evolution equation as an EvolMap increment.

    Returns (dA, dt0); dt0 is zero for linear data (no constant chi term).
    """
    if phi.n != data.n or phi.m != data.m:
        raise ValidationError("map/evolution-data dimension mismatch")
    subs, lin_rows, const_rows = _active_subsets(data)
    m = data.m
    C = np.zeros((m, len(subs)), dtype=complex)
    for idx, I in enumerate(subs):
        C[:, idx] = _cofactor_vector(phi.A[:, list(I)])
    dA = 0.5 * np.conj(C) @ lin_rows
    dt0 = 0.5 * np.conj(C) @ const_rows
    return EvolMap(phi.n, phi.m, dA, dt0)


@dataclass(frozen=True)
class CPDiagnostics:
    """Membership diagnostics for the admissible set of initial maps:
    pullback-omega residual (condition i) and injectivity of phi on tangent
    spaces (condition ii)."""

    max_omega_residual: float
    min_singular_value: float
    min_singular_ratio: float
    samples: int

    def passes(self, omega_tol: float = 1e-8, sv_ratio_tol: float = 1e-8) -> bool:
        return (self.max_omega_residual <= omega_tol
                and self.min_singular_ratio >= sv_ratio_tol)


def membership_cp(phi: EvolMap, data: EvolutionData, n_samples: int = 200,
                  seed: int = 0) -> CPDiagnostics:
    """Evaluate the two admissibility conditions on sampled points of P."""
    if phi.n != data.n or phi.m != data.m:
        raise ValidationError("map/evolution-data dimension mismatch")
    pts = data.sample(n_samples, seed)
    worst_omega = 0.0
    min_sv = np.inf
    min_ratio = np.inf
    for p in pts:
        basis = data.tangent_basis(p)
        pushed = np.array([phi.push_real(tau) for tau in basis])
        norms = np.linalg.norm(pushed, axis=1)
        for i in range(len(pushed)):
            for j in range(i + 1, len(pushed)):
                denom = max(norms[i] * norms[j], 1e-300)
                worst_omega = max(worst_omega, abs(
                    eval_omega(pushed[i], pushed[j], data.m)) / denom)
        svals = np.linalg.svd(pushed.T, compute_uv=False)
        min_sv = min(min_sv, float(svals[-1]))
        min_ratio = min(min_ratio, float(svals[-1] / max(svals[0], 1e-300)))
    return CPDiagnostics(float(worst_omega), float(min_sv), float(min_ratio),
                         len(pts))


@dataclass
class Trajectory:
    """Time-indexed maps with integration and membership diagnostics.

    nfev and accepted_steps summarize the controller's work (their gap
    reflects rejected trials and dense-output setup).
    """

    times: np.ndarray
    maps: list
    omega_residuals: np.ndarray
    escaped: bool = False
    escape_time: float = None
    flagged: list = field(default_factory=list)
    nfev: int = 0
    accepted_steps: int = 0

    def final(self) -> EvolMap:
        return self.maps[-1]


def _pack(phi: EvolMap) -> np.ndarray:
    z = np.concatenate([phi.A.ravel(), phi.t0])
    return np.concatenate([z.real, z.imag])


def _unpack(y: np.ndarray, n: int, m: int) -> EvolMap:
    half = y.size // 2
    z = y[:half] + 1j * y[half:]
    return EvolMap(n, m, z[:m * n].reshape(m, n), z[m * n:])


def integrate(phi0: EvolMap, data: EvolutionData, t_end: float,
              tol: float = None, rtol: float = 1e-10, atol: float = 1e-12,
              checkpoints: int = 33, membership_samples: int = 40,
              seed: int = 0, guard: float = BLOWUP_GUARD) -> Trajectory:
    """Adaptive integration of the evolution equation up to t_end.

    ``tol`` sets the per-step relative error target (absolute a hundredth
    of it); the finer rtol/atol pair can be given instead.  Stops cleanly
    at the blow-up guard (escaping families leave every bounded set in
    finite time); the guard crossing is localized by the solver's root
    finder.  Membership of the admissible set is checked at the checkpoint
    times and deviations beyond 10x the initial residual plus 1e-8 are
    flagged.
    """
    if tol is not None:
        rtol, atol = tol, tol * 1e-2
    n, m = phi0.n, phi0.m

    def rhs(t, y):
        return _pack(rhs_general(_unpack(y, n, m), data))

    def blow_up(t, y):
        return np.linalg.norm(y) - guard

    blow_up.terminal = True
    blow_up.direction = 1.0

    sol = solve_ivp(rhs, (0.0, t_end), _pack(phi0), method="DOP853",
                    rtol=rtol, atol=atol, dense_output=True, events=blow_up)
    if sol.status < 0:
        raise NumericalError(f"integration failed: {sol.message}")
    escaped = sol.status == 1
    escape_time = float(sol.t_events[0][0]) if escaped else None
    t_last = sol.t[-1]
    times = np.linspace(0.0, t_last, checkpoints)
    maps = [_unpack(sol.sol(t), n, m) for t in times]

    residuals = np.array([
        membership_cp(mp, data, n_samples=membership_samples, seed=seed)
        .max_omega_residual for mp in maps])
    tol_line = 10.0 * residuals[0] + 1e-8
    flagged = [int(i) for i in np.nonzero(residuals > tol_line)[0]]
    return Trajectory(times, maps, residuals, escaped, escape_time,
                      flagged, int(sol.nfev), accepted_steps=len(sol.t) - 1)


def trajectory_to_csv(traj: Trajectory, path) -> None:
    """Write a trajectory as CSV: t, Re/Im of all entries, omega residual."""
    n, m = traj.maps[0].n, traj.maps[0].m
    cols = ["t"]
    for i in range(m):
        for j in range(n):
            cols += [f"ReA{i}{j}", f"ImA{i}{j}"]
    for i in range(m):
        cols += [f"Ret0{i}", f"Imt0{i}"]
    cols.append("res_omega")
    lines = [",".join(cols)]
    for t, mp, r in zip(traj.times, traj.maps, traj.omega_residuals):
        vals = [t]
        for i in range(m):
            for j in range(n):
                vals += [mp.A[i, j].real, mp.A[i, j].imag]
        for i in range(m):
            vals += [mp.t0[i].real, mp.t0[i].imag]
        vals.append(r)
        lines.append(",".join(f"{v:.17g}" for v in vals))
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
