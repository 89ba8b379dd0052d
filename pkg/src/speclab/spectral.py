"""Dense spectra, eigenprojections, branch continuation, and crossing solvers."""

from __future__ import annotations

from dataclasses import dataclass
from math import sqrt

import numpy as np
import scipy.linalg
import scipy.sparse
from scipy.optimize import linear_sum_assignment

from .errors import (
    BranchMonotonicityError,
    ConfigError,
    PreconditionError,
    RefineGridError,
)
from .operator import (
    DENSE_EIGENSOLVE_CAP,
    SUPPORT_FLOOR,
    OperatorFamily,
    SymmetricOperator,
)

DEFAULT_OVERLAP_FLOOR = 0.7
CROSSING_TOL = 1e-10
# Bisection stops once the coupling window is this narrow, whatever the slope.
OMEGA_WIDTH_FLOOR = 1e-12
_FOLLOW_DEPTH = 48
_TRACE_POINT_CAP = 4096


@dataclass(frozen=True)
class EnergyInterval:
    """Closed energy interval with a scale-relative tie tolerance."""

    a: float
    b: float

    def __post_init__(self):
        lo, hi = float(self.a), float(self.b)
        if not (np.isfinite(lo) and np.isfinite(hi)):
            raise PreconditionError(f"interval endpoints must be finite, got [{lo}, {hi}]")
        if lo > hi:
            lo, hi = hi, lo
        object.__setattr__(self, "a", lo)
        object.__setattr__(self, "b", hi)

    @property
    def width(self) -> float:
        return self.b - self.a

    @property
    def tie_tol(self) -> float:
        return 1e-12 * max(1.0, abs(self.a), abs(self.b))

    def contains(self, values: np.ndarray) -> np.ndarray:
        v = np.asarray(values, dtype=float)
        t = self.tie_tol
        return (v >= self.a - t) & (v <= self.b + t)

    def count_sorted(self, sorted_values: np.ndarray) -> int:
        t = self.tie_tol
        hi = np.searchsorted(sorted_values, self.b + t, side="right")
        lo = np.searchsorted(sorted_values, self.a - t, side="left")
        return int(hi - lo)


def _as_interval(interval) -> EnergyInterval:
    if isinstance(interval, EnergyInterval):
        return interval
    a, b = interval
    return EnergyInterval(float(a), float(b))


def _as_dense(op, volume_element=None) -> tuple[np.ndarray, float]:
    if isinstance(op, SymmetricOperator):
        return op.dense, op.volume_element
    if scipy.sparse.issparse(op):
        return op.toarray(), 1.0 if volume_element is None else float(volume_element)
    return (
        np.asarray(op, dtype=float),
        1.0 if volume_element is None else float(volume_element),
    )


def _canonical_signs(vectors: np.ndarray) -> np.ndarray:
    """Flip each column so its largest-magnitude entry is positive."""
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


@dataclass(frozen=True, eq=False)
class SpectralData:
    """Full eigendecomposition; vectors are Euclidean-orthonormal columns.

    Grid eigenfunctions with unit discrete L2 norm are vectors / sqrt(h^d);
    traces and coefficient sums never need that rescaling.
    """

    eigenvalues: np.ndarray
    vectors: np.ndarray
    volume_element: float = 1.0
    source: str = ""

    @property
    def n(self) -> int:
        return self.eigenvalues.shape[0]

    @property
    def eigenfunctions(self) -> np.ndarray:
        return self.vectors / sqrt(self.volume_element)

    def validate(self, operator) -> None:
        """Assert the residual and Gram-identity contracts against the source."""
        a, _ = _as_dense(operator, self.volume_element)
        scale = float(np.abs(self.eigenvalues).max(initial=1.0))
        resid = a @ self.vectors - self.vectors * self.eigenvalues[None, :]
        per_vec = np.linalg.norm(resid, axis=0)
        allowed = 1e-10 * (scale + np.abs(self.eigenvalues))
        if np.any(per_vec > allowed):
            worst = int(np.argmax(per_vec - allowed))
            raise PreconditionError(
                f"eigenpair residual {per_vec[worst]:.3e} exceeds contract at "
                f"eigenvalue {self.eigenvalues[worst]:.6g}"
            )
        gram = self.vectors.T @ self.vectors - np.eye(self.n)
        if np.abs(gram).max() > 1e-10:
            raise PreconditionError("eigenvector Gram matrix deviates from identity")


def eigendecompose(
    op,
    *,
    volume_element: float | None = None,
    cap: int = DENSE_EIGENSOLVE_CAP,
    source: str = "",
) -> SpectralData:
    """Dense symmetric eigendecomposition with canonical eigenvector signs."""
    a, ve = _as_dense(op, volume_element)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ConfigError(f"expected a square matrix, got shape {a.shape}")
    n = a.shape[0]
    if n > cap:
        raise ConfigError(f"matrix size {n} exceeds the dense eigensolve cap {cap}")
    scale = float(np.abs(a).max(initial=1.0))
    if np.abs(a - a.T).max(initial=0.0) > 1e-12 * max(1.0, scale):
        raise PreconditionError("matrix is not symmetric")
    try:
        evals, vecs = scipy.linalg.eigh(a)
    except scipy.linalg.LinAlgError as exc:  # pragma: no cover - rare
        raise PreconditionError(f"eigensolver failed to converge: {exc}") from exc
    return SpectralData(
        eigenvalues=evals,
        vectors=_canonical_signs(vecs),
        volume_element=ve,
        source=source,
    )


def projector_trace(spec: SpectralData, interval) -> int:
    """Number of eigenvalues in the closed interval, ties resolved by tolerance."""
    iv = _as_interval(interval)
    return iv.count_sorted(spec.eigenvalues)


def projector_element(spec: SpectralData, interval, f: np.ndarray, g: np.ndarray) -> float:
    """<f, P(I) g> in the discrete inner product; f, g are grid functions."""
    iv = _as_interval(interval)
    f = np.asarray(f, dtype=float).ravel()
    g = np.asarray(g, dtype=float).ravel()
    if f.shape[0] != spec.n or g.shape[0] != spec.n:
        raise ConfigError("vector length does not match the spectral data")
    mask = iv.contains(spec.eigenvalues)
    if not np.any(mask):
        return 0.0
    root_ve = sqrt(spec.volume_element)
    cf = spec.vectors[:, mask].T @ (f * root_ve)
    cg = spec.vectors[:, mask].T @ (g * root_ve)
    return float(cf @ cg)


@dataclass(frozen=True, eq=False)
class BranchTrace:
    """Eigenvalue branches over a coupling grid, labels fixed by continuation.

    Branch j starts as the j-th ascending eigenvalue at the first grid point;
    labels at later points come from global overlap assignment, so each row of
    ``energies`` is a permutation of the instantaneous spectrum.
    """

    omega_grid: np.ndarray
    energies: np.ndarray
    vectors: np.ndarray
    overlaps: np.ndarray
    min_overlap: float
    volume_element: float = 1.0

    @property
    def n_branches(self) -> int:
        return self.energies.shape[1]

    def branch(self, j: int) -> np.ndarray:
        return self.energies[:, j]

    def to_rows(self) -> list[tuple]:
        rows = []
        for g, omega in enumerate(self.omega_grid):
            for j in range(self.n_branches):
                rows.append(
                    (
                        float(omega),
                        j,
                        float(self.energies[g, j]),
                        float(self.overlaps[g, j]),
                    )
                )
        return rows


def _advance(family, omega_a, energies_a, vecs_a, omega_b, floor, mono_tol, depth):
    """Continue all branches from omega_a to omega_b, bisecting as needed.

    A step is accepted only when every matched overlap clears the floor and no
    branch value drops; either failure near an avoided crossing means the
    assignment is ambiguous at this step size, so the interval is bisected.
    """
    sd = eigendecompose(
        family.operator_at(omega_b), volume_element=family.volume_element
    )
    overlap = np.abs(vecs_a.T @ sd.vectors)
    rows, cols = linear_sum_assignment(-overlap)
    matched = overlap[rows, cols]
    energies_b = sd.eigenvalues[cols]
    scale = max(1.0, float(np.abs(energies_a).max()), float(np.abs(energies_b).max()))
    drop = float((energies_b - energies_a).min())
    if matched.min() >= floor and drop >= -mono_tol * scale:
        return [(omega_b, energies_b, sd.vectors[:, cols], matched)]
    if depth <= 0:
        if matched.min() < floor:
            raise RefineGridError(float(omega_a), float(omega_b))
        raise BranchMonotonicityError(
            f"a branch decreases by {-drop:.3e} between omega={omega_a!r} and "
            f"omega={omega_b!r} and refinement does not resolve it"
        )
    mid = 0.5 * (omega_a + omega_b)
    if not omega_a < mid < omega_b:
        if drop < -mono_tol * scale:
            raise BranchMonotonicityError(
                f"a branch decreases by {-drop:.3e} across the unresolvable "
                f"interval [{omega_a!r}, {omega_b!r}]"
            )
        raise RefineGridError(float(omega_a), float(omega_b))
    left = _advance(family, omega_a, energies_a, vecs_a, mid, floor, mono_tol, depth - 1)
    right = _advance(
        family, mid, left[-1][1], left[-1][2], omega_b, floor, mono_tol, depth - 1
    )
    return left + right


def trace_branches(
    family: OperatorFamily,
    omega_grid,
    *,
    overlap_floor: float = DEFAULT_OVERLAP_FLOOR,
    max_refine: int = 12,
    monotone_tol: float = 1e-8,
) -> BranchTrace:
    """Track all eigenvalue branches over the grid by eigenvector overlap.

    Subintervals where the assignment overlap dips below the floor, or where a
    matched branch appears to decrease, are bisected locally; the inserted
    couplings are kept in the returned trace. Branches of a nonnegative
    perturbation must be nondecreasing, so a decrease that survives refinement
    raises BranchMonotonicityError.
    """
    grid = np.asarray(omega_grid, dtype=float).ravel()
    if grid.size < 2:
        raise PreconditionError("omega_grid needs at least two points")
    if np.any(np.diff(grid) <= 0):
        raise PreconditionError("omega_grid must be strictly increasing")
    sd0 = eigendecompose(
        family.operator_at(grid[0]), volume_element=family.volume_element
    )
    points = [(grid[0], sd0.eigenvalues, sd0.vectors, np.ones(family.n))]
    for omega_a, omega_b in zip(grid[:-1], grid[1:]):
        points.extend(
            _advance(
                family,
                omega_a,
                points[-1][1],
                points[-1][2],
                omega_b,
                overlap_floor,
                monotone_tol,
                max_refine,
            )
        )
        if len(points) > _TRACE_POINT_CAP:
            raise RefineGridError(float(grid[0]), float(grid[-1]),
                                  "branch continuation exceeded the refinement budget")
    omegas = np.array([p[0] for p in points])
    energies = np.stack([p[1] for p in points])
    vectors = np.stack([p[2] for p in points])
    overlaps = np.stack([p[3] for p in points])
    scale = max(1.0, float(np.abs(energies).max()))
    drops = np.diff(energies, axis=0)
    worst = float(drops.min(initial=0.0))
    if worst < -monotone_tol * scale:
        g, j = np.unravel_index(np.argmin(drops), drops.shape)
        raise BranchMonotonicityError(
            f"branch {j} decreases by {-worst:.3e} between omega={omegas[g]!r} "
            f"and omega={omegas[g + 1]!r}"
        )
    return BranchTrace(
        omega_grid=omegas,
        energies=energies,
        vectors=vectors,
        overlaps=overlaps,
        min_overlap=float(overlaps[1:].min()) if len(points) > 1 else 1.0,
        volume_element=family.volume_element,
    )


def window_trace(
    family: OperatorFamily, tau1: float, tau2: float, *, points: int = 9, **kw
) -> BranchTrace:
    """Branch trace over [tau1, tau2] on a uniform starting grid."""
    if not tau2 > tau1:
        raise PreconditionError(f"need tau1 < tau2, got [{tau1}, {tau2}]")
    return trace_branches(family, np.linspace(tau1, tau2, points), **kw)


def _follow_branch(family, omega_a, v_a, omega_b, floor, depth=_FOLLOW_DEPTH):
    """Value and vector of one branch at omega_b, continued from (omega_a, v_a)."""
    sd = eigendecompose(
        family.operator_at(omega_b), volume_element=family.volume_element
    )
    ov = np.abs(sd.vectors.T @ v_a)
    j = int(np.argmax(ov))
    if ov[j] >= floor:
        return float(sd.eigenvalues[j]), sd.vectors[:, j]
    if depth <= 0:
        raise RefineGridError(float(omega_a), float(omega_b))
    mid = 0.5 * (omega_a + omega_b)
    if not min(omega_a, omega_b) < mid < max(omega_a, omega_b):
        raise RefineGridError(float(omega_a), float(omega_b))
    _, v_mid = _follow_branch(family, omega_a, v_a, mid, floor, depth - 1)
    return _follow_branch(family, mid, v_mid, omega_b, floor, depth - 1)


@dataclass(frozen=True, eq=False)
class CrossingRecord:
    """A branch passing through a fixed energy level at coupling omega."""

    branch: int
    energy: float
    omega: float
    weight: float = float("nan")
    vector: np.ndarray | None = None
    residual: float = 0.0


def _crossing_weight(family: OperatorFamily, vector: np.ndarray, phi: np.ndarray) -> float:
    """|<u psi / ||u psi||, phi>|^2 in the discrete inner product."""
    uv = family.u * vector
    norm2 = float(uv @ uv)
    if norm2 <= SUPPORT_FLOOR:
        return 0.0
    phi_hat = np.asarray(phi, dtype=float).ravel() * sqrt(family.volume_element)
    return float((uv @ phi_hat) ** 2 / norm2)


def solve_crossing(
    family: OperatorFamily,
    trace: BranchTrace,
    branch: int,
    energy: float,
    tau1: float | None = None,
    tau2: float | None = None,
    *,
    phi: np.ndarray | None = None,
    overlap_floor: float = DEFAULT_OVERLAP_FLOOR,
    tol_scale: float = CROSSING_TOL,
) -> CrossingRecord | None:
    """Coupling where the branch meets the energy level, or None if it misses.

    Bisection between the bracketing trace points, re-diagonalizing at each
    probe and identifying the branch by eigenvector overlap from the nearest
    resolved coupling.
    """
    vals = trace.energies[:, branch]
    tol = tol_scale * max(1.0, abs(energy))
    window_lo = trace.omega_grid[0] if tau1 is None else float(tau1)
    window_hi = trace.omega_grid[-1] if tau2 is None else float(tau2)
    if energy < vals[0] - tol or energy > vals[-1] + tol:
        return None
    near = int(np.argmin(np.abs(vals - energy)))
    residual = 0.0
    if abs(vals[near] - energy) <= tol:
        omega_star = float(trace.omega_grid[near])
        vec = trace.vectors[near][:, branch]
    else:
        idx = int(np.argmax(vals >= energy))
        lo = float(trace.omega_grid[idx - 1])
        hi = float(trace.omega_grid[idx])
        v_lo = trace.vectors[idx - 1][:, branch]
        v_hi = trace.vectors[idx][:, branch]
        omega_star = None
        vec = v_lo
        while hi - lo > OMEGA_WIDTH_FLOOR:
            mid = 0.5 * (lo + hi)
            if mid - lo <= hi - mid:
                e_mid, v_mid = _follow_branch(family, lo, v_lo, mid, overlap_floor)
            else:
                e_mid, v_mid = _follow_branch(family, hi, v_hi, mid, overlap_floor)
            if abs(e_mid - energy) <= tol:
                omega_star, vec, residual = mid, v_mid, abs(e_mid - energy)
                break
            if e_mid < energy:
                lo, v_lo = mid, v_mid
            else:
                hi, v_hi = mid, v_mid
        if omega_star is None:
            omega_star = 0.5 * (lo + hi)
            e_star, vec = _follow_branch(family, lo, v_lo, omega_star, overlap_floor)
            residual = abs(e_star - energy)
    if not window_lo - 1e-12 <= omega_star <= window_hi + 1e-12:
        return None
    weight = _crossing_weight(family, vec, phi) if phi is not None else float("nan")
    return CrossingRecord(
        branch=branch,
        energy=float(energy),
        omega=float(omega_star),
        weight=weight,
        vector=vec,
        residual=float(residual),
    )


def all_crossings(
    family: OperatorFamily,
    energy: float,
    tau1: float,
    tau2: float,
    *,
    trace: BranchTrace | None = None,
    phi: np.ndarray | None = None,
    overlap_floor: float = DEFAULT_OVERLAP_FLOOR,
) -> list[CrossingRecord]:
    """Crossings of the level by every branch over [tau1, tau2], omega-sorted."""
    if trace is None:
        trace = window_trace(family, tau1, tau2, overlap_floor=overlap_floor)
    records = []
    for j in range(trace.n_branches):
        rec = solve_crossing(
            family, trace, j, energy, tau1, tau2, phi=phi, overlap_floor=overlap_floor
        )
        if rec is not None:
            records.append(rec)
    records.sort(key=lambda r: r.omega)
    return records


@dataclass(frozen=True, eq=False)
class BsCrossingSet:
    """All couplings at which some branch of H_0 + omega u^2 meets the energy.

    vectors[:, i] spans the image under u of the crossing eigenfunction, in
    support coordinates; the columns are a complete orthonormal set, so the
    weights below sum to the support mass of phi.
    """

    support: np.ndarray
    omegas: np.ndarray
    vectors: np.ndarray
    volume_element: float
    energy: float

    @property
    def n_crossings(self) -> int:
        return self.omegas.shape[0]

    def support_mass(self, phi: np.ndarray) -> float:
        phi_s = np.asarray(phi, dtype=float).ravel()[self.support]
        return float(self.volume_element * phi_s @ phi_s)

    def weights(self, phi: np.ndarray) -> np.ndarray:
        phi_s = np.asarray(phi, dtype=float).ravel()[self.support]
        coeff = self.vectors.T @ (phi_s * sqrt(self.volume_element))
        return coeff**2

    def window_weight(self, phi: np.ndarray, tau1: float, tau2: float) -> float:
        mask = (self.omegas >= tau1) & (self.omegas <= tau2)
        if not np.any(mask):
            return 0.0
        return float(self.weights(phi)[mask].sum())


def birman_schwinger_crossings(
    h0,
    u: np.ndarray,
    energy: float,
    *,
    volume_element: float | None = None,
    h0_eigenvalues: np.ndarray | None = None,
    sigma_tol: float = 1e-8,
    support_floor: float = SUPPORT_FLOOR,
) -> BsCrossingSet:
    """Crossing couplings from the compressed resolvent u (H_0 - E)^{-1} u.

    A vector psi solves (H_0 + omega u^2) psi = E psi exactly when u psi is an
    eigenvector of the kernel with eigenvalue -1/omega, so the negated inverse
    eigenvalues of the kernel enumerate every crossing on the whole real line.
    """
    a, ve = _as_dense(h0, volume_element)
    u = np.asarray(u, dtype=float).ravel()
    if u.shape[0] != a.shape[0]:
        raise ConfigError("u length does not match the operator")
    if np.any(u < 0):
        raise PreconditionError("u must be entrywise nonnegative")
    support = np.flatnonzero(u > support_floor)
    if support.size == 0:
        raise PreconditionError("u has empty support")
    if h0_eigenvalues is None:
        h0_eigenvalues = np.linalg.eigvalsh(a)
    scale = max(1.0, float(np.abs(h0_eigenvalues).max()))
    dist = float(np.min(np.abs(h0_eigenvalues - energy)))
    if dist <= sigma_tol * scale:
        raise PreconditionError(
            f"energy {energy!r} is within {sigma_tol * scale:.3e} of the base spectrum"
        )
    m = a - energy * np.eye(a.shape[0])
    rhs = np.zeros((a.shape[0], support.size))
    rhs[support, np.arange(support.size)] = u[support]
    x = scipy.linalg.solve(m, rhs, assume_a="sym")
    kernel = u[support, None] * x[support, :]
    kernel = 0.5 * (kernel + kernel.T)
    mu, w = scipy.linalg.eigh(kernel)
    if np.any(np.abs(mu) <= 1e-12 * max(1.0, float(np.abs(mu).max()))):
        raise PreconditionError(
            "singular crossing kernel at this energy: a branch reaches it only "
            "at infinite coupling"
        )
    omegas = -1.0 / mu
    order = np.argsort(omegas)
    return BsCrossingSet(
        support=support,
        omegas=omegas[order],
        vectors=_canonical_signs(w[:, order]),
        volume_element=ve,
        energy=float(energy),
    )


@dataclass(frozen=True)
class FeynmanHellmannResult:
    """Central-difference branch slope against <psi, u^2 psi>."""

    status: str
    derivative: float
    expectation: float
    residual: float
    reason: str = ""


def feynman_hellmann_residual(
    family: OperatorFamily,
    omega: float,
    branch: int,
    *,
    spec: SpectralData | None = None,
    step: float = 1e-5,
    gap_floor: float = 1e-6,
    overlap_floor: float = DEFAULT_OVERLAP_FLOOR,
) -> FeynmanHellmannResult:
    """Compare the numerical branch slope with the eigenfunction expectation.

    Near-degenerate eigenvalues (gap below gap_floor times the spectral scale)
    are skipped with a reason rather than failed, since the finite-difference
    slope is not trustworthy there.
    """
    if spec is None:
        spec = eigendecompose(
            family.operator_at(omega), volume_element=family.volume_element
        )
    evals = spec.eigenvalues
    v = spec.vectors[:, branch]
    expectation = float(v @ (family.u2 * v))
    scale = max(1.0, float(np.abs(evals).max()))
    neighbors = []
    if branch > 0:
        neighbors.append(evals[branch] - evals[branch - 1])
    if branch + 1 < evals.shape[0]:
        neighbors.append(evals[branch + 1] - evals[branch])
    gap = float(min(neighbors)) if neighbors else np.inf
    if gap <= gap_floor * scale:
        return FeynmanHellmannResult(
            status="skipped",
            derivative=float("nan"),
            expectation=expectation,
            residual=float("nan"),
            reason=f"eigenvalue gap {gap:.3e} below {gap_floor:.1e} * scale",
        )
    e_plus, _ = _follow_branch(family, omega, v, omega + step, overlap_floor)
    e_minus, _ = _follow_branch(family, omega, v, omega - step, overlap_floor)
    derivative = (e_plus - e_minus) / (2.0 * step)
    return FeynmanHellmannResult(
        status="ok",
        derivative=float(derivative),
        expectation=expectation,
        residual=float(abs(derivative - expectation)),
    )
