"""Neumann eigenbasis of unit cubes, per-cube energies, and count bounds.

The 1-d Neumann modes on a unit cube with m cells are the DCT-II family
cos(n pi (i + 1/2) / m) with discrete level (4/h^2) sin^2(n pi h / 2); tensor
products give the d-dimensional basis. Levels converge to (n pi)^2 sums from
below as h shrinks, so every continuum constant has a computable discrete twin.
"""

from __future__ import annotations

import functools
import itertools
from dataclasses import dataclass
from math import pi, sin, sqrt

import numpy as np
import scipy.sparse as sp

from .errors import PreconditionError
from .operator import BoxDomain, _laplacian_1d, cached_laplacian
from .report import VerificationReport, bound_report
from .spectral import SpectralData, _as_interval, projector_trace


def discrete_level_1d(m: int, n: int) -> float:
    """Discrete Neumann level (4/h^2) sin^2(n pi h / 2) on a unit cell row, h = 1/m."""
    return 4.0 * m * m * sin(n * pi / (2 * m)) ** 2


def continuum_level_1d(n: int) -> float:
    return float(n * pi) ** 2


@dataclass(frozen=True, eq=False)
class CubeBasis:
    """Tensor Neumann modes of one unit cube up to a 1-d index cap.

    functions holds grid samples with unit discrete L2 norm, one row per mode,
    flattened in C-order over the cube cells; levels are the matching discrete
    eigenvalues, and cutoff is the smallest level among the excluded modes.
    """

    m: int
    d: int
    level_cap: int
    functions: np.ndarray
    levels: np.ndarray
    indices: np.ndarray
    cutoff: float

    @property
    def n_modes(self) -> int:
        return self.functions.shape[0]

    @property
    def volume_element(self) -> float:
        return (1.0 / self.m) ** self.d

    def mode_mask(self, n: int) -> np.ndarray:
        """Modes whose 1-d indices are all at most n."""
        if n > self.level_cap:
            raise PreconditionError(
                f"requested level {n} above the generated cap {self.level_cap}"
            )
        return self.indices.max(axis=1) <= n


def neumann_cube_basis(m: int, d: int, level_cap: int) -> CubeBasis:
    """All tensor modes with every 1-d index at most level_cap.

    level_cap must stay below m: a row of m cells resolves m distinct cosine
    modes, so caps at or above m have no discrete counterpart.
    """
    if d not in (1, 2, 3):
        raise PreconditionError(f"dimension must be 1, 2 or 3, got {d}")
    if level_cap < 0:
        raise PreconditionError("level cap must be nonnegative")
    if level_cap >= m:
        raise PreconditionError(
            f"level cap {level_cap} is not resolvable with m={m} cells per cube"
        )
    grid = (np.arange(m) + 0.5) / m
    one_d = np.empty((level_cap + 1, m))
    for n in range(level_cap + 1):
        if n == 0:
            one_d[n] = 1.0
        else:
            one_d[n] = sqrt(2.0) * np.cos(n * pi * grid)
    modes = []
    levels = []
    indices = []
    for combo in itertools.product(range(level_cap + 1), repeat=d):
        vec = one_d[combo[0]]
        for q in combo[1:]:
            vec = np.multiply.outer(vec, one_d[q])
        modes.append(vec.ravel())
        levels.append(sum(discrete_level_1d(m, q) for q in combo))
        indices.append(combo)
    order = np.argsort(np.asarray(levels), kind="stable")
    return CubeBasis(
        m=m,
        d=d,
        level_cap=level_cap,
        functions=np.asarray(modes)[order],
        levels=np.asarray(levels)[order],
        indices=np.asarray(indices, dtype=int)[order],
        cutoff=discrete_level_1d(m, level_cap + 1),
    )


@functools.lru_cache(maxsize=16)
def cube_neumann_operator(m: int, d: int) -> sp.csr_matrix:
    """Neumann Laplacian of a single unit cube with m cells per side."""
    one_d = _laplacian_1d(m, 1.0 / m, "neumann")
    eye = sp.identity(m, format="csr")
    total = None
    for axis in range(d):
        factors = [one_d if ax == axis else eye for ax in range(d)]
        term = factors[0]
        for f in factors[1:]:
            term = sp.kron(term, f, format="csr")
        total = term if total is None else total + term
    return total.tocsr()


def embed_cube_function(domain: BoxDomain, k, local_values: np.ndarray) -> np.ndarray:
    """Zero-extend a cube-local grid function to the whole box."""
    out = np.zeros(domain.n_cells)
    out[domain.cube_cells(k)] = np.asarray(local_values, dtype=float).ravel()
    return out


def high_mode_projection(
    psi: np.ndarray, basis: CubeBasis, domain: BoxDomain, k, n: int | None = None
) -> np.ndarray:
    """chi_k psi minus its projection onto the cube modes with 1-d level <= n."""
    if n is None:
        n = basis.level_cap
    if domain.m != basis.m or domain.d != basis.d:
        raise PreconditionError("basis resolution does not match the domain")
    psi = np.asarray(psi, dtype=float).ravel()
    if psi.shape[0] != domain.n_cells:
        raise PreconditionError("vector length does not match the domain")
    cells = domain.cube_cells(k)
    local = psi[cells]
    sel = basis.mode_mask(n)
    funcs = basis.functions[sel]
    coeff = basis.volume_element * (funcs @ local)
    residual = local - funcs.T @ coeff
    return embed_cube_function(domain, k, residual)


def check_poincare(
    psi: np.ndarray, basis: CubeBasis, domain: BoxDomain, k, n: int | None = None
) -> VerificationReport:
    """||P_n psi||^2 <= (cube energy of P_n psi) / (smallest excluded level)."""
    if n is None:
        n = basis.level_cap
    cells = domain.cube_cells(k)
    w_global = high_mode_projection(psi, basis, domain, k, n)
    w = w_global[cells]
    ve = domain.volume_element
    lhs = float(ve * (w @ w))
    a_cube = cube_neumann_operator(domain.m, domain.d)
    energy = float(ve * (w @ (a_cube @ w)))
    cutoff = discrete_level_1d(domain.m, n + 1)
    rhs = energy / cutoff
    slack = 1e-12 * max(1.0, lhs, rhs)
    return bound_report(
        "poincare",
        lhs,
        rhs,
        slack=slack,
        cube=tuple(int(q) for q in np.atleast_1d(k)),
        level=n,
        cutoff=cutoff,
    )


@functools.lru_cache(maxsize=16)
def _cube_of_cell_cached(domain: BoxDomain) -> np.ndarray:
    return domain.cube_of_cell()


def boundary_terms_all(psi: np.ndarray, domain: BoxDomain) -> np.ndarray:
    """B_k = <chi_k psi, -Lap psi> - Q_k for every cube, flat C-order.

    Q_k is the per-cube share of the global quadratic form: every nearest-neighbor
    difference is owned by the cube of its lower cell, and boundary penalties by
    the cube of the boundary cell, so the Q_k sum telescopes to the full form and
    the B_k sum to zero.
    """
    psi = np.asarray(psi, dtype=float).ravel()
    if psi.shape[0] != domain.n_cells:
        raise PreconditionError("vector length does not match the domain")
    n = domain.cells_per_side
    shape = (n,) * domain.d
    x = psi.reshape(shape)
    cube_flat = _cube_of_cell_cached(domain).reshape(shape)
    acc = np.zeros(domain.n_cubes)
    for axis in range(domain.d):
        lower = [slice(None)] * domain.d
        upper = [slice(None)] * domain.d
        lower[axis] = slice(0, n - 1)
        upper[axis] = slice(1, n)
        diff2 = (x[tuple(upper)] - x[tuple(lower)]) ** 2
        np.add.at(acc, cube_flat[tuple(lower)].ravel(), diff2.ravel())
        first = [slice(None)] * domain.d
        last = [slice(None)] * domain.d
        first[axis] = 0
        last[axis] = n - 1
        if domain.bc == "dirichlet":
            np.add.at(acc, cube_flat[tuple(first)].ravel(), x[tuple(first)].ravel() ** 2)
            np.add.at(acc, cube_flat[tuple(last)].ravel(), x[tuple(last)].ravel() ** 2)
        elif domain.bc == "periodic":
            wrap2 = (x[tuple(first)] - x[tuple(last)]) ** 2
            np.add.at(acc, cube_flat[tuple(last)].ravel(), wrap2.ravel())
    ve = domain.volume_element
    q_k = acc / domain.h**2 * ve
    lap = cached_laplacian(domain)
    hpsi = lap.matrix @ psi
    form_k = np.bincount(
        _cube_of_cell_cached(domain), weights=psi * hpsi, minlength=domain.n_cubes
    ) * ve
    return form_k - q_k


def boundary_term(psi: np.ndarray, k, domain: BoxDomain) -> float:
    """Interface flux imbalance of one cube under the fixed ownership convention."""
    return float(boundary_terms_all(psi, domain)[domain.cube_flat_index(k)])


def trace_bound_check(
    spec: SpectralData, interval, n: int, domain: BoxDomain
) -> VerificationReport:
    """Eigenvalue count against the weighted low-mode coefficient sum.

    Tr P(I) <= (1 - b/cut)^{-1} sum_k sum_{modes <= n} (1 - level/cut)
    <phi_{j,k}, P(I) phi_{j,k}>, with cut the smallest excluded discrete level.
    The discrete derivation is exact, so failures beyond rounding are bugs, not
    statistics.
    """
    iv = _as_interval(interval)
    cutoff = discrete_level_1d(domain.m, n + 1)
    if not iv.b < cutoff:
        raise PreconditionError(
            f"interval top {iv.b} must lie strictly below the excluded level "
            f"{cutoff} (m={domain.m}, n={n})"
        )
    basis = neumann_cube_basis(domain.m, domain.d, n)
    lhs = float(projector_trace(spec, iv))
    mask = iv.contains(spec.eigenvalues)
    weights = 1.0 - basis.levels / cutoff
    total = 0.0
    if np.any(mask):
        v_sel = spec.vectors[:, mask]
        funcs = basis.functions * sqrt(domain.volume_element)
        for k in domain.cube_indices():
            cells = domain.cube_cells(k)
            coeff = funcs @ v_sel[cells, :]
            total += float(weights @ (coeff**2).sum(axis=1))
    rhs = total / (1.0 - iv.b / cutoff)
    slack = 1e-9 * max(1.0, abs(rhs))
    return bound_report(
        "trace_bound",
        lhs,
        rhs,
        slack=slack,
        n=n,
        cutoff=cutoff,
        interval=(iv.a, iv.b),
        bc=domain.bc,
    )


def eigenfunction_mass_check(spec: SpectralData, domain: BoxDomain) -> VerificationReport:
    """Single-cube mass of Dirichlet eigenfunctions against (d + 4E) / (2d).

    Checked for every cube translate and every eigenvector; the report carries
    the worst pair. The bound is informative only below E = d/4 but is asserted
    everywhere it is finite.
    """
    if domain.bc != "dirichlet":
        raise PreconditionError(
            f"eigenfunction mass bound requires Dirichlet walls, domain has {domain.bc}"
        )
    evals = spec.eigenvalues
    if np.any(evals <= 0):
        raise PreconditionError("expected strictly positive Dirichlet eigenvalues")
    masses = np.zeros((domain.n_cubes, spec.n))
    np.add.at(masses, _cube_of_cell_cached(domain), spec.vectors**2)
    bounds = (domain.d + 4.0 * evals) / (2.0 * domain.d)
    margins = bounds[None, :] - masses
    k_worst, j_worst = np.unravel_index(np.argmin(margins), margins.shape)
    lhs = float(masses[k_worst, j_worst])
    rhs = float(bounds[j_worst])
    slack = 1e-12 * max(1.0, rhs)
    return bound_report(
        "eigenfunction_mass",
        lhs,
        rhs,
        slack=slack,
        worst_cube=int(k_worst),
        worst_branch=int(j_worst),
        energy=float(evals[j_worst]),
        n_pairs=int(masses.size),
    )
