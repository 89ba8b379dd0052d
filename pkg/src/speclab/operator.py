"""Box domains, discrete Laplacians, random alloy potentials, coupling families.

Grid convention: the box [-L, L]^d is covered by cell-centered grid points with
spacing h = 1/m, so each of the (2L)^d unit cubes holds exactly m^d cells and
the discrete inner product is <f, g> = h^d sum f(x) g(x).
"""

from __future__ import annotations

import functools
import itertools
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import kernels
from .errors import ConfigError, PreconditionError

BOUNDARY_CONDITIONS = ("dirichlet", "neumann", "periodic")

# Largest matrix the dense eigensolve paths accept by default.
DENSE_EIGENSOLVE_CAP = 4096

# Entries of |u| at or below this are treated as outside the support.
SUPPORT_FLOOR = 1e-14


@dataclass(frozen=True)
class BoxDomain:
    """Discretized box [-L, L]^d with m grid cells per unit length."""

    d: int
    L: int
    m: int
    bc: str = "dirichlet"

    def __post_init__(self):
        if self.d not in (1, 2, 3):
            raise ConfigError(f"dimension must be 1, 2 or 3, got {self.d}")
        if self.L < 1 or int(self.L) != self.L:
            raise ConfigError(f"half-side L must be a positive integer, got {self.L}")
        if self.m < 1 or int(self.m) != self.m:
            raise ConfigError(f"resolution m must be a positive integer, got {self.m}")
        if self.bc not in BOUNDARY_CONDITIONS:
            raise ConfigError(
                f"bc must be one of {BOUNDARY_CONDITIONS}, got {self.bc!r}"
            )

    @property
    def h(self) -> float:
        return 1.0 / self.m

    @property
    def cells_per_side(self) -> int:
        return 2 * self.L * self.m

    @property
    def n_cells(self) -> int:
        return self.cells_per_side**self.d

    @property
    def cubes_per_side(self) -> int:
        return 2 * self.L

    @property
    def n_cubes(self) -> int:
        return self.cubes_per_side**self.d

    @property
    def volume(self) -> float:
        """|Lambda| = (2L)^d, also the number of unit cubes."""
        return float(self.n_cubes)

    @property
    def volume_element(self) -> float:
        return self.h**self.d

    def coordinates(self) -> np.ndarray:
        """Cell-center coordinates along one axis."""
        n = self.cells_per_side
        return -self.L + (np.arange(n) + 0.5) * self.h

    def cube_indices(self) -> list[tuple[int, ...]]:
        """Integer corners k of the unit cubes C_k = k + [0,1]^d, C-order."""
        r = range(-self.L, self.L)
        return list(itertools.product(r, repeat=self.d))

    def cube_of_cell(self) -> np.ndarray:
        """Flat cube index for every flat cell index (both C-order)."""
        n = self.cells_per_side
        axis_cube = np.arange(n) // self.m
        grids = np.meshgrid(*([axis_cube] * self.d), indexing="ij")
        flat = np.zeros(self.n_cells, dtype=np.int64)
        for g in grids:
            flat = flat * self.cubes_per_side + g.ravel()
        return flat

    def cube_cells(self, k: tuple[int, ...]) -> np.ndarray:
        """Flat indices of the m^d cells inside cube C_k."""
        k = tuple(int(q) for q in np.atleast_1d(np.asarray(k, dtype=int)))
        if len(k) != self.d:
            raise ConfigError(f"cube index {k} does not match dimension {self.d}")
        for q in k:
            if not -self.L <= q <= self.L - 1:
                raise ConfigError(f"cube index {k} outside the box (L={self.L})")
        n = self.cells_per_side
        axes = [np.arange((q + self.L) * self.m, (q + self.L + 1) * self.m) for q in k]
        grids = np.meshgrid(*axes, indexing="ij")
        flat = np.zeros(grids[0].size, dtype=np.int64)
        for g in grids:
            flat = flat * n + g.ravel()
        return flat

    def cube_flat_index(self, k: tuple[int, ...]) -> int:
        k = tuple(int(q) for q in np.atleast_1d(np.asarray(k, dtype=int)))
        flat = 0
        for q in k:
            if not -self.L <= q <= self.L - 1:
                raise ConfigError(f"cube index {k} outside the box (L={self.L})")
            flat = flat * self.cubes_per_side + (q + self.L)
        return flat


@dataclass(frozen=True, eq=False)
class SymmetricOperator:
    """Sparse symmetric matrix plus the domain metadata for inner products."""

    matrix: sp.csr_matrix
    domain: BoxDomain | None = None
    description: str = ""

    def __post_init__(self):
        mat = self.matrix
        if not sp.issparse(mat):
            mat = sp.csr_matrix(np.atleast_2d(np.asarray(mat, dtype=float)))
        mat = _mirror_upper(mat.tocsr())
        object.__setattr__(self, "matrix", mat)
        if mat.shape[0] != mat.shape[1]:
            raise ConfigError(f"operator must be square, got shape {mat.shape}")
        if self.domain is not None and mat.shape[0] != self.domain.n_cells:
            raise ConfigError(
                f"operator size {mat.shape[0]} does not match domain with "
                f"{self.domain.n_cells} cells"
            )

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def volume_element(self) -> float:
        return 1.0 if self.domain is None else self.domain.volume_element

    @functools.cached_property
    def dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def diagonal(self) -> np.ndarray:
        return self.matrix.diagonal()

    def discrete_trace(self) -> float:
        return float(self.volume_element * self.matrix.diagonal().sum())

    def apply(self, psi: np.ndarray) -> np.ndarray:
        return self.matrix @ psi


def _mirror_upper(mat: sp.csr_matrix) -> sp.csr_matrix:
    """Bit-exact symmetric copy: diagonal plus mirrored strict upper triangle."""
    upper = sp.triu(mat, k=1, format="csr")
    diag = sp.diags(mat.diagonal(), 0, shape=mat.shape, format="csr")
    return (diag + upper + upper.T).tocsr()


def _laplacian_1d(n: int, h: float, bc: str) -> sp.csr_matrix:
    main = np.full(n, 2.0)
    if bc == "neumann":
        main[0] = 1.0
        main[-1] = 1.0
    off = -np.ones(n - 1)
    mat = sp.diags([off, main, off], [-1, 0, 1], format="lil")
    if bc == "periodic":
        mat[0, n - 1] = mat[0, n - 1] - 1.0
        mat[n - 1, 0] = mat[n - 1, 0] - 1.0
    return (mat.tocsr() / h**2).tocsr()


def build_laplacian(domain: BoxDomain, max_size: int = DENSE_EIGENSOLVE_CAP) -> SymmetricOperator:
    """Discrete -Laplacian on the domain: (2d+1)-point stencil scaled by 1/h^2.

    Dirichlet eliminates exterior neighbors, Neumann reflects them (ghost point
    equal to the boundary cell), periodic wraps around.
    """
    if domain.n_cells > max_size:
        raise ConfigError(
            f"grid with N={domain.n_cells} cells exceeds the dense eigensolve "
            f"budget of {max_size}"
        )
    n = domain.cells_per_side
    one_d = _laplacian_1d(n, domain.h, domain.bc)
    eye = sp.identity(n, format="csr")
    total = None
    for axis in range(domain.d):
        factors = [one_d if ax == axis else eye for ax in range(domain.d)]
        term = factors[0]
        for f in factors[1:]:
            term = sp.kron(term, f, format="csr")
        total = term if total is None else total + term
    return SymmetricOperator(total.tocsr(), domain, description=f"laplacian_{domain.bc}")


@functools.lru_cache(maxsize=32)
def cached_laplacian(domain: BoxDomain) -> SymmetricOperator:
    return build_laplacian(domain)


@dataclass(frozen=True, eq=False)
class SingleSite:
    """Single-site potential profile u_0 sampled on the cells of C_0."""

    kappa: float
    profile: np.ndarray

    def __post_init__(self):
        prof = np.asarray(self.profile, dtype=float)
        object.__setattr__(self, "profile", prof)
        if not 0.0 < self.kappa <= 1.0:
            raise PreconditionError(f"kappa must lie in (0, 1], got {self.kappa}")
        sq = prof**2
        if sq.size == 0:
            raise PreconditionError("profile must be nonempty")
        if np.any(prof < 0):
            raise PreconditionError("profile values must be nonnegative")
        if np.any(sq > 1.0 + 1e-12):
            raise PreconditionError("profile squared must be bounded by 1")
        if np.any(sq < self.kappa - 1e-12):
            raise PreconditionError(
                "profile squared must dominate kappa on the whole cube"
            )

    @classmethod
    def characteristic(cls, kappa: float, domain: BoxDomain) -> "SingleSite":
        """Flat profile u_0 = sqrt(kappa) * chi_0, so u_0^2 = kappa * chi_0."""
        shape = (domain.m,) * domain.d
        return cls(kappa=kappa, profile=np.full(shape, np.sqrt(kappa)))

    def squared_cell_values(self, domain: BoxDomain) -> np.ndarray:
        """u^2 on every grid cell, the profile tiled over all cubes, flat C-order."""
        shape = (domain.m,) * domain.d
        if self.profile.shape != shape:
            raise ConfigError(
                f"profile shape {self.profile.shape} does not match one cube "
                f"({shape}) of the domain"
            )
        tiled = np.tile(self.profile**2, (domain.cubes_per_side,) * domain.d)
        return tiled.ravel()


@dataclass(frozen=True, eq=False)
class TabulatedDensity:
    """Bounded probability density given by samples on a uniform grid."""

    support: tuple[float, float]
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", vals)
        lo, hi = self.support
        if not (np.isfinite(lo) and np.isfinite(hi) and hi > lo):
            raise ConfigError(f"invalid density support {self.support}")
        if lo < 0:
            raise ConfigError("couplings must be nonnegative; support starts below 0")
        if vals.ndim != 1 or vals.size < 2 or np.any(vals < 0) or vals.max() <= 0:
            raise ConfigError("density table must be a nonnegative 1-d array")

    @functools.cached_property
    def _grid(self) -> tuple[np.ndarray, np.ndarray, float]:
        lo, hi = self.support
        x = np.linspace(lo, hi, self.values.size)
        cdf = np.concatenate([[0.0], np.cumsum((self.values[1:] + self.values[:-1]) / 2)])
        cdf *= (hi - lo) / (self.values.size - 1)
        norm = cdf[-1]
        return x, cdf / norm, norm

    @property
    def sup_density(self) -> float:
        _, _, norm = self._grid
        return float(self.values.max() / norm)

    def ppf(self, q: np.ndarray) -> np.ndarray:
        """Inverse CDF, applied to uniform [0,1) draws."""
        x, cdf, _ = self._grid
        return np.interp(q, cdf, x)


@dataclass(frozen=True, eq=False)
class DisorderRealization:
    """One draw of the coupling vector (omega_k), flat C-order over cubes."""

    omegas: np.ndarray
    master_seed: int
    realization_index: int

    def omega_of(self, domain: BoxDomain, k: tuple[int, ...]) -> float:
        return float(self.omegas[domain.cube_flat_index(k)])

    def to_rows(self, domain: BoxDomain) -> list[tuple]:
        keys = domain.cube_indices()
        return [tuple(k) + (float(w),) for k, w in zip(keys, self.omegas)]


def sample_disorder(
    dist,
    domain: BoxDomain,
    master_seed: int,
    realization_index: int,
) -> DisorderRealization:
    """Draw the coupling vector for one realization.

    dist is "uniform" or a TabulatedDensity. Values depend only on
    (master_seed, realization_index, site), never on call order.
    """
    base = kernels.disorder_matrix(master_seed, realization_index, 1, domain.n_cubes)[0]
    if dist == "uniform":
        omegas = base
    elif isinstance(dist, TabulatedDensity):
        omegas = dist.ppf(base)
    else:
        raise ConfigError(f"unknown coupling distribution {dist!r}")
    return DisorderRealization(
        omegas=omegas, master_seed=int(master_seed), realization_index=int(realization_index)
    )


def build_potential(
    domain: BoxDomain, site: SingleSite, realization: DisorderRealization
) -> SymmetricOperator:
    """Diagonal alloy potential V = sum_k omega_k u_k^2 as an operator."""
    if realization.omegas.shape != (domain.n_cubes,):
        raise ConfigError(
            f"realization has {realization.omegas.shape[0]} couplings, domain has "
            f"{domain.n_cubes} cubes"
        )
    if np.any(realization.omegas < 0):
        raise PreconditionError("couplings must be nonnegative")
    diag = realization.omegas[domain.cube_of_cell()] * site.squared_cell_values(domain)
    mat = sp.diags(diag, 0, format="csr")
    return SymmetricOperator(mat, domain, description="alloy_potential")


def assemble_operator(
    domain: BoxDomain, site: SingleSite, realization: DisorderRealization
) -> SymmetricOperator:
    """H = -Laplacian + V for one realization."""
    lap = cached_laplacian(domain)
    pot = build_potential(domain, site, realization)
    return SymmetricOperator(
        lap.matrix + pot.matrix, domain, description="schrodinger"
    )


@dataclass(frozen=True, eq=False)
class OperatorFamily:
    """One-parameter family H(omega) = base + omega * diag(u2)."""

    base: np.ndarray
    u2: np.ndarray
    volume_element: float = 1.0
    description: str = ""

    def __post_init__(self):
        base = np.asarray(self.base, dtype=float)
        u2 = np.asarray(self.u2, dtype=float).ravel()
        if base.ndim != 2 or base.shape[0] != base.shape[1]:
            raise ConfigError("family base must be a square matrix")
        if u2.shape[0] != base.shape[0]:
            raise ConfigError("u2 length does not match the base operator")
        if np.any(u2 < 0):
            raise PreconditionError("u2 must be entrywise nonnegative")
        object.__setattr__(self, "base", base)
        object.__setattr__(self, "u2", u2)

    @property
    def n(self) -> int:
        return self.base.shape[0]

    @property
    def u(self) -> np.ndarray:
        return np.sqrt(self.u2)

    @functools.cached_property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.u2 > SUPPORT_FLOOR**2)

    def operator_at(self, omega: float) -> np.ndarray:
        out = self.base.copy()
        idx = np.diag_indices(self.n)
        out[idx] += omega * self.u2
        return out


def assemble_family(
    h0,
    u2,
    *,
    domain: BoxDomain | None = None,
    site: SingleSite | None = None,
    overrides: dict | None = None,
    description: str = "",
) -> OperatorFamily:
    """Family H(omega) = H_0 + sum_k pinned omega_k u_k^2 + omega * diag(u2).

    h0 may be a SymmetricOperator or a dense array; overrides maps cube indices
    to pinned coupling values folded into the base once.
    """
    if isinstance(h0, SymmetricOperator):
        base = h0.dense.copy()
        ve = h0.volume_element
        dom = h0.domain if domain is None else domain
    else:
        base = np.array(h0, dtype=float)
        ve = 1.0 if domain is None else domain.volume_element
        dom = domain
    if isinstance(u2, SymmetricOperator):
        u2 = u2.diagonal()
    u2 = np.asarray(u2, dtype=float).ravel()
    if overrides:
        if dom is None or site is None:
            raise ConfigError("overrides need a domain and a single-site profile")
        cell_u2 = site.squared_cell_values(dom)
        for k, value in overrides.items():
            if value < 0:
                raise PreconditionError(f"pinned coupling for cube {k} is negative")
            cells = dom.cube_cells(k)
            base[cells, cells] += value * cell_u2[cells]
    return OperatorFamily(base=base, u2=u2, volume_element=ve, description=description)


def single_site_family(
    domain: BoxDomain,
    site: SingleSite,
    realization: DisorderRealization,
    k: tuple[int, ...],
) -> OperatorFamily:
    """Family in the coupling of cube k, all other couplings pinned at the draw."""
    lap = cached_laplacian(domain)
    cell_u2 = site.squared_cell_values(domain)
    cube_of_cell = domain.cube_of_cell()
    k_flat = domain.cube_flat_index(k)
    pinned = realization.omegas.copy()
    pinned[k_flat] = 0.0
    diag = pinned[cube_of_cell] * cell_u2
    base = lap.dense + np.diag(diag)
    u2 = np.where(cube_of_cell == k_flat, cell_u2, 0.0)
    return OperatorFamily(
        base=base,
        u2=u2,
        volume_element=domain.volume_element,
        description=f"site_family_k={k}",
    )
