"""Density-of-states statistics with explicit constants.

The constants come in two flavors everywhere: the continuum form, built from
the levels (n pi)^2 of the unit cube, and the discrete form, built from the
levels of the m-point cube operator actually present in the model. Discrete
levels sit below their continuum counterparts, so the discrete constants are
never smaller and are the ones a finite-grid run must satisfy; the continuum
constants become binding as the grid refines.

Monte Carlo checks allow three standard errors of slack on top of each bound.
The sampling engine is deterministic in (master_seed, realization index) and
chunked so that results are independent of the worker count.
"""

from __future__ import annotations

import functools
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from math import sqrt

import numpy as np

from . import kernels
from .cube_basis import continuum_level_1d, discrete_level_1d
from .errors import ConfigError, PreconditionError
from .operator import (
    BoxDomain,
    SingleSite,
    TabulatedDensity,
    cached_laplacian,
)
from .report import VerificationReport, bound_report
from .spectral import EnergyInterval, _as_interval

MC_CHUNK = 64
MC_SIGMA_SLACK = 3.0


# ---------------------------------------------------------------------------
# constants


def _level_one(d: int, m: int | None) -> float:
    """Lowest nonzero cube level: (pi)^2 in the continuum, its m-point analogue else."""
    if d not in (1, 2, 3):
        raise ConfigError(f"dimension must be 1, 2, or 3, got {d}")
    if m is None:
        return continuum_level_1d(1)
    return discrete_level_1d(m, 1)


def threshold_energy(d: int, *, m: int | None = None) -> float:
    """Largest b for which the trace-bound coefficient stays positive.

    Solves 1 - b/lambda_1 - (d+4b)/(2d) = 0; with continuum levels this is
    pi^2 d / (2 (2 pi^2 + d)), strictly below pi^2/2 and increasing in d.
    """
    lam = _level_one(d, m)
    return 0.5 / (1.0 / lam + 2.0 / d)


def trace_constant(b: float, d: int, *, m: int | None = None) -> float:
    """Prefactor c(b,d) = (1 - b/lambda_1 - (d+4b)/(2d))^-1 of the trace bound."""
    lam = _level_one(d, m)
    coeff = 1.0 - b / lam - (d + 4.0 * b) / (2.0 * d)
    if coeff <= 0:
        raise PreconditionError(
            f"trace-term coefficient 1 - b/lambda - (d+4b)/(2d) = {coeff:.6f} is "
            f"not positive at b={b!r}; need b < {threshold_energy(d, m=m):.6f}"
        )
    return 1.0 / coeff


def wegner_constant(
    energy: float,
    *,
    n: int = 0,
    kappa: float = 1.0,
    rho_sup: float = 1.0,
    m: int | None = None,
) -> float:
    """Eigenvalue-count prefactor (n+1) rho / (kappa (1 - E/lambda_{n+1}))."""
    if n < 0:
        raise ConfigError(f"mode cutoff must be nonnegative, got {n}")
    if not 0 < kappa <= 1:
        raise ConfigError(f"kappa must lie in (0, 1], got {kappa}")
    if rho_sup <= 0:
        raise ConfigError(f"density bound must be positive, got {rho_sup}")
    if m is None:
        lam = continuum_level_1d(n + 1)
    else:
        if not 0 <= n < m:
            raise PreconditionError(f"mode cutoff n={n} needs n < m={m}")
        lam = discrete_level_1d(m, n + 1)
    if energy >= lam:
        raise PreconditionError(
            f"energy {energy!r} must lie below the cutoff level {lam:.6f}"
        )
    return (n + 1) * rho_sup / (kappa * (1.0 - energy / lam))


def lipschitz_constant(
    e2: float, d: int, *, kappa: float = 1.0, m: int | None = None
) -> float:
    """Volume-proportional rate K_1 = c(E2, d) / kappa^2."""
    if not 0 < kappa <= 1:
        raise ConfigError(f"kappa must lie in (0, 1], got {kappa}")
    return trace_constant(e2, d, m=m) / kappa**2


@dataclass(frozen=True)
class ConstantSet:
    """The four explicit constants, evaluated for one level flavor."""

    d: int
    b: float
    energy: float
    n: int
    kappa: float
    rho_sup: float
    m: int | None
    e0: float
    c_bd: float
    c_w: float
    k1: float

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "b": self.b,
            "energy": self.energy,
            "n": self.n,
            "kappa": self.kappa,
            "rho_sup": self.rho_sup,
            "m": self.m,
            "E0": self.e0,
            "c_bd": self.c_bd,
            "C_W": self.c_w,
            "K1": self.k1,
        }


def compute_constants(
    d: int,
    b: float,
    energy: float,
    n: int = 0,
    kappa: float = 1.0,
    rho_sup: float = 1.0,
    *,
    m: int | None = None,
) -> ConstantSet:
    """Evaluate E0, c(b,d), the count prefactor at `energy`, and K1 = c/kappa^2."""
    c_bd = trace_constant(b, d, m=m)
    return ConstantSet(
        d=d,
        b=float(b),
        energy=float(energy),
        n=int(n),
        kappa=float(kappa),
        rho_sup=float(rho_sup),
        m=m,
        e0=threshold_energy(d, m=m),
        c_bd=c_bd,
        c_w=wegner_constant(energy, n=n, kappa=kappa, rho_sup=rho_sup, m=m),
        k1=c_bd / kappa**2,
    )


# ---------------------------------------------------------------------------
# sampling engine


def resolve_workers(workers: int | None = None) -> int:
    """Worker count: explicit argument, else SPECLAB_WORKERS, else cpu count."""
    if workers is None:
        env = os.environ.get("SPECLAB_WORKERS", "").strip()
        if env:
            try:
                workers = int(env)
            except ValueError:
                raise ConfigError(f"SPECLAB_WORKERS must be an integer, got {env!r}")
        else:
            workers = os.cpu_count() or 1
    if workers < 1:
        raise ConfigError(f"worker count must be positive, got {workers}")
    return min(int(workers), 32)


@dataclass(frozen=True, eq=False)
class Ensemble:
    """A box, a single-site profile, and a coupling distribution to draw from."""

    domain: BoxDomain
    site: SingleSite
    dist: object = "uniform"
    master_seed: int = 0

    def __post_init__(self):
        if self.dist != "uniform" and not isinstance(self.dist, TabulatedDensity):
            raise ConfigError(f"unknown coupling distribution {self.dist!r}")

    @functools.cached_property
    def base_matrix(self) -> np.ndarray:
        return cached_laplacian(self.domain).dense

    @functools.cached_property
    def cell_u2(self) -> np.ndarray:
        return self.site.squared_cell_values(self.domain)

    @functools.cached_property
    def cube_of_cell(self) -> np.ndarray:
        return self.domain.cube_of_cell()

    @property
    def rho_sup(self) -> float:
        return 1.0 if self.dist == "uniform" else self.dist.sup_density

    @property
    def volume(self) -> float:
        return self.domain.volume

    def metadata(self, n_samples: int, epsilon: float | None = None) -> dict:
        out = {
            "master_seed": int(self.master_seed),
            "n_samples": int(n_samples),
            "m": self.domain.m,
            "d": self.domain.d,
            "L": self.domain.L,
            "bc": self.domain.bc,
        }
        if epsilon is not None:
            out["epsilon"] = float(epsilon)
        return out

    def draw_omegas(
        self, n_samples: int, *, first_index: int = 0, override=None
    ) -> np.ndarray:
        """Coupling matrix (n_samples, n_cubes), row r = realization first_index+r.

        override = (flat cube index, value) pins one coupling after the draw, so
        the complementary couplings stay paired across different pinned values.
        """
        base = kernels.disorder_matrix(
            self.master_seed, first_index, n_samples, self.domain.n_cubes
        )
        omegas = base if self.dist == "uniform" else self.dist.ppf(base)
        if override is not None:
            k_flat, value = override
            if value < 0:
                raise PreconditionError("pinned coupling must be nonnegative")
            omegas = omegas.copy()
            omegas[:, int(k_flat)] = float(value)
        return omegas

    def spectra_for_omegas(
        self, omegas: np.ndarray, *, workers: int | None = None
    ) -> np.ndarray:
        """Sorted eigenvalues (n_samples, N) for explicit coupling rows."""
        omegas = np.asarray(omegas, dtype=float)
        if omegas.ndim != 2 or omegas.shape[1] != self.domain.n_cubes:
            raise ConfigError(
                f"coupling matrix must be (r, {self.domain.n_cubes}), got {omegas.shape}"
            )
        diags = omegas[:, self.cube_of_cell] * self.cell_u2[None, :]
        n_workers = resolve_workers(workers)
        chunks = [
            (lo, min(lo + MC_CHUNK, len(diags)))
            for lo in range(0, len(diags), MC_CHUNK)
        ]
        out = np.empty((len(diags), self.domain.n_cells))
        if n_workers == 1 or len(chunks) == 1:
            for lo, hi in chunks:
                out[lo:hi] = kernels.batch_eigvalsh(self.base_matrix, diags[lo:hi])
        else:
            with ThreadPoolExecutor(max_workers=n_workers) as pool:
                futures = {
                    pool.submit(
                        kernels.batch_eigvalsh, self.base_matrix, diags[lo:hi]
                    ): (lo, hi)
                    for lo, hi in chunks
                }
                for fut, (lo, hi) in futures.items():
                    out[lo:hi] = fut.result()
        return out

    def sample_spectra(
        self,
        n_samples: int,
        *,
        first_index: int = 0,
        override=None,
        workers: int | None = None,
    ) -> np.ndarray:
        if n_samples < 1:
            raise ConfigError(f"sample count must be positive, got {n_samples}")
        return self.spectra_for_omegas(
            self.draw_omegas(n_samples, first_index=first_index, override=override),
            workers=workers,
        )


def interval_counts(
    spectra: np.ndarray, interval, *, closed: bool = True
) -> np.ndarray:
    """Per-realization eigenvalue counts in I, closed [a,b] or half-open (a,b]."""
    iv = _as_interval(interval)
    tol = iv.tie_tol
    if closed:
        mask = (spectra >= iv.a - tol) & (spectra <= iv.b + tol)
    else:
        mask = (spectra > iv.a + tol) & (spectra <= iv.b + tol)
    return mask.sum(axis=1)


def _mean_sigma(values: np.ndarray) -> tuple[float, float]:
    mean = float(values.mean())
    if len(values) < 2:
        return mean, 0.0
    return mean, float(values.std(ddof=1) / sqrt(len(values)))


# ---------------------------------------------------------------------------
# estimators and checks


@dataclass(frozen=True)
class McMeasure:
    """Monte Carlo estimate of the averaged eigenvalue count per unit volume."""

    interval: EnergyInterval
    value: float
    std_error: float
    n_samples: int
    metadata: dict

    def to_dict(self) -> dict:
        return {
            "a": self.interval.a,
            "b": self.interval.b,
            "value": self.value,
            "std_error": self.std_error,
            **self.metadata,
        }


def mc_ldos_measure(
    ensemble: Ensemble,
    interval,
    n_samples: int,
    *,
    workers: int | None = None,
    spectra: np.ndarray | None = None,
) -> McMeasure:
    """Estimate of the count measure of I per unit volume, with standard error."""
    iv = _as_interval(interval)
    if spectra is None:
        spectra = ensemble.sample_spectra(n_samples, workers=workers)
    counts = interval_counts(spectra, iv, closed=True)
    mean, sigma = _mean_sigma(counts)
    vol = ensemble.volume
    return McMeasure(
        interval=iv,
        value=mean / vol,
        std_error=sigma / vol,
        n_samples=int(n_samples),
        metadata=ensemble.metadata(n_samples),
    )


@dataclass(frozen=True)
class DosEstimate:
    """Finite-width local density of states on an energy grid."""

    e_grid: np.ndarray
    epsilon: float
    values: np.ndarray
    std_errors: np.ndarray
    n_samples: int
    metadata: dict

    def to_rows(self) -> list[tuple]:
        return [
            (float(e), self.epsilon, float(v), float(s))
            for e, v, s in zip(self.e_grid, self.values, self.std_errors)
        ]


def ldos_function(
    ensemble: Ensemble,
    e_grid,
    epsilon: float,
    n_samples: int,
    *,
    workers: int | None = None,
    spectra: np.ndarray | None = None,
) -> DosEstimate:
    """Smoothed density values E{count (E, E+eps]} / (eps |Lambda|) on a grid.

    Reported at the finite width actually used; the width-zero limit is only
    probed through ladder comparisons, never claimed.
    """
    if epsilon <= 0:
        raise ConfigError(f"window width must be positive, got {epsilon}")
    e_grid = np.atleast_1d(np.asarray(e_grid, dtype=float))
    if spectra is None:
        spectra = ensemble.sample_spectra(n_samples, workers=workers)
    scale = epsilon * ensemble.volume
    values = np.empty(e_grid.size)
    sigmas = np.empty(e_grid.size)
    for i, e in enumerate(e_grid):
        counts = interval_counts(spectra, (e, e + epsilon), closed=False)
        mean, sigma = _mean_sigma(counts)
        values[i] = mean / scale
        sigmas[i] = sigma / scale
    return DosEstimate(
        e_grid=e_grid,
        epsilon=float(epsilon),
        values=values,
        std_errors=sigmas,
        n_samples=int(n_samples),
        metadata=ensemble.metadata(n_samples, epsilon),
    )


def _variant_m(ensemble: Ensemble, variant: str) -> int | None:
    if variant == "continuum":
        return None
    if variant == "discrete":
        return ensemble.domain.m
    raise ConfigError(f"variant must be 'continuum' or 'discrete', got {variant!r}")


def wegner_check(
    ensemble: Ensemble,
    interval,
    n: int,
    n_samples: int,
    *,
    variant: str = "discrete",
    workers: int | None = None,
    spectra: np.ndarray | None = None,
) -> VerificationReport:
    """Averaged count of I against the explicit constant times |I| |Lambda|."""
    iv = _as_interval(interval)
    m = _variant_m(ensemble, variant)
    c_w = wegner_constant(
        iv.b,
        n=n,
        kappa=ensemble.site.kappa,
        rho_sup=ensemble.rho_sup,
        m=m,
    )
    if spectra is None:
        spectra = ensemble.sample_spectra(n_samples, workers=workers)
    counts = interval_counts(spectra, iv, closed=True)
    mean, sigma = _mean_sigma(counts)
    return bound_report(
        "wegner_count_bound",
        mean,
        c_w * iv.width * ensemble.volume,
        slack=MC_SIGMA_SLACK * sigma,
        variant=variant,
        a=iv.a,
        b=iv.b,
        n=n,
        c_w=c_w,
        sigma=sigma,
        **ensemble.metadata(n_samples),
    )


def lipschitz_check(
    ensemble: Ensemble,
    e1: float,
    e2: float,
    epsilon: float,
    n_samples: int,
    *,
    variant: str = "continuum",
    workers: int | None = None,
    spectra: np.ndarray | None = None,
) -> VerificationReport:
    """Smoothed-density increment against min of the count and rate bounds.

    The rate bound K1 |Lambda| (E2-E1) carries the volume factor; nothing here
    is claimed uniformly in the volume. Differences are taken realization by
    realization, so the standard error is that of the paired difference.
    """
    if epsilon <= 0:
        raise ConfigError(f"window width must be positive, got {epsilon}")
    d = ensemble.domain.d
    m = _variant_m(ensemble, variant)
    e0 = threshold_energy(d, m=m)
    if not 0 <= e1 < e2:
        raise PreconditionError(f"need 0 <= E1 < E2, got E1={e1!r}, E2={e2!r}")
    if e2 >= e0:
        raise PreconditionError(
            f"E2={e2!r} must lie below the threshold energy {e0:.6f} ({variant})"
        )
    kappa = ensemble.site.kappa
    c_w = wegner_constant(
        e2 + epsilon, n=0, kappa=kappa, rho_sup=ensemble.rho_sup, m=m
    )
    k1 = lipschitz_constant(e2, d, kappa=kappa, m=m)
    if spectra is None:
        spectra = ensemble.sample_spectra(n_samples, workers=workers)
    scale = epsilon * ensemble.volume
    diffs = (
        interval_counts(spectra, (e2, e2 + epsilon), closed=False)
        - interval_counts(spectra, (e1, e1 + epsilon), closed=False)
    ) / scale
    mean, sigma = _mean_sigma(diffs)
    rhs = min(c_w, k1 * ensemble.volume * (e2 - e1))
    return bound_report(
        "lipschitz_density_bound",
        abs(mean),
        rhs,
        slack=MC_SIGMA_SLACK * sigma,
        variant=variant,
        e1=e1,
        e2=e2,
        c_w=c_w,
        k1=k1,
        sigma=sigma,
        **ensemble.metadata(n_samples, epsilon),
    )


def fixed_site_wegner(
    ensemble: Ensemble,
    k: tuple[int, ...],
    tau: float,
    interval,
    n_samples: int,
    *,
    variant: str = "continuum",
    workers: int | None = None,
) -> VerificationReport:
    """Averaged count with one coupling pinned at tau, against c(b,d)/kappa^2.

    The average runs only over the complementary couplings; the bound is
    uniform in the pinned value.
    """
    iv = _as_interval(interval)
    dom = ensemble.domain
    if dom.bc != "dirichlet":
        raise PreconditionError("fixed-site bound requires Dirichlet conditions")
    if tau < 0:
        raise PreconditionError(f"pinned coupling must be nonnegative, got {tau}")
    m = _variant_m(ensemble, variant)
    c = trace_constant(iv.b, dom.d, m=m)
    kappa = ensemble.site.kappa
    k_flat = dom.cube_flat_index(k)
    spectra = ensemble.sample_spectra(
        n_samples, override=(k_flat, tau), workers=workers
    )
    counts = interval_counts(spectra, iv, closed=True)
    mean, sigma = _mean_sigma(counts)
    return bound_report(
        "fixed_site_count_bound",
        mean,
        c / kappa**2 * ensemble.volume * iv.width,
        slack=MC_SIGMA_SLACK * sigma,
        variant=variant,
        site=str(tuple(k)),
        tau=tau,
        a=iv.a,
        b=iv.b,
        c_bd=c,
        sigma=sigma,
        **ensemble.metadata(n_samples),
    )


def fixed_site_shift_chain(
    ensemble: Ensemble,
    k: tuple[int, ...],
    e1: float,
    e2: float,
    n_samples: int,
    *,
    variant: str = "continuum",
    workers: int | None = None,
) -> VerificationReport:
    """Averaged count drop when the pinned coupling moves 0 -> 1.

    The drop is a shift-function average over the complementary couplings and
    is bounded by c(E2,d)/kappa^2 times |Lambda| (E2-E1); both ensembles share
    realizations, so the statistic is paired.
    """
    dom = ensemble.domain
    if dom.bc != "dirichlet":
        raise PreconditionError("fixed-site bound requires Dirichlet conditions")
    if not 0 <= e1 < e2:
        raise PreconditionError(f"need 0 <= E1 < E2, got E1={e1!r}, E2={e2!r}")
    m = _variant_m(ensemble, variant)
    c = trace_constant(e2, dom.d, m=m)
    kappa = ensemble.site.kappa
    k_flat = dom.cube_flat_index(k)
    omegas = ensemble.draw_omegas(n_samples)
    lo = omegas.copy()
    lo[:, k_flat] = 0.0
    hi = omegas.copy()
    hi[:, k_flat] = 1.0
    counts_lo = interval_counts(
        ensemble.spectra_for_omegas(lo, workers=workers), (e1, e2), closed=True
    )
    counts_hi = interval_counts(
        ensemble.spectra_for_omegas(hi, workers=workers), (e1, e2), closed=True
    )
    diffs = counts_lo - counts_hi
    mean, sigma = _mean_sigma(diffs.astype(float))
    return bound_report(
        "fixed_site_shift_chain",
        mean,
        c / kappa**2 * ensemble.volume * (e2 - e1),
        slack=MC_SIGMA_SLACK * sigma,
        variant=variant,
        site=str(tuple(k)),
        e1=e1,
        e2=e2,
        c_bd=c,
        sigma=sigma,
        **ensemble.metadata(n_samples),
    )
