"""Averaged spectral projections over coupling windows.

Both evaluation routes split the integration range at every discontinuity
before applying Gauss-Legendre panels: the integrands are analytic between
branch crossings, so panel quadrature converges at machine precision and the
two routes can be compared at tight tolerance.
"""

from __future__ import annotations

import functools
import logging
from math import sqrt

import numpy as np
from scipy.special import roots_legendre

from .errors import PreconditionError, UnstableEvaluationError
from .operator import OperatorFamily
from .spectral import (
    BranchTrace,
    _as_dense,
    _as_interval,
    all_crossings,
    birman_schwinger_crossings,
    eigendecompose,
    window_trace,
)

logger = logging.getLogger(__name__)

DEFAULT_NODES_PER_PANEL = 16
# Quadrature nodes are pushed this far (times the spectral scale) off poles.
# Must stay above the crossing-kernel distance floor so shifted nodes evaluate.
NODE_GUARD = 1e-7


@functools.lru_cache(maxsize=8)
def _legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = roots_legendre(n)
    return x, w


def _panel_nodes(a: float, b: float, n: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = _legendre(n)
    mid = 0.5 * (a + b)
    half = 0.5 * (b - a)
    return mid + half * x, half * w


def _merge_breaks(lo: float, hi: float, inner, scale: float) -> np.ndarray:
    """Sorted panel edges [lo, inner..., hi] with near-duplicates dropped."""
    tol = 1e-12 * max(1.0, scale)
    pts = [lo]
    for x in sorted(float(v) for v in inner):
        if lo + tol < x < hi - tol and x - pts[-1] > tol:
            pts.append(x)
    pts.append(hi)
    return np.asarray(pts)


def _guard_nodes(xs: np.ndarray, poles: np.ndarray, lo: float, hi: float, scale: float) -> np.ndarray:
    """Shift quadrature nodes off spectrum poles; error only if boxed in."""
    if poles.size == 0:
        return xs
    guard = NODE_GUARD * max(1.0, scale)
    out = xs.copy()
    for i, x in enumerate(out):
        dist = np.abs(poles - x)
        j = int(np.argmin(dist))
        if dist[j] < guard:
            pole = poles[j]
            shifted = pole + guard if x >= pole else pole - guard
            if not lo < shifted < hi or np.abs(poles - shifted).min() < 0.5 * guard:
                raise PreconditionError(
                    f"cannot keep a quadrature node away from the spectrum point "
                    f"{pole!r} inside panel [{lo!r}, {hi!r}]"
                )
            logger.warning(
                "quadrature node %r shifted to %r away from spectrum point %r",
                x, shifted, pole,
            )
            out[i] = shifted
    return out


def _check_family(family: OperatorFamily) -> None:
    if family.u2.max(initial=0.0) > 1.0 + 1e-12:
        raise PreconditionError("family perturbation must satisfy ||u^2|| <= 1")
    if family.support.size == 0:
        raise PreconditionError("family perturbation has empty support")


def _phi_hat(family_or_ve, phi: np.ndarray) -> np.ndarray:
    """Euclidean representative of a discrete-normalized grid function."""
    ve = (
        family_or_ve
        if isinstance(family_or_ve, float)
        else family_or_ve.volume_element
    )
    phi = np.asarray(phi, dtype=float).ravel()
    phi_hat = phi * sqrt(ve)
    norm = float(phi_hat @ phi_hat)
    if abs(norm - 1.0) > 1e-8:
        raise PreconditionError(
            f"phi must be normalized in the discrete inner product, got ||phi||^2={norm!r}"
        )
    return phi_hat


def support_mass(u: np.ndarray, phi: np.ndarray, volume_element: float = 1.0) -> float:
    """||phi||^2 restricted to the support of u, discrete inner product."""
    u = np.asarray(u, dtype=float).ravel()
    phi = np.asarray(phi, dtype=float).ravel()
    mask = u > 1e-14
    return float(volume_element * (phi[mask] @ phi[mask]))


def spectral_average(
    family: OperatorFamily,
    phi: np.ndarray,
    interval,
    tau1: float,
    tau2: float,
    *,
    nodes_per_panel: int = DEFAULT_NODES_PER_PANEL,
    trace: BranchTrace | None = None,
) -> float:
    """Integral over [tau1, tau2] of <phi, u P_omega(I) u phi> d omega.

    The integrand jumps exactly where a branch crosses an endpoint of I, so the
    window is split at every such crossing before panel quadrature. The value
    is bounded by |I| times the support mass of phi regardless of window size.
    """
    iv = _as_interval(interval)
    if not tau2 > tau1:
        raise PreconditionError(f"need tau1 < tau2, got [{tau1}, {tau2}]")
    _check_family(family)
    phi_hat = _phi_hat(family, phi)
    if trace is None:
        trace = window_trace(family, tau1, tau2)
    cuts = []
    for level in (iv.a, iv.b):
        for rec in all_crossings(family, level, tau1, tau2, trace=trace):
            cuts.append(rec.omega)
    scale = max(abs(tau1), abs(tau2), 1.0)
    breaks = _merge_breaks(tau1, tau2, cuts, scale)
    u_phi = family.u * phi_hat
    total = 0.0
    for lo, hi in zip(breaks[:-1], breaks[1:]):
        xs, ws = _panel_nodes(lo, hi, nodes_per_panel)
        for x, w in zip(xs, ws):
            sd = eigendecompose(
                family.operator_at(x), volume_element=family.volume_element
            )
            mask = iv.contains(sd.eigenvalues)
            if np.any(mask):
                coeff = sd.vectors[:, mask].T @ u_phi
                total += w * float(coeff @ coeff)
    return total


def trace_average(
    family: OperatorFamily,
    interval,
    tau1: float,
    tau2: float,
    *,
    nodes_per_panel: int = DEFAULT_NODES_PER_PANEL,
    trace: BranchTrace | None = None,
) -> float:
    """Integral over [tau1, tau2] of Tr(u P_omega(I) u) d omega.

    Same panel structure as spectral_average; the summand per eigenvalue in I
    is the squared norm of u against the eigenvector instead of a single
    matrix element.
    """
    iv = _as_interval(interval)
    if not tau2 > tau1:
        raise PreconditionError(f"need tau1 < tau2, got [{tau1}, {tau2}]")
    _check_family(family)
    if trace is None:
        trace = window_trace(family, tau1, tau2)
    cuts = []
    for level in (iv.a, iv.b):
        for rec in all_crossings(family, level, tau1, tau2, trace=trace):
            cuts.append(rec.omega)
    scale = max(abs(tau1), abs(tau2), 1.0)
    breaks = _merge_breaks(tau1, tau2, cuts, scale)
    total = 0.0
    for lo, hi in zip(breaks[:-1], breaks[1:]):
        xs, ws = _panel_nodes(lo, hi, nodes_per_panel)
        for x, w in zip(xs, ws):
            sd = eigendecompose(
                family.operator_at(x), volume_element=family.volume_element
            )
            mask = iv.contains(sd.eigenvalues)
            if np.any(mask):
                weighted = family.u[:, None] * sd.vectors[:, mask]
                total += w * float(np.sum(weighted * weighted))
    return total


def spectral_average_energy_route(
    family: OperatorFamily,
    phi: np.ndarray,
    interval,
    tau1: float,
    tau2: float,
    *,
    nodes_per_panel: int = DEFAULT_NODES_PER_PANEL,
) -> float:
    """Same integral, evaluated in the energy variable.

    Change of variables along each branch turns the window integral into
    int_I sum_j f_j(E) dE over branches currently inside the coupling window;
    the integrand jumps only at spectrum values of the two window-edge
    operators, and the per-energy data comes from the crossing kernel.
    """
    iv = _as_interval(interval)
    if not tau2 > tau1:
        raise PreconditionError(f"need tau1 < tau2, got [{tau1}, {tau2}]")
    _check_family(family)
    _phi_hat(family, phi)
    base = family.base
    ve = family.volume_element
    evals0 = np.linalg.eigvalsh(base)
    edge1 = np.linalg.eigvalsh(family.operator_at(tau1))
    edge2 = np.linalg.eigvalsh(family.operator_at(tau2))
    scale = max(1.0, float(np.abs(evals0).max()), abs(iv.a), abs(iv.b))
    inner = np.concatenate([evals0, edge1, edge2])
    inner = inner[(inner > iv.a) & (inner < iv.b)]
    breaks = _merge_breaks(iv.a, iv.b, inner, scale)
    total = 0.0
    for lo, hi in zip(breaks[:-1], breaks[1:]):
        xs, ws = _panel_nodes(lo, hi, nodes_per_panel)
        xs = _guard_nodes(xs, evals0, lo, hi, scale)
        for x, w in zip(xs, ws):
            bs = birman_schwinger_crossings(
                base, family.u, x, volume_element=ve, h0_eigenvalues=evals0
            )
            total += w * bs.window_weight(phi, tau1, tau2)
    return total


def spectral_average_full_line(
    h0,
    u: np.ndarray,
    phi: np.ndarray,
    interval,
    *,
    volume_element: float | None = None,
    nodes_per_panel: int = DEFAULT_NODES_PER_PANEL,
) -> float:
    """Full-line coupling average of <phi, u P_omega(I) u phi>.

    Every energy in I is crossed exactly once by each branch as omega sweeps
    the line, so the change-of-variables form needs no truncation; the crossing
    weights at each energy node sum over a complete eigenprojection family.
    """
    iv = _as_interval(interval)
    a_mat, ve = _as_dense(h0, volume_element)
    u = np.asarray(u, dtype=float).ravel()
    if np.any(u < 0):
        raise PreconditionError("u must be entrywise nonnegative")
    if (u**2).max(initial=0.0) > 1.0 + 1e-12:
        raise PreconditionError("u must satisfy ||u^2|| <= 1")
    if not np.any(u > 1e-14):
        raise PreconditionError("u has empty support")
    _phi_hat(ve, phi)
    evals0 = np.linalg.eigvalsh(a_mat)
    scale = max(1.0, float(np.abs(evals0).max()), abs(iv.a), abs(iv.b))
    inner = evals0[(evals0 > iv.a) & (evals0 < iv.b)]
    breaks = _merge_breaks(iv.a, iv.b, inner, scale)
    total = 0.0
    for lo, hi in zip(breaks[:-1], breaks[1:]):
        xs, ws = _panel_nodes(lo, hi, nodes_per_panel)
        xs = _guard_nodes(xs, evals0, lo, hi, scale)
        for x, w in zip(xs, ws):
            bs = birman_schwinger_crossings(
                a_mat, u, x, volume_element=ve, h0_eigenvalues=evals0
            )
            total += w * float(bs.weights(phi).sum())
    return total


def eta_density(
    family: OperatorFamily,
    phi: np.ndarray,
    energy: float,
    tau1: float,
    tau2: float,
    *,
    stability_tol: float = 1e-8,
) -> float:
    """Density sum_j f_j(E) over branches crossing E inside the window.

    Energies sitting on a spectrum value of either window-edge operator are
    jump points of the crossing count and are reported as unstable rather than
    evaluated.
    """
    if not tau2 > tau1:
        raise PreconditionError(f"need tau1 < tau2, got [{tau1}, {tau2}]")
    _check_family(family)
    _phi_hat(family, phi)
    edge1 = np.linalg.eigvalsh(family.operator_at(tau1))
    edge2 = np.linalg.eigvalsh(family.operator_at(tau2))
    scale = max(1.0, float(np.abs(edge1).max()), float(np.abs(edge2).max()))
    gap = min(
        float(np.abs(edge1 - energy).min()), float(np.abs(edge2 - energy).min())
    )
    if gap <= stability_tol * scale:
        raise UnstableEvaluationError(
            f"energy {energy!r} lies within {stability_tol * scale:.3e} of a "
            "window-edge spectrum value; the crossing set jumps here"
        )
    bs = birman_schwinger_crossings(
        family.base, family.u, energy, volume_element=family.volume_element
    )
    return bs.window_weight(phi, tau1, tau2)


def eta_density_finite_eps(
    family: OperatorFamily,
    phi: np.ndarray,
    energy: float,
    tau1: float,
    tau2: float,
    *,
    eps_list: tuple[float, ...] = (1e-3, 1e-4),
    nodes_per_panel: int = DEFAULT_NODES_PER_PANEL,
) -> tuple[float, dict[float, float]]:
    """Finite-width cross-check of eta_density with linear extrapolation in eps."""
    if len(eps_list) < 2:
        raise PreconditionError("need at least two widths to extrapolate")
    eps_sorted = sorted(set(float(e) for e in eps_list), reverse=True)
    trace = window_trace(family, tau1, tau2)
    values = {}
    for eps in eps_sorted:
        values[eps] = (
            spectral_average(
                family,
                phi,
                (energy, energy + eps),
                tau1,
                tau2,
                nodes_per_panel=nodes_per_panel,
                trace=trace,
            )
            / eps
        )
    e1, e2 = eps_sorted[-2], eps_sorted[-1]
    extrapolant = (e1 * values[e2] - e2 * values[e1]) / (e1 - e2)
    return float(extrapolant), values
