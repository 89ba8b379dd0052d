"""Coupling-window averages: both evaluation routes, caps, and densities."""

import numpy as np
import pytest
from scipy.integrate import quad

from speclab.averaging import (
    eta_density,
    eta_density_finite_eps,
    spectral_average,
    spectral_average_energy_route,
    spectral_average_full_line,
    support_mass,
    trace_average,
)
from speclab.errors import PreconditionError, UnstableEvaluationError
from speclab.operator import BoxDomain, OperatorFamily, cached_laplacian
from speclab.spectral import eigendecompose

from conftest import normalized

ROUTE_TOL = 1e-5


def quad_oracle(family, phi, interval, tau1, tau2):
    """Direct adaptive quadrature of the spectral-window integrand."""
    a, b = interval
    phi_hat = np.asarray(phi, dtype=float) * np.sqrt(family.volume_element)

    def integrand(omega):
        sd = eigendecompose(
            family.operator_at(omega), volume_element=family.volume_element
        )
        mask = (sd.eigenvalues >= a) & (sd.eigenvalues <= b)
        coeff = sd.vectors[:, mask].T @ (family.u * phi_hat)
        return float(coeff @ coeff)

    value, err = quad(integrand, tau1, tau2, limit=200)
    return value, err


def test_support_mass_uses_only_the_support():
    u = np.array([1.0, 0.0, 0.5])
    phi = np.array([2.0, 9.0, 1.0])
    assert support_mass(u, phi, volume_element=0.5) == pytest.approx(0.5 * 5.0)


def test_window_average_matches_adaptive_quadrature(desk_family, rng):
    phi = normalized(rng, desk_family.n, desk_family.volume_element)
    e0 = float(np.linalg.eigvalsh(desk_family.base)[0])
    interval = (e0 - 0.1, e0 + 0.6)
    value = spectral_average(desk_family, phi, interval, 0.0, 2.0)
    oracle, err = quad_oracle(desk_family, phi, interval, 0.0, 2.0)
    assert value == pytest.approx(oracle, abs=max(1e-8, 10 * err))


def test_energy_route_agrees_with_coupling_route(desk_family, rng):
    phi = normalized(rng, desk_family.n, desk_family.volume_element)
    e0 = float(np.linalg.eigvalsh(desk_family.base)[0])
    interval = (e0 - 0.2, e0 + 0.8)
    v1 = spectral_average(desk_family, phi, interval, 0.0, 2.0)
    v2 = spectral_average_energy_route(desk_family, phi, interval, 0.0, 2.0)
    assert v1 > 0.0
    assert abs(v1 - v2) < ROUTE_TOL


def test_window_average_capped_by_interval_length(desk_family, rng):
    phi = normalized(rng, desk_family.n, desk_family.volume_element)
    e0 = float(np.linalg.eigvalsh(desk_family.base)[0])
    width = 0.7
    value = spectral_average(desk_family, phi, (e0 - 0.1, e0 - 0.1 + width), 0.0, 2.0)
    cap = width * support_mass(desk_family.u, phi, desk_family.volume_element)
    assert value <= cap + 1e-9


def test_window_average_additive_in_the_interval(desk_family, rng):
    phi = normalized(rng, desk_family.n, desk_family.volume_element)
    e0 = float(np.linalg.eigvalsh(desk_family.base)[0])
    a, b, c = e0 - 0.1, e0 + 0.2, e0 + 0.6
    whole = spectral_average(desk_family, phi, (a, c), 0.0, 2.0)
    left = spectral_average(desk_family, phi, (a, b), 0.0, 2.0)
    right = spectral_average(desk_family, phi, (b, c), 0.0, 2.0)
    assert whole == pytest.approx(left + right, abs=1e-7)


def test_trace_average_dominates_any_normalized_probe(desk_family, rng):
    """The trace is the probe average over an orthonormal family."""
    e0 = float(np.linalg.eigvalsh(desk_family.base)[0])
    interval = (e0 - 0.1, e0 + 0.5)
    tr = trace_average(desk_family, interval, 0.0, 2.0)
    phi = normalized(rng, desk_family.n, desk_family.volume_element)
    avg = spectral_average(desk_family, phi, interval, 0.0, 2.0, )
    assert tr >= 0.0
    # one rank-one term never exceeds the full trace times the probe norm
    assert avg <= tr * max(1.0, float(phi @ phi) * desk_family.volume_element) + 1e-9


def test_full_line_average_is_exactly_the_support_mass(rng):
    dom = BoxDomain(d=1, L=2, m=4)
    u = np.zeros(dom.n_cells)
    u[[3, 7, 8, 12]] = [1.0, 0.6, 0.9, 0.3]  # rank-4 perturbation
    phi = normalized(rng, dom.n_cells, dom.volume_element)
    h0 = cached_laplacian(dom).dense
    value = spectral_average_full_line(
        h0, u, phi, (0.4, 1.3), volume_element=dom.volume_element
    )
    mass = support_mass(u, phi, dom.volume_element)
    interval_width = 1.3 - 0.4
    assert value == pytest.approx(interval_width * mass, rel=1e-10)


def test_full_line_average_rejects_oversized_profiles(rng):
    dom = BoxDomain(d=1, L=1, m=2)
    u = np.full(dom.n_cells, 1.2)
    phi = normalized(rng, dom.n_cells, dom.volume_element)
    with pytest.raises(PreconditionError):
        spectral_average_full_line(
            cached_laplacian(dom).dense,
            u,
            phi,
            (0.0, 1.0),
            volume_element=dom.volume_element,
        )


def test_probe_must_be_normalized(desk_family):
    phi = np.ones(desk_family.n)  # discrete norm far from 1
    with pytest.raises(PreconditionError, match="norm"):
        spectral_average(desk_family, phi, (0.0, 1.0), 0.0, 1.0)


def test_family_squares_above_one_rejected(rng):
    fam = OperatorFamily(base=np.diag([0.0, 1.0]), u2=np.array([1.5, 0.0]))
    phi = np.array([1.0, 0.0])
    with pytest.raises(PreconditionError):
        spectral_average(fam, phi, (0.0, 1.0), 0.0, 1.0)


def test_eta_density_matches_small_width_limit(desk_family, rng):
    phi = normalized(rng, desk_family.n, desk_family.volume_element)
    lo = float(np.linalg.eigvalsh(desk_family.operator_at(0.0))[0])
    hi = float(np.linalg.eigvalsh(desk_family.operator_at(2.0))[0])
    energy = 0.5 * (lo + hi)
    direct = eta_density(desk_family, phi, energy, 0.0, 2.0)
    extrap, values = eta_density_finite_eps(desk_family, phi, energy, 0.0, 2.0)
    assert direct > 0.0
    assert extrap == pytest.approx(direct, abs=1e-6)
    assert set(values) == {1e-3, 1e-4}


def test_eta_density_refuses_jump_points(desk_family, rng):
    phi = normalized(rng, desk_family.n, desk_family.volume_element)
    edge = float(np.linalg.eigvalsh(desk_family.operator_at(2.0))[3])
    with pytest.raises(UnstableEvaluationError, match="jump"):
        eta_density(desk_family, phi, edge, 0.0, 2.0)


def test_empty_interval_averages_to_zero(desk_family, rng):
    phi = normalized(rng, desk_family.n, desk_family.volume_element)
    value = spectral_average(desk_family, phi, (-2.0, -1.0), 0.0, 2.0)
    assert value == 0.0
    assert trace_average(desk_family, (-2.0, -1.0), 0.0, 2.0) == 0.0
