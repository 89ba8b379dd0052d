"""Cube Neumann modes, Poincare inequality, and counting bounds."""

import numpy as np
import pytest

from speclab.cube_basis import (
    boundary_term,
    boundary_terms_all,
    check_poincare,
    continuum_level_1d,
    cube_neumann_operator,
    discrete_level_1d,
    eigenfunction_mass_check,
    embed_cube_function,
    high_mode_projection,
    neumann_cube_basis,
    trace_bound_check,
)
from speclab.errors import PreconditionError
from speclab.operator import (
    BoxDomain,
    SingleSite,
    assemble_operator,
    cached_laplacian,
    sample_disorder,
)
from speclab.spectral import eigendecompose

from conftest import normalized


def test_discrete_levels_converge_to_continuum():
    for n in (1, 2, 3):
        exact = continuum_level_1d(n)
        assert discrete_level_1d(4096, n) == pytest.approx(exact, rel=1e-6)
        # discrete levels approach from below and increase with m
        assert discrete_level_1d(8, n) < discrete_level_1d(16, n) < exact


@pytest.mark.parametrize("m,d,cap", [(4, 1, 2), (4, 2, 2), (3, 3, 1)])
def test_cube_modes_orthonormal_and_eigen(m, d, cap):
    basis = neumann_cube_basis(m, d, cap)
    assert basis.n_modes == (cap + 1) ** d
    ve = basis.volume_element
    gram = ve * basis.functions @ basis.functions.T
    np.testing.assert_allclose(gram, np.eye(basis.n_modes), atol=1e-12)
    a = cube_neumann_operator(m, d).toarray()
    for vec, level in zip(basis.functions, basis.levels):
        np.testing.assert_allclose(a @ vec, level * vec, atol=1e-10 * max(1.0, level))


def test_cube_basis_caps_at_grid_resolution():
    with pytest.raises(PreconditionError, match="not resolvable"):
        neumann_cube_basis(4, 1, 4)
    basis = neumann_cube_basis(4, 1, 3)  # full resolution is fine
    assert basis.n_modes == 4


def test_mode_mask_selects_low_tensor_indices():
    basis = neumann_cube_basis(4, 2, 2)
    assert basis.mode_mask(1).sum() == 4
    with pytest.raises(PreconditionError):
        basis.mode_mask(3)


def test_high_mode_projection_annihilates_kept_modes():
    dom = BoxDomain(d=1, L=2, m=4)
    basis = neumann_cube_basis(4, 1, 1)
    k = (-1,)
    psi = embed_cube_function(dom, k, basis.functions[0] + 0.5 * basis.functions[1])
    resid = high_mode_projection(psi, basis, dom, k)
    np.testing.assert_allclose(resid, 0.0, atol=1e-12)


def test_poincare_holds_for_random_vectors(rng):
    dom = BoxDomain(d=2, L=1, m=4)
    basis = neumann_cube_basis(4, 2, 1)
    for k in dom.cube_indices():
        for _ in range(5):
            psi = rng.standard_normal(dom.n_cells)
            rep = check_poincare(psi, basis, dom, k)
            assert rep.passed


def test_poincare_saturates_on_the_first_excluded_mode():
    """The lowest excluded mode turns the inequality into an identity."""
    dom = BoxDomain(d=1, L=2, m=4)
    n = 1
    basis = neumann_cube_basis(4, 1, n)
    probe = neumann_cube_basis(4, 1, n + 1)
    sel = int(np.flatnonzero(probe.indices.max(axis=1) == n + 1)[0])
    psi = embed_cube_function(dom, (0,), probe.functions[sel])
    rep = check_poincare(psi, basis, dom, (0,), n)
    assert rep.passed
    assert rep.lhs == pytest.approx(rep.rhs, abs=1e-12)
    assert rep.lhs > 0.1  # a genuinely saturated instance, not a trivial zero


@pytest.mark.parametrize("bc", ["dirichlet", "neumann", "periodic"])
def test_boundary_terms_telescope_to_zero(rng, bc):
    dom = BoxDomain(d=2, L=1, m=3, bc=bc)
    for _ in range(5):
        psi = rng.standard_normal(dom.n_cells)
        terms = boundary_terms_all(psi, dom)
        scale = max(1.0, float(np.abs(terms).max()))
        assert abs(terms.sum()) < 1e-10 * scale


def test_boundary_terms_vanish_for_interior_support():
    # a bump on central cells creates no flux across any cube interface
    dom = BoxDomain(d=1, L=2, m=4, bc="dirichlet")
    psi = np.zeros(dom.n_cells)
    cells = dom.cube_cells((0,))
    psi[cells[1]] = 1.0
    psi[cells[2]] = -0.7
    np.testing.assert_allclose(boundary_terms_all(psi, dom), 0.0, atol=1e-13)
    assert abs(boundary_term(psi, (0,), dom)) < 1e-13


def test_boundary_terms_reject_wrong_length():
    dom = BoxDomain(d=1, L=1, m=2)
    with pytest.raises(PreconditionError):
        boundary_terms_all(np.ones(3), dom)


# ---------------------------------------------------------------------------
# counting bounds


def test_trace_bound_on_free_and_disordered_operators(desk_domain):
    site = SingleSite.characteristic(1.0, desk_domain)
    free = eigendecompose(cached_laplacian(desk_domain))
    cut = discrete_level_1d(desk_domain.m, 1)
    rep = trace_bound_check(free, (0.0, 0.8 * cut), 0, desk_domain)
    assert rep.passed
    assert rep.lhs == float(int(rep.lhs))  # counting side is an integer
    for r in range(3):
        real = sample_disorder("uniform", desk_domain, 21, r)
        spec = eigendecompose(assemble_operator(desk_domain, site, real))
        for n in (0, 1):
            cut = discrete_level_1d(desk_domain.m, n + 1)
            rep = trace_bound_check(spec, (0.0, 0.8 * cut), n, desk_domain)
            assert rep.passed, rep


def test_trace_bound_counts_something(desk_domain):
    """The desk configuration puts eigenvalues inside the tested window."""
    free = eigendecompose(cached_laplacian(desk_domain))
    cut = discrete_level_1d(desk_domain.m, 1)
    rep = trace_bound_check(free, (0.0, 0.8 * cut), 0, desk_domain)
    assert rep.lhs >= 5


def test_trace_bound_rejects_windows_reaching_the_cutoff(desk_domain):
    free = eigendecompose(cached_laplacian(desk_domain))
    cut = discrete_level_1d(desk_domain.m, 1)
    with pytest.raises(PreconditionError, match="excluded level"):
        trace_bound_check(free, (0.0, cut), 0, desk_domain)


def test_eigenfunction_mass_bound(desk_domain):
    site = SingleSite.characteristic(1.0, desk_domain)
    real = sample_disorder("uniform", desk_domain, 4, 0)
    spec = eigendecompose(assemble_operator(desk_domain, site, real))
    rep = eigenfunction_mass_check(spec, desk_domain)
    assert rep.passed
    assert rep.params["n_pairs"] == desk_domain.n_cubes * spec.n


def test_eigenfunction_mass_requires_dirichlet():
    dom = BoxDomain(d=1, L=2, m=3, bc="neumann")
    spec = eigendecompose(cached_laplacian(dom))
    with pytest.raises(PreconditionError, match="Dirichlet"):
        eigenfunction_mass_check(spec, dom)


def test_normalized_helper_matches_discrete_norm(rng):
    dom = BoxDomain(d=1, L=1, m=4)
    phi = normalized(rng, dom.n_cells, dom.volume_element)
    assert dom.volume_element * float(phi @ phi) == pytest.approx(1.0, abs=1e-12)
