"""Grids, Laplacians, disorder sampling, and operator assembly."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from speclab.errors import ConfigError, PreconditionError
from speclab.operator import (
    BoxDomain,
    DisorderRealization,
    OperatorFamily,
    SingleSite,
    SymmetricOperator,
    TabulatedDensity,
    assemble_family,
    assemble_operator,
    build_laplacian,
    build_potential,
    cached_laplacian,
    sample_disorder,
    single_site_family,
)

UNIFORM_MEAN = 0.5
UNIFORM_VAR = 1.0 / 12.0


def dirichlet_levels_1d(n, h):
    j = np.arange(1, n + 1)
    return (4.0 / h**2) * np.sin(j * np.pi / (2 * (n + 1))) ** 2


def neumann_levels_1d(n, h):
    j = np.arange(n)
    return (4.0 / h**2) * np.sin(j * np.pi / (2 * n)) ** 2


def periodic_levels_1d(n, h):
    j = np.arange(n)
    return (4.0 / h**2) * np.sin(j * np.pi / n) ** 2


# ---------------------------------------------------------------------------
# domain geometry


def test_domain_counts_and_volume():
    dom = BoxDomain(d=2, L=3, m=4)
    assert dom.cells_per_side == 24
    assert dom.n_cells == 576
    assert dom.n_cubes == 36
    assert dom.volume == 36.0
    assert dom.h == 0.25
    assert dom.volume_element == 0.0625


def test_domain_rejects_bad_parameters():
    with pytest.raises(ConfigError):
        BoxDomain(d=4, L=1, m=2)
    with pytest.raises(ConfigError):
        BoxDomain(d=1, L=0, m=2)
    with pytest.raises(ConfigError):
        BoxDomain(d=1, L=1, m=0)
    with pytest.raises(ConfigError):
        BoxDomain(d=1, L=1, m=2, bc="absorbing")


def test_coordinates_are_cell_centers():
    dom = BoxDomain(d=1, L=1, m=2)
    np.testing.assert_allclose(dom.coordinates(), [-0.75, -0.25, 0.25, 0.75])


@settings(deadline=None, max_examples=25)
@given(d=st.integers(1, 2), L=st.integers(1, 2), m=st.integers(1, 3))
def test_cube_cells_partition_the_grid(d, L, m):
    """cube_of_cell and cube_cells describe the same partition."""
    dom = BoxDomain(d=d, L=L, m=m)
    cube_of_cell = dom.cube_of_cell()
    seen = np.zeros(dom.n_cells, dtype=int)
    for k in dom.cube_indices():
        cells = dom.cube_cells(k)
        assert cells.shape == (m**d,)
        np.testing.assert_array_equal(
            np.sort(cells), np.flatnonzero(cube_of_cell == dom.cube_flat_index(k))
        )
        seen[cells] += 1
    np.testing.assert_array_equal(seen, 1)


def test_cube_index_out_of_box_rejected():
    dom = BoxDomain(d=2, L=2, m=2)
    with pytest.raises(ConfigError):
        dom.cube_cells((2, 0))
    with pytest.raises(ConfigError):
        dom.cube_cells((0,))


# ---------------------------------------------------------------------------
# Laplacians


@pytest.mark.parametrize(
    "bc,levels",
    [
        ("dirichlet", dirichlet_levels_1d),
        ("neumann", neumann_levels_1d),
        ("periodic", periodic_levels_1d),
    ],
)
def test_laplacian_1d_closed_form(bc, levels):
    dom = BoxDomain(d=1, L=2, m=3, bc=bc)
    lap = build_laplacian(dom)
    evals = np.linalg.eigvalsh(lap.dense)
    np.testing.assert_allclose(
        evals, np.sort(levels(dom.cells_per_side, dom.h)), atol=1e-10
    )


def test_laplacian_2d_is_kronecker_sum():
    dom = BoxDomain(d=2, L=1, m=2)
    evals = np.linalg.eigvalsh(build_laplacian(dom).dense)
    one_d = dirichlet_levels_1d(dom.cells_per_side, dom.h)
    expected = np.sort((one_d[:, None] + one_d[None, :]).ravel())
    np.testing.assert_allclose(evals, expected, atol=1e-9)


def test_ground_level_richardson_to_continuum():
    """First-order boundary error cancels under h -> h/2 extrapolation."""
    exact = (np.pi / 2.0) ** 2  # box [-1, 1], d = 1
    lam = {}
    for m in (8, 16, 32):
        dom = BoxDomain(d=1, L=1, m=m)
        lam[m] = float(np.linalg.eigvalsh(build_laplacian(dom).dense)[0])
    err = {m: exact - lam[m] for m in lam}
    assert err[8] > err[16] > err[32] > 0
    assert 1.8 < err[8] / err[16] < 2.2
    # the extrapolant removes the O(h) part; the leftover decays like h^2
    resid = {m: abs(2 * lam[2 * m] - lam[m] - exact) for m in (8, 16)}
    assert resid[8] < 0.2 * err[8]
    assert resid[16] < 3e-3 * exact
    assert 3.4 < resid[8] / resid[16] < 4.6


def test_cached_laplacian_reuses_instance():
    dom = BoxDomain(d=1, L=2, m=4)
    assert cached_laplacian(dom) is cached_laplacian(BoxDomain(d=1, L=2, m=4))


def test_symmetric_operator_mirrors_upper_triangle():
    op = SymmetricOperator(np.array([[0.0, 2.0], [5.0, 0.0]]))
    np.testing.assert_array_equal(op.dense, [[0.0, 2.0], [2.0, 0.0]])


def test_symmetric_operator_rejects_domain_mismatch():
    dom = BoxDomain(d=1, L=1, m=2)
    with pytest.raises(ConfigError):
        SymmetricOperator(np.eye(3), dom)


# ---------------------------------------------------------------------------
# single-site profile and disorder


def test_characteristic_profile_squares_to_kappa():
    dom = BoxDomain(d=2, L=1, m=3)
    site = SingleSite.characteristic(0.25, dom)
    np.testing.assert_allclose(site.profile**2, 0.25)
    np.testing.assert_allclose(site.squared_cell_values(dom), 0.25)


def test_single_site_rejects_invalid_profiles():
    with pytest.raises(PreconditionError):
        SingleSite(kappa=0.0, profile=np.ones((2,)))
    with pytest.raises(PreconditionError):
        SingleSite(kappa=0.5, profile=np.full((2,), 1.2))  # squares above 1
    with pytest.raises(PreconditionError):
        SingleSite(kappa=0.9, profile=np.full((2,), 0.5))  # squares below kappa
    with pytest.raises(PreconditionError):
        SingleSite(kappa=0.5, profile=np.array([-0.8, 0.8]))


def test_sample_disorder_is_deterministic(desk_domain):
    a = sample_disorder("uniform", desk_domain, 11, 3)
    b = sample_disorder("uniform", desk_domain, 11, 3)
    np.testing.assert_array_equal(a.omegas, b.omegas)
    c = sample_disorder("uniform", desk_domain, 11, 4)
    assert not np.array_equal(a.omegas, c.omegas)


def test_sample_disorder_uniform_moments():
    dom = BoxDomain(d=1, L=256, m=1)  # 512 couplings per draw
    draws = np.concatenate(
        [sample_disorder("uniform", dom, 0, r).omegas for r in range(8)]
    )
    n = draws.size
    assert abs(draws.mean() - UNIFORM_MEAN) < 3.0 * np.sqrt(UNIFORM_VAR / n)
    assert abs(draws.var() - UNIFORM_VAR) < 0.01


@settings(deadline=None, max_examples=30)
@given(seed=st.integers(0, 2**63 - 1), index=st.integers(0, 10_000))
def test_sample_disorder_in_unit_interval(seed, index):
    dom = BoxDomain(d=1, L=2, m=1)
    real = sample_disorder("uniform", dom, seed, index)
    assert real.omegas.min() >= 0.0
    assert real.omegas.max() < 1.0


def test_omega_of_reads_the_cube_entry(desk_domain):
    real = sample_disorder("uniform", desk_domain, 2, 0)
    k = (-4,)
    assert real.omega_of(desk_domain, k) == real.omegas[0]


# ---------------------------------------------------------------------------
# tabulated densities


def test_tabulated_density_uniform_table():
    dens = TabulatedDensity(support=(0.0, 2.0), values=np.ones(11))
    assert dens.sup_density == pytest.approx(0.5)
    np.testing.assert_allclose(dens.ppf(np.array([0.0, 0.5, 1.0])), [0.0, 1.0, 2.0])


def test_tabulated_density_triangular_ppf():
    # density 2x on [0, 1]: cdf x^2, so ppf(q) = sqrt(q) at the table nodes
    dens = TabulatedDensity(support=(0.0, 1.0), values=np.linspace(0.0, 1.0, 101))
    assert dens.sup_density == pytest.approx(2.0)
    q = np.array([0.0625, 0.25, 0.81])
    np.testing.assert_allclose(dens.ppf(q), np.sqrt(q), atol=1e-4)


def test_tabulated_density_rejects_negative_support():
    with pytest.raises(ConfigError):
        TabulatedDensity(support=(-0.5, 1.0), values=np.ones(5))
    with pytest.raises(ConfigError):
        TabulatedDensity(support=(0.0, 1.0), values=-np.ones(5))


def test_sample_disorder_applies_the_ppf(desk_domain):
    dens = TabulatedDensity(support=(0.0, 1.0), values=np.linspace(0.0, 1.0, 101))
    real = sample_disorder(dens, desk_domain, 5, 1)
    base = sample_disorder("uniform", desk_domain, 5, 1)
    np.testing.assert_array_equal(real.omegas, dens.ppf(base.omegas))


# ---------------------------------------------------------------------------
# assembly


def test_potential_trace_identity(desk_domain):
    """For the characteristic profile, trace V = kappa * sum of couplings."""
    site = SingleSite.characteristic(0.5, desk_domain)
    real = sample_disorder("uniform", desk_domain, 1, 0)
    pot = build_potential(desk_domain, site, real)
    assert pot.discrete_trace() == pytest.approx(0.5 * real.omegas.sum(), rel=1e-12)


def test_potential_rejects_negative_couplings(desk_domain):
    site = SingleSite.characteristic(1.0, desk_domain)
    bad = DisorderRealization(
        omegas=-np.ones(desk_domain.n_cubes), master_seed=0, realization_index=0
    )
    with pytest.raises(PreconditionError):
        build_potential(desk_domain, site, bad)


def test_assemble_operator_shifts_spectrum_up(desk_domain):
    site = SingleSite.characteristic(1.0, desk_domain)
    real = sample_disorder("uniform", desk_domain, 3, 0)
    free = np.linalg.eigvalsh(cached_laplacian(desk_domain).dense)
    full = np.linalg.eigvalsh(assemble_operator(desk_domain, site, real).dense)
    assert np.all(full >= free - 1e-12)


def test_family_is_affine_in_the_coupling(desk_family):
    diff = desk_family.operator_at(2.0) - desk_family.operator_at(1.0)
    np.testing.assert_allclose(diff, np.diag(desk_family.u2), atol=1e-14)
    np.testing.assert_array_equal(desk_family.operator_at(0.0), desk_family.base)


def test_family_rejects_negative_u2():
    with pytest.raises(PreconditionError):
        OperatorFamily(base=np.eye(2), u2=np.array([1.0, -0.1]))


def test_single_site_family_matches_full_assembly(desk_domain):
    site = SingleSite.characteristic(1.0, desk_domain)
    real = sample_disorder("uniform", desk_domain, 7, 0)
    k = (2,)
    family = single_site_family(desk_domain, site, real, k)
    full = assemble_operator(desk_domain, site, real).dense
    np.testing.assert_allclose(
        family.operator_at(real.omega_of(desk_domain, k)), full, atol=1e-13
    )


def test_assemble_family_overrides_pin_cubes(desk_domain):
    site = SingleSite.characteristic(1.0, desk_domain)
    lap = cached_laplacian(desk_domain)
    u2 = np.zeros(desk_domain.n_cells)
    u2[desk_domain.cube_cells((0,))] = 1.0
    fam = assemble_family(
        lap, u2, domain=desk_domain, site=site, overrides={(1,): 0.75}
    )
    manual = lap.dense.copy()
    cells = desk_domain.cube_cells((1,))
    manual[cells, cells] += 0.75
    np.testing.assert_allclose(fam.base, manual, atol=1e-14)
    with pytest.raises(PreconditionError):
        assemble_family(
            lap, u2, domain=desk_domain, site=site, overrides={(1,): -0.5}
        )
