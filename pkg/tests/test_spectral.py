"""Eigendecomposition, branch tracking, and crossing solvers.

Most assertions here use a 2x2 family with closed-form branches: base
[[0, g], [g, 1]] perturbed on the first site only, so the branch through a
level E != 1 crosses at omega = E + g^2 / (1 - E).
"""

import numpy as np
import pytest

from speclab.errors import ConfigError, PreconditionError
from speclab.operator import OperatorFamily
from speclab.spectral import (
    EnergyInterval,
    all_crossings,
    birman_schwinger_crossings,
    eigendecompose,
    feynman_hellmann_residual,
    projector_element,
    projector_trace,
    solve_crossing,
    trace_branches,
    window_trace,
)

G = 0.3


def two_level_family(g=G):
    return OperatorFamily(base=np.array([[0.0, g], [g, 1.0]]), u2=np.array([1.0, 0.0]))


def two_level_branches(omega, g=G):
    root = np.sqrt((omega - 1.0) ** 2 + 4.0 * g * g)
    return 0.5 * (omega + 1.0 - root), 0.5 * (omega + 1.0 + root)


def crossing_coupling(energy, g=G):
    return energy + g * g / (1.0 - energy)


# ---------------------------------------------------------------------------
# intervals and eigendecomposition


def test_interval_orientation_normalized():
    iv = EnergyInterval(2.0, -1.0)
    assert (iv.a, iv.b) == (-1.0, 2.0)
    assert iv.width == 3.0


def test_interval_counts_resolve_ties():
    iv = EnergyInterval(1.0, 2.0)
    vals = np.array([0.5, 1.0, 1.5, 2.0 + 1e-15, 3.0])
    assert iv.count_sorted(vals) == 3


def test_eigendecompose_validates_its_output(rng):
    a = rng.standard_normal((10, 10))
    a = a + a.T
    sd = eigendecompose(a, volume_element=0.25)
    sd.validate(a)
    np.testing.assert_allclose(sd.eigenfunctions, sd.vectors / 0.5)


def test_eigendecompose_rejects_asymmetric():
    with pytest.raises(PreconditionError, match="not symmetric"):
        eigendecompose(np.array([[0.0, 1.0], [0.0, 0.0]]))


def test_eigendecompose_respects_size_cap():
    with pytest.raises(ConfigError, match="cap"):
        eigendecompose(np.eye(5), cap=4)


def test_eigenvector_signs_are_canonical(rng):
    a = rng.standard_normal((8, 8))
    a = a + a.T
    sd = eigendecompose(a)
    peaks = np.argmax(np.abs(sd.vectors), axis=0)
    assert np.all(sd.vectors[peaks, np.arange(8)] > 0)


def test_projector_trace_counts_eigenvalues():
    sd = eigendecompose(np.diag([0.0, 1.0, 1.0, 3.0]))
    assert projector_trace(sd, (0.5, 2.0)) == 2
    assert projector_trace(sd, (1.0, 1.0)) == 2  # closed interval keeps ties


def test_projector_element_is_parseval_complete(rng):
    a = rng.standard_normal((8, 8))
    a = a + a.T
    sd = eigendecompose(a, volume_element=0.25)
    f = rng.standard_normal(8)
    g = rng.standard_normal(8)
    whole = (float(sd.eigenvalues[0]) - 1.0, float(sd.eigenvalues[-1]) + 1.0)
    assert projector_element(sd, whole, f, g) == pytest.approx(
        0.25 * float(f @ g), abs=1e-12
    )
    below = (float(sd.eigenvalues[0]) - 2.0, float(sd.eigenvalues[0]) - 1.0)
    assert projector_element(sd, below, f, g) == 0.0


# ---------------------------------------------------------------------------
# branch continuation


def test_branches_match_closed_form():
    fam = two_level_family()
    trace = trace_branches(fam, np.linspace(0.0, 3.0, 7))
    lower, upper = two_level_branches(trace.omega_grid)
    np.testing.assert_allclose(trace.energies[:, 0], lower, atol=1e-10)
    np.testing.assert_allclose(trace.energies[:, 1], upper, atol=1e-10)
    assert trace.min_overlap > 0.9


def test_branches_are_nondecreasing(desk_family):
    trace = window_trace(desk_family, 0.0, 2.0)
    drops = np.diff(trace.energies, axis=0)
    scale = max(1.0, float(np.abs(trace.energies).max()))
    assert drops.min(initial=0.0) >= -1e-8 * scale


def test_trace_rejects_degenerate_grids():
    fam = two_level_family()
    with pytest.raises(PreconditionError):
        trace_branches(fam, [0.0])
    with pytest.raises(PreconditionError):
        trace_branches(fam, [0.0, 0.0, 1.0])
    with pytest.raises(PreconditionError):
        window_trace(fam, 1.0, 1.0)


# ---------------------------------------------------------------------------
# crossings


def test_crossing_location_closed_form():
    fam = two_level_family()
    recs = all_crossings(fam, 0.5, 0.0, 2.0, phi=np.array([0.6, 0.8]))
    assert len(recs) == 1
    rec = recs[0]
    assert rec.branch == 0
    assert rec.omega == pytest.approx(crossing_coupling(0.5), abs=1e-9)
    # u is supported on the first site, so the weight reduces to phi_1^2
    assert rec.weight == pytest.approx(0.36, abs=1e-12)


def test_crossing_outside_window_is_dropped():
    fam = two_level_family()
    assert all_crossings(fam, 0.5, 1.0, 2.0) == []  # crossing sits at 0.68
    trace = window_trace(fam, 0.0, 2.0)
    assert solve_crossing(fam, trace, 1, 0.5) is None  # upper branch never gets there


def test_bs_enumerates_the_same_crossings():
    # rank-one perturbation: one crossing on the whole line per energy
    fam = two_level_family()
    for energy in (0.5, -0.1, 1.4):
        bs = birman_schwinger_crossings(fam.base, fam.u, energy)
        np.testing.assert_allclose(bs.omegas, [crossing_coupling(energy)], atol=1e-12)


def test_bs_matches_branch_solver_on_the_desk_family(desk_family):
    tau1, tau2 = 0.0, 2.0
    # midpoint of the ground branch sweep, so at least one crossing exists
    lo = float(np.linalg.eigvalsh(desk_family.operator_at(tau1))[0])
    hi = float(np.linalg.eigvalsh(desk_family.operator_at(tau2))[0])
    energy = 0.5 * (lo + hi)
    recs = all_crossings(desk_family, energy, tau1, tau2)
    assert recs
    bs = birman_schwinger_crossings(
        desk_family.base,
        desk_family.u,
        energy,
        volume_element=desk_family.volume_element,
    )
    inside = np.sort(bs.omegas[(bs.omegas >= tau1) & (bs.omegas <= tau2)])
    np.testing.assert_allclose(
        np.sort([r.omega for r in recs]), inside, atol=1e-6
    )


def test_bs_vectors_are_complete(desk_family, rng):
    bs = birman_schwinger_crossings(
        desk_family.base,
        desk_family.u,
        0.9,
        volume_element=desk_family.volume_element,
    )
    gram = bs.vectors.T @ bs.vectors
    np.testing.assert_allclose(gram, np.eye(gram.shape[0]), atol=1e-9)
    phi = rng.standard_normal(desk_family.n)
    assert bs.weights(phi).sum() == pytest.approx(bs.support_mass(phi), rel=1e-10)


def test_bs_rejects_energies_on_the_base_spectrum(desk_family):
    e0 = float(np.linalg.eigvalsh(desk_family.base)[0])
    with pytest.raises(PreconditionError, match="base spectrum"):
        birman_schwinger_crossings(
            desk_family.base,
            desk_family.u,
            e0,
            volume_element=desk_family.volume_element,
        )


def test_bs_rejects_empty_support():
    with pytest.raises(PreconditionError, match="support"):
        birman_schwinger_crossings(np.eye(3), np.zeros(3), 0.5)


# ---------------------------------------------------------------------------
# Feynman-Hellmann


def test_feynman_hellmann_matches_closed_form_slope():
    fam = two_level_family()
    omega = 0.4
    root = np.sqrt((omega - 1.0) ** 2 + 4.0 * G * G)
    for branch, sign in ((0, -1.0), (1, 1.0)):
        res = feynman_hellmann_residual(fam, omega, branch)
        assert res.status == "ok"
        slope = 0.5 * (1.0 + sign * (omega - 1.0) / root)
        assert res.derivative == pytest.approx(slope, abs=1e-8)
        assert res.residual < 1e-8


def test_feynman_hellmann_skips_degeneracies():
    fam = OperatorFamily(base=np.zeros((2, 2)), u2=np.ones(2))
    res = feynman_hellmann_residual(fam, 0.5, 0)
    assert res.status == "skipped"
    assert "gap" in res.reason


def test_feynman_hellmann_small_residual_on_the_desk_family(desk_family):
    sd = eigendecompose(
        desk_family.operator_at(0.7), volume_element=desk_family.volume_element
    )
    checked = 0
    for branch in range(6):
        res = feynman_hellmann_residual(desk_family, 0.7, branch, spec=sd)
        if res.status == "ok":
            assert res.residual <= 1e-6 * (1.0 + float(desk_family.u2.max()))
            checked += 1
    assert checked >= 3
