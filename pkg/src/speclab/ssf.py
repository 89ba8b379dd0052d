"""Spectral shift accounting for one-parameter nonnegative perturbations.

The shift at energy E between the window-edge operators is an integer in
finite dimensions. Three independent evaluations are provided: eigenvalue
counting, branch-crossing counting, and the small-width limit of averaged
trace data. Their agreement is the point, so none of them shares code paths
with the others beyond the operator family itself.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .averaging import trace_average
from .errors import PreconditionError
from .operator import OperatorFamily
from .report import VerificationReport, bound_report
from .spectral import BranchTrace, all_crossings, window_trace

DEFAULT_EPS_LADDER = (1e-2, 1e-3, 1e-4)
ENERGY_SEPARATION_TOL = 1e-8


def _edge_spectra(family: OperatorFamily, tau1: float, tau2: float):
    if not tau2 > tau1:
        raise PreconditionError(f"need tau1 < tau2, got [{tau1}, {tau2}]")
    e1 = np.linalg.eigvalsh(family.operator_at(tau1))
    e2 = np.linalg.eigvalsh(family.operator_at(tau2))
    scale = max(1.0, float(np.abs(e1).max()), float(np.abs(e2).max()))
    return e1, e2, scale


def check_energy_separation(
    family: OperatorFamily,
    energy: float,
    tau1: float,
    tau2: float,
    *,
    tol: float = ENERGY_SEPARATION_TOL,
):
    """Edge spectra of the window, after requiring E to sit clear of both.

    The shift jumps when E meets either edge spectrum, so every route needs
    this separation to produce a well-defined integer.
    """
    e1, e2, scale = _edge_spectra(family, tau1, tau2)
    gap = min(float(np.abs(e1 - energy).min()), float(np.abs(e2 - energy).min()))
    if gap <= tol * scale:
        raise PreconditionError(
            f"energy {energy!r} lies within {tol * scale:.3e} of a window-edge "
            "spectrum value; the shift is not well defined there"
        )
    return e1, e2


def ssf_trace_difference(
    family: OperatorFamily, energy: float, tau1: float, tau2: float
) -> int:
    """Shift as a difference of counting functions at the window edges."""
    e1, e2 = check_energy_separation(family, energy, tau1, tau2)
    return int(np.count_nonzero(e1 <= energy) - np.count_nonzero(e2 <= energy))


def ssf_crossing_count(
    family: OperatorFamily,
    energy: float,
    tau1: float,
    tau2: float,
    *,
    trace: BranchTrace | None = None,
) -> int:
    """Shift as the number of branches passing E inside the window.

    Each nondecreasing branch crosses a separated level at most once, so the
    count equals the number of eigenvalues that moved past E.
    """
    check_energy_separation(family, energy, tau1, tau2)
    return len(all_crossings(family, energy, tau1, tau2, trace=trace))


@dataclass(frozen=True)
class ShiftLadder:
    """Small-width trace averages and their linear extrapolation to width zero."""

    extrapolant: float
    values: dict[float, float] = field(repr=False)
    stable: bool = True

    def rung(self, eps: float) -> float:
        return self.values[eps]


def birman_solomyak_limit(
    family: OperatorFamily,
    energy: float,
    tau1: float,
    tau2: float,
    *,
    eps_ladder: tuple[float, ...] = DEFAULT_EPS_LADDER,
    nodes_per_panel: int | None = None,
    trace: BranchTrace | None = None,
) -> ShiftLadder:
    """Shift as the width-zero limit of averaged trace data.

    Each rung evaluates the coupling average of Tr(u P_omega((E, E+eps]) u)
    divided by eps; the first-order error in eps is removed by linear
    extrapolation through the two smallest widths. The stability flag compares
    extrapolants from consecutive rung pairs when three or more are given.
    """
    check_energy_separation(family, energy, tau1, tau2)
    widths = sorted(set(float(e) for e in eps_ladder), reverse=True)
    if len(widths) < 2:
        raise PreconditionError("need at least two widths to extrapolate")
    if widths[-1] <= 0:
        raise PreconditionError("widths must be positive")
    if trace is None:
        trace = window_trace(family, tau1, tau2)
    kw = {} if nodes_per_panel is None else {"nodes_per_panel": nodes_per_panel}
    values = {
        eps: trace_average(family, (energy, energy + eps), tau1, tau2, trace=trace, **kw)
        / eps
        for eps in widths
    }

    def _pair(lo: float, hi: float) -> float:
        return (hi * values[lo] - lo * values[hi]) / (hi - lo)

    extrapolant = _pair(widths[-1], widths[-2])
    stable = True
    if len(widths) >= 3:
        previous = _pair(widths[-2], widths[-3])
        stable = abs(extrapolant - previous) <= 1e-3 * max(1.0, abs(extrapolant))
    return ShiftLadder(extrapolant=float(extrapolant), values=values, stable=stable)


def ssf_bound_check(
    family: OperatorFamily, energy: float, tau1: float, tau2: float
) -> VerificationReport:
    """Shift bounded by the edge-operator eigenvalue count just below E.

    A branch can rise at most ||u^2|| per unit coupling, so everything that
    crosses E over the window started no deeper than the window length times
    that rate.
    """
    e1, _ = check_energy_separation(family, energy, tau1, tau2)
    shift = ssf_trace_difference(family, energy, tau1, tau2)
    reach = float(family.u2.max()) * (tau2 - tau1)
    count = int(
        np.count_nonzero((e1 >= energy - reach) & (e1 <= energy))
    )
    return bound_report(
        "ssf_counting_bound",
        float(shift),
        float(count),
        energy=energy,
        tau1=tau1,
        tau2=tau2,
        reach=reach,
    )


@dataclass(frozen=True)
class SsfRecord:
    """All three shift evaluations at one energy, plus the counting bound."""

    energy: float
    tau1: float
    tau2: float
    trace_difference: int
    crossing_count: int
    ladder: ShiftLadder
    bound: VerificationReport

    @property
    def consistent(self) -> bool:
        return (
            self.trace_difference == self.crossing_count
            and abs(self.ladder.extrapolant - self.trace_difference) <= 1e-3
            and bool(self.bound.passed)
        )

    def to_row(self) -> tuple:
        return (
            self.energy,
            self.tau1,
            self.tau2,
            self.trace_difference,
            self.crossing_count,
            self.ladder.extrapolant,
            int(self.consistent),
        )


def evaluate_ssf(
    family: OperatorFamily,
    energy: float,
    tau1: float,
    tau2: float,
    *,
    eps_ladder: tuple[float, ...] = DEFAULT_EPS_LADDER,
) -> SsfRecord:
    """Run all three shift evaluations on a shared branch trace."""
    trace = window_trace(family, tau1, tau2)
    return SsfRecord(
        energy=float(energy),
        tau1=float(tau1),
        tau2=float(tau2),
        trace_difference=ssf_trace_difference(family, energy, tau1, tau2),
        crossing_count=ssf_crossing_count(family, energy, tau1, tau2, trace=trace),
        ladder=birman_solomyak_limit(
            family, energy, tau1, tau2, eps_ladder=eps_ladder, trace=trace
        ),
        bound=ssf_bound_check(family, energy, tau1, tau2),
    )
