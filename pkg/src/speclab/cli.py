"""Experiment runner: parse a config, dispatch suites, write reports.

Exit codes: 0 all checks passed, 1 at least one check failed, 2 configuration
error, 3 numerical precondition violated during a run. Detail CSVs are byte
identical for identical (config, seed) regardless of worker count; timings
live only in summary.json.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, kernels
from .averaging import (
    spectral_average,
    spectral_average_energy_route,
    spectral_average_full_line,
    support_mass,
)
from .config import ExperimentConfig
from .cube_basis import (
    discrete_level_1d,
    eigenfunction_mass_check,
    trace_bound_check,
)
from .dos import (
    Ensemble,
    compute_constants,
    fixed_site_shift_chain,
    fixed_site_wegner,
    ldos_function,
    lipschitz_check,
    mc_ldos_measure,
    wegner_check,
    wegner_constant,
)
from .errors import ConfigError, PreconditionError
from .operator import SingleSite, assemble_operator, sample_disorder, single_site_family
from .report import VerificationReport, bound_report, write_csv, write_json
from .spectral import eigendecompose
from .ssf import evaluate_ssf

# Fixed per-suite stream tags so adding a suite never reseeds the others.
_SUITE_TAGS = {
    "trace_bound": 11,
    "spectral_averaging": 12,
    "ssf": 13,
    "wegner": 14,
    "lipschitz": 15,
    "fixed_site": 16,
}


def _suite_rng(cfg: ExperimentConfig, name: str) -> np.random.Generator:
    return np.random.default_rng([cfg.master_seed, _SUITE_TAGS[name]])


def _aggregate(check: str, reports: list[VerificationReport], **params) -> VerificationReport:
    """Collapse per-instance reports into one worst-margin summary line."""
    if not reports:
        raise PreconditionError(f"suite produced no instances for {check}")
    worst = min(reports, key=lambda r: r.margin)
    return VerificationReport(
        check=check,
        lhs=worst.lhs,
        rhs=worst.rhs,
        passed=all(r.passed for r in reports),
        params={"instances": len(reports), **params, **worst.params},
    )


def _normalized_vector(rng: np.random.Generator, n: int, volume_element: float) -> np.ndarray:
    phi = rng.standard_normal(n)
    return phi / np.sqrt(volume_element * float(phi @ phi))


# ---------------------------------------------------------------------------
# suites


def run_trace_bound(cfg: ExperimentConfig):
    p = cfg.params("trace_bound")
    dom = cfg.domain
    rows = []
    by_level: dict[int, list[VerificationReport]] = {int(n): [] for n in p["levels"]}
    mass_reports = []
    for r in range(p["n_realizations"]):
        real = sample_disorder(cfg.dist, dom, cfg.master_seed, r)
        spec = eigendecompose(assemble_operator(dom, cfg.site, real))
        for n in p["levels"]:
            n = int(n)
            b = p["b_fraction"] * discrete_level_1d(dom.m, n + 1)
            rep = trace_bound_check(spec, (0.0, b), n, dom)
            by_level[n].append(rep)
            rows.append(
                ("trace", r, n, b, rep.lhs, rep.rhs, rep.margin, int(rep.passed))
            )
        if dom.bc == "dirichlet":
            rep = eigenfunction_mass_check(spec, dom)
            mass_reports.append(rep)
            rows.append(
                ("mass", r, -1, 0.0, rep.lhs, rep.rhs, rep.margin, int(rep.passed))
            )
    reports = [
        _aggregate(f"trace_bound_n{n}", reps, n=n) for n, reps in by_level.items()
    ]
    if mass_reports:
        reports.append(_aggregate("eigenfunction_mass", mass_reports))
    header = ["kind", "realization", "n", "b", "lhs", "rhs", "margin", "passed"]
    return reports, {"trace_bound": (header, rows)}


def run_spectral_averaging(cfg: ExperimentConfig):
    p = cfg.params("spectral_averaging")
    dom = cfg.domain
    rng = _suite_rng(cfg, "spectral_averaging")
    cubes = dom.cube_indices()
    rows = []
    bound_reports, route_reports, full_reports = [], [], []
    for case in range(p["n_cases"]):
        real = sample_disorder(cfg.dist, dom, cfg.master_seed, case)
        k = cubes[case % len(cubes)]
        family = single_site_family(dom, cfg.site, real, k)
        evals0 = np.linalg.eigvalsh(family.base)
        lo, hi = float(evals0[0]), float(evals0[min(len(evals0) - 1, 6)])
        a = rng.uniform(lo - 0.5, hi)
        width = rng.uniform(0.2, 1.5)
        tau2 = rng.uniform(0.5, p["tau_max"])
        phi = _normalized_vector(rng, dom.n_cells, dom.volume_element)
        v1 = spectral_average(family, phi, (a, a + width), 0.0, tau2)
        v2 = spectral_average_energy_route(family, phi, (a, a + width), 0.0, tau2)
        mass = support_mass(family.u, phi, dom.volume_element)
        cap = width * mass
        full = spectral_average_full_line(
            family.base,
            family.u,
            phi,
            (a, a + width),
            volume_element=dom.volume_element,
        )
        bound_reports.append(
            bound_report("window_average_cap", v1, cap, slack=1e-6, case=case)
        )
        route_reports.append(
            bound_report("route_agreement", abs(v1 - v2), 1e-5, case=case)
        )
        full_reports.append(
            bound_report(
                "full_line_equality",
                abs(full - cap),
                1e-4 * max(cap, 1e-12),
                case=case,
            )
        )
        rows.append(
            (
                case,
                a,
                a + width,
                tau2,
                v1,
                v2,
                abs(v1 - v2),
                cap,
                full,
                int(bound_reports[-1].passed and route_reports[-1].passed and full_reports[-1].passed),
            )
        )
    reports = [
        _aggregate("window_average_cap", bound_reports),
        _aggregate("route_agreement", route_reports),
        _aggregate("full_line_equality", full_reports),
    ]
    header = [
        "case", "a", "b", "tau2", "omega_route", "energy_route",
        "route_diff", "cap", "full_line", "passed",
    ]
    return reports, {"spectral_averaging": (header, rows)}


def _draw_ssf_energy(rng, e1, e2, scale):
    """An energy separated from both edge spectra, by construction.

    Alternate between a point inside some branch's sweep range, which forces a
    crossing, and a point between consecutive edge values, which usually does
    not, so both zero and nonzero shifts get exercised.
    """
    merged = np.sort(np.concatenate([e1, e2]))
    prefer_sweep = bool(rng.random() < 0.6)
    for attempt in range(64):
        j = int(rng.integers(0, len(e1)))
        in_sweep = prefer_sweep == (attempt % 2 == 0)
        if in_sweep and e2[j] - e1[j] > 1e-3:
            lo, hi = float(e1[j]), float(e2[j])
        elif not in_sweep and j + 1 < len(e1):
            lo, hi = float(e1[j]), float(e1[j + 1])
        else:
            continue
        x = rng.uniform(lo + 0.05 * (hi - lo), hi - 0.05 * (hi - lo))
        if np.abs(merged - x).min() > 1e-6 * scale:
            return x
    raise PreconditionError("could not find a separated energy for the shift suite")


def run_ssf(cfg: ExperimentConfig):
    p = cfg.params("ssf")
    dom = cfg.domain
    rng = _suite_rng(cfg, "ssf")
    cubes = dom.cube_indices()
    rows = []
    match_reports, ladder_reports, bound_checks = [], [], []
    for t in range(p["n_triples"]):
        real = sample_disorder(cfg.dist, dom, cfg.master_seed, t)
        k = cubes[(t * 3 + 1) % len(cubes)]
        family = single_site_family(dom, cfg.site, real, k)
        tau1, tau2 = 0.0, float(rng.uniform(1.0, 3.0))
        e1 = np.linalg.eigvalsh(family.operator_at(tau1))
        e2 = np.linalg.eigvalsh(family.operator_at(tau2))
        scale = max(1.0, float(np.abs(e2).max()))
        energy = _draw_ssf_energy(rng, e1, e2, scale)
        rec = evaluate_ssf(
            family, energy, tau1, tau2, eps_ladder=tuple(p["eps_ladder"])
        )
        match_reports.append(
            bound_report(
                "shift_route_match",
                abs(rec.trace_difference - rec.crossing_count),
                0.0,
                triple=t,
            )
        )
        ladder_reports.append(
            bound_report(
                "shift_ladder_limit",
                abs(rec.ladder.extrapolant - rec.trace_difference),
                1e-3,
                triple=t,
            )
        )
        bound_checks.append(rec.bound)
        rows.append(
            (
                t,
                energy,
                tau1,
                tau2,
                rec.trace_difference,
                rec.crossing_count,
                rec.ladder.extrapolant,
                int(rec.ladder.stable),
                rec.bound.rhs,
                int(rec.consistent),
            )
        )
    reports = [
        _aggregate("shift_route_match", match_reports),
        _aggregate("shift_ladder_limit", ladder_reports),
        _aggregate("shift_counting_bound", bound_checks),
    ]
    header = [
        "triple", "energy", "tau1", "tau2", "trace_diff", "crossings",
        "extrapolant", "ladder_stable", "bound_rhs", "consistent",
    ]
    return reports, {"ssf": (header, rows)}


def run_wegner(cfg: ExperimentConfig):
    p = cfg.params("wegner")
    interval = tuple(p["interval"])
    n = int(p["n"])
    kappas = p["kappas"]
    if kappas is None:
        kappas = [cfg.site.kappa] + ([0.5] if cfg.site.kappa != 0.5 else [])
    rows = []
    reports = []
    for kappa in kappas:
        kappa = float(kappa)
        site = (
            cfg.site
            if kappa == cfg.site.kappa
            else SingleSite.characteristic(kappa, cfg.domain)
        )
        ens = Ensemble(
            domain=cfg.domain, site=site, dist=cfg.dist, master_seed=cfg.master_seed
        )
        spectra = ens.sample_spectra(cfg.n_samples, workers=cfg.workers)
        measure = mc_ldos_measure(ens, interval, cfg.n_samples, spectra=spectra)
        for variant in ("discrete", "continuum"):
            rep = wegner_check(
                ens, interval, n, cfg.n_samples, variant=variant, spectra=spectra
            )
            reports.append(rep)
            rows.append(
                (
                    kappa,
                    variant,
                    interval[0],
                    interval[1],
                    n,
                    rep.lhs,
                    rep.rhs,
                    rep.params["sigma"],
                    measure.value,
                    measure.std_error,
                    int(rep.passed),
                )
            )
    header = [
        "kappa", "variant", "a", "b", "n", "mean_count", "bound",
        "sigma", "measure", "measure_sigma", "passed",
    ]
    return reports, {"wegner": (header, rows)}


def run_lipschitz(cfg: ExperimentConfig):
    p = cfg.params("lipschitz")
    grid = cfg.lipschitz_grid()
    epsilon = float(p["epsilon"])
    ens = cfg.ensemble()
    spectra = ens.sample_spectra(cfg.n_samples, workers=cfg.workers)
    pair_rows, density_rows, reports = [], [], []
    pair_reports = {"discrete": [], "continuum": []}
    for variant in ("discrete", "continuum"):
        for e1, e2 in zip(grid[:-1], grid[1:]):
            rep = lipschitz_check(
                ens,
                float(e1),
                float(e2),
                epsilon,
                cfg.n_samples,
                variant=variant,
                spectra=spectra,
            )
            pair_reports[variant].append(rep)
            pair_rows.append(
                (
                    variant,
                    float(e1),
                    float(e2),
                    epsilon,
                    rep.lhs,
                    rep.rhs,
                    rep.params["sigma"],
                    int(rep.passed),
                )
            )
    est = ldos_function(ens, grid, epsilon, cfg.n_samples, spectra=spectra)
    density_reports = []
    for e, value, sigma in zip(est.e_grid, est.values, est.std_errors):
        c_w = wegner_constant(
            float(e) + epsilon,
            n=0,
            kappa=cfg.site.kappa,
            rho_sup=ens.rho_sup,
            m=cfg.domain.m,
        )
        rep = bound_report(
            "density_cap", value, c_w, slack=3.0 * sigma, energy=float(e)
        )
        density_reports.append(rep)
        density_rows.append(
            (float(e), epsilon, value, sigma, c_w, int(rep.passed))
        )
    reports = [
        _aggregate("lipschitz_discrete", pair_reports["discrete"]),
        _aggregate("lipschitz_continuum", pair_reports["continuum"]),
        _aggregate("density_cap", density_reports),
    ]
    return reports, {
        "lipschitz": (
            ["variant", "e1", "e2", "epsilon", "lhs", "rhs", "sigma", "passed"],
            pair_rows,
        ),
        "lipschitz_density": (
            ["energy", "epsilon", "n_hat", "sigma", "cap", "passed"],
            density_rows,
        ),
    }


def run_fixed_site(cfg: ExperimentConfig):
    p = cfg.params("fixed_site")
    interval = tuple(p["interval"])
    k = cfg.fixed_site_index()
    ens = cfg.ensemble()
    rows = []
    tau_reports = {"discrete": [], "continuum": []}
    for tau in p["taus"]:
        tau = float(tau)
        for variant in ("discrete", "continuum"):
            rep = fixed_site_wegner(
                ens,
                k,
                tau,
                interval,
                cfg.n_samples,
                variant=variant,
                workers=cfg.workers,
            )
            tau_reports[variant].append(rep)
            rows.append(
                (
                    "pinned",
                    variant,
                    tau,
                    interval[0],
                    interval[1],
                    rep.lhs,
                    rep.rhs,
                    rep.params["sigma"],
                    int(rep.passed),
                )
            )
    chain = fixed_site_shift_chain(
        ens, k, interval[0], interval[1], cfg.n_samples, workers=cfg.workers
    )
    rows.append(
        (
            "chain",
            chain.params["variant"],
            -1.0,
            interval[0],
            interval[1],
            chain.lhs,
            chain.rhs,
            chain.params["sigma"],
            int(chain.passed),
        )
    )
    reports = [
        _aggregate("fixed_site_discrete", tau_reports["discrete"]),
        _aggregate("fixed_site_continuum", tau_reports["continuum"]),
        chain,
    ]
    header = ["kind", "variant", "tau", "a", "b", "lhs", "rhs", "sigma", "passed"]
    return reports, {"fixed_site": (header, rows)}


_SUITE_RUNNERS = {
    "trace_bound": run_trace_bound,
    "spectral_averaging": run_spectral_averaging,
    "ssf": run_ssf,
    "wegner": run_wegner,
    "lipschitz": run_lipschitz,
    "fixed_site": run_fixed_site,
}


def run_experiment(cfg: ExperimentConfig, out_dir: Path) -> dict:
    """Run the configured suites, write CSVs under out_dir, return the summary."""
    out_dir.mkdir(parents=True, exist_ok=True)
    summary = {
        "version": __version__,
        "backend": kernels.BACKEND,
        "config": cfg.to_dict(),
        "suites": {},
    }
    t_start = time.monotonic()
    all_passed = True
    for name in cfg.active_suites():
        t0 = time.monotonic()
        reports, tables = _SUITE_RUNNERS[name](cfg)
        elapsed = time.monotonic() - t0
        for table_name, (header, rows) in tables.items():
            write_csv(out_dir / f"{table_name}.csv", header, rows)
        passed = all(r.passed for r in reports)
        all_passed = all_passed and passed
        summary["suites"][name] = {
            "passed": passed,
            "elapsed_s": elapsed,
            "checks": [r.to_dict() for r in reports],
        }
    summary["all_passed"] = all_passed
    summary["elapsed_s"] = time.monotonic() - t_start
    write_json(out_dir / "summary.json", summary)
    return summary


# ---------------------------------------------------------------------------
# entry points


def _cmd_run(args) -> int:
    try:
        if args.config is None:
            cfg = ExperimentConfig.from_dict({})
        else:
            cfg = ExperimentConfig.from_file(args.config)
        overrides = {}
        if args.seed is not None:
            overrides["master_seed"] = args.seed
        if args.workers is not None:
            overrides["workers"] = args.workers
        if args.out is not None:
            overrides["out_dir"] = args.out
        if overrides:
            cfg = ExperimentConfig.from_dict({**cfg.to_dict(), **overrides})
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    try:
        summary = run_experiment(cfg, Path(cfg.out_dir))
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except PreconditionError as exc:
        print(f"precondition violated: {exc}", file=sys.stderr)
        return 3
    for name, entry in summary["suites"].items():
        for check in entry["checks"]:
            tag = "PASS" if check["passed"] else "FAIL"
            print(
                f"{tag} {name}.{check['check']}: lhs={check['lhs']:.6g} "
                f"rhs={check['rhs']:.6g} margin={check['margin']:.6g}"
            )
    print(
        f"{'all checks passed' if summary['all_passed'] else 'CHECK FAILURES'} "
        f"in {summary['elapsed_s']:.1f}s; reports in {cfg.out_dir}/"
    )
    return 0 if summary["all_passed"] else 1


def _cmd_constants(args) -> int:
    try:
        variants = [("continuum", None)]
        if args.m is not None:
            variants.append((f"discrete m={args.m}", args.m))
        tables = []
        for label, m in variants:
            cs = compute_constants(
                args.d, args.b, args.energy, args.n, args.kappa, args.rho, m=m
            )
            tables.append((label, cs))
    except (ConfigError, PreconditionError) as exc:
        print(f"constants error: {exc}", file=sys.stderr)
        return 2
    name_width = 44
    for label, cs in tables:
        print(f"[{label}]")
        rows = [
            (f"E0(d={cs.d})", cs.e0),
            (f"c(b={cs.b:g}, d={cs.d})", cs.c_bd),
            (f"C_W(E={cs.energy:g}, n={cs.n}, kappa={cs.kappa:g}, rho={cs.rho_sup:g})", cs.c_w),
            ("K1 = c(b, d)/kappa^2", cs.k1),
        ]
        for name, value in rows:
            print(f"  {name:<{name_width}} {value:.6f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="speclab",
        description="Verification suites for finite-volume random operators.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run verification suites from a config file")
    p_run.add_argument("--config", help="JSON configuration file (defaults apply if omitted)")
    p_run.add_argument("--seed", type=int, help="override master_seed")
    p_run.add_argument("--workers", type=int, help="override worker count")
    p_run.add_argument("--out", help="override output directory")
    p_run.set_defaults(func=_cmd_run)

    p_const = sub.add_parser("constants", help="print the explicit constants")
    p_const.add_argument("--d", type=int, required=True, help="dimension (1, 2, or 3)")
    p_const.add_argument("--b", type=float, default=0.1, help="interval top for c(b,d)")
    p_const.add_argument("--energy", type=float, default=0.1, help="energy for the count prefactor")
    p_const.add_argument("--n", type=int, default=0, help="mode cutoff")
    p_const.add_argument("--kappa", type=float, default=1.0, help="coupling floor")
    p_const.add_argument("--rho", type=float, default=1.0, help="density sup bound")
    p_const.add_argument("--m", type=int, help="also print the m-point discrete flavor")
    p_const.set_defaults(func=_cmd_constants)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
