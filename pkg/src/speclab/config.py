"""Experiment configuration: schema, defaults, and front-loaded validation.

Every precondition that can be checked from the configuration alone is checked
here, before any computation starts, so a bad file fails fast with a naming of
the violated constraint. Unknown keys are rejected at every nesting level;
silently ignored options are how experiment records rot.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .cube_basis import discrete_level_1d
from .dos import Ensemble, threshold_energy
from .errors import ConfigError
from .operator import BoxDomain, SingleSite, TabulatedDensity

SUITE_NAMES = (
    "trace_bound",
    "spectral_averaging",
    "ssf",
    "wegner",
    "lipschitz",
    "fixed_site",
)

_DOMAIN_DEFAULTS = {"d": 1, "L": 4, "m": 8, "bc": "dirichlet"}
_SITE_DEFAULTS = {"kappa": 1.0}

_SUITE_DEFAULTS: dict[str, dict] = {
    "trace_bound": {"n_realizations": 20, "levels": [0, 1], "b_fraction": 0.8},
    "spectral_averaging": {"n_cases": 20, "tau_max": 2.0},
    "ssf": {"n_triples": 8, "eps_ladder": [1e-2, 1e-3, 1e-4]},
    "wegner": {"interval": [0.05, 0.15], "n": 0, "kappas": None},
    "lipschitz": {"e_points": 5, "e_min": 0.02, "e_max": None, "epsilon": 0.02},
    "fixed_site": {"site": None, "taus": [0.0, 0.5, 1.0], "interval": [0.05, 0.1]},
}

_TOP_DEFAULTS = {
    "suite": "all",
    "domain": None,
    "site": None,
    "distribution": "uniform",
    "master_seed": 0,
    "n_samples": 1000,
    "workers": None,
    "out_dir": "results",
    "suites": None,
}


def _reject_unknown(raw: dict, allowed, where: str) -> None:
    unknown = sorted(set(raw) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown key(s) {unknown} in {where}")


def _as_int(value, where: str, *, minimum: int | None = None) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
        raise ConfigError(f"{where} must be an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ConfigError(f"{where} must be >= {minimum}, got {value}")
    return int(value)


def _as_float(value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float, np.floating)):
        raise ConfigError(f"{where} must be a number, got {value!r}")
    return float(value)


def _as_interval_pair(value, where: str) -> tuple[float, float]:
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise ConfigError(f"{where} must be a two-element [a, b] list, got {value!r}")
    a, b = (_as_float(v, where) for v in value)
    if not a < b:
        raise ConfigError(f"{where} must satisfy a < b, got [{a}, {b}]")
    return a, b


def _parse_distribution(value):
    if value == "uniform":
        return "uniform"
    if isinstance(value, dict):
        _reject_unknown(value, {"support", "values"}, "distribution")
        try:
            return TabulatedDensity(
                support=tuple(value["support"]),
                values=np.asarray(value["values"], dtype=float),
            )
        except KeyError as exc:
            raise ConfigError(f"distribution table is missing key {exc}")
    raise ConfigError(
        f"distribution must be 'uniform' or a {{support, values}} table, got {value!r}"
    )


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    """Validated experiment description: what to run, on what, and where to."""

    suite: str
    domain: BoxDomain
    site: SingleSite
    dist: object
    master_seed: int
    n_samples: int
    workers: int | None
    out_dir: str
    suites: dict

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        if not isinstance(raw, dict):
            raise ConfigError(f"configuration root must be an object, got {type(raw)}")
        _reject_unknown(raw, _TOP_DEFAULTS, "the configuration root")
        merged = {**_TOP_DEFAULTS, **raw}

        suite = merged["suite"]
        if suite != "all" and suite not in SUITE_NAMES:
            raise ConfigError(
                f"suite must be 'all' or one of {list(SUITE_NAMES)}, got {suite!r}"
            )

        dom_raw = dict(merged["domain"] or {})
        _reject_unknown(dom_raw, _DOMAIN_DEFAULTS, "domain")
        dom_kw = {**_DOMAIN_DEFAULTS, **dom_raw}
        domain = BoxDomain(
            d=_as_int(dom_kw["d"], "domain.d"),
            L=_as_int(dom_kw["L"], "domain.L"),
            m=_as_int(dom_kw["m"], "domain.m"),
            bc=dom_kw["bc"],
        )

        site_raw = dict(merged["site"] or {})
        _reject_unknown(site_raw, {"kappa", "profile"}, "site")
        kappa = _as_float(site_raw.get("kappa", _SITE_DEFAULTS["kappa"]), "site.kappa")
        if "profile" in site_raw:
            profile = np.asarray(site_raw["profile"], dtype=float)
            if profile.shape != (domain.m,) * domain.d:
                raise ConfigError(
                    f"site.profile must have shape {(domain.m,) * domain.d}, "
                    f"got {profile.shape}"
                )
            site = SingleSite(kappa=kappa, profile=profile)
        else:
            site = SingleSite.characteristic(kappa, domain)

        suites_raw = dict(merged["suites"] or {})
        _reject_unknown(suites_raw, _SUITE_DEFAULTS, "suites")
        suites = {}
        for name in SUITE_NAMES:
            params_raw = dict(suites_raw.get(name) or {})
            _reject_unknown(params_raw, _SUITE_DEFAULTS[name], f"suites.{name}")
            suites[name] = {**_SUITE_DEFAULTS[name], **params_raw}

        cfg = cls(
            suite=suite,
            domain=domain,
            site=site,
            dist=_parse_distribution(merged["distribution"]),
            master_seed=_as_int(merged["master_seed"], "master_seed", minimum=0),
            n_samples=_as_int(merged["n_samples"], "n_samples", minimum=1),
            workers=(
                None
                if merged["workers"] is None
                else _as_int(merged["workers"], "workers", minimum=1)
            ),
            out_dir=str(merged["out_dir"]),
            suites=suites,
        )
        cfg._validate_suites()
        return cfg

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        try:
            raw = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise ConfigError(f"configuration file {path} does not exist")
        except json.JSONDecodeError as exc:
            raise ConfigError(f"configuration file {path} is not valid JSON: {exc}")
        return cls.from_dict(raw)

    def active_suites(self) -> tuple[str, ...]:
        return SUITE_NAMES if self.suite == "all" else (self.suite,)

    def ensemble(self) -> Ensemble:
        return Ensemble(
            domain=self.domain,
            site=self.site,
            dist=self.dist,
            master_seed=self.master_seed,
        )

    def params(self, name: str) -> dict:
        return self.suites[name]

    def lipschitz_grid(self) -> np.ndarray:
        p = self.suites["lipschitz"]
        e_max = p["e_max"]
        if e_max is None:
            # discrete threshold sits below the continuum one, so this default
            # is valid for both constant flavors
            e_max = 0.9 * threshold_energy(self.domain.d, m=self.domain.m)
        return np.linspace(p["e_min"], e_max, p["e_points"])

    def fixed_site_index(self) -> tuple[int, ...]:
        p = self.suites["fixed_site"]
        if p["site"] is None:
            return (0,) * self.domain.d
        return tuple(int(v) for v in p["site"])

    def _validate_suites(self) -> None:
        dom, active = self.domain, self.active_suites()

        if "trace_bound" in active:
            p = self.suites["trace_bound"]
            _as_int(p["n_realizations"], "suites.trace_bound.n_realizations", minimum=1)
            frac = _as_float(p["b_fraction"], "suites.trace_bound.b_fraction")
            if not 0 < frac < 1:
                raise ConfigError(
                    f"suites.trace_bound.b_fraction must lie in (0, 1), got {frac}"
                )
            if not isinstance(p["levels"], (list, tuple)) or not p["levels"]:
                raise ConfigError("suites.trace_bound.levels must be a nonempty list")
            for n in p["levels"]:
                n = _as_int(n, "suites.trace_bound.levels entry", minimum=0)
                if n >= dom.m:
                    raise ConfigError(
                        f"mode cutoff n={n} needs n < m={dom.m} grid points per cube"
                    )

        if "spectral_averaging" in active:
            p = self.suites["spectral_averaging"]
            _as_int(p["n_cases"], "suites.spectral_averaging.n_cases", minimum=1)
            if _as_float(p["tau_max"], "suites.spectral_averaging.tau_max") <= 0:
                raise ConfigError("suites.spectral_averaging.tau_max must be positive")

        if "ssf" in active:
            p = self.suites["ssf"]
            _as_int(p["n_triples"], "suites.ssf.n_triples", minimum=1)
            ladder = p["eps_ladder"]
            if (
                not isinstance(ladder, (list, tuple))
                or len(ladder) < 2
                or any(_as_float(e, "suites.ssf.eps_ladder entry") <= 0 for e in ladder)
            ):
                raise ConfigError(
                    "suites.ssf.eps_ladder must list at least two positive widths"
                )

        if "wegner" in active:
            p = self.suites["wegner"]
            _, b = _as_interval_pair(p["interval"], "suites.wegner.interval")
            n = _as_int(p["n"], "suites.wegner.n", minimum=0)
            if n >= dom.m:
                raise ConfigError(f"suites.wegner.n={n} needs n < m={dom.m}")
            cutoff = discrete_level_1d(dom.m, n + 1)
            if b >= cutoff:
                raise ConfigError(
                    f"suites.wegner.interval top {b} must lie below the cutoff "
                    f"level {cutoff:.6f} (n={n}, m={dom.m})"
                )
            if p["kappas"] is not None:
                for kap in p["kappas"]:
                    kap = _as_float(kap, "suites.wegner.kappas entry")
                    if not 0 < kap <= 1:
                        raise ConfigError(
                            f"suites.wegner.kappas entries must lie in (0, 1], got {kap}"
                        )

        if "lipschitz" in active:
            p = self.suites["lipschitz"]
            _as_int(p["e_points"], "suites.lipschitz.e_points", minimum=2)
            if _as_float(p["epsilon"], "suites.lipschitz.epsilon") <= 0:
                raise ConfigError("suites.lipschitz.epsilon must be positive")
            e_min = _as_float(p["e_min"], "suites.lipschitz.e_min")
            if e_min < 0:
                raise ConfigError("suites.lipschitz.e_min must be nonnegative")
            e0 = threshold_energy(dom.d, m=dom.m)
            e_max = p["e_max"]
            if e_max is not None:
                e_max = _as_float(e_max, "suites.lipschitz.e_max")
                if e_max >= e0:
                    raise ConfigError(
                        f"suites.lipschitz.e_max={e_max} must lie below the "
                        f"threshold energy E0={e0:.6f} for d={dom.d}, m={dom.m}"
                    )
                if e_max <= e_min:
                    raise ConfigError("suites.lipschitz needs e_min < e_max")

        if "fixed_site" in active:
            p = self.suites["fixed_site"]
            if dom.bc != "dirichlet":
                raise ConfigError(
                    "suites.fixed_site requires Dirichlet boundary conditions"
                )
            _, b = _as_interval_pair(p["interval"], "suites.fixed_site.interval")
            e0 = threshold_energy(dom.d, m=dom.m)
            if b >= e0:
                raise ConfigError(
                    f"suites.fixed_site.interval top {b} must lie below the "
                    f"threshold energy E0={e0:.6f} for d={dom.d}, m={dom.m}"
                )
            if not isinstance(p["taus"], (list, tuple)) or not p["taus"]:
                raise ConfigError("suites.fixed_site.taus must be a nonempty list")
            for tau in p["taus"]:
                if _as_float(tau, "suites.fixed_site.taus entry") < 0:
                    raise ConfigError("suites.fixed_site.taus must be nonnegative")
            if p["site"] is not None:
                k = p["site"]
                if not isinstance(k, (list, tuple)) or len(k) != dom.d:
                    raise ConfigError(
                        f"suites.fixed_site.site must be a {dom.d}-element cube index"
                    )
                self_idx = tuple(int(v) for v in k)
                if any(not -dom.L <= v < dom.L for v in self_idx):
                    raise ConfigError(
                        f"suites.fixed_site.site {self_idx} outside the box (L={dom.L})"
                    )

    def to_dict(self) -> dict:
        dist = (
            "uniform"
            if self.dist == "uniform"
            else {
                "support": list(self.dist.support),
                "values": [float(v) for v in self.dist.values],
            }
        )
        site_dict: dict = {"kappa": self.site.kappa}
        flat = np.full((self.domain.m,) * self.domain.d, np.sqrt(self.site.kappa))
        if not np.array_equal(self.site.profile, flat):
            site_dict["profile"] = self.site.profile.tolist()
        return {
            "suite": self.suite,
            "domain": {
                "d": self.domain.d,
                "L": self.domain.L,
                "m": self.domain.m,
                "bc": self.domain.bc,
            },
            "site": site_dict,
            "distribution": dist,
            "master_seed": self.master_seed,
            "n_samples": self.n_samples,
            "workers": self.workers,
            "out_dir": self.out_dir,
            "suites": {k: dict(v) for k, v in self.suites.items()},
        }
