"""Structured-text run configuration with strict schema validation.

One JSON document drives every subcommand; unknown keys are rejected with
their dotted path so typos fail before any computation starts.  A small set
of CLI override flags (--seed, --nu, --out, ...) is applied after parsing.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .diskbasis import DEFAULT_ALPHA, DomainSpec
from .noise import DEFAULT_M


class ConfigError(ValueError):
    """Configuration is malformed; reported before any computation."""


def _check_keys(d: dict, allowed: set[str], path: str) -> None:
    unknown = set(d) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) {sorted(unknown)} in {path or 'top level'}")


def _need(d: dict, key: str, path: str) -> Any:
    if key not in d:
        raise ConfigError(f"missing required key {path}.{key}")
    return d[key]


def _as_number(v: Any, path: str) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{path} must be a number, got {v!r}")
    return float(v)


def _as_int(v: Any, path: str) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{path} must be an integer, got {v!r}")
    return v


def _as_bool(v: Any, path: str) -> bool:
    if not isinstance(v, bool):
        raise ConfigError(f"{path} must be a boolean, got {v!r}")
    return v


def _as_str(v: Any, path: str) -> str:
    if not isinstance(v, str):
        raise ConfigError(f"{path} must be a string, got {v!r}")
    return v


@dataclass
class InitialSpec:
    """Initial coefficient vector, materialized once eigenvalues are known."""

    kind: str = "zero"
    amplitude: float = 1.0
    decay: float = 2.0
    values: list[float] = field(default_factory=list)
    entries: list[tuple[int, float]] = field(default_factory=list)

    def coefficients(self, lambdas: np.ndarray) -> np.ndarray:
        k = lambdas.size
        if self.kind == "zero":
            return np.zeros(k)
        if self.kind == "coeffs":
            if len(self.values) != k:
                raise ConfigError(
                    f"sim.initial.values has {len(self.values)} entries, basis has {k} modes")
            return np.array(self.values, dtype=float)
        if self.kind == "modes":
            c = np.zeros(k)
            for mode, val in self.entries:
                if not 0 <= mode < k:
                    raise ConfigError(f"sim.initial mode index {mode} outside 0..{k - 1}")
                c[mode] += val
            return c
        if self.kind == "smooth":
            c = self.amplitude / (1.0 + lambdas) ** self.decay
            norm = np.linalg.norm(c)
            return c * (self.amplitude / norm) if norm > 0 else c
        raise ConfigError(f"unknown initial kind {self.kind!r}")


def _parse_initial(d: Any, path: str) -> InitialSpec:
    if not isinstance(d, dict):
        raise ConfigError(f"{path} must be an object")
    kind = _as_str(_need(d, "type", path), f"{path}.type")
    if kind == "zero":
        _check_keys(d, {"type"}, path)
        return InitialSpec(kind="zero")
    if kind == "coeffs":
        _check_keys(d, {"type", "values"}, path)
        values = _need(d, "values", path)
        if not isinstance(values, list) or not values:
            raise ConfigError(f"{path}.values must be a nonempty list")
        return InitialSpec(kind="coeffs",
                           values=[_as_number(v, f"{path}.values[]") for v in values])
    if kind == "modes":
        _check_keys(d, {"type", "entries"}, path)
        entries = _need(d, "entries", path)
        if not isinstance(entries, list) or not entries:
            raise ConfigError(f"{path}.entries must be a nonempty list of [mode, value]")
        out = []
        for e in entries:
            if not isinstance(e, list) or len(e) != 2:
                raise ConfigError(f"{path}.entries items must be [mode, value] pairs")
            out.append((_as_int(e[0], f"{path}.entries[].mode"),
                        _as_number(e[1], f"{path}.entries[].value")))
        return InitialSpec(kind="modes", entries=out)
    if kind == "smooth":
        _check_keys(d, {"type", "amplitude", "decay"}, path)
        return InitialSpec(
            kind="smooth",
            amplitude=_as_number(d.get("amplitude", 1.0), f"{path}.amplitude"),
            decay=_as_number(d.get("decay", 2.0), f"{path}.decay"),
        )
    raise ConfigError(f"{path}.type must be one of zero|coeffs|modes|smooth")


@dataclass
class ForcingEntrySpec:
    mode: int
    constant: float | None = None
    times: list[float] | None = None
    values: list[float] | None = None


def _parse_forcing(lst: Any, path: str) -> list[ForcingEntrySpec]:
    if not isinstance(lst, list):
        raise ConfigError(f"{path} must be a list")
    out = []
    for i, d in enumerate(lst):
        p = f"{path}[{i}]"
        if not isinstance(d, dict):
            raise ConfigError(f"{p} must be an object")
        if "value" in d:
            _check_keys(d, {"mode", "value"}, p)
            out.append(ForcingEntrySpec(mode=_as_int(_need(d, "mode", p), f"{p}.mode"),
                                        constant=_as_number(d["value"], f"{p}.value")))
        else:
            _check_keys(d, {"mode", "times", "values"}, p)
            times = _need(d, "times", p)
            values = _need(d, "values", p)
            if (not isinstance(times, list) or not isinstance(values, list)
                    or len(times) != len(values) or not times):
                raise ConfigError(f"{p}: times and values must be equal-length nonempty lists")
            out.append(ForcingEntrySpec(
                mode=_as_int(_need(d, "mode", p), f"{p}.mode"),
                times=[_as_number(t, f"{p}.times[]") for t in times],
                values=[_as_number(v, f"{p}.values[]") for v in values]))
    return out


@dataclass
class NoiseCfg:
    enabled: bool = True
    m: int = DEFAULT_M
    seed: int = 0


@dataclass
class SimCfg:
    nu: float = 0.0
    dt: float = 1e-3
    t_final: float = 1.0
    save_stride: int = 1
    write_coeffs: bool = False
    initial: InitialSpec = field(default_factory=InitialSpec)
    forcing: list[ForcingEntrySpec] = field(default_factory=list)


@dataclass
class ThresholdCfg:
    min_slope: float | None = None
    min_r_squared: float | None = None
    max_ratio: float | None = None
    require_monotone: bool = False


@dataclass
class StudyCfg:
    nu_grid: list[float] = field(default_factory=lambda: [1e-1, 3e-2, 1e-2, 3e-3, 1e-3])
    samples: int = 64
    workers: int = 1
    eval_stride: int = 10
    p: float = 4.0
    thresholds: ThresholdCfg = field(default_factory=ThresholdCfg)


@dataclass
class AuditCfg:
    dt_factors: list[int] = field(default_factory=lambda: [4, 2, 1])
    min_order: float | None = None
    max_relative_residual: float | None = None


@dataclass
class OutputCfg:
    dir: str = "out"
    plot_data: bool = False
    verbosity: str = "warning"


@dataclass
class Config:
    domain: DomainSpec
    nr: int | None
    ntheta: int | None
    k_modes: int
    cache: str | None
    noise: NoiseCfg
    sim: SimCfg
    study: StudyCfg
    audit: AuditCfg
    output: OutputCfg
    raw: dict

    @property
    def grid_explicit(self) -> bool:
        return self.nr is not None and self.ntheta is not None


_TOP_KEYS = {"domain", "grid", "basis", "noise", "sim", "study", "audit", "output"}


def parse_config(doc: dict) -> Config:
    if not isinstance(doc, dict):
        raise ConfigError("configuration must be a JSON object")
    _check_keys(doc, _TOP_KEYS, "")

    dom = doc.get("domain", {})
    if not isinstance(dom, dict):
        raise ConfigError("domain must be an object")
    _check_keys(dom, {"alpha"}, "domain")
    alpha = _as_number(dom.get("alpha", DEFAULT_ALPHA), "domain.alpha")
    try:
        domain = DomainSpec(alpha=alpha)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    grid = doc.get("grid", {})
    if not isinstance(grid, dict):
        raise ConfigError("grid must be an object")
    _check_keys(grid, {"nr", "ntheta"}, "grid")
    nr = _as_int(grid["nr"], "grid.nr") if "nr" in grid else None
    ntheta = _as_int(grid["ntheta"], "grid.ntheta") if "ntheta" in grid else None
    if (nr is None) != (ntheta is None):
        raise ConfigError("grid requires both nr and ntheta (or neither)")

    basis = _need(doc, "basis", "")
    if not isinstance(basis, dict):
        raise ConfigError("basis must be an object")
    _check_keys(basis, {"k_modes", "cache"}, "basis")
    k_modes = _as_int(_need(basis, "k_modes", "basis"), "basis.k_modes")
    if k_modes < 1:
        raise ConfigError("basis.k_modes must be >= 1")
    cache = _as_str(basis["cache"], "basis.cache") if "cache" in basis else None

    noise_doc = doc.get("noise")
    if noise_doc is None:
        noise = NoiseCfg(enabled=False)
    else:
        if not isinstance(noise_doc, dict):
            raise ConfigError("noise must be an object or null")
        _check_keys(noise_doc, {"enabled", "m", "seed"}, "noise")
        noise = NoiseCfg(
            enabled=_as_bool(noise_doc.get("enabled", True), "noise.enabled"),
            m=_as_int(noise_doc.get("m", DEFAULT_M), "noise.m"),
            seed=_as_int(noise_doc.get("seed", 0), "noise.seed"),
        )
        if noise.m < 1:
            raise ConfigError("noise.m must be >= 1")

    sim_doc = doc.get("sim", {})
    if not isinstance(sim_doc, dict):
        raise ConfigError("sim must be an object")
    _check_keys(sim_doc, {"nu", "dt", "t_final", "save_stride", "write_coeffs",
                          "initial", "forcing"}, "sim")
    sim = SimCfg(
        nu=_as_number(sim_doc.get("nu", 0.0), "sim.nu"),
        dt=_as_number(sim_doc.get("dt", 1e-3), "sim.dt"),
        t_final=_as_number(sim_doc.get("t_final", 1.0), "sim.t_final"),
        save_stride=_as_int(sim_doc.get("save_stride", 1), "sim.save_stride"),
        write_coeffs=_as_bool(sim_doc.get("write_coeffs", False), "sim.write_coeffs"),
        initial=(_parse_initial(sim_doc["initial"], "sim.initial")
                 if "initial" in sim_doc else InitialSpec()),
        forcing=(_parse_forcing(sim_doc["forcing"], "sim.forcing")
                 if "forcing" in sim_doc else []),
    )
    if sim.nu < 0:
        raise ConfigError("sim.nu must be >= 0")
    if sim.dt <= 0 or sim.t_final <= 0:
        raise ConfigError("sim.dt and sim.t_final must be positive")

    study_doc = doc.get("study", {})
    if not isinstance(study_doc, dict):
        raise ConfigError("study must be an object")
    _check_keys(study_doc, {"nu_grid", "samples", "workers", "eval_stride", "p",
                            "thresholds"}, "study")
    thr_doc = study_doc.get("thresholds", {})
    if not isinstance(thr_doc, dict):
        raise ConfigError("study.thresholds must be an object")
    _check_keys(thr_doc, {"min_slope", "min_r_squared", "max_ratio", "require_monotone"},
                "study.thresholds")
    thresholds = ThresholdCfg(
        min_slope=(_as_number(thr_doc["min_slope"], "study.thresholds.min_slope")
                   if "min_slope" in thr_doc else None),
        min_r_squared=(_as_number(thr_doc["min_r_squared"], "study.thresholds.min_r_squared")
                       if "min_r_squared" in thr_doc else None),
        max_ratio=(_as_number(thr_doc["max_ratio"], "study.thresholds.max_ratio")
                   if "max_ratio" in thr_doc else None),
        require_monotone=_as_bool(thr_doc.get("require_monotone", False),
                                  "study.thresholds.require_monotone"),
    )
    nu_grid_doc = study_doc.get("nu_grid", [1e-1, 3e-2, 1e-2, 3e-3, 1e-3])
    if not isinstance(nu_grid_doc, list) or not nu_grid_doc:
        raise ConfigError("study.nu_grid must be a nonempty list")
    study = StudyCfg(
        nu_grid=[_as_number(v, "study.nu_grid[]") for v in nu_grid_doc],
        samples=_as_int(study_doc.get("samples", 64), "study.samples"),
        workers=_as_int(study_doc.get("workers", 1), "study.workers"),
        eval_stride=_as_int(study_doc.get("eval_stride", 10), "study.eval_stride"),
        p=_as_number(study_doc.get("p", 4.0), "study.p"),
        thresholds=thresholds,
    )

    audit_doc = doc.get("audit", {})
    if not isinstance(audit_doc, dict):
        raise ConfigError("audit must be an object")
    _check_keys(audit_doc, {"dt_factors", "min_order", "max_relative_residual"}, "audit")
    factors_doc = audit_doc.get("dt_factors", [4, 2, 1])
    if not isinstance(factors_doc, list) or len(factors_doc) < 2:
        raise ConfigError("audit.dt_factors must list at least two factors")
    audit = AuditCfg(
        dt_factors=[_as_int(v, "audit.dt_factors[]") for v in factors_doc],
        min_order=(_as_number(audit_doc["min_order"], "audit.min_order")
                   if "min_order" in audit_doc else None),
        max_relative_residual=(
            _as_number(audit_doc["max_relative_residual"], "audit.max_relative_residual")
            if "max_relative_residual" in audit_doc else None),
    )

    out_doc = doc.get("output", {})
    if not isinstance(out_doc, dict):
        raise ConfigError("output must be an object")
    _check_keys(out_doc, {"dir", "plot_data", "verbosity"}, "output")
    verbosity = _as_str(out_doc.get("verbosity", "warning"), "output.verbosity")
    if verbosity not in ("debug", "info", "warning", "error"):
        raise ConfigError("output.verbosity must be debug|info|warning|error")
    output = OutputCfg(
        dir=_as_str(out_doc.get("dir", "out"), "output.dir"),
        plot_data=_as_bool(out_doc.get("plot_data", False), "output.plot_data"),
        verbosity=verbosity,
    )

    return Config(domain=domain, nr=nr, ntheta=ntheta, k_modes=k_modes, cache=cache,
                  noise=noise, sim=sim, study=study, audit=audit, output=output,
                  raw=doc)


def load_config(path: str) -> Config:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return parse_config(doc)
