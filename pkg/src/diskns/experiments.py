"""Monte Carlo harness: viscosity-uniform bound estimates and the
vanishing-viscosity experiment, coupled by common random numbers.

Every sample draws one noise path and reuses it for every viscosity on the
grid (including the inviscid run), so across-viscosity comparisons are
path-wise.  Samples are independent work units; aggregation is an ordered
reduction, so results do not depend on the execution schedule.
"""

from __future__ import annotations

import concurrent.futures
import multiprocessing
import os
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from . import __version__
from .diskbasis import Basis
from .galerkin import BlowUpError, GalerkinOperator, SimConfig, Trajectory, make_operator, simulate
from .noise import NoisePath, NoiseSpec, sample_path


class StudyAborted(RuntimeError):
    """A run blew up; identifies the offending (nu, sample)."""

    def __init__(self, nu: float, sample: int, cause: BlowUpError):
        super().__init__(
            f"trajectory blow-up at nu={nu:g}, sample={sample} "
            f"(step {cause.step_index}, t={cause.time:.6g})")
        self.nu = nu
        self.sample = sample
        self.cause = cause


@dataclass(frozen=True)
class StudySpec:
    """Monte Carlo study over a descending viscosity grid.

    ``base`` supplies everything but the viscosity and the per-sample noise
    seed; those are overridden per run.  All runs of one sample share the
    identical noise path.
    """

    base: SimConfig
    nu_grid: tuple[float, ...]
    samples: int
    seed: int
    workers: int = 1
    eval_stride: int = 1

    def __post_init__(self) -> None:
        grid = tuple(float(v) for v in self.nu_grid)
        if len(grid) < 1 or any(v <= 0.0 for v in grid):
            raise ValueError("nu_grid must contain positive viscosities")
        if any(a <= b for a, b in zip(grid, grid[1:])):
            raise ValueError("nu_grid must be strictly descending")
        object.__setattr__(self, "nu_grid", grid)
        if self.samples < 1:
            raise ValueError("samples must be >= 1")
        if self.base.noise is None and self.samples != 1:
            raise ValueError("noise-free studies are deterministic; use samples = 1")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.eval_stride < 1:
            raise ValueError("eval_stride must be >= 1")


def sample_seed(master: int, sample: int) -> int:
    """Per-sample path seed derived from the study seed; stable and
    independent of the number of samples."""
    return int(np.random.SeedSequence(master, spawn_key=(sample,)).generate_state(1, np.uint64)[0])


def _sample_noise(spec: StudySpec, sample: int) -> NoisePath | None:
    if spec.base.noise is None:
        return None
    ns = replace(spec.base.noise, seed=sample_seed(spec.seed, sample))
    return sample_path(ns)


def _run(spec: StudySpec, nu: float, sample: int, path: NoisePath | None,
         basis: Basis, op: GalerkinOperator, save_stride: int) -> Trajectory:
    noise = path.spec if path is not None else None
    cfg = replace(spec.base, nu=nu, noise=noise, save_stride=save_stride)
    try:
        return simulate(cfg, path, basis, op)
    except BlowUpError as exc:
        raise StudyAborted(nu, sample, exc) from exc


# Per-sample work functions return one row of per-nu scalars.  For worker
# processes the context is stashed in a module global before the fork, so
# the heavy operator tensors are inherited, not pickled per task.
_FORK_CTX: tuple | None = None


def _sample_worker(sample: int):
    spec, basis, op, kind, extra = _FORK_CTX
    return _one_sample(spec, basis, op, kind, extra, sample)


def _one_sample(spec: StudySpec, basis: Basis, op: GalerkinOperator, kind: str,
                extra, sample: int):
    path = _sample_noise(spec, sample)
    checksum = path.checksum() if path is not None else "deterministic"
    if kind == "inviscid":
        ref = _run(spec, 0.0, sample, path, basis, op, save_stride=1)
        row = []
        for nu in spec.nu_grid:
            tr = _run(spec, nu, sample, path, basis, op, save_stride=1)
            row.append(float(np.linalg.norm(tr.coeffs - ref.coeffs, axis=1).max()))
        return row, checksum
    if kind == "energy":
        row = []
        for nu in spec.nu_grid:
            tr = _run(spec, nu, sample, path, basis, op, save_stride=spec.base.save_stride)
            row.append(float(tr.energy.max()))
        return row, checksum
    if kind == "vorticity":
        p, xi_tables, weights = extra
        row = []
        for nu in spec.nu_grid:
            tr = _run(spec, nu, sample, path, basis, op, save_stride=spec.eval_stride)
            d = tr.coeffs  # (n_saved, K)
            xi = np.tensordot(d, xi_tables, axes=(1, 0))  # (n_saved, nr, ntheta)
            norms = np.sum(weights[None] * np.abs(xi) ** p, axis=(1, 2))
            row.append(float(norms.max()))
        return row, checksum
    raise ValueError(f"unknown study kind {kind!r}")


def _map_samples(spec: StudySpec, basis: Basis, op: GalerkinOperator, kind: str,
                 extra=None) -> tuple[np.ndarray, list[str]]:
    global _FORK_CTX
    rows: list = [None] * spec.samples
    checksums: list[str] = [""] * spec.samples
    use_fork = (spec.workers > 1 and spec.samples > 1
                and "fork" in multiprocessing.get_all_start_methods())
    if use_fork:
        _FORK_CTX = (spec, basis, op, kind, extra)
        try:
            ctx = multiprocessing.get_context("fork")
            with concurrent.futures.ProcessPoolExecutor(
                    max_workers=min(spec.workers, spec.samples), mp_context=ctx) as ex:
                for i, out in enumerate(ex.map(_sample_worker, range(spec.samples))):
                    rows[i], checksums[i] = out
        finally:
            _FORK_CTX = None
    else:
        for i in range(spec.samples):
            rows[i], checksums[i] = _one_sample(spec, basis, op, kind, extra, i)
    return np.array(rows), checksums  # (samples, n_nu)


@dataclass
class LogLogFit:
    slope: float
    intercept: float
    r_squared: float


def fit_loglog(x: Sequence[float], y: Sequence[float]) -> LogLogFit:
    """Ordinary least squares on (log x, log y); requires >= 3 positive points."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 3 or x.size != y.size:
        raise ValueError("need at least 3 (x, y) points")
    if np.any(x <= 0.0) or np.any(y <= 0.0):
        raise ValueError("log-log fit requires strictly positive data")
    lx, ly = np.log(x), np.log(y)
    slope, intercept = np.polyfit(lx, ly, 1)
    pred = slope * lx + intercept
    ss_res = float(np.sum((ly - pred) ** 2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return LogLogFit(slope=float(slope), intercept=float(intercept), r_squared=r2)


@dataclass
class InviscidResult:
    """Per-viscosity sup-in-time distances to the common-noise inviscid run."""

    nu: np.ndarray
    sample_sup: np.ndarray  # (samples, n_nu)
    fit: LogLogFit
    path_checksums: list[str]

    @property
    def mean(self) -> np.ndarray:
        return self.sample_sup.mean(axis=0)

    @property
    def std_err(self) -> np.ndarray:
        n = self.sample_sup.shape[0]
        if n == 1:
            return np.zeros(self.sample_sup.shape[1])
        return self.sample_sup.std(axis=0, ddof=1) / np.sqrt(n)

    @property
    def monotone_within_se(self) -> bool:
        m, se = self.mean, self.std_err
        return bool(np.all(m[1:] <= m[:-1] + np.maximum(se[1:], se[:-1])))

    @property
    def strictly_decreasing(self) -> bool:
        return bool(np.all(np.diff(self.mean) < 0.0))


def inviscid_study(spec: StudySpec, basis: Basis,
                   operator: GalerkinOperator | None = None) -> InviscidResult:
    """Common-noise distances sup_t |c_nu(t) - c_0(t)|_2 per sample and
    viscosity, with a log-log rate fit of the sample mean."""
    if spec.base.noise is not None and spec.base.noise.m <= 4:
        raise ValueError("inviscid studies need covariance exponent m > 4")
    op = operator if operator is not None else make_operator(basis)
    sup, checksums = _map_samples(spec, basis, op, "inviscid")
    fit = fit_loglog(np.array(spec.nu_grid), sup.mean(axis=0))
    return InviscidResult(nu=np.array(spec.nu_grid), sample_sup=sup, fit=fit,
                          path_checksums=checksums)


@dataclass
class BoundResult:
    """Monte Carlo estimates of a sup-in-time functional per viscosity."""

    nu: np.ndarray
    sample_values: np.ndarray  # (samples, n_nu)
    functional: str
    path_checksums: list[str]

    @property
    def estimate(self) -> np.ndarray:
        return self.sample_values.mean(axis=0)

    @property
    def std_err(self) -> np.ndarray:
        n = self.sample_values.shape[0]
        if n == 1:
            return np.zeros(self.sample_values.shape[1])
        return self.sample_values.std(axis=0, ddof=1) / np.sqrt(n)

    @property
    def ratio_max_min(self) -> float:
        est = self.estimate
        if np.any(est <= 0.0):
            return np.inf if np.any(est > 0.0) else 1.0
        return float(est.max() / est.min())


def uniform_bound_study(spec: StudySpec, basis: Basis,
                        operator: GalerkinOperator | None = None) -> BoundResult:
    """E sup_t |u_nu(t)|^2 across the viscosity grid (common noise)."""
    op = operator if operator is not None else make_operator(basis)
    vals, checksums = _map_samples(spec, basis, op, "energy")
    return BoundResult(nu=np.array(spec.nu_grid), sample_values=vals,
                       functional="sup_energy", path_checksums=checksums)


def vorticity_bound_study(spec: StudySpec, basis: Basis, p: float = 4.0,
                          operator: GalerkinOperator | None = None) -> BoundResult:
    """E sup_t ||curl u_nu||_p^p across the viscosity grid; requires p > 2.

    The vorticity field is evaluated on the quadrature grid every
    ``eval_stride`` steps (sup over that time subgrid).
    """
    if not p > 2.0:
        raise ValueError(f"vorticity bound study requires p > 2, got {p}")
    op = operator if operator is not None else make_operator(basis)
    tables = basis.tables()
    extra = (p, tables.xi, basis.grid.weights2d)
    vals, checksums = _map_samples(spec, basis, op, "vorticity", extra)
    return BoundResult(nu=np.array(spec.nu_grid), sample_values=vals,
                       functional=f"sup_vorticity_l{p:g}^p", path_checksums=checksums)


@dataclass
class RunManifest:
    """Provenance of one artifact-producing command: enough to re-execute
    the run bit-identically."""

    command: str
    config: dict
    seed: int | None
    basis_checksum: str
    code_version: str = field(default=__version__)
    created_unix: float = field(default_factory=time.time)
    outputs: list[str] = field(default_factory=list)
    path_checksums: list[str] = field(default_factory=list)
    wall_clock_s: float | None = None
    status: str = "started"

    def to_dict(self) -> dict:
        import numpy as _np

        def clean(v):
            if isinstance(v, dict):
                return {k: clean(x) for k, x in v.items()}
            if isinstance(v, (list, tuple)):
                return [clean(x) for x in v]
            if isinstance(v, _np.generic):
                return v.item()
            return v

        return {
            "command": self.command,
            "config": clean(self.config),
            "seed": self.seed,
            "basis_checksum": self.basis_checksum,
            "code_version": self.code_version,
            "created_unix": self.created_unix,
            "outputs": list(self.outputs),
            "path_checksums": list(self.path_checksums),
            "wall_clock_s": self.wall_clock_s,
            "status": self.status,
        }

    def write(self, path: str | os.PathLike) -> None:
        import json

        from .fileio import atomic_write_text

        atomic_write_text(path, json.dumps(self.to_dict(), indent=1) + "\n")
