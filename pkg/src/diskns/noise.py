"""Trace-class Q-Wiener increments for the spectral system.

The driving noise is sum_k lambda_k^{-m} v_k beta_k(t) with independent
standard Brownian motions beta_k.  Paths store the *raw* increments
dbeta_k ~ N(0, dt): the lambda_k^{-m} factor is applied at use sites, so a
single path serves every viscosity and every covariance exponent m.

Each mode draws from its own counter-derived substream (the mode index is
mixed into the seed sequence), so truncating to fewer modes reproduces the
identical leading columns.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field, replace

import numpy as np

DEFAULT_M = 5  # smallest exponent giving the boundary-layer-free regularity (m > 4)

_DUMP_MAGIC = b"QWPATH01"


@dataclass(frozen=True)
class NoiseSpec:
    """Covariance exponent, truncation, seed and time discretization."""

    k_modes: int
    seed: int
    dt: float
    steps: int
    m: int = DEFAULT_M

    def __post_init__(self) -> None:
        if self.k_modes < 1:
            raise ValueError("k_modes must be >= 1")
        if self.m < 1:
            raise ValueError("m must be a positive integer")
        if not self.dt > 0.0:
            raise ValueError("dt must be positive")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in 64 bits")


@dataclass(frozen=True)
class NoisePath:
    """Raw Brownian increments, shape (steps, k_modes), plus provenance."""

    spec: NoiseSpec
    increments: np.ndarray = field(repr=False)
    provenance: str = "sampled"

    def __post_init__(self) -> None:
        if self.increments.shape != (self.spec.steps, self.spec.k_modes):
            raise ValueError(
                f"increments shape {self.increments.shape} does not match spec "
                f"({self.spec.steps}, {self.spec.k_modes})")
        self.increments.setflags(write=False)

    def checksum(self) -> str:
        return hashlib.sha256(self.increments.tobytes()).hexdigest()


def _mode_stream(seed: int, mode: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(mode,))))


def sample_path(spec: NoiseSpec) -> NoisePath:
    """Draw the full increment array; entry (i, k) ~ N(0, dt) independent.

    Mode k consumes only its own substream, so a path with fewer modes and
    the same seed is exactly the leading columns of this one.
    """
    inc = np.empty((spec.steps, spec.k_modes))
    sigma = np.sqrt(spec.dt)
    for k in range(spec.k_modes):
        inc[:, k] = _mode_stream(spec.seed, k).normal(0.0, sigma, spec.steps)
    return NoisePath(spec=spec, increments=inc)


def zero_path(spec: NoiseSpec) -> NoisePath:
    return NoisePath(spec=spec, increments=np.zeros((spec.steps, spec.k_modes)),
                     provenance="zero")


def coarsen_path(path: NoisePath, factor: int) -> NoisePath:
    """Sum consecutive groups of ``factor`` increments, yielding the same
    Brownian path on a grid with dt * factor."""
    if factor < 1 or path.spec.steps % factor != 0:
        raise ValueError(f"factor {factor} must divide steps {path.spec.steps}")
    if factor == 1:
        return path
    steps = path.spec.steps // factor
    inc = path.increments.reshape(steps, factor, path.spec.k_modes).sum(axis=1)
    spec = replace(path.spec, dt=path.spec.dt * factor, steps=steps)
    return NoisePath(spec=spec, increments=inc,
                     provenance=f"coarsened(x{factor}) from {path.provenance}")


def trace_q(lambdas: np.ndarray, m: int) -> float:
    """Trace of the truncated covariance: sum_k lambda_k^(-2m)."""
    lam = np.asarray(lambdas, dtype=float)
    if np.any(lam <= 0.0):
        raise ValueError("all eigenvalues must be positive")
    return float(np.sum(lam ** (-2.0 * m)))


@dataclass(frozen=True)
class SummabilityReport:
    """Partial sums of lambda_k^(-(2m-3)), whose convergence certifies that
    the covariance is trace class with the margin the estimates need."""

    m: int
    increments: np.ndarray
    partial_sums: np.ndarray
    tail_decay_exponent: float
    summable: bool

    @property
    def total(self) -> float:
        return float(self.partial_sums[-1])

    @property
    def final_increment_ratio(self) -> float:
        return float(self.increments[-1] / self.partial_sums[-1])

    @property
    def tail_increments(self) -> np.ndarray:
        k = max(2, self.increments.size // 10)
        return self.increments[-k:]


def summability_report(lambdas: np.ndarray, m: int) -> SummabilityReport:
    """Partial sums M_K = sum lambda_k^-(2m-3) with a tail decay estimate.

    The decay exponent is the log-log slope of the increments over the last
    half of the spectrum; a p-series converges iff p > 1, so ``summable``
    requires the fitted exponent to clear 1 with a small margin.
    """
    lam = np.asarray(lambdas, dtype=float)
    if np.any(lam <= 0.0):
        raise ValueError("all eigenvalues must be positive")
    if np.any(np.diff(lam) < 0.0):
        raise ValueError("eigenvalues must be sorted ascending")
    inc = lam ** (-(2.0 * m - 3.0))
    partial = np.cumsum(inc)
    half = max(2, lam.size // 2)
    k_idx = np.arange(1, lam.size + 1, dtype=float)[-half:]
    tail = inc[-half:]
    slope = -np.polyfit(np.log(k_idx), np.log(tail), 1)[0] if lam.size >= 3 else np.nan
    summable = bool(np.isfinite(slope) and slope > 1.05)
    return SummabilityReport(m=m, increments=inc, partial_sums=partial,
                             tail_decay_exponent=float(slope), summable=summable)


def tilde_q_diagonal(basis, m: int) -> np.ndarray:
    """Coefficients lambda_k^(-m) * mu_k of the vorticity-space noise in the
    normalized-curl expansion; their squares sum to the vorticity trace."""
    lam = basis.lambdas
    return lam ** (-float(m)) * basis.mus


# ---------------------------------------------------------------------------
# binary dump: 32-byte header {magic, K, steps, seed} then row-major float64 LE


def save_path(path: NoisePath, file: str) -> None:
    header = _DUMP_MAGIC + struct.pack("<QQQ", path.spec.k_modes, path.spec.steps,
                                       path.spec.seed)
    assert len(header) == 32
    data = path.increments.astype("<f8").tobytes(order="C")
    from .fileio import atomic_write_bytes

    atomic_write_bytes(file, header + data)


def load_path(file: str, spec: NoiseSpec) -> NoisePath:
    with open(file, "rb") as fh:
        header = fh.read(32)
        if header[:8] != _DUMP_MAGIC:
            raise ValueError(f"{file} is not a noise path dump")
        k, steps, seed = struct.unpack("<QQQ", header[8:])
        if (k, steps, seed) != (spec.k_modes, spec.steps, spec.seed):
            raise ValueError(
                f"dump header (K={k}, steps={steps}, seed={seed}) does not match spec")
        inc = np.frombuffer(fh.read(), dtype="<f8").reshape(steps, k).copy()
    return NoisePath(spec=spec, increments=inc, provenance=f"loaded from {file}")
