"""Spectral operators and the time integrator for the truncated system.

A state is a length-K coefficient vector c with u = sum_k c_k v_k; the basis
is L2-orthonormal, so ||u||_L2 = |c|_2 and represented fields are
divergence-free and tangent to the boundary by construction.

The diffusion operator is diagonal (A v_k = lambda_k v_k), the convection
term is a sparse trilinear tensor T[j,l,k] = int (v_j . grad) v_l . v_k, and
one step of the semi-implicit Euler-Maruyama scheme reads

    c_k+ = [c_k + dt (f_k(t) - b_k(c)) + lambda_k^-m dB_k] / (1 + nu lambda_k dt),

implicit in the stiff diagonal linear part, explicit in convection, exact in
the additive noise increment.  nu = 0 drops the denominator and integrates
the inviscid system with the same code path.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .diskbasis import Basis, FieldTables
from .noise import NoisePath, NoiseSpec, trace_q

log = logging.getLogger(__name__)

SKEW_FAIL_TOL = 1e-6
GRADIENT_IDENTITY_FAIL_TOL = 1e-6


class AssemblyError(RuntimeError):
    """Operator assembly failed its quadrature quality gate."""


class BlowUpError(RuntimeError):
    """State became non-finite; carries the step index and partial trajectory."""

    def __init__(self, step_index: int, time: float, partial: "Trajectory"):
        super().__init__(f"non-finite state at step {step_index} (t = {time:.6g})")
        self.step_index = step_index
        self.time = time
        self.partial = partial


def _triad_ok(nj: int, nl: int, nk: int) -> bool:
    return nj + nl == nk or nj + nk == nl or nl + nk == nj


def _parity_ok(pj: str, pl: str, pk: str) -> bool:
    # the integral survives the reflection theta -> -theta only when an odd
    # number of the three modes has sine parity
    return ((pj == "sin") + (pl == "sin") + (pk == "sin")) % 2 == 1


@dataclass(frozen=True)
class ConvectionTensor:
    """Sparse trilinear convection tensor in COO-like layout.

    Only triad- and reflection-admissible entries are stored; everything else
    is exactly zero by angular orthogonality and is never computed.  After
    assembly the tensor is antisymmetrized in its last two slots so the
    quadratic form <B(u), u> vanishes to roundoff; the pre-symmetrization
    deviation is recorded as ``skew_deviation``.
    """

    k_modes: int
    j_idx: np.ndarray
    l_idx: np.ndarray
    k_idx: np.ndarray
    values: np.ndarray
    skew_deviation: float
    grad_inf_norm: float  # max over modes of the grid sup of |grad v_k|

    def dense(self) -> np.ndarray:
        t = np.zeros((self.k_modes,) * 3)
        t[self.j_idx, self.l_idx, self.k_idx] = self.values
        return t

    def apply(self, c: np.ndarray) -> np.ndarray:
        """b_k = sum_jl c_j c_l T[j,l,k]; cost proportional to stored entries."""
        contrib = self.values * c[self.j_idx] * c[self.l_idx]
        return np.bincount(self.k_idx, weights=contrib, minlength=self.k_modes)


def apply_convection(tensor: ConvectionTensor, c: np.ndarray) -> np.ndarray:
    return tensor.apply(np.asarray(c, dtype=float))


def assemble_convection(basis: Basis, tables: FieldTables | None = None) -> ConvectionTensor:
    """Quadrature assembly of all admissible convection entries."""
    tables = tables or basis.tables()
    g = basis.grid
    K = basis.k_modes
    r = g.r[:, None]
    w = tables.weights

    ur, uth = tables.ur, tables.uth
    a1 = tables.dur_dr
    a2 = tables.dur_dth / r
    a3 = tables.duth_dr
    a4 = tables.duth_dth / r
    uth_r = uth / r
    ur_r = ur / r
    wur = w * ur
    wuth = w * uth

    ns = [p.n for p in basis.pairs]
    ps = [p.parity for p in basis.pairs]
    grad_inf = 0.0
    for k in range(K):
        gsq = (a1[k] ** 2 + a3[k] ** 2
               + ((tables.dur_dth[k] - uth[k]) / r) ** 2
               + ((tables.duth_dth[k] + ur[k]) / r) ** 2)
        grad_inf = max(grad_inf, math.sqrt(float(gsq.max())))

    dense = np.zeros((K, K, K))
    admissible = np.zeros((K, K, K), dtype=bool)
    for j in range(K):
        for l in range(K):
            ks = [k for k in range(K)
                  if _triad_ok(ns[j], ns[l], ns[k]) and _parity_ok(ps[j], ps[l], ps[k])]
            if not ks:
                continue
            adv_r = ur[j] * a1[l] + uth[j] * a2[l] - uth[j] * uth_r[l]
            adv_t = ur[j] * a3[l] + uth[j] * a4[l] + uth[j] * ur_r[l]
            vals = (np.einsum("rt,krt->k", adv_r, wur[ks])
                    + np.einsum("rt,krt->k", adv_t, wuth[ks]))
            dense[j, l, ks] = vals
            admissible[j, l, ks] = True

    skew = float(np.abs(dense + dense.transpose(0, 2, 1)).max())
    if skew > SKEW_FAIL_TOL:
        raise AssemblyError(
            f"convection skew-symmetry deviation {skew:.3e} > {SKEW_FAIL_TOL:.0e}; "
            "quadrature too coarse")
    dense = 0.5 * (dense - dense.transpose(0, 2, 1))

    j_idx, l_idx, k_idx = np.nonzero(admissible)
    return ConvectionTensor(
        k_modes=K,
        j_idx=j_idx, l_idx=l_idx, k_idx=k_idx,
        values=dense[j_idx, l_idx, k_idx],
        skew_deviation=skew,
        grad_inf_norm=grad_inf,
    )


@dataclass(frozen=True)
class BoundaryGram:
    """B[j,k] = int_Gamma (kappa - alpha) v_j . v_k over the boundary circle,
    the quadratic form in the boundary production term of the energy
    identity.  ``identity_deviation`` measures how well quadrature of
    int grad v_j : grad v_k reproduces lambda_j delta_jk + B[j,k]."""

    matrix: np.ndarray
    identity_deviation: float

    def form(self, c: np.ndarray) -> float:
        return float(c @ self.matrix @ c)


def assemble_boundary_gram(basis: Basis, tables: FieldTables | None = None) -> BoundaryGram:
    tables = tables or basis.tables()
    d = basis.domain
    K = basis.k_modes
    ub = tables.uth_boundary  # u.n vanishes on the boundary, so v_j.v_k = tangential product
    B = (d.curvature - d.alpha) * basis.grid.wtheta * (ub @ ub.T)
    B = 0.5 * (B + B.T)

    lam = basis.lambdas
    target = np.diag(lam) + B
    grad_gram = np.empty((K, K))
    for j in range(K):
        for k in range(j, K):
            grad_gram[j, k] = grad_gram[k, j] = tables.gradient_contraction(j, k)
    dev = float(np.abs(grad_gram - target).max())
    if dev > GRADIENT_IDENTITY_FAIL_TOL:
        raise AssemblyError(
            f"gradient Gram identity deviation {dev:.3e} > "
            f"{GRADIENT_IDENTITY_FAIL_TOL:.0e}")
    return BoundaryGram(matrix=B, identity_deviation=dev)


@dataclass(frozen=True)
class ForcingTerm:
    """One spectral forcing coefficient: constant, or tabulated in time with
    linear interpolation."""

    mode: int
    constant: float = 0.0
    times: np.ndarray | None = None
    values: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.mode < 0:
            raise ValueError("forcing mode index must be >= 0")
        if (self.times is None) != (self.values is None):
            raise ValueError("tabulated forcing needs both times and values")
        if self.times is not None and len(self.times) != len(self.values):
            raise ValueError("times and values must have equal length")

    def value(self, t: float) -> float:
        if self.times is None:
            return self.constant
        return float(np.interp(t, self.times, self.values))


@dataclass(frozen=True)
class SimConfig:
    """One trajectory's parameters.

    The convection CFL-like bound dt <= 0.5 / (|c0| * max_k ||grad v_k||_inf)
    is advisory (the implicit diagonal part is unconditionally stable) and is
    enforced as a warning, not an error.
    """

    nu: float
    dt: float
    t_final: float
    k_modes: int
    initial: np.ndarray
    noise: NoiseSpec | None = None
    forcing: tuple[ForcingTerm, ...] = ()
    save_stride: int = 1

    def __post_init__(self) -> None:
        if self.nu < 0.0:
            raise ValueError("nu must be >= 0")
        if not self.dt > 0.0:
            raise ValueError("dt must be positive")
        if self.t_final < self.dt:
            raise ValueError("t_final must be at least one step")
        if self.save_stride < 1:
            raise ValueError("save_stride must be >= 1")
        initial = np.asarray(self.initial, dtype=float)
        if initial.shape != (self.k_modes,):
            raise ValueError(f"initial coefficients must have shape ({self.k_modes},)")
        object.__setattr__(self, "initial", initial)
        steps = self.n_steps
        if abs(steps * self.dt - self.t_final) > 1e-9 * max(1.0, self.t_final):
            raise ValueError("t_final must be an integer multiple of dt")
        if self.noise is not None:
            if self.noise.k_modes != self.k_modes:
                raise ValueError("noise k_modes must match sim k_modes")
            if abs(self.noise.dt - self.dt) > 1e-15 * self.dt:
                raise ValueError("noise dt must match sim dt")
            if self.noise.steps != steps:
                raise ValueError(f"noise steps {self.noise.steps} != sim steps {steps}")
        for term in self.forcing:
            if term.mode >= self.k_modes:
                raise ValueError(f"forcing mode {term.mode} >= k_modes {self.k_modes}")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_final / self.dt))


@dataclass(frozen=True)
class GalerkinOperator:
    """Immutable bundle of the assembled spectral operators for one basis."""

    basis: Basis
    convection: ConvectionTensor
    boundary: BoundaryGram

    @property
    def lambdas(self) -> np.ndarray:
        return self.basis.lambdas


def make_operator(basis: Basis) -> GalerkinOperator:
    tables = basis.tables()
    return GalerkinOperator(
        basis=basis,
        convection=assemble_convection(basis, tables),
        boundary=assemble_boundary_gram(basis, tables),
    )


def step(op: GalerkinOperator, cfg: SimConfig, c: np.ndarray, t: float,
         dB: np.ndarray | None) -> np.ndarray:
    """One semi-implicit Euler-Maruyama step from state c at time t."""
    lam = op.lambdas
    b = op.convection.apply(c)
    f = np.zeros_like(c)
    for term in cfg.forcing:
        f[term.mode] += term.value(t)
    rhs = c + cfg.dt * (f - b)
    if dB is not None and cfg.noise is not None:
        rhs = rhs + lam ** (-float(cfg.noise.m)) * dB
    return rhs / (1.0 + cfg.nu * lam * cfg.dt)


@dataclass
class Trajectory:
    """Coefficient trajectory with the per-step records the energy audit needs.

    Scalar records are kept at every step regardless of the save stride;
    coefficient snapshots are kept at the stride (first and last step always
    included).
    """

    config: SimConfig
    lambdas: np.ndarray
    times: np.ndarray            # (N+1,)
    energy: np.ndarray           # |c|^2 at each step
    grad_energy: np.ndarray      # c^T (Lambda + B) c
    boundary_form: np.ndarray    # c^T B c
    noise_ip: np.ndarray         # (N,) <sqrtQ dB, u> at the left endpoint
    force_ip: np.ndarray         # (N,) <f, u> at the left endpoint
    saved_steps: np.ndarray      # indices of saved coefficient rows
    coeffs: np.ndarray           # (len(saved_steps), K)

    @property
    def saved_times(self) -> np.ndarray:
        return self.times[self.saved_steps]

    @property
    def n_steps(self) -> int:
        return self.times.size - 1


def simulate(cfg: SimConfig, path: NoisePath | None, basis: Basis,
             operator: GalerkinOperator | None = None) -> Trajectory:
    """Integrate the truncated system; deterministic given its inputs.

    Records per step: energy |c|^2, gradient energy c^T(Lambda+B)c, boundary
    form c^T B c, and the left-endpoint stochastic and forcing inner
    products.  A non-finite state raises BlowUpError carrying the partial
    trajectory.
    """
    if basis.k_modes != cfg.k_modes:
        raise ValueError(f"basis K={basis.k_modes} != config K={cfg.k_modes}")
    if (path is None) != (cfg.noise is None):
        raise ValueError("path must be given exactly when cfg.noise is set")
    if path is not None:
        if path.spec.k_modes != cfg.k_modes or path.spec.steps != cfg.n_steps:
            raise ValueError("noise path shape does not match the configuration")
        if abs(path.spec.dt - cfg.dt) > 1e-15 * cfg.dt:
            raise ValueError("noise path dt does not match the configuration")
    op = operator if operator is not None else make_operator(basis)

    n = cfg.n_steps
    lam = op.lambdas
    B = op.boundary.matrix
    lam_plus_b = np.diag(lam) + B
    scale = lam ** (-float(cfg.noise.m)) if cfg.noise is not None else None

    c0_norm = float(np.linalg.norm(cfg.initial))
    if c0_norm > 0.0 and op.convection.grad_inf_norm > 0.0:
        dt_adv = 0.5 / (c0_norm * op.convection.grad_inf_norm)
        if cfg.dt > dt_adv:
            log.warning("dt=%g exceeds the advisory convection bound %.3g; "
                        "the explicit convection term may be unstable", cfg.dt, dt_adv)

    times = cfg.dt * np.arange(n + 1)
    energy = np.zeros(n + 1)
    grad_energy = np.zeros(n + 1)
    boundary_form = np.zeros(n + 1)
    noise_ip = np.zeros(n)
    force_ip = np.zeros(n)
    saved_steps = list(range(0, n + 1, cfg.save_stride))
    if saved_steps[-1] != n:
        saved_steps.append(n)
    saved_set = {s: i for i, s in enumerate(saved_steps)}
    coeffs = np.zeros((len(saved_steps), cfg.k_modes))

    static_force = all(term.times is None for term in cfg.forcing)
    f_static = np.zeros(cfg.k_modes)
    for term in cfg.forcing:
        if term.times is None:
            f_static[term.mode] += term.constant

    c = cfg.initial.copy()
    denom = 1.0 + cfg.nu * lam * cfg.dt

    def record_state(i: int, c: np.ndarray) -> None:
        energy[i] = c @ c
        boundary_form[i] = c @ B @ c
        grad_energy[i] = c @ lam_plus_b @ c
        if i in saved_set:
            coeffs[saved_set[i]] = c

    record_state(0, c)
    for i in range(n):
        t = times[i]
        if static_force:
            f = f_static
        else:
            f = f_static.copy()
            for term in cfg.forcing:
                if term.times is not None:
                    f[term.mode] += term.value(t)
        force_ip[i] = f @ c
        b = op.convection.apply(c)
        rhs = c + cfg.dt * (f - b)
        if scale is not None:
            dB = path.increments[i]
            noise_ip[i] = np.dot(scale * dB, c)
            rhs = rhs + scale * dB
        c = rhs / denom
        if not np.all(np.isfinite(c)):
            partial = Trajectory(
                config=cfg, lambdas=lam, times=times[: i + 2],
                energy=energy[: i + 2], grad_energy=grad_energy[: i + 2],
                boundary_form=boundary_form[: i + 2],
                noise_ip=noise_ip[: i + 1], force_ip=force_ip[: i + 1],
                saved_steps=np.array([s for s in saved_steps if s <= i]),
                coeffs=coeffs[: sum(1 for s in saved_steps if s <= i)],
            )
            raise BlowUpError(i + 1, float(times[i + 1]), partial)
        record_state(i + 1, c)

    return Trajectory(
        config=cfg, lambdas=lam, times=times, energy=energy,
        grad_energy=grad_energy, boundary_form=boundary_form,
        noise_ip=noise_ip, force_ip=force_ip,
        saved_steps=np.array(saved_steps), coeffs=coeffs,
    )
