"""Eigenbasis of the Stokes operator on the unit disk under Navier
slip-with-friction boundary conditions, with constant friction coefficient
alpha.

Each eigenfield derives from a stream function

    psi(r, theta) = C * [J_n(s r) - J_n(s) r^n] / s^2 * trig(n theta),

which vanishes on the boundary circle, so the velocity u = (psi_theta / r,
-psi_r) in polar components is divergence-free and tangent to the boundary.
The vorticity is xi = -Lap psi = C J_n(s r) trig(n theta), and the slip
condition xi = (2*kappa - alpha) u.t on r = 1 reduces to the secular equation

    G_n(s) = s^2 J_n(s) + (2 - alpha) (s J_n'(s) - n J_n(s)) = 0,

whose positive roots s give the eigenvalues lambda = s^2.  With alpha = 2
(the free / zero-boundary-vorticity case) the roots are exactly the zeros of
J_n.

The module finds the roots, normalizes each field to unit L2 norm, validates
orthonormality and the boundary identity on a Gauss-Legendre x trapezoid
quadrature grid, and persists the result to a JSON cache.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .bessel import bessel_j, bessel_j_grid, bessel_j_second_derivative

log = logging.getLogger(__name__)

DEFAULT_ALPHA = 2.0
SCAN_STEP = 0.05
BISECT_TOL = 1e-12
S_MAX_LIMIT = 200.0
GRAM_FAIL_TOL = 1e-6

CACHE_FORMAT_VERSION = 1

COS, SIN = "cos", "sin"


class BasisBuildError(RuntimeError):
    """Raised when the requested basis cannot be built to tolerance."""


class StaleCacheError(RuntimeError):
    """Cache file fails its checksum; rebuild with cmd_basis or build_basis."""


class CacheMismatchError(RuntimeError):
    """Cache file is valid but was built for different parameters."""


@dataclass(frozen=True)
class DomainSpec:
    """Unit disk with constant friction coefficient alpha > 0 on the boundary.

    Radius and boundary curvature are fixed at 1; alpha = 2 is the free
    (zero boundary vorticity) case.
    """

    alpha: float = DEFAULT_ALPHA
    radius: float = 1.0
    curvature: float = 1.0

    def __post_init__(self) -> None:
        if self.radius != 1.0 or self.curvature != 1.0:
            raise ValueError("only the unit disk (radius = curvature = 1) is supported")
        if not (self.alpha > 0.0) or not np.isfinite(self.alpha):
            raise ValueError(f"alpha must be positive and finite, got {self.alpha}")

    @property
    def is_free_boundary(self) -> bool:
        return self.alpha == 2.0 * self.curvature


@dataclass(frozen=True)
class EigenPair:
    """One eigenmode: angular index, parity, secular root and derived scalars.

    ``norm_c`` scales the stream function so the velocity has unit L2 norm;
    ``mu`` is the L2 norm of the resulting vorticity.
    """

    n: int
    parity: str
    s: float
    lam: float
    norm_c: float
    mu: float

    def __post_init__(self) -> None:
        if self.parity not in (COS, SIN):
            raise ValueError(f"parity must be 'cos' or 'sin', got {self.parity!r}")
        if self.n == 0 and self.parity == SIN:
            raise ValueError("n = 0 modes exist only with cosine parity")
        if not (self.s > 0.0 and self.lam > 0.0):
            raise ValueError("eigen frequencies and eigenvalues must be positive")


class QuadratureGrid:
    """Gauss-Legendre radial rule on [0, 1] (area weight r dr folded into the
    weights) tensored with a uniform trapezoid rule on [0, 2pi)."""

    def __init__(self, nr: int, ntheta: int):
        if nr < 2 or ntheta < 3:
            raise ValueError("grid too small: need nr >= 2, ntheta >= 3")
        self.nr = int(nr)
        self.ntheta = int(ntheta)
        x, w = np.polynomial.legendre.leggauss(self.nr)
        self.r = 0.5 * (x + 1.0)
        self.wr = 0.5 * w * self.r
        self.theta = 2.0 * np.pi * np.arange(self.ntheta) / self.ntheta
        self.wtheta = 2.0 * np.pi / self.ntheta
        area = self.wr.sum() * self.wtheta * self.ntheta
        if abs(area - np.pi) > 1e-12 * np.pi:
            raise ValueError(f"disk area off by {abs(area - np.pi):.2e}; grid unusable")
        # full 2D weight array, shape (nr, ntheta)
        self.weights2d = self.wr[:, None] * np.full(self.ntheta, self.wtheta)[None, :]

    def supports_angular_order(self, n_max: int) -> bool:
        """Trapezoid rule integrates triple products of harmonics up to n_max
        exactly iff ntheta >= 3*n_max + 2."""
        return self.ntheta >= 3 * n_max + 2

    def __eq__(self, other: object) -> bool:
        return (
            isinstance(other, QuadratureGrid)
            and self.nr == other.nr
            and self.ntheta == other.ntheta
        )

    def __repr__(self) -> str:
        return f"QuadratureGrid(nr={self.nr}, ntheta={self.ntheta})"


def secular(n: int, s: float, alpha: float) -> float:
    """Secular function G_n(s) whose positive roots are the admissible
    eigen-frequencies of angular family n."""
    if not s > 0.0:
        raise ValueError(f"secular requires s > 0, got {s}")
    j, jp = bessel_j(n, s)
    return s * s * j + (2.0 - alpha) * (s * jp - n * j)


def scan_sign_changes(
    fn: Callable[[float], float],
    s_max: float,
    *,
    step: float = SCAN_STEP,
    tol: float = BISECT_TOL,
    tangency_dip: float = 0.3,
    tangency_tol: float = 1e-8,
) -> tuple[np.ndarray, list[float]]:
    """Locate roots of ``fn`` on (0, s_max] by sign-change scan + bisection.

    Returns (roots ascending, suspected tangency locations).  A tangency is
    suspected when |fn| dips far below its neighbours at a local minimum of
    the scan without a sign change and the parabola through the triple
    nearly touches zero; such points are reported, not resolved.
    """
    grid = np.arange(step, s_max + 0.5 * step, step)
    grid = grid[grid <= s_max + 1e-12]
    vals = np.array([fn(float(s)) for s in grid])
    roots: list[float] = []
    for i in range(len(grid) - 1):
        a, b, fa, fb = grid[i], grid[i + 1], vals[i], vals[i + 1]
        if fa == 0.0:
            roots.append(float(a))
            continue
        if fa * fb < 0.0:
            while b - a > tol:
                m = 0.5 * (a + b)
                fm = fn(m)
                if fm == 0.0:
                    a = b = m
                    break
                if fa * fm < 0.0:
                    b = m
                else:
                    a, fa = m, fm
            roots.append(0.5 * (a + b))
    if vals[-1] == 0.0:
        roots.append(float(grid[-1]))

    tangencies: list[float] = []
    absv = np.abs(vals)
    for i in range(1, len(grid) - 1):
        if vals[i - 1] * vals[i] < 0.0 or vals[i] * vals[i + 1] < 0.0:
            continue
        if not (absv[i] < absv[i - 1] and absv[i] < absv[i + 1]):
            continue
        neighbour = 0.5 * (absv[i - 1] + absv[i + 1])
        if neighbour == 0.0 or absv[i] > tangency_dip * neighbour:
            continue
        # parabola through the triple; its vertex value estimates min |fn|
        d2 = vals[i - 1] - 2.0 * vals[i] + vals[i + 1]
        if d2 == 0.0:
            continue
        ds = 0.5 * (vals[i - 1] - vals[i + 1]) / d2 * step
        vmin = fn(float(grid[i] + ds)) if abs(ds) < step else vals[i]
        if abs(vmin) <= tangency_tol * max(1.0, neighbour):
            tangencies.append(float(grid[i] + ds))
    return np.array(roots), tangencies


def _find_roots_flagged(n: int, s_max: float, alpha: float) -> tuple[np.ndarray, list[str]]:
    if s_max > S_MAX_LIMIT:
        raise ValueError(f"s_max={s_max} exceeds supported range {S_MAX_LIMIT}")
    roots, tangencies = scan_sign_changes(lambda s: secular(n, s, alpha), s_max)
    flags = [
        (f"family n={n}, alpha={alpha:g}: suspected double (tangential) root near "
         f"s={t:.6f}; sign-change scan cannot isolate it")
        for t in tangencies
    ]
    for msg in flags:
        log.warning(msg)
    keep = roots[roots * roots > 0.0]
    if keep.size != roots.size:
        log.warning("family n=%d: discarded %d root(s) with nonpositive eigenvalue",
                    n, roots.size - keep.size)
    return keep, flags


def find_roots(n: int, s_max: float, alpha: float) -> np.ndarray:
    """All roots of the secular function of family n on (0, s_max], ascending.

    Sign changes are located with scan step 0.05 and refined by bisection to
    1e-12.  Roots with nonpositive eigenvalue are discarded with a warning
    (they should not occur); suspected tangential roots are logged as a
    diagnostic.
    """
    return _find_roots_flagged(n, s_max, alpha)[0]


def _radial_profiles(n: int, s: float, r: np.ndarray):
    """Radial factors of one mode on the nodes r: J_n(sr), stream factor g,
    g', g'' and the scalars (J_n(s), g'(1))."""
    x = s * r
    j, jp = bessel_j_grid(n, x)
    jpp = bessel_j_second_derivative(n, x, j, jp)
    js, jps = bessel_j(n, s)
    s2 = s * s
    rn = r**n
    g = (j - js * rn) / s2
    gp = (s * jp - n * js * rn / r) / s2
    if n >= 2:
        gpp = (s2 * jpp - n * (n - 1) * js * rn / (r * r)) / s2
    else:
        gpp = jpp  # r^n term is affine for n <= 1, second derivative zero
    gp1 = (s * jps - n * js) / s2
    return j, g, gp, gpp, js, gp1


_ANGULAR_FACTOR = {0: 2.0 * np.pi}  # else pi


def _angular_factor(n: int) -> float:
    return 2.0 * np.pi if n == 0 else np.pi


def _normalize_mode(n: int, s: float, grid: QuadratureGrid) -> tuple[float, float]:
    """norm_c and mu for the mode (n, s): unit-velocity scaling via
    ||v||^2 = int xi psi (psi vanishes on the boundary), mu = ||curl v||."""
    j, g, _, _, _, _ = _radial_profiles(n, s, grid.r)
    cn = _angular_factor(n)
    v_sq = cn * np.sum(grid.wr * j * g)
    if not v_sq > 0.0:
        raise BasisBuildError(
            f"nonpositive velocity norm^2 = {v_sq:.3e} for mode (n={n}, s={s}); "
            "radial quadrature too coarse"
        )
    norm_c = 1.0 / np.sqrt(v_sq)
    mu = norm_c * np.sqrt(cn * np.sum(grid.wr * j * j))
    return float(norm_c), float(mu)


@dataclass(frozen=True)
class Basis:
    """Truncated eigenbasis: K modes sorted by ascending eigenvalue, the
    quadrature grid they were validated on, and a content checksum."""

    domain: DomainSpec
    pairs: tuple[EigenPair, ...]
    grid: QuadratureGrid
    checksum: str
    build_warnings: tuple[str, ...] = field(default=(), compare=False)

    @property
    def k_modes(self) -> int:
        return len(self.pairs)

    @property
    def lambdas(self) -> np.ndarray:
        return np.array([p.lam for p in self.pairs])

    @property
    def mus(self) -> np.ndarray:
        return np.array([p.mu for p in self.pairs])

    @property
    def n_max(self) -> int:
        return max(p.n for p in self.pairs)

    def tables(self) -> "FieldTables":
        cached = getattr(self, "_tables", None)
        if cached is None:
            cached = FieldTables(self)
            object.__setattr__(self, "_tables", cached)
        return cached


def _canonical_pair_lines(pairs: Sequence[EigenPair]) -> str:
    return "\n".join(
        f"{p.n}|{p.parity}|{p.s:.17g}|{p.lam:.17g}|{p.norm_c:.17g}|{p.mu:.17g}"
        for p in pairs
    )


def basis_checksum(pairs: Sequence[EigenPair]) -> str:
    return hashlib.sha256(_canonical_pair_lines(pairs).encode()).hexdigest()


def _enumerate_candidates(alpha: float, s_cap: float) -> tuple[list[tuple[int, float]], list[str]]:
    """(n, s) secular roots with s <= s_cap for every angular family that can
    contribute; scanning stops after two consecutive empty families."""
    out: list[tuple[int, float]] = []
    flags: list[str] = []
    empty_streak = 0
    n = 0
    while empty_streak < 2 and n <= 200:
        roots, fl = _find_roots_flagged(n, s_cap, alpha)
        flags.extend(fl)
        if roots.size == 0:
            empty_streak += 1
        else:
            empty_streak = 0
            out.extend((n, float(s)) for s in roots)
        n += 1
    return out, flags


def default_grid_for(s_max: float, n_max: int) -> QuadratureGrid:
    """Grid sized so triple products of basis fields integrate to roundoff:
    radial node count grows with the largest frequency, angular count obeys
    the 3*n_max + 2 harmonic rule."""

    def _roundup8(v: int) -> int:
        return ((v + 7) // 8) * 8

    nr = max(64, _roundup8(int(np.ceil(2.0 * s_max)) + 32))
    ntheta = max(64, _roundup8(3 * n_max + 2))
    return QuadratureGrid(nr, ntheta)


def build_basis(k_modes: int, domain: DomainSpec, grid: QuadratureGrid | None = None) -> Basis:
    """Construct the first ``k_modes`` eigenmodes sorted by eigenvalue.

    Roots are enumerated over angular families (two parities per root for
    n >= 1), normalized on the quadrature grid, and the velocity Gram matrix
    is validated against the identity.  The vorticity Gram matrix is
    validated as well when alpha = 2, where the family {curl v_k} is
    L2-orthogonal; for alpha != 2 its deviation is only reported (the
    orthogonality is specific to the free-boundary case on the disk).
    """
    if k_modes < 1:
        raise ValueError("k_modes must be >= 1")

    s_cap = 12.0
    while True:
        candidates, tangency_flags = _enumerate_candidates(domain.alpha, s_cap)
        weight = sum(1 if n == 0 else 2 for n, _ in candidates)
        if weight >= k_modes:
            break
        s_cap *= 1.35
        if s_cap > S_MAX_LIMIT:
            raise BasisBuildError(
                f"cannot reach K={k_modes} modes with s <= {S_MAX_LIMIT}")

    expanded: list[tuple[float, int, int, float]] = []  # (lam, n, parity_idx, s)
    for n, s in candidates:
        expanded.append((s * s, n, 0, s))
        if n > 0:
            expanded.append((s * s, n, 1, s))
    expanded.sort()
    selected = expanded[:k_modes]

    n_max = max(item[1] for item in selected)
    s_max = max(item[3] for item in selected)
    if grid is None:
        grid = default_grid_for(s_max, n_max)
    if not grid.supports_angular_order(n_max):
        raise BasisBuildError(
            f"ntheta={grid.ntheta} < 3*n_max+2 = {3 * n_max + 2}; angular rule "
            "cannot integrate triple products exactly"
        )

    norm_cache: dict[tuple[int, float], tuple[float, float]] = {}
    pairs = []
    for lam, n, parity_idx, s in selected:
        key = (n, s)
        if key not in norm_cache:
            norm_cache[key] = _normalize_mode(n, s, grid)
        norm_c, mu = norm_cache[key]
        pairs.append(EigenPair(n=n, parity=(COS, SIN)[parity_idx], s=s, lam=lam,
                               norm_c=norm_c, mu=mu))

    basis = Basis(
        domain=domain,
        pairs=tuple(pairs),
        grid=grid,
        checksum=basis_checksum(pairs),
    )

    tables = basis.tables()
    vdev = tables.velocity_gram_deviation()
    if vdev > GRAM_FAIL_TOL:
        raise BasisBuildError(
            f"velocity Gram deviation {vdev:.3e} > {GRAM_FAIL_TOL:.0e}; "
            "quadrature grid too coarse"
        )
    warnings_acc = list(tangency_flags)
    zdev = tables.vorticity_gram_deviation()
    if domain.is_free_boundary:
        if zdev > GRAM_FAIL_TOL:
            raise BasisBuildError(
                f"vorticity Gram deviation {zdev:.3e} > {GRAM_FAIL_TOL:.0e} at alpha = 2"
            )
    elif zdev > GRAM_FAIL_TOL:
        msg = (f"vorticity family not L2-orthogonal at alpha={domain.alpha:g} "
               f"(Gram deviation {zdev:.3e}); exact only for alpha = 2")
        log.info(msg)
        warnings_acc.append(msg)
    bdev = tables.boundary_identity_residual()
    if bdev > 1e-8:
        raise BasisBuildError(f"boundary identity residual {bdev:.3e} > 1e-8")

    if warnings_acc:
        object.__setattr__(basis, "build_warnings", tuple(warnings_acc))
    log.debug("built basis K=%d alpha=%g: gram dev %.2e, vort gram dev %.2e, "
              "boundary residual %.2e", k_modes, domain.alpha, vdev, zdev, bdev)
    return basis


class FieldTables:
    """Mode fields sampled on the quadrature grid, stacked over modes.

    Shapes are (K, nr, ntheta) for interior tables and (K, ntheta) for
    boundary traces.  Tables are computed lazily and cached; a Basis is
    immutable so the cache is safe to share.
    """

    def __init__(self, basis: Basis):
        self.basis = basis
        self.grid = basis.grid
        self._cache: dict[str, np.ndarray] = {}

    def _build_interior(self) -> None:
        g = self.grid
        K = self.basis.k_modes
        shape = (K, g.nr, g.ntheta)
        ur = np.zeros(shape)
        uth = np.zeros(shape)
        dur_dr = np.zeros(shape)
        dur_dth = np.zeros(shape)
        duth_dr = np.zeros(shape)
        duth_dth = np.zeros(shape)
        xi = np.zeros(shape)
        xi_dr = np.zeros(shape)
        xi_dth = np.zeros(shape)
        r = g.r
        profile_cache: dict[tuple[int, float], tuple] = {}
        for k, p in enumerate(self.basis.pairs):
            key = (p.n, p.s)
            if key not in profile_cache:
                profile_cache[key] = _radial_profiles(p.n, p.s, r)
            j, gr, gp, gpp, _, _ = profile_cache[key]
            x = p.s * r
            jb, jpb = bessel_j_grid(p.n, x)
            n = p.n
            if p.parity == COS:
                T = np.cos(n * g.theta)
                Tp = -n * np.sin(n * g.theta)
            else:
                T = np.sin(n * g.theta)
                Tp = n * np.cos(n * g.theta)
            C = p.norm_c
            ur[k] = C * (gr / r)[:, None] * Tp[None, :]
            uth[k] = -C * gp[:, None] * T[None, :]
            dur_dr[k] = C * (gp / r - gr / (r * r))[:, None] * Tp[None, :]
            dur_dth[k] = -C * n * n * (gr / r)[:, None] * T[None, :]
            duth_dr[k] = -C * gpp[:, None] * T[None, :]
            duth_dth[k] = -C * gp[:, None] * Tp[None, :]
            xi[k] = C * jb[:, None] * T[None, :]
            xi_dr[k] = C * p.s * jpb[:, None] * T[None, :]
            xi_dth[k] = C * jb[:, None] * Tp[None, :]
        self._cache.update(
            ur=ur, uth=uth, dur_dr=dur_dr, dur_dth=dur_dth,
            duth_dr=duth_dr, duth_dth=duth_dth,
            xi=xi, xi_dr=xi_dr, xi_dth=xi_dth,
        )

    def _build_boundary(self) -> None:
        g = self.grid
        K = self.basis.k_modes
        uth_b = np.zeros((K, g.ntheta))
        xi_b = np.zeros((K, g.ntheta))
        for k, p in enumerate(self.basis.pairs):
            js, jps = bessel_j(p.n, p.s)
            gp1 = (p.s * jps - p.n * js) / (p.s * p.s)
            n = p.n
            T = np.cos(n * g.theta) if p.parity == COS else np.sin(n * g.theta)
            uth_b[k] = -p.norm_c * gp1 * T
            xi_b[k] = p.norm_c * js * T
        self._cache.update(uth_boundary=uth_b, xi_boundary=xi_b)

    def _get(self, name: str) -> np.ndarray:
        if name not in self._cache:
            if name in ("uth_boundary", "xi_boundary"):
                self._build_boundary()
            else:
                self._build_interior()
        return self._cache[name]

    # interior tables
    @property
    def ur(self) -> np.ndarray: return self._get("ur")
    @property
    def uth(self) -> np.ndarray: return self._get("uth")
    @property
    def dur_dr(self) -> np.ndarray: return self._get("dur_dr")
    @property
    def dur_dth(self) -> np.ndarray: return self._get("dur_dth")
    @property
    def duth_dr(self) -> np.ndarray: return self._get("duth_dr")
    @property
    def duth_dth(self) -> np.ndarray: return self._get("duth_dth")
    @property
    def xi(self) -> np.ndarray: return self._get("xi")
    @property
    def xi_dr(self) -> np.ndarray: return self._get("xi_dr")
    @property
    def xi_dth(self) -> np.ndarray: return self._get("xi_dth")
    # boundary traces at r = 1
    @property
    def uth_boundary(self) -> np.ndarray: return self._get("uth_boundary")
    @property
    def xi_boundary(self) -> np.ndarray: return self._get("xi_boundary")

    @property
    def weights(self) -> np.ndarray:
        return self.grid.weights2d

    def velocity_gram(self) -> np.ndarray:
        w = self.weights
        return (np.einsum("jrt,krt->jk", self.ur * w, self.ur)
                + np.einsum("jrt,krt->jk", self.uth * w, self.uth))

    def velocity_gram_deviation(self) -> float:
        gram = self.velocity_gram()
        return float(np.abs(gram - np.eye(self.basis.k_modes)).max())

    def vorticity_gram(self) -> np.ndarray:
        z = self.xi / self.basis.mus[:, None, None]
        return np.einsum("jrt,krt->jk", z * self.weights, z)

    def vorticity_gram_deviation(self) -> float:
        gram = self.vorticity_gram()
        return float(np.abs(gram - np.eye(self.basis.k_modes)).max())

    def boundary_identity_residual(self) -> float:
        """sup over modes and boundary nodes of
        |xi_k(1,.) - (2*kappa - alpha) (u_k . t)(1,.)|."""
        d = self.basis.domain
        coef = 2.0 * d.curvature - d.alpha
        return float(np.abs(self.xi_boundary - coef * self.uth_boundary).max())

    def impermeability_residual(self) -> float:
        """sup |u_k . n| on the boundary; zero by construction since the
        stream factor vanishes identically at r = 1."""
        res = 0.0
        for p in self.basis.pairs:
            js, _ = bessel_j(p.n, p.s)
            g1 = (js - js) / (p.s * p.s)  # exact cancellation
            res = max(res, abs(p.norm_c * p.n * g1))
        return res

    def gradient_contraction(self, j: int, k: int) -> float:
        """int grad v_j : grad v_k over the disk by quadrature."""
        r2 = self.grid.r[:, None] ** 2
        w = self.weights
        t = (self.dur_dr[j] * self.dur_dr[k]
             + self.duth_dr[j] * self.duth_dr[k]
             + (self.dur_dth[j] - self.uth[j]) * (self.dur_dth[k] - self.uth[k]) / r2
             + (self.duth_dth[j] + self.ur[j]) * (self.duth_dth[k] + self.ur[k]) / r2)
        return float(np.sum(w * t))


# ---------------------------------------------------------------------------
# cache persistence


def _fmt(x: float) -> str:
    return format(x, ".17g")


def save_basis(basis: Basis, path: str | os.PathLike) -> None:
    """Persist the basis as structured text; numbers carry 17 significant
    digits so the round-trip is bit exact.  Only alpha- and grid-dependent
    data is stored (nothing depends on the noise exponent m)."""
    doc = {
        "format_version": CACHE_FORMAT_VERSION,
        "alpha": _fmt(basis.domain.alpha),
        "K": basis.k_modes,
        "grid": {"Nr": basis.grid.nr, "Ntheta": basis.grid.ntheta},
        "pairs": [
            {"n": p.n, "parity": p.parity, "s": _fmt(p.s), "lambda": _fmt(p.lam),
             "normC": _fmt(p.norm_c), "mu": _fmt(p.mu)}
            for p in basis.pairs
        ],
        "checksum": basis.checksum,
    }
    from .fileio import atomic_write_text

    atomic_write_text(path, json.dumps(doc, indent=1) + "\n")


def load_basis(path: str | os.PathLike, expected_domain: DomainSpec | None = None) -> Basis:
    """Reload a cached basis, verifying the checksum and, when given, the
    domain it is expected to serve."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise StaleCacheError(f"cache {path} is not parseable ({exc}); rebuild it") from exc
    if doc.get("format_version") != CACHE_FORMAT_VERSION:
        raise CacheMismatchError(
            f"cache {path} has format_version {doc.get('format_version')}, "
            f"expected {CACHE_FORMAT_VERSION}")
    try:
        alpha = float(doc["alpha"])
        pairs = tuple(
            EigenPair(n=int(e["n"]), parity=str(e["parity"]), s=float(e["s"]),
                      lam=float(e["lambda"]), norm_c=float(e["normC"]), mu=float(e["mu"]))
            for e in doc["pairs"]
        )
        grid = QuadratureGrid(int(doc["grid"]["Nr"]), int(doc["grid"]["Ntheta"]))
        stored_k = int(doc["K"])
        stored_checksum = str(doc["checksum"])
    except (KeyError, TypeError, ValueError) as exc:
        raise StaleCacheError(f"cache {path} is structurally invalid ({exc}); rebuild it") from exc

    if basis_checksum(pairs) != stored_checksum:
        raise StaleCacheError(
            f"cache {path} fails its checksum; the file is stale or corrupted -- rebuild it")
    if stored_k != len(pairs):
        raise StaleCacheError(f"cache {path} K={stored_k} disagrees with pair count; rebuild it")
    if expected_domain is not None and alpha != expected_domain.alpha:
        raise CacheMismatchError(
            f"cache {path} was built for alpha={alpha:g}, run requires "
            f"alpha={expected_domain.alpha:g}")
    lam = np.array([p.lam for p in pairs])
    if np.any(np.diff(lam) < 0):
        raise StaleCacheError(f"cache {path} pairs are not sorted by eigenvalue; rebuild it")
    domain = expected_domain if expected_domain is not None else DomainSpec(alpha=alpha)
    return Basis(domain=domain, pairs=pairs, grid=grid, checksum=stored_checksum)
