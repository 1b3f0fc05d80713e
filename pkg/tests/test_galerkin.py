import logging
import math

import numpy as np
import pytest

from diskns.diskbasis import DomainSpec, build_basis
from diskns.galerkin import (BlowUpError, ForcingTerm, SimConfig, apply_convection,
                             assemble_boundary_gram, assemble_convection, make_operator,
                             simulate, step)
from diskns.noise import NoiseSpec, coarsen_path, sample_path


# --- convection tensor -------------------------------------------------------

def test_skew_symmetry_deviation_recorded(op16):
    assert 0.0 <= op16.convection.skew_deviation <= 1e-8


def test_axisymmetric_mode_self_advection_vanishes(basis16):
    # (u . grad)u of the n = 0 swirl is a pure radial gradient; its projection
    # on any divergence-free tangent field vanishes.  Check by raw quadrature.
    tables = basis16.tables()
    k0 = next(i for i, p in enumerate(basis16.pairs) if p.n == 0)
    r = basis16.grid.r[:, None]
    w = tables.weights
    adv_r = (tables.ur[k0] * tables.dur_dr[k0]
             + tables.uth[k0] * tables.dur_dth[k0] / r
             - tables.uth[k0] * tables.uth[k0] / r)
    adv_t = (tables.ur[k0] * tables.duth_dr[k0]
             + tables.uth[k0] * tables.duth_dth[k0] / r
             + tables.uth[k0] * tables.ur[k0] / r)
    for k in range(basis16.k_modes):
        val = np.sum(w * (adv_r * tables.ur[k] + adv_t * tables.uth[k]))
        assert abs(val) <= 1e-12


def test_triad_violating_entry_not_stored(op16, basis16):
    ns = [p.n for p in basis16.pairs]
    t = op16.convection
    stored = set(zip(t.j_idx.tolist(), t.l_idx.tolist(), t.k_idx.tolist()))
    dense = t.dense()
    checked = 0
    for j in range(basis16.k_modes):
        for l in range(basis16.k_modes):
            for k in range(basis16.k_modes):
                nj, nl, nk = ns[j], ns[l], ns[k]
                if not (nj + nl == nk or nj + nk == nl or nl + nk == nj):
                    assert (j, l, k) not in stored
                    assert dense[j, l, k] == 0.0
                    checked += 1
    assert checked > 0


def test_reflection_parity_rule_is_exact(basis16):
    # entries excluded by the odd-sine-count rule integrate to roundoff zero
    tables = basis16.tables()
    ns = [p.n for p in basis16.pairs]
    ps = [p.parity for p in basis16.pairs]
    r = basis16.grid.r[:, None]
    w = tables.weights
    rng = np.random.default_rng(3)
    checked = 0
    for _ in range(200):
        j, l, k = rng.integers(0, basis16.k_modes, 3)
        triad = (ns[j] + ns[l] == ns[k] or ns[j] + ns[k] == ns[l]
                 or ns[l] + ns[k] == ns[j])
        odd_sines = ((ps[j] == "sin") + (ps[l] == "sin") + (ps[k] == "sin")) % 2 == 1
        if not triad or odd_sines:
            continue
        adv_r = (tables.ur[j] * tables.dur_dr[l]
                 + tables.uth[j] * tables.dur_dth[l] / r
                 - tables.uth[j] * tables.uth[l] / r)
        adv_t = (tables.ur[j] * tables.duth_dr[l]
                 + tables.uth[j] * tables.duth_dth[l] / r
                 + tables.uth[j] * tables.ur[l] / r)
        val = np.sum(w * (adv_r * tables.ur[k] + adv_t * tables.uth[k]))
        assert abs(val) <= 1e-12
        checked += 1
    assert checked > 10


def test_energy_conservation_of_nonlinearity(op16):
    rng = np.random.default_rng(17)
    for _ in range(100):
        c = rng.standard_normal(16) * rng.uniform(0.1, 10.0)
        b = apply_convection(op16.convection, c)
        assert abs(b @ c) <= 1e-10 * np.linalg.norm(c) ** 3


def test_apply_zero_state(op16):
    assert not apply_convection(op16.convection, np.zeros(16)).any()


def test_single_axisymmetric_mode_is_steady(op16, basis16):
    c = np.zeros(16)
    k0 = next(i for i, p in enumerate(basis16.pairs) if p.n == 0)
    c[k0] = 2.5
    assert not apply_convection(op16.convection, c).any()


# --- boundary Gram ------------------------------------------------------------

def test_boundary_gram_angular_block_structure(op16, basis16):
    B = op16.boundary.matrix
    for j, pj in enumerate(basis16.pairs):
        for k, pk in enumerate(basis16.pairs):
            if pj.n != pk.n or pj.parity != pk.parity:
                assert B[j, k] == pytest.approx(0.0, abs=1e-14)


def test_boundary_gram_sign_free_boundary(op16):
    # alpha = 2 makes kappa - alpha = -1, so the diagonal is nonpositive
    assert np.all(np.diag(op16.boundary.matrix) <= 0.0)


def test_gradient_gram_identity(op16, basis16):
    assert op16.boundary.identity_deviation <= 1e-8
    # independent spot check of one diagonal entry
    tables = basis16.tables()
    k = 3
    gg = tables.gradient_contraction(k, k)
    lam = basis16.lambdas[k]
    assert gg == pytest.approx(lam + op16.boundary.matrix[k, k], abs=1e-9)


def test_boundary_gram_symmetric(op16):
    B = op16.boundary.matrix
    assert np.abs(B - B.T).max() == 0.0


# --- stepping -----------------------------------------------------------------

def test_rest_state_is_fixed_point(op16):
    cfg = SimConfig(nu=0.3, dt=1e-2, t_final=0.1, k_modes=16, initial=np.zeros(16))
    out = step(op16, cfg, np.zeros(16), 0.0, None)
    assert not out.any()


def test_single_mode_matches_scalar_recursion(basis16, op16):
    c0 = np.zeros(16)
    c0[0] = 1.0
    nu, dt = 0.1, 1e-3
    cfg = SimConfig(nu=nu, dt=dt, t_final=0.2, k_modes=16, initial=c0)
    traj = simulate(cfg, None, basis16, op16)
    lam = basis16.lambdas[0]
    n = traj.n_steps
    assert traj.coeffs[-1][0] == pytest.approx((1.0 + nu * lam * dt) ** -n, abs=1e-14)
    # matches the exponential within O(dt)
    assert traj.coeffs[-1][0] == pytest.approx(math.exp(-nu * lam * 0.2), rel=5e-4)


def test_inviscid_step_conserves_energy_to_second_order(op16):
    rng = np.random.default_rng(23)
    c = rng.standard_normal(16)
    dt = 1e-3
    cfg = SimConfig(nu=0.0, dt=dt, t_final=0.1, k_modes=16, initial=c)
    b = apply_convection(op16.convection, c)
    c1 = step(op16, cfg, c, 0.0, None)
    assert abs(c1 @ c1 - c @ c) <= dt * dt * (b @ b) + 1e-12


def test_inviscid_energy_drift_halves_with_dt(basis16, op16):
    c0 = 1.0 / (1.0 + basis16.lambdas) ** 2
    c0 /= np.linalg.norm(c0)

    def drift(dt):
        cfg = SimConfig(nu=0.0, dt=dt, t_final=0.5, k_modes=16, initial=c0)
        traj = simulate(cfg, None, basis16, op16)
        return abs(traj.energy[-1] - traj.energy[0])

    assert drift(2e-3) / drift(1e-3) >= 1.8


def test_dt_refinement_convergence_order(basis16, op16):
    # same driving path integrated at dt, dt/2, dt/4; successive sup-distances
    # contract with the strong order of the scheme
    fine = sample_path(NoiseSpec(k_modes=16, seed=12, dt=5e-4, steps=1000))
    c0 = 1.0 / (1.0 + basis16.lambdas) ** 2
    c0 /= np.linalg.norm(c0)
    trajs = {}
    for fac in (4, 2, 1):
        p = coarsen_path(fine, fac)
        cfg = SimConfig(nu=0.02, dt=5e-4 * fac, t_final=0.5, k_modes=16,
                        initial=c0, noise=p.spec)
        trajs[fac] = simulate(cfg, p, basis16, op16)

    def dist(a, b, stride):
        return np.linalg.norm(a.coeffs - b.coeffs[::stride], axis=1).max()

    d1 = dist(trajs[4], trajs[2], 2)
    d2 = dist(trajs[2], trajs[1], 2)
    assert math.log2(d1 / d2) >= 0.8


def test_simulate_deterministic(basis16, op16):
    spec = NoiseSpec(k_modes=16, seed=5, dt=1e-3, steps=100)
    path = sample_path(spec)
    c0 = np.full(16, 0.1)
    cfg = SimConfig(nu=0.01, dt=1e-3, t_final=0.1, k_modes=16, initial=c0, noise=spec)
    a = simulate(cfg, path, basis16, op16)
    b = simulate(cfg, path, basis16, op16)
    assert np.array_equal(a.coeffs, b.coeffs)
    assert np.array_equal(a.energy, b.energy)
    assert np.array_equal(a.noise_ip, b.noise_ip)


def test_zero_run_is_identically_zero(basis16, op16):
    cfg = SimConfig(nu=0.1, dt=1e-2, t_final=0.5, k_modes=16, initial=np.zeros(16))
    traj = simulate(cfg, None, basis16, op16)
    assert not traj.coeffs.any()
    assert not traj.energy.any()


def test_viscosity_gap_shrinks_continuously(basis16, op16):
    spec = NoiseSpec(k_modes=16, seed=8, dt=1e-3, steps=200)
    path = sample_path(spec)
    c0 = 1.0 / (1.0 + basis16.lambdas) ** 2

    def run(nu):
        cfg = SimConfig(nu=nu, dt=1e-3, t_final=0.2, k_modes=16, initial=c0, noise=spec)
        return simulate(cfg, path, basis16, op16)

    ref = run(0.0)
    gaps = [np.linalg.norm(run(nu).coeffs - ref.coeffs, axis=1).max()
            for nu in (1e-2, 1e-3, 1e-4)]
    assert gaps[0] > gaps[1] > gaps[2] > 0.0


def test_blow_up_carries_partial_trajectory(basis16, op16):
    c0 = np.full(16, 1e180)
    cfg = SimConfig(nu=0.0, dt=1.0, t_final=5.0, k_modes=16, initial=c0)
    with np.errstate(over="ignore"), pytest.raises(BlowUpError) as err:
        simulate(cfg, None, basis16, op16)
    assert err.value.step_index >= 1
    assert err.value.partial.energy[0] == pytest.approx(16 * 1e360, rel=1e-12)


def test_cfl_warning_emitted(basis16, op16, caplog):
    c0 = np.full(16, 10.0)
    cfg = SimConfig(nu=1.0, dt=0.05, t_final=0.05, k_modes=16, initial=c0)
    with np.errstate(over="ignore", invalid="ignore"):
        with caplog.at_level(logging.WARNING, logger="diskns.galerkin"):
            try:
                simulate(cfg, None, basis16, op16)
            except BlowUpError:
                pass
    assert any("advisory convection bound" in r.message for r in caplog.records)


# --- forcing ------------------------------------------------------------------

def test_constant_forcing_drives_single_mode(basis16, op16):
    k0, f, nu, dt = 0, 0.7, 0.2, 1e-3
    cfg = SimConfig(nu=nu, dt=dt, t_final=1.0, k_modes=16, initial=np.zeros(16),
                    forcing=(ForcingTerm(mode=k0, constant=f),))
    traj = simulate(cfg, None, basis16, op16)
    lam = basis16.lambdas[k0]
    # exact solution of the forced scalar recursion toward the f/(nu lam) fixed point
    rho = 1.0 / (1.0 + nu * lam * dt)
    expected = f / (nu * lam) * (1.0 - rho**traj.n_steps)
    assert traj.coeffs[-1][k0] == pytest.approx(expected, rel=1e-12)


def test_tabulated_forcing_interpolates():
    term = ForcingTerm(mode=0, times=np.array([0.0, 1.0]), values=np.array([0.0, 2.0]))
    assert term.value(0.25) == pytest.approx(0.5)


# --- config validation ----------------------------------------------------------

def test_config_rejects_mismatched_noise():
    with pytest.raises(ValueError):
        SimConfig(nu=0.1, dt=1e-3, t_final=0.1, k_modes=4, initial=np.zeros(4),
                  noise=NoiseSpec(k_modes=5, seed=0, dt=1e-3, steps=100))
    with pytest.raises(ValueError):
        SimConfig(nu=0.1, dt=1e-3, t_final=0.1, k_modes=4, initial=np.zeros(4),
                  noise=NoiseSpec(k_modes=4, seed=0, dt=2e-3, steps=100))


def test_config_rejects_non_multiple_horizon():
    with pytest.raises(ValueError):
        SimConfig(nu=0.1, dt=3e-3, t_final=0.01, k_modes=4, initial=np.zeros(4))


def test_config_rejects_out_of_range_forcing():
    with pytest.raises(ValueError):
        SimConfig(nu=0.1, dt=1e-3, t_final=0.1, k_modes=4, initial=np.zeros(4),
                  forcing=(ForcingTerm(mode=7, constant=1.0),))


def test_simulate_requires_consistent_path(basis16, op16):
    cfg = SimConfig(nu=0.1, dt=1e-3, t_final=0.1, k_modes=16, initial=np.zeros(16))
    path = sample_path(NoiseSpec(k_modes=16, seed=0, dt=1e-3, steps=100))
    with pytest.raises(ValueError):
        simulate(cfg, path, basis16, op16)  # path given but config has no noise
