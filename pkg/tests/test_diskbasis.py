import json

import numpy as np
import pytest

from diskns.diskbasis import (BasisBuildError, CacheMismatchError, DomainSpec, EigenPair,
                              QuadratureGrid, StaleCacheError, build_basis, find_roots,
                              load_basis, save_basis, scan_sign_changes, secular)

from oracles import jn_zeros_oracle, secular_roots_oracle


# --- secular equation ------------------------------------------------------

def test_lions_case_reduces_to_bessel():
    scipy_special = pytest.importorskip("scipy.special")
    for n in (0, 1, 4):
        for s in (0.7, 2.3, 9.9, 14.2):
            expected = s * s * scipy_special.jv(n, s)
            assert secular(n, s, 2.0) == pytest.approx(expected, abs=1e-10)


def test_secular_rejects_nonpositive_s():
    with pytest.raises(ValueError):
        secular(0, 0.0, 1.0)
    with pytest.raises(ValueError):
        secular(0, -1.0, 1.0)


def test_find_roots_lions_n0():
    roots = find_roots(0, 12.0, 2.0)
    assert np.abs(roots - jn_zeros_oracle(0, 4)).max() <= 1e-11


def test_find_roots_lions_n1():
    roots = find_roots(1, 4.0, 2.0)
    assert roots.size == 1
    assert roots[0] == pytest.approx(3.8317059702075123, abs=1e-11)


def test_find_roots_alpha1_matches_independent_scan():
    pytest.importorskip("scipy")
    roots = find_roots(0, 12.0, 1.0)
    oracle = secular_roots_oracle(0, 12.0, 1.0)
    assert roots.size == oracle.size == 4
    assert np.abs(roots - oracle).max() <= 1e-10
    # every root moves off the free-boundary (Bessel-zero) spectrum
    assert np.abs(roots - jn_zeros_oracle(0, 4)).min() > 1e-2


def test_roots_strictly_increasing():
    roots = find_roots(2, 30.0, 0.7)
    assert np.all(np.diff(roots) > 0.0)


def test_smax_limit_enforced():
    with pytest.raises(ValueError):
        find_roots(0, 500.0, 2.0)


# --- scan / tangency diagnostics ------------------------------------------

def test_scanner_flags_exact_tangency():
    for s0 in (2.977, 3.013, 4.4444):
        roots, tang = scan_sign_changes(lambda s, s0=s0: (s - s0) ** 2, 6.0)
        assert roots.size == 0
        assert len(tang) == 1 and abs(tang[0] - s0) < 0.01


def test_scanner_takes_exact_grid_hit_as_root():
    # a zero landing exactly on a scan node is a root, tangential or not
    roots, _ = scan_sign_changes(lambda s: (s - 3.0) ** 2, 6.0)
    assert list(roots) == [3.0]


def test_scanner_near_tangency_crossing_yields_two_roots():
    roots, tang = scan_sign_changes(lambda s: (s - 3.0) ** 2 - 1e-6, 6.0)
    assert roots.size == 2
    assert tang == []


def test_scanner_quiet_on_smooth_functions():
    roots, tang = scan_sign_changes(lambda s: s * s + 1.0, 6.0)
    assert roots.size == 0 and tang == []


def test_real_families_produce_no_tangency_warnings(caplog):
    import logging

    with caplog.at_level(logging.WARNING, logger="diskns.diskbasis"):
        for alpha in (0.5, 1.0, 2.0, 3.5):
            find_roots(3, 20.0, alpha)
    assert not [r for r in caplog.records if "tangential" in r.message]


# --- basis construction ----------------------------------------------------

def test_build_single_mode_example():
    b = build_basis(1, DomainSpec(alpha=2.0))
    p = b.pairs[0]
    assert p.n == 0 and p.parity == "cos"
    assert p.s == pytest.approx(2.404825557695773, abs=1e-11)
    assert p.lam == pytest.approx(5.783185962946785, rel=1e-11)


def test_velocity_gram_is_identity(basis16, basis64):
    for b in (basis16, basis64):
        assert b.tables().velocity_gram_deviation() <= 1e-8


def test_vorticity_gram_is_identity_for_free_boundary(basis16, basis64):
    for b in (basis16, basis64):
        assert b.tables().vorticity_gram_deviation() <= 1e-8


def test_vorticity_orthogonality_is_special_to_alpha2(basis16_alpha1):
    # with constant alpha != 2 the curl family is provably not L2-orthogonal;
    # the build must flag it rather than fail
    dev = basis16_alpha1.tables().vorticity_gram_deviation()
    assert dev > 1e-3
    assert any("not L2-orthogonal" in w for w in basis16_alpha1.build_warnings)
    assert basis16_alpha1.tables().velocity_gram_deviation() <= 1e-8


def test_boundary_identity_per_member(basis16, basis16_alpha1):
    for b in (basis16, basis16_alpha1):
        assert b.tables().boundary_identity_residual() <= 1e-8


def test_impermeability(basis16):
    # psi carries the factor J_n(s) - J_n(s) r^n, identically zero at r = 1
    assert basis16.tables().impermeability_residual() <= 1e-10
    for p in basis16.pairs:
        from diskns.bessel import bessel_j

        js, _ = bessel_j(p.n, p.s)
        assert (js - js * 1.0**p.n) == 0.0


def test_mu_equals_s_for_free_boundary(basis32):
    # alpha = 2: psi = xi / s^2, so unit velocity norm forces ||xi|| = s
    s = np.array([p.s for p in basis32.pairs])
    assert np.abs(basis32.mus - s).max() <= 1e-10


def test_curl_norm_ratio_bounded(basis64):
    ratios = basis64.mus**2 / (1.0 + basis64.lambdas)
    assert np.all(ratios < 1.0 + 1e-12)  # = lam/(1+lam) in the free-boundary case


def test_eigenvalues_sorted_positive(basis64):
    lam = basis64.lambdas
    assert np.all(lam > 0.0)
    assert np.all(np.diff(lam) >= 0.0)


def test_lions_spectrum_matches_squared_bessel_zeros(basis16):
    zero_pool = {n: jn_zeros_oracle(n, 6) for n in range(basis16.n_max + 1)}
    for p in basis16.pairs:
        dev = np.abs(zero_pool[p.n] - p.s).min()
        assert dev <= 1e-9 * p.s


# --- quadrature grid -------------------------------------------------------

def test_grid_area_invariant():
    g = QuadratureGrid(48, 96)
    area = g.weights2d.sum()
    assert abs(area - np.pi) <= 1e-12 * np.pi


def test_grid_rejects_tiny_sizes():
    with pytest.raises(ValueError):
        QuadratureGrid(1, 64)


def test_angular_rule_enforced():
    with pytest.raises(BasisBuildError, match="3\\*n_max"):
        build_basis(32, DomainSpec(alpha=2.0), QuadratureGrid(64, 8))


def test_coarse_radial_grid_fails_with_measured_deviation():
    with pytest.raises(BasisBuildError):
        build_basis(12, DomainSpec(alpha=2.0), QuadratureGrid(4, 64))


# --- cache persistence -----------------------------------------------------

def test_cache_round_trip_bit_exact(tmp_path, basis16):
    path = tmp_path / "basis.json"
    save_basis(basis16, path)
    reloaded = load_basis(path, expected_domain=basis16.domain)
    assert reloaded.pairs == basis16.pairs
    assert reloaded.checksum == basis16.checksum
    assert reloaded.grid == basis16.grid
    assert reloaded.domain == basis16.domain


def test_cache_corruption_detected(tmp_path, basis16):
    path = tmp_path / "basis.json"
    save_basis(basis16, path)
    doc = json.loads(path.read_text())
    doc["pairs"][2]["mu"] = format(float(doc["pairs"][2]["mu"]) * (1 + 1e-9), ".17g")
    path.write_text(json.dumps(doc))
    with pytest.raises(StaleCacheError, match="checksum"):
        load_basis(path)


def test_cache_alpha_mismatch_rejected(tmp_path, basis16):
    path = tmp_path / "basis.json"
    save_basis(basis16, path)
    with pytest.raises(CacheMismatchError, match="alpha"):
        load_basis(path, expected_domain=DomainSpec(alpha=1.0))


def test_cache_unparseable_rejected(tmp_path):
    path = tmp_path / "basis.json"
    path.write_text("{not json")
    with pytest.raises(StaleCacheError):
        load_basis(path)


# --- domain / pair validation ---------------------------------------------

def test_domain_requires_positive_alpha():
    with pytest.raises(ValueError):
        DomainSpec(alpha=0.0)
    with pytest.raises(ValueError):
        DomainSpec(alpha=-1.0)


def test_domain_is_unit_disk_only():
    with pytest.raises(ValueError):
        DomainSpec(alpha=2.0, radius=2.0)


def test_pair_rejects_sine_at_n0():
    with pytest.raises(ValueError):
        EigenPair(n=0, parity="sin", s=2.4, lam=5.76, norm_c=1.0, mu=2.4)


def test_build_rejects_k0():
    with pytest.raises(ValueError):
        build_basis(0, DomainSpec(alpha=2.0))
