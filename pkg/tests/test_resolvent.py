import numpy as np
import pytest

import mcscat as mc
from mcscat.errors import NearSingularFredholm, NoConvergence, ZeroEnergy
from mcscat.linalg import adjoint, op_norm
from mcscat.resolvent import geometric_schedule


def _window_fit(samples, eps, degree=6):
    """Constant term of a polynomial fit in eps, evaluated at eps = 0."""
    flat = np.stack([s.reshape(-1) for s in samples])
    vand = np.vander(np.asarray(eps, dtype=float), degree + 1, increasing=True)
    coef, *_ = np.linalg.lstsq(vand, flat, rcond=None)
    return coef[0].reshape(samples[0].shape)


def test_block_route_matches_direct_inverse(random_system):
    system = random_system
    for z in (1.3 + 0.1j, 1.7 + 0.01j, 1.5 - 0.25j):
        rj = mc.resolvent_via_fredholm(system, z)
        direct = np.linalg.solve(
            system.a - z * np.eye(system.n), np.eye(system.n)
        ) @ system.j
        assert op_norm(rj - direct) <= 1e-11 * op_norm(direct)


def test_sandwiched_residuals_small(random_system):
    for eps in (0.1, 0.01):
        point = mc.sandwiched_resolvent(random_system, 1.4 + 1j * eps)
        assert point.residuals["fredholm"] < 1e-11
        assert point.residuals["block"] < 1e-11


def test_resolvent_rejects_tiny_imag(random_system):
    with pytest.raises(ValueError):
        mc.resolvent_via_fredholm(random_system, 1.5 + 1e-13j)
    with pytest.raises(ZeroEnergy):
        mc.resolvent_via_fredholm(random_system, 1e-12 + 1e-10j, eps_floor=1e-11)


def test_dissipation_identity(random_system):
    rng = np.random.default_rng(4)
    g = rng.standard_normal(random_system.dim0) + 1j * rng.standard_normal(
        random_system.dim0
    )
    for z in (1.2 + 0.3j, 1.8 - 0.05j):
        lhs, rhs = mc.check_dissipation_identity(random_system, z, g)
        assert abs(lhs - rhs) <= 1e-10 * max(abs(lhs), abs(rhs))


def test_geometric_schedule_contract():
    s = geometric_schedule(start=0.2, ratio=0.5, count=14, floor=1e-4)
    assert s[0] == 0.2 and s.min() >= 1e-4
    assert np.all(np.diff(s) < 0)
    with pytest.raises(ValueError):
        geometric_schedule(start=0.1, ratio=0.5, count=8, floor=0.09)


def test_boundary_value_diagonal_oracle(diagonal_system):
    # transparent diagonal model: Q R(z) Q* is an explicit eigenpair sum,
    # so the boundary value can be cross-checked without any solve
    system = diagonal_system
    grid = np.asarray(system.base.params["grid"])
    lam = 1.5
    bv = mc.boundary_value_window(system, lam, side=+1)
    eps = bv.schedule
    oracle_samples = [
        system.q @ np.diag(1.0 / (grid - lam - 1j * e)) @ adjoint(system.q)
        for e in eps
    ]
    oracle = _window_fit(oracle_samples, eps)
    assert op_norm(bv.value - oracle) <= 2.0 * bv.err_est + 1e-9


def test_boundary_value_sides_are_adjoint(random_system):
    plus = mc.boundary_value_window(random_system, 1.5, side=+1)
    minus = mc.boundary_value_window(random_system, 1.5, side=-1)
    gap = op_norm(plus.value - adjoint(minus.value))
    assert gap <= 2.0 * (plus.err_est + minus.err_est) + 1e-10


def test_boundary_value_routes_agree(diagonal_system):
    lam = 1.4
    window = mc.boundary_value_window(diagonal_system, lam, side=+1)
    richardson = mc.boundary_value(
        diagonal_system, lam, side=+1,
        schedule=geometric_schedule(start=0.2, ratio=0.5, count=9),
    )
    gap = op_norm(window.value - richardson.value)
    assert gap <= 2.0 * (window.err_est + richardson.err_est)
    assert 0.0 <= richardson.hoelder_fit <= 1.0
    assert richardson.err_est >= 0.0


def test_boundary_value_off_spectrum_is_real(random_system):
    # spectrum lives in (1, 2); far outside the limit is the real resolvent
    system = random_system
    lam = 3.5
    bv = mc.boundary_value(system, lam, side=+1)
    direct = system.q @ np.linalg.solve(
        system.a - lam * np.eye(system.n), adjoint(system.q)
    )
    assert op_norm(bv.value - direct) <= 1e-8 * op_norm(direct)
    assert op_norm(bv.value - adjoint(bv.value)) <= 1e-8 * op_norm(bv.value)


def test_boundary_value_diverges_on_embedded_eigenvalue():
    grid = 1.0 + (np.arange(16) + 0.5) / 16
    base = mc.make_multiplication_channels(grid, 1, seed=2)
    planted, _ = mc.plant_embedded_eigenvalue(base, 1.5, seed=5)
    system = mc.build_system(planted)
    with pytest.raises(NoConvergence):
        mc.boundary_value(
            system, 1.5, side=+1,
            schedule=geometric_schedule(start=0.1, ratio=0.5, count=16, floor=1e-7),
        )


def test_local_spacing_coarsest_channel():
    grid = 1.0 + (np.arange(20) + 0.5) / 20
    one = mc.build_system(mc.make_multiplication_channels(grid, 1, seed=0))
    assert mc.local_spacing(one, 1.5) == pytest.approx(1.0 / 20, rel=1e-9)
    # interleaved second channel halves the coupled spacing but must not
    # shrink the mesoscopic scale, which is per channel
    two = mc.build_system(
        mc.make_multiplication_channels(grid, 2, seed=0, stagger=1.0)
    )
    assert mc.local_spacing(two, 1.5) == pytest.approx(1.0 / 20, rel=1e-9)


def test_exceptional_scan_flags_planted_eigenvalue():
    grid = 1.0 + (np.arange(40) + 0.25) / 40
    base = mc.make_multiplication_channels(
        grid, 2, width=5.0, seed=3, mix=0.02, stagger=1.0
    )
    lam_star = 1.5125
    planted, _ = mc.plant_embedded_eigenvalue(base, lam_star, seed=7)
    system = mc.build_system(planted)
    lams = 1.0 + (np.arange(40) + 0.5) / 40
    scan = mc.exceptional_scan(system, lams, eps=1e-8 * system.scale)
    step = lams[1] - lams[0]
    assert len(scan.flagged) >= 1
    assert min(abs(f - lam_star) for f in scan.flagged) <= step
    clean = mc.build_system(base)
    scan0 = mc.exceptional_scan(clean, lams, eps=1e-8 * clean.scale)
    assert len(scan0.flagged) == 0
    assert scan0.sigma_min.shape == lams.shape
