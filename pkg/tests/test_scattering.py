import numpy as np
import pytest

import mcscat as mc
from mcscat.errors import ExceptionalEnergy, ZeroEnergy
from mcscat.linalg import adjoint, op_norm
from mcscat.scattering import _abel_factor, _abel_factor_gl


def test_abel_factor_closed_form_vs_quadrature():
    # Gauss-Laguerre reproduces the Abel integral while |omega|/eps is
    # moderate and under-resolves the phase once it reaches the hundreds,
    # which is why the closed form is used for the wave operators
    eps = 0.1
    omega = np.array([0.0, 0.05, 0.2, 0.3])
    gl = _abel_factor_gl(omega, +1, eps, nodes=64)
    exact = _abel_factor(omega, +1, eps)
    assert np.abs(gl - exact).max() < 1e-6
    far = np.array([30.0])
    gl_far = _abel_factor_gl(far, +1, eps, nodes=64)
    exact_far = _abel_factor(far, +1, eps)
    assert abs(gl_far - exact_far) > 0.1 * abs(exact_far)


def test_wave_op_schedules_validated(random_system):
    with pytest.raises(ValueError):
        mc.wave_op_time(random_system, (1.0, 2.0), schedule=[0.01, 0.02])
    with pytest.raises(ValueError):
        mc.wave_op_time(
            random_system, (1.0, 2.0), method="window", schedule=[8.0, 4.0]
        )
    with pytest.raises(ValueError):
        mc.wave_op_time(random_system, (1.0, 2.0), method="laplace")
    with pytest.raises(ValueError):
        mc.wave_op_time(random_system, (1.0, 2.0), target=5)


def test_wave_op_results_sane(random_system):
    res = mc.wave_op_time(random_system, (1.0, 2.0), sign=+1, target="j")
    assert res.w.shape == (random_system.n, random_system.dim0)
    assert res.increments.size == res.params.size - 1
    assert 0 <= res.accepted < res.params.size
    assert res.isometry_defect < 0.5
    win = mc.wave_op_time(random_system, (1.0, 2.0), method="window", target=1)
    assert win.method == "window"
    assert win.w.shape == (random_system.n, random_system.n)


def test_wave_op_weighted_target(random_system):
    res = mc.wave_op_time(random_system, (1.0, 2.0), target="jtilde")
    assert res.target == "jtilde"
    assert res.isometry_defect < 2.0  # reference carries lambda^2 weights


def test_channel_family_diagnostics(mult_system):
    gram, results = mc.channel_orthogonality(mult_system, (1.0, 2.0))
    assert gram.shape == (2, 2)
    assert len(results) == 2
    assert gram[0, 1] == pytest.approx(gram[1, 0], abs=1e-10)
    assert gram[0, 1] < 0.5
    comp = mc.completeness_check(mult_system, (1.0, 2.0))
    assert comp["channel_sum_defect"] < 0.5
    assert comp["stacked_defect"] < 0.5
    assert len(comp["channel_results"]) == 2


def test_transparent_channel_scatters_nothing():
    grid = 1.0 + (np.arange(32) + 0.5) / 32
    system = mc.build_system(
        mc.make_multiplication_channels(grid, 1, width=6.0, seed=2)
    )
    decomp = mc.diagonalize_a0(system, (1.0, 2.0), bin_width=1.0 / 32)
    for lam in decomp.centers[[8, 16, 24]]:
        sample = mc.scattering_matrix_stationary(system, decomp, float(lam))
        assert op_norm(sample.s - np.eye(decomp.fiber_dim)) < 5e-3
        assert sample.unitarity_defect < 5e-3
        assert sample.weighted_consistency < 1e-12


def test_stationary_guards(mult_system, mult_decomp):
    with pytest.raises(ZeroEnergy):
        mc.scattering_matrix_stationary(mult_system, mult_decomp, 0.0)
    with pytest.raises(ExceptionalEnergy):
        mc.scattering_matrix_stationary(
            mult_system, mult_decomp, 1.4375, flagged=(1.4375,)
        )


def test_cross_channel_block_tracks_mix(mult_system, mult_decomp):
    # the factory's cross kernel is centred mid-interval; at first order the
    # off-diagonal S blocks scale linearly with mix and follow the bell shape
    def off_profile(mix):
        grid = 1.0 + (np.arange(40) + 0.25) / 40
        system = mc.build_system(
            mc.make_multiplication_channels(
                grid, 2, width=5.0, seed=11, mix=mix, stagger=1.0
            )
        )
        decomp = mc.diagonalize_a0(system, (1.0, 2.0), bin_width=1.0 / 8)
        return np.array(
            [
                mc.scattering_matrix_stationary(
                    system, decomp, float(decomp.centers[b])
                ).block_norms[(1, 2)]
                for b in (0, 3, 4)
            ]
        )

    strong = off_profile(0.1)
    weak = off_profile(0.05)
    assert strong[1] > 5.0 * strong[0]  # bell shape: mid-interval dominates
    np.testing.assert_allclose(strong[1:] / weak[1:], 2.0, rtol=0.2)
    sample = mc.scattering_matrix_stationary(
        mult_system, mult_decomp, float(mult_decomp.centers[4])
    )
    assert sample.block_norms[(1, 2)] == pytest.approx(
        sample.block_norms[(2, 1)], rel=0.05
    )
    assert sample.unitarity_defect < 0.02


def test_stationary_err_est_covers_window_spread(mult_system, mult_decomp):
    sample = mc.scattering_matrix_stationary(
        mult_system, mult_decomp, float(mult_decomp.centers[4])
    )
    assert sample.err_est >= 0.0
    richardson = mc.scattering_matrix_stationary(
        mult_system,
        mult_decomp,
        float(mult_decomp.centers[4]),
        schedule=mc.geometric_schedule(start=0.2, ratio=0.5, count=9),
    )
    gap = op_norm(sample.s - richardson.s)
    assert gap <= 2.0 * (sample.err_est + richardson.err_est) + 5e-3


def test_gamma_pm_weighted_grouping(mult_system, mult_decomp):
    rng = np.random.default_rng(1)
    g = rng.standard_normal(mult_system.dim0) + 1j * rng.standard_normal(
        mult_system.dim0
    )
    lam = float(mult_decomp.centers[5])
    for side in (+1, -1):
        bv = mc.boundary_value_window(mult_system, lam, side=side)
        plain = mc.gamma_pm(mult_system, mult_decomp, lam, side, g, bv=bv)
        tilde = mc.gamma_pm(
            mult_system, mult_decomp, lam, side, g, bv=bv, tilde=True
        )
        assert np.linalg.norm(tilde - lam * plain) <= 1e-12 * np.linalg.norm(tilde)


def test_time_route_cross_validates_stationary(rank_one_model):
    system = rank_one_model["system"]
    decomp = rank_one_model["decomp"]
    lam = float(decomp.centers[40])
    wave_p = mc.wave_op_time(system, decomp.interval, sign=+1, target="j")
    wave_m = mc.wave_op_time(system, decomp.interval, sign=-1, target="j")
    # S commutes with A0 on the spectral window
    sw = adjoint(wave_p.w) @ wave_m.w
    e0 = system.e0(decomp.interval)
    a0 = np.asarray(system.a0)
    assert op_norm(e0 @ (sw @ a0 - a0 @ sw) @ e0) < 1e-2
    s_time = mc.scattering_matrix_time(system, decomp, lam)
    s_stat = mc.scattering_matrix_stationary(system, decomp, lam)
    # the routes share a limit; each carries its own truncation error, the
    # time route the Abel tail, the stationary route the boundary-value fit
    budget = (
        mc.boundary_value_window(system, lam).err_est
        + float(wave_p.increments[wave_p.accepted])
        + float(wave_m.increments[wave_m.accepted])
    )
    gap = op_norm(s_time - s_stat.s)
    assert gap < budget
    assert gap < 0.5  # empirical blur ceiling at this resolution
    assert abs(abs(s_time[0, 0]) - 1.0) < 0.05
    assert op_norm(s_stat.s - np.eye(decomp.fiber_dim)) > 0.3


def test_f0_stack_approximates_projection(mult_system, mult_decomp):
    f_pm, f0 = mc.assemble_f_pm(mult_system, mult_decomp, side=+1)
    e0 = mult_system.e0(mult_decomp.interval)
    assert op_norm(adjoint(f0) @ f0 - e0) < 0.2
    assert f_pm.shape == (mult_decomp.nbins * mult_decomp.fiber_dim, mult_system.n)
