"""Shared fixtures.

Models are immutable, so expensive ones are session scoped and shared
across modules to keep the whole suite inside its runtime budget.
"""
import numpy as np
import pytest

import mcscat as mc


@pytest.fixture(scope="session")
def random_system():
    return mc.build_system(mc.make_random_channels(n=18, nchan=2, delta=0.1, seed=7))


@pytest.fixture(scope="session")
def single_channel_system():
    base = mc.make_random_channels(n=16, nchan=1, delta=0.12, seed=21)
    return mc.build_system(base)


@pytest.fixture(scope="session")
def diagonal_system():
    # transparent reference: diag(grid) embedded per block, no conjugations
    grid = 1.0 + (np.arange(24) + 0.5) / 24
    base = mc.make_multiplication_channels(
        grid, 1, width=6.0, seed=0, smooth_unitaries=False, weight_floor=0.3
    )
    return mc.build_system(base)


@pytest.fixture(scope="session")
def mult_system():
    grid = 1.0 + (np.arange(40) + 0.25) / 40
    base = mc.make_multiplication_channels(
        grid, 2, width=5.0, seed=11, mix=0.1, stagger=1.0
    )
    return mc.build_system(base)


@pytest.fixture(scope="session")
def mult_decomp(mult_system):
    return mc.diagonalize_a0(mult_system, (1.0, 2.0), bin_width=1.0 / 8)


@pytest.fixture(scope="session")
def rank_one_model():
    """Single smooth channel on an 80-point grid plus a weak rank-one term.

    The coupling vector is synthesised in the gauge-fixed fiber frame so
    its overlaps with the channel eigenvectors follow a known Gaussian
    profile exactly; the closed-form perturbation determinant built from
    that profile then serves as an independent oracle for the scattering
    phase.
    """
    m = 80
    grid = 1.0 + (np.arange(m) + 0.5) / m
    sigma = 0.2
    kappa = 0.03
    base0 = mc.make_multiplication_channels(grid, 1, width=25.0, seed=4)
    sys0 = mc.build_system(base0)
    dec0 = mc.diagonalize_a0(sys0, (1.0, 2.0), bin_width=1.0 / m)
    vec = mc.channel_profile_vector(
        dec0, sys0, 1, lambda mu: np.exp(-((mu - 1.5) ** 2) / (4.0 * sigma**2))
    )
    system = mc.build_system(mc.with_rank_one(base0, kappa, vec))
    decomp = mc.diagonalize_a0(system, (1.0, 2.0), bin_width=1.0 / m)
    weights = np.exp(-((grid - 1.5) ** 2) / (2.0 * sigma**2))
    weights = weights / weights.sum()
    return {
        "system": system,
        "decomp": decomp,
        "grid": grid,
        "weights": weights,
        "kappa": kappa,
    }
