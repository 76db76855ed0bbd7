import numpy as np
import pytest

from netmor import kernels
from netmor.physics import PhysicsConfig

CONFIGS = [PhysicsConfig(friction=0.002), PhysicsConfig(friction_model="laminar", friction=5.0),
           PhysicsConfig(alpha=0.0, friction=0.01)]


def sample(n=40, seed=0):
    rng = np.random.default_rng(seed)
    return (rng.uniform(30, 80, n), rng.uniform(-400, 400, n), rng.uniform(-400, 400, n),
            rng.uniform(50, 500, n), rng.uniform(0.2, 1.5, n), rng.uniform(1e-3, 1e-2, n))


@pytest.mark.parametrize("cfg", CONFIGS)
def test_numba_and_numpy_paths_agree(cfg):
    args = sample()
    b1, v1, j1 = kernels.cell_terms(cfg, *args, use_numba=True)
    b2, v2, j2 = kernels.cell_terms(cfg, *args, use_numba=False)
    assert b1 == b2 == -1
    assert np.allclose(v1, v2, rtol=1e-13, atol=0)
    assert np.allclose(j1, j2, rtol=1e-12, atol=1e-12 * np.abs(j1).max())
    e1 = kernels.cell_energy(cfg, *args, use_numba=True)[1]
    e2 = kernels.cell_energy(cfg, *args, use_numba=False)[1]
    assert np.allclose(e1, e2, rtol=1e-13)


@pytest.mark.parametrize("cfg", CONFIGS)
def test_jacobian_finite_differences(cfg):
    rho, mL, mR, dx, wt, fc = sample(8, seed=2)
    _, v0, jac = kernels.cell_terms(cfg, rho, mL, mR, dx, wt, fc)
    for k, h in ((0, 1e-4), (1, 1e-3), (2, 1e-3)):
        state = [rho.copy(), mL.copy(), mR.copy()]
        plus, minus = [s.copy() for s in state], [s.copy() for s in state]
        plus[k] += h
        minus[k] -= h
        vp = kernels.cell_terms(cfg, *plus, dx, wt, fc)[1]
        vm = kernels.cell_terms(cfg, *minus, dx, wt, fc)[1]
        fd = (vp - vm) / (2 * h)
        # column 2 is a cell mean of order 1e5 whose derivatives are small; compare on its own scale
        scale = np.maximum(np.abs(v0).max(axis=0) / np.array([1.0, 1.0, 1e3, 1.0, 1.0]), 1.0)
        assert np.all(np.abs(fd - jac[:, :, k]) <= 1e-5 * scale)


def test_inadmissible_density_reported():
    cfg = CONFIGS[0]
    rho, mL, mR, dx, wt, fc = sample(5)
    rho[3] = 0.0
    for use in (True, False):
        assert kernels.cell_terms(cfg, rho, mL, mR, dx, wt, fc, use_numba=use)[0] == 3
        assert kernels.cell_energy(cfg, rho, mL, mR, dx, wt, fc, use_numba=use)[0] == 3


def test_energy_kinetic_part_quadratic():
    cfg = CONFIGS[0]
    rho, mL, mR, dx, wt, fc = sample(6)
    z = np.zeros_like(mL)
    H = lambda s: kernels.cell_energy(cfg, rho, s * mL, s * mR, dx, wt, fc)[1][:, 0]
    assert np.allclose(H(2.0) - H(0.0), 4.0 * (H(1.0) - H(0.0)), rtol=1e-9)
    # dissipation is nonnegative for nonnegative weights
    assert np.all(kernels.cell_energy(cfg, rho, mL, mR, dx, wt, fc)[1][:, 1] >= 0)
    assert np.all(kernels.cell_energy(cfg, rho, z, z, dx, wt, fc)[1][:, 1] == 0)


def test_gauss_rule_exact_for_cubics():
    s, w = kernels.GAUSS_S, kernels.GAUSS_W
    for p in range(6):
        assert np.dot(w, s**p) == pytest.approx(1.0 / (p + 1), rel=1e-14)
