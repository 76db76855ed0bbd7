import numpy as np
import pytest

from netmor.physics import (DomainError, PhysicsConfig, d2P, dP, density_from_potential,
                            pressure, pressure_potential)

CFG = PhysicsConfig()


def test_pressure_reference_value():
    # independent oracle: p = RT rho / (1 - alpha RT rho) at rho = 1
    RT, alpha = 146594.0, -3e-8
    assert CFG.RT == RT and CFG.alpha == alpha
    expected = RT / (1.0 - alpha * RT)
    assert pressure(CFG, 1.0) == pytest.approx(expected, rel=1e-14)
    assert pressure(CFG, 1.0) == pytest.approx(145952.3, rel=2e-6)


def test_pressure_identity():
    rho = np.linspace(20.0, 80.0, 25)
    h = 1e-4 * rho
    fd = (pressure_potential(CFG, rho + h) - pressure_potential(CFG, rho - h)) / (2 * h)
    res = rho * fd - pressure_potential(CFG, rho) - pressure(CFG, rho)
    assert np.all(np.abs(res) <= 1e-8 * pressure(CFG, rho))


def test_ideal_gas_limit():
    cfg = PhysicsConfig(alpha=0.0)
    rho = np.array([10.0, 50.0])
    assert np.allclose(pressure(cfg, rho), cfg.RT * rho, rtol=1e-15)
    assert np.allclose(pressure_potential(cfg, rho), cfg.RT * rho * np.log(rho), rtol=1e-14)


def test_derivatives_consistent():
    rho = np.linspace(5.0, 90.0, 11)
    h = 1e-5 * rho
    assert np.allclose((pressure_potential(CFG, rho + h) - pressure_potential(CFG, rho - h)) / (2 * h),
                       dP(CFG, rho), rtol=1e-8)
    assert np.allclose((dP(CFG, rho + h) - dP(CFG, rho - h)) / (2 * h), d2P(CFG, rho), rtol=1e-6)
    assert np.all(d2P(CFG, rho) > 0)


def test_potential_inversion():
    rho = np.array([1.0, 30.0, 75.0])
    back = density_from_potential(CFG, dP(CFG, rho))
    assert np.allclose(back, rho, rtol=1e-12)


def test_domain_errors():
    with pytest.raises(DomainError):
        pressure(CFG, -1.0)
    cfg = PhysicsConfig(alpha=1e-7)
    with pytest.raises(DomainError):
        dP(cfg, 2.0 * cfg.rho_max)


def test_friction_models():
    cfg = PhysicsConfig(friction=0.008)
    assert np.allclose(cfg.cell_friction(np.array([0, 1]), np.array([1.0, 0.5])), [0.004, 0.008])
    lam = PhysicsConfig(friction_model="laminar", friction=3.0)
    assert np.allclose(lam.cell_friction(np.array([0, 0]), np.array([1.0])), 3.0)
    with pytest.raises(ValueError):
        PhysicsConfig(friction=-1.0)
