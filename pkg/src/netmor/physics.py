"""Gas law, pressure potential and friction closures."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# R = 518 J/(kg K), T = 283 K
RT_NATURAL_GAS = 518.0 * 283.0
ALPHA_NATURAL_GAS = -3e-8

TURBULENT = "turbulent"
LAMINAR = "laminar"


class DomainError(ValueError):
    """A density left the admissible range of the pressure law."""

    def __init__(self, message, cell=None):
        super().__init__(message)
        self.cell = cell


@dataclass(frozen=True)
class PhysicsConfig:
    """Constants of the isothermal gas model.

    ``friction`` is the friction factor lambda for the turbulent model (scalar
    or one value per edge, in edge order) and the coefficient ``c`` of
    ``r = c / rho**2`` for the laminar model.
    """

    RT: float = RT_NATURAL_GAS
    alpha: float = ALPHA_NATURAL_GAS
    rho_ref: float = 1.0
    flow_ref: float = 1.0
    friction_model: str = TURBULENT
    friction: float | tuple = 0.01
    extra: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not self.RT > 0:
            raise ValueError("RT must be positive")
        if self.friction_model not in (TURBULENT, LAMINAR):
            raise ValueError(f"unknown friction model {self.friction_model!r}")
        if np.any(np.asarray(self.friction, dtype=float) < 0):
            raise ValueError("friction coefficients must be nonnegative")

    @property
    def laminar(self) -> bool:
        return self.friction_model == LAMINAR

    @property
    def rho_max(self) -> float:
        """Upper end of the admissible density range (inf for alpha <= 0)."""
        return 1.0 / (self.RT * self.alpha) if self.alpha > 0 else np.inf

    def edge_friction(self, n_edges: int) -> np.ndarray:
        f = np.asarray(self.friction, dtype=float)
        if f.ndim == 0:
            return np.full(n_edges, float(f))
        if f.shape != (n_edges,):
            raise ValueError(f"expected {n_edges} friction values, got {f.shape}")
        return f.copy()

    def cell_friction(self, cell_edge: np.ndarray, diameters: np.ndarray) -> np.ndarray:
        """Per-cell coefficient: lambda/(2 D) (turbulent) or c (laminar)."""
        if self.laminar:
            return self.edge_friction(len(diameters))[cell_edge]
        lam = self.edge_friction(len(diameters))
        return (lam / (2.0 * diameters))[cell_edge]


def _check(cfg: PhysicsConfig, rho):
    rho = np.asarray(rho, dtype=float)
    bad = ~(rho > 0) | ~(rho < cfg.rho_max)
    if np.any(bad):
        idx = np.flatnonzero(np.atleast_1d(bad))[0]
        raise DomainError(f"density {np.atleast_1d(rho)[idx]!r} outside the admissible range",
                          cell=int(idx))
    return rho


def pressure(cfg: PhysicsConfig, rho):
    """p(rho) = RT rho / (1 - RT alpha rho)."""
    rho = _check(cfg, rho)
    return cfg.RT * rho / (1.0 - cfg.RT * cfg.alpha * rho)


def pressure_potential(cfg: PhysicsConfig, rho):
    """P(rho) = RT rho log(rho / ((1 - RT alpha rho) rho_ref)); satisfies p = rho P' - P."""
    rho = _check(cfg, rho)
    b = cfg.RT * cfg.alpha * rho
    return cfg.RT * rho * np.log(rho / ((1.0 - b) * cfg.rho_ref))


def dP(cfg: PhysicsConfig, rho):
    rho = _check(cfg, rho)
    b = cfg.RT * cfg.alpha * rho
    return cfg.RT * (np.log(rho / ((1.0 - b) * cfg.rho_ref)) + 1.0 / (1.0 - b))


def d2P(cfg: PhysicsConfig, rho):
    rho = _check(cfg, rho)
    ra = cfg.RT * cfg.alpha
    b = ra * rho
    return cfg.RT * (1.0 / rho + ra / (1.0 - b) + ra / (1.0 - b) ** 2)


def density_from_potential(cfg: PhysicsConfig, u, rho0=None, tol=1e-14, maxiter=50):
    """Invert P'(rho) = u by Newton's method (P' is strictly increasing)."""
    u = np.asarray(u, dtype=float)
    rho = np.full(u.shape, 50.0 * cfg.rho_ref) if rho0 is None else np.array(rho0, dtype=float)
    for _ in range(maxiter):
        step = (dP(cfg, rho) - u) / d2P(cfg, rho)
        nxt = rho - step
        nxt = np.where(nxt <= 0, 0.5 * rho, nxt)
        if np.all(np.abs(nxt - rho) <= tol * np.abs(rho)):
            return nxt
        rho = nxt
    return rho
