"""Implicit Euler time integration, steady states and monitors.

One integrator serves every approximation level. A :class:`GalerkinSystem`
bundles the linear operators in its own coordinates together with a
:class:`~netmor.fem.NonlinearEvaluator`; the state vector is
``x = [a1, a2, lam]`` where ``lam`` holds one Lagrange multiplier per
mass-flow boundary node.
"""
from __future__ import annotations

import json
import logging
import time as _time
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fem import FemModel, NonlinearEvaluator, fom_evaluator
from .net import Network, incidence_weight
from .physics import (DomainError, PhysicsConfig, TURBULENT, LAMINAR, RT_NATURAL_GAS,
                      ALPHA_NATURAL_GAS, density_from_potential, dP, pressure_potential)
from .profiles import Profile

log = logging.getLogger(__name__)

NEWTON_TOL = 1e-10
NEWTON_MAXITER = 25


class SimulationBreakdown(RuntimeError):
    """Newton's method failed or the state left the admissible set."""

    def __init__(self, message, time=None, partial=None):
        super().__init__(message)
        self.time = time
        self.partial = partial


class SteadyStateError(RuntimeError):
    """The stationary problem could not be solved."""


# --------------------------------------------------------------------------
# scenarios

@dataclass(frozen=True)
class BoundaryCondition:
    node: int
    kind: str  # "potential" | "massflow"
    profile: Profile
    quantity: str = "density"  # for potential conditions: "density" | "potential"


@dataclass
class Scenario:
    """Time horizon, step, physics and boundary data on a network."""

    T: float
    dt: float
    physics: PhysicsConfig
    boundary: list
    initial: str = "steady"
    dx_max: float | None = None
    raw: dict = field(default_factory=dict, repr=False)

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.dt))

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.n_steps + 1)

    def with_dt(self, dt: float) -> "Scenario":
        return Scenario(self.T, dt, self.physics, self.boundary, self.initial, self.dx_max, self.raw)


def physics_from_dict(fr: dict, gas: dict | None = None) -> PhysicsConfig:
    gas = gas or {}
    model = fr.get("model", TURBULENT)
    if model == TURBULENT:
        coef = fr["lambda"]
    elif model == LAMINAR:
        coef = fr["coefficient"]
    else:
        raise ValueError(f"unknown friction model {model!r}")
    coef = tuple(coef) if isinstance(coef, list) else float(coef)
    return PhysicsConfig(RT=float(gas.get("RT", RT_NATURAL_GAS)),
                         alpha=float(gas.get("alpha", ALPHA_NATURAL_GAS)),
                         rho_ref=float(gas.get("rho_ref", 1.0)),
                         flow_ref=float(gas.get("flow_ref", 1.0)),
                         friction_model=model, friction=coef)


def scenario_from_dict(data: dict, net: Network | None = None) -> Scenario:
    """Parse a scenario description; with ``net`` given, check the boundary nodes."""
    try:
        T = float(data["T_hours"]) * 3600.0
        dt = float(data["dt_seconds"])
        cfg = physics_from_dict(data["friction"], data.get("gas"))
        bcs = []
        for b in data["boundary"]:
            kind = b["type"]
            if kind not in ("potential", "massflow"):
                raise ValueError(f"unknown boundary type {kind!r}")
            quantity = b.get("quantity", "density" if kind == "potential" else "massflow")
            if kind == "potential" and quantity not in ("density", "potential"):
                raise ValueError(f"unknown potential quantity {quantity!r}")
            prof = Profile(b["profile"], float(b.get("time_unit_seconds", 1.0)))
            bcs.append(BoundaryCondition(int(b["node"]), kind, prof, quantity))
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed scenario: {exc!r}") from exc
    if not dt > 0 or not T > 0:
        raise ValueError("T_hours and dt_seconds must be positive")
    initial = data.get("initial", "steady")
    if initial != "steady":
        raise ValueError("only 'steady' initial conditions are supported in scenario files")
    if net is not None:
        nodes = [b.node for b in bcs]
        if sorted(nodes) != sorted(net.boundary_nodes) or len(set(nodes)) != len(nodes):
            raise ValueError("every boundary node needs exactly one condition")
    dxm = data.get("dx_max_m")
    return Scenario(T, dt, cfg, bcs, initial, None if dxm is None else float(dxm), dict(data))


def load_scenario(path, net: Network | None = None) -> Scenario:
    return scenario_from_dict(json.loads(Path(path).read_text()), net)


class BoundaryInputs:
    """Boundary data evaluated in the ordering fixed by the network."""

    def __init__(self, net: Network, scen: Scenario):
        by_node = {b.node: b for b in scen.boundary}
        order = net.boundary_nodes
        self.cfg = scen.physics
        self.pot = [i for i, nid in enumerate(order) if by_node[nid].kind == "potential"]
        self.mf = [i for i, nid in enumerate(order) if by_node[nid].kind == "massflow"]
        self._bc = [by_node[nid] for nid in order]
        sign = []
        for i in self.mf:
            nid = order[i]
            e = net.edges[net.adjacency[nid][0]]
            sign.append(incidence_weight(net, e.id, nid) / e.area)
        self.mf_sign = np.array(sign)

    def potentials(self, t: float) -> np.ndarray:
        out = np.empty(len(self.pot))
        for k, i in enumerate(self.pot):
            bc = self._bc[i]
            val = float(bc.profile(t))
            out[k] = dP(self.cfg, val) if bc.quantity == "density" else val
        return out

    def massflows(self, t: float) -> np.ndarray:
        """Right-hand side ``n^e m = (n^e / A^e) (A m)`` at the mass-flow nodes."""
        return np.array([float(self._bc[i].profile(t)) for i in self.mf]) * self.mf_sign

    def boundary_density_guess(self, t: float) -> float:
        vals = []
        for i in self.pot:
            bc = self._bc[i]
            v = float(bc.profile(t))
            vals.append(v if bc.quantity == "density" else float(density_from_potential(self.cfg, v)))
        return float(np.mean(vals)) if vals else 50.0 * self.cfg.rho_ref


# --------------------------------------------------------------------------
# systems

class GalerkinSystem:
    """Linear operators plus nonlinear evaluator in one coordinate system.

    Parameters
    ----------
    name : str
    fm : FemModel
        Full-order model (for lifting and norms).
    Q, J, B : matrices in system coordinates ((n1, n1), (n1, n2), (n2, p)).
    evaluator : NonlinearEvaluator
        Evaluates the starred forms that enter the dynamics.
    V1, V2 : (N1, n1), (N2, n2) or None
        Lifting maps; ``None`` marks FOM coordinates.
    energy_evaluator : NonlinearEvaluator, optional
        Form for the Hamiltonian and dissipation monitors (default ``evaluator``).
    """

    def __init__(self, name, fm: FemModel, Q, J, B, evaluator: NonlinearEvaluator,
                 V1=None, V2=None, energy_evaluator=None, meta=None):
        self.name = name
        self.fm = fm
        self.Q, self.J, self.B = Q, J, np.asarray(B)
        self.evaluator = evaluator
        self.energy_evaluator = evaluator if energy_evaluator is None else energy_evaluator
        self.V1, self.V2 = V1, V2
        self.sparse = sp.issparse(Q)
        self.meta = dict(meta or {})

    @property
    def n1(self) -> int:
        return self.Q.shape[0]

    @property
    def n2(self) -> int:
        return self.J.shape[1]

    def lift(self, a1, a2):
        if self.V1 is None:
            return np.asarray(a1), np.asarray(a2)
        return self.V1 @ a1, self.V2 @ a2

    def restrict(self, a1_full, a2_full):
        """Orthogonal projection coordinates of a FOM state (Q and W inner products)."""
        if self.V1 is None:
            return np.array(a1_full, dtype=float), np.array(a2_full, dtype=float)
        fm = self.fm
        G1 = self.V1.T @ (fm.Q @ self.V1)
        G2 = self.V2.T @ (fm.W @ self.V2)
        c1 = np.linalg.solve(G1, self.V1.T @ (fm.Q @ a1_full))
        c2 = np.linalg.solve(G2, self.V2.T @ (fm.W @ a2_full))
        return c1, c2

    @cached_property
    def abs_J(self):
        return abs(self.J)

    def hamiltonian(self, a1, a2) -> float:
        return self.energy_evaluator.energy(a1, a2)[0]


def fom_system(fm: FemModel, cfg: PhysicsConfig) -> GalerkinSystem:
    return GalerkinSystem("FOM", fm, fm.Q, fm.J_op, fm.B, fom_evaluator(fm, cfg))


def hamiltonian(sys: GalerkinSystem, a) -> float:
    """Hamiltonian of the state ``a = (a1, a2[, lam])`` in the system's form."""
    return sys.hamiltonian(a[0], a[1])


# --------------------------------------------------------------------------
# nonlinear solves

def _split(sys, x):
    n1, n2 = sys.n1, sys.n2
    return x[:n1], x[n1:n1 + n2], x[n1 + n2:]


class _Problem:
    """Residual and Jacobian of one implicit Euler step (``dt=None``: steady)."""

    def __init__(self, sys: GalerkinSystem, bnd: BoundaryInputs, t: float, dt, x_old=None):
        self.sys = sys
        self.dt = dt
        self.Bp = sys.B[:, bnd.pot]
        self.Bm = sys.B[:, bnd.mf]
        self.up = self.Bp @ bnd.potentials(t)
        self.g = bnd.massflows(t)
        if dt is not None:
            a1o, a2o, _ = _split(sys, x_old)
            self.qa_old = sys.Q @ a1o
            self.fa_old = sys.evaluator.evaluate(a1o, a2o)[0]

    def residual(self, x, jacobian=False):
        sys = self.sys
        a1, a2, lam = _split(sys, x)
        out = sys.evaluator.evaluate(a1, a2, jacobian=jacobian)
        (fa, fb, fg), jac = out if jacobian else (out, None)
        ja2 = sys.J @ a2
        mom = -fb - fg - self.up - self.Bm @ lam
        scales = [np.abs(sys.abs_J @ np.abs(a2)).max(initial=0.0), max(np.abs(fb).max(initial=0.0),
                                                      np.abs(fg).max(initial=0.0),
                                                      np.abs(self.up).max(initial=0.0))]
        if self.dt is not None:
            qa = sys.Q @ a1
            F1 = (qa - self.qa_old) / self.dt + ja2
            F2 = (fa - self.fa_old) / self.dt + mom
            scales[0] = max(scales[0], np.abs(qa).max() / self.dt)
            scales[1] = max(scales[1], np.abs(fa).max(initial=0.0) / self.dt,
                            np.abs(self.fa_old).max(initial=0.0) / self.dt)
        else:
            F1 = ja2
            F2 = mom
        F3 = self.Bm.T @ a2 - self.g
        scales.append(max(np.abs(self.g).max(initial=0.0), np.abs(self.Bm.T @ a2).max(initial=0.0)))
        F = np.concatenate([F1, F2, F3])
        blocks = (F1, F2, F3)
        err = 0.0
        for Fb, s in zip(blocks, scales):
            if Fb.size:
                err = max(err, np.abs(Fb).max() / (s if s > 0 else 1.0))
        if not jacobian:
            return F, err
        return F, err, self._jacobian(jac)

    def _jacobian(self, jac):
        sys = self.sys
        (da1, da2), (db1, db2), (dg1, dg2) = jac["alpha"], jac["beta"], jac["gamma"]
        nm = self.Bm.shape[1]
        if self.dt is not None:
            A11 = sys.Q / self.dt
            A21 = da1 / self.dt - db1 - dg1
            A22 = da2 / self.dt - db2 - dg2
        else:
            A11 = None
            A21 = -db1 - dg1
            A22 = -db2 - dg2
        if sys.sparse:
            Bm = sp.csr_matrix(self.Bm)
            return sp.bmat([[A11, sys.J, None], [A21, A22, -Bm], [None, Bm.T, None]],
                           format="csc")
        n1, n2 = sys.n1, sys.n2
        M = np.zeros((n1 + n2 + nm, n1 + n2 + nm))
        if A11 is not None:
            M[:n1, :n1] = A11
        M[:n1, n1:n1 + n2] = sys.J
        M[n1:n1 + n2, :n1] = A21
        M[n1:n1 + n2, n1:n1 + n2] = A22
        M[n1:n1 + n2, n1 + n2:] = -self.Bm
        M[n1 + n2:, n1:n1 + n2] = self.Bm.T
        return M


def _solve_linear(M, F):
    if sp.issparse(M):
        return spla.splu(M).solve(F)
    return np.linalg.solve(M, F)


def newton(problem: _Problem, x0, tol=NEWTON_TOL, maxiter=NEWTON_MAXITER, damped=False):
    """Newton's method on ``problem``; returns ``(x, iterations)``.

    Raises
    ------
    SimulationBreakdown
        On divergence, singular Jacobians, non-finite values or domain errors.
    """
    x = np.array(x0, dtype=float)
    try:
        for it in range(maxiter + 1):
            F, err, M = problem.residual(x, jacobian=True)
            if not np.isfinite(err):
                raise SimulationBreakdown("non-finite residual")
            if err <= tol:
                return x, it
            if it == maxiter:
                break
            dx = _solve_linear(M, -F)
            if not np.all(np.isfinite(dx)):
                raise SimulationBreakdown("singular Newton system")
            if not damped:
                x = x + dx
                continue
            step = 1.0
            while step > 1e-6:
                trial = x + step * dx
                try:
                    _, e_trial = problem.residual(trial)
                except DomainError:
                    e_trial = np.inf
                if e_trial < err:
                    break
                step *= 0.5
            x = x + step * dx
    except DomainError as exc:
        raise SimulationBreakdown(f"domain error: {exc}") from exc
    except (np.linalg.LinAlgError, RuntimeError) as exc:
        if isinstance(exc, SimulationBreakdown):
            raise
        raise SimulationBreakdown(f"linear solve failed: {exc}") from exc
    raise SimulationBreakdown(f"Newton did not converge in {maxiter} iterations (residual {err:.3e})")


def n_multipliers(bnd: BoundaryInputs) -> int:
    return len(bnd.mf)


def initial_guess(sys: GalerkinSystem, bnd: BoundaryInputs, t: float = 0.0):
    """Uniform density at the mean boundary density and zero flux."""
    rho = bnd.boundary_density_guess(t)
    a1_full = np.full(sys.fm.N1, rho)
    a1, _ = sys.restrict(a1_full, np.zeros(sys.fm.N2))
    lam = np.full(len(bnd.mf), float(dP(bnd.cfg, rho)))
    return np.concatenate([a1, np.zeros(sys.n2), lam])


def solve_steady(sys: GalerkinSystem, scen: Scenario, net: Network | None = None,
                 x0=None, t: float = 0.0, tol: float = NEWTON_TOL):
    """Stationary state for the boundary data at time ``t``.

    Pseudo-transient continuation (implicit Euler with growing steps) brings
    the iterate into the basin of attraction; a damped stationary Newton
    solve finishes. Needed because turbulent friction has a vanishing
    derivative at zero flux, which makes the stationary Jacobian singular
    there.
    """
    net = sys.fm.net if net is None else net
    bnd = BoundaryInputs(net, scen)
    x = initial_guess(sys, bnd, t) if x0 is None else np.array(x0, dtype=float)
    steady = _Problem(sys, bnd, t, None)
    try:
        try:
            _, err = steady.residual(x)
        except DomainError:
            err = np.inf
        if err > 1e-6:
            dt = 10.0
            for _ in range(80):
                try:
                    x, _ = newton(_Problem(sys, bnd, t, dt, x), x)
                    dt *= 2.0
                except SimulationBreakdown:
                    dt *= 0.25
                    if dt < 1e-3:
                        raise
                    continue
                _, err = steady.residual(x)
                if err < 1e-6 or dt > 1e9:
                    break
        x, _ = newton(steady, x, tol=tol, maxiter=60, damped=True)
    except SimulationBreakdown as exc:
        raise SteadyStateError(f"steady solve failed: {exc}") from exc
    return x


def step(sys: GalerkinSystem, bnd: BoundaryInputs, x, t: float, dt: float):
    """One implicit Euler step from time ``t`` to ``t + dt``; returns ``(x_new, iterations)``."""
    return newton(_Problem(sys, bnd, t + dt, dt, x), x)


# --------------------------------------------------------------------------
# trajectories and monitors

@dataclass
class Trajectory:
    name: str
    times: np.ndarray
    states: np.ndarray  # (K+1, n1 + n2 + n_mult)
    n1: int
    n2: int
    monitors: dict
    breakdown: dict | None = None
    wall_seconds: float = 0.0

    @property
    def a1(self):
        return self.states[:, :self.n1]

    @property
    def a2(self):
        return self.states[:, self.n1:self.n1 + self.n2]

    @property
    def lam(self):
        return self.states[:, self.n1 + self.n2:]

    @property
    def completed(self) -> bool:
        return self.breakdown is None

    def to_csv(self, path, sys: GalerkinSystem | None = None) -> None:
        """Write ``time, rho_<cell>, m_<dof>`` (FOM coordinates if ``sys`` lifts)."""
        a1, a2 = self.a1, self.a2
        if sys is not None and sys.V1 is not None:
            a1 = a1 @ sys.V1.T
            a2 = a2 @ sys.V2.T
        header = (["time"] + [f"rho_{i}" for i in range(a1.shape[1])]
                  + [f"m_{j}" for j in range(a2.shape[1])])
        data = np.column_stack([self.times, a1, a2])
        np.savetxt(path, data, delimiter=",", header=",".join(header), comments="", fmt="%.12g")

    def monitors_to_csv(self, path) -> None:
        cols = ["H", "boundary_power", "dissipation", "mass_residual", "min_density"]
        data = np.column_stack([self.times] + [self.monitors[c] for c in cols])
        np.savetxt(path, data, delimiter=",", header=",".join(["time"] + cols), comments="",
                   fmt="%.12g")


def _record(sys, bnd, x, t):
    a1, a2, lam = _split(sys, x)
    H, diss = sys.energy_evaluator.energy(a1, a2)
    power = float(bnd.potentials(t) @ (sys.B[:, bnd.pot].T @ a2) + lam @ bnd.massflows(t))
    return H, power, diss, sys.energy_evaluator.min_density(a1)


def initial_state(sys: GalerkinSystem, scen: Scenario, fom_x0=None):
    """Initial state: projection of ``fom_x0`` if given, else the system's own steady state."""
    if fom_x0 is None:
        return solve_steady(sys, scen)
    fm = sys.fm
    a1, a2 = sys.restrict(fom_x0[:fm.N1], fom_x0[fm.N1:fm.N1 + fm.N2])
    return np.concatenate([a1, a2, fom_x0[fm.N1 + fm.N2:]])


def simulate(sys: GalerkinSystem, scen: Scenario, x0=None, raise_on_breakdown=False,
             progress=None) -> Trajectory:
    """Run implicit Euler over the scenario's time grid and record monitors.

    On breakdown the trajectory is truncated at the last successful step and
    ``breakdown`` records the failing time; with ``raise_on_breakdown`` a
    :class:`SimulationBreakdown` carrying the partial trajectory is raised.
    """
    start = _time.perf_counter()
    bnd = BoundaryInputs(sys.fm.net, scen)
    x = solve_steady(sys, scen) if x0 is None else np.array(x0, dtype=float)
    times = scen.times
    dt = scen.dt
    states = np.empty((len(times), x.size))
    mon = {k: np.full(len(times), np.nan) for k in
           ("H", "boundary_power", "dissipation", "mass_residual", "min_density", "newton_iterations")}
    states[0] = x
    breakdown = None
    n_done = 0
    try:
        mon["H"][0], mon["boundary_power"][0], mon["dissipation"][0], mon["min_density"][0] = \
            _record(sys, bnd, x, times[0])
        mon["mass_residual"][0] = 0.0
        mon["newton_iterations"][0] = 0
        for k in range(len(times) - 1):
            xn, its = step(sys, bnd, x, times[k], dt)
            a1o = x[:sys.n1]
            a1, a2, _ = _split(sys, xn)
            res = sys.Q @ (a1 - a1o) / dt + sys.J @ a2
            rec = _record(sys, bnd, xn, times[k + 1])
            states[k + 1] = xn
            mon["H"][k + 1], mon["boundary_power"][k + 1], mon["dissipation"][k + 1], \
                mon["min_density"][k + 1] = rec
            mon["mass_residual"][k + 1] = float(np.abs(res).max())
            mon["newton_iterations"][k + 1] = its
            x = xn
            n_done = k + 1
            if progress is not None:
                progress(k + 1, len(times) - 1)
    except (SimulationBreakdown, DomainError) as exc:
        breakdown = {"time": float(times[n_done + 1]) if n_done + 1 < len(times) else float(times[-1]),
                     "message": str(exc)}
        log.info("%s: breakdown at t=%.1f s: %s", sys.name, breakdown["time"], exc)
    keep = n_done + 1
    traj = Trajectory(sys.name, times[:keep].copy(), states[:keep].copy(), sys.n1, sys.n2,
                      {k: v[:keep].copy() for k, v in mon.items()}, breakdown,
                      _time.perf_counter() - start)
    if breakdown is not None and raise_on_breakdown:
        raise SimulationBreakdown(breakdown["message"], breakdown["time"], traj)
    return traj


def energy_balance_residual(traj: Trajectory) -> np.ndarray:
    """``(H_{k+1} - H_k)/dt - P_{k+1} + D_{k+1}`` per step (P: boundary power, D: dissipation)."""
    H = traj.monitors["H"]
    dt = np.diff(traj.times)
    return np.diff(H) / dt - traj.monitors["boundary_power"][1:] + traj.monitors["dissipation"][1:]


def mass_conservation_residual(traj: Trajectory, sys: GalerkinSystem) -> np.ndarray:
    """``max |Q (a1^{k+1} - a1^k)/dt + J a2^{k+1}|`` per step."""
    dt = np.diff(traj.times)[:, None]
    da = np.diff(traj.a1, axis=0)
    res = (sys.Q @ da.T).T / dt + (sys.J @ traj.a2[1:].T).T
    return np.abs(res).max(axis=1)


def lifted_states(traj: Trajectory, sys: GalerkinSystem):
    """FOM coordinates ``(A1, A2)`` with one row per time."""
    if sys.V1 is None:
        return traj.a1, traj.a2
    return traj.a1 @ sys.V1.T, traj.a2 @ sys.V2.T


def state_norms(fm: FemModel, A1, A2) -> np.ndarray:
    q = fm.q_diag
    return np.sqrt(np.einsum("ti,i,ti->t", A1, q, A1) + np.einsum("ti,ti->t", A2, (fm.W @ A2.T).T))


def error_metric_ET(reference, approx, fm: FemModel) -> float:
    """``max_t ||a - a~|| / max_t ||a||`` in the block-diagonal (Q, W) norm.

    ``reference`` and ``approx`` are pairs ``(A1, A2)`` of FOM coordinates on a
    common time grid. If ``approx`` is shorter (breakdown) the metric is inf.
    """
    R1, R2 = reference
    X1, X2 = approx
    if X1.shape != R1.shape or X2.shape != R2.shape:
        return float("inf")
    den = state_norms(fm, R1, R2).max()
    return float(state_norms(fm, R1 - X1, R2 - X2).max() / den)


def positivity_monitor(traj: Trajectory, sys: GalerkinSystem, scen: Scenario | None = None):
    """Minimum active-cell density and a logarithmic lower-bound envelope.

    The envelope ``log rho_i(0) - sqrt(t R(t)) / (dx_i sqrt(xi_i))`` uses the
    constant 1 and ``R(t) = H(0) + max(0, -inf P) + int_0^t power``; it is a
    diagnostic series, not an assertion.
    """
    ev = sys.energy_evaluator
    rho = np.array([ev.R @ a for a in traj.a1])  # (T, nc)
    cfg = ev.cfg
    min_rho = rho.min(axis=1)
    # P is convex; its minimum sits where P' = 0
    inf_p = float(pressure_potential(cfg, density_from_potential(cfg, 0.0, rho0=cfg.rho_ref / np.e)))
    dt = np.diff(traj.times)
    work = np.concatenate([[0.0], np.cumsum(dt * traj.monitors["boundary_power"][1:])])
    R = np.maximum(traj.monitors["H"][0] + max(0.0, -inf_p) + work, 0.0)
    scale = 1.0 / (ev.dx * np.sqrt(ev.wt))
    env = np.log(rho[0])[None, :] - np.sqrt(traj.times * R)[:, None] * scale[None, :]
    return {"min_density": float(min_rho.min()), "series": min_rho,
            "nonpositive": bool(np.any(min_rho <= 0)),
            "log_envelope_min": env.min(axis=1), "log_density_min": np.log(np.maximum(min_rho, 1e-300))}
