"""Empirical quadrature for the nonlinear terms of the reduced model.

The complexity-reduced form is ``<b, c>_c = sum_{i in I} xi_i int_{K_i} b c dx``
with nonnegative weights ``xi``. Weights absorb the pipe cross sections, so
the exact rule over all cells has ``xi_i = A^{e(i)}``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .fem import FemModel, NonlinearEvaluator
from .mor import ReductionBasis, SnapshotSet
from .physics import DomainError, PhysicsConfig
from .sim import GalerkinSystem

C_TILDE = 10.0

ROW_BETA, ROW_GAMMA, ROW_VDIFF = 0, 1, 2


class QuadratureError(RuntimeError):
    """Training could not produce an admissible rule."""


# --------------------------------------------------------------------------
# training data

@dataclass
class NonlinearSnapshotData:
    """Cell integrals of the nonlinear integrands.

    ``A[l, i]`` is the plain integral of integrand ``l`` over cell ``i``;
    ``b[l]`` the area-weighted integral over the network. ``rows`` stores
    ``(kind, snapshot, basis index)`` per row, with ``snapshot`` the later
    snapshot of the pair for velocity differences.
    """

    A: np.ndarray
    b: np.ndarray
    rows: np.ndarray
    cell_area: np.ndarray

    @property
    def n_rows(self) -> int:
        return self.A.shape[0]


def _cell_values(fm, cfg, a2, rho, fc, use_numba=None):
    mL, mR = fm.ZL @ a2, fm.ZR @ a2
    bad, vals, _ = kernels.cell_terms(cfg, rho, mL, mR, fm.mesh.dx, np.ones(fm.N1), fc, use_numba)
    if bad >= 0:
        raise DomainError(f"snapshot density {rho[bad]!r} on cell {bad} is inadmissible", cell=bad)
    return vals


def build_nonlinear_snapshots(fm: FemModel, cfg: PhysicsConfig, snaps: SnapshotSet,
                              basis: ReductionBasis, normalize: bool = False) -> NonlinearSnapshotData:
    """Rows for the potential, friction and velocity-difference integrands.

    For a single trajectory of ``L`` snapshots the result has ``(3L - 1) n2`` rows.
    """
    fc = cfg.cell_friction(fm.mesh.cell_edge, np.array([e.diameter for e in fm.net.edges]))
    WL = np.asarray(fm.ZL @ basis.V2)  # (J, n2)
    WR = np.asarray(fm.ZR @ basis.V2)
    dW = WR - WL
    blocks, meta = [], []
    vals = [_cell_values(fm, cfg, snaps.S2[:, l], snaps.S1[:, l], fc) for l in range(snaps.L)]
    n2 = basis.n2
    jj = np.arange(n2)
    for l, v in enumerate(vals):
        blocks.append((v[:, 2][:, None] * dW).T)          # int g d_x w
        blocks.append((-(v[:, 3][:, None] * WL + v[:, 4][:, None] * WR)).T)  # int r m w
        meta.append(np.column_stack([np.full(n2, ROW_BETA), np.full(n2, l), jj]))
        meta.append(np.column_stack([np.full(n2, ROW_GAMMA), np.full(n2, l), jj]))
    for a, b in snaps.segments:
        for l in range(a + 1, b):
            dt = snaps.times[l] - snaps.times[l - 1]
            dv = (vals[l][:, :2] - vals[l - 1][:, :2]) / dt  # int v phi_{L,R} differences
            blocks.append((dv[:, :1] * WL + dv[:, 1:2] * WR).T)
            meta.append(np.column_stack([np.full(n2, ROW_VDIFF), np.full(n2, l), jj]))
    A = np.vstack(blocks)
    rows = np.vstack(meta).astype(np.int64)
    if normalize:
        s = np.linalg.norm(A, axis=1)
        A = A / np.where(s > 0, s, 1.0)[:, None]
    b = A @ fm.cell_area
    return NonlinearSnapshotData(A, b, rows, fm.cell_area.copy())


# --------------------------------------------------------------------------
# nonnegative least squares

def nnls(A: np.ndarray, b: np.ndarray, tol: float | None = None, maxiter: int | None = None):
    """Lawson-Hanson active-set solution of ``min ||A x - b||`` subject to ``x >= 0``.

    Returns
    -------
    x : ndarray
    rnorm : float
        Residual norm ``||A x - b||``.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    m, n = A.shape
    x = np.zeros(n)
    if n == 0:
        return x, float(np.linalg.norm(b))
    if tol is None:
        tol = 10.0 * max(m, n) * np.finfo(float).eps * np.abs(A).sum(axis=0).max() * max(
            np.abs(b).max(), np.finfo(float).tiny)
    maxiter = 3 * n + 10 if maxiter is None else maxiter
    passive = np.zeros(n, dtype=bool)
    w = A.T @ (b - A @ x)
    for _ in range(maxiter):
        cand = np.flatnonzero(~passive)
        if cand.size == 0 or w[cand].max() <= tol:
            break
        j = cand[np.argmax(w[cand])]
        passive[j] = True
        while True:
            P = np.flatnonzero(passive)
            z = np.zeros(n)
            z[P] = np.linalg.lstsq(A[:, P], b, rcond=None)[0]
            if np.all(z[P] > 0):
                x = z
                break
            neg = P[z[P] <= 0]
            ratios = x[neg] / (x[neg] - z[neg])
            k = int(np.argmin(ratios))
            x = x + ratios[k] * (z - x)
            x[neg[k]] = 0.0  # the blocking variable leaves exactly
            passive &= x > 0
            x[~passive] = 0.0
            if not passive.any():
                break
        w = A.T @ (b - A @ x)
    return x, float(np.linalg.norm(A @ x - b))


# --------------------------------------------------------------------------
# rules and the reduced mass matrix

@dataclass
class QuadratureRule:
    cells: np.ndarray
    weights: np.ndarray
    C_tilde: float = C_TILDE
    cond_Mc: float = float("nan")
    spectrum: tuple = (float("nan"), float("nan"))
    history: list = field(default_factory=list)
    n_c_requested: int | None = None

    @property
    def n_c(self) -> int:
        return len(self.cells)

    def to_dict(self) -> dict:
        return {"cells": [int(c) for c in self.cells], "weights": [float(w) for w in self.weights],
                "C_tilde": float(self.C_tilde), "cond_Mc": float(self.cond_Mc)}

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "QuadratureRule":
        d = json.loads(Path(path).read_text())
        return cls(np.array(d["cells"], dtype=np.int64), np.array(d["weights"], dtype=float),
                   float(d.get("C_tilde", C_TILDE)), float(d.get("cond_Mc", np.nan)))


def exact_rule(fm: FemModel) -> QuadratureRule:
    """All cells with their cross-section areas: reproduces the L2 form."""
    return QuadratureRule(np.arange(fm.N1), fm.cell_area.copy(), C_TILDE, 1.0, (1.0, 1.0))


class McBuilder:
    """``M_c(xi) = Q_c(xi) (+) W_c(xi)`` for a fixed basis, from per-cell Gram blocks."""

    def __init__(self, fm: FemModel, basis: ReductionBasis):
        self.dx = fm.mesh.dx
        self.V1 = np.asarray(basis.V1)
        self.WL = np.asarray(fm.ZL @ basis.V2)
        self.WR = np.asarray(fm.ZR @ basis.V2)

    def __call__(self, cells, weights) -> np.ndarray:
        cells = np.asarray(cells, dtype=np.int64)
        s = np.asarray(weights, dtype=float) * self.dx[cells]
        V1 = self.V1[cells]
        WL, WR = self.WL[cells], self.WR[cells]
        Qc = V1.T @ (s[:, None] * V1)
        cross = WL.T @ (s[:, None] * WR)
        Wc = (WL.T @ (s[:, None] * WL) + WR.T @ (s[:, None] * WR)) / 3.0 + (cross + cross.T) / 6.0
        n1, n2 = Qc.shape[0], Wc.shape[0]
        M = np.zeros((n1 + n2, n1 + n2))
        M[:n1, :n1] = Qc
        M[n1:, n1:] = Wc
        return 0.5 * (M + M.T)


def mc_matrix(basis: ReductionBasis, fm: FemModel, rule: QuadratureRule) -> np.ndarray:
    return McBuilder(fm, basis)(rule.cells, rule.weights)


def spectrum_check(Mc: np.ndarray, C_tilde: float = C_TILDE):
    """Return ``(passed, cond, (lambda_min, lambda_max))``."""
    if Mc.size == 0:
        return False, float("inf"), (0.0, 0.0)
    ev = np.linalg.eigvalsh(Mc)
    lo, hi = float(ev[0]), float(ev[-1])
    cond = hi / lo if lo > 0 else float("inf")
    ok = lo >= C_tilde ** -2 and hi <= C_tilde ** 2
    return bool(ok), cond, (lo, hi)


def greedy_quadrature(data: NonlinearSnapshotData, n_c: int, C_tilde: float = C_TILDE,
                      mc_builder=None, max_cells: int | None = None) -> QuadratureRule:
    """Greedy selection of active cells with nonnegative least-squares weights.

    Each round adds the candidate with the steepest descent of
    ``F(xi) = ||A xi - b||^2`` (ties: smallest index) and re-solves the NNLS
    problem on the selected cells. After ``n_c`` rounds the spectrum of
    ``M_c`` is checked; if it leaves ``[C^-2, C^2]`` further rounds are run,
    continuing from the current weights.

    Cells that end up with zero weight stay selected during the iteration
    (so the feasible sets are nested and ``F`` cannot increase) but are
    dropped from the returned rule.

    Raises
    ------
    QuadratureError
        If every cell is selected without satisfying the spectrum bound.
    """
    if n_c < 1:
        raise ValueError("n_c must be at least 1")
    A, b = data.A, data.b
    J = A.shape[1]
    max_cells = J if max_cells is None else min(max_cells, J)
    selected: list[int] = []
    xi = np.zeros(J)
    history = []
    target = n_c
    while True:
        while len(selected) < min(target, max_cells):
            grad = 2.0 * A.T @ (A @ xi - b)
            score = -grad
            score[selected] = -np.inf
            j = int(np.argmax(score))
            selected.append(j)
            w, _ = nnls(A[:, selected], b)
            xi = np.zeros(J)
            xi[selected] = w
            r = A @ xi - b
            history.append(float(r @ r))
        keep = np.array(sorted(i for i in selected if xi[i] > 0), dtype=np.int64)
        if mc_builder is None:
            return QuadratureRule(keep, xi[keep], C_tilde, float("nan"), (np.nan, np.nan),
                                  history, n_c)
        ok, cond, spec = spectrum_check(mc_builder(keep, xi[keep]), C_tilde)
        if ok:
            return QuadratureRule(keep, xi[keep], C_tilde, cond, spec, history, n_c)
        if len(selected) >= max_cells:
            raise QuadratureError(
                f"spectrum bound violated with all {max_cells} cells selected (cond {cond:.3g})")
        target = len(selected) + 1


def quadrature_objective(data: NonlinearSnapshotData, rule: QuadratureRule) -> float:
    r = data.A[:, rule.cells] @ rule.weights - data.b
    return float(r @ r)


# --------------------------------------------------------------------------
# complexity-reduced model

def project_crom(fm: FemModel, cfg: PhysicsConfig, basis: ReductionBasis, rule: QuadratureRule,
                 check: bool = True, name: str = "CROM") -> GalerkinSystem:
    """Reduced model whose nonlinear forms use ``rule`` (cost independent of the mesh size).

    Raises
    ------
    QuadratureError
        If ``check`` is set and ``rule`` violates the spectrum bound.
    """
    V1 = np.asarray(basis.V1)
    V2 = np.asarray(basis.V2)
    if check:
        ok, cond, spec = spectrum_check(mc_matrix(basis, fm, rule), rule.C_tilde)
        if not ok:
            raise QuadratureError(f"rule violates the spectrum bound: spectrum {spec}")
    c = np.asarray(rule.cells, dtype=np.int64)
    fc = cfg.cell_friction(fm.mesh.cell_edge, np.array([e.diameter for e in fm.net.edges]))
    ev = NonlinearEvaluator(cfg, fm.mesh.dx[c], fc[c], rule.weights, V1[c],
                            np.asarray(fm.ZL[c] @ V2), np.asarray(fm.ZR[c] @ V2), cells=c)
    Qr = V1.T @ (fm.Q @ V1)
    Jr = V1.T @ (fm.J_op @ V2)
    Br = V2.T @ fm.B
    return GalerkinSystem(name, fm, Qr, Jr, Br, ev, V1=V1, V2=V2,
                          meta={"n": basis.n, "n_c": rule.n_c})
