"""Reference reducers without structure guarantees: block POD and DEIM.

Block POD compresses densities and fluxes independently, so the reduced
derivative is in general not surjective and the reduced model loses the
energy bound. DEIM replaces the nonlinear vectors by oblique interpolants;
the resulting forms are not symmetric in the state and test functions.
Both are used only for comparison and may break down in simulation.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from . import kernels
from .fem import FemModel, NonlinearEvaluator
from .linalg import gram_orthonormalize
from .mor import RANK_RTOL, RankError, ReductionBasis, SnapshotSet, galerkin_system
from .physics import DomainError, PhysicsConfig
from .sim import GalerkinSystem

DEIM_TAGS = ("alpha", "beta", "gamma")


# --------------------------------------------------------------------------
# block POD

def _weighted_pca(S: np.ndarray, M, n: int):
    """Leading ``n`` principal directions of the columns of ``S`` in the ``M`` inner product."""
    G = S.T @ (M @ S)
    w, X = np.linalg.eigh(0.5 * (G + G.T))
    order = np.argsort(w)[::-1]
    w, X = np.maximum(w[order], 0.0), X[:, order]
    s = np.sqrt(w)
    rank = int(np.sum(s > RANK_RTOL * s[0])) if s.size and s[0] > 0 else 0
    if n > rank or n < 1:
        raise RankError(f"requested {n} modes but the snapshot block has rank {rank}")
    V = S @ X[:, :n] / s[:n]
    return gram_orthonormalize(V, M), s


def block_pod(fm: FemModel, snaps: SnapshotSet, n: int) -> ReductionBasis:
    """Separate principal component analysis of densities (Q norm) and fluxes (W norm).

    The dimension is split as ``n1 = n // 2`` and ``n2 = n - n1``. The result is
    tagged as an incompatible baseline; ``sigma`` holds the density singular
    values followed by the flux singular values.
    """
    n1 = n // 2
    n2 = n - n1
    V1, s1 = _weighted_pca(snaps.S1, fm.Q, n1)
    V2, s2 = _weighted_pca(snaps.S2, fm.W, n2)
    return ReductionBasis(V1, V2, np.concatenate([s1, s2]), "block-pod",
                          {"n1": n1, "n2": n2, "n_sigma1": int(s1.size)})


def block_pod_tail(basis: ReductionBasis) -> float:
    """Sum of the discarded squared singular values over both blocks."""
    k = basis.meta["n_sigma1"]
    s1, s2 = basis.sigma[:k], basis.sigma[k:]
    return float(np.sum(s1[basis.n1:] ** 2) + np.sum(s2[basis.n2:] ** 2))


def block_pod_objective(fm: FemModel, snaps: SnapshotSet, basis: ReductionBasis) -> float:
    """Squared projection error of the snapshots, Q norm for densities and W norm for fluxes."""
    from .mor import weighted_projection

    r1 = snaps.S1 - weighted_projection(fm.Q, basis.V1, snaps.S1)
    r2 = snaps.S2 - weighted_projection(fm.W, basis.V2, snaps.S2)
    return float(np.einsum("il,i,il->", r1, fm.q_diag, r1) + np.einsum("il,il->", r2, fm.W @ r2))


# --------------------------------------------------------------------------
# DEIM

@dataclass
class DeimOperator:
    """Interpolation ``f ~ U (P^T U)^{-1} P^T f``.

    Attributes
    ----------
    indices : (m,) int
        Interpolation rows ``P``.
    U : (N, m)
        Orthonormal basis of the nonlinearity snapshots.
    coeff : (m, m)
        ``(P^T U)^{-1}``.
    tag : str
        Which vector is approximated: ``"alpha"``, ``"beta"`` (cellwise
        potential, before the derivative is applied), ``"gamma"``, or
        ``"beta-naive"`` (the assembled potential vector).
    """

    indices: np.ndarray
    U: np.ndarray
    coeff: np.ndarray
    tag: str
    sigma: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        if len(self.indices) != self.U.shape[1]:
            raise ValueError("index count must equal the number of basis columns")

    @property
    def m(self) -> int:
        return len(self.indices)

    def selection(self) -> sp.csr_matrix:
        m = self.m
        return sp.csr_matrix((np.ones(m), (np.arange(m), self.indices)), shape=(m, self.U.shape[0]))


def deim_points(U: np.ndarray) -> np.ndarray:
    """Classical greedy DEIM point selection (largest interpolation residual)."""
    idx = [int(np.argmax(np.abs(U[:, 0])))]
    for j in range(1, U.shape[1]):
        P = np.array(idx)
        c = np.linalg.solve(U[P, :j], U[P, j])
        r = U[:, j] - U[:, :j] @ c
        r[P] = 0.0  # guard against roundoff picking a selected row twice
        idx.append(int(np.argmax(np.abs(r))))
    return np.array(idx, dtype=np.int64)


def deim_train(F: np.ndarray, n_c: int, tag: str = "alpha") -> DeimOperator:
    """Build a DEIM operator of dimension ``n_c`` from snapshot columns ``F``.

    Raises
    ------
    RankError
        If ``n_c`` exceeds the numerical rank of ``F``.
    """
    U, s, _ = np.linalg.svd(np.asarray(F, dtype=float), full_matrices=False)
    rank = int(np.sum(s > RANK_RTOL * s[0])) if s.size and s[0] > 0 else 0
    if n_c > rank or n_c < 1:
        raise RankError(f"n_c={n_c} exceeds the numerical rank {rank} of the {tag} snapshots")
    U = U[:, :n_c]
    P = deim_points(U)
    return DeimOperator(P, U, np.linalg.inv(U[P]), tag, s)


def deim_apply(op: DeimOperator, values: np.ndarray) -> np.ndarray:
    """Reconstruct the full vector from its entries at ``op.indices``."""
    return op.U @ (op.coeff @ np.asarray(values))


def save_deim(ops: dict, path) -> Path:
    path = Path(path).with_suffix(".npz")
    arrays = {}
    for k, op in ops.items():
        arrays[f"{k}__indices"] = op.indices
        arrays[f"{k}__U"] = op.U
        arrays[f"{k}__sigma"] = op.sigma
        arrays[f"{k}__tag"] = np.array(op.tag)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)
    return path


def load_deim(path) -> dict:
    ops = {}
    with np.load(Path(path).with_suffix(".npz")) as d:
        keys = sorted({k.split("__")[0] for k in d.files})
        for k in keys:
            U, P = d[f"{k}__U"], d[f"{k}__indices"]
            ops[k] = DeimOperator(P, U, np.linalg.inv(U[P]), str(d[f"{k}__tag"]), d[f"{k}__sigma"])
    return ops


def _fom_cell_values(fm, cfg, a1, a2, fc):
    bad, vals, _ = kernels.cell_terms(cfg, a1, fm.ZL @ a2, fm.ZR @ a2, fm.mesh.dx, fm.cell_area, fc)
    if bad >= 0:
        raise DomainError(f"projected snapshot density {a1[bad]!r} on cell {bad}", cell=bad)
    return vals


def nonlinear_snapshots(fm: FemModel, cfg: PhysicsConfig, snaps: SnapshotSet,
                        basis: ReductionBasis, naive_beta: bool = False) -> dict:
    """FOM nonlinear vectors at the projected snapshot states, one column per snapshot."""
    from .mor import weighted_projection

    fc = _friction(fm, cfg)
    P1 = weighted_projection(fm.Q, basis.V1, snaps.S1)
    P2 = weighted_projection(fm.W, basis.V2, snaps.S2)
    ZLt, ZRt = fm.ZL.T.tocsr(), fm.ZR.T.tocsr()
    D = (fm.ZR - fm.ZL).T.tocsr()
    cols = {t: [] for t in DEIM_TAGS}
    for l in range(snaps.L):
        v = _fom_cell_values(fm, cfg, P1[:, l], P2[:, l], fc)
        cols["alpha"].append(ZLt @ v[:, 0] + ZRt @ v[:, 1])
        cols["gamma"].append(ZLt @ v[:, 3] + ZRt @ v[:, 4])
        cols["beta"].append(D @ (fm.cell_area * v[:, 2]) if naive_beta else v[:, 2].copy())
    return {t: np.column_stack(c) for t, c in cols.items()}


def _friction(fm, cfg):
    return cfg.cell_friction(fm.mesh.cell_edge, np.array([e.diameter for e in fm.net.edges]))


def train_deim(fm: FemModel, cfg: PhysicsConfig, snaps: SnapshotSet, basis: ReductionBasis,
               n_c: int, naive_beta: bool = False) -> dict:
    """One DEIM operator of dimension ``n_c`` per nonlinear term."""
    F = nonlinear_snapshots(fm, cfg, snaps, basis, naive_beta)
    ops = {t: deim_train(F[t], n_c, t) for t in DEIM_TAGS}
    if naive_beta:
        ops["beta"].tag = "beta-naive"
    return ops


def _support(M_csc, rows) -> np.ndarray:
    """Cells (rows of a cell-by-dof map) touching any of the dofs ``rows``."""
    sub = M_csc[:, rows]
    return np.unique(sub.indices)


def deim_system(fm: FemModel, cfg: PhysicsConfig, basis: ReductionBasis, ops: dict,
                name: str = "DEIM") -> GalerkinSystem:
    """Reduced model whose nonlinear vectors are DEIM interpolants.

    Only the cells needed to evaluate the interpolated entries are visited.
    Monitors (energy, dissipation, density) use the full reduced form.
    """
    V1 = np.asarray(basis.V1)
    V2 = np.asarray(basis.V2)
    ZL, ZR = fm.ZL.tocsc(), fm.ZR.tocsc()
    naive = ops["beta"].tag == "beta-naive"
    parts = [_support(ZL, ops[t].indices) for t in ("alpha", "gamma")]
    parts += [_support(ZR, ops[t].indices) for t in ("alpha", "gamma")]
    if naive:
        parts += [_support(ZL, ops["beta"].indices), _support(ZR, ops["beta"].indices)]
    else:
        parts.append(np.asarray(ops["beta"].indices))
    S = np.unique(np.concatenate(parts)).astype(np.int64)

    def vertex_tests(op):
        C = V2.T @ op.U @ op.coeff  # (n2, m)
        TL = np.asarray(ZL[S][:, op.indices] @ C.T)
        TR = np.asarray(ZR[S][:, op.indices] @ C.T)
        return TL, TR

    area = fm.cell_area[S]
    if naive:
        C = V2.T @ ops["beta"].U @ ops["beta"].coeff
        Dsp = (fm.ZR - fm.ZL).tocsc()[S][:, ops["beta"].indices]
        Dt = np.asarray((Dsp @ C.T).T)  # applied to area * gbar on S
    else:
        op = ops["beta"]
        C = V2.T @ (fm.J_op.T @ op.U) @ op.coeff  # (n2, m)
        pos = np.searchsorted(S, op.indices)
        Dt = np.zeros((V2.shape[1], S.size))
        Dt[:, pos] = C / fm.cell_area[op.indices][None, :]
    tests = {"alpha": vertex_tests(ops["alpha"]), "gamma": vertex_tests(ops["gamma"]), "beta": Dt}
    fc = _friction(fm, cfg)
    ev = NonlinearEvaluator(cfg, fm.mesh.dx[S], fc[S], area, V1[S],
                            np.asarray(fm.ZL[S] @ V2), np.asarray(fm.ZR[S] @ V2), tests=tests, cells=S)
    full = galerkin_system(fm, cfg, V1, V2)
    return GalerkinSystem(name, fm, full.Q, full.J, full.B, ev, V1=V1, V2=V2,
                          energy_evaluator=full.evaluator,
                          meta={"n": basis.n, "n_c": ops["alpha"].m, "cells": int(S.size),
                                "naive_beta": naive})


def project_rom_baseline(fm: FemModel, cfg: PhysicsConfig, basis: ReductionBasis,
                         deim: dict | None = None, name: str | None = None) -> GalerkinSystem:
    """Galerkin model on ``basis`` without compatibility checks, optionally with DEIM.

    Breakdowns of the resulting model are reported by the simulator, not raised here.
    """
    if deim is not None:
        return deim_system(fm, cfg, basis, deim, name=name or "DEIM")
    return galerkin_system(fm, cfg, basis.V1, basis.V2, name=name or "BlockPOD",
                           meta={"n": basis.n, "n1": basis.n1, "n2": basis.n2})
