"""Compatible proper orthogonal decomposition and Galerkin reduction.

The reduced flux space is built from the reduced density space as
``W_r = d_x^+ Q_r (+) K``, where ``K`` is the kernel of the derivative and
``d_x^+`` its weighted right inverse. This keeps the reduced derivative
surjective onto the reduced density space, which is what makes the reduced
model locally mass conservative and energy stable.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .fem import FemModel, NonlinearEvaluator
from .linalg import (SaddleSolver, gram_orthonormalize, principal_angle_distance,
                     weighted_projection as _proj)
from .physics import PhysicsConfig
from .sim import GalerkinSystem, Trajectory

COMPAT_TOL = 1e-10
RANK_RTOL = 1e-12


class IncompatibleBasisError(ValueError):
    """The basis violates the compatibility conditions."""


class RankError(ValueError):
    """The requested dimension exceeds the numerical rank of the snapshot matrix."""


# --------------------------------------------------------------------------
# snapshots

@dataclass
class SnapshotSet:
    """Snapshot coefficients with time stamps and trajectory segmentation.

    ``segments`` lists half-open column ranges, one per trajectory.
    """

    S1: np.ndarray
    S2: np.ndarray
    times: np.ndarray
    segments: list = field(default_factory=list)
    lam: np.ndarray | None = None

    def __post_init__(self):
        self.S1 = np.asarray(self.S1, dtype=float)
        self.S2 = np.asarray(self.S2, dtype=float)
        self.times = np.asarray(self.times, dtype=float)
        L = self.S1.shape[1]
        if self.S2.shape[1] != L or self.times.shape != (L,):
            raise ValueError("snapshot column counts disagree")
        if not self.segments:
            self.segments = [(0, L)]
        for a, b in self.segments:
            if np.any(np.diff(self.times[a:b]) <= 0):
                raise ValueError("time stamps must increase within a segment")

    @property
    def L(self) -> int:
        return self.S1.shape[1]

    def save(self, path) -> str:
        """Write an ``.npz`` file and return its sha256 digest."""
        path = Path(path)
        with open(path, "wb") as fh:
            np.savez(fh, S1=self.S1, S2=self.S2, times=self.times,
                     segments=np.array(self.segments, dtype=np.int64),
                     lam=np.zeros((0, self.L)) if self.lam is None else self.lam)
        return file_digest(path)

    @classmethod
    def load(cls, path) -> "SnapshotSet":
        with np.load(path) as d:
            lam = d["lam"]
            return cls(d["S1"], d["S2"], d["times"], [tuple(s) for s in d["segments"]],
                       None if lam.size == 0 else lam)


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def snapshots_from_trajectory(traj: Trajectory, n_snapshots: int | None = None,
                              sys: GalerkinSystem | None = None) -> SnapshotSet:
    """Select ``n_snapshots`` equally spaced states (all states if ``None``)."""
    K = len(traj.times)
    idx = np.arange(K) if n_snapshots is None else np.unique(
        np.round(np.linspace(0, K - 1, min(n_snapshots, K))).astype(int))
    a1, a2 = traj.a1[idx], traj.a2[idx]
    if sys is not None and sys.V1 is not None:
        a1, a2 = a1 @ sys.V1.T, a2 @ sys.V2.T
    return SnapshotSet(a1.T, a2.T, traj.times[idx], [(0, len(idx))], traj.lam[idx].T)


def concatenate_snapshots(sets) -> SnapshotSet:
    S1 = np.hstack([s.S1 for s in sets])
    S2 = np.hstack([s.S2 for s in sets])
    times = np.concatenate([s.times for s in sets])
    segs, off = [], 0
    for s in sets:
        segs += [(a + off, b + off) for a, b in s.segments]
        off += s.L
    return SnapshotSet(S1, S2, times, segs)


# --------------------------------------------------------------------------
# bases

@dataclass
class ReductionBasis:
    V1: np.ndarray
    V2: np.ndarray
    sigma: np.ndarray = field(default_factory=lambda: np.zeros(0))
    kind: str = "compatible"
    meta: dict = field(default_factory=dict)

    @property
    def n1(self) -> int:
        return self.V1.shape[1]

    @property
    def n2(self) -> int:
        return self.V2.shape[1]

    @property
    def n(self) -> int:
        return self.n1 + self.n2

    def save(self, prefix, snapshot_digest: str | None = None) -> tuple[Path, Path]:
        """Write ``<prefix>.json`` (header) and ``<prefix>.npz`` (matrices)."""
        prefix = Path(prefix)
        npz = prefix.with_suffix(".npz")
        with open(npz, "wb") as fh:
            np.savez(fh, V1=self.V1, V2=self.V2, sigma=self.sigma)
        header = {
            "kind": self.kind,
            "tag": "incompatible-baseline" if self.kind != "compatible" else "compatible",
            "N1": self.V1.shape[0], "N2": self.V2.shape[0], "n1": self.n1, "n2": self.n2,
            "tolerances": {"compatibility": COMPAT_TOL, "rank_rtol": RANK_RTOL},
            "snapshot_sha256": snapshot_digest,
            "matrices": npz.name,
            "matrices_sha256": file_digest(npz),
            "meta": self.meta,
        }
        js = prefix.with_suffix(".json")
        js.write_text(json.dumps(header, indent=2) + "\n")
        return js, npz


def load_basis(path) -> ReductionBasis:
    """Read a basis from its JSON header (or the ``.npz`` next to it)."""
    path = Path(path)
    js = path.with_suffix(".json")
    header = json.loads(js.read_text())
    npz = js.parent / header["matrices"]
    if file_digest(npz) != header["matrices_sha256"]:
        raise ValueError(f"{npz} does not match the digest recorded in {js}")
    with np.load(npz) as d:
        return ReductionBasis(d["V1"], d["V2"], d["sigma"], header["kind"], header.get("meta", {}))


# --------------------------------------------------------------------------
# inner products

def weighted_projection(M, V, x):
    """``V (V^T M V)^{-1} V^T M x`` for full-column-rank ``V``."""
    V = np.asarray(V, dtype=float)
    G = V.T @ (M @ V)
    return V @ np.linalg.solve(G, V.T @ (M @ x))


def diamond_matrix(fm: FemModel) -> np.ndarray:
    """Coordinate matrix of the flux inner product that pairs kernel parts and derivatives.

    ``D = W K K^T W + J^T Q^{-1} J`` with a W-orthonormal kernel basis ``K``.
    """
    WK = fm.W @ fm.Kbasis
    JtQJ = (fm.J_op.T @ sp.diags(1.0 / fm.q_diag) @ fm.J_op).toarray()
    return WK @ WK.T + JtQJ


def diamond_scalar_product(fm: FemModel, w, w_tilde) -> float:
    Kt = fm.Kbasis.T
    pk = Kt @ (fm.W @ w)
    pkt = Kt @ (fm.W @ w_tilde)
    dw = fm.J_op @ w
    dwt = fm.J_op @ w_tilde
    return float(pk @ pkt + dw @ (dwt / fm.q_diag))


class _RightInverse:
    def __init__(self, fm: FemModel):
        self.fm = fm
        self._solver = SaddleSolver(fm.W, fm.J_op)

    def __call__(self, Y):
        """Weighted right inverse of the derivative applied to Q-coefficients ``Y``."""
        return self._solver.pinv(Y)


def derivative_right_inverse(fm: FemModel):
    """Callable ``q -> J^+ (Q q)``: the flux with derivative ``q`` that is W-orthogonal to the kernel."""
    rinv = _RightInverse(fm)
    return lambda q: rinv((fm.Q @ q))


# --------------------------------------------------------------------------
# compatible POD

def snapshot_matrix(fm: FemModel, snaps: SnapshotSet) -> np.ndarray:
    """``sqrt(Q) [S1, Q^{-1} J S2]``."""
    sq = np.sqrt(fm.q_diag)
    dS = (fm.J_op @ snaps.S2) / fm.q_diag[:, None]
    return sq[:, None] * np.hstack([snaps.S1, dS])


def _left_singular(K: np.ndarray, method: str = "snapshots"):
    if method == "svd":
        U, s, _ = np.linalg.svd(K, full_matrices=False)
        return U, s
    # method of snapshots: eigendecomposition of the small Gram matrix
    G = K.T @ K
    w, X = np.linalg.eigh(0.5 * (G + G.T))
    order = np.argsort(w)[::-1]
    w, X = np.maximum(w[order], 0.0), X[:, order]
    s = np.sqrt(w)
    keep = s > RANK_RTOL * max(s[0], np.finfo(float).tiny) if s.size else np.zeros(0, bool)
    U = K @ X[:, keep] / s[keep]
    return U, s


def compatible_pod(fm: FemModel, snaps: SnapshotSet, n1: int, method: str = "snapshots",
                   rinv=None) -> ReductionBasis:
    """Optimal compatible reduction basis of density dimension ``n1``.

    Parameters
    ----------
    method : {"snapshots", "svd"}
        Method of snapshots (default) or a dense thin SVD.
    rinv : callable, optional
        Precomputed weighted right inverse (see :func:`derivative_right_inverse`).

    Raises
    ------
    RankError
        If ``n1`` exceeds the numerical rank of the snapshot matrix.
    """
    K = snapshot_matrix(fm, snaps)
    U, s = _left_singular(K, method)
    rank = int(np.sum(s > RANK_RTOL * s[0])) if s.size and s[0] > 0 else 0
    if n1 > rank or n1 < 1:
        raise RankError(f"n1={n1} exceeds the numerical rank {rank} of the snapshot matrix")
    V1 = U[:, :n1] / np.sqrt(fm.q_diag)[:, None]
    V1 = gram_orthonormalize(V1, fm.Q)
    V2 = compatible_flux_basis(fm, V1, rinv)
    return ReductionBasis(V1, V2, s, "compatible", {"n1": n1, "method": method})


def compatible_flux_basis(fm: FemModel, V1: np.ndarray, rinv=None) -> np.ndarray:
    """W-orthonormal basis of ``J^+ Q im(V1) (+) ker J``."""
    rinv = derivative_right_inverse(fm) if rinv is None else rinv
    Y = rinv(V1)
    return gram_orthonormalize(np.hstack([fm.Kbasis, Y]), fm.W)


def pod_objective(fm: FemModel, snaps: SnapshotSet, V1, V2, D=None) -> float:
    """Training objective: density error in the L2 norm plus flux error in the diamond norm."""
    D = diamond_matrix(fm) if D is None else D
    r1 = snaps.S1 - weighted_projection(fm.Q, V1, snaps.S1)
    r2 = snaps.S2 - weighted_projection(D, V2, snaps.S2)
    return float(np.einsum("il,i,il->", r1, fm.q_diag, r1) + np.einsum("il,il->", r2, D @ r2))


def svd_tail(basis: ReductionBasis) -> float:
    return float(np.sum(basis.sigma[basis.n1:] ** 2))


def random_compatible_basis(fm: FemModel, n1: int, rng, rinv=None) -> ReductionBasis:
    """Competitor ``W = J^+ Q Qt (+) K`` for a random ``n1``-dimensional ``Qt``."""
    V1 = gram_orthonormalize(rng.standard_normal((fm.N1, n1)), fm.Q)
    return ReductionBasis(V1, compatible_flux_basis(fm, V1, rinv), kind="compatible",
                          meta={"random": True})


# --------------------------------------------------------------------------
# checks

@dataclass
class CompatibilityReport:
    passed: bool
    range_defect: float
    kernel_defect: float
    orth_defect_Q: float
    orth_defect_W: float
    tol: float

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def check_compatibility(fm: FemModel, basis: ReductionBasis, tol: float = COMPAT_TOL):
    """Check ``im(Q V1) = im(J V2)`` and ``ker J`` inside ``im V2``.

    The orthonormality defects are reported but do not decide the outcome.
    """
    V1, V2 = basis.V1, basis.V2
    QV1 = fm.Q @ V1
    JV2 = fm.J_op @ V2
    # im(J V2) has dimension n1 for compatible bases; compare orthonormal ranges
    range_defect = principal_angle_distance(QV1, JV2)
    G2 = V2.T @ (fm.W @ V2)
    PK = V2 @ np.linalg.solve(G2, V2.T @ (fm.W @ fm.Kbasis))
    kdiff = fm.Kbasis - PK
    kernel_defect = float(np.sqrt(np.max(np.linalg.eigvalsh(kdiff.T @ (fm.W @ kdiff)), initial=0.0)))
    oq = float(np.abs(V1.T @ QV1 - np.eye(V1.shape[1])).max())
    ow = float(np.abs(G2 - np.eye(V2.shape[1])).max())
    ok = range_defect <= tol and kernel_defect <= tol
    return CompatibilityReport(bool(ok), range_defect, kernel_defect, oq, ow, tol)


def derivative_norm_equivalence(fm: FemModel, m: np.ndarray, Qt: np.ndarray, rinv=None):
    """Return both sides of the norm identity behind the reduction to a density PCA.

    The first value is the diamond-norm distance of the kernel-free part of
    ``m`` to ``d_x^+ im(Qt)``; the second is the L2 distance of ``d_x m`` to
    ``im(Qt)``. They coincide for every ``m`` and every ``Qt``.
    """
    rinv = derivative_right_inverse(fm) if rinv is None else rinv
    K = fm.Kbasis
    m_perp = m - K @ (K.T @ (fm.W @ m))
    Y = rinv(Qt)
    D = diamond_matrix(fm)
    r = m_perp - weighted_projection(D, Y, m_perp)
    lhs = float(np.sqrt(max(r @ (D @ r), 0.0)))
    dm = (fm.J_op @ m) / fm.q_diag
    rq = dm - weighted_projection(fm.Q, Qt, dm)
    rhs = float(np.sqrt(max(rq @ (fm.q_diag * rq), 0.0)))
    return lhs, rhs


# --------------------------------------------------------------------------
# reduced systems

def galerkin_system(fm: FemModel, cfg: PhysicsConfig, V1, V2, name="ROM", meta=None):
    """Galerkin projection with the full L2 form (no complexity reduction)."""
    V1 = np.asarray(V1)
    V2 = np.asarray(V2)
    Qr = V1.T @ (fm.Q @ V1)
    Jr = V1.T @ (fm.J_op @ V2)
    Br = V2.T @ fm.B
    fc = cfg.cell_friction(fm.mesh.cell_edge, np.array([e.diameter for e in fm.net.edges]))
    ev = NonlinearEvaluator(cfg, fm.mesh.dx, fc, fm.cell_area, V1,
                            np.asarray(fm.ZL @ V2), np.asarray(fm.ZR @ V2))
    return GalerkinSystem(name, fm, Qr, Jr, Br, ev, V1=V1, V2=V2, meta=meta)


def project_rom(fm: FemModel, cfg: PhysicsConfig, basis: ReductionBasis,
                check: bool = True) -> GalerkinSystem:
    """Reduced model on a compatible basis.

    Raises
    ------
    IncompatibleBasisError
        If ``check`` is set and the basis fails :func:`check_compatibility`.
    """
    if check:
        rep = check_compatibility(fm, basis)
        if not rep.passed:
            raise IncompatibleBasisError(
                f"basis is not compatible (range defect {rep.range_defect:.2e}, "
                f"kernel defect {rep.kernel_defect:.2e})")
    return galerkin_system(fm, cfg, basis.V1, basis.V2, name="ROM",
                           meta={"n": basis.n, "n1": basis.n1, "n2": basis.n2})


def projection_error(fm: FemModel, basis: ReductionBasis, A1, A2) -> float:
    """``E_T`` of the orthogonal projection onto the basis (rows of ``A1``/``A2`` are times)."""
    from .sim import error_metric_ET

    P1 = _proj(A1.T, basis.V1, fm.Q).T
    P2 = _proj(A2.T, basis.V2, fm.W).T
    return error_metric_ET((A1, A2), (P1, P2), fm)
