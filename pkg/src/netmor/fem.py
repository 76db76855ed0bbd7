"""Mixed finite elements on a pipe network.

Densities live in the piecewise-constant space (one coefficient per cell).
Mass fluxes live in the edgewise continuous piecewise-linear space whose
coupling condition ``sum_e n^e[v] m_e(v) = 0`` at every interior node is
eliminated through a constrained basis ``Z`` acting on the unconstrained
vertex values.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from . import kernels
from .linalg import gram_orthonormalize, lu_nullspace
from .net import Network, incidence_weight, kernel_dimension
from .physics import DomainError, PhysicsConfig


@dataclass(frozen=True, eq=False)
class Mesh:
    """Uniform per-edge partition.

    Attributes
    ----------
    cell_edge : (J,) int
        Edge position of every cell.
    x_left, x_right, dx : (J,) float
        Local interval of each cell on its edge and its width.
    edge_cells : (E, 2) int
        Half-open cell range ``[start, stop)`` of every edge.
    """

    cell_edge: np.ndarray
    x_left: np.ndarray
    x_right: np.ndarray
    dx: np.ndarray
    edge_cells: np.ndarray
    dx_max: float

    @property
    def n_cells(self) -> int:
        return len(self.dx)

    def cells_of_edge(self, k: int) -> range:
        return range(*self.edge_cells[k])


def build_mesh(net: Network, dx_max: float) -> Mesh:
    """Split every edge into ``ceil(l / dx_max)`` cells of equal width."""
    if not dx_max > 0:
        raise ValueError("dx_max must be positive")
    counts = [max(1, math.ceil(e.length / dx_max - 1e-12)) for e in net.edges]
    cell_edge, xl, xr, dx = [], [], [], []
    ranges = np.zeros((len(net.edges), 2), dtype=np.int64)
    start = 0
    for k, (e, c) in enumerate(zip(net.edges, counts)):
        h = e.length / c
        grid = np.linspace(0.0, e.length, c + 1)
        cell_edge.extend([k] * c)
        xl.extend(grid[:-1])
        xr.extend(grid[1:])
        dx.extend([h] * c)
        ranges[k] = (start, start + c)
        start += c
    return Mesh(np.array(cell_edge, dtype=np.int64), np.array(xl), np.array(xr),
                np.array(dx), ranges, float(dx_max))


@dataclass(frozen=True, eq=False)
class FemModel:
    """Assembled full-order operators.

    ``Z`` maps flux coefficients (dimension ``N2``) to unconstrained vertex
    values; ``ZL``/``ZR`` are its rows at the left/right vertex of each cell.
    """

    net: Network
    mesh: Mesh
    Q: sp.csr_matrix
    W: sp.csr_matrix
    J_op: sp.csr_matrix
    B: np.ndarray
    Kbasis: np.ndarray
    Z: sp.csr_matrix
    ZL: sp.csr_matrix
    ZR: sp.csr_matrix
    cell_area: np.ndarray
    cell_diameter: np.ndarray
    boundary_vertex: np.ndarray

    @property
    def N1(self) -> int:
        return self.Q.shape[0]

    @property
    def N2(self) -> int:
        return self.W.shape[0]

    @property
    def n_boundary(self) -> int:
        return self.B.shape[1]

    @cached_property
    def q_diag(self) -> np.ndarray:
        return self.Q.diagonal().copy()

    def vertex_values(self, a2: np.ndarray) -> np.ndarray:
        return self.Z @ a2


def _vertex_layout(net: Network, mesh: Mesh):
    counts = mesh.edge_cells[:, 1] - mesh.edge_cells[:, 0]
    offsets = np.concatenate([[0], np.cumsum(counts + 1)])
    return counts, offsets


def _endpoint_vertex(net, k, node_id, counts, offsets):
    e = net.edges[k]
    return int(offsets[k]) if e.source == node_id else int(offsets[k] + counts[k])


def assemble_operators(net: Network, mesh: Mesh) -> FemModel:
    """Assemble ``Q``, ``W``, ``J_op``, ``B`` and a W-orthonormal kernel basis."""
    counts, offsets = _vertex_layout(net, mesh)
    n_vert = int(offsets[-1])
    areas = net.areas
    cell_area = areas[mesh.cell_edge]
    cell_diam = np.array([e.diameter for e in net.edges])[mesh.cell_edge]
    J = mesh.n_cells
    local = np.arange(J) - mesh.edge_cells[mesh.cell_edge, 0]
    vl = offsets[mesh.cell_edge] + local
    vr = vl + 1

    # elimination of the coupling conditions: one pivot vertex per interior node
    pivot_of = {}  # pivot vertex -> list of (vertex, factor)
    eliminated = np.zeros(n_vert, dtype=bool)
    for nid in net.interior_nodes:
        adj = net.adjacency[nid]
        verts = [_endpoint_vertex(net, k, nid, counts, offsets) for k in adj]
        weights = [incidence_weight(net, net.edges[k].id, nid) for k in adj]
        p = verts[0]
        eliminated[p] = True
        pivot_of[p] = [(v, -w / weights[0]) for v, w in zip(verts[1:], weights[1:])]
    col_of = -np.ones(n_vert, dtype=np.int64)
    free = np.flatnonzero(~eliminated)
    col_of[free] = np.arange(len(free))
    rows, cols, vals = list(free), list(range(len(free))), [1.0] * len(free)
    for p, deps in pivot_of.items():
        for v, f in deps:
            rows.append(p)
            cols.append(int(col_of[v]))
            vals.append(f)
    N2 = len(free)
    Z = sp.csr_matrix((vals, (rows, cols)), shape=(n_vert, N2))

    # unconstrained element matrices
    h = cell_area * mesh.dx
    Wu = sp.csr_matrix(
        (np.concatenate([h / 3, h / 3, h / 6, h / 6]),
         (np.concatenate([vl, vr, vl, vr]), np.concatenate([vl, vr, vr, vl]))),
        shape=(n_vert, n_vert))
    Ju = sp.csr_matrix(
        (np.concatenate([-cell_area, cell_area]),
         (np.concatenate([np.arange(J), np.arange(J)]), np.concatenate([vl, vr]))),
        shape=(J, n_vert))
    bnodes = net.boundary_nodes
    bvert = np.array([_endpoint_vertex(net, net.adjacency[nid][0], nid, counts, offsets)
                      for nid in bnodes], dtype=np.int64)
    Bu = np.zeros((n_vert, len(bnodes)))
    for i, (nid, v) in enumerate(zip(bnodes, bvert)):
        Bu[v, i] = incidence_weight(net, net.edges[net.adjacency[nid][0]].id, nid)

    W = (Z.T @ Wu @ Z).tocsr()
    W = ((W + W.T) * 0.5).tocsr()
    Jop = (Ju @ Z).tocsr()
    B = np.asarray(Z.T @ Bu)
    Q = sp.diags(h).tocsr()
    ZL = Z[vl].tocsr()
    ZR = Z[vr].tocsr()

    # kernel: edgewise constant fluxes that balance at interior nodes
    inc = net.incidence_matrix()
    edge_null = lu_nullspace(inc) if inc.shape[0] else np.eye(len(net.edges))
    vert_edge = np.repeat(np.arange(len(net.edges)), counts + 1)
    Kb = edge_null[vert_edge][free]
    Kb = gram_orthonormalize(Kb, W)
    if Kb.shape[1] != kernel_dimension(net):  # pragma: no cover
        raise RuntimeError("kernel basis has the wrong dimension")
    return FemModel(net, mesh, Q, W, Jop, B, Kb, Z, ZL, ZR, cell_area, cell_diam, bvert)


def build_model(net: Network, dx_max: float) -> FemModel:
    return assemble_operators(net, build_mesh(net, dx_max))


def dx_coordinates(fm: FemModel, a2: np.ndarray) -> np.ndarray:
    """Cellwise coefficients of the derivative of the flux, ``Q^{-1} J a2``."""
    return (fm.J_op @ a2) / fm.q_diag


def flux_at_cells(fm: FemModel, a2: np.ndarray):
    """Flux values at the left and right vertex of every cell."""
    return fm.ZL @ a2, fm.ZR @ a2


# ---------------------------------------------------------------------------
# nonlinear integrals

@dataclass(frozen=True)
class CellForm:
    """Weighted sum of cell integrals ``sum_i weights[i] * int_{K_i} (.) dx``."""

    cells: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        if len(self.cells) != len(self.weights):
            raise ValueError("cells and weights must have equal length")


def full_form(fm: FemModel) -> CellForm:
    """The area-weighted L2 form over every cell."""
    return CellForm(np.arange(fm.N1), fm.cell_area.copy())


def _rowscale(d, M):
    if sp.issparse(M):
        return sp.diags(d) @ M
    return d[:, None] * M


class NonlinearEvaluator:
    """Cellwise evaluation of the nonlinear vectors for any coordinate system.

    Parameters
    ----------
    cfg : PhysicsConfig
    dx, fc, wt : (nc,) arrays
        Widths, friction coefficients and form weights of the integrated cells.
    R : (nc, n1)
        Map from density coordinates to cell densities.
    IL, IR : (nc, n2)
        Maps from flux coordinates to left/right vertex values.
    tests : dict, optional
        Test maps per term. ``"alpha"`` and ``"gamma"`` map to pairs
        ``(TL, TR)`` of shape (nc, n2); ``"beta"`` maps to an (n2, nc) matrix
        applied to ``wt * gbar``. The default is the Galerkin choice
        ``TL = IL``, ``TR = IR`` and ``(IR - IL).T``.
    cells : (nc,) int, optional
        Global ids of the integrated cells, used in error messages.
    """

    def __init__(self, cfg: PhysicsConfig, dx, fc, wt, R, IL, IR, tests=None, cells=None):
        self.cfg = cfg
        self.dx = np.asarray(dx, dtype=float)
        self.fc = np.asarray(fc, dtype=float)
        self.wt = np.asarray(wt, dtype=float)
        self.R, self.IL, self.IR = R, IL, IR
        tests = {} if tests is None else dict(tests)
        ta = tests.get("alpha", (IL, IR))
        tg = tests.get("gamma", ta if "alpha" in tests else (IL, IR))
        self._ta = (ta[0].T, ta[1].T)
        self._tg = (tg[0].T, tg[1].T)
        self._tb = tests.get("beta", (IR - IL).T)
        self.cells = np.arange(len(self.dx)) if cells is None else np.asarray(cells)
        self.sparse = sp.issparse(IL)

    def states(self, a1, a2):
        return self.R @ a1, self.IL @ a2, self.IR @ a2

    def _raise(self, bad, rho):
        cell = int(self.cells[bad])
        raise DomainError(f"inadmissible density {rho[bad]!r} on cell {cell}", cell=cell)

    def evaluate(self, a1, a2, jacobian=False):
        """Return ``(f_alpha, f_beta, f_gamma)`` and, optionally, their Jacobians.

        The Jacobian dictionary has keys ``"alpha"``, ``"beta"``, ``"gamma"``,
        each mapping to a pair ``(d/da1, d/da2)``.
        """
        rho, mL, mR = self.states(a1, a2)
        bad, vals, jac = kernels.cell_terms(self.cfg, rho, mL, mR, self.dx, self.wt, self.fc)
        if bad >= 0:
            self._raise(bad, rho)
        (aLt, aRt), (gLt, gRt) = self._ta, self._tg
        fa = aLt @ vals[:, 0] + aRt @ vals[:, 1]
        fb = self._tb @ (self.wt * vals[:, 2])
        fg = gLt @ vals[:, 3] + gRt @ vals[:, 4]
        if not jacobian:
            return fa, fb, fg
        R, IL, IR = self.R, self.IL, self.IR

        def dstate(k, scale=None):
            d = jac[:, k, :] if scale is None else jac[:, k, :] * scale[:, None]
            return _rowscale(d[:, 0], R), _rowscale(d[:, 1], IL) + _rowscale(d[:, 2], IR)

        def pair(tests, kl, kr):
            l1, l2 = dstate(kl)
            r1, r2 = dstate(kr)
            return tests[0] @ l1 + tests[1] @ r1, tests[0] @ l2 + tests[1] @ r2

        b1, b2 = dstate(2, self.wt)
        J = {"alpha": pair(self._ta, 0, 1),
             "beta": (self._tb @ b1, self._tb @ b2),
             "gamma": pair(self._tg, 3, 4)}
        return (fa, fb, fg), J

    def energy(self, a1, a2):
        """Return ``(H, dissipation)`` summed over the integrated cells."""
        rho, mL, mR = self.states(a1, a2)
        bad, out = kernels.cell_energy(self.cfg, rho, mL, mR, self.dx, self.wt, self.fc)
        if bad >= 0:
            self._raise(bad, rho)
        return float(out[:, 0].sum()), float(out[:, 1].sum())

    def min_density(self, a1) -> float:
        return float(np.min(self.R @ a1))


def fom_evaluator(fm: FemModel, cfg: PhysicsConfig, form: CellForm | None = None):
    """Evaluator on FOM coordinates for ``form`` (default: full L2 form)."""
    form = full_form(fm) if form is None else form
    c = np.asarray(form.cells, dtype=np.int64)
    fc = cfg.cell_friction(fm.mesh.cell_edge, np.array([e.diameter for e in fm.net.edges]))
    R = sp.identity(fm.N1, format="csr")[c]
    return NonlinearEvaluator(cfg, fm.mesh.dx[c], fc[c], form.weights, R,
                              fm.ZL[c], fm.ZR[c], cells=c)


def assemble_nonlinear(fm: FemModel, cfg: PhysicsConfig, a, form: CellForm | None = None):
    """Nonlinear vectors ``(f_alpha, f_beta, f_gamma)`` at the FOM state ``a = (a1, a2)``."""
    a1, a2 = a
    return fom_evaluator(fm, cfg, form).evaluate(np.asarray(a1, float), np.asarray(a2, float))


def dump_matrices(fm: FemModel, directory) -> list[Path]:
    """Write the assembled operators as Matrix Market files."""
    from scipy.io import mmwrite

    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    out = []
    for name in ("Q", "W", "J_op", "B", "Kbasis"):
        M = getattr(fm, name)
        p = d / f"{name}.mtx"
        mmwrite(str(p), sp.coo_matrix(M) if sp.issparse(M) else np.asarray(M))
        out.append(p)
    return out
