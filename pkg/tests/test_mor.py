import json

import numpy as np
import pytest

from netmor import baseline as bl
from netmor import mor, sim
from netmor.fem import build_model
from netmor.net import Edge, Node, make_network


def tiny_model(kind, n_cells):
    """Single edge, two-edge path or three-edge star with about ``n_cells`` cells."""
    if kind == "edge":
        net = make_network([Node(1, True), Node(2, True)], [Edge(1, 1, 2, 1.0 * n_cells, 0.9)], [1, 2])
        return build_model(net, 1.0)
    if kind == "path":
        nodes = [Node(1, True), Node(2, False), Node(3, True)]
        edges = [Edge(1, 1, 2, 3.0, 1.0), Edge(2, 2, 3, 2.0, 0.6)]
        return build_model(make_network(nodes, edges, [1, 3]), 5.0 / n_cells + 1e-9)
    nodes = [Node(1, True), Node(2, True), Node(3, True), Node(4, False)]
    edges = [Edge(1, 1, 4, 2.0, 1.0), Edge(2, 4, 2, 2.0, 0.7), Edge(3, 4, 3, 2.0, 0.5)]
    return build_model(make_network(nodes, edges, [1, 2, 3]), 2.0 / max(1, n_cells // 3))


def random_snapshots(fm, L, rng):
    return mor.SnapshotSet(rng.standard_normal((fm.N1, L)), rng.standard_normal((fm.N2, L)),
                           np.arange(L, dtype=float))


def test_weighted_projection_properties(rng):
    V, _ = np.linalg.qr(rng.standard_normal((6, 2)))
    x = rng.standard_normal(6)
    assert np.allclose(mor.weighted_projection(np.eye(6), V, x), V @ (V.T @ x), atol=1e-15)
    A = rng.standard_normal((6, 6))
    M = A @ A.T + 6 * np.eye(6)
    V = rng.standard_normal((6, 2))
    px = mor.weighted_projection(M, V, x)
    assert np.abs(V.T @ (M @ (x - px))).max() <= 1e-12
    assert np.allclose(mor.weighted_projection(M, V, px), px, atol=1e-13)
    y = V @ rng.standard_normal(2)
    assert np.allclose(mor.weighted_projection(M, V, y), y, atol=1e-13)


def test_single_mode_exact_recovery():
    fm = tiny_model("edge", 5)
    rng = np.random.default_rng(0)
    mode = rng.standard_normal(fm.N1)
    snaps = mor.SnapshotSet(np.outer(mode, rng.standard_normal(7)), np.zeros((fm.N2, 7)),
                            np.arange(7.0))
    basis = mor.compatible_pod(fm, snaps, 1)
    assert mor.pod_objective(fm, snaps, basis.V1, basis.V2) <= 1e-20
    assert mor.check_compatibility(fm, basis).passed


def test_objective_equals_singular_value_tail():
    fm = tiny_model("edge", 5)
    assert (fm.N1, fm.N2, fm.Kbasis.shape[1]) == (5, 6, 1)
    rng = np.random.default_rng(7)
    snaps = random_snapshots(fm, 8, rng)
    for method in ("svd", "snapshots"):
        basis = mor.compatible_pod(fm, snaps, 2, method=method)
        obj = mor.pod_objective(fm, snaps, basis.V1, basis.V2)
        # independent oracle: tail of the singular values of the stacked snapshot matrix
        s = np.linalg.svd(mor.snapshot_matrix(fm, snaps), compute_uv=False)
        tail = float(np.sum(s[2:] ** 2))
        assert obj == pytest.approx(tail, rel=1e-10 if method == "svd" else 1e-8)
        assert mor.svd_tail(basis) == pytest.approx(tail, rel=1e-8)


@pytest.mark.parametrize("kind", ["edge", "path", "star"])
def test_compatible_pod_always_compatible(kind):
    fm = tiny_model(kind, 6)
    rng = np.random.default_rng(3)
    snaps = random_snapshots(fm, 9, rng)
    for n1 in range(1, fm.N1 + 1):
        assert mor.check_compatibility(fm, mor.compatible_pod(fm, snaps, n1)).passed


def test_rank_error_names_rank():
    fm = tiny_model("edge", 5)
    rng = np.random.default_rng(4)
    snaps = random_snapshots(fm, 2, rng)
    with pytest.raises(mor.RankError, match="rank 4"):
        mor.compatible_pod(fm, snaps, 5)


def test_identity_basis_is_compatible(diamond):
    fm = diamond.fm
    basis = mor.ReductionBasis(np.diag(1 / np.sqrt(fm.q_diag)), np.eye(fm.N2))
    assert mor.check_compatibility(fm, basis).passed


def test_block_pod_incompatible_and_rejected(diamond):
    bp = bl.block_pod(diamond.fm, diamond.snaps, 14)
    rep = mor.check_compatibility(diamond.fm, bp)
    assert not rep.passed and max(rep.range_defect, rep.kernel_defect) > 1e-3
    with pytest.raises(mor.IncompatibleBasisError):
        mor.project_rom(diamond.fm, diamond.cfg, bp)


def test_diamond_scalar_product(diamond, rng):
    fm = diamond.fm
    K = fm.Kbasis
    w, wt = K @ rng.standard_normal(3), K @ rng.standard_normal(3)
    assert mor.diamond_scalar_product(fm, w, wt) == pytest.approx(w @ (fm.W @ wt), rel=1e-12)
    x, y = rng.standard_normal(fm.N2), rng.standard_normal(fm.N2)
    x = x - K @ (K.T @ (fm.W @ x))
    expected = (fm.J_op @ x) @ ((fm.J_op @ y) / fm.q_diag)
    # x carries a roundoff-sized kernel part after the subtraction
    assert mor.diamond_scalar_product(fm, x, y) == pytest.approx(expected, rel=1e-9)
    D = mor.diamond_matrix(fm)
    V = rng.standard_normal((fm.N2, 12))
    np.linalg.cholesky(V.T @ D @ V)  # raises unless SPD


def test_derivative_norm_equivalence(diamond, rng):
    fm = diamond.fm
    rinv = mor.derivative_right_inverse(fm)
    lhs, rhs = mor.derivative_norm_equivalence(fm, fm.Kbasis[:, 0], rng.standard_normal((fm.N1, 2)), rinv)
    assert lhs == pytest.approx(0.0, abs=1e-10) and rhs == pytest.approx(0.0, abs=1e-10)
    m = rng.standard_normal(fm.N2)
    lhs, rhs = mor.derivative_norm_equivalence(fm, m, np.eye(fm.N1), rinv)
    assert lhs <= 1e-9 * np.linalg.norm(m) and rhs <= 1e-9 * np.linalg.norm(m)
    for _ in range(10):
        lhs, rhs = mor.derivative_norm_equivalence(fm, rng.standard_normal(fm.N2),
                                                   rng.standard_normal((fm.N1, 2)), rinv)
        assert lhs == pytest.approx(rhs, rel=1e-10)


def test_random_competitor_is_compatible(diamond, rng):
    comp = mor.random_compatible_basis(diamond.fm, 4, rng)
    assert mor.check_compatibility(diamond.fm, comp).passed


def test_basis_io_round_trip(diamond, tmp_path):
    basis = diamond.basis(5)
    digest = diamond.snaps.save(tmp_path / "snaps.npz")
    assert digest == mor.file_digest(tmp_path / "snaps.npz")
    back = mor.SnapshotSet.load(tmp_path / "snaps.npz")
    assert np.array_equal(back.S1, diamond.snaps.S1)
    js, npz = basis.save(tmp_path / "basis", digest)
    header = json.loads(js.read_text())
    assert header["tag"] == "compatible" and header["snapshot_sha256"] == digest
    loaded = mor.load_basis(js)
    assert np.array_equal(loaded.V1, basis.V1) and np.array_equal(loaded.V2, basis.V2)
    bp = bl.block_pod(diamond.fm, diamond.snaps, 12)
    js2, _ = bp.save(tmp_path / "bp")
    assert json.loads(js2.read_text())["tag"] == "incompatible-baseline"
    with open(npz, "ab") as fh:
        fh.write(b"tampered")
    with pytest.raises(ValueError, match="digest"):
        mor.load_basis(js)


def test_rom_mass_conservation_and_accuracy(diamond):
    basis = diamond.basis(5)
    rom = mor.project_rom(diamond.fm, diamond.cfg, basis)
    traj = diamond.run(rom)
    assert traj.completed
    assert np.all(sim.mass_conservation_residual(traj, rom) <= 1e-8)
    et = diamond.error(traj, rom)
    proj = mor.projection_error(diamond.fm, basis, *diamond.A)
    # the reduced model is close to the best approximation in its space
    assert proj <= et <= 3.0 * proj and et < 1e-2


def test_projection_error_matches_direct_formula(diamond):
    basis = diamond.basis(4)
    fm = diamond.fm
    A1, A2 = diamond.A
    P1 = (basis.V1 @ (basis.V1.T @ (fm.Q @ A1.T))).T
    P2 = (basis.V2 @ (basis.V2.T @ (fm.W @ A2.T))).T
    direct = sim.error_metric_ET((A1, A2), (P1, P2), fm)
    assert mor.projection_error(fm, basis, A1, A2) == pytest.approx(direct, rel=1e-10)
