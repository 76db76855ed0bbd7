"""Pipe network topology, incidence algebra and file ingestion."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np


class NetworkError(ValueError):
    """Base class for network input problems."""


class NetworkParseError(NetworkError):
    """The network file is not valid JSON or misses required keys."""


class NetworkValidationError(NetworkError):
    """The network parses but violates a topological or physical rule."""


@dataclass(frozen=True)
class Node:
    id: int
    boundary: bool

    @property
    def kind(self) -> str:
        return "boundary" if self.boundary else "interior"


@dataclass(frozen=True)
class Edge:
    id: int
    source: int
    target: int
    length: float
    diameter: float

    @property
    def area(self) -> float:
        return math.pi / 4.0 * self.diameter**2


@dataclass(frozen=True, eq=False)
class Network:
    """Directed pipe graph. Immutable; construct through :func:`make_network`."""

    nodes: tuple[Node, ...]
    edges: tuple[Edge, ...]
    boundary_order: tuple[int, ...]

    @cached_property
    def node_pos(self) -> dict[int, int]:
        return {n.id: k for k, n in enumerate(self.nodes)}

    @cached_property
    def edge_pos(self) -> dict[int, int]:
        return {e.id: k for k, e in enumerate(self.edges)}

    @property
    def interior_nodes(self) -> list[int]:
        return [n.id for n in self.nodes if not n.boundary]

    @property
    def boundary_nodes(self) -> list[int]:
        return list(self.boundary_order)

    @cached_property
    def adjacency(self) -> dict[int, list[int]]:
        """Node id -> positions of adjacent edges (in edge order)."""
        adj: dict[int, list[int]] = {n.id: [] for n in self.nodes}
        for k, e in enumerate(self.edges):
            adj[e.source].append(k)
            adj[e.target].append(k)
        return adj

    @property
    def areas(self) -> np.ndarray:
        return np.array([e.area for e in self.edges])

    @property
    def total_length(self) -> float:
        return float(sum(e.length for e in self.edges))

    def incidence_matrix(self, node_ids=None) -> np.ndarray:
        """Dense weighted incidence, rows = ``node_ids`` (default: interior nodes)."""
        if node_ids is None:
            node_ids = self.interior_nodes
        M = np.zeros((len(node_ids), len(self.edges)))
        for r, nid in enumerate(node_ids):
            for k in self.adjacency[nid]:
                M[r, k] = incidence_weight(self, self.edges[k].id, nid)
        return M

    def to_dict(self) -> dict:
        return {
            "nodes": [{"id": n.id, "boundary": n.boundary} for n in self.nodes],
            "edges": [
                {"id": e.id, "from": e.source, "to": e.target,
                 "length_m": e.length, "diameter_m": e.diameter}
                for e in self.edges
            ],
            "boundary_order": list(self.boundary_order),
        }


def make_network(nodes, edges, boundary_order) -> Network:
    """Build and validate a :class:`Network`."""
    net = Network(tuple(nodes), tuple(edges), tuple(boundary_order))
    validate(net)
    return net


def validate(net: Network) -> None:
    ids = [n.id for n in net.nodes]
    if len(set(ids)) != len(ids):
        raise NetworkValidationError("duplicate node ids")
    eids = [e.id for e in net.edges]
    if len(set(eids)) != len(eids):
        raise NetworkValidationError("duplicate edge ids")
    if not net.edges:
        raise NetworkValidationError("network has no edges")
    known = set(ids)
    pairs = set()
    for e in net.edges:
        if e.source not in known or e.target not in known:
            raise NetworkValidationError(f"edge {e.id} references an unknown node")
        if e.source == e.target:
            raise NetworkValidationError(f"edge {e.id} is a self-loop")
        key = frozenset((e.source, e.target))
        if key in pairs:
            raise NetworkValidationError(f"edge {e.id} is parallel to another edge")
        pairs.add(key)
        if not (e.length > 0 and math.isfinite(e.length)):
            raise NetworkValidationError(f"edge {e.id} has nonpositive length")
        if not (e.diameter > 0 and math.isfinite(e.diameter)):
            raise NetworkValidationError(f"edge {e.id} has nonpositive diameter")
    for n in net.nodes:
        deg = len(net.adjacency[n.id])
        if n.boundary and deg != 1:
            raise NetworkValidationError(
                f"boundary node {n.id} has degree {deg}, expected 1")
        if not n.boundary and deg == 0:
            raise NetworkValidationError(f"node {n.id} is isolated")
    bset = {n.id for n in net.nodes if n.boundary}
    if sorted(net.boundary_order) != sorted(bset) or len(net.boundary_order) != len(bset):
        raise NetworkValidationError("boundary_order is not a permutation of the boundary nodes")
    if not bset:
        # the derivative operator is only surjective with at least one boundary node
        raise NetworkValidationError("network needs at least one boundary node")
    # connectivity by BFS
    seen = {ids[0]}
    stack = [ids[0]]
    while stack:
        nid = stack.pop()
        for k in net.adjacency[nid]:
            e = net.edges[k]
            other = e.target if e.source == nid else e.source
            if other not in seen:
                seen.add(other)
                stack.append(other)
    if len(seen) != len(ids):
        raise NetworkValidationError("network is not connected")


def network_from_dict(data: dict) -> Network:
    try:
        nodes = [Node(int(n["id"]), bool(n["boundary"])) for n in data["nodes"]]
        edges = [
            Edge(int(e["id"]), int(e["from"]), int(e["to"]),
                 float(e["length_m"]), float(e["diameter_m"]))
            for e in data["edges"]
        ]
        order = [int(i) for i in data["boundary_order"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise NetworkParseError(f"malformed network description: {exc!r}") from exc
    return make_network(nodes, edges, order)


def load_network(path) -> Network:
    """Read a network JSON file and validate it."""
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise NetworkParseError(f"{path}: {exc}") from exc
    if not isinstance(data, dict):
        raise NetworkParseError(f"{path}: top level must be an object")
    return network_from_dict(data)


def save_network(net: Network, path) -> None:
    Path(path).write_text(json.dumps(net.to_dict(), indent=2) + "\n")


def incidence_weight(net: Network, edge_id: int, node_id: int) -> float:
    """Signed area: ``+A`` if the edge leaves the node, ``-A`` if it enters, else 0."""
    try:
        e = net.edges[net.edge_pos[edge_id]]
    except KeyError:
        raise KeyError(f"unknown edge id {edge_id}") from None
    if node_id not in net.node_pos:
        raise KeyError(f"unknown node id {node_id}")
    if e.source == node_id:
        return e.area
    if e.target == node_id:
        return -e.area
    return 0.0


def kernel_dimension(net: Network) -> int:
    """Dimension of the space of divergence-free edgewise-constant fluxes."""
    return len(net.edges) - len(net.interior_nodes)


def reversed_edge(net: Network, edge_id: int) -> Network:
    """Copy of ``net`` with one edge flipped (used to check orientation covariance)."""
    edges = [
        Edge(e.id, e.target, e.source, e.length, e.diameter) if e.id == edge_id else e
        for e in net.edges
    ]
    return make_network(net.nodes, edges, net.boundary_order)
