"""Benchmark networks and scenarios (diamond and a synthetic 38-pipe grid)."""
from __future__ import annotations

import copy

from . import profiles as pf
from .net import Edge, Network, Node, make_network

# --------------------------------------------------------------------------
# diamond

DIAMOND_EDGES = [  # (id, from, to, length km, diameter m)
    (1, 1, 3, 40.0, 1.3),
    (2, 3, 4, 38.0, 1.0),
    (3, 4, 6, 18.0, 1.0),
    (4, 6, 2, 15.0, 1.0),
    (5, 3, 5, 28.0, 1.3),
    (6, 5, 6, 27.0, 1.3),
    (7, 4, 5, 25.0, 1.0),
]


def diamond_network() -> Network:
    nodes = [Node(i, i in (1, 2)) for i in range(1, 7)]
    edges = [Edge(i, a, b, 1000.0 * l, d) for i, a, b, l, d in DIAMOND_EDGES]
    return make_network(nodes, edges, [1, 2])


def diamond_input():
    """Ramp up to 5 within a quarter hour, down to 2.5 at 3/8 h, then hold (t in hours)."""
    return pf.piecewise(
        [0.25, 0.375],
        [pf.mul(20.0, "t"), pf.mul(5.0, pf.sub(2.0, pf.mul(4.0, "t"))), 2.5],
    )


def diamond_scenario(friction: float = 0.002, T_hours: float = 2.0, dt_seconds: float = 30.0,
                     dx_max_m: float = 2000.0) -> dict:
    return {
        "T_hours": T_hours,
        "dt_seconds": dt_seconds,
        "dx_max_m": dx_max_m,
        "friction": {"model": "turbulent", "lambda": friction},
        "boundary": [
            {"node": 1, "type": "potential", "quantity": "density",
             "time_unit_seconds": 3600.0, "profile": pf.add(60.0, diamond_input())},
            {"node": 2, "type": "massflow", "time_unit_seconds": 3600.0, "profile": 200.0},
        ],
        "initial": "steady",
    }


# --------------------------------------------------------------------------
# synthetic 38-pipe network

# spanning path 1..37 plus chords; edges with ids > 36 close the two cycles
_LARGE_LENGTHS = [
    30, 22, 41, 18, 27, 35, 12, 48, 25, 19, 33, 8, 29, 44, 16, 21, 37, 26, 14, 31,
    23, 39, 11, 28, 46, 17, 24, 9, 34, 20, 13, 38, 5, 32, 15, 74, 22, 17,
]
_LARGE_DIAMETERS = [
    1.0, 1.0, 0.9, 0.9, 0.8, 0.8, 0.6, 1.0, 0.9, 0.7, 0.8, 0.5, 0.9, 1.0, 0.6, 0.7,
    0.9, 0.8, 0.5, 0.8, 0.7, 0.9, 0.4, 0.7, 1.0, 0.6, 0.7, 0.4, 0.8, 0.6, 0.5, 0.9,
    0.4, 0.8, 0.5, 1.0, 0.6, 0.5,
]


def _large_topology():
    """Edge list (from, to) on nodes 1..37.

    Boundary nodes are 1..6, each attached to one interior node of a trunk
    that runs through interior nodes 7..37 with two chords.
    """
    trunk = list(range(7, 38))  # 31 interior nodes
    pairs = [(1, 7)]  # supply
    pairs += [(a, b) for a, b in zip(trunk, trunk[1:])]  # 30 trunk pipes
    pairs += [(2, 12), (16, 4), (3, 20), (27, 5), (37, 6)]
    pairs += [(10, 22), (18, 31)]  # chords create two cycles
    return pairs


def large38_network() -> Network:
    pairs = _large_topology()
    nodes = [Node(i, i <= 6) for i in range(1, 38)]
    edges = [Edge(k + 1, a, b, 1000.0 * l, d)
             for k, ((a, b), l, d) in enumerate(zip(pairs, _LARGE_LENGTHS, _LARGE_DIAMETERS))]
    return make_network(nodes, edges, [1, 2, 3, 4, 5, 6])


def input_uA():
    """6 exp(-1.5 t) + 4 cos(pi t / 2) + 1.5 sin(10 pi t), t in hours."""
    import math

    return pf.add(
        pf.mul(6.0, pf.unary("exp", pf.mul(-1.5, "t"))),
        pf.mul(4.0, pf.unary("cos", pf.mul(math.pi / 2.0, "t"))),
        pf.mul(1.5, pf.unary("sin", pf.mul(10.0 * math.pi, "t"))),
    )


def _tri(arg):
    # 1 - |(arg mod 2) - 1|
    return pf.sub(1.0, pf.unary("abs", pf.sub(pf.mod(arg, 2.0), 1.0)))


def input_uB():
    """8 t^3 exp(-t) - 4 (t - 2) f(3t) with the unit triangle wave f, t in hours."""
    cube = pf.mul("t", "t", "t")
    return pf.sub(
        pf.mul(8.0, cube, pf.unary("exp", pf.unary("neg", "t"))),
        pf.mul(4.0, pf.sub("t", 2.0), _tri(pf.mul(3.0, "t"))),
    )


def large38_scenario(which: str = "A", T_hours: float = 5.0, dt_seconds: float = 60.0,
                     dx_max_m: float = 4000.0, friction: float = 0.008) -> dict:
    u = {"A": input_uA, "B": input_uB}[which.upper()]()
    hour = 3600.0

    def pot(node, expr):
        return {"node": node, "type": "potential", "quantity": "density",
                "time_unit_seconds": hour, "profile": expr}

    return {
        "T_hours": T_hours,
        "dt_seconds": dt_seconds,
        "dx_max_m": dx_max_m,
        "friction": {"model": "turbulent", "lambda": friction},
        "boundary": [
            pot(1, pf.add(65.0, copy.deepcopy(u))),
            pot(2, pf.add(50.0, copy.deepcopy(u))),
            {"node": 3, "type": "massflow", "time_unit_seconds": hour, "profile": -100.0},
            pot(4, pf.sub(60.0, copy.deepcopy(u))),
            pot(5, 60.0),
            pot(6, 45.0),
        ],
        "initial": "steady",
    }


BENCHMARKS = {
    "diamond": (diamond_network, diamond_scenario),
    "large38": (large38_network, large38_scenario),
}
