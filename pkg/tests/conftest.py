"""Shared fixtures: the diamond benchmark at desk scale, simulated once per session."""
import numpy as np
import pytest

from netmor import mor, sim
from netmor.fem import build_model
from netmor.scenarios import diamond_network, diamond_scenario


class Bench:
    """Network, FEM model, FOM trajectory and snapshots of one benchmark run."""

    def __init__(self, scen_dict, n_snapshots=100):
        self.net = diamond_network()
        self.scen = sim.scenario_from_dict(scen_dict, self.net)
        self.cfg = self.scen.physics
        self.fm = build_model(self.net, self.scen.dx_max)
        self.fom = sim.fom_system(self.fm, self.cfg)
        self.x0 = sim.solve_steady(self.fom, self.scen)
        self.traj = sim.simulate(self.fom, self.scen, self.x0)
        self.A = sim.lifted_states(self.traj, self.fom)
        self.snaps = mor.snapshots_from_trajectory(self.traj, n_snapshots)
        self._bases = {}

    def basis(self, n1):
        if n1 not in self._bases:
            self._bases[n1] = mor.compatible_pod(self.fm, self.snaps, n1)
        return self._bases[n1]

    def run(self, system, scen=None):
        scen = self.scen if scen is None else scen
        return sim.simulate(system, scen, sim.initial_state(system, scen, self.x0))

    def error(self, traj, system):
        return sim.error_metric_ET(self.A, sim.lifted_states(traj, system), self.fm)


@pytest.fixture(scope="session")
def diamond():
    """Desk-scale diamond: dx 2 km, dt 30 s, 2 h, 100 snapshots."""
    return Bench(diamond_scenario())


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list = []


@pytest.fixture(scope="session")
def acceptance_log():
    """Collects one summary line per acceptance criterion."""
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
