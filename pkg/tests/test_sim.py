import copy

import numpy as np
import pytest

from netmor import profiles as pf
from netmor import quad, sim
from netmor.fem import CellForm, build_model, fom_evaluator
from netmor.net import Edge, Node, make_network
from netmor.physics import pressure_potential
from netmor.scenarios import diamond_scenario


def single_edge_setup(rho_left=50.0, rho_right=50.0, model="turbulent", T_hours=0.1):
    net = make_network([Node(1, True), Node(2, True)], [Edge(1, 1, 2, 20_000.0, 0.8)], [1, 2])
    fr = {"model": model, "lambda": 0.01} if model == "turbulent" else {"model": model, "coefficient": 2.0}
    data = {"T_hours": T_hours, "dt_seconds": 60.0, "dx_max_m": 2000.0, "friction": fr,
            "boundary": [{"node": 1, "type": "potential", "profile": rho_left},
                         {"node": 2, "type": "potential", "profile": rho_right}]}
    scen = sim.scenario_from_dict(data, net)
    fm = build_model(net, 2000.0)
    return fm, scen, sim.fom_system(fm, scen.physics)


@pytest.mark.parametrize("model", ["turbulent", "laminar"])
def test_zero_flow_equilibrium(model):
    fm, scen, fom = single_edge_setup(model=model)
    x = sim.solve_steady(fom, scen)
    assert np.abs(x[fm.N1:fm.N1 + fm.N2]).max() <= 1e-10
    assert np.allclose(x[:fm.N1], 50.0, rtol=1e-10)
    traj = sim.simulate(fom, scen, x)
    assert traj.completed
    assert np.abs(traj.a2).max() <= 1e-10


def test_pressure_drop_drives_flow_downhill():
    fm, scen, fom = single_edge_setup(60.0, 50.0)
    x = sim.solve_steady(fom, scen)
    m = x[fm.N1:fm.N1 + fm.N2]
    assert np.all(m > 0)
    rho = x[:fm.N1]
    assert np.all(np.diff(rho) < 0)


def test_diamond_steady_residual(diamond):
    bnd = sim.BoundaryInputs(diamond.net, diamond.scen)
    _, err = sim._Problem(diamond.fom, bnd, 0.0, None).residual(diamond.x0)
    assert err <= 1e-10
    rho = diamond.x0[:diamond.fm.N1]
    assert 55.0 < rho.min() and rho.max() <= 60.0 + 1e-9


def test_infeasible_boundary_data_fails():
    net = make_network([Node(1, True), Node(2, True)], [Edge(1, 1, 2, 20_000.0, 0.8)], [1, 2])
    data = {"T_hours": 0.1, "dt_seconds": 60.0, "dx_max_m": 2000.0,
            "friction": {"model": "turbulent", "lambda": 0.01},
            "boundary": [{"node": 1, "type": "potential", "profile": -5.0},
                         {"node": 2, "type": "potential", "profile": 50.0}]}
    scen = sim.scenario_from_dict(data, net)
    fom = sim.fom_system(build_model(net, 2000.0), scen.physics)
    with pytest.raises((sim.SteadyStateError, ValueError)):
        sim.solve_steady(fom, scen)


def test_step_from_steady_is_fixed_point(diamond):
    # the diamond input ramps from t = 0, so freeze it at its initial value
    frozen = copy.deepcopy(diamond.scen.raw)
    frozen["boundary"][0]["profile"] = 60.0
    scen = sim.scenario_from_dict(frozen, diamond.net)
    x0 = sim.solve_steady(diamond.fom, scen)
    x1, its = sim.step(diamond.fom, sim.BoundaryInputs(diamond.net, scen), x0, 0.0, 30.0)
    assert np.abs(x1 - x0).max() <= 1e-8 * np.abs(x0).max()


def test_implicit_euler_first_order(diamond):
    data = diamond_scenario(T_hours=0.5, dt_seconds=60.0)
    finals = []
    for dt in (60.0, 30.0, 15.0):
        scen = sim.scenario_from_dict(dict(data, dt_seconds=dt), diamond.net)
        traj = sim.simulate(diamond.fom, scen, diamond.x0)
        finals.append(traj.states[-1, :diamond.fm.N1 + diamond.fm.N2])
    ratio = np.linalg.norm(finals[0] - finals[1]) / np.linalg.norm(finals[1] - finals[2])
    assert 1.6 <= ratio <= 2.4


def test_hamiltonian_constant_state(diamond):
    fm, cfg = diamond.fm, diamond.cfg
    rho0 = 57.0
    a = (np.full(fm.N1, rho0), np.zeros(fm.N2))
    H = sim.hamiltonian(diamond.fom, a)
    assert H == pytest.approx(pressure_potential(cfg, rho0) * np.sum(fm.cell_area * fm.mesh.dx), rel=1e-13)


def test_hamiltonian_form_exactness_and_kinetic_scaling(diamond):
    fm, cfg = diamond.fm, diamond.cfg
    a1, a2 = diamond.A[0][100], diamond.A[1][100]
    rule = quad.exact_rule(fm)
    ev = fom_evaluator(fm, cfg, CellForm(rule.cells, rule.weights))
    assert ev.energy(a1, a2)[0] == diamond.fom.hamiltonian(a1, a2)
    H = lambda s: diamond.fom.hamiltonian(a1, s * a2)
    assert H(2.0) - H(0.0) == pytest.approx(4.0 * (H(1.0) - H(0.0)), rel=1e-8)


def test_fom_conservation_monitors(diamond):
    traj = diamond.traj
    assert traj.completed
    assert np.all(sim.mass_conservation_residual(traj, diamond.fom) <= 1e-8)
    assert np.all(traj.monitors["dissipation"] >= 0)
    assert np.allclose(traj.monitors["mass_residual"][1:],
                       sim.mass_conservation_residual(traj, diamond.fom))


def test_energy_residual_steady_state():
    fm, scen, fom = single_edge_setup(60.0, 50.0)
    x = sim.solve_steady(fom, scen)
    traj = sim.simulate(fom, scen, x)
    r = sim.energy_balance_residual(traj)
    # at rest the discrete balance holds up to the Newton tolerance
    assert np.abs(r).max() <= 1e-6 * abs(traj.monitors["dissipation"][0])


def test_error_metric(diamond):
    A1, A2 = diamond.A
    assert sim.error_metric_ET((A1, A2), (A1, A2), diamond.fm) == 0.0
    assert sim.error_metric_ET((A1, A2), (2 * A1, 2 * A2), diamond.fm) == pytest.approx(1.0, rel=1e-14)
    assert sim.error_metric_ET((A1, A2), (A1[:5], A2[:5]), diamond.fm) == np.inf


def test_breakdown_is_recorded():
    # a sudden collapse of the inflow density cannot be followed with large steps
    net = make_network([Node(1, True), Node(2, True)], [Edge(1, 1, 2, 20_000.0, 0.8)], [1, 2])
    data = {"T_hours": 1.0, "dt_seconds": 600.0, "dx_max_m": 2000.0,
            "friction": {"model": "turbulent", "lambda": 0.01},
            "boundary": [{"node": 1, "type": "potential", "time_unit_seconds": 3600.0,
                          "profile": pf.piecewise([0.05], [50.0, 1e-6])},
                         {"node": 2, "type": "massflow", "profile": 300.0}]}
    scen = sim.scenario_from_dict(data, net)
    fom = sim.fom_system(build_model(net, 2000.0), scen.physics)
    traj = sim.simulate(fom, scen)
    assert not traj.completed
    assert traj.breakdown["time"] > 0 and len(traj.times) < scen.n_steps + 1
    with pytest.raises(sim.SimulationBreakdown) as info:
        sim.simulate(fom, scen, raise_on_breakdown=True)
    assert info.value.partial is not None


def test_positivity_monitor(diamond):
    mon = sim.positivity_monitor(diamond.traj, diamond.fom, diamond.scen)
    assert mon["min_density"] > 0 and not mon["nonpositive"]
    assert np.all(mon["log_envelope_min"] <= mon["log_density_min"] + 1e-12)


def test_scenario_parsing_errors(diamond):
    bad = copy.deepcopy(diamond.scen.raw)
    bad["boundary"] = bad["boundary"][:1]
    with pytest.raises(ValueError):
        sim.scenario_from_dict(bad, diamond.net)
    bad = copy.deepcopy(diamond.scen.raw)
    bad["boundary"][0]["type"] = "pressure"
    with pytest.raises(ValueError):
        sim.scenario_from_dict(bad)


def test_trajectory_csv(diamond, tmp_path):
    diamond.traj.to_csv(tmp_path / "t.csv")
    diamond.traj.monitors_to_csv(tmp_path / "m.csv")
    data = np.loadtxt(tmp_path / "t.csv", delimiter=",", skiprows=1)
    assert data.shape == (len(diamond.traj.times), 1 + diamond.fm.N1 + diamond.fm.N2)
    assert np.allclose(data[:, 1:1 + diamond.fm.N1], diamond.A[0], rtol=1e-11)
