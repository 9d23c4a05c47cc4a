import numpy as np
import pytest

from dgtraffic.fundamental import DiagramParams, FundamentalDiagram
from dgtraffic.network import (FluxStrategy, Inflow, Junction, JunctionEnd, LightSchedule, Network,
                               NetworkError, Outflow, Phase, Road, as_matrix, effective_matrix,
                               validate)
from dgtraffic.scenario import load_scenario

GS = FundamentalDiagram.greenshields()


def simple_network(matrix2=((1.0, 1.0),), strategy=FluxStrategy.WEIGHTED, q=None):
    roads = (
        Road(1, 0, 1, 10, GS, JunctionEnd(2), JunctionEnd(1)),
        Road(2, 0, 1, 10, GS, JunctionEnd(1), JunctionEnd(2)),
        Road(3, 0, 1, 10, GS, JunctionEnd(1), JunctionEnd(2)),
    )
    junctions = (
        Junction(1, (1,), (2, 3), as_matrix([[0.75], [0.25]]), strategy=strategy),
        Junction(2, (2, 3), (1,), as_matrix(matrix2), strategy=strategy, right_of_way=q),
    )
    return Network(roads, junctions)


def messages(report):
    return " | ".join(str(v) for v in report.violations)


def test_closed_network_is_valid():
    assert validate(simple_network()).ok


def test_single_open_road_is_valid():
    net = Network((Road(1, 0, 1, 5, GS, Inflow(1), Outflow()),), ())
    assert validate(net, datum_ids=[1]).ok


def test_column_sum_violation():
    net = simple_network()
    bad = Junction(1, (1,), (2, 3), as_matrix([[0.65], [0.25]]))
    report = validate(Network(net.roads, (bad, net.junctions[1])))
    assert not report.ok
    assert "sum" in messages(report)


def test_matrix_shape_and_entry_checks():
    net = simple_network()
    wrong_shape = Junction(1, (1,), (2, 3), as_matrix([[1.0]]))
    assert not validate(Network(net.roads, (wrong_shape, net.junctions[1]))).ok
    negative = Junction(1, (1,), (2, 3), as_matrix([[1.2], [-0.2]]))
    assert not validate(Network(net.roads, (negative, net.junctions[1]))).ok


def test_dangling_junction_reference():
    roads = (Road(1, 0, 1, 5, GS, Inflow(1), JunctionEnd(7)),)
    report = validate(Network(roads, ()), datum_ids=[1])
    assert not report.ok


def test_unknown_inflow_datum():
    net = Network((Road(1, 0, 1, 5, GS, Inflow(3), Outflow()),), ())
    assert not validate(net, datum_ids=[1]).ok


def test_road_geometry_checks():
    net = Network((Road(1, 1, 0, 5, GS, Inflow(1), Outflow()),), ())
    assert not validate(net, datum_ids=[1]).ok
    net = Network((Road(1, 0, 1, 0, GS, Inflow(1), Outflow()),), ())
    assert not validate(net, datum_ids=[1]).ok


def test_maxflux_two_incoming_needs_right_of_way():
    report = validate(simple_network(strategy=FluxStrategy.MAXFLUX))
    assert not report.ok
    assert "unsupported under maxflux" in messages(report)
    assert validate(simple_network(strategy=FluxStrategy.MAXFLUX, q=0.5)).ok
    assert not validate(simple_network(strategy=FluxStrategy.MAXFLUX, q=1.5)).ok


def test_network_error_carries_report():
    report = validate(simple_network(strategy=FluxStrategy.MAXFLUX))
    err = NetworkError(report)
    assert err.report is report


def test_road_element_params():
    p = (DiagramParams(1, 2),) * 2 + (DiagramParams(1, 1),)
    r = Road(1, 0, 3, 3, GS, Inflow(1), Outflow(), per_element_params=p)
    assert r.h == 1.0
    assert r.element_diagram(2).rho_max == 1
    assert [e.rho_max for e in r.element_params()] == [2, 2, 1]
    bad = Road(1, 0, 3, 2, GS, Inflow(1), Outflow(), per_element_params=p)
    assert not validate(Network((bad,), ()), datum_ids=[1]).ok


# -- traffic lights ------------------------------------------------------------------

@pytest.fixture(scope="module")
def lights_junction():
    return load_scenario("traffic_lights").network.junction(1)


def test_no_lights_matrix_unchanged():
    j = simple_network().junction(1)
    for t in (0.0, 1.0, 123.4):
        np.testing.assert_array_equal(effective_matrix(j, t), j.array)


def test_all_red_gap_zero(lights_junction):
    assert lights_junction.lights.in_all_red(1.02)
    np.testing.assert_array_equal(effective_matrix(lights_junction, 1.02), 0.0)


def test_phase_one_mask(lights_junction):
    A = lights_junction.array
    expected = A.copy()
    # phase 1: 1 -> {2, 3}, 2 -> {1, 4}; columns of roads 3, 4 closed
    expected[:, 2:] = 0.0
    expected[3, 0] = 0.0  # 1 -> 4
    expected[2, 1] = 0.0  # 2 -> 3
    np.testing.assert_array_equal(effective_matrix(lights_junction, 0.5), expected)


def test_schedule_period_and_cycle(lights_junction):
    sched = lights_junction.lights
    assert sched.period == pytest.approx(1 + 0.5 + 0.5 + 3 * 0.05)
    a = effective_matrix(lights_junction, 0.3)
    b = effective_matrix(lights_junction, 0.3 + sched.period)
    np.testing.assert_array_equal(a, b)
    # the gap after each phase is all red
    for t in (1.0, 1.57, 2.12):
        assert sched.in_all_red(t)
    assert not sched.in_all_red(1.06)


def test_masked_matrix_is_substochastic(lights_junction):
    for t in np.linspace(0, 4.3, 200):
        col = effective_matrix(lights_junction, t).sum(axis=0)
        assert np.all(col <= 1 + 1e-12)


def test_light_validation():
    j = simple_network().junction(1)
    bad = LightSchedule((Phase(((1,), (1,)), 0.0),), 0.05)
    from dataclasses import replace
    net = simple_network()
    net = Network(net.roads, (replace(j, lights=bad), net.junctions[1]))
    assert not validate(net).ok
    bad_shape = LightSchedule((Phase(((1, 1),), 1.0),), 0.05)
    net = Network(net.roads, (replace(j, lights=bad_shape), net.junctions[1]))
    assert not validate(net).ok
