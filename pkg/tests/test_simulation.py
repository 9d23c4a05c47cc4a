import math

import numpy as np
import pytest

from dgtraffic import dg
from dgtraffic.fundamental import FundamentalDiagram
from dgtraffic.network import (FluxStrategy, Inflow, Junction, JunctionEnd, LightSchedule, Network, NetworkError,
                               Outflow, Phase, Road)
from dgtraffic.scenario import load_scenario
from dgtraffic.simulation import (BoundaryDatum, NumericsConfig, SimulationAbort, Simulator,
                                  cfl_advisory, run, step)

GS = FundamentalDiagram.greenshields()


def open_road(n=20, diagram=GS):
    return Network((Road(1, 0.0, 1.0, n, diagram, Inflow(1), Outflow()),), ())


def sealed_loop(n):
    """One road whose ends meet at a permanently red 1x1 junction: no boundary flux."""
    lights = LightSchedule((Phase(((0,),), 1.0),), 0.0)
    road = Road(1, 0.0, 1.0, n, GS, JunctionEnd(1), JunctionEnd(1))
    return Network((road,), (Junction(1, (1,), (1,), ((1.0,),), lights),))


def test_boundary_datum_sinusoid():
    b = BoundaryDatum(1, 0.18, 0.05, 7.0, -math.pi / 2)
    assert b(0.0) == pytest.approx(0.13)
    assert b(3.5) == pytest.approx(0.23)
    assert b.range == pytest.approx((0.13, 0.23))
    assert BoundaryDatum.constant(2, 0.4)(12.0) == 0.4


def test_numerics_validation():
    with pytest.raises(ValueError):
        NumericsConfig(tau=0.0, t_end=1.0)
    with pytest.raises(ValueError):
        NumericsConfig(tau=1e-3, t_end=-1.0)
    assert NumericsConfig(tau=1e-4, t_end=3.0).n_steps == 30000


def test_invalid_network_rejected():
    with pytest.raises(NetworkError):
        Simulator(open_road(), NumericsConfig(1e-3, 1.0), [])  # inflow datum 1 missing


def test_closed_network_one_step_conserves():
    s = load_scenario("simple_network")
    sim = Simulator(s.network, s.numerics, s.boundary)
    st0 = sim.initial_state(s.initial)
    st1 = sim.step(st0)
    assert sim.total_mass(st1.coefficients) - sim.total_mass(st0.coefficients) == pytest.approx(0, abs=1e-12)


def test_constant_state_with_matched_inflow_is_steady():
    cfg = NumericsConfig(tau=1e-3, t_end=0.1)
    sim = Simulator(open_road(), cfg, [BoundaryDatum.constant(1, 0.4)])
    st = sim.initial_state({1: 0.4})
    for _ in range(50):
        st = sim.step(st)
    np.testing.assert_allclose(st.coefficients[:, 0], 0.4, atol=1e-14)
    np.testing.assert_allclose(st.coefficients[:, 1], 0.0, atol=1e-14)


def test_two_element_p0_step():
    cfg = NumericsConfig(tau=1e-3, t_end=1.0, degree=0)
    sim = Simulator(sealed_loop(2), cfg)
    st = sim.initial_state({1: dg.DGField(0, np.array([[0.5], [0.2]]))})
    new = sim.step(st)
    h = 0.5
    np.testing.assert_allclose(new.coefficients[:, 0], [0.5 - 1e-3 * 0.295 / h, 0.2 + 1e-3 * 0.295 / h],
                               atol=1e-15)


def test_empty_network_stays_empty():
    cfg = NumericsConfig(tau=1e-3, t_end=0.2)
    b = Simulator(open_road(), cfg, [BoundaryDatum.constant(1, 0.0)]).run({1: 0.0}, [0.2])
    assert np.all(b.snapshots[-1].fields[1].coefficients == 0.0)
    assert np.all(b.total_mass == 0.0)


def test_mass_ledger_balances_open_road():
    cfg = NumericsConfig(tau=2e-3, t_end=0.5)
    sim = Simulator(open_road(), cfg, [BoundaryDatum(1, 0.3, 0.1, 0.4)])
    b = sim.run({1: lambda x: 0.2 + 0.3 * x})
    assert np.abs(b.conservation_residual).max() < 1e-13
    assert b.inflow[-1] > 0 and b.outflow[-1] > 0


def test_cfl_advisory():
    net = open_road(100)
    cfg = NumericsConfig(tau=1e-4, t_end=1.0)
    assert cfl_advisory(net, cfg) == pytest.approx(1 / 300)
    fast = open_road(100, FundamentalDiagram.greenshields(2.0, 1.0))
    assert cfl_advisory(fast, cfg) == pytest.approx(1 / 600)


def test_cfl_warning():
    with pytest.warns(RuntimeWarning):
        cfl_advisory(open_road(100), NumericsConfig(tau=1e-2, t_end=1.0))


def test_paper_steps_below_advisory():
    s = load_scenario("bottleneck")
    assert s.numerics.tau < cfl_advisory(s.network, s.numerics, warn=False)


def test_snapshot_times_and_determinism():
    s = load_scenario("simple_network").with_options(t_end=0.05, snapshots=[0.0, 0.02015, 0.05])
    a, b = run(s), run(s)
    assert [round(x.time, 12) for x in a.snapshots] == [0.0, 0.0202, 0.05]
    for sa, sb in zip(a.snapshots, b.snapshots):
        for rid in sa.fields:
            np.testing.assert_array_equal(sa.fields[rid].coefficients, sb.fields[rid].coefficients)
    np.testing.assert_array_equal(a.total_mass, b.total_mass)


def test_junction_record_matches_identity():
    s = load_scenario("simple_network").with_options(t_end=0.02)
    b = run(s)
    rec = b.junctions[1]
    assert rec.incoming.shape == (200, 1)
    np.testing.assert_allclose(rec.incoming.sum(axis=1), rec.outgoing.sum(axis=1), atol=1e-15)


def test_clamp_abort_returns_partial_bundle():
    # far beyond the stable step: element means overshoot
    cfg = NumericsConfig(tau=0.2, t_end=5.0)
    sim = Simulator(open_road(50), cfg, [BoundaryDatum.constant(1, 0.9)])
    with pytest.warns(RuntimeWarning):
        with pytest.raises(SimulationAbort) as info:
            sim.run({1: 0.05})
    err = info.value
    assert err.events and err.bundle is not None
    assert err.bundle.steps_done < cfg.n_steps


def test_module_level_step():
    cfg = NumericsConfig(tau=1e-3, t_end=1.0)
    net = open_road()
    sim = Simulator(net, cfg, [BoundaryDatum.constant(1, 0.1)])
    st = sim.initial_state({1: 0.3})
    a = step(st, net, cfg, [BoundaryDatum.constant(1, 0.1)])
    np.testing.assert_array_equal(a.coefficients, sim.step(st).coefficients)


def test_traffic_light_gap_freezes_junction():
    s = load_scenario("traffic_lights").with_options(t_end=1.1)
    b = run(s)
    t = np.arange(b.steps_done) * s.numerics.tau
    j = s.network.junction(1)
    red = np.array([j.lights.in_all_red(x) for x in t])
    assert red.any()
    assert np.all(b.junctions[1].pairs[red] == 0.0)


def test_maxflux_blocked_until_rarefaction_arrives():
    # road 3 starts jammed at its entrance; the rarefaction head reaches x = 0 at
    # t = 0.5 exactly, the scheme lets it through a little earlier on coarse meshes
    first = []
    for n in (100, 200):
        s = load_scenario("comparison").with_options(flux=FluxStrategy.MAXFLUX, t_end=0.5,
                                                     elements_per_unit=n, snapshots=())
        b = run(s)
        flux = b.junctions[1].incoming[:, 0]
        assert np.all(flux[: int(0.4 / s.numerics.tau)] == 0.0)
        first.append(np.flatnonzero(flux)[0] * s.numerics.tau)
    assert first[0] < first[1] < 0.5
    assert 0.5 - first[1] < 0.6 * (0.5 - first[0])
