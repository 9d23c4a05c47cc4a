"""Explicit Euler time stepping of the coupled road network.

All roads are stacked into one flat element array so a step costs a fixed
number of vectorised operations plus a small loop over junctions and
boundary data. Each step:

1. evaluate element traces,
2. Lax-Friedrichs fluxes at road-interior interfaces,
3. junction fluxes (weighted or maxflux) with the light-masked matrix at t,
   inflow flux H(rho_D(t), trace), outflow flux Q(trace),
4. modal residual and Euler update,
5. minmod limiter, then clamping to [0, rho_max],
6. boundary in/outflow booked into the mass ledger.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from . import dg
from .dg import ClampEvent, DGField, ElementParams, Mesh, basis, lf_flux_array
from .fundamental import flow, max_wave_speed
from .junction import JunctionState, maxflux_fluxes, weighted_fluxes
from .network import (FluxStrategy, Inflow, Network, NetworkError, Outflow,
                      effective_matrix, validate)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class BoundaryDatum:
    """Inflow density: offset + amplitude * sin(2 pi t / period + phase).

    A constant datum has amplitude 0.
    """
    id: int
    offset: float
    amplitude: float = 0.0
    period: float = 1.0
    phase: float = 0.0

    @classmethod
    def constant(cls, id: int, value: float) -> "BoundaryDatum":
        return cls(id, value)

    @property
    def is_constant(self) -> bool:
        return self.amplitude == 0.0

    def __call__(self, t: float) -> float:
        if self.amplitude == 0.0:
            return self.offset
        return self.offset + self.amplitude * math.sin(2.0 * math.pi * t / self.period + self.phase)

    @property
    def range(self) -> tuple[float, float]:
        return self.offset - abs(self.amplitude), self.offset + abs(self.amplitude)


@dataclass(frozen=True)
class NumericsConfig:
    tau: float
    t_end: float
    degree: int = 1
    tvb_m: float = 0.0
    # overrides every junction's own strategy when set
    flux: Optional[FluxStrategy] = None
    max_clamp_events: int = 0

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError(f"time step must be positive, got {self.tau}")
        if not self.t_end > 0:
            raise ValueError(f"end time must be positive, got {self.t_end}")
        if self.degree < 0:
            raise ValueError("polynomial degree must be non-negative")

    @property
    def n_steps(self) -> int:
        return max(1, int(math.ceil(self.t_end / self.tau - 1e-9)))


class SimulationAbort(RuntimeError):
    """Raised when element means leave the admissible interval too often."""

    def __init__(self, message: str, events: list[ClampEvent], bundle=None):
        super().__init__(message)
        self.events = events
        self.bundle = bundle


def cfl_advisory(net: Network, cfg: NumericsConfig, warn: bool = True) -> float:
    """Heuristic stable step h_min / ((2p + 1) max |Q'|)."""
    h_min = min(r.h for r in net.roads)
    speed = 0.0
    for r in net.roads:
        for k in range(r.n_elements if r.per_element_params is not None else 1):
            speed = max(speed, max_wave_speed(r.element_diagram(k)))
    tau_max = h_min / ((2 * cfg.degree + 1) * speed)
    if warn and cfg.tau > tau_max:
        warnings.warn(f"time step {cfg.tau:g} exceeds the advisory CFL bound {tau_max:.3g}",
                      RuntimeWarning, stacklevel=2)
    return tau_max


@dataclass
class SimState:
    t: float
    step: int
    coefficients: np.ndarray         # all roads stacked, (n_elements_total, p + 1)
    inflow: float = 0.0              # cumulative boundary inflow
    outflow: float = 0.0             # cumulative boundary outflow
    events: list[ClampEvent] = field(default_factory=list)


@dataclass
class _JunctionPlan:
    id: int
    strategy: FluxStrategy
    q: Optional[float]
    in_idx: np.ndarray   # element index of each incoming road's last element
    out_idx: np.ndarray  # element index of each outgoing road's first element
    in_side: tuple
    out_side: tuple
    junction: object
    static_alpha: Optional[np.ndarray]


@dataclass
class JunctionRecord:
    """Per-step junction history; row k belongs to the step starting at t_k."""
    incoming: np.ndarray  # (steps, n)
    outgoing: np.ndarray  # (steps, m)
    pairs: np.ndarray     # (steps, m, n) alpha_eff * H_{i,j}
    error: np.ndarray     # (steps, m) H_j - sum_i alpha_eff_{j,i} H_i


@dataclass
class Snapshot:
    time: float
    step: int
    requested: float
    fields: dict[int, DGField]


@dataclass
class ResultBundle:
    network: Network
    meshes: dict[int, Mesh]
    times: np.ndarray          # start time of each step, plus the final time
    total_mass: np.ndarray     # mass at each entry of ``times``
    inflow: np.ndarray         # cumulative boundary inflow at each entry of ``times``
    outflow: np.ndarray
    junctions: dict[int, JunctionRecord]
    snapshots: list[Snapshot]
    events: list[ClampEvent]
    cfg: NumericsConfig
    tau_advisory: float
    steps_done: int

    @property
    def conservation_residual(self) -> np.ndarray:
        """Mass change minus net boundary inflow, per recorded time."""
        return (self.total_mass - self.total_mass[0]) - (self.inflow - self.outflow)

    def final_fields(self) -> dict[int, DGField]:
        return self.snapshots[-1].fields if self.snapshots else {}


class Simulator:
    """Owns the stacked discretisation of one network."""

    def __init__(self, net: Network, cfg: NumericsConfig,
                 boundary: Mapping[int, BoundaryDatum] | Sequence[BoundaryDatum] = ()):
        if not isinstance(boundary, Mapping):
            boundary = {b.id: b for b in boundary}
        self.boundary = dict(boundary)
        report = validate(_with_strategy(net, cfg.flux), datum_ids=list(self.boundary))
        if not report.ok:
            raise NetworkError(report)
        self.net = _with_strategy(net, cfg.flux)
        self.cfg = cfg
        self.basis = basis(cfg.degree)
        self.meshes = {r.id: Mesh.for_road(r) for r in self.net.roads}

        offsets, parts, h = {}, [], []
        start = 0
        for r in self.net.roads:
            offsets[r.id] = (start, start + r.n_elements)
            parts.append(ElementParams.from_list(r.diagram, r.element_params()))
            h.append(self.meshes[r.id].widths)
            start += r.n_elements
        self.offsets = offsets
        self.n = start
        self.params = ElementParams.concat(parts)
        self.h = np.concatenate(h)

        first = np.array([offsets[r.id][0] for r in self.net.roads])
        last = np.array([offsets[r.id][1] - 1 for r in self.net.roads])
        is_last = np.zeros(self.n, dtype=bool)
        is_last[last] = True
        self.iface_left = np.flatnonzero(~is_last)
        self.iface_right = self.iface_left + 1
        self.side_l = self.params.side(self.iface_left)
        self.side_r = self.params.side(self.iface_right)
        self.first, self.last = first, last

        self.inflow_idx = np.array([offsets[r.id][0] for r in self.net.roads if isinstance(r.left, Inflow)], dtype=int)
        self.inflow_datum = [r.left.datum for r in self.net.roads if isinstance(r.left, Inflow)]
        self.inflow_side = self.params.side(self.inflow_idx)
        self.outflow_idx = np.array([offsets[r.id][1] - 1 for r in self.net.roads if isinstance(r.right, Outflow)], dtype=int)
        self.outflow_side = self.params.side(self.outflow_idx)
        self.plans = []
        for j in self.net.junctions:
            in_idx = np.array([offsets[i][1] - 1 for i in j.incoming])
            out_idx = np.array([offsets[o][0] for o in j.outgoing])
            self.plans.append(_JunctionPlan(
                j.id, j.strategy, j.right_of_way, in_idx, out_idx,
                tuple(np.asarray(a) for a in _full_side(self.params, in_idx)),
                tuple(np.asarray(a) for a in _full_side(self.params, out_idx)),
                j, j.array if j.lights is None else None))

    # -- state helpers ---------------------------------------------------------

    def initial_state(self, initial: Mapping[int, Callable[[np.ndarray], np.ndarray] | DGField]) -> SimState:
        coef = np.zeros((self.n, self.cfg.degree + 1))
        for r in self.net.roads:
            s, e = self.offsets[r.id]
            ic = initial.get(r.id, 0.0) if isinstance(initial, Mapping) else initial
            if isinstance(ic, DGField):
                coef[s:e] = ic.coefficients
            else:
                fn = ic if callable(ic) else (lambda x, v=float(ic): np.full_like(x, v))
                coef[s:e] = dg.project_initial(self.meshes[r.id], self.cfg.degree, fn).coefficients
        # projection round-off can push traces just outside [0, rho_max]
        coef, _ = dg.clamp_coefficients(coef, self.basis, self.params.rho_max, self.h)
        return SimState(0.0, 0, coef)

    def fields(self, state: SimState) -> dict[int, DGField]:
        return {rid: DGField(self.cfg.degree, state.coefficients[s:e].copy())
                for rid, (s, e) in self.offsets.items()}

    def total_mass(self, coef: np.ndarray) -> float:
        return float(np.dot(coef[:, 0], self.h))

    def road_masses(self, coef: np.ndarray) -> dict[int, float]:
        return {rid: float(np.dot(coef[s:e, 0], self.h[s:e])) for rid, (s, e) in self.offsets.items()}

    def locate(self, idx: int) -> tuple[int, int]:
        for rid, (s, e) in self.offsets.items():
            if s <= idx < e:
                return rid, idx - s
        raise IndexError(idx)

    def time_of(self, k: int) -> float:
        return k * self.cfg.tau

    # -- one step -----------------------------------------------------------------

    def junction_fluxes(self, coef: np.ndarray, t: float):
        """Traces -> per-junction fluxes at time t."""
        b = self.basis
        uL = coef @ b.left
        uR = coef @ b.right
        out = []
        for plan in self.plans:
            alpha = plan.static_alpha if plan.static_alpha is not None else effective_matrix(plan.junction, t)
            state = JunctionState(uR[plan.in_idx], uL[plan.out_idx], plan.in_side, plan.out_side)
            if plan.strategy == FluxStrategy.MAXFLUX:
                fl = maxflux_fluxes(state, alpha, plan.q)
            else:
                fl = weighted_fluxes(state, alpha)
            out.append((plan, alpha, fl))
        return uL, uR, out

    def step(self, state: SimState, record: Optional[Callable] = None) -> SimState:
        cfg, b = self.cfg, self.basis
        coef = state.coefficients
        t = self.time_of(state.step)

        uL, uR, jfluxes = self.junction_fluxes(coef, t)
        f_int = lf_flux_array(uR[self.iface_left], uL[self.iface_right], self.side_l, self.side_r)
        f_left = np.empty(self.n)
        f_right = np.empty(self.n)
        f_right[self.iface_left] = f_int
        f_left[self.iface_right] = f_int

        inflow_total = 0.0
        if len(self.inflow_idx):
            rho_d = np.array([self.boundary[d](t) for d in self.inflow_datum])
            f_in = lf_flux_array(rho_d, uL[self.inflow_idx], self.inflow_side, self.inflow_side)
            f_left[self.inflow_idx] = f_in
            inflow_total = float(np.sum(f_in))
        outflow_total = 0.0
        if len(self.outflow_idx):
            kind, vmax, rmax = self.outflow_side
            f_out = flow(kind, uR[self.outflow_idx], vmax, rmax)
            f_right[self.outflow_idx] = f_out
            outflow_total = float(np.sum(f_out))
        for plan, alpha, fl in jfluxes:
            f_right[plan.in_idx] = fl.incoming
            f_left[plan.out_idx] = fl.outgoing
            if record is not None:
                record(plan, alpha, fl)

        vol = dg.volume_term(coef, b, self.params)
        new = coef + cfg.tau * dg.assemble_rhs(coef, self.h, b, vol, f_left, f_right)

        t_new = self.time_of(state.step + 1)
        new = self.limit(new, t_new)
        new, events = dg.clamp_coefficients(new, b, self.params.rho_max, self.h)
        for e in events:
            e.road, e.element = self.locate(e.element)
            e.time = t_new
        return SimState(t_new, state.step + 1, new,
                        state.inflow + cfg.tau * inflow_total,
                        state.outflow + cfg.tau * outflow_total,
                        state.events + events if events else state.events)

    def limit(self, coef: np.ndarray, t: float) -> np.ndarray:
        if coef.shape[1] == 1:
            return coef
        means = coef[:, 0]
        d = means[self.iface_right] - means[self.iface_left]
        d_fwd = np.zeros(self.n)
        d_bwd = np.zeros(self.n)
        d_fwd[self.iface_left] = d
        d_bwd[self.iface_right] = d
        if len(self.inflow_idx):
            rho_d = np.array([self.boundary[k](t) for k in self.inflow_datum])
            d_bwd[self.inflow_idx] = means[self.inflow_idx] - rho_d
        return dg.limit_coefficients(coef, self.h, d_fwd, d_bwd, self.cfg.tvb_m)

    # -- driver ---------------------------------------------------------------------

    def run(self, initial, snapshot_times: Sequence[float] = (), progress: bool = False) -> ResultBundle:
        cfg = self.cfg
        tau_adv = cfl_advisory(self.net, cfg)
        n_steps = cfg.n_steps
        state = self.initial_state(initial)

        times = np.arange(n_steps + 1) * cfg.tau
        mass = np.empty(n_steps + 1)
        cum_in = np.empty(n_steps + 1)
        cum_out = np.empty(n_steps + 1)
        mass[0], cum_in[0], cum_out[0] = self.total_mass(state.coefficients), 0.0, 0.0

        records = {}
        for plan in self.plans:
            m, n = len(plan.out_idx), len(plan.in_idx)
            records[plan.id] = JunctionRecord(np.zeros((n_steps, n)), np.zeros((n_steps, m)),
                                              np.zeros((n_steps, m, n)), np.zeros((n_steps, m)))

        # snapshot at the first completed step at or after each requested time
        wanted: dict[int, list[float]] = {}
        for ts in snapshot_times:
            k = min(n_steps, max(0, int(math.ceil(ts / cfg.tau - 1e-9))))
            wanted.setdefault(k, []).append(ts)
        snapshots: list[Snapshot] = []

        def take(k, st):
            for ts in wanted.get(k, []):
                snapshots.append(Snapshot(self.time_of(k), k, ts, self.fields(st)))

        take(0, state)
        current = {"k": 0}

        def record(plan, alpha, fl):
            rec = records[plan.id]
            k = current["k"]
            rec.incoming[k] = fl.incoming
            rec.outgoing[k] = fl.outgoing
            rec.pairs[k] = fl.pairs
            rec.error[k] = fl.outgoing - alpha @ fl.incoming

        n_events = 0
        for k in range(n_steps):
            current["k"] = k
            state = self.step(state, record)
            mass[k + 1] = self.total_mass(state.coefficients)
            cum_in[k + 1] = state.inflow
            cum_out[k + 1] = state.outflow
            if len(state.events) > n_events:
                for e in state.events[n_events:]:
                    log.warning("clamp event at t=%.6g road %s element %s: mean %.6g reset to %g",
                                e.time, e.road, e.element, e.mean, e.bound)
                n_events = len(state.events)
                if n_events > cfg.max_clamp_events:
                    bundle = self._bundle(times[:k + 2], mass[:k + 2], cum_in[:k + 2], cum_out[:k + 2],
                                          records, snapshots, state, tau_adv, k + 1)
                    raise SimulationAbort(
                        f"element mean left the admissible interval at t={state.t:.6g} "
                        f"({n_events} event(s)); reduce the time step or refine the mesh",
                        list(state.events), bundle)
            take(k + 1, state)
            if progress and (k + 1) % max(1, n_steps // 20) == 0:
                log.info("t = %.4g (%d/%d steps)", state.t, k + 1, n_steps)

        return self._bundle(times, mass, cum_in, cum_out, records, snapshots, state, tau_adv, n_steps)

    def _bundle(self, times, mass, cum_in, cum_out, records, snapshots, state, tau_adv, steps_done):
        for rec in records.values():
            rec.incoming = rec.incoming[:steps_done]
            rec.outgoing = rec.outgoing[:steps_done]
            rec.pairs = rec.pairs[:steps_done]
            rec.error = rec.error[:steps_done]
        return ResultBundle(self.net, self.meshes, times, mass, cum_in, cum_out, records,
                            sorted(snapshots, key=lambda s: (s.time, s.requested)),
                            list(state.events), self.cfg, tau_adv, steps_done)


def _full_side(params: ElementParams, idx: np.ndarray):
    return params.kind[idx], params.v_max[idx], params.rho_max[idx]


def _with_strategy(net: Network, strategy: Optional[FluxStrategy]) -> Network:
    if strategy is None:
        return net
    return replace(net, junctions=tuple(replace(j, strategy=strategy) for j in net.junctions))


def step(state: SimState, net: Network, cfg: NumericsConfig,
         boundary: Mapping[int, BoundaryDatum] | Sequence[BoundaryDatum] = ()) -> SimState:
    """Advance ``state`` by one Euler step (builds a throwaway Simulator)."""
    return Simulator(net, cfg, boundary).step(state)


def run(scenario, progress: bool = False) -> ResultBundle:
    """Run a parsed scenario to its end time."""
    sim = Simulator(scenario.network, scenario.numerics, scenario.boundary)
    return sim.run(scenario.initial_functions(), scenario.snapshots, progress=progress)
