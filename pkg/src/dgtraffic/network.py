"""Road network topology, distribution matrices and traffic-light schedules."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .fundamental import DiagramParams, FundamentalDiagram

COLUMN_SUM_TOL = 1e-12


# -- road ends ---------------------------------------------------------------

@dataclass(frozen=True)
class JunctionEnd:
    junction: int


@dataclass(frozen=True)
class Inflow:
    """Artificial inflow boundary fed by the boundary datum ``datum``."""
    datum: int


@dataclass(frozen=True)
class Outflow:
    pass


LeftEnd = Union[JunctionEnd, Inflow]
RightEnd = Union[JunctionEnd, Outflow]


@dataclass(frozen=True)
class Road:
    id: int
    a: float
    b: float
    n_elements: int
    diagram: FundamentalDiagram
    left: LeftEnd
    right: RightEnd
    per_element_params: Optional[tuple[DiagramParams, ...]] = None

    @property
    def length(self) -> float:
        return self.b - self.a

    @property
    def h(self) -> float:
        return (self.b - self.a) / self.n_elements

    def element_params(self) -> list[DiagramParams]:
        if self.per_element_params is not None:
            return list(self.per_element_params)
        return [self.diagram.params] * self.n_elements

    def element_diagram(self, k: int) -> FundamentalDiagram:
        if self.per_element_params is None:
            return self.diagram
        return self.diagram.with_params(self.per_element_params[k])


# -- junctions ---------------------------------------------------------------

class FluxStrategy(str, enum.Enum):
    WEIGHTED = "weighted"
    MAXFLUX = "maxflux"


@dataclass(frozen=True)
class Phase:
    """One light phase: ``mask[j][i] == 1`` lets incoming i drive to outgoing j."""
    mask: tuple[tuple[int, ...], ...]
    duration: float


@dataclass(frozen=True)
class LightSchedule:
    phases: tuple[Phase, ...]
    all_red: float = 0.0

    @property
    def period(self) -> float:
        return sum(p.duration for p in self.phases) + len(self.phases) * self.all_red

    def mask_at(self, t: float, shape: tuple[int, int]) -> np.ndarray:
        """Permission mask at time t; all zeros during an all-red gap."""
        tm = math.fmod(t, self.period)
        if tm < 0:
            tm += self.period
        start = 0.0
        for phase in self.phases:
            end = start + phase.duration
            if tm < end:
                return np.asarray(phase.mask, dtype=float)
            start = end + self.all_red
            if tm < start:
                break
        return np.zeros(shape)

    def in_all_red(self, t: float) -> bool:
        return not np.any(self.mask_at(t, (1, 1)))


@dataclass(frozen=True)
class Junction:
    id: int
    incoming: tuple[int, ...]
    outgoing: tuple[int, ...]
    # rows indexed by outgoing roads, columns by incoming roads
    matrix: tuple[tuple[float, ...], ...]
    lights: Optional[LightSchedule] = None
    strategy: FluxStrategy = FluxStrategy.WEIGHTED
    right_of_way: Optional[float] = None

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.outgoing), len(self.incoming)

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.matrix, dtype=float).reshape(self.shape)


def as_matrix(rows: Sequence[Sequence[float]]) -> tuple[tuple[float, ...], ...]:
    return tuple(tuple(float(v) for v in row) for row in rows)


def effective_matrix(junction: Junction, t: float) -> np.ndarray:
    """Distribution matrix with red directions zeroed; columns are not renormalized."""
    A = junction.array
    if junction.lights is None:
        return A
    return junction.lights.mask_at(t, A.shape) * A


# -- network -----------------------------------------------------------------

@dataclass(frozen=True)
class Network:
    roads: tuple[Road, ...]
    junctions: tuple[Junction, ...] = ()

    def road(self, road_id: int) -> Road:
        for r in self.roads:
            if r.id == road_id:
                return r
        raise KeyError(f"no road with id {road_id}")

    def junction(self, junction_id: int) -> Junction:
        for j in self.junctions:
            if j.id == junction_id:
                return j
        raise KeyError(f"no junction with id {junction_id}")


@dataclass
class Violation:
    where: str
    message: str

    def __str__(self):
        return f"{self.where}: {self.message}"


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, where: str, message: str):
        self.violations.append(Violation(where, message))

    def __str__(self):
        if self.ok:
            return "ok"
        return "\n".join(str(v) for v in self.violations)


class NetworkError(ValueError):
    def __init__(self, report: ValidationReport):
        super().__init__(str(report))
        self.report = report


def validate(net: Network, datum_ids: Optional[Sequence[int]] = None) -> ValidationReport:
    """Check structural invariants; returns a report rather than raising.

    ``datum_ids``, when given, are the boundary data an Inflow end may refer to.
    """
    report = ValidationReport()
    road_ids = [r.id for r in net.roads]
    junction_ids = [j.id for j in net.junctions]
    for rid in sorted({i for i in road_ids if road_ids.count(i) > 1}):
        report.add(f"road {rid}", "duplicate road id")
    for jid in sorted({i for i in junction_ids if junction_ids.count(i) > 1}):
        report.add(f"junction {jid}", "duplicate junction id")
    if not net.roads:
        report.add("network", "no roads")

    for r in net.roads:
        where = f"road {r.id}"
        if not r.a < r.b:
            report.add(where, f"interval [{r.a}, {r.b}] must have a < b")
        if r.n_elements < 1:
            report.add(where, "needs at least one element")
        if r.per_element_params is not None and len(r.per_element_params) != r.n_elements:
            report.add(where, f"per-element parameters have length {len(r.per_element_params)}, "
                              f"expected {r.n_elements}")
        if isinstance(r.left, JunctionEnd):
            if r.left.junction not in junction_ids:
                report.add(where, f"left end refers to unknown junction {r.left.junction}")
            elif r.id not in net.junction(r.left.junction).outgoing:
                report.add(where, f"left end attached to junction {r.left.junction} "
                                  "but road is not one of its outgoing roads")
        elif isinstance(r.left, Inflow):
            if datum_ids is not None and r.left.datum not in datum_ids:
                report.add(where, f"inflow refers to unknown boundary datum {r.left.datum}")
        else:
            report.add(where, "left end must be a junction or an inflow boundary")
        if isinstance(r.right, JunctionEnd):
            if r.right.junction not in junction_ids:
                report.add(where, f"right end refers to unknown junction {r.right.junction}")
            elif r.id not in net.junction(r.right.junction).incoming:
                report.add(where, f"right end attached to junction {r.right.junction} "
                                  "but road is not one of its incoming roads")
        elif not isinstance(r.right, Outflow):
            report.add(where, "right end must be a junction or an outflow boundary")

    incoming_of: dict[int, list[int]] = {}
    outgoing_of: dict[int, list[int]] = {}
    for j in net.junctions:
        where = f"junction {j.id}"
        if not j.incoming:
            report.add(where, "has no incoming roads")
        if not j.outgoing:
            report.add(where, "has no outgoing roads")
        for rid in j.incoming:
            incoming_of.setdefault(rid, []).append(j.id)
            if rid not in road_ids:
                report.add(where, f"incoming road {rid} does not exist")
            elif net.road(rid).right != JunctionEnd(j.id):
                report.add(where, f"incoming road {rid} does not end at this junction")
        for rid in j.outgoing:
            outgoing_of.setdefault(rid, []).append(j.id)
            if rid not in road_ids:
                report.add(where, f"outgoing road {rid} does not exist")
            elif net.road(rid).left != JunctionEnd(j.id):
                report.add(where, f"outgoing road {rid} does not start at this junction")
        _validate_matrix(j, report)
        _validate_lights(j, report)
        _validate_strategy(j, report)

    for rid, js in incoming_of.items():
        if len(js) > 1:
            report.add(f"road {rid}", f"incoming for more than one junction: {js}")
    for rid, js in outgoing_of.items():
        if len(js) > 1:
            report.add(f"road {rid}", f"outgoing for more than one junction: {js}")
    return report


def _validate_matrix(j: Junction, report: ValidationReport):
    where = f"junction {j.id}"
    m, n = j.shape
    rows = j.matrix
    if len(rows) != m or any(len(row) != n for row in rows):
        report.add(where, f"distribution matrix must be {m}x{n} (outgoing x incoming)")
        return
    A = j.array
    if np.any(~np.isfinite(A)) or np.any(A < 0) or np.any(A > 1):
        report.add(where, "distribution matrix entries must lie in [0, 1]")
    sums = A.sum(axis=0)
    for col, s in enumerate(sums):
        if abs(s - 1.0) > COLUMN_SUM_TOL:
            report.add(where, f"column for incoming road {j.incoming[col]} sums to {s:.15g}, "
                              "distribution fractions must sum to 1")


def _validate_lights(j: Junction, report: ValidationReport):
    if j.lights is None:
        return
    where = f"junction {j.id}"
    if j.lights.all_red < 0:
        report.add(where, "all-red gap must be non-negative")
    if not j.lights.phases:
        report.add(where, "light schedule has no phases")
    for k, phase in enumerate(j.lights.phases):
        if not phase.duration > 0:
            report.add(where, f"phase {k + 1} duration must be positive")
        mask = np.asarray(phase.mask, dtype=float)
        if mask.shape != j.shape:
            report.add(where, f"phase {k + 1} mask has shape {mask.shape}, expected {j.shape}")
        elif not np.all((mask == 0) | (mask == 1)):
            report.add(where, f"phase {k + 1} mask entries must be 0 or 1")


def _validate_strategy(j: Junction, report: ValidationReport):
    if j.strategy != FluxStrategy.MAXFLUX:
        return
    where = f"junction {j.id}"
    m, n = j.shape
    if n > 2 or m > 2:
        report.add(where, f"maxflux supports junctions up to 2x2, this one has "
                          f"{n} incoming and {m} outgoing roads")
        return
    if n == 2:
        q = j.right_of_way
        if q is None:
            report.add(where, f"matrix {j.array.tolist()} is unsupported under maxflux: with two "
                              "incoming roads the matrix alone does not determine the fluxes, "
                              "a right-of-way q in (0, 1) is required")
        elif not 0 < q < 1:
            report.add(where, f"right-of-way q={q} must lie in (0, 1)")
    if n == 1 and m == 2 and np.any(j.array == 0):
        report.add(where, "maxflux 1x2 closed form needs strictly positive distribution fractions")
