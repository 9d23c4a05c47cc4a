"""Scenario files: a small line-oriented format describing a run.

Layout (``#`` starts a comment)::

    format = 1
    name = simple_network

    [numerics]          tau, t_end, degree, tvb_m, flux, max_clamp_events
    [output]            snapshots = t1, t2, ...   dir = path
    [boundary]          id, offset, amplitude, period, phase
                        rho_D(t) = offset + amplitude * sin(2 pi t / period + phase)
    [road]              id, a, b, elements, diagram, v_max, rho_max,
                        left = inflow <datum> | junction <id>
                        right = outflow | junction <id>
                        ic = <constant> | (x0, v0) (x1, v1) ...
                        element[k] = v_max, rho_max     (k < 0 counts from the end)
    [junction]          id, incoming = i1, i2   outgoing = j1, j2
                        matrix = row; row       (rows are outgoing roads)
                        strategy = weighted | maxflux, right_of_way, all_red
    [phase]             junction, duration, green = i>j, i>j, ...

Piecewise-linear initial conditions may repeat an x to encode a jump; the
value right of a jump is used at the jump itself.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .fundamental import DiagramKind, DiagramParams, FundamentalDiagram
from .network import (FluxStrategy, Inflow, Junction, JunctionEnd, LightSchedule, Network,
                      Outflow, Phase, Road, as_matrix, validate)
from .simulation import BoundaryDatum, NumericsConfig

FORMAT_VERSION = 1
BUILTIN = ("bottleneck", "simple_network", "comparison", "traffic_lights")

_NUMBER = re.compile(r"[-+]?(\d+\.?\d*|\.\d+)([eE][-+]?\d+)?")
_SECTIONS = ("numerics", "output", "boundary", "road", "junction", "phase")
_KEYS = {
    None: {"format", "name"},
    "numerics": {"tau", "t_end", "degree", "tvb_m", "flux", "max_clamp_events"},
    "output": {"snapshots", "dir"},
    "boundary": {"id", "offset", "amplitude", "period", "phase"},
    "road": {"id", "a", "b", "elements", "diagram", "v_max", "rho_max", "left", "right", "ic"},
    "junction": {"id", "incoming", "outgoing", "matrix", "strategy", "right_of_way", "all_red"},
    "phase": {"junction", "duration", "green"},
}
_ELEMENT_KEY = re.compile(r"element\[(-?\d+)\]$")


class ScenarioError(ValueError):
    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


# -- initial conditions ----------------------------------------------------------

@dataclass(frozen=True)
class PiecewiseLinear:
    points: tuple[tuple[float, float], ...]

    def __post_init__(self):
        xs = [p[0] for p in self.points]
        if len(xs) < 1 or any(b < a for a, b in zip(xs, xs[1:])):
            raise ValueError("breakpoints must be given in non-decreasing x order")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        xs = np.array([p[0] for p in self.points])
        vs = np.array([p[1] for p in self.points])
        if len(xs) == 1:
            return np.full_like(x, vs[0])
        xc = np.clip(x, xs[0], xs[-1])
        i = np.clip(np.searchsorted(xs, xc, side="right") - 1, 0, len(xs) - 2)
        x0, x1, v0, v1 = xs[i], xs[i + 1], vs[i], vs[i + 1]
        with np.errstate(divide="ignore", invalid="ignore"):
            w = np.where(x1 > x0, (xc - x0) / (x1 - x0), 1.0)
        return v0 + w * (v1 - v0)

    @property
    def extremes(self) -> tuple[float, float]:
        vs = [p[1] for p in self.points]
        return min(vs), max(vs)


@dataclass(frozen=True)
class Constant:
    value: float

    def __call__(self, x):
        return np.full_like(np.asarray(x, dtype=float), self.value)

    @property
    def extremes(self) -> tuple[float, float]:
        return self.value, self.value


InitialCondition = Union[Constant, PiecewiseLinear]


# -- scenario -----------------------------------------------------------------------

@dataclass
class Scenario:
    name: str
    network: Network
    boundary: dict[int, BoundaryDatum]
    initial: dict[int, InitialCondition]
    numerics: NumericsConfig
    snapshots: tuple[float, ...] = ()
    output_dir: Optional[str] = None
    # raw element[k] overrides per road, kept so the mesh can be rebuilt
    overrides: dict[int, tuple[tuple[int, DiagramParams], ...]] = field(default_factory=dict)

    def initial_functions(self):
        return dict(self.initial)

    def with_options(self, *, tau: Optional[float] = None, t_end: Optional[float] = None,
                     elements_per_unit: Optional[float] = None, flux: Optional[FluxStrategy] = None,
                     right_of_way: Optional[float] = None, tvb_m: Optional[float] = None,
                     snapshots: Optional[Sequence[float]] = None,
                     output_dir: Optional[str] = None) -> "Scenario":
        """Copy with command-line style overrides applied and re-validated."""
        num = self.numerics
        num = replace(num,
                      tau=num.tau if tau is None else tau,
                      t_end=num.t_end if t_end is None else t_end,
                      tvb_m=num.tvb_m if tvb_m is None else tvb_m,
                      flux=num.flux if flux is None else flux)
        roads = list(self.network.roads)
        if elements_per_unit is not None:
            roads = [_build_road_elements(replace(r, n_elements=max(1, int(round(r.length * elements_per_unit)))),
                                          self.overrides.get(r.id, ()))
                     for r in roads]
        junctions = list(self.network.junctions)
        if right_of_way is not None:
            junctions = [replace(j, right_of_way=right_of_way) if len(j.incoming) == 2 else j
                         for j in junctions]
        out = replace(self, network=Network(tuple(roads), tuple(junctions)), numerics=num,
                      snapshots=self.snapshots if snapshots is None else tuple(snapshots),
                      output_dir=self.output_dir if output_dir is None else output_dir)
        check_scenario(out)
        return out


def _build_road_elements(road: Road, overrides) -> Road:
    if not overrides:
        return replace(road, per_element_params=None)
    params = [road.diagram.params] * road.n_elements
    for k, p in overrides:
        if not -road.n_elements <= k < road.n_elements:
            raise ScenarioError(f"road {road.id}: element index {k} out of range "
                                f"for {road.n_elements} elements")
        params[k] = p
    return replace(road, per_element_params=tuple(params))


def check_scenario(s: Scenario):
    """Semantic checks; raises ScenarioError naming the violated invariant."""
    report = validate(_effective_network(s), datum_ids=list(s.boundary))
    if not report.ok:
        raise ScenarioError("invalid network:\n" + str(report))
    for r in s.network.roads:
        rho_caps = [p.rho_max for p in r.element_params()]
        ic = s.initial.get(r.id)
        if ic is None:
            raise ScenarioError(f"road {r.id}: missing initial condition")
        lo, hi = ic.extremes
        if lo < 0 or hi > min(rho_caps):
            raise ScenarioError(f"road {r.id}: initial density range [{lo}, {hi}] "
                                f"outside admissible [0, {min(rho_caps)}]")
        if isinstance(r.left, Inflow):
            lo, hi = s.boundary[r.left.datum].range
            if lo < 0 or hi > rho_caps[0]:
                raise ScenarioError(f"road {r.id}: inflow datum range [{lo}, {hi}] "
                                    f"outside admissible [0, {rho_caps[0]}]")
    for rid in s.initial:
        if rid not in [r.id for r in s.network.roads]:
            raise ScenarioError(f"initial condition for unknown road {rid}")
    for t in s.snapshots:
        if t < 0:
            raise ScenarioError(f"snapshot time {t} is negative")


def _effective_network(s: Scenario) -> Network:
    if s.numerics.flux is None:
        return s.network
    return replace(s.network, junctions=tuple(replace(j, strategy=s.numerics.flux)
                                              for j in s.network.junctions))


# -- parsing --------------------------------------------------------------------------

@dataclass
class _Block:
    kind: Optional[str]
    line: int
    values: dict[str, tuple[str, int]] = field(default_factory=dict)

    def get(self, key, default=None):
        return self.values[key][0] if key in self.values else default

    def line_of(self, key):
        return self.values[key][1] if key in self.values else self.line

    def require(self, key) -> str:
        if key not in self.values:
            raise ScenarioError(f"[{self.kind}] section is missing '{key}'", self.line)
        return self.values[key][0]

    def num(self, key, default=None) -> float:
        if key not in self.values:
            if default is None:
                self.require(key)
            return default
        return _number(self.values[key][0], self.values[key][1])

    def int(self, key, default=None) -> int:
        v = self.num(key, default)
        if v != int(v):
            raise ScenarioError(f"'{key}' must be an integer", self.line_of(key))
        return int(v)


def _number(text: str, line: int) -> float:
    text = text.strip()
    if not _NUMBER.fullmatch(text):
        raise ScenarioError(f"expected a decimal number, got {text!r}", line)
    return float(text)


def _numbers(text: str, line: int, sep: str = ",") -> list[float]:
    parts = [p for p in text.split(sep) if p.strip()]
    return [_number(p, line) for p in parts]


def _int_list(text: str, line: int) -> tuple[int, ...]:
    out = []
    for v in _numbers(text, line):
        if v != int(v):
            raise ScenarioError(f"expected integer ids, got {v}", line)
        out.append(int(v))
    return tuple(out)


def _tokenize(text: str) -> list[_Block]:
    blocks = [_Block(None, 1)]
    seen_content = False
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        seen_content = True
        if line.startswith("["):
            m = re.fullmatch(r"\[(\w+)\]", line)
            if not m or m.group(1) not in _SECTIONS:
                raise ScenarioError(f"unknown section header {line!r}", lineno)
            blocks.append(_Block(m.group(1), lineno))
            continue
        if "=" not in line:
            raise ScenarioError(f"expected 'key = value', got {line!r}", lineno)
        key, value = (p.strip() for p in line.split("=", 1))
        block = blocks[-1]
        if key not in _KEYS[block.kind] and not (block.kind == "road" and _ELEMENT_KEY.match(key)):
            where = f"[{block.kind}]" if block.kind else "top level"
            raise ScenarioError(f"unknown key '{key}' at {where}", lineno)
        if key in block.values:
            raise ScenarioError(f"duplicate key '{key}'", lineno)
        if not value:
            raise ScenarioError(f"empty value for '{key}'", lineno)
        block.values[key] = (value, lineno)
    if not seen_content:
        raise ScenarioError("empty scenario file", 1)
    return blocks


def _parse_end(text: str, line: int, side: str):
    parts = text.split()
    kind = parts[0].lower()
    if kind == "junction" and len(parts) == 2:
        return JunctionEnd(int(_number(parts[1], line)))
    if side == "left" and kind == "inflow" and len(parts) == 2:
        return Inflow(int(_number(parts[1], line)))
    if side == "right" and kind == "outflow" and len(parts) == 1:
        return Outflow()
    allowed = "'inflow <datum>' or 'junction <id>'" if side == "left" else "'outflow' or 'junction <id>'"
    raise ScenarioError(f"{side} end must be {allowed}, got {text!r}", line)


def _parse_ic(text: str, line: int) -> InitialCondition:
    text = text.strip()
    if not text.startswith("("):
        return Constant(_number(text, line))
    pts = re.findall(r"\(([^()]*)\)", text)
    if re.sub(r"\(([^()]*)\)", "", text).strip():
        raise ScenarioError(f"malformed breakpoint list {text!r}", line)
    points = []
    for p in pts:
        vals = _numbers(p, line)
        if len(vals) != 2:
            raise ScenarioError(f"breakpoint must be (x, value), got ({p})", line)
        points.append((vals[0], vals[1]))
    try:
        return PiecewiseLinear(tuple(points))
    except ValueError as e:
        raise ScenarioError(str(e), line) from None


def parse_scenario(text: str) -> Scenario:
    blocks = _tokenize(text)
    top = blocks[0]
    fmt = top.get("format")
    if fmt is None:
        raise ScenarioError("missing 'format = 1' header", top.line)
    if _number(fmt, top.line_of("format")) != FORMAT_VERSION:
        raise ScenarioError(f"unsupported format {fmt}", top.line_of("format"))
    name = top.get("name", "scenario")

    numerics = [b for b in blocks if b.kind == "numerics"]
    outputs = [b for b in blocks if b.kind == "output"]
    for kind, found in (("numerics", numerics), ("output", outputs)):
        if len(found) > 1:
            raise ScenarioError(f"more than one [{kind}] section", found[1].line)
    if not numerics:
        raise ScenarioError("missing [numerics] section", 1)
    nb = numerics[0]
    flux = nb.get("flux")
    try:
        cfg = NumericsConfig(tau=nb.num("tau"), t_end=nb.num("t_end"), degree=nb.int("degree", 1),
                             tvb_m=nb.num("tvb_m", 0.0),
                             flux=None if flux is None else FluxStrategy(flux.strip().lower()),
                             max_clamp_events=nb.int("max_clamp_events", 0))
    except ValueError as e:
        if isinstance(e, ScenarioError):
            raise
        raise ScenarioError(str(e), nb.line) from None

    snapshots: tuple[float, ...] = ()
    out_dir = None
    if outputs:
        ob = outputs[0]
        if "snapshots" in ob.values:
            snapshots = tuple(_numbers(ob.get("snapshots"), ob.line_of("snapshots")))
        out_dir = ob.get("dir")

    boundary = {}
    for b in blocks:
        if b.kind != "boundary":
            continue
        bid = b.int("id")
        if bid in boundary:
            raise ScenarioError(f"duplicate boundary id {bid}", b.line)
        period = b.num("period", 1.0)
        if not period > 0:
            raise ScenarioError("boundary period must be positive", b.line_of("period"))
        boundary[bid] = BoundaryDatum(bid, b.num("offset"), b.num("amplitude", 0.0), period,
                                      b.num("phase", 0.0))

    roads, initial, overrides = [], {}, {}
    for b in blocks:
        if b.kind != "road":
            continue
        rid = b.int("id")
        try:
            diagram = FundamentalDiagram(DiagramKind.parse(b.get("diagram", "greenshields")),
                                         DiagramParams(b.num("v_max"), b.num("rho_max")))
        except ScenarioError:
            raise
        except ValueError as e:
            raise ScenarioError(f"road {rid}: {e}", b.line) from None
        ov = []
        for key, (value, line) in b.values.items():
            m = _ELEMENT_KEY.match(key)
            if m:
                vals = _numbers(value, line)
                if len(vals) != 2:
                    raise ScenarioError("element override must be 'v_max, rho_max'", line)
                try:
                    ov.append((int(m.group(1)), DiagramParams(vals[0], vals[1])))
                except ValueError as e:
                    raise ScenarioError(str(e), line) from None
        road = Road(rid, b.num("a"), b.num("b"), b.int("elements"), diagram,
                    _parse_end(b.require("left"), b.line_of("left"), "left"),
                    _parse_end(b.require("right"), b.line_of("right"), "right"))
        if ov:
            overrides[rid] = tuple(ov)
        roads.append(_build_road_elements(road, overrides.get(rid, ())))
        initial[rid] = _parse_ic(b.require("ic"), b.line_of("ic"))

    phases: dict[int, list[tuple[_Block, Phase]]] = {}
    junction_blocks = [b for b in blocks if b.kind == "junction"]
    jshape = {}
    for b in junction_blocks:
        jshape[b.int("id")] = (_int_list(b.require("incoming"), b.line_of("incoming")),
                               _int_list(b.require("outgoing"), b.line_of("outgoing")))
    for b in blocks:
        if b.kind != "phase":
            continue
        jid = b.int("junction")
        if jid not in jshape:
            raise ScenarioError(f"phase refers to unknown junction {jid}", b.line_of("junction"))
        inc, out = jshape[jid]
        mask = [[0] * len(inc) for _ in out]
        for pair in b.require("green").split(","):
            pair = pair.strip()
            m = re.fullmatch(r"(-?\d+)\s*>\s*(-?\d+)", pair)
            if not m:
                raise ScenarioError(f"green direction must look like 'i>j', got {pair!r}",
                                    b.line_of("green"))
            i, j = int(m.group(1)), int(m.group(2))
            if i not in inc or j not in out:
                raise ScenarioError(f"direction {i}>{j} is not a movement of junction {jid}",
                                    b.line_of("green"))
            mask[out.index(j)][inc.index(i)] = 1
        phases.setdefault(jid, []).append((b, Phase(tuple(tuple(r) for r in mask), b.num("duration"))))

    junctions = []
    for b in junction_blocks:
        jid = b.int("id")
        inc, out = jshape[jid]
        rows = [r for r in b.require("matrix").split(";")]
        matrix = as_matrix([_numbers(r, b.line_of("matrix")) for r in rows])
        lights = None
        if jid in phases:
            lights = LightSchedule(tuple(p for _, p in phases[jid]), b.num("all_red", 0.0))
        elif "all_red" in b.values:
            raise ScenarioError("all_red given but no [phase] sections for this junction",
                                b.line_of("all_red"))
        try:
            strategy = FluxStrategy(b.get("strategy", "weighted").strip().lower())
        except ValueError:
            raise ScenarioError(f"unknown strategy {b.get('strategy')!r}", b.line_of("strategy")) from None
        q = b.num("right_of_way") if "right_of_way" in b.values else None
        junctions.append(Junction(jid, inc, out, matrix, lights, strategy, q))

    scenario = Scenario(name, Network(tuple(roads), tuple(junctions)), boundary, initial, cfg,
                        snapshots, out_dir, overrides)
    check_scenario(scenario)
    return scenario


# -- canonical form ---------------------------------------------------------------------

def _f(x: float) -> str:
    return repr(float(x))


def format_scenario(s: Scenario) -> str:
    """Emit the canonical text form; ``parse_scenario`` reads it back to an equal Scenario."""
    lines = [f"format = {FORMAT_VERSION}", f"name = {s.name}", "", "[numerics]"]
    n = s.numerics
    lines += [f"tau = {_f(n.tau)}", f"t_end = {_f(n.t_end)}", f"degree = {n.degree}",
              f"tvb_m = {_f(n.tvb_m)}", f"max_clamp_events = {n.max_clamp_events}"]
    if n.flux is not None:
        lines.append(f"flux = {n.flux.value}")
    if s.snapshots or s.output_dir:
        lines += ["", "[output]"]
        if s.snapshots:
            lines.append("snapshots = " + ", ".join(_f(t) for t in s.snapshots))
        if s.output_dir:
            lines.append(f"dir = {s.output_dir}")
    for bid, d in s.boundary.items():
        lines += ["", "[boundary]", f"id = {bid}", f"offset = {_f(d.offset)}",
                  f"amplitude = {_f(d.amplitude)}", f"period = {_f(d.period)}", f"phase = {_f(d.phase)}"]
    for r in s.network.roads:
        left = f"inflow {r.left.datum}" if isinstance(r.left, Inflow) else f"junction {r.left.junction}"
        right = "outflow" if isinstance(r.right, Outflow) else f"junction {r.right.junction}"
        ic = s.initial[r.id]
        ic_text = _f(ic.value) if isinstance(ic, Constant) else \
            " ".join(f"({_f(x)}, {_f(v)})" for x, v in ic.points)
        lines += ["", "[road]", f"id = {r.id}", f"a = {_f(r.a)}", f"b = {_f(r.b)}",
                  f"elements = {r.n_elements}", f"diagram = {r.diagram.kind.name.lower()}",
                  f"v_max = {_f(r.diagram.v_max)}", f"rho_max = {_f(r.diagram.rho_max)}",
                  f"left = {left}", f"right = {right}", f"ic = {ic_text}"]
        for k, p in s.overrides.get(r.id, ()):
            lines.append(f"element[{k}] = {_f(p.v_max)}, {_f(p.rho_max)}")
    for j in s.network.junctions:
        lines += ["", "[junction]", f"id = {j.id}",
                  "incoming = " + ", ".join(str(i) for i in j.incoming),
                  "outgoing = " + ", ".join(str(o) for o in j.outgoing),
                  "matrix = " + "; ".join(", ".join(_f(v) for v in row) for row in j.matrix),
                  f"strategy = {j.strategy.value}"]
        if j.right_of_way is not None:
            lines.append(f"right_of_way = {_f(j.right_of_way)}")
        if j.lights is not None:
            lines.append(f"all_red = {_f(j.lights.all_red)}")
    for j in s.network.junctions:
        if j.lights is None:
            continue
        for phase in j.lights.phases:
            green = [f"{i}>{o}" for jo, o in enumerate(j.outgoing) for ii, i in enumerate(j.incoming)
                     if phase.mask[jo][ii]]
            green.sort(key=lambda g: tuple(int(v) for v in g.split(">")))
            lines += ["", "[phase]", f"junction = {j.id}", f"duration = {_f(phase.duration)}",
                      "green = " + ", ".join(green)]
    return "\n".join(lines) + "\n"


# -- loading ------------------------------------------------------------------------------

def builtin_text(name: str) -> str:
    if name not in BUILTIN:
        raise KeyError(f"no built-in scenario {name!r}; available: {', '.join(BUILTIN)}")
    return resources.files("dgtraffic").joinpath("scenarios", f"{name}.scn").read_text(encoding="utf-8")


def load_scenario(name_or_path: Union[str, Path]) -> Scenario:
    """Load a built-in scenario by name or a scenario file by path."""
    path = Path(name_or_path)
    if str(name_or_path) in BUILTIN and not path.exists():
        return parse_scenario(builtin_text(str(name_or_path)))
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ScenarioError(f"cannot read scenario {str(path)!r}: {e.strerror}") from None
    return parse_scenario(text)
