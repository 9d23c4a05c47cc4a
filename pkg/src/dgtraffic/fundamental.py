"""Fundamental diagrams: equilibrium velocity and flow laws.

Two families are supported:

    Greenshields:  V(rho) = v_max * (1 - rho / rho_max)
    Greenberg:     V(rho) = v_max * ln(rho_max / rho)

and in both cases the equilibrium flow is Q(rho) = rho * V(rho).

The checked functions (``v_e``, ``q_e``, ``q_e_prime``) validate their
argument against the admissible interval [0, rho_max]. The solver kernel
uses the unchecked array versions (``flow``, ``flow_prime``) which take
per-element parameter arrays.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

# Greenberg's Q' is unbounded at rho = 0; wave speeds are evaluated no lower than this.
GREENBERG_RHO_FLOOR = 1e-8


class DiagramKind(enum.IntEnum):
    GREENSHIELDS = 0
    GREENBERG = 1

    @classmethod
    def parse(cls, name: str) -> "DiagramKind":
        try:
            return cls[name.strip().upper()]
        except KeyError:
            raise ValueError(f"unknown fundamental diagram {name!r}") from None


_GREENBERG = int(DiagramKind.GREENBERG)


class DomainError(ValueError):
    """Density outside the admissible interval of a diagram."""


@dataclass(frozen=True)
class DiagramParams:
    v_max: float
    rho_max: float

    def __post_init__(self):
        if not (self.v_max > 0 and np.isfinite(self.v_max)):
            raise ValueError(f"v_max must be positive, got {self.v_max}")
        if not (self.rho_max > 0 and np.isfinite(self.rho_max)):
            raise ValueError(f"rho_max must be positive, got {self.rho_max}")


@dataclass(frozen=True)
class FundamentalDiagram:
    kind: DiagramKind
    params: DiagramParams

    @classmethod
    def greenshields(cls, v_max: float = 1.0, rho_max: float = 1.0) -> "FundamentalDiagram":
        return cls(DiagramKind.GREENSHIELDS, DiagramParams(v_max, rho_max))

    @classmethod
    def greenberg(cls, v_max: float = 1.0, rho_max: float = 1.0) -> "FundamentalDiagram":
        return cls(DiagramKind.GREENBERG, DiagramParams(v_max, rho_max))

    @property
    def v_max(self) -> float:
        return self.params.v_max

    @property
    def rho_max(self) -> float:
        return self.params.rho_max

    def with_params(self, params: DiagramParams) -> "FundamentalDiagram":
        return FundamentalDiagram(self.kind, params)

    # convenience aliases so a diagram can be passed where a flux function is expected
    def q_e(self, rho):
        return q_e(self, rho)

    def q_e_prime(self, rho):
        return q_e_prime(self, rho)

    @property
    def critical_density(self) -> float:
        return critical_density(self)

    @property
    def q_max(self) -> float:
        return float(q_e(self, critical_density(self)))


def _check_domain(d: FundamentalDiagram, rho, allow_zero: bool = True):
    rho = np.asarray(rho, dtype=float)
    lo_bad = rho < 0 if allow_zero else rho <= 0
    if np.any(lo_bad) or np.any(rho > d.rho_max) or np.any(~np.isfinite(rho)):
        raise DomainError(
            f"density {rho} outside admissible range "
            f"{'[' if allow_zero else '('}0, {d.rho_max}] of {d.kind.name.lower()}"
        )
    return rho


def _scalar(x):
    return float(x) if np.ndim(x) == 0 else x


def v_e(d: FundamentalDiagram, rho):
    """Equilibrium velocity. Greenberg is undefined at rho = 0."""
    greenberg = d.kind == DiagramKind.GREENBERG
    rho = _check_domain(d, rho, allow_zero=not greenberg)
    if greenberg:
        return _scalar(d.v_max * np.log(d.rho_max / rho))
    return _scalar(d.v_max * (1.0 - rho / d.rho_max))


def q_e(d: FundamentalDiagram, rho):
    """Equilibrium flow rho * V(rho); Greenberg is extended by 0 at rho = 0."""
    rho = _check_domain(d, rho)
    return _scalar(flow(int(d.kind), rho, d.v_max, d.rho_max))


def q_e_prime(d: FundamentalDiagram, rho):
    greenberg = d.kind == DiagramKind.GREENBERG
    rho = _check_domain(d, rho, allow_zero=not greenberg)
    if greenberg:
        return _scalar(d.v_max * (np.log(d.rho_max / rho) - 1.0))
    return _scalar(d.v_max * (1.0 - 2.0 * rho / d.rho_max))


def critical_density(d: FundamentalDiagram) -> float:
    if d.kind == DiagramKind.GREENBERG:
        return d.rho_max / np.e
    return d.rho_max / 2.0


def flow(kind, rho, v_max, rho_max):
    """Unchecked, broadcasting equilibrium flow.

    ``kind`` is a scalar or an integer array of ``DiagramKind`` codes.
    """
    if isinstance(kind, np.ndarray) and kind.ndim:
        out = v_max * rho * (1.0 - rho / rho_max)
        gb = kind == _GREENBERG
        if gb.any():
            out = np.where(gb, _greenberg_flow(rho, v_max, rho_max), out)
        return out
    if kind == _GREENBERG:
        return _greenberg_flow(rho, v_max, rho_max)
    return v_max * rho * (1.0 - rho / rho_max)


def flow_prime(kind, rho, v_max, rho_max):
    """Unchecked, broadcasting derivative of the equilibrium flow."""
    if isinstance(kind, np.ndarray) and kind.ndim:
        out = v_max * (1.0 - 2.0 * rho / rho_max)
        gb = kind == _GREENBERG
        if gb.any():
            out = np.where(gb, _greenberg_flow_prime(rho, v_max, rho_max), out)
        return out
    if kind == _GREENBERG:
        return _greenberg_flow_prime(rho, v_max, rho_max)
    return v_max * (1.0 - 2.0 * rho / rho_max)


_TINY = np.finfo(float).tiny


def _greenberg_flow(rho, v_max, rho_max):
    rho = np.asarray(rho, dtype=float)
    safe = np.maximum(rho, _TINY)
    return np.where(rho > 0, v_max * rho * np.log(rho_max / safe), 0.0)


def _greenberg_flow_prime(rho, v_max, rho_max):
    rho = np.asarray(rho, dtype=float)
    safe = np.maximum(rho, GREENBERG_RHO_FLOOR)
    return v_max * (np.log(rho_max / safe) - 1.0)


def max_wave_speed(d: FundamentalDiagram) -> float:
    """max |Q'(rho)| over the admissible interval."""
    if d.kind == DiagramKind.GREENBERG:
        return float(max(abs(_greenberg_flow_prime(0.0, d.v_max, d.rho_max)),
                         abs(_greenberg_flow_prime(d.rho_max, d.v_max, d.rho_max))))
    return d.v_max
