"""Numerical fluxes at road junctions.

Two couplings are provided:

* ``weighted_fluxes``: pairwise Lax-Friedrichs fluxes H_{i,j} between every
  incoming trace i and outgoing trace j, combined with the distribution
  fractions alpha_{j,i}. Outgoing road j receives sum_i alpha_{j,i} H_{i,j},
  incoming road i releases sum_j alpha_{j,i} H_{i,j}. Works for any shape.
* ``maxflux_fluxes``: the throughput-maximising solution built from
  demand/supply, which distributes traffic exactly by alpha. Closed forms
  for up to two incoming and two outgoing roads.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import Optional, Sequence

import numpy as np

from .dg import lf_flux_array
from .fundamental import FundamentalDiagram, flow


@dataclass
class JunctionState:
    """Traces at a junction and the diagrams of the adjacent elements."""
    incoming: np.ndarray  # rho_i at the right end of incoming road i
    outgoing: np.ndarray  # rho_j at the left end of outgoing road j
    in_side: tuple        # (kind, v_max, rho_max) arrays of length n
    out_side: tuple       # same, length m

    @classmethod
    def from_diagrams(cls, incoming: Sequence[float], outgoing: Sequence[float],
                      in_diagrams: Sequence[FundamentalDiagram] | FundamentalDiagram,
                      out_diagrams: Sequence[FundamentalDiagram] | FundamentalDiagram | None = None
                      ) -> "JunctionState":
        n, m = len(incoming), len(outgoing)
        if out_diagrams is None:
            out_diagrams = in_diagrams
        if isinstance(in_diagrams, FundamentalDiagram):
            in_diagrams = [in_diagrams] * n
        if isinstance(out_diagrams, FundamentalDiagram):
            out_diagrams = [out_diagrams] * m
        return cls(np.asarray(incoming, dtype=float), np.asarray(outgoing, dtype=float),
                   _side(in_diagrams), _side(out_diagrams))

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.outgoing), len(self.incoming)


def _side(diagrams: Sequence[FundamentalDiagram]) -> tuple:
    return (np.array([int(d.kind) for d in diagrams]),
            np.array([d.v_max for d in diagrams]),
            np.array([d.rho_max for d in diagrams]))


@dataclass
class JunctionFluxes:
    incoming: np.ndarray  # H_i: outflow from incoming road i
    outgoing: np.ndarray  # H_j: inflow to outgoing road j
    pairs: Optional[np.ndarray] = None  # alpha_{j,i} * H_{i,j}, shape (m, n)

    @property
    def total(self) -> float:
        return float(self.incoming.sum())


@dataclass
class DemandSupply:
    demand: np.ndarray
    supply: np.ndarray


def _check_alpha(state: JunctionState, alpha) -> np.ndarray:
    alpha = np.asarray(alpha, dtype=float)
    if alpha.ndim == 1 and state.shape[1] == 1:
        alpha = alpha[:, None]
    if alpha.shape != state.shape:
        raise ValueError(f"distribution matrix has shape {alpha.shape}, junction is "
                         f"{state.shape[0]}x{state.shape[1]} (outgoing x incoming)")
    return alpha


def pair_fluxes(state: JunctionState) -> np.ndarray:
    """H_{i,j} arranged as an (m, n) array indexed [j, i]."""
    kin, vin, rin = state.in_side
    kout, vout, rout = state.out_side
    left = (kin[None, :], vin[None, :], rin[None, :])
    right = (kout[:, None], vout[:, None], rout[:, None])
    return lf_flux_array(state.incoming[None, :], state.outgoing[:, None], left, right)


def weighted_fluxes(state: JunctionState, alpha) -> JunctionFluxes:
    alpha = _check_alpha(state, alpha)
    contrib = alpha * pair_fluxes(state)
    return JunctionFluxes(contrib.sum(axis=0), contrib.sum(axis=1), contrib)


def distribution_error(state: JunctionState, alpha) -> np.ndarray:
    """E_j = sum_i sum_{l != j} alpha_{j,i} alpha_{l,i} (H_{i,j} - H_{i,l})."""
    alpha = _check_alpha(state, alpha)
    H = pair_fluxes(state)
    m = alpha.shape[0]
    E = np.zeros(m)
    for j in range(m):
        for l in range(m):
            if l != j:
                E[j] += np.sum(alpha[j] * alpha[l] * (H[j] - H[l]))
    return E


def demand_supply(state: JunctionState) -> DemandSupply:
    return DemandSupply(_demand(state.incoming, state.in_side),
                        _supply(state.outgoing, state.out_side))


def _crit_and_qmax(side):
    kind, vmax, rmax = side
    sigma = np.where(np.asarray(kind) == 1, rmax / np.e, rmax / 2.0)
    return sigma, flow(kind, sigma, vmax, rmax)


def _demand(rho, side):
    sigma, qmax = _crit_and_qmax(side)
    return np.where(rho <= sigma, flow(side[0], rho, side[1], side[2]), qmax)


def _supply(rho, side):
    sigma, qmax = _crit_and_qmax(side)
    return np.where(rho <= sigma, qmax, flow(side[0], rho, side[1], side[2]))


def maxflux_fluxes(state: JunctionState, alpha, q: Optional[float] = None) -> JunctionFluxes:
    """Maximum-throughput junction fluxes with exact distribution by alpha.

    ``q`` is the right-of-way share of the first incoming road; it is used
    only when two incoming roads compete for limited outgoing capacity.
    """
    alpha = _check_alpha(state, alpha)
    m, n = alpha.shape
    if n > 2 or m > 2:
        raise ValueError(f"maxflux supports up to 2x2 junctions, got {n} incoming x {m} outgoing")
    ds = demand_supply(state)
    d, s = np.maximum(ds.demand, 0.0), np.maximum(ds.supply, 0.0)
    if n == 1:
        a = alpha[:, 0]
        if m == 2 and np.any(a == 0):
            raise ValueError("maxflux 1x2 closed form needs strictly positive distribution fractions")
        gamma = float(d[0])
        for j in range(m):
            if a[j] > 0:
                gamma = min(gamma, s[j] / a[j])
        h_in = np.array([gamma])
    else:
        if q is None:
            raise ValueError("two incoming roads need a right-of-way parameter q")
        h_in = _two_incoming(d, s, alpha, q)
    contrib = alpha * h_in[None, :]
    # a column closed by a red light releases only what is delivered; full
    # columns keep H_i itself so that H_j = alpha_{j,i} H_i holds exactly
    col = alpha.sum(axis=0)
    released = np.where(np.abs(col - 1.0) <= 1e-12, h_in, contrib.sum(axis=0))
    return JunctionFluxes(released, contrib.sum(axis=1), contrib)


def _two_incoming(d: np.ndarray, s: np.ndarray, alpha: np.ndarray, q: float) -> np.ndarray:
    """Maximise H1 + H2 over the feasible polygon, then split by priority q.

    Feasible set: 0 <= H_i <= d_i and alpha_j . H <= s_j for each outgoing j.
    Among optimal points the one closest to the priority ray H = S (q, 1 - q)
    along the optimal edge is selected.
    """
    d1, d2 = float(d[0]), float(d[1])
    if np.all(alpha @ d <= s):
        return np.array([d1, d2])
    if alpha.shape[0] == 1 and alpha[0, 0] == 1.0 and alpha[0, 1] == 1.0:
        S = min(d1 + d2, float(s[0]))
        h1 = min(max(q * S, S - d2), d1)
        return np.array([h1, S - h1])

    # half-planes a . H <= c
    planes = [((1.0, 0.0), d1), ((0.0, 1.0), d2), ((-1.0, 0.0), 0.0), ((0.0, -1.0), 0.0)]
    planes += [((float(alpha[j, 0]), float(alpha[j, 1])), float(s[j])) for j in range(alpha.shape[0])]
    scale = max(d1, d2, float(np.max(s)), 1e-300)
    tol = 1e-12 * scale

    def feasible(x, y):
        return all(a0 * x + a1 * y <= c + tol for (a0, a1), c in planes)

    best = 0.0
    for ((a0, a1), c), ((b0, b1), e) in combinations(planes, 2):
        det = a0 * b1 - a1 * b0
        if det == 0:
            continue
        x = (c * b1 - a1 * e) / det
        y = (a0 * e - c * b0) / det
        if feasible(x, y):
            best = max(best, x + y)
    S = best
    # optimal edge on H1 + H2 = S: (a0 - a1) H1 <= c - a1 S
    lo, hi = -np.inf, np.inf
    for (a0, a1), c in planes:
        k = a0 - a1
        r = c - a1 * S
        if k > 0:
            hi = min(hi, r / k)
        elif k < 0:
            lo = max(lo, r / k)
    lo, hi = max(lo, 0.0, S - d2), min(hi, d1, S)
    if lo > hi:
        lo = hi = 0.5 * (lo + hi)
    h1 = min(max(q * S, lo), hi)
    return np.array([h1, S - h1])
