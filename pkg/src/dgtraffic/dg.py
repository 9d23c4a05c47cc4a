"""Discontinuous Galerkin discretisation of a scalar conservation law on a road.

On each element K = [x_k, x_{k+1}] the density is a modal expansion

    rho_h(x) = sum_k c_k P_k(xi),   xi = 2 (x - x_k) / h - 1,

in unnormalised Legendre polynomials, so c_0 is the element mean and the
local mass matrix is diag(h / (2k + 1)). Testing the weak form with P_k
gives

    dc_k/dt = (2k + 1) / h * ( sum_q w_q Q(rho_q) P_k'(xi_q)
                               - F_right + (-1)^k F_left ),

with F_left/F_right the numerical fluxes at the element's endpoints.

The array kernels in this module work on a flat (n_elements, p + 1)
coefficient array so several roads can be stacked and advanced together.
The road-level functions (``project_initial``, ``road_rhs``,
``minmod_limit``, ``clamp_admissible``) wrap them for a single road.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Callable, Optional, Sequence, Union

import numpy as np
from numpy.polynomial import legendre as L

from .fundamental import DiagramParams, FundamentalDiagram, flow, flow_prime, q_e


@dataclass(frozen=True)
class Mesh:
    road_id: int
    nodes: np.ndarray

    @classmethod
    def uniform(cls, a: float, b: float, n: int, road_id: int = 0) -> "Mesh":
        if not a < b or n < 1:
            raise ValueError(f"bad mesh [{a}, {b}] with {n} elements")
        return cls(road_id, np.linspace(a, b, n + 1))

    @classmethod
    def for_road(cls, road) -> "Mesh":
        return cls.uniform(road.a, road.b, road.n_elements, road.id)

    @property
    def n_elements(self) -> int:
        return len(self.nodes) - 1

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.nodes)

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.nodes[1:] + self.nodes[:-1])


@dataclass
class DGField:
    degree: int
    coefficients: np.ndarray  # (n_elements, degree + 1)

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=float)
        if self.coefficients.ndim != 2 or self.coefficients.shape[1] != self.degree + 1:
            raise ValueError(f"coefficients must have shape (n, {self.degree + 1})")

    @property
    def means(self) -> np.ndarray:
        return self.coefficients[:, 0]

    @property
    def n_elements(self) -> int:
        return self.coefficients.shape[0]

    def copy(self) -> "DGField":
        return DGField(self.degree, self.coefficients.copy())

    def traces(self) -> tuple[np.ndarray, np.ndarray]:
        """Values at the left and right end of every element."""
        b = basis(self.degree)
        return self.coefficients @ b.left, self.coefficients @ b.right

    def total_mass(self, mesh: Mesh) -> float:
        return float(np.dot(self.means, mesh.widths))


@dataclass(frozen=True)
class Basis:
    """Legendre modal basis with (p + 1)-point Gauss-Legendre quadrature."""
    degree: int
    points: np.ndarray
    weights: np.ndarray
    values: np.ndarray       # (n_quad, p + 1): P_k(xi_q)
    derivatives: np.ndarray  # (n_quad, p + 1): P_k'(xi_q)
    left: np.ndarray         # P_k(-1) = (-1)^k
    right: np.ndarray        # P_k(+1) = 1
    inv_mass: np.ndarray     # 2k + 1, divide by h for the physical element

    def eval(self, coef: np.ndarray, xi) -> np.ndarray:
        return coef @ L.legvander(np.atleast_1d(np.asarray(xi, dtype=float)), self.degree).T


@lru_cache(maxsize=None)
def basis(p: int) -> Basis:
    if p < 0:
        raise ValueError("degree must be non-negative")
    xi, w = L.leggauss(p + 1)
    V = L.legvander(xi, p)
    dV = np.zeros_like(V)
    for k in range(1, p + 1):
        e = np.zeros(k + 1)
        e[k] = 1.0
        dV[:, k] = L.legval(xi, L.legder(e))
    k = np.arange(p + 1)
    return Basis(p, xi, w, V, dV, (-1.0) ** k, np.ones(p + 1), 2.0 * k + 1.0)


# -- projection / evaluation --------------------------------------------------

def project_initial(mesh: Mesh, p: int, rho0: Callable[[np.ndarray], np.ndarray]) -> DGField:
    """Element-wise L2 projection of rho0 with (p + 1)-point Gauss quadrature."""
    b = basis(p)
    h = mesh.widths[:, None]
    x = mesh.nodes[:-1, None] + 0.5 * (b.points[None, :] + 1.0) * h
    vals = np.asarray(rho0(x), dtype=float) * np.ones_like(x)
    coef = 0.5 * (vals * b.weights) @ b.values * b.inv_mass
    return DGField(p, coef)


def evaluate(field: DGField, k: int, xi):
    if not 0 <= k < field.n_elements:
        raise IndexError(f"element {k} out of range 0..{field.n_elements - 1}")
    vals = basis(field.degree).eval(field.coefficients[k], xi)
    return float(vals[0]) if np.ndim(xi) == 0 else vals


# -- numerical flux -------------------------------------------------------------

def lf_flux_array(uL, uR, left, right):
    """Lax-Friedrichs flux between states with (possibly different) diagrams.

    ``left``/``right`` are (kind, v_max, rho_max) tuples of scalars or arrays.
    The dissipation coefficient is max |Q'| over {uL, uR, (uL + uR)/2},
    evaluated for both diagrams.
    """
    uL = np.asarray(uL, dtype=float)
    uR = np.asarray(uR, dtype=float)
    mid = 0.5 * (uL + uR)
    samples = np.empty((3,) + mid.shape)
    samples[0], samples[1], samples[2] = uL, uR, mid
    alpha = np.abs(flow_prime(left[0], samples, left[1], left[2])).max(axis=0)
    if right is not left:
        alpha = np.maximum(alpha, np.abs(flow_prime(right[0], samples, right[1], right[2])).max(axis=0))
    return 0.5 * (flow(left[0], uL, left[1], left[2]) + flow(right[0], uR, right[1], right[2])
                  - alpha * (uR - uL))


def _side(d: FundamentalDiagram):
    return int(d.kind), d.v_max, d.rho_max


def lf_flux(fL: FundamentalDiagram, fR: FundamentalDiagram, uL: float, uR: float) -> float:
    """Lax-Friedrichs flux H(uL, uR) with left flux fL and right flux fR."""
    q_e(fL, uL)
    q_e(fR, uR)
    return float(lf_flux_array(uL, uR, _side(fL), _side(fR)))


# -- element parameters ----------------------------------------------------------

@dataclass
class ElementParams:
    """Per-element diagram data as flat arrays."""
    kind: np.ndarray
    v_max: np.ndarray
    rho_max: np.ndarray

    @classmethod
    def uniform(cls, d: FundamentalDiagram, n: int) -> "ElementParams":
        return cls(np.full(n, int(d.kind)), np.full(n, d.v_max), np.full(n, d.rho_max))

    @classmethod
    def from_list(cls, d: FundamentalDiagram, params: Sequence[DiagramParams]) -> "ElementParams":
        return cls(np.full(len(params), int(d.kind)),
                   np.array([p.v_max for p in params]),
                   np.array([p.rho_max for p in params]))

    @classmethod
    def concat(cls, parts: Sequence["ElementParams"]) -> "ElementParams":
        return cls(np.concatenate([p.kind for p in parts]),
                   np.concatenate([p.v_max for p in parts]),
                   np.concatenate([p.rho_max for p in parts]))

    @cached_property
    def homogeneous_kind(self) -> Optional[int]:
        k = np.unique(self.kind)
        return int(k[0]) if len(k) == 1 else None

    def side(self, idx) -> tuple:
        kind = self.homogeneous_kind
        return (self.kind[idx] if kind is None else kind, self.v_max[idx], self.rho_max[idx])

    @cached_property
    def all(self) -> tuple:
        kind = self.homogeneous_kind
        return (self.kind[:, None] if kind is None else kind,
                self.v_max[:, None], self.rho_max[:, None])


def _element_params(d: Union[FundamentalDiagram, ElementParams], n: int) -> ElementParams:
    if isinstance(d, ElementParams):
        return d
    return ElementParams.uniform(d, n)


# -- spatial residual -------------------------------------------------------------

def volume_term(coef: np.ndarray, b: Basis, params: ElementParams) -> np.ndarray:
    """sum_q w_q Q(rho_h(xi_q)) P_k'(xi_q) for every element and mode."""
    if b.degree == 0:
        return np.zeros_like(coef)
    kind, vmax, rmax = params.all
    f = flow(kind, coef @ b.values.T, vmax, rmax)
    return (f * b.weights) @ b.derivatives


def assemble_rhs(coef, h, b: Basis, vol, f_left, f_right):
    return (vol - f_right[:, None] * b.right + f_left[:, None] * b.left) * (b.inv_mass / h[:, None])


def road_rhs(field: DGField, mesh: Mesh, diagram: Union[FundamentalDiagram, ElementParams],
             left_flux: float, right_flux: float) -> np.ndarray:
    """Time derivative of the modal coefficients on one road.

    ``left_flux``/``right_flux`` are the numerical fluxes already evaluated at
    the road ends; interior interfaces use the Lax-Friedrichs flux.
    """
    b = basis(field.degree)
    coef = field.coefficients
    n = field.n_elements
    params = _element_params(diagram, n)
    uL, uR = coef @ b.left, coef @ b.right
    f_int = lf_flux_array(uR[:-1], uL[1:], params.side(slice(0, n - 1)), params.side(slice(1, n)))
    f_left = np.concatenate([[left_flux], f_int])
    f_right = np.concatenate([f_int, [right_flux]])
    return assemble_rhs(coef, mesh.widths, b, volume_term(coef, b, params), f_left, f_right)


# -- limiting ---------------------------------------------------------------------

def minmod(a, b, c):
    a, b, c = np.broadcast_arrays(np.asarray(a, float), np.asarray(b, float), np.asarray(c, float))
    s = np.sign(a)
    same = (s == np.sign(b)) & (s == np.sign(c))
    return np.where(same, s * np.minimum(np.abs(a), np.minimum(np.abs(b), np.abs(c))), 0.0)


def limit_coefficients(coef: np.ndarray, h: np.ndarray, d_forward: np.ndarray,
                       d_backward: np.ndarray, tvb_m: float = 0.0) -> np.ndarray:
    """TVB-modified minmod limiter on the endpoint deviations of each element.

    ``d_forward``/``d_backward`` are the mean differences to the next and
    previous element. Means are never touched. For p >= 2 an element whose
    deviations get limited is replaced by its limited linear part.
    """
    p = coef.shape[1] - 1
    if p == 0:
        return coef
    out = coef.copy()
    thresh = tvb_m * h * h

    def mm(a):
        return np.where(np.abs(a) <= thresh, a, minmod(a, d_forward, d_backward))

    if p == 1:
        out[:, 1] = mm(coef[:, 1])
        return out
    k = np.arange(p + 1)
    dev_right = coef[:, 1:].sum(axis=1)
    dev_left = -(coef[:, 1:] * ((-1.0) ** k[1:])).sum(axis=1)
    changed = (mm(dev_right) != dev_right) | (mm(dev_left) != dev_left)
    out[changed, 1] = minmod(coef[changed, 1], d_forward[changed], d_backward[changed])
    out[changed, 2:] = 0.0
    return out


def minmod_limit(field: DGField, mesh: Mesh, tvb_m: float = 0.0,
                 inflow_mean: Optional[float] = None) -> DGField:
    """Limit one road.

    A missing neighbour contributes a zero mean difference, except at an
    inflow end where the boundary datum acts as the ghost mean.
    """
    means = field.means
    d_fwd = np.append(np.diff(means), 0.0)
    d_bwd = np.insert(np.diff(means), 0, 0.0 if inflow_mean is None else means[0] - inflow_mean)
    return DGField(field.degree, limit_coefficients(field.coefficients, mesh.widths, d_fwd, d_bwd, tvb_m))


# means this close to the admissible interval (relative to rho_max) are round-off, not violations
MEAN_ROUNDOFF = 1e-12


@dataclass
class ClampEvent:
    """An element whose mean left [0, rho_max] and was reset to a constant."""
    element: int
    mean: float
    bound: float
    mass_change: float
    road: Optional[int] = None
    time: Optional[float] = None


def clamp_coefficients(coef: np.ndarray, b: Basis, rho_max: np.ndarray, h: np.ndarray,
                       roundoff: float = MEAN_ROUNDOFF):
    """Keep point values inside [0, rho_max]; returns (coef, events).

    Admissible means: the non-constant part is scaled by the largest factor
    in [0, 1] that puts the values at the quadrature points and endpoints in
    bounds, preserving the element integral. Inadmissible means: the element
    is set to the violated bound and an event is recorded. Means outside the
    interval by at most ``roundoff * rho_max`` count as admissible.
    """
    out = coef
    means = coef[:, 0]
    tol = roundoff * rho_max
    low = means < -tol
    high = means > rho_max + tol
    bad = low | high
    events: list[ClampEvent] = []
    if coef.shape[1] > 1:
        vals = coef @ _check_points(b.degree)
        vmin = vals.min(axis=1)
        vmax = vals.max(axis=1)
        need = ~bad & ((vmin < 0) | (vmax > rho_max))
        if np.any(need):
            out = coef.copy()
            m = means[need]
            with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
                s_lo = np.where(vmin[need] < 0, m / (m - vmin[need]), 1.0)
                s_hi = np.where(vmax[need] > rho_max[need], (rho_max[need] - m) / (vmax[need] - m), 1.0)
            s = np.clip(np.nan_to_num(np.minimum(s_lo, s_hi), nan=0.0), 0.0, 1.0)
            out[need, 1:] *= s[:, None]
    if np.any(bad):
        if out is coef:
            out = coef.copy()
        for k in np.flatnonzero(bad):
            bound = 0.0 if low[k] else float(rho_max[k])
            events.append(ClampEvent(int(k), float(means[k]), bound, float((bound - means[k]) * h[k])))
            out[k, 0] = bound
            out[k, 1:] = 0.0
    return out, events


@lru_cache(maxsize=None)
def _check_points(p: int) -> np.ndarray:
    b = basis(p)
    xi = np.concatenate([[-1.0], b.points, [1.0]])
    return L.legvander(xi, p).T


def clamp_admissible(field: DGField, mesh: Mesh, rho_max) -> tuple[DGField, list[ClampEvent]]:
    rho_max = np.broadcast_to(np.asarray(rho_max, dtype=float), (field.n_elements,))
    coef, events = clamp_coefficients(field.coefficients, basis(field.degree), rho_max, mesh.widths)
    for e in events:
        e.road = mesh.road_id
    return DGField(field.degree, coef), events
