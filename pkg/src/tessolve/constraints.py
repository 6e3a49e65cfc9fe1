"""State-dependent feasible control sets, continuous and discrete.

The control is the share of residual demand routed to the network.  Physics
restricts it at the storage boundaries: an empty storage cannot discharge,
and a full one accepts at most the compensation rate that offsets its heat
loss.  The discrete-time set additionally requires the one-step Euler
arrival temperature to stay inside the storage band, which turns into an
affine inequality in the control.

Because the arrival point is affine in the control with slope
dt (mu_n + z) / (m_Q c_P), the two critical controls are the ones that land
exactly on q_min and q_max:

    e_min(q): arrival == q_min        e_max(q): arrival == q_max

For unsatisfied demand the arrival increases with the control (buying more
leaves more in storage), so the feasible band is [e_min, e_max]; for
overproduction it decreases (selling more stores less), so the band flips
to [e_max, e_min].  Intersecting with [0, 1] and the boundary rules above
reproduces the four-branch description via the thresholds q_d and q_u.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grid import Grid3
from .model import ModelConfig

__all__ = [
    "ControlInterval",
    "StateError",
    "InfeasibleControlError",
    "feasible_continuous",
    "chi_bounds",
    "discharge_threshold",
    "charge_threshold",
    "compensation_rate",
    "feasible_discrete",
    "feasible_lower_array",
]

_FEAS_TOL = 1e-9


class StateError(ValueError):
    """State outside the admissible domain."""


class InfeasibleControlError(RuntimeError):
    """Empty discrete feasible set; indicates a violated CFL condition upstream."""


@dataclass(frozen=True)
class ControlInterval:
    lo: float
    hi: float

    def __post_init__(self):
        if not (0.0 <= self.lo <= self.hi <= 1.0):
            raise InfeasibleControlError(f"invalid control interval [{self.lo}, {self.hi}]")

    def contains(self, a: float, tol: float = 0.0) -> bool:
        return self.lo - tol <= a <= self.hi + tol

    def clip(self, a):
        return np.clip(a, self.lo, self.hi)


def compensation_rate(q, q_amb, model: ModelConfig):
    """Overproduction level whose full injection exactly offsets the heat loss [kW]."""
    return -model.storage.loss_coefficient * (np.asarray(q, dtype=float) - q_amb)


def feasible_continuous(t: float, z: float, q: float, model: ModelConfig,
                        grid: Grid3 | None = None) -> ControlInterval:
    """Continuous-time feasible set at state (z, q) and time t.

    Interior states are unconstrained.  At q_min with unsatisfied demand the
    whole demand must be bought; at q_max with overproduction at most the
    compensation share may still be stored.  The branch table is followed
    literally, so the corner rows (q_min with overproduction, q_max with
    unsatisfied demand) fall under the generic [0, 1] rows.

    A step-indexed ambient profile needs `grid` to resolve t to its step.
    """
    sto = model.storage
    if not (sto.q_min <= q <= sto.q_max):
        raise StateError(f"q = {q} outside [{sto.q_min}, {sto.q_max}]")
    if model.ambient.is_constant():
        q_amb = model.ambient.at_step(0)
    else:
        if grid is None:
            raise StateError("step-indexed ambient profile requires the grid to resolve t")
        q_amb = model.ambient.at_step(min(int((t - grid.t0) / grid.dt), grid.N_t))
    r = model.seasonality.at(t) + z
    if q == sto.q_min and r >= 0.0:
        return ControlInterval(1.0, 1.0)
    if q == sto.q_max and r < 0.0:
        c_star = max(0.0, 1.0 + sto.loss_coefficient * (sto.q_max - q_amb) / r)
        return ControlInterval(min(c_star, 1.0), 1.0)
    return ControlInterval(0.0, 1.0)


def _arrival_critical_controls(r, q, dt: float, model: ModelConfig, q_amb):
    """Controls that land the arrival exactly on q_min resp. q_max.

    e_min = 1 - [mc (q - q_min) - A gamma dt (q - q_amb)] / (r dt)
    e_max = 1 + [mc (q_max - q) + A gamma dt (q - q_amb)] / (r dt)

    Valid for r != 0; both are +-inf at r = 0 where the arrival does not
    depend on the control.  Accepts arrays.
    """
    sto = model.storage
    mc = sto.heat_capacity
    ag = sto.loss_coefficient
    qf = np.asarray(q, dtype=float)
    loss = ag * dt * (qf - q_amb)
    with np.errstate(divide="ignore", invalid="ignore"):
        e_min = 1.0 - (mc * (qf - sto.q_min) - loss) / (np.asarray(r) * dt)
        e_max = 1.0 + (mc * (sto.q_max - qf) + loss) / (np.asarray(r) * dt)
    return e_min, e_max


def chi_bounds(n: int, z: float, q: float, grid: Grid3, model: ModelConfig) -> tuple[float, float]:
    """Control bounds equivalent to the arrival staying inside [q_min, q_max].

    Returns (chi_lo, chi_hi) with  a in [chi_lo, chi_hi]  iff
    arrival_point(n, z, q, a) in [q_min, q_max].  When mu_n + z = 0 the
    arrival is control-independent and the result is (-inf, +inf).
    """
    r = model.seasonality.at(grid.t_node(n)) + z
    if r == 0.0:
        return -math.inf, math.inf
    q_amb = model.ambient.at_step(n)
    e_min, e_max = _arrival_critical_controls(r, q, grid.dt, model, q_amb)
    if r > 0.0:
        return float(e_min), float(e_max)
    return float(e_max), float(e_min)


def _check_denominator(grid: Grid3, model: ModelConfig) -> float:
    sto = model.storage
    den = sto.heat_capacity - sto.loss_coefficient * grid.dt
    if den <= 0.0:
        raise StateError(
            f"m_Q c_P - A gamma dt = {den:.6g} <= 0: heat loss per step exceeds the "
            f"storage heat capacity, the Euler step is unphysical for this grid"
        )
    return den


def discharge_threshold(n: int, z: float, grid: Grid3, model: ModelConfig) -> float:
    """Temperature from which a full-rate discharge (a = 0) lands exactly on q_min."""
    sto = model.storage
    den = _check_denominator(grid, model)
    mu_z = model.seasonality.at(grid.t_node(n)) + z
    q_amb = model.ambient.at_step(n)
    return (sto.heat_capacity * sto.q_min
            - grid.dt * (sto.loss_coefficient * q_amb - mu_z)) / den


def charge_threshold(n: int, z: float, q: float, grid: Grid3, model: ModelConfig) -> float:
    """Temperature above which a full-rate charge (a = 0) would overfill the storage.

    Overproduction stronger than the local compensation rate raises the
    temperature even at the top, so only q_max itself is constrained; weaker
    overproduction is constrained above the exact-fill level q_hat.
    """
    sto = model.storage
    den = _check_denominator(grid, model)
    mu_z = model.seasonality.at(grid.t_node(n)) + z
    q_amb = model.ambient.at_step(n)
    if mu_z <= compensation_rate(q, q_amb, model):
        return sto.q_max
    return (sto.heat_capacity * sto.q_max
            - grid.dt * (sto.loss_coefficient * q_amb - mu_z)) / den


def feasible_discrete(n: int, z: float, q: float, grid: Grid3, model: ModelConfig) -> ControlInterval:
    """Discrete feasible set: continuous rules intersected with arrival feasibility.

    Always a subinterval of [0, 1] ending at 1; an empty intersection means
    the CFL safeguard was bypassed and raises.  A control-independent
    arrival (mu_n + z = 0) yields the full interval.
    """
    sto = model.storage
    if not (sto.q_min <= q <= sto.q_max):
        raise StateError(f"q = {q} outside [{sto.q_min}, {sto.q_max}]")
    r = model.seasonality.at(grid.t_node(n)) + z
    if r == 0.0:
        return ControlInterval(0.0, 1.0)
    q_amb = model.ambient.at_step(n)
    e_min, e_max = _arrival_critical_controls(r, q, grid.dt, model, q_amb)
    lo_raw, hi_raw = (e_min, e_max) if r > 0.0 else (e_max, e_min)
    lo = max(0.0, float(lo_raw))
    hi = min(1.0, float(hi_raw))
    if q == sto.q_min and r > 0.0:
        lo = 1.0  # no discharging from an empty storage
    if lo > 1.0 + _FEAS_TOL or hi < lo - _FEAS_TOL:
        raise InfeasibleControlError(
            f"empty feasible set at n={n}, z={z}, q={q}: raw bounds "
            f"[{lo_raw:.6g}, {hi_raw:.6g}] do not intersect [0, 1]; "
            f"the CFL condition was violated upstream"
        )
    return ControlInterval(min(lo, 1.0), max(hi, min(lo, 1.0)))


def feasible_lower_array(r, q, dt: float, model: ModelConfig, q_amb) -> np.ndarray:
    """Vectorized lower bound of the discrete feasible set (upper bound is 1).

    Broadcast over residual demand r and node temperatures q; used by the
    slice solver.  Matches feasible_discrete node by node.
    """
    sto = model.storage
    e_min, e_max = _arrival_critical_controls(r, q, dt, model, q_amb)
    raw = np.where(np.asarray(r) > 0.0, e_min, np.where(np.asarray(r) < 0.0, e_max, 0.0))
    lo = np.clip(raw, 0.0, None)
    lo = np.where((np.asarray(q) == sto.q_min) & (np.asarray(r) > 0.0), 1.0, lo)
    if np.any(lo > 1.0 + _FEAS_TOL):
        worst = float(np.max(lo))
        raise InfeasibleControlError(
            f"empty feasible set in slice assembly (lower bound {worst:.6g} > 1); "
            f"the CFL condition was violated upstream"
        )
    return np.minimum(lo, 1.0)
