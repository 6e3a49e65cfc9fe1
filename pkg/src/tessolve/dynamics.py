"""State dynamics: seasonal demand, mean-reverting noise, storage temperature.

The residual demand splits into a deterministic seasonal mean and a
zero-mean Ornstein-Uhlenbeck deviation.  Only the storage temperature is
controlled; it follows a loss ODE driven by the share of residual demand
routed to the storage.  Within one time step the seasonal mean and the
ambient temperature are frozen at the left endpoint, which makes the
one-step Euler arrival point exact to first order and affine in the
control.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grid import Grid3
from .model import ModelConfig, OUParams, SeasonalityParams

__all__ = [
    "StateX",
    "seasonality_at",
    "residual_demand",
    "ou_exact_step",
    "storage_drift",
    "arrival_point",
]


@dataclass(frozen=True)
class StateX:
    """State of the controlled system: demand deviation and storage level."""

    z: float  # deseasonalized residual demand [kW]
    q: float  # storage temperature [degC]


def seasonality_at(t, s: SeasonalityParams):
    """Seasonal mean residual demand at time t [h] (kW)."""
    return s.at(t)


def residual_demand(t, z, s: SeasonalityParams):
    """Residual demand r = mu(t) + z; r > 0 is unsatisfied demand, r < 0 overproduction."""
    return s.at(t) + z


def ou_exact_step(z, dt: float, noise, ou: OUParams):
    """One exact transition of the zero-mean OU process.

    z' = z e^{-kappa dt} + sigma sqrt((1 - e^{-2 kappa dt}) / (2 kappa)) * noise
    with `noise` a standard normal draw.  Exact in distribution for any dt,
    so simulation accuracy is independent of the step size.
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    decay = math.exp(-ou.kappa * dt)
    std = ou.sigma * math.sqrt(-math.expm1(-2.0 * ou.kappa * dt) / (2.0 * ou.kappa))
    return z * decay + std * noise


def storage_drift(n: int, z, q, a, grid: Grid3, model: ModelConfig):
    """Right-hand side of the storage temperature ODE at step n [degC/h].

    dq/dt = -[(1 - a)(mu_n + z) + A gamma (q - Q_amb_n)] / (m_Q c_P)
    """
    sto = model.storage
    mu_n = model.seasonality.at(grid.t_node(n))
    q_amb = model.ambient.at_step(n)
    return -((1.0 - a) * (mu_n + z) + sto.loss_coefficient * (q - q_amb)) / sto.heat_capacity


def arrival_point(n: int, z, q, a, grid: Grid3, model: ModelConfig):
    """Euler arrival temperature after one step from (z, q) under control a.

    q' = (1 - A gamma dt / (m_Q c_P)) q + dt/(m_Q c_P) [(a - 1)(mu_n + z) + A gamma Q_amb_n]

    Feasibility of q' within [q_min, q_max] is the constraints module's
    concern; this function just evaluates the affine map.
    """
    sto = model.storage
    mc = sto.heat_capacity
    ag = sto.loss_coefficient
    mu_n = model.seasonality.at(grid.t_node(n))
    q_amb = model.ambient.at_step(n)
    return (1.0 - ag * grid.dt / mc) * q + (grid.dt / mc) * ((a - 1.0) * (mu_n + z) + ag * q_amb)
