"""Closed-form calibration of the loss coefficient, demand level, and pump constants.

All targets are depletion and self-discharge experiments on the storage ODE
with the ambient temperature pinned to the empty level: the loss
coefficient is chosen so an idle full storage cools to a prescribed
temperature at a prescribed time, and the demand levels so a constant draw
empties a full storage at a prescribed time.  Each formula is the exact
solution of the corresponding linear ODE, and perfect insulation is handled
by its analytic limit rather than a small-epsilon workaround.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .model import PriceParams, PumpParams, StorageParams, _price_minima

__all__ = [
    "GammaCalibration",
    "CalibrationError",
    "calibrate_gamma",
    "calibrate_L0",
    "calibrate_L",
    "pump_constant_bounds",
]


class CalibrationError(ValueError):
    """Calibration target is outside the closed form's domain."""


@dataclass(frozen=True)
class GammaCalibration:
    """Self-discharge target: temperature q_tilde reached at time t_star."""

    t_star: float  # prescribed time [h]
    q_tilde: float  # prescribed temperature at t_star [degC]


def calibrate_gamma(cal: GammaCalibration, storage: StorageParams) -> float:
    """Loss coefficient from the idle cooling experiment [kW/(m^2 K)].

    gamma = m_Q c_P / (A t_star) * log((q_max - q_min) / (q_tilde - q_min))

    q_tilde = q_max gives exactly zero (perfect insulation).
    """
    if cal.t_star <= 0:
        raise CalibrationError(f"t_star must be positive, got {cal.t_star}")
    if cal.q_tilde <= storage.q_min:
        raise CalibrationError(
            f"q_tilde = {cal.q_tilde} must exceed q_min = {storage.q_min} "
            f"(an idle storage never cools below the ambient level)"
        )
    if cal.q_tilde > storage.q_max:
        raise CalibrationError(f"q_tilde = {cal.q_tilde} exceeds q_max = {storage.q_max}")
    ratio = (storage.q_max - storage.q_min) / (cal.q_tilde - storage.q_min)
    return storage.heat_capacity / (storage.A * cal.t_star) * math.log(ratio)


def calibrate_L0(t1: float, gamma: float, storage: StorageParams) -> float:
    """Constant demand that empties a full storage exactly at t1 [kW].

    L0 = A gamma (q_max - q_min) / (e^{A1} - 1),  A1 = A gamma t1 / (m_Q c_P);
    the gamma -> 0 limit is m_Q c_P (q_max - q_min) / t1.
    """
    if t1 <= 0:
        raise CalibrationError(f"t1 must be positive, got {t1}")
    span = storage.q_max - storage.q_min
    ag = storage.A * gamma
    if ag == 0.0:
        return storage.heat_capacity * span / t1
    a1 = ag * t1 / storage.heat_capacity
    return ag * span / math.expm1(a1)


def calibrate_L(t2: float, L0: float, gamma: float, storage: StorageParams) -> float:
    """Seasonal amplitude so the peak demand L0 + L empties a full storage at t2 [kW]."""
    if t2 <= 0:
        raise CalibrationError(f"t2 must be positive, got {t2}")
    span = storage.q_max - storage.q_min
    ag = storage.A * gamma
    if ag == 0.0:
        peak = storage.heat_capacity * span / t2
    else:
        a2 = ag * t2 / storage.heat_capacity
        peak = ag * span / math.expm1(a2)
    L = peak - L0
    if L <= 0:
        raise CalibrationError(
            f"depletion time t2 = {t2} is too large relative to the base-demand "
            f"target: peak demand {peak:.6g} does not exceed L0 = {L0:.6g}"
        )
    return L


def pump_constant_bounds(prices: PriceParams, pumps: PumpParams, T: float) -> tuple[float, float]:
    """Admissible upper bounds (d1_max, d2_max) for the pump cost constants.

    d1_max = min_t S_sell / S_el keeps the ordinary pump cheaper than the
    selling revenue it moves; d2_max = (min_t S_buy - d1 S_el) / (S_el (pi_d - P_c))
    keeps the heat pump cheaper than the heat it buys.  The minima are taken
    over [0, T] on a fine sampling grid.  A nonpositive bound means the
    corresponding condition cannot hold for any positive constant; it is
    reported as-is, not raised.
    """
    min_buy, min_sell = _price_minima(prices, T)
    d1_max = min_sell / prices.S_el
    d2_max = (min_buy - pumps.d1 * prices.S_el) / (prices.S_el * (pumps.pi_d - pumps.P_c))
    return d1_max, d2_max
