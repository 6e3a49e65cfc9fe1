"""Cash flows: heat price curves, running cost, and the terminal settlement.

The running cost bundles the heat bought from or sold to the network with
the electricity drawn by the two pumps.  It is affine in the control, which
the solver exploits: the one-step objective is then piecewise affine and
its minimum sits on a small analytic candidate set.

Two terminal settlements are supported.  The liquidation form pays the
liquidation price for every kWh still stored above the empty level; the
penalty form additionally fines any shortfall below a critical temperature.
The numerical study runs on the liquidation form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np

from .grid import Grid3
from .model import ModelConfig, PriceParams

__all__ = [
    "TerminalSpec",
    "TerminalError",
    "price_buy",
    "price_sell",
    "running_cost",
    "stage_cost",
    "discount_integral",
    "terminal_cost",
    "check_terminal",
]


class TerminalError(ValueError):
    """Terminal settlement parameters violate their price consistency bounds."""


@dataclass(frozen=True)
class TerminalSpec:
    """Which terminal settlement applies; prices come from the model record."""

    kind: Literal["liquidation", "penalty-liquidation"] = "liquidation"


def price_buy(t, prices: PriceParams):
    """Heat buying price at time t [h] (EUR/kWh)."""
    return prices.buy_at(t)


def price_sell(t, prices: PriceParams):
    """Heat selling price, buying price minus the spread (EUR/kWh)."""
    return prices.sell_at(t)


def running_cost(t, z, a, model: ModelConfig):
    """Instantaneous cost rate psi(t, z, a) [EUR/h].

    Unsatisfied demand (z >= -mu(t)):
        (mu + z) (a [S_buy + d2 (pi_d - P_c) S_el] + d1 S_el)
    Overproduction (z < -mu(t)):
        (mu + z) (a S_sell - d1 S_el)

    The overproduction branch is negative for a > 0: revenue from selling,
    net of the ordinary-pump electricity.
    """
    mu = model.seasonality.at(t)
    r = mu + np.asarray(z, dtype=float)
    pmp = model.pumps
    d1_el = pmp.d1 * model.prices.S_el
    buy_coeff = price_buy(t, model.prices) + pmp.d2 * (pmp.pi_d - pmp.P_c) * model.prices.S_el
    sell = price_sell(t, model.prices)
    out = np.where(r >= 0.0, r * (np.asarray(a) * buy_coeff + d1_el),
                   r * (np.asarray(a) * sell - d1_el))
    if np.ndim(z) == 0 and np.ndim(a) == 0 and np.ndim(t) == 0:
        return float(out)
    return out


def discount_integral(delta: float, dt: float) -> float:
    """Integral of e^{-delta s} over one step: (1 - e^{-delta dt}) / delta, or dt at delta = 0."""
    if delta == 0.0:
        return dt
    return -math.expm1(-delta * dt) / delta


def stage_cost(n: int, z, a, grid: Grid3, model: ModelConfig):
    """Exact discounted integral of the frozen running cost over step n [EUR].

    The cost rate is sampled at the left endpoint t_n (prices and seasonal
    mean are frozen within a step), so the time integral reduces to
    psi(t_n, z, a) * (1 - e^{-delta dt}) / delta.
    """
    return running_cost(grid.t_node(n), z, a, model) * discount_integral(model.delta, grid.dt)


def terminal_cost(q, spec: TerminalSpec, model: ModelConfig):
    """Terminal settlement at storage temperature q [EUR].

    liquidation:          -S_liq m_Q c_P (q - q_min)
    penalty-liquidation:   S_pen m_Q c_P (q_crit - q)   for q <  q_crit
                          -S_liq m_Q c_P (q - q_crit)   for q >= q_crit
    """
    sto = model.storage
    pri = model.prices
    mc = sto.heat_capacity
    qa = np.asarray(q, dtype=float)
    if spec.kind == "liquidation":
        out = -pri.S_liq * mc * (qa - sto.q_min)
    elif spec.kind == "penalty-liquidation":
        if pri.S_pen is None or pri.q_crit is None:
            raise TerminalError("penalty-liquidation terminal requires prices.S_pen and prices.q_crit")
        out = np.where(qa < pri.q_crit,
                       pri.S_pen * mc * (pri.q_crit - qa),
                       -pri.S_liq * mc * (qa - pri.q_crit))
    else:
        raise TerminalError(f"unknown terminal kind: {spec.kind!r}")
    if np.ndim(q) == 0:
        return float(out)
    return out


def check_terminal(spec: TerminalSpec, model: ModelConfig) -> None:
    """Enforce the settlement price bounds at the horizon.

    Liquidating must pay less than selling at the horizon would, and the
    penalty must exceed the horizon buying price, otherwise the terminal
    settlement would dominate ordinary trading.
    """
    T = model.horizon
    sell_T = model.prices.sell_at(T)
    if spec.kind not in ("liquidation", "penalty-liquidation"):
        raise TerminalError(f"unknown terminal kind: {spec.kind!r}")
    if not model.prices.S_liq < sell_T:
        raise TerminalError(
            f"liquidation price S_liq = {model.prices.S_liq} must stay below the "
            f"horizon selling price {sell_T:.6g}"
        )
    if spec.kind == "penalty-liquidation":
        if model.prices.S_pen is None or model.prices.q_crit is None:
            raise TerminalError("penalty-liquidation terminal requires prices.S_pen and prices.q_crit")
        buy_T = model.prices.buy_at(T)
        if not model.prices.S_pen > buy_T:
            raise TerminalError(
                f"penalty price S_pen = {model.prices.S_pen} must exceed the "
                f"horizon buying price {buy_T:.6g}"
            )
        if not (model.storage.q_min <= model.prices.q_crit <= model.storage.q_max):
            raise TerminalError(
                f"q_crit = {model.prices.q_crit} must lie within "
                f"[{model.storage.q_min}, {model.storage.q_max}]"
            )
