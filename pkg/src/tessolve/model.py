"""Physical and economic parameters of the heating system.

All records are frozen dataclasses: once validated, a configuration is
immutable and safe to share across workers.  Units are annotated per field
and no conversion is performed anywhere; inputs must already be expressed
in those units.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

__all__ = [
    "OUParams",
    "SeasonalityParams",
    "StorageParams",
    "AmbientProfile",
    "PriceParams",
    "PumpParams",
    "ModelConfig",
    "ValidatedModel",
    "ValidationError",
    "ConfigError",
    "validate",
    "energy_capacity",
    "model_from_dict",
    "model_to_dict",
    "load_document",
    "config_sha256",
]


class ValidationError(ValueError):
    """One or more parameter invariants failed; message lists each violation."""

    def __init__(self, violations: Sequence[str]):
        self.violations = tuple(violations)
        super().__init__("invalid model configuration:\n  - " + "\n  - ".join(violations))


class ConfigError(ValueError):
    """Malformed configuration document (unknown key, wrong type, missing field)."""


@dataclass(frozen=True)
class OUParams:
    """Mean-reverting noise driving the deseasonalized residual demand."""

    kappa: float  # mean-reversion speed [1/h]
    sigma: float  # volatility [kW/h^0.5]
    z0: float = 0.0  # initial deseasonalized demand [kW]

    def asymptotic_std(self) -> float:
        """Stationary standard deviation, sigma / sqrt(2 kappa)."""
        return self.sigma / math.sqrt(2.0 * self.kappa)


@dataclass(frozen=True)
class SeasonalityComponent:
    L: float  # amplitude [kW]
    rho: float  # period [h]
    t_ref: float = 0.0  # reference time [h]


@dataclass(frozen=True)
class SeasonalityParams:
    """Deterministic long-term mean of the residual demand.

    Evaluates to  L0 + sum_i L_i cos(2 pi (t - t_i) / rho_i).  The single
    component case covers the yearly cosine used throughout the numerical
    study; extra components model e.g. half-day peaks.
    """

    L0: float  # long-term mean [kW]
    components: tuple[SeasonalityComponent, ...] = ()

    def at(self, t):
        """Seasonal mean at time t [h]; accepts scalars or numpy arrays."""
        out = self.L0 + np.zeros_like(np.asarray(t, dtype=float))
        for c in self.components:
            out = out + c.L * np.cos(2.0 * np.pi * (np.asarray(t, dtype=float) - c.t_ref) / c.rho)
        if np.ndim(t) == 0:
            return float(out)
        return out


@dataclass(frozen=True)
class StorageParams:
    """Water-tank storage physics."""

    m_Q: float  # water mass [kg]
    c_P: float = 0.0011628  # specific heat capacity [kWh/(kg K)]
    A: float = 0.0  # surface area [m^2]
    gamma: float = 0.0  # heat-transfer coefficient [kW/(m^2 K)]
    q_min: float = 25.0  # minimum temperature [degC]
    q_max: float = 85.0  # maximum temperature [degC]
    r_d: float | None = None  # cylinder radius [m], informational
    h0: float | None = None  # cylinder height [m], informational

    @property
    def heat_capacity(self) -> float:
        """Total heat capacity m_Q * c_P [kWh/K]."""
        return self.m_Q * self.c_P

    @property
    def loss_coefficient(self) -> float:
        """Surface loss coefficient A * gamma [kW/K]."""
        return self.A * self.gamma


@dataclass(frozen=True)
class AmbientProfile:
    """Piecewise-constant ambient temperature around the storage [degC].

    Either a single scalar (constant profile) or one value per time step.
    An array profile must cover every step index of the grid it is used
    with; this is checked at grid construction, not here.
    """

    values: float | tuple[float, ...] = 25.0

    def is_constant(self) -> bool:
        return not isinstance(self.values, tuple)

    def at_step(self, n) -> float:
        if self.is_constant():
            if np.ndim(n) == 0:
                return float(self.values)
            return np.full(np.shape(n), float(self.values))
        vals = self.values
        if np.ndim(n) == 0:
            return float(vals[min(int(n), len(vals) - 1)])
        idx = np.minimum(np.asarray(n, dtype=int), len(vals) - 1)
        return np.asarray(vals, dtype=float)[idx]

    def min_over_steps(self, n_steps: int) -> float:
        if self.is_constant():
            return float(self.values)
        return float(min(self.values[: n_steps + 1]))

    def extremes(self) -> tuple[float, float]:
        if self.is_constant():
            v = float(self.values)
            return v, v
        return float(min(self.values)), float(max(self.values))


@dataclass(frozen=True)
class PriceComponent:
    L_S: float  # amplitude [EUR/kWh]
    rho_S: float  # period [h]
    t_S: float = 0.0  # reference time [h]


@dataclass(frozen=True)
class PriceParams:
    """Heat bid-ask price curves and the fixed electricity tariff.

    Buying price is a cosine sum around L0_S; selling price is the buying
    price minus the spread xi, which rules out buy-low/sell-high arbitrage
    within a single instant.
    """

    L0_S: float  # long-term mean buying price [EUR/kWh]
    components: tuple[PriceComponent, ...] = ()
    xi: float = 0.02  # bid-ask spread [EUR/kWh]
    S_el: float = 0.33  # electricity tariff [EUR/kWh]
    S_liq: float = 0.004  # liquidation price [EUR/kWh]
    S_pen: float | None = None  # penalty price [EUR/kWh], penalty terminal only
    q_crit: float | None = None  # critical terminal temperature [degC], penalty terminal only

    def buy_at(self, t):
        """Buying price at time t [h]; accepts scalars or numpy arrays."""
        out = self.L0_S + np.zeros_like(np.asarray(t, dtype=float))
        for c in self.components:
            out = out + c.L_S * np.cos(2.0 * np.pi * (np.asarray(t, dtype=float) - c.t_S) / c.rho_S)
        if np.ndim(t) == 0:
            return float(out)
        return out

    def sell_at(self, t):
        out = self.buy_at(t)
        if np.ndim(t) == 0:
            return float(out) - self.xi
        return out - self.xi


@dataclass(frozen=True)
class PumpParams:
    """Pump cost constants and the temperature chain they must respect."""

    d1: float = 0.01  # flow-rate penalty [-]
    d2: float = 0.012  # temperature-lift penalty [1/K]
    pi_d: float = 25.0  # heat-pump outlet temperature [degC]
    pi_min: float = 22.0  # minimum internal-storage temperature [degC]
    P_c: float = 20.0  # connecting-pipe temperature [degC]


@dataclass(frozen=True)
class ModelConfig:
    """Complete parameter record for one solve."""

    ou: OUParams
    seasonality: SeasonalityParams
    storage: StorageParams
    ambient: AmbientProfile
    prices: PriceParams
    pumps: PumpParams
    delta: float = 0.0  # discount rate [1/h]
    horizon: float = 8760.0  # planning horizon T [h]


@dataclass(frozen=True)
class ValidatedModel:
    """A ModelConfig that passed `validate`, plus non-fatal warnings."""

    config: ModelConfig
    warnings: tuple[str, ...] = ()


def energy_capacity(storage: StorageParams) -> float:
    """Maximum storable energy m_Q c_P (q_max - q_min) [kWh]."""
    return storage.m_Q * storage.c_P * (storage.q_max - storage.q_min)


def _price_minima(prices: PriceParams, horizon: float, samples: int = 20001) -> tuple[float, float]:
    """(min buy, min sell) over [0, horizon], sampled on a fine uniform grid."""
    t = np.linspace(0.0, horizon, samples)
    buy = prices.buy_at(t)
    return float(np.min(buy)), float(np.min(buy) - prices.xi)


def validate(config: ModelConfig | ValidatedModel) -> ValidatedModel:
    """Check every cross-parameter invariant; idempotent on validated models.

    Hard failures collect into a single ValidationError listing each
    violated invariant with the offending field and bound.  The pump cost
    conditions against the heat price minima are special-cased: the
    selling-price bound degenerates to zero whenever the seasonal amplitude
    reaches the mean price, and the published parameter set itself sits
    above the buying-price bound, so those two are demoted to warnings and
    only d1 * S_el < min buy price (which keeps the heat-pump route viable
    at all) is enforced.
    """
    if isinstance(config, ValidatedModel):
        return config

    bad: list[str] = []
    warn: list[str] = []
    ou, sea, sto, amb, pri, pmp = (
        config.ou,
        config.seasonality,
        config.storage,
        config.ambient,
        config.prices,
        config.pumps,
    )

    if not ou.kappa > 0:
        bad.append(f"ou.kappa must be > 0 (got {ou.kappa})")
    if not ou.sigma > 0:
        bad.append(f"ou.sigma must be > 0 (got {ou.sigma})")
    for i, c in enumerate(sea.components):
        if not c.rho > 0:
            bad.append(f"seasonality.components[{i}].rho must be > 0 (got {c.rho})")
    if not sto.m_Q > 0:
        bad.append(f"storage.m_Q must be > 0 (got {sto.m_Q})")
    if not sto.c_P > 0:
        bad.append(f"storage.c_P must be > 0 (got {sto.c_P})")
    if not sto.A > 0:
        bad.append(f"storage.A must be > 0 (got {sto.A})")
    if sto.gamma < 0:
        bad.append(f"storage.gamma must be >= 0 (got {sto.gamma})")
    if not sto.q_min < sto.q_max:
        bad.append(f"storage.q_min < q_max required (got {sto.q_min} >= {sto.q_max})")
    for i, c in enumerate(pri.components):
        if not c.rho_S > 0:
            bad.append(f"prices.components[{i}].rho_S must be > 0 (got {c.rho_S})")
    if not pri.xi > 0:
        bad.append(f"prices.xi must be > 0 (got {pri.xi})")
    if not pri.S_el > 0:
        bad.append(f"prices.S_el must be > 0 (got {pri.S_el})")
    if not pmp.d1 > 0:
        bad.append(f"pumps.d1 must be > 0 (got {pmp.d1})")
    if not pmp.d2 > 0:
        bad.append(f"pumps.d2 must be > 0 (got {pmp.d2})")
    if not (sto.q_max > pmp.pi_d > pmp.pi_min > pmp.P_c):
        bad.append(
            "temperature chain q_max > pi_d > pi_min > P_c must hold strictly "
            f"(got {sto.q_max} > {pmp.pi_d} > {pmp.pi_min} > {pmp.P_c})"
        )
    if not config.delta >= 0:
        bad.append(f"delta must be >= 0 (got {config.delta})")
    if not config.horizon > 0:
        bad.append(f"horizon must be > 0 (got {config.horizon})")

    # The scheme's feasible sets can empty out when the ambient temperature
    # leaves the storage band: pure loss then pushes the boundary states out
    # of [q_min, q_max] with no control able to stop it.
    amb_lo, amb_hi = amb.extremes()
    if amb_lo < sto.q_min or amb_hi > sto.q_max:
        bad.append(
            f"ambient temperature must stay within [q_min, q_max] = "
            f"[{sto.q_min}, {sto.q_max}] (got range [{amb_lo}, {amb_hi}])"
        )

    if not bad:
        min_buy, min_sell = _price_minima(pri, config.horizon)
        if pmp.d1 * pri.S_el >= min_buy:
            bad.append(
                f"pumps.d1 too large: d1*S_el = {pmp.d1 * pri.S_el:.6g} must stay below "
                f"the minimum buying price {min_buy:.6g} for the heat-pump bound to admit d2 > 0"
            )
        if min_sell <= 0:
            warn.append(
                f"minimum selling price over the horizon is {min_sell:.6g} <= 0; the "
                f"ordinary-pump bound d1*S_el < min sell price is vacuous and not enforced"
            )
        elif pmp.d1 * pri.S_el >= min_sell:
            bad.append(
                f"pumps.d1 too large: d1*S_el = {pmp.d1 * pri.S_el:.6g} must stay below "
                f"the minimum selling price {min_sell:.6g}"
            )
        heat_pump_cost = (pmp.d1 + pmp.d2 * (pmp.pi_d - pmp.P_c)) * pri.S_el
        if heat_pump_cost >= min_buy:
            warn.append(
                f"heat-pump electricity cost (d1 + d2*(pi_d - P_c))*S_el = {heat_pump_cost:.6g} "
                f"meets or exceeds the minimum buying price {min_buy:.6g}; buying near the price "
                f"trough costs more in electricity than the heat is worth"
            )

    if bad:
        raise ValidationError(bad)
    return ValidatedModel(config=config, warnings=tuple(warn))


# ---------------------------------------------------------------------------
# JSON ingestion.  The document mirrors the dataclass fields; unknown keys are
# rejected so typos fail loudly instead of silently falling back to defaults.
# ---------------------------------------------------------------------------


def _take(d: dict, section: str, known: Iterable[str], required: Iterable[str]) -> dict:
    if not isinstance(d, dict):
        raise ConfigError(f"section '{section}' must be an object, got {type(d).__name__}")
    known = set(known)
    unknown = set(d) - known
    if unknown:
        raise ConfigError(f"unknown key(s) in '{section}': {', '.join(sorted(unknown))}")
    missing = set(required) - set(d)
    if missing:
        raise ConfigError(f"missing key(s) in '{section}': {', '.join(sorted(missing))}")
    return d


def model_from_dict(d: dict[str, Any]) -> ModelConfig:
    """Build a ModelConfig from a parsed JSON object (strict keys)."""
    _take(d, "model", ["ou", "seasonality", "storage", "ambient", "prices", "pumps", "delta", "horizon"],
          ["ou", "seasonality", "storage", "prices", "pumps"])

    o = _take(d["ou"], "model.ou", ["kappa", "sigma", "z0"], ["kappa", "sigma"])
    ou = OUParams(kappa=float(o["kappa"]), sigma=float(o["sigma"]), z0=float(o.get("z0", 0.0)))

    s = _take(d["seasonality"], "model.seasonality", ["L0", "components"], ["L0"])
    comps = []
    for i, c in enumerate(s.get("components", [])):
        c = _take(c, f"model.seasonality.components[{i}]", ["L", "rho", "t_ref"], ["L", "rho"])
        comps.append(SeasonalityComponent(L=float(c["L"]), rho=float(c["rho"]), t_ref=float(c.get("t_ref", 0.0))))
    sea = SeasonalityParams(L0=float(s["L0"]), components=tuple(comps))

    st = _take(d["storage"], "model.storage",
               ["m_Q", "c_P", "A", "gamma", "q_min", "q_max", "r_d", "h0"], ["m_Q", "A", "gamma"])
    sto = StorageParams(
        m_Q=float(st["m_Q"]),
        c_P=float(st.get("c_P", 0.0011628)),
        A=float(st["A"]),
        gamma=float(st["gamma"]),
        q_min=float(st.get("q_min", 25.0)),
        q_max=float(st.get("q_max", 85.0)),
        r_d=None if st.get("r_d") is None else float(st["r_d"]),
        h0=None if st.get("h0") is None else float(st["h0"]),
    )

    araw = d.get("ambient", sto.q_min)
    if isinstance(araw, (list, tuple)):
        amb = AmbientProfile(values=tuple(float(v) for v in araw))
    elif isinstance(araw, (int, float)):
        amb = AmbientProfile(values=float(araw))
    else:
        raise ConfigError("model.ambient must be a number or a list of numbers")

    p = _take(d["prices"], "model.prices",
              ["L0_S", "components", "xi", "S_el", "S_liq", "S_pen", "q_crit"], ["L0_S"])
    pcomps = []
    for i, c in enumerate(p.get("components", [])):
        c = _take(c, f"model.prices.components[{i}]", ["L_S", "rho_S", "t_S"], ["L_S", "rho_S"])
        pcomps.append(PriceComponent(L_S=float(c["L_S"]), rho_S=float(c["rho_S"]), t_S=float(c.get("t_S", 0.0))))
    pri = PriceParams(
        L0_S=float(p["L0_S"]),
        components=tuple(pcomps),
        xi=float(p.get("xi", 0.02)),
        S_el=float(p.get("S_el", 0.33)),
        S_liq=float(p.get("S_liq", 0.004)),
        S_pen=None if p.get("S_pen") is None else float(p["S_pen"]),
        q_crit=None if p.get("q_crit") is None else float(p["q_crit"]),
    )

    pm = _take(d["pumps"], "model.pumps", ["d1", "d2", "pi_d", "pi_min", "P_c"], ["d1", "d2"])
    pmp = PumpParams(
        d1=float(pm["d1"]),
        d2=float(pm["d2"]),
        pi_d=float(pm.get("pi_d", 25.0)),
        pi_min=float(pm.get("pi_min", 22.0)),
        P_c=float(pm.get("P_c", 20.0)),
    )

    return ModelConfig(
        ou=ou, seasonality=sea, storage=sto, ambient=amb, prices=pri, pumps=pmp,
        delta=float(d.get("delta", 0.0)), horizon=float(d.get("horizon", 8760.0)),
    )


def model_to_dict(m: ModelConfig) -> dict[str, Any]:
    """Inverse of model_from_dict (drops None-valued optional fields)."""
    d: dict[str, Any] = {
        "ou": {"kappa": m.ou.kappa, "sigma": m.ou.sigma, "z0": m.ou.z0},
        "seasonality": {
            "L0": m.seasonality.L0,
            "components": [{"L": c.L, "rho": c.rho, "t_ref": c.t_ref} for c in m.seasonality.components],
        },
        "storage": {
            "m_Q": m.storage.m_Q, "c_P": m.storage.c_P, "A": m.storage.A, "gamma": m.storage.gamma,
            "q_min": m.storage.q_min, "q_max": m.storage.q_max,
        },
        "ambient": list(m.ambient.values) if isinstance(m.ambient.values, tuple) else m.ambient.values,
        "prices": {
            "L0_S": m.prices.L0_S,
            "components": [{"L_S": c.L_S, "rho_S": c.rho_S, "t_S": c.t_S} for c in m.prices.components],
            "xi": m.prices.xi, "S_el": m.prices.S_el, "S_liq": m.prices.S_liq,
        },
        "pumps": {
            "d1": m.pumps.d1, "d2": m.pumps.d2, "pi_d": m.pumps.pi_d,
            "pi_min": m.pumps.pi_min, "P_c": m.pumps.P_c,
        },
        "delta": m.delta,
        "horizon": m.horizon,
    }
    if m.storage.r_d is not None:
        d["storage"]["r_d"] = m.storage.r_d
    if m.storage.h0 is not None:
        d["storage"]["h0"] = m.storage.h0
    if m.prices.S_pen is not None:
        d["prices"]["S_pen"] = m.prices.S_pen
    if m.prices.q_crit is not None:
        d["prices"]["q_crit"] = m.prices.q_crit
    return d


_DOCUMENT_SECTIONS = ["model", "grid", "terminal", "calibration"]


def load_document(path: str | Path) -> dict[str, Any]:
    """Load and structurally check a full configuration document."""
    try:
        raw = json.loads(Path(path).read_text())
    except OSError as e:
        raise ConfigError(f"cannot read config file: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"config is not valid JSON: {e}") from e
    if not isinstance(raw, dict):
        raise ConfigError("config document root must be an object")
    unknown = set(raw) - set(_DOCUMENT_SECTIONS)
    if unknown:
        raise ConfigError(f"unknown top-level section(s): {', '.join(sorted(unknown))}")
    if "model" not in raw:
        raise ConfigError("missing top-level section: model")
    return raw


def config_sha256(doc: dict[str, Any]) -> str:
    """Content hash of a configuration document (canonical JSON)."""
    import hashlib

    blob = json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()
