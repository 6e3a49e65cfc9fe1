"""Space-time mesh construction and the scheme's step-size safeguards.

The mesh is equidistant in all three directions.  The demand direction is
truncated symmetrically by the c*sigma rule on the stationary standard
deviation of the mean-reverting noise.  Two conditions guard the scheme:

* positivity: dz small enough that every upwind coefficient is
  nonnegative, which makes the implicit operator an M-matrix;
* CFL: dq large enough that the one-step arrival temperature never leaves
  the cell adjacent to its departure node, so linear interpolation needs
  only the two neighbouring nodes.

Both run at construction and hard-fail; there is no silent clamping.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import ModelConfig, OUParams

__all__ = [
    "Grid3",
    "GridError",
    "PositivityReport",
    "CflReport",
    "z_bounds",
    "check_positivity",
    "check_cfl",
    "build_grid",
]


class GridError(ValueError):
    """A mesh safeguard failed; message carries the violated bound."""


@dataclass(frozen=True)
class Grid3:
    """Equidistant time x demand x temperature mesh.

    Node coordinates follow the exact formulas t_n = t0 + n dt,
    z_l = z_min + l dz, q_j = q_min + j dq, so they are bit-identical
    across runs.
    """

    N_t: int
    N_z: int
    N_q: int
    dt: float  # [h]
    dz: float  # [kW]
    dq: float  # [degC]
    z_min: float  # [kW]
    z_max: float  # [kW]
    q_min: float  # [degC]
    q_max: float  # [degC]
    t0: float = 0.0  # [h]
    T: float = 8760.0  # [h]

    def t_node(self, n):
        return self.t0 + np.asarray(n, dtype=float) * self.dt if np.ndim(n) else self.t0 + float(n) * self.dt

    def z_nodes(self) -> np.ndarray:
        return self.z_min + np.arange(self.N_z + 1) * self.dz

    def q_nodes(self) -> np.ndarray:
        return self.q_min + np.arange(self.N_q + 1) * self.dq


def z_bounds(ou: OUParams, c_eps: float) -> tuple[float, float]:
    """Symmetric truncation +-c_eps * sigma / sqrt(2 kappa) of the demand noise."""
    half = c_eps * ou.asymptotic_std()
    return -half, half


@dataclass(frozen=True)
class PositivityReport:
    ok: bool
    dz: float
    bound: float  # largest admissible dz

    def message(self) -> str:
        rel = "<=" if self.ok else ">"
        return f"dz = {self.dz:.6g} {rel} positivity bound {self.bound:.6g}"


@dataclass(frozen=True)
class CflReport:
    ok: bool
    dq: float
    required_dq: float  # smallest admissible dq
    mu_min: float
    mu_max: float

    def message(self) -> str:
        rel = ">=" if self.ok else "<"
        return (
            f"dq = {self.dq:.6g} {rel} required minimum {self.required_dq:.6g} "
            f"(seasonal extremes [{self.mu_min:.6g}, {self.mu_max:.6g}])"
        )


def check_positivity(grid: Grid3, ou: OUParams) -> PositivityReport:
    """dz <= sigma sqrt(2 kappa) / (6 kappa), non-strict at the boundary."""
    bound = ou.sigma * math.sqrt(2.0 * ou.kappa) / (6.0 * ou.kappa)
    return PositivityReport(ok=grid.dz <= bound, dz=grid.dz, bound=bound)


def seasonal_extremes(grid: Grid3, model: ModelConfig) -> tuple[float, float]:
    """Min and max of the seasonal mean sampled on the time grid.

    Grid samples, not analytic extremes, consistent with the
    piecewise-constant freezing of the mean within each step.
    """
    mu = model.seasonality.at(grid.t_node(np.arange(grid.N_t + 1)))
    return float(np.min(mu)), float(np.max(mu))


def check_cfl(grid: Grid3, model: ModelConfig) -> CflReport:
    """dq >= dt/(m_Q c_P) (max(|mu_min + z_min|, mu_max + z_max) - A gamma (q_max - Q_amb_min))."""
    sto = model.storage
    mu_min, mu_max = seasonal_extremes(grid, model)
    q_amb_min = model.ambient.min_over_steps(grid.N_t)
    transport = max(abs(mu_min + grid.z_min), mu_max + grid.z_max)
    required = (grid.dt / sto.heat_capacity) * (
        transport - sto.loss_coefficient * (sto.q_max - q_amb_min)
    )
    return CflReport(ok=grid.dq >= required, dq=grid.dq, required_dq=required,
                     mu_min=mu_min, mu_max=mu_max)


def build_grid(model: ModelConfig, N_t: int, N_z: int, N_q: int, c_eps: float = 3.0,
               t0: float = 0.0) -> Grid3:
    """Construct the mesh from cell counts and run both safeguards.

    The demand bounds come from the c*sigma rule; the temperature bounds
    from the storage record; the horizon from the model.  Raises GridError
    on any violated safeguard.
    """
    if min(N_t, N_z, N_q) < 2:
        raise GridError(f"need at least 2 cells per direction, got ({N_t}, {N_z}, {N_q})")
    zmin, zmax = z_bounds(model.ou, c_eps)
    sto = model.storage
    T = model.horizon
    grid = Grid3(
        N_t=N_t, N_z=N_z, N_q=N_q,
        dt=(T - t0) / N_t, dz=(zmax - zmin) / N_z, dq=(sto.q_max - sto.q_min) / N_q,
        z_min=zmin, z_max=zmax, q_min=sto.q_min, q_max=sto.q_max, t0=t0, T=T,
    )
    if not model.ambient.is_constant() and len(model.ambient.values) < N_t + 1:
        raise GridError(
            f"ambient profile has {len(model.ambient.values)} entries, needs one per "
            f"time-step index 0..{N_t}"
        )
    pos = check_positivity(grid, model.ou)
    if not pos.ok:
        raise GridError(f"positivity condition violated: {pos.message()}")
    cfl = check_cfl(grid, model)
    if not cfl.ok:
        raise GridError(f"CFL condition violated: {cfl.message()}")
    return grid
