"""Backward dynamic-programming solver for the storage control problem.

One backward step per time slice, in four stages:

1. every grid node picks its optimal control by minimizing the one-step
   objective  stage cost + e^{-delta dt} * (interpolated next-slice value at
   the Euler arrival temperature)  over the discrete feasible set.  Both
   terms are affine in the control between temperature-grid crossings, so
   the minimum is attained on a small analytic candidate set: the feasible
   endpoints plus the controls whose arrival lands exactly on the three
   stencil nodes.  Ties within 1e-12 resolve to the smallest feasible
   control, preferring the storage over the network, which makes policies
   reproducible;
2. the right-hand side couples the chosen interpolation weights with the
   stage cost;
3. for every temperature index an implicit upwind step in the demand
   direction is solved as one tridiagonal system (the matrix is shared by
   all temperature columns and all time steps);
4. the demand boundary rows use one-sided first-order convection with the
   freshly solved interior values, and the four corners extrapolate
   linearly.

The interpolation weights are nonnegative under the CFL condition and the
system matrix is strictly diagonally dominant under the positivity
condition, so the scheme is monotone and the tridiagonal elimination is
stable without pivoting.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .costs import TerminalSpec, discount_integral, terminal_cost
from .constraints import InfeasibleControlError, feasible_lower_array
from .grid import Grid3
from .model import ModelConfig, OUParams

__all__ = [
    "UpwindCoeffs",
    "InterpWeights",
    "ValueCube",
    "PolicyCube",
    "NumericalError",
    "ARGMIN_TIE_TOL",
    "upwind_coeffs",
    "z_boundary_coeffs",
    "tridiagonal_bands",
    "interp_weights",
    "control_candidates",
    "optimal_control",
    "thomas_solve",
    "solve_time_slice",
    "backward_recursion",
]

ARGMIN_TIE_TOL = 1e-12


class NumericalError(RuntimeError):
    """Scheme guarantee broken at runtime (negative coefficient, bad pivot, CFL)."""


@dataclass(frozen=True)
class UpwindCoeffs:
    """Per-node coefficients of the discretized demand operator [1/h]."""

    D: float  # weight of the left neighbour
    F: float  # weight of the node itself, F = D + H + delta
    H: float  # weight of the right neighbour


@dataclass(frozen=True)
class InterpWeights:
    """Linear interpolation stencil for the arrival temperature."""

    b: float  # signed Courant number, arrival = q_j - b dq
    A: float  # weight of node j-1
    B: float  # weight of node j
    C: float  # weight of node j+1


@dataclass
class ValueCube:
    """Value function on every slice: values[n, l, j], shape (N_t+1, N_z+1, N_q+1)."""

    grid: Grid3
    values: np.ndarray


@dataclass
class PolicyCube:
    """Optimal control per node and step: a_star[n, l, j], shape (N_t, N_z+1, N_q+1)."""

    grid: Grid3
    a_star: np.ndarray


def upwind_coeffs(l: int, grid: Grid3, ou: OUParams, delta: float) -> UpwindCoeffs:
    """Interior upwind/diffusion coefficients at demand index l.

    The convection speed is theta_l = -kappa z_l; its sign selects a
    backward or forward difference.  Under the positivity bound on dz all
    three coefficients are nonnegative.
    """
    if not 1 <= l <= grid.N_z - 1:
        raise ValueError(f"l = {l} is not an interior demand index (1..{grid.N_z - 1})")
    z_l = grid.z_min + l * grid.dz
    theta = -ou.kappa * z_l
    diff = ou.sigma**2 / (2.0 * grid.dz**2)
    if theta >= 0.0:
        D = diff - theta / grid.dz
        H = diff
    else:
        D = diff
        H = diff + theta / grid.dz
    if D < 0.0 or H < 0.0:
        raise NumericalError(
            f"negative upwind coefficient at l={l} (D={D:.6g}, H={H:.6g}); "
            f"positivity condition not satisfied"
        )
    return UpwindCoeffs(D=D, F=D + H + delta, H=H)


def z_boundary_coeffs(grid: Grid3, ou: OUParams, delta: float) -> tuple[float, float, float, float]:
    """One-sided convection coefficients (H_0, F_0, D_N, F_N) at the demand edges.

    The diffusion term is dropped at the truncation boundaries; the
    convection speed points inward on both sides, so a forward difference
    applies at z_min and a backward one at z_max.
    """
    theta0 = -ou.kappa * grid.z_min
    thetaN = -ou.kappa * grid.z_max
    return theta0 / grid.dz, theta0 / grid.dz + delta, -thetaN / grid.dz, delta - thetaN / grid.dz


def tridiagonal_bands(grid: Grid3, ou: OUParams, delta: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Bands (lower, diag, upper) of the implicit system over interior demand rows.

    The first and last rows fold in the vanishing-second-derivative boundary
    condition via linear extrapolation of the edge values, which modifies
    their diagonal and single off-diagonal entry.
    """
    li = np.arange(1, grid.N_z)
    zl = grid.z_min + li * grid.dz
    theta = -ou.kappa * zl
    diff = ou.sigma**2 / (2.0 * grid.dz**2)
    D = np.where(theta >= 0.0, diff - theta / grid.dz, diff)
    H = np.where(theta >= 0.0, diff, diff + theta / grid.dz)
    F = D + H + delta
    dt = grid.dt
    diag = 1.0 + dt * F
    lower_full = -dt * D
    upper_full = -dt * H
    diag[0] = 1.0 + dt * F[0] - 2.0 * dt * D[0]
    upper_full[0] = dt * (D[0] - H[0])
    diag[-1] = 1.0 + dt * F[-1] - 2.0 * dt * H[-1]
    lower_full[-1] = -dt * (D[-1] - H[-1])
    return lower_full[1:], diag, upper_full[:-1]


def thomas_solve(diag: np.ndarray, lower: np.ndarray, upper: np.ndarray,
                 rhs: np.ndarray) -> np.ndarray:
    """Direct tridiagonal elimination; stable without pivoting for dominant systems.

    `diag` has n entries, `lower`/`upper` n-1 (sub- and super-diagonal),
    `rhs` is (n,) or (n, m) for multiple right-hand sides.
    """
    diag = np.asarray(diag, dtype=float)
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    n = diag.shape[0]
    if lower.shape[0] != n - 1 or upper.shape[0] != n - 1 or rhs.shape[0] != n:
        raise ValueError("band/rhs shapes inconsistent with system size")
    cp = np.empty(n - 1)
    piv = diag[0]
    if piv == 0.0 or not np.isfinite(piv):
        raise NumericalError("zero pivot in tridiagonal elimination at row 0")
    dp = np.empty_like(rhs)
    dp[0] = rhs[0] / piv
    for i in range(1, n):
        cp[i - 1] = upper[i - 1] / piv
        piv = diag[i] - lower[i - 1] * cp[i - 1]
        if piv == 0.0 or not np.isfinite(piv):
            raise NumericalError(f"zero pivot in tridiagonal elimination at row {i}")
        dp[i] = (rhs[i] - lower[i - 1] * dp[i - 1]) / piv
    x = np.empty_like(rhs)
    x[-1] = dp[-1]
    for i in range(n - 2, -1, -1):
        x[i] = dp[i] - cp[i] * x[i + 1]
    return x


# ---------------------------------------------------------------------------
# Shared affine building blocks.  The scalar reference operations and the
# vectorized slice solver both go through these, so a policy recomputed node
# by node is bit-identical to the one assembled in bulk.
# ---------------------------------------------------------------------------


def _arrival_affine(r, q, dt: float, model: ModelConfig, q_amb):
    """Arrival temperature as base + slope * a."""
    mc = model.storage.heat_capacity
    ag = model.storage.loss_coefficient
    base = np.asarray(q, dtype=float) - (dt / mc) * (np.asarray(r) + ag * (np.asarray(q) - q_amb))
    slope = dt * np.asarray(r) / mc
    return base, slope


def _stage_affine(t, r, model: ModelConfig):
    """Running-cost rate as psi0 + psi1 * a (frozen at time t)."""
    pri, pmp = model.prices, model.pumps
    d1_el = pmp.d1 * pri.S_el
    buy_coeff = pri.buy_at(t) + pmp.d2 * (pmp.pi_d - pmp.P_c) * pri.S_el
    sell = pri.sell_at(t)
    r = np.asarray(r, dtype=float)
    psi0 = np.where(r >= 0.0, r * d1_el, -r * d1_el)
    psi1 = np.where(r >= 0.0, r * buy_coeff, r * sell)
    return psi0, psi1


def _candidate_controls(lo, base, slope, q_m, q_c, q_p):
    """Stack of argmin candidates along the last axis: endpoints and crossings."""
    lo = np.asarray(lo, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        c_m = (q_m - base) / slope
        c_0 = (q_c - base) / slope
        c_p = (q_p - base) / slope
    cands = np.stack([lo, np.ones_like(lo), c_m, c_0, c_p], axis=-1)
    cands = np.where(np.isfinite(cands), cands, lo[..., None])
    return np.clip(cands, lo[..., None], 1.0)


def _interp_terms(b):
    """Stencil weights (A, B, C) from the signed Courant number."""
    ab = np.abs(b)
    return 0.5 * (b + ab), 1.0 - ab, 0.5 * (ab - b)


def _pick_smallest_tied(obj, cands):
    """Smallest candidate control whose objective is within the tie tolerance."""
    omin = obj.min(axis=-1, keepdims=True)
    return np.where(obj <= omin + ARGMIN_TIE_TOL, cands, np.inf).min(axis=-1), omin[..., 0]


def interp_weights(n: int, l: int, j: int, a: float, grid: Grid3, model: ModelConfig) -> InterpWeights:
    """Interpolation stencil of the arrival temperature from node (l, j) under control a.

    b = dt / (m_Q c_P dq) [(1 - a)(mu_n + z_l) + A gamma (q_j - Q_amb_n)]

    At the temperature edges the sign of b is guaranteed by feasibility
    (arrival cannot leave the band), so the stencil degenerates to two
    points there on its own.  |b| > 1 means the arrival left the adjacent
    cell and the CFL condition is broken.
    """
    sto = model.storage
    z_l = grid.z_min + l * grid.dz
    q_j = grid.q_min + j * grid.dq
    r = model.seasonality.at(grid.t_node(n)) + z_l
    q_amb = model.ambient.at_step(n)
    b = grid.dt / (sto.heat_capacity * grid.dq) * (
        (1.0 - a) * r + sto.loss_coefficient * (q_j - q_amb)
    )
    if abs(b) > 1.0 + 1e-9:
        raise NumericalError(
            f"|b| = {abs(b):.6g} > 1 at n={n}, l={l}, j={j}, a={a}: CFL condition violated"
        )
    b = float(np.clip(b, -1.0, 1.0))
    A, B, C = _interp_terms(b)
    return InterpWeights(b=b, A=float(A), B=float(B), C=float(C))


def control_candidates(n: int, l: int, j: int, grid: Grid3, model: ModelConfig) -> np.ndarray:
    """Argmin candidates at one node: feasible endpoints plus stencil crossings."""
    z_l = grid.z_min + l * grid.dz
    q_c = grid.q_min + j * grid.dq
    q_m = grid.q_min + max(j - 1, 0) * grid.dq
    q_p = grid.q_min + min(j + 1, grid.N_q) * grid.dq
    r = model.seasonality.at(grid.t_node(n)) + z_l
    q_amb = model.ambient.at_step(n)
    lo = feasible_lower_array(r, q_c, grid.dt, model, q_amb)
    base, slope = _arrival_affine(r, q_c, grid.dt, model, q_amb)
    return _candidate_controls(lo, base, slope, q_m, q_c, q_p)


def optimal_control(n: int, l: int, j: int, V_next: np.ndarray, grid: Grid3,
                    model: ModelConfig) -> tuple[float, float]:
    """Optimal control and objective at node (l, j) against the completed slice n+1.

    The objective (stage cost plus discounted interpolated continuation) is
    piecewise affine in the control with kinks exactly at the stencil
    crossings, so scanning the candidate set is exact.
    """
    z_l = grid.z_min + l * grid.dz
    q_c = grid.q_min + j * grid.dq
    jm, jp = max(j - 1, 0), min(j + 1, grid.N_q)
    q_m = grid.q_min + jm * grid.dq
    q_p = grid.q_min + jp * grid.dq
    t_n = grid.t_node(n)
    r = model.seasonality.at(t_n) + z_l
    q_amb = model.ambient.at_step(n)
    lo = feasible_lower_array(r, q_c, grid.dt, model, q_amb)
    base, slope = _arrival_affine(r, q_c, grid.dt, model, q_amb)
    cands = _candidate_controls(lo, base, slope, q_m, q_c, q_p)
    psi0, psi1 = _stage_affine(t_n, r, model)
    disc = math.exp(-model.delta * grid.dt)
    disc_int = discount_integral(model.delta, grid.dt)
    qa = base + slope * cands
    b = np.clip((q_c - qa) / grid.dq, -1.0, 1.0)
    Aw, Bw, Cw = _interp_terms(b)
    cont = Aw * V_next[l, jm] + Bw * V_next[l, j] + Cw * V_next[l, jp]
    obj = disc_int * (psi0 + psi1 * cands) + disc * cont
    a_star, _ = _pick_smallest_tied(obj, cands)
    a_star = float(a_star)
    objective = float(obj[int(np.argmax(cands == a_star))])
    return a_star, objective


class _SliceWorkspace:
    """Precomputed static arrays shared by all time slices of one problem."""

    def __init__(self, grid: Grid3, model: ModelConfig):
        sto = model.storage
        if sto.heat_capacity - sto.loss_coefficient * grid.dt <= 0.0:
            raise NumericalError(
                "heat loss per step exceeds the storage heat capacity "
                "(m_Q c_P - A gamma dt <= 0); refine dt or check gamma"
            )
        self.grid = grid
        self.model = model
        self.zs = grid.z_nodes()
        self.qs = grid.q_nodes()
        J = grid.N_q + 1
        self.jm = np.clip(np.arange(J) - 1, 0, grid.N_q)
        self.jp = np.clip(np.arange(J) + 1, 0, grid.N_q)
        self.q_m = self.qs[self.jm][None, :]
        self.q_c = self.qs[None, :]
        self.q_p = self.qs[self.jp][None, :]
        self.lower, self.diag, self.upper = tridiagonal_bands(grid, model.ou, model.delta)
        self.H0, self.F0, self.DN, self.FN = z_boundary_coeffs(grid, model.ou, model.delta)
        self.disc = math.exp(-model.delta * grid.dt)
        self.disc_int = discount_integral(model.delta, grid.dt)

    def solve_slice(self, n: int, V_next: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        grid, model = self.grid, self.model
        dt, dq = grid.dt, grid.dq
        t_n = grid.t_node(n)
        q_amb = model.ambient.at_step(n)
        r = model.seasonality.at(t_n) + self.zs  # (L,)
        R = r[:, None]

        lo = feasible_lower_array(R, self.q_c, dt, model, q_amb)  # (L, J)
        base, slope = _arrival_affine(R, self.q_c, dt, model, q_amb)
        cands = _candidate_controls(lo, base, slope, self.q_m, self.q_c, self.q_p)

        psi0, psi1 = _stage_affine(t_n, r, model)  # (L,)
        Vm = V_next[:, self.jm]
        Vp = V_next[:, self.jp]
        qa = base[..., None] + slope[..., None] * cands
        b = np.clip((self.q_c[..., None] - qa) / dq, -1.0, 1.0)
        Aw, Bw, Cw = _interp_terms(b)
        cont = Aw * Vm[..., None] + Bw * V_next[..., None] + Cw * Vp[..., None]
        obj = self.disc_int * (psi0[:, None, None] + psi1[:, None, None] * cands) + self.disc * cont
        a_star, _ = _pick_smallest_tied(obj, cands)

        b1 = np.clip((self.q_c - (base + slope * a_star)) / dq, -1.0, 1.0)
        A1, B1, C1 = _interp_terms(b1)
        stage = self.disc_int * (psi0[:, None] + psi1[:, None] * a_star)
        gamma_rhs = A1 * Vm + B1 * V_next + C1 * Vp + stage

        V_n = np.empty_like(V_next)
        V_n[1:-1, :] = thomas_solve(self.diag, self.lower, self.upper, gamma_rhs[1:-1, :])
        V_n[0, 1:-1] = (gamma_rhs[0, 1:-1] + dt * self.H0 * V_n[1, 1:-1]) / (1.0 + dt * self.F0)
        V_n[-1, 1:-1] = (gamma_rhs[-1, 1:-1] + dt * self.DN * V_n[-2, 1:-1]) / (1.0 + dt * self.FN)
        V_n[0, 0] = 2.0 * V_n[1, 0] - V_n[2, 0]
        V_n[0, -1] = 2.0 * V_n[0, -2] - V_n[0, -3]
        V_n[-1, 0] = 2.0 * V_n[-1, 1] - V_n[-1, 2]
        V_n[-1, -1] = 2.0 * V_n[-1, -2] - V_n[-1, -3]
        return V_n, a_star


def solve_time_slice(n: int, V_next: np.ndarray, grid: Grid3,
                     model: ModelConfig) -> tuple[np.ndarray, np.ndarray]:
    """One backward step: slice n of the value function and its policy slice.

    `V_next` is the completed slice n+1 with shape (N_z+1, N_q+1).
    """
    return _SliceWorkspace(grid, model).solve_slice(n, np.asarray(V_next, dtype=float))


def backward_recursion(model: ModelConfig, grid: Grid3, terminal: TerminalSpec, *,
                       values_out: np.ndarray | None = None,
                       policy_out: np.ndarray | None = None,
                       progress=None) -> tuple[ValueCube, PolicyCube]:
    """Full backward recursion from the terminal settlement to time zero.

    Optional `values_out` / `policy_out` arrays (e.g. memory maps) receive
    the cubes in place; otherwise fresh arrays are allocated.  `progress`,
    if given, is called with the step index after each completed slice.
    Slices are strictly sequential; all work inside a slice is vectorized,
    so results do not depend on any parallelism degree.
    """
    L, J = grid.N_z + 1, grid.N_q + 1
    values = values_out if values_out is not None else np.empty((grid.N_t + 1, L, J))
    policy = policy_out if policy_out is not None else np.empty((grid.N_t, L, J))
    if values.shape != (grid.N_t + 1, L, J):
        raise ValueError(f"values_out has shape {values.shape}, expected {(grid.N_t + 1, L, J)}")
    if policy.shape != (grid.N_t, L, J):
        raise ValueError(f"policy_out has shape {policy.shape}, expected {(grid.N_t, L, J)}")

    values[grid.N_t] = terminal_cost(grid.q_nodes(), terminal, model)[None, :]
    ws = _SliceWorkspace(grid, model)
    V_next = np.array(values[grid.N_t])
    for n in range(grid.N_t - 1, -1, -1):
        V_n, a_n = ws.solve_slice(n, V_next)
        values[n] = V_n
        policy[n] = a_n
        V_next = V_n
        if progress is not None:
            progress(n)
    return ValueCube(grid=grid, values=values), PolicyCube(grid=grid, a_star=policy)
