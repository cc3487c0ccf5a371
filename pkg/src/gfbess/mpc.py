"""Shrinking-horizon tracking controller on the 10-second grid.

Every 10 s the controller measures the composite PCC flow accumulated in the
current 5-minute slot, projects the slot average with a persistence forecast,
removes the part of the deviation owed to the frequency-regulation droop, and
converts the residual into an energy target for the battery over the rest of
the slot. A linear program picks the DC-current trajectory that moves exactly
that energy while honoring current, ramp, voltage and SOC limits; only the
first current is actuated.

Flow quantities fed to this module (PCC flow, prosumption, battery power,
plan target) are injection-positive: power delivered toward the upstream grid
is positive. A positive energy target therefore asks the battery to discharge.
Battery currents keep the charging-positive convention of the battery model.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .battery import BatteryLimits, BatteryState, TtcParams, build_transition_matrices

K_TOTAL = 8640          # number of 10 s intervals per day
STEPS_PER_SLOT = 30
STEP_SECONDS = 10.0
ALPHA_KWH = STEP_SECONDS / 3600.0   # average kW over one step -> kWh


@dataclass(frozen=True)
class SlotContext:
    """Position of a 10 s interval inside its 5-minute slot."""

    k: int
    k_lo: int
    k_hi: int
    g_star: float          # slot target from the dispatch plan (kW)
    steps_elapsed: int


@dataclass(frozen=True, eq=False)
class MeasurementWindow:
    """Per-interval averages accumulated since the start of the slot."""

    l_hist: np.ndarray     # prosumption (kW)
    p_hist: np.ndarray     # battery power (kW)
    f_hist: np.ndarray     # frequency (Hz)

    def __post_init__(self):
        for name in ("l_hist", "p_hist", "f_hist"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        if not self.l_hist.shape == self.p_hist.shape == self.f_hist.shape:
            raise ValueError("measurement histories must have identical length")

    @property
    def empty(self) -> bool:
        return self.l_hist.size == 0


@dataclass(frozen=True, eq=False)
class MpcResult:
    """Horizon current trajectory, the actuated set-point, and diagnostics."""

    i_traj: np.ndarray     # DC current over [k, k_hi] (A, charging-positive)
    p_setpoint: float      # actuated DC power (kW, charging-positive)
    e_k: float             # energy target (kWh, injection-positive)
    v_traj: np.ndarray     # predicted DC voltage over the horizon (V)
    iterations: int
    residual_v: float      # max voltage change in the last linearization sweep
    status: str            # ok | constrained | no_convergence | infeasible


def slot_context(k: int, dispatch_plan: np.ndarray) -> SlotContext:
    plan = np.asarray(dispatch_plan, dtype=float)
    if not 0 <= k < K_TOTAL:
        raise ValueError(f"interval index {k} outside [0, {K_TOTAL})")
    if plan.size != K_TOTAL // STEPS_PER_SLOT:
        raise ValueError("dispatch plan must carry one value per 5-minute slot")
    k_lo = STEPS_PER_SLOT * (k // STEPS_PER_SLOT)
    return SlotContext(k=k, k_lo=k_lo, k_hi=k_lo + STEPS_PER_SLOT - 1,
                       g_star=float(plan[k // STEPS_PER_SLOT]),
                       steps_elapsed=k - k_lo)


def average_pcc_flow(window: MeasurementWindow) -> float:
    """Average composite flow (prosumption + battery) over the elapsed intervals.

    Returns 0 for an empty window; the caller skips the controller on the first
    interval of a slot.
    """
    if window.empty:
        return 0.0
    return float(np.mean(window.l_hist + window.p_hist))


def expected_flow(g_k: float, l_last: float, context: SlotContext) -> float:
    """Projected slot-average flow with a persistence forecast for the remainder."""
    elapsed = context.steps_elapsed
    future = context.k_hi - context.k + 1
    return (elapsed * g_k + future * l_last) / (elapsed + future)


def fcr_deviation(f_hist: np.ndarray, sigma_f: float, f_nom: float = 50.0) -> float:
    """Slot-average flow deviation owed to the droop response so far (kW)."""
    f = np.asarray(f_hist, dtype=float)
    if f.size == 0:
        return 0.0
    return float(np.sum((f_nom - f) * sigma_f) / STEPS_PER_SLOT)


def energy_error(g_star: float, g_plus: float, delta_g_f: float) -> float:
    """Energy (kWh) the battery must add over the rest of the slot."""
    if not all(np.isfinite(v) for v in (g_star, g_plus, delta_g_f)):
        raise ValueError("non-finite inputs")
    return (300.0 / 3600.0) * (g_star - g_plus + delta_g_f)


def _zero_reachable(i_prev: float, limits: BatteryLimits) -> bool:
    return limits.di_min <= -i_prev <= limits.di_max


def _zero_result(e_k: float, state: BatteryState, params: TtcParams, horizon: int,
                 status: str, iterations: int = 0) -> MpcResult:
    phi, _, psi1 = build_transition_matrices(params, state.soc, horizon, STEP_SECONDS)
    v = phi @ state.x + psi1
    return MpcResult(i_traj=np.zeros(horizon), p_setpoint=0.0, e_k=e_k, v_traj=v,
                     iterations=iterations, residual_v=0.0, status=status)


def solve_mpc(e_k: float, battery_state: BatteryState, limits: BatteryLimits,
              ttc_params: TtcParams, i_prev: float, horizon: int,
              v_tol: float = 0.1, max_lin_iter: int = 5) -> MpcResult:
    """Current-trajectory LP for the remaining horizon of the slot.

    A positive e_k (injection needed) minimizes the summed charging current with
    the throughput bounded below by -e_k; a negative e_k mirrors the problem. The
    bilinear voltage-current energy term is handled by sequential linearization:
    the voltage profile is frozen at the previous iterate (initially the present
    terminal voltage), the LP solved, and the profile refreshed from the lifted
    RC model until it moves less than v_tol.

    An infeasible LP never aborts the control loop: the zero trajectory is
    returned with status "infeasible".
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if abs(e_k) < 1e-12 and _zero_reachable(i_prev, limits):
        return _zero_result(e_k, battery_state, ttc_params, horizon, "ok")

    phi, psi, psi1 = build_transition_matrices(ttc_params, battery_state.soc,
                                               horizon, STEP_SECONDS)
    v_base = phi @ battery_state.x + psi1
    beta = STEP_SECONDS / 3600.0 / limits.c_nom
    cum = np.tril(np.ones((horizon, horizon)))

    diff = np.eye(horizon)
    idx = np.arange(1, horizon)
    diff[idx, idx - 1] = -1.0
    b_ramp_hi = np.full(horizon, limits.di_max)
    b_ramp_lo = np.full(horizon, -limits.di_min)
    b_ramp_hi[0] += i_prev
    b_ramp_lo[0] -= i_prev

    a_static = np.vstack([diff, -diff, psi, -psi, beta * cum, -beta * cum])
    b_static = np.concatenate([
        b_ramp_hi, b_ramp_lo,
        limits.v_max - v_base, v_base - limits.v_min,
        np.full(horizon, limits.soc_max - battery_state.soc),
        np.full(horizon, battery_state.soc - limits.soc_min),
    ])
    var_bounds = [(limits.i_min, limits.i_max)] * horizon
    sign = -1.0 if e_k >= 0 else 1.0   # charging current direction being pushed
    c = -sign * np.ones(horizon)

    v_hat = np.full(horizon, battery_state.v_dc)
    i_sol = None
    v_traj = v_base
    residual = float("inf")
    iterations = 0
    for iterations in range(1, max_lin_iter + 1):
        a_thr = (sign * ALPHA_KWH / 1000.0) * v_hat
        a_ub = np.vstack([a_static, a_thr[None, :]])
        b_ub = np.concatenate([b_static, [abs(e_k)]])
        res = linprog(c, A_ub=a_ub, b_ub=b_ub, bounds=var_bounds, method="highs")
        if res.status != 0:
            return _zero_result(e_k, battery_state, ttc_params, horizon,
                                "infeasible", iterations)
        i_sol = np.clip(res.x, limits.i_min, limits.i_max)
        v_traj = v_base + psi @ i_sol
        residual = float(np.max(np.abs(v_traj - v_hat)))
        if residual < v_tol:
            break
        v_hat = v_traj
    status = "ok" if residual < v_tol else "no_convergence"

    # delivered injection energy; flag limit dominance and prefer the quiet
    # trajectory when the requested direction is fully blocked
    delivered = -(ALPHA_KWH / 1000.0) * float(v_traj @ i_sol)
    if abs(delivered - e_k) > max(1e-3, 1e-3 * abs(e_k)):
        status = "constrained"
        if abs(delivered) < 1e-9 and _zero_reachable(i_prev, limits):
            return _zero_result(e_k, battery_state, ttc_params, horizon,
                                "constrained", iterations)

    return MpcResult(i_traj=i_sol, p_setpoint=power_setpoint(v_traj[0], i_sol[0]),
                     e_k=e_k, v_traj=v_traj, iterations=iterations,
                     residual_v=residual, status=status)


def power_setpoint(v_k: float, i_0: float) -> float:
    """DC power set-point (kW) for the first actuated current."""
    if v_k <= 0:
        raise ValueError("voltage must be positive")
    return v_k * i_0 / 1000.0
