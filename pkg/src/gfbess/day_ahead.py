"""Day-ahead robust scheduling of the dispatch plan and the FCR droop.

A linear program picks the battery offset profile F and the largest frequency
droop sigma_f such that stored energy and power limits hold for every admissible
realization: the battery absorbs the worst-case miss between realized prosumption
and the central forecast l_hat, plus the worst-case frequency-regulation energy.
The published dispatch plan is G_hat = F + l_hat.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .battery import BatteryLimits
from .forecasting import N_SLOTS, ProsumptionBounds, WfForecast

T_TOTAL = 86400.0


@dataclass(frozen=True, eq=False)
class DayAheadProblem:
    bounds: ProsumptionBounds
    wf: WfForecast
    soe_0: float                  # initial state of energy, fraction
    limits: BatteryLimits
    l_hat: np.ndarray             # central prosumption forecast (kW)
    t_total: float = T_TOTAL
    n_slots: int = N_SLOTS
    delta_f_max: float = 0.2      # maximum FCR activation deviation (Hz)
    maximize_droop: bool = True   # False reproduces the degenerate argmin reading

    def __post_init__(self):
        if self.n_slots * (self.t_total / self.n_slots) != self.t_total:
            raise ValueError("slot grid must tile the scheduling window")
        if not self.limits.soc_min <= self.soe_0 <= self.limits.soc_max:
            raise ValueError("initial state of energy outside stored-energy limits")
        if self.delta_f_max < 0:
            raise ValueError("delta_f_max must be non-negative")


@dataclass(frozen=True, eq=False)
class DayAheadSolution:
    sigma_f: float                 # contracted droop (kW/Hz)
    f_offset: np.ndarray           # battery offset profile F (kW)
    dispatch_plan: np.ndarray      # G_hat (kW)
    status: str                    # "optimal" | "infeasible"


def build_problem(bounds: ProsumptionBounds, wf: WfForecast, battery: BatteryLimits,
                  soe_0: float, delta_f_max: float = 0.2,
                  maximize_droop: bool = True) -> DayAheadProblem:
    """Assemble the scheduling problem with l_hat at the midpoint of the bounds."""
    if bounds.l_up.shape != (N_SLOTS,) or wf.w_up.shape != (N_SLOTS,):
        raise ValueError(f"inputs must carry {N_SLOTS} slots")
    l_hat = 0.5 * (bounds.l_up + bounds.l_down)
    return DayAheadProblem(bounds=bounds, wf=wf, soe_0=soe_0, limits=battery,
                           l_hat=l_hat, delta_f_max=delta_f_max,
                           maximize_droop=maximize_droop)


def solve_day_ahead(problem: DayAheadProblem) -> DayAheadSolution:
    """Solve the robust scheduling LP.

    Decision variables are the offset profile F (kW per slot) and the droop
    sigma_f >= 0. For every slot n, in kWh bookkeeping:

      soe_0 + (1/e_nom) [ kappa * sum_{i<=n} (F_i + d_up_i) + sigma_f * w_up_n / 3600 ] <= soe_max
      soe_0 + (1/e_nom) [ kappa * sum_{i<=n} (F_i + d_down_i) + sigma_f * w_down_n / 3600 ] >= soe_min
      F_n + d_up_n + delta_f_max * sigma_f <= p_max
      F_n + d_down_n - delta_f_max * sigma_f >= p_min

    where kappa = (t_total / n_slots) in hours and d_up/d_down = l_hat - l_down /
    l_hat - l_up are the worst-case forecast misses the battery must absorb.
    """
    lim = problem.limits
    n = problem.n_slots
    kappa = (problem.t_total / n) / 3600.0  # slot length in hours
    d_up = problem.l_hat - problem.bounds.l_down    # >= 0
    d_down = problem.l_hat - problem.bounds.l_up    # <= 0
    w_up_h = problem.wf.w_up / 3600.0
    w_down_h = problem.wf.w_down / 3600.0

    # variables: x = [F_0 .. F_{n-1}, sigma_f]
    c = np.zeros(n + 1)
    c[-1] = -1.0 if problem.maximize_droop else 1.0

    cum = np.tril(np.ones((n, n)))
    e_budget_hi = lim.e_nom * (lim.soc_max - problem.soe_0)
    e_budget_lo = lim.e_nom * (problem.soe_0 - lim.soc_min)

    a_soe_hi = np.hstack([kappa * cum, w_up_h[:, None]])
    b_soe_hi = e_budget_hi - kappa * np.cumsum(d_up)
    a_soe_lo = np.hstack([-kappa * cum, -w_down_h[:, None]])
    b_soe_lo = e_budget_lo + kappa * np.cumsum(d_down)

    eye = np.eye(n)
    dcol = np.full((n, 1), problem.delta_f_max)
    a_p_hi = np.hstack([eye, dcol])
    b_p_hi = lim.p_max - d_up
    a_p_lo = np.hstack([-eye, dcol])
    b_p_lo = d_down - lim.p_min

    a_ub = np.vstack([a_soe_hi, a_soe_lo, a_p_hi, a_p_lo])
    b_ub = np.concatenate([b_soe_hi, b_soe_lo, b_p_hi, b_p_lo])
    var_bounds = [(None, None)] * n + [(0.0, None)]

    res = linprog(c, A_ub=a_ub, b_ub=b_ub, bounds=var_bounds, method="highs")
    if res.status == 3:
        raise AssertionError("scheduling LP unbounded; finite power limits and a "
                             "positive activation band should prevent this")
    if res.status != 0:
        return DayAheadSolution(sigma_f=float("nan"), f_offset=None,
                                dispatch_plan=None, status="infeasible")
    f_offset = res.x[:n]
    sigma_f = float(res.x[-1])
    plan = dispatch_plan(f_offset, problem.l_hat)
    return DayAheadSolution(sigma_f=sigma_f, f_offset=f_offset,
                            dispatch_plan=plan, status="optimal")


def dispatch_plan(f_offset: np.ndarray, l_hat: np.ndarray) -> np.ndarray:
    """Published plan of average PCC power per slot: G_hat = F + l_hat."""
    f_offset = np.asarray(f_offset, dtype=float)
    l_hat = np.asarray(l_hat, dtype=float)
    if f_offset.shape != l_hat.shape:
        raise ValueError("offset and forecast lengths differ")
    return f_offset + l_hat


def simulate_soe(problem: DayAheadProblem, solution: DayAheadSolution,
                 l_traj: np.ndarray, w_traj: np.ndarray) -> np.ndarray:
    """Stored-energy trajectory at slot boundaries for a given realization.

    The battery absorbs F plus the forecast miss (l_hat - L) plus the droop
    energy sigma_f * W / 3600; this is the quantity the LP constrains.
    """
    lim = problem.limits
    kappa = (problem.t_total / problem.n_slots) / 3600.0
    p_batt = solution.f_offset + (problem.l_hat - np.asarray(l_traj, dtype=float))
    energy = kappa * np.cumsum(p_batt) + solution.sigma_f * np.asarray(w_traj) / 3600.0
    return problem.soe_0 + energy / lim.e_nom


# ---------------------------------------------------------------------------
# file interfaces


def save_plan_csv(path, solution: DayAheadSolution) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["slot", "g_hat_kw", "f_offset_kw"])
        for n in range(solution.dispatch_plan.size):
            writer.writerow([n, f"{solution.dispatch_plan[n]:.10g}",
                             f"{solution.f_offset[n]:.10g}"])


def load_plan_csv(path):
    """Returns (g_hat, f_offset) arrays from a plan CSV."""
    g_hat = np.zeros(N_SLOTS)
    f_offset = np.zeros(N_SLOTS)
    count = 0
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"slot", "g_hat_kw", "f_offset_kw"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            missing = sorted(required - set(reader.fieldnames or []))
            raise ValueError(f"{path}: missing columns {missing}")
        for lineno, row in enumerate(reader, start=2):
            try:
                n = int(row["slot"])
                g_hat[n] = float(row["g_hat_kw"])
                f_offset[n] = float(row["f_offset_kw"])
            except (ValueError, IndexError) as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc
            count += 1
    if count != N_SLOTS:
        raise ValueError(f"{path}: expected {N_SLOTS} rows, found {count}")
    return g_hat, f_offset


def save_sigma_json(path, solution: DayAheadSolution) -> None:
    with open(path, "w") as fh:
        json.dump({"sigma_f_kw_per_hz": solution.sigma_f, "status": solution.status},
                  fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_sigma_json(path) -> float:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("status") != "optimal":
        raise ValueError(f"{path}: schedule status is {doc.get('status')!r}")
    return float(doc["sigma_f_kw_per_hz"])
