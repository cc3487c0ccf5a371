"""Battery electrical models shared by all control stages.

Coulomb-counting SOC integrator, a three-branch RC equivalent circuit for the DC
terminal voltage, lifted (stacked-in-time) transition matrices for horizon
optimization, and the AC/DC converter power conversions.

Sign convention: battery current and power are charging-positive throughout this
package. Conversions to grid orientation happen in the simulator only.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import toeplitz

from .errors import InfeasibleOperatingPoint, NumericFailure


@dataclass(frozen=True)
class TtcBin:
    """Equivalent-circuit parameters valid over one SOC interval."""

    soc_lo: float
    soc_hi: float
    e_m: float                 # open-circuit voltage at soc_lo (V)
    r_series: float            # series resistance (ohm)
    branches: tuple            # three (r_ohm, c_farad) pairs
    e_m_slope: float = 0.0     # OCV slope inside the bin (V per unit SOC)

    def __post_init__(self):
        if len(self.branches) != 3:
            raise ValueError("a bin must carry exactly 3 RC branches")
        if self.e_m <= 0 or self.r_series <= 0:
            raise ValueError("e_m and r_series must be strictly positive")
        for r, c in self.branches:
            if r <= 0 or c <= 0:
                raise ValueError("RC branch parameters must be strictly positive")
        if not self.soc_lo < self.soc_hi:
            raise ValueError("empty SOC interval")

    def ocv(self, soc: float) -> float:
        return self.e_m + self.e_m_slope * (soc - self.soc_lo)


@dataclass(frozen=True)
class TtcParams:
    """SOC-binned parameter set for the three-branch voltage model."""

    bins: tuple

    def __post_init__(self):
        bins = tuple(sorted(self.bins, key=lambda b: b.soc_lo))
        object.__setattr__(self, "bins", bins)
        if not bins:
            raise ValueError("at least one SOC bin required")
        if abs(bins[0].soc_lo) > 1e-9 or abs(bins[-1].soc_hi - 1.0) > 1e-9:
            raise ValueError("SOC bins must cover [0, 1]")
        for nxt, prev in zip(bins[1:], bins[:-1]):
            if abs(nxt.soc_lo - prev.soc_hi) > 1e-9:
                raise ValueError("SOC bins must not leave gaps or overlap")

    def bin_for(self, soc: float) -> TtcBin:
        if not np.isfinite(soc) or soc < -1e-9 or soc > 1.0 + 1e-9:
            raise ValueError(f"no SOC bin covers soc={soc}")
        for b in self.bins:
            if soc < b.soc_hi or b is self.bins[-1]:
                return b
        return self.bins[-1]


@dataclass(frozen=True, eq=False)
class BatteryState:
    """Electro-state snapshot: SOC, RC branch voltages, terminal DC voltage."""

    soc: float
    x: np.ndarray            # branch voltages (V), shape (3,)
    v_dc: float              # terminal DC voltage (V)
    timestamp: float = 0.0   # seconds since day start

    def __post_init__(self):
        object.__setattr__(self, "x", np.asarray(self.x, dtype=float))
        if self.x.shape != (3,):
            raise ValueError("state must carry exactly 3 branch voltages")


@dataclass(frozen=True)
class BatteryLimits:
    """Operational bounds of the battery and its converter."""

    i_min: float = -1100.0    # DC current (A)
    i_max: float = 1100.0
    di_min: float = -300.0    # current ramp per 10 s step (A)
    di_max: float = 300.0
    v_min: float = 545.0      # DC voltage (V)
    v_max: float = 785.0
    soc_min: float = 0.1
    soc_max: float = 0.9
    c_nom: float = 752.0      # capacity (Ah)
    e_nom: float = 500.0      # nominal energy (kWh)
    p_min: float = -720.0     # AC power (kW)
    p_max: float = 720.0
    s_nom: float = 720.0      # apparent power rating (kVA)

    def __post_init__(self):
        pairs = [
            (self.i_min, self.i_max), (self.di_min, self.di_max),
            (self.v_min, self.v_max), (self.soc_min, self.soc_max),
            (self.p_min, self.p_max),
        ]
        if any(lo >= hi for lo, hi in pairs):
            raise ValueError("every (min, max) limit pair must satisfy min < max")
        if self.c_nom <= 0 or self.e_nom <= 0 or self.s_nom <= 0:
            raise ValueError("c_nom, e_nom and s_nom must be positive")


def default_ttc_params() -> TtcParams:
    """Synthetic parameter set: continuous affine OCV 590..730 V, 5 mOhm series
    resistance, branch time constants of 10 s, 200 s and 3000 s."""
    edges = [0.0, 0.25, 0.5, 0.75, 1.0]
    r_branch = 0.002
    taus = (10.0, 200.0, 3000.0)
    branches = tuple((r_branch, tau / r_branch) for tau in taus)
    bins = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        bins.append(TtcBin(soc_lo=lo, soc_hi=hi, e_m=590.0 + 140.0 * lo,
                           e_m_slope=140.0, r_series=0.005, branches=branches))
    return TtcParams(bins=tuple(bins))


def initial_state(soc: float, params: TtcParams, timestamp: float = 0.0) -> BatteryState:
    """Rest state at the given SOC (branch voltages relaxed to zero)."""
    b = params.bin_for(soc)
    return BatteryState(soc=soc, x=np.zeros(3), v_dc=b.ocv(soc), timestamp=timestamp)


def soc_step(soc: float, i: float, dt: float, c_nom: float) -> float:
    """Advance SOC by coulomb counting; charging-positive current raises SOC.

    The result is never clamped: out-of-range values are returned for the caller
    to flag, limits are enforced by the optimizers.
    """
    if not (np.isfinite(soc) and np.isfinite(i)):
        raise ValueError("non-finite soc or current")
    if dt <= 0 or c_nom <= 0:
        raise ValueError("dt and c_nom must be positive")
    return soc + (dt / 3600.0) * i / c_nom


def ttc_step(state: BatteryState, i_dc: float, dt: float, params: TtcParams) -> BatteryState:
    """One exact-discretization step of the RC branch voltages under constant current.

    SOC is left untouched (advance it separately with soc_step); parameters are
    taken from the bin of the entering SOC.
    """
    if not np.isfinite(i_dc):
        raise ValueError("non-finite current")
    if dt <= 0:
        raise ValueError("dt must be positive")
    b = params.bin_for(state.soc)
    r = np.array([br[0] for br in b.branches])
    c = np.array([br[1] for br in b.branches])
    a = np.exp(-dt / (r * c))
    x_new = a * state.x + r * (1.0 - a) * i_dc
    v = b.ocv(state.soc) + b.r_series * i_dc + x_new.sum()
    return BatteryState(soc=state.soc, x=x_new, v_dc=v, timestamp=state.timestamp + dt)


def build_transition_matrices(params: TtcParams, soc: float, horizon: int, dt: float):
    """Lifted affine voltage map over a horizon with parameters frozen at the SOC bin.

    Returns (phi_v, psi_i_v, psi_1_v) such that the stacked voltage trajectory for a
    current trajectory ``i`` is ``phi_v @ x0 + psi_i_v @ i + psi_1_v``, entry m being
    the terminal voltage after applying i[m] over one dt step, consistent with
    repeated ttc_step calls.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    b = params.bin_for(soc)
    r = np.array([br[0] for br in b.branches])
    c = np.array([br[1] for br in b.branches])
    a = np.exp(-dt / (r * c))
    bcoef = r * (1.0 - a)

    # x[m+1] = diag(a) x[m] + bcoef i[m];  v[m] = ocv + r_series i[m] + sum(x[m+1])
    powers = a[None, :] ** np.arange(1, horizon + 1)[:, None]   # (h, 3): a^(m+1)
    phi_v = powers.copy()
    w = np.empty(horizon)
    w[0] = bcoef.sum() + b.r_series
    if horizon > 1:
        lags = a[None, :] ** np.arange(1, horizon)[:, None]
        w[1:] = (lags * bcoef[None, :]).sum(axis=1)
    psi_i_v = toeplitz(w, np.zeros(horizon))
    psi_1_v = np.full(horizon, b.ocv(soc))
    return phi_v, psi_i_v, psi_1_v


def ac_to_dc_power(p_set_ac: float, eta: float) -> float:
    """Map an AC-side power set-point to the DC bus through converter losses.

    Charging (p >= 0): the battery receives eta * p. Discharging (p < 0): the DC
    side must source p / eta. Losses always shrink what reaches the non-source side.
    """
    if not 0.0 < eta <= 1.0:
        raise ValueError("eta must be in (0, 1]")
    if not np.isfinite(p_set_ac):
        raise ValueError("non-finite power")
    return eta * p_set_ac if p_set_ac >= 0 else p_set_ac / eta


def dc_to_ac_power(p_dc: float, eta: float) -> float:
    """Inverse of ac_to_dc_power: AC set-point that realizes a DC-side power."""
    if not 0.0 < eta <= 1.0:
        raise ValueError("eta must be in (0, 1]")
    if not np.isfinite(p_dc):
        raise ValueError("non-finite power")
    return p_dc / eta if p_dc >= 0 else p_dc * eta


def dc_current_from_power(p_dc: float, state: BatteryState, params: TtcParams,
                          tol_a: float = 1e-6, max_iter: int = 20) -> float:
    """Solve the fixed point i = P / v(i) for the instantaneous DC current.

    v(i) is the instantaneous terminal voltage: OCV plus series drop plus the
    (continuous) branch-state voltages. Charging-positive.
    """
    if not np.isfinite(p_dc):
        raise ValueError("non-finite power")
    if p_dc == 0.0:
        return 0.0
    b = params.bin_for(state.soc)
    base = b.ocv(state.soc) + state.x.sum()
    p_w = 1000.0 * p_dc
    i = p_w / state.v_dc
    for _ in range(max_iter):
        v = base + b.r_series * i
        if v <= 0:
            raise InfeasibleOperatingPoint(f"terminal voltage {v:.1f} V <= 0 at i={i:.1f} A")
        i_new = p_w / v
        if abs(i_new - i) < tol_a:
            return i_new
        i = i_new
    raise NumericFailure(f"current fixed point did not converge for p_dc={p_dc} kW")


def load_battery_config(path) -> tuple:
    """Load (TtcParams, BatteryLimits) from a JSON file.

    Schema: {"limits": {<BatteryLimits fields>},
             "ttc": {"bins": [{"soc_lo", "soc_hi", "e_m", "e_m_slope",
                               "r_series", "branches": [[r, c] x3]}, ...]}}
    """
    with open(path) as fh:
        raw = json.load(fh)
    try:
        limits = BatteryLimits(**raw["limits"])
        bins = tuple(
            TtcBin(soc_lo=b["soc_lo"], soc_hi=b["soc_hi"], e_m=b["e_m"],
                   e_m_slope=b.get("e_m_slope", 0.0), r_series=b["r_series"],
                   branches=tuple((br[0], br[1]) for br in b["branches"]))
            for b in raw["ttc"]["bins"]
        )
        params = TtcParams(bins=bins)
    except (KeyError, TypeError) as exc:
        raise ValueError(f"invalid battery config {path}: {exc}") from exc
    return params, limits


def save_battery_config(path, params: TtcParams, limits: BatteryLimits) -> None:
    doc = {
        "limits": {k: getattr(limits, k) for k in (
            "i_min", "i_max", "di_min", "di_max", "v_min", "v_max",
            "soc_min", "soc_max", "c_nom", "e_nom", "p_min", "p_max", "s_nom")},
        "ttc": {"bins": [
            {"soc_lo": b.soc_lo, "soc_hi": b.soc_hi, "e_m": b.e_m,
             "e_m_slope": b.e_m_slope, "r_series": b.r_series,
             "branches": [list(br) for br in b.branches]}
            for b in params.bins
        ]},
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
