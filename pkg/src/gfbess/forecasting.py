"""Day-ahead forecasting of feeder prosumption and frequency-deviation energy.

Historical PCC recordings are disaggregated into a consumption series, grouped by
day category, and summarized with exponentially forgotten mean/covariance. Scenario
sampling from the fitted multivariate normal yields a consumption envelope, which
is combined with a physical PV production band into prosumption bounds. The
cumulative frequency-deviation energy W (integral of f - f_nom, Hz*s) is forecast
per slot with an autoregressive model and empirical residual quantiles.
"""

from __future__ import annotations

import csv
import datetime as dt
import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import NumericFailure

N_SLOTS = 288
SLOT_SECONDS = 300.0

CATEGORIES = ("A", "B", "C", "D1", "D2")


@dataclass(frozen=True, eq=False)
class HistoricalDay:
    """One recorded day of 5-minute PCC data."""

    date: dt.date
    g: np.ndarray        # PCC power (kW)
    p: np.ndarray        # battery power (kW)
    ghi: np.ndarray      # global horizontal irradiance (W/m2)
    category: str

    def __post_init__(self):
        for name in ("g", "p", "ghi"):
            arr = np.asarray(getattr(self, name), dtype=float)
            object.__setattr__(self, name, arr)
            if arr.shape != (N_SLOTS,):
                raise ValueError(f"{name} must have {N_SLOTS} slots")
        if self.category not in CATEGORIES:
            raise ValueError(f"unknown day category {self.category!r}")


@dataclass(frozen=True, eq=False)
class CategoryStats:
    """Per-category consumption statistics with exponential forgetting."""

    mu: np.ndarray            # mean consumption (kW), shape (288,)
    sigma: np.ndarray         # covariance (kW^2), shape (288, 288)
    n_days: int
    lambda_forget: float

    def __post_init__(self):
        if not 0.0 < self.lambda_forget <= 1.0:
            raise ValueError("lambda_forget must be in (0, 1]")


@dataclass(frozen=True, eq=False)
class ProsumptionBounds:
    """Per-slot envelopes of feeder net demand (kW)."""

    l_up: np.ndarray
    l_down: np.ndarray

    def __post_init__(self):
        up = np.asarray(self.l_up, dtype=float)
        down = np.asarray(self.l_down, dtype=float)
        object.__setattr__(self, "l_up", up)
        object.__setattr__(self, "l_down", down)
        if up.shape != (N_SLOTS,) or down.shape != (N_SLOTS,):
            raise ValueError(f"bounds must have {N_SLOTS} slots")
        if np.any(down > up + 1e-9):
            raise ValueError("l_down must not exceed l_up")


@dataclass(frozen=True)
class PvPlant:
    """Photovoltaic installation description for the production model."""

    capacity_kwp: float = 105.0
    tilt: float = 15.0            # degrees from horizontal
    azimuth: float = 0.0          # degrees from south, west positive
    gamma_temp: float = -0.004    # power-temperature coefficient (1/degC)
    latitude: float = 46.5
    longitude: float = 6.6

    def __post_init__(self):
        if self.capacity_kwp <= 0:
            raise ValueError("capacity must be positive")
        if not 0.0 <= self.tilt <= 90.0:
            raise ValueError("tilt must be within [0, 90] degrees")
        if self.gamma_temp > 0:
            raise ValueError("gamma_temp must be <= 0")


@dataclass(frozen=True, eq=False)
class WfForecast:
    """Cumulative frequency-deviation energy bounds per slot (Hz*s).

    w_up/w_down bracket the cumulative integral of (f - f_nom) at the start of
    each slot; multiplied by a droop in kW/Hz and divided by 3600 they give kWh.
    """

    w_up: np.ndarray
    w_down: np.ndarray
    ar_order: int
    coefficients: np.ndarray      # [intercept, lag1..lagp]
    w_point: np.ndarray = None

    def __post_init__(self):
        up = np.asarray(self.w_up, dtype=float)
        down = np.asarray(self.w_down, dtype=float)
        object.__setattr__(self, "w_up", up)
        object.__setattr__(self, "w_down", down)
        if up.shape != (N_SLOTS,) or down.shape != (N_SLOTS,):
            raise ValueError(f"W bounds must have {N_SLOTS} slots")
        if up[0] != 0.0 or down[0] != 0.0:
            raise ValueError("W bounds must start at 0")
        if np.any(down > up + 1e-9):
            raise ValueError("w_down must not exceed w_up")


def disaggregate(day: HistoricalDay, pv_est: np.ndarray) -> np.ndarray:
    """Remove battery and PV contributions from the PCC record: C = g - p - pv_est."""
    pv_est = np.asarray(pv_est, dtype=float)
    if pv_est.shape != (N_SLOTS,):
        raise ValueError(f"pv_est must have {N_SLOTS} slots")
    return day.g - day.p - pv_est


def classify_day(date: dt.date, holiday_calendar) -> str:
    """Assign the day category used for consumption statistics.

    D2: Sundays and festivities; D1: Saturdays; A: Mondays or days right after a
    holiday; C: Fridays or days right before a holiday; B: remaining midweek days.
    Precedence D2 > D1 > A > C > B.
    """
    holidays = set(holiday_calendar)
    one = dt.timedelta(days=1)
    if date in holidays or date.weekday() == 6:
        return "D2"
    if date.weekday() == 5:
        return "D1"
    if date.weekday() == 0 or (date - one) in holidays:
        return "A"
    if date.weekday() == 4 or (date + one) in holidays:
        return "C"
    return "B"


def empty_stats(lambda_forget: float = 0.98) -> CategoryStats:
    return CategoryStats(mu=np.zeros(N_SLOTS), sigma=np.zeros((N_SLOTS, N_SLOTS)),
                         n_days=0, lambda_forget=lambda_forget)


def _total_weight(n_days: int, lam: float) -> float:
    if n_days == 0:
        return 0.0
    if lam == 1.0:
        return float(n_days)
    return (1.0 - lam ** n_days) / (1.0 - lam)


def _jitter_eps(sigma: np.ndarray) -> float:
    return 1e-6 * float(np.trace(sigma)) / N_SLOTS


def update_stats(stats: CategoryStats, day_consumption: np.ndarray) -> CategoryStats:
    """Absorb one day into the running mean/covariance.

    A day observed m updates ago carries weight lambda_forget**m; the covariance is
    normalized by the total weight and kept symmetric PSD with a diagonal jitter of
    1e-6 * trace / 288.
    """
    c = np.asarray(day_consumption, dtype=float)
    if c.shape != (N_SLOTS,):
        raise ValueError(f"day must have {N_SLOTS} slots")
    lam = stats.lambda_forget
    w_old = _total_weight(stats.n_days, lam)
    w_new = lam * w_old + 1.0
    mu_new = (lam * w_old * stats.mu + c) / w_new
    delta = stats.mu - mu_new
    dev = c - mu_new
    sigma_new = (lam * w_old / w_new) * (stats.sigma + np.outer(delta, delta)) \
        + np.outer(dev, dev) / w_new
    sigma_new = 0.5 * (sigma_new + sigma_new.T)
    sigma_new[np.diag_indices_from(sigma_new)] += _jitter_eps(sigma_new)
    return CategoryStats(mu=mu_new, sigma=sigma_new, n_days=stats.n_days + 1,
                         lambda_forget=lam)


def sample_scenarios(stats: CategoryStats, s: int, seed) -> np.ndarray:
    """Draw s consumption scenarios from N(mu, sigma), deterministic given the seed."""
    if s < 2:
        raise ValueError("need at least 2 scenarios")
    sigma = 0.5 * (stats.sigma + stats.sigma.T)
    sigma = sigma + (_jitter_eps(sigma) + 1e-12) * np.eye(N_SLOTS)
    try:
        chol = np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError as exc:
        raise NumericFailure("covariance not factorizable after jitter") from exc
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((s, N_SLOTS))
    return stats.mu[None, :] + z @ chol.T


def envelope(scenarios: np.ndarray):
    """Pointwise minimum/maximum consumption over the scenario set per slot."""
    arr = np.asarray(scenarios, dtype=float)
    if arr.ndim != 2 or arr.shape[0] < 2:
        raise ValueError("need at least 2 scenarios")
    return arr.min(axis=0), arr.max(axis=0)


def _solar_poa_factor(plant: PvPlant, day_of_year: int) -> np.ndarray:
    """Plane-of-array transposition factor per slot from solar geometry.

    Slot timestamps are treated as local solar time. The factor is the incidence
    ratio cos(theta_i)/cos(theta_z) of a plane at the given tilt/azimuth, clipped
    to [0, 3] and zero when the sun is below the horizon; tilt of zero gives
    exactly 1 whenever the sun is up.
    """
    hours = (np.arange(N_SLOTS) + 0.5) * SLOT_SECONDS / 3600.0
    decl = math.radians(23.45) * math.sin(2.0 * math.pi * (284 + day_of_year) / 365.0)
    lat = math.radians(plant.latitude)
    omega = np.radians(15.0 * (hours - 12.0))
    cos_z = math.sin(lat) * math.sin(decl) + math.cos(lat) * math.cos(decl) * np.cos(omega)
    sin_z = np.sqrt(np.clip(1.0 - cos_z ** 2, 0.0, None))

    beta = math.radians(plant.tilt)
    gamma = math.radians(plant.azimuth)
    with np.errstate(divide="ignore", invalid="ignore"):
        cos_az = np.where(sin_z > 1e-9,
                          (cos_z * math.sin(lat) - math.sin(decl)) / (sin_z * math.cos(lat)),
                          1.0)
    sol_az = np.sign(omega) * np.arccos(np.clip(cos_az, -1.0, 1.0))
    cos_i = cos_z * math.cos(beta) + sin_z * math.sin(beta) * np.cos(sol_az - gamma)
    factor = np.clip(cos_i, 0.0, None) / np.maximum(cos_z, math.cos(math.radians(85.0)))
    factor = np.clip(factor, 0.0, 3.0)
    factor[cos_z <= 0.0] = 0.0
    return factor


def pv_production(ghi: np.ndarray, plant: PvPlant, air_temp: np.ndarray,
                  day_of_year: int = 172, k_noct: float = 0.025) -> np.ndarray:
    """Physical PV production estimate (kW) from GHI and air temperature.

    GHI is transposed to the array plane, the cell temperature is estimated as
    air_temp + k_noct * POA, and the output derated by the temperature
    coefficient, clipped to [0, capacity].
    """
    ghi = np.asarray(ghi, dtype=float)
    air = np.asarray(air_temp, dtype=float)
    if ghi.shape != (N_SLOTS,) or air.shape != (N_SLOTS,):
        raise ValueError(f"inputs must have {N_SLOTS} slots")
    poa = ghi * _solar_poa_factor(plant, day_of_year)
    t_cell = air + k_noct * poa
    power = plant.capacity_kwp * (poa / 1000.0) * (1.0 + plant.gamma_temp * (t_cell - 25.0))
    return np.clip(power, 0.0, plant.capacity_kwp)


def pv_bounds(ghi_up: np.ndarray, ghi_down: np.ndarray, plant: PvPlant,
              air_temp: np.ndarray, day_of_year: int = 172, k_noct: float = 0.025):
    """Best/worst PV production scenarios (kW) from a GHI forecast band."""
    ghi_up = np.asarray(ghi_up, dtype=float)
    ghi_down = np.asarray(ghi_down, dtype=float)
    if np.any(ghi_down > ghi_up + 1e-9):
        raise ValueError("ghi_down must not exceed ghi_up")
    up = pv_production(ghi_up, plant, air_temp, day_of_year, k_noct)
    down = pv_production(ghi_down, plant, air_temp, day_of_year, k_noct)
    return up, down


def prosumption_bounds(c_up, c_down, pv_up, pv_down) -> ProsumptionBounds:
    """Combine consumption envelope and PV band into net-demand bounds."""
    l_up = np.asarray(c_up, dtype=float) - np.asarray(pv_down, dtype=float)
    l_down = np.asarray(c_down, dtype=float) - np.asarray(pv_up, dtype=float)
    return ProsumptionBounds(l_up=l_up, l_down=l_down)


def fit_wf_ar(history, order: int = 4) -> WfForecast:
    """Fit an AR(order) model to per-slot frequency-energy increments and forecast
    the next day's cumulative bounds.

    The increment series of all days is concatenated, regressed with an intercept
    by least squares, and iterated forward 288 slots. The 2.5%/97.5% empirical
    quantiles of the one-step residuals (clamped to include zero) widen each
    predicted increment; cumulative sums anchored at zero give w_up/w_down.
    """
    days = [np.asarray(d, dtype=float) for d in history]
    if len(days) <= order:
        raise ValueError("history must be longer than the AR order")
    if any(d.shape != (N_SLOTS,) for d in days):
        raise ValueError(f"each history day must have {N_SLOTS} increments")
    y = np.concatenate(days)
    rows = len(y) - order
    design = np.ones((rows, order + 1))
    for lag in range(1, order + 1):
        design[:, lag] = y[order - lag:len(y) - lag]
    target = y[order:]
    coef, _, _, _ = np.linalg.lstsq(design, target, rcond=None)
    if not np.all(np.isfinite(coef)):
        raise NumericFailure("autoregression produced non-finite coefficients")
    residuals = target - design @ coef
    q_lo, q_hi = np.quantile(residuals, [0.025, 0.975])
    q_lo, q_hi = min(q_lo, 0.0), max(q_hi, 0.0)

    tail = list(y[-order:])
    preds = np.empty(N_SLOTS)
    for n in range(N_SLOTS):
        preds[n] = coef[0] + np.dot(coef[1:], tail[::-1])
        tail = tail[1:] + [preds[n]]

    steps = np.arange(N_SLOTS, dtype=float)
    w_point = np.concatenate(([0.0], np.cumsum(preds[:-1])))
    w_up = w_point + steps * q_hi
    w_down = w_point + steps * q_lo
    return WfForecast(w_up=w_up, w_down=w_down, ar_order=order,
                      coefficients=coef, w_point=w_point)


def wf_increments_from_frequency(f_values: np.ndarray, dt_s: float,
                                 f_nom: float = 50.0) -> np.ndarray:
    """Per-slot integrals of (f - f_nom) in Hz*s from a uniformly sampled day."""
    f = np.asarray(f_values, dtype=float)
    per_slot = int(round(SLOT_SECONDS / dt_s))
    if f.size != per_slot * N_SLOTS:
        raise ValueError("frequency record does not cover exactly one day")
    dev = (f - f_nom).reshape(N_SLOTS, per_slot)
    return dev.sum(axis=1) * dt_s


# ---------------------------------------------------------------------------
# file interfaces


def load_holidays(path) -> set:
    """Holiday calendar: JSON array of ISO dates."""
    with open(path) as fh:
        raw = json.load(fh)
    if not isinstance(raw, list):
        raise ValueError(f"{path}: holiday calendar must be a JSON list of dates")
    return {dt.date.fromisoformat(item) for item in raw}


def load_history_csv(path, holiday_calendar):
    """Read 5-minute historical rows (timestamp, g_kw, p_kw, ghi_wm2, temp_c).

    Returns (days, temps): classified HistoricalDay records in date order plus a
    per-date air-temperature array used by the PV estimator.
    """
    by_date = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"timestamp", "g_kw", "p_kw", "ghi_wm2", "temp_c"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            missing = sorted(required - set(reader.fieldnames or []))
            raise ValueError(f"{path}: missing columns {missing}")
        for lineno, row in enumerate(reader, start=2):
            try:
                stamp = dt.datetime.fromisoformat(row["timestamp"])
                rec = (float(row["g_kw"]), float(row["p_kw"]),
                       float(row["ghi_wm2"]), float(row["temp_c"]))
            except (ValueError, TypeError) as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc
            slot = int((stamp - stamp.replace(hour=0, minute=0, second=0)).total_seconds()
                       // SLOT_SECONDS)
            by_date.setdefault(stamp.date(), {})[slot] = rec

    days, temps = [], {}
    for date in sorted(by_date):
        slots = by_date[date]
        if len(slots) != N_SLOTS:
            raise ValueError(f"{path}: day {date} has {len(slots)} slots, expected {N_SLOTS}")
        data = np.array([slots[n] for n in range(N_SLOTS)])
        days.append(HistoricalDay(date=date, g=data[:, 0], p=data[:, 1], ghi=data[:, 2],
                                  category=classify_day(date, holiday_calendar)))
        temps[date] = data[:, 3]
    return days, temps


def load_ghi_forecast_csv(path):
    """GHI forecast band: CSV with columns slot, ghi_up_wm2, ghi_down_wm2, temp_c."""
    up = np.zeros(N_SLOTS)
    down = np.zeros(N_SLOTS)
    temp = np.zeros(N_SLOTS)
    seen = set()
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"slot", "ghi_up_wm2", "ghi_down_wm2", "temp_c"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            missing = sorted(required - set(reader.fieldnames or []))
            raise ValueError(f"{path}: missing columns {missing}")
        for lineno, row in enumerate(reader, start=2):
            try:
                n = int(row["slot"])
                up[n] = float(row["ghi_up_wm2"])
                down[n] = float(row["ghi_down_wm2"])
                temp[n] = float(row["temp_c"])
            except (ValueError, IndexError) as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc
            seen.add(n)
    if len(seen) != N_SLOTS:
        raise ValueError(f"{path}: expected {N_SLOTS} slots, found {len(seen)}")
    return up, down, temp


def load_wf_history_csv(path):
    """Frequency-energy increment history: CSV with columns date, slot, dwf_hzs."""
    by_date = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"date", "slot", "dwf_hzs"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            missing = sorted(required - set(reader.fieldnames or []))
            raise ValueError(f"{path}: missing columns {missing}")
        for lineno, row in enumerate(reader, start=2):
            try:
                date = dt.date.fromisoformat(row["date"])
                n = int(row["slot"])
                val = float(row["dwf_hzs"])
            except (ValueError, TypeError) as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc
            by_date.setdefault(date, {})[n] = val
    history = []
    for date in sorted(by_date):
        slots = by_date[date]
        if len(slots) != N_SLOTS:
            raise ValueError(f"{path}: day {date} has {len(slots)} increments")
        history.append(np.array([slots[n] for n in range(N_SLOTS)]))
    return history


def save_forecast_csv(path, bounds: ProsumptionBounds, wf: WfForecast) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["slot", "l_up", "l_down", "w_up", "w_down"])
        for n in range(N_SLOTS):
            writer.writerow([n, f"{bounds.l_up[n]:.10g}", f"{bounds.l_down[n]:.10g}",
                             f"{wf.w_up[n]:.10g}", f"{wf.w_down[n]:.10g}"])


def load_forecast_csv(path):
    """Inverse of save_forecast_csv; returns (ProsumptionBounds, WfForecast)."""
    cols = {name: np.zeros(N_SLOTS) for name in ("l_up", "l_down", "w_up", "w_down")}
    count = 0
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"slot", *cols}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            missing = sorted(required - set(reader.fieldnames or []))
            raise ValueError(f"{path}: missing columns {missing}")
        for lineno, row in enumerate(reader, start=2):
            try:
                n = int(row["slot"])
                for name in cols:
                    cols[name][n] = float(row[name])
            except (ValueError, IndexError) as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc
            count += 1
    if count != N_SLOTS:
        raise ValueError(f"{path}: expected {N_SLOTS} rows, found {count}")
    bounds = ProsumptionBounds(l_up=cols["l_up"], l_down=cols["l_down"])
    wf = WfForecast(w_up=cols["w_up"], w_down=cols["w_down"], ar_order=0,
                    coefficients=np.zeros(1))
    return bounds, wf


def make_prosumption_forecast(days, temps, plant: PvPlant, target_date: dt.date,
                              holiday_calendar, s: int = 10, lambda_forget: float = 0.98,
                              seed=0, ghi_up=None, ghi_down=None, temp_forecast=None):
    """Full prosumption forecasting pipeline for one target day.

    Historical days are disaggregated with a net-load-signed PV estimate
    (-production, so the consumption series keeps its physical orientation),
    absorbed into per-category statistics in date order, and the target day's
    category statistics sampled into an envelope combined with the PV band.

    Returns (bounds, scenarios, consumption_envelope, pv_band).
    """
    stats = {cat: empty_stats(lambda_forget) for cat in CATEGORIES}
    for day in days:
        doy = day.date.timetuple().tm_yday
        pv_est = pv_production(day.ghi, plant, temps[day.date], day_of_year=doy)
        consumption = disaggregate(day, -pv_est)
        stats[day.category] = update_stats(stats[day.category], consumption)

    category = classify_day(target_date, holiday_calendar)
    cat_stats = stats[category]
    if cat_stats.n_days < 2:
        raise ValueError(f"not enough history for category {category}")
    scenarios = sample_scenarios(cat_stats, s, seed)
    c_down, c_up = envelope(scenarios)
    doy = target_date.timetuple().tm_yday
    pv_up, pv_down = pv_bounds(ghi_up, ghi_down, plant, temp_forecast, day_of_year=doy)
    bounds = prosumption_bounds(c_up, c_down, pv_up, pv_down)
    return bounds, scenarios, (c_down, c_up), (pv_up, pv_down)
