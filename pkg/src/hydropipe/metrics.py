"""Energy and reliability arithmetic, plus report formatting helpers."""

import json
import math
from dataclasses import dataclass, field
from typing import NamedTuple

from .errors import HydroError

DAY_S = 86400


@dataclass(frozen=True)
class PowerProfile:
    """Mode currents (mA) and time spent in each mode (s)."""

    currents_ma: dict
    durations_s: dict
    voltage: float = 5.0

    def __post_init__(self):
        if set(self.currents_ma) != set(self.durations_s):
            raise HydroError("bad-profile", "currents and durations name different modes")
        if any(t < 0 for t in self.durations_s.values()):
            raise HydroError("bad-profile", "negative duration")

    @property
    def total_s(self):
        return sum(self.durations_s.values())

    @property
    def charge_mas(self):
        return sum(self.currents_ma[m] * self.durations_s[m] for m in self.currents_ma)


# one measurement every 10 s: 10% sensing, 1% radio, the rest asleep
REFERENCE_DAY_PROFILE = PowerProfile(
    currents_ma={"active-sensing": 120.0, "wifi-tx": 185.0, "sleep": 15.15},
    durations_s={"active-sensing": 8640, "wifi-tx": 864, "sleep": 76896},
)

# published daily totals, kept for comparison only
PRINTED_DAILY_AVERAGE_MA = 72.0
PRINTED_DAILY_MAH = 1728.0
PRINTED_DAILY_WH = 8.54


class DailyEnergy(NamedTuple):
    mah: float
    wh: float


def p_avg(profile):
    total = profile.total_s
    if total <= 0:
        raise HydroError("empty-profile")
    return profile.charge_mas / total


def e_daily(profile):
    if abs(profile.total_s - DAY_S) > 1e-9:
        raise HydroError("not-a-day", f"durations sum to {profile.total_s} s")
    mah = profile.charge_mas / 3600.0
    return DailyEnergy(mah, mah * profile.voltage / 1000.0)


def success_rate(n_success, n_total):
    if n_total < 1:
        raise HydroError("div-zero", "n_total must be >= 1")
    return 100.0 * n_success / n_total


def compression_ratio(s_orig, s_comp):
    if s_comp < 1:
        raise HydroError("div-zero", "compressed size must be >= 1")
    return 100.0 * s_orig / s_comp


@dataclass(frozen=True)
class Target:
    key: str
    published_value: str
    op: str
    limit: float
    note: str = ""


# default envelopes derived from the published field results
PUBLISHED_TARGETS = (
    Target("ph_mean_abs_error", "0.06 pH", "<=", 0.06, "pH, average absolute error"),
    Target("ph_max_abs_error", "0.08 pH", "<=", 0.08, "pH, worst buffer"),
    Target("do_mean_abs_pct", "+1.20 %", "<=", 1.5, "DO, average error"),
    Target("tds_max_abs_pct", "1.99 %", "<=", 2.0, "TDS, per-solution error"),
    Target("eventual_delivery_pct", "0 % loss", ">=", 100.0, "data loss during outages"),
    Target("pending", "0 % loss", "<=", 0.0, "data loss during outages"),
    Target("first_attempt_success_pct", "99.83 %", ">=", 99.0, "cloud transmission, target >99 %"),
    Target("latency_mean_s", "1.75 s", "<", 3.0, "latency, target <3 s"),
    Target("latency_max_s", "4.2 s", "<", 10.0, "latency, target <10 s"),
    Target("sensor_failure_rate", "0", "<=", 0.0, "sensor failures"),
)
TARGETS_BY_KEY = {t.key: t for t in PUBLISHED_TARGETS}

OPS = {
    "<=": lambda v, lim: v <= lim,
    "<": lambda v, lim: v < lim,
    ">=": lambda v, lim: v >= lim,
    ">": lambda v, lim: v > lim,
}


def check_envelope(value, op, limit):
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return False
    return OPS[op](value, limit)


@dataclass
class ErrorStats:
    n: int = 0
    mean_abs: float = math.nan
    max_abs: float = math.nan
    mean_signed: float = math.nan
    by_point: dict = field(default_factory=dict)


def error_stats(pairs, relative=False, min_truth=0.0):
    """Absolute (or percent) errors over ``(truth, measured)`` pairs.

    ``by_point`` groups errors by truth value when there are at most ten
    distinct truths, mirroring the per-solution rows of a calibration table.
    """
    errors = []
    groups = {}
    for truth, measured in pairs:
        if measured is None or truth is None:
            continue
        if relative:
            if abs(truth) <= min_truth:
                continue
            err = 100.0 * (measured - truth) / truth
        else:
            err = measured - truth
        errors.append(err)
        groups.setdefault(round(truth, 4), []).append(err)
    if not errors:
        return ErrorStats()
    by_point = {}
    if len(groups) <= 10:
        by_point = {k: sum(v) / len(v) for k, v in sorted(groups.items())}
    return ErrorStats(
        n=len(errors),
        mean_abs=sum(abs(e) for e in errors) / len(errors),
        max_abs=max(abs(e) for e in errors),
        mean_signed=sum(errors) / len(errors),
        by_point=by_point,
    )


def mean_std_max(values):
    if not values:
        return math.nan, math.nan, math.nan
    n = len(values)
    mean = sum(values) / n
    var = sum((v - mean) ** 2 for v in values) / n
    return mean, math.sqrt(var), max(values)


def fmt_value(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        return f"{value:.6f}"
    return str(value)


def format_kv(metrics):
    return "".join(f"{key}={fmt_value(value)}\n" for key, value in metrics.items())


def format_ndjson(metrics):
    clean = {k: (None if isinstance(v, float) and math.isnan(v) else v)
             for k, v in metrics.items()}
    return json.dumps(clean, separators=(",", ":"), sort_keys=False) + "\n"


def energy_summary(profile=REFERENCE_DAY_PROFILE):
    energy = e_daily(profile)
    return {
        "energy_p_avg_ma": p_avg(profile),
        "energy_daily_mah": energy.mah,
        "energy_daily_wh": energy.wh,
        "energy_voltage_v": profile.voltage,
        "energy_printed_daily_average_ma": PRINTED_DAILY_AVERAGE_MA,
        "energy_printed_daily_mah": PRINTED_DAILY_MAH,
        "energy_printed_daily_wh": PRINTED_DAILY_WH,
    }


ENERGY_NOTE = (
    "note: the mode durations (8640 s sensing, 864 s radio, 76896 s sleep) give "
    "{mah:.2f} mAh/day ({ma:.2f} mA average, {wh:.2f} Wh at {v:.1f} V). The published "
    "totals of 1728 mAh, 72 mA and 8.54 Wh do not follow from those durations; "
    "they are listed for comparison and not asserted."
)


def energy_note(profile=REFERENCE_DAY_PROFILE):
    energy = e_daily(profile)
    return ENERGY_NOTE.format(mah=energy.mah, ma=p_avg(profile), wh=energy.wh,
                              v=profile.voltage)
