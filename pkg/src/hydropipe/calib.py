"""Calibration math for the pH, TDS and dissolved-oxygen channels.

The functional API (``fit_ph_calibration``, ``tds_from_raw`` ...) is what the
simulator uses. :class:`PhCalibrator`, :class:`TdsConverter` and
:class:`DoConverter` wrap it in scikit-learn's estimator protocol.
"""

import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted, check_X_y

from ._validation import check_columns, check_finite
from .errors import ConfigError, HydroError

PH_BUFFERS = (4.0, 5.5, 7.0, 8.5, 10.0)
PH_MIN, PH_MAX = 0.0, 14.0

# TDS probe polynomial, ppm per volt^k at 25 C before the k-factor
TDS_CUBIC = (133.42, -255.86, 857.39)
TDS_MAX_PPM = 1200.0
TDS_TOLERANCE_PPM = 1e-6


@dataclass(frozen=True)
class CalibrationCurve:
    slope: float
    offset: float
    u_slope: float = 0.0
    u_offset: float = 0.0
    points_used: int = 5

    def __post_init__(self):
        if self.points_used < 2:
            raise HydroError("degenerate-calibration", "need at least 2 points")
        if not math.isfinite(self.slope) or self.slope == 0:
            raise HydroError("degenerate-calibration", f"slope={self.slope}")


@dataclass(frozen=True)
class TdsCalib:
    k_factor: float = 0.5
    temp_coeff: float = 0.02
    ref_temp: float = 25.0

    def __post_init__(self):
        if not self.k_factor > 0 or self.temp_coeff < 0:
            raise HydroError("bad-calibration", "k_factor > 0 and temp_coeff >= 0")

    def compensation(self, temp):
        return 1.0 + self.temp_coeff * (temp - self.ref_temp)


@dataclass(frozen=True)
class DoCalib:
    """Single-point galvanic probe calibration; voltages in mV."""

    cal_v: float = 190.0
    cal_t: float = 25.0
    slope_coeff: float = 35.0

    def __post_init__(self):
        if not self.cal_v > 0 or not 0 <= self.cal_t <= 40:
            raise HydroError("bad-calibration", "cal_v > 0 and 0 <= cal_t <= 40")

    def saturation_mv(self, temp):
        return self.cal_v + self.slope_coeff * temp - self.cal_t * self.slope_coeff


class DoTable:
    """Oxygen saturation (ug/L) at 100% air saturation for 0..40 C."""

    size = 41

    def __init__(self, values):
        values = tuple(int(v) for v in values)
        if len(values) != self.size:
            raise ConfigError("do-table", f"expected 41 values, got {len(values)}")
        if min(values) <= 0:
            raise ConfigError("do-table", "values must be positive")
        if any(b >= a for a, b in zip(values, values[1:])):
            raise ConfigError("do-table", "values must strictly decrease")
        self.values = values

    def __getitem__(self, temp_index):
        return self.values[temp_index]

    def __len__(self):
        return self.size

    def __eq__(self, other):
        return isinstance(other, DoTable) and other.values == self.values

    def __repr__(self):
        return f"DoTable(25C={self.values[25]})"

    @classmethod
    def parse(cls, text):
        try:
            return cls(int(tok) for tok in text.split())
        except ValueError as exc:
            raise ConfigError("do-table", str(exc)) from None

    @classmethod
    def from_file(cls, path):
        return cls.parse(Path(path).read_text(encoding="ascii"))

    @classmethod
    def default(cls):
        text = resources.files("hydropipe").joinpath("data/do_table.txt").read_text()
        return cls.parse(text)

    def lookup(self, temp, interpolate=False):
        if not 0 <= temp <= 40:
            raise HydroError("temp-range", f"{temp} C")
        if not interpolate:
            return float(self.values[int(math.floor(temp + 0.5))])
        lo = int(math.floor(temp))
        if lo == 40:
            return float(self.values[40])
        frac = temp - lo
        return self.values[lo] + frac * (self.values[lo + 1] - self.values[lo])


def fit_ph_calibration(raw, buffers=PH_BUFFERS):
    """Least-squares line through (raw counts, buffer pH) pairs.

    Slope and offset follow the classic two-pass centered sums. The
    uncertainties are the ordinary least-squares standard errors from the
    fit residuals; they are NaN when only two points are given.
    """
    x = [check_finite(v, "raw") for v in raw]
    y = [check_finite(v, "buffer") for v in buffers]
    n = len(x)
    if n != len(y):
        raise HydroError("degenerate-calibration", "raw and buffers differ in length")
    if n < 2:
        raise HydroError("degenerate-calibration", "need at least 2 points")
    if any(not PH_MIN <= b <= PH_MAX for b in y):
        raise HydroError("buffer-range", "buffer pH outside 0..14")

    mean_x = sum(x) / n
    mean_y = sum(y) / n
    numerator = 0.0
    denominator = 0.0
    for xi, yi in zip(x, y):
        numerator += (xi - mean_x) * (yi - mean_y)
        denominator += (xi - mean_x) ** 2
    if denominator == 0:
        raise HydroError("degenerate-calibration", "all raw readings identical")
    slope = numerator / denominator
    offset = mean_y - slope * mean_x

    if n > 2:
        sse = sum((yi - (slope * xi + offset)) ** 2 for xi, yi in zip(x, y))
        s2 = sse / (n - 2)
        u_slope = math.sqrt(s2 / denominator)
        u_offset = math.sqrt(s2 * (1.0 / n + mean_x**2 / denominator))
    else:
        u_slope = u_offset = math.nan
    return CalibrationCurve(slope, offset, u_slope, u_offset, n)


def ph_from_counts(mean_counts, curve):
    """Return ``(pH, clamped)`` for an averaged ADC reading."""
    ph = curve.slope * mean_counts + curve.offset
    if ph < PH_MIN:
        return PH_MIN, True
    if ph > PH_MAX:
        return PH_MAX, True
    return ph, False


def ph_uncertainty(curve, cfg, quantization="counts"):
    """Combined 1-sigma pH uncertainty from ADC quantization and the intercept.

    ``quantization="counts"`` carries one code of uniform quantization noise
    (1/sqrt(12) counts), which matches a per-count slope. ``"volts"`` uses
    the same noise expressed in volts at ``cfg.vref``.
    """
    u_adc = 1.0 / math.sqrt(12.0)
    if quantization == "volts":
        u_adc *= cfg.lsb_volts
    elif quantization != "counts":
        raise ValueError(f"unknown quantization unit {quantization!r}")
    u_offset = 0.0 if math.isnan(curve.u_offset) else curve.u_offset
    return math.hypot(curve.slope * u_adc, u_offset)


def _tds_cubic(v, k_factor):
    a3, a2, a1 = TDS_CUBIC
    return (a3 * v**3 + a2 * v**2 + a1 * v) * k_factor


def tds_from_raw(v_raw, temp, cal=TdsCalib()):
    """Temperature-compensated TDS in ppm from the probe voltage."""
    k = cal.compensation(temp)
    if k <= 0:
        raise HydroError("compensation-domain", f"K={k:.4g} at {temp} C")
    tds = _tds_cubic(v_raw / k, cal.k_factor)
    return max(tds, 0.0)


def tds_invert(tds, temp, cal=TdsCalib()):
    """Probe voltage that reads ``tds`` ppm at ``temp``, by bisection.

    The cubic is strictly increasing for V >= 0 (its derivative has a
    negative discriminant) so the root is unique.
    """
    if not 0 <= tds <= TDS_MAX_PPM:
        raise HydroError("tds-range", f"{tds} ppm")
    k = cal.compensation(temp)
    if k <= 0:
        raise HydroError("compensation-domain", f"K={k:.4g} at {temp} C")
    if tds == 0:
        return 0.0
    # solve on the compensated voltage, then undo the compensation
    a3, a2, a1 = TDS_CUBIC
    target = tds / cal.k_factor
    lo, hi = 0.0, 1.0
    while (a3 * hi + a2) * hi * hi + a1 * hi < target:
        hi *= 2.0
    tol = TDS_TOLERANCE_PPM * 1e-3 / cal.k_factor
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        value = ((a3 * mid + a2) * mid + a1) * mid
        if abs(value - target) <= tol:
            return mid * k
        if value < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi) * k


def do_from_raw(v_mv, temp, table, cal=DoCalib(), interpolate=False):
    """Dissolved oxygen in mg/L from the probe voltage in mV."""
    saturation = table.lookup(temp, interpolate)
    denominator = cal.saturation_mv(temp)
    if denominator <= 0:
        raise HydroError("do-domain", f"saturation voltage {denominator} mV")
    return v_mv * saturation / (denominator * 1000.0)


def load_calibration_pairs(path):
    """Read a 5-line ``raw_counts buffer_pH`` file; ``#`` starts a comment."""
    raw, buffers = [], []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ConfigError("calibration-file", f"line {lineno}: expected 2 fields")
        try:
            raw.append(float(parts[0]))
            buffers.append(float(parts[1]))
        except ValueError:
            raise ConfigError("calibration-file", f"line {lineno}: not a number") from None
    if len(raw) != 5:
        raise ConfigError("calibration-file", f"expected 5 pairs, got {len(raw)}")
    return raw, buffers


class PhCalibrator(RegressorMixin, BaseEstimator):
    """Linear pH calibration as a regressor: counts in, pH out.

    Parameters
    ----------
    clamp : bool
        Clip predictions to the 0..14 pH scale.

    Attributes
    ----------
    curve_ : CalibrationCurve
    slope_, offset_ : float
    """

    def __init__(self, clamp=True):
        self.clamp = clamp

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        if X.shape[1] != 1:
            raise ValueError("PhCalibrator expects a single column of counts")
        self.curve_ = fit_ph_calibration(X[:, 0], y)
        self.slope_ = self.curve_.slope
        self.offset_ = self.curve_.offset
        self.n_features_in_ = 1
        return self

    def predict(self, X):
        check_is_fitted(self, "curve_")
        X = check_columns(X, 1)
        ph = self.slope_ * X[:, 0] + self.offset_
        if self.clamp:
            ph = np.clip(ph, PH_MIN, PH_MAX)
        return ph


class TdsConverter(TransformerMixin, BaseEstimator):
    """Map ``[v_raw, temp_c]`` rows to compensated TDS in ppm."""

    def __init__(self, k_factor=0.5, temp_coeff=0.02, ref_temp=25.0):
        self.k_factor = k_factor
        self.temp_coeff = temp_coeff
        self.ref_temp = ref_temp

    def fit(self, X, y=None):
        check_columns(X, 2)
        self.cal_ = TdsCalib(self.k_factor, self.temp_coeff, self.ref_temp)
        self.n_features_in_ = 2
        return self

    def transform(self, X):
        check_is_fitted(self, "cal_")
        X = check_columns(X, 2)
        return np.array([tds_from_raw(v, t, self.cal_) for v, t in X])

    def inverse_transform(self, X):
        """``[tds_ppm, temp_c]`` rows back to probe voltage."""
        check_is_fitted(self, "cal_")
        X = check_columns(X, 2)
        return np.array([tds_invert(s, t, self.cal_) for s, t in X])


class DoConverter(TransformerMixin, BaseEstimator):
    """Map ``[v_mv, temp_c]`` rows to dissolved oxygen in mg/L."""

    def __init__(self, table=None, cal_v=190.0, cal_t=25.0, slope_coeff=35.0,
                 interpolate=False):
        self.table = table
        self.cal_v = cal_v
        self.cal_t = cal_t
        self.slope_coeff = slope_coeff
        self.interpolate = interpolate

    def fit(self, X, y=None):
        check_columns(X, 2)
        self.table_ = self.table if self.table is not None else DoTable.default()
        self.cal_ = DoCalib(self.cal_v, self.cal_t, self.slope_coeff)
        self.n_features_in_ = 2
        return self

    def transform(self, X):
        check_is_fitted(self, "cal_")
        X = check_columns(X, 2)
        return np.array([
            do_from_raw(v, t, self.table_, self.cal_, self.interpolate) for v, t in X
        ])
