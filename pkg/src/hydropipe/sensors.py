"""Ground-truth water state and forward sensor models.

Forward models turn a :class:`WaterTruth` into what each sensor would report
(ADC counts, millivolts, echo time). They are the inverses of the routines in
:mod:`hydropipe.calib`, which lets the simulator check accuracy closed-loop.
All noise is Gaussian and expressed in the channel's native LSB.
"""

import math
from dataclasses import dataclass

import numpy as np

from .calib import DoCalib, TdsCalib, tds_invert
from .dsp import PH_CHANNEL, TDS_CHANNEL, AdcSample
from .errors import HydroError

SOUND_SPEED_CM_PER_US = 0.0343
ULTRASONIC_MIN_CM = 2.0
ULTRASONIC_MAX_CM = 400.0
TEMP_LSB_C = 1.0 / 16.0
DAY_S = 86400.0

BOUNDS = {
    "ph": (0.0, 14.0),
    "do_mgl": (0.0, 20.0),
    "temp_c": (0.0, 40.0),
    "tds_ppm": (0.0, 1200.0),
    "level_cm": (0.0, math.inf),
}


@dataclass(frozen=True)
class WaterTruth:
    ph: float = 7.0
    do_mgl: float = 8.24
    temp_c: float = 25.0
    tds_ppm: float = 367.475
    level_cm: float = 50.0

    def __post_init__(self):
        for name, (lo, hi) in BOUNDS.items():
            value = getattr(self, name)
            if not lo <= value <= hi:
                raise HydroError("truth-range", f"{name}={value}")

    def clamped(self, **values):
        """Copy with ``values`` applied and every field clipped to its bounds."""
        fields = {
            name: min(max(values.get(name, getattr(self, name)), lo), hi)
            for name, (lo, hi) in BOUNDS.items()
        }
        return WaterTruth(**fields)


@dataclass(frozen=True)
class NoiseSpec:
    sigma_counts: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.sigma_counts < 0:
            raise HydroError("bad-noise", f"sigma={self.sigma_counts}")

    def rng(self):
        return np.random.default_rng(self.seed)


@dataclass(frozen=True)
class TruthDynamics:
    """Random-walk step sizes (units per sqrt(second)) and a daily temperature swing."""

    walk_ph: float = 0.0
    walk_do: float = 0.0
    walk_temp: float = 0.0
    walk_tds: float = 0.0
    walk_level: float = 0.0
    diurnal_amplitude: float = 0.0
    diurnal_period_s: float = DAY_S

    @property
    def is_static(self):
        return not any((self.walk_ph, self.walk_do, self.walk_temp,
                        self.walk_tds, self.walk_level, self.diurnal_amplitude))


def step_truth(state, dt, rng, dynamics=TruthDynamics(), t=0.0):
    """Advance ``state`` by ``dt`` seconds starting at time ``t``.

    A static ``dynamics`` returns ``state`` untouched and draws nothing
    from ``rng``.
    """
    if dynamics.is_static:
        return state
    scale = math.sqrt(dt)
    steps = rng.normal(size=5) * scale
    omega = 2.0 * math.pi / dynamics.diurnal_period_s
    diurnal = dynamics.diurnal_amplitude * (math.sin(omega * (t + dt)) - math.sin(omega * t))
    return state.clamped(
        ph=state.ph + dynamics.walk_ph * steps[0],
        do_mgl=state.do_mgl + dynamics.walk_do * steps[1],
        temp_c=state.temp_c + dynamics.walk_temp * steps[2] + diurnal,
        tds_ppm=state.tds_ppm + dynamics.walk_tds * steps[3],
        level_cm=state.level_cm + dynamics.walk_level * steps[4],
    )


def _quantize(ideal_counts, sigma, rng, size, max_counts):
    if sigma > 0:
        ideal_counts = ideal_counts + rng.normal(0.0, sigma, size)
    counts = np.floor(np.asarray(ideal_counts, dtype=np.float64) + 0.5)
    return np.clip(counts, 0, max_counts).astype(np.int64)


def ph_counts(ph, curve, sigma, rng, size, cfg=PH_CHANNEL):
    """``size`` quantized pH samples for a sensor whose response is ``curve``."""
    ideal = (ph - curve.offset) / curve.slope
    return _quantize(np.full(size, ideal), sigma, rng, size, cfg.max_counts)


def ph_forward(truth, curve, noise=NoiseSpec(), rng=None, t=0, cfg=PH_CHANNEL):
    rng = rng if rng is not None else noise.rng()
    counts = ph_counts(truth.ph, curve, noise.sigma_counts, rng, 1, cfg)
    return AdcSample("ph", int(counts[0]), t, cfg.bits)


def tds_voltage(truth, cal=TdsCalib()):
    """Probe voltage for the true TDS at the true temperature."""
    # inverting at the reference temperature and scaling by K is the same
    # as inverting at the water temperature
    return tds_invert(truth.tds_ppm, cal.ref_temp, cal) * cal.compensation(truth.temp_c)


def tds_counts(truth, sigma, rng, size, cal=TdsCalib(), cfg=TDS_CHANNEL):
    ideal = tds_voltage(truth, cal) / cfg.vref * (1 << cfg.bits)
    return _quantize(np.full(size, ideal), sigma, rng, size, cfg.max_counts)


def tds_forward(truth, cal=TdsCalib(), cfg=TDS_CHANNEL, noise=NoiseSpec(), rng=None, t=0):
    rng = rng if rng is not None else noise.rng()
    counts = tds_counts(truth, noise.sigma_counts, rng, 1, cal, cfg)
    return AdcSample("tds", int(counts[0]), t, cfg.bits)


def do_forward(truth, table, cal=DoCalib(), noise=NoiseSpec(), rng=None, cfg=PH_CHANNEL):
    """Galvanic probe output in mV; noise is in LSBs of the node ADC."""
    if not 0 <= truth.temp_c <= 40:
        raise HydroError("temp-range", f"{truth.temp_c} C")
    saturation_mv = cal.saturation_mv(truth.temp_c)
    if saturation_mv <= 0:
        raise HydroError("do-domain", f"saturation voltage {saturation_mv} mV")
    v_mv = truth.do_mgl * saturation_mv * 1000.0 / table.lookup(truth.temp_c)
    if noise.sigma_counts > 0:
        rng = rng if rng is not None else noise.rng()
        v_mv += rng.normal(0.0, noise.sigma_counts) * cfg.lsb_volts * 1000.0
    return max(v_mv, 0.0)


def temp_forward(truth, noise=NoiseSpec(), rng=None):
    """Digital thermometer reading, quantized to 1/16 C."""
    lsb = truth.temp_c / TEMP_LSB_C
    if noise.sigma_counts > 0:
        rng = rng if rng is not None else noise.rng()
        lsb += rng.normal(0.0, noise.sigma_counts)
    return math.floor(lsb + 0.5) * TEMP_LSB_C


def level_forward(truth, mount_height_cm, noise=NoiseSpec(), rng=None):
    """Round-trip ultrasonic echo time in microseconds."""
    distance = mount_height_cm - truth.level_cm
    if not ULTRASONIC_MIN_CM <= distance <= ULTRASONIC_MAX_CM:
        raise HydroError("ultrasonic-range", f"distance {distance:.1f} cm")
    echo_us = distance * 2.0 / SOUND_SPEED_CM_PER_US
    if noise.sigma_counts > 0:
        rng = rng if rng is not None else noise.rng()
        echo_us += rng.normal(0.0, noise.sigma_counts)
    return echo_us


def level_from_echo(echo_us, mount_height_cm):
    distance = echo_us * SOUND_SPEED_CM_PER_US / 2.0
    if not ULTRASONIC_MIN_CM <= distance <= ULTRASONIC_MAX_CM:
        raise HydroError("ultrasonic-range", f"distance {distance:.1f} cm")
    return mount_height_cm - distance


__all__ = [
    "WaterTruth", "NoiseSpec", "TruthDynamics", "step_truth", "ph_counts",
    "ph_forward", "tds_voltage", "tds_counts", "tds_forward", "do_forward",
    "temp_forward", "level_forward", "level_from_echo",
]
