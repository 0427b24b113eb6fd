"""Sampling primitives: ADC samples, burst averaging and the integer median."""

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array

from ._validation import check_window
from .errors import HydroError


@dataclass(frozen=True)
class ChannelConfig:
    """ADC channel settings. ``sample_period`` is in ms."""

    bits: int = 10
    vref: float = 5.0
    sample_period: int = 20
    burst_len: int = 20

    def __post_init__(self):
        if self.bits not in (10, 12):
            raise HydroError("bad-channel", f"bits={self.bits}")
        if not self.vref > 0:
            raise HydroError("bad-channel", f"vref={self.vref}")
        if self.sample_period <= 0 or self.burst_len < 1:
            raise HydroError("bad-channel", "sample_period/burst_len")

    @property
    def max_counts(self):
        return (1 << self.bits) - 1

    @property
    def lsb_volts(self):
        return self.vref / (1 << self.bits)


# Node-side pH channel and gateway-side TDS channel.
PH_CHANNEL = ChannelConfig(bits=10, vref=5.0, sample_period=20, burst_len=20)
TDS_CHANNEL = ChannelConfig(bits=12, vref=3.3, sample_period=40, burst_len=30)


@dataclass(frozen=True)
class AdcSample:
    channel: str
    counts: int
    t: int
    bits: int = 10

    def __post_init__(self):
        if not 0 <= self.counts <= (1 << self.bits) - 1:
            raise HydroError("adc-range", f"{self.channel}: {self.counts}")


def median_filter(window):
    """Median of a window of raw counts with integer semantics.

    Odd lengths return the middle order statistic. Even lengths return the
    truncated mean of the two middle values, as the firmware's ``int``
    arithmetic does.
    """
    ordered = sorted(check_window(window))
    n = len(ordered)
    if n & 1:
        return ordered[(n - 1) // 2]
    return (ordered[n // 2] + ordered[n // 2 - 1]) // 2


def burst_mean(burst):
    values = list(burst)
    if not values:
        raise HydroError("empty-window")
    return float(sum(values)) / len(values)


def counts_to_voltage(counts, cfg):
    if not 0 <= counts <= cfg.max_counts:
        raise HydroError("adc-range", f"{counts} outside 0..{cfg.max_counts}")
    return counts * cfg.vref / (1 << cfg.bits)


class MedianFilter(TransformerMixin, BaseEstimator):
    """Row-wise integer median over windows of raw counts.

    Stateless; ``fit`` only validates shape so the filter can sit inside a
    :class:`sklearn.pipeline.Pipeline`.

    Parameters
    ----------
    window : int
        Expected number of samples per row. ``None`` accepts any width.
    """

    def __init__(self, window=30):
        self.window = window

    def fit(self, X, y=None):
        X = self._check(X)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        X = self._check(X)
        return np.array([median_filter(row) for row in X], dtype=np.int64)

    def _check(self, X):
        X = check_array(X, dtype=np.int64)
        if self.window is not None and X.shape[1] != self.window:
            raise ValueError(f"expected windows of {self.window}, got {X.shape[1]}")
        return X
