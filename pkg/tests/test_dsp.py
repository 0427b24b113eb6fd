import math
import statistics

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from sklearn.pipeline import make_pipeline

from hydropipe.dsp import (AdcSample, ChannelConfig, MedianFilter, burst_mean,
                           counts_to_voltage, median_filter)
from hydropipe.errors import HydroError

counts = st.integers(min_value=0, max_value=4095)
windows = st.lists(counts, min_size=1, max_size=64)


def median_oracle(window):
    # statistics.median averages the two central values for even lengths;
    # flooring that matches int division on non-negative counts
    return math.floor(statistics.median(window))


@pytest.mark.parametrize("window, expected", [
    ([3, 1, 2], 2),
    ([10, 20, 30, 40], 25),
    ([1, 2, 3, 6], 2),
    ([7], 7),
    ([5, 6], 5),
])
def test_median_filter_examples(window, expected):
    assert median_filter(window) == expected


def test_median_filter_empty():
    with pytest.raises(HydroError) as err:
        median_filter([])
    assert err.value.code == "empty-window"


def test_median_filter_rejects_negative_counts():
    with pytest.raises(HydroError):
        median_filter([1, -2, 3])


@given(windows)
def test_median_matches_oracle(window):
    assert median_filter(window) == median_oracle(window)


@given(windows, st.randoms())
def test_median_permutation_invariant(window, rnd):
    shuffled = list(window)
    rnd.shuffle(shuffled)
    assert median_filter(shuffled) == median_filter(window)


def test_median_does_not_mutate_input():
    window = [5, 3, 9, 1]
    median_filter(window)
    assert window == [5, 3, 9, 1]


@pytest.mark.parametrize("burst, expected", [
    ([512] * 20, 512.0),
    ([0, 1023], 511.5),
    (list(range(500, 520)), 509.5),
])
def test_burst_mean_examples(burst, expected):
    assert burst_mean(burst) == expected


def test_burst_mean_empty():
    with pytest.raises(HydroError, match="empty-window"):
        burst_mean([])


@given(windows, st.randoms())
def test_burst_mean_bounded_and_permutation_invariant(burst, rnd):
    mean = burst_mean(burst)
    assert min(burst) <= mean <= max(burst)
    shuffled = list(burst)
    rnd.shuffle(shuffled)
    assert burst_mean(shuffled) == pytest.approx(mean, rel=1e-12)


def test_counts_to_voltage_examples():
    cfg = ChannelConfig(bits=10, vref=5.0)
    assert counts_to_voltage(0, cfg) == 0.0
    assert counts_to_voltage(512, cfg) == 2.5
    assert counts_to_voltage(0, ChannelConfig(bits=12, vref=3.3)) == 0.0
    with pytest.raises(HydroError) as err:
        counts_to_voltage(1024, cfg)
    assert err.value.code == "adc-range"
    with pytest.raises(HydroError):
        counts_to_voltage(-1, cfg)


@given(counts, counts)
def test_counts_to_voltage_monotone(a, b):
    cfg = ChannelConfig(bits=12, vref=3.3)
    lo, hi = sorted((a, b))
    assert counts_to_voltage(lo, cfg) <= counts_to_voltage(hi, cfg)


@pytest.mark.parametrize("kwargs", [
    {"bits": 8}, {"vref": 0.0}, {"sample_period": 0}, {"burst_len": 0},
])
def test_channel_config_invariants(kwargs):
    with pytest.raises(HydroError):
        ChannelConfig(**kwargs)


def test_adc_sample_range():
    AdcSample("ph", 1023, 0, bits=10)
    AdcSample("tds", 4095, 0, bits=12)
    with pytest.raises(HydroError, match="adc-range"):
        AdcSample("ph", 1024, 0, bits=10)


class TestMedianFilterEstimator:
    def test_rows(self):
        X = np.array([[3, 1, 2, 9], [10, 20, 30, 40]])
        out = MedianFilter(window=4).fit_transform(X)
        assert out.tolist() == [2, 25]

    def test_window_check(self):
        with pytest.raises(ValueError):
            MedianFilter(window=30).fit(np.zeros((2, 4)))

    def test_params_and_pipeline(self):
        filt = MedianFilter(window=None)
        assert filt.get_params() == {"window": None}
        filt.set_params(window=3)
        assert filt.window == 3
        pipe = make_pipeline(MedianFilter(window=3))
        assert pipe.fit_transform([[1, 5, 3]]).tolist() == [3]
