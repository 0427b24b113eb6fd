import json
import math
from fractions import Fraction

import pytest

from hydropipe.errors import HydroError
from hydropipe.metrics import (REFERENCE_DAY_PROFILE, PowerProfile, check_envelope,
                               compression_ratio, e_daily, energy_note, energy_summary,
                               error_stats, format_kv, format_ndjson, mean_std_max, p_avg,
                               success_rate)


def exact_mah(profile):
    """Rational-arithmetic oracle for the daily charge."""
    total = sum(Fraction(str(profile.currents_ma[m])) * Fraction(str(profile.durations_s[m]))
                for m in profile.currents_ma)
    return total / 3600


class TestPowerAverage:
    def test_weighted_mean(self):
        profile = PowerProfile({"on": 100.0, "off": 10.0}, {"on": 1, "off": 9})
        assert p_avg(profile) == pytest.approx(19.0, abs=1e-12)

    def test_single_mode(self):
        assert p_avg(PowerProfile({"sleep": 15.15}, {"sleep": 86400})) == 15.15

    def test_reference_day(self):
        assert p_avg(REFERENCE_DAY_PROFILE) == pytest.approx(27.33, abs=0.01)

    def test_within_mode_range(self):
        value = p_avg(REFERENCE_DAY_PROFILE)
        currents = REFERENCE_DAY_PROFILE.currents_ma.values()
        assert min(currents) <= value <= max(currents)

    def test_empty_profile(self):
        with pytest.raises(HydroError, match="empty-profile"):
            p_avg(PowerProfile({"x": 1.0}, {"x": 0}))


class TestDailyEnergy:
    def test_matches_rational_oracle(self):
        got = e_daily(REFERENCE_DAY_PROFILE)
        assert got.mah == pytest.approx(float(exact_mah(REFERENCE_DAY_PROFILE)), abs=1e-9)

    def test_wh_at_five_volts(self):
        assert e_daily(REFERENCE_DAY_PROFILE).wh == pytest.approx(3.28, abs=0.005)

    def test_all_sleep(self):
        got = e_daily(PowerProfile({"sleep": 15.15}, {"sleep": 86400}))
        assert got.mah == pytest.approx(363.6, abs=1e-9)

    def test_wh_identity(self):
        for voltage in (3.3, 5.0, 12.0):
            profile = PowerProfile(REFERENCE_DAY_PROFILE.currents_ma,
                                   REFERENCE_DAY_PROFILE.durations_s, voltage)
            assert abs(e_daily(profile).wh - p_avg(profile) * 24 * voltage / 1000) < 1e-9

    def test_not_a_day(self):
        with pytest.raises(HydroError, match="not-a-day"):
            e_daily(PowerProfile({"x": 1.0}, {"x": 3600}))

    def test_note_names_both_computations(self):
        note = energy_note()
        assert "656.00 mAh" in note and "1728 mAh" in note and "8.54 Wh" in note
        summary = energy_summary()
        assert summary["energy_printed_daily_mah"] == 1728.0


class TestRatios:
    def test_success_rate(self):
        assert success_rate(9983, 10000) == pytest.approx(99.83)
        assert success_rate(0, 7) == 0.0

    def test_compression(self):
        assert compression_ratio(1000, 400) == 250.0

    def test_zero_denominators(self):
        with pytest.raises(HydroError, match="div-zero"):
            success_rate(0, 0)
        with pytest.raises(HydroError, match="div-zero"):
            compression_ratio(10, 0)


def test_error_stats():
    stats = error_stats([(4.0, 4.05), (7.0, 6.98), (7.0, 7.0), (10.0, None)])
    assert stats.n == 3
    assert stats.mean_abs == pytest.approx(0.07 / 3)
    assert stats.max_abs == pytest.approx(0.05)
    assert stats.by_point[7.0] == pytest.approx(-0.01)
    pct = error_stats([(0.0, 1.0), (200.0, 204.0)], relative=True, min_truth=1.0)
    assert pct.n == 1 and pct.mean_abs == pytest.approx(2.0)
    assert math.isnan(error_stats([]).mean_abs)


def test_mean_std_max():
    assert mean_std_max([1.0, 3.0]) == (2.0, 1.0, 3.0)
    assert all(math.isnan(v) for v in mean_std_max([]))


def test_envelopes():
    assert check_envelope(0.05, "<=", 0.06)
    assert not check_envelope(3.0, "<", 3.0)
    assert not check_envelope(math.nan, ">=", 0)
    assert not check_envelope(None, ">=", 0)


def test_formats():
    metrics = {"a": 1, "b": 0.5, "c": True, "d": math.nan}
    assert format_kv(metrics) == "a=1\nb=0.500000\nc=true\nd=nan\n"
    assert json.loads(format_ndjson(metrics)) == {"a": 1, "b": 0.5, "c": True, "d": None}
