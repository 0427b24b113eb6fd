import numpy as np
import pytest

from hydropipe.calib import (DoCalib, TdsCalib, do_from_raw,
                             ph_from_counts, tds_from_raw)
from hydropipe.dsp import TDS_CHANNEL, ChannelConfig, counts_to_voltage
from hydropipe.errors import HydroError
from hydropipe.sensors import (BOUNDS, NoiseSpec, TruthDynamics, WaterTruth,
                               do_forward, level_forward, level_from_echo,
                               ph_counts, ph_forward, step_truth, tds_forward,
                               temp_forward)


def test_truth_bounds():
    with pytest.raises(HydroError):
        WaterTruth(ph=14.5)
    with pytest.raises(HydroError):
        WaterTruth(level_cm=-1.0)
    assert WaterTruth().clamped(ph=20.0, tds_ppm=-3.0).ph == 14.0


class TestStepTruth:
    def test_static_dynamics_leave_state_unchanged(self):
        state = WaterTruth()
        rng = np.random.default_rng(0)
        assert step_truth(state, 1.0, rng) is state

    def test_same_seed_same_trajectory(self):
        dyn = TruthDynamics(walk_ph=0.01, walk_temp=0.05, diurnal_amplitude=3.0)

        def trajectory(seed):
            rng = np.random.default_rng(seed)
            state, out = WaterTruth(), []
            for k in range(200):
                state = step_truth(state, 1.0, rng, dyn, float(k))
                out.append(state)
            return out

        assert trajectory(5) == trajectory(5)
        assert trajectory(5) != trajectory(6)

    def test_long_walk_stays_in_bounds(self):
        dyn = TruthDynamics(walk_ph=0.5, walk_do=0.5, walk_temp=0.5, walk_tds=20.0,
                            walk_level=2.0, diurnal_amplitude=10.0, diurnal_period_s=600.0)
        rng = np.random.default_rng(3)
        state = WaterTruth()
        for k in range(10_000):
            state = step_truth(state, 1.0, rng, dyn, float(k))
            for name, (lo, hi) in BOUNDS.items():
                assert lo <= getattr(state, name) <= hi

    def test_diurnal_only(self):
        dyn = TruthDynamics(diurnal_amplitude=2.0, diurnal_period_s=4.0)
        state = step_truth(WaterTruth(temp_c=20.0), 1.0, np.random.default_rng(0), dyn, 0.0)
        assert state.temp_c == pytest.approx(22.0)


class TestPhForward:
    def test_examples(self, line_curve):
        assert ph_forward(WaterTruth(ph=7.0), line_curve).counts == 560
        assert ph_forward(WaterTruth(ph=4.0), line_curve).counts == 800

    @pytest.mark.parametrize("ph", np.linspace(1.3, 14.0, 57))
    def test_round_trip_half_code(self, line_curve, ph):
        counts = ph_forward(WaterTruth(ph=ph), line_curve).counts
        measured, _ = ph_from_counts(counts, line_curve)
        assert abs(measured - ph) <= abs(line_curve.slope) / 2 + 1e-12

    def test_never_leaves_adc_range(self, line_curve):
        rng = np.random.default_rng(0)
        for ph in (0.0, 14.0):
            counts = ph_counts(ph, line_curve, 50.0, rng, 1000)
            assert counts.min() >= 0 and counts.max() <= 1023

    def test_seeded_noise_is_reproducible(self, line_curve):
        a = ph_counts(7.0, line_curve, 2.0, np.random.default_rng(9), 20)
        b = ph_counts(7.0, line_curve, 2.0, np.random.default_rng(9), 20)
        assert a.tolist() == b.tolist()


class TestTdsForward:
    def test_zero(self):
        assert tds_forward(WaterTruth(tds_ppm=0.0)).counts == 0

    def test_one_volt_on_12_bits(self):
        cfg = ChannelConfig(bits=12, vref=3.3)
        sample = tds_forward(WaterTruth(tds_ppm=367.475, temp_c=25.0), TdsCalib(), cfg)
        assert sample.counts == round(1.0 / 3.3 * 4096) == 1241

    @pytest.mark.parametrize("tds", [5, 50, 342, 500, 750, 1000, 1200])
    @pytest.mark.parametrize("temp", [0.0, 12.5, 25.0, 40.0])
    def test_round_trip_within_one_lsb(self, tds, temp):
        truth = WaterTruth(tds_ppm=tds, temp_c=temp)
        counts = tds_forward(truth).counts
        v = counts_to_voltage(counts, TDS_CHANNEL)
        measured = tds_from_raw(v, temp)
        # local slope of the reading per LSB, evaluated numerically
        lsb = TDS_CHANNEL.lsb_volts
        slope = (tds_from_raw(v + lsb, temp) - tds_from_raw(max(v - lsb, 0), temp)) / 2
        assert abs(measured - tds) <= slope * 1.0 + 1e-9

    def test_range_error_propagates(self):
        with pytest.raises(HydroError, match="truth-range"):
            WaterTruth(tds_ppm=1300)


class TestDoForward:
    def test_examples(self, do_table):
        assert do_forward(WaterTruth(do_mgl=8.24, temp_c=25.0), do_table) == pytest.approx(190.0)
        assert do_forward(WaterTruth(do_mgl=0.0, temp_c=25.0), do_table) == 0.0

    @pytest.mark.parametrize("temp", [20.0, 22.3, 25.0, 31.7, 40.0])
    @pytest.mark.parametrize("do", [0.5, 4.12, 8.24, 15.0])
    def test_exact_round_trip(self, do_table, temp, do):
        v = do_forward(WaterTruth(do_mgl=do, temp_c=temp), do_table)
        assert do_from_raw(v, temp, do_table) == pytest.approx(do, abs=1e-9)

    def test_domain(self, do_table):
        with pytest.raises(HydroError, match="do-domain"):
            do_forward(WaterTruth(do_mgl=10.08, temp_c=15.0), do_table)
        v = do_forward(WaterTruth(do_mgl=10.08, temp_c=15.0), do_table, DoCalib(cal_v=1600))
        assert do_from_raw(v, 15.0, do_table, DoCalib(cal_v=1600)) == pytest.approx(10.08)


class TestLevel:
    def test_echo_time(self):
        echo = level_forward(WaterTruth(level_cm=50.0), 150.0)
        assert echo == pytest.approx(5830.9, abs=0.01)
        assert level_from_echo(echo, 150.0) == pytest.approx(50.0, abs=1e-9)

    def test_minimum_range_boundary(self):
        echo = level_forward(WaterTruth(level_cm=148.0), 150.0)
        assert echo == pytest.approx(2 * 2 / 0.0343)

    @pytest.mark.parametrize("level", [160.0, 149.0])
    def test_out_of_range(self, level):
        with pytest.raises(HydroError) as err:
            level_forward(WaterTruth(level_cm=level), 150.0)
        assert err.value.code == "ultrasonic-range"

    def test_too_far(self):
        with pytest.raises(HydroError, match="ultrasonic-range"):
            level_forward(WaterTruth(level_cm=0.0), 450.0)


def test_temperature_quantized_to_sixteenths():
    assert temp_forward(WaterTruth(temp_c=25.03)) == 25.0
    assert temp_forward(WaterTruth(temp_c=25.04)) == 25.0625
    rng = np.random.default_rng(1)
    noisy = temp_forward(WaterTruth(temp_c=20.0), NoiseSpec(3.0), rng)
    assert (noisy * 16).is_integer()
