"""Water-quality telemetry pipeline simulator.

Calibrated pH/DO/TDS/temperature/level measurement, checksummed node-to-gateway
framing and a store-and-forward cloud uplink, all driven by a seeded
discrete-time simulation.
"""

from .calib import (CalibrationCurve, DoCalib, DoConverter, DoTable, PhCalibrator,
                    TdsCalib, TdsConverter, do_from_raw, fit_ph_calibration,
                    ph_from_counts, ph_uncertainty, tds_from_raw, tds_invert)
from .dsp import AdcSample, ChannelConfig, MedianFilter, burst_mean, counts_to_voltage, median_filter
from .errors import CacheWriteError, ConfigError, FrameError, HydroError
from .gateway import Gateway, TelemetryRecord, frame_decode, render_status
from .metrics import PowerProfile, compression_ratio, e_daily, p_avg, success_rate
from .node import CycleSchedule, LinkFrame, SensorNode, frame_encode
from .sensors import NoiseSpec, TruthDynamics, WaterTruth, step_truth
from .uplink import (MockSink, OutageSchedule, RecordCache, RetryState, Uplink,
                     backoff_delay)

__version__ = "0.1.0"
