"""Simulated gateway: decodes node frames, reads local sensors, builds records."""

import re
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .calib import DoCalib, TdsCalib, do_from_raw, ph_from_counts, tds_from_raw
from .dsp import TDS_CHANNEL, counts_to_voltage, median_filter
from .errors import FrameError, HydroError
from .node import DO_DROPOUT, DO_ERROR, FRAME_TAG, PH_RAIL, CycleSchedule, xor_checksum
from .sensors import (NoiseSpec, level_forward, level_from_echo, tds_counts,
                      temp_forward)

NODE_MISSING = "NODE_MISSING"
PH_RANGE = "PH_RANGE"
DO_RANGE = "DO_RANGE"
TDS_RANGE = "TDS_RANGE"
TDS_ERROR = "TDS_ERROR"
TEMP_RANGE = "TEMP_RANGE"
LEVEL_FAULT = "LEVEL_FAULT"

# flags that count towards the sensor failure rate
SENSOR_FAULT_FLAGS = frozenset({PH_RAIL, DO_DROPOUT, LEVEL_FAULT})

_FRAME_RE = re.compile(rb"\$([\x20-\x7e]*)\*([0-9A-F]{2})\n")


@dataclass(frozen=True)
class TelemetryRecord:
    device_id: str
    seq: int
    timestamp_ms: int
    ph: float = None
    do_mgl: float = None
    temp_c: float = None
    tds_ppm: float = None
    level_cm: float = None
    nitrogen_est: float = None
    flags: frozenset = field(default_factory=frozenset)


@dataclass(frozen=True)
class NodeReading:
    seq: int
    ph_counts: float = None
    do_mv: float = None
    flags: frozenset = frozenset()


def frame_decode(wire):
    """Validate ``$payload*XX\\n`` and return the payload text."""
    match = _FRAME_RE.fullmatch(bytes(wire))
    if match is None:
        raise FrameError("bad-framing", repr(bytes(wire)[:40]))
    body, checksum = match.groups()
    if b"$" in body or b"*" in body:
        raise FrameError("bad-framing", "delimiter inside payload")
    if xor_checksum(body) != int(checksum, 16):
        raise FrameError("bad-checksum", f"expected {xor_checksum(body):02X}")
    return body.decode("ascii")


def parse_payload(payload):
    parts = payload.split(",")
    if parts[0] != FRAME_TAG or len(parts) not in (4, 5):
        raise FrameError("bad-framing", f"unexpected payload {payload!r}")
    try:
        seq = int(parts[1])
        ph = float(parts[2]) if parts[2] else None
        do = float(parts[3]) if parts[3] else None
    except ValueError:
        raise FrameError("bad-framing", f"unparseable field in {payload!r}") from None
    flags = frozenset(parts[4].split("|")) if len(parts) == 5 and parts[4] else frozenset()
    return NodeReading(seq, ph, do, flags)


@dataclass(frozen=True)
class LocalReadings:
    tds_counts: int
    temp_c: float
    echo_us: float = None


@dataclass
class LinkStats:
    frames_ok: int = 0
    bad_checksum: int = 0
    bad_framing: int = 0
    missing: int = 0

    @property
    def frames_bad(self):
        return self.bad_checksum + self.bad_framing


class Gateway:
    """Per-cycle fusion of the node frame with local TDS, temperature and level.

    The TDS channel is sampled continuously; the median runs over a rolling
    window of the last ``schedule.tds_window`` samples.
    """

    def __init__(self, device_id, ph_curve, do_table, *, do_cal=DoCalib(),
                 tds_cal=TdsCalib(), schedule=CycleSchedule(), tds_cfg=TDS_CHANNEL,
                 tds_noise=NoiseSpec(), temp_noise=NoiseSpec(), level_noise=NoiseSpec(),
                 mount_height_cm=150.0, rng=None, nitrogen_estimator=None,
                 interpolate_do=False):
        self.device_id = device_id
        self.ph_curve = ph_curve
        self.do_table = do_table
        self.do_cal = do_cal
        self.tds_cal = tds_cal
        self.schedule = schedule
        self.tds_cfg = tds_cfg
        self.tds_noise = tds_noise
        self.temp_noise = temp_noise
        self.level_noise = level_noise
        self.mount_height_cm = mount_height_cm
        self.rng = rng if rng is not None else np.random.default_rng(tds_noise.seed)
        self.nitrogen_estimator = nitrogen_estimator
        self.interpolate_do = interpolate_do
        self.tds_window = deque(maxlen=schedule.tds_window)
        self.stats = LinkStats()
        self.seq = 0
        self.last_node_seq = 0

    def read_local(self, truth):
        counts = tds_counts(truth, self.tds_noise.sigma_counts, self.rng,
                            self.schedule.tds_per_cycle, self.tds_cal, self.tds_cfg)
        self.tds_window.extend(counts.tolist())
        temp = temp_forward(truth, self.temp_noise, self.rng)
        try:
            echo = level_forward(truth, self.mount_height_cm, self.level_noise, self.rng)
        except HydroError:
            echo = None
        return LocalReadings(median_filter(self.tds_window), temp, echo)

    def receive(self, wire):
        """Decode a frame, counting every failure. Returns ``None`` on failure."""
        if wire is None:
            self.stats.missing += 1
            return None
        try:
            reading = parse_payload(frame_decode(wire))
        except FrameError as exc:
            if exc.code == "bad-checksum":
                self.stats.bad_checksum += 1
            else:
                self.stats.bad_framing += 1
            return None
        self.stats.frames_ok += 1
        self.last_node_seq = reading.seq
        return reading

    def cycle(self, truth, wire, t_start):
        local = self.read_local(truth)
        reading = self.receive(wire)
        return self.assemble_record(reading, local, t_start + self.schedule.cycle_period_ms)

    def assemble_record(self, reading, local, timestamp_ms):
        flags = set()
        ph = do = None
        temp = local.temp_c
        if not 0 <= temp <= 40:
            flags.add(TEMP_RANGE)

        if reading is None:
            flags.add(NODE_MISSING)
        else:
            flags.update(reading.flags)
            if reading.ph_counts is not None:
                ph, clamped = ph_from_counts(reading.ph_counts, self.ph_curve)
                if clamped:
                    flags.add(PH_RANGE)
            if reading.do_mv is not None:
                try:
                    do = do_from_raw(reading.do_mv, temp, self.do_table, self.do_cal,
                                     self.interpolate_do)
                except HydroError:
                    flags.add(DO_ERROR)
                else:
                    if do > 20.0:
                        do = 20.0
                        flags.add(DO_RANGE)

        tds = None
        try:
            v_raw = counts_to_voltage(local.tds_counts, self.tds_cfg)
            tds = tds_from_raw(v_raw, temp, self.tds_cal)
        except HydroError:
            flags.add(TDS_ERROR)
        else:
            if tds > 1200.0:
                tds = 1200.0
                flags.add(TDS_RANGE)

        level = None
        if local.echo_us is None:
            flags.add(LEVEL_FAULT)
        else:
            try:
                level = max(level_from_echo(local.echo_us, self.mount_height_cm), 0.0)
            except HydroError:
                flags.add(LEVEL_FAULT)

        self.seq += 1
        nitrogen = None
        if self.nitrogen_estimator is not None:
            nitrogen = self.nitrogen_estimator(ph=ph, do_mgl=do, temp_c=temp,
                                               tds_ppm=tds, level_cm=level)
        return TelemetryRecord(self.device_id, self.seq, timestamp_ms, ph, do, temp,
                               tds, level, nitrogen, frozenset(flags))


def _fmt(value, spec, placeholder):
    return placeholder if value is None else format(value, spec)


def render_status(record):
    """One-line text stand-in for the 128x64 display."""
    parts = [
        "pH " + _fmt(record.ph, ".2f", "--.--"),
        "DO " + _fmt(record.do_mgl, ".2f", "--.--"),
        "T " + _fmt(record.temp_c, ".1f", "--.-") + "C",
        "TDS " + _fmt(record.tds_ppm, ".0f", "---"),
        "Lvl " + _fmt(record.level_cm, ".1f", "--.-") + "cm",
        "FLAG:" + ",".join(sorted(record.flags)) if record.flags else "OK",
    ]
    return " | ".join(parts)
