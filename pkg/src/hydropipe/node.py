"""Simulated sensor node: samples pH and DO each cycle and frames the result.

Wire format, one ASCII sentence per cycle::

    $HS,<seq>,<ph_counts_mean>,<do_mv>[,<flags>]*<XX>\\n

``XX`` is the XOR of every payload byte as two upper-case hex digits. A
missing reading leaves its field empty. ``flags`` is a ``|``-joined list of
fault codes and is omitted when there are none.
"""

from dataclasses import dataclass

import numpy as np

from .calib import PH_BUFFERS, DoCalib
from .dsp import PH_CHANNEL, burst_mean
from .errors import FrameError, HydroError
from .sensors import NoiseSpec, do_forward, ph_counts

FRAME_TAG = "HS"
FORBIDDEN = frozenset("$*\n")

PH_RAIL = "PH_RAIL"
DO_DROPOUT = "DO_DROPOUT"
DO_ERROR = "DO_ERROR"


@dataclass(frozen=True)
class CycleSchedule:
    """Sampling cadence in milliseconds."""

    ph_burst: int = 20
    ph_period_ms: int = 20
    tds_window: int = 30
    tds_period_ms: int = 40
    cycle_period_ms: int = 1000

    def __post_init__(self):
        if self.ph_burst < 1 or self.tds_window < 1:
            raise HydroError("bad-schedule", "burst and window need >= 1 sample")
        if self.do_read_offset_ms >= self.cycle_period_ms:
            raise HydroError("bad-schedule", "pH burst and DO read overrun the cycle")
        if self.cycle_period_ms % self.tds_period_ms:
            raise HydroError("bad-schedule", "TDS cadence must divide the cycle period")

    @property
    def do_read_offset_ms(self):
        return self.ph_burst * self.ph_period_ms

    @property
    def tds_per_cycle(self):
        return self.cycle_period_ms // self.tds_period_ms


@dataclass(frozen=True)
class LinkFrame:
    seq: int
    payload: str
    emitted_ms: int = 0

    @property
    def checksum(self):
        return xor_checksum(self.payload.encode("ascii"))

    @property
    def wire(self):
        return frame_encode(self.payload)


def xor_checksum(data):
    checksum = 0
    for byte in data:
        checksum ^= byte
    return checksum


def frame_encode(payload):
    if any(ch in FORBIDDEN for ch in payload):
        raise FrameError("frame-charset", repr(payload))
    try:
        body = payload.encode("ascii")
    except UnicodeEncodeError:
        raise FrameError("frame-charset", repr(payload)) from None
    if any(b < 0x20 or b > 0x7E for b in body):
        raise FrameError("frame-charset", repr(payload))
    return b"$" + body + b"*%02X\n" % xor_checksum(body)


def format_payload(seq, ph_mean, do_mv, flags=()):
    fields = [
        FRAME_TAG,
        str(seq),
        "" if ph_mean is None else f"{ph_mean:.2f}",
        "" if do_mv is None else f"{do_mv:.3f}",
    ]
    if flags:
        fields.append("|".join(sorted(flags)))
    return ",".join(fields)


@dataclass
class NodeFaults:
    """Per-cycle fault probabilities."""

    ph_stuck: float = 0.0
    do_dropout: float = 0.0
    frame_drop: float = 0.0
    bit_error: float = 0.0


class SensorNode:
    """pH/DO acquisition node.

    ``ph_response`` is the sensor's true counts-to-pH line; the forward model
    inverts it. The node never sees calibration results, it only ships
    averaged counts and millivolts.
    """

    def __init__(self, ph_response, do_table, do_cal=DoCalib(), *,
                 ph_noise=NoiseSpec(), do_noise=NoiseSpec(),
                 schedule=CycleSchedule(), faults=None, rng=None):
        self.ph_response = ph_response
        self.do_table = do_table
        self.do_cal = do_cal
        self.ph_noise = ph_noise
        self.do_noise = do_noise
        self.schedule = schedule
        self.faults = faults or NodeFaults()
        self.rng = rng if rng is not None else np.random.default_rng(ph_noise.seed)
        self.fault_rng = np.random.default_rng(self.rng.integers(2**63))
        self.seq = 0
        self.sample_times = []

    def measure_buffers(self, buffers=PH_BUFFERS):
        """Averaged raw counts for each calibration buffer."""
        raw = []
        for ph in buffers:
            counts = ph_counts(ph, self.ph_response, self.ph_noise.sigma_counts,
                               self.rng, self.schedule.ph_burst)
            raw.append(burst_mean(counts.tolist()))
        return raw

    def _fault(self, probability):
        return probability > 0 and self.fault_rng.random() < probability

    def run_cycle(self, truth, t_start):
        """Sample one cycle starting at ``t_start`` ms.

        Returns ``(frame, wire)``. ``wire`` is ``None`` when the frame is
        lost on the link and may differ from ``frame.wire`` by a flipped bit.
        """
        sched = self.schedule
        self.sample_times = [t_start + i * sched.ph_period_ms for i in range(sched.ph_burst)]
        flags = set()

        if self._fault(self.faults.ph_stuck):
            counts = [PH_CHANNEL.max_counts] * sched.ph_burst
        else:
            counts = ph_counts(truth.ph, self.ph_response, self.ph_noise.sigma_counts,
                               self.rng, sched.ph_burst).tolist()
        if min(counts) == max(counts) and counts[0] in (0, PH_CHANNEL.max_counts):
            flags.add(PH_RAIL)
        ph_mean = burst_mean(counts)

        do_t = t_start + sched.do_read_offset_ms
        self.sample_times.append(do_t)
        if self._fault(self.faults.do_dropout):
            do_mv = None
            flags.add(DO_DROPOUT)
        else:
            try:
                do_mv = do_forward(truth, self.do_table, self.do_cal, self.do_noise, self.rng)
            except HydroError:
                do_mv = None
                flags.add(DO_ERROR)

        self.seq += 1
        frame = LinkFrame(self.seq, format_payload(self.seq, ph_mean, do_mv, flags), do_t)
        wire = frame.wire
        if self._fault(self.faults.frame_drop):
            return frame, None
        if self._fault(self.faults.bit_error):
            wire = flip_bit(wire, int(self.fault_rng.integers(len(wire) * 8)))
        return frame, wire


def flip_bit(wire, bit_index):
    data = bytearray(wire)
    data[bit_index // 8] ^= 1 << (bit_index % 8)
    return bytes(data)
