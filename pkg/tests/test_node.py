from pathlib import Path

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hydropipe.calib import CalibrationCurve, DoTable
from hydropipe.errors import FrameError, HydroError
from hydropipe.gateway import frame_decode, parse_payload
from hydropipe.node import (DO_DROPOUT, PH_RAIL, CycleSchedule, NodeFaults, SensorNode,
                            flip_bit, format_payload, frame_encode, xor_checksum)
from hydropipe.sensors import NoiseSpec, WaterTruth

GOLDEN = Path(__file__).parent / "golden"
ALLOWED = "".join(ch for ch in map(chr, range(0x20, 0x7F)) if ch not in "$*")
payloads = st.text(alphabet=ALLOWED, max_size=80)


@pytest.mark.parametrize("payload, checksum", [("", "00"), ("A", "41"), ("AB", "03")])
def test_checksum_examples(payload, checksum):
    assert frame_encode(payload) == f"${payload}*{checksum}\n".encode()


@pytest.mark.parametrize("payload", ["a$b", "a*b", "line\nbreak", "tab\there", "café"])
def test_forbidden_characters(payload):
    with pytest.raises(FrameError) as err:
        frame_encode(payload)
    assert err.value.code == "frame-charset"


@given(payloads)
def test_round_trip(payload):
    assert frame_decode(frame_encode(payload)) == payload


@given(payloads, st.data())
def test_any_single_bit_flip_is_detected(payload, data):
    wire = frame_encode(payload)
    bit = data.draw(st.integers(0, len(wire) * 8 - 1))
    with pytest.raises(FrameError) as err:
        frame_decode(flip_bit(wire, bit))
    assert err.value.code in ("bad-checksum", "bad-framing")


def test_lowercase_hex_rejected():
    # 'A' and 'a' differ by one bit, so accepting both would hide an error
    wire = frame_encode("HS,1,2,3")
    assert frame_decode(wire) == "HS,1,2,3"
    lowered = wire[:-3] + wire[-3:-1].lower() + b"\n"
    if lowered != wire:
        with pytest.raises(FrameError):
            frame_decode(lowered)


def test_decode_errors():
    with pytest.raises(FrameError, match="bad-framing"):
        frame_decode(b"$HS,1,2,3\n")
    with pytest.raises(FrameError, match="bad-checksum"):
        frame_decode(b"$HS,1,2,3*00\n")
    with pytest.raises(FrameError, match="bad-framing"):
        frame_decode(b"HS,1,2,3*00\n")


def test_payload_format():
    assert format_payload(7, 560.0, 190.0) == "HS,7,560.00,190.000"
    assert format_payload(7, None, 190.0, {"B", "A"}) == "HS,7,,190.000,A|B"
    reading = parse_payload("HS,7,,190.000,A|B")
    assert reading.seq == 7 and reading.ph_counts is None
    assert reading.flags == {"A", "B"}


def test_schedule_invariants():
    sched = CycleSchedule()
    assert sched.do_read_offset_ms == 400
    assert sched.tds_per_cycle == 25
    with pytest.raises(HydroError):
        CycleSchedule(ph_burst=60)
    with pytest.raises(HydroError):
        CycleSchedule(tds_period_ms=30)


def make_node(**kwargs):
    curve = CalibrationCurve(-0.0125, 14.0)
    return SensorNode(curve, DoTable.default(), **kwargs)


class TestSensorNode:
    def test_sample_timing(self):
        node = make_node()
        node.run_cycle(WaterTruth(), 5000)
        assert node.sample_times[:20] == [5000 + 20 * i for i in range(20)]
        assert node.sample_times[19] == 5380
        assert max(node.sample_times) - 5000 < CycleSchedule().cycle_period_ms

    def test_noiseless_payload_stable(self):
        node = make_node()
        frames = [node.run_cycle(WaterTruth(), 1000 * k)[0] for k in range(5)]
        assert [f.seq for f in frames] == [1, 2, 3, 4, 5]
        assert {f.payload.split(",", 2)[2] for f in frames} == {"560.00,190.000"}

    def test_frame_contents(self):
        frame, wire = make_node().run_cycle(WaterTruth(ph=7.0, do_mgl=8.24), 0)
        assert frame.payload == "HS,1,560.00,190.000"
        assert wire == frame.wire
        assert frame.checksum == xor_checksum(b"HS,1,560.00,190.000")

    def test_faults(self):
        node = make_node(faults=NodeFaults(ph_stuck=1.0, do_dropout=1.0))
        frame, _ = node.run_cycle(WaterTruth(), 0)
        assert frame.payload == f"HS,1,1023.00,,{DO_DROPOUT}|{PH_RAIL}"

    def test_frame_drop_and_bit_error(self):
        frame, wire = make_node(faults=NodeFaults(frame_drop=1.0)).run_cycle(WaterTruth(), 0)
        assert wire is None and frame.seq == 1
        frame, wire = make_node(faults=NodeFaults(bit_error=1.0)).run_cycle(WaterTruth(), 0)
        assert wire != frame.wire
        with pytest.raises(FrameError):
            frame_decode(wire)

    def test_golden_transcript(self):
        node = make_node(ph_noise=NoiseSpec(1.5), do_noise=NoiseSpec(0.5),
                         rng=np.random.default_rng(42))
        truth = WaterTruth(ph=6.5, do_mgl=7.9, temp_c=26.0)
        wire = b"".join(node.run_cycle(truth, 1000 * k)[1] for k in range(8))
        assert wire == (GOLDEN / "node_frames.log").read_bytes()
