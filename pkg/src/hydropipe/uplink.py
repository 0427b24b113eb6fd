"""Store-and-forward delivery of telemetry records to a cloud sink.

Records go to an append-only NDJSON cache before any send attempt. A sidecar
file holds the delivered watermark (the number of leading cache lines that
the sink has acknowledged), so a restart resumes exactly where delivery
stopped. Failed sends back off exponentially up to 60 s and retry forever.

Record wire/cache format, one compact JSON object per line, keys in order::

    device_id, seq, ts_ms, ph, do_mgl, temp_c, tds_ppm, level_cm,
    nitrogen_est, flags

Absent readings are omitted; ``flags`` is always present as a sorted list.
"""

import bisect
import enum
import json
import logging
import math
import os
import threading
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CacheWriteError, HydroError
from .gateway import TelemetryRecord

logger = logging.getLogger(__name__)

BASE_DELAY_MS = 1000
MAX_DELAY_MS = 60000

OPTIONAL_FIELDS = ("ph", "do_mgl", "temp_c", "tds_ppm", "level_cm", "nitrogen_est")
RECORD_KEYS = ("device_id", "seq", "ts_ms") + OPTIONAL_FIELDS + ("flags",)


def backoff_delay(n):
    """Wait before retry attempt ``n`` (1-based), in ms."""
    if isinstance(n, bool) or not isinstance(n, (int, np.integer)) or n < 1:
        raise HydroError("bad-attempt", f"n={n!r}")
    return min(MAX_DELAY_MS, BASE_DELAY_MS << min(int(n) - 1, 16))


@dataclass
class RetryState:
    attempt_n: int = 1

    @property
    def next_delay_ms(self):
        return backoff_delay(self.attempt_n)

    def failed(self):
        """Record a failure and return the delay before the next attempt."""
        delay = self.next_delay_ms
        self.attempt_n += 1
        return delay

    def reset(self):
        self.attempt_n = 1


class OutageSchedule:
    """Sorted, disjoint ``[start_ms, end_ms)`` windows where the sink is down."""

    def __init__(self, windows=()):
        windows = sorted((int(a), int(b)) for a, b in windows)
        for start, end in windows:
            if end <= start:
                raise HydroError("bad-outage", f"[{start}, {end})")
        for (_, end), (start, _) in zip(windows, windows[1:]):
            if start < end:
                raise HydroError("bad-outage", "windows overlap")
        self.windows = windows
        self._starts = [start for start, _ in windows]

    def is_down(self, t_ms):
        i = bisect.bisect_right(self._starts, t_ms) - 1
        return i >= 0 and t_ms < self.windows[i][1]

    def total_ms(self, horizon_ms=math.inf):
        return sum(max(0, min(end, horizon_ms) - start)
                   for start, end in self.windows if start < horizon_ms)

    def __repr__(self):
        return f"OutageSchedule({self.windows!r})"


def record_to_json(record):
    obj = {"device_id": record.device_id, "seq": record.seq, "ts_ms": record.timestamp_ms}
    for name in OPTIONAL_FIELDS:
        value = getattr(record, name)
        if value is not None:
            obj[name] = value
    obj["flags"] = sorted(record.flags)
    return json.dumps(obj, separators=(",", ":"))


def validate_record_obj(obj):
    if not isinstance(obj, dict) or set(obj) - set(RECORD_KEYS):
        return False
    if not isinstance(obj.get("device_id"), str) or not obj["device_id"]:
        return False
    for key in ("seq", "ts_ms"):
        if type(obj.get(key)) is not int:
            return False
    for key in OPTIONAL_FIELDS:
        value = obj.get(key)
        if value is not None and (type(value) not in (int, float) or not math.isfinite(value)):
            return False
    flags = obj.get("flags")
    return isinstance(flags, list) and all(isinstance(f, str) for f in flags)


def record_from_json(line):
    obj = json.loads(line)
    if not validate_record_obj(obj):
        raise HydroError("schema", line[:80])
    return TelemetryRecord(
        obj["device_id"], obj["seq"], obj["ts_ms"],
        *(obj.get(name) for name in OPTIONAL_FIELDS),
        flags=frozenset(obj["flags"]),
    )


@dataclass
class CacheEntry:
    record: TelemetryRecord
    enqueued_at: int
    delivered: bool = False
    attempts: int = 0
    line: str = field(default=None, repr=False)

    def __post_init__(self):
        if self.line is None:
            self.line = record_to_json(self.record)


class RecordCache:
    """Durable FIFO of records awaiting delivery.

    With ``path=None`` the cache lives in memory only. ``capacity`` caps the
    number of entries ever written, standing in for a full disk.
    """

    def __init__(self, path=None, capacity=None, fsync=False):
        self.path = Path(path) if path is not None else None
        self.capacity = capacity
        self.fsync = fsync
        self._lock = threading.Lock()
        self._pending = []
        self._head = 0
        self._seen = set()
        self._written = 0
        self._watermark = 0
        self._fh = None
        self._mark_fh = None
        if self.path is not None:
            self._load()
            self._fh = open(self.path, "a", encoding="utf-8")
            mode = "r+b" if self.watermark_path.exists() else "w+b"
            self._mark_fh = open(self.watermark_path, mode)
            self._write_watermark()

    @property
    def watermark_path(self):
        return self.path.with_name(self.path.name + ".delivered")

    def _load(self):
        if self.watermark_path.exists():
            self._watermark = int(self.watermark_path.read_text().strip() or 0)
        if not self.path.exists():
            return
        lines = self.path.read_text(encoding="utf-8").split("\n")
        # a torn final write has no trailing newline
        complete, tail = lines[:-1], lines[-1]
        if tail:
            logger.warning("dropping torn cache line in %s", self.path)
            with open(self.path, "w", encoding="utf-8") as fh:
                fh.writelines(line + "\n" for line in complete)
        for i, line in enumerate(complete):
            record = record_from_json(line)
            self._seen.add((record.device_id, record.seq))
            if i >= self._watermark:
                self._pending.append(CacheEntry(record, record.timestamp_ms, line=line))
        self._written = len(complete)

    def enqueue(self, record, now_ms=None):
        key = (record.device_id, record.seq)
        entry = CacheEntry(record, record.timestamp_ms if now_ms is None else now_ms)
        with self._lock:
            if key in self._seen:
                raise HydroError("dup-seq", f"{key}")
            if self.capacity is not None and self._written >= self.capacity:
                raise CacheWriteError("cache-full", f"capacity {self.capacity}")
            if self._fh is not None:
                try:
                    self._fh.write(entry.line + "\n")
                    self._fh.flush()
                    if self.fsync:
                        os.fsync(self._fh.fileno())
                except OSError as exc:
                    raise CacheWriteError("cache-write", str(exc)) from exc
            self._seen.add(key)
            self._pending.append(entry)
            self._written += 1
        return entry

    def pending(self):
        with self._lock:
            return self._pending[self._head:]

    def __len__(self):
        with self._lock:
            return len(self._pending) - self._head

    @property
    def written(self):
        return self._written

    def mark_delivered(self, count):
        """Advance past the first ``count`` pending entries and persist."""
        if count <= 0:
            return
        with self._lock:
            for entry in self._pending[self._head:self._head + count]:
                entry.delivered = True
            self._head += count
            self._watermark += count
            if self._head > 4096 and self._head * 2 > len(self._pending):
                del self._pending[:self._head]
                self._head = 0
            if self._mark_fh is not None:
                self._write_watermark()

    def _write_watermark(self):
        # fixed width, rewritten in place: one small write per update
        self._mark_fh.seek(0)
        self._mark_fh.write(b"%020d\n" % self._watermark)
        self._mark_fh.flush()
        if self.fsync:
            os.fsync(self._mark_fh.fileno())

    def residue(self):
        return [entry.line for entry in self.pending()]

    def close(self):
        for fh in (self._fh, self._mark_fh):
            if fh is not None:
                fh.close()
        self._fh = self._mark_fh = None


class SinkResult(enum.Enum):
    ACK = "ack"
    REFUSE = "refuse"
    NACK = "nack-schema"


class MockSink:
    """Idempotent cloud store keyed by ``(device_id, seq)``."""

    def __init__(self, outages=None):
        self.outages = outages or OutageSchedule()
        self._lock = threading.Lock()
        self.store = {}
        self.received = 0
        self.duplicates = 0
        self.refused = 0

    def receive(self, line, now_ms):
        with self._lock:
            if self.outages.is_down(now_ms):
                self.refused += 1
                return SinkResult.REFUSE
            try:
                obj = json.loads(line)
            except (TypeError, ValueError):
                return SinkResult.NACK
            if not validate_record_obj(obj):
                return SinkResult.NACK
            self.received += 1
            key = (obj["device_id"], obj["seq"])
            if key in self.store:
                self.duplicates += 1
            else:
                self.store[key] = line
            return SinkResult.ACK

    def dump(self):
        with self._lock:
            return [self.store[key] for key in sorted(self.store)]

    def seqs(self, device_id):
        with self._lock:
            return sorted(seq for dev, seq in self.store if dev == device_id)

    def is_gap_free(self, device_id):
        seqs = self.seqs(device_id)
        return seqs == list(range(seqs[0], seqs[0] + len(seqs))) if seqs else True


class RttModel:
    """Truncated Gaussian round-trip time in ms; out-of-range draws are redrawn."""

    def __init__(self, mean_ms=1750.0, std_ms=420.0, low_ms=200.0, high_ms=10000.0, rng=None):
        if not low_ms <= mean_ms <= high_ms or std_ms < 0:
            raise HydroError("bad-rtt", f"{mean_ms}+-{std_ms} in [{low_ms}, {high_ms}]")
        self.mean_ms = mean_ms
        self.std_ms = std_ms
        self.low_ms = low_ms
        self.high_ms = high_ms
        self.rng = rng if rng is not None else np.random.default_rng(0)

    def sample(self):
        if self.std_ms == 0:
            return float(self.mean_ms)
        while True:
            value = self.rng.normal(self.mean_ms, self.std_ms)
            if self.low_ms <= value <= self.high_ms:
                return float(value)


@dataclass(frozen=True)
class DeliveryEvent:
    device_id: str
    seq: int
    t_ms: int
    ok: bool
    attempt: int
    latency_ms: float = None
    delay_ms: int = None


@dataclass
class UplinkStats:
    attempts: int = 0
    attempts_ok: int = 0
    delivered: int = 0
    first_attempt_ok: int = 0
    dead_letter: int = 0
    ack_lost: int = 0
    latencies_ms: list = field(default_factory=list)
    end_to_end_ms: list = field(default_factory=list)
    backoff_trace_ms: list = field(default_factory=list)


class Uplink:
    """Delivers cached records in order, backing off on failure.

    ``ack_loss`` is the probability that the sink stores a record but the
    acknowledgement never arrives; the client then retries, which exercises
    the sink's deduplication.
    """

    def __init__(self, cache, sink, rtt=None, ack_loss=0.0, rng=None):
        self.cache = cache
        self.sink = sink
        self.rtt = rtt or RttModel(std_ms=0.0)
        self.ack_loss = ack_loss
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.retry = RetryState()
        self.next_attempt_at = None
        self.stats = UplinkStats()
        self.dead_letters = []

    def enqueue(self, record, now_ms=None):
        return self.cache.enqueue(record, now_ms)

    @property
    def pending(self):
        return len(self.cache)

    def flush(self, now_ms):
        """Send pending records in order until one fails; returns the events."""
        if self.next_attempt_at is not None and now_ms < self.next_attempt_at:
            return []
        self.next_attempt_at = None
        events = []
        done = 0
        stats = self.stats
        for entry in self.cache.pending():
            entry.attempts += 1
            stats.attempts += 1
            result = self.sink.receive(entry.line, now_ms)
            if result is SinkResult.ACK and self.ack_loss > 0 and self.rng.random() < self.ack_loss:
                stats.ack_lost += 1
                result = SinkResult.REFUSE
            rec = entry.record
            if result is SinkResult.REFUSE:
                delay = self.retry.failed()
                stats.backoff_trace_ms.append(delay)
                self.next_attempt_at = now_ms + delay
                events.append(DeliveryEvent(rec.device_id, rec.seq, now_ms, False,
                                            entry.attempts, delay_ms=delay))
                break
            done += 1
            if result is SinkResult.NACK:
                logger.error("sink rejected %s/%s, moving to dead letters", rec.device_id, rec.seq)
                stats.dead_letter += 1
                self.dead_letters.append(entry.line)
                continue
            latency = self.rtt.sample()
            stats.attempts_ok += 1
            stats.delivered += 1
            if entry.attempts == 1:
                stats.first_attempt_ok += 1
            stats.latencies_ms.append(latency)
            stats.end_to_end_ms.append(now_ms + latency - entry.enqueued_at)
            self.retry.reset()
            events.append(DeliveryEvent(rec.device_id, rec.seq, now_ms, True,
                                        entry.attempts, latency_ms=latency))
        self.cache.mark_delivered(done)
        return events

    def drain(self, now_ms, max_flushes=1_000_000):
        """Keep flushing at each scheduled retry time until the cache is empty.

        Returns the simulation time at which the last flush ran.
        """
        for _ in range(max_flushes):
            if not len(self.cache):
                return now_ms
            if self.next_attempt_at is not None:
                now_ms = max(now_ms, self.next_attempt_at)
            self.flush(now_ms)
        raise HydroError("drain-stalled", f"{len(self.cache)} records still pending")
