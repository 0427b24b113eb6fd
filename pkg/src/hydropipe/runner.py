"""Scenario execution and run reports.

A run directory holds::

    scenario.scn      copy of the scenario as run
    frames.log        node-to-gateway wire transcript (raw bytes)
    status.log        one status line per cycle
    truth.ndjson      ground truth per record seq
    sink.ndjson       sink store dump, sorted by (device_id, seq)
    cache.ndjson      append-only uplink cache (+ .delivered watermark)
    pending.ndjson    records still undelivered at the end of the run
    link.json         counters gathered while running
    metrics.txt       flat key=value summary
    metrics.ndjson    the same summary as one JSON object
    report.txt        comparison against the configured envelopes
"""

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .calib import (PH_BUFFERS, CalibrationCurve, DoTable, fit_ph_calibration,
                    load_calibration_pairs)
from .errors import HydroError
from .gateway import SENSOR_FAULT_FLAGS, Gateway, render_status
from .metrics import (TARGETS_BY_KEY, check_envelope, energy_note, energy_summary,
                      error_stats, fmt_value, format_kv, format_ndjson,
                      mean_std_max, success_rate)
from .node import SensorNode
from .scenario import parse_scenario
from .sensors import NoiseSpec, step_truth
from .uplink import MockSink, OutageSchedule, RecordCache, RttModel, Uplink

logger = logging.getLogger(__name__)

RUN_FILES = ("scenario.scn", "frames.log", "status.log", "truth.ndjson", "sink.ndjson",
             "cache.ndjson", "cache.ndjson.delivered", "pending.ndjson", "link.json",
             "metrics.txt", "metrics.ndjson", "report.txt")
REQUIRED = ("scenario.scn", "truth.ndjson", "sink.ndjson", "link.json")


@dataclass
class RunResult:
    out_dir: Path
    status: int
    metrics: dict
    report: str
    calibration: CalibrationCurve


def _streams(seed):
    names = ("truth", "node", "gateway", "rtt", "link")
    children = np.random.SeedSequence(seed).spawn(len(names))
    return {name: np.random.default_rng(child) for name, child in zip(names, children)}


def _prepare(out_dir):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for name in RUN_FILES:
        (out_dir / name).unlink(missing_ok=True)
    return out_dir


def build_calibration(scenario, node):
    if scenario.calibration_source == "file":
        raw, buffers = load_calibration_pairs(scenario.calibration_file)
        return fit_ph_calibration(raw, buffers)
    return fit_ph_calibration(node.measure_buffers(PH_BUFFERS), PH_BUFFERS)


def run(scenario, out_dir):
    """Execute ``scenario`` and write its artifacts to ``out_dir``.

    Sensor and link faults become record flags and counters; nothing short
    of a configuration error stops the run.
    """
    scenario.check_files()
    out_dir = _prepare(out_dir)
    rngs = _streams(scenario.seed)
    table = (DoTable.from_file(scenario.do_table_file) if scenario.do_table_file
             else DoTable.default())
    noise = {ch: NoiseSpec(sigma, scenario.seed) for ch, sigma in scenario.noise.items()}

    ph_response = CalibrationCurve(scenario.ph_slope, scenario.ph_offset)
    node = SensorNode(ph_response, table, scenario.do_cal, ph_noise=noise["ph"],
                      do_noise=noise["do"], schedule=scenario.schedule,
                      faults=scenario.faults, rng=rngs["node"])
    curve = build_calibration(scenario, node)
    gateway = Gateway(scenario.device_id, curve, table, do_cal=scenario.do_cal,
                      schedule=scenario.schedule, tds_noise=noise["tds"],
                      temp_noise=noise["temp"],
                      level_noise=noise["level"], mount_height_cm=scenario.mount_height_cm,
                      rng=rngs["gateway"], interpolate_do=scenario.interpolate_do)
    cache = RecordCache(out_dir / "cache.ndjson" if scenario.cache == "file" else None)
    sink = MockSink(OutageSchedule(scenario.outages))
    uplink = Uplink(cache, sink, RttModel(**scenario.rtt, rng=rngs["rtt"]),
                    ack_loss=scenario.ack_loss, rng=rngs["link"])

    period = scenario.schedule.cycle_period_ms
    late_after_ms = period - scenario.schedule.do_read_offset_ms
    dynamics = scenario.dynamics
    truth = scenario.truth_at(0)
    point = 0
    sensor_faults = 0
    status_lines, truth_lines, frames = [], [], []
    for cycle in range(scenario.cycles):
        t_start = cycle * period
        index = scenario.point_index(cycle)
        if index != point:
            point = index
            truth = scenario.truth_at(index)
        elif cycle:
            truth = step_truth(truth, period / 1000.0, rngs["truth"], dynamics, t_start / 1000.0)

        _, wire = node.run_cycle(truth, t_start)
        if wire is not None and scenario.link_latency_ms > late_after_ms:
            # frame arrives after the gateway closed this cycle
            wire = None
        if wire is not None:
            frames.append(wire)
        record = gateway.cycle(truth, wire, t_start)
        if record.flags & SENSOR_FAULT_FLAGS:
            sensor_faults += 1
        status_lines.append(render_status(record))
        truth_lines.append(json.dumps({
            "seq": record.seq, "ph": truth.ph, "do_mgl": truth.do_mgl, "temp_c": truth.temp_c,
            "tds_ppm": truth.tds_ppm, "level_cm": truth.level_cm,
        }, separators=(",", ":")))
        uplink.enqueue(record)
        uplink.flush(record.timestamp_ms)

    t_end = scenario.duration_ms
    pending_before_drain = uplink.pending
    t_drained = uplink.drain(t_end)
    cache.close()

    stats = uplink.stats
    lat_mean, lat_std, lat_max = mean_std_max(stats.latencies_ms)
    _, _, e2e_max = mean_std_max(stats.end_to_end_ms)
    produced = cache.written
    link = {
        "records_produced": produced,
        "records_stored": len(sink.store),
        "pending": uplink.pending,
        "pending_before_drain": pending_before_drain,
        "dead_letter": stats.dead_letter,
        "first_attempts_ok": stats.first_attempt_ok,
        "attempts": stats.attempts,
        "attempts_ok": stats.attempts_ok,
        "ack_lost": stats.ack_lost,
        "sink_duplicates": sink.duplicates,
        "sink_gap_free": sink.is_gap_free(scenario.device_id),
        "latency_mean_s": lat_mean / 1000.0,
        "latency_std_s": lat_std / 1000.0,
        "latency_max_s": lat_max / 1000.0,
        "end_to_end_max_s": e2e_max / 1000.0,
        "max_backoff_ms": max(stats.backoff_trace_ms, default=0),
        "drain_ms": t_drained - t_end,
        "outage_ms": OutageSchedule(scenario.outages).total_ms(t_end),
        "duration_ms": t_end,
        "frames_ok": gateway.stats.frames_ok,
        "frames_bad_checksum": gateway.stats.bad_checksum,
        "frames_bad_framing": gateway.stats.bad_framing,
        "frames_missing": gateway.stats.missing,
        "sensor_fault_records": sensor_faults,
        "cal_slope": curve.slope,
        "cal_offset": curve.offset,
        "cal_u_slope": curve.u_slope,
        "cal_u_offset": curve.u_offset,
    }

    (out_dir / "scenario.scn").write_text(scenario.source_text, encoding="utf-8")
    (out_dir / "frames.log").write_bytes(b"".join(frames))
    _write_lines(out_dir / "status.log", status_lines)
    _write_lines(out_dir / "truth.ndjson", truth_lines)
    _write_lines(out_dir / "sink.ndjson", sink.dump())
    _write_lines(out_dir / "pending.ndjson", cache.residue())
    (out_dir / "link.json").write_text(format_ndjson(link), encoding="utf-8")

    status, metrics, text = report(out_dir)
    return RunResult(out_dir, status, metrics, text, curve)


def _write_lines(path, lines):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for line in lines:
            fh.write(line)
            fh.write("\n")


def _read_ndjson(path):
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def accuracy_metrics(truth_rows, sink_rows):
    truth_by_seq = {row["seq"]: row for row in truth_rows}
    pairs = {name: [] for name in ("ph", "do_mgl", "tds_ppm", "temp_c", "level_cm")}
    for rec in sink_rows:
        truth = truth_by_seq.get(rec["seq"])
        if truth is None:
            continue
        for name, bucket in pairs.items():
            bucket.append((truth[name], rec.get(name)))
    ph = error_stats(pairs["ph"])
    do = error_stats(pairs["do_mgl"], relative=True, min_truth=0.01)
    tds = error_stats(pairs["tds_ppm"], relative=True, min_truth=1.0)
    temp = error_stats(pairs["temp_c"])
    level = error_stats(pairs["level_cm"])
    metrics = {
        "ph_n": ph.n,
        "do_n": do.n,
        "do_missing": sum(1 for _, measured in pairs["do_mgl"] if measured is None),
        "ph_mean_abs_error": ph.mean_abs,
        "ph_max_abs_error": ph.max_abs,
        "do_mean_abs_pct": do.mean_abs,
        "do_max_abs_pct": do.max_abs,
        "tds_mean_abs_pct": tds.mean_abs,
        "tds_max_abs_pct": tds.max_abs,
        "temp_mean_abs_error": temp.mean_abs,
        "level_mean_abs_error_cm": level.mean_abs,
    }
    points = {"ph": ph.by_point, "do_pct": do.by_point, "tds_pct": tds.by_point}
    return metrics, points


def report(run_dir):
    """Recompute metrics from a run directory and compare against envelopes.

    Returns ``(status, metrics, text)``; status is 0 iff every configured
    envelope passes. Also writes metrics.txt, metrics.ndjson and report.txt.
    """
    run_dir = Path(run_dir)
    missing = [name for name in REQUIRED if not (run_dir / name).is_file()]
    if missing:
        raise HydroError("incomplete-run", f"missing {', '.join(missing)} in {run_dir}")
    scenario = parse_scenario((run_dir / "scenario.scn").read_text(encoding="utf-8"),
                              run_dir)
    link = json.loads((run_dir / "link.json").read_text(encoding="utf-8"))
    accuracy, points = accuracy_metrics(_read_ndjson(run_dir / "truth.ndjson"),
                                        _read_ndjson(run_dir / "sink.ndjson"))

    produced = link["records_produced"]
    metrics = {"scenario": scenario.name, "seed": scenario.seed, "cycles": scenario.cycles}
    metrics.update(accuracy)
    metrics.update(link)
    metrics["eventual_delivery_pct"] = (
        success_rate(link["records_stored"], produced) if produced else math.nan)
    metrics["first_attempt_success_pct"] = (
        success_rate(link["first_attempts_ok"], produced) if produced else math.nan)
    metrics["attempt_success_pct"] = (
        success_rate(link["attempts_ok"], link["attempts"]) if link["attempts"] else math.nan)
    metrics["zero_loss"] = (
        produced == link["records_stored"] + link["pending"] + link["dead_letter"])
    metrics["outage_pct"] = 100.0 * link["outage_ms"] / link["duration_ms"]
    metrics["sensor_failure_rate"] = link["sensor_fault_records"] / produced if produced else 0.0
    metrics.update(energy_summary())

    rows = []
    status = 0
    for key, (op, limit) in scenario.envelopes.items():
        value = metrics.get(key)
        ok = check_envelope(value, op, limit)
        status |= 0 if ok else 1
        target = TARGETS_BY_KEY.get(key)
        rows.append((key, fmt_value(value) if value is not None else "missing",
                     target.published_value if target else "-", f"{op} {limit:g}",
                     "PASS" if ok else "FAIL"))
    metrics["envelopes_pass"] = status == 0

    lines = [f"scenario {scenario.name} seed={scenario.seed} cycles={scenario.cycles}", ""]
    if rows:
        widths = [max(len(r[i]) for r in rows + [("metric", "value", "published",
                                                  "envelope", "status")]) for i in range(5)]
        header = ("metric", "value", "published", "envelope", "status")
        for row in [header] + rows:
            lines.append("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip())
    else:
        lines.append("no envelopes configured")
    for label, by_point in points.items():
        if len(by_point) > 1:
            lines.append("")
            lines.append(f"{label} mean error by reference value:")
            for ref, err in by_point.items():
                lines.append(f"  {ref:g}: {err:+.4f}")
    lines += ["", energy_note(), "", "overall: " + ("PASS" if status == 0 else "FAIL")]
    text = "\n".join(lines) + "\n"

    (run_dir / "metrics.txt").write_text(format_kv(metrics), encoding="utf-8")
    (run_dir / "metrics.ndjson").write_text(format_ndjson(metrics), encoding="utf-8")
    (run_dir / "report.txt").write_text(text, encoding="utf-8")
    return status, metrics, text
