"""Declarative scenario files (INI-style ``key = value`` sections).

Example::

    [scenario]
    name = buffers
    cycles = 100
    seed = 7
    hold_cycles = 20

    [truth]
    ph = 4.00, 6.86, 7.00, 9.18, 10.01

    [envelopes]
    ph_mean_abs_error = <= 0.06

Truth fields may list several values. The schedule steps to the next value
every ``hold_cycles`` cycles and wraps around. Relative file paths resolve
against the scenario file's directory.
"""

import configparser
import dataclasses
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .calib import DoCalib
from .errors import ConfigError
from .metrics import OPS
from .node import CycleSchedule, NodeFaults
from .sensors import TruthDynamics, WaterTruth

TRUTH_FIELDS = ("ph", "do_mgl", "temp_c", "tds_ppm", "level_cm")
NOISE_CHANNELS = ("ph", "do", "tds", "temp", "level")

KNOWN = {
    "scenario": {"name", "cycles", "seed", "device_id", "hold_cycles"},
    "truth": set(TRUTH_FIELDS),
    "dynamics": {f.name for f in dataclasses.fields(TruthDynamics)},
    "noise": set(NOISE_CHANNELS),
    "sensor": {"ph_slope", "ph_offset", "mount_height_cm"},
    "calibration": {"source", "file", "do_table", "interpolate_do", "do_cal_v", "do_cal_t"},
    "schedule": {f.name for f in dataclasses.fields(CycleSchedule)},
    "faults": {f.name for f in dataclasses.fields(NodeFaults)} | {"ack_loss", "link_latency_ms"},
    "uplink": {"rtt_mean_ms", "rtt_std_ms", "rtt_min_ms", "rtt_max_ms", "outages", "cache"},
    "envelopes": None,
}


@dataclass
class Scenario:
    name: str
    cycles: int
    seed: int = 0
    device_id: str = "hydro-01"
    hold_cycles: int = 1
    truth_points: dict = field(default_factory=lambda: {f: [getattr(WaterTruth(), f)]
                                                        for f in TRUTH_FIELDS})
    dynamics: TruthDynamics = TruthDynamics()
    noise: dict = field(default_factory=lambda: dict.fromkeys(NOISE_CHANNELS, 0.0))
    ph_slope: float = -0.0125
    ph_offset: float = 14.0
    mount_height_cm: float = 150.0
    calibration_source: str = "buffers"
    calibration_file: Path = None
    do_table_file: Path = None
    interpolate_do: bool = False
    do_cal: DoCalib = DoCalib()
    schedule: CycleSchedule = CycleSchedule()
    faults: NodeFaults = field(default_factory=NodeFaults)
    ack_loss: float = 0.0
    link_latency_ms: int = 0
    rtt: dict = field(default_factory=lambda: {"mean_ms": 1750.0, "std_ms": 420.0,
                                               "low_ms": 200.0, "high_ms": 10000.0})
    outages: list = field(default_factory=list)
    cache: str = "file"
    envelopes: dict = field(default_factory=dict)
    source_text: str = ""

    def __post_init__(self):
        if self.cycles < 1:
            raise ConfigError("scenario", "cycles must be >= 1")
        if self.hold_cycles < 1:
            raise ConfigError("scenario", "hold_cycles must be >= 1")
        lengths = {len(v) for v in self.truth_points.values()} - {1}
        if len(lengths) > 1:
            raise ConfigError("scenario", "truth lists must share one length")
        if self.calibration_source not in ("buffers", "file"):
            raise ConfigError("scenario", f"unknown calibration source {self.calibration_source!r}")
        if self.calibration_source == "file" and self.calibration_file is None:
            raise ConfigError("scenario", "calibration source 'file' needs file =")
        if self.cache not in ("file", "memory"):
            raise ConfigError("scenario", f"cache must be file or memory, got {self.cache!r}")

    def check_files(self):
        for path in (self.calibration_file, self.do_table_file):
            if path is not None and not Path(path).is_file():
                raise ConfigError("scenario", f"missing file {path}")
        return self

    @property
    def n_points(self):
        return max(len(v) for v in self.truth_points.values())

    def truth_at(self, point_index):
        values = {name: points[point_index % len(points)]
                  for name, points in self.truth_points.items()}
        try:
            return WaterTruth(**values)
        except Exception as exc:
            raise ConfigError("scenario", str(exc)) from None

    def point_index(self, cycle):
        return (cycle // self.hold_cycles) % self.n_points

    @property
    def duration_ms(self):
        return self.cycles * self.schedule.cycle_period_ms


def _floats(text, key):
    try:
        return [float(tok) for tok in text.replace(",", " ").split()]
    except ValueError:
        raise ConfigError("scenario", f"{key}: expected numbers, got {text!r}") from None


def _outages(text):
    windows = []
    for chunk in text.split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        try:
            start, end = (int(x) for x in chunk.split("-"))
        except ValueError:
            raise ConfigError("scenario", f"outage window {chunk!r}, expected start-end ms") from None
        windows.append((start, end))
    return windows


def _envelope(key, text):
    parts = text.split()
    if len(parts) != 2 or parts[0] not in OPS:
        raise ConfigError("scenario", f"envelope {key}: expected '<op> <limit>'")
    try:
        return parts[0], float(parts[1])
    except ValueError:
        raise ConfigError("scenario", f"envelope {key}: bad limit {parts[1]!r}") from None


def parse_scenario(text, base_dir=".", seed=None):
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError("scenario", str(exc).splitlines()[0]) from None
    for section in parser.sections():
        if section not in KNOWN:
            raise ConfigError("scenario", f"unknown section [{section}]")
        allowed = KNOWN[section]
        if allowed is not None:
            unknown = set(parser[section]) - allowed
            if unknown:
                raise ConfigError("scenario", f"unknown key(s) in [{section}]: {sorted(unknown)}")

    def get(section, key, conv, default):
        if not parser.has_option(section, key):
            return default
        raw = parser.get(section, key)
        try:
            return conv(raw)
        except ValueError:
            raise ConfigError("scenario", f"[{section}] {key} = {raw!r}") from None

    def path(section, key):
        value = get(section, key, str, None)
        if value is None or value == "default":
            return None
        p = Path(value)
        return p if p.is_absolute() else Path(base_dir) / p

    def boolean(raw):
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(raw)

    defaults = Scenario(name="scenario", cycles=1)
    truth_points = dict(defaults.truth_points)
    if parser.has_section("truth"):
        for key, raw in parser["truth"].items():
            truth_points[key] = _floats(raw, key)

    def override(section, current):
        if not parser.has_section(section):
            return current
        changes = {}
        for key, raw in parser[section].items():
            kind = type(getattr(current, key))
            try:
                changes[key] = kind(float(raw))
            except ValueError:
                raise ConfigError("scenario", f"[{section}] {key} = {raw!r}") from None
        return dataclasses.replace(current, **changes)

    dynamics = override("dynamics", defaults.dynamics)
    schedule = override("schedule", defaults.schedule)

    faults = NodeFaults(**{
        f.name: get("faults", f.name, float, 0.0) for f in dataclasses.fields(NodeFaults)
    })
    noise = {ch: get("noise", ch, float, 0.0) for ch in NOISE_CHANNELS}
    rtt = {
        "mean_ms": get("uplink", "rtt_mean_ms", float, 1750.0),
        "std_ms": get("uplink", "rtt_std_ms", float, 420.0),
        "low_ms": get("uplink", "rtt_min_ms", float, 200.0),
        "high_ms": get("uplink", "rtt_max_ms", float, 10000.0),
    }
    envelopes = {}
    if parser.has_section("envelopes"):
        envelopes = {k: _envelope(k, v) for k, v in parser["envelopes"].items()}

    scenario = Scenario(
        name=get("scenario", "name", str, "scenario"),
        cycles=get("scenario", "cycles", int, 1),
        seed=seed if seed is not None else get("scenario", "seed", int, 0),
        device_id=get("scenario", "device_id", str, "hydro-01"),
        hold_cycles=get("scenario", "hold_cycles", int, 1),
        truth_points=truth_points,
        dynamics=dynamics,
        noise=noise,
        ph_slope=get("sensor", "ph_slope", float, -0.0125),
        ph_offset=get("sensor", "ph_offset", float, 14.0),
        mount_height_cm=get("sensor", "mount_height_cm", float, 150.0),
        calibration_source=get("calibration", "source", str, "buffers"),
        calibration_file=path("calibration", "file"),
        do_table_file=path("calibration", "do_table"),
        interpolate_do=get("calibration", "interpolate_do", boolean, False),
        do_cal=DoCalib(cal_v=get("calibration", "do_cal_v", float, 190.0),
                       cal_t=get("calibration", "do_cal_t", float, 25.0)),
        schedule=schedule,
        faults=faults,
        ack_loss=get("faults", "ack_loss", float, 0.0),
        link_latency_ms=get("faults", "link_latency_ms", int, 0),
        rtt=rtt,
        outages=get("uplink", "outages", _outages, []),
        cache=get("uplink", "cache", str, "file"),
        envelopes=envelopes,
        source_text=text,
    )
    for i in range(scenario.n_points):
        scenario.truth_at(i)
    return scenario


def bundled_scenarios():
    root = resources.files("hydropipe").joinpath("scenarios")
    return sorted(p.name for p in root.iterdir() if p.name.endswith(".scn"))


def resolve_scenario_path(name):
    """A filesystem path, or the name of a bundled scenario."""
    candidate = Path(name)
    if candidate.is_file():
        return candidate
    bundled = resources.files("hydropipe").joinpath("scenarios", candidate.name)
    if bundled.is_file():
        return Path(str(bundled))
    if not candidate.suffix:
        bundled = resources.files("hydropipe").joinpath("scenarios", candidate.name + ".scn")
        if bundled.is_file():
            return Path(str(bundled))
    raise ConfigError("scenario", f"no such scenario file: {name}")


def load_scenario(name, seed=None):
    """Parse a scenario and verify that every file it references exists."""
    path = resolve_scenario_path(name)
    return parse_scenario(path.read_text(encoding="utf-8"), path.parent, seed).check_files()
