"""Configuration parsing and the on-disk formats (versioned CSV, JSON, run manifest).

Configs are TOML. Powers and noise levels given in dB are converted to
linear scale here, once; everything past this module is linear.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import platform
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable

import numpy as np
import scipy

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from . import __version__
from .amv import IterationControl
from .array import ArrayGeometry, DomainError, Scenario, Source
from .harness import GridSpec, SweepConfig, snr_to_sigma
from .rd import RdMethod, RdScene, Target

CSV_MAJOR = 1


class ConfigError(DomainError):
    """Invalid or incomplete configuration."""


class ParseError(ValueError):
    """Malformed data file; the message carries the offending line number."""


def db_to_linear(db: float) -> float:
    return float(10.0 ** (float(db) / 10.0))


# -- config parsing -----------------------------------------------------------


def read_toml(path) -> tuple[dict, str]:
    """Parsed config and its raw text. Missing or malformed files raise ConfigError."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}") from None
    try:
        return tomllib.loads(text), text
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _section(cfg: dict, name: str, required=True) -> dict:
    sec = cfg.get(name)
    if sec is None:
        if required:
            raise ConfigError(f"missing [{name}] section")
        return {}
    if not isinstance(sec, dict):
        raise ConfigError(f"[{name}] must be a table")
    return sec


def _get(sec: dict, key: str, kind, default=None, where=""):
    if key not in sec:
        if default is None:
            raise ConfigError(f"missing key '{key}'{where}")
        return default
    value = sec[key]
    try:
        if kind is int and (isinstance(value, bool) or float(value) != int(value)):
            raise ValueError
        return kind(value)
    except (TypeError, ValueError):
        raise ConfigError(f"key '{key}'{where} must be {kind.__name__}, got {value!r}") from None


def parse_geometry(cfg: dict) -> ArrayGeometry:
    sec = _section(cfg, "array")
    try:
        if "positions" in sec:
            return ArrayGeometry(tuple(float(x) for x in sec["positions"]))
        return ArrayGeometry.ula(_get(sec, "sensors", int, where=" in [array]"))
    except DomainError as exc:
        raise ConfigError(f"[array]: {exc}") from None


def parse_sources(cfg: dict) -> tuple[Source, ...]:
    items = cfg.get("sources", [])
    if not isinstance(items, list):
        raise ConfigError("sources must be an array of tables ([[sources]])")
    out = []
    for i, item in enumerate(items):
        where = f" in sources[{i}]"
        angle = _get(item, "angle_deg", float, where=where)
        if "power_db" in item:
            power = db_to_linear(_get(item, "power_db", float, where=where))
        else:
            power = _get(item, "power", float, where=where)
        out.append(Source(angle, power))
    return tuple(out)


def parse_noise(sec: dict, powers: np.ndarray, num_sensors: int):
    """Exactly one of snr_db, sigma_db, sigma or per_sensor (linear variances)."""
    keys = [k for k in ("snr_db", "sigma_db", "sigma", "per_sensor") if k in sec]
    if len(keys) != 1:
        raise ConfigError(f"[noise] needs exactly one of snr_db, sigma_db, sigma, per_sensor; got {keys}")
    key = keys[0]
    if key == "per_sensor":
        values = tuple(float(v) for v in sec["per_sensor"])
        if len(values) != num_sensors:
            raise ConfigError(f"[noise] per_sensor needs {num_sensors} values, got {len(values)}")
        return values
    if key == "snr_db":
        if powers.size == 0:
            raise ConfigError("[noise] snr_db needs at least one source")
        return snr_to_sigma(powers, _get(sec, "snr_db", float))
    if key == "sigma_db":
        return db_to_linear(_get(sec, "sigma_db", float))
    return _get(sec, "sigma", float)


def parse_grid(cfg: dict) -> GridSpec:
    sec = _section(cfg, "grid", required=False)
    spec = GridSpec(
        _get(sec, "start_deg", float, 0.0, " in [grid]"),
        _get(sec, "stop_deg", float, 180.0, " in [grid]"),
        _get(sec, "step_deg", float, 0.2, " in [grid]"),
    )
    if not (spec.step > 0 and 0 <= spec.start < spec.stop <= 180):
        raise ConfigError(f"[grid] needs 0 <= start_deg < stop_deg <= 180 and step_deg > 0, got {spec}")
    return spec


def parse_control(cfg: dict) -> IterationControl:
    sec = _section(cfg, "estimator", required=False)
    clamp = sec.get("clamp")
    try:
        return IterationControl(
            max_iters=_get(sec, "max_iters", int, 1000, " in [estimator]"),
            rel_tol=_get(sec, "rel_tol", float, 1e-6, " in [estimator]"),
            clamp=None if clamp is None else bool(clamp),
            record_states=False,
        )
    except DomainError as exc:
        raise ConfigError(f"[estimator]: {exc}") from None


def _coherence(sim: dict) -> tuple[tuple[int, ...], ...]:
    groups = sim.get("coherence_groups", [])
    try:
        return tuple(tuple(int(i) for i in g) for g in groups)
    except (TypeError, ValueError):
        raise ConfigError("[simulation] coherence_groups must be a list of index lists") from None


@dataclass(frozen=True)
class ScenarioConfig:
    scenario: Scenario
    grid: GridSpec = GridSpec()
    control: IterationControl = IterationControl(record_states=False)
    nonuniform: bool = False
    num_sources: int = 0


def parse_scenario_config(cfg: dict) -> ScenarioConfig:
    geometry = parse_geometry(cfg)
    sources = parse_sources(cfg)
    sim = _section(cfg, "simulation")
    powers = np.array([s.power for s in sources])
    noise = parse_noise(_section(cfg, "noise"), powers, geometry.num_sensors)
    try:
        scenario = Scenario(
            geometry,
            sources,
            noise,
            _get(sim, "snapshots", int, where=" in [simulation]"),
            seed=_get(sim, "seed", int, 0, " in [simulation]"),
            coherence_groups=_coherence(sim),
        )
    except DomainError as exc:
        raise ConfigError(str(exc)) from None
    est = _section(cfg, "estimator", required=False)
    return ScenarioConfig(
        scenario,
        parse_grid(cfg),
        parse_control(cfg),
        nonuniform=bool(est.get("nonuniform", False)),
        num_sources=_get(est, "num_sources", int, len(sources), " in [estimator]"),
    )


def parse_sweep_config(cfg: dict) -> SweepConfig:
    geometry = parse_geometry(cfg)
    sources = parse_sources(cfg)
    sim = _section(cfg, "simulation")
    sweep = _section(cfg, "sweep")
    try:
        template = Scenario(
            geometry,
            sources,
            1.0,
            _get(sim, "snapshots", int, where=" in [simulation]"),
            coherence_groups=_coherence(sim),
        )
        return SweepConfig(
            scenario=template,
            snr_list=tuple(float(s) for s in sweep.get("snr_db", [])),
            trials=_get(sweep, "trials", int, where=" in [sweep]"),
            estimators=tuple(sweep.get("estimators", [])),
            base_seed=_get(sweep, "base_seed", int, 0, " in [sweep]"),
            grid=parse_grid(cfg),
            control=parse_control(cfg),
        )
    except DomainError as exc:
        raise ConfigError(str(exc)) from None


@dataclass(frozen=True)
class RdConfig:
    scene: RdScene
    methods: tuple[str, ...] = tuple(m.value for m in RdMethod)
    control: IterationControl = IterationControl(record_states=False)
    floor_db: float = 40.0


def parse_rd_config(cfg: dict) -> RdConfig:
    wave = _section(cfg, "waveform")
    grid = _section(cfg, "grid")
    scene = _section(cfg, "scene", required=False)
    items = cfg.get("targets", [])
    if not isinstance(items, list) or not items:
        raise ConfigError("need at least one [[targets]] entry")
    targets = tuple(
        Target(
            _get(t, "delay", int, where=f" in targets[{i}]"),
            _get(t, "doppler", int, where=f" in targets[{i}]"),
            _get(t, "power_db", float, where=f" in targets[{i}]"),
        )
        for i, t in enumerate(items)
    )
    imaging = _section(cfg, "imaging", required=False)
    try:
        methods = tuple(RdMethod.parse(m).value for m in imaging.get("methods", [m.value for m in RdMethod]))
        rd_scene = RdScene(
            code_length=_get(wave, "code_length", int, where=" in [waveform]"),
            num_delays=_get(grid, "delays", int, where=" in [grid]"),
            num_dopplers=_get(grid, "dopplers", int, where=" in [grid]"),
            targets=targets,
            noise_db=_get(_section(cfg, "noise", required=False), "power_db", float, 0.0, " in [noise]"),
            seed=_get(scene, "seed", int, 0, " in [scene]"),
        )
    except DomainError as exc:
        raise ConfigError(str(exc)) from None
    if rd_scene.code_length < 2 or rd_scene.num_delays < 1 or rd_scene.num_dopplers < 1:
        raise ConfigError("need code_length >= 2 and at least one delay and Doppler bin")
    return RdConfig(rd_scene, methods, parse_control(cfg), _get(scene, "floor_db", float, 40.0, " in [scene]"))


# -- versioned CSV ------------------------------------------------------------


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path, kind: str, header: Iterable[str], rows: Iterable[Iterable[Any]]) -> Path:
    """CSV with a ``# samv-csv v<major> <kind>`` first line; floats round-trip exactly."""
    path = Path(path)
    buf = io.StringIO()
    buf.write(f"# samv-csv v{CSV_MAJOR} {kind}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(list(header))
    for row in rows:
        writer.writerow([_fmt(x) for x in row])
    path.write_text(buf.getvalue())
    return path


def read_csv(path, kind: str) -> tuple[list[str], list[tuple[int, list[str]]]]:
    """Header and ``(line_number, fields)`` rows of a versioned CSV of the given kind."""
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise ParseError(f"{path}: cannot read ({exc.strerror or exc})") from None
    if not lines:
        raise ParseError(f"{path}:1: empty file")
    first = lines[0].split()
    if len(first) != 4 or first[:2] != ["#", "samv-csv"] or not first[2].startswith("v"):
        raise ParseError(f"{path}:1: missing '# samv-csv v{CSV_MAJOR} {kind}' header")
    try:
        major = int(first[2][1:].split(".")[0])
    except ValueError:
        raise ParseError(f"{path}:1: bad version {first[2]!r}") from None
    if major != CSV_MAJOR:
        raise ParseError(f"{path}:1: unsupported format version {first[2]} (this reader handles v{CSV_MAJOR})")
    if first[3] != kind:
        raise ParseError(f"{path}:1: expected a {kind!r} file, got {first[3]!r}")
    if len(lines) < 2:
        raise ParseError(f"{path}:2: missing column header")
    header = next(csv.reader([lines[1]]))
    rows = []
    for no, line in enumerate(lines[2:], start=3):
        if not line.strip():
            continue
        fields = next(csv.reader([line]))
        if len(fields) != len(header):
            raise ParseError(f"{path}:{no}: expected {len(header)} fields, got {len(fields)}")
        rows.append((no, fields))
    return header, rows


SNAPSHOT_COLUMNS = ("sensor_index", "snapshot_index", "real", "imag")


def write_snapshots(path, Y: np.ndarray) -> Path:
    """Snapshots as long-form rows, grouped by snapshot, sensors in order within each."""
    M, N = Y.shape
    rows = ((m, n, Y[m, n].real, Y[m, n].imag) for n in range(N) for m in range(M))
    return write_csv(path, "snapshots", SNAPSHOT_COLUMNS, rows)


def read_snapshots(path) -> np.ndarray:
    header, rows = read_csv(path, "snapshots")
    if tuple(header) != SNAPSHOT_COLUMNS:
        raise ParseError(f"{path}:2: expected columns {','.join(SNAPSHOT_COLUMNS)}")
    if not rows:
        raise ParseError(f"{path}:3: no snapshot rows")
    entries = {}
    for no, (m, n, re, im) in rows:
        try:
            key = (int(m), int(n))
            value = complex(float(re), float(im))
        except ValueError:
            raise ParseError(f"{path}:{no}: cannot parse {m},{n},{re},{im}") from None
        if key[0] < 0 or key[1] < 0:
            raise ParseError(f"{path}:{no}: negative index")
        if key in entries:
            raise ParseError(f"{path}:{no}: duplicate entry for sensor {key[0]}, snapshot {key[1]}")
        entries[key] = value
    M = max(k[0] for k in entries) + 1
    N = max(k[1] for k in entries) + 1
    if len(entries) != M * N:
        raise ParseError(f"{path}: incomplete data, {len(entries)} entries for {M} sensors x {N} snapshots")
    Y = np.empty((M, N), dtype=complex)
    for (m, n), v in entries.items():
        Y[m, n] = v
    return Y


def write_spectrum(path, grid: np.ndarray, power: np.ndarray) -> Path:
    db = 10.0 * np.log10(np.maximum(power, np.finfo(float).tiny))
    return write_csv(path, "spectrum", ("angle_deg", "power", "power_db"), zip(grid, power, db))


def write_peaks(path, angles: np.ndarray, powers: np.ndarray) -> Path:
    with np.errstate(divide="ignore", invalid="ignore"):
        db = 10.0 * np.log10(np.maximum(powers, np.finfo(float).tiny))
    return write_csv(path, "peaks", ("angle_deg", "power", "power_db"), zip(angles, powers, db))


def write_rd_image(path, power_db: np.ndarray) -> Path:
    rows = ((d, f, power_db[d, f]) for d in range(power_db.shape[0]) for f in range(power_db.shape[1]))
    return write_csv(path, "rd-image", ("range_bin", "doppler_bin", "power_db"), rows)


def read_rd_image(path) -> np.ndarray:
    header, rows = read_csv(path, "rd-image")
    vals = {}
    for no, (d, f, p) in rows:
        try:
            vals[(int(d), int(f))] = float(p)
        except ValueError:
            raise ParseError(f"{path}:{no}: cannot parse row") from None
    D = max(k[0] for k in vals) + 1
    F = max(k[1] for k in vals) + 1
    img = np.full((D, F), np.nan)
    for (d, f), p in vals.items():
        img[d, f] = p
    return img


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")
    return path


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def truth_record(scenario: Scenario) -> dict:
    noise = scenario.noise_diagonal()
    return {
        "angles_deg": scenario.angles.tolist(),
        "powers": scenario.powers.tolist(),
        "powers_db": [10.0 * np.log10(p) for p in scenario.powers],
        "sigma": float(noise[0]) if scenario.is_uniform_noise else noise.tolist(),
        "sensor_positions": list(scenario.geometry.positions),
        "snapshots": scenario.snapshots,
        "seed": scenario.seed,
        "coherence_groups": [list(g) for g in scenario.coherence_groups],
    }


# -- manifest -----------------------------------------------------------------


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(path) -> str:
    return sha256_bytes(Path(path).read_bytes())


@dataclass
class RunManifest:
    command: str
    argv: list[str]
    config_path: str
    config_text: str
    seed: int | None
    inputs: dict[str, str] = field(default_factory=dict)
    outputs: list[str] = field(default_factory=list)
    failures: dict[str, Any] = field(default_factory=dict)
    wall_seconds: float = 0.0

    def to_dict(self) -> dict:
        return {
            "command": self.command,
            "argv": self.argv,
            "config_path": self.config_path,
            "config_sha256": sha256_bytes(self.config_text.encode()),
            "config_text": self.config_text,
            "seed": self.seed,
            "inputs_sha256": self.inputs,
            "outputs": sorted(self.outputs),
            "failures": self.failures,
            "wall_seconds": self.wall_seconds,
            "versions": {
                "samv": __version__,
                "python": platform.python_version(),
                "numpy": np.__version__,
                "scipy": scipy.__version__,
            },
        }

    def write(self, directory) -> Path:
        return write_json(Path(directory) / "manifest.json", self.to_dict())
