"""Configuration files, snapshot files, ingestion, reports and run manifests."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import os
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np
import yaml

from . import __version__
from .ctrw import Coupling, WalkConfig
from .ensemble import config_digest
from .errors import ConfigError, DataQualityError, InputError, ParameterDomainError
from .lattice.config import LatticeConfig
from .lattice.mcwf import GridSpec
from .records import DensitySnapshot, ExponentFit

OUTPUT_ROOT_ENV = "ANOMDIFF_OUTPUT_ROOT"
DEFAULT_OUTPUT_ROOT = "anomdiff-runs"
RECIPE_NAMES = ("fig2_fwhm", "fig3_exponents", "fig4_collapse", "fig5_shape")
SIMULATORS = ("ctrw", "semiclassical", "mcwf", "ingest")

# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AnalysisConfig:
    exclusion: float | None = None
    alpha_range: tuple[float, float] = (0.8, 3.0)
    grid_points: int = 45
    shape_time: float | None = None  # ms; None uses the final-third asymptote

    def __post_init__(self):
        object.__setattr__(self, "alpha_range", tuple(float(a) for a in self.alpha_range))
        if len(self.alpha_range) != 2:
            raise ParameterDomainError("alpha_range needs two values")
        if self.exclusion is not None and not self.exclusion > 0:
            raise ParameterDomainError("exclusion must be positive")


@dataclass(frozen=True)
class IngestConfig:
    files: tuple[str, ...] = ()
    bundled: str | None = None  # name of a data set shipped with the package
    baseline_fraction: float = 0.05
    negative_tolerance: float = 0.01  # fraction of the peak
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "files", tuple(str(f) for f in self.files))
        if not 0 < self.baseline_fraction < 0.5:
            raise ParameterDomainError("baseline_fraction must lie in (0, 0.5)")
        if self.negative_tolerance < 0:
            raise ParameterDomainError("negative_tolerance must be non-negative")


@dataclass(frozen=True)
class RecipeConfig:
    name: str = "fig3_exponents"
    simulator: str = "ctrw"
    # list of per-point overrides of the simulator section, e.g. [{depth_recoils: 2.0}, ...]
    sweep: tuple = ()

    def __post_init__(self):
        if self.name not in RECIPE_NAMES:
            raise ParameterDomainError(f"recipe name must be one of {RECIPE_NAMES}")
        if self.simulator not in SIMULATORS:
            raise ParameterDomainError(f"simulator must be one of {SIMULATORS}")
        object.__setattr__(self, "sweep", tuple(dict(p) for p in self.sweep))


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    workers: int = 1


@dataclass(frozen=True)
class Config:
    run: RunConfig = RunConfig()
    ctrw_walker: WalkConfig = WalkConfig()
    sisyphus_lattice: LatticeConfig = LatticeConfig()
    grid: GridSpec = GridSpec()
    anomalous_analysis: AnalysisConfig = AnalysisConfig()
    ingest: IngestConfig = IngestConfig()
    recipe: RecipeConfig = RecipeConfig()

    def digest(self) -> str:
        return config_digest(self)


_SECTIONS = {
    "run": RunConfig,
    "ctrw_walker": WalkConfig,
    "sisyphus_lattice": LatticeConfig,
    "grid": GridSpec,
    "anomalous_analysis": AnalysisConfig,
    "ingest": IngestConfig,
    "recipe": RecipeConfig,
}


def _coerce_ctrw(values: dict, path: str) -> dict:
    corr = values.get("correlation")
    if corr is None or corr == "none":
        values["correlation"] = None
    elif isinstance(corr, dict):
        extra = set(corr) - {"chi", "noise_index"}
        if extra:
            raise ConfigError("unknown key", f"{path}.correlation.{sorted(extra)[0]}")
        try:
            values["correlation"] = Coupling(**corr)
        except ParameterDomainError as exc:
            raise ConfigError(str(exc), f"{path}.correlation") from exc
    else:
        raise ConfigError("correlation must be 'none' or a mapping with chi and noise_index",
                          f"{path}.correlation")
    return values


def build_section(cls, values: dict | None, path: str):
    values = dict(values or {})
    names = {f.name for f in dataclasses.fields(cls)}
    for key in values:
        if key not in names:
            raise ConfigError("unknown key", f"{path}.{key}")
    if cls is WalkConfig:
        values = _coerce_ctrw(values, path)
    for key in ("snapshot_times", "files", "alpha_range", "sweep"):
        if key in values and not isinstance(values[key], (list, tuple)):
            raise ConfigError("must be a list", f"{path}.{key}")
    try:
        return cls(**values)
    except ParameterDomainError as exc:
        raise ConfigError(str(exc), path) from exc
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc), path) from exc


def config_from_mapping(data: dict | None) -> Config:
    data = data or {}
    if not isinstance(data, dict):
        raise ConfigError("configuration root must be a mapping", "")
    for key in data:
        if key not in _SECTIONS:
            raise ConfigError("unknown section", str(key))
    sections = {}
    for key, cls in _SECTIONS.items():
        value = data.get(key)
        if value is not None and not isinstance(value, dict):
            raise ConfigError("section must be a mapping", key)
        sections[key] = build_section(cls, value, key)
    return Config(**sections)


def load_config(path) -> Config:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}", "") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML: {exc}", "") from exc
    return config_from_mapping(data)


def output_root() -> Path:
    return Path(os.environ.get(OUTPUT_ROOT_ENV, DEFAULT_OUTPUT_ROOT))


# ---------------------------------------------------------------------------
# snapshot files
# ---------------------------------------------------------------------------

_HEADER_KEYS = ("time_ms", "seed", "config_digest", "source")


def snapshot_filename(index: int, time: float) -> str:
    return f"snapshot_{index:03d}_t{time:.6g}ms.txt"


def write_snapshot(path, snap: DensitySnapshot) -> Path:
    path = Path(path)
    meta = snap.meta
    lines = [f"# time_ms={snap.time!r}",
             f"# seed={meta.get('seed', '')}",
             f"# config_digest={meta.get('config_digest', '')}"]
    if "source" in meta:
        lines.append(f"# source={meta['source']}")
    lines.append("# x_um density_per_um")
    body = "\n".join(f"{x!r} {y!r}" for x, y in zip(snap.x_grid.tolist(), snap.density.tolist()))
    path.write_text("\n".join(lines) + "\n" + body + "\n")
    return path


def _parse_file(path: Path):
    header: dict[str, str] = {}
    rows = []
    try:
        text = path.read_text()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from exc
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if "=" in body:
                k, v = body.split("=", 1)
                header[k.strip()] = v.strip()
            continue
        parts = line.replace(",", " ").split()
        if len(parts) != 2:
            raise InputError(f"{path}:{lineno}: expected two columns")
        try:
            rows.append((float(parts[0]), float(parts[1])))
        except ValueError as exc:
            raise InputError(f"{path}:{lineno}: {exc}") from exc
    if not rows:
        raise InputError(f"{path}: no data rows")
    data = np.array(rows)
    return header, data[:, 0], data[:, 1]


class NonMonotoneGridError(InputError):
    """Position column is not strictly increasing."""


def read_snapshot(path) -> DensitySnapshot:
    """Read a snapshot file without modifying the values."""
    path = Path(path)
    header, x, y = _parse_file(path)
    if "time_ms" not in header:
        raise InputError(f"{path}: missing '# time_ms=' header")
    if np.any(np.diff(x) <= 0):
        raise NonMonotoneGridError(f"{path}: x grid is not strictly increasing")
    meta: dict[str, Any] = {"file": path.name}
    if header.get("seed"):
        meta["seed"] = int(header["seed"])
    if header.get("config_digest"):
        meta["config_digest"] = header["config_digest"]
    if header.get("source"):
        meta["source"] = header["source"]
    try:
        return DensitySnapshot(float(header["time_ms"]), x, y, meta)
    except ParameterDomainError as exc:
        raise InputError(f"{path}: {exc}") from exc


def write_series(directory, snaps: Sequence[DensitySnapshot]) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    return [write_snapshot(directory / snapshot_filename(i, s.time), s) for i, s in enumerate(snaps)]


def read_series(directory) -> list[DensitySnapshot]:
    files = sorted(Path(directory).glob("*.txt"))
    if not files:
        raise InputError(f"no snapshot files in {directory}")
    snaps = sorted((read_snapshot(f) for f in files), key=lambda s: s.time)
    return snaps


# ---------------------------------------------------------------------------
# ingestion
# ---------------------------------------------------------------------------


def ingest(paths: Iterable, metadata: dict | None = None, *, baseline_fraction: float = 0.05,
           negative_tolerance: float = 0.01) -> list[DensitySnapshot]:
    """Validate, baseline-correct and normalize a series of 1-D density files.

    The baseline is the mean over the outer ``baseline_fraction`` of points
    (half on each side).  Values more negative than ``negative_tolerance`` times
    the peak after subtraction raise DataQualityError; smaller negatives are
    clipped to zero.
    """
    paths = [Path(p) for p in paths]
    if not paths:
        raise InputError("no files to ingest")
    metadata = dict(metadata or {})
    times_override = metadata.pop("times", None)
    if times_override is not None and len(times_override) != len(paths):
        raise InputError("metadata times must match the number of files")
    out = []
    for i, path in enumerate(paths):
        header, x, y = _parse_file(path)
        if np.any(np.diff(x) <= 0):
            raise NonMonotoneGridError(f"{path}: x grid is not strictly increasing")
        if times_override is not None:
            time = float(times_override[i])
        elif "time_ms" in header:
            time = float(header["time_ms"])
        else:
            raise InputError(f"{path}: no time_ms header and no time in metadata")
        if not np.all(np.isfinite(y)):
            raise DataQualityError(f"{path}: non-finite density values")
        m = max(1, int(math.ceil(baseline_fraction * x.size / 2)))
        baseline = float(np.mean(np.concatenate([y[:m], y[-m:]])))
        corrected = y - baseline
        peak = float(corrected.max())
        if not peak > 0:
            raise DataQualityError(f"{path}: no signal above the baseline")
        if corrected.min() < -negative_tolerance * peak:
            raise DataQualityError(f"{path}: density {corrected.min():.3g} below baseline exceeds "
                                   f"{negative_tolerance:g} of the peak")
        corrected = np.clip(corrected, 0.0, None)
        integral = float(np.trapezoid(corrected, x))
        meta = {"file": path.name, "baseline": baseline, "source": "ingest"}
        meta.update({k: header[k] for k in ("seed", "config_digest") if header.get(k)})
        meta.update(metadata)
        try:
            snap = DensitySnapshot(time, x, corrected / integral, meta)
        except ParameterDomainError as exc:
            raise InputError(f"{path}: {exc}") from exc
        out.append(snap)
    out.sort(key=lambda s: s.time)
    times = [s.time for s in out]
    dup = [t for t, u in zip(times, times[1:]) if t == u]
    if dup:
        raise InputError(f"duplicate timestamp {dup[0]} ms in ingested series")
    return out


def bundled_dataset(name: str) -> list[Path]:
    base = Path(__file__).parent / "data" / name
    files = sorted(base.glob("*.txt"))
    if not files:
        raise InputError(f"no bundled data set named {name!r}")
    return files


# ---------------------------------------------------------------------------
# reports and manifests
# ---------------------------------------------------------------------------


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return _jsonable(dataclasses.asdict(obj))
    return obj


def fit_record(fit: ExponentFit, inputs: Sequence[str] = (), **extra) -> dict:
    rec = fit.to_record()
    rec["input_digests"] = list(inputs)
    rec.update(extra)
    return rec


def write_json(path, payload) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")
    return path


def read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read report {path}: {exc}") from exc


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def snapshot_digest(snap: DensitySnapshot) -> str:
    h = hashlib.sha256()
    h.update(repr(snap.time).encode())
    h.update(np.ascontiguousarray(snap.x_grid).tobytes())
    h.update(np.ascontiguousarray(snap.density).tobytes())
    return h.hexdigest()


MANIFEST_NAME = "manifest.json"


@dataclass
class RunManifest:
    config_digest: str
    seed: int
    version: str = __version__
    started: str = ""
    finished: str = ""
    artifacts: list = field(default_factory=list)  # [{"path", "sha256"}]

    @property
    def data_digest(self) -> str:
        """Digest over every artifact's path and content hash; independent of timestamps."""
        h = hashlib.sha256()
        for a in sorted(self.artifacts, key=lambda a: a["path"]):
            h.update(f"{a['path']}:{a['sha256']}\n".encode())
        return h.hexdigest()

    def collect(self, root) -> None:
        root = Path(root)
        self.artifacts = [{"path": p.relative_to(root).as_posix(), "sha256": file_digest(p)}
                          for p in sorted(root.rglob("*")) if p.is_file() and p.name != MANIFEST_NAME]

    def write(self, root) -> Path:
        payload = dataclasses.asdict(self)
        payload["data_digest"] = self.data_digest
        return write_json(Path(root) / MANIFEST_NAME, payload)


def now_utc() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")
