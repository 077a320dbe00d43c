"""Configuration-driven Monte Carlo runs: validated configs, seeded
replications, per-replication records and manifest aggregation."""

from __future__ import annotations

import copy
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .estimate import (
    BandwidthGrid,
    DEFAULT_KAPPA_THRESHOLD,
    SingularityError,
    density_functionals,
    l1_distance,
    quasi_optimal_bandwidth,
    weighted_sup_error,
    DensityEstimate,
)
from .levy import LevyComponentSpec, nig_bar_nu
from .numerics import Grid1D, RngStream
from .simulate import IncrementPanel, components_from_dicts, simulate_panel
from .timechange import TimeChangeSpec, timechange_from_dict

SCHEMA = "tclevy.experiment/1"
# Keys whose values depend on wall-clock time; excluded from reproducibility checks.
VOLATILE_KEYS = ("timestamps", "runtime_s")


class ConfigError(ValueError):
    """Invalid experiment configuration; ``str()`` starts with ``<source>:<line>:``."""


_TOP_KEYS = {
    "schema", "model", "n", "replications", "bandwidths", "kappa_threshold", "target",
    "pilot", "xgrid", "ugrid_step", "master_seed", "out", "workers", "sweep",
}
_MODEL_KEYS = {"components", "timechange", "delta"}
_COMPONENT_KEYS = {"alpha", "kappa_sym", "delta", "mu", "sigma"}
_TIMECHANGE_KEYS = {
    "gamma": {"kind", "theta", "lambda"},
    "cir": {"kind", "kappa", "eta", "zeta", "substeps"},
    "deterministic": {"kind", "rate"},
}
_XGRID_KEYS = {"min", "max", "step"}
_SWEEP_KEYS = {"kappa", "n"}


@dataclass
class ExperimentConfig:
    components: list[LevyComponentSpec]
    timechange: TimeChangeSpec
    delta: float
    n: int
    replications: int = 1
    bandwidths: BandwidthGrid = field(default_factory=BandwidthGrid.default)
    kappa_threshold: float = DEFAULT_KAPPA_THRESHOLD
    target: int = 0
    pilot: int | None = None
    xgrid: Grid1D = field(default_factory=lambda: Grid1D.uniform(-10.0, 10.0, 0.01))
    ugrid_step: float | None = None
    master_seed: int = 0
    out: str = "results"
    workers: int = 1
    sweep: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict, repr=False)

    def ugrid(self) -> Grid1D:
        x_max = float(np.max(np.abs(self.xgrid.points)))
        du = self.ugrid_step or min(np.pi / x_max, 0.01)
        return Grid1D.symmetric(1.0 / self.bandwidths.h_values[0], du)


# ---------------------------------------------------------------------------
# Loading and validation


def _line_of(text: str, key: str) -> int:
    needle = f'"{key}"'
    for i, line in enumerate(text.splitlines(), start=1):
        if needle in line:
            return i
    return 1


def _fail(source: str, text: str, key: str, msg: str):
    raise ConfigError(f"{source}:{_line_of(text, key)}: {msg}")


def _check_keys(obj, allowed, where, source, text):
    if not isinstance(obj, dict):
        _fail(source, text, where, f"'{where}' must be an object")
    for k in obj:
        if k not in allowed:
            _fail(source, text, k, f"unknown key '{k}' in {where} (allowed: {', '.join(sorted(allowed))})")


def parse_config(data: dict, source: str = "<config>", text: str = "") -> ExperimentConfig:
    """Validate every nested field of a config mapping before anything runs."""
    _check_keys(data, _TOP_KEYS, "config", source, text)
    if data.get("schema", SCHEMA) != SCHEMA:
        _fail(source, text, "schema", f"unsupported schema {data.get('schema')!r}, expected {SCHEMA!r}")
    for req in ("model", "n"):
        if req not in data:
            _fail(source, text, "model", f"missing required key '{req}'")
    model = data["model"]
    _check_keys(model, _MODEL_KEYS, "model", source, text)
    for req in _MODEL_KEYS:
        if req not in model:
            _fail(source, text, "model", f"model is missing '{req}'")
    for c in model["components"]:
        _check_keys(c, _COMPONENT_KEYS, "component", source, text)
    tc = model["timechange"]
    kind = tc.get("kind") if isinstance(tc, dict) else None
    if kind not in _TIMECHANGE_KEYS:
        _fail(source, text, "timechange", f"timechange kind must be one of {sorted(_TIMECHANGE_KEYS)}")
    _check_keys(tc, _TIMECHANGE_KEYS[kind], "timechange", source, text)
    if "xgrid" in data:
        _check_keys(data["xgrid"], _XGRID_KEYS, "xgrid", source, text)
    if "sweep" in data:
        _check_keys(data["sweep"], _SWEEP_KEYS, "sweep", source, text)
        if not data["sweep"] or any(not data["sweep"][a] for a in data["sweep"]):
            _fail(source, text, "sweep", "sweep needs at least one non-empty axis")
        if "kappa" in data["sweep"] and kind != "cir":
            _fail(source, text, "sweep", "a kappa sweep needs a cir time change")

    try:
        components = components_from_dicts(model["components"])
        if len(components) < 2:
            _fail(source, text, "components", f"need at least 2 components, got {len(components)}")
        timechange = timechange_from_dict(tc)
        bandwidths = (BandwidthGrid(data["bandwidths"]) if data.get("bandwidths") is not None
                      else BandwidthGrid.default())
        xg = data.get("xgrid", {})
        xgrid = Grid1D.uniform(xg.get("min", -10.0), xg.get("max", 10.0), xg.get("step", 0.01))
        cfg = ExperimentConfig(
            components=components,
            timechange=timechange,
            delta=float(model["delta"]),
            n=int(data["n"]),
            replications=int(data.get("replications", 1)),
            bandwidths=bandwidths,
            kappa_threshold=float(data.get("kappa_threshold", DEFAULT_KAPPA_THRESHOLD)),
            target=int(data.get("target", 0)),
            pilot=None if data.get("pilot") is None else int(data["pilot"]),
            xgrid=xgrid,
            ugrid_step=data.get("ugrid_step"),
            master_seed=int(data.get("master_seed", 0)),
            out=str(data.get("out", "results")),
            workers=int(data.get("workers", 1)),
            sweep=copy.deepcopy(data.get("sweep", {})),
            raw=copy.deepcopy(data),
        )
    except ConfigError:
        raise
    except (ValueError, TypeError, KeyError) as exc:
        raise ConfigError(f"{source}:1: {exc}") from exc
    d = len(cfg.components)
    checks = [
        (cfg.delta > 0, "model", "delta must be positive"),
        (cfg.n >= 4, "n", "n must be at least 4"),
        (cfg.replications >= 1, "replications", "replications must be positive"),
        (cfg.kappa_threshold > 0, "kappa_threshold", "kappa_threshold must be positive"),
        (0 <= cfg.target < d, "target", f"target must be in [0, {d})"),
        (cfg.pilot is None or (0 <= cfg.pilot < d and cfg.pilot != cfg.target), "pilot",
         "pilot must be a coordinate different from target"),
        (cfg.workers >= 1, "workers", "workers must be positive"),
        (0 <= cfg.master_seed < 2**64, "master_seed", "master_seed must be a 64-bit unsigned integer"),
    ]
    for ok, key, msg in checks:
        if not ok:
            _fail(source, text, key, msg)
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: invalid JSON: {exc.msg}") from exc
    return parse_config(data, str(path), text)


def with_overrides(cfg: ExperimentConfig, **changes) -> ExperimentConfig:
    raw = copy.deepcopy(cfg.raw)
    for key, value in changes.items():
        if value is None:
            continue
        if key == "kappa":
            raw["model"]["timechange"]["kappa"] = value
        else:
            raw[key] = value
    return parse_config(raw)


# ---------------------------------------------------------------------------
# Replications


@dataclass
class ReplicationOutput:
    record: dict
    estimate: DensityEstimate | None = None
    result: object = None


def run_replication(cfg: ExperimentConfig, replication: int, stream_id: int,
                    panel: IncrementPanel | None = None) -> ReplicationOutput:
    """Simulate (unless ``panel`` is given) and estimate once; errors become records."""
    start = time.perf_counter()
    record = {"replication": replication, "stream_id": stream_id, "status": "ok"}
    try:
        if panel is None:
            panel = simulate_panel(cfg.components, cfg.timechange, cfg.n, cfg.delta,
                                   RngStream(cfg.master_seed, stream_id))
        comp = cfg.components[cfg.target]
        res = quasi_optimal_bandwidth(panel, cfg.target, cfg.pilot, cfg.bandwidths, comp.sigma,
                                      cfg.kappa_threshold, cfg.xgrid, cfg.ugrid())
    except SingularityError as exc:
        record.update(status="singular", message=str(exc),
                      runtime_s=time.perf_counter() - start)
        return ReplicationOutput(record)
    truth = nig_bar_nu(comp.nig, cfg.xgrid.points)
    est = res.estimate
    integral, first_moment = density_functionals(est)
    record.update(
        selected_index=res.selected,
        selected_h=est.bandwidth,
        branch=res.curve.branch,
        error_supw=weighted_sup_error(est, truth),
        error_l1=l1_distance(est, DensityEstimate(cfg.xgrid, truth, est.bandwidth)),
        integral=integral,
        first_moment=first_moment,
        stability=res.curve.stability,
        imag_residual=est.imag_residual,
        runtime_s=time.perf_counter() - start,
    )
    return ReplicationOutput(record, est, res)


AGGREGATED = ("error_supw", "error_l1", "integral", "first_moment", "selected_h", "stability")


def aggregate(records: list[dict]) -> dict:
    """Quartiles of each metric over successful replications."""
    ok = [r for r in records if r["status"] == "ok"]
    out = {"count": len(ok), "excluded": len(records) - len(ok)}
    for key in AGGREGATED:
        vals = np.array([r[key] for r in ok], dtype=float)
        if vals.size:
            q1, med, q3 = np.percentile(vals, [25, 50, 75])
            out[key] = {"q1": float(q1), "median": float(med), "q3": float(q3)}
        else:
            out[key] = None
    return out


def write_replication(out: ReplicationOutput, directory) -> None:
    """Per-replication files: estimate, f-curve and psi'' curve CSVs."""
    if out.result is None:
        return
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    out.estimate.to_csv(directory / "estimate.csv")
    out.result.f_to_csv(directory / "f_curve.csv")
    out.result.curve.to_csv(directory / "psi2.csv")


def replication_dir(root, replication: int) -> Path:
    return Path(root) / f"rep{replication:04d}"


def _call(job):
    cfg, rep, sid, root = job
    out = run_replication(cfg, rep, sid)
    if root is not None:
        write_replication(out, replication_dir(root, rep))
    return out.record


def map_replications(jobs, workers: int) -> list[dict]:
    """Run ``(cfg, replication, stream_id, out_root)`` jobs and return their
    records in job order. Each job writes only below its own directory."""
    if workers <= 1 or len(jobs) <= 1:
        return [_call(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_call, jobs))


def stream_id_for(cell: int, replication: int) -> int:
    return (cell << 32) | replication


def manifest(cfg: ExperimentConfig, records: list[dict], started: str, extra: dict | None = None) -> dict:
    body = {
        "toolkit_version": __version__,
        "schema": SCHEMA,
        "config": cfg.raw,
        "records": records,
        "aggregates": aggregate(records),
        "timestamps": {"started": started, "finished": now_iso()},
    }
    if extra:
        body.update(extra)
    return body


def now_iso() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def strip_volatile(obj):
    """Copy of a manifest without wall-clock fields."""
    if isinstance(obj, dict):
        return {k: strip_volatile(v) for k, v in obj.items() if k not in VOLATILE_KEYS}
    if isinstance(obj, list):
        return [strip_volatile(v) for v in obj]
    return obj


# ---------------------------------------------------------------------------
# Built-in configurations

_NIG_TRIPLE = [
    {"alpha": 1.0, "kappa_sym": -0.05, "delta": 1.0, "mu": -0.5},
    {"alpha": 3.0, "kappa_sym": -0.05, "delta": 1.0, "mu": -1.0},
    {"alpha": 1.0, "kappa_sym": -0.03, "delta": 1.0, "mu": 2.0},
]

PRESETS = {
    "gamma": {
        "schema": SCHEMA,
        "model": {
            "components": _NIG_TRIPLE,
            "timechange": {"kind": "gamma", "theta": 1.0, "lambda": 1.0},
            "delta": 1.0,
        },
        "n": 1000,
        "master_seed": 20240101,
    },
    "cir": {
        "schema": SCHEMA,
        "model": {
            "components": _NIG_TRIPLE,
            "timechange": {"kind": "cir", "kappa": 1.0, "eta": 1.0, "zeta": 0.1, "substeps": 10},
            "delta": 0.1,
        },
        "n": 5000,
        "master_seed": 20240102,
    },
}


def preset(name: str, **top_level) -> ExperimentConfig:
    """A built-in configuration, with optional top-level keys replaced."""
    raw = copy.deepcopy(PRESETS[name])
    raw.update({k: v for k, v in top_level.items() if v is not None})
    return parse_config(raw, f"<preset {name}>")
