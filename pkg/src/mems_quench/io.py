"""Configuration files, CSV emission and atomic run manifests."""

from __future__ import annotations

import csv
import json
import math
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .core import ModelParams, RunConfig, make_graded_grid
from .regions import InitialDataParams, ShrinkParams

SPEC_KEYS = (
    "lambda gamma p_exp q_exp dim radius grid_points grid_cluster T_horizon K0 A M0 alpha0 eps0 "
    "delta0 C0 eta0 d0 d1 cfl_safety source_safety quench_stop max_steps output_cadence "
    "diffusion_enabled seed workers"
).split()
EXTRA_KEYS = ("scheme", "dt_max", "u0_value")
KNOWN_KEYS = frozenset(SPEC_KEYS) | frozenset(EXTRA_KEYS)
REQUIRED_KEYS = ("lambda", "gamma", "dim", "radius", "grid_points")


class ConfigError(ValueError):
    pass


def parse_config_text(text: str) -> dict:
    """Flat ``key = value`` pairs; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in KNOWN_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        out[key] = value
    return out


def read_config(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config_text(text)


def _bool(v: str) -> bool:
    v = str(v).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {v!r}")


def _float_list(v: str):
    return tuple(float(x) for x in str(v).replace(";", ",").split(",") if x.strip())


@dataclass(frozen=True)
class Experiment:
    """Everything needed to reproduce one run."""

    params: ModelParams
    config: RunConfig
    grid_points: int
    grid_cluster: float
    shrink: ShrinkParams | None
    initial: InitialDataParams | None
    u0_value: float
    seed: int
    workers: int | None
    raw: dict

    def grid(self):
        return make_graded_grid(self.grid_points, self.params.radius, self.grid_cluster)


def build_experiment(cfg: dict) -> Experiment:
    for key in REQUIRED_KEYS:
        if key not in cfg:
            raise ConfigError(f"missing required key {key!r}")
    try:
        p_exp = float(cfg.get("p_exp", 2.0))
        q_exp = float(cfg.get("q_exp", 2.0))
        params = ModelParams(
            lam=float(cfg["lambda"]),
            gamma=float(cfg["gamma"]),
            p_exp=p_exp,
            q_exp=q_exp,
            dim=int(cfg["dim"]),
            radius=float(cfg["radius"]),
            general_exponents=(p_exp, q_exp) != (2.0, 2.0),
        )
        config = RunConfig(
            cfl_safety=float(cfg.get("cfl_safety", 0.4)),
            source_safety=float(cfg.get("source_safety", 0.05)),
            quench_stop=float(cfg.get("quench_stop", 1e-3)),
            max_steps=int(cfg.get("max_steps", 200_000)),
            output_cadence=int(cfg.get("output_cadence", 50)),
            diffusion_enabled=_bool(cfg.get("diffusion_enabled", "true")),
            scheme=cfg.get("scheme", "imex"),
            dt_max=float(cfg.get("dt_max", 1e-4)),
        )
        shrink = initial = None
        if "T_horizon" in cfg:
            overrides = {k: float(cfg[k]) for k in ("K0", "A", "M0", "alpha0", "eps0", "delta0", "C0", "eta0") if k in cfg}
            shrink = ShrinkParams.defaults(float(cfg["T_horizon"]), params, **overrides)
            d1 = _float_list(cfg.get("d1", "0")) or (0.0,)
            initial = InitialDataParams(float(cfg.get("d0", 0.0)), d1)
        workers = int(cfg["workers"]) if "workers" in cfg else None
        return Experiment(
            params=params,
            config=config,
            grid_points=int(cfg["grid_points"]),
            grid_cluster=float(cfg.get("grid_cluster", 1.0)),
            shrink=shrink,
            initial=initial,
            u0_value=float(cfg.get("u0_value", 0.0)),
            seed=int(cfg.get("seed", 0)),
            workers=workers,
            raw=dict(cfg),
        )
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from None


def fmt(x) -> str:
    x = float(x)
    if math.isnan(x):
        return "nan"
    return "%.17g" % x


def write_csv(path, header, columns) -> None:
    path = Path(path)
    cols = [np.asarray(c) for c in columns]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in zip(*cols):
            w.writerow([fmt(v) for v in row])


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    data = np.array([[float(v) for v in r] for r in body]) if body else np.zeros((0, len(header)))
    return header, data


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return fmt(v) if not math.isfinite(v) else float(fmt(v))
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if hasattr(obj, "__dataclass_fields__"):
        return _jsonable({k: getattr(obj, k) for k in obj.__dataclass_fields__})
    return obj


def write_manifest(run_dir, manifest: dict) -> Path:
    run_dir = Path(run_dir)
    for name in manifest.get("files", {}).values():
        for item in name if isinstance(name, list) else [name]:
            if not (run_dir / item).exists():
                raise FileNotFoundError(f"manifest references missing file {item}")
    body = dict(manifest)
    body.setdefault("artifact_version", __version__)
    text = json.dumps(_jsonable(body), indent=2, sort_keys=True) + "\n"
    path = run_dir / "manifest.json"
    atomic_write_text(path, text)
    return path


def read_manifest(run_dir) -> dict:
    return json.loads((Path(run_dir) / "manifest.json").read_text())
