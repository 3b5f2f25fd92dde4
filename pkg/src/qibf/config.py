"""Experiment configuration: schema, validation, and fixture loading.

A configuration is a JSON document.  Top-level keys:

``name``            run label (used in output paths)
``model``           inline model config (see :mod:`qibf.model` schema)
``quantizer``       quantizer spec, one of::

                        {"type": "uniform", "bits": B, "zeta": Z}
                        {"type": "uniform", "bits": B, "zeta_policy": "four_sqrt_s"}
                        {"type": "lloyd_max", "levels": M, "sigma": S}
                        {"type": "lloyd_max", "levels": M, "sigma_policy": "innovation"}
                        {"type": "explicit", "breakpoints": [...], "representatives": [...]}
                        {"type": "file", "path": "quantizer.json"}

                    The two ``*_policy`` forms derive a per-step quantizer
                    from the innovation standard deviation sqrt(S_k).
``methods``         subset of ["kalman", "K", "R", "S"]; at least one
``horizon``         number of steps (>= 1; capped by the model horizon)
``seeds``           list of integer seeds
``realization``     optional recorded noises for deterministic replay
``u``               optional input sequence (default all zero)
``grid_points``     receiver grid points per axis (default 201)
``grid_sigmas``     receiver grid half-width in prior standard deviations (default 6)
``channel_errors``  list of {"time": k, "new_symbol": s} applied to the
                    receiver's copy of the symbol stream
``dump_densities``  write per-step density CSVs (default true)
``mirror_sum``      method-S covariance sum over both sign mirrors (default true)

The Case-1 and Case-2 fixtures ship inside the package and load by name.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .errors import ConfigError
from .model import (
    LinearGaussianModel,
    NoiseRealization,
    model_from_config,
    realization_from_config,
)
from .quantizer import Quantizer, build_uniform_midrise, lloyd_max_design

__all__ = ["ExperimentConfig", "load_config", "fixture_names", "build_quantizers"]

_METHODS = ("kalman", "K", "R", "S")


@dataclass
class ExperimentConfig:
    name: str
    model: LinearGaussianModel
    quantizer_spec: dict
    methods: list
    horizon: int
    seeds: list
    realization: NoiseRealization = None
    u_seq: np.ndarray = None
    grid_points: int = 201
    grid_sigmas: float = 6.0
    channel_errors: list = field(default_factory=list)
    dump_densities: bool = True
    mirror_sum: bool = True
    raw: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if not self.methods:
            raise ConfigError("config needs at least one method")
        bad = [m for m in self.methods if m not in _METHODS]
        if bad:
            raise ConfigError(f"unknown methods {bad}; choose from {list(_METHODS)}")
        if self.horizon < 1:
            raise ConfigError(f"horizon must be >= 1, got {self.horizon}")
        if self.horizon > self.model.horizon:
            raise ConfigError(
                f"horizon {self.horizon} exceeds model horizon {self.model.horizon}"
            )
        if not self.seeds:
            raise ConfigError("config needs at least one seed")
        if self.grid_points < 3:
            raise ConfigError("grid_points must be >= 3")
        for inj in self.channel_errors:
            if not (0 <= int(inj["time"]) < self.horizon):
                raise ConfigError(f"channel error time {inj['time']} outside horizon")


def fixture_names():
    return ["case1", "case2"]


def _read_fixture(name: str) -> dict:
    ref = resources.files("qibf.fixtures").joinpath(f"{name}.json")
    if not ref.is_file():
        raise ConfigError(f"unknown fixture {name!r}; available: {fixture_names()}")
    return json.loads(ref.read_text())


def load_config(source) -> ExperimentConfig:
    """Load a config from a fixture name, a path, or an already-parsed dict."""
    if isinstance(source, dict):
        cfg = source
    else:
        source = str(source)
        if source in fixture_names():
            cfg = _read_fixture(source)
        else:
            try:
                with open(source) as f:
                    cfg = json.load(f)
            except FileNotFoundError:
                raise ConfigError(f"config file not found: {source}")
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config file {source} is not valid JSON: {exc}")
    try:
        model = model_from_config(cfg["model"])
    except KeyError as exc:
        raise ConfigError(f"config is missing required key {exc}")
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"bad model config: {exc}")
    realization = None
    if cfg.get("realization") is not None:
        try:
            realization = realization_from_config(cfg["realization"])
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"bad realization config: {exc}")
    u_seq = None
    if cfg.get("u") is not None:
        u_seq = np.asarray(cfg["u"], dtype=np.float64)
    try:
        return ExperimentConfig(
            name=cfg.get("name", "experiment"),
            model=model,
            quantizer_spec=cfg.get("quantizer", {"type": "uniform", "bits": 3, "zeta": 0.6222}),
            methods=list(cfg.get("methods", ["K"])),
            horizon=int(cfg.get("horizon", model.horizon)),
            seeds=[int(s) for s in cfg.get("seeds", [0])],
            realization=realization,
            u_seq=u_seq,
            grid_points=int(cfg.get("grid_points", 201)),
            grid_sigmas=float(cfg.get("grid_sigmas", 6.0)),
            channel_errors=list(cfg.get("channel_errors", [])),
            dump_densities=bool(cfg.get("dump_densities", True)),
            mirror_sum=bool(cfg.get("mirror_sum", True)),
            raw=cfg,
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bad config value: {exc}")


def build_quantizers(spec: dict, horizon: int, innovation_stds=None):
    """Materialize the per-step quantizer sequence from a spec.

    ``innovation_stds`` (sqrt(S_k) from the gain schedule) is required by the
    adaptive policies and ignored otherwise.
    """
    kind = spec.get("type", "uniform")
    if kind == "uniform":
        bits = int(spec["bits"])
        if "zeta" in spec:
            q = build_uniform_midrise(bits, float(spec["zeta"]))
            return [q] * horizon
        if spec.get("zeta_policy") == "four_sqrt_s":
            if innovation_stds is None:
                raise ConfigError("zeta_policy needs the innovation schedule")
            return [build_uniform_midrise(bits, 4.0 * float(s)) for s in innovation_stds[:horizon]]
        raise ConfigError("uniform quantizer needs 'zeta' or a 'zeta_policy'")
    if kind == "lloyd_max":
        levels = int(spec["levels"])
        if "sigma" in spec:
            q = lloyd_max_design(float(spec["sigma"]), levels)
            return [q] * horizon
        if spec.get("sigma_policy") == "innovation":
            if innovation_stds is None:
                raise ConfigError("sigma_policy needs the innovation schedule")
            return [lloyd_max_design(float(s), levels) for s in innovation_stds[:horizon]]
        raise ConfigError("lloyd_max quantizer needs 'sigma' or a 'sigma_policy'")
    if kind == "explicit":
        q = Quantizer.from_dict(spec)
        return [q] * horizon
    if kind == "file":
        with open(spec["path"]) as f:
            q = Quantizer.from_dict(json.load(f))
        return [q] * horizon
    raise ConfigError(f"unknown quantizer type {kind!r}")
