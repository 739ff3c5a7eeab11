"""Merged run configuration loaded from a single JSON file.

Sections: ``lfcc``, ``model``, ``train``, ``tdcf``, ``paths`` and a top-level
``seed``.  Every section is optional; missing values take the defaults of
the owning dataclass.  ``model`` may set ``"preset": "desk"`` to start from
the width-reduced layer plan.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .errors import ConfigError
from .evaluation.metrics import TdcfParams, default_tdcf_params
from .lfcc import LfccConfig
from .model.config import ModelConfig
from .training.loop import TrainConfig

INPUT_PATHS = ("protocol", "audio_dir", "feature_dir")
PATH_KEYS = INPUT_PATHS + ("output_dir",)
SECTIONS = ("lfcc", "model", "train", "tdcf", "paths", "seed")


def model_config(d: Optional[dict] = None) -> ModelConfig:
    d = dict(d or {})
    preset = d.pop("preset", "full")
    if preset == "desk":
        return ModelConfig.desk_scale(**d)
    if preset != "full":
        raise ConfigError("must be 'full' or 'desk'", "model.preset")
    return ModelConfig.from_dict(d)


@dataclass
class RunConfig:
    lfcc: LfccConfig = field(default_factory=LfccConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    tdcf: TdcfParams = field(default_factory=default_tdcf_params)
    paths: dict = field(default_factory=dict)
    seed: int = 0

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        unknown = set(d) - set(SECTIONS)
        if unknown:
            raise ConfigError(f"unknown sections {sorted(unknown)}", "config")
        paths = d.get("paths", {})
        bad = set(paths) - set(PATH_KEYS)
        if bad:
            raise ConfigError(f"unknown keys {sorted(bad)}", "paths")
        seed = d.get("seed", 0)
        if not isinstance(seed, int) or seed < 0:
            raise ConfigError("must be a non-negative integer", "seed")
        tdcf = default_tdcf_params()
        if "tdcf" in d:
            tdcf = TdcfParams.from_dict({**tdcf.to_dict(), **d["tdcf"]})
        return cls(
            lfcc=_section(LfccConfig.from_dict, d.get("lfcc", {}), "lfcc"),
            model=_section(model_config, d.get("model", {}), "model"),
            train=_section(TrainConfig.from_dict, d.get("train", {}), "train"),
            tdcf=tdcf,
            paths={k: str(v) for k, v in paths.items()},
            seed=seed,
        )

    @classmethod
    def from_json(cls, path) -> "RunConfig":
        try:
            d = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise ConfigError(f"{path} does not exist", "--config") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path} is not valid JSON ({exc})", "--config") from None
        if not isinstance(d, dict):
            raise ConfigError("top level must be an object", "config")
        return cls.from_dict(d)

    def validate_paths(self) -> None:
        for key in INPUT_PATHS:
            if key in self.paths and not Path(self.paths[key]).exists():
                raise ConfigError(f"{self.paths[key]} does not exist", f"paths.{key}")

    def to_dict(self) -> dict:
        return {
            "lfcc": self.lfcc.to_dict(),
            "model": self.model.to_dict(),
            "train": self.train.to_dict(),
            "tdcf": self.tdcf.to_dict(),
            "paths": dict(self.paths),
            "seed": self.seed,
        }


def _section(build, d, name):
    if not isinstance(d, dict):
        raise ConfigError("must be an object", name)
    try:
        return build(d)
    except TypeError as exc:
        raise ConfigError(str(exc), name) from None
