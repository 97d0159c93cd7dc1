"""Experiment configuration: a flat, versioned key/value JSON document.

The file must be a single JSON object whose keys all come from the schema
below (dotted names group related settings, values stay flat). Unknown keys
are errors, not warnings, and every value is type-checked; silent
misconfiguration is the failure mode this is meant to rule out.

Example (all omitted keys take their defaults):

    {
      "config_version": 1,
      "output_dir": "runs/demo",
      "seeds": [0, 1, 2],
      "dataset.num_classes": 20,
      "pcd.alpha": 1.0,
      "grid.kind": "main"
    }
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .data import SyntheticSpec
from .errors import ConfigError, DistillError
from .losses import PcdConfig
from .trainer import TrainConfig

CONFIG_VERSION = 1

_GRID_KINDS = ("main", "ablation", "s_sweep", "alpha_sweep")
_DATASET_KINDS = ("synthetic", "csv")


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _is_num(v) -> bool:
    return _is_int(v) or isinstance(v, float)


def _int_list(v) -> bool:
    return isinstance(v, list) and len(v) > 0 and all(_is_int(x) for x in v)


def _num_list(v) -> bool:
    return isinstance(v, list) and len(v) > 0 and all(_is_num(x) for x in v)


# key -> (default, checker, description-for-errors)
SCHEMA: dict[str, tuple] = {
    "config_version": (None, _is_int, "integer"),
    "output_dir": ("runs/experiment", lambda v: isinstance(v, str) and v, "non-empty string"),
    "seeds": ([0], _int_list, "non-empty list of integers"),
    "dataset.kind": ("synthetic", lambda v: v in _DATASET_KINDS, f"one of {_DATASET_KINDS}"),
    "dataset.num_classes": (20, _is_int, "integer"),
    "dataset.dim": (32, _is_int, "integer"),
    "dataset.samples_per_class": (100, _is_int, "integer"),
    "dataset.center_scale": (3.0, _is_num, "number"),
    "dataset.noise_std": (1.0, _is_num, "number"),
    "dataset.seed": (7, _is_int, "integer"),
    "dataset.csv_path": ("", lambda v: isinstance(v, str), "string"),
    "teacher.hidden": ([256, 256], _int_list, "non-empty list of integers"),
    "student.hidden": ([32], _int_list, "non-empty list of integers"),
    "teacher_train.epochs": (60, _is_int, "integer"),
    "teacher_train.base_lr": (0.05, _is_num, "number"),
    "teacher_train.momentum": (0.9, _is_num, "number"),
    "teacher_train.weight_decay": (5e-4, _is_num, "number"),
    "teacher_train.lr_decay_epochs": ([30, 45], _int_list, "non-empty list of integers"),
    "teacher_train.lr_decay_factor": (0.1, _is_num, "number"),
    "teacher_train.warmup_epochs": (5, _is_int, "integer"),
    "teacher_train.batch_size": (64, _is_int, "integer"),
    "student_train.epochs": (60, _is_int, "integer"),
    "student_train.base_lr": (0.05, _is_num, "number"),
    "student_train.momentum": (0.9, _is_num, "number"),
    "student_train.weight_decay": (5e-4, _is_num, "number"),
    "student_train.lr_decay_epochs": ([30, 45], _int_list, "non-empty list of integers"),
    "student_train.lr_decay_factor": (0.1, _is_num, "number"),
    "student_train.warmup_epochs": (5, _is_int, "integer"),
    "student_train.batch_size": (64, _is_int, "integer"),
    "pcd.tau": (4.0, _is_num, "number"),
    "pcd.alpha": (1.0, _is_num, "number"),
    "pcd.stages": (3, _is_int, "integer"),
    "pcd.use_ldr": (True, lambda v: isinstance(v, bool), "boolean"),
    "pcd.use_f2cl": (True, lambda v: isinstance(v, bool), "boolean"),
    "pcd.use_c2fl": (True, lambda v: isinstance(v, bool), "boolean"),
    "pcd.use_wdm": (True, lambda v: isinstance(v, bool), "boolean"),
    "pcd.kd_beta": (1.0, _is_num, "number"),
    "grid.kind": ("main", lambda v: v in _GRID_KINDS, f"one of {_GRID_KINDS}"),
    "grid.s_values": ([3, 4, 5], _int_list, "non-empty list of integers"),
    "grid.alpha_values": ([0.1, 0.2, 0.5, 1.0, 2.0, 3.0], _num_list,
                          "non-empty list of numbers"),
}


@dataclass
class ExperimentConfig:
    raw: dict = field(repr=False)
    output_dir: str
    seeds: list[int]
    dataset_kind: str
    synthetic: SyntheticSpec | None
    csv_path: str
    num_classes: int
    teacher_hidden: tuple[int, ...]
    student_hidden: tuple[int, ...]
    teacher_train: TrainConfig
    student_train: TrainConfig
    pcd: PcdConfig
    grid_kind: str
    s_values: list[int]
    alpha_values: list[float]


def resolve(values: dict) -> dict:
    """Validate a raw key/value mapping and fill in defaults."""
    if not isinstance(values, dict):
        raise ConfigError("config must be a JSON object")
    unknown = sorted(set(values) - set(SCHEMA))
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    if "config_version" not in values:
        raise ConfigError("config_version is required")
    if values["config_version"] != CONFIG_VERSION:
        raise ConfigError(
            f"config_version {values['config_version']!r} unsupported; "
            f"expected {CONFIG_VERSION}"
        )
    resolved = {}
    for key, (default, check, desc) in SCHEMA.items():
        v = values.get(key, default)
        if not check(v):
            raise ConfigError(f"{key}: expected {desc}, got {v!r}")
        resolved[key] = v
    return resolved


def _train_config(resolved: dict, prefix: str) -> TrainConfig:
    try:
        return TrainConfig(
            epochs=resolved[f"{prefix}.epochs"],
            base_lr=float(resolved[f"{prefix}.base_lr"]),
            momentum=float(resolved[f"{prefix}.momentum"]),
            weight_decay=float(resolved[f"{prefix}.weight_decay"]),
            lr_decay_epochs=tuple(resolved[f"{prefix}.lr_decay_epochs"]),
            lr_decay_factor=float(resolved[f"{prefix}.lr_decay_factor"]),
            warmup_epochs=resolved[f"{prefix}.warmup_epochs"],
            batch_size=resolved[f"{prefix}.batch_size"],
        )
    except DistillError as exc:
        raise ConfigError(f"{prefix}: {exc}") from exc


def from_mapping(values: dict) -> ExperimentConfig:
    resolved = resolve(values)
    kind = resolved["dataset.kind"]
    synthetic = None
    if kind == "synthetic":
        try:
            synthetic = SyntheticSpec(
                num_classes=resolved["dataset.num_classes"],
                dim=resolved["dataset.dim"],
                samples_per_class=resolved["dataset.samples_per_class"],
                class_center_scale=float(resolved["dataset.center_scale"]),
                noise_std=float(resolved["dataset.noise_std"]),
                seed=resolved["dataset.seed"],
            )
        except DistillError as exc:
            raise ConfigError(f"dataset: {exc}") from exc
    elif not resolved["dataset.csv_path"]:
        raise ConfigError("dataset.csv_path is required when dataset.kind is 'csv'")
    try:
        pcd = PcdConfig(
            tau=float(resolved["pcd.tau"]),
            alpha=float(resolved["pcd.alpha"]),
            stages=resolved["pcd.stages"],
            use_ldr=resolved["pcd.use_ldr"],
            use_f2cl=resolved["pcd.use_f2cl"],
            use_c2fl=resolved["pcd.use_c2fl"],
            use_wdm=resolved["pcd.use_wdm"],
            kd_beta=float(resolved["pcd.kd_beta"]),
        )
    except DistillError as exc:
        raise ConfigError(f"pcd: {exc}") from exc
    if resolved["pcd.stages"] > resolved["dataset.num_classes"]:
        raise ConfigError(
            f"pcd.stages ({resolved['pcd.stages']}) must not exceed "
            f"dataset.num_classes ({resolved['dataset.num_classes']})"
        )
    return ExperimentConfig(
        raw=resolved,
        output_dir=resolved["output_dir"],
        seeds=list(resolved["seeds"]),
        dataset_kind=kind,
        synthetic=synthetic,
        csv_path=resolved["dataset.csv_path"],
        num_classes=resolved["dataset.num_classes"],
        teacher_hidden=tuple(resolved["teacher.hidden"]),
        student_hidden=tuple(resolved["student.hidden"]),
        teacher_train=_train_config(resolved, "teacher_train"),
        student_train=_train_config(resolved, "student_train"),
        pcd=pcd,
        grid_kind=resolved["grid.kind"],
        s_values=list(resolved["grid.s_values"]),
        alpha_values=[float(v) for v in resolved["grid.alpha_values"]],
    )


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        values = json.loads(path.read_text(encoding="utf-8"))
    except ValueError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
    return from_mapping(values)
