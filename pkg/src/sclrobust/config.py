"""Strict JSON run configuration.

Every section is optional except ``mode`` and ``dataset``; missing values
take the defaults below, unknown keys are rejected, and every error names the
offending field path (``loss.tau``, ``train.batch_size`` ...).
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

from .attacks import AttackConfig
from .data import (
    ArrayDataset,
    CIFAR100_CLASSES,
    load_cifar100,
    make_datasets,
    synthesize_blobs,
)
from .losses import LossConfig
from .model import ModelConfig
from .training import AdamConfig, Mode, RunMode, TrainConfig


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass(frozen=True)
class BlobsData:
    num_classes: int = 3
    per_class: int = 200
    test_per_class: int = 50
    image_size: int = 8
    noise_sigma: float = 0.05
    seed: int = 0
    kind: str = "blobs"


@dataclass(frozen=True)
class Cifar100Data:
    path: str = ""
    official_sizes: bool = False
    kind: str = "cifar100"


@dataclass(frozen=True)
class TrainSection:
    epochs: int = 10
    batch_size: int = 128
    seed: int = 0
    max_steps: int | None = None


@dataclass(frozen=True)
class RunConfig:
    mode: Mode
    dataset: BlobsData | Cifar100Data
    augment: bool = False
    model: ModelConfig = field(default_factory=ModelConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    optimizer: AdamConfig = field(default_factory=AdamConfig)
    train: TrainSection = field(default_factory=TrainSection)
    attack: AttackConfig = field(default_factory=AttackConfig)

    def train_config(self) -> TrainConfig:
        return TrainConfig(RunMode(self.mode, self.augment), self.train.epochs, self.train.batch_size,
                           self.loss, self.optimizer, self.train.seed, self.train.max_steps)

    def to_dict(self) -> dict:
        ds = self.dataset
        if isinstance(ds, BlobsData):
            dataset = {"kind": "blobs", "num_classes": ds.num_classes, "per_class": ds.per_class,
                       "test_per_class": ds.test_per_class, "image_size": ds.image_size,
                       "noise_sigma": ds.noise_sigma, "seed": ds.seed}
        else:
            dataset = {"kind": "cifar100", "path": ds.path, "official_sizes": ds.official_sizes}
        return {
            "mode": self.mode.value,
            "augment": self.augment,
            "dataset": dataset,
            "model": self.model.to_dict(),
            "loss": {k: getattr(self.loss, k) for k in LOSS_KEYS},
            "optimizer": {k: getattr(self.optimizer, k) for k in OPTIMIZER_KEYS},
            "train": {k: getattr(self.train, k) for k in TRAIN_KEYS},
            "attack": {"epsilons": list(self.attack.epsilons), "clamp": self.attack.clamp_to_domain},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


# key -> accepted kind; "float" admits ints, "int" rejects bools and floats
LOSS_KEYS = {"tau": "float", "m_p": "float", "m_n": "float", "alpha": "float", "beta": "float"}
OPTIMIZER_KEYS = {"lr": "float", "beta1": "float", "beta2": "float", "eps": "float"}
TRAIN_KEYS = {"epochs": "int", "batch_size": "int", "seed": "int", "max_steps": "int?"}
ATTACK_KEYS = {"epsilons": "floats", "clamp": "bool"}
MODEL_KEYS = {"input_channels": "int", "input_size": "int", "channel_widths": "ints", "use_residual": "bool",
              "feature_dim": "int", "projection_hidden": "int", "projection_out": "int", "num_classes": "int"}
BLOBS_KEYS = {"kind": "str", "num_classes": "int", "per_class": "int", "test_per_class": "int",
              "image_size": "int", "noise_sigma": "float", "seed": "int"}
CIFAR_KEYS = {"kind": "str", "path": "str", "official_sizes": "bool"}
TOP_KEYS = {"mode", "augment", "dataset", "model", "loss", "optimizer", "train", "attack"}


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _check_value(path: str, kind: str, v):
    if kind == "int?" and v is None:
        return None
    ok = {
        "float": lambda: _is_int(v) or isinstance(v, float),
        "int": lambda: _is_int(v),
        "int?": lambda: _is_int(v),
        "bool": lambda: isinstance(v, bool),
        "str": lambda: isinstance(v, str),
        "ints": lambda: isinstance(v, list) and all(_is_int(x) for x in v),
        "floats": lambda: isinstance(v, list) and all(_is_int(x) or isinstance(x, float) for x in v),
    }[kind]()
    if not ok:
        raise ConfigError(path, f"expected {kind.rstrip('?')}, got {json.dumps(v)}")
    if kind == "float":
        return float(v)
    if kind in ("ints", "floats"):
        return tuple(float(x) if kind == "floats" else x for x in v)
    return v


def _section(raw, path: str, schema: dict[str, str]) -> dict:
    if raw is None:
        return {}
    if not isinstance(raw, dict):
        raise ConfigError(path, f"expected an object, got {json.dumps(raw)}")
    for key in raw:
        if key not in schema:
            raise ConfigError(f"{path}.{key}", f"unknown key (allowed: {', '.join(sorted(schema))})")
    return {k: _check_value(f"{path}.{k}", schema[k], v) for k, v in raw.items()}


def _build(path: str, factory, values: dict):
    try:
        return factory(**values)
    except ValueError as exc:
        message = str(exc)
        head = message.split(":", 1)[0].split()[0] if message else ""
        if head in values or head in getattr(factory, "__dataclass_fields__", {}):
            raise ConfigError(f"{path}.{head}", message.split(":", 1)[-1].strip()) from None
        raise ConfigError(path, message) from None


def _parse_dataset(raw) -> BlobsData | Cifar100Data:
    if not isinstance(raw, dict):
        raise ConfigError("dataset", "expected an object with a 'kind'")
    kind = raw.get("kind")
    if kind == "blobs":
        ds = BlobsData(**_section(raw, "dataset", BLOBS_KEYS))
        for name in ("num_classes", "per_class", "image_size"):
            if getattr(ds, name) < (2 if name == "num_classes" else 1):
                raise ConfigError(f"dataset.{name}", f"too small: {getattr(ds, name)}")
        if ds.test_per_class < 1:
            raise ConfigError("dataset.test_per_class", "must be >= 1")
        if not ds.noise_sigma >= 0:
            raise ConfigError("dataset.noise_sigma", "must be >= 0")
        return ds
    if kind == "cifar100":
        values = _section(raw, "dataset", CIFAR_KEYS)
        if not values.get("path"):
            raise ConfigError("dataset.path", "required for cifar100")
        return Cifar100Data(**values)
    raise ConfigError("dataset.kind", f"expected 'blobs' or 'cifar100', got {json.dumps(kind)}")


def _dataset_shape(ds) -> dict:
    if isinstance(ds, BlobsData):
        return {"input_channels": 3, "input_size": ds.image_size, "num_classes": ds.num_classes}
    return {"input_channels": 3, "input_size": 32, "num_classes": CIFAR100_CLASSES}


def _parse_model(raw, ds) -> ModelConfig:
    values = _section(raw, "model", MODEL_KEYS)
    implied = _dataset_shape(ds)
    for key, want in implied.items():
        if key in values and values[key] != want:
            raise ConfigError(f"model.{key}", f"{values[key]} conflicts with the dataset ({want})")
    values = {**implied, **values}
    widths = values.get("channel_widths", ModelConfig.channel_widths)
    if not widths:
        raise ConfigError("model.channel_widths", "must not be empty")
    values.setdefault("feature_dim", widths[-1])
    values.setdefault("projection_hidden", values["feature_dim"])
    return _build("model", ModelConfig, values)


def parse_dict(raw) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "expected a JSON object")
    for key in raw:
        if key not in TOP_KEYS:
            raise ConfigError(key, f"unknown key (allowed: {', '.join(sorted(TOP_KEYS))})")
    for key in ("mode", "dataset"):
        if key not in raw:
            raise ConfigError(key, "required")
    try:
        mode = Mode(raw["mode"])
    except ValueError:
        raise ConfigError("mode", f"expected one of {[m.value for m in Mode]}, got {json.dumps(raw['mode'])}") from None
    augment = _check_value("augment", "bool", raw.get("augment", False))
    dataset = _parse_dataset(raw["dataset"])
    model = _parse_model(raw.get("model"), dataset)

    loss_values = _section(raw.get("loss"), "loss", LOSS_KEYS)
    loss = _build("loss", LossConfig, loss_values)

    optimizer = AdamConfig(**_section(raw.get("optimizer"), "optimizer", OPTIMIZER_KEYS))
    if not optimizer.lr > 0:
        raise ConfigError("optimizer.lr", "must be > 0")
    if not (0 <= optimizer.beta1 < 1 and 0 <= optimizer.beta2 < 1):
        raise ConfigError("optimizer.beta1" if not 0 <= optimizer.beta1 < 1 else "optimizer.beta2", "must lie in [0, 1)")
    if not optimizer.eps > 0:
        raise ConfigError("optimizer.eps", "must be > 0")

    train = TrainSection(**_section(raw.get("train"), "train", TRAIN_KEYS))
    if train.epochs < 1:
        raise ConfigError("train.epochs", "must be >= 1")
    if train.batch_size < 2:
        raise ConfigError("train.batch_size", "must be >= 2 (contrastive losses need pairs)")
    if train.max_steps is not None and train.max_steps < 1:
        raise ConfigError("train.max_steps", "must be >= 1 or null")

    attack_values = _section(raw.get("attack"), "attack", ATTACK_KEYS)
    renamed = {}
    if "epsilons" in attack_values:
        renamed["epsilons"] = attack_values["epsilons"]
    if "clamp" in attack_values:
        renamed["clamp_to_domain"] = attack_values["clamp"]
    try:
        attack = AttackConfig(**renamed)
    except ValueError as exc:
        raise ConfigError("attack.epsilons", str(exc)) from None

    return RunConfig(mode, dataset, augment, model, loss, optimizer, train, attack)


def parse_config(text: str) -> RunConfig:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("<root>", f"invalid JSON: {exc}") from None
    return parse_dict(raw)


def load_config(path: str | os.PathLike) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def load_datasets(cfg: RunConfig) -> tuple[ArrayDataset, ArrayDataset]:
    """(train, test) splits; normalization statistics come from the train split."""
    ds = cfg.dataset
    if isinstance(ds, BlobsData):
        train = synthesize_blobs(ds.num_classes, ds.per_class, ds.image_size, ds.noise_sigma, ds.seed, stream=0)
        test = synthesize_blobs(ds.num_classes, ds.test_per_class, ds.image_size, ds.noise_sigma, ds.seed, stream=1)
        return make_datasets("blobs", ds.num_classes, train, test)
    sizes = {"train": 50_000, "test": 10_000} if ds.official_sizes else {}
    train = load_cifar100(os.path.join(ds.path, "train.bin"), "train", sizes.get("train"))
    test = load_cifar100(os.path.join(ds.path, "test.bin"), "test", sizes.get("test"))
    return make_datasets("cifar100", CIFAR100_CLASSES, train, test)
