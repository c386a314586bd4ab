"""Experiment configuration: JSON schema, defaults, and dataset construction."""

import hashlib
import json
from dataclasses import dataclass

import jsonschema

from . import data
from .data import ConfigError
from .smoothing import KINDS, TargetStrategy
from .train import TrainConfig

_unit = {"type": "number", "minimum": 0, "maximum": 1}

_BLOBS = {
    "type": "object",
    "additionalProperties": False,
    "required": ["kind"],
    "properties": {
        "kind": {"const": "blobs"},
        "seed": {"type": "integer"},
        "num_classes": {"type": "integer", "minimum": 2},
        "per_class": {"type": "integer", "minimum": 1},
        "dim": {"type": "integer", "minimum": 1},
        "center_spread": {"type": "number", "minimum": 0},
        "noise_sigma": {"type": "number", "minimum": 0},
        "test_fraction": _unit,
    },
}

_DIGITS = {
    "type": "object",
    "additionalProperties": False,
    "required": ["kind"],
    "properties": {
        "kind": {"const": "digits"},
        "test_fraction": _unit,
    },
}

_IDX = {
    "type": "object",
    "additionalProperties": False,
    "required": ["kind", "train_images", "train_labels", "test_images", "test_labels"],
    "properties": {
        "kind": {"const": "idx"},
        "train_images": {"type": "string"},
        "train_labels": {"type": "string"},
        "test_images": {"type": "string"},
        "test_labels": {"type": "string"},
        "num_classes": {"type": "integer", "minimum": 2},
        "train_limit": {"type": "integer", "minimum": 1},
        "test_limit": {"type": "integer", "minimum": 1},
    },
}

_NOISE = {
    "type": "object",
    "additionalProperties": False,
    "required": ["kind"],
    "properties": {
        "kind": {"const": "noise"},
        "seed": {"type": "integer"},
        "n": {"type": "integer", "minimum": 1},
        "low": {"type": "number"},
        "high": {"type": "number"},
    },
}

DATASET_SCHEMA = {"oneOf": [_BLOBS, _DIGITS, _IDX]}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["dataset", "strategy"],
    "properties": {
        "seed": {"type": "integer", "minimum": 0},
        "dataset": DATASET_SCHEMA,
        "model": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "hidden": {"type": "array", "items": {"type": "integer", "minimum": 1}},
                "embed_dim": {"type": "integer", "minimum": 1},
                "num_classes": {"type": "integer", "minimum": 2},
            },
        },
        "strategy": {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind"],
            "properties": {
                "kind": {"enum": list(KINDS)},
                "alpha": _unit,
                "w": _unit,
                "lam": {"oneOf": [_unit, {"type": "null"}]},
            },
        },
        "train": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "epochs": {"type": "integer", "minimum": 0},
                "batch_size": {"type": "integer", "minimum": 1},
                "learning_rate": {"type": "number", "exclusiveMinimum": 0},
                "momentum": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
                "alternate_originals": {"type": ["boolean", "null"]},
                "eval_every": {"type": "integer", "minimum": 1},
                "lr_milestones": {"type": "array", "items": _unit},
                "lr_gamma": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "eval": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "num_bins": {"type": "integer", "minimum": 1},
                "bin_width": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                "min_score": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
                "calibration_fraction": {"type": "number", "exclusiveMinimum": 0,
                                         "exclusiveMaximum": 1},
                "temperature_grid": {"type": "array", "minItems": 1,
                                     "items": {"type": "number", "exclusiveMinimum": 0}},
                "ood": {"oneOf": [_BLOBS, _IDX, _NOISE]},
            },
        },
    },
}


@dataclass
class ExperimentConfig:
    raw: dict

    @property
    def seed(self):
        return self.raw.get("seed", 0)

    @property
    def strategy(self):
        return TargetStrategy.from_dict(self.raw["strategy"])

    @property
    def eval(self):
        return self.raw.get("eval", {})

    def train_config(self):
        t = dict(self.raw.get("train", {}))
        if "lr_milestones" in t:
            t["lr_milestones"] = tuple(t["lr_milestones"])
        model = self.raw.get("model", {})
        return TrainConfig(
            strategy=self.strategy,
            seed=self.seed,
            hidden=tuple(model.get("hidden", (128,))),
            embed_dim=model.get("embed_dim", 128),
            **t,
        )

    def digest(self):
        """Short SHA-256 of the canonical JSON form, stamped into every artifact."""
        canon = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]

    def provenance(self):
        return {"config_sha256": self.digest(), "seed": self.seed}

    def with_strategy(self, **changes):
        raw = json.loads(json.dumps(self.raw))
        raw["strategy"] = {**raw["strategy"], **changes}
        return validate(raw)

    def _split_seed(self):
        return int(data.substream(self.seed, "split").integers(2**31))

    def _raw_splits(self):
        train, test = build_dataset(self.raw["dataset"], self.seed)
        frac = self.eval.get("calibration_fraction", 0.1)
        train, calib = data.split(train, (1 - frac, frac), self._split_seed())
        return train, calib, test

    @property
    def standardizes(self):
        return self.raw["dataset"]["kind"] == "blobs"

    def load_data(self):
        """Return ``(train, calibration, test)`` ready for training.

        The calibration split is carved out of the training data and is used
        for per-epoch validation error and the temperature search.
        """
        train, calib, test = self._raw_splits()
        if self.standardizes:
            train, calib, test = data.standardize(train, calib, test)
        declared = self.raw.get("model", {}).get("num_classes")
        if declared is not None and declared != train.num_classes:
            raise ConfigError(
                f"model declares {declared} classes but the dataset has {train.num_classes}"
            )
        return train, calib, test

    def load_ood(self):
        """Out-of-distribution set from ``eval.ood``, preprocessed like the training data."""
        block = self.eval.get("ood")
        if block is None:
            raise ConfigError("config has no eval.ood block")
        raw_train = self._raw_splits()[0]
        kind = block["kind"]
        if kind == "noise":
            ds = data.uniform_noise(block.get("seed", self.seed + 1), block.get("n", 1000),
                                    raw_train.dim, raw_train.num_classes,
                                    block.get("low", 0.0), block.get("high", 1.0))
        elif kind == "blobs":
            ds = _blobs(block, self.seed + 1, name="ood-blobs")
        else:
            ds = build_dataset(block, self.seed)[1]
        if ds.dim != raw_train.dim:
            raise ConfigError(f"OOD inputs have {ds.dim} features, model expects {raw_train.dim}")
        if self.standardizes:
            ds = data.standardize(raw_train, ds)[1]
        return ds


def _blobs(block, seed, name="blobs"):
    return data.gen_blobs(block.get("seed", seed), block.get("num_classes", 3),
                          block.get("per_class", 1334), block.get("dim", 20),
                          block.get("center_spread", 1.0), block.get("noise_sigma", 1.0), name)


def build_dataset(block, seed):
    """``(train, test)`` for a dataset block; inputs are not yet standardized."""
    kind = block["kind"]
    if kind == "blobs":
        ds = _blobs(block, seed)
        frac = block.get("test_fraction", 0.25)
        return data.split(ds, (1 - frac, frac), data.substream(seed, "holdout").integers(2**31))
    if kind == "digits":
        frac = block.get("test_fraction", 0.2)
        return data.split(data.load_digits(), (1 - frac, frac),
                          data.substream(seed, "holdout").integers(2**31))
    if kind == "idx":
        k = block.get("num_classes", 10)
        train = data.load_idx(block["train_images"], block["train_labels"], k, "idx-train",
                              block.get("train_limit"))
        test = data.load_idx(block["test_images"], block["test_labels"], k, "idx-test",
                             block.get("test_limit"))
        return train, test
    raise ConfigError(f"unknown dataset kind {kind!r}")


def validate(raw):
    try:
        jsonschema.validate(raw, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config error at {where}: {exc.message}") from None
    cfg = ExperimentConfig(raw)
    cfg.train_config()  # dataclass-level checks, e.g. batch size for pairing
    return cfg


def load_config(path):
    try:
        with open(path) as f:
            raw = json.load(f)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: malformed JSON: {exc}") from None
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    return validate(raw)
