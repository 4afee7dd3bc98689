"""Run configuration: YAML document validated against a published JSON Schema."""
from __future__ import annotations

import copy
import json
from pathlib import Path

import jsonschema
import yaml

from .cf import CfHyperparams
from .errors import ConfigInvalid, ConfigNotFound
from .rnned import SequenceSpec
from .sdae import ComponentSpec
from .trainer import TrainConfig

ACT = {"enum": ["sigmoid", "relu", "tanh", "identity"]}
POS_INT = {"type": "integer", "minimum": 1}
NONNEG = {"type": "number", "minimum": 0}

COMPONENT_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["name", "kind", "source"],
    "properties": {
        "name": {"type": "string", "minLength": 1},
        "kind": {"enum": ["static", "sequential"]},
        "source": {"enum": ["ratings", "demographics", "content", "side", "sequences",
                            "embedding", "sequence_file"]},
        "path": {"type": "string"},
        "layers": {"type": "integer", "minimum": 2, "multipleOf": 2},
        "mid_dim": POS_INT,
        "width_increment": {"type": "integer", "minimum": 0},
        "activation": ACT,
        "output_activation": ACT,
        "corruption": {"type": "number", "minimum": 0, "maximum": 1},
        "steps": POS_INT,
        "embedding_dim": POS_INT,
        "hidden_dim": POS_INT,
    },
}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "DHA run configuration",
    "type": "object",
    "additionalProperties": False,
    "required": ["data", "model", "components"],
    "properties": {
        "data": {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["movielens100k", "synthetic", "files"]},
                "path": {"type": "string"},
                "ratings": {"type": "string"},
                "binarize": {"type": "boolean"},
                "synthetic": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "m": POS_INT, "n": POS_INT, "d_true": POS_INT,
                        "noise": NONNEG, "side_corr": {"type": "number", "minimum": 0, "maximum": 1},
                        "side_dim": POS_INT, "positives": POS_INT, "vocab_size": POS_INT,
                        "steps": POS_INT, "seed": {"type": "integer", "minimum": 0},
                    },
                },
            },
        },
        "split": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "ratio": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "seed": {"type": "integer", "minimum": 0},
            },
        },
        "model": {
            "type": "object",
            "additionalProperties": False,
            "required": ["d"],
            "properties": {
                "d": POS_INT,
                "fusion_layers": {"enum": [1, 2]},
                "fusion_activation": ACT,
                "confidence": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {"mode": {"enum": ["implicit", "explicit"]}, "alpha": NONNEG},
                },
                "lambda": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {k: NONNEG for k in ("f", "u", "v", "m", "n", "w")},
                },
            },
        },
        "components": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "user": {"type": "array", "items": COMPONENT_SCHEMA},
                "item": {"type": "array", "items": COMPONENT_SCHEMA},
            },
        },
        "train": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "alternations": POS_INT,
                "epochs": {"type": "integer", "minimum": 0},
                "pretrain_epochs": {"type": "integer", "minimum": 0},
                "pretrain_lr": NONNEG,
                "lr": {"type": "number", "exclusiveMinimum": 0},
                "batch_user": POS_INT,
                "batch_item": POS_INT,
                "seed": {"type": "integer", "minimum": 0},
            },
        },
        "eval": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "m": {"type": "array", "items": POS_INT, "minItems": 1},
                "relevance_threshold": {"type": ["number", "null"]},
            },
        },
        "grid": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "lr": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}},
                "lambda_f": {"type": "array", "items": NONNEG},
                "lambda_w": {"type": "array", "items": NONNEG},
                "alpha": {"type": "array", "items": NONNEG},
                "corruption": {"type": "array", "items": {"type": "number", "minimum": 0, "maximum": 1}},
                "activation": {"type": "array", "items": ACT},
                "fusion_layers": {"type": "array", "items": {"enum": [1, 2]}},
            },
        },
    },
}

DEFAULTS = {
    "data": {"binarize": True},
    "split": {"ratio": 0.2, "seed": 0},
    "model": {"fusion_layers": 1, "fusion_activation": "sigmoid",
              "confidence": {"mode": "implicit", "alpha": 40.0},
              "lambda": {"f": 0.01, "u": 1.0, "v": 1.0, "m": 1.0, "n": 1.0, "w": 0.01}},
    "components": {"user": [], "item": []},
    "train": {"alternations": 5, "epochs": 5, "pretrain_epochs": 5, "pretrain_lr": 0.1,
              "lr": 0.01, "batch_user": 50, "batch_item": 50, "seed": 0},
    "eval": {"m": [10, 50, 100], "relevance_threshold": None},
}

COMPONENT_DEFAULTS = {
    "static": {"layers": 2, "mid_dim": 50, "width_increment": 50, "activation": "sigmoid",
               "output_activation": "sigmoid", "corruption": 0.1},
    "sequential": {"steps": 5, "embedding_dim": 16, "hidden_dim": 50},
}


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        out[k] = _merge(out[k], v) if isinstance(v, dict) and isinstance(out.get(k), dict) else v
    return out


def validate(doc: dict) -> dict:
    """Schema-check a raw document and return it with defaults filled in."""
    try:
        jsonschema.validate(doc, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigInvalid(f"config invalid at {where}: {exc.message}") from None
    resolved = _merge(DEFAULTS, doc)
    for side in ("user", "item"):
        resolved["components"][side] = [
            _merge(COMPONENT_DEFAULTS[c["kind"]], c) for c in resolved["components"].get(side, [])
        ]
        for c in resolved["components"][side]:
            if c["source"] in ("embedding", "sequence_file") and "path" not in c:
                raise ConfigInvalid(f"component {c['name']!r}: source {c['source']!r} needs a path")
    kind = resolved["data"]["kind"]
    if kind == "movielens100k" and "path" not in resolved["data"]:
        raise ConfigInvalid("data.path is required for movielens100k")
    if kind == "files" and "ratings" not in resolved["data"]:
        raise ConfigInvalid("data.ratings is required for kind 'files'")
    lam = resolved["model"]["lambda"]
    if lam["f"] + lam["u"] <= 0 or lam["f"] + lam["v"] <= 0:
        raise ConfigInvalid("need lambda.f + lambda.u > 0 and lambda.f + lambda.v > 0")
    return resolved


def load(path, base_dir: Path | None = None) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ConfigNotFound(f"config file not found: {path}")
    try:
        doc = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigInvalid(f"{path}: not valid YAML: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigInvalid(f"{path}: top level must be a mapping")
    resolved = validate(doc)
    resolved["_base_dir"] = str((base_dir or path.parent).resolve())
    return resolved


def resolve_path(cfg: dict, p: str) -> Path:
    q = Path(p)
    return q if q.is_absolute() else Path(cfg.get("_base_dir", ".")) / q


def hyperparams(cfg: dict) -> CfHyperparams:
    lam, conf = cfg["model"]["lambda"], cfg["model"]["confidence"]
    return CfHyperparams(d=cfg["model"]["d"], lambda_f=lam["f"], lambda_u=lam["u"], lambda_v=lam["v"],
                         lambda_m=lam["m"], lambda_n=lam["n"], lambda_w=lam["w"],
                         alpha=conf["alpha"], mode=conf["mode"])


def component_specs(cfg: dict, input_dims: dict[str, list[int]]):
    """Build specs for both sides. ``input_dims[side][k]`` is the input width
    (static) or vocabulary size (sequential) of the k-th listed component."""
    out, cid = {}, 1
    for side in ("user", "item"):
        specs = []
        for k, c in enumerate(cfg["components"][side]):
            if c["kind"] == "static":
                specs.append(ComponentSpec(cid, input_dims[side][k], c["layers"], c["mid_dim"],
                                           c["width_increment"], c["activation"],
                                           c["output_activation"], c["corruption"], c["name"]))
            else:
                specs.append(SequenceSpec(cid, input_dims[side][k], c["embedding_dim"],
                                          c["hidden_dim"], c["steps"], c["name"]))
            cid += 1
        out[side] = specs
    return out


def train_config(cfg: dict, specs: dict[str, list]) -> TrainConfig:
    t = cfg["train"]
    return TrainConfig(
        hp=hyperparams(cfg), user_components=specs["user"], item_components=specs["item"],
        alternations=t["alternations"], epochs=t["epochs"], pretrain_epochs=t["pretrain_epochs"],
        pretrain_lr=t["pretrain_lr"], lr=t["lr"], batch_user=t["batch_user"],
        batch_item=t["batch_item"], seed=t["seed"], fusion_layers=cfg["model"]["fusion_layers"],
        fusion_activation=cfg["model"]["fusion_activation"],
    )


def public(cfg: dict) -> dict:
    """The resolved config without private bookkeeping keys."""
    return {k: v for k, v in cfg.items() if not k.startswith("_")}


def schema_json() -> str:
    return json.dumps(SCHEMA, indent=2)
