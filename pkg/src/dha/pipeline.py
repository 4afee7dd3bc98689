"""Glue between a resolved run config, the data loaders and the trainer."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import checkpoint, config, dataio
from .errors import ConfigInvalid, ConfigMismatch
from .evaluation import MetricsReport, evaluate
from .trainer import ModelState, TrainConfig, TrainData, joint_train, state_tensors

log = logging.getLogger(__name__)


@dataclass
class Prepared:
    cfg: dict
    train_cfg: TrainConfig
    dataset: dataio.RatingsDataset
    split: dataio.Split
    data: TrainData
    synth: dataio.SynthData | None = None

    def train_by_user(self):
        return self.split.train.items_by_user()

    def test_by_user(self):
        test = self.split.test
        thr = self.cfg["eval"]["relevance_threshold"]
        if thr is not None:
            test = test.subset(np.flatnonzero(test.ratings >= thr))
        return test.items_by_user()


def _builtin_sources(cfg: dict, split: dataio.Split, synth, ml_tables):
    sources = {"user": {}, "item": {}}
    for side in ("user", "item"):
        sources[side]["ratings"] = dataio.rating_vectors(split.train, side)
    if ml_tables is not None:
        sources["user"]["demographics"] = ml_tables[0]
        sources["item"]["content"] = ml_tables[1]
    if synth is not None:
        sources["user"]["side"] = synth.user_side
        sources["item"]["side"] = synth.item_side
        sources["user"]["sequences"] = synth.sequences
    return sources


def prepare(cfg: dict, split_seed: int | None = None) -> Prepared:
    d = cfg["data"]
    synth = ml_raw = None
    if d["kind"] == "movielens100k":
        dataset, users, items = dataio.read_movielens_100k(config.resolve_path(cfg, d["path"]))
    elif d["kind"] == "synthetic":
        s = dict(d.get("synthetic", {}))
        synth = dataio.synth_generate(
            s.get("m", 200), s.get("n", 100), s.get("d_true", 3), s.get("noise", 0.05),
            s.get("side_corr", 1.0), s.get("seed", cfg["train"]["seed"]),
            side_dim=s.get("side_dim", 20), positives=s.get("positives"),
            vocab_size=s.get("vocab_size", 12), steps=s.get("steps", 5))
        dataset = synth.ratings
    else:
        dataset = dataio.load_ratings(config.resolve_path(cfg, d["ratings"]))

    seed = cfg["split"]["seed"] if split_seed is None else split_seed
    split = dataio.split_holdout(dataset, cfg["split"]["ratio"], seed)

    ml_tables = None
    if d["kind"] == "movielens100k":
        tr = split.train
        fit_u = sorted({tr.user_ids[k] for k in np.unique(tr.users)})
        fit_i = sorted({tr.item_ids[k] for k in np.unique(tr.items)})
        ml_tables = (dataio.vectorize(users, dataio.ML100K_USER_SCHEMA, fit_u, "one-hot"),
                     dataio.vectorize(items, dataio.ML100K_ITEM_SCHEMA, fit_i))
        log.info("ml-100k side dims: users %d, items %d", ml_tables[0].dim, ml_tables[1].dim)
    sources = _builtin_sources(cfg, split, synth, ml_tables)

    inputs = {"user": [], "item": []}
    dims = {"user": [], "item": []}
    for side in ("user", "item"):
        ids = dataset.user_ids if side == "user" else dataset.item_ids
        for c in cfg["components"][side]:
            src = c["source"]
            if src == "embedding":
                table = dataio.load_embeddings(config.resolve_path(cfg, c["path"]))
            elif src == "sequence_file":
                table = dataio.load_sequences(config.resolve_path(cfg, c["path"]), c["steps"])
            elif src in sources[side]:
                table = sources[side][src]
            else:
                raise ConfigInvalid(f"{side} component {c['name']!r}: source {src!r} "
                                    f"is not available for data kind {d['kind']!r}")
            if c["kind"] == "sequential":
                if not isinstance(table, dataio.SequenceDataset):
                    raise ConfigInvalid(f"component {c['name']!r}: sequential kind needs a sequence source")
                if table.steps != c["steps"]:
                    raise ConfigInvalid(f"component {c['name']!r}: steps {c['steps']} != data T {table.steps}")
                inputs[side].append(table.align(ids))
                dims[side].append(table.vocab_size)
            else:
                if isinstance(table, dataio.SequenceDataset):
                    raise ConfigInvalid(f"component {c['name']!r}: static kind needs a vector source")
                inputs[side].append(table.align(ids))
                if table.missing:
                    log.info("%s component %s: %d entities without vectors (zero-filled)",
                             side, c["name"], table.missing)
                dims[side].append(table.dim)

    specs = config.component_specs(cfg, dims)
    tcfg = config.train_config(cfg, specs)
    data = TrainData(
        split.train.matrix(binarize=d["binarize"]),
        {s.component_id: x for s, x in zip(specs["user"], inputs["user"])},
        {s.component_id: x for s, x in zip(specs["item"], inputs["item"])},
    )
    return Prepared(cfg, tcfg, dataset, split, data, synth)


def meta_tensors(prep: Prepared) -> dict[str, np.ndarray]:
    tr = prep.split.train
    return {
        "meta/user_ids": checkpoint.text_tensor("\n".join(prep.dataset.user_ids)),
        "meta/item_ids": checkpoint.text_tensor("\n".join(prep.dataset.item_ids)),
        "meta/train_pairs": np.stack([tr.users, tr.items], axis=1).astype(np.float64),
    }


def checkpoint_for(state: ModelState, prep: Prepared) -> checkpoint.Checkpoint:
    tensors = state_tensors(state)
    tensors.update(meta_tensors(prep))
    return checkpoint.Checkpoint({k: np.array(v) for k, v in tensors.items()},
                                 checkpoint.config_digest(config.public(prep.cfg)))


def train(prep: Prepared, on_alternation=None, track_loss: bool = True):
    return joint_train(prep.train_cfg, prep.data, on_alternation, track_loss)


def evaluate_factors(prep: Prepared, U: np.ndarray, V: np.ndarray, ms=None) -> MetricsReport:
    ms = prep.cfg["eval"]["m"] if ms is None else ms
    return evaluate(U, V, prep.train_by_user(), prep.test_by_user(), ms)


def check_compatible(tensors: dict[str, np.ndarray], prep: Prepared):
    U, V = tensors["U"], tensors["V"]
    d = prep.train_cfg.hp.d
    if U.shape[1] != d:
        raise ConfigMismatch(f"checkpoint trained with d={U.shape[1]}, config says d={d}")
    if U.shape[0] != prep.dataset.n_users or V.shape[0] != prep.dataset.n_items:
        raise ConfigMismatch(f"checkpoint has {U.shape[0]} users x {V.shape[0]} items, "
                             f"data has {prep.dataset.n_users} x {prep.dataset.n_items}")
