import copy
import os
from pathlib import Path

import pytest

from dha import config

ROOT = Path(__file__).resolve().parents[1]

TINY = {
    "data": {"kind": "synthetic",
             "synthetic": {"m": 30, "n": 20, "d_true": 2, "noise": 0.05, "side_corr": 1.0,
                           "side_dim": 6, "positives": 4, "vocab_size": 5, "steps": 3, "seed": 1}},
    "split": {"ratio": 0.2, "seed": 0},
    "model": {"d": 4},
    "components": {
        "user": [{"name": "side", "kind": "static", "source": "side", "mid_dim": 3, "width_increment": 0},
                 {"name": "hist", "kind": "sequential", "source": "sequences", "steps": 3,
                  "embedding_dim": 3, "hidden_dim": 3}],
        "item": [{"name": "side", "kind": "static", "source": "side", "layers": 4, "mid_dim": 3,
                  "width_increment": 1}],
    },
    "train": {"alternations": 2, "epochs": 2, "pretrain_epochs": 1, "batch_user": 8, "batch_item": 8},
    "eval": {"m": [5]},
}


@pytest.fixture
def tiny_doc():
    return copy.deepcopy(TINY)


@pytest.fixture
def tiny_cfg(tiny_doc):
    return config.validate(tiny_doc)


def ml100k_dir():
    return Path(os.environ.get("DHA_ML100K", ROOT / "data" / "ml-100k"))
