"""Central finite-difference checks of the analytic network gradients."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rnned import PAD

STEP = 1e-5
TOLERANCE = 1e-4


@dataclass
class TensorCheck:
    name: str
    checked: int
    rel_error: float

    @property
    def ok(self) -> bool:
        return self.rel_error <= TOLERANCE


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-7) -> float:
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric), floor)
    return float(np.linalg.norm(analytic - numeric) / scale)


def _entries(name: str, arr: np.ndarray, rng: np.random.Generator | None, limit: int | None):
    flat = np.arange(arr.size)
    if name.endswith("emb"):
        # the pad row is a constant, not a parameter
        flat = flat[flat // arr.shape[1] != PAD]
    if limit is not None and flat.size > limit:
        flat = np.sort(rng.choice(flat, size=limit, replace=False))
    return flat


def check_tensors(objective, tensors: dict[str, np.ndarray], analytic: dict[str, np.ndarray],
                  step: float = STEP, limit: int | None = None,
                  rng: np.random.Generator | None = None) -> list[TensorCheck]:
    """Compare ``analytic`` against central differences of ``objective()``.

    ``tensors`` are perturbed in place and restored exactly.
    """
    out = []
    for name, arr in tensors.items():
        idx = _entries(name, arr, rng, limit)
        flat = arr.reshape(-1)
        num = np.empty(idx.size)
        for k, p in enumerate(idx):
            orig = flat[p]
            flat[p] = orig + step
            hi = objective()
            flat[p] = orig - step
            lo = objective()
            flat[p] = orig
            num[k] = (hi - lo) / (2.0 * step)
        ana = analytic[name].reshape(-1)[idx]
        out.append(TensorCheck(name, int(idx.size), relative_error(ana, num)))
    return out
