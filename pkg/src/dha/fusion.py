"""Fusion of component latents into the joint vector h_{+,0}.

``h0 = f(sum_c latent_c @ W_c.T + b)``, summed in ascending component id so
the result does not depend on dict ordering. An optional second fusion layer
``h1 = f(h0 @ W2.T + b2)`` exists only to reconstruct ``h0`` through a linear
read-back; that auxiliary loss is its sole training signal. CF always
attaches to ``h0``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, MissingComponent
from .numkernel import activation_grad, apply_activation, glorot_uniform


@dataclass
class FusionParams:
    proj: dict[int, np.ndarray]
    bias: np.ndarray
    activation: str = "sigmoid"
    extra: dict[str, np.ndarray] = field(default_factory=dict)  # second layer: L2.W, L2.b, L2.R, L2.rb

    @property
    def dim(self) -> int:
        return self.bias.shape[0]

    @property
    def layers(self) -> int:
        return 2 if self.extra else 1

    def named_tensors(self) -> dict[str, np.ndarray]:
        out = {f"W{cid}": self.proj[cid] for cid in sorted(self.proj)}
        out["b"] = self.bias
        out.update(self.extra)
        return out

    def copy(self) -> FusionParams:
        return FusionParams({k: v.copy() for k, v in self.proj.items()}, self.bias.copy(),
                            self.activation, {k: v.copy() for k, v in self.extra.items()})


def init_params(latent_dims: dict[int, int], dim: int, rng: np.random.Generator,
                activation: str = "sigmoid", layers: int = 1) -> FusionParams:
    if layers not in (1, 2):
        raise ValueError("fusion supports 1 or 2 hidden layers")
    proj = {cid: glorot_uniform(rng, dim, latent_dims[cid]) for cid in sorted(latent_dims)}
    extra = {}
    if layers == 2:
        extra = {"L2.W": glorot_uniform(rng, dim, dim), "L2.b": np.zeros(dim),
                 "L2.R": glorot_uniform(rng, dim, dim), "L2.rb": np.zeros(dim)}
    return FusionParams(proj, np.zeros(dim), activation, extra)


@dataclass
class FusionCache:
    latents: dict[int, np.ndarray]
    h0: np.ndarray
    h1: np.ndarray | None = None
    recon: np.ndarray | None = None


def fuse(params: FusionParams, latents: dict[int, np.ndarray]):
    """Return ``(h0, cache)``. Accepts single vectors or row batches."""
    missing = set(params.proj) - set(latents)
    if missing:
        raise MissingComponent(f"no latent for component(s) {sorted(missing)}")
    extra = set(latents) - set(params.proj)
    if extra:
        raise MissingComponent(f"unregistered component(s) {sorted(extra)}")
    single = np.ndim(next(iter(latents.values()))) == 1
    lat = {cid: np.atleast_2d(np.asarray(v, dtype=np.float64)) for cid, v in latents.items()}
    z = None
    for cid in sorted(params.proj):
        W = params.proj[cid]
        if lat[cid].shape[1] != W.shape[1]:
            raise DimensionMismatch(f"component {cid}: latent width {lat[cid].shape[1]} != {W.shape[1]}")
        term = lat[cid] @ W.T
        z = term if z is None else z + term
    h0 = apply_activation(params.activation, z + params.bias)
    cache = FusionCache(lat, h0)
    if params.extra:
        e = params.extra
        cache.h1 = apply_activation(params.activation, h0 @ e["L2.W"].T + e["L2.b"])
        cache.recon = cache.h1 @ e["L2.R"].T + e["L2.rb"]
    return (h0[0] if single else h0), cache


def fusion_backward(params: FusionParams, cache: FusionCache, upstream: np.ndarray | None,
                    aux_scale: float = 0.0, weight_decay: float = 0.0):
    """Gradients of ``<upstream, h0> + aux_scale * sum_rows mse(h0, recon(h0))
    + (weight_decay / 2) * ||theta||^2``.

    Returns ``(param_grads, latent_grads)``.
    """
    grads = {k: weight_decay * v for k, v in params.named_tensors().items()}
    h0 = cache.h0
    d_h0 = np.zeros_like(h0)
    if upstream is not None:
        if np.size(upstream) != h0.size:
            raise DimensionMismatch(f"upstream gradient has {np.size(upstream)} values, expected {h0.size}")
        d_h0 += np.asarray(upstream, dtype=np.float64).reshape(h0.shape)
    if params.extra and aux_scale != 0.0:
        e = params.extra
        d_rec = aux_scale * 2.0 * (cache.recon - h0) / h0.shape[1]
        grads["L2.R"] = grads["L2.R"] + d_rec.T @ cache.h1
        grads["L2.rb"] = grads["L2.rb"] + d_rec.sum(axis=0)
        dz2 = (d_rec @ e["L2.R"]) * activation_grad(params.activation, cache.h1)
        grads["L2.W"] = grads["L2.W"] + dz2.T @ h0
        grads["L2.b"] = grads["L2.b"] + dz2.sum(axis=0)
        d_h0 += dz2 @ e["L2.W"] - d_rec
    dz = d_h0 * activation_grad(params.activation, h0)
    grads["b"] = grads["b"] + dz.sum(axis=0)
    latent_grads = {}
    for cid in sorted(params.proj):
        grads[f"W{cid}"] = grads[f"W{cid}"] + dz.T @ cache.latents[cid]
        latent_grads[cid] = dz @ params.proj[cid]
    return grads, latent_grads


def aux_loss_rows(cache: FusionCache) -> np.ndarray:
    if cache.recon is None:
        return np.zeros(cache.h0.shape[0])
    return ((cache.recon - cache.h0) ** 2).mean(axis=1)
