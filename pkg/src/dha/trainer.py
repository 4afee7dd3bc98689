"""Joint training: closed-form factor sweeps alternating with SGD on the networks.

Per side (users or items) the networks minimize, over a batch ``B``::

    1/|B| sum_{i in B} [ lam_rec * sum_c loss_c(i) + lam_anchor * ||F_i - h0_i||^2 ]
        + (lam_w / 2) * ||theta||^2

where ``F`` is U or V, ``loss_c`` is MSE for static and NLL for sequential
components, and ``h0`` the first fusion layer. Static reconstructions see
masked inputs; the latent fed to fusion always comes from the clean input.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from . import checkpoint, fusion, rnned, sdae
from .cf import (CfHyperparams, InteractionMatrix, cf_objective, init_factors,
                 update_item_factors, update_user_factors)
from .errors import ConfigInvalid, ConfigMismatch, MonotonicityViolation, NonFiniteLoss
from .numkernel import Stream, make_rng, rng_from_state, rng_state
from .rnned import SequenceSpec
from .sdae import ComponentSpec

log = logging.getLogger(__name__)

ComponentKind = ComponentSpec | SequenceSpec


@dataclass
class TrainConfig:
    hp: CfHyperparams = field(default_factory=CfHyperparams)
    user_components: list = field(default_factory=list)
    item_components: list = field(default_factory=list)
    alternations: int = 5
    epochs: int = 5
    pretrain_epochs: int = 5
    pretrain_lr: float = 0.1
    lr: float = 0.01
    batch_user: int = 50
    batch_item: int = 50
    seed: int = 0
    fusion_layers: int = 1
    fusion_activation: str = "sigmoid"
    monotonic_slack: float = 1e-10

    def __post_init__(self):
        if self.alternations < 1 or self.epochs < 0 or self.pretrain_epochs < 0:
            raise ConfigInvalid("alternations must be >= 1 and epoch counts >= 0")
        if self.lr <= 0:
            raise ConfigInvalid("learning rate must be > 0")
        if min(self.batch_user, self.batch_item) < 1:
            raise ConfigInvalid("batch sizes must be >= 1")
        ids = [c.component_id for c in self.user_components + self.item_components]
        if len(ids) != len(set(ids)):
            raise ConfigInvalid("every component must belong to exactly one side")

    def components(self, side: str) -> list:
        return self.user_components if side == "user" else self.item_components

    def batch(self, side: str) -> int:
        return self.batch_user if side == "user" else self.batch_item


@dataclass
class SideModel:
    specs: dict[int, ComponentKind]
    params: dict[int, object]
    fusion: fusion.FusionParams | None

    def named_tensors(self) -> dict[str, np.ndarray]:
        out = {}
        for cid in sorted(self.params):
            for name, arr in self.params[cid].named_tensors().items():
                out[f"c{cid}/{name}"] = arr
        if self.fusion is not None:
            for name, arr in self.fusion.named_tensors().items():
                out[f"fusion/{name}"] = arr
        return out

    @property
    def empty(self) -> bool:
        return not self.specs


@dataclass
class TrainData:
    """Training interactions plus per-side component inputs in entity-index order."""
    interactions: InteractionMatrix
    user_inputs: dict[int, np.ndarray] = field(default_factory=dict)
    item_inputs: dict[int, np.ndarray] = field(default_factory=dict)

    def inputs(self, side: str) -> dict[int, np.ndarray]:
        return self.user_inputs if side == "user" else self.item_inputs

    def count(self, side: str) -> int:
        return self.interactions.m if side == "user" else self.interactions.n


@dataclass
class ModelState:
    user: SideModel
    item: SideModel
    U: np.ndarray
    V: np.ndarray
    rng: np.random.Generator
    alternation: int = 0

    def side(self, name: str) -> SideModel:
        return self.user if name == "user" else self.item

    def factors(self, name: str) -> np.ndarray:
        return self.U if name == "user" else self.V


@dataclass
class TrainLog:
    epochs: list[tuple[int, int, float]] = field(default_factory=list)
    sweeps: list[tuple[int, str, float, float]] = field(default_factory=list)
    pretrain_loss: float | None = None

    def epoch_lines(self) -> list[str]:
        return [f"{a}\t{e}\t{loss:.12e}" for a, e, loss in self.epochs]

    def sweep_lines(self) -> list[str]:
        return [f"{a}\t{half}\t{before:.17e}\t{after:.17e}" for a, half, before, after in self.sweeps]


# -- construction ---------------------------------------------------------------

def _side_lambdas(hp: CfHyperparams, side: str) -> tuple[float, float]:
    return (hp.lambda_m, hp.lambda_u) if side == "user" else (hp.lambda_n, hp.lambda_v)


def init_side(specs: list, d: int, rng: np.random.Generator, fusion_layers: int = 1,
              fusion_activation: str = "sigmoid") -> SideModel:
    by_id = {s.component_id: s for s in specs}
    params = {}
    for cid in sorted(by_id):
        s = by_id[cid]
        params[cid] = sdae.init_params(s, rng) if s.kind == "static" else rnned.init_params(s, rng)
    fp = None
    if by_id:
        fp = fusion.init_params({cid: s.latent_dim for cid, s in by_id.items()}, d, rng,
                                fusion_activation, fusion_layers)
    return SideModel(by_id, params, fp)


def _pretrain_side(side: SideModel, inputs: dict[int, np.ndarray], cfg: TrainConfig,
                   batch: int, rng: np.random.Generator):
    for cid in sorted(side.specs):
        spec = side.specs[cid]
        if spec.kind == "static":
            side.params[cid] = sdae.pretrain_layerwise(spec, inputs[cid], cfg.pretrain_epochs,
                                                       cfg.pretrain_lr, batch, rng, side.params[cid])
        else:
            seqs = inputs[cid]
            n = seqs.shape[0]
            for _ in range(cfg.pretrain_epochs):
                order = rng.permutation(n)
                for start in range(0, n, batch):
                    idx = order[start:start + batch]
                    _, _, cache = rnned.forward(side.params[cid], spec, seqs[idx])
                    g = rnned.sequence_backward(side.params[cid], spec, cache,
                                                recon_scale=1.0 / len(idx))
                    _apply(side.params[cid].named_tensors(), g, cfg.pretrain_lr)


def _apply(tensors: dict[str, np.ndarray], grads: dict[str, np.ndarray], lr: float):
    for name, arr in tensors.items():
        arr -= lr * grads[name]


def init_state(cfg: TrainConfig, data: TrainData, pretrain: bool = True) -> ModelState:
    init_rng = make_rng(cfg.seed, Stream.INIT)
    user = init_side(cfg.user_components, cfg.hp.d, init_rng, cfg.fusion_layers, cfg.fusion_activation)
    item = init_side(cfg.item_components, cfg.hp.d, init_rng, cfg.fusion_layers, cfg.fusion_activation)
    if pretrain and cfg.pretrain_epochs > 0:
        prng = make_rng(cfg.seed, Stream.PRETRAIN)
        _pretrain_side(user, data.user_inputs, cfg, cfg.batch_user, prng)
        _pretrain_side(item, data.item_inputs, cfg, cfg.batch_item, prng)
    U, V = init_factors(data.interactions.m, data.interactions.n, cfg.hp.d, cfg.seed)
    return ModelState(user, item, U, V, make_rng(cfg.seed, Stream.JOINT))


# -- forward / objective ----------------------------------------------------------

def _forward_side(side: SideModel, inputs: dict[int, np.ndarray], idx: np.ndarray,
                  rng: np.random.Generator | None, decode: bool = True):
    """Forward every component on rows ``idx``; returns latents, caches and recon rows."""
    latents, caches, recon = {}, {}, {}
    for cid in sorted(side.specs):
        spec, params = side.specs[cid], side.params[cid]
        x = inputs[cid][idx]
        if spec.kind == "static":
            clean = sdae.forward(params, spec, x, None, decode=decode and rng is None)
            latents[cid] = clean[spec.layers // 2]
            noisy = clean
            if decode and rng is not None:
                noisy = sdae.forward(params, spec, x, rng, decode=True)
            caches[cid] = (clean, noisy)
            if decode:
                recon[cid] = sdae.reconstruction_loss(x, noisy[-1])
        else:
            ctx, nll, cache = rnned.forward(params, spec, x, decode=decode)
            latents[cid] = ctx
            caches[cid] = cache
            if decode:
                recon[cid] = nll
    return latents, caches, recon


def anchors(side: SideModel, inputs: dict[int, np.ndarray], count: int, chunk: int = 4096):
    """Clean first-fusion-layer vectors h0 for every entity (None if the side has no components)."""
    if side.empty:
        return None
    out = []
    for start in range(0, count, chunk):
        idx = np.arange(start, min(count, start + chunk))
        lat, _, _ = _forward_side(side, inputs, idx, None, decode=False)
        h0, _ = fusion.fuse(side.fusion, lat)
        out.append(h0)
    return np.vstack(out)


def _weight_norm(side: SideModel) -> float:
    return sum(float(np.sum(a * a)) for name, a in side.named_tensors().items())


def side_objective(side: SideModel, inputs: dict[int, np.ndarray], idx: np.ndarray,
                   targets: np.ndarray, lam_rec: float, lam_anchor: float, lam_w: float,
                   rng: np.random.Generator | None = None) -> float:
    """Batch objective whose exact gradient :func:`side_gradients` returns."""
    if side.empty:
        return 0.0
    latents, _, recon = _forward_side(side, inputs, idx, rng)
    h0, fcache = fusion.fuse(side.fusion, latents)
    per_row = lam_rec * sum(recon.values()) + lam_anchor * np.sum((targets - h0) ** 2, axis=1)
    per_row = per_row + lam_rec * fusion.aux_loss_rows(fcache)
    return float(np.mean(per_row)) + 0.5 * lam_w * _weight_norm(side)


def side_gradients(side: SideModel, inputs: dict[int, np.ndarray], idx: np.ndarray,
                   targets: np.ndarray, lam_rec: float, lam_anchor: float, lam_w: float,
                   rng: np.random.Generator | None = None) -> dict[str, np.ndarray]:
    if side.empty:
        return {}
    nb = len(idx)
    latents, caches, _ = _forward_side(side, inputs, idx, rng)
    h0, fcache = fusion.fuse(side.fusion, latents)
    up = (2.0 * lam_anchor / nb) * (h0 - targets)
    fgrads, lat_grads = fusion.fusion_backward(side.fusion, fcache, up, lam_rec / nb, lam_w)
    grads = {f"fusion/{k}": v for k, v in fgrads.items()}
    for cid in sorted(side.specs):
        spec, params = side.specs[cid], side.params[cid]
        if spec.kind == "static":
            clean, noisy = caches[cid]
            x = inputs[cid][idx]
            g = sdae.backward(params, spec, noisy, None, x, lam_rec / nb, lam_w)
            g2 = sdae.backward(params, spec, clean[:spec.layers // 2 + 1], lat_grads[cid])
            g = {k: g[k] + g2[k] for k in g}
        else:
            g = rnned.sequence_backward(params, spec, caches[cid], lat_grads[cid], lam_rec / nb, lam_w)
        grads.update({f"c{cid}/{k}": v for k, v in g.items()})
    return grads


def network_step(state: ModelState, side_name: str, idx: np.ndarray, data: TrainData,
                 cfg: TrainConfig, rng: np.random.Generator | None = None) -> ModelState:
    """One SGD step on every network of one side, anchored to the current factors.

    ``rng`` drives masking noise; pass the state's generator for training.
    """
    side = state.side(side_name)
    if side.empty:
        return state
    lam_rec, lam_anchor = _side_lambdas(cfg.hp, side_name)
    targets = state.factors(side_name)[idx]
    grads = side_gradients(side, data.inputs(side_name), idx, targets, lam_rec, lam_anchor,
                           cfg.hp.lambda_w, rng)
    _apply(side.named_tensors(), grads, cfg.lr)
    return state


def _recon_total(side: SideModel, inputs: dict[int, np.ndarray], count: int) -> float:
    if side.empty:
        return 0.0
    latents, _, recon = _forward_side(side, inputs, np.arange(count), None)
    total = sum(float(np.sum(v)) for v in recon.values())
    if side.fusion.extra:
        _, fcache = fusion.fuse(side.fusion, latents)
        total += float(np.sum(fusion.aux_loss_rows(fcache)))
    return total


def total_loss(state: ModelState, data: TrainData, hp: CfHyperparams, terms: bool = False):
    """Full objective: CF fit and anchors, per-entity reconstruction sums, weight decay."""
    m, n = data.interactions.m, data.interactions.n
    Hu = anchors(state.user, data.user_inputs, m)
    Hv = anchors(state.item, data.item_inputs, n)
    parts = {
        "cf": cf_objective(state.U, state.V, data.interactions, Hu, Hv, hp),
        "user_recon": hp.lambda_m * _recon_total(state.user, data.user_inputs, m),
        "item_recon": hp.lambda_n * _recon_total(state.item, data.item_inputs, n),
        "weights": hp.lambda_w * (_weight_norm(state.user) + _weight_norm(state.item)),
    }
    for name, value in parts.items():
        if not np.isfinite(value):
            raise NonFiniteLoss(f"loss term {name!r} is {value}")
    total = sum(parts.values())
    return (total, parts) if terms else total


# -- training loop ------------------------------------------------------------------

def run_epoch(state: ModelState, side_name: str, data: TrainData, cfg: TrainConfig):
    if state.side(side_name).empty:
        return
    count = data.count(side_name)
    order = state.rng.permutation(count)
    b = cfg.batch(side_name)
    for start in range(0, count, b):
        network_step(state, side_name, order[start:start + b], data, cfg, state.rng)


def factor_sweep(state: ModelState, data: TrainData, hp: CfHyperparams, trace=None):
    """One U half-sweep then one V half-sweep against the current anchors."""
    m, n = data.interactions.m, data.interactions.n
    Hu = anchors(state.user, data.user_inputs, m)
    Hv = anchors(state.item, data.item_inputs, n)
    for name, h in (("user", Hu), ("item", Hv)):
        if h is not None and not np.all(np.isfinite(h)):
            raise NonFiniteLoss(f"{name} anchors are not finite (network training diverged)")
    before = cf_objective(state.U, state.V, data.interactions, Hu, Hv, hp) if trace is not None else None
    state.U = update_user_factors(state.V, data.interactions, _or_zeros(Hu, state.U), hp)
    if trace is not None:
        mid = cf_objective(state.U, state.V, data.interactions, Hu, Hv, hp)
        trace("U", before, mid)
    state.V = update_item_factors(state.U, data.interactions, _or_zeros(Hv, state.V), hp)
    if trace is not None:
        after = cf_objective(state.U, state.V, data.interactions, Hu, Hv, hp)
        trace("V", mid, after)


def _or_zeros(h, like):
    return np.zeros_like(like) if h is None else h


def joint_train(cfg: TrainConfig, data: TrainData, on_alternation=None, track_loss: bool = True,
                state: ModelState | None = None) -> tuple[ModelState, TrainLog]:
    """Pretrain, then alternate {network epochs on both sides; U sweep; V sweep}.

    ``on_alternation(state, log)`` runs after every alternation (checkpointing).
    A half-sweep that raises the CF objective by more than
    ``monotonic_slack * max(1, |objective|)`` raises MonotonicityViolation.
    """
    for side in ("user", "item"):
        missing = {c.component_id for c in cfg.components(side)} - set(data.inputs(side))
        if missing:
            raise ConfigInvalid(f"{side} components {sorted(missing)} have no input data")
    state = init_state(cfg, data) if state is None else state
    tlog = TrainLog()
    if track_loss:
        tlog.pretrain_loss = total_loss(state, data, cfg.hp)
    while state.alternation < cfg.alternations:
        a = state.alternation
        for e in range(cfg.epochs):
            run_epoch(state, "user", data, cfg)
            run_epoch(state, "item", data, cfg)
            if track_loss:
                loss = total_loss(state, data, cfg.hp)
                tlog.epochs.append((a, e, loss))
                log.info("alternation %d epoch %d loss %.6e", a, e, loss)

        def trace(half, before, after, a=a):
            tlog.sweeps.append((a, half, before, after))
            if after > before + cfg.monotonic_slack * max(1.0, abs(before)):
                raise MonotonicityViolation(f"{half} half-sweep increased the CF objective "
                                    f"({before:.17e} -> {after:.17e})")

        factor_sweep(state, data, cfg.hp, trace if track_loss else None)
        state.alternation += 1
        if on_alternation is not None:
            on_alternation(state, tlog)
    return state, tlog


def baseline_config(cfg: TrainConfig) -> TrainConfig:
    """The same schedule with every network-coupling weight switched off."""
    hp = replace(cfg.hp, lambda_u=0.0, lambda_v=0.0, lambda_m=0.0, lambda_n=0.0)
    return replace(cfg, hp=hp)


# -- persistence ----------------------------------------------------------------------

def state_tensors(state: ModelState) -> dict[str, np.ndarray]:
    out = {f"user/{k}": v for k, v in state.user.named_tensors().items()}
    out.update({f"item/{k}": v for k, v in state.item.named_tensors().items()})
    out["U"], out["V"] = state.U, state.V
    out["rng/joint"] = rng_state(state.rng)
    out["meta/alternation"] = np.array([float(state.alternation)])
    return out


def restore_state(tensors: dict[str, np.ndarray], cfg: TrainConfig) -> ModelState:
    """Rebuild a ModelState for ``cfg`` from checkpoint tensors (shapes must agree)."""
    U, V = tensors["U"], tensors["V"]
    if U.shape[1] != cfg.hp.d:
        raise ConfigMismatch(f"checkpoint has d={U.shape[1]}, config has d={cfg.hp.d}")
    scratch = make_rng(0)
    user = init_side(cfg.user_components, cfg.hp.d, scratch, cfg.fusion_layers, cfg.fusion_activation)
    item = init_side(cfg.item_components, cfg.hp.d, scratch, cfg.fusion_layers, cfg.fusion_activation)
    for prefix, side in (("user", user), ("item", item)):
        for name, arr in side.named_tensors().items():
            key = f"{prefix}/{name}"
            if key not in tensors:
                raise ConfigMismatch(f"checkpoint lacks tensor {key}")
            if tensors[key].shape != arr.shape:
                raise ConfigMismatch(f"{key}: checkpoint shape {tensors[key].shape}, config shape {arr.shape}")
            arr[...] = tensors[key]
    state = ModelState(user, item, U.copy(), V.copy(), rng_from_state(tensors["rng/joint"]),
                       int(tensors["meta/alternation"][0]))
    return state


def save_checkpoint(state: ModelState, path, digest: bytes = b"\0" * 32,
                    extra: dict[str, np.ndarray] | None = None) -> None:
    tensors = state_tensors(state)
    tensors.update(extra or {})
    checkpoint.save(checkpoint.Checkpoint(tensors, digest), path)


def load_checkpoint(path, cfg: TrainConfig) -> ModelState:
    return restore_state(checkpoint.load(path).tensors, cfg)
