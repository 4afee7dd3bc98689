"""Per-component stacked denoising autoencoder.

Rows are examples: a batch is ``(batch, dim)`` and a layer computes
``f(x @ W.T + b)`` with ``W`` stored ``(out, in)``. Layers ``0 .. L/2-1`` are
the encoder, ``L/2 .. L-1`` the decoder; the final layer uses the output
activation, every other layer the hidden activation.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, EmptyData
from .numkernel import activation_grad, apply_activation, glorot_uniform, mask_corrupt


@dataclass
class ComponentSpec:
    component_id: int
    input_dim: int
    layers: int = 2
    mid_dim: int = 50
    width_increment: int = 0
    activation: str = "sigmoid"
    output_activation: str = "sigmoid"
    corruption: float = 0.1
    name: str = ""
    kind: str = field(default="static", init=False)

    def __post_init__(self):
        if self.layers < 2 or self.layers % 2:
            raise ValueError(f"component {self.component_id}: layer count must be even and >= 2")
        if self.mid_dim < 1 or self.input_dim < 1:
            raise ValueError(f"component {self.component_id}: dimensions must be >= 1")

    @property
    def latent_dim(self) -> int:
        return self.mid_dim

    def widths(self) -> list[int]:
        """Unit counts from the input down to the middle layer.

        Hidden widths grow by ``width_increment`` per layer going outward from
        the middle and are clamped so they never exceed the input width.
        """
        half = self.layers // 2
        hidden = [min(self.mid_dim + k * self.width_increment, self.input_dim)
                  for k in range(half - 1, 0, -1)]
        return [self.input_dim, *hidden, self.mid_dim]

    def layer_shapes(self) -> list[tuple[int, int]]:
        w = self.widths()
        enc = [(w[k + 1], w[k]) for k in range(len(w) - 1)]
        dec = [(o, i) for (i, o) in reversed(enc)]
        return enc + dec

    def layer_activation(self, k: int) -> str:
        return self.output_activation if k == self.layers - 1 else self.activation


@dataclass
class SdaeParams:
    W: list[np.ndarray]
    b: list[np.ndarray]

    def named_tensors(self) -> dict[str, np.ndarray]:
        half = len(self.W) // 2
        out = {}
        for k, (w, b) in enumerate(zip(self.W, self.b)):
            tag = f"enc{k}" if k < half else f"dec{k - half}"
            out[f"{tag}.W"] = w
            out[f"{tag}.b"] = b
        return out

    def copy(self) -> SdaeParams:
        return SdaeParams([w.copy() for w in self.W], [b.copy() for b in self.b])


def init_params(spec: ComponentSpec, rng: np.random.Generator) -> SdaeParams:
    W, b = [], []
    for out_dim, in_dim in spec.layer_shapes():
        W.append(glorot_uniform(rng, out_dim, in_dim))
        b.append(np.zeros(out_dim))
    return SdaeParams(W, b)


def _as_batch(x: np.ndarray, dim: int) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    x2 = x[None, :] if single else x
    if x2.shape[1] != dim:
        raise DimensionMismatch(f"expected width {dim}, got {x2.shape[1]}")
    return x2, single


def forward(params: SdaeParams, spec: ComponentSpec, x: np.ndarray,
            rng: np.random.Generator | None = None, decode: bool = True) -> list[np.ndarray]:
    """Run the network, returning every layer's activations (input first).

    With ``decode=False`` only the encoder half is evaluated.
    """
    x, _ = _as_batch(x, spec.input_dim)
    h = mask_corrupt(x, spec.corruption, rng) if rng is not None else x
    acts = [h]
    stop = spec.layers if decode else spec.layers // 2
    for k in range(stop):
        h = apply_activation(spec.layer_activation(k), h @ params.W[k].T + params.b[k])
        acts.append(h)
    return acts


def encode(params: SdaeParams, spec: ComponentSpec, x: np.ndarray,
           rng: np.random.Generator | None = None) -> list[np.ndarray]:
    """Encoder hiddens ``h_1 .. h_{L/2}``; the last entry is the component latent."""
    single = np.ndim(x) == 1
    acts = forward(params, spec, x, rng, decode=False)[1:]
    return [a[0] for a in acts] if single else acts


def decode(params: SdaeParams, spec: ComponentSpec, mid: np.ndarray) -> np.ndarray:
    h, single = _as_batch(mid, spec.mid_dim)
    for k in range(spec.layers // 2, spec.layers):
        h = apply_activation(spec.layer_activation(k), h @ params.W[k].T + params.b[k])
    return h[0] if single else h


def reconstruction_loss(s: np.ndarray, s_bar: np.ndarray) -> float | np.ndarray:
    """Mean squared error over coordinates; per row for 2-D input."""
    s = np.asarray(s, dtype=np.float64)
    s_bar = np.asarray(s_bar, dtype=np.float64)
    if s.shape != s_bar.shape:
        raise DimensionMismatch(f"shapes {s.shape} and {s_bar.shape} differ")
    err = (s - s_bar) ** 2
    return float(err.mean()) if err.ndim == 1 else err.mean(axis=-1)


def backward(params: SdaeParams, spec: ComponentSpec, acts: list[np.ndarray],
             grad_mid: np.ndarray | None = None, target: np.ndarray | None = None,
             recon_scale: float = 0.0, weight_decay: float = 0.0) -> dict[str, np.ndarray]:
    """Gradients of ``recon_scale * sum_rows mse(target, out) + <grad_mid, h_mid>
    + (weight_decay / 2) * ||theta||^2``.

    ``acts`` comes from :func:`forward`. It may stop at the middle layer when
    only the anchor path is needed, in which case ``target`` must be None.
    """
    half = spec.layers // 2
    full = len(acts) == spec.layers + 1
    if len(acts) not in (half + 1, spec.layers + 1):
        raise DimensionMismatch("activation cache does not match the network depth")
    if target is not None and not full:
        raise DimensionMismatch("reconstruction target needs a decoded cache")
    gW = [weight_decay * w for w in params.W]
    gb = [weight_decay * b for b in params.b]

    top = len(acts) - 1
    d_act = None
    if target is not None and recon_scale != 0.0:
        out = acts[-1]
        t = np.asarray(target, dtype=np.float64).reshape(out.shape)
        d_act = recon_scale * 2.0 * (out - t) / out.shape[1]
    for k in range(top - 1, -1, -1):
        if k + 1 == half and grad_mid is not None:
            gm = np.asarray(grad_mid, dtype=np.float64).reshape(acts[half].shape)
            d_act = gm if d_act is None else d_act + gm
        if d_act is None:
            continue
        dz = d_act * activation_grad(spec.layer_activation(k), acts[k + 1])
        gW[k] = gW[k] + dz.T @ acts[k]
        gb[k] = gb[k] + dz.sum(axis=0)
        d_act = dz @ params.W[k] if k > 0 else None
    return SdaeParams(gW, gb).named_tensors()


def _layer_pair_step(We, be, Wd, bd, act_e, act_d, x_clean, x_in, lr):
    h = apply_activation(act_e, x_in @ We.T + be)
    y = apply_activation(act_d, h @ Wd.T + bd)
    n, dim = x_clean.shape
    dz_d = (2.0 / (n * dim)) * (y - x_clean) * activation_grad(act_d, y)
    dz_e = (dz_d @ Wd) * activation_grad(act_e, h)
    Wd -= lr * (dz_d.T @ h)
    bd -= lr * dz_d.sum(axis=0)
    We -= lr * (dz_e.T @ x_in)
    be -= lr * dz_e.sum(axis=0)


def pretrain_layerwise(spec: ComponentSpec, data: np.ndarray, epochs: int, lr: float,
                       batch: int, rng: np.random.Generator,
                       params: SdaeParams | None = None) -> SdaeParams:
    """Greedy bottom-up pretraining.

    Layer pair ``(k, L-1-k)`` is trained as a one-hidden-layer denoising
    autoencoder on the clean codes of layer ``k``.
    """
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2 or data.shape[0] == 0:
        raise EmptyData(f"component {spec.component_id}: no rows to pretrain on")
    if epochs < 1:
        raise ValueError("epochs must be >= 1")
    _as_batch(data[:1], spec.input_dim)
    params = init_params(spec, rng) if params is None else params.copy()
    L, n = spec.layers, data.shape[0]
    codes = data
    for k in range(L // 2):
        dk = L - 1 - k
        for _ in range(epochs):
            order = rng.permutation(n)
            for start in range(0, n, batch):
                idx = order[start:start + batch]
                clean = codes[idx]
                noisy = mask_corrupt(clean, spec.corruption, rng)
                _layer_pair_step(params.W[k], params.b[k], params.W[dk], params.b[dk],
                                 spec.layer_activation(k), spec.layer_activation(dk),
                                 clean, noisy, lr)
        codes = apply_activation(spec.layer_activation(k), codes @ params.W[k].T + params.b[k])
    return params
