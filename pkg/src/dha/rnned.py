"""LSTM encoder-decoder for token sequences.

The encoder reads a left-padded sequence and maps its final hidden state
through a tanh layer to the context vector. The decoder starts from the
context, sees ``[embed(previous token); context]`` at every step (teacher
forced, step 0 sees the start token) and is scored by next-token NLL with pad
positions masked out.

Gate order inside the stacked LSTM weights is input, forget, output, candidate.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, TokenOutOfVocab
from .numkernel import apply_activation, glorot_uniform

PAD = 0
START = 1


@dataclass
class SequenceSpec:
    component_id: int
    vocab_size: int
    embedding_dim: int = 16
    hidden_dim: int = 16
    steps: int = 5
    name: str = ""
    kind: str = field(default="sequential", init=False)

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("sequence length T must be >= 1")
        if min(self.vocab_size, self.embedding_dim, self.hidden_dim) < 1:
            raise ValueError("sequence dimensions must be >= 1")

    @property
    def latent_dim(self) -> int:
        return self.hidden_dim


@dataclass
class LstmParams:
    emb: np.ndarray      # (vocab, E); row PAD stays zero
    enc_W: np.ndarray    # (4H, E + H)
    enc_b: np.ndarray
    ctx_W: np.ndarray    # (H, H)
    ctx_b: np.ndarray
    dec_W: np.ndarray    # (4H, E + H + H)
    dec_b: np.ndarray
    out_W: np.ndarray    # (vocab, H)
    out_b: np.ndarray

    def named_tensors(self) -> dict[str, np.ndarray]:
        return dict(vars(self))

    def copy(self) -> LstmParams:
        return LstmParams(**{k: v.copy() for k, v in vars(self).items()})


def init_params(spec: SequenceSpec, rng: np.random.Generator) -> LstmParams:
    V, E, H = spec.vocab_size, spec.embedding_dim, spec.hidden_dim
    emb = rng.normal(0.0, 0.1, size=(V, E))
    emb[PAD] = 0.0
    return LstmParams(
        emb=emb,
        enc_W=glorot_uniform(rng, 4 * H, E + H), enc_b=np.zeros(4 * H),
        ctx_W=glorot_uniform(rng, H, H), ctx_b=np.zeros(H),
        dec_W=glorot_uniform(rng, 4 * H, E + 2 * H), dec_b=np.zeros(4 * H),
        out_W=glorot_uniform(rng, V, H), out_b=np.zeros(V),
    )


def zeros_like(spec: SequenceSpec) -> LstmParams:
    V, E, H = spec.vocab_size, spec.embedding_dim, spec.hidden_dim
    return LstmParams(
        np.zeros((V, E)), np.zeros((4 * H, E + H)), np.zeros(4 * H),
        np.zeros((H, H)), np.zeros(H), np.zeros((4 * H, E + 2 * H)), np.zeros(4 * H),
        np.zeros((V, H)), np.zeros(V),
    )


def lstm_step(W: np.ndarray, b: np.ndarray, x: np.ndarray, h_prev: np.ndarray,
              c_prev: np.ndarray):
    """One LSTM cell update. Returns ``(h, c, cache)``."""
    H = h_prev.shape[-1]
    if W.shape != (4 * H, x.shape[-1] + H) or b.shape != (4 * H,):
        raise DimensionMismatch(f"LSTM weights {W.shape} do not fit input {x.shape[-1]} / hidden {H}")
    xh = np.concatenate([x, h_prev], axis=-1)
    z = xh @ W.T + b
    gates = apply_activation("sigmoid", z[..., :3 * H])
    i, f, o = gates[..., :H], gates[..., H:2 * H], gates[..., 2 * H:]
    g = np.tanh(z[..., 3 * H:])
    c = f * c_prev + i * g
    tc = np.tanh(c)
    h = o * tc
    return h, c, (xh, i, f, o, g, c_prev, tc)


def lstm_step_backward(W: np.ndarray, dh: np.ndarray, dc: np.ndarray, cache):
    """Returns ``(dx, dh_prev, dc_prev, dW, db)`` for one cell."""
    xh, i, f, o, g, c_prev, tc = cache
    H = dh.shape[-1]
    do = dh * tc
    dct = dc + dh * o * (1.0 - tc * tc)
    dz = np.concatenate([
        dct * g * i * (1.0 - i),
        dct * c_prev * f * (1.0 - f),
        do * o * (1.0 - o),
        dct * i * (1.0 - g * g),
    ], axis=-1)
    dxh = dz @ W
    return dxh[..., :-H], dxh[..., -H:], dct * f, dz.T @ xh, dz.sum(axis=0)


def _check_tokens(spec: SequenceSpec, seq) -> np.ndarray:
    seq = np.asarray(seq)
    if seq.ndim == 1:
        seq = seq[None, :]
    if seq.shape[1] != spec.steps:
        raise DimensionMismatch(f"sequence length {seq.shape[1]} != T={spec.steps}")
    if seq.size and (seq.min() < 0 or seq.max() >= spec.vocab_size):
        raise TokenOutOfVocab(f"token ids must lie in [0, {spec.vocab_size})")
    return seq.astype(np.int64)


def _encoder(params: LstmParams, spec: SequenceSpec, seq: np.ndarray):
    B, H = seq.shape[0], spec.hidden_dim
    h, c = np.zeros((B, H)), np.zeros((B, H))
    caches = []
    for t in range(spec.steps):
        h, c, cache = lstm_step(params.enc_W, params.enc_b, params.emb[seq[:, t]], h, c)
        caches.append(cache)
    ctx = np.tanh(h @ params.ctx_W.T + params.ctx_b)
    return h, ctx, caches


def encode_sequence(params: LstmParams, spec: SequenceSpec, seq):
    """Return ``(h_T, context)``; 1-D input gives 1-D outputs."""
    single = np.ndim(seq) == 1
    tok = _check_tokens(spec, seq)
    h_T, ctx, _ = _encoder(params, spec, tok)
    return (h_T[0], ctx[0]) if single else (h_T, ctx)


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    return np.exp(_log_softmax(np.asarray(logits, dtype=np.float64)))


def _decoder(params: LstmParams, spec: SequenceSpec, ctx: np.ndarray, targets: np.ndarray):
    B, T = targets.shape
    prev = np.concatenate([np.full((B, 1), START), targets[:, :-1]], axis=1)
    h, c = ctx, np.zeros_like(ctx)
    caches, hs, logps = [], [], []
    for t in range(T):
        x = np.concatenate([params.emb[prev[:, t]], ctx], axis=1)
        h, c, cache = lstm_step(params.dec_W, params.dec_b, x, h, c)
        caches.append(cache)
        hs.append(h)
        logps.append(_log_softmax(h @ params.out_W.T + params.out_b))
    return prev, caches, hs, logps


def _step_weights(targets: np.ndarray) -> np.ndarray:
    mask = (targets != PAD).astype(np.float64)
    n = mask.sum(axis=1, keepdims=True)
    return np.divide(mask, n, out=np.zeros_like(mask), where=n > 0)


def _nll_rows(targets: np.ndarray, logps: list[np.ndarray]) -> np.ndarray:
    w = _step_weights(targets)
    rows = np.arange(targets.shape[0])
    picked = np.stack([lp[rows, targets[:, t]] for t, lp in enumerate(logps)], axis=1)
    return -(w * picked).sum(axis=1)


def decode_nll(params: LstmParams, spec: SequenceSpec, context, targets):
    """Mean next-token negative log-likelihood over non-pad steps (per row for batches)."""
    single = np.ndim(targets) == 1
    tok = _check_tokens(spec, targets)
    ctx = np.atleast_2d(np.asarray(context, dtype=np.float64))
    if ctx.shape != (tok.shape[0], spec.hidden_dim):
        raise DimensionMismatch(f"context shape {ctx.shape} does not match batch/hidden size")
    _, _, _, logps = _decoder(params, spec, ctx, tok)
    nll = _nll_rows(tok, logps)
    return float(nll[0]) if single else nll


@dataclass
class SeqCache:
    seq: np.ndarray
    enc_caches: list
    h_T: np.ndarray
    ctx: np.ndarray
    dec: tuple | None = None


def forward(params: LstmParams, spec: SequenceSpec, seq, decode: bool = True):
    """Encode (and optionally decode against the input itself). Returns ``(context, nll_rows, cache)``."""
    tok = _check_tokens(spec, seq)
    h_T, ctx, enc_caches = _encoder(params, spec, tok)
    cache = SeqCache(tok, enc_caches, h_T, ctx)
    nll = None
    if decode:
        cache.dec = _decoder(params, spec, ctx, tok)
        nll = _nll_rows(tok, cache.dec[3])
    return ctx, nll, cache


def sequence_backward(params: LstmParams, spec: SequenceSpec, cache: SeqCache,
                      grad_ctx: np.ndarray | None = None, recon_scale: float = 0.0,
                      weight_decay: float = 0.0) -> dict[str, np.ndarray]:
    """Gradients of ``recon_scale * sum_rows nll + <grad_ctx, context>
    + (weight_decay / 2) * ||theta||^2`` by backpropagation through time."""
    g = {k: weight_decay * v for k, v in params.named_tensors().items()}
    tok, ctx = cache.seq, cache.ctx
    B, H, E = tok.shape[0], spec.hidden_dim, spec.embedding_dim
    d_ctx = np.zeros_like(ctx)
    if grad_ctx is not None:
        gc = np.asarray(grad_ctx, dtype=np.float64).reshape(ctx.shape)
        d_ctx += gc

    if recon_scale != 0.0:
        if cache.dec is None:
            raise DimensionMismatch("NLL gradient requested from an encoder-only cache")
        prev, dec_caches, hs, logps = cache.dec
        w = recon_scale * _step_weights(tok)
        rows = np.arange(B)
        dh_next, dc_next = np.zeros((B, H)), np.zeros((B, H))
        for t in range(spec.steps - 1, -1, -1):
            dlogits = np.exp(logps[t])
            dlogits[rows, tok[:, t]] -= 1.0
            dlogits *= w[:, t:t + 1]
            g["out_W"] += dlogits.T @ hs[t]
            g["out_b"] += dlogits.sum(axis=0)
            dh = dlogits @ params.out_W + dh_next
            dx, dh_next, dc_next, dW, db = lstm_step_backward(params.dec_W, dh, dc_next, dec_caches[t])
            g["dec_W"] += dW
            g["dec_b"] += db
            np.add.at(g["emb"], prev[:, t], dx[:, :E])
            d_ctx += dx[:, E:]
        d_ctx += dh_next  # decoder initial hidden state is the context

    if np.any(d_ctx):
        dpre = d_ctx * (1.0 - ctx * ctx)
        g["ctx_W"] += dpre.T @ cache.h_T
        g["ctx_b"] += dpre.sum(axis=0)
        dh, dc = dpre @ params.ctx_W, np.zeros((B, H))
        for t in range(spec.steps - 1, -1, -1):
            dx, dh, dc, dW, db = lstm_step_backward(params.enc_W, dh, dc, cache.enc_caches[t])
            g["enc_W"] += dW
            g["enc_b"] += db
            np.add.at(g["emb"], tok[:, t], dx)
    g["emb"][PAD] = 0.0
    return g
