"""Confidence-weighted matrix factorization anchored to learned latents.

Two confidence modes:

* ``implicit``: every (i, j) cell counts. Observed cells carry target ``r`` and
  weight ``1 + alpha * r``, unobserved cells target 0 with weight 1.
* ``explicit``: only observed cells count, each with weight 1.

Row updates use the Gram trick: ``V^T C_i V = V^T V + V_obs^T (C_obs - 1) V_obs``.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp

from .errors import ConfigInvalid, IndexOutOfRange, NegativeRating
from .numkernel import Stream, make_rng, solve_spd


@dataclass(frozen=True)
class CfHyperparams:
    d: int = 50
    lambda_f: float = 0.01
    lambda_u: float = 1.0
    lambda_v: float = 1.0
    lambda_m: float = 1.0
    lambda_n: float = 1.0
    lambda_w: float = 0.01
    alpha: float = 40.0
    mode: str = "implicit"

    def __post_init__(self):
        if self.d < 1:
            raise ConfigInvalid("latent dimension d must be >= 1")
        lams = (self.lambda_f, self.lambda_u, self.lambda_v, self.lambda_m, self.lambda_n, self.lambda_w)
        if min(lams) < 0 or self.alpha < 0:
            raise ConfigInvalid("regularization weights and alpha must be non-negative")
        if self.lambda_f + self.lambda_u <= 0 or self.lambda_f + self.lambda_v <= 0:
            raise ConfigInvalid("need lambda_f + lambda_u > 0 and lambda_f + lambda_v > 0")
        if self.mode not in ("implicit", "explicit"):
            raise ConfigInvalid(f"unknown confidence mode {self.mode!r}")


def confidence(r, alpha: float):
    r = np.asarray(r, dtype=np.float64)
    if np.any(r < 0):
        raise NegativeRating("ratings must be non-negative")
    c = 1.0 + alpha * r
    return float(c) if c.ndim == 0 else c


class InteractionMatrix:
    """Sparse observed (i, j, r) triples with row access for both sides."""

    def __init__(self, m: int, n: int, rows, cols, vals):
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=np.float64)
        if rows.size and (rows.min() < 0 or rows.max() >= m or cols.min() < 0 or cols.max() >= n):
            raise IndexOutOfRange("interaction index outside the matrix")
        if np.any(vals < 0) or not np.all(np.isfinite(vals)):
            raise NegativeRating("ratings must be finite and non-negative")
        if np.unique(rows * n + cols).size != rows.size:
            raise ValueError("duplicate (user, item) interaction")
        self.m, self.n = m, n
        self.by_user = sp.csr_matrix((vals, (rows, cols)), shape=(m, n))
        self.by_user.sort_indices()
        self.by_item = self.by_user.T.tocsr()
        self.by_item.sort_indices()

    @property
    def nnz(self) -> int:
        return self.by_user.nnz

    def transpose(self) -> InteractionMatrix:
        coo = self.by_user.tocoo()
        return InteractionMatrix(self.n, self.m, coo.col, coo.row, coo.data)

    def triples(self):
        coo = self.by_user.tocoo()
        return coo.row.astype(np.int64), coo.col.astype(np.int64), coo.data

    def dense(self) -> np.ndarray:
        return self.by_user.toarray()


def _solve_rows(other: np.ndarray, csr: sp.csr_matrix, anchors: np.ndarray | None,
                lam_anchor: float, hp: CfHyperparams) -> np.ndarray:
    rows, d = csr.shape[0], other.shape[1]
    out = np.empty((rows, d))
    reg = (hp.lambda_f + lam_anchor) * np.eye(d)
    gram = other.T @ other if hp.mode == "implicit" else None
    if anchors is None:
        anchors = np.zeros((rows, d))
    for i in range(rows):
        lo, hi = csr.indptr[i], csr.indptr[i + 1]
        idx, r = csr.indices[lo:hi], csr.data[lo:hi]
        Vo = other[idx]
        c = 1.0 + hp.alpha * r if hp.mode == "implicit" else np.ones_like(r)
        if hp.mode == "implicit":
            A = gram + (Vo.T * (c - 1.0)) @ Vo + reg
        else:
            A = Vo.T @ Vo + reg
        b = Vo.T @ (c * r) + lam_anchor * anchors[i]
        out[i] = solve_spd(A, b)
    return out


def update_user_factors(V: np.ndarray, inter: InteractionMatrix, anchors: np.ndarray | None,
                        hp: CfHyperparams) -> np.ndarray:
    """Closed-form minimizer of the CF terms over every user row with V fixed."""
    return _solve_rows(V, inter.by_user, anchors, hp.lambda_u, hp)


def update_item_factors(U: np.ndarray, inter: InteractionMatrix, anchors: np.ndarray | None,
                        hp: CfHyperparams) -> np.ndarray:
    return _solve_rows(U, inter.by_item, anchors, hp.lambda_v, hp)


def predict(U: np.ndarray, V: np.ndarray, i: int, j: int) -> float:
    if not (0 <= i < U.shape[0] and 0 <= j < V.shape[0]):
        raise IndexOutOfRange(f"({i}, {j}) outside {U.shape[0]} x {V.shape[0]}")
    return float(U[i] @ V[j])


def cf_objective(U: np.ndarray, V: np.ndarray, inter: InteractionMatrix,
                 anchors_u: np.ndarray | None, anchors_v: np.ndarray | None,
                 hp: CfHyperparams) -> float:
    rows, cols, r = inter.triples()
    p = np.einsum("ij,ij->i", U[rows], V[cols])
    if hp.mode == "implicit":
        c = 1.0 + hp.alpha * r
        fit = float(np.sum((U.T @ U) * (V.T @ V))) + float(np.sum(c * (r - p) ** 2 - p * p))
    else:
        fit = float(np.sum((r - p) ** 2))
    total = fit + hp.lambda_f * (float(np.sum(U * U)) + float(np.sum(V * V)))
    if anchors_u is not None:
        total += hp.lambda_u * float(np.sum((U - anchors_u) ** 2))
    else:
        total += hp.lambda_u * float(np.sum(U * U))
    if anchors_v is not None:
        total += hp.lambda_v * float(np.sum((V - anchors_v) ** 2))
    else:
        total += hp.lambda_v * float(np.sum(V * V))
    return total


def init_factors(m: int, n: int, d: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    rng = make_rng(seed, Stream.FACTORS)
    return rng.uniform(-0.05, 0.05, size=(m, d)), rng.uniform(-0.05, 0.05, size=(n, d))


def wmf_baseline(inter: InteractionMatrix, hp: CfHyperparams, sweeps: int, seed: int):
    """Plain weighted MF: same initialization and sweep order as joint training,
    with the anchor terms switched off."""
    hp = replace(hp, lambda_u=0.0, lambda_v=0.0)
    U, V = init_factors(inter.m, inter.n, hp.d, seed)
    zu, zv = np.zeros_like(U), np.zeros_like(V)
    for _ in range(sweeps):
        U = update_user_factors(V, inter, zu, hp)
        V = update_item_factors(U, inter, zv, hp)
    return U, V
