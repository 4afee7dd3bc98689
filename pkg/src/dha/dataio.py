"""Ratings, side information and sequence ingestion; splitting; synthetic data."""
from __future__ import annotations

import bisect
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cf import InteractionMatrix
from .errors import (DimMismatch, EmptyData, HeaderMismatch, MalformedLine, MissingFile,
                     RatioOutOfRange, UnknownField)
from .numkernel import Stream, make_rng
from .rnned import PAD

N_RESERVED = 2  # pad and start tokens


@dataclass
class RatingsDataset:
    user_ids: list[str]
    item_ids: list[str]
    users: np.ndarray
    items: np.ndarray
    ratings: np.ndarray
    timestamps: np.ndarray | None = None

    def __post_init__(self):
        self.user_index = {u: k for k, u in enumerate(self.user_ids)}
        self.item_index = {i: k for k, i in enumerate(self.item_ids)}

    @property
    def n_users(self) -> int:
        return len(self.user_ids)

    @property
    def n_items(self) -> int:
        return len(self.item_ids)

    def __len__(self) -> int:
        return len(self.ratings)

    def subset(self, idx: np.ndarray) -> RatingsDataset:
        ts = None if self.timestamps is None else self.timestamps[idx]
        return RatingsDataset(self.user_ids, self.item_ids, self.users[idx], self.items[idx],
                              self.ratings[idx], ts)

    def matrix(self, binarize: bool = False) -> InteractionMatrix:
        vals = np.ones_like(self.ratings) if binarize else self.ratings
        return InteractionMatrix(self.n_users, self.n_items, self.users, self.items, vals)

    def items_by_user(self) -> list[np.ndarray]:
        order = np.lexsort((self.items, self.users))
        bounds = np.searchsorted(self.users[order], np.arange(self.n_users + 1))
        its = self.items[order]
        return [its[bounds[u]:bounds[u + 1]] for u in range(self.n_users)]


@dataclass
class SideInfoTable:
    vectors: dict[str, np.ndarray]
    dim: int
    provenance: str = "bag-of-words"
    vocab: list[str] = field(default_factory=list)
    missing: int = 0

    def __post_init__(self):
        for key, v in self.vectors.items():
            if v.shape != (self.dim,):
                raise DimMismatch(f"entity {key}: vector of length {v.shape[0]} under dim {self.dim}")

    def align(self, ids: list[str]) -> np.ndarray:
        """Stack vectors in ``ids`` order; absent entities get zeros and bump ``missing``."""
        out = np.zeros((len(ids), self.dim))
        self.missing = 0
        for k, key in enumerate(ids):
            v = self.vectors.get(key)
            if v is None:
                self.missing += 1
            else:
                out[k] = v
        return out


@dataclass
class SequenceDataset:
    sequences: dict[str, np.ndarray]
    vocab: dict[str, int]
    steps: int

    @property
    def vocab_size(self) -> int:
        return len(self.vocab) + N_RESERVED

    def align(self, ids: list[str]) -> np.ndarray:
        out = np.full((len(ids), self.steps), PAD, dtype=np.int64)
        for k, key in enumerate(ids):
            if key in self.sequences:
                out[k] = self.sequences[key]
        return out


@dataclass
class Split:
    train: RatingsDataset
    test: RatingsDataset
    seed: int
    ratio: float


# -- ratings ---------------------------------------------------------------

def _open_lines(path):
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"missing file: {path}")
    with open(path, encoding="latin-1") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\r\n")
            if line.strip():
                yield lineno, line


def ratings_from_triples(triples) -> RatingsDataset:
    """Build a dataset from ``(user, item, rating, timestamp | None)`` tuples.

    Indices follow first appearance order of the sorted ids so files with the
    same content in different row order index identically.
    """
    if not triples:
        raise EmptyData("no interactions")
    seen = set()
    for u, i, *_ in triples:
        if (u, i) in seen:
            raise ValueError(f"duplicate interaction ({u}, {i})")
        seen.add((u, i))
    user_ids = sorted({t[0] for t in triples}, key=_natural_key)
    item_ids = sorted({t[1] for t in triples}, key=_natural_key)
    uidx = {u: k for k, u in enumerate(user_ids)}
    iidx = {i: k for k, i in enumerate(item_ids)}
    users = np.array([uidx[t[0]] for t in triples], dtype=np.int64)
    items = np.array([iidx[t[1]] for t in triples], dtype=np.int64)
    ratings = np.array([t[2] for t in triples], dtype=np.float64)
    ts = None
    if all(t[3] is not None for t in triples):
        ts = np.array([t[3] for t in triples], dtype=np.int64)
    return RatingsDataset(user_ids, item_ids, users, items, ratings, ts)


def _natural_key(s: str):
    return (0, int(s), "") if s.isdigit() else (1, 0, s)


def load_ratings(path) -> RatingsDataset:
    """Tab separated ``user<TAB>item<TAB>rating[<TAB>timestamp]``."""
    triples = []
    for lineno, line in _open_lines(path):
        parts = line.split("\t")
        if len(parts) not in (3, 4):
            raise MalformedLine(path, lineno, f"expected 3 or 4 fields, got {len(parts)}")
        try:
            r = float(parts[2])
            ts = int(parts[3]) if len(parts) == 4 else None
        except ValueError:
            raise MalformedLine(path, lineno, "non-numeric rating or timestamp") from None
        triples.append((parts[0], parts[1], r, ts))
    if not triples:
        raise EmptyData(f"{path}: no ratings")
    return ratings_from_triples(triples)


# -- vectorization ---------------------------------------------------------

_TOKEN = re.compile(r"[a-z0-9']+")


def tokenize(text: str) -> list[str]:
    return _TOKEN.findall(text.lower())


def vectorize(entities: dict[str, dict], schema: list[dict], fit_ids=None,
              provenance: str = "bag-of-words") -> SideInfoTable:
    """Concatenate per-field encodings into one fixed-length vector per entity.

    Field kinds: ``onehot`` (categorical value), ``binned`` (numeric, ``bins``
    are inclusive upper edges; values above the last edge fall in the final
    bin), ``bow`` (string or token list, vocabulary from ``fit_ids`` only).
    ``unknown: true`` adds a trailing slot for missing or unseen values.
    """
    fit = list(entities) if fit_ids is None else [e for e in fit_ids if e in entities]
    blocks = []
    for fdef in schema:
        name, kind = fdef["name"], fdef["kind"]
        if entities and not any(name in rec for rec in entities.values()):
            raise UnknownField(f"field {name!r} not present in any record")
        unknown = bool(fdef.get("unknown", False))
        if kind == "binned":
            edges = list(fdef["bins"])
            labels = None
            size = len(edges) + 1
        elif kind in ("onehot", "bow"):
            vals = set()
            for e in fit:
                v = entities[e].get(name)
                if v is None or v == "":
                    continue
                vals.update(_field_tokens(v) if kind == "bow" else [str(v)])
            labels = sorted(vals)
            size = len(labels)
        else:
            raise UnknownField(f"field {name!r}: unknown kind {kind!r}")
        blocks.append((name, kind, edges if kind == "binned" else None,
                       {lab: k for k, lab in enumerate(labels or [])}, size, unknown))

    dim = sum(b[4] + int(b[5]) for b in blocks)
    vocab = []
    for name, kind, edges, index, size, unknown in blocks:
        if kind == "binned":
            vocab += [f"{name}<={e}" for e in edges] + [f"{name}>{edges[-1]}"]
        else:
            vocab += [f"{name}={lab}" for lab in sorted(index, key=index.get)]
        if unknown:
            vocab.append(f"{name}=?")

    vectors = {}
    for key, rec in entities.items():
        v = np.zeros(dim)
        off = 0
        for name, kind, edges, index, size, unknown in blocks:
            raw = rec.get(name)
            hit = False
            if raw is not None and raw != "":
                if kind == "binned":
                    try:
                        v[off + bisect.bisect_left(edges, float(raw))] = 1.0
                        hit = True
                    except (TypeError, ValueError):
                        pass
                elif kind == "onehot":
                    k = index.get(str(raw))
                    if k is not None:
                        v[off + k] = 1.0
                        hit = True
                else:
                    for tok in _field_tokens(raw):
                        k = index.get(tok)
                        if k is not None:
                            v[off + k] = 1.0
                            hit = True
            if unknown and not hit:
                v[off + size] = 1.0
            off += size + int(unknown)
        vectors[key] = v
    return SideInfoTable(vectors, dim, provenance, vocab)


def _field_tokens(v) -> list[str]:
    if isinstance(v, (list, tuple, set)):
        return [str(t) for t in v]
    return tokenize(str(v))


# -- MovieLens 100k --------------------------------------------------------

ML100K_GENRES = [
    "unknown", "Action", "Adventure", "Animation", "Children's", "Comedy", "Crime",
    "Documentary", "Drama", "Fantasy", "Film-Noir", "Horror", "Musical", "Mystery",
    "Romance", "Sci-Fi", "Thriller", "War", "Western",
]

ML100K_USER_SCHEMA = [
    {"name": "age", "kind": "binned", "bins": [17, 24, 34, 44, 49, 55], "unknown": True},
    {"name": "gender", "kind": "onehot", "unknown": True},
    {"name": "occupation", "kind": "onehot", "unknown": True},
    {"name": "zip", "kind": "onehot", "unknown": True},
]

ML100K_ITEM_SCHEMA = [
    {"name": "genres", "kind": "bow"},
    {"name": "year", "kind": "binned", "bins": [1939, 1959, 1969, 1979, 1989, 1994, 1996],
     "unknown": True},
    {"name": "title", "kind": "bow"},
]

_YEAR = re.compile(r"\((\d{4})\)\s*$")


def read_movielens_100k(directory):
    """Parse u.data / u.user / u.item into (ratings, user records, item records)."""
    d = Path(directory)
    for name in ("u.data", "u.user", "u.item"):
        if not (d / name).is_file():
            raise MissingFile(f"missing file: {d / name}")
    ratings = load_ratings(d / "u.data")
    users = {}
    for lineno, line in _open_lines(d / "u.user"):
        parts = line.split("|")
        if len(parts) != 5:
            raise MalformedLine(d / "u.user", lineno, f"expected 5 fields, got {len(parts)}")
        uid, age, gender, occ, zipc = parts
        users[uid] = {"age": age, "gender": gender, "occupation": occ, "zip": zipc}
    items = {}
    for lineno, line in _open_lines(d / "u.item"):
        parts = line.split("|")
        if len(parts) != 5 + len(ML100K_GENRES):
            raise MalformedLine(d / "u.item", lineno, f"expected {5 + len(ML100K_GENRES)} fields")
        title = parts[1]
        m = _YEAR.search(title)
        year = m.group(1) if m else (parts[2][-4:] if parts[2] else "")
        flags = parts[5:]
        items[parts[0]] = {
            "title": _YEAR.sub("", title),
            "year": year,
            "genres": [g for g, f in zip(ML100K_GENRES, flags) if f.strip() == "1"],
        }
    return ratings, users, items


def load_movielens_100k(directory, fit_ids: tuple[list[str], list[str]] | None = None):
    """Return ``(ratings, user_table, item_table)``.

    Vocabularies are fitted on ``fit_ids`` (users, items) when given, which
    callers set to the entities of the training split.
    """
    ratings, users, items = read_movielens_100k(directory)
    fu, fi = fit_ids if fit_ids is not None else (None, None)
    user_table = vectorize(users, ML100K_USER_SCHEMA, fu, provenance="one-hot")
    item_table = vectorize(items, ML100K_ITEM_SCHEMA, fi)
    return ratings, user_table, item_table


def rating_vectors(train: RatingsDataset, side: str, scale: float | None = None) -> SideInfoTable:
    """Each entity's row (users) or column (items) of the training matrix.

    Values are divided by ``scale`` (default: the max rating) so they lie in [0, 1].
    """
    dense = train.matrix().dense()
    scale = scale or (float(train.ratings.max()) if len(train) else 1.0)
    mat = dense / scale if side == "user" else dense.T / scale
    ids = train.user_ids if side == "user" else train.item_ids
    return SideInfoTable({k: mat[n] for n, k in enumerate(ids)}, mat.shape[1], "rating-vector")


# -- external embeddings and sequences ---------------------------------------

def load_embeddings(path) -> SideInfoTable:
    lines = _open_lines(path)
    try:
        lineno, header = next(lines)
    except StopIteration:
        raise EmptyData(f"{path}: empty embedding file") from None
    m = re.fullmatch(r"dim=(\d+)", header.strip())
    if not m:
        raise HeaderMismatch(f"{path}:{lineno}: expected 'dim=<D>' header, got {header!r}")
    dim = int(m.group(1))
    vectors = {}
    for lineno, line in lines:
        parts = line.split("\t")
        if len(parts) != 2:
            raise MalformedLine(path, lineno, "expected 'entity<TAB>v1,...,vD'")
        try:
            vec = np.array([float(x) for x in parts[1].split(",")])
        except ValueError:
            raise MalformedLine(path, lineno, "non-numeric value") from None
        if vec.shape[0] != dim:
            raise DimMismatch(f"{path}:{lineno}: {vec.shape[0]} values under dim={dim}")
        vectors[parts[0]] = vec
    return SideInfoTable(vectors, dim, "external-embedding")


def build_vocab(token_lists) -> dict[str, int]:
    """Sorted token order so ids do not depend on file row order."""
    toks = sorted({t for seq in token_lists for t in seq})
    return {t: k + N_RESERVED for k, t in enumerate(toks)}


def pad_sequence(token_ids, steps: int) -> np.ndarray:
    tail = list(token_ids)[-steps:]
    return np.array([PAD] * (steps - len(tail)) + tail, dtype=np.int64)


def sequences_from_tokens(raw: dict[str, list[str]], steps: int,
                          vocab: dict[str, int] | None = None) -> SequenceDataset:
    if steps < 1:
        raise ValueError("T must be >= 1")
    vocab = build_vocab(raw.values()) if vocab is None else vocab
    seqs = {k: pad_sequence([vocab[t] for t in toks if t in vocab], steps) for k, toks in raw.items()}
    return SequenceDataset(seqs, vocab, steps)


def read_sequence_file(path) -> dict[str, list[str]]:
    raw = {}
    for lineno, line in _open_lines(path):
        parts = line.split("\t")
        if len(parts) != 2 or not parts[0]:
            raise MalformedLine(path, lineno, "expected 'entity<TAB>tok1,tok2,...'")
        raw[parts[0]] = [t for t in parts[1].split(",") if t]
    return raw


def load_sequences(paths, steps: int) -> SequenceDataset:
    """Keep the most recent ``steps`` tokens per entity, left-padding short ones.

    ``paths`` may be one file or several; the vocabulary spans all of them.
    """
    if steps < 1:
        raise ValueError("T must be >= 1")
    if isinstance(paths, (str, Path)):
        paths = [paths]
    per_file = [read_sequence_file(p) for p in paths]
    vocab = build_vocab(toks for raw in per_file for toks in raw.values())
    merged = {}
    for raw in per_file:
        merged.update(raw)
    return sequences_from_tokens(merged, steps, vocab)


# -- splitting ---------------------------------------------------------------

def split_holdout(ds: RatingsDataset, ratio: float, seed: int) -> Split:
    """Uniform per-interaction holdout of ``round(ratio * N)`` test triples."""
    if not 0.0 < ratio < 1.0:
        raise RatioOutOfRange(f"split ratio {ratio} outside (0, 1)")
    n = len(ds)
    n_test = int(np.floor(ratio * n + 0.5))
    perm = make_rng(seed, Stream.SPLIT).permutation(n)
    test_idx, train_idx = np.sort(perm[:n_test]), np.sort(perm[n_test:])
    return Split(ds.subset(train_idx), ds.subset(test_idx), seed, ratio)


# -- synthetic planted-factor data --------------------------------------------

@dataclass
class SynthData:
    ratings: RatingsDataset
    user_side: SideInfoTable
    item_side: SideInfoTable
    sequences: SequenceDataset
    U_true: np.ndarray
    V_true: np.ndarray
    scores: np.ndarray


def synth_generate(m: int, n: int, d_true: int, noise: float, side_corr: float, seed: int,
                   side_dim: int = 20, positives: int | None = None, vocab_size: int = 12,
                   steps: int = 5) -> SynthData:
    """Plant ``U* V*^T`` (plus Gaussian noise) and derive implicit positives,
    linearly correlated side vectors and factor-driven token sequences.

    Each user's positives are its ``positives`` highest-scoring items
    (default 10% of ``n``), stored with rating 1.
    """
    if d_true < 1:
        raise ValueError("d_true must be >= 1")
    rng = make_rng(seed, Stream.SYNTH)
    U = rng.normal(size=(m, d_true))
    V = rng.normal(size=(n, d_true))
    scores = U @ V.T + noise * rng.normal(size=(m, n))
    k = positives if positives is not None else max(1, round(0.1 * n))
    top = np.argsort(-scores, axis=1, kind="stable")[:, :k]
    user_ids = [f"u{i}" for i in range(m)]
    item_ids = [f"i{j}" for j in range(n)]
    users = np.repeat(np.arange(m), k)
    items = top.reshape(-1)
    ratings = RatingsDataset(user_ids, item_ids, users, items, np.ones(m * k))

    def side(F, ids):
        A = rng.normal(size=(F.shape[1], side_dim)) / np.sqrt(F.shape[1])
        mix = side_corr * (F @ A) + (1.0 - side_corr) * rng.normal(size=(F.shape[0], side_dim))
        return SideInfoTable({key: mix[r] for r, key in enumerate(ids)}, side_dim, "external-embedding")

    user_side = side(U, user_ids)
    item_side = side(V, item_ids)

    B = rng.normal(size=(d_true, vocab_size)) * 1.5
    logits = U @ B
    p = np.exp(logits - logits.max(axis=1, keepdims=True))
    p /= p.sum(axis=1, keepdims=True)
    tokens = [f"g{t:02d}" for t in range(vocab_size)]
    raw = {}
    for r, key in enumerate(user_ids):
        draws = rng.choice(vocab_size, size=steps, p=p[r])
        raw[key] = [tokens[t] for t in draws]
    vocab = {t: k + N_RESERVED for k, t in enumerate(tokens)}
    seqs = sequences_from_tokens(raw, steps, vocab)
    return SynthData(ratings, user_side, item_side, seqs, U, V, scores)
