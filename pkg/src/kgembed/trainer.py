"""Word2vec-style embedding training over walk corpora.

Skip-gram and CBOW with negative sampling. Updates are applied in vectorized
batches: gradients for a batch are computed against the tables as they stood
when the batch started and accumulated with exact scatter-adds, which keeps
single-worker runs bit-reproducible while staying fast enough for full-graph
corpora. :func:`sgns_gradient` is the exact one-pair reference step that the
unit and finite-difference tests exercise.

The published vectors are the input table; context (output) vectors are kept
on the model for inspection but never used for similarity queries.
"""

from __future__ import annotations

import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .graph_io import escape_token, open_text_read, open_text_write, unescape_token

MODES = ("sg", "cbow")
_DEFAULT_LR = {"sg": 0.025, "cbow": 0.05}
_LR_FLOOR_RATIO = 1e-4  # final rate is initial / 10**4
_MAX_CHUNK = 4096
_MIN_CHUNK = 8


def _chunk_size(vocab_size: int, lr: float, negatives: int) -> int:
    # Gradients inside a chunk are computed against chunk-start tables, so a
    # row hit many times in one chunk accumulates stale updates. Expected
    # hits per row scale as chunk * (1 + negatives) / vocab and the runaway
    # threshold is roughly lr * hits ~ 2.5 (measured); stay well below it.
    # Rows hit far above expectation (hub tokens) are handled by the row
    # clipping in _scatter_add_clipped.
    budget = vocab_size / (lr * (1 + negatives))
    return max(_MIN_CHUNK, min(_MAX_CHUNK, int(budget)))


_MAX_ROW_UPDATE = 0.5


def _scatter_add_clipped(table, indices, updates):
    """Accumulate row updates, clipping each row's total movement per chunk
    to ``_MAX_ROW_UPDATE``. Hub rows can be hit hundreds of times in one
    chunk with gradients taken at chunk-start values; unclipped, that stale
    accumulation can overshoot and blow the tables up."""
    if indices.size == 0:
        return
    uniq, inverse = np.unique(indices, return_inverse=True)
    buf = np.zeros((uniq.size, table.shape[1]), dtype=table.dtype)
    np.add.at(buf, inverse, updates)
    norms = np.sqrt((buf * buf).sum(axis=1))
    np.maximum(norms, _MAX_ROW_UPDATE, out=norms)
    buf *= (_MAX_ROW_UPDATE / norms)[:, None]
    table[uniq] += buf


class EmptyCorpusError(ValueError):
    """empty-corpus: no tokens at all to build a vocabulary from."""


class EmptyVocabularyError(ValueError):
    """No token survived the min_count floor."""


class TrainingDivergedError(RuntimeError):
    """Non-finite loss or vectors encountered during training."""


class ModelFormatError(ValueError):
    """Malformed model file; carries the offending 1-based line number."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class UnknownTokenError(KeyError):
    def __str__(self) -> str:
        return self.args[0] if self.args else "unknown token"


@dataclass(frozen=True)
class TrainConfig:
    """Training hyperparameters. ``initial_learning_rate=None`` selects the
    standard default for the mode (0.025 for sg, 0.05 for cbow)."""

    mode: str = "sg"
    dimension: int = 100
    window: int = 5
    negatives: int = 25
    epochs: int = 5
    initial_learning_rate: float | None = None
    min_count: int = 1
    seed: int = 42

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.dimension < 1:
            raise ValueError("dimension must be >= 1")
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if self.negatives < 0:
            raise ValueError("negatives must be >= 0")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.min_count < 1:
            raise ValueError("min_count must be >= 1")
        if self.seed < 0:
            raise ValueError("seed must be >= 0")
        if self.initial_learning_rate is not None and not self.initial_learning_rate > 0:
            raise ValueError("initial_learning_rate must be > 0")

    @property
    def learning_rate(self) -> float:
        if self.initial_learning_rate is None:
            return _DEFAULT_LR[self.mode]
        return self.initial_learning_rate


@dataclass
class Vocabulary:
    """Dense token index with frequencies and the unigram^0.75 negative
    sampling distribution."""

    tokens: list[str]
    index: dict[str, int]
    counts: np.ndarray
    sampling_probs: np.ndarray

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.index

    def index_of(self, token: str) -> int:
        i = self.index.get(token)
        if i is None:
            raise UnknownTokenError(f"unknown token: {token!r}")
        return i


def build_vocabulary(sentences: Iterable[Sequence[str]], min_count: int = 1) -> Vocabulary:
    """Count tokens and keep those occurring at least ``min_count`` times.

    Tokens are indexed by descending frequency (ties keep first-seen order).
    A corpus with no tokens at all raises :class:`EmptyCorpusError`; a corpus
    where nothing reaches the floor yields an empty vocabulary, which the
    trainer rejects downstream.
    """
    counts: dict[str, int] = {}
    total = 0
    for sentence in sentences:
        for token in sentence:
            counts[token] = counts.get(token, 0) + 1
            total += 1
    if total == 0:
        raise EmptyCorpusError("empty-corpus: no tokens in input")
    kept = [t for t, c in counts.items() if c >= min_count]
    kept.sort(key=lambda t: -counts[t])
    freq = np.array([counts[t] for t in kept], dtype=np.int64)
    if len(kept):
        weights = freq.astype(np.float64) ** 0.75
        probs = weights / weights.sum()
    else:
        probs = np.zeros(0, dtype=np.float64)
    return Vocabulary(kept, {t: i for i, t in enumerate(kept)}, freq, probs)


@dataclass
class EmbeddingModel:
    vocabulary: Vocabulary
    vectors: np.ndarray
    context_vectors: np.ndarray | None = None
    config: TrainConfig | None = None
    epoch_losses: list[float] = field(default_factory=list)

    @property
    def dimension(self) -> int:
        return int(self.vectors.shape[1])

    def __contains__(self, token: str) -> bool:
        return token in self.vocabulary

    def vector(self, token: str) -> np.ndarray:
        return self.vectors[self.vocabulary.index_of(token)]


# --------------------------------------------------------------------------
# The SGNS step, in reference (per-pair) and batched forms
# --------------------------------------------------------------------------


def _sigmoid(x):
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-x))


def _as_negatives(negatives, dim: int) -> np.ndarray:
    negs = np.asarray(negatives, dtype=np.float64)
    if negs.size == 0:
        return negs.reshape(0, dim)
    return negs


def sgns_loss(center, context, negatives=()) -> float:
    """Negative-sampling loss for one pair:
    ``-log sigma(context . center) - sum_k log sigma(-neg_k . center)``."""
    v = np.asarray(center, dtype=np.float64)
    u = np.asarray(context, dtype=np.float64)
    negs = _as_negatives(negatives, v.shape[0])
    loss = np.logaddexp(0.0, -(u @ v))
    if negs.shape[0]:
        loss = loss + np.logaddexp(0.0, negs @ v).sum()
    return float(loss)


def sgns_gradient(center, context, negatives, lr):
    """One SGD step on :func:`sgns_loss`; returns updated copies of
    ``(center, context, negatives)``. ``lr=0`` leaves everything unchanged."""
    v = np.asarray(center, dtype=np.float64)
    u = np.asarray(context, dtype=np.float64)
    negs = _as_negatives(negatives, v.shape[0] if v.ndim else 0)
    if v.ndim != 1 or u.shape != v.shape or negs.ndim != 2 or negs.shape[1] != v.shape[0]:
        raise ValueError("dimension mismatch between center, context, and negatives")
    g_pos = _sigmoid(u @ v) - 1.0  # d loss / d (u.v)
    g_neg = _sigmoid(negs @ v)  # d loss / d (neg_k.v), one per negative
    d_center = g_pos * u + (g_neg @ negs if negs.shape[0] else 0.0)
    d_context = g_pos * v
    d_negs = g_neg[:, None] * v[None, :]
    return v - lr * d_center, u - lr * d_context, negs - lr * d_negs


def _process_sg_chunk(w_in, w_out, centers, contexts, negatives, lr):
    # overflow in a diverging run is caught by the loss guard, not warned about
    with np.errstate(over="ignore", invalid="ignore"):
        return _sg_chunk_inner(w_in, w_out, centers, contexts, negatives, lr)


def _sg_chunk_inner(w_in, w_out, centers, contexts, negatives, lr):
    dim = w_out.shape[1]
    vc = w_in[centers]
    uo = w_out[contexts]
    pos = np.einsum("bd,bd->b", vc, uo)
    gp = 1.0 - _sigmoid(pos)
    loss = float(np.logaddexp(0.0, -pos).sum(dtype=np.float64))
    duo = gp[:, None] * vc
    if negatives.size:
        un = w_out[negatives]
        ns = np.einsum("bd,bkd->bk", vc, un)
        live = negatives != contexts[:, None]  # a draw equal to the positive is skipped
        gn = np.where(live, -_sigmoid(ns), np.float32(0.0))
        loss += float(np.logaddexp(0.0, np.where(live, ns, np.float32(-np.inf))).sum(dtype=np.float64))
        dvc = gp[:, None] * uo + np.einsum("bk,bkd->bd", gn, un)
        dun = gn[..., None] * vc[:, None, :]
        out_rows = np.concatenate([contexts, negatives.ravel()])
        out_updates = np.concatenate([lr * duo, (lr * dun).reshape(-1, dim)])
    else:
        dvc = gp[:, None] * uo
        out_rows, out_updates = contexts, lr * duo
    _scatter_add_clipped(w_in, centers, lr * dvc)
    _scatter_add_clipped(w_out, out_rows, out_updates)
    return loss, centers.shape[0]


def _process_cbow_chunk(w_in, w_out, centers, ctx, mask, negatives, lr):
    with np.errstate(over="ignore", invalid="ignore"):
        return _cbow_chunk_inner(w_in, w_out, centers, ctx, mask, negatives, lr)


def _cbow_chunk_inner(w_in, w_out, centers, ctx, mask, negatives, lr):
    dim = w_out.shape[1]
    vctx = w_in[ctx]  # (B, 2w, d)
    counts = mask.sum(axis=1)  # >= 1 by construction
    h = np.einsum("bwd,bw->bd", vctx, mask) / counts[:, None]
    uc = w_out[centers]
    pos = np.einsum("bd,bd->b", h, uc)
    gp = 1.0 - _sigmoid(pos)
    loss = float(np.logaddexp(0.0, -pos).sum(dtype=np.float64))
    dh = gp[:, None] * uc
    duc = gp[:, None] * h
    if negatives.size:
        un = w_out[negatives]
        ns = np.einsum("bd,bkd->bk", h, un)
        live = negatives != centers[:, None]
        gn = np.where(live, -_sigmoid(ns), np.float32(0.0))
        loss += float(np.logaddexp(0.0, np.where(live, ns, np.float32(-np.inf))).sum(dtype=np.float64))
        dh = dh + np.einsum("bk,bkd->bd", gn, un)
        dun = gn[..., None] * h[:, None, :]
        out_rows = np.concatenate([centers, negatives.ravel()])
        out_updates = np.concatenate([lr * duc, (lr * dun).reshape(-1, dim)])
    else:
        out_rows, out_updates = centers, lr * duc
    _scatter_add_clipped(w_out, out_rows, out_updates)
    # the mean distributes the head gradient equally over live context slots
    dctx = (lr / counts)[:, None, None] * dh[:, None, :] * mask[..., None]
    _scatter_add_clipped(w_in, ctx.ravel(), dctx.reshape(-1, dim))
    return loss, centers.shape[0]


# --------------------------------------------------------------------------
# Corpus preparation
# --------------------------------------------------------------------------


def _encode_sentences(sentences, vocab: Vocabulary) -> list[np.ndarray]:
    index = vocab.index
    encoded = []
    for sentence in sentences:
        ids = [index[t] for t in sentence if t in index]
        if ids:
            encoded.append(np.asarray(ids, dtype=np.int64))
    return encoded


def _sg_pairs(encoded, window: int) -> tuple[np.ndarray, np.ndarray]:
    centers, contexts = [], []
    for a in encoded:
        n = a.shape[0]
        for off in range(1, min(window, n - 1) + 1):
            left, right = a[:-off], a[off:]
            centers.append(left)
            contexts.append(right)
            centers.append(right)
            contexts.append(left)
    if not centers:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty.copy()
    return np.concatenate(centers), np.concatenate(contexts)


def _cbow_groups(encoded, window: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    width = 2 * window
    mats, masks, centers = [], [], []
    for a in encoded:
        n = a.shape[0]
        if n < 2:
            continue
        m = np.zeros((n, width), dtype=np.int64)
        k = np.zeros((n, width), dtype=np.float32)
        col = 0
        for off in range(1, window + 1):
            if off < n:
                m[off:, col] = a[:-off]
                k[off:, col] = 1.0
                m[:-off, col + 1] = a[off:]
                k[:-off, col + 1] = 1.0
            col += 2
        mats.append(m)
        masks.append(k)
        centers.append(a)
    if not centers:
        return (
            np.zeros((0, width), dtype=np.int64),
            np.zeros((0, width), dtype=np.float32),
            np.zeros(0, dtype=np.int64),
        )
    return np.concatenate(mats), np.concatenate(masks), np.concatenate(centers)


# --------------------------------------------------------------------------
# Training loop
# --------------------------------------------------------------------------


def train(
    sentences: Sequence[Sequence[str]],
    cfg: TrainConfig | None = None,
    *,
    workers: int = 1,
) -> EmbeddingModel:
    """Train a model on an in-memory corpus of token sequences.

    The learning rate decays linearly from ``cfg.learning_rate`` to one
    ten-thousandth of it over all scheduled updates. With ``workers=1`` the
    result is bit-identical across runs for a fixed seed; more workers share
    the tables without locking and may lose updates, which the similarity
    contracts tolerate.
    """
    cfg = cfg or TrainConfig()
    if not isinstance(sentences, (list, tuple)):
        sentences = [list(s) for s in sentences]
    vocab = build_vocabulary(sentences, cfg.min_count)
    if len(vocab) == 0:
        raise EmptyVocabularyError(f"empty vocabulary: no token occurs at least min_count={cfg.min_count} times")

    rng = np.random.default_rng(cfg.seed)
    size, dim = len(vocab), cfg.dimension
    w_in = ((rng.random((size, dim)) - 0.5) / dim).astype(np.float32)
    w_out = np.zeros((size, dim), dtype=np.float32)

    encoded = _encode_sentences(sentences, vocab)
    total_tokens = sum(a.shape[0] for a in encoded)
    if cfg.mode == "sg":
        centers, contexts = _sg_pairs(encoded, cfg.window)
        n_updates = centers.shape[0]
    else:
        ctx_mat, ctx_mask, centers = _cbow_groups(encoded, cfg.window)
        n_updates = centers.shape[0]
    if n_updates == 0:
        # every sentence is a single token; the seeded initialization is the model
        print("train: corpus has no context pairs; returning initialized vectors", file=sys.stderr)
        return EmbeddingModel(vocab, w_in, w_out, cfg, [])

    cumulative = np.cumsum(vocab.sampling_probs)
    cumulative[-1] = 1.0  # guard float drift so sampled indices stay in range
    lr0 = cfg.learning_rate
    total_scheduled = n_updates * cfg.epochs
    chunk = _chunk_size(size, lr0, cfg.negatives)
    spans = [(s, min(s + chunk, n_updates)) for s in range(0, n_updates, chunk)]
    epoch_losses: list[float] = []

    for epoch in range(cfg.epochs):
        started = time.perf_counter()

        def run_chunk(item):
            ci, (lo, hi) = item
            chunk_rng = np.random.default_rng((cfg.seed, epoch, ci))
            if cfg.negatives > 0:
                draws = chunk_rng.random((hi - lo, cfg.negatives))
                negatives = np.searchsorted(cumulative, draws).astype(np.int64)
            else:
                negatives = np.zeros((hi - lo, 0), dtype=np.int64)
            progress = (epoch * n_updates + lo) / total_scheduled
            lr = np.float32(lr0 * (1.0 - (1.0 - _LR_FLOOR_RATIO) * progress))
            if cfg.mode == "sg":
                return _process_sg_chunk(w_in, w_out, centers[lo:hi], contexts[lo:hi], negatives, lr)
            return _process_cbow_chunk(
                w_in, w_out, centers[lo:hi], ctx_mat[lo:hi], ctx_mask[lo:hi], negatives, lr
            )

        if workers <= 1:
            results = [run_chunk(item) for item in enumerate(spans)]
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(run_chunk, enumerate(spans)))
        mean_loss = sum(r[0] for r in results) / n_updates
        if not np.isfinite(mean_loss):
            raise TrainingDivergedError(
                f"non-finite loss {mean_loss} in epoch {epoch + 1} (initial rate {lr0}); lower the learning rate"
            )
        epoch_losses.append(mean_loss)
        elapsed = time.perf_counter() - started
        rate = total_tokens / elapsed if elapsed > 0 else float("inf")
        print(f"epoch={epoch + 1} tokens/sec={rate:.0f} loss={mean_loss:.6f}", file=sys.stderr)

    if not (np.isfinite(w_in).all() and np.isfinite(w_out).all()):
        raise TrainingDivergedError(f"non-finite vectors after training (initial rate {lr0})")
    return EmbeddingModel(vocab, w_in, w_out, cfg, epoch_losses)


# --------------------------------------------------------------------------
# Model files: header "<count> <dimension>", then one token and its floats
# per line. float32 values rendered with 9 significant digits round-trip
# exactly.
# --------------------------------------------------------------------------


def save_model(model: EmbeddingModel, path: str | Path) -> int:
    """Write the published (input) vectors as text. Returns the row count."""
    vectors = model.vectors
    with open_text_write(path) as fh:
        fh.write(f"{vectors.shape[0]} {vectors.shape[1]}\n")
        for i, token in enumerate(model.vocabulary.tokens):
            row = " ".join(f"{float(x):.9g}" for x in vectors[i])
            fh.write(f"{escape_token(token)} {row}\n")
    return int(vectors.shape[0])


def load_model(path: str | Path) -> EmbeddingModel:
    """Read a model file back. The format carries no frequencies, so the
    vocabulary gets unit counts and a uniform sampling distribution."""
    with open_text_read(path) as fh:
        lines = fh.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise ModelFormatError("empty model file", line=1)
    head = lines[0].split()
    if len(head) != 2:
        raise ModelFormatError("header must be '<count> <dimension>'", line=1)
    try:
        size, dim = int(head[0]), int(head[1])
    except ValueError:
        raise ModelFormatError(f"non-integer header {lines[0]!r}", line=1) from None
    if size < 0 or dim < 1:
        raise ModelFormatError(f"implausible header {lines[0]!r}", line=1)
    if len(lines) - 1 != size:
        raise ModelFormatError(
            f"header claims {size} vectors but the file has {len(lines) - 1} body lines",
            line=len(lines),
        )
    tokens: list[str] = []
    index: dict[str, int] = {}
    vectors = np.empty((size, dim), dtype=np.float32)
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split(" ")
        if len(parts) != dim + 1:
            raise ModelFormatError(f"expected a token and {dim} floats, found {len(parts)} fields", line=lineno)
        token = unescape_token(parts[0])
        if token in index:
            raise ModelFormatError(f"duplicate token {token!r}", line=lineno)
        try:
            vectors[lineno - 2] = [float(x) for x in parts[1:]]
        except ValueError:
            raise ModelFormatError("unparseable float", line=lineno) from None
        index[token] = lineno - 2
        tokens.append(token)
    counts = np.ones(size, dtype=np.int64)
    probs = np.full(size, 1.0 / size, dtype=np.float64) if size else np.zeros(0, dtype=np.float64)
    vocab = Vocabulary(tokens, index, counts, probs)
    return EmbeddingModel(vocab, vectors, None, None, [])
