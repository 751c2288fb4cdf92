"""Similarity and rank statistics over embedding vectors."""

from __future__ import annotations

import numpy as np

from .trainer import EmbeddingModel


class ZeroVectorError(ValueError):
    """A zero-norm vector where a direction is required."""


class DegenerateVarianceError(ValueError):
    """degenerate-variance: a correlation input has no variance."""


class NonPositiveCorrelationError(ValueError):
    """non-positive-correlation: the harmonic mean is refused; both raw
    values travel with the error."""

    def __init__(self, a: float, b: float):
        super().__init__(f"non-positive-correlation: cannot combine {a} and {b}")
        self.values = (a, b)


def cosine(u, v) -> float:
    """Cosine similarity of two equal-dimension vectors."""
    a = np.asarray(u, dtype=np.float64)
    b = np.asarray(v, dtype=np.float64)
    if a.ndim != 1 or a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        raise ZeroVectorError("cosine of a zero-norm vector is undefined")
    return float(a @ b / (na * nb))


def nearest_neighbors(model: EmbeddingModel, token: str, k: int = 10) -> list[tuple[str, float]]:
    """The ``k`` vocabulary tokens most cosine-similar to ``token``, query
    excluded, sorted by descending score with ties broken by ascending
    vocabulary index. ``k`` larger than the vocabulary is capped."""
    if k < 1:
        raise ValueError("k must be >= 1")
    query = model.vocabulary.index_of(token)
    matrix = model.vectors.astype(np.float64)
    norms = np.linalg.norm(matrix, axis=1)
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        raise ZeroVectorError(f"zero-norm vector for token {model.vocabulary.tokens[int(zero[0])]!r}")
    scores = (matrix @ matrix[query]) / (norms * norms[query])
    order = sorted((i for i in range(len(norms)) if i != query), key=lambda i: (-scores[i], i))
    return [(model.vocabulary.tokens[i], float(scores[i])) for i in order[:k]]


def _correlation_inputs(xs, ys) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.ndim != 1 or x.shape != y.shape:
        raise ValueError(f"length mismatch: {x.shape} vs {y.shape}")
    if x.shape[0] < 2:
        raise ValueError("need at least two points")
    return x, y


def pearson(xs, ys) -> float:
    """Sample Pearson correlation coefficient."""
    x, y = _correlation_inputs(xs, ys)
    xc = x - x.mean()
    yc = y - y.mean()
    ssx = float(xc @ xc)
    ssy = float(yc @ yc)
    if ssx == 0.0 or ssy == 0.0:
        raise DegenerateVarianceError("degenerate-variance: constant input")
    return float((xc @ yc) / np.sqrt(ssx * ssy))


def average_ranks(values) -> np.ndarray:
    """1-based ranks; ties receive the mean of the positions they occupy."""
    a = np.asarray(values, dtype=np.float64)
    order = np.argsort(a, kind="stable")
    ranks = np.empty(a.shape[0], dtype=np.float64)
    i = 0
    while i < a.shape[0]:
        j = i
        while j + 1 < a.shape[0] and a[order[j + 1]] == a[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def spearman(xs, ys) -> float:
    """Spearman rank correlation: Pearson over average-rank sequences."""
    x, y = _correlation_inputs(xs, ys)
    return pearson(average_ranks(x), average_ranks(y))


def harmonic_mean(a: float, b: float) -> float:
    """Harmonic mean of two positive values; non-positive inputs raise
    :class:`NonPositiveCorrelationError` instead of producing a misleading
    number."""
    if a <= 0 or b <= 0:
        raise NonPositiveCorrelationError(a, b)
    return 2.0 * a * b / (a + b)
