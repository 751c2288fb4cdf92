"""Walk corpus generation.

Two strategies over a frozen :class:`~kgembed.graph.KnowledgeGraph`:

* ``classic`` starts at each entity and repeatedly follows a uniformly random
  outgoing edge, so the entity is always the first token.
* ``light`` grows each walk bidirectionally around an entity of interest.
  Every step draws uniformly from the union of the current head's ingoing
  edges and the current tail's outgoing edges; backward picks prepend
  ``(source, predicate)`` and refresh only the ingoing frontier, forward
  picks append ``(predicate, target)`` and refresh only the outgoing
  frontier. The anchor can therefore end up at the start, middle, or end of
  the walk.

Walks are token-id sequences alternating node, predicate, node, ... with at
most ``depth`` node hops beyond the anchor (``2 * depth + 1`` tokens). A dead
end (no candidate edge) ends the walk early; it is emitted as-is, possibly as
the bare anchor. Each (entity, walk-index) pair derives its own RNG stream
from the master seed, so output does not depend on scheduling order.
"""

from __future__ import annotations

import logging
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable

from .graph import KnowledgeGraph, UnknownNodeError
from .graph_io import escape_token, open_text_read, open_text_write, unescape_token

logger = logging.getLogger(__name__)

STRATEGIES = ("classic", "light")


@dataclass(frozen=True)
class WalkConfig:
    """Walk generation parameters.

    ``depth`` counts node hops added beyond the anchor. ``coin_flip_direction``
    switches the light strategy from drawing uniformly over the candidate
    union to first flipping a fair coin for the direction (falling back to the
    other side when the chosen frontier is empty).
    """

    walks_per_entity: int = 500
    depth: int = 4
    strategy: str = "light"
    include_literals: bool = False
    seed: int = 42
    coin_flip_direction: bool = False

    def __post_init__(self):
        if self.walks_per_entity < 1:
            raise ValueError("walks_per_entity must be >= 1")
        if self.depth < 1:
            raise ValueError("depth must be >= 1")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"strategy must be one of {STRATEGIES}")


@dataclass
class Walk:
    tokens: list[int]
    anchor: int


@dataclass
class WalkCorpus:
    """Generated walks plus the entity set they were grown around.

    ``adjacency_lookups`` counts in/out edge-list fetches performed while
    generating, which is the walker's unit of graph work.
    """

    walks: list[Walk]
    entities: list[int]
    config: WalkConfig | None
    graph: KnowledgeGraph | None = None
    missing_entities: list[str] = field(default_factory=list)
    adjacency_lookups: int = 0

    def __len__(self) -> int:
        return len(self.walks)

    def sentences(self) -> list[list[str]]:
        """Walks resolved to token strings, ready for training."""
        if self.graph is None:
            raise ValueError("corpus has no backing graph to resolve tokens")
        resolve = self.graph.resolve
        return [[resolve(t) for t in w.tokens] for w in self.walks]


def _walk_rng(seed: int, entity: int, index: int) -> random.Random:
    # string seeding hashes with sha512, stable across platforms and runs
    return random.Random(f"{seed}:{entity}:{index}")


def _resolve_entities(g: KnowledgeGraph, entities: Iterable[str | int], missing: list[str]) -> list[int]:
    """Map tokens/ids to node ids, recording unknown or non-node entries.

    The result is deduplicated and sorted ascending so corpus order is
    deterministic regardless of the input collection's iteration order.
    """
    ids: list[int] = []
    seen: set[int] = set()
    for entity in entities:
        if isinstance(entity, str):
            try:
                i = g.lookup(entity)
            except UnknownNodeError:
                missing.append(entity)
                continue
        elif isinstance(entity, int) and 0 <= entity < g.num_tokens:
            i = entity
        else:
            missing.append(repr(entity))
            continue
        if not g.is_node(i):
            missing.append(g.resolve(i))
            continue
        if i not in seen:
            seen.add(i)
            ids.append(i)
    for m in missing:
        logger.warning("missing-entity: %s", m)
    ids.sort()
    return ids


def _forward_edges(g: KnowledgeGraph, node: int, include_literals: bool, state: list[int]) -> list[tuple[int, int]]:
    state[0] += 1
    edges = g.out_edges(node)
    if include_literals:
        return edges
    lit = g.is_literal_id
    return [e for e in edges if not lit(e[1])]


def _backward_edges(g: KnowledgeGraph, node: int, state: list[int]) -> list[tuple[int, int]]:
    state[0] += 1
    return g.in_edges(node)


def _light_walk(g: KnowledgeGraph, entity: int, rng: random.Random, cfg: WalkConfig, state: list[int]) -> Walk:
    tokens = [entity]
    anchor = 0
    pred = _backward_edges(g, entity, state)
    succ = _forward_edges(g, entity, cfg.include_literals, state)
    hops = 0
    while hops < cfg.depth:
        head = tokens[0]
        tail = tokens[-1]
        back_cand = [(s, p, head) for s, p in pred]
        fwd_cand = [(tail, p, o) for p, o in succ]
        if cfg.coin_flip_direction:
            if not back_cand and not fwd_cand:
                break
            if back_cand and fwd_cand:
                pool = back_cand if rng.random() < 0.5 else fwd_cand
            else:
                pool = back_cand or fwd_cand
            choice = pool[rng.randrange(len(pool))]
            backward = pool is back_cand
        else:
            # union of edge sets: an edge that is both ingoing-to-head and
            # outgoing-from-tail is drawn once and treated as backward
            back_set = set(back_cand)
            cand = list(back_cand)
            for t in fwd_cand:
                if t not in back_set:
                    cand.append(t)
            if not cand:
                break
            choice = cand[rng.randrange(len(cand))]
            backward = choice in back_set
        s, p, o = choice
        if backward:
            tokens[:0] = [s, p]
            anchor += 2
            pred = _backward_edges(g, s, state)
        else:
            tokens.extend([p, o])
            # a literal tail has no outgoing edges; skip the lookup
            succ = [] if g.is_literal_id(o) else _forward_edges(g, o, cfg.include_literals, state)
        hops += 1
    return Walk(tokens, anchor)


def _classic_walk(g: KnowledgeGraph, entity: int, rng: random.Random, cfg: WalkConfig, state: list[int]) -> Walk:
    tokens = [entity]
    current = entity
    for _ in range(cfg.depth):
        if g.is_literal_id(current):
            break
        edges = _forward_edges(g, current, cfg.include_literals, state)
        if not edges:
            break
        p, o = edges[rng.randrange(len(edges))]
        tokens.extend([p, o])
        current = o
    return Walk(tokens, 0)


def _generate(
    g: KnowledgeGraph,
    ids: list[int],
    cfg: WalkConfig,
    step: Callable[..., Walk],
    workers: int,
) -> tuple[list[Walk], int]:
    def per_entity(entity: int) -> tuple[list[Walk], int]:
        state = [0]
        walks = [
            step(g, entity, _walk_rng(cfg.seed, entity, k), cfg, state)
            for k in range(cfg.walks_per_entity)
        ]
        return walks, state[0]

    if workers <= 1 or len(ids) <= 1:
        results = [per_entity(i) for i in ids]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(per_entity, ids))
    walks = [w for batch, _ in results for w in batch]
    lookups = sum(n for _, n in results)
    return walks, lookups


def generate_light_walks(
    g: KnowledgeGraph,
    entities: Iterable[str | int],
    cfg: WalkConfig | None = None,
    *,
    workers: int = 1,
) -> WalkCorpus:
    """Generate ``cfg.walks_per_entity`` bidirectional walks around each
    entity of interest. Entities not present in the graph are recorded in
    ``missing_entities`` (with a warning) and produce no walks."""
    cfg = cfg or WalkConfig(strategy="light")
    if cfg.strategy != "light":
        raise ValueError("generate_light_walks needs cfg.strategy == 'light'")
    missing: list[str] = []
    ids = _resolve_entities(g, entities, missing)
    walks, lookups = _generate(g, ids, cfg, _light_walk, workers)
    return WalkCorpus(walks, ids, cfg, graph=g, missing_entities=missing, adjacency_lookups=lookups)


def generate_classic_walks(
    g: KnowledgeGraph,
    entities: Iterable[str | int] | None = None,
    cfg: WalkConfig | None = None,
    *,
    workers: int = 1,
) -> WalkCorpus:
    """Generate forward-only walks. Without an explicit entity collection,
    every subject node of the graph is walked."""
    cfg = cfg or WalkConfig(strategy="classic")
    if cfg.strategy != "classic":
        raise ValueError("generate_classic_walks needs cfg.strategy == 'classic'")
    missing: list[str] = []
    ids = g.subject_ids() if entities is None else _resolve_entities(g, entities, missing)
    walks, lookups = _generate(g, ids, cfg, _classic_walk, workers)
    return WalkCorpus(walks, ids, cfg, graph=g, missing_entities=missing, adjacency_lookups=lookups)


def write_corpus(corpus: WalkCorpus, path: str | Path) -> int:
    """Write one walk per line, tokens space-separated and resolved to their
    resource strings (whitespace/percent escaped). ``.gz`` paths are
    compressed. Returns the number of lines written."""
    if corpus.graph is None:
        raise ValueError("corpus has no backing graph to resolve tokens")
    resolve = corpus.graph.resolve
    with open_text_write(path) as fh:
        for walk in corpus.walks:
            fh.write(" ".join(escape_token(resolve(t)) for t in walk.tokens))
            fh.write("\n")
    return len(corpus.walks)


def read_corpus_tokens(path: str | Path) -> list[list[str]]:
    """Read a corpus file back into lists of token strings."""
    sentences: list[list[str]] = []
    with open_text_read(path) as fh:
        for line in fh:
            tokens = line.split()  # escaping guarantees no whitespace inside tokens
            if tokens:
                sentences.append([unescape_token(t) for t in tokens])
    return sentences


def read_corpus(
    path: str | Path,
    graph: KnowledgeGraph,
    *,
    entities: Iterable[str | int] = (),
    config: WalkConfig | None = None,
) -> WalkCorpus:
    """Re-intern a corpus file against ``graph``. Anchors are recovered as the
    first occurrence of an entity-of-interest token (0 if none is given)."""
    missing: list[str] = []
    ids = _resolve_entities(graph, entities, missing)
    id_set = set(ids)
    walks = []
    for tokens in read_corpus_tokens(path):
        tids = [graph.lookup(t) for t in tokens]
        anchor = next((i for i, t in enumerate(tids) if t in id_set), 0)
        walks.append(Walk(tids, anchor))
    return WalkCorpus(walks, ids, config, graph=graph, missing_entities=missing)
