"""Shared graph builders and walk validators for the test suite."""

from __future__ import annotations

import random
from collections import deque

from kgembed.graph import KnowledgeGraph

PRED = "http://ex/linked"


def build_graph(triples, extra_nodes=()) -> KnowledgeGraph:
    g = KnowledgeGraph()
    for s, p, o in triples:
        g.add_triple(s, p, o)
    for node in extra_nodes:
        g.add_node(node)
    return g.freeze()


def clique_cluster(prefix: str, size: int, pred: str = PRED):
    """Fully connected directed cluster; returns (nodes, triples)."""
    nodes = [f"http://ex/{prefix}{i}" for i in range(size)]
    triples = [(a, pred, b) for a in nodes for b in nodes if a != b]
    return nodes, triples


def two_cluster_fixture(size: int = 6):
    """Two directed cliques joined by one bridge edge; returns
    (graph, cluster_a_nodes, cluster_b_nodes)."""
    nodes_a, triples_a = clique_cluster("a", size)
    nodes_b, triples_b = clique_cluster("b", size)
    bridge = [(nodes_a[0], PRED, nodes_b[0])]
    return build_graph(triples_a + triples_b + bridge), nodes_a, nodes_b


def star_fixture(leaves_per_hub: int = 12):
    """Two hub-and-spoke stars whose hubs are linked; every leaf points at
    its hub. Returns (graph, star_a_leaves, star_b_leaves)."""
    hub_a, hub_b = "http://ex/hubA", "http://ex/hubB"
    leaves_a = [f"http://ex/la{i}" for i in range(leaves_per_hub)]
    leaves_b = [f"http://ex/lb{i}" for i in range(leaves_per_hub)]
    triples = [(leaf, PRED, hub_a) for leaf in leaves_a]
    triples += [(leaf, PRED, hub_b) for leaf in leaves_b]
    triples.append((hub_a, PRED, hub_b))
    return build_graph(triples), leaves_a, leaves_b


def ring_triples(n: int, prefix: str = "http://ex/n"):
    return [(f"{prefix}{i}", PRED, f"{prefix}{(i + 1) % n}") for i in range(n)]


def random_graph(seed: int, n_nodes: int, n_edges: int, n_preds: int = 3) -> KnowledgeGraph:
    rng = random.Random(seed)
    nodes = [f"http://ex/r{i}" for i in range(n_nodes)]
    preds = [f"http://ex/p{i}" for i in range(n_preds)]
    g = KnowledgeGraph()
    for node in nodes:
        g.add_node(node)
    for _ in range(n_edges):
        g.add_triple(rng.choice(nodes), rng.choice(preds), rng.choice(nodes))
    return g.freeze()


# --------------------------------------------------------------------------
# Walk validators (brute-force, independent of the walker internals)
# --------------------------------------------------------------------------


def walk_is_valid_path(g: KnowledgeGraph, tokens) -> bool:
    """Every consecutive (node, predicate, node) window must be a graph edge."""
    if len(tokens) % 2 == 0:
        return False
    edge_set = set(g.triples())
    for i in range(0, len(tokens) - 2, 2):
        if (tokens[i], tokens[i + 1], tokens[i + 2]) not in edge_set:
            return False
    return True


def assert_corpus_valid(g: KnowledgeGraph, corpus, depth: int, light: bool):
    entity_set = set(corpus.entities)
    for walk in corpus.walks:
        assert len(walk.tokens) <= 2 * depth + 1
        assert walk_is_valid_path(g, walk.tokens)
        assert walk.anchor % 2 == 0 and 0 <= walk.anchor < len(walk.tokens)
        assert walk.tokens[walk.anchor] in entity_set
        if not light:
            assert walk.anchor == 0


def bidirectional_neighborhood(g: KnowledgeGraph, entity_ids, depth: int) -> set[int]:
    """Nodes reachable from the entity set within `depth` hops ignoring
    edge direction."""
    seen = set(entity_ids)
    frontier = deque((e, 0) for e in entity_ids)
    while frontier:
        node, dist = frontier.popleft()
        if dist == depth:
            continue
        neighbors = [o for _, o in g.out_edges(node) if not g.is_literal_id(o)]
        neighbors += [s for s, _ in g.in_edges(node)]
        for nxt in neighbors:
            if nxt not in seen:
                seen.add(nxt)
                frontier.append((nxt, dist + 1))
    return seen


def enumerate_light_walks(triples, entity, depth) -> set[tuple]:
    """All token sequences the bidirectional rule can emit for one entity:
    an exhaustive reimplementation of the candidate process used as a test
    oracle. Works on string tokens; literals are assumed absent."""
    out_adj: dict = {}
    in_adj: dict = {}
    for s, p, o in triples:
        out_adj.setdefault(s, []).append((p, o))
        in_adj.setdefault(o, []).append((s, p))
    results: set[tuple] = set()

    def explore(tokens, pred, succ, hops):
        if hops == depth:
            results.add(tuple(tokens))
            return
        head, tail = tokens[0], tokens[-1]
        cand = []
        seen = set()
        for s, p in pred:
            cand.append(((s, p, head), True))
            seen.add((s, p, head))
        for p, o in succ:
            if (tail, p, o) not in seen:
                cand.append(((tail, p, o), False))
        if not cand:
            results.add(tuple(tokens))
            return
        for (s, p, o), backward in cand:
            if backward:
                explore([s, p] + tokens, in_adj.get(s, []), succ, hops + 1)
            else:
                explore(tokens + [p, o], pred, out_adj.get(o, []), hops + 1)

    explore([entity], in_adj.get(entity, []), out_adj.get(entity, []), 0)
    return results
