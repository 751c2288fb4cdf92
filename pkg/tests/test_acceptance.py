"""Acceptance suite: every release criterion as one test printing a PASS or
FAIL line. Run with ``pytest -s tests/test_acceptance.py`` to see the lines."""

import json
import math
import random
import threading
import time
import urllib.parse
import urllib.request
from contextlib import contextmanager

import numpy as np
import pytest

from fixtures import (
    assert_corpus_valid,
    bidirectional_neighborhood,
    build_graph,
    random_graph,
    ring_triples,
    star_fixture,
    two_cluster_fixture,
)
from kgembed.cli import main
from kgembed.eval_harness import knn_cv, regression_cv, shuffled_folds, walk_density
from kgembed.graph_io import write_ntriples
from kgembed.service import build_server
from kgembed.trainer import TrainConfig, load_model, save_model, sgns_gradient, sgns_loss, train
from kgembed.vector_ops import cosine, harmonic_mean, nearest_neighbors, pearson, spearman
from kgembed.walker import WalkConfig, generate_classic_walks, generate_light_walks


@contextmanager
def acceptance(name: str):
    try:
        yield
    except BaseException:
        print(f"[acceptance] {name}: FAIL")
        raise
    print(f"[acceptance] {name}: PASS")


def cluster_cosine_means(model, nodes_a, nodes_b):
    entities = nodes_a + nodes_b
    intra, inter = [], []
    for i, a in enumerate(entities):
        for b in entities[i + 1 :]:
            score = cosine(model.vector(a), model.vector(b))
            (intra if (a in nodes_a) == (b in nodes_a) else inter).append(score)
    return float(np.mean(intra)), float(np.mean(inter))


def knn_accuracy(model, nodes_a, nodes_b, seed=0):
    entities = [e for e in nodes_a + nodes_b if e in model.vocabulary]
    labels = ["a" if e in nodes_a else "b" for e in entities]
    x = np.stack([model.vector(e) for e in entities]).astype(np.float64)
    accuracy, _ = knn_cv(x, labels, k=3, folds=10, seed=seed)
    return accuracy


# --------------------------------------------------------------------------
# Shared heavyweight fixtures
# --------------------------------------------------------------------------


@pytest.fixture(scope="module")
def ring_graph():
    """50k-node directed ring: every node has in- and out-degree 1, so no
    walk ever hits a dead end."""
    g = build_graph(ring_triples(50_000))
    return g


@pytest.fixture(scope="module")
def cluster_models():
    """Light and classic SG models over the 24-entity two-cluster fixture at
    the semantic-ordering criterion's settings (dim 50, n=100, d=4)."""
    graph, nodes_a, nodes_b = two_cluster_fixture(size=12)
    entities = nodes_a + nodes_b
    train_cfg = TrainConfig(mode="sg", dimension=50, seed=17)
    light_cfg = WalkConfig(walks_per_entity=100, depth=4, strategy="light", seed=17)
    classic_cfg = WalkConfig(walks_per_entity=100, depth=4, strategy="classic", seed=17)
    light = generate_light_walks(graph, entities, light_cfg)
    classic = generate_classic_walks(graph, entities, classic_cfg)
    light_model = train(light.sentences(), train_cfg)
    classic_model = train(classic.sentences(), train_cfg)
    return graph, nodes_a, nodes_b, light_model, classic_model


def test_criterion_1_walk_validity_suite():
    with acceptance("1 walk-validity (10 random graphs, light and classic)"):
        started = time.perf_counter()
        rng = random.Random(99)
        for trial in range(10):
            nodes = rng.randrange(50, 201)
            g = random_graph(seed=trial, n_nodes=nodes, n_edges=3 * nodes)
            entities = [f"http://ex/r{rng.randrange(nodes)}" for _ in range(10)]
            depth = rng.choice([2, 3, 4])
            light = generate_light_walks(
                g, entities, WalkConfig(walks_per_entity=5, depth=depth, seed=trial)
            )
            assert_corpus_valid(g, light, depth=depth, light=True)
            classic = generate_classic_walks(
                g, entities, WalkConfig(walks_per_entity=5, depth=depth, strategy="classic", seed=trial)
            )
            assert_corpus_valid(g, classic, depth=depth, light=False)
        elapsed = time.perf_counter() - started
        assert elapsed < 10.0, f"walk validity took {elapsed:.1f}s"


def test_criterion_2_locality_suite():
    with acceptance("2 locality (light walks stay in the d-hop neighborhood)"):
        for trial in range(10):
            nodes = 60 + 14 * trial
            g = random_graph(seed=100 + trial, n_nodes=nodes, n_edges=3 * nodes)
            entities = [f"http://ex/r{i}" for i in range(0, nodes, max(1, nodes // 8))]
            depth = 3
            corpus = generate_light_walks(
                g, entities, WalkConfig(walks_per_entity=6, depth=depth, seed=trial)
            )
            allowed = bidirectional_neighborhood(g, corpus.entities, depth)
            for walk in corpus.walks:
                assert set(walk.tokens[0::2]) <= allowed  # exact containment


def test_criterion_3_linear_scaling(ring_graph):
    with acceptance("3 linear scaling in the number of entities of interest"):
        started = time.perf_counter()
        sizes = [10, 20, 40, 80]
        spread = [f"http://ex/n{i * 555}" for i in range(max(sizes))]
        cfg = WalkConfig(walks_per_entity=100, depth=4, seed=8)
        generate_light_walks(ring_graph, spread[:10], cfg)  # warm-up
        times, lookups = [], []
        for m in sizes:
            best = math.inf
            count = None
            for _ in range(2):
                t0 = time.perf_counter()
                corpus = generate_light_walks(ring_graph, spread[:m], cfg)
                best = min(best, time.perf_counter() - t0)
                count = corpus.adjacency_lookups
            times.append(best)
            lookups.append(count)
        # adjacency lookups are exactly proportional to |V_I|
        for m, count in zip(sizes, lookups):
            assert count * sizes[0] == lookups[0] * m, (sizes, lookups)
        # wall clock fits a line with R^2 >= 0.95
        slope, intercept = np.polyfit(sizes, times, 1)
        predicted = slope * np.asarray(sizes) + intercept
        residual = float(((np.asarray(times) - predicted) ** 2).sum())
        total = float(((np.asarray(times) - np.mean(times)) ** 2).sum())
        r_squared = 1.0 - residual / total
        assert r_squared >= 0.95, f"R^2={r_squared:.4f} times={times}"
        elapsed = time.perf_counter() - started
        assert elapsed < 120.0, f"scaling check took {elapsed:.1f}s"


def test_criterion_4_gradient_check():
    with acceptance("4 SGNS gradient matches central finite differences"):
        started = time.perf_counter()
        rng = np.random.default_rng(123)
        for _ in range(100):
            dim = 10
            k = int(rng.integers(0, 9))
            center = rng.normal(scale=1.5, size=dim)
            context = rng.normal(scale=1.5, size=dim)
            negatives = rng.normal(scale=1.5, size=(k, dim))

            lr = 0.5
            nc, nx, nn = sgns_gradient(center, context, negatives, lr=lr)
            parts = [(center - nc) / lr, (context - nx) / lr]
            if k:
                parts.append(((negatives - nn) / lr).ravel())
            analytic = np.concatenate(parts)

            theta = np.concatenate([center, context, negatives.ravel()])

            def unpack(t):
                return t[:dim], t[dim : 2 * dim], t[2 * dim :].reshape(-1, dim)

            h = 1e-6
            numeric = np.empty_like(theta)
            for i in range(theta.shape[0]):
                plus, minus = theta.copy(), theta.copy()
                plus[i] += h
                minus[i] -= h
                numeric[i] = (sgns_loss(*unpack(plus)) - sgns_loss(*unpack(minus))) / (2 * h)
            denom = max(float(np.linalg.norm(numeric)), 1e-12)
            assert float(np.linalg.norm(analytic - numeric)) / denom < 1e-5
        elapsed = time.perf_counter() - started
        assert elapsed < 5.0, f"gradient check took {elapsed:.1f}s"


def test_criterion_5_semantic_ordering(cluster_models):
    with acceptance("5 semantic ordering: light and classic separate the clusters"):
        started = time.perf_counter()
        _, nodes_a, nodes_b, light_model, classic_model = cluster_models
        for model in (light_model, classic_model):
            intra, inter = cluster_cosine_means(model, nodes_a, nodes_b)
            assert intra > inter, (intra, inter)
        acc_light = knn_accuracy(light_model, nodes_a, nodes_b, seed=17)
        acc_classic = knn_accuracy(classic_model, nodes_a, nodes_b, seed=17)
        assert acc_light >= 0.9, acc_light
        assert acc_classic >= 0.9, acc_classic
        assert abs(acc_light - acc_classic) <= 0.1
        elapsed = time.perf_counter() - started
        assert elapsed < 60.0, f"semantic ordering took {elapsed:.1f}s"


def test_criterion_6_density_performance_direction():
    with acceptance("6 denser walk subgraph does not underperform the sparse one"):
        dense_graph, dense_a, dense_b = two_cluster_fixture(size=12)
        sparse_graph, sparse_a, sparse_b = star_fixture(leaves_per_hub=12)
        assert len(dense_a + dense_b) == len(sparse_a + sparse_b)  # matched |V_I|
        wins = 0
        for seed in range(5):
            walk_cfg = WalkConfig(walks_per_entity=30, depth=4, seed=seed)
            train_cfg = TrainConfig(mode="sg", dimension=32, epochs=2, negatives=10, seed=seed)
            dense_corpus = generate_light_walks(dense_graph, dense_a + dense_b, walk_cfg)
            sparse_corpus = generate_light_walks(sparse_graph, sparse_a + sparse_b, walk_cfg)
            dense_report = walk_density(dense_corpus)
            sparse_report = walk_density(sparse_corpus)
            assert dense_report.density > sparse_report.density
            dense_model = train(dense_corpus.sentences(), train_cfg)
            sparse_model = train(sparse_corpus.sentences(), train_cfg)
            acc_dense = knn_accuracy(dense_model, dense_a, dense_b, seed=seed)
            acc_sparse = knn_accuracy(sparse_model, sparse_a, sparse_b, seed=seed)
            wins += acc_dense >= acc_sparse
        assert wins >= 3, f"dense won only {wins}/5 seeds"


def test_criterion_7_metric_oracles():
    with acceptance("7 metric implementations match their oracles"):
        rng = np.random.default_rng(5)
        # pearson against the direct sum formula
        for _ in range(10):
            xs = rng.normal(size=20)
            ys = rng.normal(size=20)
            mx, my = xs.mean(), ys.mean()
            direct = float(
                ((xs - mx) * (ys - my)).sum()
                / math.sqrt(((xs - mx) ** 2).sum() * ((ys - my) ** 2).sum())
            )
            assert abs(pearson(xs, ys) - direct) < 1e-12
        # spearman against the exact rank-difference formula (no ties)
        for _ in range(10):
            n = 15
            ys = rng.permutation(n)
            xs = np.arange(n)
            d2 = float(((xs - ys) ** 2).sum())
            expected = 1 - 6 * d2 / (n * (n * n - 1))
            assert abs(spearman(xs, ys) - expected) < 1e-12
        # harmonic mean closed form
        assert abs(harmonic_mean(0.3, 0.6) - 0.4) < 1e-12
        # cosine closed form
        assert abs(cosine([1.0, 1.0], [1.0, 0.0]) - 1 / math.sqrt(2)) < 1e-8
        # k-NN against a brute-force scan
        x = rng.normal(size=(40, 6))
        labels = [f"c{i % 2}" for i in range(40)]
        accuracy, predictions = knn_cv(x, labels, k=3, folds=5, seed=1)
        from kgembed.eval_harness import stratified_folds

        assignment = stratified_folds(labels, 5, seed=1)
        for i, predicted in enumerate(predictions):
            train_idx = [j for j, a in enumerate(assignment) if a != assignment[i]]
            scored = []
            for j in train_idx:
                sim = float(
                    x[i] @ x[j] / (np.linalg.norm(x[i]) * np.linalg.norm(x[j]))
                )
                scored.append((1 - sim, j))
            scored.sort(key=lambda dj: (dj[0], dj[1]))
            top = [labels[j] for _, j in scored[:3]]
            counts = {y: top.count(y) for y in set(top)}
            best = max(counts.values())
            tied = {y for y, c in counts.items() if c == best}
            assert predicted == next(y for y in top if y in tied)
        # ridge regression against explicit normal equations
        x = rng.normal(size=(30, 10))
        y = rng.normal(size=30)
        _, got = regression_cv(x, y, folds=5, ridge=0.25, seed=2)
        assignment = shuffled_folds(30, 5, seed=2)
        for fold in range(5):
            test = [i for i, a in enumerate(assignment) if a == fold]
            train_idx = [i for i, a in enumerate(assignment) if a != fold]
            xtr, ytr = x[train_idx], y[train_idx]
            mu, sd = xtr.mean(0), xtr.std(0)
            sd = np.where(sd == 0, 1.0, sd)
            beta = np.linalg.inv(((xtr - mu) / sd).T @ ((xtr - mu) / sd) + 0.25 * np.eye(10)) @ (
                (xtr - mu) / sd
            ).T @ (ytr - ytr.mean())
            expected = ((x[test] - mu) / sd) @ beta + ytr.mean()
            assert np.abs(got[test] - expected).max() < 1e-8


def test_criterion_8_pipeline_determinism(tmp_path):
    with acceptance("8 walk -> train -> eval is byte-identical across runs"):
        graph, nodes_a, nodes_b = two_cluster_fixture(size=12)
        graph_file = tmp_path / "graph.nt"
        write_ntriples(graph.resolved_triples(), graph_file)
        entities_file = tmp_path / "entities.txt"
        entities_file.write_text("".join(f"{e}\n" for e in nodes_a + nodes_b))
        gold_file = tmp_path / "labels.tsv"
        gold_file.write_text(
            "".join(f"{e}\t{'a' if e in nodes_a else 'b'}\n" for e in nodes_a + nodes_b)
        )
        outputs = []
        for run in ("one", "two"):
            run_dir = tmp_path / run
            run_dir.mkdir()
            corpus = run_dir / "corpus.txt.gz"
            model = run_dir / "model.txt"
            results = run_dir / "results.csv"
            assert main(
                ["walk", "--graph", str(graph_file), "--entities", str(entities_file),
                 "--walks", "30", "--depth", "3", "--seed", "5", "--workers", "1",
                 "--out", str(corpus)]
            ) == 0
            assert main(
                ["train", "--corpus", str(corpus), "--dim", "16", "--epochs", "2",
                 "--seed", "5", "--workers", "1", "--out", str(model)]
            ) == 0
            assert main(
                ["eval", "--model", str(model), "--task", "classify",
                 "--gold", str(gold_file), "--seed", "5", "--out", str(results)]
            ) == 0
            outputs.append(
                (corpus.read_bytes()[10:], model.read_bytes(), results.read_bytes())
            )  # skip the gzip header bytes that embed the (identical) name anyway
        assert outputs[0] == outputs[1]


def test_criterion_9_model_size_claim(ring_graph, tmp_path):
    with acceptance("9 local model is small; full-graph model is >= 100x larger"):
        dim = 50
        light_entities = [f"http://ex/n{i}" for i in range(100)]
        light_corpus = generate_light_walks(
            ring_graph, light_entities, WalkConfig(walks_per_entity=100, depth=4, seed=4)
        )
        light_model = train(
            light_corpus.sentences(),
            TrainConfig(mode="sg", dimension=dim, epochs=1, negatives=5, seed=4),
        )
        light_path = tmp_path / "light_model.txt"
        save_model(light_model, light_path)

        classic_corpus = generate_classic_walks(
            ring_graph, cfg=WalkConfig(walks_per_entity=1, depth=4, strategy="classic", seed=4)
        )
        classic_model = train(
            classic_corpus.sentences(),
            TrainConfig(mode="sg", dimension=dim, epochs=1, window=2, negatives=2, seed=4),
        )
        classic_path = tmp_path / "classic_model.txt"
        save_model(classic_model, classic_path)

        light_size = light_path.stat().st_size
        classic_size = classic_path.stat().st_size
        assert len(classic_model.vocabulary) > 50_000  # full graph coverage
        assert light_size < 1_000_000, f"light model is {light_size} bytes"
        assert classic_size >= 100 * light_size, (light_size, classic_size)


def test_criterion_10_service_consistency(cluster_models, tmp_path):
    with acceptance("10 service responses equal values computed from the model file"):
        _, nodes_a, nodes_b, light_model, _ = cluster_models
        model_path = tmp_path / "model.txt"
        save_model(light_model, model_path)
        loaded = load_model(model_path)  # the same load path the CLI uses
        server = build_server(loaded, "127.0.0.1", 0, model_id="acceptance")
        thread = threading.Thread(target=server.serve_forever, daemon=True)
        thread.start()
        try:
            port = server.server_address[1]

            def get(path, params):
                qs = urllib.parse.urlencode(params)
                with urllib.request.urlopen(f"http://127.0.0.1:{port}{path}?{qs}", timeout=10) as r:
                    return json.loads(r.read())

            left, right = nodes_a[0], nodes_b[0]
            body = get("/similarity", {"left": left, "right": right})
            assert body["similarity"] == cosine(loaded.vector(left), loaded.vector(right))

            body = get("/closest-concepts", {"concept": left, "top": 7})
            expected = nearest_neighbors(loaded, left, 7)
            assert [(n["concept"], n["score"]) for n in body["neighbors"]] == expected

            body = get("/get-vector", {"concept": right})
            assert body["vector"] == [float(x) for x in loaded.vector(right)]
        finally:
            server.shutdown()
            server.server_close()
            thread.join(timeout=5)
