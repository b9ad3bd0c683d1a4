"""Weighted meta-path walks and skip-gram context pairs.

Walks move between publications only; each hop lands on a neighbor of the
current pub in the projected graph with probability proportional to the
projected edge weight. Attribute nodes are implied by the projection and
never recorded.
"""

from dataclasses import dataclass

import numpy as np

from .hetnet import project_metapath


@dataclass
class WalkCorpus:
    path_name: str
    walks: list          # each walk a list of pub indices, first = start pub
    walks_per_node: int
    walk_length: int     # in pub-hops; a full walk holds walk_length + 1 pubs
    window: int
    seed: int


def sample_walks(net, path, walks_per_node=10, walk_length=20, seed=0, window=5, graph=None):
    """Sample walks_per_node weighted walks from every pub along one meta-path.

    Each hop picks the next pub with probability proportional to the
    projected edge weight out of the current pub. Pubs isolated under the
    path yield the single-entry walk [pub]. Walk (node, rep) draws from its
    own generator seeded by (seed, node, rep), so the corpus is reproducible
    and walks could be sampled in parallel without changing it.
    """
    if walks_per_node < 1 or walk_length < 1:
        raise ValueError("walks_per_node and walk_length must be >= 1")
    if graph is None:
        graph = project_metapath(net, path)
    cum = []
    for i in range(graph.n_pubs):
        w = graph.weights[i]
        cum.append(np.cumsum(w) if len(w) else None)

    walks = []
    for node in range(graph.n_pubs):
        for rep in range(walks_per_node):
            rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(node, rep)))
            walk = [node]
            if cum[node] is None:
                walks.append(walk)
                continue
            us = rng.random(walk_length)
            cur = node
            for t in range(walk_length):
                c = cum[cur]
                nxt = int(graph.neighbors[cur][np.searchsorted(c, us[t] * c[-1], side="right")])
                walk.append(nxt)
                cur = nxt
            walks.append(walk)
    return WalkCorpus(
        path_name=path.name,
        walks=walks,
        walks_per_node=walks_per_node,
        walk_length=walk_length,
        window=window,
        seed=seed,
    )


def context_pairs(corpus, window=None):
    """Yield (center, context) pairs within the window of every walk.

    All ordered pairs at positional distance <= window are emitted in walk
    order (centers outer, contexts inner); pairs whose two pubs are the same
    publication are skipped.
    """
    w = corpus.window if window is None else window
    if w < 1:
        raise ValueError("window must be >= 1")
    for walk in corpus.walks:
        n = len(walk)
        for i in range(n):
            for j in range(max(0, i - w), min(n, i + w + 1)):
                if i != j and walk[i] != walk[j]:
                    yield walk[i], walk[j]


def context_pair_arrays(corpus, window=None):
    """Dense int array form of context_pairs, for the trainer."""
    centers, contexts = [], []
    for c, x in context_pairs(corpus, window):
        centers.append(c)
        contexts.append(x)
    return (
        np.asarray(centers, dtype=np.int64).reshape(-1),
        np.asarray(contexts, dtype=np.int64).reshape(-1),
    )


def walk_frequencies(corpus, n_pubs):
    """Occurrence count of every pub across the corpus (negative sampling base)."""
    freq = np.zeros(n_pubs, dtype=np.float64)
    for walk in corpus.walks:
        for p in walk:
            freq[p] += 1
    return freq


def dump_walks(corpus, path):
    with open(path, "w", encoding="utf-8") as f:
        for walk in corpus.walks:
            f.write(" ".join(str(p) for p in walk) + "\n")
