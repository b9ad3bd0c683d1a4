"""Document vectors for titles, abstracts and keywords (bag-of-words flavor).

Each publication document gets a vector trained to predict words sampled
uniformly from it, against negative-sampled words, reusing the pair trainer
from the embed module. Word order plays no role. Identical documents share
one trained vector, which also makes the output exactly equivariant under
shuffling the document list.
"""

import hashlib
from dataclasses import dataclass

import numpy as np

from .corpus import tokenize_text
from .embed import NegSamplingConfig, _uniform_rows, train_pairs
from .fusion import structural_similarity


@dataclass
class DocVectorTable:
    vectors: np.ndarray   # one row per input document
    vocab: dict           # token -> corpus frequency (post min_count)
    dim: int
    epochs: int
    negatives: int
    min_count: int
    seed: int
    objectives: np.ndarray


def build_doc_corpus(block):
    """Token list per pub: title + abstract + keywords through tokenize_text."""
    return [tokenize_text(p.title, p.abstract, p.keywords) for p in block.pubs]


def _content_key(tokens):
    digest = hashlib.sha256(" ".join(tokens).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def train_doc_vectors(docs, dim=100, epochs=20, negatives=5, min_count=2,
                      seed=0, mode="deterministic", threads=1):
    """Train one vector per document; empty documents keep their seeded init.

    Documents are deduplicated on token content and processed in canonical
    (sorted) order with per-content random streams, so the table depends
    only on the multiset of documents, not their order.
    """
    counts = {}
    for toks in docs:
        for t in toks:
            counts[t] = counts.get(t, 0) + 1
    vocab = {t: c for t, c in sorted(counts.items()) if c >= min_count}
    word_id = {t: k for k, t in enumerate(vocab)}

    filtered = [tuple(t for t in toks if t in word_id) for toks in docs]
    unique = sorted(set(filtered))
    slot = {content: k for k, content in enumerate(unique)}

    vecs = np.empty((len(unique), dim))
    for content, k in slot.items():
        vecs[k] = _uniform_rows(1, dim, seed, (_content_key(content), 3))[0]

    trainable = [content for content in unique if content]
    objectives = np.zeros(0)
    if trainable and vocab and epochs > 0:
        centers = [[] for _ in range(epochs)]
        contexts = [[] for _ in range(epochs)]
        for content in trainable:
            ids = np.array([word_id[t] for t in content])
            rng = np.random.default_rng(
                np.random.SeedSequence(seed, spawn_key=(_content_key(content), 4))
            )
            picks = rng.integers(0, len(ids), size=(epochs, len(ids)))
            for e in range(epochs):
                centers[e].extend([slot[content]] * len(ids))
                contexts[e].extend(ids[picks[e]])
        centers = np.array(centers, dtype=np.int64)
        contexts = np.array(contexts, dtype=np.int64)

        freq = np.zeros(len(vocab))
        for content in filtered:
            for t in content:
                freq[word_id[t]] += 1
        cfg = NegSamplingConfig.from_frequencies(freq, negatives)
        word_init = np.zeros((len(vocab), dim))
        vecs, _, objectives = train_pairs(
            centers, contexts, vecs, word_init, cfg,
            epochs=epochs, seed=seed, mode=mode, threads=threads,
        )

    table = np.empty((len(docs), dim))
    for i, content in enumerate(filtered):
        table[i] = vecs[slot[content]]
    return DocVectorTable(
        vectors=table, vocab=vocab, dim=dim, epochs=epochs,
        negatives=negatives, min_count=min_count, seed=seed, objectives=objectives,
    )


def semantic_similarity(table):
    """Cosine matrix over document vectors; conventions match the structural one."""
    return structural_similarity(table.vectors)
