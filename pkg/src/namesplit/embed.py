"""Skip-gram training with negative sampling over publication context pairs.

One generic pair trainer backs three users: per-meta-path publication
embeddings (pub -> pub pairs), the token-level model that produces initial
publication vectors from attribute token bags, and the document-vector
model in the semantic module (doc -> word pairs). The inner loop is a
numba kernel; the deterministic mode runs it serially and is bit
reproducible, the parallel mode shards pairs hogwild-style across threads
and gives up bit determinism only.
"""

import math
import struct
import zlib
from dataclasses import dataclass

import numba
import numpy as np
from numba import njit, prange

from .hetnet import build_hetnet


class DivergenceError(RuntimeError):
    """A non-finite value appeared during training."""


@dataclass
class NegSamplingConfig:
    """Noise distribution for negative draws: unigram frequency ** power."""

    negatives: int
    probs: np.ndarray  # sums to 1 over entries with positive frequency

    @classmethod
    def from_frequencies(cls, freq, negatives=5, power=0.75):
        if negatives < 1:
            raise ValueError("negatives must be >= 1")
        freq = np.asarray(freq, dtype=np.float64)
        probs = np.where(freq > 0, freq, 0.0) ** power
        total = probs.sum()
        if total <= 0:
            raise ValueError("negative sampling needs at least one positive frequency")
        return cls(negatives=negatives, probs=probs / total)


@dataclass
class EmbeddingTable:
    path_name: str
    dim: int
    vectors: np.ndarray          # center vectors, one row per pub
    context_vectors: np.ndarray  # training-internal output table
    seed: int
    source: str


def draw_negatives(cfg, positive, rng, max_retry=10):
    """Draw T indices i.i.d. from the noise distribution.

    Draws equal to the positive context are re-drawn up to max_retry times
    and then kept, so the routine always returns exactly T indices.
    """
    cum = np.cumsum(cfg.probs)
    out = np.empty(cfg.negatives, dtype=np.int64)
    for t in range(cfg.negatives):
        pick = int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))
        tries = 0
        while pick == positive and tries < max_retry:
            pick = int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))
            tries += 1
        out[t] = pick
    return out


def _draw_negative_block(probs, contexts, epochs, negatives, rng, max_retry=10):
    """(epochs, n_pairs, T) negatives, re-drawn against each pair's context."""
    cum = np.cumsum(probs)
    n = len(contexts)
    negs = np.searchsorted(cum, rng.random((epochs, n, negatives)) * cum[-1], side="right")
    clash = negs == contexts[None, :, None]
    for _ in range(max_retry):
        if not clash.any():
            break
        redraw = np.searchsorted(cum, rng.random(int(clash.sum())) * cum[-1], side="right")
        negs[clash] = redraw
        clash = negs == contexts[None, :, None]
    return negs.astype(np.int64)


@njit(cache=True)
def _sgd_epochs(centers, contexts, negs, C, K, lr0, lr_min, objectives):
    """Sequential SGD ascent on log sig(zi.zc) + sum log sig(-zi.zt).

    All updates for one pair use the pre-update rows. Returns -1, or the
    global step at which a non-finite objective appeared.
    """
    n_epochs, n_pairs = centers.shape
    n_neg = negs.shape[2]
    dim = C.shape[1]
    total = n_epochs * n_pairs
    buf = np.empty(dim, dtype=np.float64)
    step = 0
    for e in range(n_epochs):
        obj = 0.0
        for p in range(n_pairs):
            lr = lr0 * (1.0 - step / total)
            if lr < lr_min:
                lr = lr_min
            i = centers[e, p]
            c = contexts[e, p]
            dot = 0.0
            for k in range(dim):
                dot += C[i, k] * K[c, k]
            if dot > 500.0:
                dot = 500.0
            elif dot < -500.0:
                dot = -500.0
            g = 1.0 / (1.0 + math.exp(-dot))
            pair_obj = math.log(g)
            err = lr * (1.0 - g)
            for k in range(dim):
                buf[k] = err * K[c, k]
            for k in range(dim):
                K[c, k] += err * C[i, k]
            for t in range(n_neg):
                u = negs[e, p, t]
                dot = 0.0
                for k in range(dim):
                    dot += C[i, k] * K[u, k]
                if dot > 500.0:
                    dot = 500.0
                elif dot < -500.0:
                    dot = -500.0
                g = 1.0 / (1.0 + math.exp(-dot))
                pair_obj += math.log(1.0 - g + 1e-308)
                err = -lr * g
                for k in range(dim):
                    buf[k] += err * K[u, k]
                for k in range(dim):
                    K[u, k] += err * C[i, k]
            for k in range(dim):
                C[i, k] += buf[k]
            if not pair_obj == pair_obj:
                return step
            obj += pair_obj
            step += 1
        objectives[e] = obj / n_pairs
    return -1


@njit(cache=True, parallel=True)
def _sgd_epochs_hogwild(centers, contexts, negs, C, K, lr0, lr_min, objectives):
    """Pair-sharded variant: rows race benignly, bit determinism is forfeit."""
    n_epochs, n_pairs = centers.shape
    n_neg = negs.shape[2]
    dim = C.shape[1]
    total = n_epochs * n_pairs
    for e in range(n_epochs):
        obj = 0.0
        for p in prange(n_pairs):
            lr = lr0 * (1.0 - (e * n_pairs + p) / total)
            if lr < lr_min:
                lr = lr_min
            buf = np.empty(dim, dtype=np.float64)
            i = centers[e, p]
            c = contexts[e, p]
            dot = 0.0
            for k in range(dim):
                dot += C[i, k] * K[c, k]
            if dot > 500.0:
                dot = 500.0
            elif dot < -500.0:
                dot = -500.0
            g = 1.0 / (1.0 + math.exp(-dot))
            pair_obj = math.log(g)
            err = lr * (1.0 - g)
            for k in range(dim):
                buf[k] = err * K[c, k]
            for k in range(dim):
                K[c, k] += err * C[i, k]
            for t in range(n_neg):
                u = negs[e, p, t]
                dot = 0.0
                for k in range(dim):
                    dot += C[i, k] * K[u, k]
                if dot > 500.0:
                    dot = 500.0
                elif dot < -500.0:
                    dot = -500.0
                g = 1.0 / (1.0 + math.exp(-dot))
                pair_obj += math.log(1.0 - g + 1e-308)
                err = -lr * g
                for k in range(dim):
                    buf[k] += err * K[u, k]
                for k in range(dim):
                    K[u, k] += err * C[i, k]
            for k in range(dim):
                C[i, k] += buf[k]
            obj += pair_obj
        objectives[e] = obj / n_pairs
    return -1


def train_pairs(
    centers,
    contexts,
    center_init,
    context_init,
    cfg,
    epochs=5,
    lr0=0.025,
    lr_min=1e-4,
    seed=0,
    mode="deterministic",
    threads=1,
):
    """Run SGD over (center, context) pairs; returns (C, K, per-epoch objective).

    centers/contexts are either flat arrays (the same pairs every epoch) or
    (epochs, n) arrays giving each epoch its own pair sequence. Negatives
    are pre-drawn from cfg for the whole run, so a fixed seed in
    deterministic mode reproduces the tables bit for bit.
    """
    centers = np.asarray(centers, dtype=np.int64)
    contexts = np.asarray(contexts, dtype=np.int64)
    if centers.ndim == 1:
        centers = np.ascontiguousarray(np.broadcast_to(centers, (epochs, len(centers))))
        contexts = np.ascontiguousarray(np.broadcast_to(contexts, (epochs, len(contexts))))
    if centers.shape != contexts.shape or centers.size == 0:
        raise ValueError("centers and contexts must be equal-shaped and nonempty")
    epochs = centers.shape[0]

    C = np.array(center_init, dtype=np.float64, copy=True)
    K = np.array(context_init, dtype=np.float64, copy=True)
    objectives = np.zeros(epochs, dtype=np.float64)
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(41650973,)))
    negs = _draw_negative_block(cfg.probs, contexts.ravel(), 1, cfg.negatives, rng)
    negs = negs.reshape(centers.shape + (cfg.negatives,))

    if mode == "parallel":
        numba.set_num_threads(min(max(1, threads), numba.config.NUMBA_NUM_THREADS))
        bad = _sgd_epochs_hogwild(centers, contexts, negs, C, K, lr0, lr_min, objectives)
    else:
        bad = _sgd_epochs(centers, contexts, negs, C, K, lr0, lr_min, objectives)
    if bad >= 0:
        raise DivergenceError(f"non-finite update at training step {int(bad)}")
    if not (np.isfinite(C).all() and np.isfinite(K).all()):
        raise DivergenceError("non-finite entries in trained tables")
    return C, K, objectives


def _uniform_rows(n, dim, seed, spawn_key):
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=spawn_key))
    return (rng.random((n, dim)) - 0.5) / dim


def init_vectors(block, path, dim=100, seed=0, net=None, epochs=5, negatives=5):
    """Initial pub vectors: mean of token vectors from a small token skip-gram.

    The token corpus is the per-pub attribute bag for the path's interior
    type (co-author names for PAP, org words for POP, ...). Pubs with an
    empty bag get a seeded uniform row in [-0.5/dim, 0.5/dim].
    """
    if dim < 2:
        raise ValueError("dim must be >= 2")
    if net is None:
        net = build_hetnet(block)
    tag = zlib.crc32(path.name.encode())
    bags = net.token_bags(path.interior)
    vocab = sorted({tok for bag in bags for tok in bag})
    tok_id = {t: k for k, t in enumerate(vocab)}

    out = _uniform_rows(len(block), dim, seed, (tag, 11))
    if not vocab:
        return out

    freq = np.zeros(len(vocab))
    cen, ctx = [], []
    for bag in bags:
        ids = [tok_id[t] for t in bag]
        for a in ids:
            freq[a] += 1
        for x in range(len(ids)):
            for y in range(len(ids)):
                if x != y and ids[x] != ids[y]:
                    cen.append(ids[x])
                    ctx.append(ids[y])

    tok_vecs = _uniform_rows(len(vocab), dim, seed, (tag, 12))
    if cen:
        cfg = NegSamplingConfig.from_frequencies(freq, negatives)
        tok_vecs, _, _ = train_pairs(
            cen, ctx, tok_vecs, np.zeros_like(tok_vecs), cfg,
            epochs=epochs, seed=seed ^ tag,
        )
    for i, bag in enumerate(bags):
        if bag:
            out[i] = tok_vecs[[tok_id[t] for t in bag]].mean(axis=0)
    return out


def train_skipgram(
    pairs,
    init,
    cfg,
    epochs=5,
    lr0=0.025,
    lr_min=1e-4,
    seed=0,
    mode="deterministic",
    threads=1,
    path_name="",
):
    """Train pub embeddings from a context-pair stream; returns the center table.

    pairs is (centers, contexts) index arrays or an iterable of tuples. The
    center table starts from the initial vectors, the context table from
    zeros; zero epochs return the initialization untouched.
    """
    if isinstance(pairs, tuple) and len(pairs) == 2:
        centers, contexts = pairs
    else:
        listed = list(pairs)
        centers = np.array([p[0] for p in listed], dtype=np.int64)
        contexts = np.array([p[1] for p in listed], dtype=np.int64)
    init = np.asarray(init, dtype=np.float64)
    if epochs == 0 or len(centers) == 0:
        # no-neighbor blocks reach here with an empty stream; the contract
        # is the same as zero epochs: hand back the initialization
        return EmbeddingTable(
            path_name=path_name, dim=init.shape[1], vectors=init.copy(),
            context_vectors=np.zeros_like(init), seed=seed, source="init",
        ), np.zeros(0)
    C, K, objectives = train_pairs(
        centers, contexts, init, np.zeros_like(init), cfg,
        epochs=epochs, lr0=lr0, lr_min=lr_min, seed=seed, mode=mode, threads=threads,
    )
    table = EmbeddingTable(
        path_name=path_name, dim=init.shape[1], vectors=C,
        context_vectors=K, seed=seed, source="skipgram",
    )
    return table, objectives


def softmax_context_probs(table, center):
    """Full-softmax context distribution (reference only, <= 200 rows)."""
    n = table.vectors.shape[0]
    if n > 200:
        raise ValueError("full softmax evaluator is restricted to <= 200 pubs")
    scores = table.context_vectors @ table.vectors[center]
    scores -= scores.max()
    e = np.exp(scores)
    return e / e.sum()


MAGIC = b"NSEM"
VERSION = 1


def save_table(vectors, ids, path):
    """Binary table: magic, version, count, dim, then id + float32 LE rows."""
    arr = np.asarray(vectors, dtype="<f4")
    if arr.ndim != 2 or arr.shape[0] != len(ids):
        raise ValueError("vectors must be 2-D with one row per id")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<III", VERSION, arr.shape[0], arr.shape[1]))
        for pid, row in zip(ids, arr):
            raw = str(pid).encode("utf-8")
            f.write(struct.pack("<H", len(raw)))
            f.write(raw)
            f.write(row.tobytes())


def load_table(path):
    """Inverse of save_table; returns (ids, float32 vectors)."""
    with open(path, "rb") as f:
        if f.read(4) != MAGIC:
            raise ValueError(f"{path}: bad magic, not an embedding table")
        version, count, dim = struct.unpack("<III", f.read(12))
        if version != VERSION:
            raise ValueError(f"{path}: unsupported table version {version}")
        ids, rows = [], np.empty((count, dim), dtype="<f4")
        for r in range(count):
            (idlen,) = struct.unpack("<H", f.read(2))
            ids.append(f.read(idlen).decode("utf-8"))
            rows[r] = np.frombuffer(f.read(4 * dim), dtype="<f4")
    return ids, rows
