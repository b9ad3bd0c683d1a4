"""Relation-level attention fusion of per-meta-path embeddings.

A shared dense layer scores every per-path embedding table, softmax turns
the scores into fusion weights, and the weighted sum is trained so that the
inner-product sigmoid decoder reproduces the homogeneous co-author
adjacency. The fused table yields the structural cosine similarity matrix.
"""

from dataclasses import dataclass

import numpy as np

from .hetnet import AUTHOR


class DimensionMismatchError(ValueError):
    pass


class DivergenceError(RuntimeError):
    pass


@dataclass
class AttentionParams:
    """Shared scoring parameters: score(z) = q . tanh(W z + b)."""

    W: np.ndarray  # (hidden, dim)
    b: np.ndarray  # (hidden,)
    q: np.ndarray  # (hidden,)

    @classmethod
    def init(cls, dim, hidden=128, seed=0):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(5150211,)))
        bound = float(np.sqrt(6.0 / (dim + hidden)))
        return cls(
            W=rng.uniform(-bound, bound, size=(hidden, dim)),
            b=np.zeros(hidden),
            q=rng.uniform(-bound, bound, size=hidden),
        )


@dataclass
class FusedEmbedding:
    Z: np.ndarray
    alphas: np.ndarray        # softmax fusion weights, one per meta-path
    coefficients: np.ndarray  # raw pre-softmax attention scores
    path_names: tuple


def build_coauthor_adjacency(block, net, truth=None):
    """Binary symmetric A: pubs share a co-author (or a labeled entity).

    Unsupervised default marks A[i, j] = 1 when pubs i and j share at least
    one author attribute node. When ground truth for the block is supplied,
    A instead marks same-entity pairs (training names only).
    """
    n = len(block)
    A = np.zeros((n, n), dtype=np.float64)
    if truth is not None:
        labels = truth.labels_for(block)
        for i in range(n):
            if labels[i] < 0:
                continue
            for j in range(i + 1, n):
                if labels[j] == labels[i]:
                    A[i, j] = A[j, i] = 1.0
        return A
    for pubs in net.attr_pubs[AUTHOR]:
        for a in range(len(pubs)):
            for b in range(a + 1, len(pubs)):
                A[pubs[a], pubs[b]] = A[pubs[b], pubs[a]] = 1.0
    return A


def attention_coefficients(Z_list, params):
    """Raw score per table: mean over pubs of q . tanh(W z + b)."""
    shapes = {Z.shape for Z in Z_list}
    if len(shapes) != 1:
        raise DimensionMismatchError(f"tables disagree on shape: {sorted(shapes)}")
    dim = next(iter(shapes))[1]
    if params.W.shape[1] != dim:
        raise DimensionMismatchError(
            f"W expects dim {params.W.shape[1]}, tables have {dim}"
        )
    return np.array([
        float(np.tanh(Z @ params.W.T + params.b).mean(axis=0) @ params.q)
        for Z in Z_list
    ])


def attention_softmax(w):
    """Softmax with max subtraction; safe for scores like 1000."""
    w = np.asarray(w, dtype=np.float64)
    e = np.exp(w - w.max())
    return e / e.sum()


def fuse_embeddings(Z_list, alphas):
    alphas = np.asarray(alphas, dtype=np.float64)
    if len(alphas) != len(Z_list):
        raise DimensionMismatchError("one weight per table required")
    Z = np.zeros_like(Z_list[0], dtype=np.float64)
    for a, Zn in zip(alphas, Z_list):
        Z += a * Zn
    return Z


def reconstruct_adjacency(Z):
    """Decoded edge probabilities: sigmoid of pairwise inner products."""
    S = Z @ Z.T
    return _sigmoid(S)


def _sigmoid(x):
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _pair_loss_and_grads(Z_list, params, A, rows, cols, want_table_grads=False):
    """Mean BCE over the given pairs plus gradients w.r.t. q, W, b (and tables).

    Everything is closed form: scores s_ij = z_i . z_j with
    z = sum_n alpha_n Z_n and alpha = softmax of the per-table scores.
    """
    m = len(Z_list)
    n, dim = Z_list[0].shape
    hidden = params.b.shape[0]

    T_list = [np.tanh(Zn @ params.W.T + params.b) for Zn in Z_list]  # (n, hidden)
    t_means = np.stack([T.mean(axis=0) for T in T_list])             # (m, hidden)
    w = t_means @ params.q
    alphas = attention_softmax(w)
    Z = fuse_embeddings(Z_list, alphas)

    s = np.einsum("pd,pd->p", Z[rows], Z[cols])
    y = A[rows, cols]
    # stable BCE with logits: max(s,0) - s*y + log1p(exp(-|s|))
    loss = float(np.mean(np.maximum(s, 0.0) - s * y + np.log1p(np.exp(-np.abs(s)))))
    ds = (_sigmoid(s) - y) / len(s)

    # dL/dalpha_n = sum_pairs ds * (Zn_i . z_j + z_i . Zn_j)
    dalpha = np.empty(m)
    for k, Zn in enumerate(Z_list):
        dalpha[k] = float(
            ds @ (np.einsum("pd,pd->p", Zn[rows], Z[cols])
                  + np.einsum("pd,pd->p", Z[rows], Zn[cols]))
        )
    # softmax jacobian
    dw = alphas * (dalpha - float(alphas @ dalpha))

    dq = np.zeros(hidden)
    db = np.zeros(hidden)
    dW = np.zeros((hidden, dim))
    for k in range(m):
        dq += dw[k] * t_means[k]
        G = (1.0 - T_list[k] ** 2) * params.q  # (n, hidden)
        db += dw[k] * G.mean(axis=0)
        dW += dw[k] * (G.T @ Z_list[k]) / n

    table_grads = None
    if want_table_grads:
        dZ = np.zeros((n, dim))
        np.add.at(dZ, rows, ds[:, None] * Z[cols])
        np.add.at(dZ, cols, ds[:, None] * Z[rows])
        # two routes: through the fused Z, and through this table's own
        # attention score w_n
        table_grads = [
            alphas[k] * dZ + (dw[k] / n) * ((1.0 - T_list[k] ** 2) * params.q) @ params.W
            for k in range(m)
        ]
    return loss, alphas, w, dq, dW, db, table_grads


def train_attention(
    Z_list,
    A,
    epochs=120,
    lr=0.5,
    neg_ratio=1.0,
    fine_tune=False,
    params=None,
    hidden=128,
    seed=0,
):
    """Fit the attention scorer by reconstructing A; returns params + fusion.

    Each epoch takes every positive pair of A plus neg_ratio times as many
    sampled zero pairs, descends the mean binary cross entropy between the
    decoded adjacency and A, and re-normalizes the fusion weights. Per-path
    tables stay frozen unless fine_tune is set.
    """
    n = A.shape[0]
    for Zn in Z_list:
        if Zn.shape[0] != n:
            raise DimensionMismatchError("tables and adjacency disagree on pub count")
    Z_list = [np.array(Zn, dtype=np.float64, copy=True) for Zn in Z_list]
    if params is None:
        params = AttentionParams.init(Z_list[0].shape[1], hidden=hidden, seed=seed)
    else:
        params = AttentionParams(params.W.copy(), params.b.copy(), params.q.copy())

    iu = np.triu_indices(n, k=1)
    pos_mask = A[iu] > 0
    pos_rows, pos_cols = iu[0][pos_mask], iu[1][pos_mask]
    zero_rows, zero_cols = iu[0][~pos_mask], iu[1][~pos_mask]
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(77003161,)))

    history = []
    for epoch in range(epochs):
        take = min(len(zero_rows), int(round(neg_ratio * len(pos_rows))))
        if take and len(pos_rows):
            pick = rng.choice(len(zero_rows), size=take, replace=False)
            rows = np.concatenate([pos_rows, zero_rows[pick]])
            cols = np.concatenate([pos_cols, zero_cols[pick]])
        elif len(pos_rows):
            rows, cols = pos_rows, pos_cols
        else:
            rows, cols = zero_rows, zero_cols
        loss, _, _, dq, dW, db, tg = _pair_loss_and_grads(
            Z_list, params, A, rows, cols, want_table_grads=fine_tune
        )
        if not np.isfinite(loss):
            raise DivergenceError("attention training loss became non-finite")
        # history records the loss over every off-diagonal pair; the sampled
        # loss jitters with each epoch's zero-pair draw
        history.append(_pair_loss_and_grads(Z_list, params, A, iu[0], iu[1])[0])
        step = lr * (1.0 - 0.9 * epoch / epochs)
        params.q -= step * dq
        params.W -= step * dW
        params.b -= step * db
        if fine_tune:
            for Zn, g in zip(Z_list, tg):
                Zn -= step * g

    w = attention_coefficients(Z_list, params)
    alphas = attention_softmax(w)
    fused = FusedEmbedding(
        Z=fuse_embeddings(Z_list, alphas),
        alphas=alphas,
        coefficients=w,
        path_names=(),
    )
    return params, fused, np.array(history)


def structural_similarity(Z):
    """Cosine similarity matrix of the fused table.

    Zero rows are treated as similar to nothing (similarity 0); the
    diagonal is exactly 1 and entries are clamped to [-1, 1].
    """
    norms = np.linalg.norm(Z, axis=1)
    safe = np.where(norms > 0, norms, 1.0)
    U = Z / safe[:, None]
    M = np.clip(U @ U.T, -1.0, 1.0)
    M[norms == 0, :] = 0.0
    M[:, norms == 0] = 0.0
    np.fill_diagonal(M, 1.0)
    return M
