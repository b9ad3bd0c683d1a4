"""Similarity combination and adaptive clustering.

Two cluster-count-free algorithms run on the combined similarity matrix:
a full HDBSCAN (core distances, mutual reachability, MST, single-linkage
hierarchy, condensation, stability-based extraction) and affinity
propagation message passing. The adaptive step reassigns HDBSCAN noise,
scores both candidate assignments by mean silhouette on the distance
matrix, and keeps the better one.
"""

from dataclasses import dataclass

import numpy as np

# merges at distance zero would put lambda at infinity; a large finite cap
# keeps the stability sums well defined without changing any ordering
_LAMBDA_CAP = 1e12


@dataclass
class ClusterAssignment:
    labels: np.ndarray       # dense 0..S-1, or -1 for noise (hdbscan only)
    n_clusters: int
    method: str              # hdbscan | ap | adaptive
    noise: np.ndarray        # pre-reassignment noise mask
    converged: bool = True

    def clusters(self):
        out = [[] for _ in range(self.n_clusters)]
        for i, lab in enumerate(self.labels):
            if lab >= 0:
                out[lab].append(i)
        return out


def combine_similarity(M_st, M_se, beta):
    """Convex combination beta * structural + (1 - beta) * semantic."""
    M_st = np.asarray(M_st, dtype=np.float64)
    M_se = np.asarray(M_se, dtype=np.float64)
    if M_st.shape != M_se.shape:
        raise ValueError(f"shape mismatch: {M_st.shape} vs {M_se.shape}")
    if not 0.0 <= beta <= 1.0:
        raise ValueError("beta must be in [0, 1]")
    M = beta * M_st + (1.0 - beta) * M_se
    M = np.clip((M + M.T) / 2.0, -1.0, 1.0)
    np.fill_diagonal(M, 1.0)
    return M


def similarity_to_distance(M):
    D = np.maximum(1.0 - np.asarray(M, dtype=np.float64), 0.0)
    np.fill_diagonal(D, 0.0)
    return D


# ---------------------------------------------------------------------------
# HDBSCAN
# ---------------------------------------------------------------------------

def core_distances(D, min_samples):
    """Distance to the min_samples-th nearest neighbor, self excluded."""
    n = D.shape[0]
    k = min(min_samples, n - 1)
    return np.partition(D, k, axis=0)[k]


def mutual_reachability(D, core):
    MR = np.maximum(D, np.maximum(core[:, None], core[None, :]))
    np.fill_diagonal(MR, 0.0)
    return MR


def minimum_spanning_tree(MR):
    """Prim's algorithm on the dense matrix; returns [(u, v, w)] ascending."""
    n = MR.shape[0]
    visited = np.zeros(n, dtype=bool)
    visited[0] = True
    best = MR[0].copy()
    best[0] = np.inf
    best_from = np.zeros(n, dtype=np.int64)
    edges = []
    for _ in range(n - 1):
        v = int(np.argmin(best))
        edges.append((int(best_from[v]), v, float(best[v])))
        visited[v] = True
        best[v] = np.inf
        closer = MR[v] < best
        closer &= ~visited
        best[closer] = MR[v][closer]
        best_from[closer] = v
    edges.sort(key=lambda e: (e[2], e[0], e[1]))
    return edges


def single_linkage(edges, n):
    """Union-find over ascending edges -> merge rows (left, right, dist, size)."""
    parent = list(range(n))
    cid = list(range(n))
    size = [1] * n

    def find(x):
        root = x
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:
            parent[x], x = root, parent[x]
        return root

    merges = []
    next_id = n
    for u, v, w in edges:
        ru, rv = find(u), find(v)
        merges.append((cid[ru], cid[rv], w, size[ru] + size[rv]))
        parent[rv] = ru
        size[ru] += size[rv]
        cid[ru] = next_id
        next_id += 1
    return merges


def condense_tree(merges, n, min_cluster_size):
    """Collapse the dendrogram into clusters of >= min_cluster_size.

    Returns rows (parent, child, lambda, size) where child < n is a point
    falling out of its parent cluster and child >= n is a subcluster birth.
    Cluster ids are renumbered from n (the root).
    """
    if not merges:
        return []
    node = {}
    for t, (left, right, dist, sz) in enumerate(merges):
        node[n + t] = (left, right, dist, sz)

    def leaves(x):
        out, stack = [], [x]
        while stack:
            y = stack.pop()
            if y < n:
                out.append(y)
            else:
                lft, rgt, _, _ = node[y]
                stack.extend((lft, rgt))
        return out

    def count(x):
        return 1 if x < n else node[x][3]

    root = n + len(merges) - 1
    relabel = {root: n}
    next_cluster = n + 1
    rows = []
    stack = [root]
    while stack:
        current = stack.pop()
        left, right, dist, _ = node[current]
        lam = 1.0 / dist if dist > 0 else _LAMBDA_CAP
        lam = min(lam, _LAMBDA_CAP)
        parent_c = relabel[current]
        lsz, rsz = count(left), count(right)
        if lsz >= min_cluster_size and rsz >= min_cluster_size:
            for child, csz in ((left, lsz), (right, rsz)):
                relabel[child] = next_cluster
                rows.append((parent_c, next_cluster, lam, csz))
                next_cluster += 1
                if child >= n:
                    stack.append(child)
        elif lsz < min_cluster_size and rsz < min_cluster_size:
            for child in (left, right):
                for pt in leaves(child):
                    rows.append((parent_c, pt, lam, 1))
        else:
            big, small = (left, right) if lsz >= min_cluster_size else (right, left)
            for pt in leaves(small):
                rows.append((parent_c, pt, lam, 1))
            relabel[big] = parent_c
            if big >= n:
                stack.append(big)
            else:
                rows.append((parent_c, big, lam, 1))
    return rows


def _stability(rows, n):
    births = {n: 0.0}
    for parent, child, lam, _ in rows:
        if child >= n:
            births[child] = lam
    stab = {c: 0.0 for c in births}
    for parent, child, lam, size in rows:
        stab[parent] += (lam - births[parent]) * size
    return stab


def _select_clusters(rows, n):
    """Excess-of-mass extraction; the root is never selected."""
    stab = _stability(rows, n)
    children = {c: [] for c in stab}
    parents = {}
    for parent, child, _, _ in rows:
        if child >= n:
            children[parent].append(child)
            parents[child] = parent
    candidates = sorted((c for c in stab if c != n), reverse=True)
    selected = {c: True for c in candidates}
    for c in candidates:
        subtree = sum(stab[ch] for ch in children[c])
        if children[c] and subtree > stab[c]:
            selected[c] = False
            stab[c] = subtree
        else:
            stack = list(children[c])
            while stack:
                d = stack.pop()
                selected[d] = False
                stack.extend(children[d])
    return [c for c in candidates if selected[c]], parents


def hdbscan_cluster(M, min_cluster_size=2, min_samples=2):
    """Density clustering on distance 1 - M; noise keeps label -1.

    Degenerate hierarchies with no subcluster of min_cluster_size (for
    example all-equal similarities) collapse to a single cluster when the
    block itself is large enough, and to all-noise otherwise.
    """
    if min_cluster_size < 2 or min_samples < 1:
        raise ValueError("need min_cluster_size >= 2 and min_samples >= 1")
    M = np.asarray(M, dtype=np.float64)
    n = M.shape[0]
    if n == 0:
        return ClusterAssignment(np.zeros(0, dtype=np.int64), 0, "hdbscan", np.zeros(0, bool))
    labels = np.full(n, -1, dtype=np.int64)
    if n < min_cluster_size or n == 1:
        return ClusterAssignment(labels, 0, "hdbscan", labels < 0)

    D = similarity_to_distance(M)
    core = core_distances(D, min_samples)
    MR = mutual_reachability(D, core)
    edges = minimum_spanning_tree(MR)
    merges = single_linkage(edges, n)
    rows = condense_tree(merges, n, min_cluster_size)
    chosen, parents = _select_clusters(rows, n)

    if not chosen:
        if n >= min_cluster_size:
            labels[:] = 0
            return ClusterAssignment(labels, 1, "hdbscan", np.zeros(n, bool))
        return ClusterAssignment(labels, 0, "hdbscan", labels < 0)

    label_of = {c: i for i, c in enumerate(sorted(chosen))}
    point_parent = {child: parent for parent, child, _, _ in rows if child < n}
    for pt in range(n):
        c = point_parent.get(pt)
        while c is not None:
            if c in label_of:
                labels[pt] = label_of[c]
                break
            c = parents.get(c)
    labels = _dense_labels(labels)
    return ClusterAssignment(labels, int(labels.max()) + 1, "hdbscan", labels < 0)


def _dense_labels(labels):
    out = np.full(len(labels), -1, dtype=np.int64)
    nxt = 0
    seen = {}
    for i, lab in enumerate(labels):
        if lab < 0:
            continue
        if lab not in seen:
            seen[lab] = nxt
            nxt += 1
        out[i] = seen[lab]
    return out


def mst_total_weight(M, min_samples=2):
    """Weight of the mutual-reachability MST (oracle hook for tests)."""
    D = similarity_to_distance(np.asarray(M, dtype=np.float64))
    MR = mutual_reachability(D, core_distances(D, min_samples))
    return sum(w for _, _, w in minimum_spanning_tree(MR))


# ---------------------------------------------------------------------------
# Affinity propagation
# ---------------------------------------------------------------------------

def ap_cluster(M, damping=0.5, preference=None, max_iter=200, convergence_iter=15):
    """Responsibility/availability message passing on the similarity matrix.

    Self-similarity is set to the preference (median off-diagonal similarity
    by default); exemplars are the points with positive net
    self-responsibility. Without convergence inside max_iter the current
    assignment is returned with converged=False. No noise jitter is added,
    so the result is a deterministic function of the inputs.
    """
    if not 0.5 <= damping < 1.0:
        raise ValueError("damping must lie in [0.5, 1)")
    S = np.asarray(M, dtype=np.float64).copy()
    n = S.shape[0]
    if n == 1:
        return ClusterAssignment(np.zeros(1, dtype=np.int64), 1, "ap", np.zeros(1, bool))
    if preference is None:
        preference = float(np.median(S[~np.eye(n, dtype=bool)]))
    S[np.diag_indices_from(S)] = preference

    R = np.zeros((n, n))
    A = np.zeros((n, n))
    idx = np.arange(n)
    last = None
    stable = 0
    converged = False
    for _ in range(max_iter):
        AS = A + S
        first_k = AS.argmax(axis=1)
        first = AS[idx, first_k]
        AS[idx, first_k] = -np.inf
        second = AS.max(axis=1)
        R_new = S - first[:, None]
        R_new[idx, first_k] = S[idx, first_k] - second
        R = damping * R + (1.0 - damping) * R_new

        Rp = np.maximum(R, 0.0)
        Rp[idx, idx] = R[idx, idx]
        col = Rp.sum(axis=0)
        A_new = col[None, :] - Rp
        dA = A_new[idx, idx].copy()
        A_new = np.minimum(A_new, 0.0)
        A_new[idx, idx] = dA
        A = damping * A + (1.0 - damping) * A_new

        exemplars = frozenset(np.flatnonzero(np.diag(R) + np.diag(A) > 0).tolist())
        if exemplars and exemplars == last:
            stable += 1
            if stable >= convergence_iter:
                converged = True
                break
        else:
            stable = 0
        last = exemplars

    ex = np.flatnonzero(np.diag(R) + np.diag(A) > 0)
    if len(ex) == 0:
        ex = np.array([int(np.argmax(np.diag(R) + np.diag(A)))])
    labels = np.asarray(ex[np.argmax(S[:, ex], axis=1)])
    labels[ex] = ex
    dense = _dense_labels(np.searchsorted(ex, labels))
    return ClusterAssignment(
        dense, int(dense.max()) + 1, "ap", np.zeros(n, bool), converged=converged
    )


# ---------------------------------------------------------------------------
# Adaptive arbitration
# ---------------------------------------------------------------------------

def mean_silhouette(D, labels):
    """Mean of (b - a) / max(a, b); singletons and one-cluster layouts score 0."""
    labels = np.asarray(labels)
    groups = {}
    for i, lab in enumerate(labels):
        groups.setdefault(int(lab), []).append(i)
    if len(groups) < 2:
        return 0.0
    members = {lab: np.array(ix) for lab, ix in groups.items()}
    total = 0.0
    for i, lab in enumerate(labels):
        own = members[int(lab)]
        if len(own) < 2:
            continue
        a = D[i, own].sum() / (len(own) - 1)
        b = min(
            float(D[i, other].mean())
            for lab2, other in members.items()
            if lab2 != int(lab)
        )
        denom = max(a, b)
        if denom > 0:
            total += (b - a) / denom
    return total / len(labels)


def reassign_noise(M, assignment, tau=0.1):
    """Attach each noise pub to the cluster of max mean similarity (>= tau).

    Pubs clearing no cluster at tau become singletons. Mean similarities are
    computed against the original clusters only, so reassignments do not
    cascade.
    """
    labels = assignment.labels.copy()
    clusters = [np.flatnonzero(assignment.labels == c) for c in range(assignment.n_clusters)]
    next_label = assignment.n_clusters
    for i in np.flatnonzero(assignment.labels < 0):
        best, best_mean = -1, -np.inf
        for c, members in enumerate(clusters):
            mean = float(M[i, members].mean())
            if mean > best_mean:
                best, best_mean = c, mean
        if best >= 0 and best_mean >= tau:
            labels[i] = best
        else:
            labels[i] = next_label
            next_label += 1
    labels = _dense_labels(labels)
    return ClusterAssignment(
        labels, int(labels.max()) + 1, assignment.method, assignment.noise,
        converged=assignment.converged,
    )


def adaptive_cluster(
    M,
    min_cluster_size=2,
    min_samples=2,
    damping=0.5,
    preference=None,
    max_iter=200,
    convergence_iter=15,
    tau=0.1,
):
    """Run HDBSCAN (noise reassigned) and AP, keep the higher-silhouette result.

    Ties go to the HDBSCAN-derived assignment. The returned labels are dense
    and cover every pub.
    """
    M = np.asarray(M, dtype=np.float64)
    h = reassign_noise(M, hdbscan_cluster(M, min_cluster_size, min_samples), tau)
    a = ap_cluster(M, damping, preference, max_iter, convergence_iter)
    D = similarity_to_distance(M)
    sil_h = mean_silhouette(D, h.labels)
    sil_a = mean_silhouette(D, a.labels)
    winner = h if sil_h >= sil_a else a
    return ClusterAssignment(
        winner.labels, winner.n_clusters, "adaptive", winner.noise,
        converged=winner.converged,
    )
