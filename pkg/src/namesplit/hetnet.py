"""Per-block heterogeneous network and meta-path projection.

The network is strictly bipartite: publication nodes on one side, typed
attribute nodes (author, org, venue, year, word) on the other. A meta-path
projects it onto a weighted pub-pub graph whose weights count the distinct
interior realizations connecting each pair.
"""

from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .corpus import (
    UnusableNameError,
    normalize_author_name,
    normalize_string,
    sort_key,
    tokenize_text,
)

AUTHOR, ORG, VENUE, YEAR, WORD = "A", "O", "V", "Y", "W"


@dataclass(frozen=True)
class MetaPath:
    """Symmetric pub-to-pub type schema, e.g. P-A-P."""

    name: str
    schema: tuple

    @property
    def interior(self):
        return self.schema[1]


PAP = MetaPath("PAP", ("P", AUTHOR, "P"))
POP = MetaPath("POP", ("P", ORG, "P"))
PVP = MetaPath("PVP", ("P", VENUE, "P"))
PWP = MetaPath("PWP", ("P", WORD, "P"))
PYP = MetaPath("PYP", ("P", YEAR, "P"))
PAPAP = MetaPath("PAPAP", ("P", AUTHOR, "P", AUTHOR, "P"))

METAPATHS = {p.name: p for p in (PAP, POP, PVP, PWP, PYP, PAPAP)}
DEFAULT_METAPATHS = ("PAP", "POP", "PVP", "PWP")


def metapath(name):
    try:
        return METAPATHS[name.upper()]
    except KeyError:
        raise ValueError(f"unsupported meta-path {name!r}; know {sorted(METAPATHS)}") from None


@dataclass
class HetNet:
    """Bipartite pub-attribute adjacency, one index per attribute type."""

    n_pubs: int
    block_name: str
    attr_names: dict = field(default_factory=dict)   # type -> [attr key]
    pub_attrs: dict = field(default_factory=dict)    # type -> per-pub sorted attr idx lists
    attr_pubs: dict = field(default_factory=dict)    # type -> per-attr sorted pub idx lists

    def token_bags(self, attr_type):
        """Per-pub attribute token bags used for embedding initialization.

        Author/year attributes contribute their full node key as one token;
        org and venue keys are split into word tokens; word nodes are their
        own tokens.
        """
        bags = []
        for i in range(self.n_pubs):
            bag = []
            for a in self.pub_attrs[attr_type][i]:
                key = self.attr_names[attr_type][a]
                if attr_type in (ORG, VENUE):
                    bag.extend(key.split())
                else:
                    bag.append(key)
            bags.append(bag)
        return bags


@dataclass
class ProjectedGraph:
    """Weighted undirected pub-pub graph for one meta-path (no self loops)."""

    path: MetaPath
    n_pubs: int
    neighbors: list  # per pub: np.ndarray of neighbor indices
    weights: list    # per pub: np.ndarray of positive integer weights

    def edges(self):
        for i in range(self.n_pubs):
            nb, w = self.neighbors[i], self.weights[i]
            for k in range(len(nb)):
                if i < nb[k]:
                    yield i, int(nb[k]), int(w[k])

    def weight(self, i, j):
        nb = self.neighbors[i]
        pos = np.searchsorted(nb, j)
        if pos < len(nb) and nb[pos] == j:
            return int(self.weights[i][pos])
        return 0


def build_hetnet(block, word_df_bounds=(2, 0.2)):
    """Construct the typed pub-attribute network for one block.

    Author nodes are co-author names under the order-insensitive key, with
    the ambiguous name itself removed (it would connect every pair). Org
    nodes come from the ambiguous author's own affiliation per record. Word
    nodes come from title + keywords only, kept when their document
    frequency is >= min_count and <= max_fraction * len(block).
    """
    if len(block) == 0:
        raise ValueError("cannot build a network from an empty block")
    min_count, max_fraction = word_df_bounds
    per_pub = {t: [] for t in (AUTHOR, ORG, VENUE, YEAR, WORD)}

    for rec in block.pubs:
        coauthors = set()
        own_org = ""
        for display, org in rec.authors:
            try:
                key = sort_key(normalize_author_name(display))
            except UnusableNameError:
                continue
            if key == block.name:
                if org and not own_org:
                    own_org = normalize_string(org)
            else:
                coauthors.add(key)
        per_pub[AUTHOR].append(sorted(coauthors))
        per_pub[ORG].append([own_org] if own_org else [])
        venue = normalize_string(rec.venue)
        per_pub[VENUE].append([venue] if venue else [])
        per_pub[YEAR].append([f"y{rec.year}"] if rec.year is not None else [])
        per_pub[WORD].append(sorted(set(tokenize_text(rec.title, "", rec.keywords))))

    df = defaultdict(int)
    for words in per_pub[WORD]:
        for w in words:
            df[w] += 1
    cap = max_fraction * len(block)
    kept = {w for w, c in df.items() if c >= min_count and c <= cap}
    per_pub[WORD] = [[w for w in words if w in kept] for words in per_pub[WORD]]

    net = HetNet(n_pubs=len(block), block_name=block.name)
    for t, pub_lists in per_pub.items():
        names = sorted({a for attrs in pub_lists for a in attrs})
        idx = {a: k for k, a in enumerate(names)}
        pub_attrs = [sorted(idx[a] for a in attrs) for attrs in pub_lists]
        attr_pubs = [[] for _ in names]
        for i, attrs in enumerate(pub_attrs):
            for a in attrs:
                attr_pubs[a].append(i)
        net.attr_names[t] = names
        net.pub_attrs[t] = pub_attrs
        net.attr_pubs[t] = attr_pubs
    return net


def project_metapath(net, path):
    """Project the network onto a weighted pub-pub graph along one meta-path.

    For P-X-P the weight of (i, j) is the number of distinct X attributes
    shared by i and j. For PAPAP it is the number of distinct
    (author, pub, author) interior triples, walks being free to revisit
    nodes; only i == j is excluded.
    """
    if path.name not in METAPATHS:
        raise ValueError(f"unsupported meta-path {path!r}")
    counts = defaultdict(int)
    if len(path.schema) == 3:
        for pubs in net.attr_pubs[path.interior]:
            for a in range(len(pubs)):
                for b in range(a + 1, len(pubs)):
                    counts[(pubs[a], pubs[b])] += 1
    else:  # PAPAP
        attr_pubs = net.attr_pubs[AUTHOR]
        pub_attrs = net.pub_attrs[AUTHOR]
        for k in range(net.n_pubs):
            reach = defaultdict(int)  # i -> |authors shared by i and k|
            for a in pub_attrs[k]:
                for i in attr_pubs[a]:
                    reach[i] += 1
            items = list(reach.items())
            for x in range(len(items)):
                i, ci = items[x]
                for y in range(x + 1, len(items)):
                    j, cj = items[y]
                    if i < j:
                        counts[(i, j)] += ci * cj
                    else:
                        counts[(j, i)] += ci * cj

    adj = [[] for _ in range(net.n_pubs)]
    for (i, j), w in counts.items():
        adj[i].append((j, w))
        adj[j].append((i, w))
    neighbors, weights = [], []
    for i in range(net.n_pubs):
        adj[i].sort()
        neighbors.append(np.array([j for j, _ in adj[i]], dtype=np.int64))
        weights.append(np.array([w for _, w in adj[i]], dtype=np.float64))
    return ProjectedGraph(path=path, n_pubs=net.n_pubs, neighbors=neighbors, weights=weights)


def dump_hetnet(net, path):
    """Debug dump: one typed edge per line, tab separated."""
    with open(path, "w", encoding="utf-8") as f:
        for t in sorted(net.attr_names):
            for i in range(net.n_pubs):
                for a in net.pub_attrs[t][i]:
                    f.write(f"P:{i}\t{t}:{net.attr_names[t][a]}\n")


def dump_projection(graph, path):
    with open(path, "w", encoding="utf-8") as f:
        for i, j, w in graph.edges():
            f.write(f"P:{i}\tP:{j}\t{w}\n")
