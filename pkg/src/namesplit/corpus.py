"""Publication records, name blocks, and the synthetic block generator.

Everything downstream operates on a Block: the set of publications that
list one ambiguous author name. This module ingests raw corpora
(whoiswho-json or jsonl), normalizes strings, groups records into blocks,
and can plant labeled synthetic blocks for end-to-end testing.
"""

import json
import re
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

_NON_ALNUM = re.compile(r"[^0-9a-z]+")


class CorpusError(Exception):
    """Raised for unparseable or inconsistent corpus input."""


class UnusableNameError(ValueError):
    """Raised when a raw author string contains no alphanumeric characters."""


def _load_stopwords():
    text = resources.files("namesplit").joinpath("data/stopwords.txt").read_text("utf-8")
    words = set()
    for line in text.splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            words.add(line)
    return frozenset(words)


STOPWORDS = _load_stopwords()


@dataclass(frozen=True)
class PublicationRecord:
    id: str
    title: str = ""
    abstract: str = ""
    keywords: tuple = ()
    authors: tuple = ()  # (name, org) pairs
    venue: str = ""
    year: int | None = None


@dataclass
class Block:
    """All publications listing one ambiguous author name, densely indexed."""

    name: str
    pubs: list
    index: dict = field(init=False)  # pub id -> dense position

    def __post_init__(self):
        self.index = {p.id: i for i, p in enumerate(self.pubs)}

    def __len__(self):
        return len(self.pubs)

    def ids(self):
        return [p.id for p in self.pubs]


@dataclass
class GroundTruth:
    """name -> list of author entities, each a set of pub ids."""

    entities: dict

    def labels_for(self, block):
        """Dense truth labels aligned to the block, -1 for unlabeled pubs."""
        labels = [-1] * len(block)
        for ent_idx, pub_ids in enumerate(self.entities.get(block.name, [])):
            for pid in pub_ids:
                if pid in block.index:
                    labels[block.index[pid]] = ent_idx
        return labels


def normalize_author_name(raw):
    """Canonicalize an author name: lowercase, punctuation to spaces, collapsed.

    Token order is preserved; use sort_key() for order-insensitive matching.
    Raises UnusableNameError when nothing alphanumeric survives.
    """
    out = _NON_ALNUM.sub(" ", raw.lower()).strip()
    out = " ".join(out.split())
    if not out:
        raise UnusableNameError(f"no alphanumeric content in author name {raw!r}")
    return out


def sort_key(canonical_name):
    """Order-insensitive blocking key: sorted tokens of a canonical name."""
    return " ".join(sorted(canonical_name.split()))


def normalize_string(raw):
    """Canonical form for venue/org strings; empty result stays empty."""
    return " ".join(_NON_ALNUM.sub(" ", raw.lower()).split())


def tokenize_text(title, abstract="", keywords=()):
    """Lowercased word tokens of title + abstract + keywords.

    Splits on non-alphanumerics, drops tokens shorter than 2 characters and
    stopwords, keeps order and duplicates, never stems.
    """
    parts = [title, abstract]
    parts.extend(keywords)
    tokens = []
    for part in parts:
        for tok in _NON_ALNUM.sub(" ", part.lower()).split():
            if len(tok) >= 2 and tok not in STOPWORDS:
                tokens.append(tok)
    return tokens


def _record_from_dict(pid, raw, where):
    if not pid:
        raise CorpusError(f"record with empty id in {where}")
    authors = []
    for a in raw.get("authors", []) or []:
        authors.append((str(a.get("name", "") or ""), str(a.get("org", "") or "")))
    year = raw.get("year")
    try:
        year = int(year) if year not in (None, "", 0) else None
    except (TypeError, ValueError):
        year = None
    keywords = raw.get("keywords") or []
    if isinstance(keywords, str):
        keywords = [keywords]
    return PublicationRecord(
        id=str(pid),
        title=str(raw.get("title", "") or ""),
        abstract=str(raw.get("abstract", "") or ""),
        keywords=tuple(str(k) for k in keywords if k),
        authors=tuple(authors),
        venue=str(raw.get("venue", "") or ""),
        year=year,
    )


def load_labels(labels_path):
    """Load a name -> entity -> pub-id labels file into a GroundTruth."""
    with open(labels_path, "rb") as f:
        data = f.read()
    try:
        raw = json.loads(data)
    except json.JSONDecodeError as e:
        raise CorpusError(f"cannot parse labels {labels_path}: {e.msg} at byte {e.pos}") from e
    entities = {}
    for name, ents in raw.items():
        canon = sort_key(normalize_author_name(name))
        if isinstance(ents, dict):
            groups = [set(map(str, v)) for _, v in sorted(ents.items())]
        else:
            groups = [set(map(str, v)) for v in ents]
        seen = set()
        for g in groups:
            if g & seen:
                raise CorpusError(f"labels for {name!r} assign a pub to two entities")
            seen |= g
        entities[canon] = groups
    return GroundTruth(entities)


def load_corpus(path, fmt="whoiswho-json", labels_path=None):
    """Load a corpus file, returning (id -> PublicationRecord, GroundTruth or None).

    whoiswho-json: one JSON object mapping pub id -> record.
    jsonl: one record per line with an explicit "id" field.
    Parse failures report the byte offset; duplicate ids are rejected by id.
    """
    corpus = {}
    if fmt == "whoiswho-json":
        with open(path, "rb") as f:
            data = f.read()
        try:
            raw = json.loads(data)
        except json.JSONDecodeError as e:
            raise CorpusError(f"cannot parse {path}: {e.msg} at byte {e.pos}") from e
        if not isinstance(raw, dict):
            raise CorpusError(f"{path}: whoiswho-json must be an object keyed by pub id")
        for pid, rec in raw.items():
            rec_id = str(rec.get("id", pid) or pid)
            if rec_id in corpus:
                raise CorpusError(f"duplicate pub id {rec_id!r} in {path}")
            corpus[rec_id] = _record_from_dict(rec_id, rec, path)
    elif fmt == "jsonl":
        offset = 0
        with open(path, "rb") as f:
            for lineno, line in enumerate(f, 1):
                stripped = line.strip()
                if stripped:
                    try:
                        rec = json.loads(stripped)
                    except json.JSONDecodeError as e:
                        raise CorpusError(
                            f"cannot parse {path} line {lineno}: {e.msg} at byte "
                            f"{offset + line.find(stripped[:1]) + e.pos}"
                        ) from e
                    pid = str(rec.get("id", "") or "")
                    if not pid:
                        raise CorpusError(f"{path} line {lineno}: record missing id")
                    if pid in corpus:
                        raise CorpusError(f"duplicate pub id {pid!r} in {path}")
                    corpus[pid] = _record_from_dict(pid, rec, path)
                offset += len(line)
    else:
        raise ValueError(f"unknown corpus format {fmt!r}")

    truth = load_labels(labels_path) if labels_path else None
    if truth:
        for name, ents in truth.entities.items():
            for ent in ents:
                for pid in ent:
                    if pid not in corpus:
                        raise CorpusError(f"labels reference unknown pub id {pid!r} under {name!r}")
    return corpus, truth


def save_corpus(corpus, path, truth=None, labels_path=None):
    """Write a corpus (and optional labels) back out in whoiswho-json form."""
    out = {}
    for pid in sorted(corpus):
        r = corpus[pid]
        out[pid] = {
            "id": r.id,
            "title": r.title,
            "abstract": r.abstract,
            "keywords": list(r.keywords),
            "authors": [{"name": n, "org": o} for n, o in r.authors],
            "venue": r.venue,
            "year": r.year,
        }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(out, f, sort_keys=True, indent=1)
        f.write("\n")
    if truth is not None and labels_path:
        lab = {
            name: {str(i): sorted(ent) for i, ent in enumerate(ents)}
            for name, ents in truth.entities.items()
        }
        with open(labels_path, "w", encoding="utf-8") as f:
            json.dump(lab, f, sort_keys=True, indent=1)
            f.write("\n")


def build_block(corpus, name):
    """Group all records naming `name` (order-insensitive match) into a Block.

    Returns None when no record matches, which callers treat as "skip this
    name". Pubs are ordered by id so the dense indexing is reproducible.
    """
    key = sort_key(name)
    matched = []
    for rec in corpus.values():
        for display, _org in rec.authors:
            try:
                if sort_key(normalize_author_name(display)) == key:
                    matched.append(rec)
                    break
            except UnusableNameError:
                continue
    if not matched:
        return None
    matched.sort(key=lambda r: r.id)
    return Block(name=key, pubs=matched)


# ---------------------------------------------------------------------------
# Synthetic labeled blocks (the desk-scale oracle for the whole pipeline)
# ---------------------------------------------------------------------------

_TOPIC_WORDS = [
    "graph", "network", "embedding", "cluster", "kernel", "matrix", "tensor",
    "protein", "genome", "sequence", "neuron", "cortex", "synapse", "plasma",
    "quantum", "photon", "lattice", "polymer", "catalyst", "membrane",
    "wireless", "antenna", "router", "protocol", "cache", "compiler",
    "market", "auction", "pricing", "welfare", "contract", "liquidity",
    "sediment", "aquifer", "glacier", "monsoon", "biomass", "habitat",
    "robot", "gripper", "actuator", "trajectory", "slam", "lidar",
    "corpus", "parser", "syntax", "semantics", "lexicon", "discourse",
]


def generate_synthetic_block(
    n_authors,
    pubs_per_author,
    coauthor_pool_per_author=4,
    vocab_topics=6,
    noise_rate=0.0,
    seed=0,
    name="wei li",
):
    """Plant a labeled block: disjoint co-author pools, one venue/org/topic set per author.

    Every pub lists the ambiguous name plus ceil(pool/2)+ one co-authors from
    its entity pool, so at noise 0 any two same-entity pubs share a co-author
    and cross-entity pubs share none. With probability noise_rate each
    attribute slot is resampled uniformly from the global pool of its type.
    Deterministic for a fixed seed.
    """
    if n_authors < 1 or pubs_per_author < 1:
        raise ValueError("n_authors and pubs_per_author must be >= 1")
    if coauthor_pool_per_author < 1 or vocab_topics < 1:
        raise ValueError("coauthor_pool_per_author and vocab_topics must be >= 1")
    if not 0.0 <= noise_rate <= 1.0:
        raise ValueError("noise_rate must be in [0, 1]")

    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(982451,)))
    per_pub = coauthor_pool_per_author // 2 + 1  # 2*per_pub > pool => pubs overlap

    pools, venues, orgs, vocabs = [], [], [], []
    for e in range(n_authors):
        # single compound token per slot: distinct under sorted-token keys
        pools.append([f"pal{e:02d}{k:02d} qiu" for k in range(coauthor_pool_per_author)])
        venues.append(f"journal of field {e:02d}")
        orgs.append(f"institute {e:02d} of science")
        vocabs.append([
            _TOPIC_WORDS[(e * vocab_topics + t) % len(_TOPIC_WORDS)] + f"{e:02d}"
            for t in range(vocab_topics)
        ])
    all_coauthors = [c for pool in pools for c in pool]
    all_words = [w for v in vocabs for w in v]

    def noisy(value, pool):
        if noise_rate > 0 and rng.random() < noise_rate:
            return pool[rng.integers(len(pool))]
        return value

    pubs = []
    entities = []
    for e in range(n_authors):
        ent_ids = set()
        for j in range(pubs_per_author):
            pid = f"p{e:02d}{j:03d}"
            ent_ids.add(pid)
            picks = rng.choice(coauthor_pool_per_author, size=per_pub, replace=False)
            coauthors = [noisy(pools[e][k], all_coauthors) for k in sorted(picks)]
            title_words = [
                noisy(vocabs[e][rng.integers(vocab_topics)], all_words) for _ in range(6)
            ]
            keyword_words = [
                noisy(vocabs[e][rng.integers(vocab_topics)], all_words) for _ in range(3)
            ]
            abstract_words = [
                noisy(vocabs[e][rng.integers(vocab_topics)], all_words) for _ in range(15)
            ]
            authors = [(name, noisy(orgs[e], orgs))]
            authors.extend((c, "") for c in coauthors)
            pubs.append(PublicationRecord(
                id=pid,
                title=" ".join(title_words),
                abstract=" ".join(abstract_words),
                keywords=tuple(keyword_words),
                authors=tuple(authors),
                venue=noisy(venues[e], venues),
                year=2010 + int(rng.integers(10)),
            ))
        entities.append(ent_ids)

    pubs.sort(key=lambda r: r.id)
    block = Block(name=sort_key(normalize_author_name(name)), pubs=pubs)
    truth = GroundTruth({block.name: entities})
    return block, truth
