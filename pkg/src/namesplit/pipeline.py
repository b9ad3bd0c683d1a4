"""End-to-end orchestration: config, per-stage caching, ablation runs.

Per name: block -> network -> walks -> per-path embeddings -> attention
fusion -> structural similarity; doc vectors -> semantic similarity;
combined matrix -> adaptive clustering -> assignment (and scores when
labels exist). Expensive stages cache on disk keyed by a hash of exactly
the fields that influence them, so ablation variants share walks and doc
vectors.
"""

import hashlib
import json
import logging
import os
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import cluster as cl
from . import corpus as cp
from . import embed as em
from . import evaluation as ev
from . import fusion as fu
from . import semantic as se
from . import walker as wk
from .hetnet import DEFAULT_METAPATHS, build_hetnet, metapath, project_metapath

log = logging.getLogger("namesplit")


@dataclass
class PipelineConfig:
    pubs_path: str = ""
    labels_path: str = ""
    input_format: str = "whoiswho-json"
    out_dir: str = "out"
    cache_dir: str = ""
    names: list = field(default_factory=list)
    meta_paths: list = field(default_factory=lambda: list(DEFAULT_METAPATHS))
    attention: bool = True
    beta: float = 0.5
    seed: int = 0
    threads: int = 1
    mode: str = "deterministic"
    # hetnet
    word_min_count: int = 2
    word_max_fraction: float = 0.2
    # walker
    walks_per_node: int = 10
    walk_length: int = 20
    window: int = 5
    # embed
    dim: int = 100
    negatives: int = 5
    epochs: int = 5
    lr0: float = 0.025
    lr_min: float = 1e-4
    # fusion
    attention_hidden: int = 128
    attention_epochs: int = 120
    attention_lr: float = 0.5
    neg_pair_ratio: float = 1.0
    fine_tune: bool = False
    supervised_adjacency: bool = False
    # semantic
    semantic_dim: int = 100
    semantic_epochs: int = 20
    semantic_negatives: int = 5
    semantic_min_count: int = 2
    # cluster
    min_cluster_size: int = 2
    min_samples: int = 2
    ap_damping: float = 0.5
    ap_preference: float | None = None
    ap_max_iter: int = 200
    ap_convergence_iter: int = 15
    noise_tau: float = 0.1

    @classmethod
    def from_dict(cls, raw):
        known = {f for f in cls.__dataclass_fields__}
        bad = set(raw) - known
        if bad:
            raise ValueError(f"unknown config keys: {sorted(bad)}")
        return cls(**raw)

    def replace(self, **kw):
        d = asdict(self)
        d.update(kw)
        return PipelineConfig.from_dict(d)


# fields that do not influence computed results
_NON_SEMANTIC = {"out_dir", "cache_dir", "threads"}


def config_hash(config, keys=None):
    """Stable hash of the semantically meaningful configuration fields."""
    d = asdict(config) if isinstance(config, PipelineConfig) else dict(config)
    if keys is None:
        d = {k: v for k, v in d.items() if k not in _NON_SEMANTIC}
    else:
        d = {k: d[k] for k in keys}
    blob = json.dumps(d, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def load_config(path):
    """Read a TOML or JSON config file into a PipelineConfig.

    Referenced input files must exist already; a bad meta-path name or an
    unknown key fails here rather than mid-pipeline.
    """
    text = Path(path).read_bytes()
    if str(path).endswith(".json"):
        raw = json.loads(text)
    else:
        try:
            import tomllib  # py311+
        except ModuleNotFoundError:
            import tomli as tomllib
        raw = tomllib.loads(text.decode("utf-8"))
    config = PipelineConfig.from_dict(raw)
    for key in ("pubs_path", "labels_path"):
        val = getattr(config, key)
        if val and not Path(val).exists():
            raise FileNotFoundError(f"config {key} does not exist: {val}")
    for p in config.meta_paths:
        metapath(p)
    return config


class StageCache:
    """Content-addressed per-stage artifacts under one directory."""

    def __init__(self, root):
        self.root = Path(root) if root else None
        if self.root:
            self.root.mkdir(parents=True, exist_ok=True)

    def _file(self, key, ext):
        return self.root / f"{key}.{ext}"

    def get_arrays(self, key):
        if self.root and self._file(key, "npz").exists():
            with np.load(self._file(key, "npz"), allow_pickle=False) as z:
                return {k: z[k] for k in z.files}
        return None

    def put_arrays(self, key, **arrays):
        if self.root:
            tmp = self._file(key, f"{os.getpid()}.tmp.npz")  # np.savez insists on .npz
            np.savez(tmp, **arrays)
            os.replace(tmp, self._file(key, "npz"))

    def get_json(self, key):
        if self.root and self._file(key, "json").exists():
            return json.loads(self._file(key, "json").read_text("utf-8"))
        return None

    def put_json(self, key, value):
        if self.root:
            tmp = self._file(key, "json.tmp")
            tmp.write_text(json.dumps(value, sort_keys=True), "utf-8")
            os.replace(tmp, self._file(key, "json"))


def _block_digest(block):
    h = hashlib.sha256()
    for rec in block.pubs:
        h.update(repr((rec.id, rec.title, rec.abstract, rec.keywords,
                       rec.authors, rec.venue, rec.year)).encode("utf-8"))
    return h.hexdigest()


def _name_seeds(seed, name, n):
    ss = np.random.SeedSequence(seed, spawn_key=(zlib.crc32(name.encode()),))
    return [int(x) for x in ss.generate_state(n, dtype=np.uint64) >> 1]


@dataclass
class NameOutcome:
    name: str
    assignment: object = None
    clusters: list = field(default_factory=list)  # lists of pub ids
    alphas: dict = field(default_factory=dict)
    skipped: bool = False
    error: str = ""


def process_name(corpus, name, config, truth=None, cache=None):
    """Run the full pipeline for one ambiguous name."""
    cache = cache or StageCache(None)
    if not config.meta_paths:
        raise ValueError("meta_paths must name at least one path")
    block = cp.build_block(corpus, name)
    if block is None:
        return NameOutcome(name=name, skipped=True)
    digest = _block_digest(block)
    paths = [metapath(p) for p in config.meta_paths]
    seeds = _name_seeds(config.seed, block.name, 4 + len(paths))

    net = build_hetnet(block, (config.word_min_count, config.word_max_fraction))

    Z_list = []
    for k, path in enumerate(paths):
        ekey = config_hash({
            "stage": "embed", "block": digest, "path": path.name,
            "word_min_count": config.word_min_count,
            "word_max_fraction": config.word_max_fraction,
            "walks_per_node": config.walks_per_node,
            "walk_length": config.walk_length, "window": config.window,
            "dim": config.dim, "negatives": config.negatives,
            "epochs": config.epochs, "lr0": config.lr0, "lr_min": config.lr_min,
            "seed": seeds[4 + k], "mode": config.mode,
        }, keys=None)
        cached = cache.get_arrays(ekey) if config.mode == "deterministic" else None
        if cached is not None:
            Z_list.append(cached["vectors"])
            continue
        graph = project_metapath(net, path)
        walks = wk.sample_walks(
            net, path, config.walks_per_node, config.walk_length,
            seed=seeds[0] + k, window=config.window, graph=graph,
        )
        z0 = em.init_vectors(block, path, config.dim, seed=seeds[1], net=net)
        pairs = wk.context_pair_arrays(walks)
        if len(pairs[0]):
            cfg = em.NegSamplingConfig.from_frequencies(
                wk.walk_frequencies(walks, len(block)), config.negatives
            )
            table, _ = em.train_skipgram(
                pairs, z0, cfg, epochs=config.epochs, lr0=config.lr0,
                lr_min=config.lr_min, seed=seeds[4 + k], mode=config.mode,
                threads=config.threads, path_name=path.name,
            )
            vectors = table.vectors
        else:
            vectors = z0
        if config.mode == "deterministic":
            cache.put_arrays(ekey, vectors=vectors)
        Z_list.append(vectors)

    A = fu.build_coauthor_adjacency(
        block, net, truth if config.supervised_adjacency else None
    )
    if config.attention:
        _, fused, _ = fu.train_attention(
            Z_list, A, epochs=config.attention_epochs, lr=config.attention_lr,
            neg_ratio=config.neg_pair_ratio, fine_tune=config.fine_tune,
            hidden=config.attention_hidden, seed=seeds[2],
        )
        alphas = fused.alphas
        Z = fused.Z
    else:
        alphas = np.full(len(paths), 1.0 / len(paths))
        Z = fu.fuse_embeddings(Z_list, alphas)
    M_st = fu.structural_similarity(Z)

    dkey = config_hash({
        "stage": "docvecs", "block": digest, "dim": config.semantic_dim,
        "epochs": config.semantic_epochs, "negatives": config.semantic_negatives,
        "min_count": config.semantic_min_count, "seed": seeds[3],
        "mode": config.mode,
    }, keys=None)
    cached = cache.get_arrays(dkey) if config.mode == "deterministic" else None
    if cached is not None:
        doc_vectors = cached["vectors"]
    else:
        table = se.train_doc_vectors(
            se.build_doc_corpus(block), dim=config.semantic_dim,
            epochs=config.semantic_epochs, negatives=config.semantic_negatives,
            min_count=config.semantic_min_count, seed=seeds[3],
            mode=config.mode, threads=config.threads,
        )
        doc_vectors = table.vectors
        if config.mode == "deterministic":
            cache.put_arrays(dkey, vectors=doc_vectors)
    M_se = fu.structural_similarity(doc_vectors)

    M = cl.combine_similarity(M_st, M_se, config.beta)
    assignment = cl.adaptive_cluster(
        M, min_cluster_size=config.min_cluster_size, min_samples=config.min_samples,
        damping=config.ap_damping, preference=config.ap_preference,
        max_iter=config.ap_max_iter, convergence_iter=config.ap_convergence_iter,
        tau=config.noise_tau,
    )

    ids = block.ids()
    groups = [sorted(ids[i] for i in members) for members in assignment.clusters()]
    groups.sort(key=lambda g: g[0])
    return NameOutcome(
        name=block.name,
        assignment=assignment,
        clusters=groups,
        alphas={p.name: float(a) for p, a in zip(paths, alphas)},
    )


@dataclass
class PipelineResult:
    assignments: dict            # name -> list of pub-id lists
    report: object               # EvalReport or None
    outcomes: dict               # name -> NameOutcome
    failures: dict               # name -> error string


def _resolve_names(config, corpus, truth):
    if config.names:
        return [cp.sort_key(cp.normalize_author_name(n)) for n in config.names]
    if truth is not None:
        return sorted(truth.entities)
    raise ValueError("no names to process: give config.names or a labels file")


def run_pipeline(config, corpus=None, truth=None):
    """Process every requested name; failures are logged and skipped.

    Returns assignments for all successful names plus an evaluation report
    when labels are available. Artifacts land in config.out_dir; stage
    caches default to out_dir/cache (NAMESPLIT_CACHE overrides).
    """
    for p in config.meta_paths:
        metapath(p)
    if corpus is None:
        corpus, truth = cp.load_corpus(
            config.pubs_path, config.input_format, config.labels_path or None
        )
    names = _resolve_names(config, corpus, truth)
    cache_root = (
        os.environ.get("NAMESPLIT_CACHE")
        or config.cache_dir
        or os.path.join(config.out_dir, "cache")
    )
    cache = StageCache(cache_root)

    def one(name):
        try:
            return process_name(corpus, name, config, truth=truth, cache=cache)
        except Exception as exc:  # per-name isolation is the contract
            log.exception("pipeline failed for %s", name)
            return NameOutcome(name=name, error=f"{type(exc).__name__}: {exc}")

    if config.threads > 1 and len(names) > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            outcomes = list(pool.map(one, names))
    else:
        outcomes = [one(n) for n in names]

    assignments, failures, results = {}, {}, []
    by_name = {}
    for out in outcomes:
        by_name[out.name] = out
        if out.error:
            failures[out.name] = out.error
            continue
        if out.skipped:
            continue
        assignments[out.name] = out.clusters
        if truth is not None and out.name in truth.entities:
            entities = truth.entities[out.name]
            labeled = set().union(*entities) if entities else set()
            pred = [[pid for pid in grp if pid in labeled] for grp in out.clusters]
            n_excluded = sum(len(grp) for grp in out.clusters) - sum(len(g) for g in pred)
            p, r, f1 = ev.pairwise_prf([g for g in pred if g], entities)
            results.append(ev.NameResult(
                name=out.name, precision=p, recall=r, f1=f1,
                n_pubs=sum(len(g) for g in out.clusters),
                n_pred_clusters=len(out.clusters),
                n_true_entities=len(entities),
                n_excluded=n_excluded,
                alphas=out.alphas,
                method=out.assignment.method if out.assignment else "",
            ))

    report = None
    if results:
        report = ev.make_report(results, config=_config_echo(config))

    _persist(config, assignments, report)
    return PipelineResult(
        assignments=assignments, report=report, outcomes=by_name, failures=failures
    )


def _config_echo(config):
    return {
        "meta_paths": list(config.meta_paths),
        "beta": config.beta,
        "attention": config.attention,
        "seed": config.seed,
        "mode": config.mode,
        "config_hash": config_hash(config),
    }


def _persist(config, assignments, report):
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "assignments.json", "w", encoding="utf-8") as f:
        json.dump(assignments, f, sort_keys=True, indent=2)
        f.write("\n")
    if report is not None:
        ev.write_report(report, out / "report.json")


ABLATION_VARIANTS = ("-PAP", "-POP", "-PVP", "-PWP", "+PYP", "+PAPAP", "-att")


def apply_variant(config, variant):
    """Mutate the configuration for one ablation variant string."""
    if variant in ("-att", "-ATT"):
        return config.replace(attention=False)
    if variant.startswith("-"):
        name = variant[1:].upper()
        if name not in config.meta_paths:
            raise ValueError(f"variant {variant} removes a path not in {config.meta_paths}")
        return config.replace(meta_paths=[p for p in config.meta_paths if p != name])
    if variant.startswith("+"):
        name = metapath(variant[1:]).name
        if name in config.meta_paths:
            raise ValueError(f"variant {variant} adds a path already in the set")
        return config.replace(meta_paths=list(config.meta_paths) + [name])
    raise ValueError(f"unrecognized variant {variant!r}")


def run_ablation(config, variants, corpus=None, truth=None):
    """Run the pipeline once per variant (plus full) with shared seeds.

    Returns {variant: macro F1}; "full" is always included. Needs labels,
    otherwise there is nothing to compare.
    """
    if corpus is None:
        corpus, truth = cp.load_corpus(
            config.pubs_path, config.input_format, config.labels_path or None
        )
    if truth is None:
        raise ValueError("ablation needs labels to score variants")
    table = {}
    base = config.replace(out_dir=os.path.join(config.out_dir, "full"))
    res = run_pipeline(base, corpus=corpus, truth=truth)
    if res.report is None:
        raise ValueError("no labeled names were scored in the full run")
    table["full"] = res.report.macro_f1
    for variant in variants:
        vcfg = apply_variant(config, variant)
        vcfg = vcfg.replace(out_dir=os.path.join(config.out_dir, variant.strip("+-")
                                                 + ("_add" if variant.startswith("+") else "")))
        vres = run_pipeline(vcfg, corpus=corpus, truth=truth)
        table[variant] = vres.report.macro_f1 if vres.report else float("nan")
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "ablation.json", "w", encoding="utf-8") as f:
        json.dump(table, f, sort_keys=True, indent=2)
        f.write("\n")
    return table
