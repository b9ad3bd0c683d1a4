"""Command line front end.

Subcommands cover the pipeline end to end (run), individual stages for
inspection (ingest, walk, embed, fuse, semantic, cluster), scoring (eval),
the ablation protocol (ablate) and the synthetic generator (synth).

Exit codes: 0 ok, 1 usage, 2 data error, 3 stage failure, 4 quality gate.
"""

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import corpus as cp
from . import embed as em
from . import evaluation as ev
from . import fusion as fu
from . import semantic as se
from . import walker as wk
from .hetnet import build_hetnet, dump_hetnet, dump_projection, metapath, project_metapath
from .pipeline import (
    PipelineConfig,
    apply_variant,
    config_hash,
    load_config,
    run_ablation,
    run_pipeline,
)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_STAGE, EXIT_GATE = 0, 1, 2, 3, 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _config_from_args(args):
    cfg = load_config(args.config) if args.config else PipelineConfig()
    overrides = {}
    for key in ("pubs", "labels", "out", "seed", "threads", "beta", "name"):
        val = getattr(args, key, None)
        if val in (None, []):
            continue
        if key == "pubs":
            overrides["pubs_path"] = val
        elif key == "labels":
            overrides["labels_path"] = val
        elif key == "out":
            overrides["out_dir"] = val
        elif key == "name":
            overrides["names"] = val
        else:
            overrides[key] = val
    if getattr(args, "deterministic", False):
        overrides["mode"] = "deterministic"
    if getattr(args, "parallel", False):
        overrides["mode"] = "parallel"
    if getattr(args, "format", None):
        overrides["input_format"] = args.format
    return cfg.replace(**overrides)


def _add_common(p):
    p.add_argument("--config", help="TOML or JSON pipeline configuration")
    p.add_argument("--pubs", help="publications file")
    p.add_argument("--labels", help="ground-truth labels file")
    p.add_argument("--format", choices=["whoiswho-json", "jsonl"])
    p.add_argument("--name", action="append", help="only process this name (repeatable)")
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--beta", type=float)
    p.add_argument("--deterministic", action="store_true")
    p.add_argument("--parallel", action="store_true")
    p.add_argument("--out", help="output directory")


def _load(cfg):
    return cp.load_corpus(cfg.pubs_path, cfg.input_format, cfg.labels_path or None)


def _stage_setup(cfg, args):
    corpus, truth = _load(cfg)
    if cfg.names:
        names = cfg.names
    elif truth is not None:
        names = sorted(truth.entities)
    else:
        raise cp.CorpusError("give --name or a labels file to pick blocks")
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return corpus, truth, names, out


def cmd_ingest(args):
    cfg = _config_from_args(args)
    corpus, truth = _load(cfg)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cp.save_corpus(corpus, out / "corpus.json", truth, out / "labels.json")
    summary = {"n_pubs": len(corpus), "n_names": len(truth.entities) if truth else 0}
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def cmd_synth(args):
    block, truth = cp.generate_synthetic_block(
        n_authors=args.authors, pubs_per_author=args.pubs_per_author,
        coauthor_pool_per_author=args.pool, vocab_topics=args.vocab,
        noise_rate=args.noise, seed=args.seed or 0, name=args.block_name,
    )
    out = Path(args.out or "synth")
    out.mkdir(parents=True, exist_ok=True)
    corpus = {p.id: p for p in block.pubs}
    cp.save_corpus(corpus, out / "pubs.json", truth, out / "labels.json")
    print(json.dumps({"n_pubs": len(block), "n_entities": len(truth.entities[block.name])}))
    return EXIT_OK


def cmd_walk(args):
    cfg = _config_from_args(args)
    corpus, _, names, out = _stage_setup(cfg, args)
    for name in names:
        block = cp.build_block(corpus, name)
        if block is None:
            continue
        net = build_hetnet(block, (cfg.word_min_count, cfg.word_max_fraction))
        dump_hetnet(net, out / f"{name.replace(' ', '_')}.hetnet.tsv")
        for pname in cfg.meta_paths:
            path = metapath(pname)
            graph = project_metapath(net, path)
            dump_projection(graph, out / f"{name.replace(' ', '_')}.{pname}.edges.tsv")
            walks = wk.sample_walks(
                net, path, cfg.walks_per_node, cfg.walk_length,
                seed=cfg.seed, window=cfg.window, graph=graph,
            )
            wk.dump_walks(walks, out / f"{name.replace(' ', '_')}.{pname}.walks.txt")
    return EXIT_OK


def cmd_embed(args):
    cfg = _config_from_args(args)
    corpus, _, names, out = _stage_setup(cfg, args)
    for name in names:
        block = cp.build_block(corpus, name)
        if block is None:
            continue
        net = build_hetnet(block, (cfg.word_min_count, cfg.word_max_fraction))
        for pname in cfg.meta_paths:
            path = metapath(pname)
            graph = project_metapath(net, path)
            walks = wk.sample_walks(net, path, cfg.walks_per_node, cfg.walk_length,
                                    seed=cfg.seed, window=cfg.window, graph=graph)
            z0 = em.init_vectors(block, path, cfg.dim, seed=cfg.seed, net=net)
            pairs = wk.context_pair_arrays(walks)
            if len(pairs[0]):
                ncfg = em.NegSamplingConfig.from_frequencies(
                    wk.walk_frequencies(walks, len(block)), cfg.negatives)
                table, _ = em.train_skipgram(
                    pairs, z0, ncfg, epochs=cfg.epochs, lr0=cfg.lr0,
                    lr_min=cfg.lr_min, seed=cfg.seed, mode=cfg.mode,
                    threads=cfg.threads, path_name=pname)
                vecs = table.vectors
            else:
                vecs = z0
            em.save_table(vecs, block.ids(), out / f"{name.replace(' ', '_')}.{pname}.emb")
    return EXIT_OK


def cmd_fuse(args):
    cfg = _config_from_args(args)
    corpus, truth, names, out = _stage_setup(cfg, args)
    for name in names:
        res = _structural(cfg, corpus, truth, name)
        if res is None:
            continue
        block, Z, M_st, alphas = res
        stem = name.replace(" ", "_")
        em.save_table(Z, block.ids(), out / f"{stem}.fused.emb")
        np.save(out / f"{stem}.Mst.npy", M_st)
        with open(out / f"{stem}.alpha.json", "w") as f:
            json.dump(alphas, f, sort_keys=True, indent=2)
    return EXIT_OK


def _structural(cfg, corpus, truth, name):
    block = cp.build_block(corpus, name)
    if block is None:
        return None
    net = build_hetnet(block, (cfg.word_min_count, cfg.word_max_fraction))
    Z_list = []
    for pname in cfg.meta_paths:
        path = metapath(pname)
        graph = project_metapath(net, path)
        walks = wk.sample_walks(net, path, cfg.walks_per_node, cfg.walk_length,
                                seed=cfg.seed, window=cfg.window, graph=graph)
        z0 = em.init_vectors(block, path, cfg.dim, seed=cfg.seed, net=net)
        pairs = wk.context_pair_arrays(walks)
        if len(pairs[0]):
            ncfg = em.NegSamplingConfig.from_frequencies(
                wk.walk_frequencies(walks, len(block)), cfg.negatives)
            table, _ = em.train_skipgram(pairs, z0, ncfg, epochs=cfg.epochs,
                                         lr0=cfg.lr0, lr_min=cfg.lr_min,
                                         seed=cfg.seed, mode=cfg.mode,
                                         threads=cfg.threads, path_name=pname)
            Z_list.append(table.vectors)
        else:
            Z_list.append(z0)
    A = fu.build_coauthor_adjacency(block, net, truth if cfg.supervised_adjacency else None)
    if cfg.attention:
        _, fused, _ = fu.train_attention(
            Z_list, A, epochs=cfg.attention_epochs, lr=cfg.attention_lr,
            neg_ratio=cfg.neg_pair_ratio, fine_tune=cfg.fine_tune,
            hidden=cfg.attention_hidden, seed=cfg.seed)
        Z, alphas = fused.Z, fused.alphas
    else:
        alphas = np.full(len(Z_list), 1.0 / len(Z_list))
        Z = fu.fuse_embeddings(Z_list, alphas)
    M_st = fu.structural_similarity(Z)
    return block, Z, M_st, {p: float(a) for p, a in zip(cfg.meta_paths, alphas)}


def cmd_semantic(args):
    cfg = _config_from_args(args)
    corpus, _, names, out = _stage_setup(cfg, args)
    for name in names:
        block = cp.build_block(corpus, name)
        if block is None:
            continue
        table = se.train_doc_vectors(
            se.build_doc_corpus(block), dim=cfg.semantic_dim,
            epochs=cfg.semantic_epochs, negatives=cfg.semantic_negatives,
            min_count=cfg.semantic_min_count, seed=cfg.seed,
            mode=cfg.mode, threads=cfg.threads)
        em.save_table(table.vectors, block.ids(), out / f"{name.replace(' ', '_')}.doc.emb")
    return EXIT_OK


def cmd_cluster(args):
    cfg = _config_from_args(args)
    res = run_pipeline(cfg)
    print(json.dumps({n: len(c) for n, c in res.assignments.items()}, sort_keys=True))
    return EXIT_STAGE if res.failures else EXIT_OK


def cmd_run(args):
    cfg = _config_from_args(args)
    res = run_pipeline(cfg)
    summary = {
        "names": len(res.assignments),
        "failures": sorted(res.failures),
        "macro_pairwise_f1": res.report.macro_f1 if res.report else None,
        "out_dir": cfg.out_dir,
        "config_hash": config_hash(cfg),
    }
    print(json.dumps(summary, sort_keys=True, indent=2))
    return EXIT_STAGE if res.failures else EXIT_OK


def cmd_ablate(args):
    cfg = _config_from_args(args)
    variants = [v.strip() for v in args.variants.split(",") if v.strip()] if args.variants else []
    for v in variants:
        apply_variant(cfg, v)  # validate before any expensive work
    table = run_ablation(cfg, variants)
    width = max(len(k) for k in table)
    for k in ["full"] + variants:
        print(f"{k:<{width}}  {table[k]:.4f}")
    return EXIT_OK


def cmd_eval(args):
    with open(args.pred, encoding="utf-8") as f:
        pred = json.load(f)
    _, truth = cp.load_corpus(args.pubs, args.format or "whoiswho-json", args.labels) \
        if args.pubs else (None, cp.load_labels(args.labels))
    results = []
    for name, clusters in sorted(pred.items()):
        if name not in truth.entities:
            continue
        entities = truth.entities[name]
        labeled = set().union(*entities) if entities else set()
        kept = [[p for p in c if p in labeled] for c in clusters]
        p, r, f1 = ev.pairwise_prf([c for c in kept if c], entities)
        results.append(ev.NameResult(
            name=name, precision=p, recall=r, f1=f1,
            n_pubs=sum(len(c) for c in clusters),
            n_pred_clusters=len(clusters), n_true_entities=len(entities),
            n_excluded=sum(len(c) for c in clusters) - sum(len(c) for c in kept)))
    if not results:
        print("no overlapping names between prediction and labels", file=sys.stderr)
        return EXIT_DATA
    report = ev.make_report(results)
    if args.out:
        ev.write_report(report, args.out)
    print(json.dumps({"macro_pairwise_f1": report.macro_f1}, indent=2))
    if args.gate is not None and report.macro_f1 < args.gate:
        print(f"macro F1 {report.macro_f1:.4f} below gate {args.gate}", file=sys.stderr)
        return EXIT_GATE
    return EXIT_OK


def build_parser():
    parser = _Parser(prog="namesplit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    for name, fn in [
        ("ingest", cmd_ingest), ("walk", cmd_walk), ("embed", cmd_embed),
        ("fuse", cmd_fuse), ("semantic", cmd_semantic), ("cluster", cmd_cluster),
        ("run", cmd_run),
    ]:
        p = sub.add_parser(name)
        _add_common(p)
        p.set_defaults(fn=fn)

    p = sub.add_parser("ablate")
    _add_common(p)
    p.add_argument("--variants", default="-PAP,-POP,-PVP,-PWP,+PYP,+PAPAP,-att")
    p.set_defaults(fn=cmd_ablate)

    p = sub.add_parser("synth")
    p.add_argument("--authors", type=int, default=5)
    p.add_argument("--pubs-per-author", type=int, default=10)
    p.add_argument("--pool", type=int, default=4)
    p.add_argument("--vocab", type=int, default=6)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--block-name", default="wei li")
    p.add_argument("--out")
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("eval")
    p.add_argument("--pred", required=True, help="assignments JSON")
    p.add_argument("--labels", required=True)
    p.add_argument("--pubs")
    p.add_argument("--format", choices=["whoiswho-json", "jsonl"])
    p.add_argument("--out", help="report path")
    p.add_argument("--gate", type=float, help="nonzero exit if macro F1 is below")
    p.set_defaults(fn=cmd_eval)
    return parser


def main(argv=None):
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_USAGE
    try:
        return args.fn(args)
    except (cp.CorpusError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # pragma: no cover - last resort
        print(f"stage failure: {exc}", file=sys.stderr)
        return EXIT_STAGE


if __name__ == "__main__":
    sys.exit(main())
