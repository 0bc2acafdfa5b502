"""Command-line entry point.

Artifacts live under ``--out``::

    corpus/            shards + manifest.tsv          (build-corpus)
    index.npz          unit key rows and payload      (build-index)
    retriever.ckpt     query network parameters       (train-retriever)
    integrator.ckpt    integrator + head parameters   (train-integrator)
    *.tsv              reports

Exit status: 0 success, 1 validation/usage error, 2 I/O error.
"""

from __future__ import annotations

import argparse
import logging
import shlex
import sys
import time
from pathlib import Path

import numpy as np

from .. import __version__
from ..corpus import PipeCaptioner, StubCaptioner, build_corpus, build_shards, load_corpus, synth_manifest
from ..corpus import stratified_sample, vocab_stats
from ..errors import FormatError, RaTouchError
from ..index import VectorIndex, build_index
from ..integrator import AdjectiveVocab, load_integrator, predict, save_integrator, train_integrator
from ..retriever import load_retriever, metrics_log_lines, save_retriever, train_retriever
from . import experiments as ex
from .config import MODALITY_MASKS, QUERY_MODES, ExperimentConfig, dump_config, load_config, parse_config_text
from .reports import SCORE_METRIC, EvalReport

log = logging.getLogger("ratouch")

COMMANDS = (
    "build-corpus",
    "build-index",
    "train-retriever",
    "train-integrator",
    "retrieve",
    "eval",
    "ablate",
    "sweep-k",
    "sweep-subset",
)


class UsageError(RaTouchError, ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{message}\n\n{self.format_usage()}")


def _global_flags(p, suppress):
    default = argparse.SUPPRESS if suppress else None
    p.add_argument("--seed", type=int, default=default)
    p.add_argument("--dim", type=int, default=default)
    p.add_argument("--config", default=default, help="key=value config file")
    p.add_argument("--out", default=default, help="artifact directory")
    p.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS if suppress else False)


def build_parser():
    parser = _Parser(prog="ratouch", description="Retrieval-augmented visuo-tactile pipeline")
    parser.add_argument("--version", action="version", version=f"ratouch {__version__}")
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def cmd(name, help_):
        p = sub.add_parser(name, help=help_)
        _global_flags(p, suppress=True)
        return p

    p = cmd("build-corpus", "recaption a synthetic manifest and write shards")
    p.add_argument("--size", dest="corpus_size", type=int)
    p.add_argument("--classes", dest="n_classes", type=int)
    p.add_argument("--subset", dest="subset_size", type=int)
    p.add_argument("--noise", type=float)
    p.add_argument("--shard-capacity", dest="shard_capacity", type=int)
    p.add_argument("--captioner-cmd", dest="captioner_cmd", help="subprocess speaking the line protocol")
    p.add_argument("--workers", type=int, default=4)

    cmd("build-index", "index corpus caption embeddings").add_argument(
        "--key", dest="key_mode", choices=("text", "image"))

    p = cmd("train-retriever", "train the tactile-guided query network")
    p.add_argument("--epochs", dest="retriever_epochs", type=int)
    p.add_argument("--batch", dest="retriever_batch", type=int)
    p.add_argument("--n-train", dest="n_train", type=int)

    p = cmd("train-integrator", "train the integrator with the retriever frozen")
    p.add_argument("--epochs", dest="integrator_epochs", type=int)
    p.add_argument("--batch", dest="integrator_batch", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--modality", choices=MODALITY_MASKS)
    p.add_argument("--query-mode", dest="query_mode", choices=QUERY_MODES)

    p = cmd("retrieve", "print top-k corpus hits for a held-out sample")
    p.add_argument("--k", type=int)
    p.add_argument("--sample", type=int, default=0, help="held-out sample index")
    p.add_argument("--query-mode", dest="query_mode", choices=QUERY_MODES)
    p.add_argument("--key", dest="key_mode", choices=("text", "image"))

    cmd("eval", "score held-out predictions against ground-truth captions")

    p = cmd("ablate", "query/key retrieval grid (and integration modality grid)")
    p.add_argument("--k", type=int)
    p.add_argument("--integration", action="store_true", help="also run the image/text/both grid")

    p = cmd("sweep-k", "evaluate a range of retrieval sizes")
    p.add_argument("--k-values", dest="k_values", default="1,2,3,4,5,6,7,8,9,10")

    p = cmd("sweep-subset", "evaluate stratified corpus subsets of several sizes")
    p.add_argument("--sizes", default="1000,2000,4000")
    return parser


_CONFIG_KEYS = {name for name, _ in ExperimentConfig().items()}


RUN_CONFIG = "run.cfg"


def resolve_config(args):
    """Defaults < ``<out>/run.cfg`` from earlier steps < ``--config`` file < flags."""
    file_values = {}
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.is_file():
            raise FileNotFoundError(f"config file not found: {path}")
        file_values = parse_config_text(path.read_text(encoding="utf-8"), str(path))
    overrides = {k: v for k, v in vars(args).items() if k in _CONFIG_KEYS and v is not None}
    out = Path(overrides.get("out") or file_values.get("out") or ExperimentConfig().out)
    cfg = ExperimentConfig()
    if (out / RUN_CONFIG).is_file():
        cfg = load_config(out / RUN_CONFIG)
    return cfg.replace(**{**file_values, **overrides, "out": str(out)})


def _out(cfg):
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _require(path, what):
    if not Path(path).exists():
        raise FileNotFoundError(f"missing {what}: {path} (run the producing subcommand first)")
    return Path(path)


# -- artifact helpers ---------------------------------------------------------------

def save_index(index, path):
    np.savez(path, ids=index.ids, r_v=index.r_v, r_l=index.r_l,
             captions=np.array(index.captions, dtype=object), labels=np.array(index.labels or []),
             key=np.array(index.key))


def load_index(path):
    with np.load(_require(path, "index"), allow_pickle=True) as z:
        labels = z["labels"].tolist() or None
        return VectorIndex(z["ids"], z["r_v"], z["r_l"], z["captions"].tolist(), key=str(z["key"]), labels=labels)


def _retriever(cfg, out):
    return load_retriever(_require(out / "retriever.ckpt", "retriever checkpoint"), cfg.dim, cfg.heads)


def _world(cfg, out, with_entries=False):
    index = load_index(out / "index.npz")
    train, held = ex.splits(cfg)
    entries = _corpus(cfg, out) if with_entries else []
    return ex.World(cfg, entries, index, train, held, _retriever(cfg, out))


def _corpus(cfg, out):
    corpus_dir = Path(cfg.corpus) if cfg.corpus else out / "corpus"
    _require(corpus_dir / "manifest.tsv", "corpus manifest")
    return load_corpus(corpus_dir, expected_dim=cfg.dim)


# -- subcommands -------------------------------------------------------------------

def cmd_build_corpus(cfg, args, out):
    records = synth_manifest(cfg.corpus_size, cfg.n_classes, ex.derived_seed(cfg.seed, "manifest"))
    if cfg.subset_size:
        records = stratified_sample(records, cfg.subset_size, cfg.seed)
    client = PipeCaptioner(shlex.split(args.captioner_cmd)) if args.captioner_cmd else StubCaptioner()
    try:
        entries = build_corpus(records, client, cfg.dim, noise=cfg.noise, workers=args.workers)
    finally:
        if hasattr(client, "close"):
            client.close()
    shards, manifest = build_shards(entries, cfg.shard_capacity, out / "corpus")
    stats = vocab_stats(entries)
    print(f"entries={len(entries)} shards={len(shards)} manifest={manifest}")
    print(f"unique_words={stats['unique_word_count']} unique_captions={stats['unique_caption_count']}")


def cmd_build_index(cfg, args, out):
    index = build_index(_corpus(cfg, out), key=cfg.key_mode)
    save_index(index, out / "index.npz")
    print(f"indexed={len(index)} dim={index.dim} key={index.key}")


def cmd_train_retriever(cfg, args, out):
    train, _ = ex.splits(cfg)
    model, trace = train_retriever(train, ex.retriever_config(cfg), dim=cfg.dim, heads=cfg.heads)
    save_retriever(model, out / "retriever.ckpt")
    (out / "retriever_metrics.tsv").write_text("\n".join(metrics_log_lines(trace)) + "\n", encoding="utf-8")
    last = trace[-1]
    print(f"epochs={len(trace)} loss={last['loss']:.6f} mean_cos_QL={last['mean_cos_QL']:.6f}")


def cmd_train_integrator(cfg, args, out):
    world = _world(cfg, out)
    vocab = AdjectiveVocab.from_captions([s.caption for s in world.train])
    model, trace = train_integrator(
        world.train, world.retriever, world.index.with_key(cfg.key_mode), ex.integrator_config(cfg),
        vocab=vocab, prompt_dim=cfg.prompt_dim, heads=cfg.heads, modality=cfg.modality,
        retrievals=ex._retrievals(world, cfg, world.train),
    )
    save_integrator(model, out / "integrator.ckpt")
    (out / "vocab.txt").write_text("\n".join(vocab.words) + "\n", encoding="utf-8")
    print(f"epochs={len(trace)} loss={trace[-1]['loss']:.6f} vocab={len(vocab)}")


def cmd_retrieve(cfg, args, out):
    world = _world(cfg, out)
    if not 0 <= args.sample < len(world.held):
        raise UsageError(f"--sample must lie in [0, {len(world.held)})")
    s = world.held[args.sample]
    index = world.index.with_key(cfg.key_mode)
    if cfg.query_mode == "fused":
        from ..retriever import retrieve
        res = retrieve(s.visual, s.tactile, world.retriever, index, cfg.k)
    else:
        res = index.topk(s.visual if cfg.query_mode == "image" else s.tactile, cfg.k)
    for line in res.lines():
        print(line)


def cmd_eval(cfg, args, out):
    t0 = time.perf_counter()
    world = _world(cfg, out)
    words = _require(out / "vocab.txt", "vocabulary").read_text(encoding="utf-8").split()
    model = load_integrator(_require(out / "integrator.ckpt", "integrator checkpoint"), AdjectiveVocab(tuple(words)),
                            cfg.dim, cfg.prompt_dim, heads=cfg.heads, modality=cfg.modality)
    preds = predict(world.held, model, ex._retrievals(world, cfg, world.held))
    rows, scores = [], []
    for s, pred in zip(world.held, preds):
        sc = ex.score_description(pred, s.caption, cfg.dim)
        scores.append(sc)
        rows.append([s.id, s.caption, pred, sc, int(sorted(pred.split(", ")) == sorted(s.caption.split(", ")))])
    report = EvalReport(SCORE_METRIC, cfg, ["sample_id", "ground_truth", "prediction", "score", "exact_match"],
                        rows, scores, runtime_s=time.perf_counter() - t0)
    path = report.write(out / "eval_report.tsv")
    print(f"mean={report.mean:.6f} std={report.std:.6f} n={len(scores)} report={path}")


def cmd_ablate(cfg, args, out):
    world = _world(cfg, out)
    report = ex.run_query_ablation(world)
    report.write(out / "ablation_query.tsv")
    for row in report.rows:
        print("\t".join(str(v) if not isinstance(v, float) else f"{v:.4f}" for v in row))
    if args.integration:
        rep = ex.run_integration_ablation(world)
        rep.write(out / "ablation_integration.tsv")
        for row in rep.rows:
            print("\t".join(str(v) if not isinstance(v, float) else f"{v:.4f}" for v in row))


def _int_list(text):
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise UsageError(f"expected comma-separated integers, got {text!r}") from exc


def cmd_sweep_k(cfg, args, out):
    report = ex.run_k_sweep(_world(cfg, out), _int_list(args.k_values))
    report.write(out / "sweep_k.tsv")
    for k, mean, std, em in report.rows:
        print(f"{k}\t{mean:.6f}\t{std:.6f}\t{em:.4f}")


def cmd_sweep_subset(cfg, args, out):
    report = ex.run_subset_sweep(_world(cfg, out, with_entries=True), _int_list(args.sizes))
    report.write(out / "sweep_subset.tsv")
    for row in report.rows:
        print("\t".join(f"{v:.6f}" if isinstance(v, float) else str(v) for v in row))


HANDLERS = {
    "build-corpus": cmd_build_corpus,
    "build-index": cmd_build_index,
    "train-retriever": cmd_train_retriever,
    "train-integrator": cmd_train_integrator,
    "retrieve": cmd_retrieve,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "sweep-k": cmd_sweep_k,
    "sweep-subset": cmd_sweep_subset,
}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(parser.format_usage())
        logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        cfg = resolve_config(args)
        out = _out(cfg)
        HANDLERS[args.command](cfg, args, out)
        (out / RUN_CONFIG).write_text(dump_config(cfg), encoding="utf-8")
    except (FormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (RaTouchError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
