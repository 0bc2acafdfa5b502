"""End-to-end runs, ablation grids and sweeps on the synthetic world."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass

import numpy as np

from .. import lexicon
from ..corpus import (
    StubCaptioner,
    build_corpus,
    load_corpus,
    stratified_sample,
    synth_manifest,
    validate_caption,
    vocab_stats,
)
from ..errors import ConfigError, GraphStateError
from ..features import appearance_id, cosine, embed_caption, synth_trimodal
from ..index import build_index
from ..integrator import (
    AdjectiveVocab,
    IntegratorTrainConfig,
    gather_retrievals,
    predict,
    train_integrator,
)
from ..retriever import RetrieverTrainConfig, encode_queries, train_retriever
from .reports import (
    PRECISION_METRIC,
    QUERY_NORMALIZATION_NOTE,
    SCORE_METRIC,
    EvalReport,
)

log = logging.getLogger(__name__)

QUERY_GRID = (
    ("image", "image"),
    ("image", "text"),
    ("tactile", "image"),
    ("tactile", "text"),
    ("fused", "text"),
)
EVAL_ID_OFFSET = 10**9


def derived_seed(seed, tag):
    return lexicon.stable_hash("seed", seed, tag) % 2**32


def score_description(predicted, ground_truth, dim=64, embedder=None):
    """Cosine between caption embeddings; both captions must be well-formed."""
    pred = validate_caption(predicted)
    gt = validate_caption(ground_truth)
    if embedder is None:
        return cosine(embed_caption(pred.adjectives, dim), embed_caption(gt.adjectives, dim))
    return cosine(embedder(str(pred)), embedder(str(gt)))


# -- world construction -----------------------------------------------------------

def corpus_entries(cfg):
    if cfg.corpus:
        entries = load_corpus(cfg.corpus, expected_dim=cfg.dim)
    else:
        records = synth_manifest(cfg.corpus_size, cfg.n_classes, derived_seed(cfg.seed, "manifest"))
        entries = build_corpus(records, StubCaptioner(), cfg.dim, noise=cfg.noise, workers=1)
    if cfg.subset_size:
        entries = stratified_sample(entries, cfg.subset_size, cfg.seed)
    return entries


def splits(cfg):
    train = synth_trimodal(cfg.n_train, cfg.dim, cfg.noise, seed=derived_seed(cfg.seed, "train"))
    held = synth_trimodal(cfg.n_eval, cfg.dim, cfg.noise, seed=derived_seed(cfg.seed, "eval"),
                          id_offset=EVAL_ID_OFFSET)
    return train, held


def retriever_config(cfg):
    return RetrieverTrainConfig(
        epochs=cfg.retriever_epochs,
        batch_size=cfg.retriever_batch,
        lr=cfg.retriever_lr,
        warmup_epochs=min(cfg.retriever_warmup, cfg.retriever_epochs),
        seed=derived_seed(cfg.seed, "retriever"),
    )


def integrator_config(cfg):
    return IntegratorTrainConfig(
        epochs=cfg.integrator_epochs,
        batch_size=cfg.integrator_batch,
        lr=cfg.integrator_lr,
        k=cfg.k,
        seed=derived_seed(cfg.seed, "integrator"),
    )


@dataclass
class World:
    cfg: object
    entries: list
    index: object
    train: list
    held: list
    retriever: object = None


def prepare(cfg, train_retriever_model=True):
    entries = corpus_entries(cfg)
    index = build_index(entries)
    train, held = splits(cfg)
    world = World(cfg, entries, index, train, held)
    if train_retriever_model:
        world.retriever, _ = train_retriever(train, retriever_config(cfg), dim=cfg.dim, heads=cfg.heads)
    return world


# -- evaluation -------------------------------------------------------------------

def _retrievals(world, cfg, samples):
    if cfg.query_mode == "fused" and world.retriever is None:
        raise GraphStateError("fused query mode needs trained retriever parameters")
    index = world.index.with_key(cfg.key_mode)
    return gather_retrievals(samples, world.retriever, index, cfg.k, cfg.query_mode)


def evaluate(world, cfg=None, vocab=None):
    """Train an integrator under ``cfg`` and score held-out predictions."""
    cfg = cfg or world.cfg
    t0 = time.perf_counter()
    if vocab is None:
        vocab = AdjectiveVocab.from_captions([s.caption for s in world.train])
    model, _ = train_integrator(
        world.train, world.retriever, world.index.with_key(cfg.key_mode), integrator_config(cfg),
        vocab=vocab, prompt_dim=cfg.prompt_dim, heads=cfg.heads, modality=cfg.modality,
        retrievals=_retrievals(world, cfg, world.train),
    )
    preds = predict(world.held, model, _retrievals(world, cfg, world.held))
    rows, scores = [], []
    for s, pred in zip(world.held, preds):
        sc = score_description(pred, s.caption, cfg.dim)
        exact = sorted(pred.split(", ")) == sorted(s.caption.split(", "))
        scores.append(sc)
        rows.append([s.id, s.caption, pred, sc, int(exact)])
    return EvalReport(
        metric=SCORE_METRIC,
        config=cfg,
        columns=["sample_id", "ground_truth", "prediction", "score", "exact_match"],
        rows=rows,
        scores=scores,
        notes=[QUERY_NORMALIZATION_NOTE],
        runtime_s=time.perf_counter() - t0,
    )


def exact_match_rate(report):
    return float(np.mean([r[4] for r in report.rows])) if report.rows else 0.0


def precision_at_k(world, query_mode, key_mode, k, samples=None):
    """(precision@k, rate of appearance-matched but material-mismatched hits)."""
    samples = samples if samples is not None else world.held
    V = np.stack([s.visual for s in samples])
    T = np.stack([s.tactile for s in samples])
    if query_mode == "fused":
        if world.retriever is None:
            raise GraphStateError("fused query mode needs trained retriever parameters")
        Q = encode_queries(V, T, world.retriever)
    elif query_mode == "image":
        Q = V
    elif query_mode == "tactile":
        Q = T
    else:
        raise ConfigError(f"unknown query mode {query_mode!r}")
    index = world.index.with_key(key_mode)
    pos = {int(i): j for j, i in enumerate(index.ids)}
    labels = index.labels
    looks = [appearance_id(int(i)) for i in index.ids]
    hits_rel, confounded, total = 0, 0, 0
    for s, res in zip(samples, index.topk_batch(Q, k)):
        for eid in res.ids:
            j = pos[eid]
            total += 1
            if labels[j] == s.material_id:
                hits_rel += 1
            elif looks[j] == s.appearance_id:
                confounded += 1
    return hits_rel / total, confounded / total


def run_query_ablation(world, grid=QUERY_GRID, k=None):
    cfg = world.cfg
    k = k or cfg.k
    t0 = time.perf_counter()
    rows = []
    for query_mode, key_mode in grid:
        prec, conf = precision_at_k(world, query_mode, key_mode, k)
        rows.append([query_mode, key_mode, k, prec, conf])
    return EvalReport(
        metric=PRECISION_METRIC,
        config=cfg,
        columns=["query", "key", "k", "precision", "appearance_confusion"],
        rows=rows,
        notes=[QUERY_NORMALIZATION_NOTE],
        runtime_s=time.perf_counter() - t0,
    )


def run_integration_ablation(world, modalities=("image", "text", "both")):
    t0 = time.perf_counter()
    rows = []
    for m in modalities:
        rep = evaluate(world, world.cfg.replace(modality=m))
        rows.append([m, rep.mean, rep.std, exact_match_rate(rep)])
    return EvalReport(
        metric=SCORE_METRIC,
        config=world.cfg,
        columns=["modality", "mean_score", "std_score", "exact_match"],
        rows=rows,
        runtime_s=time.perf_counter() - t0,
    )


def run_k_sweep(world, k_values=range(1, 11)):
    t0 = time.perf_counter()
    rows = []
    for k in sorted(set(k_values)):
        rep = evaluate(world, world.cfg.replace(k=k))
        rows.append([k, rep.mean, rep.std, exact_match_rate(rep)])
    return EvalReport(
        metric=SCORE_METRIC,
        config=world.cfg,
        columns=["k", "mean_score", "std_score", "exact_match"],
        rows=rows,
        runtime_s=time.perf_counter() - t0,
    )


def run_subset_sweep(world, sizes):
    """Per size: stratified subset of the world's corpus, fresh index, integrator eval."""
    t0 = time.perf_counter()
    sizes = sorted(set(sizes))
    if sizes and sizes[-1] > len(world.entries):
        raise ConfigError(f"subset size {sizes[-1]} exceeds corpus size {len(world.entries)}")
    rows = []
    for size in sizes:
        subset = stratified_sample(world.entries, size, world.cfg.seed)
        sub_world = World(world.cfg, subset, build_index(subset), world.train, world.held, world.retriever)
        rep = evaluate(sub_world, world.cfg)
        stats = vocab_stats(subset)
        rows.append([size, rep.mean, rep.std, exact_match_rate(rep),
                     stats["unique_word_count"], stats["unique_caption_count"]])
    return EvalReport(
        metric=SCORE_METRIC,
        config=world.cfg,
        columns=["subset_size", "mean_score", "std_score", "exact_match", "unique_words", "unique_captions"],
        rows=rows,
        runtime_s=time.perf_counter() - t0,
    )
