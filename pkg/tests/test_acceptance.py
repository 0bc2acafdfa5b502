"""Exit criteria, each at its stated tolerance and runtime budget.

Every test records one PASS/FAIL line, printed in the terminal summary.
"""

import contextlib
import math
import shutil
import time
from collections import Counter

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from ratouch import integrator as I
from ratouch import numcore as nc
from ratouch import retriever as R
from ratouch.corpus import build_shards, load_corpus, stratified_sample, synth_manifest, validate_caption
from ratouch.features import stack_modalities, synth_mixed, synth_trimodal
from ratouch.harness import cli
from ratouch.harness import experiments as ex
from ratouch.harness.config import ExperimentConfig, dump_config
from ratouch.harness.reports import read_report
from ratouch.index import VectorIndex
from ratouch.numcore.gradcheck import check_gradients

pytestmark = pytest.mark.acceptance


@contextlib.contextmanager
def criterion(number, title, budget_s):
    info = {}
    t0 = time.perf_counter()
    try:
        yield info
    except BaseException as exc:
        elapsed = time.perf_counter() - t0
        ACCEPTANCE_LINES.append(f"FAIL  [{number:2d}] {title} ({elapsed:.1f}s) {type(exc).__name__}: {exc}"[:300])
        raise
    elapsed = time.perf_counter() - t0
    detail = " ".join(f"{k}={v}" for k, v in info.items())
    if elapsed >= budget_s:
        ACCEPTANCE_LINES.append(f"FAIL  [{number:2d}] {title} ({elapsed:.1f}s >= {budget_s}s budget) {detail}")
        pytest.fail(f"criterion {number} took {elapsed:.1f}s, budget {budget_s}s")
    ACCEPTANCE_LINES.append(f"PASS  [{number:2d}] {title} ({elapsed:.1f}s) {detail}")


def _jitter(store, scale, seed):
    rng = np.random.default_rng(seed)
    store.load({k: v + scale * rng.normal(size=v.shape) for k, v in store.arrays().items()})


# 1 -----------------------------------------------------------------------------------------

def test_01_gradient_correctness():
    D, Dp, B, K = 16, 32, 4, 3
    with criterion(1, "gradient correctness (max rel err < 1e-4)", 60) as info:
        rng = np.random.default_rng(0)
        model = R.init_retriever(D, heads=4, seed=0)
        _jitter(model.params, 0.2, 1)
        inputs = nc.ParamStore()
        V = inputs.add("V", rng.normal(size=(B, D)))
        T = inputs.add("T", rng.normal(size=(B, D)))
        L = rng.normal(size=(B, D))
        Qleaf = inputs.add("Q", rng.normal(size=(B, D)))
        weights = R.RetrieverLossWeights()
        c = rng.normal(size=(B, D))
        both = [model.params, inputs]

        worst = {}
        worst["query_forward"], _ = check_gradients(lambda: (R.query_forward(V, T, model) * c).sum(), both)
        worst["loss_align"], _ = check_gradients(lambda: R.loss_align(Qleaf, L, T, weights), inputs)
        worst["loss_stability"], _ = check_gradients(lambda: R.loss_stability(Qleaf, L, T, weights), inputs)
        worst["total_loss"], _ = check_gradients(lambda: R.total_loss(V, T, L, model, weights), both)

        vocab = I.AdjectiveVocab(tuple(f"w{i}" for i in range(10)))
        integ = I.init_integrator(vocab, dim=D, prompt_dim=Dp, heads=4, seed=0)
        _jitter(integ.params, 0.2, 2)
        ins = nc.ParamStore()
        Ti = ins.add("T", rng.normal(size=(B, D)))
        Rv = ins.add("R_v", rng.normal(size=(B, K, D)))
        Rl = ins.add("R_l", rng.normal(size=(B, K, D)))
        p = ins.add("p", rng.normal(size=(B, Dp)))
        cp = rng.normal(size=(B, Dp))
        worst["integrate"], _ = check_gradients(
            lambda: (I.integrate(Ti, Rv, Rl, p, integ) * cp).sum(), [integ.params, ins])
        Y = (rng.random((B, len(vocab))) < 0.5).astype(float)
        worst["caption_head"], _ = check_gradients(
            lambda: I.multilabel_loss(I.caption_logits(p, integ), Y), [integ.params, ins])
        info.update({k: f"{v:.1e}" for k, v in worst.items()})
        assert max(worst.values()) < 1e-4, worst


# 2 -----------------------------------------------------------------------------------------

def test_02_loss_unit_values():
    with criterion(2, "loss unit values", 1) as info:
        div = R.loss_div(np.eye(4, 8)).item()
        L = np.random.default_rng(0).normal(size=(3, 8))
        mse = R.loss_mse(L, L).item()
        nce = R.loss_nce(np.eye(2), np.eye(2), tau=1.0).item()
        align = R.loss_align(np.array([[1.0, 0.0]]), np.array([[2.0, 0.0]]), np.array([[0.0, 3.0]])).item()
        info.update(div=div, mse=mse, nce=f"{nce:.12f}", align=f"{align:.12f}")
        assert div == 0.0
        assert mse == 0.0
        assert abs(nce - (-2 * math.log(math.e / (math.e + 1)))) <= 1e-9
        assert abs(align - 0.2) <= 1e-9


# 3 -----------------------------------------------------------------------------------------

def test_03_index_oracle_equivalence():
    with criterion(3, "index == exhaustive oracle (10k x 100 x k)", 30) as info:
        rng = np.random.default_rng(3)
        keys = rng.normal(size=(10_000, 768))
        keys /= np.linalg.norm(keys, axis=1, keepdims=True)
        idx = VectorIndex(rng.permutation(10_000) * 7, keys, keys, ["x"] * 10_000)
        queries = rng.normal(size=(100, 768))
        worst = 0.0
        for k in (1, 5, 7, 32):
            for q in queries:
                fast, slow = idx.topk(q, k), idx.oracle_topk(q, k)
                assert np.array_equal(np.array(fast.ids), np.array(slow.ids))
                worst = max(worst, float(np.max(np.abs(np.subtract(fast.scores, slow.scores)))))
        info["max_score_diff"] = worst
        assert worst <= 1e-6


# 4 -----------------------------------------------------------------------------------------

def test_04_init_identity():
    with criterion(4, "init identity (V'==V, T'==T, p'==p)", 1):
        rng = np.random.default_rng(4)
        V, T = rng.normal(size=(5, 64)), rng.normal(size=(5, 64))
        parts = R.forward_parts(V, T, R.init_retriever(64, seed=4))
        assert np.array_equal(parts["V_refined"].data, V)
        assert np.array_equal(parts["T_refined"].data, T)
        integ = I.init_integrator(I.AdjectiveVocab(("a", "b")), dim=64, prompt_dim=96, seed=4)
        p = rng.normal(size=(5, 96))
        out = I.integrate(T, rng.normal(size=(5, 5, 64)), rng.normal(size=(5, 5, 64)), p, integ)
        assert np.array_equal(out.data, p)


# 5 -----------------------------------------------------------------------------------------

def test_05_permutation_invariance():
    with criterion(5, "integrate invariant to paired permutation of K=7", 5) as info:
        rng = np.random.default_rng(5)
        integ = I.init_integrator(I.AdjectiveVocab(("a", "b")), dim=64, prompt_dim=64, seed=5)
        _jitter(integ.params, 0.1, 5)
        T, p = rng.normal(size=64), rng.normal(size=64)
        Rv, Rl = rng.normal(size=(7, 64)), rng.normal(size=(7, 64))
        base = I.integrate(T, Rv, Rl, p, integ).data
        worst = 0.0
        for _ in range(20):
            perm = rng.permutation(7)
            out = I.integrate(T, Rv[perm], Rl[perm], p, integ).data
            worst = max(worst, float(np.max(np.abs(out - base))))
        info["max_diff"] = f"{worst:.1e}"
        assert worst <= 1e-6


# 6 -----------------------------------------------------------------------------------------

def test_06_retriever_convergence():
    with criterion(6, "retriever convergence (cos >= 0.9, recall@1 >= 0.8)", 300) as info:
        data = synth_mixed(2048 + 256, dim=64, noise=0.2, seed=1, visual_weight=0.5)
        train, held = data[:2048], data[2048:]
        cfg = R.RetrieverTrainConfig(epochs=60, batch_size=256, lr=3e-4, weight_decay=0.02, warmup_epochs=10)
        model, trace = R.train_retriever(train, cfg)
        V, T, L = stack_modalities(held)
        Q = R.encode_queries(V, T, model)
        index = VectorIndex(np.arange(len(held)), L, L, [s.caption for s in held])
        recall = float(np.mean([r.ids[0] == i for i, r in enumerate(index.topk_batch(Q, 1))]))
        final_cos = trace[-1]["mean_cos_QL"]
        held_cos = float(np.mean(np.sum(Q * L, 1) / (np.linalg.norm(Q, axis=1) * np.linalg.norm(L, axis=1))))
        info.update(train_cos=f"{final_cos:.4f}", held_out_cos=f"{held_cos:.4f}", recall_at_1=f"{recall:.3f}")
        assert final_cos >= 0.9 and held_cos >= 0.9
        assert recall >= 0.8


# 7 -----------------------------------------------------------------------------------------

def test_07_anti_collapse():
    with criterion(7, "full loss spreads queries more than alignment-only", 600) as info:
        data = synth_trimodal(2048, dim=64, noise=0.2, seed=5)
        V, T, _ = stack_modalities(data)
        cfg = R.RetrieverTrainConfig()
        full, _ = R.train_retriever(data, cfg, R.RetrieverLossWeights())
        align_only, _ = R.train_retriever(data, cfg, R.RetrieverLossWeights(lambda2=0.0, lambda3=0.0))
        c_full = R.mean_pairwise_cosine(R.encode_queries(V, T, full))
        c_align = R.mean_pairwise_cosine(R.encode_queries(V, T, align_only))
        info.update(full=f"{c_full:.4f}", align_only=f"{c_align:.4f}")
        assert c_full < c_align


# 8 -----------------------------------------------------------------------------------------

def test_08_ablation_direction():
    with criterion(8, "fused query >= unimodal; both >= min(image, text)", 600) as info:
        world = ex.prepare(ExperimentConfig())
        rows = {(r[0], r[1]): r[3] for r in ex.run_query_ablation(world).rows}
        fused = rows.pop(("fused", "text"))
        integ = {r[0]: r[1] for r in ex.run_integration_ablation(world).rows}
        info.update(fused=f"{fused:.3f}", best_unimodal=f"{max(rows.values()):.3f}",
                    **{m: f"{v:.3f}" for m, v in integ.items()})
        assert all(fused >= v for v in rows.values()), rows
        assert integ["both"] >= min(integ["image"], integ["text"])


# 9 -----------------------------------------------------------------------------------------

def test_09_corpus_contracts(tmp_path):
    with criterion(9, "corpus: captions valid, shards lossless, strata within +/-1", 30) as info:
        assert cli.main(["build-corpus", "--size", "1000", "--out", str(tmp_path), "--dim", "64"]) == 0
        entries = load_corpus(tmp_path / "corpus", expected_dim=64)
        assert len(entries) == 1000
        for e in entries:
            validate_caption(e.caption)
        build_shards(entries, 300, tmp_path / "again")
        again = load_corpus(tmp_path / "again", expected_dim=64)
        for a, b in zip(entries, again):
            assert (a.id, a.class_name, a.caption) == (b.id, b.class_name, b.caption)
            assert a.r_v.tobytes() == b.r_v.tobytes() and a.r_l.tobytes() == b.r_l.tobytes()
        manifest = synth_manifest(1000, 50, seed=ex.derived_seed(0, "manifest"))
        sizes = Counter(r.class_name for r in manifest)
        target = 250
        quota = target // len(sizes)
        counts = Counter(r.class_name for r in stratified_sample(manifest, target, seed=0))
        roomy = [counts[c] for c in sizes if sizes[c] >= quota + 1]
        info.update(classes=len(sizes), quota=quota, spread=max(roomy) - min(roomy))
        assert sum(counts.values()) == target
        assert max(roomy) - min(roomy) <= 1


# 10 ----------------------------------------------------------------------------------------

def _pipeline(out, extra):
    steps = [
        ["build-corpus", "--size", "1000"],
        ["build-index"],
        ["train-retriever", "--epochs", "5"],
        ["train-integrator", "--epochs", "1"],
        ["eval"],
    ]
    return [cli.main(step + ["--out", str(out)] + extra) for step in steps]


def test_10_end_to_end_smoke(tmp_path):
    with criterion(10, "CLI pipeline exits 0; report reproduces bit-identically", 180) as info:
        out = tmp_path / "run"
        assert _pipeline(out, ["--seed", "0"]) == [0] * 5
        report = out / "eval_report.tsv"
        first = report.read_bytes()
        embedded, _, rows = read_report(report)
        assert embedded.retriever_epochs == 5 and len(rows) == embedded.n_eval
        cfg_file = tmp_path / "embedded.cfg"
        cfg_file.write_text(dump_config(embedded))
        shutil.rmtree(out)
        assert _pipeline(out, ["--config", str(cfg_file)]) == [0] * 5
        info["bytes"] = len(first)
        assert report.read_bytes() == first
