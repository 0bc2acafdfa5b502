import numpy as np
import pytest

from ratouch import integrator as I
from ratouch import retriever as R
from ratouch.corpus import StubCaptioner, build_corpus, synth_manifest
from ratouch.errors import ConfigError, DimensionError
from ratouch.features import synth_trimodal
from ratouch.index import build_index
from ratouch.numcore.gradcheck import check_gradients

VOCAB = I.AdjectiveVocab(("hard", "rough", "smooth", "soft", "sticky", "warm"))


def _perturbed(model, scale=0.2, seed=0):
    rng = np.random.default_rng(seed)
    model.params.load({k: v + scale * rng.normal(size=v.shape) for k, v in model.params.arrays().items()})
    return model


def test_vocab_from_captions_sorted_unique():
    v = I.AdjectiveVocab.from_captions(["soft, hard", "Hard, rough "])
    assert v.words == ("hard", "rough", "soft")
    assert v.multi_hot(["soft, rough"]).tolist() == [[0.0, 1.0, 1.0]]
    with pytest.raises(ConfigError):
        I.AdjectiveVocab(("a", "a"))


def test_empty_vocab_rejected():
    with pytest.raises(ConfigError):
        I.init_integrator(I.AdjectiveVocab(()), dim=8, prompt_dim=8)


def test_zero_retrievals_leave_prompt_unchanged(rng):
    model = _perturbed(I.init_integrator(VOCAB, dim=8, prompt_dim=12, heads=2))
    T, p = rng.normal(size=8), rng.normal(size=12)
    empty = np.zeros((0, 8))
    assert np.array_equal(I.integrate(T, empty, empty, p, model).data, p)


def test_fresh_integrator_is_identity_on_prompt(rng):
    model = I.init_integrator(VOCAB, dim=8, prompt_dim=12, heads=2)
    T, p = rng.normal(size=(2, 8)), rng.normal(size=(2, 12))
    R_v, R_l = rng.normal(size=(2, 3, 8)), rng.normal(size=(2, 3, 8))
    assert np.array_equal(I.integrate(T, R_v, R_l, p, model).data, p)


def test_integrate_manual_composition(rng):
    import ratouch.numcore as nc

    model = _perturbed(I.init_integrator(VOCAB, dim=8, prompt_dim=12, hidden=6, heads=2))
    T, p = rng.normal(size=8), rng.normal(size=12)
    R_v, R_l = rng.normal(size=(3, 8)), rng.normal(size=(3, 8))
    a = model.params.arrays()
    t = T[None]
    ctx = (nc.multihead_attention(t, R_v, R_v, model.params, 2, "ca_v").data
           + nc.multihead_attention(t, R_l, R_l, model.params, 2, "ca_l").data)[0]
    f = ctx @ a["fuse.w"] + a["fuse.b"]
    h = f @ a["ffn.in.w"] + a["ffn.in.b"]
    g = 0.5 * h * (1 + np.tanh(np.sqrt(2 / np.pi) * (h + 0.044715 * h ** 3)))
    expected = p + f + g @ a["ffn.out.w"] + a["ffn.out.b"]
    assert np.allclose(I.integrate(T, R_v, R_l, p, model).data, expected, atol=1e-12)


@pytest.mark.parametrize("modality,ignored", [("image", "R_l"), ("text", "R_v")])
def test_modality_mask_ignores_other_branch(rng, modality, ignored):
    model = _perturbed(I.init_integrator(VOCAB, dim=8, prompt_dim=8, heads=2, modality=modality))
    T, p = rng.normal(size=8), rng.normal(size=8)
    R_v, R_l = rng.normal(size=(3, 8)), rng.normal(size=(3, 8))
    base = I.integrate(T, R_v, R_l, p, model).data
    if ignored == "R_l":
        other = I.integrate(T, R_v, rng.normal(size=(3, 8)), p, model).data
    else:
        other = I.integrate(T, rng.normal(size=(3, 8)), R_l, p, model).data
    assert np.array_equal(base, other)


def test_integrate_shape_errors(rng):
    model = I.init_integrator(VOCAB, dim=8, prompt_dim=8, heads=2)
    with pytest.raises(DimensionError):
        I.integrate(np.ones(8), np.ones((3, 8)), np.ones((2, 8)), np.ones(8), model)
    with pytest.raises(DimensionError):
        I.integrate(np.ones(4), np.ones((3, 4)), np.ones((3, 4)), np.ones(8), model)


def test_predict_adjectives_tie_break():
    logits = np.array([[0.5, 2.0, 0.5, 0.5, 2.0, -1.0]])
    assert I.predict_adjectives(logits, VOCAB) == [["rough", "sticky", "hard", "smooth", "soft"]]


def test_head_and_integrator_gradients(rng):
    model = _perturbed(I.init_integrator(VOCAB, dim=8, prompt_dim=8, hidden=8, heads=2))
    V, T = rng.normal(size=(2, 8)), rng.normal(size=(2, 8))
    R_v, R_l = rng.normal(size=(2, 3, 8)), rng.normal(size=(2, 3, 8))
    Y = VOCAB.multi_hot(["hard, soft", "warm"])
    worst, _ = check_gradients(lambda: I.multilabel_loss(I.forward(V, T, R_v, R_l, model), Y), model.params)
    assert worst < 1e-4


def _world():
    samples = synth_trimodal(48, dim=16, seed=3)
    entries = build_corpus(synth_manifest(60, n_classes=8, seed=0), StubCaptioner(), dim=16, workers=1)
    return samples, build_index(entries), R.init_retriever(16, seed=0)


def test_training_keeps_retriever_frozen():
    samples, index, retriever = _world()
    before = retriever.params.checksum()
    model, trace = I.train_integrator(samples, retriever, index, I.IntegratorTrainConfig(epochs=2, batch_size=8),
                                      prompt_dim=16)
    assert retriever.params.checksum() == before
    assert all(not p.requires_grad for _, p in retriever.params.items())
    assert len(trace) == 2 and trace[-1]["loss"] < trace[0]["loss"]


def test_gather_retrievals_shapes_and_modes():
    samples, index, retriever = _world()
    for mode in ("fused", "image", "tactile"):
        R_v, R_l = I.gather_retrievals(samples[:5], retriever, index, 3, mode)
        assert R_v.shape == R_l.shape == (5, 3, 16)
    R_v, _ = I.gather_retrievals(samples[:5], retriever, index, 0)
    assert R_v.shape == (5, 0, 16)
    with pytest.raises(ConfigError):
        I.gather_retrievals(samples[:5], retriever, index, 3, "smell")


def test_checkpoint_round_trip_predictions(tmp_path):
    samples, index, retriever = _world()
    model, _ = I.train_integrator(samples, retriever, index, I.IntegratorTrainConfig(epochs=1, batch_size=8),
                                  prompt_dim=16)
    path = tmp_path / "i.ckpt"
    I.save_integrator(model, path)
    back = I.load_integrator(path, model.vocab, 16, 16)
    ret = I.gather_retrievals(samples[:6], retriever, index, 5)
    assert I.predict(samples[:6], back, ret) == I.predict(samples[:6], model, ret)
