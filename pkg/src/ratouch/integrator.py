"""Texture-aware integration of retrieved knowledge into the visual prompt.

    p   = Prompt(V + T)                              (D -> D')
    a_V = CA_v(T, R_v, R_v),  a_L = CA_l(T, R_l, R_l)
    f   = Fuse(a_V + a_L)                            (D -> D')
    p'  = p + f + W2 gelu(W1 f)                      (FFN with its own skip)

A multi-label adjective head on p' stands in for the language model.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from . import numcore as nc
from .errors import ConfigError, DimensionError

log = logging.getLogger(__name__)

MODALITIES = ("both", "image", "text")


@dataclass
class AdjectiveVocab:
    words: tuple
    index: dict = field(init=False, repr=False)

    def __post_init__(self):
        if len(set(self.words)) != len(self.words):
            raise ConfigError("duplicate adjectives in vocabulary")
        self.index = {w: i for i, w in enumerate(self.words)}

    @classmethod
    def from_captions(cls, captions):
        words = {w.strip().lower() for c in captions for w in c.split(",") if w.strip()}
        return cls(tuple(sorted(words)))

    def __len__(self):
        return len(self.words)

    def multi_hot(self, captions):
        out = np.zeros((len(captions), len(self.words)))
        for r, c in enumerate(captions):
            for w in c.split(","):
                j = self.index.get(w.strip().lower())
                if j is not None:
                    out[r, j] = 1.0
        return out


@dataclass
class IntegratorModel:
    params: nc.ParamStore
    vocab: AdjectiveVocab
    dim: int
    prompt_dim: int
    heads: int = 4
    modality: str = "both"


def init_integrator(vocab, dim=768, prompt_dim=4096, hidden=None, heads=4, seed=0, modality="both"):
    """Fresh integrator. Fuse and FFN-out start at zero so p' == p at init."""
    if modality not in MODALITIES:
        raise ConfigError(f"modality must be one of {MODALITIES}")
    if not len(vocab):
        raise ConfigError("empty adjective vocabulary")
    hidden = hidden or prompt_dim
    rng = np.random.default_rng(seed)
    ps = nc.ParamStore()
    nc.add_linear(ps, "prompt", dim, prompt_dim, rng)
    nc.add_attention(ps, "ca_v", dim, rng, zero_out=False)
    nc.add_attention(ps, "ca_l", dim, rng, zero_out=False)
    nc.add_linear(ps, "fuse", dim, prompt_dim, rng, zero=True)
    nc.add_linear(ps, "ffn.in", prompt_dim, hidden, rng)
    nc.add_linear(ps, "ffn.out", hidden, prompt_dim, rng, zero=True)
    nc.add_linear(ps, "head", prompt_dim, len(vocab), rng)
    return IntegratorModel(ps, vocab, dim, prompt_dim, heads, modality)


def make_visual_prompt(V, T, model):
    V, T = nc.tensor(V), nc.tensor(T)
    if V.shape != T.shape or V.shape[-1] != model.dim:
        raise DimensionError(f"visual {V.shape} / tactile {T.shape} vs model dim {model.dim}")
    return nc.linear(V + T, model.params, "prompt")


def integrate(T, R_v, R_l, p, model):
    """Enriched prompt p' for tactile query(ies) T and K retrieved pairs each.

    Shapes: T (D,) or (B, D); R_v, R_l (K, D) or (B, K, D); p (D',) or (B, D').
    K == 0 returns p unchanged.
    """
    T, R_v, R_l, p = nc.tensor(T), nc.tensor(R_v), nc.tensor(R_l), nc.tensor(p)
    single = T.ndim == 1
    if R_v.shape != R_l.shape:
        raise DimensionError(f"R_v {R_v.shape} and R_l {R_l.shape} differ")
    k = R_v.shape[-2] if R_v.ndim >= 2 else 0
    if k == 0 or R_v.size == 0:
        return p
    if T.shape[-1] != model.dim or R_v.shape[-1] != model.dim:
        raise DimensionError("tactile / retrieved feature dim does not match model")
    ps, h = model.params, model.heads
    if single:
        t = T.reshape(1, 1, model.dim)
        rv = R_v.reshape(1, k, model.dim)
        rl = R_l.reshape(1, k, model.dim)
    else:
        t = T.reshape(T.shape[0], 1, model.dim)
        rv, rl = R_v, R_l
    ctx = None
    if model.modality in ("both", "image"):
        ctx = nc.multihead_attention(t, rv, rv, ps, h, "ca_v")
    if model.modality in ("both", "text"):
        a_l = nc.multihead_attention(t, rl, rl, ps, h, "ca_l")
        ctx = a_l if ctx is None else ctx + a_l
    fused = nc.linear(ctx, ps, "fuse")
    fused = fused + nc.linear(nc.gelu(nc.linear(fused, ps, "ffn.in")), ps, "ffn.out")
    fused = fused.reshape(model.prompt_dim) if single else fused.reshape(T.shape[0], model.prompt_dim)
    return p + fused


def caption_logits(p_prime, model):
    return nc.linear(nc.tensor(p_prime), model.params, "head")


def caption_head(p_prime, model):
    """Per-adjective scores as an array (one row per prompt)."""
    return caption_logits(p_prime, model).data


def predict_adjectives(logits, vocab, n=5):
    """Top-n adjectives by score; equal scores resolve in vocabulary order."""
    logits = np.atleast_2d(logits)
    out = []
    for row in logits:
        order = np.argsort(-row, kind="stable")[:n]
        out.append([vocab.words[i] for i in order])
    return out


def forward(V, T, R_v, R_l, model):
    p = make_visual_prompt(V, T, model)
    return caption_logits(integrate(T, R_v, R_l, p, model), model)


def multilabel_loss(logits, targets):
    return nc.bce_with_logits(logits, targets).mean()


# -- training ------------------------------------------------------------------

@dataclass(frozen=True)
class IntegratorTrainConfig:
    epochs: int = 1
    batch_size: int = 1
    lr: float = 1e-3
    weight_decay: float = 0.02
    warmup_epochs: int = 0
    k: int = 5
    seed: int = 0

    def optim(self):
        return nc.OptimConfig(
            learning_rate=self.lr,
            weight_decay=self.weight_decay,
            warmup_epochs=self.warmup_epochs,
            total_epochs=self.epochs,
        )


def gather_retrievals(samples, retriever, index, k, query_mode="fused"):
    """(R_v, R_l) arrays of shape (N, k, D) from the frozen retriever.

    Retrieval is computed once up front: frozen retriever parameters make it
    a pure function of the sample.
    """
    from .retriever import encode_queries

    n, dim = len(samples), len(samples[0].tactile)
    if k == 0 or index is None or not len(index):
        z = np.zeros((n, 0, dim))
        return z, z.copy()
    V = np.stack([s.visual for s in samples])
    T = np.stack([s.tactile for s in samples])
    if query_mode == "fused":
        Q = encode_queries(V, T, retriever)
    elif query_mode == "image":
        Q = V
    elif query_mode == "tactile":
        Q = T
    else:
        raise ConfigError(f"unknown query mode {query_mode!r}")
    results = index.topk_batch(Q, k)
    kk = min(k, len(index))
    R_v = np.stack([r.visual() for r in results]).astype(np.float64).reshape(n, kk, dim)
    R_l = np.stack([r.text() for r in results]).astype(np.float64).reshape(n, kk, dim)
    return R_v, R_l


def train_integrator(samples, retriever, index, cfg=IntegratorTrainConfig(), model=None,
                     vocab=None, prompt_dim=4096, hidden=None, heads=4, modality="both",
                     retrievals=None, on_epoch=None):
    """Fit the integrator and caption head with the retriever held frozen."""
    if not samples:
        raise ConfigError("cannot train on an empty dataset")
    if vocab is None:
        vocab = AdjectiveVocab.from_captions([s.caption for s in samples])
    dim = len(samples[0].tactile)
    if model is None:
        model = init_integrator(vocab, dim, prompt_dim, hidden, heads, cfg.seed, modality)
    frozen_sum = None
    if retriever is not None:
        retriever.params.set_trainable(False)
        frozen_sum = retriever.params.checksum()
    if retrievals is None:
        retrievals = gather_retrievals(samples, retriever, index, cfg.k)
    R_v, R_l = retrievals
    V = np.stack([s.visual for s in samples])
    T = np.stack([s.tactile for s in samples])
    Y = model.vocab.multi_hot([s.caption for s in samples])
    ocfg = cfg.optim()
    rng = np.random.default_rng(cfg.seed)
    trace = []
    for epoch in range(cfg.epochs):
        lr = nc.lr_at(ocfg, epoch)
        order = rng.permutation(len(samples))
        losses = []
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            model.params.zero_grad()
            loss = multilabel_loss(forward(V[idx], T[idx], R_v[idx], R_l[idx], model), Y[idx])
            nc.backward(loss)
            nc.adamw_step(model.params, ocfg, epoch, lr=lr)
            losses.append(loss.item() * len(idx))
        row = {"epoch": epoch, "lr": lr, "loss": float(sum(losses) / len(order))}
        trace.append(row)
        if on_epoch is not None:
            on_epoch(row)
    model.params.zero_grad()
    if retriever is not None:
        assert retriever.params.checksum() == frozen_sum, "retriever parameters changed"
    return model, trace


def predict(samples, model, retrievals):
    R_v, R_l = retrievals
    V = np.stack([s.visual for s in samples])
    T = np.stack([s.tactile for s in samples])
    logits = forward(V, T, R_v, R_l, model).data
    return [", ".join(adjs) for adjs in predict_adjectives(logits, model.vocab)]


def save_integrator(model, path):
    nc.save_checkpoint(path, model.params.arrays())


def load_integrator(path, vocab, dim, prompt_dim, hidden=None, heads=4, modality="both"):
    model = init_integrator(vocab, dim, prompt_dim, hidden, heads, modality=modality)
    model.params.load(nc.load_checkpoint(path))
    return model


def config_dict(cfg):
    return asdict(cfg)
