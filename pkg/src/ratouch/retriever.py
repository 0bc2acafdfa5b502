"""Tactile-guided query network and its alignment + anti-collapse objective.

Forward pass for one (visual, tactile) pair, each a single token of width D:

    V' = V + SA_v(V, V, V)
    T' = T + SA_t(T, T, T)
    q  = T' + CA(T', V', V')      (the T' skip can be switched off)
    Q  = q + Linear(q)

Batches stack samples along a leading axis; attention never crosses samples.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from . import numcore as nc
from .errors import ConfigError, DegenerateInputError, DimensionError, GraphStateError
from .features import stack_modalities

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RetrieverLossWeights:
    lambda1: float = 0.2
    lambda2: float = 10.0
    lambda3: float = 0.1
    tau: float = 0.07

    def __post_init__(self):
        if self.tau <= 0:
            raise ConfigError("tau must be > 0")
        if min(self.lambda1, self.lambda2, self.lambda3) < 0:
            raise ConfigError("loss weights must be >= 0")


@dataclass(frozen=True)
class RetrieverTrainConfig:
    epochs: int = 60
    batch_size: int = 256
    lr: float = 3e-4
    weight_decay: float = 0.02
    warmup_epochs: int = 10
    seed: int = 0
    cosine_decay: bool = True

    def optim(self):
        return nc.OptimConfig(
            learning_rate=self.lr,
            weight_decay=self.weight_decay,
            warmup_epochs=self.warmup_epochs,
            total_epochs=self.epochs,
            cosine_decay=self.cosine_decay,
        )


@dataclass
class RetrieverModel:
    params: nc.ParamStore
    dim: int
    heads: int = 4
    query_skip: bool = True
    meta: dict = field(default_factory=dict)


def init_retriever(dim, heads=4, seed=0, query_skip=True, zero_cross_out=False):
    """Fresh parameters.

    Self-attention output projections and the final Linear start at zero, so
    V' = V, T' = T and Q = q at init. The cross-attention output projection is
    random unless ``zero_cross_out`` (a zero CA output would make Q vanish
    without the skip and leave no gradient path into the attention weights).
    """
    if dim % heads:
        raise ConfigError(f"dim {dim} not divisible by {heads} heads")
    rng = np.random.default_rng(seed)
    ps = nc.ParamStore()
    nc.add_attention(ps, "sa_v", dim, rng, zero_out=True)
    nc.add_attention(ps, "sa_t", dim, rng, zero_out=True)
    nc.add_attention(ps, "ca", dim, rng, zero_out=zero_cross_out)
    nc.add_linear(ps, "proj", dim, dim, rng, zero=True)
    return RetrieverModel(ps, dim, heads, query_skip)


def _tokens(x, dim):
    t = nc.tensor(x)
    if t.shape[-1] != dim:
        raise DimensionError(f"feature dim {t.shape[-1]} != model dim {dim}")
    if t.ndim == 1:
        return t.reshape(1, 1, dim), True
    return t.reshape(t.shape[0], 1, dim), False


def forward_parts(V, T, model):
    """All intermediate tensors of the query network, keyed by name."""
    p, h, d = model.params, model.heads, model.dim
    v, single = _tokens(V, d)
    t, _ = _tokens(T, d)
    if v.shape != t.shape:
        raise DimensionError(f"visual batch {v.shape} != tactile batch {t.shape}")
    v1 = v + nc.multihead_attention(v, v, v, p, h, "sa_v")
    t1 = t + nc.multihead_attention(t, t, t, p, h, "sa_t")
    q = nc.multihead_attention(t1, v1, v1, p, h, "ca")
    if model.query_skip:
        q = t1 + q
    Q = q + nc.linear(q, p, "proj")
    shape = (d,) if single else (v.shape[0], d)
    return {
        "V_refined": v1.reshape(shape),
        "T_refined": t1.reshape(shape),
        "q": q.reshape(shape),
        "Q": Q.reshape(shape),
    }


def query_forward(V, T, model):
    return forward_parts(V, T, model)["Q"]


# -- losses --------------------------------------------------------------------

def _norms(x):
    return nc.sqrt((x * x).sum(axis=-1, keepdims=True))


def _check_nonzero(*arrays):
    for name, a in arrays:
        a = a.data if isinstance(a, nc.Tensor) else np.asarray(a)
        if np.any(np.linalg.norm(np.atleast_2d(a), axis=-1) == 0):
            raise DegenerateInputError(f"zero-norm row in {name}")


def _unit(x):
    return x / _norms(x)


def cosine_rows(a, b):
    return (_unit(a) * _unit(b)).sum(axis=-1)


def loss_align(Q, L, T, weights=RetrieverLossWeights()):
    """Mean over rows of (1 - cos(Q, L)) + lambda1 * (1 - cos(Q, T))."""
    Q, L, T = nc.tensor(Q), nc.tensor(L), nc.tensor(T)
    _check_nonzero(("Q", Q), ("L", L), ("T", T))
    per = (1.0 - cosine_rows(Q, L)) + weights.lambda1 * (1.0 - cosine_rows(Q, T))
    return per.mean()


def loss_mse(Q, L):
    d = nc.tensor(Q) - nc.tensor(L)
    return (d * d).sum()


def loss_div(Q):
    """Sum of off-diagonal entries of the B x B cosine matrix of query rows."""
    Qn = _unit(nc.tensor(Q))
    C = nc.matmul(Qn, Qn.T)
    return C.sum() - (Qn * Qn).sum()


def loss_nce(Q, T, tau):
    """InfoNCE with tactile rows as keys; positives on the diagonal."""
    logits = nc.matmul(_unit(nc.tensor(Q)), _unit(nc.tensor(T)).T) * (1.0 / tau)
    logp = nc.log_softmax(logits, axis=1)
    return -(logp * np.eye(logits.shape[0])).sum()


def loss_stability(Q, L, T, weights=RetrieverLossWeights()):
    Q, L, T = nc.tensor(Q), nc.tensor(L), nc.tensor(T)
    if Q.ndim != 2 or Q.shape[0] < 2:
        raise ConfigError("stability loss needs a batch of at least 2 rows")
    _check_nonzero(("Q", Q), ("L", L), ("T", T))
    return (weights.lambda2 * loss_mse(Q, L)
            + weights.lambda3 * (loss_div(Q) + loss_nce(Q, T, weights.tau)))


def objective(Q, L, T, weights=RetrieverLossWeights()):
    """Batch-mean alignment term plus batch-summed stability terms."""
    return loss_align(Q, L, T, weights) + loss_stability(Q, L, T, weights)


def total_loss(V, T, L, model, weights=RetrieverLossWeights()):
    return objective(query_forward(V, T, model), L, T, weights)


# -- training ------------------------------------------------------------------

def _batches(n, batch_size, rng):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        idx = order[start:start + batch_size]
        if len(idx) >= 2:
            yield idx


def train_retriever(samples, cfg=RetrieverTrainConfig(), weights=RetrieverLossWeights(),
                    dim=None, heads=4, model=None, on_epoch=None):
    """Fit the query network; returns (model, per-epoch metric rows)."""
    if not samples:
        raise ConfigError("cannot train on an empty dataset")
    V, T, L = stack_modalities(samples)
    dim = dim or V.shape[1]
    if model is None:
        model = init_retriever(dim, heads=heads, seed=cfg.seed)
    ocfg = cfg.optim()
    rng = np.random.default_rng(cfg.seed)
    trace = []
    for epoch in range(cfg.epochs):
        lr = nc.lr_at(ocfg, epoch)
        losses, sizes = [], []
        for idx in _batches(len(V), cfg.batch_size, rng):
            model.params.zero_grad()
            loss = total_loss(V[idx], T[idx], L[idx], model, weights)
            nc.backward(loss)
            nc.adamw_step(model.params, ocfg, epoch, lr=lr)
            losses.append(loss.item())
            sizes.append(len(idx))
        Q = query_forward(V, T, model).data
        row = {
            "epoch": epoch,
            "lr": lr,
            "loss": float(np.average(losses, weights=sizes)),
            "mean_cos_QL": float(np.mean(_cos_np(Q, L))),
            "mean_cos_QT": float(np.mean(_cos_np(Q, T))),
        }
        trace.append(row)
        log.debug("retriever epoch %(epoch)d lr=%(lr).2e loss=%(loss).4f cosQL=%(mean_cos_QL).4f", row)
        if on_epoch is not None:
            on_epoch(row)
    model.params.zero_grad()
    model.meta.update({"train": asdict(cfg), "weights": asdict(weights)})
    return model, trace


def _cos_np(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return (a * b).sum(-1) / (np.linalg.norm(a, axis=-1) * np.linalg.norm(b, axis=-1))


def encode_queries(V, T, model, chunk=1024):
    """Frozen-parameter query vectors as a plain array."""
    V = np.atleast_2d(V)
    T = np.atleast_2d(T)
    out = [query_forward(V[i:i + chunk], T[i:i + chunk], model).data for i in range(0, len(V), chunk)]
    return np.concatenate(out) if out else np.zeros((0, model.dim))


def retrieve(V, T, model, index, k):
    """Top-k corpus hits for one (visual, tactile) pair; parameters are read-only."""
    if model is None:
        raise GraphStateError("retrieve needs trained retriever parameters")
    return index.topk(encode_queries(V, T, model)[0], k)


def mean_pairwise_cosine(Q):
    Qn = np.asarray(Q, dtype=np.float64)
    Qn = Qn / np.linalg.norm(Qn, axis=1, keepdims=True)
    C = Qn @ Qn.T
    n = len(Qn)
    return float((C.sum() - np.trace(C)) / (n * (n - 1)))


def metrics_log_lines(trace):
    out = ["epoch\tlr\tloss\tmean_cos_QL\tmean_cos_QT"]
    for r in trace:
        out.append(f"{r['epoch']}\t{r['lr']:.6g}\t{r['loss']:.6f}\t{r['mean_cos_QL']:.6f}\t{r['mean_cos_QT']:.6f}")
    return out


def save_retriever(model, path):
    nc.save_checkpoint(path, model.params.arrays())


def load_retriever(path, dim, heads=4, query_skip=True):
    model = init_retriever(dim, heads=heads, query_skip=query_skip)
    model.params.load(nc.load_checkpoint(path))
    return model
