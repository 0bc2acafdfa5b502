"""Synthetic stand-ins for frozen visual / tactile / text encoders.

Geometry of the synthetic world, per material ``m`` and instance ``s``:

* every kind starts from a material prototype direction ``P[m]``;
* each kind adds its own fixed offset direction;
* visual vectors also add an *appearance* direction chosen from the
  instance seed alone, so two objects can look alike while feeling different;
* instance noise is blended in and the result is L2-normalised.

Caption text is embedded from its words: each lexicon adjective sits near its
material's prototype, and a caption is the normalised mean of its sorted
adjective vectors.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import lexicon
from .errors import ConfigError, DegenerateInputError, DimensionError

KINDS = ("visual", "tactile", "text")
KIND_OFFSET_SCALE = 0.35
APPEARANCE_SCALE = 0.9
N_APPEARANCES = 8
WORD_SPREAD = 0.6
DEFAULT_DIM = 768


def l2_normalize(v, axis=-1):
    """Scale ``v`` (vector or stack of rows) to unit L2 norm."""
    v = np.asarray(v, dtype=np.float64)
    norm = np.linalg.norm(v, axis=axis, keepdims=True)
    if np.any(norm == 0):
        raise DegenerateInputError("cannot normalise a zero vector")
    return v / norm


def cosine(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))


@lru_cache(maxsize=4096)
def _direction(dim, *key):
    rng = np.random.default_rng(lexicon.stable_hash("dir", dim, *key))
    v = rng.standard_normal(dim)
    v /= np.linalg.norm(v)
    v.setflags(write=False)
    return v


def prototype(material_id, dim):
    return _direction(dim, "proto", int(material_id))


def kind_offset(kind, dim):
    return _direction(dim, "kind", kind)


def appearance_id(instance_seed):
    return lexicon.stable_hash("appearance", int(instance_seed)) % N_APPEARANCES


def appearance(instance_seed, dim):
    return _direction(dim, "appearance", appearance_id(instance_seed))


def signal(kind, material_id, instance_seed, dim):
    """Noise-free, unnormalised construction shared by :func:`synth_embed`."""
    s = prototype(material_id, dim) + KIND_OFFSET_SCALE * kind_offset(kind, dim)
    if kind == "visual":
        s = s + APPEARANCE_SCALE * appearance(instance_seed, dim)
    return s


def synth_embed(kind, material_id, instance_seed, dim=DEFAULT_DIM, noise=0.2):
    if kind not in KINDS:
        raise ConfigError(f"unknown embedding kind {kind!r}")
    if dim < 8:
        raise ConfigError(f"dim must be >= 8, got {dim}")
    if not 0.0 <= noise < 1.0:
        raise ConfigError(f"noise must lie in [0, 1), got {noise}")
    s = l2_normalize(signal(kind, material_id, instance_seed, dim))
    if noise > 0:
        g = _direction(dim, "noise", kind, int(material_id), int(instance_seed))
        s = (1.0 - noise) * s + noise * g
    return l2_normalize(s)


def word_vector(word, dim):
    m = lexicon.material_of_word(word)
    jitter = _direction(dim, "word", word)
    if m is None:
        return jitter
    base = prototype(m, dim) + KIND_OFFSET_SCALE * kind_offset("text", dim)
    return l2_normalize(base + WORD_SPREAD * jitter)


def embed_caption(caption, dim=DEFAULT_DIM):
    """Order-insensitive text embedding of a 5-adjective caption."""
    words = caption.split(",") if isinstance(caption, str) else list(caption)
    words = sorted(w.strip().lower() for w in words if w.strip())
    if not words:
        raise DegenerateInputError("empty caption")
    return l2_normalize(np.mean([word_vector(w, dim) for w in words], axis=0))


@dataclass
class TriModalSample:
    id: int
    visual: np.ndarray
    tactile: np.ndarray
    text: np.ndarray
    caption: str
    material_id: int = -1
    appearance_id: int = -1

    def __post_init__(self):
        dims = {len(self.visual), len(self.tactile), len(self.text)}
        if len(dims) != 1:
            raise DimensionError(f"modalities disagree on dim: {sorted(dims)}")


def synth_trimodal(n, dim=64, noise=0.2, seed=0, n_materials=lexicon.N_MATERIALS, id_offset=0):
    """Aligned samples whose caption is the material's canonical adjectives."""
    rng = np.random.default_rng(seed)
    mats = rng.integers(0, n_materials, size=n)
    inst = rng.integers(0, 2**62, size=n)
    out = []
    for i, (m, s) in enumerate(zip(mats, inst)):
        words = lexicon.canonical_caption(int(m))
        out.append(TriModalSample(
            id=id_offset + i,
            visual=synth_embed("visual", int(m), int(s), dim, noise),
            tactile=synth_embed("tactile", int(m), int(s), dim, noise),
            text=embed_caption(words, dim),
            caption=", ".join(words),
            material_id=int(m),
            appearance_id=appearance_id(int(s)),
        ))
    return out


def synth_mixed(n, dim=64, noise=0.2, seed=0, visual_weight=0.5):
    """Samples whose text vector is a fixed linear mix of visual and tactile.

    L = normalise(w * V + (1 - w) * T); used for convergence checks where the
    target is exactly representable by the query network.
    """
    samples = synth_trimodal(n, dim=dim, noise=noise, seed=seed)
    for s in samples:
        s.text = l2_normalize(visual_weight * s.visual + (1.0 - visual_weight) * s.tactile)
    return samples


def stack_modalities(samples):
    V = np.stack([s.visual for s in samples])
    T = np.stack([s.tactile for s in samples])
    L = np.stack([s.text for s in samples])
    return V, T, L


def import_features(path, expected_dim, field="r_l", renormalize=False):
    """Load ``id -> vector`` from a corpus shard, exactly as stored.

    Shards written by this package already hold unit vectors; pass
    ``renormalize=True`` for externally computed features that may not.
    """
    from .corpus.shards import read_shard

    if field not in ("r_l", "r_v"):
        raise ConfigError(f"field must be r_l or r_v, got {field!r}")
    entries = read_shard(path, expected_dim=expected_dim)
    table = {}
    for e in entries:
        vec = getattr(e, field)
        table[e.id] = l2_normalize(vec).astype(np.float32) if renormalize else vec
    return table
