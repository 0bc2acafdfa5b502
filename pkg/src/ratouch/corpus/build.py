"""Synthetic manifest generation and corpus assembly."""

from __future__ import annotations

import numpy as np

from .. import lexicon
from ..features import embed_caption, synth_embed
from .captioner import ManifestRecord, recaption_all
from .shards import CorpusEntry

_SCENES = (
    "on a wooden table",
    "in a living room",
    "held in a hand",
    "on a white background",
    "outdoors in daylight",
    "on a shelf",
    "next to a window",
    "in a cluttered workshop",
)


def synth_manifest(n, n_classes=50, seed=0):
    """Visual manifest with ``n`` records spread over ``n_classes`` classes."""
    rng = np.random.default_rng(seed)
    classes = rng.integers(0, n_classes, size=n)
    scenes = rng.integers(0, len(_SCENES), size=n)
    return [
        ManifestRecord(
            id=i,
            class_name=f"class_{c:03d}",
            source_caption=f"a photo of a class_{c:03d} object {_SCENES[s]}",
            image_ref=f"img/{i:07d}.jpg",
        )
        for i, (c, s) in enumerate(zip(classes, scenes))
    ]


def material_of_entry(entry):
    return lexicon.material_of_class(entry.class_name)


def assemble_entries(records, captions, dim, noise=0.2):
    """Attach synthetic image features and caption embeddings to recaptioned records."""
    out = []
    for rec, cap in zip(records, captions):
        material = lexicon.material_of_class(rec.class_name)
        out.append(CorpusEntry(
            id=rec.id,
            class_name=rec.class_name,
            caption=str(cap),
            r_v=synth_embed("visual", material, rec.id, dim, noise).astype(np.float32),
            r_l=embed_caption(cap.adjectives, dim).astype(np.float32),
        ))
    return out


def build_corpus(records, client, dim, noise=0.2, workers=4, retries=3):
    captions = recaption_all(records, client, workers=workers, retries=retries)
    return assemble_entries(records, captions, dim, noise)
