"""Material -> tactile adjective lexicon for the synthetic world.

Each material owns a disjoint pool of eight adjectives. The stub captioner
and the synthetic tri-modal generator both draw from here, which ties
caption wording to material identity.
"""

from __future__ import annotations

import hashlib

MATERIALS = {
    "fabric": ("soft", "fuzzy", "plush", "pliable", "woven", "downy", "fluffy", "cushioned"),
    "leather": ("supple", "grainy", "firm", "pebbled", "buttery", "taut", "creased", "padded"),
    "metal": ("hard", "slick", "polished", "dense", "unyielding", "sleek", "burnished", "solid"),
    "wood": ("grained", "sturdy", "knotty", "splintery", "sanded", "fibrous", "ridged", "varnished"),
    "glass": ("glassy", "brittle", "frictionless", "glossy", "seamless", "glazed", "crisp", "slippery"),
    "rubber": ("rubbery", "elastic", "springy", "squishy", "tacky", "bouncy", "stretchy", "grippy"),
    "stone": ("coarse", "gritty", "rough", "craggy", "pitted", "abrasive", "chalky", "granular"),
    "plastic": ("smooth", "molded", "flexible", "hollow", "waxy", "bendable", "thin", "rigid"),
    "paper": ("papery", "crinkly", "flimsy", "foldable", "delicate", "porous", "matte", "fragile"),
    "foam": ("spongy", "compressible", "airy", "yielding", "pillowy", "resilient", "cushy", "squashy"),
    "fur": ("furry", "silky", "shaggy", "feathery", "woolly", "bristly", "tufted", "velvety"),
    "ceramic": ("enameled", "chipped", "stony", "lacquered", "ridgeless", "unbending", "vitreous", "earthen"),
}

MATERIAL_NAMES = tuple(MATERIALS)
N_MATERIALS = len(MATERIAL_NAMES)

_WORD_TO_MATERIAL = {w: i for i, name in enumerate(MATERIAL_NAMES) for w in MATERIALS[name]}
assert len(_WORD_TO_MATERIAL) == sum(len(v) for v in MATERIALS.values()), "adjective pools overlap"


def stable_hash(*parts) -> int:
    """Process-independent 64-bit hash (Python's ``hash`` is salted per run)."""
    h = hashlib.sha256("\x1f".join(str(p) for p in parts).encode("utf-8"))
    return int.from_bytes(h.digest()[:8], "little")


def material_of_word(word):
    """Material index owning ``word``, or None for out-of-lexicon words."""
    return _WORD_TO_MATERIAL.get(word)


def material_of_class(class_name: str) -> int:
    return stable_hash("material", class_name) % N_MATERIALS


def adjective_pool(material_id: int):
    return MATERIALS[MATERIAL_NAMES[material_id % N_MATERIALS]]


def canonical_caption(material_id: int):
    """The five adjectives a material is described with in tri-modal data."""
    return list(adjective_pool(material_id)[:5])


def pick_adjectives(material_id: int, *key):
    """Deterministic 5-of-8 selection keyed by ``key``, in pool order."""
    pool = adjective_pool(material_id)
    ranked = sorted(range(len(pool)), key=lambda i: stable_hash("pick", *key, pool[i]))
    return [pool[i] for i in sorted(ranked[:5])]
