from __future__ import annotations

from collections import defaultdict

import numpy as np

from .. import lexicon
from ..errors import ConfigError

PRESET_SIZES = {"10k": 10_000, "50k": 50_000, "100k": 100_000, "150k": 150_000}


def allocate(class_sizes, target_size, seed):
    """Per-class quotas for a stratified subset.

    Every class gets ``target // n_classes``; the remainder goes one each to
    classes in seeded-shuffled order. Classes too small for their quota give
    all their members and the shortfall is re-spread, in rounds, over classes
    that still have spare members, least-filled first (shuffled order breaks ties).
    """
    names = sorted(class_sizes)
    total = sum(class_sizes.values())
    if target_size > total:
        raise ConfigError(f"target size {target_size} exceeds manifest size {total}")
    if target_size < 0:
        raise ConfigError("target size must be >= 0")
    if not names:
        return {}
    order = [names[i] for i in np.random.default_rng(seed).permutation(len(names))]
    base, extra = divmod(target_size, len(names))
    alloc = {}
    for rank, c in enumerate(order):
        alloc[c] = min(class_sizes[c], base + (1 if rank < extra else 0))
    shortfall = target_size - sum(alloc.values())
    while shortfall > 0:
        # top up the least-filled classes that still have members, one unit each
        open_classes = [c for c in order if alloc[c] < class_sizes[c]]
        level = min(alloc[c] for c in open_classes)
        for c in open_classes:
            if shortfall == 0:
                break
            if alloc[c] == level:
                alloc[c] += 1
                shortfall -= 1
    return alloc


def stratified_sample(manifest, target_size, seed):
    """Seeded per-class subset of ``manifest``; returned in manifest order."""
    groups = defaultdict(list)
    for pos, rec in enumerate(manifest):
        groups[rec.class_name].append(pos)
    alloc = allocate({c: len(v) for c, v in groups.items()}, target_size, seed)
    keep = []
    for c, members in groups.items():
        rng = np.random.default_rng(lexicon.stable_hash("stratified", seed, c))
        keep.extend(rng.choice(members, size=alloc[c], replace=False).tolist())
    return [manifest[i] for i in sorted(keep)]


def class_counts(records):
    counts = defaultdict(int)
    for r in records:
        counts[r.class_name] += 1
    return dict(counts)
