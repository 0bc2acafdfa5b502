"""External knowledge corpus: recaptioning, sampling, shards, statistics."""

from .build import assemble_entries, build_corpus, material_of_entry, synth_manifest
from .captioner import (
    ManifestRecord,
    PipeCaptioner,
    SocketCaptioner,
    StubCaptioner,
    TactileCaption,
    build_prompt,
    recaption,
    recaption_all,
    validate_caption,
)
from .sampling import PRESET_SIZES, allocate, class_counts, stratified_sample
from .shards import (
    CorpusEntry,
    build_shards,
    load_corpus,
    read_manifest,
    read_shard,
    write_shard,
)
from .stats import canonical_caption, vocab_stats

__all__ = [
    "CorpusEntry",
    "ManifestRecord",
    "PRESET_SIZES",
    "PipeCaptioner",
    "SocketCaptioner",
    "StubCaptioner",
    "TactileCaption",
    "allocate",
    "assemble_entries",
    "build_corpus",
    "build_prompt",
    "build_shards",
    "canonical_caption",
    "class_counts",
    "load_corpus",
    "material_of_entry",
    "read_manifest",
    "read_shard",
    "recaption",
    "recaption_all",
    "stratified_sample",
    "synth_manifest",
    "validate_caption",
    "vocab_stats",
    "write_shard",
]
