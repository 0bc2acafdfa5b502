from __future__ import annotations

from collections import Counter


def _adjectives(caption):
    return [w.strip().lower() for w in caption.split(",") if w.strip()]


def canonical_caption(caption):
    """Sorted adjective multiset joined by commas; order-insensitive identity."""
    return ",".join(sorted(_adjectives(caption)))


def vocab_stats(entries, top_k=10):
    """Unique adjectives, unique canonical captions and most frequent words.

    ``entries`` may be corpus entries, tri-modal samples or bare caption strings.
    """
    words = Counter()
    captions = set()
    for e in entries:
        cap = e if isinstance(e, str) else e.caption
        adjs = _adjectives(cap)
        words.update(adjs)
        captions.add(",".join(sorted(adjs)))
    top = sorted(words.items(), key=lambda kv: (-kv[1], kv[0]))[:top_k]
    return {
        "unique_word_count": len(words),
        "unique_caption_count": len(captions),
        "top_k_words": top,
    }
