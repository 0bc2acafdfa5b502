"""Binary corpus shards and their text manifest.

Shard layout, little-endian::

    b"IMNT" | version u16 | entry count u64 | feature dim u32
    per entry: id u64 | class len u16 + UTF-8 | caption len u16 + UTF-8
               | r_v (dim x f32) | r_l (dim x f32)

The manifest is UTF-8, one tab-separated line per entry:
``id, class_name, caption, shard_path, row_index``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import DimensionError, FormatError, ValidationError
from ..features import l2_normalize
from .captioner import validate_caption

MAGIC = b"IMNT"
VERSION = 1
_HEADER = struct.Struct("<4sHQI")
MANIFEST_NAME = "manifest.tsv"


@dataclass
class CorpusEntry:
    id: int
    class_name: str
    caption: str
    r_v: np.ndarray
    r_l: np.ndarray

    def __post_init__(self):
        if len(self.r_v) != len(self.r_l):
            raise DimensionError(f"entry {self.id}: r_v dim {len(self.r_v)} != r_l dim {len(self.r_l)}")

    @property
    def tactile_caption(self):
        return validate_caption(self.caption)


def _encode_str(s, what, eid):
    raw = s.encode("utf-8")
    if len(raw) > 0xFFFF:
        raise ValidationError(f"entry {eid}: {what} longer than 65535 bytes")
    return struct.pack("<H", len(raw)) + raw


def _payload(vec, normalize):
    vec = np.asarray(vec)
    # already-unit vectors are stored untouched so re-writing a shard is bit-stable
    if normalize and abs(float(np.linalg.norm(vec.astype(np.float64))) - 1.0) > 1e-6:
        vec = l2_normalize(vec)
    return np.asarray(vec, dtype="<f4").tobytes()


def write_shard(path, entries, dim=None, normalize=True):
    """Write ``entries`` to one shard file; vectors are unit-normalised unless told otherwise."""
    path = Path(path)
    if dim is None:
        dim = len(entries[0].r_l) if entries else 0
    buf = bytearray(_HEADER.pack(MAGIC, VERSION, len(entries), dim))
    for e in entries:
        if len(e.r_v) != dim or len(e.r_l) != dim:
            raise DimensionError(f"entry {e.id}: dim {len(e.r_l)} != shard dim {dim}")
        buf += struct.pack("<Q", e.id)
        buf += _encode_str(e.class_name, "class name", e.id)
        buf += _encode_str(e.caption, "caption", e.id)
        for vec in (e.r_v, e.r_l):
            buf += _payload(vec, normalize)
    path.write_bytes(bytes(buf))
    return path


def read_shard(path, expected_dim=None):
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise FormatError(f"{path}: file shorter than shard header", offset=len(data))
    magic, version, count, dim = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}", offset=0)
    if version != VERSION:
        raise FormatError(f"{path}: unsupported shard version {version}", offset=4)
    if expected_dim is not None and dim != expected_dim:
        raise FormatError(f"{path}: feature dim {dim} != expected {expected_dim}", offset=14)
    pos = _HEADER.size
    vec_bytes = 4 * dim
    out = []

    def need(n, rec, what):
        if pos + n > len(data):
            raise FormatError(f"{path}: truncated {what}", offset=pos, record=rec)

    for rec in range(count):
        need(8, rec, "entry id")
        (eid,) = struct.unpack_from("<Q", data, pos)
        pos += 8
        strings = []
        for what in ("class name", "caption"):
            need(2, rec, f"{what} length")
            (n,) = struct.unpack_from("<H", data, pos)
            pos += 2
            need(n, rec, what)
            try:
                strings.append(data[pos:pos + n].decode("utf-8"))
            except UnicodeDecodeError as exc:
                raise FormatError(f"{path}: invalid UTF-8 in {what}", offset=pos, record=rec) from exc
            pos += n
        vecs = []
        for what in ("r_v payload", "r_l payload"):
            need(vec_bytes, rec, what)
            vecs.append(np.frombuffer(data, dtype="<f4", count=dim, offset=pos).astype(np.float32))
            pos += vec_bytes
        out.append(CorpusEntry(eid, strings[0], strings[1], vecs[0], vecs[1]))
    if pos != len(data):
        raise FormatError(f"{path}: {len(data) - pos} trailing bytes after {count} entries", offset=pos)
    return out


def build_shards(entries, shard_capacity, out_dir, normalize=True):
    """Write entries in chunks of ``shard_capacity`` plus a manifest.

    Returns (shard paths, manifest path). Captions are validated first, so
    every entry that lands in a shard passes :func:`validate_caption`.
    """
    if shard_capacity < 1:
        raise ValidationError("shard_capacity must be >= 1")
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create {out_dir}: {exc}") from exc
    dims = {len(e.r_l) for e in entries}
    if len(dims) > 1:
        raise DimensionError(f"entries disagree on feature dim: {sorted(dims)}")
    for e in entries:
        validate_caption(e.caption)
        for field in (e.class_name, e.caption):
            if "\t" in field or "\n" in field:
                raise ValidationError(f"entry {e.id}: tab or newline in {field!r}")
    dim = dims.pop() if dims else 0
    shard_paths, lines = [], []
    for start in range(0, len(entries), shard_capacity):
        chunk = entries[start:start + shard_capacity]
        name = f"shard_{len(shard_paths):05d}.imnt"
        path = out_dir / name
        try:
            write_shard(path, chunk, dim, normalize=normalize)
        except OSError as exc:
            raise OSError(f"cannot write shard {path}: {exc}") from exc
        shard_paths.append(path)
        for row, e in enumerate(chunk):
            lines.append(f"{e.id}\t{e.class_name}\t{e.caption}\t{name}\t{row}\n")
    manifest = out_dir / MANIFEST_NAME
    try:
        manifest.write_text("".join(lines), encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write manifest {manifest}: {exc}") from exc
    return shard_paths, manifest


def read_manifest(path):
    rows = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line:
            continue
        eid, cls, cap, shard, row = line.split("\t")
        rows.append((int(eid), cls, cap, shard, int(row)))
    return rows


def load_corpus(corpus_dir, expected_dim=None):
    """All entries of a corpus directory, in manifest shard order."""
    corpus_dir = Path(corpus_dir)
    manifest = corpus_dir / MANIFEST_NAME
    if not manifest.exists():
        raise FileNotFoundError(f"no corpus manifest at {manifest}")
    shard_names = list(dict.fromkeys(r[3] for r in read_manifest(manifest)))
    entries = []
    for name in shard_names:
        entries.extend(read_shard(corpus_dir / name, expected_dim))
    return entries
