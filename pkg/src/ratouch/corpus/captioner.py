"""Tactile recaptioning: prompt template, response parsing, captioner clients."""

from __future__ import annotations

import logging
import socket
import subprocess
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from .. import lexicon
from ..errors import CaptionerTransportError, ValidationError

log = logging.getLogger(__name__)

N_ADJECTIVES = 5

PROMPT_TEMPLATE = """## Task
Create a tactile caption for an object in the given image based on its class name and an image description.
Class: {class_name}
Description: {caption}

## Instructions
1. Provide exactly 5 adjectives that refer solely to how the object feels to the touch--focusing on texture, flexibility, density, and material properties.
2. Try to include more varied and nuanced tactile descriptors.
3. Do not include adjectives related to visual appearance, shape, color, temperature, sound, weight, or any non-tactile properties.
4. Respond using the exact format: "adj1, adj2, adj3, adj4, adj5".

Remember: Your ENTIRE response must be ONLY 5 adjectives separated by commas."""


@dataclass
class ManifestRecord:
    id: int
    class_name: str
    source_caption: str
    image_ref: str | None = None

    def __post_init__(self):
        if not self.class_name:
            raise ValidationError(f"record {self.id}: empty class_name")


@dataclass(frozen=True)
class TactileCaption:
    adjectives: tuple

    def __post_init__(self):
        if len(self.adjectives) != N_ADJECTIVES:
            raise ValidationError(f"expected {N_ADJECTIVES} adjectives, got {len(self.adjectives)}")
        for a in self.adjectives:
            if not a.strip() or "," in a or a != a.lower():
                raise ValidationError(f"malformed adjective {a!r}")

    def __str__(self):
        return ", ".join(self.adjectives)


_TRAILING = ".!?;:\"'"


def validate_caption(text: str) -> TactileCaption:
    """Parse ``"adj1, adj2, adj3, adj4, adj5"`` into a :class:`TactileCaption`.

    Tokens are trimmed, lowercased and stripped of surrounding punctuation
    and quotes before the arity check.
    """
    if text is None:
        raise ValidationError("no caption text", raw=text)
    tokens = [t.strip().strip(_TRAILING).strip().lower() for t in text.strip().split(",")]
    for pos, tok in enumerate(tokens, start=1):
        if not tok:
            raise ValidationError(f"empty token at position {pos}", raw=text)
    if len(tokens) != N_ADJECTIVES:
        raise ValidationError(f"expected {N_ADJECTIVES} adjectives, got count {len(tokens)}", raw=text)
    return TactileCaption(tuple(tokens))


def build_prompt(record: ManifestRecord) -> str:
    return PROMPT_TEMPLATE.format(class_name=record.class_name, caption=record.source_caption)


# -- clients --------------------------------------------------------------------

class StubCaptioner:
    """Offline captioner: material from hash(class name), adjectives from its pool."""

    def caption(self, prompt: str) -> str:
        class_name, description = _parse_prompt(prompt)
        material = lexicon.material_of_class(class_name)
        return ", ".join(lexicon.pick_adjectives(material, class_name, description))


def _parse_prompt(prompt):
    class_name = description = ""
    for line in prompt.splitlines():
        if line.startswith("Class: "):
            class_name = line[len("Class: "):]
        elif line.startswith("Description: "):
            description = line[len("Description: "):]
    return class_name, description


def escape_line(text: str) -> str:
    return text.replace("\\", "\\\\").replace("\n", "\\n")


class _LineClient:
    """Request/response over a line stream: one escaped prompt line out, one caption line back."""

    def __init__(self):
        self._lock = threading.Lock()

    def _exchange(self, line: str) -> str:
        raise NotImplementedError

    def caption(self, prompt: str) -> str:
        with self._lock:
            try:
                reply = self._exchange(escape_line(prompt) + "\n")
            except OSError as exc:
                raise CaptionerTransportError(str(exc)) from exc
        if not reply or reply == "\n":
            raise CaptionerTransportError("captioner returned an empty line")
        return reply.rstrip("\n")


class PipeCaptioner(_LineClient):
    """Talks to a subprocess over stdin/stdout."""

    def __init__(self, argv):
        super().__init__()
        self.proc = subprocess.Popen(
            argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE, text=True, encoding="utf-8", bufsize=1
        )

    def _exchange(self, line):
        if self.proc.poll() is not None:
            raise CaptionerTransportError(f"captioner process exited with {self.proc.returncode}")
        self.proc.stdin.write(line)
        self.proc.stdin.flush()
        return self.proc.stdout.readline()

    def close(self):
        if self.proc.poll() is None:
            self.proc.stdin.close()
            self.proc.wait(timeout=5)


class SocketCaptioner(_LineClient):
    def __init__(self, host, port, timeout=30.0):
        super().__init__()
        self.sock = socket.create_connection((host, port), timeout=timeout)
        self._rfile = self.sock.makefile("r", encoding="utf-8", newline="\n")

    def _exchange(self, line):
        self.sock.sendall(line.encode("utf-8"))
        return self._rfile.readline()

    def close(self):
        self._rfile.close()
        self.sock.close()


# -- recaptioning ---------------------------------------------------------------

def recaption(record: ManifestRecord, client, retries=3) -> TactileCaption:
    """Prompt ``client`` for one record; retry transport errors and malformed replies."""
    prompt = build_prompt(record)
    last_raw, last_exc = None, None
    for attempt in range(retries + 1):
        try:
            last_raw = client.caption(prompt)
        except CaptionerTransportError as exc:
            last_exc = exc
            log.warning("captioner transport failure on record %s (attempt %d): %s", record.id, attempt + 1, exc)
            continue
        try:
            return validate_caption(last_raw)
        except ValidationError as exc:
            last_exc = exc
            log.info("malformed caption for record %s: %r", record.id, last_raw)
    if isinstance(last_exc, CaptionerTransportError):
        raise last_exc
    raise ValidationError(f"record {record.id}: no valid caption after {retries + 1} attempts: {last_exc}", raw=last_raw)


def recaption_all(records, client, workers=4, retries=3):
    """Recaption in parallel with at most ``workers`` requests in flight; output keeps input order."""
    if workers <= 1:
        return [recaption(r, client, retries) for r in records]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda r: recaption(r, client, retries), records))
