"""Tab-separated reports with a ``#`` header block."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import __version__
from .config import ExperimentConfig, parse_config_text

SCORE_METRIC = "caption_embedding_cosine (offline judge substitute; not comparable to 1-10 judge scores)"
PRECISION_METRIC = "precision@K (relevance = same synthetic material)"
QUERY_NORMALIZATION_NOTE = "all query modes are L2-normalised before retrieval"


@dataclass
class EvalReport:
    metric: str
    config: ExperimentConfig
    columns: list
    rows: list
    scores: list = field(default_factory=list)
    notes: list = field(default_factory=list)
    runtime_s: float = 0.0

    @property
    def mean(self):
        return float(np.mean(self.scores)) if self.scores else float("nan")

    @property
    def std(self):
        return float(np.std(self.scores)) if self.scores else float("nan")

    def header(self):
        lines = [f"# metric: {self.metric}", f"# tool: ratouch {__version__}", f"# seed: {self.config.seed}"]
        if self.scores:
            lines.append(f"# summary: mean={self.mean:.6f} std={self.std:.6f} n={len(self.scores)}")
        lines += [f"# note: {n}" for n in self.notes]
        lines += [f"# config: {k}={v}" for k, v in self.config.items()]
        return lines

    def to_text(self):
        out = self.header()
        out.append("\t".join(self.columns))
        for row in self.rows:
            out.append("\t".join(_fmt(v) for v in row))
        return "\n".join(out) + "\n"

    def write(self, path):
        """Write the report; timing goes to a ``.runtime`` sidecar so the table stays bit-reproducible."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_text(), encoding="utf-8")
        path.with_suffix(path.suffix + ".runtime").write_text(f"{self.runtime_s:.3f}\n", encoding="utf-8")
        return path


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.6f}"
    return str(v)


def read_report(path):
    """(config, columns, rows as string lists) from a written report."""
    cfg_lines, columns, rows = [], None, []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.startswith("# config: "):
            cfg_lines.append(line[len("# config: "):])
        elif line.startswith("#"):
            continue
        elif columns is None:
            columns = line.split("\t")
        else:
            rows.append(line.split("\t"))
    cfg = ExperimentConfig().replace(**parse_config_text("\n".join(cfg_lines)))
    return cfg, columns, rows
