from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

FIELDS = ("step", "split", "loss", "ms_per_iter", "params")


@dataclass
class MetricsRecord:
    step: int
    split: str
    loss: float
    ms_per_iter: float
    params: int

    def __post_init__(self):
        if not math.isfinite(self.loss):
            raise ValueError(f"metrics loss must be finite, got {self.loss}")
        if not self.ms_per_iter > 0:
            raise ValueError(f"ms_per_iter must be positive, got {self.ms_per_iter}")

    def to_json(self) -> str:
        return json.dumps(asdict(self), separators=(", ", ": "))


class MetricsWriter:
    """Appends one JSON object per line."""

    def __init__(self, path, append: bool = False):
        self.path = Path(path) if path is not None else None
        if self.path is not None and not append:
            self.path.write_text("")

    def write(self, rec: MetricsRecord):
        if self.path is None:
            return
        with self.path.open("a") as fh:
            fh.write(rec.to_json() + "\n")


def read_metrics(path) -> list[MetricsRecord]:
    out = []
    for line in Path(path).read_text().splitlines():
        if line.strip():
            row = json.loads(line)
            if tuple(row) != FIELDS:
                raise ValueError(f"unexpected metrics fields {tuple(row)}")
            out.append(MetricsRecord(**row))
    return out
