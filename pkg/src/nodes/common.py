# src/nodes/common.py
from dataclasses import dataclass, field
from typing import List, Sequence

import numpy as np

from src.schemas import DiagnosticsRecord, RunConfig
from src.spectral_core import Grid


@dataclass
class PresetContext:
    name: str
    config: RunConfig
    out_dir: str
    # keys the user fixed on the command line or in a config file
    pinned: set = field(default_factory=set)

    def rng(self, stream: int = 0) -> np.random.Generator:
        return np.random.default_rng([self.config.seed, stream])

    def sweep(self, key: str, defaults: Sequence, value) -> List:
        """The preset's default sweep, or just the configured value when the user pinned it."""
        return [value] if key in self.pinned else list(defaults)

    def grid(self, box_length: float = None, points_per_axis: int = None) -> Grid:
        g = self.config.grid
        return Grid.create(
            dim=g.dim,
            points_per_axis=points_per_axis or g.points_per_axis,
            box_length=box_length or g.box_length,
        )


def tag_records(rows, **tags) -> List[DiagnosticsRecord]:
    return [DiagnosticsRecord(**{**tags, **row}) for row in rows]
