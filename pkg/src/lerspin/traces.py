"""Tabular result container shared by simulations, fits and the CLI."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class TraceSet:
    """One axis plus any number of named real or complex columns.

    ``metadata`` holds provenance (specs used, config hash, versions); it is
    written into CSV headers by :mod:`lerspin.io`.
    """

    axis_name: str
    axis_values: np.ndarray
    columns: dict[str, np.ndarray]
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.axis_values = np.asarray(self.axis_values, dtype=float)
        n = len(self.axis_values)
        cols = {}
        for name, values in self.columns.items():
            arr = np.asarray(values)
            if arr.shape != (n,):
                raise ValueError(f"column {name!r} has shape {arr.shape}, expected ({n},)")
            cols[name] = arr
        self.columns = cols
        if not self.metadata:
            self.metadata = {"source": "lerspin"}

    def __len__(self):
        return len(self.axis_values)

    def __getitem__(self, name):
        if name == self.axis_name:
            return self.axis_values
        return self.columns[name]
