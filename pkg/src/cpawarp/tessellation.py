"""Partition of a compact 1D interval into cells with shared boundary vertices.

Cells are numbered 1..n_cells in public APIs, mirroring the usual membership
convention gamma(x) = min{c : x in U_c}; internal helpers use 0-based indices.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import OutOfDomainError


@dataclass(frozen=True)
class Domain:
    """Compact interval [x_min, x_max]; canonical choice is [0, 1]."""

    x_min: float = 0.0
    x_max: float = 1.0

    def __post_init__(self):
        if not self.x_min < self.x_max:
            raise ValueError(f"empty domain: [{self.x_min}, {self.x_max}]")

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x)
        return (x >= self.x_min) & (x <= self.x_max)


@dataclass(frozen=True)
class Tessellation:
    """Uniform partition of a domain into n_cells closed cells.

    vertices has length n_cells + 1; cell c (1-based) is
    [vertices[c-1], vertices[c]].  Immutable, safe for concurrent reads.
    """

    domain: Domain
    n_cells: int
    vertices: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64)
        object.__setattr__(self, "vertices", v)
        if self.n_cells < 1:
            raise ValueError("n_cells must be >= 1")
        if v.shape != (self.n_cells + 1,):
            raise ValueError("vertices must have length n_cells + 1")
        if not np.all(np.diff(v) > 0):
            raise ValueError("vertices must be strictly increasing")
        if v[0] != self.domain.x_min or v[-1] != self.domain.x_max:
            raise ValueError("vertices must span the domain exactly")

    @property
    def n_vertices(self) -> int:
        return self.n_cells + 1

    @property
    def n_shared_vertices(self) -> int:
        return self.n_vertices - 2

    def locate(self, x) -> np.ndarray:
        """0-based cell indices for in-domain points (min rule on shared vertices)."""
        x = np.asarray(x, dtype=np.float64)
        idx = np.searchsorted(self.vertices, x, side="left") - 1
        return np.clip(idx, 0, self.n_cells - 1)

    def to_json(self) -> str:
        return json.dumps(
            {"x_min": self.domain.x_min, "x_max": self.domain.x_max, "n_cells": self.n_cells}
        )

    @staticmethod
    def from_json(text: str) -> "Tessellation":
        obj = json.loads(text)
        return build_tessellation(
            Domain(obj["x_min"], obj["x_max"]), obj["n_cells"]
        )


def build_tessellation(domain: Domain, n_cells: int) -> Tessellation:
    """Uniform tessellation of the domain into n_cells cells."""
    if n_cells < 1:
        raise ValueError("n_cells must be >= 1")
    vertices = np.linspace(domain.x_min, domain.x_max, n_cells + 1)
    return Tessellation(domain=domain, n_cells=n_cells, vertices=vertices)


def cell_index(tess: Tessellation, x: float) -> int:
    """1-based index of the lowest cell containing x.

    Shared boundary points resolve to the lower-indexed cell; the right
    domain endpoint belongs to the last cell.
    """
    if not tess.domain.contains(x):
        raise OutOfDomainError(f"x={x} outside [{tess.domain.x_min}, {tess.domain.x_max}]")
    return int(tess.locate(x)) + 1


def exit_boundary(tess: Tessellation, c: int, velocity_sign: float) -> float:
    """Boundary vertex through which the flow leaves cell c (1-based).

    Nonnegative velocity exits through the upper vertex, negative through
    the lower one.
    """
    if not 1 <= c <= tess.n_cells:
        raise ValueError(f"cell index {c} out of range 1..{tess.n_cells}")
    if velocity_sign >= 0:
        return float(tess.vertices[c])
    return float(tess.vertices[c - 1])
