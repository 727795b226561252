"""Rectangular grid windows used for sampling, probing and numeric solves."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Grid2:
    """Uniform nx-by-ny grid on [xmin, xmax] x [ymin, ymax], endpoints included."""

    xmin: float
    xmax: float
    ymin: float
    ymax: float
    nx: int = 32
    ny: int = 32

    def __post_init__(self):
        if not (self.xmin < self.xmax and self.ymin < self.ymax):
            raise ValueError("grid bounds must be ordered")
        if self.nx < 2 or self.ny < 2:
            raise ValueError("grid needs at least 2 points per axis")

    @property
    def hx(self) -> float:
        return (self.xmax - self.xmin) / (self.nx - 1)

    @property
    def hy(self) -> float:
        return (self.ymax - self.ymin) / (self.ny - 1)

    def xs(self) -> np.ndarray:
        return np.linspace(self.xmin, self.xmax, self.nx)

    def ys(self) -> np.ndarray:
        return np.linspace(self.ymin, self.ymax, self.ny)

    def mesh(self):
        """(X1, X2) arrays of shape (nx, ny) with ij indexing."""
        return np.meshgrid(self.xs(), self.ys(), indexing="ij")

    def iter_points(self):
        for x in self.xs():
            for y in self.ys():
                yield float(x), float(y)

    def interior(self, margin: int = 1):
        """Boolean mask of shape (nx, ny) excluding `margin` boundary layers."""
        mask = np.zeros((self.nx, self.ny), dtype=bool)
        mask[margin:self.nx - margin, margin:self.ny - margin] = True
        return mask

    def shrink(self, fraction: float = 0.05) -> "Grid2":
        """Interior window obtained by trimming a fraction of each side."""
        dx = (self.xmax - self.xmin) * fraction
        dy = (self.ymax - self.ymin) * fraction
        return Grid2(self.xmin + dx, self.xmax - dx, self.ymin + dy, self.ymax - dy,
                     self.nx, self.ny)

    def to_dict(self) -> dict:
        return {"xmin": self.xmin, "xmax": self.xmax, "ymin": self.ymin,
                "ymax": self.ymax, "nx": self.nx, "ny": self.ny}

    @classmethod
    def from_dict(cls, d: dict) -> "Grid2":
        return cls(d["xmin"], d["xmax"], d["ymin"], d["ymax"], int(d["nx"]), int(d["ny"]))
