"""Uniform Cartesian grid with square cells.

Fields in this package are cell-centered numpy arrays of shape (nx, ny),
indexed [i, j] with i along x and j along y.  Node (corner) quantities have
shape (nx+1, ny+1).
"""

from dataclasses import dataclass

import numpy as np

_MIN_CELLS = 8


@dataclass(frozen=True)
class Grid:
    nx: int
    ny: int
    h: float
    origin: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if self.nx < _MIN_CELLS or self.ny < _MIN_CELLS:
            raise ValueError(f"grid must be at least {_MIN_CELLS}x{_MIN_CELLS}, got {self.nx}x{self.ny}")
        if self.h <= 0.0:
            raise ValueError(f"grid spacing must be positive, got {self.h}")

    @classmethod
    def from_domain(cls, nx, ny, extent, origin=(0.0, 0.0)):
        """Build a grid from cell counts and domain side lengths.

        Rejects anisotropic input: extent_x / nx must equal extent_y / ny.
        """
        ex, ey = (extent, extent) if np.isscalar(extent) else extent
        hx, hy = ex / nx, ey / ny
        if abs(hx - hy) > 1e-12 * max(hx, hy):
            raise ValueError(f"cells must be square: extent/n gives hx={hx}, hy={hy}")
        return cls(nx=nx, ny=ny, h=hx, origin=tuple(origin))

    @property
    def extent(self):
        return (self.nx * self.h, self.ny * self.h)

    @property
    def shape(self):
        return (self.nx, self.ny)

    @property
    def n_cells(self):
        return self.nx * self.ny

    def xc(self):
        """Cell-center x coordinates, shape (nx,)."""
        return self.origin[0] + (np.arange(self.nx) + 0.5) * self.h

    def yc(self):
        return self.origin[1] + (np.arange(self.ny) + 0.5) * self.h

    def cell_centers(self):
        """Meshgrid of cell centers, two (nx, ny) arrays."""
        return np.meshgrid(self.xc(), self.yc(), indexing="ij")

    def xn(self):
        """Node x coordinates, shape (nx+1,)."""
        return self.origin[0] + np.arange(self.nx + 1) * self.h

    def yn(self):
        return self.origin[1] + np.arange(self.ny + 1) * self.h

    def nodes(self):
        return np.meshgrid(self.xn(), self.yn(), indexing="ij")

    def cell_of(self, x, y):
        """Index of the cell containing (x, y), clamped to the grid."""
        i = int(np.clip(np.floor((x - self.origin[0]) / self.h), 0, self.nx - 1))
        j = int(np.clip(np.floor((y - self.origin[1]) / self.h), 0, self.ny - 1))
        return i, j

    def flat(self, i, j):
        """Flattened unknown index for cell (i, j); row-major in i."""
        return i * self.ny + j


def sample(grid, fn):
    """Evaluate fn(x, y) on cell centers."""
    xx, yy = grid.cell_centers()
    return fn(xx, yy)
