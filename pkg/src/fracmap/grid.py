"""Uniform lattice over a box domain plus an exterior Dirichlet collar.

Cells are identified with their centers. The lattice covers the interior
box and extends outward by the collar width; collar cells carry the frozen
exterior data that stands in for the rest of space.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .params import FractionalParams

# Guards the quadratic kernel table (M^2 doubles).
DEFAULT_CELL_CAP = 40_000


@dataclass(frozen=True)
class BallSpec:
    """Open Euclidean ball: center and radius."""

    center: tuple
    radius: float

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError(f"ball radius must be positive, got {self.radius}")


class Grid:
    """Immutable lattice of cell centers with interior/collar tags.

    Attributes:
        h: uniform cell size
        box: (lo, hi) arrays for the interior box
        collar_width: physical width of the exterior collar
        centers: (M, n) cell centers, lexicographic lattice order
        lattice: (M, n) integer lattice coordinates of each cell
        interior: (M,) boolean mask, True for cells inside the box
    """

    def __init__(self, params: FractionalParams, lo, hi, h: float,
                 collar_width: float, centers, lattice, interior,
                 shape, offset_origin):
        self.params = params
        self.lo = np.asarray(lo, dtype=float)
        self.hi = np.asarray(hi, dtype=float)
        self.h = float(h)
        self.collar_width = float(collar_width)
        self.centers = centers
        self.lattice = lattice
        self.interior = interior
        self.shape = shape                  # cells per dim, full lattice
        self.offset_origin = offset_origin  # lattice coord of cell index 0
        self.centers.setflags(write=False)
        self.lattice.setflags(write=False)
        self.interior.setflags(write=False)

    @property
    def n(self) -> int:
        return self.centers.shape[1]

    @property
    def num_cells(self) -> int:
        return self.centers.shape[0]

    @property
    def num_interior(self) -> int:
        return int(self.interior.sum())

    @property
    def cell_volume(self) -> float:
        return self.h ** self.n

    def interior_indices(self):
        return np.nonzero(self.interior)[0]

    def collar_indices(self):
        return np.nonzero(~self.interior)[0]

    def _collar_extent(self):
        # physical extent actually covered by collar cells per side
        m = int(np.floor(self.collar_width / self.h + 0.5))
        return m * self.h

    def covered_box(self):
        """(lo, hi) of the full region tiled by cells, collar included."""
        ext = self._collar_extent()
        return self.lo - ext, self.hi + ext

    def boundary_distance(self, points):
        """Distance from points to the complement of the covered region.

        Per-axis (sup-metric) distance; used by the analytic tail formula.
        """
        lo, hi = self.covered_box()
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        d = np.minimum(pts - lo, hi - pts)
        return d.min(axis=1)


def build_grid(params: FractionalParams, box, h: float,
               collar_width: float | None = None,
               cell_cap: int = DEFAULT_CELL_CAP) -> Grid:
    """Tile the box and its collar frame with cells of size h.

    box: sequence of (lo, hi) pairs, one per dimension (or a single pair
    for n=1). The box extents should be (near-)multiples of h.

    collar_width defaults to twice the box diameter, which makes the
    dropped beyond-collar kernel mass negligible at desk scale; smaller
    collars are accepted (the analytic tail correction compensates for
    constant exterior data) but must be at least h.
    """
    if h <= 0:
        raise ValueError(f"cell size h must be positive, got {h}")
    if collar_width is None:
        b = np.asarray(box, dtype=float)
        if b.ndim == 1:
            b = b[None, :]
        collar_width = 2.0 * float(np.linalg.norm(b[:, 1] - b[:, 0]))
    if collar_width < h:
        raise ValueError(
            f"collar_width must be at least h, got {collar_width} < {h}")
    box = np.asarray(box, dtype=float)
    if box.ndim == 1:
        box = box[None, :]
    if box.shape != (params.n, 2):
        raise ValueError(f"box must be ({params.n}, 2), got {box.shape}")
    lo, hi = box[:, 0], box[:, 1]
    if np.any(hi <= lo):
        raise ValueError("box must be nonempty")

    counts = np.round((hi - lo) / h).astype(int)
    if np.any(counts < 1):
        raise ValueError("box too small for cell size h")
    if np.any(np.abs(counts * h - (hi - lo)) > 1e-9 * h):
        raise ValueError("box extents must be integer multiples of h")

    m = int(np.floor(collar_width / h + 0.5))  # collar cells per side
    per_dim = counts + 2 * m
    total = int(np.prod(per_dim))
    if total > cell_cap:
        raise ValueError(
            f"grid would have {total} cells, above cap {cell_cap}")

    axes = [np.arange(-m, counts[d] + m) for d in range(params.n)]
    mesh = np.meshgrid(*axes, indexing="ij")
    lattice = np.stack([g.ravel() for g in mesh], axis=1).astype(np.int64)
    centers = lo[None, :] + (lattice + 0.5) * h
    inside = np.all((lattice >= 0) & (lattice < counts[None, :]), axis=1)
    return Grid(params, lo, hi, h, collar_width, centers, lattice, inside,
                shape=tuple(per_dim), offset_origin=-m)


def ball_indices(grid: Grid, ball: BallSpec) -> np.ndarray:
    """Indices of cells whose centers lie strictly inside the ball."""
    c = np.asarray(ball.center, dtype=float)
    d2 = np.sum((grid.centers - c[None, :]) ** 2, axis=1)
    return np.nonzero(d2 < ball.radius ** 2)[0]


def annulus_indices(grid: Grid, center, r_in: float, r_out: float) -> np.ndarray:
    """Cells with r_in <= |center_i - center| < r_out."""
    if not (0 <= r_in < r_out):
        raise ValueError(f"need 0 <= r_in < r_out, got {r_in}, {r_out}")
    c = np.asarray(center, dtype=float)
    d2 = np.sum((grid.centers - c[None, :]) ** 2, axis=1)
    mask = d2 < r_out ** 2
    if r_in > 0:
        mask &= d2 >= r_in ** 2
    return np.nonzero(mask)[0]
