"""Voronoi partitions of a bounded rectangular region in 1D and 2D.

Cell volumes supply the target ("priori") density that the bandwidth
recursion fits: with N equally weighted worlds, one world per cell, the
density implied by the partition is 1 / (N |cell|).

Cells are clipped to the region so their volumes are finite and sum to
the region volume.  In 1D the cells follow from sorted bisector
midpoints; in 2D the point set is reflected across all four region edges
before triangulating, which yields the box-clipped diagram exactly
(every bisector with a mirror image lies on the corresponding edge).
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import Voronoi, cKDTree
from scipy.spatial.distance import pdist

from .errors import DuplicatePoints, OutOfRegion

# Two worlds closer than this are treated as coincident; points must also
# keep this margin to the region boundary so mirror images stay distinct.
SEPARATION_EPS = 1e-12


@dataclass(frozen=True)
class Region:
    """Axis-aligned closed box; bounds has one (lower, upper) row per axis."""

    bounds: np.ndarray

    def __post_init__(self):
        b = np.atleast_2d(np.asarray(self.bounds, dtype=float))
        if b.shape[1] != 2 or b.shape[0] not in (1, 2):
            raise ValueError("bounds must be a (d, 2) array with d in {1, 2}")
        if np.any(b[:, 0] >= b[:, 1]):
            raise ValueError("every axis needs lower < upper")
        object.__setattr__(self, "bounds", b)

    @property
    def dimension(self):
        return self.bounds.shape[0]

    @property
    def lower(self):
        return self.bounds[:, 0]

    @property
    def upper(self):
        return self.bounds[:, 1]

    @property
    def extent(self):
        return self.bounds[:, 1] - self.bounds[:, 0]

    @property
    def center(self):
        return 0.5 * (self.bounds[:, 0] + self.bounds[:, 1])

    @property
    def volume(self):
        return float(np.prod(self.extent))

    def contains(self, points, margin=SEPARATION_EPS):
        """True rows lie strictly inside the box with the given margin."""
        p = np.atleast_2d(np.asarray(points, dtype=float))
        return np.all((p > self.lower + margin) & (p < self.upper - margin), axis=1)


@dataclass
class CellPartition:
    """Per-world cell volumes and the neighbor graph of a Voronoi partition."""

    volumes: np.ndarray
    neighbors: list = field(repr=False)
    region_volume: float


def _as_points(positions, region):
    p = np.asarray(positions, dtype=float)
    if p.ndim == 1:
        p = p[:, None]
    if p.shape[1] != region.dimension:
        raise ValueError("positions do not match the region dimension")
    return p


def voronoi_cells(positions, region):
    """Voronoi partition of the region around the given world positions.

    Positions must be pairwise distinct and strictly inside the region.
    The returned volumes sum to the region volume.
    """
    p = _as_points(positions, region)
    inside = region.contains(p)
    if not np.all(inside):
        bad = int(np.flatnonzero(~inside)[0])
        raise OutOfRegion(f"world {bad} at {p[bad]} is not strictly inside the region")
    n = p.shape[0]
    if n > 1 and pdist(p).min() <= SEPARATION_EPS:
        raise DuplicatePoints("two world positions coincide")
    if n == 1:
        return CellPartition(np.array([region.volume]), [np.array([], dtype=int)],
                             region.volume)
    if region.dimension == 1:
        return _cells_1d(p[:, 0], region)
    return _cells_2d(p, region)


def _cells_1d(x, region):
    order = np.argsort(x, kind="stable")
    xs = x[order]
    lo, hi = region.bounds[0]
    edges = np.concatenate(([lo], 0.5 * (xs[1:] + xs[:-1]), [hi]))
    vol_sorted = np.diff(edges)
    volumes = np.empty_like(vol_sorted)
    volumes[order] = vol_sorted
    neighbors = [[] for _ in range(len(x))]
    for a, b in zip(order[:-1], order[1:]):
        neighbors[a].append(b)
        neighbors[b].append(a)
    neighbors = [np.array(sorted(nb), dtype=int) for nb in neighbors]
    return CellPartition(volumes, neighbors, region.volume)


def _polygon_area(vertices):
    # Cells are convex, so ordering by angle around the vertex mean is safe.
    c = vertices.mean(axis=0)
    ang = np.arctan2(vertices[:, 1] - c[1], vertices[:, 0] - c[0])
    v = vertices[np.argsort(ang)]
    x, y = v[:, 0], v[:, 1]
    return 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def _cells_2d(p, region):
    n = p.shape[0]
    (lx, ux), (ly, uy) = region.bounds
    mirrors = [p.copy() for _ in range(4)]
    mirrors[0][:, 0] = 2.0 * lx - p[:, 0]
    mirrors[1][:, 0] = 2.0 * ux - p[:, 0]
    mirrors[2][:, 1] = 2.0 * ly - p[:, 1]
    mirrors[3][:, 1] = 2.0 * uy - p[:, 1]
    vor = Voronoi(np.vstack([p] + mirrors))

    volumes = np.empty(n)
    for i in range(n):
        verts = vor.regions[vor.point_region[i]]
        if -1 in verts:
            raise RuntimeError("mirrored Voronoi produced an unbounded cell")
        volumes[i] = _polygon_area(vor.vertices[verts])

    neighbors = [set() for _ in range(n)]
    for a, b in vor.ridge_points:
        if a < n and b < n:
            neighbors[a].add(int(b))
            neighbors[b].add(int(a))
    neighbors = [np.array(sorted(nb), dtype=int) for nb in neighbors]
    return CellPartition(volumes, neighbors, region.volume)


def priori_density(cells, n_worlds):
    """Density implied by the partition: one world of weight 1/N per cell."""
    volumes = np.asarray(cells.volumes, dtype=float)
    return 1.0 / (n_worlds * volumes)


def nearest_world_volumes(positions, region, samples_per_axis=400):
    """Cell volumes recovered by labeling a dense grid with nearest worlds.

    Monte-Carlo style cross-check for :func:`voronoi_cells`; not used in
    the solver path.
    """
    p = _as_points(positions, region)
    axes = [np.linspace(lo, hi, samples_per_axis + 1)[:-1] + 0.5 * (hi - lo) / samples_per_axis
            for lo, hi in region.bounds]
    mesh = np.meshgrid(*axes, indexing="ij")
    grid = np.column_stack([m.ravel() for m in mesh])
    _, label = cKDTree(p).query(grid)
    pixel = region.volume / grid.shape[0]
    counts = np.bincount(label, minlength=p.shape[0])
    return counts * pixel
