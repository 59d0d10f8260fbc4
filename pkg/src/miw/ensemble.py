"""The evolving state of a relaxation run: worlds, bandwidths, roles.

Role semantics:

* FREE          moves under the full force; bandwidth follows the
                density-matching update.
* FIXED         pinned boundary stand-in with infinite bandwidth; owns a
                Voronoi cell and a 1/N weight but contributes no density.
* NODE          sits on a preset zero line of the target state and
                subtracts density (sign -1); bandwidth follows the node
                balance update.
* NODE_DOMAIN   positive-density world near the node line; bandwidth
                follows the peak-replacement update.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import OutOfRegion

FREE = 0
FIXED = 1
NODE = 2
NODE_DOMAIN = 3

ROLE_NAMES = {FREE: "free", FIXED: "fixed", NODE: "node", NODE_DOMAIN: "node_domain"}
ROLE_CODES = {name: code for code, name in ROLE_NAMES.items()}


@dataclass
class WorldEnsemble:
    """Positions, velocities, bandwidths, roles and kernel signs of all worlds."""

    positions: np.ndarray    # (N, d)
    velocities: np.ndarray   # (N, d); zero at every iteration boundary
    bandwidths: np.ndarray   # (N,); +inf allowed on FIXED and NODE worlds
    roles: np.ndarray        # (N,) int
    signs: np.ndarray        # (N,) +-1; -1 only on NODE worlds
    node_axis: int | None = None   # axis normal to the nodal line, if any
    node_value: float = 0.0
    meta: dict = field(default_factory=dict)

    @classmethod
    def create(cls, positions, bandwidths, roles=None, signs=None,
               node_axis=None, node_value=0.0):
        positions = np.atleast_2d(np.asarray(positions, dtype=float))
        n = positions.shape[0]
        if roles is None:
            roles = np.full(n, FREE, dtype=int)
        if signs is None:
            signs = np.where(np.asarray(roles) == NODE, -1.0, 1.0)
        return cls(
            positions=positions,
            velocities=np.zeros_like(positions),
            bandwidths=np.asarray(bandwidths, dtype=float),
            roles=np.asarray(roles, dtype=int),
            signs=np.asarray(signs, dtype=float),
            node_axis=node_axis,
            node_value=node_value,
        )

    @property
    def n_worlds(self):
        return self.positions.shape[0]

    @property
    def dimension(self):
        return self.positions.shape[1]

    def mask(self, *roles):
        return np.isin(self.roles, roles)

    @property
    def free_mask(self):
        return self.roles == FREE

    @property
    def density_mask(self):
        """Worlds whose positions sample the density (energy sums run here)."""
        return self.mask(FREE, NODE_DOMAIN)

    def movable_mask(self, node_motion="frozen"):
        moving = self.mask(FREE, NODE_DOMAIN)
        if node_motion != "frozen":
            moving |= self.roles == NODE
        return moving

    def validate(self, region=None):
        n, d = self.positions.shape
        for name, arr, shape in (("velocities", self.velocities, (n, d)),
                                 ("bandwidths", self.bandwidths, (n,)),
                                 ("roles", self.roles, (n,)),
                                 ("signs", self.signs, (n,))):
            if arr.shape != shape:
                raise ValueError(f"{name} has shape {arr.shape}, expected {shape}")
        if np.any(self.bandwidths <= 0):
            raise ValueError("bandwidths must be positive")
        infinite = ~np.isfinite(self.bandwidths)
        if np.any(infinite & ~self.mask(FIXED, NODE)):
            raise ValueError("infinite bandwidth is only allowed on fixed or node worlds")
        if np.any((self.signs == -1) & (self.roles != NODE)):
            raise ValueError("sign -1 is only allowed on node worlds")
        if not np.all(np.isin(self.signs, (-1.0, 1.0))):
            raise ValueError("signs must be +-1")
        if np.any((self.roles == NODE)) and self.node_axis is None:
            raise ValueError("node worlds need a declared nodal line")
        if self.node_axis is not None:
            on_line = self.positions[self.roles == NODE, self.node_axis]
            if on_line.size and np.any(on_line != self.node_value):
                raise ValueError("node worlds must sit exactly on the nodal line")
        if region is not None:
            inside = region.contains(self.positions)
            if not np.all(inside):
                bad = int(np.flatnonzero(~inside)[0])
                raise OutOfRegion(f"world {bad} is outside the region")

    def copy(self):
        return WorldEnsemble(
            positions=self.positions.copy(),
            velocities=self.velocities.copy(),
            bandwidths=self.bandwidths.copy(),
            roles=self.roles.copy(),
            signs=self.signs.copy(),
            node_axis=self.node_axis,
            node_value=self.node_value,
            meta=dict(self.meta),
        )

    def nearest_neighbor_spacing(self):
        """Mean distance to the nearest other world."""
        from scipy.spatial import cKDTree

        dist, _ = cKDTree(self.positions).query(self.positions, k=2)
        return float(np.mean(dist[:, 1]))
