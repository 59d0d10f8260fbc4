"""Relaxation of a world ensemble to a stationary configuration.

Each iteration starts from rest, integrates the equations of motion

    m x_n'' = -grad [ V(q) + Q(q) ] at q = x_n

over one interval dt with velocity Verlet, then discards the velocities.
Starting every interval from rest turns the dynamics into energy
descent: the ensemble creeps downhill until classical and quantum forces
balance at every free world.

Every ``recursion_every`` iterations the Voronoi partition of the region
is recomputed and the bandwidth recursions are swept (Jacobi order, all
updates from the pre-sweep values) until the bandwidths stop moving;
between events the target density stays frozen.

Fixed boundary worlds never move.  Node worlds are pinned to their
nodal line; by default they do not move at all, because at the
recursion's own fixed point the density at a node is driven to zero and
the quantum force there is a division by that zero.  ``node_motion``
offers in-line motion (classical force only, or the full force with the
quantum part dropped wherever the local density is below the floor) for
experiments.

Declaring a symmetry evaluates forces on a fundamental domain only and
replicates them.  For mirror symmetries the replication is bit-for-bit
identical to direct evaluation because the kernel sums are accumulated
with exactly rounded summation and mirroring negates every term exactly.
Rotations are not exactly representable in floating point, so the radial
reduction agrees with direct evaluation only to roundoff (~1e-13).
"""

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import geometry, kde, quantum
from .ensemble import FIXED, FREE, NODE, NODE_DOMAIN, WorldEnsemble
from .errors import (
    CollisionDetected,
    DensityUnderflow,
    InvalidLayout,
    NonpositiveDenominator,
    NonpositiveDensity,
    OutOfRegion,
    SymmetryViolation,
    ZeroDenominator,
)

NODE_MOTIONS = ("frozen", "classical_inline", "inline")

_ABORTS = (CollisionDetected, DensityUnderflow, NonpositiveDenominator,
           ZeroDenominator, OutOfRegion, NonpositiveDensity)


@dataclass
class RelaxationSchedule:
    """Time step, iteration budget, recursion cadence and stop tolerances."""

    dt: float
    iterations: int
    recursion_every: int = 100
    recursion_max_sweeps: int = 50
    recursion_tol: float = 1e-3
    force_tol: float = 1e-4
    energy_tol: float = 1e-4
    window: int = 100
    substeps: int = 1
    snapshot_every: int = 0
    node_motion: str = "frozen"
    collision_factor: float = 1e-6
    backtrack: bool = False
    backtrack_threshold: float = 0.1

    def validate(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        for name in ("iterations", "recursion_every", "recursion_max_sweeps",
                     "window", "substeps"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")
        if self.node_motion not in NODE_MOTIONS:
            raise ValueError(f"node_motion must be one of {NODE_MOTIONS}")


@dataclass
class RecursionEvent:
    iteration: int
    sweeps: int
    max_rel_change: float


@dataclass
class Snapshot:
    iteration: int
    positions: np.ndarray
    bandwidths: np.ndarray


@dataclass
class RunRecord:
    """Everything a finished (or aborted) relaxation run reports."""

    termination: str                 # converged | max_iterations | aborted
    abort_reason: str | None
    n_iterations: int
    energy_mean: np.ndarray
    energy_interworld: np.ndarray
    max_force: np.ndarray
    wall_time: np.ndarray
    events: list
    snapshots: list
    final: WorldEnsemble
    collision_eps: float

    def final_energy(self, window=100):
        """Mean of the per-world energy trace over the last ``window`` entries."""
        tail = self.energy_mean[-min(window, len(self.energy_mean)):]
        return float(np.mean(tail))


class SymmetryPlan:
    """Evaluate on representatives, replicate to the full ensemble."""

    def __init__(self, name, representatives, rep_of, flips=None, rotations=None):
        self.name = name
        self.representatives = representatives          # (R,) world indices
        self.rep_of = rep_of                            # (N,) world -> rep world
        self.flips = flips                              # (N, d) signs, mirrors
        self.rotations = rotations                      # (N, d, d), radial
        self._slot = {int(r): k for k, r in enumerate(representatives)}
        self.rep_slot = np.array([self._slot[int(r)] for r in rep_of])

    @property
    def is_identity(self):
        return len(self.representatives) == len(self.rep_of)

    @property
    def n_reduced(self):
        return len(self.representatives)

    def expand_scalars(self, values):
        return np.asarray(values)[self.rep_slot]

    def expand_vectors(self, values):
        values = np.asarray(values)
        out = values[self.rep_slot]
        if self.flips is not None:
            return out * self.flips
        return np.einsum("nij,nj->ni", self.rotations, out)

    def symmetrize(self, ens):
        """Overwrite each world's state with its replicated representative.

        Makes mirror ensembles exactly symmetric so the replication stays
        bit-for-bit consistent for the whole run; radial positions are
        left untouched (rotations are not exact in floating point).
        """
        ens.bandwidths = self.expand_scalars(ens.bandwidths[self.representatives])
        if self.flips is not None:
            ens.positions = self.expand_vectors(ens.positions[self.representatives])
        return ens


def _identity_plan(n):
    return SymmetryPlan("none", np.arange(n), np.arange(n))


def _mirror_transforms(symmetry, dim):
    if symmetry == "quadrant":
        if dim != 2:
            raise SymmetryViolation("quadrant symmetry needs two dimensions")
        return [np.array(s, dtype=float)
                for s in ((1, 1), (-1, 1), (1, -1), (-1, -1))]
    if not symmetry.startswith("axis_mirror"):
        raise SymmetryViolation(f"unknown symmetry {symmetry!r}")
    tail = symmetry.removeprefix("axis_mirror").lstrip("_")
    axis = {"": 0, "x": 0, "0": 0, "y": 1, "1": 1}.get(tail)
    if axis is None or axis >= dim:
        raise SymmetryViolation(f"bad mirror axis in {symmetry!r}")
    signs = np.ones(dim)
    flipped = signs.copy()
    flipped[axis] = -1.0
    return [signs, flipped]


def _check_potential_symmetric(model, points, transform):
    v = np.asarray(model.value(points), dtype=float)
    v_t = np.asarray(model.value(transform(points)), dtype=float)
    tol = 1e-12 * max(1.0, float(np.max(np.abs(v))))
    if np.max(np.abs(v - v_t)) > tol:
        raise SymmetryViolation("the potential is not invariant under the "
                                "declared symmetry")


def exploit_symmetry(ens, symmetry, model=None, region=None):
    """Build the reduced evaluation plan for a declared symmetry.

    Mirror symmetries require the ensemble to map onto itself exactly
    (positions bitwise, matched bandwidths, roles and signs); anything
    less raises SymmetryViolation rather than silently replicating a
    non-symmetric state.
    """
    n, dim = ens.positions.shape
    if symmetry in (None, "none"):
        return _identity_plan(n)

    if region is not None:
        axes = range(dim) if symmetry in ("quadrant", "radial") else \
            [int(np.argmin(_mirror_transforms(symmetry, dim)[1]))]
        for ax in axes:
            lo, hi = region.bounds[ax]
            if lo != -hi:
                raise SymmetryViolation(
                    f"region axis {ax} is not centered on the symmetry origin")

    if symmetry == "radial":
        return _radial_plan(ens, model)

    transforms = _mirror_transforms(symmetry, dim)
    index_of = {ens.positions[i].tobytes(): i for i in range(n)}
    orbits = np.empty((n, len(transforms)), dtype=int)
    for i in range(n):
        for t, s in enumerate(transforms):
            partner = index_of.get((ens.positions[i] * s).tobytes())
            if partner is None:
                raise SymmetryViolation(
                    f"world {i} has no mirror partner under {symmetry}")
            orbits[i, t] = partner
    rep_of = orbits.min(axis=1)
    flips = np.ones((n, dim))
    for i in range(n):
        r = rep_of[i]
        for s in transforms:
            if np.array_equal(ens.positions[r] * s, ens.positions[i]):
                flips[i] = s
                break
        for j in orbits[i]:
            same = (ens.roles[j] == ens.roles[i] and ens.signs[j] == ens.signs[i]
                    and ens.bandwidths[j] == ens.bandwidths[i])
            if not same:
                raise SymmetryViolation(
                    f"worlds {i} and {j} are mirror partners with different state")
    if model is not None:
        for s in transforms[1:]:
            _check_potential_symmetric(model, ens.positions, lambda p, s=s: p * s)
    reps = np.unique(rep_of)
    return SymmetryPlan(symmetry, reps, rep_of, flips=flips)


def _radial_plan(ens, model, tol=1e-12):
    n, dim = ens.positions.shape
    if dim != 2:
        raise SymmetryViolation("radial symmetry needs two dimensions")
    m = ens.meta.get("radial_count")
    if not m:
        raise SymmetryViolation(
            "radial symmetry needs the ring multiplicity in meta['radial_count']")
    m = int(m)
    pos = ens.positions
    radius = np.linalg.norm(pos, axis=1)
    scale = max(1.0, float(radius.max()))
    theta = np.mod(np.arctan2(pos[:, 1], pos[:, 0]), 2 * math.pi)
    sector = np.rint(theta / (2 * math.pi / m)).astype(int) % m
    sector[radius < tol * scale] = 0
    rep_of = np.empty(n, dtype=int)
    rotations = np.empty((n, 2, 2))
    base = [i for i in range(n) if sector[i] == 0]
    for i in range(n):
        ang = sector[i] * 2 * math.pi / m
        c, s = math.cos(ang), math.sin(ang)
        rot = np.array([[c, -s], [s, c]])
        back = rot.T @ pos[i]
        match = [j for j in base if np.linalg.norm(pos[j] - back) <= 1e-9 * scale]
        if not match:
            raise SymmetryViolation(f"world {i} has no rotation partner")
        j = match[0]
        if not (ens.roles[j] == ens.roles[i] and ens.signs[j] == ens.signs[i]
                and abs(ens.bandwidths[j] - ens.bandwidths[i]) <=
                tol * max(1.0, abs(ens.bandwidths[j]))):
            raise SymmetryViolation(
                f"worlds {i} and {j} are rotation partners with different state")
        rep_of[i] = j
        rotations[i] = rot
    if model is not None:
        ang = 2 * math.pi / m
        c, s = math.cos(ang), math.sin(ang)
        rot = np.array([[c, -s], [s, c]])
        _check_potential_symmetric(model, pos, lambda p: p @ rot.T)
    reps = np.unique(rep_of)
    return SymmetryPlan("radial", reps, rep_of, rotations=rotations)


# ---------------------------------------------------------------------------
# force evaluation


def _evaluation_sets(ens, node_motion):
    movable = ens.movable_mask(node_motion)
    density = ens.density_mask
    union = movable | density
    return movable, density, union


def _field_at(ens, model, kernel, positions, eval_idx, plan, density_mask,
              floor=quantum.DENSITY_FLOOR):
    """Force, quantum potential and energy pieces at the eval worlds.

    Returns full-length (N, ...) arrays filled by replication when a
    symmetry plan is active.  Density-sampling worlds get the strict
    underflow guard; other eval worlds (moving nodes) fall back to zero
    quantum force where the density is too small to divide by.
    """
    n, d = positions.shape
    if plan.is_identity:
        rows = eval_idx
    else:
        on = np.zeros(n, dtype=bool)
        on[eval_idx] = True
        rows = plan.representatives[on[plan.representatives]]
    mom = kde.moments(positions[rows], positions, ens.bandwidths, ens.signs, kernel)
    p = mom.density

    strict = density_mask[rows]
    low = p <= floor
    if np.any(strict & low):
        bad = rows[np.argmax(strict & low)]
        raise DensityUnderflow(
            f"density at world {int(bad)} fell to {p[np.argmax(strict & low)]:.3e}")
    safe_p = np.where(low, np.inf, p)

    g = mom.gradient
    grad_sq = np.sum(g * g, axis=-1)
    q_vals = -0.5 * (mom.laplacian / (2.0 * safe_p) - grad_sq / (4.0 * safe_p**2))
    h_g = np.einsum("mij,mj->mi", mom.hessian, g)
    pc = safe_p[:, None]
    grad_q = (-mom.laplacian_gradient / (4.0 * pc)
              + (mom.laplacian[:, None] * g + h_g) / (4.0 * pc**2)
              - grad_sq[:, None] * g / (4.0 * pc**3))
    q_force = -grad_q
    classical = -model.gradient(positions[rows])
    inter = grad_sq / (8.0 * safe_p**2)
    v_vals = np.asarray(model.value(positions[rows]), dtype=float)

    def full(values):
        if plan.is_identity:
            out = np.zeros((n,) + values.shape[1:])
            out[rows] = values
            return out
        slots = np.full(n, -1, dtype=int)
        slots[plan.representatives] = np.arange(plan.n_reduced)
        padded = np.zeros((plan.n_reduced,) + values.shape[1:])
        padded[slots[rows]] = values
        if values.ndim == 1:
            return plan.expand_scalars(padded)
        return plan.expand_vectors(padded)

    return {
        "classical": full(classical),
        "quantum_force": full(q_force),
        "quantum_potential": full(q_vals),
        "potential": full(v_vals),
        "interworld": full(inter),
    }


def _project_forces(ens, forces, movable, node_motion):
    """Zero out immobile rows and the off-line component at node worlds."""
    out = np.where(movable[:, None], forces, 0.0)
    if node_motion != "frozen" and ens.node_axis is not None:
        out[ens.roles == NODE, ens.node_axis] = 0.0
    return out


def _forces(ens, model, kernel, plan, node_motion, positions=None):
    movable, density_mask, union = _evaluation_sets(ens, node_motion)
    pos = ens.positions if positions is None else positions
    field = _field_at(ens, model, kernel, pos, np.flatnonzero(union), plan,
                      density_mask)
    total = field["classical"] + field["quantum_force"]
    if node_motion == "classical_inline":
        is_node = ens.roles == NODE
        total[is_node] = field["classical"][is_node]
    total = _project_forces(ens, total, movable, node_motion)
    return total, field, movable, density_mask


def min_pair_distance(positions):
    from scipy.spatial import cKDTree

    dist, _ = cKDTree(positions).query(positions, k=2)
    return float(dist[:, 1].min())


def step(ens, model, kernel, dt, *, node_motion="frozen", substeps=1,
         collision_eps=None, plan=None):
    """One relaxation interval from rest; returns the updated ensemble.

    Velocities accumulate only inside the interval (velocity Verlet) and
    are zeroed on return.  Fixed worlds never move; node worlds move only
    along their nodal line, if at all.
    """
    if plan is None:
        plan = _identity_plan(ens.n_worlds)
    if collision_eps is None:
        collision_eps = 1e-6 * ens.nearest_neighbor_spacing()
    new = ens.copy()
    forces, _, movable, _ = _forces(new, model, kernel, plan, node_motion)
    v = np.zeros_like(new.positions)
    for k in range(substeps):
        v = v + (0.5 * dt) * forces
        new.positions = new.positions + dt * np.where(movable[:, None], v, 0.0)
        if k + 1 < substeps:
            forces, _, movable, _ = _forces(new, model, kernel, plan, node_motion)
    new.velocities[:] = 0.0
    if new.n_worlds > 1 and min_pair_distance(new.positions) < collision_eps:
        raise CollisionDetected("two worlds moved within the collision guard")
    return new


def _recursion_event(ens, kernel, region, schedule, plan):
    """Refit bandwidths to the current configuration; returns max rel change."""
    cells = geometry.voronoi_cells(ens.positions, region)
    priori = geometry.priori_density(cells, ens.n_worlds)
    if not plan.is_identity:
        priori = plan.expand_scalars(priori[plan.representatives])
    free = np.flatnonzero(ens.roles == FREE)
    nodes = np.flatnonzero(ens.roles == NODE)
    domain = np.flatnonzero(ens.roles == NODE_DOMAIN)
    before = ens.bandwidths.copy()
    h = ens.bandwidths
    sweeps = 0
    for sweeps in range(1, schedule.recursion_max_sweeps + 1):
        new = h.copy()
        if free.size:
            new_free = kde.recurse_bandwidth(ens.positions, h, ens.signs, kernel,
                                             priori, free)
            new[free] = new_free[free]
        if nodes.size:
            new_nodes = kde.recurse_node_bandwidth(ens.positions, h, kernel,
                                                   nodes, domain)
            new[nodes] = new_nodes[nodes]
        if domain.size:
            new_dom = kde.recurse_node_domain_bandwidth(ens.positions, h,
                                                        ens.signs, kernel,
                                                        priori, domain)
            new[domain] = new_dom[domain]
        if not plan.is_identity:
            new = plan.expand_scalars(new[plan.representatives])
        finite = np.isfinite(new) & np.isfinite(h)
        change = np.max(np.abs(new[finite] - h[finite]) / h[finite]) \
            if np.any(finite) else 0.0
        h = new
        if change < schedule.recursion_tol:
            break
    ens.bandwidths = h
    finite = np.isfinite(h) & np.isfinite(before)
    total = np.max(np.abs(h[finite] - before[finite]) / before[finite]) \
        if np.any(finite) else 0.0
    return sweeps, float(total)


def relax(initial, model, kernel, schedule, region, symmetry="none"):
    """Run the relaxation loop; always returns a RunRecord.

    Convergence requires every movable world's force below ``force_tol``
    and, once enough history exists, the energy trace moving less than
    ``energy_tol`` across the trailing window.  Runtime failures
    (collisions, density underflow, bandwidth blow-ups, worlds leaving
    the region) abort the run and are reported in the record, never
    swallowed.
    """
    schedule.validate()
    ens = initial.copy()
    ens.validate(region)
    ens.meta.setdefault("radial_count", initial.meta.get("radial_count"))
    plan = exploit_symmetry(ens, symmetry, model=model, region=region)
    if not plan.is_identity and plan.flips is not None:
        plan.symmetrize(ens)
    collision_eps = schedule.collision_factor * ens.nearest_neighbor_spacing()

    e_mean, e_inter, max_f, wall = [], [], [], []
    events, snapshots = [], []
    termination, abort_reason = "max_iterations", None
    dt = schedule.dt
    it = 0
    t0 = time.perf_counter()
    try:
        for it in range(schedule.iterations):
            if it % schedule.recursion_every == 0:
                sweeps, change = _recursion_event(ens, kernel, region, schedule,
                                                  plan)
                events.append(RecursionEvent(it, sweeps, change))
            forces, field, movable, density_mask = _forces(ens, model, kernel,
                                                           plan,
                                                           schedule.node_motion)
            dens = density_mask
            report = quantum.energy_report(field["potential"][dens],
                                           field["quantum_potential"][dens],
                                           field["interworld"][dens])
            norms = np.linalg.norm(forces[movable], axis=1)
            f_now = float(norms.max()) if norms.size else 0.0
            e_mean.append(report.mean_energy)
            e_inter.append(report.interworld_energy)
            max_f.append(f_now)
            wall.append(time.perf_counter() - t0)
            if schedule.snapshot_every and it % schedule.snapshot_every == 0:
                snapshots.append(Snapshot(it, ens.positions.copy(),
                                          ens.bandwidths.copy()))

            settled = it < schedule.window or \
                abs(e_mean[-1] - e_mean[-1 - schedule.window]) < schedule.energy_tol
            if f_now < schedule.force_tol and settled:
                termination = "converged"
                break

            if schedule.backtrack and it > 0:
                rise = e_mean[-1] - e_mean[-2]
                if rise > schedule.backtrack_threshold * max(abs(e_mean[-2]), 1e-12):
                    dt *= 0.5
                    if dt < schedule.dt * 1e-9:
                        raise CollisionDetected("step size collapsed under backtracking")

            v = np.zeros_like(ens.positions)
            fs = forces
            for k in range(schedule.substeps):
                v = v + (0.5 * dt) * fs
                ens.positions = ens.positions + dt * np.where(movable[:, None], v, 0.0)
                if k + 1 < schedule.substeps:
                    fs, _, movable, _ = _forces(ens, model, kernel, plan,
                                                schedule.node_motion)
            if ens.n_worlds > 1 and min_pair_distance(ens.positions) < collision_eps:
                raise CollisionDetected("two worlds moved within the collision guard")
            inside = region.contains(ens.positions)
            if not np.all(inside):
                bad = int(np.flatnonzero(~inside)[0])
                raise OutOfRegion(f"world {bad} left the region at iteration {it}")
        else:
            it = schedule.iterations - 1
    except _ABORTS as exc:
        termination = "aborted"
        abort_reason = f"{type(exc).__name__}: {exc}"

    snapshots.append(Snapshot(it, ens.positions.copy(), ens.bandwidths.copy()))
    return RunRecord(
        termination=termination,
        abort_reason=abort_reason,
        n_iterations=it + 1 if e_mean else 0,
        energy_mean=np.array(e_mean),
        energy_interworld=np.array(e_inter),
        max_force=np.array(max_f),
        wall_time=np.array(wall),
        events=events,
        snapshots=snapshots,
        final=ens,
        collision_eps=collision_eps,
    )


# ---------------------------------------------------------------------------
# initial layouts


def _axis_offsets(count, spacing):
    """Grid offsets from the axis center, exactly mirror-symmetric."""
    half = count // 2
    if count % 2 == 0:
        pos = (np.arange(half) + 0.5) * spacing
        return np.concatenate([-pos[::-1], pos])
    pos = np.arange(1, half + 1) * spacing
    return np.concatenate([-pos[::-1], [0.0], pos])


def make_initial(region, layout="uniform_grid", *, counts=None, positions=None,
                 roles=None, span=1.0, jitter=0.0, seed=None, boundary=None,
                 nodes=None, rate_constant=1.0):
    """Lay out the starting ensemble and assign its bandwidths.

    ``uniform_grid`` places ``counts`` worlds per axis at cell centers of
    the span-scaled region, ``radial`` places ``counts = (rings,
    per_ring)`` worlds on concentric circles, and ``explicit`` takes
    ``positions`` (with optional ``roles``) as given.

    ``boundary`` may request fixed stand-in worlds: 2D ``{"corners":
    True}`` pins four in the region corners, 1D ``{"ends": True}`` pins
    one at each end; both use infinite bandwidth.  ``nodes`` declares a
    nodal line ``{"axis": 0, "value": 0.0}``: grid worlds on the line
    become sign-flipped node worlds (optionally ``{"infinite": [...]}``
    selects node worlds preset to infinite bandwidth, by position along
    the line), and worlds within ``domain_radius_factor`` nearest-neighbor
    spacings of a node become node-domain worlds.

    ``jitter`` (a fraction of the grid spacing, needing ``seed``) breaks
    exact symmetry of generated layouts; it is the only use of the seed.

    Initial bandwidths come from the layout's own Voronoi partition via
    the rate rule h* = rate_constant * N^(-1/(d+4)); the recursion during
    the run replaces them quickly.
    """
    boundary = dict(boundary or {})
    nodes = dict(nodes) if nodes else None
    dim = region.dimension
    meta = {}

    if layout == "uniform_grid":
        if counts is None:
            raise InvalidLayout("uniform_grid needs per-axis counts")
        counts = tuple(int(c) for c in np.atleast_1d(counts))
        if len(counts) != dim or any(c < 1 for c in counts):
            raise InvalidLayout("counts must give a positive size per region axis")
        spacing = span * region.extent / np.array(counts)
        axes = [region.center[k] + _axis_offsets(counts[k], spacing[k])
                for k in range(dim)]
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.column_stack([m.ravel() for m in mesh])
        min_spacing = float(spacing.min())
    elif layout == "radial":
        if dim != 2:
            raise InvalidLayout("radial layout needs a two-dimensional region")
        if counts is None or len(np.atleast_1d(counts)) != 2:
            raise InvalidLayout("radial layout needs counts = (rings, per_ring)")
        rings, per_ring = (int(c) for c in counts)
        if rings < 1 or per_ring < 1:
            raise InvalidLayout("rings and per_ring must be positive")
        r_max = span * float(region.extent.min()) / 2.0
        radii = (np.arange(rings) + 0.5) / rings * r_max
        angles = 2.0 * math.pi * np.arange(per_ring) / per_ring
        pts = np.array([region.center + r * np.array([math.cos(a), math.sin(a)])
                        for r in radii for a in angles])
        min_spacing = float(radii[0] if rings == 1 else min(radii[0],
                                                            np.diff(radii).min()))
        meta["radial_count"] = per_ring
    elif layout == "explicit":
        if positions is None:
            raise InvalidLayout("explicit layout needs positions")
        pts = np.atleast_2d(np.asarray(positions, dtype=float))
        if pts.shape[1] != dim:
            raise InvalidLayout("positions do not match the region dimension")
        min_spacing = None
    else:
        raise InvalidLayout(f"unknown layout {layout!r}")

    if pts.shape[0] < 2:
        raise InvalidLayout("the estimator and the partition need at least 2 worlds")

    world_roles = np.full(pts.shape[0], FREE, dtype=int)
    if layout == "explicit" and roles is not None:
        world_roles = np.asarray(roles, dtype=int).copy()
        if world_roles.shape != (pts.shape[0],):
            raise InvalidLayout("roles must give one role per world")

    if jitter:
        if seed is None:
            raise InvalidLayout("jitter needs a seed")
        rng = np.random.default_rng(seed)
        scale = jitter * (min_spacing or 1.0)
        pts = pts + rng.uniform(-scale, scale, size=pts.shape) * \
            (world_roles == FREE)[:, None]

    node_axis, node_value = None, 0.0
    if nodes:
        node_axis = int(nodes.get("axis", 0))
        node_value = float(nodes.get("value", 0.0))
        on_line = pts[:, node_axis] == node_value
        if not np.any(on_line):
            raise InvalidLayout("no grid worlds lie on the declared nodal line")
        world_roles[on_line & (world_roles == FREE)] = NODE

    if min_spacing is None:
        from scipy.spatial import cKDTree

        dist, _ = cKDTree(pts).query(pts, k=2)
        min_spacing = float(np.median(dist[:, 1]))

    if boundary.get("corners"):
        if dim != 2:
            raise InvalidLayout("corner worlds need a two-dimensional region")
        inset = boundary.get("inset", 1e-6) * min_spacing
        (lx, ux), (ly, uy) = region.bounds
        corners = np.array([[lx + inset, ly + inset], [lx + inset, uy - inset],
                            [ux - inset, ly + inset], [ux - inset, uy - inset]])
        pts = np.vstack([pts, corners])
        world_roles = np.concatenate([world_roles, np.full(4, FIXED)])
    if boundary.get("ends"):
        if dim != 1:
            raise InvalidLayout("end worlds need a one-dimensional region")
        inset = boundary.get("inset", 1e-6) * min_spacing
        ends = np.array([[region.lower[0] + inset], [region.upper[0] - inset]])
        pts = np.vstack([pts, ends])
        world_roles = np.concatenate([world_roles, np.full(2, FIXED)])

    if nodes:
        factor = float(nodes.get("domain_radius_factor", 1.5))
        node_pts = pts[world_roles == NODE]
        gaps = np.linalg.norm(pts[:, None, :] - node_pts[None, :, :], axis=-1)
        near = np.min(gaps, axis=1) <= factor * min_spacing
        world_roles[near & (world_roles == FREE)] = NODE_DOMAIN

    cells = geometry.voronoi_cells(pts, region)
    priori = geometry.priori_density(cells, pts.shape[0])
    proxy_kernel = kde.make_kernel("gaussian", dim)
    h = kde.initial_bandwidths(pts, priori, proxy_kernel, rate_constant)
    h[world_roles == FIXED] = np.inf

    ens = WorldEnsemble.create(pts, h, world_roles,
                               node_axis=node_axis, node_value=node_value)
    ens.meta.update(meta)

    if nodes and nodes.get("infinite"):
        node_idx = np.flatnonzero(ens.roles == NODE)
        other_axis = 1 - node_axis if dim == 2 else 0
        order = node_idx[np.argsort(ens.positions[node_idx, other_axis])]
        for k in nodes["infinite"]:
            if not 0 <= int(k) < len(order):
                raise InvalidLayout("infinite-bandwidth node index out of range")
            ens.bandwidths[order[int(k)]] = np.inf

    ens.validate(region)
    return ens
