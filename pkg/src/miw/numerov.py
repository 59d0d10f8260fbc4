"""Reference bound-state eigensolver on uniform grids.

This is the independent check the relaxation results are compared
against.  In 1D it is the matrix form of the Numerov discretization:
with A the three-point second difference over s^2 and B the weighting
stencil (1, 10, 1)/12, the Schrodinger eigenproblem becomes

    (-(1/2) A + B diag(V)) psi = E B psi,

fourth-order accurate in the grid spacing.  A and B are polynomials in
the same shift matrix, so B^{-1} A is symmetric and the pencil reduces
to an ordinary symmetric eigenproblem for the same eigenvectors.

In 2D no cross-term-free Numerov stencil exists, so the kinetic term
uses the five-point Laplacian (second order); the grid-refinement tests
quantify the truncation error instead of pretending otherwise.

Both solvers impose Dirichlet walls on the region edge, matching the
finite region of the relaxation runs: grid nodes are strictly interior,
with psi = 0 on the boundary.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import EigenFailure, IndexOutOfRange
from .geometry import Region

# Above this many unknowns the dense path is wasteful; a shift-inverted
# Lanczos run targets the bottom of the spectrum instead.
DENSE_LIMIT = 1500


@dataclass(frozen=True)
class GridSpec:
    """Uniform interior grid: per-axis point counts over a region."""

    counts: tuple
    bounds: np.ndarray

    def __post_init__(self):
        counts = tuple(int(c) for c in np.atleast_1d(self.counts))
        if any(c < 3 for c in counts):
            raise ValueError("need at least 3 points per axis")
        b = np.atleast_2d(np.asarray(self.bounds, dtype=float))
        if b.shape[0] != len(counts):
            raise ValueError("one (lower, upper) pair per axis required")
        if np.any(b[:, 0] >= b[:, 1]):
            raise ValueError("every axis needs lower < upper")
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "bounds", b)

    @classmethod
    def from_region(cls, region: Region, counts):
        return cls(tuple(np.atleast_1d(counts)), region.bounds)

    @property
    def dimension(self):
        return len(self.counts)

    @property
    def spacing(self):
        return np.array([(hi - lo) / (n + 1)
                         for (lo, hi), n in zip(self.bounds, self.counts)])

    @property
    def measure(self):
        return float(np.prod(self.spacing))

    @property
    def n_total(self):
        return int(np.prod(self.counts))

    def axis_nodes(self, axis):
        lo, _ = self.bounds[axis]
        s = self.spacing[axis]
        return lo + s * np.arange(1, self.counts[axis] + 1)

    def points(self):
        """All interior nodes as rows, axis 0 varying slowest."""
        axes = [self.axis_nodes(k) for k in range(self.dimension)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.column_stack([m.ravel() for m in mesh])


@dataclass
class NumerovSolution:
    """Lowest eigenpairs on a grid; eigenvectors are grid-normalized."""

    eigenvalues: np.ndarray   # (k,), ascending
    states: np.ndarray        # (k, n_total)
    grid: GridSpec

    def state_grid(self, index):
        if not 0 <= index < len(self.eigenvalues):
            raise IndexOutOfRange(f"state {index} of {len(self.eigenvalues)}")
        return self.states[index].reshape(self.grid.counts)

    def gram(self):
        """Pairwise grid inner products; the identity up to solver precision.

        Both solvers reduce to ordinary symmetric eigenproblems (in 1D
        because the two Numerov stencils commute), so the eigenvectors
        are orthogonal in the plain grid metric.
        """
        return self.states @ self.states.T * self.grid.measure


def _stencil(n, off, diag):
    return sp.diags([np.full(n - 1, off), np.full(n, diag), np.full(n - 1, off)],
                    offsets=(-1, 0, 1), format="csr")


def _fix_signs(states):
    for psi in states:
        lead = np.argmax(np.abs(psi))
        if psi[lead] < 0:
            psi *= -1.0
    return states


def _normalize(states, measure):
    norms = np.sqrt(np.sum(states**2, axis=1) * measure)
    return states / norms[:, None]


def solve_1d(model, grid, n_states):
    """Lowest eigenpairs of the 1D matrix-Numerov discretization."""
    if grid.dimension != 1:
        raise ValueError("solve_1d needs a one-dimensional grid")
    n = grid.counts[0]
    if not 0 < n_states < n:
        raise ValueError("need 0 < n_states < grid points")
    v = np.asarray(model.value(grid.axis_nodes(0)[:, None]), dtype=float)
    if not np.all(np.isfinite(v)):
        raise ValueError("potential is not finite on the grid")
    s = grid.spacing[0]
    a = _stencil(n, 1.0, -2.0).toarray() / s**2
    b = _stencil(n, 1.0 / 12.0, 10.0 / 12.0).toarray()
    # B^{-1}A is symmetric because A and B commute; symmetrize away the
    # last-bit asymmetry the linear solve leaves behind.
    binv_a = scipy.linalg.solve(b, a, assume_a="pos")
    h = -0.25 * (binv_a + binv_a.T)
    h[np.diag_indices_from(h)] += v
    try:
        vals, vecs = scipy.linalg.eigh(h, subset_by_index=[0, n_states - 1])
    except scipy.linalg.LinAlgError as exc:
        raise EigenFailure(str(exc)) from exc
    states = _fix_signs(_normalize(vecs.T.copy(), grid.measure))
    return NumerovSolution(vals, states, grid)


def solve_2d(model, grid, n_states):
    """Lowest eigenpairs of the five-point discretization on a 2D grid."""
    if grid.dimension != 2:
        raise ValueError("solve_2d needs a two-dimensional grid")
    nx, ny = grid.counts
    n = nx * ny
    if not 0 < n_states < n:
        raise ValueError("need 0 < n_states < grid points")
    v = np.asarray(model.value(grid.points()), dtype=float)
    if not np.all(np.isfinite(v)):
        raise ValueError("potential is not finite on the grid")
    sx, sy = grid.spacing
    d2x = _stencil(nx, 1.0, -2.0) / sx**2
    d2y = _stencil(ny, 1.0, -2.0) / sy**2
    lap = sp.kron(d2x, sp.identity(ny, format="csr")) + \
        sp.kron(sp.identity(nx, format="csr"), d2y)
    h = (-0.5 * lap + sp.diags(v)).tocsr()
    try:
        if n <= DENSE_LIMIT:
            vals, vecs = scipy.linalg.eigh(h.toarray(),
                                           subset_by_index=[0, n_states - 1])
        else:
            sigma = float(v.min()) - 1.0
            vals, vecs = spla.eigsh(h, k=n_states, sigma=sigma, which="LM",
                                    v0=np.full(n, 1.0 / np.sqrt(n)))
            order = np.argsort(vals)
            vals, vecs = vals[order], vecs[:, order]
    except (scipy.linalg.LinAlgError, spla.ArpackError) as exc:
        raise EigenFailure(str(exc)) from exc
    states = _fix_signs(_normalize(vecs.T.copy(), grid.measure))
    return NumerovSolution(vals, states, grid)


def solve(model, grid, n_states):
    """Dimension dispatch for the two solvers above."""
    if grid.dimension == 1:
        return solve_1d(model, grid, n_states)
    return solve_2d(model, grid, n_states)


def density_from_state(solution, state_index):
    """psi^2 on the grid, renormalized to unit mass with the grid measure."""
    k = len(solution.eigenvalues)
    if not 0 <= state_index < k:
        raise IndexOutOfRange(f"state {state_index} of {k}")
    rho = solution.states[state_index] ** 2
    return rho / (rho.sum() * solution.grid.measure)
