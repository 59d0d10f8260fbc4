"""Adaptive kernel density estimation with one bandwidth per sample point.

The estimate places a kernel on every world position,

    P(x) = (1/N) sum_n  sign_n * h_n^(-d) * K((x - x_n) / h_n),

where ``h_n`` is the per-world bandwidth and ``sign_n`` is +1 except on
node worlds, which subtract mass so that excited-state densities can
vanish on a preset line.  A world with infinite bandwidth contributes
exactly zero everywhere; such worlds stand in for density outside the
computational region.

All spatial derivatives used by the quantum force (gradient, Hessian,
Laplacian and the gradient of the Laplacian) are analytic.  Per-query
sums over worlds are accumulated with exactly rounded summation
(``math.fsum``), so results are independent of world ordering and
mirror-image ensembles produce bit-for-bit mirrored values; the
symmetry reduction in :mod:`miw.dynamics` relies on this.

The bandwidths themselves are fitted by fixed-point recursions that
drive the estimate at each world toward a target ("priori") density,
usually the one implied by Voronoi cell volumes (see
:func:`miw.geometry.priori_density`):

* free worlds:        h <- h * P(x_n) / target(x_n)
* node worlds:        h <- h * (node kernel sum) / (node-domain kernel sum)
* node-domain worlds: h <- K(0) / (target - P(x_n) + K(0)/h)

Every update clamps its multiplicative step to [RATIO_FLOOR, RATIO_CEIL]
to survive badly scaled starting values; the clamp leaves fixed points
untouched.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    EmptyEnsemble,
    NonpositiveDenominator,
    NonpositiveDensity,
    ZeroDenominator,
)

# Clamp on the multiplicative change of any single bandwidth update.
RATIO_FLOOR = 1e-6
RATIO_CEIL = 1e6

# Below this scaled radius the non-smooth kernels report zero derivatives
# (the symmetric limit for the gradient; curvature at the center of the
# exponential kernel has no finite limit and is excluded).
_CENTER_EPS = 1e-300


class Kernel:
    """A radial kernel K(u) = profile(|u|^2 / 2), normalized to unit mass.

    Subclasses provide the radial profile and its first three derivatives
    with respect to s = |u|^2 / 2, which is all the density derivatives
    below need.
    """

    family = ""
    order = 2
    has_third_derivatives = False

    def __init__(self, dim):
        if dim < 1:
            raise ValueError("kernel dimension must be >= 1")
        self.dim = int(dim)
        self.norm = self._normalization(self.dim)

    @staticmethod
    def _normalization(dim):
        raise NotImplementedError

    @property
    def value_at_origin(self):
        return float(self.profile(np.zeros(1))[0][0])

    def profile(self, s):
        """Return (K, dK/ds, d2K/ds2, d3K/ds3) at s = |u|^2 / 2."""
        raise NotImplementedError

    def profile_value(self, s):
        """Value-only path, cheaper when no derivatives are needed."""
        return self.profile(s)[0]

    def evaluate(self, u):
        """K(u) for displacement vectors u of shape (..., dim)."""
        u = np.asarray(u, dtype=float)
        s = 0.5 * np.sum(u * u, axis=-1)
        return self.profile_value(s)


class GaussianKernel(Kernel):
    """Standard normal kernel, (2*pi)^(-d/2) * exp(-|u|^2/2).

    Smooth everywhere; the default (and only recommended) choice for the
    relaxation dynamics.
    """

    family = "gaussian"
    has_third_derivatives = True

    @staticmethod
    def _normalization(dim):
        return (2.0 * math.pi) ** (-0.5 * dim)

    def profile(self, s):
        v = self.norm * np.exp(-np.asarray(s, dtype=float))
        return v, -v, v, -v

    def profile_value(self, s):
        return self.norm * np.exp(-np.asarray(s, dtype=float))


class ExponentialKernel(Kernel):
    """Radial Laplace kernel, c_d * exp(-|u|).

    Smooth except at its own center, where the radial derivatives have no
    two-sided limit; there the gradient is reported as 0 (the symmetric
    limit) and the curvature terms as 0.  This only matters when a query
    point coincides exactly with a world position.
    """

    family = "exponential"
    has_third_derivatives = True

    @staticmethod
    def _normalization(dim):
        return math.gamma(dim / 2.0) / (2.0 * math.pi ** (dim / 2.0) * math.gamma(dim))

    def profile(self, s):
        s = np.asarray(s, dtype=float)
        r = np.sqrt(2.0 * s)
        v = self.norm * np.exp(-r)
        safe = r > _CENTER_EPS
        rs = np.where(safe, r, 1.0)
        d1 = np.where(safe, -v / rs, 0.0)
        d2 = np.where(safe, v * (rs + 1.0) / rs**3, 0.0)
        d3 = np.where(safe, -v * (rs * rs + 3.0 * rs + 3.0) / rs**5, 0.0)
        return v, d1, d2, d3

    def profile_value(self, s):
        return self.norm * np.exp(-np.sqrt(2.0 * np.asarray(s, dtype=float)))


class EpanechnikovKernel(Kernel):
    """Parabolic kernel c_d * (1 - |u|^2) on the unit ball.

    Not differentiable on the support boundary, so it is rejected for the
    relaxation dynamics and kept only for density estimation comparisons.
    """

    family = "epanechnikov"
    has_third_derivatives = False

    @staticmethod
    def _normalization(dim):
        return math.gamma(dim / 2.0) * dim * (dim + 2.0) / (4.0 * math.pi ** (dim / 2.0))

    def profile(self, s):
        s = np.asarray(s, dtype=float)
        inside = s <= 0.5
        v = np.where(inside, self.norm * (1.0 - 2.0 * s), 0.0)
        d1 = np.where(inside, -2.0 * self.norm, 0.0)
        zero = np.zeros_like(v)
        return v, d1, zero, zero

    def profile_value(self, s):
        s = np.asarray(s, dtype=float)
        return np.where(s <= 0.5, self.norm * (1.0 - 2.0 * s), 0.0)


_FAMILIES = {
    "gaussian": GaussianKernel,
    "exponential": ExponentialKernel,
    "epanechnikov": EpanechnikovKernel,
}


def make_kernel(family, dim):
    """Build a kernel by family name ('gaussian', 'exponential', 'epanechnikov')."""
    try:
        cls = _FAMILIES[family]
    except KeyError:
        raise ValueError(f"unknown kernel family {family!r}") from None
    return cls(dim)


@dataclass
class KernelEstimate:
    """Density and its first two derivative summaries at query points."""

    density: np.ndarray
    gradient: np.ndarray
    laplacian: np.ndarray


@dataclass
class KdeMoments:
    """Everything the quantum force needs at a set of query points."""

    density: np.ndarray            # (M,)
    gradient: np.ndarray           # (M, d)
    hessian: np.ndarray            # (M, d, d)
    laplacian: np.ndarray          # (M,)
    laplacian_gradient: np.ndarray  # (M, d)


def _as_points(x):
    a = np.asarray(x, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    return a


def _fsum_rows(terms):
    """Exactly rounded row sums of a (M, N) array."""
    return np.array([math.fsum(row) for row in terms.tolist()], dtype=float)


def _check_inputs(positions, bandwidths, signs):
    positions = _as_points(positions)
    n = positions.shape[0]
    if n == 0:
        raise EmptyEnsemble("kernel estimate needs at least one world")
    bandwidths = np.asarray(bandwidths, dtype=float)
    if signs is None:
        signs = np.ones(n)
    signs = np.asarray(signs, dtype=float)
    if bandwidths.shape != (n,) or signs.shape != (n,):
        raise ValueError("positions, bandwidths and signs must have matching lengths")
    if np.any(bandwidths <= 0.0) or np.any(np.isnan(bandwidths)):
        raise ValueError("bandwidths must be positive (or +inf)")
    return positions, bandwidths, signs


def _scaled_terms(queries, positions, bandwidths, signs, kernel):
    """Per-world weights and scaled displacements shared by all estimators."""
    q = _as_points(queries)
    diff = q[:, None, :] - positions[None, :, :]        # (M, N, d)
    u = diff / bandwidths[None, :, None]                # h = inf -> u = 0
    s = 0.5 * np.sum(u * u, axis=-1)                    # (M, N)
    weight = signs / (positions.shape[0] * bandwidths ** kernel.dim)
    return q, u, s, weight


def moments(queries, positions, bandwidths, signs, kernel):
    """Density, gradient, Hessian, Laplacian and Laplacian gradient.

    All five are the exact analytic derivatives of the same kernel sum,
    evaluated at each query row with the ensemble held fixed.
    """
    positions, bandwidths, signs = _check_inputs(positions, bandwidths, signs)
    if positions.shape[1] != kernel.dim:
        raise ValueError("kernel dimension does not match the positions")
    q, u, s, w = _scaled_terms(queries, positions, bandwidths, signs, kernel)
    d = kernel.dim
    p0, p1, p2, p3 = kernel.profile(s)

    inv_h = 1.0 / bandwidths
    c0 = w * p0                                          # (M, N)
    c1 = (w * inv_h) * p1
    c2 = w * inv_h**2
    c3 = (w * inv_h**3) * (2.0 * s * p3 + (d + 2.0) * p2)

    m = q.shape[0]
    density = _fsum_rows(c0)
    gradient = np.empty((m, d))
    lap_gradient = np.empty((m, d))
    hessian = np.empty((m, d, d))
    for i in range(d):
        gradient[:, i] = _fsum_rows(c1 * u[:, :, i])
        lap_gradient[:, i] = _fsum_rows(c3 * u[:, :, i])
        for j in range(i, d):
            delta = 1.0 if i == j else 0.0
            hessian[:, i, j] = _fsum_rows(c2 * (p2 * u[:, :, i] * u[:, :, j] + delta * p1))
            hessian[:, j, i] = hessian[:, i, j]
    laplacian = _fsum_rows(c2 * (2.0 * s * p2 + d * p1))
    return KdeMoments(density, gradient, hessian, laplacian, lap_gradient)


def estimate(query, positions, bandwidths, kernel, signs=None):
    """Kernel density estimate with analytic gradient and Laplacian.

    ``query`` may be a single point (a scalar in 1D, shape (d,) otherwise)
    or a batch of rows; the output fields follow the input shape.
    """
    query = np.asarray(query, dtype=float)
    if kernel.dim == 1:
        single = query.ndim == 0
        q = np.atleast_1d(query).reshape(-1, 1)
    else:
        single = query.ndim == 1
        q = query[None, :] if single else query
    mom = moments(q, positions, bandwidths, signs, kernel)
    if single:
        return KernelEstimate(mom.density[0], mom.gradient[0], mom.laplacian[0])
    return KernelEstimate(mom.density, mom.gradient, mom.laplacian)


def density(queries, positions, bandwidths, signs, kernel):
    """Vectorized density values for large query batches (grids, plots).

    Uses plain numpy summation, so values can differ from
    :func:`moments` in the last bits; use it where that cannot matter.
    """
    positions, bandwidths, signs = _check_inputs(positions, bandwidths, signs)
    _, _, s, w = _scaled_terms(queries, positions, bandwidths, signs, kernel)
    return np.sum(w * kernel.profile_value(s), axis=1)


def density_exact(queries, positions, bandwidths, signs, kernel):
    """Order-independent density values; used by the bandwidth recursions."""
    positions, bandwidths, signs = _check_inputs(positions, bandwidths, signs)
    _, _, s, w = _scaled_terms(queries, positions, bandwidths, signs, kernel)
    return _fsum_rows(w * kernel.profile_value(s))


def initial_bandwidths(positions, target_density, kernel, rate_constant=1.0):
    """Starting bandwidths h(x_n) = h* / target(x_n).

    ``h* = rate_constant * N^(-1/(d+4))`` is the mean-squared-error rate
    for a second-order kernel; only the recursion below, not this seed,
    determines the converged bandwidths.
    """
    positions = _as_points(positions)
    n, d = positions.shape
    if n == 0:
        raise EmptyEnsemble("no worlds to assign bandwidths to")
    if kernel.order != 2:
        raise ValueError("the bandwidth rate rule assumes a second-order kernel")
    if callable(target_density):
        values = np.asarray(target_density(positions), dtype=float)
    else:
        values = np.asarray(target_density, dtype=float)
    if values.shape != (n,):
        raise ValueError("target density must provide one value per world")
    if np.any(values <= 0.0):
        bad = int(np.argmin(values))
        raise NonpositiveDensity(f"target density is not positive at world {bad}")
    h_star = rate_constant * n ** (-1.0 / (d + 4.0))
    return h_star / values


def _clamped(new, old):
    ratio = np.clip(new / old, RATIO_FLOOR, RATIO_CEIL)
    return old * ratio


def recurse_bandwidth(positions, bandwidths, signs, kernel, priori, update):
    """One multiplicative update h <- h * P(x_n)/priori(x_n) on ``update`` worlds.

    Worlds outside ``update`` (boundary, node, node-domain) are returned
    unchanged.  The step ratio is clamped to [RATIO_FLOOR, RATIO_CEIL].
    """
    positions = _as_points(positions)
    update = np.asarray(update)
    if update.dtype == bool:
        update = np.flatnonzero(update)
    new = np.array(bandwidths, dtype=float)
    if update.size == 0:
        return new
    priori = np.asarray(priori, dtype=float)
    if np.any(priori[update] <= 0.0):
        raise NonpositiveDensity("priori density must be positive at updated worlds")
    p_here = density_exact(positions[update], positions, bandwidths, signs, kernel)
    new[update] = _clamped(new[update] * p_here / priori[update], new[update])
    return new


def recurse_node_bandwidth(positions, bandwidths, kernel, node_indices,
                           domain_indices, exponent=None):
    """Bandwidth update for node worlds.

    Each node bandwidth is scaled by the ratio of the node kernels' own
    mass at that node to the node-domain kernels' mass there,

        h_n <- h_n * sum_{i in nodes}  h_i^(-e) K((x_n-x_i)/h_i)
                     -----------------------------------------------
                     sum_{i in domain} h_i^(-e) K((x_n-x_i)/h_i)

    with e the space dimension.  At the fixed point the subtracted node
    mass balances the surrounding density, which pins the estimate to
    zero on the nodal line.  Worlds at infinite bandwidth drop out of
    both sums.
    """
    positions = _as_points(positions)
    node_indices = np.asarray(node_indices, dtype=int)
    domain_indices = np.asarray(domain_indices, dtype=int)
    if node_indices.size == 0 or domain_indices.size == 0:
        raise ValueError("node and node-domain index sets must be nonempty")
    if np.intersect1d(node_indices, domain_indices).size:
        raise ValueError("node and node-domain index sets must be disjoint")
    e = kernel.dim if exponent is None else exponent
    bandwidths = np.asarray(bandwidths, dtype=float)
    new = bandwidths.copy()

    def masses(sources, targets):
        diff = positions[targets][:, None, :] - positions[sources][None, :, :]
        h = bandwidths[sources]
        k = kernel.evaluate(diff / h[None, :, None])
        return _fsum_rows(h[None, :] ** (-float(e)) * k)

    num = masses(node_indices, node_indices)
    den = masses(domain_indices, node_indices)
    if np.any(den == 0.0):
        bad = int(node_indices[np.argmin(den)])
        raise ZeroDenominator(f"node-domain kernels vanish at node world {bad}")
    finite = np.isfinite(new[node_indices])
    idx = node_indices[finite]
    new[idx] = _clamped(new[idx] * num[finite] / den[finite], new[idx])
    return new


def recurse_node_domain_bandwidth(positions, bandwidths, signs, kernel,
                                  priori, domain_indices):
    """Bandwidth update for worlds surrounding the nodes.

    Solves the one-world balance  target = P(x_n) - K(0)/h + K(0)/h_new
    for h_new:

        h_n <- K(0) / (priori(x_n) - P(x_n) + K(0)/h_n)

    so the update replaces this world's peak contribution by whatever
    closes the gap to the target density.  A non-positive denominator
    means the estimate overshoots the target by more than the world's
    own peak; that aborts the run rather than producing a negative
    bandwidth.
    """
    positions = _as_points(positions)
    domain_indices = np.asarray(domain_indices, dtype=int)
    new = np.array(bandwidths, dtype=float)
    if domain_indices.size == 0:
        return new
    priori = np.asarray(priori, dtype=float)
    k0 = kernel.value_at_origin
    p_here = density_exact(positions[domain_indices], positions, bandwidths,
                           signs, kernel)
    denom = priori[domain_indices] - p_here + k0 / new[domain_indices]
    if np.any(denom <= 0.0):
        bad = int(domain_indices[np.argmin(denom)])
        raise NonpositiveDenominator(
            f"estimate overshoots the target at node-domain world {bad}")
    new[domain_indices] = _clamped(k0 / denom, new[domain_indices])
    return new
