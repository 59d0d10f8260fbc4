"""Quantum potential, quantum force, and ensemble energy estimators.

With the density P supplied by the kernel estimate, the quantum
potential of Bohmian form is

    Q(q) = -(hbar^2 / 2m) (lap sqrt(P)) / sqrt(P)
         = -(1/2) [ lap P / (2P) - |grad P|^2 / (4 P^2) ]      (hbar = m = 1)

and the quantum force is the exact gradient of Q with respect to the
query point, holding kernel centers and bandwidths fixed (the frozen
ensemble convention: P is the instantaneous density each world feels).

Two energy estimators are reported side by side:

* ``interworld``:  U = sum_n |grad P|^2 / (8 P^2) at the sampled worlds,
  the pairwise coupling energy of the world ensemble, combined with the
  classical potential as (sum V + U) / M;
* ``mean``:        (1/M) sum_n [ V(x_n) + Q(x_n) ],
  the per-world total energy, which is the scalar compared against the
  reference eigensolver.

Both run over the density-carrying worlds only; fixed boundary worlds
stand in for probability mass outside the region and node worlds sit on
removed density, so neither samples the distribution the sums assume.
"""

from dataclasses import dataclass

import numpy as np

from . import kde
from .errors import DensityUnderflow, KernelNotSmooth

HBAR = 1.0
MASS = 1.0

# Densities at or below this are treated as underflow: dividing by them
# turns small kernel-tail noise into enormous forces, and the run is
# better aborted loudly than continued into chaos.
DENSITY_FLOOR = 1e-12


@dataclass
class ForceField:
    """Per-world classical force, quantum force, and quantum potential."""

    classical: np.ndarray          # (M, d)
    quantum: np.ndarray            # (M, d)
    quantum_potential: np.ndarray  # (M,)

    @property
    def total(self):
        return self.classical + self.quantum


@dataclass
class EnergyReport:
    """The two ensemble energy estimators and their ingredients."""

    mean_energy: float        # (1/M) sum (V + Q)
    interworld_energy: float  # (sum V + U) / M
    potential_mean: float
    quantum_mean: float
    interworld_sum: float     # U itself
    n_sampled: int


def _check_density(p, at, floor):
    bad = p <= floor
    if np.any(bad):
        which = int(np.asarray(at)[np.argmax(bad)])
        raise DensityUnderflow(
            f"density {p[np.argmax(bad)]:.3e} at world {which} is below the floor")


def _resolve(positions, at):
    positions = np.asarray(positions, dtype=float)
    if positions.ndim == 1:
        positions = positions[:, None]
    if at is None:
        at = np.arange(positions.shape[0])
    else:
        at = np.asarray(at, dtype=int)
    return positions, at


def quantum_potential_values(moments, floor=DENSITY_FLOOR, at=None):
    """Q from precomputed density moments (see formula in module docstring)."""
    p = moments.density
    if at is None:
        at = np.arange(len(p))
    _check_density(p, at, floor)
    grad_sq = np.sum(moments.gradient**2, axis=-1)
    return -0.5 * (moments.laplacian / (2.0 * p) - grad_sq / (4.0 * p * p))


def quantum_force_values(moments, floor=DENSITY_FLOOR, at=None):
    """-grad Q from precomputed density moments.

    grad Q = -T/(4P) + (L g + H g)/(4 P^2) - |g|^2 g / (4 P^3)
    with g = grad P, H = Hessian, L = lap P, T = grad lap P.
    """
    p = moments.density
    if at is None:
        at = np.arange(len(p))
    _check_density(p, at, floor)
    g = moments.gradient
    h_g = np.einsum("mij,mj->mi", moments.hessian, g)
    grad_sq = np.sum(g * g, axis=-1)
    p_col = p[:, None]
    grad_q = (-moments.laplacian_gradient / (4.0 * p_col)
              + (moments.laplacian[:, None] * g + h_g) / (4.0 * p_col**2)
              - grad_sq[:, None] * g / (4.0 * p_col**3))
    return -grad_q


def quantum_potential(positions, bandwidths, signs, kernel, at=None,
                      floor=DENSITY_FLOOR):
    """Quantum potential at the worlds listed in ``at`` (default: all)."""
    positions, at = _resolve(positions, at)
    mom = kde.moments(positions[at], positions, bandwidths, signs, kernel)
    return quantum_potential_values(mom, floor, at)


def quantum_force(positions, bandwidths, signs, kernel, at=None,
                  floor=DENSITY_FLOOR):
    """Quantum force at the worlds listed in ``at`` (default: all)."""
    if not kernel.has_third_derivatives:
        raise KernelNotSmooth(
            f"the {kernel.family} kernel lacks the third derivatives the "
            "quantum force needs")
    positions, at = _resolve(positions, at)
    mom = kde.moments(positions[at], positions, bandwidths, signs, kernel)
    return quantum_force_values(mom, floor, at)


def interworld_energy(positions, bandwidths, signs, kernel, at=None,
                      floor=DENSITY_FLOOR):
    """Ensemble coupling energy U = sum |grad P|^2 / (8 P^2) over ``at``."""
    positions, at = _resolve(positions, at)
    mom = kde.moments(positions[at], positions, bandwidths, signs, kernel)
    _check_density(mom.density, at, floor)
    terms = np.sum(mom.gradient**2, axis=-1) / (8.0 * mom.density**2)
    return float(np.sum(terms))


def energy_report(potential_values, q_values, interworld_terms):
    """Assemble the report from per-world samples already in hand."""
    m = len(potential_values)
    v_mean = float(np.mean(potential_values))
    q_mean = float(np.mean(q_values))
    u = float(np.sum(interworld_terms))
    return EnergyReport(
        mean_energy=v_mean + q_mean,
        interworld_energy=v_mean + u / m,
        potential_mean=v_mean,
        quantum_mean=q_mean,
        interworld_sum=u,
        n_sampled=m,
    )


def total_energy(positions, bandwidths, signs, kernel, model, at=None,
                 floor=DENSITY_FLOOR):
    """Both energy estimators over the worlds listed in ``at`` (default: all)."""
    positions, at = _resolve(positions, at)
    mom = kde.moments(positions[at], positions, bandwidths, signs, kernel)
    _check_density(mom.density, at, floor)
    q_vals = quantum_potential_values(mom, floor, at)
    v_vals = model.value(positions[at])
    inter = np.sum(mom.gradient**2, axis=-1) / (8.0 * mom.density**2)
    return energy_report(v_vals, q_vals, inter)


def ensemble_forces(positions, bandwidths, signs, kernel, model, at=None,
                    floor=DENSITY_FLOOR):
    """Classical plus quantum force field at the worlds listed in ``at``."""
    if not kernel.has_third_derivatives:
        raise KernelNotSmooth(
            f"the {kernel.family} kernel lacks the third derivatives the "
            "quantum force needs")
    positions, at = _resolve(positions, at)
    mom = kde.moments(positions[at], positions, bandwidths, signs, kernel)
    q_vals = quantum_potential_values(mom, floor, at)
    q_force = quantum_force_values(mom, floor, at)
    classical = -model.gradient(positions[at])
    return ForceField(classical, q_force, q_vals), mom
