"""Smooth asymptotic models of singular potentials.

Each model converges to a singular target (the attractive Coulomb core
-1/r, or a square finite-depth well) as its sharpness parameter grows,
while staying differentiable so the relaxation dynamics can follow its
gradient.  Units are dimensionless throughout: hbar = m = 1, and the
Coulomb family additionally sets m e^2 / hbar^2 = 1.

Values and gradients are exact; near r = 0 the radial families switch to
series forms, since the closed expressions (erf(mu r)/r and friends)
cancel catastrophically there.
"""

import math

import numpy as np
from scipy.special import erf

from .errors import NondifferentiablePoint, SingularEvaluation

_TWO_OVER_SQRT_PI = 2.0 / math.sqrt(math.pi)


def _as_points(x):
    a = np.asarray(x, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    return a


class Potential:
    """Base class: analytic value and gradient on points of shape (..., d)."""

    kind = ""

    def value(self, x):
        raise NotImplementedError

    def gradient(self, x):
        raise NotImplementedError

    def params(self):
        return {}

    def config(self):
        return {"kind": self.kind, **self.params()}

    def __repr__(self):
        args = ", ".join(f"{k}={v}" for k, v in self.params().items())
        return f"{type(self).__name__}({args})"


class _RadialPotential(Potential):
    """Radial models V(x) = v(|x|); subclasses give v(r) and v'(r)/r."""

    def _v_of_r(self, r):
        raise NotImplementedError

    def _dv_dr_over_r(self, r):
        raise NotImplementedError

    def value(self, x):
        p = _as_points(x)
        r = np.linalg.norm(p, axis=-1)
        return self._v_of_r(r)

    def gradient(self, x):
        p = _as_points(x)
        r = np.linalg.norm(p, axis=-1)
        return self._dv_dr_over_r(r)[..., None] * p

    def radial_value(self, r):
        return self._v_of_r(np.asarray(r, dtype=float))


class Harmonic(_RadialPotential):
    """Isotropic harmonic trap V = |x|^2 / 2."""

    kind = "harmonic"

    def _v_of_r(self, r):
        return 0.5 * r * r

    def _dv_dr_over_r(self, r):
        return np.ones_like(r)


class CoulombExact(_RadialPotential):
    """Bare attractive core V = -1/r; singular at the origin."""

    kind = "coulomb_exact"

    def _v_of_r(self, r):
        if np.any(r == 0.0):
            raise SingularEvaluation("-1/r has no value at r = 0")
        return -1.0 / r

    def _dv_dr_over_r(self, r):
        if np.any(r == 0.0):
            raise NondifferentiablePoint("-1/r has no gradient at r = 0")
        return 1.0 / r**3


class CoulombCutoff(_RadialPotential):
    """Shifted core V = -1/(r + a); finite but with a gradient kink at r = 0."""

    kind = "coulomb_cutoff"

    def __init__(self, a):
        if a <= 0.0:
            raise ValueError("cutoff a must be positive")
        self.a = float(a)

    def params(self):
        return {"a": self.a}

    def _v_of_r(self, r):
        return -1.0 / (r + self.a)

    def _dv_dr_over_r(self, r):
        if np.any(r == 0.0):
            raise NondifferentiablePoint("-1/(r+a) has a kink at r = 0")
        return 1.0 / (r * (r + self.a) ** 2)


class CoulombErf(_RadialPotential):
    """Error-function softened core

        V(r) = -c exp(-alpha^2 r^2) - erf(mu r) / r,

    which tends to -1/r as mu grows and dips to -c - 2 mu / sqrt(pi) at
    the origin.  The default c = 0 keeps only the erf term.
    """

    kind = "coulomb_erf"

    # erf(z)/z and its derivative combination below cancel badly for
    # small z; under this threshold the Taylor forms are exact to 1 ulp.
    _SERIES_Z = 0.02

    def __init__(self, mu, c=0.0, alpha=None):
        if mu <= 0.0:
            raise ValueError("mu must be positive")
        self.mu = float(mu)
        self.c = float(c)
        self.alpha = float(mu if alpha is None else alpha)

    def params(self):
        return {"mu": self.mu, "c": self.c, "alpha": self.alpha}

    def _v_of_r(self, r):
        z = self.mu * r
        erf_over_z = np.where(
            z > 0.0,
            erf(z) / np.where(z > 0.0, z, 1.0),
            _TWO_OVER_SQRT_PI,
        )
        v = -self.mu * erf_over_z
        if self.c != 0.0:
            v = v - self.c * np.exp(-(self.alpha * r) ** 2)
        return v

    def _dv_dr_over_r(self, r):
        z = self.mu * r
        small = z < self._SERIES_Z
        zs = np.where(small, 1.0, z)
        z2 = zs * zs
        closed = erf(zs) / zs**3 - _TWO_OVER_SQRT_PI * np.exp(-z2) / z2
        t = z * z
        series = _TWO_OVER_SQRT_PI * (
            2.0 / 3.0 + t * (-2.0 / 5.0 + t * (1.0 / 7.0 - t / 27.0))
        )
        g = self.mu**3 * np.where(small, series, closed)
        if self.c != 0.0:
            g = g + 2.0 * self.c * self.alpha**2 * np.exp(-(self.alpha * r) ** 2)
        return g


class CoulombTanh(_RadialPotential):
    """Hyperbolic-tangent softened core V = -tanh(mu r) / r, limit -mu at r = 0."""

    kind = "coulomb_tanh"

    _SERIES_Z = 0.02

    def __init__(self, mu):
        if mu <= 0.0:
            raise ValueError("mu must be positive")
        self.mu = float(mu)

    def params(self):
        return {"mu": self.mu}

    def _v_of_r(self, r):
        z = self.mu * r
        tanh_over_z = np.where(z > 0.0, np.tanh(z) / np.where(z > 0.0, z, 1.0), 1.0)
        return -self.mu * tanh_over_z

    def _dv_dr_over_r(self, r):
        z = self.mu * r
        small = z < self._SERIES_Z
        zs = np.where(small, 1.0, z)
        sech2 = 1.0 / np.cosh(zs) ** 2
        closed = np.tanh(zs) / zs**3 - sech2 / zs**2
        t = z * z
        series = 2.0 / 3.0 + t * (-8.0 / 15.0 + t * (34.0 / 105.0 - t * 496.0 / 2835.0))
        return self.mu**3 * np.where(small, series, closed)


class FiniteWellErf(Potential):
    """Error-function model of a finite-depth well (1D),

        V(x) = (depth/2) [erf(nu (x - a)) - erf(nu (x + a)) + 2],

    with half-width a.  Bounded in [0, depth], even in x, and tending to
    the square well as nu grows.
    """

    kind = "finite_well_erf"

    def __init__(self, depth, half_width, sharpness):
        if depth <= 0.0 or half_width <= 0.0 or sharpness <= 0.0:
            raise ValueError("depth, half_width and sharpness must be positive")
        self.depth = float(depth)
        self.half_width = float(half_width)
        self.sharpness = float(sharpness)

    def params(self):
        return {"depth": self.depth, "half_width": self.half_width,
                "sharpness": self.sharpness}

    def value(self, x):
        p = _as_points(x)
        if p.shape[-1] != 1:
            raise ValueError("the finite well is one-dimensional")
        xv = p[..., 0]
        nu, a = self.sharpness, self.half_width
        return 0.5 * self.depth * (erf(nu * (xv - a)) - erf(nu * (xv + a)) + 2.0)

    def gradient(self, x):
        p = _as_points(x)
        if p.shape[-1] != 1:
            raise ValueError("the finite well is one-dimensional")
        xv = p[..., 0]
        nu, a = self.sharpness, self.half_width
        g = (self.depth * nu / math.sqrt(math.pi)) * (
            np.exp(-(nu * (xv - a)) ** 2) - np.exp(-(nu * (xv + a)) ** 2)
        )
        return g[..., None]

    def radial_value(self, r):
        return self.value(np.asarray(r, dtype=float)[..., None])


_KINDS = {
    cls.kind: cls
    for cls in (Harmonic, CoulombExact, CoulombCutoff, CoulombErf, CoulombTanh,
                FiniteWellErf)
}


def make_potential(config):
    """Build a potential from a {'kind': ..., params...} mapping."""
    cfg = dict(config)
    kind = cfg.pop("kind", None)
    try:
        cls = _KINDS[kind]
    except KeyError:
        raise ValueError(f"unknown potential kind {kind!r}") from None
    return cls(**cfg)


def asymptotic_check(make_model, reference, r_min, r_max, parameters,
                     n_samples=2048, exclude=()):
    """Sup deviation from a reference along the parameter sequence.

    ``make_model(p)`` builds the smooth model for parameter ``p``;
    ``reference(r)`` is the target it should approach.  ``exclude`` lists
    (lo, hi) windows left out of the sup (e.g. around square-well walls,
    where the target itself jumps).  Returns an array of rows
    (parameter, sup |V_p - V_ref|).
    """
    if r_min <= 0.0:
        raise ValueError("r_min must be positive")
    r = np.linspace(r_min, r_max, n_samples)
    keep = np.ones_like(r, dtype=bool)
    for lo, hi in exclude:
        keep &= (r < lo) | (r > hi)
    r = r[keep]
    ref = np.asarray(reference(r), dtype=float)
    rows = []
    for p in parameters:
        model = make_model(p)
        dev = np.max(np.abs(model.radial_value(r) - ref))
        rows.append((float(p), float(dev)))
    return np.array(rows)
