"""Benchmark problems: singular L-shape and notched specimen plate.

The L-shape case carries a closed-form displacement with an r**alpha
corner singularity at the reentrant corner.  It solves the linear
elasticity problem with zero body force, so it provides exact energy
errors and effectivity indices for that law; for nonlinear laws it only
supplies boundary data.  The plate case is a model discrimination test:
the same uniaxial characterization calibrates both nonlinear laws, and
the computed fields differ.

Both cases have zero body force and pure Dirichlet (or per-component
Dirichlet) boundary conditions.
"""

from __future__ import annotations

import numpy as np

from .constitutive import (DamageLaw, HenckyMises, LinearElasticity)
from .errors import ConfigurationError
from .mesh import l_shape, notched_plate
from .solver import DirichletBC

# Geometry tolerance relative to the domain scale for classifying
# boundary nodes onto the straight boundary pieces of the plate.
_GEO_RTOL = 1e-9


class LShapeCase:
    """Singular benchmark on (-1,1)^2 minus the quadrant [0,1]x[-1,0].

    The displacement, in polar coordinates centered at the reentrant
    corner with the angle measured from the positive x-axis,

        u(r, t) = r**alpha / (2 mu) *
                  (cos(alpha t) - cos((alpha - 2) t),
                   amp sin(alpha t) + sin((alpha - 2) t)),

    satisfies the linear elasticity equations with zero body force and
    is imposed as Dirichlet data on the whole boundary.  The angle runs
    over [0, 3 pi / 2]; the domain excludes the fourth quadrant, so the
    branch is single valued.

    Parameters
    ----------
    mu, lam : float
        Lame parameters of the linear law the solution solves.
    alpha : float
        Singularity exponent.
    amp : float
        Amplitude of the second displacement component.
    """

    name = "l_shape"
    corner = np.zeros(2)

    def __init__(self, mu=1.0, lam=5.0, alpha=0.6, amp=31.0 / 9.0):
        self.mu = float(mu)
        self.lam = float(lam)
        self.alpha = float(alpha)
        self.amp = float(amp)
        self.f = None

    def make_mesh(self, target_h):
        """Triangulation of the L-shaped domain."""
        return l_shape(target_h)

    def make_law(self, kind="linear"):
        """Constitutive law for this benchmark.

        'linear' is the law the analytical solution solves.  The
        Carreau-type 'hencky_mises' variant keeps the same bulk
        response while the shear modulus decays to about a tenth of
        its initial value, softening the corner singularity.
        """
        if kind == "linear":
            return LinearElasticity(lam=self.lam, mu=self.mu)
        if kind == "hencky_mises":
            return HenckyMises(a=1.0 / 20.0, b=1.0 / 2.0, kappa=17.0 / 3.0)
        raise ConfigurationError(
            f"law '{kind}' is not defined for the l_shape case")

    def has_exact(self, law):
        """Whether the analytical solution applies to this law."""
        return (isinstance(law, LinearElasticity)
                and np.isclose(law.mu, self.mu)
                and np.isclose(law.lam, self.lam))

    def _polar(self, pts):
        pts = np.asarray(pts, dtype=float)
        r = np.hypot(pts[..., 0], pts[..., 1])
        t = np.arctan2(pts[..., 1], pts[..., 0])
        # Branch cut along the removed quadrant: angles in [0, 3 pi/2].
        t = np.where(t < 0.0, t + 2.0 * np.pi, t)
        return r, t

    def displacement(self, pts):
        """Analytical displacement at physical points.

        Parameters
        ----------
        pts : ndarray, shape (..., 2)

        Returns
        -------
        ndarray, shape (..., 2)
        """
        r, t = self._polar(pts)
        a = self.alpha
        radial = r ** a / (2.0 * self.mu)
        out = np.empty(r.shape + (2,))
        out[..., 0] = radial * (np.cos(a * t) - np.cos((a - 2.0) * t))
        out[..., 1] = radial * (self.amp * np.sin(a * t)
                                + np.sin((a - 2.0) * t))
        return out

    def displacement_gradient(self, pts):
        """Analytical displacement gradient, rows du_i / dx_j.

        Parameters
        ----------
        pts : ndarray, shape (..., 2)
            Points away from the singular corner.

        Returns
        -------
        ndarray, shape (..., 2, 2)
        """
        pts = np.asarray(pts, dtype=float)
        r, t = self._polar(pts)
        if np.any(r == 0.0):
            raise ValueError(
                "displacement gradient is singular at the corner")
        a = self.alpha
        g = np.empty(r.shape + (2,))
        dg = np.empty(r.shape + (2,))
        g[..., 0] = np.cos(a * t) - np.cos((a - 2.0) * t)
        g[..., 1] = self.amp * np.sin(a * t) + np.sin((a - 2.0) * t)
        dg[..., 0] = -a * np.sin(a * t) + (a - 2.0) * np.sin((a - 2.0) * t)
        dg[..., 1] = (self.amp * a * np.cos(a * t)
                      + (a - 2.0) * np.cos((a - 2.0) * t))
        # du/dx = cos t u_r - sin t / r u_t, du/dy = sin t u_r + cos t / r u_t
        u_r = (a / (2.0 * self.mu)) * r[..., None] ** (a - 1.0) * g
        u_t = (1.0 / (2.0 * self.mu)) * r[..., None] ** (a - 1.0) * dg
        ct = np.cos(t)[..., None]
        st = np.sin(t)[..., None]
        out = np.empty(r.shape + (2, 2))
        out[..., 0] = ct * u_r - st * u_t
        out[..., 1] = st * u_r + ct * u_t
        return out

    def stress(self, pts):
        """Analytical stress tensor of the linear law, shape (..., 2, 2)."""
        grad = self.displacement_gradient(pts)
        e11 = grad[..., 0, 0]
        e22 = grad[..., 1, 1]
        e12 = 0.5 * (grad[..., 0, 1] + grad[..., 1, 0])
        tr = e11 + e22
        out = np.empty_like(grad)
        out[..., 0, 0] = self.lam * tr + 2.0 * self.mu * e11
        out[..., 1, 1] = self.lam * tr + 2.0 * self.mu * e22
        out[..., 0, 1] = 2.0 * self.mu * e12
        out[..., 1, 0] = out[..., 0, 1]
        return out

    def dirichlet(self, space):
        """Both displacement components from the formula on the boundary."""
        nodes = space.boundary_nodes
        values = self.displacement(space.node_coords[nodes])
        dofs = np.concatenate([2 * nodes, 2 * nodes + 1])
        return DirichletBC(dofs, np.concatenate(
            [values[:, 0], values[:, 1]]))


class NotchedPlateCase:
    """Uniform traction of a notched specimen under plane strain.

    The domain is (0, 10) x (-10, 10) minus the disk of radius 2
    centered at (0, 11); the notch favors strain localization.  The
    boundary conditions are per component: u_x = 0 on the left edge
    x = 0 and u_y = -/+ pull on the bottom/top edges y = -/+ 10.  All
    other boundary parts, including the notch arc, are traction free.

    Both nonlinear laws are calibrated from the same bilinear uniaxial
    curve (initial modulus young, critical stress sigma_c, residual
    modulus e_res), so running both discriminates the models.
    """

    name = "notched_plate"
    corner = None

    def __init__(self, mu=3.0 / 26.0 * 1e9, lam=9.0 / 52.0 * 1e9,
                 sigma_c=3e4, e_res=3e7, pull=1.1e-3):
        self.mu = float(mu)
        self.lam = float(lam)
        self.sigma_c = float(sigma_c)
        self.e_res = float(e_res)
        self.pull = float(pull)
        self.f = None

    def make_mesh(self, target_h):
        """Triangulation with the notch arc resolved."""
        return notched_plate(target_h)

    def eps_c(self):
        """Uniaxial strain at the critical stress under plane strain."""
        eprime = (4.0 * self.mu * (self.lam + self.mu)
                  / (self.lam + 2.0 * self.mu))
        return self.sigma_c / eprime

    def make_law(self, kind="damage"):
        """Constitutive law calibrated to the uniaxial curve.

        'damage' matches the initial and residual slopes exactly.  The
        'hencky_mises' variant uses a Carreau-type shear modulus whose
        transition is placed at the uniaxial critical strain.  Its
        residual shear fraction is 0.25 rather than the residual
        modulus ratio 0.1: the Carreau response in the quadratic
        deviatoric measure is strongly monotone only while
        a > 0.2722 b, i.e. for residual fractions above 0.215, and a
        non-monotone law would break both the Newton solver and the
        guaranteed bound.
        """
        if kind == "damage":
            return DamageLaw.calibrate(self.lam, self.mu, self.sigma_c,
                                       self.e_res)
        if kind == "hencky_mises":
            # Deviatoric strain measure at the plane-strain uniaxial
            # transition: lateral strain -lam / (lam + 2 mu) eps_c.
            ratio = 2.0 * (self.lam + self.mu) / (self.lam + 2.0 * self.mu)
            rho0 = 0.5 * (self.eps_c() * ratio) ** 2
            return HenckyMises(a=0.25 * self.mu, b=0.75 * self.mu,
                               kappa=self.lam + 1.5 * self.mu, rho0=rho0)
        raise ConfigurationError(
            f"law '{kind}' is not defined for the notched_plate case")

    def has_exact(self, law):
        return False

    def dirichlet(self, space):
        """Per-component conditions on the straight boundary pieces."""
        nodes = space.boundary_nodes
        coords = space.node_coords[nodes]
        tol = _GEO_RTOL * 10.0
        on_left = np.abs(coords[:, 0]) < tol
        on_bottom = np.abs(coords[:, 1] + 10.0) < tol
        on_top = np.abs(coords[:, 1] - 10.0) < tol
        dofs = np.concatenate([
            2 * nodes[on_left],
            2 * nodes[on_bottom] + 1,
            2 * nodes[on_top] + 1,
        ])
        values = np.concatenate([
            np.zeros(on_left.sum()),
            np.full(on_bottom.sum(), -self.pull),
            np.full(on_top.sum(), self.pull),
        ])
        return DirichletBC(dofs, values)


_CASES = {
    "l_shape": LShapeCase,
    "notched_plate": NotchedPlateCase,
}


def make_case(name, **params):
    """Build a benchmark case by name.

    Parameters
    ----------
    name : str
        'l_shape' or 'notched_plate'.
    **params
        Keyword overrides forwarded to the case constructor.

    Returns
    -------
    LShapeCase or NotchedPlateCase
    """
    try:
        cls = _CASES[name]
    except KeyError:
        known = ", ".join(sorted(_CASES))
        raise ConfigurationError(
            f"unknown case '{name}' (known: {known})") from None
    try:
        return cls(**params)
    except TypeError as exc:
        raise ConfigurationError(
            f"invalid parameters for case '{name}': {exc}") from None
