"""Stress-strain relations, their Newton tangents, and law constants.

All laws map symmetric 2x2 strains to symmetric 2x2 stresses.  Symmetric
tensors are stored in Voigt order (t11, t22, t12) where t12 is the tensor
off-diagonal entry (not the engineering shear), so the Frobenius inner
product of two tensors carries the weight diag(1, 1, 2).

Tangents are Jacobians d sigma_i / d eps_j of the Voigt components; they
are applied to Voigt strain increments directly, without the weight.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError

# Frobenius weight for the duplicated off-diagonal Voigt entry.
VOIGT_WEIGHT = np.array([1.0, 1.0, 2.0])
IDENTITY = np.array([1.0, 1.0, 0.0])


def tensor_dot(s, t):
    """Frobenius product of symmetric tensors in Voigt form."""
    return np.einsum("...i,...i,i->...", s, t, VOIGT_WEIGHT)


def tensor_norm_sq(t):
    """Squared Frobenius norm of symmetric tensors in Voigt form."""
    return tensor_dot(t, t)


@dataclass(frozen=True)
class LawConstants:
    """Constants of a stress-strain law entering the error estimate.

    Attributes
    ----------
    growth : float
        Bound in |sigma(t) : t| <= growth * |t|^2 at the origin scale.
    monotonicity : float
        Square root of the strong monotonicity constant:
        (sigma(t) - sigma(e)) : (t - e) >= monotonicity^2 |t - e|^2.
    lipschitz : float
        Bound in |sigma(t) - sigma(e)| <= lipschitz * |t - e|.
    """

    growth: float
    monotonicity: float
    lipschitz: float

    def __post_init__(self):
        if not (self.growth > 0 and self.monotonicity > 0
                and self.lipschitz > 0):
            raise ConfigurationError("law constants must be positive")
        if self.monotonicity ** 2 > self.lipschitz * (1 + 1e-12):
            raise ConfigurationError(
                "monotonicity constant exceeds Lipschitz constant")


def _isotropic_tangent(lam, mu):
    """Voigt Jacobian of t -> lam tr(t) I + 2 mu t, broadcast over lam/mu."""
    lam = np.asarray(lam, dtype=float)
    out = np.zeros(lam.shape + (3, 3))
    out[..., 0, 0] = lam + 2.0 * mu
    out[..., 1, 1] = lam + 2.0 * mu
    out[..., 0, 1] = lam
    out[..., 1, 0] = lam
    out[..., 2, 2] = 2.0 * mu
    return out


class LinearElasticity:
    """Linear isotropic law sigma(t) = lam tr(t) I + 2 mu t."""

    name = "linear"
    is_linear = True

    def __init__(self, lam, mu):
        if mu <= 0:
            raise ConfigurationError("shear modulus mu must be positive")
        if lam < 0:
            raise ConfigurationError("first Lame parameter must be >= 0")
        self.lam = float(lam)
        self.mu = float(mu)

    def __repr__(self):
        return f"LinearElasticity(lam={self.lam}, mu={self.mu})"

    def stress(self, strain):
        strain = np.asarray(strain, dtype=float)
        tr = strain[..., 0] + strain[..., 1]
        out = 2.0 * self.mu * strain
        out[..., 0] += self.lam * tr
        out[..., 1] += self.lam * tr
        return out

    def tangent(self, strain):
        strain = np.asarray(strain, dtype=float)
        base = _isotropic_tangent(self.lam, self.mu)
        return np.broadcast_to(base, strain.shape[:-1] + (3, 3)).copy()

    def constants(self):
        grow = 2.0 * self.mu + 2.0 * self.lam
        return LawConstants(grow, np.sqrt(2.0 * self.mu), grow)


class HenckyMises:
    """Hencky-Mises law with Carreau-type shear modulus.

    sigma(t) = lam~(rho) tr(t) I + 2 mu~(rho) t with the deviatoric
    measure rho(t) = tr(t^2) - tr(t)^2 / 2 and

        mu~(rho) = a + b (1 + (rho / rho0)^2)^(-1/2),
        lam~(rho) = kappa - (3/2) mu~(rho).

    The tangent of this law is nonsymmetric, so it does not derive from
    a stored energy; Newton systems assembled from it are general sparse
    matrices.

    The declared law constants hold in the small-strain regime (they are
    evaluated at rho = 0); the Carreau softening is not globally
    monotone for arbitrarily large strains.
    """

    name = "hencky_mises"
    is_linear = False

    def __init__(self, a, b, kappa, rho0=1.0):
        if a <= 0:
            raise ConfigurationError("Carreau parameter a must be positive")
        if b < 0:
            raise ConfigurationError("Carreau parameter b must be >= 0")
        if kappa <= 1.5 * (a + b):
            raise ConfigurationError(
                "kappa must exceed 3 (a + b) / 2 for a positive bulk response")
        if rho0 <= 0:
            raise ConfigurationError("rho0 must be positive")
        self.a = float(a)
        self.b = float(b)
        self.kappa = float(kappa)
        self.rho0 = float(rho0)

    def __repr__(self):
        return (f"HenckyMises(a={self.a}, b={self.b}, kappa={self.kappa}, "
                f"rho0={self.rho0})")

    def _dev_measure(self, strain):
        d = strain[..., 0] - strain[..., 1]
        return 0.5 * d * d + 2.0 * strain[..., 2] ** 2

    def _moduli(self, rho):
        x = rho / self.rho0
        mu_t = self.a + self.b / np.sqrt(1.0 + x * x)
        lam_t = self.kappa - 1.5 * mu_t
        return mu_t, lam_t

    def stress(self, strain):
        strain = np.asarray(strain, dtype=float)
        mu_t, lam_t = self._moduli(self._dev_measure(strain))
        tr = strain[..., 0] + strain[..., 1]
        out = 2.0 * mu_t[..., None] * strain
        out[..., 0] += lam_t * tr
        out[..., 1] += lam_t * tr
        return out

    def tangent(self, strain):
        strain = np.asarray(strain, dtype=float)
        rho = self._dev_measure(strain)
        mu_t, lam_t = self._moduli(rho)
        x = rho / self.rho0
        dmu = -self.b * x / (self.rho0 * (1.0 + x * x) ** 1.5)
        tr = strain[..., 0] + strain[..., 1]
        # d sigma = base(lam~, mu~) + (2 t - 1.5 tr I) dmu (x) d rho
        drho = np.empty_like(strain)
        d = strain[..., 0] - strain[..., 1]
        drho[..., 0] = d
        drho[..., 1] = -d
        drho[..., 2] = 4.0 * strain[..., 2]
        left = 2.0 * strain.copy()
        left[..., 0] -= 1.5 * tr
        left[..., 1] -= 1.5 * tr
        out = _isotropic_tangent(lam_t, mu_t)
        out += dmu[..., None, None] * left[..., :, None] * drho[..., None, :]
        return out

    def constants(self):
        mu0 = self.a + self.b
        lam0 = self.kappa - 1.5 * mu0
        grow = 2.0 * mu0 + 2.0 * lam0
        lip = max(2.0 * self.kappa - self.a,
                  2.0 * mu0 + 8.0 * self.b / 3.0 ** 1.5)
        return LawConstants(grow, np.sqrt(2.0 * mu0), lip)


class DamageLaw:
    """Isotropic reversible damage law.

    sigma(t) = f(s) C t with s = t : C t, C the linear isotropic tensor
    of (lam, mu), and the damage retention function

        f(s) = a_f + (1 - a_f) (1 + s / s0)^(-1/2),

    decreasing from 1 to the residual fraction a_f.  The radial response
    s |-> f(s^2) s has derivative >= a_f > 0, so the law is strongly
    monotone globally with constant a_f * 2 mu.
    """

    name = "damage"
    is_linear = False

    def __init__(self, lam, mu, a_f, s0):
        if mu <= 0:
            raise ConfigurationError("shear modulus mu must be positive")
        if lam < 0:
            raise ConfigurationError("first Lame parameter must be >= 0")
        if not 0.0 < a_f <= 1.0:
            raise ConfigurationError("residual fraction a_f must be in (0, 1]")
        if s0 <= 0:
            raise ConfigurationError("damage scale s0 must be positive")
        self.lam = float(lam)
        self.mu = float(mu)
        self.a_f = float(a_f)
        self.s0 = float(s0)

    @classmethod
    def calibrate(cls, lam, mu, sigma_c, e_res):
        """Build the law from a uniaxial stress-strain characterization.

        Parameters
        ----------
        lam, mu : float
            Lame parameters of the undamaged material.
        sigma_c : float
            Critical uniaxial stress at which softening sets in.
        e_res : float
            Residual Young modulus of the fully damaged material.

        Notes
        -----
        The residual fraction is ``a_f = e_res / E`` with E the Young
        modulus.  The damage scale ``s0 = sigma_c**2 / E'`` with the
        plane-strain uniaxial modulus ``E' = 4 mu (lam + mu) /
        (lam + 2 mu)`` places the onset of softening at the critical
        stress: the large-s asymptote of the uniaxial response
        intersects the undamaged line at stress level sigma_c.
        """
        young = mu * (3.0 * lam + 2.0 * mu) / (lam + mu)
        eprime = 4.0 * mu * (lam + mu) / (lam + 2.0 * mu)
        return cls(lam, mu, e_res / young, sigma_c ** 2 / eprime)

    def __repr__(self):
        return (f"DamageLaw(lam={self.lam}, mu={self.mu}, a_f={self.a_f}, "
                f"s0={self.s0})")

    def _elastic(self, strain):
        tr = strain[..., 0] + strain[..., 1]
        out = 2.0 * self.mu * strain
        out[..., 0] += self.lam * tr
        out[..., 1] += self.lam * tr
        return out

    def _f(self, s):
        return self.a_f + (1.0 - self.a_f) / np.sqrt(1.0 + s / self.s0)

    def _df(self, s):
        return -(1.0 - self.a_f) / (2.0 * self.s0) * (
            1.0 + s / self.s0) ** -1.5

    def stress(self, strain):
        strain = np.asarray(strain, dtype=float)
        ct = self._elastic(strain)
        s = tensor_dot(strain, ct)
        return self._f(s)[..., None] * ct

    def tangent(self, strain):
        strain = np.asarray(strain, dtype=float)
        ct = self._elastic(strain)
        s = tensor_dot(strain, ct)
        f = self._f(s)
        df = self._df(s)
        out = _isotropic_tangent(f * self.lam, f * self.mu)
        # d s = 2 (C t) : d t; the Voigt gradient carries the weight.
        ds = 2.0 * ct * VOIGT_WEIGHT
        out += df[..., None, None] * ct[..., :, None] * ds[..., None, :]
        return out

    def constants(self):
        cstar_hi = 2.0 * self.mu + 2.0 * self.lam
        cstar_lo = 2.0 * self.mu
        lip = cstar_hi * (1.0 + (1.0 - self.a_f) * 2.0 / 3.0 ** 1.5)
        return LawConstants(cstar_hi, np.sqrt(self.a_f * cstar_lo), lip)


_LAW_REGISTRY = {
    "linear": LinearElasticity,
    "hencky_mises": HenckyMises,
    "damage": DamageLaw,
}


def make_law(name, **params):
    """Build a stress-strain law by name.

    Parameters
    ----------
    name : str
        One of 'linear', 'hencky_mises', 'damage'.
    **params
        Forwarded to the law constructor.
    """
    try:
        cls = _LAW_REGISTRY[name]
    except KeyError:
        known = ", ".join(sorted(_LAW_REGISTRY))
        raise ConfigurationError(
            f"unknown law '{name}' (known: {known})") from None
    try:
        return cls(**params)
    except TypeError as exc:
        raise ConfigurationError(f"bad parameters for law '{name}': {exc}")
