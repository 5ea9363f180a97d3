"""Materials, inclusions, trial inclusions, incident plane waves."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .coremath import fibonacci_sphere, orthonormal_triad, spherical_bessel
from .errors import InvalidArgument
from .greens import WaveContext, im_dyadic_green

UNIT_BALL = 4.0 * np.pi / 3.0


@dataclass(frozen=True)
class Materials:
    eps0: float = 1.0
    mu0: float = 1.0
    eps1: float = 1.0
    mu1: float = 1.0
    eps2: float = 1.0
    mu2: float = 1.0
    omega: float = 1.0

    def __post_init__(self):
        for name in ("eps0", "mu0", "eps1", "mu1", "eps2", "mu2", "omega"):
            if not getattr(self, name) > 0:
                raise InvalidArgument(f"material parameter {name} must be positive")

    @property
    def kappa(self):
        return self.omega * np.sqrt(self.eps0 * self.mu0)

    @property
    def ctx(self):
        return WaveContext(self.kappa, self.eps0)

    # contrast ratios background / medium
    @property
    def mu1r(self):
        return self.mu0 / self.mu1

    @property
    def eps1r(self):
        return self.eps0 / self.eps1

    @property
    def mu2r(self):
        return self.mu0 / self.mu2

    @property
    def eps2r(self):
        return self.eps0 / self.eps2

    @property
    def a_mu(self):
        return self.mu2r - 1.0

    @property
    def a_eps(self):
        return self.eps2r - 1.0

    @property
    def C_mu(self):
        return (self.mu1r - 1.0) * (self.mu2r - 1.0)

    @property
    def C_eps(self):
        return (self.eps1r - 1.0) * (self.eps2r - 1.0)


def polarization_tensor_sphere(contrast_k, volume):
    """3 / (2k + 1) |B| I for a ball of volume |B| and real contrast k > 0."""
    if not contrast_k > 0:
        raise InvalidArgument("sphere polarization tensor needs a real contrast k > 0")
    if not volume > 0:
        raise InvalidArgument("volume must be positive")
    return (3.0 / (2.0 * contrast_k + 1.0)) * volume * np.eye(3)


def _check_spd(M, name):
    M = np.asarray(M, dtype=float)
    if M.shape != (3, 3):
        raise InvalidArgument(f"{name} must be a 3x3 matrix")
    if not np.allclose(M, M.T, atol=1e-12 * max(1.0, np.abs(M).max())):
        raise InvalidArgument(f"{name} must be symmetric")
    if np.linalg.eigvalsh(M).min() <= 0:
        raise InvalidArgument(f"{name} must be positive definite")
    return M


@dataclass(frozen=True)
class Inclusion:
    center: np.ndarray
    scale: float
    m_mu: np.ndarray
    m_eps: np.ndarray
    ref_volume: float = UNIT_BALL

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        if not self.scale > 0:
            raise InvalidArgument("inclusion scale rho must be positive")
        object.__setattr__(self, "m_mu", _check_spd(self.m_mu, "m_mu"))
        object.__setattr__(self, "m_eps", _check_spd(self.m_eps, "m_eps"))

    @classmethod
    def sphere(cls, materials: Materials, center, scale, ref_volume=UNIT_BALL):
        return cls(center, scale,
                   polarization_tensor_sphere(materials.mu1r, ref_volume),
                   polarization_tensor_sphere(materials.eps1r, ref_volume),
                   ref_volume)

    def check_small(self, kappa):
        if self.scale * kappa > 0.1:
            warnings.warn(f"rho*kappa = {self.scale * kappa:.3g} > 0.1: leading-order"
                          " expansion may be inaccurate", stacklevel=2)


@dataclass(frozen=True)
class TrialInclusion:
    """Trial inclusion nucleated at the search point.

    Constants are properties so they always follow the materials.
    """
    materials: Materials
    m_mu: np.ndarray
    m_eps: np.ndarray
    ref_volume: float = UNIT_BALL
    inclusion_volume: float = UNIT_BALL

    @classmethod
    def sphere(cls, materials: Materials, ref_volume=UNIT_BALL, inclusion_volume=UNIT_BALL):
        return cls(materials,
                   polarization_tensor_sphere(materials.mu2r, ref_volume),
                   polarization_tensor_sphere(materials.eps2r, ref_volume),
                   ref_volume, inclusion_volume)

    @property
    def a_mu(self):
        return self.materials.a_mu

    @property
    def a_eps(self):
        return self.materials.a_eps

    @property
    def C_mu(self):
        return self.materials.C_mu

    @property
    def C_eps(self):
        return self.materials.C_eps

    # sphere constants
    @property
    def atilde_mu(self):
        m = self.materials
        return 3.0 * np.sqrt(np.pi) * m.mu2 * self.ref_volume * m.a_mu / (m.eps0 * (2 * m.mu0 + m.mu2))

    @property
    def atilde_eps(self):
        m = self.materials
        return 3.0 * np.sqrt(np.pi) * m.eps2 * self.ref_volume * m.a_eps / (m.eps0 * (2 * m.eps0 + m.eps2))

    @property
    def b_mu(self):
        m = self.materials
        return 12.0 * np.pi * (m.mu0 - m.mu2) * self.ref_volume / (m.eps0 ** 2 * (2 * m.mu0 + m.mu2))

    @property
    def b_eps(self):
        m = self.materials
        return 12.0 * np.pi * (m.eps0 - m.eps2) * self.ref_volume / (m.eps0 ** 2 * (2 * m.eps0 + m.eps2))

    @property
    def Ctilde_mu(self):
        m = self.materials
        return (36.0 * np.pi * m.mu1 * m.mu2 * m.C_mu * self.inclusion_volume * self.ref_volume
                / (m.eps0 ** 2 * (2 * m.mu0 + m.mu1) * (2 * m.mu0 + m.mu2)))

    @property
    def Ctilde_eps(self):
        m = self.materials
        return (36.0 * np.pi * m.eps1 * m.eps2 * m.C_eps * self.inclusion_volume * self.ref_volume
                / (m.eps0 ** 2 * (2 * m.eps0 + m.eps1) * (2 * m.eps0 + m.eps2)))


@dataclass(frozen=True)
class IncidenceSet:
    """n directions, two polarizations each; index k = 2 j + l."""
    directions: np.ndarray
    pol1: np.ndarray
    pol2: np.ndarray

    @classmethod
    def fibonacci(cls, n):
        theta = fibonacci_sphere(n)
        p1, p2 = orthonormal_triad(theta)
        return cls(theta, p1, p2)

    @property
    def n(self):
        return len(self.directions)

    def flat(self):
        """(theta, pol) arrays of length 2n in (j, l) order."""
        theta = np.repeat(self.directions, 2, axis=0)
        pol = np.empty_like(theta)
        pol[0::2] = self.pol1
        pol[1::2] = self.pol2
        return theta, pol

    def rotated(self, R):
        return IncidenceSet(self.directions @ R.T, self.pol1 @ R.T, self.pol2 @ R.T)


def incident_field(theta, pol, kappa, x):
    """H0 = pol exp(i k theta.x) and its curl i k (theta x pol) exp(i k theta.x).

    theta, pol may be (3,) or (K, 3); x may be (3,) or (M, 3). The result has
    shape (..., 3) with the incidence axis before the point axis.
    """
    theta = np.asarray(theta, dtype=float)
    pol = np.asarray(pol, dtype=float)
    if (np.any(np.abs(np.linalg.norm(theta, axis=-1) - 1.0) > 1e-9)
            or np.any(np.abs(np.linalg.norm(pol, axis=-1) - 1.0) > 1e-9)):
        raise InvalidArgument("incident_field needs unit direction and polarization")
    if np.any(np.abs(np.sum(theta * pol, axis=-1)) > 1e-9):
        raise InvalidArgument("polarization must be orthogonal to the direction")
    x = np.asarray(x, dtype=float)
    th, po, X = np.atleast_2d(theta), np.atleast_2d(pol), np.atleast_2d(x)
    phase = np.exp(1j * kappa * (th @ X.T))
    H0 = phase[..., None] * po[:, None, :]
    curl = (1j * kappa) * phase[..., None] * np.cross(th, po)[:, None, :]
    if x.ndim == 1:
        H0, curl = H0[:, 0], curl[:, 0]
    if theta.ndim == 1:
        H0, curl = H0[0], curl[0]
    return H0, curl


def direction_identity_check(incidences: IncidenceSet, kappa, d):
    """Lattice average of exp(i k theta.d) against j0(k|d|)."""
    d = np.asarray(d, dtype=float)
    lhs = np.mean(np.exp(1j * kappa * incidences.directions @ d))
    rhs = spherical_bessel(0, kappa * np.linalg.norm(d))
    return complex(lhs), float(rhs), float(abs(lhs - rhs))


def direction_matrix_check(incidences: IncidenceSet, ctx: WaveContext, d, cross=False):
    """(1/n) sum_j sum_l q q^T exp(i k theta.d) against -(4 pi / (k eps0)) Im G(d, 0).

    With cross=True the polarizations are replaced by theta x pol.
    """
    d = np.asarray(d, dtype=float)
    theta, pol = incidences.flat()
    q = np.cross(theta, pol) if cross else pol
    ph = np.exp(1j * ctx.kappa * theta @ d)
    lhs = np.einsum("k,ki,kj->ij", ph, q, q) / incidences.n
    rhs = -(4.0 * np.pi / (ctx.kappa * ctx.eps0)) * im_dyadic_green(ctx, d, np.zeros(3))
    return lhs, rhs, float(np.abs(lhs - rhs).max())


@dataclass(frozen=True)
class Scene:
    """Everything the forward model and the imaging functional need."""
    materials: Materials
    inclusion: Inclusion
    trial: TrialInclusion
    boundary_radius: float
    boundary_nodes: int
    incidences: IncidenceSet
    boundary_center: np.ndarray = field(default_factory=lambda: np.zeros(3))

    @property
    def ctx(self):
        return self.materials.ctx

    @property
    def kappa(self):
        return self.materials.kappa

    @property
    def wavelength(self):
        return 2.0 * np.pi / self.kappa
