"""Small numerical primitives shared by the other modules.

Vectors are numpy arrays with a trailing axis of length 3 and matrices a
trailing (3, 3) block, so most helpers broadcast over leading axes.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument

GOLDEN_ANGLE = np.pi * (3.0 - np.sqrt(5.0))

# below this the closed forms lose digits; 4 Taylor terms are exact to
# double precision there
_TAYLOR_CUT = 1e-3
# between _TAYLOR_CUT and _SERIES_CUT the closed forms for j1, j2 still
# cancel badly, so the ascending series is summed to convergence
_SERIES_CUT = 1.0


# ---------------------------------------------------------------------------
# linear algebra helpers

def contract(A, B):
    """A : B = sum_ij a_ij b_ij (no conjugation)."""
    return np.einsum("...ij,...ij->...", A, B)


def frob_norm(A):
    return np.sqrt(np.sum(np.abs(A) ** 2, axis=(-2, -1)))


def cross_matrix(v):
    """[v]_x with [v]_x p = v x p."""
    v = np.asarray(v)
    out = np.zeros(v.shape[:-1] + (3, 3), dtype=v.dtype)
    out[..., 0, 1] = -v[..., 2]
    out[..., 0, 2] = v[..., 1]
    out[..., 1, 0] = v[..., 2]
    out[..., 1, 2] = -v[..., 0]
    out[..., 2, 0] = -v[..., 1]
    out[..., 2, 1] = v[..., 0]
    return out


def unit(v):
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v, axis=-1, keepdims=True)
    if np.any(n == 0):
        raise InvalidArgument("zero vector has no direction")
    return v / n


# ---------------------------------------------------------------------------
# spherical Bessel functions j0, j1, j2

def _series(order, x):
    # sum_k (-1)^k x^(2k+n) / (2^k k! (2k+2n+1)!!)
    dfact = 1.0
    for m in range(1, 2 * order + 2, 2):
        dfact *= m
    term = x ** order / dfact
    total = term.copy()
    x2 = x * x
    for k in range(1, 30):
        term = -term * x2 / (2.0 * k * (2 * k + 2 * order + 1))
        total += term
        if np.all(np.abs(term) <= 1e-18 * np.maximum(np.abs(total), 1e-300)):
            break
    return total


def _taylor4(order, x):
    x2 = x * x
    if order == 0:
        return 1.0 - x2 / 6.0 + x2 * x2 / 120.0 - x2 ** 3 / 5040.0
    if order == 1:
        return x * (1.0 / 3.0 - x2 / 30.0 + x2 * x2 / 840.0 - x2 ** 3 / 45360.0)
    return x2 * (1.0 / 15.0 - x2 / 210.0 + x2 * x2 / 7560.0 - x2 ** 3 / 498960.0)


def spherical_bessel(order, x):
    """Spherical Bessel function of the first kind, orders 0, 1 and 2.

    Works on scalars and arrays. Even in x for orders 0 and 2, odd for 1.
    """
    if order not in (0, 1, 2):
        raise InvalidArgument(f"spherical_bessel order must be 0, 1 or 2, got {order!r}")
    scalar = np.ndim(x) == 0
    x = np.atleast_1d(np.asarray(x, dtype=float))
    ax = np.abs(x)
    out = np.empty_like(x)

    tiny = ax < _TAYLOR_CUT
    mid = (~tiny) & (ax < _SERIES_CUT)
    big = ax >= _SERIES_CUT
    if tiny.any():
        out[tiny] = _taylor4(order, x[tiny])
    if mid.any():
        out[mid] = _series(order, x[mid])
    if big.any():
        xb = x[big]
        s, c = np.sin(xb), np.cos(xb)
        if order == 0:
            out[big] = s / xb
        elif order == 1:
            out[big] = s / xb ** 2 - c / xb
        else:
            out[big] = (3.0 / xb ** 3 - 1.0 / xb) * s - 3.0 * c / xb ** 2
    return float(out[0]) if scalar else out


# ---------------------------------------------------------------------------
# directions and sphere quadrature

def fibonacci_sphere(n):
    """n unit vectors on the golden-angle spiral (equal-area latitude bands)."""
    n = int(n)
    if n < 1:
        raise InvalidArgument("fibonacci_sphere needs n >= 1")
    i = np.arange(n, dtype=float)
    z = 1.0 - (2.0 * i + 1.0) / n
    r = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
    phi = GOLDEN_ANGLE * i
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=-1)


def orthonormal_triad(theta):
    """Two unit vectors completing theta to a right-handed frame.

    Returns (p1, p2) with p1 x p2 = theta. For theta = e3 this gives (e1, e2).
    Accepts a single direction or an (n, 3) stack.
    """
    theta = np.asarray(theta, dtype=float)
    norms = np.linalg.norm(theta, axis=-1)
    if np.any(norms < 1e-12):
        raise InvalidArgument("orthonormal_triad: zero direction")
    theta = theta / norms[..., None]
    e2 = np.array([0.0, 1.0, 0.0])
    e3 = np.array([0.0, 0.0, 1.0])
    # e2 x theta is safe unless theta is close to +-e2
    near_e2 = np.abs(theta[..., 1]) > 0.9
    ref = np.where(near_e2[..., None], e3, e2)
    p1 = np.cross(ref, theta)
    p1 /= np.linalg.norm(p1, axis=-1, keepdims=True)
    p2 = np.cross(theta, p1)
    return p1, p2


@dataclass(frozen=True)
class SphereMesh:
    center: np.ndarray
    radius: float
    nodes: np.ndarray
    weights: np.ndarray
    normals: np.ndarray

    @property
    def n(self):
        return len(self.weights)


def sphere_mesh(radius, n_nodes, center=(0.0, 0.0, 0.0)):
    """Equal-weight Fibonacci quadrature on a sphere."""
    if radius <= 0:
        raise InvalidArgument("sphere radius must be positive")
    center = np.asarray(center, dtype=float)
    normals = fibonacci_sphere(n_nodes)
    w = np.full(len(normals), 4.0 * np.pi * radius ** 2 / len(normals))
    return SphereMesh(center, float(radius), center + radius * normals, w, normals)


@dataclass(frozen=True)
class VolumeMesh:
    nodes: np.ndarray
    weights: np.ndarray
    center: np.ndarray
    radius: float


def ball_mesh(radius, n_radial=16, n_angular=400, center=(0.0, 0.0, 0.0)):
    """Gauss-Legendre shells times Fibonacci directions over a ball."""
    center = np.asarray(center, dtype=float)
    t, wt = np.polynomial.legendre.leggauss(n_radial)
    r = 0.5 * radius * (t + 1.0)
    wr = 0.5 * radius * wt * r ** 2
    dirs = fibonacci_sphere(n_angular)
    wa = 4.0 * np.pi / n_angular
    nodes = center + (r[:, None, None] * dirs[None, :, :]).reshape(-1, 3)
    weights = np.repeat(wr * wa, n_angular)
    return VolumeMesh(nodes, weights, center, float(radius))


# ---------------------------------------------------------------------------
# random streams

def _label_key(label):
    return int.from_bytes(hashlib.blake2b(str(label).encode(), digest_size=8).digest(), "little")


def stream(seed, label, *index):
    """Independent generator for (seed, label, index...).

    Streams do not depend on creation order, so parallel schedules give the
    same numbers.
    """
    key = (_label_key(label),) + tuple(int(i) for i in index)
    ss = np.random.SeedSequence(entropy=int(seed) & (2 ** 64 - 1), spawn_key=key)
    return np.random.Generator(np.random.PCG64(ss))


@dataclass(frozen=True)
class RandomFieldSpec:
    sigma: float
    corr_len: float
    n_modes: int = 256
    seed: int = 0

    def __post_init__(self):
        if self.sigma < 0:
            raise InvalidArgument("random field sigma must be >= 0")
        if self.corr_len <= 0:
            raise InvalidArgument("random field corr_len must be > 0")
        if self.n_modes < 1:
            raise InvalidArgument("random field needs n_modes >= 1")


@dataclass(frozen=True)
class FieldModes:
    """One draw of the random cosine features."""
    amplitude: float
    wavevectors: np.ndarray
    phases: np.ndarray

    def __call__(self, points):
        points = np.asarray(points, dtype=float)
        out = np.zeros(points.shape[:-1])
        # chunk over modes to bound memory
        for s in range(0, len(self.phases), 64):
            arg = points @ self.wavevectors[s:s + 64].T + self.phases[s:s + 64]
            out += np.cos(arg).sum(axis=-1)
        return self.amplitude * out


def draw_field_modes(spec: RandomFieldSpec, realization=0):
    rng = stream(spec.seed, "random-field", realization)
    k = rng.standard_normal((spec.n_modes, 3)) / spec.corr_len
    phi = rng.uniform(0.0, 2.0 * np.pi, spec.n_modes)
    return FieldModes(spec.sigma * np.sqrt(2.0 / spec.n_modes), k, phi)


def sample_random_field(spec: RandomFieldSpec, points, realization=0):
    """Stationary Gaussian-correlated field, sigma^2 exp(-|d|^2 / (2 l^2))."""
    if spec.sigma == 0:
        return np.zeros(np.asarray(points).shape[:-1])
    return draw_field_modes(spec, realization)(points)


def gaussian_correlation(sigma, corr_len, d2):
    return sigma ** 2 * np.exp(-0.5 * d2 / corr_len ** 2)
