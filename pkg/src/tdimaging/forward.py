"""Leading-order filtered boundary data and measurement noise.

The data stored per incidence is the filtered scattered trace, i.e. what the
imaging functional consumes, evaluated from the small-volume expansion:

    F(x) = rho^3 k^2 (mu1r - 1)/eps0 [G(zD, x) x nu] M_mu H0(zD)
         + rho^3 (eps1r - 1)/eps0 [(curl_zD G(x, zD))^T x nu] M_eps curl H0(zD)
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import _kernels
from .coremath import SphereMesh, sphere_mesh, stream
from .errors import InvalidArgument
from .greens import WaveContext, curl_dyadic_green, dyadic_green, green_block
from .scene import Scene, incident_field

FILTER_MODES = ("half", "farfield")


@dataclass(frozen=True)
class FilteredBoundaryData:
    mesh: SphereMesh
    theta: np.ndarray      # (K, 3) incidence directions, K = 2n in (j, l) order
    pol: np.ndarray        # (K, 3)
    values: np.ndarray     # (K, N, 3) complex, tangential
    n_directions: int
    ctx: WaveContext

    @property
    def n_incidences(self):
        return len(self.theta)

    def select(self, idx):
        idx = np.atleast_1d(idx)
        return replace(self, theta=self.theta[idx], pol=self.pol[idx], values=self.values[idx])

    def with_values(self, values):
        return replace(self, values=values)


@dataclass(frozen=True)
class MeasurementNoiseSpec:
    sigma: float
    filter_mode: str = "half"
    seed: int = 0

    def __post_init__(self):
        if self.sigma < 0:
            raise InvalidArgument("noise sigma must be >= 0")
        if self.filter_mode not in FILTER_MODES:
            raise InvalidArgument(f"filter_mode must be one of {FILTER_MODES}")


def boundary_mesh(scene: Scene) -> SphereMesh:
    return sphere_mesh(scene.boundary_radius, scene.boundary_nodes, scene.boundary_center)


def _check_inside(scene: Scene):
    zD = scene.inclusion.center
    if np.linalg.norm(zD - scene.boundary_center) >= scene.boundary_radius:
        raise InvalidArgument("inclusion center must lie strictly inside the boundary sphere")


def _synthesize(scene: Scene, mesh: SphereMesh, theta, pol):
    _check_inside(scene)
    ctx = scene.ctx
    m = scene.materials
    inc = scene.inclusion
    zD = inc.center
    rho3 = inc.scale ** 3
    H0, curlH0 = incident_field(theta, pol, ctx.kappa, zD)            # (K, 3)
    nu = mesh.normals
    out = np.zeros((len(theta), mesh.n, 3), dtype=complex)
    c_mu = rho3 * ctx.kappa ** 2 * (m.mu1r - 1.0) / ctx.eps0
    c_eps = rho3 * (m.eps1r - 1.0) / ctx.eps0
    if c_mu != 0.0:
        G = dyadic_green(ctx, zD, mesh.nodes)                          # (N, 3, 3)
        p = np.einsum("nab,kb->kna", G, H0 @ inc.m_mu.T)
        out += c_mu * np.cross(p, nu[None])
    if c_eps != 0.0:
        # curl in zD of G(x, zD) is curl_x' G(x', x) at x' = zD by symmetry
        C = curl_dyadic_green(ctx, zD, mesh.nodes)
        q = np.einsum("nba,kb->kna", C, curlH0 @ inc.m_eps.T)
        out += c_eps * np.cross(q, nu[None])
    return out


def synthesize_filtered_data(scene: Scene, incidence=None, mesh: SphereMesh | None = None):
    """Filtered data for one incidence (j, l), or for all 2n when incidence is None."""
    mesh = boundary_mesh(scene) if mesh is None else mesh
    theta, pol = scene.incidences.flat()
    if incidence is not None:
        j, l = incidence
        k = 2 * int(j) + int(l)
        theta, pol = theta[k:k + 1], pol[k:k + 1]
    values = _synthesize(scene, mesh, theta, pol)
    return FilteredBoundaryData(mesh, theta, pol, values, scene.incidences.n, scene.ctx)


def perturb_data(data: FilteredBoundaryData, scale, rho, seed=0, n_waves=4):
    """Add scale * rho^4 times a smooth random tangential field (robustness probe).

    The field is a sum of a few unit-wavenumber plane waves with random
    complex amplitudes, projected onto the tangent plane; off by default.
    """
    if scale == 0:
        return data
    rng = stream(seed, "data-perturbation")
    nodes, nu = data.mesh.nodes, data.mesh.normals
    radius = data.mesh.radius
    out = np.zeros_like(data.values)
    for k in range(data.n_incidences):
        dirs = rng.standard_normal((n_waves, 3))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        amp = rng.standard_normal((n_waves, 3)) + 1j * rng.standard_normal((n_waves, 3))
        field = np.exp(1j * (nodes @ dirs.T) / radius) @ amp
        out[k] = field - np.sum(field * nu, axis=1, keepdims=True) * nu
    return data.with_values(data.values + scale * rho ** 4 * out)


# ---------------------------------------------------------------------------
# measurement noise

def draw_noise(mesh: SphereMesh, sigma, rng):
    """Circular complex Gaussian eta with E|eta_c|^2 = sigma^2 / w per component."""
    z = rng.standard_normal((mesh.n, 3, 2))
    scale = sigma / np.sqrt(2.0 * mesh.weights)
    return scale[:, None] * (z[..., 0] + 1j * z[..., 1])


def noise_stream(spec: MeasurementNoiseSpec, trial, incidence):
    return stream(spec.seed, "measurement-noise", trial, incidence)


def filtered_noise(mesh: SphereMesh, ctx: WaveContext, eta, mode):
    """(1/2 - P)[eta x nu] with P in its far-field quadrature form.

    eta has shape (N, 3) or (K, N, 3).
    """
    nu = mesh.normals
    out = 0.5 * np.cross(eta, nu)
    if mode == "farfield":
        E = eta[None] if eta.ndim == 2 else eta
        V = np.ascontiguousarray(mesh.weights[:, None, None] * E.transpose(1, 2, 0))
        S = _kernels.offdiag_apply(np.ascontiguousarray(mesh.nodes), V, ctx.kappa, ctx.eps0)
        S = S.transpose(2, 0, 1)
        if eta.ndim == 2:
            S = S[0]
        out = out - (1j * ctx.kappa / ctx.eps0) * np.cross(S, nu)
    return out


def inject_measurement_noise(data: FilteredBoundaryData, spec: MeasurementNoiseSpec, trial=0,
                             incidence_ids=None):
    """Add filtered measurement noise; each incidence has its own stream.

    incidence_ids gives the global incidence index used for the stream of each
    row of data.values (defaults to 0..K-1).
    """
    if spec.sigma == 0:
        return data
    K = data.n_incidences
    ids = range(K) if incidence_ids is None else incidence_ids
    eta = np.stack([draw_noise(data.mesh, spec.sigma, noise_stream(spec, trial, k)) for k in ids])
    return data.with_values(data.values + filtered_noise(data.mesh, data.ctx, eta, spec.filter_mode))


def noise_response(mesh: SphereMesh, ctx: WaveContext, Z, mode="half"):
    """Linear maps from a noise draw to the back-propagated fields.

    Returns (LU, Lcurl), each of shape (P, 3, N, 3), such that back-propagating
    noise-only data filtered in `mode` gives
        U(z_p) = sum_n LU[p, :, n, :] @ conj(eta_n).
    Used to run many Monte Carlo trials without redoing the O(N^2) filter.
    """
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    P = len(Z)
    nu = mesh.normals
    Pn = np.eye(3) - nu[:, :, None] * nu[:, None, :]
    G, C = green_block(ctx, Z, mesh.nodes, curl=True)                # (P, N, 3, 3)
    w = mesh.weights
    out = []
    for K in (G, C):
        B = -(w[None, :, None, None] / ctx.eps0) * (K @ Pn[None])     # (P, N, 3, 3)
        L = 0.5 * np.transpose(B, (0, 2, 1, 3))                       # (P, 3, N, 3)
        if mode == "farfield":
            # T_i = sum_{x != i} B_x conj(G(x_i, x)), through its conjugate transpose
            V = np.ascontiguousarray(np.conj(B).transpose(1, 3, 0, 2).reshape(mesh.n, 3, 3 * P))
            R = _kernels.offdiag_apply(np.ascontiguousarray(mesh.nodes), V, ctx.kappa, ctx.eps0)
            T = np.conj(R.reshape(mesh.n, 3, P, 3)).transpose(2, 3, 0, 1)
            L = L + (1j * ctx.kappa / ctx.eps0) * w[None, None, :, None] * T
        out.append(L)
    return out[0], out[1]
