"""Free-space Green's functions for the time-harmonic Maxwell system.

    g(x, y)  = exp(i k r) / (4 pi r),            r = |x - y|
    G(x, y)  = -eps0 (I + k^-2 grad grad^T) g     (dyadic, symmetric)
    curl_x G = -eps0 [grad_x g]_x                 (the Hessian part is curl free)

Im G is smooth through r = 0 and is written with spherical Bessel functions.
All functions broadcast over leading axes of x and y.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .coremath import cross_matrix, sphere_mesh, spherical_bessel
from .errors import InvalidArgument, SingularityError

I3 = np.eye(3)


@dataclass(frozen=True)
class WaveContext:
    kappa: float
    eps0: float = 1.0

    def __post_init__(self):
        if not self.kappa > 0:
            raise InvalidArgument("kappa must be positive")
        if not self.eps0 > 0:
            raise InvalidArgument("eps0 must be positive")

    @property
    def wavelength(self):
        return 2.0 * np.pi / self.kappa

    @property
    def r_min(self):
        return 1e-6 * self.wavelength


def _displacement(ctx, x, y, allow_zero=False):
    # 0-d intermediates would decay to python scalars, so keep one axis
    d = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    lead = d.shape[:-1]
    d = d.reshape(-1, 3)
    r = np.linalg.norm(d, axis=-1)
    if not allow_zero and np.any(r < ctx.r_min):
        raise SingularityError(
            f"source and target closer than r_min={ctx.r_min:.3g} (min distance {np.min(r):.3g})")
    return d, r, lead


def _fit(out, lead):
    # restore the caller's leading shape; scalars come back as 0-d
    out = out.reshape(lead + out.shape[1:])
    return out[()] if out.ndim == 0 else out


def scalar_green(ctx: WaveContext, x, y):
    _, r, lead = _displacement(ctx, x, y)
    return _fit(np.exp(1j * ctx.kappa * r) / (4.0 * np.pi * r), lead)


def dyadic_green(ctx: WaveContext, x, y):
    d, r, lead = _displacement(ctx, x, y)
    kr = ctx.kappa * r
    g = np.exp(1j * kr) / (4.0 * np.pi * r)
    a = 1.0 + 1j / kr - 1.0 / kr ** 2
    b = 1.0 + 3j / kr - 3.0 / kr ** 2
    rh = d / r[..., None]
    rr = rh[..., :, None] * rh[..., None, :]
    return _fit(-ctx.eps0 * g[..., None, None] * (a[..., None, None] * I3 - b[..., None, None] * rr), lead)


def grad_scalar_green(ctx: WaveContext, x, y):
    """Gradient of g(x, y) with respect to x."""
    d, r, lead = _displacement(ctx, x, y)
    g = np.exp(1j * ctx.kappa * r) / (4.0 * np.pi * r)
    return _fit((g * (1j * ctx.kappa - 1.0 / r))[..., None] * (d / r[..., None]), lead)


def curl_dyadic_green(ctx: WaveContext, x, y):
    """Column-wise curl in x of G(x, y)."""
    return -ctx.eps0 * cross_matrix(grad_scalar_green(ctx, x, y))


def im_dyadic_green(ctx: WaveContext, x, y):
    """Im G(x, y), real symmetric; finite at x = y."""
    d, r, lead = _displacement(ctx, x, y, allow_zero=True)
    kr = ctx.kappa * r
    j0 = spherical_bessel(0, kr)
    j2 = spherical_bessel(2, kr)
    safe = np.where(r > 0, r, 1.0)
    rh = np.where((r > 0)[..., None], d / np.asarray(safe)[..., None], 0.0)
    rr = rh[..., :, None] * rh[..., None, :]
    j0 = np.asarray(j0)[..., None, None]
    j2 = np.asarray(j2)[..., None, None]
    return _fit(-(ctx.eps0 * ctx.kappa / (4.0 * np.pi)) * ((2.0 / 3.0) * j0 * I3 + j2 * (rr - I3 / 3.0)), lead)


def curl_im_dyadic_green(ctx: WaveContext, x, y):
    """Column-wise curl in x of Im G(x, y); zero at x = y."""
    d, r, lead = _displacement(ctx, x, y, allow_zero=True)
    kr = ctx.kappa * r
    j1 = np.asarray(spherical_bessel(1, kr))
    safe = np.where(r > 0, r, 1.0)
    rh = np.where((r > 0)[..., None], d / np.asarray(safe)[..., None], 0.0)
    grad_im_g = (-(ctx.kappa ** 2) * j1 / (4.0 * np.pi))[..., None] * rh
    return _fit(-ctx.eps0 * cross_matrix(grad_im_g), lead)


def mat_cross(A, nu):
    """A x nu, defined column-wise: (A x nu) p = (A p) x nu."""
    return -cross_matrix(np.asarray(nu)) @ A


# ---------------------------------------------------------------------------
# batched evaluation for quadrature

def green_block(ctx: WaveContext, Z, Y, curl=False):
    """G(z_m, y_n) (and curl_z G) for all pairs, shape (M, N, 3, 3)."""
    Z = np.ascontiguousarray(Z, dtype=float).reshape(-1, 3)
    Y = np.ascontiguousarray(Y, dtype=float).reshape(-1, 3)
    G, C, rmin = _kernels.green_block(Z, Y, ctx.kappa, ctx.eps0, bool(curl))
    if rmin < ctx.r_min:
        raise SingularityError(f"quadrature node within r_min of an evaluation point ({rmin:.3g})")
    return (G, C) if curl else G


# ---------------------------------------------------------------------------
# Helmholtz-Kirchhoff validators

HK_VARIANTS = ("plain", "tangential", "curl")


def hk_default_nodes(ctx, r):
    return int(max(2000, 40 * (ctx.kappa * r) ** 2))


def hk_integral(ctx: WaveContext, variant, r, x, y, n_nodes=None):
    """Quadrature of the boundary integral behind each identity.

    plain:      int conj(G(x,s))^T G(s,y)
    tangential: int (conj(G(x,s)) x nu)^T (G(y,s) x nu)
    curl:       int (conj(curl_s G(x,s)) x nu)^T (curl_s G(y,s) x nu)
    """
    if variant not in HK_VARIANTS:
        raise InvalidArgument(f"unknown HK variant {variant!r}")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.linalg.norm(x) > 0.5 * r or np.linalg.norm(y) > 0.5 * r:
        raise InvalidArgument("HK points must stay at least r/2 away from the sphere")
    if n_nodes is None:
        n_nodes = hk_default_nodes(ctx, r)
    mesh = sphere_mesh(r, n_nodes)
    code = HK_VARIANTS.index(variant)
    partial = _kernels.hk_partials(mesh.nodes, mesh.normals, mesh.weights[0], x, y,
                                   ctx.kappa, ctx.eps0, code)
    # fixed-order pairwise reduction of the per-block sums
    return np.sum(partial, axis=0)


def hk_prediction(ctx: WaveContext, variant, x, y):
    im = im_dyadic_green(ctx, x, y)
    if variant == "curl":
        return -ctx.kappa * ctx.eps0 * im
    return -(ctx.eps0 / ctx.kappa) * im


def hk_residual(ctx: WaveContext, variant, r, x, y, n_nodes=None):
    """(quadrature - prediction, its Frobenius norm)."""
    res = hk_integral(ctx, variant, r, x, y, n_nodes) - hk_prediction(ctx, variant, x, y)
    return res, float(np.sqrt(np.sum(np.abs(res) ** 2)))
