"""Back-propagation and topological-derivative maps."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from threadpoolctl import threadpool_limits

from .coremath import contract
from .errors import DegenerateMapError, InvalidArgument
from .forward import FilteredBoundaryData
from .greens import green_block, im_dyadic_green
from .scene import Scene, TrialInclusion, incident_field

CHUNK = 64   # grid points per block; fixed so results do not depend on threads
AXES = "xyz"


@dataclass(frozen=True)
class SearchGrid:
    origin: np.ndarray
    spacing: float
    dims: tuple

    def __post_init__(self):
        object.__setattr__(self, "origin", np.asarray(self.origin, dtype=float))
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        if len(self.dims) != 3 or min(self.dims) < 1:
            raise InvalidArgument("grid dims must be three positive integers")
        if not self.spacing > 0:
            raise InvalidArgument("grid spacing must be positive")

    @classmethod
    def slice_through(cls, center, side, spacing, axis="z"):
        """Square slice centred on `center`, normal to `axis`."""
        if axis not in AXES:
            raise InvalidArgument(f"slice axis must be one of x, y, z (got {axis!r})")
        n = int(round(side / spacing)) + 1
        dims = [n, n, n]
        dims[AXES.index(axis)] = 1
        origin = np.asarray(center, dtype=float) - 0.5 * (n - 1) * spacing
        origin[AXES.index(axis)] = center[AXES.index(axis)]
        return cls(origin, spacing, tuple(dims))

    def axis_coords(self, i):
        return self.origin[i] + self.spacing * np.arange(self.dims[i])

    def points(self):
        xs = [self.axis_coords(i) for i in range(3)]
        X, Y, Z = np.meshgrid(*xs, indexing="ij")
        return np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=-1)

    @property
    def plane_axes(self):
        return tuple(i for i in range(3) if self.dims[i] > 1)

    def rotated(self, R):
        """Rotated point cloud; grids are axis aligned so this returns points only."""
        return self.points() @ np.asarray(R).T


@dataclass
class ImagingMap:
    grid: SearchGrid
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def flat(self):
        return self.values.ravel()


# ---------------------------------------------------------------------------
# back-propagation

def _sources(data: FilteredBoundaryData):
    """-(1/eps0) w (nu x conj(F)) laid out as (3N, K)."""
    W = np.conj(data.values)
    nu = data.mesh.normals
    V = np.cross(nu[None], W) * (-data.mesh.weights[None, :, None] / data.ctx.eps0)
    return V.transpose(1, 2, 0).reshape(3 * data.mesh.n, data.n_incidences)


def backpropagate(data: FilteredBoundaryData, Z, curl=True, field_u=True):
    """U and curl U at points Z, each of shape (M, K, 3) (or (K, 3) for one point).

    U(z) = -(1/eps0) sum_y w_y G(y, z) (nu(y) x conj(F(y))).
    """
    Z = np.asarray(Z, dtype=float)
    single = Z.ndim == 1
    Z = np.atleast_2d(Z)
    V = _sources(data)
    M, K, N = len(Z), data.n_incidences, data.mesh.n
    U = np.zeros((M, K, 3), dtype=complex) if field_u else None
    cU = np.zeros((M, K, 3), dtype=complex) if curl else None
    with threadpool_limits(limits=1, user_api="blas"):
        for s in range(0, M, CHUNK):
            Zc = Z[s:s + CHUNK]
            m = len(Zc)
            G, C = green_block(data.ctx, Zc, data.mesh.nodes, curl=True)
            if field_u:
                U[s:s + m] = (G.transpose(0, 2, 1, 3).reshape(3 * m, 3 * N) @ V
                              ).reshape(m, 3, K).transpose(0, 2, 1)
            if curl:
                cU[s:s + m] = (C.transpose(0, 2, 1, 3).reshape(3 * m, 3 * N) @ V
                               ).reshape(m, 3, K).transpose(0, 2, 1)
    if single:
        return (U[0] if field_u else None), (cU[0] if curl else None)
    return U, cU


def td_from_fields(U, cU, theta, pol, Z, trial: TrialInclusion, kappa):
    """Per-incidence TD values, shape (M, K), from back-propagated fields."""
    H0, curlH0 = incident_field(theta, pol, kappa, np.atleast_2d(Z))   # (K, M, 3)
    out = 0.0
    if trial.a_mu != 0.0:
        h = np.einsum("ab,kmb->mka", trial.m_mu, H0)
        out = out + kappa ** 2 * trial.a_mu * np.sum(U * h, axis=-1)
    if trial.a_eps != 0.0:
        h = np.einsum("ab,kmb->mka", trial.m_eps, curlH0)
        out = out + trial.a_eps * np.sum(cU * h, axis=-1)
    if np.isscalar(out):
        return np.zeros((len(np.atleast_2d(Z)), len(theta)))
    return -np.real(out)


def td_single(data: FilteredBoundaryData, incidence, z, trial: TrialInclusion):
    """TD for one incidence index k (or (j, l)) at one point."""
    if isinstance(incidence, tuple):
        incidence = 2 * incidence[0] + incidence[1]
    sub = data.select(incidence)
    U, cU = backpropagate(sub, np.atleast_2d(z), curl=trial.a_eps != 0, field_u=trial.a_mu != 0)
    return float(td_from_fields(U, cU, sub.theta, sub.pol, z, trial, data.ctx.kappa)[0, 0])


def td_points(data: FilteredBoundaryData, Z, trial: TrialInclusion):
    """Multi-incidence TD, (1/n) sum over the 2n incidences, at points Z."""
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    out = np.empty(len(Z))
    for s in range(0, len(Z), CHUNK):
        Zc = Z[s:s + CHUNK]
        U, cU = backpropagate(data, Zc, curl=trial.a_eps != 0, field_u=trial.a_mu != 0)
        td = td_from_fields(U, cU, data.theta, data.pol, Zc, trial, data.ctx.kappa)
        out[s:s + len(Zc)] = td.sum(axis=1) / data.n_directions
    return out


def td_multi(data: FilteredBoundaryData, grid: SearchGrid, trial: TrialInclusion, points=None):
    """Imaging map over the grid. `points` overrides grid.points() (rotated runs)."""
    P = grid.points() if points is None else points
    vals = td_points(data, P, trial)
    return ImagingMap(grid, vals.reshape(grid.dims), {"n_directions": data.n_directions})


# ---------------------------------------------------------------------------
# closed forms

KINDS = ("permeable", "dielectric")


def td_closed_form(kind, Z, scene: Scene):
    """4 pi rho^3 k^2 C / eps0^2 * Re(Im G M_D : M_S Im G) at points Z."""
    if kind not in KINDS:
        raise InvalidArgument(f"kind must be one of {KINDS}")
    ctx = scene.ctx
    inc, trial = scene.inclusion, scene.trial
    if kind == "permeable":
        C, MD, MS = trial.C_mu, inc.m_mu, trial.m_mu
    else:
        C, MD, MS = trial.C_eps, inc.m_eps, trial.m_eps
    im = im_dyadic_green(ctx, Z, inc.center)
    val = contract(im @ MD, MS @ im)
    return 4.0 * np.pi * inc.scale ** 3 * ctx.kappa ** 2 * C / ctx.eps0 ** 2 * np.real(val)


def closed_form_map(scene: Scene, grid: SearchGrid, kind):
    return ImagingMap(grid, td_closed_form(kind, grid.points(), scene).reshape(grid.dims),
                      {"closed_form": kind})


def norm_im_green_sq(ctx, Z, zD):
    im = im_dyadic_green(ctx, Z, zD)
    return np.sum(im * im, axis=(-2, -1))


# ---------------------------------------------------------------------------
# metrics

def _half_crossing(profile, i0, step, half):
    """Distance (in samples) from i0 to the first crossing below `half`."""
    i = i0
    while 0 <= i + step < len(profile):
        a, b = profile[i], profile[i + step]
        if b < half:
            return (i - i0) * step + (a - half) / (a - b) if a != b else abs(i - i0)
        i += step
    return np.nan


def _first_min(profile, i0, step):
    i = i0
    while 0 <= i + step < len(profile):
        if profile[i + step] > profile[i]:
            return abs(i - i0)
        i += step
    return np.nan


def peak_metrics(m: ImagingMap, z_true):
    """argmax, localization error, FWHM along the in-plane axes, sidelobe ratio."""
    v = np.asarray(m.values, dtype=float)
    if not np.all(np.isfinite(v)):
        raise DegenerateMapError("map has non-finite values")
    if np.ptp(v) == 0:
        raise DegenerateMapError("map is constant")
    g = m.grid
    idx = np.unravel_index(int(np.argmax(v)), v.shape)
    peak = v[idx]
    loc = g.origin + g.spacing * np.asarray(idx)
    axes = g.plane_axes or (0,)
    fwhm = {}
    lobe = []
    for ax in axes:
        sl = list(idx)
        sl[ax] = slice(None)
        prof = v[tuple(sl)]
        i0 = idx[ax]
        left = _half_crossing(prof, i0, -1, 0.5 * peak)
        right = _half_crossing(prof, i0, 1, 0.5 * peak)
        fwhm[AXES[ax]] = (left + right) * g.spacing
        lobe += [_first_min(prof, i0, -1), _first_min(prof, i0, 1)]
    # sidelobes: everything beyond the mean first-minimum radius
    lobe_r = np.nanmean(lobe) * g.spacing if np.any(np.isfinite(lobe)) else np.inf
    dist = np.linalg.norm(g.points() - loc, axis=1).reshape(v.shape)
    outside = v[dist > lobe_r]
    side = float(outside.max()) if outside.size else np.nan
    return {
        "argmax": loc,
        "peak_value": float(peak),
        "localization_error": float(np.linalg.norm(loc - np.asarray(z_true, dtype=float))),
        "fwhm": fwhm,
        "sidelobe_ratio": float(peak / side) if side and side > 0 else np.inf,
    }
