"""Monte Carlo checks of the imaging functional under noise.

Measurement noise: covariance of the back-propagated noise field and the
signal-to-noise ratio of the multi-incidence map. Medium noise: speckle
produced by a weak random fluctuation of mu or 1/eps inside the domain,
compared with its nested-quadrature covariance prediction.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from threadpoolctl import threadpool_limits

from .coremath import (RandomFieldSpec, ball_mesh, contract, draw_field_modes,
                       gaussian_correlation)
from .errors import InvalidArgument
from .forward import (MeasurementNoiseSpec, boundary_mesh, draw_noise,
                      noise_response, noise_stream, synthesize_filtered_data)
from .greens import curl_im_dyadic_green, im_dyadic_green
from .imaging import backpropagate, td_from_fields
from .scene import IncidenceSet, Scene, incident_field

TRIAL_BATCH = 250


@dataclass(frozen=True)
class MCConfig:
    n_trials: int
    probe_pairs: tuple = ()
    seed: int = 0

    def __post_init__(self):
        if self.n_trials < 2:
            raise InvalidArgument("Monte Carlo needs at least 2 trials")


# ---------------------------------------------------------------------------
# measurement noise: covariance of U^noise

@dataclass
class CovarianceResult:
    z: np.ndarray
    z2: np.ndarray
    empirical: np.ndarray       # 3x3 complex, E[U(z) conj(U(z'))^T]
    stderr: np.ndarray          # 3x3, MC standard error of each entry
    prediction: np.ndarray      # 3x3 real
    samples: np.ndarray = field(repr=False, default=None)   # per-trial products


def _unique_points(pairs):
    pts = []
    index = []
    for z, z2 in pairs:
        ids = []
        for p in (z, z2):
            p = np.asarray(p, dtype=float)
            for i, q in enumerate(pts):
                if np.array_equal(p, q):
                    ids.append(i)
                    break
            else:
                pts.append(p)
                ids.append(len(pts) - 1)
        index.append(tuple(ids))
    return np.array(pts), index


def noise_field_samples(mesh, ctx, points, spec: MeasurementNoiseSpec, n_trials, incidence=0):
    """U^noise at `points` for each trial, shape (T, P, 3).

    Noise-only data filtered in spec.filter_mode, back-propagated. The filter and
    back-propagation are composed once into a linear map (see noise_response).
    """
    LU, _ = noise_response(mesh, ctx, points, spec.filter_mode)
    P = len(points)
    L = LU.reshape(3 * P, 3 * mesh.n)
    out = np.empty((n_trials, P, 3), dtype=complex)
    with threadpool_limits(limits=1, user_api="blas"):
        for s in range(0, n_trials, TRIAL_BATCH):
            ts = range(s, min(n_trials, s + TRIAL_BATCH))
            E = np.stack([np.conj(draw_noise(mesh, spec.sigma, noise_stream(spec, t, incidence))).ravel()
                          for t in ts], axis=1)
            out[s:s + len(ts)] = (L @ E).T.reshape(len(ts), P, 3)
    return out


def noise_cov_prediction(ctx, sigma, z, z2):
    """-sigma^2 / (4 k eps0) Im G(z, z')."""
    return -(sigma ** 2) / (4.0 * ctx.kappa * ctx.eps0) * im_dyadic_green(ctx, z, z2)


def mc_noise_covariance(scene: Scene, spec: MeasurementNoiseSpec, cfg: MCConfig, incidence=0):
    """Empirical covariance of U^noise for each probe pair, with predictions."""
    mesh = boundary_mesh(scene)
    pairs = cfg.probe_pairs or ((scene.inclusion.center, scene.inclusion.center),)
    pts, index = _unique_points(pairs)
    spec = replace(spec, seed=cfg.seed if spec.seed is None else spec.seed)
    U = noise_field_samples(mesh, scene.ctx, pts, spec, cfg.n_trials, incidence)
    results = []
    T = cfg.n_trials
    for (z, z2), (i, j) in zip(pairs, index):
        prod = U[:, i, :, None] * np.conj(U[:, j, None, :])          # (T, 3, 3)
        emp = prod.mean(axis=0)
        se = np.sqrt(np.mean(np.abs(prod - emp) ** 2, axis=0) / (T - 1))
        results.append(CovarianceResult(np.asarray(z, float), np.asarray(z2, float), emp, se,
                                        noise_cov_prediction(scene.ctx, spec.sigma, z, z2), prod))
    return results


def compare_modes(res_a, res_b):
    """Paired z-scores of the difference between two runs on common noise draws."""
    out = []
    for a, b in zip(res_a, res_b):
        d = a.samples - b.samples
        se = np.sqrt(np.mean(np.abs(d - d.mean(axis=0)) ** 2, axis=0) / (len(d) - 1))
        diff = a.empirical - b.empirical
        out.append(np.abs(diff) / np.where(se > 0, se, np.inf))
    return out


# ---------------------------------------------------------------------------
# measurement noise: SNR of the map at the inclusion

def td_noise_samples(scene: Scene, spec: MeasurementNoiseSpec, n_trials, z=None, data=None):
    """Multi-incidence TD at z over noisy trials, shape (T,)."""
    ctx = scene.ctx
    z = scene.inclusion.center if z is None else np.asarray(z, float)
    data = synthesize_filtered_data(scene) if data is None else data
    trial = scene.trial
    Us, cUs = backpropagate(data, z)                                 # (K, 3) each
    LU, Lc = noise_response(data.mesh, ctx, z, spec.filter_mode)
    LU = LU.reshape(3, 3 * data.mesh.n)
    Lc = Lc.reshape(3, 3 * data.mesh.n)
    K = data.n_incidences
    out = np.empty(n_trials)
    with threadpool_limits(limits=1, user_api="blas"):
        for t in range(n_trials):
            E = np.stack([np.conj(draw_noise(data.mesh, spec.sigma, noise_stream(spec, t, k))).ravel()
                          for k in range(K)], axis=1)                    # (3N, K)
            U = Us + (LU @ E).T
            cU = cUs + (Lc @ E).T
            td = td_from_fields(U[None], cU[None], data.theta, data.pol, z, trial, ctx.kappa)
            out[t] = td.sum() / data.n_directions
    return out


def snr(samples):
    sd = np.std(samples, ddof=1)
    if sd == 0:
        raise InvalidArgument("zero variance: SNR undefined")
    return float(np.mean(samples) / sd)


def mc_snr(scene: Scene, spec: MeasurementNoiseSpec, cfg: MCConfig, n_incidences=None):
    """Empirical SNR and its ratios under n -> 4n, rho -> 2 rho, sigma -> 2 sigma.

    rho and sigma variants reuse the noise draws of the base run (common random
    numbers), so their ratios carry little Monte Carlo error.
    """
    n = scene.incidences.n if n_incidences is None else int(n_incidences)
    base = replace(scene, incidences=IncidenceSet.fibonacci(n))
    spec = replace(spec, seed=cfg.seed)
    T = cfg.n_trials

    def run(sc, sp):
        return snr(td_noise_samples(sc, sp, T))

    s0 = run(base, spec)
    s_n = run(replace(base, incidences=IncidenceSet.fibonacci(4 * n)), spec)
    inc2 = replace(base.inclusion, scale=2.0 * base.inclusion.scale)
    s_rho = run(replace(base, inclusion=inc2), spec)
    s_sig = run(base, replace(spec, sigma=2.0 * spec.sigma))
    return {
        "n": n, "snr": s0, "snr_4n": s_n, "snr_2rho": s_rho, "snr_2sigma": s_sig,
        "ratio_4n": s_n / s0, "ratio_2rho": s_rho / s0, "ratio_2sigma": s_sig / s0,
    }


def td_cov_prediction(kind, z, z2, scene: Scene, n, sigma):
    """sigma^2 pi k^2 a^2 / (2 n eps0^2) * (Im G M_S : M_S Im G).

    For spheres this is sigma^2 atilde^2 k^2 (2n)^-1 ||Im G(z, z')||^2.
    """
    ctx = scene.ctx
    trial = scene.trial
    if kind == "permeable":
        a, M = trial.a_mu, trial.m_mu
    elif kind == "dielectric":
        a, M = trial.a_eps, trial.m_eps
    else:
        raise InvalidArgument("kind must be 'permeable' or 'dielectric'")
    im = im_dyadic_green(ctx, z, z2)
    return (sigma ** 2 * np.pi * ctx.kappa ** 2 * a ** 2 / (2.0 * n * ctx.eps0 ** 2)
            * contract(im @ M, M @ im))


# ---------------------------------------------------------------------------
# medium noise

SPECKLE_KERNELS = ("Qgamma", "QgammaTilde", "Qalpha", "QalphaTilde")
MEDIUM_KINDS = ("permeability", "permittivity")


@dataclass(frozen=True)
class MediumNoiseSpec:
    kind: str
    field: RandomFieldSpec
    support_radius: float
    taper_width: float
    n_radial: int = 16
    n_angular: int = 400
    n_realizations: int = 400
    center: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if self.kind not in MEDIUM_KINDS:
            raise InvalidArgument(f"medium noise kind must be one of {MEDIUM_KINDS}")
        if not 0 < self.taper_width <= self.support_radius:
            raise InvalidArgument("taper width must be in (0, support_radius]")
        if self.field.sigma > 0.2:
            warnings.warn("medium fluctuation sigma > 0.2: Born approximation is doubtful",
                          stacklevel=2)

    def mesh(self):
        return ball_mesh(self.support_radius, self.n_radial, self.n_angular, self.center)

    def taper(self, nodes):
        r = np.linalg.norm(nodes - np.asarray(self.center), axis=-1)
        s = np.clip((self.support_radius - r) / self.taper_width, 0.0, 1.0)
        return np.sin(0.5 * np.pi * s) ** 2


def speckle_kernel(kind, A, y, z, ctx):
    """Contraction kernels for the speckle covariance.

    Qgamma      = Im G(y,z) : A Im G(y,z)
    QgammaTilde = curl_z Im G(y,z) : A curl_z Im G(y,z)
    Qalpha      = curl_y Im G(y,z) A : curl_y Im G(y,z)
    QalphaTilde = Im G(y,z) A : Im G(y,z)
    """
    if kind not in SPECKLE_KERNELS:
        raise InvalidArgument(f"unknown speckle kernel {kind!r}")
    A = np.asarray(A, dtype=float)
    if not np.allclose(A, A.T):
        raise InvalidArgument("speckle kernel needs a symmetric A")
    if kind == "Qgamma":
        im = im_dyadic_green(ctx, y, z)
        return contract(im, A @ im)
    if kind == "QalphaTilde":
        im = im_dyadic_green(ctx, y, z)
        return contract(im @ A, im)
    if kind == "QgammaTilde":
        c = curl_im_dyadic_green(ctx, z, y)
        return contract(c, A @ c)
    c = curl_im_dyadic_green(ctx, y, z)
    return contract(c @ A, c)


def speckle_density(spec: MediumNoiseSpec, scene: Scene, y, z):
    """q(y, z) with TD_speckle(z) ~ -int fluct(y) q(y, z) dy.

    Coefficients are 4 pi a / eps0^2 with the trial tensors; for spheres they
    reduce to b_mu, b_eps.
    """
    ctx = scene.ctx
    t = scene.trial
    k2 = ctx.kappa ** 2
    cm = 4.0 * np.pi * t.a_mu / ctx.eps0 ** 2
    ce = 4.0 * np.pi * t.a_eps / ctx.eps0 ** 2
    q = 0.0
    if spec.kind == "permeability":
        if cm:
            q = q + k2 * cm * speckle_kernel("Qgamma", t.m_mu, y, z, ctx)
        if ce:
            q = q + ce * speckle_kernel("QgammaTilde", t.m_eps, y, z, ctx)
    else:
        if cm:
            q = q + cm * speckle_kernel("Qalpha", t.m_mu, y, z, ctx)
        if ce:
            q = q + k2 * ce * speckle_kernel("QalphaTilde", t.m_eps, y, z, ctx)
    return q if not np.isscalar(q) else np.zeros(np.shape(y)[:-1])


def born_speckle_backprop(spec: MediumNoiseSpec, values, z, theta, pol, ctx, mesh=None):
    """Back-propagated speckle fields (U, curl U) at z, shape (K, 3) each.

    values are the (tapered) fluctuation samples at the volume nodes.
    permeability:  U = -(k/eps0) int g Im G(y,z) conj(H0(y)),
                   curl U = -(k/eps0) int g curl_z Im G(y,z) conj(H0(y))
    permittivity:  U = -1/(eps0 k) int a curl_z Im G(z,y) conj(curl H0(y)),
                   curl U = -(k/eps0) int a Im G(y,z) conj(curl H0(y))
    """
    mesh = spec.mesh() if mesh is None else mesh
    y, w = mesh.nodes, mesh.weights * np.asarray(values)
    H0, cH0 = incident_field(theta, pol, ctx.kappa, y)               # (K, V, 3)
    im = im_dyadic_green(ctx, y, z)                                  # (V, 3, 3)
    cim = curl_im_dyadic_green(ctx, z, y)                            # curl_z Im G(z, y)
    k = ctx.kappa
    if spec.kind == "permeability":
        src = np.conj(H0)
        U = -(k / ctx.eps0) * np.einsum("v,vab,kvb->ka", w, im, src)
        cU = -(k / ctx.eps0) * np.einsum("v,vab,kvb->ka", w, cim, src)
    else:
        src = np.conj(cH0)
        U = -(1.0 / (ctx.eps0 * k)) * np.einsum("v,vab,kvb->ka", w, cim, src)
        cU = -(k / ctx.eps0) * np.einsum("v,vab,kvb->ka", w, im, src)
    return U, cU


def speckle_td_weights(spec: MediumNoiseSpec, scene: Scene, z, mesh=None, chunk=32):
    """Per-node weights k_i with TD_speckle(z) = sum_i fluct_i k_i.

    This is the full imaging pipeline (born back-propagation, then the
    multi-incidence TD) written out for a unit fluctuation at each node; the
    map is linear in the fluctuation, so a realization costs one dot product.
    """
    ctx = scene.ctx
    mesh = spec.mesh() if mesh is None else mesh
    z = np.asarray(z, dtype=float)
    theta, pol = scene.incidences.flat()
    trial = scene.trial
    k = ctx.kappa
    y = mesh.nodes
    Hz, cHz = incident_field(theta, pol, k, z)                       # (K, 3)
    Pm = Hz @ trial.m_mu.T                                           # M_S H0(z)
    Pe = cHz @ trial.m_eps.T
    im = im_dyadic_green(ctx, y, z)
    cim = curl_im_dyadic_green(ctx, z, y)
    Smu = np.zeros((len(y), 3, 3), dtype=complex)
    Seps = np.zeros((len(y), 3, 3), dtype=complex)
    for s in range(0, len(theta), chunk):
        H0, cH0 = incident_field(theta[s:s + chunk], pol[s:s + chunk], k, y)
        src = np.conj(H0) if spec.kind == "permeability" else np.conj(cH0)
        Smu += np.einsum("ka,kvb->vab", Pm[s:s + chunk], src)
        Seps += np.einsum("ka,kvb->vab", Pe[s:s + chunk], src)
    if spec.kind == "permeability":
        AU, AC = -(k / ctx.eps0) * im, -(k / ctx.eps0) * cim
    else:
        AU, AC = -(1.0 / (ctx.eps0 * k)) * cim, -(k / ctx.eps0) * im
    val = k ** 2 * trial.a_mu * contract(AU, Smu) + trial.a_eps * contract(AC, Seps)
    return -mesh.weights * np.real(val) / scene.incidences.n


def speckle_realizations(spec: MediumNoiseSpec, mesh, n=None, start=0):
    """Tapered fluctuation samples at the volume nodes, shape (R, V)."""
    n = spec.n_realizations if n is None else n
    taper = spec.taper(mesh.nodes)
    return np.stack([taper * draw_field_modes(spec.field, r)(mesh.nodes)
                     for r in range(start, start + n)])


def _nested_quadrature(mesh, taper, qa, qb, corr_len, chunk=512):
    y, w = mesh.nodes, mesh.weights
    fa = w * taper * qa
    fb = w * taper * qb
    total = 0.0
    for s in range(0, len(y), chunk):
        d2 = np.sum((y[s:s + chunk, None, :] - y[None, :, :]) ** 2, axis=-1)
        total += fa[s:s + chunk] @ (gaussian_correlation(1.0, corr_len, d2) @ fb)
    return float(total)


@dataclass
class SpeckleResult:
    prediction: float
    empirical: float
    stderr: float
    unit_prediction: float      # prediction at sigma = 1
    n_realizations: int


def speckle_prediction(spec: MediumNoiseSpec, scene: Scene, z, z2=None, mesh=None):
    """sigma^2 * int int C1(y, y') q(y, z) q(y', z') dy dy' (C1 at unit sigma)."""
    mesh = spec.mesh() if mesh is None else mesh
    z2 = z if z2 is None else z2
    taper = spec.taper(mesh.nodes)
    qa = speckle_density(spec, scene, mesh.nodes, np.asarray(z, float))
    qb = qa if z2 is z else speckle_density(spec, scene, mesh.nodes, np.asarray(z2, float))
    unit = _nested_quadrature(mesh, taper, qa, qb, spec.field.corr_len)
    return spec.field.sigma ** 2 * unit, unit


def speckle_covariance(kind, z, z2, scene: Scene, spec: MediumNoiseSpec):
    """Prediction and empirical covariance of the speckle part of the map."""
    if kind != spec.kind:
        spec = replace(spec, kind=kind)
    mesh = spec.mesh()
    pred, unit = speckle_prediction(spec, scene, z, z2, mesh)
    ka = speckle_td_weights(spec, scene, z, mesh)
    kb = ka if z2 is None or np.array_equal(z, z2) else speckle_td_weights(spec, scene, z2, mesh)
    R = spec.n_realizations
    ta = np.empty(R)
    tb = np.empty(R)
    for s in range(0, R, 50):
        F = speckle_realizations(spec, mesh, min(50, R - s), start=s)
        ta[s:s + len(F)] = F @ ka
        tb[s:s + len(F)] = F @ kb
    prod = (ta - ta.mean()) * (tb - tb.mean())
    emp = float(prod.sum() / (R - 1))
    se = float(np.std(prod, ddof=1) / np.sqrt(R))
    return SpeckleResult(pred, emp, se, unit, R)
