"""Hot loops, in a numba flavour and a plain numpy flavour.

The public names at the bottom pick numba when it is importable and not
disabled through TDIMAGING_NO_NUMBA. Both flavours reduce in the same fixed
order, so results do not depend on the thread count.
"""
import numpy as np

from ._accel import HAVE_NUMBA, njit, numba

HK_BLOCK = 4096
_INV4PI = 1.0 / (4.0 * np.pi)


# ---------------------------------------------------------------------------
# numpy flavour

def _gamma_np(d, kappa, eps0):
    r = np.sqrt(np.sum(d * d, axis=-1))
    kr = kappa * r
    g = np.exp(1j * kr) * _INV4PI / r
    a = 1.0 + 1j / kr - 1.0 / kr ** 2
    b = 1.0 + 3j / kr - 3.0 / kr ** 2
    rh = d / r[..., None]
    G = -eps0 * g[..., None, None] * (
        a[..., None, None] * np.eye(3) - b[..., None, None] * rh[..., :, None] * rh[..., None, :])
    return G, g, r, rh


def _crossmat_np(v):
    out = np.zeros(v.shape[:-1] + (3, 3), dtype=v.dtype)
    out[..., 0, 1] = -v[..., 2]
    out[..., 0, 2] = v[..., 1]
    out[..., 1, 0] = v[..., 2]
    out[..., 1, 2] = -v[..., 0]
    out[..., 2, 0] = -v[..., 1]
    out[..., 2, 1] = v[..., 0]
    return out


def green_block_numpy(Z, Y, kappa, eps0, curl):
    d = Z[:, None, :] - Y[None, :, :]
    C = np.zeros((0, 0, 3, 3), dtype=np.complex128)
    with np.errstate(divide="ignore", invalid="ignore"):
        # coincident pairs turn into nan here; the caller raises on rmin
        G, g, r, rh = _gamma_np(d, kappa, eps0)
        if curl:
            grad = (g * (1j * kappa - 1.0 / r))[..., None] * rh
            C = -eps0 * _crossmat_np(grad)
    rmin = float(r.min()) if r.size else np.inf
    return G, C, rmin


def hk_partials_numpy(nodes, normals, w, x, y, kappa, eps0, code):
    n = len(nodes)
    nb = (n + HK_BLOCK - 1) // HK_BLOCK
    out = np.zeros((nb, 3, 3), dtype=np.complex128)
    for b in range(nb):
        s = nodes[b * HK_BLOCK:(b + 1) * HK_BLOCK]
        nu = normals[b * HK_BLOCK:(b + 1) * HK_BLOCK]
        if code == 2:
            # curl in the integration variable, -eps0 [grad_s g(s, .)]_x
            A = _curl_np(s - x, kappa, eps0)
            B = _curl_np(s - y, kappa, eps0)
        else:
            A = _gamma_np(s - x, kappa, eps0)[0]
            B = _gamma_np(s - y, kappa, eps0)[0]
        if code == 0:
            M = np.einsum("nji,njk->ik", A.conj(), B)
        else:
            P = np.eye(3) - nu[:, :, None] * nu[:, None, :]
            M = np.einsum("nji,njl,nlk->ik", A.conj(), P, B)
        out[b] = w * M
    return out


def _curl_np(d, kappa, eps0):
    r = np.sqrt(np.sum(d * d, axis=-1))
    g = np.exp(1j * kappa * r) * _INV4PI / r
    grad = (g * (1j * kappa - 1.0 / r))[..., None] * (d / r[..., None])
    return -eps0 * _crossmat_np(grad)


def offdiag_apply_numpy(X, V, kappa, eps0):
    """out_k = sum_{i != k} G(x_k, x_i) V_i for V of shape (N, 3, m)."""
    n = len(X)
    out = np.zeros(V.shape, dtype=np.complex128)
    step = 256
    for s in range(0, n, step):
        d = X[s:s + step, None, :] - X[None, :, :]
        idx = np.arange(s, min(s + step, n))
        d[idx - s, idx] = 1.0  # placeholder, zeroed below
        G = _gamma_np(d, kappa, eps0)[0]
        G[idx - s, idx] = 0.0
        out[s:s + step] = np.einsum("kiab,ibm->kam", G, V)
    return out


# ---------------------------------------------------------------------------
# numba flavour

if HAVE_NUMBA:
    prange = numba.prange

    @njit(inline="always")
    def _gamma_entries(dx, dy, dz, kappa, eps0, out):
        r = np.sqrt(dx * dx + dy * dy + dz * dz)
        kr = kappa * r
        g = np.exp(1j * kr) * _INV4PI / r
        a = 1.0 + 1j / kr - 1.0 / (kr * kr)
        b = 1.0 + 3j / kr - 3.0 / (kr * kr)
        rh0 = dx / r
        rh1 = dy / r
        rh2 = dz / r
        c = -eps0 * g
        out[0, 0] = c * (a - b * rh0 * rh0)
        out[1, 1] = c * (a - b * rh1 * rh1)
        out[2, 2] = c * (a - b * rh2 * rh2)
        out[0, 1] = -c * b * rh0 * rh1
        out[1, 0] = out[0, 1]
        out[0, 2] = -c * b * rh0 * rh2
        out[2, 0] = out[0, 2]
        out[1, 2] = -c * b * rh1 * rh2
        out[2, 1] = out[1, 2]
        return r

    @njit(inline="always")
    def _curl_entries(dx, dy, dz, kappa, eps0, out):
        r = np.sqrt(dx * dx + dy * dy + dz * dz)
        g = np.exp(1j * kappa * r) * _INV4PI / r
        f = -eps0 * g * (1j * kappa - 1.0 / r) / r
        gx = f * dx
        gy = f * dy
        gz = f * dz
        out[0, 0] = 0.0
        out[1, 1] = 0.0
        out[2, 2] = 0.0
        out[0, 1] = -gz
        out[0, 2] = gy
        out[1, 0] = gz
        out[1, 2] = -gx
        out[2, 0] = -gy
        out[2, 1] = gx
        return r

    @njit(parallel=True)
    def green_block_numba(Z, Y, kappa, eps0, curl):
        M = Z.shape[0]
        N = Y.shape[0]
        G = np.empty((M, N, 3, 3), dtype=np.complex128)
        if curl:
            C = np.empty((M, N, 3, 3), dtype=np.complex128)
        else:
            C = np.empty((0, 0, 3, 3), dtype=np.complex128)
        rmins = np.full(M, np.inf)
        for m in prange(M):
            rm = np.inf
            for n in range(N):
                dx = Z[m, 0] - Y[n, 0]
                dy = Z[m, 1] - Y[n, 1]
                dz = Z[m, 2] - Y[n, 2]
                r = np.sqrt(dx * dx + dy * dy + dz * dz)
                if r < rm:
                    rm = r
                if r == 0.0:
                    # the caller raises on rmin; avoid dividing by zero in here
                    G[m, n, :, :] = np.nan
                    if curl:
                        C[m, n, :, :] = np.nan
                    continue
                _gamma_entries(dx, dy, dz, kappa, eps0, G[m, n])
                if curl:
                    _curl_entries(dx, dy, dz, kappa, eps0, C[m, n])
            rmins[m] = rm
        rmin = np.inf
        for m in range(M):
            if rmins[m] < rmin:
                rmin = rmins[m]
        return G, C, rmin

    @njit(parallel=True)
    def hk_partials_numba(nodes, normals, w, x, y, kappa, eps0, code):
        n = nodes.shape[0]
        nb = (n + HK_BLOCK - 1) // HK_BLOCK
        out = np.zeros((nb, 3, 3), dtype=np.complex128)
        for b in prange(nb):
            A = np.empty((3, 3), dtype=np.complex128)
            B = np.empty((3, 3), dtype=np.complex128)
            PB = np.empty((3, 3), dtype=np.complex128)
            acc = np.zeros((3, 3), dtype=np.complex128)
            for s in range(b * HK_BLOCK, min(n, (b + 1) * HK_BLOCK)):
                if code == 2:
                    _curl_entries(nodes[s, 0] - x[0], nodes[s, 1] - x[1], nodes[s, 2] - x[2],
                                  kappa, eps0, A)
                    _curl_entries(nodes[s, 0] - y[0], nodes[s, 1] - y[1], nodes[s, 2] - y[2],
                                  kappa, eps0, B)
                else:
                    _gamma_entries(nodes[s, 0] - x[0], nodes[s, 1] - x[1], nodes[s, 2] - x[2],
                                   kappa, eps0, A)
                    _gamma_entries(nodes[s, 0] - y[0], nodes[s, 1] - y[1], nodes[s, 2] - y[2],
                                   kappa, eps0, B)
                if code == 0:
                    for i in range(3):
                        for k in range(3):
                            PB[i, k] = B[i, k]
                else:
                    # (I - nu nu^T) B
                    for k in range(3):
                        dot = normals[s, 0] * B[0, k] + normals[s, 1] * B[1, k] + normals[s, 2] * B[2, k]
                        for i in range(3):
                            PB[i, k] = B[i, k] - normals[s, i] * dot
                for i in range(3):
                    for k in range(3):
                        acc[i, k] += (np.conj(A[0, i]) * PB[0, k] + np.conj(A[1, i]) * PB[1, k]
                                      + np.conj(A[2, i]) * PB[2, k])
            for i in range(3):
                for k in range(3):
                    out[b, i, k] = w * acc[i, k]
        return out

    @njit(parallel=True)
    def offdiag_apply_numba(X, V, kappa, eps0):
        n = X.shape[0]
        m = V.shape[2]
        out = np.zeros(V.shape, dtype=np.complex128)
        for k in prange(n):
            G = np.empty((3, 3), dtype=np.complex128)
            for i in range(n):
                if i == k:
                    continue
                _gamma_entries(X[k, 0] - X[i, 0], X[k, 1] - X[i, 1], X[k, 2] - X[i, 2],
                               kappa, eps0, G)
                for a in range(3):
                    for c in range(m):
                        out[k, a, c] += G[a, 0] * V[i, 0, c] + G[a, 1] * V[i, 1, c] + G[a, 2] * V[i, 2, c]
        return out

    green_block = green_block_numba
    hk_partials = hk_partials_numba
    offdiag_apply = offdiag_apply_numba
else:
    green_block = green_block_numpy
    hk_partials = hk_partials_numpy
    offdiag_apply = offdiag_apply_numpy
