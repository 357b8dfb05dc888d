"""``@njit`` versions of the hot kernels in :mod:`._kernels_numpy`.

Loops visit window offsets in the same order as the numpy kernels. Per-pixel
work within a sweep is independent, so rows run under ``prange`` without
affecting the result.
"""
import warnings

import numba as nb
import numpy as np

from ._kernels_numpy import spatial_table

_opts = {"nogil": True, "cache": True}

# numba probes TBB first and warns when the installed one is too old; it
# then falls back to OpenMP or its own work queue, which is all we need.
warnings.filterwarnings("ignore", message="The TBB threading layer requires")

_DR = np.array([-1, 1, 0, 0], dtype=np.int64)
_DC = np.array([0, 0, -1, 1], dtype=np.int64)


@nb.njit(parallel=True, **_opts)
def _bilateral(values, mask, spatial, inv2sd, radius):
    h, w = values.shape
    out = np.full((h, w), np.nan)
    for r in nb.prange(h):
        for c in range(w):
            if not mask[r, c]:
                continue
            vi = values[r, c]
            num = 0.0
            den = 0.0
            for dr in range(-radius, radius + 1):
                rr = r + dr
                if rr < 0 or rr >= h:
                    continue
                for dc in range(-radius, radius + 1):
                    cc = c + dc
                    if cc < 0 or cc >= w or not mask[rr, cc]:
                        continue
                    vj = values[rr, cc]
                    diff = vi - vj
                    wgt = spatial[dr + radius, dc + radius] * np.exp(-(diff * diff) * inv2sd)
                    num -= wgt * diff
                    den += wgt
            out[r, c] = vi + num / den
    return out


def bilateral(values, mask, sigma_space, sigma_depth, radius):
    v = np.where(mask, values, 0.0)
    spatial = spatial_table(radius, sigma_space)
    return _bilateral(v, mask, spatial, 1.0 / (2.0 * sigma_depth * sigma_depth), radius)


@nb.njit(parallel=True, **_opts)
def _plane_fit(x, y, z, mask, radius, min_points, rank_tol):
    h, w = z.shape
    normals = np.full((h, w, 3), np.nan)
    ok = np.zeros((h, w), dtype=np.bool_)
    for r in nb.prange(h):
        m = np.empty((3, 3))
        rhs = np.empty(3)
        for c in range(w):
            if not mask[r, c]:
                continue
            n = sx = sy = sxx = sxy = syy = sz = sxz = syz = 0.0
            for dr in range(-radius, radius + 1):
                rr = r + dr
                for dc in range(-radius, radius + 1):
                    cc = c + dc
                    if rr < 0 or rr >= h or cc < 0 or cc >= w or not mask[rr, cc]:
                        continue
                    px = x[rr, cc] - x[r, c]
                    py = y[rr, cc] - y[r, c]
                    pz = z[rr, cc] - z[r, c]
                    n += 1.0
                    sx += px
                    sy += py
                    sxx += px * px
                    sxy += px * py
                    syy += py * py
                    sz += pz
                    sxz += px * pz
                    syz += py * pz
            if n < min_points:
                continue
            m[0, 0] = sxx
            m[0, 1] = sxy
            m[1, 0] = sxy
            m[0, 2] = sx
            m[2, 0] = sx
            m[1, 1] = syy
            m[1, 2] = sy
            m[2, 1] = sy
            m[2, 2] = n
            eig = np.linalg.eigvalsh(m)
            if eig[0] < rank_tol * eig[2]:
                continue
            rhs[0] = sxz
            rhs[1] = syz
            rhs[2] = sz
            sol = np.linalg.solve(m, rhs)
            a = sol[0]
            b = sol[1]
            norm = np.sqrt(a * a + b * b + 1.0)
            normals[r, c, 0] = a / norm
            normals[r, c, 1] = b / norm
            normals[r, c, 2] = -1.0 / norm
            ok[r, c] = True
    return normals, ok


def plane_fit(x, y, z, mask, radius, min_points, rank_tol):
    return _plane_fit(
        np.where(mask, x, 0.0), np.where(mask, y, 0.0), np.where(mask, z, 0.0),
        mask, radius, float(min_points), rank_tol)


@nb.njit(parallel=True, **_opts)
def _fusion_sweep(z, z0, x, y, normals, domain, lam, nz_eps):
    h, w = z.shape
    out = np.full((h, w), np.nan)
    for r in nb.prange(h):
        for c in range(w):
            if not domain[r, c]:
                continue
            nix = normals[r, c, 0]
            niy = normals[r, c, 1]
            niz = normals[r, c, 2]
            acc = 0.0
            cnt = 0.0
            for k in range(4):
                rr = r + _DR[k]
                cc = c + _DC[k]
                if rr < 0 or rr >= h or cc < 0 or cc >= w or not domain[rr, cc]:
                    continue
                zj = z[rr, cc]
                dx = x[rr, cc] - x[r, c]
                dy = y[rr, cc] - y[r, c]
                njz = normals[rr, cc, 2]
                if abs(njz) >= nz_eps:
                    acc += (normals[rr, cc, 0] * dx + normals[rr, cc, 1] * dy + njz * zj) / njz
                    cnt += 1.0
                if abs(niz) >= nz_eps:
                    acc += (nix * dx + niy * dy + niz * zj) / niz
                    cnt += 1.0
            mean = acc / cnt if cnt > 0 else z[r, c]
            out[r, c] = lam * z0[r, c] + (1.0 - lam) * mean
    return out


def fusion_sweep(z, z0, x, y, normals, domain, lam, nz_eps):
    return _fusion_sweep(
        np.where(domain, z, 0.0), np.where(domain, z0, 0.0),
        np.where(domain, x, 0.0), np.where(domain, y, 0.0),
        np.where(domain[..., None], normals, 0.0), domain, float(lam), float(nz_eps))
