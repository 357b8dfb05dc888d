"""Pure-numpy reference kernels.

Each kernel vectorises over pixels and loops over stencil offsets in the
same order as the per-pixel loops in :mod:`._kernels_numba`, so the two
backends accumulate their sums identically.
"""
import numpy as np

from .core import NEIGHBOR_OFFSETS


def _shift(a, dr, dc, fill):
    """``out[r, c] = a[r + dr, c + dc]``, ``fill`` outside the raster."""
    h, w = a.shape[:2]
    out = np.full_like(a, fill)
    r0, r1 = max(0, -dr), min(h, h - dr)
    c0, c1 = max(0, -dc), min(w, w - dc)
    if r0 < r1 and c0 < c1:
        out[r0:r1, c0:c1] = a[r0 + dr:r1 + dr, c0 + dc:c1 + dc]
    return out


def spatial_table(radius, sigma_space):
    d = np.arange(-radius, radius + 1, dtype=np.float64)
    return np.exp(-(d[:, None] ** 2 + d[None, :] ** 2) / (2.0 * sigma_space * sigma_space))


def bilateral(values, mask, sigma_space, sigma_depth, radius):
    h, w = values.shape
    v = np.where(mask, values, 0.0)
    spatial = spatial_table(radius, sigma_space)
    inv2sd = 1.0 / (2.0 * sigma_depth * sigma_depth)
    num = np.zeros((h, w))
    den = np.zeros((h, w))
    for dr in range(-radius, radius + 1):
        if abs(dr) >= h:
            continue
        for dc in range(-radius, radius + 1):
            if abs(dc) >= w:
                continue
            vj = _shift(v, dr, dc, 0.0)
            mj = _shift(mask, dr, dc, False) & mask
            diff = v - vj
            wgt = spatial[dr + radius, dc + radius] * np.exp(-(diff * diff) * inv2sd)
            wgt = np.where(mj, wgt, 0.0)
            num -= wgt * diff
            den += wgt
    # averaging offsets from the centre keeps constant regions bit-exact
    out = np.full((h, w), np.nan)
    out[mask] = v[mask] + num[mask] / den[mask]
    return out


def plane_fit(x, y, z, mask, radius, min_points, rank_tol):
    """Per-pixel least-squares fit of ``z = a*x + b*y + c`` over a window.

    Coordinates are taken relative to the centre pixel, which leaves the
    slopes unchanged and keeps the normal equations well scaled.
    """
    h, w = z.shape
    xv = np.where(mask, x, 0.0)
    yv = np.where(mask, y, 0.0)
    zv = np.where(mask, z, 0.0)
    sums = np.zeros((9, h, w))  # n, sx, sy, sxx, sxy, syy, sz, sxz, syz
    for dr in range(-radius, radius + 1):
        for dc in range(-radius, radius + 1):
            mj = _shift(mask, dr, dc, False) & mask
            px = np.where(mj, _shift(xv, dr, dc, 0.0) - xv, 0.0)
            py = np.where(mj, _shift(yv, dr, dc, 0.0) - yv, 0.0)
            pz = np.where(mj, _shift(zv, dr, dc, 0.0) - zv, 0.0)
            sums[0] += mj
            sums[1] += px
            sums[2] += py
            sums[3] += px * px
            sums[4] += px * py
            sums[5] += py * py
            sums[6] += pz
            sums[7] += px * pz
            sums[8] += py * pz
    n, sx, sy, sxx, sxy, syy, sz, sxz, syz = sums
    normals = np.full((h, w, 3), np.nan)
    ok = mask & (n >= min_points)
    idx = np.nonzero(ok)
    if idx[0].size == 0:
        return normals, ok
    m = np.empty((idx[0].size, 3, 3))
    m[:, 0, 0] = sxx[idx]
    m[:, 0, 1] = m[:, 1, 0] = sxy[idx]
    m[:, 0, 2] = m[:, 2, 0] = sx[idx]
    m[:, 1, 1] = syy[idx]
    m[:, 1, 2] = m[:, 2, 1] = sy[idx]
    m[:, 2, 2] = n[idx]
    rhs = np.stack([sxz[idx], syz[idx], sz[idx]], axis=1)
    eig = np.linalg.eigvalsh(m)
    good = eig[:, 0] >= rank_tol * eig[:, 2]
    sol = np.zeros_like(rhs)
    if good.any():
        sol[good] = np.linalg.solve(m[good], rhs[good][..., None])[..., 0]
    vec = np.stack([sol[:, 0], sol[:, 1], -np.ones(len(sol))], axis=1)
    vec /= np.sqrt(vec[:, 0] ** 2 + vec[:, 1] ** 2 + vec[:, 2] ** 2)[:, None]
    vec[~good] = np.nan
    normals[idx] = vec
    ok[idx] = good
    return normals, ok


def fusion_sweep(z, z0, x, y, normals, domain, lam, nz_eps):
    """One Jacobi sweep of the depth-normal update; reads ``z``, returns new depths."""
    h, w = z.shape
    zf = np.where(domain, z, 0.0)
    xf = np.where(domain, x, 0.0)
    yf = np.where(domain, y, 0.0)
    nf = np.where(domain[..., None], normals, 0.0)
    nix, niy, niz = nf[..., 0], nf[..., 1], nf[..., 2]
    acc = np.zeros((h, w))
    cnt = np.zeros((h, w))
    for dr, dc in NEIGHBOR_OFFSETS:
        valid = _shift(domain, dr, dc, False) & domain
        zj = _shift(zf, dr, dc, 0.0)
        dx = _shift(xf, dr, dc, 0.0) - xf
        dy = _shift(yf, dr, dc, 0.0) - yf
        njx = _shift(nix, dr, dc, 0.0)
        njy = _shift(niy, dr, dc, 0.0)
        njz = _shift(niz, dr, dc, 1.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            # depth of i that puts edge ij in the tangent plane of j
            use_j = valid & (np.abs(njz) >= nz_eps)
            zij = (njx * dx + njy * dy + njz * zj) / njz
            acc += np.where(use_j, zij, 0.0)
            cnt += use_j
            # depth of i that puts edge ij in the tangent plane of i
            use_i = valid & (np.abs(niz) >= nz_eps)
            zji = (nix * dx + niy * dy + niz * zj) / niz
            acc += np.where(use_i, zji, 0.0)
            cnt += use_i
    with np.errstate(divide="ignore", invalid="ignore"):
        mean = np.where(cnt > 0, acc / cnt, zf)
    out = np.full((h, w), np.nan)
    out[domain] = lam * z0[domain] + (1.0 - lam) * mean[domain]
    return out
