"""numba kernels for the hypothesise-and-verify loop."""
import math

import numpy as np
from numba import njit

from .. import rng as _rng

_GOLDEN = np.uint64(_rng.GOLDEN)
_MUL1 = np.uint64(_rng.MUL1)
_MUL2 = np.uint64(_rng.MUL2)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S32 = np.uint64(32)

STATUS_OK = 0
STATUS_DEGENERATE = 1
STATUS_FILTERED = 2


@njit(cache=True, nogil=True)
def mix64(x):
    z = x + _GOLDEN
    z = (z ^ (z >> _S30)) * _MUL1
    z = (z ^ (z >> _S27)) * _MUL2
    return z ^ (z >> _S31)


@njit(cache=True, nogil=True)
def sample_into(out, key, it, cutoffs):
    stream = mix64(key ^ np.uint64(it))
    counter = np.uint64(0)
    for j in range(cutoffs.size):
        n = np.uint64(cutoffs[j])
        while True:
            word = mix64(stream ^ counter)
            counter += np.uint64(1)
            idx = np.int64(((word >> _S32) * n) >> _S32)
            dup = False
            for q in range(j):
                if out[q] == idx:
                    dup = True
                    break
            if not dup:
                break
        out[j] = idx


@njit(cache=True, nogil=True)
def sample_batch(key, iterations, cutoffs):
    out = np.empty((iterations.size, cutoffs.size), dtype=np.int64)
    for b in range(iterations.size):
        sample_into(out[b], key, iterations[b], cutoffs)
    return out


@njit(cache=True, nogil=True)
def _sq(P, a, b):
    dx = P[a, 0] - P[b, 0]
    dy = P[a, 1] - P[b, 1]
    dz = P[a, 2] - P[b, 2]
    return dx * dx + dy * dy + dz * dz


@njit(cache=True, nogil=True)
def gdc_pass(P1, P2, G2, valid, idx, mode, tau):
    s = idx.size
    for j in range(s):
        if not valid[idx[j]]:
            return False
    if mode == 0:
        for a in range(s):
            for b in range(a + 1, s):
                d1 = _sq(P1, idx[a], idx[b])
                d2 = _sq(P2, idx[a], idx[b])
                if abs(d1 - d2) > tau * max(1.0, d1):
                    return False
        return True
    r = idx[0]
    rho0 = P2[r, 2]
    xi0 = P2[r, 0] / rho0
    eta0 = P2[r, 1] / rho0
    for j in range(1, s):
        k = idx[j]
        gxi = G2[k, 0]
        geta = G2[k, 1]
        if not (math.isfinite(gxi) and math.isfinite(geta)):
            continue
        rho = P2[k, 2]
        xi = P2[k, 0] / rho
        eta = P2[k, 1] / rho
        c = rho * (xi * xi + eta * eta + 1.0) - rho0 * (xi0 * xi + eta0 * eta + 1.0)
        gx = 2.0 * c * gxi + 2.0 * rho * (rho * xi - rho0 * xi0)
        gy = 2.0 * c * geta + 2.0 * rho * (rho * eta - rho0 * eta0)
        norm = math.sqrt(gx * gx + gy * gy)
        if norm < 1e-9:
            continue
        phi = _sq(P1, k, r)
        phi_bar = _sq(P2, k, r)
        if abs(phi - phi_bar) / norm > tau:
            return False
    return True


@njit(cache=True, nogil=True)
def degenerate(P1, idx, eps):
    s = idx.size
    dmin = np.inf
    dmax = 0.0
    for a in range(s):
        for b in range(a + 1, s):
            d = math.sqrt(_sq(P1, idx[a], idx[b]))
            dmin = min(dmin, d)
            dmax = max(dmax, d)
    if not dmin > eps:
        return True
    if s == 3:
        i0, i1, i2 = idx[0], idx[1], idx[2]
        ux = P1[i1, 0] - P1[i0, 0]
        uy = P1[i1, 1] - P1[i0, 1]
        uz = P1[i1, 2] - P1[i0, 2]
        vx = P1[i2, 0] - P1[i0, 0]
        vy = P1[i2, 1] - P1[i0, 1]
        vz = P1[i2, 2] - P1[i0, 2]
        cx = uy * vz - uz * vy
        cy = uz * vx - ux * vz
        cz = ux * vy - uy * vx
        height = math.sqrt(cx * cx + cy * cy + cz * cz) / dmax
        return not height > eps
    A = np.empty((s, 3))
    for j in range(s):
        for c in range(3):
            A[j, c] = P1[idx[j], c]
    for c in range(3):
        m = A[:, c].mean()
        A[:, c] -= m
    sv = np.linalg.svd(A)[1]
    return not sv[1] > eps


@njit(cache=True, nogil=True)
def fit(P1, P2, idx, R, T):
    s = idx.size
    ca = np.zeros(3)
    cb = np.zeros(3)
    for j in range(s):
        for c in range(3):
            ca[c] += P1[idx[j], c]
            cb[c] += P2[idx[j], c]
    ca /= s
    cb /= s
    H = np.zeros((3, 3))
    for j in range(s):
        for a in range(3):
            for b in range(3):
                H[a, b] += (P1[idx[j], a] - ca[a]) * (P2[idx[j], b] - cb[b])
    U, _, Vt = np.linalg.svd(H)
    V = Vt.T
    D = np.eye(3)
    if np.linalg.det(V @ U.T) < 0:
        D[2, 2] = -1.0
    Rn = V @ D @ U.T
    for a in range(3):
        for b in range(3):
            R[a, b] = Rn[a, b]
        T[a] = cb[a] - (Rn[a, 0] * ca[0] + Rn[a, 1] * ca[1] + Rn[a, 2] * ca[2])


@njit(cache=True, nogil=True)
def score(P1, P2, valid, R, T, tau, cut_a, cut_b, cut_c, out_counts):
    """Inlier count, residual sum and prefix counts for cutoffs (a, b, c)."""
    n = P1.shape[0]
    count = 0
    ca = 0
    cbb = 0
    cc = 0
    total = 0.0
    for k in range(n):
        if not valid[k]:
            continue
        x = P1[k, 0]
        y = P1[k, 1]
        z = P1[k, 2]
        rx = R[0, 0] * x + R[0, 1] * y + R[0, 2] * z + T[0] - P2[k, 0]
        ry = R[1, 0] * x + R[1, 1] * y + R[1, 2] * z + T[1] - P2[k, 1]
        rz = R[2, 0] * x + R[2, 1] * y + R[2, 2] * z + T[2] - P2[k, 2]
        r = math.sqrt(rx * rx + ry * ry + rz * rz)
        if r < tau:
            count += 1
            total += r
            if k < cut_a:
                ca += 1
            if k < cut_b:
                cbb += 1
            if k < cut_c:
                cc += 1
    out_counts[0] = ca
    out_counts[1] = cbb
    out_counts[2] = cc
    return count, total


@njit(cache=True, nogil=True)
def adaptive_bound(p, inl, cuts, s, nesting):
    """Closed-form bound from one hypothesis' prefix inlier counts; inf if undefined."""
    w = 1.0
    for j in range(s):
        if j < nesting:
            w *= inl[j] / cuts[j]
        else:
            w *= inl[2] / cuts[2]
    if w >= 1.0:
        return 1.0
    if w <= 0.0:
        return np.inf
    return max(1.0, math.ceil(math.log(1.0 - p) / math.log1p(-w)))


@njit(cache=True, nogil=True)
def run(P1, P2, G2, valid, key, cutoffs, M1, M2, M, nesting, use_filter, mode,
        tau_gdc, tau_inlier, p, max_iter, start_bound, adaptive, eps):
    s = cutoffs.size
    idx = np.empty(s, dtype=np.int64)
    R = np.eye(3)
    T = np.zeros(3)
    bestR = np.eye(3)
    bestT = np.zeros(3)
    inl = np.zeros(3, dtype=np.int64)
    cuts = np.array([M1, M2, M], dtype=np.float64)
    best_count = -1
    best_total = np.inf
    best_iter = -1
    passed = 0
    evaluated = 0
    limit = min(float(max_iter), start_bound)
    bound = start_bound
    it = 0
    while it < limit:
        sample_into(idx, key, it, cutoffs)
        ok = True
        if use_filter:
            ok = gdc_pass(P1, P2, G2, valid, idx, mode, tau_gdc)
        if ok:
            passed += 1
            bad = False
            for j in range(s):
                if not valid[idx[j]]:
                    bad = True
            if not bad:
                bad = degenerate(P1, idx, eps)
            if not bad:
                evaluated += 1
                fit(P1, P2, idx, R, T)
                count, total = score(P1, P2, valid, R, T, tau_inlier, M1, M2, M, inl)
                better = count > best_count
                if better or (count == best_count and total < best_total):
                    bestR[:, :] = R
                    bestT[:] = T
                    best_total = total
                    best_iter = it
                    best_count = count
                    if better and adaptive:
                        nb = adaptive_bound(p, inl, cuts, s, nesting)
                        if nb < bound:
                            bound = nb
                            limit = min(float(max_iter), bound)
        it += 1
    return bestR, bestT, best_count, best_total, best_iter, it, passed, evaluated, bound


@njit(cache=True, nogil=True)
def inlier_mask(P1, P2, valid, R, T, tau):
    n = P1.shape[0]
    mask = np.zeros(n, dtype=np.bool_)
    for k in range(n):
        if not valid[k]:
            continue
        x = P1[k, 0]
        y = P1[k, 1]
        z = P1[k, 2]
        rx = R[0, 0] * x + R[0, 1] * y + R[0, 2] * z + T[0] - P2[k, 0]
        ry = R[1, 0] * x + R[1, 1] * y + R[1, 2] * z + T[1] - P2[k, 1]
        rz = R[2, 0] * x + R[2, 1] * y + R[2, 2] * z + T[2] - P2[k, 2]
        mask[k] = math.sqrt(rx * rx + ry * ry + rz * rz) < tau
    return mask
