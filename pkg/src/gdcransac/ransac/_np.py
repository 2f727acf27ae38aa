"""Vectorised numpy fallback for the hypothesise-and-verify loop.

Hypotheses are generated and scored in chunks; a sequential scan over each
chunk then applies the adaptive stopping rule, so counters and the selected
hypothesis match the numba kernel iteration for iteration.
"""
import math

import numpy as np

from .. import rng as _rng

CHUNK = 512


def sample_batch(seed, iterations, cutoffs):
    return _rng.draw_indices_np(seed, iterations, cutoffs)


def _pair_sq(P, idx, a, b):
    d = P[idx[:, a]] - P[idx[:, b]]
    return d[:, 0] * d[:, 0] + d[:, 1] * d[:, 1] + d[:, 2] * d[:, 2]


def gdc_pass(P1, P2, G2, valid, idx, mode, tau):
    s = idx.shape[1]
    ok = valid[idx].all(axis=1)
    if mode == 0:
        for a in range(s):
            for b in range(a + 1, s):
                d1 = _pair_sq(P1, idx, a, b)
                d2 = _pair_sq(P2, idx, a, b)
                with np.errstate(invalid="ignore"):
                    ok &= ~(np.abs(d1 - d2) > tau * np.maximum(1.0, d1))
        return ok
    r = idx[:, 0]
    rho0 = P2[r, 2]
    with np.errstate(invalid="ignore", divide="ignore"):
        xi0 = P2[r, 0] / rho0
        eta0 = P2[r, 1] / rho0
        for j in range(1, s):
            k = idx[:, j]
            gxi = G2[k, 0]
            geta = G2[k, 1]
            rho = P2[k, 2]
            xi = P2[k, 0] / rho
            eta = P2[k, 1] / rho
            c = rho * (xi * xi + eta * eta + 1.0) - rho0 * (xi0 * xi + eta0 * eta + 1.0)
            gx = 2.0 * c * gxi + 2.0 * rho * (rho * xi - rho0 * xi0)
            gy = 2.0 * c * geta + 2.0 * rho * (rho * eta - rho0 * eta0)
            norm = np.sqrt(gx * gx + gy * gy)
            phi = _pair_sq(P1, idx, j, 0)
            phi_bar = _pair_sq(P2, idx, j, 0)
            checkable = np.isfinite(gxi) & np.isfinite(geta) & (norm >= 1e-9)
            ok &= ~(checkable & (np.abs(phi - phi_bar) / norm > tau))
    return ok


def degenerate(P1, idx, eps):
    s = idx.shape[1]
    pts = P1[idx]
    diffs = pts[:, :, None, :] - pts[:, None, :, :]
    with np.errstate(invalid="ignore"):
        dist = np.sqrt((diffs ** 2).sum(-1))
    iu = np.triu_indices(s, 1)
    pair = dist[:, iu[0], iu[1]]
    dmin = pair.min(axis=1)
    dmax = pair.max(axis=1)
    if s == 3:
        cr = np.cross(pts[:, 1] - pts[:, 0], pts[:, 2] - pts[:, 0])
        with np.errstate(invalid="ignore", divide="ignore"):
            height = np.sqrt((cr ** 2).sum(-1)) / dmax
    else:
        centred = pts - pts.mean(axis=1, keepdims=True)
        finite = np.isfinite(centred).all(axis=(1, 2))
        height = np.full(len(pts), np.nan)
        if finite.any():
            height[finite] = np.linalg.svd(centred[finite], compute_uv=False)[:, 1]
    return ~(dmin > eps) | ~(height > eps)


def fit(P1, P2, idx):
    A = P1[idx]
    B = P2[idx]
    ca = A.mean(axis=1)
    cb = B.mean(axis=1)
    H = np.einsum("eja,ejb->eab", A - ca[:, None], B - cb[:, None])
    U, _, Vt = np.linalg.svd(H)
    V = np.swapaxes(Vt, 1, 2)
    Ut = np.swapaxes(U, 1, 2)
    d = np.where(np.linalg.det(V @ Ut) < 0, -1.0, 1.0)
    D = np.tile(np.eye(3), (len(idx), 1, 1))
    D[:, 2, 2] = d
    R = V @ D @ Ut
    T = cb - np.einsum("eab,eb->ea", R, ca)
    return R, T


def residual_norms(P1, P2, R, T):
    """(E, n) residual norms, same operation order as the numba kernel."""
    x, y, z = P1[:, 0], P1[:, 1], P1[:, 2]
    out = []
    for a in range(3):
        out.append(R[:, a, 0, None] * x + R[:, a, 1, None] * y + R[:, a, 2, None] * z
                   + T[:, a, None] - P2[None, :, a])
    rx, ry, rz = out
    return np.sqrt(rx * rx + ry * ry + rz * rz)


def score(P1, P2, valid, R, T, tau, cuts):
    count = np.zeros(len(R), dtype=np.int64)
    total = np.zeros(len(R))
    prefix = np.zeros((len(R), 3), dtype=np.int64)
    n = len(P1)
    step = max(1, 2_000_000 // max(n, 1))
    for lo in range(0, len(R), step):
        res = residual_norms(P1, P2, R[lo:lo + step], T[lo:lo + step])
        with np.errstate(invalid="ignore"):
            inl = (res < tau) & valid[None, :]
        count[lo:lo + step] = inl.sum(axis=1)
        total[lo:lo + step] = _ordered_sum(res, inl)
        for c in range(3):
            prefix[lo:lo + step, c] = inl[:, :cuts[c]].sum(axis=1)
    return count, total, prefix


def _ordered_sum(res, inl):
    # Left-to-right accumulation to match the scalar kernel bit for bit.
    acc = np.zeros(res.shape[0])
    for k in range(res.shape[1]):
        col = inl[:, k]
        acc[col] += res[col, k]
    return acc


def adaptive_bound(p, inl, cuts, s, nesting):
    w = 1.0
    for j in range(s):
        c = j if j < nesting else 2
        w *= inl[c] / cuts[c]
    if w >= 1.0:
        return 1.0
    if w <= 0.0:
        return math.inf
    return max(1.0, float(math.ceil(math.log(1.0 - p) / math.log1p(-w))))


def run(P1, P2, G2, valid, seed, cutoffs, M1, M2, M, nesting, use_filter, mode,
        tau_gdc, tau_inlier, p, max_iter, start_bound, adaptive, eps):
    s = len(cutoffs)
    cuts = (int(M1), int(M2), int(M))
    bestR = np.eye(3)
    bestT = np.zeros(3)
    best_count = -1
    best_total = math.inf
    best_iter = -1
    passed = 0
    evaluated = 0
    bound = start_bound
    limit = min(float(max_iter), bound)
    it = 0
    while it < limit:
        hi = int(min(limit, it + CHUNK))
        its = np.arange(it, hi, dtype=np.int64)
        idx = sample_batch(seed, its, cutoffs)
        ok = gdc_pass(P1, P2, G2, valid, idx, mode, tau_gdc) if use_filter else np.ones(len(its), bool)
        evaluable = ok & valid[idx].all(axis=1)
        evaluable[evaluable] = ~degenerate(P1, idx[evaluable], eps)
        rows = np.flatnonzero(evaluable)
        if rows.size:
            R, T = fit(P1, P2, idx[rows])
            counts, totals, prefix = score(P1, P2, valid, R, T, tau_inlier, cuts)
        slot = 0
        for b in range(len(its)):
            if it >= limit:
                break
            if ok[b]:
                passed += 1
            if evaluable[b]:
                evaluated += 1
                count = int(counts[slot])
                total = float(totals[slot])
                better = count > best_count
                if better or (count == best_count and total < best_total):
                    bestR = R[slot].copy()
                    bestT = T[slot].copy()
                    best_total = total
                    best_iter = it
                    best_count = count
                    if better and adaptive:
                        nb = adaptive_bound(p, prefix[slot], cuts, s, nesting)
                        if nb < bound:
                            bound = nb
                            limit = min(float(max_iter), bound)
                slot += 1
            it += 1
    return bestR, bestT, best_count, best_total, best_iter, it, passed, evaluated, bound


def inlier_mask(P1, P2, valid, R, T, tau):
    res = residual_norms(P1, P2, R[None], T[None])[0]
    with np.errstate(invalid="ignore"):
        return (res < tau) & valid
