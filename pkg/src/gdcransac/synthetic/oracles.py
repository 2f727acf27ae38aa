"""Brute-force oracles used to validate the analytic fast paths."""
import itertools

import numpy as np

from ..errors import DegenerateSample, LevelSetNotFound, NoValidHypothesis
from ..geometry import DEFAULT_TAU_INLIER, check_sample_geometry, rigid_fit


def level_set_crossings(values, target):
    """Sub-pixel (u, v) points where the grid crosses ``target`` along horizontal and vertical edges."""
    f = np.asarray(values, dtype=float) - target
    pts = []
    for axis in (1, 0):
        a = f[:, :-1] if axis == 1 else f[:-1, :]
        b = f[:, 1:] if axis == 1 else f[1:, :]
        with np.errstate(invalid="ignore"):
            hit = np.isfinite(a) & np.isfinite(b) & (a * b <= 0) & (a != b)
        vv, uu = np.nonzero(hit)
        t = a[vv, uu] / (a[vv, uu] - b[vv, uu])
        if axis == 1:
            pts.append(np.stack([uu + t, vv.astype(float)], 1))
        else:
            pts.append(np.stack([uu.astype(float), vv + t], 1))
    # grid points lying exactly on the level set
    vv, uu = np.nonzero(f == 0)
    pts.append(np.stack([uu.astype(float), vv.astype(float)], 1))
    return np.concatenate(pts)


def level_set_segments(values, target):
    """Piecewise-linear level set: one segment per cell crossing (marching squares).

    Returns an array (K, 2, 2) of segment endpoints in (u, v) pixel coordinates.
    Saddle cells are split by the sign of the cell-centre average.
    """
    f = np.asarray(values, dtype=float) - target
    a, b = f[:-1, :-1], f[:-1, 1:]   # top-left, top-right
    c, d = f[1:, :-1], f[1:, 1:]     # bottom-left, bottom-right
    ok = np.isfinite(a) & np.isfinite(b) & np.isfinite(c) & np.isfinite(d)
    vv, uu = np.nonzero(ok)
    a, b, c, d = a[vv, uu], b[vv, uu], c[vv, uu], d[vv, uu]
    u0 = uu.astype(float)
    v0 = vv.astype(float)

    def cross(p, q):
        with np.errstate(invalid="ignore", divide="ignore"):
            hit = (p * q <= 0) & (p != q)
            t = np.where(hit, p / (p - q), np.nan)
        return hit, t

    # edges: top (a->b), right (b->d), bottom (c->d), left (a->c)
    ht, tt = cross(a, b)
    hr, tr = cross(b, d)
    hb, tb = cross(c, d)
    hl, tl = cross(a, c)
    P = np.stack([
        np.stack([u0 + tt, v0], -1),
        np.stack([u0 + 1, v0 + tr], -1),
        np.stack([u0 + tb, v0 + 1], -1),
        np.stack([u0, v0 + tl], -1),
    ], 1)
    H = np.stack([ht, hr, hb, hl], 1)
    cnt = H.sum(1)
    segs = []
    two = np.flatnonzero(cnt == 2)
    if two.size:
        idx = np.argsort(~H[two], axis=1, kind="stable")[:, :2]
        segs.append(np.stack([P[two, idx[:, 0]], P[two, idx[:, 1]]], 1))
    four = np.flatnonzero(cnt == 4)
    if four.size:
        centre = 0.25 * (a[four] + b[four] + c[four] + d[four])
        same = (centre * a[four]) > 0
        # centre shares the sign of a: a's corner is cut off with d's
        pair1 = np.where(same[:, None], [1, 2], [0, 1])
        pair2 = np.where(same[:, None], [3, 0], [2, 3])
        for pr in (pair1, pair2):
            segs.append(np.stack([P[four, pr[:, 0]], P[four, pr[:, 1]]], 1))
    if not segs:
        return np.empty((0, 2, 2))
    return np.concatenate(segs)


def _point_segment_distance(q, segs):
    p0 = segs[:, 0]
    dvec = segs[:, 1] - p0
    L2 = (dvec ** 2).sum(1)
    with np.errstate(invalid="ignore", divide="ignore"):
        t = np.where(L2 > 0, ((q - p0) * dvec).sum(1) / L2, 0.0)
    t = np.clip(t, 0.0, 1.0)
    foot = p0 + t[:, None] * dvec
    return np.sqrt(((foot - q) ** 2).sum(1))


def oracle_level_set_distance(radial_map, target_phi, query_pixel):
    """Exhaustive pixel distance from ``query_pixel`` to the curve φ̄ = ``target_phi``.

    Every grid edge whose end values bracket the target contributes a linearly
    interpolated crossing point; crossings in the same cell are joined into
    segments and the minimum Euclidean distance to points and segments is returned.
    """
    values = radial_map.values if hasattr(radial_map, "values") else radial_map
    pts = level_set_crossings(values, target_phi)
    if len(pts) == 0:
        raise LevelSetNotFound(f"level set {target_phi:.6g} does not intersect the grid")
    q = np.asarray(query_pixel, dtype=float)
    best = float(np.sqrt(((pts - q) ** 2).sum(1)).min())
    # any closer segment lies in a cell within ``best`` of the query
    h, w = np.shape(values)
    u0 = max(int(np.floor(q[0] - best)) - 1, 0)
    v0 = max(int(np.floor(q[1] - best)) - 1, 0)
    u1 = min(int(np.ceil(q[0] + best)) + 2, w)
    v1 = min(int(np.ceil(q[1] + best)) + 2, h)
    segs = level_set_segments(np.asarray(values)[v0:v1, u0:u1], target_phi)
    if len(segs):
        segs = segs + np.array([u0, v0], dtype=float)
        best = min(best, float(_point_segment_distance(q, segs).min()))
    return best


def oracle_exhaustive_pose(correspondences, tau_inlier=DEFAULT_TAU_INLIER, max_n=25):
    """Best pose over every non-degenerate triple, by inlier count then residual sum."""
    return exhaustive_search(correspondences, tau_inlier, max_n)[0]


def exhaustive_search(correspondences, tau_inlier=DEFAULT_TAU_INLIER, max_n=25):
    """``(pose, inlier_count, residual_sum)`` of the best triple.

    Triples are visited in lexicographic order, so among exact ties the first wins.
    """
    from ..ransac.types import as_matches
    m = as_matches(correspondences)
    n = len(m)
    if n > max_n:
        raise ValueError(f"exhaustive search limited to {max_n} correspondences")
    P1 = m.points1()
    P2 = m.points2()
    valid = m.valid()
    best = None
    for tri in itertools.combinations(range(n), 3):
        idx = list(tri)
        if not valid[idx].all():
            continue
        try:
            check_sample_geometry(P1[idx])
        except DegenerateSample:
            continue
        pose = rigid_fit(P1[idx], P2[idx])
        with np.errstate(invalid="ignore"):
            r = np.linalg.norm(P1 @ pose.rotation.T + pose.translation - P2, axis=1)
            inl = valid & (r < tau_inlier)
        key = (int(inl.sum()), float(r[inl].sum()))
        if best is None or key[0] > best[1] or (key[0] == best[1] and key[1] < best[2]):
            best = (pose, key[0], key[1])
    if best is None:
        raise NoValidHypothesis("every triple is degenerate")
    return best
