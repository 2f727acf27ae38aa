"""Occluding-contour fixtures on a two-plane scene.

Camera 2 is displaced sideways from camera 1, so the near half-plane slides
over part of the far one. Two kinds of correspondence are produced:

* straddling: a true near-plane point close to the step whose image-2 depth is
  read from the far plane one pixel or so across the edge (veridical);
* hidden: a far-plane point that camera 2 cannot see, matched to a nearby
  near-plane feature (not veridical, but within the pixel tolerance).
"""
from dataclasses import dataclass

import numpy as np

from ..geometry import CameraIntrinsics, Pose
from ..ransac.types import Matches
from .scene import render_depth1, render_depth2
from .surfaces import TwoPlanes


@dataclass(frozen=True, eq=False)
class ContourCases:
    surface: TwoPlanes
    pose: Pose
    intrinsics: CameraIntrinsics
    depth1: np.ndarray
    depth2: np.ndarray
    straddling: Matches
    hidden: Matches


def _nearest(depth, u, v):
    h, w = depth.shape
    ui = np.clip(np.rint(u).astype(int), 0, w - 1)
    vi = np.clip(np.rint(v).astype(int), 0, h - 1)
    return depth[vi, ui]


def occluding_contour_cases(n=200, seed=0, d1=1.0, d2=3.0, baseline=0.1, intrinsics=None,
                            width=640, height=480, similarity=0.9):
    intr = intrinsics or CameraIntrinsics.tum_default()
    surf = TwoPlanes(d1, d2, 0.0)
    pose = Pose(np.eye(3), np.array([baseline, 0.0, 0.0]))
    depth1 = render_depth1(surf, intr, width, height)
    depth2 = render_depth2(surf, pose, intr, width, height)
    rs = np.random.default_rng(seed)
    split_u = intr.cx  # ξ = 0
    f = intr.fx

    def build(u1, v1, u2, v2, r1, r2):
        xi1, eta1 = intr.pixel_to_normalized(u1, v1)
        xi2, eta2 = intr.pixel_to_normalized(u2, v2)
        return Matches(xi1, eta1, r1, xi2, eta2, r2, np.full(len(u1), similarity))

    # straddling: near-plane points within 2 px of the step
    rows = []
    for _ in range(100):
        if sum(len(r[0]) for r in rows) >= n:
            break
        u1 = split_u - rs.uniform(0.05, 2.0, 4 * n)
        v1 = rs.uniform(10, height - 11, 4 * n)
        # near plane shifts by f * baseline / d1 in image 2
        u2 = u1 + f * baseline / d1
        v2 = v1.copy()
        # observed a little across the edge, where the far plane shows
        u2o = u2 + rs.uniform(0.0, 1.5, u2.size)
        r2 = _nearest(depth2, u2o, v2)
        keep = np.isfinite(r2) & (np.abs(r2 - d2) < 1e-9) & (u2o < width - 1)
        rows.append((u1[keep], v1[keep], u2o[keep], v2[keep], np.full(keep.sum(), d1), r2[keep]))
    cols = [np.concatenate([r[j] for r in rows])[:n] for j in range(6)]
    straddling = build(*cols)

    # hidden: far-plane points occluded in image 2, paired with a near-plane neighbour
    lo = 9.5
    hi = f * baseline * (1 / d1 - 1 / d2) - 12.0
    if hi <= lo:
        raise ValueError("baseline too small for hidden-point cases")
    u1 = split_u + rs.uniform(lo, hi, n)
    v1 = rs.uniform(10, height - 11, n)
    u2 = u1 + f * baseline / d2 + rs.uniform(-3, 3, n)
    v2 = v1 + rs.uniform(-3, 3, n)
    r2 = _nearest(depth2, u2, v2)
    hidden = build(u1, v1, u2, v2, np.full(n, d2), r2)
    return ContourCases(surf, pose, intr, depth1, depth2, straddling, hidden)
