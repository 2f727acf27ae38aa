"""Seeded synthetic RGB-D correspondence scenes."""
from dataclasses import dataclass, field
import functools
import math

import numpy as np

from ..errors import ConfigError
from ..geometry import CameraIntrinsics, Pose, rotation_about
from ..ransac.types import Matches
from .surfaces import FrontoPlane, Surface

# similarity model: clamped Gaussians, inliers centred higher
SIM_INLIER = (0.85, 0.15)
SIM_OUTLIER = (0.55, 0.15)


def random_pose(rs, max_angle_deg=8.0, t_range=(0.02, 0.15)):
    axis = rs.normal(size=3)
    angle = math.radians(rs.uniform(0.0, max_angle_deg))
    t = rs.normal(size=3)
    t *= rs.uniform(*t_range) / np.linalg.norm(t)
    return Pose(rotation_about(axis, angle), t)


@dataclass(frozen=True)
class SceneConfig:
    n_points: int = 500
    outlier_ratio: float = 0.7
    pixel_noise_sigma: float = 0.0
    depth_noise_sigma: float = 0.0
    pose: Pose | None = None  # None: random pose drawn from ``seed``
    surface: Surface = field(default_factory=lambda: FrontoPlane(2.0))
    width: int = 640
    height: int = 480
    intrinsics: CameraIntrinsics = field(default_factory=CameraIntrinsics.tum_default)
    seed: int = 0
    top_m: int = 250  # prefix whose outlier fraction is pinned to ``outlier_ratio``

    def __post_init__(self):
        if not 0 <= self.outlier_ratio < 1:
            raise ConfigError("outlier_ratio must lie in [0, 1)")
        if self.pixel_noise_sigma < 0 or self.depth_noise_sigma < 0:
            raise ConfigError("noise sigmas must be non-negative")
        if self.n_points < 3:
            raise ConfigError("need at least three correspondences")
        if not 1 <= self.top_m:
            raise ConfigError("top_m must be positive")
        if self.width < 3 or self.height < 3:
            raise ConfigError("image too small")


@dataclass(frozen=True, eq=False)
class SyntheticScene:
    config: SceneConfig
    matches: Matches
    labels: np.ndarray
    true_pose: Pose
    # true (noise-free) image positions, for diagnostics
    true_pixels1: np.ndarray
    true_pixels2: np.ndarray

    @property
    def intrinsics(self):
        return self.config.intrinsics

    @property
    def correspondences(self):
        return self.matches.to_correspondences()

    @functools.cached_property
    def depth1(self):
        return render_depth1(self.config.surface, self.config.intrinsics,
                             self.config.width, self.config.height)

    @functools.cached_property
    def depth2(self):
        return render_depth2(self.config.surface, self.true_pose, self.config.intrinsics,
                             self.config.width, self.config.height)

    def with_gradients(self):
        """Matches carrying image-2 depth gradients read off the rendered frame-2 depth."""
        from ..ransac.estimator import attach_gradients
        return attach_gradients(self.matches, self.depth2, self.intrinsics)


def _pixel_grid(intr, width, height):
    u = np.arange(width, dtype=float)[None, :]
    v = np.arange(height, dtype=float)[:, None]
    xi, eta = intr.pixel_to_normalized(u, v)
    return np.broadcast_arrays(xi, eta)


def render_depth1(surface, intr, width, height):
    xi, eta = _pixel_grid(intr, width, height)
    d = surface.depth(xi, eta)
    d = np.where(d > 0, d, np.nan)
    d.setflags(write=False)
    return d


def render_depth2(surface, pose, intr, width, height):
    xi, eta = _pixel_grid(intr, width, height)
    d = surface.raycast(pose, xi, eta)
    d.setflags(write=False)
    return d


def _labels_and_similarity(cfg, rs):
    """Rank-ordered labels and similarities with exactly round(e * M) outliers in the top M.

    One joint draw: item i is an outlier when its priority falls below K, its
    similarity is the label mean plus a fixed standard-normal draw. The top-M
    outlier count is non-decreasing in K with unit steps, so bisection on K
    hits the target exactly.
    """
    n, M = cfg.n_points, min(cfg.top_m, cfg.n_points)
    target = int(round(cfg.outlier_ratio * M))
    z = rs.normal(size=n)
    prio = rs.permutation(n)

    def draw(K):
        lab = prio >= K
        sim = np.where(lab, SIM_INLIER[0] + SIM_INLIER[1] * z, SIM_OUTLIER[0] + SIM_OUTLIER[1] * z)
        sim = np.clip(sim, 0.0, 1.0)
        order = np.argsort(-sim, kind="stable")
        return lab[order], sim[order]

    lo, hi = 0, n
    while lo < hi:
        mid = (lo + hi) // 2
        if int((~draw(mid)[0][:M]).sum()) < target:
            lo = mid + 1
        else:
            hi = mid
    lab, sim = draw(lo)
    assert int((~lab[:M]).sum()) == target
    return lab, sim


def _in_frame(u, v, cfg):
    return (u >= 0) & (u <= cfg.width - 1) & (v >= 0) & (v <= cfg.height - 1)


def _noisy_pixels(rs, u, v, sigma):
    if sigma == 0:
        return u, v
    return u + rs.normal(0, sigma, u.shape), v + rs.normal(0, sigma, v.shape)


def _depth_noise(rs, rho, sigma):
    if sigma == 0:
        return rho
    return rho * (1.0 + rs.normal(0, sigma, rho.shape))


def _draw_inliers(cfg, pose, rs, k):
    intr, surf = cfg.intrinsics, cfg.surface
    out = {name: [] for name in ("u1", "v1", "u2", "v2", "r1", "r2", "tu1", "tv1", "tu2", "tv2")}
    have = 0
    for _ in range(200):
        if have >= k:
            break
        m = max(64, 4 * (k - have))
        tu1 = rs.uniform(0, cfg.width - 1, m)
        tv1 = rs.uniform(0, cfg.height - 1, m)
        xi, eta = intr.pixel_to_normalized(tu1, tv1)
        rho = surf.depth(xi, eta)
        X1 = np.stack([rho * xi, rho * eta, rho], -1)
        X2 = X1 @ pose.rotation.T + pose.translation
        with np.errstate(divide="ignore", invalid="ignore"):
            xi2 = X2[:, 0] / X2[:, 2]
            eta2 = X2[:, 1] / X2[:, 2]
        tu2, tv2 = intr.normalized_to_pixel(xi2, eta2)
        ok = (rho > 0) & (X2[:, 2] > 0) & _in_frame(tu2, tv2, cfg)
        vis = surf.raycast(pose, np.where(ok, xi2, 0.0), np.where(ok, eta2, 0.0))
        with np.errstate(invalid="ignore"):
            ok &= np.abs(vis - X2[:, 2]) <= 1e-6 * X2[:, 2]
        u1, v1 = _noisy_pixels(rs, tu1, tv1, cfg.pixel_noise_sigma)
        u2, v2 = _noisy_pixels(rs, tu2, tv2, cfg.pixel_noise_sigma)
        if cfg.pixel_noise_sigma == 0:
            r1 = rho
            r2 = X2[:, 2]
        else:
            ok &= _in_frame(u1, v1, cfg) & _in_frame(u2, v2, cfg)
            a, b = intr.pixel_to_normalized(u1, v1)
            r1 = surf.depth(a, b)
            a, b = intr.pixel_to_normalized(np.where(ok, u2, 0.0), np.where(ok, v2, 0.0))
            r2 = surf.raycast(pose, a, b)
            # the observed pixel must stay on the generating surface patch
            with np.errstate(invalid="ignore"):
                ok &= np.abs(r1 - rho) <= 0.02 * rho
                ok &= np.abs(r2 - X2[:, 2]) <= 0.02 * X2[:, 2]
        r1 = _depth_noise(rs, r1, cfg.depth_noise_sigma)
        r2 = _depth_noise(rs, r2, cfg.depth_noise_sigma)
        sel = np.flatnonzero(ok)[:k - have]
        for name, arr in zip(out, (u1, v1, u2, v2, r1, r2, tu1, tv1, tu2, tv2)):
            out[name].append(arr[sel])
        have += sel.size
    if have < k:
        raise ConfigError("could not place enough co-visible inliers; check pose and surface")
    return {name: np.concatenate(v) for name, v in out.items()}


def _draw_outliers(cfg, pose, rs, k):
    intr, surf = cfg.intrinsics, cfg.surface
    u1 = np.empty(0)
    v1 = np.empty(0)
    r1 = np.empty(0)
    for _ in range(200):
        if u1.size >= k:
            break
        m = max(64, 2 * (k - u1.size))
        uu = rs.uniform(0, cfg.width - 1, m)
        vv = rs.uniform(0, cfg.height - 1, m)
        rr = surf.depth(*intr.pixel_to_normalized(uu, vv))
        good = rr > 0
        u1, v1, r1 = (np.concatenate([a, b[good]]) for a, b in ((u1, uu), (v1, vv), (r1, rr)))
    u2 = np.empty(0)
    v2 = np.empty(0)
    r2 = np.empty(0)
    for _ in range(200):
        if u2.size >= k:
            break
        m = max(64, 2 * (k - u2.size))
        uu = rs.uniform(0, cfg.width - 1, m)
        vv = rs.uniform(0, cfg.height - 1, m)
        rr = surf.raycast(pose, *intr.pixel_to_normalized(uu, vv))
        good = np.isfinite(rr) & (rr > 0)
        u2, v2, r2 = (np.concatenate([a, b[good]]) for a, b in ((u2, uu), (v2, vv), (r2, rr)))
    if u1.size < k or u2.size < k:
        raise ConfigError("could not place outliers on valid depth")
    r1 = _depth_noise(rs, r1[:k], cfg.depth_noise_sigma)
    r2 = _depth_noise(rs, r2[:k], cfg.depth_noise_sigma)
    return dict(u1=u1[:k], v1=v1[:k], u2=u2[:k], v2=v2[:k], r1=r1, r2=r2,
                tu1=u1[:k], tv1=v1[:k], tu2=u2[:k], tv2=v2[:k])


def generate(config):
    """Build a :class:`SyntheticScene`; identical configs give bit-identical scenes.

    Labels and similarities are drawn first: the top ``config.top_m`` ranks hold
    exactly ``round(e * top_m)`` outliers and the whole list ``round(e * (n - top_m))``
    more. Inlier geometry follows ``true_pose`` up to the configured noise. Outliers
    pair a random frame-1 surface point with a uniform frame-2 pixel of valid depth.
    """
    if not isinstance(config, SceneConfig):
        raise ConfigError("generate expects a SceneConfig")
    rs = np.random.default_rng(config.seed)
    pose = config.pose if config.pose is not None else random_pose(rs)
    labels, sim = _labels_and_similarity(config, rs)
    n = config.n_points
    inl = _draw_inliers(config, pose, rs, int(labels.sum()))
    out = _draw_outliers(config, pose, rs, int((~labels).sum()))
    cols = {}
    for name in inl:
        col = np.empty(n)
        col[labels] = inl[name]
        col[~labels] = out[name]
        cols[name] = col
    intr = config.intrinsics
    xi1, eta1 = intr.pixel_to_normalized(cols["u1"], cols["v1"])
    xi2, eta2 = intr.pixel_to_normalized(cols["u2"], cols["v2"])
    m = Matches(xi1, eta1, cols["r1"], xi2, eta2, cols["r2"], sim)
    labels.setflags(write=False)
    tp1 = np.stack([cols["tu1"], cols["tv1"]], 1)
    tp2 = np.stack([cols["tu2"], cols["tv2"]], 1)
    tp1.setflags(write=False)
    tp2.setflags(write=False)
    return SyntheticScene(config, m, labels, pose, tp1, tp2)
