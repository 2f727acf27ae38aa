"""RGBD point geometry: backprojection, squared radial maps, the depth-consistency
residual, point-to-curve distances and the minimal rigid solver.

Image points are normalised coordinates ``gamma = (xi, eta, 1)`` with a depth
``rho`` measured along the optical axis, so the 3D point is ``rho * gamma``.
A pose maps camera-1 coordinates into camera 2: ``X2 = R @ X1 + T``.
"""
from dataclasses import dataclass, field
import math

import numpy as np

from .errors import (DegenerateGradient, DegenerateSample, InsufficientSupport,
                     InvalidDepth)

EPS_GRAD = 1e-9
EPS_COLLINEAR = 1e-6
DEFAULT_TAU_INLIER = 0.02


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    depth_scale: float = 5000.0

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if not self.depth_scale > 0:
            raise ValueError("depth_scale must be positive")

    @classmethod
    def tum_default(cls):
        """Nominal 640x480 Kinect intrinsics used by the TUM benchmark tools."""
        return cls(525.0, 525.0, 319.5, 239.5, 5000.0)

    def pixel_to_normalized(self, u, v):
        return (np.asarray(u) - self.cx) / self.fx, (np.asarray(v) - self.cy) / self.fy

    def normalized_to_pixel(self, xi, eta):
        return np.asarray(xi) * self.fx + self.cx, np.asarray(eta) * self.fy + self.cy

    def feature_at(self, u, v, rho):
        xi, eta = self.pixel_to_normalized(u, v)
        return Feature(float(xi), float(eta), float(rho), float(u), float(v))

    def scaled(self, factor):
        """Intrinsics for an image resampled by ``factor`` (pixel-centre convention)."""
        return CameraIntrinsics(self.fx * factor, self.fy * factor,
                                (self.cx + 0.5) * factor - 0.5,
                                (self.cy + 0.5) * factor - 0.5, self.depth_scale)


@dataclass(frozen=True)
class Feature:
    xi: float
    eta: float
    rho: float
    pixel_u: float = math.nan
    pixel_v: float = math.nan

    @property
    def valid(self):
        return math.isfinite(self.rho) and self.rho > 0 and \
            math.isfinite(self.xi) and math.isfinite(self.eta)

    @property
    def gamma(self):
        return np.array([self.xi, self.eta, 1.0])


@dataclass(frozen=True, eq=False)
class Pose:
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        R = np.array(self.rotation, dtype=float).reshape(3, 3)
        T = np.array(self.translation, dtype=float).reshape(3)
        if not np.all(np.isfinite(R)) or not np.all(np.isfinite(T)):
            raise ValueError("pose entries must be finite")
        if np.abs(R.T @ R - np.eye(3)).max() > 1e-6 or abs(np.linalg.det(R) - 1.0) > 1e-6:
            raise ValueError("rotation is not a proper orthonormal matrix")
        R.setflags(write=False)
        T.setflags(write=False)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", T)

    @classmethod
    def identity(cls):
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, m):
        m = np.asarray(m, dtype=float)
        return cls(m[:3, :3], m[:3, 3])

    @classmethod
    def from_quaternion(cls, q, t):
        """Pose from a unit quaternion ordered (qx, qy, qz, qw) and a translation."""
        x, y, z, w = q
        R = np.array([
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ])
        return cls(R, t)

    def to_quaternion(self):
        """(qx, qy, qz, qw) with qw >= 0."""
        R = self.rotation
        tr = np.trace(R)
        if tr > 0:
            S = math.sqrt(tr + 1.0) * 2
            q = [(R[2, 1] - R[1, 2]) / S, (R[0, 2] - R[2, 0]) / S,
                 (R[1, 0] - R[0, 1]) / S, 0.25 * S]
        elif R[0, 0] > R[1, 1] and R[0, 0] > R[2, 2]:
            S = math.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2]) * 2
            q = [0.25 * S, (R[0, 1] + R[1, 0]) / S, (R[0, 2] + R[2, 0]) / S,
                 (R[2, 1] - R[1, 2]) / S]
        elif R[1, 1] > R[2, 2]:
            S = math.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2]) * 2
            q = [(R[0, 1] + R[1, 0]) / S, 0.25 * S, (R[1, 2] + R[2, 1]) / S,
                 (R[0, 2] - R[2, 0]) / S]
        else:
            S = math.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1]) * 2
            q = [(R[0, 2] + R[2, 0]) / S, (R[1, 2] + R[2, 1]) / S, 0.25 * S,
                 (R[1, 0] - R[0, 1]) / S]
        q = np.array(q)
        q /= np.linalg.norm(q)
        return -q if q[3] < 0 else q

    def matrix(self):
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def apply(self, points):
        """Map (..., 3) camera-1 points into camera 2."""
        return np.asarray(points) @ self.rotation.T + self.translation

    def compose(self, other):
        """``self ∘ other``: apply ``other`` first."""
        return Pose(self.rotation @ other.rotation,
                    self.rotation @ other.translation + self.translation)

    def inverse(self):
        Rt = self.rotation.T
        return Pose(Rt, -Rt @ self.translation)

    def __matmul__(self, other):
        return self.compose(other)

    def __repr__(self):
        return f"Pose(rotation={self.rotation.tolist()}, translation={self.translation.tolist()})"


@dataclass(frozen=True, eq=False)
class RadialMap:
    width: int
    height: int
    values: np.ndarray
    ref_feature: Feature


@dataclass(frozen=True)
class DepthGradient:
    d_rho_d_xi: float
    d_rho_d_eta: float

    @property
    def finite(self):
        return math.isfinite(self.d_rho_d_xi) and math.isfinite(self.d_rho_d_eta)


def rotation_about(axis, angle):
    """Rodrigues rotation matrix for ``angle`` radians about ``axis``."""
    a = np.asarray(axis, dtype=float)
    a = a / np.linalg.norm(a)
    K = np.array([[0, -a[2], a[1]], [a[2], 0, -a[0]], [-a[1], a[0], 0]])
    return np.eye(3) + math.sin(angle) * K + (1 - math.cos(angle)) * (K @ K)


def _require_valid(*features):
    for f in features:
        if not f.valid:
            raise InvalidDepth(f"invalid depth {f.rho!r} at ({f.xi}, {f.eta})")


def backproject(f):
    _require_valid(f)
    return np.array([f.rho * f.xi, f.rho * f.eta, f.rho])


def project(point):
    """Inverse of :func:`backproject` (pixel fields left unset)."""
    x, y, z = (float(c) for c in point)
    if not z > 0:
        raise InvalidDepth(f"point has non-positive depth {z}")
    return Feature(x / z, y / z, z)


def _sqdist(a, b):
    dx = a[0] - b[0]
    dy = a[1] - b[1]
    dz = a[2] - b[2]
    return dx * dx + dy * dy + dz * dz


def squared_radial_value(f, ref):
    """Squared 3D distance between the points seen at ``f`` and ``ref``."""
    return float(_sqdist(backproject(f), backproject(ref)))


def _valid_depth(depth):
    return np.isfinite(depth) & (depth > 0)


def build_radial_map(depth_grid, intrinsics, ref):
    """Squared radial map of a depth image with respect to ``ref``.

    Invalid depth pixels hold NaN.
    """
    ref_point = backproject(ref)
    depth = np.asarray(depth_grid, dtype=float)
    h, w = depth.shape
    if h == 0 or w == 0:
        raise ValueError("empty depth grid")
    u = np.arange(w, dtype=float)[None, :]
    v = np.arange(h, dtype=float)[:, None]
    xi = (u - intrinsics.cx) / intrinsics.fx
    eta = (v - intrinsics.cy) / intrinsics.fy
    pts = (depth * xi, depth * eta, depth)
    values = _sqdist(pts, ref_point)
    values = np.where(_valid_depth(depth), values, np.nan)
    values.setflags(write=False)
    return RadialMap(w, h, values, ref)


def gdc_residual(pair_i, pair_j):
    """| |Γi − Γj|² − |Γ̄i − Γ̄j|² | for two correspondences (f1, f2)."""
    a1, a2 = pair_i
    b1, b2 = pair_j
    d1 = _sqdist(backproject(a1), backproject(b1))
    d2 = _sqdist(backproject(a2), backproject(b2))
    return float(abs(d1 - d2))


def depth_gradient(depth_grid, intrinsics, at_pixel):
    """Central-difference ∂ρ/∂ξ, ∂ρ/∂η at integer pixel ``(u, v)``."""
    u, v = (int(c) for c in at_pixel)
    depth = np.asarray(depth_grid)
    h, w = depth.shape
    if u < 1 or v < 1 or u > w - 2 or v > h - 2:
        raise InsufficientSupport(f"pixel ({u}, {v}) has no full 3x3 neighbourhood")
    patch = depth[v - 1:v + 2, u - 1:u + 2]
    if not _valid_depth(patch).all():
        raise InsufficientSupport(f"invalid depth near pixel ({u}, {v})")
    d_du = (patch[1, 2] - patch[1, 0]) / 2.0
    d_dv = (patch[2, 1] - patch[0, 1]) / 2.0
    return DepthGradient(float(d_du * intrinsics.fx), float(d_dv * intrinsics.fy))


def depth_gradient_grid(depth_grid, intrinsics):
    """Vectorised :func:`depth_gradient` for every pixel; NaN where support is missing."""
    depth = np.asarray(depth_grid, dtype=float)
    ok = _valid_depth(depth)
    h, w = depth.shape
    gx = np.full((h, w), np.nan)
    gy = np.full((h, w), np.nan)
    if h < 3 or w < 3:
        return gx, gy
    support = np.ones((h - 2, w - 2), dtype=bool)
    for dv in range(3):
        for du in range(3):
            support &= ok[dv:h - 2 + dv, du:w - 2 + du]
    cx = (depth[1:-1, 2:] - depth[1:-1, :-2]) / 2.0 * intrinsics.fx
    cy = (depth[2:, 1:-1] - depth[:-2, 1:-1]) / 2.0 * intrinsics.fy
    gx[1:-1, 1:-1] = np.where(support, cx, np.nan)
    gy[1:-1, 1:-1] = np.where(support, cy, np.nan)
    return gx, gy


def radial_gradient(query, ref2, grad):
    """∇φ̄ at ``query`` in normalised coordinates, from the depth gradient there."""
    rho = query.rho
    rho0 = ref2.rho
    c = rho * (query.xi ** 2 + query.eta ** 2 + 1.0) - rho0 * (ref2.xi * query.xi + ref2.eta * query.eta + 1.0)
    gx = 2.0 * c * grad.d_rho_d_xi + 2.0 * rho * (rho * query.xi - rho0 * ref2.xi)
    gy = 2.0 * c * grad.d_rho_d_eta + 2.0 * rho * (rho * query.eta - rho0 * ref2.eta)
    return gx, gy


def gdc_point_to_curve_distance(query, ref_pair, phi_image1, grad, intrinsics=None):
    """First-order distance from ``query`` (image 2) to the level set φ̄ = ``phi_image1``.

    ``ref_pair`` is the hypothesised veridical correspondence (image-1 feature,
    image-2 feature); only its image-2 member enters the image-2 radial map.
    The distance is in normalised coordinates, or in pixels when
    ``intrinsics`` is given.

    Raises DegenerateGradient when |∇φ̄| < 1e-9.
    """
    _, ref2 = ref_pair
    _require_valid(query, ref2)
    if not grad.finite:
        raise DegenerateGradient("depth gradient is not finite")
    phi_bar = squared_radial_value(query, ref2)
    gx, gy = radial_gradient(query, ref2, grad)
    if intrinsics is not None:
        gx = gx / intrinsics.fx
        gy = gy / intrinsics.fy
    norm = math.hypot(gx, gy)
    if norm < EPS_GRAD:
        raise DegenerateGradient(f"|grad phi| = {norm:.3g} below {EPS_GRAD}")
    return abs(phi_image1 - phi_bar) / norm


def check_sample_geometry(points, eps=EPS_COLLINEAR):
    """Raise DegenerateSample if the camera-1 points cannot fix a rotation."""
    pts = np.asarray(points, dtype=float)
    if not np.all(np.isfinite(pts)):
        raise DegenerateSample("non-finite sample point")
    n = len(pts)
    if n < 3:
        raise DegenerateSample("need at least three points")
    diffs = pts[:, None, :] - pts[None, :, :]
    dist = np.sqrt((diffs ** 2).sum(-1))
    iu = np.triu_indices(n, 1)
    if dist[iu].min() <= eps:
        raise DegenerateSample("coincident sample points")
    if n == 3:
        area2 = np.linalg.norm(np.cross(pts[1] - pts[0], pts[2] - pts[0]))
        height = area2 / dist[iu].max()
    else:
        height = np.linalg.svd(pts - pts.mean(0), compute_uv=False)[1]
    if height <= eps:
        raise DegenerateSample("collinear sample points")


def rigid_fit(src, dst):
    """Least-squares rotation and translation with dst ≈ R src + T (Kabsch with reflection fix)."""
    src = np.asarray(src, dtype=float)
    dst = np.asarray(dst, dtype=float)
    ca = src.mean(0)
    cb = dst.mean(0)
    H = (src - ca).T @ (dst - cb)
    U, _, Vt = np.linalg.svd(H)
    d = 1.0 if np.linalg.det(Vt.T @ U.T) >= 0 else -1.0
    R = Vt.T @ np.diag([1.0, 1.0, d]) @ U.T
    return Pose(R, cb - R @ ca)


def estimate_pose_3pt(samples):
    """Rigid pose from three (or more) correspondences, each an ``(f1, f2)`` pair
    or an object with ``f1``/``f2`` attributes."""
    pairs = [(s.f1, s.f2) if hasattr(s, "f1") else tuple(s) for s in samples]
    try:
        src = np.array([backproject(a) for a, _ in pairs])
        dst = np.array([backproject(b) for _, b in pairs])
    except InvalidDepth as exc:
        raise DegenerateSample(str(exc)) from exc
    check_sample_geometry(src)
    return rigid_fit(src, dst)


def count_inliers(pose, correspondences, tau_inlier=DEFAULT_TAU_INLIER):
    """Inliers have 3D residual |R Γ + T − Γ̄| below ``tau_inlier``.

    ``correspondences`` is a :class:`~gdcransac.ransac.Matches` or a sequence
    of correspondences. Returns ``(count, mask)``.
    """
    from .ransac.types import as_matches
    m = as_matches(correspondences)
    res = residuals(pose, m.points1(), m.points2())
    mask = m.valid() & (res < tau_inlier)
    return int(mask.sum()), mask


def residuals(pose, points1, points2):
    """Per-point 3D residual norms, evaluated in the same order as the kernels."""
    R = pose.rotation
    T = pose.translation
    x, y, z = points1[:, 0], points1[:, 1], points1[:, 2]
    rx = R[0, 0] * x + R[0, 1] * y + R[0, 2] * z + T[0] - points2[:, 0]
    ry = R[1, 0] * x + R[1, 1] * y + R[1, 2] * z + T[1] - points2[:, 1]
    rz = R[2, 0] * x + R[2, 1] * y + R[2, 2] * z + T[2] - points2[:, 2]
    return np.sqrt(rx * rx + ry * ry + rz * rz)


def point_covariance(points, focal_px, pixel_sigma, depth_sigma):
    """Per-point 3x3 covariance of backprojected RGB-D points.

    Pixel noise ``pixel_sigma`` (px) perturbs ξ and η; ``depth_sigma`` is the
    relative depth noise and acts along the viewing ray.
    """
    P = np.asarray(points, dtype=float)
    rho = P[:, 2]
    g = P / rho[:, None]
    C = np.einsum("ni,nj->nij", g, g) * ((depth_sigma * rho) ** 2)[:, None, None]
    lat = (rho * pixel_sigma / focal_px) ** 2
    C[:, 0, 0] += lat
    C[:, 1, 1] += lat
    return C


def weighted_rigid_refine(src, dst, pose, cov_src, cov_dst, iterations=10):
    """Gauss-Newton refinement of ``pose`` under per-point Gaussian noise on both clouds.

    Minimises Σ rᵢᵀ (R Σᵢ Rᵀ + Σ̄ᵢ)⁻¹ rᵢ with rᵢ = R src_i + T − dst_i, rotation
    updated on the left by an axis-angle increment.
    """
    src = np.asarray(src, dtype=float)
    dst = np.asarray(dst, dtype=float)
    R = pose.rotation.copy()
    T = pose.translation.copy()
    n = len(src)
    J = np.zeros((n, 3, 6))
    J[:, :, 3:] = np.eye(3)
    for _ in range(iterations):
        W = np.linalg.inv(np.einsum("ij,njk,lk->nil", R, cov_src, R) + cov_dst)
        RP = src @ R.T
        r = RP + T - dst
        # d(R p)/dω = -[R p]×
        J[:, 0, 1], J[:, 0, 2] = RP[:, 2], -RP[:, 1]
        J[:, 1, 0], J[:, 1, 2] = -RP[:, 2], RP[:, 0]
        J[:, 2, 0], J[:, 2, 1] = RP[:, 1], -RP[:, 0]
        H = np.einsum("nia,nij,njb->ab", J, W, J)
        grad = np.einsum("nia,nij,nj->a", J, W, r)
        try:
            step = -np.linalg.solve(H, grad)
        except np.linalg.LinAlgError:
            break
        w = step[:3]
        angle = float(np.linalg.norm(w))
        if angle > 0:
            dR = rotation_about(w, angle)
            R = dR @ R
        T = T + step[3:]
        # re-orthonormalise against drift
        U, _, Vt = np.linalg.svd(R)
        R = U @ Vt
        if angle < 1e-12 and np.linalg.norm(step[3:]) < 1e-12:
            break
    return Pose(R, T)
