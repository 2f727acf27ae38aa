"""Analytic scene surfaces, parametrised as frame-1 depth over normalised coordinates.

Each surface can be cast against rays of a second camera. For a frame-2 ray
with direction (ξ̄, η̄, 1), the point at frame-2 depth t is, in frame-1
coordinates, ``t * a + b`` with ``a = Rᵀ(ξ̄, η̄, 1)`` and ``b = -RᵀT``.
"""
from dataclasses import dataclass, field

import numpy as np

_SCAN_STEPS = 8
_REFINE_STEPS = 16


def _rays(pose, xi2, eta2):
    d = np.stack([np.asarray(xi2, float), np.asarray(eta2, float), np.ones(np.shape(xi2))], -1)
    Rt = pose.rotation.T
    a = d @ pose.rotation  # rows of Rᵀ d
    b = -(Rt @ pose.translation)
    return a, np.broadcast_to(b, a.shape)


class Surface:
    """Frame-1 depth function ρ(ξ, η) with analytic gradient."""

    def depth(self, xi, eta):
        raise NotImplementedError

    def gradient(self, xi, eta):
        raise NotImplementedError

    def depth_bounds(self):
        """(lo, hi) bracketing every frame-1 depth the surface attains."""
        raise NotImplementedError

    def _g(self, t, a, b):
        p = t[..., None] * a + b
        z = p[..., 2]
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(z > 0, z - self.depth(p[..., 0] / z, p[..., 1] / z), np.nan)

    def raycast(self, pose, xi2, eta2):
        """Frame-2 depth of the first surface hit along each frame-2 ray; NaN on a miss."""
        a, b = _rays(pose, xi2, eta2)
        shape = a.shape[:-1]
        a = a.reshape(-1, 3)
        b = b.reshape(-1, 3)
        lo, hi = self.depth_bounds()
        az = a[:, 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            t0 = (lo - b[:, 2]) / az
            t1 = (hi - b[:, 2]) / az
        tmin = np.maximum(np.minimum(t0, t1), 1e-9)
        tmax = np.maximum(t0, t1)
        out = np.full(len(a), np.nan)
        span = tmax - tmin
        ok = np.isfinite(span) & (span > 0) & (az > 0)
        if not ok.any():
            return out.reshape(shape)
        a, b, tmin, span = a[ok], b[ok], tmin[ok], span[ok]
        steps = np.linspace(0.0, 1.0, _SCAN_STEPS + 1)
        ts = tmin[:, None] + span[:, None] * steps[None, :]
        g = self._g(ts, a[:, None, :], b[:, None, :])
        # the ray starts in front of the surface (g < 0 means the point is nearer than the surface)
        cross = (g[:, :-1] <= 0) & (g[:, 1:] > 0)
        has = cross.any(axis=1)
        k = np.argmax(cross, axis=1)
        rows = np.arange(len(ts))
        k1 = np.minimum(k + 1, _SCAN_STEPS)
        lo_t, hi_t = ts[rows, k], ts[rows, k1]
        glo, ghi = g[rows, k], g[rows, k1]
        # Illinois false position inside the bracket
        side = np.zeros(len(ts), dtype=np.int8)
        for _ in range(_REFINE_STEPS):
            with np.errstate(invalid="ignore", divide="ignore"):
                mid = hi_t - ghi * (hi_t - lo_t) / (ghi - glo)
            mid = np.where(np.isfinite(mid) & (mid >= lo_t) & (mid <= hi_t), mid, 0.5 * (lo_t + hi_t))
            gm = self._g(mid, a, b)
            below = gm <= 0
            lo_t = np.where(below, mid, lo_t)
            glo = np.where(below, gm, glo)
            hi_t = np.where(below, hi_t, mid)
            ghi = np.where(below, ghi, gm)
            ghi = np.where(below & (side == -1), 0.5 * ghi, ghi)
            glo = np.where(~below & (side == 1), 0.5 * glo, glo)
            side = np.where(below, -1, 1).astype(np.int8)
        with np.errstate(invalid="ignore", divide="ignore"):
            root = hi_t - ghi * (hi_t - lo_t) / (ghi - glo)
        root = np.where(np.isfinite(root) & (root >= lo_t) & (root <= hi_t), root, 0.5 * (lo_t + hi_t))
        res = np.where(has, root, np.nan)
        out[np.flatnonzero(ok)] = res
        return out.reshape(shape)


@dataclass(frozen=True)
class FrontoPlane(Surface):
    distance: float = 2.0

    def __post_init__(self):
        if not self.distance > 0:
            raise ValueError("plane distance must be positive")

    def depth(self, xi, eta):
        return np.full(np.broadcast(xi, eta).shape, float(self.distance))

    def gradient(self, xi, eta):
        z = np.zeros(np.broadcast(xi, eta).shape)
        return z, z.copy()

    def depth_bounds(self):
        return self.distance, self.distance

    def _plane_t(self, a, b, d):
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (d - b[..., 2]) / a[..., 2]
        return np.where(t > 0, t, np.nan)

    def raycast(self, pose, xi2, eta2):
        a, b = _rays(pose, xi2, eta2)
        return self._plane_t(a, b, self.distance)


@dataclass(frozen=True)
class Ramp(Surface):
    """ρ = a + b ξ + c η; ray casting solves the quadratic z² = a z + b x + c y.

    The quadric has a second sheet far outside the view; hits are only
    accepted where |ξ|, |η| ≤ ``extent`` in frame 1.
    """
    a: float = 2.0
    b: float = 0.3
    c: float = 0.0
    extent: float = 1.0

    def depth(self, xi, eta):
        return self.a + self.b * np.asarray(xi, float) + self.c * np.asarray(eta, float)

    def gradient(self, xi, eta):
        shape = np.broadcast(xi, eta).shape
        return np.full(shape, float(self.b)), np.full(shape, float(self.c))

    def depth_bounds(self):
        # wide enough for any field of view below ±1.5 normalised units
        m = 1.5 * (abs(self.b) + abs(self.c))
        return max(self.a - m, 1e-3), self.a + m

    def raycast(self, pose, xi2, eta2):
        a, b = _rays(pose, xi2, eta2)
        ax, ay, az = a[..., 0], a[..., 1], a[..., 2]
        bx, by, bz = b[..., 0], b[..., 1], b[..., 2]
        A = az * az
        B = 2 * az * bz - self.a * az - self.b * ax - self.c * ay
        C = bz * bz - self.a * bz - self.b * bx - self.c * by
        disc = B * B - 4 * A * C
        with np.errstate(invalid="ignore", divide="ignore"):
            sq = np.sqrt(disc)
            r1 = (-B - sq) / (2 * A)
            r2 = (-B + sq) / (2 * A)
        best = np.full(np.shape(A), np.nan)
        for r in (r2, r1):
            z = az * r + bz
            with np.errstate(invalid="ignore", divide="ignore"):
                xi1 = (ax * r + bx) / z
                eta1 = (ay * r + by) / z
            good = (r > 0) & (z > 0) & (np.abs(xi1) <= self.extent) & (np.abs(eta1) <= self.extent)
            best = np.where(good & ~(best < r), r, best)
        return best


@dataclass(frozen=True)
class TwoPlanes(Surface):
    """Fronto-parallel plane at ``d1`` for ξ < ``split`` and at ``d2`` elsewhere, with no connecting wall."""
    d1: float = 1.0
    d2: float = 3.0
    split: float = 0.0

    def __post_init__(self):
        if not (self.d1 > 0 and self.d2 > 0):
            raise ValueError("plane distances must be positive")

    def depth(self, xi, eta):
        xi = np.asarray(xi, float)
        return np.where(xi < self.split, self.d1, self.d2) + 0.0 * np.asarray(eta, float)

    def gradient(self, xi, eta):
        z = np.zeros(np.broadcast(xi, eta).shape)
        return z, z.copy()

    def depth_bounds(self):
        return min(self.d1, self.d2), max(self.d1, self.d2)

    def raycast(self, pose, xi2, eta2):
        a, b = _rays(pose, xi2, eta2)
        best = np.full(a.shape[:-1], np.nan)
        for d, left in ((self.d1, True), (self.d2, False)):
            with np.errstate(divide="ignore", invalid="ignore"):
                t = (d - b[..., 2]) / a[..., 2]
                x = (t * a[..., 0] + b[..., 0]) / d
            side = (x < self.split) if left else (x >= self.split)
            good = (t > 0) & side
            best = np.where(good & ~(best < t), t, best)
        return best


@dataclass(frozen=True)
class SmoothHeightfield(Surface):
    """Sum of a few random plane waves on top of a constant base depth."""
    seed: int = 0
    amplitude: float = 0.2
    base: float = 2.5
    n_waves: int = 4
    _waves: tuple = field(default=(), repr=False, compare=False)

    def __post_init__(self):
        if self.amplitude < 0 or self.base - self.amplitude <= 0.1:
            raise ValueError("heightfield must stay in front of the camera")
        rs = np.random.default_rng(self.seed)
        k = rs.uniform(1.5, 4.0, self.n_waves)
        ang = rs.uniform(0, 2 * np.pi, self.n_waves)
        phase = rs.uniform(0, 2 * np.pi, self.n_waves)
        w = rs.uniform(0.5, 1.0, self.n_waves)
        w = w / w.sum()
        object.__setattr__(self, "_waves", tuple(zip(k * np.cos(ang), k * np.sin(ang), phase, w)))

    def depth(self, xi, eta):
        xi = np.asarray(xi, float)
        eta = np.asarray(eta, float)
        acc = np.zeros(np.broadcast(xi, eta).shape)
        for kx, ky, ph, w in self._waves:
            acc = acc + w * np.sin(kx * xi + ky * eta + ph)
        return self.base + self.amplitude * acc

    def gradient(self, xi, eta):
        xi = np.asarray(xi, float)
        eta = np.asarray(eta, float)
        gx = np.zeros(np.broadcast(xi, eta).shape)
        gy = gx.copy()
        for kx, ky, ph, w in self._waves:
            c = w * np.cos(kx * xi + ky * eta + ph)
            gx = gx + self.amplitude * kx * c
            gy = gy + self.amplitude * ky * c
        return gx, gy

    def depth_bounds(self):
        return self.base - self.amplitude, self.base + self.amplitude
