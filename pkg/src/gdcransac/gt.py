"""Ground-truth correspondence labels from a known relative pose and depth maps.

A putative match (f1, f2) is veridical when the reprojection of f1 lands
within ``tau_gamma`` pixels of f2, the two depths agree to a relative
tolerance ``tau_rho`` (directly, or through the closest depths of the two
neighbourhoods when the point sits on an occluding contour), and the
descriptor similarity reaches ``tau_s``.
"""
from dataclasses import dataclass
import enum
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import BehindCamera, LengthMismatch, OutOfFrame, ParseError
from .geometry import Feature, backproject


@dataclass(frozen=True)
class GtThresholds:
    tau_gamma: float = 8.0  # pixels
    tau_rho: float = 0.01
    tau_s: float = 0.4

    def __post_init__(self):
        if not (self.tau_gamma > 0 and self.tau_rho > 0 and self.tau_s > 0):
            raise ValueError("thresholds must be positive")


class Label(str, enum.Enum):
    VERIDICAL = "veridical"
    INVALID = "invalid"


class Basis(str, enum.Enum):
    DIRECT_DEPTH = "DirectDepth"
    OCCLUSION_RANGE = "OcclusionRange"
    SIMILARITY_REJECT = "SimilarityReject"
    REPROJECT_REJECT = "ReprojectReject"


@dataclass(frozen=True)
class ReprojectedFeature:
    gamma_hat: Feature
    pixel: tuple
    depth_range_source: tuple
    depth_range_target: tuple


@dataclass(frozen=True)
class LabeledMatch:
    index: int
    label: Label
    basis: Basis

    @property
    def veridical(self):
        return self.label is Label.VERIDICAL


class Confusion(NamedTuple):
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def error_rate(self):
        n = self.tp + self.fp + self.fn + self.tn
        return (self.fp + self.fn) / n if n else 0.0


def _window(grid, u, v, r):
    h, w = grid.shape
    ui = int(np.rint(u))
    vi = int(np.rint(v))
    r = int(np.floor(r))
    u0, u1 = max(ui - r, 0), min(ui + r, w - 1)
    v0, v1 = max(vi - r, 0), min(vi + r, h - 1)
    if u0 > u1 or v0 > v1:
        return None
    return u0, u1, v0, v1


def _valid_range(vals):
    vals = vals[np.isfinite(vals) & (vals > 0)]
    if vals.size == 0:
        return None
    return float(vals.min()), float(vals.max())


def _merge(rng, value):
    if rng is None:
        return (value, value)
    return (min(rng[0], value), max(rng[1], value))


def source_depth_range(f1, gt_pose, depth1, intrinsics1, radius):
    """Depth range, as seen from camera 2, of the frame-1 neighbourhood around f1."""
    u, v = intrinsics1.normalized_to_pixel(f1.xi, f1.eta)
    win = _window(depth1, u, v, radius)
    if win is None:
        return None
    u0, u1, v0, v1 = win
    d = np.asarray(depth1[v0:v1 + 1, u0:u1 + 1], dtype=float)
    uu, vv = np.meshgrid(np.arange(u0, u1 + 1, dtype=float), np.arange(v0, v1 + 1, dtype=float))
    xi, eta = intrinsics1.pixel_to_normalized(uu, vv)
    R, T = gt_pose.rotation, gt_pose.translation
    with np.errstate(invalid="ignore"):
        z = R[2, 0] * d * xi + R[2, 1] * d * eta + R[2, 2] * d + T[2]
        z = np.where(np.isfinite(d) & (d > 0), z, np.nan)
    return _valid_range(z)


def target_depth_range(f2, depth2, intrinsics2, radius):
    u, v = intrinsics2.normalized_to_pixel(f2.xi, f2.eta)
    win = _window(depth2, u, v, radius)
    if win is None:
        return None
    u0, u1, v0, v1 = win
    return _valid_range(np.asarray(depth2[v0:v1 + 1, u0:u1 + 1], dtype=float))


def reproject(f, gt_pose, intrinsics2, depth1=None, depth2=None, candidate=None,
              tau_gamma=GtThresholds.tau_gamma, intrinsics1=None, image_size=None):
    """Reproject a frame-1 feature into frame 2 and gather the neighbourhood depth ranges.

    Ranges always contain the point depths themselves: the source range holds
    ρ̂, the target range holds the candidate's ρ̄.
    """
    if not f.valid:
        raise ValueError("feature has no valid depth")
    p = gt_pose.apply(backproject(f))
    rho_hat = float(p[2])
    if not rho_hat > 0:
        raise BehindCamera(f"reprojected depth {rho_hat:.4g} is not positive")
    xi, eta = p[0] / rho_hat, p[1] / rho_hat
    u, v = intrinsics2.normalized_to_pixel(xi, eta)
    if image_size is None:
        if depth2 is not None:
            image_size = (depth2.shape[1], depth2.shape[0])
        else:
            image_size = (2 * intrinsics2.cx + 1, 2 * intrinsics2.cy + 1)
    w, h = image_size
    if not (-0.5 <= u < w - 0.5 and -0.5 <= v < h - 0.5):
        raise OutOfFrame(f"reprojection ({u:.1f}, {v:.1f}) leaves the {w}x{h} image")
    src = None
    if depth1 is not None:
        src = source_depth_range(f, gt_pose, depth1, intrinsics1 or intrinsics2, tau_gamma)
    src = _merge(src, rho_hat)
    tgt = None
    if candidate is not None and depth2 is not None:
        tgt = target_depth_range(candidate, depth2, intrinsics2, tau_gamma)
    tgt = _merge(tgt, candidate.rho) if candidate is not None else None
    return ReprojectedFeature(Feature(float(xi), float(eta), rho_hat, float(u), float(v)),
                              (float(u), float(v)), src, tgt)


def relative_depth_ok(a, b, tau_rho):
    return 2.0 * abs(a - b) / (a + b) < tau_rho


def range_depth_ok(source, target, tau_rho):
    """Closest-depth test between two ranges; overlapping ranges pass."""
    s_lo, s_hi = source
    t_lo, t_hi = target
    if t_hi < s_lo:
        return relative_depth_ok(t_hi, s_lo, tau_rho)
    if s_hi < t_lo:
        return relative_depth_ok(t_lo, s_hi, tau_rho)
    return True


def label_match(f1, f2, gt_pose, depth1, depth2, similarity, thresholds=None,
                intrinsics=None, intrinsics2=None, index=0):
    """Label one putative correspondence; see the module docstring for the rule."""
    th = thresholds or GtThresholds()
    if intrinsics is None:
        raise ValueError("intrinsics required")
    intr2 = intrinsics2 or intrinsics

    def out(label, basis):
        return LabeledMatch(int(index), label, basis)

    if not (f1.valid and f2.valid):
        return out(Label.INVALID, Basis.REPROJECT_REJECT)
    try:
        rep = reproject(f1, gt_pose, intr2, depth1, depth2, f2, th.tau_gamma, intrinsics)
    except (BehindCamera, OutOfFrame):
        return out(Label.INVALID, Basis.REPROJECT_REJECT)
    u2, v2 = intr2.normalized_to_pixel(f2.xi, f2.eta)
    if not np.hypot(u2 - rep.pixel[0], v2 - rep.pixel[1]) < th.tau_gamma:
        return out(Label.INVALID, Basis.REPROJECT_REJECT)
    if not similarity >= th.tau_s:
        return out(Label.INVALID, Basis.SIMILARITY_REJECT)
    if relative_depth_ok(f2.rho, rep.gamma_hat.rho, th.tau_rho):
        return out(Label.VERIDICAL, Basis.DIRECT_DEPTH)
    if range_depth_ok(rep.depth_range_source, rep.depth_range_target, th.tau_rho):
        return out(Label.VERIDICAL, Basis.OCCLUSION_RANGE)
    return out(Label.INVALID, Basis.OCCLUSION_RANGE)


def label_matches(matches, gt_pose, depth1, depth2, intrinsics, thresholds=None, intrinsics2=None):
    from .ransac.types import as_matches
    m = as_matches(matches)
    return [label_match(c.f1, c.f2, gt_pose, depth1, depth2, c.similarity, thresholds,
                        intrinsics, intrinsics2, k)
            for k, c in enumerate(m.to_correspondences())]


def _as_bool(x):
    if isinstance(x, LabeledMatch):
        return x.veridical
    return bool(x)


def evaluate_against_manual(algorithmic, manual):
    """(TP, FP, FN, TN) with 'veridical' as the positive class."""
    a = [_as_bool(x) for x in algorithmic]
    m = [_as_bool(x) for x in manual]
    if len(a) != len(m):
        raise LengthMismatch(f"{len(a)} algorithmic labels vs {len(m)} manual labels")
    a = np.array(a, dtype=bool)
    m = np.array(m, dtype=bool)
    return Confusion(int((a & m).sum()), int((a & ~m).sum()), int((~a & m).sum()),
                     int((~a & ~m).sum()))


def parse_labels(text, path=None):
    """``<index> <0|1>`` lines into a dense bool array (indices must cover 0..n-1)."""
    seen = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) < 2 or parts[1] not in ("0", "1"):
            raise ParseError("expected '<index> <0|1>'", lineno, path)
        try:
            idx = int(parts[0])
        except ValueError:
            raise ParseError("index must be an integer", lineno, path) from None
        if idx < 0 or idx in seen:
            raise ParseError(f"bad or repeated index {idx}", lineno, path)
        seen[idx] = parts[1] == "1"
    n = len(seen)
    if sorted(seen) != list(range(n)):
        raise ParseError("indices must cover 0..n-1", None, path)
    return np.array([seen[k] for k in range(n)], dtype=bool)


def read_labels(path):
    p = Path(path)
    try:
        return parse_labels(p.read_text(), str(p))
    except OSError as exc:
        raise ParseError(f"cannot read: {exc.strerror}", None, str(p)) from None


def format_labeled(labeled):
    return "".join(f"{x.index} {1 if x.veridical else 0} {x.basis.value}\n" for x in labeled)
