"""TUM RGB-D file formats, depth decoding and the relative pose error metric."""
from dataclasses import dataclass
import math
from pathlib import Path

import numpy as np

from .errors import NonUnitQuaternion, ParseError
from .geometry import Pose

DEFAULT_DEPTH_SCALE = 5000.0
ASSOC_TOLERANCE = 0.02  # seconds
QUAT_TOLERANCE = 1e-3
HIST_BIN_WIDTH = 0.05


@dataclass(frozen=True, eq=False)
class TrajectoryEntry:
    timestamp: float
    pose: Pose  # world-from-camera
    quaternion: tuple = None  # (qx, qy, qz, qw) as stored, after normalisation

    def __post_init__(self):
        if self.quaternion is None:
            object.__setattr__(self, "quaternion", tuple(self.pose.to_quaternion().tolist()))


def _read(path):
    p = Path(path)
    try:
        return p.read_text(), str(p)
    except OSError as exc:
        raise ParseError(f"cannot read: {exc.strerror}", None, str(p)) from None


def _data_lines(text):
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if line and not line.startswith("#"):
            yield lineno, line


def normalise_quaternion(q, lineno=None, path=None):
    q = [float(c) for c in q]
    norm = math.sqrt(sum(c * c for c in q))
    if not math.isfinite(norm) or abs(norm - 1.0) > QUAT_TOLERANCE:
        raise NonUnitQuaternion(f"quaternion norm {norm:.6g} is not within {QUAT_TOLERANCE} of 1",
                                lineno, path)
    # leave already-unit quaternions untouched so files round-trip bit for bit
    if abs(norm - 1.0) > 4 * np.finfo(float).eps:
        q = [c / norm for c in q]
    return tuple(q)


def parse_trajectory(text, path=None):
    entries = []
    for lineno, line in _data_lines(text):
        parts = line.split()
        if len(parts) != 8:
            raise ParseError(f"expected 8 fields 'timestamp tx ty tz qx qy qz qw', got {len(parts)}",
                             lineno, path)
        try:
            vals = [float(v) for v in parts]
        except ValueError:
            raise ParseError("non-numeric field", lineno, path) from None
        if not all(math.isfinite(v) for v in vals):
            raise ParseError("non-finite field", lineno, path)
        t, tx, ty, tz = vals[:4]
        q = normalise_quaternion(vals[4:], lineno, path)
        if entries and not t > entries[-1].timestamp:
            raise ParseError("timestamps must be strictly increasing", lineno, path)
        entries.append(TrajectoryEntry(t, Pose.from_quaternion(q, np.array([tx, ty, tz])), q))
    return entries


def load_trajectory(path):
    return parse_trajectory(*_read(path))


def format_trajectory(entries):
    out = ["# timestamp tx ty tz qx qy qz qw"]
    for e in entries:
        vals = [e.timestamp, *e.pose.translation.tolist(), *e.quaternion]
        out.append(" ".join(repr(float(v)) for v in vals))
    return "\n".join(out) + "\n"


def write_trajectory(path, entries):
    Path(path).write_text(format_trajectory(entries))


def parse_file_list(text, path=None):
    """``timestamp filename`` lines (rgb.txt / depth.txt)."""
    rows = []
    for lineno, line in _data_lines(text):
        parts = line.split()
        if len(parts) < 2:
            raise ParseError("expected 'timestamp filename'", lineno, path)
        try:
            t = float(parts[0])
        except ValueError:
            raise ParseError("timestamp is not a number", lineno, path) from None
        rows.append((t, parts[1]))
    return rows


def load_file_list(path):
    return parse_file_list(*_read(path))


def associate_pairs(a_times, b_times, tolerance=ASSOC_TOLERANCE):
    """Greedy closest-first matching of two timestamp lists; each stamp used at most once.

    Returns index pairs ``(i, j)`` sorted by ``i``.
    """
    a = np.asarray(a_times, dtype=float)
    b = np.asarray(b_times, dtype=float)
    cand = []
    for i, t in enumerate(a):
        lo = np.searchsorted(b, t - tolerance, side="left")
        hi = np.searchsorted(b, t + tolerance, side="right")
        for j in range(lo, hi):
            d = abs(t - b[j])
            if d < tolerance:
                cand.append((d, i, j))
    cand.sort()
    used_a, used_b = set(), set()
    pairs = []
    for _, i, j in cand:
        if i in used_a or j in used_b:
            continue
        used_a.add(i)
        used_b.add(j)
        pairs.append((i, j))
    return sorted(pairs)


@dataclass(frozen=True)
class Association:
    rgb_time: float
    depth_time: float
    gt_time: float | None = None
    rgb_index: int = -1
    depth_index: int = -1
    gt_index: int = -1


@dataclass(frozen=True)
class AssociationResult:
    frames: tuple
    dropped: int


def associate(rgb_times, depth_times, gt_times=None, tolerance_s=ASSOC_TOLERANCE):
    """RGB/depth (and optionally ground-truth) association; unmatched frames are dropped."""
    rgb = list(rgb_times)
    depth = list(depth_times)
    pairs = associate_pairs(rgb, depth, tolerance_s)
    frames = []
    if gt_times is None:
        frames = [Association(rgb[i], depth[j], None, i, j) for i, j in pairs]
    else:
        gt = list(gt_times)
        g = {i: k for i, k in associate_pairs([rgb[i] for i, _ in pairs], gt, tolerance_s)}
        for n, (i, j) in enumerate(pairs):
            if n in g:
                k = g[n]
                frames.append(Association(rgb[i], depth[j], gt[k], i, j, k))
    return AssociationResult(tuple(frames), len(rgb) - len(frames))


@dataclass(frozen=True, eq=False)
class FramePair:
    first: int
    second: int
    first_time: float
    second_time: float
    gt_relative: Pose  # maps camera-``first`` coordinates to camera-``second``
    matches: object = None


def relative_motion(pose_i, pose_j):
    """Pose taking camera-i coordinates to camera-j coordinates, from world-from-camera poses."""
    return pose_j.inverse().compose(pose_i)


def frame_pairs(frames, trajectory, intervals=range(1, 31)):
    """Pair every associated frame with later ones at the given index intervals."""
    poses = {round(e.timestamp, 9): e.pose for e in trajectory}
    out = []
    for a in range(len(frames)):
        for k in intervals:
            b = a + k
            if b >= len(frames):
                break
            fa, fb = frames[a], frames[b]
            pa = poses.get(round(fa.gt_time, 9)) if fa.gt_time is not None else None
            pb = poses.get(round(fb.gt_time, 9)) if fb.gt_time is not None else None
            if pa is None or pb is None:
                continue
            out.append(FramePair(a, b, fa.rgb_time, fb.rgb_time, relative_motion(pa, pb)))
    return out


def decode_depth(raw16, intrinsics=None, depth_scale=None):
    """Raw sensor units to metres; raw 0 becomes NaN."""
    scale = depth_scale or (intrinsics.depth_scale if intrinsics is not None else DEFAULT_DEPTH_SCALE)
    if not scale > 0:
        raise ValueError("depth_scale must be positive")
    raw = np.asarray(raw16)
    out = raw.astype(float) / scale
    out[raw == 0] = np.nan
    return out


def encode_depth(depth, intrinsics=None, depth_scale=None):
    """Inverse of :func:`decode_depth`; NaN and non-positive depths encode as 0."""
    scale = depth_scale or (intrinsics.depth_scale if intrinsics is not None else DEFAULT_DEPTH_SCALE)
    d = np.asarray(depth, dtype=float)
    with np.errstate(invalid="ignore"):
        raw = np.rint(d * scale)
        raw = np.where(np.isfinite(raw) & (raw > 0), raw, 0)
    return np.clip(raw, 0, 65535).astype(np.uint16)


def read_depth_png(path, intrinsics=None, depth_scale=None):
    from PIL import Image
    try:
        with Image.open(path) as im:
            raw = np.array(im)
    except OSError as exc:
        raise ParseError(f"cannot read depth image: {exc}", None, str(path)) from None
    if raw.ndim != 2:
        raise ParseError("depth image must be single-channel", None, str(path))
    return decode_depth(raw, intrinsics, depth_scale)


def write_depth_png(path, depth, intrinsics=None, depth_scale=None):
    from PIL import Image
    raw = encode_depth(depth, intrinsics, depth_scale)
    Image.fromarray(raw).save(path)


def relative_pose_error(est, gt):
    """(rotation error in degrees, translation error in metres) of E = gt⁻¹ · est."""
    E = gt.inverse().compose(est)
    c = (np.trace(E.rotation) - 1.0) / 2.0
    rot = math.degrees(math.acos(min(1.0, max(-1.0, c))))
    return rot, float(np.linalg.norm(E.translation))


@dataclass(frozen=True)
class RpeRow:
    t_from: float
    t_to: float
    rot_deg: float
    trans_m: float


@dataclass(frozen=True)
class RpeSummary:
    count: int
    rot_rmse: float
    rot_mean: float
    rot_median: float
    rot_max: float
    trans_rmse: float
    trans_mean: float
    trans_median: float
    trans_max: float


def summarise_rpe(rows):
    if not rows:
        nan = math.nan
        return RpeSummary(0, nan, nan, nan, nan, nan, nan, nan, nan)
    r = np.array([x.rot_deg for x in rows])
    t = np.array([x.trans_m for x in rows])
    return RpeSummary(len(rows), float(np.sqrt((r ** 2).mean())), float(r.mean()),
                      float(np.median(r)), float(r.max()), float(np.sqrt((t ** 2).mean())),
                      float(t.mean()), float(np.median(t)), float(t.max()))


def trajectory_rpe(estimated, groundtruth, delta=1, tolerance_s=ASSOC_TOLERANCE):
    """Per-pair RPE between two trajectories over index step ``delta`` of the associated stamps."""
    if delta < 1:
        raise ValueError("delta must be at least 1")
    pairs = associate_pairs([e.timestamp for e in estimated],
                            [g.timestamp for g in groundtruth], tolerance_s)
    rows = []
    for k in range(len(pairs) - delta):
        (i0, j0), (i1, j1) = pairs[k], pairs[k + delta]
        est_rel = estimated[i0].pose.inverse().compose(estimated[i1].pose)
        gt_rel = groundtruth[j0].pose.inverse().compose(groundtruth[j1].pose)
        rot, trans = relative_pose_error(est_rel, gt_rel)
        rows.append(RpeRow(estimated[i0].timestamp, estimated[i1].timestamp, rot, trans))
    return rows


def outlier_ratio_histogram(ratios, bin_width=HIST_BIN_WIDTH):
    """Counts of per-pair outlier ratios in [0, 1] bins of ``bin_width``."""
    nb = int(round(1.0 / bin_width))
    edges = np.linspace(0.0, 1.0, nb + 1)
    counts, _ = np.histogram(np.clip(np.asarray(ratios, dtype=float), 0, 1), bins=edges)
    return edges, counts


def load_correspondences(path):
    """Correspondence file in the synthetic scene text format."""
    from .synthetic.io import load_scene
    return load_scene(path)
