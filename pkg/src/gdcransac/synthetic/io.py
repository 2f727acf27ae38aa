"""Line-oriented correspondence / scene text format.

::

    # gdc-scene v1
    # intrinsics <fx> <fy> <cx> <cy> <width> <height> <depth_scale>
    # pose <r00> <r01> ... <r22> <t0> <t1> <t2>
    <xi1> <eta1> <rho1> <xi2> <eta2> <rho2> <similarity> [<label 0|1>]

Rows are in rank order. Header lines are optional; any other line starting
with ``#`` is a comment. Floats are written with ``repr`` so files round-trip
exactly.
"""
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import ParseError
from ..geometry import CameraIntrinsics, Pose
from ..ransac.types import Matches

MAGIC = "# gdc-scene v1"


@dataclass(frozen=True, eq=False)
class CorrespondenceFile:
    matches: Matches
    labels: np.ndarray | None = None
    intrinsics: CameraIntrinsics | None = None
    pose: Pose | None = None
    width: int | None = None
    height: int | None = None


def _fmt(x):
    return repr(float(x))


def format_scene(matches, labels=None, intrinsics=None, pose=None, width=None, height=None):
    lines = [MAGIC]
    if intrinsics is not None:
        lines.append("# intrinsics " + " ".join(
            [_fmt(intrinsics.fx), _fmt(intrinsics.fy), _fmt(intrinsics.cx), _fmt(intrinsics.cy),
             str(int(width or 0)), str(int(height or 0)), _fmt(intrinsics.depth_scale)]))
    if pose is not None:
        lines.append("# pose " + " ".join(_fmt(x) for x in
                                          [*pose.rotation.ravel(), *pose.translation]))
    cols = (matches.xi1, matches.eta1, matches.rho1, matches.xi2, matches.eta2, matches.rho2,
            matches.similarity)
    for k in range(len(matches)):
        row = [_fmt(c[k]) for c in cols]
        if labels is not None:
            row.append("1" if labels[k] else "0")
        lines.append(" ".join(row))
    return "\n".join(lines) + "\n"


def save_scene(scene, path):
    """Write a :class:`SyntheticScene` (or anything with the same attributes)."""
    cfg = getattr(scene, "config", None)
    text = format_scene(scene.matches, scene.labels, scene.intrinsics, scene.true_pose,
                        getattr(cfg, "width", None), getattr(cfg, "height", None))
    Path(path).write_text(text)


def save_correspondences(path, matches, labels=None, intrinsics=None, pose=None):
    Path(path).write_text(format_scene(matches, labels, intrinsics, pose))


def parse_scene(text, path=None):
    intr = pose = None
    width = height = None
    rows = []
    labels = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            parts = line[1:].split()
            try:
                if parts and parts[0] == "intrinsics":
                    vals = parts[1:]
                    if len(vals) != 7:
                        raise ValueError("expected 7 intrinsics fields")
                    fx, fy, cx, cy = (float(v) for v in vals[:4])
                    width, height = int(vals[4]) or None, int(vals[5]) or None
                    intr = CameraIntrinsics(fx, fy, cx, cy, float(vals[6]))
                elif parts and parts[0] == "pose":
                    vals = [float(v) for v in parts[1:]]
                    if len(vals) != 12:
                        raise ValueError("expected 12 pose fields")
                    pose = Pose(np.array(vals[:9]).reshape(3, 3), np.array(vals[9:]))
            except ParseError:
                raise
            except Exception as exc:
                raise ParseError(f"bad header: {exc}", lineno, path) from None
            continue
        parts = line.split()
        if len(parts) not in (7, 8):
            raise ParseError(f"expected 7 or 8 fields, got {len(parts)}", lineno, path)
        try:
            vals = [float(v) for v in parts[:7]]
        except ValueError:
            raise ParseError("non-numeric field", lineno, path) from None
        if len(parts) == 8:
            if parts[7] not in ("0", "1"):
                raise ParseError("label must be 0 or 1", lineno, path)
            labels.append(parts[7] == "1")
        elif labels:
            raise ParseError("label column missing", lineno, path)
        if labels and len(labels) != len(rows) + 1:
            raise ParseError("label column missing on earlier rows", lineno, path)
        rows.append(vals)
    arr = np.array(rows, dtype=float).reshape(-1, 7)
    m = Matches(*(arr[:, j] for j in range(6)), arr[:, 6])
    lab = np.array(labels, dtype=bool) if labels else None
    return CorrespondenceFile(m, lab, intr, pose, width, height)


def load_scene(path):
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ParseError(f"cannot read: {exc.strerror}", None, str(p)) from None
    return parse_scene(text, str(p))


load_correspondences = load_scene
