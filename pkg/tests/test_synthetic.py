import math

import numpy as np
import pytest

from gdcransac.errors import ConfigError, LevelSetNotFound, NoValidHypothesis, ParseError
from gdcransac.geometry import (CameraIntrinsics, Feature, Pose, build_radial_map, depth_gradient_grid,
                                point_covariance, rotation_about)
from gdcransac.ransac import Matches, RansacConfig, estimate
from gdcransac.synthetic import (FrontoPlane, Ramp, SceneConfig, SmoothHeightfield, Surface, TwoPlanes,
                                 exhaustive_search, format_scene, generate, load_scene,
                                 oracle_exhaustive_pose, oracle_level_set_distance, parse_scene,
                                 render_depth1, save_scene)

INTR = CameraIntrinsics.tum_default()
POSE = Pose(rotation_about([0.2, 1, 0.1], math.radians(4)), [0.08, -0.02, 0.05])


def test_config_validation():
    for bad in (dict(outlier_ratio=1.0), dict(outlier_ratio=-0.1), dict(pixel_noise_sigma=-1),
                dict(n_points=2), dict(top_m=0), dict(width=2)):
        with pytest.raises(ConfigError):
            SceneConfig(**bad)
    with pytest.raises(ConfigError):
        generate("not a config")


def test_same_seed_bit_identical():
    cfg = SceneConfig(outlier_ratio=0.8, seed=21, pixel_noise_sigma=0.5, depth_noise_sigma=0.005,
                      surface=SmoothHeightfield(2, 0.2))
    a, b = generate(cfg), generate(cfg)
    assert format_scene(a.matches, a.labels) == format_scene(b.matches, b.labels)
    assert np.array_equal(a.true_pose.matrix(), b.true_pose.matrix())
    c = generate(SceneConfig(outlier_ratio=0.8, seed=22))
    assert not np.array_equal(a.matches.xi1, c.matches.xi1)


@pytest.mark.parametrize("e", [0.0, 0.5, 0.7, 0.9])
def test_top_m_outlier_fraction(e):
    for seed in range(5):
        sc = generate(SceneConfig(outlier_ratio=e, seed=seed))
        frac = 1 - sc.labels[:250].mean()
        assert abs(frac - e) <= 1 / 250


def test_similarity_sorted_and_ranked():
    sc = generate(SceneConfig(outlier_ratio=0.7, seed=3))
    s = sc.matches.similarity
    assert np.all(np.diff(s) <= 0) and s.min() >= 0 and s.max() <= 1
    assert [c.rank for c in sc.correspondences] == list(range(len(s)))


def test_clean_scene_end_to_end():
    sc = generate(SceneConfig(outlier_ratio=0.0, seed=2, pose=POSE))
    rep = estimate(sc.matches, RansacConfig())
    assert np.abs(rep.pose.matrix() - POSE.matrix()).max() <= 1e-9


@pytest.mark.parametrize("surface", [FrontoPlane(2.0), Ramp(2.2, 0.5, 0.3), SmoothHeightfield(3, 0.25)])
def test_noiseless_inliers_exact(surface):
    sc = generate(SceneConfig(outlier_ratio=0.5, seed=1, surface=surface))
    m = sc.matches
    P1, P2 = m.points1()[sc.labels], m.points2()[sc.labels]
    assert np.abs(sc.true_pose.apply(P1) - P2).max() <= 1e-9
    xi, eta = m.xi1[sc.labels], m.eta1[sc.labels]
    assert np.abs(surface.depth(xi, eta) - m.rho1[sc.labels]).max() <= 1e-12


@pytest.mark.parametrize("surface", [FrontoPlane(2.0), Ramp(2.2, 0.5, 0.3), SmoothHeightfield(3, 0.25)])
def test_label_soundness(surface):
    sig_px, sig_d = 0.5, 0.005
    bad_out = n_out = 0
    for seed in range(4):
        sc = generate(SceneConfig(outlier_ratio=0.7, seed=seed, surface=surface,
                                  pixel_noise_sigma=sig_px, depth_noise_sigma=sig_d))
        m, pose = sc.matches, sc.true_pose
        P1, P2 = m.points1(), m.points2()
        C = (np.einsum("ij,njk,lk->nil", pose.rotation, point_covariance(P1, INTR.fx, sig_px, sig_d), pose.rotation)
             + point_covariance(P2, INTR.fx, sig_px, sig_d))
        r = pose.apply(P1) - P2
        # Mahalanobis length; 6 sigma in 3 dof leaves a tail below 1e-7
        d = np.sqrt(np.einsum("ni,ni->n", r, np.linalg.solve(C, r[..., None])[..., 0]))
        assert np.all(d[sc.labels] <= 6)
        bad_out += int((d[~sc.labels] <= 6).sum())
        n_out += int((~sc.labels).sum())
    assert bad_out / n_out <= 1e-3


def test_rank_probability_non_increasing():
    ms = np.arange(25, 501, 25)
    acc = np.zeros(ms.size)
    for seed in range(100):
        lab = generate(SceneConfig(outlier_ratio=0.8, seed=seed, n_points=500)).labels
        acc += np.array([lab[:m].mean() for m in ms])
    acc /= 100
    assert np.all(np.diff(acc) <= 0)


def test_two_planes_gradient_failures_at_split_only():
    surf = TwoPlanes(1.0, 3.0, 0.0)
    d = render_depth1(surf, INTR, 640, 480)
    gx, gy = depth_gradient_grid(d, INTR)
    v, u = np.nonzero(np.isfinite(gx) & ((np.abs(gx) > 1e-9) | (np.abs(gy) > 1e-9)))
    split_u = INTR.cx
    assert u.size > 0
    assert np.all(np.abs(u - split_u) <= 1.0)


# -- surfaces ---------------------------------------------------------------

def _visible_points(surface, pose, rs, n=2000):
    xi = rs.uniform(-0.55, 0.55, n)
    eta = rs.uniform(-0.4, 0.4, n)
    rho = surface.depth(xi, eta)
    X2 = pose.apply(np.stack([xi * rho, eta * rho, rho], 1))
    return X2


@pytest.mark.parametrize("surface", [FrontoPlane(2.0), Ramp(2.2, 0.5, 0.3), SmoothHeightfield(3, 0.25),
                                     SmoothHeightfield(8, 0.3, base=2.0)])
def test_raycast_hits_surface(surface, rs):
    X2 = _visible_points(surface, POSE, rs)
    t = surface.raycast(POSE, X2[:, 0] / X2[:, 2], X2[:, 1] / X2[:, 2])
    hit = np.isfinite(t)
    assert hit.mean() > 0.99
    # first hit is never behind the generating point
    assert np.all(t[hit] <= X2[hit, 2] * (1 + 1e-9))
    a = np.stack([X2[:, 0] / X2[:, 2], X2[:, 1] / X2[:, 2], np.ones(len(X2))], 1) * t[:, None]
    X1 = POSE.inverse().apply(a[hit])
    assert np.abs(surface.depth(X1[:, 0] / X1[:, 2], X1[:, 1] / X1[:, 2]) - X1[:, 2]).max() <= 1e-9


def test_generic_raycast_matches_closed_forms(rs):
    X2 = rs.uniform(-0.5, 0.5, (3000, 2))
    for surf in (Ramp(2.2, 0.5, 0.3), Ramp(1.8, -0.4, 0.2)):
        fast = surf.raycast(POSE, X2[:, 0], X2[:, 1])
        slow = Surface.raycast(surf, POSE, X2[:, 0], X2[:, 1])
        both = np.isfinite(fast) & np.isfinite(slow)
        assert both.mean() > 0.99
        assert np.abs(fast[both] - slow[both]).max() <= 1e-9


def test_heightfield_gradient_analytic(rs):
    surf = SmoothHeightfield(5, 0.3)
    xi, eta = rs.uniform(-0.5, 0.5, (2, 100))
    h = 1e-6
    gx, gy = surf.gradient(xi, eta)
    assert np.allclose(gx, (surf.depth(xi + h, eta) - surf.depth(xi - h, eta)) / (2 * h), atol=1e-6)
    assert np.allclose(gy, (surf.depth(xi, eta + h) - surf.depth(xi, eta - h)) / (2 * h), atol=1e-6)


# -- serialisation ------------------------------------------------------------

def test_scene_file_roundtrip(tmp_path):
    sc = generate(SceneConfig(outlier_ratio=0.6, seed=9, pixel_noise_sigma=0.5, depth_noise_sigma=0.005))
    path = tmp_path / "scene.txt"
    save_scene(sc, path)
    cf = load_scene(path)
    for col in ("xi1", "eta1", "rho1", "xi2", "eta2", "rho2", "similarity"):
        assert np.array_equal(getattr(cf.matches, col), getattr(sc.matches, col))
    assert np.array_equal(cf.labels, sc.labels)
    assert cf.intrinsics == sc.intrinsics and (cf.width, cf.height) == (640, 480)
    assert np.array_equal(cf.pose.matrix(), sc.true_pose.matrix())


def test_parse_without_labels_or_header():
    cf = parse_scene("0 0 2 0 0 2 0.9\n0.1 0 2 0.1 0 2 0.8\n")
    assert len(cf.matches) == 2 and cf.labels is None and cf.pose is None


@pytest.mark.parametrize("text,line", [
    ("# gdc-scene v1\n" + "0 0 2 0 0 2 0.9 1\n" * 5 + "0 0 2 0 0 x 0.9 1\n", 7),
    ("0 0 2 0 0 2\n", 1),
    ("0 0 2 0 0 2 0.9 1\n0 0 2 0 0 2 0.9\n", 2),
    ("0 0 2 0 0 2 0.9 2\n", 1),
    ("# intrinsics 1 2 3\n", 1),
])
def test_parse_errors_name_line(text, line):
    with pytest.raises(ParseError) as exc:
        parse_scene(text, "f.txt")
    assert exc.value.line == line
    assert f"line {line}" in str(exc.value)


def test_missing_file(tmp_path):
    with pytest.raises(ParseError):
        load_scene(tmp_path / "nope.txt")


# -- oracles ----------------------------------------------------------------

def test_level_set_oracle_circle():
    D = 2.0
    depth = np.full((480, 640), D)
    ref = INTR.feature_at(319.5, 239.5, D)
    rm = build_radial_map(depth, INTR, ref)
    rs = np.random.default_rng(4)
    for _ in range(50):
        r_px = rs.uniform(20, 200)
        phi = (D * r_px / INTR.fx) ** 2
        q = (319.5 + rs.uniform(-150, 150), 239.5 + rs.uniform(-150, 150))
        d = math.hypot(q[0] - 319.5, q[1] - 239.5)
        assert abs(oracle_level_set_distance(rm, phi, q) - abs(d - r_px)) <= 0.5


def test_level_set_oracle_on_curve_and_missing():
    depth = np.full((60, 80), 2.0)
    rm = build_radial_map(depth, INTR, INTR.feature_at(40, 30, 2.0))
    q = (52, 30)
    assert oracle_level_set_distance(rm, rm.values[30, 52], q) <= 0.5
    with pytest.raises(LevelSetNotFound):
        oracle_level_set_distance(rm, 1e6, q)


def _cloud_matches(P, Q):
    return Matches(P[:, 0] / P[:, 2], P[:, 1] / P[:, 2], P[:, 2], Q[:, 0] / Q[:, 2], Q[:, 1] / Q[:, 2], Q[:, 2])


def test_exhaustive_oracle_basics(rs):
    P = rs.uniform(-1, 1, (3, 3)) + [0, 0, 3]
    pose = oracle_exhaustive_pose(_cloud_matches(P, POSE.apply(P)))
    assert np.abs(pose.matrix() - POSE.matrix()).max() <= 1e-9
    line = np.array([[0, 0, 2.0], [0.1, 0, 2.0], [0.2, 0, 2.0], [0.3, 0, 2.0]])
    with pytest.raises(NoValidHypothesis):
        exhaustive_search(_cloud_matches(line, line))
    with pytest.raises(ValueError):
        exhaustive_search(_cloud_matches(*(rs.uniform(1, 2, (2, 30, 3)))))
