import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gdcransac.errors import BehindCamera, LengthMismatch, OutOfFrame, ParseError
from gdcransac.geometry import CameraIntrinsics, Feature, Pose, rotation_about
from gdcransac.gt import (Basis, Confusion, GtThresholds, Label, evaluate_against_manual, format_labeled,
                          label_match, label_matches, parse_labels, range_depth_ok, read_labels, reproject)
from gdcransac.synthetic import (Ramp, SceneConfig, SmoothHeightfield, generate, occluding_contour_cases,
                                 render_depth1, render_depth2)

INTR = CameraIntrinsics.tum_default()
IDENT = Pose.identity()


def test_threshold_validation():
    for bad in (dict(tau_gamma=0), dict(tau_rho=-1), dict(tau_s=0)):
        with pytest.raises(ValueError):
            GtThresholds(**bad)
    assert GtThresholds() == GtThresholds(8.0, 0.01, 0.4)


def test_reproject_identity_exact():
    f = INTR.feature_at(123.25, 77.5, 2.5)
    r = reproject(f, IDENT, INTR)
    assert (r.gamma_hat.xi, r.gamma_hat.eta, r.gamma_hat.rho) == (f.xi, f.eta, f.rho)


def test_reproject_axial_translation():
    f = Feature(0.0, 0.0, 3.0)
    r = reproject(f, Pose(np.eye(3), [0, 0, -1.0]), INTR)
    assert r.gamma_hat.rho == 2.0 and r.gamma_hat.xi == 0.0 and r.gamma_hat.eta == 0.0
    assert r.pixel == (INTR.cx, INTR.cy)


def test_reproject_errors():
    with pytest.raises(BehindCamera):
        reproject(Feature(0.0, 0.0, 1.0), Pose(np.eye(3), [0, 0, -2.0]), INTR)
    with pytest.raises(OutOfFrame):
        reproject(Feature(0.0, 0.0, 1.0), Pose(np.eye(3), [1.0, 0, 0]), INTR)
    with pytest.raises(ValueError):
        reproject(Feature(0.0, 0.0, float("nan")), IDENT, INTR)


def test_ranges_contain_point_depths():
    surf = SmoothHeightfield(4, 0.3)
    pose = Pose(rotation_about([0, 1, 0], 0.05), [0.05, 0, 0.02])
    d1 = render_depth1(surf, INTR, 640, 480)
    d2 = render_depth2(surf, pose, INTR, 640, 480)
    f1 = INTR.feature_at(300, 200, d1[200, 300])
    r = reproject(f1, pose, INTR, d1, d2, f1, intrinsics1=INTR)
    for lo, hi in (r.depth_range_source, r.depth_range_target):
        assert lo <= hi
    assert r.depth_range_source[0] <= r.gamma_hat.rho <= r.depth_range_source[1]
    assert r.depth_range_target[0] <= f1.rho <= r.depth_range_target[1]


def _scene(seed, noise=True, e=0.6):
    kw = dict(pixel_noise_sigma=0.5, depth_noise_sigma=0.003) if noise else {}
    sc = generate(SceneConfig(outlier_ratio=e, seed=seed, surface=SmoothHeightfield(seed, 0.25), **kw))
    d1 = render_depth1(sc.config.surface, INTR, 640, 480)
    d2 = render_depth2(sc.config.surface, sc.true_pose, INTR, 640, 480)
    return sc, d1, d2


def test_noiseless_veridical_direct_depth():
    sc, d1, d2 = _scene(0, noise=False, e=0.0)
    m = sc.matches
    m = type(m)(m.xi1, m.eta1, m.rho1, m.xi2, m.eta2, m.rho2, np.ones(len(m)))
    labs = label_matches(m, sc.true_pose, d1, d2, INTR)
    assert all(x.label is Label.VERIDICAL and x.basis is Basis.DIRECT_DEPTH for x in labs)


def test_generator_labels_as_manual():
    conf = Confusion(0, 0, 0, 0)
    for seed in range(3):
        sc, d1, d2 = _scene(seed)
        m = sc.matches
        # similarity is a matcher cue; keep it above tau_s so the geometry decides
        m = type(m)(m.xi1, m.eta1, m.rho1, m.xi2, m.eta2, m.rho2, np.ones(len(m)))
        c = evaluate_against_manual(label_matches(m, sc.true_pose, d1, d2, INTR), sc.labels)
        conf = Confusion(*(a + b for a, b in zip(conf, c)))
    assert conf.error_rate <= 0.02
    assert conf.tp > 0 and conf.tn > 0


def test_generator_inliers_reproject_within_tau():
    sc, _, _ = _scene(1)
    m = sc.matches
    for c in [c for c, lab in zip(m.to_correspondences(), sc.labels) if lab][:200]:
        r = reproject(c.f1, sc.true_pose, INTR)
        u2, v2 = INTR.normalized_to_pixel(c.f2.xi, c.f2.eta)
        assert np.hypot(u2 - r.pixel[0], v2 - r.pixel[1]) < GtThresholds().tau_gamma


def test_occluding_contour_straddling():
    cc = occluding_contour_cases(n=200, seed=0)
    labs = label_matches(cc.straddling, cc.pose, cc.depth1, cc.depth2, cc.intrinsics)
    assert all(x.basis is not Basis.DIRECT_DEPTH for x in labs)
    recall = np.mean([x.veridical and x.basis is Basis.OCCLUSION_RANGE for x in labs])
    assert recall >= 0.95


def test_occluding_contour_hidden_invalid():
    cc = occluding_contour_cases(n=200, seed=1)
    labs = label_matches(cc.hidden, cc.pose, cc.depth1, cc.depth2, cc.intrinsics)
    assert all(x.label is Label.INVALID for x in labs)
    # they are near in the image, so the depth test is what rejects them
    assert np.mean([x.basis is Basis.OCCLUSION_RANGE for x in labs]) >= 0.95


def test_similarity_reject():
    f = INTR.feature_at(320, 240, 2.0)
    d = np.full((480, 640), 2.0)
    x = label_match(f, f, IDENT, d, d, 0.39, intrinsics=INTR)
    assert x.label is Label.INVALID and x.basis is Basis.SIMILARITY_REJECT
    x = label_match(f, f, IDENT, d, d, 0.4, intrinsics=INTR)
    assert x.veridical and x.basis is Basis.DIRECT_DEPTH


def test_reproject_reject_and_invalid_depth():
    d = np.full((480, 640), 2.0)
    f = INTR.feature_at(320, 240, 2.0)
    g = INTR.feature_at(329, 240, 2.0)
    assert label_match(f, g, IDENT, d, d, 1.0, intrinsics=INTR).basis is Basis.REPROJECT_REJECT
    bad = Feature(f.xi, f.eta, float("nan"))
    assert label_match(bad, f, IDENT, d, d, 1.0, intrinsics=INTR).basis is Basis.REPROJECT_REJECT


def test_identity_self_match_idempotent():
    surf = Ramp(2.0, 0.4, -0.3)
    d = render_depth1(surf, INTR, 640, 480)
    rs = np.random.default_rng(0)
    for _ in range(200):
        u, v = rs.integers(0, 640), rs.integers(0, 480)
        f = INTR.feature_at(float(u), float(v), float(d[v, u]))
        s = rs.uniform(0.4, 1.0)
        assert label_match(f, f, IDENT, d, d, s, intrinsics=INTR).veridical


@settings(max_examples=60)
@given(lo=st.floats(0.5, 5), w=st.floats(0, 1), off=st.floats(-1, 1), w2=st.floats(0, 1),
       s=st.floats(0, 1), t=st.floats(0, 1), tau=st.floats(1e-3, 0.1))
def test_range_subsumption(lo, w, off, w2, s, t, tau):
    src = (lo, lo + w)
    tgt = (max(lo + off, 0.1), max(lo + off, 0.1) + w2)
    a = src[0] + s * (src[1] - src[0])
    b = tgt[0] + t * (tgt[1] - tgt[0])
    # any pair of members passing the direct test implies the range test passes
    if 2 * abs(a - b) / (a + b) < tau:
        assert range_depth_ok(src, tgt, tau)
    assert range_depth_ok(src, src, tau)


def test_subsumption_on_scene():
    sc, d1, d2 = _scene(2)
    th = GtThresholds()
    for c in sc.matches.to_correspondences()[:300]:
        try:
            r = reproject(c.f1, sc.true_pose, INTR, d1, d2, c.f2, th.tau_gamma, INTR)
        except (BehindCamera, OutOfFrame):
            continue
        if 2 * abs(c.f2.rho - r.gamma_hat.rho) / (c.f2.rho + r.gamma_hat.rho) < th.tau_rho:
            assert range_depth_ok(r.depth_range_source, r.depth_range_target, th.tau_rho)


@pytest.mark.parametrize("seed", [3, 4])
def test_threshold_monotonicity(seed):
    sc, d1, d2 = _scene(seed)
    m = sc.matches
    base = GtThresholds(4.0, 0.005, 0.4)
    ref = label_matches(m, sc.true_pose, d1, d2, INTR, base)
    for th in (GtThresholds(8.0, 0.005, 0.4), GtThresholds(4.0, 0.02, 0.4), GtThresholds(12.0, 0.05, 0.4)):
        new = label_matches(m, sc.true_pose, d1, d2, INTR, th)
        assert all(b.veridical for a, b in zip(ref, new) if a.veridical)
        assert sum(b.veridical for b in new) >= sum(a.veridical for a in ref)


def test_confusion_trivial():
    lab = np.array([1, 0, 1, 1, 0, 0, 1], dtype=bool)
    assert evaluate_against_manual(lab, lab) == Confusion(4, 0, 0, 3)
    assert evaluate_against_manual(~lab, lab) == Confusion(0, 3, 4, 0)
    assert Confusion(0, 3, 4, 0).error_rate == 1.0
    with pytest.raises(LengthMismatch):
        evaluate_against_manual(lab[:-1], lab)


def test_label_file_parsing(tmp_path):
    assert parse_labels("# manual\n1 0\n0 1\n2 1  # note\n").tolist() == [True, False, True]
    for text, line in (("0 1\n1 2\n", 2), ("0 1\nx 1\n", 2), ("0 1\n0 0\n", 2), ("0\n", 1)):
        with pytest.raises(ParseError) as exc:
            parse_labels(text)
        assert exc.value.line == line
    with pytest.raises(ParseError):
        parse_labels("0 1\n2 1\n")
    p = tmp_path / "m.txt"
    p.write_text("0 1\n1 0\n")
    assert read_labels(p).tolist() == [True, False]
    with pytest.raises(ParseError):
        read_labels(tmp_path / "missing.txt")


def test_format_labeled():
    d = np.full((480, 640), 2.0)
    f = INTR.feature_at(320, 240, 2.0)
    x = label_match(f, f, IDENT, d, d, 1.0, intrinsics=INTR, index=5)
    assert format_labeled([x]) == "5 1 DirectDepth\n"
