"""``gdcransac`` command line: estimate, profile, gt, simulate, rpe.

Exit codes: 0 success, 1 I/O or parse error, 2 no valid hypothesis,
64 usage error (unknown flag, bad value).
"""
import argparse
import csv
import hashlib
import io
import json
import math
import platform
import sys
import time

import numpy as np

from . import __version__
from . import dataset, gt
from ._backend import resolve
from .errors import ConfigError, DomainError, GdcError, NoValidHypothesis, NoVeridicalReference, ParseError
from .geometry import CameraIntrinsics
from .ransac import analytics
from .ransac.estimator import attach_gradients, empirical_outlier_reduction, estimate
from .ransac.types import CostModel, RansacConfig, Strategy
from .rng import mix64

EXIT_OK = 0
EXIT_IO = 1
EXIT_NO_HYPOTHESIS = 2
EXIT_USAGE = 64

PROFILE_BINS = ((0.60, 0.70), (0.70, 0.80), (0.80, 0.90), (0.90, 0.95), (0.95, 0.99))
PROFILE_HEADER = (
    "bin,strategy,e_upper,e_measured,e1_measured,e2_measured,e_bar_measured,"
    "n_closed_form,n_strategy_closed_form,mu,nu,iterations_mean,passed_filter_mean,"
    "evaluated_mean,success_rate,predicted_cost_ms,wall_time_ms,manifest_hash"
)
RPE_HEADER = "kind,t_from_s,t_to_s,rot_deg,trans_m,manifest_hash"
SUCCESS_ROT_DEG = 0.5
SUCCESS_TRANS_M = 0.05


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# -- manifest -----------------------------------------------------------------

def _versions():
    import numba
    return {"gdcransac": __version__, "numpy": np.__version__, "numba": numba.__version__,
            "python": platform.python_version()}


def _file_digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def run_manifest(command, config, seed, inputs=(), backend=None):
    """Config snapshot plus versions and input digests; ``hash`` is over everything else."""
    m = {
        "command": command,
        "config": config,
        "seed": int(seed),
        "backend": resolve(backend),
        "versions": _versions(),
        "inputs": {str(p): _file_digest(p) for p in inputs},
    }
    m["hash"] = manifest_hash(m)
    return m


def manifest_hash(manifest):
    body = {k: v for k, v in manifest.items() if k != "hash"}
    blob = json.dumps(body, sort_keys=True, separators=(",", ":"), allow_nan=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _emit(text, out):
    if out:
        with open(out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _json(obj):
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


# -- shared flags -------------------------------------------------------------

def _add_ransac_flags(p):
    p.add_argument("--strategy", default="classic", choices=[s.value for s in Strategy])
    p.add_argument("--p", type=float, default=0.99, help="success probability for the iteration bound")
    p.add_argument("--tau-inlier", type=float, default=0.02, help="3D inlier threshold (m)")
    p.add_argument("--tau-gdc", type=float, default=None,
                   help="filter threshold (relative residual, or normalised-plane distance in prop1 mode)")
    p.add_argument("--gdc-mode", default="residual", choices=["residual", "prop1"])
    p.add_argument("--m1", type=int, default=100)
    p.add_argument("--m2", type=int, default=150)
    p.add_argument("--m", type=int, default=250)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-iters", type=int, default=100_000)
    p.add_argument("--refine", action="store_true", help="covariance-weighted refit on the consensus set")
    p.add_argument("--backend", choices=["numba", "numpy"], default=None)


def _config_from(args, n=None, focal_px=525.0):
    cfg = RansacConfig(p=args.p, M=args.m, M1=args.m1, M2=args.m2, strategy=args.strategy,
                       tau_inlier=args.tau_inlier, tau_gdc=args.tau_gdc, gdc_test_mode=args.gdc_mode,
                       max_iterations=args.max_iters, seed=args.seed, refine=args.refine,
                       focal_px=focal_px)
    return cfg.clamped(n) if n is not None else cfg


def _rpe_dict(est, ref):
    rot, trans = dataset.relative_pose_error(est, ref)
    return {"rot_deg": rot, "trans_m": trans,
            "success": bool(rot < SUCCESS_ROT_DEG and trans < SUCCESS_TRANS_M)}


# -- commands -----------------------------------------------------------------

def cmd_estimate(args):
    cf = dataset.load_correspondences(args.corr_file)
    intr = cf.intrinsics or CameraIntrinsics.tum_default()
    matches = cf.matches
    inputs = [args.corr_file]
    if args.depth2:
        matches = attach_gradients(matches, dataset.read_depth_png(args.depth2, intr), intr)
        inputs.append(args.depth2)
    cfg = _config_from(args, len(matches), intr.fx)
    manifest = run_manifest("estimate", cfg.to_dict(), args.seed, inputs, args.backend)
    report = estimate(matches, cfg, backend=args.backend)
    out = {"manifest": manifest, "manifest_hash": manifest["hash"], "report": report.to_dict()}
    if cf.pose is not None:
        out["rpe_vs_file_pose"] = _rpe_dict(report.pose, cf.pose)
    _emit(_json(out), args.out)
    return EXIT_OK


def _profile_rows(args, manifest):
    from .synthetic import SceneConfig, generate
    strategies = [Strategy(s) for s in args.strategies]
    bins = [PROFILE_BINS[i] for i in args.bins]
    rows = []
    for bi, (lo, hi) in zip(args.bins, bins):
        e_scene = 0.5 * (lo + hi)
        scenes = []
        for t in range(args.trials):
            seed = mix64((args.seed << 16) ^ (bi << 8) ^ t) & ((1 << 63) - 1)
            cfg = SceneConfig(n_points=args.n_points, outlier_ratio=e_scene, top_m=args.m,
                              pixel_noise_sigma=args.pixel_noise, depth_noise_sigma=args.depth_noise,
                              seed=int(seed))
            scenes.append(generate(cfg))
        # measured ratios over all trials
        e_m, e1_m, e2_m, ebar_m = [], [], [], []
        for sc in scenes:
            out = ~sc.labels
            e_m.append(out[:args.m].mean())
            e1_m.append(out[:args.m1].mean())
            e2_m.append(out[:args.m2].mean())
            probe = RansacConfig(M=min(args.m, len(sc.matches)), M1=1, M2=1,
                                 gdc_test_mode=args.gdc_mode, tau_gdc=args.tau_gdc)
            try:
                ebar_m.append(empirical_outlier_reduction(sc.matches, sc.labels, probe,
                                                          max_references=20)[1])
            except NoVeridicalReference:
                pass
        e, e1, e2 = float(np.mean(e_m)), float(np.mean(e1_m)), float(np.mean(e2_m))
        e2 = min(e2, e)
        e1 = min(e1, e2)
        ebar = float(np.mean(ebar_m)) if ebar_m else math.nan
        n_cf = analytics.required_iterations(args.p, hi, 3)
        for strat in strategies:
            closed, mu, nu = _strategy_bounds(strat, args.p, e, e1, e2, ebar)
            its, passed, evaluated, ok, wall = [], [], [], 0, 0.0
            for t, sc in enumerate(scenes):
                cfg = RansacConfig(p=args.p, M=args.m, M1=args.m1, M2=args.m2, strategy=strat,
                                   tau_inlier=args.tau_inlier, tau_gdc=args.tau_gdc,
                                   gdc_test_mode=args.gdc_mode, max_iterations=args.max_iters,
                                   seed=args.seed + t, refine=args.refine).clamped(len(sc.matches))
                t0 = time.perf_counter()
                try:
                    rep = estimate(sc.matches, cfg, backend=args.backend)
                except NoValidHypothesis:
                    wall += time.perf_counter() - t0
                    its.append(cfg.max_iterations)
                    passed.append(0)
                    evaluated.append(0)
                    continue
                wall += time.perf_counter() - t0
                its.append(rep.hypotheses_formed)
                passed.append(rep.hypotheses_passed_filter)
                evaluated.append(rep.hypotheses_evaluated)
                ok += _rpe_dict(rep.pose, sc.true_pose)["success"]
            model = CostModel.gdc() if strat.uses_filter else CostModel.classic()
            cost = analytics.predict_cost(float(np.mean(its)), float(np.mean(evaluated)), model)
            rows.append([
                f"{int(round(lo * 100))}-{int(round(hi * 100))}", strat.value, hi, e, e1, e2, ebar,
                n_cf, closed, mu, nu, float(np.mean(its)), float(np.mean(passed)),
                float(np.mean(evaluated)), ok / len(scenes), cost * 1e3,
                wall / len(scenes) * 1e3, manifest["hash"],
            ])
    return rows


def _strategy_bounds(strat, p, e, e1, e2, ebar):
    """Closed-form iteration bound for one strategy at measured ratios, with μ and ν."""
    s = 3
    have_bar = math.isfinite(ebar)
    mu = analytics.filter_savings_mu(e, min(ebar, e), s) if have_bar else math.nan
    nu = math.nan
    if strat.nesting == 1:
        nu = analytics.nesting_savings_nu(e1, None, e, s)
    elif strat.nesting == 2:
        nu = analytics.nesting_savings_nu(e1, e2, e, s)
    eb = min(ebar, e) if have_bar else e
    if strat is Strategy.CLASSIC:
        n = analytics.required_iterations(p, e, s)
    elif strat is Strategy.GDC_FILTERED:
        n = analytics.required_iterations(p, eb, s) if have_bar else math.nan
    elif strat is Strategy.NESTED:
        n = analytics.nested_iterations(p, e1, e, s)
    elif strat is Strategy.DOUBLY_NESTED:
        n = analytics.doubly_nested_iterations(p, e1, e2, e, s)
    elif strat is Strategy.GDC_NESTED:
        n = analytics.iterations_for_probability(p, (1 - e1) * (1 - eb) ** (s - 1))
    else:
        n = analytics.iterations_for_probability(p, (1 - e1) * (1 - min(e2, eb)) * (1 - eb) ** (s - 2))
    return n, mu, nu


def _fmt_cell(v):
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


def cmd_profile(args):
    if args.trials < 1:
        raise ConfigError("--trials must be positive")
    if any(not 0 <= b < len(PROFILE_BINS) for b in args.bins):
        raise ConfigError(f"--bins entries must lie in 0..{len(PROFILE_BINS) - 1}")
    snap = {"p": args.p, "M": args.m, "M1": args.m1, "M2": args.m2, "tau_inlier": args.tau_inlier,
            "tau_gdc": args.tau_gdc, "gdc_mode": args.gdc_mode, "max_iterations": args.max_iters,
            "trials": args.trials, "n_points": args.n_points, "pixel_noise": args.pixel_noise,
            "depth_noise": args.depth_noise, "strategies": list(args.strategies),
            "bins": list(args.bins), "refine": args.refine}
    manifest = run_manifest("profile", snap, args.seed, (), args.backend)
    rows = _profile_rows(args, manifest)
    buf = io.StringIO()
    buf.write(PROFILE_HEADER + "\n")
    w = csv.writer(buf, lineterminator="\n")
    for r in rows:
        w.writerow([_fmt_cell(v) for v in r])
    _emit(buf.getvalue(), args.out)
    return EXIT_OK


def _gt_pose(args, cf):
    if args.trajectory:
        if args.t1 is None or args.t2 is None:
            raise ConfigError("--trajectory needs --t1 and --t2")
        traj = dataset.load_trajectory(args.trajectory)

        def nearest(t):
            e = min(traj, key=lambda x: abs(x.timestamp - t))
            if abs(e.timestamp - t) > dataset.ASSOC_TOLERANCE:
                raise ConfigError(f"no trajectory entry within {dataset.ASSOC_TOLERANCE} s of {t}")
            return e.pose
        return dataset.relative_motion(nearest(args.t1), nearest(args.t2))
    if cf.pose is None:
        raise ConfigError("no ground-truth pose: pass --trajectory or use a file with a pose header")
    return cf.pose


def cmd_gt(args):
    cf = dataset.load_correspondences(args.corr_file)
    intr = cf.intrinsics or CameraIntrinsics.tum_default()
    d1 = dataset.read_depth_png(args.depth1, intr)
    d2 = dataset.read_depth_png(args.depth2, intr)
    pose = _gt_pose(args, cf)
    th = gt.GtThresholds(args.tau_gamma, args.tau_rho, args.tau_s)
    labeled = gt.label_matches(cf.matches, pose, d1, d2, intr, th)
    _emit(gt.format_labeled(labeled), args.out)
    if args.manual:
        conf = gt.evaluate_against_manual(labeled, gt.read_labels(args.manual))
        inputs = [p for p in (args.corr_file, args.depth1, args.depth2, args.trajectory, args.manual) if p]
        manifest = run_manifest("gt", {"tau_gamma": th.tau_gamma, "tau_rho": th.tau_rho,
                                       "tau_s": th.tau_s}, args.seed, inputs)
        res = {"tp": conf.tp, "fp": conf.fp, "fn": conf.fn, "tn": conf.tn,
               "error_rate": conf.error_rate, "manifest_hash": manifest["hash"]}
        text = _json(res)
        if args.confusion_out:
            _emit(text, args.confusion_out)
        elif args.out:
            sys.stdout.write(text)
        else:
            # labels already went to stdout
            sys.stderr.write(text)
    return EXIT_OK


def _surface(args):
    from .synthetic import FrontoPlane, Ramp, SmoothHeightfield, TwoPlanes
    if args.surface == "plane":
        return FrontoPlane(2.0)
    if args.surface == "ramp":
        return Ramp(2.2, 0.5, 0.3)
    if args.surface == "heightfield":
        return SmoothHeightfield(args.seed, 0.25)
    return TwoPlanes(1.0, 3.0, 0.0)


def cmd_simulate(args):
    from .synthetic import SceneConfig, format_scene, generate
    cfg = SceneConfig(n_points=args.n_points, outlier_ratio=args.outlier_ratio,
                      pixel_noise_sigma=args.pixel_noise, depth_noise_sigma=args.depth_noise,
                      surface=_surface(args), seed=args.seed, top_m=args.top_m)
    sc = generate(cfg)
    text = format_scene(sc.matches, sc.labels, sc.intrinsics, sc.true_pose, cfg.width, cfg.height)
    _emit(text, args.out)
    if args.depth1_out:
        dataset.write_depth_png(args.depth1_out, sc.depth1, sc.intrinsics)
    if args.depth2_out:
        dataset.write_depth_png(args.depth2_out, sc.depth2, sc.intrinsics)
    return EXIT_OK


def cmd_rpe(args):
    est = dataset.load_trajectory(args.est)
    ref = dataset.load_trajectory(args.gt)
    rows = dataset.trajectory_rpe(est, ref, args.delta, args.tolerance)
    summ = dataset.summarise_rpe(rows)
    manifest = run_manifest("rpe", {"delta": args.delta, "tolerance_s": args.tolerance},
                            args.seed, [args.est, args.gt])
    h = manifest["hash"]
    buf = io.StringIO()
    buf.write(RPE_HEADER + "\n")
    w = csv.writer(buf, lineterminator="\n")
    for r in rows:
        w.writerow(["pair", repr(r.t_from), repr(r.t_to), repr(r.rot_deg), repr(r.trans_m), h])
    for kind in ("rmse", "mean", "median", "max"):
        w.writerow([kind, "", "", _fmt_cell(getattr(summ, f"rot_{kind}")),
                    _fmt_cell(getattr(summ, f"trans_{kind}")), h])
    _emit(buf.getvalue(), args.out)
    return EXIT_OK


# -- parser -------------------------------------------------------------------

def build_parser():
    ap = _Parser(prog="gdcransac", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"gdcransac {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("estimate", help="robust relative pose from a correspondence file")
    p.add_argument("corr_file")
    _add_ransac_flags(p)
    p.add_argument("--depth2", help="frame-2 16-bit depth PNG (gradients for --gdc-mode prop1)")
    p.add_argument("--out")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("profile", help="iteration/cost sweep over outlier-ratio bins (CSV)")
    _add_ransac_flags(p)
    p.add_argument("--strategies", nargs="+", default=["classic", "gdc-filtered", "gdc-doubly-nested"],
                   choices=[s.value for s in Strategy])
    p.add_argument("--bins", nargs="+", type=int, default=list(range(len(PROFILE_BINS))),
                   help="bin indices: 0=60-70 1=70-80 2=80-90 3=90-95 4=95-99")
    p.add_argument("--trials", type=int, default=3)
    p.add_argument("--n-points", type=int, default=500)
    p.add_argument("--pixel-noise", type=float, default=0.5)
    p.add_argument("--depth-noise", type=float, default=0.005)
    p.add_argument("--out")
    p.set_defaults(func=cmd_profile, max_iters=20_000)

    p = sub.add_parser("gt", help="label correspondences from a known pose and depth maps")
    p.add_argument("corr_file")
    p.add_argument("--depth1", required=True)
    p.add_argument("--depth2", required=True)
    p.add_argument("--trajectory", help="groundtruth.txt; with --t1/--t2 gives the relative pose")
    p.add_argument("--t1", type=float)
    p.add_argument("--t2", type=float)
    p.add_argument("--manual", help="manual labels, '<index> <0|1>' per line")
    p.add_argument("--tau-gamma", type=float, default=8.0)
    p.add_argument("--tau-rho", type=float, default=0.01)
    p.add_argument("--tau-s", type=float, default=0.4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.add_argument("--confusion-out")
    p.set_defaults(func=cmd_gt)

    p = sub.add_parser("simulate", help="write a synthetic scene file")
    p.add_argument("--n-points", type=int, default=500)
    p.add_argument("--outlier-ratio", type=float, default=0.7)
    p.add_argument("--pixel-noise", type=float, default=0.5)
    p.add_argument("--depth-noise", type=float, default=0.005)
    p.add_argument("--surface", choices=["plane", "ramp", "heightfield", "two-planes"], default="plane")
    p.add_argument("--top-m", type=int, default=250)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.add_argument("--depth1-out")
    p.add_argument("--depth2-out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("rpe", help="relative pose error between two TUM trajectories (CSV)")
    p.add_argument("--est", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--delta", type=int, default=1)
    p.add_argument("--tolerance", type=float, default=dataset.ASSOC_TOLERANCE)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_rpe)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except NoValidHypothesis as exc:
        print(f"gdcransac: no valid hypothesis: {exc}", file=sys.stderr)
        return EXIT_NO_HYPOTHESIS
    except (ConfigError, DomainError) as exc:
        print(f"gdcransac: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ParseError, OSError) as exc:
        print(f"gdcransac: {exc}", file=sys.stderr)
        return EXIT_IO
    except GdcError as exc:
        print(f"gdcransac: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
