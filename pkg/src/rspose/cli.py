"""``rspose`` command-line entry point.

Exit status: 0 on success, 1 when the data or computation fails, 2 for
usage and configuration errors (including unreadable input files).
"""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import imageio, rectify, simgen, solver, stereo
from .config import ConfigError, RunConfig, load_config, load_motion, load_scene, motion_text, serialize_config
from .geom import FrameId, MotionVelocity

log = logging.getLogger("rspose")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _config(args) -> RunConfig:
    return load_config(args.config) if args.config else RunConfig()


def _seed(args, cfg: RunConfig) -> int:
    return cfg.seed if args.seed is None else args.seed


def _require_file(path, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"{what} not found: {p}")
    return p


def _sibling(out: Path, suffix: str) -> Path:
    return out.with_name(out.stem + suffix)


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(args) -> int:
    cfg = _config(args)
    if args.trials is not None:
        if args.trials < 1:
            raise UsageError("--trials must be >= 1")
        cfg = replace(cfg, trials=args.trials)
    cfg = replace(cfg, seed=_seed(args, cfg))
    spec = cfg.sweep(args.sweep)
    out = Path(args.out)
    points = simgen.run_sweep(spec, progress=lambda var, v: log.info("%s = %g done", var, v))
    out.write_text(simgen.sweep_csv(spec, points))
    svg = out.with_suffix(".svg")
    svg.write_text(simgen.sweep_svg(spec, points))
    print(f"{'value':>10} {'solver':>6} {'mean_eT':>12} {'mean_eR':>12} {'fail':>5}")
    for sp in points:
        for s in ("RS", "GS"):
            eT, eR = sp.mean(s)
            print(f"{sp.value:>10.4g} {s:>6} {eT:>12.4e} {eR:>12.4e} {sp.failures[s]:>5}")
    print(f"wrote {out} and {svg}")
    return EXIT_OK


def solve_report(est: solver.MotionEstimate, ransac: solver.RansacResult | None = None) -> str:
    """Text report that doubles as a motion file (diagnostics are comments)."""
    d = est.d_metric if est.d_metric is not None else est.d_direction
    lines = [
        "rspose solve report",
        f"d_scale_status = {est.d_scale_status}",
        f"d_direction = {' '.join(repr(float(x)) for x in est.d_direction)}",
        f"sigma_smallest = {est.sigma_smallest!r}",
        f"sigma_second = {est.sigma_second!r}",
        f"extraction_status = {est.extraction_status}",
    ]
    if est.d_scale_status != "metric":
        lines.append("translation below is a unit direction; metric scale was not recovered")
    if ransac is not None:
        lines += [
            f"inliers_left = {int(ransac.inliers_left.sum())} / {len(ransac.inliers_left)}",
            f"inliers_right = {int(ransac.inliers_right.sum())} / {len(ransac.inliers_right)}",
            f"ransac_iterations = {ransac.iterations}",
        ]
    return motion_text(MotionVelocity(est.w, d), "\n".join(lines))


def cmd_solve(args) -> int:
    cfg = _config(args)
    path = _require_file(args.correspondences, "correspondence file")
    try:
        left, right = solver.parse_correspondences_csv(path.read_text())
    except ValueError as exc:
        raise UsageError(f"{path}: {exc}") from None
    K, rig = cfg.intrinsics, cfg.rig
    result = None
    if args.ransac:
        result = solver.ransac_solve(
            left, right, rig, K, cfg.ransac_threshold, cfg.ransac_max_iters, seed=_seed(args, cfg)
        )
        est = result.estimate
    else:
        est = solver.solve_relative_pose(left, right, rig, K)
    report = solve_report(est, result)
    if args.out:
        out = Path(args.out)
        out.write_text(report)
        if result is not None:
            mask_path = _sibling(out, "_inliers.csv")
            rows = ["side,index,inlier"]
            for side, m in (("L", result.inliers_left), ("R", result.inliers_right)):
                rows += [f"{side},{i},{int(v)}" for i, v in enumerate(m)]
            mask_path.write_text("\n".join(rows) + "\n")
    print(report, end="")
    return EXIT_OK


def cmd_depth(args) -> int:
    cfg = _config(args)
    left = imageio.read_pgm(_require_file(args.left, "left image"))
    right = imageio.read_pgm(_require_file(args.right, "right image"))
    disp = stereo.compute_disparity(left, right, cfg.sgm)
    depth = stereo.disparity_to_depth(disp, cfg.fy, cfg.half_baseline)
    out = Path(args.out)
    imageio.write_pfm(out, depth)
    disp_path = _sibling(out, "_disparity.pfm")
    imageio.write_pfm(disp_path, disp)
    valid = disp >= 0
    print(f"valid pixels: {valid.mean():.3f}")
    if valid.any():
        print(f"disparity range: {disp[valid].min():.2f} .. {disp[valid].max():.2f}")
    print(f"wrote {out} and {disp_path}")
    return EXIT_OK


def cmd_synth(args) -> int:
    cfg = _config(args)
    seed = _seed(args, cfg)
    scene = load_scene(_require_file(args.scene, "scene file")) if args.scene else rectify.default_scene(cfg.scene_seed)
    K, rig, motion = cfg.intrinsics, cfg.rig, cfg.motion
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    depths = {}
    for i in range(1, 5):
        fid = FrameId.from_index(i)
        img, depth = rectify.synthesize_rs(scene, K, rig, fid, motion, cfg.rotation_model, return_depth=True)
        gs = rectify.render_gs(scene, K, rectify.reference_pose(rig, fid, motion), cfg.rotation_model)
        imageio.write_pgm(out / f"I{i}.pgm", img)
        imageio.write_pgm(out / f"GS{i}.pgm", gs)
        imageio.write_pfm(out / f"depth{i}.pfm", depth)
        depths[i] = depth
    rng = np.random.default_rng(seed)
    left, right = rectify.render_correspondences(K, rig, motion, depths, cfg.point_count, rng, cfg.rotation_model)
    (out / "correspondences.csv").write_text(solver.correspondences_csv(left, right))
    (out / "motion.cfg").write_text(motion_text(motion, "ground-truth motion"))
    (out / "config.cfg").write_text(serialize_config(cfg))
    print(f"wrote 4 RS images, 4 GS references, depth maps, {len(left)}+{len(right)} matches to {out}")
    return EXIT_OK


def cmd_rectify(args) -> int:
    cfg = _config(args)
    img = imageio.read_pgm(_require_file(args.image, "image"))
    depth = imageio.read_pfm(_require_file(args.depth, "depth file"))
    motion = load_motion(_require_file(args.motion, "motion file"))
    ref = imageio.read_pgm(_require_file(args.reference, "reference image")) if args.reference else None
    if img.shape != depth.shape:
        raise ValueError(f"image {img.shape} and depth {depth.shape} differ in size")
    if ref is not None and ref.shape != img.shape:
        raise ValueError(f"reference {ref.shape} and image {img.shape} differ in size")
    frame = args.frame if args.frame is not None else cfg.frame
    fid = FrameId.from_index(frame)
    corrected, mask = rectify.correct_image(img, depth, cfg.intrinsics, cfg.rig, fid, motion, cfg.rotation_model)
    if cfg.fill_holes:
        corrected, mask = rectify.fill_holes(corrected, mask)
    out = Path(args.out)
    imageio.write_pgm(out, np.where(mask, corrected, 0).astype(np.uint8))
    imageio.write_pgm(_sibling(out, "_mask.pgm"), mask.astype(np.uint8) * 255)
    print(f"valid fraction: {mask.mean():.4f}")
    if ref is not None:
        s = rectify.summarize_correction(img, corrected, mask, ref)
        imageio.write_ppm(_sibling(out, "_overlay_rs.ppm"), rectify.overlay_diff(img, ref, mask))
        imageio.write_ppm(_sibling(out, "_overlay_corrected.ppm"), rectify.overlay_diff(corrected, ref, mask))
        print(f"rmse before: {s.rmse_before:.4f}")
        print(f"rmse after: {s.rmse_after:.4f}")
        print(f"rmse reduction: {100 * s.reduction:.2f}%")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="flat key = value configuration file")
    common.add_argument("--seed", type=int, help="override the configured seed")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    p = argparse.ArgumentParser(prog="rspose", description="Stereo rolling-shutter relative pose tools.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common], help="run a parameter sweep (RS vs GS 8-point)")
    s.add_argument("--sweep", required=True, choices=simgen.SWEEP_VARIABLES)
    s.add_argument("--trials", type=int, help="override the configured trial count")
    s.add_argument("--out", required=True, metavar="CSV", help="sweep CSV; an SVG chart is written beside it")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("solve", parents=[common], help="estimate motion from a correspondence CSV")
    s.add_argument("correspondences", metavar="CSV", help="rows of side,u_a,v_a,u_b,v_b")
    s.add_argument("--ransac", action="store_true", help="robust estimation; writes an inlier mask beside --out")
    s.add_argument("--out", metavar="PATH", help="report file (also a valid motion file)")
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("depth", parents=[common], help="SGM disparity and depth from a stereo pair")
    s.add_argument("left", metavar="LEFT_PGM")
    s.add_argument("right", metavar="RIGHT_PGM")
    s.add_argument("--out", required=True, metavar="PFM", help="depth PFM; disparity goes to <stem>_disparity.pfm")
    s.set_defaults(func=cmd_depth)

    s = sub.add_parser("synth", parents=[common], help="render RS frames, GS references and ground truth")
    s.add_argument("--scene", metavar="PATH", help="scene file (default: built-in scene)")
    s.add_argument("--out", required=True, metavar="DIR")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("rectify", parents=[common], help="correct an RS image to its first-row pose")
    s.add_argument("image", metavar="RS_PGM")
    s.add_argument("--depth", required=True, metavar="PFM")
    s.add_argument("--motion", required=True, metavar="PATH", help="motion file (w1..w3, d1..d3)")
    s.add_argument("--frame", type=int, choices=(1, 2, 3, 4), help="image index of RS_PGM (default: config frame)")
    s.add_argument("--reference", metavar="GS_PGM", help="GS image for RMSE and overlays")
    s.add_argument("--out", required=True, metavar="PGM")
    s.set_defaults(func=cmd_rectify)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, UsageError) as exc:
        print(f"rspose: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, RuntimeError, ArithmeticError, OSError) as exc:
        print(f"rspose: {args.command} failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
