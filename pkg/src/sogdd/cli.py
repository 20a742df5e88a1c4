"""Command-line interface: ``sogdd <command> [options]``.

Exit status: 0 success, 1 invalid arguments or parameters, 2 file or codec
problems, 3 closed-form verification failure.
"""
from __future__ import annotations

import argparse
import math
import re
import sys
import time
from pathlib import Path

import numpy as np

from . import cornermodels as cm
from . import evaluation as ev
from ._accel import set_threads
from .codecs import default_codec
from .detector import DetectorConfig, detect
from .filterbank import build_bank, kernels_csv_rows
from .formatting import fmt
from .imagecore import (
    AffineTransform,
    CodecUnavailableError,
    Homography,
    PGMFormatError,
    load_image,
    save_pgm,
    warp,
)

EXIT_OK, EXIT_INVALID, EXIT_IO, EXIT_VERIFY = 0, 1, 2, 3
VERIFY_LIMIT = 1e-2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


_ANGLE = re.compile(r"^([+-]?(?:\d+\.?\d*|\.\d+)?)\s*\*?\s*pi\s*(?:/\s*(\d+\.?\d*))?$")


def parse_angle(text: str) -> float:
    """Radians from ``0.39``, ``pi/8``, ``3pi/8``, ``-2*pi/3`` and the like."""
    s = str(text).strip().lower()
    m = _ANGLE.match(s)
    if m:
        coef = m.group(1)
        num = -1.0 if coef == "-" else float(coef) if coef not in ("", "+") else 1.0
        den = float(m.group(2)) if m.group(2) else 1.0
        return num * math.pi / den
    try:
        return float(s)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an angle: {text!r}") from None


def parse_block(text: str):
    """``7`` or ``7x9`` (columns x rows) to ``(p, q)``."""
    parts = str(text).lower().split("x")
    try:
        dims = [int(v) for v in parts]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a block size: {text!r}") from None
    if len(dims) == 1:
        dims = dims * 2
    if len(dims) != 2 or any(v < 3 or v % 2 == 0 for v in dims):
        raise argparse.ArgumentTypeError("block sides must be odd and >= 3")
    return dims[0] - 1, dims[1] - 1


def read_config(path) -> dict:
    """Flat ``key = value`` file; ``#`` starts a comment."""
    out = {}
    for n, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = val
    return out


# ---------------------------------------------------------------------------
# argument groups


def _detector_args(p):
    g = p.add_argument_group("detector")
    g.add_argument("--sigma2", type=float, default=1.2, help="squared filter scale (default 1.2)")
    g.add_argument("--orientations", type=int, default=8, help="number of filter orientations K")
    g.add_argument("--block", type=parse_block, default=(6, 6), help="SODDC block, e.g. 7 or 7x7")
    g.add_argument("--threshold", type=float, default=1e9, help="corner measure threshold")
    g.add_argument("--nms-radius", type=int, default=1)
    g.add_argument("--measure", choices=("det", "eigen"), default="det")


def _model_args(p, sigma_default=None):
    g = p.add_argument_group("corner model")
    g.add_argument("--kind", choices=(cm.END, cm.L_TYPE), default=cm.END)
    g.add_argument("--T1", type=float, default=50.0)
    g.add_argument("--T2", type=float, default=100.0)
    g.add_argument("--alpha", type=parse_angle, default=math.pi / 8)
    g.add_argument("--beta", type=parse_angle, default=math.pi / 3)
    g.add_argument("--d", type=float, default=3.0)
    if sigma_default is not None:
        g.add_argument("--sigma", type=float, default=sigma_default)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value file; flags override it")
    common.add_argument("--out", help="output path (default: standard output)")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threads", type=int, help="cap on worker threads")

    parser = _Parser(prog="sogdd", description="SOGDD corner detection toolkit")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("detect", parents=[common], help="detect corners in an image")
    p.add_argument("image")
    _detector_args(p)

    p = sub.add_parser("model-verify", parents=[common], help="closed form vs quadrature profile")
    _model_args(p, sigma_default=1.12)
    p.add_argument("--at", choices=(cm.CORNER, cm.EDGE), default=cm.CORNER)
    p.add_argument("--samples", type=int, default=360)

    p = sub.add_parser("scale-range", parents=[common], help="energy difference over scale")
    _model_args(p)
    p.add_argument("--sigma-min", type=float, default=0.5)
    p.add_argument("--sigma-max", type=float, default=3.0)
    p.add_argument("--sigma-step", type=float, default=0.01)
    p.add_argument(
        "--sweep",
        default="pi/12,pi/8,pi/6,pi/4,pi/3,5pi/12",
        help="comma-separated angles swept for the minimum first root ('none' to skip)",
    )

    p = sub.add_parser("eval-gt", parents=[common], help="match detections to ground truth")
    p.add_argument("image")
    p.add_argument("--gt", required=True, help="CSV with header x,y")
    p.add_argument("--delta", type=float, default=2.0)
    _detector_args(p)

    p = sub.add_parser("eval-repeat", parents=[common], help="repeatability over a transform suite")
    p.add_argument("image")
    p.add_argument("--suite", required=True, choices=ev.SUITES)
    p.add_argument("--dist", type=float, default=4.0)
    _detector_args(p)

    p = sub.add_parser("eval-mma", parents=[common], help="mean matching accuracy for an image pair")
    p.add_argument("image_a")
    p.add_argument("image_b")
    p.add_argument("--homography", required=True, help="text file holding a 3x3 matrix")
    _detector_args(p)

    p = sub.add_parser("warp", parents=[common], help="apply an affine transform to an image")
    p.add_argument("image")
    p.add_argument("--transform", required=True, choices=("rotation", "iso-scale", "aniso-scale", "shear"))
    p.add_argument("--param", required=True, help="angle, factor, or sx:sy")

    p = sub.add_parser("export-kernels", parents=[common], help="write the filter bank as CSV")
    p.add_argument("--sigma2", type=float, default=1.2)
    p.add_argument("--orientations", type=int, default=8)
    return parser


def _apply_config(parser, argv):
    """Parse ``argv`` with config-file values installed as defaults."""
    argv = list(sys.argv[1:] if argv is None else argv)
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    command = next((a for a in argv if a in COMMANDS), None)
    if not known.config or command is None:
        return parser.parse_args(argv)
    values = read_config(known.config)
    sub = parser._subparsers._group_actions[0].choices[command]
    actions = {a.dest: a for a in sub._actions}
    defaults = {}
    for key, raw in values.items():
        if key not in actions or key in ("config", "help"):
            raise UsageError(f"{known.config}: unknown key {key!r} for {command}")
        act = actions[key]
        try:
            val = act.type(raw) if act.type else raw
        except (ValueError, argparse.ArgumentTypeError) as exc:
            raise UsageError(f"{known.config}: bad value for {key}: {exc}") from None
        if act.choices is not None and val not in act.choices:
            raise UsageError(f"{known.config}: {key} must be one of {list(act.choices)}")
        defaults[key] = val
        act.required = False
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def _emit(args, text: str):
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


def _info(args, msg: str):
    """Summary lines go to stdout unless stdout carries the CSV."""
    print(msg, file=sys.stdout if args.out else sys.stderr)


def _detector_config(args) -> DetectorConfig:
    p, q = args.block
    return DetectorConfig(
        sigma2=args.sigma2,
        K=args.orientations,
        p=p,
        q=q,
        threshold=args.threshold,
        nms_radius=args.nms_radius,
        measure=args.measure,
    )


def _model(args) -> cm.CornerModelParams:
    beta = args.beta if args.kind == cm.END else None
    return cm.CornerModelParams(args.kind, args.T1, args.T2, args.alpha, beta, args.d)


# ---------------------------------------------------------------------------
# commands


def cmd_detect(args):
    cfg = _detector_config(args)
    img = load_image(args.image, default_codec())
    t0 = time.perf_counter()
    corners = detect(img, cfg)
    elapsed = time.perf_counter() - t0
    _emit(args, corners.to_csv())
    _info(args, f"{len(corners)} corners")
    print(f"elapsed {elapsed:.3f} s", file=sys.stderr)
    return EXIT_OK


def cmd_model_verify(args):
    p = _model(args)
    if args.samples < 2:
        raise ValueError("need at least 2 samples")
    prof = cm.profile(p, args.at, args.sigma, args.samples)
    lines = ["theta_rad,psi_closed,psi_quadrature"]
    lines += [f"{fmt(t)},{fmt(c)},{fmt(q)}" for t, c, q in zip(prof.theta, prof.closed_form, prof.quadrature)]
    _emit(args, "\n".join(lines) + "\n")
    dev = prof.max_rel_deviation
    _info(args, f"max relative deviation {fmt(dev)}")
    if dev > VERIFY_LIMIT:
        print(f"verification failed: deviation above {fmt(VERIFY_LIMIT)}", file=sys.stderr)
        return EXIT_VERIFY
    return EXIT_OK


def _interval_text(lo, hi):
    a = "-inf" if lo is None else fmt(lo)
    b = "+inf" if hi is None else fmt(hi)
    return f"({a}, {b})"


def cmd_scale_range(args):
    p = _model(args)
    if not (0 < args.sigma_min < args.sigma_max) or not args.sigma_step > 0:
        raise ValueError("need 0 < sigma-min < sigma-max and sigma-step > 0")
    grid = cm.default_sigma_grid(args.sigma_min, args.sigma_max, args.sigma_step)
    res = cm.admissible_interval(p, grid)
    lines = ["sigma,energy_corner,energy_edge,diff"]
    lines += [
        f"{fmt(s)},{fmt(a)},{fmt(b)},{fmt(a - b)}" for s, a, b in zip(res.sigmas, res.energy_corner, res.energy_edge)
    ]
    _emit(args, "\n".join(lines) + "\n")
    roots = ", ".join(fmt(r) for r in res.roots) or "none"
    _info(args, f"roots: {roots}")
    intervals = " ".join(_interval_text(lo, hi) for lo, hi in res.intervals) or "none"
    _info(args, f"positive intervals (unbounded ends are grid limits): {intervals}")
    if res.diagnostic:
        _info(args, f"note: {res.diagnostic}")
    fitted = ", ".join(fmt(r) for r in res.fitted_roots) or "none"
    _info(
        args,
        f"quadratic fit A={fmt(res.A)} B={fmt(res.B)} C={fmt(res.C)} "
        f"residual={fmt(res.fit_residual)} roots: {fitted}",
    )
    if args.sweep.strip().lower() != "none":
        angles = tuple(parse_angle(a) for a in args.sweep.split(","))
        sw = cm.sweep_first_root(p.kind, p.d, angles, grid, p.T1, p.T2)
        if sw.minimum is None:
            _info(args, "sweep: no sign change for any swept shape")
        else:
            a, b = sw.argmin
            shape = f"alpha={fmt(a)}" + ("" if b is None else f" beta={fmt(b)}")
            _info(args, f"sweep minimum first root {fmt(sw.minimum)} at {shape}")
    return EXIT_OK


def cmd_eval_gt(args):
    cfg = _detector_config(args)
    gt = ev.load_gt_csv(args.gt)
    img = load_image(args.image, default_codec())
    report = ev.match_to_gt(detect(img, cfg), gt, args.delta)
    _emit(args, report.to_csv())
    if report.no_matches:
        _info(args, "no matches (Le reported as 0)")
    return EXIT_OK


def cmd_eval_repeat(args):
    cfg = _detector_config(args)
    codec = default_codec()
    img = load_image(args.image, codec)
    report = ev.run_transform_suite(img, cfg, args.suite, args.seed, codec, args.dist)
    _emit(args, report.to_csv())
    if report.skipped:
        print(report.skipped, file=sys.stderr)
    else:
        _info(args, f"{len(report.rows)} rows, mean repeatability {fmt(report.mean)}")
    return EXIT_OK


def cmd_eval_mma(args):
    cfg = _detector_config(args)
    codec = default_codec()
    H = Homography(np.loadtxt(args.homography).reshape(3, 3))
    a = load_image(args.image_a, codec)
    b = load_image(args.image_b, codec)
    report = ev.mma(ev.match_images(a, b, cfg), H)
    _emit(args, report.to_csv())
    if report.empty:
        _info(args, "no candidate matches (MMA reported as 0)")
    return EXIT_OK


def _parse_transform(kind, text):
    if kind == "rotation":
        return AffineTransform.rotation(parse_angle(text))
    if kind == "aniso-scale":
        parts = text.split(":")
        if len(parts) != 2:
            raise ValueError("aniso-scale takes sx:sy")
        return AffineTransform.aniso_scale(float(parts[0]), float(parts[1]))
    if kind == "iso-scale":
        return AffineTransform.iso_scale(float(text))
    return AffineTransform.shear(float(text))


def cmd_warp(args):
    if not args.out:
        raise UsageError("warp needs --out")
    t = _parse_transform(args.transform, args.param)
    img = load_image(args.image, default_codec())
    out, fwd = warp(img, t)
    save_pgm(out, args.out)
    m = fwd.matrix()
    print(f"{out.width}x{out.height}")
    for row in m[:2]:
        print(" ".join(fmt(v) for v in row))
    return EXIT_OK


def cmd_export_kernels(args):
    if not args.sigma2 > 0:
        raise ValueError("sigma2 must be > 0")
    bank = build_bank(math.sqrt(args.sigma2), args.orientations)
    lines = ["k,theta,dy,dx,tap"]
    lines += [f"{k},{fmt(th)},{dy},{dx},{fmt(v)}" for k, th, dy, dx, v in kernels_csv_rows(bank)]
    _emit(args, "\n".join(lines) + "\n")
    return EXIT_OK


COMMANDS = {
    "detect": cmd_detect,
    "model-verify": cmd_model_verify,
    "scale-range": cmd_scale_range,
    "eval-gt": cmd_eval_gt,
    "eval-repeat": cmd_eval_repeat,
    "eval-mma": cmd_eval_mma,
    "warp": cmd_warp,
    "export-kernels": cmd_export_kernels,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
        set_threads(args.threads)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"sogdd: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (OSError, CodecUnavailableError) as exc:
        print(f"sogdd: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        # malformed image files are input problems, not bad parameters
        code = EXIT_IO if isinstance(exc, PGMFormatError) else EXIT_INVALID
        print(f"sogdd: {exc}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
