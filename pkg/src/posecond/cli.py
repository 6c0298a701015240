"""Command-line entry point.

Exit codes everywhere: 0 success, 1 runtime or data error, 2 usage error.
"""

import argparse
import hashlib
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import pipeline, render, selftest, tai, trajectory, vae
from .errors import LengthMismatch, NonFiniteLoss, PosecondError
from .gradcheck import FD_EPS, _check_params
from .metrics import cammc
from .pose_io import parse_sequence, serialize_sequence
from .tensor import dump_tensor, finite_diff_check, layer_norm

log = logging.getLogger("posecond")

EXIT_OK, EXIT_ERROR, EXIT_USAGE = 0, 1, 2
DIFFUSION_LR = 5e-5


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    width: int = pipeline.DEFAULT_WIDTH
    height: int = pipeline.DEFAULT_HEIGHT
    stride: int = pipeline.DEFAULT_STRIDE
    frames: int = pipeline.DEFAULT_FRAMES
    lr: float = DIFFUSION_LR
    guidance_scale: float = tai.GUIDANCE_SCALE
    seed: int = 0
    out_dir: str = "."

    def __post_init__(self):
        for name in ("width", "height", "stride", "frames", "lr", "guidance_scale"):
            if not getattr(self, name) > 0:
                raise UsageError(f"--{name.replace('_', '-')} must be positive")
        if self.seed < 0:
            raise UsageError("--seed must be non-negative")


def _dump_json(obj):
    return json.dumps(obj, indent=2) + "\n"


def _read_text(path):
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise PosecondError(f"cannot read {path}: {exc}") from exc


def _write_text(path, text):
    try:
        Path(path).write_text(text)
    except OSError as exc:
        raise PosecondError(f"cannot write {path}: {exc}") from exc


def _load_sequence(path):
    try:
        return parse_sequence(_read_text(path))
    except PosecondError as exc:
        raise PosecondError(f"{path}: {exc}") from exc


# gen-traj ----------------------------------------------------------------

def cmd_gen_traj(args):
    try:
        kind = trajectory.Kind.parse(args.kind)
        spec = trajectory.TrajectorySpec(kind, args.frames, args.speed, seed=args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    text = serialize_sequence(trajectory.generate(spec))
    if args.out == "-":
        sys.stdout.write(text)
        print(trajectory.describe(spec), file=sys.stderr)
    else:
        _write_text(args.out, text)
        print(trajectory.describe(spec))
    return EXIT_OK


# encode ------------------------------------------------------------------

def _run_config(args, **extra):
    return RunConfig(width=args.width, height=args.height, stride=args.stride,
                     seed=args.seed, out_dir=args.out_dir, **extra)


def _load_vae(path, channels=3):
    if path is None:
        log.warning("no VAE checkpoint given; encoding with untrained parameters")
        return vae.VaeParams.init(channels)
    try:
        return vae.VaeParams.loads(_read_text(path))
    except (ValueError, KeyError) as exc:
        raise PosecondError(f"{path}: bad checkpoint: {exc}") from exc


def cmd_encode(args):
    seq = _load_sequence(args.pose_file)
    cfg = _run_config(args, frames=len(seq))
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    enc = pipeline.encode_sequence(seq, cfg.width, cfg.height, cfg.stride, cell=args.vae_cell,
                                   max_magnitude=args.max_magnitude)
    view_cfg = render.RenderConfig(cfg.width, cfg.height, args.max_magnitude,
                                   draw_arrows=args.arrows, arrow_scale=args.arrow_scale)
    images = render.field_to_sequence(enc.field, view_cfg)
    try:
        render.write_sequence(images, out, prefix="motion")
    except OSError as exc:
        raise PosecondError(str(exc)) from exc

    params = _load_vae(args.checkpoint)
    mean, logvar = vae.encode(enc.clip, params)
    _write_text(out / "latent.txt", dump_tensor(mean))
    summary = {
        "frames": enc.field.n_motion_frames,
        "poses": len(seq),
        "grid": list(enc.field.grid.shape),
        "vae_input_shape": list(enc.clip.shape),
        "latent_shape": list(mean.shape),
        "run": asdict(cfg),
    }
    _write_text(out / "summary.json", _dump_json(summary))
    print(json.dumps({k: summary[k] for k in ("frames", "grid", "latent_shape")}))
    return EXIT_OK


# train-vae ---------------------------------------------------------------

def cmd_train_vae(args):
    data_dir = Path(args.data_dir)
    files = sorted(data_dir.glob("*.txt")) if data_dir.is_dir() else []
    if not files:
        raise UsageError(f"no pose files (*.txt) found in {args.data_dir}")
    cfg = _run_config(args, lr=args.lr)
    clips = [pipeline.encode_sequence(_load_sequence(f), cfg.width, cfg.height, cfg.stride,
                                      cell=args.vae_cell).clip for f in files]
    try:
        train_cfg = vae.TrainConfig(steps=args.steps, lr=args.lr, beta=args.beta, seed=args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    result = vae.train(clips, train_cfg)

    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_text(out / "vae.ckpt", result.params.dumps())
    history = {
        "files": [f.name for f in files],
        "config": asdict(train_cfg),
        # out_dir is left out so reruns into different directories stay byte-identical
        "run": {k: v for k, v in asdict(cfg).items() if k != "out_dir"},
        "loss": result.loss_history,
        "recon_mse": result.recon_history,
        "kl": result.kl_history,
    }
    _write_text(out / "loss_history.json", _dump_json(history))
    print(json.dumps({"steps": args.steps, "initial_recon_mse": result.recon_history[0],
                      "final_recon_mse": result.recon_history[-1]}))
    return EXIT_OK


# inject-demo -------------------------------------------------------------

def inject_demo(strategy, patches=6, frames=4, dim=8, seed=0, zero_pose=False):
    """Run one injection strategy on seeded inputs; returns the report dict."""
    if strategy not in tai.STRATEGIES:
        raise UsageError(f"unknown strategy {strategy!r} (choose from {', '.join(tai.STRATEGIES)})")
    rng = np.random.default_rng(seed)
    z_k = rng.standard_normal((patches, frames, dim))
    z_p = np.zeros_like(z_k) if zero_pose else rng.standard_normal((patches, frames, dim))
    proj = rng.standard_normal(z_k.shape)

    if strategy == "tai":
        params = tai.TAIParams.init(patches, patches, dim) if zero_pose else \
            tai.TAIParams.random(patches, patches, dim, seed=seed)
        fwd = lambda a, b: tai.tai_inject(a, b, params)
        bwd = lambda: tai.tai_inject_backward(proj, z_k, z_p, params)
        plist = [params.gamma, params.beta]
    elif strategy == "concat":
        params = tai.ConcatParams.random(dim, seed=seed)
        fwd = lambda a, b: tai.concat_inject(a, b, params)
        bwd = lambda: tai.concat_inject_backward(proj, z_k, z_p, params)
        plist = params.parameters()
    else:
        params = tai.AttnParams.random(dim, seed=seed)
        fwd = lambda a, b: tai.cross_attn_inject(a, b, params)
        bwd = lambda: tai.cross_attn_inject_backward(proj, z_k, z_p, params)
        plist = params.parameters()

    out = fwd(z_k, z_p)
    dz_k, dz_p = bwd()
    err = max(
        finite_diff_check(lambda x: np.sum(fwd(x, z_p) * proj), z_k, dz_k, FD_EPS),
        finite_diff_check(lambda x: np.sum(fwd(z_k, x) * proj), z_p, dz_p, FD_EPS),
        _check_params(lambda: np.sum(fwd(z_k, z_p) * proj), plist, FD_EPS),
    )
    report = {
        "strategy": strategy,
        "seed": seed,
        "input_shape": list(z_k.shape),
        "output_shape": list(out.shape),
        "shape_preserved": out.shape == z_k.shape,
        "input_sha256": hashlib.sha256(z_k.tobytes() + z_p.tobytes()).hexdigest(),
        "output_mean": float(out.mean()),
        "output_var": float(out.var()),
        "grad_check_max_rel_err": err,
        "grad_check_passed": err < 1e-4,
    }
    if zero_pose and strategy == "tai":
        report["layernorm_baseline_max_abs_diff"] = float(np.max(np.abs(out - layer_norm(z_k))))
    return report


def cmd_inject_demo(args):
    report = inject_demo(args.strategy, args.patches, args.frames, args.dim, args.seed, args.zero_pose)
    print(json.dumps(report, indent=2))
    ok = report["grad_check_passed"] and report["shape_preserved"]
    if "layernorm_baseline_max_abs_diff" in report:
        ok = ok and report["layernorm_baseline_max_abs_diff"] < 1e-12
    return EXIT_OK if ok else EXIT_ERROR


# cammc -------------------------------------------------------------------

def cmd_cammc(args):
    a = _load_sequence(args.file_a)
    b = _load_sequence(args.file_b)
    try:
        report = cammc(a, b)
    except LengthMismatch as exc:
        raise PosecondError(f"{args.file_a} has {exc.len_a} poses, {args.file_b} has {exc.len_b}") from exc
    print(report.to_json())
    return EXIT_OK


# selftest ----------------------------------------------------------------

def _use_color(stream):
    return "NO_COLOR" not in os.environ and hasattr(stream, "isatty") and stream.isatty()


def cmd_selftest(args):
    faults = tuple(args.fault or ())
    for f in faults:
        if f not in selftest.KNOWN_FAULTS:
            raise UsageError(f"unknown fault {f!r}")
    results = selftest.run(faults)
    color = _use_color(sys.stdout)
    width = max(len(name) for name, _, _ in results)
    for name, ok, detail in results:
        status = "PASS" if ok else "FAIL"
        if color:
            status = f"\033[{32 if ok else 31}m{status}\033[0m"
        print(f"{name:<{width}}  {status}  {detail}")
    failed = [name for name, ok, _ in results if not ok]
    if failed:
        print(f"{len(failed)} of {len(results)} checks failed: {', '.join(failed)}")
        return EXIT_ERROR
    print(f"all {len(results)} checks passed")
    return EXIT_OK


# argument parsing --------------------------------------------------------

def _add_geometry(p):
    p.add_argument("--width", type=int, default=pipeline.DEFAULT_WIDTH)
    p.add_argument("--height", type=int, default=pipeline.DEFAULT_HEIGHT)
    p.add_argument("--stride", type=int, default=pipeline.DEFAULT_STRIDE)
    p.add_argument("--vae-cell", type=int, default=pipeline.VAE_CELL,
                   help="VAE input pixels per grid point (default %(default)s)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", default=".")


def build_parser():
    parser = argparse.ArgumentParser(prog="posecond", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-traj", help="write a synthetic trajectory file")
    p.add_argument("kind", help=", ".join(k.value for k in trajectory.Kind))
    p.add_argument("--frames", type=int, default=pipeline.DEFAULT_FRAMES)
    p.add_argument("--speed", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_gen_traj)

    p = sub.add_parser("encode", help="pose file -> motion PPMs, pose latent and summary")
    p.add_argument("pose_file")
    _add_geometry(p)
    p.add_argument("--checkpoint")
    p.add_argument("--max-magnitude", type=float, default=pipeline.DEFAULT_MAX_MAGNITUDE)
    p.add_argument("--arrows", action="store_true")
    p.add_argument("--arrow-scale", type=float, default=1.0)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("train-vae", help="train the pose VAE on a directory of pose files")
    p.add_argument("data_dir")
    _add_geometry(p)
    p.add_argument("--steps", type=int, default=500)
    p.add_argument("--lr", type=float, default=vae.DEFAULT_LR)
    p.add_argument("--beta", type=float, default=vae.DEFAULT_BETA)
    p.set_defaults(func=cmd_train_vae)

    p = sub.add_parser("inject-demo", help="run one pose-injection strategy with a gradient check")
    p.add_argument("strategy", help=", ".join(tai.STRATEGIES))
    p.add_argument("--patches", type=int, default=6)
    p.add_argument("--frames", type=int, default=4)
    p.add_argument("--dim", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--zero-pose", action="store_true")
    p.set_defaults(func=cmd_inject_demo)

    p = sub.add_parser("cammc", help="camera motion consistency between two pose files")
    p.add_argument("file_a")
    p.add_argument("file_b")
    p.set_defaults(func=cmd_cammc)

    p = sub.add_parser("selftest", help="run the built-in invariant suite")
    p.add_argument("--fault", action="append", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_selftest)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"posecond: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NonFiniteLoss as exc:
        print(f"posecond: error: training diverged: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except PosecondError as exc:
        print(f"posecond: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
