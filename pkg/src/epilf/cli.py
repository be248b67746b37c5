"""Command-line front end.

Every subcommand reads and writes plain files (light-field directories,
Netpbm images, CSV and JSON), so runs can be scripted and compared byte for
byte. Exit codes: 0 on success, 2 on argument errors, 1 on runtime errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .depth import depth_assisted_render, load_disparity
from .kernels import KernelKind, make_kernel, sigma_for_disparity
from .lightfield import LightField4D, Orientation, extract_epi, load_lightfield, save_lightfield
from .metrics import ms_ssim, psnr
from .netpbm import dequantize, quantize, read_netpbm, write_netpbm
from .network import init_network, load_weights, save_weights
from .pipeline import PipelineConfig, reconstruct_epi, reconstruct_lightfield, reconstruct_view_sequence
from .spectrum import epi_power_spectrum, export_spectrum, highband_energy_ratio
from .synth import make_benchmark_suite, save_suite
from .training import TrainConfig, build_training_set, train


class UsageError(Exception):
    """Raised for invalid argument combinations found after parsing."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        sys.exit(2)


# ---------------------------------------------------------------------------
# Shared option groups


def _add_kernel_options(p):
    p.add_argument("--kernel", choices=[k.value for k in KernelKind], default="gaussian")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--sigma", type=float, help="kernel shape parameter")
    g.add_argument("--d-max", type=float, help="derive sigma from the largest disparity")
    p.add_argument("--reg-eps", type=float, default=1e-3, help="deblur regularization weight")


def _add_net_options(p, required=False):
    g = p.add_mutually_exclusive_group(required=required)
    g.add_argument("--weights", help="trained weights file")
    g.add_argument("--baseline", choices=["bicubic"], help="run without the restoration network")


def _kernel_from(args):
    if args.sigma is not None:
        sigma = args.sigma
    elif args.d_max is not None:
        sigma = sigma_for_disparity(args.d_max)
    else:
        sigma = 1.5
    return make_kernel(args.kernel, sigma)


def _pipeline_from(args, out_t=9, out_s=9):
    net = load_weights(args.weights) if getattr(args, "weights", None) else None
    return PipelineConfig(kernel=_kernel_from(args), net=net, out_views_t=out_t, out_views_s=out_s,
                          deblur_reg_eps=args.reg_eps, threads=args.threads)


def _read_epi(path):
    pixels, maxval = read_netpbm(path)
    if pixels.ndim != 2:
        raise ValueError(f"{path}: EPIs must be grayscale images")
    return dequantize(pixels, maxval)


def _write_epi(path, epi, bitdepth=16):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    write_netpbm(path, quantize(epi, bitdepth), (1 << bitdepth) - 1)


def _write_json(path, data):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# Subcommands


def cmd_gen(args):
    if args.step < 1 or (args.dense_views - 1) % args.step:
        raise UsageError("--dense-views minus one must be divisible by --step")
    suite = make_benchmark_suite(args.seed, size=args.size, dense_views=args.dense_views,
                                 step=args.step, replicas=args.replicas)
    save_suite(suite, args.out)
    print(f"wrote {len(suite)} scenes to {args.out}")


def _suite_entries(suite_dir, split=None, d_lo=None, d_hi=None):
    index = json.loads((Path(suite_dir) / "suite.json").read_text())["scenes"]
    out = []
    for meta in index:
        if split and meta["split"] != split:
            continue
        if d_lo is not None and meta["d_max"] < d_lo:
            continue
        if d_hi is not None and meta["d_max"] > d_hi:
            continue
        out.append(meta)
    return out


def cmd_train(args):
    entries = _suite_entries(args.suite, "train")
    if not entries:
        raise ValueError(f"{args.suite}: no training scenes")
    dense = [load_lightfield(Path(args.suite) / m["name"] / "dense") for m in entries]
    cfg = TrainConfig(
        batch_size=args.batch_size, momentum=args.momentum,
        lr_schedule=tuple(tuple(x) for x in args.lr_schedule) if args.lr_schedule else ((0, args.lr),),
        total_iterations=args.iterations, seed=args.seed, init_std=args.init_std,
        patch_size=args.patch_size, patch_stride=args.patch_stride, flip=args.flip,
        spatial_downsample=args.spatial_downsample, gaussian_noise=args.noise,
        scale_augmentation=args.scale_augmentation, log_every=args.log_every,
        optimizer=args.optimizer,
    )
    pairs = build_training_set(dense, _kernel_from(args), args.factors, cfg)
    net = init_network(args.seed, init_std=args.init_std, dtype=np.dtype(cfg.dtype))
    net, state = train(net, pairs, cfg)
    save_weights(net, args.out)
    loss_csv = args.loss_csv or str(Path(args.out).with_suffix(".loss.csv"))
    with open(loss_csv, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", "loss"])
        for it, loss in state.loss_history:
            w.writerow([it, repr(float(loss))])
    print(f"trained {state.iteration} iterations on {len(pairs)} patches; weights in {args.out}")


def cmd_reconstruct(args):
    lf = load_lightfield(args.input)
    cfg = _pipeline_from(args, *args.out_views)
    out = reconstruct_lightfield(lf, cfg)
    save_lightfield(out, args.out, bitdepth=args.bitdepth)
    print(f"wrote {cfg.out_views_t}x{cfg.out_views_s} views to {args.out}")


def cmd_reconstruct_seq(args):
    lf = load_lightfield(args.input)
    cfg = _pipeline_from(args, 1, args.out_views)
    out = reconstruct_view_sequence(lf, cfg)
    save_lightfield(out, args.out, bitdepth=args.bitdepth)
    print(f"wrote {args.out_views} views to {args.out}")


def _score_views(recon: LightField4D, truth: LightField4D, skip=None):
    if recon.samples.shape != truth.samples.shape:
        raise ValueError(f"shape mismatch: {recon.samples.shape} vs {truth.samples.shape}")
    T, S = truth.dims[:2]
    rows = []
    for t in range(T):
        for s in range(S):
            if skip and t % skip[0] == 0 and s % skip[1] == 0:
                continue
            a, b = recon.samples[t, s], truth.samples[t, s]
            m = float(np.mean([ms_ssim(a[..., c], b[..., c]) for c in range(a.shape[-1])]))
            rows.append((t, s, psnr(a, b), m))
    return rows


def cmd_eval(args):
    header = ["view_t", "view_s", "psnr_db", "ms_ssim"]
    table = []
    if args.suite:
        if args.recon or args.truth:
            raise UsageError("--suite cannot be combined with --recon/--truth")
        if not (args.weights or args.baseline):
            raise UsageError("--suite needs --weights or --baseline bicubic")
        header = ["scene"] + header
        entries = _suite_entries(args.suite, args.split, args.min_d, args.max_d)
        if not entries:
            raise ValueError("no scenes match the selection")
        for meta in entries:
            sparse = load_lightfield(Path(args.suite) / meta["name"] / "sparse")
            truth = load_lightfield(Path(args.suite) / meta["name"] / "dense")
            T, S = truth.dims[:2]
            cfg = _pipeline_from(args, T, S)
            recon = reconstruct_lightfield(sparse, cfg)
            step = ((T - 1) // (sparse.dims[0] - 1), (S - 1) // (sparse.dims[1] - 1))
            table += [(meta["name"],) + r for r in _score_views(recon, truth, step)]
    else:
        if not (args.recon and args.truth):
            raise UsageError("give --suite or both --recon and --truth")
        skip = tuple(args.skip_step) if args.skip_step else None
        table = [r for r in _score_views(load_lightfield(args.recon), load_lightfield(args.truth), skip)]
    Path(args.csv).parent.mkdir(parents=True, exist_ok=True)
    with open(args.csv, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in table:
            w.writerow([f"{v:.6f}" if isinstance(v, float) else v for v in row])
    summary = {
        "mean_psnr_db": float(np.mean([r[-2] for r in table])),
        "mean_ms_ssim": float(np.mean([r[-1] for r in table])),
        "n_views": len(table),
    }
    if args.report:
        _write_json(args.report, summary)
    print(json.dumps(summary, sort_keys=True))


def cmd_spectrum(args):
    if args.epi:
        epi = _read_epi(args.epi)
    elif args.lf:
        lf = load_lightfield(args.lf)
        epi = extract_epi(lf, Orientation(args.orientation), args.spatial, args.angular, args.channel)
    else:
        raise UsageError("give --epi or --lf")
    spec = epi_power_spectrum(epi, args.pad)
    pgm, csv_path = export_spectrum(spec, args.out)
    ratio = highband_energy_ratio(epi, args.cutoff, args.pad)
    summary = {"cutoff": args.cutoff, "highband_ratio": ratio, "pgm": str(pgm), "csv": str(csv_path)}
    if args.report:
        _write_json(args.report, summary)
    print(json.dumps(summary, sort_keys=True))


def cmd_render_depth(args):
    epi = _read_epi(args.epi)
    dmap = load_disparity(args.disparity, args.disp_min, args.disp_max)
    if dmap.values.shape[-1] != epi.shape[1]:
        raise ValueError("disparity map width does not match the EPI")
    cfg = _pipeline_from(args)
    if args.levels == 1 and dmap.d_min == dmap.d_max == 0:
        out = reconstruct_epi(epi, cfg, args.out_views)
    else:
        out = depth_assisted_render(epi, dmap, cfg, args.levels, args.out_views,
                                    isolate=not args.no_isolate)
    _write_epi(args.out, np.clip(out, 0.0, 1.0), args.bitdepth)
    print(f"wrote {out.shape[0]}x{out.shape[1]} EPI to {args.out}")


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="epilf", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="JSON file of option defaults; flags override it")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p):
        p.add_argument("--config", help=argparse.SUPPRESS)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--threads", type=int, default=1)

    p = sub.add_parser("gen", help="write the synthetic benchmark suite")
    common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--size", type=int, default=48)
    p.add_argument("--dense-views", type=int, default=9)
    p.add_argument("--step", type=int, default=4)
    p.add_argument("--replicas", type=int, default=2)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="train the restoration network on a suite's training split")
    common(p)
    _add_kernel_options(p)
    p.add_argument("--suite", required=True)
    p.add_argument("--out", required=True, help="weights file to write")
    p.add_argument("--loss-csv", help="defaults to <out>.loss.csv")
    p.add_argument("--iterations", type=int, default=4000)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--lr-schedule", type=json.loads, help='JSON list of [iteration, lr] pairs')
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--optimizer", choices=["sgd", "adam"], default="sgd")
    p.add_argument("--init-std", type=float, default=1e-3)
    p.add_argument("--patch-size", type=int, default=17)
    p.add_argument("--patch-stride", type=int, default=14)
    p.add_argument("--factors", type=int, nargs="+", default=[2])
    p.add_argument("--flip", action="store_true")
    p.add_argument("--spatial-downsample", action="store_true")
    p.add_argument("--noise", action="store_true")
    p.add_argument("--scale-augmentation", action="store_true")
    p.add_argument("--log-every", type=int, default=100)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("reconstruct", help="dense light field from a sparse one")
    common(p)
    _add_kernel_options(p)
    _add_net_options(p)
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--out-views", type=int, nargs=2, metavar=("T", "S"), default=[9, 9])
    p.add_argument("--bitdepth", type=int, choices=[8, 16], default=16)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("reconstruct-seq", help="horizontal-only reconstruction of a view sequence")
    common(p)
    _add_kernel_options(p)
    _add_net_options(p)
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--out-views", type=int, default=9)
    p.add_argument("--bitdepth", type=int, choices=[8, 16], default=16)
    p.set_defaults(func=cmd_reconstruct_seq)

    p = sub.add_parser("eval", help="score reconstructions against ground truth")
    common(p)
    _add_kernel_options(p)
    _add_net_options(p)
    p.add_argument("--recon")
    p.add_argument("--truth")
    p.add_argument("--skip-step", type=int, nargs=2, metavar=("KT", "KS"),
                   help="skip views on this lattice (the input views)")
    p.add_argument("--suite")
    p.add_argument("--split", choices=["train", "test"], default="test")
    p.add_argument("--min-d", type=float)
    p.add_argument("--max-d", type=float)
    p.add_argument("--csv", required=True)
    p.add_argument("--report")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("spectrum", help="EPI power spectrum and high-band energy")
    common(p)
    p.add_argument("--epi", help="grayscale PGM holding one EPI")
    p.add_argument("--lf", help="light-field directory to slice")
    p.add_argument("--orientation", choices=[o.value for o in Orientation], default="horizontal")
    p.add_argument("--spatial", type=int, default=0, help="fixed y (horizontal) or x (vertical)")
    p.add_argument("--angular", type=int, default=0, help="fixed t (horizontal) or s (vertical)")
    p.add_argument("--channel", type=int, default=0)
    p.add_argument("--pad", type=int)
    p.add_argument("--cutoff", type=float, default=0.25)
    p.add_argument("--out", required=True, help="output PGM path; the CSV goes next to it")
    p.add_argument("--report")
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("render-depth", help="depth-assisted rendering of one EPI")
    common(p)
    _add_kernel_options(p)
    _add_net_options(p)
    p.add_argument("--epi", required=True)
    p.add_argument("--disparity", required=True, help="16-bit PGM disparity map")
    p.add_argument("--disp-min", type=float, help="disparity of gray level 0")
    p.add_argument("--disp-max", type=float, help="disparity of full-scale gray")
    p.add_argument("--levels", type=int, default=8)
    p.add_argument("--out-views", type=int, required=True)
    p.add_argument("--no-isolate", action="store_true", help="skip per-level isolation")
    p.add_argument("--out", required=True)
    p.add_argument("--bitdepth", type=int, choices=[8, 16], default=16)
    p.set_defaults(func=cmd_render_depth)
    return parser


def _config_defaults(argv, parser):
    """Option defaults from ``--config FILE`` (searched anywhere in argv)."""
    path = None
    for i, tok in enumerate(argv):
        if tok == "--config" and i + 1 < len(argv):
            path = argv[i + 1]
        elif tok.startswith("--config="):
            path = tok.split("=", 1)[1]
    if path is None:
        return {}
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        parser.error(f"cannot read config {path}: {exc}")
    if not isinstance(data, dict):
        parser.error(f"config {path} must hold a JSON object")
    return {k.replace("-", "_"): v for k, v in data.items()}


def run(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        defaults = _config_defaults(argv, parser)
    except SystemExit as exc:
        return int(exc.code or 0)
    if defaults:
        sub = parser._subparsers._group_actions[0].choices  # noqa: SLF001
        for p in sub.values():
            known = {a.dest for a in p._actions}  # noqa: SLF001
            p.set_defaults(**{k: v for k, v in defaults.items() if k in known})
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if defaults:
        known = {a.dest for a in parser._subparsers._group_actions[0].choices[args.command]._actions}  # noqa: SLF001
        unknown = sorted(set(defaults) - known)
        if unknown:
            parser.print_usage(sys.stderr)
            sys.stderr.write(f"error: unknown config keys for {args.command}: {', '.join(unknown)}\n")
            return 2
    if getattr(args, "threads", 1) < 1:
        parser.print_usage(sys.stderr)
        sys.stderr.write("error: --threads must be >= 1\n")
        return 2
    try:
        args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        sys.stderr.write(f"error: {exc}\n")
        return 2
    except (ValueError, OSError, KeyError) as exc:
        msg = str(exc).replace("\n", " ")
        sys.stderr.write(f"error: {msg}\n")
        return 1
    return 0


def main() -> None:
    sys.exit(run())
