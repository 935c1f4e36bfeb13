"""Batch command-line surface.

Subcommands: skeletonize, expand, synth, train, generate, eval,
diversity, gradcheck, grid. Flags are long-form `--key value` pairs;
a `--config <tsv>` file (same tab-separated key/value format as the
manifest) supplies defaults with precedence flag > config > default.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical
failure.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from skelfont import autodiff as ad
from skelfont import data as datamod
from skelfont import metrics as metricsmod
from skelfont import trainer as trainermod
from skelfont.autodiff import Tensor, grad_check
from skelfont.checkpoint import ContainerError, save_container
from skelfont.errors import (
    ChannelMismatch,
    DataEmpty,
    EmptyFont,
    ImageTooSmall,
    InvalidSize,
    InvalidSpec,
    InvalidThreshold,
    MalformedImage,
    NonFiniteLoss,
    NumericalFailure,
    OutOfBounds,
    ShapeMismatch,
    UnreadableFile,
    UnsupportedChannels,
    UnsupportedDepth,
)
from skelfont.expansion import expand, to_model_input
from skelfont.imgcore import (
    KIND_GRAY,
    KIND_RGB,
    decode_png,
    encode_png,
    image_from_array,
    resize,
)
from skelfont.losses import LossWeights
from skelfont.models import ModelSpec
from skelfont.skeleton import ske

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3

GRADCHECK_TOLERANCE = 1e-4

_USAGE_ERRORS = (InvalidThreshold, InvalidSize, InvalidSpec, ValueError,
                 argparse.ArgumentTypeError)
_DATA_ERRORS = (
    MalformedImage, UnsupportedDepth, UnsupportedChannels, ChannelMismatch,
    DataEmpty, EmptyFont, UnreadableFile, ContainerError, ShapeMismatch,
    OutOfBounds, ImageTooSmall, OSError,
)
_NUMERIC_ERRORS = (NonFiniteLoss, NumericalFailure)


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


def _onoff(value: str) -> bool:
    if value == "on":
        return True
    if value == "off":
        return False
    raise argparse.ArgumentTypeError(f"expected 'on' or 'off', got {value!r}")


def _read_config(path) -> dict[str, str]:
    values: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            key, _, value = line.partition("\t")
            if not value:
                raise _UsageError(f"config line without a value: {line!r}")
            values[key.strip()] = value
    return values


def _apply_config(args: argparse.Namespace, parser_actions, config: dict[str, str]):
    """Fill argparse values left at None from the config file, typed."""
    by_key = {}
    for action in parser_actions:
        for opt in action.option_strings:
            if opt.startswith("--"):
                by_key[opt[2:]] = action
    for key, raw in config.items():
        action = by_key.get(key)
        if action is None:
            raise _UsageError(f"unknown config key {key!r}")
        if getattr(args, action.dest) is None:
            caster = action.type or str
            setattr(args, action.dest, caster(raw))


def _require(args: argparse.Namespace, parser: _Parser, names: list[str]):
    for name in names:
        if getattr(args, name.replace("-", "_")) is None:
            parser.error(f"the following argument is required: --{name}")


def _read_png(path):
    with open(path, "rb") as fh:
        return decode_png(fh.read())


def _list_pngs(directory) -> list[str]:
    files = sorted(f for f in os.listdir(directory) if f.lower().endswith(".png"))
    if not files:
        raise DataEmpty(f"no PNG files in {directory}")
    return files


# --- subcommand implementations ---

def _cmd_skeletonize(args) -> int:
    img = _read_png(args.in_path)
    mask = ske(img, args.threshold)
    out = image_from_array(1.0 - mask.bits.astype(np.float32), KIND_GRAY)
    with open(args.out, "wb") as fh:
        fh.write(encode_png(out))
    return EXIT_OK


def _cmd_expand(args) -> int:
    img = _read_png(args.in_path)
    expanded = expand(img, args.threshold)
    tensor = to_model_input(expanded)
    save_container(args.out, {"expanded": tensor.data}, step=0, blob=b"")
    return EXIT_OK


def _cmd_synth(args) -> int:
    datamod.synth_fonts(args.n, args.size, args.seed, args.out)
    return EXIT_OK


def _build_train_config(args) -> trainermod.TrainConfig:
    spec = ModelSpec(
        image_size=args.size,
        base_width=args.width,
        n_residual_blocks=args.blocks,
    )
    return trainermod.TrainConfig(
        epochs=args.epochs,
        max_steps=args.steps,
        batch_size=args.batch_size,
        learning_rate=args.lr,
        beta1=args.beta1,
        beta2=args.beta2,
        weights=LossWeights(lambda_cyc=args.lambda_cyc, lambda_ske=args.lambda_ske),
        spec=spec,
        seed=args.seed,
        threshold=args.threshold,
        skeleton_channel=args.skeleton_channel,
        gan_loss=args.gan_loss,
        ske_grad=args.ske_grad,
        checkpoint_every=args.checkpoint_every,
    )


def _cmd_train(args) -> int:
    manifest = datamod.read_manifest(os.path.join(args.data, "manifest.tsv"))
    cfg = _build_train_config(args)
    dataset = datamod.load_dataset(manifest, args.data, args.font_x, args.font_y,
                                   cfg.spec.image_size)
    trainermod.train(cfg, dataset, args.out, log_path=args.log,
                     resume_path=args.resume)
    return EXIT_OK


def _cmd_generate(args) -> int:
    bundle, cfg = trainermod.load_bundle(args.ckpt)
    files = _list_pngs(args.in_dir)
    images = [
        resize(_read_png(os.path.join(args.in_dir, f)),
               cfg.spec.image_size, cfg.spec.image_size)
        for f in files
    ]
    outputs = trainermod.generate(bundle, cfg, images, args.direction)
    os.makedirs(args.out_dir, exist_ok=True)
    for name, img in zip(files, outputs):
        with open(os.path.join(args.out_dir, name), "wb") as fh:
            fh.write(encode_png(img))
    return EXIT_OK


def _cmd_eval(args) -> int:
    bundle, cfg = trainermod.load_bundle(args.ckpt)
    manifest = datamod.read_manifest(os.path.join(args.data, "manifest.tsv"))
    if args.direction == trainermod.DIRECTION_XY:
        src_font, dst_font = args.font_x, args.font_y
    else:
        src_font, dst_font = args.font_y, args.font_x
    size = cfg.spec.image_size
    src_entries = manifest.for_font(src_font, datamod.SPLIT_TEST)
    dst_entries = manifest.for_font(dst_font, datamod.SPLIT_TEST)
    if not src_entries or not dst_entries:
        raise DataEmpty("empty test split")
    src_images = [datamod.load_entry(args.data, e, size) for e in src_entries]
    generated = trainermod.generate(bundle, cfg, src_images, args.direction)
    by_name = {os.path.basename(e.path): i for i, e in enumerate(src_entries)}
    pair_mse = []
    pair_psnr = []
    pair_ssim = []
    real_targets = []
    for e in dst_entries:
        real_targets.append(datamod.load_entry(args.data, e, size))
        name = os.path.basename(e.path)
        if name in by_name:
            gen = generated[by_name[name]]
            pair_mse.append(metricsmod.mse(gen, real_targets[-1]))
            pair_psnr.append(metricsmod.psnr(gen, real_targets[-1]))
            pair_ssim.append(metricsmod.ssim(gen, real_targets[-1]))
    if not pair_mse:
        raise DataEmpty("no filename-paired test images between the two fonts")
    stats_gen = metricsmod.feature_stats(
        metricsmod.extract_features(generated, args.features))
    stats_real = metricsmod.feature_stats(
        metricsmod.extract_features(real_targets, args.features))
    report = metricsmod.MetricReport(
        task=f"{src_font}->{dst_font}",
        n=len(pair_mse),
        mse=float(np.mean(pair_mse)),
        psnr=float(np.mean(pair_psnr)),
        ssim=float(np.mean(pair_ssim)),
        fid=metricsmod.fid(stats_gen, stats_real),
    )
    metricsmod.write_metric_csv(args.out, [report])
    print(metricsmod.CSV_HEADER)
    print(report.csv_row())
    return EXIT_OK


def _cmd_diversity(args) -> int:
    gen_files = _list_pngs(args.generated)
    ref_files = _list_pngs(args.reference)
    generated = [_read_png(os.path.join(args.generated, f)) for f in gen_files]
    reference = [_read_png(os.path.join(args.reference, f)) for f in ref_files]
    score, report = trainermod.diversity_diagnostic(generated, reference)
    print(f"diversity,{score:.9g}")
    print(f"generated_mean_distance,{report['generated_mean_distance']:.9g}")
    print(f"reference_mean_distance,{report['reference_mean_distance']:.9g}")
    print(f"duplicate_pairs,{report['duplicate_pairs']}")
    for members in report["duplicate_clusters"]:
        print("cluster," + ",".join(gen_files[i] for i in members))
    return EXIT_OK


def gradcheck_suite(seed: int) -> dict[str, float]:
    """Per-op central-difference checks in double precision."""
    rng = np.random.default_rng(seed)

    def t(shape, lo=-1.0, hi=1.0):
        return Tensor(rng.uniform(lo, hi, shape), requires_grad=True, dtype=np.float64)

    results: dict[str, float] = {}
    x = t((1, 2, 6, 6))
    w = t((3, 2, 3, 3))
    b = t((3,))
    results["conv2d"] = grad_check(
        lambda xx, ww, bb: ad.mean(ad.conv2d(xx, ww, bb, 1, 1)), [x, w, b])
    xt = t((1, 3, 4, 4))
    wt = t((3, 2, 4, 4))
    bt = t((2,))
    results["conv2d_transpose"] = grad_check(
        lambda xx, ww, bb: ad.mean(ad.tanh(ad.conv2d_transpose(xx, ww, bb, 2, 1))),
        [xt, wt, bt])
    xb = t((2, 3, 4, 4))
    gm = t((3,), 0.5, 1.5)
    bt2 = t((3,))
    results["batch_norm"] = grad_check(
        lambda xx, gg, bb: ad.mean(ad.tanh(ad.batch_norm(xx, gg, bb))),
        [xb, gm, bt2])
    # keep activation inputs away from the relu kink
    xa = Tensor(np.where(np.abs(a := rng.uniform(-1, 1, (4, 8))) < 0.05,
                         a + 0.1, a), requires_grad=True, dtype=np.float64)
    results["relu"] = grad_check(lambda v: ad.mean(ad.relu(v)), [xa])
    results["leaky_relu"] = grad_check(lambda v: ad.mean(ad.leaky_relu(v, 0.2)), [xa])
    xs = t((4, 8))
    results["tanh"] = grad_check(lambda v: ad.mean(ad.tanh(v)), [xs])
    results["sigmoid"] = grad_check(lambda v: ad.mean(ad.sigmoid(v)), [xs])
    a1, a2 = t((5, 5)), t((5, 5))
    results["add"] = grad_check(lambda u, v: ad.mean(ad.mul(ad.add(u, v), v)), [a1, a2])
    results["sub"] = grad_check(lambda u, v: ad.mean(ad.mul(ad.sub(u, v), u)), [a1, a2])
    results["mul"] = grad_check(lambda u, v: ad.mean(ad.mul(u, v)), [a1, a2])
    results["abs_mean"] = grad_check(lambda u, v: ad.abs_mean(u, v), [a1, a2])
    xl = t((4, 4), 0.1, 0.9)
    results["log"] = grad_check(lambda v: ad.mean(ad.log(v)), [xl])
    results["clamp"] = grad_check(
        lambda v: ad.mean(ad.clamp(v, -0.5, 0.5)), [t((4, 4), -2.0, 2.0)])
    c1, c2 = t((1, 2, 3, 3)), t((1, 1, 3, 3))
    results["concat"] = grad_check(
        lambda u, v: ad.mean(ad.tanh(ad.concat(u, v, 1))), [c1, c2])
    return results


def _cmd_gradcheck(args) -> int:
    results = gradcheck_suite(args.seed)
    worst = 0.0
    for op in sorted(results):
        err = results[op]
        worst = max(worst, err)
        status = "pass" if err < GRADCHECK_TOLERANCE else "FAIL"
        print(f"{op},{err:.3e},{status}")
    return EXIT_OK if worst < GRADCHECK_TOLERANCE else EXIT_NUMERIC


def _cmd_grid(args) -> int:
    manifest = datamod.read_manifest(args.rows)
    root = args.root or os.path.dirname(os.path.abspath(args.rows))
    fonts = manifest.fonts()
    if not fonts:
        raise DataEmpty("manifest has no entries")
    rows = []
    max_cols = 0
    size = args.size
    for font in fonts:
        entries = manifest.for_font(font)
        imgs = [datamod.load_entry(root, e, size) for e in entries]
        rows.append(imgs)
        max_cols = max(max_cols, len(imgs))
    canvas = np.ones((len(rows) * size, max_cols * size, 3), dtype=np.float32)
    for r, imgs in enumerate(rows):
        for c, img in enumerate(imgs):
            canvas[r * size:(r + 1) * size, c * size:(c + 1) * size] = img.data
    with open(args.out, "wb") as fh:
        fh.write(encode_png(image_from_array(canvas, KIND_RGB)))
    return EXIT_OK


# --- argument wiring ---

def _build_parser() -> tuple[_Parser, dict[str, _Parser]]:
    parser = _Parser(prog="skelfont", description=__doc__)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    subparsers: dict[str, _Parser] = {}

    def add(name, **kwargs):
        p = sub.add_parser(name, **kwargs)
        p.add_argument("--config", type=str, default=None,
                       help="TSV key/value file with flag defaults")
        subparsers[name] = p
        return p

    p = add("skeletonize", help="extract a glyph skeleton to a 1-channel PNG")
    p.add_argument("--in", dest="in_path", type=str, default=None)
    p.add_argument("--out", type=str, default=None)
    p.add_argument("--threshold", type=float, default=None)

    p = add("expand", help="write the 4-channel expanded tensor to a container")
    p.add_argument("--in", dest="in_path", type=str, default=None)
    p.add_argument("--out", type=str, default=None)
    p.add_argument("--threshold", type=float, default=None)

    p = add("synth", help="generate the two-font synthetic dataset")
    p.add_argument("--out", type=str, default=None)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--size", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)

    p = add("train", help="train the translation model pair")
    p.add_argument("--data", type=str, default=None)
    p.add_argument("--font-x", type=str, default=None)
    p.add_argument("--font-y", type=str, default=None)
    p.add_argument("--out", type=str, default=None)
    p.add_argument("--log", type=str, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--beta1", type=float, default=None)
    p.add_argument("--beta2", type=float, default=None)
    p.add_argument("--lambda-cyc", type=float, default=None)
    p.add_argument("--lambda-ske", type=float, default=None)
    p.add_argument("--size", type=int, default=None)
    p.add_argument("--width", type=int, default=None)
    p.add_argument("--blocks", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--threshold", type=float, default=None)
    p.add_argument("--skeleton-channel", type=_onoff, default=None)
    p.add_argument("--gan-loss", type=str, choices=["nonsat", "minimax"], default=None)
    p.add_argument("--ske-grad", type=str,
                   choices=["masked-intensity", "none"], default=None)
    p.add_argument("--checkpoint-every", type=int, default=None)
    p.add_argument("--resume", type=str, default=None)

    p = add("generate", help="translate a directory of glyph PNGs")
    p.add_argument("--ckpt", type=str, default=None)
    p.add_argument("--in-dir", type=str, default=None)
    p.add_argument("--out-dir", type=str, default=None)
    p.add_argument("--direction", type=str, choices=["xy", "yx"], default=None)

    p = add("eval", help="metric report for a trained checkpoint")
    p.add_argument("--ckpt", type=str, default=None)
    p.add_argument("--data", type=str, default=None)
    p.add_argument("--font-x", type=str, default=None)
    p.add_argument("--font-y", type=str, default=None)
    p.add_argument("--direction", type=str, choices=["xy", "yx"], default=None)
    p.add_argument("--out", type=str, default=None)
    p.add_argument("--features", type=str, default=None)

    p = add("diversity", help="mode-collapse diagnostic over image directories")
    p.add_argument("--generated", type=str, default=None)
    p.add_argument("--reference", type=str, default=None)

    p = add("gradcheck", help="finite-difference checks of every operator")
    p.add_argument("--seed", type=int, default=None)

    p = add("grid", help="tile manifest rows into a comparison PNG")
    p.add_argument("--rows", type=str, default=None)
    p.add_argument("--root", type=str, default=None)
    p.add_argument("--out", type=str, default=None)
    p.add_argument("--size", type=int, default=None)

    return parser, subparsers


_REQUIRED = {
    "skeletonize": ["in", "out"],
    "expand": ["in", "out"],
    "synth": ["out", "n", "size", "seed"],
    "train": ["data", "font-x", "font-y", "out", "seed"],
    "generate": ["ckpt", "in-dir", "out-dir"],
    "eval": ["ckpt", "data", "font-x", "font-y", "out"],
    "diversity": ["generated", "reference"],
    "gradcheck": ["seed"],
    "grid": ["rows", "out"],
}

_DEFAULTS = {
    "skeletonize": {"threshold": 0.5},
    "expand": {"threshold": 0.5},
    "synth": {},
    "train": {
        "epochs": 1, "steps": None, "batch_size": 4, "lr": 2e-4,
        "beta1": 0.5, "beta2": 0.999, "lambda_cyc": 1.0, "lambda_ske": 0.001,
        "size": 32, "width": 8, "blocks": 2, "threshold": 0.5,
        "skeleton_channel": True, "gan_loss": "nonsat",
        "ske_grad": "masked-intensity", "checkpoint_every": 0,
    },
    "generate": {"direction": "xy"},
    "eval": {"direction": "xy", "features": "flatten-gray-16"},
    "diversity": {},
    "gradcheck": {},
    "grid": {"size": 64},
}

_HANDLERS = {
    "skeletonize": _cmd_skeletonize,
    "expand": _cmd_expand,
    "synth": _cmd_synth,
    "train": _cmd_train,
    "generate": _cmd_generate,
    "eval": _cmd_eval,
    "diversity": _cmd_diversity,
    "gradcheck": _cmd_gradcheck,
    "grid": _cmd_grid,
}

# names whose flag uses a dash but the namespace uses an underscore
_FLAG_ALIASES = {"in": "in_path"}


def main(argv=None) -> int:
    if argv is None:
        argv = sys.argv[1:]
    parser, subparsers = _build_parser()
    try:
        try:
            args = parser.parse_args(argv)
        except SystemExit as exc:  # --help path
            return int(exc.code or 0)
        if args.command is None:
            parser.error("a subcommand is required")
        subparser = subparsers[args.command]
        if args.config is not None:
            _apply_config(args, subparser._actions, _read_config(args.config))
        missing = []
        for name in _REQUIRED[args.command]:
            dest = _FLAG_ALIASES.get(name, name.replace("-", "_"))
            if getattr(args, dest) is None:
                missing.append(f"--{name}")
        if missing:
            subparser.error(f"missing required flags: {', '.join(missing)}")
        for dest, value in _DEFAULTS[args.command].items():
            if getattr(args, dest, None) is None:
                setattr(args, dest, value)
        return _HANDLERS[args.command](args)
    except _UsageError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    except _USAGE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except _NUMERIC_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except _DATA_ERRORS as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()
