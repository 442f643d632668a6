"""Command-line interface.

Subcommands: gen (datasets), train, eval, bench (distance sweep), inspect
(file headers). Every subcommand accepts --config FILE, a JSON object whose
keys are the long option names (dashes or underscores); explicit CLI flags
override file values. Exits 0 on success, 1 with a diagnostic on stderr
otherwise.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import datapage as dp
from . import nn, pipeline


def _parse_geometry(text: str) -> dp.PageGeometry:
    """Parse 'F' or 'FxP': fragments per side, optional fragment pixels."""
    parts = str(text).lower().split("x")
    frags = int(parts[0])
    fragment_px = int(parts[1]) if len(parts) > 1 else 20
    return dp.PageGeometry(frags, fragment_px=fragment_px, cell_px=fragment_px // 2)


def _merge_config(args: argparse.Namespace, defaults: dict) -> dict:
    """defaults <- config file values <- explicit CLI flags."""
    merged = dict(defaults)
    if getattr(args, "config", None):
        with open(args.config) as fh:
            file_values = json.load(fh)
        for key, value in file_values.items():
            key = key.replace("-", "_")
            if key not in defaults:
                raise ValueError(f"unknown config key {key!r}")
            merged[key] = value
    for key in defaults:
        value = getattr(args, key, None)
        if value is not None:
            merged[key] = value
    return merged


def _experiment_config(v: dict, model: str = pipeline.MODEL_CNN) -> pipeline.ExperimentConfig:
    return pipeline.ExperimentConfig(
        geometry=_parse_geometry(v["geometry"]),
        channel=dp.ChannelConfig(
            z=float(v["z"]),
            noise_sigma=float(v["noise_sigma"]),
            max_shift_px=int(v["max_shift"]),
            seed=int(v["seed"]),
            shift_per_fragment=not v["shift_per_page"],
        ),
        train=nn.TrainConfig(
            batch_size=int(v["batch_size"]),
            learning_rate=float(v["lr"]),
            epochs=int(v["epochs"]),
            dropout_pool=float(v["dropout_pool"]),
            dropout_fc=float(v["dropout_fc"]),
            seed=int(v["train_seed"]),
        ),
        train_pages=int(v["train_pages"]),
        test_pages=int(v["test_pages"]),
        model=model,
        filters1=int(v["filters1"]),
        filters2=int(v["filters2"]),
        dense_units=int(v["dense_units"]),
    )


_SHARED_DEFAULTS = {
    "geometry": "20",
    "z": 0.05,
    "noise_sigma": 2.5,
    "max_shift": 5,
    "shift_per_page": False,
    "seed": 0,
    "train_pages": 30,
    "test_pages": 10,
    "epochs": 20,
    "batch_size": 100,
    "lr": 1e-3,
    "dropout_pool": 0.25,
    "dropout_fc": 0.5,
    "train_seed": 0,
    "filters1": 16,
    "filters2": 32,
    "dense_units": 128,
}


def _add_shared_channel_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--geometry", help="fragments per side, or FxP with fragment pixels (default 20)")
    p.add_argument("--z", type=float, help="propagation distance in meters")
    p.add_argument("--noise-sigma", type=float, dest="noise_sigma", help="Gaussian sigma on the 0-255 scale")
    p.add_argument("--max-shift", type=int, dest="max_shift", help="max lateral misalignment in pixels")
    p.add_argument("--shift-per-page", dest="shift_per_page", action="store_const", const=True,
                   help="draw one misalignment per page instead of per fragment")
    p.add_argument("--train-pages", type=int, dest="train_pages")
    p.add_argument("--test-pages", type=int, dest="test_pages")
    p.add_argument("--seed", type=int, help="master seed for page generation and the channel")


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--lr", type=float)
    p.add_argument("--dropout-pool", type=float, dest="dropout_pool")
    p.add_argument("--dropout-fc", type=float, dest="dropout_fc")
    p.add_argument("--train-seed", type=int, dest="train_seed", help="seed for init, shuffling and dropout")
    p.add_argument("--filters1", type=int, help="filter count of the first conv layer")
    p.add_argument("--filters2", type=int, help="filter count of the second conv layer")
    p.add_argument("--dense-units", type=int, dest="dense_units")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="holomem", description="Holographic memory read-channel simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("gen", help="generate train/test fragment datasets")
    _add_shared_channel_flags(p_gen)
    p_gen.add_argument("--out", required=True, help="output directory for train.hmfrag / test.hmfrag")
    p_gen.add_argument("--config", help="JSON config file; flags override")

    p_train = sub.add_parser("train", help="train a classifier on a fragment dataset")
    p_train.add_argument("--model", choices=[pipeline.MODEL_CNN, pipeline.MODEL_MLP, pipeline.MODEL_TEMPLATE],
                         required=True)
    p_train.add_argument("--data", required=True, help="training dataset (HMFRAG1)")
    p_train.add_argument("--out", required=True, help="output model file")
    p_train.add_argument("--log", help="per-epoch CSV log path")
    _add_train_flags(p_train)
    p_train.add_argument("--config", help="JSON config file; flags override")

    p_eval = sub.add_parser("eval", help="evaluate a model (or the template decoder) on a dataset")
    group = p_eval.add_mutually_exclusive_group(required=True)
    group.add_argument("--model-file", dest="model_file", help="trained model (HMNET1)")
    group.add_argument("--template", action="store_true", help="use the nearest-template decoder")
    p_eval.add_argument("--data", required=True, help="test dataset (HMFRAG1)")
    p_eval.add_argument("--report", required=True, help="output path prefix for .csv/.txt/confusion")
    p_eval.add_argument("--z", type=float, default=0.0, help="propagation distance recorded in the report")
    p_eval.add_argument("--config", help="JSON config file; flags override")

    p_bench = sub.add_parser("bench", help="full sweep: generate, train CNN and MLP, evaluate all decoders")
    p_bench.add_argument("--z-list", dest="z_list", help="comma-separated distances in meters",
                         default=None)
    p_bench.add_argument("--out-dir", dest="out_dir", required=True)
    _add_shared_channel_flags(p_bench)
    _add_train_flags(p_bench)
    p_bench.add_argument("--config", help="JSON config file; flags override")

    p_inspect = sub.add_parser("inspect", help="dump dataset or model file headers")
    p_inspect.add_argument("paths", nargs="+")

    return parser


def _cmd_gen(args) -> int:
    values = _merge_config(args, _SHARED_DEFAULTS)
    config = _experiment_config(values)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    info = pipeline.generate_dataset(config, out / "train.hmfrag", out / "test.hmfrag")
    print(f"wrote {info['train']} ({info['train_count']} fragments)")
    print(f"wrote {info['test']} ({info['test_count']} fragments)")
    return 0


def _cmd_train(args) -> int:
    if args.model == pipeline.MODEL_TEMPLATE:
        raise ValueError("template decoder requires no training")
    values = _merge_config(args, _SHARED_DEFAULTS)
    header = dp.read_fragment_header(args.data)
    fp = header["fragment_px"]
    values["geometry"] = f"1x{fp}"  # geometry of single fragments; page layout is irrelevant here
    config = _experiment_config(values, model=args.model)
    rows = run_log = pipeline.run_training(config, args.data, args.out, log_path=args.log)
    final = run_log[-1] if rows else {"mean_loss": float("nan"), "train_accuracy": float("nan")}
    print(f"trained {args.model} on {header['count']} fragments for {config.train.epochs} epochs: "
          f"final loss {final['mean_loss']:.4f}, train accuracy {final['train_accuracy']:.4f}")
    print(f"wrote {args.out}")
    return 0


def _cmd_eval(args) -> int:
    model = pipeline.MODEL_TEMPLATE if args.template else args.model_file
    name = pipeline.MODEL_TEMPLATE if args.template else Path(args.model_file).stem
    report = pipeline.evaluate_fer(model, args.data, z=args.z, model_name=name)
    prefix = Path(args.report)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    pipeline.write_fer_csv([report], str(prefix) + ".csv")
    with open(str(prefix) + ".txt", "w") as fh:
        fh.write(pipeline.format_report_text([report]))
    pipeline.write_confusion_csv(report, str(prefix) + "_confusion.csv")
    print(pipeline.format_report_text([report]), end="")
    return 0


def _cmd_bench(args) -> int:
    defaults = dict(_SHARED_DEFAULTS)
    defaults["z_list"] = "0.05,0.1,0.15"
    values = _merge_config(args, defaults)
    base = _experiment_config(values)
    z_list = [float(tok) for tok in str(values["z_list"]).split(",") if tok]
    reports = pipeline.run_benchmark(base, z_list, args.out_dir)
    print(pipeline.format_report_text(reports), end="")
    print(f"wrote {Path(args.out_dir) / 'fer.csv'}")
    return 0


def _cmd_inspect(args) -> int:
    for path in args.paths:
        with open(path, "rb") as fh:
            magic = fh.read(8)
        if magic == dp.FRAG_MAGIC:
            header = dp.read_fragment_header(path)
            print(f"{path}: fragment dataset, fragment_px={header['fragment_px']}, count={header['count']}")
        elif magic.startswith(b"HMNET1\x00"):
            rows = nn.model_summary(path)
            print(f"{path}: model, {len(rows)} blocks")
            for row in rows:
                shape = "x".join(str(s) for s in row["shape"]) or "-"
                print(f"  {row['type']:<14} shape {shape:<12} values {row['values']}")
        else:
            raise ValueError(f"{path}: unrecognized file (magic {magic!r})")
    return 0


_COMMANDS = {
    "gen": _cmd_gen,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "bench": _cmd_bench,
    "inspect": _cmd_inspect,
}


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except Exception as exc:  # noqa: BLE001 - single diagnostic line on stderr
        print(f"holomem {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
