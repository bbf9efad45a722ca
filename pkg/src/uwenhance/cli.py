"""Command-line entry point.

Subcommands: synthesize | train | enhance | evaluate | ablate. Defaults come
from the built-in config, overridden by an optional JSON config file, then by
flags. Every run writes its effective config beside its outputs so results
are reproducible from the frozen config plus seed.

Exit codes: 0 success, 1 validation failure, 2 training divergence, 3 I/O.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

from . import datasets, metrics, training
from .errors import DataError, DivergenceError, ValidationError
from .losses import LossWeights

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_DIVERGENCE = 2
EXIT_IO = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems are validation failures
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        raise SystemExit(EXIT_VALIDATION)


def _freeze_config(out_dir: str, command: str, config: dict) -> None:
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "effective_config.json"), "w") as f:
        json.dump({"command": command, **config}, f, indent=2, sort_keys=True)


def _load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    if not os.path.exists(path):
        raise DataError(f"config file not found: {path}")
    with open(path) as f:
        return json.load(f)


def _train_config(args, file_cfg: dict) -> training.TrainConfig:
    cfg = training.TrainConfig.from_dict(file_cfg) if file_cfg else training.TrainConfig()
    overrides: dict = {}
    for name in (
        "learning_rate", "epochs", "max_steps", "seed", "checkpoint_every",
        "disable_da", "disable_feedback", "disable_pixel",
    ):
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    w = cfg.weights
    weight_overrides = {
        k: getattr(args, k)
        for k in ("lambda_cycle", "lambda_pixel", "lambda_coral")
        if getattr(args, k, None) is not None
    }
    if weight_overrides:
        overrides["weights"] = dataclasses.replace(w, **weight_overrides)
    return dataclasses.replace(cfg, **overrides) if overrides else cfg


def cmd_synthesize(args) -> int:
    type_ids = [t.strip() for t in args.types.split(",") if t.strip()]
    unknown = [t for t in type_ids if t not in datasets.WATER_TYPES]
    if unknown:
        raise ValidationError(f"unknown water type(s) {unknown}; choose from b, c, d")
    specs = [datasets.WATER_TYPES[t] for t in type_ids]
    resolution = None if args.resolution == "native" else int(args.resolution)
    # validate the corpus before creating anything so failure leaves no files
    datasets.scan_corpus(args.corpus)
    _freeze_config(
        args.out,
        "synthesize",
        {
            "corpus": args.corpus, "types": type_ids, "count": args.count,
            "seed": args.seed, "resolution": resolution, "split": args.split,
            "max_depth": args.max_depth,
        },
    )
    manifest = datasets.build_dataset(
        args.corpus, specs, args.count, args.out, args.seed,
        resolution=resolution, max_depth=args.max_depth, split=args.split,
    )
    print(
        f"wrote {len(manifest['records'])} quads to {args.out} "
        f"({len(manifest['skipped'])} sources skipped)"
    )
    return EXIT_OK


def cmd_train(args) -> int:
    config = _train_config(args, _load_config_file(args.config))
    _freeze_config(args.out, "train", config.to_dict())
    final = training.train_loop(
        args.dataset, args.real_pool, config, args.out, resume_from=args.resume
    )
    print(f"final checkpoint: {final}")
    return EXIT_OK


def cmd_enhance(args) -> int:
    _freeze_config(args.out, "enhance", {"checkpoint": args.checkpoint, "images": args.images})
    written, skipped = training.enhance(args.checkpoint, args.images, args.out)
    if skipped:
        print(f"warning: skipped {len(skipped)} unreadable file(s)", file=sys.stderr)
    print(f"enhanced {len(written)} image(s) into {args.out}")
    return EXIT_OK


def _evaluate_dir(results_dir: str, truth_dir: str | None) -> metrics.MetricsReport:
    if not os.path.isdir(results_dir):
        raise DataError(f"results directory not found: {results_dir}")
    report = metrics.MetricsReport()
    for name in sorted(os.listdir(results_dir)):
        path = os.path.join(results_dir, name)
        if not os.path.isfile(path):
            continue
        img = datasets.load_image(path)
        stem = os.path.splitext(name)[0]
        if truth_dir:
            truth_path = _find_by_stem(truth_dir, stem)
            if truth_path is None:
                raise ValidationError(f"no ground truth found for {name} in {truth_dir}")
            report.add(stem, **metrics.evaluate_pair(img, datasets.load_image(truth_path)))
        else:
            report.add(stem, **metrics.uiqm(img))
    return report


def _find_by_stem(directory: str, stem: str) -> str | None:
    for name in sorted(os.listdir(directory)):
        if os.path.splitext(name)[0] == stem:
            return os.path.join(directory, name)
    return None


def cmd_evaluate(args) -> int:
    _freeze_config(args.out, "evaluate", {"results": args.results, "truth": args.truth})
    report = _evaluate_dir(args.results, args.truth)
    with open(os.path.join(args.out, "metrics.json"), "w") as f:
        json.dump(report.to_dict(), f, indent=2, sort_keys=True)
    table = report.format_table()
    with open(os.path.join(args.out, "metrics.txt"), "w") as f:
        f.write(table)
    print(table, end="")
    return EXIT_OK


ABLATION_VARIANTS = {
    "full": {},
    "-DA": {"disable_da": True},
    "-PF": {"disable_feedback": True},
    "-PL": {"disable_pixel": True},
}


def cmd_ablate(args) -> int:
    base = _train_config(args, _load_config_file(args.config))
    _freeze_config(args.out, "ablate", base.to_dict())
    rows = []
    for name, flags in ABLATION_VARIANTS.items():
        variant_cfg = dataclasses.replace(base, **flags)
        variant_dir = os.path.join(args.out, name.replace("-", "minus_") if name != "full" else "full")
        _freeze_config(variant_dir, "train", variant_cfg.to_dict())
        checkpoint = training.train_loop(
            args.dataset,
            None if variant_cfg.disable_da else args.real_pool,
            variant_cfg,
            variant_dir,
        )
        enhanced_dir = os.path.join(variant_dir, "enhanced")
        training.enhance(checkpoint, args.eval_images, enhanced_dir)
        report = _evaluate_dir(enhanced_dir, None)
        rows.append({"variant": name, **report.aggregate()})
    with open(os.path.join(args.out, "ablation.json"), "w") as f:
        json.dump({"rows": rows}, f, indent=2, sort_keys=True)
    keys = ["uism", "uicm", "uiconm", "uiqm"]
    print(f"{'variant':<10}" + "".join(f"{k:>10}" for k in keys))
    for row in rows:
        print(f"{row['variant']:<10}" + "".join(f"{row.get(k, float('nan')):>10.4f}" for k in keys))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="uwenhance", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synthesize", help="build a synthetic quad dataset from RGB-D files")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--types", default="b,c,d")
    p.add_argument("--count", type=int, default=4, help="quads per water type")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--resolution", default="256", help="pixel size, or 'native'")
    p.add_argument("--split", default="train", choices=["train", "test"])
    p.add_argument("--max-depth", type=float, default=None, dest="max_depth")
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("train", help="train the enhancement network")
    p.add_argument("--dataset", required=True)
    p.add_argument("--real-pool", default=None, dest="real_pool")
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--resume", default=None)
    p.add_argument("--learning-rate", type=float, default=None, dest="learning_rate")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--max-steps", type=int, default=None, dest="max_steps")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--checkpoint-every", type=int, default=None, dest="checkpoint_every")
    p.add_argument("--lambda-cycle", type=float, default=None, dest="lambda_cycle")
    p.add_argument("--lambda-pixel", type=float, default=None, dest="lambda_pixel")
    p.add_argument("--lambda-coral", type=float, default=None, dest="lambda_coral")
    for flag in ("disable-da", "disable-feedback", "disable-pixel"):
        p.add_argument(
            f"--{flag}", action="store_const", const=True, default=None,
            dest=flag.replace("-", "_"),
        )
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("enhance", help="enhance a directory of images with a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--images", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_enhance)

    p = sub.add_parser("evaluate", help="score enhanced images")
    p.add_argument("--results", required=True)
    p.add_argument("--truth", default=None, help="paired ground truth; omit for no-reference only")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ablate", help="train and score the full model plus -DA/-PF/-PL variants")
    p.add_argument("--dataset", required=True)
    p.add_argument("--real-pool", default=None, dest="real_pool")
    p.add_argument("--eval-images", required=True, dest="eval_images")
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--max-steps", type=int, default=None, dest="max_steps")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_ablate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_VALIDATION
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except DivergenceError as exc:
        print(f"divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except (DataError, OSError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
