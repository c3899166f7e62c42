"""
Command-line front end.

    python cli.py metrics model_a.csv model_b.csv --bins 10 --format json
    python cli.py metrics data/synth/model_1.csv   # compare data/synth/theoretical_auc.csv
    python cli.py ensemble a.csv b.csv c.csv --strategy averaging -o fused.csv
    python cli.py fuse-train a.csv b.csv c.csv --config configs/train.json
    python cli.py augment fundus.ppm -o fundus.raw --seed 7
    python cli.py synth --spec configs/synth.json -o fixtures/
    python cli.py report --config configs/run.json
    python cli.py check-tables

Exit codes: 0 ok, 2 bad input (unreadable or invalid files, flags, configs),
1 anything else. The seed in effect is always printed to stderr.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from augment import AugmentConfig, Image, augment_batch, denormalize
from ensembles import STRATEGIES, run_strategy, write_output
from fusionnet import TrainConfig, load_network, save_network, train, write_training_log
from harness import (
    NETWORK_FILE,
    PUBLISHED_ROWS_PATH,
    TRAINING_LOG_FILE,
    RankedReport,
    ReportRow,
    load_published_rows,
    load_run_config,
    report_from_published,
    run_evaluation,
)
from metrics import calibration_bins, evaluate
from pnm import read_image, write_image
from predictions import align_panel, load_prediction_sets, prediction_csv, save_prediction_set
from report import render_csv, render_json, render_markdown, render_text
from settings import DECISION_THRESHOLD, DEFAULT_SEED, ECE_BINS, LOG_LEVEL, OUTPUT_DIR
from synthgen import (
    SyntheticSpec,
    generate_calibrated_set,
    generate_miscalibrated_set,
    generate_panel,
    theoretical_auc,
    write_panel,
)

logger = logging.getLogger("cli")

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_INPUT = 2

TABLE_FORMATS = ("text", "markdown", "csv", "json")
_RENDER = {"text": render_text, "markdown": render_markdown, "csv": render_csv, "json": render_json}


def _read_json(path: str | None) -> dict:
    if not path:
        return {}
    return json.loads(Path(path).read_text(encoding="utf-8"))


def _announce_seed(args) -> int:
    seed = args.seed if args.seed is not None else DEFAULT_SEED
    print(f"seed={seed}", file=sys.stderr)
    return seed


def _seeded(args, config):
    """The --seed flag wins over the config file, which wins over ENSEMBLE_SEED."""
    if args.seed is not None:
        config = config.model_copy(update={"seed": args.seed})
    print(f"seed={config.seed}", file=sys.stderr)
    return config


def _load_panel(files: list[str]):
    return align_panel(load_prediction_sets(files))


# ==============================
# Subcommands
# ==============================

def cmd_metrics(args) -> int:
    _announce_seed(args)
    sets = load_prediction_sets(args.files)
    reports = [evaluate(s, args.bins, args.threshold) for s in sets]

    if args.format == "json":
        payload = [
            {**r.model_dump(), "bins": [b.as_dict() for b in calibration_bins(s.probs, s.labels, args.bins)]}
            for r, s in zip(reports, sets)
        ]
        sys.stdout.write(json.dumps(payload, indent=2) + "\n")
    elif args.format == "text":
        for r in reports:
            print(f"{r.model_name}: {r.summary()}")
    else:
        # input order, not ranked
        table = RankedReport(rows=[ReportRow.from_metrics(r, "model") for r in reports])
        sys.stdout.write(_RENDER[args.format](table))
    return EXIT_OK


def cmd_ensemble(args) -> int:
    _announce_seed(args)
    if args.strategy == "label_fusion" and not args.net:
        raise ValueError("--strategy label_fusion needs --net")
    panel = _load_panel(args.files)
    net = load_network(args.net) if args.net else None
    output = run_strategy(args.strategy, panel, threshold=args.threshold, tie_class=args.tie_class, net=net)
    if args.output:
        path = write_output(output, args.output)
        logger.info(f"Wrote {STRATEGIES[args.strategy]['label']} output to {path}")
    else:
        sys.stdout.write(prediction_csv(output.fused))
    return EXIT_OK


def cmd_fuse_train(args) -> int:
    config = _seeded(args, TrainConfig.model_validate(_read_json(args.config)))
    panel = _load_panel(args.files)
    net, log = train(panel, config)
    out = Path(args.output_dir)
    save_network(net, out / NETWORK_FILE)
    write_training_log(log, out / TRAINING_LOG_FILE)
    print(f"best epoch {log.best_epoch}: {log.best.report.summary()}")
    return EXIT_OK


def _writable(img: Image, path: str, config: AugmentConfig) -> Image:
    if Path(path).suffix.lower() == ".raw":
        return img
    # 8-bit formats hold the pixel-space image
    pixels = denormalize(img, config.mean, config.std).pixels
    return Image(np.clip(pixels, 0.0, 1.0))


def cmd_augment(args) -> int:
    config = _seeded(args, AugmentConfig.model_validate(_read_json(args.config)))
    images = [read_image(p) for p in args.inputs]
    outputs = augment_batch(images, config)

    target = Path(args.output)
    if len(args.inputs) == 1 and target.suffix:
        paths = [target]
    else:
        paths = [target / f"{Path(p).stem}{args.ext}" for p in args.inputs]
    for img, path in zip(outputs, paths):
        write_image(_writable(img, str(path), config), path)
        logger.info(f"Wrote {path}")
    return EXIT_OK


def cmd_synth(args) -> int:
    if args.calibrated:
        seed = _announce_seed(args)
        if args.temperature is not None:
            pset = generate_miscalibrated_set(args.calibrated, seed, args.temperature)
        else:
            pset = generate_calibrated_set(args.calibrated, seed)
        target = Path(args.output)
        print(save_prediction_set(pset, target if target.suffix else target / f"{pset.model_name}.csv"))
        return EXIT_OK

    if not args.spec:
        raise ValueError("synth needs --spec or --calibrated N")
    spec = _seeded(args, SyntheticSpec.model_validate(_read_json(args.spec)))
    panel = generate_panel(spec)
    for m, path in enumerate(write_panel(panel, args.output)):
        print(f"{path}\ttheoretical_auc={theoretical_auc(spec, m):.6f}")
    return EXIT_OK


def cmd_report(args) -> int:
    config = load_run_config(args.config)
    updates = {}
    if args.output_dir:
        updates["output_dir"] = args.output_dir
    if args.formats:
        updates["formats"] = args.formats
    config = _seeded(args, config.model_copy(update=updates))
    report = run_evaluation(config)
    sys.stdout.write(render_text(report))
    return EXIT_OK


def cmd_check_tables(args) -> int:
    _announce_seed(args)
    report = report_from_published(load_published_rows(args.rows))
    sys.stdout.write(_RENDER[args.format](report))
    return EXIT_OK


# ==============================
# Parser
# ==============================

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help=f"random seed (default: config file, else {DEFAULT_SEED})")
    common.add_argument("--log-level", default=LOG_LEVEL, choices=["DEBUG", "INFO", "WARNING", "ERROR"], type=str.upper)

    parser = argparse.ArgumentParser(prog="ensemble-eval", description="Evaluate, ensemble and calibrate binary classifiers.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("metrics", parents=[common], help="AUC, F1, ECE and S per prediction file")
    p.add_argument("files", nargs="+")
    p.add_argument("--bins", type=int, default=ECE_BINS)
    p.add_argument("--threshold", type=float, default=DECISION_THRESHOLD)
    p.add_argument("--format", choices=TABLE_FORMATS, default="text")
    p.set_defaults(handler=cmd_metrics)

    p = sub.add_parser("ensemble", parents=[common], help="fuse aligned prediction files")
    p.add_argument("files", nargs="+")
    p.add_argument("--strategy", choices=list(STRATEGIES), required=True)
    p.add_argument("--net", help="trained network JSON (label_fusion)")
    p.add_argument("--threshold", type=float, default=DECISION_THRESHOLD)
    p.add_argument("--tie-class", type=int, choices=[0, 1], default=1)
    p.add_argument("-o", "--output", help="fused CSV/JSON path (default: CSV on stdout)")
    p.set_defaults(handler=cmd_ensemble)

    p = sub.add_parser("fuse-train", parents=[common], help="train the label-fusion network")
    p.add_argument("files", nargs="+")
    p.add_argument("--config", help="TrainConfig JSON")
    p.add_argument("--output-dir", default=OUTPUT_DIR)
    p.set_defaults(handler=cmd_fuse_train)

    p = sub.add_parser("augment", parents=[common], help="run the preprocessing/augmentation chain")
    p.add_argument("inputs", nargs="+", help=".pgm/.ppm/.raw images")
    p.add_argument("-o", "--output", required=True, help="output file (one input) or directory")
    p.add_argument("--config", help="AugmentConfig JSON")
    p.add_argument("--ext", choices=[".raw", ".pgm", ".ppm"], default=".raw", help="suffix in directory mode")
    p.set_defaults(handler=cmd_augment)

    p = sub.add_parser("synth", parents=[common], help="generate synthetic prediction files")
    p.add_argument("--spec", help="SyntheticSpec JSON")
    p.add_argument("--calibrated", type=int, metavar="N", help="one calibrated set of N samples instead")
    p.add_argument("--temperature", type=float, help="with --calibrated: sharpen by logit scaling")
    p.add_argument("-o", "--output", default=OUTPUT_DIR)
    p.set_defaults(handler=cmd_synth)

    p = sub.add_parser("report", parents=[common], help="full evaluation run from a RunConfig")
    p.add_argument("--config", required=True, help="RunConfig JSON")
    p.add_argument("--output-dir")
    p.add_argument("--format", dest="formats", action="append", choices=["text", "csv", "json", "markdown", "docx"])
    p.set_defaults(handler=cmd_report)

    p = sub.add_parser("check-tables", parents=[common], help="recompute S for published result rows")
    p.add_argument("--rows", default=str(PUBLISHED_ROWS_PATH))
    p.add_argument("--format", choices=TABLE_FORMATS, default="text")
    p.set_defaults(handler=cmd_check_tables)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=args.log_level,
        stream=sys.stderr,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.handler(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:
        logger.exception("Unexpected failure")
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
