"""
Command-line entry points.

Usage::

    ccgs synth   --out data/ [--seed 0]
    ccgs train   --corpus data/train.json --val data/val.json --out runs/a/
    ccgs eval    --corpus data/test.json --checkpoint runs/a/checkpoint.bin --out runs/a/
    ccgs predict --corpus data/test.json --checkpoint runs/a/checkpoint.bin --question-id q0003
    ccgs compare --corpus data/test.json --checkpoint runs/a/checkpoint.bin --out runs/a/

Settings come from the defaults or ``--config`` (JSON), then ``--preset``,
then ``--set section.field=value`` overrides, then the dedicated flags.
The effective configuration is written to ``<out>/config.json``.

Exit codes: 0 on success, 2 on invalid input, 3 on runtime or model errors.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys

from pathlib import Path
from typing import Callable, Sequence

from .base import CCGSModel
from .bm25 import bm25_build
from .config import CONFIGURATIONS, RunConfig
from .core.constants import EvalMode
from .core.corpus import load_corpus, save_corpus
from .core.synthetic import generate_synthetic_corpus, split_corpus
from .errors import CCGSError, ConfigError, ModelError, ValidationError
from .evaluation import (
    MetricsReport,
    compare,
    evaluate,
    localize_top,
    rank_videos,
    rank_videos_bm25,
)
from .numcore import load_checkpoint, save_checkpoint
from .training import fit, fit_repeats

logger = logging.getLogger(__name__)

CONFIG_FILE = 'config.json'
CHECKPOINT_FILE = 'checkpoint.bin'
LAST_CHECKPOINT_FILE = 'checkpoint.last.bin'
LOG_FILE = 'log.jsonl'
METRICS_JSON = 'metrics.json'
METRICS_CSV = 'metrics.csv'
PREDICTIONS_FILE = 'predictions.jsonl'



### Helper Functions

def _csv_list(kind: type) -> Callable[[str], list]:
    def parse(text: str) -> list:
        try:
            return [kind(item) for item in text.split(',') if item.strip()]
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected a comma-separated list, got {text!r}")
    return parse

def _output_dir(args: argparse.Namespace) -> Path | None:
    if args.out is None:
        return None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out

def _write_text(path: Path, text: str):
    path.write_text(text, encoding='utf-8')
    logger.info("Wrote %s", path)

def load_config(args: argparse.Namespace) -> RunConfig:
    """
    Assemble the effective configuration of a command.

    Without ``--config``, a ``config.json`` stored next to ``--checkpoint``
    is used as the base, so evaluation rebuilds the trained architecture.
    """
    path = args.config
    checkpoint = getattr(args, 'checkpoint', None)
    if path is None and checkpoint is not None:
        sibling = Path(checkpoint).with_name(CONFIG_FILE)
        if sibling.is_file():
            path = sibling
    config = RunConfig.load(path) if path is not None else RunConfig()
    if args.preset:
        config = config.with_preset(args.preset)

    overrides = list(args.set or [])
    if args.seed is not None:
        overrides += [f"train.seed={args.seed}", f"encoder.seed={args.seed}"]
    if getattr(args, 'mode', None) is not None:
        overrides.append(f"eval.mode={json.dumps(args.mode)}")
    if getattr(args, 'k_list', None) is not None:
        overrides.append(f"eval.rank_ks={json.dumps(args.k_list)}")
    if getattr(args, 'thresholds', None) is not None:
        overrides.append(f"eval.thresholds={json.dumps(args.thresholds)}")
    if getattr(args, 'workers', None) is not None:
        overrides.append(f"eval.workers={args.workers}")

    config = config.with_overrides(overrides)
    logger.info("Effective configuration: %s", json.dumps(config.to_dict(), sort_keys=True))
    return config

def load_model(config: RunConfig, checkpoint: str | Path | None) -> CCGSModel:
    """
    Build a model from a configuration and restore a checkpoint into it.
    """
    model = CCGSModel.from_config(config)
    if checkpoint is not None:
        model.load_state(load_checkpoint(checkpoint, dtype=model.dtype))
        logger.info("Restored %s from %s", model, checkpoint)
    return model

def compare_table(reports: dict[EvalMode, MetricsReport]) -> str:
    """
    Render reports side by side as CSV: one row per metric, one column per mode.
    """
    modes = list(reports)
    rows: dict[tuple[str, str], dict[EvalMode, float]] = {}
    for mode, report in reports.items():
        for rank, metric, value in report.rows():
            rows.setdefault((rank, metric), {})[mode] = value

    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator='\n')
    writer.writerow(['rank', 'metric', *(mode.value for mode in modes)])
    for (rank, metric), values in rows.items():
        cells = [f"{values[mode]:.2f}" if mode in values else '' for mode in modes]
        writer.writerow([rank, metric, *cells])
    return buffer.getvalue()



### Commands

def cmd_synth(args: argparse.Namespace) -> int:
    """
    Generate a synthetic corpus and write its train / val / test splits.
    """
    config = load_config(args)
    out = _output_dir(args) or Path('.')
    seed = args.seed if args.seed is not None else 0

    corpus = generate_synthetic_corpus(config.synth, seed)
    splits = split_corpus(corpus, config.synth.split_sizes, seed)
    for split, data in splits.items():
        save_corpus(data, out / f"{split.value}.json")
        logger.info("Wrote %d %s questions to %s", len(data), split.value, out / f"{split.value}.json")

    _write_text(out / CONFIG_FILE, config.to_json())
    return 0

def cmd_train(args: argparse.Namespace) -> int:
    """
    Train a model and write the best checkpoint and the training log.
    """
    config = load_config(args)
    out = _output_dir(args) or Path('.')
    _write_text(out / CONFIG_FILE, config.to_json())

    train = load_corpus(args.corpus)
    val = load_corpus(args.val) if args.val else None
    precision = config.model.precision

    if args.checkpoint is not None:
        if args.repeats != 1:
            raise ConfigError("--repeats cannot be combined with resuming from --checkpoint")
        model = load_model(config, args.checkpoint)
        result = fit(train, val, config, model=model, log_path=out / LOG_FILE)
    else:
        result = fit_repeats(train, val, config, repeats=args.repeats, log_path=out / LOG_FILE)

    save_checkpoint(result.best, out / CHECKPOINT_FILE, precision)
    save_checkpoint(result.last, out / LAST_CHECKPOINT_FILE, precision)
    logger.info(
        "Best checkpoint: step %d, validation Rank@1 mIoU %.2f (seed %d)",
        result.best_step, result.best_score, result.seed,
    )
    return 0

def cmd_eval(args: argparse.Namespace) -> int:
    """
    Evaluate a checkpoint on a corpus split and write the metrics.
    """
    config = load_config(args)
    split = load_corpus(args.corpus)
    mode = config.eval.mode
    model = None if mode == EvalMode.bm25 else load_model(config, args.checkpoint)

    result = evaluate(split, model, config.eval, mode=mode)
    out = _output_dir(args)
    if out is not None:
        _write_text(out / METRICS_JSON, result.report.to_json())
        _write_text(out / METRICS_CSV, result.report.to_csv())
        lines = [json.dumps(p.to_dict()) for p in result.predictions]
        _write_text(out / PREDICTIONS_FILE, '\n'.join(lines) + '\n')
        _write_text(out / f"eval.{CONFIG_FILE}", config.to_json())

    sys.stdout.write(result.report.to_csv())
    return 0

def cmd_predict(args: argparse.Namespace) -> int:
    """
    Rank the videos of a corpus for one question and print the top answer.
    """
    if args.question_id is None:
        raise ConfigError("predict requires --question-id")

    config = load_config(args)
    split = load_corpus(args.corpus)
    query = split.question(args.question_id).query()
    mode = config.eval.mode

    if mode == EvalMode.ccgs:
        prediction = rank_videos(query, split.videos, load_model(config, args.checkpoint))
    else:
        index = bm25_build(split.videos, k1=config.eval.bm25_k1, b=config.eval.bm25_b)
        prediction = rank_videos_bm25(query, index)
        if mode == EvalMode.pipeline:
            model = load_model(config, args.checkpoint)
            prediction = localize_top(prediction, query, split.videos, model)

    top = prediction.ranking[0]
    answer = {
        'question_id': prediction.question_id,
        'video_id': top.video_id,
        'start': top.interval.start if top.interval is not None else None,
        'end': top.interval.end if top.interval is not None else None,
        'score': top.score,
        'mode': mode.value,
    }
    text = json.dumps(answer, indent=2)
    out = _output_dir(args)
    if out is not None:
        _write_text(out / f"prediction.{prediction.question_id}.json", text)
        _write_text(out / f"predict.{CONFIG_FILE}", config.to_json())

    sys.stdout.write(text + '\n')
    return 0

def cmd_compare(args: argparse.Namespace) -> int:
    """
    Evaluate a checkpoint with every pipeline and print the metrics side by side.
    """
    config = load_config(args)
    split = load_corpus(args.corpus)
    model = load_model(config, args.checkpoint)

    reports = compare(split, model, config.eval)
    table = compare_table(reports)
    out = _output_dir(args)
    if out is not None:
        _write_text(out / 'compare.csv', table)
        payload = {mode.value: report.to_dict() for mode, report in reports.items()}
        _write_text(out / 'compare.json', json.dumps(payload, indent=2))
        _write_text(out / f"compare.{CONFIG_FILE}", config.to_json())

    sys.stdout.write(table)
    return 0



### Parser

COMMANDS = {
    'synth': cmd_synth,
    'train': cmd_train,
    'eval': cmd_eval,
    'predict': cmd_predict,
    'compare': cmd_compare,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='ccgs', description="Video corpus answer localization with global-span matrices.")
    parser.add_argument('--verbose', '-v', action='store_true', help="Log debug messages.")
    commands = parser.add_subparsers(dest='command', required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', type=str, help="JSON configuration file.")
    common.add_argument(
        '--preset', type=str, choices=list(CONFIGURATIONS), help="Named configuration preset.")
    common.add_argument(
        '--set', type=str, action='append', metavar='SECTION.FIELD=VALUE',
        help="Configuration override (repeatable).")
    common.add_argument('--seed', type=int, help="Random seed.")
    common.add_argument('--out', type=str, help="Output directory.")

    commands.add_parser('synth', parents=[common], help="Generate a synthetic corpus.")

    train = commands.add_parser('train', parents=[common], help="Train a model.")
    train.add_argument('--corpus', type=str, required=True, help="Training split (JSON).")
    train.add_argument('--val', type=str, help="Validation split (JSON).")
    train.add_argument('--checkpoint', type=str, help="Checkpoint to resume from.")
    train.add_argument(
        '--repeats', type=int, default=1, help="Number of seeds to train; the best run is kept.")

    evaluation = argparse.ArgumentParser(add_help=False)
    evaluation.add_argument('--corpus', type=str, required=True, help="Corpus split (JSON).")
    evaluation.add_argument('--checkpoint', type=str, help="Model checkpoint.")
    evaluation.add_argument('--mode', type=str, choices=EvalMode.choices(), help="Evaluation pipeline.")
    evaluation.add_argument('--k-list', type=_csv_list(int), help="Rank@k cut-offs, e.g. 1,10,100.")
    evaluation.add_argument(
        '--thresholds', type=_csv_list(float), help="IoU thresholds, e.g. 0.3,0.5,0.7.")
    evaluation.add_argument('--workers', type=int, help="Number of evaluation threads.")

    commands.add_parser('eval', parents=[common, evaluation], help="Evaluate a checkpoint.")
    predict = commands.add_parser(
        'predict', parents=[common, evaluation], help="Answer a single question.")
    predict.add_argument('--question-id', type=str, help="Question to answer.")
    commands.add_parser(
        'compare', parents=[common, evaluation], help="Compare all evaluation pipelines.")

    return parser

def main(argv: Sequence[str] | None = None) -> int:
    """
    Run a command and return its exit code.
    """
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format='%(asctime)s %(levelname)s %(name)s: %(message)s',
    )

    try:
        return COMMANDS[args.command](args)
    except CCGSError as e:
        logger.error("%s: %s", type(e).__name__, e)
        return e.exit_code
    except OSError as e:
        logger.error("I/O error: %s", e)
        return ValidationError.exit_code
    except Exception:
        logger.exception("Unexpected failure in %r", args.command)
        return ModelError.exit_code


if __name__ == '__main__':
    sys.exit(main())
