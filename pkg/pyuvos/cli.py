#  Copyright 2022 Upstream Data Inc
#
#  Licensed under the Apache License, Version 2.0 (the "License");
#  you may not use this file except in compliance with the License.
#  You may obtain a copy of the License at
#
#      http://www.apache.org/licenses/LICENSE-2.0
#
#  Unless required by applicable law or agreed to in writing, software
#  distributed under the License is distributed on an "AS IS" BASIS,
#  WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
#  See the License for the specific language governing permissions and
#  limitations under the License.

"""Command line entry point: `pyuvos train|infer|eval|make-data|sweep`."""

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

import toml

from pyuvos.config import load_config
from pyuvos.data.io import find_sequences
from pyuvos.data.synthetic import SyntheticClipSpec, make_clip, write_clip
from pyuvos.errors import ConfigError, PyuvosError
from pyuvos.logger import init_logger
from pyuvos.models import MODEL_VARIANTS
from pyuvos.pipeline import evaluate, load_model, run_inference, sweep_clip_length
from pyuvos.settings import PyuvosSettings
from pyuvos.train import train


def _clip_lengths(text: str) -> List[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma separated integers, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pyuvos", description="Video object segmentation from frames and optical flow.")
    parser.add_argument("--debug", action="store_true", help="log at DEBUG level")
    commands = parser.add_subparsers(dest="command", required=True)

    p = commands.add_parser("train", help="train on synthetic clips")
    p.add_argument("--config", type=Path, help="flat key = value toml file")
    p.add_argument("--steps", type=int, help="override the configured step count")
    p.add_argument("--out", type=Path, required=True, help="checkpoint to write")
    p.add_argument("--variant", default="MTNet", choices=list(MODEL_VARIANTS))
    p.add_argument("--curve", type=Path, help="loss curve CSV, default <out>.csv")

    p = commands.add_parser("infer", help="segment frame directories")
    p.add_argument("--ckpt", type=Path, required=True)
    p.add_argument("--frames", type=Path, required=True)
    p.add_argument("--flows", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--clip-len", type=int, dest="clip_len")
    p.add_argument("--config", type=Path, help="architecture, when the checkpoint has no sidecar")

    p = commands.add_parser("eval", help="score predictions against ground truth")
    p.add_argument("--pred", type=Path, required=True)
    p.add_argument("--gt", type=Path, required=True)
    p.add_argument("--mode", choices=["uvos", "vsod"], default="uvos")
    p.add_argument("--report", type=Path, help="CSV report; a .json file next to it gets the JSON form")

    p = commands.add_parser("make-data", help="render a synthetic clip")
    p.add_argument("--spec", type=Path, required=True, help="toml with clip spec fields and `frames`")
    p.add_argument("--out", type=Path, required=True)

    p = commands.add_parser("sweep", help="J&F against inference clip length")
    p.add_argument("--ckpt", type=Path, required=True)
    p.add_argument("--frames", type=Path, required=True)
    p.add_argument("--flows", type=Path, required=True)
    p.add_argument("--gt", type=Path, required=True)
    p.add_argument("--t", type=_clip_lengths, default=[1, 2, 4, 8, 12, 16])
    p.add_argument("--report", type=Path, help="CSV table, printed when omitted")
    p.add_argument("--config", type=Path)
    return parser


def cmd_train(args) -> None:
    model_config, train_config = load_config(args.config)
    train(model_config, train_config, args.out, steps=args.steps, variant=args.variant, curve=args.curve)


def cmd_infer(args) -> None:
    model_config = load_config(args.config)[0] if args.config else None
    run_inference(args.ckpt, args.frames, args.flows, args.out, args.clip_len, model_config)


def cmd_eval(args) -> None:
    report = evaluate(args.pred, args.gt, args.mode)
    if args.report is None:
        print(report.as_csv(), end="")
        return
    args.report.parent.mkdir(parents=True, exist_ok=True)
    args.report.write_text(report.as_csv())
    args.report.with_suffix(".json").write_text(report.as_json())


def cmd_make_data(args) -> None:
    try:
        data = toml.loads(args.spec.read_text())
    except (OSError, toml.TomlDecodeError) as e:
        raise ConfigError(f"cannot read clip spec {args.spec}: {e}")
    frames = int(data.pop("frames", 12))
    clip = make_clip(SyntheticClipSpec.from_dict(data), frames)
    write_clip(clip, args.out)
    logging.info(f"wrote {frames} frames to {args.out}")


def cmd_sweep(args) -> None:
    model_config = load_config(args.config)[0] if args.config else None
    model = load_model(args.ckpt, model_config)
    sequences = find_sequences(args.frames, args.flows, args.gt)
    table = sweep_clip_length(sequences, model, args.t, default=model.config.clip_len)
    if args.report is None:
        print(table.as_csv(), end="")
        return
    args.report.parent.mkdir(parents=True, exist_ok=True)
    args.report.write_text(table.as_csv())


COMMANDS = {
    "train": cmd_train,
    "infer": cmd_infer,
    "eval": cmd_eval,
    "make-data": cmd_make_data,
    "sweep": cmd_sweep,
}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.debug:
        PyuvosSettings().debug = True
    init_logger()
    try:
        COMMANDS[args.command](args)
    except PyuvosError as e:
        logging.debug(f"{args.command} failed", exc_info=True)
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
