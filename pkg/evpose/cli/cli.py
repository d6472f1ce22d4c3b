"""A CLI interface to the evpose library. It's mostly a wrapper: generate
a synthetic event dataset, convert raw recordings into event frames,
train one of the recurrent pose networks, evaluate or run a checkpoint,
check gradients, and export figures.

Exit codes: 0 on success, 2 on bad arguments or configuration, 1 on
anything else that goes wrong (files, formats, diverging training).

Examples:
  evpose synth --out data/synth --sequences 40 --seed 7
  evpose train --data data/synth --out runs/att --variant dense_att
  evpose eval --checkpoint runs/att/best.epc --data data/synth --out runs/att/eval
  evpose gradcheck --full-model
"""

import argparse
import logging
import sys
from importlib.metadata import PackageNotFoundError, metadata, version
from pathlib import Path
from typing import Optional, Sequence

from prettytable import PrettyTable

from evpose.cli import gradcheck, helpers, images
from evpose.events import normalize_frame, read_events, stream_to_frames
from evpose.exceptions import EvposeError, InvalidArgument, InvalidState
from evpose.metrics import decode
from evpose.pose import write_poses
from evpose.posenet import VARIANTS, export_attention, unroll
from evpose.settings import worker_count
from evpose.synthgen import make_dataset
from evpose.trainer import ClipDataset, evaluate_dataset, infer_stream, load_checkpoint, train
from evpose.trainer.dataset import CROPS

logger = logging.getLogger(__name__)

FRAME_INDEX = "frames.tsv"
POSES = "poses.jsonl"


def _version() -> str:
    try:
        return f"{metadata('evpose')['Name']} {version('evpose')}"
    except PackageNotFoundError:
        return "evpose (not installed)"


parser = argparse.ArgumentParser(
    description=__doc__,
    formatter_class=argparse.RawDescriptionHelpFormatter,
    prog="evpose",
)
parser.add_argument(
    "-v",
    "--verbose",
    action="store_true",
    default=False,
    help="increase logging verbosity, otherwise LOGLEVEL applies",
)
parser.add_argument(
    "--version",
    action="version",
    version=_version(),
    help="print the version and quit",
)
commands = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)


def _config_arg(sub: argparse.ArgumentParser) -> None:
    sub.add_argument(
        "-c",
        "--config",
        help="YAML or JSON file with model/train/synth sections, overrides the defaults",
        default=None,
    )


synth_parser = commands.add_parser("synth", help="generate a synthetic event dataset")
_config_arg(synth_parser)
synth_parser.add_argument("--out", required=True, help="dataset directory")
synth_parser.add_argument("--sequences", type=int, default=None, help="number of recordings")
synth_parser.add_argument("--seed", type=int, default=None, help="generator seed")
synth_parser.add_argument(
    "--static-fraction", type=float, default=None, help="share of recordings with a frozen limb"
)
synth_parser.add_argument("--duration-us", type=int, default=None, help="recording length in µs")
synth_parser.add_argument("--noise-rate", type=float, default=None, help="noise events per pixel per second")
synth_parser.add_argument(
    "-f", "--force", action="store_true", default=False, help="replace an existing dataset"
)

convert_parser = commands.add_parser("convert", help="slice a recording into event frame images")
_config_arg(convert_parser)
convert_parser.add_argument("--events", required=True, help="EVT1 or text event file")
convert_parser.add_argument("--interval-us", type=int, default=None, help="frame length, default 8333")
convert_parser.add_argument("--count-cap", type=int, default=None, help="count shown at full brightness")
convert_parser.add_argument("--out", required=True, help="directory for frames and frames.tsv")

train_parser = commands.add_parser("train", help="train a pose network")
_config_arg(train_parser)
train_parser.add_argument("--data", required=True, help="dataset directory")
train_parser.add_argument("--out", required=True, help="run directory for checkpoints and train.log")
train_parser.add_argument("--variant", choices=VARIANTS, default=None, help="temporal connection variant")
train_parser.add_argument("--T", type=int, default=None, dest="T", help="frames per clip, default 16")
train_parser.add_argument("--epochs", type=int, default=None, help="epoch limit")
train_parser.add_argument("--seed", type=int, default=None, help="initialization and data order seed")
train_parser.add_argument("--resume", default=None, help="checkpoint to continue from")

eval_parser = commands.add_parser("eval", help="score a checkpoint on the test split")
_config_arg(eval_parser)
eval_parser.add_argument("--checkpoint", required=True, help="EPC1 checkpoint")
eval_parser.add_argument("--data", required=True, help="dataset directory")
eval_parser.add_argument("--out", required=True, help="directory for report.json and report.tsv")
eval_parser.add_argument("--split", default="test", help="manifest split to score")
eval_parser.add_argument("--T", type=int, default=None, dest="T", help="clip length, default the training T")
eval_parser.add_argument("--crop", choices=CROPS, default="pose", help="crop centre")

gradcheck_parser = commands.add_parser("gradcheck", help="finite-difference gradient checks")
gradcheck_parser.add_argument(
    "--full-model", action="store_true", default=False, help="also unroll every micro model variant"
)
gradcheck_parser.add_argument("--eps", type=float, default=1e-5, help="finite-difference step")
gradcheck_parser.add_argument(
    "--max-elements", type=int, default=8, help="elements sampled per model parameter"
)
gradcheck_parser.add_argument("--seed", type=int, default=0, help="input seed")
gradcheck_parser.add_argument("--only", nargs="*", default=None, help="suite names to run")

infer_parser = commands.add_parser("infer", help="decode poses from a raw recording")
infer_parser.add_argument("--checkpoint", required=True, help="EPC1 checkpoint")
infer_parser.add_argument("--events", required=True, help="EVT1 or text event file")
infer_parser.add_argument("--out", required=True, help="directory for poses.jsonl")
infer_parser.add_argument("--interval-us", type=int, default=None, help="frame length, default the training one")
infer_parser.add_argument("--T", type=int, default=None, dest="T", help="frames per window, default the training T")
infer_parser.add_argument("--frames", type=int, default=None, help="pad or truncate to this many frames")

plot_parser = commands.add_parser("plot", help="export overlays, heatmaps and attention maps")
plot_parser.add_argument("--checkpoint", required=True, help="EPC1 checkpoint")
plot_parser.add_argument("--data", required=True, help="dataset directory")
plot_parser.add_argument("--clip", type=int, required=True, help="clip number within the split")
plot_parser.add_argument("--out", required=True, help="directory for the images")
plot_parser.add_argument("--split", default="test", help="manifest split")
plot_parser.add_argument("--T", type=int, default=None, dest="T", help="clip length, default the training T")
plot_parser.add_argument(
    "--attention",
    type=helpers.parse_pair,
    default=None,
    metavar="t,tau",
    help="also write the attention maps W^t_tau (dense_att only)",
)


def cmd_synth(args) -> int:
    """Generates a dataset and prints counts per split."""
    run = helpers.RunConfig.resolve(
        args.config,
        {
            "synth": {
                "sequences": args.sequences,
                "seed": args.seed,
                "static_fraction": args.static_fraction,
                "duration": args.duration_us,
                "noise_rate": args.noise_rate,
            }
        },
    )
    s = run.synth
    rows = make_dataset(
        args.out,
        s.sequences,
        duration=s.duration,
        interval=s.interval,
        static_episode_fraction=s.static_fraction,
        seed=s.seed,
        overwrite=args.force,
        width=s.width,
        height=s.height,
        rate_per_px_speed=s.rate_per_px_speed,
        noise_rate=s.noise_rate,
        threads=worker_count(),
    )
    run.echo(args.out)
    table = PrettyTable(["split", "sequences", "static", "frames", "events"])
    for split in ("train", "test", None):
        part = [r for r in rows if split is None or r["split"] == split]
        totals = [sum(int(r[k]) for r in part) for k in ("static", "frames", "events")]
        table.add_row([split or "all", len(part)] + totals)
    table.align = "r"
    print(table)
    return 0


def cmd_convert(args) -> int:
    """Writes one PPM per frame interval plus a tab-separated frame index."""
    run = helpers.RunConfig.resolve(args.config, {"train": {"interval": args.interval_us, "count_cap": args.count_cap}})
    stream = read_events(args.events)
    frames = stream_to_frames(stream, run.train.interval)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    lines = ["frame\tt_start\tt_end\tevents\tfile"]
    for i, frame in enumerate(frames.frames):
        name = f"frame_{i:05d}.ppm"
        images.write_ppm(out / name, images.event_image(normalize_frame(frame, run.train.count_cap).grid))
        lines.append(f"{i}\t{frame.t_start}\t{frame.t_end}\t{int(frame.grid.sum())}\t{name}")
    (out / FRAME_INDEX).write_text("\n".join(lines) + "\n", encoding="utf-8")
    run.echo(out)
    print(f"{len(frames)} frames of {run.train.interval} µs from {len(stream)} events")
    return 0


def cmd_train(args) -> int:
    """Trains, writing train.log, last.epc and best.epc into --out."""
    run = helpers.RunConfig.resolve(
        args.config,
        {
            "model": {"variant": args.variant},
            "train": {"T": args.T, "epochs_max": args.epochs, "seed": args.seed},
        },
    )
    resume = None
    if args.resume:
        resume = load_checkpoint(args.resume)
        run.model = resume.model
        run.validate()
    train_set = ClipDataset(args.data, "train", T=run.train.T, stride=run.train.stride)
    val_set = ClipDataset(args.data, "test", T=run.train.T) if run.train.val_pck else None
    run.echo(args.out)
    result = train(train_set, run.model, run.train, out=args.out, resume=resume, val_dataset=val_set)
    table = PrettyTable(["epoch", "lr", "loss", "PCK", "seconds"])
    for record in result.history:
        table.add_row(record.line().split("\t"))
    table.align = "r"
    print(table)
    ckpt = result.checkpoint
    print(f"{run.model.variant}: {ckpt.epoch} epochs, lr {ckpt.schedule.lr:.3g}, best loss {ckpt.schedule.best:.6f}")
    return 0


def _dataset_for(args, ckpt) -> ClipDataset:
    steps = args.T or ckpt.train.T
    dataset = ClipDataset(args.data, args.split, T=steps, stride=steps)
    if not len(dataset):
        raise InvalidArgument(f"no {steps}-frame clips in the {args.split} split of {args.data}")
    labels = dataset.prepare(0, ckpt.model.input_size, ckpt.train).poses[0].K
    if labels != ckpt.model.K:
        raise InvalidState(f"labels have {labels} joints but the checkpoint predicts {ckpt.model.K}")
    return dataset


def cmd_eval(args) -> int:
    """Scores a checkpoint and writes report.json/report.tsv."""
    model = helpers.RunConfig.resolve(args.config).model if args.config else None
    ckpt = load_checkpoint(args.checkpoint, model=model)
    dataset = _dataset_for(args, ckpt)
    report = evaluate_dataset(dataset, ckpt.model, ckpt.params, ckpt.train, crop=args.crop)
    report.write(args.out)
    helpers.RunConfig(ckpt.model, ckpt.train).echo(args.out)
    print(report.table())
    return 0


def cmd_gradcheck(args) -> int:
    """Prints the worst relative error per suite; 1 if any is too large."""
    results = gradcheck.run_suites(args.full_model, args.eps, args.max_elements, args.seed, args.only)
    table = PrettyTable(["suite", "worst error", "elements", "seconds", "status"])
    for r in results:
        table.add_row([r.name, f"{r.error:.2e}", r.elements, f"{r.seconds:.2f}", "ok" if r.passed else "FAIL"])
    table.align = "r"
    table.align["suite"] = "l"
    print(table)
    failed = [r.name for r in results if not r.passed]
    if failed:
        logger.fatal("gradient check above %g for %s", gradcheck.TOLERANCE, ", ".join(failed))
        return 1
    return 0


def cmd_infer(args) -> int:
    """Runs a checkpoint over a recording and writes poses.jsonl."""
    ckpt = load_checkpoint(args.checkpoint)
    stream = read_events(args.events)
    poses = infer_stream(
        stream,
        ckpt.model,
        ckpt.params,
        args.T or ckpt.train.T,
        args.interval_us or ckpt.train.interval,
        ckpt.train.count_cap,
        frames=args.frames,
    )
    out = Path(args.out)
    write_poses(poses, out / POSES)
    helpers.RunConfig(ckpt.model, ckpt.train).echo(out)
    print(f"{len(poses)} poses written to {out / POSES}")
    return 0


def cmd_plot(args) -> int:
    """Writes overlays and heatmaps per frame, plus attention maps if asked."""
    ckpt = load_checkpoint(args.checkpoint)
    model = ckpt.model
    if args.attention and model.variant != "dense_att":
        raise InvalidArgument(f"--attention needs a dense_att checkpoint, this one is {model.variant}")
    dataset = _dataset_for(args, ckpt)
    if not 0 <= args.clip < len(dataset):
        raise InvalidArgument(f"clip {args.clip} outside 0..{len(dataset) - 1}")
    clip = dataset.prepare(args.clip, model.input_size, ckpt.train)
    out = Path(args.out)
    result = unroll(clip.inputs, model, ckpt.params)
    written = 0
    for t, b in enumerate(result.heatmaps):
        heatmaps = b.values[0]
        overlay = images.draw_pose(images.event_image(clip.inputs[t]), clip.poses[t], images.TRUTH)
        overlay = images.draw_pose(overlay, decode(heatmaps, model.heatmap_stride), images.PREDICTED)
        images.write_ppm(out / f"overlay_t{t:02d}.ppm", overlay)
        for k in range(model.K):
            images.write_pgm(out / f"heatmap_t{t:02d}_k{k:02d}.pgm", images.stretch(heatmaps[k]))
        written += 1 + model.K
    if args.attention:
        t, tau = args.attention
        weights = export_attention(clip.inputs, model, ckpt.params, t, tau)[0]
        for k in range(model.K):
            images.write_pgm(out / f"attention_t{t:02d}_tau{tau:02d}_k{k:02d}.pgm", images.gray(weights[k]))
        written += model.K
    print(f"{written} images written to {out}")
    return 0


synth_parser.set_defaults(func=cmd_synth)
convert_parser.set_defaults(func=cmd_convert)
train_parser.set_defaults(func=cmd_train)
eval_parser.set_defaults(func=cmd_eval)
gradcheck_parser.set_defaults(func=cmd_gradcheck)
infer_parser.set_defaults(func=cmd_infer)
plot_parser.set_defaults(func=cmd_plot)


def main(argv: Optional[Sequence[str]] = None) -> None:
    """Parses arguments, runs the subcommand and turns failures into exit codes."""
    args = parser.parse_args(argv)
    logging.basicConfig(level=helpers.sort_loglevel(args.verbose))
    try:
        code = args.func(args)
    except InvalidArgument as e:
        logger.fatal("%s", e)
        sys.exit(2)
    except (EvposeError, OSError) as e:
        logger.fatal("%s: %s", e.__class__.__name__, e)
        sys.exit(1)
    except KeyboardInterrupt:
        logger.fatal("Interrupted")
        sys.exit(1)
    if code:
        sys.exit(code)


if __name__ == "__main__":
    main()
