"""The evpose command line, end to end on tiny data."""

import json
import logging

import numpy as np
import pytest
import yaml

from evpose.cli import helpers, images
from evpose.cli.cli import main
from evpose.events import EventStream, read_events, slice_packets, write_events
from evpose.exceptions import InvalidConfig
from evpose.ndgrad import ops
from evpose.pose import read_poses
from evpose.posenet import build_params
from evpose.trainer import Checkpoint, load_checkpoint, read_manifest, save_checkpoint, sequence_dir

logger = logging.getLogger(__name__)


def exit_code(argv) -> int:
    """Runs main, mapping a normal return to 0."""
    try:
        main([str(a) for a in argv])
    except SystemExit as e:
        return e.code
    return 0


@pytest.fixture(scope="module", name="run_dir")
def fixture_run_dir(synth_root, tmp_path_factory):
    """A dense_att run trained for two epochs through the CLI."""
    base = tmp_path_factory.mktemp("cli")
    config = base / "tiny.yml"
    config.write_text(
        yaml.safe_dump({"model": pytest.tiny_model().to_dict(), "train": pytest.tiny_train().to_dict()}),
        encoding="utf-8",
    )
    out = base / "run"
    assert exit_code(["train", "--config", config, "--data", synth_root, "--out", out, "--epochs", 2]) == 0
    return out


def test_missing_required_flag():
    """argparse errors exit 2."""
    assert exit_code(["synth"]) == 2
    assert exit_code(["nonsense"]) == 2


def test_synth_then_refuse(tmp_path, capsys):
    """A second synth into the same place needs -f."""
    out = tmp_path / "data"
    args = ["synth", "--out", out, "--sequences", 2, "--seed", 3, "--duration-us", 20_000]
    assert exit_code(args) == 0
    assert "train" in capsys.readouterr().out
    assert len(read_manifest(out)) == 2
    echoed = json.loads((out / helpers.CONFIG_ECHO).read_text(encoding="utf-8"))
    assert echoed["synth"]["sequences"] == 2
    assert exit_code(args) == 1
    assert exit_code(args + ["-f"]) == 0


def test_convert_empty_stream(tmp_path, capsys):
    """No events, no frames, just the index header."""
    path = tmp_path / "empty.evt1"
    write_events(EventStream(16, 16), path)
    out = tmp_path / "frames"
    assert exit_code(["convert", "--events", path, "--out", out]) == 0
    assert "0 frames" in capsys.readouterr().out
    assert (out / "frames.tsv").read_text(encoding="utf-8") == "frame\tt_start\tt_end\tevents\tfile\n"


def test_convert_recording(synth_root, tmp_path):
    """One image per interval and an index row for each."""
    events = sequence_dir(synth_root, "0000") / "events.evt1"
    out = tmp_path / "frames"
    assert exit_code(["convert", "--events", events, "--out", out, "--interval-us", 10_000]) == 0
    rows = (out / "frames.tsv").read_text(encoding="utf-8").splitlines()[1:]
    stream = read_events(events)
    assert len(rows) == len(slice_packets(stream, 10_000))
    assert sum(int(r.split("\t")[3]) for r in rows) == len(stream)
    image = images.read_pnm(out / rows[0].split("\t")[4])
    assert image.shape == (stream.height, stream.width, 3)


def test_gradcheck_exit_codes(monkeypatch):
    """Clean rules exit 0, a broken one exits 1."""
    assert exit_code(["gradcheck", "--only", "tanh", "sigmoid"]) == 0
    monkeypatch.setattr(ops, "_tanh_grad", lambda g, y: -g * (1 - y * y))
    assert exit_code(["gradcheck", "--only", "tanh"]) == 1


def test_train_outputs(run_dir):
    """Log, checkpoints and config echo land in the run directory."""
    lines = (run_dir / "train.log").read_text(encoding="utf-8").splitlines()
    assert len(lines) == 2
    for name in ("last.epc", "best.epc", helpers.CONFIG_ECHO):
        assert (run_dir / name).exists()
    ckpt = load_checkpoint(run_dir / "last.epc")
    assert ckpt.epoch == 2
    assert ckpt.model == pytest.tiny_model()


def test_eval_writes_reports(run_dir, synth_root, tmp_path):
    """report.json and report.tsv with sane numbers."""
    out = tmp_path / "eval"
    assert exit_code(["eval", "--checkpoint", run_dir / "best.epc", "--data", synth_root, "--out", out]) == 0
    report = json.loads((out / "report.json").read_text(encoding="utf-8"))
    overall = report["overall"]
    assert overall["frames"] > 0
    assert 0 <= overall["AP"] <= overall["AP50"] <= 100
    assert overall["MPJPE"] >= 0
    assert (out / "report.tsv").read_text(encoding="utf-8").splitlines()[-1].startswith("all\t")
    args = ["eval", "--checkpoint", run_dir / "best.epc", "--data", synth_root, "--out", out]
    assert exit_code(args + ["--crop", "events"]) == 0


def test_eval_empty_split(run_dir, tmp_path):
    """A dataset whose test split is empty is a usage error."""
    data = tmp_path / "one"
    assert exit_code(["synth", "--out", data, "--sequences", 1, "--duration-us", 50_000]) == 0
    assert [r["split"] for r in read_manifest(data)] == ["train"]
    args = ["eval", "--checkpoint", run_dir / "best.epc", "--data", data, "--out", tmp_path / "eval"]
    assert exit_code(args) == 2


def test_infer_writes_poses(run_dir, synth_root, tmp_path):
    """One sensor-space pose per frame interval from t = 0, or per label frame."""
    events = sequence_dir(synth_root, "0001") / "events.evt1"
    out = tmp_path / "infer"
    assert exit_code(["infer", "--checkpoint", run_dir / "best.epc", "--events", events, "--out", out]) == 0
    poses = read_poses(out / "poses.jsonl")
    assert len(poses) == len(slice_packets(read_events(events), pytest.interval, t0=0))
    assert all(p.K == 13 for p in poses)
    labels = read_poses(sequence_dir(synth_root, "0001") / "poses.jsonl")
    args = ["infer", "--checkpoint", run_dir / "best.epc", "--events", events, "--out", out]
    assert exit_code(args + ["--frames", len(labels)]) == 0
    assert len(read_poses(out / "poses.jsonl")) == len(labels)
    assert exit_code(args + ["--frames", -1]) == 2


def test_plot_images(run_dir, synth_root, tmp_path):
    """Overlays at input size, one heatmap per joint, attention on request."""
    out = tmp_path / "plot"
    args = ["plot", "--checkpoint", run_dir / "best.epc", "--data", synth_root, "--clip", 0, "--out", out]
    assert exit_code(args + ["--attention", "2,0"]) == 0
    overlays = sorted(out.glob("overlay_*.ppm"))
    assert len(overlays) == 3
    assert images.read_pnm(overlays[0]).shape == (32, 32, 3)
    assert len(list(out.glob("heatmap_*.pgm"))) == 3 * 13
    weights = images.read_pnm(out / "attention_t02_tau00_k00.pgm")
    assert weights.shape == (8, 8)
    assert exit_code(args[:5] + ["--clip", 99, "--out", out]) == 2
    assert exit_code(args + ["--attention", "2"]) == 2


def test_plot_attention_needs_dense_att(synth_root, tmp_path):
    """Asking an rnn checkpoint for attention maps is a usage error."""
    model = pytest.tiny_model(variant="rnn")
    path = tmp_path / "rnn.epc"
    save_checkpoint(Checkpoint(model, pytest.tiny_train(), build_params(model)), path)
    args = ["plot", "--checkpoint", path, "--data", synth_root, "--clip", 0, "--out", tmp_path / "plot"]
    assert exit_code(args + ["--attention", "1,0"]) == 2
    assert exit_code(args) == 0


def test_run_config_layers(tmp_path):
    """Defaults < file < flags, and the echo reads back as the same config."""
    run = helpers.RunConfig.resolve()
    assert run.train.lr == 5e-5
    assert run.model.variant == "dense_att"
    path = run.echo(tmp_path)
    assert helpers.RunConfig.resolve(path) == run
    layer = tmp_path / "layer.yml"
    layer.write_text("train:\n  T: 4\nmodel:\n  variant: rnn\n", encoding="utf-8")
    run = helpers.RunConfig.resolve(layer, {"train": {"T": 8, "seed": None}})
    assert (run.train.T, run.train.seed, run.model.variant) == (8, 0, "rnn")


@pytest.mark.parametrize(
    "text",
    ["extra:\n  a: 1\n", "- 1\n- 2\n", "train:\n  speed: 2\n", "train:\n  T: 32\n", "model: [1]\n"],
)
def test_run_config_rejects(tmp_path, text):
    """Unknown sections or keys, non-objects and T above T_max."""
    path = tmp_path / "bad.yml"
    path.write_text(text, encoding="utf-8")
    with pytest.raises(InvalidConfig):
        helpers.RunConfig.resolve(path)


def test_bad_config_file_exits_2(synth_root, tmp_path):
    """Configuration errors surface as exit 2."""
    path = tmp_path / "bad.yml"
    path.write_text("train:\n  T: 32\n", encoding="utf-8")
    assert exit_code(["train", "--config", path, "--data", synth_root, "--out", tmp_path / "run"]) == 2


def test_parse_pair():
    """'t,tau' strings."""
    assert helpers.parse_pair("3,1") == (3, 1)
    for text in ("3", "a,b", "1,2,3"):
        with pytest.raises(InvalidConfig):
            helpers.parse_pair(text)


def test_sort_loglevel(monkeypatch):
    """-v wins, then LOGLEVEL, then WARNING."""
    monkeypatch.setenv("LOGLEVEL", "debug")
    assert helpers.sort_loglevel(False) == logging.DEBUG
    assert helpers.sort_loglevel(True) == logging.INFO
    monkeypatch.setenv("LOGLEVEL", "chatty")
    assert helpers.sort_loglevel(False) == logging.WARNING
    monkeypatch.delenv("LOGLEVEL")
    assert helpers.sort_loglevel(False) == logging.WARNING


def test_direct_checkpoint_round_trip(run_dir):
    """The CLI's checkpoints load and carry a finite loss history."""
    ckpt = load_checkpoint(run_dir / "best.epc")
    assert ckpt.losses and np.isfinite(ckpt.losses).all()
