import io
import json
import logging
from pathlib import Path

import pytest

from omrf import cli
from omrf.cli import EXIT_DATA, EXIT_NUMERIC, EXIT_OK, EXIT_USAGE, build_parser, resolve_config, run
from omrf.train import NumericError

GOLDEN = Path(__file__).parent / "golden" / "score_report.txt"

TINY_MODEL = {"model": {"hidden": 4, "encoder": {"channels": [2, 2, 4, 4, 4]}}, "batch": 4}


def call(*argv):
    out = io.StringIO()
    code = run([str(a) for a in argv], stdout=out)
    return code, out.getvalue()


def tree(root):
    root = Path(root)
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def write_tokens(root, seqs, encoding="semantic"):
    root.mkdir(parents=True, exist_ok=True)
    for sid, toks in seqs.items():
        (root / f"{sid}.{encoding}").write_text(" ".join(toks) + "\n", encoding="utf-8")
    return root


def test_synth_twice_gives_identical_trees(tmp_path):
    assert call("synth", "--n", 50, "--seed", 7, "--out", tmp_path / "a")[0] == EXIT_OK
    assert call("synth", "--n", 50, "--seed", 7, "--out", tmp_path / "b")[0] == EXIT_OK
    a, b = tree(tmp_path / "a"), tree(tmp_path / "b")
    assert len(a) == 100 and a == b


def test_score_identical_dirs_reports_zeros(tmp_path):
    seqs = {"x": ["clef-G2", "note-C4_quarter"], "y": ["barline"]}
    d = write_tokens(tmp_path / "gt", seqs)
    code, out = call("score", d, d)
    assert code == EXIT_OK
    kv = dict(line.split("=") for line in out.split("\n\n")[0].splitlines())
    assert all(float(kv[k]) == 0.0 for k in ("seer", "syer", "omr_ned"))
    assert float(kv["note_accuracy"]) == 100.0


def test_score_machine_readable_golden(tmp_path):
    gt = write_tokens(tmp_path / "gt", {"a": ["clef-G2", "note-C4_quarter", "barline"],
                                        "b": ["note-D4_half", "barline"]})
    manifest = tmp_path / "pred.txt"
    manifest.write_text("a clef-G2 note-C4_quarter barline\nb note-D4_quarter\n"
                        "zz barline\n", encoding="utf-8")
    code, out = call("score", gt, manifest)
    assert code == EXIT_OK
    assert out.split("\n\n")[0] + "\n" == GOLDEN.read_text(encoding="utf-8")


def test_score_counts_missing_prediction_as_empty(tmp_path):
    gt = write_tokens(tmp_path / "gt", {"a": ["barline"], "b": ["barline", "barline"]})
    pred = write_tokens(tmp_path / "pred", {"a": ["barline"]})
    code, out = call("score", gt, pred)
    assert code == EXIT_OK and "syer=66.6667" in out


def test_train_on_empty_corpus_names_root(tmp_path, capsys):
    root = tmp_path / "empty"
    root.mkdir()
    code, _ = call("train", "--corpus", root, "--out", tmp_path / "run")
    assert code == EXIT_DATA
    assert str(root) in capsys.readouterr().err


def test_missing_corpus_is_data_error(tmp_path):
    assert call("train", "--corpus", tmp_path / "nope", "--out", tmp_path / "o")[0] == EXIT_DATA


@pytest.mark.parametrize("argv", [
    ["frobnicate"],
    [],
    ["train", "--split", "0.5,0.5"],
    ["train", "--augment", "maybe"],
    ["synth"],
    ["train", "--corpus", "x"],
    ["synth", "--n", "2", "--out", "unused"],
])
def test_usage_errors(argv):
    assert call(*argv)[0] == EXIT_USAGE


def test_unknown_config_key_is_usage_error(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"sed": 3}))
    assert call("synth", "--config", cfg, "--out", tmp_path / "o")[0] == EXIT_USAGE


def test_help_exits_zero():
    assert call("--help")[0] == EXIT_OK


def test_flags_override_file_override_defaults(tmp_path, caplog):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"seed": 5, "batch": 4, "split": [0.6, 0.2, 0.2],
                               "encoding": "agnostic"}))
    args = build_parser().parse_args(["train", "--config", str(cfg), "--seed", "9"])
    resolved = resolve_config(args)
    assert resolved.seed == 9
    assert resolved.batch == 4 and resolved.split == (0.6, 0.2, 0.2)
    assert resolved.encoding == "agnostic"
    assert resolved.augment is True and resolved.iters is None
    with caplog.at_level(logging.INFO, logger="omrf.cli"):
        call("synth", "--config", cfg, "--seed", 9, "--n", 2, "--vocab-size", 2,
             "--out", tmp_path / "s")
    echoed = [r.message for r in caplog.records if r.message.startswith("resolved config")]
    assert echoed and '"seed": 9' in echoed[0] and '"batch": 4' in echoed[0]


def test_numeric_failure_exit_code(tmp_path, monkeypatch):
    call("synth", "--n", 20, "--out", tmp_path / "c")

    def boom(*a, **k):
        raise NumericError("non-finite loss")

    monkeypatch.setattr(cli, "fit", boom)
    assert call("train", "--corpus", tmp_path / "c", "--out", tmp_path / "r")[0] == EXIT_NUMERIC


def test_end_to_end_commands_stay_in_their_outputs(tmp_path):
    corpus, run_dir = tmp_path / "corpus", tmp_path / "run"
    cfg = tmp_path / "tiny.json"
    cfg.write_text(json.dumps(TINY_MODEL))
    assert call("synth", "--n", 12, "--vocab-size", 6, "--out", corpus)[0] == EXIT_OK
    before = tree(corpus)

    code, out = call("train", "--corpus", corpus, "--out", run_dir, "--config", cfg,
                     "--iters", 2, "--augment", "off", "--split", "0.5,0.5,0")
    assert code == EXIT_OK, out
    assert {"vocab.txt", "config.json", "train.log", "best.omrf", "last.omrf"} <= set(tree(run_dir))
    assert len((run_dir / "train.log").read_text().splitlines()) == 2

    ckpt = run_dir / "last.omrf"
    code, out = call("evaluate", "--corpus", corpus, "--checkpoint", ckpt, "--subset", "all",
                     "--out", tmp_path / "eval")
    assert code == EXIT_OK and out.startswith("sequences=12\n")
    assert (tmp_path / "eval" / "report.txt").read_text() == out

    code, _ = call("predict", "--corpus", corpus, "--checkpoint", ckpt, "--out", tmp_path / "pred")
    assert code == EXIT_OK
    assert len(list((tmp_path / "pred").glob("*.semantic"))) == 12

    code, _ = call("score", corpus, tmp_path / "pred")
    assert code == EXIT_OK

    code, _ = call("augment-preview", "--corpus", corpus, "--n", 3, "--out", tmp_path / "aug")
    assert code == EXIT_OK
    assert len(list((tmp_path / "aug").glob("*_before.png"))) == 3
    assert len(list((tmp_path / "aug").glob("*_after.png"))) == 3

    assert tree(corpus) == before
    assert {p.name for p in tmp_path.iterdir()} == {"corpus", "run", "tiny.json", "eval", "pred", "aug"}


def test_evaluate_refuses_corrupt_checkpoint(tmp_path):
    call("synth", "--n", 20, "--out", tmp_path / "c")
    bad = tmp_path / "bad.omrf"
    bad.write_bytes(b"NOPE" + bytes(20))
    (tmp_path / "vocab.txt").write_text("a\n")
    assert call("evaluate", "--corpus", tmp_path / "c", "--checkpoint", bad)[0] == EXIT_DATA
