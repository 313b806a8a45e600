"""Command-line interface: end-to-end runs on a tiny corpus, exit codes."""

import json
import os

import numpy as np
import pytest

from scanpath_tpp.cli import EXIT_NUMERIC, EXIT_OK, EXIT_USAGE, main
from scanpath_tpp.toydata import make_toy_dataset

CONFIG = """
[model]
d_img = 12
d_hist = 12
K = 2
G = 3
d_in = 6

[train]
lr = 0.005
max_epochs = 2
patience = 2
batch_size = 64
seed = 9
"""


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    make_toy_dataset(out_dir=str(root), n_stimuli=2, n_observers=3, seed=5)
    cfg = root / "cfg.toml"
    cfg.write_text(CONFIG)
    return {
        "manifest": str(root / "manifest.json"),
        "scanpaths": str(root / "scanpaths.jsonl"),
        "config": str(cfg),
        "root": root,
    }


def run_train(corpus, tmp_path, name="model.ckpt", extra=()):
    ckpt = str(tmp_path / name)
    rc = main([
        "train",
        "--manifest", corpus["manifest"],
        "--scanpaths", corpus["scanpaths"],
        "--config", corpus["config"],
        "--checkpoint", ckpt,
        *extra,
    ])
    assert rc == EXIT_OK
    return ckpt


def test_train_writes_checkpoint_and_history(corpus, tmp_path, capsys):
    hist = str(tmp_path / "history.csv")
    ckpt = run_train(corpus, tmp_path, extra=["--history", hist])
    out = capsys.readouterr().out
    assert os.path.exists(ckpt)
    assert "epochs=2" in out and "best_nll=" in out
    lines = open(hist).read().splitlines()
    assert lines[0] == "epoch,train_nll,val_nll"
    assert len(lines) == 3


def test_train_is_deterministic_across_threads(corpus, tmp_path):
    a = run_train(corpus, tmp_path, "a.ckpt", extra=["--threads", "1"])
    b = run_train(corpus, tmp_path, "b.ckpt", extra=["--threads", "3"])
    assert open(a, "rb").read() == open(b, "rb").read()


def test_sample_eval_saliency_stats_pipeline(corpus, tmp_path, capsys):
    ckpt = run_train(corpus, tmp_path)
    sim = str(tmp_path / "sim.jsonl")
    rc = main([
        "sample", "--manifest", corpus["manifest"], "--checkpoint", ckpt,
        "--out", sim, "--per-stimulus", "6", "--seed", "3",
    ])
    assert rc == EXIT_OK
    records = [json.loads(line) for line in open(sim)]
    assert {r["stimulus_id"] for r in records} == {"stim000", "stim001"}
    assert all(r["observer_id"].startswith("sim:") for r in records)

    report = str(tmp_path / "report.csv")
    rc = main([
        "eval", "--manifest", corpus["manifest"], "--scanpaths", corpus["scanpaths"],
        "--sim", sim, "--out", report, "--metrics", "sm,sed",
    ])
    assert rc == EXIT_OK
    body = open(report).read()
    assert body.startswith("metric,variant,value")
    assert "sed,mean," in body

    sal_dir = str(tmp_path / "sal")
    rc = main([
        "saliency", "--manifest", corpus["manifest"], "--scanpaths", corpus["scanpaths"],
        "--sim", sim, "--stimulus", "stim000", "--out-dir", sal_dir,
    ])
    assert rc == EXIT_OK
    out = capsys.readouterr().out
    assert open(os.path.join(sal_dir, "stim000_real.pgm"), "rb").read(2) == b"P5"
    assert os.path.exists(os.path.join(sal_dir, "stim000_sim.pgm"))
    assert "saliency_kl " in out and "auc_judd " in out and "nss " in out

    stats_dir = str(tmp_path / "stats")
    rc = main([
        "stats", "--manifest", corpus["manifest"], "--scanpaths", corpus["scanpaths"],
        "--sim", sim, "--out-dir", stats_dir,
    ])
    assert rc == EXIT_OK
    for name in ("durations.csv", "amplitudes.csv", "return_fixations.csv",
                 "durations.svg", "amplitudes.svg"):
        assert os.path.exists(os.path.join(stats_dir, name)), name
    out = capsys.readouterr().out
    assert "mean_returns_per_scanpath" in out
    rf_lines = open(os.path.join(stats_dir, "return_fixations.csv")).read().splitlines()
    assert rf_lines[0] == "offset,frequency"
    float(rf_lines[1].split(",")[1])  # parses as a plain number


def test_sample_is_reproducible(corpus, tmp_path):
    ckpt = run_train(corpus, tmp_path)
    outs = []
    for name in ("s1.jsonl", "s2.jsonl"):
        path = str(tmp_path / name)
        rc = main([
            "sample", "--manifest", corpus["manifest"], "--checkpoint", ckpt,
            "--out", path, "--per-stimulus", "4", "--seed", "17",
        ])
        assert rc == EXIT_OK
        outs.append(open(path, "rb").read())
    assert outs[0] == outs[1]


def test_eval_prints_table_when_no_out(corpus, tmp_path, capsys):
    ckpt = run_train(corpus, tmp_path)
    sim = str(tmp_path / "sim.jsonl")
    main(["sample", "--manifest", corpus["manifest"], "--checkpoint", ckpt,
          "--out", sim, "--per-stimulus", "6", "--seed", "3"])
    capsys.readouterr()
    rc = main([
        "eval", "--manifest", corpus["manifest"], "--scanpaths", corpus["scanpaths"],
        "--sim", sim, "--metrics", "sed",
    ])
    assert rc == EXIT_OK
    out = capsys.readouterr().out
    assert "metric" in out and "sed" in out


def test_missing_manifest_exits_with_usage_error(corpus, tmp_path, capsys):
    rc = main([
        "train", "--manifest", str(tmp_path / "nope.json"),
        "--scanpaths", corpus["scanpaths"],
        "--checkpoint", str(tmp_path / "x.ckpt"),
    ])
    assert rc == EXIT_USAGE
    assert "error:" in capsys.readouterr().err


def test_unknown_config_key_exits_with_usage_error(corpus, tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text("[train]\nlearning_rat = 0.1\n")
    rc = main([
        "train", "--manifest", corpus["manifest"], "--scanpaths", corpus["scanpaths"],
        "--config", str(bad), "--checkpoint", str(tmp_path / "x.ckpt"),
    ])
    assert rc == EXIT_USAGE
    assert "learning_rat" in capsys.readouterr().err


def test_unknown_config_table_exits_with_usage_error(corpus, tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text("[optimizer]\nlr = 0.1\n")
    rc = main([
        "train", "--manifest", corpus["manifest"], "--scanpaths", corpus["scanpaths"],
        "--config", str(bad), "--checkpoint", str(tmp_path / "x.ckpt"),
    ])
    assert rc == EXIT_USAGE


def test_unknown_stimulus_in_scanpaths_exits_with_usage_error(corpus, tmp_path, capsys):
    rogue = tmp_path / "rogue.jsonl"
    rogue.write_text(json.dumps({
        "stimulus_id": "ghost", "observer_id": "o", "unit": "s",
        "fixations": [{"x": 1, "y": 1, "tau": 0.2}],
    }) + "\n")
    rc = main([
        "train", "--manifest", corpus["manifest"], "--scanpaths", str(rogue),
        "--checkpoint", str(tmp_path / "x.ckpt"),
    ])
    assert rc == EXIT_USAGE
    assert "ghost" in capsys.readouterr().err


def test_unknown_eval_stimulus_in_sim(corpus, tmp_path, capsys):
    rogue = tmp_path / "rogue.jsonl"
    rogue.write_text(json.dumps({
        "stimulus_id": "ghost", "observer_id": "sim:0", "unit": "s",
        "fixations": [{"x": 1, "y": 1, "tau": 0.2}, {"x": 5, "y": 5, "tau": 0.2}],
    }) + "\n")
    rc = main([
        "eval", "--manifest", corpus["manifest"], "--scanpaths", corpus["scanpaths"],
        "--sim", str(rogue),
    ])
    assert rc == EXIT_USAGE


def test_argparse_rejects_missing_required(corpus):
    with pytest.raises(SystemExit) as exc:
        main(["train", "--manifest", corpus["manifest"]])
    assert exc.value.code == 2


def test_bad_sm_bins_argument(corpus, tmp_path):
    with pytest.raises(SystemExit) as exc:
        main([
            "eval", "--manifest", corpus["manifest"],
            "--scanpaths", corpus["scanpaths"],
            "--sim", corpus["scanpaths"], "--sm-bins", "fourteen",
        ])
    assert exc.value.code == 2


def test_saliency_requires_known_stimulus(corpus, tmp_path, capsys):
    rc = main([
        "saliency", "--manifest", corpus["manifest"], "--scanpaths", corpus["scanpaths"],
        "--stimulus", "ghost", "--out-dir", str(tmp_path),
    ])
    assert rc == EXIT_USAGE
    assert "ghost" in capsys.readouterr().err


def test_features_dir_override(corpus, tmp_path):
    # point --features-dir at the corpus features directory explicitly
    features = os.path.join(os.path.dirname(corpus["manifest"]), "features")
    ckpt = str(tmp_path / "fd.ckpt")
    rc = main([
        "train", "--manifest", corpus["manifest"], "--scanpaths", corpus["scanpaths"],
        "--config", corpus["config"], "--checkpoint", ckpt,
        "--features-dir", features,
    ])
    assert rc == EXIT_OK
    baseline = run_train(corpus, tmp_path, "base.ckpt")
    assert open(ckpt, "rb").read() == open(baseline, "rb").read()


def test_seed_flag_overrides_config_seed(corpus, tmp_path):
    a = run_train(corpus, tmp_path, "s9.ckpt")               # config seed 9
    b = run_train(corpus, tmp_path, "s9b.ckpt", extra=["--seed", "9"])
    c = run_train(corpus, tmp_path, "s10.ckpt", extra=["--seed", "10"])
    assert open(a, "rb").read() == open(b, "rb").read()
    assert open(a, "rb").read() != open(c, "rb").read()
