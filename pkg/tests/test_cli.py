"""Command-line interface tests.  Everything runs in process through
``cli.main`` against a tiny synthetic dataset so the suite stays fast."""

import json
import os

import numpy as np
import pytest

from robustq import cli
from robustq.data import (load_checkpoint, mnist_paths, save_idx_images,
                          save_idx_labels)

from conftest import random_dataset


def _write_tiny_mnist(root):
    """An 8x8 single-channel corpus in IDX layout, small enough for seconds."""
    os.makedirs(root, exist_ok=True)
    stems = {"train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
             "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte")}
    for split, n, seed in (("train", 96, 0), ("test", 32, 1)):
        ds = random_dataset(n=n, shape=(1, 8, 8), seed=seed)
        pix = (ds.images[:, 0] * 255).round().astype(np.uint8)
        save_idx_images(os.path.join(root, stems[split][0]), pix)
        save_idx_labels(os.path.join(root, stems[split][1]),
                        ds.labels.astype(np.uint8))
    return root


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    return _write_tiny_mnist(str(tmp_path_factory.mktemp("idx")))


@pytest.fixture(scope="module")
def tiny_cfg(tmp_path_factory, corpus):
    path = tmp_path_factory.mktemp("cfg") / "tiny.json"
    path.write_text(json.dumps({
        "widths": [4], "blocks_per_stage": 1, "epochs": 2, "batch_size": 16,
        "train_limit": 96, "test_limit": 32, "bits_w": 4, "bits_a": 4,
        "seed": 0, "data_dir": corpus,
    }))
    return str(path)


def _train(out, tiny_cfg, mode, extra=()):
    argv = ["train", "--mode", mode, "--config", tiny_cfg,
            "--out-dir", out, *extra]
    return cli.main(argv)


def test_resolve_precedence(tmp_path):
    cfgfile = tmp_path / "c.json"
    cfgfile.write_text(json.dumps({"epochs": 7, "lr": 0.5}))
    parser = cli.build_parser()
    args = parser.parse_args(["train", "--config", str(cfgfile), "--lr", "0.25"])
    cfg = cli.resolve_config(args)
    assert cfg["epochs"] == 7          # file beats default
    assert cfg["lr"] == 0.25           # flag beats file
    assert cfg["batch_size"] == cli.DEFAULTS["batch_size"]


def test_resolve_rejects_unknown_key(tmp_path):
    cfgfile = tmp_path / "c.json"
    cfgfile.write_text(json.dumps({"lerning_rate": 0.5}))
    parser = cli.build_parser()
    args = parser.parse_args(["train", "--config", str(cfgfile)])
    with pytest.raises(cli.CliError):
        cli.resolve_config(args)


def test_lambda_auto_resolution():
    parser = cli.build_parser()
    cfg = cli.resolve_config(parser.parse_args(["train", "--bits-w", "1"]))
    assert cfg["lam"] == pytest.approx(0.003)
    cfg = cli.resolve_config(parser.parse_args(["train", "--bits-w", "4"]))
    assert cfg["lam"] == pytest.approx(3.0)
    cfg = cli.resolve_config(parser.parse_args(
        ["train", "--bits-w", "1", "--lambda", "0.7"]))
    assert cfg["lam"] == pytest.approx(0.7)


def test_train_natural_writes_outputs(tmp_path, tiny_cfg):
    out = str(tmp_path / "nat")
    assert _train(out, tiny_cfg, "natural") == 0
    for name in ("train-config.json", "log.jsonl", "model.ckpt"):
        assert os.path.exists(os.path.join(out, name)), name
    assert not os.path.exists(os.path.join(out, "pertset.ckpt"))
    lines = open(os.path.join(out, "log.jsonl")).read().splitlines()
    assert len(lines) == 2
    entry = json.loads(lines[0])
    assert entry["epoch"] == 0 and entry["mmd_loss"] == 0.0
    tensors, meta = load_checkpoint(os.path.join(out, "model.ckpt"))
    assert meta["mode"] == "natural"
    assert meta["arch"]["widths"] == [4]


def test_train_odgq_writes_pertset(tmp_path, tiny_cfg):
    out = str(tmp_path / "odgq")
    rc = _train(out, tiny_cfg, "odgq",
                ["--epochs", "4", "--nk", "2", "--eps", "8", "--lambda", "1.0"])
    assert rc == 0
    assert os.path.exists(os.path.join(out, "pertset.ckpt"))
    tensors, meta = load_checkpoint(os.path.join(out, "pertset.ckpt"))
    assert set(tensors) == {"store", "update_counts"}
    assert tensors["store"].shape[0] == 2
    # 6 batches per epoch, 2 rounds: slot 0 updated in round 0 only,
    # slot 1 in both rounds
    assert tensors["update_counts"].tolist() == [6, 12]
    log = [json.loads(l) for l in
           open(os.path.join(out, "log.jsonl")).read().splitlines()]
    assert len(log) == 2
    assert all(e["max_store"] >= 0 for e in log)


def test_rerun_from_resolved_config_is_bit_identical(tmp_path, tiny_cfg):
    out1, out2 = str(tmp_path / "a"), str(tmp_path / "b")
    assert _train(out1, tiny_cfg, "natural") == 0
    resolved = os.path.join(out1, "train-config.json")
    rc = cli.main(["train", "--config", resolved, "--out-dir", out2])
    assert rc == 0
    t1, _ = load_checkpoint(os.path.join(out1, "model.ckpt"))
    t2, _ = load_checkpoint(os.path.join(out2, "model.ckpt"))
    assert set(t1) == set(t2)
    for k in t1:
        np.testing.assert_array_equal(t1[k], t2[k])


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory, tiny_cfg):
    out = str(tmp_path_factory.mktemp("run"))
    assert _train(out, tiny_cfg, "odgq",
                  ["--epochs", "4", "--nk", "2", "--eps", "8"]) == 0
    return out


def test_eval_smoke(tmp_path, corpus, run_dir, capsys):
    out = str(tmp_path / "ev")
    rc = cli.main(["eval", "--ckpt", os.path.join(run_dir, "model.ckpt"),
                   "--data-dir", corpus, "--out-dir", out,
                   "--test-limit", "16", "--attacks", "natural,fgsm,pgd",
                   "--eps", "8", "--alpha", "4", "--steps", "2"])
    assert rc == 0
    text = capsys.readouterr().out
    assert "natural" in text and "FGSM" in text and "PGD-2" in text
    rep = json.load(open(os.path.join(out, "eval-report.json")))
    assert {r["label"] for r in rep["attacks"]} == {"FGSM", "PGD-2"}
    assert os.path.exists(os.path.join(out, "eval-table.txt"))


def test_eval_attacks_natural_token_is_clean_only(tmp_path, corpus, run_dir):
    out = str(tmp_path / "ev2")
    rc = cli.main(["eval", "--ckpt", os.path.join(run_dir, "model.ckpt"),
                   "--data-dir", corpus, "--out-dir", out,
                   "--test-limit", "16", "--attacks", "natural"])
    assert rc == 0
    rep = json.load(open(os.path.join(out, "eval-report.json")))
    assert rep["attacks"] == []
    assert 0.0 <= rep["clean_accuracy"] <= 1.0


def test_eval_blackbox_requires_surrogate(tmp_path, corpus, run_dir, capsys):
    rc = cli.main(["eval", "--ckpt", os.path.join(run_dir, "model.ckpt"),
                   "--data-dir", corpus, "--out-dir", str(tmp_path),
                   "--test-limit", "16", "--blackbox"])
    assert rc == 1
    assert "surrogate" in capsys.readouterr().err


def test_eval_missing_checkpoint_fails(tmp_path, corpus, capsys):
    rc = cli.main(["eval", "--ckpt", str(tmp_path / "nope.ckpt"),
                   "--data-dir", corpus, "--out-dir", str(tmp_path)])
    assert rc == 1
    assert "error:" in capsys.readouterr().err


def test_surface_smoke(tmp_path, corpus, run_dir):
    out = str(tmp_path / "surf")
    rc = cli.main(["surface", "--ckpt", os.path.join(run_dir, "model.ckpt"),
                   "--data-dir", corpus, "--out-dir", out,
                   "--test-limit", "16", "--grid", "3", "--eps-max", "8",
                   "--index", "1"])
    assert rc == 0
    csv = open(os.path.join(out, "surface.csv")).read().splitlines()
    assert csv[0] == "eps1,eps2,value"
    assert len(csv) == 10


def test_surface_grid_too_small_fails(tmp_path, corpus, run_dir, capsys):
    rc = cli.main(["surface", "--ckpt", os.path.join(run_dir, "model.ckpt"),
                   "--data-dir", corpus, "--out-dir", str(tmp_path),
                   "--test-limit", "16", "--grid", "1"])
    assert rc == 1
    assert "error:" in capsys.readouterr().err


def test_bound_smoke(tmp_path, corpus, run_dir):
    out = str(tmp_path / "bnd")
    rc = cli.main(["bound", "--ckpt", os.path.join(run_dir, "model.ckpt"),
                   "--pertset", os.path.join(run_dir, "pertset.ckpt"),
                   "--data-dir", corpus, "--out-dir", out,
                   "--test-limit", "32", "--eps", "8"])
    assert rc == 0
    rep = json.load(open(os.path.join(out, "bound.json")))
    assert len(rep["domains"]) == 2
    assert all(d["d_mmd"] >= 0 for d in rep["domains"])
    assert rep["lambda_hat"] >= 0


def test_dataset_verify_mnist(corpus, capsys):
    rc = cli.main(["dataset", "verify", "--kind", "mnist", "--path", corpus])
    assert rc == 0
    info = json.loads(capsys.readouterr().out)
    assert info["splits"]["train"]["count"] == 96
    assert info["splits"]["test"]["image_shape"] == [1, 8, 8]
    assert sum(info["splits"]["test"]["label_histogram"]) == 32


def test_dataset_verify_cifar(tmp_path, capsys):
    rng = np.random.default_rng(0)
    path = str(tmp_path / "data_batch_1.bin")
    recs = [bytes([int(rng.integers(0, 10))])
            + rng.integers(0, 256, 3072, dtype=np.uint8).tobytes()
            for _ in range(20)]
    with open(path, "wb") as f:
        f.write(b"".join(recs))
    rc = cli.main(["dataset", "verify", "--kind", "cifar10", "--path", path])
    assert rc == 0
    info = json.loads(capsys.readouterr().out)
    assert info["count"] == 20


def test_dataset_synth(tmp_path, capsys):
    out = str(tmp_path / "digits")
    rc = cli.main(["dataset", "synth", "--out", out,
                   "--train-count", "50", "--test-count", "20"])
    assert rc == 0
    imgs, labels = mnist_paths(out, "train")
    assert os.path.exists(imgs) and os.path.exists(labels)


def test_gradcheck_cli(capsys):
    rc = cli.main(["gradcheck"])
    assert rc == 0
    out = capsys.readouterr().out
    assert "PASS" in out and "FAIL" not in out
