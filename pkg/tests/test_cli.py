import json

import numpy as np
import pytest

from oodkit.cli import main
from oodkit.data import read_embeddings, write_embeddings
from oodkit.energy import write_scores
from oodkit.ppm import read_image, write_image
from oodkit.seeding import make_rng


@pytest.fixture()
def small_config(tmp_path):
    path = tmp_path / "config.json"
    payload = {
        "synthetic": {"n_per_class": 40, "seed": 3},
        "train": {"epochs": 2, "batch_size": 32, "seed": 3},
        "tails": {"draws_n_total": 200, "rank_n": 8},
    }
    path.write_text(json.dumps(payload))
    return path


def test_gen_data_writes_bundle(tmp_path, small_config):
    out = tmp_path / "bundle"
    assert main(["gen-data", "--config", str(small_config), "--out", str(out)]) == 0
    for name in ("train.oode", "test_id.oode", "test_semantic.oode", "test_modality.oode"):
        assert (out / name).exists()
    x, y = read_embeddings(out / "train.oode")
    assert x.shape == (4 * 36, 8)
    assert y is not None
    meta = json.loads((out / "meta.json").read_text())
    assert meta["k_known"] == 4


def test_train_score_eval_pipeline(tmp_path, small_config):
    bundle = tmp_path / "bundle"
    model = tmp_path / "model.oodm"
    assert main(["gen-data", "--config", str(small_config), "--out", str(bundle)]) == 0
    assert (
        main(
            [
                "train",
                "--config",
                str(small_config),
                "--data",
                str(bundle),
                "--mode",
                "CE_ONLY",
                "--out",
                str(model),
            ]
        )
        == 0
    )
    assert model.exists()
    assert (tmp_path / "model.history.csv").exists()

    id_csv = tmp_path / "id.csv"
    ood_csv = tmp_path / "ood.csv"
    for data_file, out_csv, label in (
        ("test_id.oode", id_csv, "ID"),
        ("test_modality.oode", ood_csv, "OOD"),
    ):
        assert (
            main(
                [
                    "score",
                    "--model",
                    str(model),
                    "--data",
                    str(bundle / data_file),
                    "--out",
                    str(out_csv),
                    "--label",
                    label,
                ]
            )
            == 0
        )
    report = tmp_path / "report.json"
    hist = tmp_path / "hist.csv"
    svg = tmp_path / "hist.svg"
    assert (
        main(
            [
                "eval",
                "--id",
                str(id_csv),
                "--ood",
                str(ood_csv),
                "--out",
                str(report),
                "--hist",
                str(hist),
                "--bins",
                "8",
                "--svg",
                str(svg),
            ]
        )
        == 0
    )
    payload = json.loads(report.read_text())
    assert 0.0 <= payload["auroc"] <= 1.0
    assert payload["n_id"] == 16 and payload["n_ood"] == 80
    assert hist.read_text().startswith("bin_low,bin_high,id_count,ood_count")
    assert svg.read_text().startswith("<svg")


def test_score_is_deterministic(tmp_path, small_config):
    bundle = tmp_path / "bundle"
    model = tmp_path / "model.oodm"
    main(["gen-data", "--config", str(small_config), "--out", str(bundle)])
    main(
        ["train", "--config", str(small_config), "--data", str(bundle),
         "--mode", "CE_ONLY", "--out", str(model)]
    )
    a = tmp_path / "a.csv"
    b = tmp_path / "b.csv"
    for out in (a, b):
        main(["score", "--model", str(model), "--data", str(bundle / "test_id.oode"),
              "--out", str(out)])
    assert a.read_bytes() == b.read_bytes()


def test_eval_hand_fixture(tmp_path):
    id_csv = tmp_path / "id.csv"
    ood_csv = tmp_path / "ood.csv"
    write_scores(id_csv, [0, 1], [3.0, 2.0], ["ID", "ID"])
    write_scores(ood_csv, [0, 1], [2.0, 1.0], ["OOD", "OOD"])
    report = tmp_path / "report.json"
    assert main(["eval", "--id", str(id_csv), "--ood", str(ood_csv), "--out", str(report)]) == 0
    assert json.loads(report.read_text())["auroc"] == 0.875


def test_nda_command_deterministic(tmp_path):
    in_dir = tmp_path / "in"
    out1 = tmp_path / "out1"
    out2 = tmp_path / "out2"
    in_dir.mkdir()
    rng = make_rng(0)
    for name in ("b.ppm", "a.ppm", "c.ppm"):
        write_image(in_dir / name, rng.random((24, 24, 3)))
    config = tmp_path / "c.json"
    config.write_text("{}")
    for out in (out1, out2):
        assert (
            main(["nda", "--in", str(in_dir), "--out", str(out), "--seed", "9",
                  "--config", str(config)])
            == 0
        )
    names = sorted(p.name for p in out1.iterdir())
    assert names == ["a.nda.ppm", "b.nda.ppm", "c.nda.ppm"]
    for name in names:
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()
        img = read_image(out1 / name)
        assert img.shape == (24, 24, 3)


def test_fit_gda_and_sample_tails(tmp_path):
    rng = make_rng(1)
    x = np.concatenate([rng.standard_normal((50, 3)), rng.standard_normal((50, 3)) + 5])
    y = np.concatenate([np.zeros(50, dtype=int), np.ones(50, dtype=int)])
    emb = tmp_path / "e.oode"
    write_embeddings(emb, x, y)
    gda_path = tmp_path / "m.gda1"
    assert main(["fit-gda", "--embeddings", str(emb), "--out", str(gda_path)]) == 0

    tails_path = tmp_path / "tails.oode"
    assert (
        main(["sample-tails", "--gda", str(gda_path), "--class", "1", "--n", "16",
              "--N", "500", "--seed", "4", "--out", str(tails_path)])
        == 0
    )
    vectors, labels = read_embeddings(tails_path)
    assert vectors.shape == (16, 3)
    assert set(labels.tolist()) == {1}

    # same seed twice gives identical bytes
    tails2 = tmp_path / "tails2.oode"
    main(["sample-tails", "--gda", str(gda_path), "--class", "1", "--n", "16",
          "--N", "500", "--seed", "4", "--out", str(tails2)])
    assert tails_path.read_bytes() == tails2.read_bytes()


def test_hist_command(tmp_path):
    scores = tmp_path / "scores.csv"
    write_scores(
        scores,
        range(6),
        [5.0, 4.0, 3.0, 1.0, 0.5, 0.0],
        ["ID", "ID", "ID", "OOD", "OOD", "OOD"],
    )
    out = tmp_path / "hist.csv"
    assert main(["hist", "--scores", str(scores), "--bins", "5", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert len(lines) == 6


def test_exit_codes(tmp_path, capsys):
    assert main(["no-such-command"]) == 1
    assert "error: 1:" in capsys.readouterr().err

    assert main(["eval", "--id", "missing.csv", "--ood", "missing.csv",
                 "--out", str(tmp_path / "r.json")]) == 2
    assert "error: 2:" in capsys.readouterr().err

    bad = tmp_path / "bad.oode"
    bad.write_bytes(b"NOPE" + bytes(20))
    assert main(["fit-gda", "--embeddings", str(bad), "--out", str(tmp_path / "m.gda1")]) == 2

    # unlabeled embeddings cannot be fitted
    unlabeled = tmp_path / "u.oode"
    write_embeddings(unlabeled, np.zeros((4, 2)))
    assert main(["fit-gda", "--embeddings", str(unlabeled), "--out", str(tmp_path / "m.gda1")]) == 2

    assert main(["train", "--data", str(tmp_path), "--mode", "WRONG",
                 "--out", str(tmp_path / "m.oodm")]) == 1


def test_help_exits_zero(capsys):
    assert main(["--help"]) == 0
    out = capsys.readouterr().out
    assert "gen-data" in out and "sample-tails" in out
    for cmd in ("gen-data", "train", "score", "eval", "nda", "fit-gda", "sample-tails", "hist"):
        assert main([cmd, "--help"]) == 0
        text = capsys.readouterr().out
        assert "--" in text
