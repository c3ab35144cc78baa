import json

import numpy as np
from PIL import Image

from feature_exporter.cli import main


def test_export_subcommand_happy_path(tmp_path, capsys):
    ents = tmp_path / "names.tsv"
    ents.write_text("http://x/A\tAlpha\nhttp://x/B\tBeta\n")
    rng = np.random.default_rng(3)
    img = tmp_path / "a.png"
    Image.fromarray(rng.integers(0, 256, size=(12, 12, 3), dtype=np.uint8)).save(img)
    imgs = tmp_path / "images.tsv"
    imgs.write_text(f"http://x/A\t{img}\n")
    out = tmp_path / "features.tsv"
    code = main([
        "export", "--entities", str(ents), "--images", str(imgs),
        "--out", str(out),
        "--text-encoder", "hash-text", "--image-encoder", "hash-image",
    ])
    assert code == 0
    lines = out.read_text().strip().splitlines()
    assert lines[0] == "dim\t64"
    assert len(lines) == 4  # two names + one image
    report = json.loads((tmp_path / "features.tsv.report.json").read_text())
    assert report["name_vectors"] == 2 and report["image_vectors"] == 1
    assert "wrote 2 name and 1 image" in capsys.readouterr().out


def test_missing_required_flag_exits_2(capsys):
    assert main(["export", "--entities", "x.tsv"]) == 2


def test_bad_input_exits_1(tmp_path, capsys):
    assert main([
        "export", "--entities", str(tmp_path / "absent.tsv"), "--out", str(tmp_path / "o"),
        "--text-encoder", "hash-text",
    ]) == 1
