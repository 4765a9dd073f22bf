import csv
import hashlib
import json

import numpy as np
import pytest
from PIL import Image

from stainbary.cli import EXIT_CONVERGENCE, EXIT_INPUT, EXIT_USAGE, main
from stainbary.synthetic import he_tile, recolor_lab


def digest(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


def load(path):
    return np.asarray(Image.open(path).convert("RGB"))


@pytest.fixture(scope="module")
def images(tmp_path_factory):
    d = tmp_path_factory.mktemp("img")
    paths = {}
    for name, img in {
        "src": he_tile(48, 48, seed=1),
        "mid": recolor_lab(he_tile(48, 48, seed=2), (1.0, 1.1, 0.9), (-4, 3, -5)),
        "tgt": recolor_lab(he_tile(48, 48, seed=3), (0.9, 1.2, 1.1), (2, 6, 1)),
    }.items():
        paths[name] = d / f"{name}.png"
        Image.fromarray(img).save(paths[name])
    jpg = d / "src.jpg"
    Image.fromarray(he_tile(48, 48, seed=1)).save(jpg, quality=95)
    paths["jpg"] = jpg
    return paths


def err_json(capsys):
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


def test_normalize_self_reference(images, tmp_path):
    out = tmp_path / "n.png"
    rc = main(["normalize", "--in", str(images["src"]), "--ref", str(images["src"]),
               "--out", str(out), "--k", "64"])
    assert rc == 0
    assert np.abs(load(out).astype(int) - load(images["src"])).max() <= 2


def test_normalize_report(images, tmp_path):
    out, report = tmp_path / "n.png", tmp_path / "r.json"
    rc = main(["normalize", "--in", str(images["src"]), "--ref", str(images["mid"]),
               "--ref", str(images["tgt"]), "--out", str(out), "--k", "32",
               "--report", str(report)])
    assert rc == 0
    data = json.loads(report.read_text())
    assert data["command"] == "normalize"
    assert data["config"]["k"] == 32
    assert data["config"]["references"] == [str(images["mid"]), str(images["tgt"])]
    assert data["iterations"] > 0
    assert 0.0 <= data["clip_fraction"] <= 1.0
    assert data["wall_time_s"] >= 0
    assert list(data) == sorted(data)


def test_jpeg_input_accepted(images, tmp_path):
    out = tmp_path / "j.png"
    assert main(["normalize", "--in", str(images["jpg"]), "--ref", str(images["tgt"]),
                 "--out", str(out), "--k", "16"]) == 0
    assert load(out).shape == (48, 48, 3)


def test_augment_files_and_endpoint(images, tmp_path):
    out = tmp_path / "aug"
    rc = main(["augment", "--in", str(images["src"]), "--ref", str(images["mid"]),
               "--ref", str(images["tgt"]), "--t", "0,0.25,0.5,0.75,1",
               "--out-dir", str(out), "--k", "32"])
    assert rc == 0
    files = sorted(p.name for p in out.iterdir())
    assert files == [f"src_t{i:02d}.png" for i in range(5)]
    assert np.array_equal(load(out / "src_t00.png"), load(images["src"]))


def test_byte_reproducible(images, tmp_path):
    hashes = []
    for run in ("a", "b"):
        out = tmp_path / run
        assert main(["augment", "--in", str(images["src"]), "--ref", str(images["tgt"]),
                     "--t", "0,0.5,1", "--out-dir", str(out), "--k", "32"]) == 0
        hashes.append([digest(p) for p in sorted(out.iterdir())])
    assert hashes[0] == hashes[1]


def test_barycenter_csv(images, tmp_path):
    out = tmp_path / "b.csv"
    rc = main(["barycenter", "--in", str(images["src"]), "--ref", str(images["tgt"]),
               "--out", str(out), "--k", "16"])
    assert rc == 0
    rows = list(csv.reader(out.open()))
    assert rows[0] == ["L", "a", "b", "weight"]
    w = np.array([float(r[3]) for r in rows[1:]])
    assert abs(w.sum() - 1) <= 1e-9 and np.all(w >= 0)


def test_barycenter_explicit_weights(images, tmp_path):
    out = tmp_path / "b.csv"
    rc = main(["barycenter", "--in", str(images["src"]), "--ref", str(images["tgt"]),
               "--weights", "1,0", "--out", str(out), "--k", "8"])
    assert rc == 0
    rows = list(csv.reader(out.open()))[1:]
    assert sum(float(r[3]) > 0 for r in rows) <= 8


def test_metrics_json(images, tmp_path, capsys):
    out = tmp_path / "m.json"
    rc = main(["metrics", "--pairs", f"{images['src']},{images['tgt']}",
               "--pairs", f"{images['src']},{images['src']}", "--out", str(out)])
    assert rc == 0
    data = json.loads(capsys.readouterr().out)
    assert data == json.loads(out.read_text())
    assert -1 <= data["ssim"] <= 1
    assert data["count"] == 2
    assert data["pairs"][1]["ssim"] == 1.0
    vals = [p["ssim"] for p in data["pairs"]]
    assert data["ssim"] == pytest.approx(np.mean(vals))
    assert data["ssim_std"] == pytest.approx(np.std(vals))


def test_info(capsys):
    assert main(["info"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert data["defaults"]["k"] == 256
    assert "simplex" in data["schedules"]


def test_unreadable_input(images, tmp_path, capsys):
    bad = tmp_path / "bad.png"
    bad.write_text("not an image")
    rc = main(["normalize", "--in", str(bad), "--ref", str(images["tgt"]),
               "--out", str(tmp_path / "x.png")])
    assert rc == EXIT_INPUT
    assert err_json(capsys)["error"] == "input"
    rc = main(["normalize", "--in", str(tmp_path / "missing.png"), "--ref", str(images["tgt"]),
               "--out", str(tmp_path / "x.png")])
    assert rc == EXIT_INPUT
    assert not (tmp_path / "x.png").exists()


@pytest.mark.parametrize("argv", [
    ["normalize", "--in", "a.png"],
    ["normalize", "--in", "a.png", "--ref", "b.png", "--out", "o.png", "--k", "many"],
    ["augment", "--in", "a.png", "--ref", "b.png", "--out-dir", "o", "--t", "0,x"],
    ["frobnicate"],
    [],
])
def test_invalid_flags(argv, capsys):
    assert main(argv) == EXIT_USAGE
    assert err_json(capsys)["error"] == "usage"


def test_too_many_references(images, tmp_path, capsys):
    argv = ["normalize", "--in", str(images["src"]), "--out", str(tmp_path / "o.png")]
    for _ in range(4):
        argv += ["--ref", str(images["tgt"])]
    assert main(argv) == EXIT_USAGE


def test_invalid_values_are_usage_errors(images, tmp_path):
    base = ["augment", "--in", str(images["src"]), "--ref", str(images["tgt"]),
            "--out-dir", str(tmp_path / "o")]
    assert main(base + ["--t", "0.5,0.2"]) == EXIT_USAGE
    assert main(base + ["--epsilon", "-1"]) == EXIT_USAGE
    assert not (tmp_path / "o").exists() or not any((tmp_path / "o").iterdir())


def test_nonconvergence_leaves_no_outputs(images, tmp_path, capsys):
    out = tmp_path / "aug"
    rc = main(["augment", "--in", str(images["src"]), "--ref", str(images["tgt"]),
               "--out-dir", str(out), "--k", "32", "--max-iterations", "2"])
    assert rc == EXIT_CONVERGENCE
    assert err_json(capsys)["error"] == "convergence"
    assert not out.exists() or not any(out.iterdir())
    single = tmp_path / "n.png"
    rc = main(["normalize", "--in", str(images["src"]), "--ref", str(images["tgt"]),
               "--out", str(single), "--k", "32", "--max-iterations", "2"])
    assert rc == EXIT_CONVERGENCE and not single.exists()


def test_config_file_and_precedence(images, tmp_path):
    cfg = tmp_path / "run.toml"
    cfg.write_text('k = 8\nseed = 3\nt = [0.0, 1.0]\nschedule = "simplex"\n')
    report = tmp_path / "r.json"
    rc = main(["augment", "--in", str(images["src"]), "--ref", str(images["tgt"]),
               "--out-dir", str(tmp_path / "o"), "--config", str(cfg), "--seed", "5",
               "--report", str(report)])
    assert rc == 0
    data = json.loads(report.read_text())
    assert data["config"]["k"] == 8
    assert data["config"]["seed"] == 5
    assert data["t"] == [0.0, 1.0]
    assert data["config"]["schedule"] == "simplex"


def test_bad_config(images, tmp_path, capsys):
    cfg = tmp_path / "bad.toml"
    cfg.write_text("colour = 4\n")
    rc = main(["normalize", "--in", str(images["src"]), "--ref", str(images["tgt"]),
               "--out", str(tmp_path / "o.png"), "--config", str(cfg)])
    assert rc == EXIT_USAGE
    cfg.write_text("k = [\n")
    assert main(["normalize", "--in", str(images["src"]), "--ref", str(images["tgt"]),
                 "--out", str(tmp_path / "o.png"), "--config", str(cfg)]) == EXIT_USAGE
    assert main(["normalize", "--in", str(images["src"]), "--ref", str(images["tgt"]),
                 "--out", str(tmp_path / "o.png"),
                 "--config", str(tmp_path / "none.toml")]) == EXIT_INPUT
