import hashlib
import json

import numpy as np
import pytest

from radiomap.cli import main, resolve_config
from radiomap.geometry import read_pgm, to_gray8
from radiomap.metrics import EvalReport
from radiomap.tensor import load_tensor, save_tensor

SMALL = ["--n-envs", "3", "--tx-per-env", "2", "--resolution", "64", "--heights", "0.5,1.5"]


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def error_line(err):
    lines = err.strip().splitlines()
    assert len(lines) == 1
    return json.loads(lines[0])


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli") / "ds"
    assert main(["gen-dataset", "--out", str(root), "--seed", "4", *SMALL]) == 0
    return root


@pytest.fixture(scope="module")
def trained(dataset, tmp_path_factory):
    out = tmp_path_factory.mktemp("cli") / "run"
    assert main(["train", "--manifest", str(dataset), "--out", str(out), "--plan", "reduced", "--epochs", "2",
                 "--lr", "1e-3", "--batch", "2"]) == 0
    return out


def _digest_excluding(root):
    h = hashlib.sha256()
    for p in sorted(q for q in root.rglob("*") if q.is_file() and q.name != "run_config.json"):
        h.update(str(p.relative_to(root)).encode())
        h.update(p.read_bytes())
    return h.hexdigest()


class TestConfigResolution:
    def test_precedence(self, tmp_path):
        cfg_file = tmp_path / "c.json"
        cfg_file.write_text(json.dumps({"n_envs": 7, "tx-per-env": 3, "seed": 2}))
        cfg = resolve_config("gen-dataset", {"config": str(cfg_file), "tx_per_env": 5, "out": "x"})
        assert (cfg["n_envs"], cfg["tx_per_env"], cfg["seed"], cfg["resolution"]) == (7, 5, 2, 256)

    def test_command_section(self, tmp_path):
        cfg_file = tmp_path / "c.json"
        cfg_file.write_text(json.dumps({"train": {"lr": 0.5}, "count": {"resolution": 64}}))
        assert resolve_config("count", {"config": str(cfg_file)})["resolution"] == 64

    def test_unknown_key(self, tmp_path, capsys):
        cfg_file = tmp_path / "c.json"
        cfg_file.write_text(json.dumps({"colour": "red"}))
        code, _, err = run(capsys, "count", "--config", cfg_file)
        assert code == 2 and "colour" in error_line(err)["message"]


class TestErrors:
    def test_unknown_flag(self, capsys):
        code, out, err = run(capsys, "count", "--bogus")
        assert code == 2 and error_line(err)["error"] == "usage"

    def test_missing_required(self, capsys):
        code, _, err = run(capsys, "train")
        assert code == 2 and "--manifest" in error_line(err)["message"]

    def test_missing_file(self, tmp_path, capsys):
        code, _, err = run(capsys, "export-image", "--tensor", tmp_path / "nope.rmt", "--out", tmp_path / "x.pgm")
        assert code == 1 and error_line(err)["command"] == "export-image"

    def test_bad_threads(self, capsys, monkeypatch):
        monkeypatch.setenv("RMAP_THREADS", "-2")
        code, _, err = run(capsys, "count", "--resolution", "64")
        assert code != 0 and "RMAP_THREADS" in error_line(err)["message"]

    def test_bad_variant(self, capsys):
        code, _, err = run(capsys, "count", "--variant", "huge")
        assert code == 2 and error_line(err)


class TestCount:
    def test_repeatable_with_layer_rows(self, capsys):
        a = run(capsys, "count", "--plan", "in", "--resolution", "256")
        b = run(capsys, "count", "--plan", "in", "--resolution", "256")
        assert a == b and a[0] == 0
        lines = a[1].splitlines()
        assert lines[0].split()[:2] == ["layer", "kind"] and len(lines) > 20
        assert "5.22M" in lines[-1]

    def test_ordering(self, tmp_path, capsys):
        counts = {}
        for v in ("outlite", "in", "out"):
            assert run(capsys, "count", "--variant", v, "--no-layers", "--out", tmp_path / v)[0] == 0
            counts[v] = json.loads((tmp_path / v / "count.json").read_text())["params"]
            assert (tmp_path / v / "run_config.json").exists()
        assert counts["outlite"] < counts["in"] < counts["out"]


class TestGenDataset:
    def test_outputs(self, dataset):
        m = json.loads((dataset / "manifest.json").read_text())
        assert len(list((dataset / "envs").glob("*.json"))) == 3
        assert len(list((dataset / "maps").glob("*_??.rmt"))) == 6
        assert m["seed"] == 4 and m["heights"] == [0.5, 1.5]
        snap = json.loads((dataset / "run_config.json").read_text())
        assert snap["command"] == "gen-dataset" and snap["config"]["n_envs"] == 3

    def test_rerun_from_snapshot(self, dataset, tmp_path, capsys):
        code, _, _ = run(capsys, "gen-dataset", "--config", dataset / "run_config.json", "--out", tmp_path / "again")
        assert code == 0
        assert _digest_excluding(tmp_path / "again") == _digest_excluding(dataset)

    def test_snapshot_wrong_command(self, dataset, capsys):
        code, _, err = run(capsys, "count", "--config", dataset / "run_config.json")
        assert code == 2 and "snapshot" in error_line(err)["message"]


class TestTrainCommand:
    def test_outputs(self, trained):
        log = json.loads((trained / "metrics.json").read_text())["epochs"]
        assert [e["epoch"] for e in log] == [0, 1]
        assert (trained / "last.json").exists()

    def test_zero_lr_flat(self, dataset, tmp_path, capsys):
        code, out, _ = run(capsys, "train", "--manifest", dataset, "--out", tmp_path, "--plan", "reduced",
                           "--ablation", "--epochs", "3", "--lr", "0", "--batch", "8")
        assert code == 0
        losses = [json.loads(line)["train_loss"] for line in out.splitlines()]
        assert len(losses) == 3 and max(losses) - min(losses) <= 1e-6 * losses[0]

    def test_resume_matches(self, dataset, trained, tmp_path, capsys):
        common = ["train", "--manifest", dataset, "--plan", "reduced", "--lr", "1e-3", "--batch", "2"]
        assert run(capsys, *common, "--epochs", "1", "--out", tmp_path)[0] == 0
        assert run(capsys, *common, "--epochs", "2", "--out", tmp_path, "--resume", tmp_path / "last.json")[0] == 0
        assert (tmp_path / "last.json").read_bytes() == (trained / "last.json").read_bytes()

    def test_outlite_with_in_plan(self, dataset, tmp_path, capsys):
        code, out, _ = run(capsys, "train", "--manifest", dataset, "--out", tmp_path, "--variant", "outlite",
                           "--plan", "in", "--epochs", "1", "--lr", "1e-4")
        assert code == 0 and np.isfinite(json.loads(out.splitlines()[-1])["val_loss"])


class TestEval:
    def test_reference(self, dataset, trained, tmp_path, capsys):
        code, out, _ = run(capsys, "eval", "--checkpoint", trained / "last.json", "--manifest", dataset,
                           "--out", tmp_path, "--reference", "--repeats", "1")
        assert code == 0
        r = EvalReport.from_json((tmp_path / "report.json").read_text())
        assert r.nmse == 0.0 and r.ssim == 1.0 and r.throughput > 0
        assert out.splitlines()[0].split()[0] == "Model"

    def test_model(self, dataset, trained, tmp_path, capsys):
        code, _, _ = run(capsys, "eval", "--checkpoint", trained / "last.json", "--manifest", dataset,
                         "--out", tmp_path, "--split", "val", "--repeats", "1")
        assert code == 0
        d = json.loads((tmp_path / "report.json").read_text())
        assert d["nmse"] == pytest.approx(np.mean([v for v in d["per_sample_nmse"] if v is not None]))
        assert d["params"] > 0 and d["macs"] > 0 and d["time_per_km2"] > 0


class TestInfer:
    def test_planes(self, dataset, trained, tmp_path, capsys):
        args = ["infer", "--checkpoint", trained / "last.json", "--image", dataset / "images" / "000.rmt",
                "--tx", "1", "--out", tmp_path]
        assert run(capsys, *args)[0] == 0
        est = load_tensor(tmp_path / "map.rmt")
        assert est.ndim == 3 and est.shape == (2, 64, 64)
        for k in range(2):
            assert read_pgm(tmp_path / f"plane_{k:02d}.pgm").tobytes() == to_gray8(est[k]).tobytes()
        first = (tmp_path / "map.rmt").read_bytes()
        assert run(capsys, *args)[0] == 0
        assert (tmp_path / "map.rmt").read_bytes() == first

    def test_scene_json_matches_stack(self, dataset, trained, tmp_path, capsys):
        ck = trained / "last.json"
        run(capsys, "infer", "--checkpoint", ck, "--image", dataset / "envs" / "002.json", "--tx", "1",
            "--out", tmp_path / "a")
        run(capsys, "infer", "--checkpoint", ck, "--image", dataset / "images" / "002.rmt", "--tx", "1",
            "--out", tmp_path / "b")
        assert (tmp_path / "a" / "map.rmt").read_bytes() == (tmp_path / "b" / "map.rmt").read_bytes()

    def test_bad_tx(self, dataset, trained, tmp_path, capsys):
        code, _, err = run(capsys, "infer", "--checkpoint", trained / "last.json", "--image",
                           dataset / "images" / "000.rmt", "--tx", "5", "--out", tmp_path)
        assert code == 1 and "transmitter" in error_line(err)["message"]


class TestExportImage:
    @pytest.mark.parametrize("value, pixel", [(0.0, 0), (1.0, 255), (0.5, 128), (-0.2, 0), (1.7, 255)])
    def test_constant_planes(self, tmp_path, capsys, value, pixel):
        save_tensor(tmp_path / "t.rmt", np.full((3, 5, 6), value, dtype=np.float32))
        assert run(capsys, "export-image", "--tensor", tmp_path / "t.rmt", "--plane", "2",
                   "--out", tmp_path / "p.pgm")[0] == 0
        img = read_pgm(tmp_path / "p.pgm")
        assert img.shape == (5, 6) and (img == pixel).all()
        assert (tmp_path / "p.pgm.run_config.json").exists()

    def test_plane_out_of_range(self, tmp_path, capsys):
        save_tensor(tmp_path / "t.rmt", np.zeros((2, 4, 4)))
        code, _, err = run(capsys, "export-image", "--tensor", tmp_path / "t.rmt", "--plane", "2",
                           "--out", tmp_path / "p.pgm")
        assert code == 1 and "plane" in error_line(err)["message"]
