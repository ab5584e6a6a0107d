import json
import subprocess
import sys

import pytest

from activeseg.cli import main


def micro_config_doc(tmp_path, **overrides):
    doc = {
        "out_dir": str(tmp_path / "run"),
        "synthetic": {
            "n_images": 12,
            "size": [16, 16],
            "infection_density": 1.2,
            "background_fraction": 0.25,
            "radius_range": [2.0, 4.0],
            "seed": 31,
            "slices_per_scan": 6,
        },
        "k": 4,
        "heuristic": "entropy",
        "images_per_cycle": 2,
        "cycles": 1,
        "seed": 5,
        "train": {"learning_rate": 1e-3, "max_epochs": 2, "dropout": 0.5, "seed": 5},
        "mc_sample_count": 2,
        "channels": [2, 3, 3],
        "dtype": "float64",
    }
    doc.update(overrides)
    return doc


@pytest.fixture
def config_path(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(micro_config_doc(tmp_path)))
    return path


class TestCli:
    def test_run_and_replay(self, tmp_path, config_path, capsys):
        assert main(["run", "--config", str(config_path)]) == 0
        run_dir = capsys.readouterr().out.strip()
        assert main(["replay", "--log", run_dir]) == 0
        out = capsys.readouterr().out
        assert "replayed" in out

    def test_experiment_heuristics(self, tmp_path, config_path, capsys):
        code = main(
            [
                "experiment", "heuristics",
                "--config", str(config_path),
                "--seeds", "5",
                "--out", str(tmp_path / "exp"),
            ]
        )
        assert code == 0
        summary = capsys.readouterr().out.strip()
        assert summary.endswith("heuristics_summary.csv")

    def test_synth_writes_dataset(self, tmp_path, capsys):
        code = main(["synth", "--out", str(tmp_path / "ds"), "--n-images", "4", "--size", "16"])
        assert code == 0
        assert (tmp_path / "ds" / "manifest.json").exists()

    def test_bad_config_nonzero_exit(self, tmp_path, capsys):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(micro_config_doc(tmp_path, k=0)))
        assert main(["run", "--config", str(path)]) == 1
        assert "error:" in capsys.readouterr().err

    def test_missing_config_nonzero_exit(self, capsys):
        assert main(["run", "--config", "/does/not/exist.json"]) == 1

    def test_console_script_entrypoint(self, tmp_path, config_path):
        proc = subprocess.run(
            [sys.executable, "-m", "activeseg.cli", "run", "--config", str(config_path)],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 0, proc.stderr
