import csv
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from faps.cli import main, read_landmarks_csv, write_landmarks_csv
from faps.config import ConfigError, RunConfig, config_from_dict, load_config
from faps.imaging import read_pnm, write_pnm
from faps.testcard import make_test_card

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"


def write_cfg(tmp_path, data, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return str(path)


# ---------------------------------------------------------------- config


def test_defaults_match_reference_setup():
    cfg = RunConfig()
    assert (cfg.space.m_min, cfg.space.m_max, cfg.space.s_m) == (160, 232, 8)
    assert (cfg.space.delta_min, cfg.space.delta_max, cfg.space.s_delta) == (-32, 24, 4)
    assert cfg.search.population_size == 8 and cfg.search.seed == 1234
    assert cfg.template.output_size == 112


def test_shipped_configs_load():
    for path in CONFIGS.glob("*.json"):
        load_config(path)


@pytest.mark.parametrize(
    "data",
    [
        {"spaces": {}},
        {"space": {"m_min": 160, "bogus": 1}},
        {"search": {"population_size": 2}},
        {"trainer": {"type": "quantum"}},
        {"trainer": {"synthetic": {"peak": 0.9}}},
        {"template": {"landmarks": [[100, 120], [190, 120]]}},
        {"template": {"canvas": 400, "landmarks": [[150, 150], [250, 150]]}},
        {"io": []},
        [],
    ],
)
def test_config_errors(data):
    with pytest.raises(ConfigError):
        config_from_dict(data)


def test_config_file_errors(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(bad)
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")


def test_external_trainer_factory(tmp_path, monkeypatch):
    (tmp_path / "my_trainers.py").write_text(
        "from faps.trainers import SyntheticTrainer, SyntheticTrainerConfig\n"
        "def make(peak=0.8):\n"
        "    return SyntheticTrainer(SyntheticTrainerConfig(peak_acc=peak))\n"
        "def not_a_trainer():\n"
        "    return object()\n"
    )
    monkeypatch.syspath_prepend(str(tmp_path))
    cfg = config_from_dict({"trainer": {"type": "external", "factory": "my_trainers:make", "options": {"peak": 0.7}}})
    assert cfg.trainer.build().cfg.peak_acc == 0.7
    with pytest.raises(ConfigError):
        config_from_dict({"trainer": {"type": "external", "factory": "my_trainers:not_a_trainer"}}).trainer.build()
    with pytest.raises(ConfigError):
        config_from_dict({"trainer": {"type": "external", "factory": "nowhere:make"}}).trainer.build()


# ---------------------------------------------------------------- space


def test_space_listing(capsys):
    assert main(["space", "--config", str(CONFIGS / "default.json")]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "93"
    assert lines[1] == "m,delta,left,top,side"
    assert "192,4,54,58,192" in lines
    assert len(lines) == 2 + 93


def test_space_single(capsys):
    assert main(["space", "--config", str(CONFIGS / "single.json")]) == 0
    assert capsys.readouterr().out.splitlines()[0] == "1"


def test_space_bad_config(tmp_path, capsys):
    assert main(["space", "--config", write_cfg(tmp_path, {"space": {"s_m": 0}})]) == 2
    assert "error" in capsys.readouterr().err


# ---------------------------------------------------------------- align


@pytest.fixture
def card(tmp_path):
    img, landmarks = make_test_card(seed=5)
    write_pnm(img, tmp_path / "card.pgm")
    write_landmarks_csv(landmarks, tmp_path / "card.csv")
    return tmp_path / "card.pgm", tmp_path / "card.csv"


def test_align_both_paths_report(card, tmp_path, capsys):
    image, lms = card
    out = tmp_path / "aligned.pgm"
    rc = main(["align", "--image", str(image), "--landmarks", str(lms), "--policy", "232,0", "--output", str(out), "--path", "both", "--report"])
    assert rc == 0
    report = dict(line.split("=") for line in capsys.readouterr().out.split())
    assert float(report["max_abs_diff"]) <= 2.0
    assert float(report["mean_abs_diff"]) <= 0.5
    aligned = read_pnm(out)
    assert (aligned.width, aligned.height) == (112, 112)
    assert (tmp_path / "aligned_direct.pgm").exists()


@pytest.mark.parametrize("path", ["direct", "canvas"])
def test_align_single_path(card, tmp_path, path):
    image, lms = card
    out = tmp_path / f"{path}.pgm"
    assert main(["align", "--image", str(image), "--landmarks", str(lms), "--policy", "192,4", "--output", str(out), "--path", path]) == 0
    assert read_pnm(out).width == 112


def test_align_policy_outside_space(card, tmp_path, capsys):
    image, lms = card
    rc = main(["align", "--image", str(image), "--landmarks", str(lms), "--policy", "232,8", "--output", str(tmp_path / "x.pgm")])
    assert rc == 2
    assert "{232,0}" in capsys.readouterr().err


@pytest.mark.parametrize(
    "content",
    ["index,x,y\n0,1,2\n2,3,4\n", "0,1\n1,2,3\n", "0,a,2\n1,2,3\n", "0,1,2\n", "0,1,2\n0,3,4\n"],
)
def test_align_malformed_landmarks(card, tmp_path, content):
    image, _ = card
    bad = tmp_path / "bad.csv"
    bad.write_text(content)
    rc = main(["align", "--image", str(image), "--landmarks", str(bad), "--policy", "232,0", "--output", str(tmp_path / "x.pgm")])
    assert rc == 2


def test_align_missing_image(card, tmp_path):
    _, lms = card
    rc = main(["align", "--image", str(tmp_path / "nope.pgm"), "--landmarks", str(lms), "--policy", "232,0", "--output", str(tmp_path / "x.pgm")])
    assert rc == 2


def test_landmark_csv_round_trip(tmp_path, rng):
    pts = rng.uniform(0, 300, (68, 2))
    write_landmarks_csv(pts, tmp_path / "l.csv")
    assert np.array_equal(read_landmarks_csv(tmp_path / "l.csv"), pts)


# ---------------------------------------------------------------- search / grid / report


def test_search_grid_report(tmp_path, capsys):
    demo = str(CONFIGS / "demo.json")
    assert main(["search", "--config", demo, "--out", str(tmp_path / "s")]) == 0
    result = json.loads((tmp_path / "s" / "result.json").read_text())
    assert result["best_policy"] == [192, 4]
    assert result["trainer_steps"] == 8 * 30

    assert main(["grid", "--config", demo, "--out", str(tmp_path / "g")]) == 0
    grid = json.loads((tmp_path / "g" / "result.json").read_text())
    assert grid["best_policy"] == [192, 4]
    assert grid["trainer_steps"] == 93 * 30
    with open(tmp_path / "g" / "grid.csv") as fh:
        assert len(list(csv.DictReader(fh))) == 93

    assert main(["report", "--log", str(tmp_path / "s" / "events.jsonl"), "--out", str(tmp_path / "r")]) == 0
    with open(tmp_path / "r" / "trajectory.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 8 * 30
    assert list(rows[0]) == ["epoch", "member_id", "m", "delta", "val_acc"]

    # every policy in the log is a listed candidate
    capsys.readouterr()
    main(["space", "--config", demo])
    listed = {tuple(map(int, line.split(",")[:2])) for line in capsys.readouterr().out.splitlines()[2:]}
    seen = {(int(r["m"]), int(r["delta"])) for r in rows}
    assert seen <= listed


def test_report_to_stdout(tmp_path, capsys):
    main(["search", "--config", str(CONFIGS / "demo.json"), "--out", str(tmp_path), "--seed", "7"])
    capsys.readouterr()
    assert main(["report", "--log", str(tmp_path / "events.jsonl")]) == 0
    assert len(capsys.readouterr().out.splitlines()) == 1 + 8 * 30


def test_seed_and_mode_overrides(tmp_path):
    assert main(["search", "--config", str(CONFIGS / "demo.json"), "--out", str(tmp_path), "--seed", "5", "--mode", "async"]) == 0
    header = json.loads((tmp_path / "events.jsonl").read_text().splitlines()[0])
    assert header["config"]["seed"] == 5 and header["config"]["mode"] == "async"


def test_trainer_failure_exit_code(tmp_path, monkeypatch):
    (tmp_path / "boom.py").write_text(
        "from faps.trainers import SyntheticTrainer\n"
        "class Boom(SyntheticTrainer):\n"
        "    def step(self, state, policy):\n"
        "        if state.t >= 4:\n"
        "            raise RuntimeError('boom')\n"
        "        return super().step(state, policy)\n"
        "def make():\n"
        "    return Boom()\n"
    )
    monkeypatch.syspath_prepend(str(tmp_path))
    cfg = write_cfg(tmp_path, {"trainer": {"type": "external", "factory": "boom:make"}})
    out = tmp_path / "run"
    assert main(["search", "--config", cfg, "--out", str(out)]) == 3
    lines = (out / "events.jsonl").read_text().splitlines()
    assert json.loads(lines[0])["kind"] == "header"
    assert len(lines) > 1
    assert not (out / "result.json").exists()


def test_report_bad_log(tmp_path):
    bad = tmp_path / "e.jsonl"
    bad.write_text("{oops\n")
    assert main(["report", "--log", str(bad)]) == 2


def test_console_script_usage_error():
    proc = subprocess.run([sys.executable, "-m", "faps.cli", "space", "--mode", "turbo"], capture_output=True, text=True)
    assert proc.returncode == 2
    proc = subprocess.run([sys.executable, "-m", "faps.cli", "space"], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.splitlines()[0] == "93"
