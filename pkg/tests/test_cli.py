import json
import subprocess
import sys

import pytest

from scareth import cli
from scareth.cli import DEFAULTS, TASKS, config_from_dict, main, parse_config, run_task
from scareth.errors import ConvergenceError, ValidationError

MIN = {"family": "spin-chain-blockade", "j": 1, "n_sites": 4}


def write(tmp_path, data, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return path


def csvs(folder):
    return {p.name: p.read_bytes() for p in sorted(folder.glob("*.csv"))}


def test_minimal_config_gets_defaults(tmp_path):
    cfg = parse_config(write(tmp_path, {**MIN, "task": "evolve"}))
    assert cfg.spec.boundary == "periodic"
    assert cfg.spec.c == 200
    assert cfg.params["n_traj"] == 500
    assert cfg.params["method"] == "unitary"
    assert set(cfg.params) == set(DEFAULTS["common"]) | set(DEFAULTS["evolve"])


def test_model_may_be_nested(tmp_path):
    cfg = config_from_dict({"model": MIN, "task": "basis"})
    assert cfg.spec.n_sites == 4
    with pytest.raises(ValidationError):
        config_from_dict({"model": MIN, "j": 2, "task": "basis"})


def test_spin_half_is_a_validation_error(tmp_path):
    path = write(tmp_path, {**MIN, "j": 0.5})
    assert main(["basis", "--config", str(path), "--output", str(tmp_path / "o")]) == 2


def test_unknown_task_lists_valid_ones(capsys):
    with pytest.raises(ValidationError, match="basis, spectrum"):
        config_from_dict({**MIN, "task": "melt"})
    with pytest.raises(SystemExit) as exc:
        main(["melt", "--config", "x.json"])
    assert exc.value.code == 2
    assert "basis" in capsys.readouterr().err


def test_parse_error_reports_line_and_column(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{\n  "family": "spin-chain-blockade",\n  "j": 1,,\n}')
    with pytest.raises(ValidationError, match="line 3, column 10"):
        parse_config(path, "basis")


def test_unknown_field_named(tmp_path):
    with pytest.raises(ValidationError, match="n_trajectories"):
        config_from_dict({**MIN, "task": "evolve", "n_trajectories": 3})


def test_task_mismatch(tmp_path):
    path = write(tmp_path, {**MIN, "task": "decay"})
    assert main(["basis", "--config", str(path)]) == 2


def test_basis_report_at_nine_sites(tmp_path, capsys):
    path = write(tmp_path, {**MIN, "n_sites": 9})
    assert main(["basis", "--config", str(path), "--output", str(tmp_path / "o")]) == 0
    assert capsys.readouterr().out.strip() == "dim = 5778"
    assert (tmp_path / "o" / "report.txt").read_text() == "dim = 5778\n"
    meta = json.loads((tmp_path / "o" / "run.json").read_text())
    assert meta["result"]["dim"] == 5778 and len(meta["spec_hash"]) == 64


def test_missing_seed_for_trajectories(tmp_path, capsys):
    path = write(tmp_path, {**MIN, "method": "trajectories", "t_max": 1, "n_traj": 4})
    assert main(["evolve", "--config", str(path), "--output", str(tmp_path / "o")]) == 2
    assert "seed" in capsys.readouterr().err
    assert not (tmp_path / "o" / "timeseries.csv").exists()


def test_rerun_is_byte_identical(tmp_path):
    path = write(tmp_path, {**MIN, "method": "trajectories", "kind": "LindbladPrime", "c": 5, "t_max": 4, "n_traj": 30})
    for out in ("a", "b"):
        assert main(["evolve", "--config", str(path), "--output", str(tmp_path / out), "--seed", "17"]) == 0
    a, b = csvs(tmp_path / "a"), csvs(tmp_path / "b")
    assert a and a == b
    assert (tmp_path / "a" / "timeseries.csv.json").read_bytes() == (tmp_path / "b" / "timeseries.csv.json").read_bytes()


def test_cache_hit_matches_cold_run(tmp_path):
    cache = tmp_path / "cache"
    path = write(tmp_path, {**MIN, "n_sites": 5, "cache_dir": str(cache)})
    assert main(["spectrum", "--config", str(path), "--output", str(tmp_path / "cold")]) == 0
    assert len(list(cache.glob("*.eig"))) == 1
    assert main(["spectrum", "--config", str(path), "--output", str(tmp_path / "warm")]) == 0
    cold_cfg = write(tmp_path, {**MIN, "n_sites": 5, "cache": False}, "nocache.json")
    assert main(["spectrum", "--config", str(cold_cfg), "--output", str(tmp_path / "fresh")]) == 0
    assert csvs(tmp_path / "cold") == csvs(tmp_path / "warm") == csvs(tmp_path / "fresh")


def test_cache_key_separates_specs(tmp_path):
    cache = tmp_path / "cache"
    for c in (100, 300):
        path = write(tmp_path, {**MIN, "c": c, "cache_dir": str(cache)})
        assert main(["spectrum", "--config", str(path), "--output", str(tmp_path / f"o{c}")]) == 0
    assert len(list(cache.glob("*.eig"))) == 2


def test_partial_outputs_removed_on_failure(tmp_path, monkeypatch):
    def boom(self, path):
        raise ConvergenceError("forced failure", 1.0)

    monkeypatch.setattr(cli.Figure, "save", boom)
    path = write(tmp_path, {**MIN, "cache": False})
    out = tmp_path / "o"
    assert main(["spectrum", "--config", str(path), "--output", str(out)]) == 4
    assert not list(out.glob("*.csv")) and not (out / "run.json").exists()


@pytest.mark.parametrize(
    "task, extra, expected",
    [
        ("spectrum", {}, ["spectrum.csv", "overlap.svg", "n_expect.svg"]),
        ("evolve", {"method": "master", "kind": "Positive", "t_max": 1, "n_sites": 3}, ["timeseries.csv"]),
        ("decay", {"n_sites": 5, "n_times": 21}, ["decay.csv"]),
        ("cscan", {"c_list": [400, 800], "n_times": 21}, ["cscan.csv"]),
        ("leakage", {"method": "projected", "c": 1200, "n_times": 51}, ["leakage.csv"]),
        ("ensemble", {"n_sites": 6}, ["ensemble.csv"]),
        ("ethfit", {"n_sites": 6}, ["ethfit.csv"]),
    ],
)
def test_every_task_writes_its_tables(tmp_path, task, extra, expected):
    path = write(tmp_path, {**MIN, **extra, "cache": False})
    out = tmp_path / "o"
    assert main([task, "--config", str(path), "--output", str(out)]) == 0
    for name in expected + ["run.json"]:
        assert (out / name).exists(), name
    for table in out.glob("*.csv"):
        lines = table.read_text().splitlines()
        assert len(lines) >= 2 and "," in lines[0]


def test_ensemble_columns(tmp_path):
    path = write(tmp_path, {**MIN, "n_sites": 6, "cache": False})
    assert main(["ensemble", "--config", str(path), "--output", str(tmp_path / "o")]) == 0
    head = (tmp_path / "o" / "ensemble.csv").read_text().splitlines()[0]
    assert head == "index,energy,dev_canonical,dev_grand,d1_canonical,d1_grand,d2_canonical,d2_grand,scar_flag"


def test_module_entry_point(tmp_path):
    path = write(tmp_path, MIN)
    proc = subprocess.run(
        [sys.executable, "-m", "scareth", "basis", "--config", str(path), "--output", str(tmp_path / "o")],
        capture_output=True,
        text=True,
    )
    from scareth.basis import transfer_matrix_count
    from scareth.model import spec_from_dict

    assert proc.returncode == 0
    assert proc.stdout.strip() == f"dim = {transfer_matrix_count(spec_from_dict(MIN))}"


def test_tasks_constant():
    assert TASKS == ("basis", "spectrum", "evolve", "decay", "cscan", "leakage", "ensemble", "ethfit")
