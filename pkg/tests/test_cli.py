import json
from pathlib import Path

import numpy as np
import pytest

from fiocalc import cli
from fiocalc.oscillatory import load_array

ROOT = Path(__file__).resolve().parents[1]


def write(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def test_schema_copies_agree():
    shipped = json.loads((ROOT / "docs" / "experiment.schema.json").read_text())
    assert shipped == cli.load_schema()


def test_validate_map_ok(tmp_path):
    cfg = write(tmp_path, {"task": "validate-map", "map": "half_wave", "t": 1})
    assert cli.main(["validate-map", cfg, "--out", str(tmp_path / "o")]) == 0
    rows = (tmp_path / "o" / "validate-map.csv").read_text().splitlines()
    assert rows[0] == "identity,max_residual,tol,passed"
    assert all(r.endswith(",1") for r in rows[1:])


def test_validate_map_mismatch_cites_anchor(tmp_path, capsys):
    cfg = write(tmp_path, {"task": "validate-map", "map": {"map": "lift", "f": "y + 0.3*sin(y)"}})
    assert cli.main(["validate-map", cfg, "--tol", "1e-30", "--out", str(tmp_path)]) == 2
    out = capsys.readouterr().out
    assert "MISMATCH canonical.validate_canonical check preserve-" in out


def test_indices_example(tmp_path):
    cfg = write(tmp_path, {"task": "indices", "maps": ["identity", "half_wave"],
                           "point": {"y": [0.3, -0.2], "eta": [0.6, 0.8]}})
    assert cli.main(["indices", cfg, "--out", str(tmp_path)]) == 0
    header, row = (tmp_path / "indices.csv").read_text().splitlines()
    vals = dict(zip(header.split(","), row.split(",")))
    assert vals["varkappa"] == "1" and vals["kappa"] == vals["kappa_direct"]


@pytest.mark.parametrize("cfg, argv_task", [
    ({"task": "indices", "bogus": 1}, "indices"),
    ({"task": "indices"}, "validate-map"),
    ({"task": "indices", "maps": ["identity", "half_wave"]}, "indices"),
    ({"task": "validate-map", "map": {"map": "lift", "f": "y0 + 1"}}, "validate-map"),
    ({"task": "validate-map", "map": "warp"}, "validate-map"),
])
def test_usage_errors_exit_1(tmp_path, cfg, argv_task):
    assert cli.main([argv_task, write(tmp_path, cfg), "--out", str(tmp_path)]) == 1


def test_invalid_json_exit_1(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    assert cli.main(["indices", str(p)]) == 1


def test_output_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUT_ENV, str(tmp_path / "env"))
    cfg = write(tmp_path, {"task": "validate-map", "map": "identity", "n": 2})
    assert cli.main(["validate-map", cfg]) == 0
    assert (tmp_path / "env" / "validate-map.csv").exists()


def test_seeded_runs_are_byte_identical(tmp_path):
    cfg = write(tmp_path, {"task": "validate-map", "map": {"map": "lift", "f": ["y1 + 0.2*sin(y2)", "y2"]}, "samples": 30})
    for d in ("a", "b"):
        assert cli.main(["validate-map", cfg, "--seed", "7", "--out", str(tmp_path / d)]) == 0
    assert (tmp_path / "a" / "validate-map.csv").read_bytes() == (tmp_path / "b" / "validate-map.csv").read_bytes()


def test_extract_symbol_and_kernel_dump(tmp_path):
    cfg = write(tmp_path, {"task": "extract-symbol", "map": "half_wave",
                           "probe": {"y": [0.3], "eta": [1.0], "lambdas": [50, 80, 120, 200]},
                           "kernel": {"x": [[0.1], [0.2]], "y": [0.3]}})
    assert cli.main(["extract-symbol", cfg, "--out", str(tmp_path)]) == 0
    fit = (tmp_path / "extract-symbol.csv").read_text().splitlines()[-1].split(",")
    assert abs(float(fit[1]) - 1) < 1e-4
    assert load_array(tmp_path / "kernel.bin").shape == (2,)


def test_compose_symbols_reports_both_routes(tmp_path):
    cfg = write(tmp_path, {"task": "compose-symbols", "maps": ["identity", "half_wave"],
                           "point": {"y": [0.3, -0.2], "eta": [0.6, 0.8]}})
    assert cli.main(["compose-symbols", cfg, "--out", str(tmp_path)]) == 0
    res = json.loads((tmp_path / "compose-symbols.json").read_text())["result"]
    assert res["adjoint"]["k_step5"] == 1 and res["adjoint"]["k_corollary"] == 0
    assert np.allclose(res["adjoint"]["step5"], [0, 1]) and np.allclose(res["adjoint"]["corollary"], [1, 0])


def test_compose_symbols_with_oracle(tmp_path):
    cfg = write(tmp_path, {"task": "compose-symbols", "maps": [{"map": "half_wave", "t": 0.5}, "half_wave"],
                           "point": {"y": [0.3], "eta": [1]}, "oracle": True,
                           "probe": {"y": [0.3], "eta": [1], "lambdas": [50, 80, 120, 200]}})
    assert cli.main(["compose-symbols", cfg, "--out", str(tmp_path)]) == 0
    res = json.loads((tmp_path / "compose-symbols.json").read_text())["result"]
    assert res["oracle"]["matches"] == ["step5", "corollary"]


def test_maslov_path_on_eta_circle(tmp_path):
    cfg = write(tmp_path, {"task": "maslov-path", "map": {"map": "half_wave", "n": 2},
                           "path": {"circle": {"y": [0.0, 0.0], "samples": 41}}})
    assert cli.main(["maslov-path", cfg, "--out", str(tmp_path)]) == 0
    res = json.loads((tmp_path / "maslov-path.json").read_text())["result"]
    assert set(res["index"].values()) == {0}


def test_verify_suite_subset(tmp_path, capsys):
    assert cli.main(["verify-suite", "--criteria", "A1", "A2", "--out", str(tmp_path)]) == 0
    lines = [ln for ln in capsys.readouterr().out.splitlines() if ln.startswith("A")]
    assert [ln.split()[:2] for ln in lines] == [["A1", "PASS"], ["A2", "PASS"]]
    assert (tmp_path / "verify-suite.csv").read_text().startswith("criterion,passed")
