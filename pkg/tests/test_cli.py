import json

import pytest

from cli import EXIT_CONFIG, EXIT_OK, EXIT_STAGE, apply_overrides, build_parser, main
from geometry import box_surface, write_surface_obj
from observability import THREAD_ENV_VARS


@pytest.fixture
def run_config(tmp_path):
    mesh = write_surface_obj(box_surface((0.0, 0.0, 0.0), (1.0, 1.0, 1.0), divisions=4),
                             str(tmp_path / "cube.obj"))
    path = tmp_path / "run.json"
    path.write_text(json.dumps({
        "input_mesh": mesh,
        "octree_depth": 1,
        "smoothing": {"smoothing_iterations": 0},
        "quality": {"max_outer_iterations": 1, "smoothing_sweeps": 1, "descent_steps": 2},
        "stages": ["polycube", "hexmesh", "quality"],
    }))
    return str(path)


def test_subcommand_flags_override_document():
    args = build_parser().parse_args(
        ["hexmesh", "--depth", "4", "--seed", "9", "--out", "runs/x", "--polycube", "pc.json"])
    data = apply_overrides({"octree_depth": 2, "stages": ["sample", "polycube"]}, args)
    assert data["stages"] == ["hexmesh"]
    assert data["octree_depth"] == 4
    assert data["seed"] == 9
    assert data["output_dir"] == "runs/x"
    assert data["polycube"] == "pc.json"
    assert "deterministic" not in data


def test_pipeline_subcommand_keeps_document_stages():
    args = build_parser().parse_args(["pipeline", "--deterministic"])
    data = apply_overrides({"stages": ["polycube"]}, args)
    assert data["stages"] == ["polycube"]
    assert data["deterministic"] is True


def test_sample_context_flag():
    args = build_parser().parse_args(["sample", "--context", "00001000000000000000000000000"])
    assert apply_overrides({}, args)["context"] == "00001000000000000000000000000"


def test_unknown_subcommand_exits():
    with pytest.raises(SystemExit):
        build_parser().parse_args(["mesh"])


def test_missing_config_exit_code(tmp_path):
    assert main(["pipeline", "--config", str(tmp_path / "absent.json")]) == EXIT_CONFIG


def test_invalid_config_exit_code(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"octree_depth": -1}))
    assert main(["pipeline", "--config", str(path)]) == EXIT_CONFIG


def test_missing_input_mesh_exit_code(tmp_path):
    code = main(["polycube", "--input", str(tmp_path / "none.obj"), "--out", str(tmp_path / "run")])
    assert code == EXIT_CONFIG


def test_stage_failure_exit_code(tmp_path, run_config):
    broken = tmp_path / "pc.json"
    broken.write_text(json.dumps({"h": 1.0}))
    code = main(["hexmesh", "--config", run_config, "--polycube", str(broken), "--out", str(tmp_path / "run")])
    assert code == EXIT_STAGE


def test_pipeline_then_quality(tmp_path, run_config, capsys, monkeypatch):
    for name in THREAD_ENV_VARS:
        monkeypatch.setenv(name, "1")
    out = str(tmp_path / "run")
    assert main(["pipeline", "--config", run_config, "--out", out, "--deterministic"]) == EXIT_OK
    assert main(["quality", "--config", run_config, "--out", out]) == EXIT_OK
    printed = capsys.readouterr().out
    assert "SUMMARY" in printed
    assert "min SJ:" in printed
