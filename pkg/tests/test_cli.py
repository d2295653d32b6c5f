import json
import os

from deskcrew.cli import main
from deskcrew.gridpath import bfs_oracle, generate_instance, multipath_to_dict


def test_grid_validate_ok(tmp_path, capsys):
    inst = generate_instance(3, n_agents=2, n_obstacles=5)
    paths = bfs_oracle(inst)
    grid_file = tmp_path / "g.json"
    paths_file = tmp_path / "p.json"
    grid_file.write_text(json.dumps(inst.to_dict()))
    paths_file.write_text(json.dumps(multipath_to_dict(paths)))
    rc = main(["grid", "validate", "--grid", str(grid_file), "--paths", str(paths_file)])
    assert rc == 0
    assert "OK" in capsys.readouterr().out


def test_grid_validate_reports_violations(tmp_path, capsys):
    inst = generate_instance(3, n_agents=2, n_obstacles=5)
    paths = bfs_oracle(inst)
    name = inst.names[0]
    paths[name] = paths[name][:-1]  # truncate: endpoint violation
    grid_file = tmp_path / "g.json"
    paths_file = tmp_path / "p.json"
    grid_file.write_text(json.dumps(inst.to_dict()))
    paths_file.write_text(json.dumps(multipath_to_dict(paths)))
    rc = main(["grid", "validate", "--grid", str(grid_file), "--paths", str(paths_file)])
    assert rc == 1
    out = capsys.readouterr().out
    assert "Use this information to try again" in out


def test_grid_demo_prints_instance(capsys):
    rc = main(["grid", "demo", "--seed", "1", "--agents", "2", "--obstacles", "4"])
    assert rc == 0
    data = json.loads(capsys.readouterr().out)
    assert len(data["agents"]) == 2


def test_run_command_with_config(tmp_path, capsys):
    cfg = {"task": "sort_blocks", "seed": 1, "params": {"T": 15}}
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(cfg))
    out_path = tmp_path / "episode.jsonl"
    rc = main(["run", "--config", str(cfg_path), "--out", str(out_path)])
    assert rc == 0
    metrics = json.loads(capsys.readouterr().out)
    assert metrics["success"] is True
    lines = [json.loads(l) for l in out_path.read_text().splitlines() if l.strip()]
    assert lines[0]["type"] == "scene"


def test_bench_command(tmp_path, capsys):
    rc = main(
        [
            "bench",
            "--task",
            "stack_order",
            "--episodes",
            "2",
            "--results",
            str(tmp_path),
            "--workers",
            "1",
        ]
    )
    assert rc == 0
    out = capsys.readouterr().out
    assert '"success_rate": 1.0' in out
    assert os.path.exists(tmp_path / "summary.csv")
    assert os.path.exists(tmp_path / "stack_order" / "dialog" / "0.jsonl")
