import json
import math

import numpy as np
import pytest
import yaml

from conformgreen import ConfigError, ExperimentConfig
import conformgreen.cli as cli
from conformgreen.cli import EXIT_NUMERICAL, EXIT_USER, L2_RATIO_WINDOW, run


DISK = {
    "domain": {"curve": "disk", "target_h": 0.1},
    "configuration": {"interior": [[0.3, 0.0]], "sigmas": [1.0]},
    "run": {"seed": 3, "starts": 2, "gtol": 1e-5},
}


def write_config(tmp_path, data, name="experiment.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(data))
    return str(path)


def read_csv(path):
    lines = open(path).read().splitlines()
    assert lines[0].startswith("# created: ")
    assert lines[1].startswith("# ")
    return lines[1], lines[2].split(","), [line.split(",") for line in lines[3:]]


def test_config_from_dict_defaults():
    config = ExperimentConfig.from_dict({"domain": {"curve": "disk", "target_h": 0.2}})
    assert config.run["seed"] == 0 and config.run["starts"] == 8
    mesh, metric, configuration = config.build()
    assert metric.is_flat
    assert configuration is None
    assert config.header() == {"seed": 0, "starts": 8, "workers": 1}


@pytest.mark.parametrize(
    "data",
    [
        {},
        {"domain": {"curve": "disk", "target_h": 0.1}, "extra": {}},
        {"domain": {"curve": "disk", "target_h": 0.1, "size": 2}},
        {"domain": {"curve": "triangle", "target_h": 0.1}},
        {"domain": {"curve": "disk", "target_h": 0.1}, "metric": {"psi": "1", "psi_csv": "a.csv"}},
        {"domain": {"curve": "disk", "target_h": 0.1}, "configuration": {"interior": [[0, 0]]}},
        {"domain": {"curve": "disk", "target_h": 0.1}, "run": {"sed": 1}},
    ],
)
def test_bad_configs(data):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(data).build()


def test_log_potential_from_config():
    data = dict(DISK, configuration={
        "interior": [[0.3, 0.0]], "sigmas": [1.0], "h": {"kind": "log_potential", "potential": "2 + x", "weights": [0.5]},
    })
    configuration = ExperimentConfig.from_dict(data).build_configuration()
    assert configuration.h_term.value([[0.0, 0.0]]) == pytest.approx(0.5 * math.log(2))


def test_validate_passes(capsys):
    assert run(["validate"]) == 0
    out = capsys.readouterr().out
    assert "fem.l2_ratio" in out and "FAIL" not in out


def test_mesh_command_writes_exchange_file(tmp_path):
    out = tmp_path / "disk.mesh"
    assert run(["mesh", "--curve", "disk", "--h", "0.2", "--out", str(out)]) == 0
    nv, nt, nb = map(int, out.read_text().split("\n")[0].split())
    assert nt > 0 and 0 < nb < nv


def test_robin_radial_table(tmp_path):
    out = tmp_path / "robin.csv"
    assert run(["robin", "--config", write_config(tmp_path, DISK), "--samples", "4", "--out", str(out)]) == 0
    header, columns, rows = read_csv(out)
    assert "seed=3" in header and "h_max=" in header
    assert columns == ["s", "x", "y", "r", "robin", "oracle"]
    assert len(rows) == 4
    # the last sample sits 0.1 from the circle, too close for this mesh
    for row in rows[:3]:
        assert abs(float(row[4]) - float(row[5])) < 0.05


def test_crit_is_reproducible(tmp_path):
    config = write_config(tmp_path, DISK)
    outputs = []
    for name in ("a.json", "b.json"):
        out = tmp_path / name
        assert run(["crit", "--config", config, "--out", str(out)]) == 0
        document = json.loads(out.read_text())
        assert document.pop("created")
        outputs.append(document)
    assert outputs[0] == outputs[1]
    assert outputs[0]["schema_version"] == 1
    assert len(outputs[0]["critical_points"]) == 1
    assert outputs[0]["critical_points"][0]["hessian"]["index"] == 0


def test_dpsih_methods_agree(tmp_path):
    config = write_config(tmp_path, DISK)
    values = {}
    for method in ("integral", "split", "pde", "fd"):
        out = tmp_path / f"{method}.json"
        argv = ["dpsih", "--config", config, "--x", "0.4", "0.3", "--xi", "0.2", "0.1",
                "--theta", "x*y + 0.5*x", "--method", method, "--out", str(out)]
        assert run(argv) == 0
        values[method] = json.loads(out.read_text())["value"]
    assert values["integral"] == pytest.approx(values["pde"], abs=1e-6)
    assert values["split"] == pytest.approx(values["pde"], rel=0.1, abs=1e-2)
    assert values["pde"] == pytest.approx(values["fd"], abs=1e-3)


def test_user_errors_exit_with_two(tmp_path, capsys):
    bad = write_config(tmp_path, {"domain": {"curve": "disk"}, "colour": 1}, "bad.yaml")
    assert run(["robin", "--config", bad]) == EXIT_USER
    assert "Unknown section" in capsys.readouterr().err
    assert run(["nonsense"]) == EXIT_USER
    no_config = write_config(tmp_path, {"domain": {"curve": "disk", "target_h": 0.1}}, "plain.yaml")
    assert run(["crit", "--config", no_config]) == EXIT_USER
    assert run(["green", "--config", no_config, "--xi", "2", "0"]) == EXIT_USER
    assert run(["green", "--config", no_config]) == EXIT_USER


def test_blowup_needs_four_samples(tmp_path, capsys):
    argv = ["blowup", "--config", write_config(tmp_path, DISK), "--samples", "3"]
    assert run(argv) == EXIT_USER
    assert "--samples" in capsys.readouterr().err


def test_validate_window_is_second_order():
    assert L2_RATIO_WINDOW == (3.5, 4.5)


def test_numerical_failures_exit_with_three(monkeypatch, capsys):
    def singular(*args, **kwargs):
        raise np.linalg.LinAlgError("Singular matrix")

    monkeypatch.setattr(cli, "manufactured_disk_study", singular)
    assert run(["validate"]) == EXIT_NUMERICAL
    assert "Numerical failure: Singular matrix" in capsys.readouterr().err
