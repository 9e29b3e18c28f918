import json

import pytest

from srgeo.cli import main
from srgeo.grammar import parse_vector_field


def run_cli(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_flag_grushin_matches_expected(capsys):
    code, out, _ = run_cli(capsys, "flag", "--structure", "grushin", "--point", "0,0")
    assert code == 0
    doc = json.loads(out)
    assert doc["schema_version"] == "1"
    res = doc["result"]
    assert res["growth"] == [1, 2]
    assert res["weights"] == [1, 2]
    assert res["Q"] == 3
    assert res["regular"] is False


def test_flag_determinism_byte_identical(capsys):
    _, out1, _ = run_cli(capsys, "flag", "--structure", "heisenberg",
                         "--point", "0.1,0.2,0.3", "--seed", "7")
    _, out2, _ = run_cli(capsys, "flag", "--structure", "heisenberg",
                         "--point", "0.1,0.2,0.3", "--seed", "7")
    assert out1 == out2


def test_nilpotent_singruppo_roundtrip(capsys):
    code, out, _ = run_cli(capsys, "nilpotent", "--structure", "singruppo",
                           "--point", "0,0,0")
    assert code == 0
    lines = [l for l in out.strip().splitlines() if l]
    assert lines[2] == "X3 = 0"
    # emitted text re-parses to identical polynomial data
    from srgeo.builtins import make_structure
    from srgeo.nilpotent import truncate

    NA = truncate(make_structure("singruppo"))
    for line, X in zip(lines, NA.truncated_frame):
        _, expr = line.split("=", 1)
        assert parse_vector_field(expr, 3) == X


def test_distance_euclidean(capsys):
    code, out, _ = run_cli(capsys, "distance", "--structure", "euclidean:2",
                           "--from", "0,0", "--to", "3,4", "--restarts", "4",
                           "--maxiter", "150")
    assert code == 0
    doc = json.loads(out)
    assert doc["result"]["value"] == pytest.approx(5.0, rel=0.01)
    assert doc["result"]["converged"] is True


def test_metric_infinite_value(capsys):
    code, out, _ = run_cli(capsys, "metric", "--structure", "grushin",
                           "--point", "0,0", "--vector", "0,1")
    assert code == 0
    doc = json.loads(out)
    assert doc["result"]["finite"] is False
    assert doc["result"]["value"] is None


def test_hormander_violation_exit_code(capsys, tmp_path):
    cfg = tmp_path / "bad.ini"
    cfg.write_text("[structure]\ndim = 2\nX1 = d1\n")
    code, _, err = run_cli(capsys, "flag", "--config", str(cfg), "--point", "0,0")
    assert code == 4
    assert "dimension 1" in err


def test_not_privileged_exit_code(capsys, tmp_path):
    cfg = tmp_path / "bad.ini"
    cfg.write_text("[structure]\ndim = 2\nX1 = d1\nX2 = d2\n")
    code, _, err = run_cli(capsys, "nilpotent", "--config", str(cfg),
                           "--grading", "1,2")
    assert code == 4


def test_parse_error_exit_code(capsys, tmp_path):
    cfg = tmp_path / "bad.ini"
    cfg.write_text("[structure]\ndim = 2\nX1 = d1 + ?\nX2 = d2\n")
    code, _, err = run_cli(capsys, "flag", "--config", str(cfg), "--point", "0,0")
    assert code == 2


def test_unknown_structure_exit_code(capsys):
    code, _, err = run_cli(capsys, "flag", "--structure", "nosuch", "--point", "0")
    assert code == 2


def test_group_subcommand_isotropy_failure(capsys):
    code, _, err = run_cli(capsys, "group", "--structure", "grushin")
    assert code == 4
    assert "isotropy" in err.lower()


def test_group_structure_constants(capsys):
    code, out, _ = run_cli(capsys, "group", "--structure", "heisenberg")
    assert code == 0
    doc = json.loads(out)
    sc = doc["result"]["structure_constants"]
    assert sc[0][1] == [1.0]
    assert sc[1][0] == [-1.0]


def test_perimeter_subcommand(capsys):
    code, out, _ = run_cli(
        capsys, "perimeter", "--structure", "euclidean:2", "--level", "x1",
        "--box=-1,1;-1,1", "--resolution", "96", "--estimator", "surface",
    )
    assert code == 0
    doc = json.loads(out)
    assert doc["result"]["surface"]["total_variation"] == pytest.approx(2.0, rel=1e-6)


def test_ball_subcommand_rle(capsys):
    code, out, _ = run_cli(
        capsys, "ball", "--structure", "euclidean:2", "--center", "0,0",
        "--radius", "0.5", "--box=-0.7,0.7;-0.7,0.7", "--resolution", "24",
    )
    assert code == 0
    doc = json.loads(out)
    runs = doc["result"]["runs"]
    total = sum(length for _, length in runs)
    import numpy as np

    vox = (1.4 / 24) ** 2
    assert total * vox == pytest.approx(np.pi * 0.25, rel=0.1)


def test_config_file_structure_and_options(capsys, tmp_path):
    cfg = tmp_path / "heis.ini"
    cfg.write_text(
        "[structure]\n"
        "dim = 3\n"
        "X1 = d1 - 1/2*x2*d3\n"
        "X2 = d2 + 1/2*x1*d3\n"
        "name = my_heis\n"
        "[options]\n"
        "point = 0,0,0\n"
    )
    code, out, _ = run_cli(capsys, "flag", "--config", str(cfg))
    assert code == 0
    doc = json.loads(out)
    assert doc["result"]["growth"] == [2, 3]


def test_distance_nonconvergence_exit_code(capsys):
    # starved solver: one iteration cannot close the endpoint gap
    code, out, _ = run_cli(capsys, "distance", "--structure", "heisenberg",
                           "--from", "0,0,0", "--to", "0,0,0.4",
                           "--restarts", "1", "--maxiter", "1")
    assert code == 3
    doc = json.loads(out)
    assert doc["result"]["converged"] is False


def test_verify_fast_euclidean(capsys):
    code, out, _ = run_cli(capsys, "verify", "--structure", "euclidean:2", "--fast")
    assert code == 0
    assert "all" in out and "passed" in out


def test_perimeter_density_csv(capsys, tmp_path):
    csv_path = tmp_path / "density.csv"
    code, _, _ = run_cli(
        capsys, "perimeter", "--structure", "euclidean:2", "--level", "x1",
        "--box=-1,1;-1,1", "--resolution", "64", "--estimator", "surface",
        "--point", "0,0", "--density-radii", "0.4,0.2", "--csv", str(csv_path),
    )
    assert code == 0
    lines = csv_path.read_text().strip().splitlines()
    assert lines[0] == "radius,ratio,perimeter,volume,h"
    import numpy as np

    for line in lines[1:]:
        ratio = float(line.split(",")[1])
        assert abs(ratio - 2 / np.pi) < 0.1


def test_csv_output(capsys, tmp_path):
    csv_path = tmp_path / "traj.csv"
    code, _, _ = run_cli(capsys, "distance", "--structure", "euclidean:2",
                         "--from", "0,0", "--to", "1,0", "--restarts", "2",
                         "--maxiter", "60", "--csv", str(csv_path))
    lines = csv_path.read_text().strip().splitlines()
    assert lines[0] == "t,x1,x2,c1,c2"
    assert len(lines) >= 10
