import csv
import json

from carnot_kit.cli import main


def run(capsys, *args):
    code = main(list(args))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_group_mul_exact(capsys):
    code, out, _ = run(capsys, "group", "mul", "--group", "heisenberg", "--a", "1,0,0", "--b", "0,1,0")
    assert code == 0
    assert json.loads(out)["result"] == ["1", "1", "1"]


def test_group_dilate_rational(capsys):
    code, out, _ = run(capsys, "group", "dilate", "--group", "engel", "--a", "1,1,1,1", "--lam", "1/2")
    assert code == 0
    assert json.loads(out)["result"] == ["1/2", "1/2", "1/4", "1/8"]


def test_submersion(capsys):
    code, out, _ = run(capsys, "submersion", "--group", "filiform:2", "--xi", "1,0", "--p", "3")
    assert code == 0 and json.loads(out)["rank"] == 4


def test_solve_step2_csv(capsys):
    code, out, _ = run(capsys, "solve-step2", "--group", "heisenberg", "--xi", "1,0", "--z", "1/2,1", "--t", "3", "--format", "csv")
    assert code == 0
    rows = list(csv.reader(out.splitlines()))
    assert rows[0] == ["j", "u1", "u2"] and len(rows) == 10


def test_unknown_group_exit_2(capsys):
    code, _, err = run(capsys, "group", "mul", "--group", "bogus", "--a", "1", "--b", "1")
    assert code == 2 and "unknown group" in err


def test_missing_seed_exit_2(capsys):
    code, _, err = run(capsys, "distance", "--group", "heisenberg", "--b", "0,0,1")
    assert code == 2 and "--seed" in err


def test_bad_vector_exit_2(capsys):
    code, _, _ = run(capsys, "group", "mul", "--group", "heisenberg", "--a", "1,x,0", "--b", "0,1,0")
    assert code == 2


def test_distance_deterministic(capsys):
    args = ("distance", "--group", "heisenberg", "--b", "0.2,0.1,0.3", "--N", "12", "--restarts", "2", "--seed", "7", "--mode", "float")
    code1, out1, _ = run(capsys, *args)
    code2, out2, _ = run(capsys, *args)
    assert code1 == code2 == 0
    assert out1 == out2


def test_out_writes_json_and_csv(tmp_path, capsys):
    target = tmp_path / "res.json"
    code, _, _ = run(capsys, "pansu", "--group", "heisenberg", "--w", "2,0", "--x0", "0,1,1", "--out", str(target))
    assert code == 0
    data = json.loads(target.read_text())
    assert data["slope_upper"] > 1.9
    assert target.with_suffix(".csv").exists()


def test_plot_written(tmp_path, capsys):
    png = tmp_path / "slope.png"
    code, _, _ = run(capsys, "pansu", "--group", "heisenberg", "--w", "2,0", "--x0", "0,1,1", "--plot", str(png))
    assert code == 0 and png.stat().st_size > 0


def test_hconvex_scan_cli(capsys):
    code, out, _ = run(capsys, "hconvex-scan", "--group", "engel", "--set", "filiform-even:2", "--lines", "200", "--grid", "16", "--seed", "0")
    assert code == 0 and json.loads(out)["verdict"] == "no-violation"


def test_witness_odd_cli(capsys):
    code, out, _ = run(capsys, "witness", "--kind", "odd", "--p", "3")
    assert code == 0 and json.loads(out)["pattern_ok"]
