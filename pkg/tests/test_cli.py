import json
import math
import subprocess
import sys

import pytest

from conjlab import cli, optimizer, store

SQRT3 = math.sqrt(3.0)


@pytest.fixture
def tri(tmp_path):
    p = tmp_path / "tri.json"
    p.write_text(json.dumps({"vertices": [[1, 0], [-0.5, SQRT3 / 2], [-0.5, -SQRT3 / 2]]}))
    return p


def run_json(capsys, argv):
    code = cli.run(argv)
    out, err = capsys.readouterr()
    return code, (json.loads(out) if out.strip().startswith("{") else out), err


HELP_NODES = [[], ["geom"], ["geom", "ratio"], ["geom", "estimate"], ["geom3"], ["geom3", "ratio"],
              ["geom3", "estimate"], ["fermat"], ["fermat", "test"], ["fermat", "search"],
              ["fermat", "sweep"], ["report"]]


@pytest.mark.parametrize("node", HELP_NODES, ids=lambda n: " ".join(n) or "root")
def test_help(node, capsys):
    assert cli.run(node + ["--help"]) == 0
    out = capsys.readouterr().out
    assert "usage:" in out
    if node and node[-1] in ("estimate", "search", "sweep", "test"):
        assert "(default:" in out


def test_help_lists_every_flag(capsys):
    parser = cli.build_parser()

    def walk(p, path):
        yield path, p
        for a in p._actions:
            if a.choices and isinstance(a.choices, dict):
                for name, sp in a.choices.items():
                    yield from walk(sp, path + [name])

    for path, p in walk(parser, []):
        cli.run(path + ["--help"])
        out = capsys.readouterr().out
        for a in p._actions:
            for opt in a.option_strings:
                if opt.startswith("--"):
                    assert opt in out, (path, opt)


def test_usage_errors(capsys):
    assert cli.run([]) == 2
    assert cli.run(["geom", "ratio", "--bogus"]) == 2
    assert cli.run(["fermat", "sweep", "--a", "3..2", "--b", "2", "--c", "1", "--kmax", "1", "--out", "x"]) == 2


def test_geom_ratio(tri, capsys):
    code, out, _ = run_json(capsys, ["geom", "ratio", "--polygon", str(tri), "--point", "0,0"])
    assert code == 0
    assert out["ratio"] == pytest.approx(2.0, abs=1e-9)
    assert len(out["pedal"]) == 3


def test_geom_ratio_formats(tri, capsys):
    assert cli.run(["geom", "ratio", "--polygon", str(tri), "--point", "0,0", "--format", "text"]) == 0
    assert "ratio: 2.0" in capsys.readouterr().out
    assert cli.run(["geom", "ratio", "--polygon", str(tri), "--point", "0,0", "--format", "csv"]) == 0
    header, row = capsys.readouterr().out.splitlines()
    assert "ratio" in header.split(",")


def test_geom_validation_errors(tmp_path, tri, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"vertices": [[0, 0], [2, 0], [1, 0], [1, 2]]}))
    assert cli.run(["geom", "ratio", "--polygon", str(bad), "--point", "1,1"]) == 3
    assert "NotConvex" in capsys.readouterr().err
    assert cli.run(["geom", "ratio", "--polygon", str(tri), "--point", "5,5"]) == 3
    assert cli.run(["geom", "ratio", "--polygon", str(tri), "--point", "0,0", "--alpha", "180"]) == 3
    assert cli.run(["geom", "ratio", "--polygon", str(tmp_path / "missing.json"), "--point", "0,0"]) == 4


def test_geom3_ratio(capsys):
    code, out, _ = run_json(capsys, ["geom3", "ratio", "--fixture", "tetra", "--point", "0,0,0", "--target", "edges"])
    assert code == 0 and out["ratio"] == pytest.approx(2 / SQRT3, abs=1e-9)
    code, out, _ = run_json(capsys, ["geom3", "ratio", "--fixture", "cube", "--point", "0,0,0"])
    assert out["ratio"] == pytest.approx(4 / SQRT3, abs=1e-9)
    assert all(p["inside_face"] for p in out["pedal"])


def test_geom_estimate_out_is_deterministic(tmp_path, capsys):
    argv = ["geom", "estimate", "--n", "3", "--restarts", "2", "--outer-iters", "10", "--inner-iters", "100",
            "--no-timestamps", "--seed", "3"]
    assert cli.run(argv + ["--out", str(tmp_path / "a.jsonl")]) == 0
    assert cli.run(argv + ["--out", str(tmp_path / "b.jsonl")]) == 0
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()
    [d] = store.read_records(tmp_path / "a.jsonl")
    assert optimizer.ConstantEstimate.from_json(d).reevaluate() == pytest.approx(d["min_ratio"], abs=1e-9)


def test_counterexample_exit_code(monkeypatch, tmp_path, capsys):
    real = optimizer.estimate_constant_2d

    def fake(*a, **kw):
        est = real(*a, **kw)
        est.min_ratio = 1.5
        est.counterexample = True
        return est

    monkeypatch.setattr(optimizer, "estimate_constant_2d", fake)
    out = tmp_path / "e.jsonl"
    code = cli.run(["geom", "estimate", "--n", "3", "--restarts", "1", "--outer-iters", "5", "--out", str(out)])
    assert code == 10
    assert "COUNTEREXAMPLE" in capsys.readouterr().err
    assert store.read_records(out)[0]["counterexample"] is True


def test_fermat_search(capsys):
    code, out, _ = run_json(capsys, ["fermat", "search", "--a", "2", "--b", "2", "--c", "1", "--kmax", "5"])
    assert code == 0
    assert (out["k0"], out["streak_length"], out["prime_positions"]) == (0, 5, [0, 1, 2, 3, 4])


def test_fermat_not_coprime(capsys):
    assert cli.run(["fermat", "search", "--a", "2", "--b", "2", "--c", "2", "--kmax", "3"]) == 3
    assert "coprime" in capsys.readouterr().err


def test_fermat_test(capsys):
    code, out, _ = run_json(capsys, ["fermat", "test", "--a", "2", "--b", "3", "--c", "1", "--k", "1"])
    assert code == 0 and out["status"] == "Composite" and out["filter"]["kind"] == "PlusOneForm"


SWEEP = ["fermat", "sweep", "--a", "2..3", "--b", "2", "--c=-3..3", "--kmax", "3", "--no-timestamps"]


def test_sweep_resume_rejects_other_policy(tmp_path, capsys):
    out = tmp_path / "s.jsonl"
    assert cli.run(SWEEP + ["--out", str(out)]) == 0
    assert cli.run(SWEEP[:-3] + ["--kmax", "4", "--no-timestamps", "--out", str(out), "--resume"]) == 3


def test_sweep_resume_after_crash(tmp_path, capsys):
    full = tmp_path / "full.jsonl"
    assert cli.run(SWEEP + ["--out", str(full)]) == 0
    data = full.read_bytes()
    part = tmp_path / "part.jsonl"
    part.write_bytes(data[: len(data) // 2])  # mid-line cut
    assert cli.run(SWEEP + ["--out", str(part), "--resume"]) == 0
    assert part.read_bytes() == data
    assert (tmp_path / "part.jsonl.partial").exists()


def test_report(tmp_path, capsys):
    out = tmp_path / "s.jsonl"
    cli.run(SWEEP + ["--out", str(out)])
    capsys.readouterr()
    assert cli.run(["report", "--in", str(out), "--columns", "a,b,c,k0,streak_length,prime_positions"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "a,b,c,k0,streak_length,prime_positions"
    assert len(lines) == 1 + len(store.read_records(out))
    assert cli.run(["report", "--in", str(out), "--columns", "nope"]) == 3


def test_report_plot(tmp_path, capsys):
    out = tmp_path / "s.jsonl"
    cli.run(SWEEP + ["--out", str(out)])
    png = tmp_path / "grid.png"
    assert cli.run(["report", "--in", str(out), "--columns", "a", "--out", str(tmp_path / "t.csv"),
                    "--plot", str(png)]) == 0
    assert png.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "conjlab", "fermat", "test", "--a", "2", "--b", "2",
                          "--c", "1", "--k", "3"], capture_output=True, text=True, check=False)
    assert res.returncode == 0
    assert json.loads(res.stdout)["status"] == "Prime"
