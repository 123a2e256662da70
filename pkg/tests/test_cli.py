import json

import numpy as np
import pytest

from couette import cli
from couette.chebgrid import build_grid
from couette.errors import BlowUpError, ResolutionError
from couette.modal_ops import Mode, build_os_nonslip
from couette.resolvent import lap_ensemble


def run(args, tmp_path, name="out"):
    path = tmp_path / name
    code = cli.main(list(args) + ["--out", str(path)])
    return code, path


def test_spectrum_example(tmp_path):
    code, path = run(["spectrum", "--nu", "1e-3", "--k", "1", "--l", "0"], tmp_path)
    assert code == 0
    meta, rows = cli.read_csv(path)
    assert len(rows) == 40
    assert set(rows[0]) >= {"re", "im", "converged"}
    n, n2 = meta["grids"][0]
    assert n2 == 2 * n
    mu = build_os_nonslip(build_grid(n), Mode(1, 0, 1e-3)).eigenvalues()[:40]
    got = np.array([r["re"] + 1j * r["im"] for r in rows])
    assert np.max(np.abs(got - mu)) <= 1e-14 * np.max(np.abs(mu))
    # the least-damped modes are resolved on the default grid
    assert all(r["converged"] for r in rows[:10])
    assert np.all(np.diff([r["re"] for r in rows]) >= 0)


def test_invalid_nu_exits_2_naming_field(capsys):
    assert cli.main(["spectrum", "--nu", "0"]) == 2
    assert "'nu'" in capsys.readouterr().err


@pytest.mark.parametrize("args", [["spectrum", "--k", "1.5"], ["spectrum", "--nu", "nan"],
                                  ["spectrum", "--bc", "wavy"], ["evolve", "--dt", "-1"],
                                  ["nosuch"]])
def test_bad_arguments_exit_2(args):
    assert cli.main(args) == 2


def test_lap_check_example(tmp_path):
    code, path = run(["lap-check", "--alpha", "1", "--imc", "1e-3", "--ensemble", "20"], tmp_path)
    assert code == 0
    out = json.loads(path.read_text())
    res = out["result"]
    assert res["finite"]
    ref = lap_ensemble(build_grid(64), 1.0, [1e-3], count=20, seed=0)[1e-3]
    assert (res["max_r1"], res["max_r2"]) == pytest.approx(ref, rel=1e-12)
    assert out["metadata"]["seed"] == 0 and out["metadata"]["rng"] == cli.RNG_NAME


def test_determinism_and_jobs(tmp_path):
    base = ["lap-check", "--imc", "1e-1", "1e-2", "--ensemble", "3", "--seed", "11"]
    _, a = run(base, tmp_path, "a")
    _, b = run(base, tmp_path, "b")
    _, c = run(["lap-check", "--imc", "1e-2", "1e-1", "--ensemble", "3", "--seed", "11",
                "--jobs", "2"], tmp_path, "c")
    assert a.read_bytes() == b.read_bytes() == c.read_bytes()
    _, d = run(["lap-check", "--imc", "1e-1", "1e-2", "--ensemble", "3", "--seed", "12"],
               tmp_path, "d")
    assert json.loads(d.read_text())["result"] != json.loads(a.read_text())["result"]


def test_csv_layout(tmp_path):
    code, path = run(["gp-check", "--nu", "1e-2", "--k", "1", "2"], tmp_path)
    assert code == 0
    lines = path.read_text().splitlines()
    body = [ln for ln in lines if not ln.startswith("#")]
    assert body[0] == "nu,k,l,n,psi,margin,holds"
    assert body[1] == "float,int,int,int,float,float,bool"
    assert "e-02" in body[2].split(",")[0]
    meta, rows = cli.read_csv(path)
    assert {"tool", "version", "config_hash", "grids", "seed"} <= set(meta)
    assert [r["k"] for r in rows] == [1, 2]
    assert all(r["holds"] for r in rows)


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "run.yaml"
    cfg.write_text("nu: 1.0e-2\nevolve:\n  T: 2.0\n  dt: 0.5\ndns:\n  T: 99\n")
    code, path = run(["evolve", "--config", str(cfg), "--dt", "0.25"], tmp_path)
    assert code == 0
    meta, rows = cli.read_csv(path)
    assert meta["config"]["T"] == 2.0 and meta["config"]["dt"] == 0.25
    assert len(rows) == 9


def test_config_errors_report_line(tmp_path, capsys):
    cfg = tmp_path / "bad.yaml"
    cfg.write_text("T: 2.0\nbogus: 1\n")
    assert cli.main(["evolve", "--config", str(cfg)]) == 2
    err = capsys.readouterr().err
    assert "'bogus'" in err and "line 2" in err
    cfg.write_text("T: 2.0\n\nnu: -3\n")
    assert cli.main(["evolve", "--config", str(cfg)]) == 2
    err = capsys.readouterr().err
    assert "'nu'" in err and "line 3" in err
    cfg.write_text("command: dns\n")
    assert cli.main(["evolve", "--config", str(cfg)]) == 2
    cfg.write_text("[1, 2\n")
    assert cli.main(["evolve", "--config", str(cfg)]) == 2


def test_config_hash_ignores_jobs_only():
    p = cli.resolve("evolve", {"jobs": 4}, None)
    q = cli.resolve("evolve", {}, None)
    assert cli.config_hash("evolve", p) == cli.config_hash("evolve", q)
    r = cli.resolve("evolve", {"nu": "0.02"}, None)
    assert cli.config_hash("evolve", r) != cli.config_hash("evolve", q)


def test_fan_out_identifies_sweep_point():
    with pytest.raises(BlowUpError, match=r"sweep point nu=0\.5"):
        cli.fan_out(_explode, [{"nu": 0.1}, {"nu": 0.5}], 1)
    out = cli.fan_out(_square, [{"nu": 3.0}, {"nu": 1.0}, {"nu": 2.0}], 2)
    assert out == [({"nu": 1.0}, 1.0), ({"nu": 2.0}, 4.0), ({"nu": 3.0}, 9.0)]


def _explode(p):
    if p["nu"] > 0.2:
        raise BlowUpError("non-finite state")
    return p["nu"]


def _square(p):
    return p["nu"] ** 2


@pytest.mark.parametrize("exc, code", [(ResolutionError("grid too coarse"), 4),
                                       (BlowUpError("nan"), 3)])
def test_exit_codes(monkeypatch, exc, code):
    def boom(params):
        raise exc
    monkeypatch.setitem(cli.RUNNERS, "evolve", boom)
    assert cli.main(["evolve"]) == code


def test_beta_fit_from_threshold_table(tmp_path):
    nus = [5e-4, 1e-3, 2e-3]
    art = cli.Artifact("csv", {"config_hash": "x"}, ["nu", "a_star", "lower", "upper", "probes"],
                       [[n, 3 * n**1.2, 2.9 * n**1.2, 3.1 * n**1.2, 7] for n in nus])
    table = tmp_path / "thr.csv"
    table.write_text(cli.render(art))
    code, path = run(["beta-fit", "--input", str(table)], tmp_path)
    assert code == 0
    assert json.loads(path.read_text())["result"]["beta"] == pytest.approx(1.2, abs=1e-12)
    code, path = run(["beta-fit", "--nu", "2e-3", "1e-3", "5e-4", "--astar", "2e-3", "1e-3",
                      "5e-4"], tmp_path)
    assert json.loads(path.read_text())["result"]["beta"] == pytest.approx(1.0, abs=1e-12)
    assert cli.main(["beta-fit", "--nu", "1e-3", "--astar", "1e-3"]) == 2


def test_dns_checkpoint_restart(tmp_path):
    ck = tmp_path / "state.bin"
    code, a = run(["dns", "--nx", "8", "--nz", "8", "--T", "0.2", "--dt", "0.01",
                   "--checkpoint", str(ck)], tmp_path, "a")
    assert code == 0 and ck.exists()
    code, b = run(["dns", "--nx", "8", "--nz", "8", "--restart", str(ck), "--T", "0.1",
                   "--dt", "0.01"], tmp_path, "b")
    assert code == 0
    _, rows = cli.read_csv(b)
    assert rows[0]["t"] == pytest.approx(0.2) and rows[-1]["t"] == pytest.approx(0.3)
    assert cli.main(["dns", "--restart", str(tmp_path / "missing.bin")]) == 2


def test_corrector_bounds_rejects_short_range():
    assert cli.main(["corrector-bounds", "--L", "5", "10"]) == 2
