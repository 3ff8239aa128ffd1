import json
import os

import numpy as np
import pytest

from parid import cli, engine, runner
from parid.config import parse_config
from parid.runner import run_experiment, write_atomic
from parid.weights import ZetaPowerLaw

TINY = "name = tiny\ndelta = 0\nweights = const:m=1\nt_max = 10\nseed = 3\nreps = 1\nsnapshot = [10]\n"


def read_hist(path):
    return np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)


def csv_files(root):
    return {p.relative_to(root): p.read_bytes() for p in sorted(root.rglob("*.csv"))}


def test_tiny_run_writes_one_histogram(tmp_path):
    res = run_experiment(parse_config(TINY), tmp_path, workers=1)
    assert res.status == 0 and res.passed
    hists = list((tmp_path / "tiny" / "histograms").glob("*.csv"))
    assert len(hists) == 1
    data = read_hist(hists[0])
    assert data[:, 1].sum() == 11
    assert (data[:, 0] * data[:, 1]).sum() == 20
    man = json.loads((tmp_path / "tiny" / "manifest.json").read_text())
    assert man["status"] == "complete" and man["completed_reps"] == [0]
    assert man["master_seed"] == 3 and man["seed_material"][0]["entropy"] == 3
    assert set(man["versions"]) >= {"parid", "numpy", "python"}
    assert "wall_time_s" in man and len(man["config_hash"]) == 64


SMALL = """
name = small
delta = 0.5
weights = zeta:tau=2.5
t_max = 2000
seed = 9
reps = 5
snapshots = 200, 2000
analyses = [ccdf_bound, hill(fraction=0.05, target=2.5, tol=1)]
"""


def test_same_spec_twice_is_byte_identical(tmp_path):
    spec = parse_config(SMALL)
    run_experiment(spec, tmp_path / "a", workers=1)
    run_experiment(spec, tmp_path / "b", workers=2)
    a, b = csv_files(tmp_path / "a" / "small"), csv_files(tmp_path / "b" / "small")
    assert len(a) >= 10 and a == b
    ra = json.loads((tmp_path / "a" / "small" / "report.json").read_text())
    rb = json.loads((tmp_path / "b" / "small" / "report.json").read_text())
    assert ra == rb


def test_interrupted_run_reuses_completed_reps(tmp_path, monkeypatch):
    spec = parse_config(SMALL)
    real = runner._rep_job

    def flaky(job):
        if job[-1] == 3:
            raise KeyboardInterrupt
        return real(job)

    monkeypatch.setattr(runner, "_rep_job", flaky)
    with pytest.raises(KeyboardInterrupt):
        run_experiment(spec, tmp_path / "x", workers=1)
    man = json.loads((tmp_path / "x" / "small" / "manifest.json").read_text())
    assert man["status"] == "running" and man["completed_reps"] == [0, 1, 2]

    monkeypatch.setattr(runner, "_rep_job", real)
    messages = []
    run_experiment(spec, tmp_path / "x", workers=1, log=messages.append)
    assert "reusing 3 completed replications" in messages
    run_experiment(spec, tmp_path / "clean", workers=1)
    assert csv_files(tmp_path / "x" / "small") == csv_files(tmp_path / "clean" / "small")


def test_changed_config_does_not_reuse(tmp_path):
    spec = parse_config(SMALL)
    run_experiment(spec, tmp_path, workers=1)
    messages = []
    run_experiment(parse_config(SMALL.replace("seed = 9", "seed = 10")), tmp_path, workers=1,
                   log=messages.append)
    assert not any(m.startswith("reusing") for m in messages)


def test_worker_failure_names_the_replication(tmp_path, monkeypatch):
    real = engine.run

    def broken(params, times, rep=0, **kw):
        if rep == 1:
            raise ValueError("boom")
        return real(params, times, rep, **kw)

    monkeypatch.setattr(engine, "run", broken)
    with pytest.raises(RuntimeError, match="replication 1 failed"):
        run_experiment(parse_config(SMALL), tmp_path, workers=1)


def test_atomic_write_leaves_nothing_behind(tmp_path, monkeypatch):
    target = tmp_path / "out.csv"
    write_atomic(target, "old\n")

    def fail(src, dst):
        raise OSError("disk full")

    monkeypatch.setattr(os, "replace", fail)
    with pytest.raises(OSError):
        write_atomic(target, "new contents\n")
    assert target.read_text() == "old\n"
    assert [p.name for p in tmp_path.iterdir()] == ["out.csv"]
    with pytest.raises(OSError):
        write_atomic(tmp_path / "fresh.csv", "x")
    assert not (tmp_path / "fresh.csv").exists()


def test_exit_status_follows_analyses(tmp_path):
    good = "name = g\ndelta = 0\nweights = const:m=2\nt_max = 10\n" \
           "analyses = [theory_table(k_max=10000, slope_lo=100, slope_hi=10000, target=-3, tol=0.05)]\n"
    bad = good.replace("target=-3", "target=-2")
    assert run_experiment(parse_config(good), tmp_path).status == 0
    res = run_experiment(parse_config(bad), tmp_path)
    assert res.status == 1 and not res.passed
    (tmp_path / "bad.toml").write_text(bad.replace("name = g", "name = b"))
    assert cli.main(["verify", str(tmp_path / "bad.toml"), "--out", str(tmp_path)]) == 1
    assert (tmp_path / "g" / "theory.csv").exists()


def test_verify_config_errors_exit_two(tmp_path, capsys):
    (tmp_path / "c.toml").write_text("delta = -1\nweights = const:m=1\nt_max = 10\nflavour = x\n")
    assert cli.main(["verify", str(tmp_path / "c.toml")]) == 2
    err = capsys.readouterr().err
    assert "line 1:" in err and "line 4:" in err


def test_verify_list_and_unknown(capsys):
    assert cli.main(["verify", "--list"]) == 0
    names = capsys.readouterr().out.split()
    assert "theorem1_const_m1" in names and "smoke" in names
    assert cli.main(["verify", "no_such_spec"]) == 2


def test_verify_smoke_with_overrides(tmp_path, capsys):
    assert cli.main(["verify", "smoke", "--out", str(tmp_path), "--seed", "5", "--reps", "2"]) == 0
    out = capsys.readouterr().out
    assert "PASS  ccdf_bound" in out
    man = json.loads((tmp_path / "smoke" / "manifest.json").read_text())
    assert man["master_seed"] == 5 and man["reps"] == 2


def test_generate(tmp_path):
    out = tmp_path / "g"
    assert cli.main(["generate", "--weights", "zeta:tau=2.5", "--t-max", "500", "--snapshots", "50,500",
                     "--seed", "4", "--edges", "--out", str(out)]) == 0
    h = read_hist(out / "hist_t0000000500.csv")
    assert h[:, 1].sum() == 501
    edges = np.loadtxt(out / "edges.csv", delimiter=",", skiprows=1)
    man = json.loads((out / "manifest.json").read_text())
    assert len(edges) == man["L_t"] == (h[:, 0] * h[:, 1]).sum() / 2
    # the same call reproduces the run exactly
    state = engine.run(engine.ModelParams(0.0, ZetaPowerLaw(2.5), 500, 4), [500])[1][0]
    assert np.array_equal(state.counts, h[:, 1])


def test_generate_bad_delta(capsys):
    assert cli.main(["generate", "--weights", "const:m=1", "--delta", "-1", "--t-max", "5"]) == 2
    assert "min support" in capsys.readouterr().err


def test_theory_to_stdout(capsys):
    assert cli.main(["theory", "--weights", "const:m=1", "--k-max", "3", "--out", "-"]) == 0
    cap = capsys.readouterr()
    lines = cap.out.splitlines()
    assert lines[0] == "k,p_k" and float(lines[1].split(",")[1]) == pytest.approx(2 / 3, rel=1e-15)
    assert json.loads(cap.err)["tau_p"] == 3.0


def test_theory_files_and_infinite_mean(tmp_path, capsys):
    assert cli.main(["theory", "--weights", "zeta:tau=2.5", "--delta", "1", "--out", str(tmp_path)]) == 0
    head = json.loads((tmp_path / "theory.json").read_text())
    assert head["tau"] == 2.5 and head["k_max"] == 10**4
    assert cli.main(["theory", "--weights", "zeta:tau=1.5"]) == 2
    assert "tau = tau_w = 1.5" in capsys.readouterr().err


def test_couple(tmp_path):
    assert cli.main(["couple", "--weights", "const:m=2", "--t-max", "200", "--reps", "3",
                     "--out", str(tmp_path)]) == 0
    summary = json.loads((tmp_path / "coupling.json").read_text())
    assert summary["mean_U_t"] == 0.0 and summary["identical_fraction"] == 1.0
    assert cli.main(["couple", "--weights", "zeta:tau=2.2", "--t-max", "1000", "--reps", "5",
                     "--growth", "100,1000", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "coupling_growth.csv").read_text().startswith("t,mean_U,stderr\n")
    assert cli.main(["couple", "--weights", "const:m=1", "--t-max", "10", "--a", "0.7"]) == 2


def test_moments(tmp_path):
    assert cli.main(["moments", "--weights", "zeta:tau=1.5", "--t-max", "1000", "--s", "0.3",
                     "--probes", "10,100,1000", "--reps", "20", "--out", str(tmp_path)]) == 0
    rows = np.loadtxt(tmp_path / "moments.csv", delimiter=",", skiprows=1)
    assert list(rows[:, 0]) == [10, 100, 1000]
    assert np.all(np.diff(rows[:, 1]) < 0)  # older vertices have larger degrees
    assert cli.main(["moments", "--weights", "const:m=1", "--t-max", "10", "--s", "0.3"]) == 2


def test_bundled_theorem1_decay(tmp_path):
    res = run_experiment(parse_config(cli.bundled_specs()["theorem1_const_m1"].read_text()), tmp_path,
                         workers=1)
    decay = (tmp_path / "theorem1_const_m1" / "decay.csv").read_text().splitlines()
    assert decay[0].startswith("t,")
    assert len(decay) == 4
    gamma = res.report["analyses"]["supnorm"]["gamma"]
    assert 0.3 < gamma < 0.6
