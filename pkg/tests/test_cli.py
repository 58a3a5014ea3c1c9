import hashlib
import json
import subprocess
import sys

import pytest

from fieldparticle.cli import main

SMALL = ["--override", "grid.L=16.0", "--override", "grid.npts=16"]


def run(args, tmp_path, name="out"):
    out = tmp_path / name
    code = main(list(args) + ["--out", str(out), "--workers", "1"])
    return code, out


def digest(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


def test_module_entry_point_prints_help():
    res = subprocess.run([sys.executable, "-m", "fieldparticle", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for name in ("kernels", "resolvent", "stability", "evolve", "ensemble", "gibbs", "two-temp", "mixing", "all"):
        assert name in res.stdout


def test_kernels_writes_stamped_table(tmp_path):
    code, out = run(["kernels"], tmp_path)
    assert code == 0
    head = json.loads((out / "kernel_table.ndjson").read_text().splitlines()[0])
    cfg_hash = json.loads((out / "verdicts.json").read_text())["config_hash"]
    assert cfg_hash in json.dumps(head)
    assert (out / "config.toml").read_text().startswith(f"# config_hash={cfg_hash}")


def test_stability_exit_codes(tmp_path):
    assert run(["stability", "--field", "kgf"], tmp_path, "ok")[0] == 0
    code, out = run(["stability", "--override", "coupling.g=2.0"], tmp_path, "bad")
    assert code == 2
    data = json.loads((out / "verdicts.json").read_text())
    assert data["passed"] is False


def test_resolvent_exit_code_follows_verdict(tmp_path):
    code, out = run(["resolvent", "--field", "wf"], tmp_path)
    data = json.loads((out / "verdicts.json").read_text())
    assert code == (0 if data["passed"] else 2)
    assert any(p.suffix == ".csv" for p in out.iterdir())


def test_evolve_is_deterministic(tmp_path):
    args = ["evolve", "--seed", "7", "--override", "integrator.T=2.0"] + SMALL
    code_a, a = run(args, tmp_path, "a")
    code_b, b = run(args, tmp_path, "b")
    assert code_a == code_b == 0
    for name in ("trajectory.csv", "energy.csv", "verdicts.json", "summary.txt", "config.toml"):
        assert digest(a / name) == digest(b / name)
    lines = (a / "trajectory.csv").read_text().splitlines()
    assert lines[0].startswith("# config_hash=") and lines[1] == "t,q1,q2,q3,p1,p2,p3"
    assert len(lines) == 2 + 21


def test_evolve_leapfrog_and_seed_change(tmp_path):
    base = ["evolve", "--override", "integrator.T=1.0"] + SMALL
    assert run(base + ["--method", "leapfrog", "--seed", "1"], tmp_path, "lf")[0] == 0
    _, a = run(base + ["--seed", "1"], tmp_path, "s1")
    _, b = run(base + ["--seed", "2"], tmp_path, "s2")
    assert digest(a / "trajectory.csv") != digest(b / "trajectory.csv")


def test_ensemble_rows(tmp_path):
    code, out = run(["ensemble", "--field", "kgf", "--size", "100", "--t", "5,10,15"] + SMALL, tmp_path)
    assert code in (0, 2)
    conv = [p for p in out.iterdir() if p.name.endswith("convergence.csv")]
    rows = conv[0].read_text().splitlines()[2:]
    assert len(rows) == 9
    data = json.loads((out / "verdicts.json").read_text())
    assert [c["check"] for c in data["checks"]] == ["covariance_convergence", "gaussianity"]
    assert data["config"]["ensemble"]["size"] == 100


def test_run_with_no_checks_only_validates(tmp_path):
    code, out = run(["run", "--field", "kgf"], tmp_path)
    assert code == 0
    assert "no checks requested" in (out / "summary.txt").read_text()


def test_config_file_and_override_order(tmp_path):
    cfg = tmp_path / "exp.toml"
    cfg.write_text('preset = "kgf"\nchecks = ["kernel_identities"]\n[coupling]\ng = 0.9\n')
    code, out = run(["run", "--config", str(cfg), "--override", "coupling.g=0.8"], tmp_path)
    assert code == 0
    data = json.loads((out / "verdicts.json").read_text())
    assert data["config"]["coupling"]["g"] == 0.8 and data["checks"][0]["check"] == "kernel_identities"


@pytest.mark.parametrize("argv", [
    ["teleport"],
    ["kernels", "--override", "coupling.mass=1"],
    ["kernels", "--seed", "-1"],
    ["ensemble", "--size", "0"],
    ["kernels", "--field", "dirac"],
    ["run", "--override", "integrator.dt=0.0"],
])
def test_usage_errors_exit_with_one(argv, tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        code = main(argv + ["--out", str(tmp_path / "x")])
        raise SystemExit(code)
    assert exc.value.code == 1


def test_all_subset_writes_criterion_files(tmp_path):
    code, out = run(["all", "--criteria", "1,2"], tmp_path)
    assert code == 0
    data = json.loads((out / "verdicts.json").read_text())
    assert [c["criterion"] for c in data["checks"]] == [1, 2]
    assert set(data["criteria_configs"]) == {"1", "2"}
