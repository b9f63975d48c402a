import json
import subprocess
import sys

import pytest

from arvmc.cli import NONDETERMINISTIC_FIELDS, main, validate_record

from conftest import data_path


def records(path):
    with open(path) as f:
        return [json.loads(line) for line in f]


def run(tmp_path, *argv, name="out.jsonl"):
    out = tmp_path / name
    code = main([*argv, "--out", str(out)])
    return code, records(out)


def strip(recs):
    return [{k: v for k, v in r.items() if k not in NONDETERMINISTIC_FIELDS} for r in recs]


def test_run_h2_defaults(tmp_path):
    code, recs = run(tmp_path, "run", "--fcidump", str(data_path("h2")), "--samples", "10000")
    assert code == 0
    for r in recs:
        validate_record(r)
    header, summary = recs[0], recs[-1]
    assert header["record"] == "header" and header["config"]["samples"] == 10000
    assert summary["status"] == "ok"
    assert abs(summary["energy"] - summary["e_fci"]) < 1.6e-3
    assert summary["chemical_accuracy"]
    assert 0.9 < summary["correlation_fraction"] <= 1.0 + 1e-9
    assert any(r["record"] == "iteration" for r in recs)


def test_missing_fcidump(tmp_path):
    code, recs = run(tmp_path, "run", "--fcidump", str(tmp_path / "nope.fcidump"))
    assert code == 1
    err = [r for r in recs if r["record"] == "error"]
    assert err and err[0]["kind"] == "input-not-found"
    assert recs[-1]["status"] == "failed"


def test_malformed_fcidump(tmp_path):
    bad = tmp_path / "bad.fcidump"
    bad.write_text("&FCI NELEC=2 &END\n")
    code, recs = run(tmp_path, "run", "--fcidump", str(bad))
    assert code == 1
    assert [r["kind"] for r in recs if r["record"] == "error"] == ["input-format"]


def test_bad_flag_value_is_an_input_error(tmp_path):
    assert main(["run", "--fcidump", str(data_path("h2")), "--iters", "0"]) == 1


def test_fixed_seed_is_reproducible(tmp_path):
    argv = ["run", "--fcidump", str(data_path("h2")), "--samples", "2000", "--iters", "30", "--seed", "4"]
    _, a = run(tmp_path, *argv, name="a.jsonl")
    _, b = run(tmp_path, *argv, name="b.jsonl")
    for recs in (a, b):
        recs[0]["config"].pop("out")
    assert strip(a) == strip(b)


def test_single_point_sweep_rejected(tmp_path):
    code, recs = run(tmp_path, "sweep", "--fcidump", str(data_path("h2")))
    assert code == 1
    assert recs[-2]["kind"] == "invalid-argument"


def test_sweep_flags_failed_points(tmp_path):
    code, recs = run(
        tmp_path, "sweep", "--fcidump", str(data_path("h2_r0.7414")), str(tmp_path / "missing_r9.fcidump"),
        "--samples", "2000", "--iters", "300",
    )
    points = [r for r in recs if r["record"] == "point"]
    assert [p["ok"] for p in points] == [True, False]
    assert points[0]["bond_length"] == 0.7414
    assert recs[-1]["status"] == "failed" and code == 2


def test_sample_benchmark_table(tmp_path):
    code, recs = run(
        tmp_path, "sample-benchmark", "--fcidump", str(data_path("lih")), "--grid", "1000", "10000",
        "--burn-in", "100", "--chains", "10",
    )
    assert code == 0
    rows = [r for r in recs if r["record"] == "benchmark"]
    assert {(r["method"], r["n_samples"]) for r in rows} == {
        ("bas", 1000), ("mcmc", 1000), ("bas", 10000), ("mcmc", 10000)
    }
    for r in rows:
        validate_record(r)
        assert r["n_unique"] <= r["n_f"] == 225
        assert 0.0 <= r["tv_distance"] <= 1.0
    assert all(0.0 < r["acceptance"] <= 1.0 for r in rows if r["method"] == "mcmc")


def test_checkpoint_feeds_benchmark(tmp_path):
    ckpt = tmp_path / "h2.npz"
    code, _ = run(tmp_path, "run", "--fcidump", str(data_path("h2")), "--samples", "2000", "--iters", "20",
                  "--checkpoint", str(ckpt), name="r.jsonl")
    assert code == 0 and ckpt.exists()
    code, recs = run(tmp_path, "sample-benchmark", "--fcidump", str(data_path("h2")), "--checkpoint", str(ckpt),
                     "--grid", "1000", "--burn-in", "10", "--chains", "4")
    assert code == 0


def test_make_fixtures(tmp_path):
    src = tmp_path / "data"
    src.mkdir()
    for name in ("h2", "lih"):
        (src / f"{name}.fcidump").write_text(data_path(name).read_text())
    code = main(["make-fixtures", "--data-dir", str(src)])
    assert code == 0
    manifest = json.loads((src / "manifest.json").read_text())
    h2 = manifest["molecules"]["h2"]
    assert h2["n_pauli"] == 15 and h2["dimension"] == 4
    assert h2["e_fci"] == pytest.approx(-1.137270174660902, abs=1e-10)
    assert manifest["molecules"]["lih"]["e_cisd"] >= manifest["molecules"]["lih"]["e_fci"]


def test_bundled_manifest_matches_oracle():
    from conftest import manifest
    from arvmc.oracle import fci_ground_state
    from arvmc.hamio import load_fcidump

    mols = manifest()["molecules"]
    for name in ("h2", "lih", "h2o"):
        e = fci_ground_state(load_fcidump(data_path(name))).energy
        assert mols[name]["e_fci"] == pytest.approx(e, abs=1e-9)


def test_module_entry_point(tmp_path):
    out = tmp_path / "m.jsonl"
    proc = subprocess.run(
        [sys.executable, "-m", "arvmc", "run", "--fcidump", str(tmp_path / "absent"), "--out", str(out)],
        capture_output=True,
    )
    assert proc.returncode == 1
    assert records(out)[-1]["status"] == "failed"
