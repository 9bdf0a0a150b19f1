import csv
import io
import json
import subprocess
import sys
from importlib.resources import files

import jsonschema
import numpy as np
import pytest

from phasegeo import cli, core


def run(argv):
    out, err = io.StringIO(), io.StringIO()
    code = cli.main(argv, stdout=out, stderr=err)
    return code, out.getvalue(), err.getvalue()


def schema(name):
    return json.loads(files("phasegeo").joinpath(f"schemas/{name}").read_text())


def test_version_and_help():
    code, _, _ = run(["--version"])
    assert code == 0
    assert run([])[0] == 2


def test_gen_and_solve_from_files(tmp_path):
    ens_path = tmp_path / "e.bin"
    code, out, _ = run(["gen", "--n", "8", "--m", "80", "--seed", "3", "--out", str(ens_path)])
    assert code == 0
    info = json.loads(out)
    assert info["n"] == 8 and info["m"] == 80
    ens = core.load_ensemble(ens_path)
    x = core.load_signal(tmp_path / "e.target.bin")
    np.testing.assert_allclose(ens.magnitudes, np.abs(ens.rows @ x), rtol=1e-14)
    trace = tmp_path / "t.csv"
    code, _, _ = run(["solve", "--ensemble", str(ens_path), "--target", str(tmp_path / "e.target.bin"),
                      "--seed", "3", "--out", str(trace)])
    assert code == 0
    summary = json.loads((tmp_path / "t.summary.json").read_text())
    jsonschema.validate(summary, schema("run_summary.schema.json"))
    assert summary["success"] is True and summary["phase_violations"] == 0
    with open(trace) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["iter", "f", "grad_norm", "dist", "step_kind", "delta", "model_decrease"]
    assert rows[-1][4] == "terminal"


def test_solve_to_stdout_json():
    code, out, _ = run(["solve", "--n", "8", "--seed", "1", "--format", "json"])
    assert code == 0
    data = json.loads(out)
    jsonschema.validate(data, schema("experiment_summary.schema.json"))
    jsonschema.validate(data["summary"], schema("run_summary.schema.json"))


def test_solve_init_target_needs_target_file(tmp_path):
    run(["gen", "--n", "4", "--m", "30", "--out", str(tmp_path / "e.bin")])
    code, _, err = run(["solve", "--ensemble", str(tmp_path / "e.bin"), "--init", "target"])
    assert code == 3 and "target" in err


@pytest.mark.parametrize(
    "argv",
    [
        ["figure1", "--n", "8", "--trials", "3", "--seed", "2"],
        ["sweep", "--n", "8", "--ratio-list", "6,8", "--trials", "2"],
        ["landscape", "--grid-steps", "11"],
        ["landscape", "--grid-mode", "empirical", "--model", "masked-dct", "--grid-steps", "11", "--mask-trials", "2"],
        ["certify", "--n", "4", "--trials", "500", "--samples", "5", "--m", "200"],
        ["trs-bench", "--trials", "12"],
    ],
)
def test_subcommands_json_schema(argv, tmp_path):
    out = tmp_path / "r.json"
    code, _, err = run(argv + ["--format", "json", "--out", str(out)])
    assert code == 0, err
    data = json.loads(out.read_text())
    jsonschema.validate(data, schema("experiment_summary.schema.json"))
    assert data["kind"] == argv[0]
    assert data["columns"] and len(data["rows"]) >= 1


def test_landscape_sidecars(tmp_path):
    out = tmp_path / "g.csv"
    assert run(["landscape", "--grid-steps", "9", "--out", str(out)])[0] == 0
    assert (tmp_path / "g.grid.csv").exists()
    meta = json.loads((tmp_path / "g.meta.json").read_text())
    assert meta["mode"] == "population-real-gaussian"


def test_certify_writes_certificates(tmp_path):
    out = tmp_path / "c.csv"
    assert run(["certify", "--n", "4", "--trials", "200", "--samples", "3", "--m", "200", "--out", str(out)])[0] == 0
    lines = (tmp_path / "c.certificates.csv").read_text().splitlines()
    assert len(lines) == 1 + 4 * 3


def test_csv_to_stdout():
    code, out, _ = run(["sweep", "--n", "8", "--ratio-list", "8", "--trials", "2"])
    assert code == 0
    rows = list(csv.reader(io.StringIO(out)))
    assert rows[0] == ["ratio", "m", "successes", "trials", "probability", "median_rel_error"]
    assert len(rows) == 2


@pytest.mark.parametrize(
    "argv",
    [
        ["solve", "--model", "bogus"],
        ["solve", "--format", "xml"],
        ["sweep", "--ratio-list", "5,4"],
        ["solve", "--n", "abc"],
        ["nosuchcommand"],
        ["solve", "--trials", "0"],
    ],
)
def test_usage_errors_exit_2(argv):
    assert run(argv)[0] == 2


def test_missing_files_exit_3(tmp_path):
    assert run(["solve", "--config", str(tmp_path / "nope.toml")])[0] == 3
    assert run(["solve", "--ensemble", str(tmp_path / "nope.bin")])[0] == 3
    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"garbage!")
    assert run(["solve", "--ensemble", str(bad)])[0] == 3


def test_degenerate_instance_exit_3(tmp_path):
    # all-zero magnitudes make the instance degenerate
    ens = core.MeasurementEnsemble(core.GAUSSIAN, np.ones((5, 2), dtype=complex), np.zeros(5), 0)
    core.save_ensemble(ens, tmp_path / "z.bin")
    code, _, err = run(["solve", "--ensemble", str(tmp_path / "z.bin")])
    assert code == 3 and "R0" in err


def test_config_files_and_override(tmp_path):
    toml = tmp_path / "c.toml"
    toml.write_text('n = 8\nratio-list = "6,8"\ntrials = 2\nseed = 5\n')
    js = tmp_path / "c.json"
    js.write_text(json.dumps({"n": 8, "ratio_list": "6,8", "trials": 2, "seed": 5}))
    a = run(["sweep", "--config", str(toml)])
    b = run(["sweep", "--config", str(js)])
    assert a[0] == b[0] == 0 and a[1] == b[1]
    c = run(["sweep", "--config", str(toml), "--trials", "1"])
    rows = list(csv.reader(io.StringIO(c[1])))
    assert all(r[3] == "1" for r in rows[1:])


def test_config_unknown_key(tmp_path):
    bad = tmp_path / "c.json"
    bad.write_text(json.dumps({"colour": "blue"}))
    code, _, err = run(["solve", "--config", str(bad)])
    assert code == 2 and "colour" in err


def test_byte_identical_outputs(tmp_path):
    for name in ("a", "b"):
        assert run(["figure1", "--n", "8", "--trials", "4", "--seed", "9", "--out", str(tmp_path / f"{name}.csv")])[0] == 0
        assert run(["gen", "--n", "6", "--seed", "9", "--out", str(tmp_path / f"{name}.bin")])[0] == 0
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert (tmp_path / "a.bin").read_bytes() == (tmp_path / "b.bin").read_bytes()
    assert (tmp_path / "a.target.bin").read_bytes() == (tmp_path / "b.target.bin").read_bytes()


def test_thread_count_does_not_change_output(monkeypatch):
    argv = ["figure1", "--n", "8", "--trials", "6", "--seed", "4"]
    monkeypatch.setenv("PR_THREADS", "1")
    one = run(argv)[1]
    monkeypatch.setenv("PR_THREADS", "3")
    three = run(argv)[1]
    assert one == three


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "phasegeo.cli", "trs-bench", "--trials", "3"],
                         capture_output=True, text=True)
    assert out.returncode == 0
    assert out.stdout.splitlines()[0].startswith("instance")


def test_numerical_error_class_exit_code():
    from phasegeo.errors import ConsistencyError, DegeneratePointError, PhaseGeoError

    assert PhaseGeoError("x").exit_code == 3
    assert DegeneratePointError("x").exit_code == 4
    assert ConsistencyError("x").exit_code == 4
