import io
import json
import subprocess
import sys

import pytest

from cbext.cli import run
from cbext.io import read_csv

STABLE = ["--preset", "stable", "--c-plus", "1", "--alpha", "1.5"]


def call(*argv):
    out = io.StringIO()
    code = run(list(argv), stdout=out)
    return code, out.getvalue()


def rows(text):
    _, header, body = read_csv(text)
    return header, [[float(v) for v in r] for r in body]


def test_kernel_table_example():
    code, text = call("kernel", "table", *STABLE, "--t", "4")
    assert code == 0
    header, body = rows(text)
    assert header == ["t", "phi", "varphi"]
    assert body == [[4.0, 1.0, 0.25]]
    assert text.splitlines()[0].startswith("# seed=0")


def test_scale_table_example():
    code, text = call("scale", "table", "--preset", "quadratic", "--beta", "1", "--x", "2")
    assert code == 0
    header, body = rows(text)
    assert header == ["x", "W"] and body == [[2.0, 2.0]]


def test_mechanism_inspect_example():
    code, text = call("mechanism", "inspect", *STABLE)
    doc = json.loads(text)
    assert code == 0 and doc["criticality"] == "critical"
    for key in ("gamma", "eta", "delta"):
        assert doc[key] == pytest.approx(1.5, abs=0.05)
    assert doc["seed"] == 0


def test_full_precision():
    _, text = call("kernel", "table", "--preset", "quadratic", "--beta", "3", "--t", "7")
    _, body = rows(text)
    assert body[0][1] == 1.0 / 21.0  # round-trips exactly


def test_yaglom_command():
    code, text = call("kernel", "yaglom", *STABLE, "--t", "100,10000", "--lambda", "0.25,1,4", "--format", "json")
    doc = json.loads(text)
    assert code == 0 and doc["decreasing_in_t"]
    assert max(r["error"] for r in doc["rows"] if r["t"] == 1e4) < 1e-2


def test_check_h_command():
    code, text = call("scale", "check-h", *STABLE, "--ratio", "0.5,1")
    header, body = read_csv(text)[1:]
    assert code == 0 and header == ["ratio", "estimate", "verdict"]
    assert body[0][2] == "true" and body[1][2] == "false"
    assert float(body[0][1]) == pytest.approx(0.5**0.5)


def test_simulate_paths_reversed_csv(tmp_path):
    dump = tmp_path / "p.bin"
    code, text = call("simulate", "paths", *STABLE, "--seed", "3", "--eps", "0.01", "--dump", str(dump))
    header, body = rows(text)
    assert code == 0 and header == ["s", "value"]
    assert body[0] == [0.0, 0.0] and body[-1][1] == 1.0
    assert dump.read_bytes()[:4] == b"CBXP"


def test_simulate_extinction_json():
    code, text = call("simulate", "extinction", "--preset", "quadratic", "--beta", "1", "--n-paths", "50",
                      "--eps", "0.01", "--seed", "9")
    doc = json.loads(text)
    assert code == 0 and doc["n_paths"] == 50 and doc["seed"] == 9
    assert {"q10", "q50", "q90"} <= set(doc["T0_quantiles"])


def test_scan_lil_json():
    code, text = call("scan", "lil", "--preset", "quadratic", "--beta", "1", "--n-paths", "5", "--n1", "10",
                      "--eps", "0.01", "--kind", "reflected_reversed")
    doc = json.loads(text)
    assert code == 0 and doc["kind"] == "reflected_reversed" and doc["n_paths"] == 5
    assert [q["n"] for q in doc["quantiles"]] == list(range(3, 11))


@pytest.mark.parametrize(
    "argv",
    [
        ["kernel", "table", "--preset", "linear_quadratic", "--a", "-1", "--beta", "1", "--t", "1"],
        ["kernel", "yaglom", "--preset", "linear_quadratic", "--a", "-1", "--beta", "1", "--t", "1", "--lambda", "1"],
        ["simulate", "paths", "--preset", "linear_quadratic", "--a", "-1", "--beta", "1"],
        ["simulate", "extinction", "--preset", "linear_quadratic", "--a", "-1", "--beta", "1", "--n-paths", "2"],
        ["scan", "lil", "--preset", "linear_quadratic", "--a", "-1", "--beta", "1", "--n-paths", "2"],
    ],
)
def test_grey_condition_exit_2(argv, capsys):
    code, _ = call(*argv)
    assert code == 2
    assert "does not die out" in capsys.readouterr().err


def test_validation_exit_2(capsys):
    assert call("kernel", "table", "--preset", "stable", "--c-plus", "1", "--alpha", "2.5", "--t", "1")[0] == 2
    assert "alpha" in capsys.readouterr().err
    assert call("kernel", "table", *STABLE)[0] == 2
    assert "--t" in capsys.readouterr().err
    assert call("kernel", "table", *STABLE, "--bogus", "1")[0] == 2
    assert "--bogus" in capsys.readouterr().err
    assert call("simulate", "paths", *STABLE, "--policy", "fixed")[0] == 2
    assert "--dt" in capsys.readouterr().err


def test_numerical_failure_exit_3(capsys):
    code, _ = call("kernel", "table", "--preset", "stable_gaussian", "--c-plus", "1", "--alpha", "1.5",
                   "--beta", "1", "--t", "1e-9")
    assert code == 3
    assert "numerical failure" in capsys.readouterr().err


def test_config_merge(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"mechanism": {"preset": "stable", "c_plus": 1.0, "alpha": 1.5}, "t": [4.0, 1.0],
                               "seed": 5}))
    code, text = call("kernel", "table", "--config", str(cfg))
    _, body = rows(text)
    assert code == 0 and [r[0] for r in body] == [4.0, 1.0]
    assert "seed=5" in text.splitlines()[0]
    # flags win over the file
    code, text = call("kernel", "table", "--config", str(cfg), "--c-plus", "2", "--t", "1")
    _, body = rows(text)
    assert body == [[1.0, 1.0, 1.0]]  # phi(1) = 1/(c (alpha - 1)) = 1 at c = 2


def test_flat_config_keys(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"preset": "quadratic", "beta": 2.0, "x": [1.0, 4.0]}))
    code, text = call("scale", "table", "--config", str(cfg))
    assert code == 0 and rows(text)[1] == [[1.0, 0.5], [4.0, 2.0]]


def test_bad_config(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text("{not json")
    assert call("kernel", "table", "--config", str(cfg))[0] == 2


@pytest.mark.parametrize(
    "argv",
    [
        ["simulate", "paths", *STABLE, "--seed", "11", "--eps", "0.01"],
        ["simulate", "extinction", *STABLE, "--seed", "11", "--n-paths", "20", "--eps", "0.01", "--format", "csv"],
        ["scan", "lil", "--preset", "quadratic", "--beta", "1", "--seed", "11", "--n-paths", "4", "--n1", "10",
         "--eps", "0.01"],
    ],
)
def test_byte_identical(argv, tmp_path):
    outs = []
    for i in range(2):
        target = tmp_path / f"out{i}"
        assert call(*argv, "--output", str(target))[0] == 0
        outs.append(target.read_bytes())
    assert outs[0] == outs[1] and outs[0]


def test_console_script():
    proc = subprocess.run([sys.executable, "-m", "cbext.cli", "scale", "table", "--preset", "quadratic",
                           "--beta", "1", "--x", "2"], capture_output=True, text=True)
    assert proc.returncode == 0 and "x,W" in proc.stdout
