import json
import math
import os
import subprocess
import sys
from pathlib import Path

import pytest

from calabi import blaschke, dsl
from conftest import HYPERBOLA_B_SRC, HYPERBOLA_SRC, QUADRIC_SRC

REPORT_KEYS = {"name", "max_residual", "tolerance", "pass", "worst_point"}


def run_cli(*args: str, threads: str | None = None):
    env = dict(os.environ)
    if threads is not None:
        env["CALABI_THREADS"] = threads
    return subprocess.run(
        [sys.executable, "-m", "calabi.cli", *args],
        capture_output=True, env=env)


@pytest.fixture(scope="module")
def workdir(tmp_path_factory) -> Path:
    """Immersion files shared by the CLI tests: the two hyperbola factors,
    a constructed pair product, a quadric and a non-sphere perturbation."""
    root = tmp_path_factory.mktemp("cliwork")
    (root / "h2.immersion").write_text(HYPERBOLA_SRC, encoding="utf-8")
    (root / "h2b.immersion").write_text(HYPERBOLA_B_SRC, encoding="utf-8")
    (root / "quadric.immersion").write_text(QUADRIC_SRC, encoding="utf-8")

    res = run_cli("construct", "pair",
                  str(root / "h2.immersion"), str(root / "h2b.immersion"),
                  "-o", str(root / "pair.immersion"), "--name", "c4")
    assert res.returncode == 0, res.stderr.decode()

    pair = dsl.parse_immersion(
        (root / "pair.immersion").read_text(encoding="utf-8"))
    u1 = dsl.var(pair.vars[0])
    bump = dsl.add(dsl.const(1.0),
                   dsl.mul(dsl.const(0.01), dsl.mul(u1, u1)))
    perturbed = dsl.ImmersionDef(
        name="perturbed", vars=pair.vars,
        components=tuple(dsl.mul(bump, c) for c in pair.components))
    (root / "perturbed.immersion").write_text(
        dsl.print_immersion(perturbed) + "\n", encoding="utf-8")
    return root


def test_construct_emits_provenance_header(workdir):
    text = (workdir / "pair.immersion").read_text(encoding="utf-8")
    assert text.startswith("#@product(kind=pair")
    res = run_cli("construct", "pair",
                  str(workdir / "h2.immersion"),
                  str(workdir / "h2b.immersion"),
                  "-o", str(workdir / "pair_again.immersion"))
    payload = json.loads(res.stdout)
    assert res.returncode == 0
    assert payload["command"] == "construct"
    assert payload["product"]["kind"] == "pair"
    assert payload["product"]["n2"] == 1
    assert payload["product"]["n3"] == 1
    assert payload["product"]["components"] == 4


def test_check_passes_on_constructed_product(workdir):
    res = run_cli("check", str(workdir / "pair.immersion"), "--grid", "g27")
    assert res.returncode == 0, res.stderr.decode()
    payload = json.loads(res.stdout)
    assert set(payload) >= {"command", "inputs", "seed", "reports"}
    assert payload["seed"] == 42
    names = [row["name"] for row in payload["reports"]]
    assert names == ["sphere", "apolarity", "gauss", "codazzi",
                     "parallel_cubic", "unimodular"]
    for row in payload["reports"]:
        assert REPORT_KEYS <= set(row)
        assert row["pass"] is True
        assert row["max_residual"] <= row["tolerance"]


def test_check_tolerance_override_fails(workdir, tmp_path):
    out = tmp_path / "report.json"
    res = run_cli("check", str(workdir / "pair.immersion"), "--grid", "g27",
                  "--tol", "sphere=1e-30", "-o", str(out))
    assert res.returncode == 1
    payload = json.loads(res.stdout)
    sphere = next(r for r in payload["reports"] if r["name"] == "sphere")
    assert sphere["pass"] is False
    assert sphere["tolerance"] == 1e-30
    # report is still written on failure
    assert json.loads(out.read_text(encoding="utf-8")) == payload


def test_detect_is_byte_deterministic(workdir, tmp_path):
    runs = []
    for idx in (1, 2):
        out = tmp_path / f"verdict{idx}.json"
        res = run_cli("detect", str(workdir / "pair.immersion"),
                      "--grid", "g27", "--seed", "42", "-o", str(out),
                      threads="2")
        assert res.returncode == 0
        runs.append((res.stdout, out.read_bytes()))
    assert runs[0][0] == runs[1][0]
    assert runs[0][1] == runs[1][1]

    payload = json.loads(runs[0][0])
    verdict = payload["verdict"]
    assert verdict["kind"] == "PairProduct"
    lam = verdict["lambda"]
    assert abs(lam[0]) <= 1e-6
    assert abs(lam[1] - 1.0) <= 1e-6
    assert abs(lam[2] + 1.0) <= 1e-6
    assert verdict["cross_residual"] <= 1e-7
    assert all(v <= 1e-8 for v in verdict["relation_residuals"].values())


def _same_shape(expected, actual, path=""):
    assert type(expected) is type(actual), (path, expected, actual)
    if isinstance(expected, dict):
        assert sorted(expected) == sorted(actual), path
        for key in expected:
            _same_shape(expected[key], actual[key], f"{path}.{key}")
    elif isinstance(expected, list):
        assert len(expected) == len(actual), path
        for idx, (e, a) in enumerate(zip(expected, actual)):
            _same_shape(e, a, f"{path}[{idx}]")
    elif isinstance(expected, float):
        assert actual == pytest.approx(expected, abs=1e-9), path
    else:
        assert expected == actual, path


def test_detect_matches_golden_report(workdir):
    golden = json.loads(
        (Path(__file__).parent / "golden" / "detect_pair.json")
        .read_text(encoding="utf-8"))
    res = run_cli("detect", str(workdir / "pair.immersion"),
                  "--grid", "g27", "--seed", "42")
    assert res.returncode == 0
    payload = json.loads(res.stdout)
    payload["inputs"] = ["pair.immersion"]
    _same_shape(golden, payload)


def test_detect_quadric_reports_none_with_note(workdir):
    res = run_cli("detect", str(workdir / "quadric.immersion"),
                  "--grid", "g9")
    assert res.returncode == 0
    payload = json.loads(res.stdout)
    assert payload["verdict"]["kind"] == "None"
    assert "K ≈ 0" in payload["verdict"]["note"]


def test_detect_perturbed_fails_sphere_gate(workdir):
    res = run_cli("detect", str(workdir / "perturbed.immersion"),
                  "--grid", "g16")
    assert res.returncode == 1
    payload = json.loads(res.stdout)
    assert payload["verdict"]["kind"] == "None"
    sphere = next(r for r in payload["reports"] if r["name"] == "sphere")
    assert sphere["pass"] is False


def test_extract_writes_factor_files(workdir, tmp_path):
    out = tmp_path / "factors"
    res = run_cli("extract", str(workdir / "pair.immersion"),
                  "--grid", "g27", "-o", str(out))
    assert res.returncode == 0, res.stderr.decode()
    payload = json.loads(res.stdout)
    factors = payload["factors"]
    assert factors["kind"] == "pair"
    assert factors["subspace_dims"] == [2, 2]
    assert abs(factors["d1"] - 1.0) <= 1e-6
    assert abs(factors["d2"] - 1.0) <= 1e-6
    assert abs(factors["metric_ratio"] - 2.0) <= 1e-6
    assert factors["failed_residuals"] == []

    report = json.loads((out / "report.json").read_text(encoding="utf-8"))
    assert report == payload

    phi2_rows = (out / "phi2.csv").read_text(encoding="utf-8").splitlines()
    assert len(phi2_rows) == 27
    assert len(phi2_rows[0].split(",")) == 4

    for idx in (1, 2):
        fdef = dsl.parse_immersion(
            (out / f"factor{idx}.immersion").read_text(encoding="utf-8"))
        frame = blaschke.full_frame(fdef, (0.1,))
        assert frame.H == pytest.approx(-1.0, abs=1e-8)


def test_extract_refuses_non_product(workdir, tmp_path):
    res = run_cli("extract", str(workdir / "quadric.immersion"),
                  "--grid", "g9", "-o", str(tmp_path / "nothing"))
    assert res.returncode == 1
    payload = json.loads(res.stdout)
    assert payload["verdict"]["kind"] == "None"
    assert "nothing to extract" in payload["error"]


def test_missing_file_is_usage_error(tmp_path):
    res = run_cli("detect", str(tmp_path / "absent.immersion"),
                  "--grid", "g9")
    assert res.returncode == 2
    assert b"error:" in res.stderr


def test_unknown_grid_is_usage_error(workdir):
    res = run_cli("check", str(workdir / "pair.immersion"),
                  "--grid", "g1000")
    assert res.returncode == 2
    assert b"unknown grid" in res.stderr


def test_wrong_factor_count_is_usage_error(workdir, tmp_path):
    res = run_cli("construct", "point",
                  str(workdir / "h2.immersion"), str(workdir / "h2b.immersion"),
                  "-o", str(tmp_path / "x.immersion"))
    assert res.returncode == 2
    assert b"exactly one factor" in res.stderr


def test_bad_subcommand_is_usage_error():
    res = run_cli("frobnicate")
    assert res.returncode == 2


def test_project_file_names_and_options(workdir, tmp_path):
    project = {
        "immersions": {"prod": str(workdir / "pair.immersion")},
        "grids": {"fine": [{"min": -0.2, "max": 0.2, "count": 2}] * 3},
        "options": {"seed": 7},
    }
    path = tmp_path / "project.json"
    path.write_text(json.dumps(project), encoding="utf-8")
    res = run_cli("detect", "prod", "--grid", "fine",
                  "--project", str(path))
    assert res.returncode == 0, res.stderr.decode()
    payload = json.loads(res.stdout)
    assert payload["inputs"] == ["prod"]
    assert payload["seed"] == 7
    assert payload["verdict"]["kind"] == "PairProduct"


def test_inline_grid_spec(workdir):
    res = run_cli("detect", str(workdir / "pair.immersion"),
                  "--grid=-0.2:0.2:2")
    assert res.returncode == 0
    assert json.loads(res.stdout)["verdict"]["kind"] == "PairProduct"


def test_analyze_summary(workdir):
    res = run_cli("analyze", str(workdir / "pair.immersion"),
                  "--at", "0.1,0.2,-0.15")
    assert res.returncode == 0
    payload = json.loads(res.stdout)
    summary = payload["summary"]
    assert summary["mean_curvature"] == pytest.approx(-1.0, abs=1e-9)
    assert summary["difference_tensor_max"] > 0.1
    assert summary["axis_pattern"] in ("point", "pair")
    assert len(summary["affine_normal"]) == 4
    assert math.isfinite(summary["axis_lambda1"])
