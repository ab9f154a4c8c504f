import csv
import io
import json
import math

import pytest

from tddnet import cli
from tddnet.figures import FIG3, interior_maximum, write_figures
from tddnet.analytics import coverage_overall
from tddnet.params import ConfigError, load_config
from tddnet.sweep import SweepSpec, rows_to_csv, run_sweep, spec_from_mapping, sweep_columns
from tddnet.simulator import SimSettings


@pytest.fixture
def fig3_file(tmp_path):
    path = tmp_path / "fig3.json"
    path.write_text(json.dumps({**FIG3, "rho_s": -60.0}))
    return str(path)


def run(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_coverage_report(capsys, fig3_file):
    code, out, _ = run(capsys, "coverage", "--config", fig3_file)
    assert code == 0
    doc = json.loads(out)
    assert doc["schema_version"] == cli.SCHEMA_VERSION
    cfg = load_config(fig3_file)
    assert doc["analytic"]["p_s_d"] == pytest.approx(coverage_overall(cfg).p_s_d, rel=1e-14)
    assert doc["derived"]["a_d_s"] == pytest.approx(1 / 3)
    assert set(doc) >= {"config", "warnings", "analytic", "throughput", "derived"}


def test_coverage_simulation_replays_identically(capsys, fig3_file, tmp_path):
    args = ("coverage", "--config", fig3_file, "--simulate", "--iterations", "4", "--seed", "9")
    outs = []
    for name in ("a.json", "b.json"):
        code, _, err = run(capsys, *args, "--out", str(tmp_path / name))
        assert code == cli.EXIT_SAMPLES and "insufficient" in err
        outs.append((tmp_path / name).read_bytes())
    assert outs[0] == outs[1]
    doc = json.loads(outs[0])
    assert "relative_error" in doc and doc["simulation"]["iterations"] == 4


def test_missing_field_exits_2(capsys, tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"lambda_u": "100x", "zeta": 0.1, "eta": 0.5}))
    code, out, err = run(capsys, "coverage", "--config", str(path))
    assert code == cli.EXIT_CONFIG and "lambda_s" in err and out == ""


def test_invalid_value_exits_2(capsys, tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({**FIG3, "alpha": 1.5}))
    code, _, err = run(capsys, "coverage", "--config", str(path))
    assert code == cli.EXIT_CONFIG and "alpha" in err


def test_quadrature_failure_exits_3(capsys, fig3_file, monkeypatch):
    from tddnet.special import QuadratureError

    def boom(*a, **k):
        raise QuadratureError("forced")

    monkeypatch.setattr(cli.analytics, "coverage_overall", boom)
    code, _, err = run(capsys, "coverage", "--config", fig3_file)
    assert code == cli.EXIT_QUADRATURE and "forced" in err


def test_json_output_is_strict():
    text = cli.dump_json({"a": math.inf, "b": math.nan, "c": [1.0]})
    assert json.loads(text) == {"a": "inf", "b": None, "c": [1.0]}


# sweeps

def test_sweep_columns_are_stable():
    spec = SweepSpec(param="rho_s", values=(-80.0, -60.0), engine="both", outputs=("p_s_d", "total_d"))
    assert sweep_columns(spec) == ["swept_param", "value", "p_s_d", "total_d", "sim_p_s_d", "sim_total_d",
                                   "ci_half_p_s_d", "status"]
    spec = SweepSpec(param="rho_s", values=(-80.0, -60.0), outputs=("p_s_d",))
    assert sweep_columns(spec) == ["swept_param", "value", "p_s_d", "status"]


@pytest.mark.parametrize("data", [{"param": "nope", "values": [1, 2]}, {"param": "eta", "values": [1]},
                                  {"param": "eta", "values": [0, 1], "outputs": ["x"]},
                                  {"param": "eta"}, {"param": "eta", "range": {"start": 0}},
                                  {"param": "eta", "values": [0, 1], "engine": "fast"}])
def test_bad_sweep_specs(data):
    with pytest.raises(ConfigError):
        spec_from_mapping(data)


def test_sweep_range_forms():
    spec = spec_from_mapping({"param": "lambda_s", "range": {"start": 1, "stop": 100, "count": 3,
                                                              "scale": "log", "relative": True}})
    assert spec.values == ("1.0x", "10.0x", "100.0x")


def test_eta_sweep_endpoints(capsys, fig3_file, tmp_path):
    sweep = tmp_path / "sweep.json"
    sweep.write_text(json.dumps({"param": "eta", "values": [0.0, 0.5, 1.0],
                                 "outputs": ["total_d", "t_m_d", "t_s_d", "t_d2d"]}))
    code, out, _ = run(capsys, "sweep", "--config", fig3_file, "--sweep", str(sweep))
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    first, mid, last = ({k: float(v) for k, v in r.items() if k not in ("swept_param", "status")} for r in rows)
    assert first["total_d"] == pytest.approx(first["t_s_d"] + 0.5 * first["t_d2d"], rel=1e-14)
    assert last["total_d"] == pytest.approx(last["t_m_d"], rel=1e-14)
    assert mid["total_d"] == pytest.approx(0.5 * (first["total_d"] + last["total_d"]), rel=1e-12)


def test_sweep_failures_are_recorded_per_point(fig3_file):
    spec = SweepSpec(param="q_ds", values=(0.5, 1.5), outputs=("p_s_d",))
    rows = run_sweep(spec, load_config(fig3_file), SimSettings(iterations=1))
    assert rows[0]["status"] == "ok" and rows[1]["status"].startswith("error:config:")
    text = rows_to_csv(rows, sweep_columns(spec))
    assert text.splitlines()[0] == "swept_param,value,p_s_d,status"
    last = list(csv.reader(io.StringIO(text)))[2]
    assert last[:3] == ["q_ds", "1.5", ""] and last[3].startswith("error:config:q_ds")


def test_sweep_requires_file(capsys, fig3_file):
    code, _, err = run(capsys, "sweep", "--config", fig3_file)
    assert code == cli.EXIT_CONFIG


# optimize

def test_optimize_density_reports_oracle(capsys, tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"lambda_s": "5x", "lambda_u": "1000x", "zeta": 0.01, "eta": 0.5}))
    code, out, _ = run(capsys, "optimize", "density", "--config", str(path), "--mode", "dl")
    assert code == 0
    (res,) = json.loads(out)["results"]
    assert res["target"] == "density" and "printed_vs_derived_rel" in res["checks"]


def test_optimize_uldl_and_bandwidth(capsys, fig3_file):
    code, out, _ = run(capsys, "optimize", "uldl", "--config", fig3_file, "--mode", "ul")
    assert code == 0
    assert [r["arguments"] for r in json.loads(out)["results"]] == [{"q_dm": 0.0}, {"q_ds": 0.0}]
    code, out, _ = run(capsys, "optimize", "bandwidth", "--config", fig3_file, "--mode", "dl")
    (res,) = json.loads(out)["results"]
    assert res["arguments"]["eta"] in (0.0, 1.0)


def test_optimize_sensing_without_bounds_exits_2(capsys, fig3_file):
    code, _, err = run(capsys, "optimize", "sensing", "--config", fig3_file)
    assert code == cli.EXIT_CONFIG and "rho_min" in err


# figures

def test_figures_manifest_and_interior_maximum(tmp_path):
    manifest = write_figures(str(tmp_path), iterations=2, only=["fig5b"], log=lambda m: None)
    entry = manifest["figures"]["fig5b"][0]
    assert entry["status"] == "ok" and entry["caption_parameters"]["zeta"] == 0.01
    rows = list(csv.DictReader(open(tmp_path / "fig5b.csv")))
    assert len(rows) == 25
    assert interior_maximum([float(r["overall_d"]) for r in rows])
    assert json.loads((tmp_path / "manifest.json").read_text())["iterations"] == 2


def test_figures_rejects_unknown_name(tmp_path):
    with pytest.raises(ValueError):
        write_figures(str(tmp_path), only=["fig99"])
