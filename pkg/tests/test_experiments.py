import json
import subprocess
import sys

import numpy as np
import pytest

from qdcavity.cli import main
from qdcavity.experiments import (
    ConfigError,
    ScanResult,
    ScenarioConfig,
    execute,
    first_local_max,
    fock_compare,
    fss_sweep,
    parallel_map,
    pulse_dynamics,
    rabi_scan,
    run,
    with_fss,
)
from qdcavity.model import PulseShape, SystemParams

P = SystemParams()


def test_parallel_map_preserves_order():
    assert parallel_map(abs, [-3, 1, -2], workers=2) == [3, 1, 2]


def test_scan_result_shape_checked():
    with pytest.raises(ValueError):
        ScanResult({"x": [1, 2]}, {"y": [1, 2, 3]})
    r = ScanResult({"a": [1, 2], "b": [10, 20, 30]}, {"v": np.arange(6).reshape(2, 3)})
    lines = r.to_csv_text().splitlines()
    assert lines[0] == "a,b,v" and lines[1] == "1.0,10.0,0.0" and len(lines) == 7


def test_rabi_scan_csv_and_sidecar(tmp_path):
    cfg = ScenarioConfig("rabi_scan", scan={"n_mean": [0.0, 1.0, 3.8]}, output={"path": str(tmp_path / "r.csv")})
    assert run(cfg) == 0
    text = (tmp_path / "r.csv").read_text().splitlines()
    assert text[0].startswith("n_mean,N_H,flip_prob")
    assert text[1].split(",")[1] == "0.0"
    meta = json.loads((tmp_path / "r.csv.meta.json").read_text())
    assert "timestamp" in meta and meta["config"]["scenario"] == "rabi_scan"
    assert meta["truncation"][0]["max_rel_change"] < 5e-3
    assert not list(tmp_path.glob(".*tmp"))


def test_run_reproducible_from_metadata(tmp_path):
    cfg = ScenarioConfig("rabi_scan", scan={"n_mean": [2.0]}, workers=1)
    first = execute(cfg)
    again = ScenarioConfig(**{k: v for k, v in first.metadata["config"].items()})
    assert execute(again).to_csv_text() == first.to_csv_text()


def test_determinism_across_workers(tmp_path):
    base = {"scenario": "rabi_scan", "scan": {"n_mean": [1.0, 3.0]}}
    outs = []
    for w in (1, 2):
        cfg = ScenarioConfig.from_dict({**base, "workers": w})
        res = execute(cfg)
        d = res.to_dict(timestamp="x")
        d["metadata"]["config"].pop("workers", None)
        outs.append((res.to_csv_text(), json.dumps(d, sort_keys=True)))
    assert outs[0] == outs[1]


def test_first_local_max():
    assert first_local_max([1, 2, 3, 4], [0, 2, 1, 3]) == (2.0, 2.0)
    assert first_local_max([1, 2, 3], [0, 1, 2]) is None


def test_rabi_first_maximum_near_paper_value():
    grid = np.geomspace(1.0, 8.0, 12)
    res = rabi_scan(P, PulseShape(56.0), grid, check_truncation=False)
    n_max, _ = first_local_max(grid, res.values["N_H"])
    assert 3.8 / 1.3 < n_max < 3.8 * 1.3


def test_pulse_dynamics_delay_and_zero():
    res = pulse_dynamics(P, PulseShape(56.0), 3.8)
    assert res.metadata["summary"]["delay_ps"] > 0
    zero = pulse_dynamics(P, PulseShape(56.0), 0.0)
    assert np.all(zero.values["n_cav_H"] == 0)


def test_smaller_fss_delays_h_emission():
    d15 = pulse_dynamics(P, PulseShape(56.0), 3.8).metadata["summary"]["delay_ps"]
    d7 = pulse_dynamics(with_fss(P, 7.5), PulseShape(56.0), 3.8).metadata["summary"]["delay_ps"]
    assert d7 > d15


def test_fock_compare_summary():
    res = fock_compare(P, PulseShape(56.0), n_times=200)
    s = res.metadata["summary"]
    assert s["ratio"] > 1
    early = res.axes["t_ps"] < -100
    assert np.all(res.values["P_exc_fock"][early] < 1e-3) and np.all(res.values["P_exc_coherent"][early] < 1e-3)


def test_fss_sweep_small():
    res = fss_sweep(P, [15.0], [40.0, 56.0])
    assert res.values["n_pi"].shape == (1, 2)
    assert np.all(np.isfinite(res.values["n_pi"]))
    with pytest.raises(ConfigError):
        fss_sweep(P, [-1.0], [56.0])


def test_config_errors():
    with pytest.raises(ConfigError, match="scenario"):
        ScenarioConfig("nope")
    with pytest.raises(ConfigError, match="params"):
        ScenarioConfig("rabi_scan", params={"g": -1})
    with pytest.raises(ConfigError, match="scan.n_mean"):
        ScenarioConfig("rabi_scan", scan={"n_mean": [1.0, float("nan")]})
    with pytest.raises(ConfigError, match="unknown top-level"):
        ScenarioConfig.from_dict({"scenario": "fit", "extra": 1})
    with pytest.raises(ConfigError, match=r"<config>:2:"):
        ScenarioConfig.from_json('{"scenario":\n  nope}')


def test_cli_unknown_scenario_exits_2():
    with pytest.raises(SystemExit) as exc:
        main(["bogus"])
    assert exc.value.code == 2


def test_cli_bad_config_exits_2(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text('{"scenario": "fit"}')
    with pytest.raises(SystemExit) as exc:
        main(["rabi_scan", "--config", str(cfg)])
    assert exc.value.code == 2


def test_cli_fit_json(tmp_path):
    out = tmp_path / "fit.json"
    assert main(["fit", "--out", str(out), "--format", "json", "--seed", "4"]) == 0
    doc = json.loads(out.read_text())
    assert set(doc) == {"axes", "values", "metadata"}
    assert doc["metadata"]["fit"]["best"]["g"] == pytest.approx(21.0, rel=0.02)


def test_cli_module_entry(tmp_path):
    out = tmp_path / "refl.csv"
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"scan": {"detuning": {"start": -50, "stop": 50, "count": 5}, "method": "linear"}}))
    proc = subprocess.run(
        [sys.executable, "-m", "qdcavity", "reflectivity", "--config", str(cfg), "--out", str(out)],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert out.read_text().splitlines()[0] == "detuning_ueV,reflectivity"


def test_cli_byte_identical_across_workers(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"scan": {"detuning": {"start": -20, "stop": 20, "count": 4}}}))
    for w in (1, 2):
        assert main(["reflectivity", "--config", str(cfg), "--out", str(tmp_path / f"w{w}.csv"), "--workers", str(w)]) == 0
    assert (tmp_path / "w1.csv").read_bytes() == (tmp_path / "w2.csv").read_bytes()
    m1 = json.loads((tmp_path / "w1.csv.meta.json").read_text())
    m2 = json.loads((tmp_path / "w2.csv.meta.json").read_text())
    for m in (m1, m2):
        m.pop("timestamp")
    assert m1 == m2
