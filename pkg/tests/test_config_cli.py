import copy
import json

import numpy as np
import pytest

from gridreg.cli import main
from gridreg.config import (
    ConfigError,
    load_scenario,
    packaged_scenario_path,
    parse_scenario,
)
from gridreg.reporting import (
    MONITOR_COLUMNS,
    read_trajectory_csv,
    trajectory_columns,
    write_trajectory_csv,
)
from gridreg.sim import DropLink, LoadStep, simulate

from conftest import COMM_LINKS, LOAD_BEFORE


@pytest.fixture(scope="module")
def doc1():
    with open(packaged_scenario_path("scenario1"), encoding="utf-8") as fh:
        return json.load(fh)


def _mutate(doc, fn):
    d = copy.deepcopy(doc)
    fn(d)
    return d


# ---- schema -----------------------------------------------------------------


def test_parse_packaged_scenario1(doc1):
    sc = parse_scenario(doc1)
    assert sc.name == "four-area-constant-load"
    assert sc.grid.n == 4 and sc.grid.m == 4
    assert sc.controller.variant == "constant"
    assert sc.controller.alpha == 1.0 and sc.controller.beta1 == 2.0
    assert sc.controller.comm.links == tuple(sorted(COMM_LINKS))
    assert np.array_equal(sc.exo.constant, LOAD_BEFORE)
    assert sc.dt == 1e-3 and sc.t_end == 100.0 and sc.stride == 100
    assert len(sc.events) == 2
    assert isinstance(sc.events[0], LoadStep) and sc.events[0].t == 10.0
    assert isinstance(sc.events[1], DropLink) and sc.events[1].link == (0, 2)


def test_parse_packaged_scenario2():
    sc = load_scenario(packaged_scenario_path("scenario2"))
    assert sc.controller.variant == "wide"
    assert sc.controller.d3 == 8  # one mode per node, two states each
    assert all(blk is not None for blk in sc.exo.residual)
    assert len(sc.events) == 1
    mu = sc.exo.residual[0].mu[0]
    assert mu == pytest.approx(2.0 * np.pi / 30.0, rel=1e-15)


def test_node_names_and_indices_equivalent(doc1):
    by_index = _mutate(doc1, lambda d: None)
    by_index["comm"]["links"] = [[1, 2], [1, 3], [1, 4], [2, 3], [3, 4]]
    by_index["events"][1]["link"] = [1, 3]
    sc_a = parse_scenario(doc1)
    sc_b = parse_scenario(by_index)
    assert sc_a.controller.comm.links == sc_b.controller.comm.links
    assert sc_a.events[1].link == sc_b.events[1].link


def test_unknown_keys_rejected_everywhere(doc1):
    spots = [
        lambda d: d.update(surprise=1),
        lambda d: d["network"].update(surprise=1),
        lambda d: d["network"]["nodes"][0].update(surprise=1),
        lambda d: d["network"]["edges"][0].update(surprise=1),
        lambda d: d["comm"].update(surprise=1),
        lambda d: d["demand"].update(surprise=1),
        lambda d: d["controller"].update(surprise=1),
        lambda d: d["controller"]["gains"].update(surprise=1),
        lambda d: d["events"][0].update(surprise=1),
        lambda d: d["integrator"].update(surprise=1),
    ]
    for fn in spots:
        bad = _mutate(doc1, fn)
        with pytest.raises(ConfigError, match="unknown"):
            parse_scenario(bad)


def test_missing_required_keys_rejected(doc1):
    for fn in [
        lambda d: d.pop("network"),
        lambda d: d.pop("demand"),
        lambda d: d.pop("controller"),
        lambda d: d["demand"].pop("constant"),
        lambda d: d["network"]["nodes"][0].pop("M"),
    ]:
        with pytest.raises(ConfigError):
            parse_scenario(_mutate(doc1, fn))


def test_frequency_key_variants(doc1):
    def with_mode(mode):
        d = copy.deepcopy(doc1)
        d["demand"]["residual"] = {"area2": [mode]}
        d["controller"]["variant"] = "wide"
        return parse_scenario(d)

    rad = with_mode({"freq_rad": 0.5, "amplitude": 0.02})
    hz = with_mode({"freq_hz": 0.5 / (2 * np.pi), "amplitude": 0.02})
    per = with_mode({"period_s": 2 * np.pi / 0.5, "amplitude": 0.02})
    for sc in (hz, per):
        assert sc.exo.residual[1].mu[0] == pytest.approx(rad.exo.residual[1].mu[0], rel=1e-15)

    with pytest.raises(ConfigError, match="exactly one"):
        with_mode({"freq_rad": 0.5, "freq_hz": 0.1, "amplitude": 0.02})
    with pytest.raises(ConfigError, match="exactly one"):
        with_mode({"amplitude": 0.02})
    with pytest.raises(ConfigError):
        with_mode({"freq_rad": -0.5, "amplitude": 0.02})
    with pytest.raises(ConfigError):
        with_mode({"freq_rad": 0.5, "amplitude": -0.02})


def test_u_fixed_rules(doc1):
    bad = _mutate(doc1, lambda d: d["controller"].update(u_fixed=[1, 1, 1, 1]))
    with pytest.raises(ConfigError, match="u_fixed"):
        parse_scenario(bad)

    none_doc = copy.deepcopy(doc1)
    none_doc["controller"] = {"variant": "none"}
    none_doc["events"] = []
    sc = parse_scenario(none_doc)
    # defaults to the optimal dispatch of the constant demand
    assert np.sum(sc.controller.u_fixed) == pytest.approx(np.sum(LOAD_BEFORE), abs=1e-12)

    none_doc["controller"]["u_fixed"] = [1.0, 1.0, 1.5, 1.0]
    sc = parse_scenario(none_doc)
    assert np.array_equal(sc.controller.u_fixed, [1.0, 1.0, 1.5, 1.0])

    none_doc["controller"]["u_fixed"] = [1.0, 1.0]
    with pytest.raises(ConfigError):
        parse_scenario(none_doc)


def test_beta3_scalar_broadcasts(doc1):
    d = copy.deepcopy(doc1)
    d["demand"]["residual"] = {"area1": [{"freq_rad": 0.5, "amplitude": 0.02}]}
    d["controller"] = {"variant": "wide", "gains": {"beta3": 0.7}}
    sc = parse_scenario(d)
    assert np.array_equal(sc.controller.beta3, np.full(4, 0.7))


def test_initial_offsets_require_perturbed(doc1):
    d = _mutate(doc1, lambda d: d.update(initial={"policy": "equilibrium", "omega": [0, 0, 0, 0]}))
    with pytest.raises(ConfigError, match="perturbed"):
        parse_scenario(d)
    ok = _mutate(
        doc1,
        lambda d: d.update(initial={"policy": "perturbed", "omega": [0.1, 0, 0, -0.1]}),
    )
    sc = parse_scenario(ok)
    assert sc.initial_policy == "perturbed"
    assert np.array_equal(sc.initial_offsets["omega"], [0.1, 0.0, 0.0, -0.1])


def test_event_validation(doc1):
    with pytest.raises(ConfigError, match="unknown action"):
        parse_scenario(
            _mutate(doc1, lambda d: d["events"].append({"t": 80.0, "action": "explode"}))
        )
    with pytest.raises(ConfigError):
        parse_scenario(_mutate(doc1, lambda d: d["events"][1].update(link=["area1"])))
    # injection directions are fixed at scenario start
    stepped = _mutate(
        doc1,
        lambda d: d["events"][0].update(
            common={
                "modes": [{"freq_rad": 0.4, "amplitude": 0.01}],
                "injection": [1.0, 1.0, 1.0, 1.0],
            }
        ),
    )
    stepped["controller"]["variant"] = "common"
    with pytest.raises(ConfigError, match="injection cannot change"):
        parse_scenario(stepped)


def test_stride_must_be_positive_integer(doc1):
    for bad in (0, -5, True, 1.5, "many"):
        d = _mutate(doc1, lambda d, b=bad: d["integrator"].update(stride=b))
        with pytest.raises(ConfigError, match="stride"):
            parse_scenario(d)


def test_load_scenario_errors(tmp_path):
    missing = tmp_path / "nope.json"
    with pytest.raises(ConfigError, match="cannot read"):
        load_scenario(missing)
    broken = tmp_path / "broken.json"
    broken.write_text("{not json", encoding="utf-8")
    with pytest.raises(ConfigError, match="not valid JSON"):
        load_scenario(broken)
    with pytest.raises(ConfigError, match="packaged"):
        packaged_scenario_path("scenario99")


# ---- file formats -------------------------------------------------------------


def test_trajectory_columns_layout():
    cols = trajectory_columns(4, 4)
    assert cols[0] == "t"
    assert cols[1:5] == ["omega_1", "omega_2", "omega_3", "omega_4"]
    assert cols[5:9] == ["V_1", "V_2", "V_3", "V_4"]
    assert cols[9:13] == ["eta_1", "eta_2", "eta_3", "eta_4"]
    assert cols[13:17] == ["u_1", "u_2", "u_3", "u_4"]
    assert cols[17:21] == ["Pl_1", "Pl_2", "Pl_3", "Pl_4"]
    assert cols[21:25] == ["theta1_1", "theta1_2", "theta1_3", "theta1_4"]
    assert cols[25:] == ["cost", "W1", "W2", "U", "Theta", "Z"]
    assert MONITOR_COLUMNS[0] == "t" and "Z" in MONITOR_COLUMNS


def test_trajectory_csv_round_trip(tmp_path, scenario1):
    import dataclasses

    sc = dataclasses.replace(scenario1, t_end=1.0, stride=100, events=())
    traj = simulate(sc)
    path = tmp_path / "traj.csv"
    write_trajectory_csv(traj, path)
    header, mat = read_trajectory_csv(path)
    assert header == trajectory_columns(4, 4)
    assert mat.shape == (traj.n_samples, len(header))
    # %.17g round-trips doubles exactly
    assert np.array_equal(mat[:, 0], traj.t)
    assert np.array_equal(mat[:, 1:5], traj.omega)
    assert np.array_equal(mat[:, 5:9], traj.V)
    assert np.array_equal(mat[:, 9:13], traj.eta)
    assert np.array_equal(mat[:, 13:17], traj.u)
    assert np.array_equal(mat[:, 17:21], traj.Pl)
    assert np.array_equal(mat[:, 21:25], traj.theta1)
    assert np.array_equal(mat[:, 25], traj.cost)
    assert np.array_equal(mat[:, -1], traj.Z)


# ---- command line -------------------------------------------------------------


def _short_scenario_file(doc1, tmp_path, **integ):
    d = copy.deepcopy(doc1)
    d["events"] = [d["events"][0] | {"t": 0.5}]
    d["integrator"] = {"dt": 0.001, "t_end": 2.0, "stride": 100} | integ
    path = tmp_path / "short.json"
    path.write_text(json.dumps(d), encoding="utf-8")
    return path


def test_cli_simulate_writes_tables(doc1, tmp_path, capsys):
    scn = _short_scenario_file(doc1, tmp_path)
    out = tmp_path / "run"
    code = main(["simulate", "--scenario", str(scn), "--out", str(out)])
    captured = capsys.readouterr()
    assert code == 0
    assert "status: ok" in captured.out
    assert (out / "trajectory.csv").is_file()
    assert (out / "monitors.csv").is_file()
    assert (out / "summary.json").is_file()
    header, mat = read_trajectory_csv(out / "trajectory.csv")
    assert header == trajectory_columns(4, 4)
    assert mat.shape[0] == 21
    with open(out / "monitors.csv", encoding="utf-8") as fh:
        assert fh.readline().strip() == ",".join(MONITOR_COLUMNS)
    summary = json.loads((out / "summary.json").read_text(encoding="utf-8"))
    assert summary["status"] == "ok"
    assert summary["samples"] == 21
    assert summary["backend"] in ("compiled", "python")


def test_cli_simulate_reruns_byte_identical(doc1, tmp_path):
    scn = _short_scenario_file(doc1, tmp_path)
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    assert main(["simulate", "--scenario", str(scn), "--out", str(out_a)]) == 0
    assert main(["simulate", "--scenario", str(scn), "--out", str(out_b)]) == 0
    for name in ("trajectory.csv", "monitors.csv", "summary.json"):
        assert (out_a / name).read_bytes() == (out_b / name).read_bytes()


def test_cli_simulate_packaged_name_and_t_end_zero(doc1, tmp_path, capsys):
    d = copy.deepcopy(doc1)
    d["integrator"]["t_end"] = 0.0
    scn = tmp_path / "empty.json"
    scn.write_text(json.dumps(d), encoding="utf-8")
    out = tmp_path / "zero"
    code = main(["simulate", "--scenario", str(scn), "--out", str(out)])
    capsys.readouterr()
    assert code == 0
    header, mat = read_trajectory_csv(out / "trajectory.csv")
    assert mat.shape[0] == 1
    assert mat[0, 0] == 0.0


def test_cli_simulate_abort_exit_code(doc1, tmp_path, capsys):
    scn = _short_scenario_file(doc1, tmp_path, dt=2.0, t_end=20.0, stride=1)
    out = tmp_path / "abort"
    code = main(["simulate", "--scenario", str(scn), "--out", str(out)])
    captured = capsys.readouterr()
    assert code == 3
    assert "aborted" in captured.out + captured.err
    summary = json.loads((out / "summary.json").read_text(encoding="utf-8"))
    assert summary["status"] != "ok"
    assert "abort_time" in summary


def test_cli_invalid_config_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"demand": {"constant": [1.0]}}), encoding="utf-8")
    code = main(["simulate", "--scenario", str(bad), "--out", str(tmp_path / "x")])
    captured = capsys.readouterr()
    assert code == 2
    assert "error:" in captured.err


def test_cli_check_passes_on_packaged(capsys):
    code = main(["check", "--scenario", "scenario1"])
    captured = capsys.readouterr()
    assert code == 0
    assert "PASS" in captured.out
    assert "FAIL" not in captured.out


def test_cli_check_fails_on_infeasible(doc1, tmp_path, capsys):
    d = copy.deepcopy(doc1)
    d["demand"]["constant"] = [40.0, 0.0, 0.0, 0.0]
    d["events"] = []
    scn = tmp_path / "heavy.json"
    scn.write_text(json.dumps(d), encoding="utf-8")
    code = main(["check", "--scenario", str(scn)])
    captured = capsys.readouterr()
    assert code == 2
    assert "FAIL" in captured.out + captured.err


def test_cli_dispatch_frozen_values(capsys):
    code = main(["dispatch", "--scenario", "scenario1"])
    captured = capsys.readouterr()
    assert code == 0
    doc = json.loads(captured.out)
    stages = doc["stages"]
    assert len(stages) == 2
    post = stages[1]
    assert np.allclose(
        post["u"],
        [1.1800000000000002, 1.5733333333333335, 0.78666666666666674, 2.3600000000000003],
        rtol=0,
        atol=1e-14,
    )
    assert post["cost"] == pytest.approx(3.4810000000000008, abs=1e-13)
    assert post["self_supply_cost"] == pytest.approx(4.9378125, abs=1e-13)
    assert stages[0]["cost"] == pytest.approx(3.0250000000000004, abs=1e-13)


def test_cli_equilibrium_output(capsys):
    code = main(["equilibrium", "--scenario", "scenario1"])
    captured = capsys.readouterr()
    assert code == 0
    doc = json.loads(captured.out)
    stages = doc["stages"]
    assert len(stages) == 2
    for stage in stages:
        assert abs(stage["omega_sync"]) < 1e-12
        assert len(stage["eta"]) == 4 and len(stage["V"]) == 4
        assert all(v > 0.5 for v in stage["V"])
