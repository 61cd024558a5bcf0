import csv
import json
import math
import os
import warnings

import pytest

from pipenav import cli
from pipenav.config import ConfigWarning, ParseError, UnitError, UnknownKey, parse_config, quantity, with_seed
from pipenav.pipe_map import SegmentKind, Turn

HERE = os.path.dirname(__file__)
SCENARIOS = os.path.join(HERE, "..", "scenarios")


def test_empty_config_has_defaults():
    cfg = parse_config("")
    assert cfg.seed == 0
    assert len(cfg.pipe_map.segments) == 1 and cfg.pipe_map.ct == ()
    assert cfg.pipe_map.segments[0].diameter == pytest.approx(0.3556)
    assert cfg.mission.junction_trigger_distance == pytest.approx(0.3556)


@pytest.mark.parametrize(
    "text,dim,si",
    [("14 in", "length", 0.3556), ("10 cm/s", "speed", 0.1), ("46 rpm", "angular_speed", 46 * math.pi / 30),
     ("90 deg", "angle", math.pi / 2), (2.5, "time", 2.5), ("4.23 Ah", "charge", 4.23), ("1e2 kPa", "pressure", 100.0)],
)
def test_quantities(text, dim, si):
    assert quantity(text, dim) == pytest.approx(si, rel=1e-12)


def test_wrong_unit():
    with pytest.raises(UnitError):
        quantity("3 kg", "length")
    with pytest.raises(UnitError):
        quantity("fast", "speed")


def test_unit_error_reports_line():
    with pytest.raises(UnitError) as info:
        parse_config("mission:\n  v_d: 3 kg\n")
    assert info.value.line == 2 and info.value.where == "mission.v_d"


def test_ct_count_mismatch_has_location():
    text = "map:\n  segments:\n    - {kind: straight, length: 2 m}\n    - {kind: bend}\n  ct: []\n"
    with pytest.raises(ParseError) as info:
        parse_config(text)
    assert "CountMismatch" in str(info.value)
    assert info.value.where == "map" and info.value.line == 2


def test_unknown_key_warns_or_raises():
    with pytest.warns(ConfigWarning):
        parse_config("mission:\n  vd: 1\n")
    with pytest.raises(UnknownKey) as info:
        parse_config("mission:\n  vd: 1\n", strict=True)
    assert info.value.line == 2


def test_yaml_syntax_error_has_line():
    with pytest.raises(ParseError) as info:
        parse_config("map:\n  segments: [\n")
    assert info.value.line is not None


def test_scenario_files_parse_strictly():
    for name in sorted(os.listdir(SCENARIOS)):
        with open(os.path.join(SCENARIOS, name)) as fh:
            with warnings.catch_warnings():
                warnings.simplefilter("error")
                parse_config(fh.read(), strict=True)


def test_three_feature_scenario_contents():
    with open(os.path.join(SCENARIOS, "three_features.yaml")) as fh:
        cfg = parse_config(fh.read())
    assert [e.desired_turn for e in cfg.pipe_map.ct] == [Turn.STRAIGHT, Turn.PHI_NEG, Turn.PSI_POS]
    assert cfg.pipe_map.ct[1].config_kind is SegmentKind.BEND
    assert cfg.pipe_map.ct[1].omega_max == pytest.approx(46 * math.pi / 30)
    assert cfg.mission.v_d == pytest.approx(0.3)


def test_with_seed():
    cfg = with_seed(parse_config("seed: 3"), 11)
    assert cfg.seed == 11 and cfg.bench.seed == 11


# -- CLI -----------------------------------------------------------------------


def _write(tmp_path, text):
    p = tmp_path / "s.yaml"
    p.write_text(text)
    return str(p)


def test_cli_config_error_exit_code(tmp_path, capsys):
    code = cli.main(["mission", "--config", _write(tmp_path, "mission:\n  v_d: -1\n"), "--out", str(tmp_path)])
    assert code == cli.EXIT_CONFIG
    err = capsys.readouterr().err
    assert err.startswith("error: code=2 kind=ParseError where=mission")


def test_cli_missing_file(tmp_path, capsys):
    assert cli.main(["energy", "--config", str(tmp_path / "nope.yaml")]) == cli.EXIT_CONFIG
    assert "kind=OSError" in capsys.readouterr().err


def test_cli_strict_unknown_key(tmp_path, capsys):
    path = _write(tmp_path, "bogus: 1\n")
    assert cli.main(["energy", "--strict", "--config", path, "--out", str(tmp_path)]) == cli.EXIT_CONFIG
    assert "kind=UnknownKey where=bogus line=1" in capsys.readouterr().err


def test_cli_timeout_exit_code(tmp_path, capsys):
    path = _write(tmp_path, "mission:\n  max_mission_time: 0.2 s\n")
    assert cli.main(["mission", "--config", path, "--out", str(tmp_path), "--no-figures"]) == cli.EXIT_TIMEOUT
    assert "kind=Timeout" in capsys.readouterr().err
    assert json.loads((tmp_path / "report.json").read_text())["status"] == "timeout"


def test_cli_lqr_output(tmp_path, capsys):
    assert cli.main(["lqr", "--out", str(tmp_path), "--no-figures"]) == cli.EXIT_OK
    text = capsys.readouterr().out
    assert "B =" in text and "K =" in text and "deviation" in text
    with open(tmp_path / "lqr_gain.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["row", "phi", "phi_dot", "psi", "psi_dot"] and len(rows) == 4


def test_cli_energy_report(tmp_path, capsys):
    path = os.path.join(SCENARIOS, "energy_worst_case.yaml")
    assert cli.main(["energy", "--config", path, "--out", str(tmp_path)]) == cli.EXIT_OK
    text = capsys.readouterr().out
    hours = float(text.split("discharge time")[1].split()[0])
    meters = float(text.split("inspection range")[1].split()[0])
    assert hours == pytest.approx(3.0, rel=0.02)
    assert meters == pytest.approx(5400.0, rel=0.02)
    assert (tmp_path / "energy_sweep.csv").exists()
    assert (tmp_path / "energy.png").stat().st_size > 0


def test_cli_drag_table(tmp_path):
    assert cli.main(["drag-table", "--out", str(tmp_path)]) == cli.EXIT_OK
    with open(tmp_path / "drag_table.csv") as fh:
        rows = list(csv.reader(fh))
    by_v = {round(float(r[0]), 6): r for r in rows[1:]}
    col = rows[0].index("drag_N_at_100kPa")
    assert float(by_v[1.2][col]) == -25.9
    assert float(by_v[0.5][col]) == -6.2
    assert (tmp_path / "drag.png").exists()


@pytest.fixture(scope="module")
def junction_runs(tmp_path_factory):
    path = os.path.join(SCENARIOS, "junction_stop.yaml")
    outs = []
    for k in range(2):
        out = tmp_path_factory.mktemp(f"run{k}")
        code = cli.main(["mission", "--config", path, "--out", str(out), "--no-figures" if k else "--seed=42"])
        outs.append((code, out))
    return outs


def test_cli_mission_reproducible(junction_runs):
    (c1, a), (c2, b) = junction_runs
    assert c1 == c2 == cli.EXIT_OK
    assert (a / "trace.csv").read_bytes() == (b / "trace.csv").read_bytes()
    assert (a / "report.json").read_bytes() == (b / "report.json").read_bytes()


def test_cli_mission_outputs(junction_runs):
    _, out = junction_runs[0]
    with open(out / "trace.csv") as fh:
        rows = list(csv.reader(fh))
    assert tuple(rows[0]) == cli.TRACE_COLUMNS
    t = [float(r[0]) for r in rows[1:]]
    assert all(b > a for a, b in zip(t, t[1:]))
    report = json.loads((out / "report.json").read_text())
    assert report["status"] == "done" and report["seed"] == 42
    assert (out / "mission.png").stat().st_size > 0
    assert (out / "wheels.png").stat().st_size > 0
