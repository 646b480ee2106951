import csv
import io
import json
import statistics

import pytest

from overlaysim import cli
from overlaysim.agents import Outcome
from overlaysim.harness import (
    CSV_HEADER,
    Report,
    ScenarioSyntaxError,
    SchemaError,
    UnknownAxis,
    builtin_scenario_text,
    builtin_scenarios,
    emit,
    load_builtin,
    parse_scenario,
    run_scenario,
    sweep,
)

ATTACK = '{"seed": 5, "n_payments": 8, "attack": "alert_window", "amounts": {"min": 10, "max": 90}}'
NONE = '{"seed": 5, "n_payments": 8}'


# -- parsing ----------------------------------------------------------------


def test_minimal_document_defaults():
    s = parse_scenario("{}")
    assert s.n_payments == 30
    assert s.attack == "none"
    assert s.link == "wifi"


def test_unknown_key_named():
    with pytest.raises(SchemaError) as info:
        parse_scenario('{"attak": "toast"}')
    assert info.value.field == "attak"
    assert "attak" in str(info.value)


def test_unknown_nested_key():
    with pytest.raises(SchemaError) as info:
        parse_scenario('{"defenses": {"otp": true, "captcha": true}}')
    assert "captcha" in info.value.field


@pytest.mark.parametrize("doc", [
    '{"n_payments": 0}',
    '{"n_payments": 2.5}',
    '{"attack": "rootkit"}',
    '{"link": "dialup"}',
    '{"amounts": {"min": 5, "max": 2}}',
    '{"perception": {"p_miss_frame": 1.5}}',
    '{"defenses": {"otp": "yes"}}',
    '{"layout": [{"app": "wallet", "tag": "qr-button", "rect": [0, 0, 10, 10]}]}',
    '{"layout": [{"app": "wallet", "tag": "qr-button", "rect": [1000, 0, 200, 10]},'
    ' {"app": "wallet", "tag": "qr-display", "rect": [0, 0, 10, 10]}]}',
    '{"calibration": {"server_link": "carrier-pigeon"}}',
    '[]',
])
def test_schema_errors(doc):
    with pytest.raises(SchemaError):
        parse_scenario(doc)


def test_syntax_error_position():
    with pytest.raises(ScenarioSyntaxError) as info:
        parse_scenario('{\n  "seed": 1,\n  "link" "wifi"\n}')
    assert (info.value.line, info.value.col) == (3, 10)


def test_roundtrip_through_dict():
    for name in builtin_scenarios():
        s = load_builtin(name)
        assert parse_scenario(json.dumps(s.to_dict())) == s


def test_shipped_scenarios_present():
    assert {"baseline", "alert-window", "toast", "dos", "countermeasures", "paper-calib"} <= set(
        builtin_scenarios()
    )


# -- running and emitting ---------------------------------------------------


def test_baseline_report():
    rep = run_scenario(parse_scenario(NONE))
    assert rep.outcomes() == [Outcome.LEGIT] * 8
    assert rep.balances["victim_delta"] == -rep.balances["payer_delta"] > 0
    assert rep.balances["attacker_delta"] == 0


def test_attack_report():
    rep = run_scenario(parse_scenario(ATTACK))
    assert rep.outcomes() == [Outcome.STOLEN_UNDETECTED] * 8
    assert rep.balances["victim_delta"] == 0
    assert rep.balances["attacker_delta"] == rep.total_stolen
    assert all(r.setup_time is not None for r in rep.records)


def test_csv_header_exact():
    out = emit(run_scenario(parse_scenario(NONE)), "csv").decode()
    assert out.splitlines()[0] == "index,outcome,setup_time_us,notification_delay_us,stolen_amount"
    assert tuple(out.splitlines()[0].split(",")) == CSV_HEADER
    assert len(out.splitlines()) == 9


def test_json_roundtrip():
    rep = run_scenario(parse_scenario(ATTACK))
    back = Report.from_dict(json.loads(emit(rep, "json")))
    assert back == rep


def test_json_tamper_detected():
    doc = json.loads(emit(run_scenario(parse_scenario(ATTACK)), "json"))
    doc["total_stolen"] += 1
    with pytest.raises(ValueError):
        Report.from_dict(doc)


def test_summary_absence_rule():
    plain = emit(run_scenario(parse_scenario(NONE)), "summary").decode()
    assert "setup time" not in plain
    assert "notification delay" in plain
    attacked = emit(run_scenario(parse_scenario(ATTACK)), "summary").decode()
    assert "setup time" in attacked


def test_unknown_format():
    with pytest.raises(ValueError):
        emit(run_scenario(parse_scenario(NONE)), "xml")


@pytest.mark.parametrize("fmt", ["csv", "json", "summary"])
def test_determinism(fmt):
    a = emit(run_scenario(parse_scenario(ATTACK)), fmt)
    b = emit(run_scenario(parse_scenario(ATTACK)), fmt)
    assert a == b


def test_aggregates_match_csv():
    rep = run_scenario(parse_scenario(ATTACK))
    rows = list(csv.DictReader(io.StringIO(emit(rep, "csv").decode())))
    agg = json.loads(emit(rep, "json"))["aggregates"]
    for col in ("setup_time_us", "notification_delay_us"):
        vals = [int(r[col]) for r in rows if r[col]]
        assert abs(statistics.fmean(vals) - agg[col]["mean"]) <= 1
        assert abs(statistics.stdev(vals) - agg[col]["sd"]) <= 1


# -- sweeps -----------------------------------------------------------------


def test_sweep_link_monotone():
    reps = sweep(parse_scenario(NONE), "link", ["wifi", "cellular4g", "cellular3g"])
    means = [r.aggregates["notification_delay_us"]["mean"] for r in reps]
    assert means == sorted(means) and len(set(means)) == 3
    assert [r.scenario["link"] for r in reps] == ["wifi", "cellular4g", "cellular3g"]


def test_sweep_sensitive_views():
    reps = sweep(parse_scenario(ATTACK), "defenses.sensitive_views", [False, True])
    assert reps[0].total_stolen > 0
    assert reps[1].total_stolen == 0


def test_sweep_seeds_differ_per_index():
    reps = sweep(parse_scenario(NONE), "link", ["wifi", "wifi"])
    assert reps[0].scenario["seed"] != reps[1].scenario["seed"]


def test_sweep_parallel_matches_serial():
    t = parse_scenario(ATTACK)
    vals = ["wifi", "cellular3g"]
    assert [emit(r, "json") for r in sweep(t, "link", vals)] == [
        emit(r, "json") for r in sweep(t, "link", vals, workers=2)
    ]


def test_sweep_empty_and_unknown_axis():
    t = parse_scenario(NONE)
    assert sweep(t, "link", []) == []
    with pytest.raises(UnknownAxis):
        sweep(t, "seed", [1, 2])


# -- command line -----------------------------------------------------------


@pytest.fixture
def scenario_file(tmp_path):
    p = tmp_path / "s.json"
    p.write_text(ATTACK)
    return p


def test_cli_validate(scenario_file, tmp_path, capsys):
    assert cli.main(["validate", "--scenario", str(scenario_file)]) == 0
    bad = tmp_path / "bad.json"
    bad.write_text('{"attak": 1}')
    assert cli.main(["validate", "--scenario", str(bad)]) == 2
    assert "attak" in capsys.readouterr().err
    assert cli.main(["validate", "--scenario", str(tmp_path / "missing.json")]) == 2


def test_cli_run_writes_csv(scenario_file, tmp_path):
    out = tmp_path / "out"
    assert cli.main(["run", "--scenario", str(scenario_file), "--format", "csv", "--out", str(out)]) == 0
    text = (out / "report.csv").read_text()
    assert text.encode() == emit(run_scenario(parse_scenario(ATTACK)), "csv")


def test_cli_run_seed_override(scenario_file, capsys):
    assert cli.main(["run", "--scenario", str(scenario_file), "--seed", "99", "--format", "json"]) == 0
    assert json.loads(capsys.readouterr().out)["scenario"]["seed"] == 99


def test_cli_sweep(scenario_file, tmp_path):
    out = tmp_path / "sw"
    rc = cli.main(["sweep", "--scenario", str(scenario_file), "--axis", "link",
                   "--values", "wifi,cellular3g", "--out", str(out), "--format", "json"])
    assert rc == 0
    assert sorted(p.name for p in out.iterdir()) == ["report-000.json", "report-001.json"]
    assert cli.main(["sweep", "--scenario", str(scenario_file), "--axis", "bogus",
                     "--values", "1"]) == 2


def test_builtin_text_parses():
    for name in builtin_scenarios():
        assert parse_scenario(builtin_scenario_text(name)).name == name
