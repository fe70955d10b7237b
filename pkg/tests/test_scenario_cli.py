import json
import math
import subprocess
import sys
from dataclasses import fields

import pytest

from qnet_energy.cli import EXIT_INFEASIBLE, EXIT_IO, EXIT_OK, EXIT_VALIDATION, main
from qnet_energy.energy import EnergyReport
from qnet_energy.errors import ValidationError
from qnet_energy.scenario import COLUMNS, fmt_number, parse_scenario, run, to_csv, to_json

SWEEP = """\
target_bits = 1e9

[protocol]
family = "bb84"
preset = "table4_repro"

[sweep]
parameter = "distance_km"
from = 1
to = 200
steps = 100
"""

FAR = """\
target_bits = 1e9

[protocol]
family = "mdi"
distance_km = 40

[protocol.overrides]
qber = 0.2
"""


def write(tmp_path, text, name="scenario.toml"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


# --- parsing -----------------------------------------------------------------------


def test_parse_sweep():
    sc = parse_scenario(SWEEP)
    assert sc.protocol.family == "bb84"
    assert sc.sweep.steps == 100 and sc.sweep.scale == "linear"
    assert sc.target_bits == 1e9 and sc.value_mode == "datasheet"
    assert sc.output_format == "csv" and sc.svg is None


@pytest.mark.parametrize(
    "bad,line",
    [
        (SWEEP.replace("steps = 100", "steps = 1"), 11),
        (SWEEP.replace("steps = 100", "steps = 2.5"), 11),
        (SWEEP.replace('parameter = "distance_km"', 'parameter = "mu"'), 8),
        (SWEEP.replace("target_bits = 1e9", "target_bits = -5"), 1),
        ('value_mode = "guess"\n' + SWEEP, 1),
        (SWEEP.replace('family = "bb84"', 'family = "bb85"'), 3),
        (SWEEP.replace("from = 1", "from = -1"), 9),
        (SWEEP.replace("from = 1", "from = 0") + 'scale = "log"\n', 9),
    ],
)
def test_validation_errors_carry_lines(bad, line):
    with pytest.raises(ValidationError, match=f"line {line}:"):
        parse_scenario(bad)


def test_unknown_top_level_key():
    with pytest.raises(ValidationError, match="line 1:"):
        parse_scenario("colour = 1\n" + SWEEP)


def test_not_toml():
    with pytest.raises(ValidationError):
        parse_scenario("[protocol\nfamily=")


def test_missing_protocol():
    with pytest.raises(ValidationError):
        parse_scenario("target_bits = 1\n")


# --- evaluation ----------------------------------------------------------------------


def test_distance_sweep_rows(cat):
    rows = run(parse_scenario(SWEEP), cat)
    assert len(rows) == 100
    assert rows[0].value == 1.0 and rows[-1].value == 200.0
    totals = [r.total_J for r in rows if r.feasible]
    assert len(totals) == 100
    assert all(a <= b for a, b in zip(totals, totals[1:]))


def test_infeasible_row(cat):
    (row,) = run(parse_scenario(FAR), cat)
    assert row.status == "infeasible"
    assert row.secret_bps == 0.0
    assert math.isnan(row.total_J) and math.isnan(row.runtime_s)
    assert row.power_W > 0


def test_sweep_continues_past_infeasible(cat):
    text = SWEEP.replace('"distance_km"', '"qber"').replace("from = 1", "from = 0").replace("to = 200", "to = 0.2").replace("steps = 100", "steps = 9")
    rows = run(parse_scenario(text), cat)
    status = [r.status for r in rows]
    assert status[0] == "ok" and status[-1] == "infeasible" and len(rows) == 9


@pytest.mark.parametrize("param,values", [("qber", (0.0, 0.05)), ("n_parties", (3, 5)), ("tau_dsp", (0.0, 0.018)), ("v_a", (1.0, 5.0))])
def test_other_sweep_parameters(cat, param, values):
    if param == "n_parties":
        proto = '[protocol]\nfamily = "bell_cka"\nn_parties = 3\ndistance_km = 10\n'
    elif param in ("tau_dsp", "v_a"):
        proto = '[protocol]\nfamily = "cv_gaussian"\ndetection_variant = "het_2p"\ndistance_km = 10\n'
    else:
        proto = '[protocol]\nfamily = "bb84"\ndistance_km = 10\n'
    text = f'{proto}\n[sweep]\nparameter = "{param}"\nfrom = {values[0]}\nto = {values[1]}\nsteps = 3\n'
    rows = run(parse_scenario(text), cat)
    assert [r.value for r in rows][0] == values[0]
    assert all(r.feasible for r in rows)


def test_measured_mode_is_cheaper(cat):
    sheet = run(parse_scenario(SWEEP), cat)
    meas = run(parse_scenario('value_mode = "measured_preferred"\n' + SWEEP), cat)
    assert all(m.total_J <= s.total_J for m, s in zip(meas, sheet))


# --- output ------------------------------------------------------------------------------


def test_csv_header_and_determinism(cat):
    sc = parse_scenario(SWEEP)
    a, b = to_csv(run(sc, cat), "distance_km"), to_csv(run(sc, cat), "distance_km")
    assert a == b
    header = a.splitlines()[0].split(",")
    assert header == ["distance_km", *COLUMNS]
    report_fields = {f.name for f in fields(EnergyReport)}
    assert set(COLUMNS) - {"status", "raw_per_use"} <= report_fields


def test_infeasible_csv_cells_are_blank(cat):
    line = to_csv(run(parse_scenario(FAR), cat)).splitlines()[1].split(",")
    assert line[1] == "infeasible"
    assert line[COLUMNS.index("total_J") + 1] == ""


def test_json_uses_null(cat):
    data = json.loads(to_json(run(parse_scenario(FAR), cat)))
    assert data[0]["total_J"] is None and data[0]["status"] == "infeasible"


@pytest.mark.parametrize(
    "x,text",
    [(0.0, "0"), (2.5, "2.5"), (1234.5, "1234.5"), (1e6, "1.000000000e+06"), (5e-4, "5.000000000e-04"), (math.nan, "")],
)
def test_fmt_number(x, text):
    assert fmt_number(x) == text


# --- command line ----------------------------------------------------------------------------


def test_cli_run(tmp_path, capsys):
    path = write(tmp_path, SWEEP)
    out = tmp_path / "out.csv"
    svg = tmp_path / "out.svg"
    assert main(["run", str(path), "--out", str(out), "--svg", str(svg)]) == EXIT_OK
    assert len(out.read_text().splitlines()) == 101
    assert svg.read_text().count("<polyline") == 1


def test_cli_json_to_stdout(tmp_path, capsys):
    assert main(["run", str(write(tmp_path, SWEEP)), "--format", "json"]) == EXIT_OK
    assert len(json.loads(capsys.readouterr().out)) == 100


def test_cli_exit_codes(tmp_path, capsys):
    assert main(["run", str(write(tmp_path, SWEEP.replace("steps = 100", "steps = 1")))]) == EXIT_VALIDATION
    assert "line 11" in capsys.readouterr().err
    assert main(["run", str(write(tmp_path, FAR))]) == EXIT_INFEASIBLE
    assert main(["run", str(tmp_path / "missing.toml")]) == EXIT_IO
    assert main(["--catalog", str(tmp_path / "missing.toml"), "catalog", "list"]) == EXIT_IO


def test_cli_catalog(capsys):
    assert main(["catalog", "list"]) == EXIT_OK
    assert "snspd_1550" in capsys.readouterr().out
    assert main(["catalog", "show", "snspd_1550"]) == EXIT_OK
    shown = json.loads(capsys.readouterr().out)
    assert shown["id"] == "snspd_1550" and shown["power_W"] == 3000
    assert main(["catalog", "show", "warp_drive"]) == EXIT_VALIDATION


def test_cli_measured_flag(tmp_path, capsys):
    path = write(tmp_path, FAR.replace("0.2", "0.01"))
    main(["run", str(path)])
    sheet = float(capsys.readouterr().out.splitlines()[1].split(",")[COLUMNS.index("power_W") + 1])
    main(["--measured", "run", str(path)])
    meas = float(capsys.readouterr().out.splitlines()[1].split(",")[COLUMNS.index("power_W") + 1])
    assert meas < sheet


def test_env_catalog(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("QNET_CATALOG", str(tmp_path / "nowhere.toml"))
    assert main(["catalog", "list"]) == EXIT_IO


def test_console_entry_point():
    res = subprocess.run([sys.executable, "-m", "qnet_energy.cli", "catalog", "list"], capture_output=True, text=True)
    assert res.returncode == 0 and "computer" in res.stdout
