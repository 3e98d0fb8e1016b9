import csv
import json

import pytest

from pairband.cli import main
from pairband.config import ConfigError, ScenarioConfig, load_config, load_preset, normalize, preset_names
from pairband.runner import run_scenario, sweep

SMALL = """
name = "small"
kind = "evolve"
[model]
n_sites = 24
u = 7.0
v = 6.0
[packet]
k0_over_pi = -0.8
n_a = 12
[field]
f0 = 0.05
[run]
t_final = 4.0
sample_dt = 0.5
"""

FROZEN = {
    "fig2-a": (7.0, 6.0), "fig2-b": (3.0, -2.0), "fig2-c": (7.0, 7.0), "fig2-d": (7.0, 6.7),
    "fig3-e": (2.0, -0.6), "fig3-f": (-2.0, 3.0), "fig3-g": (5.0, 4.0), "fig3-h": (5.0, 5.0),
    "fig6-square": (5.0, 4.0), "fig6-sine": (5.0, 4.0),
}


def test_preset_table():
    assert set(preset_names()) == set(FROZEN) | {"phase-map"}
    for name, (u, v) in FROZEN.items():
        cfg = load_preset(name)
        assert cfg.name == name
        assert (cfg.model.u, cfg.model.v) == (u, v)
        assert cfg.model.kappa == 1.0
        if name.startswith(("fig2", "fig3")):
            assert cfg.packet.k0 == pytest.approx(-0.8 * 3.141592653589793)
            assert cfg.packet.alpha == 0.15 and cfg.field.f0 == 0.05 and cfg.field.kind == "static"
    sine, square = load_preset("fig6-sine"), load_preset("fig6-square")
    assert sine.field.kind == "sine" and square.field.kind == "square"
    assert sine.field.period == square.field.period and sine.field.shift == square.field.shift
    pm = load_preset("phase-map").data["grid"]
    assert (pm["n_u"], pm["n_v"]) == (100, 100)


def test_unknown_preset():
    with pytest.raises(ConfigError, match="unknown preset"):
        load_preset("fig9")


def test_defaults_filled():
    cfg = load_config(SMALL)
    assert cfg.run["dt"] == 0.02 and cfg.run["r_max"] == 400 and cfg.run["certify"] is True
    assert cfg.packet.alpha == 0.15 and cfg.packet.band == "lower"
    assert cfg.outputs["plots"] is True


@pytest.mark.parametrize(
    "edit, message",
    [
        (lambda d: d["model"].pop("u"), "model.u: required"),
        (lambda d: d["model"].update(n_sites=1), "model.n_sites"),
        (lambda d: d["model"].update(n_sites=2.5), "model.n_sites: expected an integer"),
        (lambda d: d["model"].update(kappa=-1.0), "model.kappa: must be positive"),
        (lambda d: d["model"].update(hbar=1.0), "model.hbar: unknown key"),
        (lambda d: d["packet"].update(k0_over_pi=1.5), "packet.k0_over_pi"),
        (lambda d: d["packet"].update(band="middle"), "packet.band"),
        (lambda d: d["packet"].update(n_a=99.0), "packet.n_a"),
        (lambda d: d["field"].update(kind="sine"), "field.period"),
        (lambda d: d["field"].update(f0="strong"), "field.f0: expected a number"),
        (lambda d: d["run"].update(dt=0.2), "run.dt"),
        (lambda d: d["run"].update(sample_dt=0.03), "run.sample_dt"),
        (lambda d: d["run"].update(certify="yes"), "run.certify"),
        (lambda d: d.update(grid={}), "grid: unknown section"),
        (lambda d: d.update(kind="movie"), "kind"),
    ],
)
def test_validation_messages(edit, message):
    data = json.loads(load_config(SMALL).canonical_json())
    edit(data)
    with pytest.raises(ConfigError) as err:
        normalize(data)
    assert message in str(err.value)


def test_filter_needs_pulse_and_target():
    data = json.loads(load_preset("fig6-sine").canonical_json())
    data["run"]["t_target"] = None
    with pytest.raises(ConfigError, match="t_target"):
        normalize(data)
    data = json.loads(load_preset("fig6-sine").canonical_json())
    data["field"]["kind"] = "static"
    with pytest.raises(ConfigError, match="pulse"):
        normalize(data)


def test_pulse_dt_limit():
    data = json.loads(load_preset("fig6-sine").canonical_json())
    data["field"]["period"] = 2.0
    with pytest.raises(ConfigError, match="run.dt"):
        normalize(data)


def test_digest_tracks_content():
    a = load_config(SMALL)
    assert a.digest() == load_config(SMALL).digest()
    assert a.replace("field.f0", 0.06).digest() != a.digest()
    # key order in the source does not matter
    assert ScenarioConfig(normalize(dict(reversed(list(a.data.items()))))).digest() == a.digest()


def test_replace_and_axis():
    cfg = load_config(SMALL)
    assert cfg.replace("model.u", 5).model.u == 5.0
    with pytest.raises(ConfigError, match="unknown key"):
        cfg.check_axis("model.w")
    with pytest.raises(ConfigError, match="section"):
        cfg.check_axis("grid.n_u")
    with pytest.raises(ConfigError, match="section.key"):
        cfg.check_axis("u")


def _tree(d):
    return {p.relative_to(d): p.read_bytes() for p in sorted(d.rglob("*")) if p.is_file()}


def test_run_outputs_and_determinism(tmp_path):
    cfg = load_config(SMALL)
    a = run_scenario(cfg, tmp_path / "a")
    b = run_scenario(cfg, tmp_path / "b")
    assert a.name == f"small-{cfg.digest()}"
    files = {p.name for p in a.iterdir()}
    assert {"summary.json", "trajectory.csv", "band.csv", "profiles.csv", "trajectory.png", "band.png"} <= files
    assert _tree(a) == _tree(b)
    with open(a / "trajectory.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 9 and float(rows[-1]["t"]) == 4.0
    assert abs(float(rows[0]["x_c"]) - 24.0) < 0.5
    summary = json.loads((a / "summary.json").read_text())
    assert summary["completeness"]["lower"] == "complete"
    assert summary["certificate"] < 1e-6


def test_sweep_summary(tmp_path):
    cfg = load_config(SMALL).replace("outputs.plots", False)
    dirs, table = sweep(cfg, "field.f0", [0.05, 0.1], tmp_path)
    assert len(dirs) == 2
    with open(table) as fh:
        rows = list(csv.DictReader(fh))
    assert [float(r["value"]) for r in rows] == [0.05, 0.1]
    assert "certificate" in rows[0]


def test_sweep_empty_and_invalid(tmp_path):
    cfg = load_config(SMALL)
    dirs, table = sweep(cfg, "field.f0", [], tmp_path)
    assert dirs == [] and table.read_text().strip() == "value,run_dir"
    with pytest.raises(ConfigError):
        sweep(cfg, "field.nope", [1.0], tmp_path)
    with pytest.raises(ConfigError, match="field.f0"):
        sweep(cfg, "field.f0", ["x"], tmp_path)


def test_cli_evolve(tmp_path, capsys):
    path = tmp_path / "small.toml"
    path.write_text(SMALL)
    assert main(["evolve", "--config", str(path), "--out", str(tmp_path / "runs")]) == 0
    out = capsys.readouterr().out.strip()
    assert (tmp_path / "runs").is_dir() and out.endswith(load_config(SMALL).digest())


def test_cli_band_from_evolve_config(tmp_path, capsys):
    path = tmp_path / "small.toml"
    path.write_text(SMALL)
    assert main(["band", "--config", str(path), "--out", str(tmp_path)]) == 0
    d = capsys.readouterr().out.strip()
    assert json.loads((tmp_path / d.split("/")[-1] / "summary.json").read_text())["kind"] == "band"


def test_cli_errors(tmp_path, capsys):
    path = tmp_path / "small.toml"
    path.write_text(SMALL)
    assert main(["filter", "--config", str(path), "--out", str(tmp_path)]) == 2
    assert "not 'filter'" in capsys.readouterr().err
    assert main(["evolve", "--config", str(path), "--dt", "0.5", "--out", str(tmp_path)]) == 2
    assert "run.dt" in capsys.readouterr().err
    assert main(["evolve", "--out", str(tmp_path)]) == 2
    assert main(["evolve", "--config", str(tmp_path / "missing.toml")]) == 2


def test_cli_presets_list(capsys):
    assert main(["presets", "list"]) == 0
    assert capsys.readouterr().out.split() == preset_names()
