import xml.etree.ElementTree as ET

import numpy as np
import pytest

from hso_irl import cli
from hso_irl.config import OUTPUT_DIR_ENV, load_config, parse_config
from hso_irl.errors import ConfigError, IntegrationFault
from hso_irl.report import line_chart, read_timeseries


def write(tmp_path, text, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(text)
    return p


# -- config ----------------------------------------------------------------

def test_empty_config_gives_academic_defaults(tmp_path):
    cfg = load_config(write(tmp_path, ""), scenario="academic")
    scn = cfg.scenario
    assert scn.name == "academic"
    assert (scn.cond_threshold, scn.purge_period, scn.data_period) == (1e8, 2.0, 0.08)
    assert cfg.T == 50.0 and cfg.h == 0.01
    assert load_config(write(tmp_path, "", "b.yaml")).scenario.name == "academic"


def test_quadcopter_epsilon_default(tmp_path):
    cfg = load_config(write(tmp_path, "scenario.name: quadcopter\n"))
    assert cfg.scenario.eps == 0.002
    assert cfg.h == 1e-3 and cfg.T == 60.0


def test_flat_and_nested_keys_agree(tmp_path):
    flat = load_config(write(tmp_path, "scenario.epsilon: 0.3\nexcitation.seed: 4\nrun.T: 5\n", "f.yaml"))
    nested = load_config(write(tmp_path, "scenario:\n  epsilon: 0.3\nexcitation:\n  seed: 4\nrun:\n  T: 5\n",
                               "n.yaml"))
    assert flat.scenario.eps == nested.scenario.eps == 0.3
    assert flat.scenario.excitation.seed == nested.scenario.excitation.seed == 4
    assert flat.seed == 4 and flat.T == 5.0


def test_run_seed_overrides_excitation_seed():
    cfg = parse_config({"excitation.seed": 4, "run.seed": 9})
    assert cfg.scenario.excitation.seed == 9 and cfg.seed == 9


def test_h_above_data_period_rejected(tmp_path):
    with pytest.raises(ConfigError) as exc:
        load_config(write(tmp_path, "run.h: 0.1\n"))
    assert exc.value.key == "run.h"


def test_unknown_key_rejected(tmp_path):
    with pytest.raises(ConfigError) as exc:
        load_config(write(tmp_path, "scenario.epsilon: 0.1\nscenario.espilon: 0.2\n"))
    assert exc.value.key == "scenario.espilon"
    assert "scenario.espilon" in str(exc.value)


def test_parse_error_reports_line(tmp_path):
    with pytest.raises(ConfigError) as exc:
        load_config(write(tmp_path, "run.T: 5\nrun.h: [0.01,\n"))
    assert exc.value.line is not None and exc.value.line >= 2


@pytest.mark.parametrize("text, key", [
    ("run.T: -1\n", "run.T"),
    ("run.T: abc\n", "run.T"),
    ("scenario.k4: 0\n", "scenario.k4"),
    ("scenario.purge_policy: xor\n", "scenario.purge_policy"),
    ("scenario.x0: [1, 2]\n", "scenario.x0"),
    ("scenario.name: mars\n", "scenario.name"),
    ("quadcopter.mass: 1.0\n", "quadcopter.mass"),
    ("system.A: [[1]]\n", "system.A"),
    ("scenario.name: custom\nsystem.A: [[1]]\n", "system.B"),
    ("run.emit_svg: 3\n", "run.emit_svg"),
])
def test_invalid_values_name_the_key(tmp_path, text, key):
    with pytest.raises(ConfigError) as exc:
        load_config(write(tmp_path, text))
    assert exc.value.key == key


def test_non_mapping_and_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(write(tmp_path, "- 1\n- 2\n"))
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.yaml")


def test_custom_scenario(tmp_path):
    text = ("scenario.name: custom\nsystem.A: [[-1, 1], [0, 2]]\nsystem.B: [[0], [1]]\n"
            "cost.Q: [[1, 0], [0, 1]]\ncost.R: [[2]]\nscenario.observer_poles: [-1, -2]\n")
    cfg = load_config(write(tmp_path, text))
    assert cfg.scenario.sys.n == 2 and cfg.scenario.sys.m == 1
    assert cfg.scenario.R[0, 0] == 2.0


def test_quadcopter_parameter_override(tmp_path):
    cfg = load_config(write(tmp_path, "scenario.name: quadcopter\nquadcopter.mass: 1.104\n"))
    assert cfg.scenario.extra["params"].mass == 1.104
    assert cfg.scenario.sys.A[3, 3] == pytest.approx(-0.01 / 1.104)


def test_output_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv(OUTPUT_DIR_ENV, str(tmp_path / "envout"))
    assert load_config(write(tmp_path, "")).output_dir == tmp_path / "envout"
    cfg = load_config(write(tmp_path, f"run.output_dir: {tmp_path / 'cfgout'}\n", "o.yaml"))
    assert cfg.output_dir == tmp_path / "cfgout"


# -- commands --------------------------------------------------------------

SHORT = "run.T: 16\n"


def test_run_writes_artifacts(tmp_path, capsys):
    cfg = write(tmp_path, SHORT)
    out = tmp_path / "out"
    rc = cli.main(["run", "--config", str(cfg), "--out", str(out), "--emit-svg"])
    assert rc == 0
    stdout = capsys.readouterr().out
    assert "summary:" in stdout and "swaps=" in stdout
    header, data = read_timeseries(out / "timeseries.csv")
    assert header[:5] == ["t", "delta_norm", "gain_error_fro", "sigma_u_residual", "cond_reg"]
    assert len(header) == 5 + 3 + 3 + 3 + 3 + 3
    assert data[-1, 0] == pytest.approx(16.0)
    lines = (out / "final_solution.csv").read_text().splitlines()
    assert lines[0] == "quantity,row,col,value"
    quantities = {ln.split(",")[0] for ln in lines[1:]}
    assert quantities == {"S_hat", "Q_hat", "R_hat", "K_hat", "K_expert"}
    for name in ("delta_norm", "gain_error", "qhat_diag", "rhat_diag"):
        root = ET.parse(out / f"{name}.svg").getroot()
        assert root.tag.endswith("svg")
        assert root.findall("{http://www.w3.org/2000/svg}polyline")


def test_csv_number_format(tmp_path):
    cfg = write(tmp_path, "run.T: 0.5\n")
    out = tmp_path / "o"
    assert cli.main(["run", "--config", str(cfg), "--out", str(out)]) == 0
    body = (out / "timeseries.csv").read_text().splitlines()[1:]
    for field in body[-1].split(","):
        if field != "nan":
            mantissa = field.split("e")[0].lstrip("-").replace(".", "").lstrip("0")
            assert len(mantissa) <= 9


def test_require_equivalence_exit_code(tmp_path, capsys):
    # far too short to learn anything
    cfg = write(tmp_path, "run.T: 1\n")
    rc = cli.main(["run", "--config", str(cfg), "--out", str(tmp_path / "o"), "--require-equivalence"])
    assert rc == 2
    assert "equivalent=false" in capsys.readouterr().out


def test_config_error_exit_code(tmp_path, capsys):
    rc = cli.main(["run", "--config", str(write(tmp_path, "bogus: 1\n")), "--out", str(tmp_path / "o")])
    assert rc == 1
    assert "bogus" in capsys.readouterr().err


def test_partial_csv_flushed_on_failure(tmp_path, monkeypatch):
    real = cli.simulate_expert

    def failing(scn, T=None, h=None, **kw):
        def boom(info):
            if info.t > 0.2:
                raise IntegrationFault(info.t)
        return real(scn, T=T, h=h, hooks=[boom], **kw)

    monkeypatch.setattr(cli, "simulate_expert", failing)
    out = tmp_path / "o"
    rc = cli.main(["run", "--config", str(write(tmp_path, SHORT)), "--out", str(out)])
    assert rc == 1
    header, data = read_timeseries(out / "timeseries.csv")
    assert 0 < len(data) and data[-1, 0] <= 0.21


def test_synth_lqr_command(tmp_path, capsys):
    assert cli.main(["synth-lqr", "--config", str(write(tmp_path, ""))]) == 0
    out = capsys.readouterr().out
    assert "K_EP" in out and "-1.30925" in out and "riccati residual" in out


def test_check_informativity_academic(tmp_path, capsys):
    assert cli.main(["check-informativity", "--config", str(write(tmp_path, "run.T: 20\n"))]) == 0
    out = capsys.readouterr().out
    first = out.splitlines()[0]
    assert first.startswith("first FI time:") and "never" not in first


def test_check_informativity_never(tmp_path, capsys):
    text = "run.T: 3\nscenario.x0: [0, 0, 0]\nexcitation.count: 0\n"
    assert cli.main(["check-informativity", "--config", str(write(tmp_path, text))]) == 0
    assert "first FI time: never" in capsys.readouterr().out


def test_check_informativity_span_deficient(tmp_path, capsys):
    # decoupled plant, state and excitation confined to the first axis
    text = "run.T: 6\nscenario.x0: [0.5, 0, 0]\nexcitation.channels: [0]\nscenario.cond_threshold: 1e30\n"
    assert cli.main(["check-informativity", "--config", str(write(tmp_path, text))]) == 0
    out = capsys.readouterr().out
    assert "span_ok=false" in out and "never" in out


def test_module_entry_point(tmp_path):
    import subprocess
    import sys
    r = subprocess.run([sys.executable, "-m", "hso_irl", "synth-lqr", "--config", str(write(tmp_path, ""))],
                       capture_output=True, text=True)
    assert r.returncode == 0 and "K_EP" in r.stdout


def test_line_chart_handles_gaps_and_log_axis():
    t = np.linspace(0, 1, 5)
    doc = line_chart(t, {"a": np.array([np.nan, 1.0, 0.1, np.nan, 0.01])}, "x", log_y=True)
    root = ET.fromstring(doc)
    polys = root.findall("{http://www.w3.org/2000/svg}polyline")
    assert len(polys) == 2
    ET.fromstring(line_chart(t, {"b": np.full(5, np.nan)}, "empty <title>"))
