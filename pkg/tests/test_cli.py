import json
import subprocess
import sys

import pytest

from stochtori.cli import main
from stochtori.config import parse_config
from stochtori.errors import ConfigError

PENDULUM = """\
[system]
kind = "pendulum"
g_m_per_s2 = 9.81
l_m = 9.81

[initial]
action = [0.5]

[noise]
sigma = 0.1
zeta = 0.5

[grid]
dt_s = 0.5

[statistic]
n = 16
delta_s = 1.0
replicas = {replicas}
seed = 42

[simulate]
replicas = 2

[tolerance]
ks_max = 0.5
variance_min = 0.1
variance_max = 2.0
"""


def write(tmp_path, text, name="run.toml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def run(*args):
    return main([str(a) for a in args])


# -- config ----------------------------------------------------------------

def test_config_resolves_units_and_blocks():
    cfg = parse_config(PENDULUM.format(replicas=10))
    assert cfg.system.constant_frequency[0] == 1.0
    assert cfg.sim.grid.dt == 0.5 and cfg.sim.grid.steps == 32
    assert cfg.statistic.n == 16 and cfg.statistic.seed == 42


def test_config_syntax_error_has_line():
    with pytest.raises(ConfigError) as err:
        parse_config("[system]\nkind = \"pendulum\"\nl_m = = 3\n")
    assert err.value.line == 3
    assert str(err.value).startswith("line 3:")


def test_config_semantic_error_has_line():
    text = PENDULUM.format(replicas=10).replace('kind = "pendulum"', 'kind = "rotor"')
    with pytest.raises(ConfigError) as err:
        parse_config(text)
    assert err.value.line == 2


def test_config_wrong_type_has_line():
    text = PENDULUM.format(replicas=10).replace("sigma = 0.1", 'sigma = "loud"')
    with pytest.raises(ConfigError) as err:
        parse_config(text)
    assert err.value.line == text.splitlines().index('sigma = "loud"') + 1


def test_config_requires_seed():
    text = PENDULUM.format(replicas=10).replace("seed = 42\n", "")
    with pytest.raises(ConfigError, match="seed"):
        parse_config(text)


def test_config_seed_override():
    cfg = parse_config(PENDULUM.format(replicas=10), overrides={"seed": 7, "replicas": 3})
    assert cfg.statistic.seed == 7 and cfg.statistic.replicas == 3


def test_config_rejects_nondividing_dt():
    text = PENDULUM.format(replicas=10).replace("dt_s = 0.5", "dt_s = 0.3")
    with pytest.raises(ConfigError, match="does not divide") as err:
        parse_config(text)
    assert err.value.line == text.splitlines().index("dt_s = 0.3") + 1


def test_config_rejects_nonpositive_tolerance():
    text = PENDULUM.format(replicas=10).replace("ks_max = 0.5", "ks_max = -1.0")
    with pytest.raises(ConfigError, match="positive"):
        parse_config(text)


def test_config_levy_block(configs_dir):
    from stochtori.config import load_config
    cfg = load_config(configs_dir / "pendulum_levy.toml")
    tri = cfg.sim.angle_noise
    assert tri.gamma[0] == 0.3 and cfg.sim.interlace
    assert tri.small_jumps.total_mass == 2.0


# -- simulate --------------------------------------------------------------

def test_simulate_writes_one_file_per_replica(tmp_path):
    cfg = write(tmp_path, PENDULUM.format(replicas=10))
    out = tmp_path / "out"
    assert run("simulate", "--config", cfg, "--out", out) == 0
    names = sorted(p.name for p in out.iterdir())
    assert names == ["metadata.json", "trajectory_00000.csv", "trajectory_00001.csv"]
    meta = json.loads((out / "metadata.json").read_text())
    assert meta["seed"] == 42 and meta["discarded"] == 0 and "version" in meta
    assert meta["config"]["file"]["system"]["kind"] == "pendulum"


def test_simulate_csv_format(tmp_path):
    cfg = write(tmp_path, PENDULUM.format(replicas=10))
    out = tmp_path / "out"
    run("simulate", "--config", cfg, "--out", out)
    raw = (out / "trajectory_00000.csv").read_bytes()
    lines = raw.split(b"\r\n")
    assert lines[0] == b"t,I_1,theta_1,freq_integral_1"
    assert b"\n" not in raw.replace(b"\r\n", b"")
    assert len(lines) == 33 + 2  # header, 33 rows, trailing empty
    row = lines[2].split(b",")
    assert float(row[0]) == 0.5
    assert len(row[2].lstrip(b"-").replace(b".", b"").split(b"e")[0]) >= 16


def test_simulate_byte_identical(tmp_path):
    cfg = write(tmp_path, PENDULUM.format(replicas=10))
    run("simulate", "--config", cfg, "--out", tmp_path / "a")
    run("simulate", "--config", cfg, "--out", tmp_path / "b")
    for name in ("trajectory_00000.csv", "trajectory_00001.csv", "metadata.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_simulate_seed_override_changes_output(tmp_path):
    cfg = write(tmp_path, PENDULUM.format(replicas=10))
    run("simulate", "--config", cfg, "--out", tmp_path / "a")
    run("simulate", "--config", cfg, "--out", tmp_path / "b", "--seed", 43)
    assert ((tmp_path / "a" / "trajectory_00000.csv").read_bytes()
            != (tmp_path / "b" / "trajectory_00000.csv").read_bytes())


def test_simulate_single_file(tmp_path):
    cfg = write(tmp_path, PENDULUM.format(replicas=10))
    out = tmp_path / "out"
    assert run("simulate", "--config", cfg, "--out", out, "--single-file",
               "--replicas", 3) == 0
    assert sorted(p.name for p in out.iterdir()) == ["metadata.json", "trajectories.csv"]
    lines = (out / "trajectories.csv").read_text().splitlines()
    assert lines[0].startswith("replica,t,")
    assert len(lines) == 1 + 3 * 33


def test_simulate_rejects_nondividing_dt_before_running(tmp_path):
    cfg = write(tmp_path, PENDULUM.format(replicas=10).replace("dt_s = 0.5", "dt_s = 0.3"))
    out = tmp_path / "out"
    assert run("simulate", "--config", cfg, "--out", out) == 2
    assert not out.exists()


def test_unwritable_output(tmp_path):
    cfg = write(tmp_path, PENDULUM.format(replicas=10))
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert run("simulate", "--config", cfg, "--out", blocker / "sub") == 2


def test_missing_config_file(tmp_path):
    assert run("simulate", "--config", tmp_path / "nope.toml") == 2


def test_runtime_error_exit_code(tmp_path):
    text = PENDULUM.format(replicas=10).replace(
        'kind = "pendulum"\ng_m_per_s2 = 9.81\nl_m = 9.81',
        'kind = "oscillator"\nm = 1\nchart_tol = 1e-30')
    cfg = write(tmp_path, text)
    assert run("simulate", "--config", cfg, "--out", tmp_path / "o") == 3


# -- verify-clt ------------------------------------------------------------

def test_verify_outputs(tmp_path):
    cfg = write(tmp_path, PENDULUM.format(replicas=200))
    out = tmp_path / "out"
    code = run("verify-clt", "--config", cfg, "--out", out)
    rep = json.loads((out / "report.json").read_text())
    assert code == (0 if rep["pass"] else 1)
    for key in ("system", "noise", "n", "delta", "replicas", "centering", "centering_se",
                "empirical_variance", "predicted_limit", "ks_distance", "cf_sup_error",
                "criteria", "seed", "discarded", "within_path_lag1_autocorrelation",
                "birkhoff", "config"):
        assert key in rep
    assert rep["n"] == 16 and rep["seed"] == 42
    assert "spatial" in rep["birkhoff"]["note"]
    stat_lines = (out / "statistic.csv").read_text().splitlines()
    assert len(stat_lines) == 201
    svg = (out / "histogram.svg").read_text()
    assert svg.startswith("<?xml") and "<polyline" in svg and "<rect" in svg


def test_verify_byte_identical_with_threads(tmp_path):
    cfg = write(tmp_path, PENDULUM.format(replicas=100))
    run("verify-clt", "--config", cfg, "--out", tmp_path / "a")
    run("verify-clt", "--config", cfg, "--out", tmp_path / "b", "--threads", 3)
    for name in ("report.json", "statistic.csv", "histogram.svg"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_verify_two_dimensional_report(tmp_path, configs_dir):
    out = tmp_path / "out"
    run("verify-clt", "--config", configs_dir / "torus2_gaussian.toml", "--out", out,
        "--replicas", 200)
    rep = json.loads((out / "report.json").read_text())
    assert len(rep["covariance"]) == 2 and len(rep["covariance"][0]) == 2
    assert "rank_one" in rep and "rank_one" in rep["criteria"]


def test_verify_negative_control(tmp_path, configs_dir):
    text = (configs_dir / "pendulum_levy.toml").read_text().replace("zeta = 0.2",
                                                                    "zeta = 3.0")
    cfg = write(tmp_path, text)
    out = tmp_path / "out"
    assert run("verify-clt", "--config", cfg, "--out", out, "--replicas", 300) == 1
    rep = json.loads((out / "report.json").read_text())
    assert rep["pass"] is False
    assert rep["criteria"]["variance_bounds"]["pass"] is False


def test_verify_replica_budget(tmp_path):
    text = PENDULUM.format(replicas=50).replace(
        'kind = "pendulum"\ng_m_per_s2 = 9.81\nl_m = 9.81', 'kind = "oscillator"\nm = 1'
    ).replace("action = [0.5]", "action = [0.05]")
    cfg = write(tmp_path, text)
    out = tmp_path / "out"
    assert run("verify-clt", "--config", cfg, "--out", out) == 1
    rep = json.loads((out / "report.json").read_text())
    assert rep["pass"] is False and rep["discarded"] > 0 and rep["replicas"] == 50


# -- levy-check ------------------------------------------------------------

LEVY = """\
[levy_check]
horizon_s = 1.0
dt_s = 0.25
replicas = {replicas}
seed = 3

[levy_check.triplet]
{body}
"""


def test_levy_check_zero_triplet(tmp_path):
    cfg = write(tmp_path, LEVY.format(replicas=50, body="xi = 0.0"))
    out = tmp_path / "out"
    assert run("levy-check", "--config", cfg, "--out", out) == 0
    rep = json.loads((out / "levy_check.json").read_text())
    assert rep["sup_gap"] == 0.0
    rows = (out / "levy_check.csv").read_text().splitlines()[1:]
    assert len(rows) == 21
    assert all(r.split(",")[1] == "1" and r.split(",")[2] == "0" for r in rows)


def test_levy_check_drift_only(tmp_path):
    from stochtori.config import parse_config as pc
    from stochtori.verify import levy_check
    res = levy_check(pc(LEVY.format(replicas=50, body="gamma_per_s = [0.7]")))
    assert abs(abs(res.empirical) - 1).max() <= 1e-15
    assert res.gap.max() <= 1e-14


def test_levy_check_brownian_small_run(tmp_path):
    cfg = write(tmp_path, LEVY.format(replicas=20_000, body="xi = 1.0"))
    out = tmp_path / "out"
    assert run("levy-check", "--config", cfg, "--out", out) == 0


# -- period-table ----------------------------------------------------------

def test_period_table(tmp_path):
    out = tmp_path / "pt"
    assert run("period-table", "--m-min", 1, "--m-max", 4, "--out", out) == 0
    lines = (out / "period_table.csv").read_text().splitlines()
    assert lines[0] == "m,T_star,oracle,abs_difference,energy_drift,status"
    rows = [ln.split(",") for ln in lines[1:]]
    assert len(rows) == 4
    assert abs(float(rows[0][1]) - 7.4163) < 1e-4
    assert all(float(r[4]) <= 1e-10 and r[5] == "ok" for r in rows)


def test_period_table_stdout_and_cache(tmp_path, capsys):
    assert run("period-table", "--m-max", 2, "--cache-dir", tmp_path) == 0
    assert capsys.readouterr().out.count("\r\n") == 3
    assert len(list(tmp_path.glob("*.chart"))) == 2


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "stochtori", "--version"],
                         capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.strip()


def test_bad_arguments_exit_two():
    with pytest.raises(SystemExit) as err:
        main(["simulate"])
    assert err.value.code == 2
