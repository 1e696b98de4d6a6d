import json
import subprocess
import sys
import textwrap
from pathlib import Path

import pytest

from srengine import __version__, cli
from srengine.errors import ConfigError

CONFIGS = Path(__file__).resolve().parents[1] / "scripts" / "configs"


def write(tmp_path, text, name="cfg.ini"):
    path = tmp_path / name
    path.write_text(textwrap.dedent(text))
    return path


def test_empty_config_exits_2(tmp_path, capsys):
    assert cli.main(["run", str(write(tmp_path, ""))]) == cli.EXIT_CONFIG
    record = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert record["status"] == "error" and record["code"] == 2


def test_missing_file_exits_2(tmp_path):
    assert cli.main(["run", str(tmp_path / "nope.ini")]) == cli.EXIT_CONFIG


@pytest.mark.parametrize(
    "text",
    [
        "[run]\nexperiment = cycle\n[cavity]\ng_taux = 0.1\n",
        "[run]\nexperiment = cycle\n[extras]\nfoo = 1\n",
        "[run]\nexperiment = teleport\n",
        "[run]\nexperiment = cycle\n[cavity]\ng_tau = -0.1\n",
        "[run]\nexperiment = cycle\n[cavity]\ng_tau = abc\n",
        "[run]\nexperiment = cycle\n[atoms]\ntheta = 1.0\n",
        "[run]\nexperiment = cycle\n[schedule]\ndelta_1_Hz = 2e6\ndelta_2_Hz = 1e6\n",
        "[run]\nexperiment = scaling\n[sweep]\nN_bar_values = 1 2\n",
    ],
)
def test_invalid_configs_rejected(tmp_path, text):
    with pytest.raises(ConfigError):
        cli.load_config(write(tmp_path, text))


def test_hz_keys_are_converted():
    cfg = cli.validate_config({"run": {"experiment": "cycle"}, "cavity": {"kappa_Hz": "74e3", "g_tau": "0.17"}})
    params = cli._params(cfg)
    assert params.kappa == pytest.approx(2 * 3.141592653589793 * 74e3)


def cycle_config(tmp_path, out="out"):
    return write(tmp_path, f"""
        [run]
        experiment = cycle
        output_dir = {tmp_path / out}

        [cavity]
        g_tau = 0.17
        N_bar = 0.8

        [atoms]
        T_R = 8000
    """)


def test_cycle_run_outputs(tmp_path):
    assert cli.main(["run", str(cycle_config(tmp_path))]) == cli.EXIT_OK
    out = tmp_path / "out"
    summary = json.loads((out / "summary.json").read_text())
    assert summary["version"] == __version__
    assert summary["results"]["ledger"]["W_out"] > 0
    assert summary["files"] == ["cycle_strokes.csv"]
    for name in summary["files"]:
        first = (out / name).read_text().splitlines()[0]
        assert first == f"# config_sha256={summary['config_sha256']}"


def test_rerun_is_byte_identical(tmp_path):
    cfg = cycle_config(tmp_path)
    assert cli.main(["run", str(cfg), "--out", str(tmp_path / "a")]) == 0
    assert cli.main(["run", str(cfg), "--out", str(tmp_path / "b")]) == 0
    files = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert files == sorted(p.name for p in (tmp_path / "b").iterdir())
    for name in files:
        if name != "summary.json":  # records its own output_dir
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    sa = json.loads((tmp_path / "a" / "summary.json").read_text())
    sb = json.loads((tmp_path / "b" / "summary.json").read_text())
    sa["config"]["run"].pop("output_dir")
    sb["config"]["run"].pop("output_dir")
    assert sa == sb


def test_trajectory_run_is_reproducible(tmp_path):
    text = """
        [run]
        experiment = trajectory_validation
        seed = 5

        [cavity]
        g_tau = 0.03
        N_bar = 2.1
        delta_ac_Hz = 0

        [atoms]
        theta = 1.5707963267948966
        T_R = none

        [trajectory]
        t_final_s = 4e-6
        dim = 12
        n_trajectories = 20
        n_samples = 5
        record_emissions = true
    """
    cfg = write(tmp_path, text)
    assert cli.main(["run", str(cfg), "--out", str(tmp_path / "a")]) == 0
    assert cli.main(["run", str(cfg), "--out", str(tmp_path / "b"), "--threads", "2"]) == 0
    for name in ("events.csv",):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_masing_exits_4(tmp_path, capsys):
    cfg = write(tmp_path, f"""
        [run]
        experiment = steady_state
        output_dir = {tmp_path / 'out'}

        [cavity]
        g_tau = 0.17
        N_bar = 20

        [atoms]
        theta = 0.1
        T_R = none
    """)
    assert cli.main(["run", str(cfg)]) == cli.EXIT_MASING
    assert json.loads((tmp_path / "out" / "error.json").read_text())["code"] == 4


def test_version(capsys):
    assert cli.main(["version"]) == 0
    assert capsys.readouterr().out.strip() == __version__


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "srengine", "version"], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.strip() == __version__


@pytest.mark.parametrize("name", sorted(p.name for p in CONFIGS.glob("*.ini")))
def test_shipped_configs_validate(name):
    cfg = cli.load_config(CONFIGS / name)
    assert cfg["run"]["experiment"] in cli.EXPERIMENTS


@pytest.mark.slow
def test_selfcheck_quick(capsys):
    code = cli.main(["selfcheck", "--quick"])
    lines = [ln for ln in capsys.readouterr().out.splitlines() if ln.startswith("[")]
    assert lines
    all_pass = all(ln.startswith("[PASS]") for ln in lines)
    assert code == (cli.EXIT_OK if all_pass else cli.EXIT_CHECK_FAILED)
