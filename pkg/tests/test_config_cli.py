"""Configuration precedence and the command-line driver (exit codes, outputs, determinism)."""

import json

import pytest

from landau_lab.cli import build_parser, run, snapshot_times
from landau_lab.config import ENV_CACHE, ENV_OUTPUT, RunConfig, load_config
from landau_lab.errors import ConfigError
from landau_lab.io import config_hash

SMALL = ["--D", "6", "--m-max", "3", "--estimate-D", "4", "--estimate-m-max", "1", "--n-samples", "6", "--T", "1", "--n-snapshots", "10"]


def test_defaults_valid():
    cfg = RunConfig()
    assert cfg.gamma == -1.0 and cfg.D == 10 and cfg.D >= cfg.m_max + 2
    assert 0.5 in snapshot_times(cfg)


@pytest.mark.parametrize(
    "kw",
    [
        {"gamma": 0.5},
        {"gamma": -3.0},
        {"D": 4, "m_max": 4},
        {"T": 0.0},
        {"t_min": 5.0},
        {"seed": 1.5},
        {"window": (1.0, 0.5)},
        {"schema_version": 99},
    ],
)
def test_invalid_configs(kw):
    with pytest.raises(ConfigError):
        RunConfig(**kw)


def test_precedence(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"gamma": -2.0, "D": 8, "cache_dir": "file_cache", "output_dir": "file_out"}))
    env = {ENV_CACHE: "env_cache"}
    cfg = load_config(path, {"D": 7, "output_dir": None}, env)
    assert cfg.gamma == -2.0  # file over default
    assert cfg.D == 7  # flag over file
    assert cfg.cache_dir == "env_cache"  # env over file
    assert cfg.output_dir == "file_out"
    cfg = load_config(path, {"output_dir": "flag_out"}, {ENV_OUTPUT: "env_out"})
    assert cfg.output_dir == "flag_out"


def test_config_file_errors(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "missing.json", env={})
    bad = tmp_path / "bad.json"
    bad.write_text("{nope")
    with pytest.raises(ConfigError):
        load_config(bad, env={})
    bad.write_text(json.dumps({"gama": -1}))
    with pytest.raises(ConfigError, match="unknown"):
        load_config(bad, env={})


def test_hash_ignores_locations():
    a = RunConfig(cache_dir="x", output_dir="y")
    b = RunConfig(cache_dir="p", output_dir="q")
    assert config_hash(a.physics()) == config_hash(b.physics())
    assert config_hash(a.physics()) != config_hash(RunConfig(seed=1).physics())


def test_parser_rejects_unknown_command():
    with pytest.raises(SystemExit):
        build_parser().parse_args(["frobnicate"])


def test_exit_code_config(tmp_path, capsys):
    assert run(["coeffs", "--gamma", "0.5", "--output-dir", str(tmp_path)]) == 2
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "config" and err["exit_code"] == 2
    assert run(["evolve", "--D", "3", "--m-max", "3"]) == 2
    assert run(["pipeline", "--gamma-sweep=-1,abc"]) == 2


def test_exit_code_insufficient_data(tmp_path, capsys):
    # a resolution threshold below round-off leaves no resolved cell
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"resolve_tol": 1e-15, "D": 6, "m_max": 3, "T": 1.0, "n_snapshots": 6}))
    code = run(["verify-smoothing", "--config", str(cfg), "--cache-dir", str(tmp_path / "c"), "--output-dir", str(tmp_path / "o")])
    assert code == 3
    assert json.loads(capsys.readouterr().err)["error"] == "insufficient-data"
    # the table is still written for inspection
    assert (tmp_path / "o" / "smoothing" / "smoothing.csv").is_file()


@pytest.fixture(scope="module")
def pipeline_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("pipe")
    args = ["pipeline", *SMALL, "--cache-dir", str(root / "cache"), "--output-dir", str(root / "out")]
    assert run(args) == 0
    return root, args


def _snapshot(d):
    return {p.relative_to(d).as_posix(): p.read_bytes() for p in sorted(d.rglob("*")) if p.is_file()}


def test_pipeline_outputs(pipeline_dir):
    root, _ = pipeline_dir
    out = root / "out"
    for name in [
        "manifest.json",
        "coeffs/profiles.csv",
        "coeffs/probes.json",
        "assemble/system_D6.bin",
        "evolve/trace_D6.csv",
        "smoothing/smoothing.csv",
        "smoothing/smoothing.json",
        "estimates/lemma22.csv",
        "estimates/prop31.json",
        "estimates/coercivity.json",
        "estimates/energy.json",
        "estimates/summary.json",
    ]:
        assert (out / name).is_file(), name
    summary = json.loads((out / "estimates/summary.json").read_text())
    assert summary["energy_holds"] is True
    assert summary["provenance"]["config_hash"]
    probes = json.loads((out / "coeffs/probes.json").read_text())
    assert probes["cache_roundtrip_exact"] is True


def test_pipeline_byte_identical(pipeline_dir):
    root, args = pipeline_dir
    first = _snapshot(root / "out")
    assert run(args) == 0
    assert _snapshot(root / "out") == first


def test_gamma_sweep(tmp_path):
    args = ["evolve", "--D", "5", "--m-max", "2", "--T", "1", "--n-snapshots", "5",
            "--gamma-sweep=-0.5,-2.9", "--cache-dir", str(tmp_path / "c"), "--output-dir", str(tmp_path / "o")]
    assert run(args) == 0
    dirs = sorted(p.name for p in (tmp_path / "o").iterdir())
    assert dirs == ["gamma_-0.5", "gamma_-2.9"]
    trace = json.loads((tmp_path / "o" / "gamma_-2.9" / "evolve" / "trace_D5.json").read_text())
    assert trace["gamma"] == -2.9 and trace["energy_identity_residual"] < 1e-9
