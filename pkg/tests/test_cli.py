import json

import pytest
from click.testing import CliRunner

from stoqft import cli
from stoqft.experiments import CATALOG, ConfigError, run_experiment

TINY_NOISE = {
    "experiment": "noise.selftest",
    "params": {"T": 1.0, "L": 4.0, "Nt": 4, "Nx": 4, "n_draws": 150},
    "seed": 3,
}


def _write_config(tmp_path, config, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(config), encoding="utf-8")
    return str(path)


@pytest.fixture
def runner():
    return CliRunner()


def test_list_shows_full_catalog(runner):
    result = runner.invoke(cli.main, ["list"])
    assert result.exit_code == 0
    for name in CATALOG:
        assert name in result.output


def test_describe_shows_schema_and_relations(runner):
    result = runner.invoke(cli.main, ["describe", "freefield.renorm"])
    assert result.exit_code == 0
    assert "lam_p" in result.output
    assert "4 pi^2" in result.output


def test_describe_unknown_experiment_exits_2(runner):
    result = runner.invoke(cli.main, ["describe", "nope"])
    assert result.exit_code == 2


def test_run_writes_outputs_and_manifest(runner, tmp_path):
    cfg = _write_config(tmp_path, TINY_NOISE)
    result = runner.invoke(cli.main, ["run", cfg, "--output", str(tmp_path)])
    assert result.exit_code == 0, result.output
    assert "[PASS]" in result.output
    outdirs = list(tmp_path.glob("noise_selftest-*"))
    assert len(outdirs) == 1
    outdir = outdirs[0]
    manifest = json.loads((outdir / "manifest.json").read_text())
    assert manifest["status"] == "passed"
    assert manifest["experiment"] == "noise.selftest"
    assert manifest["seed"] == 3
    assert set(manifest["derived_constants"]) == {"TV", "d4x"}
    assert manifest["checks"] and all("passed" in c for c in manifest["checks"])
    # every output file is present and its recorded hash is correct
    assert manifest["outputs"]
    for fname, digest in manifest["outputs"].items():
        assert (outdir / fname).exists()
        assert cli._sha256_file(outdir / fname) == digest
    assert any(f.endswith(".csv") for f in manifest["outputs"])
    assert any(f.endswith(".png") for f in manifest["outputs"])
    # lock file released
    assert not (outdir / cli.LOCK_NAME).exists()


def test_rerun_is_byte_identical_for_csv(runner, tmp_path):
    cfg = _write_config(tmp_path, TINY_NOISE)
    assert runner.invoke(cli.main,
                         ["run", cfg, "--output", str(tmp_path)]).exit_code == 0
    outdir = next(tmp_path.glob("noise_selftest-*"))
    first = {p.name: p.read_bytes() for p in outdir.glob("*.csv")}
    assert runner.invoke(cli.main,
                         ["run", cfg, "--output", str(tmp_path)]).exit_code == 0
    second = {p.name: p.read_bytes() for p in outdir.glob("*.csv")}
    assert first == second


def test_seed_override_changes_output_directory(runner, tmp_path):
    cfg = _write_config(tmp_path, TINY_NOISE)
    runner.invoke(cli.main, ["run", cfg, "--output", str(tmp_path)])
    runner.invoke(cli.main, ["run", cfg, "--output", str(tmp_path),
                             "--seed", "4"])
    assert len(list(tmp_path.glob("noise_selftest-*"))) == 2


def test_missing_field_exits_2_and_names_the_field(runner, tmp_path):
    broken = {"experiment": "freefield.vacuum",
              "params": {"lam": 0.4, "T": 1.0, "L": 6.28, "cutoff": 1.2,
                         "n_samples": 50},
              "seed": 1}
    cfg = _write_config(tmp_path, broken)
    result = runner.invoke(cli.main, ["run", cfg, "--output", str(tmp_path)])
    assert result.exit_code == 2
    assert "m" in result.output


def test_invalid_json_exits_2(runner, tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{not json", encoding="utf-8")
    result = runner.invoke(cli.main, ["run", str(path)])
    assert result.exit_code == 2


def test_unknown_experiment_exits_2(runner, tmp_path):
    cfg = _write_config(tmp_path, {"experiment": "bogus", "params": {}})
    result = runner.invoke(cli.main, ["run", cfg])
    assert result.exit_code == 2


def test_failing_check_exits_3(runner, tmp_path):
    # a renormalization cutoff barely above the mass leaves the closed-form
    # total rate far from the Riemann sum, so the 1% check must fail
    failing = {"experiment": "freefield.rates",
               "params": {"m": 1.0, "lam_p": 0.3, "T": 1.0, "L": 6.28,
                          "cutoff": 1.2, "scheme_cutoff": 1.2},
               "seed": 1}
    cfg = _write_config(tmp_path, failing)
    result = runner.invoke(cli.main, ["run", cfg, "--output", str(tmp_path)])
    assert result.exit_code == 3
    assert "[FAIL]" in result.output
    manifest = json.loads(next(tmp_path.glob("freefield_rates-*/manifest.json"))
                          .read_text())
    assert manifest["status"] == "failed"


def test_locked_directory_exits_2(runner, tmp_path):
    cfg = _write_config(tmp_path, TINY_NOISE)
    runner.invoke(cli.main, ["run", cfg, "--output", str(tmp_path)])
    outdir = next(tmp_path.glob("noise_selftest-*"))
    (outdir / cli.LOCK_NAME).write_text("1234")
    result = runner.invoke(cli.main, ["run", cfg, "--output", str(tmp_path)])
    assert result.exit_code == 2
    assert "lock" in result.output.lower()


def test_output_root_env_var(runner, tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUTPUT_ROOT_ENV, str(tmp_path / "envroot"))
    cfg = _write_config(tmp_path, TINY_NOISE)
    result = runner.invoke(cli.main, ["run", cfg])
    assert result.exit_code == 0
    assert list((tmp_path / "envroot").glob("noise_selftest-*"))


def test_selftest_command(runner, tmp_path):
    result = runner.invoke(cli.main,
                           ["selftest", "--output", str(tmp_path)])
    assert result.exit_code == 0
    assert "[PASS]" in result.output


def test_truncation_overflow_is_a_config_error(runner, tmp_path):
    tight = {"experiment": "freefield.offdiag",
             "params": {"m": 1.0, "lam": 0.9, "T": 4.0, "L": 6.28,
                        "cutoff": 1.2,
                        "truncation": {"n_max": 2, "N_max": 2,
                                       "mass_bound": 1e-9}},
             "seed": 1}
    cfg = _write_config(tmp_path, tight)
    result = runner.invoke(cli.main, ["run", cfg, "--output", str(tmp_path)])
    assert result.exit_code == 2
    assert "truncation" in result.output.lower()


def test_every_catalog_entry_validates_required_fields():
    for name in CATALOG:
        with pytest.raises(ConfigError):
            run_experiment(name, {}, seed=0)


def test_negative_parameter_rejected():
    with pytest.raises(ConfigError):
        run_experiment("freefield.vacuum",
                       {"m": -1.0, "lam": 0.4, "T": 1.0, "L": 6.28,
                        "cutoff": 1.2, "n_samples": 50}, seed=0)
