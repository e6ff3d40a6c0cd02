"""Command-line interface: run catalogued experiments from JSON configs.

Each run writes RFC 4180 CSV tables, PNG figures, and a JSON manifest into
its output directory.  The manifest records the config hash, code version,
derived constants, per-check results, and a SHA-256 content hash for every
output file; it is written in a preliminary form before the run starts and
finalized afterwards.  CSV outputs are byte-identical across reruns of the
same config and seed.

Exit codes: 0 all checks passed, 2 configuration or usage error, 3 one or
more numerical checks failed.
"""
import hashlib
import json
import os
import sys
from datetime import datetime, timezone
from importlib import metadata
from pathlib import Path

import click

from .experiments import CATALOG, ConfigError, run_experiment
from .fock import TruncationError

OUTPUT_ROOT_ENV = "STOQFT_OUTPUT_ROOT"
LOCK_NAME = ".stoqft.lock"
CONFIG_EXIT = 2
CHECK_EXIT = 3


def _package_version():
    try:
        return metadata.version("stoqft")
    except metadata.PackageNotFoundError:
        return "unknown"


def _sha256_bytes(data):
    return hashlib.sha256(data).hexdigest()


def _sha256_file(path):
    return _sha256_bytes(Path(path).read_bytes())


def _canonical_config(config):
    return json.dumps(config, sort_keys=True, separators=(",", ":")).encode()


def _format_cell(value):
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, complex):
        return repr(value)
    return str(value)


def _write_csv(path, header, rows):
    import csv
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_format_cell(v) for v in row])


def _render_figure(path, painter):
    import matplotlib
    matplotlib.use("Agg", force=True)
    import matplotlib.pyplot as plt
    fig, ax = plt.subplots(figsize=(6, 4))
    painter(ax)
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)


def _now():
    return datetime.now(timezone.utc).isoformat()


class OutputLock:
    """Exclusive per-directory lock so concurrent runs cannot interleave."""

    def __init__(self, directory):
        self.path = Path(directory) / LOCK_NAME
        self.fd = None

    def __enter__(self):
        try:
            self.fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise ConfigError(
                f"output directory is locked by another run ({self.path}); "
                "remove the lock file if that run is no longer alive")
        os.write(self.fd, str(os.getpid()).encode())
        return self

    def __exit__(self, *exc):
        if self.fd is not None:
            os.close(self.fd)
            self.path.unlink(missing_ok=True)


def _load_config(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            config = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}")
    if not isinstance(config, dict):
        raise ConfigError("config must be a JSON object")
    for field in ("experiment", "params"):
        if field not in config:
            raise ConfigError(f"missing config field(s): {field}")
    if config["experiment"] not in CATALOG:
        known = ", ".join(sorted(CATALOG))
        raise ConfigError(
            f"unknown experiment: {config['experiment']} (known: {known})")
    if not isinstance(config["params"], dict):
        raise ConfigError("config field params must be an object")
    return config


def _resolve_output_dir(config, override, config_hash):
    if override is not None:
        root = Path(override)
    elif "output_dir" in config:
        root = Path(config["output_dir"])
    else:
        root = Path(os.environ.get(OUTPUT_ROOT_ENV, "stoqft_runs"))
    name = config["experiment"].replace(".", "_") + "-" + config_hash[:12]
    return root / name


def _check_dict(report):
    d = report.to_dict()
    d["statistic"] = float(d["statistic"])
    return d


def execute_run(config, seed_override=None, output_override=None,
                threads=None, strict=False, echo=click.echo):
    """Run one experiment end to end; returns the process exit code."""
    experiment = config["experiment"]
    params = config["params"]
    seed = seed_override if seed_override is not None else config.get("seed", 0)
    config_hash = _sha256_bytes(_canonical_config(
        {"experiment": experiment, "params": params, "seed": seed}))
    outdir = _resolve_output_dir(config, output_override, config_hash)
    outdir.mkdir(parents=True, exist_ok=True)

    if threads:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                    "MKL_NUM_THREADS"):
            os.environ[var] = str(threads)

    manifest = {
        "experiment": experiment,
        "config_sha256": config_hash,
        "seed": int(seed),
        "threads": threads,
        "strict": bool(strict),
        "code_version": _package_version(),
        "started_at": _now(),
        "status": "running",
        "derived_constants": {},
        "checks": [],
        "outputs": {},
    }
    manifest_path = outdir / "manifest.json"

    with OutputLock(outdir):
        manifest_path.write_text(json.dumps(manifest, indent=2) + "\n",
                                 encoding="utf-8")
        try:
            result = run_experiment(experiment, params, seed)
        except TruncationError as exc:
            raise ConfigError(f"{exc}; loosen the truncation in params")

        for name, (header, rows) in result.tables.items():
            path = outdir / f"{name}.csv"
            _write_csv(path, header, rows)
            manifest["outputs"][path.name] = _sha256_file(path)
        for name, painter in result.figures.items():
            path = outdir / f"{name}.png"
            _render_figure(path, painter)
            manifest["outputs"][path.name] = _sha256_file(path)

        checks = list(result.checks)
        if strict:
            from .mcstats import TestReport
            for warning in result.warnings:
                checks.append(TestReport(name=f"strict:{warning}",
                                         statistic=1.0, threshold=0.0,
                                         passed=False))
        elif result.warnings:
            manifest["warnings"] = list(result.warnings)

        all_passed = all(c.passed for c in checks)
        manifest["derived_constants"] = {
            k: float(v) for k, v in result.derived.items()}
        manifest["checks"] = [_check_dict(c) for c in checks]
        manifest["finished_at"] = _now()
        manifest["status"] = "passed" if all_passed else "failed"
        manifest_path.write_text(json.dumps(manifest, indent=2) + "\n",
                                 encoding="utf-8")

    for c in checks:
        tag = "PASS" if c.passed else "FAIL"
        extra = f" p={c.p_value:.4g}" if c.p_value is not None else ""
        echo(f"[{tag}] {c.name}: statistic={c.statistic:.6g} "
             f"threshold={c.threshold:g}{extra}")
    echo(f"outputs written to {outdir}")
    return 0 if all_passed else CHECK_EXIT


@click.group()
def main():
    """Noise-driven quantum dynamics experiments."""


@main.command("run")
@click.argument("config_path", type=click.Path(exists=False))
@click.option("--seed", type=int, default=None,
              help="Override the seed from the config file.")
@click.option("--output", type=click.Path(), default=None,
              help="Output root directory (overrides config and "
                   f"${OUTPUT_ROOT_ENV}).")
@click.option("--threads", type=int, default=None,
              help="Thread cap recorded in the manifest and exported to "
                   "BLAS/OpenMP environment variables.")
@click.option("--strict", is_flag=True,
              help="Treat experiment warnings as check failures.")
def run_cmd(config_path, seed, output, threads, strict):
    """Run the experiment described by a JSON config file."""
    try:
        config = _load_config(config_path)
        code = execute_run(config, seed_override=seed, output_override=output,
                           threads=threads, strict=strict)
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(CONFIG_EXIT)
    sys.exit(code)


@main.command("list")
def list_cmd():
    """List the experiment catalog."""
    width = max(len(name) for name in CATALOG)
    for name in sorted(CATALOG):
        click.echo(f"{name:<{width}}  {CATALOG[name]['summary']}")


@main.command("describe")
@click.argument("experiment")
def describe_cmd(experiment):
    """Show the parameter schema and checked relations of one experiment."""
    if experiment not in CATALOG:
        click.echo(f"config error: unknown experiment: {experiment}", err=True)
        sys.exit(CONFIG_EXIT)
    entry = CATALOG[experiment]
    click.echo(experiment)
    click.echo("  " + entry["summary"])
    click.echo("  parameters:")
    for key, desc in entry["schema"].items():
        click.echo(f"    {key}: {desc}")
    click.echo("  checked relations:")
    for ref in entry["references"]:
        click.echo(f"    {ref}")


@main.command("selftest")
@click.option("--seed", type=int, default=0)
@click.option("--output", type=click.Path(), default=None)
def selftest_cmd(seed, output):
    """Run a fast noise self-test and report pass/fail."""
    config = {
        "experiment": "noise.selftest",
        "params": {"T": 1.0, "L": 4.0, "Nt": 4, "Nx": 4, "n_draws": 400},
        "seed": seed,
    }
    try:
        code = execute_run(config, output_override=output)
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(CONFIG_EXIT)
    sys.exit(code)


if __name__ == "__main__":
    main()
