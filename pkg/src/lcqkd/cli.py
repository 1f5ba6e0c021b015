"""Command line entry point: ``lcqkd simulate | curve | reconcile | report``."""
import sys

import click

from .harness import load_config, load_reports, run_experiment


def _common(f):
    f = click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
                     help="Flat TOML experiment config.")(f)
    f = click.option("--seed", type=int, help="Master RNG seed.")(f)
    f = click.option("--trials", type=int, help="Number of protocol rounds.")(f)
    f = click.option("--out", type=click.Path(file_okay=False), help="Output directory.")(f)
    f = click.option("--strategy", type=click.Choice(
        ["absent", "blind_guess", "intercept_first_half", "full_capture_delay"]),
        help="Eavesdropper strategy.")(f)
    f = click.option("--workers", type=int, help="Worker processes for the rounds.")(f)
    return f


def _run(config_path, **overrides):
    try:
        cfg = load_config(config_path, **overrides)
    except ValueError as exc:
        raise click.UsageError(str(exc))
    report = run_experiment(cfg)
    for line in report.lines():
        click.echo(line)
    sys.exit(0 if report.passed else 1)


@click.group()
def main():
    """Monte Carlo checks of a light-cone QKD protocol."""


@main.command()
@_common
@click.option("--kind", type=click.Choice(["round_stats", "full_session"]), default=None,
              help="round_stats (default) or full_session (rounds + reconciliation).")
def simulate(config_path, kind, **kw):
    """Run protocol rounds and compare frequencies with the analytic values."""
    if kind is None:
        kind = "round_stats"
    _run(config_path, kind=kind, **kw)


@main.command()
@_common
def curve(config_path, **kw):
    """Distinguishability of the two bit states against window length (CSV)."""
    _run(config_path, kind="distinguishability_curve", **kw)


@main.command()
@_common
def reconcile(config_path, **kw):
    """Noise estimation, block coding and hashing on simulated keys."""
    _run(config_path, kind="reconciliation", **kw)


@main.command()
@click.option("--out", type=click.Path(file_okay=False, exists=True), default="out")
def report(out):
    """Summarize every *_report.json in OUT; exit 0 iff all claims pass."""
    reports = load_reports(out)
    if not reports:
        raise click.UsageError(f"no reports found in {out}")
    ok = True
    for rep in reports:
        click.echo(f"[{rep.kind}] seed={rep.seed}")
        for line in rep.lines():
            click.echo("  " + line)
        ok &= rep.passed
    sys.exit(0 if ok else 1)


if __name__ == "__main__":
    main()
