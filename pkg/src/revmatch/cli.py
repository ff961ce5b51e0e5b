"""Command line entry points, one subcommand per pipeline stage.

Exit codes: 0 on success (including an up-to-date skip), 1 on a
configuration problem, 2 when a prerequisite artifact is missing.
"""

from __future__ import annotations

import logging
import sys
from pathlib import Path

import click

from .errors import RevmatchError
from .pipeline import MissingPrerequisite, Paths, load_config, run_stage


def _common_options(fn):
    fn = click.option("--config", "config_path", type=click.Path(), default=None,
                      help="Pipeline config file (key = value lines).")(fn)
    fn = click.option("--seed", type=int, default=None, help="Master seed override.")(fn)
    fn = click.option("--stub/--no-stub", "stub", default=None,
                      help="Use the deterministic offline text service.")(fn)
    fn = click.option("--stage-dir", type=click.Path(), default="stage", show_default=True,
                      help="Directory holding all pipeline artifacts.")(fn)
    fn = click.option("--jobs", type=int, default=None, help="Worker threads.")(fn)
    return fn


@click.group()
def main() -> None:
    """Reviewer-matching pipeline over file artifacts."""
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")


def _run(stage: str, config_path, seed, stub, stage_dir, jobs) -> None:
    try:
        cfg = load_config(config_path, seed=seed, stub=stub, jobs=jobs)
        ran = run_stage(stage, cfg, Paths(Path(stage_dir)))
    except MissingPrerequisite as exc:
        click.echo(f"{stage}: missing prerequisite: {exc.path}", err=True)
        sys.exit(2)
    except RevmatchError as exc:
        click.echo(f"{stage}: {exc}", err=True)
        sys.exit(1)
    click.echo(f"{stage}: {'done' if ran else 'up to date, skipped'}")


def _stage_command(name: str, help_text: str):
    @main.command(name, help=help_text)
    @_common_options
    def command(config_path, seed, stub, stage_dir, jobs):
        _run(name, config_path, seed, stub, stage_dir, jobs)

    return command


_stage_command("synth", "Generate a synthetic corpus and the bundled taxonomy.")
_stage_command("ingest", "Validate the corpus and write normalized copies.")
_stage_command("link", "Match scholar identities across the two sources.")
_stage_command("classify", "Assign every publication to a leaf category.")
_stage_command("build-pools", "Fill candidate pools and write the data splits.")
_stage_command("profile", "Embed papers and candidate publication profiles.")
_stage_command("train", "Train the mixture model in two stages.")
_stage_command("evaluate", "Score the test split and write metric reports.")


@main.command("report", help="Print the latest evaluation table.")
@_common_options
def report(config_path, seed, stub, stage_dir, jobs) -> None:
    path = Paths(Path(stage_dir)).report_text
    if not path.exists():
        click.echo(f"report: missing prerequisite: {path}", err=True)
        sys.exit(2)
    click.echo(path.read_text("utf-8"), nl=False)


if __name__ == "__main__":
    main()
