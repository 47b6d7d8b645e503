"""``bulkbench`` command line interface.

Exit codes: 0 success, 1 verification or integrity failure, 2 usage error.
"""

from __future__ import annotations

import sys

import click

from . import bench
from .errors import BulkIOError
from .format import BranchShape, Codec, ElementType, ShapeKind

_TYPE_NAMES = {t.name.lower(): t for t in ElementType}
_CODEC_NAMES = {c.name.lower(): c for c in Codec}


def _parse_shape(text: str) -> BranchShape:
    if text == "scalar":
        return BranchShape(ShapeKind.SCALAR)
    if text == "var":
        return BranchShape(ShapeKind.VAR_ARRAY)
    if text.startswith("fixed:"):
        try:
            k = int(text.split(":", 1)[1])
        except ValueError:
            k = 0
        if k >= 1:
            return BranchShape(ShapeKind.FIXED_ARRAY, fixed_len=k)
    raise click.UsageError(
        f"bad shape {text!r}; expected scalar, fixed:K or var")


@click.group()
def main() -> None:
    """Columnar event storage benchmark harness."""


@main.command()
@click.option("--entries", type=int, required=True, help="Number of events.")
@click.option("--type", "type_", default="f32",
              type=click.Choice(sorted(_TYPE_NAMES)), help="Element type.")
@click.option("--shape", default="scalar", help="scalar, fixed:K or var.")
@click.option("--basket-entries", default=bench.DEFAULT_BASKET_CAPACITY,
              type=int, show_default=True, help="Entries per basket.")
@click.option("--codec", default="none", type=click.Choice(sorted(_CODEC_NAMES)),
              show_default=True, help="Basket compression.")
@click.option("--out", type=click.Path(dir_okay=False), required=True,
              help="Output file path.")
def generate(entries: int, type_: str, shape: str, basket_entries: int,
             codec: str, out: str) -> None:
    """Write a deterministic benchmark file (value ramp)."""
    try:
        stats = bench.generate(
            entries,
            etype=_TYPE_NAMES[type_],
            shape=_parse_shape(shape),
            basket_capacity=basket_entries,
            codec=_CODEC_NAMES[codec],
            out=out,
        )
    except BulkIOError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    click.echo(
        f"wrote {out}: {stats.n_entries} entries, {stats.n_baskets} baskets, "
        f"{stats.bytes_written} bytes"
    )


@main.command()
@click.option("--file", "path", type=click.Path(exists=True, dir_okay=False),
              required=True, help="Benchmark file.")
@click.option("--scenario", default="all",
              help="Comma-separated scenario ids, or 'all'.")
@click.option("--repeat", default=3, type=int, show_default=True,
              help="Repetitions per scenario.")
@click.option("--csv", "csv_path", type=click.Path(dir_okay=False),
              default=None, help="Also write records to this CSV file.")
def run(path: str, scenario: str, repeat: int, csv_path: str | None) -> None:
    """Time read scenarios on a file; correctness gates the timings."""
    if repeat < 1:
        raise click.UsageError("--repeat must be >= 1")
    if scenario == "all":
        ids = list(bench.SCENARIOS)
    else:
        ids = [s.strip() for s in scenario.split(",") if s.strip()]
        unknown = [s for s in ids if s not in bench.SCENARIOS]
        if unknown:
            raise click.UsageError(
                f"unknown scenario(s): {', '.join(unknown)}; "
                f"known: {', '.join(bench.SCENARIOS)}"
            )
        if not ids:
            raise click.UsageError("no scenarios given")
    try:
        records = bench.run(path, ids, repeat=repeat)
        if csv_path:
            bench.report(records, csv_path)
    except BulkIOError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    medians = bench.median_walls(records)
    checksum = records[0].checksum
    click.echo(f"file: {path}  entries: {records[0].n_entries}  "
               f"checksum: {checksum!r}")
    click.echo("medians over repetitions (repetition 0 is cold-cache):")
    for sid in ids:
        wall = medians[sid]
        rate = records[0].n_entries / wall if wall > 0 else float("inf")
        click.echo(f"  {sid:14s} {wall:10.4f} s   {rate:14.0f} events/s")
    if csv_path:
        click.echo(f"records written to {csv_path}")


@main.command()
@click.option("--file", "path", type=click.Path(exists=True, dir_okay=False),
              required=True, help="File to verify.")
def verify(path: str) -> None:
    """Cross-check every read path on every basket of a file."""
    result = bench.verify(path)
    for line in result.lines():
        click.echo(line)
    if not result.passed:
        sys.exit(1)


if __name__ == "__main__":
    main()
