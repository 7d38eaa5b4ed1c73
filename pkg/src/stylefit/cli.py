"""Command-line interface.

Exit codes: 0 success, 1 invalid input or configuration, 2 runtime
failure, 3 self-check failure.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path
from typing import Any, Callable

import click

from . import __version__
from .backend import MockBackend, build_backend
from .config import config_to_json, load_config
from .errors import InputError, StylefitError
from .sampler import TryOnJobSpec, run_edit, run_tryon


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.version_option(version=__version__, prog_name="stylefit")
def cli() -> None:
    """Fashion editing and virtual try-on toolkit."""


def _job_options(fn: Callable) -> Callable:
    options = [
        click.option("--config", "config_path", type=click.Path(), default=None, help="Config file (YAML or JSON)."),
        click.option("--person", type=click.Path(), default=None, help="Person image (PNG)."),
        click.option("--garment-mask", type=click.Path(), default=None, help="Garment mask (PNG)."),
        click.option("--sketch", type=click.Path(), default=None, help="Sketch drawing (PNG)."),
        click.option("--image-prompt", type=click.Path(), default=None, help="Image prompt (PNG)."),
        click.option("--text", default=None, help="Text prompt."),
        click.option("--style-scale", type=float, default=None, help="Style conditioning scale."),
        click.option("--content-scale", type=float, default=None, help="Content conditioning scale."),
        click.option("--sketch-scale", type=float, default=None, help="Sketch conditioning scale."),
        click.option("--text-scale", type=float, default=None, help="Text conditioning scale."),
        click.option("--alpha", type=float, default=None, help="Garment removal strength in [0, 1]."),
        click.option("--seed", type=int, default=None, help="Deterministic seed."),
        click.option("--steps", type=int, default=None, help="Denoising steps."),
        click.option("--out", type=click.Path(), default="out.png", show_default=True, help="Output image path."),
        click.option("--print-config", is_flag=True, help="Print the resolved configuration and exit."),
    ]
    for option in reversed(options):
        fn = option(fn)
    return fn


def _build_spec(cfg: dict[str, Any], **flags: Any) -> TryOnJobSpec:
    """Resolve flag > config > default for every job field."""
    inj = cfg["injection"]

    def pick(flag_value, config_value):
        return flag_value if flag_value is not None else config_value

    return TryOnJobSpec(
        person=flags["person"],
        garment_mask=flags["garment_mask"],
        sketch=flags["sketch"],
        image_prompt=flags["image_prompt"],
        text_prompt=flags["text"],
        style_scale=float(pick(flags["style_scale"], inj["style_scale"])),
        content_scale=float(pick(flags["content_scale"], inj["content_scale"])),
        sketch_scale=float(pick(flags["sketch_scale"], inj["sketch_scale"])),
        text_scale=float(pick(flags["text_scale"], inj["text_scale"])),
        alpha=float(pick(flags["alpha"], cfg["removal"]["alpha"])),
        seed=int(pick(flags["seed"], 0)),
        steps=int(pick(flags["steps"], cfg["backend"]["steps"])),
    )


def _run_job(kind: str, **flags: Any) -> None:
    cfg = load_config(flags["config_path"])
    if flags["print_config"]:
        click.echo(config_to_json(cfg))
        return
    if flags["person"] is None:
        raise InputError("--person is required")
    spec = _build_spec(cfg, **flags)
    cfg["backend"]["steps"] = spec.steps
    backend = build_backend(cfg)
    run = run_tryon if kind == "tryon" else run_edit
    result = run(spec, backend, cfg, root=Path.cwd())

    from .embeddings import save_image

    out = Path(flags["out"])
    save_image(result.image, out)
    record = {
        "kind": kind,
        "spec": spec.to_wire(),
        "backend": {
            "kind": cfg["backend"]["kind"],
            "steps": spec.steps,
            "guidance_scale": cfg["backend"]["guidance_scale"],
            "spatial_factor": cfg["backend"]["spatial_factor"],
            "latent_channels": cfg["backend"]["latent_channels"],
        },
        "injection_blocks": {
            "style": list(cfg["injection"]["style_blocks"]),
            "content": list(cfg["injection"]["content_blocks"]),
        },
        "diagnostics": result.diagnostics(),
    }
    sidecar = out.with_suffix(".json")
    sidecar.write_text(json.dumps(record, indent=2, sort_keys=True))
    for note in result.warnings:
        click.echo(f"note: {note}", err=True)
    click.echo(f"wrote {out} and {sidecar}")


@cli.command()
@_job_options
def tryon(**flags: Any) -> None:
    """Try a garment on a person image (erases the current garment from the latent first)."""
    _run_job("tryon", **flags)


@cli.command()
@_job_options
def edit(**flags: Any) -> None:
    """Re-paint masked regions under prompt guidance without garment removal."""
    _run_job("edit", **flags)


@cli.command()
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--out", "out_dir", type=click.Path(), default="block_report", show_default=True)
@click.option("--words", default="patterned,textured", show_default=True, help="Comma-separated content words.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--figure/--no-figure", default=True, show_default=True)
def blocks(config_path: str | None, out_dir: str, words: str, seed: int, figure: bool) -> None:
    """Analyze per-block injection sensitivity on the mock backend and
    report the recommended style/content routing."""
    import numpy as np

    from .embeddings import MockImageEncoder
    from .evalsuite import MockJointEncoder
    from .injection import analyze_block_sensitivity
    from .reports import plot_block_sensitivity, write_block_table
    from .selfcheck import _quadrant_probe

    cfg = load_config(config_path)
    backend = MockBackend.with_reference_block_profile(steps=min(10, int(cfg["backend"]["steps"])))
    joint = MockJointEncoder()
    structure_axis = np.zeros(joint.dim)
    structure_axis[MockJointEncoder.FEATURES.index("lum_spread")] = 1.0
    word_list = [w.strip() for w in words.split(",") if w.strip()]
    for word in word_list:
        # In the mock joint space, "content" is luminance structure.
        joint.register(word, structure_axis)
    report = analyze_block_sensitivity(
        [_quadrant_probe()], word_list, backend, MockImageEncoder(), joint, seed=seed
    )
    out = Path(out_dir)
    table = write_block_table(report, out / "blocks.tsv")
    click.echo(table.read_text().rstrip())
    if figure:
        fig = plot_block_sensitivity(report, out / "blocks.png")
        click.echo(f"figure: {fig}")
    style, content = report.recommend()
    click.echo(f"recommended style blocks: {list(style)}")
    click.echo(f"recommended content blocks: {list(content)}")


@cli.command("eval")
@click.option("--manifest", "manifest_path", type=click.Path(), required=False, help="Metrics manifest (JSONL).")
@click.option("--out", "out_dir", type=click.Path(), default="eval_report", show_default=True)
@click.option("--tournament", "tournament_dirs", multiple=True, metavar="NAME=DIR", help="Method result directories for an Elo tournament.")
@click.option("--oracle", "oracle_kind", default="stub:coin", show_default=True, help="stub:coin | stub:first | stub:tie | http")
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--figure/--no-figure", default=True, show_default=True)
def eval_cmd(
    manifest_path: str | None,
    out_dir: str,
    tournament_dirs: tuple[str, ...],
    oracle_kind: str,
    config_path: str | None,
    seed: int,
    figure: bool,
) -> None:
    """Aggregate a metrics manifest into a method-by-metric table, and
    optionally run an Elo tournament over result directories."""
    from .evalsuite import HttpJudgeOracle, StubOracle, aggregate_manifest, read_manifest, run_tournament
    from .reports import plot_elo_ratings, plot_metric_means, write_metric_table

    if manifest_path is None and not tournament_dirs:
        raise InputError("provide --manifest and/or --tournament entries")
    cfg = load_config(config_path)
    out = Path(out_dir)
    if manifest_path is not None:
        aggregates = aggregate_manifest(read_manifest(manifest_path))
        table = write_metric_table(aggregates, out / "metrics.tsv")
        click.echo(table.read_text().rstrip())
        if figure:
            fig = plot_metric_means(aggregates, out / "metrics.png")
            click.echo(f"figure: {fig}")
    if tournament_dirs:
        methods: dict[str, str] = {}
        for item in tournament_dirs:
            name, sep, directory = item.partition("=")
            if not sep or not name or not directory:
                raise InputError(f"--tournament entries look like NAME=DIR, got {item!r}")
            methods[name] = directory
        if oracle_kind.startswith("stub:"):
            oracle = StubOracle(mode=oracle_kind.partition(":")[2], seed=seed)
        elif oracle_kind == "http":
            oracle = HttpJudgeOracle.from_config(cfg["oracle"])
        else:
            raise InputError(f"unknown oracle kind {oracle_kind!r}")
        report = run_tournament(
            methods,
            oracle,
            n_shuffles=int(cfg["elo"]["n_shuffles"]),
            seed=seed,
            k_factor=float(cfg["elo"]["k_factor"]),
            initial_rating=float(cfg["elo"]["initial_rating"]),
        )
        out.mkdir(parents=True, exist_ok=True)
        lines = ["method\trating_mean\trating_std"]
        for name in sorted(report.mean_ratings):
            lines.append(f"{name}\t{report.mean_ratings[name]:.3f}\t{report.std_ratings[name]:.3f}")
        ratings = out / "ratings.tsv"
        ratings.write_text("\n".join(lines) + "\n")
        click.echo(ratings.read_text().rstrip())
        if figure:
            fig = plot_elo_ratings(report.mean_ratings, report.std_ratings, out / "ratings.png")
            click.echo(f"figure: {fig}")
        if report.skipped:
            click.echo(f"skipped {len(report.skipped)} matches (oracle failures)", err=True)


@cli.command()
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--host", default=None, help="Bind address (overrides config).")
@click.option("--port", type=int, default=None, help="Port (overrides config).")
def serve(config_path: str | None, host: str | None, port: int | None) -> None:
    """Run the HTTP job service."""
    overrides: dict[str, Any] = {"service": {}}
    if host is not None:
        overrides["service"]["host"] = host
    if port is not None:
        overrides["service"]["port"] = port
    cfg = load_config(config_path, overrides=overrides)
    from .service import serve as run_service

    run_service(cfg)


@cli.command()
def selfcheck() -> None:
    """Run the built-in property suite on the mock backend."""
    from .selfcheck import run_selfcheck

    results = run_selfcheck()
    failed = [r for r in results if not r.ok]
    for r in results:
        status = "PASS" if r.ok else "FAIL"
        detail = f"  ({r.detail})" if r.detail else ""
        click.echo(f"{status}  {r.name}{detail}")
    click.echo(f"{len(results) - len(failed)}/{len(results)} checks passed")
    if failed:
        sys.exit(3)


def main() -> None:
    try:
        cli(standalone_mode=False)
    except click.UsageError as exc:
        click.echo(f"error: {exc.format_message()}", err=True)
        sys.exit(1)
    except click.ClickException as exc:
        exc.show()
        sys.exit(1)
    except click.Abort:
        click.echo("aborted", err=True)
        sys.exit(2)
    except InputError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    except StylefitError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    except OSError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)


if __name__ == "__main__":
    main()
