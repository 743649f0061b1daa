"""Command line entry point: ``aqlab solve | frequency | catalog | verify``.

Exit codes: 0 success, 1 numerical failure or failed verification,
2 usage or configuration error.  Failures print one JSON object to stderr
and, when an output directory is known, also write it to error.json.
"""
from __future__ import annotations

import json
import math
import sys
from pathlib import Path
from types import SimpleNamespace

import click
import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__, io

EXIT_OK, EXIT_NUMERIC, EXIT_USAGE = 0, 1, 2


def _fail(code: int, kind: str, message: str, out_dir: Path | None = None):
    err = {"error": kind, "message": message, "exit_code": code}
    text = io.dumps(err)
    if out_dir is not None:
        try:
            Path(out_dir).mkdir(parents=True, exist_ok=True)
            (Path(out_dir) / "error.json").write_text(text, encoding="utf-8")
        except OSError:
            pass
    click.echo(text, err=True, nl=False)
    sys.exit(code)


def _guarded(fn, out_dir=None):
    """Run fn, mapping library errors onto exit codes."""
    from .solver import NumericalFailure
    from .traces import ResolutionError

    try:
        return fn()
    except io.ConfigError as exc:
        _fail(EXIT_USAGE, "config", str(exc), out_dir)
    except ResolutionError as exc:
        _fail(EXIT_NUMERIC, "resolution", str(exc), out_dir)
    except (NumericalFailure, FloatingPointError, np.linalg.LinAlgError) as exc:
        _fail(EXIT_NUMERIC, "numerical", str(exc), out_dir)
    except ValueError as exc:
        _fail(EXIT_NUMERIC, "rejected", str(exc), out_dir)


def _out_dir(cfg: dict, config_path: Path, out: str | None) -> Path:
    if out:
        return Path(out)
    if "output_dir" in cfg:
        p = Path(cfg["output_dir"])
        return p if p.is_absolute() else config_path.parent / p
    return Path("aqlab-out") / cfg.get("name", config_path.stem)


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.version_option(__version__, prog_name="aqlab")
@click.option("--threads", type=click.IntRange(min=1), default=None, help="Cap BLAS/FFT worker threads.")
@click.option("--ci", is_flag=True, help="Single-threaded deterministic mode.")
@click.pass_context
def main(ctx, threads, ci):
    """Numerical laboratory for half-integer multi-valued Dirichlet minimizers."""
    limit = 1 if ci else threads
    if limit is not None:
        ctx.with_resource(threadpool_limits(limits=limit))


def _run(config, out, force=None):
    from . import pipeline

    config = Path(config)
    cfg = _guarded(lambda: io.load_config(config), out)
    if force:
        cfg = {**cfg, "analysis": {**cfg.get("analysis", {}), **force}}
    out_dir = _out_dir(cfg, config, out)
    manifest = _guarded(lambda: pipeline.run(cfg, out_dir, base=config.parent), out_dir)
    return out_dir, manifest


@main.command()
@click.argument("config", type=click.Path(dir_okay=False))
@click.option("--out", type=click.Path(file_okay=False), default=None, help="Output directory.")
def solve(config, out):
    """Run the full pipeline described by CONFIG."""
    out_dir, manifest = _run(config, out)
    summary = json.loads((out_dir / "solve.json").read_text(encoding="utf-8"))
    click.echo(f"energy {summary['energy']:.10g}  blocks {len(summary['blocks'])}")
    click.echo(f"manifest {manifest}")


@main.command()
@click.argument("config", type=click.Path(dir_okay=False))
@click.option("--out", type=click.Path(file_okay=False), default=None, help="Output directory.")
def frequency(config, out):
    """Run CONFIG with the frequency, tangent and decay analyses switched on."""
    out_dir, manifest = _run(config, out, {"frequency": True, "tangent": True, "decay": True})
    fj = out_dir / "frequency.json"
    if not fj.exists():
        _fail(EXIT_NUMERIC, "numerical", "trace vanishes; the frequency is undefined", out_dir)
    f = json.loads(fj.read_text(encoding="utf-8"))
    click.echo(f"alpha {f['alpha']:.8g}  spread {f['alpha_spread']:.3e}  monotone violation "
               f"{f['monotone_violation']:.3e}  verdict {f['verdict']}")
    tj = out_dir / "tangent.json"
    if tj.exists():
        t = json.loads(tj.read_text(encoding="utf-8"))
        click.echo(f"tangent case {t['classification']['case']}  residual {t['classification']['residual']:.3e}")
    click.echo(f"manifest {manifest}")


def _vector(text):
    if text is None:
        return None
    try:
        return [float(v) for v in text.split(",")]
    except ValueError as exc:
        raise click.BadParameter(f"expected comma separated numbers, got {text!r}") from exc


def _block(text):
    parts = text.split(":")
    if len(parts) != 3:
        raise click.BadParameter(f"block must look like k:a1,a2:b1,b2, got {text!r}")
    try:
        return int(parts[0]), _vector(parts[1]), _vector(parts[2])
    except ValueError as exc:
        raise click.BadParameter(str(exc)) from exc


@main.command()
@click.argument("case", type=click.Choice(["a", "b", "c"]))
@click.option("--n", "n", type=click.IntRange(min=1), default=1, show_default=True)
@click.option("--k0", type=click.IntRange(min=1), default=1, show_default=True)
@click.option("--c", "c", default=None, help="Comma separated vector c (cases a and c).")
@click.option("--l", "l", type=int, default=None, help="Degree l (case a).")
@click.option("--n-star", type=int, default=None, help="Winding numerator n* (case b).")
@click.option("--q-star", type=int, default=None, help="Winding denominator Q* (case b).")
@click.option("--block", "blocks", multiple=True, help="Block k:a:b with comma separated vectors; repeatable.")
@click.option("--out", type=click.Path(file_okay=False), default=None, help="Write sheet heatmaps here.")
@click.option("--angles", type=int, default=128, show_default=True, help="Angular samples for the figures.")
def catalog(case, n, k0, c, l, n_star, q_star, blocks, out, angles):
    """Print a homogeneous catalog map with its closed-form quantities."""
    from .catalog import catalog as build
    from .geometry import HalfDiskMesh
    from . import plots

    bl = [_block(b) for b in blocks]
    cv = _vector(c)
    if case in ("a", "c") and cv is None:
        cv = [1.0] + [0.0] * (n - 1)
    try:
        f = build(case, n=n, k0=k0, c=cv, blocks=bl, l=l, n_star=n_star, q_star=q_star)
    except ValueError as exc:
        _fail(EXIT_USAGE, "usage", str(exc), out)
    info = {"map": f.to_json(), "Q": f.q, "alpha": float(f.alpha), "energy": f.energy(),
            "boundary_mass": f.boundary_mass(), "boundary_energy": f.boundary_energy(),
            "frequency": f.energy() / f.boundary_mass() if f.boundary_mass() > 0 else math.nan,
            "avgsym_residual": f.avgsym_residual()}
    click.echo(io.dumps(info), nl=False)
    if out:
        out_dir = Path(out)
        out_dir.mkdir(parents=True, exist_ok=True)
        mesh = HalfDiskMesh.square(angles, 1e-4)
        view = SimpleNamespace(f=f.on_mesh(mesh), decomposition=None)
        entries = []
        for p in plots.sheet_heatmaps(view, out_dir):
            io.validate_artifact(p, "svg")
            entries.append((p.name, "svg"))
        io.write_json(out_dir / "catalog.json", info)
        entries.append(("catalog.json", "catalog"))
        io.write_manifest(out_dir, entries)


@main.command()
@click.argument("suite")
def verify(suite):
    """Run one acceptance suite and print its table."""
    from . import suites

    if suite not in suites.SUITES:
        _fail(EXIT_USAGE, "usage", f"unknown suite {suite!r}; choose from {', '.join(suites.SUITES)}")
    rows = _guarded(lambda: suites.run_suite(suite))
    click.echo(suites.format_table(rows))
    ok = all(r.passed for r in rows)
    click.echo(f"{suite}: {'pass' if ok else 'FAIL'}")
    sys.exit(EXIT_OK if ok else EXIT_NUMERIC)


if __name__ == "__main__":  # pragma: no cover
    main()
