"""Config-driven experiment runs: reduce, decompose, solve, analyze, persist."""
from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from . import experiments as X
from . import io, plots
from .catalog import catalog
from .frequency import (check_monotone, compute_beta, fit_decay, innervar_residual, profile, ratio_bounds_violation,
                        tangent, tmpH_residual)
from .geometry import AnalyticInterface, HalfDiskMesh, add_interface, avgsym_residual, harmonic_extend, straighten
from .singular import detect_singularities
from .solver import DecayCheck, decay_sides, relax_oracle, solve_branched
from .traces import TraceLoop

DEFAULT_ANALYSIS = {"frequency": True, "tangent": True, "singularities": True, "decay": True, "oracle": False,
                    "save_solution": False}

FIXTURES = {
    "x2": lambda eps: X.x2_map(),
    "perturbed-c": X.perturbed_c,
    "perturbed-q1": X.perturbed_q1,
    "perturbed-b": X.perturbed_b,
    "crossing-a": lambda eps: X.crossing_a(),
}


def _modes_map(spec, n):
    groups = []
    if spec.get("k0"):
        groups.append(X.zero_sheets(int(spec["k0"]), n))
    if "half" in spec:
        h = spec["half"]
        groups.append(X.half_block(int(h["q0"]), {int(l): c for l, c in h["modes"].items()}, n))
    for b in spec.get("full", []):
        groups.append(X.full_block(int(b["q"]), {int(p): (ab[0], ab[1]) for p, ab in b["modes"].items()}, n,
                                   int(b.get("k", 1))))
    return X.modal(n, *groups, name="modes")


def build_trace(cfg: dict, base: Path | None = None) -> TraceLoop:
    """The reduced boundary trace (interface data (R, 0)) described by the config."""
    tr = cfg["trace"]
    n = int(cfg["n"])
    m = int(cfg["mesh"]["angles"]) // 2
    kind = tr["kind"]
    try:
        if kind == "catalog":
            f = catalog(tr["case"], n=n, k0=int(tr.get("k0", 1)), c=tr.get("c"), blocks=tr.get("blocks", ()),
                        l=tr.get("l"), n_star=tr.get("n_star"), q_star=tr.get("q_star"))
            g = f.trace(m)
        elif kind == "fixture":
            if tr.get("name") not in FIXTURES:
                raise io.ConfigError(f"unknown fixture {tr.get('name')!r}; choose from {sorted(FIXTURES)}")
            g = FIXTURES[tr["name"]](float(tr.get("eps", 0.25))).trace(m)
        elif kind == "modes":
            g = _modes_map(tr, n).trace(m)
        elif kind == "random_fourier":
            rng = np.random.default_rng(int(cfg.get("seed", 0)))
            g = X.random_fourier(rng, max_q=int(cfg["Q"]), n=n, modes=int(tr.get("modes", 3))).trace(m)
        else:
            p = Path(tr["path"])
            if not p.is_absolute() and base is not None:
                p = base / p
            g = TraceLoop.from_json(json.loads(p.read_text(encoding="utf-8")))
    except (KeyError, TypeError) as exc:
        raise io.ConfigError(f"trace specification incomplete: {exc}") from exc
    except ValueError as exc:
        if isinstance(exc, io.ConfigError):
            raise
        raise io.ConfigError(f"trace specification rejected: {exc}") from exc
    if g.q != int(cfg["Q"]) or g.n != n:
        raise io.ConfigError(f"trace has Q={g.q}, n={g.n} but the config says Q={cfg['Q']}, n={n}")
    if g.m != m:
        raise io.ConfigError("trace sampling does not match mesh.angles")
    return g


def _mesh(cfg) -> HalfDiskMesh:
    mc = cfg["mesh"]
    if "rings" in mc:
        return HalfDiskMesh(int(mc["rings"]), int(mc["angles"]), float(mc["r_min"]))
    return HalfDiskMesh.square(int(mc["angles"]), float(mc["r_min"]))


def run(cfg: dict, out_dir: Path, base: Path | None = None) -> Path:
    """Execute one experiment; returns the manifest path.

    Raises io.ConfigError for configuration problems and lets numerical
    failures propagate to the caller, which maps them to exit codes.
    """
    io.validate_config(cfg, base)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    analysis = {**DEFAULT_ANALYSIS, **cfg.get("analysis", {})}
    entries = []

    def emit(name, kind):
        io.validate_artifact(out / name, kind)
        entries.append((name, kind))

    io.write_json(out / "config.json", cfg)
    emit("config.json", "config")

    g = build_trace(cfg, base)
    mesh = _mesh(cfg)
    n = int(cfg["n"])

    # reduction: straighten the interface and subtract the harmonic extension of phi
    reduction = {}
    taylor = cfg.get("taylor") or []
    if any(taylor):
        radius = float(cfg["mesh"].get("radius", 1.0))
        try:
            st = straighten(AnalyticInterface(tuple(taylor), (), n), radius)
        except ValueError as exc:
            raise io.ConfigError(str(exc)) from exc
        z = radius * np.exp(1j * np.linspace(0, 2 * np.pi, 257))
        reduction["straightening_derivative_gap"] = float(np.abs(st.derivative(z) - 1).max())
        reduction["straightening_inverse_residual"] = float(np.abs(st.inverse(st.forward(0.9 * z)) - 0.9 * z).max())
    ext = None
    if any(np.any(np.asarray(c, dtype=float)) for c in cfg.get("phi_poly") or []):
        try:
            ext = harmonic_extend(cfg["phi_poly"], n)
        except ValueError as exc:
            raise io.ConfigError(str(exc)) from exc
        if cfg["trace"]["kind"] == "file":
            # file traces carry the actual data: subtract the extension sheetwise
            th_l = np.linspace(np.pi, 2 * np.pi, g.m + 1)
            eu = ext(np.cos(g.theta_upper), np.sin(g.theta_upper))[:, None, :]
            el = ext(np.cos(th_l), np.sin(th_l))[:, None, :]
            g = TraceLoop(g.upper - eu, g.lower - el)
            reduction["reduced_interface_residual"] = g.interface_residual()
        # other trace kinds describe the reduced data; the extension is added back afterwards
    if g.lower.shape[1]:
        io.write_json(out / "trace.json", g.to_json())
        emit("trace.json", "trace")

    res = solve_branched(g, mesh=mesh)
    f_out = add_interface(res.f, ext) if ext is not None else res.f
    if ext is not None:
        reduction["interface_with_phi"] = f_out.interface_residual()
    summary = res.to_json()
    summary["residuals"] = {**summary["residuals"], **reduction, "avgsym": avgsym_residual(res.f)}

    if analysis["decay"]:
        checks = [DecayCheck(*row) for row in zip(*decay_sides(res))][1:]
        summary["decay"] = {"constant": 3 * res.f.q, "rings": len(checks),
                            "holds_everywhere": all(c.holds for c in checks),
                            "worst_ratio": max(c.lhs / c.rhs if c.rhs > 0 else 0.0 for c in checks)}
    if analysis["oracle"]:
        init = X.radial_extension(g, mesh)
        orc = relax_oracle(g, init, iters=50)
        summary["oracle"] = {"energy": orc.energy, "iterations": len(orc.history) - 1,
                             "relative_gap": (orc.energy - res.energy) / max(res.energy, 1e-300)}
    io.write_json(out / "solve.json", summary)
    emit("solve.json", "solve")

    if analysis["save_solution"]:
        io.write_json(out / "solution.json", f_out.to_json())
        emit("solution.json", "solution")

    for p in plots.sheet_heatmaps(res, out):
        emit(p.name, "svg")

    zero = not np.abs(g.upper).max(initial=0.0) > 0
    tg = None
    if analysis["frequency"] and not zero:
        p = profile(res)
        io.write_csv(out / "profile.csv", io.CSV_HEADERS["profile"], p.rows())
        emit("profile.csv", "profile")
        fsum = {"alpha": p.alpha, "alpha_spread": p.alpha_spread, "monotone_violation": check_monotone(p),
                "hder_residual": p.hder_residual, "log_derivative_residual": tmpH_residual(p),
                "inner_variation_residual": innervar_residual(res), "ratio_bounds": ratio_bounds_violation(p, 4),
                "verdict": p.verdict, "valid_from": float(p.radii[p.inner_valid])}
        io.write_json(out / "frequency.json", fsum)
        emit("frequency.json", "frequency")
        plots.frequency_curve(p, out / "frequency.svg", p.alpha)
        emit("frequency.svg", "svg")
        if analysis["tangent"]:
            tg = tangent(res)
            floor = float(compute_beta(_rational(tg.alpha), res.f.q))
            io.write_json(out / "tangent.json", {"alpha": tg.alpha, "classification": tg.classification.to_json(),
                                                 "slope": tg.slope, "fit_window": list(tg.fit_window),
                                                 "beta_floor": floor})
            emit("tangent.json", "tangent")
            io.write_csv(out / "deviation.csv", io.CSV_HEADERS["deviation"], tg.rows())
            emit("deviation.csv", "deviation")
            plots.deviation_curve(tg, out / "deviation.svg")
            emit("deviation.svg", "svg")
        if analysis["decay"]:
            al = tg.classification.alpha if tg is not None and tg.classification.alpha is not None else _rational(p.alpha)
            io.write_json(out / "decay.json", fit_decay(p, al, res.f.q).to_json())
            emit("decay.json", "decay")
    if analysis["singularities"]:
        rep = detect_singularities(res, tangent_map=tg)
        io.write_json(out / "singular.json", rep.to_json())
        emit("singular.json", "singular")
    return io.write_manifest(out, entries)


def _rational(x):
    from fractions import Fraction
    return Fraction(float(x)).limit_denominator(12)
