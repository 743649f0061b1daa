"""Quantitative verification suites behind ``aqlab verify``.

Each acceptance criterion is one function returning table rows; a suite is
a group of criteria.  Random draws use fixed seeds so a suite prints the
same table on every run.  Brute-force oracles here are written
independently of the library code they check.
"""
from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

from . import experiments as X
from .aq import AqPoint, diameter_separation, metric_g, retract
from .catalog import random_catalog
from .classify import classify_tangent
from .frequency import check_monotone, compute_beta, fit_decay, profile, profile_exact, tangent
from .geometry import HalfDiskMesh, InterfaceMap, avgsym_residual, normalize_average
from .singular import detect_singularities
from .solver import DecayCheck, decay_sides, relax_oracle, solve_branched
from .traces import UnrolledSheet, trace_of, unroll_map

SEED = 20240607


@dataclass(frozen=True)
class Row:
    criterion: int
    name: str
    value: object
    target: str
    passed: bool

    def cells(self):
        v = self.value
        if isinstance(v, float):
            v = f"{v:.3e}"
        return [str(self.criterion), self.name, str(v), self.target, "pass" if self.passed else "FAIL"]


def _le(c, name, value, bound):
    return Row(c, name, float(value), f"<= {bound:g}", bool(value <= bound))


def _ge(c, name, value, bound):
    return Row(c, name, float(value), f">= {bound:g}", bool(value >= bound))


def _info(c, name, value):
    return Row(c, name, value, "info", True)


# ------------------------------------------------------------ shared solves

@lru_cache(maxsize=None)
def _solve(name: str, angles: int, r_min: float, rings: int | None = None):
    fx = {**X.catalog_fixtures(), **{k: v[0](0.25) for k, v in X.PERTURBATIONS.items()},
          "crossing-a": X.crossing_a()}
    mesh = HalfDiskMesh.square(angles, r_min) if rings is None else HalfDiskMesh(rings, angles, r_min)
    return solve_branched(fx[name].trace(angles // 2), mesh=mesh)


# ------------------------------------------------------------------ metric

def _brute_g(A, B):
    """min over all permutations of sqrt(sum |A_i - B_s(i)|^2); A, B (N, Q, n)."""
    q = A.shape[1]
    perms = np.array(list(itertools.permutations(range(q))))
    C = ((A[:, :, None, :] - B[:, None, :, :]) ** 2).sum(-1)  # (N, Q, Q)
    out = np.empty(A.shape[0])
    step = max(1, 2_000_000 // (len(perms) * q))
    rows = np.arange(q)
    for s in range(0, A.shape[0], step):
        c = C[s:s + step]
        out[s:s + step] = c[:, rows[None, :], perms].sum(-1).min(-1)
    return np.sqrt(out)


def criterion_metric(draws: int = 10_000):
    rng = np.random.default_rng(SEED)
    Q = rng.integers(1, 9, size=draws)
    N = rng.integers(1, 5, size=draws)
    worst = 0.0
    for q in range(1, 9):
        for n in range(1, 5):
            sel = np.nonzero((Q == q) & (N == n))[0]
            if not sel.size:
                continue
            A = rng.normal(size=(sel.size, q, n))
            B = rng.normal(size=(sel.size, q, n))
            # repeated points exercise multiplicities
            A[::3, -1] = A[::3, 0]
            brute = _brute_g(A, B)
            lib = np.array([metric_g(AqPoint.from_array(a), AqPoint.from_array(b)) for a, b in zip(A, B)])
            worst = max(worst, float(np.abs(lib - brute).max()))
    tri = sym = 0.0
    for _ in range(draws):
        q, n = int(rng.integers(1, 9)), int(rng.integers(1, 5))
        a, b, c = (AqPoint.from_array(rng.normal(size=(q, n))) for _ in range(3))
        gab, gbc, gac = metric_g(a, b), metric_g(b, c), metric_g(a, c)
        tri = max(tri, gac - gab - gbc)
        sym = max(sym, abs(gab - metric_g(b, a)))
    return [_le(1, "|G - permutation brute force|, 10000 draws, Q <= 8", worst, 1e-12),
            _le(1, "triangle excess G(a,c) - G(a,b) - G(b,c)", tri, 1e-12),
            _le(1, "symmetry |G(a,b) - G(b,a)|", sym, 1e-12)]


def _draw_center(rng):
    q, n = int(rng.integers(1, 7)), int(rng.integers(1, 4))
    k = int(rng.integers(1, q + 1))
    pts = rng.normal(size=(k, n)) * 2
    mult = np.ones(k, dtype=int)
    for _ in range(q - k):
        mult[rng.integers(k)] += 1
    return AqPoint.from_pairs(list(zip(pts, mult)))


def _near(rng, t: AqPoint, spread: float, keep: float):
    """A point near t: each copy moved by about ``spread``, some left exactly."""
    P = t.expanded().copy()
    move = rng.random(P.shape[0]) >= keep
    P[move] += rng.normal(size=(int(move.sum()), P.shape[1])) * spread
    return AqPoint.from_array(P[rng.permutation(P.shape[0])])


def criterion_retraction(draws: int = 10_000):
    rng = np.random.default_rng(SEED + 1)
    radius = support = 0.0
    excess = -math.inf
    strict = tested = unchanged_fail = in_ball = kept = 0
    for _ in range(draws):
        t = _draw_center(rng)
        d, s = diameter_separation(t)
        bound = s / 4 if math.isfinite(s) else 1.0
        r = float(rng.uniform(0.05, 0.95)) * bound
        s1 = _near(rng, t, r * float(rng.uniform(0.1, 3.0)) / math.sqrt(t.q * t.n), 0.3)
        s2 = _near(rng, t, r * float(rng.uniform(0.1, 3.0)) / math.sqrt(t.q * t.n), 0.3)
        o1, o2 = retract(t, r, s1), retract(t, r, s2)
        radius = max(radius, metric_g(o1, t) - r)
        g1 = metric_g(s1, t)
        if g1 <= r:
            in_ball += 1
            if metric_g(o1, s1) != 0.0:
                unchanged_fail += 1
        else:
            g12 = metric_g(s1, s2)
            if g12 > 0:
                tested += 1
                e = metric_g(o1, o2) - g12
                excess = max(excess, e)
                strict += e < 0
        common = [p for p in t.pts if np.any(np.all(s1.pts == p, axis=1))]
        kept += len(common)
        for p in common:
            support = max(support, float(np.sqrt(((o1.pts - p) ** 2).sum(-1)).min()))
    return [_le(2, "ball: G(retract(S), T) - r", radius, 1e-12),
            _le(2, "(i) contraction excess G(o1,o2) - G(S1,S2)", excess, 1e-12),
            _info(2, "(i) strictly contracted pairs", f"{strict}/{tested}"),
            _le(2, f"(ii) points of the ball moved, of {in_ball}", unchanged_fail, 0),
            _le(2, f"(iii) distance of {kept} shared support points", support, 0.0)]


# ------------------------------------------------------------------ unroll

def criterion_unroll(angles=(64, 128, 256, 512), r_min: float = 1e-8):
    rows, eD, eB = [], [], []
    for a in angles:
        mesh = HalfDiskMesh.square(a, r_min)
        sheet = UnrolledSheet.from_function(mesh, 2, True, lambda rho, phi: rho * np.sin(phi))
        f = unroll_map(sheet)
        eD.append(abs(f.energy() / math.pi - 1))
        eB.append(abs(trace_of(f).tangential_energy() / (2 * math.pi / 3) - 1))
    oD = np.log2(np.array(eD[:-1]) / eD[1:])
    oB = np.log2(np.array(eB[:-1]) / eB[1:])
    rows.append(_le(3, f"Dir vs pi, relative error at {angles[-1]}", eD[-1], 1e-3))
    rows.append(_le(3, f"boundary energy vs 2pi/3, relative error at {angles[-1]}", eB[-1], 1e-3))
    rows.append(_ge(3, "Dir observed order, min over doublings", oD.min(), 1.8))
    rows.append(_ge(3, "boundary energy observed order, min over doublings", oB.min(), 1.8))
    return rows


def criterion_normalization(angles: int = 256, r_min: float = 1e-6):
    mesh = HalfDiskMesh.square(angles, r_min)
    # f+ = [[x2]] + [[0]], f- = [[0]]; mesh coordinates are exactly zero on the axis
    y = mesh.upper_xy[..., 1]
    f = InterfaceMap(mesh, np.stack([y, 0 * y], -1)[..., None], np.zeros(y.shape + (1, 1)))
    g = normalize_average(f)
    m = mesh.m
    Su, Sl = g.upper.sum(axis=2), g.lower.sum(axis=2)[:, ::-1]
    at_interface = float(np.abs(Su[:, [0, m]] - Sl[:, [0, m]]).max())
    yl = mesh.lower_xy[..., 1]
    hand_u = np.sort(np.stack([2 * y / 3, -y / 3], -1), -1)
    hand_l = -yl / 3
    dev = max(float(np.abs(np.sort(g.upper[..., 0], -1) - hand_u).max()),
              float(np.abs(g.lower[..., 0, 0] - hand_l).max()))
    twice = normalize_average(g)
    return [_le(10, "avgsym residual at interface nodes", at_interface, 0.0),
            _le(10, "avgsym residual, all nodes", avgsym_residual(g), 1e-10),
            _le(10, "deviation from hand-derived normalized map", dev, 1e-12),
            _le(10, "idempotence |N(N(f)) - N(f)|", float(np.abs(twice.upper - g.upper).max()), 1e-12)]


# --------------------------------------------------------------- frequency

def criterion_frequency():
    rows = []
    worst_s = worst_x = 0.0
    fx = X.catalog_fixtures()
    for name, f in fx.items():
        p = profile(f.on_mesh(HalfDiskMesh.square(256, 1e-8)))
        worst_s = max(worst_s, float(np.ptp(p.I)))
        pe = profile_exact(f, np.geomspace(1e-6, 1, 50))
        worst_x = max(worst_x, float(np.ptp(pe.I)))
    rows.append(_le(5, "I spread, catalog maps sampled on the mesh", worst_s, 1e-6))
    rows.append(_le(5, "I spread, catalog closed forms", worst_x, 1e-6))
    worst, err = 0.0, 0.0
    for name, f in fx.items():
        res = _solve(name, 512, 1e-8, 512)
        p = profile(res)
        I = p.I[p.valid]
        worst = max(worst, float(np.ptp(I)))
        err = max(err, float(np.abs(I - float(f.alpha)).max()))
    rows.append(_le(5, "I spread, solver output 512 x 512", worst, 1e-3))
    rows.append(_info(5, "max |I - alpha|, solver output 512 x 512", f"{err:.3e}"))
    mono = 0.0
    for name in X.PERTURBATIONS:
        mono = max(mono, check_monotone(profile(_solve(name, 512, 1e-10))))
    rows.append(_le(5, "monotonicity violation, perturbed fixtures", mono, 1e-3))
    for name in ("case-c", "perturbed-b"):
        r_min = 1e-10 if name.startswith("perturbed") else 1e-8
        res = [profile(_solve(name, a, r_min)).hder_residual for a in (64, 128, 256, 512)]
        order = np.log2(np.array(res[:-1]) / res[1:])
        rows.append(_ge(5, f"H' identity residual order, {name} ({res[-1]:.1e} at 512)", order.min(), 1.8))
    return rows


# ------------------------------------------------------------------- decay

def criterion_energy_decay(angles: int = 128, r_min: float = 1e-8, randoms: int = 20):
    worst, count, failing = 0.0, 0, []
    traces = {k: f.trace(angles // 2) for k, f in X.catalog_fixtures().items()}
    rng = np.random.default_rng(SEED + 4)
    for j in range(randoms):
        traces[f"random-{j}"] = X.random_fourier(rng, max_q=4).trace(angles // 2)
    mesh = HalfDiskMesh.square(angles, r_min)
    for name, tr in traces.items():
        res = solve_branched(tr, mesh=mesh)
        for c in [DecayCheck(*row) for row in zip(*decay_sides(res))][1:]:
            count += 1
            if c.rhs > 0:
                worst = max(worst, c.lhs / c.rhs)
            if not c.holds:
                failing.append(name)
    return [_le(4, f"D(r) / (3Q r Dir(f|dB_r)), {count} rings", worst, 1.0),
            _le(4, "fixtures with a failing ring", len(set(failing)), 0)]


def criterion_oracle(angles: int = 128, r_min: float = 1e-8, iters: int = 30):
    worst = 0.0
    mesh = HalfDiskMesh.square(angles, r_min)
    for name, f in X.catalog_fixtures().items():
        tr = f.trace(angles // 2)
        res = solve_branched(tr, mesh=mesh)
        orc = relax_oracle(tr, X.radial_extension(tr, mesh), iters=iters)
        worst = max(worst, abs(orc.energy - res.energy) / res.energy)
    c = _solve("case-c", 512, 1e-8)
    return [_le(7, "relaxation vs direct solve, relative energy gap", worst, 1e-6),
            _le(7, "case c energy vs pi at 512, relative", abs(c.energy / math.pi - 1), 1e-3)]


# ---------------------------------------------------------- classification

def criterion_rates(angles: int = 512, r_min: float = 1e-10):
    rows = []
    hand = {(Fraction(1), 1): Fraction(1), (Fraction(2, 3), 2): Fraction(1, 3), (Fraction(1, 2), 1): Fraction(1, 2)}
    bad = [k for k, v in hand.items() if compute_beta(*k) != v]
    rows.append(_le(6, "compute_beta mismatches against hand values", len(bad), 0))
    for name, (_, al, q) in X.PERTURBATIONS.items():
        res = _solve(name, angles, r_min)
        tg = tangent(res)
        floor = float(compute_beta(Fraction(al).limit_denominator(12), q))
        slope = tg.slope if tg.slope is not None else -math.inf
        rows.append(_ge(6, f"{name}: deviation exponent (floor {floor:.3g})", slope, floor - 0.05))
        fit = fit_decay(profile(res), Fraction(al).limit_denominator(12), q)
        rows.append(_info(6, f"{name}: frequency decay exponent", f"{fit.beta_hat:.3f}"))
    rng = np.random.default_rng(SEED + 6)
    worst, wrong = 0.0, 0
    for _ in range(50):
        f = random_catalog(rng)
        c = classify_tangent(f.trace(256), f.alpha)
        worst = max(worst, c.residual)
        wrong += c.case != f.case
    rows.append(_le(6, "catalog round trip, worst residual of 50 draws", worst, 1e-4))
    rows.append(_le(6, "catalog round trip, wrong cases", wrong, 0))
    return rows


SINGULAR_FIXTURES = ("x2", "case-a-l2", "case-b-sqrt", "case-b-cubic", "case-c", "case-c-n2",
                     "perturbed-c", "perturbed-q1", "perturbed-b", "crossing-a")


def criterion_singular(angles: int = 256, r_min: float = 1e-8):
    rows = []
    worst_cells = math.inf
    infinite = 0
    for name in SINGULAR_FIXTURES:
        rep = detect_singularities(_solve(name, angles, r_min))
        infinite += not rep.finite
        if rep.gap_cells is not None:
            worst_cells = min(worst_cells, rep.gap_cells)
        if name == "case-b-sqrt":
            pts = rep.points
            exact = len(pts) == 1 and pts[0].x == 0.0 and pts[0].y == 0.0
            rows.append(_le(9, "case b (n*=1, Q*=2): points other than the origin", 0 if exact else len(pts) or 1, 0))
    rows.insert(0, _le(9, "fixtures with a non-discrete report", infinite, 0))
    rows.insert(1, Row(9, "minimum gap between singular points, mesh cells", worst_cells, "> 5",
                       bool(worst_cells > 5)))
    return rows


# ------------------------------------------------------------- exceptional

def criterion_exceptional(angles: int = 128, r_min: float = 1e-8):
    ex = X.exceptional_experiment(angles, r_min)
    lo, hi = math.sin(4 * math.pi / 3), math.sin(2 * math.pi / 3)
    cls = ex.tangent.classification
    # h- runs from theta = pi (x = -1) to theta = 2 pi (x = +1)
    ends = max(abs(ex.left_limit - hi), abs(ex.right_limit - lo))
    return [Row(8, "sign change of h- on (-1, 1)", ex.sign_change, "true", ex.sign_change),
            _info(8, "located zero sigma", f"{ex.sigma:.3e}"),
            _info(8, "endpoint values at x = -1, +1", f"{ex.left_limit:.4f}, {ex.right_limit:.4f}"),
            _le(8, "endpoint distance to sin(2pi/3), sin(4pi/3)", ends, 1e-3),
            Row(8, "tangent at the zero", cls.case, "c", cls.case == "c"),
            _le(8, "tangent classification residual", cls.residual, 1e-3),
            _info(8, "energy: solve / relaxation", f"{ex.solution.energy:.6f} / {ex.oracle_energy:.6f}")]


CRITERIA = {
    1: criterion_metric,
    2: criterion_retraction,
    3: criterion_unroll,
    4: criterion_energy_decay,
    5: criterion_frequency,
    6: criterion_rates,
    7: criterion_oracle,
    8: criterion_exceptional,
    9: criterion_singular,
    10: criterion_normalization,
}

SUITES = {
    "metric": (1, 2),
    "unroll": (3, 10),
    "frequency": (5,),
    "decay": (4, 7),
    "classification": (6, 9),
    "exceptional": (8,),
}


def run_criterion(k: int):
    t0 = time.perf_counter()
    rows = CRITERIA[k]()
    return rows, time.perf_counter() - t0


def run_suite(name: str):
    if name not in SUITES:
        raise KeyError(name)
    rows = []
    for k in SUITES[name]:
        rows.extend(run_criterion(k)[0])
    return rows


def format_table(rows) -> str:
    head = ["#", "check", "value", "target", "result"]
    cells = [head] + [r.cells() for r in rows]
    w = [max(len(c[i]) for c in cells) for i in range(len(head))]
    return "\n".join("  ".join(c[i].ljust(w[i]) for i in range(len(head))).rstrip() for c in cells)
