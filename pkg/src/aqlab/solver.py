"""Discrete Dirichlet minimization for half-valued maps with a straight interface.

solve_branched unrolls every irreducible block of the boundary trace onto its
own chart, solves the discrete Laplace problem there and rolls the result
back.  relax_oracle is an independent check that never looks at the block
structure: it alternates between freezing the optimal sheet matchings on
every mesh edge and solving the resulting quadratic problem exactly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
import scipy.sparse as sp
from scipy.fft import dst, idst, rfft, irfft
from scipy.sparse.linalg import spsolve

from .aq import AqPoint, collapse, diameter_separation, matched_sq, with_zero
from .geometry import HalfDiskMesh, InterfaceMap
from .traces import (IrreducibleDecomposition, TraceLoop, UnrolledSheet, chart_energy, decompose_trace,
                     decomposition_variants, unroll)

HARMONIC_TOL = 1e-10


class NumericalFailure(RuntimeError):
    """A numerical contract was violated (divergence, residual too large)."""


@dataclass(frozen=True, eq=False)
class SolveResult:
    f: InterfaceMap
    energy: float
    per_block_energies: tuple
    residuals: dict
    decomposition: IrreducibleDecomposition | None = None
    charts: tuple = ()
    history: tuple = ()

    def to_json(self):
        dec = self.decomposition
        blocks = []
        if dec is not None:
            blocks.append({"kind": "half", "q": dec.g0.q, "k": 1})
            blocks += [{"kind": "full", "q": b.q, "k": b.k} for b in dec.blocks]
        return {
            "energy": self.energy,
            "per_block_energies": list(self.per_block_energies),
            "residuals": dict(self.residuals),
            "blocks": blocks,
            "Q": self.f.q,
            "n": self.f.n,
            "mesh": self.f.mesh.to_json(),
        }


# ------------------------------------------------------- chart Laplace solve

def _ring_solve(boundary, lam, kappa, rings):
    """Solve every Fourier/sine mode of the chart problem in the ring index.

    boundary: (L, n) outer-ring coefficients; lam: (L,) angular eigenvalues.
    Inner ring has the natural condition of the discrete energy, outer ring
    is Dirichlet.  Uses the ratio recursion a_i = t_i a_{i+1}, which is the
    forward elimination of the tridiagonal system and is unconditionally
    stable here because every t_i lies in (0, 1].
    """
    mu = np.asarray(lam, dtype=float) / kappa ** 2
    R = rings
    t = np.empty((R - 1, mu.size))
    t[0] = 1.0 / (1.0 + mu / 2)
    for i in range(1, R - 1):
        t[i] = 1.0 / (2.0 + mu - t[i - 1])
    a = np.empty((R,) + boundary.shape, dtype=boundary.dtype)
    a[R - 1] = boundary
    for i in range(R - 2, -1, -1):
        a[i] = t[i][:, None] * a[i + 1]
    return a


def solve_chart(mesh: HalfDiskMesh, q: int, half: bool, boundary) -> UnrolledSheet:
    """Discrete harmonic function on a block chart with given outer values.

    Half charts vanish on both slit edges; full charts are periodic.
    """
    b = np.asarray(boundary, dtype=float)
    if b.ndim == 1:
        b = b[:, None]
    R, kappa = mesh.rings, mesh.kappa
    P = b.shape[0]
    if half:
        M = P - 1
        vals = np.zeros((R, P, b.shape[1]))
        if M >= 2 and np.any(b[1:-1]):
            coef = dst(b[1:-1], type=1, axis=0, norm="ortho")
            l = np.arange(1, M)
            lam = 2.0 - 2.0 * np.cos(np.pi * l / M)
            a = _ring_solve(coef, lam, kappa, R)
            vals[:, 1:-1] = idst(a, type=1, axis=1, norm="ortho")
        vals[-1] = b
    else:
        coef = rfft(b, axis=0)
        l = np.arange(coef.shape[0])
        lam = 2.0 - 2.0 * np.cos(2 * np.pi * l / P)
        a = _ring_solve(coef, lam, kappa, R)
        vals = irfft(a, n=P, axis=1)
        vals[-1] = b
    return UnrolledSheet(mesh, q, half, vals)


def chart_residual(sheet: UnrolledSheet) -> float:
    """Max residual of the discrete Euler-Lagrange equations at free nodes,
    relative to the data scale."""
    V = sheet.values
    k = sheet.mesh.kappa
    if sheet.half:
        left, right = V[:, :-2], V[:, 2:]
        mid = V[:, 1:-1]
    else:
        left, right, mid = np.roll(V, 1, axis=1), np.roll(V, -1, axis=1), V
    ang = (2 * mid - left - right) / k
    res = np.empty_like(mid)
    if sheet.half:
        rad_mid = V[:, 1:-1]
    else:
        rad_mid = V
    res[1:-1] = k * (2 * rad_mid[1:-1] - rad_mid[:-2] - rad_mid[2:]) + ang[1:-1]
    res[0] = k * (rad_mid[0] - rad_mid[1]) + 0.5 * ang[0]
    scale = max(1e-300, float(np.abs(V).max()), 1.0)
    return float(np.abs(res[:-1]).max(initial=0.0) / (scale * (k + 1.0 / k)))


# -------------------------------------------------------------- the solver

def _zero_result(trace: TraceLoop, mesh: HalfDiskMesh) -> SolveResult:
    R, m1 = mesh.rings, mesh.m + 1
    f = InterfaceMap(mesh, np.zeros((R, m1, trace.q, trace.n)), np.zeros((R, m1, trace.q - 1, trace.n)))
    return SolveResult(f, 0.0, (0.0,), {"interface": 0.0, "harmonicity": 0.0, "matching_gap": 0.0})


def _solve_decomposition(dec: IrreducibleDecomposition, mesh: HalfDiskMesh, n: int) -> SolveResult:
    charts, energies, ups, lows = [], [], [], []
    g0 = dec.g0
    sheet = solve_chart(mesh, g0.q, True, g0.zeta)
    charts.append(sheet)
    energies.append(sheet.energy())
    u, l = unroll(sheet)
    ups.append(u)
    lows.append(l)
    for b in dec.blocks:
        sheet = solve_chart(mesh, b.q, False, b.zeta)
        charts.append(sheet)
        energies.append(sheet.energy() * b.k)
        u, l = unroll(sheet, b.k)
        ups.append(u)
        lows.append(l)
    f = InterfaceMap(mesh, np.concatenate(ups, axis=2), np.concatenate(lows, axis=2))
    total = float(sum(energies))
    assembled = f.energy()
    res = {
        "interface": f.interface_residual(),
        "harmonicity": max(chart_residual(c) for c in charts),
        "matching_gap": (total - assembled) / max(1.0, total),
    }
    return SolveResult(f, total, tuple(energies), res, dec, tuple(charts))


def solve_branched(trace: TraceLoop, rings: int | None = None, r_min: float = 1e-10,
                   blocks: str = "auto", mesh: HalfDiskMesh | None = None) -> SolveResult:
    """Rolled-back block-wise harmonic extension of a half-valued trace.

    With blocks="auto" every decomposition reachable through closing ties is
    solved and the one of least energy is returned; "fixed" uses the default
    decomposition only.
    """
    if blocks not in ("auto", "fixed"):
        raise ValueError("blocks must be 'auto' or 'fixed'")
    if mesh is None:
        mesh = HalfDiskMesh.square(2 * trace.m, r_min) if rings is None else HalfDiskMesh(rings, 2 * trace.m, r_min)
    if mesh.m != trace.m:
        raise ValueError("trace sampling does not match the mesh")
    if trace.phi is not None and np.abs(trace.phi).max() > 1e-12:
        raise ValueError("solve_branched expects interface data (R, 0); subtract the extension first")
    if not (np.all(np.isfinite(trace.upper)) and np.all(np.isfinite(trace.lower))):
        raise ValueError("trace contains non-finite values")
    if np.abs(trace.upper).max(initial=0.0) == 0.0:
        return _zero_result(trace, mesh)
    decs = decomposition_variants(trace) if blocks == "auto" else [decompose_trace(trace)]
    best = None
    for dec in decs:
        r = _solve_decomposition(dec, mesh, trace.n)
        if best is None or r.energy < best.energy - 1e-12 * max(1.0, r.energy):
            best = r
    if not (math.isfinite(best.energy) and best.residuals["harmonicity"] <= HARMONIC_TOL):
        raise NumericalFailure(f"harmonicity residual {best.residuals['harmonicity']:.3e}")
    return best


# -------------------------------------------------------- relaxation oracle

class _Graph:
    """Vertex bookkeeping for the relaxation: one vertex per (node, sheet).

    Upper nodes on the axis reuse the vertices of the coincident lower node
    plus one shared vertex that carries the interface value zero.
    """

    def __init__(self, mesh: HalfDiskMesh, q: int):
        R, m = mesh.rings, mesh.m
        self.mesh, self.q = mesh, q
        nl = R * (m + 1) * (q - 1)
        self.lower = np.arange(nl).reshape(R, m + 1, q - 1)
        nu = R * (m - 1) * q
        inner = nl + np.arange(nu).reshape(R, m - 1, q)
        self.zero = nl + nu
        self.nv = nl + nu + 1
        up = np.empty((R, m + 1, q), dtype=int)
        up[:, 1:m] = inner
        zc = np.full((R, 1), self.zero)
        up[:, 0] = np.concatenate([self.lower[:, m], zc], axis=1)
        up[:, m] = np.concatenate([self.lower[:, 0], zc], axis=1)
        self.upper = up

    def pack(self, f: InterfaceMap):
        X = np.zeros((self.nv, f.n))
        X[self.lower.reshape(-1)] = f.lower.reshape(-1, f.n)
        m = self.mesh.m
        X[self.upper[:, 1:m].reshape(-1)] = f.upper[:, 1:m].reshape(-1, f.n)
        return X

    def unpack(self, X, half=True):
        return InterfaceMap(self.mesh, X[self.upper], X[self.lower])

    def edge_families(self):
        me = self.mesh
        k = me.kappa
        w = me.column_weights
        v = np.ones(me.rings)
        v[0] = v[-1] = 0.5
        for idx in (self.upper, self.lower):
            if idx.shape[2] == 0:
                continue
            yield idx[:-1], idx[1:], (k * w)[None, :] * np.ones((me.rings - 1, 1))
            yield idx[:, :-1], idx[:, 1:], (v / k)[:, None] * np.ones((1, me.m))


def _laplacian(graph: _Graph, X):
    rows, cols, vals = [], [], []
    for A, B, w in graph.edge_families():
        _, perm = matched_sq(X[A], X[B], return_perm=True)
        Bp = np.take_along_axis(B, perm, axis=-1)
        a = A.reshape(-1)
        b = Bp.reshape(-1)
        ww = np.repeat(w.reshape(-1), A.shape[-1])
        rows += [a, b, a, b]
        cols += [a, b, b, a]
        vals += [ww, ww, -ww, -ww]
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    return sp.csr_matrix((vals, (rows, cols)), shape=(graph.nv, graph.nv))


def relax_oracle(trace: TraceLoop | None, init: InterfaceMap, iters: int = 50, step: float = 1.0,
                 fixed_upper=None, fixed_lower=None, tol: float = 1e-13) -> SolveResult:
    """Majorize-minimize descent on the assembled energy.

    Each sweep freezes the optimal matching on every edge, which turns the
    energy into a quadratic upper bound touching it at the current state;
    the bound is minimized exactly with the fixed nodes held, and the state
    moves a fraction ``step`` toward that minimizer.  The energy can
    therefore never increase, and an increase is reported as divergence.
    """
    mesh = init.mesh
    R, m = mesh.rings, mesh.m
    if not 0 < step <= 1:
        raise ValueError("step must lie in (0, 1]")
    g = _Graph(mesh, init.q)
    if fixed_upper is None:
        fixed_upper = np.zeros((R, m + 1), dtype=bool)
        fixed_upper[-1] = True
    if fixed_lower is None:
        fixed_lower = np.zeros((R, m + 1), dtype=bool)
        fixed_lower[-1] = True
    f0 = init
    if trace is not None:
        U = init.upper.copy()
        L = init.lower.copy()
        U[-1], L[-1] = trace.upper, trace.lower
        f0 = InterfaceMap(mesh, U, L)
    X = g.pack(f0)
    fixed = np.zeros(g.nv, dtype=bool)
    fixed[g.zero] = True
    fixed[g.upper[fixed_upper].reshape(-1)] = True
    fixed[g.lower[fixed_lower].reshape(-1)] = True
    free = np.nonzero(~fixed)[0]
    fix = np.nonzero(fixed)[0]
    E = g.unpack(X).energy()
    hist = [E]
    for _ in range(iters if free.size else 0):
        Lap = _laplacian(g, X)
        Lff = Lap[free][:, free].tocsc()
        Lfb = Lap[free][:, fix]
        rhs = -(Lfb @ X[fix])
        Xs = X.copy()
        sol = spsolve(Lff, rhs)
        Xs[free] = sol.reshape(len(free), -1)
        Xn = X + step * (Xs - X)
        En = g.unpack(Xn).energy()
        if En > E + 1e-12 * max(1.0, E):
            raise NumericalFailure(f"energy increased: history {hist + [En]}")
        X = Xn
        hist.append(En)
        if E - En <= tol * max(1.0, E):
            E = En
            break
        E = En
    f = g.unpack(X)
    res = {"interface": f.interface_residual(), "harmonicity": float("nan"), "matching_gap": 0.0}
    return SolveResult(f, float(E), (float(E),), res, None, (), tuple(hist))


# --------------------------------------------------- annulus interpolation

def _interp_columns(F, G, t):
    """Matched linear interpolation G -> F with weights t (R,) along radii."""
    _, perm = matched_sq(G, F, return_perm=True)
    Fp = np.take_along_axis(F, perm[..., None], axis=-2)
    return (1 - t)[:, None, None, None] * G[None] + t[:, None, None, None] * Fp[None]


@dataclass(frozen=True, eq=False)
class AnnulusResult:
    f: InterfaceMap
    energy: float
    bound_terms: dict
    init_energy: float


def annulus_interpolate(f: TraceLoop, g: TraceLoop, delta: float, relax_iters: int = 30) -> AnnulusResult:
    """Interpolating map on the annulus 1-delta <= r <= 1 between two traces.

    f sits on the outer circle and g (rescaled) on the inner one.  The
    initial field interpolates each radial column along the optimal matching
    of its end values; at the axis the interface sheet is kept at zero and
    only the lower values are interpolated.  Columns at angles i pi/N are
    held, as in the construction on vertical lines, and the rest is relaxed.
    """
    N = int(round(1.0 / delta))
    if N < 4 or abs(N * delta - 1.0) > 1e-9:
        raise ValueError("delta must be 1/N with N >= 4")
    if f.m != g.m or f.q != g.q:
        raise ValueError("traces must share sampling and multiplicity")
    m = f.m
    mesh = HalfDiskMesh.square(2 * m, 1.0 - delta)
    if mesh.rings < 3:
        mesh = HalfDiskMesh(3, 2 * m, 1.0 - delta)
    r = mesh.radii
    t = (r - r[0]) / (r[-1] - r[0])
    L = _interp_columns(f.lower, g.lower, t) if f.q > 1 else np.zeros((mesh.rings, m + 1, 0, f.n))
    U = _interp_columns(f.upper, g.upper, t)
    U[:, 0] = with_zero(L[:, m])
    U[:, m] = with_zero(L[:, 0])
    init = InterfaceMap(mesh, U, L)
    fu = np.zeros((mesh.rings, m + 1), dtype=bool)
    fu[0] = fu[-1] = True
    cols = sorted({int(round(i * m / N)) for i in range(N + 1)})
    fu[:, cols] = True
    fl = fu[:, ::-1].copy()
    E0 = init.energy()
    if relax_iters > 0:
        out = relax_oracle(None, init, relax_iters, 1.0, fu, fl)
        h, E = out.f, out.energy
    else:
        h, E = init, E0
    sup_g2 = float(max(matched_sq(f.upper, g.upper).max(), matched_sq(f.lower, g.lower).max(initial=0.0)))
    terms = {
        "delta": delta,
        "dir_f": f.tangential_energy(),
        "dir_g": g.tangential_energy(),
        "sup_G2": sup_g2,
    }
    return AnnulusResult(h, float(E), terms, float(E0))


def interpolation_ratio(res: AnnulusResult) -> float:
    """Energy divided by delta (Dir f + Dir g) + sup G^2 / delta."""
    t = res.bound_terms
    denom = t["delta"] * (t["dir_f"] + t["dir_g"]) + t["sup_G2"] / t["delta"]
    return res.energy / denom if denom > 0 else 0.0


# ------------------------------------------------------------- decay check

@dataclass(frozen=True)
class DecayCheck:
    radius: float
    lhs: float
    rhs: float

    @property
    def holds(self) -> bool:
        return self.lhs <= self.rhs * (1 + 1e-9) + 1e-14


def tangential_dir(f: InterfaceMap):
    """Dirichlet energy of the trace on every mesh circle."""
    return f.ring_tangential / (f.mesh.radii * f.mesh.dtheta)


def inner_energies(f: InterfaceMap, core: bool = True):
    """D(r_k): energy inside each mesh circle.

    With core=True the unmeshed disk B_{r_min} is estimated from the
    geometric decay of the innermost annuli; core=False counts the meshed
    annuli only, which is the exact energy of a solution whose inner ring is
    left free.
    """
    A = f.annulus_energies
    H = f.ring_mass()
    extra = 0.0
    if core and A.size and H[0] > 0 and H[1] > 0:
        qr = H[0] / H[1]  # ring mass scales like the energy, r^(2 alpha)
        if qr < 1:
            extra = A[0] * qr / (1 - qr)
    return extra + np.concatenate([[0.0], np.cumsum(A)])


def decay_check(result: SolveResult, ring: int = -1) -> DecayCheck:
    """D(r) <= 3Q r Dir(f|dB_r) on one mesh circle.

    The solution leaves its inner ring free, so D(r) is the meshed annulus
    energy: any competitor with the same trace on the circle restricts to
    the annulus with no more energy than it has on the whole disk.
    """
    r, lhs, rhs = decay_sides(result)
    return DecayCheck(float(r[ring]), float(lhs[ring]), float(rhs[ring]))


def decay_sides(result: SolveResult):
    """(radii, D(r), 3Q r Dir(f|dB_r)) on every mesh circle at once."""
    f = result.f
    r = f.mesh.radii
    return r, inner_energies(f, core=False), 3 * f.q * r * tangential_dir(f)


# -------------------------------------------------------- maximum principle

def maximum_principle_check(result: SolveResult, t: AqPoint, r: float, tol: float = 1e-9) -> bool:
    """If the outer circle stays within r of T, does the whole map?

    Upper values are compared with T directly, lower values after adding
    the interface sheet.
    """
    if support_has_zero(t) is False:
        raise ValueError("0 must belong to the support of T")
    _, sep = diameter_separation(t)
    if not r < sep / 4:
        raise ValueError("radius too large for separation")
    f = result.f
    T = t.expanded()
    if T.shape[0] != f.q:
        raise ValueError("cardinality mismatch")
    du = np.sqrt(matched_sq(f.upper, np.broadcast_to(T, f.upper.shape)))
    dl = np.sqrt(matched_sq(with_zero(f.lower), np.broadcast_to(T, f.upper.shape)))
    slack = tol * max(1.0, f.scale())
    if du[-1].max() > r + slack or dl[-1].max() > r + slack:
        raise ValueError("boundary values violate the hypotheses")
    return bool(du.max() <= r + slack and dl.max() <= r + slack)


def support_has_zero(t: AqPoint) -> bool:
    return bool(np.any(np.all(np.abs(t.pts) <= 1e-14, axis=1)))


# ----------------------------------------------------------------- splitting

def split_epsilon(q: int) -> float:
    """Root of (sqrt(Q)+2) eps / (1-eps) = 1/8."""
    return 1.0 / (8.0 * (math.sqrt(q) + 2.0) + 1.0)


@dataclass(frozen=True, eq=False)
class SplitResult:
    h: InterfaceMap
    g: InterfaceMap
    s_tilde: AqPoint
    eps: float
    beta: float


def split_minimizer(result: SolveResult, t: AqPoint) -> SplitResult:
    """Separate the sheets that stay near 0 from those near the rest of T.

    T is collapsed at scale eps, the collapsed point nearest 0 is moved to 0,
    and every sheet is assigned to the nearest support point.  The split
    is accepted only if every node sees the same number of sheets near each
    support point and all sheets lie within s/4 of it.
    """
    f = result.f
    q = f.q
    if t.q != q:
        raise ValueError("cardinality mismatch")
    if not support_has_zero(t):
        raise ValueError("0 must belong to the support of T")
    eps = split_epsilon(q)
    S, beta = collapse(t, eps)
    P = S.pts.copy()
    z = int(np.argmin((P ** 2).sum(-1)))
    P[z] = 0.0
    St = AqPoint.from_pairs(list(zip(P, S.mult)))
    z = int(np.argmin((St.pts ** 2).sum(-1)))
    _, sep = diameter_separation(St)

    def labels(V):
        d = np.sqrt(((V[..., :, None, :] - St.pts) ** 2).sum(-1))
        return d.argmin(-1), d.min(-1)

    lu, du = labels(f.upper)
    ll, dl = labels(f.lower)
    if max(du.max(initial=0.0), dl.max(initial=0.0)) >= sep / 4:
        raise ValueError("not splittable at this radius")
    kz = int(St.mult[z])
    cnt_u = (lu == z).sum(-1)
    cnt_l = (ll == z).sum(-1)
    if not (np.all(cnt_u == kz) and np.all(cnt_l == kz - 1)):
        raise ValueError("not splittable at this radius")
    if kz == q:
        raise ValueError("not splittable at this radius")
    ou = np.argsort(lu != z, axis=-1, kind="stable")
    ol = np.argsort(ll != z, axis=-1, kind="stable")
    U = np.take_along_axis(f.upper, ou[..., None], axis=-2)
    L = np.take_along_axis(f.lower, ol[..., None], axis=-2)
    g = InterfaceMap(f.mesh, U[:, :, :kz], L[:, :, :kz - 1])
    h = InterfaceMap(f.mesh, U[:, :, kz:], L[:, :, kz - 1:], None, half=False)
    return SplitResult(h, g, St, eps, beta)


def compute_split_alpha(q: int, beta: float) -> float:
    return split_epsilon(q) * beta
