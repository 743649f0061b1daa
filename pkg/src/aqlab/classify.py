"""Match a homogeneous trace on the unit circle against the catalog cases."""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.fft import rfft

from .aq import matched_sq
from .catalog import HomogeneousMap, catalog, independent
from .traces import ResolutionError, TraceLoop, decompose_trace, fourier_halfwave

RESIDUAL_TOL = 1e-4


@dataclass(frozen=True, eq=False)
class Classification:
    case: str  # "a", "b", "c" or "unclassified"
    map: HomogeneousMap | None
    residual: float
    reason: str = ""
    alpha: Fraction | None = None

    @property
    def ok(self) -> bool:
        return self.case in ("a", "b", "c")

    def to_json(self):
        return {"case": self.case, "residual": self.residual, "reason": self.reason,
                "alpha": None if self.alpha is None else str(self.alpha),
                "map": None if self.map is None else self.map.to_json()}


def _fail(reason, residual=math.inf, alpha=None):
    return Classification("unclassified", None, residual, reason, alpha)


def unit_energy(g: TraceLoop, alpha: float) -> float:
    """Energy in the unit disk of the alpha-homogeneous extension of g."""
    return (alpha ** 2 * g.l2_mass() + g.tangential_energy()) / (2 * alpha)


def trace_distance(g: TraceLoop, h: TraceLoop) -> float:
    """L2 norm over the circle of the pointwise G distance."""
    w = np.ones(g.m + 1)
    w[0] = w[-1] = 0.5
    w *= math.pi / g.m
    du = matched_sq(g.upper, h.upper)
    dl = matched_sq(g.lower, h.lower) if g.lower.shape[1] else np.zeros(g.m + 1)
    return float(math.sqrt(du @ w + dl @ w))


def _dominant_halfwave(zeta, scale):
    z = np.asarray(zeta)
    if np.abs(z).max(initial=0.0) <= 1e-12 * scale:
        return 0, None
    # endpoints carry the interface value, which vanishes after reduction
    z = z.copy()
    z[[0, -1]] = 0.0
    ser = fourier_halfwave(z, modes=z.shape[0])
    power = (ser.coeffs ** 2).sum(-1)
    l = int(np.argmax(power)) + 1
    return l, ser.coeffs[l - 1]


def _dominant_periodic(zeta, scale):
    z = np.asarray(zeta)
    if np.abs(z).max(initial=0.0) <= 1e-12 * scale:
        return 0, None, None
    P = z.shape[0]
    F = rfft(z, axis=0)
    power = (np.abs(F) ** 2).sum(-1)
    power[0] = 0.0
    p = int(np.argmax(power))
    a = 2 * F[p].real / P
    b = -2 * F[p].imag / P
    return p, a, b


def min_group_gap(f: HomogeneousMap, m: int = 256) -> float:
    """Smallest distance on the circle between sheets of different groups
    (f_0 and each f_j), relative to the largest value."""
    th = {"upper": np.linspace(0.0, math.pi, m + 1), "lower": np.linspace(math.pi, 2 * math.pi, m + 1)}
    vals = []
    for grp in f.group_sheets():
        per = {}
        for side in th:
            v = [s.values(th[side]) for s in grp if s.side == side]
            per[side] = np.stack(v, axis=1) if v else np.zeros((m + 1, 0, f.n))
        vals.append(per)
    scale = max(1e-300, max(np.abs(v).max(initial=0.0) for per in vals for v in per.values()))
    gap = math.inf
    for i in range(len(vals)):
        for j in range(i + 1, len(vals)):
            for side in th:
                A, B = vals[i][side], vals[j][side]
                if A.shape[1] == 0 or B.shape[1] == 0:
                    continue
                d = np.sqrt(((A[:, :, None, :] - B[:, None, :, :]) ** 2).sum(-1)).min()
                gap = min(gap, float(d))
    return gap / scale


def classify_tangent(g: TraceLoop, alpha=None, require_avgsym: bool = False,
                     tol: float = RESIDUAL_TOL) -> Classification:
    """Decompose the trace, read off the homogeneity of each block and fit
    the catalog template.  The residual is the L2 G-distance between the
    trace and the fitted map on the circle, both scaled to unit energy."""
    scale = g.scale()
    try:
        dec = decompose_trace(g)
    except (ResolutionError, ValueError) as exc:
        return _fail(f"decomposition failed: {exc}")
    q0 = dec.g0.q
    if q0 > 2:
        return _fail(f"half block of multiplicity {q0} has no homogeneous minimizer")
    l_hw, c = _dominant_halfwave(dec.g0.zeta, scale)
    alphas = []
    if l_hw:
        alphas.append(Fraction(l_hw, 2 * q0 - 1))
    fulls = []
    for b in dec.blocks:
        p, a, bb = _dominant_periodic(b.zeta, scale)
        fulls.append((b, p, a, bb))
        if p:
            if b.q > 1 and math.gcd(p, b.q) != 1:
                return _fail("full block is not irreducible at its dominant mode")
            alphas.append(Fraction(p, b.q))
    if not alphas:
        return _fail("trivial map", 0.0)
    if any(x != alphas[0] for x in alphas):
        return _fail("blocks have different homogeneities")
    al = alphas[0]
    if alpha is not None and abs(float(al) - float(alpha)) > 1e-6:
        return _fail("homogeneity does not match the frequency", alpha=al)
    try:
        if q0 == 2:
            if l_hw != 2:
                return _fail("two-sheeted half block away from alpha = 2/3", alpha=al)
            blocks = []
            for b, p, a, bb in fulls:
                if b.q != 3 or p != 2:
                    return _fail("case c admits only cube-root blocks of degree 2", alpha=al)
                blocks.append((b.k, a, bb))
            fit = catalog("c", n=g.n, c=c, blocks=blocks)
        elif l_hw:
            k0 = 1
            blocks = []
            tolv = 1e-6 * max(1e-300, float(np.abs(c).max()))
            for b, p, a, bb in fulls:
                if b.q != 1 or p != l_hw:
                    return _fail("case a admits only single-valued blocks of degree l", alpha=al)
                if np.abs(a).max() <= tolv and np.abs(bb - c).max() <= tolv:
                    k0 += b.k
                else:
                    blocks.append((b.k, a, bb))
            fit = catalog("a", n=g.n, k0=k0, c=c, l=l_hw, blocks=blocks)
        else:
            k0 = 1
            blocks = []
            qs = set()
            for b, p, a, bb in fulls:
                if not p:
                    if b.q != 1:
                        return _fail("vanishing block with several sheets", alpha=al)
                    k0 += b.k
                    continue
                qs.add((p, b.q))
                blocks.append((b.k, a, bb))
            (ns, qst), = qs
            fit = catalog("b", n=g.n, k0=k0, n_star=ns, q_star=qst, blocks=blocks)
    except ValueError as exc:
        return _fail(f"rejected: {exc}", alpha=al)
    e = unit_energy(g, float(al))
    if e <= 0:
        return _fail("trivial map", 0.0, al)
    resid = trace_distance(g, fit.trace(g.m)) / math.sqrt(e)
    if resid > tol:
        return Classification("unclassified", fit, resid, "residual above threshold", al)
    if min_group_gap(fit) <= 1e-6:
        return Classification("unclassified", fit, resid, "rejected: supports of different blocks meet", al)
    if require_avgsym and fit.avgsym_residual() > 1e-6 * max(1.0, scale):
        return Classification("unclassified", fit, resid, "rejected: average symmetry fails", al)
    return Classification(fit.case, fit, resid, "", al)
