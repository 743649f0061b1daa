"""Frequency function, blow-ups, tangent maps and decay rates at the origin.

All quantities are read off the mesh circles r_i: D(r_i) is the energy
inside the circle, H(r_i) the integral of |f|^2 over it and I = r D / H.
Rings closer to the inner mesh edge than sqrt(r_min) are excluded from the
estimates because the free inner edge bends the discrete solution there.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.optimize import curve_fit

from .aq import matched_sq
from .classify import Classification, classify_tangent
from .geometry import InterfaceMap
from .solver import SolveResult, inner_energies, tangential_dir
from .traces import ResolutionError, TraceLoop, trace_of

ALPHA_SPREAD_TOL = 0.02
# spread of I below which a profile counts as exactly homogeneous: closed
# forms, maps sampled on the mesh, and discrete solutions (whose free inner
# ring bends I by up to about 1e-4 at the first valid ring)
EXACT_NOISE = 1e-12
SAMPLED_NOISE = 1e-9
SOLVER_NOISE = 1e-3


def _as_map(f) -> InterfaceMap:
    return f.f if isinstance(f, SolveResult) else f


# ------------------------------------------------------------------ profile

@dataclass(frozen=True, eq=False)
class FrequencyProfile:
    radii: np.ndarray
    D: np.ndarray
    H: np.ndarray
    I: np.ndarray
    valid: np.ndarray
    alpha: float
    alpha_spread: float
    hder_residual: float
    q: int
    verdict: str = "ok"
    noise: float = 1e-9  # spread of I that still counts as constant

    @property
    def inner_valid(self) -> int:
        return int(np.nonzero(self.valid)[0][0])

    def rows(self):
        return [(float(r), float(d), float(h), float(i)) for r, d, h, i in zip(self.radii, self.D, self.H, self.I)]


def profile(f, x0=(0.0, 0.0), valid_from: float | None = None, core: bool | None = None) -> FrequencyProfile:
    """Frequency profile at the mesh centre.

    The mesh is centred at the base point, so only x0 = 0 is accepted;
    re-mesh to study other interface points.  Solver outputs leave the inner
    ring free, so their energy is the sum over meshed annuli; sampled maps
    get the unmeshed core added (core=None picks by input type).
    """
    if np.any(np.abs(np.asarray(x0, dtype=float)) > 0):
        raise ValueError("profile is computed at the mesh centre; re-mesh around other base points")
    fm = _as_map(f)
    if core is None:
        core = not isinstance(f, SolveResult)
    me = fm.mesh
    r = me.radii
    H = r * fm.ring_mass()
    if not np.any(H > 0):
        z = np.zeros_like(r)
        return FrequencyProfile(r, z, z, z, np.ones_like(r, dtype=bool), 0.0, 0.0, 0.0, fm.q, "locally constant")
    D = inner_energies(fm, core)
    with np.errstate(divide="ignore", invalid="ignore"):
        I = np.where(H > 0, r * D / H, 0.0)
    lo = math.sqrt(me.r_min * me.r_max) if valid_from is None else valid_from
    valid = r >= lo * (1 - 1e-12)
    if valid.sum() < 4:
        valid = np.ones_like(valid)
    idx = np.nonzero(valid)[0]
    quart = idx[: max(2, len(idx) // 4)]
    alpha = float(np.median(I[quart]))
    spread = float(I[quart].max() - I[quart].min())
    noise = SAMPLED_NOISE if core else SOLVER_NOISE
    return FrequencyProfile(r, D, H, I, valid, alpha, spread, hder_residual(r, D, H, valid), fm.q, "ok", noise)


def profile_exact(f, radii) -> FrequencyProfile:
    """Profile of a catalog map from its closed-form circle integrals."""
    r = np.asarray(radii, dtype=float)
    D = np.array([f.energy(x) for x in r])
    H = np.array([f.boundary_mass(x) for x in r])
    I = r * D / H
    valid = np.ones_like(r, dtype=bool)
    quart = I[: max(2, r.size // 4)]
    return FrequencyProfile(r, D, H, I, valid, float(np.median(quart)), float(np.ptp(quart)),
                            hder_residual(r, D, H, valid), f.q, "ok", EXACT_NOISE)


def hder_residual(r, D, H, valid) -> float:
    """max |H' - H/r - 2D| / (2D) over interior valid rings (centred
    differences in log r)."""
    s = np.log(r)
    ds = s[1] - s[0]
    dH = (H[2:] - H[:-2]) / (2 * ds) / r[1:-1]
    res = np.abs(dH - H[1:-1] / r[1:-1] - 2 * D[1:-1])
    den = 2 * D[1:-1]
    mask = valid[1:-1] & (den > 0)
    if not mask.any():
        return 0.0
    return float((res[mask] / den[mask]).max())


def check_monotone(p: FrequencyProfile) -> float:
    """Largest drop I(r) - I(r') over valid ring pairs r < r' (0 if none)."""
    I = p.I[p.valid]
    if I.size < 2:
        return 0.0
    run_max = np.maximum.accumulate(I)
    return float(max(0.0, (run_max - I).max()))


def tmpH_residual(p: FrequencyProfile) -> float:
    """max |d/dr log(H/r) - 2I/r| relative to 2I/r over interior valid rings."""
    r, H, I = p.radii, p.H, p.I
    s = np.log(r)
    ds = s[1] - s[0]
    L = np.log(H / r)
    d = (L[2:] - L[:-2]) / (2 * ds)  # = r d/dr log(H/r)
    target = 2 * I[1:-1]
    mask = p.valid[1:-1] & (target > 0)
    return float((np.abs(d - target)[mask] / target[mask]).max()) if mask.any() else 0.0


def ratio_bounds_violation(p: FrequencyProfile, stride: int = 1) -> dict:
    """Worst violations of the two-sided H and D bounds over ring pairs s < t.

    Each bound is rewritten on the exponent scale: with
    L_H = log((H(s)/s) / (H(t)/t)) / log(s/t) and L_D = log(D(s)/D(t)) / log(s/t)
    the bounds read 2 I(s) <= L_H <= 2 I(t) and
    2 I(s) <= L_D <= 2 I(t) + log(I(s)/I(t)) / log(s/t).
    Violations are reported in frequency units (half the exponent gap), so
    they compare directly with the discretization error of I.
    """
    idx = np.nonzero(p.valid & (p.H > 0) & (p.D > 0))[0][::stride]
    r, H, D, I = p.radii[idx], p.H[idx], p.D[idx], p.I[idx]
    S, T = np.triu_indices(idx.size, 1)
    if S.size == 0:
        return {"H_lower": 0.0, "H_upper": 0.0, "D_lower": 0.0, "D_upper": 0.0}
    ls = np.log(r[S] / r[T])
    LH = np.log((H[S] / r[S]) / (H[T] / r[T])) / ls
    LD = np.log(D[S] / D[T]) / ls
    Is, It = I[S], I[T]
    worst = lambda v: float(max(0.0, 0.5 * v.max()))
    return {"H_lower": worst(LH - 2 * It), "H_upper": worst(2 * Is - LH),
            "D_lower": worst(LD - 2 * It - np.log(Is / It) / ls), "D_upper": worst(2 * Is - LD)}


def innervar_residual(f) -> float:
    """max over valid rings of |int |d_tau f|^2 - int |d_nu f|^2| relative to their sum.

    Normal derivatives on a ring average the two adjacent annuli's radial
    differences.
    """
    fm = _as_map(f)
    me = fm.mesh
    T = fm.ring_tangential / me.dtheta  # int |d_theta f|^2 dtheta
    rad = fm.annulus_radial * me.dtheta / me.ds ** 2  # int |d_s f|^2 dtheta at mid rings
    N = 0.5 * (rad[:-1] + rad[1:])
    Tm = T[1:-1]
    r = me.radii[1:-1]
    valid = r >= math.sqrt(me.r_min * me.r_max)
    den = Tm + N
    mask = valid & (den > 0)
    return float((np.abs(Tm - N)[mask] / den[mask]).max()) if mask.any() else 0.0


# ------------------------------------------------------------------ blow-ups

def blowup(f, ring: int) -> InterfaceMap:
    """f(rho x) / sqrt(D(rho)) on the unit disk, rho = r_ring."""
    fm = _as_map(f)
    D = inner_energies(fm, not isinstance(f, SolveResult))[ring]
    if not D > 0:
        raise ValueError("zero energy at this scale")
    return fm.truncate(ring).scaled(1.0 / math.sqrt(D))


def blowup_ring(fm: InterfaceMap, rho: float) -> int:
    r = fm.mesh.radii
    k = int(np.argmin(np.abs(np.log(r / rho))))
    return k


# ------------------------------------------------------------------ tangent

@dataclass(frozen=True, eq=False)
class TangentResult:
    alpha: float
    trace: TraceLoop  # unit-energy trace of the homogeneous candidate
    raw_trace: TraceLoop  # f(r*, .) / r*^alpha, the unnormalized tangent trace
    classification: Classification
    rho: np.ndarray
    deviation: np.ndarray
    slope: float | None
    fit_window: tuple
    ring: int

    def rows(self):
        return [(float(a), float(b)) for a, b in zip(self.rho, self.deviation)]


def tangent(f, alpha=None, fit_floor: float = 100.0) -> TangentResult:
    """Homogeneous tangent candidate at the origin and its deviation curve.

    The candidate is the alpha-homogeneous extension of the blow-up trace on
    the innermost valid ring.  The deviation curve is the squared L2 norm
    over the circle of G(f_rho, f_0) for every valid ring rho; its log-log
    slope is fitted where rho is at least ten times the candidate's radius
    and the deviation is above ``fit_floor`` times its level near that radius.
    """
    fm = _as_map(f)
    p = profile(f)
    if p.verdict != "ok":
        raise ValueError("zero energy at this scale")
    if p.alpha_spread > ALPHA_SPREAD_TOL:
        raise ResolutionError("insufficient resolution")
    al = float(alpha) if alpha is not None else p.alpha
    k = p.inner_valid
    rho_star = fm.mesh.radii[k]
    tr = trace_of(fm, k)
    g = tr.scaled(1.0 / math.sqrt(p.D[k]))
    raw = tr.scaled(rho_star ** (-al))
    cls = classify_tangent(g, tol=1e-3)
    idx = np.nonzero(p.valid)[0]
    dev = np.empty(idx.size)
    w = np.ones(fm.mesh.m + 1)
    w[0] = w[-1] = 0.5
    w *= fm.mesh.dtheta
    for j, i in enumerate(idx):
        gi = trace_of(fm, i).scaled(1.0 / math.sqrt(p.D[i]))
        du = matched_sq(gi.upper, g.upper)
        dl = matched_sq(gi.lower, g.lower) if g.lower.shape[1] else np.zeros_like(du)
        dev[j] = du @ w + dl @ w
    rho = fm.mesh.radii[idx]
    slope, window = _fit_slope(rho, dev, rho_star, fit_floor)
    return TangentResult(al, g, raw, cls, rho, dev, slope, window, k)


def _fit_slope(rho, dev, rho_star, fit_floor):
    near = (rho >= 2 * rho_star) & (rho <= 4 * rho_star)
    floor = float(dev[near].max()) if near.any() else 0.0
    sel = (rho >= 10 * rho_star) & (rho <= 0.5) & (dev > max(fit_floor * floor, 1e-300))
    if sel.sum() < 4:
        return None, (None, None)
    x, y = np.log(rho[sel]), np.log(dev[sel])
    slope = float(np.polyfit(x, y, 1)[0])
    return slope, (float(rho[sel][0]), float(rho[sel][-1]))


# -------------------------------------------------------------------- rates

def compute_beta(alpha, q: int) -> Fraction:
    """min over 1 <= k <= Q of the fractional gaps of alpha k and alpha (2k-1)."""
    a = Fraction(alpha).limit_denominator(10 ** 6) if not isinstance(alpha, Fraction) else alpha
    if a <= 0 or q < 1:
        raise ValueError("need alpha > 0 and Q >= 1")
    best = None
    for k in range(1, q + 1):
        for d in (k, 2 * k - 1):
            x = a * d
            v = (math.floor(x) + 1 - x) / d
            best = v if best is None or v < best else best
    return best


@dataclass(frozen=True)
class DecayFit:
    exact: bool
    alpha_limit: float
    C_hat: float | None
    beta_hat: float | None
    beta_floor: float
    H0: float
    D0: float
    d0_consistency: float
    noise: float = 1e-9

    @property
    def passes(self) -> bool:
        if self.exact:
            # closed forms satisfy D0 = a H0 to rounding; meshed maps to O(h^2)
            return self.d0_consistency <= (1e-10 if self.noise <= EXACT_NOISE else 1e-3)
        return self.beta_hat is not None and self.beta_hat >= self.beta_floor - 0.05

    def to_json(self):
        return {k: getattr(self, k) for k in ("exact", "alpha_limit", "C_hat", "beta_hat", "beta_floor", "H0", "D0",
                                              "d0_consistency", "noise")} | {"passes": self.passes}


def fit_decay(p: FrequencyProfile, alpha, q: int | None = None, noise: float | None = None) -> DecayFit:
    """Fit I(r) = a + C r^beta on the valid rings.

    The limit a is fitted rather than taken from alpha: the discrete
    frequency of a homogeneous solution differs from alpha by the O(h^2)
    discretization error, uniformly in r.  H0 and D0 are the intercepts of
    H/r^(2a+1) and D/r^(2a) regressed on r^beta.
    """
    q = p.q if q is None else q
    noise = p.noise if noise is None else noise
    floor = float(compute_beta(Fraction(alpha).limit_denominator(1000) if not isinstance(alpha, Fraction) else alpha, q))
    idx = np.nonzero(p.valid)[0]
    r, I, H, D = p.radii[idx], p.I[idx], p.H[idx], p.D[idx]
    if I.max() - I.min() <= noise * max(1.0, abs(I).max()):
        # I is flat: the limits are medians and D0 = a H0 holds up to noise
        a = float(np.median(I))
        H0 = float(np.median(H / r ** (2 * a + 1)))
        D0 = float(np.median(D / r ** (2 * a)))
        return DecayFit(True, a, None, None, floor, H0, D0, abs(D0 - a * H0) / max(abs(D0), 1e-300), noise)
    x = r / r[-1]

    def model(x, a, c, b):
        return a + c * x ** b

    p0 = (float(I[0]), float(I[-1] - I[0]), 1.0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        popt, _ = curve_fit(model, x, I, p0=p0, bounds=([-np.inf, -np.inf, 1e-3], [np.inf, np.inf, 20.0]),
                            maxfev=20000)
    a, c, b = (float(v) for v in popt)
    C_hat = abs(c) * r[-1] ** (-b)
    xb = r ** b
    H0 = float(np.polyfit(xb, H / r ** (2 * a + 1), 1)[1])
    D0 = float(np.polyfit(xb, D / r ** (2 * a), 1)[1])
    return DecayFit(False, a, C_hat, b, floor, H0, D0, abs(D0 - a * H0) / max(abs(D0), 1e-300), noise)
