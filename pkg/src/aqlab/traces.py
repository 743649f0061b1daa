"""Half-valued loops on the unit circle: sheet tracking, irreducible
decomposition, unwinding to a single function, half-wave Fourier series and
the unrolled charts on which blocks become single-valued.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.fft import dst

from .aq import AqPoint, ENUM_MAX_Q, matched_sq, permutations, with_zero, card
from .geometry import HalfDiskMesh, InterfaceMap

WELD_TOL = 1e-9
AMBIGUITY_TOL = 1e-9


class ResolutionError(ValueError):
    """Raised when the sampling is too coarse to follow sheets."""


# ------------------------------------------------------------------- traces

@dataclass(frozen=True, eq=False)
class TraceLoop:
    """upper (m+1, Q, n) on theta in [0, pi]; lower (m+1, Q-1, n) on [pi, 2pi].

    phi (2, n) holds the interface values at theta = 0 and theta = pi.
    """
    upper: np.ndarray
    lower: np.ndarray
    phi: np.ndarray | None = None

    def __post_init__(self):
        if self.upper.ndim != 3 or self.lower.ndim != 3:
            raise ValueError("trace arrays must be (samples, sheets, n)")
        if self.upper.shape[0] != self.lower.shape[0]:
            raise ValueError("upper and lower need the same sample count")
        if self.upper.shape[1] != self.lower.shape[1] + 1:
            raise ValueError("upper.q must equal lower.q + 1")

    @property
    def m(self) -> int:
        return self.upper.shape[0] - 1

    @property
    def q(self) -> int:
        return self.upper.shape[1]

    @property
    def n(self) -> int:
        return self.upper.shape[2]

    @property
    def theta_upper(self):
        return np.linspace(0.0, math.pi, self.m + 1)

    @property
    def theta_lower(self):
        return np.linspace(math.pi, 2 * math.pi, self.m + 1)

    def phi_values(self):
        if self.phi is None:
            return np.zeros(self.n), np.zeros(self.n)
        return self.phi[0], self.phi[1]

    def scale(self) -> float:
        return float(max(1.0, np.abs(self.upper).max(initial=0.0), np.abs(self.lower).max(initial=0.0)))

    def interface_residual(self) -> float:
        p0, pi_ = self.phi_values()
        a = matched_sq(self.upper[0], with_zero(self.lower[-1], p0))
        b = matched_sq(self.upper[-1], with_zero(self.lower[0], pi_))
        return float(math.sqrt(max(a, b)))

    def tangential_energy(self) -> float:
        """Dirichlet energy of the loop on the unit circle."""
        dth = math.pi / self.m
        e = matched_sq(self.upper[:-1], self.upper[1:]).sum()
        e += matched_sq(self.lower[:-1], self.lower[1:]).sum()
        return float(e / dth)

    def l2_mass(self) -> float:
        w = np.ones(self.m + 1)
        w[0] = w[-1] = 0.5
        w *= math.pi / self.m
        return float((self.upper ** 2).sum(axis=(1, 2)) @ w + (self.lower ** 2).sum(axis=(1, 2)) @ w)

    def scaled(self, a: float) -> "TraceLoop":
        return TraceLoop(self.upper * a, self.lower * a, None if self.phi is None else self.phi * a)

    def to_json(self):
        return {
            "theta": np.linspace(0.0, 2 * math.pi, 2 * self.m + 1).tolist(),
            "upper": [AqPoint.from_array(v).to_json() for v in self.upper],
            "lower": [AqPoint.from_array(v).to_json() if v.shape[0] else [] for v in self.lower],
        }

    @classmethod
    def from_json(cls, d):
        ups = [AqPoint.from_json(e).expanded() for e in d["upper"]]
        n = ups[0].shape[1]
        lows = [AqPoint.from_json(e).expanded() if e else np.zeros((0, n)) for e in d["lower"]]
        return cls(np.array(ups), np.array(lows).reshape(len(lows), -1, n))


def trace_from_functions(m: int, fu, fl, q: int, n: int, phi=None) -> TraceLoop:
    """Sample fu(theta) -> (..., Q, n) and fl(theta) -> (..., Q-1, n)."""
    tu = np.linspace(0.0, math.pi, m + 1)
    tl = np.linspace(math.pi, 2 * math.pi, m + 1)
    U = np.asarray(fu(tu), dtype=float).reshape(m + 1, q, n)
    L = np.asarray(fl(tl), dtype=float).reshape(m + 1, q - 1, n) if q > 1 else np.zeros((m + 1, 0, n))
    return TraceLoop(U, L, phi)


def trace_of(f: InterfaceMap, ring: int = -1) -> TraceLoop:
    """Trace of an interface map on one mesh circle."""
    p0, pm = f.phi_columns()
    phi = None if f.phi is None else np.stack([p0[ring], pm[ring]])
    return TraceLoop(f.upper[ring], f.lower[ring], phi)


# ----------------------------------------------------------- sheet tracking

def _pairing_differs(a, b, p1, p2, tol):
    """Do two matchings produce different multisets of (a_i, b_p(i)) pairs?"""
    P1 = np.concatenate([a, b[p1]], axis=-1)
    P2 = np.concatenate([a, b[p2]], axis=-1)
    return matched_sq(P1, P2) > tol ** 2


def select_sheets(values, check=True) -> np.ndarray:
    """Reorder a sampled multi-valued path into continuous selections.

    values: (N, Q, n).  Consecutive samples are joined by an optimal
    matching.  When a different matching is within AMBIGUITY_TOL of optimal
    and pairs the points differently, the samples cannot tell which sheet
    continues where, and ResolutionError is raised.
    """
    V = np.asarray(values, dtype=float)
    N, q = V.shape[0], V.shape[1]
    if q <= 1 or N <= 1:
        return V.copy()
    a, b = V[:-1], V[1:]
    scale = max(1.0, float(np.abs(V).max()))
    if q <= ENUM_MAX_Q:
        P = permutations(q)
        C = ((a[:, :, None, :] - b[:, None, :, :]) ** 2).sum(-1)
        tot = C[:, np.arange(q)[None, :], P].sum(-1)  # (N-1, q!)
        best = tot.argmin(axis=1)
        step = P[best]
        if check:
            bval = tot[np.arange(N - 1), best]
            near = tot <= (bval + AMBIGUITY_TOL * scale ** 2)[:, None]
            near[np.arange(N - 1), best] = False
            for k in np.nonzero(near.any(axis=1))[0]:
                for alt in np.nonzero(near[k])[0]:
                    if _pairing_differs(a[k], b[k], step[k], P[alt], WELD_TOL * scale):
                        raise ResolutionError("insufficient resolution")
    else:
        _, step = matched_sq(a, b, return_perm=True)
    out = np.empty_like(V)
    order = np.arange(q)  # order[i]: index in the current sample of sheet i
    out[0] = V[0]
    for k in range(N - 1):
        order = step[k][order]
        out[k + 1] = V[k + 1, order]
    return out


# ---------------------------------------------------------- decomposition

@dataclass(frozen=True, eq=False)
class HalfBlock:
    """Irreducible half-valued block: Q0 upper curves, Q0-1 lower curves.

    zeta samples the unwound function at (2 Q0 - 1) m + 1 equispaced points
    of [0, 2pi].
    """
    q: int
    upper: np.ndarray
    lower: np.ndarray
    zeta: np.ndarray
    irreducible: bool = True


@dataclass(frozen=True, eq=False)
class FullBlock:
    """Irreducible Q_j-valued loop; zeta is 2pi-periodic with 2 Q_j m samples."""
    q: int
    upper: np.ndarray
    lower: np.ndarray
    zeta: np.ndarray
    k: int = 1
    irreducible: bool = True


@dataclass(frozen=True, eq=False)
class IrreducibleDecomposition:
    g0: HalfBlock
    blocks: tuple
    m: int
    phi: np.ndarray | None = None

    @property
    def q(self) -> int:
        return self.g0.q + sum(b.k * b.q for b in self.blocks)

    def reconstruct(self) -> TraceLoop:
        ups = [self.g0.upper] + [np.concatenate([b.upper] * b.k, axis=1) for b in self.blocks]
        lows = [self.g0.lower] + [np.concatenate([b.lower] * b.k, axis=1) for b in self.blocks]
        return TraceLoop(np.concatenate(ups, axis=1), np.concatenate(lows, axis=1), self.phi)

    def disjoint(self, tol=WELD_TOL) -> bool:
        """Are the supports of different blocks disjoint at every sample?"""
        parts = [(self.g0.upper, self.g0.lower)] + [(b.upper, b.lower) for b in self.blocks]
        for i in range(len(parts)):
            for j in range(i + 1, len(parts)):
                for side in (0, 1):
                    A, B = parts[i][side], parts[j][side]
                    if A.shape[1] == 0 or B.shape[1] == 0:
                        continue
                    d = np.sqrt(((A[:, :, None, :] - B[:, None, :, :]) ** 2).sum(-1))
                    if d.min() <= tol * max(1.0, np.abs(A).max(), np.abs(B).max()):
                        return False
        return True


def _close(a, b, tol):
    return float(np.sqrt(((np.asarray(a) - np.asarray(b)) ** 2).sum())) <= tol


def _junctions(g: TraceLoop, U, L):
    """Optimal matchings at theta=0 and theta=pi between curve ends.

    sigma[i]: slot met by upper curve i at theta=0 (lower curve index at
    2pi, or q-1 for the interface sheet); tau[i]: same at theta=pi.
    """
    p0, ppi = g.phi_values()
    _, sigma = matched_sq(U[0], with_zero(L[-1], p0), return_perm=True)
    _, tau = matched_sq(U[-1], with_zero(L[0], ppi), return_perm=True)
    return np.array(sigma), np.array(tau)


def _decompose(g: TraceLoop, choices=(), record=None, check=True):
    q, m = g.q, g.m
    tol = WELD_TOL * g.scale()
    U = select_sheets(g.upper, check)
    L = select_sheets(g.lower, check)
    sigma, tau = _junctions(g, U, L)
    extra = q - 1
    _, ppi = g.phi_values()
    sigma_inv = np.argsort(sigma)
    choices = list(choices)

    chain = []
    i = int(sigma_inv[extra])
    used_low = set()
    while True:
        chain.append(("u", i))
        # tie point: this curve ends on the interface value and could either
        # take the interface sheet (closing the half block) or continue
        if _close(U[-1, i], ppi, tol):
            chain_u = {c for t, c in chain if t == "u"}
            holder = {int(tau[k]): k for k in range(q)}
            if tau[i] != extra:
                cont = int(tau[i])
            else:
                alts = [j for j in range(q - 1) if j not in used_low and holder[j] not in chain_u
                        and _close(L[0, j], ppi, tol)]
                cont = alts[0] if alts else None
            if cont is not None:
                close = bool(choices.pop(0)) if choices else True
                if record is not None:
                    record.append(close)
                target = extra if close else cont
                if tau[i] != target:
                    k = holder[target]
                    tau[k], tau[i] = tau[i], target
        j = int(tau[i])
        if j == extra:
            break
        chain.append(("l", j))
        used_low.add(j)
        i = int(sigma_inv[j])
        if len(chain) > 2 * q:
            raise ResolutionError("insufficient resolution")

    in_chain_u = {c for t, c in chain if t == "u"}
    q0 = len(in_chain_u)
    ch_u = [c for t, c in chain if t == "u"]
    ch_l = [c for t, c in chain if t == "l"]
    g0_upper = U[:, ch_u]
    g0_lower = L[:, ch_l]
    pieces = [U[:, ch_u[0]]]
    for a in range(q0 - 1):
        pieces.append(L[1:, ch_l[a]])
        pieces.append(U[1:, ch_u[a + 1]])
    zeta0 = np.concatenate(pieces, axis=0)
    g0 = HalfBlock(q0, g0_upper, g0_lower, zeta0,
                   irreducible=_card_ok(g0_upper, q0, tol) and _card_ok(g0_lower, q0 - 1, tol))

    cycles = []
    rest = [i for i in range(q) if i not in in_chain_u]
    seen = set()
    for start in rest:
        if start in seen:
            continue
        cu, cl = [], []
        i = start
        while True:
            seen.add(i)
            cu.append(i)
            j = int(tau[i])
            cl.append(j)
            i = int(sigma_inv[j])
            if i == start:
                break
            if len(cu) > q:
                raise ResolutionError("insufficient resolution")
        cycles.append((cu, cl))

    raw = []
    for cu, cl in cycles:
        pieces = []
        for a in range(len(cu)):
            pieces.append(U[:-1, cu[a]])
            pieces.append(L[:-1, cl[a]])
        zeta = np.concatenate(pieces, axis=0)
        bu, bl = U[:, cu], L[:, cl]
        raw.append(FullBlock(len(cu), bu, bl, zeta, 1,
                             irreducible=_card_ok(bu, len(cu), tol) and _card_ok(bl, len(cu), tol)))
    blocks = _group_identical(raw, tol)
    return IrreducibleDecomposition(g0, tuple(blocks), m, g.phi)


def _card_ok(V, q, tol):
    if q <= 1:
        return True
    return bool(np.all(card(V, tol) == q))


def _group_identical(raw, tol):
    out = []
    for b in raw:
        for idx, o in enumerate(out):
            if o.q == b.q and matched_sq(o.upper, b.upper).max() <= tol ** 2 \
                    and matched_sq(o.lower, b.lower).max() <= tol ** 2:
                out[idx] = FullBlock(o.q, o.upper, o.lower, o.zeta, o.k + 1, o.irreducible)
                break
        else:
            out.append(b)
    return out


def decompose_trace(g: TraceLoop, choices=()) -> IrreducibleDecomposition:
    """Split a half-valued loop into g0 plus sum k_j g_j.

    The half block starts at the interface sheet at theta=0 and follows
    upper and lower curves until it reaches the interface sheet at pi.  When
    several curves reach the interface value at pi, the chain closes at the
    first opportunity; ``choices`` overrides this one tie at a time.
    """
    if g.interface_residual() > 1e-8 * g.scale():
        raise ValueError("trace violates the interface condition")
    dec = _decompose(g, choices)
    rec = dec.reconstruct()
    err = max(matched_sq(rec.upper, g.upper).max(initial=0.0), matched_sq(rec.lower, g.lower).max(initial=0.0))
    if math.sqrt(err) > 1e-8 * g.scale():
        raise ResolutionError("insufficient resolution")
    return dec


def decomposition_variants(g: TraceLoop, limit: int = 8):
    """All decompositions reachable by flipping the closing ties."""
    out, frontier, seen = [], [()], set()
    while frontier and len(out) < limit:
        ch = frontier.pop(0)
        rec = []
        dec = _decompose(g, ch, rec)
        key = (dec.g0.q, tuple(sorted((b.q, b.k) for b in dec.blocks)))
        if key not in seen:
            seen.add(key)
            out.append(dec)
        for k in range(len(ch), len(rec)):
            frontier.append(tuple(rec[:k]) + (not rec[k],))
    return out


def unwind(block):
    """The single-valued function whose rolled-up copies give the block."""
    if not block.irreducible:
        raise ValueError("block is reducible")
    return block.zeta


def roll_half(zeta, q0: int, m: int):
    """Inverse of the half-block unwinding: (upper (m+1,Q0,n), lower (m+1,Q0-1,n))."""
    z = np.asarray(zeta)
    c = np.arange(m + 1)
    up = np.stack([z[c + 2 * m * j] for j in range(q0)], axis=1)
    lo = np.stack([z[m + c + 2 * m * j] for j in range(q0 - 1)], axis=1) if q0 > 1 else \
        np.zeros((m + 1, 0) + z.shape[1:])
    return up, lo


def roll_full(zeta, q: int, m: int):
    z = np.asarray(zeta)
    P = 2 * q * m
    c = np.arange(m + 1)
    up = np.stack([z[(c + 2 * m * i) % P] for i in range(q)], axis=1)
    lo = np.stack([z[(m + c + 2 * m * i) % P] for i in range(q)], axis=1)
    return up, lo


# ------------------------------------------------------------ unrolled charts

@dataclass(frozen=True, eq=False)
class UnrolledSheet:
    """A block as one function on its chart.

    values (R, P, n) on chart rings rho_i = r_i^(2/(2Q-1)) (half block) or
    r_i^(1/Q) (full block).  Half charts have P = (2Q-1)m + 1 columns on
    [0, 2pi] whose end columns carry the interface data; full charts are
    periodic with P = 2Qm columns.
    """
    mesh: HalfDiskMesh
    q: int
    half: bool
    values: np.ndarray

    @property
    def exponent(self) -> float:
        return 2.0 / (2 * self.q - 1) if self.half else 1.0 / self.q

    @property
    def columns(self) -> int:
        m = self.mesh.m
        return (2 * self.q - 1) * m + 1 if self.half else 2 * self.q * m

    @property
    def rho(self):
        return self.mesh.radii ** self.exponent

    @property
    def phi(self):
        P = self.columns
        if self.half:
            return np.linspace(0.0, 2 * math.pi, P)
        return 2 * math.pi * np.arange(P) / P

    @classmethod
    def from_function(cls, mesh, q, half, func, n=None):
        tmp = cls(mesh, q, half, np.zeros((mesh.rings, 1, 1)))
        rho = tmp.rho[:, None]
        v = np.asarray(func(rho, tmp.phi[None, :]), dtype=float)
        if v.ndim == 2:
            v = v[..., None]
        return cls(mesh, q, half, v)

    def energy(self) -> float:
        """Chart Dirichlet energy; equals the physical energy of the rolled map."""
        return chart_energy(self.values, self.mesh.kappa, periodic=not self.half)

    def boundary_energy(self) -> float:
        """integral of |d zeta/d phi|^2 over the outer chart circle."""
        v = self.values[-1]
        if self.half:
            d = np.diff(v, axis=0)
            dphi = 2 * math.pi / (self.columns - 1)
        else:
            d = np.roll(v, -1, axis=0) - v
            dphi = 2 * math.pi / self.columns
        return float((d ** 2).sum() / dphi)


def chart_energy(V, kappa, periodic):
    V = np.asarray(V, dtype=float)
    R = V.shape[0]
    rad = ((V[1:] - V[:-1]) ** 2).sum(-1)
    if periodic:
        ang = ((np.roll(V, -1, axis=1) - V) ** 2).sum(-1)
        rad_w = np.ones(V.shape[1])
    else:
        ang = ((V[:, 1:] - V[:, :-1]) ** 2).sum(-1)
        rad_w = np.ones(V.shape[1])
        rad_w[0] = rad_w[-1] = 0.5
    ring_w = np.ones(R)
    ring_w[0] = ring_w[-1] = 0.5
    return float(kappa * (rad @ rad_w).sum() + (ang.sum(axis=1) @ ring_w) / kappa)


def unroll(sheet: UnrolledSheet, k: int = 1):
    """Roll a chart back onto the half-disk mesh: (upper, lower) sheet arrays.

    For a half chart the result has Q upper and Q-1 lower sheets; for a full
    chart Q upper and Q lower, repeated k times.
    """
    m = sheet.mesh.m
    V = np.moveaxis(sheet.values, 1, 0)  # (P, R, n)
    if sheet.half:
        up, lo = roll_half(V, sheet.q, m)
    else:
        up, lo = roll_full(V, sheet.q, m)
    # (m+1, Q, R, n) -> (R, m+1, Q, n)
    up = np.moveaxis(up, 2, 0)
    lo = np.moveaxis(lo, 2, 0)
    if k > 1:
        up = np.concatenate([up] * k, axis=2)
        lo = np.concatenate([lo] * k, axis=2)
    return up, lo


def unroll_map(sheet: UnrolledSheet) -> InterfaceMap:
    up, lo = unroll(sheet)
    return InterfaceMap(sheet.mesh, up, lo, None, half=sheet.half)


# ----------------------------------------------------------- half-wave series

@dataclass(frozen=True)
class HalfWaveSeries:
    coeffs: np.ndarray  # (L, n); coeffs[l-1] multiplies sin(l phi / 2)
    parseval_residual: float

    @property
    def modes(self):
        return np.arange(1, self.coeffs.shape[0] + 1)

    def energy(self) -> float:
        """Closed-form disk energy of the extension: (pi/2) sum l |c_l|^2."""
        return float(math.pi / 2 * (self.modes * (self.coeffs ** 2).sum(-1)).sum())

    def boundary_energy(self) -> float:
        """integral over [0, 2pi] of |d zeta/d phi|^2 = (pi/4) sum l^2 |c_l|^2."""
        return float(math.pi / 4 * (self.modes ** 2 * (self.coeffs ** 2).sum(-1)).sum())


def fourier_halfwave(zeta0, modes: int = 512) -> HalfWaveSeries:
    """Coefficients c_l with zeta0(phi) = sum c_l sin(l phi / 2) on [0, 2pi].

    zeta0 is sampled at M+1 equispaced points including both endpoints,
    where it must vanish; the discrete sine transform of the interior is exact
    for the first M-1 modes.
    """
    z = np.asarray(zeta0, dtype=float)
    if z.ndim == 1:
        z = z[:, None]
    M = z.shape[0] - 1
    if np.abs(z[[0, -1]]).max() > 1e-10 * max(1.0, np.abs(z).max()):
        raise ValueError("half-wave series needs zero endpoint values")
    if M < 2:
        return HalfWaveSeries(np.zeros((0, z.shape[1])), 0.0)
    c = dst(z[1:-1], type=1, axis=0) / M
    kept = c[:modes]
    total = (z[1:-1] ** 2).sum()
    resid = abs(total - M / 2 * (kept ** 2).sum()) / total if total > 0 else 0.0
    if resid > 1e-8:
        warnings.warn(f"half-wave truncation loses {resid:.2e} of the L2 mass", RuntimeWarning, stacklevel=2)
    return HalfWaveSeries(kept, float(resid))


def halfwave_eval(series: HalfWaveSeries, phi, rho=None):
    phi = np.asarray(phi, dtype=float)
    l = series.modes
    S = np.sin(np.multiply.outer(phi, l) / 2)
    if rho is not None:
        S = S * np.power.outer(np.asarray(rho, dtype=float), l / 2)
    return S @ series.coeffs


def extend_halfwave(series: HalfWaveSeries, rho, phi):
    """sum_l rho^(l/2) c_l sin(l phi / 2) on a (rho, phi) grid (broadcast)."""
    rho = np.asarray(rho, dtype=float)
    phi = np.asarray(phi, dtype=float)
    rr, pp = np.broadcast_arrays(rho, phi)
    l = series.modes
    out = np.zeros(rr.shape + (series.coeffs.shape[1],))
    for k, c in zip(l, series.coeffs):
        if np.any(c):
            out += (rr ** (k / 2) * np.sin(k * pp / 2))[..., None] * c
    return out
