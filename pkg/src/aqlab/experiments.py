"""Fixture maps shared by the verification suites, the CLI and the tests.

Every fixture is a sum of homogeneous modes r^a (A cos(w theta + psi) +
B sin(w theta + psi)) on each sheet, so its harmonic extension, frequency
and tangent map are known in closed form.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .catalog import HomogeneousMap, catalog
from .geometry import HalfDiskMesh, InterfaceMap
from .traces import TraceLoop


@dataclass(frozen=True)
class Mode:
    alpha: float
    A: np.ndarray
    B: np.ndarray
    w: float
    psi: float

    def values(self, r, theta):
        u = self.w * theta + self.psi
        return (r ** self.alpha)[..., None] * (np.cos(u)[..., None] * self.A + np.sin(u)[..., None] * self.B)


@dataclass(frozen=True)
class ModalSheet:
    side: str
    modes: tuple
    k: int = 1


@dataclass(frozen=True, eq=False)
class ModalMap:
    """A half-valued map given sheet by sheet as finite sums of modes."""
    n: int
    sheets: tuple
    name: str = ""

    @property
    def q(self) -> int:
        return sum(s.k for s in self.sheets if s.side == "upper")

    def _eval(self, side, r, theta):
        r, theta = np.broadcast_arrays(np.asarray(r, dtype=float), np.asarray(theta, dtype=float))
        cols = []
        for s in self.sheets:
            if s.side != side:
                continue
            v = np.zeros(theta.shape + (self.n,))
            for md in s.modes:
                v = v + md.values(r, theta)
            cols += [v] * s.k
        if not cols:
            return np.zeros(theta.shape + (0, self.n))
        return np.stack(cols, axis=-2)

    def upper(self, r, theta):
        return self._eval("upper", r, theta)

    def lower(self, r, theta):
        return self._eval("lower", r, theta)

    def trace(self, m: int) -> TraceLoop:
        tu = np.linspace(0.0, math.pi, m + 1)
        tl = np.linspace(math.pi, 2 * math.pi, m + 1)
        return TraceLoop(self.upper(1.0, tu), self.lower(1.0, tl))

    def on_mesh(self, mesh: HalfDiskMesh) -> InterfaceMap:
        R = mesh.radii[:, None]
        return InterfaceMap(mesh, self.upper(R, mesh.theta_upper[None, :]), self.lower(R, mesh.theta_lower[None, :]))

    def __add__(self, other: "ModalMap") -> "ModalMap":
        """Sheetwise sum; both maps must list their sheets in matching order."""
        if len(self.sheets) != len(other.sheets) or self.n != other.n:
            raise ValueError("sheet structures differ")
        out = []
        for a, b in zip(self.sheets, other.sheets):
            if a.side != b.side or a.k != b.k:
                raise ValueError("sheet structures differ")
            out.append(ModalSheet(a.side, a.modes + b.modes, a.k))
        return ModalMap(self.n, tuple(out), self.name or other.name)


def _vec(v, n):
    v = np.zeros(n) if v is None else np.atleast_1d(np.asarray(v, dtype=float))
    if v.size == 1 and n > 1:
        v = np.concatenate([v, np.zeros(n - 1)])
    return v


def from_homogeneous(f: HomogeneousMap) -> ModalMap:
    a = float(f.alpha)
    return ModalMap(f.n, tuple(ModalSheet(s.side, (Mode(a, s.A, s.B, s.w, s.psi),), s.k) for s in f.sheets()),
                    f"catalog-{f.case}")


def half_block(q0: int, modes: dict, n: int) -> list:
    """Sheets of the half block with multiplicity q0 (1 or 2 on the circle).

    modes maps a degree l to a vector c; the block is the roll-back of
    sum_l c_l rho^l sin(l phi) on its chart, whose sheets are
    r^(l/(2q0-1)) c_l sin(l (theta + 2 pi j)/(2q0-1)).
    """
    d = 2 * q0 - 1
    zero = np.zeros(n)
    out = []
    for j in range(q0):
        out.append(ModalSheet("upper", tuple(Mode(l / d, zero, _vec(c, n), l / d, 2 * math.pi * j * l / d)
                                             for l, c in modes.items())))
    for j in range(q0 - 1):
        out.append(ModalSheet("lower", tuple(Mode(l / d, zero, _vec(c, n), l / d, 2 * math.pi * j * l / d)
                                             for l, c in modes.items())))
    return out


def full_block(q: int, modes: dict, n: int, k: int = 1) -> list:
    """Sheets of a full block with q sheets; modes maps p to (A, B) and the
    sheets are sum_p r^(p/q) (A cos(p(theta + 2 pi j)/q) + B sin(...))."""
    out = []
    for side in ("upper", "lower"):
        for j in range(q):
            out.append(ModalSheet(side, tuple(Mode(p / q, _vec(a, n), _vec(b, n), p / q, 2 * math.pi * j * p / q)
                                              for p, (a, b) in modes.items()), k))
    return out


def zero_sheets(k0: int, n: int) -> list:
    out = [ModalSheet("upper", (), k0)]
    if k0 > 1:
        out.append(ModalSheet("lower", (), k0 - 1))
    return out


def modal(n, *groups, name=""):
    return ModalMap(n, tuple(s for g in groups for s in g), name)


# ------------------------------------------------------------ named fixtures

def x2_map() -> ModalMap:
    """The single-valued map x2 (Q = 1)."""
    return modal(1, half_block(1, {1: 1.0}, 1), name="x2")


def case_c(c=1.0, n=1) -> HomogeneousMap:
    return catalog("c", n=n, c=c)


def case_b_winding(n=2) -> HomogeneousMap:
    """One square-root block over a zero sheet: Q = 3, alpha = 1/2."""
    e = np.eye(n)
    return catalog("b", n=n, k0=1, n_star=1, q_star=2, blocks=[(1, e[0], e[1])])


def perturbed_c(eps=0.5) -> ModalMap:
    """Case (c) plus the next half-wave mode: chart sin(phi) + eps sin(2 phi)."""
    return modal(1, half_block(2, {2: 1.0, 4: eps}, 1), name="perturbed-c")


def perturbed_q1(eps=0.5) -> ModalMap:
    """r sin(theta) + eps r^2 sin(2 theta) with Q = 1."""
    return modal(1, half_block(1, {1: 1.0, 2: eps}, 1), name="perturbed-q1")


def perturbed_b(eps=0.5) -> ModalMap:
    """Square-root block over a zero sheet plus a degree-3/2 mode (Q = 3)."""
    e = np.eye(2)
    return modal(2, zero_sheets(1, 2), full_block(2, {1: (e[0], e[1]), 3: (eps * e[0], eps * e[1])}, 2),
                 name="perturbed-b")


PERTURBATIONS = {
    "perturbed-c": (perturbed_c, 2 / 3, 2),
    "perturbed-q1": (perturbed_q1, 1.0, 1),
    "perturbed-b": (perturbed_b, 0.5, 3),
}


def crossing_a(a: float = 0.25) -> ModalMap:
    """Two single-valued harmonic blocks whose graphs cross at interior points.

    f+ = [[x2 e3]] + [[h1]] + [[h2]] and f- = [[h1]] + [[h2]] in R^3 with
    h1,2 = 2 e1 +- d/2 and d = (Re z^2 + a, Im z^2, 0).  The sheets h1 and
    h2 meet exactly where z^2 = -a, that is at (0, +-sqrt(a)).
    """
    e = np.eye(3)
    half = {0: (2 * e[0] + 0.5 * a * e[0], None), 2: (0.5 * e[0], 0.5 * e[1])}
    other = {0: (2 * e[0] - 0.5 * a * e[0], None), 2: (-0.5 * e[0], -0.5 * e[1])}
    return modal(3, half_block(1, {1: e[2]}, 3), full_block(1, half, 3), full_block(1, other, 3), name="crossing-a")


def random_fourier(rng: np.random.Generator, max_q: int = 4, n: int = 3, modes: int = 3) -> ModalMap:
    """Random trace: a half block (Q0 = 1 or 2) plus full blocks, with
    Gaussian coefficients decaying in the degree."""
    q0 = int(rng.integers(1, 3)) if max_q >= 2 else 1
    hw = {l: rng.normal(size=n) / l for l in range(1, modes + 1)}
    groups = [half_block(q0, hw, n)]
    left = max_q - q0
    while left > 0 and rng.random() < 0.7:
        q = int(rng.integers(1, left + 1))
        fm = {p: (rng.normal(size=n) / p, rng.normal(size=n) / p) for p in range(1, modes + 1)}
        # constant offsets keep distinct blocks apart
        fm[0] = (rng.normal(size=n), np.zeros(n))
        groups.append(full_block(q, fm, n))
        left -= q
    return modal(n, *groups, name="random-fourier")


def adversarial_radial(eps=0.05, m=256):
    """u(r) g(theta) with g the case (c) trace and u = r^3/(eps + r^2).

    Not harmonic: its frequency r u'/u = 3 - 2 r^2/(eps + r^2) decreases
    from 3 to 1 + 2 eps/(1 + eps), so monotonicity must fail.
    """
    g = case_c()

    def fu(r, th):
        return (r ** 3 / (eps + r ** 2))[..., None, None] * g.upper(1.0, th)

    def fl(r, th):
        return (r ** 3 / (eps + r ** 2))[..., None, None] * g.lower(1.0, th)

    return fu, fl


def catalog_fixtures():
    """Named catalog maps used by the solver and frequency suites."""
    e = np.eye(2)
    return {
        "x2": catalog("a", n=1, k0=1, c=1.0, l=1),
        "case-a-l2": catalog("a", n=2, k0=2, c=e[0], l=2, blocks=[(1, e[1], -1.5 * e[0])]),
        "case-b-sqrt": case_b_winding(),
        "case-b-cubic": catalog("b", n=2, k0=1, n_star=2, q_star=3, blocks=[(1, e[0], e[1])]),
        "case-c": case_c(),
        "case-c-n2": case_c(c=[1.0, 0.5], n=2),
    }


def radial_extension(trace: TraceLoop, mesh: HalfDiskMesh, power: float = 1.0) -> InterfaceMap:
    """Competitor r^power g(theta): same trace, interface data (R, 0)."""
    w = (mesh.radii ** power)[:, None, None, None]
    return InterfaceMap(mesh, w * trace.upper[None], w * trace.lower[None])


# ------------------------------------------------------- exceptional 2/3 map

@dataclass(frozen=True, eq=False)
class ExceptionalResult:
    solution: object  # SolveResult
    axis_x: np.ndarray  # interface points, increasing
    axis_h: np.ndarray  # h- on the interface at those points
    sigma: float
    sign_change: bool
    left_limit: float  # h- at the node nearest to (-1, 0)
    right_limit: float  # h- at the node nearest to (1, 0)
    tangent: object  # frequency.TangentResult at the located zero
    oracle_energy: float

    def to_json(self):
        cls = self.tangent.classification
        return {"sigma": self.sigma, "sign_change": self.sign_change, "left_limit": self.left_limit,
                "right_limit": self.right_limit, "energy": self.solution.energy, "oracle_energy": self.oracle_energy,
                "tangent_case": cls.case, "tangent_residual": cls.residual,
                "alpha": self.tangent.alpha}


def exceptional_experiment(angles: int = 256, r_min: float = 1e-8, oracle_iters: int = 30) -> ExceptionalResult:
    """Solve with boundary data [[sin 2t/3]] + [[sin 2(t + 2 pi)/3]] over [[sin 2t/3]].

    The lower sheet h- restricted to the interface is read off the two axis
    columns of the lower mesh; its zero sigma is located by linear
    interpolation at the sign change, and the tangent map there is
    classified.  The mesh is centred at the origin, where the zero lies for
    this boundary datum; a zero elsewhere would need a re-centred mesh and is
    reported through sigma.  A relaxation started from the linear radial
    extension of the trace gives an independent energy for comparison.
    """
    from .frequency import tangent
    from .solver import relax_oracle, solve_branched

    g = case_c()
    tr = g.trace(angles // 2)
    sol = solve_branched(tr, r_min=r_min)
    me = sol.f.mesh
    m = me.m
    # lower column 0 is theta = pi (x < 0); column m is theta = 2 pi (x > 0)
    left = sol.f.lower[:, 0, 0, 0]
    right = sol.f.lower[:, m, 0, 0]
    x = np.concatenate([-me.radii[::-1], me.radii])
    h = np.concatenate([left[::-1], right])
    s = np.sign(h)
    idx = np.nonzero(s[:-1] * s[1:] < 0)[0]
    change = idx.size > 0
    if change:
        k = int(idx[np.argmin(np.abs(x[idx]))])
        sigma = float(x[k] - h[k] * (x[k + 1] - x[k]) / (h[k + 1] - h[k]))
    else:
        sigma = float("nan")
    tg = tangent(sol)
    # independent energy: relax the linear radial extension of the same trace
    init = radial_extension(tr, me)
    oracle = relax_oracle(tr, init, iters=oracle_iters)
    return ExceptionalResult(sol, x, h, sigma, bool(change), float(left[-1]), float(right[-1]), tg, oracle.energy)
