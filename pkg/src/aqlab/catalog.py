"""Homogeneous half-valued minimizers with interface (R, 0).

Every sheet of a catalog map has the form
    r^alpha (A cos(w theta + psi) + B sin(w theta + psi))
on the upper (theta in [0, pi]) or lower (theta in [pi, 2pi]) side, so the
energies and boundary masses have closed forms.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .geometry import HalfDiskMesh, InterfaceMap
from .traces import TraceLoop

CASES = ("a", "b", "c")


@dataclass(frozen=True)
class Sheet:
    side: str  # "upper" or "lower"
    A: np.ndarray
    B: np.ndarray
    w: float
    psi: float
    k: int = 1

    def values(self, theta):
        u = self.w * np.asarray(theta, dtype=float) + self.psi
        return np.cos(u)[..., None] * self.A + np.sin(u)[..., None] * self.B

    def integrals(self):
        """(int |v|^2, int |v'|^2) over the sheet's half circle, times k."""
        t0, t1 = (0.0, math.pi) if self.side == "upper" else (math.pi, 2 * math.pi)
        w = self.w
        AA, BB, AB = float(self.A @ self.A), float(self.B @ self.B), float(self.A @ self.B)
        L = t1 - t0
        if w == 0:
            return self.k * AA * L, 0.0
        u0, u1 = w * t0 + self.psi, w * t1 + self.psi
        s2 = (math.sin(2 * u1) - math.sin(2 * u0)) / (4 * w)
        c2 = -(math.cos(2 * u1) - math.cos(2 * u0)) / (4 * w)
        cos2 = L / 2 + s2
        sin2 = L / 2 - s2
        mass = AA * cos2 + BB * sin2 + 2 * AB * c2
        grad = w * w * (AA * sin2 + BB * cos2 - 2 * AB * c2)
        return self.k * mass, self.k * grad


def _vec(v, n):
    if v is None:
        raise ValueError("missing vector parameter")
    a = np.atleast_1d(np.asarray(v, dtype=float))
    if a.size != n or not np.all(np.isfinite(a)):
        raise ValueError("vector parameter must have n finite entries")
    return a


def independent(a, b, rtol=1e-8) -> bool:
    aa, bb, ab = float(a @ a), float(b @ b), float(a @ b)
    return aa > 0 and bb > 0 and aa * bb - ab * ab > rtol * aa * bb


@dataclass(frozen=True, eq=False)
class HomogeneousMap:
    case: str
    alpha: Fraction
    n: int
    k0: int
    c: np.ndarray | None
    blocks: tuple  # of (k_j, a_j, b_j)
    l: int | None = None
    n_star: int | None = None
    q_star: int | None = None

    # ------------------------------------------------------------- sheets

    @property
    def q(self) -> int:
        K = sum(k for k, _, _ in self.blocks)
        if self.case == "a":
            return self.k0 + K
        if self.case == "b":
            return self.k0 + self.q_star * K
        return 2 + 3 * K

    def group_sheets(self):
        """Sheets grouped as [f_0, f_1, ..., f_J]."""
        zero = np.zeros(self.n)
        groups = [[]] + [[] for _ in self.blocks]
        sides = (("upper", self.k0), ("lower", self.k0 - 1))
        if self.case == "a":
            l = float(self.l)
            for side, k in sides:
                if k:
                    groups[0].append(Sheet(side, zero, self.c, l, 0.0, k))
                for j, (kj, a, b) in enumerate(self.blocks):
                    groups[j + 1].append(Sheet(side, a, b, l, 0.0, kj))
        elif self.case == "b":
            w = self.n_star / self.q_star
            for side, k in sides:
                if k:
                    groups[0].append(Sheet(side, zero, zero, 0.0, 0.0, k))
                for j, (kj, a, b) in enumerate(self.blocks):
                    for r in range(self.q_star):
                        groups[j + 1].append(Sheet(side, a, b, w, 2 * math.pi * r * w, kj))
        else:
            w = 2.0 / 3.0
            groups[0] += [Sheet("upper", zero, self.c, w, 0.0), Sheet("upper", zero, self.c, w, 4 * math.pi / 3),
                          Sheet("lower", zero, self.c, w, 0.0)]
            for side in ("upper", "lower"):
                for j, (kj, a, b) in enumerate(self.blocks):
                    for r in range(3):
                        groups[j + 1].append(Sheet(side, a, b, w, 4 * math.pi * r / 3, kj))
        return groups

    def sheets(self):
        return [s for grp in self.group_sheets() for s in grp]

    def _eval(self, side, r, theta):
        r, theta = np.broadcast_arrays(np.asarray(r, dtype=float), np.asarray(theta, dtype=float))
        cols = []
        for s in self.sheets():
            if s.side == side:
                v = s.values(theta)
                cols += [v] * s.k
        if not cols:
            return np.zeros(theta.shape + (0, self.n))
        V = np.stack(cols, axis=-2)
        return V * (r ** float(self.alpha))[..., None, None]

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

    # ------------------------------------------------------ closed forms

    def circle_integrals(self):
        mass = grad = 0.0
        for s in self.sheets():
            a, b = s.integrals()
            mass += a
            grad += b
        return mass, grad

    def energy(self, r: float = 1.0) -> float:
        """Dir(f, B_r) = r^(2 alpha) (alpha^2 int|g|^2 + int|g'|^2) / (2 alpha)."""
        a = float(self.alpha)
        mass, grad = self.circle_integrals()
        return r ** (2 * a) * (a * a * mass + grad) / (2 * a)

    def boundary_mass(self, r: float = 1.0) -> float:
        """H(r) = integral of |f|^2 over the circle of radius r."""
        a = float(self.alpha)
        return r ** (2 * a + 1) * self.circle_integrals()[0]

    def boundary_energy(self, r: float = 1.0) -> float:
        """Tangential Dirichlet energy of the trace on the circle of radius r."""
        a = float(self.alpha)
        return r ** (2 * a - 1) * self.circle_integrals()[1]

    def scaled(self, s: float) -> "HomogeneousMap":
        c = None if self.c is None else self.c * s
        blocks = tuple((k, a * s, b * s) for k, a, b in self.blocks)
        return HomogeneousMap(self.case, self.alpha, self.n, self.k0, c, blocks, self.l, self.n_star, self.q_star)

    def normalized(self) -> "HomogeneousMap":
        e = self.energy()
        return self.scaled(1.0 / math.sqrt(e)) if e > 0 else self

    def avgsym_residual(self, m: int = 256) -> float:
        """max over the circle of |Q eta+(x) - (Q-1) eta-(xbar)|."""
        tu = np.linspace(0.0, math.pi, m + 1)
        su = self.upper(1.0, tu).sum(axis=-2)
        sl = self.lower(1.0, 2 * math.pi - tu).sum(axis=-2)
        return float(np.abs(su - sl).max(initial=0.0))

    # ------------------------------------------------------------------ io

    def to_json(self):
        d = {"case": self.case, "alpha": str(self.alpha), "n": self.n, "k0": self.k0, "Q": self.q,
             "blocks": [{"k": int(k), "a": a.tolist(), "b": b.tolist()} for k, a, b in self.blocks]}
        if self.c is not None:
            d["c"] = self.c.tolist()
        if self.case == "a":
            d["l"] = self.l
        if self.case == "b":
            d["n_star"], d["q_star"] = self.n_star, self.q_star
        return d

    @classmethod
    def from_json(cls, d):
        return catalog(d["case"], **{k: v for k, v in d.items() if k not in ("case", "alpha", "Q")})


def catalog(case: str, n: int = 1, k0: int = 1, c=None, blocks=(), l: int | None = None,
            n_star: int | None = None, q_star: int | None = None) -> HomogeneousMap:
    """Build a homogeneous map of case a, b or c.

    blocks is a sequence of (k_j, a_j, b_j) or dicts with keys k, a, b.
    """
    if case not in CASES:
        raise ValueError(f"unknown case {case!r}")
    bl = []
    for b in blocks:
        if isinstance(b, dict):
            kj, a, bb = b["k"], b["a"], b["b"]
        else:
            kj, a, bb = b
        a, bb = _vec(a, n), _vec(bb, n)
        if int(kj) < 1:
            raise ValueError("block multiplicities must be positive")
        if not independent(a, bb):
            raise ValueError("a_j and b_j must be linearly independent")
        bl.append((int(kj), a, bb))
    if case == "a":
        if l is None or int(l) < 1:
            raise ValueError("case a needs an integer l >= 1")
        if k0 < 1:
            raise ValueError("k0 must be at least 1")
        cv = _vec(c, n)
        if not np.any(cv):
            raise ValueError("c must be nonzero")
        return HomogeneousMap("a", Fraction(int(l)), n, int(k0), cv, tuple(bl), l=int(l))
    if case == "b":
        if n_star is None or q_star is None or int(n_star) < 1 or int(q_star) < 1:
            raise ValueError("case b needs positive integers n_star and q_star")
        if math.gcd(int(n_star), int(q_star)) != 1:
            raise ValueError("gcd(n*, Q*) must be 1")
        if k0 < 1:
            raise ValueError("k0 must be at least 1")
        return HomogeneousMap("b", Fraction(int(n_star), int(q_star)), n, int(k0), None, tuple(bl),
                              n_star=int(n_star), q_star=int(q_star))
    cv = _vec(c, n)
    if not np.any(cv):
        raise ValueError("c must be nonzero")
    return HomogeneousMap("c", Fraction(2, 3), n, 2, cv, tuple(bl))


def random_catalog(rng: np.random.Generator, case: str | None = None, n: int = 3, max_q: int = 5) -> HomogeneousMap:
    """Random catalog map with balanced means and well separated blocks.

    The last block's b vector is chosen so that Q eta+(x) = (Q-1) eta-(xbar).
    """
    case = case or rng.choice(list(CASES))
    for _ in range(200):
        try:
            f = _draw(rng, case, n, max_q)
        except ValueError:
            continue
        if f.q <= max_q and _well_separated(f):
            return f
    raise RuntimeError("could not draw a separated catalog map")


def _draw(rng, case, n, max_q):
    def vec():
        return rng.normal(size=n)

    if case == "a":
        l = int(rng.integers(1, 4))
        k0 = int(rng.integers(1, 3))
        J = int(rng.integers(1, max(2, max_q - k0 + 1)))
        c = vec()
        ks = [int(rng.integers(1, 2)) for _ in range(J)]
        a = [vec() for _ in range(J)]
        b = [vec() for _ in range(J)]
        b[-1] = -((2 * k0 - 1) * c + 2 * sum(k * bb for k, bb in zip(ks[:-1], b[:-1]))) / (2 * ks[-1])
        return catalog("a", n=n, k0=k0, c=c, l=l, blocks=list(zip(ks, a, b)))
    if case == "b":
        choices = [(1, 2), (3, 2), (1, 3), (2, 3), (1, 1), (2, 1)]
        ns, qs = choices[int(rng.integers(len(choices)))]
        k0 = int(rng.integers(1, 3))
        J = max(1, min(2, (max_q - k0) // qs))
        return catalog("b", n=n, k0=k0, n_star=ns, q_star=qs,
                       blocks=[(1, vec(), vec()) for _ in range(J)])
    J = int(rng.integers(0, 2)) if max_q >= 5 else 0
    return catalog("c", n=n, c=vec(), blocks=[(1, vec(), vec()) for _ in range(J)])


def _well_separated(f: HomogeneousMap, m: int = 256, rel: float = 0.05) -> bool:
    """Distinct sheet groups stay apart on the unit circle (outside the axis
    coincidences required by the interface condition)."""
    tr = f.trace(m)
    scale = max(1e-12, float(np.abs(tr.upper).max()))
    for V in (tr.upper[1:-1], tr.lower[1:-1]):
        if V.shape[1] < 2:
            continue
        d = np.sqrt(((V[:, :, None, :] - V[:, None, :, :]) ** 2).sum(-1))
        iu = np.triu_indices(V.shape[1], 1)
        dd = d[:, iu[0], iu[1]]
        # exact duplicates (multiplicity) are allowed; near misses are not
        bad = (dd > 1e-12 * scale) & (dd < rel * scale)
        if bad.any():
            return False
    return True
