"""Half-disk meshes, interface maps and the reduction to a straight interface.

The mesh is a tensor grid that is uniform in (s, theta) with s = log r, so
every circle of radius r_i is a mesh line and the Dirichlet integral takes
the conformally flat form  sum |d_s f|^2 + |d_theta f|^2  ds dtheta.

Upper values live on theta in [0, pi] (columns 0..m), lower values on
theta in [pi, 2pi] (columns 0..m).  Lower column 0 sits at theta = pi, which
is the same physical point as upper column m; lower column m sits at
theta = 2pi, the same point as upper column 0.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .aq import AqPoint, HalfAqPoint, matched_sq, with_zero

INTERFACE_TOL = 1e-10


# ------------------------------------------------------------------- meshes

@dataclass(frozen=True)
class HalfDiskMesh:
    rings: int
    angles: int
    r_min: float
    r_max: float = 1.0

    def __post_init__(self):
        if self.rings < 2:
            raise ValueError("mesh needs at least two rings")
        if self.angles < 4 or self.angles % 2:
            raise ValueError("angular count must be even and at least 4")
        if not 0 < self.r_min < self.r_max:
            raise ValueError("need 0 < r_min < r_max")

    @classmethod
    def square(cls, angles: int, r_min: float, r_max: float = 1.0):
        """Mesh whose cells are close to square in (log r, theta)."""
        dth = 2 * math.pi / angles
        rings = max(2, int(round(math.log(r_max / r_min) / dth)) + 1)
        return cls(rings, angles, r_min, r_max)

    @property
    def m(self) -> int:
        return self.angles // 2

    @cached_property
    def radii(self) -> np.ndarray:
        return np.geomspace(self.r_min, self.r_max, self.rings)

    @property
    def ds(self) -> float:
        return math.log(self.r_max / self.r_min) / (self.rings - 1)

    @property
    def dtheta(self) -> float:
        return 2 * math.pi / self.angles

    @property
    def kappa(self) -> float:
        """Cell aspect ratio dtheta/ds (weight of radial edges)."""
        return self.dtheta / self.ds

    @cached_property
    def theta_upper(self) -> np.ndarray:
        return np.linspace(0.0, math.pi, self.m + 1)

    @cached_property
    def theta_lower(self) -> np.ndarray:
        return np.linspace(math.pi, 2 * math.pi, self.m + 1)

    def _xy(self, th):
        r = self.radii[:, None]
        return np.stack([r * np.cos(th)[None, :], r * np.sin(th)[None, :]], axis=-1)

    @cached_property
    def upper_xy(self) -> np.ndarray:
        xy = self._xy(self.theta_upper)
        xy[:, 0, 1] = 0.0
        xy[:, -1, 1] = 0.0
        return xy

    @cached_property
    def lower_xy(self) -> np.ndarray:
        xy = self._xy(self.theta_lower)
        xy[:, 0, 1] = 0.0
        xy[:, -1, 1] = 0.0
        return xy

    @cached_property
    def column_weights(self) -> np.ndarray:
        """Trapezoid weights per side: interface columns are shared halves."""
        w = np.ones(self.m + 1)
        w[0] = w[-1] = 0.5
        return w

    def interface_nodes(self):
        """List of (ring, upper column, lower column) triples on the x1-axis."""
        out = []
        for i in range(self.rings):
            out.append((i, 0, self.m))
            out.append((i, self.m, 0))
        return out

    def truncate(self, k: int) -> "HalfDiskMesh":
        """Rings 0..k rescaled so ring k becomes the unit circle."""
        rho = self.radii[k]
        return HalfDiskMesh(k + 1, self.angles, self.r_min / rho, self.r_max * self.radii[k] / rho)

    def to_json(self):
        return {"rings": self.rings, "angles": self.angles, "r_min": self.r_min, "r_max": self.r_max}

    @classmethod
    def from_json(cls, d):
        return cls(int(d["rings"]), int(d["angles"]), float(d["r_min"]), float(d.get("r_max", 1.0)))


def reflect(x):
    """(x1, x2) -> (x1, -x2)."""
    x = np.array(x, dtype=float)
    x[..., 1] = -x[..., 1]
    return x


# ---------------------------------------------------------------- edge data

@dataclass(frozen=True)
class EdgeEnergies:
    """Matched squared differences on every mesh edge.

    rad_*[i, c]: edge ring i -> i+1 at column c;  ang_*[i, c]: column c -> c+1.
    """
    rad_upper: np.ndarray
    rad_lower: np.ndarray
    ang_upper: np.ndarray
    ang_lower: np.ndarray


# ------------------------------------------------------------- the map type

@dataclass(frozen=True, eq=False)
class InterfaceMap:
    """A (Q-1/2)-valued map sampled on a half-disk mesh.

    upper: (R, m+1, Q, n), lower: (R, m+1, Q-1, n).  phi: None (zero) or an
    array (2, R, n) of interface data at theta = 0 and theta = pi.  With
    half=False the map is full-valued: lower carries Q sheets as well and
    matches upper on the axis.
    """
    mesh: HalfDiskMesh
    upper: np.ndarray
    lower: np.ndarray
    phi: np.ndarray | None = None
    half: bool = True

    def __post_init__(self):
        R, m1 = self.mesh.rings, self.mesh.m + 1
        U, L = self.upper, self.lower
        if U.ndim != 4 or U.shape[:2] != (R, m1) or L.ndim != 4 or L.shape[:2] != (R, m1):
            raise ValueError("sheet arrays do not match the mesh")
        want = U.shape[2] - 1 if self.half else U.shape[2]
        if L.shape[2] != want or L.shape[3] != U.shape[3]:
            raise ValueError("upper.q must equal lower.q + 1" if self.half else "full-valued map needs equal sheet counts")

    @property
    def q(self) -> int:
        return self.upper.shape[2]

    @property
    def n(self) -> int:
        return self.upper.shape[3]

    def phi_columns(self):
        """(phi at theta=0, phi at theta=pi), each (R, n)."""
        if self.phi is None:
            z = np.zeros((self.mesh.rings, self.n))
            return z, z
        return self.phi[0], self.phi[1]

    def at(self, i: int, c: int) -> HalfAqPoint:
        """Values at upper node (i, c) paired with the reflected lower node."""
        return HalfAqPoint(AqPoint.from_array(self.upper[i, c]),
                           AqPoint.from_array(self.lower[i, self.mesh.m - c]))

    # ---------------------------------------------------------- interface

    def interface_residual(self) -> float:
        """max G between f+ and f- + [[phi]] over the axis nodes."""
        m = self.mesh.m
        p0, pm = self.phi_columns()
        if self.half:
            r0 = matched_sq(self.upper[:, 0], with_zero(self.lower[:, m], p0))
            r1 = matched_sq(self.upper[:, m], with_zero(self.lower[:, 0], pm))
        else:
            r0 = matched_sq(self.upper[:, 0], self.lower[:, m])
            r1 = matched_sq(self.upper[:, m], self.lower[:, 0])
        return float(np.sqrt(max(r0.max(initial=0.0), r1.max(initial=0.0))))

    @property
    def interface_ok(self) -> bool:
        return self.interface_residual() <= INTERFACE_TOL * max(1.0, self.scale())

    def scale(self) -> float:
        s = np.abs(self.upper).max(initial=0.0)
        return float(max(s, np.abs(self.lower).max(initial=0.0)))

    # ------------------------------------------------------------- energy

    @cached_property
    def edges(self) -> EdgeEnergies:
        U, L = self.upper, self.lower
        return EdgeEnergies(
            rad_upper=matched_sq(U[:-1], U[1:]),
            rad_lower=matched_sq(L[:-1], L[1:]),
            ang_upper=matched_sq(U[:, :-1], U[:, 1:]),
            ang_lower=matched_sq(L[:, :-1], L[:, 1:]),
        )

    @cached_property
    def ring_tangential(self) -> np.ndarray:
        """sum over angular edges of G^2 on each ring (both sides)."""
        e = self.edges
        return e.ang_upper.sum(axis=1) + e.ang_lower.sum(axis=1)

    @cached_property
    def annulus_radial(self) -> np.ndarray:
        """trapezoid sum over columns of radial-edge G^2, per annulus."""
        e = self.edges
        w = self.mesh.column_weights
        return e.rad_upper @ w + e.rad_lower @ w

    @cached_property
    def annulus_energies(self) -> np.ndarray:
        """Energy of each annulus between consecutive rings."""
        k = self.mesh.kappa
        T = self.ring_tangential
        return self.annulus_radial * k + 0.5 * (T[:-1] + T[1:]) / k

    def energy(self) -> float:
        return assemble_energy(self)

    def ring_mass(self) -> np.ndarray:
        """theta-integral of |f|^2 on each ring (trapezoid, both sides)."""
        w = self.mesh.column_weights * self.mesh.dtheta
        su = (self.upper ** 2).sum(axis=(2, 3)) @ w
        sl = (self.lower ** 2).sum(axis=(2, 3)) @ w
        return su + sl

    # --------------------------------------------------------- arithmetic

    def add_field(self, fu, fl, phi_shift=None):
        """Add single-valued fields (R, m+1, n) to every sheet on each side."""
        fu = np.asarray(fu, dtype=float)[:, :, None, :]
        fl = np.asarray(fl, dtype=float)[:, :, None, :]
        phi = self.phi
        if phi_shift is not None:
            phi = (np.zeros((2, self.mesh.rings, self.n)) if phi is None else phi) + phi_shift
        return InterfaceMap(self.mesh, self.upper + fu, self.lower + fl, phi, self.half)

    def scaled(self, factor: float) -> "InterfaceMap":
        phi = None if self.phi is None else self.phi * factor
        return InterfaceMap(self.mesh, self.upper * factor, self.lower * factor, phi, self.half)

    def truncate(self, k: int) -> "InterfaceMap":
        phi = None if self.phi is None else self.phi[:, : k + 1]
        return InterfaceMap(self.mesh.truncate(k), self.upper[: k + 1], self.lower[: k + 1], phi, self.half)

    # ------------------------------------------------------------------ io

    def to_json(self):
        return {
            "mesh": self.mesh.to_json(),
            "half": self.half,
            "upper": self.upper.tolist(),
            "lower": self.lower.tolist(),
            "phi": None if self.phi is None else self.phi.tolist(),
        }

    @classmethod
    def from_json(cls, d):
        mesh = HalfDiskMesh.from_json(d["mesh"])
        n = None
        U = np.array(d["upper"], dtype=float)
        n = U.shape[-1]
        L = np.array(d["lower"], dtype=float).reshape(mesh.rings, mesh.m + 1, -1, n)
        phi = None if d.get("phi") is None else np.array(d["phi"], dtype=float)
        return cls(mesh, U, L, phi, bool(d.get("half", True)))

    def node_rows(self):
        """Yield (side, ring, column, r, theta, x1, x2, AqPoint JSON) per node."""
        me = self.mesh
        for side, arr, th, xy in (("upper", self.upper, me.theta_upper, me.upper_xy),
                                  ("lower", self.lower, me.theta_lower, me.lower_xy)):
            for i in range(me.rings):
                for c in range(me.m + 1):
                    pt = AqPoint.from_array(arr[i, c]) if arr.shape[2] else None
                    yield side, i, c, me.radii[i], th[c], xy[i, c, 0], xy[i, c, 1], pt


def from_functions(mesh: HalfDiskMesh, fu, fl, q: int, n: int, phi=None, half=True) -> InterfaceMap:
    """Sample f+ = fu(r, theta) -> (..., Q, n) and f- = fl(r, theta) -> (..., Q-1, n)."""
    R = mesh.radii[:, None]
    U = np.asarray(fu(R, mesh.theta_upper[None, :]), dtype=float).reshape(mesh.rings, mesh.m + 1, q, n)
    ql = q - 1 if half else q
    if ql:
        L = np.asarray(fl(R, mesh.theta_lower[None, :]), dtype=float).reshape(mesh.rings, mesh.m + 1, ql, n)
    else:
        L = np.zeros((mesh.rings, mesh.m + 1, 0, n))
    return InterfaceMap(mesh, U, L, phi, half)


def assemble_energy(f: InterfaceMap, rings=None) -> float:
    """Discrete Dirichlet energy over the meshed annulus r_min <= r <= r_max.

    Each edge contributes its optimally matched squared jump times the
    conformal weight of its dual cell; ``rings=(i, j)`` restricts to the
    annuli between ring i and ring j, which makes the energy additive.
    """
    A = f.annulus_energies
    if rings is None:
        return float(A.sum())
    i, j = rings
    return float(A[i:j].sum())


def physical_energy(f: InterfaceMap, coords_upper, coords_lower) -> float:
    """P1 finite-element energy of the node values placed at given coordinates.

    Every grid cell is split into two triangles; within each triangle the
    sheets at the two other vertices are matched to the first one.  Used to
    check conformal invariance under a change of node positions.
    """
    total = 0.0
    for V, X in ((f.upper, coords_upper), (f.lower, coords_lower)):
        if V.shape[2] == 0:
            continue
        for tri in (((0, 0), (1, 0), (1, 1)), ((0, 0), (1, 1), (0, 1))):
            (a0, b0), (a1, b1), (a2, b2) = tri
            R, C = V.shape[0] - 1, V.shape[1] - 1
            v0 = V[a0:a0 + R, b0:b0 + C]
            v1 = V[a1:a1 + R, b1:b1 + C]
            v2 = V[a2:a2 + R, b2:b2 + C]
            x0 = X[a0:a0 + R, b0:b0 + C]
            x1 = X[a1:a1 + R, b1:b1 + C]
            x2 = X[a2:a2 + R, b2:b2 + C]
            _, p1 = matched_sq(v0, v1, return_perm=True)
            _, p2 = matched_sq(v0, v2, return_perm=True)
            v1 = np.take_along_axis(v1, p1[..., None], axis=-2)
            v2 = np.take_along_axis(v2, p2[..., None], axis=-2)
            e1 = x1 - x0
            e2 = x2 - x0
            det = e1[..., 0] * e2[..., 1] - e1[..., 1] * e2[..., 0]
            area = 0.5 * np.abs(det)
            d1 = v1 - v0
            d2 = v2 - v0
            # gradient of the linear interpolant: solve [e1; e2] g = [d1; d2]
            inv = np.stack([np.stack([e2[..., 1], -e1[..., 1]], -1),
                            np.stack([-e2[..., 0], e1[..., 0]], -1)], -2) / det[..., None, None]
            gx = inv[..., 0, 0, None, None] * d1 + inv[..., 0, 1, None, None] * d2
            gy = inv[..., 1, 0, None, None] * d1 + inv[..., 1, 1, None, None] * d2
            total += float(((gx ** 2 + gy ** 2).sum(axis=(-1, -2)) * area).sum())
    return total


# ------------------------------------------------------ analytic interfaces

@dataclass(frozen=True)
class AnalyticInterface:
    """Graph x2 = sum_k taylor[k-2] x1^k with polynomial interface data.

    phi_poly[k] is the coefficient vector of t^k in the interface datum.
    """
    taylor: tuple = ()
    phi_poly: tuple = ()
    n: int = 1

    def graph(self, t):
        t = np.asarray(t, dtype=float)
        return sum(a * t ** (k + 2) for k, a in enumerate(self.taylor)) + 0.0 * t


@dataclass(frozen=True)
class Straightening:
    taylor: tuple
    radius: float

    def forward(self, z):
        z = np.asarray(z, dtype=complex)
        return z + sum(1j * a * z ** (k + 2) for k, a in enumerate(self.taylor))

    def derivative(self, z):
        z = np.asarray(z, dtype=complex)
        return 1.0 + sum(1j * a * (k + 2) * z ** (k + 1) for k, a in enumerate(self.taylor))

    def inverse(self, w, tol=1e-12, maxit=100):
        w = np.asarray(w, dtype=complex)
        z = w.copy()
        for _ in range(maxit):
            dz = (self.forward(z) - w) / self.derivative(z)
            z = z - dz
            if np.all(np.abs(dz) <= tol * np.maximum(1.0, np.abs(z))):
                break
        else:
            raise ArithmeticError("Newton inverse did not converge")
        return z


def straighten(interface: AnalyticInterface, radius: float, samples: int = 4096) -> Straightening:
    """Holomorphic straightening z + sum i a_k z^k of the interface graph.

    |Phi' - 1| is a polynomial modulus, so its maximum over the closed disk is
    taken on the boundary circle, which is sampled densely.
    """
    st = Straightening(tuple(float(a) for a in interface.taylor), float(radius))
    z = radius * np.exp(2j * np.pi * np.arange(samples) / samples)
    if np.abs(st.derivative(z) - 1.0).max(initial=0.0) >= 0.5:
        raise ValueError("radius too large for invertibility")
    return st


@dataclass(frozen=True)
class HarmonicPolynomial:
    """sum_k p_k Re((x1 + i x2)^k): harmonic with trace sum p_k t^k on x2 = 0."""
    coeffs: np.ndarray  # (deg+1, n)

    def __call__(self, x1, x2):
        z = np.asarray(x1, dtype=float) + 1j * np.asarray(x2, dtype=float)
        out = np.zeros(z.shape + (self.coeffs.shape[1],))
        zk = np.ones_like(z)
        for p in self.coeffs:
            out += np.real(zk)[..., None] * p
            zk = zk * z
        return out

    def on_mesh(self, mesh: HalfDiskMesh):
        u = self(mesh.upper_xy[..., 0], mesh.upper_xy[..., 1])
        l = self(mesh.lower_xy[..., 0], mesh.lower_xy[..., 1])
        return u, l


def harmonic_extend(phi_poly, n: int | None = None) -> HarmonicPolynomial:
    if callable(phi_poly) or isinstance(phi_poly, (str, bytes)):
        raise ValueError("unsupported boundary class")
    try:
        rows = [np.atleast_1d(np.asarray(p, dtype=float)) for p in phi_poly]
    except (TypeError, ValueError) as exc:
        raise ValueError("unsupported boundary class") from exc
    if not rows:
        return HarmonicPolynomial(np.zeros((1, n or 1)))
    width = max(r.size for r in rows)
    if any(r.size not in (1, width) for r in rows) or not all(np.all(np.isfinite(r)) for r in rows):
        raise ValueError("unsupported boundary class")
    C = np.array([np.broadcast_to(r, (width,)) for r in rows])
    if n is not None and width not in (1, n):
        raise ValueError("unsupported boundary class")
    if n is not None and width == 1:
        C = np.repeat(C, n, axis=1)
    return HarmonicPolynomial(C)


def subtract_interface(f: InterfaceMap, ext: HarmonicPolynomial, sign: float = -1.0) -> InterfaceMap:
    """Subtract (sign=-1) or add back (sign=+1) a harmonic extension sheetwise."""
    u, l = ext.on_mesh(f.mesh)
    if u.shape[-1] == 1 and f.n > 1:
        u = np.repeat(u, f.n, -1)
        l = np.repeat(l, f.n, -1)
    R = f.mesh.radii
    shift = np.stack([ext(R, 0 * R), ext(-R, 0 * R)])
    if shift.shape[-1] != f.n:
        shift = np.repeat(shift, f.n, -1)
    out = f.add_field(sign * u, sign * l, sign * shift)
    if out.phi is not None and np.abs(out.phi).max(initial=0.0) <= 1e-13 * max(1.0, np.abs(shift).max()):
        out = InterfaceMap(out.mesh, out.upper, out.lower, None, out.half)
    return out


def add_interface(f: InterfaceMap, ext: HarmonicPolynomial) -> InterfaceMap:
    return subtract_interface(f, ext, sign=+1.0)


def normalize_average(f: InterfaceMap, tol: float = 1e-10) -> InterfaceMap:
    """Subtract the odd field phi = (Q eta+(x) - (Q-1) eta-(xbar))/(2Q-1).

    Afterwards Q eta+(x) = (Q-1) eta-(xbar) at every node pair.
    """
    if f.phi is not None and np.abs(f.phi).max(initial=0.0) > tol:
        raise ValueError("normalize_average needs interface data (R, 0)")
    m = f.mesh.m
    Su = f.upper.sum(axis=2)  # (R, m+1, n)
    Sl_reflected = f.lower.sum(axis=2)[:, ::-1]  # lower node xbar aligned with upper x
    scale = max(1.0, f.scale())
    gap = np.abs(Su[:, [0, m]] - Sl_reflected[:, [0, m]]).max(initial=0.0)
    if gap > tol * scale * f.q:
        raise ValueError("interface mean mismatch")
    phi = (Su - Sl_reflected) / (2 * f.q - 1)
    phi[:, [0, m]] = 0.0
    return InterfaceMap(f.mesh, f.upper - phi[:, :, None, :], f.lower + phi[:, ::-1, None, :], f.phi, f.half)


def avgsym_residual(f: InterfaceMap) -> float:
    """max |Q eta+(x) - (Q-1) eta-(xbar)| over node pairs."""
    Su = f.upper.sum(axis=2)
    Sl = f.lower.sum(axis=2)[:, ::-1]
    return float(np.abs(Su - Sl).max(initial=0.0))
