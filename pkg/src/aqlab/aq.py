"""Unordered Q-tuples of points in R^n and the matching metric G.

An ``AqPoint`` is stored canonically: distinct support points sorted
lexicographically, each with an integer multiplicity.  Most field-level code
works on plain arrays of shape (..., Q, n) instead; the batch helpers at the
bottom of this module compute matched squared distances for those.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import linear_sum_assignment

WELD_RTOL = 1e-14


@dataclass(frozen=True, eq=False)
class AqPoint:
    pts: np.ndarray  # (m, n) distinct support points, lexicographic order
    mult: np.ndarray  # (m,) positive integers

    def __post_init__(self):
        self.pts.setflags(write=False)
        self.mult.setflags(write=False)

    @classmethod
    def from_array(cls, arr, n=None):
        """Build from a (Q, n) array of points (repetitions allowed)."""
        a = np.asarray(arr, dtype=float)
        if a.ndim == 1:
            a = a.reshape(-1, 1) if n in (None, 1) else a.reshape(-1, n)
        if a.shape[0] == 0:
            return cls(np.zeros((0, a.shape[1] if a.ndim == 2 else (n or 1))), np.zeros(0, dtype=int))
        return cls._canonical(a, np.ones(a.shape[0], dtype=int))

    @classmethod
    def from_pairs(cls, pairs):
        pts = np.array([np.atleast_1d(np.asarray(p, dtype=float)) for p, _ in pairs])
        mult = np.array([int(k) for _, k in pairs], dtype=int)
        if np.any(mult <= 0):
            raise ValueError("multiplicities must be positive")
        return cls._canonical(pts, mult)

    @classmethod
    def _canonical(cls, pts, mult):
        order = np.lexsort(pts.T[::-1])
        pts, mult = pts[order], mult[order]
        scale = max(1.0, float(np.max(np.abs(pts)))) if pts.size else 1.0
        tol = WELD_RTOL * scale
        out_p, out_k = [], []
        for p, k in zip(pts, mult):
            for i, q in enumerate(out_p):
                if np.max(np.abs(q - p)) <= tol:
                    out_k[i] += int(k)
                    break
            else:
                out_p.append(p.copy())
                out_k.append(int(k))
        P = np.array(out_p)
        order = np.lexsort(P.T[::-1])
        return cls(P[order], np.array(out_k, dtype=int)[order])

    @property
    def q(self) -> int:
        return int(self.mult.sum())

    @property
    def n(self) -> int:
        return int(self.pts.shape[1])

    def expanded(self) -> np.ndarray:
        """(Q, n) array with every point repeated by its multiplicity."""
        return np.repeat(self.pts, self.mult, axis=0)

    def support(self) -> np.ndarray:
        return self.pts

    def __add__(self, other: "AqPoint") -> "AqPoint":
        return AqPoint.from_array(np.vstack([self.expanded(), other.expanded()]))

    def __eq__(self, other):
        if not isinstance(other, AqPoint):
            return NotImplemented
        return (self.pts.shape == other.pts.shape and np.array_equal(self.pts, other.pts)
                and np.array_equal(self.mult, other.mult))

    def __hash__(self):
        return hash((self.pts.tobytes(), self.mult.tobytes()))

    def __repr__(self):
        terms = " + ".join(f"{k}[{', '.join(f'{x:g}' for x in p)}]" for p, k in zip(self.pts, self.mult))
        return f"AqPoint({terms or 'empty'})"

    def to_json(self):
        return [{"p": [float(x) for x in p], "k": int(k)} for p, k in zip(self.pts, self.mult)]

    @classmethod
    def from_json(cls, obj):
        return cls.from_pairs([(e["p"], e["k"]) for e in obj])


@dataclass(frozen=True)
class HalfAqPoint:
    upper: AqPoint
    lower: AqPoint

    def __post_init__(self):
        if self.upper.q != self.lower.q + 1:
            raise ValueError("upper.q must equal lower.q + 1")


def _as_points(t):
    if isinstance(t, AqPoint):
        return t.expanded()
    a = np.asarray(t, dtype=float)
    return a.reshape(a.shape[0], -1)


def optimal_matching(s, t):
    """Return (sigma, cost) with cost = sum |s_i - t_sigma(i)|^2 minimal."""
    A, B = _as_points(s), _as_points(t)
    if A.shape[0] != B.shape[0]:
        raise ValueError("cardinality mismatch")
    if A.shape[0] == 0:
        return np.zeros(0, dtype=int), 0.0
    C = ((A[:, None, :] - B[None, :, :]) ** 2).sum(-1)
    rows, cols = linear_sum_assignment(C)
    sigma = np.empty(A.shape[0], dtype=int)
    sigma[rows] = cols
    return sigma, float(sum(C[i, sigma[i]] for i in range(A.shape[0])))


def metric_g(s, t) -> float:
    _, cost = optimal_matching(s, t)
    return math.sqrt(max(cost, 0.0))


def eta(t) -> np.ndarray:
    A = _as_points(t)
    if A.shape[0] == 0:
        raise ValueError("barycenter of an empty multiset")
    return A.mean(axis=0)


def diameter_separation(t: AqPoint):
    P = t.pts
    if P.shape[0] <= 1:
        return 0.0, math.inf
    d = np.sqrt(((P[:, None, :] - P[None, :, :]) ** 2).sum(-1))
    iu = np.triu_indices(P.shape[0], 1)
    return float(d[iu].max()), float(d[iu].min())


def support_dist(t: AqPoint, q) -> float:
    q = np.atleast_1d(np.asarray(q, dtype=float))
    return float(np.sqrt(((t.pts - q) ** 2).sum(-1)).min())


def _clusters(t: AqPoint, s: AqPoint, reach: float):
    """Assign every point of s to the support point of t within ``reach``.

    Valid when G(s, t) < s(t)/2: the optimal matching then sends each point
    of s to the unique support point of t closer than s(t)/2.
    """
    S = s.expanded()
    d = np.sqrt(((S[:, None, :] - t.pts[None, :, :]) ** 2).sum(-1))
    lab = d.argmin(axis=1)
    return S, lab


def retract(t: AqPoint, r: float, s: AqPoint) -> AqPoint:
    """1-Lipschitz retraction of A_Q onto the closed ball of radius r about t.

    Inside the ball nothing moves.  For r < rho = G(s,t) < rho2 every point of
    s is scaled toward its own cluster centre by h(rho)/rho, where h falls
    linearly from r at rho=r to 0 at rho2 = r + s(t)/4; beyond rho2 the image
    is t.  Since rho2 < s(t)/2 clusters are well defined, and because the
    slope of h is below one the map contracts strictly off the ball.
    """
    _, sep = diameter_separation(t)
    if not r < sep / 4:
        raise ValueError("radius too large for separation")
    if s.q != t.q:
        raise ValueError("cardinality mismatch")
    rho = metric_g(s, t)
    if rho <= r:
        return s
    if not math.isfinite(sep):
        # single support point: radial projection onto the ball
        P = t.pts[0]
        S = s.expanded()
        return AqPoint.from_array(P + (r / rho) * (S - P))
    rho2 = r + sep / 4
    if rho >= rho2:
        return t
    h = r * (rho2 - rho) / (rho2 - r)
    S, lab = _clusters(t, s, rho2)
    C = t.pts[lab]
    return AqPoint.from_array(C + (h / rho) * (S - C))


def collapse(t: AqPoint, eps: float):
    """Merge nearby points of t: returns (S, beta_achieved).

    Single-linkage clusters at a threshold swept downward through the sorted
    merge heights; the first partition with G(S,t) <= eps*s(S) wins.
    """
    d, _ = diameter_separation(t)
    if d == 0:
        raise ValueError("nothing to collapse")
    from scipy.cluster.hierarchy import fcluster, linkage

    P = t.expanded()
    Z = linkage(P, method="single")
    heights = np.unique(np.concatenate([[0.0], Z[:, 2]]))[::-1]
    for hgt in heights:
        lab = fcluster(Z, t=hgt, criterion="distance") if hgt > 0 else np.arange(P.shape[0])
        if np.unique(lab).size < 2:
            continue
        C = np.array([P[lab == c].mean(axis=0) for c in np.unique(lab)])
        k = np.array([(lab == c).sum() for c in np.unique(lab)])
        S = AqPoint.from_pairs(list(zip(C, k)))
        _, sS = diameter_separation(S)
        if metric_g(S, t) <= eps * sS:
            return S, sS / d
    return t, diameter_separation(t)[1] / d


def geodesic_interpolate(s, t, lam: float) -> AqPoint:
    sigma, _ = optimal_matching(s, t)
    A, B = _as_points(s), _as_points(t)
    return AqPoint.from_array((1.0 - lam) * A + lam * B[sigma])


# ---------------------------------------------------------------- batch form

@lru_cache(maxsize=None)
def permutations(q: int) -> np.ndarray:
    return np.array(list(itertools.permutations(range(q))), dtype=int).reshape(-1, q)


ENUM_MAX_Q = 6


def matched_sq(A, B, return_perm=False, chunk=200_000):
    """Minimal matched squared distance between stacks of Q-tuples.

    A, B: arrays (..., Q, n).  Permutations are enumerated in lexicographic
    order so ties resolve to the first one; above ENUM_MAX_Q each pair is
    passed to the assignment solver.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    shp = A.shape[:-2]
    q = A.shape[-2]
    if q == 0:
        out = np.zeros(shp)
        return (out, np.zeros(shp + (0,), dtype=int)) if return_perm else out
    a = A.reshape(-1, q, A.shape[-1])
    b = B.reshape(-1, q, B.shape[-1])
    N = a.shape[0]
    cost = np.empty(N)
    perm = np.empty((N, q), dtype=int)
    if q == 1:
        cost[:] = ((a - b) ** 2).sum(axis=(-1, -2))
        perm[:] = 0
    elif q <= ENUM_MAX_Q:
        P = permutations(q)
        idx = np.arange(q)
        for lo in range(0, N, chunk):
            hi = min(N, lo + chunk)
            C = ((a[lo:hi, :, None, :] - b[lo:hi, None, :, :]) ** 2).sum(-1)
            tot = C[:, idx[None, :], P].sum(-1)
            k = tot.argmin(axis=1)
            cost[lo:hi] = tot[np.arange(hi - lo), k]
            perm[lo:hi] = P[k]
    else:
        for i in range(N):
            perm[i], cost[i] = optimal_matching(a[i], b[i])
    cost = np.maximum(cost, 0.0).reshape(shp)
    if return_perm:
        return cost, perm.reshape(shp + (q,))
    return cost


def matched_dist(A, B):
    return np.sqrt(matched_sq(A, B))


def with_zero(L, phi=None):
    """Append the interface sheet (zero or phi values) to a stack of tuples."""
    L = np.asarray(L, dtype=float)
    z = np.zeros(L.shape[:-2] + (1, L.shape[-1]))
    if phi is not None:
        z = z + np.asarray(phi, dtype=float)[..., None, :]
    return np.concatenate([L, z], axis=-2)


def card(values, tol):
    """Number of distinct points in each tuple of a stack, welding at ``tol``.

    values (..., Q, n); tol broadcastable to values.shape[:-2].  Points are
    welded greedily into single-linkage groups.
    """
    V = np.asarray(values, dtype=float)
    shp = V.shape[:-2]
    q = V.shape[-2]
    if q == 0:
        return np.zeros(shp, dtype=int)
    v = V.reshape(-1, q, V.shape[-1])
    tol = np.broadcast_to(np.asarray(tol, dtype=float), shp).reshape(-1)
    d = np.sqrt(((v[:, :, None, :] - v[:, None, :, :]) ** 2).sum(-1))
    adj = d <= tol[:, None, None]
    # transitive closure by repeated squaring (q is small)
    reach = adj.copy()
    for _ in range(max(1, int(math.ceil(math.log2(max(q, 2)))))):
        reach = (reach.astype(np.uint8) @ reach.astype(np.uint8)) > 0
    # count components: a point is a representative if no lower index reaches it
    lower = np.tril(np.ones((q, q), dtype=bool), -1)
    is_rep = ~np.any(reach & lower[None, :, :], axis=2)
    return is_rep.sum(axis=1).reshape(shp)


def min_sep(values):
    """Smallest pairwise distance inside each tuple (inf when Q < 2)."""
    V = np.asarray(values, dtype=float)
    q = V.shape[-2]
    if q < 2:
        return np.full(V.shape[:-2], np.inf)
    d = np.sqrt(((V[..., :, None, :] - V[..., None, :, :]) ** 2).sum(-1))
    iu = np.triu_indices(q, 1)
    return d[..., iu[0], iu[1]].min(axis=-1)
