"""Singular points of a discrete solution: where distinct sheets touch.

A node is a candidate when its support, welded at the canonical tolerance,
has fewer points than the generic count of its side, or when the smallest
gap between its distinct sheets is no larger than the change of that gap to
a neighbouring node (sheets crossing between grid points).  Candidate
nodes are clustered on the grid; a cluster whose 5x5 neighbourhood is
merged at the tight tolerance everywhere is an identical coincidence and is
dropped.  Nodes inside r < sqrt(r_min) belong to the mesh centre, which is
singular when the sheets converge there.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .aq import WELD_RTOL, card, matched_sq, min_sep
from .geometry import InterfaceMap
from .solver import SolveResult

CENTRE_SLOPE = 0.05
# a flagged cluster wider than this many cells in ring or angle index is a
# curve of touching sheets rather than an isolated point
MAX_EXTENT = 12


@dataclass(frozen=True)
class SingularPoint:
    x: float
    y: float
    boundary: bool
    local_frequency: float | None
    nodes: int
    r0: float | None = None
    eps: float | None = None
    extent: int = 0  # cluster width in mesh cells (0 for the centre)

    def to_json(self):
        return {"x": self.x, "y": self.y, "boundary": self.boundary, "local_frequency": self.local_frequency,
                "nodes": self.nodes, "r0": self.r0, "eps": self.eps, "extent": self.extent}


@dataclass(frozen=True)
class SingularReport:
    interior: tuple
    boundary: tuple
    min_gap: float | None
    gap_cells: float | None
    generic: dict
    dropped_identical: int = 0

    @property
    def points(self):
        return self.interior + self.boundary

    @property
    def finite(self) -> bool:
        """Every flagged cluster is point-like at mesh resolution."""
        return all(p.extent <= MAX_EXTENT for p in self.points)

    def to_json(self):
        return {"interior": [p.to_json() for p in self.interior], "boundary": [p.to_json() for p in self.boundary],
                "min_gap": self.min_gap, "gap_cells": self.gap_cells, "generic": self.generic,
                "dropped_identical": self.dropped_identical}


def _field_modulus(g):
    """Largest change of a scalar node field to any of its 8 grid neighbours."""
    R, M = g.shape
    fin = np.where(np.isfinite(g), g, np.nan)
    out = np.zeros((R, M))
    for di, dc in ((1, 0), (0, 1), (1, 1), (1, -1)):
        i0, i1 = max(0, -di), R - max(0, di)
        c0, c1 = max(0, -dc), M - max(0, dc)
        d = np.abs(fin[i0 + di:i1 + di, c0 + dc:c1 + dc] - fin[i0:i1, c0:c1])
        d = np.nan_to_num(d, nan=0.0)
        out[i0:i1, c0:c1] = np.maximum(out[i0:i1, c0:c1], d)
        out[i0 + di:i1 + di, c0 + dc:c1 + dc] = np.maximum(out[i0 + di:i1 + di, c0 + dc:c1 + dc], d)
    return out


def _pairs(F, idx, di, dc):
    """Ids of flagged node pairs (i, c), (i + di, c + dc)."""
    R, M = F.shape
    i0, i1 = max(0, -di), R - max(0, di)
    c0, c1 = max(0, -dc), M - max(0, dc)
    both = F[i0:i1, c0:c1] & F[i0 + di:i1 + di, c0 + dc:c1 + dc]
    return idx[i0:i1, c0:c1][both], idx[i0 + di:i1 + di, c0 + dc:c1 + dc][both]


def _distinct_sep(V, weld):
    """Smallest distance between sheets that are not welded together."""
    V = np.asarray(V, dtype=float)
    q = V.shape[-2]
    if q < 2:
        return np.full(V.shape[:-2], np.inf)
    d = np.sqrt(((V[..., :, None, :] - V[..., None, :, :]) ** 2).sum(-1))
    iu = np.triu_indices(q, 1)
    d = d[..., iu[0], iu[1]]
    d = np.where(d <= weld, np.inf, d)
    return d.min(axis=-1)


def _mode(a):
    return int(stats.mode(np.asarray(a).reshape(-1), keepdims=False).mode)


def _patch_merged(tight_short, i, c, half=2):
    R, M = tight_short.shape
    return bool(tight_short[max(0, i - half): i + half + 1, max(0, c - half): c + half + 1].all())


def _ring_slope(r, sep):
    ok = np.isfinite(sep) & (sep > 0)
    if ok.sum() < 3:
        return 0.0
    return float(np.polyfit(np.log(r[ok]), np.log(sep[ok]), 1)[0])


def detect_singularities(f, tol: float | None = None, tangent_map=None) -> SingularReport:
    """Singular points of a solution sampled on its half-disk mesh.

    tol is the welding tolerance relative to the map's scale (default: the
    canonical welding rule).  tangent_map, if given, is the result of
    frequency.tangent and is used for the separation radius at the centre.
    """
    fm: InterfaceMap = f.f if isinstance(f, SolveResult) else f
    me = fm.mesh
    R, m = me.rings, me.m
    scale = max(fm.scale(), 1e-300)
    weld = (WELD_RTOL if tol is None else tol) * scale
    sides = {"upper": fm.upper, "lower": fm.lower}
    xy = {"upper": me.upper_xy, "lower": me.lower_xy}
    r_core = math.sqrt(me.r_min * me.r_max)
    core_rings = me.radii < r_core
    generic, tight_short, flagged = {}, {}, {}
    for side, V in sides.items():
        if V.shape[2] < 2:
            generic[side] = V.shape[2]
            tight_short[side] = np.zeros((R, m + 1), dtype=bool)
            flagged[side] = np.zeros((R, m + 1), dtype=bool)
            continue
        ct = card(V, weld)
        g = _mode(ct[~core_rings])
        generic[side] = g
        gap = _distinct_sep(V, weld)
        tight_short[side] = ct < g
        # touching sheets: the gap is no larger than its own variation to a neighbour
        flagged[side] = tight_short[side] | (gap <= _field_modulus(gap))
        flagged[side][core_rings] = False

    # centre: sheets converge toward the origin
    points = []
    dropped = 0
    q_sheets = max(generic.values())
    if q_sheets > 1:
        sep = np.full(R, np.inf)
        for side, V in sides.items():
            if V.shape[2] >= 2:
                sep = np.minimum(sep, _distinct_sep(V, weld).min(axis=1))
        valid = ~core_rings & (me.radii <= 0.5 * me.r_max)
        slope = _ring_slope(me.radii[valid], sep[valid])
        if slope > CENTRE_SLOPE:
            points.append(SingularPoint(0.0, 0.0, True, slope, int(core_rings.sum())))

    # off-centre clusters on the combined grid of both sides
    M1 = m + 1
    ids = {"upper": np.arange(R * M1).reshape(R, M1), "lower": R * M1 + np.arange(R * M1).reshape(R, M1)}
    rows, cols = [], []
    for side in sides:
        for di, dc in ((1, 0), (0, 1), (1, 1), (1, -1)):
            a, b = _pairs(flagged[side], ids[side], di, dc)
            rows += list(a)
            cols += list(b)
    # the axis columns are shared: upper column 0 is lower column m and vice versa
    for cu, cl in ((0, m), (m, 0)):
        both = flagged["upper"][:, cu] & flagged["lower"][:, cl]
        rows += list(ids["upper"][both, cu])
        cols += list(ids["lower"][both, cl])
    N = 2 * R * M1
    flat_flag = np.concatenate([flagged["upper"].reshape(-1), flagged["lower"].reshape(-1)])
    adj = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(N, N))
    _, labels = connected_components(adj, directed=False)
    flat_xy = np.concatenate([xy["upper"].reshape(-1, 2), xy["lower"].reshape(-1, 2)])
    for lab in np.unique(labels[flat_flag]):
        members = np.nonzero(flat_flag & (labels == lab))[0]
        merged = True
        for node in members:
            side = "upper" if node < R * M1 else "lower"
            i, c = divmod(int(node - (0 if side == "upper" else R * M1)), M1)
            if not _patch_merged(tight_short[side], i, c):
                merged = False
                break
        if merged:
            dropped += 1
            continue
        # the representative is the node with the smallest sheet gap
        best, best_gap, best_side = None, math.inf, None
        ic = []
        for node in members:
            side = "upper" if node < R * M1 else "lower"
            i, c = divmod(int(node - (0 if side == "upper" else R * M1)), M1)
            ic.append((i, c if side == "upper" else m + c))
            gsep = float(min_sep(sides[side][i, c]))  # touching sheets give the least gap
            if gsep < best_gap:
                best, best_gap, best_side = (i, c), gsep, side
        ic = np.array(ic)
        extent = max(int(np.ptp(ic[:, 0])), _circular_extent(ic[:, 1] % (2 * m), 2 * m))
        i, c = best
        x, y = flat_xy[best[0] * M1 + best[1] + (0 if best_side == "upper" else R * M1)]
        on_axis = c in (0, m)
        points.append(SingularPoint(float(x), float(y), on_axis, _local_exponent(sides[best_side], i, c, weld),
                                    int(members.size), extent=extent))

    if tangent_map is not None and points and points[0].x == 0.0 and points[0].y == 0.0:
        r0, eps = separation_radius(fm, tangent_map)
        p0 = points[0]
        points[0] = SingularPoint(p0.x, p0.y, p0.boundary, p0.local_frequency, p0.nodes, r0, eps, p0.extent)

    interior = tuple(p for p in points if not p.boundary)
    boundary = tuple(p for p in points if p.boundary)
    gap, cells = _min_gap(points, me)
    return SingularReport(interior, boundary, gap, cells, generic, dropped)


def _circular_extent(cols, period):
    """Width of the shortest arc of column indices covering all of cols."""
    u = np.unique(cols)
    if u.size < 2:
        return 0
    gaps = np.diff(np.concatenate([u, [u[0] + period]]))
    return int(period - gaps.max())


def _local_exponent(V, i, c, weld):
    """Growth exponent of the smallest sheet gap away from a touching node,
    from two rings of cells around it (1 for a transversal crossing)."""
    R, M = V.shape[:2]
    gaps = []
    for k in (2, 4):
        patch = V[max(0, i - k): i + k + 1, max(0, c - k): c + k + 1]
        ring = np.zeros(patch.shape[:2], dtype=bool)
        ring[[0, -1], :] = True
        ring[:, [0, -1]] = True
        gaps.append(float(np.median(_distinct_sep(patch, weld)[ring])))
    if not (gaps[0] > 0 and gaps[1] > 0):
        return None
    return float(math.log(gaps[1] / gaps[0]) / math.log(2.0))


def _min_gap(points, mesh):
    if len(points) < 2:
        return None, None
    best, cells = math.inf, math.inf
    h = max(mesh.dtheta, mesh.ds)
    for a in range(len(points)):
        for b in range(a + 1, len(points)):
            pa, pb = points[a], points[b]
            d = math.hypot(pa.x - pb.x, pa.y - pb.y)
            size = max(math.hypot(pa.x, pa.y), math.hypot(pb.x, pb.y)) * h
            if d < best:
                best = d
            cells = min(cells, d / max(size, 1e-300))
    return float(best), float(cells)


def separation_distances(fit) -> dict:
    """d0, d0j and dij for a classified homogeneous map on the unit circle.

    d0 is the separation of the two-valued half block in case c (infinite
    otherwise); d0j is the distance between the half block and block j, and
    dij between two full blocks, each on the matching half circle.
    """
    m = 512
    th = {"upper": np.linspace(0.0, math.pi, m + 1), "lower": np.linspace(math.pi, 2 * math.pi, m + 1)}
    groups = []
    for grp in fit.group_sheets():
        per = {}
        for side in th:
            v = [s.values(th[side]) for s in grp if s.side == side]
            per[side] = np.stack(v, axis=1) if v else np.zeros((m + 1, 0, fit.n))
        groups.append(per)
    d0 = math.inf
    if fit.case == "c":
        d0 = float(min_sep(groups[0]["upper"]).min())

    def between(A, B):
        if A.shape[1] == 0 or B.shape[1] == 0:
            return math.inf
        return float(np.sqrt(((A[:, :, None, :] - B[:, None, :, :]) ** 2).sum(-1)).min())

    d0j = min([between(groups[0][s], groups[j][s]) for j in range(1, len(groups)) for s in th], default=math.inf)
    dij = min([between(groups[i][s], groups[j][s]) for i in range(1, len(groups)) for j in range(i + 1, len(groups))
               for s in th], default=math.inf)
    return {"d0": d0, "d0j": d0j, "dij": dij}


def separation_radius(fm: InterfaceMap, tangent_result):
    """Largest mesh radius r0 such that G(f(x), g(x)) <= eps |x|^alpha on
    every circle inside it, with g the alpha-homogeneous tangent and
    eps = min(d0, d0j, dij) / 4.  Returns (r0, eps); eps is None when the
    classification failed, and r0 is the outer radius when eps is infinite."""
    cls = tangent_result.classification
    if not cls.ok:
        return None, None
    dist = separation_distances(cls.map)
    # the classified map has unit energy; scale distances to the raw tangent
    scale = math.sqrt(max(tangent_result.raw_trace.l2_mass(), 1e-300) / max(tangent_result.trace.l2_mass(), 1e-300))
    eps = 0.25 * min(dist.values()) * scale
    if not math.isfinite(eps):
        return float(fm.mesh.radii[-1]), None
    al = tangent_result.alpha
    g = tangent_result.raw_trace
    r = fm.mesh.radii
    ra = r ** al
    du = matched_sq(fm.upper, ra[:, None, None, None] * g.upper[None])
    dl = matched_sq(fm.lower, ra[:, None, None, None] * g.lower[None]) if g.lower.shape[1] else np.zeros_like(du)
    worst = np.sqrt(np.maximum(du.max(axis=1), dl.max(axis=1))) / ra
    ok = worst <= eps
    start = int(np.argmax(r >= math.sqrt(fm.mesh.r_min * fm.mesh.r_max)))
    k = start
    while k + 1 < r.size and ok[k + 1]:
        k += 1
    return (float(r[k]) if ok[start] else None), float(eps)
