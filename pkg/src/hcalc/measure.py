"""Covering estimates of Hausdorff-type premeasures and the intrinsic area formula.

All premeasure estimates are values of explicit covers, so each one is an
upper bound for the corresponding delta-premeasure.  The default ``cells``
strategy partitions the sample into homogeneous cells (left translates of a
box of side ``a`` horizontally and height ``b`` in the sheared vertical
coordinate) and prices every cell three ways:

* hausdorff: the cell itself, at (an upper bound of) its diameter;
* centered: a ball centred at the cell sample nearest the cell midpoint;
* spherical: the smaller of the midpoint ball and the centred ball.

Per cell ``diam <= 2 r_S <= 2 r_C`` and ``r_C <= diam``, so the chain
``H <= S <= C <= 2^m H`` holds for the reported values by construction.
"""
from dataclasses import dataclass, field
import csv
import itertools
import math

import numpy as np
from scipy.stats import qmc

from . import hgroup, intrinsic, split

KINDS = ("hausdorff", "spherical", "centered")


def beta_const(m):
    """pi^(m/2) / Gamma(m/2 + 1) * 2^-m."""
    if m < 0:
        raise ValueError(f"dimension must be nonnegative, got {m}")
    return math.pi ** (m / 2) / math.gamma(m / 2 + 1) * 2.0 ** (-m)


@dataclass(frozen=True)
class MeasureFamily:
    kind: str
    m: float

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown measure kind {self.kind!r}; expected one of {KINDS}")
        if self.m < 0:
            raise ValueError("dimension must be nonnegative")

    @property
    def beta(self):
        return beta_const(self.m)


@dataclass
class CoveringEstimate:
    value: float
    delta: float
    cover_size: int
    family: MeasureFamily
    strategy: str
    centers: np.ndarray = field(repr=False)
    diams: np.ndarray = field(repr=False)
    samples: int = 0
    scale: float = None

    def to_dict(self):
        return {"value": self.value, "delta": self.delta, "cover_size": self.cover_size,
                "scale": self.scale,
                "kind": self.family.kind, "m": self.family.m, "beta": self.family.beta,
                "strategy": self.strategy, "samples": self.samples,
                "max_diam": float(np.max(self.diams)) if len(self.diams) else 0.0}

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh)
            dim = self.centers.shape[-1] if self.centers.ndim == 2 else 0
            out.writerow([f"c{i}" for i in range(dim)] + ["radius"])
            for c, d in zip(self.centers, self.diams):
                out.writerow([repr(float(x)) for x in c] + [repr(float(d) / 2)])


# ----------------------------------------------------------------- samplers
# A sampler maps a scale delta to an (N, 2n+1) array of points of the set;
# density is at least 8 samples per ball radius r = delta / 2 along each axis.

class PointSampler:
    """A fixed point set, used at every scale."""

    def __init__(self, points):
        self.pts = np.asarray(points, float).reshape(-1, np.shape(points)[-1])

    def size(self, delta):
        return len(self.pts)

    def points(self, delta):
        return self.pts


def _grid_axes(lo, hi, delta):
    """Axes with spacing r/8 horizontally and r^2/8 vertically, r = delta/2."""
    r = delta / 2
    spacing = np.full(len(lo), r / 8)
    spacing[-1] = r * r / 8
    return [np.linspace(a, b, max(1, math.ceil((b - a) / h - 1e-9) + 1)) if b > a else np.array([a])
            for a, b, h in zip(lo, hi, spacing)]


def _mesh(axes):
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(axes))


class BoxSampler:
    """Coordinate box [lo, hi] in group coordinates."""

    def __init__(self, lo, hi):
        self.lo, self.hi = np.asarray(lo, float), np.asarray(hi, float)
        hgroup.heis_dim(self.lo)

    def size(self, delta):
        return math.prod(len(a) for a in _grid_axes(self.lo, self.hi, delta))

    def points(self, delta):
        return _mesh(_grid_axes(self.lo, self.hi, delta))


class GraphSampler:
    """Phi(grid) for a graph over a base box."""

    def __init__(self, phi, lo=None, hi=None):
        self.phi = phi
        self.lo = phi.lo if lo is None else np.asarray(lo, float)
        self.hi = phi.hi if hi is None else np.asarray(hi, float)

    def size(self, delta):
        return math.prod(len(a) for a in _grid_axes(self.lo, self.hi, delta))

    def points(self, delta):
        return split.graph_map(self.phi, _mesh(_grid_axes(self.lo, self.hi, delta)))


class CurveSampler:
    """Parametric curve gamma(u), u in [u0, u1]; refines until consecutive
    samples are within r / 8 in d_inf."""

    def __init__(self, fn, u0=0.0, u1=1.0, start=64, max_points=2 ** 22):
        self.fn, self.u0, self.u1 = fn, float(u0), float(u1)
        self.start, self.max_points = start, max_points

    def points(self, delta):
        r = delta / 2
        count = self.start
        while True:
            pts = np.asarray(self.fn(np.linspace(self.u0, self.u1, count + 1)), float)
            gap = float(np.max(hgroup.dist_inf(pts[1:], pts[:-1]))) if count else 0.0
            if gap <= r / 8 or count >= self.max_points:
                return pts
            count *= 2


def _sample(sampler, delta):
    if hasattr(sampler, "points"):
        return np.asarray(sampler.points(delta), float)
    return np.asarray(sampler, float)


# ----------------------------------------------------------- cell covering

def _grouped_max(values, inverse, ncell):
    out = np.zeros(ncell)
    np.maximum.at(out, inverse, values)
    return out


def _cell_ids(q, start, a, b, s0, centre_fixed):
    """Integer cell keys for the points ``q`` at side ``a`` / height ``b``."""
    h = q[:, :-1]
    idx = np.floor((h - start) / a).astype(np.int64)
    idx[:, centre_fixed] = 0
    ch = start + (idx + 0.5) * a
    ch[:, centre_fixed] = start[centre_fixed]
    sv = q[:, -1] - 0.5 * hgroup.symplectic(np.concatenate([ch, q[:, -1:]], axis=-1), q)
    tidx = np.floor((sv - s0) / b).astype(np.int64)
    keys = np.concatenate([idx, tidx[:, None]], axis=-1)
    _, first, inverse = np.unique(keys, axis=0, return_index=True, return_inverse=True)
    inverse = inverse.reshape(-1)
    centres = np.concatenate([ch[first], (s0 + (tidx[first] + 0.5) * b)[:, None]], axis=-1)
    return inverse, centres, sv


def _cell_stats(q, inverse, centres, sv, small=32):
    ncell = len(centres)
    d_mid = hgroup.dist_inf(q, centres[inverse])
    r_mid = _grouped_max(d_mid, inverse, ncell)
    order = np.lexsort((d_mid, inverse))
    first = np.ones(len(order), bool)
    first[1:] = inverse[order][1:] != inverse[order][:-1]
    nearest = np.empty(ncell, np.int64)
    nearest[inverse[order][first]] = order[first]
    c_pts = q[nearest]
    r_c = _grouped_max(hgroup.dist_inf(q, c_pts[inverse]), inverse, ncell)

    # diameter bound from the cell's horizontal extent and sheared height
    h = q[:, :-1]
    hmin = np.full((ncell, h.shape[1]), np.inf)
    hmax = np.full((ncell, h.shape[1]), -np.inf)
    np.minimum.at(hmin, inverse, h)
    np.maximum.at(hmax, inverse, h)
    smin = np.full(ncell, np.inf)
    smax = np.full(ncell, -np.inf)
    np.minimum.at(smin, inverse, sv)
    np.maximum.at(smax, inverse, sv)
    R = _grouped_max(np.linalg.norm(h - centres[inverse, :-1], axis=-1), inverse, ncell)
    bound = np.maximum(np.linalg.norm(hmax - hmin, axis=-1), np.sqrt(smax - smin + 0.5 * R * R))

    counts = np.bincount(inverse, minlength=ncell)
    diam = np.minimum(bound, 2 * np.minimum(r_mid, r_c))
    few = np.nonzero(counts <= small)[0]
    if len(few):
        diam[few] = _exact_diams(q, inverse, few, counts, small)
    return r_mid, r_c, c_pts, diam


def _exact_diams(q, inverse, cells, counts, width):
    """Pairwise diameters of the cells listed in ``cells`` (each <= width points)."""
    pos = np.full(len(counts), -1)
    pos[cells] = np.arange(len(cells))
    sel = np.nonzero(pos[inverse] >= 0)[0]
    row = pos[inverse[sel]]
    order = np.argsort(row, kind="stable")
    sel, row = sel[order], row[order]
    starts = np.searchsorted(row, np.arange(len(cells)))
    slot = np.arange(len(sel)) - starts[row]
    pad = np.zeros((len(cells), width, q.shape[1]))
    mask = np.zeros((len(cells), width), bool)
    pad[row, slot] = q[sel]
    mask[row, slot] = True
    out = np.zeros(len(cells))
    for chunk in range(0, len(cells), 4096):
        P = pad[chunk:chunk + 4096]
        M = mask[chunk:chunk + 4096]
        d = hgroup.dist_inf(P[:, :, None, :], P[:, None, :, :])
        d = np.where(M[:, :, None] & M[:, None, :], d, 0.0)
        out[chunk:chunk + 4096] = d.max(axis=(1, 2))
    return out


def cell_covers(points, delta, max_levels=12):
    """Partition ``points`` into homogeneous cells small enough for scale ``delta``.

    Returns per-cell arrays ``(midpoints, r_mid, centre_points, r_c, diam)``.
    """
    q = np.asarray(points, float)
    dim = q.shape[1] - 1
    r = delta / 2
    lo, hi = q[:, :-1].min(axis=0), q[:, :-1].max(axis=0)
    extent = hi - lo
    fixed = extent <= 1e-12 * (1 + np.abs(hi))
    d_eff = int(np.sum(~fixed))
    a = 2 * r / math.sqrt(d_eff) if d_eff else 1.0
    b = 2 * r * r
    s0 = float(np.min(q[:, -1]))
    pieces = []
    active = np.arange(len(q))
    for level in range(max_levels + 1):
        al, bl = a / 2 ** level, b / 4 ** level
        nbins = np.maximum(1, np.ceil(extent / al - 1e-9))
        start = 0.5 * (lo + hi) - 0.5 * nbins * al
        start[fixed] = (0.5 * (lo + hi))[fixed]
        sub = q[active]
        inverse, centres, sv = _cell_ids(sub, start, al, bl, s0, fixed)
        r_mid, r_c, c_pts, diam = _cell_stats(sub, inverse, centres, sv)
        good = 2 * r_c <= delta * (1 + 1e-12)
        if level == max_levels:
            good[:] = True
        pieces.append((centres[good], r_mid[good], c_pts[good], r_c[good], diam[good]))
        bad = ~good
        if not np.any(bad):
            break
        active = active[bad[inverse]]
    return tuple(np.concatenate([p[i] for p in pieces]) for i in range(5))


def _greedy(points, delta, max_points=6000):
    """Greedy ball cover centred on samples: repeatedly centre a ball at the
    uncovered point with most uncovered neighbours (lexicographic tie-break)."""
    q = np.asarray(points, float)
    if len(q) > max_points:
        raise ValueError(f"greedy covering is limited to {max_points} samples")
    r = delta / 2
    order = np.lexsort(q.T[::-1])
    q = q[order]
    near = hgroup.dist_inf(q[:, None, :], q[None, :, :]) <= r
    uncovered = np.ones(len(q), bool)
    centres, radii = [], []
    while np.any(uncovered):
        score = np.where(uncovered, near[:, uncovered].sum(axis=1), -1)
        i = int(np.argmax(score))
        members = near[i] & uncovered
        d = hgroup.dist_inf(q[members], q[i])
        centres.append(q[i])
        radii.append(float(np.max(d)))
        uncovered &= ~members
    return np.array(centres), np.array(radii)


def _price(kind, cells):
    mids, r_mid, c_pts, r_c, diam = cells
    if kind == "hausdorff":
        return mids, diam
    if kind == "centered":
        return c_pts, 2 * r_c
    use_mid = r_mid <= r_c
    return np.where(use_mid[:, None], mids, c_pts), 2 * np.minimum(r_mid, r_c)


def _ladder(sampler, delta, refine, budget):
    """Cell partitions at scales delta, delta/2, ... (each admissible at delta).

    Finer rungs are added while the sampler stays within ``budget`` points.
    """
    if not hasattr(sampler, "points"):
        sampler = PointSampler(sampler)
    rungs = []
    for level in range(refine + 1):
        scale = delta / 2 ** level
        size = sampler.size(scale) if hasattr(sampler, "size") else None
        if level and size is not None and size > budget:
            break
        pts = _sample(sampler, scale)
        if pts.size == 0:
            return []
        rungs.append((scale, len(pts), cell_covers(pts, scale)))
    return rungs


def _best(kind, family, rungs, delta, min_radius):
    best = None
    for scale, count, cells in rungs:
        centres, diams = _price(kind, cells)
        diams = np.maximum(diams, 2 * min_radius)
        value = float(np.sum(family.beta * diams ** family.m))
        if best is None or value < best.value:
            best = CoveringEstimate(value, delta, int(len(diams)), family, "cells", centres, diams,
                                    samples=count, scale=scale)
    return best


def premeasure_estimate(sampler, family, m=None, delta=0.1, strategy="cells", min_radius=0.0,
                        refine=2, budget=2 ** 22):
    """Upper-bound estimate of the delta-premeasure of the sampled set.

    ``family`` is a MeasureFamily or a kind name (then ``m`` is required).
    With the ``cells`` strategy the cheapest of the cell covers built at
    scales delta / 2^i, i <= ``refine``, is reported; all of them are
    admissible at delta.  An empty sample gives the empty cover and value 0.
    """
    if not isinstance(family, MeasureFamily):
        family = MeasureFamily(family, m)
    if not delta > 0:
        raise ValueError("delta must be positive")
    empty = CoveringEstimate(0.0, delta, 0, family, strategy, np.zeros((0, 0)), np.zeros(0))
    if strategy == "cells":
        rungs = _ladder(sampler, delta, refine, budget)
        return _best(family.kind, family, rungs, delta, min_radius) if rungs else empty
    if strategy != "greedy":
        raise ValueError(f"unknown covering strategy {strategy!r}")
    pts = _sample(sampler, delta)
    if pts.size == 0:
        return empty
    centres, radii = _greedy(pts, delta)
    diams = np.maximum(2 * radii, 2 * min_radius)
    value = float(np.sum(family.beta * diams ** family.m))
    return CoveringEstimate(value, delta, int(len(diams)), family, strategy, centres, diams,
                            samples=int(len(pts)), scale=delta)


def measure_chain(sampler, m, delta, min_radius=0.0, refine=2, budget=2 ** 22):
    """The three cell estimates built from one shared ladder of partitions."""
    rungs = _ladder(sampler, delta, refine, budget)
    out = {}
    for kind in KINDS:
        family = MeasureFamily(kind, m)
        out[kind] = (_best(kind, family, rungs, delta, min_radius) if rungs else
                     CoveringEstimate(0.0, delta, 0, family, "cells", np.zeros((0, 0)), np.zeros(0)))
    return out


# ------------------------------------------------------------- area formula

def enumerate_minors(n, k):
    """All (rows, cols) index pairs of l x l minors of a k x (2n-k) matrix, l = 1..k."""
    out = []
    for l in range(1, k + 1):
        for rows in itertools.combinations(range(k), l):
            for cols in itertools.combinations(range(2 * n - k), l):
                out.append((rows, cols))
    return out


def count_minors(n, k):
    return sum(math.comb(2 * n - k, l) * math.comb(k, l) for l in range(1, k + 1))


def area_integrand(J):
    """sqrt(1 + sum of squared minors of every order); vectorised over leading axes."""
    J = np.asarray(J, float)
    k, h = J.shape[-2:]
    total = np.ones(J.shape[:-2])
    for l in range(1, min(k, h) + 1):
        for rows in itertools.combinations(range(k), l):
            sub = J[..., rows, :]
            for cols in itertools.combinations(range(h), l):
                total = total + np.linalg.det(sub[..., list(cols)]) ** 2
    return np.sqrt(total)


@dataclass
class AreaResult:
    value: float
    rule: str
    nodes: int
    integrand_min: float
    integrand_max: float
    volume: float

    def to_dict(self):
        return dict(self.__dict__)


def simpson_weights(count, a, b):
    if count < 3 or count % 2 == 0:
        raise ValueError("composite Simpson needs an odd node count >= 3")
    w = np.ones(count)
    w[1:-1:2] = 4
    w[2:-1:2] = 2
    return w * (b - a) / (3 * (count - 1))


def graph_area(phi, lo=None, hi=None, region=None, nodes=33, qmc_points=2 ** 16,
               seed=0xC0FFEE, levelset=None, jacobian="auto", opts=None):
    """Integral of area_integrand(J^phi phi) over the base box, optionally
    restricted to base points whose graph point satisfies ``region``.

    Tensor Simpson for base dimension <= 3, scrambled Sobol above.
    ``jacobian`` is ``"curves"`` (intrinsic difference quotients),
    ``"analytic"`` (Euclidean derivatives along the W fields) or ``"auto"``
    (analytic for smooth phi, else curves); a supplied ``levelset`` takes
    precedence.  Curve quotients need room around the node, so boundary
    nodes are evaluated slightly inside the box.
    """
    s = phi.splitting
    lo = phi.lo if lo is None else np.asarray(lo, float)
    hi = phi.hi if hi is None else np.asarray(hi, float)
    dim = s.base_dim
    volume = float(np.prod(hi - lo))
    if dim <= 3:
        axes = [np.linspace(a, b, nodes) for a, b in zip(lo, hi)]
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, dim)
        w = simpson_weights(nodes, lo[0], hi[0])
        for a, b in zip(lo[1:], hi[1:]):
            w = np.multiply.outer(w, simpson_weights(nodes, a, b))
        weights = w.reshape(-1)
        rule, count = "simpson", nodes
    else:
        sob = qmc.Sobol(dim, scramble=True, seed=seed)
        pts = qmc.scale(sob.random(qmc_points), lo, hi)
        weights = np.full(len(pts), volume / len(pts))
        rule, count = "sobol", qmc_points
    mask = np.ones(len(pts), bool)
    if region is not None:
        mask = np.asarray(region(split.graph_map(phi, pts)), bool)
    if not np.any(mask):
        return AreaResult(0.0, rule, count, math.nan, math.nan, volume)
    sel = pts[mask]
    if levelset is not None:
        from .approx import graph_point
        J = intrinsic.jacobian_from_levelset(levelset, graph_point(sel, phi(sel), s))
    elif jacobian == "analytic" or (jacobian == "auto" and phi.smooth):
        J = intrinsic.analytic_jacobian(phi, sel)
    else:
        J = intrinsic.intrinsic_jacobian(phi, _inward(phi, sel, lo, hi), opts)
    g = area_integrand(J)
    value = float(np.sum(weights[mask] * g))
    return AreaResult(value, rule, count, float(np.min(g)), float(np.max(g)), volume)


def _inward(phi, pts, lo, hi):
    """Clamp nodes into the box by the reach of the quotient curves."""
    s = phi.splitting
    h = 1e-3 * (1.0 + np.linalg.norm(pts, axis=-1, keepdims=True))
    coef = max(float(np.max(np.abs(intrinsic.tau_coefficient(j, phi, pts))))
               for j in range(1, s.horiz_dim + 1))
    margin = np.full(pts.shape[-1], 2.0)
    margin[-1] = 2.0 * (1.0 + coef)
    m = np.minimum(h * margin, 0.25 * (hi - lo))
    return np.clip(pts, lo + m, hi - m)
