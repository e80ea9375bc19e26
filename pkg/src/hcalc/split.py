"""The splitting H^n = M . H with H = exp(span(X1..Xk)) horizontal.

Base points of M are stored in the coordinates ``(v_{k+1..n}, eta_{1..k},
w_{k+1..n}, tau)``; the flat layout is exactly the last ``2n+1-k`` group
coordinates of ``i(m)``.  Functions take flat arrays (single points or
batches) or :class:`BasePoint` instances.
"""
from dataclasses import dataclass, field
import math

import numpy as np
from scipy.stats import qmc

from . import hgroup
from .errors import DimensionError, EmptySampleError, OutOfDomainError
from .expr import ConstantField, ExprField, ScalarField


@dataclass(frozen=True)
class Splitting:
    n: int
    k: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"n must be >= 1, got {self.n}")
        if not 1 <= self.k <= self.n:
            raise ValueError(f"splitting requires 1 <= k <= n, got n={self.n}, k={self.k}")

    @property
    def base_dim(self):
        return 2 * self.n + 1 - self.k

    @property
    def horiz_dim(self):
        return 2 * self.n - self.k

    @property
    def group_dim(self):
        return 2 * self.n + 1

    def base_variables(self):
        n, k = self.n, self.k
        return ([f"v{j}" for j in range(k + 1, n + 1)]
                + [f"eta{j}" for j in range(1, k + 1)]
                + [f"w{j}" for j in range(k + 1, n + 1)] + ["tau"])

    def group_variables(self):
        n = self.n
        return [f"x{j}" for j in range(1, n + 1)] + [f"y{j}" for j in range(1, n + 1)] + ["t"]

    def eta_slice(self):
        return slice(self.n - self.k, self.n)


@dataclass
class BasePoint:
    """Named blocks of a point of M; each block may carry leading batch axes."""

    v: np.ndarray
    eta: np.ndarray
    w: np.ndarray
    tau: np.ndarray

    @classmethod
    def from_flat(cls, x, splitting):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != splitting.base_dim:
            raise DimensionError(
                f"base point for (n={splitting.n}, k={splitting.k}) has length "
                f"{splitting.base_dim}, got {x.shape[-1]}")
        a, b = splitting.n - splitting.k, splitting.n
        return cls(x[..., :a], x[..., a:b], x[..., b:splitting.horiz_dim], x[..., -1])

    @property
    def splitting(self):
        k = np.shape(self.eta)[-1]
        return Splitting(k + np.shape(self.v)[-1], k)

    @property
    def flat(self):
        tau = np.asarray(self.tau, dtype=float)[..., None]
        return np.concatenate([np.asarray(self.v, float), np.asarray(self.eta, float),
                               np.asarray(self.w, float), tau], axis=-1)

    def __array__(self, dtype=None, copy=None):
        out = self.flat
        return out if dtype is None else out.astype(dtype)


def _flat(m, s):
    if isinstance(m, BasePoint):
        m = m.flat
    m = np.asarray(m, dtype=float)
    if m.shape[-1] != s.base_dim:
        raise DimensionError(f"base point must have length {s.base_dim}, got {m.shape[-1]}")
    return m


def _same_splitting(s, m):
    if isinstance(m, BasePoint) and m.splitting != s:
        raise DimensionError("base point belongs to a different splitting")


# ------------------------------------------------------------ embeddings

def embed_i(m, s):
    m = _flat(m, s)
    return np.concatenate([np.zeros(m.shape[:-1] + (s.k,)), m], axis=-1)


def embed_j(h, s):
    h = np.asarray(h, dtype=float)
    if h.shape[-1] != s.k:
        raise DimensionError(f"target point must have length {s.k}, got {h.shape[-1]}")
    return np.concatenate([h, np.zeros(h.shape[:-1] + (s.base_dim,))], axis=-1)


def project_m(p, s):
    """Flat coordinates of pi_M(p)."""
    p = hgroup.as_point(p, s.n)
    m = p[..., s.k:].copy()
    m[..., -1] += 0.5 * np.sum(p[..., :s.k] * p[..., s.n:s.n + s.k], axis=-1)
    return m


def split_point(p, s):
    """Unique decomposition p = i(m) . j(h); returns ``(BasePoint, h)``."""
    p = hgroup.as_point(p, s.n)
    return BasePoint.from_flat(project_m(p, s), s), p[..., :s.k].copy()


def star_product(a, b, s):
    _same_splitting(s, a)
    _same_splitting(s, b)
    prod = hgroup.product(embed_i(a, s), embed_i(b, s))
    return BasePoint.from_flat(prod[..., s.k:], s)


def star_inverse(a, s):
    return BasePoint.from_flat(-_flat(a, s), s)


def base_norm(m, s):
    """||i(m)||_inf."""
    return hgroup.norm_inf(embed_i(m, s))


def sigma_term(v, w, v2, w2):
    """1/2 sum_j (v_j w2_j - v2_j w_j)."""
    v, w, v2, w2 = (np.asarray(x, dtype=float) for x in (v, w, v2, w2))
    if not (v.shape[-1] == w.shape[-1] == v2.shape[-1] == w2.shape[-1]):
        raise DimensionError("sigma_term needs blocks of equal length")
    return 0.5 * np.sum(v * w2 - v2 * w, axis=-1)


# -------------------------------------------------------- graph functions

@dataclass
class GraphFunction:
    """phi : Omega subset R^(2n+1-k) -> R^k with Omega an axis-aligned box."""

    splitting: Splitting
    components: tuple
    lo: np.ndarray
    hi: np.ndarray
    check_domain: bool = field(default=True, repr=False)

    def __post_init__(self):
        self.components = tuple(self.components)
        self.lo = np.asarray(self.lo, dtype=float)
        self.hi = np.asarray(self.hi, dtype=float)
        s = self.splitting
        if len(self.components) != s.k:
            raise DimensionError(f"graph over (n={s.n}, k={s.k}) needs {s.k} components, "
                                 f"got {len(self.components)}")
        if self.lo.shape != (s.base_dim,) or self.hi.shape != (s.base_dim,):
            raise DimensionError(f"domain box must have {s.base_dim} coordinates")
        if np.any(self.hi <= self.lo):
            raise ValueError("domain box is degenerate")
        for c in self.components:
            if c.arity != s.base_dim:
                raise DimensionError("component arity does not match the base dimension")

    @classmethod
    def from_exprs(cls, splitting, exprs, lo, hi):
        names = splitting.base_variables()
        comps = [ExprField(e, names) if isinstance(e, str) else e for e in exprs]
        return cls(splitting, comps, lo, hi)

    @classmethod
    def constant(cls, splitting, values, lo, hi):
        values = np.broadcast_to(np.asarray(values, float), (splitting.k,))
        return cls(splitting, [ConstantField(c, splitting.base_dim) for c in values], lo, hi)

    @property
    def k(self):
        return self.splitting.k

    def contains(self, m, margin=0.0):
        m = _flat(m, self.splitting)
        tol = 1e-12 * (1.0 + np.abs(self.hi - self.lo))
        return np.all((m >= self.lo + margin - tol) & (m <= self.hi - margin + tol), axis=-1)

    def require(self, m):
        if self.check_domain and not np.all(self.contains(m)):
            raise OutOfDomainError("base point outside the domain of phi")

    def __call__(self, m):
        m = _flat(m, self.splitting)
        self.require(m)
        return np.stack([c(m) for c in self.components], axis=-1)

    def derivative(self, m, direction, h=None):
        """Euclidean directional derivative of every component, shape (..., k)."""
        m = _flat(m, self.splitting)
        self.require(m)
        return np.stack([c.derivative(m, direction, h) for c in self.components], axis=-1)

    @property
    def smooth(self):
        return all(getattr(c, "smooth", False) for c in self.components)


def graph_map(phi, m):
    """Phi(m) = i(m) . j(phi(m))."""
    s = phi.splitting
    m = _flat(m, s)
    return hgroup.product(embed_i(m, s), embed_j(phi(m), s))


def _blocks(x, s):
    a, b = s.n - s.k, s.n
    return x[..., :a], x[..., a:b], x[..., b:s.horiz_dim], x[..., -1]


def _vertical_gap(phi_weight, a, b, s):
    va, ea, wa, ta = _blocks(a, s)
    vb, eb, wb, tb = _blocks(b, s)
    return ta - tb + np.sum(phi_weight * (eb - ea), axis=-1) + sigma_term(va, wa, vb, wb)


def graph_dist(phi, a, b):
    """d_phi(a, b) = ||pi_M(Phi(b)^-1 . Phi(a))||_inf, via the coordinate formula."""
    s = phi.splitting
    a, b = _flat(a, s), _flat(b, s)
    xi = np.linalg.norm(a[..., :-1] - b[..., :-1], axis=-1)
    gap = _vertical_gap(phi(b), a, b, s)
    return np.maximum(xi, np.sqrt(np.abs(gap)))


def graph_dist_abstract(phi, a, b):
    """d_phi straight from the group operations; used to cross-check graph_dist."""
    s = phi.splitting
    q = hgroup.product(hgroup.inverse(graph_map(phi, b)), graph_map(phi, a))
    return base_norm(project_m(q, s), s)


def sym_graph_dist(phi, a, b):
    """D_phi(a, b) = (d_phi(a, b) + d_phi(b, a)) / 2."""
    return 0.5 * (graph_dist(phi, a, b) + graph_dist(phi, b, a))


def rho_dist(phi, a, b):
    """rho_phi: the graph gauge with phi averaged over the two endpoints."""
    s = phi.splitting
    a, b = _flat(a, s), _flat(b, s)
    xi = np.linalg.norm(a[..., :-1] - b[..., :-1], axis=-1)
    gap = _vertical_gap(0.5 * (phi(a) + phi(b)), a, b, s)
    return np.maximum(xi, np.sqrt(np.abs(gap)))


# ---------------------------------------------------------------- samples

def sobol_points(lo, hi, count, seed=0):
    """``count`` scrambled Sobol points in the box [lo, hi] (deterministic in seed)."""
    lo, hi = np.asarray(lo, float), np.asarray(hi, float)
    sampler = qmc.Sobol(d=len(lo), scramble=True, seed=seed)
    u = sampler.random_base2(max(1, math.ceil(math.log2(max(count, 2)))))[:count]
    return lo + u * (hi - lo)


def sample_pairs(lo, hi, count, seed=0):
    lo, hi = np.asarray(lo, float), np.asarray(hi, float)
    both = sobol_points(np.concatenate([lo, lo]), np.concatenate([hi, hi]), count, seed)
    return both[:, :len(lo)], both[:, len(lo):]


@dataclass
class LipschitzReport:
    lip: float
    c0_inf: float
    c0_sup: float
    rho_over_d_sup: float
    n_pairs: int


def lipschitz_report(phi, pairs=None, count=1024, seed=0):
    """Empirical Lip(phi), the bracket of ||m.h|| / (||m|| + ||h||), and sup rho/d."""
    s = phi.splitting
    if pairs is None:
        pairs = sample_pairs(phi.lo, phi.hi, count, seed)
    a, b = (_flat(x, s) for x in pairs)
    if a.ndim != 2 or len(a) < 1:
        raise EmptySampleError("need at least one pair of sample points")
    d = graph_dist(phi, a, b)
    keep = d > 0
    if not np.any(keep):
        raise EmptySampleError("degenerate sample: all pairs coincide")
    a, b, d = a[keep], b[keep], d[keep]
    lip = float(np.max(np.linalg.norm(phi(a) - phi(b), axis=-1) / d))
    rho = float(np.max(rho_dist(phi, a, b) / d))

    # c0 bracket over m = a (shifted to the origin's scale) and h = phi(b)
    m = a - 0.5 * (phi.lo + phi.hi)
    h = phi(b)
    num = hgroup.norm_inf(hgroup.product(embed_i(m, s), embed_j(h, s)))
    den = base_norm(m, s) + np.linalg.norm(h, axis=-1)
    ok = den > 0
    ratio = num[ok] / den[ok]
    return LipschitzReport(lip=lip, c0_inf=float(np.min(ratio)), c0_sup=float(np.max(ratio)),
                           rho_over_d_sup=rho, n_pairs=int(len(a)))


def holder_sandwich(phi, a, b):
    """Empirical constants of C1 ||b^-1 * a||^2 <= d_phi(a, b) <= C2 ||b^-1 * a||^(1/2).

    Returns ``(C1, C2)`` as (inf of the left ratio, sup of the right ratio).
    """
    s = phi.splitting
    a, b = _flat(a, s), _flat(b, s)
    d = graph_dist(phi, a, b)
    rel = base_norm(star_product(star_inverse(b, s), a, s).flat, s)
    keep = rel > 0
    if not np.any(keep):
        raise EmptySampleError("degenerate sample: all pairs coincide")
    d, rel = d[keep], rel[keep]
    return float(np.min(d / rel ** 2)), float(np.max(d / np.sqrt(rel)))
