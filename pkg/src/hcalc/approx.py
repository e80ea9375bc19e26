"""Level-set functions, mollification and the numerical implicit function theorem.

A level-set function ``f = (f_1..f_k)`` lives on group coordinates
``(x1..xn, y1..yn, t)``.  Its zero set is parametrised over the base by
solving ``f(i(m) . j(x)) = 0`` for ``x`` with Newton's method, whose matrix
is exactly ``Xf``: moving ``x_l`` moves the group point along ``X_l``.
"""
from dataclasses import dataclass, field
import math

import numpy as np

from . import hgroup, intrinsic, split
from .errors import DimensionError, HorizontalDegeneracy, MaxIterationsError
from .expr import (Binary, Const, ExprField, FunctionField, ScalarField, Var, parse_expr,
                   substitute)


@dataclass
class LevelSetFunction:
    splitting: split.Splitting
    components: tuple
    det_threshold: float = 1e-10

    def __post_init__(self):
        self.components = tuple(self.components)
        s = self.splitting
        if len(self.components) != s.k:
            raise DimensionError(f"level set for (n={s.n}, k={s.k}) needs {s.k} components")
        for c in self.components:
            if c.arity != s.group_dim:
                raise DimensionError("level-set component arity must be 2n+1")

    @classmethod
    def from_exprs(cls, splitting, exprs, det_threshold=1e-10):
        names = splitting.group_variables()
        comps = [ExprField(e, names) if isinstance(e, str) else e for e in exprs]
        return cls(splitting, comps, det_threshold)

    def __call__(self, p):
        p = hgroup.as_point(p, self.splitting.n)
        return np.stack([c(p) for c in self.components], axis=-1)

    def horizontal_jacobian(self, p):
        """J_H f, shape (..., k, 2n): columns X1..Xn, Y1..Yn."""
        p = hgroup.as_point(p, self.splitting.n)
        frame = hgroup.horizontal_frame(p)
        rows = []
        for c in self.components:
            rows.append(np.stack([c.derivative(p, frame[..., j, :])
                                  for j in range(frame.shape[-2])], axis=-1))
        return np.stack(rows, axis=-2)

    def xf(self, p):
        p = hgroup.as_point(p, self.splitting.n)
        frame = hgroup.horizontal_frame(p)
        k = self.splitting.k
        return np.stack([np.stack([c.derivative(p, frame[..., j, :]) for j in range(k)], axis=-1)
                         for c in self.components], axis=-2)


# ------------------------------------------------------------------ lifting

def _pullback_mapping(s):
    """Base variable -> group expression so that a field of m becomes a field of pi_M(p)."""
    gv = s.group_variables()
    n, k = s.n, s.k
    mapping = {}
    for j in range(k + 1, n + 1):
        mapping[f"v{j}"] = Var(f"x{j}", gv.index(f"x{j}"))
        mapping[f"w{j}"] = Var(f"y{j}", gv.index(f"y{j}"))
    for j in range(1, k + 1):
        mapping[f"eta{j}"] = Var(f"y{j}", gv.index(f"y{j}"))
    tau = Var("t", gv.index("t"))
    for j in range(1, k + 1):
        prod = Binary("*", Var(f"x{j}", gv.index(f"x{j}")), Var(f"y{j}", gv.index(f"y{j}")))
        tau = Binary("+", tau, Binary("*", Const(0.5), prod))
    mapping["tau"] = tau
    return mapping


def lift_graph(phi):
    """Level-set function f_i(p) = x_i - phi_i(pi_M(p)) whose zero set is graph(phi)."""
    s = phi.splitting
    gv = s.group_variables()
    base_names = s.base_variables()
    comps = []
    for i, c in enumerate(phi.components):
        xi = Var(f"x{i + 1}", i)
        if isinstance(c, ExprField) and list(c.variables) == list(base_names):
            node = Binary("-", xi, substitute(c.node, _pullback_mapping(s), gv))
            comps.append(ExprField(node, gv, smooth=c.smooth))
        else:
            def fn(p, c=c, i=i):
                return p[..., i] - c(split.project_m(p, s))
            comps.append(FunctionField(fn, s.group_dim, smooth=c.smooth))
    return LevelSetFunction(s, comps)


# -------------------------------------------------------------- mollifier

def bump(r):
    r = np.asarray(r, float)
    out = np.zeros_like(r)
    inside = r < 1
    out[inside] = np.exp(-1.0 / (1.0 - r[inside] ** 2))
    return out


def stencil(dim, nodes_per_radius=4):
    """Unit-ball offsets and weights of the discrete normalised bump kernel."""
    ticks = np.arange(-nodes_per_radius, nodes_per_radius + 1) / nodes_per_radius
    grid = np.stack(np.meshgrid(*([ticks] * dim), indexing="ij"), axis=-1).reshape(-1, dim)
    w = bump(np.linalg.norm(grid, axis=-1))
    keep = w > 0
    w = w[keep]
    return grid[keep], w / w.sum()


class MollifiedField(ScalarField):
    """F_eps(p) = sum_s w_s F(p + eps s) over a symmetric stencil.

    Symmetric weights reproduce affine functions exactly; derivatives pass
    through the stencil linearly.
    """

    def __init__(self, source, eps, offsets, weights, box=None):
        self.source = source
        self.eps = float(eps)
        self.offsets = offsets
        self.weights = weights
        self.arity = source.arity
        self.smooth = True
        self.box = box

    def _shifted(self, pts):
        return pts[..., None, :] + self.eps * self.offsets

    def _eval(self, pts):
        return self.source(self._shifted(pts)) @ self.weights

    def _derivative(self, pts, direction, h):
        direction = np.broadcast_to(direction, pts.shape)[..., None, :]
        q = self._shifted(pts)
        return self.source.derivative(q, np.broadcast_to(direction, q.shape), h) @ self.weights


def mollify(F, eps, box=None, nodes_per_radius=4):
    """Convolve ``F`` with the bump kernel of radius ``eps``.

    The result lives on the eps-interior of ``box`` (or of ``F.box``); with
    no box at all the field is unrestricted.
    """
    if not eps > 0:
        raise ValueError(f"mollifier radius must be positive, got {eps}")
    box = box if box is not None else F.box
    inner = None
    if box is not None:
        lo, hi = (np.asarray(b, float) for b in box)
        if eps >= 0.5 * float(np.min(hi - lo)):
            raise ValueError(f"eps={eps} is too large for a box of min side {np.min(hi - lo)}")
        inner = (lo + eps, hi - eps)
    offsets, weights = stencil(F.arity, nodes_per_radius)
    return MollifiedField(F, eps, offsets, weights, inner)


def mollify_levelset(f, eps, box=None, nodes_per_radius=4):
    comps = [mollify(c, eps, box, nodes_per_radius) for c in f.components]
    return LevelSetFunction(f.splitting, comps, f.det_threshold)


# ------------------------------------------------------- implicit solver

def graph_point(m, x, s):
    """i(m) . j(x) = (x, v, eta, w, tau - 1/2 sum x_l eta_l)."""
    m = split._flat(m, s)
    x = np.asarray(x, float)
    p = np.concatenate([x, m], axis=-1)
    eta = m[..., s.n - s.k:s.n]
    p[..., -1] -= 0.5 * np.sum(x * eta, axis=-1)
    return p


@dataclass
class SolveResult:
    x: np.ndarray
    residual: np.ndarray
    iterations: int
    min_det: float


def implicit_solve(f, m, x0=None, tol=1e-12, max_iter=50, det_threshold=None, full=False):
    """Solve f(i(m) . j(x)) = 0 for x in R^k by Newton's method (vectorised)."""
    s = f.splitting
    threshold = f.det_threshold if det_threshold is None else det_threshold
    m = split._flat(m, s)
    x = np.zeros(m.shape[:-1] + (s.k,)) if x0 is None else np.array(x0, float, copy=True)
    x = np.broadcast_to(x, m.shape[:-1] + (s.k,)).copy()
    min_det = math.inf
    for it in range(max_iter + 1):
        p = graph_point(m, x, s)
        r = f(p)
        err = np.max(np.abs(r), axis=-1)
        if np.all(err <= tol):
            if full:
                return SolveResult(x, err, it, min_det)
            return x
        if it == max_iter:
            break
        X = f.xf(p)
        det = np.abs(np.linalg.det(X))
        min_det = min(min_det, float(np.min(det)))
        if np.any(det < threshold):
            raise HorizontalDegeneracy(
                f"|det Xf| = {float(np.min(det)):.3g} below {threshold:g} during Newton",
                min_det=float(np.min(det)))
        active = err > tol
        step = np.linalg.solve(X, r[..., None])[..., 0]
        x = x - np.where(active[..., None], step, 0.0)
        if not np.all(np.isfinite(x)):
            break
    raise MaxIterationsError(
        f"Newton did not reach |f| <= {tol:g} in {max_iter} iterations "
        f"(worst residual {float(np.max(err)):.3g})")


class _ImplicitCache:
    def __init__(self, f, tol, max_iter):
        self.f, self.tol, self.max_iter = f, tol, max_iter
        self.key, self.value = None, None

    def __call__(self, m):
        key = (m.shape, m.tobytes())
        if key != self.key:
            # successive calls along an integral curve move only slightly,
            # so the previous solution is a good Newton start
            x0 = self.value if self.value is not None and self.value.shape[:-1] == m.shape[:-1] else None
            self.value = implicit_solve(self.f, m, x0=x0, tol=self.tol, max_iter=self.max_iter)
            self.key = key
        return self.value


def implicit_graph(f, lo, hi, tol=1e-12, max_iter=50):
    """GraphFunction whose values come from implicit_solve of ``f``."""
    s = f.splitting
    solve = _ImplicitCache(f, tol, max_iter)
    comps = [FunctionField(lambda m, i=i: solve(m)[..., i], s.base_dim, step=1e-4)
             for i in range(s.k)]
    return split.GraphFunction(s, comps, lo, hi)


# ------------------------------------------------------- approx family

def default_nodes(base_dim):
    return 33 if base_dim <= 3 else 9


def base_grid(lo, hi, nodes):
    lo, hi = np.asarray(lo, float), np.asarray(hi, float)
    counts = np.broadcast_to(np.asarray(nodes, int), lo.shape)
    axes = [np.linspace(a, b, int(c)) for a, b, c in zip(lo, hi, counts)]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(lo))


def _sup(x):
    return float(np.max(np.abs(x))) if np.size(x) else 0.0


@dataclass
class ApproxFamily:
    epsilons: list
    grid: dict
    points: np.ndarray = field(repr=False)
    phi_ref: np.ndarray = field(repr=False)
    jac_ref: np.ndarray = field(repr=False)
    phi_eps: list = field(repr=False)
    jac_eps: list = field(repr=False)
    sup_phi_gap: list
    sup_jac_gap: list
    min_det: list
    max_residual: list
    degenerate: list
    reference: str
    levelsets: list = field(default_factory=list, repr=False)

    def graph(self, index):
        """The smooth graph phi_eps for the ``index``-th schedule entry."""
        g = self.grid
        return implicit_graph(self.levelsets[index], g["lo"], g["hi"])

    def to_dict(self):
        return {"epsilons": self.epsilons, "sup_phi_gap": self.sup_phi_gap,
                "sup_jac_gap": self.sup_jac_gap, "grid": self.grid, "min_det": self.min_det,
                "max_residual": self.max_residual, "degenerate": self.degenerate,
                "reference": self.reference}


def approx_family(source, epsilons, lo=None, hi=None, nodes=None, jac_nodes=None,
                  tol=1e-12, max_iter=50, nodes_per_radius=4):
    """Mollify, solve and compare along a decreasing schedule of radii.

    ``source`` is a GraphFunction (lifted first) or a LevelSetFunction.  The
    reference graph is ``phi`` itself (graph source) or the implicit solve of
    the unmollified ``f``; the reference Jacobian is the direct intrinsic one.
    ``jac_nodes`` optionally strides the grid for the Jacobian comparison.
    """
    eps = [float(e) for e in epsilons]
    if not eps or any(b >= a for a, b in zip(eps, eps[1:])) or eps[-1] <= 0:
        raise ValueError("epsilon schedule must be positive and strictly decreasing")
    if isinstance(source, split.GraphFunction):
        s = source.splitting
        lo = source.lo if lo is None else lo
        hi = source.hi if hi is None else hi
        f = lift_graph(source)
    else:
        s = source.splitting
        if lo is None or hi is None:
            raise ValueError("a level-set source needs an explicit base box")
        f = source
    lo, hi = np.asarray(lo, float), np.asarray(hi, float)
    nodes = default_nodes(s.base_dim) if nodes is None else int(nodes)
    pts = base_grid(lo, hi, nodes)
    jac_idx = _strided(nodes, jac_nodes, s.base_dim)
    jpts = pts[jac_idx]

    if isinstance(source, split.GraphFunction):
        phi_ref = source(pts)
        if source.smooth:
            jac_ref = intrinsic.analytic_jacobian(source, jpts)
            reference = "analytic"
        else:
            jac_ref = intrinsic.intrinsic_jacobian(source, jpts)
            reference = "curves"
    else:
        phi_ref = implicit_solve(f, pts, tol=tol, max_iter=max_iter)
        jac_ref = intrinsic.jacobian_from_levelset(f, graph_point(jpts, phi_ref[jac_idx], s))
        reference = "levelset"

    family = ApproxFamily(eps, {"lo": lo.tolist(), "hi": hi.tolist(), "nodes": nodes,
                                "jacobian_nodes": int(len(jac_idx))},
                          pts, phi_ref, jac_ref, [], [], [], [], [], [], [], reference)
    guess = phi_ref
    for e in eps:
        fe = mollify_levelset(f, e, nodes_per_radius=nodes_per_radius)
        family.levelsets.append(fe)
        try:
            res = implicit_solve(fe, pts, x0=guess, tol=tol, max_iter=max_iter, full=True)
            J, delta = intrinsic.jacobian_from_levelset(
                fe, graph_point(jpts, res.x[jac_idx], s), fe.det_threshold, return_delta=True)
        except HorizontalDegeneracy as exc:
            family.phi_eps.append(None)
            family.jac_eps.append(None)
            family.sup_phi_gap.append(None)
            family.sup_jac_gap.append(None)
            family.min_det.append(exc.min_det)
            family.max_residual.append(None)
            family.degenerate.append(True)
            continue
        guess = res.x
        family.phi_eps.append(res.x)
        family.jac_eps.append(J)
        family.sup_phi_gap.append(_sup(res.x - phi_ref))
        family.sup_jac_gap.append(_sup(J - jac_ref))
        family.min_det.append(float(np.min(delta)))
        family.max_residual.append(float(np.max(res.residual)))
        family.degenerate.append(False)
    return family


def _strided(nodes, jac_nodes, dim):
    """Flat indices of a sub-grid with ``jac_nodes`` per axis (all nodes if None)."""
    if jac_nodes is None or jac_nodes >= nodes:
        return np.arange(nodes ** dim)
    if (nodes - 1) % (jac_nodes - 1):
        raise ValueError("jacobian sub-grid must align with the solve grid")
    stride = (nodes - 1) // (jac_nodes - 1)
    ticks = np.arange(0, nodes, stride)
    mesh = np.meshgrid(*([ticks] * dim), indexing="ij")
    return np.ravel_multi_index([m.ravel() for m in mesh], (nodes,) * dim)
