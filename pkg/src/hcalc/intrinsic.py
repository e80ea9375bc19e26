"""Nonlinear vector fields W^phi_j, their integral curves, and intrinsic Jacobians.

Field indices ``j`` are 1-based, ``1 <= j <= 2n-k``.  In the flat base layout
``(v, eta, w, tau)`` the field ``W_j`` moves coordinate ``j-1`` with unit
speed and ``tau`` with a coefficient that is ``-w/2`` (first block),
``phi_i`` (middle block) or ``+v/2`` (last block).
"""
from dataclasses import asdict, dataclass, field
import math

import numpy as np

from . import split
from .errors import CurveExitError, EmptySampleError, HCalcError, HorizontalDegeneracy, StepUnderflowError


@dataclass
class IntrinsicOptions:
    h: float = None             # difference-quotient step; None -> 1e-3 (1 + |a|)
    solver_step: float = None   # RK4 step; None -> min(1e-3, |s| / 64)
    solver_tol: float = 1e-10
    max_halvings: int = 8
    conv_tol: float = 1e-6
    probes: int = 256
    seed: int = 0
    det_threshold: float = 1e-10


DEFAULT_OPTIONS = IntrinsicOptions()


def _check_j(j, s):
    if not 1 <= j <= s.horiz_dim:
        raise IndexError(f"field index {j} out of range 1..{s.horiz_dim}")


def tau_coefficient(j, phi, p):
    s = phi.splitting
    _check_j(j, s)
    n, k = s.n, s.k
    if j <= n - k:
        return -0.5 * p[..., n + j - 1]
    if j <= n:
        i = j - (n - k) - 1
        phi.require(p)
        return phi.components[i](p)
    return 0.5 * p[..., j - n - 1]


def w_field(j, phi, p):
    """Coefficient vector of W^phi_j at ``p`` (length 2n+1-k)."""
    s = phi.splitting
    p = split._flat(p, s)
    out = np.zeros(p.shape)
    out[..., j - 1] = 1.0
    out[..., -1] = tau_coefficient(j, phi, p)
    return out


def is_middle(j, s):
    return s.n - s.k < j <= s.n


# ------------------------------------------------------------ exp maps

@dataclass
class ExpCurve:
    j: int
    start: np.ndarray
    times: np.ndarray       # (N+1,) + batch
    samples: np.ndarray     # (N+1,) + batch + (d,)
    step: float
    tol: float


def _rk4(j, phi, b, s, nsteps, keep):
    """Integrate dx/du = s W_j(x) on u in [0, 1] with ``nsteps`` RK4 steps."""
    du = 1.0 / nsteps
    x = b.copy()
    speed = s[..., None]
    path = [x.copy()] if keep else None

    def rhs(y, u):
        if not np.all(phi.contains(y)):
            raise CurveExitError(f"integral curve of W_{j} left the domain", exit_time=u * s)
        return speed * w_field(j, phi, y)

    for step in range(nsteps):
        u = step * du
        k1 = rhs(x, u)
        k2 = rhs(x + 0.5 * du * k1, u + 0.5 * du)
        k3 = rhs(x + 0.5 * du * k2, u + 0.5 * du)
        k4 = rhs(x + du * k3, u + du)
        x = x + du / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        if keep:
            path.append(x.copy())
    if not np.all(phi.contains(x)):
        raise CurveExitError(f"integral curve of W_{j} left the domain", exit_time=s)
    return x, path


def exp_map(j, phi, b, s, opts=None, return_curve=False):
    """Endpoint of the integral curve of W^phi_j from ``b`` after time ``s``.

    ``s`` may be a scalar or an array matching the batch shape of ``b``.
    Classical RK4 with step-halving acceptance: the step is halved until two
    successive runs agree to ``opts.solver_tol``.
    """
    opts = opts or DEFAULT_OPTIONS
    sp = phi.splitting
    _check_j(j, sp)
    b = split._flat(b, sp)
    s = np.broadcast_to(np.asarray(s, dtype=float), b.shape[:-1]).copy()
    smax = float(np.max(np.abs(s))) if s.size else 0.0
    if smax == 0.0:
        if return_curve:
            return ExpCurve(j, b, np.zeros((1,) + s.shape), b[None].copy(), 0.0, opts.solver_tol)
        return b.copy()
    if not np.all(phi.contains(b)):
        raise CurveExitError("starting point outside the domain", exit_time=0.0)
    step = opts.solver_step if opts.solver_step is not None else min(1e-3, smax / 64)
    nsteps = max(1, math.ceil(smax / step - 1e-9))
    prev, _ = _rk4(j, phi, b, s, nsteps, False)
    for _ in range(opts.max_halvings):
        nsteps *= 2
        cur, path = _rk4(j, phi, b, s, nsteps, return_curve)
        if np.max(np.abs(cur - prev)) <= opts.solver_tol:
            if return_curve:
                u = np.linspace(0.0, 1.0, nsteps + 1)
                times = u.reshape((-1,) + (1,) * s.ndim) * s
                return ExpCurve(j, b, times, np.stack(path), smax / nsteps, opts.solver_tol)
            return cur
        prev = cur
    raise StepUnderflowError(
        f"RK4 for W_{j} did not settle to {opts.solver_tol} after {opts.max_halvings} halvings")


# ------------------------------------------------------ intrinsic partials

def _default_h(a, opts):
    if opts.h is not None:
        return np.full(a.shape[:-1], float(opts.h))
    return 1e-3 * (1.0 + np.linalg.norm(a, axis=-1))


def _quotients(j, phi, a, h, opts, one_sided, divisors):
    """Difference quotients at steps h / m for every m in ``divisors``.

    All curves of the stencil go through a single batched exp_map call.
    """
    steps = [h / m for m in divisors]
    times = steps if one_sided else [t for st in steps for t in (st, -st)]
    ends = exp_map(j, phi, np.concatenate([a] * len(times)), np.concatenate(times), opts)
    vals = phi(ends).reshape(len(times), len(a), -1)
    if one_sided:
        base = phi(a)
        return [(vals[i] - base) / st[:, None] for i, st in enumerate(steps)]
    return [(vals[2 * i] - vals[2 * i + 1]) / (2 * st[:, None]) for i, st in enumerate(steps)]


def _extrapolate(j, phi, a, h, opts, one_sided):
    if one_sided:
        d1, d2, d4, d8 = _quotients(j, phi, a, h, opts, True, (1, 2, 4, 8))
        r1, r2, r3 = 2 * d2 - d1, 2 * d4 - d2, 2 * d8 - d4
        return (4 * r2 - r1) / 3, (4 * r3 - r2) / 3
    d1, d2, d4 = _quotients(j, phi, a, h, opts, False, (1, 2, 4))
    return (4 * d2 - d1) / 3, (4 * d4 - d2) / 3


def intrinsic_column(j, phi, a, opts=None, one_sided=False):
    """Column ``j`` of J^phi phi at ``a`` from difference quotients along
    integral curves; returns ``(values (..., k), flagged (...))``.

    Symmetric quotients get one Richardson step; one-sided quotients two.
    Points too close to the boundary for a symmetric stencil fall back to a
    one-sided quotient pointing into the domain.  ``flagged`` marks points
    where the extrapolants at h and h/2 disagree by more than
    ``opts.conv_tol``; the value is still returned.
    """
    opts = opts or DEFAULT_OPTIONS
    a = split._flat(a, phi.splitting)
    shape = a.shape[:-1]
    a = a.reshape(-1, a.shape[-1])
    h = _default_h(a, opts)
    W = w_field(j, phi, a)
    reach = 1.5 * h[:, None] * W
    fwd = phi.contains(a + reach)
    bwd = phi.contains(a - reach)
    if np.any(~fwd & ~bwd):
        raise CurveExitError(f"no room for a W_{j} difference quotient inside the domain",
                             exit_time=float(np.min(h)))
    value = np.zeros((len(a), phi.k))
    check = np.zeros_like(value)
    sym = fwd & bwd & (not one_sided)
    groups = [(sym, 1.0, False), (~sym & fwd, 1.0, True), (~sym & ~fwd, -1.0, True)]
    for mask, sign, side in groups:
        if np.any(mask):
            value[mask], check[mask] = _extrapolate(j, phi, a[mask], sign * h[mask], opts, side)
    flagged = np.max(np.abs(value - check), axis=-1) > opts.conv_tol * (1 + np.max(np.abs(value), axis=-1))
    return value.reshape(shape + (phi.k,)), flagged.reshape(shape)


def outer_field(j, s):
    return not is_middle(j, s)


def intrinsic_partial(i, j, phi, a, opts=None):
    """The (i, j) entry of J^phi phi at ``a``: d/ds phi_i(exp(s W_j)(a)) at s = 0."""
    s = phi.splitting
    if not 1 <= i <= s.k:
        raise IndexError(f"component index {i} out of range 1..{s.k}")
    value, _ = intrinsic_column(j, phi, a, opts)
    return value[..., i - 1]


def intrinsic_jacobian(phi, a, opts=None, return_flags=False, one_sided=False):
    """k x (2n-k) intrinsic Jacobian from curve difference quotients."""
    s = phi.splitting
    cols, flags = [], []
    for j in range(1, s.horiz_dim + 1):
        value, flagged = intrinsic_column(j, phi, a, opts, one_sided)
        cols.append(value)
        flags.append(flagged)
    J = np.stack(cols, axis=-1)
    if return_flags:
        return J, np.stack(flags, axis=-1)
    return J


def analytic_jacobian(phi, a):
    """J^phi phi from Euclidean derivatives: column j is grad(phi_i) . W_j(a)."""
    s = phi.splitting
    a = split._flat(a, s)
    cols = [phi.derivative(a, w_field(j, phi, a)) for j in range(1, s.horiz_dim + 1)]
    return np.stack(cols, axis=-1)


def jacobian_from_levelset(f, p, det_threshold=None, return_delta=False):
    """J = -(Xf)^-1 Yf at group point(s) ``p`` for a level-set function ``f``.

    Xf holds X_1..X_k derivatives (k x k), Yf the remaining 2n-k horizontal
    derivatives.  With ``return_delta`` also returns Delta = |det Xf|.
    """
    threshold = DEFAULT_OPTIONS.det_threshold if det_threshold is None else det_threshold
    s = f.splitting
    JH = f.horizontal_jacobian(p)
    X, Y = JH[..., :, :s.k], JH[..., :, s.k:]
    delta = np.abs(np.linalg.det(X))
    if np.any(delta < threshold):
        raise HorizontalDegeneracy(
            f"|det Xf| = {float(np.min(delta)):.3g} below threshold {threshold:g}",
            min_det=float(np.min(delta)))
    J = -np.linalg.solve(X, Y)
    return (J, delta) if return_delta else J


# -------------------------------------------------------------- residuals

def _probe_offsets(dim, r, count, seed):
    return split.sobol_points(-np.full(dim, r), np.full(dim, r), count, seed)


def id_residual(phi, a, J, r, opts=None):
    """sup_b |phi(b) - phi(a) - J pi(a^-1 * b)| / d_phi(b, a) over probes b in I_r(a)."""
    opts = opts or DEFAULT_OPTIONS
    s = phi.splitting
    a = split._flat(a, s)
    off = _probe_offsets(s.base_dim, r, opts.probes, opts.seed)
    off = off[np.any(off != 0, axis=-1)]
    if len(off) == 0:
        raise EmptySampleError("no probe points")
    b = a + off
    A = np.broadcast_to(a, b.shape)
    d = split.graph_dist(phi, b, A)
    lin = off[:, :-1] @ np.asarray(J, float).T
    num = np.linalg.norm(phi(b) - phi(A) - lin, axis=-1)
    keep = d > 0
    return float(np.max(num[keep] / d[keep]))


def uid_residual(phi, a, J, r, opts=None, min_dist=1e-9):
    """sup over pairs b, b' in I_r(a) of |phi(b') - phi(b) - J pi(b^-1 * b')| / d_phi(b', b)."""
    opts = opts or DEFAULT_OPTIONS
    s = phi.splitting
    a = split._flat(a, s)
    lo, hi = a - r, a + r
    b, b2 = split.sample_pairs(lo, hi, opts.probes, opts.seed)
    d = split.graph_dist(phi, b2, b)
    keep = d >= min_dist
    if not np.any(keep):
        raise EmptySampleError("no admissible pairs")
    b, b2, d = b[keep], b2[keep], d[keep]
    lin = (b2[:, :-1] - b[:, :-1]) @ np.asarray(J, float).T
    num = np.linalg.norm(phi(b2) - phi(b) - lin, axis=-1)
    return float(np.max(num / d))


@dataclass
class ResidualReport:
    center: list
    radii: list
    values: list
    verdict: bool
    kind: str = "uid"

    def to_dict(self):
        return asdict(self)


def decays(values, slack=0.05, zero_tol=1e-10, ratio=0.75):
    """Monotone (within ``slack``) and shrinking by ``ratio`` overall, or all ~0."""
    v = np.asarray(values, float)
    if np.all(v <= zero_tol):
        return True
    monotone = bool(np.all(v[1:] <= v[:-1] * (1 + slack) + zero_tol))
    return monotone and bool(v[-1] <= ratio * v[0] + zero_tol)


def residual_report(phi, a, J, radii, kind="uid", opts=None, slack=0.05):
    radii = [float(r) for r in radii]
    if any(r2 >= r1 for r1, r2 in zip(radii, radii[1:])):
        raise ValueError("radii must be strictly decreasing")
    fn = uid_residual if kind == "uid" else id_residual
    values = [fn(phi, a, J, r, opts) for r in radii]
    return ResidualReport(center=np.asarray(a, float).tolist(), radii=radii, values=values,
                          verdict=decays(values, slack), kind=kind)


# ------------------------------------------------------- Hoelder moduli

def holder_pairs(lo, hi, rmax, count=2048, scales=24, seed=0):
    """Fixed pair sample inside [lo, hi]: base points with offsets at geometric
    scales below ``rmax``.  Returns ``(a, b, |a - b|)``."""
    lo, hi = np.asarray(lo, float), np.asarray(hi, float)
    dim = len(lo)
    base = split.sobol_points(lo, hi, count, seed)
    rng = np.random.default_rng(seed)
    direction = rng.normal(size=(count, dim))
    direction /= np.linalg.norm(direction, axis=-1, keepdims=True)
    level = np.arange(count) % scales
    length = rmax * 2.0 ** (-level * 0.5) * rng.uniform(0.5, 1.0, size=count)
    other = np.clip(base + length[:, None] * direction, lo, hi)
    dist = np.linalg.norm(other - base, axis=-1)
    keep = dist > 0
    return base[keep], other[keep], dist[keep]


def holder_modulus(phi, lo, hi, r, pairs=None, seed=0):
    """alpha(r): sup |phi(a) - phi(b)| / |a - b|^(1/2) over sampled pairs in the
    window with 0 < |a - b| <= r."""
    lo, hi = np.asarray(lo, float), np.asarray(hi, float)
    if np.any(lo < phi.lo) or np.any(hi > phi.hi):
        raise ValueError("Hoelder window must lie inside the domain of phi")
    if pairs is None:
        pairs = holder_pairs(lo, hi, r, seed=seed)
    a, b, dist = pairs
    keep = dist <= r
    if not np.any(keep):
        raise EmptySampleError(f"no sampled pairs within distance {r}")
    q = np.linalg.norm(phi(a[keep]) - phi(b[keep]), axis=-1) / np.sqrt(dist[keep])
    return float(np.max(q))


def upsilon(phi, center, delta, count=1024, seed=0):
    """sup of the 1/2-Hoelder quotient over sampled pairs in I_delta(center)."""
    center = np.asarray(center, float)
    a, b = split.sample_pairs(center - delta, center + delta, count, seed)
    dist = np.linalg.norm(a - b, axis=-1)
    keep = dist > 0
    q = np.linalg.norm(phi(a[keep]) - phi(b[keep]), axis=-1) / np.sqrt(dist[keep])
    return float(np.max(q))


@dataclass
class HolderReport:
    window: list
    radii: list
    alpha: list
    upsilon: list
    c1: float
    c2: float
    verdict: bool

    def to_dict(self):
        return asdict(self)


def holder_report(phi, lo, hi, radii, seed=0, slack=0.05):
    lo, hi = np.asarray(lo, float), np.asarray(hi, float)
    radii = [float(r) for r in radii]
    pairs = holder_pairs(lo, hi, max(radii), seed=seed)
    alpha = [holder_modulus(phi, lo, hi, r, pairs) for r in radii]
    center = 0.5 * (lo + hi)
    ups = [upsilon(phi, center, min(r, float(np.min(hi - center))), seed=seed) for r in radii]
    a, b = split.sample_pairs(lo, hi, 1024, seed)
    c1, c2 = split.holder_sandwich(phi, a, b)
    return HolderReport(window=[lo.tolist(), hi.tolist()], radii=radii, alpha=alpha,
                        upsilon=ups, c1=c1, c2=c2, verdict=decays(alpha, slack))


# ------------------------------------------------ characterization report

@dataclass
class CharacterizationReport:
    points: int
    partial_step_spread: float
    partial_path_spread: float
    flagged: int
    jacobian_modulus: list
    uid_radii: list
    uid_residuals: list
    alpha: list
    checks: dict
    agree: bool
    errors: list = field(default_factory=list)

    def to_dict(self):
        return asdict(self)


def _grid_points(lo, hi, per_axis):
    axes = [np.linspace(a, b, per_axis) for a, b in zip(lo, hi)]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(lo))


def characterization_report(phi, lo, hi, radii=(0.2, 0.1, 0.05, 0.025), opts=None,
                            per_axis=4, spread_tol=1e-6, slack=0.05):
    """Run the four equivalent-condition diagnostics on the window [lo, hi].

    (a) stability of intrinsic partials under a finer solver step and a
    one-sided path, (b) continuity modulus of a -> J(a), (c) decay of the UID
    residual at the window center, (d) decay of alpha(r).  Raw numbers are
    always reported; ``checks`` holds the per-condition verdicts.
    """
    opts = opts or DEFAULT_OPTIONS
    lo, hi = np.asarray(lo, float), np.asarray(hi, float)
    pts = _grid_points(lo, hi, per_axis)
    center = 0.5 * (lo + hi)
    errors = []
    nan = float("nan")

    step_spread = path_spread = nan
    flagged = 0
    J0 = None
    try:
        J0, flags = intrinsic_jacobian(phi, pts, opts, return_flags=True)
        fine = IntrinsicOptions(**{**asdict(opts), "solver_step": (opts.solver_step or 1e-3) / 4})
        J1 = intrinsic_jacobian(phi, pts, fine)
        J2 = intrinsic_jacobian(phi, pts, opts, one_sided=True)
        step_spread = float(np.max(np.abs(J0 - J1)))
        path_spread = float(np.max(np.abs(J0 - J2)))
        flagged = int(np.sum(np.any(flags, axis=-1)))
    except HCalcError as exc:
        errors.append(f"partials: {exc}")

    modulus = []
    if J0 is not None:
        rng = np.random.default_rng(opts.seed)
        direction = rng.normal(size=pts.shape)
        direction /= np.linalg.norm(direction, axis=-1, keepdims=True)
        for r in radii:
            other = np.clip(pts + r * direction, lo, hi)
            try:
                Jr = intrinsic_jacobian(phi, other, opts)
                modulus.append(float(np.max(np.abs(Jr - J0))))
            except HCalcError as exc:
                errors.append(f"modulus r={r}: {exc}")
                modulus.append(nan)

    uid_vals = []
    if J0 is not None:
        Jc = intrinsic_jacobian(phi, center, opts) if not errors else J0[0]
        half = float(np.min(hi - center))
        for r in radii:
            try:
                uid_vals.append(uid_residual(phi, center, Jc, min(r, half), opts))
            except HCalcError as exc:
                errors.append(f"uid r={r}: {exc}")
                uid_vals.append(nan)

    alpha = []
    pairs = holder_pairs(lo, hi, max(radii), seed=opts.seed)
    for r in radii:
        alpha.append(holder_modulus(phi, lo, hi, r, pairs))

    def ok(values):
        return bool(values) and not any(math.isnan(v) for v in values) and decays(values, slack)

    checks = {
        "partials_stable": bool(not math.isnan(step_spread) and step_spread <= spread_tol
                                and path_spread <= spread_tol),
        "jacobian_continuous": ok(modulus),
        "uid_decay": ok(uid_vals),
        "holder_decay": ok(alpha),
    }
    return CharacterizationReport(
        points=int(len(pts)), partial_step_spread=step_spread, partial_path_spread=path_spread,
        flagged=flagged, jacobian_modulus=modulus, uid_radii=[float(r) for r in radii],
        uid_residuals=uid_vals, alpha=alpha, checks=checks,
        agree=len(set(checks.values())) == 1, errors=errors)


def chain_rule_defect(phi, j, b, s, opts=None):
    """|phi(gamma(s)) - phi(gamma(0)) - int_0^s omega_j(gamma(r)) dr| along one
    RK4 curve, with omega from analytic_jacobian and Simpson on solver nodes."""
    from scipy.integrate import simpson

    curve = exp_map(j, phi, b, s, opts, return_curve=True)
    omega = np.stack([analytic_jacobian(phi, x)[..., j - 1] for x in curve.samples])
    integral = simpson(omega, x=curve.times, axis=0)
    increment = phi(curve.samples[-1]) - phi(curve.samples[0])
    return float(np.max(np.abs(increment - integral)))
