"""Group law, dilations and the homogeneous norm of the Heisenberg group.

Points are numpy arrays in exponential coordinates ``(x1..xn, y1..yn, t)``.
Every function accepts a single point of shape ``(2n+1,)`` or a batch of
shape ``(..., 2n+1)`` and broadcasts over the leading axes.
"""
import numpy as np

from .errors import DimensionError


def heis_dim(p):
    """Return ``n`` for a point (or batch) of length ``2n+1``."""
    size = np.shape(p)[-1]
    if size < 3 or size % 2 == 0:
        raise DimensionError(f"a point of H^n has odd length 2n+1 >= 3, got {size}")
    return (size - 1) // 2


def as_point(p, n=None):
    p = np.asarray(p, dtype=float)
    m = heis_dim(p)
    if n is not None and m != n:
        raise DimensionError(f"expected a point of H^{n}, got H^{m}")
    if not np.all(np.isfinite(p)):
        raise ValueError("group point has non-finite coordinates")
    return p


def _same_dim(p, q):
    p, q = as_point(p), as_point(q)
    if p.shape[-1] != q.shape[-1]:
        raise DimensionError(
            f"points live in different groups: H^{heis_dim(p)} vs H^{heis_dim(q)}")
    return p, q


def identity(n):
    return np.zeros(2 * n + 1)


def symplectic(p, q):
    """sum_j (p_j q_{j+n} - q_j p_{j+n}), the cross term of the group law."""
    n = heis_dim(p)
    return np.sum(p[..., :n] * q[..., n:2 * n] - q[..., :n] * p[..., n:2 * n], axis=-1)


def product(p, q):
    p, q = _same_dim(p, q)
    out = p + q
    out[..., -1] += 0.5 * symplectic(p, q)
    return out


def inverse(p):
    # step two: the BCH series stops, so p^-1 = -p
    return -as_point(p)


def dilate(lam, p):
    if not lam > 0:
        raise ValueError(f"dilation factor must be positive, got {lam}")
    p = as_point(p)
    out = lam * p
    out[..., -1] *= lam
    return out


def norm_inf(p):
    """max{ |horizontal part|, |t|^(1/2) }."""
    p = np.asarray(p, dtype=float)
    heis_dim(p)
    horiz = np.linalg.norm(p[..., :-1], axis=-1)
    return np.maximum(horiz, np.sqrt(np.abs(p[..., -1])))


def dist_inf(p, q):
    """d_inf(p, q) = ||q^-1 . p||_inf."""
    p, q = _same_dim(p, q)
    return norm_inf(product(inverse(q), p))


def frame_eval(which, p):
    """Coefficients of a left-invariant frame field at ``p``.

    ``which`` is ``"T"`` or ``("X", j)`` / ``("Y", j)`` with 1-based ``j``;
    the strings ``"X2"``, ``"Y1"`` are accepted as well.
    """
    p = as_point(p)
    n = heis_dim(p)
    kind, j = _parse_frame_name(which)
    out = np.zeros(p.shape)
    if kind == "T":
        out[..., -1] = 1.0
        return out
    if not 1 <= j <= n:
        raise IndexError(f"frame index {j} out of range 1..{n}")
    if kind == "X":
        out[..., j - 1] = 1.0
        out[..., -1] = -0.5 * p[..., n + j - 1]
    else:
        out[..., n + j - 1] = 1.0
        out[..., -1] = 0.5 * p[..., j - 1]
    return out


def _parse_frame_name(which):
    if isinstance(which, str):
        if which == "T":
            return "T", 0
        kind, idx = which[0], which[1:]
        if kind not in "XY" or not idx.isdigit():
            raise ValueError(f"unknown frame field {which!r}")
        return kind, int(idx)
    kind, j = which
    if kind not in ("X", "Y"):
        raise ValueError(f"unknown frame field {which!r}")
    return kind, int(j)


def horizontal_frame(p):
    """Stack of X1..Xn, Y1..Yn coefficient vectors, shape ``(..., 2n, 2n+1)``."""
    p = as_point(p)
    n = heis_dim(p)
    names = [("X", j) for j in range(1, n + 1)] + [("Y", j) for j in range(1, n + 1)]
    return np.stack([frame_eval(w, p) for w in names], axis=-2)


def frame_flow(which, p, s):
    """Flow of a left-invariant field for time ``s``: ``p . exp(s V)``."""
    p = as_point(p)
    n = heis_dim(p)
    step = s * frame_eval(which, identity(n))
    return product(p, np.broadcast_to(step, p.shape))
