"""A small arithmetic expression language with forward-mode derivatives.

Grammar::

    expr   := term (('+' | '-') term)*
    term   := factor (('*' | '/') factor)*
    factor := ['-'] base ['^' int]
    base   := number | ident | fn '(' expr ')' | '(' expr ')'

``fn`` is one of sin, cos, exp, sqrt, abs, sign.  Exponents are integers so
that differentiation stays total.  Evaluation is vectorised: variables bind
to numpy arrays of a common shape.
"""
from dataclasses import dataclass
import re

import numpy as np

from .errors import ExprSyntaxError, NonsmoothPointError, UnknownIdentifierError

FUNCTIONS = ("sin", "cos", "exp", "sqrt", "abs", "sign")
KINKED = ("sqrt", "abs", "sign")


# --------------------------------------------------------------------- AST

@dataclass(frozen=True)
class Const:
    value: float

    def ev(self, env):
        return self.value

    def __str__(self):
        text = repr(float(self.value))
        return f"({text})" if self.value < 0 else text


@dataclass(frozen=True)
class Var:
    name: str
    index: int

    def ev(self, env):
        return env[self.index]

    def __str__(self):
        return self.name


@dataclass(frozen=True)
class Unary:
    op: str
    arg: object

    def ev(self, env):
        x = self.arg.ev(env)
        if self.op == "neg":
            return -x
        return apply_function(self.op, x)

    def __str__(self):
        if self.op == "neg":
            return f"(-{self.arg})"
        return f"{self.op}({self.arg})"


@dataclass(frozen=True)
class Binary:
    op: str
    left: object
    right: object

    def ev(self, env):
        a, b = self.left.ev(env), self.right.ev(env)
        if self.op == "+":
            return a + b
        if self.op == "-":
            return a - b
        if self.op == "*":
            return a * b
        return a / b

    def __str__(self):
        return f"({self.left} {self.op} {self.right})"


@dataclass(frozen=True)
class Pow:
    base: object
    exponent: int

    def ev(self, env):
        x = self.base.ev(env)
        if isinstance(x, Dual):
            return x.ipow(self.exponent)
        if self.exponent < 0:
            return 1.0 / np.power(x, -self.exponent)
        return np.power(x, self.exponent)

    def __str__(self):
        return f"({self.base})^{self.exponent}"


def walk(node):
    yield node
    if isinstance(node, Unary):
        yield from walk(node.arg)
    elif isinstance(node, Binary):
        yield from walk(node.left)
        yield from walk(node.right)
    elif isinstance(node, Pow):
        yield from walk(node.base)


def free_variables(node):
    return sorted({n.name for n in walk(node) if isinstance(n, Var)})


def substitute(node, mapping, var_names):
    """Replace variables by sub-expressions; ``mapping`` maps name -> AST.

    ``var_names`` is the variable list of the resulting expression, used to
    re-index any variable left untouched.
    """
    if isinstance(node, Var):
        if node.name in mapping:
            return mapping[node.name]
        return Var(node.name, list(var_names).index(node.name))
    if isinstance(node, Const):
        return node
    if isinstance(node, Unary):
        return Unary(node.op, substitute(node.arg, mapping, var_names))
    if isinstance(node, Binary):
        return Binary(node.op, substitute(node.left, mapping, var_names),
                      substitute(node.right, mapping, var_names))
    return Pow(substitute(node.base, mapping, var_names), node.exponent)


# ------------------------------------------------------------------ parser

_TOKEN = re.compile(r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^(),])
""", re.VERBOSE)


def _tokenize(text):
    pos, out = 0, []
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ExprSyntaxError(f"unexpected character {text[pos]!r}", pos)
        kind = m.lastgroup
        if kind != "ws":
            out.append((kind, m.group(), pos))
        pos = m.end()
    out.append(("end", "", len(text)))
    return out


class _Parser:
    def __init__(self, text, variables):
        self.tokens = _tokenize(text)
        self.i = 0
        self.variables = list(variables)

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value):
        kind, text, pos = self.take()
        if text != value:
            found = "end of input" if kind == "end" else repr(text)
            raise ExprSyntaxError(f"expected {value!r}, found {found}", pos)

    def parse(self):
        node = self.expr()
        kind, text, pos = self.peek()
        if kind != "end":
            raise ExprSyntaxError(f"unexpected {text!r}", pos)
        return node

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-"):
            op = self.take()[1]
            node = Binary(op, node, self.term())
        return node

    def term(self):
        node = self.factor()
        while self.peek()[1] in ("*", "/"):
            op = self.take()[1]
            node = Binary(op, node, self.factor())
        return node

    def factor(self):
        negate = False
        if self.peek()[1] == "-":
            self.take()
            negate = True
        node = self.base()
        if self.peek()[1] == "^":
            self.take()
            sign = 1
            if self.peek()[1] == "-":
                self.take()
                sign = -1
            kind, text, pos = self.take()
            if kind != "num" or not text.isdigit():
                raise ExprSyntaxError("exponent must be an integer literal", pos)
            node = Pow(node, sign * int(text))
        return Unary("neg", node) if negate else node

    def base(self):
        kind, text, pos = self.take()
        if kind == "num":
            return Const(float(text))
        if kind == "ident":
            if text in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Unary(text, arg)
            if text not in self.variables:
                raise UnknownIdentifierError(text, pos)
            return Var(text, self.variables.index(text))
        if text == "(":
            node = self.expr()
            self.expect(")")
            return node
        found = "end of input" if kind == "end" else repr(text)
        raise ExprSyntaxError(f"unexpected {found}", pos)


def parse_expr(text, variables):
    """Parse ``text`` into an AST whose free variables are drawn from ``variables``."""
    if not text or not text.strip():
        raise ExprSyntaxError("empty expression", 0)
    return _Parser(text, variables).parse()


def evaluate(node, values):
    """Evaluate an AST on a sequence of per-variable values (arrays or Duals)."""
    return node.ev(values)


# ----------------------------------------------------------- dual numbers

class Dual:
    """Forward-mode dual number over numpy arrays: ``real + dual * e``, e^2 = 0."""

    __array_priority__ = 1000
    __array_ufunc__ = None

    def __init__(self, real, dual):
        self.real = np.asarray(real, dtype=float)
        self.dual = np.asarray(dual, dtype=float)

    def __repr__(self):
        return f"Dual({self.real!r}, {self.dual!r})"

    @staticmethod
    def lift(x):
        return x if isinstance(x, Dual) else Dual(x, 0.0)

    def __neg__(self):
        return Dual(-self.real, -self.dual)

    def __add__(self, other):
        o = Dual.lift(other)
        return Dual(self.real + o.real, self.dual + o.dual)

    __radd__ = __add__

    def __sub__(self, other):
        o = Dual.lift(other)
        return Dual(self.real - o.real, self.dual - o.dual)

    def __rsub__(self, other):
        return Dual.lift(other) - self

    def __mul__(self, other):
        o = Dual.lift(other)
        return Dual(self.real * o.real, self.dual * o.real + self.real * o.dual)

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = Dual.lift(other)
        return Dual(self.real / o.real,
                    (self.dual * o.real - self.real * o.dual) / (o.real * o.real))

    def __rtruediv__(self, other):
        return Dual.lift(other) / self

    def ipow(self, k):
        if k == 0:
            return Dual(np.ones_like(self.real), np.zeros_like(self.dual))
        if k < 0:
            return 1.0 / self.ipow(-k)
        return Dual(self.real ** k, k * self.real ** (k - 1) * self.dual)


def _check_kink(name, x, at):
    bad = at & (x.dual != 0)
    if np.any(bad):
        raise NonsmoothPointError(f"{name} is not differentiable at 0")


def apply_function(name, x):
    if not isinstance(x, Dual):
        if name == "sin":
            return np.sin(x)
        if name == "cos":
            return np.cos(x)
        if name == "exp":
            return np.exp(x)
        if name == "sqrt":
            return np.sqrt(x)
        if name == "abs":
            return np.abs(x)
        return np.sign(x)
    r, d = x.real, x.dual
    if name == "sin":
        return Dual(np.sin(r), np.cos(r) * d)
    if name == "cos":
        return Dual(np.cos(r), -np.sin(r) * d)
    if name == "exp":
        e = np.exp(r)
        return Dual(e, e * d)
    if name == "sqrt":
        _check_kink("sqrt", x, r == 0)
        s = np.sqrt(r)
        with np.errstate(divide="ignore", invalid="ignore"):
            ds = np.where(d == 0, 0.0, d / (2 * s))
        return Dual(s, ds)
    if name == "abs":
        _check_kink("abs", x, r == 0)
        return Dual(np.abs(r), np.sign(r) * d)
    _check_kink("sign", x, r == 0)
    return Dual(np.sign(r), np.zeros_like(d))


# ------------------------------------------------------------ scalar fields

def _as_points(points, arity):
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 0 or pts.shape[-1] != arity:
        raise ValueError(f"expected points with last axis {arity}, got shape {pts.shape}")
    return pts


def _direction(direction, arity):
    if np.isscalar(direction) and float(direction).is_integer():
        e = np.zeros(arity)
        e[int(direction)] = 1.0
        return e
    return np.asarray(direction, dtype=float)


class ScalarField:
    """A real-valued map on R^arity, optionally restricted to a box."""

    arity = 0
    box = None
    smooth = True

    def __call__(self, points):
        pts = _as_points(points, self.arity)
        self._check_box(pts)
        return self._eval(pts)

    def _eval(self, pts):
        raise NotImplementedError

    def _check_box(self, pts):
        if self.box is None:
            return
        lo, hi = self.box
        tol = 1e-12 * (1.0 + np.abs(hi - lo))
        if np.any(pts < lo - tol) or np.any(pts > hi + tol):
            from .errors import OutOfDomainError
            raise OutOfDomainError("evaluation outside the declared box of a grid-backed field")

    def derivative(self, points, direction, h=None):
        """Directional derivative; ``direction`` is an axis index or a vector
        (possibly varying per point, shape ``(..., arity)``)."""
        pts = _as_points(points, self.arity)
        return self._derivative(pts, _direction(direction, self.arity), h)

    def _derivative(self, pts, direction, h):
        return central_difference(self, pts, direction, 1e-4 if h is None else h)

    def grad(self, points, h=None):
        pts = _as_points(points, self.arity)
        return np.stack([self._derivative(pts, _direction(i, self.arity), h)
                         for i in range(self.arity)], axis=-1)


def central_difference(field, pts, direction, h):
    """Central difference with one Richardson step: (4 D(h/2) - D(h)) / 3."""
    def quotient(step):
        return (field(pts + step * direction) - field(pts - step * direction)) / (2 * step)

    return (4.0 * quotient(h / 2) - quotient(h)) / 3.0


class ExprField(ScalarField):
    """Expression-backed field; derivatives by dual-number evaluation."""

    def __init__(self, node, variables, smooth=None):
        if isinstance(node, str):
            node = parse_expr(node, variables)
        self.node = node
        self.variables = tuple(variables)
        self.arity = len(self.variables)
        if smooth is None:
            smooth = not any(isinstance(n, Unary) and n.op in KINKED for n in walk(node))
        self.smooth = smooth

    def __repr__(self):
        return f"ExprField({str(self.node)!r}, {self.variables})"

    def _eval(self, pts):
        env = [pts[..., i] for i in range(self.arity)]
        return np.broadcast_to(self.node.ev(env), pts.shape[:-1]).astype(float)

    def _derivative(self, pts, direction, h):
        direction = np.broadcast_to(direction, pts.shape)
        env = [Dual(pts[..., i], direction[..., i]) for i in range(self.arity)]
        out = Dual.lift(self.node.ev(env))
        return np.broadcast_to(out.dual, pts.shape[:-1]).astype(float)

    def __str__(self):
        return str(self.node)


class FunctionField(ScalarField):
    """Wraps a vectorised Python callable ``fn(points) -> values``."""

    def __init__(self, fn, arity, box=None, smooth=True, step=1e-4):
        self.fn = fn
        self.arity = arity
        self.box = None if box is None else (np.asarray(box[0], float), np.asarray(box[1], float))
        self.smooth = smooth
        self.step = step

    def _eval(self, pts):
        return np.asarray(self.fn(pts), dtype=float)

    def _derivative(self, pts, direction, h):
        return central_difference(self, pts, direction, self.step if h is None else h)


class ConstantField(ScalarField):
    def __init__(self, value, arity):
        self.value = float(value)
        self.arity = arity

    def _eval(self, pts):
        return np.full(pts.shape[:-1], self.value)

    def _derivative(self, pts, direction, h):
        return np.zeros(pts.shape[:-1])


class GridField(ScalarField):
    """Samples on a tensor grid, evaluated by multilinear interpolation."""

    smooth = False

    def __init__(self, axes, values, step=None):
        self.axes = [np.asarray(a, dtype=float) for a in axes]
        self.values = np.asarray(values, dtype=float)
        if self.values.shape != tuple(len(a) for a in self.axes):
            raise ValueError("grid values do not match the axes")
        if any(len(a) < 2 for a in self.axes):
            raise ValueError("grid-backed fields need at least 2 nodes per axis")
        if any(np.any(np.diff(a) <= 0) for a in self.axes):
            raise ValueError("grid axes must be strictly increasing")
        self.arity = len(self.axes)
        self.box = (np.array([a[0] for a in self.axes]), np.array([a[-1] for a in self.axes]))
        spacing = min(float(np.min(np.diff(a))) for a in self.axes)
        self.step = 0.5 * spacing if step is None else step

    @classmethod
    def sample(cls, fn, lo, hi, nodes, **kw):
        """Sample a vectorised callable (or ScalarField) on a uniform grid."""
        lo, hi = np.asarray(lo, float), np.asarray(hi, float)
        counts = np.broadcast_to(np.asarray(nodes, int), lo.shape)
        axes = [np.linspace(a, b, int(c)) for a, b, c in zip(lo, hi, counts)]
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        return cls(axes, fn(mesh), **kw)

    def _eval(self, pts):
        flat = pts.reshape(-1, self.arity)
        lower, frac = [], []
        for d, a in enumerate(self.axes):
            x = np.clip(flat[:, d], a[0], a[-1])
            i = np.clip(np.searchsorted(a, x, side="right") - 1, 0, len(a) - 2)
            lower.append(i)
            frac.append((x - a[i]) / (a[i + 1] - a[i]))
        out = np.zeros(len(flat))
        for corner in range(2 ** self.arity):
            idx, weight = [], np.ones(len(flat))
            for d in range(self.arity):
                bit = (corner >> d) & 1
                idx.append(lower[d] + bit)
                weight = weight * (frac[d] if bit else 1.0 - frac[d])
            out += weight * self.values[tuple(idx)]
        return out.reshape(pts.shape[:-1])

    def _derivative(self, pts, direction, h):
        return central_difference(self, pts, direction, self.step if h is None else h)


def eval_field(field, point):
    return field(point)


def partial(field, axis, point, h=1e-4):
    """d field / d x_axis at ``point`` (dual numbers for expressions, else FD)."""
    return field.derivative(point, axis, h)


def pretty(node):
    return str(node)
