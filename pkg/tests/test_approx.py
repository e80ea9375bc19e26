import numpy as np
import pytest

from hcalc import approx, intrinsic, split
from hcalc.errors import HorizontalDegeneracy, MaxIterationsError
from hcalc.expr import ExprField, GridField

S11, S21, S22 = split.Splitting(1, 1), split.Splitting(2, 1), split.Splitting(2, 2)


def test_stencil_mass_and_symmetry():
    for d in (1, 2, 3):
        off, w = approx.stencil(d)
        assert abs(w.sum() - 1) <= 1e-10
        np.testing.assert_allclose(off.T @ w, 0, atol=1e-15)


def test_mollify_constant_and_linear():
    c = GridField.sample(lambda p: np.full(p.shape[:-1], 2.5), [0, 0], [1, 1], 9)
    mc = approx.mollify(c, 0.1)
    pts = np.random.default_rng(0).uniform(0.1, 0.9, (50, 2))
    np.testing.assert_allclose(mc(pts), 2.5, atol=1e-12)
    lin = ExprField("1 + 2*x1 - 3*y1 + 0.5*t", ["x1", "y1", "t"])
    ml = approx.mollify(lin, 0.2)
    p = np.random.default_rng(1).uniform(-1, 1, (50, 3))
    np.testing.assert_allclose(ml(p), lin(p), atol=1e-8)
    with pytest.raises(ValueError):
        approx.mollify(c, 0.6)


def test_mollify_converges():
    f = GridField.sample(lambda p: np.sin(3 * p[..., 0]) * np.cos(2 * p[..., 1]), [0, 0], [1, 1], 65)
    pts = np.random.default_rng(2).uniform(0.25, 0.75, (200, 2))
    gaps = [np.max(np.abs(approx.mollify(f, e)(pts) - f(pts))) for e in (0.2, 0.1, 0.05)]
    assert gaps[0] > gaps[1] > gaps[2]


def test_implicit_solve_examples():
    f = approx.LevelSetFunction.from_exprs(S11, ["x1 - y1"])
    m = np.random.default_rng(3).uniform(-1, 1, (20, 2))
    np.testing.assert_allclose(approx.implicit_solve(f, m), m[:, :1], atol=1e-12)
    g = approx.LevelSetFunction.from_exprs(S11, ["x1"])
    np.testing.assert_array_equal(approx.implicit_solve(g, m), 0)
    h = approx.LevelSetFunction.from_exprs(S22, ["x1 - 0.3", "x2 + 0.7"])
    np.testing.assert_allclose(approx.implicit_solve(h, np.zeros((4, 3))), [[0.3, -0.7]] * 4, atol=1e-12)


def test_implicit_solve_failures():
    flat = approx.LevelSetFunction.from_exprs(S11, ["y1 + 1"])
    with pytest.raises(HorizontalDegeneracy):
        approx.implicit_solve(flat, [0.0, 0.0])
    wild = approx.LevelSetFunction.from_exprs(S11, ["exp(x1) + 1"])
    with pytest.raises((MaxIterationsError, HorizontalDegeneracy)):
        approx.implicit_solve(wild, [0.0, 0.0], max_iter=5)


def test_lift_graph_zero_set():
    phi = split.GraphFunction.from_exprs(S21, ["0.2*sin(tau) + 0.3*eta1*v2"], -np.ones(4), np.ones(4))
    f = approx.lift_graph(phi)
    m = np.random.default_rng(4).uniform(-1, 1, (30, 4))
    np.testing.assert_allclose(f(split.graph_map(phi, m)), 0, atol=1e-14)
    assert str(approx.lift_graph(split.GraphFunction.from_exprs(S11, ["eta1"], [0, 0], [1, 1])).components[0]) == "(x1 - y1)"


def test_levelset_and_graph_jacobians_agree():
    f = approx.LevelSetFunction.from_exprs(S21, ["x1 + 0.2*sin(t) - 0.3*y1*x2 + 0.1*x1^2"])
    phi = approx.implicit_graph(f, -np.ones(4), np.ones(4))
    m = np.random.default_rng(5).uniform(-0.5, 0.5, (8, 4))
    Jg = intrinsic.intrinsic_jacobian(phi, m)
    Jl = intrinsic.jacobian_from_levelset(f, approx.graph_point(m, phi(m), S21))
    np.testing.assert_allclose(Jg, Jl, atol=1e-5)


def test_approx_family_linear_and_constant():
    eta = split.GraphFunction.from_exprs(S11, ["eta1"], [-0.5, -0.5], [0.5, 0.5])
    fam = approx.approx_family(eta, [0.2, 0.1], nodes=9)
    assert max(fam.sup_phi_gap) <= 1e-8 and max(fam.sup_jac_gap) <= 1e-8
    const = split.GraphFunction.constant(S11, [0.4], [-0.5, -0.5], [0.5, 0.5])
    fam = approx.approx_family(const, [0.2, 0.1], nodes=9)
    assert max(fam.sup_phi_gap) == pytest.approx(0, abs=1e-12)
    d = fam.to_dict()
    assert set(d) >= {"epsilons", "sup_phi_gap", "sup_jac_gap", "grid"}
    with pytest.raises(ValueError):
        approx.approx_family(const, [0.1, 0.2])


def test_approx_family_graph_is_usable():
    f = approx.LevelSetFunction.from_exprs(S11, ["x1 - y1 + 0.1*sin(t)"])
    fam = approx.approx_family(f, [0.2, 0.1], lo=[-0.3, -0.3], hi=[0.3, 0.3], nodes=5)
    phi_eps = fam.graph(1)
    np.testing.assert_allclose(phi_eps(fam.points), fam.phi_eps[1], atol=1e-12)
