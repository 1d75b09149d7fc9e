import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import optimize

from genfrac.errors import (
    AbnormalCaseError,
    ConfigurationError,
    HypothesisViolationError,
    ModeError,
    PreconditionError,
    SchemaError,
    ValidationError,
)
from genfrac.kernels import constant_one, cosine, exponential, riemann_liouville
from genfrac.operators import GridFunction, ParamSet
from genfrac.variational import (
    Constraint,
    Discretization,
    FixedBC,
    FreeStartBC,
    Lagrangian,
    VariationalProblem,
    coherence_check,
    el_residual,
    example1_problem,
    max_residual,
    natural_bc_residual,
    problem_from_dict,
    simple_problem,
    solve,
    solve_fundamental,
    solve_isoperimetric,
)
from genfrac.volterra import example1_derivative, example1_extremal

U2 = Lagrangian.from_expressions("u^2", d3="2*u")


def line(a, b, n):
    return GridFunction.from_function(lambda t: a + (b - a) * t, 0.0, 1.0, n)


# ---------------------------------------------------------------------------
# Lagrangian and problem


def test_lagrangian_gate_rejects_wrong_partial():
    with pytest.raises(ConfigurationError):
        Lagrangian.from_expressions("u^2", d3="u")
    with pytest.raises(ConfigurationError):
        Lagrangian(lambda t, y, u, v, w: y * y, lambda t, y, u, v, w: 3 * y)


def test_lagrangian_missing_partial_for_used_slot():
    with pytest.raises(SchemaError):
        Lagrangian.from_expressions("u^2 + y")


def test_lagrangian_minus():
    G = Lagrangian.from_expressions("y", d2="1")
    H = U2.minus(2.0, G)
    assert H.value(0.0, 1.0, 3.0, 0.0, 0.0) == pytest.approx(7.0)
    assert H.d2(0.0, 1.0, 3.0, 0.0, 0.0) == pytest.approx(-2.0)


def test_problem_validation():
    P = ParamSet(0.0, 1.0, 1.0, 0.0)
    with pytest.raises(ValidationError):
        VariationalProblem(0.0, 2.0, P, P, 0.5, 0.5, riemann_liouville(0.5), constant_one(), U2, FixedBC(0, 1))
    with pytest.raises(ValidationError):
        VariationalProblem(0.0, 1.0, P, P, 1.0, 0.5, riemann_liouville(0.5), constant_one(), U2, FixedBC(0, 1))
    with pytest.raises(ValidationError):
        VariationalProblem(0.0, 1.0, P, P, 0.3, 0.5, riemann_liouville(0.5), constant_one(), U2, FixedBC(0, 1))


# ---------------------------------------------------------------------------
# residuals


def test_el_residual_straight_line():
    prob = simple_problem(U2, FixedBC(0.0, 1.0))
    assert max_residual(el_residual(prob, line(0.0, 1.0, 64))) <= 1e-8


def test_el_residual_independent_lagrangian():
    prob = simple_problem(Lagrangian.from_expressions("t^2"), FixedBC(0.0, 1.0))
    R = el_residual(prob, GridFunction.from_function(np.sin, 0.0, 1.0, 32).with_values(
        np.sin(np.linspace(0, 1, 33)) / np.sin(1.0)))
    assert np.all(R.values == 0.0)


def test_el_residual_boundary_mismatch():
    prob = simple_problem(U2, FixedBC(0.0, 1.0))
    with pytest.raises(PreconditionError):
        el_residual(prob, line(0.0, 0.9, 16))


def test_el_residual_example1_exact_extremal():
    n, xi = 512, 1.0
    prob = example1_problem(0.5, xi)
    y = example1_extremal(0.5, xi, n=n)
    yp = y.with_values(example1_derivative(0.5, xi, y.t))
    R = el_residual(prob, y, lam=2 * xi, y_prime=yp)
    assert max_residual(R) <= 5e-3
    # the layer mask is documented in the returned mask
    assert not R.mask[: int(0.05 * n)].any()


def test_natural_bc_examples():
    free = simple_problem(U2, FreeStartBC(2.0))
    flat = GridFunction.from_function(lambda t: 2.0 + 0 * t, 0.0, 1.0, 32)
    assert natural_bc_residual(free, flat) == 0.0

    P1 = ParamSet(0.0, 1.0, 1.0, 0.0)
    Fv = Lagrangian.from_expressions("v^2", d4="2*v")
    prob = VariationalProblem(0.0, 1.0, P1, ParamSet(0, 1, 0, 0), 0.5, 0.5, riemann_liouville(0.5),
                              constant_one(), Fv, FreeStartBC(2.0))
    assert natural_bc_residual(prob, flat) == 0.0

    shifted = simple_problem(Lagrangian.from_expressions("(u - 1)^2", d3="2*(u - 1)"), FreeStartBC(3.0))
    y = GridFunction.from_function(lambda t: 3.0 - (1.0 - t), 0.0, 1.0, 32)
    assert natural_bc_residual(shifted, y) <= 1e-12


def test_natural_bc_requires_free_start():
    with pytest.raises(ModeError):
        natural_bc_residual(simple_problem(U2, FixedBC(0, 1)), line(0, 1, 8))


# ---------------------------------------------------------------------------
# fundamental problem


def test_solve_straight_line():
    res = solve_fundamental(simple_problem(U2, FixedBC(0.0, 1.0)), n=64)
    assert res.converged
    assert np.max(np.abs(res.y.values - res.y.t)) <= 1e-8
    assert res.objective == pytest.approx(1.0, abs=1e-10)
    assert res.el_residual <= 1e-6
    assert res.a_posteriori_residual <= 1e-6


def test_solve_nonnegative_fractional_integrand_attains_zero():
    P1 = ParamSet(0.0, 1.0, 1.0, 0.0)
    F = Lagrangian.from_expressions("(u + v)^2", d3="2*(u + v)", d4="2*(u + v)")
    prob = VariationalProblem(0.0, 1.0, P1, ParamSet(0, 1, 0, 0), 0.5, 0.5, riemann_liouville(0.5),
                              constant_one(), F, FixedBC(0.0, 0.0))
    res = solve_fundamental(prob, n=64)
    assert res.converged
    assert np.max(np.abs(res.y.values)) <= 1e-12
    assert res.objective == 0.0


def _w_problem():
    F = Lagrangian.from_expressions("(w - t)^2", d5="2*(w - t)")
    P2 = ParamSet(0.0, 1.0, 1.0, 0.0)
    return VariationalProblem(0.0, 1.0, ParamSet(0, 1, 0, 0), P2, 0.5, 0.5, constant_one(), constant_one(),
                              F, FixedBC(1.0, 1.0))


def test_solve_w_problem_against_brute_force():
    prob = _w_problem()
    res = solve_fundamental(prob, n=8, tol=1e-10)
    disc = Discretization(prob, 8)

    def objective(x):
        y = np.concatenate([[1.0], x, [1.0]])
        return disc.integral(prob.F, y)

    brute = optimize.minimize(objective, np.zeros(7), method="Powell",
                              options={"xtol": 1e-10, "ftol": 1e-14, "maxiter": 100000})
    assert res.objective <= brute.fun + 1e-10
    assert np.max(np.abs(res.y.values[1:-1] - brute.x)) <= 1e-4


def test_solve_w_problem_approaches_constant():
    errs = []
    for n in (16, 32, 64):
        res = solve_fundamental(_w_problem(), n=n)
        assert res.converged
        assert res.objective <= 1.0 / n**2
        errs.append(np.max(np.abs(res.y.values - 1.0)))
    assert errs[-1] <= 1e-6


def test_solve_free_start():
    prob = simple_problem(Lagrangian.from_expressions("(u - 1)^2", d3="2*(u - 1)"), FreeStartBC(3.0))
    res = solve_fundamental(prob, n=32)
    assert res.converged
    assert np.max(np.abs(res.y.values - (2.0 + res.y.t))) <= 1e-8
    assert natural_bc_residual(prob, res.y) <= 1e-6


def test_solve_fundamental_refuses_constraint():
    with pytest.raises(ModeError):
        solve_fundamental(example1_problem(), n=16)


def test_max_iter_gives_unconverged_result():
    res = solve_fundamental(_smooth_problem(), n=64, max_iter=2)
    assert not res.converged
    assert res.iterations == 2


def _smooth_problem():
    P1 = ParamSet(0.0, 1.0, 1.0, 0.5)
    P2 = ParamSet(0.0, 1.0, 0.5, 0.5)
    F = Lagrangian.from_expressions(
        "u^2 + v^2 + y^2 + w^2 - 2*t*y", d2="2*y - 2*t", d3="2*u", d4="2*v", d5="2*w"
    )
    return VariationalProblem(0.0, 1.0, P1, P2, 0.5, 0.5, exponential(0.5), cosine(0.5), F, FixedBC(0.0, 1.0))


def test_descent_is_monotone():
    res = solve_fundamental(_smooth_problem(), n=64)
    hist = np.array(res.objective_history)
    assert res.converged
    assert np.all(np.diff(hist) <= 0.0)


def test_el_residual_decreases_with_n():
    prob = _smooth_problem()
    res = [solve_fundamental(prob, n=n) for n in (64, 128, 256)]
    assert all(r.converged for r in res)
    post = [r.a_posteriori_residual for r in res]
    assert post[0] > post[1] > post[2]


@settings(max_examples=20)
@given(st.integers(0, 10_000))
def test_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    c = rng.uniform(0.2, 1.5, 8)
    F = Lagrangian(
        lambda t, y, u, v, w: c[0] * u**2 + c[1] * v**2 + c[2] * np.sin(y) + c[3] * w**2 + c[4] * t * u * w
        + c[5] * y * v + c[6] * np.cos(t) * y,
        d2=lambda t, y, u, v, w: c[2] * np.cos(y) + c[5] * v + c[6] * np.cos(t),
        d3=lambda t, y, u, v, w: 2 * c[0] * u + c[4] * t * w,
        d4=lambda t, y, u, v, w: 2 * c[1] * v + c[5] * y,
        d5=lambda t, y, u, v, w: 2 * c[3] * w + c[4] * t * u,
    )
    kB = [exponential(0.5), cosine(0.5), constant_one(0.5)][seed % 3]
    kK = [cosine(0.3), exponential(0.7), constant_one(0.4)][seed % 3]
    P1 = ParamSet(0.0, 1.0, *rng.uniform(-1, 1, 2))
    P2 = ParamSet(0.0, 1.0, *rng.uniform(-1, 1, 2))
    bc = FixedBC(0.0, 1.0) if seed % 2 else FreeStartBC(0.5)
    prob = VariationalProblem(0.0, 1.0, P1, P2, 0.5, kK.order, kB, kK, F, bc)
    disc = Discretization(prob, 64)
    y = rng.standard_normal(65)
    _, g = disc.value_and_grad(F, y)
    eps = 1e-6
    fd = np.empty(65)
    for i in range(65):
        hi, lo = y.copy(), y.copy()
        hi[i] += eps
        lo[i] -= eps
        fd[i] = (disc.integral(F, hi) - disc.integral(F, lo)) / (2 * eps)
    assert np.linalg.norm(g - fd) <= 1e-6 * np.linalg.norm(fd)


# ---------------------------------------------------------------------------
# isoperimetric


@pytest.mark.parametrize("xi", [0.5, 1.0, 2.0])
def test_example1_reproduction(xi):
    res = solve_isoperimetric(example1_problem(0.5, xi), n=256)
    exact = example1_extremal(0.5, xi, n=256)
    assert res.converged
    assert np.max(np.abs(res.y.values - exact.values)) <= 5e-3
    assert abs(res.lam - 2 * xi) <= 0.05 * 2 * xi
    assert res.el_residual <= 1e-7 and res.constraint_residual <= 1e-7


def test_isoperimetric_classical_zero():
    G = Lagrangian.from_expressions("y", d2="1")
    res = solve_isoperimetric(simple_problem(U2, FixedBC(0.0, 0.0), constraint=Constraint(G, 0.0)), n=32)
    assert res.converged
    assert res.lam == 0.0
    assert np.max(np.abs(res.y.values)) <= 1e-12


def test_isoperimetric_implied_constraint():
    G = Lagrangian.from_expressions("u", d3="1")
    res = solve_isoperimetric(simple_problem(U2, FixedBC(0.0, 1.0), constraint=Constraint(G, 1.0)), n=32)
    assert res.converged
    assert np.max(np.abs(res.y.values - res.y.t)) <= 1e-8
    assert res.el_residual <= 1e-6 and res.a_posteriori_residual <= 1e-6
    assert res.constraint_residual <= 1e-8


def test_isoperimetric_with_area_constraint():
    # u^2 with int y = 1/3 and y(0) = y(1) = 0: y'' = -lam / 2 gives y = 2 t (1 - t), lam = 8
    G = Lagrangian.from_expressions("y", d2="1")
    res = solve_isoperimetric(simple_problem(U2, FixedBC(0.0, 0.0), constraint=Constraint(G, 1 / 3)), n=128)
    assert res.converged
    assert res.lam == pytest.approx(8.0, rel=1e-3)
    assert np.max(np.abs(res.y.values - 2 * res.y.t * (1 - res.y.t))) <= 1e-3


def test_isoperimetric_abnormal_case():
    G = Lagrangian.from_expressions("u", d3="1")
    with pytest.raises(AbnormalCaseError):
        solve_isoperimetric(simple_problem(U2, FixedBC(0.0, 1.0), constraint=Constraint(G, 2.0)), n=16)


def test_isoperimetric_requires_constraint():
    with pytest.raises(ModeError):
        solve_isoperimetric(simple_problem(U2, FixedBC(0.0, 1.0)), n=16)


def test_converged_implies_residuals_within_tol():
    tol = 1e-7
    for res in (solve(_smooth_problem(), 64, tol), solve(example1_problem(0.5, 1.0), 64, tol)):
        assert res.converged
        assert res.el_residual <= tol
        assert res.constraint_residual is None or res.constraint_residual <= tol


# ---------------------------------------------------------------------------
# coherence


@pytest.mark.parametrize(
    "kernel, F, y",
    [
        (exponential(0.5), Lagrangian.from_expressions("w^2", d5="2*w"), lambda t: t),
        (riemann_liouville(0.6), Lagrangian.from_expressions("y*w", d2="w", d5="y"), None),
        (cosine(0.5), Lagrangian.from_expressions("sin(y)*w", d2="cos(y)*w", d5="sin(y)"), np.exp),
    ],
    ids=["exponential", "rl", "cosine"],
)
def test_coherence(kernel, F, y):
    if y is None:
        g = GridFunction(0.0, 1.0, 64, np.random.default_rng(3).standard_normal(65))
    else:
        g = GridFunction.from_function(y, 0.0, 1.0, 64)
    rep = coherence_check(kernel, 1.0, F, g)
    assert rep.residual <= 1e-12 and rep.holds


def test_coherence_p_zero_reduces_to_d2():
    F = Lagrangian.from_expressions("y*w + y^2", d2="w + 2*y", d5="y")
    y = GridFunction.from_function(np.sin, 0.0, 1.0, 32)
    rep = coherence_check(exponential(0.5), 0.0, F, y)
    assert rep.residual == 0.0
    assert np.allclose(rep.lhs.values, 2 * y.values)


def test_coherence_needs_antisymmetric_pset():
    with pytest.raises(HypothesisViolationError):
        coherence_check(exponential(0.5), 1.0, U2, line(0, 1, 8), q=0.5)


# ---------------------------------------------------------------------------
# JSON input


def _doc():
    return {
        "domain": [0, 1],
        "alpha": 0.5,
        "P1": {"p": 1, "q": 0},
        "kernel_B": {"name": "riemann_liouville", "alpha": 0.5},
        "F": {"value": "(u + v)^2", "d3": "2*(u + v)", "d4": "2*(u + v)"},
        "bc": {"type": "fixed", "y_a": 0, "y_b": 0.5559627432513199},
        "constraint": {"G": {"value": "u + v", "d3": "1", "d4": "1"}, "xi": 1},
    }


def test_problem_from_dict_solves_example1():
    res = solve(problem_from_dict(_doc()), n=128)
    assert res.converged
    assert res.lam == pytest.approx(2.0, rel=0.05)


@pytest.mark.parametrize(
    "edit",
    [
        lambda d: d.update(extra=1),
        lambda d: d.pop("F"),
        lambda d: d.update(bc={"type": "free_end", "y_a": 0}),
        lambda d: d.update(bc={"type": "fixed", "y_a": 0}),
        lambda d: d.update(F={"value": "u^2"}),
        lambda d: d.update(F={"value": "u^2", "d3": "2*u", "d9": "1"}),
        lambda d: d.update(P1={"p": 1, "r": 0}),
        lambda d: d.update(constraint={"G": "u"}),
        lambda d: d.update(domain="x"),
    ],
)
def test_problem_from_dict_schema_errors(edit):
    doc = _doc()
    edit(doc)
    with pytest.raises(SchemaError):
        problem_from_dict(doc)
