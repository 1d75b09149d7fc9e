import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from genfrac.errors import HypothesisViolationError, ValidationError
from genfrac.identities import (
    IdentityReport,
    calibrated_tolerance,
    calibration_n,
    default_cases,
    ibp_a_residual,
    ibp_b_residual,
    ibp_k_residual,
    identity_suite,
    relation_residual,
    trapezoid,
)
from genfrac.kernels import constant_one, cosine, counterexample, exponential, product_kernel, riemann_liouville
from genfrac.operators import GridFunction, OperatorConfig, ParamSet

UNIT = ParamSet(0.0, 1.0, 1.0, 0.0)
ROUNDING = 1e-13


def grid(f, n):
    return GridFunction.from_function(f, 0.0, 1.0, n)


def test_report_invariants():
    rep = IdentityReport("x", 1.0, 1.0, 0.5, 8, 0.5)
    assert rep.holds
    assert not IdentityReport("x", 1.0, 1.0, 0.6, 8, 0.5).holds
    with pytest.raises(ValidationError):
        IdentityReport("x", 1.0, 1.0, -1.0, 8, 0.5)


def test_trapezoid_exact_for_linear():
    assert trapezoid(np.linspace(0, 1, 11), 0.1) == pytest.approx(0.5, abs=1e-15)


# ---------------------------------------------------------------------------
# relation


def test_relation_rl_linear():
    y = grid(lambda t: t, 512)
    rep = relation_residual(UNIT, riemann_liouville(0.5), y, y_prime=grid(np.ones_like, 512))
    assert rep.residual <= 2e-3
    assert rep.holds


def test_relation_rl_constant_gives_correction_term():
    alpha = 0.5
    y = grid(np.ones_like, 512)
    rep = relation_residual(UNIT, riemann_liouville(1 - alpha), y, t_min=0.1, relative=True, tol=1e-2)
    assert rep.residual <= 1e-2
    A = rep.lhs
    sel = (y.t >= 0.1) & A.mask
    exact = y.t[sel] ** -alpha / math.gamma(1 - alpha)
    assert np.max(np.abs(A.values[sel] - exact) / exact) <= 1e-2


@pytest.mark.parametrize("kernel", [riemann_liouville(0.5), exponential(0.5), cosine(0.5)], ids=lambda k: k.name)
def test_relation_of_zero(kernel):
    rep = relation_residual(ParamSet(0, 1, 1, 0.5), kernel, grid(np.zeros_like, 64))
    assert rep.residual == 0.0


def test_relation_with_both_sides():
    P = ParamSet(0.0, 1.0, 1.0, 0.5)
    y = grid(lambda t: 1 + t * t, 256)
    rep = relation_residual(P, exponential(0.5), y, y_prime=grid(lambda t: 2 * t, 256))
    assert rep.residual < 1e-5


def test_relation_requires_separable_kernel():
    with pytest.raises(HypothesisViolationError):
        relation_residual(UNIT, product_kernel(), grid(np.sin, 32))


# ---------------------------------------------------------------------------
# integration by parts, K


def test_ibp_k_rl_ones():
    f = grid(np.ones_like, 512)
    rep = ibp_k_residual(UNIT, riemann_liouville(0.6), f, f)
    assert rep.residual <= 1e-3
    # int_0^1 I^0.6 1 = 1 / Gamma(2.6), computed with mpmath
    assert rep.lhs == pytest.approx(0.699484346293826, abs=2e-5)


def test_ibp_k_of_zero():
    z = grid(np.zeros_like, 64)
    rep = ibp_k_residual(ParamSet(0, 1, 1, 0.3), exponential(0.5), z, grid(np.cos, 64))
    assert rep.lhs == 0.0 and rep.rhs == 0.0


def test_ibp_k_counterexample():
    k = counterexample()
    P = ParamSet(0.0, 1.0, 1.0, -1.0)
    f = grid(np.ones_like, 1024)
    rep = ibp_k_residual(P, k, f, f, OperatorConfig.for_kernel(k))
    assert rep.lhs == pytest.approx(math.pi / 4, abs=1e-2)
    assert rep.rhs == pytest.approx(-math.pi / 4, abs=1e-2)
    assert abs(rep.residual - math.pi / 2) <= 2e-2


@given(st.floats(-2, 2), st.floats(-2, 2), st.integers(0, 1000))
@pytest.mark.parametrize("kernel", [riemann_liouville(0.6), exponential(0.5), product_kernel()], ids=lambda k: k.name)
def test_ibp_k_duality_swap(kernel, p, q, seed):
    rng = np.random.default_rng(seed)
    f = GridFunction(0.0, 1.0, 24, rng.standard_normal(25))
    g = GridFunction(0.0, 1.0, 24, rng.standard_normal(25))
    P = ParamSet(0.0, 1.0, p, q)
    one = ibp_k_residual(P, kernel, f, g)
    two = ibp_k_residual(P.dual(), kernel, g, f)
    assert one.lhs == two.rhs and one.rhs == two.lhs
    assert one.residual == two.residual


@pytest.mark.parametrize(
    "kernel, f, g",
    [
        (exponential(0.5), np.sin, np.cos),
        (cosine(0.5), lambda t: np.exp(-t), lambda t: 1 + t * t),
        (exponential(0.3), lambda t: np.abs(t - 0.4), np.exp),
        (constant_one(), np.cos, lambda t: t),
    ],
)
def test_ibp_k_l1_difference_kernels(kernel, f, g):
    P = ParamSet(0.0, 1.0, 1.0, 0.5)
    rep = ibp_k_residual(P, kernel, grid(f, 1024), grid(g, 1024))
    assert rep.residual <= 1e-4


# ---------------------------------------------------------------------------
# integration by parts, A and B


def test_ibp_a_exponential():
    n = 512
    f, g = grid(lambda t: t, n), grid(lambda t: 1 - t, n)
    rep = ibp_a_residual(UNIT, exponential(0.5), f, g, g_prime=grid(lambda t: -np.ones_like(t), n))
    assert rep.residual <= 1e-3
    # int_0^1 (1 - t) A t dt via mpmath quadrature of the closed form
    assert rep.lhs == pytest.approx(0.189770165601025, abs=1e-6)


def test_ibp_b_exponential():
    n = 512
    f, g = grid(lambda t: t, n), grid(lambda t: 1 - t, n)
    rep = ibp_b_residual(UNIT, exponential(0.5), f, g, f_prime=grid(np.ones_like, n))
    assert rep.residual <= 1e-3


def test_ibp_a_rl_monomials():
    n = 1024
    f, g = grid(lambda t: t * t, n), grid(lambda t: t * (1 - t), n)
    rep = ibp_a_residual(UNIT, riemann_liouville(0.5), f, g, g_prime=grid(lambda t: 1 - 2 * t, n))
    assert rep.residual <= 5e-3
    # int_0^1 t (1 - t) * 2 t^1.5 / Gamma(2.5) dt with mpmath
    assert rep.lhs == pytest.approx(0.0955241622938, abs=1e-4)


def test_ibp_b_rl_monomials():
    n = 1024
    f, g = grid(lambda t: t * t, n), grid(lambda t: t * (1 - t), n)
    rep = ibp_b_residual(UNIT, riemann_liouville(0.5), f, g, f_prime=grid(lambda t: 2 * t, n))
    assert rep.residual <= 5e-3


@pytest.mark.parametrize("fn", [ibp_a_residual, ibp_b_residual])
def test_ibp_a_b_of_zero(fn):
    z = grid(np.zeros_like, 64)
    rep = fn(UNIT, exponential(0.5), z, grid(np.cos, 64))
    assert rep.residual == 0.0


def test_mismatched_grids_rejected():
    with pytest.raises(ValidationError):
        ibp_k_residual(UNIT, exponential(0.5), grid(np.sin, 16), grid(np.sin, 32))


# ---------------------------------------------------------------------------
# suite


def test_calibration_helpers():
    assert calibration_n(512) == 128
    assert calibration_n(64) == 16
    assert calibrated_tolerance(1e-4, 512, 2.0) == pytest.approx(2e-4 / 16)
    assert calibrated_tolerance(0.0, 128, 2.0) == pytest.approx(2e-10)


def test_suite_at_512_matches_expectations():
    rows = identity_suite(512)
    assert len(rows) == len(default_cases())
    for case, rep in rows:
        assert rep.holds == case.expected, case.name


def test_suite_at_small_n_still_separates():
    for case, rep in identity_suite(64):
        assert rep.holds == case.expected, case.name


@pytest.mark.parametrize("case", [c for c in default_cases() if c.expected], ids=lambda c: c.name)
def test_residual_decays_with_n(case):
    r128, r1024 = case.run(128).residual, case.run(1024).residual
    if r128 <= ROUNDING:
        assert r1024 <= ROUNDING
    else:
        assert r1024 < r128
