"""Generalized fractional variational problems.

A problem extremizes ``J[y] = int_a^b F(t, y, y', B_{P1} y, K_{P2} y) dt`` under
boundary conditions and optionally an integral constraint
``I[y] = int_a^b G(...) dt = xi``.

The solver is a direct method.  ``y`` is piecewise linear on a uniform grid,
so on cell ``c`` the slope ``s_c`` is constant and ``B_{P1} y`` is computed
exactly from the slopes (:func:`genfrac.operators.slope_weights`).  The
objective is the per-cell trapezoid rule

    J_h = sum_c h/2 [F(t_c, y_c, s_c, v_c, w_c) + F(t_{c+1}, y_{c+1}, s_c, v_{c+1}, w_{c+1})]

whose gradient is assembled exactly through the transposed operator matrices
and minimized by L-BFGS with a backtracking line search.
"""

from __future__ import annotations

import ast
import math
from collections.abc import Callable, Mapping
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy import linalg

from genfrac.errors import (
    AbnormalCaseError,
    ConfigurationError,
    DerivativeBlowupError,
    HypothesisViolationError,
    ModeError,
    NumericalOverflowError,
    PreconditionError,
    SchemaError,
    StalledError,
    ValidationError,
)
from genfrac.expr import Expression
from genfrac.identities import IdentityReport
from genfrac.kernels import Kernel, constant_one, kernel_from_config
from genfrac.operators import (
    DerivativeScheme,
    GridFunction,
    OperatorConfig,
    ParamSet,
    a_op,
    b_op,
    derivative,
    k_matrix,
    k_op,
    slope_weights,
)

SLOTS = ("t", "y", "u", "v", "w")
#: fraction of the interval next to each end left out of Euler-Lagrange residual norms
DEFAULT_LAYER = 0.05
Fn = Callable[..., Any]


def _zero(t, y, u, v, w):
    return np.zeros(np.broadcast(t, y, u, v, w).shape)


# ---------------------------------------------------------------------------
# Lagrangian


@dataclass(frozen=True, eq=False)
class Lagrangian:
    """``F(t, y, u, v, w)`` and its partials ``d2..d5`` in the slots ``y, u, v, w``.

    With ``check=True`` (the default) each partial is compared with central
    differences of ``value`` at 100 random points and a mismatch raises
    :class:`ConfigurationError`.
    """

    value: Fn
    d2: Fn = _zero
    d3: Fn = _zero
    d4: Fn = _zero
    d5: Fn = _zero
    name: str = ""
    check: bool = field(default=True, repr=False)

    def __post_init__(self) -> None:
        if self.check:
            self.consistency_gate()

    def partials(self) -> tuple[Fn, Fn, Fn, Fn]:
        return self.d2, self.d3, self.d4, self.d5

    def consistency_gate(self, points: int = 100, rtol: float = 1e-5, seed: int = 12345) -> None:
        rng = np.random.default_rng(seed)
        X = np.column_stack([rng.uniform(0.0, 1.0, points), rng.uniform(-2.0, 2.0, (points, 4))])
        with np.errstate(all="ignore"):
            base = np.asarray(self.value(*X.T), dtype=float) * np.ones(points)
        ok = np.isfinite(base)
        if not ok.any():
            raise ConfigurationError(f"Lagrangian {self.name!r} is not finite at any test point")
        for slot, d in enumerate(self.partials(), start=1):
            step = 1e-5 * np.maximum(1.0, np.abs(X[:, slot]))
            hi, lo = X.copy(), X.copy()
            hi[:, slot] += step
            lo[:, slot] -= step
            with np.errstate(all="ignore"):
                fd = (np.asarray(self.value(*hi.T), dtype=float) - np.asarray(self.value(*lo.T), dtype=float)) / (2 * step)
                an = np.asarray(d(*X.T), dtype=float) * np.ones(points)
            good = ok & np.isfinite(fd) & np.isfinite(an)
            err = np.abs(fd - an)[good] / np.maximum(1.0, np.abs(an[good]))
            if err.size and float(np.max(err)) > rtol:
                raise ConfigurationError(
                    f"partial d{slot + 1} of Lagrangian {self.name!r} disagrees with finite "
                    f"differences (relative error {float(np.max(err)):.2e})"
                )

    @classmethod
    def from_expressions(
        cls,
        value: str,
        d2: str | None = None,
        d3: str | None = None,
        d4: str | None = None,
        d5: str | None = None,
        name: str = "",
    ) -> Lagrangian:
        """Build from expression strings in ``t, y, u, v, w``.

        A partial may be omitted when ``value`` does not mention its slot.
        """
        F = Expression(value, SLOTS)
        used = {node.id for node in ast.walk(ast.parse(value.replace("^", "**"), mode="eval"))
                if isinstance(node, ast.Name)}
        parts = []
        for slot, src in zip(SLOTS[1:], (d2, d3, d4, d5)):
            if src is None:
                if slot in used:
                    raise SchemaError(f"Lagrangian {value!r} uses {slot!r}; its partial is required")
                parts.append(_zero)
            else:
                parts.append(Expression(src, SLOTS))
        return cls(F, *parts, name=name or value)

    def minus(self, lam: float, other: Lagrangian) -> Lagrangian:
        """``self - lam * other`` (no consistency gate: both parts passed it)."""

        def comb(f, g):
            return lambda *x: f(*x) - lam * g(*x)

        parts = [comb(f, g) for f, g in zip(self.partials(), other.partials())]
        return Lagrangian(comb(self.value, other.value), *parts, name=f"{self.name} - {lam:g}*({other.name})",
                          check=False)


# ---------------------------------------------------------------------------
# problem


@dataclass(frozen=True)
class FixedBC:
    y_a: float
    y_b: float


@dataclass(frozen=True)
class FreeStartBC:
    y_b: float


@dataclass(frozen=True, eq=False)
class Constraint:
    G: Lagrangian
    xi: float


@dataclass(frozen=True, eq=False)
class VariationalProblem:
    a: float
    b: float
    P1: ParamSet
    P2: ParamSet
    alpha: float
    beta: float
    kernel_B: Kernel
    kernel_K: Kernel
    F: Lagrangian
    bc: FixedBC | FreeStartBC
    constraint: Constraint | None = None

    def __post_init__(self) -> None:
        for P in (self.P1, self.P2):
            if not (math.isclose(P.a, self.a) and math.isclose(P.b, self.b)):
                raise ValidationError(f"p-set domain [{P.a}, {P.b}] differs from [{self.a}, {self.b}]")
        for label, order in (("alpha", self.alpha), ("beta", self.beta)):
            if not 0.0 < order < 1.0:
                raise ValidationError(f"{label} must lie in (0, 1), got {order}")
        if not math.isclose(self.kernel_B.order, 1.0 - self.alpha, rel_tol=1e-9):
            raise ValidationError(
                f"kernel_B must have order 1 - alpha = {1 - self.alpha:g}, got {self.kernel_B.order:g}"
            )
        if not isinstance(self.bc, (FixedBC, FreeStartBC)):
            raise ValidationError("bc must be FixedBC or FreeStartBC")

    @property
    def free_start(self) -> bool:
        return isinstance(self.bc, FreeStartBC)

    def config_B(self) -> OperatorConfig:
        return OperatorConfig.for_kernel(self.kernel_B)

    def config_K(self) -> OperatorConfig:
        return OperatorConfig.for_kernel(self.kernel_K)


def simple_problem(F: Lagrangian, bc: FixedBC | FreeStartBC, a: float = 0.0, b: float = 1.0,
                   constraint: Constraint | None = None) -> VariationalProblem:
    """A problem without nonlocal terms (``p = q = 0`` in both p-sets)."""
    P0 = ParamSet(a, b, 0.0, 0.0)
    return VariationalProblem(a, b, P0, P0, 0.5, 0.5, constant_one(0.5), constant_one(0.5), F, bc, constraint)


@dataclass(frozen=True, eq=False)
class SolveResult:
    y: GridFunction
    lam: float | None
    #: discrete Euler-Lagrange residual: max-norm of the gradient of the
    #: discretized objective divided by the nodal trapezoid weights
    el_residual: float
    constraint_residual: float | None
    objective: float
    iterations: int
    converged: bool
    #: same as ``el_residual``, kept under the optimizer's name
    gradient_norm: float = math.nan
    objective_history: tuple[float, ...] = ()
    message: str = ""
    #: independent check: max of :func:`el_residual` on trusted interior nodes
    a_posteriori_residual: float = math.nan


# ---------------------------------------------------------------------------
# discretized objective


class Discretization:
    """Matrices and evaluation of ``J_h`` on a grid with ``n`` cells."""

    def __init__(self, prob: VariationalProblem, n: int) -> None:
        if n < 2:
            raise ValidationError(f"n must be at least 2, got {n}")
        self.prob, self.n = prob, n
        self.h = (prob.b - prob.a) / n
        self.t = np.linspace(prob.a, prob.b, n + 1)
        P1, P2 = prob.P1, prob.P2
        self.W = None if P1.p == P1.q == 0.0 else slope_weights(P1, prob.kernel_B, n, prob.config_B())
        self.K = None if P2.p == P2.q == 0.0 else k_matrix(P2, prob.kernel_K, n, prob.config_K())
        self.free = np.arange(0 if prob.free_start else 1, n)
        self.weights = np.full(n + 1, self.h)
        self.weights[0] = self.weights[-1] = 0.5 * self.h

    def slots(self, y: np.ndarray):
        s = np.diff(y) / self.h
        v = self.W @ s if self.W is not None else np.zeros(self.n + 1)
        w = self.K @ y if self.K is not None else np.zeros(self.n + 1)
        return s, v, w

    def _ends(self, y, s, v, w):
        t = self.t
        left = (t[:-1], y[:-1], s, v[:-1], w[:-1])
        right = (t[1:], y[1:], s, v[1:], w[1:])
        return left, right

    def integral(self, L: Lagrangian, y: np.ndarray) -> float:
        left, right = self._ends(y, *self.slots(y))
        with np.errstate(all="ignore"):
            total = 0.5 * self.h * float(np.sum(np.asarray(L.value(*left)) + np.asarray(L.value(*right))))
        return total

    def value_and_grad(self, L: Lagrangian, y: np.ndarray) -> tuple[float, np.ndarray]:
        """``J_h`` and its gradient with respect to all nodal values."""
        n, hh = self.n, 0.5 * self.h
        s, v, w = self.slots(y)
        left, right = self._ends(y, s, v, w)
        with np.errstate(all="ignore"):
            J = hh * float(np.sum(np.asarray(L.value(*left)) + np.asarray(L.value(*right))))
            dl = [np.broadcast_to(np.asarray(d(*left), dtype=float), (n,)) for d in L.partials()]
            dr = [np.broadcast_to(np.asarray(d(*right), dtype=float), (n,)) for d in L.partials()]

        def nodal(i):
            out = np.zeros(n + 1)
            out[:-1] += hh * dl[i]
            out[1:] += hh * dr[i]
            return out

        g = nodal(0)
        gs = hh * (dl[1] + dr[1])
        if self.W is not None:
            gs = gs + self.W.T @ nodal(2)
        if self.K is not None:
            g += self.K.T @ nodal(3)
        g[:-1] -= gs / self.h
        g[1:] += gs / self.h
        if not (math.isfinite(J) and np.all(np.isfinite(g))):
            raise NumericalOverflowError("objective or gradient is not finite")
        return J, g

    def initial(self) -> np.ndarray:
        bc = self.prob.bc
        y_a = bc.y_a if isinstance(bc, FixedBC) else bc.y_b
        return y_a + (bc.y_b - y_a) * (self.t - self.t[0]) / (self.t[-1] - self.t[0])

    def preconditioner(self) -> Callable[[np.ndarray], np.ndarray]:
        """Inverse of ``h S^T S + h I`` on the free nodes (a discrete H^1 metric)."""
        m = self.free.size
        inv_h = 1.0 / self.h
        diag = np.full(m, 2.0 * inv_h + self.h)
        if self.prob.free_start:
            diag[0] = inv_h + self.h
        ab = np.zeros((2, m))
        ab[0, 1:] = -inv_h
        ab[1] = diag
        cho = linalg.cholesky_banded(ab)
        return lambda g: linalg.cho_solve_banded((cho, False), g)


@dataclass
class _Minimization:
    y: np.ndarray
    value: float
    grad_norm: float
    iterations: int
    converged: bool
    history: list[float]
    message: str


def _minimize(disc: Discretization, L: Lagrangian, y0: np.ndarray, tol: float, max_iter: int,
              memory: int = 10, stall_window: int = 100) -> _Minimization:
    """L-BFGS on the free nodal values with an H^1 initial metric.

    Stops when the scaled gradient is below ``tol``, after ``max_iter``
    iterations, or when the gradient has not halved for ``stall_window``
    iterations (rounding floor).
    """
    free = disc.free
    scale = disc.weights[free]
    precond = disc.preconditioner()
    y = y0.copy()

    def evaluate(x):
        y[free] = x
        J, g = disc.value_and_grad(L, y)
        return J, g[free]

    x = y0[free].copy()
    J, g = evaluate(x)
    history = [J]
    S: list[np.ndarray] = []
    Y: list[np.ndarray] = []
    message = "max_iter reached"
    best = best_mark = math.inf
    since = 0
    it = 0
    for it in range(1, max_iter + 1):
        gnorm = float(np.max(np.abs(g / scale))) if g.size else 0.0
        if gnorm <= tol:
            it -= 1
            message = "gradient tolerance met"
            break
        d = -_two_loop(g, S, Y, precond)
        if not float(g @ d) < 0.0:
            S.clear()
            Y.clear()
            d = -precond(g)
        step, J_new, g_new, x_new = _backtrack(evaluate, x, J, g, d, scale)
        if step is None and S:
            S.clear()
            Y.clear()
            d = -precond(g)
            step, J_new, g_new, x_new = _backtrack(evaluate, x, J, g, d, scale)
        if step is None:
            y[free] = x
            raise StalledError(
                f"line search failed at iteration {it} (objective {J:.6e}, scaled gradient {gnorm:.3e})"
            )
        sk, yk = x_new - x, g_new - g
        if float(sk @ yk) > 1e-12 * float(np.linalg.norm(sk) * np.linalg.norm(yk)):
            S.append(sk)
            Y.append(yk)
            if len(S) > memory:
                S.pop(0)
                Y.pop(0)
        x, J, g = x_new, J_new, g_new
        history.append(J)
        gnew = float(np.max(np.abs(g / scale)))
        if gnew < best:
            best, best_x = gnew, x.copy()
        since = 0 if best < 0.5 * best_mark else since + 1
        if since == 0:
            best_mark = best
        elif since >= stall_window:
            message = f"stagnated at scaled gradient {best:.3e}"
            x = best_x
            J, g = evaluate(x)
            break
    else:
        it = max_iter
    y[free] = x
    gnorm = float(np.max(np.abs(g / scale))) if g.size else 0.0
    if gnorm <= tol:
        message = "gradient tolerance met"
    return _Minimization(y, J, gnorm, it, gnorm <= tol, history, message)


def _two_loop(g, S, Y, precond):
    q = g.copy()
    rho = [1.0 / float(yk @ sk) for sk, yk in zip(S, Y)]
    alphas = []
    for sk, yk, r in zip(reversed(S), reversed(Y), reversed(rho)):
        a = r * float(sk @ q)
        alphas.append(a)
        q -= a * yk
    z = precond(q)
    if S:
        sk, yk = S[-1], Y[-1]
        z *= float(sk @ yk) / float(yk @ precond(yk))
    for sk, yk, r, a in zip(S, Y, rho, reversed(alphas)):
        b = r * float(yk @ z)
        z += (a - b) * sk
    return z


def _backtrack(evaluate, x, J, g, d, scale, c1=1e-4, shrink=0.5, tries=60):
    """Armijo backtracking.  Once the decrease is below rounding, a step that
    keeps ``J`` from increasing and shrinks the gradient is accepted instead."""
    slope = float(g @ d)
    gnorm = float(np.max(np.abs(g / scale)))
    flat = abs(slope) < 64 * np.finfo(float).eps * max(abs(J), 1.0)
    step = 1.0
    for _ in range(tries):
        x_new = x + step * d
        J_new, g_new = evaluate(x_new)
        if J_new <= J + c1 * step * slope:
            return step, J_new, g_new, x_new
        if flat and J_new <= J and float(np.max(np.abs(g_new / scale))) < gnorm:
            return step, J_new, g_new, x_new
        step *= shrink
    return None, J, g, x


# ---------------------------------------------------------------------------
# residuals


def _check_bc(prob: VariationalProblem, y: GridFunction, atol: float = 1e-10) -> None:
    if not (math.isclose(y.a, prob.a) and math.isclose(y.b, prob.b)):
        raise PreconditionError(f"grid [{y.a}, {y.b}] does not match problem domain")
    bc = prob.bc
    if abs(y.values[-1] - bc.y_b) > atol:
        raise PreconditionError(f"y(b) = {y.values[-1]} but the boundary condition is {bc.y_b}")
    if isinstance(bc, FixedBC) and abs(y.values[0] - bc.y_a) > atol:
        raise PreconditionError(f"y(a) = {y.values[0]} but the boundary condition is {bc.y_a}")


def _integrand(prob: VariationalProblem, lam: float | None) -> Lagrangian:
    if lam is None or prob.constraint is None:
        return prob.F
    return prob.F.minus(lam, prob.constraint.G)


def _along(prob: VariationalProblem, y: GridFunction, y_prime: GridFunction | None):
    """Slot values ``(t, y, u, v, w)`` at the nodes and the mask of trusted nodes."""
    scheme = DerivativeScheme.CENTRAL2
    # second-order ends: d3F is differentiated once more, which would turn a
    # first-order end value of u into an O(1) error at the neighbouring nodes
    u = y_prime.values if y_prime is not None else derivative(y.values, y.h, DerivativeScheme.ONE_SIDED2_AT_ENDS)
    mask = np.ones(y.n + 1, dtype=bool)
    if prob.P1.p == prob.P1.q == 0.0:
        v = np.zeros(y.n + 1)
    else:
        cfg = OperatorConfig.for_kernel(prob.kernel_B, derivative_scheme=scheme)
        B = b_op(prob.P1, prob.kernel_B, y, y_prime, cfg)
        v, mask = B.values, mask & B.mask
    if prob.P2.p == prob.P2.q == 0.0:
        w = np.zeros(y.n + 1)
    else:
        Kf = k_op(prob.P2, prob.kernel_K, y, prob.config_K())
        w, mask = Kf.values, mask & Kf.mask
    return (y.t, y.values, u, v, w), mask


def el_residual(
    prob: VariationalProblem,
    y: GridFunction,
    cfg: OperatorConfig | None = None,
    lam: float | None = None,
    y_prime: GridFunction | None = None,
    layer: float | None = None,
) -> GridFunction:
    """``R = d2H - d/dt d3H - A_{P1*} d4H + K_{P2*} d5H`` along ``y``.

    ``H = F - lam G`` when the problem has a constraint and ``lam`` is given,
    ``F`` otherwise.  ``y_prime`` replaces the finite-difference derivative of
    ``y``.  The returned mask clears the endpoints and nodes where an operator
    is singular; norms should be taken over unmasked nodes only.

    With a kernel singular at the diagonal, extremals typically behave like
    ``(t - a)^(1 - alpha)`` near the ends and the nodal residual there does not
    shrink with ``h``.  Nodes within ``layer * (b - a)`` of either end are then
    masked too (default ``DEFAULT_LAYER``; pass 0 to keep them).
    """
    _check_bc(prob, y)
    H = _integrand(prob, lam)
    slots, mask = _along(prob, y, y_prime)
    n, h = y.n, y.h
    scheme = DerivativeScheme.CENTRAL2
    cfg = cfg or OperatorConfig.for_kernel(prob.kernel_B, derivative_scheme=scheme)
    with np.errstate(all="ignore"):
        d2, d3, d4, d5 = (np.broadcast_to(np.asarray(d(*slots), dtype=float), (n + 1,)) for d in H.partials())
    R = d2 - derivative(d3, h, scheme)
    if np.any(d4 != 0.0) and not (prob.P1.p == prob.P1.q == 0.0):
        A = a_op(prob.P1.dual(), prob.kernel_B, y.with_values(d4), cfg)
        R = R - A.values
        mask &= A.mask
    if np.any(d5 != 0.0) and not (prob.P2.p == prob.P2.q == 0.0):
        Kd = k_op(prob.P2.dual(), prob.kernel_K, y.with_values(d5), prob.config_K())
        R = R + Kd.values
        mask &= Kd.mask
    mask = mask.copy()
    mask[0] = mask[-1] = False
    if prob.kernel_B.singular_at_diagonal and not (prob.P1.p == prob.P1.q == 0.0):
        width = (DEFAULT_LAYER if layer is None else layer) * (y.b - y.a)
        mask &= (y.t - y.a >= width) & (y.b - y.t >= width)
    if not np.all(np.isfinite(R[mask])):
        raise NumericalOverflowError("Euler-Lagrange residual is not finite")
    return GridFunction(y.a, y.b, n, np.where(np.isfinite(R), R, 0.0), mask)


def max_residual(R: GridFunction) -> float:
    vals = np.abs(R.values[R.mask])
    return float(np.max(vals)) if vals.size else 0.0


def natural_bc_residual(prob: VariationalProblem, y: GridFunction, cfg: OperatorConfig | None = None,
                        y_prime: GridFunction | None = None) -> float:
    """``|d3F(a) + (K_{P1*}^{1-alpha} d4F)(a)|`` for a free-start problem."""
    if not prob.free_start:
        raise ModeError("natural_bc_residual applies to free-start problems only")
    _check_bc(prob, y)
    slots, _ = _along(prob, y, y_prime)
    n = y.n
    with np.errstate(all="ignore"):
        d3 = np.broadcast_to(np.asarray(prob.F.d3(*slots), dtype=float), (n + 1,))
        d4 = np.broadcast_to(np.asarray(prob.F.d4(*slots), dtype=float), (n + 1,))
    total = float(d3[0])
    if np.any(d4 != 0.0) and not (prob.P1.p == prob.P1.q == 0.0):
        Kd = k_op(prob.P1.dual(), prob.kernel_B, y.with_values(d4), cfg or prob.config_B())
        total += float(Kd.values[0])
    return abs(total)


# ---------------------------------------------------------------------------
# solvers


def _a_posteriori(prob: VariationalProblem, y: GridFunction, lam: float | None) -> float:
    try:
        return max_residual(el_residual(prob, y, lam=lam))
    except (DerivativeBlowupError, NumericalOverflowError):
        return math.inf


def _pin_bc(prob: VariationalProblem, y: np.ndarray) -> np.ndarray:
    y = y.copy()
    y[-1] = prob.bc.y_b
    if isinstance(prob.bc, FixedBC):
        y[0] = prob.bc.y_a
    return y


def solve_fundamental(prob: VariationalProblem, n: int = 128, tol: float = 1e-7, max_iter: int = 5000,
                      y0: np.ndarray | None = None) -> SolveResult:
    """Minimize the discretized functional; see the module docstring."""
    if prob.constraint is not None:
        raise ModeError("problem has a constraint; use solve_isoperimetric")
    disc = Discretization(prob, n)
    return _solve(disc, prob.F, tol, max_iter, y0, None)


def _solve(disc: Discretization, L: Lagrangian, tol: float, max_iter: int,
           y0: np.ndarray | None, lam: float | None) -> SolveResult:
    prob = disc.prob
    start = _pin_bc(prob, disc.initial() if y0 is None else np.asarray(y0, dtype=float))
    res = _minimize(disc, L, start, tol, max_iter)
    y = GridFunction(prob.a, prob.b, disc.n, res.y)
    cres = None
    if prob.constraint is not None:
        cres = abs(disc.integral(prob.constraint.G, res.y) - prob.constraint.xi)
    return SolveResult(
        y=y,
        lam=lam,
        el_residual=res.grad_norm,
        constraint_residual=cres,
        objective=disc.integral(prob.F, res.y),
        iterations=res.iterations,
        converged=res.converged,
        gradient_norm=res.grad_norm,
        objective_history=tuple(res.history),
        message=res.message,
        a_posteriori_residual=_a_posteriori(prob, y, lam),
    )


def solve_isoperimetric(prob: VariationalProblem, n: int = 128, tol: float = 1e-7, max_iter: int = 5000,
                        max_outer: int = 30) -> SolveResult:
    """Minimize ``int (F - lam G)`` with ``lam`` updated by secant iteration on ``I[y] - xi``.

    Starts from ``lam = 0`` and ``lam = 1``.  Raises :class:`AbnormalCaseError`
    when the constraint value does not respond to ``lam`` although it is not
    met, which happens when the candidate is an extremal of ``I``.
    """
    if prob.constraint is None:
        raise ModeError("problem has no constraint; use solve_fundamental")
    disc = Discretization(prob, n)
    G, xi = prob.constraint.G, prob.constraint.xi

    def inner(lam: float, y0: np.ndarray | None) -> tuple[SolveResult, float]:
        res = _solve(disc, prob.F.minus(lam, G), tol, max_iter, y0, lam)
        return res, disc.integral(G, res.y.values) - xi

    lam0, lam1 = 0.0, 1.0
    r0, d0 = inner(lam0, None)
    if abs(d0) <= tol and r0.converged:
        return r0
    r1, d1 = inner(lam1, r0.y.values)
    total = r0.iterations + r1.iterations
    for _ in range(max_outer):
        if abs(d1) <= tol:
            break
        if abs(d1 - d0) <= 1e-12 * max(1.0, abs(d0), abs(d1)):
            raise AbnormalCaseError(
                f"constraint defect {d1:.3e} does not change with the multiplier; "
                "the candidate is an extremal of the constraint functional (abnormal case)"
            )
        lam2 = lam1 - d1 * (lam1 - lam0) / (d1 - d0)
        lam0, d0 = lam1, d1
        r1, d1 = inner(lam2, r1.y.values)
        lam1 = lam2
        total += r1.iterations
    converged = r1.converged and abs(d1) <= tol
    return SolveResult(
        y=r1.y,
        lam=lam1,
        el_residual=r1.el_residual,
        constraint_residual=abs(d1),
        objective=r1.objective,
        iterations=total,
        converged=converged,
        gradient_norm=r1.gradient_norm,
        objective_history=r1.objective_history,
        message=r1.message if converged else f"constraint defect {abs(d1):.3e}",
        a_posteriori_residual=r1.a_posteriori_residual,
    )


# ---------------------------------------------------------------------------
# coherence


def coherence_check(kernel: Kernel, p: float, F: Lagrangian, y: GridFunction,
                    cfg: OperatorConfig | None = None, q: float | None = None) -> IdentityReport:
    """Compare the two Euler-Lagrange forms of a problem with ``P = <a, b, p, -p>``.

    ``F`` is used in its reduced form ``F(t, y, w)`` with ``w = K_P y``:
    direct embedding ``d2F - K_P d5F`` against least action ``d2F + K_{P*} d5F``.
    """
    q = -p if q is None else q
    if q != -p:
        raise HypothesisViolationError(f"coherence needs q = -p, got p = {p}, q = {q}")
    cfg = cfg or OperatorConfig.for_kernel(kernel)
    P = ParamSet(y.a, y.b, p, q)
    zeros = np.zeros(y.n + 1)
    w = k_op(P, kernel, y, cfg)
    slots = (y.t, y.values, zeros, zeros, w.values)
    n = y.n
    with np.errstate(all="ignore"):
        d2 = np.broadcast_to(np.asarray(F.d2(*slots), dtype=float), (n + 1,))
        d5 = np.broadcast_to(np.asarray(F.d5(*slots), dtype=float), (n + 1,))
    g = y.with_values(d5)
    direct = d2 - k_op(P, kernel, g, cfg).values
    least = d2 + k_op(P.dual(), kernel, g, cfg).values
    mask = w.mask
    diff = float(np.max(np.abs(direct - least)[mask])) if mask.any() else 0.0
    return IdentityReport(
        "coherence",
        y.with_values(direct, mask),
        y.with_values(least, mask),
        diff,
        n,
        1e-12,
        kernel=kernel.name,
        pset=P,
    )


# ---------------------------------------------------------------------------
# JSON problem documents


def _lagrangian_from(doc: Mapping[str, Any], label: str) -> Lagrangian:
    if isinstance(doc, str):
        doc = {"value": doc}
    if not isinstance(doc, Mapping) or "value" not in doc:
        raise SchemaError(f"{label} must be an expression string or an object with 'value'")
    unknown = set(doc) - {"value", "d2", "d3", "d4", "d5"}
    if unknown:
        raise SchemaError(f"unknown keys in {label}: {sorted(unknown)}")
    return Lagrangian.from_expressions(doc["value"], doc.get("d2"), doc.get("d3"), doc.get("d4"), doc.get("d5"),
                                       name=label)


def _pset(doc: Any, a: float, b: float, label: str) -> ParamSet:
    if doc is None:
        return ParamSet(a, b, 0.0, 0.0)
    if not isinstance(doc, Mapping) or set(doc) - {"p", "q"}:
        raise SchemaError(f"{label} must be an object with keys 'p' and 'q'")
    return ParamSet(a, b, float(doc.get("p", 0.0)), float(doc.get("q", 0.0)))


PROBLEM_KEYS = {"domain", "alpha", "beta", "P1", "P2", "kernel_B", "kernel_K", "F", "bc", "constraint"}


def problem_from_dict(doc: Mapping[str, Any]) -> VariationalProblem:
    """Build a problem from a JSON-style document.

    Example::

        {"domain": [0, 1], "alpha": 0.5, "beta": 0.5,
         "P1": {"p": 1, "q": 0}, "kernel_B": {"name": "riemann_liouville", "alpha": 0.5},
         "F": {"value": "(u + v)^2", "d3": "2*(u + v)", "d4": "2*(u + v)"},
         "bc": {"type": "fixed", "y_a": 0, "y_b": 0.5},
         "constraint": {"G": {"value": "u + v", "d3": "1", "d4": "1"}, "xi": 1}}
    """
    if not isinstance(doc, Mapping):
        raise SchemaError("problem document must be a JSON object")
    unknown = set(doc) - PROBLEM_KEYS
    if unknown:
        raise SchemaError(f"unknown problem keys {sorted(unknown)}; valid keys: {sorted(PROBLEM_KEYS)}")
    try:
        a, b = (float(x) for x in doc.get("domain", (0.0, 1.0)))
        alpha = float(doc.get("alpha", 0.5))
        beta = float(doc.get("beta", 0.5))
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"bad domain or order: {exc}") from None
    kB = kernel_from_config(doc["kernel_B"]) if "kernel_B" in doc else constant_one(1.0 - alpha)
    kK = kernel_from_config(doc["kernel_K"]) if "kernel_K" in doc else constant_one(beta)
    if "F" not in doc:
        raise SchemaError("problem needs a Lagrangian 'F'")
    F = _lagrangian_from(doc["F"], "F")
    bc_doc = doc.get("bc")
    if not isinstance(bc_doc, Mapping) or bc_doc.get("type") not in ("fixed", "free_start"):
        raise SchemaError("bc must be {'type': 'fixed', 'y_a', 'y_b'} or {'type': 'free_start', 'y_b'}")
    try:
        bc = FixedBC(float(bc_doc["y_a"]), float(bc_doc["y_b"])) if bc_doc["type"] == "fixed" \
            else FreeStartBC(float(bc_doc["y_b"]))
    except KeyError as exc:
        raise SchemaError(f"bc is missing {exc}") from None
    constraint = None
    if doc.get("constraint") is not None:
        c = doc["constraint"]
        if not isinstance(c, Mapping) or "G" not in c or "xi" not in c:
            raise SchemaError("constraint must be an object with 'G' and 'xi'")
        constraint = Constraint(_lagrangian_from(c["G"], "G"), float(c["xi"]))
    return VariationalProblem(
        a, b, _pset(doc.get("P1"), a, b, "P1"), _pset(doc.get("P2"), a, b, "P2"),
        alpha, beta, kB, kK, F, bc, constraint,
    )


def solve(prob: VariationalProblem, n: int = 128, tol: float = 1e-7, max_iter: int = 5000) -> SolveResult:
    """Dispatch on the presence of a constraint."""
    if prob.constraint is None:
        return solve_fundamental(prob, n, tol, max_iter)
    return solve_isoperimetric(prob, n, tol, max_iter)


# ---------------------------------------------------------------------------
# the Mittag-Leffler example


def example1_problem(alpha: float = 0.5, xi: float = 1.0) -> VariationalProblem:
    """``(u + v)^2`` with ``int (u + v) = xi`` and the extremal's boundary values."""
    from genfrac.kernels import riemann_liouville
    from genfrac.volterra import example1_series

    F = Lagrangian.from_expressions("(u + v)^2", d3="2*(u + v)", d4="2*(u + v)", name="(u+v)^2")
    G = Lagrangian.from_expressions("u + v", d3="1", d4="1", name="u+v")
    y_b = float(example1_series(alpha, xi, np.array([1.0]))[0])
    P1 = ParamSet(0.0, 1.0, 1.0, 0.0)
    P2 = ParamSet(0.0, 1.0, 0.0, 0.0)
    return VariationalProblem(0.0, 1.0, P1, P2, alpha, 0.5, riemann_liouville(1.0 - alpha), constant_one(0.5),
                              F, FixedBC(0.0, y_b), Constraint(G, xi))
