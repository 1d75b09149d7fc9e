"""Generalized fractional integral and derivatives on uniform grids.

For a parameter set ``P = <a, b, p, q>`` the operators are

* ``K_P f(t) = p int_a^t k(t,tau) f(tau) dtau + q int_t^b k(tau,t) f(tau) dtau``
* ``A_P = D o K_P^{1-alpha}``  (Riemann-Liouville type)
* ``B_P = K_P^{1-alpha} o D``  (Caputo type)

All discrete operators are linear maps on nodal values and are assembled as
dense weight rows.  Product-trapezoid weights integrate the kernel exactly
against the hat functions of the piecewise-linear interpolant, which is what
lets singular difference kernels be integrated through ``tau = t``.
"""

from __future__ import annotations

import enum
import functools
import math
import warnings
from collections.abc import Callable
from dataclasses import dataclass, field, replace

import numpy as np

from genfrac.errors import (
    ConfigurationError,
    DerivativeBlowupError,
    InvalidDomainError,
    NotSquareIntegrableError,
    NumericalOverflowError,
    ValidationError,
)
from genfrac.kernels import GL_NODES, GL_WEIGHTS, Kernel

_ROW_CHUNK = 256


@dataclass(frozen=True)
class ParamSet:
    """The p-set ``<a, t, b, p, q>`` without the running variable ``t``."""

    a: float
    b: float
    p: float
    q: float

    def __post_init__(self) -> None:
        if not self.b > self.a:
            raise InvalidDomainError(f"need a < b, got [{self.a}, {self.b}]")
        if not (math.isfinite(self.p) and math.isfinite(self.q)):
            raise ValidationError("p and q must be finite")

    def dual(self) -> ParamSet:
        return dual(self)


def dual(P: ParamSet) -> ParamSet:
    """The dual p-set: ``p`` and ``q`` swapped."""
    return ParamSet(P.a, P.b, P.q, P.p)


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Samples of a real function at ``t_i = a + i (b - a) / n``, ``i = 0..n``.

    ``mask`` marks nodes whose values are trustworthy; operators clear it at
    nodes next to singular endpoints.
    """

    a: float
    b: float
    n: int
    values: np.ndarray
    mask: np.ndarray | None = field(default=None)

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float)
        if self.n < 1:
            raise ValidationError(f"n must be positive, got {self.n}")
        if not self.b > self.a:
            raise InvalidDomainError(f"need a < b, got [{self.a}, {self.b}]")
        if values.shape != (self.n + 1,):
            raise ValidationError(f"expected {self.n + 1} values, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise NumericalOverflowError("grid function has non-finite values")
        mask = np.ones(self.n + 1, dtype=bool) if self.mask is None else np.asarray(self.mask, dtype=bool)
        values.setflags(write=False)
        mask.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "mask", mask)

    @classmethod
    def from_function(cls, func: Callable, a: float, b: float, n: int) -> GridFunction:
        t = np.linspace(a, b, n + 1)
        return cls(a, b, n, np.broadcast_to(np.asarray(func(t), dtype=float), t.shape).copy())

    @classmethod
    def zeros(cls, a: float, b: float, n: int) -> GridFunction:
        return cls(a, b, n, np.zeros(n + 1))

    @property
    def h(self) -> float:
        return (self.b - self.a) / self.n

    @property
    def t(self) -> np.ndarray:
        return np.linspace(self.a, self.b, self.n + 1)

    def with_values(self, values: np.ndarray, mask: np.ndarray | None = None) -> GridFunction:
        return GridFunction(self.a, self.b, self.n, values, self.mask if mask is None else mask)

    def same_grid(self, other: GridFunction) -> bool:
        return self.n == other.n and math.isclose(self.a, other.a) and math.isclose(self.b, other.b)

    def __len__(self) -> int:
        return self.n + 1


class Quadrature(enum.Enum):
    PRODUCT_TRAPEZOID = "product_trapezoid"
    COMPOSITE_MIDPOINT = "composite_midpoint"


class DerivativeScheme(enum.Enum):
    #: central differences inside, first-order one-sided at the ends
    CENTRAL2 = "central2"
    #: central differences inside, second-order one-sided at the ends
    ONE_SIDED2_AT_ENDS = "one_sided2_at_ends"


@dataclass(frozen=True)
class OperatorConfig:
    quadrature: Quadrature = Quadrature.PRODUCT_TRAPEZOID
    derivative_scheme: DerivativeScheme = DerivativeScheme.ONE_SIDED2_AT_ENDS
    refine_factor: int = 4
    #: sub-samples per cell of the composite midpoint rule
    midpoint_subsamples: int = 4

    def __post_init__(self) -> None:
        if self.refine_factor not in (1, 2, 4, 8):
            raise ValidationError(f"refine_factor must be 1, 2, 4 or 8, got {self.refine_factor}")
        if self.midpoint_subsamples < 1:
            raise ValidationError("midpoint_subsamples must be positive")

    @classmethod
    def for_kernel(cls, kernel: Kernel, **kwargs) -> OperatorConfig:
        """Product trapezoid when it is available for ``kernel``, midpoint otherwise."""
        cfg = cls(**kwargs)
        if _needs_midpoint(kernel):
            cfg = replace(cfg, quadrature=Quadrature.COMPOSITE_MIDPOINT)
        return cfg


def _needs_midpoint(kernel: Kernel) -> bool:
    if kernel.singular_rows:
        return True
    if kernel.singular_at_diagonal:
        return not (kernel.is_difference and kernel.moment is not None and kernel.first_moment is not None)
    return False


DEFAULT_CONFIG = OperatorConfig()


# ---------------------------------------------------------------------------
# cell rules and weights


def _cell_rule(kernel: Kernel, cfg: OperatorConfig) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights on [0, 1] used to integrate the kernel over one cell."""
    if cfg.quadrature is Quadrature.COMPOSITE_MIDPOINT:
        r = cfg.midpoint_subsamples
        return (np.arange(r) + 0.5) / r, np.full(r, 1.0 / r)
    if _needs_midpoint(kernel):
        raise ConfigurationError(
            f"kernel {kernel.name!r} is singular and has no closed-form moments; "
            "use the composite midpoint quadrature"
        )
    return GL_NODES, GL_WEIGHTS


def _toeplitz_parts(
    kernel: Kernel, h: float, n: int, cfg: OperatorConfig
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-offset cell integrals of a difference kernel, index ``m = 1..n``.

    For the cell ``s in [(m-1)h, mh]`` and ``x = s/h - (m-1)``:
    ``mass[m] = int k``, ``far[m] = int k x`` and ``near[m] = int k (1-x)``.
    ``far`` multiplies the node at ``s = mh`` and ``near`` the node at ``s = (m-1)h``.
    """
    m = np.arange(1, n + 1, dtype=float)
    mass = np.zeros(n + 1)
    far = np.zeros(n + 1)
    near = np.zeros(n + 1)
    exact = (
        cfg.quadrature is Quadrature.PRODUCT_TRAPEZOID
        and kernel.moment is not None
        and kernel.first_moment is not None
    )
    if exact:
        lo, hi = (m - 1.0) * h, m * h
        A = np.asarray(kernel.moment(lo, hi), dtype=float)
        B = np.asarray(kernel.first_moment(lo, hi), dtype=float)
        mass[1:] = A
        far[1:] = (B - lo * A) / h
        near[1:] = (hi * A - B) / h
    else:
        x, w = _cell_rule(kernel, cfg)
        s = (m[:, None] - 1.0 + x[None, :]) * h
        k = np.asarray(kernel.profile(s), dtype=float)
        mass[1:] = h * (k @ w)
        far[1:] = h * (k @ (w * x))
        near[1:] = h * (k @ (w * (1.0 - x)))
    if not (np.all(np.isfinite(mass)) and np.all(np.isfinite(far))):
        raise NumericalOverflowError(f"non-finite cell weights for kernel {kernel.name!r}")
    return mass, far, near


def _left_right_rows(
    kernel: Kernel, a: float, b: float, n: int, rows: np.ndarray, cfg: OperatorConfig
) -> tuple[np.ndarray, np.ndarray]:
    """Weight rows of the left-looking and right-looking integrals.

    ``L[r] @ f = int_a^{t_i} k(t_i, tau) f(tau) dtau`` and
    ``R[r] @ f = int_{t_i}^b k(tau, t_i) f(tau) dtau`` with ``i = rows[r]`` and
    ``f`` the piecewise-linear interpolant of the nodal values.
    """
    h = (b - a) / n
    rows = np.asarray(rows, dtype=int)
    cols = np.arange(n + 1)
    if kernel.is_difference:
        _, far, near = _toeplitz_parts(kernel, h, n, cfg)
        d = rows[:, None] - cols[None, :]  # i - k
        L = np.where(d >= 1, far[np.clip(d, 0, n)], 0.0)
        L += np.where((cols[None, :] >= 1) & (d >= 0), near[np.clip(d + 1, 0, n)], 0.0)
        e = -d  # k - i
        R = np.where((e >= 0) & (cols[None, :] <= n - 1), near[np.clip(e + 1, 0, n)], 0.0)
        R += np.where(e >= 1, far[np.clip(e, 0, n)], 0.0)
    else:
        L, R = _general_rows(kernel, a, h, n, rows, cfg)

    for r, i in enumerate(rows):
        if _is_singular_row(kernel, a + i * h, h):
            L[r], R[r] = _shifted_row(kernel, a, b, n, int(i), cfg)
    return L, R


def _general_rows(
    kernel: Kernel, a: float, h: float, n: int, rows: np.ndarray, cfg: OperatorConfig
) -> tuple[np.ndarray, np.ndarray]:
    x, w = _cell_rule(kernel, cfg)
    t_nodes = a + h * np.arange(n + 1)
    t_rows = t_nodes[rows]
    cells = np.arange(n)
    L = np.zeros((rows.size, n + 1))
    R = np.zeros((rows.size, n + 1))
    left_cell = cells[None, :] < rows[:, None]
    for xg, wg in zip(x, w):
        tau = t_nodes[:-1] + xg * h  # one point per cell
        with np.errstate(all="ignore"):
            k_left = np.where(left_cell, kernel.eval(t_rows[:, None], np.where(left_cell, tau[None, :], t_rows[:, None] - h)), 0.0)
            k_right = np.where(~left_cell, kernel.eval(np.where(~left_cell, tau[None, :], t_rows[:, None] + h), t_rows[:, None]), 0.0)
        L[:, :-1] += h * wg * (1.0 - xg) * k_left
        L[:, 1:] += h * wg * xg * k_left
        R[:, :-1] += h * wg * (1.0 - xg) * k_right
        R[:, 1:] += h * wg * xg * k_right
    return L, R


def _is_singular_row(kernel: Kernel, t: float, h: float) -> bool:
    return any(abs(t - ts) < 1e-9 * max(h, 1.0) for ts in kernel.singular_rows)


def _shifted_row(
    kernel: Kernel, a: float, b: float, n: int, i: int, cfg: OperatorConfig
) -> tuple[np.ndarray, np.ndarray]:
    """Row evaluated half a step inside the domain from a singular node."""
    h = (b - a) / n
    t_star = a + (i + 0.5) * h if i < n else b - 0.5 * h
    # the row passes next to a point singularity: sample it more finely
    r = 8 * cfg.midpoint_subsamples
    L = np.zeros(n + 1)
    R = np.zeros(n + 1)
    for c in range(n):
        lo, hi = a + c * h, a + (c + 1) * h
        for seg_lo, seg_hi, left in ((lo, min(hi, t_star), True), (max(lo, t_star), hi, False)):
            if seg_hi <= seg_lo:
                continue
            # keep the sub-sample spacing h / r across the split cell
            m = max(1, round(r * (seg_hi - seg_lo) / h))
            tau = seg_lo + (np.arange(m) + 0.5) / m * (seg_hi - seg_lo)
            weights = np.full(m, (seg_hi - seg_lo) / m)
            k = kernel.eval(t_star, tau) if left else kernel.eval(tau, t_star)
            theta = (tau - lo) / h
            target = L if left else R
            target[c] += float(np.sum(weights * k * (1.0 - theta)))
            target[c + 1] += float(np.sum(weights * k * theta))
    return L, R


def _row_masks(kernel: Kernel, a: float, b: float, n: int) -> np.ndarray:
    h = (b - a) / n
    mask = np.ones(n + 1, dtype=bool)
    for i in range(n + 1):
        if _is_singular_row(kernel, a + i * h, h):
            mask[i] = False
    return mask


@functools.lru_cache(maxsize=16)
def _full_left_right(kernel: Kernel, a: float, b: float, n: int, cfg: OperatorConfig):
    L, R = _left_right_rows(kernel, a, b, n, np.arange(n + 1), cfg)
    L.setflags(write=False)
    R.setflags(write=False)
    return L, R


def k_matrix(P: ParamSet, kernel: Kernel, n: int, cfg: OperatorConfig = DEFAULT_CONFIG) -> np.ndarray:
    """Dense ``(n+1) x (n+1)`` matrix of the discrete ``K_P``."""
    L, R = _full_left_right(kernel, P.a, P.b, n, cfg)
    return P.p * L + P.q * R


def _apply_rows(P: ParamSet, kernel: Kernel, a: float, b: float, n: int, rows: np.ndarray,
                values: np.ndarray, cfg: OperatorConfig) -> np.ndarray:
    if P.p == 0.0 and P.q == 0.0:
        return np.zeros(rows.size)
    if n <= 1024:
        L, R = _full_left_right(kernel, a, b, n, cfg)
        return (P.p * L[rows] + P.q * R[rows]) @ values
    out = np.empty(rows.size)
    for start in range(0, rows.size, _ROW_CHUNK):
        chunk = rows[start:start + _ROW_CHUNK]
        L, R = _left_right_rows(kernel, a, b, n, chunk, cfg)
        out[start:start + _ROW_CHUNK] = (P.p * L + P.q * R) @ values
    return out


def _check_grid(P: ParamSet, f: GridFunction) -> None:
    if not (math.isclose(P.a, f.a) and math.isclose(P.b, f.b)):
        raise InvalidDomainError(f"grid [{f.a}, {f.b}] does not match p-set [{P.a}, {P.b}]")


def k_op(P: ParamSet, kernel: Kernel, f: GridFunction, cfg: OperatorConfig = DEFAULT_CONFIG) -> GridFunction:
    """Generalized fractional integral ``K_P f`` on the grid of ``f``."""
    _check_grid(P, f)
    values = _apply_rows(P, kernel, f.a, f.b, f.n, np.arange(f.n + 1), f.values, cfg)
    if not np.all(np.isfinite(values)):
        raise NumericalOverflowError(f"K-op with kernel {kernel.name!r} produced non-finite values")
    return GridFunction(f.a, f.b, f.n, values, _row_masks(kernel, f.a, f.b, f.n))


# ---------------------------------------------------------------------------
# derivatives


def derivative(values: np.ndarray, h: float, scheme: DerivativeScheme = DerivativeScheme.ONE_SIDED2_AT_ENDS) -> np.ndarray:
    edge = 2 if scheme is DerivativeScheme.ONE_SIDED2_AT_ENDS else 1
    return np.gradient(np.asarray(values, dtype=float), h, edge_order=edge)


def derivative_matrix(n: int, h: float, scheme: DerivativeScheme = DerivativeScheme.ONE_SIDED2_AT_ENDS) -> np.ndarray:
    """Matrix form of :func:`derivative`."""
    D = np.zeros((n + 1, n + 1))
    idx = np.arange(1, n)
    D[idx, idx - 1] = -0.5 / h
    D[idx, idx + 1] = 0.5 / h
    if scheme is DerivativeScheme.ONE_SIDED2_AT_ENDS and n >= 2:
        D[0, :3] = np.array([-3.0, 4.0, -1.0]) / (2 * h)
        D[n, n - 2:] = np.array([1.0, -4.0, 3.0]) / (2 * h)
    else:
        D[0, :2] = np.array([-1.0, 1.0]) / h
        D[n, n - 1:] = np.array([-1.0, 1.0]) / h
    return D


def grid_derivative(f: GridFunction, cfg: OperatorConfig = DEFAULT_CONFIG) -> GridFunction:
    return f.with_values(derivative(f.values, f.h, cfg.derivative_scheme))


def _endpoint_mask(kernel: Kernel, P: ParamSet, n: int) -> np.ndarray:
    mask = np.ones(n + 1, dtype=bool)
    if kernel.singular_at_diagonal:
        if P.p != 0.0:
            mask[:2] = False
        if P.q != 0.0:
            mask[-2:] = False
    return mask


def a_op(P: ParamSet, kernel_1ma: Kernel, f: GridFunction, cfg: OperatorConfig = DEFAULT_CONFIG) -> GridFunction:
    """``A_P f = D K_P^{1-alpha} f``.

    ``K f`` is evaluated on a grid refined ``cfg.refine_factor`` times (``f``
    interpolated linearly) and differentiated there.  Nodes within one step
    of an endpoint where the kernel singularity makes ``A_P f`` blow up are
    cleared in the mask.
    """
    _check_grid(P, f)
    n, r = f.n, cfg.refine_factor
    N = n * r
    hf = f.h / r
    fine_t = np.linspace(f.a, f.b, N + 1)
    fine_f = np.interp(fine_t, f.t, f.values)
    coarse = np.arange(n + 1) * r
    if cfg.derivative_scheme is DerivativeScheme.ONE_SIDED2_AT_ENDS:
        need = np.unique(np.concatenate([coarse[1:-1] - 1, coarse[1:-1] + 1, [0, 1, 2, N - 2, N - 1, N]]))
    else:
        need = np.unique(np.concatenate([coarse[1:-1] - 1, coarse[1:-1] + 1, [0, 1, N - 1, N]]))
    need = need[(need >= 0) & (need <= N)]
    kv = np.full(N + 1, np.nan)
    kv[need] = _apply_rows(P, kernel_1ma, f.a, f.b, N, need, fine_f, cfg)

    out = np.empty(n + 1)
    inner = coarse[1:-1]
    out[1:-1] = (kv[inner + 1] - kv[inner - 1]) / (2 * hf)
    if cfg.derivative_scheme is DerivativeScheme.ONE_SIDED2_AT_ENDS:
        out[0] = (-3 * kv[0] + 4 * kv[1] - kv[2]) / (2 * hf)
        out[n] = (kv[N - 2] - 4 * kv[N - 1] + 3 * kv[N]) / (2 * hf)
    else:
        out[0] = (kv[1] - kv[0]) / hf
        out[n] = (kv[N] - kv[N - 1]) / hf
    if not np.all(np.isfinite(out)):
        raise NumericalOverflowError(f"A-op with kernel {kernel_1ma.name!r} produced non-finite values")
    scale = float(np.max(np.abs(f.values)))
    if scale > 0 and max(abs(out[0]), abs(out[n])) > scale / hf**2:
        raise DerivativeBlowupError(
            f"endpoint derivative {max(abs(out[0]), abs(out[n])):.3e} exceeds data scale / h^2"
        )
    mask = _endpoint_mask(kernel_1ma, P, n) & _row_masks(kernel_1ma, f.a, f.b, n)
    return GridFunction(f.a, f.b, n, out, mask)


def b_op(
    P: ParamSet,
    kernel_1ma: Kernel,
    f: GridFunction,
    f_prime: GridFunction | None = None,
    cfg: OperatorConfig = DEFAULT_CONFIG,
) -> GridFunction:
    """``B_P f = K_P^{1-alpha} f'``; ``f'`` by finite differences when not given."""
    _check_grid(P, f)
    if f_prime is None:
        f_prime = grid_derivative(f, cfg)
    elif not f.same_grid(f_prime):
        raise ValidationError("f_prime must live on the grid of f")
    out = k_op(P, kernel_1ma, f_prime, cfg)
    return out.with_values(out.values, out.mask & _endpoint_mask(kernel_1ma, P, f.n))


# ---------------------------------------------------------------------------
# B-op of a piecewise-linear function (used by the variational solver)


def slope_weights(P: ParamSet, kernel: Kernel, n: int, cfg: OperatorConfig = DEFAULT_CONFIG) -> np.ndarray:
    """``(n+1) x n`` matrix ``W`` with ``(W @ s)_i = K_P s (t_i)`` for a
    piecewise-constant ``s`` (one value per cell), integrated exactly against
    the kernel.  With ``s`` the cell slopes of ``y`` this is ``B_P`` of the
    piecewise-linear interpolant of ``y``.
    """
    a, b = P.a, P.b
    h = (b - a) / n
    rows = np.arange(n + 1)[:, None]
    cells = np.arange(n)[None, :]
    if kernel.is_difference:
        if kernel.moment is not None and cfg.quadrature is Quadrature.PRODUCT_TRAPEZOID:
            m = np.arange(1, n + 1, dtype=float)
            mass = np.concatenate([[0.0], np.asarray(kernel.moment((m - 1) * h, m * h), dtype=float)])
        else:
            mass, _, _ = _toeplitz_parts(kernel, h, n, cfg)
        left = np.where(cells < rows, mass[np.clip(rows - cells, 0, n)], 0.0)
        right = np.where(cells >= rows, mass[np.clip(cells - rows + 1, 0, n)], 0.0)
    else:
        x, w = _cell_rule(kernel, cfg)
        t_nodes = a + h * np.arange(n + 1)
        left = np.zeros((n + 1, n))
        right = np.zeros((n + 1, n))
        is_left = cells < rows
        for xg, wg in zip(x, w):
            tau = t_nodes[:-1] + xg * h
            with np.errstate(all="ignore"):
                kl = kernel.eval(t_nodes[:, None], np.where(is_left, tau[None, :], t_nodes[:, None] - h))
                kr = kernel.eval(np.where(~is_left, tau[None, :], t_nodes[:, None] + h), t_nodes[:, None])
            left += np.where(is_left, h * wg * kl, 0.0)
            right += np.where(~is_left, h * wg * kr, 0.0)
    W = P.p * left + P.q * right
    if not np.all(np.isfinite(W)):
        raise NumericalOverflowError(f"non-finite slope weights for kernel {kernel.name!r}")
    return W


def slope_matrix(n: int, h: float) -> np.ndarray:
    """``n x (n+1)`` matrix of cell slopes ``(y_{c+1} - y_c) / h``."""
    S = np.zeros((n, n + 1))
    idx = np.arange(n)
    S[idx, idx] = -1.0 / h
    S[idx, idx + 1] = 1.0 / h
    return S


# ---------------------------------------------------------------------------
# boundedness check


@dataclass(frozen=True)
class NormCheckResult:
    empirical_ratio_max: float
    l2_bound: float

    @property
    def within_bound(self) -> bool:
        return self.empirical_ratio_max <= self.l2_bound * 1.05


def _kernel_l2_squared(P: ParamSet, kernel: Kernel, n: int) -> float:
    """Squared L2 norm of ``G(t,tau) = p k(t,tau) [tau < t] + q k(tau,t) [tau >= t]``."""
    from scipy import integrate

    length = P.b - P.a
    if kernel.is_difference:
        def integrand(s: float) -> float:
            return (length - s) * float(kernel.profile(s)) ** 2

        cuts = [length * 10.0 ** (-2 * k) for k in range(1, 6)]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            partial = np.array([integrate.quad(integrand, c, length, limit=200)[0] for c in cuts])
            inc = np.diff(partial)
            # the integrand is nonnegative: a shrinking tail sum signals quadrature breakdown
            if np.any(inc < 0) or (inc[-1] > 1e-10 * max(partial[-1], 1.0) and np.all(inc[1:] >= 0.99 * inc[:-1])):
                raise NotSquareIntegrableError(f"kernel {kernel.name!r} is not square integrable")
            total = integrate.quad(integrand, 0.0, length, limit=500)[0]
        return (P.p**2 + P.q**2) * total

    # offset-diagonal midpoint sums at increasing resolution
    estimates = []
    for m in (n, 2 * n, 4 * n):
        h = length / m
        mid = P.a + (np.arange(m) + 0.5) * h
        T, TAU = np.meshgrid(mid, mid, indexing="ij")
        with np.errstate(all="ignore"):
            below = np.where(TAU < T, P.p * kernel.eval(T, TAU), 0.0)
            above = np.where(TAU >= T, P.q * kernel.eval(np.maximum(TAU, T), np.minimum(TAU, T)), 0.0)
        estimates.append(float(np.sum((below + above) ** 2) * h * h))
    if not all(math.isfinite(e) for e in estimates) or (
        estimates[2] - estimates[1] > 0.5 * (estimates[1] - estimates[0]) > 1e-12 * estimates[0]
    ):
        raise NotSquareIntegrableError(
            f"double integral of |k|^2 does not settle for kernel {kernel.name!r}: {estimates}"
        )
    return estimates[-1]


def _discrete_l2(values: np.ndarray, h: float) -> float:
    w = np.full(values.size, h)
    w[0] = w[-1] = 0.5 * h
    return float(np.sqrt(np.sum(w * values**2)))


def operator_norm_check(
    P: ParamSet,
    kernel: Kernel,
    trials: int = 20,
    n: int = 128,
    cfg: OperatorConfig | None = None,
    seed: int = 0,
) -> NormCheckResult:
    """Compare ``||K_P f|| / ||f||`` over random ``f`` with the Hilbert-Schmidt bound."""
    cfg = cfg or OperatorConfig.for_kernel(kernel)
    bound = math.sqrt(_kernel_l2_squared(P, kernel, n))
    if P.p == 0.0 and P.q == 0.0:
        return NormCheckResult(0.0, bound)
    rng = np.random.default_rng(seed)
    K = k_matrix(P, kernel, n, cfg)
    h = (P.b - P.a) / n
    worst = 0.0
    for trial in range(trials):
        if trial == 0:
            f = np.ones(n + 1)
        elif trial % 2:
            f = rng.standard_normal(n + 1)
        else:
            f = np.cumsum(rng.standard_normal(n + 1))
        ratio = _discrete_l2(K @ f, h) / _discrete_l2(f, h)
        worst = max(worst, ratio)
    return NormCheckResult(worst, bound)
