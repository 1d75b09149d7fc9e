"""Volterra equations with difference kernels, and the two extremal families.

``resolvent`` marches the second-kind equation

    k(t) + int_0^t k(t - tau) r(tau) dtau = 1,

whose Laplace transform is ``r~ = 1 / (s k~) - 1``.  With ``r`` in hand the
solution of ``int_0^t k(t - tau) y(tau) dtau = (xi - 1) t`` is
``y = (xi - 1) / k(0) * (1 + int_0^t r)`` (see :func:`reconstruct`).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from genfrac import specfun
from genfrac.errors import (
    InconsistentDataError,
    NonInvertibleError,
    NumericalOverflowError,
    ValidationError,
)
from genfrac.kernels import Kernel
from genfrac.operators import DEFAULT_CONFIG, GridFunction, _left_right_rows


@dataclass(frozen=True)
class ResolventSpec:
    kernel: Kernel
    horizon: float
    n: int

    def __post_init__(self) -> None:
        if not self.kernel.is_difference:
            raise ValidationError("the resolvent needs a difference kernel")
        if self.kernel.singular_at_diagonal:
            raise ValidationError(f"kernel {self.kernel.name!r} has no finite value at 0")
        if not self.horizon > 0:
            raise ValidationError(f"horizon must be positive, got {self.horizon}")
        if self.n < 2:
            raise ValidationError(f"n must be at least 2, got {self.n}")

    @property
    def k0(self) -> float:
        return self.kernel.at_zero()

    @property
    def normalized(self) -> bool:
        """Whether ``k(0) = 1`` already holds (otherwise the kernel is rescaled)."""
        return math.isclose(self.k0, 1.0, rel_tol=1e-12)


def _k0(kernel: Kernel) -> float:
    k0 = kernel.at_zero()
    if not math.isfinite(k0) or k0 == 0.0:
        raise NonInvertibleError(f"kernel {kernel.name!r} has k(0) = {k0}; the equation is not invertible")
    return k0


def _slope_at_zero(kernel: Kernel, scale: float) -> float:
    d = 1e-5 * scale
    k = np.asarray(kernel.profile(np.array([0.0, d, 2 * d])), dtype=float)
    return float((-3 * k[0] + 4 * k[1] - k[2]) / (2 * d))


def resolvent(spec: ResolventSpec) -> GridFunction:
    """Resolvent ``r`` on ``[0, horizon]`` by product-trapezoid marching.

    Kernels with ``k(0) != 1`` are divided by ``k(0)`` first (with a warning);
    :func:`reconstruct` undoes the scaling.
    """
    kernel, n = spec.kernel, spec.n
    k0 = _k0(kernel)
    if not spec.normalized:
        warnings.warn(
            f"kernel {kernel.name!r} has k(0) = {k0:g}; computing the resolvent of k / k(0)",
            stacklevel=2,
        )
    T = spec.horizon
    h = T / n
    t = np.linspace(0.0, T, n + 1)
    L, _ = _left_right_rows(kernel, 0.0, T, n, np.arange(n + 1), DEFAULT_CONFIG)
    L = L / k0
    k = np.asarray(kernel.profile(t), dtype=float) / k0

    r = np.zeros(n + 1)
    # differentiating the equation at t = 0 gives k'(0) + k(0) r(0) = 0
    r[0] = -_slope_at_zero(kernel, h) / k0
    for i in range(1, n + 1):
        rest = L[i, :i] @ r[:i]
        r[i] = (1.0 - k[i] - rest) / L[i, i]
    if not np.all(np.isfinite(r)):
        raise NumericalOverflowError(f"resolvent marching for {kernel.name!r} diverged")
    return GridFunction(0.0, T, n, r)


def cumulative_trapezoid(f: GridFunction) -> np.ndarray:
    """``int_a^{t_i} f`` at every node."""
    return np.concatenate([[0.0], integrate.cumulative_trapezoid(f.values, dx=f.h)])


def reconstruct(spec: ResolventSpec, r: GridFunction, xi: float) -> GridFunction:
    """``y = (xi - 1) / k(0) * (1 + int_0^t r)``, the solution of ``K y = (xi - 1) t``."""
    return r.with_values((xi - 1.0) / _k0(spec.kernel) * (1.0 + cumulative_trapezoid(r)))


def volterra_first_kind(kernel: Kernel, rhs: GridFunction, atol: float = 1e-10) -> GridFunction:
    """Solve ``int_a^t k(t - tau) y(tau) dtau = rhs(t)``.

    Unknowns live at cell midpoints, ``y_{c+1/2}``, and row ``i`` of the
    lower-triangular system uses weights ``h k(t_i - t_{c+1/2})``.  Nodal values
    are averages of neighbouring midpoints, extrapolated linearly at the ends.
    """
    if not kernel.is_difference:
        raise ValidationError("volterra_first_kind needs a difference kernel")
    if kernel.singular_at_diagonal:
        raise ValidationError(f"kernel {kernel.name!r} is singular at 0 (Abel equations are not supported)")
    _k0(kernel)
    n, h = rhs.n, rhs.h
    if n < 2:
        raise ValidationError("need at least two cells")
    scale = max(1.0, float(np.max(np.abs(rhs.values))))
    if abs(rhs.values[0]) > atol * scale:
        raise InconsistentDataError(
            f"a first-kind equation needs rhs(a) = 0, got {rhs.values[0]:.3e}"
        )
    # weights depend on i - c only
    lags = (np.arange(n) + 0.5) * h
    w = h * np.asarray(kernel.profile(lags), dtype=float)
    if w[0] == 0.0:
        raise NonInvertibleError(f"kernel {kernel.name!r} vanishes at h/2")

    mid = np.zeros(n)
    for i in range(1, n + 1):
        # row i: sum_{c < i} w[i-1-c] mid[c] = rhs[i]
        rest = w[1:i][::-1] @ mid[: i - 1] if i > 1 else 0.0
        mid[i - 1] = (rhs.values[i] - rest) / w[0]
    if not np.all(np.isfinite(mid)):
        raise NumericalOverflowError("first-kind marching diverged")

    y = np.empty(n + 1)
    y[1:-1] = 0.5 * (mid[:-1] + mid[1:])
    y[0] = 1.5 * mid[0] - 0.5 * mid[1]
    y[-1] = 1.5 * mid[-1] - 0.5 * mid[-2]
    return rhs.with_values(y, np.ones(n + 1, dtype=bool))


# ---------------------------------------------------------------------------
# closed forms


def example2_closed_form(kernel_name: str, alpha: float, xi: float, t: np.ndarray) -> np.ndarray:
    """Extremals for the exponential and cosine kernels."""
    t = np.asarray(t, dtype=float)
    if kernel_name == "exponential":
        return (xi - 1.0) * (1.0 - alpha * t)
    if kernel_name == "cosine":
        return (xi - 1.0) * (1.0 + 0.5 * alpha**2 * t**2)
    if kernel_name == "constant_one":
        return (xi - 1.0) * np.ones_like(t)
    raise ValidationError(
        f"no closed form for kernel {kernel_name!r}; valid: constant_one, cosine, exponential"
    )


def _ml_vec(alpha: float, beta: float, z: np.ndarray) -> np.ndarray:
    p = specfun.MLParams(alpha, beta)
    return np.array([specfun.mittag_leffler(p, float(x)) for x in np.ravel(z)]).reshape(np.shape(z))


def example1_derivative(alpha: float, xi: float, t: np.ndarray) -> np.ndarray:
    """``y'(t) = xi E_{1-alpha}(-t^(1-alpha))``."""
    t = np.asarray(t, dtype=float)
    return xi * _ml_vec(1.0 - alpha, 1.0, -(t ** (1.0 - alpha)))


def example1_series(alpha: float, xi: float, t: np.ndarray) -> np.ndarray:
    """``y(t) = xi t E_{1-alpha,2}(-t^(1-alpha))``, the integrated series."""
    t = np.asarray(t, dtype=float)
    return xi * t * _ml_vec(1.0 - alpha, 2.0, -(t ** (1.0 - alpha)))


def example1_extremal(alpha: float, xi: float, a: float = 0.0, b: float = 1.0, n: int = 256) -> GridFunction:
    """``y(t) = int_0^t E_{1-alpha}(-(t - tau)^(1-alpha)) xi dtau`` by adaptive quadrature.

    The integrand depends on ``t - tau`` only, so the integral over each cell is
    computed once and accumulated.
    """
    if not 0.0 < alpha < 1.0:
        raise ValidationError(f"alpha must lie in (0, 1), got {alpha}")
    if a != 0.0:
        raise ValidationError("the extremal is defined on [0, b]")
    grid = GridFunction.zeros(a, b, n)
    if xi == 0.0:
        return grid
    p = specfun.MLParams(1.0 - alpha, 1.0)

    def integrand(s: float) -> float:
        return specfun.mittag_leffler(p, -(s ** (1.0 - alpha)))

    t = grid.t
    cells = np.empty(n)
    for c in range(n):
        val, err = integrate.quad(integrand, t[c], t[c + 1], epsabs=1e-14, epsrel=1e-12)
        cells[c] = val
    return grid.with_values(xi * np.concatenate([[0.0], np.cumsum(cells)]))
