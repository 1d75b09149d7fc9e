"""Kernels of the generalized fractional operators.

A kernel is a function ``k(t, tau)`` attached to an order ``alpha`` in (0, 1).
Difference kernels depend on ``t - tau`` only and are stored through their
one-variable profile ``k(s)``; singular difference kernels must carry
closed-form cell moments so that product quadrature can integrate through the
singularity at ``s = 0``.
"""

from __future__ import annotations

import enum
import functools
import math
from collections.abc import Callable, Mapping
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy import integrate

from genfrac import specfun
from genfrac.errors import (
    ConfigurationError,
    InvalidDomainError,
    NotIntegrableError,
    OutOfDomainError,
    QuadratureError,
    SchemaError,
    ValidationError,
)
from genfrac.expr import Expression

ArrayLike = Any
MomentFn = Callable[[ArrayLike, ArrayLike], np.ndarray]


class KernelKind(enum.Enum):
    GENERAL = "general"
    DIFFERENCE = "difference"


@dataclass(frozen=True)
class Kernel:
    """An immutable kernel ``k_alpha(t, tau)``.

    For ``kind == DIFFERENCE`` the callable ``func`` is the profile ``k(s)``;
    for ``GENERAL`` it is ``k(t, tau)``.  Optional moments, defined for
    ``0 <= s1 < s2``, are

    * ``moment(s1, s2)``        = integral of ``k(s)`` over ``[s1, s2]``
    * ``first_moment(s1, s2)``  = integral of ``s k(s)`` over ``[s1, s2]``

    ``singular_rows`` lists the values of ``t`` whose row integrals
    ``int k(t, tau) dtau`` diverge (a point singularity off the diagonal).
    """

    order: float
    func: Callable[..., ArrayLike]
    kind: KernelKind = KernelKind.DIFFERENCE
    singular_at_diagonal: bool = False
    moment: MomentFn | None = None
    first_moment: MomentFn | None = None
    singular_rows: tuple[float, ...] = ()
    name: str = "custom"
    params: Mapping[str, float] = field(default_factory=dict, compare=False, hash=False)

    def __post_init__(self) -> None:
        if not 0.0 < self.order < 1.0:
            raise ValidationError(f"kernel order must lie in (0, 1), got {self.order}")

    @property
    def is_difference(self) -> bool:
        return self.kind is KernelKind.DIFFERENCE

    def profile(self, s: ArrayLike) -> np.ndarray | float:
        """The one-variable profile ``k(s)`` of a difference kernel."""
        if not self.is_difference:
            raise ConfigurationError(f"kernel {self.name!r} is not a difference kernel")
        s_arr = np.asarray(s, dtype=float)
        if self.singular_at_diagonal and np.any(s_arr == 0.0):
            raise OutOfDomainError(f"kernel {self.name!r} is singular at s = 0")
        with np.errstate(all="ignore"):
            out = self.func(s_arr)
        if np.ndim(out) == 0:
            return float(out)
        return np.asarray(out, dtype=float)

    def __call__(self, t: ArrayLike, tau: ArrayLike) -> np.ndarray | float:
        return self.eval(t, tau)

    def eval(self, t: ArrayLike, tau: ArrayLike) -> np.ndarray | float:
        t_arr = np.asarray(t, dtype=float)
        tau_arr = np.asarray(tau, dtype=float)
        if self.is_difference:
            return self.profile(t_arr - tau_arr)
        if self.singular_at_diagonal and np.any(t_arr == tau_arr):
            raise OutOfDomainError(f"kernel {self.name!r} is singular on the diagonal")
        with np.errstate(all="ignore"):
            out = self.func(t_arr, tau_arr)
        if np.ndim(out) == 0:
            return float(out)
        return np.asarray(out, dtype=float)

    def at_zero(self) -> float:
        """``k(0)`` of a non-singular difference kernel."""
        return float(self.profile(0.0))


# ---------------------------------------------------------------------------
# built-in families


@functools.lru_cache(maxsize=64)
def riemann_liouville(alpha: float) -> Kernel:
    r"""Power kernel ``s^(alpha-1) / Gamma(alpha)`` (zero for ``s < 0``)."""
    alpha = float(alpha)
    g = specfun.gamma(alpha)
    g1 = specfun.gamma(alpha + 1.0)

    def k(s):
        return np.where(s > 0, np.abs(s) ** (alpha - 1.0), 0.0) / g

    def moment(s1, s2):
        s1, s2 = np.asarray(s1, dtype=float), np.asarray(s2, dtype=float)
        return (s2**alpha - s1**alpha) / g1

    def first_moment(s1, s2):
        s1, s2 = np.asarray(s1, dtype=float), np.asarray(s2, dtype=float)
        return (s2 ** (alpha + 1.0) - s1 ** (alpha + 1.0)) / ((alpha + 1.0) * g)

    return Kernel(
        order=alpha,
        func=k,
        singular_at_diagonal=True,
        moment=moment,
        first_moment=first_moment,
        name="riemann_liouville",
        params={"alpha": alpha},
    )


@functools.lru_cache(maxsize=64)
def exponential(alpha: float) -> Kernel:
    """``exp(alpha * s)``."""
    alpha = float(alpha)

    def moment(s1, s2):
        s1, s2 = np.asarray(s1, dtype=float), np.asarray(s2, dtype=float)
        return np.exp(alpha * s1) * np.expm1(alpha * (s2 - s1)) / alpha

    return Kernel(
        order=alpha,
        func=lambda s: np.exp(alpha * s),
        moment=moment,
        name="exponential",
        params={"alpha": alpha},
    )


@functools.lru_cache(maxsize=64)
def cosine(alpha: float) -> Kernel:
    """``cos(alpha * s)``."""
    alpha = float(alpha)

    def moment(s1, s2):
        s1, s2 = np.asarray(s1, dtype=float), np.asarray(s2, dtype=float)
        # sin(a s2) - sin(a s1) = 2 cos(a (s1+s2)/2) sin(a (s2-s1)/2)
        return 2.0 * np.cos(0.5 * alpha * (s1 + s2)) * np.sin(0.5 * alpha * (s2 - s1)) / alpha

    return Kernel(
        order=alpha,
        func=lambda s: np.cos(alpha * s),
        moment=moment,
        name="cosine",
        params={"alpha": alpha},
    )


@functools.lru_cache(maxsize=64)
def constant_one(alpha: float = 0.5) -> Kernel:
    """``k = 1``; the order is nominal."""

    def moment(s1, s2):
        return np.asarray(s2, dtype=float) - np.asarray(s1, dtype=float)

    def first_moment(s1, s2):
        s1, s2 = np.asarray(s1, dtype=float), np.asarray(s2, dtype=float)
        return 0.5 * (s2 - s1) * (s2 + s1)

    return Kernel(
        order=float(alpha),
        func=lambda s: np.ones_like(np.asarray(s, dtype=float)),
        moment=moment,
        first_moment=first_moment,
        name="constant_one",
        params={},
    )


@functools.lru_cache(maxsize=64)
def counterexample(alpha: float = 0.5) -> Kernel:
    """``(t^2 - tau^2) / (t^2 + tau^2)^2``: not square integrable near the origin."""

    def k(t, tau):
        t2, tau2 = t * t, tau * tau
        return (t2 - tau2) / (t2 + tau2) ** 2

    return Kernel(
        order=float(alpha),
        func=k,
        kind=KernelKind.GENERAL,
        singular_rows=(0.0,),
        name="counterexample",
        params={},
    )


@functools.lru_cache(maxsize=64)
def product_kernel(alpha: float = 0.5) -> Kernel:
    """``k(t, tau) = t * tau``, a general kernel that is not separable."""
    return Kernel(
        order=float(alpha),
        func=lambda t, tau: t * tau,
        kind=KernelKind.GENERAL,
        name="product",
        params={},
    )


BUILTIN_KERNELS: dict[str, Callable[..., Kernel]] = {
    "riemann_liouville": riemann_liouville,
    "exponential": exponential,
    "cosine": cosine,
    "constant_one": constant_one,
    "counterexample": counterexample,
    "product": product_kernel,
}


def expression_kernel(
    source: str,
    alpha: float,
    kind: KernelKind | str = KernelKind.DIFFERENCE,
    singular_at_diagonal: bool = False,
) -> Kernel:
    """Kernel given by an expression in ``t``, ``tau``, ``s`` and ``alpha``.

    Difference kernels are evaluated with ``s`` only; ``t`` and ``tau`` are
    then unavailable.
    """
    kind = KernelKind(kind) if isinstance(kind, str) else kind
    alpha = float(alpha)
    if kind is KernelKind.DIFFERENCE:
        ex = Expression(source, ("s", "alpha"))

        def func(s):
            return ex(s=s, alpha=alpha)

    else:
        ex = Expression(source, ("t", "tau", "s", "alpha"))

        def func(t, tau):
            return ex(t=t, tau=tau, s=t - tau, alpha=alpha)

    return Kernel(
        order=alpha,
        func=func,
        kind=kind,
        singular_at_diagonal=singular_at_diagonal,
        name=f"expr:{source}",
        params={"alpha": alpha},
    )


def kernel_from_config(cfg: Mapping[str, Any]) -> Kernel:
    """Build a kernel from ``{"name": ..., "alpha": ...}`` or an expression spec.

    Expression kernels use ``{"name": "expression", "expr": "exp(-s)",
    "alpha": 0.5, "kind": "difference", "singular": false}``.
    """
    if "kernel" in cfg and isinstance(cfg["kernel"], Mapping):
        cfg = cfg["kernel"]
    name = cfg.get("name")
    if name == "expression":
        if "expr" not in cfg:
            raise SchemaError("expression kernel needs an 'expr' field")
        return expression_kernel(
            cfg["expr"],
            cfg.get("alpha", 0.5),
            cfg.get("kind", "difference"),
            bool(cfg.get("singular", False)),
        )
    if name not in BUILTIN_KERNELS:
        valid = sorted(BUILTIN_KERNELS) + ["expression"]
        raise SchemaError(f"unknown kernel {name!r}; valid names: {valid}")
    factory = BUILTIN_KERNELS[name]
    if name in ("riemann_liouville", "exponential", "cosine"):
        if "alpha" not in cfg:
            raise SchemaError(f"kernel {name!r} requires 'alpha'")
        return factory(float(cfg["alpha"]))
    return factory(float(cfg.get("alpha", 0.5)))


# ---------------------------------------------------------------------------
# kernel-level checks

# 8-point Gauss-Legendre rule on [0, 1]
_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)
GL_NODES = 0.5 * (_GL_X + 1.0)
GL_WEIGHTS = 0.5 * _GL_W


@dataclass(frozen=True)
class SeparabilityResult:
    holds: bool
    max_mixed_difference: float


def check_separability(
    kernel: Kernel, a: float, b: float, n: int = 64, tol: float = 1e-6
) -> SeparabilityResult:
    """Test whether ``S(t,tau) = int_a^t k(th,tau) dth + int_a^tau k(t,th) dth``
    splits as ``g(t) + f(tau)``.

    ``S`` is tabulated on an ``n x n`` uniform grid with Gauss-Legendre
    quadrature on each grid cell (nodes strictly inside cells, so grid points,
    where difference kernels are singular, are never evaluated).  The maximum
    normalised mixed second difference of ``S`` is zero exactly when ``S`` is
    separable.
    """
    if not b > a:
        raise InvalidDomainError(f"need b > a, got [{a}, {b}]")
    if n < 8:
        raise ValidationError(f"n must be >= 8, got {n}")
    grid = np.linspace(a, b, n)
    h = grid[1] - grid[0]
    # quadrature points of every cell: shape (n-1, 8)
    theta = grid[:-1, None] + h * GL_NODES[None, :]
    w = h * GL_WEIGHTS

    # first[c, j] = int over cell c of k(theta, tau_j) dtheta
    first = np.einsum("cjg,g->cj", _eval(kernel, theta[:, None, :], grid[None, :, None]), w)
    # second[i, c] = int over cell c of k(t_i, theta) dtheta
    second = np.einsum("icg,g->ic", _eval(kernel, grid[:, None, None], theta[None, :, :]), w)
    if not (np.all(np.isfinite(first)) and np.all(np.isfinite(second))):
        raise QuadratureError(f"kernel {kernel.name!r} is not integrable at resolution n={n}")

    zero_row = np.zeros((1, n))
    s_first = np.vstack([zero_row, np.cumsum(first, axis=0)])  # [i, j]
    s_second = np.hstack([zero_row.T, np.cumsum(second, axis=1)])  # [i, j]
    S = s_first + s_second
    mixed = (S[1:, 1:] - S[1:, :-1] - S[:-1, 1:] + S[:-1, :-1]) / h**2
    worst = float(np.max(np.abs(mixed)))
    return SeparabilityResult(holds=worst <= tol, max_mixed_difference=worst)


def _eval(kernel: Kernel, t, tau) -> np.ndarray:
    t, tau = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(tau, dtype=float))
    return np.asarray(kernel.eval(t, tau), dtype=float)


def l1_norm_estimate(kernel: Kernel, length: float) -> float:
    """``int_0^length |k(s)| ds`` for a difference kernel."""
    if not kernel.is_difference:
        raise ConfigurationError("l1_norm_estimate needs a difference kernel")
    if not length > 0:
        raise InvalidDomainError(f"length must be positive, got {length}")

    probe = np.linspace(0.0, length, 1025)[1:]
    values = np.asarray(kernel.profile(probe), dtype=float)
    if not np.all(np.isfinite(values)):
        raise NotIntegrableError(f"kernel {kernel.name!r} is not finite on (0, {length}]")
    sign_constant = bool(np.all(values >= 0) or np.all(values <= 0))
    if kernel.moment is not None and sign_constant:
        return float(abs(kernel.moment(0.0, length)))

    def integrand(s: float) -> float:
        return abs(float(kernel.profile(s)))

    # successive cut-offs near the singular endpoint s = 0
    cuts = [length * 10.0 ** (-2 * k) for k in range(1, 8)]
    partial = [integrate.quad(integrand, cut, length, limit=200)[0] for cut in cuts]
    increments = np.abs(np.diff(partial))
    tail = increments[-3:]
    if tail[-1] > 1e-10 * max(abs(partial[-1]), 1.0) and np.all(tail[1:] >= 0.99 * tail[:-1]):
        raise NotIntegrableError(
            f"kernel {kernel.name!r}: integral of |k| near 0 does not settle "
            f"(increments {tail.tolist()})"
        )
    head = integrate.quad(integrand, 0.0, cuts[-1], limit=200)[0]
    value = partial[-1] + head
    if not math.isfinite(value):
        raise NotIntegrableError(f"kernel {kernel.name!r} is not integrable")
    return float(value)
