"""Higher-order product kernels, tensor projection bases and tuning rules."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from ._backend import get_backend
from .errors import ConfigError

KERNEL_ORDERS = (2, 4, 6)
BASIS_FAMILIES = ("cosine", "haar")

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def univariate_kernel(x, order: int = 2):
    """Univariate kernel ``G`` of the given order.

    Order 2 is the Epanechnikov kernel on [-1, 1].  Orders 4 and 6 are the
    Gaussian-based kernels ``(3 - x^2)/2 phi(x)`` and
    ``(15 - 10 x^2 + x^4)/8 phi(x)``, whose moments 1..order-1 vanish.
    """
    x = np.asarray(x, dtype=float)
    x2 = x * x
    if order == 2:
        return np.where(x2 < 1.0, 0.75 * (1.0 - x2), 0.0)
    phi = _INV_SQRT_2PI * np.exp(-0.5 * x2)
    if order == 4:
        return 0.5 * (3.0 - x2) * phi
    if order == 6:
        return 0.125 * (15.0 - 10.0 * x2 + x2 * x2) * phi
    raise ConfigError(f"kernel order must be one of {KERNEL_ORDERS}, got {order}")


def kernel_support(order: int) -> float:
    """Half-width of the support of ``G`` (``inf`` for the Gaussian-based orders)."""
    return 1.0 if order == 2 else math.inf


@dataclass(frozen=True, eq=False)
class ProductKernel:
    """``K_H(x) = prod_k G(x_k / h_k) / h_k`` with ``H = diag(bandwidth)``."""

    order: int
    bandwidth: np.ndarray

    def __post_init__(self):
        if self.order not in KERNEL_ORDERS:
            raise ConfigError(f"kernel order must be one of {KERNEL_ORDERS}, got {self.order}")
        h = np.atleast_1d(np.asarray(self.bandwidth, dtype=float)).copy()
        if h.ndim != 1 or not np.all(h > 0) or not np.all(np.isfinite(h)):
            raise ConfigError(f"bandwidths must be positive and finite, got {h}")
        h.setflags(write=False)
        object.__setattr__(self, "bandwidth", h)

    def bandwidths(self, d: int) -> np.ndarray:
        """Bandwidth vector broadcast to ``d`` dimensions."""
        h = self.bandwidth
        if h.shape[0] == 1:
            return np.full(d, h[0])
        if h.shape[0] != d:
            raise ConfigError(f"{h.shape[0]} bandwidths given for dimension {d}")
        return h.copy()

    def __call__(self, diff) -> np.ndarray:
        """Evaluate ``K_H`` at difference vectors of shape (..., d)."""
        diff = np.asarray(diff, dtype=float)
        h = self.bandwidths(diff.shape[-1])
        return np.prod(univariate_kernel(diff / h, self.order), axis=-1) / np.prod(h)


def kernel_eval(k: ProductKernel, u, v) -> float:
    u = np.atleast_1d(np.asarray(u, dtype=float))
    v = np.atleast_1d(np.asarray(v, dtype=float))
    if u.shape != v.shape:
        raise ValueError(f"dimension mismatch: {u.shape} vs {v.shape}")
    return float(k(u - v))


def multi_indices(count: int, d: int) -> np.ndarray:
    """First ``count`` frequency multi-indices in block order.

    Block ``m`` holds every index in ``{0..m-1}^d`` whose largest component
    is ``m - 1``, in lexicographic order, so ``count = m**d`` selects the
    full grid ``{0..m-1}^d``.
    """
    if count < 1:
        raise ConfigError(f"basis count must be >= 1, got {count}")
    m = 1
    while m**d < count:
        m += 1
    grid = np.indices((m,) * d).reshape(d, -1).T
    order = np.argsort(grid.max(axis=1), kind="stable")
    return np.ascontiguousarray(grid[order[:count]], dtype=np.int64)


@dataclass(frozen=True)
class ProjectionBasis:
    """Tensor-product orthonormal basis on [0, 1]^d.

    ``cosine``: 1-D functions ``1, sqrt(2) cos(pi m x)``.
    ``haar``: 1-D functions ``1`` then Haar wavelets ordered by level and shift.
    """

    count: int
    d: int
    family: str = "cosine"

    def __post_init__(self):
        if self.family not in BASIS_FAMILIES:
            raise ConfigError(f"basis family must be one of {BASIS_FAMILIES}, got {self.family!r}")
        if int(self.count) != self.count or self.count < 1:
            raise ConfigError(f"basis count must be a positive integer, got {self.count}")
        if self.d < 1:
            raise ConfigError("dimension must be >= 1")

    @property
    def family_code(self) -> int:
        return BASIS_FAMILIES.index(self.family)

    @cached_property
    def index(self) -> np.ndarray:
        return multi_indices(int(self.count), self.d)

    def evaluate(self, u, backend=None) -> np.ndarray:
        """Basis values ``psi_l(u_i)`` as an (n, count) matrix."""
        u = np.ascontiguousarray(np.atleast_2d(np.asarray(u, dtype=float)))
        if u.shape[1] != self.d:
            raise ValueError(f"points have dimension {u.shape[1]}, basis has {self.d}")
        return get_backend(backend).basis_matrix(u, self.index, self.family_code)


def projection_kernel_eval(b: ProjectionBasis, u, v) -> float:
    """``K_L(u, v) = sum_l psi_l(u) psi_l(v)``."""
    pu = b.evaluate(np.atleast_1d(u)[None, :])[0]
    pv = b.evaluate(np.atleast_1d(v)[None, :])[0]
    return float(math.fsum(pu * pv))


def _rate_exponent(d: int, alpha: float, beta: float) -> float:
    if d < 1 or alpha <= 0 or beta <= 0:
        raise ConfigError(f"need d >= 1 and alpha, beta > 0 (got d={d}, alpha={alpha}, beta={beta})")
    return d + 2.0 * (alpha + beta)


def default_bandwidth(n: int, d: int, alpha: float = 1.0, beta: float = 1.0, c: float = 1.0) -> float:
    """``h = c * n^(-2 / (d + 2 (alpha + beta)))``."""
    if n < 2 or c <= 0:
        raise ConfigError(f"need n >= 2 and c > 0 (got n={n}, c={c})")
    return c * n ** (-2.0 / _rate_exponent(d, alpha, beta))


def default_basis_count(n: int, d: int, alpha: float = 1.0, beta: float = 1.0, c: float = 1.0) -> int:
    """``L = max(1, round(c * n^(2 d / (d + 2 (alpha + beta)))))``."""
    if n < 2 or c <= 0:
        raise ConfigError(f"need n >= 2 and c > 0 (got n={n}, c={c})")
    return max(1, int(round(c * n ** (2.0 * d / _rate_exponent(d, alpha, beta)))))
