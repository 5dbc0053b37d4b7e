"""One-dimensional warm-up experiment: MSE of the kernel estimator against h.

Controls are uniform on [0, 1], so the transformer is the identity and the
kernel estimator reduces to a weighting estimator whose weights are a kernel
density estimate of the treated law.  Sweeping the bandwidth shows that the
MSE-optimal ``h`` for ``mu_CT`` can sit far below the density-optimal
``n^(-1/(1+2 beta))`` when the response surface is rough.

Two designs are available:

``step``
    ``mu_C`` is a random +/-1 step function on ``bins`` equal bins and the
    treated density ``f_T = (1 + a s_b) / Z`` carries the same steps.  Both
    have L2-smoothness 1/2, so the density-optimal bandwidth is ``~n^(-1/2)``.
``smooth``
    ``mu_C(x) = sin(2 pi x)`` and ``f_T(x) = 1 + a cos(pi x)``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import Dataset
from .density import ProductKernel
from .errors import ConfigError, NumericalError
from .estimator import estimate_kernel
from .sim import STREAM_CONTROL, STREAM_NOISE, STREAM_TREATED, replication_seed, rng

RESPONSES = ("step", "smooth")
STREAM_DESIGN = 5


@dataclass(frozen=True)
class WarmupDesign:
    n: int = 4000
    response: str = "step"
    bins: int = 32
    amplitude: float = 0.5
    noise: float = 1.0
    beta: float = 0.5
    design_seed: int = 0

    def __post_init__(self):
        if self.response not in RESPONSES:
            raise ConfigError(f"response must be one of {RESPONSES}, got {self.response!r}")
        if self.n < 4:
            raise ConfigError(f"n must be >= 4, got {self.n}")
        if self.bins < 1:
            raise ConfigError(f"bins must be >= 1, got {self.bins}")
        if not 0.0 <= self.amplitude < 1.0:
            raise ConfigError(f"amplitude must lie in [0, 1), got {self.amplitude}")
        if self.beta <= 0:
            raise ConfigError(f"beta must be positive, got {self.beta}")

    @property
    def n1(self) -> int:
        return self.n // 2

    @property
    def n0(self) -> int:
        return self.n - self.n1

    def signs(self) -> np.ndarray:
        """The +/-1 level of each bin (step design)."""
        g = rng(self.design_seed, STREAM_DESIGN)
        return np.where(g.random(self.bins) < 0.5, -1.0, 1.0)

    def mu_c(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.response == "smooth":
            return np.sin(2.0 * np.pi * x)
        b = np.minimum((x * self.bins).astype(np.int64), self.bins - 1)
        return self.signs()[b]

    def mu_ct(self) -> float:
        """Exact ``int mu_C f_T``."""
        a = self.amplitude
        if self.response == "smooth":
            # int sin(2 pi x)(1 + a cos(pi x)) dx = a * 4 / (3 pi)
            return a * 4.0 / (3.0 * math.pi)
        s = self.signs()
        mass = 1.0 + a * s
        return math.fsum(s * mass) / math.fsum(mass)

    def h_density(self) -> float:
        """Density-estimation-optimal rate ``n^(-1/(1+2 beta))``."""
        return self.n ** (-1.0 / (1.0 + 2.0 * self.beta))

    def sample_treated(self, seed: int) -> np.ndarray:
        g = rng(seed, STREAM_TREATED)
        a = self.amplitude
        if self.response == "smooth":
            # rejection from U[0, 1] against 1 + a cos(pi x) <= 1 + a
            out = np.empty(0)
            while out.size < self.n1:
                x = g.random(2 * self.n1)
                keep = g.random(x.size) * (1.0 + a) <= 1.0 + a * np.cos(np.pi * x)
                out = np.concatenate([out, x[keep]])
            return out[: self.n1]
        s = self.signs()
        p = (1.0 + a * s) / math.fsum(1.0 + a * s)
        b = g.choice(self.bins, size=self.n1, p=p)
        return (b + g.random(self.n1)) / self.bins

    def draw(self, seed: int) -> Dataset:
        xt = self.sample_treated(seed)
        xc = rng(seed, STREAM_CONTROL).random(self.n0)
        x = np.concatenate([xt, xc])
        eps = rng(seed, STREAM_NOISE).standard_normal(self.n)
        y = self.mu_c(x) + self.noise * eps
        z = np.r_[np.ones(self.n1, dtype=np.int8), np.zeros(self.n0, dtype=np.int8)]
        return Dataset(x, z, y)


@dataclass
class WarmupResult:
    design: WarmupDesign
    bandwidths: np.ndarray
    mse: np.ndarray
    bias: np.ndarray
    variance: np.ndarray
    failures: np.ndarray
    reps: int

    @property
    def best_bandwidth(self) -> float:
        return float(self.bandwidths[int(np.nanargmin(self.mse))])

    def rows(self) -> list[dict]:
        hd = self.design.h_density()
        return [
            {
                "h": float(h),
                "mse": float(m),
                "bias": float(b),
                "variance": float(v),
                "failures": int(f),
                "reps": self.reps,
                "h_density": hd,
            }
            for h, m, b, v, f in zip(self.bandwidths, self.mse, self.bias, self.variance, self.failures)
        ]

    def write_csv(self, path) -> None:
        rows = self.rows()
        with Path(path).open("w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]))
            w.writeheader()
            w.writerows(rows)


def default_grid(n: int, size: int = 10) -> np.ndarray:
    """Log-spaced bandwidths from ``0.5/n`` to 0.2."""
    return np.geomspace(0.5 / n, 0.2, size)


def run_warmup(design: WarmupDesign, bandwidths=None, reps: int = 50, seed: int = 0, backend=None) -> WarmupResult:
    """Monte Carlo MSE of the order-2 kernel estimator on a bandwidth grid.

    Each replication draws one dataset and evaluates every bandwidth on it,
    so the curves are paired across ``h``.  Overlap failures are counted
    and excluded.
    """
    hs = default_grid(design.n) if bandwidths is None else np.atleast_1d(np.asarray(bandwidths, dtype=float))
    if hs.size == 0 or np.any(hs <= 0):
        raise ConfigError("bandwidth grid must be non-empty and positive")
    if reps < 1:
        raise ConfigError("reps must be >= 1")
    truth = design.mu_ct()
    err = np.full((reps, hs.size), np.nan)
    for r in range(reps):
        ds = design.draw(replication_seed(seed, r))
        for k, h in enumerate(hs):
            try:
                err[r, k] = estimate_kernel(ds, None, ProductKernel(2, h), backend=backend).mu_ct_hat - truth
            except NumericalError:
                pass
    fails = np.isnan(err).sum(axis=0)
    with np.errstate(invalid="ignore"):
        mse = np.array([np.mean(c[~np.isnan(c)] ** 2) if np.any(~np.isnan(c)) else np.nan for c in err.T])
        bias = np.array([np.mean(c[~np.isnan(c)]) if np.any(~np.isnan(c)) else np.nan for c in err.T])
    return WarmupResult(design, hs, mse, bias, mse - bias**2, fails, reps)
