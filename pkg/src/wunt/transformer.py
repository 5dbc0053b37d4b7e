"""Uniform transformers: maps pushing the control covariate law to ~U[0,1]^d.

Three constructions are provided:

* :class:`AdaptiveTransformer` -- hierarchical equal-count partition of the
  control sample, smoothed inside each cell (the "joint" transformer);
* :class:`MarginalTransformer` -- the one-dimensional adaptive construction
  applied coordinate by coordinate;
* :class:`PluginTransformer` -- coordinate-wise CDFs of a product-form density
  model, e.g. a smoothed CDF fitted on a large unlabeled control pool.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import ndtr

from ._backend import get_backend
from .data import Dataset, RescaleMap, fit_rescale
from .errors import ConfigError, DataError

# --------------------------------------------------------------------------
# smoothing kernel S on [-1/2, 1/2]


@dataclass(frozen=True)
class SmoothingKernel:
    """Density ``S`` on [-0.5, 0.5] vanishing at both ends, with CDF ``T_S``.

    ``quartic``: ``S(x) = 15/8 (1 - 4x^2)^2``.
    ``raised_cosine``: ``S(x) = 1 + cos(2 pi x)``.
    """

    name: str = "quartic"

    def __post_init__(self):
        if self.name not in ("quartic", "raised_cosine"):
            raise ConfigError(f"unknown smoothing kernel {self.name!r}")

    @property
    def code(self) -> int:
        return 0 if self.name == "quartic" else 1

    def density(self, x):
        x = np.asarray(x, dtype=float)
        inside = np.abs(x) <= 0.5
        if self.code == 0:
            val = 15.0 / 8.0 * (1.0 - 4.0 * x * x) ** 2
        else:
            val = 1.0 + np.cos(2.0 * np.pi * x)
        return np.where(inside, val, 0.0)

    def cdf(self, x):
        t = np.clip(np.asarray(x, dtype=float), -0.5, 0.5)
        if self.code == 0:
            u = 2.0 * t
            v = 0.5 + (15.0 / 16.0) * (u - 2.0 * u**3 / 3.0 + u**5 / 5.0)
        else:
            v = t + 0.5 + np.sin(2.0 * np.pi * t) / (2.0 * np.pi)
        return np.clip(v, 0.0, 1.0)


QUARTIC = SmoothingKernel("quartic")

# --------------------------------------------------------------------------
# hierarchical partition


def _cells_per_axis(n0: int, d: int) -> int:
    """Largest integer N with N**d <= n0."""
    n_cells = max(1, int(math.floor(n0 ** (1.0 / d))))
    while n_cells**d > n0:
        n_cells -= 1
    while (n_cells + 1) ** d <= n0:
        n_cells += 1
    return n_cells


@dataclass(frozen=True, eq=False)
class Partition:
    """Data-driven partition of [0, 1]^d into ``n_cells**d`` cubes.

    Level ``k`` holds ``n_cells**k`` nodes (one per prefix ``j_1..j_k``);
    node ``p`` of level ``k`` is row ``offsets[k] + p`` of ``breaks``, whose
    ``n_cells + 1`` entries split [0, 1] along coordinate ``k``.  Prefixes
    use 0-based mixed radix: ``p = ((j_1 * N) + j_2) * N + ...``.
    ``cell_assignment[i]`` is the 0-based cube index of control point ``i``.
    """

    n_cells: int
    d: int
    breaks: np.ndarray
    offsets: np.ndarray
    cell_assignment: np.ndarray

    def node_breaks(self, prefix: Sequence[int] = ()) -> np.ndarray:
        """Breakpoints of the node reached by the 0-based ``prefix``."""
        k = len(prefix)
        p = 0
        for j in prefix:
            p = p * self.n_cells + int(j)
        return self.breaks[self.offsets[k] + p]

    def occupancy(self) -> np.ndarray:
        """Number of control points per cube, shape ``(n_cells,) * d``."""
        counts = np.zeros((self.n_cells,) * self.d, dtype=np.int64)
        np.add.at(counts, tuple(self.cell_assignment.T), 1)
        return counts

    def to_tree(self) -> dict:
        """Nested dict (breakpoints per node) for JSON inspection."""

        def node(k, p):
            out = {"level": k + 1, "breaks": self.breaks[self.offsets[k] + p].tolist()}
            if k + 1 < self.d:
                out["children"] = [node(k + 1, p * self.n_cells + j) for j in range(self.n_cells)]
            return out

        return {"n_cells": self.n_cells, "d": self.d, "root": node(0, 0)}

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_tree(), **kw)


ALLOCATIONS = ("spread", "lowest")


def _child_index(rank, size, n_cells, allocation="spread"):
    """Child (0..n_cells-1) of the element ranked ``rank`` in a group of ``size``.

    Child sizes differ by at most one.  ``spread`` scatters the larger
    children evenly through the group (``floor((2r + 1) N / 2g)``);
    ``lowest`` gives them to the first children.
    """
    if allocation == "spread":
        return ((2 * rank + 1) * n_cells) // (2 * size)
    if allocation != "lowest":
        raise ConfigError(f"allocation must be one of {ALLOCATIONS}, got {allocation!r}")
    q, rem = np.divmod(size, n_cells)
    big = rem * (q + 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(rank < big, rank // np.maximum(q + 1, 1), rem + (rank - big) // np.maximum(q, 1))


def build_adaptive(control_points, allocation: str = "spread") -> Partition:
    """Build the equal-count hierarchical partition of ``control_points``.

    Points must lie in [0, 1]^d.  ``n_cells = floor(n0^(1/d))``; at each
    level every group is sorted along the next coordinate (ties broken by
    row index) and cut into ``n_cells`` parts whose sizes differ by at most
    one (see :func:`_child_index` for where the larger parts go).  Cuts sit
    halfway between the neighbouring points; the outer breakpoints are 0
    and 1.
    """
    x = np.asarray(control_points, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n0, d = x.shape
    if n0 < 1:
        raise DataError("cannot build a partition from zero points")
    if np.any(x < 0.0) or np.any(x > 1.0) or not np.all(np.isfinite(x)):
        raise DataError("control points must lie in [0, 1]^d")
    if allocation not in ALLOCATIONS:
        raise ConfigError(f"allocation must be one of {ALLOCATIONS}, got {allocation!r}")
    n_cells = _cells_per_axis(n0, d)
    level_sizes = [n_cells**k for k in range(d)]
    offsets = np.concatenate([[0], np.cumsum(level_sizes)[:-1]]).astype(np.int64)
    breaks = np.empty((sum(level_sizes), n_cells + 1))
    breaks[:, 0] = 0.0
    breaks[:, -1] = 1.0
    prefix = np.zeros(n0, dtype=np.int64)
    cells = np.empty((n0, d), dtype=np.int64)
    for k in range(d):
        # lexsort is stable, so ties keep row order
        order = np.lexsort((x[:, k], prefix))
        pre_sorted = prefix[order]
        vals = x[order, k]
        new_group = np.ones(n0, dtype=bool)
        new_group[1:] = pre_sorted[1:] != pre_sorted[:-1]
        starts = np.flatnonzero(new_group)
        sizes = np.diff(starts, append=n0)
        group = np.repeat(np.arange(starts.size), sizes)
        rank = np.arange(n0) - starts[group]
        child = _child_index(rank, sizes[group], n_cells, allocation)
        if n_cells > 1:
            # first element of each child j >= 1 and the last element of child j - 1
            changed = np.zeros(n0, dtype=bool)
            changed[1:] = child[1:] != child[:-1]
            first = np.flatnonzero((rank > 0) & changed)
            mids = 0.5 * (vals[first - 1] + vals[first])
            node_rows = offsets[k] + pre_sorted[first]
            breaks[node_rows, child[first]] = mids
        cells[order, k] = child
        prefix[order] = pre_sorted * n_cells + child
    # ties can produce zero-length intervals; nudge to keep breaks strictly increasing
    if np.any(np.diff(breaks, axis=1) <= 0.0):
        for c in range(1, n_cells + 1):
            prev = breaks[:, c - 1]
            bad = breaks[:, c] <= prev
            if np.any(bad):
                breaks[bad, c] = np.nextafter(prev[bad], np.inf)
    breaks.setflags(write=False)
    cells.setflags(write=False)
    offsets.setflags(write=False)
    return Partition(n_cells, d, breaks, offsets, cells)


def adaptive_transform(p: Partition, s: SmoothingKernel, x, backend=None) -> np.ndarray:
    """Evaluate the smoothed partition map at ``x`` (a point or an (n, d) array).

    In each cell interval ``I`` along coordinate ``k`` with index ``j``
    (0-based), the output coordinate is ``(j + T_S((x_k - mid(I)) / |I|)) / N``.
    Inputs outside [0, 1] are clamped.  Points on a breakpoint belong to the
    interval on its right.
    """
    return _partition_eval(p, s, x, backend)[0]


def _partition_eval(p: Partition, s: SmoothingKernel, x, backend=None):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    pts = np.ascontiguousarray(x.reshape(1, -1) if single else x)
    if pts.shape[1] != p.d:
        raise DataError(f"points have dimension {pts.shape[1]}, partition has {p.d}")
    out, cells = get_backend(backend).partition_transform(pts, p.breaks, p.offsets, p.n_cells, s.code)
    if single:
        return out[0], cells[0]
    return out, cells


# --------------------------------------------------------------------------
# transformers


class UniformTransformer:
    """Base class: ``transform(X)`` returns ``Phi(rescale(X))`` in [0, 1]^d."""

    kind = "abstract"
    rescale: RescaleMap | None = None

    @property
    def d(self) -> int:
        raise NotImplementedError

    def _map_unit(self, u, backend=None) -> np.ndarray:
        raise NotImplementedError

    def transform(self, x, backend=None) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[:, None] if self.d == 1 else x[None, :]
        if x.shape[1] != self.d:
            raise DataError(f"covariates have dimension {x.shape[1]}, transformer expects {self.d}")
        u = self.rescale.apply(x) if self.rescale is not None else x
        return self._map_unit(u, backend)

    __call__ = transform

    def describe(self) -> dict:
        return {"kind": self.kind, "d": self.d}


@dataclass(eq=False)
class IdentityTransformer(UniformTransformer):
    """``Phi = id``; for covariates that are already uniform on [0, 1]^d."""

    dim: int
    kind = "identity"

    @property
    def d(self) -> int:
        return self.dim

    def _map_unit(self, u, backend=None):
        return np.array(u, dtype=float)


@dataclass(eq=False)
class AdaptiveTransformer(UniformTransformer):
    partition: Partition
    kernel: SmoothingKernel = QUARTIC
    rescale: RescaleMap | None = None
    kind = "adaptive"

    @property
    def d(self) -> int:
        return self.partition.d

    def _map_unit(self, u, backend=None):
        return adaptive_transform(self.partition, self.kernel, u, backend)

    def describe(self):
        out = {"kind": self.kind, "d": self.d, "n_cells": self.partition.n_cells, "smoothing": self.kernel.name}
        if self.rescale is not None:
            out["rescale"] = self.rescale.to_dict()
        out["partition"] = self.partition.to_tree()
        return out


@dataclass(eq=False)
class MarginalTransformer(UniformTransformer):
    partitions: tuple
    kernel: SmoothingKernel = QUARTIC
    rescale: RescaleMap | None = None
    kind = "marginal"

    @property
    def d(self) -> int:
        return len(self.partitions)

    def _map_unit(self, u, backend=None):
        u = np.asarray(u, dtype=float)
        cols = [adaptive_transform(p, self.kernel, u[:, [k]], backend)[:, 0] for k, p in enumerate(self.partitions)]
        return np.column_stack(cols)

    def describe(self):
        out = {"kind": self.kind, "d": self.d, "smoothing": self.kernel.name}
        if self.rescale is not None:
            out["rescale"] = self.rescale.to_dict()
        out["breaks"] = [p.breaks[0].tolist() for p in self.partitions]
        return out


@dataclass(eq=False)
class PluginTransformer(UniformTransformer):
    """Coordinate-wise CDFs of a product-form density model."""

    model: object
    kind = "plugin"

    def __post_init__(self):
        if not callable(getattr(self.model, "cdf", None)):
            raise TypeError("density model must provide cdf(x) -> (n, d) array")

    @property
    def d(self) -> int:
        return self.model.d

    def _map_unit(self, u, backend=None):
        return np.clip(self.model.cdf(u), 0.0, 1.0)


# --------------------------------------------------------------------------
# product-form density models for the plug-in transformer


@dataclass(eq=False)
class KnownMarginals:
    """Product density from known 1-D distributions (anything with ``.cdf``)."""

    marginals: Sequence

    @property
    def d(self) -> int:
        return len(self.marginals)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.column_stack([m.cdf(x[:, k]) for k, m in enumerate(self.marginals)])


@dataclass(eq=False)
class MarginalKDE:
    """Per-coordinate Gaussian KDE; its CDF is an average of normal CDFs.

    Bandwidths default to Silverman's rule ``0.9 min(sd, IQR/1.34) n^(-1/5)``.
    """

    samples: np.ndarray
    bandwidth: np.ndarray = field(default=None)

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        if s.ndim == 1:
            s = s[:, None]
        if s.shape[0] < 2:
            raise DataError("need at least two samples to fit a KDE")
        self.samples = np.sort(s, axis=0)
        if self.bandwidth is None:
            self.bandwidth = silverman_bandwidth(self.samples)
        self.bandwidth = np.broadcast_to(np.asarray(self.bandwidth, dtype=float), (s.shape[1],)).copy()

    @property
    def d(self) -> int:
        return self.samples.shape[1]

    def cdf(self, x, block: int = 512):
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        out = np.empty(x.shape)
        for k in range(self.d):
            s = self.samples[:, k]
            h = self.bandwidth[k]
            for a in range(0, x.shape[0], block):
                z = (x[a : a + block, k, None] - s[None, :]) / h
                out[a : a + block, k] = ndtr(z).mean(axis=1)
        return out


def silverman_bandwidth(samples) -> np.ndarray:
    s = np.asarray(samples, dtype=float)
    if s.ndim == 1:
        s = s[:, None]
    n = s.shape[0]
    sd = s.std(axis=0, ddof=1)
    iqr = np.subtract(*np.percentile(s, [75, 25], axis=0))
    spread = np.where(iqr > 0, np.minimum(sd, iqr / 1.34), sd)
    return 0.9 * spread * n ** (-0.2)


# --------------------------------------------------------------------------
# constructors


def build_marginal(
    control_points,
    kernel: SmoothingKernel = QUARTIC,
    rescale: RescaleMap | None = None,
    allocation: str = "spread",
) -> MarginalTransformer:
    """Coordinate-wise adaptive transformer (``n_cells = n0`` along each axis).

    ``control_points`` are in original units; ``rescale`` defaults to the
    map fitted on the control points alone.
    """
    x = np.asarray(control_points, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] < 2:
        raise DataError("marginal transformer needs at least two control points")
    if rescale is None:
        rescale = fit_rescale(x, x)
    u = rescale.apply(x)
    parts = tuple(build_adaptive(u[:, [k]], allocation) for k in range(x.shape[1]))
    return MarginalTransformer(parts, kernel, rescale)


def build_joint(
    control_points,
    kernel: SmoothingKernel = QUARTIC,
    rescale: RescaleMap | None = None,
    allocation: str = "spread",
) -> AdaptiveTransformer:
    """Adaptive (joint) transformer on control points in original units."""
    x = np.asarray(control_points, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if rescale is None:
        rescale = fit_rescale(x, x)
    return AdaptiveTransformer(build_adaptive(rescale.apply(x), allocation), kernel, rescale)


def build_rosenblatt_plugin(density_model) -> PluginTransformer:
    """Plug-in transformer from a product-form density model with ``cdf``."""
    return PluginTransformer(density_model)


TRANSFORMER_KINDS = ("joint", "marginal", "plugin", "identity")


def fit_transformer(
    kind: str,
    ds: Dataset,
    extra_controls=None,
    margin: float = 0.01,
    kernel: SmoothingKernel = QUARTIC,
    allocation: str = "spread",
) -> UniformTransformer:
    """Build a transformer for ``ds`` from its control rows (or ``extra_controls``).

    The rescale is fitted on the union of every covariate row involved, so
    no treated point falls outside the partition's domain.
    """
    if kind == "identity":
        return IdentityTransformer(ds.d)
    xc = ds.covariates[ds.control] if extra_controls is None else np.asarray(extra_controls, dtype=float)
    if xc.ndim == 1:
        xc = xc[:, None]
    if kind == "plugin":
        return build_rosenblatt_plugin(MarginalKDE(xc))
    pool = ds.covariates if extra_controls is None else np.vstack([ds.covariates, xc])
    rescale = fit_rescale(pool, pool, margin)
    if kind == "joint":
        return build_joint(xc, kernel, rescale, allocation)
    if kind == "marginal":
        return build_marginal(xc, kernel, rescale, allocation)
    raise ConfigError(f"unknown transformer kind {kind!r}; expected one of {TRANSFORMER_KINDS}")


def transform_dataset(t: UniformTransformer, ds: Dataset, backend=None) -> Dataset:
    """Replace the covariates of ``ds`` by ``Phi(rescale(X))``."""
    if ds.d != t.d:
        raise DataError(f"dataset has {ds.d} covariates, transformer expects {t.d}")
    return ds.with_covariates(t.transform(ds.covariates, backend))
