"""Dataset container, CSV ingestion and covariate rescaling."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigError, DataError, DegenerateCovariateError


def _frozen(a, dtype=float):
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Dataset:
    """Covariates ``X`` (n, d), binary treatment ``Z`` and optional outcome ``Y``.

    Arrays are copied and made read-only on construction.  ``outcome`` is
    ``None`` for unlabeled control pools.
    """

    covariates: np.ndarray
    treatment: np.ndarray
    outcome: np.ndarray | None = None
    covariate_names: tuple[str, ...] = field(default=())

    def __post_init__(self):
        x = np.asarray(self.covariates, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if x.ndim != 2:
            raise DataError(f"covariates must be 2-D, got shape {x.shape}")
        n, d = x.shape
        if n < 1 or d < 1:
            raise DataError(f"need at least one row and one covariate, got shape {x.shape}")
        z = np.asarray(self.treatment)
        if z.shape != (n,):
            raise DataError(f"treatment has shape {z.shape}, expected ({n},)")
        if not np.all((z == 0) | (z == 1)):
            bad = int(np.flatnonzero((z != 0) & (z != 1))[0])
            raise DataError(f"treatment must be 0/1; row {bad} has {z[bad]!r}")
        if not np.all(np.isfinite(x)):
            r, c = np.argwhere(~np.isfinite(x))[0]
            raise DataError(f"non-finite covariate at row {r}, column {c}")
        y = None
        if self.outcome is not None:
            y = np.asarray(self.outcome, dtype=float)
            if y.shape != (n,):
                raise DataError(f"outcome has shape {y.shape}, expected ({n},)")
            if not np.all(np.isfinite(y)):
                raise DataError(f"non-finite outcome at row {int(np.flatnonzero(~np.isfinite(y))[0])}")
        names = tuple(self.covariate_names) or tuple(f"X{k + 1}" for k in range(d))
        if len(names) != d:
            raise DataError(f"{len(names)} covariate names for {d} columns")
        object.__setattr__(self, "covariates", _frozen(x))
        object.__setattr__(self, "treatment", _frozen(z, dtype=np.int8))
        object.__setattr__(self, "outcome", None if y is None else _frozen(y))
        object.__setattr__(self, "covariate_names", names)

    @property
    def n(self) -> int:
        return self.covariates.shape[0]

    @property
    def d(self) -> int:
        return self.covariates.shape[1]

    @property
    def n1(self) -> int:
        return int(self.treatment.sum())

    @property
    def n0(self) -> int:
        return self.n - self.n1

    @property
    def control(self) -> np.ndarray:
        return self.treatment == 0

    @property
    def treated(self) -> np.ndarray:
        return self.treatment == 1

    def check_estimable(self) -> None:
        """Raise ``DataError`` unless the data can feed an ATT estimator."""
        if self.outcome is None:
            raise DataError("dataset has no outcome column")
        if self.n < 2:
            raise DataError("need at least two rows")
        if self.n0 == 0 or self.n1 == 0:
            raise DataError(f"need both groups non-empty (n0={self.n0}, n1={self.n1})")

    def with_covariates(self, covariates) -> "Dataset":
        return Dataset(covariates, self.treatment, self.outcome, self.covariate_names)

    def take(self, rows) -> "Dataset":
        rows = np.asarray(rows)
        y = None if self.outcome is None else self.outcome[rows]
        return Dataset(self.covariates[rows], self.treatment[rows], y, self.covariate_names)


def load_csv(
    path,
    treatment_col: str,
    outcome_col: str | None = None,
    covariate_cols: Sequence[str] | None = None,
) -> Dataset:
    """Read a header-first, comma-separated file into a :class:`Dataset`.

    ``covariate_cols=None`` takes every column other than the treatment and
    outcome columns, in file order.  Rows are 1-based data rows in messages
    (the header is row 0).
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such file: {path}")
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        rows = [r for r in reader if r]

    def col(name):
        try:
            return header.index(name)
        except ValueError:
            raise DataError(f"{path}: missing column {name!r}") from None

    zi = col(treatment_col)
    yi = col(outcome_col) if outcome_col is not None else None
    if covariate_cols is None:
        covariate_cols = [h for h in header if h not in (treatment_col, outcome_col)]
    xi = [col(c) for c in covariate_cols]
    if not xi:
        raise DataError(f"{path}: no covariate columns")

    def num(r, i, cname, rowno):
        try:
            v = float(r[i])
        except (ValueError, IndexError):
            cell = r[i] if i < len(r) else "<missing>"
            raise DataError(f"{path}: row {rowno}, column {cname!r}: non-numeric value {cell!r}") from None
        if not math.isfinite(v):
            raise DataError(f"{path}: row {rowno}, column {cname!r}: non-finite value {r[i]!r}")
        return v

    n = len(rows)
    x = np.empty((n, len(xi)))
    z = np.empty(n, dtype=np.int8)
    y = np.empty(n) if yi is not None else None
    for r_idx, r in enumerate(rows):
        rowno = r_idx + 1
        zv = num(r, zi, treatment_col, rowno)
        if zv not in (0.0, 1.0):
            raise DataError(f"{path}: row {rowno}, column {treatment_col!r}: treatment must be 0 or 1, got {r[zi]!r}")
        z[r_idx] = int(zv)
        for k, i in enumerate(xi):
            x[r_idx, k] = num(r, i, covariate_cols[k], rowno)
        if yi is not None:
            y[r_idx] = num(r, yi, outcome_col, rowno)
    if n == 0:
        raise DataError(f"{path}: no data rows")
    return Dataset(x, z, y, tuple(covariate_cols))


def write_csv(ds: Dataset, path, treatment_col: str = "Z", outcome_col: str = "Y") -> None:
    """Write ``ds`` so that :func:`load_csv` reads it back exactly (``repr`` floats)."""
    header = [treatment_col] + ([outcome_col] if ds.outcome is not None else []) + list(ds.covariate_names)
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for i in range(ds.n):
            row = [str(int(ds.treatment[i]))]
            if ds.outcome is not None:
                row.append(repr(float(ds.outcome[i])))
            row.extend(repr(float(v)) for v in ds.covariates[i])
            w.writerow(row)


@dataclass(frozen=True, eq=False)
class RescaleMap:
    """Per-dimension affine map sending ``[lo_k, hi_k]`` onto ``[margin, 1 - margin]``."""

    lo: np.ndarray
    hi: np.ndarray
    margin: float = 0.01

    def __post_init__(self):
        lo = _frozen(np.atleast_1d(self.lo))
        hi = _frozen(np.atleast_1d(self.hi))
        if lo.shape != hi.shape:
            raise ValueError("lo and hi must have the same shape")
        if not np.all(hi > lo):
            k = int(np.flatnonzero(~(hi > lo))[0])
            raise DegenerateCovariateError(f"covariate {k} is constant (lo = hi = {lo[k]!r})")
        if not 0.0 <= self.margin <= 0.1:
            raise ConfigError(f"margin must lie in [0, 0.1], got {self.margin}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def d(self) -> int:
        return self.lo.shape[0]

    @property
    def _slope(self):
        return (1.0 - 2.0 * self.margin) / (self.hi - self.lo)

    def apply(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self.margin + (x - self.lo) * self._slope

    def invert(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        return self.lo + (u - self.margin) / self._slope

    def to_dict(self) -> dict:
        return {"lo": self.lo.tolist(), "hi": self.hi.tolist(), "margin": self.margin}


def _as_matrix(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    return a[:, None] if a.ndim == 1 else a


def fit_rescale(control_covariates, treated_covariates, margin: float = 0.01) -> RescaleMap:
    """Fit the rescale on the union of both groups' observed ranges."""
    xc = _as_matrix(control_covariates)
    xt = _as_matrix(treated_covariates)
    if xc.size == 0 or xt.size == 0:
        raise DataError("both covariate matrices must be non-empty")
    if xc.shape[1] != xt.shape[1]:
        raise DataError(f"dimension mismatch: {xc.shape[1]} vs {xt.shape[1]}")
    both = np.vstack([xc, xt])
    return RescaleMap(both.min(axis=0), both.max(axis=0), margin)
