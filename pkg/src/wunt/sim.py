"""Simulation designs, replication engine and timing benchmark.

Designs
-------
``y1``/``y2``: W ~ N(0.5 * 1, Sigma) for treated and N(0, Sigma) for
control units, ``Sigma_ij = rho^|i-j|`` in five dimensions; the observed
covariates are ``exp(W) + W`` and the outcome surfaces are shared by both
arms, so the true ATT is zero.

``y3``/``y4``: the Kang-Schafer layout.  W ~ N(0, I_4), treatment drawn
from a logistic propensity in W, and only the nonlinear transforms of W are
observed.  Again the true ATT is zero.

Randomness
----------
Every draw comes from a Philox counter-based generator keyed by
``(seed, stream)``; replication ``r`` of a study uses ``seed = base_seed ^ r``.
Results therefore do not depend on the order or concurrency in which
replications run.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .density import ProductKernel, ProjectionBasis, default_bandwidth, default_basis_count
from .errors import ConfigError, NumericalError
from .estimator import estimate_ipw_logistic, estimate_kernel, estimate_projection
from .transformer import fit_transformer

MODELS = ("y1", "y2", "y3", "y4")

STREAM_TREATED, STREAM_CONTROL, STREAM_UNLABELED, STREAM_NOISE, STREAM_ASSIGN = range(5)

MAX_FAILURE_RATE = 0.10


def rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Philox generator keyed by ``(seed, stream)``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed) & (2**64 - 1), int(stream)])))


def replication_seed(base_seed: int, r: int) -> int:
    return (int(base_seed) ^ int(r)) & (2**64 - 1)


def ar1_cov(rho: float, d: int = 5) -> np.ndarray:
    idx = np.arange(d)
    return rho ** np.abs(idx[:, None] - idx[None, :])


def _mvnormal(gen, mean, chol, n):
    z = gen.standard_normal((n, chol.shape[0]))
    return mean + z @ chol.T


def y1_surface(w):
    w = np.asarray(w, dtype=float)
    return w[:, 0] ** 2 * w[:, 1] ** 2 - 2.0 * w[:, 2] ** 2 * w[:, 3] ** 2 + w.sum(axis=1)


def y2_surface(w):
    w = np.asarray(w, dtype=float)
    return (
        10.0 * w[:, :3].sum(axis=1)
        + 100.0 * np.sin(2 * np.pi * w[:, 0]) * np.sin(2 * np.pi * w[:, 1])
        + 100.0 * np.prod(np.cos(np.pi * w[:, 2:5] / 2.0), axis=1)
    )


def y3_surface(w):
    w = np.asarray(w, dtype=float)
    return 210.0 + 27.4 * w[:, 0] + 13.7 * (w[:, 1] + w[:, 2] + w[:, 3])


def y4_surface(w):
    w = np.asarray(w, dtype=float)
    return (4 * w[:, 0] + 2 * w[:, 1]) / (np.exp(w[:, 2]) + 4 * np.sqrt(np.abs(w[:, 3]))) + 2 * w[:, 2] + w[:, 3]


SURFACES = {"y1": y1_surface, "y2": y2_surface, "y3": y3_surface, "y4": y4_surface}


def ks_propensity(w):
    w = np.asarray(w, dtype=float)
    return 1.0 / (1.0 + np.exp(w[:, 0] - 0.5 * w[:, 1] + 0.25 * w[:, 2] + 0.1 * w[:, 3]))


def ks_covariates(w):
    w = np.asarray(w, dtype=float)
    return np.column_stack(
        [
            np.exp(w[:, 0] / 2.0),
            w[:, 1] / (1.0 + np.exp(w[:, 0])) + 10.0,
            (w[:, 0] * w[:, 2] / 25.0 + 0.6) ** 3,
            (w[:, 1] + w[:, 3] + 20.0) ** 2,
        ]
    )


def generate_y1_y2(model: str, rho: float, n1: int, n0: int, n_unlabeled: int, seed: int):
    """Draw a labeled dataset (treated rows first) and an unlabeled control pool.

    Returns ``(labeled, unlabeled)``; ``unlabeled`` is ``None`` when
    ``n_unlabeled == 0``.
    """
    if model not in ("y1", "y2"):
        raise ConfigError(f"model must be y1 or y2, got {model!r}")
    if not 0.0 <= rho < 1.0:
        raise ConfigError(f"rho must lie in [0, 1), got {rho}")
    if n1 < 1 or n0 < 1 or n_unlabeled < 0:
        raise ConfigError("sizes must be positive")
    chol = np.linalg.cholesky(ar1_cov(rho))
    w_t = _mvnormal(rng(seed, STREAM_TREATED), 0.5, chol, n1)
    w_c = _mvnormal(rng(seed, STREAM_CONTROL), 0.0, chol, n0)
    w = np.vstack([w_t, w_c])
    eps = rng(seed, STREAM_NOISE).standard_normal(n1 + n0)
    y = SURFACES[model](w) + eps
    names = tuple(f"X{k + 1}" for k in range(5))
    labeled = Dataset(np.exp(w) + w, np.r_[np.ones(n1), np.zeros(n0)], y, names)
    unlabeled = None
    if n_unlabeled:
        w_u = _mvnormal(rng(seed, STREAM_UNLABELED), 0.0, chol, n_unlabeled)
        unlabeled = Dataset(np.exp(w_u) + w_u, np.zeros(n_unlabeled), None, names)
    return labeled, unlabeled


def generate_y3_y4(model: str, n: int, seed: int, max_redraws: int = 100) -> Dataset:
    """Kang-Schafer draw of size ``n``.

    If every unit lands in one arm the draw is repeated on the next
    assignment stream; the number of redraws is kept in ``DRAW_LOG``.
    """
    if model not in ("y3", "y4"):
        raise ConfigError(f"model must be y3 or y4, got {model!r}")
    if n < 10:
        raise ConfigError("n must be >= 10")
    w = rng(seed, STREAM_CONTROL).standard_normal((n, 4))
    pi = ks_propensity(w)
    for attempt in range(max_redraws):
        z = (rng(seed, STREAM_ASSIGN + 16 * attempt).random(n) < pi).astype(np.int8)
        if 0 < z.sum() < n:
            break
    else:
        raise RuntimeError(f"seed {seed}: degenerate treatment assignment after {max_redraws} draws")
    if attempt:
        DRAW_LOG.append((seed, attempt))
    y = SURFACES[model](w) + rng(seed, STREAM_NOISE).standard_normal(n)
    return Dataset(ks_covariates(w), z, y, ("X1", "X2", "X3", "X4"))


DRAW_LOG: list = []


@dataclass
class AttCheck:
    value: float
    mc_estimate: float
    mc_se: float

    @property
    def ok(self) -> bool:
        return abs(self.mc_estimate) < 3.0 * self.mc_se


def true_att(model: str, mc_size: int = 1_000_000, seed: int = 0, return_check: bool = False):
    """True ATT of a design (0: both arms share one response surface).

    The zero is confirmed by Monte Carlo: treated units are drawn, both
    potential outcomes are simulated with independent noise, and the mean
    difference must lie within 3 standard errors of zero.
    """
    model = model.lower()
    if model in ("y1", "y2"):
        w = _mvnormal(rng(seed, STREAM_TREATED), 0.5, np.eye(5), mc_size)
    elif model in ("y3", "y4"):
        w = rng(seed, STREAM_CONTROL).standard_normal((mc_size, 4))
        z = rng(seed, STREAM_ASSIGN).random(mc_size) < ks_propensity(w)
        w = w[z]
    else:
        raise ConfigError(f"unknown model {model!r}")
    mu = SURFACES[model](w)
    noise = rng(seed, STREAM_NOISE).standard_normal((w.shape[0], 2))
    diff = (mu + noise[:, 1]) - (mu + noise[:, 0])
    est = float(diff.mean())
    se = float(diff.std(ddof=1) / math.sqrt(diff.shape[0]))
    check = AttCheck(0.0, est, se)
    if not check.ok:
        raise AssertionError(f"Monte Carlo ATT {est:.4g} is not within 3 SE ({se:.3g}) of 0")
    return check if return_check else 0.0


# --------------------------------------------------------------------------
# estimator specs


@dataclass(frozen=True)
class EstimatorSpec:
    """One estimator configuration in a simulation study.

    ``name`` is the table label.  Tuning left at ``None`` follows the
    default rules: ``h = c n^(-2/(d+2(alpha+beta)))`` and
    ``L = c n^(2d/(d+2(alpha+beta)))`` with ``n`` picked by ``rate_n``.
    ``basis_grid = m`` fixes ``L = m**d`` (the full tensor grid) instead.
    """

    name: str
    kind: str  # kernel | projection | ipw-logistic
    transformer: str = "marginal"  # joint | marginal | plugin | identity
    extra: bool = False
    order: int = 2
    bandwidth: float | None = None
    basis_count: int | None = None
    basis_grid: int | None = None
    basis_family: str = "cosine"
    alpha: float = 1.0
    beta: float = 1.0
    c: float = 1.0
    rate_n: str = "total"  # total | control | treated
    margin: float = 0.01

    def _n(self, ds: Dataset) -> int:
        return {"total": ds.n, "control": ds.n0, "treated": ds.n1}[self.rate_n]

    def product_kernel(self, ds: Dataset) -> ProductKernel:
        h = self.bandwidth if self.bandwidth is not None else default_bandwidth(self._n(ds), ds.d, self.alpha, self.beta, self.c)
        return ProductKernel(self.order, h)

    def projection_basis(self, ds: Dataset) -> ProjectionBasis:
        count = self.basis_count
        if count is None and self.basis_grid is not None:
            count = int(self.basis_grid) ** ds.d
        if count is None:
            count = default_basis_count(self._n(ds), ds.d, self.alpha, self.beta, self.c)
        return ProjectionBasis(count, ds.d, self.basis_family)

    def fit(self, ds: Dataset, unlabeled: Dataset | None = None):
        """Fit the uniform transformer (``None`` for the IPW baseline)."""
        if self.kind == "ipw-logistic":
            return None
        extra = None
        if self.extra:
            if unlabeled is None:
                raise ConfigError(f"{self.name}: needs an unlabeled control pool")
            extra = unlabeled.covariates
        return fit_transformer(self.transformer, ds, extra, self.margin)

    def estimate(self, ds: Dataset, t, threads: int = 1, backend=None):
        """Run the estimator with an already fitted transformer ``t``."""
        if self.kind == "ipw-logistic":
            return estimate_ipw_logistic(ds)
        if self.kind == "kernel":
            return estimate_kernel(ds, t, self.product_kernel(ds), threads, backend)
        if self.kind == "projection":
            return estimate_projection(ds, t, self.projection_basis(ds), threads, backend)
        raise ConfigError(f"unknown estimator kind {self.kind!r}")

    def run(self, ds: Dataset, unlabeled: Dataset | None = None, threads: int = 1, backend=None):
        return self.estimate(ds, self.fit(ds, unlabeled), threads, backend)


def parse_spec(name: str, **overrides) -> EstimatorSpec:
    """Build a spec from a label such as ``kernel+joint`` or ``projection+marginal+extra``."""
    parts = name.lower().split("+")
    if parts[0] in ("ipw", "ipw-logistic"):
        return EstimatorSpec(name, "ipw-logistic", **overrides)
    if parts[0] not in ("kernel", "projection") or len(parts) < 2:
        raise ConfigError(f"cannot parse estimator label {name!r}")
    extra = "extra" in parts[2:]
    return EstimatorSpec(name, parts[0], parts[1], extra, **overrides)


# Tuning used by the studies in this package.  Unspecified knobs keep the
# defaults of EstimatorSpec.  The rate rule for L exceeds n1 at desk-scale
# sample sizes, so the studies use the full 3^d cosine grid instead.
STUDY_TUNING = {
    "kernel": {},
    "projection": {"basis_grid": 3},
}


def study_specs(names, tuning: dict | None = None) -> list[EstimatorSpec]:
    tuning = STUDY_TUNING if tuning is None else tuning
    out = []
    for nm in names:
        kind = nm.lower().split("+")[0]
        out.append(parse_spec(nm, **tuning.get(kind, {})))
    return out


# --------------------------------------------------------------------------
# replications


@dataclass
class ReplicationResult:
    model: str
    names: list
    estimates: dict  # name -> (R,) tau_hat, NaN on failure
    seconds: dict  # name -> (R,)
    seeds: list
    settings: dict = field(default_factory=dict)

    @property
    def reps(self) -> int:
        return len(self.seeds)

    def failures(self, name) -> int:
        return int(np.isnan(self.estimates[name]).sum())

    def failed(self, name) -> bool:
        return self.failures(name) > MAX_FAILURE_RATE * self.reps

    def _ok(self, name):
        v = self.estimates[name]
        return v[~np.isnan(v)]

    def bias(self, name, truth: float = 0.0) -> float:
        if self.failed(name):
            return math.nan
        return float(np.mean(self._ok(name)) - truth)

    def rmse(self, name, truth: float = 0.0) -> float:
        if self.failed(name):
            return math.nan
        return float(np.sqrt(np.mean((self._ok(name) - truth) ** 2)))

    def mc_se(self, name) -> float:
        v = self._ok(name)
        return float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else math.nan

    def table(self) -> list[dict]:
        rows = []
        for nm in self.names:
            rows.append(
                {
                    "model": self.model,
                    **self.settings,
                    "estimator": nm,
                    "bias": self.bias(nm),
                    "rmse": self.rmse(nm),
                    "mc_se": self.mc_se(nm),
                    "failures": self.failures(nm),
                    "reps": self.reps,
                    "status": "failed" if self.failed(nm) else "ok",
                    "mean_seconds": float(np.mean(self.seconds[nm])),
                }
            )
        return rows


def draw(model: str, seed: int, n: int | None = None, rho: float = 0.0, n1: int = 500, n0: int = 1000, n_unlabeled: int = 0):
    """One dataset (plus optional unlabeled pool) for ``model``."""
    model = model.lower()
    if model in ("y1", "y2"):
        return generate_y1_y2(model, rho, n1, n0, n_unlabeled, seed)
    return generate_y3_y4(model, n if n is not None else 1000, seed), None


def run_replications(
    model: str,
    specs,
    reps: int,
    base_seed: int = 0,
    *,
    n: int | None = None,
    rho: float = 0.0,
    n1: int = 500,
    n0: int = 1000,
    n_unlabeled: int | None = None,
    threads: int = 1,
    backend=None,
) -> ReplicationResult:
    """Run ``reps`` replications; every spec sees the same dataset in a replication.

    Estimator failures (overlap, separation) are recorded as NaN.
    """
    if reps < 1:
        raise ConfigError("reps must be >= 1")
    specs = [parse_spec(s) if isinstance(s, str) else s for s in specs]
    if n_unlabeled is None:
        n_unlabeled = 10_000 if any(s.extra for s in specs) else 0

    def one(r):
        seed = replication_seed(base_seed, r)
        ds, pool = draw(model, seed, n, rho, n1, n0, n_unlabeled)
        taus, secs = [], []
        for s in specs:
            t0 = time.perf_counter()
            try:
                taus.append(s.run(ds, pool, 1, backend).tau_att_hat)
            except NumericalError:
                taus.append(math.nan)
            secs.append(time.perf_counter() - t0)
        return seed, taus, secs

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(one, range(reps)))
    else:
        results = [one(r) for r in range(reps)]
    names = [s.name for s in specs]
    est = {nm: np.array([res[1][k] for res in results]) for k, nm in enumerate(names)}
    sec = {nm: np.array([res[2][k] for res in results]) for k, nm in enumerate(names)}
    settings = {"n": n if model in ("y3", "y4") else n0 + n1, "rho": rho if model in ("y1", "y2") else None}
    return ReplicationResult(model, names, est, sec, [res[0] for res in results], settings)


# --------------------------------------------------------------------------
# timing


@dataclass
class TimingTable:
    sizes: list
    seconds: dict  # name -> list of mean seconds per size
    slopes: dict  # name -> fitted log-log slope
    transformer_seconds: dict = field(default_factory=dict)  # size -> seconds to build the joint transformer

    def rows(self) -> list[dict]:
        out = []
        for nm, secs in self.seconds.items():
            row = {"estimator": nm}
            row.update({f"n={n}": s for n, s in zip(self.sizes, secs)})
            row["slope"] = self.slopes[nm]
            out.append(row)
        return out


def loglog_slope(sizes, seconds) -> float:
    return float(np.polyfit(np.log(sizes), np.log(seconds), 1)[0])


def time_transformer(n: int, seed: int = 0, kind: str = "joint", reps: int = 3) -> float:
    """Mean seconds to build (rescale + partition) a transformer on a Y3 draw of size ``n``."""
    ds = generate_y3_y4("y3", n, seed)
    fit_transformer(kind, ds)  # warm-up
    t0 = time.perf_counter()
    for _ in range(reps):
        fit_transformer(kind, ds)
    return (time.perf_counter() - t0) / reps


STAGES = ("pipeline", "estimate")


def timing_bench(
    specs,
    sizes=(1000, 2000, 5000),
    seed: int = 0,
    reps: int = 10,
    model: str = "y3",
    backend=None,
    rounds: int = 5,
    stage: str = "pipeline",
) -> TimingTable:
    """Mean wall time per (estimator, n) over ``reps`` draws, plus log-log slopes.

    ``stage="pipeline"`` times transformer construction, transform and
    estimation together; ``stage="estimate"`` fits the transformers first
    and times only the estimator call (transform plus the weighted sums).
    One untimed warm-up run per estimator absorbs JIT compilation.  The
    mean over ``reps`` draws is measured ``rounds`` times and the fastest
    round is kept, which filters scheduler noise out of millisecond-scale
    timings.
    """
    sizes = list(sizes)
    if sizes != sorted(sizes):
        raise ConfigError("sizes must be ascending")
    if rounds < 1:
        raise ConfigError("rounds must be >= 1")
    if stage not in STAGES:
        raise ConfigError(f"stage must be one of {STAGES}, got {stage!r}")
    specs = [parse_spec(s) if isinstance(s, str) else s for s in specs]
    data = {n: [generate_y3_y4(model, n, replication_seed(seed, r)) for r in range(reps)] for n in sizes}
    fitted = {}
    if stage == "estimate":
        fitted = {(s.name, n, r): s.fit(ds) for s in specs for n in sizes for r, ds in enumerate(data[n])}
    for s in specs:
        s.run(data[sizes[0]][0], backend=backend)

    def one(s, n, r, ds):
        if stage == "estimate":
            return s.estimate(ds, fitted[(s.name, n, r)], backend=backend)
        return s.run(ds, backend=backend)

    # rounds are interleaved over sizes and estimators, so slow phases of
    # the machine hit every cell alike instead of one size
    best = {(s.name, n): math.inf for s in specs for n in sizes}
    for _ in range(rounds):
        for n in sizes:
            for s in specs:
                t0 = time.perf_counter()
                for r, ds in enumerate(data[n]):
                    try:
                        one(s, n, r, ds)
                    except NumericalError:
                        pass
                key = (s.name, n)
                best[key] = min(best[key], (time.perf_counter() - t0) / reps)
    seconds = {s.name: [best[(s.name, n)] for n in sizes] for s in specs}
    slopes = {nm: loglog_slope(sizes, secs) for nm, secs in seconds.items()}
    return TimingTable(sizes, seconds, slopes)
