"""Weighting estimators of the counterfactual mean mu_CT and of the ATT.

Both WUNT estimators are ratios of control-by-treated double sums,

    mu_CT = sum_{i in C, j in T} Y_i K(U_i, U_j) / sum_{i in C, j in T} K(U_i, U_j),

evaluated here as per-control row sums ``s_i = sum_j K(U_i, U_j)`` so that
``w_i = s_i / sum s`` are the exported weights and ``mu_CT = sum_i w_i Y_i``.
The kernel version loops over all n0 * n1 pairs; the projection version
uses the factorisation ``s_i = sum_l psi_l(U_i) sum_j psi_l(U_j)``.
"""

from __future__ import annotations

import csv
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit

from ._backend import get_backend
from .data import Dataset
from .density import ProductKernel, ProjectionBasis
from .errors import OverlapError, SeparationError
from .transformer import UniformTransformer

ESTIMATOR_KINDS = ("kernel", "projection", "ipw-logistic")
DENOMINATOR_TOL = 1e-12


@dataclass
class EstimateReport:
    mu_ct_hat: float
    tau_att_hat: float
    mu_tt_hat: float
    weights: np.ndarray
    treatment: np.ndarray
    estimator: str
    numerator: float
    denominator: float
    n0: int
    n1: int
    seconds: float
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "mu_ct_hat": self.mu_ct_hat,
            "tau_att_hat": self.tau_att_hat,
            "mu_tt_hat": self.mu_tt_hat,
            "estimator": self.estimator,
            "config": self.config,
            "n0": self.n0,
            "n1": self.n1,
            "numerator": self.numerator,
            "denominator": self.denominator,
            "seconds": self.seconds,
        }


def _split_groups(ds: Dataset, t: UniformTransformer | None, backend):
    ds.check_estimable()
    u = ds.covariates if t is None else t.transform(ds.covariates, backend)
    u = np.ascontiguousarray(u, dtype=float)
    c = ds.control
    return u[c], u[~c], ds.outcome[c], ds.outcome[~c]


def _finish(ds, row_sums, yc, yt, kind, config, started) -> EstimateReport:
    n0, n1 = yc.shape[0], yt.shape[0]
    den = math.fsum(row_sums)
    if not abs(den) >= DENOMINATOR_TOL * n0 * n1:
        raise OverlapError(
            f"U-statistic denominator {den:.3e} below {DENOMINATOR_TOL:g} * n0 * n1; "
            "no control/treated overlap at this tuning"
        )
    num = math.fsum(row_sums * yc)
    # the ratio is scale-free; dividing by the largest row sum first makes
    # equal row sums exactly 1, so a constant kernel gives the control mean
    # to the last bit
    rel = row_sums / np.max(np.abs(row_sums))
    rel_den = math.fsum(rel)
    mu_ct = math.fsum(rel * yc) / rel_den
    mu_tt = math.fsum(yt) / n1
    weights = np.ones(ds.n)
    weights[ds.control] = rel / rel_den
    return EstimateReport(
        mu_ct_hat=mu_ct,
        tau_att_hat=mu_tt - mu_ct,
        mu_tt_hat=mu_tt,
        weights=weights,
        treatment=np.array(ds.treatment),
        estimator=kind,
        numerator=num,
        denominator=den,
        n0=n0,
        n1=n1,
        seconds=time.perf_counter() - started,
        config=config,
    )


def _blocked(fn, uc, threads, *args):
    # Rows are independent, so splitting them across workers leaves every
    # row sum (and hence the fixed-order final reduction) unchanged.
    if threads <= 1 or uc.shape[0] < 2 * threads:
        return fn(uc, *args)
    bounds = np.linspace(0, uc.shape[0], threads + 1).astype(int)
    chunks = [np.ascontiguousarray(uc[a:b]) for a, b in zip(bounds[:-1], bounds[1:])]
    with ThreadPoolExecutor(threads) as pool:
        parts = list(pool.map(lambda ch: fn(ch, *args), chunks))
    return np.concatenate(parts)


def kernel_row_sums(uc, ut, k: ProductKernel, threads: int = 1, backend=None) -> np.ndarray:
    """``s_i = sum_j K(H^-1 (u_i - v_j))`` without the ``1/det H`` factor."""
    d = uc.shape[1]
    inv_h = 1.0 / k.bandwidths(d)
    mod = get_backend(backend)
    return _blocked(mod.kernel_row_sums, np.ascontiguousarray(uc), threads, np.ascontiguousarray(ut), inv_h, k.order)


def projection_row_sums(uc, ut, b: ProjectionBasis, threads: int = 1, backend=None) -> np.ndarray:
    """``s_i = sum_l psi_l(u_i) * sum_j psi_l(v_j)`` (factored projection kernel)."""
    mod = get_backend(backend)
    coef = mod.column_sums(mod.basis_matrix(np.ascontiguousarray(ut), b.index, b.family_code))
    return _blocked(mod.basis_row_sums, np.ascontiguousarray(uc), threads, b.index, b.family_code, coef)


def estimate_kernel(
    ds: Dataset,
    t: UniformTransformer | None,
    k: ProductKernel,
    threads: int = 1,
    backend=None,
) -> EstimateReport:
    """Kernel U-statistic estimator of ``mu_CT`` after transforming by ``t``.

    ``t=None`` means the covariates are already on the uniform scale.
    Raises :class:`OverlapError` when the double sum of kernel values is
    numerically zero.
    """
    started = time.perf_counter()
    uc, ut, yc, yt = _split_groups(ds, t, backend)
    s = kernel_row_sums(uc, ut, k, threads, backend)
    cfg = {"kernel.order": k.order, "kernel.bandwidth": k.bandwidths(ds.d).tolist()}
    return _finish(ds, s, yc, yt, "kernel", cfg, started)


def estimate_projection(
    ds: Dataset,
    t: UniformTransformer | None,
    b: ProjectionBasis,
    threads: int = 1,
    backend=None,
) -> EstimateReport:
    """Projection-kernel U-statistic estimator of ``mu_CT``."""
    started = time.perf_counter()
    if b.d != ds.d:
        raise ValueError(f"basis dimension {b.d} does not match data dimension {ds.d}")
    uc, ut, yc, yt = _split_groups(ds, t, backend)
    s = projection_row_sums(uc, ut, b, threads, backend)
    cfg = {"basis.family": b.family, "basis.count": int(b.count)}
    return _finish(ds, s, yc, yt, "projection", cfg, started)


# --------------------------------------------------------------------------
# logistic-regression IPW baseline


@dataclass
class LogisticFit:
    coef: np.ndarray  # intercept first, original covariate scale
    se: np.ndarray
    iterations: int

    def predict(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        eta = self.coef[0] + x @ self.coef[1:]
        return expit(eta)


def _loglik(eta, z):
    # sum z*eta - log(1 + e^eta), stable
    return float(np.sum(z * eta - np.logaddexp(0.0, eta)))


def fit_logistic(x, z, max_iter: int = 100, tol: float = 1e-10) -> LogisticFit:
    """Maximum-likelihood logistic regression of ``z`` on ``x`` by Newton's method.

    Columns are standardised internally and the coefficients mapped back.
    Step-halving guards each Newton step.  Raises :class:`SeparationError`
    when the iteration cap is reached or the Hessian becomes singular, which
    is what perfect separation looks like.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    z = np.asarray(z, dtype=float)
    mean = x.mean(axis=0)
    scale = x.std(axis=0)
    scale[scale == 0] = 1.0
    design = np.column_stack([np.ones(x.shape[0]), (x - mean) / scale])
    beta = np.zeros(design.shape[1])
    eta = design @ beta
    ll = _loglik(eta, z)
    for it in range(1, max_iter + 1):
        p = expit(eta)
        grad = design.T @ (z - p)
        hess = (design * (p * (1.0 - p))[:, None]).T @ design
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            raise SeparationError("singular Hessian in logistic fit (perfect separation?)") from None
        if not np.all(np.isfinite(step)):
            raise SeparationError("non-finite Newton step in logistic fit (perfect separation?)")
        t = 1.0
        while True:
            cand = beta + t * step
            eta_c = design @ cand
            ll_c = _loglik(eta_c, z)
            if ll_c >= ll - 1e-12 * abs(ll) or t < 1e-8:
                break
            t *= 0.5
        beta, eta, ll_old, ll = cand, eta_c, ll, ll_c
        if np.max(np.abs(t * step)) < tol or abs(ll - ll_old) < tol * (abs(ll) + tol):
            break
    else:
        raise SeparationError(f"logistic fit did not converge in {max_iter} iterations (perfect separation?)")
    if ll > -1e-8 * x.shape[0]:
        raise SeparationError("log-likelihood reached 0: fitted propensities saturate (perfect separation)")
    p = expit(eta)
    hess = (design * (p * (1.0 - p))[:, None]).T @ design
    # beta_orig = J beta_std
    dim = design.shape[1]
    jac = np.zeros((dim, dim))
    jac[0, 0] = 1.0
    jac[0, 1:] = -mean / scale
    jac[1:, 1:] = np.diag(1.0 / scale)
    try:
        cov = jac @ np.linalg.inv(hess) @ jac.T
    except np.linalg.LinAlgError:
        raise SeparationError("singular information matrix") from None
    return LogisticFit(jac @ beta, np.sqrt(np.diag(cov)), it)


def estimate_ipw_logistic(ds: Dataset) -> EstimateReport:
    """Hajek-normalised odds weights ``pi/(1 - pi)`` from a logistic fit of Z on X."""
    started = time.perf_counter()
    ds.check_estimable()
    fit = fit_logistic(ds.covariates, ds.treatment)
    c = ds.control
    xc = ds.covariates[c]
    eta = fit.coef[0] + xc @ fit.coef[1:]
    odds = np.exp(eta)
    yc, yt = ds.outcome[c], ds.outcome[~c]
    cfg = {"coef": fit.coef.tolist(), "iterations": fit.iterations}
    return _finish(ds, odds, yc, yt, "ipw-logistic", cfg, started)


# --------------------------------------------------------------------------


def export_weights(r: EstimateReport, path, clip_negative: bool = False) -> None:
    """Write ``row,Z,w`` per unit; optionally clip negative control weights and renormalise."""
    w = np.array(r.weights, dtype=float)
    control = r.treatment == 0
    if clip_negative:
        wc = np.clip(w[control], 0.0, None)
        total = math.fsum(wc)
        if total <= 0:
            raise OverlapError("all control weights are non-positive; cannot renormalise after clipping")
        w[control] = wc / total
    with Path(path).open("w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["row", "Z", "w"])
        for i, (zi, wi) in enumerate(zip(r.treatment, w)):
            out.writerow([i, int(zi), repr(float(wi))])
