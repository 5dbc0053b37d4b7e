"""Pure-numpy versions of the inner loops in ``_kernels_numba``.

Same signatures, same results up to summation order (numpy uses pairwise
summation where the numba path uses Neumaier compensation).
"""

from __future__ import annotations

import math

import numpy as np

NAME = "numpy"

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)
_BLOCK_ELEMS = 1 << 20


def _univariate(x, order):
    x2 = x * x
    if order == 2:
        return np.where(x2 < 1.0, 0.75 * (1.0 - x2), 0.0)
    if order == 4:
        poly = 0.5 * (3.0 - x2)
    else:
        poly = 0.125 * (15.0 - 10.0 * x2 + x2 * x2)
    return poly * _INV_SQRT_2PI * np.exp(-0.5 * x2)


def kernel_row_sums(uc, ut, inv_h, order):
    n0, d = uc.shape
    n1 = ut.shape[0]
    out = np.empty(n0)
    block = max(1, _BLOCK_ELEMS // max(1, n1 * d))
    for start in range(0, n0, block):
        stop = min(n0, start + block)
        diff = (uc[start:stop, None, :] - ut[None, :, :]) * inv_h
        vals = np.prod(_univariate(diff, order), axis=2)
        out[start:stop] = vals.sum(axis=1)
    return out


def _smooth_cdf(t, s_code):
    if s_code == 0:
        u = 2.0 * t
        v = 0.5 + (15.0 / 16.0) * (u - 2.0 * u**3 / 3.0 + u**5 / 5.0)
    else:
        v = t + 0.5 + np.sin(2.0 * np.pi * t) / (2.0 * np.pi)
    # rounding leaves about 1e-17 of slack at the ends
    return np.clip(v, 0.0, 1.0)


def partition_transform(x, breaks, offsets, n_cells, s_code):
    n, d = x.shape
    out = np.empty((n, d))
    cells = np.empty((n, d), dtype=np.int64)
    prefix = np.zeros(n, dtype=np.int64)
    v_all = np.clip(x, 0.0, 1.0)
    for k in range(d):
        rows = offsets[k] + prefix
        v = v_all[:, k]
        j = np.empty(n, dtype=np.int64)
        order = np.argsort(rows, kind="stable")
        uniq, starts = np.unique(rows[order], return_index=True)
        stops = np.append(starts[1:], n)
        for row, a, b in zip(uniq, starts, stops):
            idx = order[a:b]
            inner = breaks[row, 1:n_cells]
            j[idx] = np.searchsorted(inner, v[idx], side="right")
        lo = breaks[rows, j]
        hi = breaks[rows, j + 1]
        t = np.clip((v - 0.5 * (lo + hi)) / (hi - lo), -0.5, 0.5)
        out[:, k] = (j + _smooth_cdf(t, s_code)) / n_cells
        cells[:, k] = j
        prefix = prefix * n_cells + j
    return out, cells


def _basis_table(x, m_max, family):
    # x: (n,) -> (n, m_max + 1)
    m = np.arange(m_max + 1)
    if family == 0:
        tab = math.sqrt(2.0) * np.cos(np.pi * np.outer(x, m))
        tab[:, 0] = 1.0
        return tab
    tab = np.empty((x.shape[0], m_max + 1))
    tab[:, 0] = 1.0
    for mm in range(1, m_max + 1):
        lev = mm.bit_length() - 1
        y = (1 << lev) * x - (mm - (1 << lev))
        amp = math.sqrt(float(1 << lev))
        tab[:, mm] = np.where((y >= 0.0) & (y < 1.0), np.where(y < 0.5, amp, -amp), 0.0)
    return tab


def basis_matrix(u, index, family):
    n, d = u.shape
    m_max = int(index.max()) if index.size else 0
    out = np.ones((n, index.shape[0]))
    for k in range(d):
        out *= _basis_table(u[:, k], m_max, family)[:, index[:, k]]
    return out


def column_sums(mat):
    return mat.sum(axis=0)


def basis_row_sums(uc, index, family, coef):
    n0 = uc.shape[0]
    out = np.empty(n0)
    block = max(1, _BLOCK_ELEMS // max(1, index.shape[0]))
    for start in range(0, n0, block):
        stop = min(n0, start + block)
        out[start:stop] = (basis_matrix(uc[start:stop], index, family) * coef).sum(axis=1)
    return out
