"""numba implementations of the O(n0 * n1) and O(n * L) inner loops.

Every kernel is serial and compiled with ``nogil=True`` so callers can fan
blocks out over threads.  Each output element is produced by exactly one
loop in a fixed order, which keeps results bitwise stable for any number of
workers.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

NAME = "numba"

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


@njit(cache=True, nogil=True)
def _poly_factor(x2, order):
    # Polynomial part of the univariate kernel; the Gaussian factor is
    # handled once per pair in the caller.
    if order == 4:
        return 0.5 * (3.0 - x2)
    return 0.125 * (15.0 - 10.0 * x2 + x2 * x2)


@njit(cache=True, nogil=True)
def kernel_row_sums(uc, ut, inv_h, order):
    n0, d = uc.shape
    n1 = ut.shape[0]
    out = np.empty(n0)
    for i in range(n0):
        total = 0.0
        comp = 0.0
        for j in range(n1):
            if order == 2:
                # branch-free: a data-dependent early exit mispredicts often
                # enough to be slower than evaluating every coordinate
                v = 1.0
                for k in range(d):
                    x = (uc[i, k] - ut[j, k]) * inv_h[k]
                    t = 1.0 - x * x
                    v *= 0.75 * (t if t > 0.0 else 0.0)
            else:
                v = 1.0
                q = 0.0
                for k in range(d):
                    x = (uc[i, k] - ut[j, k]) * inv_h[k]
                    x2 = x * x
                    q += x2
                    v *= _poly_factor(x2, order) * _INV_SQRT_2PI
                v *= math.exp(-0.5 * q)
            # Neumaier compensated sum
            t = total + v
            if abs(total) >= abs(v):
                comp += (total - t) + v
            else:
                comp += (v - t) + total
            total = t
        out[i] = total + comp
    return out


@njit(cache=True, nogil=True)
def _smooth_cdf(t, s_code):
    # t in [-0.5, 0.5]
    if s_code == 0:
        u = 2.0 * t
        v = 0.5 + (15.0 / 16.0) * (u - 2.0 * u ** 3 / 3.0 + u ** 5 / 5.0)
    else:
        v = t + 0.5 + math.sin(2.0 * math.pi * t) / (2.0 * math.pi)
    # rounding leaves about 1e-17 of slack at the ends
    return min(max(v, 0.0), 1.0)


@njit(cache=True, nogil=True)
def partition_transform(x, breaks, offsets, n_cells, s_code):
    n, d = x.shape
    out = np.empty((n, d))
    cells = np.empty((n, d), dtype=np.int64)
    for i in range(n):
        prefix = 0
        for k in range(d):
            row = offsets[k] + prefix
            v = x[i, k]
            if v < 0.0:
                v = 0.0
            elif v > 1.0:
                v = 1.0
            # largest j with breaks[row, j] <= v, restricted to 0..n_cells-1
            lo = 0
            hi = n_cells - 1
            while lo < hi:
                mid = (lo + hi + 1) // 2
                if breaks[row, mid] <= v:
                    lo = mid
                else:
                    hi = mid - 1
            j = lo
            a = breaks[row, j]
            b = breaks[row, j + 1]
            t = (v - 0.5 * (a + b)) / (b - a)
            if t < -0.5:
                t = -0.5
            elif t > 0.5:
                t = 0.5
            out[i, k] = (j + _smooth_cdf(t, s_code)) / n_cells
            cells[i, k] = j
            prefix = prefix * n_cells + j
    return out, cells


@njit(cache=True, nogil=True)
def _basis_1d(x, m, family):
    if m == 0:
        return 1.0
    if family == 0:
        return math.sqrt(2.0) * math.cos(math.pi * m * x)
    lev = 0
    while (1 << (lev + 1)) <= m:
        lev += 1
    shift = m - (1 << lev)
    y = (1 << lev) * x - shift
    if y < 0.0 or y >= 1.0:
        return 0.0
    amp = math.sqrt(float(1 << lev))
    return amp if y < 0.5 else -amp


@njit(cache=True, nogil=True)
def basis_matrix(u, index, family):
    n, d = u.shape
    n_basis = index.shape[0]
    m_max = 0
    for l in range(n_basis):
        for k in range(d):
            if index[l, k] > m_max:
                m_max = index[l, k]
    table = np.empty((d, m_max + 1))
    out = np.empty((n, n_basis))
    for i in range(n):
        for k in range(d):
            for m in range(m_max + 1):
                table[k, m] = _basis_1d(u[i, k], m, family)
        for l in range(n_basis):
            v = 1.0
            for k in range(d):
                v *= table[k, index[l, k]]
            out[i, l] = v
    return out


@njit(cache=True, nogil=True)
def column_sums(mat):
    n, m = mat.shape
    out = np.zeros(m)
    comp = np.zeros(m)
    for i in range(n):
        for l in range(m):
            v = mat[i, l]
            total = out[l]
            t = total + v
            if abs(total) >= abs(v):
                comp[l] += (total - t) + v
            else:
                comp[l] += (v - t) + total
            out[l] = t
    return out + comp


@njit(cache=True, nogil=True)
def basis_row_sums(uc, index, family, coef):
    n0, d = uc.shape
    n_basis = index.shape[0]
    m_max = 0
    for l in range(n_basis):
        for k in range(d):
            if index[l, k] > m_max:
                m_max = index[l, k]
    table = np.empty((d, m_max + 1))
    out = np.empty(n0)
    for i in range(n0):
        for k in range(d):
            for m in range(m_max + 1):
                table[k, m] = _basis_1d(uc[i, k], m, family)
        total = 0.0
        comp = 0.0
        for l in range(n_basis):
            v = coef[l]
            for k in range(d):
                v *= table[k, index[l, k]]
            t = total + v
            if abs(total) >= abs(v):
                comp += (total - t) + v
            else:
                comp += (v - t) + total
            total = t
        out[i] = total + comp
    return out
