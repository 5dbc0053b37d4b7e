"""Independent reference implementations used as test oracles.

Nothing here calls into the package's numerical code: kernels and bases are
written out from their formulas and the double sums are plain Python loops.
"""

import math


def g_kernel(x, order):
    if order == 2:
        return 0.75 * (1.0 - x * x) if abs(x) < 1.0 else 0.0
    phi = math.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
    if order == 4:
        return 0.5 * (3.0 - x * x) * phi
    return (15.0 - 10.0 * x * x + x**4) / 8.0 * phi


def product_kernel(u, v, h, order):
    val = 1.0
    for a, b, hk in zip(u, v, h):
        val *= g_kernel((a - b) / hk, order) / hk
    return val


def cosine_1d(x, m):
    return 1.0 if m == 0 else math.sqrt(2.0) * math.cos(math.pi * m * x)


def haar_1d(x, m):
    if m == 0:
        return 1.0
    lev = int(math.floor(math.log2(m)))
    k = m - 2**lev
    scale = 2.0**lev
    t = x * scale - k
    if 0.0 <= t < 0.5:
        return math.sqrt(scale)
    if 0.5 <= t < 1.0 or (t == 1.0 and x == 1.0):
        return -math.sqrt(scale)
    return 0.0


def block_indices(count, d):
    """Multi-indices ordered by max component, then lexicographically."""
    m = 1
    while m**d < count:
        m += 1
    grid = [()]
    for _ in range(d):
        grid = [g + (j,) for g in grid for j in range(m)]
    grid.sort(key=lambda g: max(g))  # stable: lexicographic inside a block
    return grid[:count]


def projection_kernel(u, v, count, family):
    f = cosine_1d if family == "cosine" else haar_1d
    total = []
    for idx in block_indices(count, len(u)):
        pu = pv = 1.0
        for a, b, m in zip(u, v, idx):
            pu *= f(a, m)
            pv *= f(b, m)
        total.append(pu * pv)
    return math.fsum(total)


def ratio_estimate(u, z, y, kern):
    """mu_CT as the ratio of two control-by-treated double sums."""
    num, den = [], []
    for i in range(len(z)):
        if z[i] != 0:
            continue
        for j in range(len(z)):
            if z[j] != 1:
                continue
            k = kern(u[i], u[j])
            num.append(y[i] * k)
            den.append(k)
    return math.fsum(num) / math.fsum(den)
