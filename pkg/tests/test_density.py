import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from wunt.density import (
    ProductKernel,
    ProjectionBasis,
    default_bandwidth,
    default_basis_count,
    kernel_eval,
    multi_indices,
    projection_kernel_eval,
    univariate_kernel,
)
from wunt.errors import ConfigError


def _moment(order, t):
    f = lambda x: x**t * float(univariate_kernel(x, order))
    if order == 2:
        return integrate.quad(f, -1, 1, epsabs=1e-13, epsrel=1e-13)[0]
    return integrate.quad(f, -np.inf, np.inf, epsabs=1e-13, epsrel=1e-13)[0]


@pytest.mark.parametrize("order", [2, 4, 6])
def test_moment_cancellation(order):
    assert abs(_moment(order, 0) - 1.0) < 1e-8
    for t in range(1, order):
        assert abs(_moment(order, t)) < 1e-8, (order, t)
    # the order-th moment is what the order is about
    assert abs(_moment(order, order)) > 1e-3


def test_order2_is_epanechnikov():
    assert float(univariate_kernel(0.0, 2)) == 0.75
    assert float(univariate_kernel(1.0, 2)) == 0.0
    assert float(univariate_kernel(-1.5, 2)) == 0.0


def test_higher_order_kernels_go_negative():
    x = np.linspace(-4, 4, 801)
    assert univariate_kernel(x, 4).min() < 0
    assert univariate_kernel(x, 6).min() < 0


def test_kernel_eval_examples():
    k = ProductKernel(2, 1.0)
    assert kernel_eval(k, [0.3, 0.7], [0.3, 0.7]) == pytest.approx(0.75**2, abs=1e-15)
    k = ProductKernel(4, 0.5)
    assert kernel_eval(k, [0.7], [0.2]) == pytest.approx(float(univariate_kernel(1.0, 4)) / 0.5, rel=1e-14)


@given(
    u=st.lists(st.floats(-2, 2), min_size=3, max_size=3),
    v=st.lists(st.floats(-2, 2), min_size=3, max_size=3),
    h=st.floats(0.05, 3.0),
    order=st.sampled_from([2, 4, 6]),
)
def test_kernel_symmetry_and_scaling(u, v, h, order):
    k = ProductKernel(order, h)
    assert kernel_eval(k, u, v) == kernel_eval(k, v, u)
    diff = (np.array(u) - np.array(v)) / h
    direct = h**-3 * np.prod(univariate_kernel(diff, order))
    assert kernel_eval(k, u, v) == pytest.approx(direct, rel=1e-12, abs=1e-300)


def test_per_dimension_bandwidths():
    k = ProductKernel(2, [0.5, 2.0])
    assert kernel_eval(k, [0.25, 1.0], [0.0, 0.0]) == pytest.approx(
        float(univariate_kernel(0.5, 2) * univariate_kernel(0.5, 2)) / 1.0
    )
    with pytest.raises(ConfigError):
        k.bandwidths(3)


@pytest.mark.parametrize("bad", [0.0, -1.0, np.inf])
def test_non_positive_bandwidth(bad):
    with pytest.raises(ConfigError):
        ProductKernel(2, bad)


def test_unknown_order():
    with pytest.raises(ConfigError):
        ProductKernel(3, 1.0)


def test_multi_index_blocks():
    idx = multi_indices(9, 2)
    assert idx.tolist() == [[0, 0], [0, 1], [1, 0], [1, 1], [0, 2], [1, 2], [2, 0], [2, 1], [2, 2]]
    # intermediate L truncates the last block
    assert multi_indices(6, 2).tolist() == idx[:6].tolist()
    full = multi_indices(27, 3)
    assert full.max() == 2 and len({tuple(r) for r in full}) == 27
    with pytest.raises(ConfigError):
        multi_indices(0, 2)


def _gram_1d(family, count, n_points):
    # midpoint rule on a dyadic grid: exact for Haar, spectrally accurate for cosine
    x = (np.arange(n_points) + 0.5) / n_points
    psi = ProjectionBasis(count, 1, family).evaluate(x[:, None])
    return psi.T @ psi / n_points


@pytest.mark.parametrize("family", ["cosine", "haar"])
def test_gram_orthonormal_1d(family):
    g = _gram_1d(family, 64, 2**14)
    assert np.max(np.abs(g - np.eye(64))) < 1e-6


@pytest.mark.parametrize("family", ["cosine", "haar"])
def test_gram_orthonormal_2d(family):
    m = 2**7
    x = (np.arange(m) + 0.5) / m
    pts = np.array(np.meshgrid(x, x, indexing="ij")).reshape(2, -1).T
    psi = ProjectionBasis(64, 2, family).evaluate(pts)
    g = psi.T @ psi / pts.shape[0]
    assert np.max(np.abs(g - np.eye(64))) < 1e-6


@pytest.mark.parametrize("family", ["cosine", "haar"])
def test_sup_norm_growth(family):
    x = (np.arange(4096) + 0.5) / 4096
    psi = ProjectionBasis(64, 1, family).evaluate(x[:, None])
    ell = np.arange(1, 65)
    assert np.all(np.abs(psi).max(axis=0) <= 1.0 * np.sqrt(ell) + 1e-12)


def test_projection_kernel_examples():
    b1 = ProjectionBasis(1, 2)
    assert projection_kernel_eval(b1, [0.1, 0.2], [0.9, 0.4]) == 1.0
    b2 = ProjectionBasis(2, 1)
    for x, y in [(0.1, 0.7), (0.5, 0.5), (0.0, 1.0)]:
        expect = 1.0 + 2.0 * math.cos(math.pi * x) * math.cos(math.pi * y)
        assert projection_kernel_eval(b2, [x], [y]) == pytest.approx(expect, abs=1e-14)


@pytest.mark.parametrize("family", ["cosine", "haar"])
def test_projection_kernel_reproduces_constants(family):
    b = ProjectionBasis(8, 1, family)
    for x in (0.13, 0.5, 0.77):
        f = lambda y: projection_kernel_eval(b, [x], [y])
        pts = [k / 8 for k in range(1, 8)]
        val = integrate.quad(f, 0, 1, points=pts, limit=200, epsabs=1e-13)[0]
        assert abs(val - 1.0) < 1e-10


def test_projection_kernel_reproducing_property():
    b = ProjectionBasis(5, 1)
    x = 0.31
    for j in range(5):
        psi_j = lambda y: b.evaluate([[y]])[0, j]
        val = integrate.quad(lambda y: projection_kernel_eval(b, [x], [y]) * psi_j(y), 0, 1, limit=200, epsabs=1e-13)[0]
        assert val == pytest.approx(b.evaluate([[x]])[0, j], abs=1e-10)


def test_projection_kernel_symmetric(gen):
    b = ProjectionBasis(20, 2, "haar")
    for _ in range(20):
        u, v = gen.random(2), gen.random(2)
        assert projection_kernel_eval(b, u, v) == pytest.approx(projection_kernel_eval(b, v, u), abs=1e-13)


def test_basis_count_checked():
    with pytest.raises(ConfigError):
        ProjectionBasis(0, 1)
    with pytest.raises(ConfigError):
        ProjectionBasis(4, 1, "legendre")


def test_default_bandwidth_examples():
    assert default_bandwidth(100, 1, 0.25, 0.25) == pytest.approx(0.01, rel=1e-14)
    assert default_bandwidth(1000, 2) == pytest.approx(1000 ** (-2 / 6), rel=1e-14)
    # warm-up form n^(-2/(1+2(a+b)))
    assert default_bandwidth(4000, 1, 0.2, 0.2) == pytest.approx(4000 ** (-2 / 1.8), rel=1e-14)
    # very smooth classes push h to c
    assert default_bandwidth(1000, 3, 1e9, 1e9, c=0.7) == pytest.approx(0.7, rel=1e-6)
    with pytest.raises(ConfigError):
        default_bandwidth(1, 1)


def test_default_basis_count_examples():
    assert default_basis_count(100, 1, 0.25, 0.25) == 100
    assert default_basis_count(10000, 4, 1.0, 1.0) == 10000
    assert default_basis_count(100, 1, 0.25, 0.25, c=1e-3) == 1
