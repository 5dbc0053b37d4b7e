import os
import subprocess
import sys

import numpy as np
import pytest

from wunt._backend import HAVE_NUMBA, get_backend
from wunt.density import ProjectionBasis
from wunt.errors import ConfigError

pytestmark = pytest.mark.skipif(not HAVE_NUMBA, reason="numba not installed")


@pytest.fixture(scope="module")
def points():
    gen = np.random.default_rng(5)
    return gen.random((300, 3)), gen.random((200, 3))


@pytest.mark.parametrize("order", [2, 4, 6])
def test_kernel_row_sums_agree(points, order):
    uc, ut = points
    inv_h = np.array([4.0, 5.0, 3.0])
    a = get_backend("numba").kernel_row_sums(uc, ut, inv_h, order)
    b = get_backend("numpy").kernel_row_sums(uc, ut, inv_h, order)
    np.testing.assert_allclose(a, b, rtol=1e-13, atol=1e-13)


@pytest.mark.parametrize("family", ["cosine", "haar"])
def test_basis_kernels_agree(points, family):
    uc, ut = points
    b = ProjectionBasis(50, 3, family)
    nb, npy = get_backend("numba"), get_backend("numpy")
    m1 = nb.basis_matrix(ut, b.index, b.family_code)
    m2 = npy.basis_matrix(ut, b.index, b.family_code)
    np.testing.assert_allclose(m1, m2, rtol=1e-14, atol=1e-14)
    coef = nb.column_sums(m1)
    np.testing.assert_allclose(coef, npy.column_sums(m2), rtol=1e-13, atol=1e-12)
    np.testing.assert_allclose(
        nb.basis_row_sums(uc, b.index, b.family_code, coef),
        npy.basis_row_sums(uc, b.index, b.family_code, coef),
        rtol=1e-12,
        atol=1e-11,
    )


def test_unknown_backend():
    with pytest.raises(ConfigError):
        get_backend("cuda")


@pytest.mark.parametrize("flag,expected", [("1", "numpy"), ("0", "numba"), ("", "numba")])
def test_environment_flag(flag, expected):
    env = dict(os.environ, WUNT_DISABLE_NUMBA=flag)
    out = subprocess.run(
        [sys.executable, "-c", "from wunt._backend import backend_name; print(backend_name())"],
        env=env, capture_output=True, text=True, check=True,
    )
    assert out.stdout.strip() == expected
