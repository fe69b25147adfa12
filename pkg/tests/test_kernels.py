import os
import subprocess
import sys

import numpy as np
import pytest

from divdecode import _kernels
from divdecode._kernels import numba_kernels, numpy_kernels

pytestmark = pytest.mark.skipif(numba_kernels is None, reason="numba unavailable")


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def test_log_softmax_agree(rng):
    for _ in range(20):
        z = rng.normal(scale=5, size=rng.integers(1, 50))
        np.testing.assert_allclose(numba_kernels.log_softmax(z), numpy_kernels.log_softmax(z),
                                   rtol=0, atol=1e-12)


def test_softmax_temperature_agree(rng):
    for T in (0.1, 0.5, 1.0, 3.0):
        z = rng.normal(size=30)
        np.testing.assert_allclose(numba_kernels.softmax_temperature(z, T),
                                   numpy_kernels.softmax_temperature(z, T), atol=1e-14)


def test_top_s_agree_with_ties():
    p = np.array([0.2, 0.3, 0.2, 0.3])
    for s in range(1, 5):
        np.testing.assert_array_equal(numba_kernels.top_s_filter(p, s), numpy_kernels.top_s_filter(p, s))


def test_draw_agree(rng):
    for _ in range(200):
        p = rng.dirichlet(np.ones(7))
        p[rng.integers(7)] = 0.0
        p /= p.sum()
        u = rng.random()
        assert numba_kernels.draw(p, u) == numpy_kernels.draw(p, u)


def test_draw_never_returns_zero_mass():
    p = np.array([0.5, 0.5, 0.0])
    for kern in (numba_kernels, numpy_kernels):
        assert kern.draw(p, 0.9999999999999999) == 1


def test_sample_step_agree(rng):
    for _ in range(100):
        z = rng.normal(size=12)
        u = rng.random()
        a = numba_kernels.sample_step(z, 0.7, 5, u)
        b = numpy_kernels.sample_step(z, 0.7, 5, u)
        assert a[0] == b[0]
        assert a[1] == pytest.approx(b[1], abs=1e-12)


def test_assign_and_centroids_agree(rng):
    X = rng.normal(size=(60, 4))
    C = rng.normal(size=(5, 4))
    la, da = numba_kernels.assign(X, C)
    lb, db = numpy_kernels.assign(X, C)
    np.testing.assert_array_equal(la, lb)
    np.testing.assert_allclose(da, db, atol=1e-12)
    ca, na = numba_kernels.centroids(X, la, 5)
    cb, nb = numpy_kernels.centroids(X, la, 5)
    np.testing.assert_array_equal(na, nb)
    np.testing.assert_allclose(ca, cb, atol=1e-12)


def test_assign_ties_go_to_lower_cluster():
    X = np.array([[0.0, 0.0]])
    C = np.array([[1.0, 0.0], [-1.0, 0.0]])
    for kern in (numba_kernels, numpy_kernels):
        assert kern.assign(X, C)[0][0] == 0


@pytest.mark.parametrize("flag,expected", [("1", "numpy"), ("0", "numba")])
def test_env_flag_selects_backend(flag, expected):
    env = dict(os.environ, DIVDECODE_NO_NUMBA=flag)
    out = subprocess.run([sys.executable, "-c", "import divdecode; print(divdecode.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == expected


def test_active_backend_is_one_of_both():
    assert _kernels.kernels in (numba_kernels, numpy_kernels)


def test_backends_agree_end_to_end(tmp_path):
    prompts = tmp_path / "p.txt"
    prompts.write_text("the \nwhat \nshe \n", encoding="utf-8")
    outputs = {}
    for flag in ("0", "1"):
        env = dict(os.environ, DIVDECODE_NO_NUMBA=flag)
        res = subprocess.run(
            [sys.executable, "-m", "divdecode.cli", "decode", "--corpus", "builtin:toy_corpus", "--unit", "char",
             "--prompts", str(prompts), "--kind", "sample", "--top-s", "10", "--oversample", "pdc",
             "--pool", "30", "--m", "5", "--max-len", "30"],
            env=env, capture_output=True, text=True, check=True)
        outputs[flag] = [l.split("\t") for l in res.stdout.splitlines()[1:]]
    a, b = outputs["0"], outputs["1"]
    assert len(a) == len(b) == 15
    for x, y in zip(a, b):
        assert x[:3] + x[4:] == y[:3] + y[4:]
        assert abs(float(x[3]) - float(y[3])) <= 1e-9
