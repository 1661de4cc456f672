import numpy as np
import pytest

from maxentcert import _kernels_py, kernels


def _panel_inputs(seed, P=7, N=21, K=3, with_inf=False):
    rng = np.random.default_rng(seed)
    E = rng.exponential(size=P * N)
    if with_inf:
        E[::5] = np.inf
    W = rng.standard_normal((P * N, K))
    return E, W, -0.3, rng.random(N), rng.random(N), rng.random(P)


def test_backend_reported():
    assert kernels.BACKEND in ("compiled", "python")
    assert "python" in kernels.available_backends()
    with pytest.raises(ValueError):
        kernels.set_backend("fortran")


@pytest.mark.parametrize("with_inf", [False, True])
def test_backends_agree_on_panel_sums(with_inf):
    args = _panel_inputs(0, with_inf=with_inf)
    ref = _kernels_py.panel_sums(*args)
    for name, impl in kernels.available_backends().items():
        out = impl.panel_sums(*args)
        for a, b in zip(out, ref):
            assert np.allclose(a, b, rtol=1e-13, atol=1e-15), name


def test_panel_sums_values():
    E = np.zeros(2 * 3)
    W = np.ones((6, 1))
    k, g, a = kernels.panel_sums(E, W, 0.0, np.array([1.0, 2.0, 1.0]),
                                 np.array([0.0, 2.0, 0.0]), np.array([0.5, 2.0]))
    assert k[:, 0].tolist() == [2.0, 8.0]
    assert g[:, 0].tolist() == [1.0, 4.0]
    assert a[:, 0].tolist() == [2.0, 8.0]


@pytest.mark.parametrize("t", [0.0, 0.7, 25.0])
def test_backends_agree_on_tilted_line_stats(t):
    rng = np.random.default_rng(3)
    logw = rng.standard_normal(5000)
    f = rng.random(5000) * 30 + 1e3
    ref = _kernels_py.tilted_line_stats(logw, f, t)
    for name, impl in kernels.available_backends().items():
        out = impl.tilted_line_stats(logw, f, t)
        assert np.allclose(out, ref, rtol=1e-10), name


def test_tilted_line_stats_closed_form():
    f = np.array([0.0, 1.0])
    logz, mean, var = kernels.tilted_line_stats(np.zeros(2), f, np.log(3.0))
    assert logz == pytest.approx(np.log(4.0 / 3.0))
    assert mean == pytest.approx(0.25)
    assert var == pytest.approx(0.1875)
