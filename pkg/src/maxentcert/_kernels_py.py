"""Pure numpy versions of the compiled kernels in ``_kernels.pyx``."""
import numpy as np


def panel_sums(energy, weights, floor, kronrod, gauss, jacobian):
    """Per-panel Kronrod, Gauss and absolute-Kronrod sums of ``exp(floor - E) * W``.

    ``energy`` has P*N entries (P panels of N nodes), ``weights`` is (P*N, K).
    Returns three (P, K) arrays already multiplied by the panel Jacobians.
    """
    P, N = jacobian.shape[0], kronrod.shape[0]
    with np.errstate(over="ignore"):
        w = np.exp(floor - energy).reshape(P, N)
    F = weights.reshape(P, N, -1)
    v = w[:, :, None] * F
    jac = jacobian[:, None]
    k = np.einsum("pnk,n->pk", v, kronrod) * jac
    g = np.einsum("pnk,n->pk", v, gauss) * jac
    a = np.einsum("pnk,n->pk", np.abs(v), kronrod) * jac
    return k, g, a


def tilted_line_stats(logw, f, t):
    """``(log Z, mean, variance)`` of ``f`` under ``p_i ~ exp(logw_i - t f_i)``."""
    a = logw - t * f
    amax = np.max(a)
    e = np.exp(a - amax)
    s0 = e.sum()
    mean = (e @ f) / s0
    var = (e @ (f - mean) ** 2) / s0
    return amax + np.log(s0), mean, var
