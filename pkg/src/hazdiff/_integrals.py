"""Exact and Gauss-Legendre integrals over grid intervals.

All score integrands are, on each grid interval, either ``exp(b t)`` times a
constant or the logistic curve ``expit(eta0 - b s)`` in the offset ``s``.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit

SERIES_CUTOFF = 1e-8


def exp_integral(b: float, start, width):
    """``int_{start}^{start+width} exp(b t) dt``, elementwise."""
    start = np.asarray(start, dtype=float)
    width = np.asarray(width, dtype=float)
    if abs(b) < SERIES_CUTOFF:
        # expm1(b w)/b = w (1 + b w/2 + (b w)^2/6)
        bw = b * width
        return np.exp(b * start) * width * (1.0 + bw / 2.0 + bw * bw / 6.0)
    return np.exp(b * start) * np.expm1(b * width) / b


def logistic_integral(eta0, b: float, width):
    """``int_0^width expit(eta0 - b s) ds``, elementwise and exact.

    Uses ``width - log1p(q expm1(b width)) / b`` with ``q = expit(-eta0)``,
    switching to a short series in ``b`` when ``|b| < 1e-8``.
    """
    eta0 = np.asarray(eta0, dtype=float)
    width = np.asarray(width, dtype=float)
    q = expit(-eta0)
    if abs(b) < SERIES_CUTOFF:
        bw = b * width
        g = q * (1.0 - q)
        return width * (1.0 - q - g * bw / 2.0 - g * (1.0 - 2.0 * q) * bw * bw / 6.0)
    return width - np.log1p(q * np.expm1(b * width)) / b


_GL_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def gauss_legendre(order: int = 16) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights on ``[0, 1]``."""
    if order not in _GL_CACHE:
        x, w = np.polynomial.legendre.leggauss(order)
        _GL_CACHE[order] = ((x + 1.0) / 2.0, w / 2.0)
    return _GL_CACHE[order]


def logistic_integral_gl(eta0, b: float, width, order: int = 16):
    """Gauss-Legendre counterpart of :func:`logistic_integral`."""
    eta0 = np.asarray(eta0, dtype=float)
    width = np.asarray(width, dtype=float)
    nodes, weights = gauss_legendre(order)
    total = np.zeros(np.broadcast(eta0, width).shape)
    for x, w in zip(nodes, weights):
        total += w * expit(eta0 - b * x * width)
    return total * width


def composite_gl(f, upper, panels: int = 8, order: int = 16):
    """``int_0^upper f(t) dt`` for a vector of upper limits.

    ``f`` maps an array of times with shape (n, m) to values of the same
    shape; row ``i`` belongs to ``upper[i]``.
    """
    upper = np.asarray(upper, dtype=float)
    nodes, weights = gauss_legendre(order)
    edges = np.arange(panels) / panels
    t = (edges[:, None] + nodes[None, :] / panels).reshape(-1)
    w = np.tile(weights / panels, panels)
    values = f(upper[:, None] * t[None, :])
    return upper * (values @ w)
