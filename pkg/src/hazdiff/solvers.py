"""Small-dimension root finders for smooth estimating equations."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np


class ConvergenceError(RuntimeError):
    def __init__(self, message, x=None, fnorm=None):
        super().__init__(message)
        self.x = x
        self.fnorm = fnorm


@dataclass
class RootResult:
    x: np.ndarray
    fnorm: float
    iterations: int
    method: str
    evaluations: int = 0
    boxed: bool = False


def fd_jacobian(f: Callable, x: np.ndarray, fx=None, rel_step: float = 1e-6) -> np.ndarray:
    """Central finite-difference Jacobian with steps ``rel_step * max(1, |x_j|)``."""
    x = np.asarray(x, dtype=float)
    cols = []
    for j in range(x.size):
        h = rel_step * max(1.0, abs(x[j]))
        e = np.zeros_like(x)
        e[j] = h
        cols.append((f(x + e) - f(x - e)) / (2 * h))
    return np.column_stack(cols)


def _clip(x, bound):
    if bound is None:
        return x, False
    clipped = np.clip(x, -bound, bound)
    return clipped, bool(np.any(clipped != x))


def damped_newton(f: Callable, x0, tol: float = 1e-9, max_iter: int = 100, max_halvings: int = 30,
                  rel_step: float = 1e-6, bound: float | None = None) -> RootResult:
    """Newton iteration with a finite-difference Jacobian and step halving.

    Each step is halved until the sup-norm of ``f`` decreases.  Iterates are
    clipped to ``[-bound, bound]``.
    """
    x = np.array(x0, dtype=float)
    fx = np.asarray(f(x), dtype=float)
    norm = float(np.max(np.abs(fx)))
    nfev, boxed = 1, False
    for it in range(max_iter + 1):
        if norm < tol:
            return RootResult(x, norm, it, "newton", nfev, boxed)
        if it == max_iter:
            break
        jac = fd_jacobian(f, x, fx, rel_step)
        nfev += 2 * x.size
        try:
            step = np.linalg.solve(jac, -fx)
        except np.linalg.LinAlgError:
            raise ConvergenceError("singular Jacobian", x, norm) from None
        if not np.all(np.isfinite(step)):
            raise ConvergenceError("singular Jacobian", x, norm)
        for _ in range(max_halvings + 1):
            trial, hit = _clip(x + step, bound)
            ft = np.asarray(f(trial), dtype=float)
            nfev += 1
            tnorm = float(np.max(np.abs(ft)))
            if np.isfinite(tnorm) and tnorm < norm:
                break
            step = step / 2
        else:
            raise ConvergenceError("step halving failed to reduce the score", x, norm)
        x, fx, norm = trial, ft, tnorm
        boxed = boxed or hit
    raise ConvergenceError(f"no convergence after {max_iter} iterations", x, norm)


def broyden(f: Callable, x0, tol: float = 1e-9, max_iter: int = 200, rel_step: float = 1e-6,
            bound: float | None = None) -> RootResult:
    """Broyden's ("good") method: one finite-difference Jacobian, then rank-one updates."""
    x = np.array(x0, dtype=float)
    fx = np.asarray(f(x), dtype=float)
    jac = fd_jacobian(f, x, fx, rel_step)
    nfev, boxed = 1 + 2 * x.size, False
    for it in range(max_iter + 1):
        norm = float(np.max(np.abs(fx)))
        if norm < tol:
            return RootResult(x, norm, it, "broyden", nfev, boxed)
        if it == max_iter:
            break
        try:
            dx = np.linalg.solve(jac, -fx)
        except np.linalg.LinAlgError:
            raise ConvergenceError("singular Broyden Jacobian", x, norm) from None
        new, hit = _clip(x + dx, bound)
        boxed = boxed or hit
        dx = new - x
        fnew = np.asarray(f(new), dtype=float)
        nfev += 1
        if not np.all(np.isfinite(fnew)):
            raise ConvergenceError("score not finite", x, norm)
        denom = float(dx @ dx)
        if denom == 0:
            break
        jac = jac + np.outer(fnew - fx - jac @ dx, dx) / denom
        x, fx = new, fnew
    raise ConvergenceError(f"Broyden: no convergence after {max_iter} iterations", x,
                           float(np.max(np.abs(fx))))


def solve(f: Callable, x0, tol: float = 1e-9, max_iter: int = 100, bound: float | None = None,
          fallback_iter: int = 200) -> RootResult:
    """Damped Newton from ``x0``; on failure, Broyden from the origin."""
    try:
        return damped_newton(f, x0, tol, max_iter, bound=bound)
    except ConvergenceError as first:
        try:
            res = broyden(f, np.zeros_like(np.asarray(x0, dtype=float)), tol, fallback_iter, bound=bound)
        except ConvergenceError as second:
            raise ConvergenceError(f"Newton: {first}; fallback {second}", second.x, second.fnorm) from None
        res.method = "broyden-fallback"
        return res
