"""Independent reference solutions for the ``q = r = 2`` primal/dual pair.

These use closed-form structure instead of first-order iterations and serve
as cross-checks for :mod:`srlab.interpdual` on small grids.
"""

from __future__ import annotations

import numpy as np
from scipy.optimize import minimize_scalar


def difference_matrix(N: int) -> np.ndarray:
    """``(N, N-1)`` matrix mapping interior node values to cell derivatives."""
    h = 1.0 / N
    D = np.zeros((N, N - 1))
    for i in range(N):
        if i <= N - 2:
            D[i, i] += 1.0 / h
        if i >= 1:
            D[i, i - 1] -= 1.0 / h
    return D


def S_multiplier_oracle(u, M: float) -> float:
    """Primal value through its two-multiplier Lagrangian dual.

    For ``q = r = 2`` the problem ``max c.phi`` over two ellipsoids has the
    convex dual ``min_{a,b>=0} c.(aI + bD'D)^{-1}c / (4h) + a + b M^2``,
    minimized here by nested bounded scalar searches.
    """
    u = np.asarray(u, float)
    N = u.size
    h = 1.0 / N
    if M == 0 or np.ptp(u) == 0:
        return 0.0
    D = difference_matrix(N)
    c = D.T @ (h * u)
    lam, V = np.linalg.eigh(D.T @ D)
    cc = (V.T @ c) ** 2

    def g(a, b):
        return float(np.sum(cc / (a + b * lam)) / (4 * h) + a + b * M * M)

    cap = np.linalg.norm(c) / np.sqrt(h)
    a_max, b_max = cap, cap / (M * M)

    def inner(b):
        lo = 0.0 if b > 0 else 1e-300
        return minimize_scalar(lambda a: g(a, b), bounds=(lo, a_max), method="bounded",
                               options={"xatol": 1e-15 * max(a_max, 1)}).fun

    best = minimize_scalar(inner, bounds=(0.0, b_max), method="bounded",
                           options={"xatol": 1e-15 * max(b_max, 1)})
    return -float(min(best.fun, inner(0.0), inner(b_max)))


def K_path_oracle(u, M: float) -> float:
    """Dual value by a one-parameter search.

    Stationarity of ``sqrt(h)|D'w| + M sqrt(h)|u - w|`` forces
    ``w = (I + g D D')^{-1} u`` for some ``g in [0, inf]``, so the minimum is
    found by a dense log-grid over ``g`` refined with a bounded scalar search.
    """
    u = np.asarray(u, float)
    N = u.size
    h = 1.0 / N
    D = difference_matrix(N)
    lam, V = np.linalg.eigh(D @ D.T)
    lam = np.maximum(lam, 0.0)
    uc = V.T @ u

    def obj(w):
        return np.sqrt(h) * np.linalg.norm(D.T @ w) + M * np.sqrt(h) * np.linalg.norm(u - w)

    def along(lg):
        return obj(V @ (uc / (1.0 + np.exp(lg) * lam)))

    grid = np.linspace(-40.0, 40.0, 1601)
    vals = np.array([along(g) for g in grid])
    i = int(np.argmin(vals))
    ref = minimize_scalar(along, bounds=(grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]),
                          method="bounded", options={"xatol": 1e-12})
    return float(min(ref.fun, vals.min(), obj(u), obj(np.full(N, u.mean()))))


def K_coordinate_descent(u, M: float, starts: int = 8, sweeps: int = 400, seed: int = 0) -> float:
    """Multistart coordinate descent on the ``q* = r* = 2`` dual objective.

    Each coordinate update is an exact bounded line minimization; the constant
    direction and the direction towards ``u`` are also searched every sweep,
    which helps the method leave the kinks of the non-smooth objective. This
    gives an upper bound only and is kept as a coarse sanity check.
    """
    u = np.asarray(u, float)
    N = u.size
    h = 1.0 / N
    D = difference_matrix(N)

    def obj(w):
        return np.sqrt(h) * np.linalg.norm(D.T @ w) + M * np.sqrt(h) * np.linalg.norm(u - w)

    rng = np.random.default_rng(seed)
    span = float(np.ptp(u)) + 1.0
    best = min(obj(u), obj(np.full(N, u.mean())))
    inits = [u.copy(), np.full(N, u.mean())] + [u + span * rng.normal(size=N) for _ in range(starts - 2)]
    for w in inits:
        w = w.copy()
        for _ in range(sweeps):
            before = obj(w)
            dirs = [np.eye(N)[j] for j in range(N)] + [np.ones(N), u - w]
            for d in dirs:
                if not np.any(d):
                    continue
                res = minimize_scalar(lambda t: obj(w + t * d), bracket=(-span, span))
                if res.fun < obj(w):
                    w = w + res.x * d
            if before - obj(w) <= 1e-15 * (1 + before):
                break
        best = min(best, obj(w))
    return float(best)
