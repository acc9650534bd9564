"""Compiled kernels for polynomial frames.

All kernels take the packed frame ``(exps, coefs, fld, comp)`` produced by
:func:`srlab.polyfield.pack_frame`. Controls are piecewise constant: row ``i``
of ``U`` (shape ``(N, k)``) acts on ``[t_i, t_{i+1}]``; one classical RK4 step
is taken per interval.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def _powers(x, maxdeg):
    n = x.shape[0]
    pw = np.ones((n, maxdeg + 1))
    for d in range(n):
        for p in range(1, maxdeg + 1):
            pw[d, p] = pw[d, p - 1] * x[d]
    return pw


@njit(cache=True)
def frame_eval(x, exps, coefs, fld, comp, k):
    n = x.shape[0]
    maxdeg = 0
    if exps.shape[0] > 0:
        maxdeg = exps.max()
    pw = _powers(x, maxdeg)
    F = np.zeros((n, k))
    for t in range(exps.shape[0]):
        m = coefs[t]
        for d in range(n):
            m *= pw[d, exps[t, d]]
        F[comp[t], fld[t]] += m
    return F


@njit(cache=True)
def frame_jac(x, exps, coefs, fld, comp, k):
    """``DF[j, c, d] = d f_j[c] / d x_d``."""
    n = x.shape[0]
    maxdeg = 0
    if exps.shape[0] > 0:
        maxdeg = exps.max()
    pw = _powers(x, maxdeg)
    DF = np.zeros((k, n, n))
    for t in range(exps.shape[0]):
        for d in range(n):
            e = exps[t, d]
            if e == 0:
                continue
            m = coefs[t] * e
            for dd in range(n):
                if dd == d:
                    m *= pw[dd, e - 1]
                else:
                    m *= pw[dd, exps[t, dd]]
            DF[fld[t], comp[t], d] += m
    return DF


@njit(cache=True)
def _velocity(x, u, exps, coefs, fld, comp, k):
    return frame_eval(x, exps, coefs, fld, comp, k) @ u


@njit(cache=True)
def _weighted_jac(x, u, w, exps, coefs, fld, comp, k):
    DF = frame_jac(x, exps, coefs, fld, comp, k)
    n = x.shape[0]
    A = np.zeros((n, n))
    for j in range(k):
        if w[j] != 0.0 and u[j] != 0.0:
            A += (w[j] * u[j]) * DF[j]
    return A


@njit(cache=True)
def rk4_forward(x0, U, h, exps, coefs, fld, comp, k):
    N = U.shape[0]
    n = x0.shape[0]
    X = np.empty((N + 1, n))
    X[0] = x0
    for i in range(N):
        x = X[i]
        u = U[i]
        k1 = _velocity(x, u, exps, coefs, fld, comp, k)
        k2 = _velocity(x + 0.5 * h * k1, u, exps, coefs, fld, comp, k)
        k3 = _velocity(x + 0.5 * h * k2, u, exps, coefs, fld, comp, k)
        k4 = _velocity(x + h * k3, u, exps, coefs, fld, comp, k)
        X[i + 1] = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return X


@njit(cache=True)
def rk4_step_sens(x, u, h, exps, coefs, fld, comp, k):
    """One RK4 step plus its Jacobians with respect to ``x`` and ``u``."""
    n = x.shape[0]
    I = np.eye(n)
    ones = np.ones(k)
    y1 = x.copy()
    F1 = frame_eval(y1, exps, coefs, fld, comp, k)
    k1 = F1 @ u
    A1 = _weighted_jac(y1, u, ones, exps, coefs, fld, comp, k)
    y2 = x + 0.5 * h * k1
    F2 = frame_eval(y2, exps, coefs, fld, comp, k)
    k2 = F2 @ u
    A2 = _weighted_jac(y2, u, ones, exps, coefs, fld, comp, k)
    y3 = x + 0.5 * h * k2
    F3 = frame_eval(y3, exps, coefs, fld, comp, k)
    k3 = F3 @ u
    A3 = _weighted_jac(y3, u, ones, exps, coefs, fld, comp, k)
    y4 = x + h * k3
    F4 = frame_eval(y4, exps, coefs, fld, comp, k)
    k4 = F4 @ u
    A4 = _weighted_jac(y4, u, ones, exps, coefs, fld, comp, k)

    dk1x = A1
    dk2x = A2 @ (I + 0.5 * h * dk1x)
    dk3x = A3 @ (I + 0.5 * h * dk2x)
    dk4x = A4 @ (I + h * dk3x)
    dk1u = F1
    dk2u = F2 + 0.5 * h * (A2 @ dk1u)
    dk3u = F3 + 0.5 * h * (A3 @ dk2u)
    dk4u = F4 + h * (A4 @ dk3u)

    xn = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    Ax = I + (h / 6.0) * (dk1x + 2.0 * dk2x + 2.0 * dk3x + dk4x)
    Bu = (h / 6.0) * (dk1u + 2.0 * dk2u + 2.0 * dk3u + dk4u)
    return xn, Ax, Bu


@njit(cache=True)
def rk4_forward_sens(x0, U, h, exps, coefs, fld, comp, k):
    N = U.shape[0]
    n = x0.shape[0]
    X = np.empty((N + 1, n))
    AX = np.empty((N, n, n))
    BU = np.empty((N, n, k))
    X[0] = x0
    for i in range(N):
        xn, Ax, Bu = rk4_step_sens(X[i], U[i], h, exps, coefs, fld, comp, k)
        X[i + 1] = xn
        AX[i] = Ax
        BU[i] = Bu
    return X, AX, BU


@njit(cache=True)
def adjoint_sweep(AX, BU, lam_end):
    """Gradient of ``lam_end . x_N`` with respect to every control row."""
    N = AX.shape[0]
    k = BU.shape[2]
    G = np.empty((N, k))
    lam = lam_end.copy()
    for i in range(N - 1, -1, -1):
        G[i] = BU[i].T @ lam
        lam = AX[i].T @ lam
    return G


@njit(cache=True)
def endpoint_jacobian(AX, BU):
    """``S[i] = d x_N / d u_i`` as an ``(N, n, k)`` array."""
    N = AX.shape[0]
    n = AX.shape[1]
    k = BU.shape[2]
    S = np.empty((N, n, k))
    Q = np.eye(n)
    for i in range(N - 1, -1, -1):
        S[i] = Q @ BU[i]
        Q = Q @ AX[i]
    return S


@njit(cache=True)
def rk4_flow(x0, U, h, w, exps, coefs, fld, comp, k):
    """RK4 on the pair ``x' = F(x)u``, ``P' = (sum_j w_j u_j Df_j(x)) P``, ``P(0) = I``."""
    N = U.shape[0]
    n = x0.shape[0]
    X = np.empty((N + 1, n))
    P = np.empty((N + 1, n, n))
    X[0] = x0
    P[0] = np.eye(n)
    for i in range(N):
        x = X[i]
        Pi = P[i]
        u = U[i]
        k1 = _velocity(x, u, exps, coefs, fld, comp, k)
        K1 = _weighted_jac(x, u, w, exps, coefs, fld, comp, k) @ Pi
        y = x + 0.5 * h * k1
        k2 = _velocity(y, u, exps, coefs, fld, comp, k)
        K2 = _weighted_jac(y, u, w, exps, coefs, fld, comp, k) @ (Pi + 0.5 * h * K1)
        y = x + 0.5 * h * k2
        k3 = _velocity(y, u, exps, coefs, fld, comp, k)
        K3 = _weighted_jac(y, u, w, exps, coefs, fld, comp, k) @ (Pi + 0.5 * h * K2)
        y = x + h * k3
        k4 = _velocity(y, u, exps, coefs, fld, comp, k)
        K4 = _weighted_jac(y, u, w, exps, coefs, fld, comp, k) @ (Pi + h * K3)
        X[i + 1] = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        P[i + 1] = Pi + (h / 6.0) * (K1 + 2.0 * K2 + 2.0 * K3 + K4)
    return X, P
