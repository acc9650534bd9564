"""Horizontal curves: integration, variational flow, shortest paths, ball-box probing.

Controls are piecewise constant on a uniform grid of ``N`` intervals of
``[0, 1]`` and every interval is advanced by one classical RK4 step, so a
:class:`Trajectory`'s states are a deterministic function of ``(x0, controls)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.optimize import minimize

from . import _kernels
from .errors import DegenerateInputError, DomainError, EscapeError
from .srgeom import SRStructure, catalogue

CANDIDATE_LABEL = "candidate local minimizer"


@dataclass(eq=False)
class Trajectory:
    """Sampled horizontal curve.

    ``controls`` has shape ``(k, N)``; column ``i`` acts on ``[t_i, t_{i+1}]``.
    ``info`` carries solver diagnostics (endpoint defect, stationarity, label).
    """

    grid: np.ndarray
    states: np.ndarray
    controls: np.ndarray
    length_l: float
    structure: SRStructure | None = None
    info: dict = field(default_factory=dict)

    @property
    def N(self) -> int:
        return self.controls.shape[1]

    @property
    def h(self) -> float:
        return 1.0 / self.N

    @property
    def speeds(self) -> np.ndarray:
        return np.linalg.norm(self.controls, axis=0)

    @property
    def energy(self) -> float:
        return float(self.h * np.sum(self.controls ** 2))


@dataclass(eq=False)
class VariationalFlow:
    grid: np.ndarray
    matrices: np.ndarray
    inverses: np.ndarray
    weights: np.ndarray


@dataclass
class SolverOptions:
    """Settings for :func:`solve_shortest`."""

    endpoint_tol: float = 1e-8
    max_outer: int = 25
    inner_maxiter: int = 3000
    rho0: float = 10.0
    rho_growth: float = 10.0
    rho_max: float = 1e8
    perturb: float = 0.3
    modes: int = 4
    seed: int = 0
    polish_iters: int = 8
    reparametrize: bool = True


# dynamics backends -------------------------------------------------------------

def _rk4_step_py(structure, x, u, h):
    F = structure.F
    k1 = F(x) @ u
    k2 = F(x + 0.5 * h * k1) @ u
    k3 = F(x + 0.5 * h * k2) @ u
    k4 = F(x + h * k3) @ u
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _wjac_py(structure, x, u, w):
    DF = structure.DF(x)
    return np.einsum("j,jcd->cd", w * u, DF)


def _forward(structure, x0, U, h):
    """States for row-major controls ``U`` of shape ``(N, k)``."""
    if structure.is_polynomial:
        return _kernels.rk4_forward(x0, U, h, *structure.packed, structure.rank_k)
    X = np.empty((U.shape[0] + 1, x0.shape[0]))
    X[0] = x0
    for i, u in enumerate(U):
        X[i + 1] = _rk4_step_py(structure, X[i], u, h)
    return X


def _forward_sens(structure, x0, U, h):
    if structure.is_polynomial:
        return _kernels.rk4_forward_sens(x0, U, h, *structure.packed, structure.rank_k)
    N, k = U.shape
    n = x0.shape[0]
    X = np.empty((N + 1, n))
    AX = np.empty((N, n, n))
    BU = np.empty((N, n, k))
    X[0] = x0
    I = np.eye(n)
    ones = np.ones(k)
    for i, u in enumerate(U):
        x = X[i]
        ys, ks, Fs, As = [x], [], [], []
        for c in (0.5, 0.5, 1.0, None):
            y = ys[-1]
            Fy = structure.F(y)
            Fs.append(Fy)
            As.append(_wjac_py(structure, y, u, ones))
            ks.append(Fy @ u)
            if c is not None:
                ys.append(x + c * h * ks[-1])
        dkx = [As[0]]
        dku = [Fs[0]]
        for s, c in zip((1, 2, 3), (0.5, 0.5, 1.0)):
            dkx.append(As[s] @ (I + c * h * dkx[-1]))
            dku.append(Fs[s] + c * h * (As[s] @ dku[-1]))
        X[i + 1] = x + (h / 6.0) * (ks[0] + 2 * ks[1] + 2 * ks[2] + ks[3])
        AX[i] = I + (h / 6.0) * (dkx[0] + 2 * dkx[1] + 2 * dkx[2] + dkx[3])
        BU[i] = (h / 6.0) * (dku[0] + 2 * dku[1] + 2 * dku[2] + dku[3])
    return X, AX, BU


def _flow(structure, x0, U, h, w):
    if structure.is_polynomial:
        return _kernels.rk4_flow(x0, U, h, np.asarray(w, float), *structure.packed, structure.rank_k)
    N = U.shape[0]
    n = x0.shape[0]
    X = np.empty((N + 1, n))
    P = np.empty((N + 1, n, n))
    X[0], P[0] = x0, np.eye(n)
    for i, u in enumerate(U):
        x, Pi = X[i], P[i]
        F = structure.F
        k1 = F(x) @ u
        K1 = _wjac_py(structure, x, u, w) @ Pi
        y = x + 0.5 * h * k1
        k2 = F(y) @ u
        K2 = _wjac_py(structure, y, u, w) @ (Pi + 0.5 * h * K1)
        y = x + 0.5 * h * k2
        k3 = F(y) @ u
        K3 = _wjac_py(structure, y, u, w) @ (Pi + 0.5 * h * K2)
        y = x + h * k3
        k4 = F(y) @ u
        K4 = _wjac_py(structure, y, u, w) @ (Pi + h * K3)
        X[i + 1] = x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        P[i + 1] = Pi + (h / 6.0) * (K1 + 2 * K2 + 2 * K3 + K4)
    return X, P


def endpoint_sensitivity(structure: SRStructure, x0, controls) -> tuple[np.ndarray, np.ndarray]:
    """States and ``S[i] = d x_N / d u_i`` (shape ``(N, n, k)``) for controls ``(k, N)``."""
    U = np.ascontiguousarray(np.asarray(controls, float).T)
    X, AX, BU = _forward_sens(structure, np.asarray(x0, float), U, 1.0 / U.shape[0])
    return X, _kernels.endpoint_jacobian(AX, BU)


def _check_escape(structure, X, grid):
    lo, hi = structure.domain_box[:, 0], structure.domain_box[:, 1]
    bad = np.any((X < lo - 1e-12) | (X > hi + 1e-12) | ~np.isfinite(X), axis=1)
    if np.any(bad):
        i = int(np.argmax(bad))
        raise EscapeError(f"trajectory leaves the domain box at t = {grid[i]:.6g}",
                          exit_time=float(grid[i]), exit_state=X[i])


def _length(controls, h):
    return float(h * np.sum(np.linalg.norm(controls, axis=0)))


# public operations ----------------------------------------------------------------

def integrate(structure: SRStructure, x0, controls) -> Trajectory:
    """RK4-integrate ``x' = sum_j u_j f_j(x)`` with one step per control interval."""
    x0 = structure.check_point(x0)
    controls = np.asarray(controls, float)
    if controls.ndim != 2 or controls.shape[0] != structure.rank_k or controls.shape[1] < 1:
        raise ValueError(f"controls must have shape ({structure.rank_k}, N)")
    N = controls.shape[1]
    grid = np.linspace(0.0, 1.0, N + 1)
    X = _forward(structure, x0, np.ascontiguousarray(controls.T), 1.0 / N)
    _check_escape(structure, X, grid)
    return Trajectory(grid, X, controls.copy(), _length(controls, 1.0 / N), structure)


def variational_flow(structure: SRStructure, traj: Trajectory, varied: int | None = 0,
                     full: bool = False) -> VariationalFlow:
    """Fundamental matrix of ``P' = (sum_{j != varied} u_j Df_j(x)) P``, ``P(0) = I``.

    ``full=True`` keeps every component (the complete linearization).
    """
    k = structure.rank_k
    w = np.ones(k)
    if not full and varied is not None:
        w[varied] = 0.0
    U = np.ascontiguousarray(traj.controls.T)
    X, P = _flow(structure, traj.states[0], U, traj.h, w)
    _check_escape(structure, X, traj.grid)
    return VariationalFlow(traj.grid.copy(), P, np.linalg.inv(P), w)


def reparam_constant_speed(traj: Trajectory, structure: SRStructure | None = None) -> Trajectory:
    """Arclength reparametrization on the same grid, ``|u| = l`` on every cell."""
    structure = structure or traj.structure
    if structure is None:
        raise ValueError("a structure is needed to re-integrate")
    speeds = traj.speeds
    l = traj.length_l
    if not l > 0:
        raise DegenerateInputError("cannot reparametrize a zero-length curve")
    N, h = traj.N, traj.h
    S = np.concatenate([[0.0], np.cumsum(h * speeds)])
    targets = (np.arange(N) + 0.5) / N * S[-1]
    cells = np.searchsorted(S[1:], targets, side="left")
    cells = np.minimum(cells, N - 1)
    dirs = traj.controls[:, cells] / speeds[cells]
    new = integrate(structure, traj.states[0], l * dirs)
    new.info = dict(traj.info)
    return new


def _initial_controls(structure, x0, x1, N, opts, rng):
    dx = x1 - x0
    mids = (np.arange(N) + 0.5) / N
    U = np.empty((N, structure.rank_k))
    for i, t in enumerate(mids):
        F = structure.F(x0 + t * dx)
        U[i] = np.linalg.lstsq(F, dx, rcond=None)[0]
    dist = float(np.linalg.norm(dx))
    amp = opts.perturb * max(dist ** (1.0 / structure.declared_step), dist)
    coef = rng.normal(size=(opts.modes, structure.rank_k))
    freq = np.arange(1, opts.modes + 1)
    U += amp * np.cos(2 * np.pi * np.outer(mids, freq)) @ coef / np.sqrt(opts.modes) \
        + amp * np.sin(2 * np.pi * np.outer(mids, freq)) @ rng.normal(size=coef.shape) / np.sqrt(opts.modes)
    return U


def _polish(structure, x0, x1, U, h, iters, tol):
    """Minimum-norm Newton corrections of the endpoint."""
    for _ in range(iters):
        X, AX, BU = _forward_sens(structure, x0, U, h)
        c = X[-1] - x1
        d0 = np.linalg.norm(c)
        if d0 <= tol:
            break
        S = _kernels.endpoint_jacobian(AX, BU)
        J = S.transpose(1, 0, 2).reshape(S.shape[1], -1)
        step = np.linalg.lstsq(J, -c, rcond=None)[0].reshape(U.shape)
        # backtrack: a rank-deficient Jacobian can propose huge steps
        for _ in range(30):
            V = U + step
            d1 = np.linalg.norm(_forward(structure, x0, V, h)[-1] - x1)
            if np.isfinite(d1) and d1 < d0:
                break
            step *= 0.5
        else:
            break
        U = V
    return U


def _polish_constant_speed(structure, x0, x1, U, h, iters, tol):
    """Endpoint Newton steps that keep every cell at one common speed.

    Each cell moves in the tangent space of its speed sphere plus one global
    speed scaling, then is retracted back onto the sphere.
    """
    l = float(np.mean(np.linalg.norm(U, axis=1)))
    U = l * U / np.linalg.norm(U, axis=1, keepdims=True)
    N, k = U.shape
    for _ in range(iters):
        X, AX, BU = _forward_sens(structure, x0, U, h)
        c = X[-1] - x1
        if np.linalg.norm(c) <= tol:
            break
        S = _kernels.endpoint_jacobian(AX, BU)
        uhat = U / l
        P = np.eye(k)[None] - uhat[:, :, None] * uhat[:, None, :]
        JP = np.einsum("ink,ikm->nim", S, P).reshape(S.shape[1], -1)
        Js = np.einsum("ink,ik->n", S, U)[:, None]
        sol = np.linalg.lstsq(np.hstack([JP, Js]), -c, rcond=None)[0]
        V = np.einsum("ikm,im->ik", P, sol[:-1].reshape(N, k))
        W = U + V
        l = l * (1.0 + sol[-1])
        U = l * W / np.linalg.norm(W, axis=1, keepdims=True)
    return U


def _stationarity(structure, x0, U, h):
    """Relative KKT residual of ``min h|U|^2  s.t.  x_N(U) = x1``."""
    X, AX, BU = _forward_sens(structure, x0, U, h)
    S = _kernels.endpoint_jacobian(AX, BU)
    J = S.transpose(1, 0, 2).reshape(S.shape[1], -1)
    g = 2.0 * h * U.ravel()
    scale = np.linalg.norm(g)
    if scale == 0:
        return 0.0
    nu = np.linalg.lstsq(J.T, -g, rcond=None)[0]
    return float(np.linalg.norm(g + J.T @ nu) / scale)


def _al_solve(structure, x0, x1, U, h, opts):
    mu = np.zeros_like(x0)
    # the penalty rho |c|^2 must dominate the energy ~ dist^(2/s), else U = 0 wins
    dist = float(np.linalg.norm(x1 - x0))
    rho = opts.rho0 * max(1.0, dist ** (2.0 / structure.declared_step - 2.0))
    shape = U.shape
    prev = np.inf

    def fun(z):
        Uz = z.reshape(shape)
        X, AX, BU = _forward_sens(structure, x0, Uz, h)
        c = X[-1] - x1
        lam = mu + rho * c
        G = _kernels.adjoint_sweep(AX, BU, lam)
        val = h * np.sum(Uz ** 2) + mu @ c + 0.5 * rho * (c @ c)
        if not np.isfinite(val):
            return 1e300, np.zeros_like(z)
        return val, (2.0 * h * Uz + G).ravel()

    U_start = U.copy()
    for _ in range(opts.max_outer):
        res = minimize(fun, U.ravel(), jac=True, method="L-BFGS-B",
                       options={"maxiter": opts.inner_maxiter, "ftol": 1e-15, "gtol": 1e-11})
        U = res.x.reshape(shape)
        c = _forward(structure, x0, U, h)[-1] - x1
        defect = float(np.linalg.norm(c))
        if h * np.sum(U ** 2) <= 1e-12 * dist ** (2.0 / structure.declared_step) and defect > 0.5 * dist:
            # collapsed onto the critical point U = 0: restart with a stiffer penalty
            U, mu = U_start.copy(), np.zeros_like(x0)
            rho = min(rho * 100.0, opts.rho_max)
            continue
        mu = mu + rho * c
        if defect <= max(1e-3 * opts.endpoint_tol, 1e-12):
            break
        if defect > 0.25 * prev:
            rho = min(rho * opts.rho_growth, opts.rho_max)
        prev = defect
    return U


def solve_shortest(structure: SRStructure, x0, x1, N: int = 256,
                   opts: SolverOptions | None = None) -> Trajectory:
    """Local energy minimizer between two points, returned at constant speed.

    Direct transcription with an augmented Lagrangian on the endpoint and
    L-BFGS-B inner solves fed by the discrete adjoint, followed by Newton
    polishing of the endpoint. The output is labelled a candidate local
    minimizer; ``info["certified"]`` is False when the defect exceeds
    ``opts.endpoint_tol``.
    """
    opts = opts or SolverOptions()
    x0 = structure.check_point(x0)
    x1 = structure.check_point(x1)
    h = 1.0 / N
    if np.array_equal(x0, x1):
        traj = integrate(structure, x0, np.zeros((structure.rank_k, N)))
        traj.info = {"label": CANDIDATE_LABEL, "endpoint_defect": 0.0, "stationarity": 0.0,
                     "certified": True}
        return traj
    rng = np.random.default_rng(opts.seed)
    U = _initial_controls(structure, x0, x1, N, opts, rng)
    U = _al_solve(structure, x0, x1, U, h, opts)
    U = _polish(structure, x0, x1, U, h, opts.polish_iters, 1e-14)
    try:
        traj = integrate(structure, x0, U.T)
    except EscapeError:
        traj = Trajectory(np.linspace(0, 1, N + 1), _forward(structure, x0, U, h), U.T.copy(),
                          _length(U.T, h), structure)
        traj.info = {"label": CANDIDATE_LABEL, "endpoint_defect": float("inf"),
                     "stationarity": float("nan"), "certified": False, "escaped": True}
        return traj
    if opts.reparametrize and traj.length_l > 0:
        traj = reparam_constant_speed(traj, structure)
        U = _polish_constant_speed(structure, x0, x1, np.ascontiguousarray(traj.controls.T), h,
                                   opts.polish_iters, 1e-14)
        traj = integrate(structure, x0, U.T)
    defect = float(np.linalg.norm(traj.states[-1] - x1))
    traj.info = {"label": CANDIDATE_LABEL, "endpoint_defect": defect,
                 "stationarity": _stationarity(structure, x0, np.ascontiguousarray(traj.controls.T), h),
                 "certified": defect <= opts.endpoint_tol}
    return traj


# ball-box -----------------------------------------------------------------------

@dataclass
class BallBoxReport:
    radii: np.ndarray
    distances: np.ndarray
    exponent: float
    residual: float
    c_bb: float
    within_bounds: bool
    failures: list


def fit_loglog(x, y) -> tuple[float, float, float]:
    """Least-squares ``log y = slope log x + intercept``; returns ``(slope, intercept, rms residual)``."""
    lx, ly = np.log(np.asarray(x, float)), np.log(np.asarray(y, float))
    A = np.vstack([lx, np.ones_like(lx)]).T
    coef, *_ = np.linalg.lstsq(A, ly, rcond=None)
    resid = ly - A @ coef
    return float(coef[0]), float(coef[1]), float(np.sqrt(np.mean(resid ** 2)))


def sr_distance(structure, x, y, N=64, restarts=5, seed=0, opts=None) -> tuple[float, int]:
    """Best certified length over ``restarts`` seeded solves (an upper bound on the distance)."""
    opts = opts or SolverOptions()
    best, ok = np.inf, 0
    for r in range(restarts):
        traj = solve_shortest(structure, x, y, N, replace(opts, seed=seed + r))
        if traj.info["certified"]:
            ok += 1
            best = min(best, traj.length_l)
    return best, ok


def ballbox_probe(structure: SRStructure, x, direction, radii, N: int = 64, restarts: int = 5,
                  seed: int = 0, fit_tol: float = 0.05, opts: SolverOptions | None = None) -> BallBoxReport:
    """Fit ``d_SR(x, x + r e) ~ r^exponent`` over the radii."""
    x = structure.check_point(x)
    e = np.asarray(direction, float)
    e = e / np.linalg.norm(e)
    radii = np.asarray(radii, float)
    for r in radii:
        if not structure.contains(x + r * e):
            raise DomainError(f"probe point at radius {r} leaves the domain box")
    dists, failures = [], []
    for i, r in enumerate(radii):
        d, ok = sr_distance(structure, x, x + r * e, N, restarts, seed + 1000 * i, opts)
        if ok == 0:
            failures.append(float(r))
        dists.append(d)
    dists = np.asarray(dists)
    good = np.isfinite(dists)
    if good.sum() >= 2:
        slope, _, resid = fit_loglog(radii[good], dists[good])
        s = structure.declared_step
        rg, dg = radii[good], dists[good]
        c_bb = float(np.max(np.maximum(dg / rg ** (1.0 / s), rg / dg)))
        within = (1.0 / s - fit_tol) <= slope <= 1.0 + fit_tol
    else:
        slope, resid, c_bb, within = float("nan"), float("nan"), float("nan"), False
    return BallBoxReport(radii, dists, slope, resid, c_bb, bool(within), failures)


# serialization ---------------------------------------------------------------------

def save_text(traj: Trajectory, path) -> None:
    Path(path).write_text(format_text(traj))


def format_text(traj: Trajectory) -> str:
    """Columnar text: ``t x_1..x_n u_1..u_k``; the last row's controls are ``nan``."""
    n, k = traj.states.shape[1], traj.controls.shape[0]
    U = np.vstack([traj.controls.T, np.full((1, k), np.nan)])
    header = "# " + " ".join(["t"] + [f"x{i + 1}" for i in range(n)] + [f"u{j + 1}" for j in range(k)])
    name = traj.structure.name if traj.structure is not None else ""
    rows = [f"# structure {name}", header]
    for t, x, u in zip(traj.grid, traj.states, U):
        rows.append(" ".join(repr(float(v)) for v in (t, *x, *u)))
    return "\n".join(rows) + "\n"


def load_text(path, structure: SRStructure | None = None) -> Trajectory:
    lines = Path(path).read_text().splitlines()
    name = ""
    header = None
    data = []
    for line in lines:
        if line.startswith("# structure"):
            name = line[len("# structure"):].strip()
        elif line.startswith("#"):
            header = line[1:].split()
        elif line.strip():
            data.append([float(v) for v in line.split()])
    if header is None:
        raise ValueError("missing column header")
    n = sum(1 for c in header if c.startswith("x"))
    arr = np.array(data)
    if structure is None and name:
        try:
            structure = catalogue(name)
        except KeyError:
            structure = None
    controls = arr[:-1, 1 + n:].T.copy()
    return Trajectory(arr[:, 0].copy(), arr[:, 1:1 + n].copy(), controls,
                      _length(controls, 1.0 / controls.shape[1]), structure)


def _hexarr(a):
    return {"shape": list(np.shape(a)), "hex": [float(v).hex() for v in np.ravel(a)]}


def _unhex(d):
    return np.array([float.fromhex(v) for v in d["hex"]], float).reshape(d["shape"])


def to_json(traj: Trajectory) -> str:
    info = {k: (float(v).hex() if isinstance(v, float) else v) for k, v in traj.info.items()}
    rec = {"structure": traj.structure.name if traj.structure is not None else None,
           "length_l": float(traj.length_l).hex(), "info": info,
           "grid": _hexarr(traj.grid), "states": _hexarr(traj.states), "controls": _hexarr(traj.controls)}
    return json.dumps(rec, sort_keys=True)


def from_json(text: str, structure: SRStructure | None = None) -> Trajectory:
    rec = json.loads(text)
    if structure is None and rec.get("structure"):
        try:
            structure = catalogue(rec["structure"])
        except KeyError:
            structure = None
    info = {}
    for k, v in rec.get("info", {}).items():
        if isinstance(v, str) and v.startswith(("0x", "-0x", "inf", "-inf", "nan")):
            info[k] = float.fromhex(v)
        else:
            info[k] = v
    return Trajectory(_unhex(rec["grid"]), _unhex(rec["states"]), _unhex(rec["controls"]),
                      float.fromhex(rec["length_l"]), structure, info)
