"""Moduli of continuity, Hölder/Besov constants and related diagnostics for sampled controls.

A control is piecewise constant on ``N`` equal cells of ``[t1, t2]``. Shifts
are whole numbers of cells, so the shifted control is exact and every
discrete ``L_p`` norm is an exact integral of a piecewise-constant function.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from typing import NamedTuple, Sequence

import numpy as np
from scipy.integrate import quad
from scipy.signal import fftconvolve

from .errors import DegenerateInputError, DomainError, InsufficientDataError

DEFAULT_DELTA = 1.0 / 8.0
ZERO_RTOL = 1e-10  # solved controls carry ~1e-12 solver noise


@dataclass(eq=False)
class SampledControl:
    """Piecewise-constant control, ``values`` of shape ``(k, N)``."""

    values: np.ndarray
    t1: float = 0.0
    t2: float = 1.0
    delta: float = DEFAULT_DELTA

    def __post_init__(self):
        v = np.asarray(self.values, float)
        if v.ndim == 1:
            v = v[None, :]
        if v.ndim != 2 or v.shape[1] < 1:
            raise ValueError("values must have shape (k, N)")
        self.values = v
        T = self.t2 - self.t1
        if not T > 0:
            raise ValueError("need t1 < t2")
        if not 0 < self.delta <= T / 4 * (1 + 1e-12):
            raise DomainError(f"delta must lie in (0, {T / 4}]")
        if self.n_delta < 8:
            raise DomainError("need at least 8 samples per shift window (N delta / T >= 8)")

    @classmethod
    def from_function(cls, f, N: int, t1: float = 0.0, t2: float = 1.0, delta: float = DEFAULT_DELTA,
                      where: str = "mid") -> "SampledControl":
        """Sample ``f`` at cell midpoints (``where="mid"``) or left endpoints (``"left"``)."""
        edges = np.linspace(t1, t2, N + 1)
        t = 0.5 * (edges[:-1] + edges[1:]) if where == "mid" else edges[:-1]
        vals = np.asarray([np.atleast_1d(f(s)) for s in t], float).T
        return cls(vals, t1, t2, delta)

    @property
    def k(self) -> int:
        return self.values.shape[0]

    @property
    def N(self) -> int:
        return self.values.shape[1]

    @property
    def dt(self) -> float:
        return (self.t2 - self.t1) / self.N

    @property
    def n_delta(self) -> int:
        return int(math.floor(self.delta / self.dt + 1e-9))

    @property
    def grid(self) -> np.ndarray:
        return np.linspace(self.t1, self.t2, self.N + 1)

    @property
    def pointwise(self) -> np.ndarray:
        return np.linalg.norm(self.values, axis=0)

    def norm(self, p: float) -> float:
        return _lp(self.pointwise, p, self.dt)

    def mean(self) -> np.ndarray:
        return self.values.mean(axis=1)


def _lp(v, p, dt):
    v = np.abs(np.asarray(v, float))
    if v.size == 0:
        return 0.0
    if np.isinf(p):
        return float(v.max())
    return float((dt * np.sum(v ** p)) ** (1.0 / p))


def shift_cells(u: SampledControl, h: float) -> int:
    """Nearest whole number of cells for shift ``h``; raises if ``|h| > delta``."""
    m = int(round(h / u.dt))
    if abs(h) > u.delta * (1 + 1e-12) or abs(m) > u.n_delta:
        raise DomainError(f"|h| = {abs(h)} exceeds delta = {u.delta}")
    return m


def _modulus_cells(u: SampledControl, p: float, m: int) -> float:
    if m == 0:
        return 0.0
    N, nd = u.N, u.n_delta
    if m > 0:
        idx = np.arange(0, N - nd)
    else:
        idx = np.arange(nd, N)
    diff = u.values[:, idx + m] - u.values[:, idx]
    return _lp(np.linalg.norm(diff, axis=0), p, u.dt)


def modulus(u: SampledControl, p: float, h: float) -> float:
    """``omega_p(h, u)``: ``L_p`` norm of ``u(t + h) - u(t)`` over the shrunk window.

    ``h`` is rounded to a whole number of cells; positive shifts use
    ``(t1, t2 - delta)`` and negative ones ``(t1 + delta, t2)``.
    """
    return _modulus_cells(u, p, shift_cells(u, h))


class HolderConstant(NamedTuple):
    value: float
    h_at_sup: float
    at_grid_floor: bool


def moduli_table(u: SampledControl, p: float) -> tuple[np.ndarray, np.ndarray]:
    """All grid shifts ``0 < |h| <= delta`` (both signs) with their moduli."""
    ms = np.concatenate([np.arange(1, u.n_delta + 1), -np.arange(1, u.n_delta + 1)])
    return ms * u.dt, np.array([_modulus_cells(u, p, int(m)) for m in ms])


def holder_constant(u: SampledControl, p: float, alpha: float) -> HolderConstant:
    """``sup omega_p(h)/|h|^alpha`` over all grid shifts ``0 < |h| <= delta``.

    ``at_grid_floor`` is set when the supremum sits at the smallest shift and
    strictly exceeds every larger shift, i.e. the value is capped by the grid.
    """
    if not 0 < alpha <= 1:
        raise DomainError("alpha must lie in (0, 1]")
    hs, om = moduli_table(u, p)
    ratios = om / np.abs(hs) ** alpha
    i = int(np.argmax(ratios))
    best = float(ratios[i])
    floor = np.abs(hs) == u.dt
    rest = ratios[~floor].max(initial=0.0)
    at_floor = bool(floor[i] and best > rest * (1 + 1e-9))
    return HolderConstant(best, float(hs[i]), at_floor)


def besov_norm(u: SampledControl, p: float, alpha: float) -> float:
    return u.norm(p) + holder_constant(u, p, alpha).value


@dataclass
class ExponentFit:
    alpha: float
    intercept: float
    residual: float
    h: np.ndarray
    omega: np.ndarray
    exact_invariance: bool = False


def dyadic_shifts(u: SampledControl) -> np.ndarray:
    hs = []
    m = u.n_delta
    while m >= 1:
        hs.append(m * u.dt)
        m //= 2
    return np.array(hs[::-1])


def fit_exponent(u: SampledControl, p: float, h_grid: Sequence[float] | None = None,
                 zero_rtol: float = ZERO_RTOL) -> ExponentFit:
    """Least-squares slope of ``log omega_p(h)`` against ``log h``.

    Moduli below ``zero_rtol * ||u||_p`` count as zero and are excluded; if all
    vanish the fit returns ``alpha = inf`` with ``exact_invariance`` set.
    """
    hs = dyadic_shifts(u) if h_grid is None else np.asarray(h_grid, float)
    if np.any(hs <= 0):
        raise DomainError("shifts must be positive")
    om = np.array([modulus(u, p, h) for h in hs])
    scale = max(u.norm(p), np.finfo(float).tiny)
    nz = om > zero_rtol * scale
    if not np.any(nz):
        return ExponentFit(math.inf, math.nan, 0.0, hs, om, True)
    if nz.sum() < 3:
        raise InsufficientDataError(f"only {int(nz.sum())} nonzero moduli; need 3")
    lx, ly = np.log(hs[nz]), np.log(om[nz])
    A = np.vstack([lx, np.ones_like(lx)]).T
    coef, *_ = np.linalg.lstsq(A, ly, rcond=None)
    res = float(np.sqrt(np.mean((ly - A @ coef) ** 2)))
    return ExponentFit(float(coef[0]), float(coef[1]), res, hs, om)


class PoincareResult(NamedTuple):
    ratio: float
    holder: float
    deviation: float
    identity_residual: float


def poincare_ratio(u: SampledControl, p: float, alpha: float) -> PoincareResult:
    """``c^alpha_p(u) / ||u - mean(u)||_p`` plus the constant-speed identity residual.

    The residual is ``| ||u - mean||_2^2 - (l^2 - |mean|^2) |`` with ``l`` the
    average speed; it vanishes for controls with ``|u| = l``.
    """
    ubar = u.mean()
    dev = _lp(np.linalg.norm(u.values - ubar[:, None], axis=0), p, u.dt)
    if dev <= ZERO_RTOL * max(u.norm(p), np.finfo(float).tiny):
        raise DegenerateInputError("control is constant; ratio undefined")
    c = holder_constant(u, p, alpha).value
    T = u.t2 - u.t1
    l = u.dt * np.sum(u.pointwise) / T
    dev2 = u.dt * np.sum((u.values - ubar[:, None]) ** 2) / T
    ident = abs(dev2 - (l * l - float(ubar @ ubar)))
    return PoincareResult(c / dev, c, dev, float(ident))


# mollification ------------------------------------------------------------------------------

def _bump(t):
    t = np.asarray(t, float)
    out = np.zeros_like(t)
    inside = np.abs(t) < 1
    out[inside] = np.exp(-1.0 / (1.0 - t[inside] ** 2))
    return out


@lru_cache(maxsize=None)
def _bump_mass() -> float:
    return quad(lambda s: float(_bump(s)), -1, 1, epsabs=1e-14, epsrel=1e-14)[0]


def kernel(t, b: float) -> np.ndarray:
    """Unit-mass bump of half-width ``b``."""
    return _bump(np.asarray(t, float) / b) / (b * _bump_mass())


@lru_cache(maxsize=None)
def _jump_error_constant() -> float:
    """``int_{-1}^{1} (Phi(s) - 1[s > 0])^2 ds`` for the unit bump's distribution function."""
    m = _bump_mass()

    def cdf(s):
        return quad(lambda x: float(_bump(x)), -1, s, epsabs=1e-14)[0] / m

    return quad(lambda s: (cdf(s) - (1.0 if s > 0 else 0.0)) ** 2, -1, 1, points=[0.0],
                epsabs=1e-14)[0]


def mollify(u: SampledControl, b: float, oversample: int = 16):
    """Mollified control on a fine grid.

    Returns ``(L2 error, sup |w'|)``. The derivative is the exact kernel sum
    over the jumps of ``u``. Values beyond the interval use constant extension.
    """
    vals = u.values
    jumps = np.diff(vals, axis=1)
    jump_sizes = np.linalg.norm(jumps, axis=0)
    T = u.t2 - u.t1
    if b <= 0.5 * u.dt:
        # kernel supports around different jumps do not overlap
        err = math.sqrt(_jump_error_constant() * b * float(np.sum(jump_sizes ** 2)) / T)
        return err, float(jump_sizes.max(initial=0.0)) * float(kernel(0.0, b))
    R = max(1, int(math.ceil(oversample * u.dt / b)))
    hf = u.dt / R
    pad = int(math.ceil(b / hf)) + 1
    fine = np.repeat(vals, R, axis=1)
    fine = np.concatenate([np.repeat(fine[:, :1], pad, axis=1), fine,
                           np.repeat(fine[:, -1:], pad, axis=1)], axis=1)
    offs = np.arange(-pad, pad + 1) * hf
    kw = kernel(offs, b)
    kw_mass = kw / kw.sum()
    w = np.stack([fftconvolve(row, kw_mass, mode="same") for row in fine])[:, pad:-pad]
    err = math.sqrt(hf * float(np.sum((w - np.repeat(vals, R, axis=1)) ** 2)) / T)
    impulses = np.zeros((u.k, fine.shape[1]))
    impulses[:, pad + R * np.arange(1, u.N)] = jumps
    dw = np.stack([fftconvolve(row, kw, mode="same") for row in impulses])[:, pad:-pad]
    return err, float(np.max(np.linalg.norm(dw, axis=0), initial=0.0))


@dataclass
class ApproxTable:
    eps: np.ndarray
    error: np.ndarray
    bandwidth: np.ndarray
    weighted_derivative: np.ndarray
    sup: float
    slope: float
    diverging: bool
    failed: list = field(default_factory=list)


def smooth_approx_rate(u: SampledControl, gamma: float, eps_grid: Sequence[float],
                       b_min: float = 1e-9, max_bisect: int = 80, divergence_slope: float = -0.25) -> ApproxTable:
    """Mollifier bandwidth per ``eps`` with error in ``[eps/2, eps]``; tabulate ``eps^gamma sup|w'|``.

    ``diverging`` is set when the last column grows faster than
    ``eps^divergence_slope`` as ``eps`` decreases (log-log fit).
    """
    if not gamma > 0:
        raise DomainError("gamma must be positive")
    eps_grid = np.asarray(eps_grid, float)
    unorm = u.norm(2)
    if np.any(eps_grid <= 0) or np.any(eps_grid > unorm * (1 + 1e-12)):
        raise DomainError("eps values must lie in (0, ||u||_2]")
    b_max = u.t2 - u.t1
    rows, failed = [], []
    for eps in eps_grid:
        lo, hi = math.log(b_min), math.log(b_max)
        found = None
        e_hi, _ = mollify(u, b_max)
        if e_hi < eps / 2:
            failed.append(float(eps))
            continue
        for _ in range(max_bisect):
            mid = 0.5 * (lo + hi)
            e, d = mollify(u, math.exp(mid))
            if e > eps:
                hi = mid
            elif e < eps / 2:
                lo = mid
            else:
                found = (eps, e, math.exp(mid), eps ** gamma * d)
                break
        if found is None:
            failed.append(float(eps))
        else:
            rows.append(found)
    arr = np.array(rows) if rows else np.zeros((0, 4))
    if arr.shape[0] >= 2 and np.all(arr[:, 3] > 0):
        slope = float(np.polyfit(np.log(arr[:, 0]), np.log(arr[:, 3]), 1)[0])
    else:
        slope = math.nan
    return ApproxTable(arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3],
                       float(arr[:, 3].max(initial=0.0)), slope,
                       bool(np.isfinite(slope) and slope < divergence_slope), failed)


# report ---------------------------------------------------------------------------------------

@dataclass
class RegularityReport:
    moduli: dict
    fitted_alpha: dict
    holder_constants: dict
    besov_norms: dict
    poincare_ratio: dict
    approx_rate_table: dict
    smallest_h: float

    def to_json(self) -> str:
        return json.dumps(_jsonable(asdict(self)), sort_keys=True, indent=1)

    def moduli_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["p", "h", "omega"])
        for p, tab in self.moduli.items():
            for h, o in zip(tab["h"], tab["omega"]):
                wr.writerow([p, repr(float(h)), repr(float(o))])
        return buf.getvalue()


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_jsonable(v) for v in x.tolist()]
    if isinstance(x, (np.floating, float)):
        v = float(x)
        return v if math.isfinite(v) else str(v)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def regularity_report(u: SampledControl, p_list=(2.0,), alpha_list=(0.5,), gamma: float | None = None,
                      eps_grid=None) -> RegularityReport:
    moduli, fits, holder, besov, poinc = {}, {}, {}, {}, {}
    for p in p_list:
        hs = dyadic_shifts(u)
        moduli[p] = {"h": hs, "omega": np.array([modulus(u, p, h) for h in hs])}
        try:
            f = fit_exponent(u, p)
            fits[p] = {"alpha": f.alpha, "residual": f.residual, "exact_invariance": f.exact_invariance}
        except InsufficientDataError as exc:
            fits[p] = {"alpha": math.nan, "residual": math.nan, "error": str(exc)}
        for a in alpha_list:
            hc = holder_constant(u, p, a)
            holder[f"{p}/{a}"] = hc._asdict()
            besov[f"{p}/{a}"] = u.norm(p) + hc.value
            try:
                poinc[f"{p}/{a}"] = poincare_ratio(u, p, a)._asdict()
            except DegenerateInputError as exc:
                poinc[f"{p}/{a}"] = {"error": str(exc)}
    approx = {}
    if gamma is not None and eps_grid is not None:
        t = smooth_approx_rate(u, gamma, eps_grid)
        approx = asdict(t)
    return RegularityReport(moduli, fits, holder, besov, poinc, approx, u.dt)
