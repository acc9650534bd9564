"""Exponent arithmetic, the sqrt-lemma check and the discrete primal/dual pair.

Discretization
--------------
The grid has ``N`` cells of width ``h = 1/N``. A test function ``phi`` is
continuous piecewise linear with node values ``phi_0 = phi_N = 0``; its
derivative ``D phi`` lives on cells. The control ``u`` and the dual variable
``w`` live on cells too, and ``(D* w)_j = -(w_j - w_{j-1}) / h`` at the
interior nodes. With ``||.||_{p,h}`` the rectangle-rule norm, the primal value

    S(u, M) = -max { h <u, D phi> : ||phi||_{r,h} <= 1, ||D phi||_{q,h} <= M }

and the dual value

    K(u, M) = min_w ||D* w||_{r*,h} + M ||u - w||_{q*,h}

form an exact finite-dimensional conic dual pair, so ``S + K = 0`` up to
solver tolerance. Both sides are solved independently by primal-dual hybrid
gradient iterations.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import NamedTuple, Sequence

import numpy as np

from .errors import DegenerateInputError, DomainError
from .testfunctions import TestFunction, cell_norm

SUPPORTED = (1.0, 2.0, np.inf)
REL_TOL = 1e-9
MAX_ITER = 100_000
CHECK_EVERY = 100


def conjugate(p: float) -> float:
    if p == 1:
        return np.inf
    if np.isinf(p):
        return 1.0
    return p / (p - 1.0)


# exponents -----------------------------------------------------------------------

_CASES = {"W": ("W", 2.0), "w": ("W", 2.0), "𝔚": ("W", 2.0),
          "G": ("G", 1.0), "g": ("G", 1.0), "𝔊": ("G", 1.0)}


def _case(case: str) -> tuple[str, float]:
    try:
        return _CASES[case]
    except KeyError:
        raise ValueError(f"case must be 'W' or 'G', got {case!r}") from None


@dataclass(frozen=True)
class ExponentSet:
    q: float
    r: float
    zeta: float
    theta: float
    kappa: float
    q_star: float
    r_star: float
    case: str


def theta_kappa(q: float, zeta: float) -> tuple[float, float]:
    theta = (q - 1.0) * zeta / (q - zeta)
    kappa = (1.0 + 2.0 * q * zeta - 3.0 * zeta) / (q - zeta)
    return theta, kappa


def exponents(q: float, zeta: float, case: str) -> ExponentSet:
    """Interpolation exponents for primal exponent ``q`` and ratio ``zeta``.

    ``case`` is ``"W"`` (``r = 2``) or ``"G"`` (``r = 1``).
    """
    name, r = _case(case)
    if not 1.0 <= q <= 2.0:
        raise DomainError(f"q must lie in [1, 2], got {q}")
    if not 0.0 < zeta <= 1.0:
        raise DomainError(f"zeta must lie in (0, 1], got {zeta}")
    if q <= zeta:
        raise DomainError(f"need q > zeta, got q={q}, zeta={zeta}")
    theta, kappa = theta_kappa(q, zeta)
    if not 0.0 <= theta < 1.0:
        raise DomainError(f"theta={theta} outside [0, 1)")
    return ExponentSet(q, r, zeta, theta, kappa, conjugate(q), conjugate(r), name)


def exponents_for_step(s: int, q: float, case: str) -> ExponentSet:
    """``zeta = 1/s`` in case G and ``2/s`` in case W."""
    name, _ = _case(case)
    zeta = (1.0 if name == "G" else 2.0) / s
    return exponents(q, zeta, name)


@dataclass(frozen=True)
class AdmissibleRange:
    """Open upper bounds from the regularity theorem, as exact fractions.

    Case W: ``0 < alpha < alpha_upper`` (closed at ``alpha_upper`` when
    ``alpha_attained``). Case G: ``0 < beta < beta_upper`` and
    ``0 < kappa < 1 - beta (s - 2)``.
    """

    case: str
    s: int
    p: Fraction
    alpha_upper: Fraction | None = None
    alpha_attained: bool = False
    beta_upper: Fraction | None = None

    def kappa_upper(self, beta) -> Fraction:
        if self.case != "G":
            raise ValueError("kappa bound exists only in case G")
        beta = Fraction(beta)
        if not 0 < beta < self.beta_upper:
            raise DomainError(f"beta must lie in (0, {self.beta_upper})")
        return 1 - beta * (self.s - 2)

    def contains_alpha(self, alpha) -> bool:
        alpha = Fraction(alpha)
        if alpha <= 0:
            return False
        return alpha < self.alpha_upper or (self.alpha_attained and alpha == self.alpha_upper)


def admissible_ranges(s: int, p, case: str) -> AdmissibleRange:
    name, _ = _case(case)
    if int(s) != s or s < 2:
        raise DomainError(f"step must be an integer >= 2, got {s}")
    s = int(s)
    p = Fraction(p)
    if name == "W":
        if p < 2:
            raise DomainError(f"case W needs p >= 2, got {p}")
        upper = Fraction(2) / (p * (s - 1))
        return AdmissibleRange("W", s, p, alpha_upper=upper, alpha_attained=(p == 2))
    if p < 2 + Fraction(1, s - 1):
        raise DomainError(f"case G needs p >= 2 + 1/(s-1), got {p}")
    return AdmissibleRange("G", s, p, beta_upper=Fraction(1) / (p * (s - 1)))


# sqrt lemma ---------------------------------------------------------------------------

def sqrt_lemma_check(u1, psi, l: float, q: float, c_sr: float = 4.0) -> float:
    """Slack ``rhs - lhs`` of the square-root estimate on a uniform cell grid.

    ``lhs = int sqrt(l^2 - 2 u1 psi + psi^2) - l`` and
    ``rhs = c_sr l^(1-q) ||psi||_q^q - (1/l) int u1 psi``. The integrand of
    ``lhs`` is evaluated as ``(psi^2 - 2 u1 psi) / (sqrt(.) + l)`` to avoid
    cancellation for small ``psi``.
    """
    u1 = np.asarray(u1, float)
    psi = np.asarray(psi, float)
    if u1.shape != psi.shape:
        raise ValueError("u1 and psi must share the grid")
    if not l > 0:
        raise DomainError("l must be positive")
    if np.max(np.abs(u1), initial=0.0) > l * (1 + 1e-12):
        raise DomainError("need |u1| <= l")
    h = 1.0 / u1.size
    inner = psi * psi - 2.0 * u1 * psi
    root = np.sqrt(np.maximum(l * l + inner, 0.0))
    lhs = h * np.sum(inner / (root + l))
    rhs = c_sr * l ** (1.0 - q) * h * np.sum(np.abs(psi) ** q) - h * np.sum(u1 * psi) / l
    return float(rhs - lhs)


# norm-ball primitives ------------------------------------------------------------------

def project_l1_ball(v: np.ndarray, radius: float) -> np.ndarray:
    """Euclidean projection onto ``{x : ||x||_1 <= radius}`` (sort-based)."""
    a = np.abs(v)
    if a.sum() <= radius:
        return v.copy()
    if radius <= 0:
        return np.zeros_like(v)
    mu = np.sort(a)[::-1]
    cs = np.cumsum(mu)
    idx = np.arange(1, a.size + 1)
    rho = np.nonzero(mu * idx > cs - radius)[0][-1]
    tau = (cs[rho] - radius) / (rho + 1.0)
    return np.sign(v) * np.maximum(a - tau, 0.0)


def project_ball(v: np.ndarray, p: float, radius: float) -> np.ndarray:
    """Euclidean projection onto the unweighted ``p``-ball of the given radius."""
    if p == 2:
        n = np.linalg.norm(v)
        return v.copy() if n <= radius else v * (radius / n)
    if np.isinf(p):
        return np.clip(v, -radius, radius)
    if p == 1:
        return project_l1_ball(v, radius)
    raise ValueError(f"unsupported exponent {p}")


def prox_norm(v: np.ndarray, p: float, t: float) -> np.ndarray:
    """``argmin_x t ||x||_p + |x - v|^2 / 2`` by Moreau's identity."""
    if t <= 0:
        return v.copy()
    return v - t * project_ball(v / t, conjugate(p), 1.0)


def _radius(p: float, R: float, h: float) -> float:
    """Unweighted radius of the ball ``{||v||_{p,h} <= R}``."""
    return R if np.isinf(p) else R * h ** (-1.0 / p)


def _weight(p: float, h: float) -> float:
    """``||v||_{p,h} = weight * ||v||_p``."""
    return 1.0 if np.isinf(p) else h ** (1.0 / p)


def _check_exp(*ps):
    for p in ps:
        if p not in SUPPORTED:
            raise ValueError(f"exponent {p} not in the supported set {{1, 2, inf}}")


# discrete operators ----------------------------------------------------------------------

def _D(phi_int, h):
    """Cell derivative of interior node values (zero boundary values)."""
    return np.diff(np.concatenate([[0.0], phi_int, [0.0]])) / h


def _Dt(w, h):
    """Euclidean adjoint of ``_D``; equals ``D* w`` at the interior nodes."""
    return -np.diff(w) / h


def _opnorm(N, h):
    return 2.0 / h * np.sin(np.pi * (N - 1) / (2.0 * N))


def _as_cells(u, N: int | None, component: int = 0) -> np.ndarray:
    vals = getattr(u, "values", u)
    arr = np.asarray(vals, float)
    if arr.ndim == 2:
        arr = arr[component]
    if arr.ndim != 1 or arr.size < 2:
        raise ValueError("control must be a 1-D array of cell values")
    if N is None or N == arr.size:
        return arr.copy()
    mids = (np.arange(N) + 0.5) / N
    return arr[np.minimum((mids * arr.size).astype(int), arr.size - 1)]


# solvers ------------------------------------------------------------------------------------

class SResult(NamedTuple):
    value: float
    phi: TestFunction
    iterations: int
    converged: bool


class KResult(NamedTuple):
    value: float
    w: np.ndarray
    iterations: int
    converged: bool


def solve_S(u, M: float, r: float = 2.0, q: float = 2.0, N: int | None = None,
            tol: float = REL_TOL, max_iter: int = MAX_ITER) -> SResult:
    """Primal value ``S`` (<= 0) and a feasible maximizing test function.

    The final iterate is scaled onto the feasible set, so the returned value is
    an upper bound on the exact ``S``.
    """
    _check_exp(r, q)
    if M < 0:
        raise DomainError("M must be nonnegative")
    u = _as_cells(u, N)
    N = u.size
    h = 1.0 / N
    if M == 0 or np.ptp(u) == 0:
        return SResult(0.0, TestFunction(np.zeros(N + 1)), 0, True)
    c = _Dt(h * u, h)                       # objective gradient in phi
    L = _opnorm(N, h)
    tau = sigma = 0.99 / L
    ra, rb = _radius(r, 1.0, h), _radius(q, M, h)
    phi = np.zeros(N - 1)
    phib = phi.copy()
    y = np.zeros(N)
    prev = None
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        z = y + sigma * _D(phib, h)
        y = z - sigma * project_ball(z / sigma, q, rb)
        new = project_ball(phi - tau * _Dt(y, h) + tau * c, r, ra)
        phib = 2.0 * new - phi
        phi = new
        if it % CHECK_EVERY == 0:
            obj = float(c @ phi)
            if prev is not None and abs(obj - prev) <= tol * (1.0 + abs(obj)):
                converged = True
                break
            prev = obj
    phi = _feasible(phi, r, q, M, h)
    return SResult(-float(c @ phi), TestFunction.from_interior(phi), it, converged)


def _feasible(phi, r, q, M, h):
    n1 = cell_norm(phi, r, h)
    n2 = cell_norm(_D(phi, h), q, h)
    s = 1.0
    if n1 > 1.0:
        s = min(s, 1.0 / n1)
    if n2 > M:
        s = min(s, M / n2)
    return s * phi


def k_objective(u, w, M, r_star, q_star, full=False) -> float:
    h = 1.0 / u.size
    val = cell_norm(_Dt(w, h), r_star, h) + M * cell_norm(u - w, q_star, h)
    if full:
        val += cell_norm(w, q_star, h)
    return float(val)


def solve_K(u, M: float, r_star: float = 2.0, q_star: float = 2.0, N: int | None = None,
            full: bool = False, tol: float = REL_TOL, max_iter: int = MAX_ITER) -> KResult:
    """Dual value ``min_w ||D* w||_{r*} + M ||u - w||_{q*}`` and its minimizer.

    ``full=True`` adds ``||w||_{q*}``, giving the K-functional with the full
    first-order Sobolev norm.
    """
    _check_exp(r_star, q_star)
    if M < 0:
        raise DomainError("M must be nonnegative")
    u = _as_cells(u, N)
    N = u.size
    h = 1.0 / N
    if not full:
        if M == 0:
            return KResult(0.0, np.zeros(N), 0, True)
        if np.ptp(u) == 0:
            return KResult(0.0, u.copy(), 0, True)
    a1, a2, b = _weight(r_star, h), _weight(q_star, h), M * _weight(q_star, h)
    L = np.hypot(_opnorm(N, h), 1.0) if full else _opnorm(N, h)
    tau = sigma = 0.99 / L
    w = u.copy()
    wb = w.copy()
    y1 = np.zeros(N - 1)
    y2 = np.zeros(N)
    dual1, dual2 = conjugate(r_star), conjugate(q_star)
    prev = None
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        y1 = project_ball(y1 + sigma * _Dt(wb, h), dual1, a1)
        v = w - tau * _D_adj_of_Dt(y1, h)
        if full:
            y2 = project_ball(y2 + sigma * wb, dual2, a2)
            v = v - tau * y2
        new = u + prox_norm(v - u, q_star, tau * b)
        wb = 2.0 * new - w
        w = new
        if it % CHECK_EVERY == 0:
            obj = k_objective(u, w, M, r_star, q_star, full)
            if prev is not None and abs(obj - prev) <= tol * (1.0 + abs(obj)):
                converged = True
                break
            prev = obj
    return KResult(k_objective(u, w, M, r_star, q_star, full), w, it, converged)


def _D_adj_of_Dt(y, h):
    """Euclidean adjoint of ``_Dt`` (maps interior-node vectors to cells)."""
    return _D(y, h)


@dataclass(eq=False)
class DualPair:
    M: float
    q: float
    r: float
    S_value: float
    K_value: float
    gap: float
    primal_argmax: TestFunction
    dual_argmin: np.ndarray
    K_full: float | None = None
    converged: bool = True

    @property
    def relative_gap(self) -> float:
        return abs(self.gap) / (1.0 + abs(self.S_value) + abs(self.K_value))

    def to_record(self) -> dict:
        return {"M": self.M, "q": self.q, "r": self.r, "S": self.S_value, "K": self.K_value,
                "gap": self.gap, "relative_gap": self.relative_gap, "K_full": self.K_full,
                "converged": self.converged,
                "phi": self.primal_argmax.values.tolist(), "w": np.asarray(self.dual_argmin).tolist()}


def duality_gap(u, M: float, q: float = 2.0, r: float = 2.0, N: int | None = None,
                with_full: bool = False, tol: float = REL_TOL, max_iter: int = MAX_ITER) -> DualPair:
    """Solve both sides with matched conjugate exponents and return ``S + K``."""
    s = solve_S(u, M, r, q, N, tol, max_iter)
    k = solve_K(u, M, conjugate(r), conjugate(q), N, False, tol, max_iter)
    full = solve_K(u, M, conjugate(r), conjugate(q), N, True, tol, max_iter).value if with_full else None
    return DualPair(float(M), q, r, s.value, k.value, s.value + k.value, s.phi, k.w, full,
                    s.converged and k.converged)


# interpolation bound ----------------------------------------------------------------------

@dataclass
class InterpolationReport:
    max_ratio: float
    witness: int | None
    skipped: int
    ratios: np.ndarray
    m_grid: np.ndarray = field(default_factory=lambda: np.zeros(0))
    m_surrogate: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def m_sweep_max(self) -> float:
        return float(np.max(self.m_surrogate)) if self.m_surrogate.size else 0.0


def verify_interpolation_bound(u, l: float, expset: ExponentSet, phi_batch: Sequence[TestFunction],
                               m_grid=None, max_iter: int = MAX_ITER) -> InterpolationReport:
    """Largest ``int u phi' / (l^kappa ||phi||_r^theta ||phi'||_q^(1-theta))`` over the batch.

    With ``m_grid`` also returns ``-S(u, M) / (l^kappa M^(1-theta))`` per ``M``.
    """
    if not l > 0:
        raise DegenerateInputError("l must be positive")
    u = np.asarray(getattr(u, "values", u), float)
    if u.ndim == 2:
        u = u[0]
    th, ka = expset.theta, expset.kappa
    ratios, skipped = [], 0
    for phi in phi_batch:
        cells = _as_cells(u, phi.N)
        a, b = phi.norm(expset.r), phi.derivative_norm(expset.q)
        if a == 0 or b == 0:
            skipped += 1
            ratios.append(np.nan)
            continue
        num = phi.h * float(cells @ phi.derivative)
        ratios.append(num / (l ** ka * a ** th * b ** (1.0 - th)))
    ratios = np.asarray(ratios)
    finite = np.where(np.isfinite(ratios))[0]
    if finite.size:
        w = int(finite[np.argmax(ratios[finite])])
        best = float(ratios[w])
    else:
        w, best = None, float("nan")
    rep = InterpolationReport(best, w, skipped, ratios)
    if m_grid is not None:
        m_grid = np.asarray(m_grid, float)
        sur = [-solve_S(u, M, expset.r, expset.q, max_iter=max_iter).value / (l ** ka * M ** (1.0 - th))
               for M in m_grid]
        rep.m_grid, rep.m_surrogate = m_grid, np.asarray(sur)
    return rep
