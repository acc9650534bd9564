"""Fourier coefficients of sampled controls and their decay diagnostics.

Coefficients are the plain DFT divided by ``N`` with samples taken at the
left endpoints ``t_j = j / N`` of the cells, so trigonometric polynomials of
degree below ``N / 2`` are reproduced exactly and Parseval holds exactly over
the full DFT.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DomainError
from .regularity import SampledControl

DOUBLING_TOL = 0.05
FLOOR_RTOL = 1e-12


@dataclass(eq=False)
class FourierTable:
    """Coefficients ``c[:, m + M_max]`` for ``|m| <= M_max`` (shape ``(k, 2 M_max + 1)``)."""

    coefficients: np.ndarray
    M_max: int
    N: int
    norm2_sq: float
    weighted: dict = field(default_factory=dict)
    ell_gamma: dict = field(default_factory=dict)

    @property
    def modes(self) -> np.ndarray:
        return np.arange(-self.M_max, self.M_max + 1)

    def coeff(self, m: int) -> np.ndarray:
        return self.coefficients[:, m + self.M_max]

    def magnitudes(self) -> np.ndarray:
        """``|c_m|`` (Euclidean over components) for ``m = -M_max..M_max``."""
        return np.linalg.norm(self.coefficients, axis=0)


def _dft(u: SampledControl) -> np.ndarray:
    return np.fft.fft(u.values, axis=1) / u.N


def fourier_coeffs(u: SampledControl, M_max: int) -> FourierTable:
    if M_max < 0 or M_max > u.N // 2 - 1:
        raise DomainError(f"M_max must lie in [0, N/2 - 1] = [0, {u.N // 2 - 1}] to avoid aliasing")
    full = _dft(u)
    idx = np.arange(-M_max, M_max + 1) % u.N
    return FourierTable(full[:, idx], M_max, u.N, float(np.sum(np.abs(full) ** 2)))


def parseval_defect(table: FourierTable) -> float:
    """``||u||_2^2 - sum_{|m| <= M_max} |c_m|^2`` (nonnegative up to rounding)."""
    return table.norm2_sq - float(np.sum(table.magnitudes() ** 2))


@dataclass
class SeriesDiagnostic:
    value: float
    ratios: np.ndarray
    converging: bool
    tail_estimate: float = math.nan


def _doubling(partial: np.ndarray, M_max: int, levels: int = 4):
    """Ratios ``P(M) / P(M/2)`` for ``M = M_max, M_max/2, ...`` (positive partial sums only)."""
    ratios = []
    M = M_max
    for _ in range(levels):
        if M // 2 < 1:
            break
        a, b = partial[M], partial[M // 2]
        ratios.append(a / b if b > 0 else (1.0 if a == 0 else math.inf))
        M //= 2
    return np.array(ratios)


def _tail(terms: np.ndarray, M_max: int) -> float:
    """Integral tail beyond ``M_max`` from a power law fitted over the last decade."""
    m = np.arange(max(1, M_max // 10), M_max + 1)
    t = terms[m]
    nz = t > 0
    if nz.sum() < 3:
        return 0.0
    slope, icpt = np.polyfit(np.log(m[nz]), np.log(t[nz]), 1)
    if slope >= -1:
        return math.inf
    density = nz.mean()
    return float(density * math.exp(icpt) * M_max ** (slope + 1) / (-slope - 1))


def _one_sided(table: FourierTable, power: float, weight_exp: float = 0.0) -> np.ndarray:
    """``terms[m] = sum over +-m of |m|^weight_exp |c_m|^power`` for ``m = 0..M_max``."""
    mag = table.magnitudes()
    M = table.M_max
    pos, neg = mag[M:], mag[M::-1]
    m = np.arange(M + 1, dtype=float)
    w = np.where(m > 0, m ** weight_exp, 0.0 if weight_exp > 0 else 1.0)
    terms = w * (pos ** power + neg ** power)
    terms[0] = w[0] * pos[0] ** power
    return terms


def weighted_sum(table: FourierTable, alpha: float) -> SeriesDiagnostic:
    """``sum_{0<|m|<=M_max} |m|^(2 alpha) |c_m|^2`` with a doubling-ratio verdict."""
    if alpha < 0:
        raise DomainError("alpha must be nonnegative")
    terms = _one_sided(table, 2.0, 2.0 * alpha)
    terms[0] = 0.0
    partial = np.cumsum(terms)
    ratios = _doubling(partial, table.M_max)
    conv = bool(ratios.size and ratios[0] <= 1.0 + DOUBLING_TOL)
    diag = SeriesDiagnostic(float(partial[-1]), ratios, conv, _tail(terms, table.M_max))
    table.weighted[alpha] = diag
    return diag


def finiteness_verdicts(table: FourierTable, alphas: Sequence[float]) -> dict:
    """Per-alpha verdicts, made monotone: a finite verdict at alpha implies finite below alpha."""
    alphas = sorted(float(a) for a in alphas)
    raw = [weighted_sum(table, a).converging for a in alphas]
    out = {}
    for i, a in enumerate(alphas):
        out[a] = {"raw": raw[i], "converging": raw[i] or any(raw[i + 1:])}
    return out


def ell_gamma_norm(table: FourierTable, gamma: float) -> SeriesDiagnostic:
    if gamma < 1:
        raise DomainError("gamma must be >= 1")
    terms = _one_sided(table, gamma)
    partial = np.cumsum(terms) ** (1.0 / gamma)
    ratios = _doubling(partial, table.M_max)
    conv = bool(ratios.size and ratios[0] <= 1.0 + DOUBLING_TOL)
    diag = SeriesDiagnostic(float(partial[-1]), ratios, conv)
    table.ell_gamma[gamma] = diag
    return diag


@dataclass
class PartialSumErrors:
    n_list: np.ndarray
    errors: np.ndarray
    slope: float
    at_floor: bool


def partial_sum_error(u: SampledControl, n_list: Sequence[int], M_max: int | None = None) -> PartialSumErrors:
    """``||u - S_n u||_2`` from the discarded DFT coefficients, with a log-log slope."""
    n_list = np.asarray(sorted(int(n) for n in n_list))
    M_max = u.N // 2 - 1 if M_max is None else M_max
    if n_list.max() > M_max:
        raise DomainError("partial-sum orders must not exceed M_max")
    full = _dft(u)
    mag2 = np.sum(np.abs(full) ** 2, axis=0)
    freq = np.abs(np.fft.fftfreq(u.N, 1.0 / u.N))
    errs = np.array([math.sqrt(float(np.sum(mag2[freq > n]))) for n in n_list])
    floor = FLOOR_RTOL * math.sqrt(float(mag2.sum()) or 1.0)
    nz = errs > floor
    if nz.sum() < 2:
        return PartialSumErrors(n_list, errs, math.nan, True)
    slope = float(np.polyfit(np.log(n_list[nz]), np.log(errs[nz]), 1)[0])
    return PartialSumErrors(n_list, errs, slope, bool(nz.sum() < n_list.size))


def decay_slope(table: FourierTable, m_lo: int = 1, m_hi: int | None = None, odd_only: bool = False) -> float:
    """Log-log slope of ``|c_m|`` over ``m_lo <= m <= m_hi``, skipping zero coefficients.

    Returns ``nan`` when fewer than two coefficients are nonzero.
    """
    m_hi = table.M_max if m_hi is None else m_hi
    m = np.arange(m_lo, m_hi + 1)
    if odd_only:
        m = m[m % 2 == 1]
    mag = table.magnitudes()[m + table.M_max]
    nz = mag > FLOOR_RTOL * math.sqrt(table.norm2_sq or 1.0)
    if nz.sum() < 2:
        return math.nan  # finitely many nonzero coefficients: no decay rate
    return float(np.polyfit(np.log(m[nz]), np.log(mag[nz]), 1)[0])


def periodic_modulus(u: SampledControl, p: float, h: float) -> float:
    """``L_p`` norm of ``u({t + h}) - u(t)`` over the whole period (fractional-part shift)."""
    m = int(round(h / u.dt))
    diff = np.roll(u.values, -m, axis=1) - u.values
    v = np.linalg.norm(diff, axis=0)
    if np.isinf(p):
        return float(v.max())
    return float((u.dt * np.sum(v ** p)) ** (1.0 / p))


def periodic_exponent_bridge(alpha: float, p: float) -> tuple[float, float]:
    """Bounds ``min(alpha, 1/p) <= alpha_periodic <= alpha`` linking the interval and periodic exponents."""
    return min(alpha, 1.0 / p), alpha
