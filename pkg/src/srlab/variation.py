"""Control variations ``u_c -> u_c - lambda phi'`` and their endpoint bounds.

One control component ``c`` is perturbed by the derivative of a test function
vanishing at both ends. By default ``c`` is the first frame field that is
constant (``f_c = const`` is what makes the first-order term a pure moment
condition); structures without a constant field fall back to ``c = 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InsufficientDataError
from .geodesics import (Trajectory, VariationalFlow, endpoint_sensitivity, fit_loglog, integrate,
                        variational_flow)
from .srgeom import SRStructure
from .testfunctions import TestFunction, from_spec, hat, random_smooth, sine  # noqa: F401  (re-exported)

CONSTANT_SPEED_RTOL = 1e-10
SIGNAL_FLOOR = 1e-12


def default_component(structure: SRStructure) -> int:
    const = structure.constant_fields()
    return const[0] if const else 0


def _component(structure, component):
    return default_component(structure) if component is None else int(component)


def _check_grid(traj: Trajectory, phi: TestFunction):
    if phi.N != traj.N:
        raise ValueError(f"test function has {phi.N} cells, trajectory has {traj.N}")


def is_constant_speed(traj: Trajectory, rtol: float = CONSTANT_SPEED_RTOL) -> bool:
    sp = traj.speeds
    return bool(traj.length_l > 0 and np.max(np.abs(sp - traj.length_l)) <= rtol * traj.length_l)


def vary(structure: SRStructure, traj: Trajectory, phi: TestFunction, lam: float,
         component: int | None = None) -> Trajectory:
    """Trajectory from ``x0`` driven by ``u`` with ``u_c`` replaced by ``u_c - lam phi'``.

    The length uses ``sqrt(l^2 - 2 lam u_c phi' + lam^2 phi'^2)`` per cell when
    ``|u| = l``; otherwise the speed of the varied control directly.
    """
    _check_grid(traj, phi)
    c = _component(structure, component)
    v = traj.controls.copy()
    if lam != 0:
        v[c] = v[c] - lam * phi.derivative
    y = integrate(structure, traj.states[0], v)
    if is_constant_speed(traj):
        l = traj.length_l
        d = lam * phi.derivative
        y.length_l = float(traj.h * np.sum(np.sqrt(np.maximum(l * l - 2.0 * traj.controls[c] * d + d * d, 0.0))))
    y.info = {"lambda": float(lam), "component": c}
    return y


# constraint subspace --------------------------------------------------------------------

def exact_moments(structure: SRStructure, traj: Trajectory, component: int | None = None) -> np.ndarray:
    """Moment vectors ``m_j`` (shape ``(N-1, n)``) at the interior nodes.

    ``d x_N / d lambda = h sum_j phi_j m_j`` exactly for the discrete
    dynamics, with ``m_j = (S_j - S_{j-1}) / h`` and ``S_i`` the endpoint
    sensitivity to control ``c`` on cell ``i``.
    """
    c = _component(structure, component)
    _, S = endpoint_sensitivity(structure, traj.states[0], traj.controls)
    Sc = S[:, :, c]
    return np.diff(Sc, axis=0) / traj.h


def flow_moments(structure: SRStructure, traj: Trajectory, flow: VariationalFlow,
                 component: int | None = None) -> np.ndarray:
    """Continuous-form moments ``P^{-1}(t_j) sum_{i != c} [f_c, f_i](x(t_j)) u_i`` at interior nodes.

    The node control is the average of the two adjacent cells. Agrees with
    :func:`exact_moments` up to a fixed invertible factor and ``O(h)`` terms
    when ``f_c`` is constant.
    """
    c = _component(structure, component)
    k = structure.rank_k
    brackets = [structure.frame[c].bracket(structure.frame[i]) if i != c else None for i in range(k)]
    out = np.zeros((traj.N - 1, structure.dim_n))
    for j in range(1, traj.N):
        x = traj.states[j]
        u = 0.5 * (traj.controls[:, j - 1] + traj.controls[:, j])
        acc = sum((brackets[i](x) * u[i] for i in range(k) if i != c), np.zeros(structure.dim_n))
        out[j - 1] = flow.inverses[j] @ acc
    return out


@dataclass
class Projection:
    phi: TestFunction
    residual: float
    rank: int
    degenerate: bool
    flag: str = ""


def project_to_H(phi: TestFunction, traj: Trajectory, flow: VariationalFlow | None = None,
                 structure: SRStructure | None = None, component: int | None = None,
                 moments: str = "exact", rank_rtol: float = 1e-10) -> Projection:
    """``L_2``-orthogonal projection of ``phi`` onto the moment kernel.

    ``moments="exact"`` cancels the discrete first variation exactly;
    ``moments="flow"`` uses the continuous bracket form along ``flow``.
    Vanishing moments return ``phi`` unchanged with ``degenerate`` set;
    partially vanishing moments project onto the remaining constraints.
    Singular values below ``rank_rtol`` times ``max(l, 1) max(c_f, 1)^2``
    (or the largest singular value, if bigger) count as zero.
    """
    structure = structure or traj.structure
    _check_grid(traj, phi)
    if moments == "exact":
        m = exact_moments(structure, traj, component)
    elif moments == "flow":
        if flow is None:
            flow = variational_flow(structure, traj, _component(structure, component))
        m = flow_moments(structure, traj, flow, component)
    else:
        raise ValueError(f"unknown moment form {moments!r}")
    A = traj.h * m.T                            # (n, N-1)
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    # absolute scale: rounding noise in vanishing moments must not count as rank
    ref = max(traj.length_l, 1.0) * max(structure.field_bound, 1.0) ** 2
    tol = rank_rtol * max(s.max(initial=0.0), ref)
    rank = int(np.sum(s > tol))
    inner = phi.interior
    if rank == 0:
        return Projection(phi, float(np.max(np.abs(A @ inner), initial=0.0)), 0, True, "constraints degenerate")
    V = Vt[:rank]
    new = inner - V.T @ (V @ inner)
    out = TestFunction.from_interior(new)
    res = float(np.max(np.abs(A @ new)))
    flag = "" if rank == A.shape[0] else f"rank {rank} of {A.shape[0]}"
    return Projection(out, res, rank, False, flag)


# bounds -----------------------------------------------------------------------------------------

def first_order_constant(k: int, L: float, c_f: float) -> float:
    """``max{1, a e^a, a e^{2a} (1 + 2a e^a + a^2 e^{2a})}`` with ``a = k L c_f``."""
    a = k * L * c_f
    return max(1.0, a * math.exp(a), a * math.exp(2 * a) * (1 + 2 * a * math.exp(a) + a * a * math.exp(2 * a)))


@dataclass
class FirstOrderTable:
    lambdas: np.ndarray
    deviation: np.ndarray          # (len(lambdas), N+1)
    bound: np.ndarray
    constant: float
    max_violation: float
    violations: int
    flow_norm_max: float = math.nan
    flow_norm_bound: float = math.nan


def first_order_check(structure: SRStructure, traj: Trajectory, phi: TestFunction,
                      lambda_list: Sequence[float], component: int | None = None,
                      atol: float = 1e-8) -> FirstOrderTable:
    """Compare ``|y(t, lam) - x(t)|`` with ``lam (|phi(t)| + c l ||phi||_1)`` at every node."""
    c_idx = _component(structure, component)
    l = traj.length_l
    c = first_order_constant(structure.rank_k, l, structure.field_bound)
    n1 = phi.norm(1)
    devs, bounds, pnorm = [], [], 0.0
    for lam in lambda_list:
        y = vary(structure, traj, phi, lam, c_idx)
        devs.append(np.linalg.norm(y.states - traj.states, axis=1))
        bounds.append(lam * (np.abs(phi.values) + c * l * n1))
        fl = variational_flow(structure, y, c_idx)
        pnorm = max(pnorm, float(np.max(np.linalg.norm(fl.matrices, ord=2, axis=(1, 2)))))
    devs, bounds = np.array(devs), np.array(bounds)
    excess = devs - bounds
    return FirstOrderTable(np.asarray(lambda_list, float), devs, bounds, c,
                           float(excess.max(initial=-np.inf)), int(np.sum(excess > atol)), pnorm,
                           math.exp(structure.rank_k * l * structure.field_bound))


@dataclass
class OrderFit:
    slope: float
    intercept: float
    empirical_c: float
    lambdas: np.ndarray
    deviations: np.ndarray
    residual: float
    notes: list = field(default_factory=list)


def log_lambda_grid(lo: float = 1e-3, hi: float = 1e-1, per_decade: int = 7) -> np.ndarray:
    n = int(round(per_decade * math.log10(hi / lo))) + 1
    return np.logspace(math.log10(lo), math.log10(hi), n)


def endpoint_order(structure: SRStructure, traj: Trajectory, phi: TestFunction,
                   lambda_grid: Sequence[float] | None = None, component: int | None = None,
                   target=None) -> OrderFit:
    """Log-log slope of ``|y(1, lam) - x(1)|`` against ``lam``.

    ``target`` defaults to the trajectory's own final state. Raises
    :class:`InsufficientDataError` if every deviation is below ``1e-12``.
    """
    lams = log_lambda_grid() if lambda_grid is None else np.asarray(lambda_grid, float)
    target = traj.states[-1] if target is None else np.asarray(target, float)
    devs = np.array([np.linalg.norm(vary(structure, traj, phi, lam, component).states[-1] - target)
                     for lam in lams])
    keep = devs > SIGNAL_FLOOR
    if keep.sum() < 2:
        raise InsufficientDataError("endpoint deviations are flat (below 1e-12)")
    notes = []
    if keep.sum() < lams.size:
        notes.append(f"{int(lams.size - keep.sum())} deviations below 1e-12 dropped")
    slope, icpt, res = fit_loglog(lams[keep], devs[keep])
    n2 = phi.norm(2)
    if n2 < 1e-8:
        notes.append("tiny ||phi||_2; fit ill-conditioned")
    return OrderFit(slope, icpt, math.exp(icpt) / n2 ** 2 if n2 > 0 else math.inf,
                    lams, devs, res, notes)
