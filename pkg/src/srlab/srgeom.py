"""Sub-Riemannian structures given by a declared orthonormal frame on a box in R^n.

The metric on the distribution is *defined* by declaring the frame orthonormal,
so a structure is fully described by its frame. Frames built from
:class:`~srlab.polyfield.PolyField` get exact Jacobians, Hessians and brackets
and run through the compiled integrators; :class:`FunctionField` wraps
arbitrary callables and falls back to central finite differences.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import _kernels
from .errors import DomainError, HormanderViolation
from .polyfield import PolyField, pack_frame

FD_STEP = 1e-5
RANK_RTOL = 1e-8
DEFAULT_HALF_WIDTH = 2.0
BOX_TOL = 1e-12


class FunctionField:
    """Vector field from plain callables; missing derivatives use central differences."""

    def __init__(self, dim: int, f: Callable, jacobian: Callable | None = None,
                 hessian: Callable | None = None, fd_step: float = FD_STEP):
        self.dim = dim
        self._f = f
        self._jac = jacobian
        self._hess = hessian
        self.fd_step = fd_step

    def __call__(self, x) -> np.ndarray:
        return np.asarray(self._f(np.asarray(x, float)), float)

    def jacobian(self, x) -> np.ndarray:
        if self._jac is not None:
            return np.asarray(self._jac(np.asarray(x, float)), float)
        return fd_jacobian(self, x, self.fd_step)

    def hessian(self, x) -> np.ndarray:
        if self._hess is not None:
            return np.asarray(self._hess(np.asarray(x, float)), float)
        x = np.asarray(x, float)
        H = np.empty((self.dim, self.dim, self.dim))
        for e in range(self.dim):
            dx = np.zeros(self.dim)
            dx[e] = self.fd_step
            H[:, :, e] = (self.jacobian(x + dx) - self.jacobian(x - dx)) / (2 * self.fd_step)
        return H

    def bracket(self, other) -> "FunctionField":
        a, b = self, other
        return FunctionField(self.dim, lambda x: b.jacobian(x) @ a(x) - a.jacobian(x) @ b(x),
                             fd_step=self.fd_step)

    def is_constant(self) -> bool:
        return False


def fd_jacobian(f: Callable, x, step: float = FD_STEP) -> np.ndarray:
    x = np.asarray(x, float)
    n = x.shape[0]
    cols = []
    for d in range(n):
        dx = np.zeros(n)
        dx[d] = step
        cols.append((np.asarray(f(x + dx)) - np.asarray(f(x - dx))) / (2 * step))
    return np.stack(cols, axis=1)


@dataclass(frozen=True, eq=False)
class SRStructure:
    """Rank-k frame ``f_1..f_k`` on an axis-aligned box, declared orthonormal.

    ``field_bound`` (the constant ``c_f``) is the sup over a sampling grid of the
    box of ``|f_i|``, the spectral norm of ``Df_i`` and the Frobenius norm of
    ``D^2 f_i``; it is computed at construction unless supplied.
    """

    name: str
    frame: tuple
    declared_step: int
    domain_box: np.ndarray
    field_bound: float | None = None
    metric: np.ndarray | None = None
    _bound: float = field(init=False, repr=False, default=0.0)

    def __post_init__(self):
        box = np.asarray(self.domain_box, float)
        object.__setattr__(self, "domain_box", box)
        object.__setattr__(self, "frame", tuple(self.frame))
        n, k = self.dim_n, self.rank_k
        if box.shape != (n, 2) or np.any(box[:, 0] >= box[:, 1]):
            raise ValueError(f"domain_box must be an ({n}, 2) array of increasing bounds")
        if any(f.dim != n for f in self.frame):
            raise ValueError("all frame fields must share the ambient dimension")
        if not 1 <= k < n:
            raise ValueError(f"need 1 <= rank < dim, got rank {k}, dim {n}")
        if self.declared_step < 2:
            raise ValueError("declared_step must be >= 2")
        if self.metric is not None:
            object.__setattr__(self, "metric", np.asarray(self.metric, float))
        bound = self.field_bound if self.field_bound is not None else self._sample_bound()
        object.__setattr__(self, "_bound", float(bound))
        object.__setattr__(self, "field_bound", float(bound))

    @property
    def dim_n(self) -> int:
        return self.frame[0].dim

    @property
    def rank_k(self) -> int:
        return len(self.frame)

    @property
    def is_polynomial(self) -> bool:
        return all(isinstance(f, PolyField) for f in self.frame)

    @cached_property
    def packed(self):
        if not self.is_polynomial:
            raise TypeError("packed frame only exists for polynomial structures")
        return pack_frame(self.frame)

    @cached_property
    def _packed_hessian(self):
        parts = [f.partial(d) for f in self.frame for d in range(self.dim_n)]
        return pack_frame(parts)

    def constant_fields(self) -> list[int]:
        return [j for j, f in enumerate(self.frame) if f.is_constant()]

    def contains(self, x, tol: float = BOX_TOL) -> bool:
        x = np.asarray(x, float)
        return bool(np.all(x >= self.domain_box[:, 0] - tol) and np.all(x <= self.domain_box[:, 1] + tol))

    def check_point(self, x) -> np.ndarray:
        x = np.asarray(x, float)
        if x.shape != (self.dim_n,):
            raise DomainError(f"point must have shape ({self.dim_n},), got {x.shape}")
        if not self.contains(x):
            raise DomainError(f"point {x} lies outside the domain box")
        return x

    # raw evaluators (no domain check) ------------------------------------

    def F(self, x) -> np.ndarray:
        if self.is_polynomial:
            return _kernels.frame_eval(np.asarray(x, float), *self.packed, self.rank_k)
        return np.stack([f(x) for f in self.frame], axis=1)

    def DF(self, x) -> np.ndarray:
        """Jacobians stacked as ``(k, n, n)``."""
        if self.is_polynomial:
            return _kernels.frame_jac(np.asarray(x, float), *self.packed, self.rank_k)
        return np.stack([f.jacobian(x) for f in self.frame])

    def D2F(self, x) -> np.ndarray:
        """Hessians stacked as ``(k, n, n, n)`` with ``H[j, c, d, e] = d2 f_j[c] / dx_d dx_e``."""
        n, k = self.dim_n, self.rank_k
        if self.is_polynomial:
            J = _kernels.frame_jac(np.asarray(x, float), *self._packed_hessian, k * n)
            # J[j*n + d, c, e] = d/dx_e (d f_j[c] / dx_d)
            return J.reshape(k, n, n, n).transpose(0, 2, 1, 3)
        return np.stack([f.hessian(x) for f in self.frame])

    def _sample_bound(self) -> float:
        n = self.dim_n
        per_axis = 7 if n <= 3 else 5
        axes = [np.linspace(lo, hi, per_axis) for lo, hi in self.domain_box]
        best = 0.0
        for pt in itertools.product(*axes):
            x = np.array(pt)
            F, DF, D2F = self.F(x), self.DF(x), self.D2F(x)
            for j in range(self.rank_k):
                best = max(best, np.linalg.norm(F[:, j]), np.linalg.norm(DF[j], 2),
                           np.linalg.norm(D2F[j].ravel()))
        return best if best > 0 else 1.0


# operations ----------------------------------------------------------------

def eval_frame(structure: SRStructure, x) -> np.ndarray:
    """Frame matrix at ``x``; column ``i`` is ``f_i(x)``."""
    x = structure.check_point(x)
    return structure.F(x)


def lie_bracket(structure: SRStructure, i: int, j: int, x, method: str = "auto") -> np.ndarray:
    """``[f_i, f_j](x) = Df_j f_i - Df_i f_j`` with 0-based indices.

    ``method`` is ``"analytic"`` (exact polynomial bracket), ``"fd"`` (central
    differences with step ``FD_STEP``) or ``"auto"`` (analytic when available).
    """
    x = structure.check_point(x)
    k = structure.rank_k
    if not (0 <= i < k and 0 <= j < k):
        raise IndexError(f"frame indices must lie in [0, {k})")
    if method == "auto":
        method = "analytic" if structure.is_polynomial else "fd"
    fi, fj = structure.frame[i], structure.frame[j]
    if method == "analytic":
        if isinstance(fi, PolyField) and isinstance(fj, PolyField):
            return _poly_bracket(structure, i, j)(x)
        return fj.jacobian(x) @ fi(x) - fi.jacobian(x) @ fj(x)
    if method == "fd":
        return fd_jacobian(fj, x) @ fi(x) - fd_jacobian(fi, x) @ fj(x)
    raise ValueError(f"unknown method {method!r}")


_BRACKET_CACHE: dict = {}


def _poly_bracket(structure, i, j) -> PolyField:
    # entries hold the structure itself so its id cannot be recycled while cached
    key = (id(structure), i, j)
    hit = _BRACKET_CACHE.get(key)
    if hit is None or hit[0] is not structure:
        hit = _BRACKET_CACHE[key] = (structure, structure.frame[i].bracket(structure.frame[j]))
    return hit[1]


def _numeric_rank(vectors: Sequence[np.ndarray]) -> int:
    if not vectors:
        return 0
    s = np.linalg.svd(np.stack(vectors, axis=1), compute_uv=False)
    if s[0] == 0:
        return 0
    return int(np.sum(s > RANK_RTOL * s[0]))


def bracket_levels(structure: SRStructure, max_depth: int) -> list[list]:
    """Left-normed iterated brackets grouped by length ``1..max_depth``."""
    levels = [list(structure.frame)]
    for _ in range(1, max_depth):
        nxt = []
        for f in structure.frame:
            for g in levels[-1]:
                b = f.bracket(g)
                if isinstance(b, PolyField) and b.is_zero():
                    continue
                nxt.append(b)
        levels.append(nxt)
    return levels


def step_at(structure: SRStructure, x, max_depth: int | None = None) -> int:
    """Smallest bracket length whose iterated brackets span R^n at ``x``."""
    x = structure.check_point(x)
    if max_depth is None:
        max_depth = structure.declared_step
    if max_depth < structure.declared_step:
        raise ValueError("max_depth must be at least the declared step")
    vectors: list[np.ndarray] = []
    for m, level in enumerate(bracket_levels(structure, max_depth), start=1):
        vectors.extend(g(x) for g in level)
        if _numeric_rank(vectors) == structure.dim_n:
            return m
    raise HormanderViolation(
        f"{structure.name}: brackets up to length {max_depth} do not span R^{structure.dim_n} at {x}")


def orthonormality_residual(structure: SRStructure, sample_points) -> float:
    """``max |<f_i, f_j>_g - delta_ij|`` over the points.

    Without an explicit metric the frame defines ``g`` and the residual is 0.
    """
    pts = list(sample_points)
    if not pts or structure.metric is None:
        return 0.0
    G = structure.metric
    worst = 0.0
    for x in pts:
        F = eval_frame(structure, x)
        worst = max(worst, float(np.max(np.abs(F.T @ G @ F - np.eye(structure.rank_k)))))
    return worst


# catalogue -----------------------------------------------------------------

def _box(n, half=DEFAULT_HALF_WIDTH):
    return np.tile([-half, half], (n, 1)).astype(float)


def heisenberg(half_width: float = DEFAULT_HALF_WIDTH) -> SRStructure:
    frame = (PolyField.from_strings(["1", "0", "-x2/2"]),
             PolyField.from_strings(["0", "1", "x1/2"]))
    return SRStructure("heisenberg", frame, 2, _box(3, half_width))


def martinet(half_width: float = DEFAULT_HALF_WIDTH) -> SRStructure:
    frame = (PolyField.from_strings(["1", "0", "x2**2/2"]),
             PolyField.from_strings(["0", "1", "0"]))
    return SRStructure("martinet", frame, 3, _box(3, half_width))


def engel(half_width: float = DEFAULT_HALF_WIDTH) -> SRStructure:
    frame = (PolyField.from_strings(["1", "0", "0", "0"]),
             PolyField.from_strings(["0", "1", "x1", "x1**2/2"]))
    return SRStructure("engel", frame, 3, _box(4, half_width))


CATALOGUE = {"heisenberg": heisenberg, "martinet": martinet, "engel": engel}


def catalogue(name: str) -> SRStructure:
    try:
        return CATALOGUE[name.lower()]()
    except KeyError:
        raise KeyError(f"unknown structure {name!r}; choose from {sorted(CATALOGUE)}") from None


# file format -----------------------------------------------------------------

def _toml():
    try:
        import tomllib
    except ModuleNotFoundError:  # python < 3.11
        import tomli as tomllib
    return tomllib


def structure_from_dict(d: dict) -> SRStructure:
    n, k = int(d["dim"]), int(d["rank"])
    fields = d["fields"]
    frame = []
    for j in range(1, k + 1):
        spec = fields[f"f{j}"]
        if len(spec) != n:
            raise ValueError(f"field f{j} needs {n} components")
        frame.append(PolyField.from_strings([str(c) for c in spec]))
    box = d.get("box", [-DEFAULT_HALF_WIDTH, DEFAULT_HALF_WIDTH])
    box = np.asarray(box, float)
    if box.shape == (2,):
        box = np.tile(box, (n, 1))
    return SRStructure(str(d.get("name", "custom")), tuple(frame), int(d["step"]), box,
                       metric=d.get("metric"))


def load_structure(path) -> SRStructure:
    """Read a structure description (TOML key-value file).

    Example::

        name = "heisenberg"
        dim = 3
        rank = 2
        step = 2
        box = [-2.0, 2.0]
        [fields]
        f1 = ["1", "0", "-x2/2"]
        f2 = ["0", "1", "x1/2"]
    """
    with open(path, "rb") as fh:
        return structure_from_dict(_toml().load(fh))


def dump_structure(structure: SRStructure, path) -> None:
    if not structure.is_polynomial:
        raise TypeError("only polynomial structures can be written")
    lines = [f'name = "{structure.name}"', f"dim = {structure.dim_n}", f"rank = {structure.rank_k}",
             f"step = {structure.declared_step}",
             "box = [" + ", ".join(f"[{float(lo)!r}, {float(hi)!r}]" for lo, hi in structure.domain_box) + "]"]
    if structure.metric is not None:
        lines.append("metric = [" + ", ".join("[" + ", ".join(repr(float(v)) for v in row) + "]"
                                              for row in structure.metric) + "]")
    lines.append("[fields]")
    for j, f in enumerate(structure.frame, start=1):
        lines.append(f"f{j} = [" + ", ".join(f'"{s}"' for s in f.to_strings()) + "]")
    Path(path).write_text("\n".join(lines) + "\n")


def resolve_structure(name_or_path: str) -> SRStructure:
    if name_or_path.lower() in CATALOGUE:
        return catalogue(name_or_path)
    return load_structure(name_or_path)
