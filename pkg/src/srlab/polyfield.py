"""Polynomial vector fields on R^n with exact derivatives and Lie brackets.

A field is stored as one sparse coefficient table per component, mapping an
exponent tuple ``(e_1, ..., e_n)`` to a float coefficient.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

Monomials = dict[tuple[int, ...], float]

_ZERO_TOL = 0.0


def _clean(table: Mapping[tuple[int, ...], float]) -> Monomials:
    return {e: float(c) for e, c in table.items() if abs(c) > _ZERO_TOL}


def _mul(a: Monomials, b: Monomials) -> Monomials:
    out: defaultdict[tuple[int, ...], float] = defaultdict(float)
    for ea, ca in a.items():
        for eb, cb in b.items():
            out[tuple(x + y for x, y in zip(ea, eb))] += ca * cb
    return _clean(out)


def _add(a: Monomials, b: Monomials, scale: float = 1.0) -> Monomials:
    out: defaultdict[tuple[int, ...], float] = defaultdict(float, a)
    for e, c in b.items():
        out[e] += scale * c
    return _clean(out)


def _diff(a: Monomials, d: int) -> Monomials:
    out: Monomials = {}
    for e, c in a.items():
        if e[d] == 0:
            continue
        e2 = list(e)
        e2[d] -= 1
        out[tuple(e2)] = c * e[d]
    return out


@dataclass(frozen=True)
class PolyField:
    """Vector field whose components are polynomials in ``x_1..x_n``."""

    dim: int
    components: tuple[Monomials, ...]

    def __post_init__(self):
        if len(self.components) != self.dim:
            raise ValueError(f"expected {self.dim} components, got {len(self.components)}")
        for table in self.components:
            for e in table:
                if len(e) != self.dim or min(e, default=0) < 0:
                    raise ValueError(f"bad exponent tuple {e!r} for dimension {self.dim}")

    @classmethod
    def from_tables(cls, tables: Sequence[Mapping[tuple[int, ...], float]]) -> "PolyField":
        return cls(len(tables), tuple(_clean(t) for t in tables))

    @classmethod
    def constant(cls, vec: Sequence[float]) -> "PolyField":
        n = len(vec)
        zero = (0,) * n
        return cls.from_tables([{zero: v} if v else {} for v in vec])

    @classmethod
    def from_strings(cls, exprs: Sequence[str]) -> "PolyField":
        """Parse component expressions such as ``"-x2/2"`` or ``"x1**2/2"``.

        Variables are named ``x1..xn`` with ``n = len(exprs)``.
        """
        import sympy

        n = len(exprs)
        xs = sympy.symbols(f"x1:{n + 1}")
        local = {f"x{i + 1}": xs[i] for i in range(n)}
        tables = []
        for text in exprs:
            expr = sympy.sympify(str(text), locals=local)
            poly = sympy.Poly(expr, *xs)
            tables.append({tuple(int(p) for p in mon): float(c) for mon, c in poly.terms()})
        return cls.from_tables(tables)

    # evaluation ---------------------------------------------------------

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.zeros(self.dim)
        for c, table in enumerate(self.components):
            for e, coef in table.items():
                out[c] += coef * np.prod(x ** np.array(e))
        return out

    def partial(self, d: int) -> "PolyField":
        return PolyField(self.dim, tuple(_diff(t, d) for t in self.components))

    def jacobian(self, x) -> np.ndarray:
        """Matrix ``J[c, d] = d f_c / d x_d``."""
        return np.stack([self.partial(d)(x) for d in range(self.dim)], axis=1)

    def hessian(self, x) -> np.ndarray:
        """Tensor ``H[c, d, e] = d^2 f_c / dx_d dx_e``."""
        H = np.empty((self.dim, self.dim, self.dim))
        for d in range(self.dim):
            pd = self.partial(d)
            for e in range(self.dim):
                H[:, d, e] = pd.partial(e)(x)
        return H

    # algebra ------------------------------------------------------------

    def __add__(self, other: "PolyField") -> "PolyField":
        return PolyField(self.dim, tuple(_add(a, b) for a, b in zip(self.components, other.components)))

    def __sub__(self, other: "PolyField") -> "PolyField":
        return PolyField(self.dim, tuple(_add(a, b, -1.0) for a, b in zip(self.components, other.components)))

    def scale(self, s: float) -> "PolyField":
        return PolyField(self.dim, tuple(_clean({e: s * c for e, c in t.items()}) for t in self.components))

    def apply_derivative(self, other: "PolyField") -> "PolyField":
        """Directional derivative of ``self`` along ``other``: (D self) other."""
        comps = []
        for c in range(self.dim):
            acc: Monomials = {}
            for d in range(self.dim):
                acc = _add(acc, _mul(_diff(self.components[c], d), other.components[d]))
            comps.append(acc)
        return PolyField(self.dim, tuple(comps))

    def bracket(self, other: "PolyField") -> "PolyField":
        """Lie bracket [self, other] = (D other) self - (D self) other."""
        return other.apply_derivative(self) - self.apply_derivative(other)

    def is_constant(self) -> bool:
        return all(all(sum(e) == 0 for e in t) for t in self.components)

    def is_zero(self) -> bool:
        return all(not t for t in self.components)

    def degree(self) -> int:
        return max((sum(e) for t in self.components for e in t), default=0)

    def to_strings(self) -> list[str]:
        out = []
        for table in self.components:
            terms = []
            for e, c in sorted(table.items()):
                mono = "*".join(f"x{i + 1}**{p}" if p > 1 else f"x{i + 1}" for i, p in enumerate(e) if p)
                terms.append(f"({c!r})*{mono}" if mono else f"({c!r})")
            out.append(" + ".join(terms) if terms else "0")
        return out


def pack_frame(frame: Sequence[PolyField]) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Flatten a frame into arrays ``(exps, coefs, field_idx, comp_idx)`` for the compiled kernels."""
    n = frame[0].dim
    exps, coefs, fld, comp = [], [], [], []
    for j, f in enumerate(frame):
        for c, table in enumerate(f.components):
            for e, coef in table.items():
                exps.append(e)
                coefs.append(coef)
                fld.append(j)
                comp.append(c)
    if not exps:
        return np.zeros((0, n), np.int64), np.zeros(0), np.zeros(0, np.int64), np.zeros(0, np.int64)
    return (np.asarray(exps, np.int64), np.asarray(coefs, float),
            np.asarray(fld, np.int64), np.asarray(comp, np.int64))
