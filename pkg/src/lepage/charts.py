"""Jet charts, adapted charts for Grassmann fibrations, total derivatives.

A ``JetChart`` fixes base dimension n, fiber dimension m and jet order (1 or
2) with coordinates x^i, y^K, y^K_j and (order 2) y^K_jk.  An ``AdaptedChart``
selects an increasing n-tuple (i) of fiber labels whose jet minor is regular
and carries the associated coordinates

    w^K = y^K,   w^i_j = y^i_j (i selected),   w^s_i = z^j_i y^s_j,

where z is the inverse of the selected minor.  All adapted computations fix
the orientation branch det(minor) > 0; samplers must guard minors positive.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from itertools import combinations
from typing import Mapping, Sequence

import numpy as np

from .expr import (
    DomainError, Expr, ExprError, PointAssignment, Sym, cancel_candidate,
    const, det_expr, diff, equal, evaluate, expr_sum, free_symbols,
    sqrt_extract_candidate, substitute, sym_expr,
)

__all__ = [
    "ChartError", "JetChart", "AdaptedChart", "GroupElement",
    "formal_derivative", "adapted_derivative", "regular_blocks",
    "gl_act", "gl_act_symbolic", "chart_from_json", "chart_to_json",
]


class ChartError(ExprError):
    pass


@dataclass(frozen=True)
class JetChart:
    """A fibered chart on the jet space of immersed n-submanifolds."""

    n: int
    m: int
    order: int = 1

    def __post_init__(self):
        if not 1 <= self.n <= 4:
            raise ChartError(f"base dimension must lie in 1..4, got {self.n}")
        if self.m < 1:
            raise ChartError(f"fiber dimension must be >= 1, got {self.m}")
        if self.order not in (1, 2):
            raise ChartError(f"jet order must be 1 or 2, got {self.order}")

    @property
    def M(self) -> int:
        return self.m + self.n

    def base_symbols(self) -> list[Sym]:
        return [Sym("x", i) for i in range(1, self.n + 1)]

    def fiber_symbols(self) -> list[Sym]:
        return [Sym("y", K) for K in range(1, self.M + 1)]

    def jet1_symbols(self) -> list[Sym]:
        return [Sym("y1", K, j) for K in range(1, self.M + 1)
                for j in range(1, self.n + 1)]

    def jet2_symbols(self) -> list[Sym]:
        return [Sym("y2", K, j, k) for K in range(1, self.M + 1)
                for j in range(1, self.n + 1) for k in range(j, self.n + 1)]

    def symbols(self) -> list[Sym]:
        out = self.base_symbols() + self.fiber_symbols() + self.jet1_symbols()
        if self.order == 2:
            out += self.jet2_symbols()
        return out

    def raised(self) -> "JetChart":
        return JetChart(self.n, self.m, 2)

    def validate_expr(self, e: Expr, *, max_order: int | None = None) -> None:
        order = max_order if max_order is not None else self.order
        for s in free_symbols(e):
            if s.kind in ("w", "w1", "z", "a"):
                continue
            if s.kind == "x" and not 1 <= s.a <= self.n:
                raise ChartError(f"symbol {s!r} outside chart base range")
            if s.kind in ("y", "y1", "y2") and not 1 <= s.a <= self.M:
                raise ChartError(f"symbol {s!r} outside chart fiber range")
            if s.kind == "y1" and not 1 <= s.b <= self.n:
                raise ChartError(f"symbol {s!r} outside chart base range")
            if s.kind == "y2":
                if order < 2:
                    raise ChartError(f"second-order symbol {s!r} on order-1 data")
                if not (1 <= s.b <= self.n and 1 <= s.c <= self.n):
                    raise ChartError(f"symbol {s!r} outside chart base range")


def contains_order2(e: Expr) -> bool:
    return any(s.kind == "y2" for s in free_symbols(e))


def formal_derivative(f: Expr, i: int, chart: JetChart) -> Expr:
    """Total derivative d_i f; raises the jet order of the result by one."""
    if not 1 <= i <= chart.n:
        raise ChartError(f"base index {i} outside 1..{chart.n}")
    if contains_order2(f):
        raise ChartError("total derivative of second-order data is not supported")
    pieces = [diff(f, Sym("x", i))]
    for K in range(1, chart.M + 1):
        dK = diff(f, Sym("y", K))
        if not dK.is_zero:
            pieces.append(dK * sym_expr(Sym("y1", K, i)))
        for j in range(1, chart.n + 1):
            dKj = diff(f, Sym("y1", K, j))
            if not dKj.is_zero:
                pieces.append(dKj * sym_expr(Sym("y2", K, j, i)))
    return expr_sum(pieces)


# ---------------------------------------------------------------------------
# adapted charts
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AdaptedChart:
    """Chart adapted to a regular selected minor of the first jet."""

    chart: JetChart
    selected: tuple[int, ...]

    def __post_init__(self):
        cs = tuple(self.selected)
        object.__setattr__(self, "selected", cs)
        if len(cs) != self.chart.n:
            raise ChartError(
                f"selected tuple must have length n={self.chart.n}, got {cs}")
        if list(cs) != sorted(set(cs)):
            raise ChartError(f"selected tuple must be strictly increasing: {cs}")
        if not all(1 <= i <= self.chart.M for i in cs):
            raise ChartError(f"selected labels outside 1..{self.chart.M}: {cs}")

    @property
    def complement(self) -> tuple[int, ...]:
        sel = set(self.selected)
        return tuple(K for K in range(1, self.chart.M + 1) if K not in sel)

    # -- minors -------------------------------------------------------------

    def minor_matrix_y(self) -> list[list[Expr]]:
        """Rows indexed by selected labels, columns by base indices."""
        return [[sym_expr(Sym("y1", it, j)) for j in range(1, self.chart.n + 1)]
                for it in self.selected]

    def minor_matrix_w(self) -> list[list[Expr]]:
        return [[sym_expr(Sym("w1", it, j)) for j in range(1, self.chart.n + 1)]
                for it in self.selected]

    def minor_det_y(self) -> Expr:
        return det_expr(self.minor_matrix_y())

    def minor_det_w(self) -> Expr:
        return det_expr(self.minor_matrix_w())

    def z_exprs(self) -> dict[tuple[int, int], Expr]:
        """Entries z^k_i, i selected: the inverse of the selected minor.

        Defined by sum_i z^k_i y^i_j = delta^k_j with i running over the
        selected labels; each entry is a signed cofactor over the minor
        determinant.
        """
        n = self.chart.n
        A = self.minor_matrix_y()
        det = self.minor_det_y()
        out: dict[tuple[int, int], Expr] = {}
        for k in range(1, n + 1):
            for t, it in enumerate(self.selected):
                sub = [[A[r][c] for c in range(n) if c != k - 1]
                       for r in range(n) if r != t]
                if sub:
                    cof = det_expr(sub) if len(sub) > 1 else sub[0][0]
                else:
                    cof = const(1)
                sign = -1 if (t + k - 1) % 2 else 1
                out[(k, it)] = const(sign) * cof / det
        return out

    # -- chart transitions ---------------------------------------------------

    def w_in_terms_of_y(self) -> dict[Sym, Expr]:
        """The adapted coordinates expressed on the jet chart."""
        out: dict[Sym, Expr] = {}
        z = self.z_exprs()
        for K in range(1, self.chart.M + 1):
            out[Sym("w", K)] = sym_expr(Sym("y", K))
        for it in self.selected:
            for j in range(1, self.chart.n + 1):
                out[Sym("w1", it, j)] = sym_expr(Sym("y1", it, j))
        for s in self.complement:
            for it in self.selected:
                out[Sym("w1", s, it)] = expr_sum(
                    z[(j, it)] * sym_expr(Sym("y1", s, j))
                    for j in range(1, self.chart.n + 1))
        return out

    def y_in_terms_of_w(self) -> dict[Sym, Expr]:
        """The jet coordinates expressed on the adapted chart."""
        out: dict[Sym, Expr] = {}
        for K in range(1, self.chart.M + 1):
            out[Sym("y", K)] = sym_expr(Sym("w", K))
        for it in self.selected:
            for j in range(1, self.chart.n + 1):
                out[Sym("y1", it, j)] = sym_expr(Sym("w1", it, j))
        for s in self.complement:
            for j in range(1, self.chart.n + 1):
                out[Sym("y1", s, j)] = expr_sum(
                    sym_expr(Sym("w1", s, it)) * sym_expr(Sym("w1", it, j))
                    for it in self.selected)
        return out

    def to_adapted(self, f: Expr) -> Expr:
        """Express first-order jet data in adapted coordinates.

        Substitutes the inverse chart map and then reduces the known minor
        factor det(w^i_j) out of radicands and fractions (valid on the
        positive branch).
        """
        if contains_order2(f):
            raise ChartError("adapted charts carry first-order data only")
        g = substitute(f, self.y_in_terms_of_w())
        delta = self.minor_det_w()
        g = sqrt_extract_candidate(g, delta)
        return cancel_candidate(g, delta)

    def from_adapted(self, g: Expr) -> Expr:
        return substitute(g, self.w_in_terms_of_y())

    def adapted_symbols(self) -> list[Sym]:
        out = [Sym("w", K) for K in range(1, self.chart.M + 1)]
        out += [Sym("w1", it, j) for it in self.selected
                for j in range(1, self.chart.n + 1)]
        out += [Sym("w1", s, it) for s in self.complement for it in self.selected]
        return out

    def grassmann_symbols(self) -> list[Sym]:
        """Coordinates that descend to the Grassmann quotient."""
        out = [Sym("w", K) for K in range(1, self.chart.M + 1)]
        out += [Sym("w1", s, it) for s in self.complement for it in self.selected]
        return out

    def guards(self) -> list[Expr]:
        """Positivity guards for sampling on this chart's branch."""
        return [self.minor_det_y()]

    def guards_w(self) -> list[Expr]:
        return [self.minor_det_w()]


def adapted_derivative(f: Expr, i: int, adapted: AdaptedChart) -> Expr:
    """The cut derivative D_i f = df/dw^i + w^s_i df/dw^s on the adapted chart."""
    if i not in adapted.selected:
        raise ChartError(f"adapted derivative index {i} must be a selected label")
    bad = [s for s in free_symbols(f) if s.kind == "w1" and s.a in adapted.complement]
    if bad:
        raise ChartError(
            "cut derivative is defined for functions of the fiber coordinates; "
            f"found {bad[0]!r}")
    pieces = [diff(f, Sym("w", i))]
    for s in adapted.complement:
        ds = diff(f, Sym("w", s))
        if not ds.is_zero:
            pieces.append(sym_expr(Sym("w1", s, i)) * ds)
    return expr_sum(pieces)


def regular_blocks(assign: PointAssignment, chart: JetChart,
                   tol: float = 1e-12) -> list[tuple[int, ...]]:
    """Selected tuples whose jet minor is nonsingular at the given point."""
    out = []
    for sel in combinations(range(1, chart.M + 1), chart.n):
        mat = np.array([[assign.symbols.get(Sym("y1", it, j), 0.0)
                         for j in range(1, chart.n + 1)] for it in sel])
        if abs(np.linalg.det(mat)) > tol:
            out.append(sel)
    return out


# ---------------------------------------------------------------------------
# jet group action
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GroupElement:
    """An element of the orientation-preserving linear jet group."""

    entries: tuple[tuple[float, ...], ...]

    def __post_init__(self):
        mat = np.array(self.entries, dtype=float)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise ChartError("group element must be a square matrix")
        if np.linalg.det(mat) <= 0:
            raise ChartError("group element must have positive determinant")
        object.__setattr__(self, "entries",
                           tuple(tuple(float(v) for v in row) for row in mat))

    @property
    def n(self) -> int:
        return len(self.entries)

    def det(self) -> float:
        return float(np.linalg.det(np.array(self.entries)))

    @staticmethod
    def random_near_identity(n: int, rng, spread: float = 0.3,
                             min_det: float = 0.1) -> "GroupElement":
        while True:
            mat = np.eye(n) + spread * (2 * rng.random((n, n)) - 1)
            if np.linalg.det(mat) > min_det:
                return GroupElement(tuple(tuple(row) for row in mat))


def gl_act(assign: PointAssignment, a: GroupElement,
           chart: JetChart) -> PointAssignment:
    """Right action on first-order jets: y^K_j -> sum_l y^K_l a^l_j."""
    if a.n != chart.n:
        raise ChartError("group element size does not match the chart")
    values = dict(assign.symbols)
    for K in range(1, chart.M + 1):
        row = [assign.symbols.get(Sym("y1", K, l), 0.0)
               for l in range(1, chart.n + 1)]
        for j in range(1, chart.n + 1):
            values[Sym("y1", K, j)] = sum(
                row[l - 1] * a.entries[l - 1][j - 1]
                for l in range(1, chart.n + 1))
    return PointAssignment(values, assign.functions)


def gl_act_symbolic(f: Expr, chart: JetChart) -> Expr:
    """Substitute the group action with formal entries a^l_j."""
    mapping = {}
    for K in range(1, chart.M + 1):
        for j in range(1, chart.n + 1):
            mapping[Sym("y1", K, j)] = expr_sum(
                sym_expr(Sym("y1", K, l)) * sym_expr(Sym("a", l, j))
                for l in range(1, chart.n + 1))
    return substitute(f, mapping)


def group_det_symbolic(n: int) -> Expr:
    return det_expr([[sym_expr(Sym("a", i, j)) for j in range(1, n + 1)]
                     for i in range(1, n + 1)])


# ---------------------------------------------------------------------------
# JSON chart declarations
# ---------------------------------------------------------------------------

def chart_from_json(data) -> tuple[JetChart, AdaptedChart | None]:
    """Build charts from {"n":2,"m":1,"order":2,"adapted":[1,2]}."""
    if isinstance(data, str):
        data = json.loads(data)
    try:
        chart = JetChart(n=int(data["n"]), m=int(data["m"]),
                         order=int(data.get("order", 1)))
    except KeyError as exc:
        raise ChartError(f"chart declaration is missing {exc}") from None
    adapted = None
    if data.get("adapted") is not None:
        adapted = AdaptedChart(chart, tuple(int(v) for v in data["adapted"]))
    return chart, adapted


def chart_to_json(chart: JetChart, adapted: AdaptedChart | None = None) -> dict:
    out = {"n": chart.n, "m": chart.m, "order": chart.order}
    if adapted is not None:
        out["adapted"] = list(adapted.selected)
    return out
