"""Minimal-submanifold Lagrangians and a nonparametric graph workbench.

Symbolic side: the metric area Lagrangian sqrt(det(g_KL y^K_j y^L_k)), its
determinant-type Lepage form on fiber differentials, and coincidence checks
among the homogeneous Lepage constructors.  Numeric side: the quasilinear
graph equation (1+u_y^2)u_xx - 2 u_x u_y u_xy + (1+u_x^2)u_yy = 0 on uniform
grids, a damped Newton solver, conservation-law circulations, and potential
reconstruction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations, product
from math import factorial
from typing import Callable, Mapping

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.sparse import csr_matrix
from scipy.sparse.linalg import spsolve

from . import _kernels
from .charts import ChartError, JetChart
from .equivalents import (HorizontalNForm, Lagrangian, fundamental_homogeneous,
                          hilbert_caratheodory)
from .expr import (Expr, ExprError, ONE, PointAssignment, Sym, ZERO, const,
                   cos_expr, det_expr, diff, evaluate, expr_sum, free_symbols,
                   log_expr, sqrt_expr, sym_expr, yj)
from .forms import DiffForm, FormEqualResult, form_equal

__all__ = [
    "MetricSpec", "GridField", "CoincidenceReport", "SolveResult",
    "ConservationReport", "ReconstructionReport",
    "minimal_lagrangian", "krupka_form", "coincidence_report",
    "verify_coincidence", "graph_el_residual", "solve_minimal_surface",
    "conservation_residuals", "reconstruct_and_check",
    "scherk_expr", "BUILTIN_SURFACES",
]


# ---------------------------------------------------------------------------
# metric data
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MetricSpec:
    """Riemannian metric on the configuration space, entries over y-coordinates."""

    entries: tuple[tuple[Expr, ...], ...]

    def __post_init__(self):
        dim = len(self.entries)
        if dim == 0 or any(len(row) != dim for row in self.entries):
            raise ExprError("metric entries must form a square matrix")
        for K in range(dim):
            for L in range(dim):
                for s in free_symbols(self.entries[K][L]):
                    if s.kind != "y":
                        raise ExprError("metric entries may depend on "
                                        "configuration coordinates only")
                if K < L and not (self.entries[K][L] - self.entries[L][K]).is_zero:
                    raise ExprError(f"metric not symmetric at ({K + 1}, {L + 1})")

    @classmethod
    def euclidean(cls, dim: int) -> "MetricSpec":
        return cls(tuple(tuple(ONE if K == L else ZERO for L in range(dim))
                         for K in range(dim)))

    @classmethod
    def diagonal(cls, *diag) -> "MetricSpec":
        entries = tuple(
            tuple(d if K == L else ZERO for L in range(len(diag)))
            for K, d in enumerate(diag))
        return cls(entries)

    @property
    def dim(self) -> int:
        return len(self.entries)

    def entry(self, K: int, L: int) -> Expr:
        return self.entries[K - 1][L - 1]

    def matrix_at(self, assign: PointAssignment) -> np.ndarray:
        return np.array([[evaluate(e, assign) for e in row]
                         for row in self.entries])

    def definite_at(self, assign: PointAssignment) -> bool:
        """Positive definiteness at a sample, by Cholesky success."""
        try:
            np.linalg.cholesky(self.matrix_at(assign))
            return True
        except np.linalg.LinAlgError:
            return False


# ---------------------------------------------------------------------------
# symbolic constructions
# ---------------------------------------------------------------------------

def _metric_chart(g: MetricSpec, n: int) -> JetChart:
    if n > 3:
        raise ChartError("Gram determinant expansion is guarded to n <= 3")
    if g.dim <= n:
        raise ChartError("metric dimension must exceed the base dimension")
    return JetChart(n=n, m=g.dim - n, order=1)


def minimal_lagrangian(g: MetricSpec, n: int) -> Lagrangian:
    """Area Lagrangian sqrt(det(g_KL y^K_j y^L_k)) of n-dimensional submanifolds."""
    chart = _metric_chart(g, n)
    M = g.dim
    gram = [[expr_sum(g.entry(K, L) * yj(K, j) * yj(L, k)
                      for K in range(1, M + 1) for L in range(1, M + 1)
                      if not g.entry(K, L).is_zero)
             for k in range(1, n + 1)] for j in range(1, n + 1)]
    return Lagrangian(chart, sqrt_expr(det_expr(gram)))


def krupka_form(g: MetricSpec, n: int) -> HorizontalNForm:
    """Determinant-type Lepage form on fiber differentials.

    Coefficient tensor (1/n!)(1/L) g_{K1 L1} ... g_{Kn Ln} D^{L1...Ln} where
    D^{L1...Ln} is the determinant of the jet rows y^{L_t}_k.
    """
    chart = _metric_chart(g, n)
    M = g.dim
    L_fun = minimal_lagrangian(g, n).L
    scale = const(Fraction(1, factorial(n))) / L_fun
    coefficients: dict[tuple, Expr] = {}
    for Ks in product(range(1, M + 1), repeat=n):
        acc = ZERO
        for Ls in product(range(1, M + 1), repeat=n):
            weight = ONE
            for K, L in zip(Ks, Ls):
                entry = g.entry(K, L)
                if entry.is_zero:
                    weight = ZERO
                    break
                weight = weight * entry
            if weight.is_zero:
                continue
            D = det_expr([[yj(L, k) for k in range(1, n + 1)] for L in Ls])
            acc = acc + weight * D
        if not acc.is_zero:
            coefficients[Ks] = acc * scale
    return HorizontalNForm.from_tensor(chart, coefficients)


@dataclass
class CoincidenceReport:
    """Pairwise comparison verdicts among labelled horizontal forms."""

    results: dict[tuple[str, str], FormEqualResult]

    @property
    def passed(self) -> bool:
        return all(r.verdict == "equal" for r in self.results.values())

    def witnesses(self) -> dict[tuple[str, str], str]:
        return {pair: r.describe() for pair, r in self.results.items()
                if r.verdict != "equal"}

    def describe(self) -> str:
        lines = [f"{a} vs {b}: {r.describe()}"
                 for (a, b), r in self.results.items()]
        return "\n".join(lines)


def coincidence_report(forms: Mapping[str, DiffForm], *, trials: int = 50,
                       tol: float = 1e-9, seed: int = 0,
                       guards=()) -> CoincidenceReport:
    results = {}
    for (na, fa), (nb, fb) in combinations(forms.items(), 2):
        results[(na, nb)] = form_equal(fa, fb, trials=trials, tol=tol,
                                       seed=seed, guards=guards)
    return CoincidenceReport(results)


def verify_coincidence(g: MetricSpec, n: int, *, trials: int = 50,
                       tol: float = 1e-9, seed: int = 0) -> CoincidenceReport:
    """Compare the three homogeneous Lepage constructions of the area Lagrangian."""
    chart = _metric_chart(g, n)
    if chart.n not in (1, 2) or chart.m not in (1, 2):
        raise ChartError("coincidence check is guarded to n, m in {1, 2}")
    lam = minimal_lagrangian(g, n)
    forms = {
        "fundamental": fundamental_homogeneous(lam, verify=False,
                                               trials=trials, seed=seed),
        "product": hilbert_caratheodory(lam, trials=trials, seed=seed),
        "metric": krupka_form(g, n).form,
    }
    return coincidence_report(forms, trials=trials, tol=tol, seed=seed,
                              guards=[lam.L])


# ---------------------------------------------------------------------------
# grids
# ---------------------------------------------------------------------------

@dataclass
class GridField:
    """Nodal values on a uniform rectangle grid, boundary row/column fixed."""

    rect: tuple[float, float, float, float]
    values: np.ndarray

    def __post_init__(self):
        a, b, c, d = self.rect
        if not (a < b and c < d):
            raise ValueError("degenerate rectangle")
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2 or min(self.values.shape) < 3:
            raise ValueError("grid needs at least 3 x 3 nodes")

    @property
    def nx(self) -> int:
        return self.values.shape[0]

    @property
    def ny(self) -> int:
        return self.values.shape[1]

    @property
    def hx(self) -> float:
        a, b, _, _ = self.rect
        return (b - a) / (self.nx - 1)

    @property
    def hy(self) -> float:
        _, _, c, d = self.rect
        return (d - c) / (self.ny - 1)

    @property
    def xs(self) -> np.ndarray:
        a, b, _, _ = self.rect
        return np.linspace(a, b, self.nx)

    @property
    def ys(self) -> np.ndarray:
        _, _, c, d = self.rect
        return np.linspace(c, d, self.ny)

    def meshes(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.xs, self.ys, indexing="ij")

    @classmethod
    def from_function(cls, rect, shape: tuple[int, int],
                      fn: Callable[[np.ndarray, np.ndarray], np.ndarray]
                      ) -> "GridField":
        out = cls(tuple(map(float, rect)), np.zeros(shape))
        X, Y = out.meshes()
        out.values = np.asarray(fn(X, Y), dtype=float)
        return out

    @classmethod
    def dirichlet(cls, rect, shape: tuple[int, int],
                  fn: Callable[[np.ndarray, np.ndarray], np.ndarray]
                  ) -> "GridField":
        """Boundary data from fn; interior filled by transfinite interpolation."""
        out = cls.from_function(rect, shape, fn)
        u = out.values
        s = np.linspace(0.0, 1.0, out.nx)[:, None]
        t = np.linspace(0.0, 1.0, out.ny)[None, :]
        blend = ((1 - s) * u[0, :][None, :] + s * u[-1, :][None, :]
                 + (1 - t) * u[:, 0][:, None] + t * u[:, -1][:, None]
                 - (1 - s) * (1 - t) * u[0, 0] - (1 - s) * t * u[0, -1]
                 - s * (1 - t) * u[-1, 0] - s * t * u[-1, -1])
        blend[0, :] = u[0, :]
        blend[-1, :] = u[-1, :]
        blend[:, 0] = u[:, 0]
        blend[:, -1] = u[:, -1]
        out.values = blend
        return out

    def interior_derivatives(self) -> dict[str, np.ndarray]:
        """Central-difference jets at the interior nodes."""
        ux, uy, uxx, uyy, uxy = _kernels._stencil_derivatives(
            self.values, self.hx, self.hy)
        return {"ux": ux, "uy": uy, "uxx": uxx, "uxy": uxy, "uyy": uyy}

    def copy(self) -> "GridField":
        return GridField(self.rect, self.values.copy())


# ---------------------------------------------------------------------------
# graph equation, symbolic and numeric
# ---------------------------------------------------------------------------

_BASE_SYMS = (Sym("x", 1), Sym("x", 2))


def graph_el_residual(u):
    """(1+u_y^2)u_xx - 2 u_x u_y u_xy + (1+u_x^2)u_yy.

    Closed-form input (an expression in the two base coordinates) gives the
    symbolic residual; a GridField gives central-difference values at the
    interior nodes.
    """
    if isinstance(u, GridField):
        return _kernels.interior_residual(u.values, u.hx, u.hy)
    if not isinstance(u, Expr):
        raise TypeError("expected an expression or a GridField")
    extra = [s for s in free_symbols(u) if s not in _BASE_SYMS]
    if extra:
        raise ExprError(f"graph function depends on non-base symbols {extra}")
    X1, X2 = _BASE_SYMS
    ux, uy = diff(u, X1), diff(u, X2)
    uxx, uxy, uyy = diff(ux, X1), diff(ux, X2), diff(uy, X2)
    return ((ONE + uy * uy) * uxx - const(2) * ux * uy * uxy
            + (ONE + ux * ux) * uyy)


def scherk_expr() -> Expr:
    """The doubly periodic saddle log(cos x / cos y) as a closed form."""
    return (log_expr(cos_expr(sym_expr(_BASE_SYMS[0])))
            - log_expr(cos_expr(sym_expr(_BASE_SYMS[1]))))


BUILTIN_SURFACES: dict[str, Callable] = {
    "scherk": lambda X, Y: np.log(np.cos(X) / np.cos(Y)),
    "plane": lambda X, Y: 0.5 * X - 0.25 * Y + 1.0,
    "paraboloid": lambda X, Y: X ** 2 + Y ** 2,
}


# ---------------------------------------------------------------------------
# Newton solver
# ---------------------------------------------------------------------------

@dataclass
class SolveResult:
    field: GridField
    converged: bool
    iterations: int
    history: list[float] = field(default_factory=list)
    message: str = ""

    @property
    def final_residual(self) -> float:
        return self.history[-1] if self.history else float("nan")

    def describe(self) -> str:
        status = "converged" if self.converged else "failed"
        return (f"{status} after {self.iterations} Newton steps, "
                f"max residual {self.final_residual:.3e}"
                + (f" ({self.message})" if self.message else ""))


def solve_minimal_surface(boundary: GridField, *, tol: float = 1e-10,
                          max_iter: int = 20) -> SolveResult:
    """Damped Newton iteration on the central-difference graph equation.

    Boundary nodes are Dirichlet data; interior values of the input serve as
    the initial guess.  Steps are halved while they increase the max-norm
    residual.
    """
    if tol <= 0:
        raise ValueError("tolerance must be positive")
    u = boundary.values.copy()
    hx, hy = boundary.hx, boundary.hy
    my = boundary.ny - 2
    res = _kernels.interior_residual(u, hx, hy)
    rmax = float(np.max(np.abs(res)))
    history = [rmax]
    for it in range(1, max_iter + 1):
        if rmax < tol:
            return SolveResult(GridField(boundary.rect, u), True, it - 1,
                               history)
        rows, cols, vals = _kernels.interior_jacobian_coo(u, hx, hy)
        J = csr_matrix((vals, (rows, cols)), shape=(res.size, res.size))
        delta = spsolve(J, -res.ravel())
        if not np.all(np.isfinite(delta)):
            return SolveResult(GridField(boundary.rect, u), False, it - 1,
                               history, "singular Jacobian")
        step = 1.0
        while True:
            trial = u.copy()
            trial[1:-1, 1:-1] += step * delta.reshape(-1, my)
            res_new = _kernels.interior_residual(trial, hx, hy)
            rmax_new = float(np.max(np.abs(res_new)))
            if rmax_new < rmax or step < 1e-8:
                break
            step *= 0.5
        if rmax_new >= rmax:
            history.append(rmax_new)
            return SolveResult(GridField(boundary.rect, u), False, it,
                               history, "stagnated under damping")
        u, res, rmax = trial, res_new, rmax_new
        history.append(rmax)
    converged = rmax < tol
    msg = "" if converged else f"residual {rmax:.3e} after {max_iter} steps"
    return SolveResult(GridField(boundary.rect, u), converged, max_iter,
                       history, msg)


# ---------------------------------------------------------------------------
# conservation currents on graphs
# ---------------------------------------------------------------------------

def _current_components(ux: np.ndarray, uy: np.ndarray) -> dict[str, tuple]:
    # the three closed 1-forms P dx + Q dy attached to a minimal graph;
    # their potentials are the f, g, h of the reconstruction step
    S = np.sqrt(1.0 + ux ** 2 + uy ** 2)
    return {
        "f": (ux * uy / S, (1.0 + uy ** 2) / S),
        "g": (-(1.0 + ux ** 2) / S, -ux * uy / S),
        "h": (-uy / S, ux / S),
    }


@dataclass
class ConservationReport:
    """Per-cell circulations of the three graph currents, area-normalized."""

    circulations: dict[str, np.ndarray]
    hx: float
    hy: float

    @property
    def max_circulation(self) -> float:
        return max(float(np.max(np.abs(c))) for c in self.circulations.values())

    def gate(self, factor: float = 10.0) -> float:
        return factor * max(self.hx, self.hy) ** 2

    def passed(self, factor: float = 10.0) -> bool:
        return self.max_circulation <= self.gate(factor)

    def describe(self) -> str:
        parts = [f"{name}: {float(np.max(np.abs(c))):.3e}"
                 for name, c in self.circulations.items()]
        return "max cell circulations " + ", ".join(parts)


def conservation_residuals(u: GridField) -> ConservationReport:
    """Discrete closedness of the graph currents, cell by cell.

    Currents are sampled at the interior nodes, where central differences
    keep the derivative error a smooth field; circulations over boundary
    cells would amplify the one-sided stencil mismatch by 1/h.
    """
    jets = u.interior_derivatives()
    circ = {name: _kernels.cell_circulation(P, Q, u.hx, u.hy)
            for name, (P, Q) in
            _current_components(jets["ux"], jets["uy"]).items()}
    return ConservationReport(circ, u.hx, u.hy)


@dataclass
class ReconstructionReport:
    """Gates of the conservation-to-extremal round trip on one grid."""

    stage: str  # 'ok' or the first failing gate
    max_circulation: float
    rovnice_residual: float
    el_residual: float
    gate: float
    potentials: dict[str, np.ndarray] | None = None

    @property
    def passed(self) -> bool:
        return self.stage == "ok"

    def describe(self) -> str:
        head = "pass" if self.passed else f"fail at {self.stage} gate"
        return (f"{head}: circulation {self.max_circulation:.3e}, "
                f"potential-system residual {self.rovnice_residual:.3e}, "
                f"equation residual {self.el_residual:.3e} "
                f"(gate {self.gate:.3e})")


def _potential(P: np.ndarray, Q: np.ndarray, hx: float, hy: float) -> np.ndarray:
    # cumulative trapezoid along the first row, then up each column
    row = cumulative_trapezoid(P[:, 0], dx=hx, initial=0.0)
    cols = cumulative_trapezoid(Q, dx=hy, axis=1, initial=0.0)
    return row[:, None] + cols


def reconstruct_and_check(u: GridField, *,
                          gate_factor: float = 10.0) -> ReconstructionReport:
    """Integrate the currents to potentials f, g, h and close the loop.

    Passes when the currents are numerically closed, the reconstructed
    potentials satisfy u_x f_* + u_y g_* - h_* = 0 in both base directions,
    and the graph equation residual is below the same gate.
    """
    report = conservation_residuals(u)
    gate = report.gate(gate_factor)
    circ_max = report.max_circulation
    jets = u.interior_derivatives()
    ux, uy = jets["ux"], jets["uy"]
    pots = {name: _potential(P, Q, u.hx, u.hy)
            for name, (P, Q) in _current_components(ux, uy).items()}
    rovnice = 0.0
    for axis, h in ((0, u.hx), (1, u.hy)):
        df = np.gradient(pots["f"], h, axis=axis, edge_order=2)
        dg = np.gradient(pots["g"], h, axis=axis, edge_order=2)
        dh = np.gradient(pots["h"], h, axis=axis, edge_order=2)
        rovnice = max(rovnice, float(np.max(np.abs(ux * df + uy * dg - dh))))
    el = float(np.max(np.abs(graph_el_residual(u))))
    if circ_max > gate:
        stage = "closedness"
    elif rovnice > gate:
        stage = "potential-system"
    elif el > gate:
        stage = "equation"
    else:
        stage = "ok"
    return ReconstructionReport(stage, circ_max, rovnice, el, gate, pots)
