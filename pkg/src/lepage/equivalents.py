"""Lepage equivalents of first-order Lagrangians and the Euler-Lagrange form.

Constructors: the Poincare-Cartan form, the fundamental equivalent built from
iterated jet derivatives of the Lagrange function, the Caratheodory product
form, and the two incarnations specific to positive-homogeneous Lagrange
functions (the closed-form fundamental equivalent on pure fiber differentials
and the Hilbert-Caratheodory form).  The criteria side provides the horizontal
Lepage test for skew coefficient systems, the induced Lagrange function, the
Euler-Lagrange expressions and the identity relating them to the 1-contact
part of the exterior derivative.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from itertools import permutations, product
from math import factorial
from typing import Mapping, Sequence

from .charts import ChartError, JetChart, formal_derivative
from .expr import (
    Expr, ExprError, ONE, Sym, ZERO, const, diff, equal, expr_sum,
    free_symbols, levi_civita, sym_expr,
)
from .forms import (
    DiffForm, FormError, dx, dy, om, form, zero_form, wedge, wedge_all,
    volume_form, omega_marginal, horizontalize, contact_component, ext_d,
    form_equal,
)

__all__ = [
    "Lagrangian", "HorizontalNForm", "DerivativeTensors", "LepageVerdict",
    "poincare_cartan", "fundamental", "caratheodory", "hilbert_caratheodory",
    "fundamental_homogeneous", "lagrangian_of", "is_lepage", "euler_lagrange",
    "el_form_check",
]


@dataclass(frozen=True)
class Lagrangian:
    """First-order Lagrange function attached to a jet chart."""

    chart: JetChart
    L: Expr

    def __post_init__(self):
        for s in free_symbols(self.L):
            if s.kind == "y2":
                raise ChartError("Lagrange function must be first order")
        self.chart.validate_expr(self.L, max_order=1)

    def volume(self) -> DiffForm:
        return volume_form(self.chart).scale(self.L)


class DerivativeTensors:
    """Iterated jet-derivative tensors of a scalar, memoized per multi-index.

    Keys are sorted tuples of (fiber index, base index) pairs; sorting is
    valid because mixed partials commute.
    """

    def __init__(self, L: Expr):
        self.cache: dict[tuple, Expr] = {(): L}

    def get(self, pairs: Sequence[tuple[int, int]]) -> Expr:
        key = tuple(sorted(pairs))
        hit = self.cache.get(key)
        if hit is not None:
            return hit
        prefix, (K, j) = key[:-1], key[-1]
        value = diff(self.get(prefix), Sym("y1", K, j))
        self.cache[key] = value
        return value


@dataclass(frozen=True)
class HorizontalNForm:
    """n-form with skew coefficients on pure fiber differentials.

    Stores the skew tensor at strictly increasing fiber-index words; the
    wrapped form carries exactly those words, so antisymmetry holds by
    construction.
    """

    chart: JetChart
    form: DiffForm

    def __post_init__(self):
        if self.form.degree != self.chart.n:
            raise FormError("horizontal form degree must match the base dimension")
        for word, coeff in self.form.terms.items():
            if any(cov.kind != "dy" for cov in word):
                raise FormError("horizontal forms carry fiber differentials only")
            self.chart.validate_expr(coeff, max_order=1)

    @classmethod
    def from_tensor(cls, chart: JetChart,
                    coefficients: Mapping[tuple, Expr]) -> "HorizontalNForm":
        """Build from skew-tensor values at arbitrary fiber index tuples."""
        terms = {tuple(dy(K) for K in Ks): coeff
                 for Ks, coeff in coefficients.items()}
        built = form(chart, "coordinate", terms) if terms else \
            zero_form(chart, chart.n, "coordinate")
        return cls(chart, built)

    def coefficient(self, Ks: Sequence[int]) -> Expr:
        """Skew tensor value at an arbitrary index tuple."""
        return self.form.coefficient(tuple(dy(K) for K in Ks))


# ---------------------------------------------------------------------------
# constructors
# ---------------------------------------------------------------------------

def poincare_cartan(lam: Lagrangian) -> DiffForm:
    """The least-contact Lepage equivalent on the jet chart."""
    chart = lam.chart
    result = volume_form(chart).scale(lam.L)
    for K in range(1, chart.M + 1):
        for j in range(1, chart.n + 1):
            coeff = diff(lam.L, Sym("y1", K, j))
            if coeff.is_zero:
                continue
            one_form = DiffForm(chart, 1, "contact", {(om(K),): coeff})
            result = result + wedge(one_form, omega_marginal(chart, j))
    return result


def fundamental(lam: Lagrangian) -> DiffForm:
    """Lepage equivalent collecting all iterated jet derivatives.

    The degree-k layer sums, over fiber indices and permutations p of the
    base indices, the k-th derivative of the Lagrange function contracted
    with the permutation sign, wedged as (contact)^k (dx)^(n-k), weighted
    by 1/((n-k)! (k!)^2).
    """
    chart = lam.chart
    n, M = chart.n, chart.M
    tensors = DerivativeTensors(lam.L)
    acc: dict[tuple, Expr] = {}
    for k in range(0, n + 1):
        weight = Fraction(1, factorial(n - k) * factorial(k) ** 2)
        for p in permutations(range(1, n + 1)):
            sign = levi_civita(p)
            base_word = tuple(dx(i) for i in p[k:])
            for Ks in product(range(1, M + 1), repeat=k):
                deriv = tensors.get(tuple(zip(Ks, p[:k])))
                if deriv.is_zero:
                    continue
                word = tuple(om(K) for K in Ks) + base_word
                coeff = const(sign * weight) * deriv
                acc[word] = acc.get(word, ZERO) + coeff
    return form(chart, "contact", acc) if acc else \
        zero_form(chart, n, "contact")


def caratheodory(lam: Lagrangian) -> DiffForm:
    """Product-form Lepage equivalent; needs a nonvanishing Lagrange function."""
    if lam.L.is_zero:
        raise ExprError("Caratheodory form needs a nonvanishing Lagrange function")
    chart = lam.chart
    factors = []
    for k in range(1, chart.n + 1):
        terms: dict[tuple, Expr] = {(dx(k),): ONE}
        for K in range(1, chart.M + 1):
            coeff = diff(lam.L, Sym("y1", K, k)) / lam.L
            if not coeff.is_zero:
                terms[(om(K),)] = coeff
        factors.append(DiffForm(chart, 1, "contact", terms))
    return wedge_all(factors).scale(lam.L)


def _require_homogeneous(lam: Lagrangian, trials: int, tol: float, seed: int):
    from .homogeneity import zermelo_residuals
    report = zermelo_residuals(lam.L, lam.chart, trials=trials, tol=tol,
                               seed=seed)
    if not report.passed:
        raise ExprError(
            "Lagrange function is not positive homogeneous: "
            + report.describe())


def hilbert_caratheodory(lam: Lagrangian, *, trials: int = 50,
                         tol: float = 1e-9, seed: int = 0) -> DiffForm:
    """Caratheodory form of a homogeneous Lagrange function, on pure dy words."""
    if lam.L.is_zero:
        raise ExprError("Hilbert-Caratheodory form needs a nonvanishing "
                        "Lagrange function")
    _require_homogeneous(lam, trials, tol, seed)
    chart = lam.chart
    n, M = chart.n, chart.M
    tensors = DerivativeTensors(lam.L)
    scale = const(Fraction(1, factorial(n))) / lam.L ** (n - 1)
    acc: dict[tuple, Expr] = {}
    for p in permutations(range(1, n + 1)):
        sign = levi_civita(p)
        for Ks in product(range(1, M + 1), repeat=n):
            coeff = ONE
            for K, j in zip(Ks, p):
                part = tensors.get(((K, j),))
                if part.is_zero:
                    coeff = ZERO
                    break
                coeff = coeff * part
            if coeff.is_zero:
                continue
            word = tuple(dy(K) for K in Ks)
            acc[word] = acc.get(word, ZERO) + const(sign) * coeff
    built = form(chart, "coordinate", acc) if acc else \
        zero_form(chart, n, "coordinate")
    return built.scale(scale)


def fundamental_homogeneous(lam: Lagrangian, *, verify: bool = True,
                            trials: int = 50, tol: float = 1e-9,
                            seed: int = 0) -> DiffForm:
    """Fundamental equivalent of a homogeneous Lagrange function.

    Collapses to the pure fiber-differential expression carrying the n-th
    jet-derivative tensor; optionally cross-checks against the generic
    constructor coefficientwise.
    """
    _require_homogeneous(lam, trials, tol, seed)
    chart = lam.chart
    n, M = chart.n, chart.M
    tensors = DerivativeTensors(lam.L)
    weight = Fraction(1, factorial(n) ** 2)
    acc: dict[tuple, Expr] = {}
    for p in permutations(range(1, n + 1)):
        sign = levi_civita(p)
        for Ks in product(range(1, M + 1), repeat=n):
            deriv = tensors.get(tuple(zip(Ks, p)))
            if deriv.is_zero:
                continue
            word = tuple(dy(K) for K in Ks)
            acc[word] = acc.get(word, ZERO) + const(sign * weight) * deriv
    built = form(chart, "coordinate", acc) if acc else \
        zero_form(chart, n, "coordinate")
    if verify:
        res = form_equal(built, fundamental(lam), trials=20, tol=tol, seed=seed)
        if res.verdict == "unequal":
            raise ExprError(
                "homogeneous fundamental equivalent disagrees with the "
                "generic constructor: " + res.describe())
    return built


# ---------------------------------------------------------------------------
# criteria
# ---------------------------------------------------------------------------

def lagrangian_of(rho: HorizontalNForm) -> Lagrangian:
    """Lagrange function induced by a horizontal n-form (its horizontal part)."""
    chart = rho.chart
    horizontal = horizontalize(rho.form)
    word = tuple(dx(i) for i in range(1, chart.n + 1))
    return Lagrangian(chart, horizontal.terms.get(word, ZERO))


@dataclass
class LepageVerdict:
    passed: bool
    witness: object = None
    detail: str = ""

    def __bool__(self):
        return self.passed

    def describe(self) -> str:
        return "pass" if self.passed else f"fail: {self.detail}"


def _lepage_defect(rho: HorizontalNForm, P: int, s: int) -> Expr:
    """Contraction of the jet-derivative of the coefficients with jets."""
    chart = rho.chart
    n, M = chart.n, chart.M
    pieces = []
    for Ks in product(range(1, M + 1), repeat=n):
        dA = diff(rho.coefficient(Ks), Sym("y1", P, s))
        if dA.is_zero:
            continue
        for p in permutations(range(1, n + 1)):
            sign = levi_civita(p)
            term = const(sign) * dA
            for K, j in zip(Ks, p):
                term = term * sym_expr(Sym("y1", K, j))
            pieces.append(term)
    return expr_sum(pieces)


def is_lepage(rho: HorizontalNForm, *, trials: int = 50, tol: float = 1e-9,
              seed: int = 0, guards: Sequence[Expr] = ()) -> LepageVerdict:
    """Horizontal Lepage test: jet-contracted coefficient derivatives vanish."""
    chart = rho.chart
    for P in range(1, chart.M + 1):
        for s in range(1, chart.n + 1):
            defect = _lepage_defect(rho, P, s)
            if defect.is_zero:
                continue
            res = equal(defect, ZERO, trials=trials, tol=tol, seed=seed,
                        guards=guards)
            if res.verdict == "equal":
                continue
            return LepageVerdict(
                False, witness=res.witness,
                detail=f"defect at fiber index {P}, base index {s}: "
                       + res.describe())
    return LepageVerdict(True)


def euler_lagrange(lam: Lagrangian) -> tuple[Expr, ...]:
    """Euler-Lagrange expressions on the order-2 chart."""
    chart = lam.chart.raised() if lam.chart.order < 2 else lam.chart
    out = []
    for K in range(1, chart.M + 1):
        divergence = expr_sum(
            formal_derivative(diff(lam.L, Sym("y1", K, j)), j, chart)
            for j in range(1, chart.n + 1))
        out.append(diff(lam.L, Sym("y", K)) - divergence)
    return tuple(out)


def el_form_check(rho: HorizontalNForm, *, trials: int = 20, tol: float = 1e-9,
                  seed: int = 0, guards: Sequence[Expr] = ()) -> LepageVerdict:
    """The 1-contact part of d rho carries exactly the Euler-Lagrange terms."""
    chart = rho.chart
    lepage = is_lepage(rho, trials=trials, tol=tol, seed=seed, guards=guards)
    if not lepage.passed:
        return LepageVerdict(False, witness=lepage.witness,
                             detail="not a Lepage form: " + lepage.detail)
    one_contact = contact_component(ext_d(rho.form), 1)
    expressions = euler_lagrange(lagrangian_of(rho))
    expected: dict[tuple, Expr] = {}
    base_word = tuple(dx(i) for i in range(1, chart.n + 1))
    for K in range(1, chart.M + 1):
        if not expressions[K - 1].is_zero:
            expected[(om(K),) + base_word] = expressions[K - 1]
    target = form(chart.raised(), "contact", expected) if expected else \
        zero_form(chart.raised(), chart.n + 1, "contact")
    lifted = DiffForm(chart.raised(), one_contact.degree, one_contact.mode,
                      one_contact.terms)
    res = form_equal(lifted, target, trials=trials, tol=tol, seed=seed,
                     guards=guards)
    if res.verdict == "unequal":
        return LepageVerdict(False, witness=res.word,
                             detail="1-contact part mismatch: " + res.describe())
    return LepageVerdict(True)
