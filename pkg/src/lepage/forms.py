"""Differential forms on jet charts and adapted charts.

A form is a map from strictly increasing wedge words to scalar coefficients.
Words are tuples of covectors sorted by a fixed rank order

    dx < dy < dy_j < om < om_j < dw < dw_j < omt

where ``om`` denotes the first-order contact covectors dy^K - y^K_j dx^j,
``om_j`` their second-order companions dy^K_j - y^K_jl dx^l, and ``omt`` the
adapted contact covectors dw^s - w^s_i dw^i.  Basis modes restrict which
covector kinds may occur:

* ``coordinate``      dx, dy, dy_j            (jet chart)
* ``contact``         dx, om, om_j            (jet chart)
* ``adapted``         dw, dw_j                (adapted chart)
* ``adapted-contact`` dw^i, omt, dw_j         (adapted chart)
* ``base``            dx with coefficients in the base variables only

Conversions between coordinate and contact mode exist twice: the definitional
covector rewrite, and the skew coefficient-tensor transform with binomial
weights; the two agree and the tests cross-check them.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations, permutations, product
from math import comb, factorial
from typing import Callable, Iterable, Mapping, Sequence

from .charts import AdaptedChart, ChartError, JetChart, contains_order2
from .expr import (
    Expr, ExprError, ONE, PointAssignment, Sym, ZERO, const, diff, equal,
    expr_sum, free_symbols, levi_civita, parse, substitute, sym_expr, sym_name,
    to_dsl,
)

__all__ = [
    "Covector", "DiffForm", "FormError", "FormEqualResult", "Immersion",
    "VectorField", "covector_from_name",
    "dx", "dy", "dyj", "om", "omj", "dw", "dwj", "omt",
    "form", "zero_form", "volume_form", "omega_marginal", "wedge",
    "wedge_all", "ext_d", "contract", "horizontalize", "contact_component",
    "to_contact", "to_coordinate", "basis_convert", "lie_derivative",
    "pullback_immersion", "to_adapted_contact", "from_adapted_contact",
    "reduce_contact_ideal", "form_equal", "form_to_json", "form_from_json",
]


class FormError(ExprError):
    pass


# ---------------------------------------------------------------------------
# covectors
# ---------------------------------------------------------------------------

_COV_RANK = {"dx": 0, "dy": 1, "dy1": 2, "om": 3, "om1": 4,
             "dw": 5, "dw1": 6, "omt": 7}


class Covector:
    __slots__ = ("kind", "a", "b", "key", "_hash")

    def __init__(self, kind: str, a: int, b: int = 0):
        if kind not in _COV_RANK:
            raise FormError(f"unknown covector kind {kind!r}")
        self.kind = kind
        self.a = a
        self.b = b
        self.key = (_COV_RANK[kind], a, b)
        self._hash = hash(("cov", self.key))

    def __eq__(self, other):
        return isinstance(other, Covector) and self.key == other.key

    def __hash__(self):
        return self._hash

    def name(self) -> str:
        if self.kind in ("dx", "dy", "dw", "om", "omt"):
            return f"{self.kind}{self.a}"
        return f"{self.kind[:-1]}{self.a}_{self.b}"

    def __repr__(self):
        return self.name()


def dx(i: int) -> Covector:
    return Covector("dx", i)


def dy(K: int) -> Covector:
    return Covector("dy", K)


def dyj(K: int, j: int) -> Covector:
    return Covector("dy1", K, j)


def om(K: int) -> Covector:
    return Covector("om", K)


def omj(K: int, j: int) -> Covector:
    return Covector("om1", K, j)


def dw(K: int) -> Covector:
    return Covector("dw", K)


def dwj(s: int, i: int) -> Covector:
    return Covector("dw1", s, i)


def omt(s: int) -> Covector:
    return Covector("omt", s)


_COV_NAME_RE = re.compile(r"^(dx|dy|om|dw|omt)(\d)(?:_(\d))?$")


def covector_from_name(name: str) -> Covector:
    m = _COV_NAME_RE.match(name)
    if not m:
        raise FormError(f"cannot parse covector name {name!r}")
    kind, a, b = m.group(1), int(m.group(2)), m.group(3)
    if b is None:
        return Covector(kind, a)
    if kind in ("dy", "om", "dw"):
        return Covector(kind + "1", a, int(b))
    raise FormError(f"covector {name!r} cannot carry a base subscript")


_MODE_KINDS = {
    "coordinate": {"dx", "dy", "dy1"},
    "contact": {"dx", "om", "om1"},
    "adapted": {"dw", "dw1"},
    "adapted-contact": {"dw", "dw1", "omt"},
    "base": {"dx"},
}

Word = tuple  # tuple[Covector, ...] strictly increasing by key


def _merge_words(wa: Word, wb: Word) -> tuple[int, Word | None]:
    """Wedge two sorted strict words; sign from counting crossings."""
    out = []
    sign = 1
    i = j = 0
    while i < len(wa) and j < len(wb):
        ka, kb = wa[i].key, wb[j].key
        if ka == kb:
            return 0, None
        if ka < kb:
            out.append(wa[i])
            i += 1
        else:
            if (len(wa) - i) % 2:
                sign = -sign
            out.append(wb[j])
            j += 1
    out.extend(wa[i:])
    out.extend(wb[j:])
    return sign, tuple(out)


def _sort_word(word: Sequence[Covector]) -> tuple[int, Word | None]:
    """Sort an arbitrary covector tuple, returning the permutation sign."""
    keys = [c.key for c in word]
    if len(set(keys)) != len(keys):
        return 0, None
    order = sorted(range(len(word)), key=lambda t: keys[t])
    sign = levi_civita(tuple(order[i] + 1 for i in range(len(order))))
    # levi_civita of the inverse permutation equals that of the permutation
    return sign, tuple(word[t] for t in order)


# ---------------------------------------------------------------------------
# the form class
# ---------------------------------------------------------------------------

class DiffForm:
    """Exterior form with scalar-expression coefficients."""

    __slots__ = ("chart", "adapted", "degree", "mode", "terms")

    def __init__(self, chart: JetChart, degree: int, mode: str,
                 terms: Mapping[Word, Expr] | None = None,
                 adapted: AdaptedChart | None = None):
        if mode not in _MODE_KINDS:
            raise FormError(f"unknown basis mode {mode!r}")
        if mode.startswith("adapted") and adapted is None:
            raise FormError(f"mode {mode!r} needs an adapted chart")
        self.chart = chart
        self.adapted = adapted
        self.degree = degree
        self.mode = mode
        clean: dict[Word, Expr] = {}
        allowed = _MODE_KINDS[mode]
        for word, coeff in (terms or {}).items():
            if len(word) != degree:
                raise FormError(
                    f"word {word} has length {len(word)}, degree is {degree}")
            for cov in word:
                if cov.kind not in allowed:
                    raise FormError(f"covector {cov!r} not allowed in mode {mode!r}")
            if list(word) != sorted(word, key=lambda c: c.key):
                raise FormError(f"word {word} is not sorted")
            if not coeff.is_zero:
                clean[word] = coeff
        self.terms = clean

    # -- basics --------------------------------------------------------------

    @property
    def is_zero(self) -> bool:
        return not self.terms

    def items(self):
        return sorted(self.terms.items(), key=lambda kv: tuple(c.key for c in kv[0]))

    def coefficient(self, word: Sequence[Covector]) -> Expr:
        sign, sorted_word = _sort_word(tuple(word))
        if sorted_word is None:
            return ZERO
        c = self.terms.get(sorted_word, ZERO)
        return c if sign == 1 else -c

    def map_coefficients(self, fn: Callable[[Expr], Expr]) -> "DiffForm":
        return DiffForm(self.chart, self.degree, self.mode,
                        {w: fn(c) for w, c in self.terms.items()},
                        adapted=self.adapted)

    def __add__(self, other: "DiffForm") -> "DiffForm":
        self._compatible(other)
        out = dict(self.terms)
        for w, c in other.terms.items():
            out[w] = out.get(w, ZERO) + c
        return DiffForm(self.chart, self.degree, self.mode, out,
                        adapted=self.adapted)

    def __sub__(self, other: "DiffForm") -> "DiffForm":
        return self + other.scale(const(-1))

    def scale(self, factor) -> "DiffForm":
        factor = factor if isinstance(factor, Expr) else const(factor)
        return self.map_coefficients(lambda c: c * factor)

    def __eq__(self, other):
        return (isinstance(other, DiffForm) and self.mode == other.mode
                and self.degree == other.degree and self.terms == other.terms)

    def __repr__(self):
        if self.is_zero:
            return "0"
        parts = []
        for word, coeff in self.items():
            label = "^".join(c.name() for c in word) or "1"
            parts.append(f"({to_dsl(coeff)}) {label}")
        return " + ".join(parts)

    def _compatible(self, other: "DiffForm") -> None:
        if self.mode != other.mode or self.degree != other.degree:
            raise FormError(
                f"incompatible forms: {self.mode}/{self.degree} vs "
                f"{other.mode}/{other.degree}")


def zero_form(chart: JetChart, degree: int, mode: str = "coordinate",
              adapted: AdaptedChart | None = None) -> DiffForm:
    return DiffForm(chart, degree, mode, {}, adapted=adapted)


def form(chart: JetChart, mode: str,
         terms: Mapping[Sequence[Covector], Expr | int],
         adapted: AdaptedChart | None = None) -> DiffForm:
    """Build a form from possibly unsorted words."""
    degree = None
    acc: dict[Word, Expr] = {}
    for word, coeff in terms.items():
        word = tuple(word)
        if degree is None:
            degree = len(word)
        coeff = coeff if isinstance(coeff, Expr) else const(coeff)
        sign, sorted_word = _sort_word(word)
        if sorted_word is None:
            continue
        add = coeff if sign == 1 else -coeff
        acc[sorted_word] = acc.get(sorted_word, ZERO) + add
    if degree is None:
        raise FormError("cannot infer the degree of an empty term map")
    return DiffForm(chart, degree, mode, acc, adapted=adapted)


def volume_form(chart: JetChart, mode: str = "contact") -> DiffForm:
    word = tuple(dx(i) for i in range(1, chart.n + 1))
    if mode not in ("contact", "coordinate", "base"):
        raise FormError("volume form lives in a dx basis")
    return DiffForm(chart, chart.n, mode, {word: ONE})


def omega_marginal(chart: JetChart, j: int, mode: str = "contact") -> DiffForm:
    """The (n-1)-form obtained by plugging the j-th base direction into the volume."""
    word = tuple(dx(i) for i in range(1, chart.n + 1) if i != j)
    sign = (-1) ** (j - 1)
    return DiffForm(chart, chart.n - 1, mode, {word: const(sign)})


def wedge(a: DiffForm, b: DiffForm) -> DiffForm:
    if a.mode != b.mode:
        raise FormError(f"wedge across modes {a.mode!r} and {b.mode!r}")
    out: dict[Word, Expr] = {}
    for wa, ca in a.terms.items():
        for wb, cb in b.terms.items():
            sign, word = _merge_words(wa, wb)
            if word is None:
                continue
            add = ca * cb if sign == 1 else -(ca * cb)
            acc = out.get(word, ZERO) + add
            out[word] = acc
    return DiffForm(a.chart, a.degree + b.degree, a.mode, out, adapted=a.adapted)


def wedge_all(factors: Sequence[DiffForm]) -> DiffForm:
    result = factors[0]
    for f in factors[1:]:
        result = wedge(result, f)
    return result


# ---------------------------------------------------------------------------
# covector substitution machinery
# ---------------------------------------------------------------------------

def substitute_covectors(a: DiffForm, fn: Callable[[Covector], list],
                         new_mode: str,
                         coeff_fn: Callable[[Expr], Expr] | None = None,
                         adapted: AdaptedChart | None = None) -> DiffForm:
    """Rewrite each covector as a linear combination given by fn."""
    out: dict[Word, Expr] = {}
    adapted = adapted if adapted is not None else a.adapted
    for word, coeff in a.terms.items():
        if coeff_fn is not None:
            coeff = coeff_fn(coeff)
        if coeff.is_zero:
            continue
        expanded = [((), coeff)]
        for cov in word:
            branches = fn(cov)
            new_expanded = []
            for partial_word, partial_coeff in expanded:
                for branch_coeff, branch_cov in branches:
                    c = partial_coeff * branch_coeff
                    if c.is_zero:
                        continue
                    new_expanded.append((partial_word + (branch_cov,), c))
            expanded = new_expanded
        for raw_word, c in expanded:
            sign, sorted_word = _sort_word(raw_word)
            if sorted_word is None:
                continue
            add = c if sign == 1 else -c
            out[sorted_word] = out.get(sorted_word, ZERO) + add
    return DiffForm(a.chart, a.degree, new_mode, out, adapted=adapted)


def to_contact(a: DiffForm) -> DiffForm:
    """Definitional rewrite into the contact basis on the jet chart."""
    if a.mode == "contact":
        return a
    if a.mode != "coordinate":
        raise FormError(f"cannot move mode {a.mode!r} to the contact basis")
    chart = a.chart

    def fn(cov: Covector):
        if cov.kind == "dx":
            return [(ONE, cov)]
        if cov.kind == "dy":
            out = [(ONE, om(cov.a))]
            out += [(sym_expr(Sym("y1", cov.a, l)), dx(l))
                    for l in range(1, chart.n + 1)]
            return out
        # dy^K_j = om^K_j + y^K_jl dx^l raises the order of the coefficients
        out = [(ONE, omj(cov.a, cov.b))]
        out += [(sym_expr(Sym("y2", cov.a, cov.b, l)), dx(l))
                for l in range(1, chart.n + 1)]
        return out

    return substitute_covectors(a, fn, "contact")


def to_coordinate(a: DiffForm) -> DiffForm:
    if a.mode == "coordinate":
        return a
    if a.mode != "contact":
        raise FormError(f"cannot move mode {a.mode!r} to the coordinate basis")
    chart = a.chart

    def fn(cov: Covector):
        if cov.kind == "dx":
            return [(ONE, cov)]
        if cov.kind == "om":
            out = [(ONE, dy(cov.a))]
            out += [(-sym_expr(Sym("y1", cov.a, l)), dx(l))
                    for l in range(1, chart.n + 1)]
            return out
        out = [(ONE, dyj(cov.a, cov.b))]
        out += [(-sym_expr(Sym("y2", cov.a, cov.b, l)), dx(l))
                for l in range(1, chart.n + 1)]
        return out

    return substitute_covectors(a, fn, "coordinate")


def to_adapted_contact(a: DiffForm) -> DiffForm:
    if a.mode == "adapted-contact":
        return a
    if a.mode != "adapted":
        raise FormError("adapted-contact conversion expects an adapted form")
    ad = a.adapted

    def fn(cov: Covector):
        if cov.kind == "dw" and cov.a in ad.complement:
            out = [(ONE, omt(cov.a))]
            out += [(sym_expr(Sym("w1", cov.a, it)), dw(it)) for it in ad.selected]
            return out
        return [(ONE, cov)]

    return substitute_covectors(a, fn, "adapted-contact")


def from_adapted_contact(a: DiffForm) -> DiffForm:
    if a.mode == "adapted":
        return a
    if a.mode != "adapted-contact":
        raise FormError("expected an adapted-contact form")
    ad = a.adapted

    def fn(cov: Covector):
        if cov.kind == "omt":
            out = [(ONE, dw(cov.a))]
            out += [(-sym_expr(Sym("w1", cov.a, it)), dw(it)) for it in ad.selected]
            return out
        return [(ONE, cov)]

    return substitute_covectors(a, fn, "adapted")


# ---------------------------------------------------------------------------
# exterior derivative, contraction, horizontalization
# ---------------------------------------------------------------------------

def _coefficient_differential(f: Expr, a: DiffForm) -> list:
    chart = a.chart
    out = []
    if a.mode in ("coordinate", "contact", "base"):
        syms = free_symbols(f)
        if any(s.kind == "y2" for s in syms):
            raise FormError(
                "exterior derivative needs second-order covectors for "
                "second-order coefficients; not representable here")
        for s in sorted(syms, key=lambda t: t.key):
            if s.kind == "x":
                out.append((diff(f, s), dx(s.a)))
            elif s.kind == "y":
                out.append((diff(f, s), dy(s.a)))
            elif s.kind == "y1":
                out.append((diff(f, s), dyj(s.a, s.b)))
            elif a.mode == "base":
                raise FormError(f"base-mode coefficient depends on {s!r}")
            else:
                raise FormError(f"coefficient depends on foreign symbol {s!r}")
        return out
    # adapted charts
    ad = a.adapted
    for s in sorted(free_symbols(f), key=lambda t: t.key):
        if s.kind == "w":
            out.append((diff(f, s), dw(s.a)))
        elif s.kind == "w1" and s.a in ad.complement:
            out.append((diff(f, s), dwj(s.a, s.b)))
        else:
            raise FormError(
                f"adapted coefficient depends on {s!r}; forms on the "
                "quotient chart use only fiber and contact-slope symbols")
    return out


def ext_d(a: DiffForm) -> DiffForm:
    """Exterior derivative; contact-basis input is converted first."""
    src = a
    if a.mode == "contact":
        src = to_coordinate(a)
    elif a.mode == "adapted-contact":
        src = from_adapted_contact(a)
    out: dict[Word, Expr] = {}
    for word, coeff in src.terms.items():
        for dcoeff, cov in _coefficient_differential(coeff, src):
            if dcoeff.is_zero:
                continue
            sign, new_word = _merge_words((cov,), word)
            if new_word is None:
                continue
            add = dcoeff if sign == 1 else -dcoeff
            out[new_word] = out.get(new_word, ZERO) + add
    return DiffForm(src.chart, src.degree + 1, src.mode, out, adapted=src.adapted)


@dataclass(frozen=True)
class VectorField:
    """Vector field with components keyed by the coordinate they differentiate."""

    chart: JetChart
    components: Mapping[Sym, Expr]
    adapted: AdaptedChart | None = None

    def component(self, s: Sym) -> Expr:
        return self.components.get(s, ZERO)


def _pair(field: VectorField, cov: Covector, chart: JetChart) -> Expr:
    if cov.kind == "dx":
        return field.component(Sym("x", cov.a))
    if cov.kind == "dy":
        return field.component(Sym("y", cov.a))
    if cov.kind == "dy1":
        return field.component(Sym("y1", cov.a, cov.b))
    if cov.kind == "om":
        base = field.component(Sym("y", cov.a))
        correction = expr_sum(
            sym_expr(Sym("y1", cov.a, l)) * field.component(Sym("x", l))
            for l in range(1, chart.n + 1))
        return base - correction
    if cov.kind == "om1":
        base = field.component(Sym("y1", cov.a, cov.b))
        correction = expr_sum(
            sym_expr(Sym("y2", cov.a, cov.b, l)) * field.component(Sym("x", l))
            for l in range(1, chart.n + 1))
        return base - correction
    if cov.kind == "dw":
        return field.component(Sym("w", cov.a))
    if cov.kind == "dw1":
        return field.component(Sym("w1", cov.a, cov.b))
    # omt
    base = field.component(Sym("w", cov.a))
    ad = field.adapted
    correction = expr_sum(
        sym_expr(Sym("w1", cov.a, it)) * field.component(Sym("w", it))
        for it in ad.selected) if ad is not None else ZERO
    return base - correction


def contract(field: VectorField, a: DiffForm) -> DiffForm:
    """Interior product i_X a."""
    if a.degree == 0:
        raise FormError("cannot contract a 0-form")
    out: dict[Word, Expr] = {}
    for word, coeff in a.terms.items():
        for pos, cov in enumerate(word):
            val = _pair(field, cov, a.chart)
            if val.is_zero:
                continue
            rest = word[:pos] + word[pos + 1:]
            add = coeff * val
            if pos % 2:
                add = -add
            out[rest] = out.get(rest, ZERO) + add
    return DiffForm(a.chart, a.degree - 1, a.mode, out, adapted=a.adapted)


def horizontalize(a: DiffForm) -> DiffForm:
    """The horizontal part along prolonged immersions (dx-words only)."""
    src = to_coordinate(a) if a.mode == "contact" else a
    if src.mode not in ("coordinate", "base"):
        raise FormError("horizontalization lives on the jet chart")
    chart = src.chart

    def fn(cov: Covector):
        if cov.kind == "dx":
            return [(ONE, cov)]
        if cov.kind == "dy":
            return [(sym_expr(Sym("y1", cov.a, k)), dx(k))
                    for k in range(1, chart.n + 1)]
        return [(sym_expr(Sym("y2", cov.a, cov.b, k)), dx(k))
                for k in range(1, chart.n + 1)]

    return substitute_covectors(src, fn, "coordinate")


def contact_component(a: DiffForm, k: int) -> DiffForm:
    """The k-contact part of the order-raised form (k counts contact factors)."""
    c = to_contact(a) if a.mode == "coordinate" else a
    if c.mode != "contact":
        raise FormError("contact components live on the jet chart")
    out = {w: coeff for w, coeff in c.terms.items()
           if sum(1 for cov in w if cov.kind in ("om", "om1")) == k}
    return DiffForm(c.chart, c.degree, "contact", out, adapted=c.adapted)


# ---------------------------------------------------------------------------
# tensor-based basis conversion (first-order words: dx/dy vs dx/om)
# ---------------------------------------------------------------------------

def _tensor_get(T: Mapping, Ks: Sequence[int], Is: Sequence[int]) -> Expr:
    ks = tuple(Ks)
    iss = tuple(Is)
    if len(set(ks)) != len(ks) or len(set(iss)) != len(iss):
        return ZERO
    sk = levi_civita(tuple(sorted(range(len(ks)), key=lambda t: ks[t])[t] + 1
                           for t in range(len(ks)))) if ks else 1
    si = levi_civita(tuple(sorted(range(len(iss)), key=lambda t: iss[t])[t] + 1
                           for t in range(len(iss)))) if iss else 1
    val = T.get((tuple(sorted(ks)), tuple(sorted(iss))), ZERO)
    sign = sk * si
    return val if sign == 1 else -val


def _perm_sign_rel(perm: Sequence[int], base: Sequence[int]) -> int:
    index = {v: i for i, v in enumerate(base)}
    return levi_civita(tuple(index[v] + 1 for v in perm))


def _extract_tensors(a: DiffForm, fiber_kind: str) -> dict[int, dict]:
    """Split a first-order form into skew tensors per contact/fiber degree."""
    q = a.degree
    tensors: dict[int, dict] = {}
    for word, coeff in a.terms.items():
        Ks = tuple(c.a for c in word if c.kind == fiber_kind)
        Is = tuple(c.a for c in word if c.kind == "dx")
        if len(Ks) + len(Is) != q:
            raise FormError(
                f"tensor conversion expects words over dx and {fiber_kind}")
        l = len(Ks)
        # stored words put the dx block first; the tensor convention puts the
        # fiber block first, which costs the block-swap sign below
        sign = -1 if (l * (q - l)) % 2 else 1
        tensors.setdefault(l, {})[(Ks, Is)] = coeff if sign == 1 else -coeff
    return tensors


def _rebuild_from_tensors(chart: JetChart, q: int, tensors: Mapping[int, Mapping],
                          fiber_kind: str, mode: str) -> DiffForm:
    fiber_cov = {"dy": dy, "om": om}[fiber_kind]
    out: dict[Word, Expr] = {}
    for l, T in tensors.items():
        for (Ks, Is), coeff in T.items():
            if coeff.is_zero:
                continue
            sign = -1 if (l * (q - l)) % 2 else 1
            word = tuple(dx(i) for i in Is) + tuple(fiber_cov(K) for K in Ks)
            out[word] = out.get(word, ZERO) + (coeff if sign == 1 else -coeff)
    return DiffForm(chart, q, mode, out)


def _convert_tensor_family(tensors: Mapping[int, Mapping], q: int,
                           chart: JetChart, alternating_sign: bool) -> dict[int, dict]:
    """The binomial-weighted exchange between coordinate and contact tensors.

    For each target fiber degree k,

        T'_{K1..Kk i_{k+1}..i_q} = sum_{l=k}^{q} (+-1)^{l-k} C(q-k, q-l)
            Alt(i_{k+1}..i_q) [ T_{K1..Kk Q_{k+1}..Q_l i_{l+1}..i_q}
                                y^{Q_{k+1}}_{i_{k+1}} ... y^{Q_l}_{i_l} ]

    with the minus signs present exactly in the contact-to-coordinate
    direction.
    """
    M, n = chart.M, chart.n
    out: dict[int, dict] = {}
    for k in range(0, q + 1):
        if q - k > n:
            continue
        target: dict = {}
        for Ks in combinations(range(1, M + 1), k):
            for Is in combinations(range(1, n + 1), q - k):
                pieces = []
                for l in range(k, q + 1):
                    T = tensors.get(l)
                    if T is None:
                        continue
                    take = l - k  # jet factors consumed from the free base slots
                    if take > len(Is):
                        continue
                    weight = Fraction(comb(q - k, q - l),
                                      factorial(q - k) if Is else 1)
                    if alternating_sign and take % 2:
                        weight = -weight
                    for perm in permutations(Is):
                        psign = _perm_sign_rel(perm, Is)
                        iy, irest = perm[:take], perm[take:]
                        for Qs in product(range(1, M + 1), repeat=take):
                            val = _tensor_get(T, Ks + Qs, irest)
                            if val.is_zero:
                                continue
                            factor = ONE
                            for Q, ii in zip(Qs, iy):
                                factor = factor * sym_expr(Sym("y1", Q, ii))
                            pieces.append(const(psign * weight) * val * factor)
                total = expr_sum(pieces)
                if not total.is_zero:
                    target[(Ks, Is)] = total
        if target:
            out[k] = target
    return out


def basis_convert(a: DiffForm, target: str) -> DiffForm:
    """Exchange coordinate and contact bases through the skew tensors."""
    if target not in ("coordinate", "contact"):
        raise FormError(f"unsupported conversion target {target!r}")
    if a.mode == target:
        return a
    if a.mode == "coordinate":
        bad = [c for w in a.terms for c in w if c.kind == "dy1"]
        if bad:
            return to_contact(a)
        tensors = _extract_tensors(a, "dy")
        converted = _convert_tensor_family(tensors, a.degree, a.chart,
                                           alternating_sign=False)
        return _rebuild_from_tensors(a.chart, a.degree, converted, "om", "contact")
    if a.mode == "contact":
        bad = [c for w in a.terms for c in w if c.kind == "om1"]
        if bad:
            return to_coordinate(a)
        tensors = _extract_tensors(a, "om")
        converted = _convert_tensor_family(tensors, a.degree, a.chart,
                                           alternating_sign=True)
        return _rebuild_from_tensors(a.chart, a.degree, converted, "dy",
                                     "coordinate")
    raise FormError(f"cannot convert mode {a.mode!r}")


# ---------------------------------------------------------------------------
# Lie derivative and pullback
# ---------------------------------------------------------------------------

def lie_derivative(field: VectorField, a: DiffForm) -> DiffForm:
    """Cartan formula i_X d a + d i_X a."""
    return contract(field, ext_d(a)) + ext_d(contract(field, a))


@dataclass(frozen=True)
class Immersion:
    """Closed-form immersion of the base into the configuration space."""

    chart: JetChart
    components: tuple[Expr, ...]

    def __post_init__(self):
        if len(self.components) != self.chart.M:
            raise FormError(
                f"immersion needs {self.chart.M} components, got "
                f"{len(self.components)}")
        for c in self.components:
            for s in free_symbols(c):
                if s.kind != "x":
                    raise FormError(
                        f"immersion components depend on base variables only, "
                        f"found {s!r}")

    def jet1(self, K: int, j: int) -> Expr:
        return diff(self.components[K - 1], Sym("x", j))

    def jet2(self, K: int, j: int, k: int) -> Expr:
        return diff(self.jet1(K, j), Sym("x", k))

    def substitution(self, order: int = 2) -> dict[Sym, Expr]:
        chart = self.chart
        out: dict[Sym, Expr] = {}
        for K in range(1, chart.M + 1):
            out[Sym("y", K)] = self.components[K - 1]
            for j in range(1, chart.n + 1):
                out[Sym("y1", K, j)] = self.jet1(K, j)
                if order >= 2:
                    for k in range(j, chart.n + 1):
                        out[Sym("y2", K, j, k)] = self.jet2(K, j, k)
        return out

    def adapted_substitution(self, ad: AdaptedChart) -> dict[Sym, Expr]:
        """Values of the adapted coordinates along the prolonged immersion."""
        n = self.chart.n
        A = [[self.jet1(it, j + 1) for j in range(n)] for it in ad.selected]
        from .expr import det_expr
        det = det_expr(A) if n > 1 else A[0][0]
        out: dict[Sym, Expr] = {}
        for K in range(1, self.chart.M + 1):
            out[Sym("w", K)] = self.components[K - 1]
        for it in ad.selected:
            for j in range(1, n + 1):
                out[Sym("w1", it, j)] = self.jet1(it, j)
        for s in ad.complement:
            for t, it in enumerate(ad.selected):
                # w^s_{i_t} = sum_j (A^{-1})[j][t] d_j zeta^s
                pieces = []
                for j in range(n):
                    sub = [[A[r][c] for c in range(n) if c != j]
                           for r in range(n) if r != t]
                    if sub:
                        cof = det_expr(sub) if len(sub) > 1 else sub[0][0]
                    else:
                        cof = ONE
                    sign = -1 if (t + j) % 2 else 1
                    pieces.append(const(sign) * cof * self.jet1(s, j + 1))
                out[Sym("w1", s, it)] = expr_sum(pieces) / det
        return out


def pullback_immersion(a: DiffForm, zeta: Immersion) -> DiffForm:
    """Pull a form back along the prolonged immersion; result is base-mode."""
    chart = a.chart
    if a.mode == "contact":
        src = a
        coeff_map = zeta.substitution()

        def fn(cov: Covector):
            if cov.kind == "dx":
                return [(ONE, cov)]
            return []  # contact covectors vanish along prolongations
    elif a.mode == "coordinate":
        src = a
        coeff_map = zeta.substitution()

        def fn(cov: Covector):
            if cov.kind == "dx":
                return [(ONE, cov)]
            if cov.kind == "dy":
                return [(zeta.jet1(cov.a, j), dx(j))
                        for j in range(1, chart.n + 1)]
            return [(zeta.jet2(cov.a, cov.b, k), dx(k))
                    for k in range(1, chart.n + 1)]
    elif a.mode in ("adapted", "adapted-contact"):
        src = from_adapted_contact(a) if a.mode == "adapted-contact" else a
        coeff_map = zeta.adapted_substitution(src.adapted)

        def fn(cov: Covector):
            value = coeff_map[Sym("w", cov.a) if cov.kind == "dw"
                              else Sym("w1", cov.a, cov.b)]
            return [(diff(value, Sym("x", j)), dx(j))
                    for j in range(1, chart.n + 1)]
    elif a.mode == "base":
        return a
    else:
        raise FormError(f"cannot pull back mode {a.mode!r}")

    def coeff_fn(c: Expr) -> Expr:
        return substitute(c, coeff_map)

    out = substitute_covectors(src, fn, "base", coeff_fn=coeff_fn, adapted=None)
    return out


# ---------------------------------------------------------------------------
# contact ideal on adapted charts
# ---------------------------------------------------------------------------

def reduce_contact_ideal(a: DiffForm) -> DiffForm:
    """Normal form of an adapted form modulo the contact ideal.

    The ideal is generated by the adapted contact covectors and their
    differentials.  After rewriting into the adapted-contact basis, terms
    carrying a contact factor are dropped and the span of (d contact) wedge
    (basis words) is eliminated by exact Gaussian reduction; generator
    coefficients are constants, so no division by symbols occurs.
    """
    c = to_adapted_contact(a) if a.mode == "adapted" else a
    if c.mode != "adapted-contact":
        raise FormError("contact-ideal reduction expects an adapted form")
    ad = c.adapted
    residual = {w: coeff for w, coeff in c.terms.items()
                if all(cov.kind != "omt" for cov in w)}
    if c.degree < 2 or not residual:
        return DiffForm(c.chart, c.degree, "adapted-contact", residual, adapted=ad)
    # generators: (sum_i dw^i ^ dw^s_i) ^ chi over omt-free basis words chi
    basis_cov = [dw(it) for it in ad.selected]
    basis_cov += [dwj(s, it) for s in ad.complement for it in ad.selected]
    gens = []
    for s in ad.complement:
        two_form = {}
        for it in ad.selected:
            sign, word = _sort_word((dw(it), dwj(s, it)))
            two_form[word] = two_form.get(word, 0) + sign
        for chi in combinations(sorted(basis_cov, key=lambda cv: cv.key),
                                c.degree - 2):
            gen: dict[Word, Fraction] = {}
            for word2, coeff2 in two_form.items():
                sign, merged = _merge_words(word2, tuple(chi))
                if merged is None:
                    continue
                val = Fraction(coeff2 * sign)
                gen[merged] = gen.get(merged, Fraction(0)) + val
            gen = {w: v for w, v in gen.items() if v}
            if gen:
                gens.append(gen)
    # inter-reduce the constant-coefficient generators (exact RREF)
    reduced_gens: list[dict] = []
    for gen in gens:
        for rg in reduced_gens:
            pivot = max(rg, key=lambda w: tuple(cv.key for cv in w))
            if pivot in gen:
                factor = gen[pivot] / rg[pivot]
                for w, v in rg.items():
                    nv = gen.get(w, Fraction(0)) - factor * v
                    if nv:
                        gen[w] = nv
                    else:
                        gen.pop(w, None)
        if gen:
            reduced_gens.append(gen)
    # eliminate pivot words from the residual
    for rg in reduced_gens:
        pivot = max(rg, key=lambda w: tuple(cv.key for cv in w))
        coeff = residual.get(pivot)
        if coeff is None or coeff.is_zero:
            continue
        factor = coeff / const(rg[pivot])
        for w, v in rg.items():
            residual[w] = residual.get(w, ZERO) - factor * const(v)
    residual = {w: coeff for w, coeff in residual.items() if not coeff.is_zero}
    return DiffForm(c.chart, c.degree, "adapted-contact", residual, adapted=ad)


# ---------------------------------------------------------------------------
# comparison and serialization
# ---------------------------------------------------------------------------

@dataclass
class FormEqualResult:
    verdict: str  # 'equal' | 'unequal' | 'unknown'
    word: Word | None = None
    detail: object = None

    def __bool__(self):
        return self.verdict == "equal"

    def describe(self) -> str:
        if self.verdict == "equal":
            return "equal"
        label = "^".join(c.name() for c in self.word) if self.word else "?"
        if self.verdict == "unknown":
            return f"unknown at word {label}"
        return f"unequal at word {label}: {self.detail.describe()}"


def _align(a: DiffForm, b: DiffForm) -> tuple[DiffForm, DiffForm]:
    if a.mode == b.mode:
        return a, b
    movable = {"coordinate", "contact"}
    if a.mode in movable and b.mode in movable:
        return a, (to_contact(b) if a.mode == "contact" else to_coordinate(b))
    if {a.mode, b.mode} <= {"adapted", "adapted-contact"}:
        return ((a, from_adapted_contact(b)) if a.mode == "adapted"
                else (a, to_adapted_contact(b)))
    raise FormError(f"cannot compare modes {a.mode!r} and {b.mode!r}")


def form_equal(a: DiffForm, b: DiffForm, *, trials: int = 20, tol: float = 1e-9,
               seed: int = 0, guards: Sequence[Expr] = ()) -> FormEqualResult:
    """Coefficient-wise comparison after aligning the basis modes."""
    if a.degree != b.degree:
        return FormEqualResult("unequal", None, None)
    a2, b2 = _align(a, b)
    words = sorted(set(a2.terms) | set(b2.terms),
                   key=lambda w: tuple(c.key for c in w))
    unknown = None
    for word in words:
        res = equal(a2.terms.get(word, ZERO), b2.terms.get(word, ZERO),
                    trials=trials, tol=tol, seed=seed, guards=guards)
        if res.verdict == "unequal":
            return FormEqualResult("unequal", word, res)
        if res.verdict == "unknown":
            unknown = FormEqualResult("unknown", word, res)
    return unknown or FormEqualResult("equal")


def form_to_json(a: DiffForm) -> dict:
    return {
        "degree": a.degree,
        "mode": a.mode,
        "terms": [{"word": [c.name() for c in word], "coeff": to_dsl(coeff)}
                  for word, coeff in a.items()],
    }


def form_from_json(data, chart: JetChart,
                   adapted: AdaptedChart | None = None) -> DiffForm:
    if isinstance(data, str):
        data = json.loads(data)
    terms: dict[Word, Expr] = {}
    for item in data["terms"]:
        word = tuple(covector_from_name(nm) for nm in item["word"])
        terms[word] = parse(item["coeff"])
    return form(chart, data["mode"], terms, adapted=adapted) if terms else \
        zero_form(chart, data["degree"], data["mode"], adapted=adapted)
