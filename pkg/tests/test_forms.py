"""Tests for the exterior calculus on jet and adapted charts."""

from __future__ import annotations

import json
import random
from fractions import Fraction

import pytest

from lepage.charts import AdaptedChart, JetChart
from lepage.expr import (
    ONE, Sym, ZERO, const, cos_expr, equal, expr_sum, free_symbols, sin_expr,
    sqrt_expr, sym_expr, wj, ww, x, yj, yy,
)
from lepage.forms import (
    Covector, DiffForm, FormError, Immersion, VectorField, basis_convert,
    contact_component, contract, covector_from_name, dw, dwj, dx, dy, dyj,
    ext_d, form, form_equal, form_from_json, form_to_json,
    from_adapted_contact, horizontalize, lie_derivative, om, omega_marginal,
    omj, omt, pullback_immersion, reduce_contact_ideal, to_adapted_contact,
    to_contact, to_coordinate, volume_form, wedge, wedge_all, zero_form,
)

CH21 = JetChart(n=2, m=1, order=1)
CH22 = JetChart(n=2, m=2, order=1)


def random_form(chart: JetChart, degree: int, mode: str, rng: random.Random,
                terms: int = 3) -> DiffForm:
    """Random form with small integer-coefficient polynomial entries."""
    if mode == "coordinate":
        pool = [dx(i) for i in range(1, chart.n + 1)]
        pool += [dy(K) for K in range(1, chart.M + 1)]
    elif mode == "contact":
        pool = [dx(i) for i in range(1, chart.n + 1)]
        pool += [om(K) for K in range(1, chart.M + 1)]
    else:
        raise ValueError(mode)
    gens = [const(1)]
    gens += [x(i) for i in range(1, chart.n + 1)]
    gens += [yy(K) for K in range(1, chart.M + 1)]
    gens += [yj(K, j) for K in range(1, chart.M + 1)
             for j in range(1, chart.n + 1)]
    acc: dict = {}
    for _ in range(terms):
        word = tuple(rng.sample(pool, degree))
        coeff = expr_sum(const(rng.randint(-3, 3)) * rng.choice(gens)
                         for _ in range(2))
        if coeff.is_zero:
            coeff = const(rng.randint(1, 3))
        acc[word] = acc.get(word, ZERO) + coeff
    acc = {w: c for w, c in acc.items() if not c.is_zero}
    if not acc:
        return zero_form(chart, degree, mode)
    return form(chart, mode, acc)


# ---------------------------------------------------------------------------
# words and wedges
# ---------------------------------------------------------------------------

def test_word_sorting_and_signs():
    a = form(CH21, "coordinate", {(dy(1), dx(1)): ONE})
    b = form(CH21, "coordinate", {(dx(1), dy(1)): ONE})
    assert (a + b).is_zero
    # repeated covector collapses
    repeated = wedge(form(CH21, "coordinate", {(dx(1),): ONE}),
                     form(CH21, "coordinate", {(dx(1),): yy(1)}))
    assert repeated.is_zero


def test_wedge_anticommutes_and_associates():
    rng = random.Random(7)
    for _ in range(10):
        a = random_form(CH21, 1, "coordinate", rng)
        b = random_form(CH21, 1, "coordinate", rng)
        c = random_form(CH21, 1, "coordinate", rng)
        assert (wedge(a, b) + wedge(b, a)).is_zero
        lhs = wedge(wedge(a, b), c)
        rhs = wedge(a, wedge(b, c))
        assert (lhs - rhs).is_zero


def test_wedge_degree_sign():
    rng = random.Random(3)
    a = random_form(CH21, 2, "coordinate", rng)
    b = random_form(CH21, 1, "coordinate", rng)
    # a ^ b = (-1)^{2*1} b ^ a
    assert (wedge(a, b) - wedge(b, a)).is_zero


def test_coefficient_skew_access():
    a = form(CH21, "coordinate", {(dy(1), dy(2)): x(1)})
    assert equal(a.coefficient((dy(2), dy(1))), -x(1))
    assert a.coefficient((dy(1), dy(1))).is_zero
    assert a.coefficient((dy(1), dy(3))).is_zero


def test_volume_and_marginal_identity():
    for ch in (CH21, JetChart(n=3, m=1, order=1)):
        vol = volume_form(ch, mode="coordinate")
        for j in range(1, ch.n + 1):
            dxj = form(ch, "coordinate", {(dx(j),): ONE})
            assert (wedge(dxj, omega_marginal(ch, j, mode="coordinate"))
                    - vol).is_zero


def test_form_validation_errors():
    with pytest.raises(FormError):
        DiffForm(CH21, 1, "base", {(dy(1),): ONE})
    with pytest.raises(FormError):
        DiffForm(CH21, 1, "coordinate", {(om(1),): ONE})
    with pytest.raises(FormError):
        DiffForm(CH21, 2, "coordinate", {(dy(1),): ONE})
    with pytest.raises(FormError):
        DiffForm(CH21, 1, "adapted", {(dw(1),): ONE})  # needs adapted chart
    with pytest.raises(FormError):
        form(CH21, "coordinate", {})


def test_covector_names_roundtrip():
    for cov in (dx(2), dy(3), dyj(1, 2), om(2), dw(3), dwj(3, 1), omt(3)):
        if cov.kind in ("dy1", "om1"):
            continue  # second-level names stay internal
        assert covector_from_name(cov.name()).key == cov.key


# ---------------------------------------------------------------------------
# basis changes
# ---------------------------------------------------------------------------

def test_contact_coordinate_roundtrip():
    rng = random.Random(11)
    for _ in range(8):
        a = random_form(CH21, 2, "coordinate", rng)
        assert (to_coordinate(to_contact(a)) - a).is_zero
        b = random_form(CH21, 1, "contact", rng)
        assert (to_contact(to_coordinate(b)) - b).is_zero


def test_tensor_conversion_matches_definitional():
    rng = random.Random(23)
    for degree in (1, 2):
        for _ in range(10):
            a = random_form(CH21, degree, "coordinate", rng)
            fast = basis_convert(a, "contact")
            slow = to_contact(a)
            assert (fast - slow).is_zero
            back = basis_convert(fast, "coordinate")
            assert (back - a).is_zero
            c = random_form(CH21, degree, "contact", rng)
            assert (basis_convert(c, "coordinate") - to_coordinate(c)).is_zero


def test_contact_decomposition_is_complete():
    rng = random.Random(5)
    a = random_form(CH22, 2, "coordinate", rng, terms=5)
    c = to_contact(a)
    total = zero_form(CH22, 2, "contact")
    for k in range(3):
        total = total + contact_component(c, k)
    assert (total - c).is_zero


def test_horizontal_part_is_zero_contact_component():
    rng = random.Random(9)
    a = random_form(CH21, 2, "coordinate", rng)
    h = horizontalize(a)
    p0 = contact_component(a, 0)
    word = (dx(1), dx(2))
    assert equal(h.coefficient(word), p0.coefficient(word))


# ---------------------------------------------------------------------------
# exterior derivative
# ---------------------------------------------------------------------------

def test_d_squared_zero():
    rng = random.Random(13)
    for mode in ("coordinate", "contact"):
        for _ in range(6):
            a = random_form(CH21, 1, mode, rng)
            assert ext_d(ext_d(a)).is_zero


def test_d_leibniz():
    rng = random.Random(17)
    for _ in range(6):
        a = random_form(CH21, 1, "coordinate", rng)
        b = random_form(CH21, 1, "coordinate", rng)
        lhs = ext_d(wedge(a, b))
        rhs = wedge(ext_d(a), b) - wedge(a, ext_d(b))
        assert (lhs - rhs).is_zero


def test_d_of_function_differential():
    f = x(1) * yy(1) + sin_expr(yy(2))
    df = ext_d(form(CH21, "coordinate", {(): f}))
    assert equal(df.coefficient((dx(1),)), yy(1))
    assert equal(df.coefficient((Covector("dy", 1),)), x(1))
    assert equal(df.coefficient((dy(2),)), cos_expr(yy(2)))


def test_d_contact_generator():
    # d omega^K = - d y^K_l ^ dx^l = dx^l ^ dy^K_l
    a = form(CH21, "contact", {(om(3),): ONE})
    da = ext_d(a)
    expect = form(CH21.raised(), "coordinate",
                  {(dx(l), dyj(3, l)): ONE for l in (1, 2)})
    assert form_equal(da, expect, trials=6, seed=1).verdict == "equal"


def test_d_rejects_second_order_coefficients():
    raised = CH21.raised()
    bad = form(raised, "coordinate",
               {(dx(1),): sym_expr(Sym("y2", 1, 1, 1))})
    with pytest.raises(FormError):
        ext_d(bad)


def test_base_mode_d():
    a = form(CH21, "base", {(dx(1),): x(1) * x(2) ** 2})
    da = ext_d(a)
    assert equal(da.coefficient((dx(2), dx(1))), const(2) * x(1) * x(2))
    with pytest.raises(FormError):
        ext_d(form(CH21, "base", {(dx(1),): yy(1)}))


# ---------------------------------------------------------------------------
# contraction and Lie derivative
# ---------------------------------------------------------------------------

def vertical_field(rng: random.Random, chart: JetChart) -> VectorField:
    comps = {}
    for K in range(1, chart.M + 1):
        for j in range(1, chart.n + 1):
            comps[Sym("y1", K, j)] = const(rng.randint(-2, 2)) + \
                const(rng.randint(0, 1)) * yj(K, j)
    return VectorField(chart, comps)


def test_contract_antiderivation():
    rng = random.Random(19)
    X = VectorField(CH21, {Sym("x", 1): yy(1), Sym("y", 2): x(2),
                           Sym("y1", 3, 1): const(2)})
    for _ in range(6):
        a = random_form(CH21, 1, "coordinate", rng)
        b = random_form(CH21, 2, "coordinate", rng)
        lhs = contract(X, wedge(a, b))
        rhs = wedge(contract(X, a), b) - wedge(a, contract(X, b))
        assert (lhs - rhs).is_zero


def test_contract_twice_zero():
    rng = random.Random(29)
    X = VectorField(CH21, {Sym("y", 1): yy(2), Sym("y", 3): x(1)})
    a = random_form(CH21, 2, "coordinate", rng)
    assert contract(X, contract(X, a)).is_zero


def test_contact_pairing():
    # i_X omega^K picks the vertical y-component relative to the prolongation
    X = VectorField(CH21, {Sym("y", 2): yy(1), Sym("x", 1): x(2)})
    a = form(CH21, "contact", {(om(2),): ONE})
    c = contract(X, a)
    expect = yy(1) - yj(2, 1) * x(2)
    assert equal(c.coefficient(()), expect)


def test_contract_commutes_with_basis_change():
    rng = random.Random(31)
    X = VectorField(CH21, {Sym("y", 1): yy(2), Sym("y1", 2, 2): x(1),
                           Sym("x", 2): yy(3)})
    for _ in range(5):
        a = random_form(CH21, 2, "contact", rng)
        lhs = to_coordinate(contract(X, a))
        rhs = contract(X, to_coordinate(a))
        assert (lhs - rhs).is_zero


def test_lie_derivative_commutes_with_d():
    X = VectorField(CH21, {Sym("y", 1): yy(2) * x(1), Sym("x", 2): yy(1)})
    a = form(CH21, "coordinate", {(dy(2),): yy(1) * x(2)})
    lhs = ext_d(lie_derivative(X, a))
    rhs = lie_derivative(X, ext_d(a))
    assert (lhs - rhs).is_zero


# ---------------------------------------------------------------------------
# adapted charts and the contact ideal
# ---------------------------------------------------------------------------

AD21 = AdaptedChart(CH21, (1, 2))


def test_adapted_contact_roundtrip():
    a = form(CH21, "adapted",
             {(dw(3), dw(1)): ww(3) * wj(3, 2), (dwj(3, 1), dw(2)): ONE},
             adapted=AD21)
    rt = from_adapted_contact(to_adapted_contact(a))
    assert (rt - a).is_zero


def test_adapted_contact_generator_definition():
    # omt^s = dw^s - w^s_i dw^i over the selected indices
    a = form(CH21, "adapted-contact", {(omt(3),): ONE}, adapted=AD21)
    c = from_adapted_contact(a)
    assert equal(c.coefficient((dw(3),)), ONE)
    assert equal(c.coefficient((dw(1),)), -wj(3, 1))
    assert equal(c.coefficient((dw(2),)), -wj(3, 2))


def test_contact_ideal_kills_generators():
    lhs = form(CH21, "adapted-contact", {(omt(3), dw(1)): ww(2) * wj(3, 1)},
               adapted=AD21)
    assert reduce_contact_ideal(lhs).is_zero
    d_omt = form(CH21, "adapted",
                 {(dw(1), dwj(3, 1)): ONE, (dw(2), dwj(3, 2)): ONE},
                 adapted=AD21)
    chi = form(CH21, "adapted", {(dwj(3, 1),): ww(3)}, adapted=AD21)
    assert reduce_contact_ideal(wedge(d_omt, chi)).is_zero


def test_contact_ideal_keeps_quotient():
    b = form(CH21, "adapted", {(dw(1), dw(2)): ww(3)}, adapted=AD21)
    rb = reduce_contact_ideal(b)
    assert not rb.is_zero
    # adding ideal terms does not change the reduction
    noise = form(CH21, "adapted-contact", {(omt(3), dw(2)): wj(3, 1)},
                 adapted=AD21)
    again = reduce_contact_ideal(to_adapted_contact(b) + noise)
    assert (again - rb).is_zero


def test_adapted_d_rejects_minor_entries():
    bad = form(CH21, "adapted", {(dw(1),): wj(1, 2)}, adapted=AD21)
    with pytest.raises(FormError):
        ext_d(bad)


# ---------------------------------------------------------------------------
# immersions and pullbacks
# ---------------------------------------------------------------------------

def plane_immersion() -> Immersion:
    return Immersion(CH21, (x(1), x(2),
                            const(2) * x(1) - const(3) * x(2) + const(1)))


def test_immersion_validation():
    with pytest.raises(FormError):
        Immersion(CH21, (x(1), x(2)))
    with pytest.raises(FormError):
        Immersion(CH21, (x(1), x(2), yy(1)))


def test_contact_forms_pull_back_to_zero():
    zeta = Immersion(CH21, (x(1), x(2), x(1) * x(2)))
    for word in [(om(3),), (om(1), dx(2)), (om(2), om(3))]:
        a = form(CH21, "contact", {word: yy(3) * x(1)})
        assert pullback_immersion(a, zeta).is_zero


def test_pullback_commutes_with_d():
    zeta = Immersion(CH21, (x(1), x(2), sin_expr(x(1)) * x(2)))
    a = form(CH21, "coordinate", {(dy(3),): yy(3) * yj(3, 1)})
    lhs = pullback_immersion(ext_d(a), zeta)
    rhs = ext_d(pullback_immersion(a, zeta))
    assert form_equal(lhs, rhs, trials=6, seed=2).verdict == "equal"


def test_pullback_of_horizontal_volume():
    zeta = plane_immersion()
    L = expr_sum(yj(K, 1) ** 2 for K in range(1, 4))
    a = volume_form(CH21, mode="contact").scale(L)
    p = pullback_immersion(a, zeta)
    # jets of the plane: y^1_1 = 1, y^2_1 = 0, y^3_1 = 2
    assert equal(p.coefficient((dx(1), dx(2))), const(5))


def test_adapted_substitution_solves_slopes():
    zeta = Immersion(CH21, (x(1) + x(2), x(1) - x(2), x(1) * x(2)))
    sub = zeta.adapted_substitution(AD21)
    # chain rule: d_j zeta^s = sum_t (d_j zeta^{i_t}) w^s_{i_t}
    for j in (1, 2):
        lhs = zeta.jet1(3, j)
        rhs = expr_sum(zeta.jet1(it, j) * sub[Sym("w1", 3, it)]
                       for it in AD21.selected)
        assert equal(lhs, rhs)


def test_pullback_adapted_matches_jet():
    zeta = Immersion(CH21, (x(1), x(2), x(1) ** 2 + x(2)))
    a = form(CH21, "adapted", {(dw(3),): ww(3)}, adapted=AD21)
    p = pullback_immersion(a, zeta)
    val = x(1) ** 2 + x(2)
    assert equal(p.coefficient((dx(1),)), val * const(2) * x(1))
    assert equal(p.coefficient((dx(2),)), val)


# ---------------------------------------------------------------------------
# comparison and serialization
# ---------------------------------------------------------------------------

def test_form_equal_across_modes():
    a = form(CH21, "coordinate", {(dy(1), dx(2)): yy(2)})
    b = to_contact(a)
    assert form_equal(a, b, trials=5, seed=0).verdict == "equal"
    c = b + form(CH21, "contact", {(om(1), dx(2)): const(1)})
    res = form_equal(a, c, trials=5, seed=0)
    assert res.verdict == "unequal"
    assert res.word is not None
    assert "unequal at word" in res.describe()


def test_form_json_roundtrip():
    a = form(CH21, "coordinate",
             {(dy(1), dx(2)): yy(2) * x(1), (dy(3), dy(2)): sqrt_expr(
                 ONE + yj(3, 1) ** 2)})
    data = form_to_json(a)
    text = json.dumps(data, sort_keys=True)
    b = form_from_json(json.loads(text), CH21)
    assert (b - a).is_zero
    assert json.dumps(form_to_json(b), sort_keys=True) == text


def test_zero_form_json():
    z = zero_form(CH21, 2, "coordinate")
    assert form_from_json(form_to_json(z), CH21).is_zero
