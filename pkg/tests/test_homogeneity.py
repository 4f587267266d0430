"""Tests for homogeneity residuals, equivariance, and quotient projection."""

from __future__ import annotations

import pytest

from lepage.charts import AdaptedChart, JetChart
from lepage.expr import (
    ExprError, ONE, Sym, const, diff, equal, expr_sum, sqrt_expr, sym_expr,
    to_dsl, wj, x, yj, yy,
)
from lepage.homogeneity import (
    check_equivariance, check_zermelo, grassmann_projection, zermelo_residuals,
)

CH21 = JetChart(n=2, m=1, order=1)
CH22 = JetChart(n=2, m=2, order=1)
CH11 = JetChart(n=1, m=1, order=1)


def area_function(chart: JetChart):
    M = chart.M
    return sqrt_expr(expr_sum(
        (yj(K1, 1) * yj(K2, 2) - yj(K2, 1) * yj(K1, 2)) ** 2
        for K1 in range(1, M + 1) for K2 in range(K1 + 1, M + 1)))


HOMOGENEOUS = [
    ("area m=1", CH21, area_function(CH21)),
    ("area m=2", CH22, area_function(CH22)),
    ("curve speed", CH11, sqrt_expr(yj(1, 1) ** 2 + yj(2, 1) ** 2)),
    ("skew pairing", CH22,
     yj(1, 1) * yj(2, 2) - yj(2, 1) * yj(1, 2)
     + yj(3, 1) * yj(4, 2) - yj(4, 1) * yj(3, 2)),
    ("determinant", CH21, yj(1, 1) * yj(2, 2) - yj(2, 1) * yj(1, 2)),
]

INHOMOGENEOUS = [
    ("affine", CH21, yj(1, 1) + const(1)),
    ("quadratic", CH21, yj(1, 1) ** 2),
    ("dirichlet", CH21, expr_sum(yj(3, j) ** 2 for j in (1, 2))),
    ("graph area", CH21, sqrt_expr(ONE + yj(3, 1) ** 2 + yj(3, 2) ** 2)),
]


# ---------------------------------------------------------------------------
# residual identities
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("label,chart,F", HOMOGENEOUS,
                         ids=[h[0] for h in HOMOGENEOUS])
def test_zermelo_passes_for_homogeneous(label, chart, F):
    report = zermelo_residuals(F, chart, trials=10, seed=1)
    assert report.passed
    assert report.describe() == "all residuals vanish"


@pytest.mark.parametrize("label,chart,F", INHOMOGENEOUS,
                         ids=[h[0] for h in INHOMOGENEOUS])
def test_zermelo_fails_for_inhomogeneous(label, chart, F):
    report = zermelo_residuals(F, chart, trials=10, seed=1)
    assert not report.passed
    key, verdict = report.witness()
    assert verdict.verdict == "unequal"
    assert "residual at" in report.describe()


def test_zermelo_residual_values():
    # for F = y^1_1 + 1 the (1,1) residual is exactly -1
    report = zermelo_residuals(yj(1, 1) + const(1), CH21, trials=5, seed=1)
    assert equal(report.residuals[(1, 1)], -ONE)
    assert equal(report.residuals[(1, 2)], yj(1, 2))
    assert report.residuals[(2, 1)].is_zero
    # for F = (y^1_1)^2 the (1,1) residual equals F itself
    report2 = zermelo_residuals(yj(1, 1) ** 2, CH21, trials=5, seed=1)
    assert equal(report2.residuals[(1, 1)], yj(1, 1) ** 2)


def test_zermelo_polynomial_cases_close_symbolically():
    # polynomial homogeneous functions give exact zero residuals
    F = yj(1, 1) * yj(2, 2) - yj(2, 1) * yj(1, 2)
    report = zermelo_residuals(F, CH21, trials=5, seed=1)
    assert all(r.is_zero for r in report.residuals.values())


def test_check_zermelo_wrapper():
    assert check_zermelo(area_function(CH21), CH21, trials=8, seed=2)
    assert not check_zermelo(yj(1, 1) ** 2, CH21, trials=8, seed=2)


def test_differentiated_identity():
    # jet-differentiating the contracted identity once:
    # sum_K F_{(K,j)(P,s)} y^K_l = delta^j_l F_{(P,s)} - delta^s_l F_{(P,j)}
    F = area_function(CH21)
    chart = CH21
    for (j, l, P, s) in [(1, 1, 3, 2), (1, 2, 1, 1), (2, 2, 2, 1)]:
        lhs = expr_sum(
            diff(diff(F, Sym("y1", K, j)), Sym("y1", P, s))
            * sym_expr(Sym("y1", K, l))
            for K in range(1, chart.M + 1))
        rhs = ZERO_ = const(0)
        if j == l:
            rhs = rhs + diff(F, Sym("y1", P, s))
        if s == l:
            rhs = rhs - diff(F, Sym("y1", P, j))
        assert equal(lhs, rhs, trials=8, seed=3)


# ---------------------------------------------------------------------------
# group equivariance
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("label,chart,F", HOMOGENEOUS,
                         ids=[h[0] for h in HOMOGENEOUS])
def test_equivariance_matches_homogeneity(label, chart, F):
    res = check_equivariance(F, chart, trials=8, seed=4)
    assert res.verdict == "equal"
    assert res.samples > 0
    assert "equivariant" in res.describe()


@pytest.mark.parametrize("label,chart,F", INHOMOGENEOUS,
                         ids=[h[0] for h in INHOMOGENEOUS])
def test_equivariance_detects_failure(label, chart, F):
    res = check_equivariance(F, chart, trials=8, seed=4)
    assert res.verdict == "unequal"
    assert res.witness is not None
    assert "deviation" in str(res.witness)


# ---------------------------------------------------------------------------
# quotient projection
# ---------------------------------------------------------------------------

def test_projection_curve_speed():
    ad = AdaptedChart(CH11, (1,))
    F = sqrt_expr(yj(1, 1) ** 2 + yj(2, 1) ** 2)
    G = grassmann_projection(F, ad, trials=6, seed=5)
    assert equal(G, sqrt_expr(ONE + wj(2, 1) ** 2))


def test_projection_area_m1():
    ad = AdaptedChart(CH21, (1, 2))
    G = grassmann_projection(area_function(CH21), ad, trials=6, seed=5)
    assert equal(G, sqrt_expr(ONE + wj(3, 1) ** 2 + wj(3, 2) ** 2),
                 guards=[ONE + wj(3, 1) ** 2 + wj(3, 2) ** 2])


def test_projection_area_m2():
    ad = AdaptedChart(CH22, (1, 2))
    G = grassmann_projection(area_function(CH22), ad, trials=6, seed=5)
    minors = (wj(3, 1) * wj(4, 2) - wj(4, 1) * wj(3, 2)) ** 2
    slopes = expr_sum(wj(s, i) ** 2 for s in (3, 4) for i in (1, 2))
    assert equal(G, sqrt_expr(ONE + slopes + minors))


def test_projection_polynomial():
    ad = AdaptedChart(CH21, (1, 2))
    F = yj(1, 1) * yj(2, 2) - yj(2, 1) * yj(1, 2)
    G = grassmann_projection(F, ad, trials=6, seed=5)
    assert equal(G, ONE)


def test_projection_respects_other_selections():
    # selecting rows (1, 3) swaps the roles of the fiber components
    ad = AdaptedChart(CH21, (1, 3))
    G = grassmann_projection(area_function(CH21), ad, trials=6, seed=5)
    assert equal(G, sqrt_expr(ONE + wj(2, 1) ** 2 + wj(2, 3) ** 2))


def test_projection_rejects_inhomogeneous():
    ad = AdaptedChart(CH21, (1, 2))
    with pytest.raises(ExprError):
        grassmann_projection(yj(1, 1) ** 2, ad, trials=6, seed=5)
    with pytest.raises(ExprError):
        grassmann_projection(yj(1, 1) + const(1), ad, trials=6, seed=5)
