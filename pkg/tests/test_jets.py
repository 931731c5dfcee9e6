import numpy as np
import pytest

from finslerlab import jets


def test_variable_and_derivative_reads():
    sp = jets.jetspace(1, 4)
    (xs, ys) = jets.variables(sp, [0.3, 0.7, 0.1], [1.0, 2.0, -0.5])
    f = jets.sin(xs[0]) * ys[0] * ys[0] + xs[1] * ys[1]
    assert np.isclose(f.value, np.sin(0.3) + 1.4)
    assert np.isclose(f.deriv((0, 0, 0, 1, 0, 0)), 2 * np.sin(0.3))
    assert np.isclose(f.deriv((0, 0, 0, 2, 0, 0)), 2 * np.sin(0.3))
    assert np.isclose(f.deriv((1, 0, 0, 1, 0, 0)), 2 * np.cos(0.3))
    assert np.isclose(f.deriv((0, 1, 0, 0, 1, 0)), 1.0)


def test_mixed_high_order_against_hand_series():
    # f = exp(x1) * y1^3: d4 f / dx1 dy1^3 = 6 exp(x1)
    sp = jets.jetspace(1, 4)
    (xs, ys) = jets.variables(sp, [0.2, 0.0, 0.0], [0.5, 0.0, 0.0])
    f = jets.exp(xs[0]) * ys[0] * ys[0] * ys[0]
    assert np.isclose(f.deriv((1, 0, 0, 3, 0, 0)), 6 * np.exp(0.2))
    assert np.isclose(f.deriv((0, 0, 0, 4, 0, 0)), 0.0)


@pytest.mark.parametrize("func,ref,dref", [
    (jets.sqrt, np.sqrt, lambda v: 0.5 / np.sqrt(v)),
    (jets.exp, np.exp, np.exp),
    (jets.log, np.log, lambda v: 1 / v),
    (jets.sin, np.sin, np.cos),
    (jets.cos, np.cos, lambda v: -np.sin(v)),
])
def test_compositions(func, ref, dref):
    sp = jets.jetspace(0, 3)
    (y1, y2, y3) = jets.variables(sp, y=[1.7, 0.0, 0.0])
    g = func(y1 * y1)  # chain rule through the square
    v = 1.7**2
    assert np.isclose(g.value, ref(v))
    assert np.isclose(g.deriv((0, 0, 0, 1, 0, 0)), dref(v) * 2 * 1.7)


def test_division_and_power():
    sp = jets.jetspace(0, 2)
    (y1, y2, y3) = jets.variables(sp, y=[2.0, 3.0, 0.0])
    q = y1 / y2
    assert np.isclose(q.value, 2 / 3)
    assert np.isclose(q.deriv((0, 0, 0, 1, 0, 0)), 1 / 3)
    assert np.isclose(q.deriv((0, 0, 0, 0, 1, 0)), -2 / 9)
    p = jets.power(y1, 2.5)
    assert np.isclose(p.deriv((0, 0, 0, 1, 0, 0)), 2.5 * 2.0**1.5)
    assert np.isclose((y1**3).value, 8.0)


def test_batched_coefficients_match_scalar():
    sp = jets.jetspace(1, 2)
    xv = np.array([[0.1, 0.5], [0.2, 0.6], [0.3, 0.7]])
    yv = np.array([[1.0, -1.0], [2.0, 0.5], [3.0, 0.25]])
    (xs, ys) = jets.variables(sp, xv, yv, batch=(2,))
    f = jets.exp(xs[0]) * ys[0] + jets.cos(xs[2]) * ys[2] * ys[2]
    for b in range(2):
        (xs1, ys1) = jets.variables(sp, xv[:, b], yv[:, b])
        f1 = jets.exp(xs1[0]) * ys1[0] + jets.cos(xs1[2]) * ys1[2] * ys1[2]
        assert np.allclose(f.coeff[:, b], f1.coeff)


def test_partial_yseries_extraction():
    sp = jets.jetspace(1, 4)
    sub = jets.jetspace(0, 2)
    (xs, ys) = jets.variables(sp, [0.3, 0.0, 0.0], [1.0, 2.0, 0.5])
    f = jets.sin(xs[0]) * ys[0] * ys[0] * ys[1] * ys[1]
    # d2 f / dy1 dy1 = 2 sin(x1) y2^2 as a series in (y - y0)
    ser = jets.partial_yseries(f, sub, (2, 0, 0))
    assert np.isclose(ser.value, 2 * np.sin(0.3) * 4.0)
    assert np.isclose(ser.deriv((0, 0, 0, 0, 1, 0)), 2 * np.sin(0.3) * 2 * 2.0)
    # with the x-derivative block
    serx = jets.partial_yseries(f, sub, (2, 0, 0), dx=0)
    assert np.isclose(serx.value, 2 * np.cos(0.3) * 4.0)


def test_mul_monomial_shift():
    sp = jets.jetspace(0, 3)
    (y1, y2, y3) = jets.variables(sp, y=[1.0, 0.0, 0.0])
    c = jets.constant(sp, 2.0)
    shifted = jets.mul_monomial(c, (1, 1, 0))
    assert np.isclose(shifted.coeff[sp.index[(0, 0, 0, 1, 1, 0)]], 2.0)


def test_nz_mask_consistency():
    sp = jets.jetspace(1, 3)
    (xs, ys) = jets.variables(sp, [0.1, 0.2, 0.3], [1.0, 1.0, 1.0])
    f = (xs[0] + ys[1]) * (xs[1] - ys[2]) * ys[0]
    # every populated coefficient must be flagged
    populated = np.flatnonzero(np.any(np.atleast_2d(f.coeff).reshape(sp.n, -1), axis=1))
    assert set(populated).issubset(set(np.flatnonzero(f.nz)))
