r"""Forward-mode jets: truncated multivariate Taylor arithmetic.

A jet carries the Taylor coefficients of a function of the chart point
``x = (x1,x2,x3)`` and the direction ``y = (y1,y2,y3)`` around a base point,
truncated at a total x-degree ``px`` and a total y-degree ``py``.  All tensor
data of the geometry kernel (fundamental tensor, Cartan tensor, spray,
nonlinear connection, Chern coefficients) are coefficient reads from such
jets, so derivatives are exact to round-off — no finite differences on the
main path.

Coefficients may be scalars or numpy arrays of any shape (the "batch"); all
arithmetic broadcasts over the batch, which is what makes mesh-scale sweeps
affordable: one jet evaluation covers every mesh node at once.

The monomial bookkeeping for a given ``(px, py)`` truncation lives in a
cached :class:`JetSpace`.  Products use precomputed index tables grouped by
the left factor's monomial, so a multiply is ``O(#monomials)`` vectorized
fused multiply-adds over the batch.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product as _iproduct
from math import factorial

import numpy as np

__all__ = [
    "JetSpace",
    "Jet",
    "jetspace",
    "variables",
    "constant",
    "sqrt",
    "exp",
    "log",
    "sin",
    "cos",
    "tan",
    "power",
]


def _monomials(px: int, py: int):
    """All exponent 6-tuples (a1,a2,a3,b1,b2,b3) with |a|<=px, |b|<=py.

    Ordered by (total degree, exponent tuple) so index 0 is the constant
    term and the six first-degree variables come next; the order is fixed
    and deterministic.
    """
    monos = []
    for a in _iproduct(range(px + 1), repeat=3):
        if sum(a) > px:
            continue
        for b in _iproduct(range(py + 1), repeat=3):
            if sum(b) > py:
                continue
            monos.append(a + b)
    monos.sort(key=lambda m: (sum(m), m))
    return monos


class JetSpace:
    """Monomial tables for one (px, py) truncation. Cached; treat as immutable."""

    def __init__(self, px: int, py: int):
        self.px = px
        self.py = py
        self.monomials = _monomials(px, py)
        self.n = len(self.monomials)
        self.index = {m: i for i, m in enumerate(self.monomials)}
        # factorial scale per monomial: alpha! * beta! for derivative reads
        self.fact = np.array(
            [np.prod([factorial(e) for e in m]) for m in self.monomials], dtype=float
        )
        # grouped product tables: for left monomial i, right indices J[i] and
        # target indices K[i] (targets are unique per i since k = i + j)
        self._mul_J = []
        self._mul_K = []
        for mi in self.monomials:
            J, K = [], []
            for j, mj in enumerate(self.monomials):
                mk = tuple(a + b for a, b in zip(mi, mj))
                if sum(mk[:3]) <= px and sum(mk[3:]) <= py:
                    J.append(j)
                    K.append(self.index[mk])
            self._mul_J.append(np.array(J, dtype=np.intp))
            self._mul_K.append(np.array(K, dtype=np.intp))
        self.max_order = px + py

    def mul_tables(self, i: int):
        return self._mul_J[i], self._mul_K[i]


_SPACES: dict[tuple[int, int], JetSpace] = {}


def jetspace(px: int, py: int) -> JetSpace:
    key = (px, py)
    if key not in _SPACES:
        _SPACES[key] = JetSpace(px, py)
    return _SPACES[key]


@dataclass
class Jet:
    """Truncated Taylor expansion; ``coeff`` has shape (space.n, *batch).

    ``nz`` is a boolean possibly-nonzero mask over monomials, maintained
    through arithmetic so products only touch populated coefficients.
    """

    space: JetSpace
    coeff: np.ndarray
    nz: np.ndarray = None

    def __post_init__(self):
        if self.nz is None:
            self.nz = np.ones(self.space.n, dtype=bool)

    # -- constructors ------------------------------------------------------

    @staticmethod
    def const(space: JetSpace, value, batch=()):
        c = np.zeros((space.n,) + tuple(batch))
        c[0] = value
        nz = np.zeros(space.n, dtype=bool)
        nz[0] = True
        return Jet(space, c, nz)

    @staticmethod
    def var(space: JetSpace, slot: int, value, batch=()):
        """Variable jet: value + one unit first-order coefficient.

        ``slot`` is 0..2 for x1..x3 and 3..5 for y1..y3.  In a space whose
        truncation drops that variable group entirely (px == 0 or py == 0)
        the result degrades to a constant, matching the truncation.
        """
        value = np.asarray(value, dtype=float)
        c = np.zeros((space.n,) + tuple(batch))
        c[0] = value
        nz = np.zeros(space.n, dtype=bool)
        nz[0] = True
        unit = [0] * 6
        unit[slot] = 1
        k = space.index.get(tuple(unit))
        if k is not None:
            c[k] = 1.0
            nz[k] = True
        return Jet(space, c, nz)

    # -- helpers -----------------------------------------------------------

    @property
    def value(self):
        return self.coeff[0]

    def deriv(self, mono: tuple) -> np.ndarray:
        """Partial derivative for exponent tuple (a1,a2,a3,b1,b2,b3)."""
        i = self.space.index[tuple(mono)]
        return self.coeff[i] * self.space.fact[i]

    def copy(self):
        return Jet(self.space, self.coeff.copy(), self.nz.copy())

    # -- ring ops ----------------------------------------------------------

    def __add__(self, other):
        if isinstance(other, Jet):
            return Jet(self.space, self.coeff + other.coeff, self.nz | other.nz)
        c = self.coeff.copy()
        c[0] = c[0] + other
        nz = self.nz.copy()
        nz[0] = True
        return Jet(self.space, c, nz)

    __radd__ = __add__

    def __neg__(self):
        return Jet(self.space, -self.coeff, self.nz)

    def __sub__(self, other):
        if isinstance(other, Jet):
            return Jet(self.space, self.coeff - other.coeff, self.nz | other.nz)
        c = self.coeff.copy()
        c[0] = c[0] - other
        nz = self.nz.copy()
        nz[0] = True
        return Jet(self.space, c, nz)

    def __rsub__(self, other):
        c = -self.coeff
        c[0] = c[0] + other
        nz = self.nz.copy()
        nz[0] = True
        return Jet(self.space, c, nz)

    def __mul__(self, other):
        if not isinstance(other, Jet):
            return Jet(self.space, self.coeff * other, self.nz)
        sp = self.space
        a, b = self, other
        if int(b.nz.sum()) < int(a.nz.sum()):
            a, b = b, a
        shape = np.broadcast_shapes(a.coeff.shape, b.coeff.shape)
        out = np.zeros(shape)
        nz = np.zeros(sp.n, dtype=bool)
        bc, bm = b.coeff, b.nz
        for i in np.flatnonzero(a.nz):
            J, K = sp.mul_tables(i)
            m = bm[J]
            if not m.any():
                continue
            Jm, Km = J[m], K[m]
            out[Km] += a.coeff[i] * bc[Jm]
            nz[Km] = True
        return Jet(sp, out, nz)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Jet):
            return self * _reciprocal(other)
        return Jet(self.space, self.coeff / other, self.nz)

    def __rtruediv__(self, other):
        return _reciprocal(self) * other

    def __pow__(self, p):
        if isinstance(p, int) and p >= 0:
            out = Jet.const(self.space, 1.0, self.coeff.shape[1:])
            base = self
            n = p
            while n:
                if n & 1:
                    out = out * base
                base = base * base
                n >>= 1
            return out
        return power(self, p)


def constant(space: JetSpace, value, batch=()):
    return Jet.const(space, value, batch)


def variables(space: JetSpace, x=None, y=None, batch=()):
    """Build (x1,x2,x3), (y1,y2,y3) variable jets around the given base values.

    ``x`` and ``y`` are arrays broadcastable to ``(3, *batch)``; omit either
    to get only the other triple.
    """
    xs = ys = None
    if x is not None:
        x = np.broadcast_to(np.asarray(x, dtype=float), (3,) + tuple(batch))
        xs = tuple(Jet.var(space, i, x[i], batch) for i in range(3))
    if y is not None:
        y = np.broadcast_to(np.asarray(y, dtype=float), (3,) + tuple(batch))
        ys = tuple(Jet.var(space, 3 + i, y[i], batch) for i in range(3))
    if xs is None:
        return ys
    if ys is None:
        return xs
    return xs, ys


# -- analytic functions via univariate composition --------------------------
#
# f(A) = sum_m f^(m)(A0)/m! * (A - A0)^m, truncated at the space's max total
# order; evaluated by Horner so a composition costs max_order jet products.


def _compose(jet: Jet, derivs) -> Jet:
    sp = jet.space
    d = sp.max_order
    c = jet.coeff.copy()
    c[0] = 0.0
    nz = jet.nz.copy()
    nz[0] = False
    ahat = Jet(sp, c, nz)
    out = Jet.const(sp, derivs[d] / factorial(d), jet.coeff.shape[1:])
    for m in range(d - 1, -1, -1):
        out = out * ahat
        out.coeff[0] += derivs[m] / factorial(m)
        out.nz[0] = True
    return out


def _reciprocal(jet: Jet) -> Jet:
    a0 = np.asarray(jet.value)
    d = jet.space.max_order
    derivs = [(-1.0) ** m * factorial(m) / a0 ** (m + 1) for m in range(d + 1)]
    return _compose(jet, derivs)


def sqrt(jet):
    if not isinstance(jet, Jet):
        return np.sqrt(jet)
    a0 = np.asarray(jet.value)
    d = jet.space.max_order
    derivs = [np.sqrt(a0)]
    coef = 0.5
    for m in range(1, d + 1):
        derivs.append(coef * a0 ** (0.5 - m))
        coef *= 0.5 - m
    return _compose(jet, derivs)


def power(jet, p):
    if not isinstance(jet, Jet):
        return np.power(jet, p)
    a0 = np.asarray(jet.value)
    d = jet.space.max_order
    derivs = [np.power(a0, p)]
    coef = p
    for m in range(1, d + 1):
        derivs.append(coef * np.power(a0, p - m))
        coef *= p - m
    return _compose(jet, derivs)


def exp(jet):
    if not isinstance(jet, Jet):
        return np.exp(jet)
    e0 = np.exp(np.asarray(jet.value))
    derivs = [e0] * (jet.space.max_order + 1)
    return _compose(jet, derivs)


def log(jet):
    if not isinstance(jet, Jet):
        return np.log(jet)
    a0 = np.asarray(jet.value)
    d = jet.space.max_order
    derivs = [np.log(a0)]
    for m in range(1, d + 1):
        derivs.append((-1.0) ** (m - 1) * factorial(m - 1) / a0**m)
    return _compose(jet, derivs)


def sin(jet):
    if not isinstance(jet, Jet):
        return np.sin(jet)
    a0 = np.asarray(jet.value)
    s, c = np.sin(a0), np.cos(a0)
    cycle = [s, c, -s, -c]
    derivs = [cycle[m % 4] for m in range(jet.space.max_order + 1)]
    return _compose(jet, derivs)


def cos(jet):
    if not isinstance(jet, Jet):
        return np.cos(jet)
    a0 = np.asarray(jet.value)
    s, c = np.sin(a0), np.cos(a0)
    cycle = [c, -s, -c, s]
    derivs = [cycle[m % 4] for m in range(jet.space.max_order + 1)]
    return _compose(jet, derivs)


def tan(jet):
    if not isinstance(jet, Jet):
        return np.tan(jet)
    return sin(jet) / cos(jet)


# -- series extraction -------------------------------------------------------


def partial_yseries(jet: Jet, out_space: JetSpace, dy: tuple, dx: int | None = None):
    """Extract the y-Taylor series of a partial derivative of ``jet``.

    Returns the expansion of ``d^|dy|/dy^dy [ d/dx_dx ] f`` as a jet in
    ``out_space`` (which must be pure-y, px == 0).  ``dy`` is a length-3
    exponent tuple; ``dx`` selects one first-order x-derivative or ``None``.

    This is how the geometry kernel turns one high-order jet of F^2 into the
    low-order y-series of g, dg/dx, ... that feed the spray/connection
    assembly: a gather plus factorial scaling, no arithmetic.
    """
    sp = jet.space
    assert out_space.px == 0
    a = (0, 0, 0) if dx is None else tuple(1 if i == dx else 0 for i in range(3))
    out = np.zeros((out_space.n,) + jet.coeff.shape[1:])
    nz = np.zeros(out_space.n, dtype=bool)
    for t, mono in enumerate(out_space.monomials):
        gamma = mono[3:]
        beta = tuple(g + d for g, d in zip(gamma, dy))
        src = a + beta
        if src not in sp.index:
            continue
        k = sp.index[src]
        if not jet.nz[k]:
            continue
        # coefficient of (dy)^gamma in the derivative:
        # c_{a,beta} * beta!/gamma! (and a! == 1 for |a| <= 1)
        scale = 1.0
        for bg, gg in zip(beta, gamma):
            scale *= factorial(bg) / factorial(gg)
        out[t] = jet.coeff[k] * scale
        nz[t] = True
    return Jet(out_space, out, nz)


def mul_monomial(jet: Jet, dy: tuple) -> Jet:
    """Multiply by the centered monomial (y - y0)^dy: a coefficient shift."""
    sp = jet.space
    out = np.zeros_like(jet.coeff)
    nz = np.zeros(sp.n, dtype=bool)
    for i in np.flatnonzero(jet.nz):
        m = sp.monomials[i]
        mk = m[:3] + tuple(a + b for a, b in zip(m[3:], dy))
        if sum(mk[3:]) <= sp.py:
            k = sp.index[mk]
            out[k] = jet.coeff[i]
            nz[k] = True
    return Jet(sp, out, nz)
