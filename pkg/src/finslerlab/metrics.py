r"""Metric specifications: Finsler norm families evaluable on jets.

Three kinds are supported on a single global periodic chart of the 3-torus:

* ``riemannian`` — F^2 = a_ij(x) y^i y^j for a symmetric positive matrix
  field a; the fundamental tensor is direction-independent.
* ``randers``    — F = sqrt(a_ij y^i y^j) + b_i(x) y^i with ||b||_a < 1.
* ``closed_form`` — any positively 1-homogeneous F(x, y) supplied as a
  callable that accepts jets (or plain arrays) for both arguments.

Coefficient fields are callables written against :mod:`finslerlab.jets`
primitives (``sin``, ``exp``, ...), so every derivative order the geometry
kernel needs comes out of one evaluation.  They must be periodic on the
chart for mesh-level work; pointwise queries tolerate non-periodic test
patches (e.g. the constant-curvature sphere patch).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from . import jets
from .errors import NonConvex


@dataclass(frozen=True)
class PeriodicChart3:
    """Product-of-circles chart; ``periods`` are the circumferences."""

    periods: tuple = (1.0, 1.0, 1.0)

    def wrap(self, x):
        p = np.asarray(self.periods)
        return np.mod(np.asarray(x, dtype=float), p)

    def spacings(self, resolution):
        return tuple(p / n for p, n in zip(self.periods, resolution))


class MetricSpec:
    """A Finsler metric family; immutable and shareable across threads."""

    def __init__(self, kind, chart, label, a_fn=None, b_fn=None, f_fn=None):
        self.kind = kind
        self.chart = chart
        self.label = label
        self._a_fn = a_fn
        self._b_fn = b_fn
        self._f_fn = f_fn

    def __repr__(self):
        return f"MetricSpec({self.kind!r}, {self.label!r})"

    @property
    def direction_independent_geometry(self) -> bool:
        """True when g, Gamma, curvature do not depend on the direction."""
        return self.kind == "riemannian"

    def fingerprint(self) -> str:
        key = f"{self.kind}|{self.label}|{self.chart.periods}"
        return hashlib.md5(key.encode()).hexdigest()

    # -- evaluation on jets --------------------------------------------------

    def a_matrix(self, xs):
        """3x3 coefficient matrix (jets or arrays) for riemannian/randers."""
        return self._a_fn(xs)

    def b_covector(self, xs):
        return self._b_fn(xs)

    def f2(self, xs, ys):
        """F^2 on jets; exact polynomial for the riemannian kind."""
        if self.kind == "riemannian":
            a = self._a_fn(xs)
            out = None
            for i in range(3):
                for j in range(3):
                    term = a[i][j] * ys[i] * ys[j]
                    out = term if out is None else out + term
            return out
        f = self.f(xs, ys)
        return f * f

    def f(self, xs, ys):
        """F on jets (requires y bounded away from 0, checked by callers)."""
        if self.kind == "riemannian":
            return jets.sqrt(self.f2(xs, ys))
        if self.kind == "randers":
            a = self._a_fn(xs)
            b = self._b_fn(xs)
            ayy = None
            for i in range(3):
                for j in range(3):
                    term = a[i][j] * ys[i] * ys[j]
                    ayy = term if ayy is None else ayy + term
            by = b[0] * ys[0] + b[1] * ys[1] + b[2] * ys[2]
            return jets.sqrt(ayy) + by
        return self._f_fn(xs, ys)

    # -- pointwise checks ------------------------------------------------------

    def check_convexity(self, x, margin=0.0):
        """Randers strict-convexity sup ||b||_a < 1 at the given point(s)."""
        if self.kind != "randers":
            return
        x = np.asarray(x, dtype=float)
        batch = x.shape[1:] if x.ndim > 1 else ()
        xs = tuple(np.broadcast_to(x[i], batch) for i in range(3))
        a = np.stack(
            [np.stack([np.broadcast_to(np.asarray(self._a_fn(xs)[i][j], dtype=float), batch)
                       for j in range(3)], axis=-1) for i in range(3)],
            axis=-2,
        )
        b = np.stack(
            [np.broadcast_to(np.asarray(v, dtype=float), batch) for v in self._b_fn(xs)],
            axis=-1,
        )
        norm2 = np.einsum("...i,...ij,...j->...", b, np.linalg.inv(a), b)
        if np.any(norm2 >= (1.0 - margin) ** 2):
            raise NonConvex(
                f"Randers one-form reaches ||b||_a = {float(np.sqrt(norm2.max())):.6f} >= 1"
            )


# -- constructors --------------------------------------------------------------


def euclidean(chart=PeriodicChart3()) -> MetricSpec:
    return riemannian_constant(np.eye(3), chart, label="euclidean")


def riemannian_constant(a, chart=PeriodicChart3(), label=None) -> MetricSpec:
    a = np.asarray(a, dtype=float)
    if label is None:
        label = f"riemannian-const:{a.tolist()}"
    rows = [[a[i, j] for j in range(3)] for i in range(3)]

    def a_fn(xs):
        return rows

    return MetricSpec("riemannian", chart, label, a_fn=a_fn)


def riemannian_field(a_fn, chart=PeriodicChart3(), label="riemannian-field") -> MetricSpec:
    return MetricSpec("riemannian", chart, label, a_fn=a_fn)


def randers(a_fn, b_fn, chart=PeriodicChart3(), label="randers") -> MetricSpec:
    return MetricSpec("randers", chart, label, a_fn=a_fn, b_fn=b_fn)


def randers_constant(a, b, chart=PeriodicChart3(), label=None) -> MetricSpec:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.einsum("i,ij,j->", b, np.linalg.inv(a), b) >= 1.0:
        raise NonConvex("constant Randers data has ||b||_a >= 1")
    if label is None:
        label = f"randers-const:{a.tolist()}:{b.tolist()}"
    rows = [[a[i, j] for j in range(3)] for i in range(3)]

    def a_fn(xs):
        return rows

    def b_fn(xs):
        return [b[0], b[1], b[2]]

    return MetricSpec("randers", chart, label, a_fn=a_fn, b_fn=b_fn)


def closed_form(f_fn, chart=PeriodicChart3(), label="closed-form") -> MetricSpec:
    return MetricSpec("closed_form", chart, label, f_fn=f_fn)


def conformally_flat(w_fn, chart=PeriodicChart3(), label="conformally-flat") -> MetricSpec:
    """a_ij = exp(2 w(x)) delta_ij for a scalar chart function w."""

    def a_fn(xs):
        w = w_fn(xs)
        e = jets.exp(w + w)
        zero = e * 0.0
        return [[e, zero, zero], [zero, e, zero], [zero, zero, e]]

    return MetricSpec("riemannian", chart, label, a_fn=a_fn)
