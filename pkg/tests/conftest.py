import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from finslerlab import jets, metrics
from finslerlab.conformal import ConformalFactor
from finslerlab.fields import ScalarField


def w_sin(xs):
    return 0.1 * jets.sin(2 * np.pi * xs[0])


def a_conformally_flat(xs):
    w = w_sin(xs)
    e = jets.exp(w + w)
    z = 0.0 * e
    return [[e, z, z], [z, e, z], [z, z, e]]


def a_product(xs):
    # product of three circle metrics: flat but with nonzero Christoffels
    f1 = 1.0 + 0.3 * jets.sin(2 * np.pi * xs[0]) ** 2
    f2 = 1.0 + 0.2 * jets.cos(2 * np.pi * xs[1]) ** 2
    f3 = 1.0 + 0.1 * jets.sin(2 * np.pi * xs[2]) ** 2
    z = 0.0 * f1
    return [[f1, z, z], [z, f2, z], [z, z, f3]]


def a_sphere_patch(xs):
    s = xs[0] * xs[0] + xs[1] * xs[1] + xs[2] * xs[2]
    f = 4.0 / ((1.0 + s) * (1.0 + s))
    z = 0.0 * f
    return [[f, z, z], [z, f, z], [z, z, f]]


def np_a_conformally_flat(x):
    e = np.exp(0.2 * np.sin(2 * np.pi * x[0]))
    return np.diag([e, e, e])


def np_a_product(x):
    return np.diag([
        1.0 + 0.3 * np.sin(2 * np.pi * x[0]) ** 2,
        1.0 + 0.2 * np.cos(2 * np.pi * x[1]) ** 2,
        1.0 + 0.1 * np.sin(2 * np.pi * x[2]) ** 2,
    ])


def np_a_sphere_patch(x):
    f = 4.0 / (1.0 + x @ x) ** 2
    return np.diag([f, f, f])


@pytest.fixture(scope="session")
def flat_spec():
    return metrics.euclidean()


@pytest.fixture(scope="session")
def diag_spec():
    return metrics.riemannian_constant(np.diag([4.0, 1.0, 1.0]), label="diag411")


@pytest.fixture(scope="session")
def confflat_spec():
    return metrics.riemannian_field(a_conformally_flat, label="conf-flat")


@pytest.fixture(scope="session")
def product_spec():
    return metrics.riemannian_field(a_product, label="product")


@pytest.fixture(scope="session")
def sphere_patch_spec():
    return metrics.riemannian_field(
        a_sphere_patch, metrics.PeriodicChart3((2 * np.pi,) * 3), label="sphere-patch"
    )


@pytest.fixture(scope="session")
def const_randers_spec():
    return metrics.randers_constant(np.eye(3), [0.3, 0.0, 0.0])


@pytest.fixture(scope="session")
def var_randers_spec():
    def a_fn(xs):
        one = 1.0 + 0.0 * xs[0]
        z = 0.0 * xs[0]
        return [[one, z, z], [z, one, z], [z, z, one]]

    def b_fn(xs):
        return [0.2 + 0.0 * xs[0], 0.1 * jets.sin(2 * np.pi * xs[0]), 0.0 * xs[0]]

    return metrics.randers(a_fn, b_fn, label="randers-var")


def phi_sin(amplitude=0.1, axis=0, label=None):
    return ConformalFactor(ScalarField.from_x_function(
        lambda xs: 1.0 + amplitude * jets.sin(2 * np.pi * xs[axis]),
        label or f"1+{amplitude}sin(2pi x{axis + 1})",
    ))


def phi_cos(amplitude=0.1, axis=1, label=None):
    return ConformalFactor(ScalarField.from_x_function(
        lambda xs: 1.0 + amplitude * jets.cos(2 * np.pi * xs[axis]),
        label or f"1+{amplitude}cos(2pi x{axis + 1})",
    ))


def phi_mixed(label="phi-mixed"):
    return ConformalFactor(ScalarField.from_x_function(
        lambda xs: 1.0 + 0.05 * jets.sin(2 * np.pi * xs[0]) + 0.04 * jets.cos(2 * np.pi * xs[1])
        + 0.03 * jets.sin(2 * np.pi * xs[2]),
        label,
    ))
