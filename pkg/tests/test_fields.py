import math

import numpy as np
import pytest

from boundary_trace.errors import UnsupportedFieldKindError
from boundary_trace.fields import AffineField, QuadraticField, SlitWitnessField, synthesize_test_field


def test_affine_field(unit_square):
    field = synthesize_test_field(unit_square, "affine", a=(2.0, -1.0), b=0.5)
    assert isinstance(field, AffineField)
    value = field.evaluate((0.25, 0.5))
    assert value.value == 0.5
    assert value.gradient.tolist() == [2.0, -1.0]
    assert not value.hessian.any()
    assert field.seminorm == 0.0


def test_quadratic_field(unit_square):
    field = synthesize_test_field(unit_square, "quadratic", A=[[1.0, 1.0], [0.0, -1.0]], a=(1.0, 0.0))
    assert isinstance(field, QuadraticField)
    value = field.evaluate((1.0, 2.0))
    assert value.value == 1.0 + 2.0 - 4.0 + 1.0
    assert value.gradient.tolist() == [5.0, -3.0]
    assert value.hessian.tolist() == [[2.0, 1.0], [1.0, -2.0]]
    assert field.seminorm == 5.0


def test_slit_witness_values(slit_square):
    field = synthesize_test_field(slit_square, "slit-witness")
    assert field == SlitWitnessField(0.0, 0.5, 0.0)
    assert field.evaluate((0.0, 0.25)).value == 0.0
    assert field.evaluate((0.0, -0.25)).value == 1.0
    assert field.evaluate((0.75, 0.25)).value == 0.5
    assert field.evaluate((0.75, -0.25)).value == 0.5
    assert field.evaluate((0.75, 0.0)).value == 0.5
    assert field.seminorm == pytest.approx(0.5 * 60.0 / (6.0 * math.sqrt(3.0)) * 16.0)


def test_slit_witness_derivatives(slit_square):
    field = synthesize_test_field(slit_square, "slit-witness")
    x = np.array([0.3, -0.1])
    h = 1e-6
    step = np.array([h, 0.0])
    plus, minus, here = field.evaluate(x + step), field.evaluate(x - step), field.evaluate(x)
    assert (plus.value - minus.value) / (2 * h) == pytest.approx(here.gradient[0], abs=1e-6)
    assert (plus.gradient[0] - minus.gradient[0]) / (2 * h) == pytest.approx(here.hessian[0, 0], abs=1e-4)
    assert abs(here.hessian[0, 0]) <= field.seminorm


@pytest.mark.parametrize(
    "kind, kwargs",
    [
        ("cubic", {}),
        ("quadratic", {}),
        ("quadratic", {"A": [[1.0, 0.0]]}),
        ("affine", {"a": (1.0, 2.0, 3.0)}),
    ],
)
def test_unsupported_fields(unit_square, kind, kwargs):
    with pytest.raises(UnsupportedFieldKindError):
        synthesize_test_field(unit_square, kind, **kwargs)


def test_slit_witness_needs_a_slit(unit_square):
    with pytest.raises(UnsupportedFieldKindError, match="horizontal slit"):
        synthesize_test_field(unit_square, "slit-witness")
