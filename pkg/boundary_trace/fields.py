"""Closed-form C2 test fields with exact derivatives."""
import logging
import math
from dataclasses import dataclass
from typing import Any, Optional, Sequence

import numpy as np

from boundary_trace.errors import UnsupportedFieldKindError
from boundary_trace.extension import FieldValue, point_xy, smoothstep
from boundary_trace.geometry import PolygonalDomain

logger = logging.getLogger(__name__)

FIELD_KINDS = ("affine", "quadratic", "slit-witness")

# max |s''| of the quintic smoothstep, attained at u = (3 - sqrt 3) / 6
_SMOOTHSTEP_D2_MAX = 60.0 / (6.0 * math.sqrt(3.0))


@dataclass(frozen=True)
class AffineField:
    a: Sequence[float]
    b: float
    kind: str = "affine"

    @property
    def seminorm(self) -> float:
        return 0.0

    def evaluate(self, x: Any) -> FieldValue:
        px, py = point_xy(x)
        a = np.array(self.a, dtype=float)
        return FieldValue(float(self.b + a[0] * px + a[1] * py), a.copy(), np.zeros((2, 2)))


@dataclass(frozen=True)
class QuadraticField:
    """q(x) = x^T A x + <a, x> + b."""

    A: Sequence[Sequence[float]]
    a: Sequence[float]
    b: float
    kind: str = "quadratic"

    @property
    def hessian(self) -> np.ndarray:
        A = np.array(self.A, dtype=float)
        return A + A.T

    @property
    def seminorm(self) -> float:
        h = self.hessian
        return float(abs(h[0, 0]) + abs(h[0, 1]) + abs(h[1, 1]))

    def evaluate(self, x: Any) -> FieldValue:
        p = np.array(point_xy(x))
        A = np.array(self.A, dtype=float)
        a = np.array(self.a, dtype=float)
        return FieldValue(float(p @ A @ p + a @ p + self.b), self.hessian @ p + a, self.hessian)


@dataclass(frozen=True)
class SlitWitnessField:
    """0 above a horizontal slit and 1 below it near its middle.

    F = 1/2 -+ lam(x)/2 on the two sides, where lam is 1 on the middle half of
    the slit and 0 beyond its ends, so F is constant 1/2 wherever the slit
    line is part of the domain.
    """

    center: float
    half_length: float
    level: float
    kind: str = "slit-witness"

    def _lam(self, px: float):
        width = self.half_length / 2.0
        u = (self.half_length - abs(px - self.center)) / width
        s, ds, d2s = smoothstep(np.array(u))
        du = -math.copysign(1.0, px - self.center) / width
        return float(s), float(ds) * du, float(d2s) * du * du

    @property
    def seminorm(self) -> float:
        width = self.half_length / 2.0
        return 0.5 * _SMOOTHSTEP_D2_MAX / width**2

    def evaluate(self, x: Any) -> FieldValue:
        px, py = point_xy(x)
        side = 0.0 if py == self.level else (-1.0 if py > self.level else 1.0)
        lam, dlam, d2lam = self._lam(px)
        hessian = np.zeros((2, 2))
        hessian[0, 0] = 0.5 * side * d2lam
        return FieldValue(0.5 + 0.5 * side * lam, np.array([0.5 * side * dlam, 0.0]), hessian)


def synthesize_test_field(
    domain: PolygonalDomain,
    kind: str,
    a: Optional[Sequence[float]] = None,
    b: float = 0.0,
    A: Optional[Sequence[Sequence[float]]] = None,
):
    """Closed-form C2 field of the given kind.

    Args:
        domain: Domain the field is used on
        kind: "affine", "quadratic" or "slit-witness"
        a: Linear coefficients (default zero)
        b: Constant term
        A: Quadratic form for "quadratic"

    Raises:
        UnsupportedFieldKindError: For unknown kinds, bad parameters, or a
            slit witness on a domain without a single horizontal slit segment
    """
    a = tuple(a) if a is not None else (0.0, 0.0)
    if len(a) != 2:
        raise UnsupportedFieldKindError(f"linear coefficients need 2 entries, got {len(a)}")
    if kind == "affine":
        return AffineField(a, float(b))
    if kind == "quadratic":
        if A is None or np.shape(A) != (2, 2):
            raise UnsupportedFieldKindError("quadratic fields need a 2x2 matrix A")
        return QuadraticField(tuple(tuple(float(v) for v in row) for row in A), a, float(b))
    if kind == "slit-witness":
        for slit in domain.slits:
            if len(slit) == 2 and slit[0].y == slit[1].y:
                lo, hi = sorted((slit[0].x, slit[1].x))
                field = SlitWitnessField(float((lo + hi) / 2), float((hi - lo) / 2), float(slit[0].y))
                logger.info(f"Slit witness field on y={field.level}, seminorm {field.seminorm:.6g}")
                return field
        raise UnsupportedFieldKindError("slit-witness needs a domain with a single-segment horizontal slit")
    raise UnsupportedFieldKindError(f"unknown field kind {kind!r}; choose from {', '.join(FIELD_KINDS)}")
