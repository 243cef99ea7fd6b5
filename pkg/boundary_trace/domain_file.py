"""Domain file format: JSON rings and slits with decimal-string coordinates."""
import json
import logging
from fractions import Fraction
from importlib import resources
from pathlib import Path
from typing import Any, Dict, List, Union

from boundary_trace.errors import DomainFileError
from boundary_trace.geometry import PolygonalDomain, Point, build_domain, is_dyadic, to_exact

logger = logging.getLogger(__name__)

FIXTURES = ("unit_square", "slit_square", "hub", "comb")


def format_exact(value: Fraction) -> str:
    """Shortest exact decimal for a dyadic rational.

    Example:
        format_exact(Fraction(-3, 8))  # "-0.375"
    """
    if not is_dyadic(value):
        return repr(float(value))
    k = value.denominator.bit_length() - 1
    digits = str(abs(value.numerator) * 5**k)
    sign = "-" if value < 0 else ""
    if k == 0:
        return f"{sign}{digits}"
    digits = digits.rjust(k + 1, "0")
    whole, frac = digits[:-k], digits[-k:].rstrip("0")
    return f"{sign}{whole}.{frac}" if frac else f"{sign}{whole}"


def _parse_points(raw: Any, where: str, exactness: List[bool]) -> List[Point]:
    if not isinstance(raw, list):
        raise DomainFileError(f"{where}: expected a list of [x, y] pairs")
    points = []
    for k, item in enumerate(raw):
        if not isinstance(item, (list, tuple)) or len(item) != 2:
            raise DomainFileError(f"{where}: point {k} is not an [x, y] pair")
        coords = []
        for value in item:
            try:
                coords.append(to_exact(value))
            except ValueError as e:
                raise DomainFileError(f"{where}: point {k}: {e}") from e
            if isinstance(value, str) and not is_dyadic(Fraction(value.strip())):
                exactness[0] = False
        points.append(Point(*coords))
    return points


def domain_from_dict(data: Dict[str, Any]) -> PolygonalDomain:
    """Build a validated domain from the parsed JSON document."""
    if not isinstance(data, dict) or "outer" not in data:
        raise DomainFileError("domain document needs an 'outer' ring")
    exactness = [True]
    outer = _parse_points(data["outer"], "outer", exactness)
    holes = [_parse_points(h, f"hole {i}", exactness) for i, h in enumerate(data.get("holes", []))]
    slits = [_parse_points(s, f"slit {i}", exactness) for i, s in enumerate(data.get("slits", []))]
    if not exactness[0]:
        logger.warning("Domain uses non-dyadic decimals; falling back to their binary64 values")
    return build_domain(outer, holes, slits, exact=exactness[0])


def domain_to_dict(domain: PolygonalDomain) -> Dict[str, Any]:
    def pts(ring):
        return [[format_exact(p.x), format_exact(p.y)] for p in ring]

    return {
        "outer": pts(domain.outer),
        "holes": [pts(h) for h in domain.holes],
        "slits": [pts(s) for s in domain.slits],
    }


def parse_domain(path: Union[str, Path]) -> PolygonalDomain:
    """Load and validate a domain file.

    Raises:
        DomainFileError: If the file is missing or malformed
        DomainValidationError: If the geometry is invalid
    """
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise DomainFileError(f"cannot read domain file {path}: {e}") from e
    domain = domain_from_dict(data)
    logger.info(f"Loaded domain {path.name}: {len(domain.features)} boundary segments, {len(domain.slits)} slits")
    return domain


def write_domain(domain: PolygonalDomain, path: Union[str, Path]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(domain_to_dict(domain), f, indent=2, sort_keys=True)
        f.write("\n")


def load_fixture(name: str) -> PolygonalDomain:
    """Load one of the bundled fixture domains by name."""
    if name not in FIXTURES:
        raise DomainFileError(f"unknown fixture {name!r}; choose from {', '.join(FIXTURES)}")
    text = resources.files("boundary_trace.fixtures").joinpath(f"{name}.json").read_text(encoding="utf-8")
    return domain_from_dict(json.loads(text))
