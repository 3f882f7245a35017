"""
Unit parsing utilities
"""
import re
from typing import Union

from app.shared.exceptions import ValidationError


_SI_PREFIXES = {
    "": 1.0,
    "m": 1e-3,
    "u": 1e-6,
    "µ": 1e-6,
    "n": 1e-9,
    "p": 1e-12,
    "f": 1e-15,
    "a": 1e-18,
}

_QUANTITY = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*([a-zµ]?)([A-Za-z]*)\s*$")


def parse_si(value: Union[str, int, float], unit: str) -> float:
    """
    Parse an SI-suffixed quantity into base units.

    Args:
        value: Bare number (already in base units) or a string such as "3.6fJ".
        unit: Expected base unit symbol, e.g. "J", "W", "s".

    Returns:
        The value in base units.

    Raises:
        ValidationError: If the suffix or unit is not recognised.
    """
    if isinstance(value, bool):
        raise ValidationError(f"Expected a quantity in {unit}, got a boolean")
    if isinstance(value, (int, float)):
        return float(value)

    match = _QUANTITY.match(value)
    if match is None:
        raise ValidationError(f"Cannot parse quantity '{value}' (expected e.g. '3.6f{unit}')")
    number, prefix, symbol = match.groups()

    # a lone lowercase unit symbol ("5s") is captured as the prefix group
    if symbol == "" and prefix == unit:
        prefix, symbol = "", prefix
    if symbol not in ("", unit):
        raise ValidationError(f"Invalid unit suffix in '{value}': expected '{unit}'")
    if prefix not in _SI_PREFIXES:
        raise ValidationError(f"Invalid SI prefix '{prefix}' in '{value}'")
    return float(number) * _SI_PREFIXES[prefix]


def parse_energy(value: Union[str, int, float]) -> float:
    """Parse an energy such as "10.08pJ" into joules."""
    return parse_si(value, "J")


def format_energy(joules: float) -> str:
    """Render joules with the largest SI prefix that keeps the mantissa >= 1."""
    if joules == 0:
        return "0J"
    for prefix, scale in (("", 1.0), ("m", 1e-3), ("u", 1e-6), ("n", 1e-9), ("p", 1e-12), ("f", 1e-15)):
        if abs(joules) >= scale:
            return f"{joules / scale:.4g}{prefix}J"
    return f"{joules / 1e-18:.4g}aJ"
