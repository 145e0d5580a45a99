"""Utility functions for parsing user input strings into exact rationals.

This module provides helpers for safely converting command-line arguments
(cost constants, ratios) into `Fraction` values, and for the JSON encoding
of rationals shared by every serialized model.
"""

import logging
from fractions import Fraction

log = logging.getLogger(__name__)


def parse_rational(text: str) -> Fraction:
    """Parse a rational given as ``"p/q"``, an integer or a decimal.

    Decimals are converted exactly, so ``"0.1"`` becomes ``1/10`` and not
    the nearest binary float.

    Example:
    >>> parse_rational("2/3")
    Fraction(2, 3)
    >>> parse_rational("0.25")
    Fraction(1, 4)

    Args:
        text (str): The rational literal.

    Raises:
        ValueError: If the string is not a finite rational literal.

    Returns:
        Fraction: The parsed value in reduced form.

    """
    try:
        value = Fraction(text.strip())
    except (ValueError, ZeroDivisionError, AttributeError) as exc:
        log.error("❌ Invalid rational '%s': %s", text, exc)
        raise ValueError(
            f"Rational must be 'p/q' or a decimal (e.g., 3/2 or 1.5), got {text!r}"
        ) from exc

    return value


def fraction_to_json(value: Fraction | int) -> dict[str, str]:
    """Encode a rational as ``{"num": ..., "den": ...}`` with string digits."""
    value = Fraction(value)
    return {"num": str(value.numerator), "den": str(value.denominator)}


def fraction_from_json(data: dict[str, str]) -> Fraction:
    """Decode the ``{"num", "den"}`` form produced by `fraction_to_json`.

    Args:
        data (dict[str, str]): Mapping with ``num`` and ``den`` digit strings.

    Raises:
        ValueError: If a key is missing, a value is not an integer or the
            denominator is not positive.

    Returns:
        Fraction: The decoded rational.

    """
    try:
        num, den = int(data["num"]), int(data["den"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"Malformed rational {data!r}") from exc
    if den <= 0:
        raise ValueError(f"Rational denominator must be positive, got {den}")
    return Fraction(num, den)
