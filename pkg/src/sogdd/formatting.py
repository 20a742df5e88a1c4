"""Stable number formatting for CSV and console output."""


def fmt(value) -> str:
    """Nine significant digits; floats always carry a decimal point or exponent."""
    if isinstance(value, (int,)) and not isinstance(value, bool):
        return str(value)
    s = format(float(value), ".9g")
    if s in ("nan", "inf", "-inf"):
        return s
    if "." not in s and "e" not in s:
        s += ".0"
    return s
