"""High-precision scalar helpers on top of gmpy2/MPFR.

All heavy numerics in this package run on gmpy2.mpfr scalars.  Precision is
controlled through gmpy2 contexts; public entry points wrap their work in
``with prec(bits):`` and everything below inherits the ambient context.
"""

from __future__ import annotations

import gmpy2
from gmpy2 import mpfr

DEFAULT_PRECISION = 256

# Guard bits added on top of the requested precision for internal kernels so
# that results are accurate to the caller's precision.
GUARD_BITS = 16


def prec(bits: int):
    """Context manager setting the working precision in bits."""
    return gmpy2.context(precision=bits)


def prec_down(bits: int):
    """Context rounding every operation toward -inf (interval lower bounds)."""
    return gmpy2.context(precision=bits, round=gmpy2.RoundDown)


def prec_up(bits: int):
    """Context rounding every operation toward +inf (interval upper bounds)."""
    return gmpy2.context(precision=bits, round=gmpy2.RoundUp)


def current_precision() -> int:
    return gmpy2.get_context().precision


def pi() -> mpfr:
    return gmpy2.const_pi()


def to_str(x, sig_digits: int) -> str:
    """Decimal scientific string with ``sig_digits`` significant digits.

    Round-trips bit-exactly through ``mpfr()`` when sig_digits covers the
    binary precision (about 0.302 digits per bit, plus one).
    """
    x = mpfr(x)
    if gmpy2.is_nan(x):
        return "nan"
    if gmpy2.is_infinite(x):
        return "inf" if x > 0 else "-inf"
    if x == 0:
        return "0"
    digits, exp10, _ = x.digits(10, sig_digits)
    sign = "-" if digits.startswith("-") else ""
    digits = digits.lstrip("-")
    return f"{sign}0.{digits}e{exp10}"


def roundtrip_digits(bits: int) -> int:
    """Significant decimal digits needed to reparse a ``bits``-bit mpfr exactly."""
    return int(bits * 0.30103) + 2


def floor_div_pow10(x, k: int) -> mpfr:
    """Largest multiple of 10^-k that is <= x (directed decimal rounding)."""
    scale = mpfr(10) ** k
    return gmpy2.floor(mpfr(x) * scale) / scale


def ceil_div_pow10(x, k: int) -> mpfr:
    """Smallest multiple of 10^-k that is >= x."""
    scale = mpfr(10) ** k
    return gmpy2.ceil(mpfr(x) * scale) / scale


def fixed_str(x, places: int) -> str:
    """Plain fixed-point string with ``places`` digits after the point."""
    x = mpfr(x)
    sign = "-" if x < 0 else ""
    x = abs(x)
    scale = mpfr(10) ** places
    n = int(gmpy2.floor(x * scale + mpfr("0.5")))
    whole, frac = divmod(n, 10**places)
    return f"{sign}{whole}.{frac:0{places}d}" if places > 0 else f"{sign}{whole}"
