"""Translate verified functional bounds into derived zero-statistics constants.

Each functional kind carries its conditional hypothesis label, and an upper
bound c on the functional yields affine derived constants:

* Z / ZTilde bound N*(T)/N(T):  simple zeros >= 2 - c, and with the external
  simple-zero input s0 (Bui/Heath-Brown 19/27 by default), distinct zeros
  >= (2 s0 + 5 - c)/6.
* Z1 bounds the xi' multiplicity sum: simple >= 2 - c, distinct >= 3/2 - c/2.
* L bounds the averaged Dirichlet multiplicity sum: simple >= 2 - c.
* P / PTilde: the bound is the pair-correlation threshold itself.

Printed constants are rounded in the direction that keeps them valid (lower
bounds down, upper bounds up).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction

import gmpy2
from gmpy2 import mpfr

from . import hp
from .functionals import Tag
from .rigor import Interval, _ctxs as _rounding_pair

HYPOTHESIS = {
    Tag.Z: "RH",
    Tag.ZTILDE: "GRH",
    Tag.L: "GRH",
    Tag.Z1: "RH",
    Tag.P: "RH+simplicity-conjecture",
    Tag.PTILDE: "GRH+simplicity-conjecture",
}

# External input: proportion of simple zeros from the sieve-theoretic bound,
# feeding the distinct-zeros constant; configurable if it improves.
SIMPLE_ZEROS_INPUT = Fraction(19, 27)


@dataclass
class DerivedConstant:
    name: str
    value: Interval
    formula: str
    direction: str  # "lower" or "upper"
    exact: Fraction | None = None  # set when the input bound was an exact number

    def printed(self, places: int = 4) -> str:
        if self.exact is not None:
            n = _floor_frac(self.exact * 10**places) if self.direction == "lower" else -_floor_frac(
                -self.exact * 10**places
            )
            sign = "-" if n < 0 else ""
            m = abs(n)
            return f"{sign}{m // 10**places}.{m % 10**places:0{places}d}"
        if self.direction == "lower":
            return directed_decimal(self.value.lo, places, "lower")
        return directed_decimal(self.value.hi, places, "upper")


def _floor_frac(q: Fraction) -> int:
    return q.numerator // q.denominator


@dataclass
class BoundReport:
    kind: Tag
    hypothesis: str
    bound: Interval
    derived: list = field(default_factory=list)


def directed_decimal(x, places: int, direction: str) -> str:
    """Fixed-point decimal rounded toward the valid side."""
    x = mpfr(x)
    scale = mpfr(10) ** places
    n = int(gmpy2.floor(x * scale)) if direction == "lower" else int(gmpy2.ceil(x * scale))
    sign = "-" if n < 0 else ""
    m = abs(n)
    return f"{sign}{m // 10**places}.{m % 10**places:0{places}d}"


def _affine(bound: Interval, a: Fraction, b: Fraction) -> Interval:
    """a + b*c as an interval (b < 0 flips endpoints)."""
    prec = bound.prec
    ia = Interval.point(mpfr(a.numerator), prec) / Interval.point(mpfr(a.denominator), prec)
    ib = Interval.point(mpfr(b.numerator), prec) / Interval.point(mpfr(b.denominator), prec)
    return ia + ib * bound


def _as_exact_fraction(bound) -> Fraction | None:
    """Exact rational value of the bound when it is one (decimal string,
    Fraction, integer, or an mpfr, which is a binary rational)."""
    if isinstance(bound, Fraction):
        return bound
    if isinstance(bound, int):
        return Fraction(bound)
    if isinstance(bound, str):
        return Fraction(bound.strip())
    if isinstance(bound, mpfr):
        q = gmpy2.mpq(bound)
        return Fraction(int(q.numerator), int(q.denominator))
    if isinstance(bound, Interval) and bound.lo == bound.hi:
        q = gmpy2.mpq(bound.lo)
        return Fraction(int(q.numerator), int(q.denominator))
    return None


def derive_constants(kind, bound, simple_input: Fraction = SIMPLE_ZEROS_INPUT) -> BoundReport:
    """Derived constants for a verified bound.

    ``bound`` may be an Interval (rigorous pipeline output) or an exact
    number (decimal string, Fraction, mpfr); exact inputs propagate through
    the affine formulas in exact rational arithmetic, so quoted constants
    reproduce to the digit.
    """
    tag = kind if isinstance(kind, Tag) else kind.tag
    exact_c = _as_exact_fraction(bound)
    if not isinstance(bound, Interval):
        if exact_c is None:
            raise TypeError("bound must be an Interval or an exact number")
        prec = hp.current_precision()
        dn, up = _rounding_pair(prec)
        with dn:
            lo = mpfr(exact_c.numerator) / mpfr(exact_c.denominator)
        with up:
            hi = mpfr(exact_c.numerator) / mpfr(exact_c.denominator)
        bound = Interval(lo, hi, prec)

    def affine(name, a, b, formula):
        exact = a + b * exact_c if exact_c is not None else None
        return DerivedConstant(name, _affine(bound, a, b), formula, "lower", exact)

    derived = []
    if tag in (Tag.Z, Tag.ZTILDE):
        derived.append(affine("simple_zero_proportion", Fraction(2), Fraction(-1), "2 - c"))
        a = (2 * simple_input + 5) / 6
        derived.append(
            affine("distinct_zero_proportion", a, Fraction(-1, 6), f"(2*{simple_input} + 5 - c)/6")
        )
    elif tag is Tag.Z1:
        derived.append(affine("xi_prime_simple_proportion", Fraction(2), Fraction(-1), "2 - c"))
        derived.append(
            affine("xi_prime_distinct_proportion", Fraction(3, 2), Fraction(-1, 2), "3/2 - c/2")
        )
    elif tag is Tag.L:
        derived.append(affine("dirichlet_simple_proportion", Fraction(2), Fraction(-1), "2 - c"))
    elif tag in (Tag.P, Tag.PTILDE):
        derived.append(
            DerivedConstant("pair_correlation_threshold", bound, "Lambda", "upper", exact_c)
        )
    else:
        raise ValueError(f"unknown kind {kind!r}")
    return BoundReport(kind=tag, hypothesis=HYPOTHESIS[tag], bound=bound, derived=derived)


def format_report(report: BoundReport, style: str = "text", places: int = 4) -> str:
    lo = hp.to_str(report.bound.lo, 25)
    hi = hp.to_str(report.bound.hi, 25)
    if style == "machine":
        rec = {
            "kind": report.kind.value,
            "hypothesis": report.hypothesis,
            "bound": [lo, hi],
            "derived": [
                {
                    "name": dc.name,
                    "lo": hp.to_str(dc.value.lo, 25),
                    "hi": hp.to_str(dc.value.hi, 25),
                    "printed": dc.printed(places),
                    "formula": dc.formula,
                    "direction": dc.direction,
                }
                for dc in report.derived
            ],
        }
        return json.dumps(rec)
    if style != "text":
        raise ValueError("style must be 'text' or 'machine'")
    lines = [
        f"functional {report.kind.value}  (assuming {report.hypothesis})",
        f"  verified bound: [{lo}, {hi}]",
    ]
    for dc in report.derived:
        rel = "<=" if dc.direction == "upper" else ">="
        lines.append(f"  {dc.name} {rel} {dc.printed(places)}    [{dc.formula}]")
    lines.append(
        "  note: constants are asymptotic leading terms; o(1) and O(delta) corrections vanish in the stated limits"
    )
    return "\n".join(lines)


def _outward(lo_s: str, hi_s: str) -> Interval:
    prec = hp.current_precision()
    dn, up = _rounding_pair(prec)
    with dn:
        lo = mpfr(lo_s)
    with up:
        hi = mpfr(hi_s)
    return Interval(lo, hi, prec)


def parse_machine_report(text: str) -> BoundReport:
    rec = json.loads(text)
    tag = Tag(rec["kind"])
    bound = _outward(*rec["bound"])
    derived = []
    for d in rec["derived"]:
        dc = DerivedConstant(d["name"], _outward(d["lo"], d["hi"]), d["formula"], d["direction"])
        # preserve the printed constant exactly across the round trip
        dc.exact = Fraction(d["printed"])
        derived.append(dc)
    return BoundReport(kind=tag, hypothesis=rec["hypothesis"], bound=bound, derived=derived)
