import json
from fractions import Fraction

import pytest
from gmpy2 import mpfr

from zetasdp.functionals import Tag
from zetasdp.report import (
    HYPOTHESIS,
    BoundReport,
    derive_constants,
    directed_decimal,
    format_report,
    parse_machine_report,
)
from zetasdp.rigor import Interval


def point(x):
    return Interval.from_str(x)


def printed(kind, c, name):
    # exact decimal input, as in the paper's theorem statements
    rep = derive_constants(kind, c)
    return {d.name: d.printed() for d in rep.derived}[name]


def test_paper_corollary_constants():
    assert printed(Tag.Z, "1.3208", "simple_zero_proportion") == "0.6792"
    assert printed(Tag.Z, "1.3208", "distinct_zero_proportion") == "0.8477"
    assert printed(Tag.ZTILDE, "1.3155", "simple_zero_proportion") == "0.6845"
    assert printed(Tag.ZTILDE, "1.3155", "distinct_zero_proportion") == "0.8486"
    assert printed(Tag.Z1, "1.1175", "xi_prime_simple_proportion") == "0.8825"
    assert printed(Tag.Z1, "1.1175", "xi_prime_distinct_proportion") == "0.9412"
    assert printed(Tag.L, "1.0650", "dirichlet_simple_proportion") == "0.9350"


def test_hypothesis_labels():
    assert derive_constants(Tag.Z, point("1.33")).hypothesis == "RH"
    assert derive_constants(Tag.ZTILDE, point("1.33")).hypothesis == "GRH"
    assert derive_constants(Tag.L, point("1.1")).hypothesis == "GRH"
    assert derive_constants(Tag.Z1, point("1.12")).hypothesis == "RH"
    assert derive_constants(Tag.P, point("0.61")).hypothesis == "RH+simplicity-conjecture"
    assert derive_constants(Tag.PTILDE, point("0.58")).hypothesis == "GRH+simplicity-conjecture"


def test_affine_monotone_in_bound():
    # a smaller (better) functional bound improves every derived constant
    strong = derive_constants(Tag.Z, point("1.31"))
    weak = derive_constants(Tag.Z, point("1.33"))
    for s, w in zip(strong.derived, weak.derived):
        assert s.value.lo > w.value.lo


def test_rounding_directions():
    assert directed_decimal(mpfr("0.94125"), 4, "lower") == "0.9412"
    assert directed_decimal(mpfr("0.94125"), 4, "upper") == "0.9413"
    assert directed_decimal(mpfr("-1.23456"), 4, "lower") == "-1.2346"
    assert directed_decimal(mpfr("-1.23456"), 4, "upper") == "-1.2345"


def test_printed_never_more_favorable_than_interval():
    # reparse the printed decimals and compare against the exact endpoints
    rep = derive_constants(Tag.Z, Interval.from_str("1.32081234"))
    for dc in rep.derived:
        shown = mpfr(dc.printed())
        if dc.direction == "lower":
            assert shown <= dc.value.lo
        else:
            assert shown >= dc.value.hi


def test_threshold_kind_reports_bound_itself():
    rep = derive_constants(Tag.P, "0.6063")
    assert len(rep.derived) == 1
    dc = rep.derived[0]
    assert dc.direction == "upper"
    assert dc.printed() == "0.6063"


def test_machine_round_trip():
    rep = derive_constants(Tag.ZTILDE, "1.3155")
    text = format_report(rep, "machine")
    back = parse_machine_report(text)
    assert back.kind is rep.kind
    assert back.hypothesis == rep.hypothesis
    assert back.bound.lo <= rep.bound.lo and rep.bound.hi <= back.bound.hi
    assert [d.name for d in back.derived] == [d.name for d in rep.derived]
    assert [d.printed() for d in back.derived] == [d.printed() for d in rep.derived]


def test_text_report_contents():
    text = format_report(derive_constants(Tag.Z, "1.3208"))
    assert "RH" in text
    assert "0.6792" in text
    assert "0.8477" in text
    assert "o(1)" in text


def test_configurable_simple_input():
    rep = derive_constants(Tag.Z, "1.3208", simple_input=Fraction(7, 10))
    dc = {d.name: d for d in rep.derived}["distinct_zero_proportion"]
    # (2*0.7 + 5 - 1.3208)/6 = 0.84653...
    assert dc.printed() == "0.8465"


def test_bad_style_rejected():
    with pytest.raises(ValueError):
        format_report(derive_constants(Tag.Z, point("1.33")), "yaml")
