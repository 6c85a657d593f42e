import random
from fractions import Fraction

import gmpy2
import mpmath
import numpy as np
import pytest
from gmpy2 import mpfr

import zetasdp.hp as hp
from zetasdp.certio import SosCertificate
from zetasdp.functionals import CandidateFunction, FunctionalKind, Tag, eval_Z
from zetasdp.gausspoly import GaussianPoly, partial_moment
from zetasdp.rigor import (
    Interval,
    IntervalMomentTable,
    RigorError,
    check_positive_definite,
    pi_interval,
    residual_coefficients,
    rigorous_functional,
    verify,
)


def iv(x, y=None):
    return Interval.point(mpfr(x)) if y is None else Interval(mpfr(x), mpfr(y))


def contains_fraction(interval, frac):
    lo = Fraction(int(interval.lo * 2**300), 2**300) if False else None
    # compare via high-precision mpfr of the fraction
    with hp.prec(512):
        val = mpfr(frac.numerator) / mpfr(frac.denominator)
    return interval.lo <= val <= interval.hi


def test_interval_contains_exact_rationals(rng):
    for _ in range(200):
        a = Fraction(rng.randint(-999, 999), rng.randint(1, 99))
        b = Fraction(rng.randint(-999, 999), rng.randint(1, 99))
        ia = Interval.from_str(f"{a.numerator}") / Interval.from_str(f"{a.denominator}")
        ib = Interval.from_str(f"{b.numerator}") / Interval.from_str(f"{b.denominator}")
        assert contains_fraction(ia + ib, a + b)
        assert contains_fraction(ia - ib, a - b)
        assert contains_fraction(ia * ib, a * b)
        if b != 0:
            assert contains_fraction(ia / ib, a / b)
        assert contains_fraction(ia**3, a**3)


def test_interval_outward_string_parse():
    x = Interval.from_str("0.1")
    with hp.prec(512):
        tenth = mpfr(1) / 10
    assert x.lo < tenth < x.hi
    assert x.lo < x.hi


def test_interval_division_by_zero_interval():
    with pytest.raises(ZeroDivisionError):
        iv(1) / iv(-1, 1)


def test_interval_exp_erfc_enclose_mpmath():
    # decimal transport costs ~1e-65; the enclosure itself is ~1e-77 wide
    mpmath.mp.dps = 80
    slack = mpmath.mpf("1e-65")
    for v in ("0.3", "1.7", "2.9"):
        x = Interval.from_str(v)
        e = x.exp()
        want = mpmath.exp(mpmath.mpf(v))
        assert mpmath.mpf(hp.to_str(e.lo, 70)) <= want + slack
        assert want <= mpmath.mpf(hp.to_str(e.hi, 70)) + slack
        c = x.erfc()
        want = mpmath.erfc(mpmath.mpf(v))
        assert mpmath.mpf(hp.to_str(c.lo, 70)) <= want + slack
        assert want <= mpmath.mpf(hp.to_str(c.hi, 70)) + slack


def test_interval_moment_table_contains_gamma_values():
    # Independent paths: erfc/exp recurrence enclosure vs incomplete gamma.
    for a in (0, mpfr("0.85"), mpfr("1.6")):
        t = IntervalMomentTable(Interval.point(a), 14)
        for m in range(15):
            v = partial_moment(m, a)
            assert t[m].lo <= v <= t[m].hi
            assert float(t[m].width()) < 1e-60


def test_check_pd_identity():
    M = [[iv(1), iv(0)], [iv(0), iv(1)]]
    ok, bound = check_positive_definite(M)
    assert ok
    assert bound.lo > mpfr("0.99")


def test_check_pd_negative_eigenvalue():
    M = [[iv(1), iv(0)], [iv(0), iv(-1e-30)]]
    ok, bound = check_positive_definite(M)
    assert not ok
    assert bound is None


def test_check_pd_rejects_nonsymmetric():
    M = [[iv(1), iv(0.5)], [iv(0.4), iv(1)]]
    with pytest.raises(RigorError, match="symmetric"):
        check_positive_definite(M)


def test_check_pd_bound_vs_eigensolve_oracle(rng):
    mpmath.mp.dps = 50
    n = 4
    A = [[rng.uniform(-1, 1) for _ in range(n)] for _ in range(n)]
    G = [[sum(A[k][i] * A[k][j] for k in range(n)) + (1e-5 if i == j else 0) for j in range(n)] for i in range(n)]
    lam_min = min(mpmath.eigsy(mpmath.matrix(G), eigvals_only=True))
    M = [[Interval.point(mpfr(G[i][j])) for j in range(n)] for i in range(n)]
    ok, bound = check_positive_definite(M)
    assert ok
    assert float(bound.lo) <= float(lam_min)
    assert float(bound.lo) >= 0.9 * float(lam_min)


def make_exact_certificate(rng, d=2, R="1.31", perturb=None):
    """Certificate with I = 0 up to roundoff, via diagonal triangular projection."""
    from zetasdp.gausspoly import fourier
    from zetasdp.sosmodel import _pair_tables, function_from_gram

    n = d + 1
    A = np.array([[mpfr(rng.uniform(-1, 1)) for _ in range(n)] for _ in range(n)], dtype=object)
    X2 = A @ A.T + np.diag([mpfr("0.3")] * n)
    R = mpfr(R)
    f = function_from_gram(X2, R, d)
    g = fourier(f)
    mono, _, _ = _pair_tables(d, hp.current_precision())
    fam = [(2 * i, list(mono[i][i])) for i in range(n)]
    fam += [(2 * i + 1, [mpfr(0)] + list(mono[i][i][:-1])) for i in range(n)]
    resid = list(g.coeffs)
    coeffs = [mpfr(0)] * len(fam)
    for deg in range(2 * d + 1, -1, -1):
        idx = next(k for k, (lead, _) in enumerate(fam) if lead == deg)
        c = resid[deg] / fam[idx][1][deg]
        coeffs[idx] = c
        for m in range(len(resid)):
            resid[m] -= c * fam[idx][1][m]
    X3 = np.diag([coeffs[i] for i in range(n)]).astype(object)
    X4 = np.diag([coeffs[n + i] for i in range(n)]).astype(object)
    if perturb:
        name, i, j, delta = perturb
        mat = {"X3": X3, "X4": X4}[name]
        mat[i, j] += delta
        if i != j:
            mat[j, i] += delta
    return SosCertificate(
        kind=FunctionalKind(Tag.Z), d=d, R=R, X2=X2, X3=X3, X4=X4,
        monomial_coeffs=list(f.coeffs),
    )


def test_residual_zero_for_exact_certificate(rng):
    cert = make_exact_certificate(rng)
    coeffs = residual_coefficients(cert)
    assert len(coeffs) == 2 * cert.d + 2
    B = max(c.max_abs() for c in coeffs)
    assert float(B) < 1e-60


def test_residual_detects_single_entry_perturbation(rng):
    delta = mpfr("1e-20")
    cert = make_exact_certificate(rng, perturb=("X3", 0, 0, delta))
    coeffs = residual_coefficients(cert)
    # X3[0,0] feeds v_0^2 = 1, so the perturbation lands on the constant
    # coefficient (reported last) with value -delta
    assert coeffs[-1].contains(-delta)
    big = [k for k, c in enumerate(coeffs) if float(c.max_abs()) > 1e-25]
    assert big == [len(coeffs) - 1]


def test_residual_enclosure_nesting(rng):
    cert = make_exact_certificate(rng, perturb=("X4", 1, 1, mpfr("1e-18")))
    with hp.prec(256):
        c256 = residual_coefficients(cert, precision=256)
    with hp.prec(512):
        c512 = residual_coefficients(cert, precision=512)
    for a, b in zip(c256, c512):
        assert a.lo <= b.lo and b.hi <= a.hi


def test_rigorous_functional_matches_float_eval(z4_pipeline):
    cert = z4_pipeline.certificate
    bound = rigorous_functional(cert)
    f = GaussianPoly.from_monomial(cert.monomial_coeffs)
    c = CandidateFunction.from_gaussian(f, cert.R, check=False)
    v = eval_Z(c, modified=True)
    assert bound.lo <= v <= bound.hi
    assert float(bound.width()) < 1e-20
    assert abs(float(bound.mid() - v)) < 1e-15


def test_rigorous_functional_precision_nesting(z4_pipeline):
    cert = z4_pipeline.certificate
    b256 = rigorous_functional(cert, precision=256)
    b320 = rigorous_functional(cert, precision=320)
    assert b256.lo <= b320.lo and b320.hi <= b256.hi


def test_verify_fresh_z_certificate(z4_pipeline):
    rep = verify(z4_pipeline.certificate)
    assert rep.ok and rep.test_passed
    assert float(rep.functional_bound.hi) < 4 / 3
    assert rep.b.lo >= (1 + 2 * rep.d) * rep.B.hi


def test_verify_deterministic(z4_pipeline):
    r1 = verify(z4_pipeline.certificate)
    r2 = verify(z4_pipeline.certificate)
    assert r1.to_json() == r2.to_json()


def test_verify_p_certificate(p4_pipeline):
    rep = verify(p4_pipeline.certificate)
    assert rep.ok and rep.test_passed
    names = [c.name for c in rep.checks]
    assert "f0_le_1" in names and "fhat0_ge_1" in names and "p_at_lambda_positive" in names
    # Lambda is not required to equal P(f); only p_f(Lambda) > 0 is checked
    assert float(rep.functional_bound.hi) == pytest.approx(float(p4_pipeline.value), abs=2e-6)


def test_verify_tampered_eigendirection(z4_pipeline):
    cert = z4_pipeline.certificate
    X3 = cert.X3.copy()
    Xf = X3.astype(float)
    w, V = np.linalg.eigh((Xf + Xf.T) / 2)
    v0 = V[:, 0]
    flip = np.array([[mpfr(2 * w[0] * v0[i] * v0[j]) for j in range(len(v0))] for i in range(len(v0))], dtype=object)
    flip = (flip + flip.T) / 2
    tampered = SosCertificate(
        kind=cert.kind, d=cert.d, R=cert.R, X2=cert.X2, X3=X3 - flip, X4=cert.X4,
        monomial_coeffs=cert.monomial_coeffs,
    )
    rep = verify(tampered)
    assert not rep.pd_ok["X3"]
    assert not rep.ok
    assert "pd_X3" in rep.failing()


def test_soundness_under_perturbation(z4_pipeline, rng):
    # perturbing any single X3/X4 entry by more than (1+2d)B must flip the
    # margin test or positive definiteness
    base = verify(z4_pipeline.certificate)
    assert base.test_passed
    d = base.d
    n = d + 1
    for trial in range(10):
        name = "X3" if trial % 2 == 0 else "X4"
        i = rng.randrange(n)
        j = rng.randrange(n)
        sign = 1 if trial % 4 < 2 else -1
        delta = sign * 4 * base.b.lo  # far above (1+2d)B for a passing cert
        mats = {"X3": z4_pipeline.certificate.X3.copy(), "X4": z4_pipeline.certificate.X4.copy()}
        mats[name][i, j] = mats[name][i, j] + delta
        if i != j:
            mats[name][j, i] = mats[name][j, i] + delta
        cert = SosCertificate(
            kind=z4_pipeline.certificate.kind, d=d, R=z4_pipeline.certificate.R,
            X2=z4_pipeline.certificate.X2, X3=mats["X3"], X4=mats["X4"],
            monomial_coeffs=z4_pipeline.certificate.monomial_coeffs,
        )
        rep = verify(cert)
        assert (not rep.test_passed) or (not rep.pd_ok[name]), f"trial {trial} not rejected"


def test_verify_report_record_shape(z4_pipeline):
    rec = verify(z4_pipeline.certificate).to_record()
    assert rec["kind"] == "Z"
    assert set(rec["pd_ok"]) == {"X2", "X3", "X4"}
    assert isinstance(rec["b"], list) and len(rec["b"]) == 2
    assert rec["ok"] is True
    import json

    json.loads(verify(z4_pipeline.certificate).to_json())
