"""Interval-arithmetic verification of certificates.

Everything here computes with rigorous enclosures: outward-rounded interval
arithmetic on MPFR endpoints (correctly rounded transcendentals give sharp
enclosures of exp/erfc, hence of the incomplete-gamma moments).  A
certificate passes when

* X2, X3, X4 are verified positive definite (validated Cholesky),
* the coupling residual I(0, X2, X3, X4), expanded in the graded family of
  diagonal and upper-diagonal entries of (R^2 - x^2) v(x^2) v(x^2)^T (plus a
  constant completing the degree-0 direction), has all coefficients below
  b / (1 + 2d) where b lower-bounds the X3/X4 eigenvalues,

after which the modified functional value (normalized by the true fhat(0))
is a valid bound, evaluated here as an interval.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache

import gmpy2
from gmpy2 import mpfr

from . import hp
from .certio import SosCertificate
from .functionals import MINIMIZATION_TAGS, THRESHOLD_TAGS, SeriesTruncation, Tag, z1_series_coefficient
from .gausspoly import _lag_core, _fourier_core


class RigorError(ValueError):
    pass


@lru_cache(maxsize=None)
def _ctxs(prec: int):
    dn = gmpy2.context(precision=prec, round=gmpy2.RoundDown)
    up = gmpy2.context(precision=prec, round=gmpy2.RoundUp)
    return dn, up


class Interval:
    """Closed interval [lo, hi] with outward-rounded arithmetic."""

    __slots__ = ("lo", "hi", "prec")

    def __init__(self, lo, hi=None, prec=None):
        if isinstance(lo, str) or isinstance(hi, str):
            raise TypeError("use Interval.from_str for decimal strings (outward parse)")
        self.prec = prec or hp.current_precision()
        dn, up = _ctxs(self.prec)
        self.lo = dn.add(mpfr(lo), mpfr(0))
        self.hi = up.add(mpfr(hi if hi is not None else lo), mpfr(0))
        if gmpy2.is_nan(self.lo) or gmpy2.is_nan(self.hi):
            raise RigorError("nan endpoint")
        if self.lo > self.hi:
            raise RigorError("inverted interval")

    @classmethod
    def point(cls, x, prec=None):
        return cls(x, x, prec)

    @classmethod
    def from_str(cls, s, prec=None):
        prec = prec or hp.current_precision()
        dn, up = _ctxs(prec)
        with dn:
            lo = mpfr(s)
        with up:
            hi = mpfr(s)
        return cls(lo, hi, prec)

    def _coerce(self, other) -> "Interval":
        if isinstance(other, Interval):
            return other
        return Interval.point(other, self.prec)

    def __repr__(self):
        return f"[{hp.to_str(self.lo, 25)}, {hp.to_str(self.hi, 25)}]"

    def __add__(self, other):
        o = self._coerce(other)
        dn, up = _ctxs(self.prec)
        return Interval(dn.add(self.lo, o.lo), up.add(self.hi, o.hi), self.prec)

    __radd__ = __add__

    def __neg__(self):
        return Interval(-self.hi, -self.lo, self.prec)

    def __sub__(self, other):
        o = self._coerce(other)
        dn, up = _ctxs(self.prec)
        return Interval(dn.sub(self.lo, o.hi), up.sub(self.hi, o.lo), self.prec)

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        o = self._coerce(other)
        dn, up = _ctxs(self.prec)
        cands_lo = (dn.mul(self.lo, o.lo), dn.mul(self.lo, o.hi), dn.mul(self.hi, o.lo), dn.mul(self.hi, o.hi))
        cands_hi = (up.mul(self.lo, o.lo), up.mul(self.lo, o.hi), up.mul(self.hi, o.lo), up.mul(self.hi, o.hi))
        return Interval(min(cands_lo), max(cands_hi), self.prec)

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = self._coerce(other)
        if o.lo <= 0 <= o.hi:
            raise ZeroDivisionError("interval division by zero-containing interval")
        dn, up = _ctxs(self.prec)
        cands_lo = (dn.div(self.lo, o.lo), dn.div(self.lo, o.hi), dn.div(self.hi, o.lo), dn.div(self.hi, o.hi))
        cands_hi = (up.div(self.lo, o.lo), up.div(self.lo, o.hi), up.div(self.hi, o.lo), up.div(self.hi, o.hi))
        return Interval(min(cands_lo), max(cands_hi), self.prec)

    def __rtruediv__(self, other):
        return self._coerce(other) / self

    def __pow__(self, n: int):
        if not isinstance(n, int) or n < 0:
            raise ValueError("integer power only")
        out = Interval.point(1, self.prec)
        base = self
        k = n
        while k:
            if k & 1:
                out = out * base
            base = base * base
            k >>= 1
        return out

    def __abs__(self):
        if self.lo >= 0:
            return self
        if self.hi <= 0:
            return -self
        return Interval(0, max(-self.lo, self.hi), self.prec)

    def sqrt(self):
        if self.lo < 0:
            raise RigorError("sqrt of interval reaching below zero")
        dn, up = _ctxs(self.prec)
        return Interval(dn.sqrt(self.lo), up.sqrt(self.hi), self.prec)

    def exp(self):
        dn, up = _ctxs(self.prec)
        return Interval(dn.exp(self.lo), up.exp(self.hi), self.prec)

    def erfc(self):
        dn, up = _ctxs(self.prec)
        return Interval(dn.erfc(self.hi), up.erfc(self.lo), self.prec)

    def mid(self) -> mpfr:
        return (self.lo + self.hi) / 2

    def width(self) -> mpfr:
        _, up = _ctxs(self.prec)
        return up.sub(self.hi, self.lo)

    def contains(self, x) -> bool:
        if isinstance(x, Interval):
            return self.lo <= x.lo and x.hi <= self.hi
        return self.lo <= mpfr(x) <= self.hi

    def is_positive(self) -> bool:
        return self.lo > 0

    def max_abs(self) -> mpfr:
        return max(abs(self.lo), abs(self.hi))


def pi_interval(prec=None) -> Interval:
    prec = prec or hp.current_precision()
    dn, up = _ctxs(prec)
    return Interval(dn.const_pi(), up.const_pi(), prec)


def _frac(q) -> Interval:
    return Interval.point(mpfr(q.numerator), None) / Interval.point(mpfr(q.denominator))


# -- interval Gaussian moments ---------------------------------------------------


class IntervalMomentTable:
    """Enclosures of M_m(a) = int_a^inf x^m e^{-pi x^2} dx.

    Seeded by erfc and exp (correctly rounded by MPFR, so the seeds carry
    rigorous truncation control), then the integration-by-parts recurrence
    M_m = a^{m-1} e^{-pi a^2}/(2 pi) + (m-1)/(2 pi) M_{m-2}.
    """

    def __init__(self, a: Interval, max_m: int, prec=None):
        prec = prec or hp.current_precision()
        if a.lo < 0:
            raise RigorError("moment cutoff must be >= 0")
        pi = pi_interval(prec)
        ea = (-(pi * a * a)).exp()
        inv2pi = Interval.point(1, prec) / (pi * 2)
        vals = [
            (pi.sqrt() * a).erfc() * Interval.point(mpfr("0.5"), prec),
            ea * inv2pi,
        ]
        apow = a
        for m in range(2, max_m + 1):
            vals.append(apow * ea * inv2pi + vals[m - 2] * (m - 1) * inv2pi)
            apow = apow * a
        self.values = vals[: max_m + 1]

    def __getitem__(self, m: int) -> Interval:
        return self.values[m]


# -- interval polynomial helpers (coefficient vectors in u = x^2) ----------------


@lru_cache(maxsize=8)
def _iv_lag_columns(d: int, prec: int):
    """Interval monomial-u coefficients of L_n^{-1/2}(2 pi u), n = 0..d."""
    core = _lag_core(d)
    two_pi = pi_interval(prec) * 2
    pw = [Interval.point(1, prec)]
    for _ in range(d):
        pw.append(pw[-1] * two_pi)
    return tuple(
        tuple(_frac(core[n][m]) * pw[m] for m in range(n + 1)) for n in range(d + 1)
    )


@lru_cache(maxsize=8)
def _iv_fourier_matrix(size: int, prec: int):
    """Interval matrix of the Fourier operator on u-monomial coefficients."""
    core = _fourier_core(size - 1)
    pi = pi_interval(prec)
    pos = [Interval.point(1, prec)]
    for _ in range(size - 1):
        pos.append(pos[-1] * pi)
    rows = []
    for m in range(size):
        row = []
        for k in range(size):
            if core[m][k] == 0:
                row.append(None)
            else:
                val = _frac(core[m][k])
                # pi^{m-k}: k >= m always holds for nonzero entries
                val = val / pos[k - m] if k >= m else val * pos[m - k]
                row.append(val)
        rows.append(row)
    return rows


def _iv_zero(prec):
    return Interval.point(0, prec)


def _poly_mul(a, b, prec):
    out = [_iv_zero(prec) for _ in range(len(a) + len(b) - 1)]
    for i, ai in enumerate(a):
        for j, bj in enumerate(b):
            out[i + j] = out[i + j] + ai * bj
    return out


def _apply_fourier(coeffs, prec):
    size = len(coeffs)
    mat = _iv_fourier_matrix(size, prec)
    out = []
    for m in range(size):
        acc = _iv_zero(prec)
        for k in range(m, size):
            if mat[m][k] is not None:
                acc = acc + mat[m][k] * coeffs[k]
        out.append(acc)
    return out


@lru_cache(maxsize=8)
def _iv_pair_products(d: int, prec: int):
    cols = _iv_lag_columns(d, prec)
    out = {}
    for i in range(d + 1):
        for j in range(i, d + 1):
            out[(i, j)] = tuple(_poly_mul(list(cols[i]), list(cols[j]), prec))
    return out


def _gram_polynomial(X, d, prec, pairs):
    """Interval coefficients of v(u)^T X v(u) (degree 2d)."""
    n = d + 1
    out = [_iv_zero(prec) for _ in range(2 * d + 1)]
    for i in range(n):
        for j in range(i, n):
            xij = X[i, j]
            w = Interval.point(xij, prec) * (1 if i == j else 2)
            prod = pairs[(i, j)]
            for m, cm in enumerate(prod):
                out[m] = out[m] + w * cm
    return out


# -- validated linear algebra -----------------------------------------------------


def check_positive_definite(M, bisect_steps: int = 20):
    """(is PD for every matrix in the enclosure, rigorous eigenvalue lower bound).

    Validated Cholesky with a diagonal shift refined by bisection: success of
    the interval factorization of M - sI proves every contained matrix has
    smallest eigenvalue > s.
    """
    n = len(M)
    prec = M[0][0].prec
    for i in range(n):
        for j in range(n):
            if M[i][j].lo != M[j][i].lo or M[i][j].hi != M[j][i].hi:
                raise RigorError("non-symmetric interval matrix")

    def chol_ok(shift) -> bool:
        L = [[_iv_zero(prec) for _ in range(n)] for _ in range(n)]
        for i in range(n):
            for j in range(i + 1):
                s = M[i][j] - (shift if i == j else 0)
                for k in range(j):
                    s = s - L[i][k] * L[j][k]
                if i == j:
                    if not s.is_positive():
                        return False
                    L[i][i] = s.sqrt()
                else:
                    L[i][j] = s / L[j][j]
        return True

    if not chol_ok(Interval.point(0, prec)):
        return False, None
    hi = min(M[i][i].hi for i in range(n))
    lo_s, hi_s = mpfr(0), hi
    for _ in range(bisect_steps):
        mid = (lo_s + hi_s) / 2
        if chol_ok(Interval.point(mid, prec)):
            lo_s = mid
        else:
            hi_s = mid
    return True, Interval.point(lo_s, prec)


# -- residual expansion ------------------------------------------------------------


def _certificate_polynomials(cert: SosCertificate, prec: int):
    """Interval data: fpart = (R^2-u) s2, its transform, and s3 + u s4."""
    d = cert.d
    pairs = _iv_pair_products(d, prec)
    R = Interval.point(cert.R, prec)
    R2 = R * R
    size = 2 * d + 2
    s2 = _gram_polynomial(cert.X2, d, prec, pairs)
    fpart = [_iv_zero(prec) for _ in range(size)]
    for m, cm in enumerate(s2):
        fpart[m] = fpart[m] + R2 * cm
        fpart[m + 1] = fpart[m + 1] - cm
    tf = _apply_fourier(fpart, prec)
    s3 = _gram_polynomial(cert.X3, d, prec, pairs)
    s4 = _gram_polynomial(cert.X4, d, prec, pairs)
    rhs = [_iv_zero(prec) for _ in range(size)]
    for m, cm in enumerate(s3):
        rhs[m] = rhs[m] + cm
    for m, cm in enumerate(s4):
        rhs[m + 1] = rhs[m + 1] + cm
    return fpart, tf, rhs, R2


def residual_coefficients(cert: SosCertificate, precision: int | None = None):
    """Coefficients of I(0, X2, X3, X4) in the stated graded spanning family.

    The family is the 2d+1 diagonal and upper-diagonal entries of
    (R^2 - u) v(u) v(u)^T, ordered by leading degree, completed by the
    constant 1 (the family spans only polynomials vanishing at u = R^2; the
    constant absorbs the degree-0 leftover and is reported as the final
    coefficient).  Solved by a validated triangular elimination.
    """
    prec = precision or hp.current_precision()
    d = cert.d
    _, tf, rhs, R2 = _certificate_polynomials(cert, prec)
    size = 2 * d + 2
    resid = [tf[m] - rhs[m] for m in range(size)]
    pairs = _iv_pair_products(d, prec)

    def family_vector(i, j):
        prod = pairs[(i, j)]
        vec = [_iv_zero(prec) for _ in range(size)]
        for m, cm in enumerate(prod):
            vec[m] = vec[m] + R2 * cm
            if m + 1 < size:
                vec[m + 1] = vec[m + 1] - cm
        return vec

    # leading degree 2i+1 for diagonal (i,i), 2i+2 for off-diagonal (i,i+1)
    family = []
    for i in range(d + 1):
        family.append((2 * i + 1, ("diag", i), family_vector(i, i)))
    for i in range(d):
        family.append((2 * i + 2, ("upper", i), family_vector(i, i + 1)))
    family.sort(key=lambda t: -t[0])

    coeffs = {}
    for lead, key, vec in family:
        pivot = vec[lead]
        if pivot.contains(0):
            raise RigorError("residual not representable; increase precision")
        c = resid[lead] / pivot
        coeffs[key] = c
        for m in range(lead + 1):
            resid[m] = resid[m] - c * vec[m]
    constant = resid[0]
    ordered = [coeffs[("diag", i)] for i in range(d + 1)]
    ordered += [coeffs[("upper", i)] for i in range(d)]
    ordered.append(constant)
    return ordered


# -- rigorous functionals -----------------------------------------------------------


def _interval_integral(coeffs, weight_exp, a: Interval, b: Interval | None, prec):
    """int_a^b (sum c_m u^m) e^{-pi x^2} x^w dx from interval moment tables."""
    max_m = 2 * (len(coeffs) - 1) + weight_exp
    ta = IntervalMomentTable(a, max_m, prec)
    tb = IntervalMomentTable(b, max_m, prec) if b is not None else None
    total = _iv_zero(prec)
    for m, cm in enumerate(coeffs):
        seg = ta[2 * m + weight_exp]
        if tb is not None:
            seg = seg - tb[2 * m + weight_exp]
        total = total + cm * seg
    return total


def z1_tail_bound(K: int, R: Interval, f_sup: Interval, prec=None) -> mpfr:
    """Rigorous upper bound on the dropped Z1 series tail.

    |term_k| <= 2 c_k ||f||_inf R / (2k+2); the term ratio is below
    4k/((2k+1)(2k+4)) < 1/8 for k > K >= 8, leaving a geometric remainder.
    """
    if K < 5:
        raise ValueError("tail bound derivation needs K >= 5")
    prec = prec or hp.current_precision()
    k = K + 1
    ck = _frac(z1_series_coefficient(k))
    term = ck * 2 * f_sup * R / (2 * k + 2)
    ratio = Interval.point(mpfr(1), prec) / 8
    total = term / (Interval.point(1, prec) - ratio)
    return total.hi


def rigorous_functional(
    cert: SosCertificate,
    trunc: SeriesTruncation = SeriesTruncation(),
    precision: int | None = None,
) -> Interval:
    """Interval enclosure of the modified functional of the certificate's f.

    The modified form multiplies the leading r(f) term by f(0) and divides by
    the true fhat(0) (computed from X2 through the Fourier operator), so the
    approximate normalizations of the numerical solution cannot invalidate
    the bound.
    """
    prec = precision or hp.current_precision()
    tag = cert.kind.tag
    fpart, tf, _, _ = _certificate_polynomials(cert, prec)
    R = Interval.point(cert.R, prec)
    f0 = fpart[0]
    fhat0 = tf[0]
    if not fhat0.is_positive():
        raise RigorError("normalization degenerate: fhat(0) not verified positive")
    zero = Interval.point(0, prec)
    if tag is Tag.Z:
        lead = f0 * R
        rest = _interval_integral(fpart, 1, zero, R, prec) * 2 / R
    elif tag is Tag.ZTILDE:
        lead = f0 * R
        R32 = R * 3 / 2
        rest = (
            _interval_integral(fpart, 1, zero, R, prec) * 2 / R
            + _interval_integral(fpart, 0, R, R32, prec) * 3
            - _interval_integral(fpart, 1, R, R32, prec) * 2 / R
        )
    elif tag is Tag.L:
        lead = f0 * R / 2
        Rh = R / 2
        rest = (
            _interval_integral(fpart, 1, zero, Rh, prec) * 4 / R
            + _interval_integral(fpart, 0, Rh, R, prec) * 2
        )
    elif tag is Tag.Z1:
        lead = f0 * R
        rest = (
            _interval_integral(fpart, 1, zero, R, prec) * 2 / R
            - _interval_integral(fpart, 2, zero, R, prec) * 8 / (R * R)
        )
        for k in range(1, trunc.K + 1):
            ck = _frac(z1_series_coefficient(k))
            rest = rest + ck * 2 / R ** (2 * k + 1) * _interval_integral(
                fpart, 2 * k + 1, zero, R, prec
            )
        rest = rest + Interval(0, mpfr(trunc.tail_bound), prec)
    else:
        raise ValueError("rigorous_functional needs a minimization kind")
    return (lead + rest) / fhat0


def rigorous_p_value(cert: SosCertificate, precision: int | None = None) -> Interval:
    """Enclosure of p_f(Lambda) using the true transform of the certificate f."""
    prec = precision or hp.current_precision()
    _, tf, _, _ = _certificate_polynomials(cert, prec)
    R = Interval.point(cert.R, prec)
    lam = Interval.point(cert.lam, prec)
    t = lam / R
    zero = Interval.point(0, prec)
    p = Interval.point(-1, prec) + lam / R + _interval_integral(tf, 1, zero, t, prec) * 2 * R / lam
    if cert.kind.tag is Tag.PTILDE:
        t32 = t * 3 / 2
        p = p + _interval_integral(tf, 0, t, t32, prec) * 3
        p = p - _interval_integral(tf, 1, t, t32, prec) * 2 * R / lam
    return p


# -- the full verification procedure -------------------------------------------------


@dataclass
class NamedCheck:
    name: str
    passed: bool
    detail: str = ""


@dataclass
class VerificationReport:
    kind: Tag
    d: int
    pd_ok: dict
    b: Interval | None
    B: Interval | None
    test_passed: bool
    functional_bound: Interval | None
    checks: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)

    def failing(self) -> list:
        return [c.name for c in self.checks if not c.passed]

    def to_record(self) -> dict:
        def ivs(iv):
            return None if iv is None else [hp.to_str(iv.lo, 40), hp.to_str(iv.hi, 40)]

        return {
            "kind": self.kind.value,
            "d": self.d,
            "pd_ok": dict(self.pd_ok),
            "b": ivs(self.b),
            "B": ivs(self.B),
            "test_passed": self.test_passed,
            "functional_bound": ivs(self.functional_bound),
            "checks": [{"name": c.name, "passed": c.passed, "detail": c.detail} for c in self.checks],
            "ok": self.ok,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_record(), indent=2)


def verify(
    cert: SosCertificate,
    trunc: SeriesTruncation = SeriesTruncation(),
    precision: int | None = None,
) -> VerificationReport:
    """Run the full verification; failures are reported, never thrown."""
    prec = precision or hp.current_precision()
    with hp.prec(prec):
        d = cert.d
        checks = []
        pd_ok = {}
        bounds = {}
        for name in ("X2", "X3", "X4"):
            mat = getattr(cert, name)
            ivmat = [[Interval.point(mat[i, j], prec) for j in range(d + 1)] for i in range(d + 1)]
            ok, bnd = check_positive_definite(ivmat)
            pd_ok[name] = ok
            bounds[name] = bnd
            checks.append(NamedCheck(f"pd_{name}", ok, "validated Cholesky"))
        b = None
        if pd_ok["X3"] and pd_ok["X4"]:
            b = Interval.point(min(bounds["X3"].lo, bounds["X4"].lo), prec)
        B = None
        test_passed = False
        if all(pd_ok.values()):
            try:
                coeffs = residual_coefficients(cert, prec)
                B = Interval.point(max(c.max_abs() for c in coeffs), prec)
                checks.append(NamedCheck("residual_representable", True, f"{len(coeffs)} coefficients"))
                test_passed = bool(b is not None and b.lo >= (1 + 2 * d) * B.hi)
                checks.append(
                    NamedCheck(
                        "eigenvalue_margin",
                        test_passed,
                        f"b={hp.to_str(b.lo, 10)} vs (1+2d)B={hp.to_str((1 + 2 * d) * B.hi, 10)}",
                    )
                )
            except RigorError as exc:
                checks.append(NamedCheck("residual_representable", False, str(exc)))
        functional_bound = None
        if cert.kind.tag in MINIMIZATION_TAGS:
            if all(pd_ok.values()):
                try:
                    functional_bound = rigorous_functional(cert, trunc, prec)
                    checks.append(NamedCheck("normalization_positive", True))
                except (RigorError, ZeroDivisionError) as exc:
                    checks.append(NamedCheck("normalization_positive", False, str(exc)))
                if cert.kind.tag is Tag.Z1 and functional_bound is not None:
                    fpart, _, _, _ = _certificate_polynomials(cert, prec)
                    tail = z1_tail_bound(trunc.K, Interval.point(cert.R, prec), abs(fpart[0]), prec)
                    checks.append(
                        NamedCheck(
                            "z1_tail_within_margin",
                            tail <= mpfr(trunc.tail_bound),
                            f"rigorous tail {hp.to_str(tail, 8)} vs margin {trunc.tail_bound}",
                        )
                    )
        else:
            if all(pd_ok.values()):
                fpart, tf, _, _ = _certificate_polynomials(cert, prec)
                f0 = fpart[0]
                fhat0 = tf[0]
                checks.append(NamedCheck("f0_le_1", f0.hi <= 1, f"f(0) in {f0!r}"))
                checks.append(NamedCheck("fhat0_ge_1", fhat0.lo >= 1, f"fhat(0) in {fhat0!r}"))
                try:
                    pval = rigorous_p_value(cert, prec)
                    checks.append(
                        NamedCheck("p_at_lambda_positive", pval.lo > 0, f"p_f(Lambda) in {pval!r}")
                    )
                except (RigorError, ZeroDivisionError) as exc:
                    checks.append(NamedCheck("p_at_lambda_positive", False, str(exc)))
                functional_bound = Interval.point(cert.lam, prec)
        return VerificationReport(
            kind=cert.kind.tag,
            d=d,
            pd_ok=pd_ok,
            b=b,
            B=B,
            test_passed=test_passed,
            functional_bound=functional_bound,
            checks=checks,
        )
