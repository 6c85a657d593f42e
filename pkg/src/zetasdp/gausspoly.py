"""Algebra of even Gaussian-weighted polynomials.

Functions are f(x) = p(x) e^{-pi x^2} with p even of degree <= 2d, stored as
coefficient vectors in the variable u = x^2, in one of two bases:

* ``MONOMIAL_X2``: p(x) = sum_k c_k x^{2k}, i.e. q(u) = sum_k c_k u^k
* ``LAGUERRE_HALF``: q(u) = sum_k c_k L_k^{-1/2}(2 pi u)

The Laguerre family times the Gaussian is the complete set of even
eigenfunctions of the Fourier transform (convention
fhat(x) = int f(y) e^{-2 pi i x y} dy), with eigenvalue (-1)^k, which makes
the transform a signed diagonal in that basis.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Sequence

import gmpy2
from gmpy2 import mpfr

from . import hp


class BasisKind(enum.Enum):
    MONOMIAL_X2 = "monomial_x2"
    LAGUERRE_HALF = "laguerre_half"


@dataclass(frozen=True)
class EvenPolyBasis:
    kind: BasisKind
    degree_bound: int

    def __post_init__(self):
        if self.degree_bound < 0:
            raise ValueError("degree_bound must be >= 0")


@dataclass(frozen=True)
class GaussianPoly:
    """p(x) e^{-pi x^2} as coefficients over an EvenPolyBasis."""

    coeffs: tuple
    basis: EvenPolyBasis

    def __post_init__(self):
        if len(self.coeffs) != self.basis.degree_bound + 1:
            raise ValueError("coefficient count must equal degree_bound + 1")

    @property
    def degree_bound(self) -> int:
        return self.basis.degree_bound

    @staticmethod
    def from_monomial(coeffs: Sequence, degree_bound: int | None = None) -> "GaussianPoly":
        cs = [mpfr(c) for c in coeffs]
        d = degree_bound if degree_bound is not None else len(cs) - 1
        cs += [mpfr(0)] * (d + 1 - len(cs))
        return GaussianPoly(tuple(cs), EvenPolyBasis(BasisKind.MONOMIAL_X2, d))


# ----------------------------------------------------------------------------
# Exact rational cores of the change-of-basis and Fourier matrices.
# Entry conventions: a polynomial is a coefficient COLUMN; matrices act on the
# left.  All cores are exact Fractions; powers of pi / 2pi are applied at
# mpfr-conversion time.
# ----------------------------------------------------------------------------


def _binom_half(n: int, j: int) -> Fraction:
    """binom(n - 1/2, j) as an exact rational."""
    num = Fraction(1)
    for i in range(j):
        num *= Fraction(2 * n - 1 - 2 * i, 2)
    fact = 1
    for i in range(2, j + 1):
        fact *= i
    return num / fact


@lru_cache(maxsize=None)
def _factorials(n: int) -> tuple:
    out = [1]
    for i in range(1, n + 1):
        out.append(out[-1] * i)
    return tuple(out)


@lru_cache(maxsize=None)
def _lag_core(nmax: int) -> tuple:
    """core[n][m]: coeff of u^m in L_n^{-1/2}(s u) is core[n][m] * s^m."""
    fact = _factorials(nmax)
    return tuple(
        tuple(
            (Fraction(-1) ** m) * _binom_half(n, n - m) / fact[m] if m <= n else Fraction(0)
            for m in range(nmax + 1)
        )
        for n in range(nmax + 1)
    )


@lru_cache(maxsize=None)
def _mono_core(nmax: int) -> tuple:
    """core[m][k]: coeff of L_k^{-1/2}(s u) in u^m is core[m][k] / s^m."""
    fact = _factorials(nmax)
    return tuple(
        tuple(
            (Fraction(-1) ** k) * _binom_half(m, m - k) * fact[m] if k <= m else Fraction(0)
            for k in range(nmax + 1)
        )
        for m in range(nmax + 1)
    )


@lru_cache(maxsize=None)
def _fourier_core(nmax: int) -> tuple:
    """core[m][k]: coeff of u^m in T(u^k) is core[m][k] * pi^{m-k}.

    T maps x^{2k} to (k!/pi^k) L_k^{-1/2}(pi x^2), the coefficient-level
    Fourier transform on the Gaussian-weighted subspace.
    """
    fact = _factorials(nmax)
    return tuple(
        tuple(
            (Fraction(-1) ** m) * Fraction(fact[k], fact[m]) * _binom_half(k, k - m)
            if m <= k
            else Fraction(0)
            for k in range(nmax + 1)
        )
        for m in range(nmax + 1)
    )


def _frac_to_mpfr(q: Fraction) -> mpfr:
    return mpfr(q.numerator) / mpfr(q.denominator)


@lru_cache(maxsize=None)
def _lag_matrix(nmax: int, prec: int) -> tuple:
    """Numeric matrix: column n = monomial-u coeffs of L_n^{-1/2}(2 pi u)."""
    core = _lag_core(nmax)
    with hp.prec(prec + hp.GUARD_BITS):
        two_pi = 2 * hp.pi()
        pw = [mpfr(1)]
        for _ in range(nmax):
            pw.append(pw[-1] * two_pi)
        return tuple(
            tuple(_frac_to_mpfr(core[n][m]) * pw[m] for n in range(nmax + 1))
            for m in range(nmax + 1)
        )


@lru_cache(maxsize=None)
def _mono_matrix(nmax: int, prec: int) -> tuple:
    """Numeric matrix: column m = Laguerre(2 pi) coeffs of u^m."""
    core = _mono_core(nmax)
    with hp.prec(prec + hp.GUARD_BITS):
        two_pi = 2 * hp.pi()
        pw = [mpfr(1)]
        for _ in range(nmax):
            pw.append(pw[-1] * two_pi)
        return tuple(
            tuple(_frac_to_mpfr(core[m][k]) / pw[m] for m in range(nmax + 1))
            for k in range(nmax + 1)
        )


def _mat_vec(mat: tuple, vec: Sequence) -> list:
    n = len(vec)
    return [sum((mat[r][c] * vec[c] for c in range(n)), mpfr(0)) for r in range(n)]


def monomial_coeffs(f: GaussianPoly) -> list:
    """Coefficients of f's polynomial part in the monomial-in-x^2 basis."""
    if f.basis.kind is BasisKind.MONOMIAL_X2:
        return [mpfr(c) for c in f.coeffs]
    mat = _lag_matrix(f.degree_bound, hp.current_precision())
    return _mat_vec(mat, f.coeffs)


def laguerre_values(n: int, z) -> list:
    """[L_0^{-1/2}(z), ..., L_n^{-1/2}(z)] by the three-term recurrence.

    The recurrence avoids the factorial-ratio closed form, which overflows
    and loses accuracy at large n.
    """
    z = mpfr(z)
    vals = [mpfr(1)]
    if n >= 1:
        vals.append(mpfr("0.5") - z)
    for k in range(1, n):
        # (k+1) L_{k+1} = (2k + 1/2 - z) L_k - (k - 1/2) L_{k-1}
        nxt = ((2 * k + mpfr("0.5") - z) * vals[k] - (k - mpfr("0.5")) * vals[k - 1]) / (k + 1)
        vals.append(nxt)
    return vals[: n + 1]


def evaluate(f: GaussianPoly, x) -> mpfr:
    """f(x) = p(x) e^{-pi x^2}; even in x by construction."""
    x = mpfr(x)
    u = x * x
    if f.basis.kind is BasisKind.MONOMIAL_X2:
        acc = mpfr(0)
        for c in reversed(f.coeffs):
            acc = acc * u + c
    else:
        lag = laguerre_values(f.degree_bound, 2 * hp.pi() * u)
        acc = sum((c * l for c, l in zip(f.coeffs, lag)), mpfr(0))
    return acc * gmpy2.exp(-hp.pi() * u)


def fourier(f: GaussianPoly) -> GaussianPoly:
    """Fourier transform on the subspace: diagonal +-1 in the Laguerre basis."""
    prec = hp.current_precision()
    if f.basis.kind is BasisKind.LAGUERRE_HALF:
        flipped = tuple(c if k % 2 == 0 else -c for k, c in enumerate(f.coeffs))
        return GaussianPoly(flipped, f.basis)
    mono = [mpfr(c) for c in f.coeffs]
    lag = _mat_vec(_mono_matrix(f.degree_bound, prec), mono)
    lag = [c if k % 2 == 0 else -c for k, c in enumerate(lag)]
    back = _mat_vec(_lag_matrix(f.degree_bound, prec), lag)
    return GaussianPoly(tuple(back), f.basis)


def change_basis(f: GaussianPoly, target: EvenPolyBasis) -> GaussianPoly:
    if target.degree_bound < f.degree_bound:
        raise ValueError("target degree too small")
    prec = hp.current_precision()
    coeffs = list(f.coeffs) + [mpfr(0)] * (target.degree_bound - f.degree_bound)
    if f.basis.kind is target.kind:
        return GaussianPoly(tuple(coeffs), target)
    if f.basis.kind is BasisKind.MONOMIAL_X2:
        out = _mat_vec(_mono_matrix(target.degree_bound, prec), coeffs)
    else:
        out = _mat_vec(_lag_matrix(target.degree_bound, prec), coeffs)
    return GaussianPoly(tuple(out), target)


# ----------------------------------------------------------------------------
# Gaussian moments: M_m(a) = int_a^inf x^m e^{-pi x^2} dx
#                          = Gamma((m+1)/2, pi a^2) / (2 pi^{(m+1)/2})
# ----------------------------------------------------------------------------


def partial_moment(m: int, a, precision: int | None = None) -> mpfr:
    """int_a^inf x^m e^{-pi x^2} dx via the upper incomplete gamma function."""
    if m < 0:
        raise ValueError("moment exponent must be >= 0")
    bits = precision if precision is not None else hp.current_precision()
    with hp.prec(bits + hp.GUARD_BITS):
        a = mpfr(a)
        p = hp.pi()
        s = mpfr(m + 1) / 2
        g = gmpy2.gamma_inc(s, p * a * a)
        val = g / (2 * p**s)
    with hp.prec(bits):
        return +val


class MomentTable:
    """Cached partial moments M_0(a) .. M_max(a) at one cutoff a."""

    def __init__(self, a, max_m: int, precision: int | None = None):
        bits = precision if precision is not None else hp.current_precision()
        self.precision = bits
        self.a = mpfr(a)
        with hp.prec(bits + hp.GUARD_BITS):
            # Upward recurrence M_m = a^{m-1} e^{-pi a^2}/(2 pi) + (m-1)/(2 pi) M_{m-2}
            # seeded by the erfc and exponential closed forms.
            p = hp.pi()
            ea = gmpy2.exp(-p * self.a * self.a)
            vals = [gmpy2.erfc(gmpy2.sqrt(p) * self.a) / 2, ea / (2 * p)]
            apow = self.a  # a^{m-1} for m = 2
            for m in range(2, max_m + 1):
                vals.append(apow * ea / (2 * p) + (m - 1) * vals[m - 2] / (2 * p))
                apow *= self.a
            with hp.prec(bits):
                self.values = tuple(+v for v in vals)

    def __getitem__(self, m: int) -> mpfr:
        return self.values[m]


def weighted_moment_functional(f: GaussianPoly, weight: Sequence, interval) -> mpfr:
    """int_a^b f(x) w(x) dx for a polynomial weight w given by x-coefficients.

    b may be None or inf for the half line.  Exact in terms of partial
    moments: every term is c_k w_j (M_{2k+j}(a) - M_{2k+j}(b)).
    """
    a, b = interval
    a = mpfr(a)
    unbounded = b is None or (isinstance(b, float) and b == float("inf")) or (
        not isinstance(b, float) and not isinstance(b, str) and gmpy2.is_infinite(mpfr(b))
    )
    if not unbounded and not mpfr(b) > a:
        raise ValueError("invalid interval: need a < b")
    mono = monomial_coeffs(f)
    max_m = 2 * (len(mono) - 1) + (len(weight) - 1)
    ta = MomentTable(a, max_m)
    tb = None if unbounded else MomentTable(mpfr(b), max_m)
    total = mpfr(0)
    for j, w in enumerate(weight):
        w = mpfr(w)
        if w == 0:
            continue
        for k, c in enumerate(mono):
            if c == 0:
                continue
            m = 2 * k + j
            seg = ta[m] - (tb[m] if tb is not None else mpfr(0))
            total += c * w * seg
    return total
