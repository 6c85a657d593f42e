"""The pair-correlation functionals evaluated on candidate functions.

Six functionals are supported: Z and ZTilde (multiplicity sums), L (averaged
Dirichlet L-function version), Z1 (zeros of xi'), and the threshold
functionals P and PTilde defined through the crossing of p_f / ptilde_f.

Candidates are either Gaussian-weighted polynomials (evaluated exactly via
incomplete-gamma moments) or the two closed-form baselines, the hat function
H(x) = (1-|x|)_+ and Selberg's function, which are integrated numerically
with adaptive quadrature at a 1e-18 target.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import gmpy2
import mpmath
from gmpy2 import mpfr

from . import hp
from .gausspoly import GaussianPoly, evaluate, fourier, monomial_coeffs, weighted_moment_functional


class Tag(enum.Enum):
    Z = "Z"
    ZTILDE = "ZTilde"
    L = "L"
    Z1 = "Z1"
    P = "P"
    PTILDE = "PTilde"


MINIMIZATION_TAGS = (Tag.Z, Tag.ZTILDE, Tag.L, Tag.Z1)
THRESHOLD_TAGS = (Tag.P, Tag.PTILDE)


@dataclass(frozen=True)
class FunctionalKind:
    tag: Tag
    lam: object = None  # threshold parameter, required for P / PTilde

    def __post_init__(self):
        if self.tag in THRESHOLD_TAGS:
            if self.lam is None:
                raise ValueError(f"{self.tag.value} requires lambda")
            if not mpfr(self.lam) > 0:
                raise ValueError("lambda must be > 0")
        elif self.lam is not None:
            raise ValueError(f"{self.tag.value} does not take lambda")

    @property
    def is_minimization(self) -> bool:
        return self.tag in MINIMIZATION_TAGS


@dataclass(frozen=True)
class SeriesTruncation:
    """Truncation of the Z1 series; tail_bound is added as a one-sided margin."""

    K: int = 15
    tail_bound: float = 1e-10

    def __post_init__(self):
        if self.K < 1:
            raise ValueError("K must be >= 1")


@lru_cache(maxsize=None)
def z1_series_coefficient(k: int) -> Fraction:
    """c_k = 2^{2k+1} (k-1)! / (2k)! in the Z1 series."""
    num = Fraction(2) ** (2 * k + 1)
    fact_km1 = 1
    for i in range(2, k):
        fact_km1 *= i
    fact_2k = 1
    for i in range(2, 2 * k + 1):
        fact_2k *= i
    return num * fact_km1 / fact_2k


class Baseline(enum.Enum):
    HAT = "Hat"
    SELBERG = "Selberg"


_QUAD_DPS = 40  # about 1e-18 quadrature target with headroom


def _quad(fn, points) -> mpfr:
    old = mpmath.mp.dps
    mpmath.mp.dps = _QUAD_DPS
    try:
        val = mpmath.quad(fn, points)
    finally:
        mpmath.mp.dps = old
    return mpfr(mpmath.nstr(val, 35, strip_zeros=False))


def _hat(x):
    ax = abs(x)
    return max(1 - ax, mpmath.mpf(0))


def _hat_hat(x):
    if x == 0:
        return mpmath.mpf(1)
    s = mpmath.sinpi(x)
    return (s / (mpmath.pi * x)) ** 2


def _selberg(x):
    ax = abs(x)
    if ax == 0:
        return mpmath.mpf(1)
    if ax == 1:
        return mpmath.mpf(0)
    s = mpmath.sinpi(ax)
    return (s / (mpmath.pi * ax)) ** 2 / (1 - ax * ax)


def _selberg_hat(x):
    ax = abs(x)
    if ax >= 1:
        return mpmath.mpf(0)
    return 1 - ax + mpmath.sin(2 * mpmath.pi * ax) / (2 * mpmath.pi)


_BASELINE_FN = {Baseline.HAT: (_hat, _hat_hat), Baseline.SELBERG: (_selberg, _selberg_hat)}


class _CachedIntegral:
    """Running integral t -> int_0^t g(x) w(x) dx with reuse between calls.

    The crossing scan evaluates p_f on a fine geometric grid; integrating
    incrementally from the nearest cached point keeps that affordable for the
    quadrature-backed baselines.
    """

    def __init__(self, fn, weight_exp: int, breakpoints=()):
        self._fn = fn
        self._w = weight_exp
        self._breaks = tuple(breakpoints)
        self._cache = [(mpfr(0), mpfr(0))]

    def upto(self, t) -> mpfr:
        t = mpfr(t)
        if t < 0:
            raise ValueError("integral cutoff must be >= 0")
        base_t, base_v = max((p for p in self._cache if p[0] <= t), key=lambda p: p[0])
        if base_t == t:
            return base_v
        pts = [base_t] + [mpfr(b) for b in self._breaks if base_t < b < t] + [t]
        fn = self._fn
        w = self._w
        seg = _quad(lambda x: fn(x) * x**w if w else fn(x), [mpmath.mpf(hp.to_str(p, 45)) for p in pts])
        val = base_v + seg
        self._cache.append((t, val))
        return val


class CandidateFunction:
    """A candidate for the functionals: Gaussian polynomial or baseline.

    ``radius`` is the declared last sign change r(f).  For Gaussian
    candidates the Fourier transform is computed once and cached.
    """

    def __init__(self, f, radius, fhat=None, check: bool = True):
        self.radius = mpfr(radius)
        if not self.radius > 0:
            raise ValueError("radius must be positive")
        self.f = f
        if isinstance(f, GaussianPoly):
            self.fhat = fhat if fhat is not None else fourier(f)
            if check:
                self._check_admissible()
        elif isinstance(f, Baseline):
            self.fhat = None
        else:
            raise TypeError("candidate must be a GaussianPoly or Baseline")

    @classmethod
    def from_gaussian(cls, f: GaussianPoly, radius, check: bool = True) -> "CandidateFunction":
        return cls(f, radius, check=check)

    @classmethod
    def hat(cls) -> "CandidateFunction":
        return cls(Baseline.HAT, 1)

    @classmethod
    def selberg(cls) -> "CandidateFunction":
        return cls(Baseline.SELBERG, 1)

    @property
    def is_baseline(self) -> bool:
        return isinstance(self.f, Baseline)

    def _check_admissible(self):
        R = self.radius
        tol = mpfr(2) ** (8 - hp.current_precision() // 2)
        scale = max(abs(self.value(0)), mpfr(1))
        if abs(self.value(R)) > tol * scale:
            raise ValueError("candidate not admissible: f(R) != 0")
        for i in range(1, 65):
            x = R + mpfr(10) * i / 64
            if self.value(x) > tol * scale:
                raise ValueError("candidate not admissible: f > 0 beyond R")
        mono = monomial_coeffs(self.f)
        lead = next((c for c in reversed(mono) if c != 0), mpfr(0))
        if lead > 0:
            raise ValueError("candidate not admissible: positive leading coefficient")
        for i in range(65):
            x = (R + 10) * i / 64
            if self.value_hat(x) < -tol * scale:
                raise ValueError("candidate not admissible: fhat < 0 on sample grid")

    # -- pointwise values ----------------------------------------------------

    def value(self, x) -> mpfr:
        if self.is_baseline:
            fn = _BASELINE_FN[self.f][0]
            return mpfr(mpmath.nstr(fn(mpmath.mpf(hp.to_str(mpfr(x), 40))), 35, strip_zeros=False))
        return evaluate(self.f, x)

    def value_hat(self, x) -> mpfr:
        if self.is_baseline:
            fn = _BASELINE_FN[self.f][1]
            return mpfr(mpmath.nstr(fn(mpmath.mpf(hp.to_str(mpfr(x), 40))), 35, strip_zeros=False))
        return evaluate(self.fhat, x)

    # -- integral kernels ----------------------------------------------------

    def integral_f(self, weight_exp: int, a, b) -> mpfr:
        """int_a^b f(x) x^weight_exp dx."""
        if self.is_baseline:
            fn = _BASELINE_FN[self.f][0]
            pts = [mpmath.mpf(hp.to_str(mpfr(a), 40))]
            for brk in (mpmath.mpf(1),):
                if pts[0] < brk < mpfr(b):
                    pts.append(brk)
            pts.append(mpmath.mpf(hp.to_str(mpfr(b), 40)))
            return _quad(lambda x: fn(x) * x**weight_exp if weight_exp else fn(x), pts)
        weight = [0] * weight_exp + [1]
        return weighted_moment_functional(self.f, weight, (a, b))

    def _fhat_integral(self, weight_exp: int) -> "_CachedIntegral":
        key = f"_fhat_int_{weight_exp}"
        cached = getattr(self, key, None)
        if cached is None:
            fn = _BASELINE_FN[self.f][1]
            cached = _CachedIntegral(fn, weight_exp, breakpoints=(1,))
            setattr(self, key, cached)
        return cached

    def integral_fhat(self, weight_exp: int, a, b) -> mpfr:
        """int_a^b fhat(x) x^weight_exp dx."""
        if self.is_baseline:
            helper = self._fhat_integral(weight_exp)
            return helper.upto(b) - helper.upto(a)
        weight = [0] * weight_exp + [1]
        return weighted_moment_functional(self.fhat, weight, (a, b))

    def f_at_zero(self) -> mpfr:
        return self.value(0)

    def fhat_at_zero(self) -> mpfr:
        if self.is_baseline:
            return mpfr(1)
        return evaluate(self.fhat, 0)


def _normalize(c: CandidateFunction, leading_term: mpfr, rest: mpfr, modified: bool) -> mpfr:
    if not modified or c.is_baseline:
        return leading_term + rest
    f0 = c.f_at_zero()
    fhat0 = c.fhat_at_zero()
    if not fhat0 > 0:
        raise ValueError("normalization degenerate: fhat(0) <= 0")
    return (f0 * leading_term + rest) / fhat0


def eval_Z(c: CandidateFunction, modified: bool = False) -> mpfr:
    """Z(f) = r + (2/r) int_0^r f(x) x dx (modified form rescales by f(0), fhat(0))."""
    r = c.radius
    rest = 2 * c.integral_f(1, 0, r) / r
    return _normalize(c, r, rest, modified)


def eval_ZTilde(c: CandidateFunction, modified: bool = False) -> mpfr:
    r = c.radius
    rest = (
        2 * c.integral_f(1, 0, r) / r
        + 3 * c.integral_f(0, r, 3 * r / 2)
        - 2 * c.integral_f(1, r, 3 * r / 2) / r
    )
    return _normalize(c, r, rest, modified)


def eval_L(c: CandidateFunction, modified: bool = False) -> mpfr:
    r = c.radius
    rest = 4 * c.integral_f(1, 0, r / 2) / r + 2 * c.integral_f(0, r / 2, r)
    return _normalize(c, r / 2, rest, modified)


def eval_Z1(c: CandidateFunction, trunc: SeriesTruncation = SeriesTruncation(), modified: bool = False) -> mpfr:
    r = c.radius
    rest = 2 * c.integral_f(1, 0, r) / r - 8 * c.integral_f(2, 0, r) / (r * r)
    for k in range(1, trunc.K + 1):
        ck = z1_series_coefficient(k)
        coeff = 2 * mpfr(ck.numerator) / ck.denominator / r ** (2 * k + 1)
        rest += coeff * c.integral_f(2 * k + 1, 0, r)
    rest += mpfr(trunc.tail_bound)
    return _normalize(c, r, rest, modified)


def eval_p(c: CandidateFunction, lam) -> mpfr:
    """p_f(lambda) = -1 + lambda/r + (2r/lambda) int_0^{lambda/r} fhat(x) x dx."""
    lam = mpfr(lam)
    if not lam > 0:
        raise ValueError("lambda must be > 0")
    r = c.radius
    t = lam / r
    return -1 + lam / r + 2 * r * c.integral_fhat(1, 0, t) / lam


def eval_p_tilde(c: CandidateFunction, lam) -> mpfr:
    lam = mpfr(lam)
    if not lam > 0:
        raise ValueError("lambda must be > 0")
    r = c.radius
    t = lam / r
    extra = 3 * c.integral_fhat(0, t, 3 * t / 2) - 2 * r * c.integral_fhat(1, t, 3 * t / 2) / lam
    return eval_p(c, lam) + extra


def last_positive_crossing(
    c: CandidateFunction,
    which: Tag = Tag.P,
    tol=1e-6,
    scan_start=0.2,
    scan_ratio=1.01,
    lambda_max=20.0,
) -> mpfr:
    """First lambda with p_f > 0, located by a geometric scan plus bisection.

    p_f need not be monotone, so the scan brackets the first sign change on a
    fine grid and bisection refines it; the reported value lam + tol is a
    valid upper representative of the crossing.
    """
    tol = mpfr(tol)
    if not tol > 0:
        raise ValueError("tol must be positive")
    pfun = eval_p if which is Tag.P else eval_p_tilde
    lo = mpfr(scan_start)
    plo = pfun(c, lo)
    if plo > 0:
        # walk down until negative; p -> -1 as lambda -> 0+
        while plo > 0 and lo > tol:
            lo = lo / 2
            plo = pfun(c, lo)
        if plo > 0:
            raise ValueError("no crossing: p positive down to tolerance scale")
    hi = lo
    ratio = mpfr(scan_ratio)
    while True:
        hi = hi * ratio
        if hi > lambda_max:
            raise ValueError("no crossing found below lambda_max")
        phi = pfun(c, hi)
        if phi > 0:
            break
        lo = hi
    while hi - lo > tol:
        mid = (lo + hi) / 2
        if pfun(c, mid) > 0:
            hi = mid
        else:
            lo = mid
    return lo + tol


_EVALUATORS = {
    Tag.Z: lambda c, trunc: eval_Z(c),
    Tag.ZTILDE: lambda c, trunc: eval_ZTilde(c),
    Tag.L: lambda c, trunc: eval_L(c),
    Tag.Z1: lambda c, trunc: eval_Z1(c, trunc),
}


def evaluate_minimization(tag: Tag, c: CandidateFunction, trunc: SeriesTruncation = SeriesTruncation(), modified: bool = False) -> mpfr:
    if tag not in MINIMIZATION_TAGS:
        raise ValueError(f"{tag.value} is not a minimization functional")
    if tag is Tag.Z1:
        return eval_Z1(c, trunc, modified)
    return {Tag.Z: eval_Z, Tag.ZTILDE: eval_ZTilde, Tag.L: eval_L}[tag](c, modified)
