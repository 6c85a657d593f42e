"""Sum-of-squares modeling of the functional minimization problems.

A candidate with last sign change R is parameterized by PSD matrices
X2, X3, X4 of size d+1 through

    f(x)    = (R^2 - x^2) v(x^2)^T X2 v(x^2) e^{-pi x^2}
    fhat(x) = (s3(x^2) + x^2 s4(x^2)) e^{-pi x^2},   s_i = v^T X_i v

where v(u) = (L_0^{-1/2}(2 pi u), ..., L_d^{-1/2}(2 pi u)).  The Fourier
operator is diagonal in that Laguerre family, so the coupling identity

    I(X2, X3, X4) = T((R^2 - u) s2) - s3 - u s4 = 0

is enforced coefficient-by-coefficient in the Laguerre basis (u-degrees 0
through 2d+1, hence 2d+2 equality rows).  An optional X1 block restores the
general form f = -(s1 + (u - R^2) s2) e^{-pi x^2} together with an explicit
f(R) = 0 row.

Builders return rows keyed by block NAME; ``assemble`` resolves names to
block indices for the solver.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from gmpy2 import mpfr

from . import hp
from .functionals import MINIMIZATION_TAGS, THRESHOLD_TAGS, SeriesTruncation, Tag, z1_series_coefficient
from .gausspoly import GaussianPoly, MomentTable, _lag_matrix, _mono_matrix, laguerre_values
from .sdpcore import ConstraintRow, LinearConstraintSet, Mode, SdpProblem

P_PERTURBATION = "1e-10"


@dataclass(frozen=True)
class SosParameterization:
    d: int
    R: object
    drop_X1: bool = True

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("d must be >= 1")
        if not mpfr(self.R) > 0:
            raise ValueError("R must be positive")

    @property
    def block_names(self) -> tuple:
        names = () if self.drop_X1 else ("X1",)
        return names + ("X2", "X3", "X4")


@lru_cache(maxsize=8)
def _pair_tables(d: int, prec: int):
    """Monomial and Laguerre coefficient tables of the products v_i v_j.

    Returns (mono, lag3, lag4): mono[i][j] has the u-monomial coefficients of
    v_i v_j (length 2d+2, padded), lag3[i][j] the Laguerre(2 pi) coefficients
    of v_i v_j, lag4[i][j] those of u * v_i v_j.
    """
    with hp.prec(prec + hp.GUARD_BITS):
        lagm = _lag_matrix(d, prec)  # [m][n] coeff of u^m in L_n
        cols = [[lagm[m][n] for m in range(d + 1)] for n in range(d + 1)]
        size = 2 * d + 2
        monom = _mono_matrix(2 * d + 1, prec)  # [k][m]: Laguerre coeffs of u^m
        mono = [[None] * (d + 1) for _ in range(d + 1)]
        lag3 = [[None] * (d + 1) for _ in range(d + 1)]
        lag4 = [[None] * (d + 1) for _ in range(d + 1)]
        for i in range(d + 1):
            for j in range(i, d + 1):
                prod = [mpfr(0)] * size
                for a in range(i + 1):
                    ca = cols[i][a]
                    if ca == 0:
                        continue
                    for b in range(j + 1):
                        prod[a + b] += ca * cols[j][b]
                shifted = [mpfr(0)] + prod[: size - 1]
                l3 = [sum((monom[k][m] * prod[m] for m in range(size)), mpfr(0)) for k in range(size)]
                l4 = [sum((monom[k][m] * shifted[m] for m in range(size)), mpfr(0)) for k in range(size)]
                mono[i][j] = mono[j][i] = tuple(prod)
                lag3[i][j] = lag3[j][i] = tuple(l3)
                lag4[i][j] = lag4[j][i] = tuple(l4)
        return mono, lag3, lag4


def _sym_obj(n):
    a = np.empty((n, n), dtype=object)
    a[:] = mpfr(0)
    return a



def _round_rows(rows: LinearConstraintSet, prec: int) -> LinearConstraintSet:
    """Re-round guard-precision intermediates; drop identically-zero blocks."""
    with hp.prec(prec):
        for row in rows:
            row.rhs = +row.rhs
            kept = {}
            for key in row.mats:
                mat = row.mats[key] + mpfr(0)
                if any(v != 0 for v in mat.flat):
                    kept[key] = mat
            row.mats = kept
    return rows


def build_identity_constraints(p: SosParameterization, precision: int | None = None) -> LinearConstraintSet:
    """One equality row per Laguerre coefficient of I (u-degrees 0..2d+1)."""
    prec = precision or hp.current_precision()
    with hp.prec(prec + hp.GUARD_BITS):
        d = p.d
        R2 = mpfr(p.R) ** 2
        mono, lag3, lag4 = _pair_tables(d, prec)
        size = 2 * d + 2
        rows = LinearConstraintSet()
        n = d + 1
        for m in range(size):
            sign = 1 if m % 2 == 0 else -1
            a2 = _sym_obj(n)
            a3 = _sym_obj(n)
            a4 = _sym_obj(n)
            for i in range(n):
                for j in range(n):
                    # T((R^2-u) v_i v_j) has Laguerre coeffs (+-)(R^2 l3 - l4)
                    a2[i, j] = sign * (R2 * lag3[i][j][m] - lag4[i][j][m])
                    a3[i, j] = -lag3[i][j][m]
                    a4[i, j] = -lag4[i][j][m]
            mats = {"X2": a2, "X3": a3, "X4": a4}
            if not p.drop_X1:
                a1 = _sym_obj(n)
                for i in range(n):
                    for j in range(n):
                        a1[i, j] = -sign * lag3[i][j][m]
                mats["X1"] = a1
            rows.add(mats, 0, f"identity[L{m}]")
    return _round_rows(rows, prec)


def build_normalization_constraints(
    p: SosParameterization, kind=None, precision: int | None = None
) -> LinearConstraintSet:
    """f(0) = 1 and fhat(0) = 1 rows (perturbed in P mode); f(R) = 0 with X1."""
    prec = precision or hp.current_precision()
    tag = _tag_of(kind) if kind is not None else Tag.Z
    with hp.prec(prec + hp.GUARD_BITS):
        d = p.d
        n = d + 1
        R = mpfr(p.R)
        v0 = laguerre_values(d, 0)
        rows = LinearConstraintSet()
        perturb = tag in THRESHOLD_TAGS
        f0 = _sym_obj(n)
        for i in range(n):
            for j in range(n):
                f0[i, j] = R * R * v0[i] * v0[j]
        mats = {"X2": f0}
        if not p.drop_X1:
            a1 = _sym_obj(n)
            for i in range(n):
                for j in range(n):
                    a1[i, j] = -v0[i] * v0[j]
            mats["X1"] = a1
        rows.add(mats, 1 - mpfr(P_PERTURBATION) if perturb else 1, "normalization[f(0)]")
        fh0 = _sym_obj(n)
        for i in range(n):
            for j in range(n):
                fh0[i, j] = v0[i] * v0[j]
        rows.add({"X3": fh0}, 1 + mpfr(P_PERTURBATION) if perturb else 1, "normalization[fhat(0)]")
        if not p.drop_X1:
            vR = laguerre_values(d, 2 * hp.pi() * R * R)
            fR = _sym_obj(n)
            for i in range(n):
                for j in range(n):
                    fR[i, j] = vR[i] * vR[j]
            rows.add({"X1": fR}, 0, "normalization[f(R)]")
    return _round_rows(rows, prec)


def _functional_weights(tag: Tag, R, max_m: int, trunc: SeriesTruncation):
    """w[m] = value of the functional's integral part on u^m e^{-pi x^2}.

    The leading r(f)-term is returned separately as the objective offset.
    """
    R = mpfr(R)
    need = 2 * max_m + 2 * trunc.K + 4
    t0 = MomentTable(0, need)
    tR = MomentTable(R, need)

    def seg(mm, table_a, table_b):
        return table_a[mm] - table_b[mm]

    w = []
    if tag is Tag.Z:
        offset = R
        for m in range(max_m + 1):
            w.append(2 * seg(2 * m + 1, t0, tR) / R)
    elif tag is Tag.ZTILDE:
        offset = R
        t32 = MomentTable(3 * R / 2, need)
        for m in range(max_m + 1):
            val = 2 * seg(2 * m + 1, t0, tR) / R
            val += 3 * seg(2 * m, tR, t32) - 2 * seg(2 * m + 1, tR, t32) / R
            w.append(val)
    elif tag is Tag.L:
        offset = R / 2
        th = MomentTable(R / 2, need)
        for m in range(max_m + 1):
            w.append(4 * seg(2 * m + 1, t0, th) / R + 2 * seg(2 * m, th, tR))
    elif tag is Tag.Z1:
        offset = R + mpfr(trunc.tail_bound)
        for m in range(max_m + 1):
            val = 2 * seg(2 * m + 1, t0, tR) / R - 8 * seg(2 * m + 2, t0, tR) / (R * R)
            for k in range(1, trunc.K + 1):
                ck = z1_series_coefficient(k)
                coeff = 2 * mpfr(ck.numerator) / ck.denominator / R ** (2 * k + 1)
                val += coeff * seg(2 * m + 2 * k + 1, t0, tR)
            w.append(val)
    else:
        raise ValueError("feasibility kind")
    return w, offset


def build_objective(
    p: SosParameterization,
    kind,
    trunc: SeriesTruncation = SeriesTruncation(),
    precision: int | None = None,
):
    """Cost matrices (by block name) and constant offset for minimization kinds."""
    tag = _tag_of(kind)
    if tag not in MINIMIZATION_TAGS:
        raise ValueError("feasibility kind")
    prec = precision or hp.current_precision()
    with hp.prec(prec + hp.GUARD_BITS):
        d = p.d
        n = d + 1
        R2 = mpfr(p.R) ** 2
        mono, _, _ = _pair_tables(d, prec)
        w, offset = _functional_weights(tag, p.R, 2 * d + 1, trunc)
        c2 = _sym_obj(n)
        costs = {"X2": c2}
        if not p.drop_X1:
            c1 = _sym_obj(n)
            costs["X1"] = c1
        for i in range(n):
            for j in range(n):
                acc = mpfr(0)
                acc1 = mpfr(0)
                pij = mono[i][j]
                for m in range(2 * d + 1):
                    if pij[m] == 0:
                        continue
                    # (R^2 - u) v_i v_j contributes R^2 u^m - u^{m+1}
                    acc += pij[m] * (R2 * w[m] - w[m + 1])
                    if not p.drop_X1:
                        acc1 -= pij[m] * w[m]
                c2[i, j] = acc
                if not p.drop_X1:
                    costs["X1"][i, j] = acc1
    with hp.prec(prec):
        costs = {kk: vv + mpfr(0) for kk, vv in costs.items()}
        offset = +offset
    return costs, offset


def _fhat_weights(tag: Tag, R, lam, max_m: int):
    """w3/w4 with w3[m] = p-contribution of u^m in s3, w4[m] of u^m in s4."""
    R = mpfr(R)
    lam = mpfr(lam)
    t = lam / R
    need = 2 * max_m + 6
    t0 = MomentTable(0, need)
    tt = MomentTable(t, need)
    w3 = []
    for m in range(max_m + 2):
        w3.append(2 * R * (t0[2 * m + 1] - tt[2 * m + 1]) / lam)
    if tag is Tag.PTILDE:
        t32 = MomentTable(3 * t / 2, need)
        for m in range(max_m + 2):
            w3[m] += 3 * (tt[2 * m] - t32[2 * m]) - 2 * R * (tt[2 * m + 1] - t32[2 * m + 1]) / lam
    w4 = w3[1:]
    return w3[: max_m + 1], w4


def build_feasibility_row(
    p: SosParameterization, kind, lam, precision: int | None = None, margin=P_PERTURBATION
) -> LinearConstraintSet:
    """p_f(lam) >= margin encoded as an equality with a 1x1 slack block."""
    tag = _tag_of(kind)
    if tag not in THRESHOLD_TAGS:
        raise ValueError("threshold kind required")
    lam = mpfr(lam)
    if not lam > 0:
        raise ValueError("lambda must be > 0")
    prec = precision or hp.current_precision()
    with hp.prec(prec + hp.GUARD_BITS):
        d = p.d
        n = d + 1
        R = mpfr(p.R)
        mono, _, _ = _pair_tables(d, prec)
        w3, w4 = _fhat_weights(tag, R, lam, 2 * d)
        a3 = _sym_obj(n)
        a4 = _sym_obj(n)
        for i in range(n):
            for j in range(n):
                acc3 = mpfr(0)
                acc4 = mpfr(0)
                for m, cm in enumerate(mono[i][j][: 2 * d + 1]):
                    if cm == 0:
                        continue
                    acc3 += cm * w3[m]
                    acc4 += cm * w4[m]
                a3[i, j] = acc3
                a4[i, j] = acc4
        slack = np.array([[mpfr(-1)]], dtype=object)
        rows = LinearConstraintSet()
        rhs = 1 + mpfr(margin) - lam / R
        rows.add({"X3": a3, "X4": a4, "slack_p": slack}, rhs, f"pfeas[{tag.value}]")
    return _round_rows(rows, prec)


def assemble(
    p: SosParameterization,
    kind,
    lam=None,
    resolve_cap=None,
    trunc: SeriesTruncation = SeriesTruncation(),
    precision: int | None = None,
) -> SdpProblem:
    """Complete block SDP for the given functional kind at radius p.R.

    Minimization kinds get the functional objective; threshold kinds carry
    the p_f(lam) slack row instead.  ``resolve_cap`` switches a minimization
    problem to the analytic-center feasibility re-solve with the extra row
    objective <= resolve_cap.
    """
    tag = _tag_of(kind)
    prec = precision or hp.current_precision()
    rows = LinearConstraintSet()
    rows.extend(build_identity_constraints(p, prec))
    rows.extend(build_normalization_constraints(p, kind, prec))
    block_names = list(p.block_names)
    costs_by_name = {}
    offset = mpfr(0)
    mode = Mode.MINIMIZE
    if tag in THRESHOLD_TAGS:
        if lam is None:
            lam = _lam_of(kind)
        if lam is None:
            raise ValueError("threshold kind requires lambda")
        rows.extend(build_feasibility_row(p, kind, lam, prec))
        block_names.append("slack_p")
        mode = Mode.ANALYTIC_CENTER
    else:
        costs_by_name, offset = build_objective(p, kind, trunc, prec)
        if resolve_cap is not None:
            with hp.prec(prec + hp.GUARD_BITS):
                cap_rhs = mpfr(resolve_cap) - offset
                mats = {name: mat.copy() for name, mat in costs_by_name.items()}
                mats["slack_cap"] = np.array([[mpfr(1)]], dtype=object)
                rows.add(mats, cap_rhs, f"objective_cap[{tag.value}]")
            block_names.append("slack_cap")
            costs_by_name = {}
            mode = Mode.ANALYTIC_CENTER
    d = p.d
    sizes = {"X1": d + 1, "X2": d + 1, "X3": d + 1, "X4": d + 1, "slack_p": 1, "slack_cap": 1}
    blocks = tuple((name, sizes[name]) for name in block_names)
    index = {name: i for i, name in enumerate(block_names)}
    indexed = LinearConstraintSet()
    for row in rows:
        indexed.rows.append(ConstraintRow({index[nm]: mat for nm, mat in row.mats.items()}, row.rhs, row.label))
    costs = {index[nm]: mat for nm, mat in costs_by_name.items()}
    return SdpProblem(blocks=blocks, costs=costs, rows=indexed, mode=mode, objective_offset=offset)


def function_from_gram(X2, R, d: int | None = None) -> GaussianPoly:
    """The candidate f defined by X2: (R^2 - u) v(u)^T X2 v(u) times Gaussian."""
    n = X2.shape[0] if hasattr(X2, "shape") else len(X2)
    d = d if d is not None else n - 1
    prec = hp.current_precision()
    mono, _, _ = _pair_tables(d, prec)
    size = 2 * d + 2
    R2 = mpfr(R) ** 2
    s2 = [mpfr(0)] * size
    for i in range(n):
        for j in range(n):
            xij = X2[i][j] if not hasattr(X2, "shape") else X2[i, j]
            if xij == 0:
                continue
            for m, cm in enumerate(mono[i][j][: 2 * d + 1]):
                s2[m] += xij * cm
    out = [mpfr(0)] * size
    for m in range(size - 1):
        out[m] += R2 * s2[m]
        out[m + 1] -= s2[m]
    return GaussianPoly.from_monomial(out)


def _tag_of(kind) -> Tag:
    if isinstance(kind, Tag):
        return kind
    if hasattr(kind, "tag"):
        return kind.tag
    return Tag(str(kind))


def _lam_of(kind):
    return getattr(kind, "lam", None)
