"""Bilevel search: Brent's method over the radius R, per-R inner SDP solves,
binary search over Lambda for the threshold functionals, and the strictly
interior feasibility re-solve that produces certificates.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

from gmpy2 import mpfr

from . import hp
from .certio import SosCertificate
from .functionals import MINIMIZATION_TAGS, THRESHOLD_TAGS, FunctionalKind, SeriesTruncation, Tag
from .sdpcore import Mode, SdpSolution, SolveOptions, Status, phase1_problem, residuals, solve
from .sosmodel import SosParameterization, assemble, function_from_gram
from .gausspoly import monomial_coeffs

logger = logging.getLogger("zetasdp.search")

_DEFAULT_R_BRACKETS = {
    Tag.Z: (1.0, 1.8),
    Tag.ZTILDE: (1.0, 1.8),
    Tag.L: (1.5, 2.2),
    Tag.Z1: (1.0, 1.6),
    Tag.P: (1.0, 1.6),
    Tag.PTILDE: (1.0, 1.6),
}


class SearchError(RuntimeError):
    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


@dataclass
class SearchConfig:
    R_bracket: tuple = (1.0, 1.8)
    brent_tol: float = 1e-6
    lambda_bracket: tuple = (0.4, 0.9)
    lambda_tol: float = 1e-6
    resolve_margin: float = 1e-6
    lambda_bump: float = 1e-6
    # phase-1 tau cutoff for "feasible": tau collapses to ~gap_tol on strictly
    # feasible problems and decays only slowly with lambda on infeasible ones,
    # so the cutoff must sit well below the tau values of near-threshold
    # infeasible problems for the bisection to land within lambda_bump.
    feas_threshold: float = 1e-12
    # resolution used to score lambda*(R) inside the outer Brent loop; the
    # final lambda at the winning R is re-bisected at lambda_tol
    lambda_coarse_tol: float = 1e-3
    max_brent_iter: int = 80

    def __post_init__(self):
        lo, hi = self.R_bracket
        if not (hi > lo):
            raise ValueError("empty R bracket")
        if lo < 1.0:
            raise ValueError("R must be >= 1 (packing density in dimension one)")
        if min(self.brent_tol, self.lambda_tol, self.resolve_margin, self.lambda_bump) <= 0:
            raise ValueError("tolerances must be positive")

    @classmethod
    def default_for(cls, kind) -> "SearchConfig":
        tag = kind if isinstance(kind, Tag) else kind.tag
        return cls(R_bracket=_DEFAULT_R_BRACKETS[tag])


@dataclass
class SearchTrace:
    evaluations: list = field(default_factory=list)
    best: tuple | None = None

    def record(self, kind, d, R, lam, value, status):
        self.evaluations.append((R, lam, value, status))
        tag = kind if isinstance(kind, Tag) else kind.tag
        lam_part = f"{lam:.9f}\t" if lam is not None else ""
        logger.info("%s\t%d\t%.9f\t%s%s\t%s", tag.value, d, R, lam_part, value, status)


def brent_minimize(fn, lo, hi, xtol, max_iter=80):
    """Bounded Brent minimization (golden section + parabolic steps)."""
    golden = 0.3819660112501051
    a, b = float(lo), float(hi)
    x = w = v = a + golden * (b - a)
    fx = fw = fv = fn(x)
    d = e = 0.0
    for _ in range(max_iter):
        mid = 0.5 * (a + b)
        tol1 = xtol * abs(x) + 1e-15
        tol2 = 2 * tol1
        if abs(x - mid) <= tol2 - 0.5 * (b - a):
            break
        use_golden = True
        if abs(e) > tol1:
            r = (x - w) * (fx - fv)
            q = (x - v) * (fx - fw)
            p = (x - v) * q - (x - w) * r
            q = 2 * (q - r)
            if q > 0:
                p = -p
            q = abs(q)
            etemp = e
            e = d
            if not (abs(p) >= abs(0.5 * q * etemp) or p <= q * (a - x) or p >= q * (b - x)):
                d = p / q
                u = x + d
                if (u - a) < tol2 or (b - u) < tol2:
                    d = tol1 if x < mid else -tol1
                use_golden = False
        if use_golden:
            e = (b if x < mid else a) - x
            d = golden * e
        u = x + (d if abs(d) >= tol1 else (tol1 if d > 0 else -tol1))
        fu = fn(u)
        if fu <= fx:
            if u >= x:
                a = x
            else:
                b = x
            v, w, x = w, x, u
            fv, fw, fx = fw, fx, fu
        else:
            if u < x:
                a = u
            else:
                b = u
            if fu <= fw or w == x:
                v, w = w, u
                fv, fw = fw, fu
            elif fu <= fv or v == x or v == w:
                v, fv = u, fu
    return x, fx


def _as_kind(kind, lam=None) -> FunctionalKind:
    if isinstance(kind, FunctionalKind):
        return kind
    tag = kind if isinstance(kind, Tag) else Tag(str(kind))
    if tag in THRESHOLD_TAGS:
        return FunctionalKind(tag, lam)
    return FunctionalKind(tag)


def outer_minimize(
    kind,
    d: int,
    cfg: SearchConfig | None = None,
    opts: SolveOptions | None = None,
    trunc: SeriesTruncation = SeriesTruncation(),
    inner=None,
):
    """Brent minimization of R -> inner SDP optimum; returns (R*, value, solution).

    ``inner`` may be injected for testing; it maps R to (value, solution) and
    defaults to assembling and solving the SOS model.  Failed inner solves
    score +inf so the bracket contracts away from them.
    """
    tag = _as_kind(kind).tag
    if tag not in MINIMIZATION_TAGS:
        raise ValueError("outer_minimize needs a minimization kind")
    cfg = cfg or SearchConfig.default_for(tag)
    opts = opts or SolveOptions()
    trace = SearchTrace()
    cache = {}

    def default_inner(R):
        prob = assemble(SosParameterization(d=d, R=mpfr(R)), tag, trunc=trunc, precision=opts.precision)
        sol = solve(prob, opts)
        if sol.status is not Status.OPTIMAL:
            return None, sol
        return sol.primal_objective, sol

    inner_fn = inner or default_inner

    def score(R):
        if R in cache:
            return cache[R][0]
        value, sol = inner_fn(R)
        status = getattr(sol, "status", Status.OPTIMAL)
        status_name = status.value if hasattr(status, "value") else str(status)
        if value is None:
            trace.record(tag, d, R, None, "inf", status_name)
            cache[R] = (float("inf"), sol)
            return float("inf")
        trace.record(tag, d, R, None, f"{float(value):.15f}", status_name)
        cache[R] = (float(value), sol)
        return float(value)

    lo, hi = cfg.R_bracket
    R_star, v_star = brent_minimize(score, lo, hi, cfg.brent_tol, cfg.max_brent_iter)
    if not any(v[0] != float("inf") for v in cache.values()):
        raise SearchError("inner solver failed at all bracketing points", trace)
    R_best, (v_best, sol_best) = min(cache.items(), key=lambda kv: kv[1][0])
    if v_best == float("inf"):
        raise SearchError("no successful inner solve", trace)
    trace.best = (R_best, v_best, sol_best)
    return R_best, sol_best.primal_objective, sol_best, trace


def feasibility_probe(kind, d, R, lam, opts: SolveOptions, threshold) -> bool:
    """Phase-1 verdict: is the inner problem at (R, lam) feasible?

    The probe only needs the sign of tau* - threshold, so the solve stops as
    soon as a feasible iterate drops below it or the dual bound certifies it
    cannot.
    """
    from dataclasses import replace

    tag = _as_kind(kind, lam).tag
    prob = assemble(SosParameterization(d=d, R=mpfr(R)), tag, lam=mpfr(lam), precision=opts.precision)
    aux = phase1_problem(prob)
    probe_opts = replace(
        opts,
        gap_tol=max(opts.gap_tol, 1e-16),
        stop_below=threshold * 0.01,
        stop_above=threshold,
    )
    sol = solve(aux, probe_opts)
    if sol.status is not Status.OPTIMAL:
        return False
    return float(sol.primal_objective) < threshold


def lambda_search(
    kind,
    d: int,
    R,
    cfg: SearchConfig | None = None,
    opts: SolveOptions | None = None,
    probe=None,
    tol: float | None = None,
    bracket: tuple | None = None,
    want_solution: bool = True,
):
    """Binary search for the smallest feasible Lambda at fixed R.

    Bracket endpoints must straddle feasibility (infeasible at lambda_lo,
    feasible at lambda_hi).  Returns (Lambda*, analytic-center solution,
    trace).
    """
    tag = _as_kind(kind, 1).tag
    if tag not in THRESHOLD_TAGS:
        raise ValueError("lambda_search needs a threshold kind")
    cfg = cfg or SearchConfig.default_for(tag)
    opts = opts or SolveOptions()
    tol = tol if tol is not None else cfg.lambda_tol
    probe_fn = probe or (lambda lam: feasibility_probe(tag, d, R, lam, opts, cfg.feas_threshold))
    lo, hi = (float(v) for v in (bracket or cfg.lambda_bracket))
    feas_lo = probe_fn(lo)
    feas_hi = probe_fn(hi)
    if feas_lo or not feas_hi:
        raise SearchError(
            f"bad bracket: feasibility at lambda_lo={lo} is {feas_lo}, at lambda_hi={hi} is {feas_hi}"
        )
    trace = SearchTrace()
    trace.record(tag, d, float(R), lo, "infeasible", "-")
    trace.record(tag, d, float(R), hi, "feasible", "-")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if probe_fn(mid):
            hi = mid
            verdict = "feasible"
        else:
            lo = mid
            verdict = "infeasible"
        trace.record(tag, d, float(R), mid, verdict, "-")
    solution = None
    if probe is None and want_solution:
        prob = assemble(SosParameterization(d=d, R=mpfr(R)), tag, lam=mpfr(hi), precision=opts.precision)
        solution = solve(prob, opts)
    return hi, solution, trace


def resolve_for_certificate(
    kind,
    d: int,
    R,
    lam=None,
    v=None,
    cfg: SearchConfig | None = None,
    opts: SolveOptions | None = None,
    trunc: SeriesTruncation = SeriesTruncation(),
) -> SosCertificate:
    """Analytic-center re-solve producing strictly positive definite blocks.

    Minimization kinds re-solve as a feasibility problem capped at
    v + resolve_margin; threshold kinds re-solve at lam + lambda_bump.
    """
    tag = _as_kind(kind, lam if lam is not None else 1).tag
    cfg = cfg or SearchConfig.default_for(tag)
    opts = opts or SolveOptions()
    with hp.prec(opts.precision):
        param = SosParameterization(d=d, R=mpfr(R))
        if tag in MINIMIZATION_TAGS:
            if v is None:
                raise ValueError("resolve for a minimization kind needs the value v")
            prob = assemble(
                param, tag, resolve_cap=mpfr(v) + mpfr(cfg.resolve_margin),
                trunc=trunc, precision=opts.precision,
            )
            final_lam = None
        else:
            if lam is None:
                raise ValueError("resolve for a threshold kind needs lambda")
            final_lam = mpfr(lam) + mpfr(cfg.lambda_bump)
            prob = assemble(param, tag, lam=final_lam, precision=opts.precision)
        sol = solve(prob, opts)
        if sol.status is not Status.FEASIBLE:
            raise SearchError(f"no interior point; widen margin (solver status {sol.status.value})")
        rep = residuals(prob, sol)
        for name in ("X2", "X3", "X4"):
            if rep.min_eigenvalues[prob.block_index(name)] <= 0:
                raise SearchError("no interior point; widen margin")
        X2 = sol.X[prob.block_index("X2")]
        X3 = sol.X[prob.block_index("X3")]
        X4 = sol.X[prob.block_index("X4")]
        f = function_from_gram(X2, mpfr(R), d)
        kind_out = FunctionalKind(tag, final_lam) if tag in THRESHOLD_TAGS else FunctionalKind(tag)
        return SosCertificate(
            kind=kind_out, d=d, R=mpfr(R), X2=X2, X3=X3, X4=X4,
            monomial_coeffs=monomial_coeffs(f),
        )


@dataclass
class PipelineResult:
    certificate: SosCertificate
    R: float
    value: object  # functional value (minimization) or Lambda* (threshold)
    trace: SearchTrace
    solution: SdpSolution | None = None


def run_pipeline(
    kind,
    d: int,
    cfg: SearchConfig | None = None,
    opts: SolveOptions | None = None,
    trunc: SeriesTruncation = SeriesTruncation(),
) -> PipelineResult:
    """Full search + re-solve pipeline for one functional kind at degree d."""
    tag = _as_kind(kind, 1).tag
    cfg = cfg or SearchConfig.default_for(tag)
    opts = opts or SolveOptions()
    if tag in MINIMIZATION_TAGS:
        R_star, v_star, sol, trace = outer_minimize(tag, d, cfg, opts, trunc)
        cert = resolve_for_certificate(tag, d, R_star, v=v_star, cfg=cfg, opts=opts, trunc=trunc)
        return PipelineResult(certificate=cert, R=R_star, value=v_star, trace=trace, solution=sol)

    trace_all = SearchTrace()
    lam_cache = {}
    last_lam = [None]
    coarse = max(cfg.lambda_coarse_tol, cfg.lambda_tol)

    def lam_of_R(R):
        if R in lam_cache:
            return lam_cache[R]
        # score lambda*(R) coarsely; reuse a local bracket around the last hit
        brackets = []
        if last_lam[0] is not None:
            pad = 20 * coarse
            brackets.append((max(cfg.lambda_bracket[0], last_lam[0] - pad),
                             min(cfg.lambda_bracket[1], last_lam[0] + pad)))
        brackets.append(tuple(cfg.lambda_bracket))
        lam = float("inf")
        for br in brackets:
            try:
                lam, _, tr = lambda_search(tag, d, R, cfg, opts, tol=coarse, bracket=br,
                                           want_solution=False)
                trace_all.evaluations.extend(tr.evaluations)
                break
            except SearchError:
                continue
        trace_all.record(tag, d, R, lam if lam != float("inf") else None, f"{lam}", "lambda*")
        if lam != float("inf"):
            last_lam[0] = lam
        lam_cache[R] = lam
        return lam

    lo, hi = cfg.R_bracket
    brent_minimize(lam_of_R, lo, hi, cfg.brent_tol, cfg.max_brent_iter)
    R_best, lam_coarse = min(lam_cache.items(), key=lambda kv: kv[1])
    if lam_coarse == float("inf"):
        raise SearchError("lambda search failed across the R bracket", trace_all)
    # refine the winning R to the requested lambda tolerance
    fine_bracket = (max(cfg.lambda_bracket[0], lam_coarse - 2 * coarse),
                    min(cfg.lambda_bracket[1], lam_coarse + coarse))
    lam_best, _, tr = lambda_search(tag, d, R_best, cfg, opts, tol=cfg.lambda_tol,
                                    bracket=fine_bracket, want_solution=False)
    trace_all.evaluations.extend(tr.evaluations)
    cert = resolve_for_certificate(tag, d, R_best, lam=lam_best, cfg=cfg, opts=opts)
    return PipelineResult(certificate=cert, R=R_best, value=lam_best, trace=trace_all)
