import logging
import math

import gmpy2
import pytest
from gmpy2 import mpfr

import zetasdp.hp as hp
from zetasdp.certio import SosCertificate
from zetasdp.functionals import CandidateFunction, Tag, eval_Z, eval_p
from zetasdp.gausspoly import GaussianPoly
from zetasdp.sdpcore import SolveOptions, Status
from zetasdp.search import (
    PipelineResult,
    SearchConfig,
    SearchError,
    brent_minimize,
    lambda_search,
    outer_minimize,
    resolve_for_certificate,
    run_pipeline,
)


class FakeSolution:
    status = Status.OPTIMAL

    def __init__(self, value):
        self.primal_objective = mpfr(value)


def test_outer_minimize_quadratic_hook():
    calls = []

    def oracle(R):
        calls.append(R)
        v = (R - 2) ** 2 + 1
        return mpfr(v), FakeSolution(v)

    cfg = SearchConfig(R_bracket=(1.0, 5.0), brent_tol=1e-8)
    R, v, sol, trace = outer_minimize(Tag.Z, 4, cfg, inner=oracle)
    assert abs(R - 2) < 1e-6
    assert abs(float(v) - 1) < 1e-10
    assert len(trace.evaluations) == len(calls)


def test_outer_minimize_all_failures_raises():
    def oracle(R):
        return None, FakeSolution(0)

    oracle_fail = lambda R: (None, type("S", (), {"status": Status.STALLED, "primal_objective": None})())
    cfg = SearchConfig(R_bracket=(1.0, 2.0))
    with pytest.raises(SearchError) as exc:
        outer_minimize(Tag.Z, 4, cfg, inner=oracle_fail)
    assert exc.value.trace is not None


def test_brent_handles_boundary_minimum():
    x, fx = brent_minimize(lambda t: t, 1.0, 2.0, 1e-8)
    assert x < 1.001


def test_lambda_search_monotone_oracle():
    cfg = SearchConfig(lambda_bracket=(0.4, 0.9), lambda_tol=1e-6)
    lam, sol, trace = lambda_search(Tag.P, 4, 1.2, cfg, probe=lambda l: l >= 0.7)
    assert abs(lam - 0.7) < 2e-6
    # bracket independence
    cfg2 = SearchConfig(lambda_bracket=(0.5, 0.85), lambda_tol=1e-6)
    lam2, _, _ = lambda_search(Tag.P, 4, 1.2, cfg2, probe=lambda l: l >= 0.7)
    assert abs(lam - lam2) < 2e-6
    # halving the tolerance moves the result by at most the tolerance
    cfg3 = SearchConfig(lambda_bracket=(0.4, 0.9), lambda_tol=5e-7)
    lam3, _, _ = lambda_search(Tag.P, 4, 1.2, cfg3, probe=lambda l: l >= 0.7)
    assert abs(lam - lam3) <= 2e-6


def test_lambda_search_bad_bracket():
    cfg = SearchConfig(lambda_bracket=(0.4, 0.9))
    with pytest.raises(SearchError, match="bad bracket"):
        lambda_search(Tag.P, 4, 1.2, cfg, probe=lambda l: True)
    with pytest.raises(SearchError, match="bad bracket"):
        lambda_search(Tag.P, 4, 1.2, cfg, probe=lambda l: False)


def test_trace_log_format(caplog):
    def oracle(R):
        return mpfr(R), FakeSolution(R)

    cfg = SearchConfig(R_bracket=(1.0, 2.0), brent_tol=1e-3)
    with caplog.at_level(logging.INFO, logger="zetasdp.search"):
        outer_minimize(Tag.Z, 3, cfg, inner=oracle)
    lines = [r.getMessage() for r in caplog.records]
    assert lines
    for line in lines:
        parts = line.split("\t")
        assert parts[0] == "Z"
        assert parts[1] == "3"
        float(parts[2])  # R column parses


# -- small real runs ------------------------------------------------------------


@pytest.fixture()
def z4_result(z4_pipeline):
    return z4_pipeline


def test_pipeline_z4_beats_hat(z4_result):
    assert float(z4_result.value) < 4 / 3
    cert = z4_result.certificate
    f = GaussianPoly.from_monomial(cert.monomial_coeffs)
    c = CandidateFunction.from_gaussian(f, cert.R, check=False)
    v = eval_Z(c, modified=True)
    # certificate objective stays within the resolve margin of the optimum
    assert v <= mpfr(z4_result.value) + mpfr("1.1e-6")


def test_resolve_margin_zero_fails(z4_result):
    with pytest.raises(SearchError, match="no interior point"):
        resolve_for_certificate(
            Tag.Z, 4, z4_result.R, v=z4_result.value,
            cfg=SearchConfig(resolve_margin=1e-300),
            opts=SolveOptions(max_iter=150),
        )


def test_resolve_requires_value():
    with pytest.raises(ValueError):
        resolve_for_certificate(Tag.Z, 4, 1.1)
    with pytest.raises(ValueError):
        resolve_for_certificate(Tag.P, 4, 1.1)


def test_pipeline_p4_certificate(p4_pipeline):
    res = p4_pipeline
    cert = res.certificate
    assert cert.kind.tag is Tag.P
    assert cert.lam is not None
    assert float(res.value) < 0.6695  # beats the hat-function threshold
    f = GaussianPoly.from_monomial(cert.monomial_coeffs)
    c = CandidateFunction.from_gaussian(f, cert.R, check=False)
    assert eval_p(c, cert.lam) > 0
    assert c.f_at_zero() <= 1
    assert c.fhat_at_zero() >= 1


def test_outer_values_nonincreasing_in_d(z4_result):
    R6, v6, sol6, _ = outer_minimize(Tag.Z, 6)
    assert float(v6) <= float(z4_result.value) + 1e-9
