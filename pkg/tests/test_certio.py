import io
import random

import gmpy2
import numpy as np
import pytest
from gmpy2 import mpfr

import zetasdp.hp as hp
from zetasdp.certio import (
    CertificateFormatError,
    SosCertificate,
    export_problem,
    read_certificate,
    read_problem,
    write_certificate,
)
from zetasdp.functionals import FunctionalKind, Tag
from zetasdp.sdpcore import Mode
from zetasdp.sosmodel import SosParameterization, assemble


def random_cert(rng, d=1, kind=Tag.Z, lam=None):
    n = d + 1
    mats = []
    for _ in range(3):
        a = np.array([[mpfr(rng.uniform(-1, 1)) for _ in range(n)] for _ in range(n)], dtype=object)
        mats.append((a + a.T) / 2)
    fk = FunctionalKind(kind, lam)
    return SosCertificate(
        kind=fk, d=d, R=mpfr("1.25"), X2=mats[0], X3=mats[1], X4=mats[2],
        monomial_coeffs=[mpfr(rng.uniform(-1, 1)) for _ in range(2 * d + 2)],
    )


def test_line_counts(rng):
    buf = io.StringIO()
    write_certificate(random_cert(rng, d=1), buf)
    lines = [l for l in buf.getvalue().splitlines() if l.strip() and not l.startswith("#")]
    assert len(lines) == 5
    assert len(lines[1].split()) == 4  # 2x2 matrix, full row-major
    buf = io.StringIO()
    write_certificate(random_cert(rng, d=1, kind=Tag.P, lam=mpfr("0.65")), buf)
    lines = [l for l in buf.getvalue().splitlines() if l.strip() and not l.startswith("#")]
    assert len(lines) == 6


def test_round_trip_identity(rng):
    for decimals in (30, 100):
        cert = random_cert(rng, d=3, kind=Tag.PTILDE, lam=mpfr("0.6"))
        buf = io.StringIO()
        write_certificate(cert, buf, decimals=decimals)
        buf.seek(0)
        back = read_certificate(buf)
        assert back.kind.tag is Tag.PTILDE
        assert back.d == 3
        tol = mpfr(10) ** (4 - decimals)
        assert abs(back.R - cert.R) < tol
        assert abs(back.lam - cert.lam) < tol
        for a, b in zip((back.X2, back.X3, back.X4), (cert.X2, cert.X3, cert.X4)):
            assert max(abs(x - y) for x, y in zip(a.flat, b.flat)) < tol
        for x, y in zip(back.monomial_coeffs, cert.monomial_coeffs):
            assert abs(x - y) < tol


def test_round_trip_bit_exact_at_full_decimals(rng):
    cert = random_cert(rng, d=2)
    buf = io.StringIO()
    write_certificate(cert, buf, decimals=100)
    buf.seek(0)
    back = read_certificate(buf)
    # 100 significant decimals cover 256-bit mantissas exactly
    for a, b in zip(back.X2.flat, cert.X2.flat):
        assert a == b


def test_headerless_file_needs_kind():
    text = "1.5\n1 0 0 1\n1 0 0 1\n1 0 0 1\n1 2\n"
    with pytest.raises(CertificateFormatError, match="kind"):
        read_certificate(io.StringIO(text))
    cert = read_certificate(io.StringIO(text), expected_kind=Tag.Z)
    assert cert.d == 1
    assert cert.kind.tag is Tag.Z


def test_triangular_storage_accepted():
    # 3 entries = upper triangle of a 2x2 matrix
    text = "1.5\n1 2 3\n1 0 3\n1 0 3\n1 2\n"
    cert = read_certificate(io.StringIO(text), expected_kind=Tag.Z, expected_d=1)
    assert cert.X2[0, 1] == 2
    assert cert.X2[1, 0] == 2
    assert cert.X2[1, 1] == 3


def test_truncated_line_dimension_mismatch():
    # 2 entries match neither the full (4) nor triangular (3) count for d=1
    text = "1.5\n1 0\n1 0 0 1\n1 0 0 1\n1 2\n"
    with pytest.raises(CertificateFormatError, match="dimension mismatch"):
        read_certificate(io.StringIO(text), expected_kind=Tag.Z, expected_d=1)


def test_parse_error_reports_position():
    text = "1.5\n1 0 zebra 1\n1 0 0 1\n1 0 0 1\n1 2\n"
    with pytest.raises(CertificateFormatError, match="line 2"):
        read_certificate(io.StringIO(text), expected_kind=Tag.Z)


def test_scientific_notation_tokens():
    text = "1.5e0\n1e0 0 0 1E-2\n1 0 0 1\n1 0 0 1\n1 2\n"
    cert = read_certificate(io.StringIO(text), expected_kind=Tag.Z)
    assert cert.X2[1, 1] == mpfr("0.01")


def test_kind_and_d_mismatch_errors(rng):
    cert = random_cert(rng, d=2)
    buf = io.StringIO()
    write_certificate(cert, buf)
    buf.seek(0)
    with pytest.raises(CertificateFormatError, match="kind mismatch"):
        read_certificate(buf, expected_kind=Tag.L)
    buf.seek(0)
    with pytest.raises(CertificateFormatError, match="d mismatch"):
        read_certificate(buf, expected_d=4)


def test_asymmetric_full_matrix_rejected():
    text = "1.5\n1.000000 0.500000 0.900000 1.000000\n1 0 0 1\n1 0 0 1\n1 2\n"
    with pytest.raises(CertificateFormatError, match="asymmetric"):
        read_certificate(io.StringIO(text), expected_kind=Tag.Z)


def test_lambda_invariant_enforced(rng):
    with pytest.raises(ValueError):
        SosCertificate(
            kind=FunctionalKind(Tag.Z), d=0, R=mpfr(1),
            X2=np.array([[mpfr(1)]], dtype=object),
            X3=np.array([[mpfr(1)]], dtype=object),
            X4=np.array([[mpfr(0.5)]], dtype=object),
            monomial_coeffs=None,
        ).kind and FunctionalKind(Tag.Z, lam=1)


# -- problem interchange --------------------------------------------------------


def test_export_problem_round_trip():
    p = SosParameterization(d=2, R=mpfr("1.3"))
    prob = assemble(p, Tag.Z)
    buf = io.StringIO()
    export_problem(prob, buf)
    buf.seek(0)
    back = read_problem(buf)
    assert back.mode is Mode.MINIMIZE
    assert [s for _, s in back.blocks] == [s for _, s in prob.blocks]
    assert len(back.rows) == len(prob.rows)
    assert back.objective_offset == prob.objective_offset
    for r1, r2 in zip(prob.rows, back.rows):
        assert r1.label == r2.label
        assert r2.rhs == r1.rhs
        assert set(r1.mats) == set(r2.mats)
        for bi in r1.mats:
            for a, b in zip(r1.mats[bi].flat, r2.mats[bi].flat):
                assert a == b
    for bi in prob.costs:
        for a, b in zip(prob.costs[bi].flat, back.costs[bi].flat):
            assert a == b


def test_export_entry_count_matches_sparsity():
    p = SosParameterization(d=1, R=mpfr("1.3"))
    prob = assemble(p, Tag.Z)
    buf = io.StringIO()
    export_problem(prob, buf)
    body = [l for l in buf.getvalue().splitlines() if l.strip() and not l.startswith("*")]
    entries = body[4:]
    want = 0
    for mats in [prob.costs] + [row.mats for row in prob.rows]:
        for mat in mats.values():
            n = mat.shape[0]
            want += sum(1 for i in range(n) for j in range(i, n) if mat[i, j] != 0)
    assert len(entries) == want


def test_export_small_header_shape():
    p = SosParameterization(d=1, R=mpfr("1.2"))
    prob = assemble(p, Tag.Z)
    buf = io.StringIO()
    export_problem(prob, buf)
    body = [l for l in buf.getvalue().splitlines() if l.strip() and not l.startswith("*")]
    assert int(body[0]) == len(prob.rows)
    assert int(body[1]) == 3
    assert body[2].split() == ["2", "2", "2"]
    assert len(body[3].split()) == len(prob.rows)
