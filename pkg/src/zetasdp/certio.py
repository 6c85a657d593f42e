"""Certificate and problem file I/O.

Certificate text layout (one logical item per line, whitespace-separated
decimal values, 100 significant digits by default):

    # kind=Z d=8            <- self-description header, optional on input
    <R>
    <X2 entries>            <- full matrix, row-major
    <X3 entries>
    <X4 entries>
    <Lambda>                <- P/PTilde kinds only
    <monomial coefficients of f>   (x^0, x^2, ..., x^{4d+2}; convenience)

A matrix line holding (d+1)(d+2)/2 entries instead of (d+1)^2 is read as the
upper triangle in row-major order; the entry count disambiguates.

Problems export to a sparse block text format: comment lines, then the
constraint count, block count, block sizes, right-hand sides, and one
"<row> <block> <i> <j> <value>" entry per nonzero upper-triangular
coefficient (row 0 holds the objective).
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np
from gmpy2 import mpfr

from . import hp
from .functionals import THRESHOLD_TAGS, FunctionalKind, Tag
from .sdpcore import ConstraintRow, LinearConstraintSet, Mode, SdpProblem

DEFAULT_DECIMALS = 100


class CertificateFormatError(ValueError):
    pass


@dataclass
class SosCertificate:
    kind: FunctionalKind
    d: int
    R: object
    X2: np.ndarray
    X3: np.ndarray
    X4: np.ndarray
    monomial_coeffs: list | None = None

    def __post_init__(self):
        n = self.d + 1
        for name in ("X2", "X3", "X4"):
            mat = getattr(self, name)
            if mat.shape != (n, n):
                raise ValueError(f"{name} must be {n}x{n} for d={self.d}")
        if (self.kind.tag in THRESHOLD_TAGS) != (self.kind.lam is not None):
            raise ValueError("lambda present iff kind is P or PTilde")

    @property
    def lam(self):
        return self.kind.lam


def _matrix_line(mat, decimals: int) -> str:
    return " ".join(hp.to_str(v, decimals) for v in np.asarray(mat).flat)


def write_certificate(cert: SosCertificate, sink, decimals: int = DEFAULT_DECIMALS) -> None:
    """Write the certificate; ``sink`` is a path or a text file object."""
    own = isinstance(sink, (str, bytes)) or hasattr(sink, "__fspath__")
    fh = open(sink, "w") if own else sink
    try:
        fh.write(f"# kind={cert.kind.tag.value} d={cert.d}\n")
        fh.write(hp.to_str(cert.R, decimals) + "\n")
        for mat in (cert.X2, cert.X3, cert.X4):
            fh.write(_matrix_line(mat, decimals) + "\n")
        if cert.kind.tag in THRESHOLD_TAGS:
            fh.write(hp.to_str(cert.kind.lam, decimals) + "\n")
        coeffs = cert.monomial_coeffs if cert.monomial_coeffs is not None else []
        fh.write(" ".join(hp.to_str(v, decimals) for v in coeffs) + "\n")
    finally:
        if own:
            fh.close()


def _parse_tokens(tokens, lineno):
    out = []
    for col, tok in enumerate(tokens):
        try:
            out.append(mpfr(tok))
        except ValueError:
            raise CertificateFormatError(
                f"parse error at line {lineno}, column {col + 1}: {tok!r}"
            ) from None
    return out


def _matrix_from_values(vals, lineno, expected_d=None):
    count = len(vals)
    full_n = int(round(count**0.5))
    tri_n = int(round(((8 * count + 1) ** 0.5 - 1) / 2))
    is_full = full_n * full_n == count
    is_tri = tri_n * (tri_n + 1) // 2 == count
    if expected_d is not None:
        n = expected_d + 1
        if count == n * n:
            is_full, is_tri = True, False
        elif count == n * (n + 1) // 2:
            is_full, is_tri = False, True
            tri_n = n
        else:
            raise CertificateFormatError(
                f"dimension mismatch at line {lineno}: {count} entries, expected "
                f"{n * n} (full) or {n * (n + 1) // 2} (triangular) for d={expected_d}"
            )
    if is_full and is_tri and full_n != tri_n:
        raise CertificateFormatError(
            f"ambiguous matrix storage at line {lineno} ({count} entries); pass the expected d"
        )
    if is_full:
        n = full_n
        mat = np.array(vals, dtype=object).reshape(n, n)
        asym = max((abs(mat[i, j] - mat[j, i]) for i in range(n) for j in range(i)), default=mpfr(0))
        mat = (mat + mat.T) / 2
        return mat, asym
    if is_tri:
        n = tri_n
        mat = np.empty((n, n), dtype=object)
        k = 0
        for i in range(n):
            for j in range(i, n):
                mat[i, j] = vals[k]
                mat[j, i] = vals[k]
                k += 1
        return mat, mpfr(0)
    raise CertificateFormatError(f"dimension mismatch at line {lineno}: {count} entries")


def read_certificate(
    source,
    expected_kind: Tag | FunctionalKind | None = None,
    expected_d: int | None = None,
    precision: int | None = None,
) -> SosCertificate:
    """Parse a certificate file, validating counts against the expected d."""
    own = isinstance(source, (str, bytes)) or hasattr(source, "__fspath__")
    fh = open(source) if own else source
    try:
        raw = fh.read()
    finally:
        if own:
            fh.close()
    with hp.prec(precision or hp.current_precision()):
        header_kind = None
        header_d = None
        data_lines = []
        for lineno, line in enumerate(raw.splitlines(), start=1):
            stripped = line.strip()
            if not stripped:
                continue
            if stripped.startswith("#"):
                for part in stripped[1:].split():
                    if part.startswith("kind="):
                        try:
                            header_kind = Tag(part[5:])
                        except ValueError:
                            raise CertificateFormatError(f"unknown kind in header: {part[5:]!r}")
                    elif part.startswith("d="):
                        header_d = int(part[2:])
                continue
            data_lines.append((lineno, stripped))
        want_tag = None
        if expected_kind is not None:
            want_tag = expected_kind if isinstance(expected_kind, Tag) else expected_kind.tag
        if header_kind is not None and want_tag is not None and header_kind is not want_tag:
            raise CertificateFormatError(
                f"kind mismatch: file says {header_kind.value}, expected {want_tag.value}"
            )
        tag = header_kind or want_tag
        if header_d is not None and expected_d is not None and header_d != expected_d:
            raise CertificateFormatError(f"d mismatch: file says {header_d}, expected {expected_d}")
        d_hint = expected_d if expected_d is not None else header_d
        if tag is None:
            if len(data_lines) >= 6:
                tag = Tag.P
            else:
                raise CertificateFormatError("kind not in header; pass the expected kind")
        n_expected = 6 if tag in THRESHOLD_TAGS else 5
        if len(data_lines) not in (n_expected, n_expected - 1):
            raise CertificateFormatError(
                f"dimension mismatch: {len(data_lines)} data lines, expected {n_expected} "
                f"(or {n_expected - 1} without monomial coefficients) for kind {tag.value}"
            )
        lineno_R, line_R = data_lines[0]
        Rvals = _parse_tokens(line_R.split(), lineno_R)
        if len(Rvals) != 1:
            raise CertificateFormatError(f"dimension mismatch at line {lineno_R}: expected a single R")
        R = Rvals[0]
        mats = []
        d_seen = None
        for lineno, line in data_lines[1:4]:
            vals = _parse_tokens(line.split(), lineno)
            mat, asym = _matrix_from_values(vals, lineno, d_hint)
            n = mat.shape[0]
            if d_seen is None:
                d_seen = n - 1
            elif d_seen != n - 1:
                raise CertificateFormatError(f"dimension mismatch at line {lineno}: inconsistent sizes")
            # writer emits full row-major; tolerate printing roundoff only
            digits = max(sum(c.isdigit() for c in t.split("e")[0].split("E")[0].lstrip("+-0.")) for t in line.split())
            if asym > mpfr(10) ** (1 - digits):
                raise CertificateFormatError(f"asymmetric matrix at line {lineno}")
            mats.append(mat)
        if d_hint is not None and d_seen != d_hint:
            raise CertificateFormatError(f"dimension mismatch: matrices are for d={d_seen}")
        idx = 4
        lam = None
        if tag in THRESHOLD_TAGS:
            lineno, line = data_lines[idx]
            lamvals = _parse_tokens(line.split(), lineno)
            if len(lamvals) != 1:
                raise CertificateFormatError(f"dimension mismatch at line {lineno}: expected a single Lambda")
            lam = lamvals[0]
            idx += 1
        mono = None
        if idx < len(data_lines):
            lineno, line = data_lines[idx]
            mono = _parse_tokens(line.split(), lineno)
        kind = FunctionalKind(tag, lam) if tag in THRESHOLD_TAGS else FunctionalKind(tag)
        return SosCertificate(kind=kind, d=d_seen, R=R, X2=mats[0], X3=mats[1], X4=mats[2], monomial_coeffs=mono)


# -- problem interchange -------------------------------------------------------


def export_problem(problem: SdpProblem, sink, decimals: int | None = None) -> None:
    """Sparse block text export; round-trips exactly through read_problem."""
    decimals = decimals or hp.roundtrip_digits(hp.current_precision())
    own = isinstance(sink, (str, bytes)) or hasattr(sink, "__fspath__")
    fh = open(sink, "w") if own else sink
    try:
        fh.write("* zetasdp sdp problem export\n")
        fh.write(f"*mode {problem.mode.value}\n")
        fh.write(f"*offset {hp.to_str(problem.objective_offset, decimals)}\n")
        fh.write("*blocknames " + " ".join(name for name, _ in problem.blocks) + "\n")
        rows = list(problem.rows)
        for j, row in enumerate(rows, start=1):
            if row.label:
                fh.write(f"*rowlabel {j} {row.label}\n")
        fh.write(f"{len(rows)}\n")
        fh.write(f"{len(problem.blocks)}\n")
        fh.write(" ".join(str(sz) for _, sz in problem.blocks) + "\n")
        fh.write(" ".join(hp.to_str(row.rhs, decimals) for row in rows) + "\n")

        def emit(matno, bi, mat):
            n = mat.shape[0]
            for i in range(n):
                for j in range(i, n):
                    if mat[i, j] != 0:
                        fh.write(
                            f"{matno} {bi + 1} {i + 1} {j + 1} {hp.to_str(mat[i, j], decimals)}\n"
                        )

        for bi in sorted(problem.costs):
            emit(0, bi, problem.costs[bi])
        for j, row in enumerate(rows, start=1):
            for bi in sorted(row.mats):
                emit(j, bi, row.mats[bi])
    finally:
        if own:
            fh.close()


def read_problem(source, precision: int | None = None) -> SdpProblem:
    own = isinstance(source, (str, bytes)) or hasattr(source, "__fspath__")
    fh = open(source) if own else source
    try:
        raw = fh.read()
    finally:
        if own:
            fh.close()
    with hp.prec(precision or hp.current_precision()):
        mode = Mode.MINIMIZE
        offset = mpfr(0)
        names = None
        labels = {}
        body = []
        for line in raw.splitlines():
            stripped = line.strip()
            if not stripped:
                continue
            if stripped.startswith(("*", '"', "#")):
                if stripped.startswith("*mode "):
                    mode = Mode(stripped.split(None, 1)[1])
                elif stripped.startswith("*offset "):
                    offset = mpfr(stripped.split(None, 1)[1])
                elif stripped.startswith("*blocknames "):
                    names = stripped.split()[1:]
                elif stripped.startswith("*rowlabel "):
                    parts = stripped.split(None, 2)
                    labels[int(parts[1])] = parts[2] if len(parts) > 2 else ""
                continue
            body.append(stripped)
        m = int(body[0])
        nblocks = int(body[1])
        sizes = [abs(int(tok)) for tok in body[2].split()]
        if len(sizes) != nblocks:
            raise CertificateFormatError("block count mismatch")
        rhs = [mpfr(tok) for tok in body[3].split()]
        if len(rhs) != m:
            raise CertificateFormatError("rhs count mismatch")
        if names is None:
            names = [f"B{i}" for i in range(nblocks)]
        mats = {}
        for line in body[4:]:
            toks = line.split()
            if len(toks) != 5:
                raise CertificateFormatError(f"bad entry line: {line!r}")
            matno, bi, i, j = int(toks[0]), int(toks[1]) - 1, int(toks[2]) - 1, int(toks[3]) - 1
            val = mpfr(toks[4])
            key = (matno, bi)
            if key not in mats:
                n = sizes[bi]
                arr = np.empty((n, n), dtype=object)
                arr[:] = mpfr(0)
                mats[key] = arr
            mats[key][i, j] = val
            mats[key][j, i] = val
        rows = LinearConstraintSet()
        for j in range(1, m + 1):
            row_mats = {bi: mat for (matno, bi), mat in mats.items() if matno == j}
            rows.rows.append(ConstraintRow(row_mats, rhs[j - 1], labels.get(j, "")))
        costs = {bi: mat for (matno, bi), mat in mats.items() if matno == 0}
        blocks = tuple((names[i], sizes[i]) for i in range(nblocks))
        return SdpProblem(blocks=blocks, costs=costs, rows=rows, mode=mode, objective_offset=offset)
