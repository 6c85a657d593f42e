"""Command-line interface tying the pipeline together.

Commands: solve, verify, report, baseline, export.  Machine-readable results
go to stdout; logs and human-readable summaries go to stderr.  Exit codes:
0 success, 1 solve failure, 2 verification failure, 3 I/O or parse problem,
64 usage errors.

Settings resolve in the order: built-in defaults < config file (key=value
lines) < ZETASDP_* environment variables < command-line flags.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import json
import logging
import os
import sys

import gmpy2
from gmpy2 import mpfr

from . import hp
from .certio import CertificateFormatError, export_problem, read_certificate, write_certificate
from .functionals import (
    CandidateFunction,
    SeriesTruncation,
    Tag,
    eval_L,
    eval_Z,
    eval_Z1,
    eval_ZTilde,
    last_positive_crossing,
)
from .report import derive_constants, format_report
from .rigor import verify as rigor_verify
from .sdpcore import SolveOptions
from .search import SearchConfig, SearchError, run_pipeline
from .sosmodel import SosParameterization, assemble

logger = logging.getLogger("zetasdp")

EXIT_OK = 0
EXIT_SOLVE = 1
EXIT_VERIFY = 2
EXIT_IO = 3
EXIT_USAGE = 64

ENV_PREFIX = "ZETASDP_"

CONFIG_KEYS = {
    "precision": int,
    "gap_tol": float,
    "max_iter": int,
    "brent_tol": float,
    "r_lo": float,
    "r_hi": float,
    "lambda_lo": float,
    "lambda_hi": float,
    "lambda_tol": float,
    "lambda_coarse_tol": float,
    "resolve_margin": float,
    "lambda_bump": float,
    "feas_threshold": float,
    "series_k": int,
    "tail_bound": float,
    "decimals": int,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        raise SystemExit(EXIT_USAGE)


def load_settings(config_path: str | None, overrides: dict) -> dict:
    settings = {
        "precision": 256,
        "gap_tol": 1e-30,
        "max_iter": 500,
        "series_k": 15,
        "tail_bound": 1e-10,
        "decimals": 100,
    }
    if config_path:
        try:
            with open(config_path) as fh:
                for lineno, line in enumerate(fh, start=1):
                    line = line.split("#", 1)[0].strip()
                    if not line:
                        continue
                    if "=" not in line:
                        raise ValueError(f"line {lineno}: expected key=value")
                    key, val = (part.strip() for part in line.split("=", 1))
                    if key not in CONFIG_KEYS:
                        raise ValueError(f"line {lineno}: unknown key {key!r}")
                    settings[key] = CONFIG_KEYS[key](val)
        except OSError as exc:
            raise SystemExit(EXIT_IO) from exc
    for key, conv in CONFIG_KEYS.items():
        env = os.environ.get(ENV_PREFIX + key.upper())
        if env is not None:
            settings[key] = conv(env)
    for key, val in overrides.items():
        if val is not None:
            settings[key] = val
    return settings


def make_configs(tag: Tag, settings: dict):
    cfg = SearchConfig.default_for(tag)
    llo, lhi = cfg.lambda_bracket
    cfg = SearchConfig(
        R_bracket=(settings.get("r_lo") or cfg.R_bracket[0], settings.get("r_hi") or cfg.R_bracket[1]),
        brent_tol=settings.get("brent_tol") or cfg.brent_tol,
        lambda_bracket=(settings.get("lambda_lo") or llo, settings.get("lambda_hi") or lhi),
        lambda_tol=settings.get("lambda_tol") or cfg.lambda_tol,
        lambda_coarse_tol=settings.get("lambda_coarse_tol") or cfg.lambda_coarse_tol,
        resolve_margin=settings.get("resolve_margin") or cfg.resolve_margin,
        lambda_bump=settings.get("lambda_bump") or cfg.lambda_bump,
        feas_threshold=settings.get("feas_threshold") or cfg.feas_threshold,
    )
    opts = SolveOptions(
        precision=settings["precision"],
        gap_tol=settings["gap_tol"],
        max_iter=settings["max_iter"],
    )
    trunc = SeriesTruncation(K=settings["series_k"], tail_bound=settings["tail_bound"])
    return cfg, opts, trunc


def _solve_single(tag_value: str, d: int, settings: dict, out_path: str) -> dict:
    tag = Tag(tag_value)
    gmpy2.set_context(gmpy2.context(precision=settings["precision"]))
    cfg, opts, trunc = make_configs(tag, settings)
    result = run_pipeline(tag, d, cfg, opts, trunc)
    cert = result.certificate
    write_certificate(cert, out_path, decimals=settings["decimals"])
    rep = rigor_verify(cert, trunc, precision=settings["precision"])
    record = {
        "kind": tag.value,
        "d": d,
        "R": f"{result.R:.12f}",
        "certificate": out_path,
        "search_value": float(result.value),
        "verified": rep.ok,
        "failing_checks": rep.failing(),
    }
    if rep.functional_bound is not None:
        record["bound"] = [hp.to_str(rep.functional_bound.lo, 30), hp.to_str(rep.functional_bound.hi, 30)]
        bound_report = derive_constants(tag, rep.functional_bound)
        record["report"] = json.loads(format_report(bound_report, "machine"))
    return record


def cmd_solve(args, settings) -> int:
    tag = Tag(args.kind)
    ds = _parse_sweep(args.sweep) if args.sweep else [args.d]
    if any(d is None for d in ds):
        logger.error("solve needs --d or --sweep")
        return EXIT_USAGE
    jobs = []
    for d in ds:
        out = args.out or f"{tag.value}-{d}.txt"
        if len(ds) > 1:
            base, ext = os.path.splitext(args.out or f"{tag.value}.txt")
            out = f"{base}-{d}{ext}"
        jobs.append((d, out))
    records = []
    try:
        if len(jobs) == 1:
            d, out = jobs[0]
            records.append(_solve_single(tag.value, d, settings, out))
        else:
            with concurrent.futures.ProcessPoolExecutor(max_workers=min(len(jobs), os.cpu_count() or 1)) as pool:
                futs = {pool.submit(_solve_single, tag.value, d, settings, out): d for d, out in jobs}
                for fut in concurrent.futures.as_completed(futs):
                    records.append(fut.result())
            records.sort(key=lambda r: r["d"])
    except SearchError as exc:
        logger.error("solve failed: %s", exc)
        return EXIT_SOLVE
    except OSError as exc:
        logger.error("i/o failure: %s", exc)
        return EXIT_IO
    status = EXIT_OK
    for record in records:
        print(json.dumps(record))
        if record["verified"]:
            logger.info("kind=%s d=%d verified bound %s", record["kind"], record["d"],
                        record.get("bound", ["-", "-"])[1])
        else:
            logger.error("verification failed: %s", ", ".join(record["failing_checks"]))
            status = EXIT_VERIFY
    return status


def cmd_verify(args, settings) -> int:
    gmpy2.set_context(gmpy2.context(precision=settings["precision"]))
    trunc = SeriesTruncation(K=settings["series_k"], tail_bound=settings["tail_bound"])
    try:
        cert = read_certificate(
            args.cert,
            expected_kind=Tag(args.kind) if args.kind else None,
            expected_d=args.d,
            precision=settings["precision"],
        )
    except (CertificateFormatError, OSError) as exc:
        logger.error("cannot read certificate: %s", exc)
        return EXIT_IO
    rep = rigor_verify(cert, trunc, precision=settings["precision"])
    print(rep.to_json())
    if not rep.ok:
        logger.error("verification failed: %s", ", ".join(rep.failing()))
        return EXIT_VERIFY
    logger.info("certificate verified")
    return EXIT_OK


def cmd_report(args, settings) -> int:
    gmpy2.set_context(gmpy2.context(precision=settings["precision"]))
    tag = Tag(args.kind) if args.kind else None
    if args.cert:
        trunc = SeriesTruncation(K=settings["series_k"], tail_bound=settings["tail_bound"])
        try:
            cert = read_certificate(args.cert, expected_kind=tag, expected_d=args.d,
                                    precision=settings["precision"])
        except (CertificateFormatError, OSError) as exc:
            logger.error("cannot read certificate: %s", exc)
            return EXIT_IO
        rep = rigor_verify(cert, trunc, precision=settings["precision"])
        if not rep.ok:
            logger.error("verification failed: %s", ", ".join(rep.failing()))
            return EXIT_VERIFY
        bound = rep.functional_bound
        tag = cert.kind.tag
    elif args.bound:
        if tag is None:
            logger.error("report needs --kind with --bound")
            return EXIT_USAGE
        bound = args.bound
    else:
        logger.error("report needs --cert or --bound")
        return EXIT_USAGE
    print(format_report(derive_constants(tag, bound), args.style))
    return EXIT_OK


def cmd_baseline(args, settings) -> int:
    gmpy2.set_context(gmpy2.context(precision=settings["precision"]))
    trunc = SeriesTruncation(K=settings["series_k"], tail_bound=settings["tail_bound"])
    rows = []
    for name, cand in (("Hat", CandidateFunction.hat()), ("Selberg", CandidateFunction.selberg())):
        z = eval_Z(cand)
        zt = eval_ZTilde(cand)
        lv = eval_L(cand)
        z1 = eval_Z1(cand, trunc)
        p = last_positive_crossing(cand, Tag.P, tol=1e-6)
        pt = last_positive_crossing(cand, Tag.PTILDE, tol=1e-6)
        rows.append((name, z, zt, lv, 2 - lv, z1, p, pt))
    header = f"{'function':9s} {'Z':>12s} {'ZTilde':>12s} {'L':>12s} {'2-L':>12s} {'Z1':>12s} {'P':>10s} {'PTilde':>10s}"
    print(header)
    for name, z, zt, lv, twol, z1, p, pt in rows:
        print(
            f"{name:9s} {hp.fixed_str(z, 8):>12s} {hp.fixed_str(zt, 8):>12s} {hp.fixed_str(lv, 8):>12s} "
            f"{hp.fixed_str(twol, 8):>12s} {hp.fixed_str(z1, 8):>12s} {hp.fixed_str(p, 6):>10s} {hp.fixed_str(pt, 6):>10s}"
        )
    return EXIT_OK


def cmd_export(args, settings) -> int:
    gmpy2.set_context(gmpy2.context(precision=settings["precision"]))
    tag = Tag(args.kind)
    trunc = SeriesTruncation(K=settings["series_k"], tail_bound=settings["tail_bound"])
    param = SosParameterization(d=args.d, R=mpfr(args.R))
    try:
        prob = assemble(param, tag, lam=mpfr(args.lam) if args.lam else None,
                        trunc=trunc, precision=settings["precision"])
        export_problem(prob, args.out)
    except OSError as exc:
        logger.error("i/o failure: %s", exc)
        return EXIT_IO
    logger.info("problem written to %s", args.out)
    return EXIT_OK


def _parse_sweep(spec: str) -> list:
    text = spec.strip()
    if text.startswith("d="):
        text = text[2:]
    step = 2
    if ":" in text:
        text, step_s = text.split(":", 1)
        step = int(step_s)
    lo, hi = (int(v) for v in text.split("..", 1))
    return list(range(lo, hi + 1, step))


def build_parser() -> _Parser:
    parser = _Parser(prog="zetasdp", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="key=value settings file")
    parser.add_argument("--precision", type=int, help="working precision in bits")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    kinds = [t.value for t in Tag]
    ps = sub.add_parser("solve", help="search, re-solve, verify, and report one functional")
    ps.add_argument("--kind", required=True, choices=kinds)
    ps.add_argument("--d", type=int)
    ps.add_argument("--sweep", help="degree range, e.g. d=4..12 or 4..12:2")
    ps.add_argument("--out", help="certificate output path")
    for key in ("gap-tol", "max-iter", "brent-tol", "lambda-tol", "resolve-margin",
                "lambda-bump", "decimals", "r-lo", "r-hi", "lambda-lo", "lambda-hi"):
        typ = int if key in ("max-iter", "decimals") else float
        ps.add_argument(f"--{key}", dest=key.replace("-", "_"), type=typ)
    ps.set_defaults(fn=cmd_solve)

    pv = sub.add_parser("verify", help="rigorously verify a certificate file")
    pv.add_argument("--cert", required=True)
    pv.add_argument("--kind", choices=kinds)
    pv.add_argument("--d", type=int)
    pv.set_defaults(fn=cmd_verify)

    pr = sub.add_parser("report", help="derived constants for a bound or certificate")
    pr.add_argument("--kind", choices=kinds)
    pr.add_argument("--cert")
    pr.add_argument("--d", type=int)
    pr.add_argument("--bound", help="exact decimal bound, e.g. 1.3208")
    pr.add_argument("--style", choices=["text", "machine"], default="text")
    pr.set_defaults(fn=cmd_report)

    pb = sub.add_parser("baseline", help="functional values of the hat and Selberg baselines")
    pb.set_defaults(fn=cmd_baseline)

    pe = sub.add_parser("export", help="write the SDP in sparse interchange format")
    pe.add_argument("--kind", required=True, choices=kinds)
    pe.add_argument("--d", type=int, required=True)
    pe.add_argument("--R", required=True)
    pe.add_argument("--lam", help="lambda for threshold kinds")
    pe.add_argument("--out", required=True)
    pe.set_defaults(fn=cmd_export)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(stream=sys.stderr, level=level, format="%(message)s")
    overrides = {key: getattr(args, key, None) for key in CONFIG_KEYS}
    settings = load_settings(args.config, overrides)
    try:
        return args.fn(args, settings)
    except SearchError as exc:
        logger.error("search failed: %s", exc)
        return EXIT_SOLVE


if __name__ == "__main__":
    sys.exit(main())
