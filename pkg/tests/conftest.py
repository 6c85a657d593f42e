import random

import gmpy2
import mpmath
import pytest

import zetasdp.hp as hp


@pytest.fixture(autouse=True)
def default_precision():
    """Run every test under a fresh 256-bit context."""
    old = gmpy2.get_context()
    gmpy2.set_context(gmpy2.context(precision=hp.DEFAULT_PRECISION))
    yield
    gmpy2.set_context(old)


@pytest.fixture
def rng():
    return random.Random(20240731)


@pytest.fixture(scope="session")
def z4_pipeline():
    """One shared Z run at d=4: (PipelineResult, verification handles reuse)."""
    gmpy2.set_context(gmpy2.context(precision=hp.DEFAULT_PRECISION))
    from zetasdp.functionals import Tag
    from zetasdp.search import run_pipeline

    return run_pipeline(Tag.Z, 4)


@pytest.fixture(scope="session")
def p4_pipeline():
    gmpy2.set_context(gmpy2.context(precision=hp.DEFAULT_PRECISION))
    from zetasdp.functionals import Tag
    from zetasdp.search import run_pipeline

    return run_pipeline(Tag.P, 4)


def to_mpmath(x, dps=60):
    """Convert an mpfr to an mpmath.mpf through a lossless decimal string."""
    return mpmath.mpf(hp.to_str(x, 90))


def from_mpmath(x):
    return gmpy2.mpfr(mpmath.nstr(x, 70, strip_zeros=False))
