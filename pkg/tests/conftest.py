import itertools

import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from pocbf.polyalg import Polynomial

# property suites run at least this many randomized cases each
CASES = 1000

settings.register_profile(
    "pocbf",
    max_examples=CASES,
    deadline=None,
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("pocbf")

NAMES = ("a", "b", "c", "d", "e", "f")


def monomial_exponents(nvars: int, degree: int):
    return [e for e in itertools.product(range(degree + 1), repeat=nvars) if sum(e) <= degree]


@st.composite
def polynomials(draw, names=NAMES, max_degree=4, max_terms=8, coef=st.integers(-9, 9)):
    nv = draw(st.integers(1, len(names)))
    vs = names[:nv]
    exps = monomial_exponents(nv, max_degree)
    picks = draw(st.lists(st.sampled_from(exps), min_size=0, max_size=max_terms))
    items = []
    for e in picks:
        c = draw(coef)
        items.append(({v: k for v, k in zip(vs, e) if k}, c / 4))
    return Polynomial.from_monomials(items)


def random_polynomial(rng: np.random.Generator, names, max_degree=4, max_terms=8) -> Polynomial:
    exps = monomial_exponents(len(names), max_degree)
    n = int(rng.integers(1, max_terms + 1))
    items = []
    for i in rng.integers(0, len(exps), n):
        items.append(({v: k for v, k in zip(names, exps[i]) if k}, float(rng.normal())))
    return Polynomial.from_monomials(items)


@pytest.fixture(scope="session")
def acc():
    from pocbf.sysmodel import acc_block

    return acc_block(variant=1)


# ------------------------------------------------------- acceptance report
_CRITERIA: dict = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): numbered acceptance criterion")


def pytest_runtest_makereport(item, call):
    m = item.get_closest_marker("criterion")
    if m is None or call.when not in ("setup", "call"):
        return
    n, title = m.args
    prev = _CRITERIA.get(n)
    failed = call.excinfo is not None and not call.excinfo.errisinstance(pytest.skip.Exception)
    if call.when == "call" or failed:
        ok = (prev is None or prev[0]) and not failed
        detail = next((v for k, v in item.user_properties if k == "detail"), "")
        _CRITERIA[n] = (ok, title, detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        ok, title, detail = _CRITERIA[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {title}" + (f" ({detail})" if detail else ""))
