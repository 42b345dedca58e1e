import numpy as np
import pytest

from avgq.environments import case_study
from avgq.quantization import QuantizationScheme, build_finite_model
from avgq.solver import solve

# Frozen from an independent oracle: midpoint-rule integration (2000 nodes per
# bin) of a separately written kernel, then exhaustive policy enumeration.
CASE_STUDY_GAIN = {3: 0.3721765684862832, 4: 0.3537901591654525, 5: 0.34384595250173766}
CASE_STUDY_POLICY = {3: (2, 2, 1), 4: (2, 2, 2, 1), 5: (2, 2, 2, 2, 1)}
ORACLE_TOL = 1e-7  # Riemann error of the oracle, not solver error


@pytest.fixture(scope="session")
def cs_model():
    return case_study()


@pytest.fixture(scope="session")
def cs_finite():
    """Exact finite models of the case study for a few bin counts."""
    model = case_study()
    out = {}
    for M in (3, 4, 5):
        scheme = QuantizationScheme.for_model(model, M)
        finite = build_finite_model(model, scheme, method="exact")
        out[M] = (scheme, finite, solve(finite))
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# One line per acceptance criterion, printed after the test session.
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, ok, detail in sorted(ACCEPTANCE, key=lambda r: r[0]):
        terminalreporter.write_line(f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
