"""Suite-wide check that every converged fit satisfies its estimating equations."""

import pytest

from robpspline import solver

EQ_LIMIT = 1e-6

_seen = {"fits": 0, "worst": 0.0}
_current = []
_irls = solver._irls


def _recording_irls(*args, **kwargs):
    result = _irls(*args, **kwargs)
    if result.converged:
        _current.append(result.estimating_eq_norm)
    return result


solver._irls = _recording_irls


@pytest.fixture(autouse=True)
def converged_fits_solve_equations():
    _current.clear()
    yield
    norms = list(_current)
    _current.clear()
    if norms:
        _seen["fits"] += len(norms)
        _seen["worst"] = max(_seen["worst"], max(norms))
        bad = [v for v in norms if not v < EQ_LIMIT]
        assert not bad, f"{len(bad)} converged fits with equation residual >= {EQ_LIMIT}: {bad[:5]}"


def pytest_terminal_summary(terminalreporter):
    if _verdicts:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_verdicts, key=lambda v: int(v.split()[1])):
            terminalreporter.write_line(line)
    terminalreporter.write_line(
        f"converged fits checked: {_seen['fits']}, worst equation residual {_seen['worst']:.3e} "
        f"(limit {EQ_LIMIT:g})")


_verdicts = []


@pytest.fixture(scope="session")
def acceptance_log():
    return _verdicts
