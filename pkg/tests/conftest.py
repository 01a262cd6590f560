import pytest

from pacomm.generator import generate
from pacomm.model import preset, solve_eta_star


@pytest.fixture(scope="session")
def example1():
    p = preset("example1")
    return p, solve_eta_star(p)


@pytest.fixture(scope="session")
def sym2():
    p = preset("sym2")
    return p, solve_eta_star(p)


@pytest.fixture(scope="session")
def small_graph(example1):
    p, _ = example1
    return generate(p, 300, 3)


ACCEPTANCE_LINES = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[ACCEPTANCE_LINES] = []


@pytest.fixture
def acceptance_log(request):
    """Record one summary line per acceptance criterion."""
    lines = request.config.stash[ACCEPTANCE_LINES]

    def log(number: int, checks: dict) -> bool:
        ok = all(passed for passed, _ in checks.values())
        detail = "; ".join(f"{name}: {'ok' if passed else 'FAILED'} ({info})" for name, (passed, info) in checks.items())
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'} | {detail}"
        lines.append((number, line))
        print(line)
        return ok

    return log


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
