import pytest

ACCEPTANCE = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[ACCEPTANCE] = {}


@pytest.fixture
def criterion(request):
    """``criterion(k, checks)`` records one pass/fail line for criterion ``k``.

    ``checks`` is a list of ``(description, ok)``; the test then asserts them.
    """
    store = request.config.stash[ACCEPTANCE]

    def record(k, checks):
        ok = all(c[1] for c in checks)
        failed = [c[0] for c in checks if not c[1]]
        detail = "; ".join(c[0] for c in checks)
        line = f"{'PASS' if ok else 'FAIL'} criterion {k}: {detail}"
        store[k] = line
        print(line)
        assert ok, "failed: " + " | ".join(failed)

    return record


def pytest_terminal_summary(terminalreporter, config):
    store = config.stash.get(ACCEPTANCE, {})
    if not store:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(store):
        terminalreporter.write_line(store[k])
