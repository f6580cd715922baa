import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

# criterion number -> (passed, message); filled by test_acceptance.py
ACCEPTANCE = {}


@pytest.fixture(scope="session")
def ctrl_cache(tmp_path_factory):
    """Controller cache shared by the session; RSFKIT_CACHE reuses a persistent one."""
    env = os.environ.get("RSFKIT_CACHE")
    if env:
        os.makedirs(env, exist_ok=True)
        return env
    return str(tmp_path_factory.mktemp("ctrl-cache"))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, msg = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {msg}")
