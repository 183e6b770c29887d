import numpy as np
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


def dense(ch):
    """Float matrix of a channel, for numpy comparisons."""
    return np.asarray(ch.matrix, dtype=float)


# one line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE: dict[int, str] = {}


def criterion(n, ok, detail=""):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}".rstrip()
    ACCEPTANCE[n] = line
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
