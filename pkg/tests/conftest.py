import numpy as np
import pytest

from ehrlag.cohort import Channel, PatientEvents
from ehrlag.timeline import AlignedTimeline, Parameterization


def make_patient(pid="P1", labs=(), target=(), other=(), admissions=()):
    """PatientEvents from (time, value) labs and plain time lists for the rest."""
    t = [a for a, _ in labs] + list(target) + list(other) + list(admissions)
    c = ([Channel.LAB] * len(labs) + [Channel.TARGET_DRUG] * len(target)
         + [Channel.OTHER_DRUG] * len(other) + [Channel.ADMISSION] * len(admissions))
    v = [b for _, b in labs] + [np.nan] * (len(t) - len(labs))
    t = np.asarray(t, dtype=float)
    c = np.asarray(c, dtype=np.int8)
    v = np.asarray(v, dtype=float)
    order = np.lexsort((c, t))
    return PatientEvents(pid, t[order], c[order], v[order])


def seq_timeline(y, x, z=None, pid="P"):
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    z = np.zeros_like(y) if z is None else np.asarray(z, dtype=float)
    return AlignedTimeline(np.arange(len(y), dtype=float), y, x, z, Parameterization.SEQUENCE, pid)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    try:
        import test_acceptance
    except ImportError:
        return
    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(test_acceptance.RESULTS):
            terminalreporter.write_line(test_acceptance.RESULTS[n])
