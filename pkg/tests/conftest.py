import numpy as np
import pytest

from satdelay.topology import Topology

GRAPH1 = np.array([[0, 1, 0, 1], [1, 0, 1, 0], [0, 1, 0, 1], [1, 0, 1, 0]], dtype=float)
GRAPH2 = np.array(
    [[0, 1, 0, 1, 0], [1, 0, 1, 0, 0], [0, 1, 0, 1, 1], [0, 0, 0, 0, 1], [0, 0, 0, 1, 0]], dtype=float
)
X0_GRAPH1 = [0.0, 230.0, 110.0, 40.0]
X0_GRAPH2 = [0.0, 230.0, 110.0, 40.0, 170.0]


@pytest.fixture
def graph1():
    return Topology(GRAPH1)


@pytest.fixture
def graph2():
    return Topology(GRAPH2)



TAU1_GRID = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6]


@pytest.fixture(scope="session")
def lmi_tables():
    """Lyapunov margins for the table scenarios, computed once per session.

    Maps ``(graph, law)`` to ``(rows, equal_delay)`` of LmiMargin objects;
    ``"seconds"`` holds the total wall time.
    """
    import time

    from satdelay.lmi import equal_delay_margin_lmi, lmi_margin

    start = time.perf_counter()
    out = {}
    for name, adj, laws in (("graph1", GRAPH1, ("u1", "u2", "u3", "u4")), ("graph2", GRAPH2, ("u1", "u2"))):
        topo = Topology(adj)
        for law in laws:
            rows = [lmi_margin(topo, law, t1) for t1 in TAU1_GRID]
            out[(name, law)] = (rows, equal_delay_margin_lmi(topo, law))
    out["seconds"] = time.perf_counter() - start
    return out


_ACCEPTANCE = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    number = getattr(item.function, "criterion", None)
    if number is None or report.when != "call" and not report.failed:
        return
    detail = dict(item.user_properties).get("detail", "")
    status = "PASS" if report.passed else "FAIL"
    if report.when == "call" or number not in _ACCEPTANCE:
        _ACCEPTANCE[number] = f"criterion {number}: {status}  {detail}".rstrip()


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        terminalreporter.write_line(_ACCEPTANCE[number])
