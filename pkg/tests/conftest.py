from fractions import Fraction as F

import pytest

from sasaki_cone.algebra import GroupDatum
from sasaki_cone.cli import load_example
from sasaki_cone.cone import MomentCone
from sasaki_cone.polytope import characteristic_polytope


@pytest.fixture(scope="session")
def gl2():
    return load_example("gl2").cone()


@pytest.fixture(scope="session")
def gl2_cp(gl2):
    return characteristic_polytope(gl2, (1, 1))


@pytest.fixture(scope="session")
def sl2xc():
    return load_example("sl2xC").cone()


@pytest.fixture(scope="session")
def sl2xc_cp(sl2xc):
    return characteristic_polytope(sl2xc, (F(4, 3), 0))


@pytest.fixture(scope="session")
def steep():
    return load_example("sl2xC_steep").cone()


@pytest.fixture(scope="session")
def psl2():
    return load_example("psl2xC2").cone()


def psl2_xi(xi2):
    return (0, F(xi2), 5)


@pytest.fixture(scope="session")
def orthant():
    return load_example("orthant3").cone()


def a1_datum(rank=2, root=(1, -1)):
    return GroupDatum.build(rank, [root])


def planar_index2_cone():
    """Cone with normals (1,0),(1,2): primitive, but its apex has lattice index 2."""
    d = GroupDatum.build(2, [])
    return MomentCone.build(d, [[1, 0], [1, 2]])


# ---------------------------------------------------------------------------
# Acceptance summary: one line per criterion, aggregated over its tests

_CRITERIA: dict = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion checked by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or (rep.when != "call" and rep.passed):
        return
    number, title = mark.args
    entry = _CRITERIA.setdefault(number, {"title": title, "ok": True, "failed": []})
    if rep.failed:
        entry["ok"] = False
        entry["failed"].append(item.name)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        e = _CRITERIA[number]
        status = "PASS" if e["ok"] else "FAIL"
        extra = f"  (failed: {', '.join(e['failed'])})" if e["failed"] else ""
        terminalreporter.write_line(f"criterion {number:2d}: {status}  {e['title']}{extra}")
