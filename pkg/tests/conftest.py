import itertools
from collections import defaultdict

import pytest
from hypothesis import strategies as st

from tourney_audit.tournament import Tournament, members, num_pairs, team_set

A, B, C, D, E, F = range(6)


def cycle3() -> Tournament:
    return Tournament.from_edges(3, [(0, 1), (1, 2), (2, 0)])


def double_cycle() -> Tournament:
    """A,B,C cycle; D,E,F cycle; A beats E,F; B beats D,F; C beats D,E."""
    return Tournament.from_edges(
        6,
        [
            (A, B), (B, C), (C, A),
            (D, E), (E, F), (F, D),
            (A, E), (A, F), (D, A),
            (B, D), (B, F), (E, B),
            (C, D), (C, E), (F, C),
        ],
    )


def cyclic_top6() -> Tournament:
    """A,B,C cycle, each beating every one of the cyclic D,E,F."""
    edges = [(A, B), (B, C), (C, A), (D, E), (E, F), (F, D)]
    edges += [(x, y) for x in (A, B, C) for y in (D, E, F)]
    return Tournament.from_edges(6, edges)


def cycle3_over_d() -> Tournament:
    """3-cycle A->B->C->A, all three beating D."""
    return Tournament.from_edges(4, [(0, 1), (1, 2), (2, 0), (0, 3), (1, 3), (2, 3)])


def rotational(n: int, reach: int) -> Tournament:
    """Team i beats i+1, ..., i+reach (mod n)."""
    return Tournament.from_edges(
        n, [(i, (i + s) % n) for i in range(n) for s in range(1, reach + 1)]
    )


@st.composite
def tournaments(draw, min_n=1, max_n=7):
    n = draw(st.integers(min_n, max_n))
    idx = draw(st.integers(0, (1 << num_pairs(n)) - 1))
    return Tournament.from_index(n, idx)


def brute_top_cycle(t: Tournament) -> int:
    """Smallest nonempty set with no outsider beating a member, by enumeration."""
    best = None
    for mask in range(1, 1 << t.n):
        inside = members(mask)
        dominant = all(not t.beats(o, i) for i in inside for o in range(t.n) if not mask >> o & 1)
        if dominant and (best is None or bin(mask).count("1") < bin(best).count("1")):
            best = mask
    return best


def brute_condorcet(t: Tournament):
    winners = [i for i in range(t.n) if all(t.beats(i, j) for j in range(t.n) if j != i)]
    assert len(winners) <= 1
    return winners[0] if winners else None


def all_subsets(n: int, sizes):
    for s in sizes:
        for combo in itertools.combinations(range(n), s):
            yield team_set(combo)


@pytest.fixture
def c3():
    return cycle3()


@pytest.fixture
def dbl6():
    return double_cycle()


@pytest.fixture
def top6():
    return cyclic_top6()


# -- acceptance criterion summary ------------------------------------------------------

_criteria: dict[int, list[str]] = defaultdict(list)
_titles: dict[int, str] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(num, title): acceptance criterion")


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    marker = report.user_properties and dict(report.user_properties).get("criterion")
    if marker:
        num, title = marker
        _titles[num] = title
        _criteria[num].append(report.outcome)


def pytest_collection_modifyitems(items):
    for item in items:
        m = item.get_closest_marker("criterion")
        if m:
            item.user_properties.append(("criterion", tuple(m.args)))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_criteria):
        outcomes = _criteria[num]
        if "failed" in outcomes:
            verdict = "FAIL"
        elif "passed" in outcomes:
            verdict = "PASS"
        else:
            verdict = "SKIP"
        terminalreporter.write_line(f"criterion {num:>2} [{verdict}] {_titles[num]}")
