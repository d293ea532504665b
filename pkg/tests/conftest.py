import pytest

from vlmctree.tree import ContextTree, parse_node

# Tree pair used throughout: contexts {11, 21, 2} and {1, 12, 22}, oldest symbol first.
T_CONTEXTS = ["11", "21", "2"]
Y_CONTEXTS = ["1", "12", "22"]


def tree_from(contexts, symbols="12", max_depth=2):
    return ContextTree.from_contexts(len(symbols), max_depth,
                                     [parse_node(c, symbols, oldest_first=True) for c in contexts])


@pytest.fixture
def tree_pair():
    return tree_from(T_CONTEXTS), tree_from(Y_CONTEXTS)


_acceptance = {}


def pytest_runtest_logreport(report):
    props = dict(report.user_properties)
    crit = props.get("criterion")
    if crit is None:
        return
    if report.when == "call" or report.outcome != "passed":
        entry = _acceptance.setdefault(crit, {"title": props.get("title", ""), "ok": True})
        entry["ok"] = entry["ok"] and report.outcome == "passed"


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for crit in sorted(_acceptance):
        entry = _acceptance[crit]
        terminalreporter.write_line(f"criterion {crit}: {'PASS' if entry['ok'] else 'FAIL'}  {entry['title']}")
