import copy

import pytest

from h2memory.corpus import corpus_to_dict, load_fixture_corpus, split_history_query
from h2memory.llm import CallCapture, Gateway, MockBackend
from h2memory.memory import BuildConfig, MemoryBuilder
from h2memory.vectors import HashingEmbedder


@pytest.fixture(scope="session")
def corpus():
    return load_fixture_corpus()


@pytest.fixture
def corpus_doc(corpus):
    return copy.deepcopy(corpus_to_dict(corpus))


@pytest.fixture(scope="session")
def history_indices(corpus):
    history, _ = split_history_query(corpus)
    return [corpus.session_index(s.session_id) for s in history]


@pytest.fixture
def capture():
    return CallCapture(MockBackend())


@pytest.fixture
def gateway(capture):
    return Gateway(capture, sleep=lambda s: None)


@pytest.fixture(scope="session")
def embedder():
    return HashingEmbedder()


@pytest.fixture(scope="session")
def history_bank(corpus, history_indices, embedder):
    builder = MemoryBuilder(Gateway(MockBackend()), embedder, BuildConfig())
    return builder.build(corpus, history_indices)


@pytest.fixture
def fresh_bank(history_bank):
    from h2memory.memory import MemoryBank

    return MemoryBank.from_dict(history_bank.to_dict())


# ---------------------------------------------------------------- acceptance reporting

_CRITERIA: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion a test belongs to")


def pytest_runtest_makereport(item, call):
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    entry = _CRITERIA.setdefault(number, {"title": title, "failed": False, "skipped": False})
    if call.when == "setup" and call.excinfo is not None and call.excinfo.errisinstance(pytest.skip.Exception):
        entry["skipped"] = True
    if call.when == "call" and call.excinfo is not None:
        if call.excinfo.errisinstance(pytest.skip.Exception):
            entry["skipped"] = True
        else:
            entry["failed"] = True


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        e = _CRITERIA[number]
        status = "FAIL" if e["failed"] else "SKIP" if e["skipped"] else "PASS"
        terminalreporter.write_line(f"criterion {number}: {status}  {e['title']}")
