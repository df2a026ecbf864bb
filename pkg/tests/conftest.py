import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

from poiaudio.embeddings import BaselineSource  # noqa: E402
from poiaudio.protocol import embed_manifest  # noqa: E402
from poiaudio.synthetic import generate_synthetic_corpus  # noqa: E402

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

CORPUS_SEED = 0


@pytest.fixture(scope="session")
def corpus(tmp_path_factory):
    """The seed-fixed synthetic corpus: 10 speakers, 20 real + 10 fake each."""
    root = tmp_path_factory.mktemp("corpus")
    manifest = generate_synthetic_corpus(root, n_speakers=10, utts_per_speaker=20,
                                         fakes_per_speaker=10, seed=CORPUS_SEED)
    return root, manifest


@pytest.fixture(scope="session")
def corpus_embeddings(corpus):
    _, manifest = corpus
    return embed_manifest(manifest, BaselineSource(), normalize=True)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# -- acceptance summary: one line per criterion

_ACCEPTANCE = {}


def pytest_runtest_logreport(report):
    marker = getattr(report, "acceptance", None)
    if marker is None:
        return
    if report.when == "call" or report.failed:
        prev = _ACCEPTANCE.get(marker, (True, []))
        _ACCEPTANCE[marker] = (prev[0] and report.passed, prev[1] + [report.nodeid.split("::")[-1]])


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    m = item.get_closest_marker("acceptance")
    if m is not None:
        rep.acceptance = m.args[0]


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for crit in sorted(_ACCEPTANCE, key=lambda c: int(c.split()[0])):
        ok, _ = _ACCEPTANCE[crit]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {crit}")
