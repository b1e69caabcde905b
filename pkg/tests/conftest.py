import datetime as dt
import shutil
from pathlib import Path

import pytest

from cohort_sieve.corpus import PatientRecord, make_document
from cohort_sieve.rules import builtin_path


def make_record(pid, *docs, gold=None):
    """``docs`` are ``(date, text)`` pairs; dates may be ISO strings."""
    documents = []
    for i, (date, text) in enumerate(docs):
        if isinstance(date, str):
            date = dt.date.fromisoformat(date)
        documents.append(make_document(f"{pid}#{i}", pid, date, text))
    return PatientRecord(pid, tuple(documents), dict(gold or {}))


@pytest.fixture
def record_factory():
    return make_record


@pytest.fixture
def synthetic_config(tmp_path) -> Path:
    """The bundled synthetic config, copied next to an empty corpus directory."""
    path = tmp_path / "synthetic.ini"
    shutil.copy(builtin_path("synthetic.ini"), path)
    return path


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
