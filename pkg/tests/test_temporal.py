import datetime as dt

import pytest
from hypothesis import given, settings, strategies as st

from cohort_sieve.temporal import (
    PartialDate,
    TimeWindow,
    extract_timexes,
    recent_documents,
    subtract_months,
    within_window,
)

REF = dt.date(2093, 6, 15)

# (text, reference, normalized, granularity); expected values worked out by hand
FIXTURES = [
    ("last June", dt.date(2018, 12, 15), "2018-06", "month"),
    ("MI in June 2017", REF, "2017-06", "month"),
    ("3 months ago", REF, "2093-03-15", "day"),
    ("seen on 03/04/2090", REF, "2090-03-04", "day"),
    ("on 2090-3-4", REF, "2090-03-04", "day"),
    ("June 15, 2017", REF, "2017-06-15", "day"),
    ("Sept. 3rd 2091", REF, "2091-09-03", "day"),
    ("in 6/2017", REF, "2017-06", "month"),
    ("back in 2085", REF, "2085", "year"),
    ("last June", dt.date(2093, 6, 15), "2092-06", "month"),
    ("last June", dt.date(2093, 7, 1), "2093-06", "month"),
    ("last december", dt.date(2093, 1, 10), "2092-12", "month"),
    ("two weeks ago", REF, "2093-06-01", "day"),
    ("a year ago", dt.date(2092, 2, 29), "2091-02-28", "day"),
    ("1 month ago", dt.date(2093, 3, 31), "2093-02-28", "day"),
    ("10 days ago", dt.date(2093, 1, 5), "2092-12-26", "day"),
    ("yesterday", dt.date(2093, 1, 1), "2092-12-31", "day"),
    ("March of 2089", REF, "2089-03", "month"),
    ("Jan 2090", REF, "2090-01", "month"),
    ("five years ago", REF, "2088-06-15", "day"),
    ("twelve months ago", REF, "2092-06-15", "day"),
]


@pytest.mark.parametrize("text,ref,expected,gran", FIXTURES)
def test_normalization(text, ref, expected, gran):
    (t,) = extract_timexes(text, ref)
    assert str(t.normalized) == expected and t.granularity == gran


def test_not_dates():
    assert extract_timexes("took 2000 mg of metformin", REF) == []
    assert extract_timexes("seen 3/4/90", REF) == []
    assert extract_timexes("BP 120/80", REF) == []


def test_interval_overlap_cases():
    w = TimeWindow(dt.date(2017, 12, 20), 6)
    assert within_window(PartialDate(2017, 6), w)
    assert not within_window(PartialDate(2016), w)
    assert within_window(PartialDate(2017, 12, 20), TimeWindow(dt.date(2017, 12, 20), 1))
    assert not within_window(PartialDate(2017, 12, 21), w)


def test_month_clamp():
    assert subtract_months(dt.date(2093, 3, 31), 1) == dt.date(2093, 2, 28)


def test_recent_documents(record_factory):
    r = record_factory("p", ("2093-06-15", "a"), ("2093-05-15", "b"), ("2093-03-15", "c"))
    assert sorted(d.raw_text for d in recent_documents(r, 2)) == ["a", "b"]
    assert len(recent_documents(r, 120)) == 3
    single = record_factory("q", ("2093-06-15", "a"))
    assert len(recent_documents(single, 1)) == 1


refs = st.dates(dt.date(1950, 1, 1), dt.date(2190, 12, 31))


@settings(max_examples=200, deadline=None)
@given(refs, st.sampled_from(["january", "june", "december", "feb"]), st.integers(1, 40),
       st.sampled_from(["day", "week", "month", "year"]))
def test_relative_forms_never_future(ref, month, n, unit):
    (last,) = extract_timexes(f"last {month}", ref)
    assert last.normalized.latest() < ref.replace(day=1)
    (ago,) = extract_timexes(f"{n} {unit}s ago", ref)
    assert ago.normalized.earliest() <= ref


partials = st.one_of(
    st.builds(PartialDate, st.integers(2080, 2099)),
    st.builds(PartialDate, st.integers(2080, 2099), st.integers(1, 12)),
    st.dates(dt.date(2080, 1, 1), dt.date(2099, 12, 28)).map(PartialDate.from_date),
)


@settings(max_examples=300, deadline=None)
@given(partials, st.dates(dt.date(2081, 1, 1), dt.date(2099, 12, 31)), st.integers(1, 60), st.integers(0, 60))
def test_window_monotone(t, anchor, months, extra):
    if within_window(t, TimeWindow(anchor, months)):
        assert within_window(t, TimeWindow(anchor, months + extra))


@settings(max_examples=100, deadline=None)
@given(st.lists(st.sampled_from(["Seen", "on", "03/04/2090", "last June", "in 2085", "4 days ago", "BP",
                                 "120/80", "June 15, 2017", "x"]), max_size=8))
def test_offsets_slice_surface(parts):
    text = " ".join(parts)
    for t in extract_timexes(text, REF):
        assert text[t.start:t.end] == t.surface
