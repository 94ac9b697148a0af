import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ehrlag.cohort import (Channel, Cohort, IngestError, filter_eligible, ingest_events, is_eligible,
                           load_gold_standard, parse_events, serialize_events, shipped_gold_standard,
                           write_events, write_gold_standard)

from conftest import make_patient

HEADER = "patient_id,time_seconds,channel,value\n"


def test_rows_grouped_and_sorted(tmp_path):
    p = tmp_path / "ev.csv"
    p.write_text(HEADER + "A,300,OTHER_DRUG,\nA,100,LAB,4.5\nA,200,TARGET_DRUG,\n")
    cand = ingest_events(p)
    assert list(cand.patients) == ["A"]
    a = cand.patients["A"]
    assert a.time.tolist() == [100, 200, 300]
    assert a.channel.tolist() == [Channel.LAB, Channel.TARGET_DRUG, Channel.OTHER_DRUG]
    assert a.value[0] == 4.5 and np.isnan(a.value[1:]).all()


def test_unknown_channel_names_the_line():
    with pytest.raises(IngestError) as err:
        parse_events(HEADER + "A,1,LAB,1\nA,2,XYZ,\n")
    assert err.value.problems[0][0] == 3
    assert "XYZ" in str(err.value)


def test_empty_file_is_empty_candidate(tmp_path):
    p = tmp_path / "empty.csv"
    p.write_text("")
    assert len(ingest_events(p).patients) == 0


@pytest.mark.parametrize("row", [
    "A,1,LAB,nan",
    "A,1,LAB,inf",
    "A,x,LAB,1",
    "A,1,TARGET_DRUG,3",
    "A,1,LAB",
])
def test_malformed_rows_rejected(row):
    with pytest.raises(IngestError):
        parse_events(HEADER + row + "\n")


def test_duplicate_rows_rejected():
    with pytest.raises(IngestError, match="duplicate"):
        parse_events(HEADER + "A,1,LAB,2\nA,1,LAB,2\n")


def test_conflicting_cotimed_labs_rejected():
    with pytest.raises(IngestError):
        parse_events(HEADER + "A,1,LAB,2\nA,1,LAB,3\n")


def test_missing_file_is_an_error(tmp_path):
    with pytest.raises((IngestError, OSError)):
        ingest_events(tmp_path / "nope.csv")


def test_eligibility_boundaries():
    labs = [(i, 1.0) for i in range(2)]
    # 2 labs + 1 target + 27 others = 30 -> not > 30
    assert not is_eligible(make_patient(labs=labs, target=[100], other=range(200, 227)))
    # 2 + 1 + 29 = 32
    assert is_eligible(make_patient(labs=labs, target=[100], other=range(200, 229)))
    assert not is_eligible(make_patient(labs=[(i, 1.0) for i in range(40)]))


def test_admissions_do_not_count_toward_total():
    labs = [(i, 1.0) for i in range(2)]
    p = make_patient(labs=labs, target=[100], other=range(200, 227), admissions=range(500, 520))
    assert not is_eligible(p)


def test_filter_eligible_counts_and_idempotence():
    good = make_patient("G", labs=[(i, 1.0) for i in range(5)], target=[50], other=range(60, 90))
    bad = make_patient("B", labs=[(0, 1.0)], target=[50], other=range(60, 90))
    c = filter_eligible(Cohort(("D", "L"), {"G": good, "B": bad}))
    assert list(c.patients) == ["G"]
    assert (c.eligibility.retained, c.eligibility.dropped) == (1, 1)
    again = filter_eligible(c)
    assert again == c and again.digest() == c.digest()


def test_shipped_gold_standards():
    kb = shipped_gold_standard("knowledge-base")
    ex = shipped_gold_standard("expert")
    assert len(kb) == 28 and kb.counts() == {1: 11, -1: 9, 0: 8}
    assert len(ex) == 28 and ex.counts() == {1: 8, -1: 5, 0: 15}
    assert sum(kb.entries[k] != ex.entries[k] for k in kb.entries) == 9


def test_gold_validation(tmp_path):
    p = tmp_path / "g.csv"
    p.write_text("drug,lab,direction\nA,B,2\n")
    with pytest.raises(IngestError):
        load_gold_standard(p)
    p.write_text("drug,lab,direction\nA,B,1\nA,B,0\n")
    with pytest.raises(IngestError, match="duplicate"):
        load_gold_standard(p)


def test_gold_round_trip(tmp_path):
    g = shipped_gold_standard("expert")
    write_gold_standard(tmp_path / "g.csv", g)
    back = load_gold_standard(tmp_path / "g.csv", "expert")
    assert back.entries == g.entries


_rows = st.lists(
    st.tuples(st.sampled_from(["p1", "p2", "p3"]), st.integers(0, 10**9),
              st.sampled_from(["LAB", "TARGET_DRUG", "OTHER_DRUG", "ADMISSION"]),
              st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)),
    max_size=40)


@settings(max_examples=60, deadline=None)
@given(_rows)
def test_serialize_round_trip(rows):
    seen, lines = set(), []
    for pid, t, ch, v in rows:
        if (pid, t, ch) in seen:
            continue
        seen.add((pid, t, ch))
        lines.append(f"{pid},{t},{ch},{v!r}" if ch == "LAB" else f"{pid},{t},{ch},")
    cand = parse_events(HEADER + "\n".join(lines) + "\n")
    text = serialize_events(cand.patients)
    again = parse_events(text)
    assert serialize_events(again.patients) == text
    assert set(again.patients) == set(cand.patients)
    for pid in cand.patients:
        assert again.patients[pid] == cand.patients[pid]


def test_write_events_round_trip(tmp_path):
    p = make_patient("Z", labs=[(0, 1.25), (10, 2.0)], target=[5], other=[7], admissions=[3])
    write_events(tmp_path / "e.csv", {"Z": p})
    back = ingest_events(tmp_path / "e.csv")
    assert back.patients["Z"] == p
    assert (tmp_path / "e.csv").read_text() == serialize_events(back.patients)
