"""Generator guarantees: labels must predict pipeline behaviour exactly."""

import collections
import datetime as dt

import pytest

from delaycast.preprocess import run_pipeline
from delaycast.synth import LABELS, SynthConfig, generate, read_labels, write_labels

MIXED = dict(cancelled_rate=0.05, missing_rate=0.04, mismatch_rate=0.04,
             outlier_rate=0.05)


def test_default_config_is_all_clean():
    res = generate(SynthConfig(count=50, seed=1))
    assert set(res.labels) == {"clean"}
    assert len(res.records) == 50


def test_generation_is_deterministic():
    a = generate(SynthConfig(count=300, seed=9, **MIXED))
    b = generate(SynthConfig(count=300, seed=9, **MIXED))
    assert a.labels == b.labels
    assert a.records == b.records
    assert (a.iqr_lower, a.iqr_upper) == (b.iqr_lower, b.iqr_upper)


def test_seed_changes_the_data():
    a = generate(SynthConfig(count=300, seed=9, **MIXED))
    b = generate(SynthConfig(count=300, seed=10, **MIXED))
    assert a.records != b.records


@pytest.mark.parametrize("seed", [0, 1, 2, 3, 4])
def test_pipeline_removals_match_labels_exactly(seed):
    res = generate(SynthConfig(count=400, seed=seed, **MIXED))
    counts = collections.Counter(res.labels)
    retained, report = run_pipeline(list(res.records))
    assert report.removed["cancelled_or_diverted"] == counts["cancelled"]
    assert report.removed["missing_components"] == counts["missing"]
    assert report.removed["sum_mismatch"] == counts["mismatch"]
    assert report.removed["outlier"] == counts["outlier"]
    assert report.retained_count == counts["clean"]
    # survivors are exactly the clean-labelled rows, in order
    clean_rows = [r for r, lab in zip(res.records, res.labels) if lab == "clean"]
    assert retained == clean_rows


def test_pipeline_fences_match_generator_fences():
    res = generate(SynthConfig(count=500, seed=3, **MIXED))
    _, report = run_pipeline(list(res.records))
    assert report.iqr_lower == pytest.approx(res.iqr_lower, abs=1e-9)
    assert report.iqr_upper == pytest.approx(res.iqr_upper, abs=1e-9)


def test_zero_inflation_pins_lower_fence_below_zero():
    res = generate(SynthConfig(count=500, seed=5, outlier_rate=0.05))
    assert res.iqr_lower < 0.0
    totals = [r.arr_delay for r, lab in zip(res.records, res.labels) if lab == "clean"]
    assert min(totals) == 0.0


def test_clean_rows_sum_exactly_and_respect_cap():
    cfg = SynthConfig(count=400, seed=2, **MIXED)
    res = generate(cfg)
    for rec, lab in zip(res.records, res.labels):
        if lab != "clean":
            continue
        vec = rec.delay_components()
        assert vec is not None
        assert vec.total() == rec.arr_delay
        assert rec.arr_delay <= cfg.delay_cap


def test_mismatch_rows_break_the_sum_by_at_least_two():
    res = generate(SynthConfig(count=400, seed=2, **MIXED))
    seen = 0
    for rec, lab in zip(res.records, res.labels):
        if lab != "mismatch":
            continue
        seen += 1
        assert abs(rec.delay_components().total() - rec.arr_delay) >= 2.0
    assert seen > 0


def test_outlier_totals_sit_strictly_above_the_fence():
    res = generate(SynthConfig(count=400, seed=2, **MIXED))
    outliers = [r.arr_delay for r, lab in zip(res.records, res.labels) if lab == "outlier"]
    assert outliers
    assert min(outliers) > res.iqr_upper
    # components still sum exactly: these rows survive the sum check
    for rec, lab in zip(res.records, res.labels):
        if lab == "outlier":
            assert rec.delay_components().total() == rec.arr_delay


def test_cancelled_rows_carry_a_flag_and_nothing_else_does():
    res = generate(SynthConfig(count=400, seed=6, **MIXED))
    for rec, lab in zip(res.records, res.labels):
        flagged = rec.cancelled == 1 or rec.diverted == 1
        assert flagged == (lab == "cancelled")


def test_records_are_chronological():
    res = generate(SynthConfig(count=300, seed=4, **MIXED))
    keys = [(r.fl_date, r.crs_dep_time) for r in res.records]
    assert keys == sorted(keys)


def test_vocab_respects_config_and_routes_avoid_self_loops():
    cfg = SynthConfig(count=300, seed=8, airlines=3, airports=4)
    res = generate(cfg)
    assert len({r.airline for r in res.records}) <= 3
    airports = {r.origin for r in res.records} | {r.dest for r in res.records}
    assert len(airports) <= 4
    assert all(r.origin != r.dest for r in res.records)


def test_paired_columns_are_deterministic_functions_of_their_base():
    # AIRLINE_DOT / AIRLINE_CODE / DOT_CODE per airline; city per airport
    res = generate(SynthConfig(count=400, seed=11))
    by_airline = {}
    for r in res.records:
        key = (r.airline_dot, r.airline_code, r.dot_code)
        assert by_airline.setdefault(r.airline, key) == key
    by_airport = {}
    for r in res.records:
        assert by_airport.setdefault(r.origin, r.origin_city) == r.origin_city
        assert by_airport.setdefault(r.dest, r.dest_city) == r.dest_city


def test_single_row_and_trivial_rate_extremes():
    res = generate(SynthConfig(count=1, seed=0))
    assert res.labels == ("clean",)
    all_cancelled = generate(SynthConfig(count=40, seed=0, cancelled_rate=1.0))
    assert set(all_cancelled.labels) == {"cancelled"}


def test_invalid_configs_raise():
    with pytest.raises(ValueError):
        SynthConfig(count=0)
    with pytest.raises(ValueError):
        SynthConfig(count=10, cancelled_rate=0.7, missing_rate=0.4)
    with pytest.raises(ValueError):
        SynthConfig(count=10, zero_delay_rate=1.0)
    with pytest.raises(ValueError):
        generate(SynthConfig(count=20, seed=0, outlier_rate=0.9))


def test_labels_round_trip_through_csv(tmp_path):
    res = generate(SynthConfig(count=120, seed=13, **MIXED))
    path = tmp_path / "labels.csv"
    write_labels(res.labels, path)
    assert read_labels(path) == res.labels
    assert set(res.labels) <= set(LABELS)


def test_label_reader_rejects_malformed_files(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("wrong,header\n0,clean\n", encoding="utf-8")
    with pytest.raises(ValueError):
        read_labels(path)
    path.write_text("row,label\n1,clean\n", encoding="utf-8")
    with pytest.raises(ValueError):
        read_labels(path)
    path.write_text("row,label\n0,sideways\n", encoding="utf-8")
    with pytest.raises(ValueError):
        read_labels(path)


def test_start_date_and_flights_per_day_drive_the_calendar():
    cfg = SynthConfig(count=20, seed=3, start_date=dt.date(2023, 5, 1),
                      flights_per_day=10)
    res = generate(cfg)
    assert res.records[0].fl_date == dt.date(2023, 5, 1)
    assert res.records[9].fl_date == dt.date(2023, 5, 1)
    assert res.records[10].fl_date == dt.date(2023, 5, 2)
