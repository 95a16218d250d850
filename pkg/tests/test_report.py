import copy
import json
import math

import pytest
from hypothesis import given, settings, strategies as st

from ridedispatch.report import (
    NA, ComparisonError, SimulationReport, bucket_by_size, compare, histogram, improvement, load_report,
    save_report, summarize, wait_stats,
)


def make_report(waits, zones=None, n_zones=2, times=None):
    zones = zones or [0] * len(waits)
    times = times or list(range(len(waits)))
    reqs = []
    for i, (w, z) in enumerate(zip(waits, zones)):
        reqs.append({"id": i, "request_time": times[i], "earliest_pickup": times[i], "origin": z, "destination": 1 - z,
                     "origin_zone": z, "destination_zone": 1 - z, "riders": 1, "shortest_time": 60, "max_ride": 300,
                     "status": "completed", "vehicle": 0, "pickup_time": times[i] + w,
                     "dropoff_time": times[i] + w + 60, "wait": w, "ride": 60})
    return SimulationReport(reqs, [{"id": 0, "idle_seconds": 10, "serving_seconds": 20, "relocating_seconds": 0}],
                            n_zones, 30, occupancy=[None, 1.0, 2.0])


def test_mean_and_population_std():
    s = wait_stats([60, 120])
    assert s["mean"] == 90 and s["std"] == 30


def test_empty_summary():
    s = summarize(SimulationReport([], [], 2, 0))
    assert s["waits"]["count"] == 0 and s["waits"]["mean"] == 0
    assert s["histogram"]["counts"] == [] and s["requests"] == 0


def test_histogram_edges():
    h = histogram([0, 29, 30, 61])
    assert h["edges"] == [0, 30, 60, 90] and h["counts"] == [2, 1, 1]


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(0, 2000), max_size=60))
def test_histogram_conserves_counts(waits):
    h = histogram(waits)
    assert sum(h["counts"]) == len(waits)
    assert h["edges"][:2] in ([0, 30], [0])
    if waits:
        assert h["edges"][-1] > max(waits)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(0, 2000), min_size=1, max_size=60))
def test_stats_match_recomputation(waits):
    s = wait_stats(waits)
    n = len(waits)
    mean = sum(waits) / n
    std = math.sqrt(sum((w - mean) ** 2 for w in waits) / n)
    assert s["mean"] == pytest.approx(mean, rel=1e-9, abs=1e-12)
    assert s["std"] == pytest.approx(std, rel=1e-9, abs=1e-9)
    srt = sorted(waits)
    pos = 0.5 * (n - 1)
    lo = int(math.floor(pos))
    med = srt[lo] + (srt[min(lo + 1, n - 1)] - srt[lo]) * (pos - lo)
    assert s["p50"] == pytest.approx(med, rel=1e-9, abs=1e-12)
    assert s["max"] == max(waits)


def test_improvement_example():
    assert round(improvement(2.51, 3.64), 1) == 31.0
    assert improvement(1.0, 0) == NA


def test_compare_identical_is_zero():
    r = make_report([10, 20, 30], zones=[0, 0, 0])
    c = compare(r, copy.deepcopy(r))
    assert c["improvement"] == 0
    assert c["zones"][0]["improvement"] == 0
    # zone 1 has no requests
    assert c["zones"][1]["improvement"] == NA and c["zones"][1]["mean_a"] == NA


def test_compare_direction():
    a, b = make_report([60, 60]), make_report([120, 120])
    assert compare(a, b)["improvement"] == 50.0


def test_compare_mismatched_trips():
    with pytest.raises(ComparisonError):
        compare(make_report([1, 2]), make_report([1, 2], times=[0, 5]))


def test_bucket_by_size():
    comps = [{"requests": 100, "improvement": 10.0}, {"requests": 45_000, "improvement": 20.0},
             {"requests": 45_500, "improvement": 30.0}, {"requests": 60_000, "improvement": NA}]
    b = bucket_by_size(comps)
    assert [x["instances"] for x in b] == [1, 2, 0]
    assert b[1]["mean_improvement"] == 25.0 and b[2]["mean_improvement"] == NA


def test_save_and_load(tmp_path):
    r = make_report([30, 90], zones=[0, 1])
    summary = save_report(r, tmp_path)
    assert load_report(tmp_path) == r
    assert json.loads((tmp_path / "summary.json").read_text()) == summary
    assert summary["std_convention"] == "population" and summary["mean_occupancy"] == 1.5
    lines = (tmp_path / "requests.csv").read_text().splitlines()
    assert len(lines) == 3 and lines[0].startswith("id,")
    assert (tmp_path / "histogram.dat").read_text().splitlines()[1:] == ["0 0", "30 1", "60 0", "90 1"]


def test_schema_version_checked():
    text = make_report([1]).to_json().replace('"schema_version": 1', '"schema_version": 99')
    with pytest.raises(ValueError):
        SimulationReport.from_json(text)
