"""Trip ingestion, request construction, epoch batching and demand history."""

from __future__ import annotations

import bisect
import csv
import logging
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .network import ParseError, TravelTimeMatrix, ZoneMap

log = logging.getLogger(__name__)

DAY = 86400
WEEK = 7 * DAY
N_HOUR_CLASSES = 48
TRIP_HEADER = ["request_time_s", "passengers", "origin_id", "destination_id"]


class IngestionError(ValueError):
    pass


@dataclass(frozen=True)
class TripRecord:
    request_time: int
    passengers: int
    origin: int
    destination: int


@dataclass(frozen=True)
class Request:
    id: int
    earliest_pickup: int
    riders: int
    origin: int
    destination: int
    shortest_time: int
    max_ride: int
    request_time: int
    arrival_epoch: int = -1


def max_ride_time(shortest_time: int, alpha: float, beta: int) -> int:
    # floor keeps the bound integral without ever loosening it
    return max(int(math.floor(alpha * shortest_time)), beta + shortest_time)


def split_request(trip: TripRecord, capacity: int) -> list[TripRecord]:
    """Split an oversized party into vehicle-sized parts (greedy fill, remainder last)."""
    if capacity < 1:
        raise ValueError("capacity must be at least 1")
    full, rest = divmod(trip.passengers, capacity)
    sizes = [capacity] * full + ([rest] if rest else [])
    return [replace(trip, passengers=n) for n in sizes]


class RequestFactory:
    """Turns trip records into requests with sequential ids."""

    def __init__(self, matrix: TravelTimeMatrix, capacity=4, alpha=1.5, beta=240):
        self.matrix = matrix
        self.capacity = capacity
        self.alpha = alpha
        self.beta = beta
        self.next_id = 0

    def make(self, trip: TripRecord) -> list[Request]:
        t_c = self.matrix(trip.origin, trip.destination)
        out = []
        for part in split_request(trip, self.capacity):
            out.append(
                Request(
                    id=self.next_id,
                    earliest_pickup=part.request_time,
                    riders=part.passengers,
                    origin=trip.origin,
                    destination=trip.destination,
                    shortest_time=t_c,
                    max_ride=max_ride_time(t_c, self.alpha, self.beta),
                    request_time=trip.request_time,
                )
            )
            self.next_id += 1
        return out

    def make_all(self, trips) -> list[Request]:
        return [r for trip in trips for r in self.make(trip)]


def clean_trips(trips) -> list[TripRecord]:
    """Drop zero-length trips with a warning; reject negative times or empty parties."""
    kept = []
    for trip in trips:
        if trip.request_time < 0 or trip.passengers < 1:
            raise IngestionError(f"invalid trip record {trip}")
        if trip.origin == trip.destination:
            log.warning("dropping zero-length trip at t=%d (location %d)", trip.request_time, trip.origin)
            continue
        kept.append(trip)
    return kept


def batch_requests(requests, epoch: int, epoch_seconds: int) -> list[Request]:
    """Requests with request_time in [(epoch-1)*l, epoch*l), tagged with ``arrival_epoch``."""
    times = [r.request_time for r in requests]
    if any(a > b for a, b in zip(times, times[1:])):
        raise IngestionError("request stream is not sorted by request_time")
    lo = bisect.bisect_left(times, (epoch - 1) * epoch_seconds)
    hi = bisect.bisect_left(times, epoch * epoch_seconds)
    return [replace(r, arrival_epoch=epoch) for r in requests[lo:hi]]


class Batcher:
    """Incremental version of :func:`batch_requests` over a sorted stream."""

    def __init__(self, requests, epoch_seconds):
        times = [r.request_time for r in requests]
        if any(a > b for a, b in zip(times, times[1:])):
            raise IngestionError("request stream is not sorted by request_time")
        self.requests = list(requests)
        self.epoch_seconds = epoch_seconds
        self.pos = 0

    def exhausted(self) -> bool:
        return self.pos >= len(self.requests)

    def take(self, epoch: int) -> list[Request]:
        end = epoch * self.epoch_seconds
        out = []
        while self.pos < len(self.requests) and self.requests[self.pos].request_time < end:
            out.append(replace(self.requests[self.pos], arrival_epoch=epoch))
            self.pos += 1
        return out


def hour_class(t: int, origin_weekday=0) -> int:
    """Index of (is_weekend, hour_of_day) for absolute time ``t``; Monday is weekday 0."""
    day = (t // DAY + origin_weekday) % 7
    hour = (t % DAY) // 3600
    return (24 if day >= 5 else 0) + hour


@dataclass
class DemandSeries:
    counts: np.ndarray  # zones x periods
    period_seconds: int
    dest_counts: np.ndarray  # zones x hour-class x zones
    origin_weekday: int = 0

    @property
    def periods_per_day(self) -> int:
        return DAY // self.period_seconds

    @property
    def n_zones(self) -> int:
        return self.counts.shape[0]

    def destination_shares(self, zone: int, hclass: int) -> np.ndarray:
        row = self.dest_counts[zone, hclass]
        total = row.sum()
        return row / total if total else np.zeros_like(row, dtype=float)

    def destination_distribution(self, zone: int, hclass: int) -> dict[int, float]:
        shares = self.destination_shares(zone, hclass)
        return {int(j): float(s) for j, s in enumerate(shares) if s > 0}

    def extend(self, n_periods: int):
        """Grow the count matrix with zero columns up to ``n_periods`` periods."""
        if n_periods > self.counts.shape[1]:
            pad = np.zeros((self.n_zones, n_periods - self.counts.shape[1]), dtype=self.counts.dtype)
            self.counts = np.hstack([self.counts, pad])

    def record(self, t: int, origin_zone: int, dest_zone: int, n=1):
        p = t // self.period_seconds
        self.extend(p + 1)
        self.counts[origin_zone, p] += n
        self.dest_counts[origin_zone, hour_class(t, self.origin_weekday), dest_zone] += n


def aggregate_history(trips, zone_map: ZoneMap, period_seconds: int, capacity=4,
                      n_periods=None, origin_weekday=0) -> DemandSeries:
    trips = list(trips)
    if n_periods is None:
        n_periods = (max((t.request_time for t in trips), default=0) // period_seconds) + 1
    Z = zone_map.n_zones
    series = DemandSeries(
        counts=np.zeros((Z, n_periods), dtype=np.int64),
        period_seconds=period_seconds,
        dest_counts=np.zeros((Z, N_HOUR_CLASSES, Z), dtype=np.int64),
        origin_weekday=origin_weekday,
    )
    for trip in trips:
        n = len(split_request(trip, capacity))
        series.record(trip.request_time, zone_map.zone_of[trip.origin], zone_map.zone_of[trip.destination], n)
    return series


def read_trips_csv(path) -> list[TripRecord]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != TRIP_HEADER:
            raise ParseError(f"{path}: expected header {','.join(TRIP_HEADER)}")
        trips = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                t, n, o, d = (int(v) for v in row)
            except ValueError:
                raise ParseError(f"{path}:{lineno}: expected four integers") from None
            trips.append(TripRecord(t, n, o, d))
    return trips


def write_trips_csv(trips, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRIP_HEADER)
        for t in trips:
            w.writerow([t.request_time, t.passengers, t.origin, t.destination])


def convert_tlc(in_path, out_path, origin_lat, origin_lon, cell_meters, rows, cols, start=None):
    """Map NYC-TLC style rows onto grid location ids.

    Recognises the usual yellow-cab column names. Points are snapped to the
    nearest grid cell; rows falling outside the grid are skipped.
    """
    from datetime import datetime

    m_per_deg_lat = 111_320.0
    m_per_deg_lon = 111_320.0 * math.cos(math.radians(origin_lat))

    def locate(lat, lon):
        r = int(math.floor((lat - origin_lat) * m_per_deg_lat / cell_meters))
        c = int(math.floor((lon - origin_lon) * m_per_deg_lon / cell_meters))
        if 0 <= r < rows and 0 <= c < cols:
            return r * cols + c
        return None

    def pick(row, *names):
        for n in names:
            if n in row and row[n] != "":
                return row[n]
        raise ParseError(f"missing column, tried {names}")

    parsed = []
    with open(in_path, newline="") as fh:
        for row in csv.DictReader(fh):
            when = datetime.fromisoformat(pick(row, "tpep_pickup_datetime", "pickup_datetime"))
            o = locate(float(pick(row, "pickup_latitude")), float(pick(row, "pickup_longitude")))
            d = locate(float(pick(row, "dropoff_latitude")), float(pick(row, "dropoff_longitude")))
            if o is None or d is None or o == d:
                continue
            parsed.append((when, max(1, int(float(pick(row, "passenger_count")))), o, d))
    parsed.sort(key=lambda x: x[0])
    if not parsed:
        write_trips_csv([], out_path)
        return 0
    t0 = datetime.fromisoformat(start) if start else parsed[0][0]
    trips = [TripRecord(int((w - t0).total_seconds()), n, o, d) for w, n, o, d in parsed if w >= t0]
    write_trips_csv(trips, out_path)
    return len(trips)
