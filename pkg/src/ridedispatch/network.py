"""Spatial substrate: stop locations, travel times and zones."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)


class ConfigurationError(ValueError):
    pass


class ParseError(ValueError):
    pass


@dataclass(frozen=True)
class Location:
    id: int
    row: int
    col: int


class TravelTimeMatrix:
    """Integer travel times in seconds between every pair of locations.

    ``table`` is a list-of-lists copy of ``seconds`` kept for fast scalar
    lookups in the route enumerator; numpy scalar indexing is too slow there.
    """

    def __init__(self, seconds):
        arr = np.asarray(seconds, dtype=np.int64)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise ValueError(f"travel matrix must be square, got shape {arr.shape}")
        if (arr < 0).any():
            raise ValueError("travel times must be non-negative")
        if np.diag(arr).any():
            raise ValueError("travel matrix diagonal must be zero")
        arr.setflags(write=False)
        self.seconds = arr
        self.table = arr.tolist()
        self.metric = triangle_violations(arr) == 0

    def __len__(self):
        return self.seconds.shape[0]

    def __call__(self, a: int, b: int) -> int:
        return self.table[a][b]


def triangle_violations(seconds: np.ndarray) -> int:
    """Count (a, b) pairs where some detour a->c->b beats the direct time."""
    s = np.asarray(seconds, dtype=np.int64)
    n = s.shape[0]
    bad = 0
    for c in range(n):
        via = s[:, c : c + 1] + s[c : c + 1, :]
        bad += int((via < s).sum())
    return bad


@dataclass(frozen=True)
class ZoneMap:
    zone_of: tuple[int, ...]
    members: tuple[tuple[int, ...], ...]
    adjacency: tuple[frozenset, ...]
    tt: np.ndarray  # zone-to-zone travel in whole relocation periods

    @property
    def n_zones(self) -> int:
        return len(self.members)

    def neighbors(self, z: int) -> list[int]:
        return sorted(self.adjacency[z])


def _build_zone_map(zone_of, adjacency, tt) -> ZoneMap:
    n_zones = len(adjacency)
    members = [[] for _ in range(n_zones)]
    for loc, z in enumerate(zone_of):
        members[z].append(loc)
    if any(not m for m in members):
        raise ConfigurationError("every zone must contain at least one location")
    for z, adj in enumerate(adjacency):
        if z in adj:
            raise ConfigurationError(f"zone {z} is listed as its own neighbor")
        for other in adj:
            if z not in adjacency[other]:
                raise ConfigurationError(f"zone adjacency {z}-{other} is not symmetric")
    tt = np.asarray(tt, dtype=np.int64)
    tt.setflags(write=False)
    return ZoneMap(
        zone_of=tuple(int(z) for z in zone_of),
        members=tuple(tuple(m) for m in members),
        adjacency=tuple(frozenset(a) for a in adjacency),
        tt=tt,
    )


def build_grid(rows, cols, cell_seconds, zone_rows, zone_cols, period_seconds=300):
    """Synthetic Manhattan grid split into ``zone_rows x zone_cols`` rectangular zones.

    Returns ``(locations, TravelTimeMatrix, ZoneMap)``. Location ids are row-major.
    Zone-to-zone period counts come from centroid travel time, rounded up.
    """
    if rows < 1 or cols < 1 or zone_rows < 1 or zone_cols < 1:
        raise ConfigurationError("grid and zone dimensions must be positive")
    if rows % zone_rows or cols % zone_cols:
        raise ConfigurationError(
            f"zone grid {zone_rows}x{zone_cols} does not divide location grid {rows}x{cols}"
        )
    block_r, block_c = rows // zone_rows, cols // zone_cols
    locations = [Location(r * cols + c, r, c) for r in range(rows) for c in range(cols)]
    rr = np.array([loc.row for loc in locations])
    cc = np.array([loc.col for loc in locations])
    seconds = cell_seconds * (np.abs(rr[:, None] - rr[None, :]) + np.abs(cc[:, None] - cc[None, :]))
    matrix = TravelTimeMatrix(seconds)

    zone_of = [(loc.row // block_r) * zone_cols + loc.col // block_c for loc in locations]
    n_zones = zone_rows * zone_cols
    adjacency = []
    for z in range(n_zones):
        zr, zc = divmod(z, zone_cols)
        adj = set()
        for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
            nr, nc = zr + dr, zc + dc
            if 0 <= nr < zone_rows and 0 <= nc < zone_cols:
                adj.add(nr * zone_cols + nc)
        adjacency.append(adj)

    # block centroids in cell units
    cen = [((z // zone_cols + 0.5) * block_r, (z % zone_cols + 0.5) * block_c) for z in range(n_zones)]
    tt = np.zeros((n_zones, n_zones), dtype=np.int64)
    for i in range(n_zones):
        for j in range(n_zones):
            if i != j:
                secs = cell_seconds * (abs(cen[i][0] - cen[j][0]) + abs(cen[i][1] - cen[j][1]))
                tt[i, j] = math.ceil(secs / period_seconds)
    return locations, matrix, _build_zone_map(zone_of, adjacency, tt)


def zone_map_from_assignment(zone_of, matrix: TravelTimeMatrix, period_seconds=300) -> ZoneMap:
    """Zone map for an arbitrary network.

    Each zone is represented by its medoid (the member with the smallest total
    travel time to the other members); two zones are adjacent when some
    location of one has its nearest foreign-zone location in the other.
    """
    zone_of = [int(z) for z in zone_of]
    if len(zone_of) != len(matrix):
        raise ConfigurationError("zone map length differs from travel matrix size")
    n_zones = max(zone_of) + 1
    members = [[] for _ in range(n_zones)]
    for loc, z in enumerate(zone_of):
        members[z].append(loc)
    if any(not m for m in members):
        raise ConfigurationError("zone ids must be dense and every zone non-empty")
    s = matrix.seconds
    medoid = []
    for m in members:
        sub = s[np.ix_(m, m)]
        medoid.append(m[int(np.argmin(sub.sum(axis=1)))])
    adjacency = [set() for _ in range(n_zones)]
    zarr = np.array(zone_of)
    for loc, z in enumerate(zone_of):
        others = np.where(zarr != z)[0]
        if len(others) == 0:
            continue
        sym = s[loc, others] + s[others, loc]
        nearest = int(zarr[others[int(np.argmin(sym))]])
        adjacency[z].add(nearest)
        adjacency[nearest].add(z)
    tt = np.zeros((n_zones, n_zones), dtype=np.int64)
    for i in range(n_zones):
        for j in range(n_zones):
            if i != j:
                tt[i, j] = max(1, math.ceil(s[medoid[i], medoid[j]] / period_seconds))
    return _build_zone_map(zone_of, adjacency, tt)


def load_travel_matrix(path) -> TravelTimeMatrix:
    rows = []
    width = None
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            values = [int(tok) for tok in line.split(",")]
        except ValueError as exc:
            raise ParseError(f"{path}:{lineno}: non-integer entry ({exc})") from None
        if any(v < 0 for v in values):
            raise ParseError(f"{path}:{lineno}: negative travel time")
        if width is None:
            width = len(values)
        elif len(values) != width:
            raise ParseError(f"{path}:{lineno}: expected {width} entries, got {len(values)}")
        rows.append(values)
    if not rows or len(rows) != width:
        raise ParseError(f"{path}: matrix is not square ({len(rows)} rows, {width} columns)")
    for i, row in enumerate(rows):
        if row[i] != 0:
            raise ParseError(f"{path}:{i + 1}: diagonal entry must be 0")
    matrix = TravelTimeMatrix(rows)
    if not matrix.metric:
        log.warning("%s: travel matrix violates the triangle inequality", path)
    return matrix


def load_zone_assignment(path, n_locations=None) -> list[int]:
    pairs = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            loc, zone = (int(tok) for tok in line.split(","))
        except ValueError:
            raise ParseError(f"{path}:{lineno}: expected 'location_id,zone_id'") from None
        if loc in pairs:
            raise ParseError(f"{path}:{lineno}: location {loc} listed twice")
        pairs[loc] = zone
    n = n_locations if n_locations is not None else len(pairs)
    missing = [i for i in range(n) if i not in pairs]
    if missing:
        raise ParseError(f"{path}: no zone for locations {missing[:5]}")
    return [pairs[i] for i in range(n)]


def save_travel_matrix(matrix: TravelTimeMatrix, path):
    Path(path).write_text("\n".join(",".join(str(v) for v in row) for row in matrix.table) + "\n")
