"""AIS vessel-traffic records to a 1-D arc-length intensity.

Pings near a geographic line segment are projected onto it with an
equirectangular approximation about the segment midpoint, rescaled to the
working arc-length interval, and smoothed with a Gaussian kernel into an
intensity on the grid.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from typing import Iterable, Sequence

import numpy as np
from scipy.special import ndtr

from .fields import SeparableKernel, lognormal_perturbation
from .grid import ScalarField, SpaceTimeGrid
from .rng import SeedLike, child_seed, make_rng

log = logging.getLogger(__name__)

EARTH_RADIUS_KM = 6371.0088
REQUIRED_COLUMNS = ("MMSI", "BaseDateTime", "LAT", "LON")
TIME_FORMAT = "%Y-%m-%dT%H:%M:%S"


@dataclass(frozen=True)
class AisRecord:
    timestamp: datetime
    lat: float
    lon: float
    vessel_id: str

    def __post_init__(self):
        if not -90.0 <= self.lat <= 90.0:
            raise ValueError(f"latitude {self.lat} out of range")
        if not -180.0 <= self.lon <= 180.0:
            raise ValueError(f"longitude {self.lon} out of range")


@dataclass(frozen=True)
class SegmentProjection:
    """Line segment from ``start`` to ``end``, each ``(lon, lat)`` in degrees."""

    start: tuple[float, float]
    end: tuple[float, float]
    corridor_km: float = 1.0
    length_km: float = 10.0

    def __post_init__(self):
        if tuple(self.start) == tuple(self.end):
            raise ValueError("segment endpoints must differ")
        if not self.corridor_km > 0:
            raise ValueError("corridor half-width must be positive")
        if not self.length_km > 0:
            raise ValueError("rescale length must be positive")

    def _origin(self) -> tuple[float, float]:
        return (0.5 * (self.start[0] + self.end[0]), 0.5 * (self.start[1] + self.end[1]))

    def to_local_km(self, lon, lat) -> tuple[np.ndarray, np.ndarray]:
        lon0, lat0 = self._origin()
        k = EARTH_RADIUS_KM * math.pi / 180.0
        x = (np.asarray(lon, float) - lon0) * k * math.cos(math.radians(lat0))
        y = (np.asarray(lat, float) - lat0) * k
        return x, y

    @property
    def geographic_length_km(self) -> float:
        x, y = self.to_local_km([self.start[0], self.end[0]], [self.start[1], self.end[1]])
        return float(math.hypot(x[1] - x[0], y[1] - y[0]))

    def project(self, lon, lat) -> tuple[np.ndarray, np.ndarray]:
        """Arc fraction along the segment and perpendicular distance (km)."""
        (ax, bx), (ay, by) = self.to_local_km([self.start[0], self.end[0]], [self.start[1], self.end[1]])
        px, py = self.to_local_km(lon, lat)
        dx, dy = bx - ax, by - ay
        length2 = dx * dx + dy * dy
        u = ((px - ax) * dx + (py - ay) * dy) / length2
        dist = np.abs((px - ax) * dy - (py - ay) * dx) / math.sqrt(length2)
        return u, dist


@dataclass
class ParseResult:
    records: list[AisRecord]
    skipped: int = 0

    def __iter__(self):
        return iter((self.records, self.skipped))


def parse_ais_csv(path) -> ParseResult:
    """Read MarineCadastre-style rows; malformed rows are counted and skipped.

    Exact duplicate rows are dropped. Timestamps are taken as UTC.
    """
    records: list[AisRecord] = []
    skipped = 0
    seen: set[tuple] = set()
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in REQUIRED_COLUMNS if c not in header]
        if missing:
            raise ValueError(f"{path}: missing required columns {missing}")
        for row in reader:
            key = tuple(row.get(c) for c in header)
            if key in seen:
                continue
            seen.add(key)
            try:
                ts = datetime.strptime(row["BaseDateTime"].strip(), TIME_FORMAT).replace(tzinfo=timezone.utc)
                lat, lon = float(row["LAT"]), float(row["LON"])
                if not (math.isfinite(lat) and math.isfinite(lon)):
                    raise ValueError("non-finite coordinate")
                vessel = (row["MMSI"] or "").strip()
                if not vessel:
                    raise ValueError("empty MMSI")
                records.append(AisRecord(ts, lat, lon, vessel))
            except (ValueError, TypeError, AttributeError):
                skipped += 1
    if skipped:
        log.warning("%s: skipped %d malformed rows", path, skipped)
    return ParseResult(records, skipped)


def project_to_segment(
    records: Sequence[AisRecord],
    projection: SegmentProjection,
    time_window: tuple[datetime, datetime] | None = None,
    fold_daily: bool = True,
    event_bin_hours: float | None = None,
) -> list[tuple[float, float]]:
    """Map in-corridor pings to ``(s_km, t_h)``.

    ``t_h`` is the hour of day when ``fold_daily`` is set, otherwise hours
    since the window start. With ``event_bin_hours`` only the first ping per
    vessel per time bin is kept (one arrival event per crossing bin).
    """
    if not records:
        return []
    if time_window is not None:
        start, stop = time_window
        records = [r for r in records if start <= r.timestamp < stop]
    if not records:
        return []
    origin = time_window[0] if time_window is not None else min(r.timestamp for r in records)
    lon = np.array([r.lon for r in records])
    lat = np.array([r.lat for r in records])
    u, dist = projection.project(lon, lat)
    keep = (dist <= projection.corridor_km) & (u >= -1e-12) & (u <= 1 + 1e-12)
    out = []
    seen: set[tuple[str, int]] = set()
    for k in np.flatnonzero(keep):
        rec = records[k]
        elapsed_h = (rec.timestamp - origin) / timedelta(hours=1)
        if event_bin_hours is not None:
            key = (rec.vessel_id, int(math.floor(elapsed_h / event_bin_hours)))
            if key in seen:
                continue
            seen.add(key)
        if fold_daily:
            midnight = rec.timestamp.replace(hour=0, minute=0, second=0, microsecond=0)
            t_h = (rec.timestamp - midnight) / timedelta(hours=1)
        else:
            t_h = elapsed_h
        s = float(np.clip(u[k], 0.0, 1.0)) * projection.length_km
        out.append((s, float(t_h)))
    return out


def _cell_masses(x: np.ndarray, edges: np.ndarray, bandwidth: float) -> np.ndarray:
    """Gaussian mass of each point over each bin, renormalized to one inside the domain."""
    cdf = ndtr((edges[None, :] - x[:, None]) / bandwidth)
    mass = np.diff(cdf, axis=1)
    total = mass.sum(axis=1, keepdims=True)
    return mass / np.where(total > 0, total, 1.0)


def smooth_intensity(
    points: Iterable[tuple[float, float]], grid: SpaceTimeGrid, bandwidth_s: float = 0.5, bandwidth_t: float = 1.0
) -> ScalarField:
    """Gaussian kernel intensity whose total mass equals the number of in-domain points."""
    if not (bandwidth_s > 0 and bandwidth_t > 0):
        raise ValueError("bandwidths must be positive")
    pts = np.asarray(list(points), dtype=float).reshape(-1, 2)
    inside = (
        (pts[:, 0] >= grid.s_min) & (pts[:, 0] <= grid.s_max) & (pts[:, 1] >= grid.t_min) & (pts[:, 1] <= grid.t_max)
    )
    pts = pts[inside]
    if pts.shape[0] == 0:
        return ScalarField.constant(grid, 0.0)
    s_edges = grid.s_min + np.arange(grid.n_s + 1) * grid.ds
    t_edges = grid.t_min + np.arange(grid.n_t + 1) * grid.dt
    ms = _cell_masses(pts[:, 0], s_edges, bandwidth_s)
    mt = _cell_masses(pts[:, 1], t_edges, bandwidth_t)
    counts = ms.T @ mt
    return ScalarField.from_matrix(grid, counts / grid.cell_measure)


def perturbation_samples(lam: ScalarField, kernel: SeparableKernel, M: int, seed: SeedLike) -> list[ScalarField]:
    """``M`` mean-preserving log-Gaussian perturbations of ``lam``, sample ``k`` from child stream ``k``."""
    if M < 1:
        raise ValueError(f"M must be at least 1, got {M}")
    return [lognormal_perturbation(lam, kernel, make_rng(child_seed(seed, k))) for k in range(M)]
