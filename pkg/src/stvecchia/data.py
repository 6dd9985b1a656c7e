"""Observation storage, file I/O, coordinate projection and preprocessing.

A :class:`Dataset` keeps its records column-wise in numpy arrays, stored in
canonical (sensor, time) order.  ``obs_id`` is simply the row index, so every
other module addresses observations by integer position.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Mapping, Sequence

import numpy as np

from .errors import DomainError, EmptyInputError, ParseError, SchemaError

EARTH_RADIUS = 6371000.0


@dataclass(frozen=True)
class ObservationRecord:
    obs_id: int
    x: float
    y: float
    t: float
    sensor_id: int
    value: float
    covariates: tuple[float, ...]


@dataclass(frozen=True)
class PredictionPoint:
    x: float
    y: float
    t: float
    covariates: tuple[float, ...] = (1.0,)


def _frozen(a, dtype=float) -> np.ndarray:
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """Spatio-temporal observations grouped by sensor.

    Parameters
    ----------
    x, y : (n,) arrays
        Projected coordinates in meters.
    t : (n,) array
        Seconds since ``epoch``.
    sensor : (n,) int array
        Sensor ids, contiguous in ``1..J``.
    value : (n,) array
        Observed values (log-concentration after preprocessing).
    covariates : (n, p) array
        Design matrix; column 0 is the intercept.
    """

    x: np.ndarray
    y: np.ndarray
    t: np.ndarray
    sensor: np.ndarray
    value: np.ndarray
    covariates: np.ndarray
    epoch: float = 0.0
    labels: tuple = field(default=())

    def __post_init__(self):
        n = len(self.x)
        object.__setattr__(self, "x", _frozen(self.x))
        object.__setattr__(self, "y", _frozen(self.y))
        object.__setattr__(self, "t", _frozen(self.t))
        object.__setattr__(self, "sensor", _frozen(self.sensor, dtype=np.int64))
        object.__setattr__(self, "value", _frozen(self.value))
        cov = np.array(self.covariates, dtype=float)
        if cov.ndim == 1:
            cov = cov.reshape(n, -1)
        object.__setattr__(self, "covariates", _frozen(cov))
        if n < 1:
            raise EmptyInputError("dataset must contain at least one record")
        for name in ("y", "t", "sensor", "value"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"column {name!r} has length {len(getattr(self, name))}, expected {n}")
        if self.covariates.shape[0] != n:
            raise ValueError("covariate rows do not match record count")
        for name in ("x", "y", "t", "value", "covariates"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise DomainError(f"non-finite entries in {name!r}")
        ids = np.unique(self.sensor)
        if ids[0] != 1 or ids[-1] != len(ids):
            raise DomainError("sensor ids must be contiguous 1..J")
        if not self.labels:
            object.__setattr__(self, "labels", tuple(str(i) for i in ids))

    @property
    def n(self) -> int:
        return len(self.x)

    @property
    def J(self) -> int:
        return int(self.sensor.max())

    @property
    def p(self) -> int:
        return self.covariates.shape[1]

    @property
    def obs_id(self) -> np.ndarray:
        return np.arange(self.n)

    @property
    def coords(self) -> np.ndarray:
        """(n, 3) array of ``x, y, t``."""
        return np.column_stack([self.x, self.y, self.t])

    @property
    def records(self) -> list[ObservationRecord]:
        return list(iter(self))

    def __iter__(self) -> Iterator[ObservationRecord]:
        for i in range(self.n):
            yield self.record(i)

    def __len__(self) -> int:
        return self.n

    def record(self, i: int) -> ObservationRecord:
        return ObservationRecord(
            obs_id=i,
            x=float(self.x[i]),
            y=float(self.y[i]),
            t=float(self.t[i]),
            sensor_id=int(self.sensor[i]),
            value=float(self.value[i]),
            covariates=tuple(float(c) for c in self.covariates[i]),
        )

    def sensor_counts(self) -> np.ndarray:
        return np.bincount(self.sensor, minlength=self.J + 1)[1:]

    def with_values(self, value) -> "Dataset":
        return self.replace(value=value)

    def replace(self, **changes) -> "Dataset":
        kw = dict(
            x=self.x, y=self.y, t=self.t, sensor=self.sensor, value=self.value,
            covariates=self.covariates, epoch=self.epoch, labels=self.labels,
        )
        kw.update(changes)
        return Dataset(**kw)

    def subset(self, idx) -> "Dataset":
        """Rows ``idx`` (in the given order), with sensor ids relabeled contiguously."""
        idx = np.asarray(idx)
        sensor = self.sensor[idx]
        kept = np.unique(sensor)
        remap = np.zeros(self.J + 1, dtype=np.int64)
        remap[kept] = np.arange(1, len(kept) + 1)
        return Dataset(
            x=self.x[idx], y=self.y[idx], t=self.t[idx], sensor=remap[sensor],
            value=self.value[idx], covariates=self.covariates[idx], epoch=self.epoch,
            labels=tuple(self.labels[k - 1] for k in kept),
        )

    def equals(self, other: "Dataset") -> bool:
        return (
            self.epoch == other.epoch
            and all(
                np.array_equal(getattr(self, k), getattr(other, k))
                for k in ("x", "y", "t", "sensor", "value", "covariates")
            )
        )


def make_dataset(x, y, t, sensor, value=None, covariates=None, epoch=0.0) -> Dataset:
    """Build a canonical dataset from raw columns.

    ``sensor`` may hold arbitrary labels; they are relabeled to ``1..J``
    (numeric labels by value, other labels lexicographically) and rows are
    sorted stably by (sensor, t).  An intercept column is prepended to
    ``covariates``.
    """
    x = np.asarray(x, dtype=float).ravel()
    n = len(x)
    if n == 0:
        raise EmptyInputError("no observations")
    y = np.asarray(y, dtype=float).ravel()
    t = np.asarray(t, dtype=float).ravel()
    value = np.zeros(n) if value is None else np.asarray(value, dtype=float).ravel()
    if covariates is None:
        extra = np.empty((n, 0))
    else:
        extra = np.asarray(covariates, dtype=float).reshape(n, -1)
    design = np.column_stack([np.ones(n), extra])
    labels = [str(s) for s in np.asarray(sensor).ravel()]
    uniq = sorted(set(labels), key=_label_key)
    code = {lab: k + 1 for k, lab in enumerate(uniq)}
    sid = np.array([code[lab] for lab in labels], dtype=np.int64)
    order = np.lexsort((np.arange(n), t, sid))
    return Dataset(
        x=x[order], y=y[order], t=t[order], sensor=sid[order], value=value[order],
        covariates=design[order], epoch=float(epoch), labels=tuple(uniq),
    )


def _label_key(label: str):
    try:
        return (0, float(label), label)
    except ValueError:
        return (1, 0.0, label)


def project_lonlat(lon, lat, origin: tuple[float, float]):
    """Local equirectangular projection about ``origin = (lon0, lat0)``.

    Returns ``(x, y)`` in meters east and north of the origin.
    """
    lon = np.asarray(lon, dtype=float)
    lat = np.asarray(lat, dtype=float)
    lon0, lat0 = origin
    for name, v, lim in (("lon", lon, 180.0), ("lat", lat, 90.0), ("origin lon", lon0, 180.0), ("origin lat", lat0, 90.0)):
        if not np.all(np.abs(v) <= lim):
            raise DomainError(f"{name} outside [-{lim}, {lim}]")
    x = EARTH_RADIUS * math.cos(math.radians(lat0)) * np.radians(lon - lon0)
    y = EARTH_RADIUS * np.radians(lat - lat0)
    return x, y


DEFAULT_SCHEMA = {
    "sensor_id": "sensor_id",
    "x": "x",
    "y": "y",
    "lon": "lon",
    "lat": "lat",
    "t": "t",
    "value": "value",
}


def load_observations(
    path,
    schema: Mapping[str, str] | None = None,
    lonlat: bool = False,
    origin: tuple[float, float] | None = None,
    delimiter: str = ",",
) -> Dataset:
    """Read an observation file.

    The header must contain ``sensor_id, x, y, t, value`` (or ``lon, lat`` in
    place of ``x, y`` when ``lonlat`` is set).  Every other column is read as
    a covariate, in file order.  ``schema`` maps these logical names to the
    actual header names.  Lon/lat input is projected about ``origin``, or the
    centroid of the data when ``origin`` is None.
    """
    names = dict(DEFAULT_SCHEMA)
    names.update(schema or {})
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh, delimiter=delimiter))
    rows = [r for r in rows if r and any(c.strip() for c in r)]
    if not rows:
        raise EmptyInputError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    body = rows[1:]
    if not body:
        raise EmptyInputError(f"{path}: no data rows")
    coord_keys = ("lon", "lat") if lonlat else ("x", "y")
    required = ("sensor_id",) + coord_keys + ("t", "value")
    pos = {}
    for key in required:
        col = names[key]
        if col not in header:
            raise SchemaError(f"{path}: missing column {col!r}")
        pos[key] = header.index(col)
    cov_cols = [i for i, h in enumerate(header) if i not in pos.values()]

    numeric_cols = [pos[k] for k in required[1:]] + cov_cols
    data = np.empty((len(body), len(header)))
    sensors = []
    for r, row in enumerate(body, start=2):
        if len(row) != len(header):
            raise ParseError(f"{path}: row {r} has {len(row)} fields, expected {len(header)}")
        sensors.append(row[pos["sensor_id"]].strip())
        for c in numeric_cols:
            try:
                data[r - 2, c] = float(row[c])
            except ValueError:
                raise ParseError(f"{path}: row {r}, column {header[c]!r}: not a number: {row[c]!r}") from None
    a = data[:, pos[coord_keys[0]]]
    b = data[:, pos[coord_keys[1]]]
    if lonlat:
        if origin is None:
            origin = (float(a.mean()), float(b.mean()))
        a, b = project_lonlat(a, b, origin)
    return make_dataset(
        a, b, data[:, pos["t"]], sensors, value=data[:, pos["value"]],
        covariates=data[:, cov_cols],
    )


def save_observations(ds: Dataset, path, covariate_names: Sequence[str] | None = None) -> None:
    """Write ``ds`` in the observation file format (17 significant digits)."""
    p = ds.p - 1
    if covariate_names is None:
        covariate_names = [f"c{k + 1}" for k in range(p)]
    header = ["sensor_id", "x", "y", "t", "value", *covariate_names]
    fmt = "{:.17g}".format
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(ds.n):
            w.writerow(
                [int(ds.sensor[i]), fmt(ds.x[i]), fmt(ds.y[i]), fmt(ds.t[i]), fmt(ds.value[i])]
                + [fmt(c) for c in ds.covariates[i, 1:]]
            )


def _run_starts(t: np.ndarray, gap_factor: float) -> np.ndarray:
    """Start time of the run each (sorted) timestamp belongs to."""
    if len(t) < 2:
        return t.copy()
    dt = np.diff(t)
    step = np.median(dt)
    new_run = np.concatenate([[True], dt > gap_factor * step]) if step > 0 else np.r_[True, np.zeros(len(dt), bool)]
    run_id = np.cumsum(new_run) - 1
    return t[new_run][run_id]


def running_median(v: np.ndarray, window: int) -> np.ndarray:
    """Centered running median; windows are truncated at both ends."""
    if window % 2 != 1 or window < 1:
        raise DomainError("median window must be an odd integer >= 1")
    if window == 1 or len(v) == 0:
        return np.array(v, dtype=float)
    h = window // 2
    padded = np.concatenate([np.full(h, np.nan), v, np.full(h, np.nan)])
    windows = np.lib.stride_tricks.sliding_window_view(padded, window)
    return np.nanmedian(windows, axis=1)


def preprocess(
    ds: Dataset,
    median_window: int = 15,
    warmup: float = 300.0,
    log_transform: bool = True,
    gap_factor: float = 10.0,
) -> Dataset:
    """Per-sensor warm-up trimming, running-median smoothing and log transform.

    A run starts at a sensor's first record or after a gap larger than
    ``gap_factor`` times that sensor's median sampling interval.  Records
    within ``warmup`` seconds of their run start are dropped.
    """
    if median_window % 2 != 1 or median_window < 1:
        raise DomainError("median window must be an odd integer >= 1")
    keep = []
    smoothed = np.array(ds.value, dtype=float)
    for j in range(1, ds.J + 1):
        idx = np.flatnonzero(ds.sensor == j)
        idx = idx[np.argsort(ds.t[idx], kind="stable")]
        t = ds.t[idx]
        idx = idx[t >= _run_starts(t, gap_factor) + warmup]
        smoothed[idx] = running_median(ds.value[idx], median_window)
        keep.append(idx)
    keep = np.sort(np.concatenate(keep))
    if len(keep) == 0:
        raise EmptyInputError("preprocessing removed every record")
    if log_transform:
        bad = keep[ds.value[keep] <= 0]
        if len(bad):
            raise DomainError(f"nonpositive value at obs_id {int(bad[0])}; cannot take log")
    values = smoothed[keep]
    if log_transform:
        values = np.log(values)
    return ds.subset(keep).with_values(values)
