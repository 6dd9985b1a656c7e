"""The six observation orderings.

Every function returns a permutation as an int array: position ``k`` holds the
index (obs_id) of the k-th processed observation.  Ties always break by lower
obs_id.
"""
from __future__ import annotations

import numpy as np

from .data import Dataset
from .errors import DomainError
from .neighbors import DistanceSpec, metric_coords

ORDERINGS = ("random", "spatial", "temporal", "maxmin", "middleout", "sensor")


def order_random(ds: Dataset, seed: int = 0) -> np.ndarray:
    return np.random.default_rng(seed).permutation(ds.n)


def order_spatial(ds: Dataset) -> np.ndarray:
    return np.lexsort((ds.obs_id, ds.y, ds.x))


def order_temporal(ds: Dataset) -> np.ndarray:
    return np.lexsort((ds.obs_id, ds.t))


def order_sensor(ds: Dataset) -> np.ndarray:
    """Sensors by earliest timestamp, then each sensor's records in time order."""
    first = np.full(ds.J + 1, np.inf)
    np.minimum.at(first, ds.sensor, ds.t)
    ids = np.arange(1, ds.J + 1)
    rank = np.empty(ds.J + 1, dtype=np.int64)
    rank[np.lexsort((ids, first[1:])) + 1] = np.arange(ds.J)
    return np.lexsort((ds.obs_id, ds.t, rank[ds.sensor]))


def _centroid_distance(pts: np.ndarray) -> np.ndarray:
    return np.sqrt(((pts - pts.mean(axis=0)) ** 2).sum(axis=1))


def order_middleout(ds: Dataset, dist: DistanceSpec | None = None) -> np.ndarray:
    pts = metric_coords(ds, dist or DistanceSpec())
    return np.lexsort((ds.obs_id, _centroid_distance(pts)))


def order_maxmin(ds: Dataset, dist: DistanceSpec | None = None) -> np.ndarray:
    """Exact greedy max-min ordering, O(n^2) time and O(n) memory.

    Starts from the point nearest the centroid; each following point maximises
    its minimum distance to the points already chosen.
    """
    pts = metric_coords(ds, dist or DistanceSpec())
    n = len(pts)
    order = np.empty(n, dtype=np.int64)
    first = int(np.argmin(_centroid_distance(pts)))
    order[0] = first
    mind = np.sqrt(((pts - pts[first]) ** 2).sum(axis=1))
    mind[first] = -np.inf
    for k in range(1, n):
        nxt = int(np.argmax(mind))
        order[k] = nxt
        d = np.sqrt(((pts - pts[nxt]) ** 2).sum(axis=1))
        np.minimum(mind, d, out=mind)
        mind[nxt] = -np.inf
    return order


def make_ordering(ds: Dataset, token: str, dist: DistanceSpec | None = None, seed: int = 0) -> np.ndarray:
    """Dispatch on an ordering token (``random | spatial | temporal | maxmin | middleout | sensor``)."""
    if token == "random":
        return order_random(ds, seed)
    if token == "spatial":
        return order_spatial(ds)
    if token == "temporal":
        return order_temporal(ds)
    if token == "maxmin":
        return order_maxmin(ds, dist)
    if token == "middleout":
        return order_middleout(ds, dist)
    if token == "sensor":
        return order_sensor(ds)
    raise DomainError(f"unknown ordering {token!r}; expected one of {', '.join(ORDERINGS)}")
