"""Synthetic mobile-sensor layouts (random-waypoint paths)."""
from __future__ import annotations

import numpy as np

from .data import Dataset, make_dataset


def _waypoint_path(rng, times, box, speed):
    """Positions at ``times`` for one vehicle moving between random waypoints."""
    pos = rng.uniform(0, box, size=2)
    clock = 0.0
    knots_t, knots_p = [clock], [pos]
    end = times[-1]
    while clock < end:
        target = rng.uniform(0, box, size=2)
        v = speed * rng.uniform(0.5, 1.5)
        clock += max(np.linalg.norm(target - pos) / v, 1e-6)
        pos = target
        knots_t.append(clock)
        knots_p.append(pos)
    knots_t = np.array(knots_t)
    knots_p = np.array(knots_p)
    return np.interp(times, knots_t, knots_p[:, 0]), np.interp(times, knots_t, knots_p[:, 1])


def random_waypoint_layout(
    n: int = 3000,
    sensors: int = 8,
    duration: float = 7200.0,
    box: float = 10000.0,
    speed: float = 8.0,
    seed: int = 0,
) -> Dataset:
    """Observation layout for ``sensors`` vehicles driving for ``duration`` seconds.

    Each vehicle drives straight between uniform random waypoints in a
    ``box`` x ``box`` meter square at ``speed`` m/s (scaled per leg by a
    factor in [0.5, 1.5]).  The ``n`` samples are split evenly across
    vehicles; each vehicle samples from t=0 to t=duration at a regular
    interval with jittered interior timestamps.  Values are zero.
    """
    if n < 1 or sensors < 1:
        raise ValueError("need n >= 1 and sensors >= 1")
    sensors = min(sensors, n)
    rng = np.random.default_rng(seed)
    counts = np.full(sensors, n // sensors)
    counts[: n % sensors] += 1
    xs, ys, ts, ids = [], [], [], []
    for j, c in enumerate(counts, start=1):
        if c == 1:
            t = np.array([0.0])
        else:
            t = np.linspace(0.0, duration, c)
            step = duration / (c - 1)
            t[1:-1] += rng.uniform(-0.25, 0.25, size=c - 2) * step
        x, y = _waypoint_path(rng, t, box, speed)
        xs.append(x)
        ys.append(y)
        ts.append(t)
        ids.append(np.full(c, j))
    return make_dataset(np.concatenate(xs), np.concatenate(ys), np.concatenate(ts), np.concatenate(ids))
