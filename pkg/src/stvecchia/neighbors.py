"""Distances, kappa estimation and Vecchia conditioning sets.

All three distances are Euclidean after a coordinate map (see
:func:`metric_coords`), so exact k-nearest-neighbor queries can go through a
KD-tree.  Conditioning sets are built exactly: neighbor search never
approximates, and ties break on (distance, ordered position).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .data import Dataset
from .errors import DomainError, InputError

DISTANCE_TOKENS = {"spatial": "spatial", "temporal": "temporal", "st": "spatiotemporal", "spatiotemporal": "spatiotemporal"}
POLICY_TOKENS = {"any_sensor": "sensor_independent", "same_sensor": "sensor_dependent",
                 "sensor_independent": "sensor_independent", "sensor_dependent": "sensor_dependent"}


@dataclass(frozen=True)
class DistanceSpec:
    kind: str = "spatiotemporal"
    kappa: float = 1.0

    def __post_init__(self):
        kind = DISTANCE_TOKENS.get(self.kind)
        if kind is None:
            raise DomainError(f"unknown distance {self.kind!r}; expected one of spatial, temporal, st")
        object.__setattr__(self, "kind", kind)
        if kind == "spatiotemporal" and not (np.isfinite(self.kappa) and self.kappa > 0):
            raise DomainError("kappa must be > 0 for the spatio-temporal distance")

    @property
    def token(self) -> str:
        return "st" if self.kind == "spatiotemporal" else self.kind


@dataclass(frozen=True)
class ConditioningPolicy:
    kind: str = "sensor_independent"

    def __post_init__(self):
        kind = POLICY_TOKENS.get(self.kind)
        if kind is None:
            raise DomainError(f"unknown conditioning policy {self.kind!r}; expected any_sensor or same_sensor")
        object.__setattr__(self, "kind", kind)

    @property
    def token(self) -> str:
        return "any_sensor" if self.kind == "sensor_independent" else "same_sensor"


@dataclass(frozen=True, eq=False)
class ConditioningSets:
    """Conditioning sets in ordered-position space.

    ``nbr[k]`` lists the positions conditioned on by the k-th ordered
    observation, nearest first, padded with -1 to width ``m``.
    """

    nbr: np.ndarray
    m: int

    @property
    def n(self) -> int:
        return self.nbr.shape[0]

    @property
    def sizes(self) -> np.ndarray:
        return (self.nbr >= 0).sum(axis=1)

    @property
    def sets(self) -> list[np.ndarray]:
        return [row[row >= 0] for row in self.nbr]

    def __getitem__(self, k) -> np.ndarray:
        row = self.nbr[k]
        return row[row >= 0]

    def __len__(self) -> int:
        return self.n

    def is_full(self) -> bool:
        """True when every observation conditions on all its predecessors."""
        return bool(np.all(self.sizes == np.arange(self.n)))

    @classmethod
    def from_lists(cls, sets, m=None) -> "ConditioningSets":
        width = max([len(s) for s in sets] + [0]) if m is None else m
        nbr = np.full((len(sets), max(width, 1) if sets else 0), -1, dtype=np.int64)
        for k, s in enumerate(sets):
            nbr[k, : len(s)] = s
        return cls(nbr=nbr[:, :width] if width else nbr[:, :0], m=width)


def metric_coords(points, spec: DistanceSpec) -> np.ndarray:
    """Map ``(x, y, t)`` rows (or a :class:`Dataset`) into the Euclidean space of ``spec``."""
    if isinstance(points, Dataset):
        points = points.coords
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    if spec.kind == "spatial":
        return points[:, :2].copy()
    if spec.kind == "temporal":
        return points[:, 2:3].copy()
    return np.column_stack([points[:, 0], points[:, 1], np.sqrt(spec.kappa) * points[:, 2]])


def distance(a, b, spec: DistanceSpec) -> float:
    """Distance between two points given as records or ``(x, y, t)`` triples."""
    ax, ay, at = (a.x, a.y, a.t) if hasattr(a, "x") else a
    bx, by, bt = (b.x, b.y, b.t) if hasattr(b, "x") else b
    dx, dy, dt = ax - bx, ay - by, at - bt
    if spec.kind == "spatial":
        return float(np.sqrt(dx * dx + dy * dy))
    if spec.kind == "temporal":
        return float(abs(dt))
    return float(np.sqrt(dx * dx + dy * dy + spec.kappa * dt * dt))


def _dist_rows(q: np.ndarray, pts: np.ndarray) -> np.ndarray:
    return np.sqrt(((q[:, None, :] - pts[None, :, :]) ** 2).sum(axis=-1))


def _knn_tree(tree: cKDTree, pts: np.ndarray, q: np.ndarray, k: int):
    """Exact k nearest points of ``tree`` for each query, ties broken by index.

    Returns (rows, k) index and distance arrays.  Rows whose k-th and
    (k+1)-th distances tie fall back to a ball query so the tie rule is
    honoured exactly.
    """
    size = tree.n
    kk = min(k + 1, size)
    _, idx = tree.query(q, k=kk)
    idx = np.asarray(idx).reshape(len(q), kk)
    d = np.sqrt(((q[:, None, :] - pts[idx]) ** 2).sum(axis=-1))
    order = np.lexsort((idx, d), axis=-1)
    idx = np.take_along_axis(idx, order, axis=-1)
    d = np.take_along_axis(d, order, axis=-1)
    if kk > k:
        ties = np.flatnonzero(d[:, k] <= d[:, k - 1] * (1 + 1e-9))
        for r in ties:
            cand = np.asarray(tree.query_ball_point(q[r], d[r, k - 1] * (1 + 1e-6) + 1e-12), dtype=np.int64)
            cd = np.sqrt(((pts[cand] - q[r]) ** 2).sum(axis=-1))
            o = np.lexsort((cand, cd))[:k]
            idx[r, :k] = cand[o]
            d[r, :k] = cd[o]
    return idx[:, :k], d[:, :k]


def nearest_predecessors(pts: np.ndarray, m: int, block: int = 256) -> np.ndarray:
    """For each row k of ``pts``, the ``min(m, k)`` nearest rows among ``0..k-1``.

    Result is (n, m) padded with -1, nearest first; ties break by lower row.
    """
    n = len(pts)
    out = np.full((n, m), -1, dtype=np.int64)
    for s in range(0, n, block):
        e = min(n, s + block)
        q = pts[s:e]
        b = e - s
        inner_d = _dist_rows(q, q)
        inner_d[np.triu_indices(b)] = np.inf
        inner_i = np.broadcast_to(np.arange(s, e), (b, b))
        if s > 0:
            k = min(m, s)
            tree = cKDTree(pts[:s])
            ti, td = _knn_tree(tree, pts[:s], q, k)
            cand_i = np.concatenate([ti, inner_i], axis=1)
            cand_d = np.concatenate([td, inner_d], axis=1)
        else:
            cand_i, cand_d = np.array(inner_i), inner_d
        order = np.lexsort((cand_i, cand_d), axis=-1)[:, :m]
        chosen = np.take_along_axis(cand_i, order, axis=-1)
        valid = np.isfinite(np.take_along_axis(cand_d, order, axis=-1))
        width = chosen.shape[1]
        out[s:e, :width] = np.where(valid, chosen, -1)
    return out


def build_conditioning_sets(ds: Dataset, perm, M: int, spec: DistanceSpec, policy: ConditioningPolicy | str = "any_sensor") -> ConditioningSets:
    """Nearest-predecessor conditioning sets for the ordering ``perm``.

    ``sensor_independent`` takes the ``min(M, k)`` nearest predecessors.
    ``sensor_dependent`` takes the nearest same-sensor predecessors first and,
    when fewer than ``M`` exist, fills up with the nearest other-sensor
    predecessors.
    """
    if M < 1:
        raise DomainError("conditioning set size M must be >= 1")
    if isinstance(policy, str):
        policy = ConditioningPolicy(policy)
    perm = np.asarray(perm)
    n = len(perm)
    pts = metric_coords(ds.coords[perm], spec)
    if policy.kind == "sensor_independent":
        return ConditioningSets(nearest_predecessors(pts, M), M)

    sensor = ds.sensor[perm]
    nbr = np.full((n, M), -1, dtype=np.int64)
    same_count = np.zeros(n, dtype=np.int64)
    for j in np.unique(sensor):
        sub = np.flatnonzero(sensor == j)
        local = nearest_predecessors(pts[sub], M)
        nbr[sub] = np.where(local >= 0, sub[np.maximum(local, 0)], -1)
        same_count[sub] = np.minimum(np.arange(len(sub)), M)
    for k in np.flatnonzero((same_count < M) & (same_count < np.arange(n))):
        c = same_count[k]
        want = min(M, k) - c
        others = np.flatnonzero(sensor[:k] != sensor[k])
        d = np.sqrt(((pts[others] - pts[k]) ** 2).sum(axis=-1))
        pick = others[np.lexsort((others, d))[:want]]
        nbr[k, c : c + len(pick)] = pick
    return ConditioningSets(nbr, M)


def default_kappa_grid() -> np.ndarray:
    return np.logspace(-4, 8, 13)


def idw_loo_rmse(coords: np.ndarray, z: np.ndarray, kappa: float, neighbors: int = 10, power: float = 2.0) -> float:
    """Leave-one-out inverse-distance-weighting RMSE under the kappa-scaled metric."""
    pts = metric_coords(coords, DistanceSpec("spatiotemporal", kappa))
    n = len(pts)
    k = min(neighbors + 1, n)
    tree = cKDTree(pts)
    _, idx = tree.query(pts, k=k)
    idx = np.asarray(idx).reshape(n, k)
    pred = np.empty(n)
    for i in range(n):
        row = idx[i][idx[i] != i][:neighbors]
        d = np.sqrt(((pts[row] - pts[i]) ** 2).sum(axis=-1))
        zero = d == 0
        if zero.any():
            pred[i] = z[row[zero]].mean()
        else:
            w = d ** (-power)
            pred[i] = (w * z[row]).sum() / w.sum()
    return float(np.sqrt(np.mean((pred - z) ** 2)))


def estimate_kappa(
    ds: Dataset,
    subsample_size: int = 500,
    grid=None,
    idw_neighbors: int = 10,
    idw_power: float = 2.0,
    seed: int = 0,
) -> float:
    """Pick the kappa on ``grid`` minimising leave-one-out IDW RMSE on a random subsample."""
    grid = default_kappa_grid() if grid is None else np.sort(np.asarray(grid, dtype=float).ravel())
    if len(grid) == 0 or np.any(grid <= 0):
        raise InputError("kappa grid must be nonempty with positive entries")
    size = min(subsample_size, ds.n)
    if size < idw_neighbors + 1:
        raise InputError(f"subsample of {size} points is too small for {idw_neighbors} IDW neighbors")
    rng = np.random.default_rng(seed)
    idx = np.sort(rng.choice(ds.n, size=size, replace=False))
    coords, z = ds.coords[idx], ds.value[idx]
    scores = np.array([idw_loo_rmse(coords, z, kap, idw_neighbors, idw_power) for kap in grid])
    return float(grid[int(np.argmin(scores))])
