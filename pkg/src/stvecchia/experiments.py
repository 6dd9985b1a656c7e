"""Configuration sweeps: KL divergence and ARE for every ordering/distance/policy/M."""
from __future__ import annotations

import csv
import itertools
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .covariance import PARAM_NAMES, CovarianceParams, build_sigma, cholesky
from .data import Dataset
from .errors import CapacityError, DomainError
from .metrics import are, exact_fisher, godambe, kl_divergence
from .neighbors import ConditioningSets, DistanceSpec, build_conditioning_sets
from .ordering import ORDERINGS, make_ordering
from .vecchia import DESK_LIMIT, vecchia_factor

DISTANCES = ("spatial", "temporal", "st")
POLICIES = ("any_sensor", "same_sensor")

SWEEP_COLUMNS = (
    ["ordering", "distance", "policy", "M", "kl", "log_kl", "are_sum", "are_mean", "log_are_mean"]
    + [f"ratio_{k}" for k in PARAM_NAMES]
    + ["wall_ms"]
)


@dataclass
class SweepRow:
    ordering: str
    distance: str
    policy: str
    M: int
    kl: float
    are_sum: float
    are_mean: float
    ratios: dict
    wall_ms: float

    @property
    def log_kl(self) -> float:
        return float(np.log(self.kl)) if self.kl > 0 else float("-inf")

    @property
    def log_are_mean(self) -> float:
        return float(np.log(self.are_mean))

    def as_list(self) -> list:
        return [
            self.ordering, self.distance, self.policy, self.M, self.kl, self.log_kl,
            self.are_sum, self.are_mean, self.log_are_mean,
            *[self.ratios[k] for k in PARAM_NAMES], self.wall_ms,
        ]


def _check_Ms(Ms) -> list[int]:
    Ms = [int(m) for m in Ms]
    if not Ms or any(m < 1 for m in Ms) or any(b <= a for a, b in zip(Ms, Ms[1:])):
        raise DomainError(f"M values must be >= 1 and strictly increasing, got {Ms}")
    return Ms


def run_sweep(
    ds: Dataset,
    prm: CovarianceParams,
    Ms=(5, 10, 20, 40),
    orderings=ORDERINGS,
    distances=DISTANCES,
    policies=POLICIES,
    kappa: float | None = None,
    ordering_distance: str = "st",
    seed: int = 0,
    control: bool = True,
    desk_limit: int | None = None,
    record_timing: bool = True,
) -> list[SweepRow]:
    """KL divergence and ARE for each configuration, in deterministic order.

    ``kappa`` scales time in the spatio-temporal distance (both for neighbor
    search and for the maxmin/middleout orderings, which use
    ``ordering_distance``); it defaults to ``prm.kappa``.  With ``control``
    a full-conditioning row (``ordering="full"``, ``M = n - 1``) is appended.
    ``wall_ms`` is 0 when ``record_timing`` is false so reruns are
    byte-identical.
    """
    limit = DESK_LIMIT if desk_limit is None else desk_limit
    if ds.n > limit:
        raise CapacityError(
            f"sweep needs dense {ds.n}x{ds.n} covariance work, above the desk limit {limit}; "
            "subsample the data (simulate with a smaller n or pass a subsample size)"
        )
    Ms = _check_Ms(Ms)
    kappa = prm.kappa if kappa is None else kappa
    sig = build_sigma(ds, prm)
    logdet = 2.0 * float(np.sum(np.log(np.diag(cholesky(sig)))))
    fisher = exact_fisher(ds, prm, PARAM_NAMES, desk_limit=limit)
    order_spec = DistanceSpec(ordering_distance, kappa)
    perms = {o: make_ordering(ds, o, order_spec, seed=seed) for o in orderings}

    def evaluate(tag, dist, pol, M, perm, sets):
        t0 = time.perf_counter()
        factor = vecchia_factor(ds, prm, perm, sets, desk_limit=limit)
        kl = kl_divergence(sig, factor, logdet)
        res = are(godambe(ds, prm, perm, sets, PARAM_NAMES, desk_limit=limit, fisher=fisher))
        ms = 1e3 * (time.perf_counter() - t0) if record_timing else 0.0
        return SweepRow(tag, dist, pol, M, kl, res.total, res.mean, res.ratios, round(ms, 3))

    rows = []
    for o, dist, pol in itertools.product(orderings, distances, policies):
        spec = DistanceSpec(dist, kappa)
        for M in Ms:
            sets = build_conditioning_sets(ds, perms[o], M, spec, pol)
            rows.append(evaluate(o, dist, pol, M, perms[o], sets))
    if control:
        perm = np.arange(ds.n)
        sets = ConditioningSets.from_lists([list(range(i)) for i in range(ds.n)], m=max(ds.n - 1, 1))
        rows.append(evaluate("full", "st", "any_sensor", max(ds.n - 1, 1), perm, sets))
    return rows


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_sweep_csv(path, rows: list[SweepRow]) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_COLUMNS)
        for r in rows:
            w.writerow([_fmt(v) for v in r.as_list()])


def read_sweep_csv(path) -> list[dict]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        out = []
        for rec in csv.DictReader(fh):
            d = dict(rec)
            for k in SWEEP_COLUMNS[3:]:
                d[k] = int(d[k]) if k == "M" else float(d[k])
            out.append(d)
        return out


def mean_log_kl(rows, orderings, distance="st", policy="any_sensor", M=10) -> float:
    """Mean ``log_kl`` over the rows matching the given orderings and setting."""
    vals = [
        r.log_kl if isinstance(r, SweepRow) else r["log_kl"]
        for r in rows
        if _get(r, "ordering") in orderings and _get(r, "distance") == distance
        and _get(r, "policy") == policy and _get(r, "M") == M
    ]
    if not vals:
        raise DomainError("no sweep rows match the requested setting")
    return float(np.mean(vals))


def _get(r, k):
    return getattr(r, k) if isinstance(r, SweepRow) else r[k]
