"""Kriging of the latent process at unsampled space-time points.

Predictions target the noise-free process plus mean: the prior variance at a
new point is ``sigma2`` and its covariance with an observation is the latent
kernel only (no nugget, no sensor term, since a grid node has no sensor).
Points are predicted independently of each other.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.spatial import cKDTree

from .covariance import build_sigma, cholesky, latent_cov
from .data import Dataset
from .errors import DomainError, InputError
from .estimate import FitResult
from .neighbors import DistanceSpec, metric_coords
from .vecchia import CHUNK_ELEMS, check_desk


@dataclass(frozen=True, eq=False)
class PredictionResult:
    mean: np.ndarray
    variance: np.ndarray


def as_points(pts, p: int):
    """Normalise prediction points to ``(coords (m, 3), design (m, p))``.

    Accepts a sequence of :class:`~stvecchia.data.PredictionPoint`, an (m, 3)
    coordinate array (intercept-only design), or a ``(coords, design)`` pair.
    """
    if isinstance(pts, tuple) and len(pts) == 2:
        coords = np.asarray(pts[0], dtype=float).reshape(-1, 3)
        design = np.asarray(pts[1], dtype=float).reshape(len(coords), -1)
    elif len(pts) and hasattr(pts[0], "x"):
        coords = np.array([[q.x, q.y, q.t] for q in pts], dtype=float)
        design = np.array([q.covariates for q in pts], dtype=float)
    else:
        coords = np.asarray(pts, dtype=float).reshape(-1, 3)
        design = np.ones((len(coords), 1))
    if design.shape[1] != p:
        raise InputError(f"prediction covariates have length {design.shape[1]}, dataset has p={p}")
    if not (np.all(np.isfinite(coords)) and np.all(np.isfinite(design))):
        raise DomainError("prediction points must be finite")
    return coords, design


def _cross(ds: Dataset, idx, coords, prm):
    dspace = np.sqrt((coords[:, None, 0] - ds.x[idx]) ** 2 + (coords[:, None, 1] - ds.y[idx]) ** 2)
    dtime = np.abs(coords[:, None, 2] - ds.t[idx])
    return latent_cov(dspace, dtime, prm)


def predict_exact(ds: Dataset, fit: FitResult, pts, desk_limit: int | None = None, chunk: int = 2000) -> PredictionResult:
    """Kriging mean and variance using all observations."""
    check_desk(ds.n, desk_limit, "exact prediction")
    coords, design = as_points(pts, ds.p)
    prm = fit.params
    L = cholesky(build_sigma(ds, prm))
    resid = ds.value - ds.covariates @ fit.beta
    alpha = cho_solve((L, True), resid)
    idx = np.arange(ds.n)
    mean = design @ fit.beta
    var = np.empty(len(coords))
    for lo in range(0, len(coords), chunk):
        hi = min(len(coords), lo + chunk)
        k0 = _cross(ds, idx, coords[lo:hi], prm)
        mean[lo:hi] += k0 @ alpha
        v = solve_triangular(L, k0.T, lower=True)
        var[lo:hi] = prm.sigma2 - np.sum(v * v, axis=0)
    return PredictionResult(mean, _clamp(var))


def _clamp(var):
    return np.where((var < 0) & (var > -1e-9), 0.0, var)


def predict_vecchia(ds: Dataset, fit: FitResult, pts, M_pred: int = 30) -> PredictionResult:
    """Kriging from the ``M_pred`` nearest observations of each point.

    Neighbors are found under the distance of ``fit.config``.
    """
    if M_pred < 1:
        raise DomainError("M_pred must be >= 1")
    coords, design = as_points(pts, ds.p)
    prm = fit.params
    spec = DistanceSpec(fit.config.distance, fit.config.kappa)
    k = min(M_pred, ds.n)
    obs = metric_coords(ds, spec)
    tree = cKDTree(obs)
    resid = ds.value - ds.covariates @ fit.beta
    mean = design @ fit.beta
    var = np.empty(len(coords))
    step = max(1, CHUNK_ELEMS // (k * k))
    x, y, t, s = ds.x, ds.y, ds.t, ds.sensor
    eye = np.eye(k, dtype=bool)
    for lo in range(0, len(coords), step):
        hi = min(len(coords), lo + step)
        q = coords[lo:hi]
        _, nb = tree.query(metric_coords(q, spec), k=k)
        nb = np.asarray(nb).reshape(hi - lo, k)
        xn, yn, tn, sn = x[nb], y[nb], t[nb], s[nb]
        dsp = np.sqrt((xn[:, :, None] - xn[:, None, :]) ** 2 + (yn[:, :, None] - yn[:, None, :]) ** 2)
        dtm = np.abs(tn[:, :, None] - tn[:, None, :])
        A = latent_cov(dsp, dtm, prm) + prm.gamma * (sn[:, :, None] == sn[:, None, :])
        A[:, eye] += prm.tau2
        c = latent_cov(np.sqrt((xn - q[:, None, 0]) ** 2 + (yn - q[:, None, 1]) ** 2), np.abs(tn - q[:, None, 2]), prm)
        w = np.linalg.solve(A, c[:, :, None])[:, :, 0]
        mean[lo:hi] += np.einsum("ij,ij->i", w, resid[nb])
        var[lo:hi] = prm.sigma2 - np.einsum("ij,ij->i", w, c)
    return PredictionResult(mean, _clamp(var))


def make_grid(bbox, nx: int = 100, ny: int = 100, times=(0.0,)) -> np.ndarray:
    """``nx * ny * len(times)`` grid nodes as an (m, 3) array; x varies fastest, t slowest."""
    xmin, xmax, ymin, ymax = bbox
    if nx < 1 or ny < 1 or len(times) < 1:
        raise DomainError("grid needs nx, ny >= 1 and at least one time slice")
    gx = np.linspace(xmin, xmax, nx)
    gy = np.linspace(ymin, ymax, ny)
    T, Y, X = np.meshgrid(np.asarray(times, dtype=float), gy, gx, indexing="ij")
    return np.column_stack([X.ravel(), Y.ravel(), T.ravel()])


def interpolate_covariates(ds: Dataset, coords: np.ndarray, spec: DistanceSpec) -> np.ndarray:
    """Design rows for new points, copied from the nearest observation."""
    if ds.p == 1:
        return np.ones((len(coords), 1))
    tree = cKDTree(metric_coords(ds, spec))
    _, nb = tree.query(metric_coords(coords, spec), k=1)
    return ds.covariates[np.asarray(nb).ravel()]


def write_grid_csv(path, coords: np.ndarray, result: PredictionResult) -> None:
    fmt = "{:.17g}".format
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "y", "t", "mean", "variance"])
        for (x, y, t), m, v in zip(coords, result.mean, result.variance):
            w.writerow([fmt(x), fmt(y), fmt(t), fmt(m), fmt(v)])
