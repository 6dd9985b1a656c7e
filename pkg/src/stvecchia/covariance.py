"""Exponential space-time kernel with nugget and per-sensor offset.

The covariance between observations ``a`` and ``b`` is::

    sigma2 * exp(-|xa - xb| / theta1 - |ta - tb| / theta2)
        + tau2 * [a is b] + gamma * [sensor(a) == sensor(b)]

i.e. the marginal covariance of a latent process plus white noise plus a
random intercept per sensor.  Setting ``gamma = 0`` gives the classical
nugget model.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, replace

import numpy as np
from scipy.linalg import lapack

from .data import Dataset, ObservationRecord
from .errors import DomainError, NumericalError
from .instrument import notify_dense

PARAM_NAMES = ("sigma2", "theta1", "theta2", "tau2", "gamma")


@dataclass(frozen=True)
class CovarianceParams:
    """Covariance parameters (variances in squared value units, ranges in m and s).

    ``kappa`` (m^2/s^2) converts time lags into equivalent squared distance
    for neighbor search; it does not enter the kernel.
    """

    sigma2: float = 0.026
    theta1: float = 4000.0
    theta2: float = 1000.0
    tau2: float = 0.029
    gamma: float = 0.026
    kappa: float = 16.0

    def __post_init__(self):
        for name in ("sigma2", "theta1", "theta2", "tau2", "kappa"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise DomainError(f"{name} must be finite and > 0, got {v!r}")
        if not (np.isfinite(self.gamma) and self.gamma >= 0):
            raise DomainError(f"gamma must be finite and >= 0, got {self.gamma!r}")

    def replace(self, **changes) -> "CovarianceParams":
        return replace(self, **changes)

    def vector(self, names=PARAM_NAMES) -> np.ndarray:
        return np.array([getattr(self, k) for k in names], dtype=float)

    def with_vector(self, values, names=PARAM_NAMES) -> "CovarianceParams":
        return replace(self, **{k: float(v) for k, v in zip(names, values)})

    def as_dict(self) -> dict:
        return asdict(self)


#: Urban PM10 estimates for the hierarchical and classical models;
#: the hierarchical set is the default for simulation.
PM10_HIERARCHICAL = CovarianceParams(sigma2=0.026, theta1=4000.0, theta2=1000.0, tau2=0.029, gamma=0.026)
PM10_CLASSICAL = CovarianceParams(sigma2=0.19, theta1=1.38e4, theta2=8.1e3, tau2=5e-4, gamma=0.0)


def kernel(a: ObservationRecord, b: ObservationRecord, prm: CovarianceParams, same_index: bool) -> float:
    ds = np.hypot(a.x - b.x, a.y - b.y)
    dt = abs(a.t - b.t)
    value = prm.sigma2 * np.exp(-ds / prm.theta1 - dt / prm.theta2)
    if same_index:
        value += prm.tau2
    if a.sensor_id == b.sensor_id:
        value += prm.gamma
    return float(value)


def latent_cov(dspace, dtime, prm: CovarianceParams):
    return prm.sigma2 * np.exp(-dspace / prm.theta1 - dtime / prm.theta2)


def _lags(xa, ya, ta, xb, yb, tb):
    dspace = np.sqrt((xa - xb) ** 2 + (ya - yb) ** 2)
    dtime = np.abs(ta - tb)
    return dspace, dtime


def build_sigma(ds: Dataset, prm: CovarianceParams, idx=None) -> np.ndarray:
    """Dense covariance matrix of the observations (rows ``idx``, default all)."""
    idx = np.arange(ds.n) if idx is None else np.asarray(idx)
    m = len(idx)
    notify_dense(m, m, "build_sigma")
    x, y, t, s = ds.x[idx], ds.y[idx], ds.t[idx], ds.sensor[idx]
    dspace, dtime = _lags(x[:, None], y[:, None], t[:, None], x[None, :], y[None, :], t[None, :])
    sigma = latent_cov(dspace, dtime, prm)
    sigma[np.diag_indices(m)] += prm.tau2
    if prm.gamma:
        sigma += prm.gamma * (s[:, None] == s[None, :])
    return sigma


def sigma_derivatives(ds: Dataset, prm: CovarianceParams, names=PARAM_NAMES, idx=None) -> list[np.ndarray]:
    """Analytic derivatives of :func:`build_sigma` with respect to ``names``."""
    idx = np.arange(ds.n) if idx is None else np.asarray(idx)
    n = len(idx)
    notify_dense(n, n, "sigma_derivatives")
    x, y, t, s = ds.x[idx], ds.y[idx], ds.t[idx], ds.sensor[idx]
    dspace, dtime = _lags(x[:, None], y[:, None], t[:, None], x[None, :], y[None, :], t[None, :])
    rho = np.exp(-dspace / prm.theta1 - dtime / prm.theta2)
    out = []
    for name in names:
        if name == "sigma2":
            out.append(rho)
        elif name == "theta1":
            out.append(prm.sigma2 * rho * dspace / prm.theta1**2)
        elif name == "theta2":
            out.append(prm.sigma2 * rho * dtime / prm.theta2**2)
        elif name == "tau2":
            out.append(np.eye(n))
        elif name == "gamma":
            out.append((s[:, None] == s[None, :]).astype(float))
        else:
            raise KeyError(name)
    return out


def cholesky(a: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor; raises :class:`NumericalError` naming the failing leading minor."""
    c, info = lapack.dpotrf(a, lower=1, clean=1)
    if info > 0:
        raise NumericalError(f"matrix not positive definite: leading minor {info} fails")
    if info < 0:
        raise NumericalError(f"dpotrf: illegal argument {-info}")
    return c


def _mean_vector(ds: Dataset, mean) -> np.ndarray:
    if mean is None:
        return np.zeros(ds.n)
    beta = np.asarray(mean, dtype=float).ravel()
    if len(beta) != ds.p:
        raise DomainError(f"mean coefficients have length {len(beta)}, design has {ds.p} columns")
    return ds.covariates @ beta


def simulate(ds: Dataset, prm: CovarianceParams, mean=None, seed: int = 0, mode: str = "compact") -> np.ndarray:
    """Draw one realisation of the observation vector at the records of ``ds``.

    ``compact`` draws from the marginal Gaussian with the full covariance;
    ``hierarchical`` draws latent process, sensor offsets and nugget
    separately and sums them.  Both have the same distribution.
    """
    rng = np.random.default_rng(seed)
    mu = _mean_vector(ds, mean)
    if mode == "compact":
        L = cholesky(build_sigma(ds, prm))
        return mu + L @ rng.standard_normal(ds.n)
    if mode == "hierarchical":
        latent = build_sigma(ds, prm.replace(tau2=1e-10 * prm.sigma2, gamma=0.0))
        L = cholesky(latent)
        y = L @ rng.standard_normal(ds.n)
        offsets = np.sqrt(prm.gamma) * rng.standard_normal(ds.J)
        noise = np.sqrt(prm.tau2) * rng.standard_normal(ds.n)
        return mu + y + offsets[ds.sensor - 1] + noise
    raise DomainError(f"unknown simulation mode {mode!r}")
