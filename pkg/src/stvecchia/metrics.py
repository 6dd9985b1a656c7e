"""KL divergence and asymptotic relative efficiency of Vecchia approximations.

Both compare the Vecchia-implied Gaussian against the true model at the
true parameters, so they need dense n x n work and respect the desk limit.

The Vecchia log-likelihood (zero mean) is ``c(theta) - z' Q(theta) z / 2``
with ``Q = U U'``.  Under ``z ~ N(0, S)``:

* score covariance ``J_kl = tr(Q_k S Q_l S) / 2``
* sensitivity ``H_kl = -E[d^2 loglik]``; every conditional term uses the
  true covariance blocks, so each term is a correctly specified conditional
  model and ``H`` is the sum of their Fisher informations.  A finite
  difference route is available as a cross-check.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.linalg import solve_triangular

from .covariance import PARAM_NAMES, CovarianceParams, build_sigma, cholesky, sigma_derivatives
from .data import Dataset
from .errors import InputError, RankError
from .neighbors import ConditioningSets
from .vecchia import VecchiaFactor, check_desk, vecchia_factor

DENSE_FRACTION = 0.05


@dataclass(frozen=True, eq=False)
class InformationMatrices:
    names: tuple
    exact_fisher: np.ndarray
    H: np.ndarray
    J: np.ndarray
    godambe: np.ndarray

    def exact_variances(self) -> np.ndarray:
        return np.diag(_inverse(self.exact_fisher, "exact Fisher information"))

    def vecchia_variances(self) -> np.ndarray:
        return np.diag(_inverse(self.godambe, "Godambe information"))

    def standard_errors(self) -> dict:
        return dict(zip(self.names, np.sqrt(self.vecchia_variances())))


@dataclass(frozen=True)
class AREResult:
    ratios: dict
    total: float
    mean: float
    aggregate: str

    @property
    def value(self) -> float:
        return self.mean if self.aggregate == "mean" else self.total

    @property
    def log_value(self) -> float:
        return float(np.log(self.value))


def _inverse(a: np.ndarray, what: str) -> np.ndarray:
    """Inverse of a symmetric positive definite matrix after diagonal equilibration.

    Parameters live on very different scales, so the rank check is done on
    the unit-diagonal rescaling.
    """
    a = 0.5 * (a + a.T)
    d = np.diag(a)
    if np.any(d <= 0):
        raise RankError(f"{what} has a nonpositive diagonal entry")
    s = 1.0 / np.sqrt(d)
    c = a * s[:, None] * s[None, :]
    w = np.linalg.eigvalsh(c)
    if w[0] <= 1e-10 * w[-1]:
        raise RankError(f"{what} is singular or indefinite (smallest scaled eigenvalue {w[0]:.3g})")
    return np.linalg.inv(c) * s[:, None] * s[None, :]


def _operator(m: sp.spmatrix):
    """Densify sparse factors that are not actually sparse."""
    n = m.shape[0]
    return m.toarray() if m.nnz > DENSE_FRACTION * n * n else m


def _trace_product(u, b) -> float:
    """``tr(b @ u)`` for sparse or dense ``u``."""
    if sp.issparse(u):
        coo = u.tocoo()
        return float(np.sum(coo.data * b[coo.col, coo.row]))
    return float(np.sum(u * b.T))


def _sparse_t_dense(u, dense):
    return np.asarray(u.T @ dense)


def _matmul(u, dense):
    return np.asarray(u @ dense)


def kl_divergence(sigma_p: np.ndarray, factor: VecchiaFactor, logdet_p: float | None = None) -> float:
    """KL[p || p~] between N(0, sigma_p) and the Vecchia-implied Gaussian.

    ``sigma_p`` is in original observation order.  Tiny negative values from
    rounding (above -1e-9) are clamped to zero.
    """
    n = factor.n
    if sigma_p.shape != (n, n):
        raise InputError(f"covariance is {sigma_p.shape}, factor has n={n}")
    perm = factor.perm
    sig = sigma_p[np.ix_(perm, perm)]
    if logdet_p is None:
        logdet_p = 2.0 * float(np.sum(np.log(np.diag(cholesky(sigma_p)))))
    U = _operator(factor.precision_factor())
    trace = _trace_product(U, _sparse_t_dense(U, sig))
    kl = 0.5 * (trace + factor.logdet - logdet_p - n)
    if -1e-9 < kl < 0:
        kl = 0.0
    return float(kl)


def exact_fisher(ds: Dataset, prm: CovarianceParams, names=PARAM_NAMES, desk_limit: int | None = None) -> np.ndarray:
    """Fisher information ``tr(S^-1 S_k S^-1 S_l) / 2`` of the exact likelihood."""
    check_desk(ds.n, desk_limit, "exact Fisher information")
    L = cholesky(build_sigma(ds, prm))
    W = [solve_triangular(L, solve_triangular(L, dk, lower=True).T, lower=True) for dk in sigma_derivatives(ds, prm, names)]
    q = len(names)
    out = np.empty((q, q))
    for a in range(q):
        for b in range(a, q):
            out[a, b] = out[b, a] = 0.5 * np.sum(W[a] * W[b].T)
    return out


def _q_times_sigma(factor: VecchiaFactor, sig: np.ndarray):
    """``(U, U' S, [Q_k S for each parameter])`` in ordered space."""
    U = _operator(factor.precision_factor())
    B = _sparse_t_dense(U, sig)
    out = []
    for k in range(len(factor.names)):
        dU = _operator(factor.precision_factor_derivative(k))
        out.append(_matmul(dU, B) + _matmul(U, _sparse_t_dense(dU, sig)))
    return U, B, out


def _expected_gradient(ds, prm, perm, sets, names, sig) -> np.ndarray:
    """Gradient of ``-E_p[vecchia loglik]`` at ``prm``, with ``sig`` the true covariance (ordered)."""
    f = vecchia_factor(ds, prm, perm, sets, derivatives=names, method="local")
    U = _operator(f.precision_factor())
    SU = _sparse_t_dense(U, sig).T
    grad = np.empty(len(names))
    for k in range(len(names)):
        dU = _operator(f.precision_factor_derivative(k))
        # tr(Q_k S) / 2 = tr(dU' S U)
        grad[k] = 0.5 * np.sum(f.dcondvar[k] / f.condvar) + _trace_product(dU, SU.T)
    return grad


def _hessian_fd(ds, prm, perm, sets, names, sig, rel_step=1e-4) -> np.ndarray:
    q = len(names)
    H = np.empty((q, q))
    base = prm.vector(names)
    for l in range(q):
        h = rel_step * base[l] if base[l] > 0 else rel_step
        up, dn = base.copy(), base.copy()
        up[l] += h
        dn[l] -= h
        gu = _expected_gradient(ds, prm.with_vector(up, names), perm, sets, names, sig)
        gd = _expected_gradient(ds, prm.with_vector(dn, names), perm, sets, names, sig)
        H[:, l] = (gu - gd) / (2 * h)
    return 0.5 * (H + H.T)


def godambe(
    ds: Dataset,
    prm: CovarianceParams,
    perm,
    sets: ConditioningSets,
    names=PARAM_NAMES,
    hessian: str = "analytic",
    desk_limit: int | None = None,
    fisher: np.ndarray | None = None,
) -> InformationMatrices:
    """Sensitivity, variability and Godambe information of the Vecchia likelihood.

    Parameters
    ----------
    names : sequence of str
        Free covariance parameters; the rest are held at ``prm``.
    hessian : {"analytic", "fd"}
        ``analytic`` sums the conditional-term Fisher informations;
        ``fd`` differentiates the expected score numerically (relative step
        1e-4, central differences).
    fisher : array, optional
        Precomputed :func:`exact_fisher` for the same ``names``.
    """
    names = tuple(names)
    check_desk(ds.n, desk_limit, "Godambe information")
    perm = np.asarray(perm)
    factor = vecchia_factor(ds, prm, perm, sets, derivatives=names, desk_limit=desk_limit)
    sig = build_sigma(ds, prm, idx=perm)
    _, _, QS = _q_times_sigma(factor, sig)
    q = len(names)
    J = np.empty((q, q))
    for a in range(q):
        for b in range(a, q):
            J[a, b] = J[b, a] = 0.5 * np.sum(QS[a] * QS[b].T)
    if hessian == "analytic":
        H = factor.cond_info
    elif hessian == "fd":
        H = _hessian_fd(ds, prm, perm, sets, names, sig)
    else:
        raise InputError(f"unknown hessian method {hessian!r}")
    Jinv = _inverse(J, "score covariance J")
    G = H @ Jinv @ H
    G = 0.5 * (G + G.T)
    if fisher is None:
        fisher = exact_fisher(ds, prm, names, desk_limit)
    return InformationMatrices(names, fisher, H, J, G)


def are(info: InformationMatrices, aggregate: str = "mean") -> AREResult:
    """Per-parameter variance ratios (Vecchia over exact) and their sum or mean."""
    if aggregate not in ("sum", "mean"):
        raise InputError("aggregate must be 'sum' or 'mean'")
    ratios = info.vecchia_variances() / info.exact_variances()
    return AREResult(
        ratios=dict(zip(info.names, (float(r) for r in ratios))),
        total=float(np.sum(ratios)),
        mean=float(np.mean(ratios)),
        aggregate=aggregate,
    )
