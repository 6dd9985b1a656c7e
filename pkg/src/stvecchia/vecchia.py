"""Vecchia likelihood, its sparse inverse-Cholesky factor and the exact oracle.

For ordered observations ``r_0, ..., r_{n-1}`` and conditioning sets ``s_k``
the approximation is

    log p~(r) = sum_k log N(r_k ; b_k' r_{s_k}, d_k)

with ``b_k`` and ``d_k`` the exact Gaussian regression of ``r_k`` on
``r_{s_k}``.  Equivalently ``p~`` is the Gaussian with precision ``U U'``
where ``U`` is upper triangular with column ``k`` holding ``d_k^{-1/2}`` on
the diagonal and ``-b_k d_k^{-1/2}`` in the rows ``s_k``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.linalg import solve_triangular

from .covariance import PARAM_NAMES, CovarianceParams, build_sigma, cholesky, sigma_derivatives
from .data import Dataset
from .errors import CapacityError, InputError, NumericalError
from .instrument import notify_dense
from .neighbors import ConditioningSets

DESK_LIMIT = 4000
# Max number of float64 entries in one batch of local covariance blocks.
CHUNK_ELEMS = 1_000_000


def check_desk(n: int, desk_limit: int | None, what: str) -> None:
    limit = DESK_LIMIT if desk_limit is None else desk_limit
    if n > limit:
        raise CapacityError(f"{what} needs a dense {n}x{n} matrix; desk limit is {limit} (subsample the data)")


@dataclass(frozen=True, eq=False)
class VecchiaFactor:
    """Regression weights and conditional variances of a Vecchia approximation.

    ``coeffs[k, i]`` is the weight of ordered position ``sets.nbr[k, i]``
    (zero in padding slots).  When built with derivatives, ``dcoeffs`` and
    ``dcondvar`` hold their partial derivatives with respect to ``names`` and
    ``cond_info`` the summed Fisher information of the conditional terms.
    """

    perm: np.ndarray
    sets: ConditioningSets
    coeffs: np.ndarray
    condvar: np.ndarray
    names: tuple = ()
    dcoeffs: np.ndarray | None = None
    dcondvar: np.ndarray | None = None
    cond_info: np.ndarray | None = None

    @property
    def n(self) -> int:
        return len(self.perm)

    @property
    def logdet(self) -> float:
        """log-determinant of the implied covariance."""
        return float(np.sum(np.log(self.condvar)))

    @property
    def coeff_lists(self) -> list[np.ndarray]:
        return [self.coeffs[k, : len(s)] for k, s in enumerate(self.sets.sets)]

    def precision_factor(self) -> sp.csc_matrix:
        """Sparse upper-triangular ``U`` with implied precision ``U U'`` (ordered space)."""
        return _assemble_u(self.sets.nbr, self.coeffs, self.condvar)

    def precision_factor_derivative(self, k: int) -> sp.csc_matrix:
        """Derivative of ``U`` with respect to ``names[k]``."""
        if self.dcoeffs is None:
            raise ValueError("factor was built without derivatives")
        n = self.n
        nbr = self.sets.nbr
        d = self.condvar
        dd = self.dcondvar[k]
        diag = -0.5 * d**-1.5 * dd
        off = -self.dcoeffs[k] * d[:, None] ** -0.5 + 0.5 * self.coeffs * (d**-1.5 * dd)[:, None]
        return _sparse_upper(n, nbr, diag, off)


def _sparse_upper(n, nbr, diag, off) -> sp.csc_matrix:
    valid = nbr >= 0
    cols = np.broadcast_to(np.arange(n)[:, None], nbr.shape)[valid]
    rows = nbr[valid]
    vals = off[valid]
    r = np.concatenate([np.arange(n), rows])
    c = np.concatenate([np.arange(n), cols])
    v = np.concatenate([diag, vals])
    return sp.csc_matrix((v, (r, c)), shape=(n, n))


def _assemble_u(nbr, coeffs, condvar) -> sp.csc_matrix:
    s = condvar**-0.5
    return _sparse_upper(len(condvar), nbr, s, -coeffs * s[:, None])


def vecchia_factor(
    ds: Dataset,
    prm: CovarianceParams,
    perm,
    sets: ConditioningSets,
    derivatives=None,
    method: str = "auto",
    desk_limit: int | None = None,
) -> VecchiaFactor:
    """Compute the Vecchia regression weights and conditional variances.

    Parameters
    ----------
    ds, prm
        Observations and covariance parameters.
    perm : (n,) int array
        Ordering; position ``k`` holds an obs_id.
    sets : ConditioningSets
        Conditioning sets in ordered-position space.
    derivatives : sequence of str, optional
        Parameter names (subset of ``sigma2, theta1, theta2, tau2, gamma``) to
        differentiate with respect to.
    method : {"auto", "local", "dense"}
        ``local`` solves one small system per observation and never forms an
        n x n matrix.  ``dense`` reads the factor off the Cholesky of the full
        covariance and only applies to full conditioning.  ``auto`` picks
        ``dense`` for full conditioning and ``local`` otherwise.
    """
    perm = np.asarray(perm)
    if len(perm) != ds.n or sets.n != ds.n:
        raise InputError("ordering and conditioning sets must both have length n")
    names = tuple(derivatives or ())
    for name in names:
        if name not in PARAM_NAMES:
            raise InputError(f"unknown parameter {name!r}")
    if method == "auto":
        method = "dense" if sets.is_full() and ds.n > 1 else "local"
    if method == "dense":
        if not sets.is_full():
            raise InputError("dense factorisation requires full conditioning")
        check_desk(ds.n, desk_limit, "dense Vecchia factor")
        return _dense_factor(ds, prm, perm, sets, names)
    if method != "local":
        raise InputError(f"unknown method {method!r}")
    return _local_factor(ds, prm, perm, sets, names)


def _local_factor(ds, prm, perm, sets, names) -> VecchiaFactor:
    n, m = sets.nbr.shape
    q = len(names)
    x, y, t, s = ds.x[perm], ds.y[perm], ds.t[perm], ds.sensor[perm]
    coeffs = np.zeros((n, m))
    condvar = np.empty(n)
    dcoeffs = np.zeros((q, n, m)) if q else None
    dcondvar = np.empty((q, n)) if q else None
    info = np.zeros((q, q)) if q else None
    var0 = prm.sigma2 + prm.tau2 + prm.gamma
    if m == 0:
        condvar[:] = var0
        if q:
            for a, name in enumerate(names):
                dcondvar[a] = 0.0 if name in ("theta1", "theta2") else 1.0
            info += np.outer(dcondvar[:, 0], dcondvar[:, 0]) * n / (2 * var0**2)
        return VecchiaFactor(perm, sets, coeffs, condvar, names, dcoeffs, dcondvar, info)

    step = max(1, CHUNK_ELEMS // (m * m * max(1, q)))
    eye = np.eye(m, dtype=bool)
    for lo in range(0, n, step):
        hi = min(n, lo + step)
        nb = sets.nbr[lo:hi]
        valid = nb >= 0
        nbc = np.where(valid, nb, 0)
        pair = valid[:, :, None] & valid[:, None, :]
        xn, yn, tn, sn = x[nbc], y[nbc], t[nbc], s[nbc]

        ds_blk = np.sqrt((xn[:, :, None] - xn[:, None, :]) ** 2 + (yn[:, :, None] - yn[:, None, :]) ** 2)
        dt_blk = np.abs(tn[:, :, None] - tn[:, None, :])
        rho_blk = np.exp(-ds_blk / prm.theta1 - dt_blk / prm.theta2) * pair
        same_blk = (sn[:, :, None] == sn[:, None, :]) & pair
        A = prm.sigma2 * rho_blk + prm.gamma * same_blk
        A[:, eye] += np.where(valid, prm.tau2, 1.0)

        xk, yk, tk, sk = x[lo:hi, None], y[lo:hi, None], t[lo:hi, None], s[lo:hi, None]
        ds_k = np.sqrt((xn - xk) ** 2 + (yn - yk) ** 2)
        dt_k = np.abs(tn - tk)
        rho_k = np.exp(-ds_k / prm.theta1 - dt_k / prm.theta2) * valid
        same_k = (sn == sk) & valid
        c = prm.sigma2 * rho_k + prm.gamma * same_k

        try:
            np.linalg.cholesky(A)
        except np.linalg.LinAlgError:
            for r in range(hi - lo):
                if np.any(np.linalg.eigvalsh(A[r]) <= 0):
                    raise NumericalError(f"local covariance block not positive definite at ordered position {lo + r}") from None
            raise
        b = np.linalg.solve(A, c[:, :, None])[:, :, 0]
        d = var0 - np.einsum("ij,ij->i", c, b)
        if np.any(d <= 0):
            k = lo + int(np.flatnonzero(d <= 0)[0])
            raise NumericalError(f"nonpositive conditional variance at ordered position {k}")
        coeffs[lo:hi] = b
        condvar[lo:hi] = d
        if not q:
            continue

        dA = np.empty((q,) + A.shape)
        dc = np.empty((q,) + c.shape)
        dkk = np.empty(q)
        for a, name in enumerate(names):
            if name == "sigma2":
                dA[a], dc[a], dkk[a] = rho_blk, rho_k, 1.0
            elif name == "theta1":
                dA[a] = prm.sigma2 * rho_blk * ds_blk / prm.theta1**2
                dc[a] = prm.sigma2 * rho_k * ds_k / prm.theta1**2
                dkk[a] = 0.0
            elif name == "theta2":
                dA[a] = prm.sigma2 * rho_blk * dt_blk / prm.theta2**2
                dc[a] = prm.sigma2 * rho_k * dt_k / prm.theta2**2
                dkk[a] = 0.0
            elif name == "tau2":
                dA[a] = 0.0
                dA[a][:, eye] = valid
                dc[a], dkk[a] = 0.0, 1.0
            elif name == "gamma":
                dA[a], dc[a], dkk[a] = same_blk, same_k, 1.0
        rhs = dc - np.einsum("qrij,rj->qri", dA, b)
        db = np.linalg.solve(A, rhs.transpose(1, 2, 0))  # (rows, m, q)
        db = db.transpose(2, 0, 1)
        dd = dkk[:, None] - np.einsum("qri,ri->qr", dc, b) - np.einsum("ri,qri->qr", c, db)
        dcoeffs[:, lo:hi] = db
        dcondvar[:, lo:hi] = dd
        Adb = np.einsum("rij,qrj->qri", A, db)
        info += np.einsum("qri,pri,r->qp", db, Adb, 1.0 / d)
        info += np.einsum("qr,pr,r->qp", dd, dd, 0.5 / d**2)
    return VecchiaFactor(perm, sets, coeffs, condvar, names, dcoeffs, dcondvar, info)


def _dense_factor(ds, prm, perm, sets, names) -> VecchiaFactor:
    n, m = sets.nbr.shape
    sigma = build_sigma(ds, prm, idx=perm)
    L = cholesky(sigma)
    Linv = solve_triangular(L, np.eye(n), lower=True)
    U = Linv.T
    Ldiag = np.diag(L)
    condvar = Ldiag**2
    nbr = sets.nbr
    valid = nbr >= 0
    cols = np.broadcast_to(np.arange(n)[:, None], nbr.shape)
    coeffs = np.where(valid, -U[np.maximum(nbr, 0), cols] * Ldiag[:, None], 0.0)
    q = len(names)
    if not q:
        return VecchiaFactor(perm, sets, coeffs, condvar)
    dsig = sigma_derivatives(ds, prm, names, idx=perm)
    dcoeffs = np.zeros((q, n, m))
    dcondvar = np.empty((q, n))
    W = []
    for a in range(q):
        Wa = Linv @ dsig[a] @ Linv.T
        W.append(Wa)
        phi = np.tril(Wa)
        phi[np.diag_indices(n)] *= 0.5
        dL = L @ phi
        dU = -(Linv.T @ dL.T @ Linv.T)
        dLdiag = np.diag(dL)
        dcondvar[a] = 2 * Ldiag * dLdiag
        dcoeffs[a] = np.where(
            valid,
            -dU[np.maximum(nbr, 0), cols] * Ldiag[:, None] - U[np.maximum(nbr, 0), cols] * dLdiag[:, None],
            0.0,
        )
    info = np.array([[0.5 * np.sum(W[a] * W[b].T) for b in range(q)] for a in range(q)])
    return VecchiaFactor(perm, sets, coeffs, condvar, names, dcoeffs, dcondvar, info)


def _residual(factor: VecchiaFactor, z, mean) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    if z.shape[0] != factor.n:
        raise InputError(f"data vector has length {z.shape[0]}, factor has {factor.n}")
    return z if mean is None else z - np.asarray(mean, dtype=float)


def whiten(factor: VecchiaFactor, v) -> np.ndarray:
    """Standardised conditional residuals ``U' v`` (in ordered space).

    ``v`` may be a vector or an (n, p) matrix, given in original order.
    """
    v = np.asarray(v, dtype=float)
    if v.shape[0] != factor.n:
        raise InputError(f"input has {v.shape[0]} rows, factor has {factor.n}")
    vp = v[factor.perm]
    nbr = factor.sets.nbr
    gathered = vp[np.maximum(nbr, 0)]
    if vp.ndim == 1:
        pred = np.einsum("ij,ij->i", factor.coeffs, gathered)
        return (vp - pred) / np.sqrt(factor.condvar)
    pred = np.einsum("ij,ijp->ip", factor.coeffs, gathered)
    return (vp - pred) / np.sqrt(factor.condvar)[:, None]


def loglik_terms(factor: VecchiaFactor, z, mean=None) -> np.ndarray:
    """The n conditional log-density terms, in ordered position."""
    e = whiten(factor, _residual(factor, z, mean))
    return -0.5 * np.log(2 * np.pi * factor.condvar) - 0.5 * e**2


def vecchia_loglik(factor: VecchiaFactor, z, mean=None) -> float:
    """Vecchia log-likelihood of ``z`` with mean vector ``mean`` (default zero)."""
    return float(np.sum(loglik_terms(factor, z, mean)))


def implied_covariance(factor: VecchiaFactor, desk_limit: int | None = None) -> np.ndarray:
    """Dense covariance implied by the factor, in original observation order."""
    n = factor.n
    check_desk(n, desk_limit, "implied covariance")
    notify_dense(n, n, "implied_covariance")
    U = factor.precision_factor().toarray()
    Uinv = solve_triangular(U, np.eye(n), lower=False)
    cov_ordered = Uinv.T @ Uinv
    out = np.empty_like(cov_ordered)
    out[np.ix_(factor.perm, factor.perm)] = cov_ordered
    return out


def exact_loglik(ds: Dataset, prm: CovarianceParams, z, mean=None, desk_limit: int | None = None) -> float:
    """Exact Gaussian log-likelihood via a dense Cholesky factorisation."""
    check_desk(ds.n, desk_limit, "exact likelihood")
    z = np.asarray(z, dtype=float)
    if z.shape[0] != ds.n:
        raise InputError(f"data vector has length {z.shape[0]}, dataset has {ds.n}")
    r = z if mean is None else z - mean
    L = cholesky(build_sigma(ds, prm))
    w = solve_triangular(L, r, lower=True)
    return float(-0.5 * ds.n * np.log(2 * np.pi) - np.sum(np.log(np.diag(L))) - 0.5 * w @ w)
