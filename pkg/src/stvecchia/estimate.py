"""Maximum Vecchia-likelihood estimation with profiled mean coefficients."""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import minimize

from .covariance import PARAM_NAMES, CovarianceParams
from .data import Dataset
from .errors import DomainError, InitializationError, NumericalError, ParseError, RankError
from .neighbors import ConditioningPolicy, ConditioningSets, DistanceSpec, build_conditioning_sets
from .ordering import make_ordering
from .vecchia import VecchiaFactor, vecchia_factor, vecchia_loglik, whiten

logger = logging.getLogger(__name__)

GAMMA_EPS = 1e-12
MODELS = ("classical", "hierarchical")


@dataclass(frozen=True)
class VecchiaConfig:
    """Ordering, neighbor distance, sensor policy and conditioning-set size."""

    ordering: str = "maxmin"
    distance: str = "st"
    policy: str = "any_sensor"
    M: int = 30
    kappa: float = 16.0
    seed: int = 0

    def __post_init__(self):
        DistanceSpec(self.distance, self.kappa)
        ConditioningPolicy(self.policy)
        if self.M < 1:
            raise DomainError("M must be >= 1")

    @property
    def spec(self) -> DistanceSpec:
        return DistanceSpec(self.distance, self.kappa)

    def build(self, ds: Dataset) -> tuple[np.ndarray, ConditioningSets]:
        """Ordering and conditioning sets for ``ds``."""
        spec = self.spec
        perm = make_ordering(ds, self.ordering, spec, seed=self.seed)
        return perm, build_conditioning_sets(ds, perm, self.M, spec, self.policy)


@dataclass(frozen=True, eq=False)
class FitResult:
    params: CovarianceParams
    beta: np.ndarray
    loglik: float
    iterations: int
    converged: bool
    config: VecchiaConfig = field(default_factory=VecchiaConfig)
    model: str = "hierarchical"

    def to_dict(self) -> dict:
        out = {"model": self.model}
        out.update({k: v for k, v in asdict(self.config).items()})
        out.update({k: getattr(self.params, k) for k in PARAM_NAMES})
        for i, b in enumerate(self.beta):
            out[f"beta{i}"] = float(b)
        out.update(loglik=self.loglik, iterations=self.iterations, converged=self.converged)
        return out

    def to_text(self) -> str:
        """Flat ``key = value`` block; floats keep full precision."""
        return "".join(f"{k} = {_fmt(v)}\n" for k, v in self.to_dict().items())

    @classmethod
    def from_dict(cls, d: dict) -> "FitResult":
        try:
            config = VecchiaConfig(
                ordering=str(d["ordering"]), distance=str(d["distance"]), policy=str(d["policy"]),
                M=int(d["M"]), kappa=float(d["kappa"]), seed=int(d["seed"]),
            )
            params = CovarianceParams(**{k: float(d[k]) for k in PARAM_NAMES}, kappa=config.kappa)
            nbeta = len([k for k in d if k.startswith("beta")])
            beta = np.array([float(d[f"beta{i}"]) for i in range(nbeta)])
            return cls(
                params=params, beta=beta, loglik=float(d["loglik"]), iterations=int(d["iterations"]),
                converged=str(d["converged"]).lower() in ("true", "1"), config=config, model=str(d["model"]),
            )
        except KeyError as exc:
            raise ParseError(f"fit result lacks key {exc.args[0]!r}") from None
        except ValueError as exc:
            raise ParseError(f"malformed fit result: {exc}") from None

    @classmethod
    def from_text(cls, text: str) -> "FitResult":
        d = {}
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ParseError(f"expected 'key = value', got {line!r}")
            d[key.strip()] = value.strip()
        return cls.from_dict(d)


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def profile_beta(factor: VecchiaFactor, z, X) -> tuple[np.ndarray, float]:
    """Generalised least squares mean coefficients under the Vecchia covariance.

    Returns ``(beta, rss)`` where ``rss`` is the whitened residual sum of squares.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    W = whiten(factor, X)
    w = whiten(factor, z)
    Q, R = np.linalg.qr(W)
    diag = np.abs(np.diag(R))
    scale = np.linalg.norm(W, axis=0)
    bad = np.flatnonzero(diag <= 1e-10 * np.maximum(scale, 1e-300))
    if len(bad):
        raise RankError(f"design column {int(bad[0])} is linearly dependent on the preceding columns after whitening")
    beta = np.linalg.solve(R, Q.T @ w)
    resid = w - W @ beta
    return beta, float(resid @ resid)


def default_init(ds: Dataset, model: str = "hierarchical", kappa: float = 16.0) -> CovarianceParams:
    X = ds.covariates
    beta, *_ = np.linalg.lstsq(X, ds.value, rcond=None)
    v = float(np.var(ds.value - X @ beta))
    v = v if v > 0 else 1.0
    spatial = max(np.ptp(ds.x), np.ptp(ds.y)) / 4
    temporal = np.ptp(ds.t) / 4
    return CovarianceParams(
        sigma2=v / 2, tau2=v / 2,
        theta1=spatial if spatial > 0 else 1.0,
        theta2=temporal if temporal > 0 else 1.0,
        gamma=0.1 * v / 2 if model == "hierarchical" else 0.0,
        kappa=kappa,
    )


def _to_x(prm, names, space):
    if space == "linear":
        return prm.vector(names)
    return np.array([np.log(getattr(prm, k) + GAMMA_EPS) if k == "gamma" else np.log(getattr(prm, k)) for k in names])


def _from_x(x, prm, names, space):
    if space == "linear":
        vals = np.asarray(x, dtype=float)
    else:
        vals = np.exp(x)
        vals = np.array([max(v - GAMMA_EPS, 0.0) if k == "gamma" else v for k, v in zip(names, vals)])
    return prm.with_vector(vals, names)


def profiled_loglik(ds: Dataset, prm: CovarianceParams, perm, sets) -> tuple[float, np.ndarray, VecchiaFactor]:
    factor = vecchia_factor(ds, prm, perm, sets, method="local")
    beta, rss = profile_beta(factor, ds.value, ds.covariates)
    ll = -0.5 * float(np.sum(np.log(2 * np.pi * factor.condvar))) - 0.5 * rss
    return ll, beta, factor


def fit(
    ds: Dataset,
    config: VecchiaConfig | None = None,
    init: CovarianceParams | None = None,
    model: str = "hierarchical",
    fixed: dict | None = None,
    space: str = "log",
    maxiter: int = 1000,
    fatol: float = 1e-6,
    step: float = 0.5,
    ordering=None,
) -> FitResult:
    """Maximise the Vecchia likelihood over covariance parameters.

    Nelder-Mead runs on log-parameters (``log(gamma + 1e-12)`` for the
    sensor variance) with the mean coefficients profiled out at every
    evaluation.  ``classical`` pins ``gamma`` to zero; ``fixed`` pins any
    other parameters.  Stops when the simplex objective spread drops below
    ``fatol`` or after ``maxiter`` iterations (then ``converged`` is False).
    ``ordering`` may pass a precomputed ``(perm, sets)`` pair.
    """
    if model not in MODELS:
        raise DomainError(f"unknown model {model!r}; expected classical or hierarchical")
    if space not in ("log", "linear"):
        raise DomainError("space must be 'log' or 'linear'")
    config = config or VecchiaConfig()
    fixed = dict(fixed or {})
    if model == "classical":
        fixed["gamma"] = 0.0
    if init is None:
        init = default_init(ds, model, config.kappa)
    init = init.replace(kappa=config.kappa, **fixed)
    names = tuple(k for k in PARAM_NAMES if k not in fixed)
    perm, sets = ordering if ordering is not None else config.build(ds)

    def objective(x):
        try:
            prm = _from_x(x, init, names, space)
            ll, _, _ = profiled_loglik(ds, prm, perm, sets)
        except (NumericalError, DomainError, np.linalg.LinAlgError):
            return np.inf
        return -ll if np.isfinite(ll) else np.inf

    x0 = _to_x(init, names, space)
    f0 = objective(x0)
    if not np.isfinite(f0):
        raise InitializationError("objective is not finite at the initial parameters")
    if not names:
        ll, beta, factor = profiled_loglik(ds, init, perm, sets)
        return FitResult(init, beta, vecchia_loglik(factor, ds.value, ds.covariates @ beta), 0, True, config, model)

    deltas = step * (np.abs(x0) if space == "linear" else np.ones_like(x0))
    simplex = np.vstack([x0, x0 + np.diag(deltas)])
    res = minimize(
        objective, x0, method="Nelder-Mead",
        options=dict(initial_simplex=simplex, xatol=np.inf, fatol=fatol, maxiter=maxiter),
    )
    prm = _from_x(res.x, init, names, space)
    _, beta, factor = profiled_loglik(ds, prm, perm, sets)
    loglik = vecchia_loglik(factor, ds.value, ds.covariates @ beta)
    if not res.success:
        logger.warning("Nelder-Mead stopped after %d iterations without converging", res.nit)
    return FitResult(prm, beta, loglik, int(res.nit), bool(res.success), config, model)


def fit_models(ds: Dataset, config: VecchiaConfig | None = None, init: CovarianceParams | None = None, **kw) -> dict:
    """Fit the classical and the hierarchical model on the same ordering.

    The hierarchical fit is also restarted from the classical optimum with
    ``gamma = 0``, and the better of the two runs is kept, so its
    log-likelihood is never below the classical one.
    """
    config = config or VecchiaConfig()
    ordering = config.build(ds)
    classical = fit(ds, config, init=init, model="classical", ordering=ordering, **kw)
    hier = fit(ds, config, init=init, model="hierarchical", ordering=ordering, **kw)
    warm = fit(ds, config, init=classical.params.replace(gamma=0.0), model="hierarchical", ordering=ordering, **kw)
    best = max(hier, warm, key=lambda r: r.loglik)
    if best.loglik < classical.loglik:
        best = FitResult(classical.params, classical.beta, classical.loglik, best.iterations, best.converged, config, "hierarchical")
    return {"classical": classical, "hierarchical": best}
