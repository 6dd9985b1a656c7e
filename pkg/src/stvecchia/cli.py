"""Command-line entry point: ``simulate | sweep | kappa | fit | predict``.

Configuration is a flat ``key = value`` text file.  Precedence is
built-in defaults, then ``--config``, then ``--set key=value`` and the
dedicated global flags.  ``--dump-config`` prints the resolved settings.
"""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .covariance import PARAM_NAMES, CovarianceParams, PM10_HIERARCHICAL, simulate
from .data import load_observations, make_dataset, preprocess, save_observations
from .errors import CapacityError, ConfigError, ConvergenceError, InputError, ParseError, STVecchiaError
from .estimate import FitResult, VecchiaConfig, fit, fit_models
from .experiments import DISTANCES, POLICIES, run_sweep, write_sweep_csv
from .neighbors import ConditioningPolicy, DistanceSpec, default_kappa_grid, estimate_kappa
from .ordering import ORDERINGS
from .predict import interpolate_covariates, make_grid, predict_exact, predict_vecchia, write_grid_csv
from .trajectories import random_waypoint_layout
from .vecchia import DESK_LIMIT

logger = logging.getLogger("stvecchia")

EXIT_OK, EXIT_INPUT, EXIT_NUMERICAL = 0, 3, 4


def _bool(v) -> bool:
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _str_list(v) -> tuple:
    if isinstance(v, (list, tuple)):
        return tuple(v)
    return tuple(s.strip() for s in str(v).split(",") if s.strip())


def _int_list(v) -> tuple:
    return tuple(int(s) for s in _str_list(v))


def _opt_int(v):
    return None if v in (None, "", "none", "None") else int(v)


def _kappa(v):
    return "auto" if str(v).strip().lower() == "auto" else float(v)


@dataclass
class RunConfig:
    seed: int = 0
    threads: int | None = None
    desk_limit: int = DESK_LIMIT
    # files
    data: str = "observations.csv"
    layout: str = ""
    sweep_out: str = "sweep.csv"
    kappa_out: str = "kappa.txt"
    fit_out: str = "fit.txt"
    fit_table: str = "fit_table.csv"
    fit_in: str = "fit.txt"
    grid_out: str = "grid.csv"
    # simulation
    n: int = 3000
    sensors: int = 8
    duration: float = 7200.0
    box: float = 10000.0
    speed: float = 8.0
    mode: str = "compact"
    mean: float = 0.0
    sigma2: float = PM10_HIERARCHICAL.sigma2
    theta1: float = PM10_HIERARCHICAL.theta1
    theta2: float = PM10_HIERARCHICAL.theta2
    tau2: float = PM10_HIERARCHICAL.tau2
    gamma: float = PM10_HIERARCHICAL.gamma
    # approximation
    ordering: str = "maxmin"
    distance: str = "st"
    policy: str = "any_sensor"
    kappa: object = 16.0
    orderings: tuple = ORDERINGS
    distances: tuple = DISTANCES
    policies: tuple = POLICIES
    M: tuple = (5, 10, 20, 40)
    ordering_distance: str = "st"
    subsample: int = 0
    record_timing: bool = True
    # kappa estimation
    kappa_subsample: int = 500
    idw_neighbors: int = 10
    idw_power: float = 2.0
    # fitting
    model: str = "both"
    fit_M: int = 30
    maxiter: int = 1000
    fatol: float = 1e-6
    lonlat: bool = False
    preprocess: bool = False
    median_window: int = 15
    warmup: float = 300.0
    # prediction
    nx: int = 100
    ny: int = 100
    nt: int = 12
    M_pred: int = 30
    predict_method: str = "vecchia"

    def params(self) -> CovarianceParams:
        return CovarianceParams(
            sigma2=self.sigma2, theta1=self.theta1, theta2=self.theta2, tau2=self.tau2, gamma=self.gamma,
            kappa=self.kappa if self.kappa != "auto" else 16.0,
        )

    def validate(self) -> None:
        for o in self.orderings + (self.ordering,):
            if o not in ORDERINGS:
                raise ConfigError(f"ordering: unknown token {o!r}")
        for d in self.distances + (self.distance, self.ordering_distance):
            _spec_or_config_error("distance", d)
        for p in self.policies + (self.policy,):
            try:
                ConditioningPolicy(p)
            except InputError:
                raise ConfigError(f"policy: unknown token {p!r}") from None
        if not self.M or any(m < 1 for m in self.M) or any(b <= a for a, b in zip(self.M, self.M[1:])):
            raise ConfigError(f"M: values must be >= 1 and strictly increasing, got {self.M}")
        if self.model not in ("both", "classical", "hierarchical"):
            raise ConfigError(f"model: expected both, classical or hierarchical, got {self.model!r}")
        if self.mode not in ("compact", "hierarchical"):
            raise ConfigError(f"mode: expected compact or hierarchical, got {self.mode!r}")
        if self.predict_method not in ("vecchia", "exact"):
            raise ConfigError(f"predict_method: expected vecchia or exact, got {self.predict_method!r}")
        if self.kappa != "auto" and not self.kappa > 0:
            raise ConfigError("kappa: must be > 0 or 'auto'")
        if self.fit_M < 1 or self.M_pred < 1:
            raise ConfigError("fit_M and M_pred must be >= 1")

    def dump(self) -> str:
        out = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ",".join(str(x) for x in v)
            elif isinstance(v, float):
                v = repr(v)
            elif v is None:
                v = "none"
            out.append(f"{f.name} = {v}")
        return "\n".join(out) + "\n"


def _spec_or_config_error(key, token):
    try:
        DistanceSpec(token, 1.0)
    except InputError:
        raise ConfigError(f"{key}: unknown token {token!r}") from None


_CONVERTERS = {
    int: int, float: float, str: str, bool: _bool,
}
_SPECIAL = {
    "threads": _opt_int,
    "kappa": _kappa,
    "orderings": _str_list,
    "distances": _str_list,
    "policies": _str_list,
    "M": _int_list,
}


def _converter(name):
    if name in _SPECIAL:
        return _SPECIAL[name]
    default = RunConfig.__dataclass_fields__[name].default
    return _CONVERTERS[type(default)]


def apply_settings(cfg: RunConfig, items: dict) -> RunConfig:
    """Set ``key -> raw string`` pairs on ``cfg``, raising ConfigError on unknown keys or bad values."""
    valid = {f.name for f in fields(RunConfig)}
    for key, raw in items.items():
        if key not in valid:
            raise ConfigError(f"unknown config key {key!r}")
        try:
            setattr(cfg, key, _converter(key)(raw))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{key}: bad value {raw!r} ({exc})") from None
    return cfg


def parse_config_text(text: str) -> dict:
    items = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"config line {lineno}: expected 'key = value', got {line!r}")
        items[key.strip()] = value.strip()
    return items


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    cfg = RunConfig()
    if path is not None:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from None
        apply_settings(cfg, parse_config_text(text))
    apply_settings(cfg, overrides or {})
    cfg.validate()
    return cfg


# ---------------------------------------------------------------- commands


def _read_layout(path):
    """Coordinates ``sensor_id, x, y, t`` from a trajectory file; values are ignored."""
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in ("sensor_id", "x", "y", "t") if c not in (reader.fieldnames or [])]
        if missing:
            raise InputError(f"{path}: missing column {missing[0]!r}")
        rows = list(reader)
    if not rows:
        raise InputError(f"{path}: no data rows")
    try:
        cols = {c: np.array([float(r[c]) for r in rows]) for c in ("x", "y", "t")}
    except ValueError as exc:
        raise ParseError(f"{path}: {exc}") from None
    return make_dataset(cols["x"], cols["y"], cols["t"], [r["sensor_id"] for r in rows])


def _load_data(cfg: RunConfig):
    path = Path(cfg.data)
    if not path.exists():
        raise InputError(f"data file {path} does not exist")
    ds = load_observations(path, lonlat=cfg.lonlat)
    if cfg.preprocess:
        ds = preprocess(ds, median_window=cfg.median_window, warmup=cfg.warmup)
    return ds


def _resolve_kappa(cfg: RunConfig, ds) -> float:
    if cfg.kappa != "auto":
        return float(cfg.kappa)
    k = estimate_kappa(
        ds, subsample_size=cfg.kappa_subsample, idw_neighbors=cfg.idw_neighbors,
        idw_power=cfg.idw_power, seed=cfg.seed,
    )
    logger.info("estimated kappa = %r", k)
    return k


def cmd_simulate(cfg: RunConfig) -> int:
    if cfg.layout:
        ds = _read_layout(cfg.layout)
    else:
        ds = random_waypoint_layout(
            n=cfg.n, sensors=cfg.sensors, duration=cfg.duration, box=cfg.box, speed=cfg.speed, seed=cfg.seed,
        )
    prm = cfg.params()
    z = simulate(ds, prm, mean=cfg.mean, seed=cfg.seed, mode=cfg.mode)
    ds = ds.with_values(z)
    save_observations(ds, cfg.data)
    meta = {
        "seed": cfg.seed, "n": ds.n, "sensors": ds.J, "mode": cfg.mode, "mean": cfg.mean,
        **{k: getattr(prm, k) for k in PARAM_NAMES},
        "layout": cfg.layout or "random_waypoint",
    }
    if not cfg.layout:
        meta.update(duration=cfg.duration, box=cfg.box, speed=cfg.speed)
    Path(str(cfg.data) + ".meta").write_text(
        "".join(f"{k} = {v!r}\n" if isinstance(v, float) else f"{k} = {v}\n" for k, v in meta.items()),
        encoding="utf-8",
    )
    print(f"wrote {ds.n} observations from {ds.J} sensors to {cfg.data}")
    return EXIT_OK


def cmd_sweep(cfg: RunConfig) -> int:
    ds = _load_data(cfg)
    if cfg.subsample and cfg.subsample < ds.n:
        idx = np.sort(np.random.default_rng(cfg.seed).choice(ds.n, cfg.subsample, replace=False))
        ds = ds.subset(idx)
    if ds.n > cfg.desk_limit:
        raise CapacityError(
            f"sweep on n={ds.n} exceeds desk_limit={cfg.desk_limit}; set subsample (e.g. --set subsample=1000)"
        )
    kappa = _resolve_kappa(cfg, ds)
    rows = run_sweep(
        ds, cfg.params().replace(kappa=kappa), Ms=cfg.M, orderings=cfg.orderings, distances=cfg.distances,
        policies=cfg.policies, kappa=kappa, ordering_distance=cfg.ordering_distance, seed=cfg.seed,
        desk_limit=cfg.desk_limit, record_timing=cfg.record_timing,
    )
    write_sweep_csv(cfg.sweep_out, rows)
    print(f"wrote {len(rows)} configurations to {cfg.sweep_out}")
    return EXIT_OK


def cmd_kappa(cfg: RunConfig) -> int:
    ds = _load_data(cfg)
    k = estimate_kappa(
        ds, subsample_size=cfg.kappa_subsample, grid=default_kappa_grid(), idw_neighbors=cfg.idw_neighbors,
        idw_power=cfg.idw_power, seed=cfg.seed,
    )
    Path(cfg.kappa_out).write_text(f"kappa = {k!r}\n", encoding="utf-8")
    print(f"kappa = {k!r}")
    return EXIT_OK


def _table_rows(results: dict) -> list[list[str]]:
    models = list(results)
    rows = [["parameter", *models]]
    for k in PARAM_NAMES:
        rows.append([k] + ["" if (m == "classical" and k == "gamma") else repr(getattr(results[m].params, k)) for m in models])
    rows.append(["loglik"] + [repr(results[m].loglik) for m in models])
    return rows


def _suffixed(path: str, tag: str) -> Path:
    p = Path(path)
    return p.with_name(f"{p.stem}_{tag}{p.suffix}")


def cmd_fit(cfg: RunConfig) -> int:
    ds = _load_data(cfg)
    kappa = _resolve_kappa(cfg, ds)
    vc = VecchiaConfig(cfg.ordering, cfg.distance, cfg.policy, cfg.fit_M, kappa, cfg.seed)
    kw = dict(maxiter=cfg.maxiter, fatol=cfg.fatol)
    if cfg.model == "both":
        results = fit_models(ds, vc, **kw)
        Path(cfg.fit_out).write_text(results["hierarchical"].to_text(), encoding="utf-8")
        _suffixed(cfg.fit_out, "classical").write_text(results["classical"].to_text(), encoding="utf-8")
        table = _table_rows(results)
        with Path(cfg.fit_table).open("w", newline="", encoding="utf-8") as fh:
            csv.writer(fh, lineterminator="\n").writerows(table)
        width = max(len(c) for r in table for c in r) + 2
        for r in table:
            print("".join(c.ljust(width) for c in r).rstrip())
    else:
        results = {cfg.model: fit(ds, vc, model=cfg.model, **kw)}
        Path(cfg.fit_out).write_text(results[cfg.model].to_text(), encoding="utf-8")
        print(results[cfg.model].to_text(), end="")
    if not all(r.converged for r in results.values()):
        raise ConvergenceError("optimizer did not converge; results were written and flagged converged = False")
    return EXIT_OK


def cmd_predict(cfg: RunConfig) -> int:
    path = Path(cfg.fit_in)
    if not path.exists():
        raise InputError(f"fit file {path} does not exist; run the fit command first")
    result = FitResult.from_text(path.read_text(encoding="utf-8"))
    ds = _load_data(cfg)
    bbox = (ds.x.min(), ds.x.max(), ds.y.min(), ds.y.max())
    times = np.linspace(ds.t.min(), ds.t.max(), cfg.nt)
    coords = make_grid(bbox, cfg.nx, cfg.ny, times)
    design = interpolate_covariates(ds, coords, result.config.spec)
    if cfg.predict_method == "exact":
        pred = predict_exact(ds, result, (coords, design), desk_limit=cfg.desk_limit)
    else:
        pred = predict_vecchia(ds, result, (coords, design), M_pred=cfg.M_pred)
    write_grid_csv(cfg.grid_out, coords, pred)
    print(f"wrote {len(coords)} grid predictions to {cfg.grid_out}")
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "kappa": cmd_kappa,
    "fit": cmd_fit,
    "predict": cmd_predict,
}


def _parse_set(values) -> dict:
    out = {}
    for item in values or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        out[key.strip()] = value.strip()
    return out


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="stvecchia", description=__doc__.splitlines()[0])
    ap.add_argument("command", nargs="?", choices=sorted(COMMANDS))
    ap.add_argument("--config", help="flat key = value configuration file")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--threads", type=int, help="BLAS threads")
    ap.add_argument("--desk-limit", type=int, dest="desk_limit", help="largest n for dense n x n work")
    ap.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key (repeatable)")
    ap.add_argument("--dump-config", action="store_true", help="print the resolved configuration and exit")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, STVecchiaError):
        return exc.exit_code
    if isinstance(exc, OSError):
        return EXIT_INPUT
    return EXIT_NUMERICAL


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        overrides = _parse_set(args.set)
        for key in ("seed", "threads", "desk_limit"):
            if getattr(args, key) is not None:
                overrides[key] = str(getattr(args, key))
        cfg = load_config(args.config, overrides)
        if args.dump_config:
            print(cfg.dump(), end="")
            return EXIT_OK
        if args.command is None:
            raise ConfigError("no command given; choose one of " + ", ".join(sorted(COMMANDS)))
        if cfg.threads:
            from threadpoolctl import threadpool_limits

            with threadpool_limits(limits=cfg.threads):
                return COMMANDS[args.command](cfg)
        return COMMANDS[args.command](cfg)
    except (STVecchiaError, OSError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _exit_code(exc)


if __name__ == "__main__":
    sys.exit(main())
