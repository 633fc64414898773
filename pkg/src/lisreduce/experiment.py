"""Replicated comparison of LIS-MR, POD and OLR posteriors on the testbeds.

Randomness comes from three independent roles, each with its own seed:

* ``locations``: which dofs are observed (drawn once per experiment)
* ``data``: the ``n_rep`` synthetic data sets, one pre-split stream each
* ``snapshots``: prior draws used to build POD bases

``LISREDUCE_SEED`` supplies the base seed when a role has none.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .errors import ConfigError, NumericalError
from .fem import ModelBundle, build_model
from .forward import LinearForwardProblem, draw_observation_indices, generate_data
from .gaussian import GaussianBelief, downdate_foerstner, exact_posterior
from .reduction import (
    STIFFNESS_MODES,
    collect_snapshots,
    lis_basis,
    lis_mr_posterior,
    numerical_rank,
    olr_forward,
    olr_posterior,
    pod_basis,
    pod_posterior,
    reduce_petrov_galerkin,
)

__all__ = [
    "METHODS",
    "SEED_ROLES",
    "ExperimentConfig",
    "ErrorRow",
    "ErrorReport",
    "SweepRow",
    "SweepReport",
    "ExperimentSetup",
    "role_rng",
    "base_seed",
    "setup_experiment",
    "mean_error_metric",
    "run_experiment",
    "pod_snapshot_sweep",
    "emit_report",
    "load_report",
]

METHODS = ("lis", "pod", "olr")
SEED_ROLES = ("locations", "data", "snapshots")
_ROLE_KEYS = {"locations": 0, "data": 1, "snapshots": 2, "testset": 3}
SEED_ENV = "LISREDUCE_SEED"
DEFAULT_SEED = 0


def base_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return DEFAULT_SEED
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


def _seed_sequence(seed, role):
    return np.random.SeedSequence(int(seed), spawn_key=(_ROLE_KEYS[role],))


def role_rng(seed, role) -> np.random.Generator:
    """Generator for one randomness role; equal seeds still give independent roles."""
    return np.random.default_rng(_seed_sequence(seed, role))


@dataclass
class ExperimentConfig:
    """Experiment description; loadable from a single JSON document."""

    model: str = "bar"
    n: int | None = None
    m: int = 10
    noise_var: float = 1e-5
    n_rep: int = 200
    ranks: tuple = tuple(range(1, 11))
    methods: tuple = METHODS
    pod_snapshots: int = 10
    seeds: dict = field(default_factory=dict)
    lift: str = "mapped"
    stiffness: str = "auto"
    timing: bool = True
    workers: int = 1

    def __post_init__(self):
        self.ranks = tuple(int(r) for r in self.ranks)
        self.methods = tuple(self.methods)
        extra = set(self.seeds) - set(SEED_ROLES)
        if extra:
            raise ConfigError(f"unknown seed roles: {sorted(extra)}")
        fallback = base_seed()
        self.seeds = {role: int(self.seeds.get(role, fallback)) for role in SEED_ROLES}
        self.validate()

    def validate(self):
        if self.model not in ("bar", "tunnel"):
            raise ConfigError(f"model must be 'bar' or 'tunnel', got {self.model!r}")
        if self.m < 1:
            raise ConfigError("m must be positive")
        if not self.noise_var > 0:
            raise ConfigError("noise_var must be positive")
        if self.n_rep < 1:
            raise ConfigError("n_rep must be positive")
        if not self.ranks or any(r < 1 or r > self.m for r in self.ranks):
            raise ConfigError(f"ranks must lie in [1, m={self.m}], got {self.ranks}")
        unknown = set(self.methods) - set(METHODS)
        if unknown or not self.methods:
            raise ConfigError(f"methods must be a non-empty subset of {METHODS}")
        if self.pod_snapshots < 1:
            raise ConfigError("pod_snapshots must be positive")
        if self.lift not in ("mapped", "trial"):
            raise ConfigError("lift must be 'mapped' or 'trial'")
        if self.stiffness not in STIFFNESS_MODES:
            raise ConfigError(f"stiffness must be one of {STIFFNESS_MODES}")
        if self.workers < 1:
            raise ConfigError("workers must be positive")

    @classmethod
    def from_dict(cls, data) -> ExperimentConfig:
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        try:
            return cls(**data)
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path) -> ExperimentConfig:
        try:
            with open(path) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["ranks"] = list(self.ranks)
        out["methods"] = list(self.methods)
        return out

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass
class ErrorRow:
    method: str
    r: int
    mean_rel_error: float
    foerstner: float
    offline_s: float
    online_s: float


@dataclass
class ErrorReport:
    """One row per (method, r) plus provenance metadata."""

    rows: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    COLUMNS = ("method", "r", "mean_rel_error", "foerstner", "offline_s", "online_s")
    KIND = "error-report"
    row_type = ErrorRow

    def row(self, method, r) -> ErrorRow:
        for row in self.rows:
            if row.method == method and row.r == r:
                return row
        raise KeyError((method, r))

    def series(self, method, attr="mean_rel_error"):
        rows = sorted((row for row in self.rows if row.method == method), key=lambda x: x.r)
        return np.array([row.r for row in rows]), np.array([getattr(row, attr) for row in rows])


@dataclass
class SweepRow:
    N: int
    r: int
    singular_value: float
    projection_error: float
    mean_rel_error: float
    foerstner: float


@dataclass
class SweepReport:
    rows: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    COLUMNS = ("N", "r", "singular_value", "projection_error", "mean_rel_error", "foerstner")
    KIND = "snapshot-sweep"
    row_type = SweepRow

    def at(self, N, r) -> SweepRow:
        for row in self.rows:
            if row.N == N and row.r == r:
                return row
        raise KeyError((N, r))


def mean_error_metric(approx_means, exact_means) -> float:
    """Average relative l2 error ``mean_i ||a_i - e_i|| / ||e_i||``.

    Terms are summed in replication order with :func:`math.fsum`.
    """
    approx_means = list(approx_means)
    exact_means = list(exact_means)
    if len(approx_means) != len(exact_means) or not exact_means:
        raise ValueError("need equal, non-zero numbers of approximate and exact means")
    terms = []
    for a, e in zip(approx_means, exact_means):
        a, e = np.asarray(a, dtype=np.float64), np.asarray(e, dtype=np.float64)
        if a.shape != e.shape:
            raise ValueError(f"mean shapes differ: {a.shape} vs {e.shape}")
        ref = np.linalg.norm(e)
        if ref == 0:
            raise ValueError("exact posterior mean has zero norm")
        terms.append(np.linalg.norm(a - e) / ref)
    return math.fsum(terms) / len(terms)


@dataclass
class ExperimentSetup:
    """Model, observation locations and synthetic data shared by all methods."""

    config: ExperimentConfig
    bundle: ModelBundle
    problem: LinearForwardProblem
    data: list
    exact: list

    @property
    def G(self):
        return self.problem.G


def setup_experiment(cfg: ExperimentConfig, bundle: ModelBundle | None = None) -> ExperimentSetup:
    """Build the model, freeze observation locations and draw the data sets."""
    bundle = build_model(cfg.model, cfg.n) if bundle is None else bundle
    obs = draw_observation_indices(bundle.system, cfg.m, role_rng(cfg.seeds["locations"], "locations"))
    noise = GaussianBelief.isotropic(cfg.m, cfg.noise_var)
    prob = LinearForwardProblem(bundle.system, obs, bundle.prior, noise)
    G = prob.G
    streams = _seed_sequence(cfg.seeds["data"], "data").spawn(cfg.n_rep)
    data = [generate_data(prob, np.random.default_rng(s))[1] for s in streams]
    exact = _map(lambda y: exact_posterior(prob.prior, G, noise, y), data, cfg.workers)
    return ExperimentSetup(cfg, bundle, prob, data, exact)


def _map(fn, items, workers):
    if workers == 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _timed(fn, *args):
    t0 = time.perf_counter()
    out = fn(*args)
    return out, time.perf_counter() - t0


def _approximation(method, setup, r, cfg, snapshots):
    """Offline step for one (method, r); returns (online solver, offline seconds)."""
    prob = setup.problem
    S, S_obs = prob.prior.sqrt_factor, prob.noise.sqrt_factor
    if method in ("lis", "olr"):
        basis, t_basis = _timed(lis_basis, setup.G, S, S_obs, r)
        if method == "lis":
            red, t_red = _timed(reduce_petrov_galerkin, prob, basis, cfg.stiffness)
            return (lambda y: lis_mr_posterior(red, y, lift=cfg.lift)), t_basis + t_red
        op, t_op = _timed(olr_forward, prob, basis)
        return (lambda y: olr_posterior(prob, basis, y, operator=op)), t_basis + t_op
    U, t_snap = snapshots
    basis, t_basis = _timed(pod_basis, U, r)
    red, t_red = _timed(reduce_petrov_galerkin, prob, basis)
    return (lambda y: pod_posterior(red, y, lift=cfg.lift)), t_snap + t_basis + t_red


def _online(solve, indexed):
    i, y = indexed
    try:
        post, dt = _timed(solve, y)
    except NumericalError as exc:
        raise NumericalError(f"{exc} [replication={i}]") from exc
    return post.mean, post.downdate, dt


def run_experiment(cfg: ExperimentConfig, setup: ExperimentSetup | None = None) -> ErrorReport:
    """Run every (method, r) pair against the exact posterior.

    The Förstner distance does not depend on the data and is evaluated once
    per pair on the first replication. Offline time covers basis
    construction (including POD snapshots) and reduced-model assembly. Online
    time is the median per-data-set posterior solve.
    """
    setup = setup_experiment(cfg) if setup is None else setup
    prob = setup.problem
    exact_means = [p.mean for p in setup.exact]

    snapshots = None
    if "pod" in cfg.methods:
        snapshots = _timed(collect_snapshots, prob, cfg.pod_snapshots, role_rng(cfg.seeds["snapshots"], "snapshots"))
        pod_rank = numerical_rank(np.linalg.svd(snapshots[0], compute_uv=False))

    report = ErrorReport(metadata=_metadata(cfg, setup))
    for method in cfg.methods:
        for r in cfg.ranks:
            if method == "pod" and r > pod_rank:
                report.rows.append(ErrorRow(method, r, math.nan, math.nan, math.nan, math.nan))
                continue
            try:
                solve, offline = _approximation(method, setup, r, cfg, snapshots)
                results = _map(lambda iy: _online(solve, iy), enumerate(setup.data), cfg.workers)
            except NumericalError as exc:
                raise NumericalError(f"{exc} [method={method}, r={r}]") from exc
            means = [res[0] for res in results]
            err = mean_error_metric(means, exact_means)
            dist = downdate_foerstner(setup.exact[0].downdate, results[0][1])
            online = float(np.median([res[2] for res in results]))
            if not cfg.timing:
                offline = online = math.nan
            report.rows.append(ErrorRow(method, r, err, dist, offline, online))
    return report


def _metadata(cfg, setup):
    G = setup.G
    S = setup.problem.prior.sqrt_factor
    signal = np.einsum("ij,ij->i", G @ S, G @ S)
    return {
        "package_version": __version__,
        "config": cfg.to_dict(),
        "config_hash": cfg.digest(),
        "seeds": dict(cfg.seeds),
        "observed_indices": list(setup.problem.obs.observed_indices),
        "model": setup.bundle.name,
        "d": setup.problem.d,
        "constants": {k: float(v) for k, v in setup.bundle.constants.items()},
        # artifact convention: var(Cu) / var(Cu + eps), averaged over observations
        "snr": float(np.mean(signal / (signal + cfg.noise_var))),
    }


def pod_snapshot_sweep(cfg: ExperimentConfig, N_list, ranks=None, test_size=200, posterior=True, setup=None):
    """Effect of the snapshot count on POD quality.

    The snapshot sets are nested (the first ``N`` columns of one stream), so
    a larger ``N`` only adds information. For each ``N`` and each
    ``r <= min(N, rank)`` the sweep records the r-th singular value and the
    mean held-out projection error ``||u - Phi Phi^T u||`` over ``test_size``
    fresh states. With ``posterior=True`` it also records the POD posterior
    errors from the usual replication protocol.
    """
    N_list = sorted({int(N) for N in N_list})
    if not N_list or N_list[0] < 1:
        raise ConfigError("snapshot counts must be positive")
    ranks = cfg.ranks if ranks is None else tuple(ranks)
    setup = setup_experiment(cfg) if setup is None else setup
    prob = setup.problem
    pool = collect_snapshots(prob, N_list[-1], role_rng(cfg.seeds["snapshots"], "snapshots"))
    test = collect_snapshots(prob, test_size, role_rng(cfg.seeds["snapshots"], "testset"))
    exact_means = [p.mean for p in setup.exact]

    report = SweepReport(metadata=_metadata(cfg, setup) | {"test_size": test_size})
    for N in N_list:
        U = pool[:, :N]
        sigma = np.linalg.svd(U, compute_uv=False)
        cap = min(N, numerical_rank(sigma))
        for r in ranks:
            if r > cap:
                continue
            basis = pod_basis(U, r)
            Phi = basis.V
            residual = test - Phi @ (Phi.T @ test)
            proj = float(np.mean(np.linalg.norm(residual, axis=0)))
            err = dist = math.nan
            if posterior:
                red = reduce_petrov_galerkin(prob, basis)
                posts = [pod_posterior(red, y, lift=cfg.lift) for y in setup.data]
                err = mean_error_metric([p.mean for p in posts], exact_means)
                dist = downdate_foerstner(setup.exact[0].downdate, posts[0].downdate)
            report.rows.append(SweepRow(N, r, float(sigma[r - 1]), proj, err, dist))
    return report


def _fmt(value):
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".17g")


def emit_report(report, path, fmt="csv"):
    """Write a report as CSV (table only) or JSON (table plus metadata)."""
    if fmt == "csv":
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(report.COLUMNS)
            for row in report.rows:
                writer.writerow([_fmt(getattr(row, c)) for c in report.COLUMNS])
    elif fmt == "json":
        payload = {
            "format": f"lisreduce-{report.KIND}",
            "version": 1,
            "metadata": report.metadata,
            "rows": [
                {c: _json_value(getattr(row, c)) for c in report.COLUMNS} for row in report.rows
            ],
        }
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
    else:
        raise ConfigError(f"unknown report format {fmt!r}")
    return path


def _json_value(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None if math.isnan(v) else ("inf" if v > 0 else "-inf")
    return v


def _from_json_value(v):
    if v is None:
        return math.nan
    if v in ("inf", "-inf"):
        return float(v)
    return v


def load_report(path):
    """Read a report written by :func:`emit_report` (format inferred from content)."""
    with open(path) as fh:
        text = fh.read()
    if text.lstrip().startswith("{"):
        payload = json.loads(text)
        cls = SweepReport if payload["format"].endswith(SweepReport.KIND) else ErrorReport
        rows = [cls.row_type(**{k: _from_json_value(v) for k, v in row.items()}) for row in payload["rows"]]
        return cls(rows=rows, metadata=payload["metadata"])
    lines = list(csv.reader(text.splitlines()))
    header = tuple(lines[0])
    cls = SweepReport if header == SweepReport.COLUMNS else ErrorReport
    types = {f.name: f.type for f in dataclasses.fields(cls.row_type)}
    rows = []
    for values in lines[1:]:
        kwargs = {}
        for name, raw in zip(header, values):
            t = types[name]
            kwargs[name] = raw if t == "str" else int(raw) if t == "int" else float(raw)
        rows.append(cls.row_type(**kwargs))
    return cls(rows=rows)
