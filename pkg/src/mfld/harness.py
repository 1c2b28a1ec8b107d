"""Experiment orchestration: configs, data generation, runs, artifacts.

A run directory contains records.csv (one diagnostics row per logged
iteration), meta.json (flat object: config echo, regularity constants,
theory report, runtime info), final_particles.csv, and in 1D visualization
mode one density snapshot CSV per requested iteration.  All files are
written atomically (temp then rename); on any error the partial records are
flushed with an ``aborted`` flag in the metadata before the error is
re-raised.

Config files are TOML; unknown keys are hard errors so typos cannot pass
silently.  Floats serialize via repr, which round-trips 64-bit values
exactly, and parse -> serialize -> parse is the identity.
"""

from __future__ import annotations

import dataclasses
import json
import math
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import tomli
from scipy.special import expit

from . import __version__
from .diagnostics import TheoryReport
from .dynamics import HyperParams, ParticleEnsemble, initialize_ensemble, run_dynamics
from .errors import ConfigError, DimensionError, DomainError, GridError, MfldError
from .estimators import EstimatorConfig, duality_gap_report
from .gibbs import ProximalGibbs, SamplerConfig, log_trapezoid, unnorm_log_density_many
from .model import Dataset, load_dataset_csv, make_loss, make_neuron, model_constants
from .rng import RngSpec, normal_matrix, normal_values

RECORD_FIELDS = (
    "iter", "sim_time", "risk", "moment", "entropy_est", "primal_L", "dual_D",
    "gap", "kl_q_pq", "kl_indep", "second_moment", "moment_bound_ok",
    "se_primal", "se_dual", "se_gap", "wallclock_ms",
)

_QSTAR_SEED_MIX = 0x9E3779B97F4A7C15


@dataclass(frozen=True)
class DatasetSpec:
    """Where training data comes from: a CSV file, a generator, or nothing."""

    kind: str = "none"
    path: str = ""
    n: int = 0
    d_in: int = 1
    teacher_width: int = 1
    noise_std: float = 0.05


@dataclass(frozen=True)
class ModelSpec:
    kind: str = "tanh"
    output_scale: Optional[float] = None


@dataclass(frozen=True)
class LoggingSpec:
    """Either every-k logging or an explicit iteration list."""

    every: Optional[int] = 100
    iterations: Optional[tuple[int, ...]] = None


@dataclass(frozen=True)
class Fig1Spec:
    """1D density snapshot settings (requires the scalar neuron kind)."""

    iterations: tuple[int, ...] = ()
    grid_extent: float = 6.0
    grid_points: int = 301
    qstar_proxy: bool = False


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    model: ModelSpec = field(default_factory=ModelSpec)
    loss: str = "squared"
    lam: float = 0.01
    lam_prime: float = 0.01
    eta: float = 0.01
    steps: int = 1000
    particles: int = 400
    init_std: float = 0.5
    logging: LoggingSpec = field(default_factory=LoggingSpec)
    estimator: EstimatorConfig = field(default_factory=EstimatorConfig)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    fig1: Fig1Spec = field(default_factory=Fig1Spec)

    def hyper_params(self) -> HyperParams:
        return HyperParams(lam=self.lam, lam_prime=self.lam_prime, eta=self.eta, steps=self.steps)

    def schedule(self) -> list[int]:
        """Sorted logging iterations, always within [0, steps]."""
        if self.logging.iterations is not None:
            ks = sorted(set(int(k) for k in self.logging.iterations))
            bad = [k for k in ks if k < 0 or k > self.steps]
            if bad:
                raise ConfigError(f"logging iterations out of range: {bad}")
            return ks
        every = self.logging.every
        ks = set(range(0, self.steps + 1, every))
        ks.add(self.steps)
        return sorted(ks)


# ---- config parsing ----

_DATASET_KEYS = {
    "none": {"kind", "d_in"},
    "file": {"kind", "path"},
    "teacher-student": {"kind", "n", "d_in", "teacher_width", "noise_std"},
}
_SECTION_KEYS = {
    "dataset": {"kind", "path", "n", "d_in", "teacher_width", "noise_std"},
    "model": {"kind", "output_scale"},
    "loss": {"kind"},
    "train": {"lambda", "lambda_prime", "eta", "steps", "particles", "init_std"},
    "logging": {"every", "iterations"},
    "estimator": {"knn_k", "is_samples", "tag"},
    "sampler": {"count", "step", "burn_in", "thin"},
    "fig1": {"iterations", "grid_extent", "grid_points", "qstar_proxy"},
}


def _reject_unknown(section: str, table: dict, allowed: set) -> None:
    for key in table:
        if key not in allowed:
            raise ConfigError(f"unknown config key {section}.{key}" if section else f"unknown config key {key}")


def _as_int(section: str, key: str, v) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{section}.{key} must be an integer, got {v!r}")
    return v


def _as_float(section: str, key: str, v) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{section}.{key} must be a number, got {v!r}")
    return float(v)


def _as_str(section: str, key: str, v) -> str:
    if not isinstance(v, str):
        raise ConfigError(f"{section}.{key} must be a string, got {v!r}")
    return v


def _as_bool(section: str, key: str, v) -> bool:
    if not isinstance(v, bool):
        raise ConfigError(f"{section}.{key} must be a boolean, got {v!r}")
    return v


def _as_int_list(section: str, key: str, v) -> tuple[int, ...]:
    if not isinstance(v, list) or any(isinstance(x, bool) or not isinstance(x, int) for x in v):
        raise ConfigError(f"{section}.{key} must be a list of integers, got {v!r}")
    return tuple(v)


def parse_config_text(text: str) -> ExperimentConfig:
    """Parse and validate a TOML config document."""
    try:
        raw = tomli.loads(text)
    except tomli.TOMLDecodeError as e:
        raise ConfigError(f"invalid TOML: {e}") from None
    top_allowed = {"seed"} | set(_SECTION_KEYS)
    _reject_unknown("", {k: v for k, v in raw.items() if not isinstance(v, dict)}, {"seed"})
    for key in raw:
        if key not in top_allowed:
            raise ConfigError(f"unknown config key {key}")
    seed = _as_int("", "seed", raw.get("seed", 0))

    ds_tab = raw.get("dataset", {})
    _reject_unknown("dataset", ds_tab, _SECTION_KEYS["dataset"])
    kind = _as_str("dataset", "kind", ds_tab.get("kind", "none"))
    if kind not in _DATASET_KEYS:
        raise ConfigError(f"dataset.kind must be one of {sorted(_DATASET_KEYS)}, got {kind!r}")
    _reject_unknown("dataset", ds_tab, _DATASET_KEYS[kind])
    dataset = DatasetSpec(
        kind=kind,
        path=_as_str("dataset", "path", ds_tab.get("path", "")),
        n=_as_int("dataset", "n", ds_tab.get("n", 0)),
        d_in=_as_int("dataset", "d_in", ds_tab.get("d_in", 1)),
        teacher_width=_as_int("dataset", "teacher_width", ds_tab.get("teacher_width", 1)),
        noise_std=_as_float("dataset", "noise_std", ds_tab.get("noise_std", 0.05)),
    )

    mtab = raw.get("model", {})
    _reject_unknown("model", mtab, _SECTION_KEYS["model"])
    scale = mtab.get("output_scale")
    model = ModelSpec(
        kind=_as_str("model", "kind", mtab.get("kind", "tanh")),
        output_scale=None if scale is None else _as_float("model", "output_scale", scale),
    )

    ltab = raw.get("loss", {})
    _reject_unknown("loss", ltab, _SECTION_KEYS["loss"])
    loss = _as_str("loss", "kind", ltab.get("kind", "squared"))

    ttab = raw.get("train", {})
    _reject_unknown("train", ttab, _SECTION_KEYS["train"])
    lam = _as_float("train", "lambda", ttab.get("lambda", 0.01))
    lam_prime = _as_float("train", "lambda_prime", ttab.get("lambda_prime", 0.01))
    eta = _as_float("train", "eta", ttab.get("eta", 0.01))
    steps = _as_int("train", "steps", ttab.get("steps", 1000))
    particles = _as_int("train", "particles", ttab.get("particles", 400))
    init_std = _as_float("train", "init_std", ttab.get("init_std", 0.5))

    gtab = raw.get("logging", {})
    _reject_unknown("logging", gtab, _SECTION_KEYS["logging"])
    if "every" in gtab and "iterations" in gtab:
        raise ConfigError("logging.every and logging.iterations are mutually exclusive")
    if "iterations" in gtab:
        logging = LoggingSpec(every=None, iterations=_as_int_list("logging", "iterations", gtab["iterations"]))
    else:
        logging = LoggingSpec(every=_as_int("logging", "every", gtab.get("every", 100)), iterations=None)

    etab = raw.get("estimator", {})
    _reject_unknown("estimator", etab, _SECTION_KEYS["estimator"])
    estimator = EstimatorConfig(
        knn_k=_as_int("estimator", "knn_k", etab.get("knn_k", 10)),
        is_samples=_as_int("estimator", "is_samples", etab.get("is_samples", 100_000)),
        tag=_as_str("estimator", "tag", etab.get("tag", "est")),
    )

    stab = raw.get("sampler", {})
    _reject_unknown("sampler", stab, _SECTION_KEYS["sampler"])
    step = stab.get("step")
    sampler = SamplerConfig(
        count=_as_int("sampler", "count", stab.get("count", 20000)),
        step=None if step is None else _as_float("sampler", "step", step),
        burn_in=_as_int("sampler", "burn_in", stab.get("burn_in", 1000)),
        thin=_as_int("sampler", "thin", stab.get("thin", 10)),
    )

    ftab = raw.get("fig1", {})
    _reject_unknown("fig1", ftab, _SECTION_KEYS["fig1"])
    fig1 = Fig1Spec(
        iterations=_as_int_list("fig1", "iterations", ftab.get("iterations", [])),
        grid_extent=_as_float("fig1", "grid_extent", ftab.get("grid_extent", 6.0)),
        grid_points=_as_int("fig1", "grid_points", ftab.get("grid_points", 301)),
        qstar_proxy=_as_bool("fig1", "qstar_proxy", ftab.get("qstar_proxy", False)),
    )

    cfg = ExperimentConfig(
        seed=seed, dataset=dataset, model=model, loss=loss, lam=lam, lam_prime=lam_prime,
        eta=eta, steps=steps, particles=particles, init_std=init_std, logging=logging,
        estimator=estimator, sampler=sampler, fig1=fig1,
    )
    validate_config(cfg)
    return cfg


def parse_config(path) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config_text(fh.read())


def validate_config(cfg: ExperimentConfig) -> None:
    """Reject configurations the runner could not execute."""
    cfg.hyper_params()
    if not (cfg.lam > 0):
        raise ConfigError("train.lambda must be > 0 for experiments")
    if not (cfg.lam_prime > 0):
        raise ConfigError("train.lambda_prime must be > 0 for experiments")
    if cfg.particles <= cfg.estimator.knn_k:
        raise ConfigError(
            f"train.particles = {cfg.particles} must exceed estimator.knn_k = {cfg.estimator.knn_k}")
    if cfg.init_std < 0:
        raise ConfigError("train.init_std must be >= 0")
    if cfg.loss not in ("squared", "logistic"):
        raise ConfigError(f"loss.kind must be squared or logistic, got {cfg.loss!r}")
    if cfg.model.kind not in ("tanh", "scaled-tanh", "tanh-scalar"):
        raise ConfigError(f"model.kind must be tanh, scaled-tanh, or tanh-scalar, got {cfg.model.kind!r}")
    if cfg.model.kind == "scaled-tanh" and cfg.model.output_scale is None:
        raise ConfigError("model.output_scale is required for scaled-tanh")
    if cfg.model.kind != "scaled-tanh" and cfg.model.output_scale is not None:
        raise ConfigError("model.output_scale only applies to scaled-tanh")
    ds = cfg.dataset
    if ds.kind == "file" and not ds.path:
        raise ConfigError("dataset.path is required for dataset.kind = 'file'")
    if ds.kind == "teacher-student":
        if ds.n < 1:
            raise ConfigError("dataset.n must be >= 1 for teacher-student data")
        if not (1 <= ds.teacher_width <= ds.d_in):
            raise ConfigError("dataset.teacher_width must be in [1, d_in]")
        if ds.noise_std < 0:
            raise ConfigError("dataset.noise_std must be >= 0")
    if ds.kind != "file" and ds.d_in < 1:
        raise ConfigError("dataset.d_in must be >= 1")
    if cfg.model.kind == "tanh-scalar" and ds.kind != "file" and ds.d_in != 1:
        raise ConfigError("tanh-scalar requires dataset.d_in = 1")
    if cfg.logging.every is not None and cfg.logging.every < 1:
        raise ConfigError("logging.every must be >= 1")
    cfg.schedule()
    if cfg.fig1.iterations:
        if cfg.model.kind != "tanh-scalar":
            raise ConfigError("fig1 snapshots require model.kind = 'tanh-scalar'")
        bad = [k for k in cfg.fig1.iterations if k < 0 or k > cfg.steps]
        if bad:
            raise ConfigError(f"fig1 iterations out of range: {bad}")
        if cfg.fig1.grid_points < 2 or cfg.fig1.grid_extent <= 0:
            raise ConfigError("fig1 grid must have extent > 0 and at least 2 points")


# ---- config serialization ----


def _toml_scalar(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        if not math.isfinite(v):
            raise ConfigError(f"cannot serialize non-finite float {v}")
        return repr(v)
    if isinstance(v, str):
        return json.dumps(v)
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_scalar(x) for x in v) + "]"
    raise ConfigError(f"cannot serialize config value {v!r}")


def serialize_config(cfg: ExperimentConfig) -> str:
    """Emit the config as TOML; parse(serialize(cfg)) == cfg."""
    lines = [f"seed = {_toml_scalar(cfg.seed)}", ""]
    ds = cfg.dataset
    lines.append("[dataset]")
    lines.append(f"kind = {_toml_scalar(ds.kind)}")
    if ds.kind == "file":
        lines.append(f"path = {_toml_scalar(ds.path)}")
    elif ds.kind == "teacher-student":
        for key in ("n", "d_in", "teacher_width", "noise_std"):
            lines.append(f"{key} = {_toml_scalar(getattr(ds, key))}")
    else:
        lines.append(f"d_in = {_toml_scalar(ds.d_in)}")
    lines.append("")
    lines.append("[model]")
    lines.append(f"kind = {_toml_scalar(cfg.model.kind)}")
    if cfg.model.output_scale is not None:
        lines.append(f"output_scale = {_toml_scalar(cfg.model.output_scale)}")
    lines.append("")
    lines.append("[loss]")
    lines.append(f"kind = {_toml_scalar(cfg.loss)}")
    lines.append("")
    lines.append("[train]")
    lines.append(f"lambda = {_toml_scalar(cfg.lam)}")
    lines.append(f"lambda_prime = {_toml_scalar(cfg.lam_prime)}")
    lines.append(f"eta = {_toml_scalar(cfg.eta)}")
    lines.append(f"steps = {_toml_scalar(cfg.steps)}")
    lines.append(f"particles = {_toml_scalar(cfg.particles)}")
    lines.append(f"init_std = {_toml_scalar(cfg.init_std)}")
    lines.append("")
    lines.append("[logging]")
    if cfg.logging.iterations is not None:
        lines.append(f"iterations = {_toml_scalar(list(cfg.logging.iterations))}")
    else:
        lines.append(f"every = {_toml_scalar(cfg.logging.every)}")
    lines.append("")
    lines.append("[estimator]")
    lines.append(f"knn_k = {_toml_scalar(cfg.estimator.knn_k)}")
    lines.append(f"is_samples = {_toml_scalar(cfg.estimator.is_samples)}")
    lines.append(f"tag = {_toml_scalar(cfg.estimator.tag)}")
    lines.append("")
    lines.append("[sampler]")
    lines.append(f"count = {_toml_scalar(cfg.sampler.count)}")
    if cfg.sampler.step is not None:
        lines.append(f"step = {_toml_scalar(cfg.sampler.step)}")
    lines.append(f"burn_in = {_toml_scalar(cfg.sampler.burn_in)}")
    lines.append(f"thin = {_toml_scalar(cfg.sampler.thin)}")
    lines.append("")
    lines.append("[fig1]")
    lines.append(f"iterations = {_toml_scalar(list(cfg.fig1.iterations))}")
    lines.append(f"grid_extent = {_toml_scalar(cfg.fig1.grid_extent)}")
    lines.append(f"grid_points = {_toml_scalar(cfg.fig1.grid_points)}")
    lines.append(f"qstar_proxy = {_toml_scalar(cfg.fig1.qstar_proxy)}")
    lines.append("")
    return "\n".join(lines)


# ---- data generation ----


def generate_teacher_student(n: int, d_in: int, teacher_width: int, noise_std: float,
                             rng: RngSpec) -> Dataset:
    """Two-layer sigmoid teacher with orthogonal first-layer neurons.

    Teacher rows are the first teacher_width rows of an orthogonal matrix
    obtained by modified Gram-Schmidt on Gaussian draws, scaled by
    sqrt(d_in); inputs are standard normal and targets get N(0, noise_std^2)
    observation noise.
    """
    if n < 1:
        raise DomainError("n must be >= 1")
    if not (1 <= teacher_width <= d_in):
        raise DomainError("teacher_width must lie in [1, d_in] (orthogonality)")
    if noise_std < 0:
        raise DomainError("noise_std must be >= 0")
    raw = normal_matrix(rng, "teacher", 0, d_in, d_in)
    basis = np.empty_like(raw)
    for j in range(d_in):
        v = raw[j].copy()
        for _ in range(2):
            for i in range(j):
                v -= np.dot(basis[i], v) * basis[i]
        norm = float(np.linalg.norm(v))
        if norm < 1.0e-12:
            raise DomainError("degenerate Gram-Schmidt draw")
        basis[j] = v / norm
    weights = basis[:teacher_width] * math.sqrt(d_in)
    inputs = normal_matrix(rng, "data", 0, n, d_in)
    noise = normal_values(rng, "data-noise", 0, 0, n)
    targets = expit(inputs @ weights.T).mean(axis=1)
    targets = targets + noise_std * noise
    return Dataset(inputs, targets)


def build_dataset(cfg: ExperimentConfig, rng: RngSpec) -> Dataset:
    ds = cfg.dataset
    if ds.kind == "none":
        return Dataset.empty(ds.d_in)
    if ds.kind == "file":
        return load_dataset_csv(ds.path)
    return generate_teacher_student(ds.n, ds.d_in, ds.teacher_width, ds.noise_std, rng)


# ---- density snapshots ----


@dataclass(frozen=True, eq=False)
class Fig1Snapshot:
    """Density table on a uniform theta grid for 1D visualization runs."""

    theta: np.ndarray
    q_density: np.ndarray
    pq_density: np.ndarray
    qstar_density: Optional[np.ndarray] = None

    def to_csv(self, path) -> None:
        cols = ["theta", "q_density", "pq_density"]
        mats = [self.theta, self.q_density, self.pq_density]
        if self.qstar_density is not None:
            cols.append("qstar_density")
            mats.append(self.qstar_density)
        _atomic_write(path, _format_table(cols, mats))


def _format_table(cols: list[str], arrays: list[np.ndarray]) -> str:
    lines = [",".join(cols)]
    for row in zip(*arrays):
        lines.append(",".join(f"{v:.17g}" for v in row))
    return "\n".join(lines) + "\n"


def _grid_histogram(values: np.ndarray, grid: np.ndarray, h: float) -> np.ndarray:
    edges = np.concatenate([grid - 0.5 * h, [grid[-1] + 0.5 * h]])
    if values.min() < edges[0] or values.max() > edges[-1]:
        raise GridError("particles fall outside the snapshot grid")
    counts, _ = np.histogram(values, bins=edges)
    return counts / (values.shape[0] * h)


def fig1_snapshot(ensemble: ParticleEnsemble, pg: ProximalGibbs, grid: np.ndarray) -> Fig1Snapshot:
    """Histogram of the 1D ensemble and the normalized p_q curve on a grid.

    The grid must be uniform; the p_q curve is normalized by the trapezoid
    rule on the same grid (with the quadrature oracle's boundary-mass check),
    so it integrates to 1 on the grid by construction.
    """
    grid = np.asarray(grid, dtype=np.float64).reshape(-1)
    if ensemble.d != 1 or pg.model.d != 1:
        raise DimensionError("density snapshots require parameter dimension d = 1")
    if grid.size < 2:
        raise GridError("need at least 2 grid points")
    hs = np.diff(grid)
    h = float(hs[0])
    if h <= 0 or not np.allclose(hs, h, rtol=1.0e-9, atol=0.0):
        raise GridError("snapshot grid must be uniform and increasing")
    vals = unnorm_log_density_many(pg, grid[:, None])
    peak = float(np.max(vals))
    if max(vals[0], vals[-1]) > peak + math.log(1.0e-12):
        raise GridError("extent too small: boundary mass above 1e-12 of the mode")
    log_z = log_trapezoid(vals, h)
    pq = np.exp(vals - log_z)
    q = _grid_histogram(ensemble.params[:, 0], grid, h)
    return Fig1Snapshot(theta=grid, q_density=q, pq_density=pq)


# ---- run artifacts ----


@dataclass(frozen=True)
class DiagnosticsRecord:
    """One row of records.csv; field order is the CSV column order."""

    iter: int
    sim_time: float
    risk: float
    moment: float
    entropy_est: float
    primal_L: float
    dual_D: float
    gap: float
    kl_q_pq: float
    kl_indep: float
    second_moment: float
    moment_bound_ok: bool
    se_primal: float
    se_dual: float
    se_gap: float
    wallclock_ms: float

    def csv_row(self) -> str:
        parts = []
        for name in RECORD_FIELDS:
            v = getattr(self, name)
            if name == "iter":
                parts.append(str(v))
            elif name == "moment_bound_ok":
                parts.append("1" if v else "0")
            elif name == "wallclock_ms":
                parts.append(f"{v:.3f}")
            else:
                parts.append(f"{v:.17g}")
        return ",".join(parts)


def _atomic_write(path, text: str) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def write_records_csv(records: list[DiagnosticsRecord], path) -> None:
    lines = [",".join(RECORD_FIELDS)]
    lines.extend(rec.csv_row() for rec in records)
    _atomic_write(path, "\n".join(lines) + "\n")


def read_records_csv(path) -> dict[str, np.ndarray]:
    """Read records.csv back into column arrays (floats)."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        if tuple(header) != RECORD_FIELDS:
            raise MfldError(f"unexpected records header {header}")
        body = np.loadtxt(fh, delimiter=",", ndmin=2)
    if body.size == 0:
        body = body.reshape(0, len(RECORD_FIELDS))
    return {name: body[:, j] for j, name in enumerate(RECORD_FIELDS)}


def _flat_meta(cfg: ExperimentConfig, consts, theory: TheoryReport, extra: dict) -> dict:
    meta = {
        "schema_version": 1,
        "package_version": __version__,
        "seed": cfg.seed,
        "dataset_kind": cfg.dataset.kind,
        "dataset_path": cfg.dataset.path,
        "dataset_n": cfg.dataset.n,
        "dataset_d_in": cfg.dataset.d_in,
        "teacher_width": cfg.dataset.teacher_width,
        "noise_std": cfg.dataset.noise_std,
        "model_kind": cfg.model.kind,
        "output_scale": cfg.model.output_scale if cfg.model.output_scale is not None else 0.0,
        "loss_kind": cfg.loss,
        "lambda": cfg.lam,
        "lambda_prime": cfg.lam_prime,
        "eta": cfg.eta,
        "steps": cfg.steps,
        "particles": cfg.particles,
        "init_std": cfg.init_std,
        "log_iterations": ",".join(str(k) for k in cfg.schedule()),
        "knn_k": cfg.estimator.knn_k,
        "is_samples": cfg.estimator.is_samples,
        "estimator_tag": cfg.estimator.tag,
        "sampler_count": cfg.sampler.count,
        "sampler_step": cfg.sampler.step_for(cfg.lam, cfg.lam_prime),
        "sampler_burn_in": cfg.sampler.burn_in,
        "sampler_thin": cfg.sampler.thin,
        "c1": consts.c1,
        "c2": consts.c2,
        "c3": consts.c3,
        "c4": consts.c4,
        "c5": consts.c5,
        "constants_unit_ball": consts.unit_ball,
        "alpha": theory.alpha,
        "alpha_log": theory.alpha_log,
        "moment_bound": theory.moment_bound,
        "delta_bar": theory.delta_bar,
        "envelope_vacuous": theory.envelope_vacuous,
        "fig1_iterations": ",".join(str(k) for k in cfg.fig1.iterations),
        "fig1_qstar_proxy": "reference run at eta/10 with 10x steps" if (
            cfg.fig1.iterations and cfg.fig1.qstar_proxy) else "",
    }
    meta.update(extra)
    return meta


def run_experiment(cfg: ExperimentConfig, out_dir, record_hook=None) -> Path:
    """Execute a configured run and persist its artifacts.

    record_hook, when given, is called as record_hook(k, record, ensemble)
    after each logged iteration; exceptions it raises abort the run through
    the same flush-then-reraise path as internal errors.
    """
    validate_config(cfg)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = RngSpec(cfg.seed)
    dataset = build_dataset(cfg, rng)
    model = make_neuron(cfg.model.kind, dataset.d_in, cfg.model.output_scale)
    loss = make_loss(cfg.loss)
    consts = model_constants(model, loss, dataset)
    hp = cfg.hyper_params()
    theory = TheoryReport.from_setup(hp, consts, model.d)
    ens0 = initialize_ensemble(cfg.particles, model.d, cfg.init_std, rng)
    schedule = cfg.schedule()
    fig1_iters = frozenset(cfg.fig1.iterations)
    hook_iters = sorted(set(schedule) | fig1_iters)
    grid = np.linspace(-cfg.fig1.grid_extent, cfg.fig1.grid_extent, cfg.fig1.grid_points)
    records: list[DiagnosticsRecord] = []
    snapshots: dict[int, Fig1Snapshot] = {}
    sched_set = frozenset(schedule)
    t0 = time.perf_counter()

    def hook(k: int, ens: ParticleEnsemble) -> None:
        if k in sched_set:
            rep = duality_gap_report(ens, model, loss, dataset, cfg.lam, cfg.lam_prime,
                                     cfg.estimator, rng, k=k)
            rec = DiagnosticsRecord(
                iter=k, sim_time=k * cfg.eta, risk=rep.risk, moment=rep.moment,
                entropy_est=rep.entropy_est, primal_L=rep.primal, dual_D=rep.dual,
                gap=rep.gap, kl_q_pq=rep.kl_q_pq, kl_indep=rep.kl_indep,
                second_moment=rep.second_moment, moment_bound_ok=theory.moment_ok(ens),
                se_primal=rep.se_primal, se_dual=rep.se_dual, se_gap=rep.se_gap,
                wallclock_ms=(time.perf_counter() - t0) * 1.0e3,
            )
            records.append(rec)
            if record_hook is not None:
                record_hook(k, rec, ens)
        if k in fig1_iters:
            pg = ProximalGibbs.from_ensemble(ens, model, loss, dataset, cfg.lam, cfg.lam_prime)
            snapshots[k] = fig1_snapshot(ens, pg, grid)

    aborted = False
    error = ""
    result = None
    try:
        result = run_dynamics(ens0, model, loss, dataset, hp, rng, hooks=(hook_iters, hook))
    except BaseException as e:
        aborted = True
        error = f"{type(e).__name__}: {e}"
        raise
    finally:
        if cfg.fig1.iterations and cfg.fig1.qstar_proxy and not aborted:
            ref_cfg = dataclasses.replace(
                cfg, seed=(cfg.seed ^ _QSTAR_SEED_MIX) % (1 << 63), eta=cfg.eta / 10.0,
                steps=cfg.steps * 10,
            )
            ref_rng = RngSpec(ref_cfg.seed)
            ref_ens0 = initialize_ensemble(cfg.particles, model.d, cfg.init_std, ref_rng)
            ref_hp = ref_cfg.hyper_params()
            ref = run_dynamics(ref_ens0, model, loss, dataset, ref_hp, ref_rng)
            h = float(grid[1] - grid[0])
            qstar = _grid_histogram(ref.ensemble.params[:, 0], grid, h)
            snapshots.update({
                k: dataclasses.replace(snap, qstar_density=qstar) for k, snap in snapshots.items()
            })
        write_records_csv(records, out / "records.csv")
        for k, snap in sorted(snapshots.items()):
            snap.to_csv(out / f"fig1_iter{k:06d}.csv")
        extra = {
            "aborted": aborted,
            "error": error,
            "records_written": len(records),
            "init_second_moment": ens0.second_moment(),
            "init_moment_ok": theory.moment_ok(ens0),
            "wallclock_ms_total": (time.perf_counter() - t0) * 1.0e3,
        }
        _atomic_write(out / "meta.json", json.dumps(_flat_meta(cfg, consts, theory, extra), indent=2) + "\n")
        if result is not None:
            params = result.ensemble.params
            cols = [f"theta{j}" for j in range(params.shape[1])]
            _atomic_write(out / "final_particles.csv",
                          _format_table(cols, [params[:, j] for j in range(params.shape[1])]))
    return out
