"""Repeated-run experiments: config parsing, execution, aggregation, reports.

Run ``i`` of an experiment with base seed ``s`` uses the integer seed
``s + i`` and the generator ``make_rng(s + i)``, so any single run can be
replayed in isolation and the worker count never changes a result.
"""

import csv
import dataclasses
import io
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .engine import SdisConfig, run_ds, run_mcs, run_sdis
from .exceptions import SdisError
from .limit_states import make_model, reference_pf
from .mathcore import make_rng

METHODS = ("mcs", "ds", "sdis")
CSV_COLUMNS = ("run_index", "seed", "pf_hat", "cv_hat", "n_evals", "levels", "wall_ms")
WORKERS_ENV = "SDIS_WORKERS"

_BASELINE_PARAMS = {"mcs": "n_samples", "ds": "n_directions"}


class ConfigError(ValueError):
    """The experiment file could not be turned into a valid spec."""


@dataclass(frozen=True)
class ExperimentSpec:
    name: str
    model: str
    method: str
    params: dict = field(default_factory=dict)
    repetitions: int = 1
    seed: int = 0
    output: str = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.repetitions < 1:
            raise ConfigError("repetitions must be >= 1")
        try:
            make_model(self.model)
        except KeyError as exc:
            raise ConfigError(exc.args[0]) from None
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"model {self.model!r}: {exc}") from None
        self.method_config()

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        model = data.pop("model", None)
        if model is None:
            raise ConfigError("missing 'model'")
        extra = data.pop("model_params", None) or {}
        model = ":".join([str(model)] + [f"{k}={v}" for k, v in extra.items()])
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown keys: {', '.join(sorted(unknown))}")
        try:
            return cls(model=model, **data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def load(cls, path):
        path = Path(path)
        try:
            data = yaml.safe_load(path.read_text())
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"{path}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: expected a mapping at top level")
        data.setdefault("name", path.stem)
        return cls.from_dict(data)

    def method_config(self, seed=None):
        """SdisConfig for ``sdis`` runs, the sample count for the baselines."""
        params = dict(self.params)
        if self.method == "sdis":
            if "kernel" not in params:
                raise ConfigError("sdis runs need an explicit 'kernel' (csmh or imh)")
            params.pop("seed", None)
            try:
                return SdisConfig(seed=self.seed if seed is None else seed, **params)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"sdis params: {exc}") from None
        key = _BASELINE_PARAMS[self.method]
        if set(params) != {key}:
            raise ConfigError(f"{self.method} takes exactly one parameter, '{key}'")
        return int(params[key])

    def resolved(self):
        """Every setting a run uses, defaults included."""
        out = {"name": self.name, "model": self.model, "method": self.method,
               "repetitions": self.repetitions, "seed": self.seed}
        cfg = self.method_config()
        if isinstance(cfg, SdisConfig):
            params = dataclasses.asdict(cfg)
            params.pop("seed")
        else:
            params = {_BASELINE_PARAMS[self.method]: cfg}
        out["params"] = params
        return out


@dataclass
class RunRecord:
    run_index: int
    seed: int
    pf_hat: float = math.nan
    cv_hat: float = math.nan
    n_evals: int = 0
    levels: int = 0
    wall_ms: float = 0.0
    sigmas: list = field(default_factory=list)
    error: str = None


@dataclass
class ExperimentReport:
    spec: ExperimentSpec
    records: list
    aggregates: dict = None

    def __post_init__(self):
        if self.aggregates is None:
            self.aggregates = aggregate(self.records)

    @property
    def failures(self):
        return [r for r in self.records if r.error is not None]

    @property
    def complete(self):
        return not self.failures


def run_one(spec, run_index):
    """Execute run ``run_index`` of ``spec``; errors are captured in the record."""
    seed = spec.seed + run_index
    rec = RunRecord(run_index=run_index, seed=seed)
    model = make_model(spec.model)
    rng = make_rng(seed)
    t0 = time.perf_counter()
    try:
        if spec.method == "sdis":
            res = run_sdis(model, spec.method_config(seed), rng)
            rec.pf_hat, rec.cv_hat, rec.levels = res.pf_hat, res.cv_hat, res.k
            rec.sigmas = res.sigmas
        elif spec.method == "mcs":
            rec.pf_hat, rec.cv_hat = run_mcs(model, spec.method_config(), rng)
        else:
            rec.pf_hat, rec.cv_hat = run_ds(model, spec.method_config(), rng)
    except SdisError as exc:
        rec.error = f"{type(exc).__name__}: {exc}"
    rec.n_evals = model.n_evals
    rec.wall_ms = 1000.0 * (time.perf_counter() - t0)
    return rec


def _run_one_star(args):
    return run_one(*args)


def resolve_workers(workers=None):
    if workers is None:
        workers = int(os.environ.get(WORKERS_ENV, "1"))
    return max(1, int(workers))


def run_experiment(spec, workers=None):
    """Run all repetitions of ``spec`` and aggregate them."""
    workers = resolve_workers(workers)
    jobs = [(spec, i) for i in range(spec.repetitions)]
    if workers == 1 or spec.repetitions == 1:
        records = [run_one(*job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_run_one_star, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    records.sort(key=lambda r: r.run_index)
    return ExperimentReport(spec, records)


def aggregate(records):
    """Summary statistics over the successful runs, in run-index order.

    ``cv_pf`` is the empirical coefficient of variation (``R - 1``
    normalization) and is NaN with fewer than two runs.
    """
    ok = [r for r in sorted(records, key=lambda r: r.run_index) if r.error is None]
    pf = np.array([r.pf_hat for r in ok], dtype=float)
    cv = np.array([r.cv_hat for r in ok], dtype=float)
    ev = np.array([r.n_evals for r in ok], dtype=float)
    n = len(ok)
    mean_pf = float(pf.mean()) if n else math.nan
    cv_pf = float(pf.std(ddof=1) / mean_pf) if n > 1 and mean_pf != 0 else math.nan
    return {
        "runs": n,
        "mean_pf": mean_pf,
        "cv_pf": cv_pf,
        "mean_cv_hat": float(cv.mean()) if n else math.nan,
        "mean_evals": float(ev.mean()) if n else math.nan,
    }


def _fmt(value):
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".17g")


def _jsonable(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return _jsonable(obj.item())
    return obj


def emit_report(report, fmt):
    """Serialize a report as CSV (one row per successful run) or a JSON summary."""
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for r in report.records:
            if r.error is None:
                writer.writerow([_fmt(getattr(r, c)) for c in CSV_COLUMNS])
        return buf.getvalue().encode()
    if fmt == "json":
        summary = {
            "spec": report.spec.resolved(),
            "reference_pf": reference_pf(report.spec.model),
            "aggregates": report.aggregates,
            "complete": report.complete,
            "failed_runs": [{"run_index": r.run_index, "seed": r.seed, "error": r.error}
                            for r in report.failures],
        }
        return (json.dumps(_jsonable(summary), indent=2) + "\n").encode()
    raise ValueError(f"unknown format {fmt!r}")


def write_report(report, out_dir):
    """Write ``<name>_runs.csv`` and ``<name>_summary.json`` into ``out_dir``."""
    out_dir = Path(out_dir)
    paths = []
    for fmt, suffix in (("csv", "_runs.csv"), ("json", "_summary.json")):
        path = out_dir / f"{report.spec.name}{suffix}"
        try:
            out_dir.mkdir(parents=True, exist_ok=True)
            path.write_bytes(emit_report(report, fmt))
        except OSError as exc:
            raise OSError(f"cannot write {path}: {exc}") from exc
        paths.append(path)
    return paths


def read_runs_csv(path_or_bytes):
    """Parse a runs CSV back into :class:`RunRecord` objects."""
    if isinstance(path_or_bytes, bytes):
        text = path_or_bytes.decode()
    else:
        text = Path(path_or_bytes).read_text()
    rows = csv.DictReader(io.StringIO(text))
    return [RunRecord(run_index=int(r["run_index"]), seed=int(r["seed"]), pf_hat=float(r["pf_hat"]),
                      cv_hat=float(r["cv_hat"]), n_evals=int(r["n_evals"]), levels=int(r["levels"]),
                      wall_ms=float(r["wall_ms"])) for r in rows]
