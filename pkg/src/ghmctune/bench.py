"""Benchmark registry, run configuration, persistence and orchestration.

A run is described by a :class:`RunConfig` (benchmark, sampler mode, chain
count, iteration budget, seed, and optional overrides of the tuned
hyperparameters).  The command helpers mirror the CLI subcommands:

* :func:`cmd_tune` runs the burn-in and writes the tuning report,
* :func:`cmd_sample` runs seeded chains (optionally in parallel) and
  persists samples, records and a manifest,
* :func:`cmd_diagnose` computes convergence/efficiency metrics,
* :func:`cmd_compare` builds relative-efficiency tables for two runs,
* :func:`cmd_sensitivity` perturbs the lower end of the dimensionless step
  interval and re-runs the pipeline,
* :func:`cmd_sweep_phi_l` runs the full factorial of refresh-noise and
  trajectory-length rules,
* :func:`cmd_analyze_integrators` emits integrator accuracy/stability data
  tables.

Reproducibility: every chain draws from a private Philox stream keyed by
(seed, chain index), so identical manifests give bit-identical chain files
regardless of worker count.  Manifests carry a hash of the canonical config
serialization.
"""

from __future__ import annotations

import hashlib
import json
import multiprocessing
import os
import re
import time
from dataclasses import dataclass, asdict
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import integrators
from .diagnostics import ChainSet, DiagnosticsReport, diagnose, ref_metric
from .integrators import H_LOWER, build_scheme
from .models import (
    TargetModel,
    banana_model,
    blr_model,
    gaussian_model,
    gen_wishart_precision,
    load_dataset,
    make_banana_spec,
    make_synthetic_blr,
)
from .saia import default_map
from .samplers import (
    AdaptiveScheme,
    ChainRecords,
    DiscreteSet,
    Fixed,
    SamplerConfig,
    UniformInterval,
    UniformIntRange,
    run_chain,
)
from .tuning import TuningReport, atune, config_from_report

__all__ = [
    "ConfigError",
    "RunConfig",
    "RunArtifacts",
    "resolve_benchmark",
    "cmd_tune",
    "cmd_sample",
    "cmd_diagnose",
    "cmd_compare",
    "cmd_sensitivity",
    "cmd_sweep_phi_l",
    "cmd_analyze_integrators",
    "parse_rule",
    "load_chain_set",
]

_OUTPUT_ROOT_ENV = "GHMCTUNE_OUTPUT_ROOT"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    """Benchmark run description; every field maps to a CLI flag.

    Overrides replace the corresponding tuned setting; leaving them unset
    keeps the values from the tuning report.
    """

    benchmark: str
    mode: str = "ghmc"
    n_chains: int = 4
    n_burnin: int = 1000
    n_prod: int = 2000
    seed: int = 0
    out_dir: Optional[str] = None
    dataset_path: Optional[str] = None
    # overrides
    integrator: Optional[str] = None
    dt_fixed: Optional[float] = None
    dt_interval: Optional[tuple] = None
    l_fixed: Optional[int] = None
    l_range: Optional[tuple] = None
    l_choices: Optional[tuple] = None
    phi_fixed: Optional[float] = None
    phi_interval: Optional[tuple] = None
    # knobs
    fitting_mode: str = "auto"
    ar_target: float = 0.95
    h_lower: float = H_LOWER
    standardize: bool = True
    prior_std: float = 10.0
    binary_chains: bool = False
    psrf_statistic: str = "max"
    psrf_threshold: float = 1.01
    window: Optional[int] = None
    ess_method: str = "geyer"
    warm_start: bool = False

    def __post_init__(self):
        if self.n_prod < 1 or self.n_chains < 1:
            raise ConfigError("n_prod and n_chains must be at least 1")
        if self.mode not in ("hmc", "ghmc"):
            raise ConfigError("mode must be 'hmc' or 'ghmc'")
        if self.mode == "hmc" and (self.phi_fixed not in (None, 1.0)
                                   or self.phi_interval is not None):
            raise ConfigError("phi overrides are forbidden in HMC mode")
        l_overrides = [v for v in (self.l_fixed, self.l_range, self.l_choices)
                       if v is not None]
        if len(l_overrides) > 1:
            raise ConfigError("give at most one of l_fixed, l_range, l_choices")
        if self.dt_fixed is not None and self.dt_interval is not None:
            raise ConfigError("give at most one of dt_fixed, dt_interval")
        if self.benchmark.startswith("blr-file") and not self.dataset_path:
            raise ConfigError("blr-file benchmark requires dataset_path")
        if self.warm_start and not re.fullmatch(r"gauss-\d+", self.benchmark):
            raise ConfigError("warm_start draws exact initial points and is "
                              "only available for gauss-<D> benchmarks")
        for tpl_field in ("dt_interval", "l_range", "l_choices", "phi_interval"):
            val = getattr(self, tpl_field)
            if val is not None:
                object.__setattr__(self, tpl_field, tuple(val))

    def to_dict(self) -> dict:
        data = asdict(self)
        for key, val in data.items():
            if isinstance(val, tuple):
                data[key] = list(val)
        return data

    def hash(self) -> str:
        text = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(text.encode()).hexdigest()

    @staticmethod
    def from_dict(data: dict) -> "RunConfig":
        return RunConfig(**data)

    def resolved_out_dir(self) -> Path:
        if self.out_dir:
            return Path(self.out_dir)
        root = os.environ.get(_OUTPUT_ROOT_ENV, "runs")
        return Path(root) / f"{self.benchmark}-{self.mode}-seed{self.seed}"


def resolve_benchmark(config: RunConfig) -> TargetModel:
    """Build the target model named by ``config.benchmark``.

    Registered names: ``gauss-<D>`` (precision drawn from Wishart(I_D, D)
    with the run seed), ``blr-synthetic-<D>-<K>``, ``blr-file`` (reads
    ``dataset_path``), ``banana``.
    """
    name = config.benchmark
    m = re.fullmatch(r"gauss-(\d+)", name)
    if m:
        d = int(m.group(1))
        spec = gen_wishart_precision(d, seed=config.seed)
        return gaussian_model(spec, name=name)
    m = re.fullmatch(r"blr-synthetic-(\d+)-(\d+)", name)
    if m:
        d, k = int(m.group(1)), int(m.group(2))
        data = make_synthetic_blr(d, k, seed=config.seed)
        if config.standardize:
            data = data.standardized()
        return blr_model(data, prior_std=config.prior_std, name=name)
    if name == "blr-file":
        data = load_dataset(config.dataset_path)
        if config.standardize:
            data = data.standardized()
        return blr_model(data, prior_std=config.prior_std, name=name)
    if name == "banana":
        return banana_model(make_banana_spec(seed=config.seed), name=name)
    raise ConfigError(
        f"unknown benchmark '{name}'; expected gauss-<D>, "
        "blr-synthetic-<D>-<K>, blr-file or banana"
    )


@dataclass
class RunArtifacts:
    out_dir: Path
    manifest: dict
    chain_paths: list
    record_paths: list
    tuning_report_path: Optional[Path] = None

    @property
    def manifest_path(self) -> Path:
        return self.out_dir / "manifest.json"


# ---------------------------------------------------------------------------
# Persistence

_CHAIN_HEADER = "# ghmctune chain samples"
_RECORD_FIELDS = ("accepted", "delta_h", "n_steps", "dt", "phi",
                  "grad_evals", "divergent")


def _write_chain(path: Path, samples: np.ndarray, binary: bool) -> Path:
    if binary:
        path = path.with_suffix(".npz")
        np.savez_compressed(path, samples=samples)
        return path
    path = path.with_suffix(".csv")
    with open(path, "w") as fh:
        fh.write(f"{_CHAIN_HEADER}\n")
        for row in samples:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
    return path


def _read_chain(path: Path) -> np.ndarray:
    if path.suffix == ".npz":
        with np.load(path) as data:
            return data["samples"]
    rows = []
    with open(path) as fh:
        for line in fh:
            if line.startswith("#"):
                continue
            rows.append([float(v) for v in line.strip().split(",")])
    return np.asarray(rows)


def _write_records(path: Path, rec: ChainRecords) -> Path:
    with open(path, "w") as fh:
        fh.write(",".join(_RECORD_FIELDS) + "\n")
        for i in range(len(rec)):
            fh.write(f"{int(rec.accepted[i])},{float(rec.delta_h[i])!r},"
                     f"{rec.n_steps[i]},{float(rec.dt[i])!r},{float(rec.phi[i])!r},"
                     f"{rec.grad_evals[i]},{int(rec.divergent[i])}\n")
    return path


def _read_records(path: Path) -> ChainRecords:
    data = np.genfromtxt(path, delimiter=",", names=True)
    data = np.atleast_1d(data)
    return ChainRecords(
        accepted=data["accepted"].astype(bool),
        delta_h=np.asarray(data["delta_h"], dtype=float),
        n_steps=data["n_steps"].astype(np.int64),
        dt=np.asarray(data["dt"], dtype=float),
        phi=np.asarray(data["phi"], dtype=float),
        grad_evals=data["grad_evals"].astype(np.int64),
        divergent=data["divergent"].astype(bool),
    )


def load_chain_set(out_dir: str | Path) -> ChainSet:
    """Reassemble a ChainSet from a sample run directory."""
    out_dir = Path(out_dir)
    manifest = json.loads((out_dir / "manifest.json").read_text())
    chains = [_read_chain(out_dir / p) for p in manifest["chain_files"]]
    records = [_read_records(out_dir / p) for p in manifest["record_files"]]
    return ChainSet(np.stack(chains), records, stages=manifest["stages"])


# ---------------------------------------------------------------------------
# Sampler-config assembly and chain workers


def _build_sampler_config(config: RunConfig,
                          report: Optional[TuningReport]) -> SamplerConfig:
    saia_map = default_map()
    base = config_from_report(report, seed=config.seed) if report else None

    if config.dt_fixed is not None:
        dt_rule = Fixed(config.dt_fixed)
    elif config.dt_interval is not None:
        dt_rule = UniformInterval(*config.dt_interval)
    elif base is not None:
        dt_rule = base.dt_rule
    else:
        raise ConfigError("no step size available: tune first or override dt")

    if config.l_fixed is not None:
        l_rule = Fixed(config.l_fixed)
    elif config.l_range is not None:
        l_rule = UniformIntRange(int(config.l_range[0]), int(config.l_range[1]))
    elif config.l_choices is not None:
        l_rule = DiscreteSet(tuple(int(v) for v in config.l_choices))
    elif base is not None:
        l_rule = base.l_rule
    else:
        l_rule = Fixed(1)

    if config.mode == "hmc":
        phi_rule = Fixed(1.0)
    elif config.phi_fixed is not None:
        phi_rule = Fixed(config.phi_fixed)
    elif config.phi_interval is not None:
        phi_rule = UniformInterval(*config.phi_interval)
    elif base is not None:
        phi_rule = base.phi_rule
    else:
        raise ConfigError("GHMC needs a phi rule: tune first or override phi")

    if config.integrator is not None and config.integrator != "saia3":
        if config.integrator == "saia2":
            raise ConfigError("saia2 needs a fixed dimensionless step; choose "
                              "a named fixed integrator or saia3")
        scheme = build_scheme(config.integrator)
    elif report is not None:
        scheme = AdaptiveScheme(report.cf, saia_map)
    elif config.integrator == "saia3":
        raise ConfigError("saia3 without a tuning report has no CF; tune first")
    else:
        scheme = build_scheme("vv")

    return SamplerConfig(mode=config.mode, dt_rule=dt_rule, l_rule=l_rule,
                         phi_rule=phi_rule, scheme=scheme, seed=config.seed)


def _warm_init(config: RunConfig, chain_index: int) -> np.ndarray:
    """Exact target draw used as a warm start (gauss benchmarks only).

    Keyed by (seed, 10000 + chain) so warm starts never collide with the
    chain streams themselves.
    """
    from .models import sample_gaussian
    from .samplers import chain_rng

    d = int(re.fullmatch(r"gauss-(\d+)", config.benchmark).group(1))
    spec = gen_wishart_precision(d, seed=config.seed)
    rng = chain_rng(config.seed, 10_000 + chain_index)
    return sample_gaussian(spec, 1, rng)[0]


def _chain_worker(args):
    config_dict, report_json, chain_index = args
    config = RunConfig.from_dict(config_dict)
    report = TuningReport.from_json(report_json) if report_json else None
    model = resolve_benchmark(config)
    sampler_config = _build_sampler_config(config, report)
    initial = _warm_init(config, chain_index) if config.warm_start else None
    samples, records = run_chain(model, sampler_config, config.n_prod,
                                 initial_theta=initial,
                                 chain_index=chain_index,
                                 warm_start=config.warm_start)
    return chain_index, samples, records


# ---------------------------------------------------------------------------
# Commands


def cmd_tune(config: RunConfig, out_dir: Optional[Path] = None) -> TuningReport:
    """Run the burn-in and analysis, write tuning_report.json, return it."""
    model = resolve_benchmark(config)
    t0 = time.perf_counter()
    report, _, _ = atune(
        model,
        mode=config.mode,
        n_burnin=config.n_burnin,
        target_ar=config.ar_target,
        collect_freq=model.has_hessian,
        fitting_mode=config.fitting_mode,
        seed=config.seed,
        h_lower=config.h_lower,
    )
    elapsed = time.perf_counter() - t0
    out = Path(out_dir) if out_dir else config.resolved_out_dir()
    out.mkdir(parents=True, exist_ok=True)
    (out / "tuning_report.json").write_text(report.to_json())
    (out / "tuning_timing.json").write_text(
        json.dumps({"burnin_seconds": elapsed}, sort_keys=True))
    return report


def cmd_sample(config: RunConfig, report: Optional[TuningReport] = None,
               workers: int = 1) -> RunArtifacts:
    """Run the production chains and persist samples, records and manifest.

    Tunes inline when no report is supplied and the step size is not fully
    overridden.  Chains execute in parallel across ``workers`` processes;
    results do not depend on the worker count.
    """
    out = config.resolved_out_dir()
    out.mkdir(parents=True, exist_ok=True)
    report_path = None
    needs_tuning = report is None and (config.dt_fixed is None
                                       and config.dt_interval is None)
    if needs_tuning or (report is None and config.integrator in (None, "saia3")):
        report = cmd_tune(config, out_dir=out)
        report_path = out / "tuning_report.json"
    sampler_config = _build_sampler_config(config, report)

    t0 = time.perf_counter()
    tasks = [(config.to_dict(), report.to_json() if report else None, i)
             for i in range(config.n_chains)]
    if workers > 1:
        default_map()  # warm the coefficient cache before forking
        with multiprocessing.Pool(processes=workers) as pool:
            results = pool.map(_chain_worker, tasks)
    else:
        results = [_chain_worker(t) for t in tasks]
    results.sort(key=lambda r: r[0])
    sampling_seconds = time.perf_counter() - t0

    chains_dir = out / "chains"
    chains_dir.mkdir(exist_ok=True)
    chain_files, record_files = [], []
    for index, samples, records in results:
        cpath = _write_chain(chains_dir / f"chain_{index:03d}",
                             samples, config.binary_chains)
        rpath = _write_records(chains_dir / f"records_{index:03d}.csv", records)
        chain_files.append(str(cpath.relative_to(out)))
        record_files.append(str(rpath.relative_to(out)))

    stages = sampler_config.scheme.at(
        sampler_config.dt_rule.mean if hasattr(sampler_config.dt_rule, "mean")
        else sampler_config.dt_rule.draw(np.random.default_rng(0))).stages
    manifest = {
        "config": config.to_dict(),
        "config_hash": config.hash(),
        "package": "ghmctune 0.1.0",
        "chain_seeds": [[config.seed, i] for i in range(config.n_chains)],
        "stages": stages,
        "chain_files": chain_files,
        "record_files": record_files,
        "tuning_report": "tuning_report.json" if report_path else None,
        "timings": {"sampling_seconds": sampling_seconds},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=1))
    return RunArtifacts(out, manifest, chain_files, record_files, report_path)


def cmd_diagnose(out_dir: str | Path, statistic: Optional[str] = None,
                 threshold: Optional[float] = None,
                 window: Optional[int] = None,
                 ess_method: Optional[str] = None) -> DiagnosticsReport:
    """Compute and persist diagnostics for a finished sample run."""
    out_dir = Path(out_dir)
    if not (out_dir / "manifest.json").exists():
        raise FileNotFoundError(f"no manifest in {out_dir}")
    manifest = json.loads((out_dir / "manifest.json").read_text())
    config = RunConfig.from_dict(manifest["config"])
    chain_set = load_chain_set(out_dir)
    report = diagnose(
        chain_set,
        threshold=threshold if threshold is not None else config.psrf_threshold,
        statistic=statistic if statistic is not None else config.psrf_statistic,
        window=window if window is not None else config.window,
        ess_method=ess_method if ess_method is not None else config.ess_method,
        wall_seconds=manifest.get("timings", {}).get("sampling_seconds"),
    )
    (out_dir / "diagnostics.json").write_text(report.to_json())
    report.write_tables(out_dir / "tables")
    return report


def cmd_compare(dir_a: str | Path, dir_b: str | Path,
                overhead_factor_b: float = 1.0,
                time_normalized: bool = False) -> dict:
    """Relative efficiency of run A over run B per ESS flavour.

    REF > 1 means A needed fewer gradients (or less time) per effective
    sample.  ``overhead_factor_b`` scales B's metrics to account for
    tuning-stage overheads measured outside the sampling loop.
    """
    table = {}
    rep_a = _load_or_diagnose(dir_a)
    rep_b = _load_or_diagnose(dir_b)
    for flavour in ("min", "mean", "multi"):
        key = f"grad_per_{flavour}_ess"
        ma, mb = getattr(rep_a, key), getattr(rep_b, key)
        if ma is None or mb is None:
            table[f"ref_{flavour}_ess"] = None
            continue
        table[f"ref_{flavour}_ess"] = ref_metric(ma, mb * overhead_factor_b)
    if time_normalized and rep_a.wall_seconds and rep_b.wall_seconds:
        for flavour in ("min", "mean", "multi"):
            ea, eb = getattr(rep_a, f"ess_{flavour}"), getattr(rep_b, f"ess_{flavour}")
            if ea is None or eb is None:
                continue
            ma = rep_a.wall_seconds / ea
            mb = rep_b.wall_seconds / eb * overhead_factor_b
            table[f"ref_{flavour}_ess_per_time"] = ref_metric(ma, mb)
    return table


def _load_or_diagnose(out_dir: str | Path) -> DiagnosticsReport:
    out_dir = Path(out_dir)
    path = out_dir / "diagnostics.json"
    if path.exists():
        return DiagnosticsReport.from_json(path.read_text())
    return cmd_diagnose(out_dir)


def cmd_sensitivity(config: RunConfig, deltas: Sequence[float] = (-0.05, 0.0, 0.05),
                    workers: int = 1) -> list[dict]:
    """Re-run tune/sample/diagnose with the interval lower endpoint perturbed.

    Each delta scales the canonical lower endpoint; the emitted rows carry
    the grad/ESS triple per perturbation.
    """
    rows = []
    base_out = config.resolved_out_dir()
    for delta in deltas:
        perturbed = config.h_lower * (1.0 + delta)
        if not 0.0 < perturbed < 3.0:
            raise ConfigError(f"delta {delta} pushes h_lower outside (0, 3)")
        sub = RunConfig(**{**config.to_dict(),
                           "h_lower": config.h_lower * (1.0 + delta),
                           "out_dir": str(base_out / f"hlower{delta:+.3f}")})
        cmd_sample(sub, workers=workers)
        rep = cmd_diagnose(sub.resolved_out_dir())
        rows.append({
            "delta": delta,
            "h_lower": sub.h_lower,
            "grad_per_min_ess": rep.grad_per_min_ess,
            "grad_per_mean_ess": rep.grad_per_mean_ess,
            "grad_per_multi_ess": rep.grad_per_multi_ess,
            "n_conv": rep.n_conv,
        })
    _write_dict_rows(base_out / "sensitivity.csv", rows)
    return rows


def cmd_sweep_phi_l(config: RunConfig, phi_rules: Sequence[str],
                    l_rules: Sequence[str], workers: int = 1) -> list[dict]:
    """Full factorial sweep over refresh-noise and trajectory-length rules.

    Rules are descriptors like ``fixed:1``, ``uniform:0,0.5``,
    ``range:1,66`` or ``choice:2,5,7``; "tuned" keeps the tuned setting.
    """
    if not phi_rules or not l_rules:
        raise ConfigError("rule lists must be nonempty")
    base_out = config.resolved_out_dir()
    report = cmd_tune(config, out_dir=base_out)
    rows = []
    for pi, phi_desc in enumerate(phi_rules):
        for li, l_desc in enumerate(l_rules):
            overrides: dict = {"out_dir": str(base_out / f"cell_phi{pi}_l{li}")}
            overrides.update(_phi_override(phi_desc))
            overrides.update(_l_override(l_desc))
            sub = RunConfig(**{**config.to_dict(), **overrides})
            cmd_sample(sub, report=report, workers=workers)
            rep = cmd_diagnose(sub.resolved_out_dir())
            rows.append({
                "phi_rule": phi_desc,
                "l_rule": l_desc,
                "grad_per_min_ess": rep.grad_per_min_ess,
                "grad_per_mean_ess": rep.grad_per_mean_ess,
                "grad_per_multi_ess": rep.grad_per_multi_ess,
                "ess_min": rep.ess_min,
                "ess_mean": rep.ess_mean,
                "ess_multi": rep.ess_multi,
                "grad": rep.grad,
                "n_conv": rep.n_conv,
            })
    _write_dict_rows(base_out / "sweep_phi_l.csv", rows)
    return rows


def _phi_override(desc: str) -> dict:
    if desc == "tuned":
        return {}
    kind, value = parse_rule(desc)
    if kind == "fixed":
        if value == 1.0:
            return {"mode": "hmc"}
        return {"phi_fixed": float(value)}
    if kind == "uniform":
        lo, hi = value
        return {"phi_interval": (max(lo, 1e-12), hi)}
    raise ConfigError(f"phi rule '{desc}' must be fixed or uniform")


def _l_override(desc: str) -> dict:
    if desc == "tuned":
        return {}
    kind, value = parse_rule(desc)
    if kind == "fixed":
        return {"l_fixed": int(value)}
    if kind == "range":
        return {"l_range": (int(value[0]), int(value[1]))}
    if kind == "choice":
        return {"l_choices": tuple(int(v) for v in value)}
    raise ConfigError(f"L rule '{desc}' must be fixed, range or choice")


def parse_rule(desc: str):
    """Parse a rule descriptor: kind:args with args comma-separated numbers."""
    try:
        kind, _, args = desc.partition(":")
        values = [float(v) for v in args.split(",")] if args else []
    except ValueError:
        raise ConfigError(f"cannot parse rule descriptor '{desc}'")
    if kind == "fixed" and len(values) == 1:
        return "fixed", values[0]
    if kind == "uniform" and len(values) == 2:
        return "uniform", (values[0], values[1])
    if kind == "range" and len(values) == 2:
        return "range", (values[0], values[1])
    if kind == "choice" and values:
        return "choice", tuple(values)
    raise ConfigError(f"cannot parse rule descriptor '{desc}'")


def cmd_analyze_integrators(out_dir: str | Path,
                            schemes: Sequence[str] = ("vv", "vv2", "vv3",
                                                      "bcss2", "bcss3",
                                                      "me2", "me3"),
                            n_grid: int = 200) -> dict:
    """Emit integrator accuracy and stability tables as plot-ready data.

    Writes one-step expected energy error curves over each scheme's
    stability interval, the three-stage bound rho3 along representative
    kick coefficients, stability limits, and the adaptive-coefficient map.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    summary: dict = {"stability": {}, "schemes": list(schemes)}
    with open(out_dir / "energy_error_vs_h.csv", "w") as fh:
        fh.write("scheme,h,one_step_error,bound\n")
        for name in schemes:
            scheme = build_scheme(name)
            h_max = integrators.stability_interval(scheme)[1]
            summary["stability"][name] = h_max
            for h in np.linspace(h_max / n_grid, h_max * 0.999, n_grid):
                err = integrators.energy_error_one_step(scheme, h)
                try:
                    bound = integrators.energy_error_bound(scheme, h)
                except integrators.OutOfStabilityError:
                    bound = float("inf")
                fh.write(f"{name},{h!r},{err!r},{bound!r}\n")
    with open(out_dir / "rho3_vs_h.csv", "w") as fh:
        fh.write("label,b,h,rho3\n")
        labels = {"bcss3": integrators.B_BCSS3,
                  "me3": integrators.me3_coefficient(),
                  "vv3": 1.0 / 6.0}
        for label, b in labels.items():
            for h in np.linspace(0.02, 4.5, n_grid):
                try:
                    val = integrators.rho3(h, b)
                except integrators.OutOfStabilityError:
                    continue
                fh.write(f"{label},{b!r},{h!r},{val!r}\n")
    saia = default_map()
    saia.save(out_dir / "saia3_map.txt")
    summary["h_lower_root"] = integrators.find_h_lower()
    summary["vv_ratio_roots_2"] = integrators.vv_ratio_roots(2)
    summary["vv_ratio_roots_3"] = integrators.vv_ratio_roots(3)
    (out_dir / "analysis.json").write_text(json.dumps(summary, sort_keys=True, indent=1))
    return summary


def _write_dict_rows(path: Path, rows: list[dict]) -> None:
    if not rows:
        return
    path.parent.mkdir(parents=True, exist_ok=True)
    keys = list(rows[0].keys())
    with open(path, "w") as fh:
        fh.write(",".join(keys) + "\n")
        for row in rows:
            fh.write(",".join(repr(float(row[k]) if isinstance(row[k], float) else row[k])
                              for k in keys) + "\n")
