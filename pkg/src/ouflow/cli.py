"""Command-line experiment runner.

Configuration is a flat ``key = value`` document (``#`` starts a comment).
CLI flags override file values; unknown keys are rejected rather than
silently defaulted, and every violated constraint is reported, not just the
first. Per-trajectory seeds are derived from the master seed by a stated
hash (first 8 bytes of sha256("{seed}:{index}")) and recorded in the run
manifest so any single path can be replayed. A fixed (configuration, seed)
pair determines every output byte; wall-clock time lives only in the
manifest, never in the outputs.

Subcommands
-----------
simulate    integrate a seeded ensemble of coupled nonlinear/linear paths
            and persist the trajectories as JSONL
compare     per-mode weak-coupling table E|G(omega'_k) - G(z'_k)| (CSV
            columns k1, k2, min_k, functional, estimate, stderr, n_paths)
            plus a rescaled-mode autocovariance table (CSV columns k1, k2,
            lag, autocov_re, autocov_im)
girsanov    change-of-measure diagnostics: quadratic drift integrals, log
            density normalization, stratified relative-entropy estimate
estimates   deterministic constants table: band constants, envelope
            constant, dissipative cutoff, trap radii, energy exit bound
stationary  long-run averages from distinct starts with a linear-process
            reference run (unique-ergodicity symptom)

Exit codes: 0 success; 2 invalid configuration; 3 numerical abort (blow-up
guard tripped); 4 criterion failure under --check.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import time
from collections.abc import Callable, Iterable, Iterator, Mapping, Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .dynamics import (
    BlowUpError,
    CoupledPath,
    SimParams,
    simulate_coupled,
    stationary_field,
)
from .estimates import TrapParams, energy_ball_exit_bound
from .forcing import ForcingSpectrum, sigma_max, energy_input_rate, trajectory_seed
from .girsanov import (
    entropy_from_samples,
    entropy_majorant,
    entropy_sample,
    log_rn_derivative,
    novikov_integral,
)
from .lattice import ModeField, ksq_grid, norm_l2
from .stats import (
    FUNCTIONAL_LIBRARY,
    LongRunSeries,
    autocovariance,
    collect_long_run,
    default_observables,
    ou_stationary_reference,
    rescale,
    stationary_diagnostic,
    weak_convergence_test,
)

EXPERIMENTS = ("simulate", "compare", "girsanov", "estimates", "stationary")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_CHECK = 4


class ConfigError(ValueError):
    """Invalid configuration; carries the full list of violations."""

    def __init__(self, violations: Sequence[str]):
        self.violations = tuple(violations)
        super().__init__("\n".join(self.violations))


# --- key table -------------------------------------------------------------

# key -> (kind, default text, help). Kinds: int, float, bool, str,
# choice:a|b|c, mode ("k1,k2"), modes ("k1,k2 k1,k2 ...").
_KEY_SPEC: dict[str, tuple[str, str, str]] = {
    "experiment": (
        "choice:" + "|".join(EXPERIMENTS),
        "simulate",
        "which experiment to run (the subcommand overrides this)",
    ),
    "nu": ("float", "1.0", "dissipation coefficient (> 0)"),
    "alpha": ("float", "3.0", "dissipation exponent (>= 2)"),
    "dt": ("float", "1e-3", "integrator step (> 0; horizon_t/dt integral)"),
    "horizon_t": ("float", "1.0", "integration horizon per path/window (> 0)"),
    "truncation_n": ("int", "8", "square mode truncation half-width (>= 1)"),
    "forcing_amplitude": ("float", "1.0", "noise amplitude prefactor (> 0)"),
    "forcing_decay": ("float", "2.0", "noise power-law decay exponent (> 0)"),
    "master_seed": ("int", "0", "master seed; per-path seeds derive from it"),
    "ensemble_size": ("int", "8", "number of trajectories (>= 0)"),
    "save_stride": ("int", "1", "keep every n-th slice when saving (>= 1)"),
    "output_dir": ("str", "runs", "directory for outputs and the manifest"),
    "format": ("choice:json|csv", "json", "summary output format"),
    "start": (
        "choice:zero|stationary",
        "zero",
        "initial field: zero or a stationary-law draw per path",
    ),
    "dump_noise": ("bool", "false", "also persist per-step noise increments"),
    # trap / estimates
    "gamma": ("float", "3.25", "amplitude-tube decay exponent"),
    "energy": ("float", "1.0", "initial energy ball radius squared (> 0)"),
    "eta": ("float", "2.0", "energy ball inflation factor (> 1)"),
    "alpha_prime": ("float", "2.0", "dissipation exponent used in bounds (>= 2)"),
    "amp_radius": ("float", "1.0", "amplitude tube radius (> 0)"),
    "probe": ("int", "64", "probe radius for band-constant enumeration (>= 8)"),
    # girsanov
    "drift_difference": (
        "choice:sns_vs_ou|auxiliary_vs_ou",
        "sns_vs_ou",
        "which drift pair the density compares",
    ),
    "stop_threshold": ("float", "10.0", "confinement threshold for stopping (> 0)"),
    # compare
    "compare_modes": (
        "modes",
        "1,0 2,0 4,0",
        "modes for the weak-coupling table, min |k| strictly increasing",
    ),
    "functional": (
        "choice:sup_norm_clamp|terminal_clamp|running_max_clamp",
        "sup_norm_clamp",
        "bounded path functional for the table",
    ),
    "clamp_bound": ("float", "2.0", "clamp bound B of the functional (> 0)"),
    "scaling": ("choice:unit|raw", "unit", "mode rescaling convention"),
    "autocov_mode": ("mode", "1,0", "mode whose autocovariance is tabulated"),
    "autocov_lags": ("int", "20", "number of integer lags (>= 1, <= steps)"),
    # stationary
    "windows": ("int", "8", "number of chained horizons per long run (>= 1)"),
    "burn_in_t": ("float", "2.0", "time discarded before averaging (>= 0)"),
    "batch_count": ("int", "8", "batch-means batches (>= 2)"),
    "start_amplitude": (
        "float",
        "1.0",
        "amplitude of the smooth alternative start (> 0)",
    ),
}


def config_help() -> str:
    lines = ["configuration keys (key = value per line, # comments):"]
    for key, (kind, default, help_text) in _KEY_SPEC.items():
        lines.append(f"  {key:<18} {help_text} [default {default}; {kind}]")
    return "\n".join(lines)


def _parse_mode(text: str) -> tuple[int, int]:
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 2:
        raise ValueError(f"expected 'k1,k2', got {text!r}")
    return int(parts[0]), int(parts[1])


def _parse_value(kind: str, text: str):
    if kind == "int":
        return int(text)
    if kind == "float":
        return float(text)
    if kind == "str":
        return text
    if kind == "bool":
        low = text.strip().lower()
        if low in ("true", "1", "yes"):
            return True
        if low in ("false", "0", "no"):
            return False
        raise ValueError(f"expected true/false, got {text!r}")
    if kind.startswith("choice:"):
        choices = kind[len("choice:") :].split("|")
        if text not in choices:
            raise ValueError(f"must be one of {', '.join(choices)}; got {text!r}")
        return text
    if kind == "mode":
        return _parse_mode(text)
    if kind == "modes":
        entries = [e for e in text.replace(";", " ").split() if e]
        if not entries:
            raise ValueError("needs at least one mode")
        return tuple(_parse_mode(e) for e in entries)
    raise AssertionError(f"unknown kind {kind}")


def _render_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        if value and isinstance(value[0], tuple):
            return " ".join(f"{a},{b}" for a, b in value)
        return f"{value[0]},{value[1]}"
    return repr(value) if isinstance(value, float) else str(value)


@dataclass(frozen=True)
class RunConfig:
    """A fully validated experiment configuration."""

    experiment: str
    sim: SimParams
    trap: TrapParams | None
    ensemble_size: int
    save_stride: int
    output_dir: str
    format: str
    master_seed: int
    start: str
    dump_noise: bool
    gamma: float
    energy: float
    eta: float
    alpha_prime: float
    amp_radius: float
    probe: int
    drift_difference: str
    stop_threshold: float
    compare_modes: tuple[tuple[int, int], ...]
    functional: str
    clamp_bound: float
    scaling: str
    autocov_mode: tuple[int, int]
    autocov_lags: int
    windows: int
    burn_in_t: float
    batch_count: int
    start_amplitude: float
    canonical: str

    @property
    def config_sha256(self) -> str:
        return hashlib.sha256(self.canonical.encode()).hexdigest()


def parse_config(
    text: str, overrides: Mapping[str, str] | None = None
) -> RunConfig:
    """Parse and validate a flat key = value document.

    `overrides` (CLI flags) are applied on top of file values. All
    violations are collected and raised together in a ConfigError.
    """
    violations: list[str] = []
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            violations.append(f"line {lineno}: expected 'key = value', got {body!r}")
            continue
        key, _, value = body.partition("=")
        key, value = key.strip(), value.strip()
        if key not in _KEY_SPEC:
            violations.append(f"line {lineno}: unknown key {key!r}")
            continue
        if key in raw:
            violations.append(f"line {lineno}: duplicate key {key!r}")
            continue
        if not value:
            violations.append(f"line {lineno}: empty value for {key!r}")
            continue
        raw[key] = value
    for key, value in (overrides or {}).items():
        if key not in _KEY_SPEC:
            violations.append(f"override: unknown key {key!r}")
            continue
        raw[key] = value

    values: dict = {}
    for key, (kind, default, _) in _KEY_SPEC.items():
        text_value = raw.get(key, default)
        try:
            values[key] = _parse_value(kind, text_value)
        except ValueError as exc:
            violations.append(f"{key}: {exc}")

    def have(*keys: str) -> bool:
        return all(k in values for k in keys)

    if have("alpha") and not values["alpha"] >= 2:
        violations.append("alpha >= 2 required")
    if have("nu") and not values["nu"] > 0:
        violations.append("nu must be positive")
    if have("dt") and not values["dt"] > 0:
        violations.append("dt must be positive")
    if have("horizon_t") and not values["horizon_t"] > 0:
        violations.append("horizon_t must be positive")
    if have("dt", "horizon_t") and values["dt"] > 0 and values["horizon_t"] > 0:
        steps = round(values["horizon_t"] / values["dt"])
        if steps < 1 or abs(steps * values["dt"] - values["horizon_t"]) > 1e-9 * max(
            1.0, values["horizon_t"]
        ):
            violations.append("horizon_t must be an integer number of dt steps")
    if have("truncation_n") and values["truncation_n"] < 1:
        violations.append("truncation_n must be at least 1")
    if have("forcing_amplitude") and not values["forcing_amplitude"] > 0:
        violations.append("forcing_amplitude must be positive (all modes forced)")
    if have("forcing_decay") and not values["forcing_decay"] > 0:
        violations.append("forcing_decay must be positive")
    if have("master_seed") and values["master_seed"] < 0:
        violations.append("master_seed must be nonnegative")
    if have("ensemble_size") and values["ensemble_size"] < 0:
        violations.append("ensemble_size must be nonnegative")
    if have("save_stride") and values["save_stride"] < 1:
        violations.append("save_stride must be at least 1")
    if have("clamp_bound") and not values["clamp_bound"] > 0:
        violations.append("clamp_bound must be positive")
    if have("stop_threshold") and not values["stop_threshold"] > 0:
        violations.append("stop_threshold must be positive")
    if have("probe") and values["probe"] < 8:
        violations.append("probe must be at least 8")
    if have("windows") and values["windows"] < 1:
        violations.append("windows must be at least 1")
    if have("batch_count") and values["batch_count"] < 2:
        violations.append("batch_count must be at least 2")
    if have("burn_in_t") and values["burn_in_t"] < 0:
        violations.append("burn_in_t must be nonnegative")
    if have("start_amplitude") and not values["start_amplitude"] > 0:
        violations.append("start_amplitude must be positive")
    if have("autocov_lags") and values["autocov_lags"] < 1:
        violations.append("autocov_lags must be at least 1")

    experiment = values.get("experiment")

    if experiment == "compare":
        if have("truncation_n") and values["truncation_n"] >= 1:
            n = values["truncation_n"]
            if have("compare_modes"):
                for k in values["compare_modes"]:
                    if k == (0, 0) or max(abs(k[0]), abs(k[1])) > n:
                        violations.append(
                            f"compare_modes: {k} is not a nonzero mode of the truncation"
                        )
            if have("autocov_mode"):
                k = values["autocov_mode"]
                if k == (0, 0) or max(abs(k[0]), abs(k[1])) > n:
                    violations.append(
                        f"autocov_mode: {k} is not a nonzero mode of the truncation"
                    )
        if have("compare_modes"):
            mins = [math.hypot(*k) for k in values["compare_modes"]]
            if any(b <= a for a, b in zip(mins, mins[1:])):
                violations.append("compare_modes must have strictly increasing |k|")
        if (
            have("autocov_lags", "dt", "horizon_t")
            and values["dt"] > 0
            and values["horizon_t"] > 0
            and values["autocov_lags"] > round(values["horizon_t"] / values["dt"])
        ):
            violations.append("autocov_lags exceeds the number of stored steps")

    if experiment == "girsanov" and have("gamma", "forcing_decay", "alpha"):
        lo = values["forcing_decay"] + 1.0
        hi = values["forcing_decay"] + values["alpha"] / 2.0
        if not (lo < values["gamma"] < hi):
            violations.append(
                f"gamma = {values['gamma']} outside the admissible stopping window "
                f"(forcing_decay+1, forcing_decay+alpha/2) = ({lo}, {hi})"
            )
    if experiment == "estimates":
        if have("gamma") and not values["gamma"] > 1:
            violations.append("gamma must exceed 1")
        if have("eta") and not values["eta"] > 1:
            violations.append("eta must exceed 1")
        if have("energy") and not values["energy"] > 0:
            violations.append("energy must be positive")
        if have("amp_radius") and not values["amp_radius"] > 0:
            violations.append("amp_radius must be positive")
        if have("alpha_prime") and not values["alpha_prime"] >= 2:
            violations.append("alpha_prime >= 2 required")
        if (
            have("alpha", "alpha_prime")
            and values["alpha_prime"] > values["alpha"]
        ):
            violations.append("alpha_prime cannot exceed alpha")
    if (
        experiment == "stationary"
        and have("windows", "horizon_t", "dt", "burn_in_t", "batch_count")
        and values["dt"] > 0
        and values["horizon_t"] > 0
        and values["windows"] >= 1
        and values["batch_count"] >= 2
    ):
        steps = round(values["horizon_t"] / values["dt"])
        total = values["windows"] * steps + 1
        kept = total - int(math.floor(values["burn_in_t"] / values["dt"]))
        if kept < 2 * values["batch_count"]:
            violations.append(
                "burn_in_t leaves fewer than 2*batch_count samples for averaging"
            )

    if violations:
        raise ConfigError(violations)

    sim = SimParams(
        nu=values["nu"],
        alpha=values["alpha"],
        dt=values["dt"],
        horizon=values["horizon_t"],
        spectrum=ForcingSpectrum(
            amplitude=values["forcing_amplitude"],
            decay=values["forcing_decay"],
            n=values["truncation_n"],
        ),
    )
    trap = None
    if values["experiment"] == "estimates":
        trap = TrapParams.derive(
            gamma=values["gamma"],
            amp_radius=values["amp_radius"],
            energy=values["energy"],
            eta=values["eta"],
            alpha_prime=values["alpha_prime"],
            nu=values["nu"],
            probe=values["probe"],
        )
    canonical = "\n".join(
        f"{key} = {_render_value(values[key])}" for key in sorted(_KEY_SPEC)
    )
    return RunConfig(
        experiment=values["experiment"],
        sim=sim,
        trap=trap,
        ensemble_size=values["ensemble_size"],
        save_stride=values["save_stride"],
        output_dir=values["output_dir"],
        format=values["format"],
        master_seed=values["master_seed"],
        start=values["start"],
        dump_noise=values["dump_noise"],
        gamma=values["gamma"],
        energy=values["energy"],
        eta=values["eta"],
        alpha_prime=values["alpha_prime"],
        amp_radius=values["amp_radius"],
        probe=values["probe"],
        drift_difference=values["drift_difference"],
        stop_threshold=values["stop_threshold"],
        compare_modes=values["compare_modes"],
        functional=values["functional"],
        clamp_bound=values["clamp_bound"],
        scaling=values["scaling"],
        autocov_mode=values["autocov_mode"],
        autocov_lags=values["autocov_lags"],
        windows=values["windows"],
        burn_in_t=values["burn_in_t"],
        batch_count=values["batch_count"],
        start_amplitude=values["start_amplitude"],
        canonical=canonical,
    )


# --- manifest ----------------------------------------------------------------


@dataclass(frozen=True)
class RunManifest:
    """Reproducibility record: identical config hash + seed mean bit-identical
    outputs (wall clock lives only here)."""

    experiment: str
    config_sha256: str
    code_version: str
    master_seed: int
    trajectory_seeds: tuple[int, ...]
    wall_clock_seconds: float
    outputs: tuple[dict, ...]
    blowups: tuple[dict, ...]
    canonical_config: str

    def to_json(self) -> dict:
        return {
            "experiment": self.experiment,
            "config_sha256": self.config_sha256,
            "code_version": self.code_version,
            "master_seed": self.master_seed,
            "trajectory_seeds": list(self.trajectory_seeds),
            "wall_clock_seconds": self.wall_clock_seconds,
            "outputs": list(self.outputs),
            "blowups": list(self.blowups),
            "canonical_config": self.canonical_config,
        }


def _json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _csv_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow(row)
    return buf.getvalue()


class _OutputWriter:
    """Single-writer output collection with digests for the manifest."""

    def __init__(self, base: Path):
        self.base = base
        self.entries: list[dict] = []

    def write_text(self, name: str, text: str) -> None:
        path = self.base / name
        path.write_text(text)
        digest = hashlib.sha256(text.encode()).hexdigest()
        self.entries.append(
            {"name": name, "sha256": digest, "bytes": len(text.encode())}
        )


# --- ensemble plumbing -------------------------------------------------------


def _start_field(kind: str, params: SimParams, seed: int) -> ModeField:
    if kind == "zero":
        return ModeField(params.n)
    rng = np.random.default_rng([seed, 1])
    return stationary_field(params, rng)


def smooth_field(n: int, amplitude: float) -> ModeField:
    """Deterministic smooth start: amplitude / |k|^2 on every mode."""
    q = ksq_grid(n).astype(float)
    grid = np.zeros(q.shape, dtype=complex)
    nz = q > 0
    grid[nz] = amplitude / q[nz]
    return ModeField(n, grid)


def _iter_map(fn: Callable, tasks: Sequence, workers: int) -> Iterator:
    """Order-preserving map, optionally across a process pool. Task order
    fixes output order, so worker count never changes the outputs."""
    if workers <= 1 or len(tasks) <= 1:
        for task in tasks:
            yield fn(task)
        return
    with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as pool:
        yield from pool.map(fn, tasks)


def _simulate_worker(task):
    index, seed, params, start_kind, keep_noise = task
    start = _start_field(start_kind, params, seed)
    try:
        cp = simulate_coupled(start, params, seed=seed, keep_noise=keep_noise)
        return index, cp, None
    except BlowUpError as exc:
        return index, None, exc.t


def _girsanov_worker(task):
    index, seed, params, start_kind, drift_difference, stop_threshold, gamma = task
    start = _start_field(start_kind, params, seed)
    try:
        cp = simulate_coupled(
            start, params, seed=seed, keep_noise=True, keep_nonlin=True
        )
    except BlowUpError as exc:
        return index, None, exc.t
    nov = novikov_integral(
        cp.omega, drift_difference, params, nonlin_cache=cp.nonlin
    )
    rec = log_rn_derivative(
        cp.omega, drift_difference, params, nonlin_cache=cp.nonlin
    )
    sample = entropy_sample(cp, drift_difference, stop_threshold, gamma)
    return index, (nov, rec.log_rn, sample), None


def _longrun_worker(task):
    start, params, windows, run_seed, names, process = task
    extractors = {
        name: fn for name, fn in default_observables().items() if name in names
    }
    return collect_long_run(
        start, params, windows, run_seed, extractors, process=process
    )


# --- experiment runners --------------------------------------------------------


def _run_simulate(
    cfg: RunConfig, writer: _OutputWriter, seeds: Sequence[int], workers: int
) -> tuple[list[dict], dict]:
    blowups: list[dict] = []
    rows: list[dict] = []
    tasks = [
        (i, seeds[i], cfg.sim, cfg.start, cfg.dump_noise)
        for i in range(cfg.ensemble_size)
    ]
    for index, cp, blow_time in _iter_map(_simulate_worker, tasks, workers):
        if cp is None:
            blowups.append({"index": index, "time": blow_time})
            rows.append(
                {
                    "index": index,
                    "seed": seeds[index],
                    "blow_up_time": blow_time,
                    "terminal_time": None,
                    "terminal_enstrophy": None,
                }
            )
            continue
        stem = f"traj_{index:04d}"
        for label, record in (("omega", cp.omega), ("z", cp.z)):
            buf = io.StringIO()
            for j in range(0, len(record.times), cfg.save_stride):
                row = {
                    "t": float(record.times[j]),
                    "field": record.states[j].to_payload(),
                }
                buf.write(json.dumps(row) + "\n")
            writer.write_text(f"{stem}_{label}.jsonl", buf.getvalue())
        if cfg.dump_noise and cp.omega.noise is not None:
            buf = io.StringIO()
            for j, inc in enumerate(cp.omega.noise):
                row = {
                    "t": float(cp.omega.times[j]),
                    "dt": inc.dt,
                    "field": inc.field.to_payload(),
                }
                buf.write(json.dumps(row) + "\n")
            writer.write_text(f"{stem}_noise.jsonl", buf.getvalue())
        rows.append(
            {
                "index": index,
                "seed": seeds[index],
                "blow_up_time": None,
                "terminal_time": float(cp.omega.times[-1]),
                "terminal_enstrophy": norm_l2(cp.omega.states[-1]) ** 2,
            }
        )
    if rows:
        if cfg.format == "json":
            writer.write_text("summary.json", _json_text({"trajectories": rows}))
        else:
            header = [
                "index",
                "seed",
                "blow_up_time",
                "terminal_time",
                "terminal_enstrophy",
            ]
            writer.write_text(
                "summary.csv",
                _csv_text(header, ([r[h] for h in header] for r in rows)),
            )
    return blowups, {"check_ok": not blowups, "rows": rows}


def _run_compare(
    cfg: RunConfig, writer: _OutputWriter, seeds: Sequence[int], workers: int
) -> tuple[list[dict], dict]:
    blowups: list[dict] = []
    if cfg.ensemble_size == 0:
        return blowups, {"check_ok": True, "table": None}
    functional = FUNCTIONAL_LIBRARY[cfg.functional](cfg.clamp_bound)
    tasks = [
        (i, seeds[i], cfg.sim, cfg.start, False) for i in range(cfg.ensemble_size)
    ]
    autocov_holder: list[np.ndarray] = []

    def survivors() -> Iterator[CoupledPath]:
        for index, cp, blow_time in _iter_map(_simulate_worker, tasks, workers):
            if cp is None:
                blowups.append({"index": index, "time": blow_time})
                continue
            if not autocov_holder:
                rp = rescale(cp.omega, cfg.autocov_mode, cfg.sim, cfg.scaling)
                autocov_holder.append(
                    autocovariance(rp, range(cfg.autocov_lags))
                )
            yield cp

    try:
        table = weak_convergence_test(
            survivors(), cfg.compare_modes, functional, scaling=cfg.scaling
        )
    except ValueError:
        # every path blew up; surface it through the manifest
        return blowups, {"check_ok": False, "table": None}

    trend_rows = [
        [k[0], k[1], row.min_k, cfg.functional, row.estimate, row.stderr, row.n_paths]
        for row in table.rows
        for k in row.modes
    ]
    writer.write_text(
        "compare_trend.csv",
        _csv_text(
            ["k1", "k2", "min_k", "functional", "estimate", "stderr", "n_paths"],
            trend_rows,
        ),
    )
    acov = autocov_holder[0]
    writer.write_text(
        "compare_autocov.csv",
        _csv_text(
            ["k1", "k2", "lag", "autocov_re", "autocov_im"],
            (
                [cfg.autocov_mode[0], cfg.autocov_mode[1], lag, v.real, v.imag]
                for lag, v in enumerate(acov)
            ),
        ),
    )
    verdict = table.trend()
    if cfg.format == "json":
        writer.write_text(
            "compare_summary.json",
            _json_text(
                {
                    "functional": table.functional,
                    "scaling": table.scaling,
                    "rows": [
                        {
                            "modes": [list(k) for k in row.modes],
                            "min_k": row.min_k,
                            "estimate": row.estimate,
                            "stderr": row.stderr,
                            "n_paths": row.n_paths,
                        }
                        for row in table.rows
                    ],
                    "no_significant_increase": verdict.no_significant_increase,
                    "significant_overall_decrease": verdict.significant_overall_decrease,
                    "decreasing": verdict.decreasing,
                }
            ),
        )
    return blowups, {"check_ok": verdict.decreasing, "table": table}


def _run_girsanov(
    cfg: RunConfig, writer: _OutputWriter, seeds: Sequence[int], workers: int
) -> tuple[list[dict], dict]:
    blowups: list[dict] = []
    if cfg.ensemble_size == 0:
        return blowups, {"check_ok": True, "payload": None}
    tasks = [
        (
            i,
            seeds[i],
            cfg.sim,
            cfg.start,
            cfg.drift_difference,
            cfg.stop_threshold,
            cfg.gamma,
        )
        for i in range(cfg.ensemble_size)
    ]
    novikovs: list[float] = []
    log_rns: list[float] = []
    samples: list[tuple[float, int]] = []
    for index, data, blow_time in _iter_map(_girsanov_worker, tasks, workers):
        if data is None:
            blowups.append({"index": index, "time": blow_time})
            continue
        nov, log_rn, sample = data
        novikovs.append(nov)
        log_rns.append(log_rn)
        samples.append(sample)
    if not samples:
        return blowups, {"check_ok": False, "payload": None}
    majorant = entropy_majorant(cfg.sim, cfg.drift_difference, cfg.gamma)
    estimate = entropy_from_samples(samples, majorant)
    nov_arr = np.asarray(novikovs)
    weights = np.exp(np.asarray(log_rns))
    count = len(nov_arr)
    nov_se = (
        float(np.std(nov_arr, ddof=1) / math.sqrt(count)) if count > 1 else math.nan
    )
    exp_se = (
        float(np.std(weights, ddof=1) / math.sqrt(count)) if count > 1 else math.nan
    )
    exp_mean = float(np.mean(weights))
    normal_ok = bool(
        count > 1 and abs(exp_mean - 1.0) <= 3.0 * exp_se and np.isfinite(exp_se)
    )
    exponent_p = 2.0 * cfg.gamma - 2.0 * cfg.sim.spectrum.decay - 2.0
    if cfg.drift_difference == "auxiliary_vs_ou":
        exponent_p += cfg.sim.alpha
    payload = {
        "drift_difference": cfg.drift_difference,
        "n_paths": count,
        "novikov_mean": float(np.mean(nov_arr)),
        "novikov_se": nov_se,
        "log_rn_normalization": {
            "exp_mean": exp_mean,
            "exp_se": exp_se,
            "within_3se_of_one": normal_ok,
        },
        "entropy_estimate": {
            "mean": estimate.mean,
            "standard_error": estimate.standard_error,
            "count": estimate.count,
            "majorant": estimate.majorant,
            "exponent_p": exponent_p,
            "classification": "converging" if exponent_p > 2.0 else "diverging",
        },
        "strata": [
            {"level": s.level, "count": s.count, "mean": s.mean}
            for s in estimate.strata
        ],
    }
    writer.write_text("girsanov.json", _json_text(payload))
    if cfg.format == "csv":
        writer.write_text(
            "girsanov_strata.csv",
            _csv_text(
                ["level", "count", "mean"],
                ([s.level, s.count, s.mean] for s in estimate.strata),
            ),
        )
    return blowups, {"check_ok": normal_ok, "payload": payload}


def _run_estimates(cfg: RunConfig, writer: _OutputWriter) -> tuple[list[dict], dict]:
    tp = cfg.trap
    assert tp is not None
    try:
        exit_bound = {
            "defined": True,
            "value": energy_ball_exit_bound(
                cfg.energy, cfg.eta, cfg.sim.horizon, cfg.sim
            ),
        }
    except ValueError as exc:
        exit_bound = {"defined": False, "reason": str(exc)}
    payload = {
        "inputs": {
            "gamma": tp.gamma,
            "energy": tp.energy,
            "eta": tp.eta,
            "alpha": cfg.sim.alpha,
            "alpha_prime": tp.alpha_prime,
            "nu": tp.nu,
            "forcing_decay": cfg.sim.spectrum.decay,
            "forcing_amplitude": cfg.sim.spectrum.amplitude,
            "probe": tp.probe,
        },
        "inner_band_constant": tp.inner_const,
        "tail_band_constant": tp.tail_const,
        "crossover_band_constant": tp.crossover_const,
        "envelope_constant": tp.envelope,
        "cutoff_wavenumber": tp.cutoff,
        "amp_radius": tp.amp_radius,
        "core_radius": tp.core_radius,
        "combined_radius": tp.combined_radius,
        "sigma_max": sigma_max(cfg.sim.spectrum),
        "energy_input_rate": energy_input_rate(cfg.sim.spectrum),
        "energy_ball_exit_bound": exit_bound,
    }
    if cfg.format == "json":
        writer.write_text("constants.json", _json_text(payload))
    else:
        rows = []
        for key, value in payload.items():
            if isinstance(value, dict):
                for sub, subval in value.items():
                    rows.append([f"{key}.{sub}", subval])
            else:
                rows.append([key, value])
        writer.write_text("constants.csv", _csv_text(["constant", "value"], rows))
    finite = all(
        np.isfinite(v)
        for v in (
            tp.inner_const,
            tp.tail_const,
            tp.crossover_const,
            tp.envelope,
            tp.core_radius,
            tp.combined_radius,
        )
    )
    return [], {"check_ok": finite and tp.cutoff >= 1, "payload": payload}


def _run_stationary(
    cfg: RunConfig, writer: _OutputWriter, seeds: Sequence[int], workers: int
) -> tuple[list[dict], dict]:
    names = sorted(default_observables())
    starts = (
        ("zero", ModeField(cfg.sim.n), "sns"),
        ("smooth", smooth_field(cfg.sim.n, cfg.start_amplitude), "sns"),
        ("reference", ModeField(cfg.sim.n), "ou"),
    )
    tasks = [
        (field, cfg.sim, cfg.windows, seeds[i], names, process)
        for i, (_, field, process) in enumerate(starts)
    ]
    runs: list[LongRunSeries] = []
    try:
        for run in _iter_map(_longrun_worker, tasks, workers):
            runs.append(run)
    except BlowUpError as exc:
        return (
            [{"index": len(runs), "time": exc.t}],
            {"check_ok": False, "payload": None},
        )
    report = stationary_diagnostic(
        runs[:2],
        runs[2],
        cfg.sim,
        burn_in=cfg.burn_in_t,
        batch_count=cfg.batch_count,
        reference=ou_stationary_reference(cfg.sim),
    )
    payload = {
        "burn_in_t": report.burn_in,
        "batch_count": report.batch_count,
        "runs": [label for label, _, _ in starts],
        "agree_all": report.agree_all,
        "overlap_all": report.overlap_all,
        "comparisons": [
            {
                "name": c.name,
                "means": list(c.means),
                "stderrs": list(c.stderrs),
                "agree": c.agree,
                "ou_mean": c.ou_mean,
                "ou_stderr": c.ou_stderr,
                "reference": c.reference,
                "overlap_ou": c.overlap_ou,
            }
            for c in report.comparisons
        ],
    }
    writer.write_text("stationary.json", _json_text(payload))
    if cfg.format == "csv":
        for (label, _, _), run in zip(starts, runs):
            writer.write_text(
                f"series_{label}.csv",
                _csv_text(
                    ["t"] + names,
                    (
                        [run.times[i]] + [run.values[name][i] for name in names]
                        for i in range(len(run.times))
                    ),
                ),
            )
    ok = report.agree_all and (report.overlap_all is not False)
    return [], {"check_ok": bool(ok), "payload": payload}


def run_experiment(
    cfg: RunConfig, *, check: bool = False, workers: int = 1
) -> tuple[RunManifest, int]:
    """Execute the configured experiment, write outputs and manifest, and
    return (manifest, exit code)."""
    started = time.perf_counter()
    base = Path(cfg.output_dir)
    base.mkdir(parents=True, exist_ok=True)
    writer = _OutputWriter(base)
    if cfg.experiment == "estimates":
        seeds: tuple[int, ...] = ()
    elif cfg.experiment == "stationary":
        seeds = tuple(trajectory_seed(cfg.master_seed, i) for i in range(3))
    else:
        seeds = tuple(
            trajectory_seed(cfg.master_seed, i) for i in range(cfg.ensemble_size)
        )
    if cfg.experiment == "simulate":
        blowups, extras = _run_simulate(cfg, writer, seeds, workers)
    elif cfg.experiment == "compare":
        blowups, extras = _run_compare(cfg, writer, seeds, workers)
    elif cfg.experiment == "girsanov":
        blowups, extras = _run_girsanov(cfg, writer, seeds, workers)
    elif cfg.experiment == "estimates":
        blowups, extras = _run_estimates(cfg, writer)
    else:
        blowups, extras = _run_stationary(cfg, writer, seeds, workers)
    manifest = RunManifest(
        experiment=cfg.experiment,
        config_sha256=cfg.config_sha256,
        code_version=__version__,
        master_seed=cfg.master_seed,
        trajectory_seeds=seeds,
        wall_clock_seconds=time.perf_counter() - started,
        outputs=tuple(writer.entries),
        blowups=tuple(blowups),
        canonical_config=cfg.canonical,
    )
    (base / "manifest.json").write_text(_json_text(manifest.to_json()))
    if blowups:
        return manifest, EXIT_NUMERICAL
    if check and not extras.get("check_ok", False):
        return manifest, EXIT_CHECK
    return manifest, EXIT_OK


# --- reporting ----------------------------------------------------------------


def _fmt(value, width: int = 12) -> str:
    if value is None:
        return "-".rjust(width)
    if isinstance(value, float):
        return f"{value:.6g}".rjust(width)
    return str(value).rjust(width)


def render_report(manifest: Mapping, base_dir: str | Path) -> str:
    """Human-readable headline summary of a finished run. Raises
    FileNotFoundError naming any manifest-listed file that is missing."""
    base = Path(base_dir)
    missing = [
        entry["name"]
        for entry in manifest["outputs"]
        if not (base / entry["name"]).exists()
    ]
    if missing:
        raise FileNotFoundError(f"missing output files: {', '.join(missing)}")
    lines = [
        f"experiment: {manifest['experiment']}",
        f"config sha256: {manifest['config_sha256'][:16]}…",
        f"master seed: {manifest['master_seed']}",
    ]
    if manifest["blowups"]:
        times = ", ".join(
            f"#{b['index']} at t={b['time']:.4g}" for b in manifest["blowups"]
        )
        lines.append(f"BLOW-UPS: {times}")
    experiment = manifest["experiment"]
    names = {entry["name"] for entry in manifest["outputs"]}
    if experiment == "simulate" and ("summary.json" in names or "summary.csv" in names):
        if "summary.json" in names:
            rows = json.loads((base / "summary.json").read_text())["trajectories"]
        else:
            with open(base / "summary.csv") as fh:
                rows = list(csv.DictReader(fh))
        lines.append(f"{'index':>6} {'terminal enstrophy':>20}")
        for row in rows:
            enst = row["terminal_enstrophy"]
            enst = float(enst) if enst not in (None, "") else None
            lines.append(f"{row['index']:>6} {_fmt(enst, 20)}")
    elif experiment == "compare" and "compare_trend.csv" in names:
        with open(base / "compare_trend.csv") as fh:
            rows = list(csv.DictReader(fh))
        lines.append(
            f"{'k':>10} {'min_k':>8} {'estimate':>12} {'stderr':>12} {'n':>6}"
        )
        for row in rows:
            lines.append(
                f"({row['k1']},{row['k2']})".rjust(10)
                + f" {float(row['min_k']):>8.3g}"
                + _fmt(float(row["estimate"]))
                + _fmt(float(row["stderr"]))
                + f" {row['n_paths']:>6}"
            )
        if "compare_summary.json" in names:
            summary = json.loads((base / "compare_summary.json").read_text())
            verdict = "PASS" if summary["decreasing"] else "FAIL"
            lines.append(f"isotonic decreasing-trend criterion: {verdict}")
    elif experiment == "girsanov" and "girsanov.json" in names:
        payload = json.loads((base / "girsanov.json").read_text())
        ee = payload["entropy_estimate"]
        norm = payload["log_rn_normalization"]
        lines.append(
            f"novikov mean {payload['novikov_mean']:.6g} "
            f"± {payload['novikov_se']:.3g} over {payload['n_paths']} paths "
            f"({ee['classification']}, exponent p = {ee['exponent_p']:.3g})"
        )
        lines.append(
            f"E[exp(log_rn)] = {norm['exp_mean']:.6g} ± {norm['exp_se']:.3g} "
            f"({'ok' if norm['within_3se_of_one'] else 'off'} at 3 SE)"
        )
        lines.append(
            f"relative entropy {ee['mean']:.6g} ± {ee['standard_error']:.3g}, "
            f"majorant {ee['majorant']:.6g}"
        )
        for s in payload["strata"]:
            lines.append(
                f"  level {s['level']:>3}: {s['count']:>5} paths, mean {s['mean']:.6g}"
            )
    elif experiment == "estimates" and (
        "constants.json" in names or "constants.csv" in names
    ):
        if "constants.json" in names:
            payload = json.loads((base / "constants.json").read_text())
            for key in (
                "inner_band_constant",
                "tail_band_constant",
                "crossover_band_constant",
                "envelope_constant",
                "cutoff_wavenumber",
                "core_radius",
                "combined_radius",
                "sigma_max",
                "energy_input_rate",
            ):
                lines.append(f"{key:<26} {payload[key]:.10g}")
            eb = payload["energy_ball_exit_bound"]
            if eb["defined"]:
                lines.append(f"{'energy_ball_exit_bound':<26} {eb['value']:.10g}")
            else:
                lines.append(f"energy_ball_exit_bound    undefined: {eb['reason']}")
        else:
            lines.append((base / "constants.csv").read_text().rstrip())
    elif experiment == "stationary" and "stationary.json" in names:
        payload = json.loads((base / "stationary.json").read_text())
        lines.append(
            f"burn-in {payload['burn_in_t']:g}, {payload['batch_count']} batches"
        )
        lines.append(
            f"{'observable':<16} {'run means':<30} {'agree':>6} {'reference':>12}"
        )
        for comp in payload["comparisons"]:
            means = ", ".join(f"{m:.5g}" for m in comp["means"])
            lines.append(
                f"{comp['name']:<16} {means:<30} "
                f"{'yes' if comp['agree'] else 'NO':>6} {_fmt(comp['reference'])}"
            )
        lines.append(
            f"all runs agree: {'yes' if payload['agree_all'] else 'NO'}; "
            f"reference overlap: {payload['overlap_all']}"
        )
    lines.append(
        f"outputs: {len(manifest['outputs'])} file(s) in {base}; "
        f"wall clock {manifest['wall_clock_seconds']:.2f}s"
    )
    return "\n".join(lines)


# --- entry point ---------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ouflow",
        description=__doc__.split("\n\nSubcommands")[0],
        epilog=config_help(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(
            name,
            help=f"run the {name} experiment",
            epilog=config_help(),
            formatter_class=argparse.RawDescriptionHelpFormatter,
        )
        p.add_argument("--config", type=str, default=None, help="key = value file")
        p.add_argument("--seed", type=int, default=None, help="master seed")
        p.add_argument("--ensemble", type=int, default=None, help="ensemble size")
        p.add_argument("--out", type=str, default=None, help="output directory")
        p.add_argument("--format", choices=("json", "csv"), default=None)
        p.add_argument(
            "--save-every", type=int, default=None, help="slice save stride"
        )
        p.add_argument(
            "--dump-noise", action="store_true", help="persist noise increments"
        )
        p.add_argument(
            "--check",
            action="store_true",
            help="exit 4 unless the experiment's headline criterion holds",
        )
        p.add_argument(
            "--workers", type=int, default=1, help="worker processes (default 1)"
        )
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    text = ""
    if args.config is not None:
        path = Path(args.config)
        if not path.exists():
            print(f"config file not found: {path}", flush=True)
            return EXIT_CONFIG
        text = path.read_text()
    overrides: dict[str, str] = {"experiment": args.experiment}
    if args.seed is not None:
        overrides["master_seed"] = str(args.seed)
    if args.ensemble is not None:
        overrides["ensemble_size"] = str(args.ensemble)
    if args.out is not None:
        overrides["output_dir"] = args.out
    if args.format is not None:
        overrides["format"] = args.format
    if args.save_every is not None:
        overrides["save_stride"] = str(args.save_every)
    if args.dump_noise:
        overrides["dump_noise"] = "true"
    try:
        cfg = parse_config(text, overrides)
    except ConfigError as exc:
        print("invalid configuration:", flush=True)
        for violation in exc.violations:
            print(f"  - {violation}", flush=True)
        return EXIT_CONFIG
    manifest, code = run_experiment(
        cfg, check=args.check, workers=max(1, args.workers)
    )
    print(render_report(manifest.to_json(), cfg.output_dir), flush=True)
    return code


if __name__ == "__main__":
    raise SystemExit(main())
