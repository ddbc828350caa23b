"""Experiment runner: JSON configs in, CSV traces and JSON summaries out.

Channel realisations are seeded as ``seed XOR channel_index`` and reduced in
channel-index order, so results do not depend on the worker count and a rerun
with the same config produces byte-identical trace files. Wall-clock numbers
go into the summary; they are written into the CSV only when timing is
explicitly requested, to keep the default output deterministic.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import csv
import io
import json
import math
import os
import sys
import time
from dataclasses import dataclass
from importlib import resources

import jsonschema
import numpy as np

from . import objective, reference, safe_solver, unfolded
from .errors import BeamsolveError, ConfigError
from .system import SystemConfig, generate_channels, init_state_algorithm1
from .trace import IterationTrace

CSV_HEADER = [
    "run_id", "algo", "channel", "iter", "phase", "f_nats", "wsr_bits", "power",
    "grad_norm_u", "grad_norm_v", "lambda_min_EW", "lambda_max_EW", "wall_nanos",
]

ENGINES = ("reference", "algorithm1", "algorithm2")


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: SystemConfig
    seed: int
    num_channels: int
    engine: str
    engine_params: dict
    csv_path: str
    summary_path: str

    def __post_init__(self):
        if self.engine not in ENGINES:
            raise ConfigError(f"engine must be one of {ENGINES}, got {self.engine!r}")
        if self.num_channels < 1:
            raise ConfigError("num_channels must be at least 1")


def _line_of_key(text: str, key: str) -> int | None:
    needle = f'"{key}"'
    for lineno, line in enumerate(text.splitlines(), start=1):
        if needle in line:
            return lineno
    return None


def load_experiment_config(path: str, seed_override: int | None = None) -> ExperimentConfig:
    """Parse and validate a JSON experiment config; errors carry a line number."""
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg}", line=exc.lineno) from exc

    def fail(key: str, message: str):
        raise ConfigError(message, line=_line_of_key(text, key))

    for key in ("scenario", "seed", "num_channels", "engine", "engine_params", "output"):
        if key not in data:
            raise ConfigError(f"missing required key {key!r}", line=1)
    try:
        scenario = SystemConfig.from_dict(data["scenario"])
    except (KeyError, TypeError, ValueError) as exc:
        fail("scenario", f"bad scenario: {exc}")
    engine = data["engine"]
    if engine not in ENGINES:
        fail("engine", f"engine must be one of {ENGINES}, got {engine!r}")
    output = data["output"]
    if not isinstance(output, dict) or "csv" not in output or "summary" not in output:
        fail("output", "output must hold 'csv' and 'summary' paths")
    params = data["engine_params"]
    if not isinstance(params, dict):
        fail("engine_params", "engine_params must be an object")
    try:
        _build_engine(engine, params, scenario, kappa=1.0)  # shape/type check only
    except (KeyError, TypeError, ValueError) as exc:
        fail("engine_params", f"bad engine_params: {exc}")
    seed = int(data["seed"]) if seed_override is None else int(seed_override)
    num_channels = int(data["num_channels"])
    if num_channels < 1:
        fail("num_channels", "num_channels must be at least 1")
    return ExperimentConfig(
        scenario=scenario,
        seed=seed,
        num_channels=num_channels,
        engine=engine,
        engine_params=params,
        csv_path=str(output["csv"]),
        summary_path=str(output["summary"]),
    )


def _build_engine(engine: str, params: dict, scenario: SystemConfig, kappa: float):
    """Turn the per-engine JSON block into a runner closure (channel -> RunResult)."""
    diagnostics = bool(params.get("diagnostics", False))
    if engine == "reference":
        run_cfg = reference.ReferenceRunConfig(
            max_iters=int(params.get("max_iters", params.get("L", 200))),
            wsr_tol=float(params.get("wsr_tol", 1e-4)),
        )

        def run(channels, observer):
            init = init_state_algorithm1(scenario, channels)
            return reference.run_reference(
                scenario, channels, init, run_cfg,
                diagnostics=diagnostics, observer=observer,
            )

        return run

    if engine == "algorithm1":
        L = int(params.get("L", 50))
        J_u = int(params.get("J_u", 2))
        J_w = int(params.get("J_w", 2))
        J_v = int(params.get("J_v", 2))
        policy = params.get("step_policy", "theorem")

        def run(channels, observer):
            bounds = safe_solver.compute_step_bounds(scenario, channels.kappa, J_u, J_v)
            if isinstance(policy, dict):
                bounds = safe_solver.StepBounds(
                    **{**bounds.__dict__,
                       "gamma_u": float(policy["gamma_u"]),
                       "gamma_v": float(policy["gamma_v"])}
                )
            elif policy != "theorem":
                raise ValueError(f"unknown step_policy {policy!r}")
            return safe_solver.run_algorithm1(
                scenario, channels, L, J_u, J_w, J_v, bounds,
                diagnostics=diagnostics, observer=observer,
            )

        if isinstance(policy, str) and policy != "theorem":
            raise ValueError(f"unknown step_policy {policy!r}")
        return run

    unfold_params = unfolded.UnfoldParams.from_dict(
        {key: params[key] for key in params if key != "diagnostics"}
    )

    def run(channels, observer):
        return unfolded.run_algorithm2(
            scenario, channels, unfold_params,
            diagnostics=diagnostics, observer=observer,
        )

    return run


class _CurveCollector:
    """Observer snapshotting the beamformers at the end of each outer iteration."""

    def __init__(self):
        self.by_iter: dict[int, list] = {}
        self.end_rows: dict[int, IterationTrace] = {}

    def __call__(self, row: IterationTrace, state):
        if row.iter < 1:
            return
        self.by_iter[row.iter] = [v.copy() for v in state.V]
        self.end_rows[row.iter] = row


def _run_one_channel(exp: ExperimentConfig, index: int, diagnostics: bool) -> dict:
    channels = generate_channels(exp.scenario, exp.seed ^ index)
    params = dict(exp.engine_params)
    if diagnostics:
        params["diagnostics"] = True
    runner = _build_engine(exp.engine, params, exp.scenario, channels.kappa)
    collector = _CurveCollector()
    t0 = time.perf_counter_ns()
    result = runner(channels, collector)
    elapsed = time.perf_counter_ns() - t0

    curve = []
    for it in sorted(collector.by_iter):
        wsr = objective.rate_and_wsr(exp.scenario, channels, collector.by_iter[it])[1]
        curve.append(wsr)
        row = collector.end_rows[it]
        if row.wsr is None:
            row.wsr = wsr
    iters = max(len(curve), 1)
    return {
        "index": index,
        "rows": result.rows,
        "wsr_curve": curve,
        "final_wsr": curve[-1] if curve else 0.0,
        "wall_per_iter": elapsed / iters,
    }


def _format_value(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_csv(path: str, per_channel: list[dict], timing: bool) -> int:
    rows_written = 0
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for entry in per_channel:
            for row in entry["rows"]:
                writer.writerow([
                    row.run_id,
                    row.algo,
                    entry["index"],
                    row.iter,
                    row.phase,
                    _format_value(row.f),
                    _format_value(row.wsr),
                    _format_value(row.power),
                    _format_value(row.grad_norm_u),
                    _format_value(row.grad_norm_v),
                    _format_value(row.lambda_min_ew),
                    _format_value(row.lambda_max_ew),
                    _format_value(row.wall_nanos if timing else None),
                ])
                rows_written += 1
    return rows_written


def _load_summary_schema() -> dict:
    with resources.files("beamsolve.schemas").joinpath("summary.schema.json").open("r") as fh:
        return json.load(fh)


def _aligned_curve_mean(curves: list[list[float]]) -> list[float]:
    length = max(len(c) for c in curves)
    mean = []
    for it in range(length):
        total = 0.0
        for curve in curves:
            total += curve[min(it, len(curve) - 1)] if curve else 0.0
        mean.append(total / len(curves))
    return mean


def execute_experiment(exp: ExperimentConfig, *, workers: int = 1, diagnostics: bool = False) -> list[dict]:
    """Run every channel realisation; results come back in channel-index order."""
    indices = list(range(exp.num_channels))
    if workers <= 1:
        return [_run_one_channel(exp, i, diagnostics) for i in indices]
    with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_one_channel, [exp] * len(indices), indices,
                             [diagnostics] * len(indices)))


def run_experiment(exp: ExperimentConfig, *, workers: int = 1, diagnostics: bool = False,
                   timing: bool = False) -> dict:
    """Execute, write the CSV trace and the schema-validated JSON summary."""
    per_channel = execute_experiment(exp, workers=workers, diagnostics=diagnostics)
    rows_written = _write_csv(exp.csv_path, per_channel, timing)

    finals = [entry["final_wsr"] for entry in per_channel]
    summary = {
        "schema_version": 1,
        "engine": exp.engine,
        "seed": exp.seed,
        "num_channels": exp.num_channels,
        "scenario": exp.scenario.to_dict(),
        "final_wsr": {
            "mean": float(np.mean(finals)),
            "std": float(np.std(finals)),
        },
        "wsr_curve_mean": _aligned_curve_mean([entry["wsr_curve"] for entry in per_channel]),
        "mean_wall_nanos_per_iter": float(np.mean([entry["wall_per_iter"] for entry in per_channel])),
        "rows_written": rows_written,
    }
    jsonschema.validate(summary, _load_summary_schema())
    with open(exp.summary_path, "w", encoding="utf-8", newline="") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return summary


def compare_engines(configs: list[ExperimentConfig], *, workers: int = 1) -> list[dict]:
    """Aligned per-iteration mean-WSR table for engines on identical channels.

    All configs must share scenario and seed. Engines that stop early carry
    their final value forward so every column has max-L rows. The ratio
    columns divide each engine's final mean WSR by the baseline's (the first
    ``reference`` config, or the first config if none), matching the
    fraction-of-converged-baseline way such runs are usually reported.
    """
    if not configs:
        raise ConfigError("compare needs at least one config")
    first = configs[0]
    for other in configs[1:]:
        if other.scenario != first.scenario or other.seed != first.seed:
            raise ConfigError("compare requires identical scenario and seed in every config")

    labels, curves, finals = [], [], []
    for i, exp in enumerate(configs):
        per_channel = execute_experiment(exp, workers=workers)
        label = f"{exp.engine}_{i}"
        labels.append(label)
        curves.append(_aligned_curve_mean([entry["wsr_curve"] for entry in per_channel]))
        finals.append(float(np.mean([entry["final_wsr"] for entry in per_channel])))

    baseline = next((i for i, exp in enumerate(configs) if exp.engine == "reference"), 0)
    baseline_final = finals[baseline]
    length = max(len(c) for c in curves)
    table = []
    for it in range(length):
        row = {"iter": it + 1}
        for label, curve, final in zip(labels, curves, finals):
            row[f"wsr_{label}"] = curve[min(it, len(curve) - 1)]
            row[f"ratio_{label}"] = final / baseline_final if baseline_final else math.nan
        table.append(row)
    return table


def _write_compare_csv(path: str, table: list[dict]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(table[0].keys()), lineterminator="\n")
        writer.writeheader()
        for row in table:
            writer.writerow({k: _format_value(v) for k, v in row.items()})


# ----------------------------------------------------------------------------
# self test


def _selftest(out=sys.stdout) -> int:
    """Quick property checks over the solver guarantees; returns a process exit code."""
    from . import oracle
    from .system import BeamformerState

    failures = 0

    def check(name: str, ok: bool, detail: str = ""):
        nonlocal failures
        tag = "PASS" if ok else "FAIL"
        suffix = f" ({detail})" if detail else ""
        print(f"[{tag}] {name}{suffix}", file=out)
        if not ok:
            failures += 1

    delta = safe_solver.solve_delta()
    check("threshold root residual <= 1e-12",
          abs(delta - delta * delta - math.log(2 - delta)) <= 1e-12, f"delta={delta:.6f}")
    check("threshold root in [1.6835, 1.6840]", 1.6835 <= delta <= 1.6840)

    config = SystemConfig.uniform(4, 2, 2, 2)
    rng = np.random.default_rng(7)
    bounds = None
    for trial in range(5):
        channels = generate_channels(config, trial)
        bounds = safe_solver.compute_step_bounds(config, channels.kappa, 2, 2)
        budget = (bounds.delta - 1.0) / 4.0
        lhs_u = bounds.L_c * bounds.nu_u**2 + bounds.L_d * bounds.nu_u
        lhs_v = bounds.L_a * bounds.nu_v**2 + bounds.L_b * bounds.nu_v
        if abs(lhs_u - budget) > 1e-10 * budget or abs(lhs_v - budget) > 1e-10 * budget:
            check("step-cap quadratic identities", False, f"trial {trial}")
            break
    else:
        check("step-cap quadratic identities", True)

    channels = generate_channels(config, 123)
    floor = config.sigma2 / (config.P * channels.kappa + config.sigma2)
    worst = np.inf
    for _ in range(50):
        state = _random_state(config, rng)
        for k in range(config.K):
            e = objective.mse_matrix_scaled(config, channels, state, k)
            worst = min(worst, float(oracle.hermitian_eigenvalues(e).eigenvalues[0]))
    check("error-matrix eigenvalue floor", worst >= floor - 1e-9, f"worst={worst:.3e}")

    ok = True
    for target in (0.5, 1.0, 1.5, 1.99):
        e, w = _state_with_top_eigenvalue(config.d, target, rng)
        w_next = safe_solver.schulz_update(w, e)
        vals = oracle.product_eigenvalues(e, w_next)
        ok = ok and vals[0] >= -1e-9 and vals[-1] <= 1.0 + 1e-9
    check("weight refresh maps spectrum into [0, 1]", ok)

    result = safe_solver.run_algorithm1(config, channels, 5, 2, 2, 2, bounds, diagnostics=True)
    fs = [row.f for row in result.rows]
    mono = all(fs[i + 1] <= fs[i] + 1e-9 * max(1.0, abs(fs[i])) for i in range(len(fs) - 1))
    check("capped-step run has non-increasing cost", mono)
    psd_ok = all(
        float(oracle.hermitian_eigenvalues(w).eigenvalues[0]) >= -1e-9
        for w in result.state.W
    )
    check("weights stay positive semidefinite", psd_ok)

    state = _random_state(config, rng)
    ok = True
    for k in range(config.K):
        ok = ok and _fd_gradient_matches(config, channels, state, k)
    check("gradients match finite differences", ok)

    return 1 if failures else 0


def _random_state(config, rng):
    from .system import BeamformerState, scale_to_power

    def cplx(shape):
        return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2)

    U = [cplx((config.N, config.d)) for _ in range(config.K)]
    V = scale_to_power([cplx((config.M, config.d)) for _ in range(config.K)], config.P)
    W = []
    for _ in range(config.K):
        a = cplx((config.d, config.d))
        W.append(a @ a.conj().T + 0.5 * np.eye(config.d))
    return BeamformerState(U=U, W=W, V=V)


def _state_with_top_eigenvalue(d, target, rng):
    a = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    e = a @ a.conj().T + 0.5 * np.eye(d)
    low = np.linalg.cholesky(e)
    spectrum = np.linspace(0.1 * target, target, d)
    inv_lh = np.linalg.inv(low.conj().T)
    w = inv_lh @ np.diag(spectrum) @ inv_lh.conj().T
    return e, 0.5 * (w + w.conj().T)


def _fd_gradient_matches(config, channels, state, k, h=1e-6, tol=1e-6) -> bool:
    grad = objective.grad_u(config, channels, state, k)
    rng = np.random.default_rng(k)
    direction = rng.standard_normal(grad.shape) + 1j * rng.standard_normal(grad.shape)
    inner = float(np.sum(grad.conj() * direction).real)

    def cost_with(offset):
        probe = state.copy()
        probe.U[k] = state.U[k] + offset
        return objective.weighted_mse_trace(config, channels, probe)

    fd = (cost_with(h * direction) - cost_with(-h * direction)) / (2 * h)
    return abs(fd - inner) <= tol * max(1.0, abs(inner))


# ----------------------------------------------------------------------------
# CLI


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="beamsolve",
        description="Weighted-sum-rate beamforming benchmark runner",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one experiment config")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--workers", type=int, default=1)
    p_run.add_argument("--diagnostics", action="store_true",
                       help="record cost and eigenvalue diagnostics in the trace")
    p_run.add_argument("--timing", action="store_true",
                       help="write wall-clock nanos into the CSV (breaks byte determinism)")

    p_cmp = sub.add_parser("compare", help="align engines on identical channels")
    p_cmp.add_argument("--configs", required=True, help="comma-separated config paths")
    p_cmp.add_argument("--out", required=True)
    p_cmp.add_argument("--workers", type=int, default=1)

    sub.add_parser("selftest", help="run the built-in property checks")

    args = parser.parse_args(argv)
    seed_override = os.environ.get("BEAMSOLVE_SEED")
    seed_override = int(seed_override) if seed_override is not None else None

    try:
        if args.command == "run":
            exp = load_experiment_config(args.config, seed_override)
            summary = run_experiment(exp, workers=args.workers,
                                     diagnostics=args.diagnostics, timing=args.timing)
            print(json.dumps(summary["final_wsr"], sort_keys=True))
            return 0
        if args.command == "compare":
            paths = [p for p in args.configs.split(",") if p]
            configs = [load_experiment_config(p, seed_override) for p in paths]
            table = compare_engines(configs, workers=args.workers)
            _write_compare_csv(args.out, table)
            print(f"wrote {len(table)} rows to {args.out}")
            return 0
        return _selftest()
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2
    except BeamsolveError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
