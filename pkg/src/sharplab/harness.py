"""Declarative experiment runner and artifact writer.

A spec is one JSON document describing a backend (quadratic or mlp), its
hyperparameters, a metrics request, an optional schedule, and optional sweep
axes.  ``run_experiment`` expands the sweep, runs each cell, and persists a
self-contained run directory:

    <output_dir>/<name>/axis1=v1/.../seed=s/
        spec.json      byte-identical snapshot of the input spec
        metrics.csv    one row per metric step (fixed column order)
        events.json    resolved config, schedule, catapults, divergence flag
        checkpoint.bin final parameters (16-byte magic + dims header + f64)
        summary.json   plateau statistics, recomputable from the CSV

Floats serialize with 17 significant digits so reruns are byte-comparable.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import metrics as _metrics
from . import mlp as _mlp
from . import quadratic as _quad
from .numerics import LinearOperator, powerlaw_fit, top_eigenvalue

PARALLEL_ENV = "SHARPLAB_PARALLEL"

RUNLOG_COLUMNS = ["step", "loss"] + _metrics.REPORT_COLUMNS[1:]

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_DIVERGED = 3
EXIT_INTERNAL = 4


class SpecValidationError(ValueError):
    pass


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def _check_fields(obj: dict, allowed: set[str], where: str) -> None:
    unknown = sorted(set(obj) - allowed)
    if unknown:
        raise SpecValidationError(f"unknown field(s) {unknown} in {where}")


_TOP_FIELDS = {
    "name", "backend", "quadratic", "mlp", "eta", "b", "sample_mode", "steps",
    "seed", "metric_every", "num_batches", "metrics", "schedule", "sweep",
    "output_dir", "init_scale", "scan",
}
_QUAD_FIELDS = {"ensemble", "theta0", "record_every", "blowup"}
_ENSEMBLE_FIELDS = {"kind", "n", "d", "rank", "scale", "seed", "anchors", "alpha", "gamma"}
_MLP_FIELDS = {"dataset", "layer_dims", "activation", "noise_mode"}
_DATASET_FIELDS = {"kind", "n", "d_in", "classes", "spread", "seed", "label_noise"}
_SWEEP_FIELDS = {"eta", "b", "seed", "init_scale"}
_SCHEDULE_FIELDS = {"at_step", "action", "value"}
_SCAN_FIELDS = {"kind", "b_list", "num_batches"}


@dataclass
class RunArtifact:
    directory: Path
    diverged: bool


def load_spec(spec_path: str | Path) -> tuple[dict, bytes]:
    raw = Path(spec_path).read_bytes()
    try:
        spec = json.loads(raw)
    except json.JSONDecodeError as err:
        raise SpecValidationError(f"spec is not valid JSON: {err}") from err
    validate_spec(spec)
    return spec, raw


def validate_spec(spec: dict) -> None:
    if not isinstance(spec, dict):
        raise SpecValidationError("spec must be a JSON object")
    _check_fields(spec, _TOP_FIELDS, "spec")
    for req in ("name", "backend"):
        if req not in spec:
            raise SpecValidationError(f"missing required field '{req}'")
    backend = spec["backend"]
    if backend not in ("quadratic", "mlp"):
        raise SpecValidationError(f"backend must be 'quadratic' or 'mlp', got {backend!r}")

    if backend == "quadratic":
        q = spec.get("quadratic", {})
        _check_fields(q, _QUAD_FIELDS, "quadratic")
        ens = q.get("ensemble")
        if not isinstance(ens, dict):
            raise SpecValidationError("quadratic.ensemble is required")
        _check_fields(ens, _ENSEMBLE_FIELDS, "quadratic.ensemble")
        if ens.get("kind") not in ("gaussian-1d", "two-point", "random-psd", "counterexample"):
            raise SpecValidationError(f"unknown ensemble kind {ens.get('kind')!r}")
    else:
        m = spec.get("mlp", {})
        _check_fields(m, _MLP_FIELDS, "mlp")
        ds = m.get("dataset")
        if not isinstance(ds, dict):
            raise SpecValidationError("mlp.dataset is required")
        _check_fields(ds, _DATASET_FIELDS, "mlp.dataset")
        if m.get("noise_mode", "sgd") not in _mlp.NOISE_MODES:
            raise SpecValidationError(f"unknown noise_mode {m.get('noise_mode')!r}")

    sweep = spec.get("sweep", {})
    _check_fields(sweep, _SWEEP_FIELDS, "sweep")
    for axis, values in sweep.items():
        if not isinstance(values, list) or not values:
            raise SpecValidationError(f"sweep.{axis} must be a non-empty list")

    for i, ev in enumerate(spec.get("schedule", [])):
        _check_fields(ev, _SCHEDULE_FIELDS, f"schedule[{i}]")
        if ev.get("action") not in ("set_eta", "set_batch"):
            raise SpecValidationError(f"schedule[{i}].action must be set_eta or set_batch")

    if "scan" in spec:
        _check_fields(spec["scan"], _SCAN_FIELDS, "scan")
        if spec["scan"].get("kind") not in ("static", "trained"):
            raise SpecValidationError("scan.kind must be 'static' or 'trained'")

    metrics = spec.get("metrics", list(_metrics.ALL_METRICS))
    unknown = sorted(set(metrics) - set(_metrics.ALL_METRICS))
    if unknown:
        raise SpecValidationError(f"unknown metrics {unknown}")

    _validate_sizes(spec, sweep)


def _dataset_size(spec: dict) -> int:
    if spec["backend"] == "quadratic":
        ens = spec["quadratic"]["ensemble"]
        kind = ens.get("kind")
        if kind == "two-point":
            return 2
        if kind == "counterexample":
            return 2
        return int(ens.get("n", 0))
    return int(spec["mlp"]["dataset"].get("n", 0))


def _validate_sizes(spec: dict, sweep: dict) -> None:
    n = _dataset_size(spec)
    bs = sweep.get("b", [spec.get("b", 1)])
    for b in bs:
        if n and int(b) > n:
            raise SpecValidationError(f"field 'b': batch size {b} exceeds dataset size {n}")
    for eta in sweep.get("eta", [spec.get("eta", 0.1)]):
        if float(eta) <= 0:
            raise SpecValidationError("field 'eta': must be > 0")


def expand_sweep(spec: dict) -> list[dict]:
    """Cartesian product over sweep axes; one resolved config per cell."""
    sweep = spec.get("sweep", {})
    axes = sorted(sweep)
    cells = [{}]
    for axis in axes:
        cells = [dict(c, **{axis: v}) for c in cells for v in sweep[axis]]
    out = []
    for cell in cells:
        cfg = {
            "name": spec["name"],
            "backend": spec["backend"],
            "eta": float(cell.get("eta", spec.get("eta", 0.1))),
            "b": int(cell.get("b", spec.get("b", 1))),
            "sample_mode": spec.get("sample_mode", "with"),
            "steps": int(spec.get("steps", 10_000)),
            "seed": int(cell.get("seed", spec.get("seed", 0))),
            "metric_every": int(spec.get("metric_every", 100)),
            "num_batches": int(spec.get("num_batches", 64)),
            "metrics": list(spec.get("metrics", _metrics.ALL_METRICS)),
            "init_scale": float(cell.get("init_scale", spec.get("init_scale", 1.0))),
            "schedule": list(spec.get("schedule", [])),
            "sweep_axes": {a: cell[a] for a in axes},
        }
        if spec["backend"] == "quadratic":
            cfg["quadratic"] = spec["quadratic"]
        else:
            cfg["mlp"] = spec["mlp"]
        out.append(cfg)
    return out


def cell_directory(base: Path, cfg: dict) -> Path:
    path = base / cfg["name"]
    for axis in sorted(cfg["sweep_axes"]):
        if axis != "seed":
            path = path / f"{axis}={format(cfg['sweep_axes'][axis], 'g')}"
    return path / f"seed={cfg['seed']}"


def build_ensemble(ens_spec: dict) -> _quad.QuadraticEnsemble:
    kind = ens_spec["kind"]
    if kind == "two-point":
        return _quad.make_1d_gaussian_means(2, anchors=[1.0, -1.0])
    if kind == "gaussian-1d":
        return _quad.make_1d_gaussian_means(
            int(ens_spec.get("n", 1000)), seed=int(ens_spec.get("seed", 0)),
            anchors=ens_spec.get("anchors"),
        )
    if kind == "random-psd":
        return _quad.make_random_psd_ensemble(
            int(ens_spec.get("n", 64)),
            int(ens_spec.get("d", 10)),
            int(ens_spec.get("rank", ens_spec.get("d", 10))),
            float(ens_spec.get("scale", 0.1)),
            seed=int(ens_spec.get("seed", 0)),
        )
    if kind == "counterexample":
        return _quad.make_counterexample(
            float(ens_spec.get("alpha", 1.0)), float(ens_spec.get("gamma", 1.0))
        )
    raise SpecValidationError(f"unknown ensemble kind {kind!r}")


def build_dataset(ds_spec: dict) -> _mlp.Dataset:
    return _mlp.make_synthetic_dataset(
        ds_spec.get("kind", "blobs"),
        int(ds_spec.get("n", 512)),
        int(ds_spec.get("d_in", 10)),
        int(ds_spec.get("classes", 4)),
        float(ds_spec.get("spread", 1.0)),
        seed=int(ds_spec.get("seed", 0)),
        label_noise=float(ds_spec.get("label_noise", 0.1)),
    )


write_checkpoint = _mlp.save_checkpoint
read_checkpoint = _mlp.load_checkpoint


# --- cell execution -------------------------------------------------------------


def _report_row(step: int, loss: float, report: _metrics.SharpnessReport) -> str:
    vals = [str(step), _fmt(loss)]
    for name in _metrics.REPORT_COLUMNS[1:]:
        v = getattr(report, name)
        vals.append(str(int(v)) if name in ("num_batches", "seed") else _fmt(v))
    return ",".join(vals)


def _run_quadratic_cell(cfg: dict) -> tuple[list[str], dict, np.ndarray, tuple[int, ...]]:
    q = cfg["quadratic"]
    ens = build_ensemble(q["ensemble"])
    if cfg["b"] > ens.n:
        raise SpecValidationError(f"field 'b': batch size {cfg['b']} exceeds dataset size {ens.n}")
    mode = _quad.BatchMode(cfg["sample_mode"], cfg["b"])
    theta0 = np.array(q["theta0"], dtype=float) if q.get("theta0") else None
    if cfg["schedule"]:
        raise SpecValidationError("schedules are only supported on the mlp backend")
    run = _quad.sgd_run(
        ens, cfg["eta"], mode, cfg["steps"],
        theta0=theta0,
        record_every=int(q.get("record_every", cfg["metric_every"])),
        blowup=float(q.get("blowup", 1e6)),
        seed=cfg["seed"],
    )
    oracle = _quad.QuadraticOracle(ens)
    want = set(cfg["metrics"])
    # batch Hessians do not depend on theta, so the eigenvalue metrics are
    # computed once and reused across rows
    lam = float("nan")
    lam_b = float("nan")
    if "lambda_max" in want:
        lam = top_eigenvalue(
            LinearOperator(ens.d, lambda v: ens.mean_hessian @ v), _metrics.FULL_SETTINGS
        ).value
    if "lambda_max_b" in want:
        lam_b = _metrics.lambda_max_b_est(
            oracle, np.zeros(ens.d), cfg["b"], cfg["num_batches"],
            cfg["sample_mode"], cfg["seed"],
        ).value
    rows = []
    stride = max(1, cfg["metric_every"] // max(1, int(q.get("record_every", cfg["metric_every"]))))
    for k in range(0, len(run.thetas), stride):
        theta = run.thetas[k]
        step = int(run.record_steps[k])
        report = _metrics.measure_report(
            oracle, theta, step=step, b=cfg["b"],
            num_batches=cfg["num_batches"], mode=cfg["sample_mode"], seed=cfg["seed"],
            metrics=[m for m in cfg["metrics"] if m not in ("lambda_max", "lambda_max_b")],
        )
        report.lambda_max = lam
        report.lambda_max_b = lam_b
        rows.append(_report_row(step, float(run.losses[k]), report))
    events = {
        "schedule": [],
        "catapults": [],
        "diverged": bool(run.diverged),
        "steps_done": int(run.steps_done),
    }
    return rows, events, run.final_theta, (ens.d,)


def _run_mlp_cell(cfg: dict) -> tuple[list[str], dict, np.ndarray, tuple[int, ...]]:
    m = cfg["mlp"]
    data = build_dataset(m["dataset"])
    if cfg["b"] > data.n:
        raise SpecValidationError(f"field 'b': batch size {cfg['b']} exceeds dataset size {data.n}")
    dims = tuple(int(d) for d in m.get("layer_dims", (10, 32, 32, 4)))
    activation = m.get("activation", "tanh")
    params = _mlp.init_mlp(dims, activation, cfg["init_scale"], seed=cfg["seed"])
    config = _mlp.TrainConfig(
        eta=cfg["eta"], b=cfg["b"], sample_mode=cfg["sample_mode"], steps=cfg["steps"],
        seed=cfg["seed"], metric_every=cfg["metric_every"], metric_batches=cfg["num_batches"],
        noise_mode=m.get("noise_mode", "sgd"), init_scale=cfg["init_scale"],
    )
    schedule = [
        _mlp.ScheduleEvent(int(ev["at_step"]), ev["action"], float(ev["value"]))
        for ev in cfg["schedule"]
    ]
    log = _mlp.train(params, data, config, schedule, metrics=cfg["metrics"])
    rows = [
        _report_row(step, loss, report)
        for step, loss, report in zip(log.steps, log.losses, log.reports)
    ]
    events = {
        "schedule": [
            {"at_step": s, "action": a, "value": v} for s, a, v in log.schedule_events
        ],
        "catapults": [
            {"start_step": int(e.start_step), "peak_step": int(e.peak_step),
             "peak_ratio": float(e.peak_ratio)}
            for e in log.catapult_events
        ],
        "diverged": bool(log.diverged),
        "steps_done": int(len(log.loss_series)),
    }
    return rows, events, log.final_params.to_flat(), dims


def run_cell(cfg: dict, raw_spec: bytes, base: Path) -> RunArtifact:
    directory = cell_directory(base, cfg)
    directory.mkdir(parents=True, exist_ok=True)
    if cfg["backend"] == "quadratic":
        rows, events, flat, dims = _run_quadratic_cell(cfg)
    else:
        rows, events, flat, dims = _run_mlp_cell(cfg)
    (directory / "spec.json").write_bytes(raw_spec)
    with open(directory / "metrics.csv", "w") as fh:
        fh.write(",".join(RUNLOG_COLUMNS) + "\n")
        for row in rows:
            fh.write(row + "\n")
    events["config"] = {k: v for k, v in cfg.items() if k != "sweep_axes"}
    events["sweep_axes"] = cfg["sweep_axes"]
    with open(directory / "events.json", "w") as fh:
        json.dump(events, fh, indent=1, sort_keys=True)
        fh.write("\n")
    write_checkpoint(directory / "checkpoint.bin", flat, dims)
    summary = summarize(directory)
    with open(directory / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return RunArtifact(directory, bool(events["diverged"]))


def run_experiment(spec_path: str | Path, output_dir: str | Path | None = None) -> list[RunArtifact]:
    """Run every sweep cell of a spec; failures in one cell do not abort others."""
    spec, raw = load_spec(spec_path)
    base = Path(output_dir or spec.get("output_dir", "runs"))
    cells = expand_sweep(spec)
    workers = int(os.environ.get(PARALLEL_ENV, "1"))
    artifacts: list[RunArtifact] = []
    errors: list[tuple[dict, Exception]] = []
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            futs = [(cfg, pool.submit(run_cell, cfg, raw, base)) for cfg in cells]
            for cfg, fut in futs:
                try:
                    artifacts.append(fut.result())
                except Exception as err:  # noqa: BLE001 - recorded per cell
                    errors.append((cfg, err))
    else:
        for cfg in cells:
            try:
                artifacts.append(run_cell(cfg, raw, base))
            except Exception as err:  # noqa: BLE001
                errors.append((cfg, err))
    for cfg, err in errors:
        # siblings already ran; leave a marker in the failed cell's directory
        directory = cell_directory(base, cfg)
        directory.mkdir(parents=True, exist_ok=True)
        (directory / "error.txt").write_text(f"{type(err).__name__}: {err}\n")
    if errors:
        cfg, err = errors[0]
        if isinstance(err, SpecValidationError):
            raise err
        raise RuntimeError(f"cell {cfg['sweep_axes']} failed: {err}") from err
    return artifacts


# --- summaries and plot data -----------------------------------------------------


def read_metrics_csv(directory: str | Path) -> dict[str, np.ndarray]:
    path = Path(directory) / "metrics.csv"
    if not path.exists():
        raise FileNotFoundError(path)
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        rows = []
        for lineno, line in enumerate(fh, start=2):
            parts = line.strip().split(",")
            if len(parts) != len(header):
                raise ValueError(f"{path}:{lineno}: expected {len(header)} columns, got {len(parts)}")
            try:
                rows.append([float(p) for p in parts])
            except ValueError as err:
                raise ValueError(f"{path}:{lineno}: {err}") from err
    data = np.array(rows) if rows else np.empty((0, len(header)))
    return {name: data[:, j] for j, name in enumerate(header)}


def _tail(values: np.ndarray, frac: float = 0.1) -> np.ndarray:
    finite = values[np.isfinite(values)]
    if len(finite) == 0:
        return finite
    return finite[-max(1, int(len(finite) * frac)) :]


def summarize(directory: str | Path) -> dict:
    """Plateau statistics, catapult count and scan fits for one run directory.

    Plateaus are medians of the final 10% of finite rows; the gni plateau is
    the gradient-weighted tail mean (gni * grad_full_sq averaged over the
    tail, divided by the mean grad_full_sq), which recovers the
    ratio-of-averages estimator from the per-row ratios in the CSV.
    """
    directory = Path(directory)
    events = {}
    ev_path = directory / "events.json"
    if ev_path.exists():
        events = json.loads(ev_path.read_text())
    summary: dict = {
        "diverged": bool(events.get("diverged", False)),
        "catapult_count": len(events.get("catapults", [])),
        "plateaus": {},
    }
    gaps_path = directory / "gaps.csv"
    if gaps_path.exists():
        rows = np.loadtxt(gaps_path, delimiter=",", skiprows=1, ndmin=2)
        pts = [(row[0], row[3]) for row in rows if row[3] > 0]
        if len(pts) >= 3:
            fit = powerlaw_fit(pts)
            summary["gap_fit"] = {
                "slope": fit.slope, "intercept": fit.intercept, "r_squared": fit.r_squared
            }
    if not (directory / "metrics.csv").exists():
        return summary
    cols = read_metrics_csv(directory)
    if summary["diverged"]:
        summary["plateaus"] = {m: None for m in _metrics.ALL_METRICS}
        return summary
    for name in ("loss", "batch_sharpness", "ias", "lambda_max", "lambda_max_b", "step_sharpness"):
        tail = _tail(cols.get(name, np.array([])))
        summary["plateaus"][name] = float(np.median(tail)) if len(tail) else None
    mask = np.isfinite(cols["gni"]) & np.isfinite(cols["grad_full_sq"])
    g, w = cols["gni"][mask], cols["grad_full_sq"][mask]
    k = max(1, int(len(g) * 0.1))
    if len(g) and w[-k:].sum() > 0:
        summary["plateaus"]["gni"] = float((g[-k:] * w[-k:]).sum() / w[-k:].sum())
    else:
        summary["plateaus"]["gni"] = None
    classify_path = directory / "classify.json"
    if classify_path.exists():
        summary["oscillation_verdict"] = json.loads(classify_path.read_text())
    return summary


def emit_plotdata(
    directory: str | Path,
    metrics: Sequence[str],
    normalize_by_two_over_eta: bool = False,
) -> str:
    """Long-format CSV (step, metric, value); normalization divides by the
    2/eta in effect at each step, following any schedule changes."""
    directory = Path(directory)
    cols = read_metrics_csv(directory)
    for m in metrics:
        if m not in cols:
            raise KeyError(f"metric {m!r} not present in {directory}/metrics.csv")
    eta_changes: list[tuple[int, float]] = []
    if normalize_by_two_over_eta:
        events = json.loads((directory / "events.json").read_text())
        eta0 = float(events["config"]["eta"])
        eta_changes = [(0, eta0)] + [
            (int(ev["at_step"]), float(ev["value"]))
            for ev in events.get("schedule", [])
            if ev["action"] == "set_eta"
        ]
        eta_changes.sort()
    lines = ["step,metric,value"]
    steps = cols["step"]
    for m in metrics:
        for step, value in zip(steps, cols[m]):
            v = value
            if normalize_by_two_over_eta:
                eta = eta_changes[0][1]
                for at, e in eta_changes:
                    if at <= step:
                        eta = e
                v = value / (2.0 / eta)
            lines.append(f"{int(step)},{m},{_fmt(v)}")
    return "\n".join(lines) + "\n"


# --- gap scans --------------------------------------------------------------------


def run_gap_scan(spec_path: str | Path, output_dir: str | Path | None = None) -> Path:
    """Train per the spec, then write a gap scan (static or trained) artifact."""
    spec, raw = load_spec(spec_path)
    if spec["backend"] != "mlp" or "scan" not in spec:
        raise SpecValidationError("scan-gaps needs an mlp spec with a 'scan' section")
    scan = spec["scan"]
    b_list = [int(b) for b in scan["b_list"]]
    num_batches = int(scan.get("num_batches", 128))
    base = Path(output_dir or spec.get("output_dir", "runs"))
    directory = base / spec["name"] / f"scan={scan['kind']}" / f"seed={int(spec.get('seed', 0))}"
    directory.mkdir(parents=True, exist_ok=True)
    (directory / "spec.json").write_bytes(raw)

    cfg = expand_sweep(spec)[0]
    m = spec["mlp"]
    data = build_dataset(m["dataset"])
    dims = tuple(int(d) for d in m.get("layer_dims", (10, 32, 32, 4)))
    activation = m.get("activation", "tanh")
    header = "b,lambda_max_b,lambda_max,gap"
    if scan["kind"] == "static":
        params = _mlp.init_mlp(dims, activation, cfg["init_scale"], seed=cfg["seed"])
        config = _mlp.TrainConfig(
            eta=cfg["eta"], b=cfg["b"], sample_mode=cfg["sample_mode"], steps=cfg["steps"],
            seed=cfg["seed"], metric_every=max(cfg["steps"] // 4, 1),
            metric_batches=cfg["num_batches"], noise_mode=m.get("noise_mode", "sgd"),
            init_scale=cfg["init_scale"],
        )
        log = _mlp.train(params, data, config, metrics=())
        rows = _mlp.gap_scan_static(log.final_params, data, b_list, num_batches, seed=cfg["seed"])
        lines = [f"{r.b},{_fmt(r.lambda_max_b)},{_fmt(r.lambda_max)},{_fmt(r.gap)}" for r in rows]
        flat, ck_dims = log.final_params.to_flat(), dims
        diverged = log.diverged
    else:
        config = _mlp.TrainConfig(
            eta=cfg["eta"], b=cfg["b"], sample_mode=cfg["sample_mode"], steps=cfg["steps"],
            seed=cfg["seed"], metric_every=cfg["metric_every"],
            metric_batches=cfg["num_batches"], noise_mode=m.get("noise_mode", "sgd"),
            init_scale=cfg["init_scale"],
        )
        rows = _mlp.gap_scan_trained(config, data, b_list, seed=cfg["seed"],
                                     layer_dims=dims, activation=activation)
        header = "b,final_lambda_max,final_batch_sharpness,diverged"
        lines = [
            f"{r.b},{_fmt(r.final_lambda_max)},{_fmt(r.final_batch_sharpness)},{int(r.diverged)}"
            for r in rows
        ]
        flat, ck_dims = np.zeros(1), dims
        diverged = any(r.diverged for r in rows)
    with open(directory / "gaps.csv", "w") as fh:
        fh.write(header + "\n")
        for line in lines:
            fh.write(line + "\n")
    with open(directory / "events.json", "w") as fh:
        json.dump({"schedule": [], "catapults": [], "diverged": diverged,
                   "config": {k: v for k, v in cfg.items() if k != "sweep_axes"},
                   "scan": scan}, fh, indent=1, sort_keys=True)
        fh.write("\n")
    write_checkpoint(directory / "checkpoint.bin", flat, ck_dims)
    summary = summarize(directory)
    with open(directory / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return directory


def classify_run(
    directory: str | Path,
    eta_factor: float | None = None,
    new_b: int | None = None,
    probe_steps: int = 100,
    baseline_steps: int = 60,
    catapult_factor: float = 3.0,
) -> dict:
    """Rebuild a finished run's trainer from its artifact and probe it."""
    directory = Path(directory)
    events = json.loads((directory / "events.json").read_text())
    cfg = events["config"]
    flat, dims = read_checkpoint(directory / "checkpoint.bin")
    if cfg["backend"] == "mlp":
        data = build_dataset(cfg["mlp"]["dataset"])
        template = _mlp.init_mlp(dims, cfg["mlp"].get("activation", "tanh"), 1.0, seed=0)
        params = template.from_flat(flat)
        config = _mlp.TrainConfig(
            eta=cfg["eta"], b=cfg["b"], sample_mode=cfg["sample_mode"], steps=cfg["steps"],
            seed=cfg["seed"], metric_every=cfg["metric_every"],
            metric_batches=cfg["num_batches"],
            noise_mode=cfg["mlp"].get("noise_mode", "sgd"), init_scale=cfg["init_scale"],
        )
        trainer = _mlp.MlpTrainer(params, data, config)
    else:
        ens = build_ensemble(cfg["quadratic"]["ensemble"])
        trainer = _quad.QuadraticTrainer(
            ens, cfg["eta"], _quad.BatchMode(cfg["sample_mode"], cfg["b"]),
            theta0=flat, seed=cfg["seed"],
        )
    trainer.run_steps(baseline_steps)
    probe = _metrics.ProbeConfig(
        eta_factor=eta_factor, new_b=new_b, probe_steps=probe_steps,
        catapult_factor=catapult_factor, baseline_window=min(50, baseline_steps),
    )
    verdict = _metrics.classify_oscillation(trainer, probe)
    out = {
        "kind": verdict.kind,
        "peak_loss_ratio": verdict.peak_loss_ratio,
        "re_stabilized": verdict.re_stabilized,
        "post_probe_batch_sharpness": verdict.post_probe_batch_sharpness,
        "pre_probe_batch_sharpness": verdict.pre_probe_batch_sharpness,
        "new_threshold": verdict.new_threshold,
    }
    with open(directory / "classify.json", "w") as fh:
        json.dump(out, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return out
