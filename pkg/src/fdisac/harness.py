"""Experiment harness: spec files, trial execution, CSV emission, audits.

An experiment is a JSON spec: a base scenario, an optional one-parameter
sweep, a list of design methods, and a trial count. Every trial draws its own
channel realization from a seed derived as

    SeedSequence((seed_base, sweep_index, trial)).spawn(2)
      child 0 -> channel synthesis
      child 1 -> the random-feasible baseline

so results are reproducible per cell and independent of the method list,
worker count, and completion order.

Output is one CSV (stable column order, floats rendered with %.12g, newline
"\n") plus a manifest JSON carrying the spec and the CSV's sha256. The CSV
contains one row per (sweep point, trial, method) followed per sweep point by
mean and standard-error rows over trials. Reruns with the same spec and seed
produce byte-identical CSVs at any --jobs setting.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import metrics
from .ijtb import (IjtbOptions, bench_feasible, bench_iso_an, bench_iso_no_an,
                   run_ijtb)
from .metrics import DegenerateBeampatternError, SensingMasks, q_matrix
from .scene import ScenarioConfig, linear_to_db, make_channel_set

METHODS = ("ijtb", "iso_an", "iso_no_an", "feasible")

CSV_COLUMNS = (
    "experiment", "sweep_parameter", "sweep_value", "trial", "method",
    "row_kind", "sr_dl", "sr_ul", "sr_total", "sr_dl_clipped",
    "sr_ul_clipped", "sr_total_clipped", "ismr_db", "n_iterations",
    "converged", "solver_status", "feasible",
)

# columns aggregated into mean / stderr rows
_NUMERIC = ("sr_dl", "sr_ul", "sr_total", "sr_dl_clipped", "sr_ul_clipped",
            "sr_total_clipped", "ismr_db", "n_iterations", "converged",
            "feasible")

CSV_NAME = "results.csv"
MANIFEST_NAME = "manifest.json"


@dataclass
class ExperimentSpec:
    """Declarative description of one experiment."""

    name: str
    scenario: ScenarioConfig
    methods: tuple = METHODS
    n_trials: int = 1
    seed_base: int = 0
    sweep_parameter: str | None = None
    sweep_values: tuple = ()
    max_iterations: int = 30

    def __post_init__(self):
        self.methods = tuple(self.methods)
        self.sweep_values = tuple(self.sweep_values)
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown:
            raise ValueError(f"unknown methods {unknown}; choose from {METHODS}")
        if not self.methods:
            raise ValueError("at least one method required")
        if self.n_trials < 1:
            raise ValueError("n_trials must be >= 1")
        if self.sweep_parameter is not None:
            if not hasattr(self.scenario, self.sweep_parameter):
                raise ValueError(f"sweep_parameter {self.sweep_parameter!r} is "
                                 "not a scenario field")
            if not self.sweep_values:
                raise ValueError("sweep_values required with sweep_parameter")
            if len(set(self.sweep_values)) != len(self.sweep_values):
                raise ValueError("sweep_values must be distinct")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")

    @property
    def n_sweep(self) -> int:
        return len(self.sweep_values) if self.sweep_parameter else 1

    def scenario_at(self, sweep_index: int) -> ScenarioConfig:
        """Base scenario with the sweep parameter substituted and validated."""
        if not self.sweep_parameter:
            cfg = self.scenario
        else:
            cur = getattr(self.scenario, self.sweep_parameter)
            val = self.sweep_values[sweep_index]
            if isinstance(cur, int):
                val = int(val)
            cfg = dataclasses.replace(self.scenario,
                                      **{self.sweep_parameter: val})
        cfg.validate()
        return cfg

    def sweep_value_at(self, sweep_index: int) -> float:
        return (float(self.sweep_values[sweep_index])
                if self.sweep_parameter else math.nan)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "scenario": self.scenario.to_dict(),
            "methods": list(self.methods),
            "n_trials": self.n_trials,
            "seed_base": self.seed_base,
            "sweep_parameter": self.sweep_parameter,
            "sweep_values": list(self.sweep_values),
            "max_iterations": self.max_iterations,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentSpec":
        d = dict(d)
        known = {"name", "scenario", "methods", "n_trials", "seed_base",
                 "sweep_parameter", "sweep_values", "max_iterations"}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown experiment fields: {sorted(unknown)}")
        if "name" not in d or "scenario" not in d:
            raise ValueError("experiment spec needs 'name' and 'scenario'")
        d["scenario"] = ScenarioConfig.from_dict(d["scenario"])
        return cls(**d)

    @classmethod
    def from_file(cls, path: str) -> "ExperimentSpec":
        with open(path, "r", encoding="utf-8") as f:
            return cls.from_dict(json.load(f))


def masks_for(cfg: ScenarioConfig, theta) -> SensingMasks | None:
    """Sensing masks at the given target angles, or None without targets."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    if theta.size == 0:
        return None
    return metrics.build_sensing_masks(
        theta, math.radians(cfg.mainlobe_halfwidth_deg),
        math.radians(cfg.grid_resolution_deg), cfg.n_tx,
        spacing=cfg.element_spacing)


def trial_rng_pair(seed_base: int, trial: int):
    """(channel rng, feasible-baseline rng) for one trial index.

    The sweep index deliberately does not enter: trials at different sweep
    points reuse the same draws, so sweeping an algorithm knob (budget, ISMR
    cap) holds the channels fixed and the methods see paired samples.
    """
    children = np.random.SeedSequence((seed_base, trial)).spawn(2)
    return np.random.default_rng(children[0]), np.random.default_rng(children[1])


def _clipped_rates(channels, point) -> tuple:
    """Per-link nonnegative secrecy rates.

    Uplink user k is paired with its own interception terms over all
    eavesdroppers; the downlink is clipped at the group level because an
    eavesdropper intercepts the user superposition, not one stream.
    """
    dl = 0.0
    for ell in range(channels.n_dl):
        dl += math.log2(1.0 + metrics.dl_sinr(ell, channels, point))
    for p in range(channels.n_eve):
        dl -= math.log2(1.0 + metrics.eve_dl_sinr(p, channels, point))
    dl = max(dl, 0.0)
    ul = 0.0
    for k in range(channels.n_ul):
        leak = sum(math.log2(1.0 + metrics.eve_ul_sinr(p, k, channels, point))
                   for p in range(channels.n_eve))
        ul += max(math.log2(1.0 + metrics.ul_sinr(k, channels, point)) - leak,
                  0.0)
    return dl, ul


def _kpi_fields(channels, cfg, masks, point) -> dict:
    sr_dl = metrics.sum_secrecy_dl(channels, point)
    sr_ul = metrics.sum_secrecy_ul(channels, point)
    dl_c, ul_c = _clipped_rates(channels, point)
    if masks is None:
        ach_db = math.nan
        ismr_ok = True
    else:
        try:
            ach = metrics.ismr(q_matrix(point), masks)
            ach_db = linear_to_db(ach) if ach > 0 else -math.inf
            ismr_ok = ach <= cfg.ismr_max * (1 + 1e-6) + 1e-9
        except DegenerateBeampatternError:
            # no transmit energy at all: nothing radiated into sidelobes
            ach_db = math.nan
            ismr_ok = True
    return {"sr_dl": sr_dl, "sr_ul": sr_ul, "sr_total": sr_dl + sr_ul,
            "sr_dl_clipped": dl_c, "sr_ul_clipped": ul_c,
            "sr_total_clipped": dl_c + ul_c, "ismr_db": ach_db,
            "_ismr_ok": ismr_ok}


def run_cell(spec: ExperimentSpec, sweep_index: int, trial: int) -> list:
    """Execute every method of one (sweep point, trial) cell.

    Returns one row dict per method, in spec method order.
    """
    cfg = spec.scenario_at(sweep_index)
    rng_chan, rng_feas = trial_rng_pair(spec.seed_base, trial)
    channels = make_channel_set(cfg, rng_chan)
    masks = masks_for(cfg, channels.theta)
    base = {
        "experiment": spec.name,
        "sweep_parameter": spec.sweep_parameter or "",
        "sweep_value": spec.sweep_value_at(sweep_index),
        "trial": trial,
        "row_kind": "trial",
    }
    rows = []
    for method in spec.methods:
        if method == "ijtb":
            report = run_ijtb(channels, cfg, masks,
                              IjtbOptions(max_iterations=spec.max_iterations))
            point = report.point
            extra = {"n_iterations": report.n_iterations,
                     "converged": int(report.converged),
                     "solver_status": ("ok" if report.status == "ok"
                                       else "degraded")}
            feas = report.status == "ok"
        elif method == "iso_an":
            point = bench_iso_an(channels, cfg)
            extra = {"n_iterations": 0, "converged": 1,
                     "solver_status": "closed-form"}
            feas = True
        elif method == "iso_no_an":
            point = bench_iso_no_an(channels, cfg)
            extra = {"n_iterations": 0, "converged": 1,
                     "solver_status": "closed-form"}
            feas = True
        else:
            point, ok = bench_feasible(channels, cfg, masks, rng_feas)
            extra = {"n_iterations": 0, "converged": 1,
                     "solver_status": "closed-form"}
            feas = ok
        kpi = _kpi_fields(channels, cfg, masks, point)
        ismr_ok = kpi.pop("_ismr_ok")
        if method in ("ijtb", "feasible"):
            feas = feas and ismr_ok
        rows.append({**base, "method": method, **kpi,
                     **extra, "feasible": int(feas)})
    return rows


def _run_cell_from_dict(spec_dict: dict, sweep_index: int, trial: int) -> list:
    return run_cell(ExperimentSpec.from_dict(spec_dict), sweep_index, trial)


def _aggregate(trial_rows: list, spec: ExperimentSpec, sweep_index: int,
               method: str) -> list:
    sub = [r for r in trial_rows
           if r["method"] == method and r["row_kind"] == "trial"]
    base = {
        "experiment": spec.name,
        "sweep_parameter": spec.sweep_parameter or "",
        "sweep_value": spec.sweep_value_at(sweep_index),
        "trial": "",
        "method": method,
        "solver_status": "",
    }
    mean_row = dict(base, row_kind="mean")
    se_row = dict(base, row_kind="stderr")
    for col in _NUMERIC:
        vals = np.array([float(r[col]) for r in sub])
        mean_row[col] = float(vals.mean())
        if len(vals) > 1:
            se_row[col] = float(vals.std(ddof=1) / math.sqrt(len(vals)))
        else:
            se_row[col] = 0.0
    return [mean_row, se_row]


def run_experiment(spec: ExperimentSpec, jobs: int = 1) -> tuple:
    """Run every cell of the experiment.

    Returns (rows, ok): rows in deterministic order (per sweep point: trial
    rows sorted by (trial, method), then mean and stderr rows per method); ok
    is True when every trial completed without a degraded solve.
    """
    cells = [(s, t) for s in range(spec.n_sweep) for t in range(spec.n_trials)]
    results: dict = {}
    if jobs > 1:
        spec_dict = spec.to_dict()
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = {(s, t): pool.submit(_run_cell_from_dict, spec_dict, s, t)
                       for s, t in cells}
            for key, fut in futures.items():
                results[key] = fut.result()
    else:
        for s, t in cells:
            results[(s, t)] = run_cell(spec, s, t)

    rows: list = []
    ok = True
    for s in range(spec.n_sweep):
        block: list = []
        for t in range(spec.n_trials):
            block.extend(results[(s, t)])
        ok = ok and all(r["solver_status"] != "degraded" for r in block)
        rows.extend(block)
        for method in spec.methods:
            rows.extend(_aggregate(block, spec, s, method))
    return rows, ok


# ---------------------------------------------------------------------------
# serialization and audits
# ---------------------------------------------------------------------------

def _fmt(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return "%.12g" % float(value)


def rows_to_csv_bytes(rows: list) -> bytes:
    import io
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in rows:
        writer.writerow([_fmt(row[c]) for c in CSV_COLUMNS])
    return buf.getvalue().encode("utf-8")


def write_outputs(spec: ExperimentSpec, rows: list, ok: bool,
                  out_dir: str) -> dict:
    """Write results.csv and manifest.json; returns the manifest."""
    os.makedirs(out_dir, exist_ok=True)
    payload = rows_to_csv_bytes(rows)
    with open(os.path.join(out_dir, CSV_NAME), "wb") as f:
        f.write(payload)
    manifest = {
        "experiment": spec.name,
        "spec": spec.to_dict(),
        "csv": CSV_NAME,
        "csv_sha256": hashlib.sha256(payload).hexdigest(),
        "n_rows": len(rows),
        "columns": list(CSV_COLUMNS),
        "all_trials_ok": bool(ok),
    }
    with open(os.path.join(out_dir, MANIFEST_NAME), "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    return manifest


@dataclass
class AuditReport:
    ok: bool
    problems: list = field(default_factory=list)

    def fail(self, msg: str) -> None:
        self.ok = False
        self.problems.append(msg)


def check_outputs(out_dir: str) -> AuditReport:
    """Audit an output directory written by write_outputs.

    Verifies the CSV hash against the manifest, the column schema, the row
    census per sweep point and method, and that the aggregate rows reproduce
    from the trial rows.
    """
    report = AuditReport(ok=True)
    man_path = os.path.join(out_dir, MANIFEST_NAME)
    try:
        with open(man_path, "r", encoding="utf-8") as f:
            manifest = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        report.fail(f"cannot read manifest: {e}")
        return report
    csv_path = os.path.join(out_dir, manifest.get("csv", CSV_NAME))
    try:
        with open(csv_path, "rb") as f:
            payload = f.read()
    except OSError as e:
        report.fail(f"cannot read csv: {e}")
        return report
    digest = hashlib.sha256(payload).hexdigest()
    if digest != manifest.get("csv_sha256"):
        report.fail("csv sha256 does not match manifest")
    lines = payload.decode("utf-8").splitlines()
    reader = csv.reader(lines)
    header = next(reader, None)
    if header != list(CSV_COLUMNS):
        report.fail("csv header does not match the expected schema")
        return report
    rows = [dict(zip(CSV_COLUMNS, r)) for r in reader]
    try:
        spec = ExperimentSpec.from_dict(manifest["spec"])
    except (KeyError, ValueError, TypeError) as e:
        report.fail(f"manifest spec invalid: {e}")
        return report

    expected = spec.n_sweep * spec.n_trials * len(spec.methods) \
        + spec.n_sweep * len(spec.methods) * 2
    if len(rows) != expected:
        report.fail(f"row count {len(rows)} != expected {expected}")
    for s in range(spec.n_sweep):
        sval = _fmt(spec.sweep_value_at(s))
        for method in spec.methods:
            sub = [r for r in rows
                   if r["sweep_value"] == sval and r["method"] == method]
            trials = [r for r in sub if r["row_kind"] == "trial"]
            means = [r for r in sub if r["row_kind"] == "mean"]
            ses = [r for r in sub if r["row_kind"] == "stderr"]
            if len(trials) != spec.n_trials or len(means) != 1 or len(ses) != 1:
                report.fail(f"row census wrong for sweep {s} method {method}")
                continue
            for col in _NUMERIC:
                vals = np.array([float(r[col]) for r in trials])
                mean = vals.mean()
                se = (vals.std(ddof=1) / math.sqrt(len(vals))
                      if len(vals) > 1 else 0.0)
                for got, want, kind in ((float(means[0][col]), mean, "mean"),
                                        (float(ses[0][col]), se, "stderr")):
                    if math.isnan(want) and math.isnan(got):
                        continue
                    tol = 1e-9 * max(1.0, abs(want))
                    if not abs(got - want) <= tol + 1e-12:
                        report.fail(f"{kind} of {col} mismatched for sweep {s} "
                                    f"method {method}: {got} vs {want}")
    return report
