"""File formats: the unit-record CSV, JSON configuration files, and the
versioned machine-readable report document.

CSV layout: columns ``study`` (0 = target population), ``arm`` (0/1, empty
for target rows), ``outcome`` (empty for target rows) and ``x1..xp``.

Config and scenario files are JSON with fixed field names; unknown fields
are rejected so that stale configs fail loudly. Reports serialize to a
schema-versioned JSON tree that round-trips losslessly (the creation
timestamp is the only run-dependent field).
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .bootstrap import BootstrapResult
from .data import Dataset
from .design import ModelSpec
from .errors import ParseError
from .estimators import ESTIMATOR_NAMES, EstimateReport
from .oracle import DiscretePopulation
from .simlab import BootstrapPlan, Scenario, SimMetrics, solve_membership_intercepts

__all__ = [
    "load_csv",
    "save_csv",
    "AnalysisConfig",
    "load_analysis_config",
    "load_scenario",
    "scenario_from_dict",
    "population_from_dict",
    "load_population",
    "SCHEMA_VERSION",
    "render_report_json",
    "validate_report",
    "analysis_report_document",
    "simulation_report_document",
    "oracle_report_document",
]

SCHEMA_VERSION = 1
_CSV_FIXED = ("study", "arm", "outcome")


def load_csv(path) -> Dataset:
    """Read unit records and validate them into a Dataset."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        rows = list(reader)

    header = [h.strip() for h in header]
    for name in _CSV_FIXED:
        if name not in header:
            raise ParseError(f"{path}: missing required column {name!r}")
    x_names = [h for h in header if h not in _CSV_FIXED]
    expected = [f"x{j + 1}" for j in range(len(x_names))]
    if x_names != expected:
        raise ParseError(f"{path}: covariate columns must be x1..xp, got {x_names}")
    if not rows:
        raise ParseError(f"{path}: no data rows")

    col = {name: header.index(name) for name in header}
    n, p = len(rows), len(x_names)
    study = np.empty(n, dtype=np.int64)
    arm = np.full(n, -1, dtype=np.int64)
    outcome = np.full(n, np.nan)
    x = np.empty((n, p))

    def cell(row_i, row, name):
        raw = row[col[name]].strip()
        if raw == "":
            return None
        try:
            return float(raw)
        except ValueError:
            raise ParseError(
                f"{path}: row {row_i + 2}, column {name!r}: not a number: {raw!r}"
            ) from None

    for i, row in enumerate(rows):
        if len(row) != len(header):
            raise ParseError(f"{path}: row {i + 2} has {len(row)} cells, expected {len(header)}")
        s = cell(i, row, "study")
        if s is None or s != int(s):
            raise ParseError(f"{path}: row {i + 2}: study must be an integer")
        study[i] = int(s)
        a = cell(i, row, "arm")
        y = cell(i, row, "outcome")
        if study[i] == 0:
            if a is not None or y is not None:
                from .errors import TargetOutcomeError

                raise TargetOutcomeError(f"{path}: row {i + 2}: target row carries arm/outcome")
        else:
            if a is None or y is None:
                from .errors import MissingArmError

                raise MissingArmError(f"{path}: row {i + 2}: study row lacks arm/outcome")
            if a not in (0.0, 1.0):
                raise ParseError(f"{path}: row {i + 2}: arm must be 0 or 1")
            arm[i] = int(a)
            outcome[i] = y
        for j, name in enumerate(x_names):
            v = cell(i, row, name)
            if v is None:
                raise ParseError(f"{path}: row {i + 2}, column {name!r}: empty covariate")
            x[i, j] = v

    m = int(study.max())
    return Dataset.from_arrays(study, arm, outcome, x, max(m, 1))


def save_csv(ds: Dataset, path) -> None:
    """Write a Dataset in the canonical CSV layout."""
    header = list(_CSV_FIXED) + [f"x{j + 1}" for j in range(ds.p)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(ds.n):
            if ds.study[i] == 0:
                row = [str(ds.study[i]), "", ""]
            else:
                row = [str(ds.study[i]), str(int(ds.arm[i])), repr(float(ds.outcome[i]))]
            row += [repr(float(v)) for v in ds.x[i]]
            writer.writerow(row)


@dataclass(frozen=True)
class AnalysisConfig:
    """Everything an applied run needs besides the data file."""

    treatment_spec: ModelSpec
    membership_spec: ModelSpec
    estimators: tuple[str, ...] = ESTIMATOR_NAMES
    study_weights: Optional[dict[int, float]] = None
    bootstrap: Optional[BootstrapPlan] = None
    positivity_report: bool = True


def _reject_unknown(d: dict, allowed: set[str], where: str) -> None:
    unknown = set(d) - allowed
    if unknown:
        raise ParseError(f"{where}: unknown fields {sorted(unknown)}")


def analysis_config_from_dict(doc: dict) -> AnalysisConfig:
    _reject_unknown(
        doc, {"models", "estimators", "study_weights", "bootstrap", "positivity_report"}, "config"
    )
    models = doc.get("models")
    if not isinstance(models, dict):
        raise ParseError("config: a 'models' section is required")
    _reject_unknown(models, {"treatment", "membership"}, "config.models")
    try:
        tspec = ModelSpec.parse(models["treatment"])
        mspec = ModelSpec.parse(models["membership"])
    except KeyError as err:
        raise ParseError(f"config.models: missing {err}") from None

    estimators = tuple(doc.get("estimators", ESTIMATOR_NAMES))
    unknown = set(estimators) - set(ESTIMATOR_NAMES)
    if unknown:
        raise ParseError(f"config: unknown estimators {sorted(unknown)}")

    weights = doc.get("study_weights")
    if weights is not None:
        weights = {int(k): float(v) for k, v in weights.items()}

    plan = None
    if "bootstrap" in doc and doc["bootstrap"] is not None:
        b = doc["bootstrap"]
        _reject_unknown(b, {"replicates", "alpha"}, "config.bootstrap")
        plan = BootstrapPlan(B=int(b.get("replicates", 1000)), alpha=float(b.get("alpha", 0.05)))
        if plan.B < 2:
            raise ParseError("config.bootstrap: replicates must be >= 2")
        if not 0.0 < plan.alpha < 1.0:
            raise ParseError("config.bootstrap: alpha must be in (0, 1)")

    return AnalysisConfig(
        treatment_spec=tspec,
        membership_spec=mspec,
        estimators=estimators,
        study_weights=weights,
        bootstrap=plan,
        positivity_report=bool(doc.get("positivity_report", True)),
    )


def load_analysis_config(path) -> AnalysisConfig:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as err:
            raise ParseError(f"{path}: {err}") from None
    return analysis_config_from_dict(doc)


def scenario_from_dict(doc: dict) -> Scenario:
    _reject_unknown(
        doc,
        {
            "name", "m", "n", "slopes", "intercepts", "target_sizes",
            "theta_target", "theta_variances", "treat_prob", "setting",
        },
        "scenario",
    )
    try:
        m = int(doc["m"])
        n = int(doc["n"])
        slopes = tuple(float(v) for v in doc["slopes"])
    except KeyError as err:
        raise ParseError(f"scenario: missing {err}") from None
    if "intercepts" in doc:
        intercepts = tuple(float(v) for v in doc["intercepts"])
    elif "target_sizes" in doc:
        intercepts = tuple(
            solve_membership_intercepts(slopes, [float(v) for v in doc["target_sizes"]], n)
        )
    else:
        raise ParseError("scenario: provide 'intercepts' or 'target_sizes'")
    kwargs = {}
    if "theta_target" in doc:
        kwargs["theta_target"] = tuple(float(v) for v in doc["theta_target"])
    if "theta_variances" in doc:
        kwargs["theta_variances"] = tuple(float(v) for v in doc["theta_variances"])
    if "treat_prob" in doc:
        kwargs["treat_prob"] = float(doc["treat_prob"])
    if "setting" in doc:
        kwargs["setting"] = int(doc["setting"])
    return Scenario(
        name=str(doc.get("name", "custom")), m=m, n=n,
        slopes=slopes, intercepts=intercepts, **kwargs,
    )


def load_scenario(path) -> Scenario:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as err:
            raise ParseError(f"{path}: {err}") from None
    return scenario_from_dict(doc)


def population_from_dict(doc: dict) -> DiscretePopulation:
    _reject_unknown(
        doc, {"x_values", "mass", "treat_prob", "cate", "mean_control", "mean_treat"}, "population"
    )
    try:
        x_values = np.asarray(doc["x_values"], dtype=float)
        mass = np.asarray(doc["mass"], dtype=float)
        treat_prob = np.asarray(doc["treat_prob"], dtype=float)
        cate = np.asarray(doc["cate"], dtype=float)
        mean_control = np.asarray(doc["mean_control"], dtype=float)
    except KeyError as err:
        raise ParseError(f"population: missing {err}") from None
    if "mean_treat" in doc:
        mean_treat = np.asarray(doc["mean_treat"], dtype=float)
    else:
        mean_treat = mean_control + cate[:, 1:]
    return DiscretePopulation(
        x_values=x_values, mass=mass, treat_prob=treat_prob, cate=cate,
        mean_treat=mean_treat, mean_control=mean_control,
    )


def load_population(path) -> DiscretePopulation:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as err:
            raise ParseError(f"{path}: {err}") from None
    return population_from_dict(doc)


# ---------------------------------------------------------------------------
# Report documents
# ---------------------------------------------------------------------------

_TOP_KEYS = {"schema_version", "kind", "provenance", "results"}
_KINDS = {"analysis", "simulation", "oracle_check"}


def _provenance(seed: int, threads: int, config_doc, created_at: str) -> dict:
    from . import __version__

    blob = json.dumps(config_doc, sort_keys=True).encode()
    return {
        "tool": "targetmeta",
        "version": __version__,
        "seed": seed,
        "threads": threads,
        "config_sha256": hashlib.sha256(blob).hexdigest(),
        "created_at": created_at,
    }


def _estimate_dict(report: EstimateReport, boot: Optional[BootstrapResult]) -> dict:
    out = {
        "delta_hat": report.delta_hat,
        "mu_treat": report.mu_treat,
        "mu_control": report.mu_control,
        "per_study": None if report.per_study is None
        else {str(k): v for k, v in report.per_study.items()},
        "study_weights": None if report.study_weights is None
        else {str(k): v for k, v in report.study_weights.items()},
        "n_clamped": report.n_clamped,
    }
    if boot is not None:
        out["bootstrap"] = {
            "B": boot.B,
            "alpha": boot.alpha,
            "se": boot.se_hat,
            "interval": list(boot.interval),
            "missing_count": boot.missing_count,
            "missing_rate": boot.missing_rate,
            "sensitivity": {k: list(v) for k, v in boot.sensitivity.items()},
        }
    return out


def analysis_report_document(
    ds: Dataset,
    estimates: dict[str, EstimateReport],
    bootstraps: dict[str, BootstrapResult],
    positivity: Optional[dict[int, dict[str, float]]],
    seed: int,
    threads: int,
    config_doc,
    created_at: str,
) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "analysis",
        "provenance": _provenance(seed, threads, config_doc, created_at),
        "results": {
            "data": {
                "n": ds.n, "m": ds.m, "p": ds.p,
                "counts": [int(c) for c in ds.counts],
            },
            "estimates": {
                name: _estimate_dict(rep, bootstraps.get(name))
                for name, rep in estimates.items()
            },
            "positivity": None if positivity is None
            else {str(s): stats for s, stats in positivity.items()},
        },
    }


def simulation_report_document(
    metrics: SimMetrics, seed: int, threads: int, config_doc, created_at: str
) -> dict:
    rows = {}
    for name, row in metrics.rows.items():
        rows[name] = {
            "bias": row.bias, "bias_mcse": row.bias_mcse,
            "emp_se": row.emp_se, "emp_se_mcse": row.emp_se_mcse,
            "mse": row.mse, "mse_mcse": row.mse_mcse,
            "coverage": row.coverage, "coverage_mcse": row.coverage_mcse,
            "rel_se_error": row.rel_se_error, "rel_se_error_mcse": row.rel_se_error_mcse,
            "n_used": row.n_used,
        }
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "simulation",
        "provenance": _provenance(seed, threads, config_doc, created_at),
        "results": {
            "scenario": metrics.scenario,
            "truth": metrics.truth,
            "n_replications": metrics.n_replications,
            "estimators": rows,
            "failures": dict(metrics.failures),
        },
    }


def oracle_report_document(
    summary: dict, seed: int, config_doc, created_at: str
) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "oracle_check",
        "provenance": _provenance(seed, 1, config_doc, created_at),
        "results": summary,
    }


def render_report_json(doc: dict) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def validate_report(doc: dict) -> None:
    """Reject documents from other schema versions or with unknown fields."""
    if not isinstance(doc, dict):
        raise ParseError("report: not a JSON object")
    _reject_unknown(doc, _TOP_KEYS, "report")
    missing = _TOP_KEYS - set(doc)
    if missing:
        raise ParseError(f"report: missing fields {sorted(missing)}")
    if doc["schema_version"] != SCHEMA_VERSION:
        raise ParseError(f"report: unsupported schema version {doc['schema_version']}")
    if doc["kind"] not in _KINDS:
        raise ParseError(f"report: unknown kind {doc['kind']!r}")
    _reject_unknown(
        doc["provenance"],
        {"tool", "version", "seed", "threads", "config_sha256", "created_at"},
        "report.provenance",
    )
