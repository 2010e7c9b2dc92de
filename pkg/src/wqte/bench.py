"""Replication harness: MSE, absolute bias, and CI coverage per method.

Replication ``r`` of a run draws its data from substream ``(seed, 1, r)``
and its bootstrap resamples from ``(seed, 2, r, b)``, so a report is a pure
function of (scenario, methods, tau, R, B, seed) regardless of worker
count. Wall-clock time is kept out of every emitted file for the same
reason.
"""

from __future__ import annotations

import csv
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .data import BINARY, CATEGORICAL, CONTINUOUS, Dataset
from .errors import ArgumentError, UsageError, WqteError
from .estimators import (
    continuous_qte,
    ipw_qr,
    naive_qr,
    ow_qr,
    pairwise_qte,
    psreg_homogeneous,
    psreg_marginalized,
    true_covariate_qr,
)
from .inference import bootstrap
from .propensity import DEFAULT_BINS, bin_continuous, fit_logistic, fit_multinomial, \
    gps_from_normal_model
from .rngs import substream
from .simlab import SimScenario, gen_dataset, scenario_with, true_effects

_REP_NS = 1    # substream namespace for replication datasets
_BOOT_NS = 2   # substream namespace for bootstrap resamples

KNOWN_METHODS = ("psreg", "ipw", "ow", "naive", "true")
_FAILURE_FLAG_FRACTION = 0.02

CSV_COLUMNS = ("scenario", "method", "mse", "abs_bias", "coverage", "mean_se",
               "R", "truth_qte", "truth_wqte")


@dataclass(frozen=True)
class BenchRow:
    """One method (and contrast) aggregated over replications."""

    method: str
    mse: float
    abs_bias: float
    coverage: float | None
    mean_se: float | None
    n_failed: int
    truth_qte: float
    truth_wqte: float


@dataclass
class BenchReport:
    scenario: str
    tau: float
    n: int
    r_total: int
    bootstrap_b: int
    seed: int
    methods: tuple[str, ...]
    truth: dict
    rows: list[BenchRow]
    warnings: list[str] = field(default_factory=list)
    runtime_seconds: float = 0.0  # in-memory only, never serialised

    def to_dict(self) -> dict:
        return {
            "schema_version": "1",
            "scenario": self.scenario,
            "tau": self.tau,
            "n": self.n,
            "R": self.r_total,
            "bootstrap_b": self.bootstrap_b,
            "seed": self.seed,
            "methods": list(self.methods),
            "truth": self.truth,
            "warnings": self.warnings,
            "rows": [{
                "method": row.method,
                "mse": row.mse,
                "abs_bias": row.abs_bias,
                "coverage": row.coverage,
                "mean_se": row.mean_se,
                "n_failed": row.n_failed,
                "truth_qte": row.truth_qte,
                "truth_wqte": row.truth_wqte,
            } for row in self.rows],
        }


def _fit_propensity(scenario: SimScenario, data: Dataset):
    if data.kind.tag == BINARY:
        return fit_logistic(data.covariates, data.exposure)
    if data.kind.tag == CATEGORICAL:
        return fit_multinomial(data.covariates, data.exposure)
    cuts, _ = bin_continuous(data.exposure, DEFAULT_BINS)
    return gps_from_normal_model(data.covariates, data.exposure, cuts)


def _method_points(scenario: SimScenario, data: Dataset, ps, method: str,
                   tau: float) -> dict[str, float]:
    """Label -> point for one method on one dataset (contrast labels for J=3)."""
    kind = data.kind.tag

    def split(estimates):
        return {f"{method}:{j + 2}v1": est.point for j, est in enumerate(estimates)}

    if method == "naive":
        est = naive_qr(data, tau)
        return split(est) if kind == CATEGORICAL else {method: est.point}
    if method == "true":
        est = true_covariate_qr(data, tau)
        return split(est) if kind == CATEGORICAL else {method: est.point}
    if kind == BINARY:
        if method == "psreg":
            if scenario.interaction:
                return {method: psreg_marginalized(data, ps, tau).point}
            return {method: psreg_homogeneous(data, ps, tau).point}
        if method == "ipw":
            return {method: ipw_qr(data, ps, tau).point}
        if method == "ow":
            return {method: ow_qr(data, ps, tau).point}
    elif kind == CATEGORICAL:
        return split(pairwise_qte(data, ps, tau, scheme=method))
    else:
        return {method: continuous_qte(data, ps, tau, scheme=method).point}
    raise ArgumentError(f"unknown method {method!r}")


def _labels_for(scenario: SimScenario, method: str) -> list[str]:
    if scenario.exposure_kind == "cat":
        return [f"{method}:2v1", f"{method}:3v1"]
    return [method]


def _truth_for_label(truth: dict, label: str) -> tuple[float, float]:
    qte, wqte = truth["qte"], truth["wqte_overlap"]
    if ":" in label:
        idx = 0 if label.endswith("2v1") else 1
        return float(qte[idx]), float(wqte[idx])
    return float(qte), float(wqte)


def _run_replication(scenario: SimScenario, methods, tau: float, seed: int, rep: int,
                     bootstrap_b: int, level: float):
    """One replication: points per label, plus CIs when bootstrapping."""
    data = gen_dataset(scenario, rng=substream(seed, _REP_NS, rep))
    points: dict[str, float] = {}
    failed: set[str] = set()

    def run_all(dataset: Dataset) -> dict[str, float]:
        ps = _fit_propensity(scenario, dataset)
        out = {}
        for method in methods:
            out.update(_method_points(scenario, dataset, ps, method, tau))
        return out

    try:
        points = run_all(data)
    except WqteError:
        # retry method by method so one failure does not void the others
        try:
            ps = _fit_propensity(scenario, data)
        except WqteError:
            return rep, {}, {}, set(methods), {}
        for method in methods:
            try:
                points.update(_method_points(scenario, data, ps, method, tau))
            except WqteError:
                failed.add(method)

    cis: dict[str, tuple[float, float]] = {}
    ses: dict[str, float] = {}
    if bootstrap_b > 0 and points:
        labels = sorted(points)

        def vector_estimator(dataset: Dataset) -> np.ndarray:
            values = run_all(dataset)
            return np.array([values[lab] for lab in labels])

        try:
            boot = bootstrap(vector_estimator, data, n_resamples=bootstrap_b,
                             level=level, seed=seed, seed_path=(_BOOT_NS, rep))
            for i, lab in enumerate(labels):
                cis[lab] = (float(boot.ci_lo[i]), float(boot.ci_hi[i]))
                ses[lab] = float(boot.se[i])
        except WqteError:
            pass  # points stand, intervals marked missing for this replication
    return rep, points, ses, failed, cis


def run_benchmark(scenario: SimScenario, methods, tau: float = 0.95,
                  n_replications: int = 200, seed: int = 0, bootstrap_b: int = 0,
                  level: float = 0.95, n_threads: int = 1) -> BenchReport:
    """Monte-Carlo comparison of the selected methods on one scenario.

    For each method the report carries MSE and absolute bias against the
    population-QTE truth; overlap weighting additionally gets a row
    (``ow@wqte``) measured against the overlap-population WQTE truth, its
    actual estimand. Coverage is bootstrap-percentile based and only
    computed when ``bootstrap_b`` > 0.
    """
    methods = tuple(methods)
    if not methods:
        raise UsageError("select at least one method")
    for m in methods:
        if m not in KNOWN_METHODS:
            raise UsageError(f"unknown method {m!r}; choose from {', '.join(KNOWN_METHODS)}")
    if "true" in methods and scenario.interaction:
        raise UsageError(
            "the true-covariate benchmark supports only the no-interaction presets"
        )
    if n_replications < 1:
        raise ArgumentError("at least one replication is required")
    truth = true_effects(scenario, tau)

    started = time.perf_counter()
    args = [(scenario, methods, tau, seed, rep, bootstrap_b, level)
            for rep in range(n_replications)]
    if n_threads > 1:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            results = list(pool.map(lambda a: _run_replication(*a), args))
    else:
        results = [_run_replication(*a) for a in args]
    results.sort(key=lambda item: item[0])

    label_points: dict[str, list[float]] = {}
    label_ses: dict[str, list[float]] = {}
    label_cover: dict[str, list[tuple[float, float]]] = {}
    label_failures: dict[str, int] = {}
    for method in methods:
        for label in _labels_for(scenario, method):
            label_points[label] = []
            label_ses[label] = []
            label_cover[label] = []
            label_failures[label] = 0

    for rep, points, ses, failed, cis in results:
        for label in label_points:
            method = label.split(":")[0]
            if method in failed or label not in points:
                label_failures[label] += 1
                continue
            label_points[label].append(points[label])
            if label in ses:
                label_ses[label].append(ses[label])
            if label in cis:
                label_cover[label].append(cis[label])

    rows: list[BenchRow] = []
    warnings: list[str] = []
    for label in label_points:
        truth_qte, truth_wqte = _truth_for_label(truth, label)
        targets = [(label, truth_qte)]
        if label.split(":")[0] == "ow":
            targets.append((label.replace("ow", "ow@wqte", 1), truth_wqte))
        pts = np.asarray(label_points[label])
        n_failed = label_failures[label]
        if n_failed > _FAILURE_FLAG_FRACTION * n_replications:
            warnings.append(f"{label}: {n_failed}/{n_replications} replications failed")
        for row_label, target in targets:
            if pts.size == 0:
                rows.append(BenchRow(method=row_label, mse=float("nan"),
                                     abs_bias=float("nan"), coverage=None,
                                     mean_se=None, n_failed=n_failed,
                                     truth_qte=truth_qte, truth_wqte=truth_wqte))
                continue
            mse = float(np.mean((pts - target) ** 2))
            abs_bias = float(abs(pts.mean() - target))
            coverage = None
            mean_se = None
            if bootstrap_b > 0:
                intervals = label_cover[label]
                if intervals:
                    coverage = float(np.mean([lo <= target <= hi
                                              for lo, hi in intervals]))
                if label_ses[label]:
                    mean_se = float(np.mean(label_ses[label]))
            rows.append(BenchRow(method=row_label, mse=mse, abs_bias=abs_bias,
                                 coverage=coverage, mean_se=mean_se,
                                 n_failed=n_failed, truth_qte=truth_qte,
                                 truth_wqte=truth_wqte))

    rows.sort(key=lambda row: row.method)
    return BenchReport(scenario=scenario.key, tau=tau, n=scenario.n,
                       r_total=n_replications, bootstrap_b=bootstrap_b, seed=seed,
                       methods=methods, truth={k: truth[k] for k in
                                               ("qte", "wqte_overlap", "method")},
                       rows=rows, warnings=warnings,
                       runtime_seconds=time.perf_counter() - started)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def emit_report(report: BenchReport, path, fmt: str = "csv") -> None:
    """Write the report as csv, json, or a fixed-width text table."""
    if fmt == "csv":
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_COLUMNS)
            for row in report.rows:
                writer.writerow([
                    report.scenario, row.method, _fmt(row.mse), _fmt(row.abs_bias),
                    _fmt(row.coverage), _fmt(row.mean_se), str(report.r_total),
                    _fmt(row.truth_qte), _fmt(row.truth_wqte),
                ])
    elif fmt == "json":
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(report.to_dict(), fh, sort_keys=True, indent=2)
            fh.write("\n")
    elif fmt == "text-table":
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(render_text_table(report))
    else:
        raise UsageError(f"unknown report format {fmt!r}")


def render_text_table(report: BenchReport) -> str:
    lines = [
        f"scenario: {report.scenario}  tau={report.tau:g}  "
        f"R={report.r_total}  n={report.n}  B={report.bootstrap_b}",
        f"truth: qte={report.truth['qte']}  wqte_overlap={report.truth['wqte_overlap']}",
        "",
        f"{'method':<16}{'mse':>10}{'|bias|':>10}{'coverage':>10}{'mean_se':>10}"
        f"{'failed':>8}",
    ]
    for row in report.rows:
        cov = "" if row.coverage is None else f"{row.coverage:.3f}"
        mse_txt = f"{row.mse:.4f}" if np.isfinite(row.mse) else "nan"
        bias_txt = f"{row.abs_bias:.4f}" if np.isfinite(row.abs_bias) else "nan"
        se = "" if row.mean_se is None else f"{row.mean_se:.4f}"
        lines.append(f"{row.method:<16}{mse_txt:>10}{bias_txt:>10}{cov:>10}{se:>10}"
                     f"{row.n_failed:>8}")
    for warning in report.warnings:
        lines.append(f"warning: {warning}")
    return "\n".join(lines) + "\n"


def write_manifest(report: BenchReport, path, config: dict | None = None) -> None:
    """Reproduction manifest: everything needed to regenerate the report."""
    payload = {
        "schema_version": "1",
        "package_version": __version__,
        "scenario": report.scenario,
        "tau": report.tau,
        "n": report.n,
        "R": report.r_total,
        "bootstrap_b": report.bootstrap_b,
        "seed": report.seed,
        "methods": list(report.methods),
        "truth": report.truth,
    }
    if config:
        payload["config"] = config
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")


def load_report_csv(path) -> list[dict]:
    """Re-parse an emitted CSV report (round-trip check and downstream use)."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        rows = []
        for record in reader:
            parsed = dict(record)
            for key in ("mse", "abs_bias", "coverage", "mean_se",
                        "truth_qte", "truth_wqte"):
                parsed[key] = float(record[key]) if record[key] else None
            parsed["R"] = int(record["R"])
            rows.append(parsed)
        return rows


def scenario_at_scale(key_or_scenario, n: int, seed: int = 0) -> SimScenario:
    """Scenario with the harness-facing n/seed applied."""
    from .simlab import parse_scenario

    if isinstance(key_or_scenario, SimScenario):
        return scenario_with(key_or_scenario, n=n, seed=seed)
    return scenario_with(parse_scenario(key_or_scenario), n=n, seed=seed)
