"""Command-line entry point: simulate, estimate, bench, balance.

Every run writes a manifest JSON (config + seed + package version) next to
its output, sufficient to reproduce the output bit for bit. Flags override
config-file values, which override built-in defaults. All randomness flows
from a single ``--seed``; when absent, a seed is drawn from OS entropy and
recorded in the manifest.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys

import numpy as np

from . import __version__
from .balance import TiltingSpec, balance_table, make_weights_binary
from .bench import emit_report, run_benchmark, write_manifest
from .data import BINARY, CATEGORICAL, CONTINUOUS, ColumnSchema, load_csv, write_csv
from .errors import UsageError, WqteError
from .estimators import (
    QteEstimate,
    continuous_qte,
    ipw_qr,
    naive_qr,
    ow_qr,
    pairwise_qte,
    psreg_homogeneous,
    psreg_marginalized,
)
from .inference import DEFAULT_BOOTSTRAP_ANALYSIS, attach_bootstrap, bootstrap
from .propensity import (
    DEFAULT_BINS,
    DEFAULT_CLIP,
    bin_continuous,
    fit_logistic,
    fit_multinomial,
    fit_multinomial_on_bins,
    gps_from_normal_model,
)
from .rngs import entropy_seed
from .simlab import parse_scenario, scenario_with, true_effects

ESTIMATE_METHODS = ("psreg", "ipw", "ow", "naive")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wqte",
        description="Quantile exposure effects via propensity-score balancing weights",
    )
    parser.add_argument("--version", action="version", version=f"wqte {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file (flags take precedence)")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--out", "-o", default=None, help="output file path")

    p = sub.add_parser("simulate", parents=[common],
                       help="generate a dataset from a named scenario")
    p.add_argument("--scenario", default=None)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--tau", default=None, help="level(s) recorded in the manifest")

    p = sub.add_parser("estimate", parents=[common],
                       help="estimate quantile exposure effects from a CSV file")
    p.add_argument("--input", default=None)
    p.add_argument("--outcome-col", default=None)
    p.add_argument("--exposure-col", default=None)
    p.add_argument("--exposure-kind", choices=(BINARY, CATEGORICAL, CONTINUOUS),
                   default=None)
    p.add_argument("--confounders", default=None, help="comma-separated column names")
    p.add_argument("--log10", default=None, help="columns to log10-transform")
    p.add_argument("--ln", default=None, help="columns to ln-transform")
    p.add_argument("--tau", default=None, help="comma-separated levels in (0,1)")
    p.add_argument("--methods", default=None, help=f"subset of {','.join(ESTIMATE_METHODS)}")
    p.add_argument("--tilting", default=None,
                   help="tilt for the two-step estimator diagnostics (uniform|overlap)")
    p.add_argument("--bins", type=int, default=None, help="continuous-exposure bin count")
    p.add_argument("--gps", choices=("normal", "multinomial"), default=None,
                   help="generalized-PS model for a binned continuous exposure")
    p.add_argument("--clip", default=None, help="PS clip bounds, e.g. 0.001,0.999")
    p.add_argument("--b", type=int, default=None, help="bootstrap resamples")
    p.add_argument("--ci", choices=("percentile", "normal"), default=None)
    p.add_argument("--level", type=float, default=None)
    p.add_argument("--assume-heterogeneous", action="store_true", default=None)
    p.add_argument("--format", choices=("csv", "json"), default=None)

    p = sub.add_parser("bench", parents=[common],
                       help="replicate a scenario and report MSE/bias/coverage")
    p.add_argument("--scenario", default=None)
    p.add_argument("--methods", default=None)
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--r", type=int, default=None, help="replication count")
    p.add_argument("--n", type=int, default=None, help="per-replication sample size")
    p.add_argument("--b", type=int, default=None, help="bootstrap resamples (0 = none)")
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--format", choices=("csv", "json", "text-table"), default=None)

    p = sub.add_parser("balance", parents=[common],
                       help="weighted covariate-balance diagnostics for a CSV file")
    p.add_argument("--input", default=None)
    p.add_argument("--outcome-col", default=None)
    p.add_argument("--exposure-col", default=None)
    p.add_argument("--confounders", default=None)
    p.add_argument("--log10", default=None)
    p.add_argument("--ln", default=None)
    p.add_argument("--scheme", choices=("ipw", "ow", "treated", "untreated"),
                   default=None)
    p.add_argument("--clip", default=None)
    p.add_argument("--format", choices=("csv", "json"), default=None)
    return parser


def _merge_config(args: argparse.Namespace, defaults: dict) -> dict:
    """defaults < config file < command-line flags."""
    cfg = dict(defaults)
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                file_cfg = json.load(fh)
        except FileNotFoundError:
            raise UsageError(f"config file not found: {args.config}") from None
        except json.JSONDecodeError as exc:
            raise UsageError(f"config file is not valid JSON: {exc}") from None
        unknown = set(file_cfg) - set(defaults)
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
        cfg.update(file_cfg)
    for key in defaults:
        flag = getattr(args, key, None)
        if flag is not None:
            cfg[key] = flag
    return cfg


def _require(cfg: dict, *keys: str) -> None:
    missing = [k for k in keys if cfg.get(k) in (None, "")]
    if missing:
        raise UsageError(f"missing required option(s): {', '.join('--' + k.replace('_', '-') for k in missing)}")


def _split(value) -> tuple[str, ...]:
    if value is None or value == "":
        return ()
    if isinstance(value, (list, tuple)):
        return tuple(value)
    return tuple(s.strip() for s in str(value).split(",") if s.strip())


def _parse_taus(value) -> list[float]:
    taus = []
    for part in _split(value) or ("0.95",):
        tau = float(part)
        if not 0.0 < tau < 1.0:
            raise UsageError(f"tau must lie in (0, 1), got {tau}")
        taus.append(tau)
    return taus


def _parse_clip(value) -> tuple[float, float]:
    if value is None:
        return DEFAULT_CLIP
    parts = _split(value)
    if len(parts) != 2:
        raise UsageError("clip bounds must be two comma-separated numbers")
    return float(parts[0]), float(parts[1])


def _resolve_seed(cfg: dict) -> int:
    if cfg.get("seed") is None:
        cfg["seed"] = entropy_seed()
    return int(cfg["seed"])


def _write_manifest_file(path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _manifest(command: str, cfg: dict, extra: dict | None = None) -> dict:
    payload = {
        "schema_version": "1",
        "package_version": __version__,
        "command": command,
        "config": {k: v for k, v in sorted(cfg.items())},
    }
    if extra:
        payload.update(extra)
    return payload


def cmd_simulate(args) -> int:
    defaults = {"scenario": None, "n": 2000, "seed": None, "out": None, "tau": "0.95"}
    cfg = _merge_config(args, defaults)
    _require(cfg, "scenario", "out")
    seed = _resolve_seed(cfg)
    scenario = scenario_with(parse_scenario(str(cfg["scenario"])),
                             n=int(cfg["n"]), seed=seed)
    from .simlab import gen_dataset

    data = gen_dataset(scenario)
    write_csv(data, cfg["out"])
    truths = {f"tau={tau:g}": true_effects(scenario, tau) for tau in _parse_taus(cfg["tau"])}
    _write_manifest_file(f"{cfg['out']}.manifest.json",
                         _manifest("simulate", cfg, {"seed": seed, "truth": truths}))
    print(f"wrote {data.n} rows to {cfg['out']}")
    return 0


def _load_input(cfg: dict, exposure_kind: str):
    schema = ColumnSchema(
        outcome=str(cfg["outcome_col"]),
        exposure=str(cfg["exposure_col"]),
        covariates=_split(cfg.get("confounders")),
        exposure_kind=exposure_kind,
    )
    transforms = {}
    for col in _split(cfg.get("log10")):
        transforms[col] = "log10"
    for col in _split(cfg.get("ln")):
        if col in transforms:
            raise UsageError(f"column {col!r} listed under both --log10 and --ln")
        transforms[col] = "ln"
    return load_csv(cfg["input"], schema, transforms)


def _fit_ps_for_estimate(data, cfg: dict):
    clip = _parse_clip(cfg.get("clip"))
    if data.kind.tag == BINARY:
        return fit_logistic(data.covariates, data.exposure, clip_bounds=clip)
    if data.kind.tag == CATEGORICAL:
        return fit_multinomial(data.covariates, data.exposure, clip_bounds=clip)
    cuts, labels = bin_continuous(data.exposure, int(cfg.get("bins") or DEFAULT_BINS))
    if (cfg.get("gps") or "normal") == "normal":
        return gps_from_normal_model(data.covariates, data.exposure, cuts,
                                     clip_bounds=clip)
    return fit_multinomial_on_bins(data.covariates, labels, cut_points=cuts,
                                   clip_bounds=clip)


def _estimate_once(data, ps, method: str, tau: float, heterogeneous: bool):
    """One method at one tau; returns a list (categorical contrasts expand)."""
    kind = data.kind.tag
    if method == "naive":
        est = naive_qr(data, tau)
        return est if isinstance(est, list) else [est]
    if kind == BINARY:
        if method == "psreg":
            if heterogeneous:
                return [psreg_marginalized(data, ps, tau)]
            return [psreg_homogeneous(data, ps, tau)]
        if method == "ipw":
            return [ipw_qr(data, ps, tau)]
        if method == "ow":
            return [ow_qr(data, ps, tau, assume_homogeneous=not heterogeneous)]
    elif kind == CATEGORICAL:
        return pairwise_qte(data, ps, tau, scheme=method)
    else:
        return [continuous_qte(data, ps, tau, scheme=method)]
    raise UsageError(f"unknown method {method!r}")


def cmd_estimate(args) -> int:
    defaults = {
        "input": None, "outcome_col": None, "exposure_col": None,
        "exposure_kind": CONTINUOUS, "confounders": None, "log10": None, "ln": None,
        "tau": "0.95", "methods": "psreg,ipw,ow", "tilting": None,
        "bins": DEFAULT_BINS, "gps": "normal", "clip": None,
        "b": DEFAULT_BOOTSTRAP_ANALYSIS, "ci": "percentile", "level": 0.95,
        "assume_heterogeneous": False, "format": "csv", "seed": None, "out": None,
    }
    cfg = _merge_config(args, defaults)
    _require(cfg, "input", "outcome_col", "exposure_col", "out")
    seed = _resolve_seed(cfg)
    methods = _split(cfg["methods"])
    for m in methods:
        if m not in ESTIMATE_METHODS:
            raise UsageError(f"unknown method {m!r}; choose from {', '.join(ESTIMATE_METHODS)}")
    heterogeneous = bool(cfg["assume_heterogeneous"])
    if heterogeneous and "ow" in methods:
        print("warning: with --assume-heterogeneous the overlap-weighting estimand "
              "is the overlap-population WQTE, not the population QTE", file=sys.stderr)
    taus = _parse_taus(cfg["tau"])
    level = float(cfg["level"])

    data, report = _load_input(cfg, str(cfg["exposure_kind"]))
    ps = _fit_ps_for_estimate(data, cfg)

    estimates: list[QteEstimate] = []
    for tau in taus:
        base = []
        for method in methods:
            base.extend(_estimate_once(data, ps, method, tau, heterogeneous))
        n_boot = int(cfg["b"])
        if n_boot > 0:
            def vector_estimator(dataset, _tau=tau):
                ps_b = _fit_ps_for_estimate(dataset, cfg)
                points = []
                for method in methods:
                    points.extend(e.point for e in
                                  _estimate_once(dataset, ps_b, method, _tau,
                                                 heterogeneous))
                return np.asarray(points)

            boot = bootstrap(vector_estimator, data, n_resamples=n_boot, level=level,
                             seed=seed, seed_path=(3, int(round(tau * 10_000))),
                             ci_method=str(cfg["ci"]))
            for i, est in enumerate(base):
                attach_bootstrap(est, boot, i)
        estimates.extend(base)

    if cfg["format"] == "json":
        with open(cfg["out"], "w", encoding="utf-8") as fh:
            json.dump([e.to_dict() for e in estimates], fh, sort_keys=True, indent=2)
            fh.write("\n")
    else:
        with open(cfg["out"], "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(QteEstimate.CSV_HEADER)
            for est in estimates:
                writer.writerow(est.to_csv_row())
    _write_manifest_file(f"{cfg['out']}.manifest.json",
                         _manifest("estimate", cfg,
                                   {"seed": seed, "load_report": report.__dict__}))
    for est in estimates:
        ci_txt = "" if est.ci is None else f"  CI=({est.ci[0]:.4g}, {est.ci[1]:.4g})"
        se_txt = "" if est.se is None else f"  SE={est.se:.4g}"
        print(f"{est.method:<20} tau={est.tau:g}  estimate={est.point:.6g}{se_txt}{ci_txt}")
    return 0


def cmd_bench(args) -> int:
    defaults = {
        "scenario": None, "methods": "psreg,ipw,ow,naive", "tau": 0.95, "r": 200,
        "n": 2000, "b": 0, "threads": 1, "format": "csv", "seed": None, "out": None,
    }
    cfg = _merge_config(args, defaults)
    _require(cfg, "scenario", "out")
    seed = _resolve_seed(cfg)
    scenario = scenario_with(parse_scenario(str(cfg["scenario"])),
                             n=int(cfg["n"]), seed=seed)
    report = run_benchmark(scenario, _split(cfg["methods"]), tau=float(cfg["tau"]),
                           n_replications=int(cfg["r"]), seed=seed,
                           bootstrap_b=int(cfg["b"]), n_threads=int(cfg["threads"]))
    emit_report(report, cfg["out"], str(cfg["format"]))
    write_manifest(report, f"{cfg['out']}.manifest.json",
                   config={k: v for k, v in sorted(cfg.items())})
    print(f"wrote {cfg['out']} ({len(report.rows)} rows, "
          f"{report.runtime_seconds:.1f}s)", file=sys.stderr)
    return 0


def cmd_balance(args) -> int:
    defaults = {
        "input": None, "outcome_col": None, "exposure_col": None, "confounders": None,
        "log10": None, "ln": None, "scheme": "ipw", "clip": None, "format": "csv",
        "seed": None, "out": None,
    }
    cfg = _merge_config(args, defaults)
    _require(cfg, "input", "outcome_col", "exposure_col", "confounders", "out")
    seed = _resolve_seed(cfg)
    data, report = _load_input(cfg, BINARY)
    ps = fit_logistic(data.covariates, data.exposure,
                      clip_bounds=_parse_clip(cfg.get("clip")))
    tilts = {"ipw": TiltingSpec.uniform(), "ow": TiltingSpec.overlap(),
             "treated": TiltingSpec.treated(), "untreated": TiltingSpec.untreated()}
    weights = make_weights_binary(ps, data.exposure, tilts[str(cfg["scheme"])])
    rows = balance_table(data.covariates, data.exposure, weights, data.column_names)
    if cfg["format"] == "json":
        with open(cfg["out"], "w", encoding="utf-8") as fh:
            json.dump([row.__dict__ for row in rows], fh, sort_keys=True, indent=2)
            fh.write("\n")
    else:
        with open(cfg["out"], "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["covariate", "smd_weighted", "smd_unweighted", "degenerate"])
            for row in rows:
                writer.writerow([row.covariate, format(row.smd_weighted, ".17g"),
                                 format(row.smd_unweighted, ".17g"),
                                 str(row.degenerate).lower()])
    _write_manifest_file(f"{cfg['out']}.manifest.json",
                         _manifest("balance", cfg,
                                   {"seed": seed, "load_report": report.__dict__}))
    for row in rows:
        print(f"{row.covariate:<16} smd_weighted={row.smd_weighted:+.4f} "
              f"smd_unweighted={row.smd_unweighted:+.4f}")
    return 0


_COMMANDS = {
    "simulate": cmd_simulate,
    "estimate": cmd_estimate,
    "bench": cmd_bench,
    "balance": cmd_balance,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except WqteError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
