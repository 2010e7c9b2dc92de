"""Standard errors and confidence intervals.

Two routes: a nonparametric row-resampling bootstrap (the default for
reported intervals) and the plug-in asymptotic variance of the two-step
weighted estimator, built from per-unit influence values.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .balance import TiltingSpec, make_weights_binary
from .data import BINARY, Dataset
from .errors import (
    ArgumentError,
    InstabilityError,
    VarianceUndefinedError,
    WqteError,
)
from .estimators import QteEstimate, _binary_scores
from .propensity import fit_logistic
from .quantreg import weighted_quantile
from .rngs import substream

DEFAULT_BOOTSTRAP_ANALYSIS = 500   # data-analysis default
DEFAULT_BOOTSTRAP_BENCH = 200      # inside benchmark loops
_MAX_FAILURE_FRACTION = 0.05


@dataclass(frozen=True)
class BootstrapResult:
    """Bootstrap spread of an estimator (scalar or vector-valued)."""

    point: np.ndarray          # full-sample estimate(s)
    se: np.ndarray
    ci_lo: np.ndarray
    ci_hi: np.ndarray
    level: float
    n_resamples: int
    n_failed: int
    method: str                # "percentile" | "normal"

    def scalar_ci(self, index: int = 0) -> tuple[float, float, float]:
        return (float(self.ci_lo[index]), float(self.ci_hi[index]), self.level)


def bootstrap(estimator, data: Dataset, n_resamples: int = DEFAULT_BOOTSTRAP_ANALYSIS,
              level: float = 0.95, seed: int = 0, seed_path: tuple[int, ...] = (),
              ci_method: str = "percentile") -> BootstrapResult:
    """Resample rows with replacement and rerun the full estimation pipeline.

    ``estimator`` maps a Dataset to a float or a 1-d array (so one resample
    pass can serve several estimates at once); any model fitting it does,
    e.g. the propensity fit, is repeated inside each resample. Resamples
    where the estimator raises a package error (a resample can lose an
    exposure level) are dropped and counted; more than 5% failures aborts
    with :class:`InstabilityError`.

    Resample ``b`` draws its rows from substream ``(seed, *seed_path, b)``,
    so results are reproducible bit for bit and independent of execution
    order; callers running many bootstraps under one master seed pass a
    distinct ``seed_path`` per run.
    """
    if n_resamples < 50:
        raise ArgumentError("at least 50 bootstrap resamples are required")
    if not 0.0 < level < 1.0:
        raise ArgumentError("confidence level must lie in (0, 1)")
    if ci_method not in ("percentile", "normal"):
        raise ArgumentError(f"unknown CI method {ci_method!r}")

    point = np.atleast_1d(np.asarray(estimator(data), dtype=float))
    draws = []
    n_failed = 0
    for b in range(n_resamples):
        rng = substream(seed, *seed_path, b)
        idx = rng.integers(0, data.n, size=data.n)
        try:
            draws.append(np.atleast_1d(np.asarray(estimator(data.take(idx)), dtype=float)))
        except WqteError:
            n_failed += 1
    if n_failed > _MAX_FAILURE_FRACTION * n_resamples:
        raise InstabilityError(
            f"{n_failed}/{n_resamples} bootstrap resamples failed; "
            "estimates are unstable on this sample"
        )
    stack = np.vstack(draws)
    se = np.std(stack, axis=0, ddof=1)
    alpha = 1.0 - level
    if ci_method == "percentile":
        ci_lo = np.quantile(stack, alpha / 2.0, axis=0)
        ci_hi = np.quantile(stack, 1.0 - alpha / 2.0, axis=0)
    else:
        from scipy.stats import norm
        zcrit = norm.ppf(1.0 - alpha / 2.0)
        ci_lo = point - zcrit * se
        ci_hi = point + zcrit * se
    return BootstrapResult(point=point, se=se, ci_lo=ci_lo, ci_hi=ci_hi, level=level,
                           n_resamples=n_resamples, n_failed=n_failed, method=ci_method)


def attach_bootstrap(estimate: QteEstimate, result: BootstrapResult,
                     index: int = 0) -> QteEstimate:
    estimate.se = float(result.se[index])
    estimate.ci = result.scalar_ci(index)
    return estimate


@dataclass(frozen=True)
class VarianceComponents:
    """Pieces of the plug-in asymptotic variance of the two-step estimator."""

    q0: float
    q1: float
    density_terms: tuple[float, float]   # E[f_{Y(j)|X}(q_j | X) g(X)] estimates, j = 0, 1
    psi0: np.ndarray
    psi1: np.ndarray
    v_tau: float
    se: float


def _silverman_bandwidth(y: np.ndarray, w: np.ndarray) -> float:
    """0.9 * min(sd, iqr/1.34) * ess^(-1/5) on the weighted sample."""
    total = float(w.sum())
    mean = float(np.dot(w, y) / total)
    sd = float(np.sqrt(np.dot(w, (y - mean) ** 2) / total))
    iqr = weighted_quantile(y, w, 0.75) - weighted_quantile(y, w, 0.25)
    ess = total**2 / float(np.dot(w, w))
    spread = min(sd, iqr / 1.34) if iqr > 0 else sd
    if spread <= 0:
        raise VarianceUndefinedError("degenerate outcome spread; use the bootstrap")
    return 0.9 * spread * ess ** (-0.2)


def _weighted_kde_at(y: np.ndarray, w: np.ndarray, at: float, n: int,
                     bandwidth: float | None) -> float:
    h = _silverman_bandwidth(y, w) if bandwidth is None else float(bandwidth)
    kernel = np.exp(-0.5 * ((y - at) / h) ** 2) / (h * np.sqrt(2.0 * np.pi))
    return float(np.dot(w, kernel) / n)


def _conditional_exceedance(X, arm_mask, indicator) -> np.ndarray:
    """E[1{Y <= q} | X, Z = j] on all units, from a within-arm logistic fit.

    A one-class indicator short-circuits to its constant; separation falls
    back to a lightly ridged refit (the indicator surface can be steep at
    extreme quantile levels).
    """
    from .errors import DegenerateExposureError, SeparationError

    if indicator.min() == indicator.max():
        return np.full(X.shape[0], float(indicator[0]))
    try:
        model = fit_logistic(X[arm_mask], indicator)
    except (SeparationError, DegenerateExposureError):
        model = fit_logistic(X[arm_mask], indicator, ridge=1e-6)
    return model.predict_scores(X)[:, 1]


def plugin_variance(data: Dataset, ps, g: TiltingSpec, two_step: QteEstimate,
                    tau: float, bandwidth: float | None = None) -> VarianceComponents:
    """Plug-in asymptotic variance of the two-step weighted QTE estimator.

    Influence values combine the reweighted quantile exceedances with an
    augmentation term driven by the estimated conditional exceedance
    probabilities; the density functionals in the denominators come from a
    weighted Gaussian KDE of the within-arm outcomes at the estimated arm
    quantiles (Silverman bandwidth on the weighted sample unless given).
    """
    if data.kind.tag != BINARY:
        raise ArgumentError("the plug-in variance applies to binary exposures")
    if two_step.arm_quantiles is None:
        raise ArgumentError("two-step arm quantiles are required")
    q0, q1 = two_step.arm_quantiles
    e = _binary_scores(ps, data.n)
    z = data.exposure
    y = data.y
    X = data.covariates
    gv = g.values(e, X)
    n = data.n

    d1 = (y <= q1).astype(float) - tau
    d0 = (y <= q0).astype(float) - tau

    # E[D_j | X, Z=j] on every unit, from within-arm main-effects logistic fits.
    m1, m0 = z == 1.0, z == 0.0
    cond1 = _conditional_exceedance(X, m1, (y[m1] <= q1).astype(float)) - tau
    cond0 = _conditional_exceedance(X, m0, (y[m0] <= q0).astype(float)) - tau

    psi1 = gv * z / e * d1 - gv * (z - e) / e * cond1
    psi0 = gv * (1.0 - z) / (1.0 - e) * d0 + gv * (z - e) / (1.0 - e) * cond0

    wv = make_weights_binary(e, z, g, X)
    den1 = _weighted_kde_at(y[m1], wv.w1[m1], q1, n, bandwidth)
    den0 = _weighted_kde_at(y[m0], wv.w0[m0], q0, n, bandwidth)
    if den0 <= 0.0 or den1 <= 0.0:
        raise VarianceUndefinedError(
            "zero density estimate at an arm quantile; use the bootstrap"
        )
    v_tau = float(np.mean((psi0 / den0 - psi1 / den1) ** 2))
    return VarianceComponents(q0=q0, q1=q1, density_terms=(den0, den1),
                              psi0=psi0, psi1=psi1, v_tau=v_tau,
                              se=float(np.sqrt(v_tau / n)))


def plugin_ci(estimate: QteEstimate, components: VarianceComponents,
              level: float = 0.95) -> QteEstimate:
    """Normal-approximation CI from the plug-in variance."""
    from scipy.stats import norm

    zcrit = norm.ppf(1.0 - (1.0 - level) / 2.0)
    estimate.se = components.se
    estimate.ci = (estimate.point - zcrit * components.se,
                   estimate.point + zcrit * components.se, level)
    return estimate
