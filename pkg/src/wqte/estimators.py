"""Point estimators for population and weighted quantile exposure effects.

Every estimator is a deterministic function of (data, propensity scores,
config). Binary-exposure estimators accept either a fitted
:class:`~wqte.propensity.PropensityModel` or a raw score vector, so the
same code paths run with true simulation propensities.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .balance import (
    GENERALIZED_IPW,
    GENERALIZED_OW,
    TiltingSpec,
    make_weights_binary,
    make_weights_categorical,
)
from .data import BINARY, CATEGORICAL, CONTINUOUS, Dataset
from .errors import ArgumentError, InversionError, SingularDesignError
from .propensity import PropensityModel, bin_labels_for
from .quantreg import fit_weighted_qr, weighted_quantile

DEFAULT_MARGINAL_TAUS = 199       # tau_k = k/(K+1), k = 1..K
DEFAULT_Y_GRID_POINTS = 401
_Y_GRID_LO_PAD = 0.05             # fraction of range(y) below min(y)
_Y_GRID_HI_PAD = 0.25             # extra headroom above max(y) for heavy right tails


@dataclass
class QteEstimate:
    """A single quantile-effect estimate with optional inference fields."""

    tau: float
    estimand: str
    method: str
    point: float
    arm_quantiles: tuple[float, float] | None = None
    se: float | None = None
    ci: tuple[float, float, float] | None = None  # (lo, hi, level)
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "estimand": self.estimand,
            "tau": self.tau,
            "point": self.point,
            "se": self.se,
            "ci_lo": None if self.ci is None else self.ci[0],
            "ci_hi": None if self.ci is None else self.ci[1],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    CSV_HEADER = ("method", "estimand", "tau", "point", "se", "ci_lo", "ci_hi")

    def to_csv_row(self) -> list[str]:
        d = self.to_dict()
        return ["" if d[k] is None else format(d[k], ".17g") if isinstance(d[k], float)
                else str(d[k]) for k in self.CSV_HEADER]


def _binary_scores(ps, n: int) -> np.ndarray:
    if isinstance(ps, PropensityModel):
        e = ps.binary_scores()
    else:
        e = np.asarray(ps, dtype=float).ravel()
    if e.shape[0] != n:
        raise ArgumentError("propensity scores and data length differ")
    return e


def _score_matrix(ps, n: int) -> np.ndarray:
    scores = ps.scores if isinstance(ps, PropensityModel) else np.asarray(ps, dtype=float)
    if scores.ndim != 2 or scores.shape[0] != n:
        raise ArgumentError("generalized propensity scores must be an (n, J) matrix")
    return scores


def _require_kind(data: Dataset, tag: str, what: str):
    if data.kind.tag != tag:
        raise ArgumentError(f"{what} requires a {tag} exposure, got {data.kind.tag}")


def _prune_collinear(design: np.ndarray, protected: int) -> tuple[np.ndarray, np.ndarray]:
    """Drop columns that are linear combinations of earlier ones.

    The first ``protected`` columns must stay; if one of them is dependent
    the design is unusable for the requested contrast.
    """
    n, k = design.shape
    basis: list[np.ndarray] = []
    keep = []
    for j in range(k):
        col = design[:, j]
        v = col.astype(float).copy()
        for b in basis:
            v -= np.dot(b, v) * b
        nrm = np.linalg.norm(v)
        # Threshold sits well above the solver's rank tolerance: a column
        # this close to the span of its predecessors carries no usable
        # signal and only destabilises the fit.
        if nrm > 1e-4 * max(1.0, np.linalg.norm(col)):
            basis.append(v / nrm)
            keep.append(j)
        elif j < protected:
            raise SingularDesignError(
                "intercept or exposure column is collinear; contrast not identified"
            )
        else:
            warnings.warn(f"dropping collinear design column {j}", stacklevel=3)
    return design[:, keep], np.asarray(keep, dtype=int)


def wqte_two_step(data: Dataset, ps, g: TiltingSpec, tau: float) -> QteEstimate:
    """Two-step weighted QTE: weighted arm quantiles under tilt g, differenced."""
    _require_kind(data, BINARY, "the two-step weighted estimator")
    e = _binary_scores(ps, data.n)
    wv = make_weights_binary(e, data.exposure, g, data.covariates)
    q1 = weighted_quantile(data.y, wv.w1, tau)
    q0 = weighted_quantile(data.y, wv.w0, tau)
    estimand = "population_qte" if g.name == "uniform" else f"wqte({g.name})"
    return QteEstimate(tau=tau, estimand=estimand, method="two_step_wqte",
                       point=q1 - q0, arm_quantiles=(q0, q1))


def _binary_weighted_qr(data: Dataset, weights: np.ndarray, tau: float):
    design = np.column_stack([np.ones(data.n), data.exposure])
    fit = fit_weighted_qr(design, data.y, weights, tau)
    q0 = float(fit.beta[0])
    q1 = float(fit.beta[0] + fit.beta[1])
    return float(fit.beta[1]), (q0, q1), fit


def ipw_qr(data: Dataset, ps, tau: float) -> QteEstimate:
    """Inverse-probability-weighted quantile regression of y on (1, z)."""
    _require_kind(data, BINARY, "IPW quantile regression")
    e = _binary_scores(ps, data.n)
    wv = make_weights_binary(e, data.exposure, TiltingSpec.uniform())
    point, arms, fit = _binary_weighted_qr(data, wv.w1 + wv.w0, tau)
    return QteEstimate(tau=tau, estimand="population_qte", method="ipw_qr",
                       point=point, arm_quantiles=arms,
                       diagnostics={"converged": fit.converged})


def ow_qr(data: Dataset, ps, tau: float, assume_homogeneous: bool = True) -> QteEstimate:
    """Overlap-weighted quantile regression of y on (1, z).

    The estimand is the overlap-population WQTE; under a homogeneous
    conditional effect (the caller's declaration) it coincides with the
    population QTE.
    """
    _require_kind(data, BINARY, "overlap-weighted quantile regression")
    e = _binary_scores(ps, data.n)
    wv = make_weights_binary(e, data.exposure, TiltingSpec.overlap())
    point, arms, fit = _binary_weighted_qr(data, wv.w1 + wv.w0, tau)
    return QteEstimate(tau=tau, estimand="wqte(overlap)", method="ow_qr",
                       point=point, arm_quantiles=arms,
                       diagnostics={"converged": fit.converged,
                                    "assume_homogeneous": assume_homogeneous})


def psreg_homogeneous(data: Dataset, ps, tau: float,
                      include_interaction: bool = False) -> QteEstimate:
    """Propensity-score quantile regression; the exposure coefficient is the effect.

    Design (1, z, z*e, e) with the interaction flag, else (1, z, e). The
    interaction coefficient is surfaced as a homogeneity diagnostic.
    """
    _require_kind(data, BINARY, "propensity-score regression")
    e = _binary_scores(ps, data.n)
    z = data.exposure
    if include_interaction:
        design = np.column_stack([np.ones(data.n), z, z * e, e])
    else:
        design = np.column_stack([np.ones(data.n), z, e])
    pruned, kept = _prune_collinear(design, protected=2)
    fit = fit_weighted_qr(pruned, data.y, None, tau)
    diagnostics = {"converged": fit.converged}
    if include_interaction and 2 in kept:
        diagnostics["beta_interaction"] = float(fit.beta[list(kept).index(2)])
    return QteEstimate(tau=tau, estimand="population_qte", method="psreg_homogeneous",
                       point=float(fit.beta[1]), diagnostics=diagnostics)


def _marginal_tau_grid(n_taus: int) -> np.ndarray:
    return np.arange(1, n_taus + 1) / (n_taus + 1.0)


def default_y_grid(y: np.ndarray, n_points: int = DEFAULT_Y_GRID_POINTS) -> np.ndarray:
    lo, hi = float(np.min(y)), float(np.max(y))
    rng = hi - lo
    return np.linspace(lo - _Y_GRID_LO_PAD * rng, hi + _Y_GRID_HI_PAD * rng, n_points)


def psreg_marginalized(data: Dataset, ps, tau: float,
                       n_taus: int = DEFAULT_MARGINAL_TAUS,
                       y_grid=None) -> QteEstimate:
    """Population QTE from PS regression with the score integrated out.

    Fits the interaction PS-regression at a grid of quantile levels, turns
    the fitted conditional quantile curves into conditional CDF estimates
    by indicator averaging over the level grid (with a monotone
    rearrangement per unit), averages them over units to estimate each
    arm's marginal CDF, and inverts on a y grid.
    """
    _require_kind(data, BINARY, "marginalized PS regression")
    if n_taus < 20:
        raise ArgumentError("the marginalization needs at least 20 quantile levels")
    e = _binary_scores(ps, data.n)
    z = data.exposure
    design = np.column_stack([np.ones(data.n), z, z * e, e])
    pruned, kept = _prune_collinear(design, protected=2)
    taus = _marginal_tau_grid(n_taus)

    betas = np.empty((n_taus, pruned.shape[1]))
    for i, tk in enumerate(taus):
        betas[i] = fit_weighted_qr(pruned, data.y, None, tk).beta

    # Coefficients of the full design, zero for dropped columns.
    full = np.zeros((n_taus, 4))
    full[:, kept] = betas
    grid = default_y_grid(data.y) if y_grid is None else np.asarray(y_grid, dtype=float)

    point_by_arm = {}
    for arm in (0.0, 1.0):
        # predictions at (unit i, level k): b0 + b1*arm + b2*arm*e_i + b3*e_i
        pred = (full[:, 0][None, :]
                + arm * full[:, 1][None, :]
                + np.outer(e, arm * full[:, 2] + full[:, 3]))
        pred = np.sort(pred, axis=1)  # monotone rearrangement across levels
        pooled = np.sort(pred.ravel())
        cdf = np.searchsorted(pooled, grid, side="right") / pooled.size
        idx = int(np.searchsorted(cdf, tau, side="left"))
        if idx >= grid.size:
            raise InversionError(
                f"marginal CDF reaches only {cdf[-1]:.4f} < tau={tau}; widen the y grid"
            )
        point_by_arm[arm] = float(grid[idx])

    return QteEstimate(tau=tau, estimand="population_qte", method="psreg_marginalized",
                       point=point_by_arm[1.0] - point_by_arm[0.0],
                       arm_quantiles=(point_by_arm[0.0], point_by_arm[1.0]))


def _relabel_to_baseline(z: np.ndarray, scores: np.ndarray, baseline: int):
    if baseline == 1:
        return z, scores
    z2 = z.copy()
    z2[z == float(baseline)] = 1.0
    z2[z == 1.0] = float(baseline)
    order = list(range(scores.shape[1]))
    order[0], order[baseline - 1] = order[baseline - 1], order[0]
    return z2, scores[:, order]


def pairwise_qte(data: Dataset, ps, tau: float, scheme: str = "psreg",
                 baseline: int = 1) -> list[QteEstimate]:
    """Pairwise exposure effects of each level against the baseline.

    ``scheme`` is one of ``psreg`` (unit-weight regression on level
    indicators and generalized scores), ``ipw``, or ``ow`` (weighted
    regressions on level indicators alone).
    """
    _require_kind(data, CATEGORICAL, "pairwise effects")
    scores = _score_matrix(ps, data.n)
    J = scores.shape[1]
    if not 1 <= baseline <= J:
        raise ArgumentError(f"baseline must be one of 1..{J}")
    z, scores = _relabel_to_baseline(data.exposure, scores, baseline)

    dummies = np.column_stack([(z == float(j)).astype(float) for j in range(2, J + 1)])
    if scheme == "psreg":
        # level-1 score excluded: the J columns sum to one
        design = np.column_stack([np.ones(data.n), dummies, scores[:, 1:]])
        pruned, kept = _prune_collinear(design, protected=J)
        fit = fit_weighted_qr(pruned, data.y, None, tau)
        points = fit.beta[1:J]
        method = "psreg_homogeneous"
    elif scheme in ("ipw", "ow"):
        wscheme = GENERALIZED_IPW if scheme == "ipw" else GENERALIZED_OW
        wv = make_weights_categorical(scores, z, wscheme)
        design = np.column_stack([np.ones(data.n), dummies])
        fit = fit_weighted_qr(design, data.y, wv.w, tau)
        points = fit.beta[1:J]
        method = f"{scheme}_qr"
    else:
        raise ArgumentError(f"unknown scheme {scheme!r}")

    out = []
    for j, point in zip(range(2, J + 1), points):
        level = 1 if j == baseline else j  # undo the relabeling for reporting
        estimand = f"pairwise_qte({level} vs {baseline})"
        if scheme == "ow":
            estimand = f"pairwise_wqte(overlap, {level} vs {baseline})"
        out.append(QteEstimate(tau=tau, estimand=estimand, method=method,
                               point=float(point),
                               diagnostics={"converged": fit.converged}))
    return out


def continuous_qte(data: Dataset, ps: PropensityModel, tau: float,
                   scheme: str = "psreg") -> QteEstimate:
    """Per-unit-dose quantile effect with bin-based confounding adjustment.

    The outcome model keeps the exposure continuous, F^{-1}(tau | z) =
    b0 + b1 z; the generalized PS of the received bin drives the weights
    (``ipw``/``ow``) or enters as covariates (``psreg``).
    """
    _require_kind(data, CONTINUOUS, "the continuous-exposure estimator")
    if not isinstance(ps, PropensityModel) or ps.cut_points is None:
        raise ArgumentError("continuous_qte needs a binned propensity model")
    scores = ps.scores
    labels = bin_labels_for(ps, data.exposure)
    z = data.exposure
    if scheme == "psreg":
        design = np.column_stack([np.ones(data.n), z, scores[:, 1:]])
        pruned, kept = _prune_collinear(design, protected=2)
        fit = fit_weighted_qr(pruned, data.y, None, tau)
        method = "psreg_homogeneous"
    elif scheme in ("ipw", "ow"):
        wscheme = GENERALIZED_IPW if scheme == "ipw" else GENERALIZED_OW
        wv = make_weights_categorical(scores, labels, wscheme)
        design = np.column_stack([np.ones(data.n), z])
        fit = fit_weighted_qr(design, data.y, wv.w, tau)
        method = f"{scheme}_qr"
    else:
        raise ArgumentError(f"unknown scheme {scheme!r}")
    estimand = "population_qte_per_dose" if scheme != "ow" else "wqte_per_dose(overlap)"
    return QteEstimate(tau=tau, estimand=estimand, method=method,
                       point=float(fit.beta[1]),
                       diagnostics={"converged": fit.converged})


def naive_qr(data: Dataset, tau: float):
    """Exposure-only quantile regression; the confounding-blind benchmark.

    Returns one estimate for binary/continuous exposures and one per
    non-baseline level for categorical ones.
    """
    if data.kind.tag == CATEGORICAL:
        J = data.kind.n_levels
        dummies = np.column_stack([(data.exposure == float(j)).astype(float)
                                   for j in range(2, J + 1)])
        design = np.column_stack([np.ones(data.n), dummies])
        fit = fit_weighted_qr(design, data.y, None, tau)
        return [QteEstimate(tau=tau, estimand=f"pairwise_qte({j} vs 1)", method="naive",
                            point=float(fit.beta[j - 1]))
                for j in range(2, J + 1)]
    design = np.column_stack([np.ones(data.n), data.exposure])
    fit = fit_weighted_qr(design, data.y, None, tau)
    return QteEstimate(tau=tau, estimand="population_qte", method="naive",
                       point=float(fit.beta[1]))


def true_covariate_qr(data: Dataset, tau: float):
    """Quantile regression on the real confounders (best-case benchmark).

    Valid as an effect estimator only for homogeneous outcome models; the
    benchmark harness restricts it to the no-interaction presets.
    """
    if data.kind.tag == CATEGORICAL:
        J = data.kind.n_levels
        dummies = np.column_stack([(data.exposure == float(j)).astype(float)
                                   for j in range(2, J + 1)])
        design = np.column_stack([np.ones(data.n), dummies, data.covariates])
        fit = fit_weighted_qr(design, data.y, None, tau)
        return [QteEstimate(tau=tau, estimand=f"pairwise_qte({j} vs 1)",
                            method="true_model", point=float(fit.beta[j - 1]))
                for j in range(2, J + 1)]
    design = np.column_stack([np.ones(data.n), data.exposure, data.covariates])
    fit = fit_weighted_qr(design, data.y, None, tau)
    return QteEstimate(tau=tau, estimand="population_qte", method="true_model",
                       point=float(fit.beta[1]))
