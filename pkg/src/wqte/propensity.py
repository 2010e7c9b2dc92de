"""Propensity-score models for binary, categorical, and binned-continuous exposures.

All fitted models carry an ``(n, J)`` matrix of generalized propensity
scores e_j(x_i) (J = 2 for a binary exposure), clipped away from 0 and 1.
Model parameters round-trip through JSON so a fitted model can be recorded
alongside results and re-applied to new covariates.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, replace

import numpy as np
from scipy.stats import norm

from .data import BINARY, CATEGORICAL, CONTINUOUS, ExposureKind
from .errors import (
    ArgumentError,
    BinningError,
    DegenerateExposureError,
    DegenerateVarianceError,
    SeparationError,
)

DEFAULT_CLIP = (0.001, 0.999)
DEFAULT_BINS = 10

_GRAD_TOL = 1e-8
_SEPARATION_NORM = 1e3
_MAX_NEWTON = 100


@dataclass(frozen=True)
class PropensityModel:
    """A fitted exposure model plus per-unit generalized propensity scores.

    ``coefficients`` holds a (p+1)-vector (logit) for a binary exposure, a
    (J-1, p+1) matrix (multinomial logit, level 1 baseline) for a
    categorical one, and the (p+1)-vector of the linear mean model for a
    binned continuous one (with ``sigma`` and ``cut_points`` alongside).
    """

    kind: ExposureKind
    coefficients: np.ndarray
    scores: np.ndarray          # clipped, rows sum to 1
    clip_bounds: tuple[float, float]
    raw_scores: np.ndarray      # as produced by the model, before clipping
    sigma: float | None = None
    cut_points: np.ndarray | None = None
    n_clipped: int = 0

    @property
    def n_levels(self) -> int:
        return self.scores.shape[1]

    def binary_scores(self) -> np.ndarray:
        """e(x) = Pr{Z=1 | x} for a binary-exposure model."""
        if self.kind.tag != BINARY:
            raise ArgumentError("binary scores requested from a non-binary model")
        return self.scores[:, 1]

    def predict_scores(self, X) -> np.ndarray:
        """Generalized propensity scores on new covariates (clipped)."""
        X = _as_matrix(X)
        A = np.column_stack([np.ones(X.shape[0]), X])
        if self.kind.tag == BINARY:
            e = _sigmoid(A @ self.coefficients)
            raw = np.column_stack([1.0 - e, e])
        elif self.kind.tag == CATEGORICAL and self.sigma is None:
            raw = _softmax_scores(A, self.coefficients)
        else:
            raw = _normal_bin_scores(A @ self.coefficients, self.sigma, self.cut_points)
        return _clip_matrix(raw, self.clip_bounds, self.kind.tag == BINARY)[0]

    def to_json(self) -> str:
        payload = {
            "kind": self.kind.tag,
            "n_levels": self.kind.n_levels,
            "coefficients": np.asarray(self.coefficients).tolist(),
            "clip_bounds": list(self.clip_bounds),
            "sigma": self.sigma,
            "cut_points": None if self.cut_points is None else self.cut_points.tolist(),
        }
        return json.dumps(payload, sort_keys=True)

    @classmethod
    def from_json(cls, text: str, X) -> "PropensityModel":
        """Rebuild a model from its JSON parameters, scoring covariates ``X``."""
        payload = json.loads(text)
        kind = ExposureKind(payload["kind"], payload["n_levels"])
        stub = cls(
            kind=kind,
            coefficients=np.asarray(payload["coefficients"], dtype=float),
            scores=np.zeros((1, 2)),
            clip_bounds=tuple(payload["clip_bounds"]),
            raw_scores=np.zeros((1, 2)),
            sigma=payload["sigma"],
            cut_points=None if payload["cut_points"] is None
            else np.asarray(payload["cut_points"], dtype=float),
        )
        scores = stub.predict_scores(X)
        raw = scores.copy()
        return replace(stub, scores=scores, raw_scores=raw)


def _as_matrix(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        return X.reshape(-1, 1)
    if X.ndim != 2:
        raise ArgumentError("covariates must be a vector or a 2-d matrix")
    return X


def _sigmoid(u):
    out = np.empty_like(u)
    pos = u >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-u[pos]))
    eu = np.exp(u[~pos])
    out[~pos] = eu / (1.0 + eu)
    return out


def _softmax_scores(A, B):
    # B is (J-1, p+1); level 1 is the baseline with utility 0.
    util = A @ B.T
    util = np.column_stack([np.zeros(A.shape[0]), util])
    util -= util.max(axis=1, keepdims=True)
    eu = np.exp(util)
    return eu / eu.sum(axis=1, keepdims=True)


def _normal_bin_scores(mu, sigma, cut_points):
    # Outer sentinel cut points stand in for +/- infinity; make that exact
    # so standardising them cannot overflow.
    cuts = cut_points.astype(float).copy()
    big = np.finfo(float).max
    cuts[cuts <= -big] = -np.inf
    cuts[cuts >= big] = np.inf
    zs = (cuts[None, :] - mu[:, None]) / sigma
    cdf = norm.cdf(zs)
    return np.diff(cdf, axis=1)


def _clip_matrix(scores, bounds, binary):
    e1, e2 = bounds
    if not 0.0 < e1 <= e2 < 1.0:
        raise ArgumentError("clip bounds must satisfy 0 < eps1 <= eps2 < 1")
    if binary:
        e = np.clip(scores[:, 1], e1, e2)
        clipped = int(np.sum(e != scores[:, 1]))
        return np.column_stack([1.0 - e, e]), clipped
    out = np.clip(scores, e1, e2)
    clipped = int(np.sum(out != scores))
    out = out / out.sum(axis=1, keepdims=True)
    return out, clipped


def clip_scores(model: PropensityModel, eps1: float, eps2: float) -> PropensityModel:
    """Re-clip a model's raw scores to [eps1, eps2] (rows renormalised for J >= 3)."""
    scores, n_clipped = _clip_matrix(model.raw_scores, (eps1, eps2),
                                     model.kind.tag == BINARY)
    return replace(model, scores=scores, clip_bounds=(eps1, eps2), n_clipped=n_clipped)


def _newton(loglik_grad_hess, beta0, what):
    """Maximise a concave log-likelihood by Newton steps with halving."""
    beta = beta0.copy()
    ll, grad, hess = loglik_grad_hess(beta)
    for _ in range(_MAX_NEWTON):
        if np.linalg.norm(grad) <= _GRAD_TOL:
            return beta, True
        try:
            step = np.linalg.solve(-hess, grad)
        except np.linalg.LinAlgError:
            raise SeparationError(
                f"singular information matrix while fitting {what}; "
                "data may be separated, consider ridge > 0"
            ) from None
        scale = 1.0
        for _ in range(30):
            cand = beta + scale * step
            ll_new, grad_new, hess_new = loglik_grad_hess(cand)
            if ll_new >= ll - 1e-12 * max(1.0, abs(ll)):
                beta, ll, grad, hess = cand, ll_new, grad_new, hess_new
                break
            scale *= 0.5
        else:
            return beta, False
    return beta, np.linalg.norm(grad) <= _GRAD_TOL


def fit_logistic(X, z, ridge: float = 0.0,
                 clip_bounds: tuple[float, float] = DEFAULT_CLIP) -> PropensityModel:
    """Logistic propensity model e(x) = Pr{Z=1 | x} with intercept.

    Maximises the ridge-penalised Bernoulli log-likelihood (penalty
    ``ridge/2 * |beta[1:]|^2``, intercept unpenalised) by Newton-Raphson
    with step halving. With ``ridge=0`` a coefficient norm above 1e3 is
    treated as separation.
    """
    X = _as_matrix(X)
    z = np.asarray(z, dtype=float).ravel()
    if ridge < 0:
        raise ArgumentError("ridge must be nonnegative")
    n, p = X.shape
    if z.shape[0] != n:
        raise ArgumentError("X and z must have the same number of rows")
    if not np.all((z == 0.0) | (z == 1.0)):
        raise ArgumentError("binary exposure must contain only 0/1 values")
    if z.min() == z.max():
        raise DegenerateExposureError("both exposure levels must be present")
    if n <= p + 1:
        raise ArgumentError(f"need n > p+1 observations, got n={n}, p={p}")

    A = np.column_stack([np.ones(n), X])
    mask = np.ones(p + 1)
    mask[0] = 0.0  # intercept unpenalised

    def llgh(beta):
        u = A @ beta
        prob = _sigmoid(u)
        ll = float(np.sum(z * np.log(np.maximum(prob, 1e-300))
                          + (1 - z) * np.log(np.maximum(1 - prob, 1e-300))))
        ll -= 0.5 * ridge * float(np.sum(mask * beta**2))
        grad = A.T @ (z - prob) - ridge * mask * beta
        wdiag = prob * (1 - prob)
        hess = -(A.T @ (wdiag[:, None] * A)) - ridge * np.diag(mask)
        return ll, grad, hess

    beta, ok = _newton(llgh, np.zeros(p + 1), "logistic propensity model")
    if ridge == 0.0 and np.linalg.norm(beta, np.inf) > _SEPARATION_NORM:
        raise SeparationError(
            "coefficients diverged (|beta| > 1e3): separated data, consider ridge > 0"
        )
    if not ok:
        raise SeparationError("logistic fit did not converge; consider ridge > 0")
    e = _sigmoid(A @ beta)
    raw = np.column_stack([1.0 - e, e])
    scores, n_clipped = _clip_matrix(raw, clip_bounds, binary=True)
    return PropensityModel(kind=ExposureKind.binary(), coefficients=beta,
                           scores=scores, clip_bounds=clip_bounds,
                           raw_scores=raw, n_clipped=n_clipped)


def fit_multinomial(X, z, clip_bounds: tuple[float, float] = DEFAULT_CLIP,
                    cut_points=None) -> PropensityModel:
    """Multinomial-logit generalized propensity scores, level 1 baseline.

    ``z`` holds labels 1..J, each observed at least once. A two-level input
    reduces to the logistic model and is tagged binary.
    """
    X = _as_matrix(X)
    z = np.asarray(z, dtype=float).ravel()
    n, p = X.shape
    if z.shape[0] != n:
        raise ArgumentError("X and z must have the same number of rows")
    levels = np.unique(z)
    J = int(levels.max()) if levels.size else 0
    if not np.array_equal(levels, np.arange(1, J + 1)):
        raise DegenerateExposureError(
            f"labels must be contiguous 1..J with every level observed, got {levels}"
        )
    if J < 2:
        raise DegenerateExposureError("at least two exposure levels are required")
    dim = (J - 1) * (p + 1)
    if n <= dim:
        raise ArgumentError(f"need n > (J-1)(p+1) observations, got n={n}")

    A = np.column_stack([np.ones(n), X])
    Y = np.column_stack([(z == j).astype(float) for j in range(2, J + 1)])  # (n, J-1)

    def llgh(theta):
        B = theta.reshape(J - 1, p + 1)
        scores = _softmax_scores(A, B)
        ll = float(np.sum(np.log(np.maximum(scores[np.arange(n), (z - 1).astype(int)],
                                            1e-300))))
        P = scores[:, 1:]                     # (n, J-1)
        grad = (A.T @ (Y - P)).T.ravel()      # (J-1, p+1) flattened
        hess = np.empty((dim, dim))
        for j in range(J - 1):
            for m in range(J - 1):
                wjm = P[:, j] * ((j == m) - P[:, m])
                block = -(A.T @ (wjm[:, None] * A))
                hess[j * (p + 1):(j + 1) * (p + 1), m * (p + 1):(m + 1) * (p + 1)] = block
        return ll, grad, hess

    theta, ok = _newton(llgh, np.zeros(dim), "multinomial propensity model")
    if np.linalg.norm(theta, np.inf) > _SEPARATION_NORM:
        raise SeparationError(
            "coefficients diverged (|beta| > 1e3): separated data detected"
        )
    if not ok:
        raise SeparationError("multinomial fit did not converge; data may be separated")
    B = theta.reshape(J - 1, p + 1)
    raw = _softmax_scores(A, B)
    kind = ExposureKind.binary() if J == 2 else ExposureKind.categorical(J)
    scores, n_clipped = _clip_matrix(raw, clip_bounds, binary=(J == 2))
    return PropensityModel(kind=kind, coefficients=B, scores=scores,
                           clip_bounds=clip_bounds, raw_scores=raw,
                           cut_points=None if cut_points is None
                           else np.asarray(cut_points, dtype=float),
                           n_clipped=n_clipped)


def bin_continuous(z, m: int = DEFAULT_BINS):
    """Quantile-bin a continuous exposure into m groups.

    Returns ``(cut_points, labels)`` where ``cut_points`` has m+1 entries
    with the outer entries set to +/- the largest double (conceptually
    +/- infinity) and ``labels[i] = j`` iff ``q_{j-1} < z_i <= q_j``.
    Duplicate interior cut points (heavy ties) collapse adjacent bins with
    a warning.
    """
    z = np.asarray(z, dtype=float).ravel()
    if m < 2:
        raise ArgumentError("at least 2 bins are required")
    if np.unique(z).size < m:
        raise BinningError(f"need at least {m} distinct exposure values for {m} bins")
    qs = np.quantile(z, np.linspace(0.0, 1.0, m + 1))
    interior = np.unique(qs[1:-1])
    if interior.size < m - 1:
        warnings.warn(
            f"duplicate empirical quantiles: collapsing to {interior.size + 1} bins",
            stacklevel=2,
        )
    cut_points = np.concatenate([[-np.finfo(float).max], interior, [np.finfo(float).max]])
    labels = np.searchsorted(interior, z, side="left") + 1
    observed = np.unique(labels)
    if observed.size != cut_points.size - 1:
        raise BinningError("empty bin after quantile binning")
    return cut_points, labels.astype(float)


def gps_from_normal_model(X, z, cut_points,
                          clip_bounds: tuple[float, float] = DEFAULT_CLIP) -> PropensityModel:
    """Generalized PS for a binned continuous exposure from a normal linear model.

    Fits ``mu(x)`` by least squares with residual scale ``sigma`` (n-p-1
    denominator); bin j's score is ``Phi((q_j - mu)/sigma) - Phi((q_{j-1} -
    mu)/sigma)``, so each row sums to one by telescoping.
    """
    X = _as_matrix(X)
    z = np.asarray(z, dtype=float).ravel()
    cut_points = np.asarray(cut_points, dtype=float)
    n, p = X.shape
    if n <= p + 1:
        raise ArgumentError(f"need n > p+1 observations, got n={n}, p={p}")
    A = np.column_stack([np.ones(n), X])
    coef, *_ = np.linalg.lstsq(A, z, rcond=None)
    resid = z - A @ coef
    dof = n - p - 1
    sigma = float(np.sqrt(np.sum(resid**2) / dof))
    if sigma <= 0.0:
        raise DegenerateVarianceError("residual scale of the exposure model is zero")
    raw = _normal_bin_scores(A @ coef, sigma, cut_points)
    J = raw.shape[1]
    scores, n_clipped = _clip_matrix(raw, clip_bounds, binary=(J == 2))
    kind = ExposureKind.binary() if J == 2 else ExposureKind.categorical(J)
    return PropensityModel(kind=kind, coefficients=coef, scores=scores,
                           clip_bounds=clip_bounds, raw_scores=raw, sigma=sigma,
                           cut_points=cut_points, n_clipped=n_clipped)


def fit_multinomial_on_bins(X, labels, cut_points=None,
                            clip_bounds: tuple[float, float] = DEFAULT_CLIP) -> PropensityModel:
    """Multinomial generalized PS on the constructed exposure bins."""
    return fit_multinomial(X, labels, clip_bounds=clip_bounds, cut_points=cut_points)


def bin_labels_for(model: PropensityModel, z) -> np.ndarray:
    """Bin label of each continuous exposure value under the model's cut points."""
    if model.cut_points is None:
        raise ArgumentError("model has no bin cut points")
    interior = model.cut_points[1:-1]
    return np.searchsorted(interior, np.asarray(z, dtype=float).ravel(), side="left") + 1.0
